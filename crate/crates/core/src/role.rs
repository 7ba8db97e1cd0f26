use std::fmt;

use serde::{Deserialize, Serialize};

/// The three participants: one signer and two verifiers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    /// Alice.
    Signer,
    /// Bob; shares `k_1` with the signer.
    Verifier1,
    /// Charlie; shares `k_2` with the signer.
    Verifier2,
}

impl Role {
    pub fn name(self) -> &'static str {
        match self {
            Role::Signer => "alice",
            Role::Verifier1 => "bob",
            Role::Verifier2 => "charlie",
        }
    }

    pub fn is_verifier(self) -> bool {
        !matches!(self, Role::Signer)
    }

    /// The other verifier. Panics for the signer.
    pub fn peer_verifier(self) -> Role {
        match self {
            Role::Verifier1 => Role::Verifier2,
            Role::Verifier2 => Role::Verifier1,
            Role::Signer => panic!("the signer has no peer verifier"),
        }
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}
