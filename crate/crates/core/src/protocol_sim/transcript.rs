//! Ordered event log of a protocol run, exportable as JSON.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::distribution::{KeyId, LinkId};
use crate::role::Role;
use crate::signing::VerificationReport;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Distribution,
    Messaging,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PayloadKind {
    ExchangeBlocks,
    SignedTuple,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PartyOutcome {
    Accepted,
    Rejected,
    /// The party never verified because the run stopped earlier.
    Aborted,
}

impl fmt::Display for PartyOutcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PartyOutcome::Accepted => "accepted",
            PartyOutcome::Rejected => "rejected",
            PartyOutcome::Aborted => "aborted",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum Event {
    KeyDelivered {
        link: LinkId,
        key_id: KeyId,
        l_bits: usize,
    },
    KeyExpanded {
        party: Role,
        from: KeyId,
        to: KeyId,
        delta_bits: usize,
    },
    Partitioned {
        party: Role,
        key_id: KeyId,
        n_blocks: usize,
        block_bits: usize,
    },
    PermutationDrawn {
        party: Role,
    },
    Sent {
        seq: u64,
        phase: Phase,
        from: Role,
        to: Role,
        kind: PayloadKind,
        bytes: usize,
    },
    Received {
        seq: u64,
        phase: Phase,
        from: Role,
        to: Role,
        kind: PayloadKind,
        bytes: usize,
    },
    Signed {
        party: Role,
        message_bytes: usize,
        signature_bits: usize,
    },
    Verified {
        party: Role,
        report: VerificationReport,
    },
    Verdict {
        party: Role,
        outcome: PartyOutcome,
    },
    Aborted {
        party: Role,
        reason: String,
    },
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Transcript {
    events: Vec<Event>,
}

impl Transcript {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, event: Event) {
        self.events.push(event);
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn verdicts(&self, role: Role) -> Vec<PartyOutcome> {
        self.events
            .iter()
            .filter_map(|e| match e {
                Event::Verdict { party, outcome } if *party == role => Some(*outcome),
                _ => None,
            })
            .collect()
    }

    pub fn verdict(&self, role: Role) -> Option<PartyOutcome> {
        self.verdicts(role).last().copied()
    }

    pub fn report(&self, role: Role) -> Option<&VerificationReport> {
        self.events.iter().rev().find_map(|e| match e {
            Event::Verified { party, report } if *party == role => Some(report),
            _ => None,
        })
    }

    /// Every `Sent` has exactly one `Received` with the same sequence number,
    /// endpoints and size.
    pub fn sends_are_matched(&self) -> bool {
        let sends: Vec<_> = self
            .events
            .iter()
            .filter_map(|e| match e {
                Event::Sent {
                    seq,
                    from,
                    to,
                    bytes,
                    ..
                } => Some((*seq, *from, *to, *bytes)),
                _ => None,
            })
            .collect();
        let receives: Vec<_> = self
            .events
            .iter()
            .filter_map(|e| match e {
                Event::Received {
                    seq,
                    from,
                    to,
                    bytes,
                    ..
                } => Some((*seq, *from, *to, *bytes)),
                _ => None,
            })
            .collect();
        sends.len() == receives.len()
            && sends
                .iter()
                .all(|s| receives.iter().filter(|r| *r == s).count() == 1)
    }

    /// Distribution-phase traffic with the signer as an endpoint. Always
    /// empty for runs produced by the simulator.
    pub fn signer_exchange_events(&self) -> Vec<&Event> {
        self.events
            .iter()
            .filter(|e| match e {
                Event::Sent {
                    phase, from, to, ..
                }
                | Event::Received {
                    phase, from, to, ..
                } => {
                    *phase == Phase::Distribution && (*from == Role::Signer || *to == Role::Signer)
                }
                _ => false,
            })
            .collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("transcript serializes")
    }

    pub fn from_json(json: &str) -> serde_json::Result<Self> {
        serde_json::from_str(json)
    }
}
