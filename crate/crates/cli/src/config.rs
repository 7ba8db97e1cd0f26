//! Flat TOML config file merged with command-line flags. Flags win.

use std::path::{Path, PathBuf};

use clap::Args;
use qds::hash_suite::{HashAlgorithmId, HashFunction};
use qds::protocol_sim::{KeyExpansion, ProtocolConfig};
use qds::signing::VerificationThreshold;
use serde::{Deserialize, Serialize};

use crate::CliError;

/// Threshold as written in a config file: `0.25`, `"25%"` or `"1/4"`.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum ThresholdValue {
    Number(f64),
    Text(String),
}

impl ThresholdValue {
    fn as_text(&self) -> String {
        match self {
            ThresholdValue::Number(x) => x.to_string(),
            ThresholdValue::Text(s) => s.clone(),
        }
    }
}

#[derive(Debug, Default, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub l: Option<usize>,
    pub n: Option<usize>,
    pub delta: Option<usize>,
    pub delta_msg: Option<u32>,
    pub message_hash: Option<String>,
    pub block_hash: Option<String>,
    pub key_xof: Option<String>,
    pub vb: Option<ThresholdValue>,
    pub vc: Option<ThresholdValue>,
    pub seed: Option<u64>,
    pub trials: Option<u64>,
    pub message: Option<String>,
    pub message_file: Option<PathBuf>,
    pub message_len: Option<usize>,
    pub keystore: Option<PathBuf>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        toml::from_str(&text)
            .map_err(|e| CliError::Usage(format!("invalid config {}: {e}", path.display())))
    }
}

/// Protocol parameters shared by `run`, `attack` and `keytool sign`.
#[derive(Debug, Clone, Default, Args)]
pub struct ProtocolArgs {
    /// Raw QKD key length l in bits
    #[arg(long)]
    pub l: Option<usize>,
    /// Blocks per key
    #[arg(long)]
    pub n: Option<usize>,
    /// Key length after SHAKE expansion; equal to l disables expansion
    #[arg(long)]
    pub delta: Option<usize>,
    /// Output length of a SHAKE message hash
    #[arg(long = "delta-msg")]
    pub delta_msg: Option<u32>,
    #[arg(long = "message-hash")]
    pub message_hash: Option<String>,
    #[arg(long = "block-hash")]
    pub block_hash: Option<String>,
    /// SHAKE function used for key expansion
    #[arg(long = "key-xof")]
    pub key_xof: Option<String>,
    /// Bob's verification threshold (0.25, 25% or 1/4)
    #[arg(long)]
    pub vb: Option<String>,
    /// Charlie's verification threshold
    #[arg(long)]
    pub vc: Option<String>,
}

/// Fully resolved parameters, echoed in every report.
#[derive(Debug, Clone, Serialize)]
pub struct RunConfig {
    pub l_bits: usize,
    pub delta_key_bits: usize,
    pub key_xof: Option<HashAlgorithmId>,
    pub n_blocks: usize,
    pub block_bits: usize,
    pub message_hash: HashAlgorithmId,
    pub delta_msg_bits: u32,
    pub block_hash: HashAlgorithmId,
    pub v_b: f64,
    pub v_c: f64,
    #[serde(skip)]
    pub protocol: ProtocolConfig,
}

fn parse_alg(s: &str) -> Result<HashAlgorithmId, CliError> {
    s.parse()
        .map_err(|e: qds::hash_suite::HashError| CliError::Usage(e.to_string()))
}

fn parse_threshold(s: &str, name: &str) -> Result<VerificationThreshold, CliError> {
    s.parse()
        .map_err(|e| CliError::Usage(format!("--{name}: {e}")))
}

/// Default block count for a key of `bits`: 32 blocks, fewer for short keys.
pub fn default_blocks(bits: usize) -> usize {
    (bits / 8).clamp(1, 32)
}

/// Default expanded length: keys shorter than 256 bits stay unexpanded,
/// longer ones are stretched fourfold.
pub fn default_delta(l: usize) -> usize {
    if l < 256 {
        l
    } else {
        4 * l
    }
}

impl ProtocolArgs {
    pub fn resolve(&self, file: &FileConfig) -> Result<RunConfig, CliError> {
        let l = self.l.or(file.l).unwrap_or(256);
        let delta = self
            .delta
            .or(file.delta)
            .unwrap_or_else(|| default_delta(l));
        let key_xof = parse_alg(
            self.key_xof
                .as_deref()
                .or(file.key_xof.as_deref())
                .unwrap_or("shake-256"),
        )?;
        let key_bits = delta;
        let n = self
            .n
            .or(file.n)
            .unwrap_or_else(|| default_blocks(key_bits));
        let message_alg = parse_alg(
            self.message_hash
                .as_deref()
                .or(file.message_hash.as_deref())
                .unwrap_or("shake-256"),
        )?;
        let block_alg = parse_alg(
            self.block_hash
                .as_deref()
                .or(file.block_hash.as_deref())
                .unwrap_or("sha2-256"),
        )?;
        let delta_msg = self.delta_msg.or(file.delta_msg);
        let message_hash = if message_alg.is_xof() {
            let d = match delta_msg {
                Some(d) => d,
                None => u32::try_from(2 * key_bits)
                    .map_err(|_| CliError::Usage("key too long".into()))?,
            };
            HashFunction::xof(message_alg, d)
        } else {
            if let (Some(d), Some(fixed)) = (delta_msg, message_alg.digest_bits()) {
                if d != fixed {
                    return Err(CliError::Usage(format!(
                        "{message_alg} has a fixed {fixed}-bit output, not {d}"
                    )));
                }
            }
            HashFunction::fixed(message_alg)
        }
        .map_err(|e| CliError::Usage(e.to_string()))?;
        let block_hash =
            HashFunction::fixed(block_alg).map_err(|e| CliError::Usage(e.to_string()))?;
        let vb_text = self
            .vb
            .clone()
            .or_else(|| file.vb.as_ref().map(ThresholdValue::as_text));
        let vc_text = self
            .vc
            .clone()
            .or_else(|| file.vc.as_ref().map(ThresholdValue::as_text));
        let v_b = vb_text.map_or(Ok(VerificationThreshold::ZERO), |s| {
            parse_threshold(&s, "vb")
        })?;
        let v_c = vc_text.map_or(Ok(VerificationThreshold::ZERO), |s| {
            parse_threshold(&s, "vc")
        })?;
        let expansion = (delta != l).then_some(KeyExpansion {
            alg: key_xof,
            delta_bits: delta,
        });
        let protocol = ProtocolConfig::new(l, expansion, message_hash, block_hash, n, v_b, v_c)
            .map_err(|e| CliError::Usage(e.to_string()))?;
        Ok(RunConfig {
            l_bits: l,
            delta_key_bits: delta,
            key_xof: expansion.map(|x| x.alg),
            n_blocks: n,
            block_bits: protocol.suite().block_len_bits(),
            message_hash: message_alg,
            delta_msg_bits: message_hash.output_bits(),
            block_hash: block_alg,
            v_b: v_b.as_f64(),
            v_c: v_c.as_f64(),
            protocol,
        })
    }
}

/// Where the signed message comes from.
#[derive(Debug, Clone, Default, Args)]
pub struct MessageArgs {
    #[arg(long, conflicts_with_all = ["message_file", "message_len"])]
    pub message: Option<String>,
    #[arg(long = "message-file", conflicts_with = "message_len")]
    pub message_file: Option<PathBuf>,
    /// Length of a seeded random message
    #[arg(long = "message-len")]
    pub message_len: Option<usize>,
}

impl MessageArgs {
    pub fn resolve(&self, file: &FileConfig, seed: u64) -> Result<Vec<u8>, CliError> {
        if let Some(m) = &self.message {
            return Ok(m.as_bytes().to_vec());
        }
        if let Some(p) = &self.message_file {
            return read_message(p);
        }
        if let Some(len) = self.message_len {
            return Ok(qds::protocol_sim::seeded_message(seed, len));
        }
        if let Some(m) = &file.message {
            return Ok(m.as_bytes().to_vec());
        }
        if let Some(p) = &file.message_file {
            return read_message(p);
        }
        let len = file
            .message_len
            .unwrap_or(qds::adversary::TRIAL_MESSAGE_BYTES);
        Ok(qds::protocol_sim::seeded_message(seed, len))
    }
}

fn read_message(path: &Path) -> Result<Vec<u8>, CliError> {
    std::fs::read(path)
        .map_err(|e| CliError::Usage(format!("cannot read message {}: {e}", path.display())))
}
