use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Subcommand};
use qds::bits::BitString;
use qds::distribution::{
    partition, DistributionError, KeyId, KeyRecord, KeySource, KeyStore, LinkId, SimulatedQkd,
};
use qds::hash_suite::HashFunction;
use qds::protocol_sim::{encode_tuple, SignedTuple};
use qds::signing::{combine_keys, sign, HashSuiteConfig, KeyShare, SigningError};
use serde_json::json;

use crate::config::default_blocks;
use crate::{CliError, Context, Output};

#[derive(Debug, Args)]
pub struct KeytoolArgs {
    /// Key store file (JSON)
    #[arg(long, global = true)]
    pub keystore: Option<PathBuf>,
    #[command(subcommand)]
    pub action: Action,
}

#[derive(Debug, Subcommand)]
pub enum Action {
    /// Add seeded simulated QKD keys to the store
    Generate {
        #[arg(long, default_value = "alice-bob")]
        link: LinkId,
        #[arg(long)]
        l: Option<usize>,
        #[arg(long, default_value_t = 1)]
        count: usize,
    },
    /// Show every stored key
    List,
    /// Write one key record as JSON
    Export {
        #[arg(long = "key-id")]
        key_id: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Add key records (one object or an array) from a JSON file
    Import {
        #[arg(long)]
        file: PathBuf,
    },
    /// Sign a message with two stored keys and mark both consumed
    Sign {
        /// Key shared with Bob
        #[arg(long)]
        k1: String,
        /// Key shared with Charlie
        #[arg(long)]
        k2: String,
        #[arg(long)]
        message: String,
        #[arg(long)]
        n: Option<usize>,
        /// Write the encoded signed tuple here
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn store_error(e: DistributionError) -> CliError {
    match e {
        DistributionError::KeyConsumed(id) => {
            CliError::Rejected(format!("key {id} has already been used"))
        }
        other => CliError::Usage(other.to_string()),
    }
}

fn load(path: &Path) -> Result<KeyStore, CliError> {
    if path.exists() {
        KeyStore::load(path).map_err(store_error)
    } else {
        Ok(KeyStore::new())
    }
}

fn save(store: &KeyStore, path: &Path) -> Result<(), CliError> {
    store.save(path).map_err(store_error)
}

fn record_json(r: &KeyRecord) -> serde_json::Value {
    serde_json::to_value(r).expect("key records serialize")
}

pub fn cmd_keytool(args: &KeytoolArgs, ctx: &Context) -> Result<Output, CliError> {
    let path = args
        .keystore
        .clone()
        .or_else(|| ctx.file.keystore.clone())
        .ok_or_else(|| CliError::Usage("keytool needs --keystore".into()))?;
    let store = load(&path)?;
    match &args.action {
        Action::Generate { link, l, count } => {
            let l = l.or(ctx.file.l).unwrap_or(256);
            let mut qkd = SimulatedQkd::new(ctx.seed);
            let mut added = Vec::new();
            while added.len() < *count {
                let key = qkd.deliver(*link, l).map_err(store_error)?.first;
                if store.get(&key.key_id).is_ok() {
                    continue;
                }
                added.push(key.key_id.clone());
                store.insert(key).map_err(store_error)?;
            }
            save(&store, &path)?;
            let text = added.iter().map(|id| format!("generated {id}\n")).collect();
            Ok(Output::ok(
                json!({ "command": "keytool generate", "generated": added }),
                text,
            ))
        }
        Action::List => {
            let records = store.records();
            let mut text = String::new();
            for r in &records {
                let state = if r.consumed { "consumed" } else { "unused" };
                let _ = writeln!(
                    text,
                    "{:<36} {:<14} {:>6} bits  {state}",
                    r.key_id.0,
                    r.link.to_string(),
                    r.l_bits
                );
            }
            Ok(Output::ok(
                json!({ "command": "keytool list", "keys": records }),
                text,
            ))
        }
        Action::Export { key_id, out } => {
            let id = KeyId(key_id.clone());
            let record = store
                .records()
                .into_iter()
                .find(|r| r.key_id == id)
                .ok_or_else(|| CliError::Usage(format!("no key {id} in {}", path.display())))?;
            let body = serde_json::to_string_pretty(&record).expect("key records serialize");
            let text = match out {
                Some(p) => {
                    std::fs::write(p, &body).map_err(|e| {
                        CliError::Usage(format!("cannot write {}: {e}", p.display()))
                    })?;
                    format!("exported {id} to {}\n", p.display())
                }
                None => format!("{body}\n"),
            };
            Ok(Output::ok(record_json(&record), text))
        }
        Action::Import { file } => {
            let body = std::fs::read_to_string(file)
                .map_err(|e| CliError::Usage(format!("cannot read {}: {e}", file.display())))?;
            let value: serde_json::Value = serde_json::from_str(&body)
                .map_err(|e| CliError::Usage(format!("{}: {e}", file.display())))?;
            let incoming: Vec<KeyRecord> = match value {
                serde_json::Value::Array(_) => serde_json::from_value(value),
                other => serde_json::from_value(other).map(|r| vec![r]),
            }
            .map_err(|e| CliError::Usage(format!("{}: {e}", file.display())))?;
            let ids: Vec<KeyId> = incoming.iter().map(|r| r.key_id.clone()).collect();
            let mut records = store.records();
            records.extend(incoming);
            let merged = KeyStore::from_records(records).map_err(store_error)?;
            save(&merged, &path)?;
            let text = ids.iter().map(|id| format!("imported {id}\n")).collect();
            Ok(Output::ok(
                json!({ "command": "keytool import", "imported": ids }),
                text,
            ))
        }
        Action::Sign {
            k1,
            k2,
            message,
            n,
            out,
        } => {
            let first = store.get(&KeyId(k1.clone())).map_err(store_error)?;
            let second = store.get(&KeyId(k2.clone())).map_err(store_error)?;
            let l = first.length_bits();
            let n = n.or(ctx.file.n).unwrap_or_else(|| default_blocks(l));
            let delta = u32::try_from(2 * l).map_err(|_| CliError::Usage("key too long".into()))?;
            let message_hash = HashFunction::xof(qds::hash_suite::HashAlgorithmId::Shake256, delta)
                .map_err(|e| CliError::Usage(e.to_string()))?;
            let block_hash = HashFunction::fixed(qds::hash_suite::HashAlgorithmId::Sha2_256)
                .expect("fixed-length hash");
            let suite = HashSuiteConfig::new(message_hash, block_hash, n, l)
                .map_err(|e| CliError::Usage(e.to_string()))?;
            let p1 = partition(&first, n).map_err(store_error)?;
            let p2 = partition(&second, n).map_err(store_error)?;
            let key = combine_keys(&KeyShare::full(&p1), &KeyShare::full(&p2))
                .map_err(|e| CliError::Usage(e.to_string()))?;
            let bundle = sign(message.as_bytes(), &key, &suite, &store).map_err(|e| match e {
                SigningError::KeyConsumed(id) => {
                    CliError::Rejected(format!("key {id} has already been used"))
                }
                other => CliError::Usage(other.to_string()),
            })?;
            save(&store, &path)?;
            let tuple = SignedTuple::new(message.as_bytes().to_vec(), bundle)
                .expect("full key gives a full bundle");
            let encoded = encode_tuple(&tuple);
            let hex = BitString::from_bytes(encoded.clone()).to_hex();
            if let Some(p) = out {
                std::fs::write(p, &encoded)
                    .map_err(|e| CliError::Usage(format!("cannot write {}: {e}", p.display())))?;
            }
            let json = json!({
                "command": "keytool sign",
                "keys": [k1, k2],
                "signature_bits": suite.signature_bits(),
                "tuple_hex": hex,
            });
            let text = format!(
                "signed {} bytes with {k1} and {k2}: {} signature bits\n",
                message.len(),
                suite.signature_bits()
            );
            Ok(Output::ok(json, text))
        }
    }
}
