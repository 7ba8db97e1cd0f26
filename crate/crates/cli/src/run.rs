use std::fmt::Write as _;
use std::path::PathBuf;

use clap::{Args, ValueEnum};
use qds::adversary::{dos_scenario, DosPlan, DosVector};
use qds::distribution::SimulatedQkd;
use qds::protocol_sim::{Honest, PartyOutcome, Session, Transcript, TransportKind};
use qds::role::Role;
use qds::signing::VerificationReport;
use serde_json::json;

use crate::config::{MessageArgs, ProtocolArgs, RunConfig};
use crate::{CliError, Context, Output};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum VerifierArg {
    Bob,
    Charlie,
}

impl VerifierArg {
    pub fn role(self) -> Role {
        match self {
            VerifierArg::Bob => Role::Verifier1,
            VerifierArg::Charlie => Role::Verifier2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TransportArg {
    InMemory,
    Framed,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[command(flatten)]
    pub protocol: ProtocolArgs,
    #[command(flatten)]
    pub message: MessageArgs,
    /// Corrupt this many blocks of a verifier's stored key before messaging
    #[arg(long = "inject-corruption", num_args = 0..=1, default_missing_value = "1")]
    pub inject_corruption: Option<usize>,
    /// Verifier whose key is corrupted
    #[arg(long = "corrupt-at", value_enum, default_value_t = VerifierArg::Bob)]
    pub corrupt_at: VerifierArg,
    #[arg(long, value_enum, default_value_t = TransportArg::InMemory)]
    pub transport: TransportArg,
    /// Write the event transcript as JSON
    #[arg(long)]
    pub transcript: Option<PathBuf>,
}

struct Verdicts {
    bob: PartyOutcome,
    charlie: PartyOutcome,
    bob_report: Option<VerificationReport>,
    charlie_report: Option<VerificationReport>,
    transcript: Transcript,
}

fn execute(
    args: &RunArgs,
    rc: &RunConfig,
    seed: u64,
    message: &[u8],
) -> Result<Verdicts, CliError> {
    let protocol_err = |e: &dyn std::fmt::Display| CliError::Usage(e.to_string());
    if let Some(blocks) = args.inject_corruption {
        let plan = DosPlan {
            corrupter: args.corrupt_at.role(),
            vector: DosVector::OwnKey,
            blocks,
        };
        let o = dos_scenario(plan, &rc.protocol, seed, message).map_err(|e| protocol_err(&e))?;
        return Ok(Verdicts {
            bob: o.bob,
            charlie: o.charlie,
            bob_report: o.bob_report,
            charlie_report: o.charlie_report,
            transcript: o.transcript,
        });
    }
    let transport = match args.transport {
        TransportArg::InMemory => TransportKind::InMemory,
        TransportArg::Framed => TransportKind::Framed,
    };
    let session = Session::distribute_with(
        &rc.protocol,
        seed,
        &mut SimulatedQkd::new(seed),
        transport,
        &mut Honest,
    )
    .map_err(|e| protocol_err(&e))?;
    let o = session
        .run_messaging(message, &mut Honest)
        .map_err(|e| protocol_err(&e))?;
    Ok(Verdicts {
        bob: o.bob,
        charlie: o.charlie,
        bob_report: o.bob_report,
        charlie_report: o.charlie_report,
        transcript: o.transcript,
    })
}

pub(crate) fn describe_config(rc: &RunConfig) -> String {
    let expansion = match rc.key_xof {
        Some(alg) => format!(" -> {} bits via {alg}", rc.delta_key_bits),
        None => String::new(),
    };
    format!(
        "key l={}{expansion}, n={} blocks of {} bits, message hash {}/{} bits, block hash {}, V_B={}, V_C={}",
        rc.l_bits, rc.n_blocks, rc.block_bits, rc.message_hash, rc.delta_msg_bits, rc.block_hash, rc.v_b, rc.v_c
    )
}

fn verdict_line(name: &str, outcome: PartyOutcome, report: Option<&VerificationReport>) -> String {
    let outcome = outcome.to_string();
    match report {
        Some(r) => format!(
            "{name:<8} {outcome:<9} matches={} mismatches={} unknown={} allowed={}\n",
            r.matches, r.mismatches, r.unknowns, r.allowed_mismatches
        ),
        None => format!("{name:<8} {outcome}\n"),
    }
}

pub fn cmd_run(args: &RunArgs, ctx: &Context) -> Result<Output, CliError> {
    let rc = args.protocol.resolve(&ctx.file)?;
    let message = args.message.resolve(&ctx.file, ctx.seed)?;
    let v = execute(args, &rc, ctx.seed, &message)?;
    if let Some(path) = &args.transcript {
        std::fs::write(path, v.transcript.to_json()).map_err(|e| {
            CliError::Usage(format!("cannot write transcript {}: {e}", path.display()))
        })?;
    }
    let accepted = v.bob == PartyOutcome::Accepted && v.charlie == PartyOutcome::Accepted;
    let signature_bits = rc.protocol.suite().signature_bits();
    let json = json!({
        "command": "run",
        "seed": ctx.seed,
        "config": rc,
        "message_bytes": message.len(),
        "signature_bits": signature_bits,
        "injected_corruption": args.inject_corruption.map(|blocks| json!({
            "verifier": args.corrupt_at.role(),
            "blocks": blocks,
        })),
        "bob": { "outcome": v.bob, "report": v.bob_report },
        "charlie": { "outcome": v.charlie, "report": v.charlie_report },
        "accepted": accepted,
    });
    let mut text = String::new();
    let _ = writeln!(text, "{}", describe_config(&rc));
    let _ = writeln!(
        text,
        "seed {}, message {} bytes, signature {} bits",
        ctx.seed,
        message.len(),
        signature_bits
    );
    text.push_str(&verdict_line("Bob", v.bob, v.bob_report.as_ref()));
    text.push_str(&verdict_line(
        "Charlie",
        v.charlie,
        v.charlie_report.as_ref(),
    ));
    Ok(Output {
        json,
        text,
        code: if accepted { 0 } else { 1 },
    })
}
