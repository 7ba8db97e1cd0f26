use std::fmt::Write as _;

use clap::{Args, ValueEnum};
use qds::adversary::{
    monte_carlo, DosPlan, DosVector, MessageTamper, MonteCarloReport, Placement, RepudiationPlan,
    Scenario,
};
use qds::analysis::{p_guess, p_rep_closed_form, ProbabilityValue};
use serde::Serialize;
use serde_json::json;

use crate::config::{ProtocolArgs, RunConfig};
use crate::run::{describe_config, VerifierArg};
use crate::{CliError, Context, Output};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum AttackName {
    Integrity,
    /// Guess the unknown half of k_2
    #[value(alias = "forgery-guess", alias = "forgery_guess")]
    Forgery,
    /// Replay Alice's signature on another message
    #[value(alias = "forgery_reuse")]
    ForgeryReuse,
    Repudiation,
    Dos,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TamperArg {
    Random,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PlacementArg {
    Random,
    BobUnknown,
    BobKnown,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum VectorArg {
    OwnKey,
    PoisonedExchange,
}

#[derive(Debug, Args)]
pub struct AttackArgs {
    #[arg(value_enum)]
    pub kind: AttackName,
    #[command(flatten)]
    pub protocol: ProtocolArgs,
    #[arg(long)]
    pub trials: Option<u64>,
    /// Corrupted k_2 blocks (repudiation)
    #[arg(long, default_value_t = 1)]
    pub e: usize,
    #[arg(long, value_enum, default_value_t = PlacementArg::Random)]
    pub placement: PlacementArg,
    /// Fixed corrupted labels (repudiation); overrides --e and --placement
    #[arg(long, value_delimiter = ',')]
    pub labels: Option<Vec<u32>>,
    #[arg(long, value_enum, default_value_t = TamperArg::Random)]
    pub tamper: TamperArg,
    /// Flip these message bits instead of random tampering (integrity)
    #[arg(long = "flip-bits", value_delimiter = ',')]
    pub flip_bits: Option<Vec<usize>>,
    /// Dishonest verifier (dos)
    #[arg(long, value_enum, default_value_t = VerifierArg::Bob)]
    pub corrupter: VerifierArg,
    #[arg(long, value_enum, default_value_t = VectorArg::OwnKey)]
    pub vector: VectorArg,
    /// Corrupted blocks (dos)
    #[arg(long, default_value_t = 1)]
    pub blocks: usize,
    /// Expected outcome: `always`, `never`, or a success probability
    /// checked against a 3-sigma band. A mismatch exits with 1.
    #[arg(long)]
    pub expect: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "snake_case", tag = "mode", content = "rate")]
enum Expectation {
    Always,
    Never,
    Rate(f64),
}

impl Expectation {
    fn parse(s: &str) -> Result<Self, CliError> {
        match s {
            "always" => Ok(Expectation::Always),
            "never" => Ok(Expectation::Never),
            _ => match s.parse::<f64>() {
                Ok(p) if (0.0..=1.0).contains(&p) => Ok(Expectation::Rate(p)),
                _ => Err(CliError::Usage(format!(
                    "--expect must be always, never or a probability, not {s:?}"
                ))),
            },
        }
    }

    fn met(self, report: &MonteCarloReport) -> bool {
        match self {
            Expectation::Always => report.successes == report.trials,
            Expectation::Never => report.successes == 0,
            Expectation::Rate(p) => report.within_sigmas(p, 3.0),
        }
    }
}

fn scenario(args: &AttackArgs) -> Scenario {
    match args.kind {
        AttackName::Integrity => {
            let tamper = match (&args.flip_bits, args.tamper) {
                (Some(bits), _) => MessageTamper::FlipBits(bits.clone()),
                (None, TamperArg::Random) => MessageTamper::Random,
                (None, TamperArg::None) => MessageTamper::None,
            };
            Scenario::Integrity { tamper }
        }
        AttackName::Forgery => Scenario::ForgeryGuess,
        AttackName::ForgeryReuse => Scenario::ForgeryReuse,
        AttackName::Repudiation => {
            let plan = match &args.labels {
                Some(labels) => RepudiationPlan {
                    error_blocks: labels.len(),
                    placement: Placement::Labels(labels.clone()),
                },
                None => RepudiationPlan {
                    error_blocks: args.e,
                    placement: match args.placement {
                        PlacementArg::Random => Placement::Random,
                        PlacementArg::BobUnknown => Placement::BobUnknown,
                        PlacementArg::BobKnown => Placement::BobKnown,
                    },
                },
            };
            Scenario::Repudiation { plan }
        }
        AttackName::Dos => Scenario::Dos {
            plan: DosPlan {
                corrupter: args.corrupter.role(),
                vector: match args.vector {
                    VectorArg::OwnKey => DosVector::OwnKey,
                    VectorArg::PoisonedExchange => DosVector::PoisonedExchange,
                },
                blocks: args.blocks,
            },
        },
    }
}

fn certain(success: bool) -> ProbabilityValue {
    if success {
        ProbabilityValue::certain()
    } else {
        ProbabilityValue::impossible()
    }
}

/// Closed-form success probability, where one exists for zero thresholds.
fn analytic(scenario: &Scenario, rc: &RunConfig) -> Option<ProbabilityValue> {
    if rc.v_b != 0.0 || rc.v_c != 0.0 {
        return None;
    }
    let n = rc.n_blocks;
    match scenario {
        Scenario::Integrity { .. } | Scenario::ForgeryReuse => Some(certain(false)),
        Scenario::ForgeryGuess => p_guess(rc.delta_key_bits as u64).ok(),
        Scenario::Repudiation { plan } => match plan.placement {
            Placement::Random | Placement::Labels(_) => {
                p_rep_closed_form(n, plan.error_blocks).ok()
            }
            Placement::BobUnknown => Some(certain(plan.error_blocks <= n / 2)),
            Placement::BobKnown => Some(certain(false)),
        },
        Scenario::Dos { plan } => Some(certain(plan.blocks > 0)),
    }
}

pub fn cmd_attack(args: &AttackArgs, ctx: &Context) -> Result<Output, CliError> {
    let rc = args.protocol.resolve(&ctx.file)?;
    let expect = args.expect.as_deref().map(Expectation::parse).transpose()?;
    let trials = args.trials.or(ctx.file.trials).unwrap_or(1000);
    let scenario = scenario(args);
    let report = monte_carlo(&scenario, &rc.protocol, trials, ctx.seed)
        .map_err(|e| CliError::Usage(e.to_string()))?;
    let analytic = analytic(&scenario, &rc);
    let within = analytic
        .as_ref()
        .map(|p| report.within_sigmas(p.value, 3.0));
    let met = expect.map(|e| e.met(&report));

    let mut json = serde_json::to_value(&report).expect("reports serialize");
    let extra = json!({
        "command": "attack",
        "config": rc,
        "analytic": analytic,
        "within_3_sigma": within,
        "expect": expect,
        "expectation_met": met,
    });
    if let (Some(obj), serde_json::Value::Object(more)) = (json.as_object_mut(), extra) {
        obj.extend(more);
    }

    let mut text = String::new();
    let _ = writeln!(
        text,
        "attack {} ({} trials, seed {})",
        report.kind, report.trials, report.seed
    );
    let _ = writeln!(text, "{}", describe_config(&rc));
    let _ = writeln!(
        text,
        "successes {} / {}: rate {:.6}, 95% CI [{:.6}, {:.6}]",
        report.successes, report.trials, report.rate, report.ci_low, report.ci_high
    );
    if let (Some(p), Some(w)) = (&analytic, within) {
        let _ = writeln!(
            text,
            "analytic {p}, {} 3 sigma",
            if w { "within" } else { "outside" }
        );
    }
    if let Some(m) = met {
        let _ = writeln!(text, "expectation {}", if m { "met" } else { "NOT met" });
    }
    let code = if met == Some(false) { 1 } else { 0 };
    Ok(Output { json, text, code })
}
