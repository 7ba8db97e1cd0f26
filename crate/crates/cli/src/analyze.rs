use clap::{Args, ValueEnum};
use qds::analysis::{
    birthday_approx, p_collision, p_guess, p_rep_closed_form, p_rep_threshold,
    second_preimage_strength, work_factor, CollisionParams, ProbabilityValue, SecondPreimageParams,
};
use qds::hash_suite::{strength_lookup, HashAlgorithmId, HashFunction};
use qds::signing::VerificationThreshold;
use serde_json::{json, Value};

use crate::{CliError, Context, Output};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Formula {
    /// Forger guesses the l/2 unknown key bits
    #[value(name = "p_guess", alias = "p-guess")]
    PGuess,
    /// Repudiation with zero thresholds
    #[value(name = "p_rep", alias = "p-rep")]
    PRep,
    /// Repudiation when Bob tolerates t_b mismatches
    #[value(name = "p_rep_threshold", alias = "p-rep-threshold")]
    PRepThreshold,
    /// Collision probability for 2^x inputs and 2^k digests
    #[value(name = "p_col", alias = "p-col")]
    PCol,
    /// Second-preimage strength in bits
    #[value(name = "2pr")]
    SecondPreimage,
    /// Collision, preimage and second-preimage strength of a hash function
    #[value(name = "strength")]
    Strength,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    #[arg(value_enum)]
    pub formula: Formula,
    #[arg(long)]
    pub l: Option<u64>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub e: Option<usize>,
    /// Mismatches Bob tolerates
    #[arg(long, conflicts_with = "vb")]
    pub tb: Option<usize>,
    /// Bob's threshold; t_b is derived from his 3n/2 known blocks
    #[arg(long)]
    pub vb: Option<String>,
    #[arg(long)]
    pub x: Option<u32>,
    #[arg(long)]
    pub k: Option<u32>,
    #[arg(long)]
    pub alg: Option<String>,
    /// Digest length, when no algorithm is named or for SHAKE
    #[arg(long)]
    pub d: Option<u32>,
    /// Output length of a SHAKE function
    #[arg(long)]
    pub delta: Option<u32>,
    /// Maximum input length D in bits
    #[arg(long = "input-bits")]
    pub input_bits: Option<u128>,
    /// Compression block length B in bits
    #[arg(long = "block-bits")]
    pub block_bits: Option<u128>,
}

fn need<T>(v: Option<T>, flag: &str, formula: &str) -> Result<T, CliError> {
    v.ok_or_else(|| CliError::Usage(format!("{formula} needs --{flag}")))
}

fn usage(e: impl std::fmt::Display) -> CliError {
    CliError::Usage(e.to_string())
}

fn probability(formula: &str, params: Value, p: ProbabilityValue) -> Output {
    let work = (!p.is_zero()).then(|| work_factor(p.bits_of_security().round().max(0.0) as u32));
    let json = json!({
        "command": "analyze",
        "formula": formula,
        "params": params,
        "value": p.value,
        "log2": p.log2.is_finite().then_some(p.log2),
        "exact": p.exact().map(|r| r.to_string()),
        "work_factor": work,
    });
    let args = params
        .as_object()
        .map(|m| {
            m.iter()
                .map(|(k, v)| format!("{k}={v}"))
                .collect::<Vec<_>>()
                .join(", ")
        })
        .unwrap_or_default();
    let mut text = format!("{formula}({args}) = {p}\n");
    if let Some(w) = work {
        text.push_str(&format!("work factor {w}\n"));
    }
    Output::ok(json, text)
}

fn parse_alg(s: &str) -> Result<HashAlgorithmId, CliError> {
    s.parse().map_err(usage)
}

fn hash_function(alg: HashAlgorithmId, delta: Option<u32>) -> Result<HashFunction, CliError> {
    if alg.is_xof() {
        HashFunction::xof(alg, need(delta, "delta", alg.name())?).map_err(usage)
    } else {
        HashFunction::fixed(alg).map_err(usage)
    }
}

fn second_preimage(args: &AnalyzeArgs) -> Result<Output, CliError> {
    let alg = args.alg.as_deref().map(parse_alg).transpose()?;
    let defaults = alg.and_then(SecondPreimageParams::max_input);
    let d = match alg {
        Some(a) if a.is_xof() => need(args.delta.or(args.d), "delta", a.name())?,
        Some(a) => a.digest_bits().expect("fixed-length algorithm"),
        None => need(args.d, "d", "2pr")?,
    };
    let input_bits = match args.input_bits.or(defaults.map(|p| p.input_bits)) {
        Some(v) => v,
        None if alg.is_some_and(|a| !a.is_sha2()) => u128::MAX,
        None => need(None, "input-bits", "2pr")?,
    };
    let block_bits = match args.block_bits.or(defaults.map(|p| p.block_bits)) {
        Some(v) => v,
        None => alg
            .map(|a| u128::from(a.input_block_bits()))
            .ok_or_else(|| usage("2pr needs --block-bits"))?,
    };
    let params = SecondPreimageParams::new(d, input_bits, block_bits).map_err(usage)?;
    let bits = second_preimage_strength(params, alg);
    let work = work_factor(bits.floor() as u32);
    let json = json!({
        "command": "analyze",
        "formula": "2pr",
        "params": { "alg": alg, "d": d, "input_bits": input_bits.to_string(), "block_bits": block_bits.to_string() },
        "value": bits,
        "log2": bits,
        "work_factor": work,
    });
    let name = alg.map_or_else(|| format!("d={d}"), |a| a.name().to_string());
    Ok(Output::ok(
        json,
        format!("2pr({name}) = {bits:.2} bits\nwork factor {work}\n"),
    ))
}

fn strength(args: &AnalyzeArgs) -> Result<Output, CliError> {
    let alg = parse_alg(&need(args.alg.clone(), "alg", "strength")?)?;
    let func = hash_function(alg, args.delta.or(args.d))?;
    let s = strength_lookup(&func);
    let overall = s.overall_bits();
    let bound = if s.preimage_is_lower_bound { ">= " } else { "" };
    let json = json!({
        "command": "analyze",
        "formula": "strength",
        "params": { "alg": alg, "output_bits": func.output_bits() },
        "collision_bits": s.collision_bits,
        "preimage_bits": s.preimage_bits,
        "preimage_is_lower_bound": s.preimage_is_lower_bound,
        "second_preimage_bits": s.second_preimage_bits,
        "value": overall,
        "log2": overall,
        "work_factor": work_factor(overall),
    });
    let text = format!(
        "{alg} ({} bits): collision {}, preimage {bound}{}, second preimage {}\nweakest {overall} bits, work factor {}\n",
        func.output_bits(),
        s.collision_bits,
        s.preimage_bits,
        s.second_preimage_bits,
        work_factor(overall)
    );
    Ok(Output::ok(json, text))
}

pub fn cmd_analyze(args: &AnalyzeArgs, ctx: &Context) -> Result<Output, CliError> {
    let n = args.n.or(ctx.file.n).unwrap_or(32);
    match args.formula {
        Formula::PGuess => {
            let l = args.l.or(ctx.file.l.map(|l| l as u64)).unwrap_or(256);
            Ok(probability(
                "p_guess",
                json!({ "l": l }),
                p_guess(l).map_err(usage)?,
            ))
        }
        Formula::PRep => {
            let e = need(args.e, "e", "p_rep")?;
            Ok(probability(
                "p_rep",
                json!({ "n": n, "e": e }),
                p_rep_closed_form(n, e).map_err(usage)?,
            ))
        }
        Formula::PRepThreshold => {
            let e = need(args.e, "e", "p_rep_threshold")?;
            let t_b = match (&args.tb, &args.vb) {
                (Some(t), _) => *t,
                (None, Some(v)) => {
                    let v: VerificationThreshold = v.parse().map_err(usage)?;
                    v.allowed_mismatches(3 * n / 2)
                }
                (None, None) => 0,
            };
            let p = p_rep_threshold(n, e, t_b).map_err(usage)?;
            Ok(probability(
                "p_rep_threshold",
                json!({ "n": n, "e": e, "t_b": t_b }),
                p,
            ))
        }
        Formula::PCol => {
            let x = need(args.x, "x", "p_col")?;
            let k = need(args.k, "k", "p_col")?;
            let params = CollisionParams::new(x, k);
            let p = p_collision(params).map_err(usage)?;
            let mut out = probability("p_col", json!({ "x": x, "k": k }), p);
            let b = birthday_approx(params);
            out.json["birthday_approx"] =
                json!({ "value": b.value, "log2": b.log2.is_finite().then_some(b.log2) });
            out.text.push_str(&format!("birthday approximation {b}\n"));
            Ok(out)
        }
        Formula::SecondPreimage => second_preimage(args),
        Formula::Strength => strength(args),
    }
}
