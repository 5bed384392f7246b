//! The `ife` command line.
//!
//! Exit codes: 0 on success, 1 when an analysed property fails (a target set
//! that is not invariant, an inadmissible controller, a relation that is no
//! feedback refinement, a trajectory leaving `Q`), 2 on input errors.

use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use crate::codec::{
    check_admissible, from_spanning, simulate, time_varying_rate, transmission_rate, zero_error_capacity, Adversary,
    CoderController, Growth,
};
use crate::covers::{check_invariant_cover, EnumLimits};
use crate::detoracle::h_det_bounds;
use crate::entropy::{cover_entropy, invariance_entropy_ub, r_inv, EntropyLimits, EntropyReport, Hinv};
use crate::error::{Error, Result};
use crate::io::{load_model, read_json, relation_from_file, scalar_abstraction_model, scalar_cover_file, write_json, ControllerFile, CoverRecord, Model, RelationFile};
use crate::linear::{
    abstract_scalar, entropy_lower_bound, fmt_rational, parse_rational, static_rate_lower_bound, synth_scalar_static,
    verify_scalar_cover, LinearBoundInput, ScalarPlant,
};
use crate::rate::LogRate;
use crate::refine::{check_frr, check_q_compat};
use crate::system::is_controlled_invariant;

/// Environment variable naming the worker thread count.
pub const THREADS_ENV: &str = "IFE_THREADS";

#[derive(Parser, Debug)]
#[command(name = "ife", version, about = "Invariance entropy and data-rate analysis for finite control systems")]
struct Cli {
    /// Worker threads; also read from IFE_THREADS.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum Format {
    Text,
    Tsv,
    Json,
}

#[derive(Args, Debug)]
struct EntropyArgs {
    system: PathBuf,
    #[arg(long, default_value_t = 8, value_parser = clap::value_parser!(u32).range(1..=64))]
    tau_max: u32,
    /// Evaluate this cover instead of searching.
    #[arg(long)]
    cover: Option<PathBuf>,
    /// Largest cover (number of elements) tried by the search.
    #[arg(long, default_value_t = 4, value_parser = clap::value_parser!(u64).range(1..))]
    budget: u64,
    /// Write the cover achieving the bound.
    #[arg(long)]
    save_cover: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Text)]
    format: Format,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Validate a system file and test controlled invariance of Q.
    System {
        #[command(subcommand)]
        action: SystemAction,
    },
    /// Upper bound (exact when certified) on the invariance entropy.
    Entropy(EntropyArgs),
    /// Deterministic entropy through minimal spanning sets.
    Det {
        #[command(subcommand)]
        action: DetAction,
    },
    /// Rates of a coder-controller.
    Datarate {
        system: PathBuf,
        controller: PathBuf,
        #[arg(long, default_value_t = 12, value_parser = clap::value_parser!(u32).range(1..=64))]
        probe: u32,
        #[arg(long, value_enum, default_value_t = Format::Text)]
        format: Format,
    },
    /// Synthesize coder-controllers and interval covers
    Synth {
        #[command(subcommand)]
        action: SynthAction,
    },
    /// Closed-form bounds for linear plants
    Bound {
        #[command(subcommand)]
        action: BoundAction,
    },
    /// Feedback refinement relation checks
    Frr {
        #[command(subcommand)]
        action: FrrAction,
    },
    /// Closed-loop run against an adversary choosing successors.
    Simulate {
        system: PathBuf,
        controller: PathBuf,
        #[arg(long)]
        x0: String,
        #[arg(long, default_value_t = 20)]
        steps: usize,
        /// Seeded random adversary; the smallest successor without it.
        #[arg(long)]
        seed: Option<u64>,
    },
}

#[derive(Subcommand, Debug)]
enum SystemAction {
    Check { system: PathBuf },
}

#[derive(Subcommand, Debug)]
enum DetAction {
    Entropy {
        system: PathBuf,
        #[arg(long, default_value_t = 6, value_parser = clap::value_parser!(u32).range(1..=32))]
        tau_max: u32,
        #[arg(long, value_enum, default_value_t = Format::Text)]
        format: Format,
    },
}

#[derive(Subcommand, Debug)]
enum SynthAction {
    /// Coder-controller from an optimal spanning set.
    Codec {
        system: PathBuf,
        #[arg(long, default_value_t = 4, value_parser = clap::value_parser!(u32).range(1..=16))]
        tau_max: u32,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Static interval quantizer for a scalar plant.
    Scalar {
        /// Plant coefficient in x+ = a x + u + w
        #[arg(long, allow_hyphen_values = true)]
        a: String,
        /// Disturbance interval lo,hi
        #[arg(long, allow_hyphen_values = true)]
        w: String,
        /// Target interval lo,hi
        #[arg(long, allow_hyphen_values = true)]
        q: String,
        #[arg(long)]
        cover_out: Option<PathBuf>,
        #[arg(long)]
        abstraction_out: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Format::Text)]
        format: Format,
    },
}

#[derive(Subcommand, Debug)]
enum BoundAction {
    /// Entropy and static-rate lower bounds from |det A|, mu(Q), mu(W).
    Linear {
        #[arg(long)]
        n: u32,
        #[arg(long)]
        det: String,
        #[arg(long = "muQ")]
        mu_q: String,
        #[arg(long = "muW")]
        mu_w: String,
    },
}

#[derive(Subcommand, Debug)]
enum FrrAction {
    /// Check that the relation refines the first system by the second.
    Check { concrete: PathBuf, abstraction: PathBuf, relation: PathBuf },
}

struct Outcome {
    ok: bool,
}

const SUCCESS: Outcome = Outcome { ok: true };
const VIOLATION: Outcome = Outcome { ok: false };

/// Parses `argv` (program name first), runs the command and returns the exit code.
pub fn run<I, T>(argv: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let text = e.render().to_string();
            let _ = if code == 0 { out.write_all(text.as_bytes()) } else { err.write_all(text.as_bytes()) };
            return code;
        }
    };
    let threads = cli.threads.or_else(|| std::env::var(THREADS_ENV).ok().and_then(|v| v.parse().ok()));
    if let Some(n) = threads {
        // a second call in the same process keeps the first pool
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    match dispatch(cli.command, out) {
        Ok(Outcome { ok: true }) => 0,
        Ok(Outcome { ok: false }) => 1,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            2
        }
    }
}

fn io_err(e: std::io::Error) -> Error {
    Error::Domain(e.to_string())
}

fn dispatch(cmd: Command, out: &mut dyn Write) -> Result<Outcome> {
    match cmd {
        Command::System { action: SystemAction::Check { system } } => system_check(&load_model(&system)?, out),
        Command::Entropy(args) => entropy(args, out),
        Command::Det { action: DetAction::Entropy { system, tau_max, format } } => {
            det_entropy(&load_model(&system)?, tau_max as usize, format, out)
        }
        Command::Datarate { system, controller, probe, format } => {
            let m = load_model(&system)?;
            let h = m.controller_from_file(&read_json(&controller)?)?;
            datarate(&m, &h, probe as usize, format, out)
        }
        Command::Synth { action: SynthAction::Codec { system, tau_max, out: path } } => {
            synth_codec(&load_model(&system)?, tau_max as usize, path, out)
        }
        Command::Synth { action: SynthAction::Scalar { a, w, q, cover_out, abstraction_out, format } } => {
            let plant = ScalarPlant::new(parse_rational(&a)?, parse_pair(&w)?, parse_pair(&q)?)?;
            synth_scalar(&plant, cover_out, abstraction_out, format, out)
        }
        Command::Bound { action: BoundAction::Linear { n, det, mu_q, mu_w } } => {
            let inp = LinearBoundInput::new(n, parse_rational(&det)?, parse_rational(&mu_q)?, parse_rational(&mu_w)?)?;
            writeln!(out, "h_lb={} static_lb={}", entropy_lower_bound(&inp), static_rate_lower_bound(&inp)).map_err(io_err)?;
            Ok(SUCCESS)
        }
        Command::Frr { action: FrrAction::Check { concrete, abstraction, relation } } => {
            let m1 = load_model(&concrete)?;
            let m2 = load_model(&abstraction)?;
            let rel = relation_from_file(&read_json::<RelationFile>(&relation)?, &m1, &m2)?;
            let frr = check_frr(&m1.sys, &m2.sys, &rel);
            let compat = check_q_compat(&rel, &m1.q, &m2.q);
            match &frr {
                Ok(()) => writeln!(out, "frr=true"),
                Err(crate::refine::FrrViolation::Inclusion { x1, x2, u, image }) => writeln!(
                    out,
                    "frr=false violation=({},{},{}) image={:?}",
                    m1.states[*x1],
                    m2.states[*x2],
                    m2.inputs[*u],
                    image.iter().map(|y| m2.states[y].as_str()).collect::<Vec<_>>()
                ),
                Err(v) => writeln!(out, "frr=false violation={v:?}"),
            }
            .map_err(io_err)?;
            writeln!(out, "q_compat={compat}").map_err(io_err)?;
            Ok(if frr.is_ok() && compat { SUCCESS } else { VIOLATION })
        }
        Command::Simulate { system, controller, x0, steps, seed } => {
            let m = load_model(&system)?;
            let h = m.controller_from_file(&read_json(&controller)?)?;
            let x0 = m.states.iter().position(|s| *s == x0).ok_or(Error::UnknownName(x0))?;
            let adv = seed.map_or(Adversary::MinimalId, Adversary::Seeded);
            let trace = simulate(&m.sys, &h, x0, steps, &adv)?;
            writeln!(out, "t\tstate\tsymbol\tinput").map_err(io_err)?;
            let tr = &trace.trajectory;
            for t in 0..tr.inputs.len() {
                writeln!(out, "{t}\t{}\tz{}\t{}", m.states[tr.states[t]], trace.symbols[t], m.inputs[tr.inputs[t]]).map_err(io_err)?;
            }
            let last = *tr.states.last().expect("nonempty trajectory");
            let stayed = tr.states.iter().all(|&x| m.q.contains(x));
            writeln!(out, "final={} stayed_in_Q={stayed}", m.states[last]).map_err(io_err)?;
            Ok(if stayed { SUCCESS } else { VIOLATION })
        }
    }
}

fn parse_pair(s: &str) -> Result<(num::BigRational, num::BigRational)> {
    let (a, b) = s.split_once(',').ok_or_else(|| Error::Domain(format!("expected lo,hi: {s:?}")))?;
    Ok((parse_rational(a)?, parse_rational(b)?))
}

fn names(m: &Model, xs: &[usize]) -> Vec<String> {
    xs.iter().map(|&x| m.states[x].clone()).collect()
}

fn system_check(m: &Model, out: &mut dyn Write) -> Result<Outcome> {
    let ci = is_controlled_invariant(&m.sys, &m.q);
    writeln!(
        out,
        "states={} inputs={} deterministic={} controlled_invariant={}",
        m.sys.num_states(),
        m.sys.num_inputs(),
        m.sys.is_deterministic(),
        ci.invariant
    )
    .map_err(io_err)?;
    if !ci.invariant {
        writeln!(out, "stuck={:?}", names(m, &ci.stuck)).map_err(io_err)?;
    }
    Ok(if ci.invariant { SUCCESS } else { VIOLATION })
}

fn table_lines(report: &EntropyReport, out: &mut dyn Write) -> Result<()> {
    writeln!(out, "tau\tr_inv\trate").map_err(io_err)?;
    for e in &report.per_tau {
        writeln!(out, "{}\t{}\t{}", e.tau, e.r, e.rate.decimal()).map_err(io_err)?;
    }
    Ok(())
}

/// ` form=log2(P)/q` for irrational values.
fn form_suffix(r: &LogRate) -> String {
    match r.as_rational() {
        Some(_) => String::new(),
        None => format!(" form={}", r.exact_form()),
    }
}

fn rate_json(r: &LogRate) -> serde_json::Value {
    json!({ "exact": r.exact_form(), "decimal": r.decimal() })
}

fn entropy(args: EntropyArgs, out: &mut dyn Write) -> Result<Outcome> {
    let m = load_model(&args.system)?;
    let tau_max = args.tau_max as usize;
    let (value, exact, report, cover) = match &args.cover {
        Some(path) => {
            let cover = m.cover_from_records(&read_json::<Vec<CoverRecord>>(path)?)?;
            check_invariant_cover(&m.sys, &m.q, &cover).map_err(|v| Error::InvalidCover(format!("{v:?}")))?;
            let report = cover_entropy(&m.sys, &m.q, &cover, tau_max)?;
            let value = Hinv::Finite { ub: report.ub.clone(), lower: report.lower.clone() };
            (value, report.exact, Some(report), Some(cover))
        }
        None => {
            let limits = EntropyLimits {
                tau_max,
                enumeration: EnumLimits { max_elements: args.budget as usize, ..EnumLimits::default() },
                ..EntropyLimits::default()
            };
            let h = invariance_entropy_ub(&m.sys, &m.q, &limits)?;
            (h.value, h.exact, h.report, h.best_cover)
        }
    };
    if let (Some(path), Some(c)) = (&args.save_cover, &cover) {
        write_json(path, &m.cover_to_records(c))?;
    }
    let ub = match &value {
        Hinv::Finite { ub, .. } => Some(ub),
        Hinv::Infinite => None,
    };
    match args.format {
        Format::Json => {
            let doc = json!({
                "h_inv_ub": ub.map_or(json!("inf"), rate_json),
                "exact": exact,
                "per_tau": report.as_ref().map(|r| r.per_tau.iter().map(|e| json!({
                    "tau": e.tau, "r_inv": e.r.to_string(), "rate": rate_json(&e.rate)
                })).collect::<Vec<_>>()),
                "certificate": report.as_ref().map(|r| r.certificate.clone()),
                "cover": cover.as_ref().map(|c| m.cover_to_records(c)),
            });
            writeln!(out, "{}", serde_json::to_string_pretty(&doc).expect("json")).map_err(io_err)?;
        }
        fmt => {
            if let Some(r) = &report {
                table_lines(r, out)?;
            }
            if fmt == Format::Text {
                match ub {
                    Some(ub) => writeln!(out, "h_inv_ub={} exact={exact}{}", ub.decimal(), form_suffix(ub)),
                    None => writeln!(out, "h_inv_ub=inf exact=true"),
                }
                .map_err(io_err)?;
            }
        }
    }
    Ok(if ub.is_some() { SUCCESS } else { VIOLATION })
}

fn det_entropy(m: &Model, tau_max: usize, format: Format, out: &mut dyn Write) -> Result<Outcome> {
    let rep = h_det_bounds(&m.sys, &m.q, tau_max)?;
    let witness = |w: &[Vec<usize>]| -> Vec<Vec<String>> {
        w.iter().map(|nu| nu.iter().map(|&u| m.inputs[u].clone()).collect()).collect()
    };
    if format == Format::Json {
        let doc = json!({
            "h_det_ub": rate_json(&rep.h_det_ub),
            "r_det_exact": rep.exact,
            "per_tau": rep.per_tau.iter().map(|d| json!({
                "tau": d.tau, "r_det": d.r, "exact": d.exact, "witnesses": witness(&d.witnesses)
            })).collect::<Vec<_>>(),
        });
        writeln!(out, "{}", serde_json::to_string_pretty(&doc).expect("json")).map_err(io_err)?;
        return Ok(SUCCESS);
    }
    writeln!(out, "tau\tr_det\trate").map_err(io_err)?;
    for d in &rep.per_tau {
        writeln!(out, "{}\t{}\t{}", d.tau, d.r, LogRate::from_u64(d.r as u64, d.tau as u32).decimal()).map_err(io_err)?;
    }
    if format == Format::Text {
        writeln!(out, "h_det_ub={} r_det_exact={}{}", rep.h_det_ub.decimal(), rep.exact, form_suffix(&rep.h_det_ub)).map_err(io_err)?;
    }
    Ok(SUCCESS)
}

fn c0_text(g: &Growth) -> String {
    match g {
        Growth::Polynomial => "0 (certified)".into(),
        Growth::Exponential { lower, upper } if lower == upper => format!("{} (certified)", lower.exact_form()),
        Growth::Exponential { lower, upper } => format!("[{},{}]", lower.exact_form(), upper.exact_form()),
    }
}

fn datarate(m: &Model, h: &CoderController, probe: usize, format: Format, out: &mut dyn Write) -> Result<Outcome> {
    let rate = transmission_rate(&m.sys, &m.q, h, false)?;
    let tv = time_varying_rate(h, h.memory());
    let c0 = zero_error_capacity(&m.sys, h, probe)?;
    let cex = rate.counterexample.as_ref().map(|c| {
        let t = &c.trajectory;
        (
            t.states.iter().map(|&x| m.states[x].clone()).collect::<Vec<_>>(),
            t.inputs.iter().map(|&u| m.inputs[u].clone()).collect::<Vec<_>>(),
            c.symbols.clone(),
        )
    });
    match format {
        Format::Json => {
            let doc = json!({
                "R": rate_json(&rate.rate),
                "window_rate": rate_json(&rate.window_rate),
                "block_rate": rate_json(&rate.block_rate),
                "R_tv": rate_json(&tv.limit),
                "C0": c0_text(&c0.growth),
                "counts": c0.counts.iter().map(|c| c.to_string()).collect::<Vec<_>>(),
                "admissible": rate.admissible,
                "counterexample": cex.as_ref().map(|(s, u, z)| json!({"states": s, "inputs": u, "symbols": z})),
            });
            writeln!(out, "{}", serde_json::to_string_pretty(&doc).expect("json")).map_err(io_err)?;
        }
        _ => {
            writeln!(
                out,
                "R={} R_tv={} C0={} admissible={}",
                rate.rate.exact_form(),
                tv.limit.exact_form(),
                c0_text(&c0.growth),
                rate.admissible
            )
            .map_err(io_err)?;
            writeln!(out, "window_rate={} block_rate={}", rate.window_rate.exact_form(), rate.block_rate.exact_form()).map_err(io_err)?;
            writeln!(out, "tau\t#Z_tau").map_err(io_err)?;
            for (t, c) in c0.counts.iter().enumerate() {
                writeln!(out, "{}\t{c}", t + 1).map_err(io_err)?;
            }
            if let Some((s, u, z)) = &cex {
                writeln!(out, "counterexample states={s:?} inputs={u:?} symbols={z:?}").map_err(io_err)?;
            }
        }
    }
    Ok(if rate.admissible { SUCCESS } else { VIOLATION })
}

fn synth_codec(m: &Model, tau_max: usize, path: Option<PathBuf>, out: &mut dyn Write) -> Result<Outcome> {
    let limits = EntropyLimits { tau_max, ..EntropyLimits::default() };
    let h = invariance_entropy_ub(&m.sys, &m.q, &limits)?;
    let (Some(cover), Some(report)) = (h.best_cover, h.report) else {
        writeln!(out, "no coder-controller: Q is not controlled invariant").map_err(io_err)?;
        return Ok(VIOLATION);
    };
    let (n, policy) = r_inv(&m.sys, &m.q, &cover, report.ub_tau)?;
    let ctrl = from_spanning(&m.sys, &m.q, &policy)?;
    let adm = check_admissible(&m.sys, &m.q, &ctrl)?;
    let rate = transmission_rate(&m.sys, &m.q, &ctrl, false)?;
    writeln!(
        out,
        "period={} N={} symbols={} R={} block_rate={} admissible={}",
        report.ub_tau,
        n,
        ctrl.num_symbols(),
        rate.rate.exact_form(),
        rate.block_rate.exact_form(),
        adm.admissible
    )
    .map_err(io_err)?;
    if let Some(p) = path {
        let file: ControllerFile = m.controller_to_file(&ctrl);
        write_json(&p, &file)?;
    }
    Ok(if adm.admissible { SUCCESS } else { VIOLATION })
}

fn synth_scalar(p: &ScalarPlant, cover_out: Option<PathBuf>, abs_out: Option<PathBuf>, format: Format, out: &mut dyn Write) -> Result<Outcome> {
    let c = synth_scalar_static(p)?;
    let verified = verify_scalar_cover(p, &c);
    if let Some(path) = &cover_out {
        write_json(path, &scalar_cover_file(p, &c))?;
    }
    if let Some(path) = &abs_out {
        let (sys, q, inputs) = abstract_scalar(p, &c)?;
        write_json(path, &scalar_abstraction_model(sys, q, &c, &inputs).to_file())?;
    }
    if format == Format::Json {
        let mut doc = serde_json::to_value(scalar_cover_file(p, &c)).expect("json");
        doc["rate"] = json!(c.rate().to_string());
        doc["verified"] = json!(verified.is_ok());
        writeln!(out, "{}", serde_json::to_string_pretty(&doc).expect("json")).map_err(io_err)?;
    } else {
        writeln!(out, "i\tlo\thi\tinput").map_err(io_err)?;
        for cell in &c.cells {
            writeln!(out, "{}\t{}\t{}\t{}", cell.index, fmt_rational(&cell.lo), fmt_rational(&cell.hi), fmt_rational(&cell.input)).map_err(io_err)?;
        }
        if format == Format::Text {
            writeln!(out, "m={} d={} rate={} verified={}", c.m, fmt_rational(&c.d), c.rate(), verified.is_ok()).map_err(io_err)?;
        }
    }
    Ok(if verified.is_ok() { SUCCESS } else { VIOLATION })
}
