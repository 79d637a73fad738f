use clap::{value_parser, Arg, ArgAction, ArgMatches, Command};
use oscillab::experiments::{run, Bundle, ExperimentConfig};
use oscillab::Error;
use serde_json::{json, Value};
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

const EXIT_RUNTIME: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_CRITERION: u8 = 3;

fn common(cmd: Command) -> Command {
    cmd.arg(
        Arg::new("config")
            .long("config")
            .required(true)
            .value_parser(value_parser!(PathBuf))
            .help("JSON configuration file"),
    )
    .arg(Arg::new("out").long("out").value_parser(value_parser!(PathBuf)).help("Directory for summary.json and tables"))
    .arg(Arg::new("threads").long("threads").value_parser(value_parser!(usize)).help("Worker threads (default: all cores)"))
    .arg(Arg::new("seed").long("seed").value_parser(value_parser!(u64)).help("Seed of the test-function jitter stream"))
    .arg(
        Arg::new("op-cap")
            .long("op-cap")
            .value_parser(value_parser!(usize))
            .help("Largest grid accepted by the semigroup backends"),
    )
    .arg(
        Arg::new("interior-window")
            .long("interior-window")
            .value_parser(value_parser!(f64))
            .help("Fraction of the box used by deficit reports"),
    )
    .arg(
        Arg::new("golden")
            .long("golden")
            .value_parser(value_parser!(PathBuf))
            .help("Compare every emitted file with the copy in this directory"),
    )
    .arg(Arg::new("quiet").long("quiet").short('q').action(ArgAction::SetTrue).help("Only print failures"))
}

fn cli() -> Command {
    Command::new("oscillab")
        .version(env!("CARGO_PKG_VERSION"))
        .about("Mean-oscillation, tent-space and approximation experiments for Schrodinger operators")
        .subcommand_required(true)
        .arg_required_else_help(true)
        .subcommand(common(Command::new("run").about("Run every scenario of a configuration")))
        .subcommand(common(Command::new("bmo").about("BMO and BMO_L norms of the listed functions")))
        .subcommand(common(Command::new("tent").about("Tent-space norms of the square-function field")))
        .subcommand(common(Command::new("pairing").about("Reproducing-pairing check on pairs of functions")))
        .subcommand(common(
            Command::new("uchiyama")
                .about("Dyadic averaging with thresholds, assignment and (P1)/(P2) report")
                .arg(Arg::new("eps").long("eps").value_parser(value_parser!(f64)).help("Absolute eps")),
        ))
}

/// Read the configuration. For the single-kind subcommands the file may hold
/// one bare scenario object, and only scenarios of that kind are kept.
fn load(kind: Option<&str>, m: &ArgMatches) -> Result<ExperimentConfig, Error> {
    let path = m.get_one::<PathBuf>("config").expect("required");
    let text =
        fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
    let mut v: Value = serde_json::from_str(&text)?;
    if let Some(kind) = kind {
        if v.get("scenarios").is_none() {
            let mut s = v;
            if s.get("id").is_none() {
                s["id"] = json!(kind);
            }
            s["kind"] = json!(kind);
            v = json!({ "scenarios": [s] });
        }
        let list = v["scenarios"].as_array().cloned().unwrap_or_default();
        let kept: Vec<Value> = list.into_iter().filter(|s| s["kind"] == json!(kind)).collect();
        if kept.is_empty() {
            return Err(Error::Config(format!("no `{kind}` scenario in {}", path.display())));
        }
        v["scenarios"] = Value::Array(kept);
    }
    let scenarios = v.get_mut("scenarios").and_then(Value::as_array_mut);
    for s in scenarios.into_iter().flatten() {
        if let Some(cap) = m.get_one::<usize>("op-cap") {
            s["operator"]["dense_cap"] = json!(cap.min(&4096));
            s["operator"]["sine_cap"] = json!(cap);
        }
        if let Some(w) = m.get_one::<f64>("interior-window") {
            if s["kind"] == json!("semigroup") {
                s["interior_window"] = json!(w);
            }
        }
        if let Some(eps) = m.try_get_one::<f64>("eps").ok().flatten() {
            s["eps"] = json!(eps);
        }
    }
    let mut cfg: ExperimentConfig = serde_json::from_value(v)?;
    if let Some(seed) = m.get_one::<u64>("seed") {
        cfg.seed = *seed;
    }
    if let Some(out) = m.get_one::<PathBuf>("out") {
        cfg.out = Some(out.clone());
    }
    Ok(cfg)
}

fn compare_golden(bundle: &Bundle, out: &Path, golden: &Path) -> Vec<String> {
    let mut names = vec!["summary.json".to_string()];
    names.extend(bundle.scenarios.iter().flat_map(|s| s.files.iter().cloned()));
    names
        .into_iter()
        .filter(|n| match (fs::read(out.join(n)), fs::read(golden.join(n))) {
            (Ok(a), Ok(b)) => a != b,
            _ => true,
        })
        .collect()
}

fn execute(kind: Option<&str>, m: &ArgMatches) -> Result<u8, Error> {
    if let Some(&n) = m.get_one::<usize>("threads") {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Config(format!("cannot set up {n} threads: {e}")))?;
    }
    let cfg = load(kind, m)?;
    let bundle = run(&cfg)?;
    let quiet = m.get_flag("quiet");
    for s in &bundle.scenarios {
        for c in &s.checks {
            let tag = match (c.pass, c.asserted) {
                (true, _) => "PASS",
                (false, true) => "FAIL",
                (false, false) => "NOTE",
            };
            if !quiet || tag == "FAIL" {
                println!("{tag} {}::{} {}", s.id, c.name, c.detail);
            }
        }
    }
    let out = cfg.out.clone();
    if let Some(dir) = &out {
        bundle.write(dir)?;
    } else if !quiet {
        print!("{}", bundle.summary_json());
    }
    if let Some(golden) = m.get_one::<PathBuf>("golden") {
        let dir = out.ok_or_else(|| Error::Config("--golden needs --out".into()))?;
        let diff = compare_golden(&bundle, &dir, golden);
        if !diff.is_empty() {
            eprintln!("golden mismatch: {}", diff.join(", "));
            return Ok(EXIT_CRITERION);
        }
    }
    Ok(if bundle.passed() { 0 } else { EXIT_CRITERION })
}

fn main() -> ExitCode {
    let matches = cli().get_matches();
    let (name, sub) = matches.subcommand().expect("subcommand is required");
    let kind = if name == "run" { None } else { Some(name) };
    match execute(kind, sub) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_config() { EXIT_CONFIG } else { EXIT_RUNTIME })
        }
    }
}
