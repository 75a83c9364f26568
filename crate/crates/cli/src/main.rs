use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::{info, warn};
use serde_json::json;

use estimand_lab::config::DgpConfig;
use estimand_lab::decomposition::{decompose, natural_effects, EstimandKind};
use estimand_lab::diagnostics::{run_checks, search, CheckStatus, SearchConfig, SearchTarget};
use estimand_lab::montecarlo::{sample, validate, SimConfig};
use estimand_lab::report::{reports_json, sweep_csv, weights_csv};
use estimand_lab::sweep::{sweep, Grid};
use estimand_lab::{Assumption, Dgp, Error};

#[derive(Parser)]
#[command(name = "estimand-lab", version, about = "Exact decompositions of regression estimands")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Weights and direct / indirect / selection terms for one estimand.
    Decompose(DecomposeArgs),
    /// Weights over a grid of P{D=1}, arm conditionals held fixed.
    Sweep(SweepArgs),
    /// Random search for negative weights or sign reversals.
    Search(SearchArgs),
    /// Monte Carlo comparison of sample OLS with the population values.
    Simulate(SimulateArgs),
    /// Run every applicable invariant on a config.
    Check(CheckArgs),
}

#[derive(Args)]
struct DgpArgs {
    /// DGP config (JSON).
    #[arg(long)]
    dgp: PathBuf,
    /// Override the assumption given in the config.
    #[arg(long, value_parser = parse_assumption)]
    assumption: Option<Assumption>,
}

#[derive(Args)]
struct DecomposeArgs {
    #[command(flatten)]
    dgp: DgpArgs,
    #[arg(long, value_parser = parse_kind)]
    kind: EstimandKind,
    /// Output directory; the CSV goes to stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    dgp: DgpArgs,
    #[arg(long, value_parser = parse_kind)]
    kind: EstimandKind,
    /// `start:stop:step`, strictly inside (0, 1).
    #[arg(long, value_parser = parse_grid)]
    grid: Grid,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SearchArgs {
    #[arg(long, value_parser = parse_kind)]
    kind: EstimandKind,
    #[arg(long, value_parser = parse_target, default_value = "negative-weight")]
    target: SearchTarget,
    /// Number of action coordinates.
    #[arg(long, default_value_t = 1)]
    k: usize,
    /// Support size of each coordinate; one value is reused for all.
    #[arg(long, num_args = 1.., default_value = "3")]
    support: Vec<u32>,
    /// Restrict to mutually exclusive binary actions.
    #[arg(long)]
    mutually_exclusive: bool,
    #[arg(long, default_value_t = 10_000)]
    trials: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Directory for `summary.json` and one replayable config per hit.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Largest number of hit configs written.
    #[arg(long, default_value_t = 100)]
    max_dump: usize,
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    dgp: DgpArgs,
    #[arg(long, default_value_t = 100_000)]
    n: usize,
    #[arg(long, default_value_t = 50)]
    reps: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Bound on |z| for every coefficient.
    #[arg(long, default_value_t = 4.0)]
    z_bound: f64,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write the first replication's sample as CSV.
    #[arg(long)]
    dataset: bool,
}

#[derive(Args)]
struct CheckArgs {
    #[command(flatten)]
    dgp: DgpArgs,
}

fn parse_kind(s: &str) -> Result<EstimandKind, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_assumption(s: &str) -> Result<Assumption, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_grid(s: &str) -> Result<Grid, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_target(s: &str) -> Result<SearchTarget, String> {
    match s {
        "negative-weight" => Ok(SearchTarget::NegativeWeight),
        "ssp-violation" => Ok(SearchTarget::SspViolation),
        _ => Err(format!("unknown target `{s}` (expected negative-weight or ssp-violation)")),
    }
}

/// Failure of a command, carrying its exit code.
enum Failure {
    Lib(Error),
    Io(String),
    Violation(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Lib(Error::SingularDesign { .. } | Error::SingularSampleDesign { .. }) => 3,
            Failure::Lib(e) if e.is_validation() => 2,
            Failure::Violation(_) => 4,
            Failure::Lib(_) | Failure::Io(_) => 1,
        }
    }

    fn message(&self) -> String {
        match self {
            Failure::Lib(e) => e.to_string(),
            Failure::Io(m) | Failure::Violation(m) => m.clone(),
        }
    }
}

/// Files are only written once every one of them has been rendered.
struct Output {
    files: Vec<(PathBuf, String)>,
}

impl Output {
    fn new() -> Self {
        Output { files: Vec::new() }
    }

    fn add(&mut self, path: PathBuf, contents: String) {
        self.files.push((path, contents));
    }

    fn commit(self) -> Result<(), Failure> {
        for (path, contents) in &self.files {
            if let Some(dir) = path.parent() {
                fs::create_dir_all(dir)
                    .map_err(|e| Failure::Io(format!("cannot create {}: {e}", dir.display())))?;
            }
            fs::write(path, contents)
                .map_err(|e| Failure::Io(format!("cannot write {}: {e}", path.display())))?;
            info!("wrote {}", path.display());
        }
        Ok(())
    }
}

fn stem(path: &Path) -> String {
    path.file_stem()
        .map_or_else(|| "dgp".into(), |s| s.to_string_lossy().into_owned())
}

fn load(args: &DgpArgs) -> Result<(DgpConfig, Dgp), Failure> {
    let mut cfg = DgpConfig::from_path(&args.dgp)?;
    if let Some(a) = args.assumption {
        cfg.assumption = a;
    }
    let dgp = cfg.build()?;
    Ok((cfg, dgp))
}

fn cmd_decompose(args: &DecomposeArgs) -> Result<(), Failure> {
    let (_, dgp) = load(&args.dgp)?;
    let reports = decompose(&dgp, args.kind)?;
    let natural = natural_effects(&dgp).ok();
    let csv = weights_csv(&reports);
    for r in &reports {
        info!(
            "{} estimand {} = dce {} + ind {} + sel {} (residual {:e})",
            r.kind, r.estimand, r.dce, r.ind, r.sel, r.identity_residual
        );
    }
    match &args.out {
        Some(dir) => {
            let base = format!("{}_{}", stem(&args.dgp.dgp), args.kind);
            let json = reports_json(&reports, natural.as_ref());
            let mut out = Output::new();
            out.add(dir.join(format!("{base}.json")), pretty(&json));
            out.add(dir.join(format!("{base}.csv")), csv);
            out.commit()
        }
        None => {
            print!("{csv}");
            Ok(())
        }
    }
}

fn cmd_sweep(args: &SweepArgs) -> Result<(), Failure> {
    let (cfg, _) = load(&args.dgp)?;
    let points = sweep(&cfg, args.kind, &args.grid)?;
    let csv = sweep_csv(&points);
    match &args.out {
        Some(dir) => {
            let mut out = Output::new();
            out.add(
                dir.join(format!("{}_{}_sweep.csv", stem(&args.dgp.dgp), args.kind)),
                csv,
            );
            out.commit()
        }
        None => {
            print!("{csv}");
            Ok(())
        }
    }
}

fn cmd_search(args: &SearchArgs) -> Result<(), Failure> {
    let sizes = match args.support.len() {
        1 => vec![args.support[0]; args.k],
        n if n == args.k => args.support.clone(),
        n => {
            return Err(Error::Config(format!(
                "--support has {n} values for --k {}",
                args.k
            ))
            .into())
        }
    };
    let cfg = SearchConfig {
        kind: args.kind,
        target: args.target.clone(),
        sizes,
        mutually_exclusive: args.mutually_exclusive,
        trials: args.trials,
        seed: args.seed,
    };
    let result = search(&cfg)?;
    if let Some(reason) = &result.refused {
        warn!("search not run: {reason}");
    }
    let summary = json!({
        "kind": result.kind,
        "target": result.target,
        "seed": args.seed,
        "trials": result.trials,
        "hits": result.hits.len(),
        "hit_rate": result.hit_rate(),
        "min_omega_dce": if result.min_weight.is_finite() { json!(result.min_weight) } else { json!(null) },
        "refused": result.refused,
        "dumped_trials": result.hits.iter().take(args.max_dump).map(|h| h.trial).collect::<Vec<_>>(),
    });
    match &args.out {
        Some(dir) => {
            let mut out = Output::new();
            for h in result.hits.iter().take(args.max_dump) {
                let mut c = DgpConfig::from_dgp(&h.dgp, Some(format!("search_{}_{}", args.kind, h.trial)));
                c.description = Some(format!(
                    "trial {} of seed {}; smallest omega_dce {}",
                    h.trial, args.seed, h.min_weight
                ));
                out.add(dir.join(format!("hit_{:06}.json", h.trial)), c.to_json_pretty() + "\n");
            }
            out.add(dir.join("summary.json"), pretty(&summary));
            out.commit()
        }
        None => {
            print!("{}", pretty(&summary));
            Ok(())
        }
    }
}

fn cmd_simulate(args: &SimulateArgs) -> Result<(), Failure> {
    let (_, dgp) = load(&args.dgp)?;
    let report = validate(&dgp, &SimConfig::new(args.n, args.reps, args.seed))?;
    let json = pretty(&json!(report));
    let mut out = Output::new();
    match &args.out {
        Some(dir) => {
            let base = stem(&args.dgp.dgp);
            out.add(dir.join(format!("{base}_simulate.json")), json);
            if args.dataset {
                let mut buf = Vec::new();
                sample(&dgp, args.n, args.seed)
                    .write_csv(&mut buf)
                    .map_err(|e| Failure::Io(e.to_string()))?;
                out.add(
                    dir.join(format!("{base}_sample.csv")),
                    String::from_utf8(buf).expect("csv is utf-8"),
                );
            }
            out.commit()?;
        }
        None => print!("{json}"),
    }
    if report.all_within(args.z_bound) {
        Ok(())
    } else {
        Err(Failure::Violation(format!(
            "largest |z| = {:.3} exceeds {}",
            report.max_abs_z(),
            args.z_bound
        )))
    }
}

fn cmd_check(args: &CheckArgs) -> Result<(), Failure> {
    let (_, dgp) = load(&args.dgp)?;
    let outcomes = run_checks(&dgp);
    let mut failed = 0;
    for c in &outcomes {
        let tag = match c.status {
            CheckStatus::Pass => "PASS",
            CheckStatus::Fail => {
                failed += 1;
                "FAIL"
            }
            CheckStatus::Skip => "SKIP",
        };
        println!("{tag} {}: {}", c.name, c.detail);
    }
    if failed > 0 {
        Err(Failure::Violation(format!("{failed} invariant(s) violated")))
    } else {
        Ok(())
    }
}

fn pretty(v: &serde_json::Value) -> String {
    serde_json::to_string_pretty(v).expect("json serializes") + "\n"
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("ESTIMAND_LAB_LOG", "warn"))
        .init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Decompose(a) => cmd_decompose(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Search(a) => cmd_search(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Check(a) => cmd_check(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}
