use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use voteagg::bench::{run_experiment, run_once, simulate_crowd, ExperimentConfig, SyntheticSpec};
use voteagg::data::{write_dataset, write_labels};
use voteagg::mixture::checks::{equivalence_suite, kmeans_limit_suite};
use voteagg::mixture::{gmm_to_rbm, rbm_to_gmm};
use voteagg::snapshot::{self, Model};

#[derive(Parser)]
#[command(name = "voteagg", version, about = "Crowd vote aggregation with K-RBM clustering and baselines")]
struct Cli {
    /// Seed for every random choice (overrides `base_seed` in configs).
    #[arg(long, global = true)]
    seed: Option<u64>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one method once on a dataset and write `item,label` predictions.
    Aggregate(AggregateArgs),
    /// Run the multi-run protocol described by a config file.
    Experiment(ExperimentArgs),
    /// Draw a synthetic crowd dataset from a spec file.
    Simulate(SimulateArgs),
    /// Convert a Gaussian-softmax RBM snapshot to a mixture snapshot or back.
    Convert(ConvertArgs),
    /// Check the RBM/mixture identities and the K-means limit.
    Verify(VerifyArgs),
}

#[derive(Args)]
struct Overrides {
    /// Flat TOML config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override a config key, e.g. `--set epochs=20`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Args)]
struct AggregateArgs {
    #[command(flatten)]
    overrides: Overrides,
    /// Votes CSV with header `item,worker,label`.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Gold CSV with header `item,label`; enables error reporting.
    #[arg(long)]
    gold: Option<PathBuf>,
    #[arg(long)]
    num_classes: Option<usize>,
    /// majority, dawid_skene, krbm or kmeans_baseline.
    #[arg(long)]
    method: Option<String>,
    /// one_hot, compact_binary or real_valued.
    #[arg(long)]
    encoding: Option<String>,
    /// Predictions CSV to write.
    #[arg(long, short)]
    out: PathBuf,
}

#[derive(Args)]
struct ExperimentArgs {
    #[command(flatten)]
    overrides: Overrides,
    #[arg(long)]
    output_dir: Option<PathBuf>,
    #[arg(long)]
    runs: Option<usize>,
}

#[derive(Args)]
struct SimulateArgs {
    /// Synthetic spec file (flat TOML).
    #[arg(long)]
    spec: PathBuf,
    /// Override a spec key. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Directory receiving `votes.csv` and `gold.csv`.
    #[arg(long, short)]
    out_dir: PathBuf,
}

#[derive(Args)]
struct ConvertArgs {
    #[arg(long, short)]
    input: PathBuf,
    #[arg(long, short)]
    output: PathBuf,
}

#[derive(Args)]
struct VerifyArgs {
    /// Random RBMs and mixtures checked for the conversion identities.
    #[arg(long, default_value_t = 100)]
    instances: usize,
    /// Evaluation points per instance.
    #[arg(long, default_value_t = 100)]
    points: usize,
    /// Well-separated instances for the K-means limit.
    #[arg(long, default_value_t = 20)]
    limit_instances: usize,
    /// Decreasing σ schedule for the limit check.
    #[arg(long, value_delimiter = ',', default_value = "1,0.3,0.1,0.03,0.01")]
    sigmas: Vec<f64>,
}

fn quoted(s: &Path) -> String {
    let s = s.display().to_string();
    format!("\"{}\"", s.replace('\\', "\\\\").replace('"', "\\\""))
}

fn load_config(o: &Overrides, mut extra: Vec<String>, seed: Option<u64>) -> Result<ExperimentConfig> {
    let text = match &o.config {
        Some(path) => std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?,
        None => String::new(),
    };
    extra.extend(o.set.iter().cloned());
    if let Some(seed) = seed {
        extra.push(format!("base_seed={seed}"));
    }
    Ok(ExperimentConfig::from_toml_str(&text, &extra)?)
}

fn aggregate(args: AggregateArgs, seed: Option<u64>) -> Result<()> {
    let mut extra = Vec::new();
    if let Some(p) = &args.data {
        extra.push(format!("data={}", quoted(p)));
    }
    if let Some(p) = &args.gold {
        extra.push(format!("gold={}", quoted(p)));
    }
    if let Some(c) = args.num_classes {
        extra.push(format!("num_classes={c}"));
    }
    if let Some(m) = &args.method {
        extra.push(format!("method=\"{m}\""));
    }
    if let Some(e) = &args.encoding {
        extra.push(format!("encoding=\"{e}\""));
    }
    let cfg = load_config(&args.overrides, extra, seed)?;
    if cfg.data.as_os_str().is_empty() {
        bail!("no dataset given; pass --data or set `data` in the config");
    }
    let ds = cfg.load_dataset()?;
    let out = run_once(&cfg, &ds, 0, cfg.base_seed)?;
    write_labels(&out.predictions, &args.out)?;
    println!("wrote {} predictions to {}", out.predictions.len(), args.out.display());
    if let Some(l0) = out.l0 {
        println!("L0 = {l0:.4}");
    }
    if let Some(l1) = out.l1 {
        println!("L1 = {l1:.4}");
    }
    Ok(())
}

fn experiment(args: ExperimentArgs, seed: Option<u64>) -> Result<()> {
    if args.overrides.config.is_none() {
        bail!("experiment needs --config");
    }
    let mut extra = Vec::new();
    if let Some(d) = &args.output_dir {
        extra.push(format!("output_dir={}", quoted(d)));
    }
    if let Some(r) = args.runs {
        extra.push(format!("runs={r}"));
    }
    let cfg = load_config(&args.overrides, extra, seed)?;
    let (report, dir) = run_experiment(&cfg)?;
    let failed = report.runs.iter().filter(|r| r.error.is_some()).count();
    println!("{} runs of {} ({} failed)", report.runs.len(), cfg.method, failed);
    if let Some(s) = report.l0 {
        println!("L0 mean {:.4} std {:.4}", s.mean, s.std);
    }
    if let Some(s) = report.l1 {
        println!("L1 mean {:.4} std {:.4}", s.mean, s.std);
    }
    if report.partial {
        println!("report is partial");
    }
    println!("results in {}", dir.display());
    Ok(())
}

fn simulate(args: SimulateArgs, seed: Option<u64>) -> Result<()> {
    let spec = SyntheticSpec::load(&args.spec, &args.set)?;
    let ds = simulate_crowd(&spec, seed.unwrap_or(0))?;
    std::fs::create_dir_all(&args.out_dir).with_context(|| format!("creating {}", args.out_dir.display()))?;
    write_dataset(&ds, args.out_dir.join("votes.csv"))?;
    write_labels(ds.gold().expect("simulated data has gold"), args.out_dir.join("gold.csv"))?;
    println!(
        "wrote {} votes on {} items to {}",
        ds.records().len(),
        ds.num_items(),
        args.out_dir.display()
    );
    Ok(())
}

fn convert(args: ConvertArgs) -> Result<()> {
    let converted = match snapshot::load(&args.input)? {
        Model::Rbm(p) => Model::Gmm(rbm_to_gmm(&p)?),
        Model::Gmm(g) => Model::Rbm(gmm_to_rbm(&g)?),
    };
    snapshot::save(&converted, &args.output)?;
    let kind = match converted {
        Model::Rbm(_) => "rbm",
        Model::Gmm(_) => "gmm",
    };
    println!("wrote {kind} snapshot to {}", args.output.display());
    Ok(())
}

fn verify(args: VerifyArgs, seed: Option<u64>) -> Result<bool> {
    let seed = seed.unwrap_or(0);
    let eq = equivalence_suite(args.instances, args.points, seed)?;
    println!(
        "equivalence: {} instances x {} points, marginal rel err {:.3e}, posterior err {:.3e}, round trip err {:.3e}: {}",
        eq.instances,
        eq.points_per_instance,
        eq.max_marginal_rel_error,
        eq.max_posterior_error,
        eq.max_roundtrip_error,
        if eq.passed() { "ok" } else { "FAILED" }
    );
    let reports = kmeans_limit_suite(args.limit_instances, &args.sigmas, seed)?;
    let passed = reports.iter().filter(|r| r.passed()).count();
    let worst = reports
        .iter()
        .map(|r| r.smallest().max_nonconfidence)
        .fold(0.0, f64::max);
    println!(
        "k-means limit: {passed}/{} instances hard at sigma {}, worst non-confidence {worst:.3e}: {}",
        reports.len(),
        args.sigmas.last().copied().unwrap_or(f64::NAN),
        if passed == reports.len() { "ok" } else { "FAILED" }
    );
    Ok(eq.passed() && passed == reports.len())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Aggregate(a) => aggregate(a, cli.seed).map(|_| true),
        Command::Experiment(a) => experiment(a, cli.seed).map(|_| true),
        Command::Simulate(a) => simulate(a, cli.seed).map(|_| true),
        Command::Convert(a) => convert(a).map(|_| true),
        Command::Verify(a) => verify(a, cli.seed),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
