//! `ctclab`: generate datasets, train vanilla or two-stage models, estimate
//! mutual information and summarize trajectories.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 usage or validation failure.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::Context;
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use ctclab::datagen::{gen_shared_pair, load_matrix_csv, load_numeric_csv, save_matrix_csv, SharedPatternSpec};
use ctclab::mi::{bivariate_gaussian_samples, discrete_mi_exact, mine_estimate, one_hot, DiscreteJoint, MineConfig};
use ctclab::numerics::Matrix;
use ctclab::pipeline::{
    apply_override, emit_trajectory, format_comparison, format_summary, load_checkpoint, load_config_file,
    load_experiment_data, read_trajectory_csv, summarize, train, TrainConfig, TrainMode, TrainOptions,
};

#[derive(Parser)]
#[command(name = "ctclab", version, about = "Contrastive temporal coding lab")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write synthetic source/target train/test CSVs.
    Gen(GenArgs),
    /// Train a model and record its per-epoch trajectory.
    Train(TrainArgs),
    /// Estimate mutual information with MINE, or compute it exactly.
    Mi(MiArgs),
    /// Summarize one or more trajectory.csv files.
    Report(ReportArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Preset {
    /// 2000/1000 samples per dataset.
    Default,
    /// 400/200 samples per dataset, for smoke tests.
    Small,
}

#[derive(Args)]
struct GenArgs {
    #[arg(long, value_enum, default_value = "default")]
    preset: Preset,
    #[arg(long, env = "CTCLAB_SEED", default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    shared_dim: Option<usize>,
    #[arg(long)]
    source_private_dim: Option<usize>,
    #[arg(long)]
    target_private_dim: Option<usize>,
    #[arg(long)]
    source_classes: Option<usize>,
    #[arg(long)]
    target_classes: Option<usize>,
    #[arg(long)]
    train_samples: Option<usize>,
    #[arg(long)]
    test_samples: Option<usize>,
    #[arg(long)]
    noise_std: Option<f64>,
    #[arg(long)]
    source_shared_weight: Option<f64>,
    #[arg(long)]
    target_private_overlap: Option<f64>,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long, value_enum)]
    mode: ModeArg,
    /// Sectioned key = value config file; defaults apply when omitted.
    #[arg(short = 'c', long = "config")]
    config: Option<PathBuf>,
    /// `section.key=value`, applied after the config file; repeatable.
    #[arg(long = "set", value_name = "SECTION.KEY=VALUE")]
    overrides: Vec<String>,
    /// Training seed; the data seed stays as configured.
    #[arg(long, env = "CTCLAB_SEED")]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    quiet: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Vanilla,
    Ctc,
}

impl From<ModeArg> for TrainMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Vanilla => TrainMode::Vanilla,
            ModeArg::Ctc => TrainMode::Ctc,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Quantity {
    /// I(X;T): dataset features against representations.
    Ixt,
    /// I(T;Y): representations against one-hot labels.
    Ity,
}

#[derive(Args)]
struct MiArgs {
    /// First variable, numeric CSV with a header row.
    #[arg(long, requires = "b")]
    a: Option<PathBuf>,
    /// Second variable, same row count as `--a`.
    #[arg(long, requires = "a")]
    b: Option<PathBuf>,
    /// Draw a standard bivariate Gaussian with this correlation instead of reading files.
    #[arg(long, allow_negative_numbers = true)]
    gaussian: Option<f64>,
    /// Sample count for `--gaussian`.
    #[arg(long, default_value_t = 10_000)]
    samples: usize,
    /// Model checkpoint whose backbone produces T for `--data`.
    #[arg(long, requires = "data")]
    checkpoint: Option<PathBuf>,
    /// Labeled `label,f0,...` CSV used with `--checkpoint`.
    #[arg(long, requires = "checkpoint")]
    data: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "ixt")]
    quantity: Quantity,
    /// `discrete <joint.csv>`: exact MI of a joint table, no training.
    #[arg(long, num_args = 2, value_names = ["KIND", "PATH"])]
    oracle: Option<Vec<String>>,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    batch: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    hidden: Option<usize>,
    #[arg(long, env = "CTCLAB_SEED", default_value_t = 0)]
    seed: u64,
    /// Directory for `mi.json` and the run manifest.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ReportArgs {
    /// trajectory.csv files, or run directories containing one.
    #[arg(required = true)]
    runs: Vec<PathBuf>,
}

#[derive(Serialize)]
struct RunManifest<'a> {
    command: &'a str,
    config_path: Option<&'a Path>,
    out_dir: PathBuf,
    timestamp_unix: u64,
    seed: u64,
    args: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    config: Option<&'a TrainConfig>,
}

fn write_manifest(out: &Path, manifest: &RunManifest<'_>) -> anyhow::Result<()> {
    let path = out.join("manifest.json");
    let json = serde_json::to_string_pretty(manifest)?;
    std::fs::write(&path, json + "\n").with_context(|| format!("writing {}", path.display()))
}

fn manifest<'a>(command: &'a str, out: &Path, seed: u64) -> RunManifest<'a> {
    RunManifest {
        command,
        config_path: None,
        out_dir: std::path::absolute(out).unwrap_or_else(|_| out.to_path_buf()),
        timestamp_unix: SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs()),
        seed,
        args: std::env::args().collect(),
        config: None,
    }
}

fn create_dir(dir: &Path) -> anyhow::Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn cmd_gen(args: GenArgs) -> anyhow::Result<()> {
    let mut spec = SharedPatternSpec::default();
    if let Preset::Small = args.preset {
        spec.train_samples = 400;
        spec.test_samples = 200;
    }
    spec.seed = args.seed;
    macro_rules! set {
        ($($field:ident),*) => { $(if let Some(v) = args.$field { spec.$field = v; })* };
    }
    set!(
        shared_dim,
        source_private_dim,
        target_private_dim,
        source_classes,
        target_classes,
        train_samples,
        test_samples,
        noise_std,
        source_shared_weight,
        target_private_overlap
    );
    let pair = gen_shared_pair(&spec)?;
    create_dir(&args.out)?;
    for ds in [&pair.source.train, &pair.source.test, &pair.target.train, &pair.target.test] {
        let path = args.out.join(ds.file_name());
        save_matrix_csv(ds, &path)?;
        println!("wrote {} ({} rows)", path.display(), ds.len());
    }
    write_manifest(&args.out, &manifest("gen", &args.out, args.seed))
}

fn cmd_train(args: TrainArgs) -> anyhow::Result<()> {
    let mut config = match &args.config {
        Some(path) => load_config_file(path)?,
        None => TrainConfig::default(),
    };
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    for o in &args.overrides {
        apply_override(&mut config, o)?;
    }
    config.validate()?;
    let data = load_experiment_data(&config.data)?;
    create_dir(&args.out)?;
    let mode = TrainMode::from(args.mode);
    let quiet = args.quiet;
    let mut progress = |r: &ctclab::pipeline::EpochRecord| {
        if !quiet {
            eprintln!(
                "epoch {:>4} stage {} loss {:.4} acc {:.4} r@1 {:.4} nmi {:.4} probe {:.4}",
                r.epoch,
                r.stage,
                r.train_loss,
                r.test_acc,
                r.r_at_1,
                r.nmi,
                r.mean_probe()
            );
        }
    };
    let options = TrainOptions {
        checkpoint_dir: (config.eval.checkpoint_every > 0).then(|| args.out.join("checkpoints")),
        on_record: Some(&mut progress),
    };
    let mut m = manifest("train", &args.out, config.seed);
    m.config_path = args.config.as_deref();
    m.config = Some(&config);
    write_manifest(&args.out, &m)?;
    let outcome = train(mode, &config, &data, options)?;
    emit_trajectory(&outcome.trajectory, &args.out)?;
    println!(
        "{} run finished: {} evaluated epochs, trajectory in {}",
        mode.as_str(),
        outcome.trajectory.records.len(),
        args.out.join("trajectory.csv").display()
    );
    Ok(())
}

#[derive(Serialize)]
struct MiReport {
    method: &'static str,
    value: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    stderr: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    steps_used: Option<usize>,
    samples: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    config: Option<MineConfig>,
}

fn mi_inputs(args: &MiArgs) -> anyhow::Result<(Matrix, Matrix)> {
    if let Some(rho) = args.gaussian {
        return Ok(bivariate_gaussian_samples(rho, args.samples, args.seed)?);
    }
    if let (Some(a), Some(b)) = (&args.a, &args.b) {
        return Ok((load_numeric_csv(a)?, load_numeric_csv(b)?));
    }
    if let (Some(ckpt), Some(data)) = (&args.checkpoint, &args.data) {
        let model = load_checkpoint(ckpt)?;
        let ds = load_matrix_csv(data, None)?;
        let reps = model.backbone.extract(&ds.features)?;
        return Ok(match args.quantity {
            Quantity::Ixt => (ds.features, reps),
            Quantity::Ity => (reps, one_hot(&ds.labels, ds.class_count)?),
        });
    }
    Err(ctclab::Error::Config("mi needs --oracle, --gaussian, --a/--b or --checkpoint/--data".into()).into())
}

fn cmd_mi(args: MiArgs) -> anyhow::Result<()> {
    let report = if let Some(oracle) = &args.oracle {
        if oracle[0] != "discrete" {
            return Err(ctclab::Error::Config(format!("unknown oracle '{}'; expected 'discrete'", oracle[0])).into());
        }
        let table = load_numeric_csv(Path::new(&oracle[1]))?;
        let joint = DiscreteJoint::from_weights(table)?;
        let value = discrete_mi_exact(&joint);
        println!("exact I = {value:.6} nats");
        MiReport {
            method: "exact-discrete",
            value,
            stderr: None,
            steps_used: None,
            samples: 0,
            config: None,
        }
    } else {
        let (a, b) = mi_inputs(&args)?;
        let mut config = MineConfig::default();
        if let Some(v) = args.steps {
            config.train_steps = v;
        }
        if let Some(v) = args.batch {
            config.batch_size = v;
        }
        if let Some(v) = args.lr {
            config.learning_rate = v;
        }
        if let Some(v) = args.hidden {
            config.hidden_dim = v;
        }
        let est = mine_estimate(&a, &b, &config, args.seed)?;
        println!("MINE I = {:.4} ± {:.4} nats", est.value, est.stderr);
        MiReport {
            method: "mine",
            value: est.value,
            stderr: Some(est.stderr),
            steps_used: Some(est.steps_used),
            samples: a.rows(),
            config: Some(config),
        }
    };
    if let Some(out) = &args.out {
        create_dir(out)?;
        let path = out.join("mi.json");
        std::fs::write(&path, serde_json::to_string_pretty(&report)? + "\n")
            .with_context(|| format!("writing {}", path.display()))?;
        write_manifest(out, &manifest("mi", out, args.seed))?;
    }
    Ok(())
}

fn cmd_report(args: ReportArgs) -> anyhow::Result<()> {
    let mut summaries = Vec::new();
    for run in &args.runs {
        let path = if run.is_dir() { run.join("trajectory.csv") } else { run.clone() };
        let table = read_trajectory_csv(&path)?;
        let label = run.display().to_string();
        match summarize(&table) {
            Some(s) => {
                print!("{}", format_summary(&label, &s));
                summaries.push((label, s));
            }
            None => println!("{label}: no evaluated epochs"),
        }
    }
    if let [(la, a), (lb, b)] = summaries.as_slice() {
        print!("{}", format_comparison((la, lb), a, b));
    } else if args.runs.len() == 2 && summaries.len() < 2 {
        println!("comparison skipped: a run has no evaluated epochs");
    }
    Ok(())
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Gen(a) => cmd_gen(a),
        Command::Train(a) => cmd_train(a),
        Command::Mi(a) => cmd_mi(a),
        Command::Report(a) => cmd_report(a),
    }
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<ctclab::Error>() {
        Some(e) if e.is_validation() => 2,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}
