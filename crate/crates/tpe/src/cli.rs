//! Command-line surface: argument definitions and command runners.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use tpe_core::detect::{coeffs_from_alpha, count_ops, savings_percent, DetectorKind};
use tpe_core::model::{Constellation, SystemDims};
use tpe_core::sim::ber_sweep;
use tpe_core::train::{
    closed_form_fit, train_with_stats, Checkpoint, CheckpointMeta, Dataset, QuadraticStats, TrainingConfig,
};

use crate::config::{DetectorEntry, SweepFile, TrainFile};
use crate::error::{CliError, Result};
use crate::io;
use crate::manifest::RunManifest;
use crate::parallel::{self, RayonExecutor};

pub const CHECKPOINT_FILE: &str = "checkpoint.json";
pub const HISTORY_FILE: &str = "history.csv";
pub const BER_FILE: &str = "ber.csv";
pub const SUMMARY_FILE: &str = "summary.json";
pub const DATASET_FILE: &str = "dataset.json";

#[derive(Debug, Parser)]
#[command(name = "tpe", version, about = "Learned truncated polynomial expansion detectors for massive MIMO")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Learn TPE coefficients with Adam and write a checkpoint and loss history.
    Train(TrainArgs),
    /// Monte-Carlo BER sweep over an SNR grid.
    Sweep(SweepArgs),
    /// Complex-multiplication count of a detector, optionally against a second one.
    CountOps(CountOpsArgs),
    /// Closed-form least-squares coefficients, optionally compared with a checkpoint.
    FitOracle(FitArgs),
    /// Write the training channel samples of a config to JSON.
    GenData(GenArgs),
    /// Rerun a command from its manifest.
    Replay(ReplayArgs),
    /// Print a Gray-coded QAM constellation as CSV.
    Constellation(ConstellationArgs),
}

#[derive(Debug, Clone, Default, Args)]
pub struct TrainOverrides {
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long = "j")]
    pub order_j: Option<usize>,
    #[arg(long)]
    pub dataset_size: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr0: Option<f64>,
    #[arg(long)]
    pub decay: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
}

impl TrainOverrides {
    fn apply(&self, t: &mut TrainingConfig) {
        macro_rules! set {
            ($($f:ident => $g:ident),*) => { $(if let Some(v) = self.$f { t.$g = v; })* };
        }
        set!(n => n, k => k, order_j => order_j, dataset_size => dataset_size, batch_size => batch_size,
             epochs => epochs, lr0 => lr0, decay => decay, seed => master_seed);
    }
}

#[derive(Debug, Clone, Args)]
pub struct TrainArgs {
    /// JSON config; defaults are used for anything it omits.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, default_value = "out")]
    pub out_dir: PathBuf,
    /// Train on a dataset file written by `gen-data` instead of regenerating it.
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    #[arg(long)]
    pub workers: Option<usize>,
    #[command(flatten)]
    pub overrides: TrainOverrides,
}

#[derive(Debug, Clone, Args)]
pub struct SweepArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, default_value = "out")]
    pub out_dir: PathBuf,
    /// Name recorded in the summary file.
    #[arg(long)]
    pub scenario: Option<String>,
    #[arg(long)]
    pub workers: Option<usize>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Comma-separated SNR grid in dB.
    #[arg(long, value_delimiter = ',')]
    pub snr: Option<Vec<f64>>,
    #[arg(long)]
    pub min_bits: Option<u64>,
    #[arg(long)]
    pub min_errors: Option<u64>,
    #[arg(long)]
    pub max_bits: Option<u64>,
}

#[derive(Debug, Clone, Args)]
pub struct CountOpsArgs {
    #[arg(long)]
    pub n: usize,
    #[arg(long)]
    pub k: usize,
    /// zf, mmse, tpe-constant, tpe-power or tpe-learned.
    #[arg(long)]
    pub detector: String,
    #[arg(long = "j")]
    pub order_j: Option<usize>,
    /// Baseline detector for a percentage saving.
    #[arg(long)]
    pub vs: Option<String>,
    #[arg(long = "vs-j")]
    pub vs_order_j: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct FitArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    /// Trained checkpoint to compare against the fit.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Also write the fitted coefficients and a manifest here.
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    #[arg(long)]
    pub workers: Option<usize>,
    #[command(flatten)]
    pub overrides: TrainOverrides,
}

#[derive(Debug, Clone, Args)]
pub struct GenArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, default_value = "out")]
    pub out_dir: PathBuf,
    #[arg(long)]
    pub workers: Option<usize>,
    #[command(flatten)]
    pub overrides: TrainOverrides,
}

#[derive(Debug, Clone, Args)]
pub struct ReplayArgs {
    pub manifest: PathBuf,
    /// Where to write the replayed artifacts (defaults to the manifest's directory).
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    #[arg(long)]
    pub workers: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct ConstellationArgs {
    #[arg(long, default_value_t = 16)]
    pub order: u32,
    #[arg(long, default_value_t = 1.0)]
    pub energy: f64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn run(cli: Cli, out: &mut dyn Write) -> Result<()> {
    match cli.command {
        Command::Train(a) => cmd_train(&a, out),
        Command::Sweep(a) => cmd_sweep(&a, out),
        Command::CountOps(a) => cmd_count_ops(&a, out),
        Command::FitOracle(a) => cmd_fit_oracle(&a, out),
        Command::GenData(a) => cmd_gen_data(&a, out),
        Command::Replay(a) => cmd_replay(&a, out),
        Command::Constellation(a) => cmd_constellation(&a, out),
    }
}

fn say(out: &mut dyn Write, text: std::fmt::Arguments<'_>) -> Result<()> {
    out.write_fmt(text).and_then(|_| out.write_all(b"\n")).map_err(|e| CliError::io(Path::new("<stdout>"), e))
}

macro_rules! sayln {
    ($out:expr, $($t:tt)*) => { say($out, format_args!($($t)*)) };
}

fn load_train_file(path: Option<&Path>, overrides: &TrainOverrides) -> Result<(TrainFile, SystemDims)> {
    let mut file = match path {
        Some(p) => TrainFile::load(p)?,
        None => TrainFile::default(),
    };
    overrides.apply(&mut file.training);
    let dims = file.validate()?;
    Ok((file, dims))
}

/// The training dataset: regenerated from the seed, or read from a file that
/// must agree with the config.
fn training_data(cfg: &TrainingConfig, dataset: Option<&Path>, pool: &rayon::ThreadPool) -> Result<Dataset> {
    match dataset {
        None => parallel::generate_dataset(cfg, pool),
        Some(p) => {
            let ds = io::read_dataset(p)?;
            if (ds.dims().n(), ds.dims().k(), ds.len()) != (cfg.n, cfg.k, cfg.dataset_size) {
                return Err(CliError::Validation(format!(
                    "{} holds {} samples of {}x{}, config asks for {} of {}x{}",
                    p.display(),
                    ds.len(),
                    ds.dims().n(),
                    ds.dims().k(),
                    cfg.dataset_size,
                    cfg.n,
                    cfg.k
                )));
            }
            Ok(ds)
        }
    }
}

pub fn cmd_train(args: &TrainArgs, out: &mut dyn Write) -> Result<()> {
    let (file, dims) = load_train_file(args.config.as_deref(), &args.overrides)?;
    train_from_file(&file, dims, args.dataset.as_deref(), &args.out_dir, args.workers, out)
}

fn train_from_file(
    file: &TrainFile,
    dims: SystemDims,
    dataset: Option<&Path>,
    out_dir: &Path,
    workers: Option<usize>,
    out: &mut dyn Write,
) -> Result<()> {
    let cfg = &file.training;
    let ck_path = out_dir.join(CHECKPOINT_FILE);
    let hist_path = out_dir.join(HISTORY_FILE);
    let mut manifest = RunManifest::new("train", cfg.master_seed, file)
        .artifact("checkpoint", &ck_path)
        .artifact("history", &hist_path);
    if let Some(p) = dataset {
        manifest = manifest.input("dataset", p);
    }
    manifest.write(out_dir)?;

    let pool = parallel::make_pool(workers)?;
    let ds = training_data(cfg, dataset, &pool)?;
    let stats = parallel::dataset_stats(&ds, cfg.order_j, cfg.target, &pool)?;
    let outcome = train_with_stats(cfg, &stats)?;
    let meta = CheckpointMeta {
        train_seed: Some(cfg.master_seed),
        loss_final: Some(outcome.loss_final),
        adam: Some(cfg.adam),
    };
    io::save_checkpoint(&ck_path, &Checkpoint::new(&outcome.coeffs, dims, meta))?;
    io::write_history(&hist_path, &outcome.history)?;
    sayln!(out, "w = {:?}", outcome.coeffs.w())?;
    sayln!(out, "final mean loss {} after {} epochs", outcome.loss_final, cfg.epochs)?;
    sayln!(out, "wrote {} and {}", ck_path.display(), hist_path.display())
}

fn sweep_file(args: &SweepArgs) -> Result<(SweepFile, PathBuf)> {
    let (mut file, base) = match &args.config {
        Some(p) => (
            SweepFile::load(p)?,
            p.parent().map(Path::to_path_buf).unwrap_or_default(),
        ),
        None => (SweepFile::default(), PathBuf::new()),
    };
    macro_rules! set {
        ($($f:ident => $g:ident),*) => { $(if let Some(v) = args.$f.clone() { file.$g = v; })* };
    }
    set!(scenario => scenario, n => n, k => k, seed => master_seed, snr => snr_grid_db, min_bits => min_bits,
         min_errors => min_errors, max_bits => max_bits);
    // pin checkpoint paths so the manifest replays from anywhere
    for d in &mut file.detectors {
        if let DetectorEntry::TpeLearned { checkpoint, .. } = d {
            let joined = base.join(&*checkpoint);
            *checkpoint = std::fs::canonicalize(&joined).unwrap_or(joined);
        }
    }
    Ok((file, base))
}

pub fn cmd_sweep(args: &SweepArgs, out: &mut dyn Write) -> Result<()> {
    let (file, _) = sweep_file(args)?;
    sweep_from_file(&file, &args.out_dir, args.workers, out)
}

fn sweep_from_file(
    file: &SweepFile,
    out_dir: &Path,
    workers: Option<usize>,
    out: &mut dyn Write,
) -> Result<()> {
    let config = file.resolve(Path::new(""))?;
    let ber_path = out_dir.join(BER_FILE);
    let summary_path = out_dir.join(SUMMARY_FILE);
    RunManifest::new("sweep", file.master_seed, file)
        .artifact("ber_csv", &ber_path)
        .artifact("summary", &summary_path)
        .write(out_dir)?;

    let exec = RayonExecutor::new(workers)?;
    let curves = ber_sweep(&config, &exec)?;
    io::write_ber_csv(&ber_path, &curves)?;
    let summary = io::summarize(&file.scenario, &curves);
    io::write_json(&summary_path, &summary)?;
    for row in &summary {
        let j = row.order_j.map_or(String::new(), |j| format!(" J={j}"));
        let snr = row.snr_at_ber.map_or("n/a".into(), |s| format!("{s:.2} dB"));
        let gap = row.gap_to_zf_db.map_or(String::new(), |g| format!(", gap to zf {g:+.2} dB"));
        sayln!(out, "{}{j}: BER 1e-3 at {snr}{gap}", row.detector)?;
    }
    sayln!(out, "wrote {}", ber_path.display())
}

pub fn cmd_count_ops(args: &CountOpsArgs, out: &mut dyn Write) -> Result<()> {
    let dims = SystemDims::new(args.n, args.k)?;
    let kind: DetectorKind = args.detector.parse()?;
    let count = count_ops(kind, dims, args.order_j)?;
    let describe = |kind: DetectorKind, j: Option<usize>| match (kind, j) {
        (DetectorKind::Zf | DetectorKind::Mmse, _) | (_, None) => kind.to_string(),
        (_, Some(j)) => format!("{kind} J={j}"),
    };
    sayln!(out, "{} N={} K={}: {}", describe(kind, args.order_j), args.n, args.k, count.complex_mults)?;
    if let Some(vs) = &args.vs {
        let vs_kind: DetectorKind = vs.parse()?;
        let base = count_ops(vs_kind, dims, args.vs_order_j)?;
        sayln!(out, "{} N={} K={}: {}", describe(vs_kind, args.vs_order_j), args.n, args.k, base.complex_mults)?;
        sayln!(out, "saving: {:.2}%", savings_percent(&base, &count))?;
    }
    Ok(())
}

pub fn cmd_fit_oracle(args: &FitArgs, out: &mut dyn Write) -> Result<()> {
    let (file, dims) = load_train_file(args.config.as_deref(), &args.overrides)?;
    let inputs = FitInputs {
        dataset: args.dataset.as_deref(),
        checkpoint: args.checkpoint.as_deref(),
        out_dir: args.out_dir.as_deref(),
        workers: args.workers,
    };
    fit_from_file(&file, dims, &inputs, out)
}

struct FitInputs<'a> {
    dataset: Option<&'a Path>,
    checkpoint: Option<&'a Path>,
    out_dir: Option<&'a Path>,
    workers: Option<usize>,
}

fn fit_from_file(file: &TrainFile, dims: SystemDims, args: &FitInputs<'_>, out: &mut dyn Write) -> Result<()> {
    let cfg = &file.training;
    let j = cfg.order_j;
    if let Some(dir) = args.out_dir {
        let mut m = RunManifest::new("fit-oracle", cfg.master_seed, file).artifact("checkpoint", &dir.join(CHECKPOINT_FILE));
        if let Some(p) = args.dataset {
            m = m.input("dataset", p);
        }
        if let Some(p) = args.checkpoint {
            m = m.input("checkpoint", p);
        }
        m.write(dir)?;
    }
    let adam = match args.checkpoint {
        Some(p) => Some(io::load_coeffs(p, dims, j)?),
        None => None,
    };
    let pool = parallel::make_pool(args.workers)?;
    let ds = training_data(cfg, args.dataset, &pool)?;
    let stats = parallel::dataset_stats(&ds, j, cfg.target, &pool)?;
    let total = QuadraticStats::sum(&stats).expect("validated dataset is non-empty");
    let fit = closed_form_fit(&total, j)?;
    let l_fit = total.mean_loss(fit.w());
    if j == 1 && ds.len() == 1 {
        sayln!(out, "w_0 = <A_0, W_ZF> / <A_0, A_0> = {} / {} = {}", total.c()[0], total.b()[(0, 0)], fit.w()[0])?;
    }
    sayln!(out, "closed-form w* = {:?}", fit.w())?;
    sayln!(out, "closed-form loss {l_fit}")?;
    let analytic = coeffs_from_alpha(tpe_core::detect::alpha_constant(dims), j)?;
    sayln!(out, "constant-alpha loss {}", total.mean_loss(analytic.w()))?;
    if let Some(c) = &adam {
        let l = total.mean_loss(c.w());
        sayln!(out, "checkpoint w = {:?}", c.w())?;
        sayln!(out, "checkpoint loss {l}")?;
        sayln!(out, "relative gap {:.4}%", 100.0 * (l - l_fit) / l_fit)?;
    }
    if let Some(dir) = args.out_dir {
        let meta = CheckpointMeta {
            train_seed: Some(cfg.master_seed),
            loss_final: Some(l_fit),
            adam: None,
        };
        io::save_checkpoint(&dir.join(CHECKPOINT_FILE), &Checkpoint::new(&fit, dims, meta))?;
    }
    Ok(())
}

pub fn cmd_gen_data(args: &GenArgs, out: &mut dyn Write) -> Result<()> {
    let (file, _) = load_train_file(args.config.as_deref(), &args.overrides)?;
    gen_from_file(&file, &args.out_dir, args.workers, out)
}

fn gen_from_file(file: &TrainFile, out_dir: &Path, workers: Option<usize>, out: &mut dyn Write) -> Result<()> {
    let cfg = &file.training;
    let path = out_dir.join(DATASET_FILE);
    RunManifest::new("gen-data", cfg.master_seed, file).artifact("dataset", &path).write(out_dir)?;
    let ds = parallel::generate_dataset(cfg, &parallel::make_pool(workers)?)?;
    io::write_json(&path, &io::DatasetFile::from_dataset(&ds))?;
    sayln!(out, "wrote {} samples of {}x{} to {}", ds.len(), cfg.n, cfg.k, path.display())
}

pub fn cmd_replay(args: &ReplayArgs, out: &mut dyn Write) -> Result<()> {
    let m = RunManifest::load(&args.manifest)?;
    let out_dir = match &args.out_dir {
        Some(d) => d.clone(),
        None => args.manifest.parent().map(Path::to_path_buf).unwrap_or_default(),
    };
    match m.command.as_str() {
        "train" => {
            let file: TrainFile = m.config_as()?;
            let dims = file.validate()?;
            train_from_file(&file, dims, m.inputs.get("dataset").map(PathBuf::as_path), &out_dir, args.workers, out)
        }
        "sweep" => {
            let file: SweepFile = m.config_as()?;
            sweep_from_file(&file, &out_dir, args.workers, out)
        }
        "gen-data" => {
            let file: TrainFile = m.config_as()?;
            file.validate()?;
            gen_from_file(&file, &out_dir, args.workers, out)
        }
        "fit-oracle" => {
            let file: TrainFile = m.config_as()?;
            let dims = file.validate()?;
            let inputs = FitInputs {
                dataset: m.inputs.get("dataset").map(PathBuf::as_path),
                checkpoint: m.inputs.get("checkpoint").map(PathBuf::as_path),
                out_dir: Some(&out_dir),
                workers: args.workers,
            };
            fit_from_file(&file, dims, &inputs, out)
        }
        other => Err(CliError::Validation(format!("manifest names unknown command `{other}`"))),
    }
}

pub fn cmd_constellation(args: &ConstellationArgs, out: &mut dyn Write) -> Result<()> {
    let c = Constellation::new(args.order, args.energy)?;
    match &args.out {
        Some(p) => {
            io::write_constellation_csv(p, &c)?;
            sayln!(out, "wrote {}", p.display())
        }
        None => {
            sayln!(out, "index,bits,re,im")?;
            for (i, z) in c.points().iter().enumerate() {
                let bits: String = c.bits_of(i as u32).iter().map(|&b| if b { '1' } else { '0' }).collect();
                sayln!(out, "{i},{bits},{},{}", z.re, z.im)?;
            }
            Ok(())
        }
    }
}
