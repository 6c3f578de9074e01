//! Command-line driver: train denoiser models, run BER sweep plans, build
//! gain tables, export residual CDFs, and sweep the normality penalty
//! weight. Configs are TOML files; progress goes to standard error and
//! results to files (or standard output where noted).

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use bpcnn::bp::BpDecoder;
use bpcnn::channel::{snr_db_to_sigma2, CovarianceFactor, NoiseKind, NoiseModel};
use bpcnn::cnn::io::{load_model, save_model};
use bpcnn::code::{GeneratorMatrix, ParityCheckMatrix};
use bpcnn::harness::{
    emit_csv, emit_plot_data, gain_vs_eta, run_plan_with, simulate_blocks, ExperimentPlan,
};
use bpcnn::receiver::{
    collect_residuals, export_residual_cdf, measure_sigma_r2, IterativeReceiver, ReceiverConfig,
    ReceiverMode,
};
use bpcnn::trainer::{run_lambda_sweep_with, train_with, write_record_csv, TrainingConfig};

#[derive(Parser)]
#[command(
    name = "bpcnn",
    version,
    about = "Belief-propagation decoding with a trained convolutional denoiser"
)]
struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Directory for output files; created if missing.
    #[arg(long, global = true, default_value = ".")]
    out_dir: PathBuf,
    /// Override the seed in the config file.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a denoiser model.
    Train(TrainArgs),
    /// Run a BER sweep plan; writes CSV and plot data.
    Ber(BerArgs),
    /// Run a BER sweep plan and report SNR gains at a target BER.
    Gain(GainArgs),
    /// Export residual empirical CDFs for trained models on a matched
    /// stream.
    Cdf(CdfArgs),
    /// Train one model per penalty weight on matched data.
    LambdaSweep(LambdaSweepArgs),
}

#[derive(Args)]
struct TrainArgs {
    /// Training job file (TOML).
    #[arg(long)]
    config: PathBuf,
}

#[derive(Args)]
struct BerArgs {
    /// Experiment plan file (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Override the plan's bit budget per point.
    #[arg(long)]
    bits: Option<u64>,
    /// Report CSV file name.
    #[arg(long, default_value = "ber.csv")]
    csv_out: PathBuf,
    /// Plot data file name.
    #[arg(long, default_value = "ber.dat")]
    plot_out: PathBuf,
}

#[derive(Args)]
struct GainArgs {
    /// Experiment plan file (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Override the plan's bit budget per point.
    #[arg(long)]
    bits: Option<u64>,
    /// Variant label of the reference curve.
    #[arg(long)]
    baseline: String,
    /// Variant label of the improved curve.
    #[arg(long)]
    enhanced: String,
    /// BER at which to interpolate the gain.
    #[arg(long, default_value_t = 1e-3)]
    target_ber: f64,
    /// Also save the underlying sweep report.
    #[arg(long)]
    report_csv: Option<PathBuf>,
}

#[derive(Args)]
struct CdfArgs {
    /// CDF job file (TOML).
    #[arg(long)]
    config: PathBuf,
}

#[derive(Args)]
struct LambdaSweepArgs {
    /// Sweep job file (TOML).
    #[arg(long)]
    config: PathBuf,
}

/// Training job file: channel, trainer settings, output locations.
#[derive(serde::Deserialize)]
struct TrainJob {
    /// Parity-check matrix file (alist text); built-in code when absent.
    #[serde(default)]
    code_file: Option<PathBuf>,
    channel: NoiseKind,
    training: TrainingConfig,
    /// Output model file (relative paths land in --out-dir).
    model_out: PathBuf,
    /// Optional CSV of validation checks.
    #[serde(default)]
    record_out: Option<PathBuf>,
}

/// CDF job file: one matched stream, several models to compare on it.
#[derive(serde::Deserialize)]
struct CdfJob {
    #[serde(default)]
    code_file: Option<PathBuf>,
    channel: NoiseKind,
    snr_db: f64,
    /// Blocks in the matched stream.
    blocks: usize,
    /// BP iterations per stage.
    bp_iters: usize,
    /// Denoiser passes in the receiver.
    #[serde(default = "default_one")]
    cnn_passes: usize,
    /// Denoiser stage to sample, 1-based.
    #[serde(default = "default_one")]
    stage: usize,
    /// Blocks for the residual-power premeasurement.
    #[serde(default = "default_measure_blocks")]
    measure_blocks: usize,
    seed: u64,
    models: Vec<CdfModelSpec>,
}

fn default_one() -> usize {
    1
}

fn default_measure_blocks() -> usize {
    200
}

#[derive(serde::Deserialize)]
struct CdfModelSpec {
    /// Label; also names the output file `<label>.cdf`.
    label: String,
    mode: ReceiverMode,
    model_file: PathBuf,
}

/// Penalty-weight sweep job file.
#[derive(serde::Deserialize)]
struct LambdaSweepJob {
    #[serde(default)]
    code_file: Option<PathBuf>,
    channel: NoiseKind,
    training: TrainingConfig,
    lambdas: Vec<f64>,
    /// Each trained model lands in `<model_out_prefix><lambda>.bin`.
    #[serde(default = "default_model_prefix")]
    model_out_prefix: String,
    /// Metrics CSV; standard output when absent.
    #[serde(default)]
    metrics_out: Option<PathBuf>,
}

fn default_model_prefix() -> String {
    "denoiser_lambda_".to_string()
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    if let Some(threads) = cli.threads {
        bpcnn::init_thread_pool(threads).context("thread pool already initialized")?;
    }
    fs::create_dir_all(&cli.out_dir)
        .with_context(|| format!("creating output directory {}", cli.out_dir.display()))?;
    match &cli.command {
        Command::Train(args) => cmd_train(&cli, args),
        Command::Ber(args) => cmd_ber(&cli, args),
        Command::Gain(args) => cmd_gain(&cli, args),
        Command::Cdf(args) => cmd_cdf(&cli, args),
        Command::LambdaSweep(args) => cmd_lambda_sweep(&cli, args),
    }
}

fn cmd_train(cli: &Cli, args: &TrainArgs) -> Result<()> {
    let mut job: TrainJob = read_toml(&args.config)?;
    if let Some(seed) = cli.seed {
        job.training.seed = seed;
    }
    let h = load_code(&job.code_file)?;
    let generator = GeneratorMatrix::derive(&h)?;
    let decoder = BpDecoder::new(&h);
    let channel = NoiseModel {
        kind: job.channel,
        block_len: decoder.num_vars(),
    };

    eprintln!(
        "training on {}: {} train / {} val pairs, batch {}",
        channel.kind.label(),
        job.training.blocks_train,
        job.training.blocks_val,
        job.training.batch_size
    );
    let start = Instant::now();
    let (model, record) = train_with(&job.training, &generator, &decoder, &channel, |c| {
        eprintln!("  iteration {:>6}: validation loss {:.6}", c.iteration, c.val_loss);
    })?;
    eprintln!(
        "stopped after {} iterations in {:.1} s ({:?}); best validation loss {:.6}",
        record.total_iterations,
        start.elapsed().as_secs_f64(),
        record.stop_reason,
        record.best().val_loss
    );

    let model_path = resolve_out(&cli.out_dir, &job.model_out);
    save_model(&model, &model_path)?;
    eprintln!("wrote {}", model_path.display());
    if let Some(record_out) = &job.record_out {
        let path = resolve_out(&cli.out_dir, record_out);
        let mut f = fs::File::create(&path)?;
        write_record_csv(&record, &mut f)?;
        eprintln!("wrote {}", path.display());
    }
    Ok(())
}

fn load_plan(cli: &Cli, config: &Path, bits: Option<u64>) -> Result<ExperimentPlan> {
    let mut plan: ExperimentPlan = read_toml(config)?;
    if let Some(seed) = cli.seed {
        plan.seed = seed;
    }
    if let Some(bits) = bits {
        plan.min_info_bits = bits;
    }
    Ok(plan)
}

fn run_plan_logged(plan: &ExperimentPlan) -> Result<bpcnn::harness::BerReport> {
    let total = plan.channels.len() * plan.variants.len() * plan.snrs_db.len();
    let mut done = 0usize;
    let report = run_plan_with(plan, |p| {
        done += 1;
        eprintln!(
            "[{done}/{total}] {} eta={} snr={} dB: ber {:.3e} ({} errors / {} bits)",
            p.variant,
            p.eta,
            p.snr_db,
            p.ber(),
            p.bit_errors,
            p.bits
        );
    })?;
    Ok(report)
}

fn cmd_ber(cli: &Cli, args: &BerArgs) -> Result<()> {
    let plan = load_plan(cli, &args.config, args.bits)?;
    let report = run_plan_logged(&plan)?;

    let csv_path = resolve_out(&cli.out_dir, &args.csv_out);
    let mut csv = fs::File::create(&csv_path)?;
    emit_csv(&report, &mut csv)?;
    eprintln!("wrote {}", csv_path.display());

    let plot_path = resolve_out(&cli.out_dir, &args.plot_out);
    let mut plot = fs::File::create(&plot_path)?;
    emit_plot_data(&report, &mut plot)?;
    eprintln!("wrote {}", plot_path.display());
    Ok(())
}

fn cmd_gain(cli: &Cli, args: &GainArgs) -> Result<()> {
    let plan = load_plan(cli, &args.config, args.bits)?;
    let report = run_plan_logged(&plan)?;
    if let Some(report_csv) = &args.report_csv {
        let path = resolve_out(&cli.out_dir, report_csv);
        let mut f = fs::File::create(&path)?;
        emit_csv(&report, &mut f)?;
        eprintln!("wrote {}", path.display());
    }

    println!("eta,baseline_snr_db,enhanced_snr_db,gain_db");
    for entry in gain_vs_eta(&report, &args.baseline, &args.enhanced, args.target_ber) {
        let fmt = |v: Option<f64>| v.map_or_else(|| "unmeasured".to_string(), |x| x.to_string());
        println!(
            "{},{},{},{}",
            entry.eta,
            fmt(entry.baseline_snr_db),
            fmt(entry.enhanced_snr_db),
            fmt(entry.gain_db)
        );
    }
    Ok(())
}

fn cmd_cdf(cli: &Cli, args: &CdfArgs) -> Result<()> {
    let mut job: CdfJob = read_toml(&args.config)?;
    if let Some(seed) = cli.seed {
        job.seed = seed;
    }
    let h = load_code(&job.code_file)?;
    let generator = GeneratorMatrix::derive(&h)?;
    let decoder = BpDecoder::new(&h);
    let channel = NoiseModel {
        kind: job.channel,
        block_len: decoder.num_vars(),
    };
    let factor = CovarianceFactor::for_model(&channel)?;
    let sigma2 = snr_db_to_sigma2(job.snr_db, 1.0);
    let bp_iters = vec![job.bp_iters; job.cnn_passes + 1];

    eprintln!(
        "sampling residuals on {} at {} dB over {} matched blocks",
        channel.kind.label(),
        job.snr_db,
        job.blocks
    );
    let stream = simulate_blocks(&generator, &factor, sigma2, job.blocks, job.seed, 0);
    let measure = simulate_blocks(
        &generator,
        &factor,
        sigma2,
        job.measure_blocks,
        job.seed,
        1 << 31,
    );

    for spec in &job.models {
        let model = load_model(&spec.model_file)?;
        let sigma_r2 = measure_sigma_r2(
            &decoder,
            &generator,
            &model,
            spec.mode,
            sigma2,
            &bp_iters,
            &measure,
        )?;
        let config = ReceiverConfig {
            mode: spec.mode,
            sigma2,
            bp_iters: bp_iters.clone(),
            sigma_r2,
        };
        let receiver = IterativeReceiver::new(&decoder, &generator, Some(&model), config)?;
        let residuals = collect_residuals(&receiver, &stream, job.stage)?;
        let cdf = export_residual_cdf(&residuals)?;
        let path = resolve_out(&cli.out_dir, Path::new(&format!("{}.cdf", spec.label)));
        let mut f = fs::File::create(&path)?;
        cdf.write_to(&mut f)?;
        eprintln!(
            "{}: normality statistic {:.6e}, max deviation from fitted Gaussian {:.6}, wrote {}",
            spec.label,
            cdf.jb_statistic(),
            cdf.max_gaussian_deviation(),
            path.display()
        );
    }
    Ok(())
}

fn cmd_lambda_sweep(cli: &Cli, args: &LambdaSweepArgs) -> Result<()> {
    let mut job: LambdaSweepJob = read_toml(&args.config)?;
    if let Some(seed) = cli.seed {
        job.training.seed = seed;
    }
    let h = load_code(&job.code_file)?;
    let generator = GeneratorMatrix::derive(&h)?;
    let decoder = BpDecoder::new(&h);
    let channel = NoiseModel {
        kind: job.channel,
        block_len: decoder.num_vars(),
    };

    eprintln!(
        "sweeping {} penalty weights on {} (matched data)",
        job.lambdas.len(),
        channel.kind.label()
    );
    let entries = run_lambda_sweep_with(
        &job.training,
        &job.lambdas,
        &generator,
        &decoder,
        &channel,
        |lambda, c| {
            eprintln!(
                "  lambda {lambda}: iteration {:>6}, validation loss {:.6}",
                c.iteration, c.val_loss
            );
        },
    )?;

    let mut metrics = String::from("lambda,val_residual_power,val_jb_statistic,iterations\n");
    for entry in &entries {
        let path = resolve_out(
            &cli.out_dir,
            Path::new(&format!("{}{}.bin", job.model_out_prefix, entry.lambda)),
        );
        save_model(&entry.model, &path)?;
        eprintln!("lambda {}: wrote {}", entry.lambda, path.display());
        metrics.push_str(&format!(
            "{},{},{},{}\n",
            entry.lambda,
            entry.val_residual_power,
            entry.val_jb_statistic,
            entry.record.total_iterations
        ));
    }
    match &job.metrics_out {
        Some(out) => {
            let path = resolve_out(&cli.out_dir, out);
            fs::write(&path, metrics)?;
            eprintln!("wrote {}", path.display());
        }
        None => print!("{metrics}"),
    }
    Ok(())
}

fn read_toml<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path)
        .with_context(|| format!("reading config {}", path.display()))?;
    toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
}

fn load_code(code_file: &Option<PathBuf>) -> Result<ParityCheckMatrix> {
    match code_file {
        Some(path) => {
            let text = fs::read_to_string(path)
                .with_context(|| format!("reading code file {}", path.display()))?;
            Ok(ParityCheckMatrix::parse_alist(&text)?)
        }
        None => Ok(bpcnn::code::ldpc_576_432()),
    }
}

/// Relative output paths land in the output directory; absolute paths are
/// used as given.
fn resolve_out(out_dir: &Path, path: &Path) -> PathBuf {
    if path.is_absolute() {
        path.to_path_buf()
    } else {
        out_dir.join(path)
    }
}
