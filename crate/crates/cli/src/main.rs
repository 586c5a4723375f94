//! Command-line front end: dataset synthesis, training, prediction,
//! evaluation, pole inspection, gradient checking, and PGM import.

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use dynatoms::atoms::PoleSet;
use dynatoms::gradcheck::{self, GradCheckConfig};
use dynatoms::gradients::LossMode;
use dynatoms::io::{import_pgm_dir, read_sequence, write_frame, write_sequence};
use dynatoms::metrics;
use dynatoms::model::{Model, PoleSnapshot, TrainingMeta};
use dynatoms::pipeline::{predict_next, warp, FlowField, SequenceTensor};
use dynatoms::synth::{make_dataset, Mode, SynthSpec};
use dynatoms::train::{train, TrainConfig};
use ndarray::Array2;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

#[derive(Parser)]
#[command(
    name = "dynatoms",
    about = "Pole-parameterized sparse-coding autoencoder for next-frame prediction",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset of damped-oscillation sequences.
    Synth(SynthArgs),
    /// Train pole parameters on a dataset directory.
    Train(TrainArgs),
    /// Predict the next frame of an input sequence.
    Predict(PredictArgs),
    /// Score a predicted frame against ground truth.
    Eval(EvalArgs),
    /// Dump pole positions (per-epoch if snapshots were recorded) as CSV.
    InspectPoles(InspectArgs),
    /// Compare analytic gradients against central finite differences.
    Gradcheck(GradcheckArgs),
    /// Convert a directory of 8-bit grayscale PGM frames into a sequence file.
    ImportPgm(ImportArgs),
}

#[derive(Args)]
struct SynthArgs {
    /// Output directory (created if missing).
    #[arg(long)]
    out_dir: PathBuf,
    /// Mode as `rho,psi,amplitude,phase`; repeat for multiple modes.
    #[arg(long = "mode", required = true)]
    modes: Vec<String>,
    /// Number of sequences.
    #[arg(long, default_value_t = 1)]
    n_seq: usize,
    /// Frames per sequence.
    #[arg(long, default_value_t = 9)]
    t: usize,
    #[arg(long, default_value_t = 16)]
    height: usize,
    #[arg(long, default_value_t = 16)]
    width: usize,
    /// Additive Gaussian noise level.
    #[arg(long, default_value_t = 0.0)]
    noise_sigma: f64,
    /// Half-width of the per-pixel amplitude spread.
    #[arg(long, default_value_t = 0.0)]
    amp_spread: f64,
    /// Half-width of the per-sequence mode-parameter jitter.
    #[arg(long, default_value_t = 0.0)]
    jitter: f64,
    #[arg(long, default_value_t = 42)]
    seed: u64,
}

#[derive(Args)]
struct TrainArgs {
    /// Flat key=value config file (T, lambda, lr, epochs, fista_max_iter,
    /// fista_tol, loss_mode=predict|full, trainable_lambda, num_poles,
    /// rho_min, rho_max).
    #[arg(long)]
    config: PathBuf,
    /// Dataset directory of `<name>.seq` inputs with `<name>.target.seq`
    /// next-frame targets.
    #[arg(long)]
    data: PathBuf,
    /// Output model path (JSON).
    #[arg(long)]
    out: PathBuf,
    /// Per-epoch CSV log path.
    #[arg(long)]
    log: Option<PathBuf>,
    /// Record pole positions after every epoch inside the model file.
    #[arg(long)]
    snapshot_poles: bool,
}

#[derive(Args)]
struct PredictArgs {
    #[arg(long)]
    model: PathBuf,
    /// Input sequence (frame count must match the model).
    #[arg(long)]
    input: PathBuf,
    /// Output path for the predicted frame (one-frame sequence file).
    #[arg(long)]
    out: PathBuf,
    /// Horizontal flow component (one-frame sequence file); enables warp
    /// mode together with --flow-v and --raw-frame.
    #[arg(long, requires_all = ["flow_v", "raw_frame", "warped_out"])]
    flow_u: Option<PathBuf>,
    /// Vertical flow component (one-frame sequence file).
    #[arg(long)]
    flow_v: Option<PathBuf>,
    /// Raw frame to warp with the predicted-flow semantics.
    #[arg(long)]
    raw_frame: Option<PathBuf>,
    /// Output path for the warped raw frame.
    #[arg(long)]
    warped_out: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    /// Predicted frame (one-frame sequence file).
    #[arg(long)]
    pred: PathBuf,
    /// Ground-truth frame (one-frame sequence file).
    #[arg(long)]
    truth: PathBuf,
    /// Optional CSV output path; scores always print to stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct InspectArgs {
    #[arg(long)]
    model: PathBuf,
    /// CSV output path.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct GradcheckArgs {
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long, default_value_t = 24)]
    trials: usize,
    #[arg(long, default_value_t = 8)]
    max_t: usize,
    #[arg(long, default_value_t = 2)]
    max_poles: usize,
    #[arg(long, default_value_t = 4)]
    max_pixels: usize,
    #[arg(long, default_value_t = 0.05)]
    lambda: f64,
    /// Negative control: corrupt the analytic gradient so the check fails.
    #[arg(long)]
    corrupt: bool,
}

#[derive(Args)]
struct ImportArgs {
    /// Directory of .pgm frames (sorted by file name).
    #[arg(long)]
    dir: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value = "gray")]
    channel_id: String,
}

fn main() {
    if let Err(e) = run() {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}

fn run() -> Result<()> {
    init_thread_pool()?;
    match Cli::parse().command {
        Command::Synth(a) => cmd_synth(a),
        Command::Train(a) => cmd_train(a),
        Command::Predict(a) => cmd_predict(a),
        Command::Eval(a) => cmd_eval(a),
        Command::InspectPoles(a) => cmd_inspect(a),
        Command::Gradcheck(a) => cmd_gradcheck(a),
        Command::ImportPgm(a) => cmd_import(a),
    }
}

/// DYAN_THREADS caps the worker count (0 or unset = automatic).
fn init_thread_pool() -> Result<()> {
    if let Ok(v) = std::env::var("DYAN_THREADS") {
        let n: usize = v
            .trim()
            .parse()
            .map_err(|_| anyhow!("DYAN_THREADS must be a non-negative integer, got '{v}'"))?;
        if n > 0 {
            rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build_global()
                .context("building thread pool")?;
        }
    }
    Ok(())
}

fn parse_mode(s: &str) -> Result<Mode<f64>> {
    let parts: Vec<&str> = s.split(',').collect();
    if parts.len() != 4 {
        bail!("mode '{s}' must be rho,psi,amplitude,phase");
    }
    let nums: Vec<f64> = parts
        .iter()
        .map(|p| p.trim().parse::<f64>().map_err(|_| anyhow!("invalid number '{p}' in mode")))
        .collect::<Result<_>>()?;
    Ok(Mode { rho: nums[0], psi: nums[1], amplitude: nums[2], phase: nums[3] })
}

fn cmd_synth(a: SynthArgs) -> Result<()> {
    let modes: Vec<Mode<f64>> = a.modes.iter().map(|m| parse_mode(m)).collect::<Result<_>>()?;
    let template = SynthSpec {
        modes,
        t: a.t,
        height: a.height,
        width: a.width,
        noise_sigma: a.noise_sigma,
        amp_spread: a.amp_spread,
        seed: a.seed,
    };
    std::fs::create_dir_all(&a.out_dir)
        .with_context(|| format!("creating {}", a.out_dir.display()))?;
    let dataset = make_dataset(a.n_seq, &template, a.jitter, a.seed)?;
    for (i, sample) in dataset.iter().enumerate() {
        write_sequence(a.out_dir.join(format!("{i:04}.seq")), &sample.seq)?;
        let frame = to_frame(&sample.truth, a.height, a.width);
        write_frame(a.out_dir.join(format!("{i:04}.target.seq")), &frame, "target")?;
    }
    println!("wrote {} sequence/target pairs to {}", dataset.len(), a.out_dir.display());
    Ok(())
}

fn to_frame(row: &Array2<f64>, h: usize, w: usize) -> Array2<f64> {
    Array2::from_shape_fn((h, w), |(r, c)| row[[0, r * w + c]])
}

/// Key=value config with '#' comments.
struct TrainFileConfig {
    t: usize,
    num_poles: usize,
    rho_min: f64,
    rho_max: f64,
    train: TrainConfig<f64>,
}

fn parse_train_config(path: &Path) -> Result<TrainFileConfig> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading config {}", path.display()))?;
    let mut cfg = TrainFileConfig {
        t: 9,
        num_poles: 40,
        rho_min: 0.85,
        rho_max: 1.15,
        train: TrainConfig::default(),
    };
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| anyhow!("config line {}: expected key=value", lineno + 1))?;
        let (key, value) = (key.trim(), value.trim());
        let bad = || anyhow!("config line {}: invalid value '{value}' for {key}", lineno + 1);
        match key {
            "T" | "t" => cfg.t = value.parse().map_err(|_| bad())?,
            "num_poles" => cfg.num_poles = value.parse().map_err(|_| bad())?,
            "rho_min" => cfg.rho_min = value.parse().map_err(|_| bad())?,
            "rho_max" => cfg.rho_max = value.parse().map_err(|_| bad())?,
            "lambda" => cfg.train.lambda = value.parse().map_err(|_| bad())?,
            "lr" => cfg.train.lr = value.parse().map_err(|_| bad())?,
            "epochs" => cfg.train.epochs = value.parse().map_err(|_| bad())?,
            "fista_max_iter" => cfg.train.fista_max_iter = value.parse().map_err(|_| bad())?,
            "fista_tol" => cfg.train.fista_tol = value.parse().map_err(|_| bad())?,
            "loss_mode" => {
                cfg.train.loss_mode = match value {
                    "predict" => LossMode::PredictOnly,
                    "full" => LossMode::Full,
                    _ => bail!("config line {}: loss_mode must be predict or full", lineno + 1),
                }
            }
            "trainable_lambda" => {
                cfg.train.trainable_lambda = value.parse().map_err(|_| bad())?
            }
            _ => bail!("config line {}: unknown key '{key}'", lineno + 1),
        }
    }
    Ok(cfg)
}

fn load_dataset(dir: &Path, t: usize) -> Result<Vec<(SequenceTensor<f64>, Array2<f64>)>> {
    let mut inputs: Vec<PathBuf> = std::fs::read_dir(dir)
        .with_context(|| format!("reading dataset directory {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            let name = p.file_name().and_then(|n| n.to_str()).unwrap_or("");
            name.ends_with(".seq") && !name.ends_with(".target.seq")
        })
        .collect();
    inputs.sort();
    if inputs.is_empty() {
        bail!("dataset directory {} contains no .seq inputs", dir.display());
    }
    let mut out = Vec::with_capacity(inputs.len());
    for input in inputs {
        let seq: SequenceTensor<f64> = read_sequence(&input)?;
        if seq.t() != t {
            bail!(
                "{}: expected {t} frames per the config, found {}",
                input.display(),
                seq.t()
            );
        }
        let name = input.file_name().and_then(|n| n.to_str()).unwrap();
        let target_path = input.with_file_name(name.replace(".seq", ".target.seq"));
        let target_seq: SequenceTensor<f64> = read_sequence(&target_path)
            .with_context(|| format!("loading target for {}", input.display()))?;
        if target_seq.t() != 1
            || target_seq.height() != seq.height()
            || target_seq.width() != seq.width()
        {
            bail!("{}: target shape does not match input", target_path.display());
        }
        out.push((seq, target_seq.pixels().to_owned()));
    }
    Ok(out)
}

fn cmd_train(a: TrainArgs) -> Result<()> {
    let cfg = parse_train_config(&a.config)?;
    let dataset = load_dataset(&a.data, cfg.t)?;
    let poles = PoleSet::init_ring(cfg.num_poles, cfg.rho_min, cfg.rho_max)?;
    let mut train_cfg = cfg.train.clone();
    train_cfg.snapshot_poles = a.snapshot_poles;

    let outcome = train(poles, &dataset, &train_cfg)?;

    let mut csv = String::from("epoch,loss,mean_sparsity,seconds\n");
    for s in &outcome.stats {
        writeln!(csv, "{},{:.17e},{:.6},{:.3}", s.epoch, s.loss, s.mean_sparsity, s.seconds)?;
        println!(
            "epoch {:>4}  loss {:.6e}  sparsity {:.4}  {:.2}s",
            s.epoch, s.loss, s.mean_sparsity, s.seconds
        );
    }
    if let Some(log) = &a.log {
        std::fs::write(log, &csv).with_context(|| format!("writing {}", log.display()))?;
    }

    let mut model = Model::new(&outcome.poles, cfg.t, outcome.lambda, train_cfg.trainable_lambda);
    model.training = Some(TrainingMeta {
        epochs: train_cfg.epochs,
        final_loss: outcome.stats.last().map(|s| s.loss).unwrap_or(f64::NAN),
    });
    model.snapshots = outcome
        .snapshots
        .iter()
        .map(|(epoch, ps)| PoleSnapshot {
            epoch: *epoch,
            rho: ps.rho().to_vec(),
            psi: ps.psi().to_vec(),
        })
        .collect();
    model.save(&a.out)?;
    println!("model written to {}", a.out.display());
    Ok(())
}

fn read_frame(path: &Path) -> Result<Array2<f64>> {
    let seq: SequenceTensor<f64> = read_sequence(path)?;
    if seq.t() != 1 {
        bail!("{}: expected a one-frame file, found {} frames", path.display(), seq.t());
    }
    Ok(seq.frame(0))
}

fn cmd_predict(a: PredictArgs) -> Result<()> {
    let model = Model::load(&a.model)?;
    let seq: SequenceTensor<f64> = read_sequence(&a.input)?;
    if seq.t() != model.t {
        bail!(
            "frame count mismatch: model expects {} frames, input {} has {}",
            model.t,
            a.input.display(),
            seq.t()
        );
    }
    let poles = model.pole_set()?;
    let pred = predict_next(&poles, &seq, model.lambda)?;
    write_frame(&a.out, &pred, seq.channel_id())?;
    println!("predicted frame written to {}", a.out.display());

    if let (Some(fu), Some(fv), Some(raw), Some(wout)) =
        (&a.flow_u, &a.flow_v, &a.raw_frame, &a.warped_out)
    {
        let flow = FlowField::new(read_frame(fu)?, read_frame(fv)?)?;
        let raw = read_frame(raw)?;
        let warped = warp(raw.view(), &flow)?;
        write_frame(wout, &warped, "warped")?;
        println!("warped frame written to {}", wout.display());
    }
    Ok(())
}

fn cmd_eval(a: EvalArgs) -> Result<()> {
    let pred = read_frame(&a.pred)?;
    let truth = read_frame(&a.truth)?;
    let report = metrics::score(pred.view(), truth.view())?;
    let csv = format!(
        "mse,psnr,ssim\n{:.17e},{:.12},{:.12}\n",
        report.mse, report.psnr, report.ssim
    );
    print!("{csv}");
    if let Some(out) = &a.out {
        std::fs::write(out, &csv).with_context(|| format!("writing {}", out.display()))?;
    }
    Ok(())
}

fn cmd_inspect(a: InspectArgs) -> Result<()> {
    let model = Model::load(&a.model)?;
    let mut csv = String::from("epoch,pole_index,rho,psi,re,im\n");
    let mut push_rows = |epoch: usize, rho: &[f64], psi: &[f64]| -> Result<()> {
        for (i, (&r, &p)) in rho.iter().zip(psi).enumerate() {
            writeln!(
                csv,
                "{epoch},{i},{:.17e},{:.17e},{:.17e},{:.17e}",
                r,
                p,
                r * p.cos(),
                r * p.sin()
            )?;
        }
        Ok(())
    };
    if model.snapshots.is_empty() {
        eprintln!("warning: no per-epoch snapshots in model; emitting final poles only");
        let epoch = model.training.as_ref().map(|t| t.epochs).unwrap_or(0);
        push_rows(epoch, &model.rho, &model.psi)?;
    } else {
        for snap in &model.snapshots {
            push_rows(snap.epoch, &snap.rho, &snap.psi)?;
        }
    }
    std::fs::write(&a.out, &csv).with_context(|| format!("writing {}", a.out.display()))?;
    println!("pole table written to {}", a.out.display());
    Ok(())
}

fn cmd_gradcheck(a: GradcheckArgs) -> Result<()> {
    let cfg = GradCheckConfig {
        seed: a.seed,
        trials: a.trials,
        max_t: a.max_t,
        max_poles: a.max_poles,
        max_pixels: a.max_pixels,
        lambda: a.lambda,
        epsilon: 1e-5,
        corrupt: a.corrupt,
    };
    let report = gradcheck::run(&cfg)?;
    println!(
        "gradcheck: {} trials scored, {} skipped, max relative error {:.3e} (threshold {:.0e})",
        report.trials_run,
        report.trials_skipped,
        report.max_rel_err,
        gradcheck::GRADCHECK_TOL
    );
    if report.pass {
        println!("PASS");
        Ok(())
    } else {
        println!("FAIL");
        bail!("gradient check failed");
    }
}

fn cmd_import(a: ImportArgs) -> Result<()> {
    let seq: SequenceTensor<f64> = import_pgm_dir(&a.dir, &a.channel_id)?;
    write_sequence(&a.out, &seq)?;
    println!(
        "imported {} frames ({}x{}) to {}",
        seq.t(),
        seq.height(),
        seq.width(),
        a.out.display()
    );
    Ok(())
}
