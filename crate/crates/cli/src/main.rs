use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use apexfas::apex::{apex_frame, DEFAULT_SIGMA};
use apexfas::metrics::{evaluate_transfer, parse_scores_csv, roc_curve, roc_to_csv, roc_to_svg, scores_to_csv};
use apexfas::segment::segment_apexes;
use apexfas::synth::{generate_dataset, generate_videos, SynthConfig};
use apexfas::tensor_io::{
    load_manifest, read_video, write_frame_image, write_manifest, write_video, DatasetManifest, Label,
    ManifestEntry, Split,
};
use apexfas::train::{
    run_training, score_set, score_videos, Augmentation, LstmModel, Mode, MlpModel, TrainConfig, TrainedModels,
    VideoScore,
};
use apexfas::{Error, Result};
use clap::{Args, Parser, Subcommand};
use log::info;

const MLP_CHECKPOINT: &str = "mlp.afm";
const LSTM_CHECKPOINT: &str = "lstm.afm";

/// Gaussian apex frames, pseudo-label semi-supervised anti-spoofing, and
/// biometric error metrics.
#[derive(Debug, Parser)]
#[command(name = "apexfas", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Condense a video into its apex frame (AFV1 plus a PGM/PPM preview).
    Apex(ApexArgs),
    /// Write per-segment apex frames and an unlabeled manifest.
    Segments(SegmentsArgs),
    /// Generate a synthetic multi-domain live/spoof dataset.
    Synth(SynthArgs),
    /// Train the classifier (and the LSTM head for ssl+lstm).
    Train(TrainArgs),
    /// Calibrate the EER threshold on a source set and report HTER/AUC on a target.
    Eval(EvalArgs),
    /// ROC curve CSV and SVG from a scores CSV.
    Roc(RocArgs),
    /// Apex-frame throughput on a synthetic video.
    Bench(BenchArgs),
}

#[derive(Debug, Args)]
struct ApexArgs {
    /// Input AFV1 video.
    #[arg(long)]
    video: PathBuf,
    /// Gaussian width in frames.
    #[arg(long, default_value_t = DEFAULT_SIGMA)]
    sigma: f64,
    /// Output AFV1 file; the preview is written next to it as .pgm or .ppm.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct SegmentsArgs {
    #[arg(long)]
    video: PathBuf,
    /// Comma-separated temporal lengths.
    #[arg(long, value_delimiter = ',', default_value = "50,80")]
    t: Vec<usize>,
    #[arg(long, default_value_t = DEFAULT_SIGMA)]
    sigma: f64,
    #[arg(long)]
    out_dir: PathBuf,
    /// Domain tag written to the unlabeled manifest.
    #[arg(long, default_value = "unlabeled")]
    domain: String,
}

#[derive(Debug, Args)]
struct SynthArgs {
    #[arg(long)]
    out_dir: PathBuf,
    /// key = value config file; flags below override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Videos per class per domain [default: 20]
    #[arg(long)]
    num_videos: Option<usize>,
    /// Frames per video [default: 120]
    #[arg(long)]
    frames: Option<usize>,
    /// Square frame size in pixels [default: 32]
    #[arg(long)]
    size: Option<usize>,
    /// Domains as name:background:noise:period;... [default: A:0.3:0.05:6;B:0.42:0.09:6]
    #[arg(long)]
    domains: Option<String>,
    /// Spoof texture amplitude [default: 0.08]
    #[arg(long)]
    texture_amplitude: Option<f64>,
    /// Spoof brightness flicker [default: 0.08]
    #[arg(long)]
    flicker: Option<f64>,
    /// Opposite brightness ramps for live and spoof [default: 0]
    #[arg(long)]
    temporal_drift: Option<f64>,
    /// [default: 7]
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Args)]
struct TrainFlags {
    /// Weight of the unlabeled loss.
    #[arg(long, default_value_t = 1.5)]
    lambda: f64,
    /// Pseudo-label confidence threshold.
    #[arg(long, default_value_t = 0.9)]
    tau: f64,
    #[arg(long, default_value_t = DEFAULT_SIGMA)]
    sigma: f64,
    /// Temporal lengths for the unlabeled pool; the first also feeds the LSTM.
    #[arg(long, value_delimiter = ',', default_value = "50,80")]
    t: Vec<usize>,
    /// Adam learning rate.
    #[arg(long, default_value_t = 0.0001)]
    lr: f64,
    /// Validate every this many steps.
    #[arg(long, default_value_t = 30)]
    val_every: usize,
    /// Validations without improvement before stopping.
    #[arg(long, default_value_t = 5)]
    patience: usize,
    /// Validation-loss drop that counts as improvement when AUC ties.
    #[arg(long, default_value_t = 1e-3)]
    min_delta: f64,
    #[arg(long, default_value_t = 32)]
    batch_labeled: usize,
    #[arg(long, default_value_t = 32)]
    batch_unlabeled: usize,
    #[arg(long, default_value_t = 3000)]
    max_steps: usize,
    /// Supervised-only steps before pseudo-labeling starts.
    #[arg(long, default_value_t = 300)]
    warmup: usize,
    /// Feature grid size (D = grid * grid).
    #[arg(long, default_value_t = 16)]
    grid: usize,
    /// Hidden width of the classifier and the LSTM.
    #[arg(long, default_value_t = 100)]
    hidden: usize,
    /// Random rotation/translation of labeled apex frames.
    #[arg(long)]
    augment: bool,
    #[arg(long, default_value_t = 10.0)]
    max_rotation: f64,
    #[arg(long, default_value_t = 4)]
    max_translation: i64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

impl TrainFlags {
    fn config(&self) -> TrainConfig {
        TrainConfig {
            lambda: self.lambda,
            confidence_threshold: self.tau,
            sigma: self.sigma,
            temporal_lengths: self.t.clone(),
            learning_rate: self.lr,
            validation_frequency: self.val_every,
            early_stop_patience: self.patience,
            early_stop_min_delta: self.min_delta,
            batch_size_labeled: self.batch_labeled,
            batch_size_unlabeled: self.batch_unlabeled,
            max_steps: self.max_steps,
            warmup_steps: self.warmup,
            seed: self.seed,
            augmentation: Augmentation {
                enabled: self.augment,
                max_rotation_deg: self.max_rotation,
                max_translation_px: self.max_translation,
            },
            grid: self.grid,
            hidden: self.hidden,
        }
    }
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[arg(long)]
    manifest: PathBuf,
    /// supervised | ssl | ssl+lstm
    #[arg(long, default_value = "ssl")]
    mode: Mode,
    /// Receives mlp.afm, lstm.afm, report.csv and lstm_report.csv.
    #[arg(long)]
    out_dir: PathBuf,
    #[command(flatten)]
    flags: TrainFlags,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[arg(long)]
    source_manifest: PathBuf,
    #[arg(long)]
    target_manifest: PathBuf,
    /// supervised | ssl | ssl+lstm
    #[arg(long, default_value = "ssl")]
    mode: Mode,
    /// Directory holding the checkpoints written by `train`.
    #[arg(long)]
    checkpoint_dir: PathBuf,
    /// Manifest split scored on both sides: train | val | test | all.
    #[arg(long, default_value = "test")]
    split: String,
    /// key=value report file.
    #[arg(long)]
    out: PathBuf,
    /// Also write source_scores.csv and target_scores.csv here.
    #[arg(long)]
    scores_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct RocArgs {
    /// CSV with `score` and `label` columns.
    #[arg(long)]
    scores_csv: PathBuf,
    #[arg(long)]
    out_svg: PathBuf,
    #[arg(long)]
    out_csv: PathBuf,
}

#[derive(Debug, Args)]
struct BenchArgs {
    #[arg(long, default_value_t = 120)]
    frames: usize,
    /// Square frame size in pixels.
    #[arg(long, default_value_t = 32)]
    size: usize,
    /// Timed repetitions (at least 3).
    #[arg(long, default_value_t = 5)]
    reps: usize,
    #[arg(long, default_value_t = DEFAULT_SIGMA)]
    sigma: f64,
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::Io {
        path: dir.to_path_buf(),
        source: e,
    })
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn preview_path(out: &Path, channels: usize) -> PathBuf {
    out.with_extension(if channels == 1 { "pgm" } else { "ppm" })
}

fn cmd_apex(args: &ApexArgs) -> Result<()> {
    println!("video={}\nsigma={}\nout={}", args.video.display(), args.sigma, args.out.display());
    let video = read_video(&args.video)?;
    let apex = apex_frame(&video, args.sigma)?;
    let preview = preview_path(&args.out, apex.frame.channels());
    write_video(&apex.to_video(), &args.out)?;
    write_frame_image(&apex.frame, &preview)?;
    println!("wrote {} and {}", args.out.display(), preview.display());
    Ok(())
}

fn cmd_segments(args: &SegmentsArgs) -> Result<()> {
    let lengths: Vec<String> = args.t.iter().map(|t| t.to_string()).collect();
    println!(
        "video={}\nt={}\nsigma={}\nout_dir={}",
        args.video.display(),
        lengths.join(","),
        args.sigma,
        args.out_dir.display()
    );
    if args.t.is_empty() || args.t.contains(&0) {
        return Err(Error::InvalidParameter("temporal lengths must be positive".into()));
    }
    let video = read_video(&args.video)?;
    create_dir(&args.out_dir)?;
    let mut manifest = DatasetManifest {
        base_dir: args.out_dir.clone(),
        entries: Vec::new(),
    };
    for &t in &args.t {
        for apex in segment_apexes(&video, t, args.sigma)? {
            let name = format!("{}_{}_{}_{}.afv", video.id(), t, apex.segment_start, apex.segment_end);
            write_video(&apex.to_video(), args.out_dir.join(&name))?;
            manifest.entries.push(ManifestEntry {
                video_path: PathBuf::from(name),
                label: Label::Unlabeled,
                split: Split::Train,
                domain_tag: args.domain.clone(),
            });
        }
    }
    let path = args.out_dir.join("unlabeled_manifest.csv");
    write_manifest(&manifest, &path)?;
    println!("wrote {} segment apexes and {}", manifest.entries.len(), path.display());
    Ok(())
}

fn cmd_synth(args: &SynthArgs) -> Result<()> {
    let mut config = match &args.config {
        Some(path) => SynthConfig::from_kv(&read_text(path)?)?,
        None => SynthConfig::default(),
    };
    let overrides: [(&str, Option<String>); 8] = [
        ("num_videos", args.num_videos.map(|v| v.to_string())),
        ("frames", args.frames.map(|v| v.to_string())),
        ("size", args.size.map(|v| v.to_string())),
        ("domains", args.domains.clone()),
        ("texture_amplitude", args.texture_amplitude.map(|v| v.to_string())),
        ("flicker", args.flicker.map(|v| v.to_string())),
        ("temporal_drift", args.temporal_drift.map(|v| v.to_string())),
        ("seed", args.seed.map(|v| v.to_string())),
    ];
    for (key, value) in overrides {
        if let Some(value) = value {
            config.set(key, &value).map_err(Error::InvalidParameter)?;
        }
    }
    config.validate()?;
    println!("{config}\nout_dir = {}", args.out_dir.display());
    let manifest = generate_dataset(&config, &args.out_dir)?;
    println!(
        "wrote {} videos and {}",
        manifest.entries.len(),
        args.out_dir.join("manifest.csv").display()
    );
    Ok(())
}

fn cmd_train(args: &TrainArgs) -> Result<()> {
    let config = args.flags.config();
    println!(
        "manifest={}\nmode={}\nout_dir={}\n{config}",
        args.manifest.display(),
        args.mode,
        args.out_dir.display()
    );
    config.validate()?;
    let manifest = load_manifest(&args.manifest)?;
    create_dir(&args.out_dir)?;
    let outcome = run_training(&manifest, args.mode, &config)?;

    outcome.mlp.save(args.out_dir.join(MLP_CHECKPOINT))?;
    write_text(&args.out_dir.join("report.csv"), &outcome.mlp_report.to_csv())?;
    let r = &outcome.mlp_report;
    println!(
        "classifier: best_step={} best_val_auc={} stop_step={} stop={:?}",
        r.best_step, r.best_val_auc, r.stop_step, r.stop_reason
    );
    if let Some((lstm, report)) = &outcome.lstm {
        lstm.save(args.out_dir.join(LSTM_CHECKPOINT))?;
        write_text(&args.out_dir.join("lstm_report.csv"), &report.to_csv())?;
        println!(
            "lstm: best_step={} best_val_auc={} stop_step={} stop={:?}",
            report.best_step, report.best_val_auc, report.stop_step, report.stop_reason
        );
    }
    println!("wrote checkpoints and reports to {}", args.out_dir.display());
    Ok(())
}

fn load_models(dir: &Path, mode: Mode) -> Result<TrainedModels> {
    Ok(match mode {
        Mode::Supervised | Mode::Ssl => TrainedModels {
            mlp: Some(MlpModel::load(dir.join(MLP_CHECKPOINT))?),
            lstm: None,
        },
        Mode::SslLstm => TrainedModels {
            mlp: None,
            lstm: Some(LstmModel::load(dir.join(LSTM_CHECKPOINT))?),
        },
    })
}

fn select_split(manifest: DatasetManifest, split: &str) -> Result<DatasetManifest> {
    match split {
        "all" => Ok(manifest),
        other => {
            let split: Split = other
                .parse()
                .map_err(|_| Error::InvalidParameter(format!("unknown split {other:?}")))?;
            Ok(manifest.split(split))
        }
    }
}

fn score_rows(scores: &[VideoScore]) -> String {
    scores_to_csv(scores.iter().map(|s| (s.id.as_str(), s.score, s.label)))
}

fn cmd_eval(args: &EvalArgs) -> Result<()> {
    println!(
        "source_manifest={}\ntarget_manifest={}\nmode={}\ncheckpoint_dir={}\nsplit={}\nout={}",
        args.source_manifest.display(),
        args.target_manifest.display(),
        args.mode,
        args.checkpoint_dir.display(),
        args.split,
        args.out.display()
    );
    let source = select_split(load_manifest(&args.source_manifest)?, &args.split)?;
    let target = select_split(load_manifest(&args.target_manifest)?, &args.split)?;
    let models = load_models(&args.checkpoint_dir, args.mode)?;
    let source_scores = score_videos(&models, &source, args.mode)?;
    let target_scores = score_videos(&models, &target, args.mode)?;
    if let Some(dir) = &args.scores_dir {
        create_dir(dir)?;
        write_text(&dir.join("source_scores.csv"), &score_rows(&source_scores))?;
        write_text(&dir.join("target_scores.csv"), &score_rows(&target_scores))?;
    }
    let report = evaluate_transfer(&score_set(&source_scores)?, &score_set(&target_scores)?);
    let text = report.to_text();
    write_text(&args.out, &text)?;
    print!("{text}");
    Ok(())
}

fn cmd_roc(args: &RocArgs) -> Result<()> {
    println!(
        "scores_csv={}\nout_svg={}\nout_csv={}",
        args.scores_csv.display(),
        args.out_svg.display(),
        args.out_csv.display()
    );
    let scores = parse_scores_csv(&read_text(&args.scores_csv)?)?;
    let curve = roc_curve(&scores);
    let title = args
        .scores_csv
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    write_text(&args.out_csv, &roc_to_csv(&curve))?;
    write_text(&args.out_svg, &roc_to_svg(&curve, &title))?;
    println!("auc={}", apexfas::metrics::auc(&curve));
    Ok(())
}

fn cmd_bench(args: &BenchArgs) -> Result<()> {
    println!("frames={}\nsize={}\nreps={}\nsigma={}", args.frames, args.size, args.reps, args.sigma);
    if args.reps < 3 {
        return Err(Error::InvalidParameter("bench needs --reps >= 3".into()));
    }
    let config = SynthConfig {
        num_videos: 1,
        frames: args.frames,
        height: args.size,
        width: args.size,
        ..SynthConfig::default()
    };
    let video = generate_videos(&config)?.swap_remove(0).video;
    // One untimed pass warms caches and allocator.
    apex_frame(&video, args.sigma)?;
    let start = Instant::now();
    for _ in 0..args.reps {
        std::hint::black_box(apex_frame(&video, args.sigma)?);
    }
    let secs = start.elapsed().as_secs_f64();
    println!("frames_per_sec={:.1}", (args.frames * args.reps) as f64 / secs);
    println!("ms_per_video={:.4}", secs * 1e3 / args.reps as f64);
    info!("bench: {} apex computations in {secs:.4} s", args.reps);
    Ok(())
}

fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Apex(a) => cmd_apex(a),
        Command::Segments(a) => cmd_segments(a),
        Command::Synth(a) => cmd_synth(a),
        Command::Train(a) => cmd_train(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Roc(a) => cmd_roc(a),
        Command::Bench(a) => cmd_bench(a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
