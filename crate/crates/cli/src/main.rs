//! `enfpd`: detect ENF presence in a clip, simulate labelled clips, score
//! corpora and dump intermediate products.
//!
//! Exit codes: 0 ENF present, 1 absent, 2 abstain (detect only), 3 error.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use enfpd_core::debug;
use enfpd_core::enf::{region_series, EnfEstimator};
use enfpd_core::eval::{batch_scores, read_manifest, write_manifest, write_outputs, LabeledItem};
use enfpd_core::ingest::{load_frame_sequence_with, FrameSequence, InputFormat, LoadOptions};
use enfpd_core::pipeline::{analyze, segment, steady_mask, PipelineConfig};
use enfpd_core::sim::{write_clip, ClipLabel, ClipRecipe, ShutterKind};
use enfpd_core::FrameRate;

const EXIT_ERROR: u8 = 3;

#[derive(Debug, Parser)]
#[command(name = "enfpd", version, about = "ENF signal presence detection for video")]
struct Cli {
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true, env = "ENFPD_JOBS")]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the detector on one clip and print the report as JSON.
    Detect {
        input: PathBuf,
        #[command(flatten)]
        input_opts: InputOpts,
        #[command(flatten)]
        config: ConfigOpts,
        /// Also write label map, overlay, steady mask, ENF tracks and
        /// spectrograms to this directory.
        #[arg(long)]
        dump: Option<PathBuf>,
    },
    /// Render synthetic clips with ground-truth sidecars.
    Simulate(SimulateArgs),
    /// Score a labelled corpus and write scores, ROC curves and AUC summary.
    Evaluate {
        /// JSON-lines manifest of {path, label, sensor_tag}.
        manifest: PathBuf,
        #[arg(long, short)]
        out: PathBuf,
        #[command(flatten)]
        config: ConfigOpts,
    },
    /// Write the superpixel label map (16-bit PGM) of a clip.
    Segment {
        input: PathBuf,
        #[arg(long, short)]
        out: PathBuf,
        /// Also write the middle frame with region boundaries (PPM).
        #[arg(long)]
        overlay: Option<PathBuf>,
        #[command(flatten)]
        input_opts: InputOpts,
        #[command(flatten)]
        config: ConfigOpts,
    },
    /// Write the steady-pixel mask (PBM, non-steady pixels black).
    SteadyMask {
        input: PathBuf,
        #[arg(long, short)]
        out: PathBuf,
        /// Also write per-superpixel steady counts (CSV).
        #[arg(long)]
        counts: Option<PathBuf>,
        #[command(flatten)]
        input_opts: InputOpts,
        #[command(flatten)]
        config: ConfigOpts,
    },
    /// Print the effective configuration as key=value lines.
    Config {
        #[command(flatten)]
        config: ConfigOpts,
    },
}

#[derive(Debug, Args)]
struct InputOpts {
    /// y4m, pgm or raw; inferred from the path when omitted.
    #[arg(long)]
    format: Option<InputFormat>,
    /// Frame rate of PGM sequences, e.g. 30000/1001.
    #[arg(long, default_value = "30000/1001")]
    fps: FrameRate,
}

#[derive(Debug, Args)]
struct ConfigOpts {
    /// key=value configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override one key, e.g. --set stft.window_seconds=20 (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

impl ConfigOpts {
    fn load(&self) -> Result<PipelineConfig> {
        let mut cfg = match &self.config {
            Some(path) => PipelineConfig::from_file(path).with_context(|| format!("reading config {}", path.display()))?,
            None => PipelineConfig::default(),
        };
        for kv in &self.overrides {
            let Some((k, v)) = kv.split_once('=') else { bail!("--set expects KEY=VALUE, got {kv:?}") };
            cfg.set(k, v)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Args)]
struct SimulateArgs {
    #[arg(long, short)]
    out: PathBuf,
    /// Generate a corpus of this many clips (half with ENF, each half split
    /// between global and rolling shutter) plus `manifest.jsonl`.
    #[arg(long)]
    count: Option<usize>,
    /// Label of a single clip.
    #[arg(long, default_value = "present")]
    label: ClipLabel,
    /// Seed of a single clip, or of the first clip of a corpus.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "global")]
    shutter: ShutterKind,
    /// File stem of a single clip.
    #[arg(long, default_value = "clip")]
    stem: String,
    #[arg(long, default_value_t = 160)]
    width: usize,
    #[arg(long, default_value_t = 120)]
    height: usize,
    #[arg(long, default_value = "30000/1001")]
    fps: FrameRate,
    #[arg(long, default_value_t = 120.0)]
    seconds: f64,
    #[arg(long, default_value_t = 8)]
    bit_depth: u8,
    /// Sensor noise standard deviation in luma units.
    #[arg(long, default_value_t = 0.01)]
    noise: f32,
    #[arg(long, default_value_t = 3)]
    objects: usize,
    /// Share of columns (right side) lit only by a steady source.
    #[arg(long, default_value_t = 0.0)]
    unlit_fraction: f32,
    /// Upper bound on the relative amplitude of slow illumination drift.
    #[arg(long, default_value_t = 0.02)]
    drift: f32,
    #[arg(long, default_value_t = 50.0)]
    nominal_hz: f64,
    /// y4m, pgm or raw.
    #[arg(long, default_value = "y4m")]
    format: InputFormat,
}

impl SimulateArgs {
    fn recipe(&self, label: ClipLabel, shutter: ShutterKind, seed: u64) -> ClipRecipe {
        let mut recipe = ClipRecipe {
            width: self.width,
            height: self.height,
            frame_rate: self.fps,
            seconds: self.seconds,
            bit_depth: self.bit_depth,
            label,
            shutter,
            noise_std: self.noise,
            object_count: self.objects,
            unlit_fraction: self.unlit_fraction,
            drift_amplitude: self.drift,
            seed,
            ..Default::default()
        };
        recipe.grid.f_nominal = self.nominal_hz;
        recipe
    }
}

fn load(input: &Path, opts: &InputOpts, cfg: &PipelineConfig) -> Result<FrameSequence> {
    let format = opts.format.unwrap_or_else(|| InputFormat::infer(input));
    let load_opts = LoadOptions { frame_rate: opts.fps, max_seconds: Some(cfg.clip_seconds), ..LoadOptions::default() };
    load_frame_sequence_with(input, format, &load_opts).with_context(|| format!("loading {}", input.display()))
}

fn detect(input: &Path, opts: &InputOpts, cfg: &PipelineConfig, dump: Option<&Path>) -> Result<u8> {
    let seq = load(input, opts, cfg)?;
    let analysis = analyze(&seq, cfg)?;
    let report = analysis.report(cfg)?;
    if let Some(dir) = dump {
        std::fs::create_dir_all(dir)?;
        let frame = seq.frame(enfpd_core::ingest::representative_frame_index(seq.len())?);
        debug::write_label_pgm(&analysis.map, &dir.join("labels.pgm"))?;
        debug::write_boundary_overlay(&frame, &analysis.map, &dir.join("overlay.ppm"))?;
        debug::write_mask_pbm(&analysis.mask, &dir.join("steady.pbm"))?;
        debug::write_steady_counts_csv(&analysis.map, &analysis.mask, &dir.join("steady_counts.csv"))?;
        let (_, stft) = cfg.resolve(seq.meta())?;
        let estimator = EnfEstimator::new(seq.meta(), &stft)?;
        debug::write_enf_csv(&analysis.matrix, &estimator.hop_times(seq.meta().fps()), &dir.join("enf.csv"))?;
        for series in region_series(&seq, &analysis.steady)? {
            debug::write_spectrogram(&estimator, &series, &dir.join(format!("spectrogram_{}.f32", series.region_label)))?;
        }
    }
    println!("{}", report.to_json());
    Ok(report.verdict.exit_code() as u8)
}

fn simulate(args: &SimulateArgs) -> Result<()> {
    let render = |recipe: &ClipRecipe, stem: &str| -> Result<PathBuf> {
        let (_, shutter) = recipe.build()?;
        let (seq, truth) = recipe.render()?;
        Ok(write_clip(&seq, &truth, &shutter, recipe.seed, &args.out, stem, args.format)?)
    };
    match args.count {
        None => {
            let path = render(&args.recipe(args.label, args.shutter, args.seed), &args.stem)?;
            println!("{}", path.display());
        }
        Some(count) => {
            let positives = count / 2;
            let mut items = Vec::with_capacity(count);
            for i in 0..count {
                let (label, k, class_size) = if i < positives {
                    (ClipLabel::EnfPresent, i, positives)
                } else {
                    (ClipLabel::EnfAbsent, i - positives, count - positives)
                };
                let shutter = if k < class_size.div_ceil(2) { ShutterKind::Global } else { ShutterKind::Rolling };
                let stem = format!("clip{i:04}");
                let path = render(&args.recipe(label, shutter, args.seed + i as u64), &stem)?;
                let rel = path.strip_prefix(&args.out).unwrap_or(&path).to_path_buf();
                items.push(LabeledItem { path: rel, label, sensor_tag: shutter.to_string() });
                eprintln!("{}/{count} {}", i + 1, path.display());
            }
            let manifest = args.out.join("manifest.jsonl");
            write_manifest(&manifest, &items)?;
            println!("{}", manifest.display());
        }
    }
    Ok(())
}

fn evaluate(manifest: &Path, out: &Path, cfg: &PipelineConfig) -> Result<()> {
    let items = read_manifest(manifest).with_context(|| format!("reading manifest {}", manifest.display()))?;
    let table = batch_scores(&items, cfg)?;
    for row in table.rows.iter().filter(|r| r.error.is_some()) {
        eprintln!("{}: {}", row.item.path.display(), row.error.as_deref().unwrap_or_default());
    }
    let summary = write_outputs(&table, out)?;
    println!("{}", serde_json::to_string_pretty(&summary)?);
    Ok(())
}

fn run(cli: Cli) -> Result<u8> {
    if let Some(jobs) = cli.jobs {
        rayon::ThreadPoolBuilder::new().num_threads(jobs.max(1)).build_global().context("configuring worker pool")?;
    }
    match cli.command {
        Command::Detect { input, input_opts, config, dump } => detect(&input, &input_opts, &config.load()?, dump.as_deref()),
        Command::Simulate(args) => simulate(&args).map(|_| 0),
        Command::Evaluate { manifest, out, config } => evaluate(&manifest, &out, &config.load()?).map(|_| 0),
        Command::Segment { input, out, overlay, input_opts, config } => {
            let cfg = config.load()?;
            let seq = load(&input, &input_opts, &cfg)?;
            let map = segment(&seq, &cfg)?;
            debug::write_label_pgm(&map, &out)?;
            if let Some(path) = overlay {
                let frame = seq.frame(enfpd_core::ingest::representative_frame_index(seq.len())?);
                debug::write_boundary_overlay(&frame, &map, &path)?;
            }
            println!("{} superpixels", map.region_count);
            Ok(0)
        }
        Command::SteadyMask { input, out, counts, input_opts, config } => {
            let cfg = config.load()?;
            let seq = load(&input, &input_opts, &cfg)?;
            let mask = steady_mask(&seq, &cfg)?;
            debug::write_mask_pbm(&mask, &out)?;
            if let Some(path) = counts {
                debug::write_steady_counts_csv(&segment(&seq, &cfg)?, &mask, &path)?;
            }
            println!("{} of {} pixels steady", mask.count(), mask.mask.len());
            Ok(0)
        }
        Command::Config { config } => {
            print!("{}", config.load()?.to_kv_string());
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(EXIT_ERROR) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_ERROR)
        }
    }
}
