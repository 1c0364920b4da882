//! `rave`: grid-shuffled video editing, inversion, evaluation and dataset
//! tooling over the built-in toy adapters.
//!
//! ```bash
//! rave edit --input frames/ --prompt "a watercolor painting" --grid 3x3 --steps 50 \
//!     --guidance 7.5 --seed 1 --condition toy-edge --output out/
//! rave eval --source frames/ --edited out/ --prompt "a watercolor painting" --report eval.json --table
//! rave replay --manifest out/run.json
//! rave dataset summarize manifest.json
//! ```

use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use rave::adapters;
use rave::cache::{cache_dir, load_or_extract, CacheState, Quantized};
use rave::dataset::load_manifest;
use rave::frames::{load_frames, save_frames, Resolution};
use rave::latents::{latent_name, write_inversion, InversionManifest};
use rave::report::{table_line, write_report, EvalReport, TABLE_HEADER};
use rave::run::{read_run, write_run};
use rave_core::conditioning::{extract_conditions, ConditionKind};
use rave_core::dataset::summarize;
use rave_core::diffusion::{DiffusionSchedule, Spacing};
use rave_core::grid::PermutationRng;
use rave_core::metrics::{evaluate, EmbeddingProvider, FlowProvider, LucasKanadeFlow, ZeroFlow};
use rave_core::sampler::{
    edit_video_timed, invert_video, replay, Adapters, Clock, EditConfig, FrameOrder,
};
use rave_core::toy::ToyEmbedder;
use rave_core::video::{encode, Video};

#[derive(Parser, Debug)]
#[command(
    name = "rave",
    version,
    about = "Grid-shuffled zero-shot video editing",
    arg_required_else_help = true
)]
struct Cli {
    #[command(subcommand)]
    command: Commands,
}

#[derive(Subcommand, Debug)]
enum Commands {
    /// Invert, then denoise with per-step grid shuffling.
    Edit(EditArgs),
    /// Run only the DDIM inversion and dump the noisy latents.
    Invert(InvertArgs),
    /// Score an edited video against its source.
    Eval(EvalArgs),
    /// Re-run a recorded edit and check the output is bit-identical.
    Replay(ReplayArgs),
    /// Validate or summarize a dataset manifest.
    #[command(subcommand)]
    Dataset(DatasetCommand),
}

#[derive(Subcommand, Debug)]
enum DatasetCommand {
    Validate { manifest: PathBuf },
    Summarize { manifest: PathBuf },
}

#[derive(Clone, Copy, Debug)]
struct GridArg {
    rows: usize,
    cols: usize,
}

impl std::str::FromStr for GridArg {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let (r, c) = s
            .split_once(['x', 'X'])
            .ok_or_else(|| format!("expected NxM, got `{s}`"))?;
        let parse = |v: &str| match v.parse::<usize>() {
            Ok(n) if n > 0 => Ok(n),
            _ => Err(format!("`{v}` is not a positive integer")),
        };
        Ok(Self {
            rows: parse(r)?,
            cols: parse(c)?,
        })
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum SpacingArg {
    Leading,
    Trailing,
}

#[derive(Args, Debug)]
struct SourceArgs {
    /// Frame directory, or a video file (decoded with ffmpeg).
    #[arg(long)]
    input: PathBuf,
    /// Resize every frame to WxH.
    #[arg(long)]
    resolution: Option<Resolution>,
}

#[derive(Args, Debug)]
struct PipelineArgs {
    /// Grid rows x columns; 2x2 for 8 frames, 3x3 otherwise.
    #[arg(long)]
    grid: Option<GridArg>,
    #[arg(long, default_value_t = 50)]
    steps: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Also shuffle grids during inversion.
    #[arg(long)]
    shuffle_inversion: bool,
    #[arg(long, default_value = "")]
    inversion_prompt: String,
    #[arg(long, default_value = "toy-edge")]
    condition: ConditionKind,
    #[arg(long, default_value_t = 1000)]
    train_steps: usize,
    #[arg(long, default_value_t = 0.00085)]
    beta_start: f64,
    #[arg(long, default_value_t = 0.012)]
    beta_end: f64,
    #[arg(long, value_enum, default_value_t = SpacingArg::Leading)]
    spacing: SpacingArg,
    /// `identity` or `block:F`.
    #[arg(long, default_value = "identity")]
    codec: String,
    /// `separable[:g:c:t]`, `coupling[:s]` or `constant[:v]`.
    #[arg(long, default_value = "separable")]
    predictor: String,
    /// Skip the on-disk condition cache.
    #[arg(long)]
    no_cache: bool,
}

#[derive(Args, Debug)]
struct EditArgs {
    #[command(flatten)]
    source: SourceArgs,
    #[arg(long)]
    prompt: String,
    #[arg(long, default_value_t = 7.5)]
    guidance: f64,
    /// Keep grids in frame order at every step.
    #[arg(long)]
    no_shuffle: bool,
    #[command(flatten)]
    pipeline: PipelineArgs,
    #[arg(long)]
    output: PathBuf,
    /// Also mux the output frames into this video file with ffmpeg.
    #[arg(long)]
    mux: Option<PathBuf>,
    #[arg(long, default_value_t = 8)]
    fps: u32,
}

#[derive(Args, Debug)]
struct InvertArgs {
    #[command(flatten)]
    source: SourceArgs,
    #[command(flatten)]
    pipeline: PipelineArgs,
    #[arg(long)]
    output: PathBuf,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum FlowArg {
    LucasKanade,
    Zero,
}

#[derive(Args, Debug)]
struct EvalArgs {
    #[arg(long)]
    source: PathBuf,
    #[arg(long)]
    edited: PathBuf,
    #[arg(long)]
    prompt: String,
    #[arg(long)]
    report: PathBuf,
    /// Print the x100 table row.
    #[arg(long)]
    table: bool,
    #[arg(long, value_enum, default_value_t = FlowArg::LucasKanade)]
    flow: FlowArg,
}

#[derive(Args, Debug)]
struct ReplayArgs {
    /// `run.json`, or the directory holding it.
    #[arg(long)]
    manifest: PathBuf,
    /// Source frames; defaults to the input recorded in the manifest.
    #[arg(long)]
    input: Option<PathBuf>,
    /// Write the replayed frames here.
    #[arg(long)]
    output: Option<PathBuf>,
}

struct SystemClock(Instant);

impl Clock for SystemClock {
    fn now(&self) -> f64 {
        self.0.elapsed().as_secs_f64()
    }
}

fn is_container(path: &Path) -> bool {
    path.is_file()
}

fn ffmpeg(args: &[&std::ffi::OsStr]) -> Result<()> {
    let status = Command::new("ffmpeg")
        .args(["-hide_banner", "-loglevel", "error", "-y"])
        .args(args)
        .status()
        .context("could not run ffmpeg; install it or pass a frame directory")?;
    if !status.success() {
        bail!("ffmpeg exited with {status}");
    }
    Ok(())
}

/// Frame directory for `input`, decoding a container into `scratch` first.
fn frame_dir(input: &Path, scratch: &Path) -> Result<PathBuf> {
    if !is_container(input) {
        return Ok(input.to_path_buf());
    }
    std::fs::create_dir_all(scratch).with_context(|| format!("creating {}", scratch.display()))?;
    let pattern = scratch.join("frame_%04d.png");
    ffmpeg(&[
        "-i".as_ref(),
        input.as_os_str(),
        "-start_number".as_ref(),
        "0".as_ref(),
        pattern.as_os_str(),
    ])?;
    Ok(scratch.to_path_buf())
}

fn mux(frames: &Path, out: &Path, fps: u32) -> Result<()> {
    let pattern = frames.join("frame_%04d.png");
    let rate = fps.to_string();
    ffmpeg(&[
        "-framerate".as_ref(),
        rate.as_ref(),
        "-i".as_ref(),
        pattern.as_os_str(),
        "-pix_fmt".as_ref(),
        "yuv420p".as_ref(),
        out.as_os_str(),
    ])
}

fn load_source(source: &SourceArgs, scratch: &Path) -> Result<(PathBuf, Video)> {
    let dir = frame_dir(&source.input, scratch)?;
    let video = load_frames(&dir, source.resolution)?;
    Ok((dir, video))
}

fn config_from(p: &PipelineArgs, prompt: String, frames: usize) -> EditConfig {
    let mut config = EditConfig::new(prompt, frames);
    if let Some(g) = p.grid {
        config.rows = g.rows;
        config.cols = g.cols;
    }
    config.steps = p.steps;
    config.seed = p.seed;
    config.shuffle_inversion = p.shuffle_inversion;
    config.inversion_prompt = p.inversion_prompt.clone();
    config.condition = p.condition;
    config.train_steps = p.train_steps;
    config.beta_start = p.beta_start;
    config.beta_end = p.beta_end;
    config.spacing = match p.spacing {
        SpacingArg::Leading => Spacing::Leading,
        SpacingArg::Trailing => Spacing::Trailing,
    };
    config
}

/// Wraps the built-in extractor for `kind` and primes it from the cache
/// beside `frames_dir` unless caching is off.
fn prepare_conditions<'a>(
    extractor: &'a dyn rave_core::conditioning::ConditionExtractor,
    video: &Video,
    frames_dir: &Path,
    no_cache: bool,
) -> Result<(Quantized<'a>, Option<PathBuf>)> {
    let mut quantized = Quantized::new(extractor);
    if no_cache {
        return Ok((quantized, None));
    }
    let dir = cache_dir(frames_dir, extractor.kind());
    let state = load_or_extract(video, &mut quantized, &dir)?;
    eprintln!(
        "conditions: {} {}",
        if state == CacheState::Hit {
            "reused"
        } else {
            "cached to"
        },
        dir.display()
    );
    Ok((quantized, Some(dir)))
}

fn run_edit(args: EditArgs) -> Result<()> {
    let clock = SystemClock(Instant::now());
    let (frames_dir, video) = load_source(&args.source, &args.output.join("source_frames"))?;
    let mut config = config_from(&args.pipeline, args.prompt, video.len());
    config.guidance = args.guidance;
    config.shuffle = !args.no_shuffle;

    let codec = adapters::codec(&args.pipeline.codec)?;
    let predictor = adapters::predictor(&args.pipeline.predictor)?;
    let text = adapters::text_encoder("hashed")?;
    let base = adapters::extractor(config.condition)?;
    let (extractor, cond_dir) =
        prepare_conditions(base.as_ref(), &video, &frames_dir, args.pipeline.no_cache)?;

    let adapters = Adapters {
        codec: codec.as_ref(),
        predictor: predictor.as_ref(),
        extractor: &extractor,
        text: text.as_ref(),
    };
    let mut edit = edit_video_timed(&video, &config, adapters, &clock)?;
    save_frames(&edit.video, &args.output)?;

    let artifacts = &mut edit.manifest.artifacts;
    artifacts.insert("input".into(), frames_dir.display().to_string());
    artifacts.insert("frames".into(), args.output.display().to_string());
    if let Some(dir) = cond_dir {
        artifacts.insert("conditions".into(), dir.display().to_string());
    }
    if let Some(res) = args.source.resolution {
        artifacts.insert("resolution".into(), res.to_string());
    }
    if let Some(out) = &args.mux {
        mux(&args.output, out, args.fps)?;
        artifacts.insert("video".into(), out.display().to_string());
    }
    let path = write_run(&args.output, &edit.manifest)?;
    let t = edit.manifest.timings;
    eprintln!(
        "edited {} frames ({}x{} grid, {} steps) in {:.2}s; manifest {}",
        video.len(),
        config.rows,
        config.cols,
        config.steps,
        t.total(),
        path.display()
    );
    Ok(())
}

fn run_invert(args: InvertArgs) -> Result<()> {
    let (frames_dir, video) = load_source(&args.source, &args.output.join("source_frames"))?;
    let config = config_from(&args.pipeline, String::new(), video.len());
    let codec = adapters::codec(&args.pipeline.codec)?;
    let predictor = adapters::predictor(&args.pipeline.predictor)?;
    let text = adapters::text_encoder("hashed")?;
    let base = adapters::extractor(config.condition)?;
    let (extractor, _) =
        prepare_conditions(base.as_ref(), &video, &frames_dir, args.pipeline.no_cache)?;

    let schedule = DiffusionSchedule::from_config(&config.schedule_config())?;
    let latents = encode(&video, codec.as_ref())?;
    let latent_shape = latents.latent_shape();
    let maps = extract_conditions(&video, &extractor)?;
    let embedding =
        rave_core::diffusion::TextEncoder::encode(text.as_ref(), &config.inversion_prompt)?;
    let mut rng = PermutationRng::new(config.seed);
    let order = if config.shuffle_inversion {
        FrameOrder::Shuffled(&mut rng)
    } else {
        FrameOrder::Sequential
    };
    let inv = invert_video(
        latents,
        &maps,
        predictor.as_ref(),
        &embedding,
        &schedule,
        config.rows,
        config.cols,
        order,
    )?;
    let rave_core::diffusion::StepId::Noisy(terminal) = schedule.terminal() else {
        bail!("schedule has no noisy step");
    };
    let manifest = InversionManifest {
        adapters: Adapters {
            codec: codec.as_ref(),
            predictor: predictor.as_ref(),
            extractor: &extractor,
            text: text.as_ref(),
        }
        .ids(),
        config,
        frames: video.len(),
        padded_frames: inv.latents.len(),
        latent_shape,
        terminal_timestep: terminal,
        permutations: inv.permutations,
        files: (0..inv.latents.len()).map(latent_name).collect(),
    };
    let path = write_inversion(&args.output, &manifest, inv.latents.iter().map(|l| &**l))?;
    eprintln!(
        "inverted {} frames to t={terminal} ({} latents incl. padding); manifest {}",
        manifest.frames,
        manifest.padded_frames,
        path.display()
    );
    Ok(())
}

fn run_eval(args: EvalArgs) -> Result<()> {
    let source = load_frames(&args.source, None)?;
    let edited = load_frames(&args.edited, None)?;
    let embedder = ToyEmbedder;
    let flow: Box<dyn FlowProvider> = match args.flow {
        FlowArg::LucasKanade => Box::new(LucasKanadeFlow::default()),
        FlowArg::Zero => Box::new(ZeroFlow),
    };
    let metrics = evaluate(&source, &edited, &args.prompt, &embedder, flow.as_ref())?;
    let report = EvalReport {
        source: args.source.display().to_string(),
        edited: args.edited.display().to_string(),
        prompt: args.prompt,
        frames: edited.len(),
        embedder: embedder.id(),
        flow: flow.id(),
        table: metrics.table_row(),
        metrics,
    };
    write_report(&args.report, &report)?;
    if args.table {
        println!("{TABLE_HEADER}");
        println!("{}", table_line(&report.table));
    }
    Ok(())
}

fn run_replay(args: ReplayArgs) -> Result<()> {
    let manifest = read_run(&args.manifest)?;
    let input = match (&args.input, manifest.artifacts.get("input")) {
        (Some(p), _) => p.clone(),
        (None, Some(p)) => PathBuf::from(p),
        (None, None) => bail!("manifest records no input; pass --input"),
    };
    let resolution = manifest
        .artifacts
        .get("resolution")
        .map(|r| r.parse::<Resolution>())
        .transpose()
        .map_err(anyhow::Error::msg)?;
    let video = load_frames(&input, resolution)?;

    let ids = &manifest.adapters;
    let codec = adapters::codec(&ids.codec)?;
    let predictor = adapters::predictor(&ids.predictor)?;
    let text = adapters::text_encoder(&ids.text_encoder)?;
    let base = adapters::extractor_by_id(&ids.extractor)?;
    let cached = manifest.artifacts.contains_key("conditions");
    let (extractor, _) = prepare_conditions(base.as_ref(), &video, &input, !cached)?;
    let adapters = Adapters {
        codec: codec.as_ref(),
        predictor: predictor.as_ref(),
        extractor: &extractor,
        text: text.as_ref(),
    };
    let out = replay(&manifest, &video, adapters)?;
    if let Some(dir) = &args.output {
        save_frames(&out, dir)?;
    }
    println!(
        "replay ok: {} frames, output digest {}",
        out.len(),
        manifest.output_digest
    );
    Ok(())
}

fn run_dataset(cmd: DatasetCommand) -> Result<()> {
    match cmd {
        DatasetCommand::Validate { manifest } => {
            let loaded = load_manifest(&manifest)?;
            for w in &loaded.warnings {
                eprintln!("warning: {w}");
            }
            let s = summarize(&loaded.manifest);
            println!("valid: {} videos, {} text-video pairs", s.videos, s.pairs);
        }
        DatasetCommand::Summarize { manifest } => {
            let loaded = load_manifest(&manifest)?;
            for w in &loaded.warnings {
                eprintln!("warning: {w}");
            }
            println!(
                "{}",
                serde_json::to_string_pretty(&summarize(&loaded.manifest))?
            );
        }
    }
    Ok(())
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Commands::Edit(a) => run_edit(a),
        Commands::Invert(a) => run_invert(a),
        Commands::Eval(a) => run_eval(a),
        Commands::Replay(a) => run_replay(a),
        Commands::Dataset(c) => run_dataset(c),
    }
}
