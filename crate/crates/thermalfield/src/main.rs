use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::builder::{PossibleValuesParser, TypedValueParser};
use clap::{Args, Parser, Subcommand, ValueEnum};
use thermalfield::checkpoint::{load_checkpoint, save_checkpoint, Checkpoint};
use thermalfield::config::{config_to_json, load_config};
use thermalfield::core::dataset::{Dataset, Split};
use thermalfield::core::geometry::SceneBox;
use thermalfield::core::loss::{HssimConstants, WindowConfig};
use thermalfield::core::mesh::{default_iso, marching_cubes, watertight_check};
use thermalfield::core::render::{NeuralField, RadianceSource, SamplingConfig};
use thermalfield::core::synth::{fixture, perturb_poses, AnalyticScene, FixtureConfig};
use thermalfield::core::train::{fit, LossBreakdown, TrainConfig, TrainObserver, TrainState};
use thermalfield::core::Vec3;
use thermalfield::dataset_io::{convert_dataset, load_dataset, read_meta, save_dataset, ImageDepth, META_FILE};
use thermalfield::grid::save_grid;
use thermalfield::parallel::{density_grid, pool, render_image, WORKERS_ENV};
use thermalfield::ply::write_ply;
use thermalfield::pgm::{write_gray16, write_gray8, write_pseudo_color};
use thermalfield::report::{evaluate, step_record};
use thermalfield::{Error, Result};

/// Thermal radiance fields: synthesize, train, render, evaluate and mesh.
#[derive(Debug, Parser)]
#[command(name = "thermalfield", version)]
struct Cli {
    /// Seed for every random choice; overrides the config file's seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for rendering and meshing (0 = all cores).
    #[arg(long, global = true, env = WORKERS_ENV)]
    workers: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Convert raw 16-bit frames into a normalized dataset.
    Convert(ConvertArgs),
    /// Render a synthetic dataset from an analytic scene.
    Synth(SynthArgs),
    /// Train a field on a dataset.
    Train(TrainArgs),
    /// Render dataset views from a checkpoint.
    Render(RenderArgs),
    /// Score held-out views of a checkpoint.
    Eval(EvalArgs),
    /// Extract an isosurface mesh from a checkpoint's density.
    Mesh(MeshArgs),
}

#[derive(Debug, Args)]
struct ConvertArgs {
    /// Directory with poses.json and raw 16-bit PGM frames.
    #[arg(long)]
    raw: PathBuf,
    /// Calibration file; defaults to meta.json inside the raw directory.
    #[arg(long)]
    meta: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Preset {
    Blobs,
}

#[derive(Debug, Args)]
struct SynthArgs {
    #[arg(long, value_enum, default_value = "blobs")]
    preset: Preset,
    #[arg(long, default_value_t = 24)]
    views: usize,
    /// Image width and height in pixels.
    #[arg(long, default_value_t = 64)]
    res: usize,
    /// Quadrature samples per ray for the ground-truth images.
    #[arg(long, default_value_t = 256)]
    samples: usize,
    /// Sample depth of the written frames.
    #[arg(long, default_value_t = 16, value_parser = PossibleValuesParser::new(["8", "16"]).map(|s| s.parse::<u8>().unwrap()))]
    bits: u8,
    /// Hold out every n-th view for testing (0 = none).
    #[arg(long, default_value_t = 6)]
    holdout_every: usize,
    /// Rotation noise in degrees added to the training poses.
    #[arg(long, default_value_t = 0.0)]
    pose_noise_deg: f64,
    /// Translation noise added to the training poses, as a fraction of the
    /// scene diameter.
    #[arg(long, default_value_t = 0.0)]
    pose_noise_frac: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[arg(long)]
    data: PathBuf,
    /// JSON object overriding the built-in single-CPU defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// Continue from a checkpoint instead of a fresh initialization.
    #[arg(long)]
    resume: Option<PathBuf>,
    #[arg(long)]
    iterations: Option<u64>,
    #[arg(long)]
    no_pose_refine: bool,
    #[arg(long)]
    no_structural: bool,
    /// Print a JSON loss record every this many steps (0 = quiet).
    #[arg(long, default_value_t = 10)]
    log_every: u64,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Views {
    All,
    Train,
    Test,
}

#[derive(Debug, Args)]
struct SamplingArgs {
    /// Samples per ray.
    #[arg(long, default_value_t = 96)]
    samples: usize,
}

impl SamplingArgs {
    fn config(&self) -> SamplingConfig {
        SamplingConfig {
            samples_per_ray: self.samples,
            stratified: false,
            seed: 0,
        }
    }
}

#[derive(Debug, Args)]
struct RenderArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long, value_enum, default_value = "all")]
    views: Views,
    #[command(flatten)]
    sampling: SamplingArgs,
    /// Sample depth of the grayscale frames.
    #[arg(long, default_value_t = 8, value_parser = PossibleValuesParser::new(["8", "16"]).map(|s| s.parse::<u8>().unwrap()))]
    bits: u8,
    /// Also write jet pseudo-color PPM files.
    #[arg(long)]
    pseudo_color: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long, value_enum, default_value = "test")]
    views: Views,
    #[command(flatten)]
    sampling: SamplingArgs,
    /// Write the JSON report here as well.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct MeshArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// Iso value, or `auto` for half the 99th density percentile.
    #[arg(long, default_value = "auto")]
    iso: String,
    /// Lattice points per axis inside the scene box.
    #[arg(long, default_value_t = 128)]
    res: usize,
    /// Also save the sampled density grid.
    #[arg(long)]
    grid_out: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

fn select(dataset: &Dataset, views: Views) -> Vec<usize> {
    match views {
        Views::All => (0..dataset.len()).collect(),
        Views::Train => dataset.indices(Split::Train),
        Views::Test => {
            let test = dataset.indices(Split::Test);
            if test.is_empty() {
                (0..dataset.len()).collect()
            } else {
                test
            }
        }
    }
}

fn convert(args: &ConvertArgs) -> Result<()> {
    let meta_path = args.meta.clone().unwrap_or_else(|| args.raw.join(META_FILE));
    let meta = read_meta(&meta_path)?;
    let report = convert_dataset(&args.raw, &meta, &meta_path, &args.out)?;
    println!(
        "{}",
        serde_json::json!({
            "frames": report.frames,
            "t_min": report.stats.t_min,
            "t_max": report.stats.t_max,
            "out": args.out,
        })
    );
    Ok(())
}

fn synth(args: &SynthArgs, seed: u64) -> Result<()> {
    let scene = match args.preset {
        Preset::Blobs => AnalyticScene::blobs(),
    };
    let cfg = FixtureConfig {
        views: args.views,
        resolution: args.res,
        samples: args.samples,
        holdout_every: args.holdout_every,
        ..FixtureConfig::default()
    };
    let mut dataset = fixture(&scene, &cfg)?;
    if args.pose_noise_deg != 0.0 || args.pose_noise_frac != 0.0 {
        let noisy = perturb_poses(
            &dataset.poses,
            args.pose_noise_deg,
            args.pose_noise_frac,
            dataset.scene_box.diameter(),
            seed,
        )?;
        for i in dataset.train_indices() {
            dataset.poses[i] = noisy[i];
        }
    }
    let depth = if args.bits == 8 {
        ImageDepth::Eight
    } else {
        ImageDepth::Sixteen
    };
    save_dataset(&args.out, &dataset, depth)?;
    println!(
        "{}",
        serde_json::json!({
            "views": dataset.len(),
            "train": dataset.train_indices().len(),
            "test": dataset.test_indices().len(),
            "out": args.out,
        })
    );
    Ok(())
}

struct Logger<'a> {
    out: &'a Path,
    log: std::fs::File,
    every: u64,
    scene_box: SceneBox,
    start: Instant,
}

impl TrainObserver for Logger<'_> {
    type Error = Error;

    fn on_step(&mut self, step: u64, loss: &LossBreakdown) -> Result<()> {
        let line = step_record(step, loss, None);
        writeln!(self.log, "{line}").map_err(|e| Error::io(self.out.join("train_log.jsonl"), e))?;
        if self.every > 0 && step.is_multiple_of(self.every) {
            println!("{}", step_record(step, loss, Some(self.start.elapsed().as_secs_f64())));
        }
        Ok(())
    }

    fn on_checkpoint(&mut self, state: &TrainState) -> Result<()> {
        let path = self.out.join(format!("checkpoints/step_{:06}.tfck", state.step));
        save_checkpoint(
            &path,
            &Checkpoint {
                state: state.clone(),
                scene_box: self.scene_box,
            },
        )
    }
}

fn train(args: &TrainArgs, seed: Option<u64>) -> Result<()> {
    let mut config = match &args.config {
        Some(path) => load_config(path, TrainConfig::desk_scale())?,
        None => TrainConfig::desk_scale(),
    };
    if let Some(s) = seed {
        config.seed = s;
    }
    if let Some(n) = args.iterations {
        config.iterations = n;
    }
    config.pose_refinement &= !args.no_pose_refine;
    config.structural_loss &= !args.no_structural;
    config.validate()?;
    let dataset = load_dataset(&args.data)?;

    let mut state = match &args.resume {
        Some(path) => {
            let ckpt = load_checkpoint(path)?;
            if *ckpt.state.params.arch() != config.arch {
                return Err(Error::Usage(format!(
                    "{} was trained with a different network architecture",
                    path.display()
                )));
            }
            ckpt.state
        }
        None => TrainState::new(&dataset, &config)?,
    };
    std::fs::create_dir_all(&args.out).map_err(|e| Error::io(&args.out, e))?;
    let config_path = args.out.join("config.json");
    std::fs::write(&config_path, format!("{:#}\n", config_to_json(&config)))
        .map_err(|e| Error::io(&config_path, e))?;
    let log_path = args.out.join("train_log.jsonl");
    let log = std::fs::OpenOptions::new()
        .create(true)
        .append(args.resume.is_some())
        .write(true)
        .truncate(args.resume.is_none())
        .open(&log_path)
        .map_err(|e| Error::io(&log_path, e))?;
    let mut logger = Logger {
        out: &args.out,
        log,
        every: args.log_every,
        scene_box: dataset.scene_box,
        start: Instant::now(),
    };
    fit(&dataset, &config, &mut state, &mut logger)?;
    save_checkpoint(
        &args.out.join("checkpoint.tfck"),
        &Checkpoint {
            state,
            scene_box: dataset.scene_box,
        },
    )
}

fn render(args: &RenderArgs) -> Result<()> {
    let ckpt = load_checkpoint(&args.checkpoint)?;
    let dataset = load_dataset(&args.data)?;
    let poses = if ckpt.state.base_poses.len() == dataset.len() {
        ckpt.state.current_poses()
    } else {
        dataset.poses.clone()
    };
    let field = NeuralField {
        params: &ckpt.state.params,
        scene_box: ckpt.scene_box,
    };
    let sampling = args.sampling.config();
    for i in select(&dataset, args.views) {
        let img = render_image(&field, &dataset.intrinsics, &poses[i], dataset.near, dataset.far, &sampling)?;
        let path = args.out.join(format!("{i:04}.pgm"));
        if args.bits == 16 {
            write_gray16(&path, &img)?;
        } else {
            write_gray8(&path, &img)?;
        }
        if args.pseudo_color {
            write_pseudo_color(&args.out.join(format!("{i:04}.ppm")), &img)?;
        }
    }
    Ok(())
}

fn eval(args: &EvalArgs) -> Result<()> {
    let ckpt = load_checkpoint(&args.checkpoint)?;
    let dataset = load_dataset(&args.data)?;
    let report = evaluate(
        &ckpt.state.params,
        ckpt.state.step,
        &dataset,
        &select(&dataset, args.views),
        &args.sampling.config(),
        &WindowConfig::default(),
        &HssimConstants::default(),
    )?;
    print!("{}", report.to_tsv());
    if let Some(path) = &args.out {
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        std::fs::write(path, report.to_json() + "\n").map_err(|e| Error::io(path, e))?;
    }
    Ok(())
}

fn mesh(args: &MeshArgs) -> Result<()> {
    let ckpt = load_checkpoint(&args.checkpoint)?;
    let field = NeuralField {
        params: &ckpt.state.params,
        scene_box: ckpt.scene_box,
    };
    if args.res < 2 {
        return Err(Error::Usage(format!("--res must be at least 2, got {}", args.res)));
    }
    // One extra lattice layer outside the box on every side, where the field
    // is empty, so surfaces touching the box still close.
    let b = ckpt.scene_box;
    let cell = b.extent() / (args.res - 1) as f64;
    let padded = SceneBox::new(b.min - cell, b.max + cell)?;
    let grid = density_grid(&field, &padded, [args.res + 2; 3])?;
    if let Some(path) = &args.grid_out {
        save_grid(path, &grid)?;
    }
    let iso = match args.iso.as_str() {
        "auto" => default_iso(&grid),
        s => s
            .parse::<f64>()
            .ok()
            .filter(|v| v.is_finite())
            .ok_or_else(|| Error::Usage(format!("--iso expects a number or 'auto', got {s:?}")))?,
    };
    let mut mesh = marching_cubes(&grid, iso);
    let mut scratch = field.scratch();
    let thermal = mesh
        .vertices
        .iter()
        .map(|v| field.query(v, &Vec3::z(), &mut scratch).map(|o| o.thermal))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    mesh.scalars = Some(thermal);
    write_ply(&args.out, &mesh)?;
    let report = watertight_check(&mesh);
    println!(
        "{}",
        serde_json::json!({
            "iso": iso,
            "vertices": mesh.vertices.len(),
            "triangles": mesh.triangles.len(),
            "watertight": report.is_watertight(),
            "boundary_edges": report.boundary_edges,
            "non_manifold_edges": report.non_manifold_edges,
        })
    );
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let pool = pool(cli.workers)?;
    pool.install(|| match &cli.command {
        Command::Convert(a) => convert(a),
        Command::Synth(a) => synth(a, cli.seed.unwrap_or(0)),
        Command::Train(a) => train(a, cli.seed),
        Command::Render(a) => render(a),
        Command::Eval(a) => eval(a),
        Command::Mesh(a) => mesh(a),
    })
}

fn report_error(kind: &str, message: &str) {
    let line = serde_json::json!({ "error": kind, "message": message });
    eprintln!("{line}");
    eprintln!("error: {message}");
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let text = e.render().to_string();
            let first = text.lines().next().unwrap_or("invalid arguments");
            let line = serde_json::json!({
                "error": "usage",
                "message": first.trim_start_matches("error: "),
            });
            eprintln!("{line}");
            eprint!("{text}");
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            report_error(e.kind(), &e.to_string());
            if let Error::Config { problems } = &e {
                for p in problems {
                    eprintln!("  {p}");
                }
            }
            ExitCode::FAILURE
        }
    }
}
