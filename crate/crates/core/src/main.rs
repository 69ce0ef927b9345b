use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use memseg::keyframes::{dedup, phash};
use memseg::metrics::ApMode;
use memseg::pipeline::{
    ablation_csv, load_scene, parse_config, run_ablation, run_eval, run_segment,
    synth::SquareScene, RunConfig, ABLATION_KS,
};
use memseg::raster::load_mask;
use memseg::segmenter::{
    init_weights, load_weights, save_weights, train_step, SegmenterConfig, TrainState,
};
use memseg::{Error, Result};

#[derive(Parser)]
#[command(
    name = "memseg",
    version,
    about = "Seed-and-propagate video segmentation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Segment a scene: dedup, seed K frames, propagate to every frame.
    Segment(RunArgs),
    /// Score predicted masks against ground truth.
    Eval {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Use hard-mask precision instead of ranked-pixel AP.
        #[arg(long)]
        binary_ap: bool,
    },
    /// Run the scene with 1, 3, 6 and 9 seed frames and tabulate the scores.
    Ablate(RunArgs),
    /// List the frames kept by perceptual-hash deduplication.
    Keyframes {
        #[arg(long)]
        scene: PathBuf,
        #[arg(long, default_value_t = memseg::keyframes::DEFAULT_HAMMING_THRESHOLD)]
        hamming_threshold: u32,
    },
    /// Train segmenter weights on a scene with ground truth in `<scene>/gt`.
    Train(TrainArgs),
    /// Write freshly initialised weights.
    WeightsInit {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 8)]
        patch_size: usize,
        #[arg(long, default_value_t = 64)]
        embed_dim: usize,
        #[arg(long, default_value_t = 2)]
        layers: usize,
        #[arg(long, default_value_t = 4)]
        heads: usize,
        #[arg(long, default_value_t = 1)]
        classes: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Write a synthetic moving-square scene (`frames/`, `gt/`).
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 60)]
        frames: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    scene: PathBuf,
    /// Output weight file.
    #[arg(long)]
    weights: PathBuf,
    #[arg(long, default_value_t = 500)]
    iters: usize,
    /// Start from these weights instead of a fresh initialisation.
    #[arg(long)]
    init: Option<PathBuf>,
    #[arg(long)]
    gt: Option<PathBuf>,
    #[arg(long, default_value_t = 8)]
    patch_size: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = memseg::segmenter::DEFAULT_BASE_LR)]
    lr: f64,
}

#[derive(Args)]
struct RunArgs {
    /// `key = value` config file; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    scene: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    weights: Option<PathBuf>,
    #[arg(long)]
    gt: Option<PathBuf>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    hamming_threshold: Option<u32>,
    #[arg(long)]
    patch_size: Option<usize>,
    #[arg(long)]
    stm_cap: Option<usize>,
    #[arg(long)]
    ltm_stride: Option<usize>,
    #[arg(long)]
    ltm_cap: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

impl RunArgs {
    fn resolve(self) -> Result<RunConfig> {
        let mut c = match &self.config {
            Some(p) => parse_config(p)?,
            None => RunConfig::default(),
        };
        if let Some(v) = self.scene {
            c.scene = v;
        }
        if let Some(v) = self.out {
            c.output = v;
        }
        if self.weights.is_some() {
            c.weights = self.weights;
        }
        if self.gt.is_some() {
            c.gt = self.gt;
        }
        c.k = self.k.unwrap_or(c.k);
        c.hamming_threshold = self.hamming_threshold.unwrap_or(c.hamming_threshold);
        c.patch_size = self.patch_size.unwrap_or(c.patch_size);
        c.memory.stm_cap = self.stm_cap.unwrap_or(c.memory.stm_cap);
        c.memory.ltm_stride = self.ltm_stride.unwrap_or(c.memory.ltm_stride);
        c.memory.ltm_cap = self.ltm_cap.unwrap_or(c.memory.ltm_cap);
        c.seed = self.seed.unwrap_or(c.seed);
        if c.scene.as_os_str().is_empty() || c.output.as_os_str().is_empty() {
            return Err(Error::InvalidConfig(
                "scene and output directories are required".into(),
            ));
        }
        c.validate()?;
        Ok(c)
    }
}

fn train(args: TrainArgs) -> Result<()> {
    let TrainArgs {
        scene,
        weights: out,
        iters,
        init,
        gt,
        patch_size,
        seed,
        lr,
    } = args;
    let (names, frames) = load_scene(&scene)?;
    let gt_dir = gt.unwrap_or_else(|| scene.join("gt"));
    let masks = names
        .iter()
        .map(|n| load_mask(gt_dir.join(format!("{n}.pgm"))))
        .collect::<Result<Vec<_>>>()?;
    let mut weights = match init {
        Some(p) => load_weights(p)?,
        None => {
            let classes = masks
                .iter()
                .map(|m| m.max_class())
                .max()
                .unwrap_or(0)
                .max(1) as usize;
            init_weights(SegmenterConfig {
                patch_size,
                classes,
                seed,
                ..SegmenterConfig::default()
            })?
        }
    };
    let mut state = TrainState::new(&weights, iters);
    state.base_lr = lr;
    let every = (iters / 10).max(1);
    for i in 0..iters {
        let k = i % frames.len();
        let loss = train_step(&mut weights, &mut state, &frames[k], &masks[k])?;
        if (i + 1) % every == 0 || i + 1 == iters {
            println!("iter={} loss={loss:.6}", i + 1);
        }
    }
    save_weights(&weights, &out)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Segment(args) => {
            let config = args.resolve()?;
            let run = run_segment(&config)?;
            let t = &run.timing;
            println!(
                "frames={} keyframes={} seeds={:?} dedup_ms={:.3} seed_ms={:.3} propagation_ms={:.3}",
                t.frames(),
                run.keyframes.len(),
                run.seeds,
                t.dedup_ms,
                t.seed_ms,
                t.propagation_ms
            );
        }
        Command::Eval {
            pred,
            gt,
            out,
            binary_ap,
        } => {
            let mode = if binary_ap {
                ApMode::Binary
            } else {
                ApMode::Ranked
            };
            let report = run_eval(&pred, &gt, &out, mode)?;
            let cell = |v: Option<f64>| v.map_or_else(|| "NA".to_string(), |x| format!("{x:.4}"));
            let o = report.overall;
            println!(
                "map={} recall={} miou={} macc={}",
                cell(o.map),
                cell(o.recall),
                cell(o.miou),
                cell(o.macc)
            );
        }
        Command::Ablate(args) => {
            let config = args.resolve()?;
            let rows = run_ablation(&config, &ABLATION_KS)?;
            print!("{}", ablation_csv(&rows));
        }
        Command::Keyframes {
            scene,
            hamming_threshold,
        } => {
            let (names, frames) = load_scene(&scene)?;
            let kept = dedup(&frames, hamming_threshold)?;
            for i in kept.kept {
                println!("{} {}", names[i], phash(&frames[i]));
            }
        }
        Command::Train(args) => train(args)?,
        Command::WeightsInit {
            out,
            patch_size,
            embed_dim,
            layers,
            heads,
            classes,
            seed,
        } => {
            let config = SegmenterConfig {
                patch_size,
                embed_dim,
                layers,
                heads,
                classes,
                seed,
                ..SegmenterConfig::default()
            };
            save_weights(&init_weights::<f64>(config)?, &out)?;
        }
        Command::Synth { out, frames, seed } => {
            SquareScene {
                frames,
                seed,
                ..SquareScene::default()
            }
            .write(&out)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => e.exit(),
        Err(e) => {
            let msg = e.to_string();
            let first = msg
                .lines()
                .next()
                .unwrap_or("")
                .trim_start_matches("error: ");
            eprintln!("error kind=usage msg={first:?}");
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error kind={} msg={:?}", e.kind(), e.to_string());
            ExitCode::FAILURE
        }
    }
}
