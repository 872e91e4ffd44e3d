use std::error::Error;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use accident_pipeline::domain::{GroundTruth, Prediction};
use accident_pipeline::harness::{
    ablate, generate_synthetic, read_detections, read_jsonl, run_manifest, write_jsonl,
    HarnessConfig, Manifest, PlanRecord, RenderSpec, RunOptions,
};
use accident_pipeline::metrics::{score_dataset, SpatialSigma};
use accident_pipeline::pipeline::StageSelection;
use accident_pipeline::plan::{plan_stage1, plan_stage2, plan_stage3};
use accident_pipeline::postprocess::blend_runs;

type Result<T> = std::result::Result<T, Box<dyn Error>>;

#[derive(Parser)]
#[command(
    name = "accident-pipeline",
    version,
    about = "Staged VLM accident localization"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML config file; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Seed for the oracle backends and the generator.
    #[arg(long)]
    seed: Option<u64>,
}

impl Common {
    fn load(&self) -> Result<HarnessConfig> {
        let mut cfg = match &self.config {
            Some(p) => HarnessConfig::load(p)?,
            None => HarnessConfig::default(),
        };
        if let Some(seed) = self.seed {
            cfg = cfg.with_seed(seed);
        }
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic dataset (manifest, ground truth, detections).
    GenSynthetic {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 50)]
        n: usize,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        distractors: Option<usize>,
        /// Also render flat-colour frames at this rate.
        #[arg(long)]
        render_fps: Option<f64>,
        #[arg(long, default_value_t = 320)]
        width: u32,
        #[arg(long, default_value_t = 180)]
        height: u32,
    },
    /// Print frame plans; with --preds, also the stage-2/3 plans around them.
    Plan {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        preds: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the pipeline over a manifest into a run directory.
    Run {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        run_dir: PathBuf,
        /// Stages to run: 1, 12, 13 or 123.
        #[arg(long)]
        stages: Option<StageSelection>,
        #[arg(long)]
        concurrency: Option<usize>,
        #[arg(long)]
        dump_plans: bool,
        /// Process at most this many new clips per profile.
        #[arg(long)]
        max_new_clips: Option<usize>,
    },
    /// Blend two prediction files.
    Blend {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: PathBuf,
        #[arg(long)]
        lambda: Option<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Snap predicted points onto detected vehicles.
    Snap {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        preds: PathBuf,
        #[arg(long)]
        detections: PathBuf,
        #[arg(long)]
        delta_snap: Option<f64>,
        #[arg(long)]
        half_window_frames: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score predictions against ground truth.
    Score {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        preds: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        /// Comma-separated temporal sigmas in seconds.
        #[arg(long, value_delimiter = ',')]
        sigmas: Option<Vec<f64>>,
        /// Explicit spatial sigmas `sx,sy`.
        #[arg(long, value_delimiter = ',', num_args = 2)]
        sigma_xy: Option<Vec<f64>>,
        #[arg(long)]
        per_clip_sigma: bool,
        #[arg(long)]
        json: bool,
    },
    /// Score the cumulative ablation ladder on the oracle backend.
    Ablate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        json: bool,
    },
}

fn emit<T: serde::Serialize>(out: Option<&Path>, rows: &[T]) -> Result<()> {
    match out {
        Some(p) => write_jsonl(p, rows)?,
        None => {
            let mut w = std::io::stdout().lock();
            for r in rows {
                if let Err(e) = writeln!(w, "{}", serde_json::to_string(r)?) {
                    if e.kind() == std::io::ErrorKind::BrokenPipe {
                        break;
                    }
                    return Err(e.into());
                }
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match dispatch(Cli::parse().command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

fn dispatch(cmd: Command) -> Result<ExitCode> {
    match cmd {
        Command::GenSynthetic {
            common,
            n,
            out,
            distractors,
            render_fps,
            width,
            height,
        } => {
            let mut cfg = common.load()?;
            if let Some(d) = distractors {
                cfg.synthetic.distractors_per_clip = d;
            }
            let set = generate_synthetic(n, &cfg.synthetic, &cfg.layout_policy())?;
            let render = render_fps.map(|fps| RenderSpec { fps, width, height });
            let path = set.write(&out, render)?;
            println!("{}", path.display());
        }
        Command::Plan {
            common,
            manifest,
            preds,
            out,
        } => {
            let cfg = common.load()?;
            let m = Manifest::load(&manifest)?;
            let preds: Vec<Prediction> = preds
                .as_deref()
                .map(read_jsonl)
                .transpose()?
                .unwrap_or_default();
            let rows: Vec<PlanRecord> = m
                .clips
                .iter()
                .map(|clip| {
                    let t = preds
                        .iter()
                        .find(|p| p.clip_id() == clip.clip_id)
                        .map(|p| p.time_s());
                    PlanRecord {
                        clip_id: clip.clip_id.clone(),
                        stage1: plan_stage1(clip, &cfg.stage.stage1),
                        stage2: t.map(|t| plan_stage2(t, clip, &cfg.stage.stage2)),
                        stage3: t.map(|t| plan_stage3(t, clip, cfg.stage.stage3_longest_px)),
                    }
                })
                .collect();
            emit(out.as_deref(), &rows)?;
        }
        Command::Run {
            common,
            manifest,
            run_dir,
            stages,
            concurrency,
            dump_plans,
            max_new_clips,
        } => {
            let mut cfg = common.load()?;
            if let Some(s) = stages {
                cfg.stage.stages = s;
            }
            if let Some(c) = concurrency {
                cfg.concurrency = c;
            }
            let opts = RunOptions {
                max_new_clips,
                dump_plans,
            };
            let summary = run_manifest(&manifest, &cfg, &run_dir, &opts)?;
            eprintln!(
                "clips {}  new A {}  new B {}  fallbacks {}  complete {}",
                summary.clips, summary.new_a, summary.new_b, summary.fallbacks, summary.complete
            );
            for e in &summary.errors {
                eprintln!("  {e}");
            }
            if let Some(r) = &summary.report {
                print!("{}", r.to_table());
            }
            return Ok(ExitCode::from(summary.exit_code() as u8));
        }
        Command::Blend {
            common,
            a,
            b,
            lambda,
            out,
        } => {
            let mut cfg = common.load()?;
            if let Some(l) = lambda {
                cfg.ensemble.lambda = l;
            }
            cfg.validate()?;
            let pa: Vec<Prediction> = read_jsonl(&a)?;
            let pb: Vec<Prediction> = read_jsonl(&b)?;
            write_jsonl(&out, &blend_runs(&pa, &pb, &cfg.ensemble)?)?;
        }
        Command::Snap {
            common,
            preds,
            detections,
            delta_snap,
            half_window_frames,
            out,
        } => {
            let mut cfg = common.load()?;
            if let Some(d) = delta_snap {
                cfg.snap.delta_snap = d;
            }
            if let Some(w) = half_window_frames {
                cfg.snap.half_window_frames = w;
            }
            cfg.validate()?;
            let p: Vec<Prediction> = read_jsonl(&preds)?;
            let index = read_detections(&detections)?;
            let snapped: Vec<Prediction> = index
                .snap_all(&p, &cfg.snap)
                .into_iter()
                .map(|o| o.prediction)
                .collect();
            write_jsonl(&out, &snapped)?;
        }
        Command::Score {
            common,
            preds,
            gt,
            sigmas,
            sigma_xy,
            per_clip_sigma,
            json,
        } => {
            let mut cfg = common.load()?.metrics;
            if let Some(s) = sigmas {
                cfg.temporal_sigmas = s;
            }
            if let Some(v) = sigma_xy {
                cfg.spatial_sigma = SpatialSigma::Explicit {
                    sigma_x: v[0],
                    sigma_y: v[1],
                };
            } else if per_clip_sigma {
                cfg.spatial_sigma = SpatialSigma::PerClipBbox;
            }
            let p: Vec<Prediction> = read_jsonl(&preds)?;
            let g: Vec<GroundTruth> = read_jsonl(&gt)?;
            let report = score_dataset(&p, &g, &cfg)?;
            if json {
                println!("{}", serde_json::to_string_pretty(&report)?);
            } else {
                print!("{}", report.to_table());
            }
        }
        Command::Ablate {
            common,
            manifest,
            json,
        } => {
            let cfg = common.load()?;
            let mut m = Manifest::load(&manifest)?;
            m.apply_layout_policy(&cfg.layout_policy());
            let truths = m
                .load_ground_truth()?
                .ok_or("ablate needs a manifest with ground_truth")?;
            let detections = m.load_detections()?;
            let table = ablate(&m.clips, &truths, detections.as_ref(), &cfg)?;
            if json {
                println!("{}", serde_json::to_string_pretty(&table)?);
            } else {
                print!("{}", table.to_table());
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}
