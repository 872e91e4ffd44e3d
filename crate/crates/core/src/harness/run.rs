use std::collections::{BTreeMap, HashSet};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::HarnessConfig;
use super::io::{read_jsonl_lenient, write_json, write_jsonl, JsonlAppender, Manifest};
use crate::backend::{connect, OracleBackend, OracleNoise, PromptTemplates, VisionBackend};
use crate::domain::{ClipMeta, GroundTruth, Prediction};
use crate::error::HarnessError;
use crate::metrics::{score_dataset, ScoreReport};
use crate::pipeline::{Pipeline, PipelineTrace, StageConfig};
use crate::plan::{plan_stage1, plan_stage2, plan_stage3, FramePlan, PassSet};
use crate::postprocess::{blend_runs, DetectionIndex, SnapStatus};

/// One line of `traces/<profile>.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub clip_id: String,
    pub profile: String,
    pub prediction: Prediction,
    #[serde(default)]
    pub trace: Option<PipelineTrace>,
    /// Set when stage 1 failed outright and the fallback was emitted.
    #[serde(default)]
    pub error: Option<String>,
}

impl TraceRecord {
    pub fn fell_back(&self) -> bool {
        self.trace.as_ref().is_none_or(|t| t.fallback)
    }

    /// The prediction rebuilt from the recorded intermediates.
    pub fn replay(&self) -> Prediction {
        match &self.trace {
            Some(t) => t.replay(),
            None => self.prediction.clone(),
        }
    }
}

/// One line of `traces/snap.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnapRecord {
    pub clip_id: String,
    pub input: Prediction,
    pub status: SnapStatus,
    pub output: Prediction,
}

/// One line of `plans.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanRecord {
    pub clip_id: String,
    pub stage1: PassSet,
    pub stage2: Option<FramePlan>,
    pub stage3: Option<FramePlan>,
}

/// File names inside a run directory.
#[derive(Debug, Clone, PartialEq)]
pub struct RunLayout {
    pub root: PathBuf,
}

impl RunLayout {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }
    pub fn plans(&self) -> PathBuf {
        self.root.join("plans.jsonl")
    }
    pub fn traces(&self, profile: &str) -> PathBuf {
        self.root.join("traces").join(format!("{profile}.jsonl"))
    }
    pub fn snap_trace(&self) -> PathBuf {
        self.root.join("traces").join("snap.jsonl")
    }
    pub fn preds_a(&self) -> PathBuf {
        self.root.join("preds_A.jsonl")
    }
    pub fn preds_b(&self) -> PathBuf {
        self.root.join("preds_B.jsonl")
    }
    pub fn preds_ens(&self) -> PathBuf {
        self.root.join("preds_ens.jsonl")
    }
    pub fn preds_final(&self) -> PathBuf {
        self.root.join("preds_final.jsonl")
    }
    pub fn report(&self) -> PathBuf {
        self.root.join("report.json")
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunOptions {
    /// Stop each profile after this many new clips (simulates an interruption).
    pub max_new_clips: Option<usize>,
    pub dump_plans: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub clips: usize,
    pub new_a: usize,
    pub new_b: usize,
    /// Clips of run A whose answer is the fallback prediction.
    pub fallbacks: usize,
    pub errors: Vec<String>,
    /// False when some clip still lacks a trace.
    pub complete: bool,
    pub report: Option<ScoreReport>,
}

impl RunSummary {
    /// 0 for a clean run, 2 when any clip ended on the fallback.
    pub fn exit_code(&self) -> i32 {
        if self.fallbacks > 0 {
            2
        } else {
            0
        }
    }
}

/// Data a run works on.
pub struct RunInputs<'a> {
    pub clips: &'a [ClipMeta],
    pub truths: Option<&'a [GroundTruth]>,
    pub detections: Option<&'a DetectionIndex>,
    pub backend_a: &'a dyn VisionBackend,
    pub backend_b: Option<&'a dyn VisionBackend>,
}

fn oracle_for(
    truths: Option<&[GroundTruth]>,
    noise: &OracleNoise,
) -> Result<Option<Arc<OracleBackend>>, HarnessError> {
    truths
        .map(|t| OracleBackend::new(t.iter().cloned(), noise.clone()).map(Arc::new))
        .transpose()
        .map_err(HarnessError::from)
}

/// Backends for profiles A and B. Oracle profiles are built from `truths`.
pub fn build_backends(
    cfg: &HarnessConfig,
    truths: Option<&[GroundTruth]>,
) -> Result<(Arc<dyn VisionBackend>, Option<Arc<dyn VisionBackend>>), HarnessError> {
    let a = connect(&cfg.profile_a, oracle_for(truths, &cfg.oracle_a)?)?;
    let b = cfg
        .profile_b
        .as_ref()
        .map(|p| -> Result<_, HarnessError> { Ok(connect(p, oracle_for(truths, &cfg.oracle_b)?)?) })
        .transpose()?;
    Ok((a, b))
}

fn prompts(cfg: &HarnessConfig) -> Result<PromptTemplates, HarnessError> {
    match &cfg.prompts_dir {
        Some(dir) => PromptTemplates::from_dir(dir).map_err(|e| HarnessError::io(dir, e)),
        None => Ok(PromptTemplates::default()),
    }
}

/// Runs the pipeline over `clips` on a pool of `concurrency` workers.
/// Stage-1 failures become fallback records instead of aborting.
pub fn run_clips(
    clips: &[ClipMeta],
    backend: &dyn VisionBackend,
    stage: &StageConfig,
    prompts: &PromptTemplates,
    profile: &str,
    concurrency: usize,
    sink: Option<&JsonlAppender>,
) -> Result<Vec<TraceRecord>, HarnessError> {
    let pipeline = Pipeline::new(backend, stage).with_prompts(prompts.clone());
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(concurrency.max(1))
        .build()
        .map_err(|e| HarnessError::Config(e.to_string()))?;
    pool.install(|| {
        clips
            .par_iter()
            .map(|clip| {
                let record = match pipeline.run(clip) {
                    Ok((prediction, trace)) => TraceRecord {
                        clip_id: clip.clip_id.clone(),
                        profile: profile.to_string(),
                        prediction,
                        trace: Some(trace),
                        error: None,
                    },
                    Err(e) => {
                        log::warn!("{}: {e}; emitting fallback", clip.clip_id);
                        TraceRecord {
                            clip_id: clip.clip_id.clone(),
                            profile: profile.to_string(),
                            prediction: Prediction::fallback(clip),
                            trace: None,
                            error: Some(e.to_string()),
                        }
                    }
                };
                if let Some(sink) = sink {
                    sink.append(&record)?;
                }
                Ok(record)
            })
            .collect()
    })
}

/// Runs one profile with resume: clips that already have a trace record
/// are skipped. Returns every record for `clips` (old and new) and the
/// number of new ones.
fn resume_profile(
    clips: &[ClipMeta],
    backend: &dyn VisionBackend,
    cfg: &HarnessConfig,
    prompts: &PromptTemplates,
    profile: &str,
    path: &Path,
    max_new: Option<usize>,
) -> Result<(BTreeMap<String, TraceRecord>, usize), HarnessError> {
    let mut done: BTreeMap<String, TraceRecord> = read_jsonl_lenient::<TraceRecord>(path)?
        .into_iter()
        .map(|r| (r.clip_id.clone(), r))
        .collect();
    let pending: Vec<ClipMeta> = clips
        .iter()
        .filter(|c| !done.contains_key(&c.clip_id))
        .take(max_new.unwrap_or(usize::MAX))
        .cloned()
        .collect();
    let sink = JsonlAppender::open(path)?;
    let fresh = run_clips(
        &pending,
        backend,
        &cfg.stage,
        prompts,
        profile,
        cfg.concurrency,
        Some(&sink),
    )?;
    let n = fresh.len();
    done.extend(fresh.into_iter().map(|r| (r.clip_id.clone(), r)));
    let wanted: HashSet<&str> = clips.iter().map(|c| c.clip_id.as_str()).collect();
    done.retain(|k, _| wanted.contains(k.as_str()));
    Ok((done, n))
}

fn predictions(records: &BTreeMap<String, TraceRecord>) -> Vec<Prediction> {
    records.values().map(|r| r.prediction.clone()).collect()
}

fn plan_records(
    clips: &[ClipMeta],
    records: &BTreeMap<String, TraceRecord>,
    stage: &StageConfig,
) -> Vec<PlanRecord> {
    let mut out: Vec<PlanRecord> = clips
        .iter()
        .map(|clip| {
            let trace = records.get(&clip.clip_id).and_then(|r| r.trace.as_ref());
            PlanRecord {
                clip_id: clip.clip_id.clone(),
                stage1: plan_stage1(clip, &stage.stage1),
                stage2: trace
                    .filter(|t| t.t_refined.is_some())
                    .map(|t| plan_stage2(t.t_base, clip, &stage.stage2)),
                stage3: trace
                    .filter(|t| t.stage3_point.is_some())
                    .map(|t| plan_stage3(t.t_final, clip, stage.stage3_longest_px)),
            }
        })
        .collect();
    out.sort_by(|a, b| a.clip_id.cmp(&b.clip_id));
    out
}

/// Executes a full run into `layout`: profile A, optional profile B, the
/// blend, the snap and (with ground truth) the score report. Prediction
/// files are rewritten from the traces on every call, sorted by clip id.
pub fn execute_run(
    inputs: &RunInputs<'_>,
    cfg: &HarnessConfig,
    layout: &RunLayout,
    opts: &RunOptions,
) -> Result<RunSummary, HarnessError> {
    cfg.validate()?;
    let prompts = prompts(cfg)?;
    let name_a = cfg.profile_a.name.as_str();
    let (recs_a, new_a) = resume_profile(
        inputs.clips,
        inputs.backend_a,
        cfg,
        &prompts,
        name_a,
        &layout.traces(name_a),
        opts.max_new_clips,
    )?;
    let mut recs_b = None;
    let mut new_b = 0;
    if let (Some(backend_b), Some(profile_b)) = (inputs.backend_b, cfg.profile_b.as_ref()) {
        if profile_b.name == name_a {
            return Err(HarnessError::Config(
                "profile_a and profile_b need distinct names".into(),
            ));
        }
        let (r, n) = resume_profile(
            inputs.clips,
            backend_b,
            cfg,
            &prompts,
            &profile_b.name,
            &layout.traces(&profile_b.name),
            opts.max_new_clips,
        )?;
        recs_b = Some(r);
        new_b = n;
    }

    let preds_a = predictions(&recs_a);
    write_jsonl(&layout.preds_a(), &preds_a)?;
    let mut current = preds_a.clone();
    if let Some(recs_b) = &recs_b {
        let preds_b = predictions(recs_b);
        write_jsonl(&layout.preds_b(), &preds_b)?;
        current = blend_runs(&preds_a, &preds_b, &cfg.ensemble)?;
        write_jsonl(&layout.preds_ens(), &current)?;
    }
    if let Some(index) = inputs.detections {
        let outcomes = index.snap_all(&current, &cfg.snap);
        let log: Vec<SnapRecord> = current
            .iter()
            .zip(&outcomes)
            .map(|(p, o)| SnapRecord {
                clip_id: p.clip_id().to_string(),
                input: p.clone(),
                status: o.status.clone(),
                output: o.prediction.clone(),
            })
            .collect();
        write_jsonl(&layout.snap_trace(), &log)?;
        current = outcomes.into_iter().map(|o| o.prediction).collect();
    }
    write_jsonl(&layout.preds_final(), &current)?;

    if opts.dump_plans {
        write_jsonl(
            &layout.plans(),
            &plan_records(inputs.clips, &recs_a, &cfg.stage),
        )?;
    }

    let report = match inputs.truths {
        Some(truths) => {
            let r = score_dataset(&current, truths, &cfg.metrics)?;
            write_json(&layout.report(), &r)?;
            Some(r)
        }
        None => None,
    };

    let errors: Vec<String> = recs_a
        .values()
        .chain(recs_b.iter().flat_map(|r| r.values()))
        .filter_map(|r| {
            r.error
                .as_ref()
                .map(|e| format!("{}[{}]: {e}", r.clip_id, r.profile))
        })
        .collect();
    Ok(RunSummary {
        clips: inputs.clips.len(),
        new_a,
        new_b,
        fallbacks: recs_a.values().filter(|r| r.fell_back()).count(),
        errors,
        complete: recs_a.len() == inputs.clips.len()
            && recs_b
                .as_ref()
                .is_none_or(|r| r.len() == inputs.clips.len()),
        report,
    })
}

/// Loads a manifest and its side files, builds the backends from `cfg` and
/// runs into `run_dir`.
pub fn run_manifest(
    manifest_path: &Path,
    cfg: &HarnessConfig,
    run_dir: &Path,
    opts: &RunOptions,
) -> Result<RunSummary, HarnessError> {
    let mut manifest = Manifest::load(manifest_path)?;
    manifest.apply_layout_policy(&cfg.layout_policy());
    let truths = manifest.load_ground_truth()?;
    let detections = manifest.load_detections()?;
    let (a, b) = build_backends(cfg, truths.as_deref())?;
    let inputs = RunInputs {
        clips: &manifest.clips,
        truths: truths.as_deref(),
        detections: detections.as_ref(),
        backend_a: &*a,
        backend_b: b.as_deref(),
    };
    execute_run(&inputs, cfg, &RunLayout::new(run_dir), opts)
}
