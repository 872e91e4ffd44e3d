//! Three-stage orchestration for one clip.
//!
//! Stage 1 scans the whole clip (one or two passes) for a joint
//! time/point/type estimate. Stage 2 re-reads a dense window around that time
//! and applies a damped, capped correction. Stage 3 looks at the single frame
//! at the final time and replaces the point. Stages 2 and 3 are refinements:
//! if either fails, the clip keeps the previous stage's value.

use serde::{Deserialize, Serialize};

use crate::backend::{
    parse_stage1_response, parse_stage2_time, parse_stage3_point, InferenceRequest,
    PromptTemplates, RequestTag, VisionBackend, REASK_SUFFIX,
};
use crate::domain::{ClipMeta, CollisionType, Point, Prediction, SceneLayout, Source};
use crate::error::{BackendError, FrameLoadError, ParseError};
use crate::overlay::prepare_frames;
use crate::plan::{
    plan_stage1, plan_stage2, plan_stage3, FramePlan, Interval, Stage1Sampling, Stage2Sampling,
};

/// Damping and cap of the Stage-2 time correction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeRefinement {
    pub alpha: f64,
    pub delta_max: f64,
}

impl Default for TimeRefinement {
    fn default() -> Self {
        Self {
            alpha: 0.35,
            delta_max: 1.5,
        }
    }
}

/// `t_base + alpha * clip(t_refined - t_base, -delta_max, +delta_max)`.
pub fn refine_time(t_base: f64, t_refined: f64, r: &TimeRefinement) -> f64 {
    t_base + r.alpha * (t_refined - t_base).clamp(-r.delta_max, r.delta_max)
}

/// Combines the two Stage-1 pass answers of a long clip.
///
/// Both inside the overlap: average time and point, first pass's type.
/// Otherwise the pass whose answer sits in its own exclusive region wins,
/// with the first pass preferred when both do.
pub fn merge_passes(a: &Prediction, b: &Prediction, overlap: &Interval) -> Prediction {
    let a_in = overlap.contains(a.time_s());
    let b_in = overlap.contains(b.time_s());
    let merged = if a_in && b_in {
        let (pa, pb) = (a.centroid(), b.centroid());
        let mid = crate::domain::clamp_point((pa.x() + pb.x()) / 2.0, (pa.y() + pb.y()) / 2.0)
            .expect("midpoint of finite points");
        a.clone()
            .with_time((a.time_s() + b.time_s()) / 2.0, None)
            .with_centroid(mid)
    } else if a.time_s() < overlap.start {
        a.clone()
    } else if b.time_s() > overlap.end {
        b.clone()
    } else {
        a.clone()
    };
    merged.with_source(Source::Stage1)
}

/// Rewrites t-bone to rear-end where perpendicular impacts are impossible.
/// Returns whether the rule fired.
pub fn apply_type_rule(pred: &Prediction, layout: &SceneLayout) -> (Prediction, bool) {
    if pred.collision_type() == CollisionType::TBone && !layout.perpendicular_possible() {
        (pred.clone().with_type(CollisionType::RearEnd), true)
    } else {
        (pred.clone(), false)
    }
}

/// Which refinement stages run after Stage 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct StageSelection {
    pub refine_time: bool,
    pub ground_point: bool,
}

impl StageSelection {
    pub const ALL: StageSelection = StageSelection {
        refine_time: true,
        ground_point: true,
    };
}

impl Default for StageSelection {
    fn default() -> Self {
        Self::ALL
    }
}

impl std::str::FromStr for StageSelection {
    type Err = String;
    /// `1`, `12`, `13` or `123`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "1" => Ok(Self {
                refine_time: false,
                ground_point: false,
            }),
            "12" => Ok(Self {
                refine_time: true,
                ground_point: false,
            }),
            "13" => Ok(Self {
                refine_time: false,
                ground_point: true,
            }),
            "123" => Ok(Self::ALL),
            other => Err(format!(
                "stage selection must be 1, 12, 13 or 123, got {other:?}"
            )),
        }
    }
}

impl TryFrom<String> for StageSelection {
    type Error = String;
    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<StageSelection> for String {
    fn from(s: StageSelection) -> Self {
        let mut out = String::from("1");
        if s.refine_time {
            out.push('2');
        }
        if s.ground_point {
            out.push('3');
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StageConfig {
    pub alpha: f64,
    pub delta_max: f64,
    pub stage1: Stage1Sampling,
    pub stage2: Stage2Sampling,
    pub stage3_longest_px: u32,
    pub stages: StageSelection,
    pub type_rule: bool,
    pub scene_hint: bool,
    /// Re-ask once when an answer cannot be parsed.
    pub reask: bool,
    pub max_tokens: u32,
}

impl Default for StageConfig {
    fn default() -> Self {
        Self {
            alpha: 0.35,
            delta_max: 1.5,
            stage1: Stage1Sampling::default(),
            stage2: Stage2Sampling::default(),
            stage3_longest_px: 960,
            stages: StageSelection::ALL,
            type_rule: true,
            scene_hint: true,
            reask: true,
            max_tokens: 256,
        }
    }
}

impl StageConfig {
    pub fn refinement(&self) -> TimeRefinement {
        TimeRefinement {
            alpha: self.alpha,
            delta_max: self.delta_max,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(format!("alpha must lie in (0, 1], got {}", self.alpha));
        }
        if !(self.delta_max > 0.0 && self.delta_max.is_finite()) {
            return Err(format!("delta_max must be > 0, got {}", self.delta_max));
        }
        if !(self.stage1.fps > 0.0 && self.stage1.pass_len_s > 0.0 && self.stage1.max_frames > 0) {
            return Err("stage1 sampling parameters must be positive".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", content = "detail", rename_all = "lowercase")]
pub enum StageStatus {
    Skipped,
    Ok,
    /// The stage failed; the previous stage's value was kept.
    Degraded(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PassRecord {
    pub interval: Interval,
    pub prediction: Option<Prediction>,
    pub error: Option<String>,
}

/// Everything needed to reconstruct a clip's final answer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineTrace {
    pub clip_id: String,
    pub duration_s: f64,
    pub refinement: TimeRefinement,
    pub passes: Vec<PassRecord>,
    pub overlap: Option<Interval>,
    /// Stage-1 answer after pass merging, before the type rule.
    pub merged_stage1: Prediction,
    pub type_rule_applied: bool,
    pub t_base: f64,
    pub t_refined: Option<f64>,
    pub t_final: f64,
    pub stage2: StageStatus,
    pub stage3_point: Option<Point>,
    pub stage3: StageStatus,
    pub fallback: bool,
    pub final_prediction: Prediction,
}

impl PipelineTrace {
    /// Recomputes the final answer from the recorded intermediates.
    pub fn replay(&self) -> Prediction {
        if self.fallback {
            return self.merged_stage1.clone();
        }
        let base = if self.type_rule_applied {
            self.merged_stage1.clone().with_type(CollisionType::RearEnd)
        } else {
            self.merged_stage1.clone()
        };
        let duration = Some(self.duration_s);
        let mut out = base.with_time(self.merged_stage1.time_s(), duration);
        if let Some(t_ref) = self.t_refined {
            out = out
                .with_time(refine_time(self.t_base, t_ref, &self.refinement), duration)
                .with_source(Source::Stage2);
        }
        if let Some(p) = self.stage3_point {
            out = out.with_centroid(p).with_source(Source::Stage3);
        }
        out
    }
}

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("stage 1 inference failed: {0}")]
    Stage1Backend(#[from] BackendError),
    #[error("stage 1 frames: {0}")]
    Stage1Frames(#[from] FrameLoadError),
}

#[derive(Debug)]
enum AskError {
    Backend(BackendError),
    Frames(FrameLoadError),
    Parse(ParseError),
}

impl std::fmt::Display for AskError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            AskError::Backend(e) => write!(f, "{e}"),
            AskError::Frames(e) => write!(f, "{e}"),
            AskError::Parse(e) => write!(f, "{e}"),
        }
    }
}

/// Runs the stages for one clip against one backend.
pub struct Pipeline<'a> {
    backend: &'a dyn VisionBackend,
    cfg: &'a StageConfig,
    prompts: PromptTemplates,
}

impl<'a> Pipeline<'a> {
    pub fn new(backend: &'a dyn VisionBackend, cfg: &'a StageConfig) -> Self {
        Self {
            backend,
            cfg,
            prompts: PromptTemplates::default(),
        }
    }

    pub fn with_prompts(mut self, prompts: PromptTemplates) -> Self {
        self.prompts = prompts;
        self
    }

    /// Sends a request, re-asking once (if enabled) when the answer does not
    /// parse. Transport errors are not re-asked; the backend already retried.
    fn ask<T>(
        &self,
        clip: &ClipMeta,
        plan: &FramePlan,
        prompt: String,
        pass: usize,
        window: Option<Interval>,
        burn: bool,
        parse: impl Fn(&str) -> Result<T, ParseError>,
    ) -> Result<T, AskError> {
        let frames = prepare_frames(clip, plan, burn).map_err(AskError::Frames)?;
        let mut req = InferenceRequest {
            tag: RequestTag {
                clip_id: clip.clip_id.clone(),
                stage: plan.stage,
                pass,
                window,
                frame_times: plan.timestamps.clone(),
                attempt: 0,
            },
            prompt_text: prompt,
            frames,
            decode: Default::default(),
            max_tokens: self.cfg.max_tokens,
        };
        let attempts = if self.cfg.reask { 2 } else { 1 };
        let mut last = ParseError::NoJsonFound;
        for attempt in 0..attempts {
            if attempt > 0 {
                req.tag.attempt = attempt;
                req.prompt_text.push_str(REASK_SUFFIX);
                log::debug!("{}: re-asking {:?} after {last}", clip.clip_id, plan.stage);
            }
            let text = self.backend.complete(&req).map_err(AskError::Backend)?;
            match parse(&text) {
                Ok(v) => return Ok(v),
                Err(e) => last = e,
            }
        }
        Err(AskError::Parse(last))
    }

    pub fn run(&self, clip: &ClipMeta) -> Result<(Prediction, PipelineTrace), PipelineError> {
        let cfg = self.cfg;
        let duration = Some(clip.duration_s);
        let pass_set = plan_stage1(clip, &cfg.stage1);
        let prompt1 = self
            .prompts
            .stage1(cfg.scene_hint.then_some(&clip.scene_layout));

        let mut passes = Vec::with_capacity(pass_set.passes.len());
        for (i, pass) in pass_set.passes.iter().enumerate() {
            let answer = self.ask(
                clip,
                &pass.plan,
                prompt1.clone(),
                i,
                Some(pass.interval),
                true,
                |t| parse_stage1_response(t, clip),
            );
            let record = match answer {
                Ok(p) => PassRecord {
                    interval: pass.interval,
                    prediction: Some(p),
                    error: None,
                },
                Err(AskError::Parse(e)) => PassRecord {
                    interval: pass.interval,
                    prediction: None,
                    error: Some(e.to_string()),
                },
                Err(AskError::Backend(e)) => return Err(PipelineError::Stage1Backend(e)),
                Err(AskError::Frames(e)) => return Err(PipelineError::Stage1Frames(e)),
            };
            passes.push(record);
        }

        let answers: Vec<&Prediction> = passes
            .iter()
            .filter_map(|p| p.prediction.as_ref())
            .collect();
        let merged = match (answers.as_slice(), pass_set.overlap) {
            ([a, b], Some(overlap)) => Some(merge_passes(a, b, &overlap)),
            ([a, ..], _) => Some((*a).clone()),
            ([], _) => None,
        };

        let Some(merged) = merged else {
            log::warn!("{}: no usable stage-1 answer, using fallback", clip.clip_id);
            let fb = Prediction::fallback(clip);
            let trace = PipelineTrace {
                clip_id: clip.clip_id.clone(),
                duration_s: clip.duration_s,
                refinement: cfg.refinement(),
                passes,
                overlap: pass_set.overlap,
                merged_stage1: fb.clone(),
                type_rule_applied: false,
                t_base: fb.time_s(),
                t_refined: None,
                t_final: fb.time_s(),
                stage2: StageStatus::Skipped,
                stage3_point: None,
                stage3: StageStatus::Skipped,
                fallback: true,
                final_prediction: fb.clone(),
            };
            return Ok((fb, trace));
        };

        let (mut current, type_rule_applied) = if cfg.type_rule {
            apply_type_rule(&merged, &clip.scene_layout)
        } else {
            (merged.clone(), false)
        };
        let t_base = current.time_s();

        let mut t_refined = None;
        let stage2 = if cfg.stages.refine_time {
            let plan = plan_stage2(t_base, clip, &cfg.stage2);
            let window = plan
                .timestamps
                .first()
                .zip(plan.timestamps.last())
                .map(|(a, b)| Interval::new(*a, *b));
            match self.ask(
                clip,
                &plan,
                self.prompts.stage2(t_base),
                0,
                window,
                true,
                |t| parse_stage2_time(t, clip),
            ) {
                Ok(t) => {
                    t_refined = Some(t);
                    current = current
                        .with_time(refine_time(t_base, t, &cfg.refinement()), duration)
                        .with_source(Source::Stage2);
                    StageStatus::Ok
                }
                Err(e) => {
                    log::warn!("{}: stage 2 degraded: {e}", clip.clip_id);
                    StageStatus::Degraded(e.to_string())
                }
            }
        } else {
            StageStatus::Skipped
        };
        let t_final = current.time_s();

        let mut stage3_point = None;
        let stage3 = if cfg.stages.ground_point {
            let plan = plan_stage3(t_final, clip, cfg.stage3_longest_px);
            match self.ask(
                clip,
                &plan,
                self.prompts.stage3(),
                0,
                None,
                false,
                parse_stage3_point,
            ) {
                Ok(p) => {
                    stage3_point = Some(p);
                    current = current.with_centroid(p).with_source(Source::Stage3);
                    StageStatus::Ok
                }
                Err(e) => {
                    log::warn!("{}: stage 3 degraded: {e}", clip.clip_id);
                    StageStatus::Degraded(e.to_string())
                }
            }
        } else {
            StageStatus::Skipped
        };

        let trace = PipelineTrace {
            clip_id: clip.clip_id.clone(),
            duration_s: clip.duration_s,
            refinement: cfg.refinement(),
            passes,
            overlap: pass_set.overlap,
            merged_stage1: merged,
            type_rule_applied,
            t_base,
            t_refined,
            t_final,
            stage2,
            stage3_point,
            stage3,
            fallback: false,
            final_prediction: current.clone(),
        };
        Ok((current, trace))
    }
}

/// Convenience wrapper around [`Pipeline::run`] with the built-in prompts.
pub fn run_pipeline(
    clip: &ClipMeta,
    backend: &dyn VisionBackend,
    cfg: &StageConfig,
) -> Result<(Prediction, PipelineTrace), PipelineError> {
    Pipeline::new(backend, cfg).run(clip)
}
