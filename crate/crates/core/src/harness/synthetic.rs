use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::io::{write_detections, write_jsonl, Manifest};
use crate::domain::{
    BBox, ClipMeta, CollisionType, Detection, FrameSource, GroundTruth, LayoutPolicy,
    VEHICLE_CLASSES,
};
use crate::error::HarnessError;
use crate::overlay::render_flat_frames;

/// Generator parameters. Defaults: duration U[25, 35] s, accident time
/// U[0.1 d, 0.9 d], box center in the central 80% of the frame, box sides
/// U[0.05, 0.2].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticParams {
    pub seed: u64,
    pub duration_min_s: f64,
    pub duration_max_s: f64,
    pub time_frac_min: f64,
    pub time_frac_max: f64,
    /// Box centers are drawn from `[margin, 1 - margin]²`.
    pub center_margin: f64,
    pub size_min: f64,
    pub size_max: f64,
    pub native_fps: f64,
    pub detection_fps: f64,
    /// Extra vehicle boxes per clip at random frames.
    pub distractors_per_clip: usize,
    pub layouts: Vec<String>,
    pub clip_prefix: String,
}

impl Default for SyntheticParams {
    fn default() -> Self {
        Self {
            seed: 0,
            duration_min_s: 25.0,
            duration_max_s: 35.0,
            time_frac_min: 0.1,
            time_frac_max: 0.9,
            center_margin: 0.1,
            size_min: 0.05,
            size_max: 0.2,
            native_fps: 30.0,
            detection_fps: 10.0,
            distractors_per_clip: 0,
            layouts: [
                "highway",
                "tunnel",
                "grade-separated intersection",
                "4-way intersection",
                "t-junction",
                "roundabout",
                "urban street",
                "rural road",
            ]
            .iter()
            .map(|s| s.to_string())
            .collect(),
            clip_prefix: "syn".into(),
        }
    }
}

impl SyntheticParams {
    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: &str| Err(HarnessError::Config(format!("synthetic: {m}")));
        if !(self.duration_min_s > 0.0 && self.duration_min_s <= self.duration_max_s) {
            return bad("need 0 < duration_min_s <= duration_max_s");
        }
        if !(0.0 <= self.time_frac_min
            && self.time_frac_min <= self.time_frac_max
            && self.time_frac_max <= 1.0)
        {
            return bad("need 0 <= time_frac_min <= time_frac_max <= 1");
        }
        if !(0.0 < self.size_min && self.size_min <= self.size_max) {
            return bad("need 0 < size_min <= size_max");
        }
        if !(self.center_margin >= self.size_max / 2.0 && self.center_margin < 0.5) {
            return bad("center_margin must be in [size_max / 2, 0.5)");
        }
        if !(self.native_fps > 0.0 && self.detection_fps > 0.0) {
            return bad("fps values must be > 0");
        }
        if self.layouts.is_empty() {
            return bad("layouts must not be empty");
        }
        Ok(())
    }
}

/// One generated clip with its annotation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticScenario {
    pub clip: ClipMeta,
    pub truth: GroundTruth,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSet {
    pub scenarios: Vec<SyntheticScenario>,
    pub detections: Vec<Detection>,
    pub detection_fps: f64,
}

fn uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    if hi > lo {
        rng.random_range(lo..hi)
    } else {
        lo
    }
}

fn random_box(rng: &mut ChaCha8Rng, p: &SyntheticParams) -> BBox {
    let cx = uniform(rng, p.center_margin, 1.0 - p.center_margin);
    let cy = uniform(rng, p.center_margin, 1.0 - p.center_margin);
    let w = uniform(rng, p.size_min, p.size_max);
    let h = uniform(rng, p.size_min, p.size_max);
    let c = |v: f64| v.clamp(0.0, 1.0);
    BBox::new(
        c(cx - w / 2.0),
        c(cy - h / 2.0),
        c(cx + w / 2.0),
        c(cy + h / 2.0),
    )
    .expect("positive sides inside the unit square")
}

/// Draws `n` scenarios. Types are uniform over the classes the layout
/// admits, so layouts without perpendicular impacts never get t-bone.
pub fn generate_synthetic(
    n: usize,
    params: &SyntheticParams,
    policy: &LayoutPolicy,
) -> Result<SyntheticSet, HarnessError> {
    if n == 0 {
        return Err(HarnessError::Config("synthetic: n must be >= 1".into()));
    }
    params.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut scenarios = Vec::with_capacity(n);
    let mut detections = Vec::new();
    for i in 0..n {
        let clip_id = format!("{}_{i:05}", params.clip_prefix);
        let duration = uniform(&mut rng, params.duration_min_s, params.duration_max_s);
        let frac = uniform(&mut rng, params.time_frac_min, params.time_frac_max);
        let layout_tag = &params.layouts[rng.random_range(0..params.layouts.len())];
        let layout = policy.classify(layout_tag);
        let allowed: Vec<CollisionType> = CollisionType::ALL
            .into_iter()
            .filter(|t| layout.perpendicular_possible() || *t != CollisionType::TBone)
            .collect();
        let collision_type = allowed[rng.random_range(0..allowed.len())];
        let bbox = random_box(&mut rng, params);
        let time_s = frac * duration;

        let clip = ClipMeta::new(&clip_id, duration, params.native_fps, layout)?;
        let truth = GroundTruth {
            clip_id: clip_id.clone(),
            time_s,
            bbox,
            collision_type,
        };
        let max_frame = (duration * params.detection_fps).floor() as u64;
        let frame = ((time_s * params.detection_fps).round() as u64).min(max_frame);
        detections.push(Detection {
            clip_id: clip_id.clone(),
            frame_idx: frame,
            bbox,
            label: "car".into(),
            score: 0.9,
        });
        for _ in 0..params.distractors_per_clip {
            let b = random_box(&mut rng, params);
            let f = rng.random_range(0..=max_frame);
            let label = VEHICLE_CLASSES[rng.random_range(0..VEHICLE_CLASSES.len())];
            detections.push(Detection {
                clip_id: clip_id.clone(),
                frame_idx: f,
                bbox: b,
                label: label.into(),
                score: uniform(&mut rng, 0.3, 1.0),
            });
        }
        scenarios.push(SyntheticScenario {
            clip,
            truth,
            seed: params.seed,
        });
    }
    Ok(SyntheticSet {
        scenarios,
        detections,
        detection_fps: params.detection_fps,
    })
}

/// Frame rendering for overlay and image-path tests.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RenderSpec {
    pub fps: f64,
    pub width: u32,
    pub height: u32,
}

impl SyntheticSet {
    pub fn clips(&self) -> Vec<ClipMeta> {
        self.scenarios.iter().map(|s| s.clip.clone()).collect()
    }

    pub fn truths(&self) -> Vec<GroundTruth> {
        self.scenarios.iter().map(|s| s.truth.clone()).collect()
    }

    /// Writes `manifest.json`, `ground_truth.jsonl` and `detections.jsonl`
    /// into `dir`, optionally with flat-colour frames under `frames/<clip>/`.
    pub fn write(&self, dir: &Path, render: Option<RenderSpec>) -> Result<PathBuf, HarnessError> {
        let mut clips = self.clips();
        if let Some(r) = render {
            for clip in &mut clips {
                let rel = PathBuf::from("frames").join(&clip.clip_id);
                let count = (clip.duration_s * r.fps).floor() as u64 + 1;
                let abs = dir.join(&rel);
                render_flat_frames(&abs, count, r.width, r.height)
                    .map_err(|e| HarnessError::io(&abs, e))?;
                *clip = clip.clone().with_frame_source(FrameSource {
                    dir: rel,
                    fps: r.fps,
                    extension: "png".into(),
                });
            }
        }
        let mut manifest = Manifest::new(clips);
        manifest.ground_truth = Some("ground_truth.jsonl".into());
        manifest.detections = Some("detections.jsonl".into());
        write_jsonl(&dir.join("ground_truth.jsonl"), &self.truths())?;
        write_detections(
            &dir.join("detections.jsonl"),
            self.detection_fps,
            &self.detections,
        )?;
        let path = dir.join("manifest.json");
        manifest.save(&path)?;
        Ok(path)
    }
}
