//! Model-scale ensemble and detection-conditioned point snapping.

use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::domain::{clamp_point, Detection, Point, Prediction, Source, VEHICLE_CLASSES};
use crate::error::EnsembleMismatch;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum RunLabel {
    #[default]
    A,
    B,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EnsembleConfig {
    /// Weight of run A.
    pub lambda: f64,
    /// Run whose collision type is kept.
    pub type_source: RunLabel,
}

impl Default for EnsembleConfig {
    fn default() -> Self {
        Self {
            lambda: 0.9,
            type_source: RunLabel::A,
        }
    }
}

/// `lambda * a + (1 - lambda) * b` on time and both coordinates.
pub fn blend(
    a: &Prediction,
    b: &Prediction,
    cfg: &EnsembleConfig,
) -> Result<Prediction, EnsembleMismatch> {
    if a.clip_id() != b.clip_id() {
        return Err(EnsembleMismatch {
            a: a.clip_id().to_string(),
            b: b.clip_id().to_string(),
        });
    }
    let l = cfg.lambda.clamp(0.0, 1.0);
    let mix = |x: f64, y: f64| l * x + (1.0 - l) * y;
    let (pa, pb) = (a.centroid(), b.centroid());
    let point = clamp_point(mix(pa.x(), pb.x()), mix(pa.y(), pb.y()))
        .expect("convex combination of finite coordinates");
    let collision_type = match cfg.type_source {
        RunLabel::A => a.collision_type(),
        RunLabel::B => b.collision_type(),
    };
    Ok(a.clone()
        .with_time(mix(a.time_s(), b.time_s()), None)
        .with_centroid(point)
        .with_type(collision_type)
        .with_source(Source::Ensemble))
}

/// Blends two runs clip by clip. Clips present only in run A pass through
/// unchanged; clips only in run B are dropped.
pub fn blend_runs(
    a: &[Prediction],
    b: &[Prediction],
    cfg: &EnsembleConfig,
) -> Result<Vec<Prediction>, EnsembleMismatch> {
    let by_id: HashMap<&str, &Prediction> = b.iter().map(|p| (p.clip_id(), p)).collect();
    a.iter()
        .map(|pa| match by_id.get(pa.clip_id()) {
            Some(pb) => blend(pa, pb, cfg),
            None => Ok(pa.clone()),
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SnapConfig {
    /// Largest allowed displacement, in normalized units.
    pub delta_snap: f64,
    pub half_window_frames: u64,
    /// Frame rate the detection `frame_idx` values refer to.
    pub detection_fps: f64,
    pub vehicle_classes: BTreeSet<String>,
    /// Window doublings allowed when no vehicle is found; `None` keeps
    /// doubling until the window spans every detection of the clip.
    pub max_doublings: Option<u32>,
}

impl Default for SnapConfig {
    fn default() -> Self {
        Self {
            delta_snap: 0.2,
            half_window_frames: 10,
            detection_fps: 30.0,
            vehicle_classes: VEHICLE_CLASSES.iter().map(|s| s.to_string()).collect(),
            max_doublings: None,
        }
    }
}

impl SnapConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.delta_snap > 0.0) {
            return Err("delta_snap must be > 0".into());
        }
        if self.half_window_frames < 1 {
            return Err("half_window_frames must be >= 1".into());
        }
        if !(self.detection_fps > 0.0 && self.detection_fps.is_finite()) {
            return Err("detection_fps must be > 0".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum SnapStatus {
    Snapped {
        displacement: f64,
        doublings: u32,
    },
    /// The point already lies on the chosen vehicle box.
    Inside {
        doublings: u32,
    },
    Cancelled {
        displacement: f64,
        doublings: u32,
    },
    NoVehicle {
        doublings: u32,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SnapOutcome {
    pub prediction: Prediction,
    pub status: SnapStatus,
}

/// Pulls the point onto the nearest detected vehicle around the predicted time.
///
/// Vehicle boxes within `±half_window_frames` of the predicted frame are
/// candidates (the window doubles while empty). Boxes that already contain
/// the point take precedence; among the rest the nearest center wins, ties
/// going to the larger box and then the earlier frame. The point is clamped
/// into that box unless doing so would move it farther than `delta_snap`.
pub fn snap(pred: &Prediction, detections: &[Detection], cfg: &SnapConfig) -> SnapOutcome {
    let vehicles: Vec<&Detection> = detections
        .iter()
        .filter(|d| d.clip_id == pred.clip_id() && cfg.vehicle_classes.contains(&d.label))
        .collect();
    let unchanged = |status| SnapOutcome {
        prediction: pred.clone(),
        status,
    };
    let (Some(min_f), Some(max_f)) = (
        vehicles.iter().map(|d| d.frame_idx).min(),
        vehicles.iter().map(|d| d.frame_idx).max(),
    ) else {
        return unchanged(SnapStatus::NoVehicle { doublings: 0 });
    };

    let center_frame = (pred.time_s() * cfg.detection_fps).round() as i64;
    let mut half = cfg.half_window_frames.max(1) as i64;
    let mut doublings = 0u32;
    let candidates = loop {
        let in_window: Vec<&Detection> = vehicles
            .iter()
            .copied()
            .filter(|d| (d.frame_idx as i64 - center_frame).abs() <= half)
            .collect();
        if !in_window.is_empty() {
            break in_window;
        }
        let spans_all = center_frame - half <= min_f as i64 && center_frame + half >= max_f as i64;
        let capped = cfg.max_doublings.is_some_and(|m| doublings >= m);
        if spans_all || capped {
            return unchanged(SnapStatus::NoVehicle { doublings });
        }
        half = half.saturating_mul(2);
        doublings += 1;
    };

    let p = pred.centroid();
    let containing: Vec<&Detection> = candidates
        .iter()
        .copied()
        .filter(|d| d.bbox.contains(p))
        .collect();
    let pool = if containing.is_empty() {
        &candidates
    } else {
        &containing
    };
    let chosen = pool
        .iter()
        .min_by(|a, b| {
            p.distance(a.bbox.center())
                .total_cmp(&p.distance(b.bbox.center()))
                .then(b.bbox.area().total_cmp(&a.bbox.area()))
                .then(a.frame_idx.cmp(&b.frame_idx))
        })
        .expect("candidate pool is non-empty");

    let target: Point = chosen.bbox.clamp(p);
    let displacement = target.distance(p);
    if target == p {
        unchanged(SnapStatus::Inside { doublings })
    } else if displacement > cfg.delta_snap {
        unchanged(SnapStatus::Cancelled {
            displacement,
            doublings,
        })
    } else {
        SnapOutcome {
            prediction: pred
                .clone()
                .with_centroid(target)
                .with_source(Source::Snapped),
            status: SnapStatus::Snapped {
                displacement,
                doublings,
            },
        }
    }
}

/// Detections grouped by clip, as loaded from a detections file.
#[derive(Debug, Clone, Default)]
pub struct DetectionIndex {
    pub detection_fps: f64,
    by_clip: HashMap<String, Vec<Detection>>,
}

impl DetectionIndex {
    pub fn new(detection_fps: f64, detections: impl IntoIterator<Item = Detection>) -> Self {
        let mut by_clip: HashMap<String, Vec<Detection>> = HashMap::new();
        for d in detections {
            by_clip.entry(d.clip_id.clone()).or_default().push(d);
        }
        Self {
            detection_fps,
            by_clip,
        }
    }

    pub fn for_clip(&self, clip_id: &str) -> &[Detection] {
        self.by_clip.get(clip_id).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn len(&self) -> usize {
        self.by_clip.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn iter(&self) -> impl Iterator<Item = &Detection> {
        self.by_clip.values().flatten()
    }

    /// Snaps every prediction; the index's frame rate overrides `cfg`'s.
    pub fn snap_all(&self, preds: &[Prediction], cfg: &SnapConfig) -> Vec<SnapOutcome> {
        let cfg = SnapConfig {
            detection_fps: self.detection_fps,
            ..cfg.clone()
        };
        preds
            .iter()
            .map(|p| snap(p, self.for_clip(p.clip_id()), &cfg))
            .collect()
    }
}
