//! Temporal, spatial and classification scores and their harmonic mean.
//!
//! Both kernels are unnormalized Gaussians `exp(-d² / 2σ²)`, so a perfect
//! prediction scores exactly 1.

use std::collections::{HashMap, HashSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::domain::{GroundTruth, Point, Prediction};
use crate::error::MetricError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case")]
pub enum SpatialSigma {
    /// Mean annotated box width and height over the scored set.
    MeanBboxDims,
    /// Each clip's own box width and height.
    PerClipBbox,
    Explicit {
        sigma_x: f64,
        sigma_y: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Aggregation {
    /// Mean T, S, C over clips, then the harmonic mean of the three.
    HarmonicOfMeans,
    /// Per-clip harmonic mean, then the mean over clips.
    MeanOfPerClip,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MetricConfig {
    pub temporal_sigmas: Vec<f64>,
    pub spatial_sigma: SpatialSigma,
    pub aggregation: Aggregation,
}

impl Default for MetricConfig {
    fn default() -> Self {
        Self {
            temporal_sigmas: vec![0.5, 1.0, 2.0],
            spatial_sigma: SpatialSigma::MeanBboxDims,
            aggregation: Aggregation::HarmonicOfMeans,
        }
    }
}

impl MetricConfig {
    pub fn validate(&self) -> Result<(), MetricError> {
        if self.temporal_sigmas.is_empty() {
            return Err(MetricError::Config("temporal_sigmas is empty".into()));
        }
        if self
            .temporal_sigmas
            .iter()
            .any(|s| !(*s > 0.0 && s.is_finite()))
        {
            return Err(MetricError::Config("temporal sigmas must be > 0".into()));
        }
        if let SpatialSigma::Explicit { sigma_x, sigma_y } = self.spatial_sigma {
            if !(sigma_x > 0.0 && sigma_y > 0.0 && sigma_x.is_finite() && sigma_y.is_finite()) {
                return Err(MetricError::Config("spatial sigmas must be > 0".into()));
            }
        }
        Ok(())
    }
}

/// Mean over `sigmas` of `exp(-(t_pred - t_gt)² / 2σ²)`.
pub fn temporal_score(t_pred: f64, t_gt: f64, sigmas: &[f64]) -> f64 {
    if sigmas.is_empty() {
        return 0.0;
    }
    let d2 = (t_pred - t_gt).powi(2);
    sigmas
        .iter()
        .map(|s| (-d2 / (2.0 * s * s)).exp())
        .sum::<f64>()
        / sigmas.len() as f64
}

/// Anisotropic kernel `exp(-(dx²/2σx² + dy²/2σy²))`.
pub fn spatial_score(p: Point, gt: Point, sigma_x: f64, sigma_y: f64) -> f64 {
    let dx = p.x() - gt.x();
    let dy = p.y() - gt.y();
    (-(dx * dx / (2.0 * sigma_x * sigma_x) + dy * dy / (2.0 * sigma_y * sigma_y))).exp()
}

/// Mean annotated box width and height.
pub fn mean_bbox_sigmas(gts: &[GroundTruth]) -> Result<(f64, f64), MetricError> {
    if gts.is_empty() {
        return Err(MetricError::Config(
            "cannot derive spatial sigmas from an empty ground-truth set".into(),
        ));
    }
    let n = gts.len() as f64;
    let sx = gts.iter().map(|g| g.bbox.width()).sum::<f64>() / n;
    let sy = gts.iter().map(|g| g.bbox.height()).sum::<f64>() / n;
    Ok((sx, sy))
}

/// Harmonic mean of the three component scores; 0 if any of them is 0.
pub fn acc_s(t: f64, s: f64, c: f64) -> f64 {
    if t <= 0.0 || s <= 0.0 || c <= 0.0 {
        return 0.0;
    }
    3.0 / (1.0 / t + 1.0 / s + 1.0 / c)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClipScore {
    pub clip_id: String,
    pub predicted: bool,
    pub temporal: f64,
    pub spatial: f64,
    pub type_correct: bool,
}

impl ClipScore {
    pub fn acc_s(&self) -> f64 {
        acc_s(
            self.temporal,
            self.spatial,
            f64::from(u8::from(self.type_correct)),
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    pub t: f64,
    pub s: f64,
    pub c: f64,
    pub acc_s: f64,
    pub n_clips: usize,
    pub n_predicted: usize,
    pub n_missing: usize,
    /// Predictions whose clip has no ground truth (ignored).
    pub n_unmatched: usize,
    /// Spatial sigmas used, when a single pair applies to every clip.
    pub sigma_xy: Option<(f64, f64)>,
    pub config: MetricConfig,
    pub clips: Vec<ClipScore>,
}

impl ScoreReport {
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{:<10} {:>8}", "metric", "value");
        for (name, v) in [
            ("ACC^S", self.acc_s),
            ("T", self.t),
            ("S", self.s),
            ("C", self.c),
        ] {
            let _ = writeln!(out, "{name:<10} {v:>8.4}");
        }
        let _ = writeln!(
            out,
            "clips {} (predicted {}, missing {}, unmatched predictions {})",
            self.n_clips, self.n_predicted, self.n_missing, self.n_unmatched
        );
        if let Some((sx, sy)) = self.sigma_xy {
            let _ = writeln!(out, "sigma_x {sx:.4}  sigma_y {sy:.4}");
        }
        out
    }
}

/// Scores a prediction set against ground truth. Clips without a prediction
/// score zero on every component.
pub fn score_dataset(
    preds: &[Prediction],
    gts: &[GroundTruth],
    cfg: &MetricConfig,
) -> Result<ScoreReport, MetricError> {
    cfg.validate()?;
    let mut by_id: HashMap<&str, &Prediction> = HashMap::with_capacity(preds.len());
    for p in preds {
        if by_id.insert(p.clip_id(), p).is_some() {
            return Err(MetricError::DuplicatePrediction(p.clip_id().to_string()));
        }
    }
    let gt_ids: HashSet<&str> = gts.iter().map(|g| g.clip_id.as_str()).collect();
    let n_unmatched = by_id.keys().filter(|id| !gt_ids.contains(*id)).count();

    let shared = match cfg.spatial_sigma {
        SpatialSigma::MeanBboxDims => Some(mean_bbox_sigmas(gts)?),
        SpatialSigma::Explicit { sigma_x, sigma_y } => Some((sigma_x, sigma_y)),
        SpatialSigma::PerClipBbox => None,
    };

    let clips: Vec<ClipScore> = gts
        .iter()
        .map(|g| match by_id.get(g.clip_id.as_str()) {
            Some(p) => {
                let (sx, sy) = shared.unwrap_or((g.bbox.width(), g.bbox.height()));
                ClipScore {
                    clip_id: g.clip_id.clone(),
                    predicted: true,
                    temporal: temporal_score(p.time_s(), g.time_s, &cfg.temporal_sigmas),
                    spatial: spatial_score(p.centroid(), g.center(), sx, sy),
                    type_correct: p.collision_type() == g.collision_type,
                }
            }
            None => ClipScore {
                clip_id: g.clip_id.clone(),
                predicted: false,
                temporal: 0.0,
                spatial: 0.0,
                type_correct: false,
            },
        })
        .collect();

    let n = clips.len().max(1) as f64;
    let t = clips.iter().map(|c| c.temporal).sum::<f64>() / n;
    let s = clips.iter().map(|c| c.spatial).sum::<f64>() / n;
    let c = clips.iter().filter(|c| c.type_correct).count() as f64 / n;
    let acc = match cfg.aggregation {
        Aggregation::HarmonicOfMeans => acc_s(t, s, c),
        Aggregation::MeanOfPerClip => clips.iter().map(ClipScore::acc_s).sum::<f64>() / n,
    };
    let n_predicted = clips.iter().filter(|c| c.predicted).count();
    Ok(ScoreReport {
        t,
        s,
        c,
        acc_s: acc,
        n_clips: clips.len(),
        n_predicted,
        n_missing: clips.len() - n_predicted,
        n_unmatched,
        sigma_xy: shared,
        config: cfg.clone(),
        clips,
    })
}
