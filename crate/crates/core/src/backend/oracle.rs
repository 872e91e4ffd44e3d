//! Simulated model that answers from ground truth with controlled noise.
//!
//! Noise is drawn from a ChaCha stream seeded by `(seed, clip_id, stage,
//! pass)`, so every answer is reproducible and independent of call order.

use std::collections::HashMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use serde_json::json;
use sha2::{Digest, Sha256};

use super::{InferenceRequest, RequestTag, VisionBackend};
use crate::domain::{CollisionType, GroundTruth};
use crate::error::BackendError;
use crate::plan::Stage;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OracleNoise {
    pub stage1_time_sigma_s: f64,
    /// Systematic offset added to every Stage-1 time.
    pub stage1_time_bias_s: f64,
    pub stage2_time_sigma_s: f64,
    /// Coarse grid the Stage-1 point is snapped to before jitter; 0 disables.
    pub grid_quantum: f64,
    pub stage1_space_sigma: f64,
    pub stage3_space_sigma: f64,
    pub type_flip_prob: f64,
    pub seed: u64,
}

impl Default for OracleNoise {
    fn default() -> Self {
        Self::noiseless(0)
    }
}

impl OracleNoise {
    pub fn noiseless(seed: u64) -> Self {
        Self {
            stage1_time_sigma_s: 0.0,
            stage1_time_bias_s: 0.0,
            stage2_time_sigma_s: 0.0,
            grid_quantum: 0.0,
            stage1_space_sigma: 0.0,
            stage3_space_sigma: 0.0,
            type_flip_prob: 0.0,
            seed,
        }
    }

    fn validate(&self) -> Result<(), BackendError> {
        let sigmas = [
            self.stage1_time_sigma_s,
            self.stage2_time_sigma_s,
            self.grid_quantum,
            self.stage1_space_sigma,
            self.stage3_space_sigma,
        ];
        if sigmas.iter().any(|s| !(s.is_finite() && *s >= 0.0))
            || !self.stage1_time_bias_s.is_finite()
        {
            return Err(BackendError::Config(
                "oracle noise scales must be finite and >= 0".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.type_flip_prob) {
            return Err(BackendError::Config(
                "oracle type_flip_prob must lie in [0, 1]".into(),
            ));
        }
        Ok(())
    }
}

fn stream(seed: u64, tag: &RequestTag) -> ChaCha8Rng {
    let key = format!("{seed}|{}|{}|{}", tag.clip_id, tag.stage.as_str(), tag.pass);
    let digest = Sha256::digest(key.as_bytes());
    let mut bytes = [0u8; 32];
    bytes.copy_from_slice(&digest[..32]);
    ChaCha8Rng::from_seed(bytes)
}

fn gauss(rng: &mut ChaCha8Rng, sigma: f64) -> f64 {
    // sigma is validated >= 0; Normal accepts a zero scale
    Normal::new(0.0, sigma)
        .map(|n| n.sample(rng))
        .unwrap_or(0.0)
}

fn quantize(v: f64, q: f64) -> f64 {
    if q > 0.0 {
        (v / q).round() * q
    } else {
        v
    }
}

/// A stage-appropriate JSON completion derived from `truth`.
///
/// The draw order is fixed (time, x, y, flip, replacement class) regardless of
/// which values a stage uses, so noise settings never shift one another.
pub fn oracle_respond(truth: &GroundTruth, noise: &OracleNoise, tag: &RequestTag) -> String {
    let mut rng = stream(noise.seed, tag);
    let time_sigma = match tag.stage {
        Stage::Stage1 => noise.stage1_time_sigma_s,
        _ => noise.stage2_time_sigma_s,
    };
    let space_sigma = match tag.stage {
        Stage::Stage3 => noise.stage3_space_sigma,
        _ => noise.stage1_space_sigma,
    };
    let dt = gauss(&mut rng, time_sigma);
    let dx = gauss(&mut rng, space_sigma);
    let dy = gauss(&mut rng, space_sigma);
    let flip = rng.random::<f64>() < noise.type_flip_prob;
    let other = rng.random_range(0..CollisionType::ALL.len() - 1);

    let clamp_window = |t: f64| {
        let t = match tag.window {
            Some(w) => t.clamp(w.start, w.end),
            None => t,
        };
        t.max(0.0)
    };
    let center = truth.center();
    match tag.stage {
        Stage::Stage1 => {
            let bias = noise.stage1_time_bias_s;
            let time_s = clamp_window(truth.time_s + bias + dt);
            let x = (quantize(center.x(), noise.grid_quantum) + dx).clamp(0.0, 1.0);
            let y = (quantize(center.y(), noise.grid_quantum) + dy).clamp(0.0, 1.0);
            let collision_type = if flip {
                let rest: Vec<_> = CollisionType::ALL
                    .into_iter()
                    .filter(|t| *t != truth.collision_type)
                    .collect();
                rest[other]
            } else {
                truth.collision_type
            };
            json!({"time_s": time_s, "x": x, "y": y, "type": collision_type.as_str()}).to_string()
        }
        Stage::Stage2 => json!({"time_s": clamp_window(truth.time_s + dt)}).to_string(),
        Stage::Stage3 => {
            let x = (center.x() + dx).clamp(0.0, 1.0) * 1000.0;
            let y = (center.y() + dy).clamp(0.0, 1.0) * 1000.0;
            json!({"x": x, "y": y}).to_string()
        }
    }
}

/// In-process backend answering every request with [`oracle_respond`].
#[derive(Debug, Clone)]
pub struct OracleBackend {
    truths: Arc<HashMap<String, GroundTruth>>,
    noise: OracleNoise,
    calls: Arc<[AtomicUsize; 3]>,
}

impl OracleBackend {
    pub fn new<I>(truths: I, noise: OracleNoise) -> Result<Self, BackendError>
    where
        I: IntoIterator<Item = GroundTruth>,
    {
        noise.validate()?;
        Ok(Self {
            truths: Arc::new(truths.into_iter().map(|g| (g.clip_id.clone(), g)).collect()),
            noise,
            calls: Arc::new(Default::default()),
        })
    }

    pub fn noise(&self) -> &OracleNoise {
        &self.noise
    }

    /// Number of completed requests for `stage` across all clones.
    pub fn calls(&self, stage: Stage) -> usize {
        self.calls[stage as usize].load(Ordering::SeqCst)
    }

    pub fn total_calls(&self) -> usize {
        [Stage::Stage1, Stage::Stage2, Stage::Stage3]
            .into_iter()
            .map(|s| self.calls(s))
            .sum()
    }
}

impl VisionBackend for OracleBackend {
    fn complete(&self, req: &InferenceRequest) -> Result<String, BackendError> {
        let truth = self
            .truths
            .get(&req.tag.clip_id)
            .ok_or_else(|| BackendError::BadPayload {
                clip_id: req.tag.clip_id.clone(),
                message: "oracle has no ground truth for this clip".into(),
            })?;
        self.calls[req.tag.stage as usize].fetch_add(1, Ordering::SeqCst);
        Ok(oracle_respond(truth, &self.noise, &req.tag))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::{parse_stage1_response, parse_stage3_point};
    use crate::domain::{BBox, ClipMeta, SceneLayout};
    use crate::plan::Interval;
    use proptest::prelude::*;

    fn truth(x0: f64, y0: f64, x1: f64, y1: f64, t: f64) -> GroundTruth {
        GroundTruth {
            clip_id: "c".into(),
            time_s: t,
            bbox: BBox::new(x0, y0, x1, y1).unwrap(),
            collision_type: CollisionType::Sideswipe,
        }
    }

    fn tag(stage: Stage) -> RequestTag {
        RequestTag {
            clip_id: "c".into(),
            stage,
            pass: 0,
            window: Some(Interval::new(0.0, 30.0)),
            frame_times: Vec::new(),
            attempt: 0,
        }
    }

    fn field(text: &str, key: &str) -> serde_json::Value {
        serde_json::from_str::<serde_json::Value>(text).unwrap()[key].clone()
    }

    #[test]
    fn noiseless_stage1_is_exact() {
        let g = truth(0.3, 0.4, 0.5, 0.6, 12.5);
        let text = oracle_respond(&g, &OracleNoise::noiseless(1), &tag(Stage::Stage1));
        assert_eq!(field(&text, "time_s"), 12.5);
        assert_eq!(field(&text, "x").as_f64().unwrap(), g.center().x());
        assert_eq!(field(&text, "y").as_f64().unwrap(), g.center().y());
        assert_eq!(field(&text, "type"), "sideswipe");
    }

    #[test]
    fn grid_quantization() {
        // center (0.43, 0.57)
        let g = truth(0.38, 0.52, 0.48, 0.62, 5.0);
        let noise = OracleNoise {
            grid_quantum: 0.1,
            ..OracleNoise::noiseless(3)
        };
        let text = oracle_respond(&g, &noise, &tag(Stage::Stage1));
        assert!((field(&text, "x").as_f64().unwrap() - 0.4).abs() < 1e-12);
        assert!((field(&text, "y").as_f64().unwrap() - 0.6).abs() < 1e-12);
        // stage 3 is never quantized
        let text = oracle_respond(&g, &noise, &tag(Stage::Stage3));
        let p = parse_stage3_point(&text).unwrap();
        assert!((p.x() - 0.43).abs() < 1e-12 && (p.y() - 0.57).abs() < 1e-12);
    }

    #[test]
    fn deterministic_per_seed() {
        let g = truth(0.1, 0.1, 0.3, 0.3, 9.0);
        let noise = OracleNoise {
            stage1_time_sigma_s: 1.0,
            stage1_space_sigma: 0.05,
            type_flip_prob: 0.5,
            ..OracleNoise::noiseless(42)
        };
        let a = oracle_respond(&g, &noise, &tag(Stage::Stage1));
        let b = oracle_respond(&g, &noise, &tag(Stage::Stage1));
        assert_eq!(a, b);
        let other = OracleNoise { seed: 43, ..noise };
        assert_ne!(a, oracle_respond(&g, &other, &tag(Stage::Stage1)));
    }

    #[test]
    fn stage1_time_stays_in_window() {
        let g = truth(0.1, 0.1, 0.3, 0.3, 35.0);
        let text = oracle_respond(&g, &OracleNoise::noiseless(0), &tag(Stage::Stage1));
        assert_eq!(field(&text, "time_s"), 30.0);
    }

    #[test]
    fn flips_always_change_type() {
        let g = truth(0.1, 0.1, 0.3, 0.3, 5.0);
        for seed in 0..50 {
            let noise = OracleNoise {
                type_flip_prob: 1.0,
                ..OracleNoise::noiseless(seed)
            };
            let text = oracle_respond(&g, &noise, &tag(Stage::Stage1));
            assert_ne!(field(&text, "type"), "sideswipe");
        }
    }

    #[test]
    fn rejects_bad_noise() {
        let noise = OracleNoise {
            type_flip_prob: 1.5,
            ..OracleNoise::noiseless(0)
        };
        assert!(OracleBackend::new([], noise).is_err());
    }

    proptest! {
        #[test]
        fn noiseless_roundtrip(
            cx in 0.1f64..0.9, cy in 0.1f64..0.9,
            w in 0.05f64..0.2, h in 0.05f64..0.2,
            t in 0.0f64..30.0,
        ) {
            let g = truth(cx - w / 2.0, cy - h / 2.0, cx + w / 2.0, cy + h / 2.0, t);
            let clip = ClipMeta::new("c", 30.0, 30.0, SceneLayout::new("urban")).unwrap();
            let text = oracle_respond(&g, &OracleNoise::noiseless(7), &tag(Stage::Stage1));
            let p = parse_stage1_response(&text, &clip).unwrap();
            prop_assert!((p.time_s() - t).abs() < 1e-9);
            prop_assert!((p.centroid().x() - g.center().x()).abs() < 1e-9);
            prop_assert!((p.centroid().y() - g.center().y()).abs() < 1e-9);
            prop_assert_eq!(p.collision_type(), g.collision_type);
        }
    }
}
