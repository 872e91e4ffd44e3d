use std::sync::atomic::{AtomicUsize, Ordering};

use proptest::prelude::*;

use accident_pipeline::backend::{InferenceRequest, OracleBackend, OracleNoise, VisionBackend};
use accident_pipeline::domain::{
    BBox, ClipMeta, CollisionType, GroundTruth, LayoutPolicy, Point, SceneLayout, Source,
};
use accident_pipeline::error::BackendError;
use accident_pipeline::harness::{generate_synthetic, SyntheticParams};
use accident_pipeline::pipeline::{run_pipeline, PipelineError, StageConfig, StageStatus};
use accident_pipeline::plan::Stage;

/// Answers each stage with a fixed closure.
struct Scripted<F>(F);

impl<F> VisionBackend for Scripted<F>
where
    F: Fn(&InferenceRequest) -> Result<String, BackendError> + Send + Sync,
{
    fn complete(&self, req: &InferenceRequest) -> Result<String, BackendError> {
        (self.0)(req)
    }
}

fn clip(id: &str, d: f64, layout: &str) -> ClipMeta {
    ClipMeta::new(id, d, 30.0, SceneLayout::new(layout)).unwrap()
}

fn truth(id: &str, t: f64, ty: CollisionType) -> GroundTruth {
    GroundTruth {
        clip_id: id.into(),
        time_s: t,
        bbox: BBox::new(0.3, 0.4, 0.5, 0.6).unwrap(),
        collision_type: ty,
    }
}

#[test]
fn noiseless_oracle_recovers_truth_on_synthetic_clips() {
    let params = SyntheticParams {
        duration_min_s: 20.0,
        duration_max_s: 70.0,
        ..SyntheticParams::default()
    };
    let set = generate_synthetic(40, &params, &LayoutPolicy::default()).unwrap();
    let oracle = OracleBackend::new(set.truths(), OracleNoise::noiseless(7)).unwrap();
    let cfg = StageConfig::default();
    for s in &set.scenarios {
        let (pred, trace) = run_pipeline(&s.clip, &oracle, &cfg).unwrap();
        assert_eq!(pred.time_s(), s.truth.time_s, "{}", s.clip.clip_id);
        let c = s.truth.center();
        assert!(pred.centroid().distance(c) < 1e-12);
        assert_eq!(pred.collision_type(), s.truth.collision_type);
        assert_eq!(pred.source(), Source::Stage3);
        assert!(!trace.type_rule_applied);
        assert_eq!(trace.replay(), pred);
        if s.clip.duration_s > 32.0 {
            assert_eq!(trace.passes.len(), 2);
        }
    }
    assert_eq!(oracle.calls(Stage::Stage3), 40);
}

#[test]
fn stage1_bias_is_corrected_by_alpha() {
    let c = clip("b", 30.0, "urban street");
    let noise = OracleNoise {
        stage1_time_bias_s: 1.0,
        ..OracleNoise::noiseless(0)
    };
    let oracle = OracleBackend::new([truth("b", 15.0, CollisionType::Sideswipe)], noise).unwrap();
    let (pred, trace) = run_pipeline(&c, &oracle, &StageConfig::default()).unwrap();
    assert!((trace.t_base - 16.0).abs() < 1e-12);
    assert_eq!(trace.t_refined, Some(15.0));
    let err = pred.time_s() - 15.0;
    assert!((err - 0.65).abs() < 1e-12, "error {err}");
}

#[test]
fn stage2_only_selection_keeps_stage1_point() {
    let c = clip("s", 30.0, "urban street");
    let noise = OracleNoise {
        stage1_time_bias_s: 1.0,
        grid_quantum: 0.25,
        ..OracleNoise::noiseless(0)
    };
    let oracle = OracleBackend::new([truth("s", 15.0, CollisionType::HeadOn)], noise).unwrap();
    let cfg = StageConfig {
        stages: "12".parse().unwrap(),
        ..StageConfig::default()
    };
    let (pred, trace) = run_pipeline(&c, &oracle, &cfg).unwrap();
    assert_eq!(trace.stage3, StageStatus::Skipped);
    assert_eq!(pred.centroid(), trace.merged_stage1.centroid());
    assert_eq!(oracle.calls(Stage::Stage3), 0);
    assert!((pred.time_s() - 15.65).abs() < 1e-12);
}

#[test]
fn type_rule_rewrites_tbone_on_highway_only() {
    for (layout, expected) in [
        ("highway", CollisionType::RearEnd),
        ("Tunnel", CollisionType::RearEnd),
        ("4-way intersection", CollisionType::TBone),
    ] {
        let c = clip("t", 20.0, layout).with_layout_policy(&LayoutPolicy::default());
        let oracle = OracleBackend::new(
            [truth("t", 8.0, CollisionType::TBone)],
            OracleNoise::noiseless(0),
        )
        .unwrap();
        let (pred, trace) = run_pipeline(&c, &oracle, &StageConfig::default()).unwrap();
        assert_eq!(pred.collision_type(), expected, "{layout}");
        assert_eq!(trace.type_rule_applied, expected == CollisionType::RearEnd);
        assert_eq!(trace.replay(), pred);
    }
}

#[test]
fn stage3_transport_failure_degrades_to_stage1_point() {
    let c = clip("d", 20.0, "urban street");
    let noise = OracleNoise {
        grid_quantum: 0.1,
        ..OracleNoise::noiseless(0)
    };
    let oracle = OracleBackend::new([truth("d", 8.0, CollisionType::RearEnd)], noise).unwrap();
    let failing = Scripted(|req: &InferenceRequest| {
        if req.tag.stage == Stage::Stage3 {
            Err(BackendError::Transport {
                clip_id: req.tag.clip_id.clone(),
                message: "connection reset".into(),
            })
        } else {
            oracle.complete(req)
        }
    });
    let (pred, trace) = run_pipeline(&c, &failing, &StageConfig::default()).unwrap();
    assert!(matches!(trace.stage3, StageStatus::Degraded(_)));
    assert_eq!(trace.stage3_point, None);
    assert_eq!(pred.centroid(), trace.merged_stage1.centroid());
    assert_eq!(pred.time_s(), 8.0);
    assert_eq!(pred.source(), Source::Stage2);
    assert_eq!(trace.replay(), pred);
}

#[test]
fn stage2_failure_degrades_to_t_base() {
    let c = clip("e", 20.0, "urban street");
    let b = Scripted(|req: &InferenceRequest| {
        Ok(match req.tag.stage {
            Stage::Stage1 => r#"{"time_s": 7.5, "x": 0.2, "y": 0.3, "type": "head-on"}"#.into(),
            Stage::Stage2 => "no idea".into(),
            Stage::Stage3 => r#"{"x": 100, "y": 900}"#.into(),
        })
    });
    let (pred, trace) = run_pipeline(&c, &b, &StageConfig::default()).unwrap();
    assert!(matches!(trace.stage2, StageStatus::Degraded(_)));
    assert_eq!(pred.time_s(), 7.5);
    assert!((pred.centroid().x() - 0.1).abs() < 1e-12);
    assert!((pred.centroid().y() - 0.9).abs() < 1e-12);
}

#[test]
fn unparseable_stage1_emits_fallback() {
    let c = clip("f", 24.0, "urban street");
    let b = Scripted(|_: &InferenceRequest| Ok("I cannot see a collision.".to_string()));
    let (pred, trace) = run_pipeline(&c, &b, &StageConfig::default()).unwrap();
    assert!(trace.fallback);
    assert_eq!(pred.time_s(), 12.0);
    assert_eq!(pred.centroid(), Point::CENTER);
    assert_eq!(pred.collision_type(), CollisionType::RearEnd);
    assert_eq!(pred.source(), Source::Fallback);
    assert_eq!(trace.replay(), pred);
}

#[test]
fn stage1_backend_error_is_returned() {
    let c = clip("g", 24.0, "urban street");
    let b = Scripted(|req: &InferenceRequest| {
        Err(BackendError::Timeout {
            clip_id: req.tag.clip_id.clone(),
            attempts: 4,
        })
    });
    let err = run_pipeline(&c, &b, &StageConfig::default()).unwrap_err();
    assert!(matches!(
        err,
        PipelineError::Stage1Backend(BackendError::Timeout { .. })
    ));
}

#[test]
fn reask_recovers_from_one_bad_answer() {
    let c = clip("h", 20.0, "urban street");
    let calls = AtomicUsize::new(0);
    let b = Scripted(|req: &InferenceRequest| {
        calls.fetch_add(1, Ordering::SeqCst);
        if req.tag.attempt == 0 {
            return Ok("Sure! Here you go.".into());
        }
        Ok(match req.tag.stage {
            Stage::Stage1 => r#"{"time_s": 5, "x": 0.5, "y": 0.5, "type": "sideswipe"}"#.into(),
            Stage::Stage2 => r#"{"time_s": 5}"#.into(),
            Stage::Stage3 => r#"{"x": 500, "y": 500}"#.into(),
        })
    });
    let (pred, trace) = run_pipeline(&c, &b, &StageConfig::default()).unwrap();
    assert!(!trace.fallback);
    assert_eq!(trace.stage2, StageStatus::Ok);
    assert_eq!(trace.stage3, StageStatus::Ok);
    assert_eq!(pred.collision_type(), CollisionType::Sideswipe);
    assert_eq!(calls.load(Ordering::SeqCst), 6);

    let no_reask = StageConfig {
        reask: false,
        ..StageConfig::default()
    };
    let (_, trace) = run_pipeline(&c, &b, &no_reask).unwrap();
    assert!(trace.fallback);
}

fn adversarial() -> impl Strategy<Value = String> {
    let num = prop_oneof![
        any::<f64>().prop_map(|v| v.to_string()),
        Just("1e400".to_string()),
        Just("-0".to_string()),
        Just("\"t=99999.99s\"".to_string()),
        Just("null".to_string()),
        Just("[1,2]".to_string()),
        (-5000i64..5000).prop_map(|v| v.to_string()),
    ];
    let ty = prop_oneof![
        Just("\"t-bone\"".to_string()),
        Just("\"T_BONE\"".to_string()),
        Just("\"explosion\"".to_string()),
        Just("7".to_string()),
    ];
    prop_oneof![
        "\\PC{0,80}",
        (num.clone(), num.clone(), num, ty).prop_map(|(t, x, y, ty)| {
            format!("noise ```json\n{{\"time_s\": {t}, \"x\": {x}, \"y\": {y}, \"type\": {ty}}}\n``` {{")
        }),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn adversarial_backend_never_yields_out_of_range(
        s1 in adversarial(),
        s2 in adversarial(),
        s3 in adversarial(),
        d in 1.0f64..90.0,
    ) {
        let c = clip("z", d, "highway");
        let b = Scripted(move |req: &InferenceRequest| Ok(match req.tag.stage {
            Stage::Stage1 => s1.clone(),
            Stage::Stage2 => s2.clone(),
            Stage::Stage3 => s3.clone(),
        }));
        let (pred, trace) = run_pipeline(&c, &b, &StageConfig::default()).unwrap();
        prop_assert!(pred.time_s().is_finite());
        prop_assert!((0.0..=d).contains(&pred.time_s()));
        let p = pred.centroid();
        prop_assert!((0.0..=1.0).contains(&p.x()) && (0.0..=1.0).contains(&p.y()));
        prop_assert!((pred.time_s() - trace.t_base).abs() <= 0.35 * 1.5 + 1e-12);
        prop_assert_eq!(trace.replay(), pred);
    }
}
