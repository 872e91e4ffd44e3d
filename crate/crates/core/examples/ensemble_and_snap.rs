//! Blends two runs and snaps the result onto detected vehicles.
//!
//! cargo run --example ensemble_and_snap

use accident_pipeline::domain::{clamp_point, BBox, CollisionType, Detection, Prediction, Source};
use accident_pipeline::postprocess::{blend, snap, EnsembleConfig, SnapConfig};

fn pred(t: f64, x: f64, y: f64, ty: CollisionType) -> Prediction {
    Prediction::with_duration(
        "clip",
        t,
        Some(30.0),
        clamp_point(x, y).unwrap(),
        ty,
        Source::Stage3,
    )
}

fn det(frame: u64, b: [f64; 4], label: &str) -> Detection {
    Detection {
        clip_id: "clip".into(),
        frame_idx: frame,
        bbox: BBox::try_from(b).unwrap(),
        label: label.into(),
        score: 0.9,
    }
}

fn main() {
    let large = pred(12.0, 0.40, 0.50, CollisionType::TBone);
    let small = pred(13.0, 0.60, 0.30, CollisionType::RearEnd);
    let ens = blend(&large, &small, &EnsembleConfig::default()).unwrap();
    println!(
        "blend(0.9): t={:.2} point=({:.2}, {:.2}) type={}",
        ens.time_s(),
        ens.centroid().x(),
        ens.centroid().y(),
        ens.collision_type()
    );

    let cfg = SnapConfig {
        detection_fps: 10.0,
        ..SnapConfig::default()
    };
    let cases = [
        (
            "vehicle nearby",
            vec![det(121, [0.45, 0.40, 0.55, 0.55], "car")],
        ),
        (
            "already inside",
            vec![det(120, [0.30, 0.30, 0.60, 0.60], "truck")],
        ),
        (
            "only a pedestrian",
            vec![det(120, [0.40, 0.40, 0.45, 0.50], "person")],
        ),
        (
            "vehicle too far",
            vec![det(120, [0.80, 0.80, 0.95, 0.95], "bus")],
        ),
        (
            "vehicle outside window",
            vec![det(200, [0.43, 0.40, 0.50, 0.55], "car")],
        ),
    ];
    for (name, dets) in cases {
        let out = snap(&ens, &dets, &cfg);
        println!(
            "{name:<24} -> ({:.3}, {:.3})  {:?}",
            out.prediction.centroid().x(),
            out.prediction.centroid().y(),
            out.status
        );
    }
}
