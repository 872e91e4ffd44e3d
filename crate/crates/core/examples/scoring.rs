//! The ACC^S metric on a small hand-made set, plus the published
//! baseline row recomputed from its components.
//!
//! cargo run --example scoring

use accident_pipeline::domain::{
    clamp_point, BBox, CollisionType, GroundTruth, Prediction, Source,
};
use accident_pipeline::metrics::{acc_s, score_dataset, temporal_score, Aggregation, MetricConfig};

fn main() {
    println!(
        "acc_s(0.343, 0.488, 0.293) = {:.4}",
        acc_s(0.343, 0.488, 0.293)
    );
    for dt in [0.0, 0.5, 1.0, 2.0, 4.0] {
        println!(
            "temporal score at |dt| = {dt}: {:.4}",
            temporal_score(dt, 0.0, &[0.5, 1.0, 2.0])
        );
    }

    let gt = |id: &str, t: f64, b: [f64; 4], ty| GroundTruth {
        clip_id: id.into(),
        time_s: t,
        bbox: BBox::try_from(b).unwrap(),
        collision_type: ty,
    };
    let truths = vec![
        gt("a", 10.0, [0.40, 0.40, 0.50, 0.50], CollisionType::RearEnd),
        gt("b", 20.0, [0.10, 0.60, 0.30, 0.80], CollisionType::TBone),
        gt("c", 5.0, [0.70, 0.20, 0.80, 0.35], CollisionType::HeadOn),
    ];
    let p = |id: &str, t: f64, x: f64, y: f64, ty| {
        Prediction::with_duration(id, t, None, clamp_point(x, y).unwrap(), ty, Source::Stage3)
    };
    let preds = vec![
        p("a", 10.3, 0.46, 0.44, CollisionType::RearEnd),
        p("b", 21.5, 0.25, 0.70, CollisionType::Sideswipe),
    ];
    for aggregation in [Aggregation::HarmonicOfMeans, Aggregation::MeanOfPerClip] {
        let cfg = MetricConfig {
            aggregation,
            ..MetricConfig::default()
        };
        let report = score_dataset(&preds, &truths, &cfg).unwrap();
        println!("\n{aggregation:?}");
        print!("{}", report.to_table());
    }
}
