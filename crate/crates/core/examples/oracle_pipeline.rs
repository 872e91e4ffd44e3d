//! Runs the three-stage pipeline against the simulated backend and shows
//! what each stage contributed.
//!
//! cargo run --example oracle_pipeline

use accident_pipeline::backend::{OracleBackend, OracleNoise};
use accident_pipeline::domain::LayoutPolicy;
use accident_pipeline::harness::{generate_synthetic, SyntheticParams};
use accident_pipeline::pipeline::{run_pipeline, StageConfig};

fn main() {
    let params = SyntheticParams {
        seed: 7,
        ..SyntheticParams::default()
    };
    let set = generate_synthetic(8, &params, &LayoutPolicy::default()).unwrap();
    let noise = OracleNoise {
        stage1_time_sigma_s: 1.0,
        stage2_time_sigma_s: 0.3,
        grid_quantum: 0.1,
        stage3_space_sigma: 0.02,
        type_flip_prob: 0.2,
        ..OracleNoise::noiseless(7)
    };
    let oracle = OracleBackend::new(set.truths(), noise).unwrap();
    let cfg = StageConfig::default();
    println!(
        "{:<10} {:>6} {:>7} {:>7} {:>7} {:>7}  {:<29} {:<15} rule",
        "clip", "d", "truth", "t_base", "t_ref", "t_final", "layout", "type"
    );
    for s in &set.scenarios {
        let (pred, trace) = run_pipeline(&s.clip, &oracle, &cfg).unwrap();
        println!(
            "{:<10} {:>6.2} {:>7.2} {:>7.2} {:>7.2} {:>7.2}  {:<29} {:<15} {}",
            s.clip.clip_id,
            s.clip.duration_s,
            s.truth.time_s,
            trace.t_base,
            trace.t_refined.unwrap_or(f64::NAN),
            pred.time_s(),
            s.clip.scene_layout.tag(),
            pred.collision_type(),
            if trace.type_rule_applied {
                "t-bone -> rear-end"
            } else {
                ""
            }
        );
        assert_eq!(trace.replay(), pred);
    }
    println!("backend calls: {}", oracle.total_calls());
}
