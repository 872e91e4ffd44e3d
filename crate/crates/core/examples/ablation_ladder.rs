//! Cumulative ablation on noisy simulated models: each row adds one
//! component.
//!
//! cargo run --release --example ablation_ladder -- [clips] [seed]

use accident_pipeline::backend::OracleNoise;
use accident_pipeline::harness::{ablate, generate_synthetic, HarnessConfig, SyntheticParams};
use accident_pipeline::postprocess::DetectionIndex;

fn main() {
    let mut args = std::env::args().skip(1);
    let n: usize = args.next().and_then(|a| a.parse().ok()).unwrap_or(200);
    let seed: u64 = args.next().and_then(|a| a.parse().ok()).unwrap_or(0);

    let noise = OracleNoise {
        stage1_time_sigma_s: 1.0,
        stage2_time_sigma_s: 0.3,
        grid_quantum: 0.1,
        stage1_space_sigma: 0.03,
        stage3_space_sigma: 0.02,
        type_flip_prob: 0.3,
        ..OracleNoise::noiseless(0)
    };
    let cfg = HarnessConfig {
        oracle_a: noise.clone(),
        oracle_b: OracleNoise {
            stage1_time_sigma_s: 1.3,
            stage3_space_sigma: 0.03,
            ..noise
        },
        synthetic: SyntheticParams {
            distractors_per_clip: 3,
            ..SyntheticParams::default()
        },
        ..HarnessConfig::default()
    }
    .with_seed(seed);
    let set = generate_synthetic(n, &cfg.synthetic, &cfg.layout_policy()).unwrap();
    let index = DetectionIndex::new(set.detection_fps, set.detections.clone());
    let table = ablate(&set.clips(), &set.truths(), Some(&index), &cfg).unwrap();
    print!("{}", table.to_table());
}
