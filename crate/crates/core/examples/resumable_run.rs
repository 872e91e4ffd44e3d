//! A run directory that survives interruption: the first call stops after
//! 20 clips, the second picks up the remaining ones.
//!
//! cargo run --example resumable_run -- [work_dir]

use std::path::PathBuf;

use accident_pipeline::backend::BackendProfile;
use accident_pipeline::harness::{generate_synthetic, run_manifest, HarnessConfig, RunOptions};

fn main() {
    let work = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("resumable_run"));
    let _ = std::fs::remove_dir_all(&work);

    let mut cfg = HarnessConfig::default().with_seed(3);
    cfg.profile_b = Some(BackendProfile::oracle("B"));
    cfg.oracle_a.stage1_time_sigma_s = 0.8;
    cfg.oracle_b.stage1_time_sigma_s = 1.2;
    let set = generate_synthetic(50, &cfg.synthetic, &cfg.layout_policy()).unwrap();
    let manifest = set.write(&work.join("data"), None).unwrap();
    let run_dir = work.join("runs").join("demo");

    let partial = RunOptions {
        max_new_clips: Some(20),
        ..RunOptions::default()
    };
    let first = run_manifest(&manifest, &cfg, &run_dir, &partial).unwrap();
    println!(
        "first call:  {} new clips, complete = {}",
        first.new_a, first.complete
    );
    let full = RunOptions {
        dump_plans: true,
        ..RunOptions::default()
    };
    let second = run_manifest(&manifest, &cfg, &run_dir, &full).unwrap();
    println!(
        "second call: {} new clips, complete = {}",
        second.new_a, second.complete
    );
    print!("{}", second.report.unwrap().to_table());
    for entry in std::fs::read_dir(&run_dir).unwrap() {
        println!("  {}", entry.unwrap().path().display());
    }
}
