//! Dataset files, configuration, the synthetic generator, the resumable
//! runner and the ablation ladder.

mod ablate;
mod config;
mod io;
mod run;
mod synthetic;

pub use ablate::{ablate, AblationRow, AblationTable, ABLATION_ROWS};
pub use config::HarnessConfig;
pub use io::{
    import_coco_results, read_detections, read_jsonl, read_jsonl_lenient, write_detections,
    write_json, write_jsonl, CocoImage, JsonlAppender, Manifest, MANIFEST_SCHEMA_VERSION,
};
pub use run::{
    build_backends, execute_run, run_clips, run_manifest, PlanRecord, RunInputs, RunLayout,
    RunOptions, RunSummary, SnapRecord, TraceRecord,
};
pub use synthetic::{
    generate_synthetic, RenderSpec, SyntheticParams, SyntheticScenario, SyntheticSet,
};
