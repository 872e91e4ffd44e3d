//! Runs the pipeline on one clip against an OpenAI-compatible
//! chat-completions server.
//!
//! VLM_ENDPOINT=http://localhost:8000/v1 VLM_MODEL=Qwen2.5-VL-72B-Instruct \
//! VLM_FRAMES=/data/frames/clip01 VLM_DURATION=30 \
//!     cargo run --example openai_endpoint
//!
//! Optional: VLM_FPS (default 4), VLM_LAYOUT (default "urban street"),
//! VLM_API_KEY.

use std::env;
use std::path::PathBuf;

use accident_pipeline::backend::{BackendProfile, HttpBackend};
use accident_pipeline::domain::{ClipMeta, FrameSource, LayoutPolicy, SceneLayout};
use accident_pipeline::pipeline::{run_pipeline, StageConfig};

fn usage() {
    println!("Set VLM_ENDPOINT, VLM_MODEL, VLM_FRAMES and VLM_DURATION to run this example.");
    println!("Frames are files named 00000.png, 00001.png, ... sampled at VLM_FPS, e.g.:");
    println!("  ffmpeg -i clip.mp4 -vf fps=4 -start_number 0 frames/clip01/%05d.png");
}

fn main() {
    env_logger::init();
    let (Ok(endpoint), Ok(model), Ok(frames), Ok(duration)) = (
        env::var("VLM_ENDPOINT"),
        env::var("VLM_MODEL"),
        env::var("VLM_FRAMES"),
        env::var("VLM_DURATION"),
    ) else {
        usage();
        return;
    };
    let duration: f64 = duration
        .parse()
        .expect("VLM_DURATION must be a number of seconds");
    let fps: f64 = env::var("VLM_FPS")
        .ok()
        .and_then(|v| v.parse().ok())
        .unwrap_or(4.0);
    let layout = env::var("VLM_LAYOUT").unwrap_or_else(|_| "urban street".into());

    let clip = ClipMeta::new("clip", duration, fps, SceneLayout::new(&layout))
        .unwrap()
        .with_layout_policy(&LayoutPolicy::default())
        .with_frame_source(FrameSource {
            dir: PathBuf::from(frames),
            fps,
            extension: "png".into(),
        });
    let profile = BackendProfile {
        api_key_env: "VLM_API_KEY".into(),
        ..BackendProfile::http("A", &endpoint, &model)
    };
    let backend = HttpBackend::new(profile).unwrap();
    match run_pipeline(&clip, &backend, &StageConfig::default()) {
        Ok((pred, trace)) => {
            println!("t_base    {:.3}", trace.t_base);
            println!("t_refined {:?}", trace.t_refined);
            println!(
                "final     t={:.3} point=({:.3}, {:.3}) type={} source={:?}",
                pred.time_s(),
                pred.centroid().x(),
                pred.centroid().y(),
                pred.collision_type(),
                pred.source()
            );
        }
        Err(e) => {
            eprintln!("error: {e}");
            std::process::exit(1);
        }
    }
}
