//! Frame schedules for the three stages on a short and a long clip.
//!
//! cargo run --example frame_plans

use accident_pipeline::domain::{ClipMeta, SceneLayout};
use accident_pipeline::plan::{
    plan_stage1, plan_stage2, plan_stage3, resize_dims, Stage1Sampling, Stage2Sampling,
};

fn main() {
    let s1 = Stage1Sampling::default();
    let s2 = Stage2Sampling::default();
    for duration in [30.0, 40.0, 90.0] {
        let clip = ClipMeta::new("demo", duration, 30.0, SceneLayout::new("urban street")).unwrap();
        let passes = plan_stage1(&clip, &s1);
        println!("clip of {duration} s:");
        for (i, p) in passes.passes.iter().enumerate() {
            let ts = &p.plan.timestamps;
            println!(
                "  stage 1 pass {i}: [{:.2}, {:.2}] {} frames, first {:.2} last {:.2}",
                p.interval.start,
                p.interval.end,
                ts.len(),
                ts[0],
                ts[ts.len() - 1]
            );
        }
        if let Some(o) = passes.overlap {
            println!("  overlap [{:.2}, {:.2}]", o.start, o.end);
        }
        let t_base = duration * 0.6;
        let p2 = plan_stage2(t_base, &clip, &s2);
        println!("  stage 2 around {t_base:.2}: {:?}", p2.timestamps);
        let p3 = plan_stage3(t_base + 0.013, &clip, 960);
        println!("  stage 3: {:?}", p3.timestamps);
    }
    println!("1920x1080 at 960 px -> {:?}", resize_dims(1920, 1080, 960));
    println!("640x360 at 960 px  -> {:?}", resize_dims(640, 360, 960));
}
