//! Which timestamps each stage looks at, and at what resolution.
//!
//! All functions here are pure: the same clip and parameters always yield the
//! same plan.

use serde::{Deserialize, Serialize};

use crate::domain::ClipMeta;

const EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Stage1,
    Stage2,
    Stage3,
}

impl Stage {
    /// Upper bound on frames sent in a single request for this stage.
    pub fn frame_cap(self) -> usize {
        match self {
            Stage::Stage1 => 128,
            Stage::Stage2 => 16,
            Stage::Stage3 => 1,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Stage1 => "stage1",
            Stage::Stage2 => "stage2",
            Stage::Stage3 => "stage3",
        }
    }
}

/// Closed time interval in seconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub start: f64,
    pub end: f64,
}

impl Interval {
    pub fn new(start: f64, end: f64) -> Self {
        Self { start, end }
    }

    pub fn contains(&self, t: f64) -> bool {
        t >= self.start && t <= self.end
    }

    pub fn len(&self) -> f64 {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end < self.start
    }

    pub fn intersect(&self, other: &Interval) -> Option<Interval> {
        let i = Interval::new(self.start.max(other.start), self.end.min(other.end));
        (!i.is_empty() && i.len() > 0.0).then_some(i)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FramePlan {
    pub stage: Stage,
    pub timestamps: Vec<f64>,
    pub longest_side_px: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pass {
    pub plan: FramePlan,
    pub interval: Interval,
}

/// One or two Stage-1 passes; `overlap` is set exactly when there are two.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PassSet {
    pub passes: Vec<Pass>,
    pub overlap: Option<Interval>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Stage1Sampling {
    pub fps: f64,
    pub max_frames: usize,
    pub pass_len_s: f64,
    /// Passes are stretched beyond `pass_len_s` when needed to keep at
    /// least this much shared time (clips longer than two passes).
    pub min_overlap_s: f64,
    pub longest_px: u32,
}

impl Default for Stage1Sampling {
    fn default() -> Self {
        Self {
            fps: 4.0,
            max_frames: 128,
            pass_len_s: 32.0,
            min_overlap_s: 4.0,
            longest_px: 960,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Stage2Sampling {
    pub dense_half_window_s: f64,
    pub dense_fps: f64,
    pub dense_cap: usize,
    pub sparse_before_s: f64,
    pub sparse_after_s: f64,
    pub sparse_fps: f64,
    pub sparse_cap: usize,
    pub longest_px: u32,
}

impl Default for Stage2Sampling {
    fn default() -> Self {
        Self {
            dense_half_window_s: 2.0,
            dense_fps: 4.0,
            dense_cap: 12,
            sparse_before_s: 8.0,
            sparse_after_s: 4.0,
            sparse_fps: 0.5,
            sparse_cap: 4,
            longest_px: 960,
        }
    }
}

/// Uniform index-space thinning that keeps both endpoints.
pub(crate) fn thin_indices(n: usize, cap: usize) -> Vec<usize> {
    if n <= cap {
        return (0..n).collect();
    }
    match cap {
        0 => Vec::new(),
        1 => vec![0],
        _ => {
            let step = (n - 1) as f64 / (cap - 1) as f64;
            (0..cap)
                .map(|i| (i as f64 * step).round() as usize)
                .collect()
        }
    }
}

fn thin<T: Copy>(values: &[T], cap: usize) -> Vec<T> {
    thin_indices(values.len(), cap)
        .into_iter()
        .map(|i| values[i])
        .collect()
}

/// `start + k / fps` for every k with the result strictly below `end`
/// (at least one sample).
fn grid(start: f64, end: f64, fps: f64) -> Vec<f64> {
    let n = (((end - start) * fps) - EPS).ceil().max(1.0) as usize;
    (0..n).map(|k| start + k as f64 / fps).collect()
}

/// Stage-1 sampling: one pass for short clips, two end-anchored passes otherwise.
///
/// Each pass is `pass_len_s` long unless the clip is so long that two such
/// passes would share less than `min_overlap_s`; then both are stretched
/// symmetrically and their frames thinned to `max_frames`.
pub fn plan_stage1(clip: &ClipMeta, sampling: &Stage1Sampling) -> PassSet {
    let d = clip.duration_s;
    let make = |interval: Interval| Pass {
        plan: FramePlan {
            stage: Stage::Stage1,
            timestamps: thin(
                &grid(interval.start, interval.end, sampling.fps),
                sampling.max_frames,
            ),
            longest_side_px: sampling.longest_px,
        },
        interval,
    };
    if d <= sampling.pass_len_s {
        return PassSet {
            passes: vec![make(Interval::new(0.0, d))],
            overlap: None,
        };
    }
    let len = sampling
        .pass_len_s
        .max((d + sampling.min_overlap_s) / 2.0)
        .min(d);
    let first = Interval::new(0.0, len);
    let second = Interval::new(d - len, d);
    PassSet {
        overlap: first.intersect(&second),
        passes: vec![make(first), make(second)],
    }
}

/// Greedy spread maximization: keep the extremes, then repeatedly add the
/// candidate farthest from everything already chosen.
fn spread_select(candidates: &[f64], cap: usize) -> Vec<f64> {
    if candidates.len() <= cap {
        return candidates.to_vec();
    }
    if cap == 0 {
        return Vec::new();
    }
    let mut chosen = vec![candidates[0]];
    if cap >= 2 {
        chosen.push(candidates[candidates.len() - 1]);
    }
    while chosen.len() < cap {
        let best = candidates
            .iter()
            .filter(|c| !chosen.contains(c))
            .map(|&c| {
                let gap = chosen
                    .iter()
                    .map(|&s| (s - c).abs())
                    .fold(f64::INFINITY, f64::min);
                (c, gap)
            })
            .fold(None::<(f64, f64)>, |best, (c, gap)| match best {
                Some((_, g)) if g >= gap => best,
                _ => Some((c, gap)),
            });
        match best {
            Some((c, _)) => chosen.push(c),
            None => break,
        }
    }
    chosen.sort_by(f64::total_cmp);
    chosen
}

/// Stage-2 hybrid window: a dense grid around `t_base` plus a few sparse
/// context anchors outside it.
pub fn plan_stage2(t_base: f64, clip: &ClipMeta, sampling: &Stage2Sampling) -> FramePlan {
    let d = clip.duration_s;
    let in_clip = |t: &f64| *t >= -EPS && *t <= d + EPS;

    let half_steps = (sampling.dense_half_window_s * sampling.dense_fps).round() as i64;
    let dense_all: Vec<f64> = (-half_steps..=half_steps)
        .map(|k| t_base + k as f64 / sampling.dense_fps)
        .filter(in_clip)
        .map(|t| t.clamp(0.0, d))
        .collect();
    let mut dense_idx = thin_indices(dense_all.len(), sampling.dense_cap);
    if let Some(nearest) = (0..dense_all.len()).min_by(|&a, &b| {
        (dense_all[a] - t_base)
            .abs()
            .total_cmp(&(dense_all[b] - t_base).abs())
    }) {
        if !dense_idx.contains(&nearest) && dense_idx.len() > 2 {
            // swap the nearest interior pick for the point closest to t_base
            let inner = 1..dense_idx.len() - 1;
            let replace = inner
                .min_by_key(|&i| dense_idx[i].abs_diff(nearest))
                .expect("interior is non-empty");
            dense_idx[replace] = nearest;
            dense_idx.sort_unstable();
        }
    }
    let dense: Vec<f64> = dense_idx.into_iter().map(|i| dense_all[i]).collect();

    let lo = t_base - sampling.dense_half_window_s;
    let hi = t_base + sampling.dense_half_window_s;
    let sparse_steps =
        ((sampling.sparse_before_s + sampling.sparse_after_s) * sampling.sparse_fps).round() as i64;
    let sparse_all: Vec<f64> = (0..=sparse_steps)
        .map(|k| t_base - sampling.sparse_before_s + k as f64 / sampling.sparse_fps)
        .filter(|t| *t < lo - EPS || *t > hi + EPS)
        .filter(in_clip)
        .map(|t| t.clamp(0.0, d))
        .collect();
    let sparse = spread_select(&sparse_all, sampling.sparse_cap);

    let mut timestamps: Vec<f64> = dense.into_iter().chain(sparse).collect();
    timestamps.sort_by(f64::total_cmp);
    timestamps.dedup_by(|a, b| (*a - *b).abs() < EPS);
    FramePlan {
        stage: Stage::Stage2,
        timestamps,
        longest_side_px: sampling.longest_px,
    }
}

/// Time of the decodable frame nearest `t`, on the clip's native frame grid.
pub fn snap_to_frame(t: f64, clip: &ClipMeta) -> f64 {
    let fps = clip.native_fps;
    let last = ((clip.duration_s * fps - EPS).ceil() as i64 - 1).max(0);
    let idx = ((t * fps).round() as i64).clamp(0, last);
    idx as f64 / fps
}

/// A single frame at `t_final`.
pub fn plan_stage3(t_final: f64, clip: &ClipMeta, longest_px: u32) -> FramePlan {
    FramePlan {
        stage: Stage::Stage3,
        timestamps: vec![snap_to_frame(t_final, clip)],
        longest_side_px: longest_px,
    }
}

/// Aspect-preserving downscale so the longer side is at most `longest`.
pub fn resize_dims(w: u32, h: u32, longest: u32) -> (u32, u32) {
    let max_side = w.max(h);
    if max_side <= longest {
        return (w, h);
    }
    let scale = longest as f64 / max_side as f64;
    let fit = |v: u32| ((v as f64 * scale).round() as u32).max(1);
    if w >= h {
        (longest, fit(h))
    } else {
        (fit(w), longest)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::SceneLayout;
    use proptest::prelude::*;

    fn clip(d: f64) -> ClipMeta {
        ClipMeta::new("c", d, 30.0, SceneLayout::new("urban")).unwrap()
    }

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() < 1e-9
    }

    #[test]
    fn stage1_single_pass_for_30s() {
        let set = plan_stage1(&clip(30.0), &Stage1Sampling::default());
        assert_eq!(set.passes.len(), 1);
        assert!(set.overlap.is_none());
        let ts = &set.passes[0].plan.timestamps;
        assert_eq!(ts.len(), 120);
        for (k, t) in ts.iter().enumerate() {
            assert!(close(*t, k as f64 * 0.25));
        }
        assert!(close(*ts.last().unwrap(), 29.75));
    }

    #[test]
    fn stage1_two_passes_for_40s() {
        let set = plan_stage1(&clip(40.0), &Stage1Sampling::default());
        assert_eq!(set.passes.len(), 2);
        assert_eq!(set.passes[0].interval, Interval::new(0.0, 32.0));
        assert_eq!(set.passes[1].interval, Interval::new(8.0, 40.0));
        assert_eq!(set.overlap, Some(Interval::new(8.0, 32.0)));
        for p in &set.passes {
            assert_eq!(p.plan.timestamps.len(), 128);
        }
        assert!(close(set.passes[1].plan.timestamps[0], 8.0));
    }

    #[test]
    fn stage1_degenerate_clip() {
        let set = plan_stage1(&clip(0.2), &Stage1Sampling::default());
        assert_eq!(set.passes[0].plan.timestamps, vec![0.0]);
    }

    #[test]
    fn stage1_thins_to_cap() {
        let s = Stage1Sampling {
            fps: 10.0,
            ..Default::default()
        };
        let set = plan_stage1(&clip(30.0), &s);
        let ts = &set.passes[0].plan.timestamps;
        assert_eq!(ts.len(), 128);
        assert!(close(ts[0], 0.0));
        assert!(close(*ts.last().unwrap(), 29.9));
    }

    #[test]
    fn stage2_interior_window() {
        let plan = plan_stage2(10.0, &clip(30.0), &Stage2Sampling::default());
        let dense: Vec<f64> = plan
            .timestamps
            .iter()
            .copied()
            .filter(|t| (8.0..=12.0).contains(t))
            .collect();
        let sparse: Vec<f64> = plan
            .timestamps
            .iter()
            .copied()
            .filter(|t| !(8.0..=12.0).contains(t))
            .collect();
        assert_eq!(dense.len(), 12);
        for t in &dense {
            assert!(close((t * 4.0).round(), t * 4.0), "{t} off the 4 fps grid");
        }
        assert!(close(dense[0], 8.0) && close(*dense.last().unwrap(), 12.0));
        assert!(dense.iter().any(|t| close(*t, 10.0)));
        assert_eq!(sparse, vec![2.0, 4.0, 6.0, 14.0]);
        assert_eq!(plan.timestamps.len(), 16);
    }

    #[test]
    fn stage2_clips_at_boundaries() {
        let plan = plan_stage2(0.0, &clip(30.0), &Stage2Sampling::default());
        assert!(plan.timestamps.iter().all(|t| *t >= 0.0));
        assert_eq!(plan.timestamps[0], 0.0);

        let plan = plan_stage2(29.9, &clip(30.0), &Stage2Sampling::default());
        assert!(plan.timestamps.iter().all(|t| *t <= 30.0));
        let last = *plan.timestamps.last().unwrap();
        assert!(close(last, 29.9), "last dense point {last}");
    }

    #[test]
    fn spread_select_keeps_extremes() {
        let c = [0.0, 1.0, 2.0, 3.0, 9.0, 10.0];
        assert_eq!(spread_select(&c, 4), vec![0.0, 1.0, 3.0, 10.0]);
        assert_eq!(spread_select(&c, 2), vec![0.0, 10.0]);
        assert_eq!(spread_select(&c[..3], 4), vec![0.0, 1.0, 2.0]);
    }

    #[test]
    fn stage3_snaps_to_native_grid() {
        let c = clip(30.0);
        assert_eq!(plan_stage3(10.0, &c, 960).timestamps, vec![10.0]);
        assert_eq!(plan_stage3(10.013, &c, 960).timestamps, vec![300.0 / 30.0]);
        let last = plan_stage3(30.0, &c, 960).timestamps[0];
        assert!(close(last, 899.0 / 30.0));
    }

    #[test]
    fn resize_examples() {
        assert_eq!(resize_dims(1920, 1080, 960), (960, 540));
        assert_eq!(resize_dims(640, 480, 960), (640, 480));
        assert_eq!(resize_dims(960, 960, 960), (960, 960));
        assert_eq!(resize_dims(1080, 1920, 960), (540, 960));
        assert_eq!(resize_dims(5000, 1, 960), (960, 1));
    }

    proptest! {
        #[test]
        fn two_passes_cover_clip(d in 32.0001f64..300.0) {
            let set = plan_stage1(&clip(d), &Stage1Sampling::default());
            prop_assert_eq!(set.passes.len(), 2);
            let (a, b) = (set.passes[0].interval, set.passes[1].interval);
            prop_assert_eq!(a.start, 0.0);
            prop_assert_eq!(b.end, d);
            prop_assert!(a.end > b.start);
            let ov = set.overlap.expect("non-empty overlap");
            prop_assert_eq!(Some(ov), a.intersect(&b));
            prop_assert!(ov.len() > 0.0);
            if d <= 60.0 {
                prop_assert_eq!(a.len(), 32.0);
            }
            for p in &set.passes {
                prop_assert!(p.plan.timestamps.len() <= 128);
                prop_assert!(p.plan.timestamps.windows(2).all(|w| w[0] < w[1]));
                prop_assert!(p.plan.timestamps.iter().all(|t| *t >= 0.0 && *t <= d));
            }
        }

        #[test]
        fn stage2_bounded_and_near_base(d in 0.5f64..120.0, frac in 0.0f64..=1.0) {
            let c = clip(d);
            let t = d * frac;
            let plan = plan_stage2(t, &c, &Stage2Sampling::default());
            prop_assert!(!plan.timestamps.is_empty());
            prop_assert!(plan.timestamps.len() <= 16);
            prop_assert!(plan.timestamps.windows(2).all(|w| w[0] < w[1]));
            prop_assert!(plan.timestamps.iter().all(|x| *x >= 0.0 && *x <= d));
            prop_assert!(plan.timestamps.iter().any(|x| (x - t).abs() <= 0.125));
            let again = plan_stage2(t, &c, &Stage2Sampling::default());
            prop_assert_eq!(
                serde_json::to_string(&plan).unwrap(),
                serde_json::to_string(&again).unwrap()
            );
        }
    }
}
