//! Value types shared by every stage of the pipeline.
//!
//! Everything here is an immutable value. Constructors enforce the range
//! invariants (times inside the clip, points inside the unit square, boxes
//! non-degenerate), so downstream code never has to re-check them.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::DomainError;

/// The closed set of collision classes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum CollisionType {
    HeadOn,
    RearEnd,
    TBone,
    Sideswipe,
    SingleVehicle,
}

impl CollisionType {
    pub const ALL: [CollisionType; 5] = [
        CollisionType::HeadOn,
        CollisionType::RearEnd,
        CollisionType::TBone,
        CollisionType::Sideswipe,
        CollisionType::SingleVehicle,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            CollisionType::HeadOn => "head-on",
            CollisionType::RearEnd => "rear-end",
            CollisionType::TBone => "t-bone",
            CollisionType::Sideswipe => "sideswipe",
            CollisionType::SingleVehicle => "single-vehicle",
        }
    }
}

impl fmt::Display for CollisionType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Lowercases and drops every separator so "T Bone", "t_bone" and "t-bone"
/// compare equal.
fn squash(s: &str) -> String {
    s.chars()
        .filter(|c| !(c.is_whitespace() || *c == '-' || *c == '_'))
        .flat_map(char::to_lowercase)
        .collect()
}

/// Case-insensitive, separator-tolerant match onto the five classes.
pub fn parse_collision_type(s: &str) -> Result<CollisionType, DomainError> {
    let key = squash(s);
    CollisionType::ALL
        .into_iter()
        .find(|t| squash(t.as_str()) == key)
        .ok_or_else(|| DomainError::UnknownType(s.to_string()))
}

impl FromStr for CollisionType {
    type Err = DomainError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_collision_type(s)
    }
}

impl Serialize for CollisionType {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for CollisionType {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        parse_collision_type(&s).map_err(serde::de::Error::custom)
    }
}

/// Layout tags on which two vehicles cannot meet perpendicularly.
pub const DEFAULT_NON_PERPENDICULAR_LAYOUTS: [&str; 3] =
    ["highway", "tunnel", "grade-separated intersection"];

/// Decides which scene layouts admit perpendicular impacts.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LayoutPolicy {
    non_perpendicular: BTreeSet<String>,
}

impl Default for LayoutPolicy {
    fn default() -> Self {
        Self::new(DEFAULT_NON_PERPENDICULAR_LAYOUTS)
    }
}

impl LayoutPolicy {
    pub fn new<I, S>(tags: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        Self {
            non_perpendicular: tags.into_iter().map(|t| squash(t.as_ref())).collect(),
        }
    }

    pub fn classify(&self, tag: &str) -> SceneLayout {
        SceneLayout {
            tag: tag.to_string(),
            perpendicular_possible: !self.non_perpendicular.contains(&squash(tag)),
        }
    }
}

/// Benchmark-provided scene layout plus the derived geometric flag.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SceneLayout {
    tag: String,
    perpendicular_possible: bool,
}

impl SceneLayout {
    /// Classifies `tag` with the default policy.
    pub fn new(tag: &str) -> Self {
        LayoutPolicy::default().classify(tag)
    }

    pub fn tag(&self) -> &str {
        &self.tag
    }

    pub fn perpendicular_possible(&self) -> bool {
        self.perpendicular_possible
    }
}

impl Serialize for SceneLayout {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.tag)
    }
}

impl<'de> Deserialize<'de> for SceneLayout {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        Ok(SceneLayout::new(&s))
    }
}

fn default_extension() -> String {
    "png".to_string()
}

/// A directory of `%05d.<ext>` images, zero-based, extracted at `fps`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameSource {
    pub dir: PathBuf,
    pub fps: f64,
    #[serde(default = "default_extension")]
    pub extension: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ClipMetaRecord")]
pub struct ClipMeta {
    pub clip_id: String,
    pub duration_s: f64,
    pub native_fps: f64,
    pub scene_layout: SceneLayout,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub frame_source: Option<FrameSource>,
    /// Free-form benchmark metadata (weather, video quality, ...).
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub extra: BTreeMap<String, serde_json::Value>,
}

#[derive(Deserialize)]
struct ClipMetaRecord {
    clip_id: String,
    duration_s: f64,
    native_fps: f64,
    scene_layout: SceneLayout,
    #[serde(default)]
    frame_source: Option<FrameSource>,
    #[serde(default)]
    extra: BTreeMap<String, serde_json::Value>,
}

impl TryFrom<ClipMetaRecord> for ClipMeta {
    type Error = DomainError;
    fn try_from(r: ClipMetaRecord) -> Result<Self, Self::Error> {
        let mut clip = ClipMeta::new(&r.clip_id, r.duration_s, r.native_fps, r.scene_layout)?;
        clip.frame_source = r.frame_source;
        clip.extra = r.extra;
        Ok(clip)
    }
}

impl ClipMeta {
    pub fn new(
        clip_id: &str,
        duration_s: f64,
        native_fps: f64,
        scene_layout: SceneLayout,
    ) -> Result<Self, DomainError> {
        let bad = |reason: &str| DomainError::InvalidClip {
            clip_id: clip_id.to_string(),
            reason: reason.to_string(),
        };
        if !(duration_s.is_finite() && duration_s > 0.0) {
            return Err(bad("duration_s must be finite and > 0"));
        }
        if !(native_fps.is_finite() && native_fps > 0.0) {
            return Err(bad("native_fps must be finite and > 0"));
        }
        Ok(Self {
            clip_id: clip_id.to_string(),
            duration_s,
            native_fps,
            scene_layout,
            frame_source: None,
            extra: BTreeMap::new(),
        })
    }

    pub fn with_frame_source(mut self, source: FrameSource) -> Self {
        self.frame_source = Some(source);
        self
    }

    pub fn with_layout_policy(mut self, policy: &LayoutPolicy) -> Self {
        self.scene_layout = policy.classify(self.scene_layout.tag());
        self
    }
}

/// A point in normalized image coordinates, always inside `[0, 1]²`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 2]", into = "[f64; 2]")]
pub struct Point {
    x: f64,
    y: f64,
}

/// Saturates each coordinate into `[0, 1]`.
pub fn clamp_point(x: f64, y: f64) -> Result<Point, DomainError> {
    if !(x.is_finite() && y.is_finite()) {
        return Err(DomainError::InvalidCoordinate { x, y });
    }
    Ok(Point {
        x: x.clamp(0.0, 1.0),
        y: y.clamp(0.0, 1.0),
    })
}

impl Point {
    pub const CENTER: Point = Point { x: 0.5, y: 0.5 };

    pub fn x(self) -> f64 {
        self.x
    }

    pub fn y(self) -> f64 {
        self.y
    }

    pub fn distance(self, other: Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

impl TryFrom<[f64; 2]> for Point {
    type Error = DomainError;
    fn try_from([x, y]: [f64; 2]) -> Result<Self, Self::Error> {
        if !((0.0..=1.0).contains(&x) && (0.0..=1.0).contains(&y)) {
            return Err(DomainError::InvalidCoordinate { x, y });
        }
        Ok(Point { x, y })
    }
}

impl From<Point> for [f64; 2] {
    fn from(p: Point) -> Self {
        [p.x, p.y]
    }
}

/// Axis-aligned box in normalized coordinates with positive width and height.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 4]", into = "[f64; 4]")]
pub struct BBox {
    x0: f64,
    y0: f64,
    x1: f64,
    y1: f64,
}

impl BBox {
    pub fn new(x0: f64, y0: f64, x1: f64, y1: f64) -> Result<Self, DomainError> {
        let in_unit = |v: f64| (0.0..=1.0).contains(&v);
        if in_unit(x0) && in_unit(y0) && in_unit(x1) && in_unit(y1) && x0 < x1 && y0 < y1 {
            Ok(Self { x0, y0, x1, y1 })
        } else {
            Err(DomainError::InvalidBox { x0, y0, x1, y1 })
        }
    }

    pub fn x0(&self) -> f64 {
        self.x0
    }
    pub fn y0(&self) -> f64 {
        self.y0
    }
    pub fn x1(&self) -> f64 {
        self.x1
    }
    pub fn y1(&self) -> f64 {
        self.y1
    }

    pub fn width(&self) -> f64 {
        self.x1 - self.x0
    }

    pub fn height(&self) -> f64 {
        self.y1 - self.y0
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn center(&self) -> Point {
        Point {
            x: (self.x0 + self.x1) / 2.0,
            y: (self.y0 + self.y1) / 2.0,
        }
    }

    pub fn contains(&self, p: Point) -> bool {
        (self.x0..=self.x1).contains(&p.x) && (self.y0..=self.y1).contains(&p.y)
    }

    /// Componentwise projection of `p` onto the box.
    pub fn clamp(&self, p: Point) -> Point {
        Point {
            x: p.x.clamp(self.x0, self.x1),
            y: p.y.clamp(self.y0, self.y1),
        }
    }
}

impl TryFrom<[f64; 4]> for BBox {
    type Error = DomainError;
    fn try_from(v: [f64; 4]) -> Result<Self, Self::Error> {
        BBox::new(v[0], v[1], v[2], v[3])
    }
}

impl From<BBox> for [f64; 4] {
    fn from(b: BBox) -> Self {
        [b.x0, b.y0, b.x1, b.y1]
    }
}

/// Which step produced a prediction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    Stage1,
    Stage2,
    Stage3,
    Ensemble,
    Snapped,
    Fallback,
}

/// One clip's answer: when, where, and what kind of collision.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PredictionRecord", into = "PredictionRecord")]
pub struct Prediction {
    clip_id: String,
    time_s: f64,
    centroid: Point,
    collision_type: CollisionType,
    source: Source,
}

fn clamp_time(t: f64, duration_s: Option<f64>) -> f64 {
    let t = if t.is_finite() { t.max(0.0) } else { 0.0 };
    match duration_s {
        Some(d) => t.min(d),
        None => t,
    }
}

impl Prediction {
    /// Builds a prediction whose time is saturated into `[0, clip.duration_s]`.
    pub fn new(
        clip: &ClipMeta,
        time_s: f64,
        centroid: Point,
        collision_type: CollisionType,
        source: Source,
    ) -> Self {
        Self::with_duration(
            &clip.clip_id,
            time_s,
            Some(clip.duration_s),
            centroid,
            collision_type,
            source,
        )
    }

    /// Like [`Prediction::new`] for callers that only know the clip id; the
    /// upper clamp is skipped when `duration_s` is `None`.
    pub fn with_duration(
        clip_id: &str,
        time_s: f64,
        duration_s: Option<f64>,
        centroid: Point,
        collision_type: CollisionType,
        source: Source,
    ) -> Self {
        Self {
            clip_id: clip_id.to_string(),
            time_s: clamp_time(time_s, duration_s),
            centroid,
            collision_type,
            source,
        }
    }

    /// Centered, mid-clip guess used when inference output is unusable.
    pub fn fallback(clip: &ClipMeta) -> Self {
        Self::new(
            clip,
            clip.duration_s / 2.0,
            Point::CENTER,
            CollisionType::RearEnd,
            Source::Fallback,
        )
    }

    pub fn clip_id(&self) -> &str {
        &self.clip_id
    }
    pub fn time_s(&self) -> f64 {
        self.time_s
    }
    pub fn centroid(&self) -> Point {
        self.centroid
    }
    pub fn collision_type(&self) -> CollisionType {
        self.collision_type
    }
    pub fn source(&self) -> Source {
        self.source
    }

    pub fn with_time(mut self, time_s: f64, duration_s: Option<f64>) -> Self {
        self.time_s = clamp_time(time_s, duration_s);
        self
    }

    pub fn with_centroid(mut self, centroid: Point) -> Self {
        self.centroid = centroid;
        self
    }

    pub fn with_type(mut self, collision_type: CollisionType) -> Self {
        self.collision_type = collision_type;
        self
    }

    pub fn with_source(mut self, source: Source) -> Self {
        self.source = source;
        self
    }
}

/// JSON-lines form of a [`Prediction`].
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PredictionRecord {
    clip_id: String,
    time_s: f64,
    x: f64,
    y: f64,
    #[serde(rename = "type")]
    collision_type: CollisionType,
    #[serde(default = "default_source")]
    source: Source,
}

fn default_source() -> Source {
    Source::Stage1
}

impl TryFrom<PredictionRecord> for Prediction {
    type Error = DomainError;
    fn try_from(r: PredictionRecord) -> Result<Self, Self::Error> {
        if !(r.time_s.is_finite() && r.time_s >= 0.0) {
            return Err(DomainError::InvalidRecord(format!(
                "clip {}: time_s must be finite and >= 0",
                r.clip_id
            )));
        }
        let centroid = Point::try_from([r.x, r.y])?;
        Ok(Prediction::with_duration(
            &r.clip_id,
            r.time_s,
            None,
            centroid,
            r.collision_type,
            r.source,
        ))
    }
}

impl From<Prediction> for PredictionRecord {
    fn from(p: Prediction) -> Self {
        Self {
            clip_id: p.clip_id,
            time_s: p.time_s,
            x: p.centroid.x,
            y: p.centroid.y,
            collision_type: p.collision_type,
            source: p.source,
        }
    }
}

/// Annotated accident for one clip.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GroundTruthRecord", into = "GroundTruthRecord")]
pub struct GroundTruth {
    pub clip_id: String,
    pub time_s: f64,
    pub bbox: BBox,
    pub collision_type: CollisionType,
}

impl GroundTruth {
    pub fn center(&self) -> Point {
        self.bbox.center()
    }
}

/// JSON-lines form: the shared `clip_id, time_s, x, y, type` keys, with
/// `x, y` the box center, plus the box corners.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct GroundTruthRecord {
    clip_id: String,
    time_s: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    x: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    y: Option<f64>,
    #[serde(rename = "type")]
    collision_type: CollisionType,
    x0: f64,
    y0: f64,
    x1: f64,
    y1: f64,
}

impl TryFrom<GroundTruthRecord> for GroundTruth {
    type Error = DomainError;
    fn try_from(r: GroundTruthRecord) -> Result<Self, Self::Error> {
        if !(r.time_s.is_finite() && r.time_s >= 0.0) {
            return Err(DomainError::InvalidRecord(format!(
                "clip {}: time_s must be finite and >= 0",
                r.clip_id
            )));
        }
        Ok(GroundTruth {
            bbox: BBox::new(r.x0, r.y0, r.x1, r.y1)?,
            clip_id: r.clip_id,
            time_s: r.time_s,
            collision_type: r.collision_type,
        })
    }
}

impl From<GroundTruth> for GroundTruthRecord {
    fn from(g: GroundTruth) -> Self {
        let c = g.bbox.center();
        Self {
            clip_id: g.clip_id,
            time_s: g.time_s,
            x: Some(c.x),
            y: Some(c.y),
            collision_type: g.collision_type,
            x0: g.bbox.x0,
            y0: g.bbox.y0,
            x1: g.bbox.x1,
            y1: g.bbox.y1,
        }
    }
}

/// COCO labels treated as vehicles by the snap step.
pub const VEHICLE_CLASSES: [&str; 4] = ["car", "motorcycle", "bus", "truck"];

/// One detector box on one frame of a clip.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "DetectionRecord", into = "DetectionRecord")]
pub struct Detection {
    pub clip_id: String,
    pub frame_idx: u64,
    pub bbox: BBox,
    pub label: String,
    pub score: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct DetectionRecord {
    clip_id: String,
    frame_idx: u64,
    x0: f64,
    y0: f64,
    x1: f64,
    y1: f64,
    label: String,
    score: f64,
}

impl TryFrom<DetectionRecord> for Detection {
    type Error = DomainError;
    fn try_from(r: DetectionRecord) -> Result<Self, Self::Error> {
        if !(0.0..=1.0).contains(&r.score) {
            return Err(DomainError::InvalidRecord(format!(
                "detection score {} outside [0, 1]",
                r.score
            )));
        }
        Ok(Detection {
            bbox: BBox::new(r.x0, r.y0, r.x1, r.y1)?,
            clip_id: r.clip_id,
            frame_idx: r.frame_idx,
            label: r.label,
            score: r.score,
        })
    }
}

impl From<Detection> for DetectionRecord {
    fn from(d: Detection) -> Self {
        Self {
            clip_id: d.clip_id,
            frame_idx: d.frame_idx,
            x0: d.bbox.x0,
            y0: d.bbox.y0,
            x1: d.bbox.x1,
            y1: d.bbox.y1,
            label: d.label,
            score: d.score,
        }
    }
}

impl Detection {
    pub fn is_vehicle(&self) -> bool {
        VEHICLE_CLASSES.contains(&self.label.as_str())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn clamp_point_examples() {
        let p = clamp_point(0.5, 0.5).unwrap();
        assert_eq!((p.x(), p.y()), (0.5, 0.5));
        let p = clamp_point(-0.1, 1.3).unwrap();
        assert_eq!((p.x(), p.y()), (0.0, 1.0));
        let p = clamp_point(1.0, 0.0).unwrap();
        assert_eq!((p.x(), p.y()), (1.0, 0.0));
        assert!(matches!(
            clamp_point(f64::NAN, 0.2),
            Err(DomainError::InvalidCoordinate { .. })
        ));
        assert!(clamp_point(0.1, f64::INFINITY).is_err());
    }

    #[test]
    fn collision_type_parsing() {
        assert_eq!(
            parse_collision_type("rear-end").unwrap(),
            CollisionType::RearEnd
        );
        assert_eq!(
            parse_collision_type("T Bone").unwrap(),
            CollisionType::TBone
        );
        assert_eq!(
            parse_collision_type(" Single_Vehicle ").unwrap(),
            CollisionType::SingleVehicle
        );
        assert_eq!(
            parse_collision_type("pileup"),
            Err(DomainError::UnknownType("pileup".into()))
        );
        assert!(parse_collision_type("").is_err());
    }

    #[test]
    fn layout_policy_defaults() {
        for tag in DEFAULT_NON_PERPENDICULAR_LAYOUTS {
            assert!(!SceneLayout::new(tag).perpendicular_possible(), "{tag}");
        }
        assert!(!SceneLayout::new("Grade Separated Intersection").perpendicular_possible());
        assert!(SceneLayout::new("4-way intersection").perpendicular_possible());
        let custom = LayoutPolicy::new(["roundabout"]);
        assert!(custom.classify("highway").perpendicular_possible());
        assert!(!custom.classify("roundabout").perpendicular_possible());
    }

    #[test]
    fn clip_meta_rejects_bad_values() {
        assert!(ClipMeta::new("a", 0.0, 30.0, SceneLayout::new("x")).is_err());
        assert!(ClipMeta::new("a", 10.0, -1.0, SceneLayout::new("x")).is_err());
        let bad: Result<ClipMeta, _> = serde_json::from_str(
            r#"{"clip_id":"a","duration_s":-3,"native_fps":30,"scene_layout":"highway"}"#,
        );
        assert!(bad.is_err());
    }

    #[test]
    fn prediction_time_is_clamped() {
        let clip = ClipMeta::new("c", 30.0, 30.0, SceneLayout::new("highway")).unwrap();
        let p = Prediction::new(
            &clip,
            99.0,
            Point::CENTER,
            CollisionType::HeadOn,
            Source::Stage1,
        );
        assert_eq!(p.time_s(), 30.0);
        let p = p.with_time(-2.0, Some(30.0));
        assert_eq!(p.time_s(), 0.0);
    }

    #[test]
    fn box_validation() {
        assert!(BBox::new(0.2, 0.2, 0.2, 0.5).is_err());
        assert!(BBox::new(0.2, 0.2, 1.2, 0.5).is_err());
        let b = BBox::new(0.4, 0.4, 0.6, 0.7).unwrap();
        assert!((b.width() - 0.2).abs() < 1e-12);
        assert!(b.contains(b.center()));
    }

    #[test]
    fn prediction_jsonl_shape() {
        let line = r#"{"clip_id":"c1","time_s":12.5,"x":0.4,"y":0.6,"type":"t-bone"}"#;
        let p: Prediction = serde_json::from_str(line).unwrap();
        assert_eq!(p.collision_type(), CollisionType::TBone);
        let v: serde_json::Value = serde_json::to_value(&p).unwrap();
        for key in ["clip_id", "time_s", "x", "y", "type"] {
            assert!(v.get(key).is_some(), "{key}");
        }
        let missing = r#"{"clip_id":"c1","time_s":12.5,"x":0.4,"type":"t-bone"}"#;
        assert!(serde_json::from_str::<Prediction>(missing).is_err());
    }

    #[test]
    fn ground_truth_roundtrip() {
        let g = GroundTruth {
            clip_id: "g".into(),
            time_s: 3.0,
            bbox: BBox::new(0.1, 0.2, 0.3, 0.4).unwrap(),
            collision_type: CollisionType::Sideswipe,
        };
        let s = serde_json::to_string(&g).unwrap();
        assert_eq!(serde_json::from_str::<GroundTruth>(&s).unwrap(), g);
    }

    proptest! {
        #[test]
        fn constructed_predictions_are_in_range(
            t in proptest::num::f64::ANY,
            x in -5.0f64..5.0,
            y in -5.0f64..5.0,
            d in 0.01f64..500.0,
        ) {
            let clip = ClipMeta::new("p", d, 25.0, SceneLayout::new("urban")).unwrap();
            let pt = clamp_point(x, y).unwrap();
            let p = Prediction::new(&clip, t, pt, CollisionType::RearEnd, Source::Stage1);
            prop_assert!(p.time_s() >= 0.0 && p.time_s() <= d);
            prop_assert!((0.0..=1.0).contains(&p.centroid().x()));
            prop_assert!((0.0..=1.0).contains(&p.centroid().y()));
        }

        #[test]
        fn collision_type_case_and_separator_variants(
            idx in 0usize..5,
            upper in proptest::collection::vec(any::<bool>(), 16),
            sep in prop_oneof![Just(" "), Just("_"), Just("-"), Just("  ")],
        ) {
            let t = CollisionType::ALL[idx];
            let text: String = t
                .as_str()
                .replace('-', sep)
                .chars()
                .zip(upper.iter().cycle())
                .map(|(c, &u)| if u { c.to_ascii_uppercase() } else { c })
                .collect();
            prop_assert_eq!(parse_collision_type(&text).unwrap(), t);
        }
    }
}
