//! JSON-lines files, the dataset manifest, and detection imports.

use std::collections::{BTreeMap, HashSet};
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::domain::{BBox, ClipMeta, Detection, GroundTruth, LayoutPolicy};
use crate::error::HarnessError;
use crate::postprocess::DetectionIndex;

/// Reads one record per non-blank line.
pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, HarnessError> {
    let file = File::open(path).map_err(|e| HarnessError::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| HarnessError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(
            serde_json::from_str(&line).map_err(|e| HarnessError::Record {
                path: path.to_path_buf(),
                line: i + 1,
                message: e.to_string(),
            })?,
        );
    }
    Ok(out)
}

/// Like [`read_jsonl`] but drops lines that fail to parse (a run killed
/// mid-write leaves a truncated last line).
pub fn read_jsonl_lenient<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, HarnessError> {
    if !path.exists() {
        return Ok(Vec::new());
    }
    let text = fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
    Ok(text
        .lines()
        .filter(|l| !l.trim().is_empty())
        .filter_map(|l| match serde_json::from_str(l) {
            Ok(v) => Some(v),
            Err(e) => {
                log::warn!("{path:?}: skipping unreadable record: {e}");
                None
            }
        })
        .collect())
}

pub fn write_jsonl<'a, T, I>(path: &Path, items: I) -> Result<(), HarnessError>
where
    T: Serialize + 'a,
    I: IntoIterator<Item = &'a T>,
{
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| HarnessError::io(parent, e))?;
    }
    let file = File::create(path).map_err(|e| HarnessError::io(path, e))?;
    let mut w = BufWriter::new(file);
    for item in items {
        let line = serde_json::to_string(item).map_err(|e| HarnessError::Record {
            path: path.to_path_buf(),
            line: 0,
            message: e.to_string(),
        })?;
        writeln!(w, "{line}").map_err(|e| HarnessError::io(path, e))?;
    }
    w.flush().map_err(|e| HarnessError::io(path, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), HarnessError> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| HarnessError::io(parent, e))?;
    }
    let text = serde_json::to_string_pretty(value).map_err(|e| HarnessError::Record {
        path: path.to_path_buf(),
        line: 0,
        message: e.to_string(),
    })?;
    fs::write(path, text + "\n").map_err(|e| HarnessError::io(path, e))
}

/// Append-only JSON-lines writer shared by worker threads; every record is
/// flushed as a whole line.
pub struct JsonlAppender {
    path: PathBuf,
    file: Mutex<File>,
}

impl JsonlAppender {
    pub fn open(path: &Path) -> Result<Self, HarnessError> {
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(|e| HarnessError::io(parent, e))?;
        }
        let mut file = OpenOptions::new()
            .create(true)
            .append(true)
            .read(true)
            .open(path)
            .map_err(|e| HarnessError::io(path, e))?;
        // Terminate a line left half-written by an interrupted run.
        let len = file
            .metadata()
            .map_err(|e| HarnessError::io(path, e))?
            .len();
        if len > 0 {
            let mut last = [0u8; 1];
            file.seek(SeekFrom::Start(len - 1))
                .and_then(|_| file.read_exact(&mut last))
                .map_err(|e| HarnessError::io(path, e))?;
            if last[0] != b'\n' {
                file.write_all(b"\n")
                    .map_err(|e| HarnessError::io(path, e))?;
            }
        }
        Ok(Self {
            path: path.to_path_buf(),
            file: Mutex::new(file),
        })
    }

    pub fn append<T: Serialize>(&self, record: &T) -> Result<(), HarnessError> {
        let mut line = serde_json::to_string(record).map_err(|e| HarnessError::Record {
            path: self.path.clone(),
            line: 0,
            message: e.to_string(),
        })?;
        line.push('\n');
        let mut f = self.file.lock().unwrap_or_else(|p| p.into_inner());
        f.write_all(line.as_bytes())
            .and_then(|_| f.flush())
            .map_err(|e| HarnessError::io(&self.path, e))
    }
}

pub const MANIFEST_SCHEMA_VERSION: u32 = 1;

/// The clips of a dataset plus optional ground-truth and detection files.
/// Relative paths are resolved against the manifest's directory on load.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub schema_version: u32,
    pub clips: Vec<ClipMeta>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ground_truth: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detections: Option<PathBuf>,
}

impl Manifest {
    pub fn new(clips: Vec<ClipMeta>) -> Self {
        Self {
            schema_version: MANIFEST_SCHEMA_VERSION,
            clips,
            ground_truth: None,
            detections: None,
        }
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.schema_version != MANIFEST_SCHEMA_VERSION {
            return Err(HarnessError::Manifest(format!(
                "unsupported schema_version {} (expected {MANIFEST_SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        let mut seen = HashSet::new();
        for c in &self.clips {
            if !seen.insert(c.clip_id.as_str()) {
                return Err(HarnessError::Manifest(format!(
                    "duplicate clip_id {}",
                    c.clip_id
                )));
            }
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        let mut m: Manifest = serde_json::from_str(&text)
            .map_err(|e| HarnessError::Manifest(format!("{path:?}: {e}")))?;
        m.validate()?;
        let base = path.parent().unwrap_or(Path::new("."));
        let resolve = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        m.ground_truth.as_mut().map(resolve);
        m.detections.as_mut().map(resolve);
        for c in &mut m.clips {
            if let Some(src) = c.frame_source.as_mut() {
                resolve(&mut src.dir);
            }
        }
        Ok(m)
    }

    pub fn save(&self, path: &Path) -> Result<(), HarnessError> {
        write_json(path, self)
    }

    pub fn apply_layout_policy(&mut self, policy: &LayoutPolicy) {
        for c in &mut self.clips {
            *c = c.clone().with_layout_policy(policy);
        }
    }

    pub fn load_ground_truth(&self) -> Result<Option<Vec<GroundTruth>>, HarnessError> {
        self.ground_truth
            .as_deref()
            .map(read_jsonl::<GroundTruth>)
            .transpose()
    }

    pub fn load_detections(&self) -> Result<Option<DetectionIndex>, HarnessError> {
        self.detections.as_deref().map(read_detections).transpose()
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct DetectionHeader {
    detection_fps: f64,
}

/// Reads a detections file: a `{"detection_fps": ...}` header line followed
/// by one detection per line.
pub fn read_detections(path: &Path) -> Result<DetectionIndex, HarnessError> {
    let text = fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
    let mut lines = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty());
    let record_err = |line: usize, message: String| HarnessError::Record {
        path: path.to_path_buf(),
        line,
        message,
    };
    let (_, first) = lines
        .next()
        .ok_or_else(|| record_err(1, "missing detection_fps header".into()))?;
    let header: DetectionHeader =
        serde_json::from_str(first).map_err(|e| record_err(1, format!("header: {e}")))?;
    if !(header.detection_fps > 0.0 && header.detection_fps.is_finite()) {
        return Err(record_err(1, "detection_fps must be > 0".into()));
    }
    let dets = lines
        .map(|(i, l)| {
            serde_json::from_str::<Detection>(l).map_err(|e| record_err(i + 1, e.to_string()))
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(DetectionIndex::new(header.detection_fps, dets))
}

pub fn write_detections<'a>(
    path: &Path,
    detection_fps: f64,
    detections: impl IntoIterator<Item = &'a Detection>,
) -> Result<(), HarnessError> {
    let header = serde_json::to_value(DetectionHeader { detection_fps }).expect("plain struct");
    let rows: Vec<serde_json::Value> = std::iter::once(header)
        .chain(
            detections
                .into_iter()
                .map(|d| serde_json::to_value(d).expect("plain struct")),
        )
        .collect();
    write_jsonl(path, &rows)
}

/// An entry of a COCO `images` list. `file_name` must look like
/// `<clip_id>/<frame_idx>.<ext>`.
#[derive(Debug, Clone, Deserialize)]
pub struct CocoImage {
    pub id: u64,
    pub file_name: String,
    pub width: f64,
    pub height: f64,
}

#[derive(Debug, Clone, Deserialize)]
struct CocoResult {
    image_id: u64,
    category_id: u32,
    bbox: [f64; 4],
    score: f64,
}

/// COCO category ids for the vehicle classes; everything else keeps its id
/// as the label.
fn coco_label(category_id: u32) -> String {
    match category_id {
        3 => "car".into(),
        4 => "motorcycle".into(),
        6 => "bus".into(),
        8 => "truck".into(),
        other => format!("coco:{other}"),
    }
}

/// Converts standard COCO detector output (`[{image_id, category_id,
/// bbox: [x, y, w, h] in pixels, score}]`) into normalized detections.
/// Boxes are clipped to the image; degenerate ones are dropped.
pub fn import_coco_results(
    results_json: &str,
    images: &[CocoImage],
) -> Result<Vec<Detection>, HarnessError> {
    let results: Vec<CocoResult> = serde_json::from_str(results_json)
        .map_err(|e| HarnessError::Manifest(format!("COCO results: {e}")))?;
    let by_id: BTreeMap<u64, &CocoImage> = images.iter().map(|i| (i.id, i)).collect();
    let mut out = Vec::with_capacity(results.len());
    for r in results {
        let img = by_id.get(&r.image_id).ok_or_else(|| {
            HarnessError::Manifest(format!(
                "COCO result references unknown image {}",
                r.image_id
            ))
        })?;
        let path = Path::new(&img.file_name);
        let clip_id = path
            .parent()
            .and_then(|p| p.file_name())
            .and_then(|s| s.to_str())
            .ok_or_else(|| {
                HarnessError::Manifest(format!("{}: no clip directory", img.file_name))
            })?;
        let frame_idx = path
            .file_stem()
            .and_then(|s| s.to_str())
            .and_then(|s| s.parse::<u64>().ok())
            .ok_or_else(|| HarnessError::Manifest(format!("{}: no frame index", img.file_name)))?;
        let [x, y, w, h] = r.bbox;
        let nx = |v: f64| (v / img.width).clamp(0.0, 1.0);
        let ny = |v: f64| (v / img.height).clamp(0.0, 1.0);
        let Ok(bbox) = BBox::new(nx(x), ny(y), nx(x + w), ny(y + h)) else {
            continue;
        };
        out.push(Detection {
            clip_id: clip_id.to_string(),
            frame_idx,
            bbox,
            label: coco_label(r.category_id),
            score: r.score.clamp(0.0, 1.0),
        });
    }
    Ok(out)
}
