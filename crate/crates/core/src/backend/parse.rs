//! Tolerant extraction of the JSON answer from a model completion.

use serde_json::{Map, Value};

use crate::domain::{clamp_point, parse_collision_type, ClipMeta, Point, Prediction, Source};
use crate::error::ParseError;

/// End (inclusive byte index) of the balanced object starting at `start`.
fn balanced_end(s: &str, start: usize) -> Option<usize> {
    let mut depth = 0usize;
    let mut in_str = false;
    let mut esc = false;
    for (i, ch) in s[start..].char_indices() {
        if in_str {
            match (esc, ch) {
                (true, _) => esc = false,
                (false, '\\') => esc = true,
                (false, '"') => in_str = false,
                _ => {}
            }
            continue;
        }
        match ch {
            '"' => in_str = true,
            '{' => depth += 1,
            '}' => {
                depth = depth.checked_sub(1)?;
                if depth == 0 {
                    return Some(start + i);
                }
            }
            _ => {}
        }
    }
    None
}

/// First JSON object embedded in `text`, ignoring markdown fences and prose.
pub fn extract_json_object(text: &str) -> Result<Map<String, Value>, ParseError> {
    for (start, _) in text.match_indices('{') {
        let Some(end) = balanced_end(text, start) else {
            continue;
        };
        if let Ok(Value::Object(map)) = serde_json::from_str::<Value>(&text[start..=end]) {
            return Ok(map);
        }
    }
    Err(ParseError::NoJsonFound)
}

/// Numeric field, also accepting numeric strings such as `"12.5"` or a
/// copied frame label `"t=12.50s"`.
fn number(map: &Map<String, Value>, key: &str) -> Result<f64, ParseError> {
    let v = map
        .get(key)
        .ok_or_else(|| ParseError::SchemaError(format!("missing key {key:?}")))?;
    let n = match v {
        Value::Number(n) => n.as_f64(),
        Value::String(s) => {
            let s = s.trim();
            let s = s.strip_prefix("t=").unwrap_or(s);
            let s = s.strip_suffix('s').unwrap_or(s).trim();
            s.parse::<f64>().ok()
        }
        _ => None,
    };
    match n {
        Some(x) if x.is_finite() => Ok(x),
        _ => Err(ParseError::SchemaError(format!(
            "key {key:?} is not a finite number"
        ))),
    }
}

/// Joint Stage-1 answer; time clamped to the clip, point to the unit square.
pub fn parse_stage1_response(text: &str, clip: &ClipMeta) -> Result<Prediction, ParseError> {
    let map = extract_json_object(text)?;
    let time_s = number(&map, "time_s")?;
    let x = number(&map, "x")?;
    let y = number(&map, "y")?;
    let type_str = map
        .get("type")
        .and_then(Value::as_str)
        .ok_or_else(|| ParseError::SchemaError("missing string key \"type\"".into()))?;
    let collision_type =
        parse_collision_type(type_str).map_err(|e| ParseError::SchemaError(e.to_string()))?;
    let centroid = clamp_point(x, y).map_err(|e| ParseError::SchemaError(e.to_string()))?;
    Ok(Prediction::new(
        clip,
        time_s,
        centroid,
        collision_type,
        Source::Stage1,
    ))
}

/// Refined Stage-2 time, clamped to `[0, duration]`.
pub fn parse_stage2_time(text: &str, clip: &ClipMeta) -> Result<f64, ParseError> {
    let map = extract_json_object(text)?;
    Ok(number(&map, "time_s")?.clamp(0.0, clip.duration_s))
}

/// Stage-3 point on the `[0, 1000]` scale, normalized to `[0, 1]²`.
pub fn parse_stage3_point(text: &str) -> Result<Point, ParseError> {
    let map = extract_json_object(text)?;
    let x = number(&map, "x")?;
    let y = number(&map, "y")?;
    clamp_point(x / 1000.0, y / 1000.0).map_err(|e| ParseError::SchemaError(e.to_string()))
}
