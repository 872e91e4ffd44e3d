//! Frame loading from image sequences and the burned-in timestamp label.

use std::fs;
use std::io::Cursor;
use std::path::{Path, PathBuf};

use base64::Engine;
use image::{imageops::FilterType, ImageFormat, Rgb, RgbImage};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::domain::{ClipMeta, FrameSource};
use crate::error::FrameLoadError;
use crate::plan::{resize_dims, FramePlan};

#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub image: RgbImage,
    pub timestamp_s: f64,
}

impl Frame {
    pub fn new(image: RgbImage, timestamp_s: f64) -> Self {
        Self { image, timestamp_s }
    }

    pub fn width(&self) -> u32 {
        self.image.width()
    }

    pub fn height(&self) -> u32 {
        self.image.height()
    }
}

/// An image ready to be attached to an inference request.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncodedFrame {
    pub timestamp_s: f64,
    pub media_type: String,
    pub data_base64: String,
}

impl EncodedFrame {
    pub fn data_url(&self) -> String {
        format!("data:{};base64,{}", self.media_type, self.data_base64)
    }
}

/// `t=%.2fs`, rounding half away from zero on the shortest decimal form of `t`.
pub fn format_timestamp(t: f64) -> String {
    let t = if t.is_finite() { t.max(0.0) } else { 0.0 };
    // Display for f64 prints the shortest round-tripping decimal, never
    // exponent notation, so the digits below are the ones a reader would see.
    let repr = format!("{t}");
    let (int_part, frac_part) = repr.split_once('.').unwrap_or((&repr, ""));
    let digits: Vec<u32> = frac_part.chars().filter_map(|c| c.to_digit(10)).collect();
    let mut cents: u128 = int_part.parse::<u128>().unwrap_or(0) * 100
        + digits.first().copied().unwrap_or(0) as u128 * 10
        + digits.get(1).copied().unwrap_or(0) as u128;
    if digits.get(2).copied().unwrap_or(0) >= 5 {
        cents += 1;
    }
    format!("t={}.{:02}s", cents / 100, cents % 100)
}

const GLYPH_W: u32 = 5;
const GLYPH_H: u32 = 7;
const SCALE: u32 = 2;
const PAD: u32 = 2 * SCALE;

fn glyph(c: char) -> [u8; 7] {
    match c {
        '0' => [0x0E, 0x11, 0x13, 0x15, 0x19, 0x11, 0x0E],
        '1' => [0x04, 0x0C, 0x04, 0x04, 0x04, 0x04, 0x0E],
        '2' => [0x0E, 0x11, 0x01, 0x02, 0x04, 0x08, 0x1F],
        '3' => [0x1F, 0x02, 0x04, 0x02, 0x01, 0x11, 0x0E],
        '4' => [0x02, 0x06, 0x0A, 0x12, 0x1F, 0x02, 0x02],
        '5' => [0x1F, 0x10, 0x1E, 0x01, 0x01, 0x11, 0x0E],
        '6' => [0x06, 0x08, 0x10, 0x1E, 0x11, 0x11, 0x0E],
        '7' => [0x1F, 0x01, 0x02, 0x04, 0x08, 0x08, 0x08],
        '8' => [0x0E, 0x11, 0x11, 0x0E, 0x11, 0x11, 0x0E],
        '9' => [0x0E, 0x11, 0x11, 0x0F, 0x01, 0x02, 0x0C],
        't' => [0x08, 0x08, 0x1C, 0x08, 0x08, 0x09, 0x06],
        '=' => [0x00, 0x00, 0x1F, 0x00, 0x1F, 0x00, 0x00],
        '.' => [0x00, 0x00, 0x00, 0x00, 0x00, 0x0C, 0x0C],
        's' => [0x00, 0x00, 0x0E, 0x10, 0x0E, 0x01, 0x1E],
        _ => [0x1F; 7],
    }
}

/// Pixel size of the white label box for `text`, anchored at (0, 0).
pub fn label_size(text: &str) -> (u32, u32) {
    let n = text.chars().count() as u32;
    let advance = (GLYPH_W + 1) * SCALE;
    let w = 2 * PAD + n * advance - SCALE;
    let h = 2 * PAD + GLYPH_H * SCALE;
    (w, h)
}

/// Draws `t=xx.xxs` in black on a white box in the top-left corner.
///
/// Frames too small to hold the label are returned unchanged.
pub fn burn_timestamp(frame: &Frame) -> Frame {
    let text = format_timestamp(frame.timestamp_s);
    let (w, h) = label_size(&text);
    let mut out = frame.clone();
    if frame.width() < w || frame.height() < h {
        log::warn!(
            "frame {}x{} too small for timestamp label ({}x{}), skipping",
            frame.width(),
            frame.height(),
            w,
            h
        );
        return out;
    }
    let white = Rgb([255, 255, 255]);
    let black = Rgb([0, 0, 0]);
    for y in 0..h {
        for x in 0..w {
            out.image.put_pixel(x, y, white);
        }
    }
    for (i, c) in text.chars().enumerate() {
        let ox = PAD + i as u32 * (GLYPH_W + 1) * SCALE;
        for (row, bits) in glyph(c).iter().enumerate() {
            for col in 0..GLYPH_W {
                if bits & (1 << (GLYPH_W - 1 - col)) == 0 {
                    continue;
                }
                for dy in 0..SCALE {
                    for dx in 0..SCALE {
                        out.image.put_pixel(
                            ox + col * SCALE + dx,
                            PAD + row as u32 * SCALE + dy,
                            black,
                        );
                    }
                }
            }
        }
    }
    out
}

fn frame_path(source: &FrameSource, idx: u64) -> PathBuf {
    source.dir.join(format!("{idx:05}.{}", source.extension))
}

fn last_index(source: &FrameSource) -> Option<u64> {
    fs::read_dir(&source.dir)
        .ok()?
        .filter_map(|e| e.ok())
        .filter_map(|e| {
            let path = e.path();
            (path.extension()?.to_str()? == source.extension)
                .then(|| path.file_stem()?.to_str()?.parse::<u64>().ok())
                .flatten()
        })
        .max()
}

/// Loads the source image nearest `t` (index `round(t * fps)`, saturating at
/// the last frame) and downsizes it so its longer side is at most `longest_side`.
pub fn load_frame(clip: &ClipMeta, t: f64, longest_side: u32) -> Result<Frame, FrameLoadError> {
    let source = clip
        .frame_source
        .as_ref()
        .ok_or_else(|| FrameLoadError::NoSource {
            clip_id: clip.clip_id.clone(),
        })?;
    let unreadable = |path: &Path, reason: String| FrameLoadError::Unreadable {
        clip_id: clip.clip_id.clone(),
        t,
        path: path.to_path_buf(),
        reason,
    };
    let mut idx = (t.max(0.0) * source.fps).round() as u64;
    let mut path = frame_path(source, idx);
    if !path.exists() {
        match last_index(source) {
            Some(last) if idx > last => {
                idx = last;
                path = frame_path(source, idx);
            }
            _ => return Err(unreadable(&path, "file not found".into())),
        }
    }
    let decoded = image::open(&path).map_err(|e| unreadable(&path, e.to_string()))?;
    let rgb = decoded.to_rgb8();
    let (w, h) = resize_dims(rgb.width(), rgb.height(), longest_side);
    let image = if (w, h) == rgb.dimensions() {
        rgb
    } else {
        image::imageops::resize(&rgb, w, h, FilterType::Triangle)
    };
    Ok(Frame::new(image, idx as f64 / source.fps))
}

pub fn encode_png(frame: &Frame) -> Vec<u8> {
    let mut buf = Cursor::new(Vec::new());
    frame
        .image
        .write_to(&mut buf, ImageFormat::Png)
        .expect("PNG encoding into memory cannot fail");
    buf.into_inner()
}

pub fn encode_frame(frame: &Frame) -> EncodedFrame {
    EncodedFrame {
        timestamp_s: frame.timestamp_s,
        media_type: "image/png".into(),
        data_base64: base64::engine::general_purpose::STANDARD.encode(encode_png(frame)),
    }
}

/// Loads, optionally labels, and encodes every frame of a plan.
///
/// Clips without a frame source produce no payloads; the request still
/// carries the plan's timestamps.
pub fn prepare_frames(
    clip: &ClipMeta,
    plan: &FramePlan,
    burn: bool,
) -> Result<Vec<EncodedFrame>, FrameLoadError> {
    if clip.frame_source.is_none() {
        return Ok(Vec::new());
    }
    plan.timestamps
        .par_iter()
        .map(|&t| {
            let frame = load_frame(clip, t, plan.longest_side_px)?;
            let frame = if burn { burn_timestamp(&frame) } else { frame };
            Ok(encode_frame(&frame))
        })
        .collect()
}

/// Writes `count` flat-color PNG frames named `%05d.png` into `dir`.
pub fn render_flat_frames(dir: &Path, count: u64, width: u32, height: u32) -> std::io::Result<()> {
    fs::create_dir_all(dir)?;
    for i in 0..count {
        let shade = (40 + (i * 7) % 160) as u8;
        let img = RgbImage::from_pixel(width, height, Rgb([shade, 90, 200 - shade / 2]));
        img.save_with_format(dir.join(format!("{i:05}.png")), ImageFormat::Png)
            .map_err(std::io::Error::other)?;
    }
    Ok(())
}
