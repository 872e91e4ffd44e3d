//! Burns `t=xx.xxs` labels into frames and writes them as PNG.
//!
//! cargo run --example timestamp_overlay -- [output_dir]

use std::path::PathBuf;

use accident_pipeline::overlay::{
    burn_timestamp, encode_frame, format_timestamp, label_size, Frame,
};
use image::{Rgb, RgbImage};

fn main() {
    let out = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("timestamp_overlay"));
    std::fs::create_dir_all(&out).unwrap();
    for t in [0.0, 9.5, 12.345, 31.999] {
        let img = RgbImage::from_fn(480, 270, |x, y| Rgb([(x / 2) as u8, (y / 2) as u8, 160]));
        let frame = burn_timestamp(&Frame::new(img, t));
        let label = format_timestamp(t);
        let path = out.join(format!("{label}.png"));
        frame.image.save(&path).unwrap();
        let encoded = encode_frame(&frame);
        println!(
            "{label:>10}  label {:?}  {} base64 bytes  -> {}",
            label_size(&label),
            encoded.data_base64.len(),
            path.display()
        );
    }
}
