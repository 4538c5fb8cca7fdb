use std::path::Path;

use crate::grid::Image;
use crate::{Error, Result};

/// Writes a 16-bit grayscale PNG (linear in `[0, max]`) and a CSV sidecar with
/// the exact values next to it (same stem, `.csv` extension).
pub fn emit_image(image: &Image, path: &Path) -> Result<()> {
    if image.data().iter().any(|v| !v.is_finite()) {
        return Err(Error::Parameter(format!(
            "image for {} has non-finite values",
            path.display()
        )));
    }
    let peak = image.max().max(0.0);
    let pixels: Vec<u16> = image
        .data()
        .iter()
        .map(|&v| {
            if peak > 0.0 {
                ((v.max(0.0) / peak) * 65535.0).round() as u16
            } else {
                0
            }
        })
        .collect();
    let buf =
        image::ImageBuffer::<image::Luma<u16>, Vec<u16>>::from_raw(image.cols() as u32, image.rows() as u32, pixels)
            .expect("buffer matches image size");
    buf.save(path).map_err(|e| Error::io(path, std::io::Error::other(e)))?;

    let mut text = String::new();
    for r in 0..image.rows() {
        let row: Vec<String> = (0..image.cols()).map(|c| image.get(r, c).to_string()).collect();
        text.push_str(&row.join(","));
        text.push('\n');
    }
    let sidecar = path.with_extension("csv");
    std::fs::write(&sidecar, text).map_err(|e| Error::io(&sidecar, e))
}

/// Reads a sidecar written by [`emit_image`].
pub fn load_image_csv(path: &Path) -> Result<Image> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut rows = 0;
    let mut cols = None;
    let mut data = Vec::new();
    for line in text.lines().filter(|l| !l.trim().is_empty()) {
        let vals = line
            .split(',')
            .map(|t| t.trim().parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::Parse {
                path: path.to_path_buf(),
                msg: e.to_string(),
            })?;
        if *cols.get_or_insert(vals.len()) != vals.len() {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                msg: "ragged rows".into(),
            });
        }
        data.extend(vals);
        rows += 1;
    }
    Ok(Image::new(rows, cols.unwrap_or(0), data))
}
