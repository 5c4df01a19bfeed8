//! Minimal PNG plotting: loss curves from CSV logs and pose overlays.
//!
//! Intentionally dependency-light — straight lines on an RGB buffer, no text.
//! Loss curves draw one polyline per CSV column (colors in column order:
//! blue, orange, green, red); pose overlays draw the ground-truth skeleton
//! in green and the prediction in red, projected onto the first two
//! coordinates.

use std::path::Path;

use image::{Rgb, RgbImage};
use wifipose_core::{Dataset, Error, Result};

const WIDTH: u32 = 900;
const HEIGHT: u32 = 600;
const MARGIN: f64 = 40.0;

const PALETTE: [[u8; 3]; 4] = [
    [31, 119, 180],  // blue
    [255, 127, 14],  // orange
    [44, 160, 44],   // green
    [214, 39, 40],   // red
];

fn draw_line(img: &mut RgbImage, a: (f64, f64), b: (f64, f64), color: Rgb<u8>) {
    let (mut x0, mut y0) = (a.0.round() as i64, a.1.round() as i64);
    let (x1, y1) = (b.0.round() as i64, b.1.round() as i64);
    let dx = (x1 - x0).abs();
    let dy = -(y1 - y0).abs();
    let sx = if x0 < x1 { 1 } else { -1 };
    let sy = if y0 < y1 { 1 } else { -1 };
    let mut err = dx + dy;
    loop {
        if x0 >= 0 && y0 >= 0 && (x0 as u32) < img.width() && (y0 as u32) < img.height() {
            img.put_pixel(x0 as u32, y0 as u32, color);
        }
        if x0 == x1 && y0 == y1 {
            break;
        }
        let e2 = 2 * err;
        if e2 >= dy {
            err += dy;
            x0 += sx;
        }
        if e2 <= dx {
            err += dx;
            y0 += sy;
        }
    }
}

fn draw_marker(img: &mut RgbImage, center: (f64, f64), color: Rgb<u8>) {
    for dx in -2i64..=2 {
        for dy in -2i64..=2 {
            let (x, y) = (center.0.round() as i64 + dx, center.1.round() as i64 + dy);
            if x >= 0 && y >= 0 && (x as u32) < img.width() && (y as u32) < img.height() {
                img.put_pixel(x as u32, y as u32, color);
            }
        }
    }
}

fn blank() -> RgbImage {
    let mut img = RgbImage::from_pixel(WIDTH, HEIGHT, Rgb([255, 255, 255]));
    let axis = Rgb([0, 0, 0]);
    draw_line(&mut img, (MARGIN, HEIGHT as f64 - MARGIN), (WIDTH as f64 - MARGIN, HEIGHT as f64 - MARGIN), axis);
    draw_line(&mut img, (MARGIN, MARGIN), (MARGIN, HEIGHT as f64 - MARGIN), axis);
    img
}

/// Render every numeric column of a loss-log CSV as a polyline over epochs.
pub fn plot_loss_csv(csv_path: &Path, out: &Path) -> Result<()> {
    let raw = std::fs::read_to_string(csv_path).map_err(|e| Error::io(csv_path, e))?;
    let mut lines = raw.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::data(format!("{}: empty log", csv_path.display())))?;
    let columns = header.split(',').count();
    if columns < 2 {
        return Err(Error::data("log must have an epoch column plus at least one value"));
    }
    let mut series: Vec<Vec<f64>> = vec![Vec::new(); columns - 1];
    for (ln, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != columns {
            return Err(Error::data(format!(
                "{}: row {} has {} fields, header has {columns}",
                csv_path.display(),
                ln + 2,
                fields.len()
            )));
        }
        for (k, f) in fields[1..].iter().enumerate() {
            let v: f64 = f
                .parse()
                .map_err(|_| Error::data(format!("{}: bad value '{f}'", csv_path.display())))?;
            series[k].push(v);
        }
    }
    let epochs = series[0].len();
    if epochs == 0 {
        return Err(Error::data("log has no data rows"));
    }

    let lo = series
        .iter()
        .flat_map(|s| s.iter().copied())
        .fold(f64::INFINITY, f64::min);
    let hi = series
        .iter()
        .flat_map(|s| s.iter().copied())
        .fold(f64::NEG_INFINITY, f64::max);
    let span = (hi - lo).max(1e-12);

    let mut img = blank();
    let plot_w = WIDTH as f64 - 2.0 * MARGIN;
    let plot_h = HEIGHT as f64 - 2.0 * MARGIN;
    for (k, s) in series.iter().enumerate() {
        let color = Rgb(PALETTE[k % PALETTE.len()]);
        let x_of = |i: usize| MARGIN + plot_w * i as f64 / (epochs.max(2) - 1) as f64;
        let y_of = |v: f64| HEIGHT as f64 - MARGIN - plot_h * (v - lo) / span;
        for i in 1..epochs {
            draw_line(&mut img, (x_of(i - 1), y_of(s[i - 1])), (x_of(i), y_of(s[i])), color);
        }
    }
    img.save(out)
        .map_err(|e| Error::data(format!("failed to write {}: {e}", out.display())))?;
    Ok(())
}

fn read_predictions(path: &Path, n: usize, joints: usize, coords: usize) -> Result<Vec<f32>> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let expected = n * joints * coords * 4;
    if bytes.len() != expected {
        return Err(Error::data(format!(
            "{}: expected {expected} bytes of predictions, found {}",
            path.display(),
            bytes.len()
        )));
    }
    Ok(bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect())
}

/// Overlay the predicted skeleton (red) on the ground truth (green) for one
/// sample, projecting onto the first two coordinates.
pub fn plot_pose_overlay(
    dataset: &Dataset,
    predictions_path: &Path,
    index: usize,
    out: &Path,
) -> Result<()> {
    let meta = dataset.meta();
    if index >= dataset.len() {
        return Err(Error::data(format!(
            "sample index {index} out of range (N = {})",
            dataset.len()
        )));
    }
    let preds = read_predictions(predictions_path, dataset.len(), meta.joints, meta.coords)?;
    let gt = dataset.pose_matrix(index)?;
    let stride = meta.joints * meta.coords;
    let pred_at = |j: usize, c: usize| preds[index * stride + j * meta.coords + c] as f64;

    // Common bounding box over both skeletons.
    let mut lo = [f64::INFINITY; 2];
    let mut hi = [f64::NEG_INFINITY; 2];
    for j in 0..meta.joints {
        for c in 0..2 {
            for v in [gt[[j, c]], pred_at(j, c)] {
                lo[c] = lo[c].min(v);
                hi[c] = hi[c].max(v);
            }
        }
    }
    let span = [(hi[0] - lo[0]).max(1e-9), (hi[1] - lo[1]).max(1e-9)];
    let plot_w = WIDTH as f64 - 2.0 * MARGIN;
    let plot_h = HEIGHT as f64 - 2.0 * MARGIN;
    let to_px = |x: f64, y: f64| {
        (
            MARGIN + plot_w * (x - lo[0]) / span[0],
            HEIGHT as f64 - MARGIN - plot_h * (y - lo[1]) / span[1],
        )
    };

    let mut img = blank();
    let green = Rgb([44, 160, 44]);
    let red = Rgb([214, 39, 40]);
    for &(a, b) in &dataset.skeleton().edges {
        draw_line(&mut img, to_px(gt[[a, 0]], gt[[a, 1]]), to_px(gt[[b, 0]], gt[[b, 1]]), green);
        draw_line(
            &mut img,
            to_px(pred_at(a, 0), pred_at(a, 1)),
            to_px(pred_at(b, 0), pred_at(b, 1)),
            red,
        );
    }
    for j in 0..meta.joints {
        draw_marker(&mut img, to_px(gt[[j, 0]], gt[[j, 1]]), green);
        draw_marker(&mut img, to_px(pred_at(j, 0), pred_at(j, 1)), red);
    }
    img.save(out)
        .map_err(|e| Error::data(format!("failed to write {}: {e}", out.display())))?;
    Ok(())
}
