//! Patch extraction, learned patch embedding and fixed sinusoidal positional
//! encoding.
//!
//! The image-like CSI tensor is cut into a non-overlapping grid of
//! `patch_height x patch_width` patches spanning all channels. Each flattened
//! patch (channel-major, then patch row, then patch column) is mapped through
//! a learned linear layer — equivalent to a strided convolution whose kernel
//! equals its stride. Patches are indexed row-major over the grid.

use ndarray::{Array1, Array2, Array3};

use crate::data::ImageLikeCsi;
use crate::error::{Error, Result};

/// Embedded patch tokens plus the grid geometry they came from.
#[derive(Debug, Clone)]
pub struct PatchTokens {
    /// n x d token matrix.
    pub tokens: Array2<f64>,
    pub grid_rows: usize,
    pub grid_cols: usize,
    pub patch_height: usize,
    pub patch_width: usize,
}

impl PatchTokens {
    pub fn count(&self) -> usize {
        self.tokens.nrows()
    }

    pub fn dim(&self) -> usize {
        self.tokens.ncols()
    }
}

/// Check that the patch size exactly tiles the image, returning the grid.
pub fn patch_grid(
    height: usize,
    width: usize,
    patch_height: usize,
    patch_width: usize,
) -> Result<(usize, usize)> {
    if patch_height == 0 || patch_width == 0 {
        return Err(Error::config("patch dimensions must be positive"));
    }
    if height % patch_height != 0 {
        return Err(Error::config(format!(
            "image height {height} is not divisible by patch height {patch_height}"
        )));
    }
    if width % patch_width != 0 {
        return Err(Error::config(format!(
            "image width {width} is not divisible by patch width {patch_width}"
        )));
    }
    Ok((height / patch_height, width / patch_width))
}

/// Flatten the image into its raw patch matrix: n x (channels*ph*pw), one
/// row per patch in grid row-major order.
pub fn patchify_raw(
    img: &ImageLikeCsi,
    patch_height: usize,
    patch_width: usize,
) -> Result<Array2<f64>> {
    let (a, h, w) = (img.channels(), img.height(), img.width());
    let (grid_rows, grid_cols) = patch_grid(h, w, patch_height, patch_width)?;
    let patch_len = a * patch_height * patch_width;
    let mut out = Array2::zeros((grid_rows * grid_cols, patch_len));
    for gr in 0..grid_rows {
        for gc in 0..grid_cols {
            let row = gr * grid_cols + gc;
            let mut k = 0;
            for c in 0..a {
                for dh in 0..patch_height {
                    for dw in 0..patch_width {
                        out[[row, k]] =
                            img.values[[c, gr * patch_height + dh, gc * patch_width + dw]] as f64;
                        k += 1;
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Inverse of [`patchify_raw`]: reassemble patch pixel rows into the image.
pub fn unpatchify(
    patches: &Array2<f64>,
    channels: usize,
    grid_rows: usize,
    grid_cols: usize,
    patch_height: usize,
    patch_width: usize,
) -> Result<Array3<f64>> {
    let patch_len = channels * patch_height * patch_width;
    if patches.nrows() != grid_rows * grid_cols || patches.ncols() != patch_len {
        return Err(Error::config(format!(
            "patch matrix {:?} does not match grid {grid_rows}x{grid_cols} with patch length {patch_len}",
            patches.shape()
        )));
    }
    let mut out = Array3::zeros((channels, grid_rows * patch_height, grid_cols * patch_width));
    for gr in 0..grid_rows {
        for gc in 0..grid_cols {
            let row = gr * grid_cols + gc;
            let mut k = 0;
            for c in 0..channels {
                for dh in 0..patch_height {
                    for dw in 0..patch_width {
                        out[[c, gr * patch_height + dh, gc * patch_width + dw]] = patches[[row, k]];
                        k += 1;
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Embed an image's patches with a learned linear map.
///
/// `weights` is (channels*ph*pw) x d; `bias`, when present, is length d.
pub fn patchify_embed(
    img: &ImageLikeCsi,
    patch_height: usize,
    patch_width: usize,
    weights: &Array2<f64>,
    bias: Option<&Array1<f64>>,
) -> Result<PatchTokens> {
    let raw = patchify_raw(img, patch_height, patch_width)?;
    let (grid_rows, grid_cols) = patch_grid(img.height(), img.width(), patch_height, patch_width)?;
    if weights.nrows() != raw.ncols() {
        return Err(Error::config(format!(
            "embedding weights expect patch length {}, image gives {}",
            weights.nrows(),
            raw.ncols()
        )));
    }
    let mut tokens = raw.dot(weights);
    if let Some(b) = bias {
        if b.len() != weights.ncols() {
            return Err(Error::config(format!(
                "bias length {} does not match embedding dim {}",
                b.len(),
                weights.ncols()
            )));
        }
        tokens += b;
    }
    Ok(PatchTokens {
        tokens,
        grid_rows,
        grid_cols,
        patch_height,
        patch_width,
    })
}

/// Fixed sinusoidal positional table over flat positions 0..n:
/// `PE[pos, 2k] = sin(pos / 10000^(2k/d))`, `PE[pos, 2k+1] = cos(...)`.
/// Deterministic and never trained. `d` must be even.
pub fn sinusoidal_table(n: usize, d: usize) -> Result<Array2<f64>> {
    if d == 0 || d % 2 != 0 {
        return Err(Error::config(format!(
            "positional encoding requires an even embedding dim, got {d}"
        )));
    }
    let mut out = Array2::zeros((n, d));
    for pos in 0..n {
        for k in 0..d / 2 {
            let rate = (pos as f64) / 10000f64.powf(2.0 * k as f64 / d as f64);
            out[[pos, 2 * k]] = rate.sin();
            out[[pos, 2 * k + 1]] = rate.cos();
        }
    }
    Ok(out)
}

/// Add the sinusoidal table to a token matrix (token i gets PE(i)).
pub fn add_positional(tokens: &PatchTokens) -> Result<PatchTokens> {
    let table = sinusoidal_table(tokens.count(), tokens.dim())?;
    let mut out = tokens.clone();
    out.tokens += &table;
    Ok(out)
}

/// Expand a patch-index mask to a per-element boolean mask over the
/// image-like tensor (true = element belongs to a masked patch).
pub fn element_mask(
    masked: &[usize],
    channels: usize,
    grid_rows: usize,
    grid_cols: usize,
    patch_height: usize,
    patch_width: usize,
) -> Array3<bool> {
    let mut out = Array3::from_elem(
        (channels, grid_rows * patch_height, grid_cols * patch_width),
        false,
    );
    for &p in masked {
        let (gr, gc) = (p / grid_cols, p % grid_cols);
        for c in 0..channels {
            for dh in 0..patch_height {
                for dw in 0..patch_width {
                    out[[c, gr * patch_height + dh, gc * patch_width + dw]] = true;
                }
            }
        }
    }
    out
}
