//! Masking strategies for the masked-reconstruction stage.
//!
//! Three strategies over the patch grid: unstructured (uniform random cells),
//! channel-structured (whole grid rows, i.e. subcarrier bands across every
//! timestep), and time-structured (whole grid columns, i.e. timesteps across
//! every subcarrier band). Masked-unit counts use `ceil(ratio * units)` so
//! any nonzero ratio masks at least one unit.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::embed::PatchTokens;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MaskStrategy {
    #[serde(rename = "unstructured")]
    Unstructured,
    #[serde(rename = "channel")]
    ChannelStructured,
    #[serde(rename = "time")]
    TimeStructured,
}

/// A concrete mask: the strategy and ratio that produced it plus the exact
/// sorted set of masked patch indices.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskSpec {
    pub strategy: MaskStrategy,
    pub ratio: f64,
    /// Sorted masked patch indices, each in `[0, grid_rows*grid_cols)`.
    pub masked: Vec<usize>,
    pub grid_rows: usize,
    pub grid_cols: usize,
}

impl MaskSpec {
    pub fn patch_count(&self) -> usize {
        self.grid_rows * self.grid_cols
    }

    pub fn masked_count(&self) -> usize {
        self.masked.len()
    }

    /// Sorted visible (unmasked) indices; complement of `masked`.
    pub fn visible(&self) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.patch_count() - self.masked.len());
        let mut it = self.masked.iter().peekable();
        for i in 0..self.patch_count() {
            if it.peek() == Some(&&i) {
                it.next();
            } else {
                out.push(i);
            }
        }
        out
    }
}

fn masked_units(ratio: f64, units: usize) -> usize {
    (ratio * units as f64).ceil() as usize
}

/// Draw the number of masked units for one strategy/ratio/grid combination.
pub fn expected_masked_count(
    strategy: MaskStrategy,
    ratio: f64,
    grid_rows: usize,
    grid_cols: usize,
) -> usize {
    match strategy {
        MaskStrategy::Unstructured => masked_units(ratio, grid_rows * grid_cols),
        MaskStrategy::ChannelStructured => masked_units(ratio, grid_rows) * grid_cols,
        MaskStrategy::TimeStructured => masked_units(ratio, grid_cols) * grid_rows,
    }
}

/// Sample a mask uniformly without replacement over the strategy's unit
/// (cells, rows or columns). Deterministic given the RNG state.
pub fn sample_mask(
    grid_rows: usize,
    grid_cols: usize,
    strategy: MaskStrategy,
    ratio: f64,
    rng: &mut impl Rng,
) -> Result<MaskSpec> {
    if grid_rows == 0 || grid_cols == 0 {
        return Err(Error::config("mask grid dimensions must be positive"));
    }
    if !(0.0..1.0).contains(&ratio) {
        return Err(Error::config(format!("mask ratio must lie in [0, 1), got {ratio}")));
    }
    let mut masked: Vec<usize> = match strategy {
        MaskStrategy::Unstructured => {
            let n = grid_rows * grid_cols;
            let k = masked_units(ratio, n);
            rand::seq::index::sample(rng, n, k).into_iter().collect()
        }
        MaskStrategy::ChannelStructured => {
            let k = masked_units(ratio, grid_rows);
            rand::seq::index::sample(rng, grid_rows, k)
                .into_iter()
                .flat_map(|r| (0..grid_cols).map(move |c| r * grid_cols + c))
                .collect()
        }
        MaskStrategy::TimeStructured => {
            let k = masked_units(ratio, grid_cols);
            rand::seq::index::sample(rng, grid_cols, k)
                .into_iter()
                .flat_map(|c| (0..grid_rows).map(move |r| r * grid_cols + c))
                .collect()
        }
    };
    masked.sort_unstable();
    Ok(MaskSpec { strategy, ratio, masked, grid_rows, grid_cols })
}

/// Select the visible tokens. Returns them in their original relative order
/// together with the visible and masked index sets.
pub fn apply_mask(
    tokens: &PatchTokens,
    mask: &MaskSpec,
) -> Result<(ndarray::Array2<f64>, Vec<usize>, Vec<usize>)> {
    if tokens.grid_rows != mask.grid_rows || tokens.grid_cols != mask.grid_cols {
        return Err(Error::config(format!(
            "mask grid {}x{} does not match token grid {}x{}",
            mask.grid_rows, mask.grid_cols, tokens.grid_rows, tokens.grid_cols
        )));
    }
    let visible = mask.visible();
    let mut out = ndarray::Array2::zeros((visible.len(), tokens.dim()));
    for (k, &i) in visible.iter().enumerate() {
        out.row_mut(k).assign(&tokens.tokens.row(i));
    }
    Ok((out, visible, mask.masked.clone()))
}
