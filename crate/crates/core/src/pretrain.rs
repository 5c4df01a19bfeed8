//! Masked-autoencoder pre-training: decoder-side reconstruction, the three
//! training losses and temporal-positive batch construction.
//!
//! The batch objective combines per-sample reconstruction error, one InfoNCE
//! term over the batch's single adjacent-frame positive pair, and a
//! uniformity penalty on pooled embeddings:
//! `L = mean_i(L_mask_i) + lambda_cl * L_cl + lambda_unif * L_unif`.
//! Pooled embeddings are the mean over visible latents; they are
//! L2-normalized before the uniformity term so the penalty acts on direction
//! rather than magnitude. The InfoNCE term is asymmetric: only the earlier
//! frame of the pair serves as the anchor against the batch negatives.

use ndarray::{Array1, Array2, Array3};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::DatasetMeta;
use crate::embed::{sinusoidal_table, unpatchify};
use crate::encoder::{encode_graph, register_encoder, register_layer, transformer_layer, EncoderConfig};
use crate::error::{Error, Result};
use crate::graph::{cosine, linear, layer_norm, normalize_rows, Graph, Tid};
use crate::params::{Bound, Init, ParamVec};

/// Which elements the reconstruction loss averages over.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ReconScope {
    /// Mean squared error over the full input.
    #[default]
    All,
    /// Mean squared error over masked patches only.
    MaskedOnly,
}

/// Register every parameter of the pre-training model: encoder (`enc.*`),
/// reconstruction decoder (`dec.*`) and the contrastive projection head
/// (`proj.*`).
pub fn register_pretrain(
    params: &mut ParamVec,
    cfg: &EncoderConfig,
    patch_len: usize,
    rng: &mut impl Rng,
) {
    register_encoder(params, cfg, patch_len, rng);

    let dd = cfg.decoder_d;
    params.register("dec.embed.w", &[cfg.d, dd], Init::Normal(0.02), rng);
    params.register("dec.embed.b", &[dd], Init::Zeros, rng);
    params.register("dec.mask_token", &[dd], Init::Normal(0.02), rng);
    for i in 0..cfg.decoder_depth {
        register_layer(params, &format!("dec.layer{i}"), dd, cfg.ffn_dim, rng);
    }
    params.register("dec.norm.g", &[dd], Init::Ones, rng);
    params.register("dec.norm.b", &[dd], Init::Zeros, rng);
    params.register("dec.pred.w", &[dd, patch_len], Init::Normal(0.02), rng);
    params.register("dec.pred.b", &[patch_len], Init::Zeros, rng);

    // The projection head feeds cosine logits; a wider init keeps initial
    // projections spread out so the contrastive gradient has signal.
    let proj_std = (2.0 / cfg.d as f64).sqrt();
    params.register("proj.w1", &[cfg.d, cfg.d], Init::Normal(proj_std), rng);
    params.register("proj.b1", &[cfg.d], Init::Zeros, rng);
    params.register("proj.w2", &[cfg.d, cfg.d], Init::Normal(proj_std), rng);
    params.register("proj.b2", &[cfg.d], Init::Zeros, rng);
}

fn check_partition(visible: &[usize], masked: &[usize], n: usize) -> Result<()> {
    let mut seen = vec![false; n];
    for &i in visible.iter().chain(masked) {
        if i >= n {
            return Err(Error::config(format!("patch index {i} out of range 0..{n}")));
        }
        if seen[i] {
            return Err(Error::config(format!("patch index {i} appears twice")));
        }
        seen[i] = true;
    }
    if seen.iter().any(|&s| !s) {
        return Err(Error::config(
            "visible and masked indices do not cover every patch",
        ));
    }
    Ok(())
}

/// Decoder forward on the graph: fill masked slots with the learned mask
/// token, add fixed sinusoidal decoder positions, run the decoder stack and
/// project to patch pixels. Returns an `n x patch_len` node.
pub fn reconstruct_graph(
    g: &mut Graph,
    visible_latents: Tid,
    visible_idx: &[usize],
    masked_idx: &[usize],
    n: usize,
    cfg: &EncoderConfig,
    bound: &Bound,
) -> Tid {
    let emb = linear(g, visible_latents, bound.get("dec.embed.w"), Some(bound.get("dec.embed.b")));
    let mut full = g.scatter_rows(emb, visible_idx, n);
    if !masked_idx.is_empty() {
        let tok = g.repeat_row(bound.get("dec.mask_token"), masked_idx.len());
        let placed = g.scatter_rows(tok, masked_idx, n);
        full = g.add(full, placed);
    }
    let pe = sinusoidal_table(n, cfg.decoder_d).expect("decoder_d validated even");
    let pe_in = g.input2(pe);
    let mut x = g.add(full, pe_in);
    for i in 0..cfg.decoder_depth {
        x = transformer_layer(g, x, &format!("dec.layer{i}"), bound, cfg.heads);
    }
    let normed = layer_norm(g, x, bound.get("dec.norm.g"), bound.get("dec.norm.b"));
    linear(g, normed, bound.get("dec.pred.w"), Some(bound.get("dec.pred.b")))
}

/// Reconstruct the full image-like tensor from encoded visible latents.
#[allow(clippy::too_many_arguments)]
pub fn decode_reconstruct(
    latents: &Array2<f64>,
    visible_idx: &[usize],
    masked_idx: &[usize],
    channels: usize,
    grid_rows: usize,
    grid_cols: usize,
    cfg: &EncoderConfig,
    params: &ParamVec,
) -> Result<Array3<f64>> {
    let n = grid_rows * grid_cols;
    check_partition(visible_idx, masked_idx, n)?;
    if latents.nrows() != visible_idx.len() {
        return Err(Error::config(format!(
            "{} latents but {} visible indices",
            latents.nrows(),
            visible_idx.len()
        )));
    }
    let mut g = Graph::new();
    let bound = params.bind(&mut g);
    let lat = g.input2(latents.clone());
    let patches = reconstruct_graph(&mut g, lat, visible_idx, masked_idx, n, cfg, &bound);
    let patches = g
        .value(patches)
        .view()
        .into_dimensionality::<ndarray::Ix2>()
        .expect("patch output is 2-d")
        .to_owned();
    unpatchify(&patches, channels, grid_rows, grid_cols, cfg.patch_height, cfg.patch_width)
}

/// Mean squared error between a reconstruction and the original, over all
/// elements or over masked patches only (given the per-element mask).
pub fn loss_mask(
    x_rec: &Array3<f64>,
    x_orig: &Array3<f64>,
    scope: ReconScope,
    masked_elements: Option<&Array3<bool>>,
) -> Result<f64> {
    if x_rec.shape() != x_orig.shape() {
        return Err(Error::config(format!(
            "reconstruction shape {:?} does not match original {:?}",
            x_rec.shape(),
            x_orig.shape()
        )));
    }
    match scope {
        ReconScope::All => {
            let n = x_rec.len() as f64;
            Ok(x_rec
                .iter()
                .zip(x_orig.iter())
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                / n)
        }
        ReconScope::MaskedOnly => {
            let mask = masked_elements.ok_or_else(|| {
                Error::config("masked_only scope requires the per-element mask")
            })?;
            if mask.shape() != x_rec.shape() {
                return Err(Error::config("element mask shape mismatch"));
            }
            let mut acc = 0.0;
            let mut count = 0usize;
            for ((a, b), &m) in x_rec.iter().zip(x_orig.iter()).zip(mask.iter()) {
                if m {
                    acc += (a - b) * (a - b);
                    count += 1;
                }
            }
            if count == 0 {
                return Err(Error::config("masked_only scope with an empty mask"));
            }
            Ok(acc / count as f64)
        }
    }
}

/// Mean over visible latents followed by the two-layer projection head.
/// Returns (pooled embedding `e`, projected vector).
pub fn pool_project(latents: &Array2<f64>, params: &ParamVec) -> Result<(Array1<f64>, Array1<f64>)> {
    if latents.nrows() == 0 {
        return Err(Error::config("pooling requires at least one visible latent"));
    }
    let mut g = Graph::new();
    let bound = params.bind(&mut g);
    let lat = g.input2(latents.clone());
    let pooled = g.mean_axis(lat, 0);
    let stacked = g.reshape(pooled, &[1, latents.ncols()]);
    let projected = project_rows_graph(&mut g, stacked, &bound);
    let e = g
        .value(pooled)
        .iter()
        .copied()
        .collect::<Array1<f64>>();
    let z = g.value(projected).iter().copied().collect::<Array1<f64>>();
    Ok((e, z))
}

/// Projection head applied to stacked pooled embeddings (one row each).
pub fn project_rows_graph(g: &mut Graph, rows: Tid, bound: &Bound) -> Tid {
    let h = linear(g, rows, bound.get("proj.w1"), Some(bound.get("proj.b1")));
    let ha = g.relu(h);
    linear(g, ha, bound.get("proj.w2"), Some(bound.get("proj.b2")))
}

fn cosine_f64(a: &Array1<f64>, b: &Array1<f64>) -> Result<f64> {
    let (na, nb) = (a.dot(a).sqrt(), b.dot(b).sqrt());
    if na == 0.0 || nb == 0.0 {
        return Err(Error::numeric("cosine similarity undefined for a zero-norm vector"));
    }
    Ok(a.dot(b) / (na * nb))
}

/// Temporal InfoNCE over one positive pair and the batch negatives, with
/// cosine similarity logits at temperature `tau`. Anchored on `s_t` only.
pub fn loss_infonce(
    s_t: &Array1<f64>,
    s_next: &Array1<f64>,
    negatives: &[Array1<f64>],
    tau: f64,
) -> Result<f64> {
    if tau <= 0.0 {
        return Err(Error::config(format!("temperature must be positive, got {tau}")));
    }
    if negatives.is_empty() {
        return Err(Error::config("InfoNCE needs at least one negative (batch size >= 3)"));
    }
    let pos = cosine_f64(s_t, s_next)?;
    let mut denom = (pos / tau).exp();
    for v in negatives {
        denom += (cosine_f64(s_t, v)? / tau).exp();
    }
    Ok(denom.ln() - pos / tau)
}

/// Uniformity penalty: batch mean over anchors of
/// `(1/B) * sum_{j != i} (e_i . e_j)^2`. Inputs are expected to be
/// L2-normalized rows; the penalty is scale-sensitive by design.
pub fn loss_uniformity(embeddings: &Array2<f64>) -> Result<f64> {
    let b = embeddings.nrows();
    if b < 2 {
        return Err(Error::config("uniformity needs a batch of at least 2 embeddings"));
    }
    let gram = embeddings.dot(&embeddings.t());
    let mut acc = 0.0;
    for i in 0..b {
        for j in 0..b {
            if i != j {
                acc += gram[[i, j]] * gram[[i, j]];
            }
        }
    }
    Ok(acc / (b * b) as f64)
}

/// Weighted sum of the three pre-training losses. Zero weights skip their
/// term entirely, so `lambda_cl = lambda_unif = 0` reproduces `l_mask`
/// bit-exactly.
pub fn loss_total(
    l_mask: f64,
    l_cl: f64,
    l_unif: f64,
    lambda_cl: f64,
    lambda_unif: f64,
) -> Result<f64> {
    if lambda_cl < 0.0 || lambda_unif < 0.0 {
        return Err(Error::config("loss weights must be non-negative"));
    }
    let mut total = l_mask;
    if lambda_cl != 0.0 {
        total += lambda_cl * l_cl;
    }
    if lambda_unif != 0.0 {
        total += lambda_unif * l_unif;
    }
    Ok(total)
}

/// A sampled pre-training batch: `indices[0]` and `indices[1]` are the
/// adjacent positive pair (anchor first), the rest are negatives.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ContrastiveBatch {
    /// Global sample indices, length B.
    pub indices: Vec<usize>,
    /// Position of the anchor frame `s_t` within `indices`.
    pub anchor: usize,
    /// Position of the adjacent frame `s_{t+1}` within `indices`.
    pub positive: usize,
}

impl ContrastiveBatch {
    pub fn negatives(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.indices.len()).filter(move |&k| k != self.anchor && k != self.positive)
    }
}

/// Sample a batch: one adjacent pair uniform over all adjacent pairs, plus
/// `b - 2` distinct samples from the remaining positions. Deterministic
/// given the RNG state.
pub fn make_contrastive_batch(
    meta: &DatasetMeta,
    b: usize,
    rng: &mut impl Rng,
) -> Result<ContrastiveBatch> {
    if b < 3 {
        return Err(Error::config(format!("batch size must be >= 3, got {b}")));
    }
    let n = meta.num_samples;
    let total_pairs: usize = meta
        .sequences
        .iter()
        .map(|s| s.len.saturating_sub(1))
        .sum();
    if total_pairs == 0 {
        return Err(Error::data(
            "contrastive batch needs at least one sequence of length >= 2",
        ));
    }
    if n < b {
        return Err(Error::data(format!(
            "contrastive batch needs {} samples beyond the pair, dataset has {}",
            b - 2,
            n.saturating_sub(2)
        )));
    }

    let mut pick = rng.random_range(0..total_pairs);
    let mut base = 0;
    let mut pair_start = 0;
    for span in &meta.sequences {
        let pairs_here = span.len.saturating_sub(1);
        if pick < pairs_here {
            pair_start = base + pick;
            break;
        }
        pick -= pairs_here;
        base += span.len;
    }
    let (p0, p1) = (pair_start, pair_start + 1);

    // Draw negatives from 0..n-2 and shift around the excluded pair.
    let mut indices = vec![p0, p1];
    for raw in rand::seq::index::sample(rng, n - 2, b - 2) {
        let mut idx = raw;
        if idx >= p0 {
            idx += 1;
        }
        if idx >= p1 {
            idx += 1;
        }
        indices.push(idx);
    }
    Ok(ContrastiveBatch { indices, anchor: 0, positive: 1 })
}

/// Graph node set of the combined batch objective.
pub struct BatchLoss {
    pub total: Tid,
    pub l_mask: Tid,
    pub l_cl: Option<Tid>,
    pub l_unif: Option<Tid>,
}

/// Build the full pre-training objective over one batch.
///
/// `raw_patches[k]` is the n x patch_len matrix of batch slot `k` (slot 0 is
/// the anchor, slot 1 its adjacent positive). Each slot gets its own mask
/// (visible/masked index pair).
#[allow(clippy::too_many_arguments)]
pub fn pretrain_batch_graph(
    g: &mut Graph,
    bound: &Bound,
    cfg: &EncoderConfig,
    raw_patches: &[Array2<f64>],
    masks: &[(Vec<usize>, Vec<usize>)],
    scope: ReconScope,
    tau: f64,
    lambda_cl: f64,
    lambda_unif: f64,
) -> BatchLoss {
    let b = raw_patches.len();
    assert!(b >= 3, "batch must hold the pair plus at least one negative");
    assert_eq!(masks.len(), b);
    let n = raw_patches[0].nrows();
    let pe = sinusoidal_table(n, cfg.d).expect("d validated even");

    let mut recon_losses = Vec::with_capacity(b);
    let mut pooled = Vec::with_capacity(b);
    for (sample, (visible_idx, masked_idx)) in raw_patches.iter().zip(masks) {
        let raw = g.input2(sample.clone());
        let tokens = linear(g, raw, bound.get("enc.patch.w"), Some(bound.get("enc.patch.b")));
        let pe_in = g.input2(pe.clone());
        let with_pos = g.add(tokens, pe_in);
        let visible = g.gather_rows(with_pos, visible_idx);
        let latents = encode_graph(g, visible, cfg, bound);

        let rec = reconstruct_graph(g, latents, visible_idx, masked_idx, n, cfg, bound);
        let diff = g.sub(rec, raw);
        let sq = g.square(diff);
        let l_rec = match scope {
            ReconScope::All => g.mean_all(sq),
            ReconScope::MaskedOnly => {
                assert!(!masked_idx.is_empty(), "masked_only scope with empty mask");
                let rows = g.gather_rows(sq, masked_idx);
                g.mean_all(rows)
            }
        };
        recon_losses.push(l_rec);
        pooled.push(g.mean_axis(latents, 0));
    }

    let mut mask_sum = recon_losses[0];
    for &l in &recon_losses[1..] {
        mask_sum = g.add(mask_sum, l);
    }
    let l_mask = g.scale(mask_sum, 1.0 / b as f64);
    let mut total = l_mask;

    let mut l_cl = None;
    if lambda_cl != 0.0 {
        let stacked = g.stack_rows(&pooled);
        let projected = project_rows_graph(g, stacked, bound);
        let anchor = g.gather_rows(projected, &[0]);
        let positive = g.gather_rows(projected, &[1]);
        let rho_pos = cosine(g, anchor, positive);
        let pos_logit = g.scale(rho_pos, 1.0 / tau);
        let mut denom = g.exp(pos_logit);
        for k in 2..b {
            let neg = g.gather_rows(projected, &[k]);
            let rho = cosine(g, anchor, neg);
            let logit = g.scale(rho, 1.0 / tau);
            let e = g.exp(logit);
            denom = g.add(denom, e);
        }
        let log_denom = g.ln(denom);
        let loss = g.sub(log_denom, pos_logit);
        total = {
            let weighted = g.scale(loss, lambda_cl);
            g.add(total, weighted)
        };
        l_cl = Some(loss);
    }

    let mut l_unif = None;
    if lambda_unif != 0.0 {
        let stacked = g.stack_rows(&pooled);
        let normed = normalize_rows(g, stacked);
        let gram_t = g.transpose(normed);
        let gram = g.matmul(normed, gram_t);
        let mut off = Array2::from_elem((b, b), 1.0);
        for i in 0..b {
            off[[i, i]] = 0.0;
        }
        let off_in = g.input2(off);
        let off_gram = g.mul(gram, off_in);
        let sq = g.square(off_gram);
        let s = g.sum_all(sq);
        let loss = g.scale(s, 1.0 / (b * b) as f64);
        total = {
            let weighted = g.scale(loss, lambda_unif);
            g.add(total, weighted)
        };
        l_unif = Some(loss);
    }

    BatchLoss { total, l_mask, l_cl, l_unif }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{CsiDims, SequenceSpan};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn toy_cfg() -> EncoderConfig {
        EncoderConfig {
            d: 16,
            heads: 2,
            ffn_dim: 24,
            depth: 2,
            decoder_depth: 1,
            decoder_d: 16,
            patch_height: 2,
            patch_width: 2,
        }
    }

    fn toy_params(cfg: &EncoderConfig, patch_len: usize, seed: u64) -> ParamVec {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = ParamVec::new();
        register_pretrain(&mut p, cfg, patch_len, &mut rng);
        p
    }

    fn toy_meta(lens: &[usize]) -> DatasetMeta {
        let sequences: Vec<SequenceSpan> = lens
            .iter()
            .enumerate()
            .map(|(i, &len)| SequenceSpan { id: i as u64, len })
            .collect();
        DatasetMeta {
            csi_dims: CsiDims::new(1, 1, 1, 4, 4).unwrap(),
            persons: 1,
            joints: 1,
            coords: 2,
            skeleton_id: "none".into(),
            joint_names: vec!["j".into()],
            sequences,
            num_samples: lens.iter().sum(),
            sequence_classes: None,
        }
    }

    fn unit(v: &[f64]) -> Array1<f64> {
        let a = Array1::from_vec(v.to_vec());
        let n = a.dot(&a).sqrt();
        a / n
    }

    #[test]
    fn reconstruction_has_input_shape() {
        let cfg = toy_cfg();
        let (channels, grid) = (2usize, (3usize, 2usize));
        let patch_len = channels * cfg.patch_height * cfg.patch_width;
        let params = toy_params(&cfg, patch_len, 1);
        let visible = vec![0, 2, 5];
        let masked = vec![1, 3, 4];
        let latents = Array2::from_shape_fn((3, cfg.d), |(i, j)| ((i + j) as f64 * 0.2).sin());
        let img = decode_reconstruct(&latents, &visible, &masked, channels, grid.0, grid.1, &cfg, &params)
            .unwrap();
        assert_eq!(
            img.shape(),
            &[channels, grid.0 * cfg.patch_height, grid.1 * cfg.patch_width]
        );
    }

    #[test]
    fn zero_prediction_weights_tile_the_bias() {
        let cfg = toy_cfg();
        let channels = 1;
        let patch_len = channels * cfg.patch_height * cfg.patch_width;
        let mut params = toy_params(&cfg, patch_len, 2);
        params.set("dec.pred.w", &ndarray::ArrayD::zeros(ndarray::IxDyn(&[cfg.decoder_d, patch_len]))).unwrap();
        let bias = ndarray::ArrayD::from_shape_vec(ndarray::IxDyn(&[patch_len]), vec![1.0, -2.0, 3.0, 0.5]).unwrap();
        params.set("dec.pred.b", &bias).unwrap();

        let latents = Array2::from_shape_fn((2, cfg.d), |(i, j)| (i + j) as f64 * 0.1);
        let img = decode_reconstruct(&latents, &[0, 3], &[1, 2], channels, 2, 2, &cfg, &params).unwrap();
        // Every patch must equal the bias vector in patch-pixel order.
        for gr in 0..2 {
            for gc in 0..2 {
                let mut k = 0;
                for dh in 0..cfg.patch_height {
                    for dw in 0..cfg.patch_width {
                        let v = img[[0, gr * cfg.patch_height + dh, gc * cfg.patch_width + dw]];
                        assert!((v - bias.as_slice().unwrap()[k]).abs() < 1e-12);
                        k += 1;
                    }
                }
            }
        }
    }

    #[test]
    fn inconsistent_indices_rejected() {
        let cfg = toy_cfg();
        let params = toy_params(&cfg, 4, 3);
        let latents = Array2::zeros((2, cfg.d));
        // Overlapping and incomplete partitions of 0..4.
        assert!(decode_reconstruct(&latents, &[0, 1], &[1, 2], 1, 2, 2, &cfg, &params).is_err());
        assert!(decode_reconstruct(&latents, &[0, 1], &[2], 1, 2, 2, &cfg, &params).is_err());
    }

    #[test]
    fn loss_mask_identity_offset_and_oracle() {
        let a = Array3::from_shape_fn((2, 3, 4), |(c, i, j)| (c + i + j) as f64 * 0.3);
        assert_eq!(loss_mask(&a, &a, ReconScope::All, None).unwrap(), 0.0);

        let b = &a + 2.5;
        let l = loss_mask(&b, &a, ReconScope::All, None).unwrap();
        assert!((l - 6.25).abs() < 1e-12);

        // Brute-force double-loop oracle on a random pair.
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x = Array3::from_shape_fn((2, 3, 4), |_| rng.random_range(-1.0..1.0));
        let y = Array3::from_shape_fn((2, 3, 4), |_| rng.random_range(-1.0..1.0));
        let mut acc = 0.0;
        for c in 0..2 {
            for i in 0..3 {
                for j in 0..4 {
                    let d: f64 = x[[c, i, j]] - y[[c, i, j]];
                    acc += d * d;
                }
            }
        }
        let oracle = acc / 24.0;
        let got = loss_mask(&x, &y, ReconScope::All, None).unwrap();
        assert!((got - oracle).abs() <= 1e-9 * oracle.abs().max(1.0));
    }

    #[test]
    fn loss_mask_masked_scope() {
        let a = Array3::zeros((1, 2, 2));
        let mut b = a.clone();
        b[[0, 0, 0]] = 2.0;
        let mut mask = Array3::from_elem((1, 2, 2), false);
        mask[[0, 0, 0]] = true;
        mask[[0, 0, 1]] = true;
        let l = loss_mask(&b, &a, ReconScope::MaskedOnly, Some(&mask)).unwrap();
        assert!((l - 2.0).abs() < 1e-12); // (4 + 0) / 2
        assert!(loss_mask(&b, &a, ReconScope::MaskedOnly, None).is_err());
    }

    #[test]
    fn pool_project_mean_contract() {
        let cfg = toy_cfg();
        let params = toy_params(&cfg, 4, 5);

        let single = Array2::from_shape_fn((1, cfg.d), |(_, j)| j as f64 * 0.25);
        let (e, _) = pool_project(&single, &params).unwrap();
        for j in 0..cfg.d {
            assert_eq!(e[j], single[[0, j]]);
        }

        let mut equal = Array2::zeros((5, cfg.d));
        for mut row in equal.rows_mut() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = (j as f64 * 0.3).sin();
            }
        }
        let (e, _) = pool_project(&equal, &params).unwrap();
        for j in 0..cfg.d {
            assert!((e[j] - equal[[0, j]]).abs() < 1e-12);
        }

        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let random = Array2::from_shape_fn((7, cfg.d), |_| rng.random_range(-1.0..1.0));
        let (e, _) = pool_project(&random, &params).unwrap();
        for j in 0..cfg.d {
            let mean: f64 = (0..7).map(|i| random[[i, j]]).sum::<f64>() / 7.0;
            assert!((e[j] - mean).abs() <= 1e-9);
        }
    }

    #[test]
    fn infonce_uniform_logits_yield_log_b_minus_1() {
        for b in [3usize, 8, 32] {
            for tau in [0.07, 0.1, 1.0] {
                let v = unit(&[0.4, -0.3, 0.9, 0.2]);
                let negs = vec![v.clone(); b - 2];
                let l = loss_infonce(&v, &v, &negs, tau).unwrap();
                assert!(
                    (l - ((b - 1) as f64).ln()).abs() < 1e-9,
                    "b={b} tau={tau}: {l}"
                );
            }
        }
    }

    #[test]
    fn infonce_closed_form_single_negative() {
        let s = unit(&[1.0, 0.0]);
        let neg = unit(&[-1.0, 0.0]);
        let l = loss_infonce(&s, &s, &[neg], 1.0).unwrap();
        let expect = (1.0 + (-2.0f64).exp()).ln();
        assert!((l - expect).abs() < 1e-9);
        assert!((l - 0.126928).abs() < 1e-6);
    }

    #[test]
    fn infonce_decreases_as_positive_similarity_grows() {
        let anchor = unit(&[1.0, 0.0, 0.0]);
        let negs = vec![unit(&[0.0, 1.0, 0.0]), unit(&[0.3, -0.5, 0.8])];
        let mut prev = f64::INFINITY;
        for t in 0..20 {
            // Positive rotates toward the anchor: cosine rises monotonically.
            let angle = 1.5 - t as f64 * 0.07;
            let pos = unit(&[angle.cos(), angle.sin(), 0.0]);
            let l = loss_infonce(&anchor, &pos, &negs, 0.5).unwrap();
            assert!(l < prev, "loss must strictly decrease: {l} vs {prev}");
            prev = l;
        }
    }

    #[test]
    fn infonce_rejects_bad_inputs() {
        let v = unit(&[1.0, 1.0]);
        let zero = Array1::zeros(2);
        assert!(loss_infonce(&v, &v, &[v.clone()], 0.0).is_err());
        assert!(loss_infonce(&v, &v, &[], 0.1).is_err());
        assert!(loss_infonce(&v, &zero, &[v.clone()], 0.1).is_err());
    }

    #[test]
    fn infonce_bounds_hold_on_random_inputs() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..200 {
            let b = rng.random_range(3..12);
            let tau = rng.random_range(0.05..2.0);
            let dim = 6;
            let draw = |rng: &mut ChaCha8Rng| {
                let v: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
                unit(&v)
            };
            let s_t = draw(&mut rng);
            let s_n = draw(&mut rng);
            let negs: Vec<Array1<f64>> = (0..b - 2).map(|_| draw(&mut rng)).collect();
            let l = loss_infonce(&s_t, &s_n, &negs, tau).unwrap();
            assert!(l > 0.0);
            assert!(l < ((b - 1) as f64).ln() + 2.0 / tau);
        }
    }

    #[test]
    fn uniformity_orthogonal_zero_identical_three_quarters() {
        let eye = Array2::eye(4);
        assert!(loss_uniformity(&eye).unwrap().abs() < 1e-15);

        let mut same = Array2::zeros((4, 3));
        for mut row in same.rows_mut() {
            row.assign(&unit(&[1.0, 2.0, -1.0]));
        }
        let l = loss_uniformity(&same).unwrap();
        assert!((l - 0.75).abs() < 1e-12);
    }

    #[test]
    fn uniformity_matches_double_loop_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let e = {
            let mut m = Array2::from_shape_fn((6, 5), |_| rng.random_range(-1.0..1.0));
            for mut row in m.rows_mut() {
                let n: f64 = row.iter().map(|x| x * x).sum::<f64>().sqrt();
                row.mapv_inplace(|x| x / n);
            }
            m
        };
        let mut oracle = 0.0;
        for i in 0..6 {
            let mut anchor_term = 0.0;
            for j in 0..6 {
                if i != j {
                    let dot: f64 = (0..5).map(|k| e[[i, k]] * e[[j, k]]).sum();
                    anchor_term += dot * dot;
                }
            }
            oracle += anchor_term / 6.0;
        }
        oracle /= 6.0;
        let got = loss_uniformity(&e).unwrap();
        assert!((got - oracle).abs() <= 1e-9);
        assert!(got >= 0.0);
    }

    #[test]
    fn total_reduces_bit_exactly_and_weighs_terms() {
        let l = loss_total(0.937_251, 2.0, 3.0, 0.0, 0.0).unwrap();
        assert_eq!(l.to_bits(), 0.937_251f64.to_bits());
        let l = loss_total(1.0, 2.0, 3.0, 0.5, 0.1).unwrap();
        assert!((l - 2.3).abs() < 1e-12);
        assert!(loss_total(1.0, 1.0, 1.0, -0.5, 0.0).is_err());
    }

    #[test]
    fn contrastive_batch_forced_selection() {
        // One 2-frame sequence plus one extra sample at B = 3: the batch is
        // fully determined.
        let meta = toy_meta(&[2, 1]);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let batch = make_contrastive_batch(&meta, 3, &mut rng).unwrap();
        assert_eq!(batch.indices, vec![0, 1, 2]);
        assert_eq!((batch.anchor, batch.positive), (0, 1));
    }

    #[test]
    fn contrastive_pairs_are_adjacent_same_sequence() {
        let meta = toy_meta(&[5, 3, 7, 2]);
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        for _ in 0..1000 {
            let batch = make_contrastive_batch(&meta, 6, &mut rng).unwrap();
            let (a, p) = (batch.indices[batch.anchor], batch.indices[batch.positive]);
            let (seq_a, frame_a) = meta.locate(a).unwrap();
            let (seq_p, frame_p) = meta.locate(p).unwrap();
            assert_eq!(seq_a, seq_p);
            assert_eq!(frame_p, frame_a + 1);
            // Negatives exclude the pair and are distinct.
            let negs: Vec<usize> = batch.negatives().map(|k| batch.indices[k]).collect();
            assert_eq!(negs.len(), 4);
            let mut uniq = negs.clone();
            uniq.sort_unstable();
            uniq.dedup();
            assert_eq!(uniq.len(), 4);
            assert!(!negs.contains(&a) && !negs.contains(&p));
        }
    }

    #[test]
    fn contrastive_batch_deterministic_given_seed() {
        let meta = toy_meta(&[5, 3, 7, 2]);
        let draw = || {
            let mut rng = ChaCha8Rng::seed_from_u64(11);
            make_contrastive_batch(&meta, 8, &mut rng).unwrap()
        };
        assert_eq!(draw(), draw());
    }

    #[test]
    fn contrastive_batch_errors_name_the_precondition() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let err = make_contrastive_batch(&toy_meta(&[1, 1, 1]), 3, &mut rng)
            .unwrap_err()
            .to_string();
        assert!(err.contains("length >= 2"), "got: {err}");
        let err = make_contrastive_batch(&toy_meta(&[2]), 3, &mut rng)
            .unwrap_err()
            .to_string();
        assert!(err.contains("beyond the pair"), "got: {err}");
        assert!(make_contrastive_batch(&toy_meta(&[4]), 2, &mut rng).is_err());
    }

    #[test]
    fn graph_losses_match_array_losses() {
        // The training-path graph builders must agree with the public ops.
        let cfg = toy_cfg();
        let patch_len = 1 * cfg.patch_height * cfg.patch_width;
        let params = toy_params(&cfg, patch_len, 13);
        let mut rng = ChaCha8Rng::seed_from_u64(14);

        let b = 4;
        let n = 4; // 2x2 grid of 2x2 patches over a 4x4 image
        let raws: Vec<Array2<f64>> = (0..b)
            .map(|_| Array2::from_shape_fn((n, patch_len), |_| rng.random_range(-1.0..1.0)))
            .collect();
        let masks: Vec<(Vec<usize>, Vec<usize>)> =
            (0..b).map(|_| (vec![0, 3], vec![1, 2])).collect();

        let mut g = Graph::new();
        let bound = params.bind(&mut g);
        let out = pretrain_batch_graph(
            &mut g, &bound, &cfg, &raws, &masks, ReconScope::All, 0.1, 1.0, 0.5,
        );

        // Recompute through the public array path.
        let pe = sinusoidal_table(n, cfg.d).unwrap();
        let mut mask_losses = Vec::new();
        let mut pooled_rows = Array2::zeros((b, cfg.d));
        let mut projected: Vec<Array1<f64>> = Vec::new();
        for (k, raw) in raws.iter().enumerate() {
            let tokens = raw.dot(&params.array("enc.patch.w").unwrap().into_dimensionality::<ndarray::Ix2>().unwrap())
                + &params.array("enc.patch.b").unwrap().into_dimensionality::<ndarray::Ix1>().unwrap()
                + &pe;
            let mut vis = Array2::zeros((2, cfg.d));
            for (i, &idx) in masks[k].0.iter().enumerate() {
                vis.row_mut(i).assign(&tokens.row(idx));
            }
            let latents = crate::encoder::encode(&vis, &cfg, &params).unwrap();
            let img = decode_reconstruct(&latents, &masks[k].0, &masks[k].1, 1, 2, 2, &cfg, &params).unwrap();
            let orig = unpatchify(raw, 1, 2, 2, cfg.patch_height, cfg.patch_width).unwrap();
            mask_losses.push(loss_mask(&img, &orig, ReconScope::All, None).unwrap());
            let (e, z) = pool_project(&latents, &params).unwrap();
            pooled_rows.row_mut(k).assign(&e);
            projected.push(z);
        }
        let l_mask_expect: f64 = mask_losses.iter().sum::<f64>() / b as f64;
        assert!((g.scalar(out.l_mask) - l_mask_expect).abs() < 1e-9);

        let negs: Vec<Array1<f64>> = projected[2..].to_vec();
        let l_cl_expect = loss_infonce(&projected[0], &projected[1], &negs, 0.1).unwrap();
        assert!((g.scalar(out.l_cl.unwrap()) - l_cl_expect).abs() < 1e-9);

        let mut normed = pooled_rows.clone();
        for mut row in normed.rows_mut() {
            let nrm: f64 = row.iter().map(|x| x * x).sum::<f64>().sqrt();
            row.mapv_inplace(|x| x / nrm);
        }
        let l_unif_expect = loss_uniformity(&normed).unwrap();
        assert!((g.scalar(out.l_unif.unwrap()) - l_unif_expect).abs() < 1e-9);

        let total_expect =
            loss_total(l_mask_expect, l_cl_expect, l_unif_expect, 1.0, 0.5).unwrap();
        assert!((g.scalar(out.total) - total_expect).abs() < 1e-9);
    }

    #[test]
    fn batch_graph_zero_weights_reduce_to_mask_loss() {
        let cfg = toy_cfg();
        let patch_len = cfg.patch_height * cfg.patch_width;
        let params = toy_params(&cfg, patch_len, 15);
        let mut rng = ChaCha8Rng::seed_from_u64(16);
        let raws: Vec<Array2<f64>> = (0..3)
            .map(|_| Array2::from_shape_fn((4, patch_len), |_| rng.random_range(-1.0..1.0)))
            .collect();
        let masks: Vec<(Vec<usize>, Vec<usize>)> =
            (0..3).map(|_| (vec![1, 2], vec![0, 3])).collect();
        let mut g = Graph::new();
        let bound = params.bind(&mut g);
        let out = pretrain_batch_graph(
            &mut g, &bound, &cfg, &raws, &masks, ReconScope::All, 0.1, 0.0, 0.0,
        );
        assert!(out.l_cl.is_none() && out.l_unif.is_none());
        assert_eq!(g.scalar(out.total).to_bits(), g.scalar(out.l_mask).to_bits());
    }
}
