//! Pre-norm transformer encoder used by both training phases.
//!
//! Layers follow the standard pre-norm residual layout: multi-head
//! self-attention over layer-normalized tokens, then a two-layer rectifier
//! FFN, each wrapped in a residual connection, with a final layer norm after
//! the stack. No positional information is injected inside the stack, so the
//! encoder is permutation-equivariant over its input tokens — positions come
//! from the sinusoidal table added before masking.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{layer_norm, linear, Graph, Tid};
use crate::params::{Bound, Init, ParamVec};

fn default_depth() -> usize {
    4
}
fn default_decoder_depth() -> usize {
    2
}
fn default_dim() -> usize {
    32
}
fn default_heads() -> usize {
    4
}
fn default_ffn() -> usize {
    64
}
fn default_patch() -> usize {
    4
}

/// Architecture of the masked-autoencoder encoder/decoder pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EncoderConfig {
    /// Token embedding dimension.
    pub d: usize,
    pub heads: usize,
    pub ffn_dim: usize,
    /// Encoder transformer layers.
    pub depth: usize,
    /// Decoder transformer layers.
    pub decoder_depth: usize,
    /// Decoder token dimension.
    pub decoder_d: usize,
    pub patch_height: usize,
    pub patch_width: usize,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        EncoderConfig {
            d: default_dim(),
            heads: default_heads(),
            ffn_dim: default_ffn(),
            depth: default_depth(),
            decoder_depth: default_decoder_depth(),
            decoder_d: default_dim(),
            patch_height: default_patch(),
            patch_width: default_patch(),
        }
    }
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("model.d", self.d),
            ("model.heads", self.heads),
            ("model.ffn_dim", self.ffn_dim),
            ("model.depth", self.depth),
            ("model.decoder_depth", self.decoder_depth),
            ("model.decoder_d", self.decoder_d),
            ("model.patch_height", self.patch_height),
            ("model.patch_width", self.patch_width),
        ] {
            if v == 0 {
                return Err(Error::config(format!("{name} must be positive")));
            }
        }
        if self.d % 2 != 0 {
            return Err(Error::config(format!(
                "model.d must be even for sinusoidal positions, got {}",
                self.d
            )));
        }
        if self.decoder_d % 2 != 0 {
            return Err(Error::config(format!(
                "model.decoder_d must be even for sinusoidal positions, got {}",
                self.decoder_d
            )));
        }
        if self.d % self.heads != 0 {
            return Err(Error::config(format!(
                "model.d = {} must be divisible by model.heads = {}",
                self.d, self.heads
            )));
        }
        if self.decoder_d % self.heads != 0 {
            return Err(Error::config(format!(
                "model.decoder_d = {} must be divisible by model.heads = {}",
                self.decoder_d, self.heads
            )));
        }
        Ok(())
    }
}

/// Register one transformer layer's parameters under `prefix`.
pub fn register_layer(
    params: &mut ParamVec,
    prefix: &str,
    d: usize,
    ffn_dim: usize,
    rng: &mut impl rand::Rng,
) {
    let w = Init::Normal(0.02);
    params.register(&format!("{prefix}.ln1.g"), &[d], Init::Ones, rng);
    params.register(&format!("{prefix}.ln1.b"), &[d], Init::Zeros, rng);
    for name in ["wq", "wk", "wv", "wo"] {
        params.register(&format!("{prefix}.attn.{name}"), &[d, d], w, rng);
    }
    for name in ["bq", "bk", "bv", "bo"] {
        params.register(&format!("{prefix}.attn.{name}"), &[d], Init::Zeros, rng);
    }
    params.register(&format!("{prefix}.ln2.g"), &[d], Init::Ones, rng);
    params.register(&format!("{prefix}.ln2.b"), &[d], Init::Zeros, rng);
    params.register(&format!("{prefix}.ffn.w1"), &[d, ffn_dim], w, rng);
    params.register(&format!("{prefix}.ffn.b1"), &[ffn_dim], Init::Zeros, rng);
    params.register(&format!("{prefix}.ffn.w2"), &[ffn_dim, d], w, rng);
    params.register(&format!("{prefix}.ffn.b2"), &[d], Init::Zeros, rng);
}

/// Register every encoder-side parameter (`enc.*`): the patch embedding,
/// `depth` transformer layers and the final norm.
pub fn register_encoder(
    params: &mut ParamVec,
    cfg: &EncoderConfig,
    patch_len: usize,
    rng: &mut impl rand::Rng,
) {
    params.register("enc.patch.w", &[patch_len, cfg.d], Init::Normal(0.02), rng);
    params.register("enc.patch.b", &[cfg.d], Init::Zeros, rng);
    for i in 0..cfg.depth {
        register_layer(params, &format!("enc.layer{i}"), cfg.d, cfg.ffn_dim, rng);
    }
    params.register("enc.norm.g", &[cfg.d], Init::Ones, rng);
    params.register("enc.norm.b", &[cfg.d], Init::Zeros, rng);
}

/// Multi-head self-attention over pre-normalized tokens.
fn self_attention(g: &mut Graph, x: Tid, prefix: &str, bound: &Bound, heads: usize) -> Tid {
    let d = g.value(x).shape()[1];
    assert_eq!(d % heads, 0, "token dim not divisible by head count");
    let dh = d / heads;

    let q = linear(g, x, bound.get(&format!("{prefix}.attn.wq")), Some(bound.get(&format!("{prefix}.attn.bq"))));
    let k = linear(g, x, bound.get(&format!("{prefix}.attn.wk")), Some(bound.get(&format!("{prefix}.attn.bk"))));
    let v = linear(g, x, bound.get(&format!("{prefix}.attn.wv")), Some(bound.get(&format!("{prefix}.attn.bv"))));

    let mut merged: Option<Tid> = None;
    for h in 0..heads {
        let cols: Vec<usize> = (h * dh..(h + 1) * dh).collect();
        let qh = g.gather_cols(q, &cols);
        let kh = g.gather_cols(k, &cols);
        let vh = g.gather_cols(v, &cols);
        let kt = g.transpose(kh);
        let logits = g.matmul(qh, kt);
        let scaled = g.scale(logits, 1.0 / (dh as f64).sqrt());
        let attn = g.softmax_rows(scaled);
        let oh = g.matmul(attn, vh);
        let placed = g.scatter_cols(oh, &cols, d);
        merged = Some(match merged {
            Some(acc) => g.add(acc, placed),
            None => placed,
        });
    }
    let concat = merged.expect("at least one head");
    linear(
        g,
        concat,
        bound.get(&format!("{prefix}.attn.wo")),
        Some(bound.get(&format!("{prefix}.attn.bo"))),
    )
}

/// One pre-norm transformer layer: `x + MHSA(LN(x))`, then `h + FFN(LN(h))`.
pub fn transformer_layer(g: &mut Graph, x: Tid, prefix: &str, bound: &Bound, heads: usize) -> Tid {
    let ln1 = layer_norm(
        g,
        x,
        bound.get(&format!("{prefix}.ln1.g")),
        bound.get(&format!("{prefix}.ln1.b")),
    );
    let attn = self_attention(g, ln1, prefix, bound, heads);
    let h = g.add(x, attn);

    let ln2 = layer_norm(
        g,
        h,
        bound.get(&format!("{prefix}.ln2.g")),
        bound.get(&format!("{prefix}.ln2.b")),
    );
    let f1 = linear(g, ln2, bound.get(&format!("{prefix}.ffn.w1")), Some(bound.get(&format!("{prefix}.ffn.b1"))));
    let f1a = g.relu(f1);
    let f2 = linear(g, f1a, bound.get(&format!("{prefix}.ffn.w2")), Some(bound.get(&format!("{prefix}.ffn.b2"))));
    g.add(h, f2)
}

/// Run the encoder stack (`depth` layers + final norm) over a token node.
pub fn encode_graph(g: &mut Graph, tokens: Tid, cfg: &EncoderConfig, bound: &Bound) -> Tid {
    let mut x = tokens;
    for i in 0..cfg.depth {
        x = transformer_layer(g, x, &format!("enc.layer{i}"), bound, cfg.heads);
    }
    layer_norm(g, x, bound.get("enc.norm.g"), bound.get("enc.norm.b"))
}

/// Encode visible tokens into latents of the same shape. Deterministic given
/// parameters; requires at least one token.
pub fn encode(visible: &Array2<f64>, cfg: &EncoderConfig, params: &ParamVec) -> Result<Array2<f64>> {
    if visible.nrows() == 0 {
        return Err(Error::config("encoder needs at least one visible token"));
    }
    if visible.ncols() != cfg.d {
        return Err(Error::config(format!(
            "token dim {} does not match model.d = {}",
            visible.ncols(),
            cfg.d
        )));
    }
    cfg.validate()?;
    let mut g = Graph::new();
    let bound = params.bind(&mut g);
    let tokens = g.input2(visible.clone());
    let out = encode_graph(&mut g, tokens, cfg, &bound);
    Ok(g.value(out)
        .view()
        .into_dimensionality::<ndarray::Ix2>()
        .expect("encoder output is 2-d")
        .to_owned())
}

#[cfg(test)]
mod tests {
    use super::*;
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

    fn toy_params(cfg: &EncoderConfig, seed: u64) -> ParamVec {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = ParamVec::new();
        register_encoder(&mut p, cfg, 12, &mut rng);
        p
    }

    #[test]
    fn encode_preserves_shape() {
        let cfg = toy_cfg();
        let p = toy_params(&cfg, 1);
        let x = Array2::from_shape_fn((5, 16), |(i, j)| ((i * 17 + j) as f64 * 0.13).sin());
        let y = encode(&x, &cfg, &p).unwrap();
        assert_eq!(y.shape(), &[5, 16]);
    }

    #[test]
    fn duplicate_tokens_produce_duplicate_latents() {
        let cfg = toy_cfg();
        let p = toy_params(&cfg, 2);
        let row: Vec<f64> = (0..16).map(|j| (j as f64 * 0.31).cos()).collect();
        let mut x = Array2::zeros((4, 16));
        for mut r in x.rows_mut() {
            for (v, s) in r.iter_mut().zip(&row) {
                *v = *s;
            }
        }
        let y = encode(&x, &cfg, &p).unwrap();
        for i in 1..4 {
            for j in 0..16 {
                assert!((y[[0, j]] - y[[i, j]]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn encoder_is_permutation_equivariant() {
        let cfg = toy_cfg();
        let p = toy_params(&cfg, 3);
        let x = Array2::from_shape_fn((6, 16), |(i, j)| ((i * 29 + j * 3) as f64 * 0.17).sin());
        let perm = [3usize, 0, 5, 1, 4, 2];
        let mut xp = Array2::zeros((6, 16));
        for (k, &i) in perm.iter().enumerate() {
            xp.row_mut(k).assign(&x.row(i));
        }
        let y = encode(&x, &cfg, &p).unwrap();
        let yp = encode(&xp, &cfg, &p).unwrap();
        for (k, &i) in perm.iter().enumerate() {
            for j in 0..16 {
                assert!((yp[[k, j]] - y[[i, j]]).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn empty_input_rejected() {
        let cfg = toy_cfg();
        let p = toy_params(&cfg, 4);
        let x = Array2::zeros((0, 16));
        assert!(encode(&x, &cfg, &p).is_err());
    }

    fn check_encoder_gradients(weights: Option<Array2<f64>>) {
        let cfg = EncoderConfig {
            d: 8,
            heads: 2,
            ffn_dim: 12,
            depth: 2,
            decoder_depth: 1,
            decoder_d: 8,
            patch_height: 1,
            patch_width: 1,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut params = ParamVec::new();
        register_encoder(&mut params, &cfg, 6, &mut rng);
        let x = Array2::from_shape_fn((3, 8), |(i, j)| ((i * 7 + j) as f64 * 0.37).sin() * 0.5);

        let build = |g: &mut Graph, p: &ParamVec| -> Tid {
            let bound = p.bind(g);
            let t = g.input2(x.clone());
            let latents = encode_graph(g, t, &cfg, &bound);
            match &weights {
                Some(w) => {
                    let wi = g.input2(w.clone());
                    let weighted = g.mul(latents, wi);
                    g.sum_all(weighted)
                }
                None => g.sum_all(latents),
            }
        };
        let loss_of = |p: &ParamVec| -> f64 {
            let mut g = Graph::new();
            let out = build(&mut g, p);
            g.scalar(out)
        };

        let mut g = Graph::new();
        let bound = params.bind(&mut g);
        let t = g.input2(x.clone());
        let latents = encode_graph(&mut g, t, &cfg, &bound);
        let loss = match &weights {
            Some(w) => {
                let wi = g.input2(w.clone());
                let weighted = g.mul(latents, wi);
                g.sum_all(weighted)
            }
            None => g.sum_all(latents),
        };
        let grads = g.backward(loss);
        let analytic = params.flat_grad(&grads, &bound);

        let h = 1e-5;
        for k in 0..params.len() {
            let mut plus = params.clone();
            let mut minus = params.clone();
            plus.data_mut()[k] += h;
            minus.data_mut()[k] -= h;
            let numeric = (loss_of(&plus) - loss_of(&minus)) / (2.0 * h);
            if numeric.abs() < 1e-8 && analytic[k].abs() < 1e-8 {
                // Both sides vanish; the difference is cancellation noise.
                continue;
            }
            let rel = (numeric - analytic[k]).abs() / (numeric.abs() + analytic[k].abs()).max(1e-8);
            assert!(
                rel <= 1e-4,
                "param {} ({}): numeric={numeric:.8e} analytic={:.8e} rel={rel:.2e}",
                k,
                params.entries().iter().find(|e| (e.offset..e.offset + e.len).contains(&k)).map(|e| e.name.as_str()).unwrap_or("?"),
                analytic[k]
            );
        }
    }

    #[test]
    fn encoder_gradients_match_finite_differences() {
        // Gradient of sum(latents) over every encoder parameter on a
        // 3-token, d=8 instance.
        check_encoder_gradients(None);
    }

    #[test]
    fn encoder_gradients_match_finite_differences_weighted() {
        // A weighted sum keeps gradients nonzero through the final norm,
        // exercising every upstream parameter.
        let w = Array2::from_shape_fn((3, 8), |(i, j)| ((i * 3 + j * 5) as f64 * 0.71).cos());
        check_encoder_gradients(Some(w));
    }
}
