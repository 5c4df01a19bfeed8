//! Topology-constrained pose decoding.
//!
//! Pooled WiFi features are expanded to one token per joint by adding a
//! learnable per-joint task prompt, propagated locally by symmetric-normalized
//! graph convolution over the skeleton, then holistically by single-head
//! attention across all joints with a residual FFN, and finally regressed to
//! coordinates by a linear head shared across joints.
//!
//! The graph convolution uses the self-loop-augmented operator
//! `D^{-1/2} (A + I) D^{-1/2}`: without self loops the symmetric
//! normalization of a zero-diagonal adjacency would drop each joint's own
//! feature.

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{layer_norm, linear, Graph, Tid};
use crate::params::{Bound, Init, ParamVec};
use crate::skeleton::SkeletonGraph;

/// Nonlinearity applied after the graph convolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Activation {
    #[default]
    Relu,
    Identity,
}

fn default_one() -> usize {
    1
}
fn default_ffn() -> usize {
    64
}

/// Architecture of the pose decoder. `dtilde` (the attention key dimension)
/// defaults to the feature dimension when absent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PoseDecoderConfig {
    pub gcn_layers: usize,
    pub attn_blocks: usize,
    pub ffn_dim: usize,
    pub dtilde: Option<usize>,
}

impl Default for PoseDecoderConfig {
    fn default() -> Self {
        PoseDecoderConfig {
            gcn_layers: default_one(),
            attn_blocks: default_one(),
            ffn_dim: default_ffn(),
            dtilde: None,
        }
    }
}

impl PoseDecoderConfig {
    pub fn validate(&self) -> Result<()> {
        if self.gcn_layers == 0 || self.attn_blocks == 0 || self.ffn_dim == 0 {
            return Err(Error::config("pose decoder layer counts must be positive"));
        }
        if self.dtilde == Some(0) {
            return Err(Error::config("decoder.dtilde must be positive"));
        }
        Ok(())
    }

    pub fn key_dim(&self, d: usize) -> usize {
        self.dtilde.unwrap_or(d)
    }
}

/// Register every pose-decoder parameter (`pd.*`).
pub fn register_pose_decoder(
    params: &mut ParamVec,
    cfg: &PoseDecoderConfig,
    d: usize,
    joints: usize,
    coords: usize,
    rng: &mut impl rand::Rng,
) {
    let w = Init::Normal(0.02);
    let dt = cfg.key_dim(d);
    params.register("pd.prompt", &[joints, d], w, rng);
    for i in 0..cfg.gcn_layers {
        params.register(&format!("pd.gcn{i}.w"), &[d, d], w, rng);
    }
    for i in 0..cfg.attn_blocks {
        params.register(&format!("pd.attn{i}.wq"), &[d, dt], w, rng);
        params.register(&format!("pd.attn{i}.wk"), &[d, dt], w, rng);
        params.register(&format!("pd.attn{i}.wv"), &[d, d], w, rng);
        params.register(&format!("pd.attn{i}.ln.g"), &[d], Init::Ones, rng);
        params.register(&format!("pd.attn{i}.ln.b"), &[d], Init::Zeros, rng);
        params.register(&format!("pd.ffn{i}.w1"), &[d, cfg.ffn_dim], w, rng);
        params.register(&format!("pd.ffn{i}.b1"), &[cfg.ffn_dim], Init::Zeros, rng);
        params.register(&format!("pd.ffn{i}.w2"), &[cfg.ffn_dim, d], w, rng);
        params.register(&format!("pd.ffn{i}.b2"), &[d], Init::Zeros, rng);
        params.register(&format!("pd.ffn{i}.ln.g"), &[d], Init::Ones, rng);
        params.register(&format!("pd.ffn{i}.ln.b"), &[d], Init::Zeros, rng);
    }
    params.register("pd.psi.w", &[d, coords], w, rng);
    params.register("pd.psi.b", &[coords], Init::Zeros, rng);
}

// ---- graph builders ---------------------------------------------------------

/// `F_hat[j] = pooled + prompt[j]`.
pub fn joint_tokens_graph(g: &mut Graph, pooled: Tid, prompt: Tid, joints: usize) -> Tid {
    let rep = g.repeat_row(pooled, joints);
    g.add(rep, prompt)
}

/// One graph convolution: `act(op @ x @ w)` with `op` the normalized
/// skeleton operator as a constant node.
pub fn gcn_graph(g: &mut Graph, x: Tid, op: Tid, w: Tid, act: Activation) -> Tid {
    let prop = g.matmul(op, x);
    let h = g.matmul(prop, w);
    match act {
        Activation::Relu => g.relu(h),
        Activation::Identity => h,
    }
}

/// Single-head joint attention with residual and layer norm:
/// `LN(x + softmax(QK^T / sqrt(dt)) V)`.
pub fn attention_graph(
    g: &mut Graph,
    x: Tid,
    wq: Tid,
    wk: Tid,
    wv: Tid,
    ln_gain: Tid,
    ln_bias: Tid,
) -> Tid {
    let q = g.matmul(x, wq);
    let k = g.matmul(x, wk);
    let v = g.matmul(x, wv);
    let dt = g.value(q).shape()[1] as f64;
    let kt = g.transpose(k);
    let logits = g.matmul(q, kt);
    let scaled = g.scale(logits, 1.0 / dt.sqrt());
    let attn = g.softmax_rows(scaled);
    let av = g.matmul(attn, v);
    let res = g.add(x, av);
    layer_norm(g, res, ln_gain, ln_bias)
}

/// Residual FFN with layer norm followed by the shared linear head:
/// `Z = LN(FFN(x) + x)`, `Y = Z @ psi_w + psi_b` row-wise.
#[allow(clippy::too_many_arguments)]
pub fn ffn_regress_graph(
    g: &mut Graph,
    x: Tid,
    w1: Tid,
    b1: Tid,
    w2: Tid,
    b2: Tid,
    ln_gain: Tid,
    ln_bias: Tid,
    psi_w: Tid,
    psi_b: Tid,
) -> (Tid, Tid) {
    let f1 = linear(g, x, w1, Some(b1));
    let f1a = g.relu(f1);
    let f2 = linear(g, f1a, w2, Some(b2));
    let res = g.add(f2, x);
    let z = layer_norm(g, res, ln_gain, ln_bias);
    let y = linear(g, z, psi_w, Some(psi_b));
    (z, y)
}

/// Full decoder forward: joint tokens, GCN layers, attention/FFN blocks,
/// regression head. Returns the predicted J x C pose node.
pub fn pose_forward_graph(
    g: &mut Graph,
    pooled: Tid,
    bound: &Bound,
    cfg: &PoseDecoderConfig,
    skeleton_op: Tid,
    joints: usize,
) -> Tid {
    let mut x = joint_tokens_graph(g, pooled, bound.get("pd.prompt"), joints);
    for i in 0..cfg.gcn_layers {
        x = gcn_graph(g, x, skeleton_op, bound.get(&format!("pd.gcn{i}.w")), Activation::Relu);
    }
    let mut y = None;
    for i in 0..cfg.attn_blocks {
        x = attention_graph(
            g,
            x,
            bound.get(&format!("pd.attn{i}.wq")),
            bound.get(&format!("pd.attn{i}.wk")),
            bound.get(&format!("pd.attn{i}.wv")),
            bound.get(&format!("pd.attn{i}.ln.g")),
            bound.get(&format!("pd.attn{i}.ln.b")),
        );
        let (z, yhat) = ffn_regress_graph(
            g,
            x,
            bound.get(&format!("pd.ffn{i}.w1")),
            bound.get(&format!("pd.ffn{i}.b1")),
            bound.get(&format!("pd.ffn{i}.w2")),
            bound.get(&format!("pd.ffn{i}.b2")),
            bound.get(&format!("pd.ffn{i}.ln.g")),
            bound.get(&format!("pd.ffn{i}.ln.b")),
            bound.get("pd.psi.w"),
            bound.get("pd.psi.b"),
        );
        x = z;
        y = Some(yhat);
    }
    y.expect("at least one attention block")
}

// ---- array-level operations --------------------------------------------------

fn to2(v: &ndarray::ArrayD<f64>) -> Array2<f64> {
    v.view()
        .into_dimensionality::<ndarray::Ix2>()
        .expect("2-d value")
        .to_owned()
}

/// Expand patch latents into joint tokens: mean over patches plus the
/// per-joint prompt.
pub fn build_joint_tokens(latents: &Array2<f64>, prompt: &Array2<f64>) -> Result<Array2<f64>> {
    if latents.nrows() == 0 {
        return Err(Error::config("joint tokens need at least one patch latent"));
    }
    if latents.ncols() != prompt.ncols() {
        return Err(Error::config(format!(
            "latent dim {} does not match prompt dim {}",
            latents.ncols(),
            prompt.ncols()
        )));
    }
    let mut g = Graph::new();
    let lat = g.input2(latents.clone());
    let pr = g.input2(prompt.clone());
    let pooled = g.mean_axis(lat, 0);
    let out = joint_tokens_graph(&mut g, pooled, pr, prompt.nrows());
    Ok(to2(g.value(out)))
}

/// Graph convolution over a skeleton: `act(D^{-1/2}(A+I)D^{-1/2} F W)`.
pub fn gcn_layer(
    f: &Array2<f64>,
    skeleton: &SkeletonGraph,
    w: &Array2<f64>,
    act: Activation,
) -> Result<Array2<f64>> {
    if f.nrows() != skeleton.joints() {
        return Err(Error::config(format!(
            "feature rows {} do not match skeleton joints {}",
            f.nrows(),
            skeleton.joints()
        )));
    }
    if w.nrows() != f.ncols() {
        return Err(Error::config("GCN weight rows must match feature dim"));
    }
    let mut g = Graph::new();
    let x = g.input2(f.clone());
    let op = g.input2(skeleton.normalized_operator());
    let wt = g.input2(w.clone());
    let out = gcn_graph(&mut g, x, op, wt, act);
    Ok(to2(g.value(out)))
}

/// Parameters of the single-head joint attention block.
#[derive(Debug, Clone)]
pub struct JointAttentionParams {
    pub w_q: Array2<f64>,
    pub w_k: Array2<f64>,
    pub w_v: Array2<f64>,
    pub ln_gain: Array1<f64>,
    pub ln_bias: Array1<f64>,
}

/// `Z_attn = LN(F + softmax(QK^T / sqrt(dt)) V)` with row-stochastic
/// attention.
pub fn attention_block(f: &Array2<f64>, p: &JointAttentionParams) -> Result<Array2<f64>> {
    let d = f.ncols();
    if p.w_q.nrows() != d || p.w_k.nrows() != d || p.w_v.nrows() != d {
        return Err(Error::config("attention weight rows must match feature dim"));
    }
    if p.w_q.ncols() != p.w_k.ncols() {
        return Err(Error::config("W_Q and W_K must share the key dimension"));
    }
    if p.w_v.ncols() != d {
        return Err(Error::config("W_V must map back to the feature dim for the residual"));
    }
    let mut g = Graph::new();
    let x = g.input2(f.clone());
    let wq = g.input2(p.w_q.clone());
    let wk = g.input2(p.w_k.clone());
    let wv = g.input2(p.w_v.clone());
    let gain = g.input1(p.ln_gain.clone());
    let bias = g.input1(p.ln_bias.clone());
    let out = attention_graph(&mut g, x, wq, wk, wv, gain, bias);
    Ok(to2(g.value(out)))
}

/// Parameters of the residual FFN and the shared regression head.
#[derive(Debug, Clone)]
pub struct RegressionParams {
    pub ffn_w1: Array2<f64>,
    pub ffn_b1: Array1<f64>,
    pub ffn_w2: Array2<f64>,
    pub ffn_b2: Array1<f64>,
    pub ln_gain: Array1<f64>,
    pub ln_bias: Array1<f64>,
    pub head_w: Array2<f64>,
    pub head_b: Array1<f64>,
}

/// `Z = LN(FFN(Z_attn) + Z_attn)`; `Y = psi(Z)` applied row-wise with
/// weights shared across joints.
pub fn ffn_regress(
    z_attn: &Array2<f64>,
    p: &RegressionParams,
) -> Result<(Array2<f64>, Array2<f64>)> {
    let d = z_attn.ncols();
    if p.ffn_w1.nrows() != d || p.ffn_w2.ncols() != d || p.head_w.nrows() != d {
        return Err(Error::config("regression parameter shapes do not match feature dim"));
    }
    let mut g = Graph::new();
    let x = g.input2(z_attn.clone());
    let w1 = g.input2(p.ffn_w1.clone());
    let b1 = g.input1(p.ffn_b1.clone());
    let w2 = g.input2(p.ffn_w2.clone());
    let b2 = g.input1(p.ffn_b2.clone());
    let gain = g.input1(p.ln_gain.clone());
    let bias = g.input1(p.ln_bias.clone());
    let pw = g.input2(p.head_w.clone());
    let pb = g.input1(p.head_b.clone());
    let (z, y) = ffn_regress_graph(&mut g, x, w1, b1, w2, b2, gain, bias, pw, pb);
    Ok((to2(g.value(z)), to2(g.value(y))))
}

/// Mean squared error over all J*C pose entries (single person).
pub fn loss_pose(pred: &Array2<f64>, gt: &Array2<f64>) -> Result<f64> {
    if pred.shape() != gt.shape() {
        return Err(Error::config(format!(
            "pose shape mismatch: {:?} vs {:?}",
            pred.shape(),
            gt.shape()
        )));
    }
    let n = pred.len() as f64;
    Ok(pred
        .iter()
        .zip(gt.iter())
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        / n)
}

/// `loss_pose` as a graph node (mean over squared differences).
pub fn loss_pose_graph(g: &mut Graph, pred: Tid, gt: Tid) -> Tid {
    let diff = g.sub(pred, gt);
    let sq = g.square(diff);
    g.mean_all(sq)
}
