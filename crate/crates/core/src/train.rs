//! Training and evaluation pipeline behind the CLI.
//!
//! Phase 1 (`pretrain_run`) optimizes the combined masked-reconstruction /
//! contrastive / uniformity objective with AdamW or SGD under a linear
//! warm-up followed by cosine or constant decay. Phase 2
//! (`decode_train_run`) freezes the encoder — pooled features are computed
//! once up front, and the optimizer never touches an encoder parameter — and
//! trains only the pose decoder.
//!
//! Both phases train on the leading 75% of sequences; the trailing 25% is
//! held out for per-epoch validation (splitting by sequence keeps adjacent
//! frames of one sequence out of the validation set). Datasets with fewer
//! than four sequences train on everything and validate on the training
//! set.
//!
//! Everything is single-threaded and seeded: a (seed, config, dataset)
//! triple reproduces loss logs and checkpoints bit-exactly.

use std::io::Write;
use std::path::Path;

use ndarray::{Array1, Array2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::checkpoint::{Checkpoint, RngState};
use crate::config::{OptimizerKind, PipelineConfig, Schedule, TrainConfig};
use crate::data::{reshape_to_image, DatasetMeta};
use crate::dataset_io::Dataset;
use crate::embed::{patch_grid, patchify_raw, sinusoidal_table};
use crate::encoder::{encode, EncoderConfig};
use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::masking::{expected_masked_count, sample_mask};
use crate::metrics::{evaluate_dataset, mpjpe, MetricReport};
use crate::params::ParamVec;
use crate::pose::{pose_forward_graph, loss_pose_graph, register_pose_decoder};
use crate::pretrain::{make_contrastive_batch, pretrain_batch_graph, register_pretrain};

/// Per-epoch mean losses of the pre-training phase.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochLoss {
    pub epoch: usize,
    pub l_mask: f64,
    pub l_cl: f64,
    pub l_unif: f64,
    pub total: f64,
}

/// Per-epoch log of the decode phase.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecodeEpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_mpjpe: f64,
}

/// Learning rate at `epoch`: linear warm-up to the configured rate over
/// `warmup_epochs`, then cosine decay (or constant).
pub fn lr_at(cfg: &TrainConfig, epoch: usize) -> f64 {
    if epoch < cfg.warmup_epochs {
        return cfg.lr * (epoch + 1) as f64 / cfg.warmup_epochs as f64;
    }
    match cfg.schedule {
        Schedule::Constant => cfg.lr,
        Schedule::Cosine => {
            let span = cfg.epochs.saturating_sub(cfg.warmup_epochs).max(1) as f64;
            let progress = (epoch - cfg.warmup_epochs) as f64 / span;
            cfg.lr * 0.5 * (1.0 + (std::f64::consts::PI * progress).cos())
        }
    }
}

enum Optimizer {
    AdamW { m: Vec<f64>, v: Vec<f64>, t: u64 },
    Sgd,
}

impl Optimizer {
    fn new(kind: OptimizerKind, len: usize) -> Self {
        match kind {
            OptimizerKind::Adamw => Optimizer::AdamW { m: vec![0.0; len], v: vec![0.0; len], t: 0 },
            OptimizerKind::Sgd => Optimizer::Sgd,
        }
    }

    fn step(&mut self, data: &mut [f64], grad: &[f64], lr: f64, weight_decay: f64) {
        match self {
            Optimizer::AdamW { m, v, t } => {
                const BETA1: f64 = 0.9;
                const BETA2: f64 = 0.999;
                const EPS: f64 = 1e-8;
                *t += 1;
                let bc1 = 1.0 - BETA1.powi(*t as i32);
                let bc2 = 1.0 - BETA2.powi(*t as i32);
                for i in 0..data.len() {
                    m[i] = BETA1 * m[i] + (1.0 - BETA1) * grad[i];
                    v[i] = BETA2 * v[i] + (1.0 - BETA2) * grad[i] * grad[i];
                    let m_hat = m[i] / bc1;
                    let v_hat = v[i] / bc2;
                    data[i] -= lr * (m_hat / (v_hat.sqrt() + EPS) + weight_decay * data[i]);
                }
            }
            Optimizer::Sgd => {
                for i in 0..data.len() {
                    data[i] -= lr * (grad[i] + weight_decay * data[i]);
                }
            }
        }
    }
}

fn clip_gradient(grad: &mut [f64], max_norm: Option<f64>) {
    if let Some(c) = max_norm {
        let norm: f64 = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
        if norm > c {
            let scale = c / norm;
            for g in grad.iter_mut() {
                *g *= scale;
            }
        }
    }
}

/// Train/validation split over sequences: the last quarter of sequences is
/// held out (at least one when there are four or more).
#[derive(Debug, Clone)]
pub struct DataSplit {
    /// Metadata restricted to the training prefix. Training sample indices
    /// are `0..train_meta.num_samples` in the original dataset.
    pub train_meta: DatasetMeta,
    /// Validation sample index range in the original dataset. Equals the
    /// training range when there are too few sequences to split.
    pub val_range: std::ops::Range<usize>,
}

pub fn split_by_sequence(meta: &DatasetMeta) -> DataSplit {
    let n_val_seq = meta.sequences.len() / 4;
    if n_val_seq == 0 {
        return DataSplit { train_meta: meta.clone(), val_range: 0..meta.num_samples };
    }
    let n_train_seq = meta.sequences.len() - n_val_seq;
    let train_count: usize = meta.sequences[..n_train_seq].iter().map(|s| s.len).sum();
    let mut train_meta = meta.clone();
    train_meta.sequences.truncate(n_train_seq);
    train_meta.num_samples = train_count;
    if let Some(classes) = &mut train_meta.sequence_classes {
        classes.truncate(n_train_seq);
    }
    DataSplit { train_meta, val_range: train_count..meta.num_samples }
}

/// Flattened patch matrix (n x patch_len) of every sample in `indices`.
fn raw_patch_matrices(
    dataset: &Dataset,
    cfg: &EncoderConfig,
    indices: std::ops::Range<usize>,
) -> Result<Vec<Array2<f64>>> {
    indices
        .map(|i| {
            let img = reshape_to_image(&dataset.csi_sample(i)?);
            patchify_raw(&img, cfg.patch_height, cfg.patch_width)
        })
        .collect()
}

fn format_float(v: f64) -> String {
    format!("{v}")
}

pub fn write_pretrain_log(path: &Path, logs: &[EpochLoss]) -> Result<()> {
    let mut out = String::from("epoch,l_mask,l_cl,l_unif,total\n");
    for l in logs {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            l.epoch,
            format_float(l.l_mask),
            format_float(l.l_cl),
            format_float(l.l_unif),
            format_float(l.total)
        ));
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn write_decode_log(path: &Path, logs: &[DecodeEpochLog]) -> Result<()> {
    let mut out = String::from("epoch,train_loss,val_mpjpe\n");
    for l in logs {
        out.push_str(&format!(
            "{},{},{}\n",
            l.epoch,
            format_float(l.train_loss),
            format_float(l.val_mpjpe)
        ));
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

fn patch_len(dataset: &Dataset, cfg: &EncoderConfig) -> usize {
    dataset.meta().csi_dims.antennas * cfg.patch_height * cfg.patch_width
}

fn check_grid(dataset: &Dataset, cfg: &EncoderConfig) -> Result<(usize, usize)> {
    let dims = dataset.meta().csi_dims;
    patch_grid(dims.image_height(), dims.temporal, cfg.patch_height, cfg.patch_width)
}

/// Fresh randomly initialized pre-training checkpoint (step 0). Serves as
/// the from-scratch encoder baseline for the decode phase.
pub fn init_pretrain_checkpoint(
    cfg: &PipelineConfig,
    dataset: &Dataset,
    seed: u64,
) -> Result<Checkpoint> {
    cfg.validate()?;
    check_grid(dataset, &cfg.model)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = ParamVec::new();
    register_pretrain(&mut params, &cfg.model, patch_len(dataset, &cfg.model), &mut rng);
    Ok(Checkpoint {
        phase: "pretrain".into(),
        config: cfg.clone(),
        step: 0,
        rng: RngState::capture(&rng),
        params,
    })
}

/// Phase-1 training. Returns the checkpoint and the per-epoch loss log
/// (also written as CSV when `log_path` is given).
pub fn pretrain_run(
    cfg: &PipelineConfig,
    dataset: &Dataset,
    log_path: Option<&Path>,
) -> Result<(Checkpoint, Vec<EpochLoss>)> {
    cfg.validate()?;
    let (grid_rows, grid_cols) = check_grid(dataset, &cfg.model)?;
    let n_patches = grid_rows * grid_cols;
    let masked_count = expected_masked_count(cfg.mask.strategy, cfg.mask.ratio, grid_rows, grid_cols);
    if masked_count >= n_patches {
        return Err(Error::config(format!(
            "mask.ratio {} leaves no visible patches on a {grid_rows}x{grid_cols} grid",
            cfg.mask.ratio
        )));
    }

    let split = split_by_sequence(dataset.meta());
    let train_meta = &split.train_meta;
    let train_count = train_meta.num_samples;
    let batch = cfg.pretrain.batch_size;

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.pretrain.seed);
    let mut params = ParamVec::new();
    register_pretrain(&mut params, &cfg.model, patch_len(dataset, &cfg.model), &mut rng);
    let mut optimizer = Optimizer::new(cfg.pretrain.optimizer, params.len());

    let raws = raw_patch_matrices(dataset, &cfg.model, 0..train_count)?;
    let steps_per_epoch = train_count.div_ceil(batch).max(1);

    let mut logs = Vec::with_capacity(cfg.pretrain.epochs);
    let mut global_step = 0u64;
    for epoch in 0..cfg.pretrain.epochs {
        let lr = lr_at(&cfg.pretrain, epoch);
        let (mut am, mut ac, mut au, mut at) = (0.0, 0.0, 0.0, 0.0);
        for step in 0..steps_per_epoch {
            let batch_spec = make_contrastive_batch(train_meta, batch, &mut rng)?;
            let mut raw_batch = Vec::with_capacity(batch);
            let mut masks = Vec::with_capacity(batch);
            for &i in &batch_spec.indices {
                raw_batch.push(raws[i].clone());
                let spec =
                    sample_mask(grid_rows, grid_cols, cfg.mask.strategy, cfg.mask.ratio, &mut rng)?;
                masks.push((spec.visible(), spec.masked.clone()));
            }

            let mut g = Graph::new();
            let bound = params.bind(&mut g);
            let out = pretrain_batch_graph(
                &mut g,
                &bound,
                &cfg.model,
                &raw_batch,
                &masks,
                cfg.loss.scope,
                cfg.loss.tau,
                cfg.loss.lambda_cl,
                cfg.loss.lambda_unif,
            );
            let total = g.scalar(out.total);
            if !total.is_finite() {
                return Err(Error::numeric(format!(
                    "non-finite pre-training loss at epoch {epoch}, batch {step} (global step {global_step})"
                )));
            }
            let grads = g.backward(out.total);
            let mut flat = params.flat_grad(&grads, &bound);
            clip_gradient(&mut flat, cfg.pretrain.grad_clip);
            optimizer.step(params.data_mut(), &flat, lr, cfg.pretrain.weight_decay);

            am += g.scalar(out.l_mask);
            ac += out.l_cl.map(|t| g.scalar(t)).unwrap_or(0.0);
            au += out.l_unif.map(|t| g.scalar(t)).unwrap_or(0.0);
            at += total;
            global_step += 1;
        }
        let k = steps_per_epoch as f64;
        logs.push(EpochLoss {
            epoch,
            l_mask: am / k,
            l_cl: ac / k,
            l_unif: au / k,
            total: at / k,
        });
    }

    if let Some(path) = log_path {
        write_pretrain_log(path, &logs)?;
    }
    let ckpt = Checkpoint {
        phase: "pretrain".into(),
        config: cfg.clone(),
        step: global_step,
        rng: RngState::capture(&rng),
        params,
    };
    Ok((ckpt, logs))
}

/// Pooled encoder features (mean over all patch latents, no masking) for
/// every sample, using the checkpoint's frozen encoder.
pub fn compute_pooled_features(
    params: &ParamVec,
    enc_cfg: &EncoderConfig,
    dataset: &Dataset,
) -> Result<Vec<Array1<f64>>> {
    let (grid_rows, grid_cols) = check_grid(dataset, enc_cfg)?;
    let n = grid_rows * grid_cols;
    let pe = sinusoidal_table(n, enc_cfg.d)?;
    let w = params
        .array("enc.patch.w")?
        .into_dimensionality::<ndarray::Ix2>()
        .map_err(|_| Error::data("enc.patch.w is not a matrix"))?;
    let b = params
        .array("enc.patch.b")?
        .into_dimensionality::<ndarray::Ix1>()
        .map_err(|_| Error::data("enc.patch.b is not a vector"))?;

    let mut out = Vec::with_capacity(dataset.len());
    for i in 0..dataset.len() {
        let img = reshape_to_image(&dataset.csi_sample(i)?);
        let raw = patchify_raw(&img, enc_cfg.patch_height, enc_cfg.patch_width)?;
        let tokens = raw.dot(&w) + &b + &pe;
        let latents = encode(&tokens, enc_cfg, params)?;
        out.push(latents.mean_axis(Axis(0)).expect("n >= 1"));
    }
    Ok(out)
}

fn pose_forward_array(
    decoder_params: &ParamVec,
    dec_cfg: &crate::pose::PoseDecoderConfig,
    op: &Array2<f64>,
    pooled: &Array1<f64>,
    joints: usize,
) -> Array2<f64> {
    let mut g = Graph::new();
    let bound = decoder_params.bind(&mut g);
    let pool = g.input1(pooled.clone());
    let op_in = g.input2(op.clone());
    let pred = pose_forward_graph(&mut g, pool, &bound, dec_cfg, op_in, joints);
    g.value(pred)
        .view()
        .into_dimensionality::<ndarray::Ix2>()
        .expect("pose output is 2-d")
        .to_owned()
}

/// Per-joint target mean and global scale used to standardize pose targets
/// during decode training. Stored in the checkpoint (`norm.*`) so
/// evaluation can undo it.
struct TargetNorm {
    mean: Array2<f64>,
    std: f64,
}

impl TargetNorm {
    fn fit(gts: &[Array2<f64>], train_count: usize) -> Self {
        let (j, c) = (gts[0].nrows(), gts[0].ncols());
        let mut mean = Array2::zeros((j, c));
        for gt in &gts[..train_count] {
            mean += gt;
        }
        mean /= train_count as f64;
        let mut var = 0.0;
        for gt in &gts[..train_count] {
            for (v, m) in gt.iter().zip(mean.iter()) {
                var += (v - m) * (v - m);
            }
        }
        var /= (train_count * j * c) as f64;
        TargetNorm { mean, std: var.sqrt().max(1e-9) }
    }

    fn normalize(&self, gt: &Array2<f64>) -> Array2<f64> {
        (gt - &self.mean) / self.std
    }

    fn denormalize(&self, pred: &Array2<f64>) -> Array2<f64> {
        pred * self.std + &self.mean
    }
}

/// Phase-2 training: freeze the encoder from `pretrain_ckpt`, train the pose
/// decoder on MSE, log validation MPJPE per epoch. The returned checkpoint
/// embeds the frozen encoder (`enc.*`, bit-identical to the input) next to
/// the decoder parameters (`pd.*`) so evaluation needs a single file.
///
/// Pose targets are standardized with the training split's per-joint mean
/// and global standard deviation (the network regresses in standardized
/// space; `train_loss` is logged in those units). Validation MPJPE and all
/// downstream metrics are computed after de-standardizing, in the dataset's
/// native unit.
pub fn decode_train_run(
    cfg: &PipelineConfig,
    pretrain_ckpt: &Checkpoint,
    dataset: &Dataset,
    log_path: Option<&Path>,
) -> Result<(Checkpoint, Vec<DecodeEpochLog>)> {
    cfg.validate()?;
    let meta = dataset.meta();
    if meta.persons != 1 {
        return Err(Error::config(format!(
            "pose decoding supports a single person, dataset has M = {}",
            meta.persons
        )));
    }
    if !pretrain_ckpt.params.contains("enc.patch.w") {
        return Err(Error::config("checkpoint does not contain encoder parameters"));
    }
    let enc_cfg = pretrain_ckpt.config.model;
    if patch_len(dataset, &enc_cfg)
        != pretrain_ckpt.params.view("enc.patch.w")?.shape()[0]
    {
        return Err(Error::config(
            "checkpoint patch embedding does not match the dataset's antenna/patch geometry",
        ));
    }

    let pooled = compute_pooled_features(&pretrain_ckpt.params, &enc_cfg, dataset)?;
    let gts: Vec<Array2<f64>> = (0..dataset.len())
        .map(|i| dataset.pose_matrix(i))
        .collect::<Result<_>>()?;
    let op = dataset.skeleton().normalized_operator();
    let joints = meta.joints;

    let split = split_by_sequence(meta);
    let train_count = split.train_meta.num_samples;
    let val_range = split.val_range.clone();

    let norm = TargetNorm::fit(&gts, train_count);
    let targets: Vec<Array2<f64>> = gts.iter().map(|gt| norm.normalize(gt)).collect();

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.decode.seed);
    let mut decoder_params = ParamVec::new();
    register_pose_decoder(&mut decoder_params, &cfg.decoder, enc_cfg.d, joints, meta.coords, &mut rng);
    let mut optimizer = Optimizer::new(cfg.decode.optimizer, decoder_params.len());

    let mut logs = Vec::with_capacity(cfg.decode.epochs);
    let mut global_step = 0u64;
    let mut order: Vec<usize> = (0..train_count).collect();
    for epoch in 0..cfg.decode.epochs {
        let lr = lr_at(&cfg.decode, epoch);
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        let mut batches = 0usize;
        for chunk in order.chunks(cfg.decode.batch_size) {
            let mut g = Graph::new();
            let bound = decoder_params.bind(&mut g);
            let op_in = g.input2(op.clone());
            let mut losses = Vec::with_capacity(chunk.len());
            for &i in chunk {
                let pool = g.input1(pooled[i].clone());
                let pred = pose_forward_graph(&mut g, pool, &bound, &cfg.decoder, op_in, joints);
                let gt = g.input2(targets[i].clone());
                losses.push(loss_pose_graph(&mut g, pred, gt));
            }
            let mut sum = losses[0];
            for &l in &losses[1..] {
                sum = g.add(sum, l);
            }
            let mean = g.scale(sum, 1.0 / chunk.len() as f64);
            let value = g.scalar(mean);
            if !value.is_finite() {
                return Err(Error::numeric(format!(
                    "non-finite decode loss at epoch {epoch}, batch {batches} (global step {global_step})"
                )));
            }
            let grads = g.backward(mean);
            let mut flat = decoder_params.flat_grad(&grads, &bound);
            clip_gradient(&mut flat, cfg.decode.grad_clip);
            optimizer.step(decoder_params.data_mut(), &flat, lr, cfg.decode.weight_decay);
            epoch_loss += value;
            batches += 1;
            global_step += 1;
        }

        let val_mpjpe = {
            let mut acc = 0.0;
            for i in val_range.clone() {
                let raw = pose_forward_array(&decoder_params, &cfg.decoder, &op, &pooled[i], joints);
                let pred = norm.denormalize(&raw);
                acc += mpjpe(&pred.view(), &gts[i].view())?;
            }
            acc / val_range.len() as f64
        };
        logs.push(DecodeEpochLog {
            epoch,
            train_loss: epoch_loss / batches as f64,
            val_mpjpe,
        });
    }

    if let Some(path) = log_path {
        write_decode_log(path, &logs)?;
    }

    // Merge the untouched encoder with the trained decoder.
    let mut merged = ParamVec::new();
    for e in pretrain_ckpt.params.entries() {
        if e.name.starts_with("enc.") {
            merged.register_array(&e.name, &pretrain_ckpt.params.array(&e.name)?);
        }
    }
    for e in decoder_params.entries() {
        merged.register_array(&e.name, &decoder_params.array(&e.name)?);
    }
    merged.register_array("norm.target_mean", &norm.mean.clone().into_dyn());
    merged.register_array(
        "norm.target_std",
        &ndarray::ArrayD::from_elem(ndarray::IxDyn(&[1]), norm.std),
    );
    let mut merged_config = cfg.clone();
    merged_config.model = enc_cfg;
    let ckpt = Checkpoint {
        phase: "decode".into(),
        config: merged_config,
        step: global_step,
        rng: RngState::capture(&rng),
        params: merged,
    };
    Ok((ckpt, logs))
}

/// Run the frozen encoder + trained decoder over a dataset. Returns the
/// metric report and the per-sample predicted poses.
pub fn evaluate_run(
    decode_ckpt: &Checkpoint,
    dataset: &Dataset,
    alphas: &[f64],
) -> Result<(MetricReport, Vec<Array2<f64>>)> {
    if decode_ckpt.phase != "decode" {
        return Err(Error::config(format!(
            "evaluation needs a decode-phase checkpoint, got '{}'",
            decode_ckpt.phase
        )));
    }
    if dataset.is_empty() {
        return Err(Error::data("cannot evaluate an empty dataset"));
    }
    let prompt_rows = decode_ckpt.params.view("pd.prompt")?.shape()[0];
    if prompt_rows != dataset.meta().joints {
        return Err(Error::config(format!(
            "checkpoint decodes {prompt_rows} joints but dataset has {}",
            dataset.meta().joints
        )));
    }
    let enc_cfg = decode_ckpt.config.model;
    let dec_cfg = decode_ckpt.config.decoder;
    let pooled = compute_pooled_features(&decode_ckpt.params, &enc_cfg, dataset)?;
    let op = dataset.skeleton().normalized_operator();
    let joints = dataset.meta().joints;

    // Undo the trainer's target standardization when present.
    let norm = if decode_ckpt.params.contains("norm.target_mean") {
        let mean = decode_ckpt
            .params
            .array("norm.target_mean")?
            .into_dimensionality::<ndarray::Ix2>()
            .map_err(|_| Error::data("norm.target_mean is not a matrix"))?;
        let std = decode_ckpt.params.slice("norm.target_std")?[0];
        Some(TargetNorm { mean, std })
    } else {
        None
    };

    let mut preds = Vec::with_capacity(dataset.len());
    let mut gts = Vec::with_capacity(dataset.len());
    for i in 0..dataset.len() {
        let raw = pose_forward_array(&decode_ckpt.params, &dec_cfg, &op, &pooled[i], joints);
        preds.push(match &norm {
            Some(n) => n.denormalize(&raw),
            None => raw,
        });
        gts.push(dataset.pose_matrix(i)?);
    }
    let report = evaluate_dataset(&preds, &gts, dataset.skeleton(), alphas)?;
    Ok((report, preds))
}

/// One exported embedding row.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingRow {
    pub sample_index: usize,
    pub sequence_id: u64,
    pub embedding: Array1<f64>,
}

/// Pooled embeddings `e_i` (pre-projection, unmasked forward) for every
/// sample, in stored order.
pub fn compute_embeddings(ckpt: &Checkpoint, dataset: &Dataset) -> Result<Vec<EmbeddingRow>> {
    if !ckpt.params.contains("enc.patch.w") {
        return Err(Error::config("checkpoint does not contain encoder parameters"));
    }
    let pooled = compute_pooled_features(&ckpt.params, &ckpt.config.model, dataset)?;
    pooled
        .into_iter()
        .enumerate()
        .map(|(i, e)| {
            let (sequence_id, _) = dataset.meta().locate(i)?;
            Ok(EmbeddingRow { sample_index: i, sequence_id, embedding: e })
        })
        .collect()
}

/// Write embeddings as CSV: `sample_id,sequence_id,e0..e{d-1}`.
pub fn write_embeddings_csv<W: Write>(rows: &[EmbeddingRow], mut w: W) -> Result<()> {
    let to_io = |e: std::io::Error| Error::data(format!("embedding export failed: {e}"));
    let d = rows.first().map(|r| r.embedding.len()).unwrap_or(0);
    let mut header = String::from("sample_id,sequence_id");
    for k in 0..d {
        header.push_str(&format!(",e{k}"));
    }
    writeln!(w, "{header}").map_err(to_io)?;
    for r in rows {
        let mut line = format!("{},{}", r.sample_index, r.sequence_id);
        for v in r.embedding.iter() {
            line.push_str(&format!(",{v}"));
        }
        writeln!(w, "{line}").map_err(to_io)?;
    }
    Ok(())
}
