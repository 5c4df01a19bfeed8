// temporary full-criteria probe after generator changes
use ndarray::Array2;
use wifipose_core::checkpoint::Checkpoint;
use wifipose_core::config::PipelineConfig;
use wifipose_core::dataset_io::Dataset;
use wifipose_core::synth::{skeleton_for_joints, synth_generate, SynthConfig};
use wifipose_core::train::{
    compute_embeddings, decode_train_run, init_pretrain_checkpoint, pretrain_run,
};

fn desk_dataset() -> Dataset {
    let syn = SynthConfig { seed: 2024, ..SynthConfig::default() };
    let (meta, samples, poses) = synth_generate(&syn).unwrap();
    Dataset::from_parts(meta, skeleton_for_joints(17).unwrap(), &samples, &poses).unwrap()
}

fn desk_config(seed: u64, lambda_cl: f64, lambda_unif: f64) -> PipelineConfig {
    let mut cfg = PipelineConfig::default();
    cfg.pretrain.epochs = 16;
    cfg.pretrain.batch_size = 12;
    cfg.pretrain.warmup_epochs = 2;
    cfg.pretrain.lr = 1.5e-3;
    cfg.pretrain.seed = seed;
    cfg.loss.lambda_cl = lambda_cl;
    cfg.loss.lambda_unif = lambda_unif;
    cfg.loss.tau = 0.5;
    cfg.mask.ratio = 0.5;
    cfg.decode.epochs = 20;
    cfg.decode.batch_size = 32;
    cfg.decode.optimizer = wifipose_core::config::OptimizerKind::Adamw;
    cfg.decode.lr = 1e-2;
    cfg.decode.weight_decay = 1e-6;
    cfg.decode.seed = seed + 1000;
    cfg
}

fn silhouette(m: &Array2<f64>, labels: &[u32]) -> f64 {
    let n = m.nrows();
    let dist = |a: usize, b: usize| -> f64 {
        m.row(a).iter().zip(m.row(b)).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
    };
    let classes: std::collections::BTreeSet<u32> = labels.iter().copied().collect();
    let mut total = 0.0;
    let mut count = 0usize;
    for i in 0..n {
        let same: Vec<usize> = (0..n).filter(|&j| j != i && labels[j] == labels[i]).collect();
        if same.is_empty() { continue; }
        let a = same.iter().map(|&j| dist(i, j)).sum::<f64>() / same.len() as f64;
        let mut b = f64::INFINITY;
        for &c in &classes {
            if c == labels[i] { continue; }
            let other: Vec<usize> = (0..n).filter(|&j| labels[j] == c).collect();
            if other.is_empty() { continue; }
            b = b.min(other.iter().map(|&j| dist(i, j)).sum::<f64>() / other.len() as f64);
        }
        total += (b - a) / a.max(b);
        count += 1;
    }
    total / count as f64
}

fn embedding_matrix(ckpt: &Checkpoint, ds: &Dataset) -> (Array2<f64>, Vec<u32>) {
    let rows = compute_embeddings(ckpt, ds).unwrap();
    let d = rows[0].embedding.len();
    let mut m = Array2::zeros((rows.len(), d));
    let classes = ds.meta().sequence_classes.clone().unwrap();
    let mut labels = Vec::with_capacity(rows.len());
    for (i, r) in rows.iter().enumerate() {
        m.row_mut(i).assign(&r.embedding);
        labels.push(classes[r.sequence_id as usize]);
    }
    (m, labels)
}

fn significant_singular_values(m: &Array2<f64>) -> usize {
    let dm = nalgebra::DMatrix::from_fn(m.nrows(), m.ncols(), |i, j| m[[i, j]]);
    let svd = dm.svd(false, false);
    let max = svd.singular_values.iter().cloned().fold(0.0f64, f64::max);
    svd.singular_values.iter().filter(|&&s| s > 0.01 * max).count()
}

#[test]
fn probe_all() {
    let ds = desk_dataset();
    let (mut c6, mut c7, mut c8) = (0, 0, 0);
    for seed in [11u64, 22, 33] {
        let (full, lf) = pretrain_run(&desk_config(seed, 1.0, 0.5), &ds, None).unwrap();
        let (nocl, _) = pretrain_run(&desk_config(seed, 0.0, 0.5), &ds, None).unwrap();
        let (nounif, _) = pretrain_run(&desk_config(seed, 1.0, 0.0), &ds, None).unwrap();

        let cfg = desk_config(seed, 1.0, 0.5);
        let (_, logs_pre) = decode_train_run(&cfg, &full, &ds, None).unwrap();
        let scratch = init_pretrain_checkpoint(&cfg, &ds, seed + 500).unwrap();
        let (_, logs_scr) = decode_train_run(&cfg, &scratch, &ds, None).unwrap();
        let (vp, vs) = (logs_pre.last().unwrap().val_mpjpe, logs_scr.last().unwrap().val_mpjpe);
        let p6 = vp < vs;

        let (m_full, labels) = embedding_matrix(&full, &ds);
        let (m_nocl, _) = embedding_matrix(&nocl, &ds);
        let (s_full, s_nocl) = (silhouette(&m_full, &labels), silhouette(&m_nocl, &labels));
        let p7 = s_full > s_nocl;

        let (m_nounif, _) = embedding_matrix(&nounif, &ds);
        let (k_full, k_nounif) = (significant_singular_values(&m_full), significant_singular_values(&m_nounif));
        let p8 = k_full >= k_nounif;

        c6 += p6 as u32; c7 += p7 as u32; c8 += p8 as u32;
        println!("  seed {seed}: cl_final={:.3} | c6 {vp:.1} vs {vs:.1} {} | c7 {s_full:.4} vs {s_nocl:.4} {} | c8 {k_full} vs {k_nounif} {}",
            lf.last().unwrap().l_cl,
            if p6 {"PASS"} else {"fail"}, if p7 {"PASS"} else {"fail"}, if p8 {"PASS"} else {"fail"});
    }
    println!("=> c6 {c6}/3  c7 {c7}/3  c8 {c8}/3");
}
