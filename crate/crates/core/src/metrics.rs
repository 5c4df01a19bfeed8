//! Pose evaluation metrics: MPJPE, Procrustes-aligned MPJPE and PCK, plus
//! per-joint breakdowns aggregated over a dataset.
//!
//! Procrustes alignment solves for the proper similarity transform
//! (translation, rotation, uniform scale) minimizing the Frobenius error to
//! the ground truth via the closed-form centered-cross-covariance SVD
//! solution. Reflections are forbidden: human poses are chirality-sensitive,
//! so the rotation determinant is corrected to +1.
//!
//! Metrics are reported in the dataset's native unit — millimeters for 3-d
//! poses, pixels for 2-d.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use serde::de::{MapAccess, Visitor};
use serde::ser::SerializeMap;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::skeleton::SkeletonGraph;

/// Mean per-joint position error: average Euclidean distance over joints.
pub fn mpjpe(pred: &ArrayView2<'_, f64>, gt: &ArrayView2<'_, f64>) -> Result<f64> {
    if pred.shape() != gt.shape() {
        return Err(Error::config(format!(
            "pose shape mismatch: pred {:?} vs gt {:?}",
            pred.shape(),
            gt.shape()
        )));
    }
    let j = pred.nrows();
    if j == 0 {
        return Err(Error::config("pose has no joints"));
    }
    let total: f64 = joint_distances(pred, gt).iter().sum();
    Ok(total / j as f64)
}

/// Per-joint Euclidean distances between two J x C poses of equal shape.
pub fn joint_distances(pred: &ArrayView2<'_, f64>, gt: &ArrayView2<'_, f64>) -> Array1<f64> {
    let mut out = Array1::zeros(pred.nrows());
    for (k, (p, g)) in pred.rows().into_iter().zip(gt.rows()).enumerate() {
        out[k] = p
            .iter()
            .zip(g.iter())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
    }
    out
}

fn centroid(x: &ArrayView2<'_, f64>) -> Array1<f64> {
    x.mean_axis(Axis(0)).expect("non-empty pose")
}

/// Align `pred` to `gt` with the optimal proper similarity transform
/// `s * R * (pred - centroid) + t`. Errors on degenerate (zero-variance)
/// inputs, where no rotation or scale is identifiable.
pub fn procrustes_align(
    pred: &ArrayView2<'_, f64>,
    gt: &ArrayView2<'_, f64>,
) -> Result<Array2<f64>> {
    if pred.shape() != gt.shape() {
        return Err(Error::config(format!(
            "pose shape mismatch: pred {:?} vs gt {:?}",
            pred.shape(),
            gt.shape()
        )));
    }
    let (j, c) = (pred.nrows(), pred.ncols());
    let min_joints = if c >= 3 { 3 } else { 2 };
    if j < min_joints {
        return Err(Error::config(format!(
            "Procrustes alignment needs at least {min_joints} joints for {c}-d poses, got {j}"
        )));
    }

    let (mu_p, mu_g) = (centroid(pred), centroid(gt));
    let pc = pred - &mu_p;
    let gc = gt - &mu_g;

    let var_p: f64 = pc.iter().map(|x| x * x).sum::<f64>() / j as f64;
    let var_g: f64 = gc.iter().map(|x| x * x).sum::<f64>() / j as f64;
    if var_g <= f64::EPSILON {
        return Err(Error::numeric("degenerate ground truth: all joints coincide"));
    }
    if var_p <= f64::EPSILON {
        return Err(Error::numeric("degenerate prediction: all joints coincide"));
    }

    // Cross-covariance of centered ground truth against centered prediction.
    let mut sigma = nalgebra::DMatrix::zeros(c, c);
    for k in 0..j {
        for a in 0..c {
            for b in 0..c {
                sigma[(a, b)] += gc[[k, a]] * pc[[k, b]];
            }
        }
    }
    sigma /= j as f64;

    let svd = nalgebra::SVD::new(sigma, true, true);
    let u = svd.u.as_ref().ok_or_else(|| Error::numeric("SVD failed to converge"))?;
    let v_t = svd.v_t.as_ref().ok_or_else(|| Error::numeric("SVD failed to converge"))?;

    // Reflection correction: flip the smallest singular direction when
    // det(U V^T) < 0 so that det(R) = +1.
    let mut s_diag = vec![1.0f64; c];
    if (u * v_t).determinant() < 0.0 {
        s_diag[c - 1] = -1.0;
    }

    let mut rotation = nalgebra::DMatrix::zeros(c, c);
    for a in 0..c {
        for b in 0..c {
            let mut acc = 0.0;
            for k in 0..c {
                acc += u[(a, k)] * s_diag[k] * v_t[(k, b)];
            }
            rotation[(a, b)] = acc;
        }
    }

    let trace_ds: f64 = svd
        .singular_values
        .iter()
        .zip(&s_diag)
        .map(|(sv, s)| sv * s)
        .sum();
    let scale = trace_ds / var_p;

    // aligned = s * R * pc + mu_g, applied row-wise.
    let mut out = Array2::zeros((j, c));
    for k in 0..j {
        for a in 0..c {
            let mut acc = 0.0;
            for b in 0..c {
                acc += rotation[(a, b)] * pc[[k, b]];
            }
            out[[k, a]] = scale * acc + mu_g[a];
        }
    }
    Ok(out)
}

/// MPJPE after Procrustes alignment: structural error independent of global
/// placement, orientation and scale.
pub fn pa_mpjpe(pred: &ArrayView2<'_, f64>, gt: &ArrayView2<'_, f64>) -> Result<f64> {
    let aligned = procrustes_align(pred, gt)?;
    mpjpe(&aligned.view(), gt)
}

/// Percentage of joints whose error is within `alpha` percent of the torso
/// length. `alpha` uses the percent convention: PCK@20 means `alpha = 20`.
pub fn pck(
    pred: &ArrayView2<'_, f64>,
    gt: &ArrayView2<'_, f64>,
    alpha: f64,
    torso_length: f64,
) -> Result<f64> {
    if alpha <= 0.0 {
        return Err(Error::config(format!("PCK alpha must be positive, got {alpha}")));
    }
    if torso_length <= 0.0 {
        return Err(Error::config(format!(
            "torso length must be positive, got {torso_length}"
        )));
    }
    if pred.shape() != gt.shape() {
        return Err(Error::config("pose shape mismatch in pck"));
    }
    let threshold = alpha * torso_length / 100.0;
    let dists = joint_distances(pred, gt);
    let hits = dists.iter().filter(|&&d| d <= threshold).count();
    Ok(100.0 * hits as f64 / dists.len() as f64)
}

/// Per-joint error pair in a report.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JointErrors {
    pub mpjpe: f64,
    pub pa_mpjpe: f64,
}

/// Aggregate metric report over a dataset. `pck` is keyed by alpha and
/// `per_joint` preserves the skeleton's joint order.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricReport {
    pub mpjpe: f64,
    pub pa_mpjpe: f64,
    pub pck: Vec<(f64, f64)>,
    pub per_joint: Vec<(String, JointErrors)>,
}

fn format_alpha(alpha: f64) -> String {
    if alpha.fract() == 0.0 {
        format!("{}", alpha as i64)
    } else {
        format!("{alpha}")
    }
}

impl Serialize for MetricReport {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        struct OrderedMap<'a, V: Serialize>(&'a [(String, V)]);
        impl<V: Serialize> Serialize for OrderedMap<'_, V> {
            fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
                let mut map = s.serialize_map(Some(self.0.len()))?;
                for (k, v) in self.0 {
                    map.serialize_entry(k, v)?;
                }
                map.end()
            }
        }
        let pck: Vec<(String, f64)> =
            self.pck.iter().map(|&(a, v)| (format_alpha(a), v)).collect();
        let mut map = serializer.serialize_map(Some(4))?;
        map.serialize_entry("mpjpe", &self.mpjpe)?;
        map.serialize_entry("pa_mpjpe", &self.pa_mpjpe)?;
        map.serialize_entry("pck", &OrderedMap(&pck))?;
        map.serialize_entry("per_joint", &OrderedMap(&self.per_joint))?;
        map.end()
    }
}

impl<'de> Deserialize<'de> for MetricReport {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        struct ReportVisitor;
        impl<'de> Visitor<'de> for ReportVisitor {
            type Value = MetricReport;
            fn expecting(&self, f: &mut std::fmt::Formatter) -> std::fmt::Result {
                f.write_str("a metric report object")
            }
            fn visit_map<A: MapAccess<'de>>(
                self,
                mut access: A,
            ) -> std::result::Result<Self::Value, A::Error> {
                let mut report = MetricReport {
                    mpjpe: 0.0,
                    pa_mpjpe: 0.0,
                    pck: Vec::new(),
                    per_joint: Vec::new(),
                };
                while let Some(key) = access.next_key::<String>()? {
                    match key.as_str() {
                        "mpjpe" => report.mpjpe = access.next_value()?,
                        "pa_mpjpe" => report.pa_mpjpe = access.next_value()?,
                        "pck" => {
                            let raw: Vec<(String, f64)> = {
                                let m: serde_json::Map<String, serde_json::Value> =
                                    access.next_value()?;
                                m.into_iter()
                                    .map(|(k, v)| (k, v.as_f64().unwrap_or(f64::NAN)))
                                    .collect()
                            };
                            report.pck = raw
                                .into_iter()
                                .map(|(k, v)| (k.parse::<f64>().unwrap_or(f64::NAN), v))
                                .collect();
                            report.pck.sort_by(|a, b| a.0.total_cmp(&b.0));
                        }
                        "per_joint" => {
                            let m: serde_json::Map<String, serde_json::Value> =
                                access.next_value()?;
                            report.per_joint = m
                                .into_iter()
                                .map(|(k, v)| {
                                    let je: JointErrors = serde_json::from_value(v)
                                        .unwrap_or(JointErrors { mpjpe: f64::NAN, pa_mpjpe: f64::NAN });
                                    (k, je)
                                })
                                .collect();
                        }
                        _ => {
                            let _: serde_json::Value = access.next_value()?;
                        }
                    }
                }
                Ok(report)
            }
        }
        d.deserialize_map(ReportVisitor)
    }
}

impl MetricReport {
    /// Check the report's own invariants: finite non-negative values, PCK in
    /// [0, 100] and non-decreasing in alpha.
    pub fn validate(&self) -> Result<()> {
        let finite_nonneg = |name: &str, v: f64| -> Result<()> {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::numeric(format!("{name} = {v} is not finite and >= 0")));
            }
            Ok(())
        };
        finite_nonneg("mpjpe", self.mpjpe)?;
        finite_nonneg("pa_mpjpe", self.pa_mpjpe)?;
        let mut prev = 0.0;
        for &(alpha, v) in &self.pck {
            if !(0.0..=100.0).contains(&v) {
                return Err(Error::numeric(format!("pck@{alpha} = {v} out of [0, 100]")));
            }
            if v + 1e-9 < prev {
                return Err(Error::numeric("pck must be non-decreasing in alpha"));
            }
            prev = v;
        }
        for (name, je) in &self.per_joint {
            finite_nonneg(&format!("per_joint[{name}].mpjpe"), je.mpjpe)?;
            finite_nonneg(&format!("per_joint[{name}].pa_mpjpe"), je.pa_mpjpe)?;
        }
        Ok(())
    }
}

/// Aggregate metrics over aligned prediction/ground-truth pairs. Torso
/// lengths for PCK come from each ground-truth pose via the skeleton's torso
/// definition. Samples are reduced in input order.
pub fn evaluate_dataset(
    preds: &[Array2<f64>],
    gts: &[Array2<f64>],
    skeleton: &SkeletonGraph,
    alphas: &[f64],
) -> Result<MetricReport> {
    if preds.is_empty() || preds.len() != gts.len() {
        return Err(Error::data(format!(
            "evaluation needs matching non-empty sets, got {} predictions and {} ground truths",
            preds.len(),
            gts.len()
        )));
    }
    let j = skeleton.joints();
    let n = preds.len() as f64;

    let mut sum_mpjpe = 0.0;
    let mut sum_pa = 0.0;
    let mut sum_pck = vec![0.0; alphas.len()];
    let mut per_joint_raw = Array1::<f64>::zeros(j);
    let mut per_joint_pa = Array1::<f64>::zeros(j);

    for (pred, gt) in preds.iter().zip(gts) {
        if pred.nrows() != j || gt.nrows() != j {
            return Err(Error::data(format!(
                "pose has {} joints but skeleton '{}' expects {j}",
                pred.nrows(),
                skeleton.id
            )));
        }
        let (pv, gv) = (pred.view(), gt.view());
        sum_mpjpe += mpjpe(&pv, &gv)?;
        let aligned = procrustes_align(&pv, &gv)?;
        sum_pa += mpjpe(&aligned.view(), &gv)?;
        per_joint_raw += &joint_distances(&pv, &gv);
        per_joint_pa += &joint_distances(&aligned.view(), &gv);
        let torso = skeleton.torso_length(&gv)?;
        for (k, &alpha) in alphas.iter().enumerate() {
            sum_pck[k] += pck(&pv, &gv, alpha, torso)?;
        }
    }

    let report = MetricReport {
        mpjpe: sum_mpjpe / n,
        pa_mpjpe: sum_pa / n,
        pck: alphas
            .iter()
            .zip(&sum_pck)
            .map(|(&a, &s)| (a, s / n))
            .collect(),
        per_joint: skeleton
            .joint_names
            .iter()
            .enumerate()
            .map(|(k, name)| {
                (
                    name.clone(),
                    JointErrors {
                        mpjpe: per_joint_raw[k] / n,
                        pa_mpjpe: per_joint_pa[k] / n,
                    },
                )
            })
            .collect(),
    };
    report.validate()?;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::skeleton::registry;
    use ndarray::arr2;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_pose(j: usize, c: usize, rng: &mut impl Rng) -> Array2<f64> {
        Array2::from_shape_fn((j, c), |_| rng.random_range(-200.0..200.0))
    }

    /// Random proper rotation via QR of a Gaussian matrix, det corrected.
    pub(crate) fn random_rotation(c: usize, rng: &mut impl Rng) -> Array2<f64> {
        let m = nalgebra::DMatrix::from_fn(c, c, |_, _| rng.random_range(-1.0..1.0));
        let qr = m.qr();
        let mut q = qr.q();
        if q.determinant() < 0.0 {
            for r in 0..c {
                q[(r, 0)] = -q[(r, 0)];
            }
        }
        Array2::from_shape_fn((c, c), |(a, b)| q[(a, b)])
    }

    fn apply_similarity(
        pose: &Array2<f64>,
        scale: f64,
        rot: &Array2<f64>,
        t: &[f64],
    ) -> Array2<f64> {
        let mut out = pose.dot(&rot.t()) * scale;
        for mut row in out.rows_mut() {
            for (v, d) in row.iter_mut().zip(t) {
                *v += d;
            }
        }
        out
    }

    #[test]
    fn mpjpe_identity_is_zero() {
        let p = arr2(&[[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]]);
        assert_eq!(mpjpe(&p.view(), &p.view()).unwrap(), 0.0);
    }

    #[test]
    fn mpjpe_uniform_translation_is_offset_norm() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let gt = random_pose(17, 3, &mut rng);
        let d = [3.0, -4.0, 12.0]; // norm 13
        let pred = apply_similarity(&gt, 1.0, &Array2::eye(3), &d);
        assert!((mpjpe(&pred.view(), &gt.view()).unwrap() - 13.0).abs() < 1e-9);
    }

    #[test]
    fn mpjpe_matches_per_joint_loop_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let gt = random_pose(14, 3, &mut rng);
        let pred = random_pose(14, 3, &mut rng);
        let mut acc = 0.0;
        for k in 0..14 {
            let mut sq = 0.0;
            for c in 0..3 {
                let d = pred[[k, c]] - gt[[k, c]];
                sq += d * d;
            }
            acc += sq.sqrt();
        }
        let oracle = acc / 14.0;
        assert!((mpjpe(&pred.view(), &gt.view()).unwrap() - oracle).abs() < 1e-9);
    }

    #[test]
    fn mpjpe_translation_covariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let gt = random_pose(10, 3, &mut rng);
        let pred = random_pose(10, 3, &mut rng);
        let base = mpjpe(&pred.view(), &gt.view()).unwrap();
        let d = [7.0, -2.0, 0.5];
        let p2 = apply_similarity(&pred, 1.0, &Array2::eye(3), &d);
        let g2 = apply_similarity(&gt, 1.0, &Array2::eye(3), &d);
        assert!((mpjpe(&p2.view(), &g2.view()).unwrap() - base).abs() < 1e-9);
    }

    #[test]
    fn procrustes_identity_transform() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let gt = random_pose(17, 3, &mut rng);
        let aligned = procrustes_align(&gt.view(), &gt.view()).unwrap();
        for (a, b) in aligned.iter().zip(gt.iter()) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn procrustes_removes_similarity_transforms_exactly() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for c in [2usize, 3] {
            let gt = random_pose(12, c, &mut rng);
            let rot = random_rotation(c, &mut rng);
            let t: Vec<f64> = (0..c).map(|_| rng.random_range(-50.0..50.0)).collect();
            let pred = apply_similarity(&gt, 2.0, &rot, &t);
            let aligned = procrustes_align(&pred.view(), &gt.view()).unwrap();
            for (a, b) in aligned.iter().zip(gt.iter()) {
                assert!((a - b).abs() < 1e-9, "c={c}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn procrustes_beats_random_similarity_transforms() {
        // Global optimality spot-check in the Frobenius objective.
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let gt = random_pose(17, 3, &mut rng);
        let pred = random_pose(17, 3, &mut rng);
        let aligned = procrustes_align(&pred.view(), &gt.view()).unwrap();
        let frob = |x: &Array2<f64>| -> f64 {
            x.iter().zip(gt.iter()).map(|(a, b)| (a - b) * (a - b)).sum()
        };
        let best = frob(&aligned);
        for _ in 0..1000 {
            let rot = random_rotation(3, &mut rng);
            let s = rng.random_range(0.2..3.0);
            let t: Vec<f64> = (0..3).map(|_| rng.random_range(-100.0..100.0)).collect();
            let candidate = apply_similarity(&pred, s, &rot, &t);
            assert!(frob(&candidate) + 1e-9 >= best);
        }
    }

    #[test]
    fn procrustes_rejects_degenerate_gt() {
        let pred = arr2(&[[0.0, 0.0, 1.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]]);
        let gt = Array2::from_elem((3, 3), 5.0);
        assert!(procrustes_align(&pred.view(), &gt.view()).is_err());
    }

    #[test]
    fn pa_mpjpe_zero_for_transformed_gt_and_never_worse_than_mpjpe() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let gt = random_pose(17, 3, &mut rng);
        let rot = random_rotation(3, &mut rng);
        let pred = apply_similarity(&gt, 0.7, &rot, &[10.0, 20.0, 30.0]);
        assert!(pa_mpjpe(&pred.view(), &gt.view()).unwrap() < 1e-6);

        for _ in 0..50 {
            let p = random_pose(17, 3, &mut rng);
            let g = random_pose(17, 3, &mut rng);
            let pa = pa_mpjpe(&p.view(), &g.view()).unwrap();
            let raw = mpjpe(&p.view(), &g.view()).unwrap();
            assert!(pa <= raw + 1e-9, "pa={pa} raw={raw}");
        }
    }

    #[test]
    fn pck_identity_and_counting() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let gt = random_pose(17, 3, &mut rng);
        for alpha in [20.0, 30.0, 40.0, 50.0] {
            assert_eq!(pck(&gt.view(), &gt.view(), alpha, 300.0).unwrap(), 100.0);
        }
        // Exactly one of 17 joints beyond the threshold.
        let mut pred = gt.clone();
        pred[[5, 0]] += 1000.0;
        let got = pck(&pred.view(), &gt.view(), 20.0, 300.0).unwrap();
        assert!((got - 16.0 / 17.0 * 100.0).abs() < 1e-9);
    }

    #[test]
    fn pck_monotone_in_alpha() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let gt = random_pose(17, 3, &mut rng);
        let pred = random_pose(17, 3, &mut rng);
        let torso = 250.0;
        let mut prev = 0.0;
        for alpha in [20.0, 30.0, 40.0, 50.0] {
            let v = pck(&pred.view(), &gt.view(), alpha, torso).unwrap();
            assert!(v >= prev);
            prev = v;
        }
        // As alpha grows without bound every joint is within threshold.
        assert_eq!(pck(&pred.view(), &gt.view(), 1e9, torso).unwrap(), 100.0);
    }

    #[test]
    fn pck_rejects_bad_inputs() {
        let p = arr2(&[[0.0, 0.0]]);
        assert!(pck(&p.view(), &p.view(), 0.0, 1.0).is_err());
        assert!(pck(&p.view(), &p.view(), 20.0, 0.0).is_err());
    }

    #[test]
    fn evaluate_single_perfect_sample() {
        let skel = registry("mmfi17").unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let gt = random_pose(17, 3, &mut rng);
        let report =
            evaluate_dataset(&[gt.clone()], &[gt.clone()], &skel, &[20.0, 30.0, 40.0, 50.0])
                .unwrap();
        assert!(report.mpjpe < 1e-9);
        assert!(report.pa_mpjpe < 1e-6);
        for &(_, v) in &report.pck {
            assert_eq!(v, 100.0);
        }
        for (_, je) in &report.per_joint {
            assert!(je.mpjpe < 1e-9);
        }
    }

    #[test]
    fn evaluate_identical_samples_equal_single() {
        let skel = registry("piw3d14").unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let gt = random_pose(14, 3, &mut rng);
        let pred = random_pose(14, 3, &mut rng);
        let one = evaluate_dataset(&[pred.clone()], &[gt.clone()], &skel, &[20.0]).unwrap();
        let many = evaluate_dataset(
            &vec![pred.clone(); 5],
            &vec![gt.clone(); 5],
            &skel,
            &[20.0],
        )
        .unwrap();
        assert!((one.mpjpe - many.mpjpe).abs() < 1e-12);
        assert!((one.pa_mpjpe - many.pa_mpjpe).abs() < 1e-12);
    }

    #[test]
    fn evaluate_aggregate_matches_per_sample_mean() {
        let skel = registry("mmfi17").unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let preds: Vec<Array2<f64>> = (0..6).map(|_| random_pose(17, 3, &mut rng)).collect();
        let gts: Vec<Array2<f64>> = (0..6).map(|_| random_pose(17, 3, &mut rng)).collect();
        let report = evaluate_dataset(&preds, &gts, &skel, &[20.0, 50.0]).unwrap();

        let mean_mpjpe: f64 = preds
            .iter()
            .zip(&gts)
            .map(|(p, g)| mpjpe(&p.view(), &g.view()).unwrap())
            .sum::<f64>()
            / 6.0;
        assert!((report.mpjpe - mean_mpjpe).abs() < 1e-9);

        let mean_pa: f64 = preds
            .iter()
            .zip(&gts)
            .map(|(p, g)| pa_mpjpe(&p.view(), &g.view()).unwrap())
            .sum::<f64>()
            / 6.0;
        assert!((report.pa_mpjpe - mean_pa).abs() < 1e-9);
    }

    #[test]
    fn evaluate_rejects_empty_set() {
        let skel = registry("mmfi17").unwrap();
        assert!(evaluate_dataset(&[], &[], &skel, &[20.0]).is_err());
    }

    #[test]
    fn report_serializes_to_expected_schema() {
        let skel = registry("mmfi17").unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let gt = random_pose(17, 3, &mut rng);
        let pred = random_pose(17, 3, &mut rng);
        let report =
            evaluate_dataset(&[pred], &[gt], &skel, &[20.0, 30.0, 40.0, 50.0]).unwrap();
        let json = serde_json::to_string(&report).unwrap();
        let value: serde_json::Value = serde_json::from_str(&json).unwrap();
        assert!(value["mpjpe"].is_f64());
        assert!(value["pa_mpjpe"].is_f64());
        for key in ["20", "30", "40", "50"] {
            assert!(value["pck"][key].is_f64(), "missing pck key {key}");
        }
        assert!(value["per_joint"]["Bot Torso"]["mpjpe"].is_f64());

        let back: MetricReport = serde_json::from_str(&json).unwrap();
        assert!((back.mpjpe - report.mpjpe).abs() < 1e-12);
        assert_eq!(back.pck.len(), 4);
    }
}
