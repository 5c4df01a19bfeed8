//! Deterministic synthetic CSI generator for desk-scale experiments.
//!
//! Each sequence carries a motion class with its own frequency/amplitude
//! signature. Joint trajectories are smooth sinusoids around a fixed base
//! layout; CSI amplitude per subcarrier is a deterministic sum of per-joint
//! sinusoidal path-length modulations between transmitter, joint and
//! receiver antenna, plus optional Gaussian noise.
//!
//! All randomness comes from ChaCha8 (`rand_chacha`), a named, seedable,
//! counter-based stream cipher RNG with a published algorithm, so a
//! same-seed regeneration is bit-identical and other implementations of the
//! same stream can reproduce the draws. Trigonometric values follow the
//! platform libm.
//!
//! Classes are assigned round-robin over sequences so that tiny datasets
//! stay class-balanced.

use ndarray::{Array3, Array5};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::data::{CsiDims, CsiSample, DatasetMeta, PoseSample, SequenceSpan};
use crate::error::{Error, Result};
use crate::skeleton::{registry, SkeletonGraph, TorsoAnchor, TorsoSpec};

/// Video frame rate assumed by the generator (frames per second).
const FPS: f64 = 10.0;
/// Carrier wavelength in millimeters (2.4 GHz band).
const BASE_WAVELENGTH_MM: f64 = 124.9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthConfig {
    pub num_sequences: usize,
    pub frames_per_sequence: usize,
    pub transmitters: usize,
    pub receivers: usize,
    pub antennas: usize,
    pub subcarriers: usize,
    pub temporal: usize,
    pub joints: usize,
    pub coords: usize,
    pub motion_classes: usize,
    pub noise_std: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            num_sequences: 8,
            frames_per_sequence: 50,
            transmitters: 1,
            receivers: 1,
            antennas: 3,
            subcarriers: 32,
            temporal: 16,
            joints: 17,
            coords: 3,
            motion_classes: 4,
            noise_std: 0.25,
            seed: 7,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("num_sequences", self.num_sequences),
            ("frames_per_sequence", self.frames_per_sequence),
            ("transmitters", self.transmitters),
            ("receivers", self.receivers),
            ("antennas", self.antennas),
            ("subcarriers", self.subcarriers),
            ("temporal", self.temporal),
            ("joints", self.joints),
            ("motion_classes", self.motion_classes),
        ] {
            if v == 0 {
                return Err(Error::config(format!("synth.{name} must be positive")));
            }
        }
        if !(2..=3).contains(&self.coords) {
            return Err(Error::config(format!(
                "synth.coords must be 2 or 3, got {}",
                self.coords
            )));
        }
        if !self.noise_std.is_finite() || self.noise_std < 0.0 {
            return Err(Error::config(format!(
                "synth.noise_std must be >= 0, got {}",
                self.noise_std
            )));
        }
        Ok(())
    }

    pub fn csi_dims(&self) -> CsiDims {
        CsiDims {
            transmitters: self.transmitters,
            receivers: self.receivers,
            antennas: self.antennas,
            subcarriers: self.subcarriers,
            temporal: self.temporal,
        }
    }
}

/// Skeleton for a configured joint count: one of the built-ins when the
/// count matches, otherwise a simple chain.
pub fn skeleton_for_joints(joints: usize) -> Result<SkeletonGraph> {
    match joints {
        17 => registry("mmfi17"),
        18 => registry("wipose18"),
        14 => registry("piw3d14"),
        j => {
            let names = (0..j).map(|i| format!("J{i}")).collect();
            let edges = (0..j.saturating_sub(1)).map(|i| (i, i + 1)).collect();
            let torso = if j >= 2 {
                TorsoSpec { upper: TorsoAnchor::Joint(0), lower: TorsoAnchor::Joint(j - 1) }
            } else {
                TorsoSpec { upper: TorsoAnchor::Joint(0), lower: TorsoAnchor::Joint(0) }
            };
            SkeletonGraph::new(format!("chain{j}"), names, edges, torso)
        }
    }
}

/// Fixed base position of joint `j` along coordinate `dim`, millimeters.
fn base_position(j: usize, dim: usize) -> f64 {
    400.0 * ((j + 1) as f64 * 1.7 * (dim + 1) as f64 + 0.9 * dim as f64).sin()
}

/// Class-specific rest-posture offset: each motion class holds a different
/// mean pose, so frames of one class occupy a distinct pose-space region.
fn class_offset(j: usize, dim: usize, class: u32) -> f64 {
    60.0 * (0.9 * (j + 2) as f64 * (dim as f64 + 1.3) * (class as f64 + 1.7) + class as f64).sin()
}

/// Per-class motion frequency in Hz.
fn class_frequency(class: u32) -> f64 {
    0.25 + 0.2 * class as f64
}

/// Per-class motion amplitude in millimeters.
fn class_amplitude(class: u32) -> f64 {
    15.0 + 5.0 * class as f64
}

/// Deterministic phase offset per (joint, dim, class).
fn joint_phase(j: usize, dim: usize, class: u32) -> f64 {
    let h = (j + 1) * (dim + 2) * (class as usize + 3);
    (h % 16) as f64 / 16.0 * std::f64::consts::TAU
}

/// Joint position at continuous time `u` seconds for a sequence of the given
/// class and per-sequence phase.
fn joint_position(j: usize, dim: usize, class: u32, seq_phase: f64, u: f64) -> f64 {
    base_position(j, dim)
        + class_offset(j, dim, class)
        + class_amplitude(class)
            * (std::f64::consts::TAU * class_frequency(class) * u
                + joint_phase(j, dim, class)
                + seq_phase)
                .sin()
}

fn tx_position(e: usize) -> [f64; 3] {
    [-1500.0 - 400.0 * e as f64, -2500.0, 900.0 + 120.0 * e as f64]
}

fn rx_antenna_position(r: usize, a: usize) -> [f64; 3] {
    // Receiver array along x with roughly half-wavelength antenna spacing.
    [1500.0 + 400.0 * r as f64 + 55.0 * a as f64, 2500.0, 1100.0 + 120.0 * r as f64]
}

fn subcarrier_wavelength(s: usize, total: usize) -> f64 {
    // Subcarriers spread a few percent around the carrier.
    BASE_WAVELENGTH_MM / (1.0 + 0.03 * s as f64 / total as f64)
}

/// Slow per-antenna receive-gain modulation driven by the reference joint's
/// path length. Shared across subcarriers and timesteps of one antenna, so
/// body motion stays visible even in patch-pooled summaries.
fn antenna_gain(reference_joint: [f64; 3], rx: [f64; 3], antenna: usize) -> f64 {
    const GAIN_WAVELENGTH_MM: f64 = 120.0;
    1.0 + 0.35
        * (std::f64::consts::TAU * dist(reference_joint, rx) / GAIN_WAVELENGTH_MM
            + 0.7 * antenna as f64)
            .sin()
}

fn dist(a: [f64; 3], b: [f64; 3]) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    let dz = a[2] - b[2];
    (dx * dx + dy * dy + dz * dz).sqrt()
}

/// Per-joint reflection weight.
fn joint_weight(j: usize, joints: usize) -> f64 {
    (1.0 + 0.4 * ((j + 1) as f64 * 1.3).sin()) / joints as f64
}

/// Generate a labeled synthetic dataset. Fully reproducible from
/// `config.seed`; the same seed yields bit-identical output.
pub fn synth_generate(
    config: &SynthConfig,
) -> Result<(DatasetMeta, Vec<CsiSample>, Vec<PoseSample>)> {
    config.validate()?;
    let skeleton = skeleton_for_joints(config.joints)?;
    let dims = config.csi_dims();
    let noise = if config.noise_std > 0.0 {
        Some(Normal::new(0.0, config.noise_std).expect("validated std"))
    } else {
        None
    };

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut samples = Vec::with_capacity(config.num_sequences * config.frames_per_sequence);
    let mut poses = Vec::with_capacity(samples.capacity());
    let mut sequences = Vec::with_capacity(config.num_sequences);
    let mut classes = Vec::with_capacity(config.num_sequences);

    for q in 0..config.num_sequences {
        let class = (q % config.motion_classes) as u32;
        // Sequences of one class share an anchor phase (they perform the
        // same motion) with a small per-sequence jitter.
        let seq_phase: f64 = std::f64::consts::TAU * class as f64 / config.motion_classes as f64
            + rng.random_range(-0.3..0.3);
        sequences.push(SequenceSpan { id: q as u64, len: config.frames_per_sequence });
        classes.push(class);

        for frame in 0..config.frames_per_sequence {
            // Pose label at the frame instant.
            let mut pose = Array3::zeros((1, config.joints, config.coords));
            let u_frame = frame as f64 / FPS;
            for j in 0..config.joints {
                for dim in 0..config.coords {
                    pose[[0, j, dim]] = joint_position(j, dim, class, seq_phase, u_frame) as f32;
                }
            }
            poses.push(PoseSample::new(pose, skeleton.id.clone())?);

            // CSI amplitude over the frame's sub-interval.
            let mut csi = Array5::zeros((
                dims.transmitters,
                dims.receivers,
                dims.antennas,
                dims.subcarriers,
                dims.temporal,
            ));
            for tau in 0..dims.temporal {
                let u = (frame as f64 + tau as f64 / dims.temporal as f64) / FPS;
                // Joint positions at the sub-frame time; 2-d poses lie in
                // the z = 0 plane for path-length purposes.
                let joints_at: Vec<[f64; 3]> = (0..config.joints)
                    .map(|j| {
                        let mut p = [0.0f64; 3];
                        for dim in 0..config.coords.min(3) {
                            p[dim] = joint_position(j, dim, class, seq_phase, u);
                        }
                        p
                    })
                    .collect();
                for e in 0..dims.transmitters {
                    let tx = tx_position(e);
                    for r in 0..dims.receivers {
                        for a in 0..dims.antennas {
                            let rx = rx_antenna_position(r, a);
                            let gain = antenna_gain(joints_at[0], rx, a);
                            for s in 0..dims.subcarriers {
                                let lambda = subcarrier_wavelength(s, dims.subcarriers);
                                let mut amp = 2.0;
                                for (j, pj) in joints_at.iter().enumerate() {
                                    let path = dist(tx, *pj) + dist(*pj, rx);
                                    amp += joint_weight(j, config.joints)
                                        * (std::f64::consts::TAU * path / lambda).cos();
                                }
                                amp *= gain;
                                if let Some(n) = &noise {
                                    amp += n.sample(&mut rng);
                                }
                                csi[[e, r, a, s, tau]] = amp as f32;
                            }
                        }
                    }
                }
            }
            samples.push(CsiSample::new(csi, q as u64, frame)?);
        }
    }

    let meta = DatasetMeta {
        csi_dims: dims,
        persons: 1,
        joints: config.joints,
        coords: config.coords,
        skeleton_id: skeleton.id.clone(),
        joint_names: skeleton.joint_names.clone(),
        sequences,
        num_samples: samples.len(),
        sequence_classes: Some(classes),
    };
    meta.validate()?;
    Ok((meta, samples, poses))
}
