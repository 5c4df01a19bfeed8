//! CSI and pose data model.
//!
//! A raw CSI amplitude sample is a dense five-axis tensor over
//! (transmitters, receivers, antennas, subcarriers, temporal resolution).
//! For the encoder it is reshaped losslessly into an image-like layout:
//! antennas become channels, subcarriers from all device pairs concatenate
//! into the height axis (transmitter-major, then receiver, then subcarrier),
//! and the temporal axis becomes width.

use ndarray::{Array3, Array5};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Axis sizes of a raw CSI tensor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CsiDims {
    /// Transmitter count (E).
    pub transmitters: usize,
    /// Receiver count (R).
    pub receivers: usize,
    /// Antennas per receiver (A).
    pub antennas: usize,
    /// Subcarriers per device pair (S).
    pub subcarriers: usize,
    /// CSI snapshots per pose frame (T), the WiFi/video sampling-rate ratio.
    pub temporal: usize,
}

impl CsiDims {
    pub fn new(e: usize, r: usize, a: usize, s: usize, t: usize) -> Result<Self> {
        let dims = CsiDims {
            transmitters: e,
            receivers: r,
            antennas: a,
            subcarriers: s,
            temporal: t,
        };
        dims.validate()?;
        Ok(dims)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("transmitters", self.transmitters),
            ("receivers", self.receivers),
            ("antennas", self.antennas),
            ("subcarriers", self.subcarriers),
            ("temporal", self.temporal),
        ] {
            if v == 0 {
                return Err(Error::config(format!("CSI dimension '{name}' must be positive")));
            }
        }
        Ok(())
    }

    /// Total elements of one raw sample.
    pub fn sample_len(&self) -> usize {
        self.transmitters * self.receivers * self.antennas * self.subcarriers * self.temporal
    }

    /// Height of the image-like layout: E*R*S concatenated subcarriers.
    pub fn image_height(&self) -> usize {
        self.transmitters * self.receivers * self.subcarriers
    }
}

/// One raw CSI amplitude sample together with its position in an action
/// sequence. `frame_index` runs 0,1,2,... without gaps within a sequence.
#[derive(Debug, Clone)]
pub struct CsiSample {
    /// Amplitude tensor, shape E x R x A x S x T.
    pub values: Array5<f32>,
    pub sequence_id: u64,
    pub frame_index: usize,
}

impl CsiSample {
    pub fn new(values: Array5<f32>, sequence_id: u64, frame_index: usize) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::data("CSI sample contains non-finite values"));
        }
        Ok(CsiSample { values, sequence_id, frame_index })
    }

    pub fn dims(&self) -> CsiDims {
        let s = self.values.shape();
        CsiDims {
            transmitters: s[0],
            receivers: s[1],
            antennas: s[2],
            subcarriers: s[3],
            temporal: s[4],
        }
    }
}

/// CSI sample reshaped for the encoder: antennas x (E*R*S) x T.
#[derive(Debug, Clone)]
pub struct ImageLikeCsi {
    pub values: Array3<f32>,
}

impl ImageLikeCsi {
    pub fn channels(&self) -> usize {
        self.values.shape()[0]
    }

    pub fn height(&self) -> usize {
        self.values.shape()[1]
    }

    pub fn width(&self) -> usize {
        self.values.shape()[2]
    }
}

/// Reshape a raw CSI sample into the image-like layout. Subcarrier rows are
/// ordered transmitter-major, then receiver, then subcarrier; the antenna
/// axis maps to image channels and the temporal axis to image width.
pub fn reshape_to_image(sample: &CsiSample) -> ImageLikeCsi {
    let d = sample.dims();
    let mut out = Array3::zeros((d.antennas, d.image_height(), d.temporal));
    for e in 0..d.transmitters {
        for r in 0..d.receivers {
            for a in 0..d.antennas {
                for s in 0..d.subcarriers {
                    let row = (e * d.receivers + r) * d.subcarriers + s;
                    for t in 0..d.temporal {
                        out[[a, row, t]] = sample.values[[e, r, a, s, t]];
                    }
                }
            }
        }
    }
    ImageLikeCsi { values: out }
}

/// Exact inverse of [`reshape_to_image`].
pub fn inverse_reshape(
    img: &ImageLikeCsi,
    dims: &CsiDims,
    sequence_id: u64,
    frame_index: usize,
) -> Result<CsiSample> {
    let shape = img.values.shape();
    if shape != [dims.antennas, dims.image_height(), dims.temporal] {
        return Err(Error::data(format!(
            "image shape {:?} does not match dims (A={}, E*R*S={}, T={})",
            shape,
            dims.antennas,
            dims.image_height(),
            dims.temporal
        )));
    }
    let mut out = Array5::zeros((
        dims.transmitters,
        dims.receivers,
        dims.antennas,
        dims.subcarriers,
        dims.temporal,
    ));
    for e in 0..dims.transmitters {
        for r in 0..dims.receivers {
            for a in 0..dims.antennas {
                for s in 0..dims.subcarriers {
                    let row = (e * dims.receivers + r) * dims.subcarriers + s;
                    for t in 0..dims.temporal {
                        out[[e, r, a, s, t]] = img.values[[a, row, t]];
                    }
                }
            }
        }
    }
    Ok(CsiSample { values: out, sequence_id, frame_index })
}

/// Ground-truth (or predicted) pose, shape persons x joints x coords.
/// Units are millimeters for 3-d poses and pixels for 2-d.
#[derive(Debug, Clone)]
pub struct PoseSample {
    pub values: Array3<f32>,
    pub skeleton_id: String,
}

impl PoseSample {
    pub fn new(values: Array3<f32>, skeleton_id: impl Into<String>) -> Result<Self> {
        let shape = values.shape();
        if shape[0] < 1 {
            return Err(Error::data("pose must contain at least one person"));
        }
        if !(2..=3).contains(&shape[2]) {
            return Err(Error::data(format!("pose coord dim must be 2 or 3, got {}", shape[2])));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::data("pose contains non-finite values"));
        }
        Ok(PoseSample { values, skeleton_id: skeleton_id.into() })
    }

    pub fn persons(&self) -> usize {
        self.values.shape()[0]
    }

    pub fn joints(&self) -> usize {
        self.values.shape()[1]
    }

    pub fn coords(&self) -> usize {
        self.values.shape()[2]
    }
}

/// One contiguous action sequence inside a dataset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SequenceSpan {
    pub id: u64,
    pub len: usize,
}

/// Dataset-level metadata: tensor dimensions, skeleton identity, sequence
/// boundaries (samples are stored sequence-major, frames consecutive).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub csi_dims: CsiDims,
    /// Persons per pose (M). Only M=1 is supported by the decoders.
    pub persons: usize,
    /// Joints per pose (J).
    pub joints: usize,
    /// Coordinate dimension (C): 2 or 3.
    pub coords: usize,
    pub skeleton_id: String,
    pub joint_names: Vec<String>,
    pub sequences: Vec<SequenceSpan>,
    pub num_samples: usize,
    /// Motion class per sequence (aligned with `sequences`); present for
    /// labeled synthetic data, absent for real recordings.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sequence_classes: Option<Vec<u32>>,
}

impl DatasetMeta {
    pub fn validate(&self) -> Result<()> {
        self.csi_dims.validate()?;
        if self.persons < 1 {
            return Err(Error::data("persons must be >= 1"));
        }
        if !(2..=3).contains(&self.coords) {
            return Err(Error::data(format!("coords must be 2 or 3, got {}", self.coords)));
        }
        if self.joint_names.len() != self.joints {
            return Err(Error::data(format!(
                "joint_names has {} entries but joints = {}",
                self.joint_names.len(),
                self.joints
            )));
        }
        let total: usize = self.sequences.iter().map(|s| s.len).sum();
        if total != self.num_samples {
            return Err(Error::data(format!(
                "sequence lengths sum to {total} but num_samples = {}",
                self.num_samples
            )));
        }
        let mut ids: Vec<u64> = self.sequences.iter().map(|s| s.id).collect();
        ids.sort_unstable();
        ids.dedup();
        if ids.len() != self.sequences.len() {
            return Err(Error::data(
                "duplicate sequence id: frame indices would not be consecutive within a sequence",
            ));
        }
        if let Some(classes) = &self.sequence_classes {
            if classes.len() != self.sequences.len() {
                return Err(Error::data("sequence_classes length does not match sequences"));
            }
        }
        Ok(())
    }

    /// Map a flat sample index to (sequence_id, frame_index).
    pub fn locate(&self, index: usize) -> Result<(u64, usize)> {
        let mut base = 0;
        for span in &self.sequences {
            if index < base + span.len {
                return Ok((span.id, index - base));
            }
            base += span.len;
        }
        Err(Error::data(format!(
            "sample index {index} out of range (N = {})",
            self.num_samples
        )))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sample_with_dims(e: usize, r: usize, a: usize, s: usize, t: usize) -> CsiSample {
        let values = Array5::from_shape_fn((e, r, a, s, t), |(i, j, k, l, m)| {
            (i * 1000 + j * 500 + k * 100 + l * 10 + m) as f32 * 0.01
        });
        CsiSample::new(values, 0, 0).unwrap()
    }

    #[test]
    fn reshape_shape_contract() {
        let sample = sample_with_dims(2, 1, 2, 4, 5);
        let img = reshape_to_image(&sample);
        assert_eq!(img.values.shape(), &[2, 8, 5]);
    }

    #[test]
    fn mmfi_geometry_maps_antennas_to_channels() {
        // One transmitter, one receiver with three antennas.
        let s = 6;
        let sample = sample_with_dims(1, 1, 3, s, 4);
        let img = reshape_to_image(&sample);
        assert_eq!(img.channels(), 3);
        assert_eq!(img.height(), s);
    }

    #[test]
    fn subcarrier_rows_are_transmitter_major() {
        let sample = sample_with_dims(2, 2, 1, 3, 1);
        let img = reshape_to_image(&sample);
        // Row for (e, r, s) must be (e*R + r)*S + s.
        assert_eq!(img.values[[0, 0, 0]], sample.values[[0, 0, 0, 0, 0]]);
        assert_eq!(img.values[[0, 3, 0]], sample.values[[0, 1, 0, 0, 0]]);
        assert_eq!(img.values[[0, 6, 0]], sample.values[[1, 0, 0, 0, 0]]);
        assert_eq!(img.values[[0, 10, 0]], sample.values[[1, 1, 0, 1, 0]]);
    }

    #[test]
    fn inverse_reshape_rejects_wrong_dims() {
        let sample = sample_with_dims(1, 1, 2, 3, 4);
        let img = reshape_to_image(&sample);
        let bad = CsiDims::new(1, 1, 2, 4, 4).unwrap();
        assert!(inverse_reshape(&img, &bad, 0, 0).is_err());
    }

    #[test]
    fn non_finite_csi_rejected() {
        let mut values = Array5::zeros((1, 1, 1, 2, 2));
        values[[0, 0, 0, 0, 0]] = f32::NAN;
        assert!(CsiSample::new(values, 0, 0).is_err());
    }

    #[test]
    fn meta_validation_catches_length_mismatch() {
        let meta = DatasetMeta {
            csi_dims: CsiDims::new(1, 1, 1, 2, 2).unwrap(),
            persons: 1,
            joints: 2,
            coords: 3,
            skeleton_id: "x".into(),
            joint_names: vec!["a".into(), "b".into()],
            sequences: vec![SequenceSpan { id: 0, len: 3 }, SequenceSpan { id: 1, len: 4 }],
            num_samples: 8,
            sequence_classes: None,
        };
        assert!(meta.validate().is_err());
    }

    #[test]
    fn meta_validation_catches_duplicate_sequence_ids() {
        let meta = DatasetMeta {
            csi_dims: CsiDims::new(1, 1, 1, 2, 2).unwrap(),
            persons: 1,
            joints: 1,
            coords: 2,
            skeleton_id: "x".into(),
            joint_names: vec!["a".into()],
            sequences: vec![SequenceSpan { id: 7, len: 3 }, SequenceSpan { id: 7, len: 4 }],
            num_samples: 7,
            sequence_classes: None,
        };
        let err = meta.validate().unwrap_err().to_string();
        assert!(err.contains("consecutive"), "unexpected message: {err}");
    }

    proptest! {
        #[test]
        fn reshape_roundtrip_is_identity(
            e in 1usize..3, r in 1usize..3, a in 1usize..4, s in 1usize..6, t in 1usize..6,
        ) {
            let sample = sample_with_dims(e, r, a, s, t);
            let img = reshape_to_image(&sample);
            let back = inverse_reshape(&img, &sample.dims(), sample.sequence_id, sample.frame_index).unwrap();
            prop_assert_eq!(back.values, sample.values);
        }
    }
}
