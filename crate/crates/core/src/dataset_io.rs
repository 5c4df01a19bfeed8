//! Dataset directory format and loader.
//!
//! A dataset directory holds three files:
//!
//! - `meta.json` — dimensions, skeleton (names, edges, torso), sequence
//!   boundaries, optional per-sequence class labels, `format_version`.
//! - `csi.f32`  — N*E*R*A*S*T little-endian float32 values, C order.
//! - `pose.f32` — N*M*J*C little-endian float32 values, C order.
//!
//! Samples are stored sequence-major; frame indices within a sequence are
//! consecutive by construction. The loader validates metadata invariants and
//! exact payload byte counts before anything is read.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use ndarray::{Array3, Array5};
use serde::{Deserialize, Serialize};

use crate::data::{CsiSample, DatasetMeta, PoseSample, SequenceSpan};
use crate::error::{Error, Result};
use crate::skeleton::{SkeletonFile, SkeletonGraph};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct MetaFile {
    format_version: u32,
    csi_dims: crate::data::CsiDims,
    persons: usize,
    joints: usize,
    coords: usize,
    skeleton: SkeletonFile,
    sequences: Vec<SequenceSpan>,
    num_samples: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    sequence_classes: Option<Vec<u32>>,
}

/// An in-memory dataset: metadata, skeleton and both payloads.
#[derive(Debug, Clone)]
pub struct Dataset {
    meta: DatasetMeta,
    skeleton: SkeletonGraph,
    csi: Vec<f32>,
    pose: Vec<f32>,
}

fn write_f32(path: &Path, values: impl Iterator<Item = f32>) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(file);
    for v in values {
        w.write_all(&v.to_le_bytes()).map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn read_f32(path: &Path, expected: usize) -> Result<Vec<f32>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() != expected * 4 {
        return Err(Error::data(format!(
            "{}: expected {} bytes ({expected} float32 values), found {}",
            path.display(),
            expected * 4,
            bytes.len()
        )));
    }
    Ok(bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect())
}

/// Write a dataset directory. Samples and poses must be in stored
/// (sequence-major) order matching the metadata.
pub fn save_dataset(
    dir: &Path,
    meta: &DatasetMeta,
    skeleton: &SkeletonGraph,
    samples: &[CsiSample],
    poses: &[PoseSample],
) -> Result<()> {
    meta.validate()?;
    if samples.len() != meta.num_samples || poses.len() != meta.num_samples {
        return Err(Error::data(format!(
            "meta declares {} samples but received {} CSI and {} poses",
            meta.num_samples,
            samples.len(),
            poses.len()
        )));
    }
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;

    let meta_file = MetaFile {
        format_version: FORMAT_VERSION,
        csi_dims: meta.csi_dims,
        persons: meta.persons,
        joints: meta.joints,
        coords: meta.coords,
        skeleton: skeleton.to_file(),
        sequences: meta.sequences.clone(),
        num_samples: meta.num_samples,
        sequence_classes: meta.sequence_classes.clone(),
    };
    let json = serde_json::to_string_pretty(&meta_file)
        .map_err(|e| Error::data(format!("failed to serialize meta.json: {e}")))?;
    fs::write(dir.join("meta.json"), json).map_err(|e| Error::io(dir.join("meta.json"), e))?;

    write_f32(
        &dir.join("csi.f32"),
        samples.iter().flat_map(|s| s.values.iter().copied()),
    )?;
    write_f32(
        &dir.join("pose.f32"),
        poses.iter().flat_map(|p| p.values.iter().copied()),
    )?;
    Ok(())
}

/// Load and validate a dataset directory.
pub fn load_dataset(dir: &Path) -> Result<Dataset> {
    let meta_path = dir.join("meta.json");
    if !meta_path.exists() {
        return Err(Error::data(format!("missing dataset file {}", meta_path.display())));
    }
    let raw = fs::read_to_string(&meta_path).map_err(|e| Error::io(&meta_path, e))?;
    let file: MetaFile = serde_json::from_str(&raw)
        .map_err(|e| Error::data(format!("{}: invalid metadata: {e}", meta_path.display())))?;
    if file.format_version != FORMAT_VERSION {
        return Err(Error::data(format!(
            "unsupported dataset format_version {} (expected {FORMAT_VERSION})",
            file.format_version
        )));
    }

    let skeleton = SkeletonGraph::from_file(file.skeleton)?;
    let meta = DatasetMeta {
        csi_dims: file.csi_dims,
        persons: file.persons,
        joints: file.joints,
        coords: file.coords,
        skeleton_id: skeleton.id.clone(),
        joint_names: skeleton.joint_names.clone(),
        sequences: file.sequences,
        num_samples: file.num_samples,
        sequence_classes: file.sequence_classes,
    };
    meta.validate()?;
    if skeleton.joints() != meta.joints {
        return Err(Error::data(format!(
            "skeleton '{}' has {} joints but meta declares {}",
            skeleton.id,
            skeleton.joints(),
            meta.joints
        )));
    }

    for name in ["csi.f32", "pose.f32"] {
        if !dir.join(name).exists() {
            return Err(Error::data(format!("missing dataset file {}", dir.join(name).display())));
        }
    }
    let csi = read_f32(&dir.join("csi.f32"), meta.num_samples * meta.csi_dims.sample_len())?;
    let pose = read_f32(
        &dir.join("pose.f32"),
        meta.num_samples * meta.persons * meta.joints * meta.coords,
    )?;
    Ok(Dataset { meta, skeleton, csi, pose })
}

impl Dataset {
    /// Assemble an in-memory dataset without touching disk.
    pub fn from_parts(
        meta: DatasetMeta,
        skeleton: SkeletonGraph,
        samples: &[CsiSample],
        poses: &[PoseSample],
    ) -> Result<Self> {
        meta.validate()?;
        if samples.len() != meta.num_samples || poses.len() != meta.num_samples {
            return Err(Error::data("sample count does not match metadata"));
        }
        let csi = samples.iter().flat_map(|s| s.values.iter().copied()).collect();
        let pose = poses.iter().flat_map(|p| p.values.iter().copied()).collect();
        Ok(Dataset { meta, skeleton, csi, pose })
    }

    pub fn meta(&self) -> &DatasetMeta {
        &self.meta
    }

    pub fn skeleton(&self) -> &SkeletonGraph {
        &self.skeleton
    }

    pub fn len(&self) -> usize {
        self.meta.num_samples
    }

    pub fn is_empty(&self) -> bool {
        self.meta.num_samples == 0
    }

    /// CSI sample at flat index `i` with its derived sequence position.
    pub fn csi_sample(&self, i: usize) -> Result<CsiSample> {
        let (sequence_id, frame_index) = self.meta.locate(i)?;
        let d = self.meta.csi_dims;
        let len = d.sample_len();
        let slice = &self.csi[i * len..(i + 1) * len];
        let values = Array5::from_shape_vec(
            (d.transmitters, d.receivers, d.antennas, d.subcarriers, d.temporal),
            slice.to_vec(),
        )
        .expect("validated payload length");
        CsiSample::new(values, sequence_id, frame_index)
    }

    /// Pose sample at flat index `i`.
    pub fn pose_sample(&self, i: usize) -> Result<PoseSample> {
        if i >= self.meta.num_samples {
            return Err(Error::data(format!("sample index {i} out of range")));
        }
        let len = self.meta.persons * self.meta.joints * self.meta.coords;
        let slice = &self.pose[i * len..(i + 1) * len];
        let values = Array3::from_shape_vec(
            (self.meta.persons, self.meta.joints, self.meta.coords),
            slice.to_vec(),
        )
        .expect("validated payload length");
        PoseSample::new(values, self.meta.skeleton_id.clone())
    }

    /// Iterate `(CsiSample, PoseSample)` pairs in stored order.
    pub fn iter_samples(&self) -> impl Iterator<Item = Result<(CsiSample, PoseSample)>> + '_ {
        (0..self.len()).map(move |i| Ok((self.csi_sample(i)?, self.pose_sample(i)?)))
    }

    /// Ground-truth pose of person 0 as a J x C f64 matrix.
    pub fn pose_matrix(&self, i: usize) -> Result<ndarray::Array2<f64>> {
        let pose = self.pose_sample(i)?;
        let (j, c) = (self.meta.joints, self.meta.coords);
        Ok(ndarray::Array2::from_shape_fn((j, c), |(a, b)| pose.values[[0, a, b]] as f64))
    }

    /// Raw f32 payloads, used by byte-exact round-trip checks.
    pub fn payloads(&self) -> (&[f32], &[f32]) {
        (&self.csi, &self.pose)
    }
}

/// Paths of the three files in a dataset directory.
pub fn dataset_files(dir: &Path) -> [PathBuf; 3] {
    [dir.join("meta.json"), dir.join("csi.f32"), dir.join("pose.f32")]
}
