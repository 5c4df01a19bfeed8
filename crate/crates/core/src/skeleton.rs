//! Skeleton graphs: joint names, kinematic edges, adjacency/degree matrices
//! and the symmetric GCN normalization operator.
//!
//! Three skeletons ship built in: `mmfi17` (17 joints, 3-d), `wipose18`
//! (18 joints, 2-d), `piw3d14` (14 joints, 3-d). Custom skeletons load from
//! JSON files carrying `joint_names`, `edges` and a torso definition used by
//! the PCK metric; built-ins can be overridden the same way.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Endpoint of the torso segment: either a single joint or the midpoint of
/// two joints (used when a skeleton has no root-hip joint).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TorsoAnchor {
    Joint(usize),
    Midpoint(usize, usize),
}

/// Per-skeleton torso definition: the segment whose length scales PCK
/// thresholds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TorsoSpec {
    pub upper: TorsoAnchor,
    pub lower: TorsoAnchor,
}

/// A validated skeleton: connected, undirected, no self loops.
#[derive(Debug, Clone, PartialEq)]
pub struct SkeletonGraph {
    pub id: String,
    pub joint_names: Vec<String>,
    pub edges: Vec<(usize, usize)>,
    pub torso: TorsoSpec,
}

/// Serialized form of a skeleton file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SkeletonFile {
    pub id: String,
    pub joint_names: Vec<String>,
    pub edges: Vec<(usize, usize)>,
    pub torso: TorsoSpec,
}

impl SkeletonGraph {
    pub fn new(
        id: impl Into<String>,
        joint_names: Vec<String>,
        edges: Vec<(usize, usize)>,
        torso: TorsoSpec,
    ) -> Result<Self> {
        let g = SkeletonGraph { id: id.into(), joint_names, edges, torso };
        g.validate()?;
        Ok(g)
    }

    pub fn joints(&self) -> usize {
        self.joint_names.len()
    }

    fn validate(&self) -> Result<()> {
        let j = self.joints();
        if j == 0 {
            return Err(Error::config("skeleton must have at least one joint"));
        }
        for &(a, b) in &self.edges {
            if a >= j || b >= j {
                return Err(Error::config(format!(
                    "edge ({a}, {b}) references a joint outside 0..{j}"
                )));
            }
            if a == b {
                return Err(Error::config(format!("self loop at joint {a} is not allowed")));
            }
        }
        for anchor in [self.torso.upper, self.torso.lower] {
            let ok = match anchor {
                TorsoAnchor::Joint(i) => i < j,
                TorsoAnchor::Midpoint(i, k) => i < j && k < j,
            };
            if !ok {
                return Err(Error::config("torso anchor references a joint out of range"));
            }
        }
        // Connectivity via BFS over the undirected edge set.
        if j > 1 {
            let mut adj = vec![Vec::new(); j];
            for &(a, b) in &self.edges {
                adj[a].push(b);
                adj[b].push(a);
            }
            let mut seen = vec![false; j];
            let mut queue = std::collections::VecDeque::from([0usize]);
            seen[0] = true;
            while let Some(v) = queue.pop_front() {
                for &w in &adj[v] {
                    if !seen[w] {
                        seen[w] = true;
                        queue.push_back(w);
                    }
                }
            }
            if seen.iter().any(|&s| !s) {
                return Err(Error::config(format!(
                    "skeleton '{}' is disconnected",
                    self.id
                )));
            }
        }
        Ok(())
    }

    /// Binary adjacency matrix A with zero diagonal; symmetric by
    /// construction.
    pub fn adjacency(&self) -> Array2<f64> {
        let j = self.joints();
        let mut a = Array2::zeros((j, j));
        for &(u, v) in &self.edges {
            a[[u, v]] = 1.0;
            a[[v, u]] = 1.0;
        }
        a
    }

    /// Diagonal degree matrix of the self-loop-augmented adjacency A + I.
    pub fn degree(&self) -> Array2<f64> {
        let a = self.adjacency();
        let j = self.joints();
        let mut d = Array2::zeros((j, j));
        for i in 0..j {
            d[[i, i]] = a.row(i).sum() + 1.0;
        }
        d
    }

    /// Symmetric GCN propagation operator `D^{-1/2} (A + I) D^{-1/2}`.
    pub fn normalized_operator(&self) -> Array2<f64> {
        let j = self.joints();
        let mut a_hat = self.adjacency();
        for i in 0..j {
            a_hat[[i, i]] = 1.0;
        }
        let inv_sqrt: Vec<f64> = (0..j)
            .map(|i| 1.0 / a_hat.row(i).sum().sqrt())
            .collect();
        let mut out = a_hat;
        for i in 0..j {
            for k in 0..j {
                out[[i, k]] *= inv_sqrt[i] * inv_sqrt[k];
            }
        }
        out
    }

    /// Euclidean length of the torso segment in a J x C pose.
    pub fn torso_length(&self, pose: &ndarray::ArrayView2<'_, f64>) -> Result<f64> {
        let point = |anchor: TorsoAnchor| -> Vec<f64> {
            match anchor {
                TorsoAnchor::Joint(i) => pose.row(i).to_vec(),
                TorsoAnchor::Midpoint(i, k) => pose
                    .row(i)
                    .iter()
                    .zip(pose.row(k))
                    .map(|(a, b)| 0.5 * (a + b))
                    .collect(),
            }
        };
        let (u, l) = (point(self.torso.upper), point(self.torso.lower));
        let len: f64 = u
            .iter()
            .zip(&l)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        if len <= 0.0 {
            return Err(Error::numeric("degenerate pose: torso length is zero"));
        }
        Ok(len)
    }

    pub fn to_file(&self) -> SkeletonFile {
        SkeletonFile {
            id: self.id.clone(),
            joint_names: self.joint_names.clone(),
            edges: self.edges.clone(),
            torso: self.torso,
        }
    }

    pub fn from_file(f: SkeletonFile) -> Result<Self> {
        SkeletonGraph::new(f.id, f.joint_names, f.edges, f.torso)
    }

    pub fn from_json(json: &str) -> Result<Self> {
        let f: SkeletonFile = serde_json::from_str(json)
            .map_err(|e| Error::config(format!("invalid skeleton file: {e}")))?;
        Self::from_file(f)
    }
}

fn names(list: &[&str]) -> Vec<String> {
    list.iter().map(|s| s.to_string()).collect()
}

fn mmfi17() -> SkeletonGraph {
    // Joint order follows the standard 17-joint table for this dataset.
    let joint_names = names(&[
        "Bot Torso", "L.Hip", "L.Knee", "L.Foot", "R.Hip", "R.Knee", "R.Foot",
        "Center Torso", "Upper Torso", "Neck Base", "Center Head",
        "R.Shoulder", "R.Elbow", "R.Hand", "L.Shoulder", "L.Elbow", "L.Hand",
    ]);
    let edges = vec![
        (0, 1), (1, 2), (2, 3),          // left leg
        (0, 4), (4, 5), (5, 6),          // right leg
        (0, 7), (7, 8), (8, 9), (9, 10), // spine to head
        (9, 11), (11, 12), (12, 13),     // right arm
        (9, 14), (14, 15), (15, 16),     // left arm
    ];
    let torso = TorsoSpec { upper: TorsoAnchor::Joint(9), lower: TorsoAnchor::Joint(0) };
    SkeletonGraph::new("mmfi17", joint_names, edges, torso).expect("built-in skeleton is valid")
}

fn wipose18() -> SkeletonGraph {
    let joint_names = names(&[
        "Nose", "Neck", "R.Shoulder", "R.Elbow", "R.Wrist",
        "L.Shoulder", "L.Elbow", "L.Wrist", "R.Hip", "R.Knee", "R.Ankle",
        "L.Hip", "L.Knee", "L.Ankle", "R.Eye", "L.Eye", "R.Ear", "L.Ear",
    ]);
    let edges = vec![
        (1, 0),                      // neck to nose
        (1, 2), (2, 3), (3, 4),      // right arm
        (1, 5), (5, 6), (6, 7),      // left arm
        (1, 8), (8, 9), (9, 10),     // right leg
        (1, 11), (11, 12), (12, 13), // left leg
        (0, 14), (14, 16),           // right eye/ear
        (0, 15), (15, 17),           // left eye/ear
    ];
    let torso = TorsoSpec { upper: TorsoAnchor::Joint(1), lower: TorsoAnchor::Midpoint(8, 11) };
    SkeletonGraph::new("wipose18", joint_names, edges, torso).expect("built-in skeleton is valid")
}

fn piw3d14() -> SkeletonGraph {
    let joint_names = names(&[
        "Neck", "Head", "L.Shoulder", "R.Shoulder", "L.Elbow", "L.Hip",
        "R.Elbow", "R.Hip", "L.Hand", "L.Knee", "R.Hand", "R.Knee",
        "L.Ankle", "R.Ankle",
    ]);
    let edges = vec![
        (0, 1),                    // neck to head
        (0, 2), (2, 4), (4, 8),    // left arm
        (0, 3), (3, 6), (6, 10),   // right arm
        (0, 5), (5, 9), (9, 12),   // left leg
        (0, 7), (7, 11), (11, 13), // right leg
    ];
    let torso = TorsoSpec { upper: TorsoAnchor::Joint(0), lower: TorsoAnchor::Midpoint(5, 7) };
    SkeletonGraph::new("piw3d14", joint_names, edges, torso).expect("built-in skeleton is valid")
}

/// Built-in skeleton ids.
pub const REGISTRY_IDS: [&str; 3] = ["mmfi17", "wipose18", "piw3d14"];

/// Look up a built-in skeleton by id.
pub fn registry(id: &str) -> Result<SkeletonGraph> {
    match id {
        "mmfi17" => Ok(mmfi17()),
        "wipose18" => Ok(wipose18()),
        "piw3d14" => Ok(piw3d14()),
        other => Err(Error::config(format!(
            "unknown skeleton id '{other}' (built-ins: mmfi17, wipose18, piw3d14)"
        ))),
    }
}
