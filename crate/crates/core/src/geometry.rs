//! The five Platonic site networks and their distance-dependent couplings.
//!
//! Sites are numbered in the order their coordinates are listed, with `±`
//! patterns expanded first-sign-outermost: `(0, ±a, ±b)` yields
//! `(0, a, b), (0, a, -b), (0, -a, b), (0, -a, -b)`. Indices are 0-based in
//! the API; the CLI speaks 1-based site numbers.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// Relative tolerance used to decide whether a pair distance is an edge.
pub const EDGE_TOLERANCE: f64 = 1e-9;

const PHI: f64 = 1.618_033_988_749_895;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolidKind {
    Tetrahedron,
    Octahedron,
    Cube,
    Icosahedron,
    Dodecahedron,
}

impl SolidKind {
    pub const ALL: [SolidKind; 5] = [
        SolidKind::Tetrahedron,
        SolidKind::Octahedron,
        SolidKind::Cube,
        SolidKind::Icosahedron,
        SolidKind::Dodecahedron,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SolidKind::Tetrahedron => "tetrahedron",
            SolidKind::Octahedron => "octahedron",
            SolidKind::Cube => "cube",
            SolidKind::Icosahedron => "icosahedron",
            SolidKind::Dodecahedron => "dodecahedron",
        }
    }

    pub fn vertex_count(self) -> usize {
        match self {
            SolidKind::Tetrahedron => 4,
            SolidKind::Octahedron => 6,
            SolidKind::Cube => 8,
            SolidKind::Icosahedron => 12,
            SolidKind::Dodecahedron => 20,
        }
    }
}

impl fmt::Display for SolidKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown solid `{0}` (expected tetrahedron, octahedron, cube, icosahedron or dodecahedron)")]
pub struct UnknownSolid(pub String);

impl FromStr for SolidKind {
    type Err = UnknownSolid;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        SolidKind::ALL
            .into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| UnknownSolid(s.to_string()))
    }
}

/// Vertex positions plus the nearest-neighbour graph of a Platonic solid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PlatonicSolid {
    pub kind: SolidKind,
    pub vertices: Vec<[f64; 3]>,
    pub edge_length: f64,
    /// Row-major `n × n`; `true` iff the pair is an edge.
    adjacency: Vec<bool>,
}

impl PlatonicSolid {
    pub fn n(&self) -> usize {
        self.vertices.len()
    }

    pub fn distance(&self, i: usize, j: usize) -> f64 {
        let (a, b) = (self.vertices[i], self.vertices[j]);
        ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
    }

    pub fn adjacent(&self, i: usize, j: usize) -> bool {
        self.adjacency[i * self.n() + j]
    }

    pub fn adjacency(&self) -> &[bool] {
        &self.adjacency
    }

    pub fn neighbors(&self, i: usize) -> impl Iterator<Item = usize> + '_ {
        (0..self.n()).filter(move |&j| self.adjacent(i, j))
    }

    pub fn degree(&self, i: usize) -> usize {
        self.neighbors(i).count()
    }

    /// Vertex degree plus one: the size of the equivalent fully connected network.
    pub fn coordination_number(&self) -> usize {
        self.degree(0) + 1
    }

    pub fn centroid(&self) -> [f64; 3] {
        let n = self.n() as f64;
        let mut c = [0.0; 3];
        for v in &self.vertices {
            for k in 0..3 {
                c[k] += v[k] / n;
            }
        }
        c
    }

    /// Site permutation induced by point reflection through the centroid,
    /// or `None` when the solid is not centrally symmetric (tetrahedron).
    pub fn antipodal_map(&self) -> Option<Vec<usize>> {
        let c = self.centroid();
        let scale = self.edge_length;
        self.vertices
            .iter()
            .map(|v| {
                let image = [2.0 * c[0] - v[0], 2.0 * c[1] - v[1], 2.0 * c[2] - v[2]];
                self.vertices
                    .iter()
                    .position(|w| (0..3).all(|k| (w[k] - image[k]).abs() <= EDGE_TOLERANCE * scale))
            })
            .collect()
    }
}

/// Builds the solid with the site ordering used throughout the crate.
pub fn build_solid(kind: SolidKind) -> PlatonicSolid {
    let vertices = match kind {
        SolidKind::Tetrahedron => {
            // Alternate cube corners, scaled to unit edge.
            let s = 1.0 / (2.0 * std::f64::consts::SQRT_2);
            vec![[s, s, s], [s, -s, -s], [-s, s, -s], [-s, -s, s]]
        }
        SolidKind::Octahedron => {
            let a = std::f64::consts::FRAC_1_SQRT_2;
            expand(&[[0.0, 0.0, a], [0.0, a, 0.0], [a, 0.0, 0.0]])
        }
        SolidKind::Cube => vec![
            [0.0, 0.0, 0.0],
            [1.0, 0.0, 0.0],
            [0.0, 1.0, 0.0],
            [0.0, 0.0, 1.0],
            [0.0, 1.0, 1.0],
            [1.0, 0.0, 1.0],
            [1.0, 1.0, 1.0],
            [1.0, 1.0, 0.0],
        ],
        SolidKind::Icosahedron => expand(&[[0.0, PHI, 1.0], [1.0, 0.0, PHI], [PHI, 1.0, 0.0]]),
        SolidKind::Dodecahedron => {
            // The second and fourth groups fix the chirality; the third must
            // be (±1/φ, 0, ±φ) for the set to close into a regular solid.
            expand(&[
                [1.0, 1.0, 1.0],
                [0.0, PHI, 1.0 / PHI],
                [1.0 / PHI, 0.0, PHI],
                [PHI, 1.0 / PHI, 0.0],
            ])
        }
    };
    from_vertices(kind, vertices)
}

fn expand(templates: &[[f64; 3]]) -> Vec<[f64; 3]> {
    let mut out = Vec::new();
    for t in templates {
        let free: Vec<usize> = (0..3).filter(|&k| t[k] != 0.0).collect();
        for mask in 0..(1usize << free.len()) {
            let mut v = *t;
            for (bit, &k) in free.iter().enumerate() {
                // First free coordinate is the outermost sign.
                if mask & (1 << (free.len() - 1 - bit)) != 0 {
                    v[k] = -v[k];
                }
            }
            out.push(v);
        }
    }
    out
}

fn from_vertices(kind: SolidKind, vertices: Vec<[f64; 3]>) -> PlatonicSolid {
    let n = vertices.len();
    let mut solid = PlatonicSolid {
        kind,
        vertices,
        edge_length: 0.0,
        adjacency: vec![false; n * n],
    };
    let mut min = f64::INFINITY;
    for i in 0..n {
        for j in (i + 1)..n {
            min = min.min(solid.distance(i, j));
        }
    }
    solid.edge_length = min;
    for i in 0..n {
        for j in 0..n {
            if i != j && (solid.distance(i, j) - min).abs() <= EDGE_TOLERANCE * min {
                solid.adjacency[i * n + j] = true;
            }
        }
    }
    solid
}

pub fn coordination_number(solid: &PlatonicSolid) -> usize {
    solid.coordination_number()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CouplingMode {
    AllPairs,
    NearestNeighbor,
}

impl fmt::Display for CouplingMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CouplingMode::AllPairs => "all-pairs",
            CouplingMode::NearestNeighbor => "nearest-neighbor",
        })
    }
}

impl FromStr for CouplingMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "all-pairs" | "all" => Ok(CouplingMode::AllPairs),
            "nearest-neighbor" | "nearest-neighbour" | "nn" => Ok(CouplingMode::NearestNeighbor),
            other => Err(format!(
                "unknown coupling mode `{other}` (expected all-pairs or nearest-neighbor)"
            )),
        }
    }
}

/// Real symmetric exchange couplings `J_ij` with zero diagonal (ħ = 1).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CouplingMatrix {
    n: usize,
    values: Vec<f64>,
    pub mode: CouplingMode,
    pub v: f64,
}

impl CouplingMatrix {
    pub fn from_fn(n: usize, mode: CouplingMode, v: f64, f: impl Fn(usize, usize) -> f64) -> Self {
        let mut values = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    values[i * n + j] = f(i, j);
                }
            }
        }
        CouplingMatrix { n, values, mode, v }
    }

    /// Uniform coupling `j` between every pair: the fully connected network.
    pub fn fully_connected(n: usize, j: f64) -> Self {
        Self::from_fn(n, CouplingMode::NearestNeighbor, j, |_, _| j)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n + j]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    /// Returns the matrix with sites relabelled so that new site `perm[i]`
    /// is old site `i`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let mut values = vec![0.0; self.n * self.n];
        for i in 0..self.n {
            for j in 0..self.n {
                values[perm[i] * self.n + perm[j]] = self.get(i, j);
            }
        }
        CouplingMatrix {
            n: self.n,
            values,
            mode: self.mode,
            v: self.v,
        }
    }
}

/// Dipolar couplings `J_ij = v / r_ij³`, optionally truncated to edges.
pub fn coupling_matrix(solid: &PlatonicSolid, mode: CouplingMode, v: f64) -> CouplingMatrix {
    CouplingMatrix::from_fn(solid.n(), mode, v, |i, j| match mode {
        CouplingMode::NearestNeighbor if !solid.adjacent(i, j) => 0.0,
        CouplingMode::NearestNeighbor => v / solid.edge_length.powi(3),
        CouplingMode::AllPairs => v / solid.distance(i, j).powi(3),
    })
}
