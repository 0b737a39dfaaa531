//! Motion graph over snippet features.
//!
//! Nodes are snippets. Positional edges join snippets closer than
//! `theta_pos · T`; semantic edges join snippets farther apart than that whose
//! projected features have cosine similarity above `gamma`. Edge weights are
//! raw-feature cosines. The dense variant instead connects every pair with a
//! row-normalized projected inner product.

use std::collections::BTreeSet;
use std::io::Write;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numcore::Tensor2;

pub type EdgeSet = BTreeSet<(usize, usize)>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GraphMode {
    Sparse,
    Dense,
    /// No message passing; the GCN layers act on each snippet independently.
    Mlp,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GraphConfig {
    pub theta_pos: f64,
    pub gamma: f64,
    pub mode: GraphMode,
    pub row_normalize: bool,
    pub include_self: bool,
    pub positional_edges: bool,
    pub semantic_edges: bool,
}

impl Default for GraphConfig {
    fn default() -> Self {
        Self {
            theta_pos: 0.1,
            gamma: 0.6,
            mode: GraphMode::Sparse,
            row_normalize: true,
            include_self: true,
            positional_edges: true,
            semantic_edges: true,
        }
    }
}

impl GraphConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.theta_pos > 0.0 && self.theta_pos < 1.0) {
            return Err(Error::Config(format!("theta_pos {} outside (0, 1)", self.theta_pos)));
        }
        if !(self.gamma > -1.0 && self.gamma < 1.0) {
            return Err(Error::Config(format!("gamma {} outside (-1, 1)", self.gamma)));
        }
        Ok(())
    }
}

/// Fixed `d×d` projections applied before semantic similarity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Projections {
    pub w1: Tensor2,
    pub w2: Tensor2,
}

impl Projections {
    pub fn identity(d: usize) -> Self {
        Self {
            w1: Tensor2::identity(d),
            w2: Tensor2::identity(d),
        }
    }

    /// Identity plus N(0, std²) noise.
    pub fn perturbed_identity<R: Rng + ?Sized>(d: usize, std: f64, rng: &mut R) -> Self {
        let mut w1 = Tensor2::randn(d, d, std, rng);
        let mut w2 = Tensor2::randn(d, d, std, rng);
        for i in 0..d {
            w1.set(i, i, w1.get(i, i) + 1.0);
            w2.set(i, i, w2.get(i, i) + 1.0);
        }
        Self { w1, w2 }
    }

    fn check(&self, d: usize) -> Result<()> {
        for w in [&self.w1, &self.w2] {
            if w.shape() != (d, d) {
                return Err(Error::dim(
                    "projection",
                    format!("{:?} for feature dim {d}", w.shape()),
                ));
            }
        }
        Ok(())
    }

    /// Rows `W1·m_i` and `W2·m_j` for every snippet.
    fn project(&self, features: &Tensor2) -> Result<(Tensor2, Tensor2)> {
        self.check(features.cols())?;
        Ok((
            features.matmul(&self.w1.transpose())?,
            features.matmul(&self.w2.transpose())?,
        ))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MotionGraph {
    pub nodes: usize,
    pub mode: GraphMode,
    pub pos_edges: EdgeSet,
    pub smt_edges: EdgeSet,
    pub adjacency: Tensor2,
}

impl MotionGraph {
    pub fn edge_count(&self) -> usize {
        self.pos_edges.len() + self.smt_edges.len()
    }
}

/// Cosine similarity, zero when either vector has zero norm.
pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

#[inline]
fn normalized_distance(i: usize, j: usize, t: usize) -> f64 {
    i.abs_diff(j) as f64 / t as f64
}

pub fn build_positional_edges(nodes: usize, cfg: &GraphConfig) -> EdgeSet {
    let mut edges = EdgeSet::new();
    for i in 0..nodes {
        for j in 0..nodes {
            if i == j && !cfg.include_self {
                continue;
            }
            if normalized_distance(i, j, nodes) < cfg.theta_pos {
                edges.insert((i, j));
            }
        }
    }
    edges
}

pub fn build_semantic_edges(
    features: &Tensor2,
    proj: &Projections,
    cfg: &GraphConfig,
) -> Result<EdgeSet> {
    let t = features.rows();
    let (left, right) = proj.project(features)?;
    let mut edges = EdgeSet::new();
    for i in 0..t {
        for j in 0..t {
            if normalized_distance(i, j, t) <= cfg.theta_pos {
                continue;
            }
            if cosine(left.row(i), right.row(j)) > cfg.gamma {
                edges.insert((i, j));
                edges.insert((j, i));
            }
        }
    }
    Ok(edges)
}

/// Raw-feature cosine on every edge, zero elsewhere.
pub fn build_adjacency(features: &Tensor2, edges: &EdgeSet, cfg: &GraphConfig) -> Result<Tensor2> {
    let t = features.rows();
    let mut adj = Tensor2::zeros(t, t);
    for &(i, j) in edges {
        if i >= t || j >= t {
            return Err(Error::dim("build_adjacency", format!("edge ({i}, {j}) with T={t}")));
        }
        adj.set(i, j, cosine(features.row(i), features.row(j)));
    }
    if cfg.row_normalize {
        for r in 0..t {
            let row = adj.row_mut(r);
            let mass: f64 = row.iter().map(|v| v.abs()).sum();
            if mass > 0.0 {
                row.iter_mut().for_each(|v| *v /= mass);
            }
        }
    }
    Ok(adj)
}

/// Fully connected adjacency: projected inner products divided by their row
/// sum. Rows whose sum is not positive fall back to uniform `1/T`.
pub fn build_dense_adjacency(features: &Tensor2, proj: &Projections) -> Result<Tensor2> {
    let t = features.rows();
    let (left, right) = proj.project(features)?;
    let scores = left.matmul(&right.transpose())?;
    let mut adj = Tensor2::zeros(t, t);
    for r in 0..t {
        let srow = scores.row(r);
        let total: f64 = srow.iter().sum();
        let out = adj.row_mut(r);
        if total > 0.0 && total.is_finite() {
            out.iter_mut().zip(srow).for_each(|(o, s)| *o = s / total);
        } else {
            out.fill(1.0 / t as f64);
        }
    }
    Ok(adj)
}

/// Builds the graph for one video's guidance features according to `cfg.mode`.
pub fn build_graph(features: &Tensor2, proj: &Projections, cfg: &GraphConfig) -> Result<MotionGraph> {
    cfg.validate()?;
    let t = features.rows();
    if t == 0 {
        return Err(Error::dim("build_graph", "no snippets"));
    }
    let (pos_edges, smt_edges, adjacency) = match cfg.mode {
        GraphMode::Sparse => {
            let pos = if cfg.positional_edges {
                build_positional_edges(t, cfg)
            } else {
                EdgeSet::new()
            };
            let smt = if cfg.semantic_edges {
                build_semantic_edges(features, proj, cfg)?
            } else {
                EdgeSet::new()
            };
            let all: EdgeSet = pos.union(&smt).copied().collect();
            let adj = build_adjacency(features, &all, cfg)?;
            (pos, smt, adj)
        }
        GraphMode::Dense => (
            EdgeSet::new(),
            EdgeSet::new(),
            build_dense_adjacency(features, proj)?,
        ),
        GraphMode::Mlp => (EdgeSet::new(), EdgeSet::new(), Tensor2::identity(t)),
    };
    Ok(MotionGraph {
        nodes: t,
        mode: cfg.mode,
        pos_edges,
        smt_edges,
        adjacency,
    })
}

/// Adjacency-weighted mean temporal distance, `Σ|G_ij|·|i−j| / Σ|G_ij|`.
///
/// Small values mean the weight mass sits near the diagonal.
pub fn mean_temporal_distance(adj: &Tensor2) -> f64 {
    let mut num = 0.0;
    let mut den = 0.0;
    for i in 0..adj.rows() {
        for (j, w) in adj.row(i).iter().enumerate() {
            num += w.abs() * i.abs_diff(j) as f64;
            den += w.abs();
        }
    }
    if den == 0.0 {
        0.0
    } else {
        num / den
    }
}

/// Writes the adjacency as a headerless CSV matrix.
pub fn write_adjacency_csv(path: impl AsRef<Path>, adj: &Tensor2) -> Result<()> {
    let path = path.as_ref();
    let mut out = std::io::BufWriter::new(std::fs::File::create(path).map_err(|e| Error::io(path, e))?);
    for r in 0..adj.rows() {
        let line: Vec<String> = adj.row(r).iter().map(|v| format!("{v}")).collect();
        writeln!(out, "{}", line.join(",")).map_err(|e| Error::io(path, e))?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> GraphConfig {
        GraphConfig::default()
    }

    #[test]
    fn positional_threshold_cases() {
        let edges = build_positional_edges(20, &cfg());
        assert!(edges.contains(&(3, 4)));
        assert!(!edges.contains(&(3, 6)));
        assert!(edges.contains(&(3, 3)));
        let non_self = edges.iter().filter(|(i, j)| i != j).count();
        // Enumeration: only |i−j| = 1 qualifies, 19 pairs in each direction.
        assert_eq!(non_self, 38);
    }

    #[test]
    fn semantic_hand_cases() {
        let proj = Projections::identity(2);
        let c = GraphConfig {
            theta_pos: 0.1,
            ..cfg()
        };
        // Nodes 0 and 5 are distant (5/6 > 0.1).
        let mut f = Tensor2::zeros(6, 2);
        f.row_mut(0).copy_from_slice(&[1.0, 0.0]);
        f.row_mut(5).copy_from_slice(&[1.0, 0.0]);
        assert!(build_semantic_edges(&f, &proj, &c).unwrap().contains(&(0, 5)));

        f.row_mut(5).copy_from_slice(&[0.0, 1.0]);
        assert!(!build_semantic_edges(&f, &proj, &c).unwrap().contains(&(0, 5)));

        f.row_mut(5).copy_from_slice(&[1.0, 1.0]);
        let e = build_semantic_edges(&f, &proj, &c).unwrap();
        assert!(e.contains(&(0, 5)) && e.contains(&(5, 0)));
        assert!((cosine(&[1.0, 0.0], &[1.0, 1.0]) - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-12);
    }

    #[test]
    fn zero_vectors_never_link() {
        assert_eq!(cosine(&[0.0, 0.0], &[1.0, 0.0]), 0.0);
        let f = Tensor2::zeros(10, 3);
        let e = build_semantic_edges(&f, &Projections::identity(3), &cfg()).unwrap();
        assert!(e.is_empty());
    }

    #[test]
    fn adjacency_entries() {
        let f = Tensor2::from_rows(&[&[1.0, 0.0], &[1.0, 0.0], &[0.0, 1.0]]);
        let mut edges = EdgeSet::new();
        edges.insert((0, 1));
        let raw = GraphConfig {
            row_normalize: false,
            ..cfg()
        };
        let adj = build_adjacency(&f, &edges, &raw).unwrap();
        assert_eq!(adj.get(0, 1), 1.0);
        assert_eq!(adj.get(0, 2), 0.0);
        assert_eq!(adj.get(1, 0), 0.0);
    }

    #[test]
    fn row_normalization() {
        let f = Tensor2::from_rows(&[&[1.0, 0.0], &[1.0, 0.0], &[0.0, 1.0]]);
        let mut edges = EdgeSet::new();
        edges.insert((0, 0));
        edges.insert((0, 1));
        let adj = build_adjacency(&f, &edges, &cfg()).unwrap();
        assert_eq!(adj.row(0), &[0.5, 0.5, 0.0]);
        assert_eq!(adj.row(2), &[0.0, 0.0, 0.0]);
    }

    #[test]
    fn dense_identical_nodes_are_uniform() {
        let f = Tensor2::filled(5, 3, 0.7);
        let adj = build_dense_adjacency(&f, &Projections::identity(3)).unwrap();
        for v in adj.data() {
            assert!((v - 0.2).abs() < 1e-12);
        }
    }

    #[test]
    fn dense_negative_rows_fall_back_to_uniform() {
        let f = Tensor2::from_rows(&[&[1.0], &[-3.0]]);
        let adj = build_dense_adjacency(&f, &Projections::identity(1)).unwrap();
        // Row 0: scores [1, -3], sum −2.
        assert_eq!(adj.row(0), &[0.5, 0.5]);
        // Row 1: scores [−3, 9], sum 6.
        assert_eq!(adj.row(1), &[-0.5, 1.5]);
    }

    #[test]
    fn mlp_graph_is_identity() {
        let f = Tensor2::filled(4, 2, 1.0);
        let g = build_graph(&f, &Projections::identity(2), &GraphConfig {
            mode: GraphMode::Mlp,
            ..cfg()
        })
        .unwrap();
        assert_eq!(g.adjacency, Tensor2::identity(4));
        assert_eq!(g.edge_count(), 0);
    }

    #[test]
    fn config_validation() {
        assert!(GraphConfig { theta_pos: 1.0, ..cfg() }.validate().is_err());
        assert!(GraphConfig { gamma: -1.0, ..cfg() }.validate().is_err());
    }
}
