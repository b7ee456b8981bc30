//! Mutual information: closed form for jointly Gaussian scalars and two
//! nearest-neighbour estimators.
//!
//! * [`ksg_mi`]: Kraskov–Stögbauer–Grassberger, first variant, max-norm in the
//!   joint space, strict-inequality marginal counts.
//! * [`ross_mi`]: Ross's estimator for a continuous input and a discrete label.
//!
//! Before neighbour search every continuous column is standardized and gets
//! independent noise of standard deviation `1e-10` (in units of the column
//! std) from a fixed stream, which breaks exact ties without moving any
//! estimate measurably. Standardizing makes the max-norm estimates invariant
//! to per-column affine maps.

use std::collections::HashMap;

use nalgebra::DMatrix;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::rng::{stream, stage};

const TIE_JITTER: f64 = 1e-10;
/// Above this many points the kd-tree backend is used by default.
pub const BRUTE_FORCE_LIMIT: usize = 20_000;

/// `I = −½ ln(1 − ρ²)` in nats.
pub fn gaussian_mi(rho: f64) -> Result<f64> {
    if !rho.is_finite() || rho.abs() > 1.0 + 1e-12 {
        return Err(Error::invalid("rho", format!("{rho} is not a correlation")));
    }
    if rho.abs() >= 1.0 {
        return Err(Error::InfiniteInformation(format!("rho = {rho}")));
    }
    Ok(-0.5 * (1.0 - rho * rho).ln())
}

/// Digamma function.
pub fn digamma(x: f64) -> f64 {
    if x.is_nan() || (x <= 0.0 && x == x.floor()) {
        return f64::NAN;
    }
    if x < 0.0 {
        return digamma(1.0 - x) - std::f64::consts::PI / (std::f64::consts::PI * x).tan();
    }
    let (mut x, mut acc) = (x, 0.0);
    while x < 10.0 {
        acc -= 1.0 / x;
        x += 1.0;
    }
    let f = 1.0 / (x * x);
    let tail = f * (1.0 / 12.0 - f * (1.0 / 120.0 - f * (1.0 / 252.0 - f * (1.0 / 240.0 - f / 132.0))));
    acc + x.ln() - 0.5 / x - tail
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum MiEstimator {
    Ksg,
    Ross,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MiEstimate {
    /// nats; may be slightly negative for independent inputs
    pub value: f64,
    pub estimator: MiEstimator,
    pub k: usize,
    pub n: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum KnnBackend {
    /// brute force up to [`BRUTE_FORCE_LIMIT`] points, kd-tree above
    #[default]
    Auto,
    BruteForce,
    KdTree,
}

impl KnnBackend {
    fn resolve(self, n: usize) -> KnnBackend {
        match self {
            KnnBackend::Auto if n <= BRUTE_FORCE_LIMIT => KnnBackend::BruteForce,
            KnnBackend::Auto => KnnBackend::KdTree,
            b => b,
        }
    }
}

/// Row-major point cloud.
struct Points {
    data: Vec<f64>,
    n: usize,
    d: usize,
}

impl Points {
    fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.d..(i + 1) * self.d]
    }

    fn dist(&self, i: usize, j: usize) -> f64 {
        self.row(i).iter().zip(self.row(j)).fold(0.0, |m, (a, b)| f64::max(m, (a - b).abs()))
    }

    fn dist_to(&self, q: &[f64], j: usize) -> f64 {
        q.iter().zip(self.row(j)).fold(0.0, |m, (a, b)| f64::max(m, (a - b).abs()))
    }

    fn hstack(a: &Points, b: &Points) -> Points {
        let d = a.d + b.d;
        let mut data = Vec::with_capacity(a.n * d);
        for i in 0..a.n {
            data.extend_from_slice(a.row(i));
            data.extend_from_slice(b.row(i));
        }
        Points { data, n: a.n, d }
    }

    fn subset(&self, rows: &[usize]) -> Points {
        let mut data = Vec::with_capacity(rows.len() * self.d);
        for &i in rows {
            data.extend_from_slice(self.row(i));
        }
        Points { data, n: rows.len(), d: self.d }
    }
}

/// Standardized row-major copy of `m` with tie-breaking noise, columns drawn in order.
fn jittered(m: &DMatrix<f64>, name: &str, rng: &mut impl rand::Rng) -> Result<Points> {
    let (n, d) = m.shape();
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("samples", format!("{name} has non-finite entries")));
    }
    let mut data = vec![0.0; n * d];
    for j in 0..d {
        let col = m.column(j);
        let mean = col.mean();
        let var = col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n as f64 - 1.0);
        if !(var > 0.0) {
            return Err(Error::ZeroVariance(format!("{name} column {j} is constant")));
        }
        let sd = var.sqrt();
        for i in 0..n {
            let z: f64 = StandardNormal.sample(rng);
            data[i * d + j] = (col[i] - mean) / sd + TIE_JITTER * z;
        }
    }
    Ok(Points { data, n, d })
}

/// Distance from each point to its `k`-th nearest neighbour (self excluded).
fn kth_distances(pts: &Points, k: usize, backend: KnnBackend) -> Vec<f64> {
    match backend.resolve(pts.n) {
        KnnBackend::KdTree => {
            let tree = KdTree::build(pts);
            (0..pts.n).into_par_iter().map(|i| tree.kth_distance(i, k)).collect()
        }
        _ => (0..pts.n)
            .into_par_iter()
            .map(|i| {
                let mut d: Vec<f64> = (0..pts.n).filter(|&j| j != i).map(|j| pts.dist(i, j)).collect();
                *d.select_nth_unstable_by(k - 1, f64::total_cmp).1
            })
            .collect(),
    }
}

/// For each point, `#{j ≠ i : dist(i, j) < radius[i]}` (or `≤` when `inclusive`).
fn neighbour_counts(pts: &Points, radius: &[f64], inclusive: bool, backend: KnnBackend) -> Vec<usize> {
    if pts.d == 1 {
        return sorted_counts(&pts.data, radius, inclusive);
    }
    let within = |d: f64, r: f64| if inclusive { d <= r } else { d < r };
    match backend.resolve(pts.n) {
        KnnBackend::KdTree => {
            let tree = KdTree::build(pts);
            (0..pts.n).into_par_iter().map(|i| tree.count_within(i, radius[i], inclusive)).collect()
        }
        _ => (0..pts.n)
            .into_par_iter()
            .map(|i| (0..pts.n).filter(|&j| j != i && within(pts.dist(i, j), radius[i])).count())
            .collect(),
    }
}

/// One-dimensional counts by binary search on sorted values. The predicates
/// `x_i − v < r` and `v − x_i < r` are monotone in `v` under rounded
/// subtraction, so the result equals the pairwise count exactly.
fn sorted_counts(values: &[f64], radius: &[f64], inclusive: bool) -> Vec<usize> {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let inside = |gap: f64, r: f64| if inclusive { gap <= r } else { gap < r };
    values
        .par_iter()
        .zip(radius.par_iter())
        .map(|(&x, &r)| {
            let split = sorted.partition_point(|&v| v < x);
            let lo = sorted[..split].partition_point(|&v| !inside(x - v, r));
            let hi = split + sorted[split..].partition_point(|&v| inside(v - x, r));
            hi - lo - usize::from(inside(0.0, r))
        })
        .collect()
}

fn check_common(n: usize, other: usize, k: usize) -> Result<()> {
    if n != other {
        return Err(Error::DimensionMismatch(format!("{n} samples against {other}")));
    }
    if k == 0 {
        return Err(Error::invalid("k", "must be at least 1"));
    }
    if n <= k {
        return Err(Error::InsufficientSamples(format!("{n} samples for k={k}")));
    }
    Ok(())
}

/// KSG estimate of `I(x; y)` for `n × dx` and `n × dy` samples.
pub fn ksg_mi(x: &DMatrix<f64>, y: &DMatrix<f64>, k: usize, seed: u64) -> Result<MiEstimate> {
    ksg_mi_with(x, y, k, seed, KnnBackend::Auto)
}

pub fn ksg_mi_with(x: &DMatrix<f64>, y: &DMatrix<f64>, k: usize, seed: u64, backend: KnnBackend) -> Result<MiEstimate> {
    let n = x.nrows();
    check_common(n, y.nrows(), k)?;
    let mut rng = stream(seed, stage::TIE_JITTER);
    let px = jittered(x, "x", &mut rng)?;
    let py = jittered(y, "y", &mut rng)?;
    let joint = Points::hstack(&px, &py);
    let eps = kth_distances(&joint, k, backend);
    let nx = neighbour_counts(&px, &eps, false, backend);
    let ny = neighbour_counts(&py, &eps, false, backend);
    let mean_marginal = nx.iter().zip(&ny).map(|(&a, &b)| digamma(a as f64 + 1.0) + digamma(b as f64 + 1.0)).sum::<f64>()
        / n as f64;
    Ok(MiEstimate {
        value: digamma(k as f64) + digamma(n as f64) - mean_marginal,
        estimator: MiEstimator::Ksg,
        k,
        n,
    })
}

/// KSG on two scalar samples.
pub fn ksg_mi_1d(x: &[f64], y: &[f64], k: usize, seed: u64) -> Result<MiEstimate> {
    ksg_mi(&DMatrix::from_column_slice(x.len(), 1, x), &DMatrix::from_column_slice(y.len(), 1, y), k, seed)
}

/// Ross estimate of `I(x; label)` for continuous `n × d` samples and integer labels.
pub fn ross_mi(x: &DMatrix<f64>, labels: &[i64], k: usize, seed: u64) -> Result<MiEstimate> {
    ross_mi_with(x, labels, k, seed, KnnBackend::Auto)
}

pub fn ross_mi_with(x: &DMatrix<f64>, labels: &[i64], k: usize, seed: u64, backend: KnnBackend) -> Result<MiEstimate> {
    let n = x.nrows();
    check_common(n, labels.len(), k)?;
    let mut rng = stream(seed, stage::TIE_JITTER);
    let pts = jittered(x, "x", &mut rng)?;

    let mut groups: HashMap<i64, Vec<usize>> = HashMap::new();
    for (i, &l) in labels.iter().enumerate() {
        groups.entry(l).or_default().push(i);
    }
    if let Some((label, rows)) = groups.iter().find(|(_, rows)| rows.len() <= k) {
        return Err(Error::InsufficientSamples(format!("label {label} has {} samples for k={k}", rows.len())));
    }

    let mut radius = vec![0.0; n];
    for rows in groups.values() {
        let sub = pts.subset(rows);
        for (r, &i) in kth_distances(&sub, k, backend).into_iter().zip(rows) {
            radius[i] = r;
        }
    }
    let m = neighbour_counts(&pts, &radius, true, backend);
    let label_term = labels.iter().map(|l| digamma(groups[l].len() as f64)).sum::<f64>() / n as f64;
    let count_term = m.iter().map(|&c| digamma(c as f64)).sum::<f64>() / n as f64;
    Ok(MiEstimate {
        value: digamma(n as f64) - label_term + digamma(k as f64) - count_term,
        estimator: MiEstimator::Ross,
        k,
        n,
    })
}

const LEAF_SIZE: usize = 32;

enum Node {
    Leaf { start: usize, end: usize },
    Split { dim: usize, value: f64, left: usize, right: usize },
}

/// Max-norm kd-tree over a borrowed point cloud.
struct KdTree<'a> {
    pts: &'a Points,
    order: Vec<usize>,
    nodes: Vec<Node>,
}

impl<'a> KdTree<'a> {
    fn build(pts: &'a Points) -> Self {
        let mut tree = KdTree { pts, order: (0..pts.n).collect(), nodes: Vec::new() };
        tree.grow(0, pts.n);
        tree
    }

    fn grow(&mut self, start: usize, end: usize) -> usize {
        let id = self.nodes.len();
        if end - start <= LEAF_SIZE {
            self.nodes.push(Node::Leaf { start, end });
            return id;
        }
        let pts = self.pts;
        let slice = &mut self.order[start..end];
        let dim = (0..pts.d)
            .max_by(|&a, &b| spread(pts, slice, a).total_cmp(&spread(pts, slice, b)))
            .unwrap_or(0);
        let mid = slice.len() / 2;
        slice.select_nth_unstable_by(mid, |&i, &j| pts.row(i)[dim].total_cmp(&pts.row(j)[dim]));
        let value = pts.row(slice[mid])[dim];
        self.nodes.push(Node::Leaf { start: 0, end: 0 });
        let left = self.grow(start, start + mid);
        let right = self.grow(start + mid, end);
        self.nodes[id] = Node::Split { dim, value, left, right };
        id
    }

    fn kth_distance(&self, i: usize, k: usize) -> f64 {
        let mut best: Vec<f64> = Vec::with_capacity(k + 1);
        self.knn(0, i, k, &mut best);
        best[k - 1]
    }

    fn knn(&self, node: usize, i: usize, k: usize, best: &mut Vec<f64>) {
        let q = self.pts.row(i);
        match self.nodes[node] {
            Node::Leaf { start, end } => {
                for &j in &self.order[start..end] {
                    if j == i {
                        continue;
                    }
                    let d = self.pts.dist_to(q, j);
                    if best.len() < k || d < best[k - 1] {
                        let at = best.partition_point(|&b| b <= d);
                        best.insert(at, d);
                        best.truncate(k);
                    }
                }
            }
            Node::Split { dim, value, left, right } => {
                let (near, far, gap) = if q[dim] < value { (left, right, value - q[dim]) } else { (right, left, q[dim] - value) };
                self.knn(near, i, k, best);
                if best.len() < k || gap <= best[k - 1] {
                    self.knn(far, i, k, best);
                }
            }
        }
    }

    fn count_within(&self, i: usize, r: f64, inclusive: bool) -> usize {
        self.count(0, i, r, inclusive)
    }

    fn count(&self, node: usize, i: usize, r: f64, inclusive: bool) -> usize {
        let q = self.pts.row(i);
        let within = |d: f64| if inclusive { d <= r } else { d < r };
        match self.nodes[node] {
            Node::Leaf { start, end } => {
                self.order[start..end].iter().filter(|&&j| j != i && within(self.pts.dist_to(q, j))).count()
            }
            Node::Split { dim, value, left, right } => {
                let (near, far, gap) = if q[dim] < value { (left, right, value - q[dim]) } else { (right, left, q[dim] - value) };
                let mut c = self.count(near, i, r, inclusive);
                if within(gap) {
                    c += self.count(far, i, r, inclusive);
                }
                c
            }
        }
    }
}

fn spread(pts: &Points, rows: &[usize], dim: usize) -> f64 {
    let (lo, hi) = rows.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &i| {
        let v = pts.row(i)[dim];
        (lo.min(v), hi.max(v))
    });
    hi - lo
}
