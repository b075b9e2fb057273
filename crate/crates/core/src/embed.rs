//! Coordinates from squared distances and back.

use crate::cm::{menger_check, normalized_cmd, simplex_volume_sq, IndexSet, SquaredDistanceMatrix};
use crate::error::{Error, Result};
use crate::scalar::{Real, Scalar, Tolerance};

/// Normalized pivot-simplex determinant below which an embedding is flagged
/// as ill-conditioned.
pub const CONDITIONING_THRESHOLD: f64 = 1e-7;

/// Points of a framework, one per vertex, all in `R^d`.
#[derive(Clone, Debug, PartialEq)]
pub struct Configuration<T> {
    d: usize,
    points: Vec<Vec<T>>,
}

impl<T: Scalar> Configuration<T> {
    pub fn new(d: usize, points: Vec<Vec<T>>) -> Result<Self> {
        if d == 0 {
            return Err(Error::Input("dimension must be at least 1".into()));
        }
        if let Some(k) = points.iter().position(|p| p.len() != d) {
            return Err(Error::Input(format!("point {k} has {} coordinates, expected {d}", points[k].len())));
        }
        Ok(Configuration { d, points })
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn point(&self, i: usize) -> &[T] {
        &self.points[i]
    }

    pub fn points(&self) -> &[Vec<T>] {
        &self.points
    }

    pub fn squared_distance(&self, i: usize, j: usize) -> T {
        squared_norm_diff(&self.points[i], &self.points[j])
    }

    pub fn map<U: Scalar>(&self, f: impl Fn(&T) -> U) -> Configuration<U> {
        Configuration { d: self.d, points: self.points.iter().map(|p| p.iter().map(&f).collect()).collect() }
    }

    /// Applies `f` to every point.
    pub fn transform(&self, f: impl Fn(&[T]) -> Vec<T>) -> Configuration<T> {
        Configuration { d: self.d, points: self.points.iter().map(|p| f(p)).collect() }
    }
}

impl<T: Real> Configuration<T> {
    /// Largest pairwise distance.
    pub fn diameter(&self) -> f64 {
        let mut best = 0.0f64;
        for i in 0..self.len() {
            for j in i + 1..self.len() {
                best = best.max(self.squared_distance(i, j).as_f64());
            }
        }
        best.sqrt()
    }
}

pub(crate) fn squared_norm_diff<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |acc, (x, y)| {
        let t = x.clone() - y.clone();
        acc + t.clone() * t
    })
}

/// Squared distance matrix of a configuration.
pub fn distances_of<T: Scalar>(c: &Configuration<T>) -> SquaredDistanceMatrix<T> {
    SquaredDistanceMatrix::from_pairs(c.len(), |i, j| c.squared_distance(i, j))
}

/// An embedding together with the pivot simplex that fixed its gauge.
#[derive(Clone, Debug)]
pub struct Embedding<T> {
    pub configuration: Configuration<T>,
    pub pivots: IndexSet,
    /// Normalized determinant of the pivot simplex.
    pub pivot_cmd: f64,
    pub ill_conditioned: bool,
}

/// Isometric embedding of `z` into `R^dim` with full affine hull.
///
/// Gauge: pivot `i_0` sits at the origin and the `m`-th pivot has nonzero
/// coordinates only in the first `m` axes, the last one positive. Pivots are
/// chosen greedily by simplex volume, starting from vertex 0.
pub fn embed<T: Real>(z: &SquaredDistanceMatrix<T>, dim: usize, tol: &Tolerance) -> Result<Embedding<T>> {
    let report = menger_check(z, dim, tol)?;
    if !report.passes {
        return Err(Error::NotEmbeddable { dimension: dim, report });
    }
    let n = z.n();
    let mut pivots = vec![0usize];
    while pivots.len() < dim + 1 {
        let mut best: Option<(usize, T)> = None;
        for cand in (0..n).filter(|c| !pivots.contains(c)) {
            let set = IndexSet::from_vec(pivots.iter().copied().chain([cand]).collect());
            let vol = simplex_volume_sq(z, &set)?;
            if best.as_ref().is_none_or(|(_, b)| vol > *b) {
                best = Some((cand, vol));
            }
        }
        pivots.push(best.expect("menger_check guarantees enough points").0);
    }
    let pivot_set = IndexSet::from_vec(pivots.clone());
    let pivot_cmd = normalized_cmd(z, &pivot_set)?.abs();
    let origin = pivots[0];

    // Gram entry <x - p0, y - p0> from squared distances.
    let gram = |x: usize, y: usize| -> T {
        let two = T::one() + T::one();
        (*z.get(origin, x) + *z.get(origin, y) - *z.get(x, y)) / two
    };

    // Rows of the lower-triangular pivot frame, pivots 1..=dim.
    let mut frame: Vec<Vec<T>> = Vec::with_capacity(dim);
    for m in 1..=dim {
        let pm = pivots[m];
        let mut x = vec![T::zero(); dim];
        forward_substitute(&frame, m - 1, |l| gram(pm, pivots[l + 1]), &mut x);
        let used = x.iter().take(m - 1).fold(T::zero(), |acc, v| acc + *v * *v);
        let rest = *z.get(origin, pm) - used;
        x[m - 1] = if rest > T::zero() { rest.sqrt() } else { T::zero() };
        frame.push(x);
    }

    let mut points = vec![vec![T::zero(); dim]; n];
    for (m, row) in frame.iter().enumerate() {
        points[pivots[m + 1]] = row.clone();
    }
    for v in (0..n).filter(|v| !pivots.contains(v)) {
        let mut x = vec![T::zero(); dim];
        forward_substitute(&frame, dim, |l| gram(v, pivots[l + 1]), &mut x);
        points[v] = x;
    }
    Ok(Embedding {
        configuration: Configuration { d: dim, points },
        pivots: pivot_set,
        pivot_cmd,
        ill_conditioned: pivot_cmd < CONDITIONING_THRESHOLD,
    })
}

/// Solves the first `rows` equations `<frame[l], x> = rhs(l)` of the
/// lower-triangular frame for `x[0..rows]`.
fn forward_substitute<T: Real>(frame: &[Vec<T>], rows: usize, rhs: impl Fn(usize) -> T, x: &mut [T]) {
    for l in 0..rows {
        let partial = (0..l).fold(T::zero(), |acc, c| acc + frame[l][c] * x[c]);
        let diag = frame[l][l];
        x[l] = if diag.is_zero() { T::zero() } else { (rhs(l) - partial) / diag };
    }
}
