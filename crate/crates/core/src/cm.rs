//! Cayley-Menger determinants over squared-distance data.
//!
//! The bordered determinant of a point subset encodes its simplex volume and,
//! through its sign and vanishing pattern, whether the subset embeds in
//! Euclidean space. Everything here is generic over [`Scalar`], so the same
//! code runs exactly on rationals and approximately on floats.

use std::fmt;

use itertools::Itertools;

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::scalar::{alternating, Scalar, Tolerance};

/// Symmetric matrix of squared pairwise distances with a zero diagonal.
#[derive(Clone, Debug, PartialEq)]
pub struct SquaredDistanceMatrix<T> {
    n: usize,
    z: Vec<T>,
}

impl<T: Scalar> SquaredDistanceMatrix<T> {
    /// Validated constructor: zero diagonal, symmetric, nonnegative.
    pub fn from_rows(rows: Vec<Vec<T>>) -> Result<Self> {
        let m = Self::candidate(rows)?;
        if let Some((i, j)) = m.pairs().find(|&(i, j)| *m.get(i, j) < T::zero()) {
            return Err(Error::Input(format!("negative squared distance z[{i}][{j}]")));
        }
        Ok(m)
    }

    /// Like [`from_rows`](Self::from_rows) but allows negative entries, for
    /// candidate assignments whose nonnegativity is itself under test.
    pub fn candidate(rows: Vec<Vec<T>>) -> Result<Self> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::Input(format!("distance matrix must be {n}x{n}")));
        }
        for i in 0..n {
            if !rows[i][i].is_zero() {
                return Err(Error::Input(format!("diagonal entry z[{i}][{i}] is not zero")));
            }
            for j in 0..i {
                if rows[i][j] != rows[j][i] {
                    return Err(Error::Input(format!("z[{i}][{j}] != z[{j}][{i}]")));
                }
            }
        }
        Ok(SquaredDistanceMatrix { n, z: rows.into_iter().flatten().collect() })
    }

    /// Builds the matrix from the upper triangle `f(i, j)` with `i < j`.
    pub fn from_pairs(n: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut z = vec![T::zero(); n * n];
        for i in 0..n {
            for j in i + 1..n {
                let v = f(i, j);
                z[j * n + i] = v.clone();
                z[i * n + j] = v;
            }
        }
        SquaredDistanceMatrix { n, z }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> &T {
        &self.z[i * self.n + j]
    }

    /// Unordered pairs `(i, j)` with `i < j`, lexicographically.
    pub fn pairs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.n).tuple_combinations()
    }

    pub fn to_rows(&self) -> Vec<Vec<T>> {
        self.z.chunks(self.n.max(1)).take(self.n).map(<[T]>::to_vec).collect()
    }

    pub fn map<U: Scalar>(&self, f: impl Fn(&T) -> U) -> SquaredDistanceMatrix<U> {
        SquaredDistanceMatrix { n: self.n, z: self.z.iter().map(f).collect() }
    }

    pub fn scaled(&self, s: &T) -> Self {
        self.map(|x| x.clone() * s.clone())
    }

    /// Largest entry over the pairs of `set`, as a float.
    pub fn max_over(&self, set: &IndexSet) -> f64 {
        set.as_slice()
            .iter()
            .copied()
            .tuple_combinations()
            .map(|(i, j)| self.get(i, j).as_f64())
            .fold(0.0, f64::max)
    }

    /// Scale `M^(|I|-1)` against which the determinant over `set` is judged.
    pub fn det_scale(&self, set: &IndexSet) -> f64 {
        self.max_over(set).powi(set.len() as i32 - 1)
    }

    fn check_set(&self, set: &IndexSet) -> Result<()> {
        match set.iter().find(|&i| i >= self.n) {
            Some(index) => Err(Error::IndexOutOfRange { index, n: self.n }),
            None => Ok(()),
        }
    }
}

/// Ordered list of distinct vertex indices.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct IndexSet(Vec<usize>);

impl IndexSet {
    pub fn new(indices: Vec<usize>) -> Result<Self> {
        if indices.is_empty() {
            return Err(Error::Input("index set is empty".into()));
        }
        if indices.iter().duplicates().next().is_some() {
            return Err(Error::Input(format!("index set {indices:?} has repeated entries")));
        }
        Ok(IndexSet(indices))
    }

    pub(crate) fn from_vec(indices: Vec<usize>) -> Self {
        debug_assert!(indices.iter().all_unique());
        IndexSet(indices)
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.0.iter().copied()
    }

    pub fn contains(&self, i: usize) -> bool {
        self.0.contains(&i)
    }

    pub fn position(&self, i: usize) -> Option<usize> {
        self.0.iter().position(|&x| x == i)
    }

    /// The set with `removed` taken out, order preserved.
    pub fn without(&self, removed: &[usize]) -> IndexSet {
        IndexSet(self.0.iter().copied().filter(|i| !removed.contains(i)).collect())
    }

    pub fn with(&self, extra: usize) -> IndexSet {
        let mut v = self.0.clone();
        v.push(extra);
        IndexSet::from_vec(v)
    }

    /// All `size`-subsets of `0..n`, lexicographically.
    pub fn subsets(n: usize, size: usize) -> impl Iterator<Item = IndexSet> {
        (0..n).combinations(size).map(IndexSet)
    }
}

impl fmt::Display for IndexSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{{}}}", self.0.iter().join(","))
    }
}

/// Bordered matrix of the subset, with `override_entry` replacing the
/// squared distance at the given pair of positions within `set`.
fn bordered<T: Scalar>(
    d: &SquaredDistanceMatrix<T>,
    set: &IndexSet,
    override_entry: Option<(usize, usize, &T)>,
) -> Matrix<T> {
    let idx = set.as_slice();
    let m = idx.len() + 1;
    Matrix::from_fn(m, m, |r, c| match (r, c) {
        (0, 0) => T::zero(),
        (0, _) | (_, 0) => T::one(),
        (r, c) if r == c => T::zero(),
        (r, c) => match override_entry {
            Some((a, b, t)) if (r - 1, c - 1) == (a, b) || (r - 1, c - 1) == (b, a) => t.clone(),
            _ => d.get(idx[r - 1], idx[c - 1]).clone(),
        },
    })
}

/// Cayley-Menger determinant of the points indexed by `set`.
pub fn cmd<T: Scalar>(d: &SquaredDistanceMatrix<T>, set: &IndexSet) -> Result<T> {
    if set.is_empty() {
        return Err(Error::Input("cmd of an empty subset".into()));
    }
    d.check_set(set)?;
    Ok(bordered(d, set, None).det())
}

/// `cmd(set) / M^(|set|-1)`, comparable across subset sizes.
pub fn normalized_cmd<T: Scalar>(d: &SquaredDistanceMatrix<T>, set: &IndexSet) -> Result<f64> {
    let value = cmd(d, set)?.as_f64();
    let scale = d.det_scale(set);
    Ok(if scale > 0.0 { value / scale } else { value })
}

fn factorial(k: usize) -> u128 {
    (1..=k as u128).product()
}

/// Squared k-volume of the simplex on `set`, `k = |set| - 1`:
/// `(-1)^(k+1) / (2^k (k!)^2) · cmd`.
pub fn simplex_volume_sq<T: Scalar>(d: &SquaredDistanceMatrix<T>, set: &IndexSet) -> Result<T> {
    if set.len() < 2 {
        return Err(Error::Input("a simplex needs at least two vertices".into()));
    }
    let k = set.len() - 1;
    let f = factorial(k);
    let denom = T::from_u128((1u128 << k) * f * f).expect("denominator fits scalar");
    Ok(alternating::<T>(k + 1) * cmd(d, set)? / denom)
}

/// The four conditions of Menger's embeddability criterion.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MengerCondition {
    /// At least `d + 1` points.
    Cardinality,
    /// `(-1)^|Y| cmd(Y) >= 0` for every `|Y| <= d + 1`.
    SignPattern,
    /// Some `(d + 1)`-subset with `(-1)^(d+1) cmd > 0`.
    FullRank,
    /// `cmd(Y) = 0` for every `|Y| = d + 2`.
    Vanishing,
}

impl fmt::Display for MengerCondition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MengerCondition::Cardinality => "i",
            MengerCondition::SignPattern => "ii",
            MengerCondition::FullRank => "iii",
            MengerCondition::Vanishing => "iv",
        })
    }
}

/// Wrapper so the report prints `none` when everything passes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct FirstFailure(pub Option<MengerCondition>);

impl fmt::Display for FirstFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.0 {
            Some(c) => c.fmt(f),
            None => f.write_str("none"),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddabilityReport {
    pub passes: bool,
    pub first_failed_condition: FirstFailure,
    pub witness_subset: Option<IndexSet>,
    /// Magnitude of the violation at the witness (raw determinant units).
    pub residual: f64,
}

impl EmbeddabilityReport {
    fn pass() -> Self {
        EmbeddabilityReport {
            passes: true,
            first_failed_condition: FirstFailure(None),
            witness_subset: None,
            residual: 0.0,
        }
    }

    fn fail(condition: MengerCondition, witness: Option<IndexSet>, residual: f64) -> Self {
        EmbeddabilityReport {
            passes: false,
            first_failed_condition: FirstFailure(Some(condition)),
            witness_subset: witness,
            residual,
        }
    }
}

/// Checks whether `d` admits an isometric embedding into `R^dim` whose affine
/// hull is the whole space. Reports the first violated condition, in order,
/// with the first offending subset in lexicographic order.
pub fn menger_check<T: Scalar>(
    d: &SquaredDistanceMatrix<T>,
    dim: usize,
    tol: &Tolerance,
) -> Result<EmbeddabilityReport> {
    if dim == 0 {
        return Err(Error::Input("dimension must be at least 1".into()));
    }
    let n = d.n();
    if n < dim + 1 {
        return Ok(EmbeddabilityReport::fail(MengerCondition::Cardinality, None, (dim + 1 - n) as f64));
    }
    let mut full_rank = false;
    for size in 2..=dim + 1 {
        for set in IndexSet::subsets(n, size) {
            let signed = alternating::<T>(size) * cmd(d, &set)?;
            let scale = d.det_scale(&set);
            match tol.sign(&signed, scale) {
                std::cmp::Ordering::Less => {
                    let residual = signed.as_f64().abs();
                    return Ok(EmbeddabilityReport::fail(MengerCondition::SignPattern, Some(set), residual));
                }
                std::cmp::Ordering::Greater if size == dim + 1 => full_rank = true,
                _ => {}
            }
        }
    }
    if !full_rank {
        return Ok(EmbeddabilityReport::fail(MengerCondition::FullRank, None, 0.0));
    }
    for set in IndexSet::subsets(n, dim + 2) {
        let value = cmd(d, &set)?;
        if !tol.is_zero(&value, d.det_scale(&set)) {
            let residual = value.as_f64().abs();
            return Ok(EmbeddabilityReport::fail(MengerCondition::Vanishing, Some(set), residual));
        }
    }
    Ok(EmbeddabilityReport::pass())
}

/// Coefficients of `cmd` over a subset viewed as `U t² + V t + W` in one entry.
#[derive(Clone, Debug, PartialEq)]
pub struct QuadraticSlice<T> {
    pub u: T,
    pub v: T,
    pub w: T,
}

impl<T: Scalar> QuadraticSlice<T> {
    pub fn eval(&self, t: &T) -> T {
        self.u.clone() * t.clone() * t.clone() + self.v.clone() * t.clone() + self.w.clone()
    }

    /// The linear form `2 U t + V` whose sign separates the two sides.
    pub fn side_form(&self, t: &T) -> T {
        (self.u.clone() + self.u.clone()) * t.clone() + self.v.clone()
    }
}

/// Positions of the two pair members within `set`, validated.
fn pair_positions(set: &IndexSet, pair: (usize, usize)) -> Result<(usize, usize)> {
    if pair.0 == pair.1 {
        return Err(Error::Input(format!("slice pair ({}, {}) repeats a vertex", pair.0, pair.1)));
    }
    let a = set.position(pair.0);
    let b = set.position(pair.1);
    match (a, b) {
        (Some(a), Some(b)) => Ok((a, b)),
        _ => Err(Error::Input(format!("slice pair ({}, {}) is not inside {set}", pair.0, pair.1))),
    }
}

/// Expands `cmd(set)` as a quadratic in `t = z[pair]` by interpolating at
/// `t ∈ {0, s, -s}`. Exact for rational scalars.
pub fn quadratic_slice<T: Scalar>(
    d: &SquaredDistanceMatrix<T>,
    set: &IndexSet,
    pair: (usize, usize),
) -> Result<QuadraticSlice<T>> {
    d.check_set(set)?;
    let (a, b) = pair_positions(set, pair)?;
    let s = if T::EXACT {
        T::one()
    } else {
        let m = d.max_over(set);
        T::from_f64(if m > 0.0 { m } else { 1.0 }).expect("finite scale")
    };
    let at = |t: &T| bordered(d, set, Some((a, b, t))).det();
    let f0 = at(&T::zero());
    let fp = at(&s);
    let fm = at(&-s.clone());
    let two = T::one() + T::one();
    let u = (fp.clone() + fm.clone() - two.clone() * f0.clone()) / (two.clone() * s.clone() * s.clone());
    let v = (fp - fm) / (two * s);
    Ok(QuadraticSlice { u, v, w: f0 })
}

/// Position of two points relative to the hyperplane spanned by the rest.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SideClass {
    SameSide,
    OnHyperplane,
    OppositeSide,
}

/// Classifies the pair against the hyperplane through `set \ pair`, from
/// distances alone. `set` must hold `dim + 2` points that embed in `R^dim`.
pub fn side_classify<T: Scalar>(
    d: &SquaredDistanceMatrix<T>,
    set: &IndexSet,
    pair: (usize, usize),
    dim: usize,
    tol: &Tolerance,
) -> Result<SideClass> {
    if set.len() != dim + 2 {
        return Err(Error::Input(format!("side classification needs {} points, got {}", dim + 2, set.len())));
    }
    let slice = quadratic_slice(d, set, pair)?;
    let m = d.max_over(set);
    if !tol.is_zero(&slice.eval(d.get(pair.0, pair.1)), m.powi(dim as i32 + 1)) {
        return Err(Error::Precondition(format!("cmd over {set} does not vanish; not embeddable in R^{dim}")));
    }
    let face = set.without(&[pair.0, pair.1]);
    if tol.is_zero(&cmd(d, &face)?, d.det_scale(&face)) {
        return Err(Error::Precondition(format!("face {face} is degenerate")));
    }
    Ok(classify_form(&slice.side_form(d.get(pair.0, pair.1)), dim, m.powi(dim as i32), tol))
}

/// Sign rule on the linear form: `(-1)^dim (2Ut + V)` positive means same side.
pub(crate) fn classify_form<T: Scalar>(form: &T, dim: usize, scale: f64, tol: &Tolerance) -> SideClass {
    let signed = alternating::<T>(dim) * form.clone();
    match tol.sign(&signed, scale) {
        std::cmp::Ordering::Greater => SideClass::SameSide,
        std::cmp::Ordering::Equal => SideClass::OnHyperplane,
        std::cmp::Ordering::Less => SideClass::OppositeSide,
    }
}
