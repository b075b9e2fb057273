//! The polynomial system in the squared-distance variables `z`, `z'` and the
//! ratio `α`, and a checker that evaluates a concrete assignment against it.
//!
//! Condition families, in order:
//!
//! | label | meaning |
//! |-------|---------|
//! | 6  | every `z`, `z'` is nonnegative |
//! | 7  | edge entries equal the squared prescribed lengths |
//! | 8  | `(-1)^|I| acmd(I) >= 0` for `|I| <= d + 1`, both sides |
//! | 9  | some `(d+1)`-subset `I*` has `acmd(Z_I*) != 0` |
//! | 10 | `acmd(I) = 0` for `|I| = d + 2`, both sides |
//! | 11 | `acmd(Z'_I) = α acmd(Z_I)` for `|I| = d + 1`, `α > 0` |
//! | 12 | every vertex outside `I*` sits on matching sides of matching facets |

use std::collections::HashMap;
use std::fmt;

use crate::cm::{cmd, quadratic_slice, IndexSet, SquaredDistanceMatrix};
use crate::error::{Error, Result};
use crate::scalar::{alternating, Scalar, Tolerance};

/// A bar with its two prescribed lengths. Stored with `i < j`.
#[derive(Clone, Debug, PartialEq)]
pub struct Edge<T> {
    pub i: usize,
    pub j: usize,
    pub lambda: T,
    pub lambda_prime: T,
}

/// Graph, target dimension and the two edge-length assignments.
#[derive(Clone, Debug)]
pub struct Instance<T> {
    n: usize,
    d: usize,
    edges: Vec<Edge<T>>,
    lookup: HashMap<(usize, usize), usize>,
}

impl<T: Scalar> Instance<T> {
    /// Validates and normalizes the edge list (`i < j`, no loops, no
    /// duplicates, positive lengths).
    pub fn new(n: usize, d: usize, edges: Vec<Edge<T>>) -> Result<Self> {
        if d == 0 {
            return Err(Error::Input("dimension must be at least 1".into()));
        }
        let mut lookup = HashMap::new();
        let mut normalized = Vec::with_capacity(edges.len());
        for (k, e) in edges.into_iter().enumerate() {
            if e.i == e.j {
                return Err(Error::Input(format!("edge {k} is a self-loop at vertex {}", e.i)));
            }
            for v in [e.i, e.j] {
                if v >= n {
                    return Err(Error::IndexOutOfRange { index: v, n });
                }
            }
            if !(e.lambda > T::zero() && e.lambda_prime > T::zero()) {
                return Err(Error::Input(format!("edge {k} ({}, {}) has a nonpositive length", e.i, e.j)));
            }
            let key = (e.i.min(e.j), e.i.max(e.j));
            if lookup.insert(key, normalized.len()).is_some() {
                return Err(Error::Input(format!("duplicate edge ({}, {})", key.0, key.1)));
            }
            normalized.push(Edge { i: key.0, j: key.1, ..e });
        }
        Ok(Instance { n, d, edges: normalized, lookup })
    }

    /// Convenience constructor from `(i, j, λ, λ')` tuples.
    pub fn from_tuples(n: usize, d: usize, edges: Vec<(usize, usize, T, T)>) -> Result<Self> {
        Self::new(
            n,
            d,
            edges.into_iter().map(|(i, j, lambda, lambda_prime)| Edge { i, j, lambda, lambda_prime }).collect(),
        )
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn edges(&self) -> &[Edge<T>] {
        &self.edges
    }

    pub fn edge(&self, i: usize, j: usize) -> Option<&Edge<T>> {
        self.lookup.get(&(i.min(j), i.max(j))).map(|&k| &self.edges[k])
    }

    pub fn is_edge(&self, i: usize, j: usize) -> bool {
        self.lookup.contains_key(&(i.min(j), i.max(j)))
    }

    pub fn is_complete(&self) -> bool {
        self.edges.len() == self.n * self.n.saturating_sub(1) / 2
    }

    /// Whether every pair inside `set` is an edge.
    pub fn is_clique(&self, set: &IndexSet) -> bool {
        let s = set.as_slice();
        s.iter().enumerate().all(|(a, &i)| s[a + 1..].iter().all(|&j| self.is_edge(i, j)))
    }

    pub fn with_dimension(&self, d: usize) -> Result<Self> {
        Self::new(self.n, d, self.edges.clone())
    }

    pub fn map<U: Scalar>(&self, f: impl Fn(&T) -> U) -> Instance<U> {
        Instance {
            n: self.n,
            d: self.d,
            edges: self
                .edges
                .iter()
                .map(|e| Edge { i: e.i, j: e.j, lambda: f(&e.lambda), lambda_prime: f(&e.lambda_prime) })
                .collect(),
            lookup: self.lookup.clone(),
        }
    }

    pub fn to_f64(&self) -> Instance<f64> {
        self.map(Scalar::as_f64)
    }
}

/// Candidate solution `(z, z', α)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Assignment<T> {
    pub z: SquaredDistanceMatrix<T>,
    pub z_prime: SquaredDistanceMatrix<T>,
    pub alpha: T,
}

impl<T: Scalar> Assignment<T> {
    pub fn map<U: Scalar>(&self, f: impl Fn(&T) -> U) -> Assignment<U> {
        Assignment { z: self.z.map(&f), z_prime: self.z_prime.map(&f), alpha: f(&self.alpha) }
    }
}

/// Which of the two frameworks a quantity belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Side {
    Left,
    Right,
}

impl Side {
    pub fn name(self) -> &'static str {
        match self {
            Side::Left => "left",
            Side::Right => "right",
        }
    }
}

/// The seven condition families of the system.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Condition {
    NonNegative,
    EdgeLength,
    SubsetSign,
    BaseSimplex,
    Vanishing,
    CommonRatio,
    MatchedSides,
}

impl Condition {
    pub const ALL: [Condition; 7] = [
        Condition::NonNegative,
        Condition::EdgeLength,
        Condition::SubsetSign,
        Condition::BaseSimplex,
        Condition::Vanishing,
        Condition::CommonRatio,
        Condition::MatchedSides,
    ];

    /// Conventional equation label, `"6"` through `"12"`.
    pub fn label(self) -> &'static str {
        match self {
            Condition::NonNegative => "6",
            Condition::EdgeLength => "7",
            Condition::SubsetSign => "8",
            Condition::BaseSimplex => "9",
            Condition::Vanishing => "10",
            Condition::CommonRatio => "11",
            Condition::MatchedSides => "12",
        }
    }

    pub fn from_label(label: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|c| c.label() == label.trim_matches(|c| c == '(' || c == ')'))
    }
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({})", self.label())
    }
}

/// Outcome of one condition family.
#[derive(Clone, Debug, PartialEq)]
pub struct ConditionEntry {
    pub condition: Condition,
    pub passed: bool,
    /// Worst subset (or pair, or edge) for the family.
    pub witness: Option<IndexSet>,
    pub side: Option<Side>,
    /// Worst normalized violation; zero when nothing is violated.
    pub residual: f64,
    pub checked: usize,
    /// Members skipped because their precondition does not hold.
    pub inapplicable: usize,
}

impl ConditionEntry {
    fn new(condition: Condition) -> Self {
        ConditionEntry {
            condition,
            passed: true,
            witness: None,
            side: None,
            residual: 0.0,
            checked: 0,
            inapplicable: 0,
        }
    }

    /// Records a violation, keeping the earliest among equally bad ones.
    fn violate(&mut self, residual: f64, witness: IndexSet, side: Option<Side>) {
        if self.passed || residual > self.residual {
            self.residual = residual;
            self.witness = Some(witness);
            self.side = side;
        }
        self.passed = false;
    }
}

/// Smallest and largest determinant ratio seen over `(d+1)`-subsets.
#[derive(Clone, Debug, PartialEq)]
pub struct RatioExtremes {
    pub min: (IndexSet, f64),
    pub max: (IndexSet, f64),
}

impl RatioExtremes {
    fn observe(slot: &mut Option<RatioExtremes>, set: &IndexSet, ratio: f64) {
        match slot {
            None => *slot = Some(RatioExtremes { min: (set.clone(), ratio), max: (set.clone(), ratio) }),
            Some(e) => {
                if ratio < e.min.1 {
                    e.min = (set.clone(), ratio);
                }
                if ratio > e.max.1 {
                    e.max = (set.clone(), ratio);
                }
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConditionReport {
    pub entries: Vec<ConditionEntry>,
    pub base_simplex: Option<IndexSet>,
    pub ratio_extremes: Option<RatioExtremes>,
    pub passed: bool,
}

impl ConditionReport {
    pub fn entry(&self, c: Condition) -> &ConditionEntry {
        self.entries.iter().find(|e| e.condition == c).expect("every condition is reported")
    }

    pub fn first_failure(&self) -> Option<&ConditionEntry> {
        self.entries.iter().find(|e| !e.passed)
    }
}

/// A pinned pair with both squared lengths.
#[derive(Clone, Debug, PartialEq)]
pub struct PinnedPair<T> {
    pub i: usize,
    pub j: usize,
    pub z: T,
    pub z_prime: T,
}

/// One member of the matched-side family: vertex `outside` against facet `r`
/// of base candidate `base`.
#[derive(Clone, Debug, PartialEq)]
pub struct MatchedSide {
    pub base: IndexSet,
    pub outside: usize,
    pub r: usize,
}

/// Enumerated variables and constraint families of an instance.
#[derive(Clone, Debug)]
pub struct SystemDescription<T> {
    pub n: usize,
    pub d: usize,
    /// Non-edge pairs; each carries one free `z` and one free `z'`.
    pub free_pairs: Vec<(usize, usize)>,
    pub pinned: Vec<PinnedPair<T>>,
    /// Subsets with `2 <= |I| <= d + 1` (sign family, per side).
    pub sign_subsets: Vec<IndexSet>,
    /// `(d+1)`-subsets: candidates for `I*` and members of the ratio family.
    pub base_candidates: Vec<IndexSet>,
    /// `(d+2)`-subsets (vanishing family, per side).
    pub vanishing_subsets: Vec<IndexSet>,
    /// Matched-side constraints for every base candidate.
    pub matched_sides: Vec<MatchedSide>,
}

pub fn build_system<T: Scalar>(inst: &Instance<T>) -> SystemDescription<T> {
    let (n, d) = (inst.n, inst.d);
    let mut free_pairs = Vec::new();
    let mut pinned = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            match inst.edge(i, j) {
                Some(e) => pinned.push(PinnedPair {
                    i,
                    j,
                    z: e.lambda.clone() * e.lambda.clone(),
                    z_prime: e.lambda_prime.clone() * e.lambda_prime.clone(),
                }),
                None => free_pairs.push((i, j)),
            }
        }
    }
    let sign_subsets = (2..=d + 1).flat_map(|k| IndexSet::subsets(n, k)).collect();
    let base_candidates: Vec<IndexSet> = IndexSet::subsets(n, d + 1).collect();
    let vanishing_subsets = IndexSet::subsets(n, d + 2).collect();
    let matched_sides = base_candidates
        .iter()
        .flat_map(|base| {
            (0..n)
                .filter(|v| !base.contains(*v))
                .flat_map(move |outside| (0..=d).map(move |r| MatchedSide { base: base.clone(), outside, r }))
        })
        .collect();
    SystemDescription { n, d, free_pairs, pinned, sign_subsets, base_candidates, vanishing_subsets, matched_sides }
}

/// The `(d+1)`-subset of largest normalized `|acmd|`, earliest on ties.
pub fn find_base_simplex<T: Scalar>(z: &SquaredDistanceMatrix<T>, d: usize, tol: &Tolerance) -> Result<IndexSet> {
    if z.n() < d + 1 {
        return Err(Error::Input(format!("{} vertices cannot span R^{d}", z.n())));
    }
    let mut best: Option<(IndexSet, f64, bool)> = None;
    for set in IndexSet::subsets(z.n(), d + 1) {
        let value = cmd(z, &set)?;
        let scale = z.det_scale(&set);
        let zero = tol.is_zero(&value, scale);
        let norm = if scale > 0.0 { value.as_f64().abs() / scale } else { value.as_f64().abs() };
        let better = match &best {
            None => true,
            Some((_, b, bz)) => (*bz && !zero) || (zero == *bz && norm > *b),
        };
        if better {
            best = Some((set, norm, zero));
        }
    }
    match best {
        Some((set, _, false)) => Ok(set),
        _ => Err(Error::NoBaseSimplex { size: d + 1 }),
    }
}

/// `acmd(Z'_I*) / acmd(Z_I*)`, required to be positive.
pub fn estimate_alpha<T: Scalar>(
    z: &SquaredDistanceMatrix<T>,
    z_prime: &SquaredDistanceMatrix<T>,
    base: &IndexSet,
    tol: &Tolerance,
) -> Result<T> {
    let left = cmd(z, base)?;
    if tol.is_zero(&left, z.det_scale(base)) {
        return Err(Error::Precondition(format!("acmd over {base} vanishes")));
    }
    let ratio = cmd(z_prime, base)? / left;
    if ratio > T::zero() {
        Ok(ratio)
    } else {
        Err(Error::AlphaInfeasible { ratio: ratio.as_f64() })
    }
}

fn normalized(value: f64, scale: f64) -> f64 {
    if scale > 0.0 {
        value / scale
    } else {
        value
    }
}

/// Evaluates every condition family for `a`. Failures are reported, not
/// returned as errors; only shape mismatches error.
pub fn check_assignment<T: Scalar>(inst: &Instance<T>, a: &Assignment<T>, tol: &Tolerance) -> Result<ConditionReport> {
    let (n, d) = (inst.n, inst.d);
    if a.z.n() != n || a.z_prime.n() != n {
        return Err(Error::Input(format!(
            "assignment covers {} and {} vertices, instance has {n}",
            a.z.n(),
            a.z_prime.n()
        )));
    }
    let sides = [(Side::Left, &a.z), (Side::Right, &a.z_prime)];

    let mut nonneg = ConditionEntry::new(Condition::NonNegative);
    for (side, z) in sides {
        let m = z.pairs().map(|(i, j)| z.get(i, j).as_f64().abs()).fold(0.0, f64::max);
        for (i, j) in z.pairs() {
            nonneg.checked += 1;
            let v = z.get(i, j);
            if tol.sign(v, m) == std::cmp::Ordering::Less {
                nonneg.violate(-v.as_f64(), IndexSet::from_vec(vec![i, j]), Some(side));
            }
        }
    }

    let mut pinning = ConditionEntry::new(Condition::EdgeLength);
    for e in &inst.edges {
        for (side, z, len) in [(Side::Left, &a.z, &e.lambda), (Side::Right, &a.z_prime, &e.lambda_prime)] {
            pinning.checked += 1;
            let target = len.clone() * len.clone();
            let diff = z.get(e.i, e.j).clone() - target.clone();
            if !tol.is_zero(&diff, target.as_f64()) {
                let rel = diff.as_f64().abs() / target.as_f64();
                pinning.violate(rel, IndexSet::from_vec(vec![e.i, e.j]), Some(side));
            }
        }
    }

    let mut signs = ConditionEntry::new(Condition::SubsetSign);
    for size in 2..=d + 1 {
        for set in IndexSet::subsets(n, size) {
            for (side, z) in sides {
                signs.checked += 1;
                let signed = alternating::<T>(size) * cmd(z, &set)?;
                let scale = z.det_scale(&set);
                if tol.sign(&signed, scale) == std::cmp::Ordering::Less {
                    signs.violate(normalized(-signed.as_f64(), scale), set.clone(), Some(side));
                }
            }
        }
    }

    let mut base_entry = ConditionEntry::new(Condition::BaseSimplex);
    base_entry.checked = 1;
    let base = match find_base_simplex(&a.z, d, tol) {
        Ok(set) => {
            base_entry.witness = Some(set.clone());
            base_entry.side = Some(Side::Left);
            Some(set)
        }
        Err(_) => {
            base_entry.passed = false;
            base_entry.residual = 1.0;
            None
        }
    };

    let mut vanishing = ConditionEntry::new(Condition::Vanishing);
    for set in IndexSet::subsets(n, d + 2) {
        for (side, z) in sides {
            vanishing.checked += 1;
            let value = cmd(z, &set)?;
            let scale = z.det_scale(&set);
            if !tol.is_zero(&value, scale) {
                vanishing.violate(normalized(value.as_f64().abs(), scale), set.clone(), Some(side));
            }
        }
    }

    let mut ratio_entry = ConditionEntry::new(Condition::CommonRatio);
    let mut extremes = None;
    if !(a.alpha > T::zero()) {
        ratio_entry.passed = false;
        ratio_entry.residual = 1.0;
    }
    let alpha = a.alpha.as_f64();
    for set in IndexSet::subsets(n, d + 1) {
        let left = cmd(&a.z, &set)?;
        let right = cmd(&a.z_prime, &set)?;
        let left_zero = tol.is_zero(&left, a.z.det_scale(&set));
        let right_zero = tol.is_zero(&right, a.z_prime.det_scale(&set));
        match (left_zero, right_zero) {
            (true, true) => ratio_entry.inapplicable += 1,
            (true, false) | (false, true) => {
                ratio_entry.checked += 1;
                // Near the zero threshold the two sides can land on
                // different sides of it while still satisfying the equation.
                if !tol.ratios_agree(&right, &(a.alpha.clone() * left.clone())) {
                    ratio_entry.violate(1.0, set, Some(if left_zero { Side::Left } else { Side::Right }));
                }
            }
            (false, false) => {
                ratio_entry.checked += 1;
                let ratio = right / left;
                RatioExtremes::observe(&mut extremes, &set, ratio.as_f64());
                if !(ratio > T::zero()) || !tol.ratios_agree(&ratio, &a.alpha) {
                    let deviation = (ratio.as_f64() - alpha).abs() / alpha.abs().max(f64::MIN_POSITIVE);
                    ratio_entry.violate(deviation, set, None);
                }
            }
        }
    }

    let mut matched = ConditionEntry::new(Condition::MatchedSides);
    match &base {
        None => {
            matched.passed = false;
        }
        Some(base) => check_matched_sides(a, base, d, tol, &mut matched)?,
    }

    let entries = vec![nonneg, pinning, signs, base_entry, vanishing, ratio_entry, matched];
    let passed = entries.iter().all(|e| e.passed);
    Ok(ConditionReport { entries, base_simplex: base, ratio_extremes: extremes, passed })
}

fn check_matched_sides<T: Scalar>(
    a: &Assignment<T>,
    base: &IndexSet,
    d: usize,
    tol: &Tolerance,
    entry: &mut ConditionEntry,
) -> Result<()> {
    let n = a.z.n();
    for outside in (0..n).filter(|v| !base.contains(*v)) {
        let set = base.with(outside);
        for &apex in base.as_slice() {
            let face = base.without(&[apex]);
            let degenerate = [&a.z, &a.z_prime].iter().any(|z| {
                face.len() >= 2 && cmd(z, &face).map(|v| tol.is_zero(&v, z.det_scale(&face))).unwrap_or(true)
            });
            if degenerate {
                entry.inapplicable += 1;
                continue;
            }
            entry.checked += 1;
            let form = |z: &SquaredDistanceMatrix<T>| -> Result<(T, f64)> {
                let slice = quadratic_slice(z, &set, (apex, outside))?;
                Ok((slice.side_form(z.get(apex, outside)), z.max_over(&set).powi(d as i32)))
            };
            let (left, ls) = form(&a.z)?;
            let (right, rs) = form(&a.z_prime)?;
            let (lsign, rsign) = (tol.sign(&left, ls), tol.sign(&right, rs));
            let (ln, rn) = (normalized(left.as_f64().abs(), ls), normalized(right.as_f64().abs(), rs));
            let mismatch = if lsign == rsign {
                None
            } else if lsign == std::cmp::Ordering::Equal || rsign == std::cmp::Ordering::Equal {
                Some(ln.max(rn))
            } else {
                Some(ln.min(rn))
            };
            if let Some(residual) = mismatch {
                entry.violate(residual, IndexSet::from_vec(vec![apex, outside]), None);
            }
        }
    }
    Ok(())
}
