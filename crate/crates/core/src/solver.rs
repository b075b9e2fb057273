//! Decision procedure: definitive NO from pinned data, exact answers where
//! they are cheap, and a multi-start least-squares search otherwise.
//!
//! A YES always carries a certificate that has been re-checked against the
//! full condition system and the framework-level conditions. A NO always
//! carries a witness built only from prescribed quantities. Anything else is
//! UNKNOWN; failed numeric search never produces a NO.

use std::collections::VecDeque;

use num_rational::BigRational;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use crate::cm::{cmd, IndexSet, SquaredDistanceMatrix};
use crate::embed::{distances_of, Configuration};
use crate::error::{Error, Result};
use crate::linalg::{row_reduce, Matrix};
use crate::lm::{minimize, LeastSquares, LmOptions};
use crate::reconstruct::{reconstruct, verify_frameworks, AffineMap, FrameworkReport};
use crate::scalar::{alternating, Scalar, Tolerance};
use crate::system::{check_assignment, find_base_simplex, Assignment, Condition, ConditionReport, Instance, Side};

/// Node budget for the exhaustive orientation search on the line.
const LINE_NODE_LIMIT: usize = 1 << 20;

/// Lower bound kept on `|det A|` (normalized units) by the search barrier.
const DET_BARRIER: f64 = 1e-3;

/// Spread of the random perturbation of the identity used to start `A`.
const MAP_INIT_SIGMA: f64 = 0.5;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SearchBudget {
    pub restarts: usize,
    pub iterations: usize,
    pub seed: u64,
    /// Stop a restart once the normalized sum of squared residuals is below this.
    pub target_residual: f64,
}

impl Default for SearchBudget {
    fn default() -> Self {
        SearchBudget { restarts: 48, iterations: 300, seed: 0x5eed, target_residual: 1e-26 }
    }
}

impl SearchBudget {
    pub fn validate(&self) -> Result<()> {
        if self.restarts == 0 || self.iterations == 0 || !(self.target_residual > 0.0) {
            return Err(Error::Input("search budget needs positive restarts, iterations and target".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum VerdictKind {
    Yes,
    No,
    Unknown,
}

impl VerdictKind {
    pub fn name(self) -> &'static str {
        match self {
            VerdictKind::Yes => "YES",
            VerdictKind::No => "NO",
            VerdictKind::Unknown => "UNKNOWN",
        }
    }
}

/// Everything a YES claims, already re-validated.
#[derive(Clone, Debug)]
pub struct Certificate {
    pub assignment: Assignment<f64>,
    pub left: Configuration<f64>,
    pub right: Configuration<f64>,
    pub map: AffineMap<f64>,
    pub report: ConditionReport,
    pub frameworks: FrameworkReport,
}

/// Why an instance has no solution.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Obstruction {
    /// Fewer than `d + 1` vertices cannot span `R^d`.
    TooFewVertices,
    /// A condition of the system fails on edge-pinned quantities alone.
    Condition(Condition),
    /// d = 1: some component cannot be laid out on a line.
    LineRealization,
    /// d = 1: the ratios `λ'/λ` are not all equal.
    LineScale,
    /// The fixed left framework does not realize its lengths.
    LeftLengths,
    /// The fixed left framework does not span the space.
    LeftHull,
    /// No positive definite metric reproduces the right lengths from the
    /// fixed left framework.
    MetricInfeasible,
}

impl Obstruction {
    pub fn name(&self) -> String {
        match self {
            Obstruction::TooFewVertices => "too-few-vertices".into(),
            Obstruction::Condition(c) => format!("condition-{}", c.label()),
            Obstruction::LineRealization => "line-realization".into(),
            Obstruction::LineScale => "line-scale".into(),
            Obstruction::LeftLengths => "left-lengths".into(),
            Obstruction::LeftHull => "left-hull".into(),
            Obstruction::MetricInfeasible => "metric-infeasible".into(),
        }
    }
}

/// Witness behind a NO. `values` are exact rationals recomputed from the
/// prescribed data (determinants, ratios or lengths, per obstruction).
#[derive(Clone, Debug, PartialEq)]
pub struct NoWitness {
    pub obstruction: Obstruction,
    pub side: Option<Side>,
    pub subsets: Vec<IndexSet>,
    pub values: Vec<BigRational>,
    pub note: String,
}

/// Which part of the procedure produced the verdict.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Route {
    Counting,
    PinnedSubsystem,
    CompleteGraph,
    LineOracle,
    Search,
    FixedLeftLinear,
    FixedLeftSearch,
}

impl Route {
    pub fn name(self) -> &'static str {
        match self {
            Route::Counting => "counting",
            Route::PinnedSubsystem => "pinned-subsystem",
            Route::CompleteGraph => "complete-graph",
            Route::LineOracle => "line-oracle",
            Route::Search => "search",
            Route::FixedLeftLinear => "fixed-left-linear",
            Route::FixedLeftSearch => "fixed-left-search",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Diagnostics {
    pub route: Route,
    pub restarts_used: usize,
    pub best_residual: f64,
    pub note: String,
}

#[derive(Clone, Debug)]
pub struct Verdict {
    pub kind: VerdictKind,
    pub certificate: Option<Certificate>,
    pub witness: Option<NoWitness>,
    pub diagnostics: Diagnostics,
}

impl Verdict {
    fn yes(certificate: Certificate, diagnostics: Diagnostics) -> Self {
        Verdict { kind: VerdictKind::Yes, certificate: Some(certificate), witness: None, diagnostics }
    }

    fn no(witness: NoWitness, route: Route) -> Self {
        Verdict {
            kind: VerdictKind::No,
            certificate: None,
            witness: Some(witness),
            diagnostics: Diagnostics { route, restarts_used: 0, best_residual: 0.0, note: String::new() },
        }
    }

    fn unknown(diagnostics: Diagnostics) -> Self {
        Verdict { kind: VerdictKind::Unknown, certificate: None, witness: None, diagnostics }
    }
}

fn diag(route: Route) -> Diagnostics {
    Diagnostics { route, restarts_used: 0, best_residual: 0.0, note: String::new() }
}

/// Full decision attempt for an instance.
pub fn solve<T: Scalar>(inst: &Instance<T>, budget: &SearchBudget, tol: &Tolerance) -> Result<Verdict> {
    budget.validate()?;
    let (n, d) = (inst.n(), inst.dim());
    if n < d + 1 {
        return Ok(Verdict::no(too_few(n, d), Route::Counting));
    }
    if let Some(w) = pinned_obstruction(inst, tol)? {
        return Ok(Verdict::no(w, Route::PinnedSubsystem));
    }
    if inst.is_complete() {
        return complete_graph_decision(inst, tol);
    }
    if d == 1 {
        match line_decide(inst, tol)? {
            LineDecision::No(w) => return Ok(Verdict::no(w, Route::LineOracle)),
            LineDecision::Yes { positions, scale } => {
                if let Some(cert) = line_certificate(inst, &positions, &scale, tol)? {
                    return Ok(Verdict::yes(cert, diag(Route::LineOracle)));
                }
                let found = search(&inst.to_f64(), budget, tol)?;
                if found.kind == VerdictKind::Yes {
                    return Ok(found);
                }
                return Err(Error::Inconsistent(
                    "line oracle found a layout that neither verifies nor is reproduced by search".into(),
                ));
            }
            LineDecision::Undecided => {}
        }
    }
    search(&inst.to_f64(), budget, tol)
}

fn too_few(n: usize, d: usize) -> NoWitness {
    NoWitness {
        obstruction: Obstruction::TooFewVertices,
        side: None,
        subsets: vec![],
        values: vec![BigRational::from_integer(n.into()), BigRational::from_integer((d + 1).into())],
        note: format!("{n} vertices cannot span R^{d}"),
    }
}

fn pinned_matrix<T: Scalar>(inst: &Instance<T>, side: Side) -> SquaredDistanceMatrix<T> {
    SquaredDistanceMatrix::from_pairs(inst.n(), |i, j| match inst.edge(i, j) {
        Some(e) => {
            let l = if side == Side::Left { &e.lambda } else { &e.lambda_prime };
            l.clone() * l.clone()
        }
        None => T::zero(),
    })
}

fn exact_cmd<T: Scalar>(inst: &Instance<T>, side: Side, set: &IndexSet) -> Result<BigRational> {
    let exact = inst.map(Scalar::to_rational);
    cmd(&pinned_matrix(&exact, side), set)
}

/// Looks for a violated condition among subsets whose pairs are all edges.
/// Such a violation involves no free variable, so it rules the instance out.
pub fn pinned_obstruction<T: Scalar>(inst: &Instance<T>, tol: &Tolerance) -> Result<Option<NoWitness>> {
    let (n, d) = (inst.n(), inst.dim());
    let left = pinned_matrix(inst, Side::Left);
    let right = pinned_matrix(inst, Side::Right);
    let sides = [(Side::Left, &left), (Side::Right, &right)];
    let mut simplices: Vec<(IndexSet, T, T)> = Vec::new();
    for size in 2..=(d + 2).min(n) {
        for set in IndexSet::subsets(n, size).filter(|s| inst.is_clique(s)) {
            let values = [cmd(&left, &set)?, cmd(&right, &set)?];
            for ((side, z), value) in sides.iter().zip(&values) {
                let scale = z.det_scale(&set);
                let violated = if size <= d + 1 {
                    let signed = alternating::<T>(size) * value.clone();
                    tol.sign(&signed, scale) == std::cmp::Ordering::Less
                } else {
                    !tol.is_zero(value, scale)
                };
                if violated {
                    let condition = if size <= d + 1 { Condition::SubsetSign } else { Condition::Vanishing };
                    return Ok(Some(NoWitness {
                        obstruction: Obstruction::Condition(condition),
                        side: Some(*side),
                        values: vec![exact_cmd(inst, *side, &set)?],
                        note: format!("acmd over edge-complete subset {set} on the {} side", side.name()),
                        subsets: vec![set],
                    }));
                }
            }
            if size == d + 1 {
                let [a, b] = values;
                simplices.push((set, a, b));
            }
        }
    }

    // Floats: only clearly nonzero determinants count against a zero, and
    // only those enter the ratio comparison.
    let solid = Tolerance { rel: tol.rel.max(tol.ratio), ..*tol };
    let mut ratios: Vec<(IndexSet, T)> = Vec::new();
    for (set, a, b) in simplices {
        let (ls, rs) = (left.det_scale(&set), right.det_scale(&set));
        let za = tol.is_zero(&a, ls);
        let zb = tol.is_zero(&b, rs);
        let (sa, sb) = (!solid.is_zero(&a, ls), !solid.is_zero(&b, rs));
        if (za && sb) || (zb && sa) {
            return Ok(Some(NoWitness {
                obstruction: Obstruction::Condition(Condition::CommonRatio),
                side: Some(if za { Side::Left } else { Side::Right }),
                values: vec![exact_cmd(inst, Side::Left, &set)?, exact_cmd(inst, Side::Right, &set)?],
                note: format!("acmd over {set} vanishes on one side only"),
                subsets: vec![set],
            }));
        }
        if sa && sb {
            ratios.push((set, b / a));
        }
    }
    if let (Some(lo), Some(hi)) = (
        ratios.iter().min_by(|x, y| x.1.partial_cmp(&y.1).unwrap_or(std::cmp::Ordering::Equal)),
        ratios.iter().rev().max_by(|x, y| x.1.partial_cmp(&y.1).unwrap_or(std::cmp::Ordering::Equal)),
    ) {
        // `rev().max_by` keeps the lexicographically first maximum.
        if lo.1 <= T::zero() || !tol.ratios_agree(&lo.1, &hi.1) {
            let exact_ratio = |set: &IndexSet| -> Result<BigRational> {
                Ok(exact_cmd(inst, Side::Right, set)? / exact_cmd(inst, Side::Left, set)?)
            };
            return Ok(Some(NoWitness {
                obstruction: Obstruction::Condition(Condition::CommonRatio),
                side: None,
                values: vec![exact_ratio(&lo.0)?, exact_ratio(&hi.0)?],
                note: format!("edge-complete simplices {} and {} scale by different factors", lo.0, hi.0),
                subsets: vec![lo.0.clone(), hi.0.clone()],
            }));
        }
    }
    Ok(None)
}

fn complete_graph_decision<T: Scalar>(inst: &Instance<T>, tol: &Tolerance) -> Result<Verdict> {
    let z = pinned_matrix(inst, Side::Left);
    let z_prime = pinned_matrix(inst, Side::Right);
    let d = inst.dim();
    let base = match find_base_simplex(&z, d, tol) {
        Ok(b) => b,
        Err(_) => {
            return Ok(Verdict::no(
                NoWitness {
                    obstruction: Obstruction::Condition(Condition::BaseSimplex),
                    side: Some(Side::Left),
                    subsets: vec![],
                    values: vec![],
                    note: format!("every {}-subset is degenerate; the left lengths do not span R^{d}", d + 1),
                },
                Route::CompleteGraph,
            ))
        }
    };
    let alpha = cmd(&z_prime, &base)? / cmd(&z, &base)?;
    let a = Assignment { z, z_prime, alpha };
    let report = check_assignment(inst, &a, tol)?;
    if let Some(failure) = report.first_failure() {
        let subsets: Vec<IndexSet> = failure.witness.iter().cloned().collect();
        let values = match (failure.condition, failure.side, subsets.first()) {
            (Condition::SubsetSign | Condition::Vanishing, Some(side), Some(set)) => vec![exact_cmd(inst, side, set)?],
            _ => vec![],
        };
        return Ok(Verdict::no(
            NoWitness {
                obstruction: Obstruction::Condition(failure.condition),
                side: failure.side,
                subsets,
                values,
                note: "all squared distances are pinned by edges".into(),
            },
            Route::CompleteGraph,
        ));
    }
    let inst64 = inst.to_f64();
    let a64 = a.map(Scalar::as_f64);
    match certify_assignment(&inst64, &a64, tol) {
        Ok(cert) => Ok(Verdict::yes(cert, diag(Route::CompleteGraph))),
        Err(e) => Ok(Verdict::unknown(Diagnostics {
            note: format!("pinned assignment passes the checker but does not reconstruct: {e}"),
            ..diag(Route::CompleteGraph)
        })),
    }
}

/// Certificate through the constructive route: embed both sides, map the
/// base simplex, and verify.
pub fn certify_assignment(inst: &Instance<f64>, a: &Assignment<f64>, tol: &Tolerance) -> Result<Certificate> {
    let rec = reconstruct(inst, a, tol)?;
    let report = check_assignment(inst, a, tol)?;
    let frameworks = verify_frameworks(inst, &rec.left, &rec.right, &rec.map, tol)?;
    if !frameworks.passed {
        return Err(Error::Reconstruction { residual: frameworks.affine.residual, limit: 0.0 });
    }
    Ok(Certificate { assignment: a.clone(), left: rec.left, right: rec.right, map: rec.map, report, frameworks })
}

/// Certificate from explicit frameworks: derive the assignment, then check
/// both the system and the framework conditions.
pub fn certify_frameworks(
    inst: &Instance<f64>,
    left: &Configuration<f64>,
    map: &AffineMap<f64>,
    tol: &Tolerance,
) -> Result<Option<Certificate>> {
    let right = map.apply_all(left);
    let det = map.det();
    let assignment = Assignment { z: distances_of(left), z_prime: distances_of(&right), alpha: det * det };
    let report = check_assignment(inst, &assignment, tol)?;
    if !report.passed {
        return Ok(None);
    }
    let frameworks = verify_frameworks(inst, left, &right, map, tol)?;
    if !frameworks.passed {
        return Ok(None);
    }
    Ok(Some(Certificate { assignment, left: left.clone(), right, map: map.clone(), report, frameworks }))
}

enum LineDecision<T> {
    Yes { positions: Vec<T>, scale: T },
    No(NoWitness),
    Undecided,
}

/// Exact decision for `d = 1`, falling back to [`search`] only when the
/// orientation enumeration exceeds its node budget.
pub fn line_oracle<T: Scalar>(inst: &Instance<T>, tol: &Tolerance) -> Result<Verdict> {
    if inst.dim() != 1 {
        return Err(Error::Input(format!("line oracle needs d = 1, got d = {}", inst.dim())));
    }
    match line_decide(inst, tol)? {
        LineDecision::No(w) => Ok(Verdict::no(w, Route::LineOracle)),
        LineDecision::Yes { positions, scale } => match line_certificate(inst, &positions, &scale, tol)? {
            Some(cert) => Ok(Verdict::yes(cert, diag(Route::LineOracle))),
            None => Err(Error::Inconsistent("line layout failed verification".into())),
        },
        LineDecision::Undecided => {
            let mut v = search(&inst.to_f64(), &SearchBudget::default(), tol)?;
            v.diagnostics.note = "orientation enumeration exceeded its budget; searched instead".into();
            Ok(v)
        }
    }
}

fn line_decide<T: Scalar>(inst: &Instance<T>, tol: &Tolerance) -> Result<LineDecision<T>> {
    let n = inst.n();
    if n < 2 {
        return Ok(LineDecision::No(too_few(n, 1)));
    }
    let edges = inst.edges();
    let Some(first) = edges.first() else {
        return Ok(LineDecision::Yes { positions: (0..n).map(T::from_count).collect(), scale: T::one() });
    };

    // Any affine map of the line scales every length by the same |a|.
    let scale = first.lambda_prime.clone() / first.lambda.clone();
    for e in edges {
        let ratio = e.lambda_prime.clone() / e.lambda.clone();
        if !tol.ratios_agree(&ratio, &scale) {
            let exact = |e: &crate::system::Edge<T>| e.lambda_prime.to_rational() / e.lambda.to_rational();
            return Ok(LineDecision::No(NoWitness {
                obstruction: Obstruction::LineScale,
                side: None,
                subsets: vec![IndexSet::from_vec(vec![first.i, first.j]), IndexSet::from_vec(vec![e.i, e.j])],
                values: vec![exact(first), exact(e)],
                note: "an affine map of the line scales all lengths by one factor".into(),
            }));
        }
    }

    let mut adjacency: Vec<Vec<(usize, T)>> = vec![Vec::new(); n];
    for e in edges {
        adjacency[e.i].push((e.j, e.lambda.clone()));
        adjacency[e.j].push((e.i, e.lambda.clone()));
    }
    let max_len = edges.iter().map(|e| e.lambda.as_f64()).fold(0.0, f64::max);
    let mut positions: Vec<Option<T>> = vec![None; n];
    let mut offset = T::zero();
    let mut nodes = 0usize;
    for root in 0..n {
        if positions[root].is_some() {
            continue;
        }
        let order = bfs_order(root, &adjacency);
        let mut local: Vec<Option<T>> = vec![None; n];
        local[root] = Some(T::zero());
        match place(1, &order, &adjacency, &mut local, &mut nodes, max_len, tol) {
            Placement::Found => {}
            Placement::Impossible => {
                let mut comp = order.iter().map(|(v, _)| *v).collect::<Vec<_>>();
                comp.sort_unstable();
                return Ok(LineDecision::No(NoWitness {
                    obstruction: Obstruction::LineRealization,
                    side: Some(Side::Left),
                    subsets: vec![IndexSet::from_vec(comp)],
                    values: vec![],
                    note: "no choice of orientations lays this component out on a line".into(),
                }));
            }
            Placement::OutOfBudget => return Ok(LineDecision::Undecided),
        }
        let lo = order
            .iter()
            .filter_map(|(v, _)| local[*v].clone())
            .fold(None::<T>, |acc, x| Some(acc.map_or(x.clone(), |a| if x < a { x } else { a })))
            .unwrap_or_else(T::zero);
        let mut hi = offset.clone();
        for (v, _) in &order {
            let x = local[*v].clone().expect("placed") - lo.clone() + offset.clone();
            if x > hi {
                hi = x.clone();
            }
            positions[*v] = Some(x);
        }
        offset = hi + T::one();
    }
    Ok(LineDecision::Yes { positions: positions.into_iter().map(|p| p.expect("placed")).collect(), scale })
}

/// BFS order of a component as `(vertex, parent edge length)` pairs.
fn bfs_order<T: Scalar>(root: usize, adjacency: &[Vec<(usize, T)>]) -> Vec<(usize, Option<(usize, T)>)> {
    let mut seen = vec![false; adjacency.len()];
    let mut order = vec![(root, None)];
    let mut queue = VecDeque::from([root]);
    seen[root] = true;
    while let Some(v) = queue.pop_front() {
        for (u, len) in &adjacency[v] {
            if !seen[*u] {
                seen[*u] = true;
                order.push((*u, Some((v, len.clone()))));
                queue.push_back(*u);
            }
        }
    }
    order
}

enum Placement {
    Found,
    Impossible,
    OutOfBudget,
}

fn place<T: Scalar>(
    k: usize,
    order: &[(usize, Option<(usize, T)>)],
    adjacency: &[Vec<(usize, T)>],
    pos: &mut [Option<T>],
    nodes: &mut usize,
    max_len: f64,
    tol: &Tolerance,
) -> Placement {
    if k == order.len() {
        return Placement::Found;
    }
    *nodes += 1;
    if *nodes > LINE_NODE_LIMIT {
        return Placement::OutOfBudget;
    }
    let (v, parent) = &order[k];
    let (p, len) = parent.as_ref().expect("non-root vertices have a parent");
    let base = pos[*p].clone().expect("parent placed first");
    // The first placed vertex fixes the reflection of the component.
    let signs: &[bool] = if k == 1 { &[true] } else { &[true, false] };
    for &plus in signs {
        let x = if plus { base.clone() + len.clone() } else { base.clone() - len.clone() };
        let consistent = adjacency[*v].iter().all(|(u, l)| match &pos[*u] {
            Some(xu) => tol.is_zero(&((x.clone() - xu.clone()).abs() - l.clone()), max_len),
            None => true,
        });
        if !consistent {
            continue;
        }
        pos[*v] = Some(x);
        match place(k + 1, order, adjacency, pos, nodes, max_len, tol) {
            Placement::Impossible => pos[*v] = None,
            other => return other,
        }
    }
    Placement::Impossible
}

fn line_certificate<T: Scalar>(
    inst: &Instance<T>,
    positions: &[T],
    scale: &T,
    tol: &Tolerance,
) -> Result<Option<Certificate>> {
    let left = Configuration::new(1, positions.iter().map(|x| vec![x.as_f64()]).collect())?;
    let map = AffineMap::new(Matrix::from_rows(vec![vec![scale.as_f64()]]), vec![0.0])?;
    certify_frameworks(&inst.to_f64(), &left, &map, tol)
}

/// Joint residuals over a left configuration and a linear map, in units
/// where the longest bar on each side has length 1.
struct JointProblem {
    n: usize,
    d: usize,
    /// `(i, j, λ², λ'²)` after normalization.
    edges: Vec<(usize, usize, f64, f64)>,
    /// When set, the left configuration is frozen and only the map varies.
    fixed_left: Option<Vec<f64>>,
}

impl JointProblem {
    fn map_offset(&self) -> usize {
        if self.fixed_left.is_some() {
            0
        } else {
            self.n * self.d
        }
    }

    fn split<'a>(&'a self, x: &'a [f64]) -> (&'a [f64], &'a [f64]) {
        match &self.fixed_left {
            Some(p) => (p.as_slice(), x),
            None => x.split_at(self.n * self.d),
        }
    }
}

fn small_det(m: &[f64], d: usize) -> f64 {
    Matrix::from_fn(d, d, |i, j| m[i * d + j]).det()
}

impl LeastSquares for JointProblem {
    fn params(&self) -> usize {
        self.map_offset() + self.d * self.d
    }

    fn residuals(&self) -> usize {
        2 * self.edges.len() + 1
    }

    fn evaluate(&self, x: &[f64], r: &mut [f64], jac: &mut [f64]) {
        let d = self.d;
        let np = self.params();
        let off = self.map_offset();
        let free_left = self.fixed_left.is_none();
        let (p, l) = self.split(x);
        jac.iter_mut().for_each(|v| *v = 0.0);
        let mut v = vec![0.0; d];
        let mut u = vec![0.0; d];
        let mut ltu = vec![0.0; d];
        for (k, &(i, j, w, wp)) in self.edges.iter().enumerate() {
            for a in 0..d {
                v[a] = p[i * d + a] - p[j * d + a];
            }
            for a in 0..d {
                u[a] = (0..d).map(|b| l[a * d + b] * v[b]).sum();
            }
            r[k] = v.iter().map(|t| t * t).sum::<f64>() - w;
            let rk = self.edges.len() + k;
            r[rk] = u.iter().map(|t| t * t).sum::<f64>() - wp;
            for b in 0..d {
                ltu[b] = (0..d).map(|a| l[a * d + b] * u[a]).sum();
            }
            if free_left {
                for a in 0..d {
                    jac[k * np + i * d + a] = 2.0 * v[a];
                    jac[k * np + j * d + a] = -2.0 * v[a];
                    jac[rk * np + i * d + a] = 2.0 * ltu[a];
                    jac[rk * np + j * d + a] = -2.0 * ltu[a];
                }
            }
            for a in 0..d {
                for b in 0..d {
                    jac[rk * np + off + a * d + b] = 2.0 * u[a] * v[b];
                }
            }
        }
        let last = 2 * self.edges.len();
        let det = small_det(l, d);
        if det.abs() < DET_BARRIER {
            r[last] = DET_BARRIER - det.abs();
            let sign = if det >= 0.0 { 1.0 } else { -1.0 };
            let h = 1e-7;
            let mut probe = l.to_vec();
            for e in 0..d * d {
                let keep = probe[e];
                probe[e] = keep + h;
                let up = small_det(&probe, d);
                probe[e] = keep - h;
                let down = small_det(&probe, d);
                probe[e] = keep;
                jac[last * np + off + e] = -sign * (up - down) / (2.0 * h);
            }
        } else {
            r[last] = 0.0;
        }
    }
}

struct Normalized {
    left_scale: f64,
    right_scale: f64,
    edges: Vec<(usize, usize, f64, f64)>,
}

fn normalize(inst: &Instance<f64>) -> Normalized {
    let c = inst.edges().iter().map(|e| e.lambda).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    let cp = inst.edges().iter().map(|e| e.lambda_prime).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    let edges = inst
        .edges()
        .iter()
        .map(|e| (e.i, e.j, (e.lambda / c).powi(2), (e.lambda_prime / cp).powi(2)))
        .collect();
    Normalized { left_scale: c, right_scale: cp, edges }
}

fn restart_rng(seed: u64, restart: usize) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed ^ (restart as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

fn random_map_entries(rng: &mut ChaCha8Rng, d: usize) -> Vec<f64> {
    let noise = Normal::new(0.0, MAP_INIT_SIGMA).expect("valid sigma");
    (0..d * d).map(|e| if e / d == e % d { 1.0 } else { 0.0 } + noise.sample(rng)).collect()
}

/// Runs restarts in deterministic batches; the lowest-index verified
/// success wins regardless of scheduling.
fn multistart(
    budget: &SearchBudget,
    route: Route,
    attempt: impl Fn(usize) -> Result<(f64, Option<Certificate>)> + Sync,
) -> Result<Verdict> {
    let batch = rayon::current_num_threads().max(1);
    let mut best = f64::INFINITY;
    let mut start = 0;
    while start < budget.restarts {
        let end = (start + batch).min(budget.restarts);
        let results: Vec<Result<(f64, Option<Certificate>)>> = (start..end).into_par_iter().map(&attempt).collect();
        for (k, res) in (start..end).zip(results) {
            let (cost, cert) = res?;
            best = best.min(cost);
            if let Some(cert) = cert {
                let diagnostics = Diagnostics { route, restarts_used: k + 1, best_residual: best, note: String::new() };
                return Ok(Verdict::yes(cert, diagnostics));
            }
        }
        start = end;
    }
    Ok(Verdict::unknown(Diagnostics {
        route,
        restarts_used: budget.restarts,
        best_residual: best,
        note: "search budget exhausted without a verified certificate".into(),
    }))
}

/// Acceptable normalized cost before a candidate is worth certifying.
const CERTIFY_BELOW: f64 = 1e-14;

/// Multi-start penalty least squares over a configuration and a linear map.
/// Never answers NO.
pub fn search(inst: &Instance<f64>, budget: &SearchBudget, tol: &Tolerance) -> Result<Verdict> {
    budget.validate()?;
    let (n, d) = (inst.n(), inst.dim());
    let norm = normalize(inst);
    let problem = JointProblem { n, d, edges: norm.edges.clone(), fixed_left: None };
    let ratio = norm.right_scale / norm.left_scale;
    let opts = LmOptions { max_iterations: budget.iterations, target_cost: budget.target_residual };
    multistart(budget, Route::Search, |k| {
        let mut rng = restart_rng(budget.seed, k);
        let spread = Normal::new(0.0, 0.5).expect("valid sigma");
        let mut x: Vec<f64> = (0..n * d).map(|_| spread.sample(&mut rng)).collect();
        x.extend(random_map_entries(&mut rng, d));
        let out = minimize(&problem, x, opts);
        if !(out.cost <= CERTIFY_BELOW) {
            return Ok((out.cost, None));
        }
        let (p, l) = out.x.split_at(n * d);
        let left = Configuration::new(d, p.chunks(d).map(|c| c.iter().map(|v| v * norm.left_scale).collect()).collect())?;
        let map = AffineMap::new(Matrix::from_fn(d, d, |a, b| l[a * d + b] * ratio), vec![0.0; d])?;
        Ok((out.cost, certify_frameworks(inst, &left, &map, tol)?))
    })
}

/// Decision with the left framework given: the right framework must be an
/// affine image of it realizing `λ'`.
///
/// Writing `S = LᵀL` makes every right edge constraint linear in `S`; when
/// the edges determine `S` the answer is exact, otherwise the map is searched.
pub fn solve_fixed_left<T: Scalar>(
    inst: &Instance<T>,
    left: &Configuration<T>,
    budget: &SearchBudget,
    tol: &Tolerance,
) -> Result<Verdict> {
    budget.validate()?;
    let (n, d) = (inst.n(), inst.dim());
    if left.len() != n || left.dim() != d {
        return Err(Error::Input(format!("fixed left framework must hold {n} points in R^{d}")));
    }
    for e in inst.edges() {
        let actual = left.squared_distance(e.i, e.j);
        let target = e.lambda.clone() * e.lambda.clone();
        if !tol.is_zero(&(actual.clone() - target.clone()), target.as_f64()) {
            return Ok(Verdict::no(
                NoWitness {
                    obstruction: Obstruction::LeftLengths,
                    side: Some(Side::Left),
                    subsets: vec![IndexSet::from_vec(vec![e.i, e.j])],
                    values: vec![actual.to_rational(), target.to_rational()],
                    note: "the fixed left framework does not realize this bar".into(),
                },
                Route::FixedLeftLinear,
            ));
        }
    }
    if find_base_simplex(&distances_of(left), d, tol).is_err() {
        return Ok(Verdict::no(
            NoWitness {
                obstruction: Obstruction::LeftHull,
                side: Some(Side::Left),
                subsets: vec![],
                values: vec![],
                note: format!("the fixed left framework does not span R^{d}"),
            },
            Route::FixedLeftLinear,
        ));
    }

    // Unknowns: upper triangle of S, row-major.
    let slots: Vec<(usize, usize)> = (0..d).flat_map(|a| (a..d).map(move |b| (a, b))).collect();
    let rows: Vec<Vec<T>> = inst
        .edges()
        .iter()
        .map(|e| {
            let v: Vec<T> = (0..d).map(|c| left.point(e.i)[c].clone() - left.point(e.j)[c].clone()).collect();
            slots
                .iter()
                .map(|&(a, b)| {
                    let prod = v[a].clone() * v[b].clone();
                    if a == b {
                        prod
                    } else {
                        prod.clone() + prod
                    }
                })
                .collect()
        })
        .collect();
    let rhs: Vec<T> = inst.edges().iter().map(|e| e.lambda_prime.clone() * e.lambda_prime.clone()).collect();
    if !rows.is_empty() {
        let system = Matrix::from_rows(rows);
        let solved = row_reduce(&system, &rhs, tol.rel);
        if !solved.consistent {
            return Ok(Verdict::no(
                NoWitness {
                    obstruction: Obstruction::MetricInfeasible,
                    side: Some(Side::Right),
                    subsets: vec![],
                    values: vec![],
                    note: "no symmetric metric reproduces the right lengths on the left edge vectors".into(),
                },
                Route::FixedLeftLinear,
            ));
        }
        if solved.rank == slots.len() {
            let s = Matrix::from_fn(d, d, |a, b| {
                let k = slots.iter().position(|&t| t == (a.min(b), a.max(b))).expect("slot");
                solved.particular[k].clone()
            });
            let scale = s.max_abs();
            let minors: Vec<T> = (1..=d).map(|k| Matrix::from_fn(k, k, |a, b| s[(a, b)].clone()).det()).collect();
            if let Some(k) = minors.iter().enumerate().position(|(k, m)| {
                tol.sign(m, scale.powi(k as i32 + 1)) != std::cmp::Ordering::Greater
            }) {
                return Ok(Verdict::no(
                    NoWitness {
                        obstruction: Obstruction::MetricInfeasible,
                        side: Some(Side::Right),
                        subsets: vec![],
                        values: minors.iter().map(Scalar::to_rational).collect(),
                        note: format!("the forced metric is not positive definite (leading minor {} fails)", k + 1),
                    },
                    Route::FixedLeftLinear,
                ));
            }
            let upper = cholesky_upper(&s.map(Scalar::as_f64));
            let map = AffineMap::new(upper, vec![0.0; d])?;
            let left64 = left.map(Scalar::as_f64);
            return match certify_frameworks(&inst.to_f64(), &left64, &map, tol)? {
                Some(cert) => Ok(Verdict::yes(cert, diag(Route::FixedLeftLinear))),
                None => Ok(Verdict::unknown(Diagnostics {
                    note: "forced metric is positive definite but its map failed verification".into(),
                    ..diag(Route::FixedLeftLinear)
                })),
            };
        }
    }

    let inst64 = inst.to_f64();
    let norm = normalize(&inst64);
    let left64 = left.map(Scalar::as_f64);
    let frozen: Vec<f64> = left64.points().iter().flatten().map(|v| v / norm.left_scale).collect();
    let problem = JointProblem { n, d, edges: norm.edges.clone(), fixed_left: Some(frozen) };
    let ratio = norm.right_scale / norm.left_scale;
    let opts = LmOptions { max_iterations: budget.iterations, target_cost: budget.target_residual };
    multistart(budget, Route::FixedLeftSearch, |k| {
        let mut rng = restart_rng(budget.seed, k);
        let out = minimize(&problem, random_map_entries(&mut rng, d), opts);
        if !(out.cost <= CERTIFY_BELOW) {
            return Ok((out.cost, None));
        }
        let map = AffineMap::new(Matrix::from_fn(d, d, |a, b| out.x[a * d + b] * ratio), vec![0.0; d])?;
        Ok((out.cost, certify_frameworks(&inst64, &left64, &map, tol)?))
    })
}

/// `R` upper triangular with `S = RᵀR`.
fn cholesky_upper(s: &Matrix<f64>) -> Matrix<f64> {
    let d = s.rows();
    let mut r = Matrix::zeros(d, d);
    for j in 0..d {
        for i in 0..=j {
            let dot: f64 = (0..i).map(|k| r[(k, i)] * r[(k, j)]).sum();
            if i == j {
                r[(i, i)] = (s[(i, i)] - dot).max(0.0).sqrt();
            } else {
                r[(i, j)] = (s[(i, j)] - dot) / r[(i, i)];
            }
        }
    }
    r
}

/// Ground truth behind a generated instance.
#[derive(Clone, Debug)]
pub struct Planted {
    pub left: Configuration<f64>,
    pub map: AffineMap<f64>,
}

impl Planted {
    pub fn right(&self) -> Configuration<f64> {
        self.map.apply_all(&self.left)
    }

    /// The assignment induced by the planted frameworks, with `α = (det A)²`.
    pub fn assignment(&self) -> Assignment<f64> {
        let det = self.map.det();
        Assignment { z: distances_of(&self.left), z_prime: distances_of(&self.right()), alpha: det * det }
    }
}

/// Random instance with a known solution: a spanning configuration, a
/// well-conditioned affine map, and a connected edge set.
pub fn random_instance(seed: u64, n: usize, d: usize, edge_density: f64) -> Result<(Instance<f64>, Planted)> {
    if d == 0 || n < d + 1 || !(0.0..=1.0).contains(&edge_density) {
        return Err(Error::Input(format!("cannot plant n = {n}, d = {d}, density = {edge_density}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let gauss = Normal::new(0.0, 1.0).expect("unit normal");
    let tol = Tolerance::default();
    let left = loop {
        let pts: Vec<Vec<f64>> = (0..n).map(|_| (0..d).map(|_| gauss.sample(&mut rng)).collect()).collect();
        let c = Configuration::new(d, pts)?;
        let z = distances_of(&c);
        let spread_ok = z.pairs().all(|(i, j)| *z.get(i, j) > 0.01);
        let hull_ok = find_base_simplex(&z, d, &tol)
            .and_then(|b| crate::cm::normalized_cmd(&z, &b))
            .is_ok_and(|v| v.abs() > 1e-3);
        if spread_ok && hull_ok {
            break c;
        }
    };
    let map = loop {
        let linear = Matrix::from_fn(d, d, |_, _| gauss.sample(&mut rng));
        let det = linear.det();
        let Some(inv) = linear.inverse() else { continue };
        let frob = |m: &Matrix<f64>| m.to_rows().iter().flatten().map(|v| v * v).sum::<f64>().sqrt();
        if det.abs() >= 0.3 && frob(&linear) * frob(&inv) <= 10.0 * d as f64 {
            let translation = (0..d).map(|_| gauss.sample(&mut rng)).collect();
            break AffineMap::new(linear, translation)?;
        }
    };
    let right = map.apply_all(&left);
    let mut edges = Vec::new();
    let mut present = std::collections::HashSet::new();
    for v in 1..n {
        let u = rng.random_range(0..v);
        present.insert((u, v));
    }
    for i in 0..n {
        for j in i + 1..n {
            if present.contains(&(i, j)) || rng.random_bool(edge_density) {
                edges.push((i, j, left.squared_distance(i, j).sqrt(), right.squared_distance(i, j).sqrt()));
            }
        }
    }
    Ok((Instance::from_tuples(n, d, edges)?, Planted { left, map }))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn q(n: i64) -> BigRational {
        BigRational::from_integer(n.into())
    }

    fn exact(n: usize, d: usize, edges: &[(usize, usize, i64, i64)]) -> Instance<BigRational> {
        Instance::from_tuples(n, d, edges.iter().map(|&(i, j, a, b)| (i, j, q(a), q(b))).collect()).unwrap()
    }

    fn run<T: Scalar>(inst: &Instance<T>) -> Verdict {
        solve(inst, &SearchBudget::default(), &Tolerance::default()).unwrap()
    }

    #[test]
    fn budget_validation() {
        let inst = exact(3, 2, &[(0, 1, 3, 6), (1, 2, 4, 8), (0, 2, 5, 10)]);
        let bad = SearchBudget { restarts: 0, ..SearchBudget::default() };
        assert!(solve(&inst, &bad, &Tolerance::default()).is_err());
    }

    #[test]
    fn similar_triangles_yes() {
        let v = run(&exact(3, 2, &[(0, 1, 3, 6), (1, 2, 4, 8), (0, 2, 5, 10)]));
        assert_eq!(v.kind, VerdictKind::Yes);
        let cert = v.certificate.unwrap();
        assert!((cert.assignment.alpha - 16.0).abs() < 1e-9);
        assert!((cert.map.det().powi(2) - 16.0).abs() < 1e-9);
    }

    #[test]
    fn illegal_triangle_no() {
        let v = run(&exact(3, 2, &[(0, 1, 3, 1), (1, 2, 4, 2), (0, 2, 5, 4)]));
        assert_eq!(v.kind, VerdictKind::No);
        let w = v.witness.unwrap();
        assert_eq!(w.obstruction, Obstruction::Condition(Condition::SubsetSign));
        assert_eq!(w.side, Some(Side::Right));
        assert_eq!(w.values, vec![q(105)]);
        assert_eq!(w.subsets[0].as_slice(), &[0, 1, 2]);
    }

    #[test]
    fn quadrilateral_ratio_no() {
        // Square against (0,0),(1,0),(0,1),(2,2); lengths as square roots.
        let left = [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 1.0]];
        let right = [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [2.0, 2.0]];
        let dist = |p: &[[f64; 2]; 4], i: usize, j: usize| ((p[i][0] - p[j][0]).powi(2) + (p[i][1] - p[j][1]).powi(2)).sqrt();
        let mut edges = Vec::new();
        for i in 0..4 {
            for j in i + 1..4 {
                edges.push((i, j, dist(&left, i, j), dist(&right, i, j)));
            }
        }
        let v = run(&Instance::from_tuples(4, 2, edges).unwrap());
        assert_eq!(v.kind, VerdictKind::No);
        let w = v.witness.unwrap();
        assert_eq!(w.obstruction, Obstruction::Condition(Condition::CommonRatio));
        assert_eq!(w.subsets[0].as_slice(), &[0, 1, 2]);
        assert_eq!(w.subsets[1].as_slice(), &[1, 2, 3]);
        let approx: Vec<f64> = w.values.iter().map(|v| v.as_f64()).collect();
        assert!((approx[0] - 1.0).abs() < 1e-12 && (approx[1] - 9.0).abs() < 1e-12);
    }

    #[test]
    fn too_few_vertices() {
        let v = run(&exact(2, 2, &[(0, 1, 1, 1)]));
        assert_eq!(v.kind, VerdictKind::No);
        assert_eq!(v.witness.unwrap().obstruction, Obstruction::TooFewVertices);
    }

    #[test]
    fn line_examples() {
        let tol = Tolerance::default();
        let path = exact(3, 1, &[(0, 1, 3, 6), (1, 2, 4, 8)]);
        let v = line_oracle(&path, &tol).unwrap();
        assert_eq!(v.kind, VerdictKind::Yes);
        assert!((v.certificate.unwrap().map.linear[(0, 0)] - 2.0).abs() < 1e-12);

        let triangle = exact(3, 1, &[(0, 1, 1, 1), (1, 2, 1, 1), (0, 2, 1, 1)]);
        let v = line_oracle(&triangle, &tol).unwrap();
        assert_eq!(v.kind, VerdictKind::No);
        assert_eq!(v.witness.unwrap().obstruction, Obstruction::LineRealization);

        let skew = exact(3, 1, &[(0, 1, 3, 6), (1, 2, 4, 7)]);
        let v = line_oracle(&skew, &tol).unwrap();
        assert_eq!(v.kind, VerdictKind::No);
        let w = v.witness.unwrap();
        assert_eq!(w.obstruction, Obstruction::LineScale);
        assert_eq!(w.values, vec![q(2), BigRational::new(7.into(), 4.into())]);

        assert!(line_oracle(&exact(3, 2, &[(0, 1, 1, 1)]), &tol).is_err());
    }

    #[test]
    fn line_cycle_needs_backtracking() {
        // 0-1-2-3-0 with lengths 1, 1, 1, 3: only the all-forward layout closes.
        let cycle = exact(4, 1, &[(0, 1, 1, 2), (1, 2, 1, 2), (2, 3, 1, 2), (0, 3, 3, 6)]);
        let v = line_oracle(&cycle, &Tolerance::default()).unwrap();
        assert_eq!(v.kind, VerdictKind::Yes);
        // Disconnected pieces are laid out apart from each other.
        let split = exact(4, 1, &[(0, 1, 2, 2), (2, 3, 5, 5)]);
        assert_eq!(line_oracle(&split, &Tolerance::default()).unwrap().kind, VerdictKind::Yes);
    }

    #[test]
    fn planted_instances_are_deterministic_and_valid() {
        let (a, pa) = random_instance(7, 6, 2, 0.5).unwrap();
        let (b, _) = random_instance(7, 6, 2, 0.5).unwrap();
        assert_eq!(a.edges(), b.edges());
        let report = check_assignment(&a, &pa.assignment(), &Tolerance::default()).unwrap();
        assert!(report.passed, "{report:#?}");
        assert!(random_instance(1, 2, 2, 0.5).is_err());
        assert!(random_instance(1, 4, 2, 1.5).is_err());
    }

    #[test]
    fn simplex_pairs_are_always_equivalent() {
        for seed in 0..5 {
            let (inst, _) = random_instance(seed, 4, 3, 1.0).unwrap();
            assert!(inst.is_complete());
            assert_eq!(run(&inst).kind, VerdictKind::Yes);
        }
    }

    #[test]
    fn search_recovers_sparse_planted() {
        let (inst, _) = random_instance(3, 6, 2, 0.4).unwrap();
        let v = search(&inst, &SearchBudget::default(), &Tolerance::default()).unwrap();
        assert_eq!(v.kind, VerdictKind::Yes, "{:?}", v.diagnostics);
        let v2 = search(&inst, &SearchBudget::default(), &Tolerance::default()).unwrap();
        assert_eq!(v.diagnostics, v2.diagnostics);
    }

    #[test]
    fn fixed_left_linear_route() {
        let left = Configuration::new(2, vec![vec![q(0), q(0)], vec![q(1), q(0)], vec![q(0), q(1)], vec![q(1), q(1)]])
            .unwrap();
        // Shear (x, y) -> (x + y, y): right lengths from the sheared square.
        let mut lengths =
            vec![(0, 1, 1.0, 1.0), (0, 2, 1.0, 2f64.sqrt()), (1, 3, 1.0, 2f64.sqrt()), (2, 3, 1.0, 1.0)];
        let left64 = left.map(Scalar::as_f64);
        let budget = SearchBudget::default();
        // Axis bars alone leave the off-diagonal metric entry free.
        let inst = Instance::from_tuples(4, 2, lengths.clone()).unwrap();
        let v = solve_fixed_left(&inst, &left64, &budget, &Tolerance::default()).unwrap();
        assert_eq!(v.kind, VerdictKind::Yes);
        assert_eq!(v.diagnostics.route, Route::FixedLeftSearch);
        lengths.push((0, 3, 2f64.sqrt(), 5f64.sqrt()));
        let inst = Instance::from_tuples(4, 2, lengths).unwrap();
        let v = solve_fixed_left(&inst, &left64, &budget, &Tolerance::default()).unwrap();
        assert_eq!(v.kind, VerdictKind::Yes);
        assert_eq!(v.diagnostics.route, Route::FixedLeftLinear);
        let cert = v.certificate.unwrap();
        assert!((cert.map.det().abs() - 1.0).abs() < 1e-9);

        // Rational lengths whose forced metric is indefinite.
        let bad = exact(4, 2, &[(0, 1, 1, 1), (0, 2, 1, 1), (0, 3, 2, 1)]);
        let bad = Instance::from_tuples(
            4,
            2,
            bad.edges()
                .iter()
                .map(|e| (e.i, e.j, if e.j == 3 { BigRational::new(2.into(), 1.into()) } else { e.lambda.clone() }, e.lambda_prime.clone()))
                .collect(),
        )
        .unwrap();
        // Left bar 0-3 has squared length 2, not 4.
        let v = solve_fixed_left(&bad, &left, &SearchBudget::default(), &Tolerance::default()).unwrap();
        assert_eq!(v.witness.unwrap().obstruction, Obstruction::LeftLengths);
    }

    #[test]
    fn fixed_left_metric_infeasible() {
        let left = Configuration::new(2, vec![vec![q(0), q(0)], vec![q(1), q(0)], vec![q(0), q(1)], vec![q(1), q(1)]])
            .unwrap();
        // S11 = 1, S22 = 1 forced by the axis bars; the diagonal then needs
        // S11 + 2 S12 + S22 = 9, so S12 = 7/2 and det S < 0.
        let inst = Instance::from_tuples(4, 2, vec![(0, 1, 1.0, 1.0), (0, 2, 1.0, 1.0), (0, 3, 2f64.sqrt(), 3.0)]).unwrap();
        let v = solve_fixed_left(&inst, &left.map(Scalar::as_f64), &SearchBudget::default(), &Tolerance::default())
            .unwrap();
        assert_eq!(v.kind, VerdictKind::No);
        assert_eq!(v.witness.unwrap().obstruction, Obstruction::MetricInfeasible);
    }
}
