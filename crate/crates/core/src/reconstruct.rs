//! From a checked assignment to two concrete frameworks and the affine map
//! between them, plus a direct verifier of the framework-level conditions.

use crate::cm::{simplex_volume_sq, IndexSet};
use crate::embed::{distances_of, embed, Configuration};
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::scalar::{Real, Scalar, Tolerance};
use crate::system::{check_assignment, find_base_simplex, Assignment, Instance};

/// Largest allowed `max_j |A(p_j) - p'_j|`, relative to the diameter of `p'`.
pub const POINT_TOLERANCE: f64 = 1e-6;

/// `x ↦ linear · x + translation`.
#[derive(Clone, Debug, PartialEq)]
pub struct AffineMap<T> {
    pub linear: Matrix<T>,
    pub translation: Vec<T>,
}

impl<T: Scalar> AffineMap<T> {
    pub fn identity(d: usize) -> Self {
        AffineMap { linear: Matrix::identity(d), translation: vec![T::zero(); d] }
    }

    pub fn new(linear: Matrix<T>, translation: Vec<T>) -> Result<Self> {
        if linear.rows() != linear.cols() || linear.rows() != translation.len() {
            return Err(Error::Input("affine map needs a square linear part matching the translation".into()));
        }
        Ok(AffineMap { linear, translation })
    }

    pub fn dim(&self) -> usize {
        self.translation.len()
    }

    pub fn apply(&self, x: &[T]) -> Vec<T> {
        self.linear
            .mul_vec(x)
            .into_iter()
            .zip(&self.translation)
            .map(|(a, b)| a + b.clone())
            .collect()
    }

    pub fn apply_all(&self, c: &Configuration<T>) -> Configuration<T> {
        c.transform(|p| self.apply(p))
    }

    pub fn det(&self) -> T {
        self.linear.det()
    }

    /// `self ∘ inner`.
    pub fn compose(&self, inner: &AffineMap<T>) -> AffineMap<T> {
        AffineMap { linear: self.linear.mul(&inner.linear), translation: self.apply(&inner.translation) }
    }

    pub fn inverse(&self) -> Option<AffineMap<T>> {
        let inv = self.linear.inverse()?;
        let t = inv.mul_vec(&self.translation).into_iter().map(|x| -x).collect();
        Some(AffineMap { linear: inv, translation: t })
    }

    pub fn map<U: Scalar>(&self, f: impl Fn(&T) -> U) -> AffineMap<U> {
        AffineMap { linear: self.linear.map(&f), translation: self.translation.iter().map(f).collect() }
    }
}

/// The affine map sending `src[k]` to `dst[k]` for the `d + 1` vertices of a
/// nondegenerate simplex. Exact for rational scalars.
pub fn affine_from_simplex<T: Scalar>(src: &[Vec<T>], dst: &[Vec<T>]) -> Result<AffineMap<T>> {
    let d = src.len().saturating_sub(1);
    if d == 0 || dst.len() != d + 1 || src.iter().chain(dst).any(|p| p.len() != d) {
        return Err(Error::Input(format!("need {} points in R^{d} on both sides", d + 1)));
    }
    // Rows of the system: edge vectors of the source simplex.
    let edges = Matrix::from_fn(d, d, |k, c| src[k + 1][c].clone() - src[0][c].clone());
    let mut linear = Matrix::zeros(d, d);
    for row in 0..d {
        let rhs: Vec<T> = (0..d).map(|k| dst[k + 1][row].clone() - dst[0][row].clone()).collect();
        let solved = edges
            .solve(&rhs)
            .ok_or_else(|| Error::Input("source simplex is degenerate".into()))?;
        for (c, v) in solved.into_iter().enumerate() {
            linear[(row, c)] = v;
        }
    }
    let image = linear.mul_vec(&src[0]);
    let translation = dst[0].iter().zip(image).map(|(a, b)| a.clone() - b).collect();
    Ok(AffineMap { linear, translation })
}

#[derive(Clone, Debug)]
pub struct Reconstruction<T> {
    pub left: Configuration<T>,
    pub right: Configuration<T>,
    pub map: AffineMap<T>,
    pub base: IndexSet,
    /// `max_j |A(p_j) - p'_j|`.
    pub residual: f64,
    pub diameter: f64,
    /// Whether the right embedding was mirrored to fit.
    pub mirrored: bool,
    /// Largest disagreement, relative to the diameter, between the facet
    /// heights implied by `z'` and those of the mapped left points.
    pub offset_mismatch: f64,
}

/// Builds `p`, `p'` and `A` from an assignment that passes the checker.
pub fn reconstruct<T: Real>(inst: &Instance<T>, a: &Assignment<T>, tol: &Tolerance) -> Result<Reconstruction<T>> {
    let report = check_assignment(inst, a, tol)?;
    if !report.passed {
        let failed = report.first_failure().map(|e| e.condition.to_string()).unwrap_or_default();
        return Err(Error::Precondition(format!("assignment fails condition {failed}")));
    }
    let d = inst.dim();
    let left = embed(&a.z, d, tol)?.configuration;
    let right = embed(&a.z_prime, d, tol)?.configuration;
    let base = find_base_simplex(&a.z, d, tol)?;
    let diameter = right.diameter();

    let fit = |right: &Configuration<T>| -> Result<(AffineMap<T>, f64)> {
        let src: Vec<Vec<T>> = base.iter().map(|i| left.point(i).to_vec()).collect();
        let dst: Vec<Vec<T>> = base.iter().map(|i| right.point(i).to_vec()).collect();
        let map = affine_from_simplex(&src, &dst)?;
        Ok((map.clone(), max_point_residual(&map, &left, right)))
    };
    let (map, residual) = fit(&right)?;
    let mirror = right.transform(|p| {
        let mut q = p.to_vec();
        q[d - 1] = -q[d - 1];
        q
    });
    let (mirror_map, mirror_residual) = fit(&mirror)?;
    let (right, map, residual, mirrored) = if mirror_residual < residual {
        (mirror, mirror_map, mirror_residual, true)
    } else {
        (right, map, residual, false)
    };

    let limit = POINT_TOLERANCE * diameter.max(f64::MIN_POSITIVE);
    if residual > limit {
        return Err(Error::Reconstruction { residual, limit });
    }
    let offset_mismatch = facet_offset_mismatch(a, &base, &left, &right, &map, diameter)?;
    Ok(Reconstruction { left, right, map, base, residual, diameter, mirrored, offset_mismatch })
}

fn max_point_residual<T: Real>(map: &AffineMap<T>, left: &Configuration<T>, right: &Configuration<T>) -> f64 {
    (0..left.len())
        .map(|j| {
            let image = map.apply(left.point(j));
            crate::embed::squared_norm_diff(&image, right.point(j)).as_f64().sqrt()
        })
        .fold(0.0, f64::max)
}

/// Height of `apex` over the facet, `k · vol_k / vol_(k-1)`, from distances.
fn height<T: Real>(z: &crate::cm::SquaredDistanceMatrix<T>, facet: &IndexSet, apex: usize) -> Result<f64> {
    let k = facet.len();
    let top = simplex_volume_sq(z, &facet.with(apex))?.as_f64().max(0.0).sqrt();
    let bottom = if k == 1 { 1.0 } else { simplex_volume_sq(z, facet)?.as_f64().max(0.0).sqrt() };
    Ok(k as f64 * top / bottom)
}

/// For each vertex outside the base and each facet of the base simplex,
/// compares the height prescribed by `z'` with the height of `A(p_j)` over
/// the image facet.
fn facet_offset_mismatch<T: Real>(
    a: &Assignment<T>,
    base: &IndexSet,
    left: &Configuration<T>,
    right: &Configuration<T>,
    map: &AffineMap<T>,
    diameter: f64,
) -> Result<f64> {
    let mut worst = 0.0f64;
    for j in (0..left.len()).filter(|j| !base.contains(*j)) {
        let image = map.apply(left.point(j));
        for r in base.iter() {
            let facet = base.without(&[r]);
            let prescribed = height(&a.z_prime, &facet, j)?;
            let mut pts: Vec<Vec<T>> = facet.iter().map(|i| right.point(i).to_vec()).collect();
            pts.push(image.clone());
            let local = Configuration::new(right.dim(), pts)?;
            let local_facet = IndexSet::from_vec((0..facet.len()).collect());
            let observed = height(&distances_of(&local), &local_facet, facet.len())?;
            worst = worst.max((prescribed - observed).abs() / diameter.max(f64::MIN_POSITIVE));
        }
    }
    Ok(worst)
}

/// Pass/fail with the worst residual and where it occurred.
#[derive(Clone, Debug, PartialEq)]
pub struct FrameworkCheck {
    pub passed: bool,
    pub residual: f64,
    pub witness: Option<Vec<usize>>,
}

/// The four framework-level conditions: both edge-length assignments are
/// realized, the map carries one framework onto the other, and the left
/// framework spans the whole space.
#[derive(Clone, Debug, PartialEq)]
pub struct FrameworkReport {
    pub left_lengths: FrameworkCheck,
    pub right_lengths: FrameworkCheck,
    pub affine: FrameworkCheck,
    pub full_hull: FrameworkCheck,
    pub passed: bool,
}

pub fn verify_frameworks<T: Real>(
    inst: &Instance<T>,
    left: &Configuration<T>,
    right: &Configuration<T>,
    map: &AffineMap<T>,
    tol: &Tolerance,
) -> Result<FrameworkReport> {
    let (n, d) = (inst.n(), inst.dim());
    for c in [left, right] {
        if c.len() != n || c.dim() != d {
            return Err(Error::Input(format!("configuration must hold {n} points in R^{d}")));
        }
    }
    if map.dim() != d {
        return Err(Error::Input(format!("affine map must act on R^{d}")));
    }
    let lengths = |c: &Configuration<T>, prime: bool| {
        let mut check = FrameworkCheck { passed: true, residual: 0.0, witness: None };
        for e in inst.edges() {
            let target = if prime { &e.lambda_prime } else { &e.lambda };
            let actual = c.squared_distance(e.i, e.j).sqrt();
            let diff = actual - *target;
            let rel = diff.as_f64().abs() / target.as_f64();
            if !tol.is_zero(&diff, target.as_f64()) && (check.passed || rel > check.residual) {
                check = FrameworkCheck { passed: false, residual: rel, witness: Some(vec![e.i, e.j]) };
            } else if check.passed {
                check.residual = check.residual.max(rel);
            }
        }
        check
    };
    let left_lengths = lengths(left, false);
    let right_lengths = lengths(right, true);

    let mut worst = (0.0f64, None);
    for j in 0..n {
        let dist = crate::embed::squared_norm_diff(&map.apply(left.point(j)), right.point(j)).as_f64().sqrt();
        if dist > worst.0 {
            worst = (dist, Some(vec![j]));
        }
    }
    let scale = right.diameter().max(f64::MIN_POSITIVE);
    let affine = FrameworkCheck { passed: worst.0 <= POINT_TOLERANCE * scale, residual: worst.0 / scale, witness: worst.1 };

    let full_hull = match find_base_simplex(&distances_of(left), d, tol) {
        Ok(base) => FrameworkCheck { passed: true, residual: 0.0, witness: Some(base.as_slice().to_vec()) },
        Err(_) => FrameworkCheck { passed: false, residual: 1.0, witness: None },
    };
    let passed = left_lengths.passed && right_lengths.passed && affine.passed && full_hull.passed;
    Ok(FrameworkReport { left_lengths, right_lengths, affine, full_hull, passed })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embed::distances_of;
    use num_rational::BigRational;

    fn q(n: i64) -> BigRational {
        BigRational::from_integer(n.into())
    }

    fn pts(v: &[[i64; 2]]) -> Vec<Vec<BigRational>> {
        v.iter().map(|p| vec![q(p[0]), q(p[1])]).collect()
    }

    fn square() -> Configuration<f64> {
        Configuration::new(2, vec![vec![0.0, 0.0], vec![1.0, 0.0], vec![0.0, 1.0], vec![1.0, 1.0]]).unwrap()
    }

    fn complete_instance(p: &Configuration<f64>, pp: &Configuration<f64>) -> Instance<f64> {
        let mut edges = Vec::new();
        for i in 0..p.len() {
            for j in i + 1..p.len() {
                edges.push((i, j, p.squared_distance(i, j).sqrt(), pp.squared_distance(i, j).sqrt()));
            }
        }
        Instance::from_tuples(p.len(), p.dim(), edges).unwrap()
    }

    #[test]
    fn affine_from_simplex_examples() {
        let src = pts(&[[0, 0], [1, 0], [0, 1]]);
        let a = affine_from_simplex(&src, &pts(&[[0, 0], [2, 0], [0, 2]])).unwrap();
        assert_eq!(a.linear, Matrix::from_rows(vec![vec![q(2), q(0)], vec![q(0), q(2)]]));
        assert_eq!(a.translation, vec![q(0), q(0)]);
        assert_eq!(affine_from_simplex(&src, &src).unwrap(), AffineMap::identity(2));
        let shear = affine_from_simplex(&src, &pts(&[[0, 0], [2, 0], [1, 1]])).unwrap();
        assert_eq!(shear.linear, Matrix::from_rows(vec![vec![q(2), q(1)], vec![q(0), q(1)]]));
        assert_eq!(shear.det(), q(2));
        assert!(affine_from_simplex(&pts(&[[0, 0], [1, 1], [2, 2]]), &src).is_err());
        assert!(affine_from_simplex(&pts(&[[0, 0], [1, 1]]), &src).is_err());
    }

    #[test]
    fn inverse_round_trip_is_exact() {
        let src = pts(&[[1, 2], [4, -1], [0, 5]]);
        let dst = pts(&[[3, 3], [-2, 7], [1, 0]]);
        let a = affine_from_simplex(&src, &dst).unwrap();
        let back = a.inverse().unwrap().compose(&a);
        assert_eq!(back, AffineMap::identity(2));
        for (s, t) in src.iter().zip(&dst) {
            assert_eq!(&a.apply(s), t);
        }
    }

    #[test]
    fn identity_assignment_on_square() {
        let p = square();
        let inst = complete_instance(&p, &p);
        let z = distances_of(&p);
        let a = Assignment { z: z.clone(), z_prime: z, alpha: 1.0 };
        let r = reconstruct(&inst, &a, &Tolerance::default()).unwrap();
        assert!(r.residual < 1e-12);
        assert!((r.map.det().abs() - 1.0).abs() < 1e-12);
        assert!(r.offset_mismatch < 1e-9);
    }

    #[test]
    fn similar_triangles_reconstruct() {
        let p = Configuration::new(2, vec![vec![0.0, 0.0], vec![3.0, 0.0], vec![3.0, 4.0]]).unwrap();
        let pp = p.transform(|x| vec![2.0 * x[0], 2.0 * x[1]]);
        let inst = complete_instance(&p, &pp);
        let a = Assignment { z: distances_of(&p), z_prime: distances_of(&pp), alpha: 16.0 };
        let r = reconstruct(&inst, &a, &Tolerance::default()).unwrap();
        assert!((r.map.det().powi(2) - 16.0).abs() < 1e-9);
        let report = verify_frameworks(&inst, &r.left, &r.right, &r.map, &Tolerance::default()).unwrap();
        assert!(report.passed, "{report:#?}");
    }

    #[test]
    fn reconstruct_requires_a_passing_assignment() {
        let p = square();
        let inst = complete_instance(&p, &p);
        let z = distances_of(&p);
        let a = Assignment { z: z.clone(), z_prime: z, alpha: 2.0 };
        assert!(matches!(reconstruct(&inst, &a, &Tolerance::default()), Err(Error::Precondition(_))));
    }

    #[test]
    fn verify_sheared_square() {
        let p = square();
        let shear = AffineMap::new(Matrix::from_rows(vec![vec![1.0, 1.0], vec![0.0, 1.0]]), vec![0.0, 0.0]).unwrap();
        let pp = shear.apply_all(&p);
        let inst = complete_instance(&p, &pp);
        let tol = Tolerance::default();
        assert!(verify_frameworks(&inst, &p, &pp, &shear, &tol).unwrap().passed);

        let mut edges: Vec<_> = inst.edges().iter().map(|e| (e.i, e.j, e.lambda, e.lambda_prime)).collect();
        edges[2].2 *= 1.01;
        let tampered = Instance::from_tuples(4, 2, edges).unwrap();
        let report = verify_frameworks(&tampered, &p, &pp, &shear, &tol).unwrap();
        assert!(!report.left_lengths.passed);
        assert_eq!(report.left_lengths.witness, Some(vec![inst.edges()[2].i, inst.edges()[2].j]));
        assert!(report.right_lengths.passed);

        let line = Configuration::new(2, vec![vec![0.0, 0.0], vec![1.0, 0.0], vec![2.0, 0.0]]).unwrap();
        let line_inst = complete_instance(&line, &line);
        let report = verify_frameworks(&line_inst, &line, &line, &AffineMap::identity(2), &tol).unwrap();
        assert!(!report.full_hull.passed);
        assert!(report.left_lengths.passed && report.affine.passed);
    }
}
