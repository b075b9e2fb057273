//! Sparse multivariate polynomials with exact rational coefficients, enough
//! to write Cayley-Menger determinants over symbolic squared distances.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use num_rational::BigRational;
use num_traits::{One, Signed, Zero};

/// Variables with their exponents, sorted by variable id.
pub type Monomial = Vec<(usize, u32)>;

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Poly {
    terms: BTreeMap<Monomial, BigRational>,
}

fn mul_monomials(a: &Monomial, b: &Monomial) -> Monomial {
    let mut out: BTreeMap<usize, u32> = a.iter().copied().collect();
    for &(v, k) in b {
        *out.entry(v).or_insert(0) += k;
    }
    out.into_iter().collect()
}

impl Poly {
    pub fn zero() -> Self {
        Poly::default()
    }

    pub fn constant(c: BigRational) -> Self {
        let mut p = Poly::zero();
        p.add_term(Vec::new(), c);
        p
    }

    pub fn var(id: usize) -> Self {
        let mut p = Poly::zero();
        p.add_term(vec![(id, 1)], BigRational::one());
        p
    }

    fn add_term(&mut self, m: Monomial, c: BigRational) {
        if c.is_zero() {
            return;
        }
        let slot = self.terms.entry(m).or_insert_with(BigRational::zero);
        *slot += c;
        if slot.is_zero() {
            self.terms.retain(|_, v| !v.is_zero());
        }
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    /// The value when no variable occurs.
    pub fn as_constant(&self) -> Option<BigRational> {
        match self.terms.len() {
            0 => Some(BigRational::zero()),
            1 => self.terms.get(&Vec::new()).cloned(),
            _ => None,
        }
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Monomial, &BigRational)> {
        self.terms.iter()
    }

    pub fn variables(&self) -> BTreeSet<usize> {
        self.terms.keys().flatten().map(|&(v, _)| v).collect()
    }

    pub fn add(&self, other: &Poly) -> Poly {
        let mut out = self.clone();
        for (m, c) in &other.terms {
            out.add_term(m.clone(), c.clone());
        }
        out
    }

    pub fn sub(&self, other: &Poly) -> Poly {
        self.add(&other.scale(&-BigRational::one()))
    }

    pub fn scale(&self, c: &BigRational) -> Poly {
        let mut out = Poly::zero();
        for (m, v) in &self.terms {
            out.add_term(m.clone(), v * c);
        }
        out
    }

    pub fn mul(&self, other: &Poly) -> Poly {
        let mut out = Poly::zero();
        for (ma, ca) in &self.terms {
            for (mb, cb) in &other.terms {
                out.add_term(mul_monomials(ma, mb), ca * cb);
            }
        }
        out
    }

    pub fn derivative(&self, var: usize) -> Poly {
        let mut out = Poly::zero();
        for (m, c) in &self.terms {
            if let Some(&(_, k)) = m.iter().find(|(v, _)| *v == var) {
                let rest: Monomial =
                    m.iter().filter_map(|&(v, e)| if v != var { Some((v, e)) } else if k > 1 { Some((v, k - 1)) } else { None }).collect();
                out.add_term(rest, c * BigRational::from_integer(k.into()));
            }
        }
        out
    }

    /// Replaces every occurrence of `var` by `value`.
    pub fn substitute(&self, var: usize, value: &Poly) -> Poly {
        let mut out = Poly::zero();
        for (m, c) in &self.terms {
            let mut term = Poly::zero();
            term.add_term(m.iter().filter(|(v, _)| *v != var).copied().collect(), c.clone());
            if let Some(&(_, k)) = m.iter().find(|(v, _)| *v == var) {
                for _ in 0..k {
                    term = term.mul(value);
                }
            }
            out = out.add(&term);
        }
        out
    }

    pub fn eval(&self, value: impl Fn(usize) -> BigRational) -> BigRational {
        let mut total = BigRational::zero();
        for (m, c) in &self.terms {
            let mut t = c.clone();
            for &(v, k) in m {
                t *= num_traits::pow(value(v), k as usize);
            }
            total += t;
        }
        total
    }

    /// SMT-LIB real-arithmetic term.
    pub fn to_smt(&self, name: impl Fn(usize) -> String) -> String {
        let mut parts: Vec<String> = Vec::new();
        for (m, c) in &self.terms {
            let mut factors: Vec<String> = Vec::new();
            if m.is_empty() || !c.is_one() {
                factors.push(smt_rational(c));
            }
            for &(v, k) in m {
                factors.extend(std::iter::repeat_n(name(v), k as usize));
            }
            parts.push(if factors.len() == 1 { factors.pop().unwrap() } else { format!("(* {})", factors.join(" ")) });
        }
        match parts.len() {
            0 => "0.0".into(),
            1 => parts.pop().unwrap(),
            _ => format!("(+ {})", parts.join(" ")),
        }
    }
}

/// SMT-LIB literal for an exact rational.
pub fn smt_rational(c: &BigRational) -> String {
    let mut out = String::new();
    let magnitude = c.abs();
    let body = if magnitude.denom().is_one() {
        format!("{}.0", magnitude.numer())
    } else {
        format!("(/ {}.0 {}.0)", magnitude.numer(), magnitude.denom())
    };
    if c.is_negative() {
        let _ = write!(out, "(- {body})");
    } else {
        out = body;
    }
    out
}

/// Determinant by expansion along rows, memoized over the set of columns
/// already used.
pub fn determinant(m: &[Vec<Poly>]) -> Poly {
    let n = m.len();
    assert!(n <= 20 && m.iter().all(|r| r.len() == n), "square matrix of at most 20 rows");
    // minors[mask] = det of rows 0..|mask| restricted to columns in `mask`.
    let mut minors: Vec<Poly> = vec![Poly::zero(); 1 << n];
    minors[0] = Poly::constant(BigRational::one());
    for mask in 1usize..(1 << n) {
        let row = mask.count_ones() as usize - 1;
        let mut acc = Poly::zero();
        let mut position = 0;
        for col in 0..n {
            if mask & (1 << col) == 0 {
                continue;
            }
            let entry = &m[row][col];
            let rest = &minors[mask & !(1 << col)];
            if !entry.is_zero() && !rest.is_zero() {
                let term = entry.mul(rest);
                acc = if (row + position).is_multiple_of(2) { acc.add(&term) } else { acc.sub(&term) };
            }
            position += 1;
        }
        minors[mask] = acc;
    }
    minors[(1 << n) - 1].clone()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn q(n: i64) -> BigRational {
        BigRational::from_integer(n.into())
    }

    fn c(n: i64) -> Poly {
        Poly::constant(q(n))
    }

    #[test]
    fn arithmetic_and_cancellation() {
        let x = Poly::var(0);
        let y = Poly::var(1);
        let sq = x.add(&y).mul(&x.sub(&y));
        let expected = x.mul(&x).sub(&y.mul(&y));
        assert_eq!(sq, expected);
        assert!(x.sub(&x).is_zero());
        assert_eq!(c(3).as_constant(), Some(q(3)));
        assert_eq!(x.as_constant(), None);
    }

    #[test]
    fn derivative_and_substitution() {
        let x = Poly::var(0);
        let p = x.mul(&x).mul(&c(3)).add(&x.mul(&Poly::var(1)));
        let dp = p.derivative(0);
        assert_eq!(dp, x.mul(&c(6)).add(&Poly::var(1)));
        let sub = p.substitute(0, &c(2));
        assert_eq!(sub, c(12).add(&Poly::var(1).mul(&c(2))));
        assert_eq!(p.eval(|v| if v == 0 { q(2) } else { q(5) }), q(22));
    }

    #[test]
    fn numeric_determinant_matches() {
        let m: Vec<Vec<Poly>> = [[0, 1, 1, 1], [1, 0, 9, 25], [1, 9, 0, 16], [1, 25, 16, 0]]
            .iter()
            .map(|r| r.iter().map(|&v| c(v)).collect())
            .collect();
        assert_eq!(determinant(&m).as_constant(), Some(q(-576)));
    }

    #[test]
    fn symbolic_determinant_is_quadratic_in_an_entry() {
        // Unit square with the diagonal 0-3 left symbolic.
        let t = Poly::var(7);
        let z = [[c(0), c(1), c(1), t.clone()], [c(1), c(0), c(2), c(1)], [c(1), c(2), c(0), c(1)], [t, c(1), c(1), c(0)]];
        let mut m = vec![vec![c(0), c(1), c(1), c(1), c(1)]];
        for row in &z {
            let mut r = vec![c(1)];
            r.extend(row.iter().cloned());
            m.push(r);
        }
        let det = determinant(&m);
        assert_eq!(det.variables(), BTreeSet::from([7]));
        assert!(det.eval(|_| q(2)).is_zero());
        assert!(det.terms().all(|(mono, _)| mono.iter().all(|&(_, k)| k <= 2)));
    }

    #[test]
    fn smt_rendering() {
        assert_eq!(smt_rational(&BigRational::new((-3).into(), 4.into())), "(- (/ 3.0 4.0))");
        let p = Poly::var(0).mul(&Poly::var(0)).add(&c(-2));
        assert_eq!(p.to_smt(|v| format!("x{v}")), "(+ (- 2.0) (* x0 x0))");
        assert_eq!(Poly::zero().to_smt(|_| String::new()), "0.0");
    }
}
