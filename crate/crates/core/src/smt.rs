//! Export of the condition system as an SMT-LIB script over quantifier-free
//! nonlinear real arithmetic, and import of the models such solvers print.
//!
//! Only squared distances of non-edges and `α` become declared variables;
//! edge-pinned values are written as constants.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use num_rational::BigRational;
use num_traits::{One, Signed, Zero};

use crate::cm::{IndexSet, SquaredDistanceMatrix};
use crate::embed::{distances_of, Configuration};
use crate::error::{Error, Result};
use crate::poly::{determinant, Poly};
use crate::scalar::{parse_rational, Scalar};
use crate::system::{Assignment, Instance, Side};

/// Variable layout: left pairs, then right pairs, then `α`, then a scratch
/// variable used to take derivatives in a single entry.
struct Layout {
    n: usize,
    pairs: usize,
}

impl Layout {
    fn new(n: usize) -> Self {
        Layout { n, pairs: n * n.saturating_sub(1) / 2 }
    }

    fn pair_index(&self, i: usize, j: usize) -> usize {
        let (i, j) = (i.min(j), i.max(j));
        i * self.n - i * (i + 1) / 2 + (j - i - 1)
    }

    fn var(&self, side: Side, i: usize, j: usize) -> usize {
        self.pair_index(i, j) + if side == Side::Right { self.pairs } else { 0 }
    }

    fn alpha(&self) -> usize {
        2 * self.pairs
    }

    fn scratch(&self) -> usize {
        2 * self.pairs + 1
    }

    fn name(&self, id: usize) -> String {
        if id == self.alpha() {
            return "alpha".into();
        }
        let (side, k) = if id >= self.pairs { ("zp", id - self.pairs) } else { ("z", id) };
        let mut k = k;
        for i in 0..self.n {
            let row = self.n - i - 1;
            if k < row {
                return format!("{side}_{i}_{}", i + 1 + k);
            }
            k -= row;
        }
        unreachable!("variable id out of range")
    }
}

/// Symbolic squared distances for one side.
struct Entries {
    values: Vec<Vec<Poly>>,
}

impl Entries {
    fn build<T: Scalar>(inst: &Instance<T>, side: Side, layout: &Layout, fixed: Option<&SquaredDistanceMatrix<BigRational>>) -> Self {
        let n = inst.n();
        let mut values = vec![vec![Poly::zero(); n]; n];
        for i in 0..n {
            for j in i + 1..n {
                let entry = if let Some(z) = fixed {
                    Poly::constant(z.get(i, j).clone())
                } else if let Some(e) = inst.edge(i, j) {
                    let l = if side == Side::Left { &e.lambda } else { &e.lambda_prime }.to_rational();
                    Poly::constant(&l * &l)
                } else {
                    Poly::var(layout.var(side, i, j))
                };
                values[i][j] = entry.clone();
                values[j][i] = entry;
            }
        }
        Entries { values }
    }

    /// Bordered determinant over `set`, with `(a, b)` optionally replaced by
    /// the scratch variable.
    fn cmd(&self, set: &IndexSet, scratch: Option<(usize, usize, usize)>) -> Poly {
        let k = set.len();
        let one = Poly::constant(BigRational::one());
        let mut m = vec![vec![Poly::zero(); k + 1]; k + 1];
        for r in 1..=k {
            m[0][r] = one.clone();
            m[r][0] = one.clone();
        }
        for (r, i) in set.iter().enumerate() {
            for (c, j) in set.iter().enumerate() {
                m[r + 1][c + 1] = match scratch {
                    Some((a, b, var)) if (i, j) == (a, b) || (i, j) == (b, a) => Poly::var(var),
                    _ => self.values[i][j].clone(),
                };
            }
        }
        determinant(&m)
    }

    fn entry(&self, i: usize, j: usize) -> &Poly {
        &self.values[i][j]
    }
}

/// Whether `(-1)^k · cmd` is the nonnegative quantity for a `k`-subset.
fn signed(p: Poly, k: usize) -> Poly {
    if k.is_multiple_of(2) {
        p
    } else {
        p.scale(&-BigRational::one())
    }
}

/// Writes the script. With `fixed_left`, every left squared distance is
/// taken from that framework instead of being a variable.
pub fn export_smt<T: Scalar>(inst: &Instance<T>, fixed_left: Option<&Configuration<T>>) -> Result<String> {
    let (n, d) = (inst.n(), inst.dim());
    if let Some(c) = fixed_left {
        if c.len() != n || c.dim() != d {
            return Err(Error::Input(format!("fixed left framework must hold {n} points in R^{d}")));
        }
    }
    let layout = Layout::new(n);
    let fixed = fixed_left.map(|c| distances_of(&c.map(Scalar::to_rational)));
    let left = Entries::build(inst, Side::Left, &layout, fixed.as_ref());
    let right = Entries::build(inst, Side::Right, &layout, None);
    let name = |id: usize| layout.name(id);

    let mut out = String::new();
    let _ = writeln!(out, "; n = {n}, d = {d}, {} edges", inst.edges().len());
    let _ = writeln!(out, "(set-logic QF_NRA)");
    let mut free: Vec<usize> = Vec::new();
    for (i, j) in (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))) {
        if inst.is_edge(i, j) {
            continue;
        }
        if fixed.is_none() {
            free.push(layout.var(Side::Left, i, j));
        }
        free.push(layout.var(Side::Right, i, j));
    }
    free.sort_unstable();
    for &v in &free {
        let _ = writeln!(out, "(declare-fun {} () Real)", name(v));
    }
    let _ = writeln!(out, "(declare-fun alpha () Real)");

    let assert = |out: &mut String, comment: &str, body: String| {
        if body != "true" {
            let _ = writeln!(out, "; {comment}\n(assert {body})");
        }
    };
    for &v in &free {
        assert(&mut out, "nonnegative squared distance", format!("(>= {} 0.0)", name(v)));
    }
    let sides = [(Side::Left, &left), (Side::Right, &right)];
    for size in 2..=(d + 1).min(n) {
        for set in IndexSet::subsets(n, size) {
            for (side, e) in &sides {
                let p = signed(e.cmd(&set, None), size);
                assert(&mut out, &format!("{} sign {set}", side.name()), ge_zero(&p, name));
            }
        }
    }
    if d + 2 <= n {
        for set in IndexSet::subsets(n, d + 2) {
            for (side, e) in &sides {
                let p = e.cmd(&set, None);
                assert(&mut out, &format!("{} vanishing {set}", side.name()), eq_zero(&p, name));
            }
        }
    }
    assert(&mut out, "positive ratio", "(> alpha 0.0)".into());
    let alpha = Poly::var(layout.alpha());
    let bases: Vec<IndexSet> = if d < n { IndexSet::subsets(n, d + 1).collect() } else { Vec::new() };
    for set in &bases {
        let p = right.cmd(set, None).sub(&alpha.mul(&left.cmd(set, None)));
        assert(&mut out, &format!("common ratio {set}"), eq_zero(&p, name));
    }

    // A base simplex, and matched sides for every point outside it.
    let mut options = Vec::new();
    for base in &bases {
        let mut clauses = vec![format!("(not {})", eq_zero(&left.cmd(base, None), name))];
        for outside in (0..n).filter(|v| !base.contains(*v)) {
            let set = base.with(outside);
            for apex in base.iter() {
                let form = |e: &Entries| {
                    let t = layout.scratch();
                    e.cmd(&set, Some((apex, outside, t))).derivative(t).substitute(t, e.entry(apex, outside))
                };
                let (l, r) = (form(&left).to_smt(name), form(&right).to_smt(name));
                clauses.push(format!(
                    "(or (and (> {l} 0.0) (> {r} 0.0)) (and (< {l} 0.0) (< {r} 0.0)) (and (= {l} 0.0) (= {r} 0.0)))"
                ));
            }
        }
        options.push(format!("(and {})", clauses.join(" ")));
    }
    let base_clause = match options.len() {
        0 => "false".into(),
        1 => options.pop().unwrap(),
        _ => format!("(or {})", options.join(" ")),
    };
    assert(&mut out, "base simplex with matched sides", base_clause);
    let _ = writeln!(out, "(check-sat)\n(get-model)");
    Ok(out)
}

fn ge_zero(p: &Poly, name: impl Fn(usize) -> String) -> String {
    match p.as_constant() {
        Some(c) => (!c.is_negative()).to_string(),
        None => format!("(>= {} 0.0)", p.to_smt(name)),
    }
}

fn eq_zero(p: &Poly, name: impl Fn(usize) -> String) -> String {
    match p.as_constant() {
        Some(c) => c.is_zero().to_string(),
        None => format!("(= {} 0.0)", p.to_smt(name)),
    }
}

/// Parsed s-expression.
#[derive(Clone, Debug, PartialEq)]
pub enum Sexp {
    Atom(String),
    List(Vec<Sexp>),
}

/// Parses a sequence of s-expressions, skipping `;` comments.
pub fn parse_sexps(text: &str) -> Result<Vec<Sexp>> {
    let mut stack: Vec<Vec<Sexp>> = vec![Vec::new()];
    let mut atom = String::new();
    let flush = |atom: &mut String, stack: &mut Vec<Vec<Sexp>>| {
        if !atom.is_empty() {
            stack.last_mut().expect("open frame").push(Sexp::Atom(std::mem::take(atom)));
        }
    };
    for line in text.lines() {
        let line = line.split(';').next().unwrap_or("");
        for ch in line.chars() {
            match ch {
                '(' => {
                    flush(&mut atom, &mut stack);
                    stack.push(Vec::new());
                }
                ')' => {
                    flush(&mut atom, &mut stack);
                    let list = stack.pop().expect("open frame");
                    stack.last_mut().ok_or_else(|| Error::Input("unbalanced ')'".into()))?.push(Sexp::List(list));
                }
                c if c.is_whitespace() => flush(&mut atom, &mut stack),
                c => atom.push(c),
            }
        }
        flush(&mut atom, &mut stack);
    }
    if stack.len() != 1 {
        return Err(Error::Input("unbalanced '('".into()));
    }
    Ok(stack.pop().unwrap())
}

#[derive(Clone, Debug, PartialEq)]
enum Value {
    Num(BigRational),
    Bool(bool),
}

fn eval(e: &Sexp, env: &BTreeMap<String, BigRational>) -> Result<Value> {
    let num = |e: &Sexp| match eval(e, env)? {
        Value::Num(v) => Ok(v),
        Value::Bool(_) => Err(Error::Input("expected a number".into())),
    };
    let boolean = |e: &Sexp| match eval(e, env)? {
        Value::Bool(v) => Ok(v),
        Value::Num(_) => Err(Error::Input("expected a formula".into())),
    };
    match e {
        Sexp::Atom(a) => match a.as_str() {
            "true" => Ok(Value::Bool(true)),
            "false" => Ok(Value::Bool(false)),
            _ => env
                .get(a)
                .cloned()
                .or_else(|| parse_rational(a))
                .map(Value::Num)
                .ok_or_else(|| Error::Input(format!("unknown symbol {a}"))),
        },
        Sexp::List(items) => {
            let (head, args) = match items.split_first() {
                Some((Sexp::Atom(h), rest)) => (h.as_str(), rest),
                _ => return Err(Error::Input("expected an operator".into())),
            };
            let nums = || args.iter().map(num).collect::<Result<Vec<_>>>();
            let compare = |f: fn(&BigRational, &BigRational) -> bool| -> Result<Value> {
                let v = nums()?;
                Ok(Value::Bool(v.windows(2).all(|w| f(&w[0], &w[1]))))
            };
            match head {
                "+" => Ok(Value::Num(nums()?.into_iter().fold(BigRational::zero(), |a, b| a + b))),
                "*" => Ok(Value::Num(nums()?.into_iter().fold(BigRational::one(), |a, b| a * b))),
                "-" => {
                    let v = nums()?;
                    match v.split_first() {
                        Some((first, [])) => Ok(Value::Num(-first.clone())),
                        Some((first, rest)) => Ok(Value::Num(rest.iter().fold(first.clone(), |a, b| a - b))),
                        None => Err(Error::Input("empty '-'".into())),
                    }
                }
                "/" => {
                    let v = nums()?;
                    let (first, rest) = v.split_first().ok_or_else(|| Error::Input("empty '/'".into()))?;
                    let mut acc = first.clone();
                    for b in rest {
                        if b.is_zero() {
                            return Err(Error::Input("division by zero".into()));
                        }
                        acc /= b;
                    }
                    Ok(Value::Num(acc))
                }
                "=" => compare(|a, b| a == b),
                "<" => compare(|a, b| a < b),
                "<=" => compare(|a, b| a <= b),
                ">" => compare(|a, b| a > b),
                ">=" => compare(|a, b| a >= b),
                "not" => Ok(Value::Bool(!boolean(args.first().ok_or_else(|| Error::Input("empty 'not'".into()))?)?)),
                "and" => Ok(Value::Bool(args.iter().map(boolean).collect::<Result<Vec<_>>>()?.into_iter().all(|b| b))),
                "or" => Ok(Value::Bool(args.iter().map(boolean).collect::<Result<Vec<_>>>()?.into_iter().any(|b| b))),
                other => Err(Error::Input(format!("unsupported operator {other}"))),
            }
        }
    }
}

/// Reads `(define-fun name () Real value)` entries from solver output.
pub fn parse_model(text: &str) -> Result<BTreeMap<String, BigRational>> {
    fn collect(e: &Sexp, out: &mut BTreeMap<String, BigRational>) -> Result<()> {
        if let Sexp::List(items) = e {
            if let [Sexp::Atom(head), Sexp::Atom(name), Sexp::List(params), _sort, value] = items.as_slice() {
                if head == "define-fun" && params.is_empty() {
                    match eval(value, &BTreeMap::new())? {
                        Value::Num(v) => {
                            out.insert(name.clone(), v);
                        }
                        Value::Bool(_) => return Err(Error::Input(format!("{name} is not a real"))),
                    }
                    return Ok(());
                }
            }
            for item in items {
                collect(item, out)?;
            }
        }
        Ok(())
    }
    let mut out = BTreeMap::new();
    for e in parse_sexps(text)? {
        collect(&e, &mut out)?;
    }
    Ok(out)
}

/// Whether every assertion of `script` holds under `model`.
pub fn script_holds(script: &str, model: &BTreeMap<String, BigRational>) -> Result<bool> {
    for e in parse_sexps(script)? {
        if let Sexp::List(items) = &e {
            if let [Sexp::Atom(head), body] = items.as_slice() {
                if head == "assert" && eval(body, model)? != Value::Bool(true) {
                    return Ok(false);
                }
            }
        }
    }
    Ok(true)
}

/// Full assignment from pinned values, the fixed left framework if any, and
/// a model for the free variables.
pub fn assignment_from_model<T: Scalar>(
    inst: &Instance<T>,
    model: &BTreeMap<String, BigRational>,
    fixed_left: Option<&Configuration<T>>,
) -> Result<Assignment<BigRational>> {
    let n = inst.n();
    let layout = Layout::new(n);
    let fixed = fixed_left.map(|c| distances_of(&c.map(Scalar::to_rational)));
    let lookup = |side: Side, i: usize, j: usize| -> Result<BigRational> {
        if side == Side::Left {
            if let Some(z) = &fixed {
                return Ok(z.get(i, j).clone());
            }
        }
        if let Some(e) = inst.edge(i, j) {
            let l = if side == Side::Left { &e.lambda } else { &e.lambda_prime }.to_rational();
            return Ok(&l * &l);
        }
        let key = layout.name(layout.var(side, i, j));
        model.get(&key).cloned().ok_or_else(|| Error::Input(format!("model has no value for {key}")))
    };
    let mut entries = [Vec::new(), Vec::new()];
    for (slot, side) in entries.iter_mut().zip([Side::Left, Side::Right]) {
        for i in 0..n {
            let mut row = Vec::with_capacity(n);
            for j in 0..n {
                row.push(if i == j { BigRational::zero() } else { lookup(side, i, j)? });
            }
            slot.push(row);
        }
    }
    let [z, zp] = entries;
    let alpha = model.get("alpha").cloned().ok_or_else(|| Error::Input("model has no value for alpha".into()))?;
    Ok(Assignment { z: SquaredDistanceMatrix::candidate(z)?, z_prime: SquaredDistanceMatrix::candidate(zp)?, alpha })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::Tolerance;
    use crate::system::check_assignment;

    fn q(n: i64) -> BigRational {
        BigRational::from_integer(n.into())
    }

    fn path() -> Instance<BigRational> {
        Instance::from_tuples(3, 2, vec![(0, 1, q(3), q(6)), (1, 2, q(4), q(8))]).unwrap()
    }

    #[test]
    fn names_round_trip() {
        let layout = Layout::new(5);
        for i in 0..5 {
            for j in i + 1..5 {
                assert_eq!(layout.name(layout.var(Side::Left, i, j)), format!("z_{i}_{j}"));
                assert_eq!(layout.name(layout.var(Side::Right, i, j)), format!("zp_{i}_{j}"));
            }
        }
        assert_eq!(layout.name(layout.alpha()), "alpha");
    }

    #[test]
    fn path_declares_one_free_variable_per_side() {
        let text = export_smt(&path(), None).unwrap();
        let decls: Vec<&str> = text.lines().filter(|l| l.starts_with("(declare-fun")).collect();
        assert_eq!(decls, ["(declare-fun z_0_2 () Real)", "(declare-fun zp_0_2 () Real)", "(declare-fun alpha () Real)"]);
        assert!(text.contains("(set-logic QF_NRA)") && text.contains("(check-sat)"));
        parse_sexps(&text).unwrap();
    }

    #[test]
    fn hand_built_model_round_trips() {
        // Right angle at vertex 1 on both sides: z_0_2 = 25, z'_0_2 = 100.
        let text = export_smt(&path(), None).unwrap();
        let model = parse_model(
            "(model (define-fun z_0_2 () Real 25.0) (define-fun zp_0_2 () Real (/ 200.0 2.0)) (define-fun alpha () Real 16.0))",
        )
        .unwrap();
        assert!(script_holds(&text, &model).unwrap());
        let a = assignment_from_model(&path(), &model, None).unwrap();
        assert!(check_assignment(&path(), &a, &Tolerance::default()).unwrap().passed);

        // A reflected right diagonal breaks the common ratio.
        let mut bad = model.clone();
        bad.insert("zp_0_2".into(), q(36));
        assert!(!script_holds(&text, &bad).unwrap());
        let a = assignment_from_model(&path(), &bad, None).unwrap();
        assert!(!check_assignment(&path(), &a, &Tolerance::default()).unwrap().passed);
    }

    #[test]
    fn script_agrees_with_checker_on_a_rhombus() {
        // 60-degree rhombus missing its long diagonal, scaled by 2 on the right.
        let inst = Instance::from_tuples(
            4,
            2,
            vec![(0, 1, q(1), q(2)), (0, 2, q(1), q(2)), (1, 2, q(1), q(2)), (1, 3, q(1), q(2)), (2, 3, q(1), q(2))],
        )
        .unwrap();
        let text = export_smt(&inst, None).unwrap();
        for (z03, zp03, alpha, expect) in
            [(3, 12, 16, Some(true)), (3, 0, 16, Some(false)), (3, 12, 4, Some(false)), (0, 0, 16, None), (1, 4, 16, None)]
        {
            let model: BTreeMap<String, BigRational> =
                [("z_0_3", q(z03)), ("zp_0_3", q(zp03)), ("alpha", q(alpha))].into_iter().map(|(k, v)| (k.to_string(), v)).collect();
            let holds = script_holds(&text, &model).unwrap();
            let a = assignment_from_model(&inst, &model, None).unwrap();
            let checked = check_assignment(&inst, &a, &Tolerance::default()).unwrap();
            assert_eq!(holds, checked.passed, "z={z03} z'={zp03} alpha={alpha}");
            if let Some(expect) = expect {
                assert_eq!(holds, expect);
            }
        }
    }

    #[test]
    fn fixed_left_pins_every_left_entry() {
        let left = Configuration::new(2, vec![vec![q(0), q(0)], vec![q(3), q(0)], vec![q(3), q(4)]]).unwrap();
        let text = export_smt(&path(), Some(&left)).unwrap();
        assert!(!text.contains("(declare-fun z_0_2"));
        assert!(text.contains("(declare-fun zp_0_2"));
        let model = parse_model("(define-fun zp_0_2 () Real 100.0)\n(define-fun alpha () Real 16.0)").unwrap();
        assert!(script_holds(&text, &model).unwrap());
        let a = assignment_from_model(&path(), &model, Some(&left)).unwrap();
        assert_eq!(a.z.get(0, 2), &q(25));
    }

    #[test]
    fn malformed_input() {
        assert!(parse_sexps("(a (b)").is_err());
        assert!(parse_sexps("a))").is_err());
        assert!(parse_model("(define-fun x () Real (/ 1.0 0.0))").is_err());
        let model = parse_model("(define-fun x () Real (- (/ 1.0 4.0)))").unwrap();
        assert_eq!(model["x"], BigRational::new((-1).into(), 4.into()));
        assert!(assignment_from_model(&path(), &BTreeMap::new(), None).is_err());
    }
}
