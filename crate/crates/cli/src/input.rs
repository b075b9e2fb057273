//! Instance and configuration files.
//!
//! ```toml
//! dimension = 2
//! vertices = 3
//! edges = [
//!   { i = 0, j = 1, lambda = 3, lambda_prime = 6 },
//!   { i = 1, j = 2, lambda = "4", lambda_prime = "8/1" },
//! ]
//! fixed_left = [[0, 0], [3, 0], [3, 4]]
//!
//! [assignment]
//! z = [[0, 9, 25], [9, 0, 16], [25, 16, 0]]
//! z_prime = [[0, 36, 100], [36, 0, 64], [100, 64, 0]]
//! alpha = 16
//! ```
//!
//! Numbers may be integers, decimals, or strings holding a decimal or an
//! exact `"p/q"`. Decimals are read as the exact rational they print as.

use std::fmt;
use std::path::Path;

use affeq::{parse_rational, Rational};
use serde::Deserialize;
use toml::Spanned;

#[derive(Debug)]
pub struct InputError {
    pub file: String,
    pub line: Option<usize>,
    pub field: String,
    pub message: String,
}

impl fmt::Display for InputError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(line) => write!(f, "{}:{}: {}: {}", self.file, line, self.field, self.message),
            None => write!(f, "{}: {}: {}", self.file, self.field, self.message),
        }
    }
}

impl std::error::Error for InputError {}

#[derive(Deserialize)]
#[serde(untagged)]
enum Number {
    Int(i64),
    Float(f64),
    Text(String),
}

type Grid = Vec<Vec<Spanned<Number>>>;

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct EdgeRecord {
    i: Spanned<i64>,
    j: Spanned<i64>,
    lambda: Spanned<Number>,
    lambda_prime: Spanned<Number>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct AssignmentRecord {
    z: Spanned<Grid>,
    z_prime: Spanned<Grid>,
    alpha: Spanned<Number>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct InstanceRecord {
    dimension: Option<Spanned<i64>>,
    vertices: Option<Spanned<i64>>,
    #[serde(default)]
    edges: Vec<Spanned<EdgeRecord>>,
    fixed_left: Option<Spanned<Grid>>,
    assignment: Option<AssignmentRecord>,
    squared_distances: Option<Spanned<Grid>>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigurationRecord {
    points: Spanned<Grid>,
}

/// `(z, z', α)` as written in the file.
pub type AssignmentRows = (Vec<Vec<Rational>>, Vec<Vec<Rational>>, Rational);

/// Parsed instance file with every number exact.
#[derive(Clone, Debug)]
pub struct InstanceFile {
    pub dimension: Option<usize>,
    pub vertices: Option<usize>,
    pub edges: Vec<(usize, usize, Rational, Rational)>,
    pub fixed_left: Option<Vec<Vec<Rational>>>,
    pub assignment: Option<AssignmentRows>,
    pub squared_distances: Option<Vec<Vec<Rational>>>,
}

struct Source<'a> {
    file: String,
    text: &'a str,
}

impl Source<'_> {
    fn error(&self, span: Option<std::ops::Range<usize>>, field: impl Into<String>, message: impl Into<String>) -> InputError {
        let line = span.map(|s| self.text[..s.start.min(self.text.len())].matches('\n').count() + 1);
        InputError { file: self.file.clone(), line, field: field.into(), message: message.into() }
    }

    fn number(&self, n: &Spanned<Number>, field: &str) -> Result<Rational, InputError> {
        let parsed = match n.get_ref() {
            Number::Int(v) => Some(Rational::from_integer((*v).into())),
            Number::Float(v) if v.is_finite() => parse_rational(&v.to_string()),
            Number::Float(_) => None,
            Number::Text(s) => parse_rational(s),
        };
        parsed.ok_or_else(|| self.error(Some(n.span()), field, "expected a finite decimal or a rational \"p/q\""))
    }

    fn count(&self, v: &Spanned<i64>, field: &str) -> Result<usize, InputError> {
        usize::try_from(*v.get_ref()).map_err(|_| self.error(Some(v.span()), field, "expected a nonnegative integer"))
    }

    fn grid(&self, g: &Spanned<Grid>, field: &str) -> Result<Vec<Vec<Rational>>, InputError> {
        g.get_ref()
            .iter()
            .enumerate()
            .map(|(r, row)| {
                row.iter().enumerate().map(|(c, v)| self.number(v, &format!("{field}[{r}][{c}]"))).collect()
            })
            .collect()
    }
}

fn read(path: &Path) -> Result<String, InputError> {
    std::fs::read_to_string(path).map_err(|e| InputError {
        file: path.display().to_string(),
        line: None,
        field: "file".into(),
        message: e.to_string(),
    })
}

fn parse_toml<T: serde::de::DeserializeOwned>(src: &Source<'_>) -> Result<T, InputError> {
    toml::from_str(src.text).map_err(|e| {
        let field = "document";
        src.error(e.span(), field, e.message().to_string())
    })
}

pub fn load_instance(path: &Path) -> Result<InstanceFile, InputError> {
    let text = read(path)?;
    parse_instance(&path.display().to_string(), &text)
}

pub fn parse_instance(file: &str, text: &str) -> Result<InstanceFile, InputError> {
    let src = Source { file: file.into(), text };
    let rec: InstanceRecord = parse_toml(&src)?;
    let dimension = rec.dimension.as_ref().map(|d| src.count(d, "dimension")).transpose()?;
    let vertices = rec.vertices.as_ref().map(|v| src.count(v, "vertices")).transpose()?;
    let mut edges = Vec::with_capacity(rec.edges.len());
    for (k, e) in rec.edges.iter().enumerate() {
        let r = e.get_ref();
        let field = |name: &str| format!("edges[{k}].{name}");
        let (i, j) = (src.count(&r.i, &field("i"))?, src.count(&r.j, &field("j"))?);
        if let Some(n) = vertices {
            for (v, name, span) in [(i, "i", r.i.span()), (j, "j", r.j.span())] {
                if v >= n {
                    return Err(src.error(Some(span), field(name), format!("vertex {v} out of range for {n} vertices")));
                }
            }
        }
        let lambda = src.number(&r.lambda, &field("lambda"))?;
        let lambda_prime = src.number(&r.lambda_prime, &field("lambda_prime"))?;
        for (v, name, span) in [(&lambda, "lambda", r.lambda.span()), (&lambda_prime, "lambda_prime", r.lambda_prime.span())] {
            if *v <= Rational::from_integer(0.into()) {
                return Err(src.error(Some(span), field(name), "lengths must be positive"));
            }
        }
        edges.push((i, j, lambda, lambda_prime));
    }
    let fixed_left = rec.fixed_left.as_ref().map(|g| src.grid(g, "fixed_left")).transpose()?;
    let assignment = match &rec.assignment {
        Some(a) => Some((src.grid(&a.z, "assignment.z")?, src.grid(&a.z_prime, "assignment.z_prime")?, src.number(&a.alpha, "assignment.alpha")?)),
        None => None,
    };
    let squared_distances = rec.squared_distances.as_ref().map(|g| src.grid(g, "squared_distances")).transpose()?;

    // Shape checks that need the vertex count.
    let n = vertices.or(squared_distances.as_ref().map(Vec::len));
    if let Some(n) = n {
        let square = |g: &Vec<Vec<Rational>>| g.len() == n && g.iter().all(|r| r.len() == n);
        if let (Some(g), Some(rec_a)) = (&assignment, &rec.assignment) {
            if !square(&g.0) {
                return Err(src.error(Some(rec_a.z.span()), "assignment.z", format!("expected a {n}x{n} matrix")));
            }
            if !square(&g.1) {
                return Err(src.error(Some(rec_a.z_prime.span()), "assignment.z_prime", format!("expected a {n}x{n} matrix")));
            }
        }
        if let (Some(g), Some(span)) = (&squared_distances, rec.squared_distances.as_ref().map(|s| s.span())) {
            if !square(g) {
                return Err(src.error(Some(span), "squared_distances", format!("expected a {n}x{n} matrix")));
            }
        }
        if let (Some(g), Some(rec_f), Some(d)) = (&fixed_left, &rec.fixed_left, dimension) {
            if g.len() != n || g.iter().any(|p| p.len() != d) {
                return Err(src.error(Some(rec_f.span()), "fixed_left", format!("expected {n} points with {d} coordinates")));
            }
        }
    }
    Ok(InstanceFile { dimension, vertices, edges, fixed_left, assignment, squared_distances })
}

/// A standalone configuration file: `points = [[x, y], ...]`.
pub fn load_configuration(path: &Path) -> Result<Vec<Vec<Rational>>, InputError> {
    let text = read(path)?;
    let src = Source { file: path.display().to_string(), text: &text };
    let rec: ConfigurationRecord = parse_toml(&src)?;
    let points = src.grid(&rec.points, "points")?;
    if let Some(first) = points.first() {
        if points.iter().any(|p| p.len() != first.len()) {
            return Err(src.error(Some(rec.points.span()), "points", "all points need the same number of coordinates"));
        }
    }
    Ok(points)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn q(p: i64, r: i64) -> Rational {
        Rational::new(p.into(), r.into())
    }

    #[test]
    fn numbers_in_every_form() {
        let text = r#"
dimension = 2
vertices = 3
edges = [
  { i = 0, j = 1, lambda = 3, lambda_prime = 0.5 },
  { i = 1, j = 2, lambda = "7/3", lambda_prime = "1e-2" },
]
"#;
        let f = parse_instance("t.toml", text).unwrap();
        assert_eq!(f.edges[0].2, q(3, 1));
        assert_eq!(f.edges[0].3, q(1, 2));
        assert_eq!(f.edges[1].2, q(7, 3));
        assert_eq!(f.edges[1].3, q(1, 100));
    }

    #[test]
    fn decimals_are_read_as_printed() {
        let f = parse_instance("t.toml", "edges = [{ i = 0, j = 1, lambda = 0.1, lambda_prime = 1 }]").unwrap();
        assert_eq!(f.edges[0].2, q(1, 10));
    }

    #[test]
    fn diagnostics_name_line_and_field() {
        let text = "dimension = 2\nvertices = 2\nedges = [\n  { i = 0, j = 5, lambda = 1, lambda_prime = 1 },\n]\n";
        let e = parse_instance("bad.toml", text).unwrap_err();
        assert_eq!((e.line, e.field.as_str()), (Some(4), "edges[0].j"));

        let text = "dimension = 2\nedges = [\n  { i = 0, j = 1, lambda = \"x\", lambda_prime = 1 },\n]\n";
        let e = parse_instance("bad.toml", text).unwrap_err();
        assert_eq!((e.line, e.field.as_str()), (Some(3), "edges[0].lambda"));

        let text = "dimension = 2\nedges = [\n  { i = 0, j = 1, lambda = -1, lambda_prime = 1 },\n]\n";
        assert_eq!(parse_instance("bad.toml", text).unwrap_err().field, "edges[0].lambda");

        let e = parse_instance("bad.toml", "dimension = 2\nbogus = 1\n").unwrap_err();
        assert_eq!(e.line, Some(2));
        assert!(e.to_string().starts_with("bad.toml:2:"));

        let e = parse_instance("bad.toml", "dimension = [\n").unwrap_err();
        assert!(e.line.is_some());
    }

    #[test]
    fn assignment_shape_is_checked() {
        let text = "vertices = 2\n[assignment]\nz = [[0, 1], [1, 0]]\nz_prime = [[0]]\nalpha = 1\n";
        let e = parse_instance("a.toml", text).unwrap_err();
        assert_eq!((e.line, e.field.as_str()), (Some(4), "assignment.z_prime"));
    }
}
