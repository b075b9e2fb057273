//! JSON report documents. Field names and nesting are part of the command
//! line contract; the golden tests in `tests/` pin them.

use affeq::cm::EmbeddabilityReport;
use affeq::reconstruct::FrameworkCheck;
use affeq::solver::Diagnostics;
use affeq::{
    Certificate, ConditionEntry, ConditionReport, Configuration, Embedding, FrameworkReport, Matrix, NoWitness, Scalar,
    SquaredDistanceMatrix, Verdict,
};
use serde::{Deserialize, Serialize};

#[derive(Serialize, Deserialize, Clone, Debug, PartialEq)]
pub struct ConditionRow {
    pub condition: String,
    pub passed: bool,
    pub witness: Option<Vec<usize>>,
    pub side: Option<String>,
    pub residual: f64,
    pub checked: usize,
    pub inapplicable: usize,
}

#[derive(Serialize, Deserialize, Clone, Debug, PartialEq)]
pub struct RatioExtremesRow {
    pub min_subset: Vec<usize>,
    pub min_ratio: f64,
    pub max_subset: Vec<usize>,
    pub max_ratio: f64,
}

#[derive(Serialize, Deserialize, Clone, Debug, PartialEq)]
pub struct ConditionsBody {
    pub passed: bool,
    pub first_failure: Option<String>,
    pub base_simplex: Option<Vec<usize>>,
    pub ratio_extremes: Option<RatioExtremesRow>,
    pub conditions: Vec<ConditionRow>,
}

fn condition_row(e: &ConditionEntry) -> ConditionRow {
    ConditionRow {
        condition: e.condition.label().into(),
        passed: e.passed,
        witness: e.witness.as_ref().map(|w| w.as_slice().to_vec()),
        side: e.side.map(|s| s.name().into()),
        residual: e.residual,
        checked: e.checked,
        inapplicable: e.inapplicable,
    }
}

impl From<&ConditionReport> for ConditionsBody {
    fn from(r: &ConditionReport) -> Self {
        ConditionsBody {
            passed: r.passed,
            first_failure: r.first_failure().map(|e| e.condition.label().into()),
            base_simplex: r.base_simplex.as_ref().map(|b| b.as_slice().to_vec()),
            ratio_extremes: r.ratio_extremes.as_ref().map(|x| RatioExtremesRow {
                min_subset: x.min.0.as_slice().to_vec(),
                min_ratio: x.min.1,
                max_subset: x.max.0.as_slice().to_vec(),
                max_ratio: x.max.1,
            }),
            conditions: r.entries.iter().map(condition_row).collect(),
        }
    }
}

#[derive(Serialize, Deserialize, Clone, Debug, PartialEq)]
pub struct FrameworkRow {
    pub passed: bool,
    pub residual: f64,
    pub witness: Option<Vec<usize>>,
}

impl From<&FrameworkCheck> for FrameworkRow {
    fn from(c: &FrameworkCheck) -> Self {
        FrameworkRow { passed: c.passed, residual: c.residual, witness: c.witness.clone() }
    }
}

#[derive(Serialize, Deserialize, Clone, Debug, PartialEq)]
pub struct FrameworksBody {
    pub passed: bool,
    pub left_lengths: FrameworkRow,
    pub right_lengths: FrameworkRow,
    pub affine: FrameworkRow,
    pub full_hull: FrameworkRow,
}

impl From<&FrameworkReport> for FrameworksBody {
    fn from(r: &FrameworkReport) -> Self {
        FrameworksBody {
            passed: r.passed,
            left_lengths: (&r.left_lengths).into(),
            right_lengths: (&r.right_lengths).into(),
            affine: (&r.affine).into(),
            full_hull: (&r.full_hull).into(),
        }
    }
}

#[derive(Serialize, Deserialize, Clone, Debug, PartialEq)]
pub struct MapRow {
    pub linear: Vec<Vec<f64>>,
    pub translation: Vec<f64>,
    pub det: f64,
}

#[derive(Serialize, Deserialize, Clone, Debug, PartialEq)]
pub struct CertificateRow {
    pub alpha: f64,
    pub z: Vec<Vec<f64>>,
    pub z_prime: Vec<Vec<f64>>,
    pub left: Vec<Vec<f64>>,
    pub right: Vec<Vec<f64>>,
    pub map: MapRow,
    pub conditions: ConditionsBody,
    pub frameworks: FrameworksBody,
}

fn matrix_rows(m: &Matrix<f64>) -> Vec<Vec<f64>> {
    m.to_rows()
}

fn distance_rows(z: &SquaredDistanceMatrix<f64>) -> Vec<Vec<f64>> {
    z.to_rows()
}

fn point_rows<T: Scalar>(c: &Configuration<T>) -> Vec<Vec<f64>> {
    c.points().iter().map(|p| p.iter().map(Scalar::as_f64).collect()).collect()
}

impl From<&Certificate> for CertificateRow {
    fn from(c: &Certificate) -> Self {
        CertificateRow {
            alpha: c.assignment.alpha,
            z: distance_rows(&c.assignment.z),
            z_prime: distance_rows(&c.assignment.z_prime),
            left: point_rows(&c.left),
            right: point_rows(&c.right),
            map: MapRow { linear: matrix_rows(&c.map.linear), translation: c.map.translation.clone(), det: c.map.det() },
            conditions: (&c.report).into(),
            frameworks: (&c.frameworks).into(),
        }
    }
}

#[derive(Serialize, Deserialize, Clone, Debug, PartialEq)]
pub struct WitnessRow {
    pub obstruction: String,
    pub side: Option<String>,
    pub subsets: Vec<Vec<usize>>,
    /// Exact rationals, printed as `p/q` or integers.
    pub values: Vec<String>,
    pub note: String,
}

impl From<&NoWitness> for WitnessRow {
    fn from(w: &NoWitness) -> Self {
        WitnessRow {
            obstruction: w.obstruction.name(),
            side: w.side.map(|s| s.name().into()),
            subsets: w.subsets.iter().map(|s| s.as_slice().to_vec()).collect(),
            values: w.values.iter().map(ToString::to_string).collect(),
            note: w.note.clone(),
        }
    }
}

#[derive(Serialize, Deserialize, Clone, Debug, PartialEq)]
pub struct SolveReport {
    pub command: String,
    pub verdict: String,
    pub dimension: usize,
    pub vertices: usize,
    pub mode: String,
    pub route: String,
    pub restarts_used: usize,
    pub best_residual: f64,
    pub note: String,
    pub certificate: Option<CertificateRow>,
    pub witness: Option<WitnessRow>,
}

impl SolveReport {
    pub fn new(v: &Verdict, n: usize, d: usize, exact: bool) -> Self {
        let Diagnostics { route, restarts_used, best_residual, note } = &v.diagnostics;
        SolveReport {
            command: "solve".into(),
            verdict: v.kind.name().into(),
            dimension: d,
            vertices: n,
            mode: if exact { "exact" } else { "float" }.into(),
            route: route.name().into(),
            restarts_used: *restarts_used,
            best_residual: *best_residual,
            note: note.clone(),
            certificate: v.certificate.as_ref().map(Into::into),
            witness: v.witness.as_ref().map(Into::into),
        }
    }
}

#[derive(Serialize, Deserialize, Clone, Debug, PartialEq)]
pub struct SweepReport {
    pub command: String,
    pub verdict: String,
    pub dimension: usize,
    pub per_dimension: Vec<SolveReport>,
}

#[derive(Serialize, Deserialize, Clone, Debug, PartialEq)]
pub struct CheckReport {
    pub command: String,
    pub source: String,
    #[serde(flatten)]
    pub body: ConditionsBody,
}

#[derive(Serialize, Deserialize, Clone, Debug, PartialEq)]
pub struct VerifyReport {
    pub command: String,
    pub map: MapRow,
    #[serde(flatten)]
    pub body: FrameworksBody,
}

#[derive(Serialize, Deserialize, Clone, Debug, PartialEq)]
pub struct MengerRow {
    pub passes: bool,
    pub first_failed_condition: String,
    pub witness_subset: Option<Vec<usize>>,
    pub residual: f64,
}

impl From<&EmbeddabilityReport> for MengerRow {
    fn from(r: &EmbeddabilityReport) -> Self {
        MengerRow {
            passes: r.passes,
            first_failed_condition: r.first_failed_condition.to_string(),
            witness_subset: r.witness_subset.as_ref().map(|s| s.as_slice().to_vec()),
            residual: r.residual,
        }
    }
}

#[derive(Serialize, Deserialize, Clone, Debug, PartialEq)]
pub struct EmbedReport {
    pub command: String,
    pub passed: bool,
    pub dimension: usize,
    pub menger: MengerRow,
    pub points: Option<Vec<Vec<f64>>>,
    pub pivots: Option<Vec<usize>>,
    pub pivot_cmd: Option<f64>,
    pub ill_conditioned: Option<bool>,
}

impl EmbedReport {
    pub fn new<T: Scalar>(d: usize, menger: &EmbeddabilityReport, e: Option<&Embedding<T>>) -> Self {
        EmbedReport {
            command: "embed".into(),
            passed: menger.passes && e.is_some(),
            dimension: d,
            menger: menger.into(),
            points: e.map(|e| point_rows(&e.configuration)),
            pivots: e.map(|e| e.pivots.as_slice().to_vec()),
            pivot_cmd: e.map(|e| e.pivot_cmd),
            ill_conditioned: e.map(|e| e.ill_conditioned),
        }
    }
}

#[derive(Serialize, Deserialize, Clone, Debug, PartialEq)]
pub struct CmdReport {
    pub command: String,
    pub subset: Vec<usize>,
    pub side: String,
    /// Exact in exact mode, otherwise the float printed in full.
    pub value: String,
    pub approx: f64,
    pub normalized: f64,
}
