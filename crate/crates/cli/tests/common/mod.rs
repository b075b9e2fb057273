#![allow(dead_code)]

use std::path::PathBuf;
use std::process::Command;

use serde_json::Value;

pub struct Run {
    pub code: i32,
    pub stdout: String,
    pub stderr: String,
}

impl Run {
    pub fn json(&self) -> Value {
        serde_json::from_str(&self.stdout).unwrap_or_else(|e| panic!("bad json ({e}): {}", self.stdout))
    }
}

pub fn affeq(args: &[&str]) -> Run {
    let out = Command::new(env!("CARGO_BIN_EXE_affeq")).args(args).output().expect("binary runs");
    Run {
        code: out.status.code().unwrap_or(-1),
        stdout: String::from_utf8_lossy(&out.stdout).into_owned(),
        stderr: String::from_utf8_lossy(&out.stderr).into_owned(),
    }
}

/// Scratch directory holding named input files.
pub struct Files {
    dir: tempfile::TempDir,
}

impl Files {
    pub fn new() -> Self {
        Files { dir: tempfile::tempdir().expect("temp dir") }
    }

    pub fn write(&self, name: &str, text: &str) -> String {
        let path: PathBuf = self.dir.path().join(name);
        std::fs::write(&path, text).expect("write fixture");
        path.display().to_string()
    }
}

/// Instance text from `(i, j, λ, λ')` with lengths written verbatim.
pub fn instance(d: usize, n: usize, edges: &[(usize, usize, &str, &str)]) -> String {
    let mut s = format!("dimension = {d}\nvertices = {n}\nedges = [\n");
    for (i, j, l, lp) in edges {
        s.push_str(&format!("  {{ i = {i}, j = {j}, lambda = {l}, lambda_prime = {lp} }},\n"));
    }
    s.push_str("]\n");
    s
}

pub const K3_SIMILAR: &[(usize, usize, &str, &str)] = &[(0, 1, "3", "6"), (1, 2, "4", "8"), (0, 2, "5", "10")];
pub const K3_ILLEGAL: &[(usize, usize, &str, &str)] = &[(0, 1, "3", "1"), (1, 2, "4", "2"), (0, 2, "5", "4")];
/// Unit square against (0,0),(1,0),(0,1),(2,2), all six pairs, lengths as
/// exact square roots written in decimal where irrational.
pub fn square_vs_kite() -> String {
    let left = [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 1.0]];
    let right = [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [2.0, 2.0]];
    let dist = |p: &[[f64; 2]; 4], i: usize, j: usize| ((p[i][0] - p[j][0]).powi(2) + (p[i][1] - p[j][1]).powi(2)).sqrt();
    let mut s = "dimension = 2\nvertices = 4\nedges = [\n".to_string();
    for i in 0..4 {
        for j in i + 1..4 {
            s.push_str(&format!(
                "  {{ i = {i}, j = {j}, lambda = {:?}, lambda_prime = {:?} }},\n",
                dist(&left, i, j),
                dist(&right, i, j)
            ));
        }
    }
    s.push_str("]\n");
    s
}
