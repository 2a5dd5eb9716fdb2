//! Network susceptance: full Laplacian assembly, slack grounding and Kron
//! reduction onto the converter terminals.
//!
//! `B` is built with positive diagonals (a grounded weighted Laplacian), so
//! for any connected network it is symmetric positive definite.

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};

use crate::config::SystemSpec;
use crate::error::{Error, Result};
use crate::linalg::{condition_number, symmetric_eigen};

/// Interior blocks with a condition number above this are rejected.
pub const MAX_INTERIOR_CONDITION: f64 = 1e12;
/// Eigenvalues of `B` at or below this fraction of the largest one are
/// treated as zero.
pub const MIN_RELATIVE_EIGENVALUE: f64 = 1e-10;

/// Full-node susceptance Laplacian (all declared nodes, slack included).
#[derive(Debug, Clone)]
pub struct Laplacian {
    pub matrix: DMatrix<f64>,
    pub nodes: Vec<String>,
}

impl Laplacian {
    pub fn index_of(&self, node: &str) -> Option<usize> {
        self.nodes.iter().position(|n| n == node)
    }
}

/// Kron-reduced susceptance among converter nodes.
#[derive(Debug, Clone)]
pub struct ReducedNetwork {
    pub b_matrix: DMatrix<f64>,
    pub b_inv_sqrt: DMatrix<f64>,
    pub b_sqrt: DMatrix<f64>,
    pub b_inv: DMatrix<f64>,
    /// Converter names; position is the row index.
    pub converter_names: Vec<String>,
    pub eigenvalues: DVector<f64>,
}

impl ReducedNetwork {
    pub fn dim(&self) -> usize {
        self.b_matrix.nrows()
    }

    pub fn index_of(&self, converter: &str) -> Option<usize> {
        self.converter_names.iter().position(|n| n == converter)
    }

    /// Builds the derived factors for an already-reduced `B`.
    pub fn from_b_matrix(b: DMatrix<f64>, converter_names: Vec<String>) -> Result<Self> {
        let n = b.nrows();
        assert_eq!(n, b.ncols(), "B must be square");
        assert_eq!(n, converter_names.len(), "one name per row of B");
        let b = (&b + b.transpose()) * 0.5;
        let (values, vectors) = symmetric_eigen(&b);
        let largest = values.iter().copied().fold(0.0_f64, f64::max);
        let smallest = values.iter().copied().fold(f64::INFINITY, f64::min);
        if n == 0 || largest <= 0.0 || smallest <= MIN_RELATIVE_EIGENVALUE * largest {
            return Err(Error::NotPositiveDefinite {
                min_eigenvalue: if n == 0 { 0.0 } else { smallest },
            });
        }
        let spectral = |f: &dyn Fn(f64) -> f64| {
            let d = DMatrix::from_diagonal(&values.map(f));
            let m = &vectors * d * vectors.transpose();
            (&m + m.transpose()) * 0.5
        };
        Ok(Self {
            b_inv_sqrt: spectral(&|v| 1.0 / v.sqrt()),
            b_sqrt: spectral(&|v| v.sqrt()),
            b_inv: spectral(&|v| 1.0 / v),
            b_matrix: b,
            converter_names,
            eigenvalues: values,
        })
    }
}

/// Weighted graph Laplacian with branch susceptance `1 / inductance_pu`.
pub fn assemble_laplacian(spec: &SystemSpec) -> Laplacian {
    let index: HashMap<&str, usize> = spec
        .nodes
        .iter()
        .enumerate()
        .map(|(i, n)| (n.as_str(), i))
        .collect();
    let n = spec.nodes.len();
    let mut m = DMatrix::zeros(n, n);
    for br in &spec.branches {
        let (a, b) = (index[br.from.as_str()], index[br.to.as_str()]);
        let y = 1.0 / br.inductance_pu;
        m[(a, a)] += y;
        m[(b, b)] += y;
        m[(a, b)] -= y;
        m[(b, a)] -= y;
    }
    Laplacian {
        matrix: m,
        nodes: spec.nodes.clone(),
    }
}

/// Grounds `slack`, then eliminates every node not in `keep`.
///
/// `keep` lists node names in converter order; `names` are the matching
/// converter names.
pub fn kron_reduce(
    full: &Laplacian,
    slack: &str,
    keep: &[&str],
    names: Vec<String>,
) -> Result<ReducedNetwork> {
    let slack_idx = full
        .index_of(slack)
        .ok_or_else(|| Error::Argument(format!("slack node '{slack}' not in Laplacian")))?;
    let keep_idx: Vec<usize> = keep
        .iter()
        .map(|k| {
            full.index_of(k)
                .ok_or_else(|| Error::Argument(format!("node '{k}' not in Laplacian")))
        })
        .collect::<Result<_>>()?;
    let interior: Vec<usize> = (0..full.nodes.len())
        .filter(|i| *i != slack_idx && !keep_idx.contains(i))
        .collect();

    let block = |rows: &[usize], cols: &[usize]| {
        DMatrix::from_fn(rows.len(), cols.len(), |i, j| full.matrix[(rows[i], cols[j])])
    };
    let b_kk = block(&keep_idx, &keep_idx);
    let b = if interior.is_empty() {
        b_kk
    } else {
        let b_ii = block(&interior, &interior);
        let condition = condition_number(&b_ii);
        if !(condition <= MAX_INTERIOR_CONDITION) {
            return Err(Error::SingularInterior { condition });
        }
        let b_ki = block(&keep_idx, &interior);
        let b_ik = block(&interior, &keep_idx);
        let lu = b_ii.lu();
        let x = lu.solve(&b_ik).ok_or(Error::SingularInterior {
            condition: f64::INFINITY,
        })?;
        b_kk - b_ki * x
    };
    ReducedNetwork::from_b_matrix(b, names)
}

/// Laplacian assembly plus reduction onto the spec's converter nodes.
pub fn reduce_spec(spec: &SystemSpec) -> Result<ReducedNetwork> {
    let lap = assemble_laplacian(spec);
    let keep: Vec<&str> = spec.converters.iter().map(|c| c.node.as_str()).collect();
    let names = spec.converters.iter().map(|c| c.name.clone()).collect();
    kron_reduce(&lap, &spec.slack_node, &keep, names)
}

/// `B` as CSV with a header of converter names.
pub fn b_matrix_csv(net: &ReducedNetwork) -> String {
    let mut s = String::from("converter,");
    s.push_str(&net.converter_names.join(","));
    s.push('\n');
    for (i, name) in net.converter_names.iter().enumerate() {
        s.push_str(name);
        for j in 0..net.dim() {
            s.push(',');
            s.push_str(&crate::report::fmt_num(net.b_matrix[(i, j)]));
        }
        s.push('\n');
    }
    s
}
