//! Steady-state terminal voltages from a lossless Newton–Raphson power flow.
//!
//! Converters are PQ buses, interior nodes are zero-injection PQ buses and
//! the slack is held at 1.0∠0.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::config::SystemSpec;
use crate::error::{Error, Result};
use crate::network::assemble_laplacian;

pub const PF_TOLERANCE: f64 = 1e-8;
pub const PF_MAX_ITER: usize = 50;
pub const VOLTAGE_BAND: (f64, f64) = (0.5, 1.5);

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SteadyState {
    pub u_pu: Vec<f64>,
    pub delta0_rad: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
    pub max_mismatch_pu: f64,
    /// Active power delivered into the slack bus (positive = absorbed by the grid).
    pub slack_absorbed_p_pu: f64,
}

/// Where the converter voltage amplitudes come from.
#[derive(Debug, Clone, PartialEq, Default)]
pub enum VoltagePolicy {
    /// Honour `options.flat_voltage`; solve the power flow otherwise.
    #[default]
    FromSpec,
    Flat,
    Solve,
    /// Reuse amplitudes from an earlier solution (angles are recomputed if
    /// a solve is possible, but `u_pu` is pinned).
    Frozen(Vec<f64>),
}

/// Steady state for the spec's current operating point.
pub fn solve_steady_state(spec: &SystemSpec) -> Result<SteadyState> {
    if spec.options.flat_voltage {
        Ok(flat_state(spec.n_converters()))
    } else {
        newton_raphson(spec)
    }
}

pub fn steady_state_with(spec: &SystemSpec, policy: &VoltagePolicy) -> Result<SteadyState> {
    match policy {
        VoltagePolicy::FromSpec => solve_steady_state(spec),
        VoltagePolicy::Flat => Ok(flat_state(spec.n_converters())),
        VoltagePolicy::Solve => newton_raphson(spec),
        VoltagePolicy::Frozen(u) => {
            if u.len() != spec.n_converters() {
                return Err(Error::Argument(format!(
                    "frozen voltage vector has {} entries for {} converters",
                    u.len(),
                    spec.n_converters()
                )));
            }
            let mut st = flat_state(spec.n_converters());
            st.u_pu = u.clone();
            Ok(st)
        }
    }
}

fn flat_state(n: usize) -> SteadyState {
    SteadyState {
        u_pu: vec![1.0; n],
        delta0_rad: vec![0.0; n],
        converged: true,
        iterations: 0,
        max_mismatch_pu: 0.0,
        slack_absorbed_p_pu: 0.0,
    }
}

struct Flows {
    p: DVector<f64>,
    q: DVector<f64>,
}

/// Injections at every node for susceptance matrix `bbus` (imaginary part of Y).
fn injections(bbus: &DMatrix<f64>, v: &DVector<f64>, theta: &DVector<f64>) -> Flows {
    let n = v.len();
    let mut p = DVector::zeros(n);
    let mut q = DVector::zeros(n);
    for i in 0..n {
        for j in 0..n {
            let b = bbus[(i, j)];
            if b == 0.0 {
                continue;
            }
            let d = theta[i] - theta[j];
            p[i] += v[i] * v[j] * b * d.sin();
            q[i] -= v[i] * v[j] * b * d.cos();
        }
    }
    Flows { p, q }
}

fn jacobian(
    bbus: &DMatrix<f64>,
    v: &DVector<f64>,
    theta: &DVector<f64>,
    flows: &Flows,
    pq: &[usize],
) -> DMatrix<f64> {
    let m = pq.len();
    let mut jac = DMatrix::zeros(2 * m, 2 * m);
    for (r, &i) in pq.iter().enumerate() {
        for (c, &j) in pq.iter().enumerate() {
            let b = bbus[(i, j)];
            if i == j {
                jac[(r, c)] = -flows.q[i] - b * v[i] * v[i];
                jac[(r, m + c)] = flows.p[i] / v[i];
                jac[(m + r, c)] = flows.p[i];
                jac[(m + r, m + c)] = flows.q[i] / v[i] - v[i] * b;
            } else if b != 0.0 {
                let d = theta[i] - theta[j];
                jac[(r, c)] = -v[i] * v[j] * b * d.cos();
                jac[(r, m + c)] = v[i] * b * d.sin();
                jac[(m + r, c)] = -v[i] * v[j] * b * d.sin();
                jac[(m + r, m + c)] = -v[i] * b * d.cos();
            }
        }
    }
    jac
}

fn newton_raphson(spec: &SystemSpec) -> Result<SteadyState> {
    let lap = assemble_laplacian(spec);
    let bbus = -&lap.matrix;
    let n = lap.nodes.len();
    let slack = lap
        .index_of(&spec.slack_node)
        .ok_or_else(|| Error::Argument("slack node missing".into()))?;
    let pq: Vec<usize> = (0..n).filter(|&i| i != slack).collect();
    let m = pq.len();

    let mut p_spec = DVector::zeros(n);
    let mut q_spec = DVector::zeros(n);
    let conv_idx: Vec<usize> = spec
        .converters
        .iter()
        .map(|c| lap.index_of(&c.node).expect("validated converter node"))
        .collect();
    for (k, &i) in conv_idx.iter().enumerate() {
        p_spec[i] = spec.operating_point[k].p_pu;
        q_spec[i] = spec.operating_point[k].q_pu;
    }

    let mut v = DVector::from_element(n, 1.0);
    let mut theta = DVector::zeros(n);
    let mismatch = |flows: &Flows| -> DVector<f64> {
        DVector::from_iterator(
            2 * m,
            pq.iter()
                .map(|&i| flows.p[i] - p_spec[i])
                .chain(pq.iter().map(|&i| flows.q[i] - q_spec[i])),
        )
    };

    let mut iterations = 0;
    let mut flows = injections(&bbus, &v, &theta);
    let mut mis = mismatch(&flows);
    let mut worst = mis.amax();
    while worst > PF_TOLERANCE {
        if iterations == PF_MAX_ITER || !worst.is_finite() {
            return Err(Error::PfDiverged {
                iterations,
                mismatch: worst,
            });
        }
        let jac = jacobian(&bbus, &v, &theta, &flows, &pq);
        let dx = jac.lu().solve(&mis).ok_or(Error::PfDiverged {
            iterations,
            mismatch: worst,
        })?;
        for (r, &i) in pq.iter().enumerate() {
            theta[i] -= dx[r];
            v[i] -= dx[m + r];
        }
        iterations += 1;
        flows = injections(&bbus, &v, &theta);
        mis = mismatch(&flows);
        worst = mis.amax();
    }

    let u_pu: Vec<f64> = conv_idx.iter().map(|&i| v[i]).collect();
    for (k, &u) in u_pu.iter().enumerate() {
        if !(u > VOLTAGE_BAND.0 && u < VOLTAGE_BAND.1) {
            return Err(Error::PfVoltageOutOfBand {
                name: spec.converters[k].name.clone(),
                u_pu: u,
            });
        }
    }
    Ok(SteadyState {
        u_pu,
        delta0_rad: conv_idx.iter().map(|&i| theta[i]).collect(),
        converged: true,
        iterations,
        max_mismatch_pu: worst,
        slack_absorbed_p_pu: -flows.p[slack],
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::parse_system_spec;

    fn two_bus(x: f64, p: f64, q: f64) -> SystemSpec {
        let text = format!(
            r#"
nodes = ["pcc", "grid"]
slack = "grid"
[system]
rated_frequency_hz = 50.0
[[branches]]
from = "pcc"
to = "grid"
inductance_pu = {x}
[[converters]]
name = "VSC1"
node = "pcc"
pll_kp = 6.5
pll_ki = 15782.0
[[operating_point]]
name = "VSC1"
p_pu = {p}
q_pu = {q}
"#
        );
        parse_system_spec(&text).unwrap()
    }

    #[test]
    fn zero_injection_is_flat() {
        let st = solve_steady_state(&two_bus(0.3, 0.0, 0.0)).unwrap();
        assert_eq!(st.u_pu, vec![1.0]);
        assert_eq!(st.delta0_rad, vec![0.0]);
        assert!(st.iterations <= 1);
    }

    #[test]
    fn two_bus_matches_closed_form() {
        // Lossless two-bus with Q = 0: P = U sin(d)/X and U = cos(d),
        // hence sin(2d) = 2PX.
        let (x, p) = (0.3, 0.5);
        let st = solve_steady_state(&two_bus(x, p, 0.0)).unwrap();
        let delta = (2.0 * p * x).asin() / 2.0;
        let u = delta.cos();
        assert!((st.delta0_rad[0] - delta).abs() < 1e-8);
        assert!((st.u_pu[0] - u).abs() < 1e-8);
        assert!((st.delta0_rad[0] - (p * x / st.u_pu[0]).asin()).abs() < 1e-8);
        assert!(st.max_mismatch_pu <= 1e-8);
        assert!((st.slack_absorbed_p_pu - p).abs() < 1e-8);
    }

    #[test]
    fn flat_mode_skips_solve() {
        let mut spec = two_bus(0.3, 0.9, 0.4);
        spec.options.flat_voltage = true;
        let st = solve_steady_state(&spec).unwrap();
        assert_eq!(st.u_pu, vec![1.0]);
        assert_eq!(st.iterations, 0);
    }

    #[test]
    fn infeasible_transfer_diverges() {
        // Maximum transfer over X = 0.3 at unity voltage is well below 5 p.u.
        let err = solve_steady_state(&two_bus(0.3, 5.0, 0.0)).unwrap_err();
        assert!(
            matches!(err, Error::PfDiverged { .. } | Error::PfVoltageOutOfBand { .. }),
            "{err:?}"
        );
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let spec = two_bus(0.2, 0.4, 0.1);
        let lap = assemble_laplacian(&spec);
        let bbus = -&lap.matrix;
        let v = DVector::from_vec(vec![1.02, 1.0]);
        let th = DVector::from_vec(vec![0.07, 0.0]);
        let flows = injections(&bbus, &v, &th);
        let jac = jacobian(&bbus, &v, &th, &flows, &[0]);
        let h = 1e-7;
        let f = |v: &DVector<f64>, th: &DVector<f64>| {
            let fl = injections(&bbus, v, th);
            (fl.p[0], fl.q[0])
        };
        let (p0, q0) = f(&v, &th);
        let mut th2 = th.clone();
        th2[0] += h;
        let (p1, q1) = f(&v, &th2);
        let mut v2 = v.clone();
        v2[0] += h;
        let (p2, q2) = f(&v2, &th);
        assert!((jac[(0, 0)] - (p1 - p0) / h).abs() < 1e-5);
        assert!((jac[(1, 0)] - (q1 - q0) / h).abs() < 1e-5);
        assert!((jac[(0, 1)] - (p2 - p0) / h).abs() < 1e-5);
        assert!((jac[(1, 1)] - (q2 - q0) / h).abs() < 1e-5);
    }

    #[test]
    fn frozen_policy_pins_amplitudes() {
        let spec = two_bus(0.3, 0.5, 0.0);
        let st = steady_state_with(&spec, &VoltagePolicy::Frozen(vec![0.97])).unwrap();
        assert_eq!(st.u_pu, vec![0.97]);
        let err = steady_state_with(&spec, &VoltagePolicy::Frozen(vec![1.0, 1.0])).unwrap_err();
        assert!(matches!(err, Error::Argument(_)));
    }
}
