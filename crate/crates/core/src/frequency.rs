//! Converter-side and network-side frequency functions, and eigenvalue
//! branches of the network matrix tracked over a frequency grid.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::Serialize;

use crate::config::SystemSpec;
use crate::error::{Error, Result};
use crate::linalg::{align_phase, complex_eig, overlap, ComplexEigen};
use crate::network::ReducedNetwork;
use crate::powerflow::SteadyState;
use crate::report::{csv_line, fmt_num};

/// Consecutive eigenvectors less similar than this raise a branch-jump flag.
pub const BRANCH_JUMP_OVERLAP: f64 = 0.7;

const J: Complex64 = Complex64::new(0.0, 1.0);

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PllGains {
    pub kp: f64,
    pub ki: f64,
}

/// Active/reactive injections and terminal voltage amplitudes per converter.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OperatingPoint {
    pub p_pu: Vec<f64>,
    pub q_pu: Vec<f64>,
    pub u_pu: Vec<f64>,
}

impl OperatingPoint {
    pub fn new(p_pu: Vec<f64>, q_pu: Vec<f64>, u_pu: Vec<f64>) -> Result<Self> {
        let n = p_pu.len();
        if q_pu.len() != n || u_pu.len() != n {
            return Err(Error::Argument(format!(
                "operating point lengths differ: p {}, q {}, u {}",
                n,
                q_pu.len(),
                u_pu.len()
            )));
        }
        if let Some(u) = u_pu.iter().find(|u| !(**u > 0.0)) {
            return Err(Error::Argument(format!("voltage amplitude {u} is not positive")));
        }
        Ok(Self { p_pu, q_pu, u_pu })
    }

    pub fn from_spec(spec: &SystemSpec, st: &SteadyState) -> Result<Self> {
        Self::new(spec.p_vector(), spec.q_vector(), st.u_pu.clone())
    }

    pub fn n(&self) -> usize {
        self.p_pu.len()
    }

    /// Diagonal of P̃ = P_i / U_i².
    pub fn p_tilde(&self) -> DVector<f64> {
        DVector::from_iterator(
            self.n(),
            self.p_pu.iter().zip(&self.u_pu).map(|(p, u)| p / (u * u)),
        )
    }

    /// Diagonal of Q̃ = Q_i / U_i².
    pub fn q_tilde(&self) -> DVector<f64> {
        DVector::from_iterator(
            self.n(),
            self.q_pu.iter().zip(&self.u_pu).map(|(q, u)| q / (u * u)),
        )
    }

    pub fn mean_u(&self) -> f64 {
        self.u_pu.iter().sum::<f64>() / self.n() as f64
    }

    /// Number of converters in generation state (P > 0).
    pub fn positive_inertia(&self) -> usize {
        self.p_pu.iter().filter(|p| **p > 0.0).count()
    }
}

/// Converter-side frequency function Γ(jω) of a PLL with PI gains.
pub fn gamma(omega: f64, u: f64, gains: PllGains, omega0: f64) -> Result<Complex64> {
    if !(omega > 0.0) {
        return Err(Error::DegenerateFreq(omega));
    }
    let jw = J * omega;
    let g = Complex64::new(gains.kp, 0.0) + gains.ki / jw;
    Ok(omega0 * (jw / g + u) / (jw * u))
}

/// The single PLL gain pair shared by all converters.
///
/// Differing gains are an error unless `force_first` is set, in which case
/// converter 1's gains are used and a warning is returned.
pub fn resolve_pll(spec: &SystemSpec, force_first: bool) -> Result<(PllGains, Vec<String>)> {
    let first = &spec.converters[0];
    let gains = PllGains {
        kp: first.pll_kp,
        ki: first.pll_ki,
    };
    let differing: Vec<String> = spec
        .converters
        .iter()
        .filter(|c| c.pll_kp != gains.kp || c.pll_ki != gains.ki)
        .map(|c| format!("{} kp={} ki={}", c.name, c.pll_kp, c.pll_ki))
        .collect();
    if differing.is_empty() {
        return Ok((gains, Vec::new()));
    }
    if !force_first {
        return Err(Error::MixedPllGains(differing.join(", ")));
    }
    let warning = format!(
        "MIXED_PLL_GAINS: using {}'s gains kp={} ki={} for all converters (differing: {})",
        first.name,
        gains.kp,
        gains.ki,
        differing.join(", ")
    );
    Ok((gains, vec![warning]))
}

/// Everything needed to evaluate the loop at an arbitrary frequency.
#[derive(Debug, Clone)]
pub struct LoopModel {
    pub net: ReducedNetwork,
    pub op: OperatingPoint,
    pub gains: PllGains,
    /// Amplitude used in Γ (mean of the converter voltages).
    pub u_gamma: f64,
    pub omega0: f64,
    b_inv_p: DMatrix<f64>,
    b_inv_q: DMatrix<f64>,
    sym_p: DMatrix<f64>,
    sym_q: DMatrix<f64>,
}

impl LoopModel {
    pub fn new(net: ReducedNetwork, op: OperatingPoint, gains: PllGains, omega0: f64) -> Result<Self> {
        if op.n() != net.dim() {
            return Err(Error::Argument(format!(
                "operating point has {} converters, network has {}",
                op.n(),
                net.dim()
            )));
        }
        let pt = DMatrix::from_diagonal(&op.p_tilde());
        let qt = DMatrix::from_diagonal(&op.q_tilde());
        let sym = |d: &DMatrix<f64>| {
            let m = &net.b_inv_sqrt * d * &net.b_inv_sqrt;
            (&m + m.transpose()) * 0.5
        };
        Ok(Self {
            b_inv_p: &net.b_inv * &pt,
            b_inv_q: &net.b_inv * &qt,
            sym_p: sym(&pt),
            sym_q: sym(&qt),
            u_gamma: op.mean_u(),
            net,
            op,
            gains,
            omega0,
        })
    }

    pub fn n(&self) -> usize {
        self.op.n()
    }

    pub fn gamma(&self, omega: f64) -> Result<Complex64> {
        gamma(omega, self.u_gamma, self.gains, self.omega0)
    }

    /// G_net(jω) = −B⁻¹P̃ + j(ω0/ω)B⁻¹Q̃.
    pub fn gnet(&self, omega: f64) -> Result<DMatrix<Complex64>> {
        self.combine(omega, &self.b_inv_p, &self.b_inv_q)
    }

    /// Symmetric similar form −B^{-½}P̃B^{-½} + j(ω0/ω)B^{-½}Q̃B^{-½}.
    pub fn gnet_sym(&self, omega: f64) -> Result<DMatrix<Complex64>> {
        self.combine(omega, &self.sym_p, &self.sym_q)
    }

    fn combine(&self, omega: f64, p: &DMatrix<f64>, q: &DMatrix<f64>) -> Result<DMatrix<Complex64>> {
        if !(omega > 0.0) {
            return Err(Error::DegenerateFreq(omega));
        }
        let wr = self.omega0 / omega;
        Ok(DMatrix::from_fn(p.nrows(), p.ncols(), |i, j| {
            Complex64::new(-p[(i, j)], wr * q[(i, j)])
        }))
    }

    pub fn sym_eigen(&self, omega: f64) -> Result<ComplexEigen> {
        complex_eig(&self.gnet_sym(omega)?)
    }

    /// Eigenpair of G′_net(jω) whose vector best matches `reference`.
    pub fn eigen_near(&self, omega: f64, reference: &DVector<Complex64>) -> Result<TrackedEigen> {
        let eig = self.sym_eigen(omega)?;
        let (k, ov) = (0..eig.values.len())
            .map(|k| (k, overlap(reference, &eig.vector(k))))
            .fold((0, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
        let mut v = eig.vector(k);
        align_phase(&mut v, reference);
        Ok(TrackedEigen {
            value: eig.values[k],
            vector: v,
            overlap: ov,
        })
    }
}

pub fn build_gnet(omega: f64, model: &LoopModel) -> Result<DMatrix<Complex64>> {
    model.gnet(omega)
}

pub fn build_gnet_sym(omega: f64, model: &LoopModel) -> Result<DMatrix<Complex64>> {
    model.gnet_sym(omega)
}

#[derive(Debug, Clone)]
pub struct TrackedEigen {
    pub value: Complex64,
    pub vector: DVector<Complex64>,
    pub overlap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BranchJump {
    pub grid_index: usize,
    pub f_hz: f64,
    pub branch: usize,
    pub overlap: f64,
}

/// Damping and spring curves over a frequency grid.
///
/// `d_net[i][k]` is branch i at grid point k.
#[derive(Debug, Clone)]
pub struct SubsystemCurves {
    pub omega_rad_s: Vec<f64>,
    pub d_con: Vec<f64>,
    pub k_con: Vec<f64>,
    pub d_net: Vec<Vec<f64>>,
    pub k_net: Vec<Vec<f64>>,
    /// `eigvecs[k][i]`: tracked unit eigenvector of branch i at grid point k.
    pub eigvecs: Vec<Vec<DVector<Complex64>>>,
    pub jumps: Vec<BranchJump>,
}

impl SubsystemCurves {
    pub fn n(&self) -> usize {
        self.d_net.len()
    }

    pub fn f_hz(&self, k: usize) -> f64 {
        self.omega_rad_s[k] / (2.0 * PI)
    }

    /// K_con + K_net,i at every grid point.
    pub fn k_total(&self, i: usize) -> Vec<f64> {
        self.k_con.iter().zip(&self.k_net[i]).map(|(a, b)| a + b).collect()
    }
}

/// Evenly spaced grid in Hz, returned in rad/s.
pub fn frequency_grid(fmin_hz: f64, fmax_hz: f64, points: usize) -> Vec<f64> {
    let step = (fmax_hz - fmin_hz) / (points.max(2) - 1) as f64;
    (0..points)
        .map(|k| 2.0 * PI * (fmin_hz + step * k as f64))
        .collect()
}

pub fn spec_grid(spec: &SystemSpec) -> Vec<f64> {
    let o = &spec.options;
    frequency_grid(o.scan_fmin_hz, o.scan_fmax_hz, o.scan_points)
}

/// Eigenpairs at every grid point, then a sequential greedy matching pass.
pub fn trace_curves(model: &LoopModel, grid: &[f64]) -> Result<SubsystemCurves> {
    if grid.len() < 2 {
        return Err(Error::Argument("frequency grid needs at least 2 points".into()));
    }
    if grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::Argument("frequency grid must be strictly ascending".into()));
    }
    if !(grid[0] > 0.0) {
        return Err(Error::DegenerateFreq(grid[0]));
    }
    let n = model.n();
    let m = grid.len();
    let eigs: Vec<ComplexEigen> = grid.iter().map(|&w| model.sym_eigen(w)).collect::<Result<_>>()?;

    let mut d_net = vec![vec![0.0; m]; n];
    let mut k_net = vec![vec![0.0; m]; n];
    let mut eigvecs: Vec<Vec<DVector<Complex64>>> = Vec::with_capacity(m);
    let mut jumps = Vec::new();

    // First point: ascending real part, ties by imaginary part.
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        let (x, y) = (eigs[0].values[a], eigs[0].values[b]);
        x.re.total_cmp(&y.re).then(x.im.total_cmp(&y.im))
    });
    let mut prev: Vec<DVector<Complex64>> = order.iter().map(|&k| eigs[0].vector(k)).collect();
    for (i, &k) in order.iter().enumerate() {
        d_net[i][0] = eigs[0].values[k].re;
        k_net[i][0] = eigs[0].values[k].im;
    }
    eigvecs.push(prev.clone());

    for step in 1..m {
        let eig = &eigs[step];
        let assign = greedy_match(&prev, eig);
        let mut next = Vec::with_capacity(n);
        for (i, &(k, ov)) in assign.iter().enumerate() {
            if ov < BRANCH_JUMP_OVERLAP {
                jumps.push(BranchJump {
                    grid_index: step,
                    f_hz: grid[step] / (2.0 * PI),
                    branch: i,
                    overlap: ov,
                });
            }
            let mut v = eig.vector(k);
            align_phase(&mut v, &prev[i]);
            d_net[i][step] = eig.values[k].re;
            k_net[i][step] = eig.values[k].im;
            next.push(v);
        }
        eigvecs.push(next.clone());
        prev = next;
    }

    let mut d_con = Vec::with_capacity(m);
    let mut k_con = Vec::with_capacity(m);
    for &w in grid {
        let g = model.gamma(w)?;
        d_con.push(g.re);
        k_con.push(g.im);
    }
    Ok(SubsystemCurves {
        omega_rad_s: grid.to_vec(),
        d_con,
        k_con,
        d_net,
        k_net,
        eigvecs,
        jumps,
    })
}

/// For each previous branch, the new eigen-index and its overlap.
///
/// Pairs are taken greedily by descending overlap; equal overlaps go to the
/// candidate with the smaller real part.
fn greedy_match(prev: &[DVector<Complex64>], eig: &ComplexEigen) -> Vec<(usize, f64)> {
    let n = prev.len();
    let mut pairs: Vec<(usize, usize, f64)> = Vec::with_capacity(n * n);
    for (i, p) in prev.iter().enumerate() {
        for k in 0..n {
            pairs.push((i, k, overlap(p, &eig.vector(k))));
        }
    }
    pairs.sort_by(|a, b| {
        b.2.total_cmp(&a.2)
            .then(eig.values[a.1].re.total_cmp(&eig.values[b.1].re))
            .then(a.0.cmp(&b.0))
    });
    let mut out = vec![(usize::MAX, 0.0); n];
    let mut taken = vec![false; n];
    for (i, k, ov) in pairs {
        if out[i].0 == usize::MAX && !taken[k] {
            out[i] = (k, ov);
            taken[k] = true;
        }
    }
    out
}

/// Curves as CSV: `f_hz,D_con,K_con,D_net_1..n,K_net_1..n`.
pub fn curves_csv(c: &SubsystemCurves) -> String {
    let n = c.n();
    let mut header = vec!["f_hz".to_string(), "D_con".into(), "K_con".into()];
    header.extend((1..=n).map(|i| format!("D_net_{i}")));
    header.extend((1..=n).map(|i| format!("K_net_{i}")));
    let mut out = csv_line(header);
    for k in 0..c.omega_rad_s.len() {
        let mut row = vec![fmt_num(c.f_hz(k)), fmt_num(c.d_con[k]), fmt_num(c.k_con[k])];
        row.extend((0..n).map(|i| fmt_num(c.d_net[i][k])));
        row.extend((0..n).map(|i| fmt_num(c.k_net[i][k])));
        out.push_str(&csv_line(row));
    }
    out
}

/// Eigenvalues of a complex matrix (convenience for comparisons).
pub fn eigenvalues(m: &DMatrix<Complex64>) -> Result<Vec<Complex64>> {
    Ok(complex_eig(m)?.values)
}
