//! Per-converter weights of the critical eigenvalue, first-order
//! sensitivities, and before/after comparison of power adjustments.

use nalgebra::DVector;
use num_complex::Complex64;
use serde::Serialize;

use crate::config::SystemSpec;
use crate::error::{Error, Result};
use crate::frequency::LoopModel;
use crate::linalg::overlap;
use crate::pipeline::{analyze, AnalyzeOptions};
use crate::powerflow::{steady_state_with, VoltagePolicy};
use crate::report::{csv_line, fmt_num};
use crate::stability::Verdict;

/// Largest accepted distance between the tracked and recomputed eigenvalue.
pub const EIGPAIR_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Serialize)]
pub struct ModalWeights {
    pub omega_c1_rad_s: f64,
    pub omega_r1: f64,
    pub lambda_re: f64,
    pub lambda_im: f64,
    /// Unit eigenvector of the symmetric network matrix.
    #[serde(skip)]
    pub phi: DVector<Complex64>,
    /// `B^{-½}·phi`.
    #[serde(skip)]
    pub phi_b1: DVector<Complex64>,
    pub eta: Vec<f64>,
    /// Literal complex-square weights `[re, im]`, with `phi` scaled so that
    /// `phiᵀphi = 1`. Diagnostic only.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eta_complex: Option<Vec<[f64; 2]>>,
}

impl ModalWeights {
    pub fn lambda(&self) -> Complex64 {
        Complex64::new(self.lambda_re, self.lambda_im)
    }
}

/// Weights of the eigenpair at `omega_c1` that continues the tracked branch.
pub fn modal_weights(
    model: &LoopModel,
    omega_c1: f64,
    tracked_lambda: Complex64,
    tracked_vec: &DVector<Complex64>,
    with_complex: bool,
) -> Result<ModalWeights> {
    let eig = model.sym_eigen(omega_c1)?;
    let n = eig.values.len();
    let by_overlap = (0..n)
        .max_by(|&a, &b| {
            overlap(tracked_vec, &eig.vector(a)).total_cmp(&overlap(tracked_vec, &eig.vector(b)))
        })
        .expect("at least one converter");
    let by_value = (0..n)
        .min_by(|&a, &b| {
            (eig.values[a] - tracked_lambda)
                .norm()
                .total_cmp(&(eig.values[b] - tracked_lambda).norm())
        })
        .expect("at least one converter");
    let k = if (eig.values[by_overlap] - tracked_lambda).norm() <= EIGPAIR_TOL {
        by_overlap
    } else {
        by_value
    };
    let distance = (eig.values[k] - tracked_lambda).norm();
    if distance > EIGPAIR_TOL {
        return Err(Error::EigpairMismatch {
            distance,
            tolerance: EIGPAIR_TOL,
        });
    }

    let phi = eig.vector(k);
    let b_inv_sqrt = model.net.b_inv_sqrt.map(|x| Complex64::new(x, 0.0));
    let phi_b1 = &b_inv_sqrt * &phi;
    let u = &model.op.u_pu;
    let eta = (0..n).map(|i| phi_b1[i].norm_sqr() / (u[i] * u[i])).collect();
    let eta_complex = with_complex.then(|| {
        let s = phi.transpose() * &phi;
        let scaled = &phi_b1 / s[(0, 0)].sqrt();
        (0..n)
            .map(|i| {
                let z = scaled[i] * scaled[i] / (u[i] * u[i]);
                [z.re, z.im]
            })
            .collect()
    });
    Ok(ModalWeights {
        omega_c1_rad_s: omega_c1,
        omega_r1: model.omega0 / omega_c1,
        lambda_re: eig.values[k].re,
        lambda_im: eig.values[k].im,
        phi,
        phi_b1,
        eta,
        eta_complex,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct Sensitivity {
    pub converter: String,
    pub eta: f64,
    pub dd_dp: f64,
    pub dd_dq: f64,
    pub dominant: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct Sensitivities {
    pub rows: Vec<Sensitivity>,
    /// 0-based index of the converter with the largest |eta|.
    pub dominant: usize,
}

impl Sensitivities {
    pub fn dominant_name(&self) -> &str {
        &self.rows[self.dominant].converter
    }
}

/// dD/dP_i = −eta_i and dD/dQ_i = 0; dominance by |eta|, lowest index on ties.
pub fn sensitivities(w: &ModalWeights, names: &[String]) -> Sensitivities {
    let mut dominant = 0;
    for (i, e) in w.eta.iter().enumerate() {
        if e.abs() > w.eta[dominant].abs() {
            dominant = i;
        }
    }
    let rows = w
        .eta
        .iter()
        .zip(names)
        .enumerate()
        .map(|(i, (&eta, name))| Sensitivity {
            converter: name.clone(),
            eta,
            dd_dp: -eta,
            dd_dq: 0.0,
            dominant: i == dominant,
        })
        .collect();
    Sensitivities { rows, dominant }
}

/// `converter,eta,dD_dP,dD_dQ,dominant_flag`
pub fn sensitivity_csv(s: &Sensitivities) -> String {
    let mut out = csv_line(["converter", "eta", "dD_dP", "dD_dQ", "dominant_flag"]);
    for r in &s.rows {
        out.push_str(&csv_line([
            r.converter.clone(),
            fmt_num(r.eta),
            fmt_num(r.dd_dp),
            fmt_num(r.dd_dq),
            (r.dominant as u8).to_string(),
        ]));
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum PowerParam {
    P,
    Q,
}

#[derive(Debug, Clone, Serialize)]
pub struct FdCheck {
    pub converter: String,
    pub param: PowerParam,
    pub delta: f64,
    pub predicted: f64,
    pub measured: f64,
    pub abs_err: f64,
    /// Relative to |predicted|; equals `abs_err` when the prediction is zero.
    pub rel_err: f64,
    pub f_c1_before_hz: f64,
    pub f_c1_after_hz: f64,
}

/// Finite-difference slope of D_net1 with voltages frozen at the base point,
/// re-solving the crossing after the perturbation.
pub fn finite_difference_check(
    spec: &SystemSpec,
    opts: &AnalyzeOptions,
    i: usize,
    param: PowerParam,
    delta: f64,
) -> Result<FdCheck> {
    if i >= spec.n_converters() {
        return Err(Error::Argument(format!("converter index {i} out of range")));
    }
    let steady = steady_state_with(spec, &opts.voltage)?;
    let frozen = AnalyzeOptions {
        voltage: VoltagePolicy::Frozen(steady.u_pu),
        ..opts.clone()
    };
    let base = analyze(spec, &frozen)?;
    let (c0, w0) = match (&base.report.critical, &base.weights) {
        (Some(c), Some(w)) => (c, w),
        _ => return Err(Error::Argument("base point has no spring crossing".into())),
    };
    let mut sp = spec.operating_point[i];
    match param {
        PowerParam::P => sp.p_pu += delta,
        PowerParam::Q => sp.q_pu += delta,
    }
    let after = analyze(&spec.with_setpoint(i, sp), &frozen)?;
    let c1 = after
        .report
        .critical
        .as_ref()
        .ok_or_else(|| Error::Argument("perturbed point has no spring crossing".into()))?;
    let predicted = match param {
        PowerParam::P => -w0.eta[i],
        PowerParam::Q => 0.0,
    };
    let measured = (c1.d_net1 - c0.d_net1) / delta;
    let abs_err = (measured - predicted).abs();
    Ok(FdCheck {
        converter: spec.converters[i].name.clone(),
        param,
        delta,
        predicted,
        measured,
        abs_err,
        rel_err: if predicted != 0.0 {
            abs_err / predicted.abs()
        } else {
            abs_err
        },
        f_c1_before_hz: c0.f_c1_hz,
        f_c1_after_hz: c1.f_c1_hz,
    })
}

/// Voltage amplitudes used for the adjusted operating point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum AdjustVoltage {
    /// Reuse the pre-adjustment amplitudes.
    #[default]
    Freeze,
    /// Apply the analysis voltage policy to both points independently.
    Resolve,
}

#[derive(Debug, Clone, Serialize)]
pub struct AdjustmentResult {
    pub d_net1_before: Option<f64>,
    pub d_net1_after: Option<f64>,
    pub omega_c1_before: Option<f64>,
    pub omega_c1_after: Option<f64>,
    pub f_c1_before_hz: Option<f64>,
    pub f_c1_after_hz: Option<f64>,
    pub verdict_before: Verdict,
    pub verdict_after: Verdict,
    pub positive_inertia_before: usize,
    pub positive_inertia_after: usize,
    pub per_converter_delta_p: Vec<f64>,
    pub improvement: bool,
}

/// Runs the full analysis on both points, each at its own critical crossing.
pub fn adjustment_compare(
    before: &SystemSpec,
    after: &SystemSpec,
    opts: &AnalyzeOptions,
    voltage: AdjustVoltage,
) -> Result<AdjustmentResult> {
    if before.n_converters() != after.n_converters() {
        return Err(Error::Argument("adjusted spec has a different converter set".into()));
    }
    if let Some(i) = (0..before.n_converters())
        .find(|&i| before.operating_point[i].q_pu != after.operating_point[i].q_pu)
    {
        return Err(Error::Argument(format!(
            "adjustment may change active power only; Q of '{}' differs",
            before.converters[i].name
        )));
    }
    let steady = steady_state_with(before, &opts.voltage)?;
    let opts_before = AnalyzeOptions {
        voltage: VoltagePolicy::Frozen(steady.u_pu.clone()),
        ..opts.clone()
    };
    let opts_after = match voltage {
        AdjustVoltage::Freeze => opts_before.clone(),
        AdjustVoltage::Resolve => opts.clone(),
    };
    let a = analyze(before, &opts_before)?;
    let b = analyze(after, &opts_after)?;
    let d0 = a.report.d_net1();
    let d1 = b.report.d_net1();
    Ok(AdjustmentResult {
        d_net1_before: d0,
        d_net1_after: d1,
        omega_c1_before: a.report.critical.as_ref().map(|c| c.omega_c1_rad_s),
        omega_c1_after: b.report.critical.as_ref().map(|c| c.omega_c1_rad_s),
        f_c1_before_hz: a.report.f_c1_hz(),
        f_c1_after_hz: b.report.f_c1_hz(),
        verdict_before: a.report.verdict,
        verdict_after: b.report.verdict,
        positive_inertia_before: a.model.op.positive_inertia(),
        positive_inertia_after: b.model.op.positive_inertia(),
        per_converter_delta_p: before
            .operating_point
            .iter()
            .zip(&after.operating_point)
            .map(|(x, y)| y.p_pu - x.p_pu)
            .collect(),
        improvement: matches!((d0, d1), (Some(x), Some(y)) if y > x),
    })
}
