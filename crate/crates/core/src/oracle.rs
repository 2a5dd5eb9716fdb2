//! Reduced-order state-space model of the PLL/network loop, used as an
//! independent check on the frequency-domain verdict.
//!
//! States are `[Δθ_1..n, x_1..n]` (PLL angle deviations, then PI integrator
//! states). Network angle response `Δδ = M_P·Δω/ω0 + M_Q·Δθ` with
//! `M_P = B⁻¹P̃`, `M_Q = B⁻¹Q̃`; the PLL sees `u_q = U·(Δδ − Δθ + d)` where
//! `d` is a common angle step on the slack channel.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::Serialize;

use crate::config::SystemSpec;
use crate::error::{Error, Result};
use crate::frequency::OperatingPoint;
use crate::linalg::{condition_number, real_eigenvalues};
use crate::network::ReducedNetwork;
use crate::report::{csv_line, csv_nums, fmt_num};
use crate::stability::{StabilityReport, Verdict, MARGINAL_BAND};

pub const MAX_LOOP_CONDITION: f64 = 1e12;
/// Modes slower than this are not treated as oscillatory.
pub const MIN_OSC_HZ: f64 = 0.5;

/// Linear model `ż = A·z + b_d·d` plus the maps needed to report outputs.
#[derive(Debug, Clone)]
pub struct StateSpace {
    pub a_matrix: DMatrix<f64>,
    pub labels: Vec<String>,
    pub n: usize,
    /// Disturbance input column.
    pub b_d: DVector<f64>,
    /// `Δω = c_w·z + d_w·d`.
    c_w: DMatrix<f64>,
    d_w: DVector<f64>,
    /// `Δδ = c_d·z + d_d·d`.
    c_d: DMatrix<f64>,
    d_d: DVector<f64>,
    p_tilde: DVector<f64>,
}

/// Per-converter PLL gains for the oracle (it does not assume they agree).
pub fn spec_gains(spec: &SystemSpec) -> (Vec<f64>, Vec<f64>) {
    (
        spec.converters.iter().map(|c| c.pll_kp).collect(),
        spec.converters.iter().map(|c| c.pll_ki).collect(),
    )
}

pub fn assemble_state_space(
    net: &ReducedNetwork,
    op: &OperatingPoint,
    kp: &[f64],
    ki: &[f64],
    omega0: f64,
) -> Result<StateSpace> {
    let n = op.n();
    if net.dim() != n || kp.len() != n || ki.len() != n {
        return Err(Error::Argument("state-space inputs have mismatched sizes".into()));
    }
    let m_p = &net.b_inv * DMatrix::from_diagonal(&op.p_tilde());
    let m_q = &net.b_inv * DMatrix::from_diagonal(&op.q_tilde());
    let u = DMatrix::from_diagonal(&DVector::from_column_slice(&op.u_pu));
    let k_p = DMatrix::from_diagonal(&DVector::from_column_slice(kp));
    let k_i = DMatrix::from_diagonal(&DVector::from_column_slice(ki));
    let id = DMatrix::<f64>::identity(n, n);
    let ones = DVector::from_element(n, 1.0);

    let kpu = &k_p * &u;
    let loop_m = &id - &kpu * &m_p / omega0;
    let condition = condition_number(&loop_m);
    if !(condition <= MAX_LOOP_CONDITION) {
        return Err(Error::AlgebraicLoopSingular { condition });
    }
    let l_inv = loop_m
        .try_inverse()
        .ok_or(Error::AlgebraicLoopSingular { condition: f64::INFINITY })?;

    let mq_i = &m_q - &id;
    // Δω = W_θ·Δθ + W_x·x + w_d·d
    let w_theta = &l_inv * &kpu * &mq_i;
    let w_x = l_inv.clone();
    let w_d = &l_inv * &kpu * &ones;
    // u_q = U·(M_P·Δω/ω0 + (M_Q − I)·Δθ + d)
    let mp0 = &m_p / omega0;
    let uq_theta = &u * (&mp0 * &w_theta + &mq_i);
    let uq_x = &u * &mp0 * &w_x;
    let uq_d = &u * (&mp0 * &w_d + &ones);

    let mut a = DMatrix::zeros(2 * n, 2 * n);
    a.view_mut((0, 0), (n, n)).copy_from(&w_theta);
    a.view_mut((0, n), (n, n)).copy_from(&w_x);
    a.view_mut((n, 0), (n, n)).copy_from(&(&k_i * &uq_theta));
    a.view_mut((n, n), (n, n)).copy_from(&(&k_i * &uq_x));
    let mut b_d = DVector::zeros(2 * n);
    b_d.rows_mut(0, n).copy_from(&w_d);
    b_d.rows_mut(n, n).copy_from(&(&k_i * &uq_d));
    if a.iter().any(|x| !x.is_finite()) {
        return Err(Error::AlgebraicLoopSingular { condition });
    }

    let mut c_w = DMatrix::zeros(n, 2 * n);
    c_w.view_mut((0, 0), (n, n)).copy_from(&w_theta);
    c_w.view_mut((0, n), (n, n)).copy_from(&w_x);
    let mut c_d = &mp0 * &c_w;
    let mut theta_part = c_d.view_mut((0, 0), (n, n));
    theta_part += &m_q;
    let d_d = &mp0 * &w_d;

    let labels = (1..=n)
        .map(|i| format!("theta_{i}"))
        .chain((1..=n).map(|i| format!("x_{i}")))
        .collect();
    Ok(StateSpace {
        a_matrix: a,
        labels,
        n,
        b_d,
        c_w,
        d_w: w_d,
        c_d,
        d_d,
        p_tilde: op.p_tilde(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DominantMode {
    pub sigma: f64,
    pub f_hz: f64,
    pub damping_ratio: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ModeSet {
    #[serde(serialize_with = "ser_complex")]
    pub eigenvalues: Vec<Complex64>,
    /// `None` when no oscillatory mode exists (NO_OSC_MODE).
    pub dominant: Option<DominantMode>,
}

fn ser_complex<S: serde::Serializer>(v: &[Complex64], s: S) -> std::result::Result<S::Ok, S::Error> {
    use serde::ser::SerializeSeq;
    let mut seq = s.serialize_seq(Some(v.len()))?;
    for z in v {
        seq.serialize_element(&[z.re, z.im])?;
    }
    seq.end()
}

/// Eigenvalues of A sorted by descending real part, then ascending imaginary.
pub fn modes(ss: &StateSpace) -> Result<ModeSet> {
    let mut ev = real_eigenvalues(&ss.a_matrix)?;
    ev.sort_by(|a, b| b.re.total_cmp(&a.re).then(a.im.total_cmp(&b.im)));
    let dominant = ev
        .iter()
        .filter(|z| z.im.abs() > 2.0 * PI * MIN_OSC_HZ)
        .max_by(|a, b| a.re.total_cmp(&b.re))
        .map(|z| DominantMode {
            sigma: z.re,
            f_hz: z.im.abs() / (2.0 * PI),
            damping_ratio: -z.re / z.norm(),
        });
    Ok(ModeSet {
        eigenvalues: ev,
        dominant,
    })
}

/// `re,im,f_hz,damping_ratio`
pub fn modes_csv(m: &ModeSet) -> String {
    let mut out = csv_line(["re", "im", "f_hz", "damping_ratio"]);
    for z in &m.eigenvalues {
        let zeta = if z.norm() > 0.0 { -z.re / z.norm() } else { 0.0 };
        out.push_str(&csv_nums([z.re, z.im, z.im / (2.0 * PI), zeta]));
    }
    out
}

/// Rectangular angle pulse on the slack channel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Disturbance {
    pub amplitude_rad: f64,
    pub start_s: f64,
    pub width_s: f64,
}

impl Default for Disturbance {
    fn default() -> Self {
        Self {
            amplitude_rad: 0.1,
            start_s: 2.0,
            width_s: 0.02,
        }
    }
}

impl Disturbance {
    pub fn none() -> Self {
        Self {
            amplitude_rad: 0.0,
            ..Self::default()
        }
    }

    pub fn at(&self, t: f64) -> f64 {
        if t >= self.start_s && t < self.start_s + self.width_s {
            self.amplitude_rad
        } else {
            0.0
        }
    }
}

#[derive(Debug, Clone)]
pub struct TimeSeries {
    pub t_s: Vec<f64>,
    /// `theta[k][i]`
    pub theta: Vec<Vec<f64>>,
    pub omega: Vec<Vec<f64>>,
    pub dp: Vec<Vec<f64>>,
}

/// Trapezoidal integration from rest.
pub fn simulate(ss: &StateSpace, dist: &Disturbance, dt: f64, duration: f64) -> Result<TimeSeries> {
    if !(dt > 0.0) || !(duration > dt) {
        return Err(Error::Argument(format!(
            "need dt > 0 and duration > dt (dt={dt}, duration={duration})"
        )));
    }
    let dim = 2 * ss.n;
    let id = DMatrix::<f64>::identity(dim, dim);
    let lhs = (&id - &ss.a_matrix * (0.5 * dt)).lu();
    let rhs = &id + &ss.a_matrix * (0.5 * dt);
    let steps = (duration / dt).round() as usize;

    let mut ts = TimeSeries {
        t_s: Vec::with_capacity(steps + 1),
        theta: Vec::with_capacity(steps + 1),
        omega: Vec::with_capacity(steps + 1),
        dp: Vec::with_capacity(steps + 1),
    };
    let mut z = DVector::zeros(dim);
    let mut d_prev = dist.at(0.0);
    for k in 0..=steps {
        let t = k as f64 * dt;
        let d = dist.at(t);
        if k > 0 {
            let forcing = &ss.b_d * (0.5 * dt * (d_prev + d));
            z = lhs
                .solve(&(&rhs * &z + forcing))
                .ok_or(Error::AlgebraicLoopSingular { condition: f64::INFINITY })?;
        }
        d_prev = d;
        let w = &ss.c_w * &z + &ss.d_w * d;
        let delta = &ss.c_d * &z + &ss.d_d * d;
        ts.t_s.push(t);
        ts.theta.push(z.rows(0, ss.n).iter().copied().collect());
        ts.omega.push(w.iter().copied().collect());
        ts.dp
            .push(delta.iter().zip(ss.p_tilde.iter()).map(|(x, p)| p * x).collect());
    }
    Ok(ts)
}

/// `t_s,theta_1..n,omega_1..n,dp_1..n`
pub fn timeseries_csv(ts: &TimeSeries) -> String {
    let n = ts.theta.first().map_or(0, |r| r.len());
    let mut header = vec!["t_s".to_string()];
    for name in ["theta", "omega", "dp"] {
        header.extend((1..=n).map(|i| format!("{name}_{i}")));
    }
    let mut out = csv_line(header);
    for k in 0..ts.t_s.len() {
        let mut row = vec![fmt_num(ts.t_s[k])];
        for series in [&ts.theta, &ts.omega, &ts.dp] {
            row.extend(series[k].iter().map(|x| fmt_num(*x)));
        }
        out.push_str(&csv_line(row));
    }
    out
}

/// Dominant frequency of `x` (sampled every `dt`) from a zero-padded FFT.
pub fn fft_peak_hz(x: &[f64], dt: f64) -> Option<f64> {
    if x.len() < 4 {
        return None;
    }
    let mean = x.iter().sum::<f64>() / x.len() as f64;
    let len = (x.len() * 8).next_power_of_two();
    let mut buf: Vec<Complex64> = x
        .iter()
        .enumerate()
        .map(|(k, v)| {
            let w = 0.5 - 0.5 * (2.0 * PI * k as f64 / (x.len() - 1) as f64).cos();
            Complex64::new((v - mean) * w, 0.0)
        })
        .collect();
    buf.resize(len, Complex64::new(0.0, 0.0));
    FftPlanner::new().plan_fft_forward(len).process(&mut buf);
    let (k, mag) = buf[1..len / 2]
        .iter()
        .enumerate()
        .map(|(k, z)| (k + 1, z.norm()))
        .max_by(|a, b| a.1.total_cmp(&b.1))?;
    (mag > 0.0).then(|| k as f64 / (len as f64 * dt))
}

/// Growth rate (1/s) from a log-linear fit to the local peaks of |x|.
pub fn envelope_growth_rate(t: &[f64], x: &[f64]) -> Option<f64> {
    let peaks: Vec<(f64, f64)> = (1..x.len().saturating_sub(1))
        .filter(|&k| x[k].abs() > 0.0 && x[k].abs() >= x[k - 1].abs() && x[k].abs() > x[k + 1].abs())
        .map(|k| (t[k], x[k].abs().ln()))
        .collect();
    if peaks.len() < 3 {
        return None;
    }
    let n = peaks.len() as f64;
    let mt = peaks.iter().map(|p| p.0).sum::<f64>() / n;
    let my = peaks.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = peaks.iter().map(|p| (p.0 - mt) * (p.1 - my)).sum();
    let sxx: f64 = peaks.iter().map(|p| (p.0 - mt).powi(2)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum AgreementStatus {
    Agree,
    Disagree,
    Skipped,
}

#[derive(Debug, Clone, Serialize)]
pub struct Agreement {
    pub status: AgreementStatus,
    pub reason: Option<String>,
    pub verdict: Verdict,
    pub oracle_sigma: Option<f64>,
    pub f_c1_hz: Option<f64>,
    pub f_dominant_hz: Option<f64>,
    pub freq_deviation_hz: Option<f64>,
}

/// Compares the net-damping verdict with the sign of the dominant mode.
pub fn crosscheck(report: &StabilityReport, modes: &ModeSet) -> Agreement {
    let f_c1 = report.f_c1_hz();
    let dom = modes.dominant;
    let mut out = Agreement {
        status: AgreementStatus::Skipped,
        reason: None,
        verdict: report.verdict,
        oracle_sigma: dom.map(|d| d.sigma),
        f_c1_hz: f_c1,
        f_dominant_hz: dom.map(|d| d.f_hz),
        freq_deviation_hz: f_c1.zip(dom).map(|(f, d)| (f - d.f_hz).abs()),
    };
    let Some(dom) = dom else {
        out.reason = Some("NO_OSC_MODE".into());
        return out;
    };
    match report.verdict {
        Verdict::NoCrossing => out.reason = Some("NO_CROSSING".into()),
        _ if report.margin().is_none_or(|m| m.abs() <= MARGINAL_BAND) => {
            out.reason = Some("MARGINAL".into())
        }
        v => {
            let agree = (v == Verdict::Stable) == (dom.sigma < 0.0);
            out.status = if agree {
                AgreementStatus::Agree
            } else {
                AgreementStatus::Disagree
            };
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    const KP: f64 = 6.5;
    const KI: f64 = 15782.0;
    const W0: f64 = 100.0 * PI;

    fn scalar(b: f64, p: f64, q: f64) -> StateSpace {
        let net = ReducedNetwork::from_b_matrix(DMatrix::from_element(1, 1, b), vec!["C1".into()]).unwrap();
        let op = OperatingPoint::new(vec![p], vec![q], vec![1.0]).unwrap();
        assemble_state_space(&net, &op, &[KP], &[KI], W0).unwrap()
    }

    #[test]
    fn zero_power_modes_are_pll_roots() {
        let ss = scalar(3.0, 0.0, 0.0);
        let m = modes(&ss).unwrap();
        let disc = Complex64::new(KP * KP - 4.0 * KI, 0.0).sqrt();
        let root = (Complex64::new(-KP, 0.0) + disc) / 2.0;
        let mut ev = m.eigenvalues.clone();
        ev.sort_by(|a, b| a.im.total_cmp(&b.im));
        assert!((ev[1] - root).norm() < 1e-9, "{ev:?}");
        assert!((ev[0] - root.conj()).norm() < 1e-9);
        let d = m.dominant.unwrap();
        assert!((d.sigma + 3.25).abs() < 1e-9);
        assert!((d.f_hz - 19.99).abs() < 0.01);
    }

    #[test]
    fn zero_matrix_has_no_oscillatory_mode() {
        let ss = StateSpace {
            a_matrix: DMatrix::zeros(2, 2),
            labels: vec!["theta_1".into(), "x_1".into()],
            n: 1,
            b_d: DVector::zeros(2),
            c_w: DMatrix::zeros(1, 2),
            d_w: DVector::zeros(1),
            c_d: DMatrix::zeros(1, 2),
            d_d: DVector::zeros(1),
            p_tilde: DVector::zeros(1),
        };
        let m = modes(&ss).unwrap();
        assert!(m.dominant.is_none());
        assert!(m.eigenvalues.iter().all(|z| z.norm() == 0.0));
    }

    #[test]
    fn zero_disturbance_stays_at_rest() {
        let ss = scalar(3.0, 0.4, 0.1);
        let ts = simulate(&ss, &Disturbance::none(), 1e-3, 0.5).unwrap();
        assert!(ts.theta.iter().flatten().all(|x| *x == 0.0));
        assert!(ts.dp.iter().flatten().all(|x| *x == 0.0));
    }

    #[test]
    fn scalar_decay_matches_mode() {
        let ss = scalar(3.0, 0.0, 0.0);
        let dist = Disturbance {
            start_s: 0.1,
            ..Disturbance::default()
        };
        let ts = simulate(&ss, &dist, 1e-4, 1.5).unwrap();
        let from = ts.t_s.len() / 3;
        let x: Vec<f64> = ts.omega[from..].iter().map(|r| r[0]).collect();
        let rate = envelope_growth_rate(&ts.t_s[from..], &x).unwrap();
        assert!((rate + 3.25).abs() < 0.05 * 3.25, "{rate}");
        let f = fft_peak_hz(&x, 1e-4).unwrap();
        assert!((f - 19.99).abs() < 0.5, "{f}");
    }

    #[test]
    fn csv_headers() {
        let ss = scalar(3.0, 0.2, 0.0);
        let ts = simulate(&ss, &Disturbance::default(), 1e-3, 0.01).unwrap();
        assert!(timeseries_csv(&ts).starts_with("t_s,theta_1,omega_1,dp_1\n0,0,0,0\n"));
        assert!(modes_csv(&modes(&ss).unwrap()).starts_with("re,im,f_hz,damping_ratio\n"));
    }

    #[test]
    fn bad_step_is_rejected() {
        let ss = scalar(3.0, 0.2, 0.0);
        assert!(simulate(&ss, &Disturbance::default(), 0.0, 1.0).is_err());
        assert!(simulate(&ss, &Disturbance::default(), 0.1, 0.05).is_err());
    }
}
