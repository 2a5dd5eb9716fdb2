//! Spring crossings, net damping per subsystem, and the verdict.

use std::f64::consts::PI;

use nalgebra::DVector;
use num_complex::Complex64;
use serde::Serialize;

use crate::error::Result;
use crate::frequency::{LoopModel, SubsystemCurves};
use crate::powerflow::SteadyState;

/// Margins within ±this band are reported as marginal.
pub const MARGINAL_BAND: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Verdict {
    Stable,
    Unstable,
    Marginal,
    NoCrossing,
}

impl Verdict {
    pub fn from_margin(margin: f64) -> Self {
        if margin > MARGINAL_BAND {
            Verdict::Stable
        } else if margin < -MARGINAL_BAND {
            Verdict::Unstable
        } else {
            Verdict::Marginal
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Verdict::Stable => "Stable",
            Verdict::Unstable => "Unstable",
            Verdict::Marginal => "Marginal",
            Verdict::NoCrossing => "NoCrossing",
        }
    }

    /// CLI exit status for this verdict.
    pub fn exit_code(&self) -> i32 {
        match self {
            Verdict::Stable => 0,
            Verdict::Unstable => 2,
            Verdict::Marginal | Verdict::NoCrossing => 3,
        }
    }
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Crossing {
    pub omega_rad_s: f64,
    pub f_hz: f64,
    pub d_con: f64,
    pub k_con: f64,
    pub d_net: f64,
    pub k_net: f64,
    pub net_damping: f64,
    #[serde(skip)]
    pub eigvec: DVector<Complex64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SubsystemCrossings {
    /// 1-based branch index.
    pub index: usize,
    pub crossings: Vec<Crossing>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Critical {
    /// 1-based branch index.
    pub subsystem: usize,
    pub omega_c1_rad_s: f64,
    pub f_c1_hz: f64,
    pub d_net1: f64,
    pub k_net1: f64,
    pub d_con_at_c1: f64,
    pub margin: f64,
    #[serde(skip)]
    pub eigvec: DVector<Complex64>,
}

impl Critical {
    pub fn lambda(&self) -> Complex64 {
        Complex64::new(self.d_net1, self.k_net1)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct StabilityReport {
    pub verdict: Verdict,
    pub critical: Option<Critical>,
    pub per_subsystem: Vec<SubsystemCrossings>,
    pub steady_state: SteadyState,
    pub notes: Vec<String>,
}

impl StabilityReport {
    pub fn d_net1(&self) -> Option<f64> {
        self.critical.as_ref().map(|c| c.d_net1)
    }

    pub fn f_c1_hz(&self) -> Option<f64> {
        self.critical.as_ref().map(|c| c.f_c1_hz)
    }

    pub fn margin(&self) -> Option<f64> {
        self.critical.as_ref().map(|c| c.margin)
    }
}

/// Roots of K_con + K_net,i in the scan band, ascending.
///
/// Each sign change on the grid is refined by bisection, re-evaluating Γ and
/// the eigenpair whose vector continues the tracked branch.
pub fn find_crossings(
    model: &LoopModel,
    curves: &SubsystemCurves,
    i: usize,
    root_tol_hz: f64,
) -> Result<Vec<Crossing>> {
    let k_total = curves.k_total(i);
    let mut out = Vec::new();
    for k in 0..k_total.len() - 1 {
        if (k_total[k] < 0.0) == (k_total[k + 1] < 0.0) {
            continue;
        }
        let left_negative = k_total[k] < 0.0;
        let mut reference = curves.eigvecs[k][i].clone();
        let (mut fa, mut fb) = (curves.f_hz(k), curves.f_hz(k + 1));
        while fb - fa > root_tol_hz {
            let fm = 0.5 * (fa + fb);
            let w = 2.0 * PI * fm;
            let te = model.eigen_near(w, &reference)?;
            let val = model.gamma(w)?.im + te.value.im;
            if (val < 0.0) == left_negative {
                fa = fm;
            } else {
                fb = fm;
            }
            reference = te.vector;
        }
        let f = 0.5 * (fa + fb);
        let w = 2.0 * PI * f;
        let te = model.eigen_near(w, &reference)?;
        let g = model.gamma(w)?;
        out.push(Crossing {
            omega_rad_s: w,
            f_hz: f,
            d_con: g.re,
            k_con: g.im,
            d_net: te.value.re,
            k_net: te.value.im,
            net_damping: g.re + te.value.re,
            eigvec: te.vector,
        });
    }
    Ok(out)
}

/// Applies the net-damping test at every crossing of every subsystem.
pub fn assess(
    model: &LoopModel,
    curves: &SubsystemCurves,
    root_tol_hz: f64,
    steady_state: SteadyState,
) -> Result<StabilityReport> {
    let mut per_subsystem = Vec::with_capacity(curves.n());
    let mut critical: Option<Critical> = None;
    for i in 0..curves.n() {
        let crossings = find_crossings(model, curves, i, root_tol_hz)?;
        for c in &crossings {
            if critical.as_ref().is_none_or(|cr| c.net_damping < cr.margin) {
                critical = Some(Critical {
                    subsystem: i + 1,
                    omega_c1_rad_s: c.omega_rad_s,
                    f_c1_hz: c.f_hz,
                    d_net1: c.d_net,
                    k_net1: c.k_net,
                    d_con_at_c1: c.d_con,
                    margin: c.net_damping,
                    eigvec: c.eigvec.clone(),
                });
            }
        }
        per_subsystem.push(SubsystemCrossings {
            index: i + 1,
            crossings,
        });
    }
    let mut notes = Vec::new();
    let verdict = match &critical {
        Some(c) => Verdict::from_margin(c.margin),
        None => {
            notes.push(
                "NO_CROSSING: no subsystem's spring sum changes sign in the scan band; \
                 the criterion is not applicable there (stable by criterion)"
                    .to_string(),
            );
            Verdict::NoCrossing
        }
    };
    if !curves.jumps.is_empty() {
        notes.push(format!(
            "BRANCH_JUMP: {} low-overlap branch matches (first at {:.4} Hz)",
            curves.jumps.len(),
            curves.jumps[0].f_hz
        ));
    }
    Ok(StabilityReport {
        verdict,
        critical,
        per_subsystem,
        steady_state,
        notes,
    })
}
