//! End-to-end runs: power flow, reduction, curves, verdict, weights.

use serde::Serialize;
use serde_json::json;

use crate::config::{PowerSetpoint, SystemSpec};
use crate::error::{Error, Result};
use crate::frequency::{gamma, resolve_pll, spec_grid, trace_curves, LoopModel, OperatingPoint, PllGains, SubsystemCurves};
use crate::modal::{modal_weights, sensitivities, ModalWeights, PowerParam, Sensitivities};
use crate::network::reduce_spec;
use crate::oracle::{assemble_state_space, crosscheck, modes, spec_gains, Agreement, ModeSet, StateSpace};
use crate::powerflow::{steady_state_with, VoltagePolicy};
use crate::report::{csv_line, fmt_num};
use crate::stability::{assess, StabilityReport};

#[derive(Debug, Clone, Default)]
pub struct AnalyzeOptions {
    pub voltage: VoltagePolicy,
    pub force_first_pll: bool,
    pub eta_complex: bool,
    pub per_converter_gamma: bool,
}

/// Γ at the critical crossing evaluated with one converter's own U and gains.
#[derive(Debug, Clone, Serialize)]
pub struct ConverterGamma {
    pub converter: String,
    pub d_con: f64,
    pub k_con: f64,
}

#[derive(Debug, Clone)]
pub struct Analysis {
    pub model: LoopModel,
    pub curves: SubsystemCurves,
    pub report: StabilityReport,
    pub weights: Option<ModalWeights>,
    pub sensitivities: Option<Sensitivities>,
    pub per_converter_gamma: Option<Vec<ConverterGamma>>,
    pub warnings: Vec<String>,
    pub names: Vec<String>,
}

pub fn analyze(spec: &SystemSpec, opts: &AnalyzeOptions) -> Result<Analysis> {
    let steady = steady_state_with(spec, &opts.voltage)?;
    let net = reduce_spec(spec)?;
    let (gains, warnings) = resolve_pll(spec, opts.force_first_pll)?;
    let op = OperatingPoint::from_spec(spec, &steady)?;
    let model = LoopModel::new(net, op, gains, spec.omega0())?;
    let curves = trace_curves(&model, &spec_grid(spec))?;
    let report = assess(&model, &curves, spec.options.root_tol_hz, steady)?;
    let names: Vec<String> = spec.converters.iter().map(|c| c.name.clone()).collect();

    let weights = match &report.critical {
        Some(c) => Some(modal_weights(
            &model,
            c.omega_c1_rad_s,
            c.lambda(),
            &c.eigvec,
            opts.eta_complex,
        )?),
        None => None,
    };
    let sens = weights.as_ref().map(|w| sensitivities(w, &names));
    let per_converter_gamma = match (&report.critical, opts.per_converter_gamma) {
        (Some(c), true) => Some(
            spec.converters
                .iter()
                .zip(&model.op.u_pu)
                .map(|(conv, &u)| {
                    let g = gamma(
                        c.omega_c1_rad_s,
                        u,
                        PllGains {
                            kp: conv.pll_kp,
                            ki: conv.pll_ki,
                        },
                        model.omega0,
                    )?;
                    Ok(ConverterGamma {
                        converter: conv.name.clone(),
                        d_con: g.re,
                        k_con: g.im,
                    })
                })
                .collect::<Result<_>>()?,
        ),
        _ => None,
    };
    Ok(Analysis {
        model,
        curves,
        report,
        weights,
        sensitivities: sens,
        per_converter_gamma,
        warnings,
        names,
    })
}

impl Analysis {
    /// Structured report document.
    pub fn document(&self) -> serde_json::Value {
        json!({
            "verdict": self.report.verdict,
            "critical": self.report.critical,
            "per_subsystem": self.report.per_subsystem,
            "steady_state": self.report.steady_state,
            "converters": self.names,
            "pll": self.model.gains,
            "u_gamma_pu": self.model.u_gamma,
            "modal_weights": self.weights,
            "sensitivities": self.sensitivities,
            "per_converter_gamma": self.per_converter_gamma,
            "branch_jumps": self.curves.jumps,
            "notes": self.report.notes,
            "warnings": self.warnings,
        })
    }

    /// Reduced state-space model at the same operating point.
    pub fn state_space(&self, spec: &SystemSpec) -> Result<StateSpace> {
        let (kp, ki) = spec_gains(spec);
        assemble_state_space(&self.model.net, &self.model.op, &kp, &ki, self.model.omega0)
    }

    pub fn oracle(&self, spec: &SystemSpec) -> Result<(ModeSet, Agreement)> {
        let m = modes(&self.state_space(spec)?)?;
        let a = crosscheck(&self.report, &m);
        Ok((m, a))
    }
}

/// Parses `start:stop:step` into an inclusive ascending value list.
pub fn parse_range(s: &str) -> Result<Vec<f64>> {
    let parts: Vec<&str> = s.split(':').collect();
    let bad = || Error::Argument(format!("range '{s}' is not start:stop:step"));
    if parts.len() != 3 {
        return Err(bad());
    }
    let nums: Vec<f64> = parts
        .iter()
        .map(|p| p.trim().parse::<f64>().map_err(|_| bad()))
        .collect::<Result<_>>()?;
    let (start, stop, step) = (nums[0], nums[1], nums[2]);
    if !(step > 0.0) || !start.is_finite() || !stop.is_finite() {
        return Err(Error::Argument(format!("range '{s}' needs a positive step")));
    }
    if stop < start {
        return Ok(Vec::new());
    }
    let count = ((stop - start) / step + 1e-9).floor() as usize;
    Ok((0..=count).map(|k| start + step * k as f64).collect())
}

#[derive(Debug, Clone)]
pub struct SweepRow {
    pub value: f64,
    pub outcome: std::result::Result<(Option<f64>, Option<f64>, String), String>,
}

/// One analysis per value of converter `i`'s P or Q, in ascending order.
pub fn sweep(
    spec: &SystemSpec,
    opts: &AnalyzeOptions,
    i: usize,
    param: PowerParam,
    values: &[f64],
) -> Vec<SweepRow> {
    let mut values = values.to_vec();
    values.sort_by(f64::total_cmp);
    values
        .into_iter()
        .map(|value| {
            let base = spec.operating_point[i];
            let sp = match param {
                PowerParam::P => PowerSetpoint { p_pu: value, ..base },
                PowerParam::Q => PowerSetpoint { q_pu: value, ..base },
            };
            let outcome = analyze(&spec.with_setpoint(i, sp), opts)
                .map(|a| {
                    (
                        a.report.d_net1(),
                        a.report.f_c1_hz(),
                        a.report.verdict.to_string(),
                    )
                })
                .map_err(|e| e.code().to_string());
            SweepRow { value, outcome }
        })
        .collect()
}

/// `value,D_net1,f_c1_hz,verdict`; failed rows carry `error:CODE`.
pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = csv_line(["value", "D_net1", "f_c1_hz", "verdict"]);
    let opt = |x: Option<f64>| x.map(fmt_num).unwrap_or_default();
    for r in rows {
        let line = match &r.outcome {
            Ok((d, f, v)) => csv_line([fmt_num(r.value), opt(*d), opt(*f), v.clone()]),
            Err(code) => csv_line([fmt_num(r.value), String::new(), String::new(), format!("error:{code}")]),
        };
        out.push_str(&line);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn range_parsing() {
        assert_eq!(parse_range("0:0.3:0.1").unwrap().len(), 4);
        assert_eq!(parse_range("1:1:0.5").unwrap(), vec![1.0]);
        assert!(parse_range("1:0:0.1").unwrap().is_empty());
        assert!(parse_range("0:1:0").is_err());
        assert!(parse_range("0:1").is_err());
        assert!(parse_range("a:1:0.1").is_err());
    }

    #[test]
    fn empty_sweep_is_header_only() {
        assert_eq!(sweep_csv(&[]), "value,D_net1,f_c1_hz,verdict\n");
    }
}
