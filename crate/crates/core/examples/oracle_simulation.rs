// Time response of the reduced state-space model to a short angle pulse,
// for the unstable case and for the same case after the storage units
// start charging.

use syncstab::config::PowerSetpoint;
use syncstab::oracle::{envelope_growth_rate, fft_peak_hz, modes, simulate, Disturbance};
use syncstab::{analyze, load_system_spec, AnalyzeOptions, SystemSpec};

fn report(label: &str, spec: &SystemSpec) -> syncstab::Result<()> {
    let a = analyze(spec, &AnalyzeOptions::default())?;
    let ss = a.state_space(spec)?;
    let dom = modes(&ss)?.dominant.expect("oscillatory mode");
    let dist = Disturbance {
        start_s: 0.1,
        ..Disturbance::default()
    };
    let ts = simulate(&ss, &dist, 1e-4, 4.0)?;
    let tail = ts.t_s.len() / 3;
    let x: Vec<f64> = ts.omega[tail..].iter().map(|row| row.iter().sum()).collect();
    println!(
        "{label:>8}: verdict {:>8}, sigma {:+.3}/s at {:.2} Hz; simulated growth {:+.3}/s, FFT peak {:.2} Hz",
        a.report.verdict,
        dom.sigma,
        dom.f_hz,
        envelope_growth_rate(&ts.t_s[tail..], &x).unwrap_or(f64::NAN),
        fft_peak_hz(&x, 1e-4).unwrap_or(f64::NAN)
    );
    Ok(())
}

pub fn run_example() -> syncstab::Result<()> {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/configs/paper_testsystem.cfg");
    let case2 = load_system_spec(path)?.with_case(2)?;
    report("case 2", &case2)?;

    let mut adjusted = case2.clone();
    for (i, p) in [(0, -0.8), (2, -0.6)] {
        let q = case2.operating_point[i].q_pu;
        adjusted = adjusted.with_setpoint(i, PowerSetpoint { p_pu: p, q_pu: q });
    }
    report("adjusted", &adjusted)
}

#[allow(dead_code)]
fn main() -> syncstab::Result<()> {
    run_example()
}
