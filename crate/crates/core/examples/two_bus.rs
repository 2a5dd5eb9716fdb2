// One converter behind a reactance: power flow against the closed form, and
// the indicator against -P·X/U².

use syncstab::config::PowerSetpoint;
use syncstab::powerflow::solve_steady_state;
use syncstab::{analyze, load_system_spec, AnalyzeOptions};

pub fn run_example() -> syncstab::Result<()> {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/configs/two_bus.cfg");
    let base = load_system_spec(path)?;
    let x = base.branches[0].inductance_pu;

    for p in [0.0, 0.25, 0.5, 1.0] {
        let spec = base.with_setpoint(0, PowerSetpoint { p_pu: p, q_pu: 0.0 });
        let st = solve_steady_state(&spec)?;
        let delta = (2.0 * p * x).asin() / 2.0;
        let a = analyze(&spec, &AnalyzeOptions::default())?;
        let u = st.u_pu[0];
        println!(
            "P={p:4.2}: U={u:.5} (closed form {:.5}), delta={:.5} rad, D_net1={:+.5} (-PX/U^2 = {:+.5}), {}",
            delta.cos(),
            st.delta0_rad[0],
            a.report.d_net1().unwrap_or(f64::NAN),
            -p * x / (u * u),
            a.report.verdict
        );
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> syncstab::Result<()> {
    run_example()
}
