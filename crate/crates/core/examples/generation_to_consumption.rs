// Switch both storage units from generating to charging and compare the
// indicator before and after.

use syncstab::config::PowerSetpoint;
use syncstab::modal::{adjustment_compare, AdjustVoltage};
use syncstab::{load_system_spec, AnalyzeOptions};

pub fn run_example() -> syncstab::Result<()> {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/configs/paper_testsystem.cfg");
    let before = load_system_spec(path)?.with_case(2)?;
    let mut after = before.clone();
    for (name, p) in [("ES1", -0.8), ("ES2", -0.6)] {
        let i = before.converter_index(name).expect("storage unit present");
        let q = before.operating_point[i].q_pu;
        after = after.with_setpoint(i, PowerSetpoint { p_pu: p, q_pu: q });
    }
    let r = adjustment_compare(&before, &after, &AnalyzeOptions::default(), AdjustVoltage::Freeze)?;
    println!(
        "D_net1 {:.4} -> {:.4}, verdict {} -> {}, generating converters {} -> {}",
        r.d_net1_before.unwrap_or(f64::NAN),
        r.d_net1_after.unwrap_or(f64::NAN),
        r.verdict_before,
        r.verdict_after,
        r.positive_inertia_before,
        r.positive_inertia_after
    );
    println!("improvement: {}", r.improvement);
    Ok(())
}

#[allow(dead_code)]
fn main() -> syncstab::Result<()> {
    run_example()
}
