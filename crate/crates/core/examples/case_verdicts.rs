// Net-damping verdicts for the three operating cases of the station, with
// the state-space oracle alongside.

use syncstab::{analyze, load_system_spec, AnalyzeOptions};

pub fn run_example() -> syncstab::Result<()> {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/configs/paper_testsystem.cfg");
    let base = load_system_spec(path)?;
    println!(
        "{:>4} {:>9} {:>8} {:>8} {:>9} {:>10} {:>9}",
        "case", "D_net1", "D_con", "f_c1", "verdict", "oracle_s", "oracle_f"
    );
    for id in 1..=3 {
        let spec = base.with_case(id)?;
        let a = analyze(&spec, &AnalyzeOptions::default())?;
        let c = a.report.critical.as_ref().expect("every case has a crossing");
        let (modes, _) = a.oracle(&spec)?;
        let dom = modes.dominant.expect("oscillatory mode");
        println!(
            "{id:>4} {:9.4} {:8.4} {:8.3} {:>9} {:10.4} {:9.3}",
            c.d_net1, c.d_con_at_c1, c.f_c1_hz, a.report.verdict, dom.sigma, dom.f_hz
        );
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> syncstab::Result<()> {
    run_example()
}
