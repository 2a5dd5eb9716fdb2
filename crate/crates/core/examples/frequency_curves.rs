// Damping and spring curves of the five-converter station near the PLL
// crossover, plus a full CSV dump next to the build artefacts.

use std::f64::consts::PI;

use syncstab::frequency::curves_csv;
use syncstab::{analyze, load_system_spec, AnalyzeOptions};

pub fn run_example() -> syncstab::Result<()> {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/configs/paper_testsystem.cfg");
    let spec = load_system_spec(path)?.with_case(2)?;
    let a = analyze(&spec, &AnalyzeOptions::default())?;
    let c = &a.curves;

    println!("{:>7} {:>9} {:>9} {:>9} {:>9}", "f_hz", "D_con", "K_con", "D_net_1", "K_net_1");
    for k in (0..c.omega_rad_s.len()).filter(|&k| {
        let f = c.omega_rad_s[k] / (2.0 * PI);
        (15.0..=25.0).contains(&f) && k % 20 == 0
    }) {
        println!(
            "{:7.2} {:9.4} {:9.4} {:9.4} {:9.4}",
            c.f_hz(k),
            c.d_con[k],
            c.k_con[k],
            c.d_net[0][k],
            c.k_net[0][k]
        );
    }
    println!("branch jumps: {}", c.jumps.len());

    let out = std::env::temp_dir().join("syncstab_case2_curves.csv");
    std::fs::write(&out, curves_csv(c))?;
    println!("wrote {}", out.display());
    Ok(())
}

#[allow(dead_code)]
fn main() -> syncstab::Result<()> {
    run_example()
}
