// Rank converters by their weight in the critical eigenvalue and compare
// the first-order slope with a finite difference through the full pipeline.

use syncstab::modal::{finite_difference_check, sensitivity_csv, PowerParam};
use syncstab::{analyze, load_system_spec, AnalyzeOptions};

pub fn run_example() -> syncstab::Result<()> {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/configs/paper_testsystem.cfg");
    let spec = load_system_spec(path)?.with_case(2)?;
    let opts = AnalyzeOptions::default();
    let a = analyze(&spec, &opts)?;
    let s = a.sensitivities.expect("case 2 has a crossing");
    print!("{}", sensitivity_csv(&s));
    println!("dominant: {}", s.dominant_name());

    for i in 0..spec.n_converters() {
        let fd = finite_difference_check(&spec, &opts, i, PowerParam::P, 1e-4)?;
        println!(
            "{:>5}: dD/dP predicted {:+.5} measured {:+.5} (rel err {:.1e})",
            fd.converter, fd.predicted, fd.measured, fd.rel_err
        );
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> syncstab::Result<()> {
    run_example()
}
