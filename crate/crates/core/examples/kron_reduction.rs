// Reduce a small radial network onto its converter terminals and check the
// factors the rest of the pipeline relies on.

use nalgebra::DMatrix;
use syncstab::network::{b_matrix_csv, reduce_spec};
use syncstab::parse_system_spec;

const STAR: &str = r#"
nodes = ["c1", "c2", "hub", "grid"]
slack = "grid"

[system]
rated_frequency_hz = 50.0

[[branches]]
from = "c1"
to = "hub"
inductance_pu = 0.1

[[branches]]
from = "c2"
to = "hub"
inductance_pu = 0.1

[[branches]]
from = "hub"
to = "grid"
inductance_pu = 0.05

[[converters]]
name = "A"
node = "c1"
pll_kp = 6.5
pll_ki = 15782.0

[[converters]]
name = "B"
node = "c2"
pll_kp = 6.5
pll_ki = 15782.0
"#;

pub fn run_example() -> syncstab::Result<()> {
    let spec = parse_system_spec(STAR)?;
    let net = reduce_spec(&spec)?;
    print!("{}", b_matrix_csv(&net));
    println!("eigenvalues of B: {:?}", net.eigenvalues.as_slice());

    let id = &net.b_inv_sqrt * &net.b_matrix * &net.b_inv_sqrt;
    let err = (id - DMatrix::identity(2, 2)).abs().max();
    println!("max |B^-1/2 B B^-1/2 - I| = {err:.2e}");
    assert!(err < 1e-9);
    Ok(())
}

#[allow(dead_code)]
fn main() -> syncstab::Result<()> {
    run_example()
}
