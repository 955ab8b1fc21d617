// Smoothing a bump with the kernel converges back to the bump.

use mvf::geometry::DecayReport;
use mvf::kolmo::{Fundamental, KolmogorovSpec, OperatorSpec};
use mvf::mvf::{bump, reproduction_limit};

pub fn run_example() -> (DecayReport, DecayReport) {
    let ladder = [1e-1, 1e-2, 1e-3, 1e-4];
    let heat = Fundamental::new(&OperatorSpec::heat(1)).unwrap();
    let kol = Fundamental::new(&OperatorSpec::model(KolmogorovSpec::chain(&[1, 1]).unwrap())).unwrap();
    (
        reproduction_limit(&heat, |x: &[f64]| bump(x, 1.0), &[0.0], &ladder, 60).unwrap(),
        reproduction_limit(&kol, |x: &[f64]| bump(x, 1.0), &[0.0, 0.0], &ladder, 40).unwrap(),
    )
}

fn main() {
    let (h, k) = run_example();
    print!("heat\n{}kolmogorov\n{}", h.to_csv(), k.to_csv());
}
