// Volume formula with the kernel raised to other exponents, u ≡ 1.

use std::sync::Arc;

use mvf::geometry::LevelBall;
use mvf::integrate::MCConfig;
use mvf::kolmo::{Fundamental, OperatorSpec};
use mvf::mvf::{volume_formula_rhs, KernelEval};

pub fn run_example() -> Vec<(f64, f64, f64)> {
    let f = Arc::new(Fundamental::new(&OperatorSpec::heat(2)).unwrap());
    let ball = LevelBall::envelope(f, &[0.0; 3], 1.0).unwrap();
    [1.5, 2.0, 3.0]
        .iter()
        .map(|&alpha| {
            let k = KernelEval::for_ball(&ball, alpha).unwrap();
            let rep = volume_formula_rhs(&k, &|_: &[f64]| 1.0, &|_: &[f64]| 0.0, &ball, &MCConfig::new(200_000, 5), 0.02).unwrap();
            let e = rep.volume_estimate.unwrap().total;
            (alpha, e.value, e.std_error)
        })
        .collect()
}

fn main() {
    for (a, v, s) in run_example() {
        println!("alpha {a}: {v:.5} ± {s:.5}");
    }
}
