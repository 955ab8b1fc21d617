// Both mean value formulas for exact solutions of the Kolmogorov operator.

use std::sync::Arc;

use mvf::geometry::LevelBall;
use mvf::integrate::MCConfig;
use mvf::kolmo::{Fundamental, KolmogorovSpec, OperatorSpec};
use mvf::mvf::{surface_formula_rhs, volume_formula_rhs, KernelEval, MVFReport, Solution};

pub fn run_example() -> Vec<(String, MVFReport)> {
    let op = OperatorSpec::model(KolmogorovSpec::chain(&[1, 1]).unwrap());
    let f = Arc::new(Fundamental::new(&op).unwrap());
    let pole = [0.2, -0.1, 0.0];
    let ball = LevelBall::envelope(f.clone(), &pole, 1.0).unwrap();
    let k = KernelEval::for_ball(&ball, 2.0).unwrap();
    let cfg = MCConfig::new(200_000, 11);
    let sols = [
        Solution::Const { value: 1.0 },
        Solution::YPlusXt,
        Solution::X2Plus2t,
        Solution::GammaPole { zeta: vec![0.0, 0.0, -10.0] },
    ];
    sols.iter()
        .map(|s| {
            let p = s.prepare(&f).unwrap();
            p.check_ball(&ball).unwrap();
            let u = |z: &[f64]| p.u(z);
            let rhs = |z: &[f64]| p.f(z);
            let vol = volume_formula_rhs(&k, &u, &rhs, &ball, &cfg, 3e-3).unwrap();
            let surf = surface_formula_rhs(&k, &u, &rhs, &ball, &cfg, 0.02, true, 1e-2).unwrap();
            (s.id().to_string(), vol.merge(surf))
        })
        .collect()
}

fn main() {
    for (id, rep) in run_example() {
        for row in rep.csv_rows(&id) {
            println!("{row}");
        }
    }
}
