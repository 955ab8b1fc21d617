// The explicit kernel of the Kolmogorov operator: values, normalisation,
// PDE residual and the covariance determinant.

use mvf::kolmo::{Form, Fundamental, KolmogorovSpec, OperatorSpec};

pub struct Summary {
    pub det_poly: String,
    pub value_at_10: f64,
    pub normalization: f64,
    pub residual: f64,
}

pub fn run_example() -> Summary {
    let k = KolmogorovSpec::chain(&[1, 1]).unwrap();
    let op = OperatorSpec::model(k.clone());
    let f = Fundamental::new(&op).unwrap();
    let pole = [0.0, 0.0, 0.0];
    let z = [0.3, -0.05, -0.4];
    let h = f.parabolic_steps(0.4, 1e-3);
    let res = op
        .pde_residual(|w: &[f64]| f.value(w, &pole).unwrap(), &z, &h, Form::Adjoint, None)
        .unwrap();
    Summary {
        det_poly: format!("{:?}", k.det_covariance_poly()),
        value_at_10: f.value(&[0.0, 0.0, -10.0], &pole).unwrap(),
        normalization: f.normalization(&pole, 0.7, 40).unwrap(),
        residual: res.relative(),
    }
}

fn main() {
    let s = run_example();
    println!("det C(t) = {}", s.det_poly);
    println!("Γ*((0,0,-10); 0) = {:.12e}", s.value_at_10);
    println!("∫Γ* dξ at gap 0.7 = {:.15}", s.normalization);
    println!("relative adjoint residual = {:.2e}", s.residual);
}
