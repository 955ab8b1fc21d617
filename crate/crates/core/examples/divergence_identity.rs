// The divergence identity `uℒ*v - vℒu = div_G Φ` on random polynomials.

use mvf::kolmo::{Diffusion, KolmogorovSpec, OperatorSpec};
use mvf::mvf::{divergence_identity_residual, random_poly, DivergenceCheck};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn run_example() -> Vec<DivergenceCheck> {
    let op = OperatorSpec::new(
        KolmogorovSpec::chain(&[2, 1]).unwrap(),
        Diffusion::Matrix(vec![vec![1.0, 0.3], vec![0.3, 0.6]]),
        vec![],
        -0.4,
    )
    .unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    (0..5)
        .map(|i| {
            let u = random_poly(4, 3, &mut rng);
            let v = random_poly(4, 3, &mut rng);
            divergence_identity_residual(&op, &u, &v, 20, i).unwrap()
        })
        .collect()
}

fn main() {
    for c in run_example() {
        println!("residual {:.2e} scale {:.2e}", c.residual, c.scale);
    }
}
