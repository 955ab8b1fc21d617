// Group axioms and dilations for the bundled homogeneous groups.

use mvf::group::{self, GroupSpec, Point};
use mvf::kolmo::KolmogorovSpec;

pub fn run_example() -> Vec<(String, f64, bool)> {
    let groups: Vec<GroupSpec> = vec![
        group::heisenberg_heat(1),
        group::heisenberg_heat(2),
        group::kolmogorov(&KolmogorovSpec::chain(&[1, 1]).unwrap()),
        group::kolmogorov(&KolmogorovSpec::chain(&[1, 1, 1]).unwrap()),
        group::heat(2),
    ];
    groups
        .iter()
        .map(|g| {
            let rep = g.check_axioms(1000, 42);
            (g.name.clone(), rep.max_residual(), rep.pass)
        })
        .collect()
}

fn main() {
    for (name, res, pass) in run_example() {
        println!("{name:>24}  max residual {res:.2e}  {}", if pass { "ok" } else { "FAIL" });
    }
    let k = group::kolmogorov(&KolmogorovSpec::chain(&[1, 1]).unwrap());
    let z = Point::new(&[1.0, 0.0], 0.0);
    let w = Point::new(&[0.0, 0.0], 1.0);
    println!("(1,0,0)∘(0,0,1) = {:?}", k.compose(&z, &w).unwrap().coords());
    println!("Q = {}", k.homogeneous_dim());
}
