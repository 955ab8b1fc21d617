// Admissible curves from the origin stay in the cone |y| ≤ -Rt, and
// steered curves fill it.

use mvf::group::BoxDomain;
use mvf::kolmo::{Fundamental, KolmogorovSpec, OperatorSpec};
use mvf::reach::{check_h4, cone_coverage, sample_attainable, steer_min_energy, H4Report, ReachSample, SampleConfig};

pub fn run_example() -> (ReachSample, (usize, usize), H4Report) {
    let op = OperatorSpec::model(KolmogorovSpec::chain(&[1, 1]).unwrap());
    let dom = BoxDomain::cube(3, 1.0);
    let sample = sample_attainable(&op, &[0.0; 3], &dom, 10_000, 1, &SampleConfig::cone(1.0, 1.0)).unwrap();
    let cover = cone_coverage(&op, &[0.0; 3], &dom, 1.0, 0.9, 10, 64).unwrap();
    let fund = Fundamental::new(&op).unwrap();
    let path = steer_min_energy(&op, &[0.0; 3], &[0.5, 0.25, -1.0], 64).unwrap();
    let h4 = check_h4(&fund, &[0.0; 3], 1.0, &path, &[1.0, 1e-1, 1e-2, 1e-3, 1e-4]).unwrap();
    (sample, cover, h4)
}

fn main() {
    let (s, (hit, cells), h4) = run_example();
    println!("{} curves, {} outside the cone, {} truncated at the boundary", s.endpoints.len(), s.violations, s.exits);
    println!("steering reached {hit} of {cells} cone cells");
    for (s, g) in h4.s.iter().zip(&h4.gamma) {
        println!("s = {s:e}: Γ* = {g:.4e}");
    }
}
