// Level-set balls of the kernel: time extent, slice decay as the time
// gap shrinks, and a point cloud on the level set.

use std::sync::Arc;

use mvf::geometry::{dyadic_ladder, DecayReport, LevelBall};
use mvf::kolmo::{Fundamental, KolmogorovSpec, OperatorSpec};

pub fn run_example() -> (f64, DecayReport, String) {
    let op = OperatorSpec::model(KolmogorovSpec::chain(&[1, 1]).unwrap());
    let f = Arc::new(Fundamental::new(&op).unwrap());
    let ball = LevelBall::envelope(f, &[0.0; 3], 1.0).unwrap();
    let decay = ball.claim2_decay(&dyadic_ladder(4, 14));
    let mut csv = String::from("x0,x1,t\n");
    let d = ball.time_extent();
    for i in 1..40 {
        let s = d * i as f64 / 40.0;
        for j in 0..24 {
            let a = std::f64::consts::TAU * j as f64 / 24.0;
            let p = ball.slice_point(s, &[a.cos(), a.sin()]);
            csv.push_str(&format!("{:.16e},{:.16e},{:.16e}\n", p[0], p[1], p[2]));
        }
    }
    (d, decay, csv)
}

fn main() {
    let (d, decay, csv) = run_example();
    println!("time extent Δ = {d:.12}");
    print!("{}", decay.to_csv());
    println!("level-set cloud: {} points", csv.lines().count() - 1);
}
