// Bracket table and Hörmander rank of the Heisenberg heat frame and a
// Kolmogorov frame.

use mvf::cli::{group_check, GroupId};

pub fn run_example() -> Vec<mvf::cli::GroupCheck> {
    ["heisenberg(1)", "heisenberg(2)", "kolmogorov(1,1)", "kolmogorov(1,1,1)"]
        .iter()
        .map(|id| group_check(&id.parse::<GroupId>().unwrap(), 200, 100, 7).unwrap())
        .collect()
}

fn main() {
    for rep in run_example() {
        println!("{} (rank {} of {})", rep.name, rep.min_rank, rep.dim);
        for b in &rep.brackets {
            println!("  {b}");
        }
    }
}
