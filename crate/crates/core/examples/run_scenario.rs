// Runs the bundled heat scenario into a temporary directory.

use std::path::Path;

use mvf::cli::{run_scenario, RunOptions};

pub fn run_example() -> (i32, String) {
    let root = Path::new(env!("CARGO_MANIFEST_DIR"));
    let out = std::env::temp_dir().join(format!("mvf-example-{}", std::process::id()));
    let res = run_scenario(&root.join("scenarios/heat_mvf.json"), &out, &RunOptions::default());
    let summary = std::fs::read_to_string(out.join("summary.csv")).unwrap_or_default();
    let _ = std::fs::remove_dir_all(&out);
    (res.code, summary)
}

fn main() {
    let (code, summary) = run_example();
    print!("{summary}");
    println!("exit code {code}");
}
