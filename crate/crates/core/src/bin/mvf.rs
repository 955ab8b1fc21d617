use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use mvf::cli::{self, GroupId, RunOptions};
use mvf::group::BoxDomain;
use mvf::kolmo::{KolmogorovSpec, OperatorSpec};
use mvf::reach::{self, SampleConfig};

#[derive(Parser)]
#[command(name = "mvf", version, about = "Mean value formula verification suites")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run a scenario file and write report.json and summary.csv.
    Run {
        scenario: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        threads: Option<usize>,
        #[arg(long, default_value_t = 1.0)]
        samples_scale: f64,
    },
    /// Group axioms, bracket table and Hörmander rank of a catalog group.
    GroupCheck {
        group: String,
        #[arg(long, default_value_t = 1000)]
        samples: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
    /// Sample admissible curves of the n = 1 Kolmogorov operator in (-1, 1)^3.
    ReachCone {
        #[arg(long = "R")]
        r: f64,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        seed: u64,
        /// Endpoint CSV destination.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compare two report.json files field by field.
    ReportDiff {
        a: PathBuf,
        b: PathBuf,
        #[arg(long, default_value_t = 1e-9)]
        tol: f64,
    },
}

fn main() -> ExitCode {
    let args = Cli::parse();
    let code = match args.cmd {
        Cmd::Run {
            scenario,
            out,
            threads,
            samples_scale,
        } => {
            let res = cli::run_scenario(&scenario, &out, &RunOptions { samples_scale, threads });
            if res.code == 0 {
                println!("{}", res.message);
            } else {
                eprintln!("{}", res.message);
            }
            if let Some(r) = &res.report {
                print!("{}", r.summary_csv());
            }
            res.code
        }
        Cmd::GroupCheck { group, samples, seed } => match group.parse::<GroupId>().and_then(|g| cli::group_check(&g, samples, 100, seed)) {
            Ok(rep) => {
                println!("{}: dim {} rank {} axiom residual {:e}", rep.name, rep.dim, rep.min_rank, rep.axioms.max_residual());
                for b in &rep.brackets {
                    println!("  {b}");
                }
                println!("{}", if rep.pass { "pass" } else { "fail" });
                i32::from(!rep.pass)
            }
            Err(e) => {
                eprintln!("{e}");
                2
            }
        },
        Cmd::ReachCone { r, n, seed, out } => {
            let op = OperatorSpec::model(KolmogorovSpec::chain(&[1, 1]).expect("valid chain"));
            match reach::sample_attainable(&op, &[0.0; 3], &BoxDomain::cube(3, 1.0), n, seed, &SampleConfig::cone(r, 1.0)) {
                Ok(s) => {
                    println!("samples {n} violations {} exits {}", s.violations, s.exits);
                    if let Some(p) = out {
                        if let Err(e) = std::fs::write(&p, s.to_csv()) {
                            eprintln!("{}: {e}", p.display());
                            return ExitCode::from(2);
                        }
                    }
                    i32::from(s.violations > 0)
                }
                Err(e) => {
                    eprintln!("{e}");
                    2
                }
            }
        }
        Cmd::ReportDiff { a, b, tol } => match (cli::load_report(&a), cli::load_report(&b)) {
            (Ok(ra), Ok(rb)) => {
                let d = cli::report_diff(&ra, &rb, tol);
                for f in &d {
                    println!("{} {}: {} vs {}", f.check, f.field, f.a, f.b);
                }
                println!("{} differences", d.len());
                i32::from(!d.is_empty())
            }
            (Err(e), _) | (_, Err(e)) => {
                eprintln!("{e}");
                2
            }
        },
    };
    ExitCode::from(code as u8)
}
