//! Declarative scenarios: a JSON file names an operator and a list of
//! checks; running it writes `report.json` and `summary.csv`.

use std::fs;
use std::path::Path;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::fields::{heisenberg_heat_frame, kolmogorov_frame, Frame};
use crate::geometry::{DecayReport, LevelBall};
use crate::group::{self, BoxDomain, GroupSpec};
use crate::integrate::MCConfig;
use crate::kolmo::{Diffusion, Form, Fundamental, KolmogorovSpec, OperatorSpec};
use crate::mvf::{self, bump, KernelEval, Solution};
use crate::reach::{self, SampleConfig};

pub const SCHEMA_VERSION: u32 = 1;

/// A group from the built-in catalog: `heisenberg(n)`, `kolmogorov(m_0,…)`,
/// `heat(N)` or `euclidean(n)`.
#[derive(Clone, Debug, PartialEq)]
pub enum GroupId {
    Heisenberg(usize),
    Kolmogorov(Vec<usize>),
    Heat(usize),
    Euclidean(usize),
}

impl std::str::FromStr for GroupId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Spec(format!("unknown group id `{s}`"));
        let s = s.trim();
        let open = s.find('(').ok_or_else(bad)?;
        let args = s[open + 1..].strip_suffix(')').ok_or_else(bad)?;
        let nums: Vec<usize> = args
            .split(',')
            .map(|a| a.trim().parse::<usize>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| bad())?;
        let one = || -> Result<usize> {
            match nums.as_slice() {
                [n] if *n > 0 => Ok(*n),
                _ => Err(bad()),
            }
        };
        match &s[..open] {
            "heisenberg" => Ok(GroupId::Heisenberg(one()?)),
            "heat" => Ok(GroupId::Heat(one()?)),
            "euclidean" => Ok(GroupId::Euclidean(one()?)),
            "kolmogorov" if !nums.is_empty() => Ok(GroupId::Kolmogorov(nums)),
            _ => Err(bad()),
        }
    }
}

impl GroupId {
    pub fn group(&self) -> Result<GroupSpec> {
        Ok(match self {
            GroupId::Heisenberg(n) => group::heisenberg_heat(*n),
            GroupId::Kolmogorov(m) => group::kolmogorov(&KolmogorovSpec::chain(m)?),
            GroupId::Heat(n) => group::heat(*n),
            GroupId::Euclidean(n) => group::euclidean(*n),
        })
    }

    /// The generating frame, when the group carries one.
    pub fn frame(&self) -> Result<Frame> {
        Ok(match self {
            GroupId::Heisenberg(n) => heisenberg_heat_frame(*n),
            GroupId::Kolmogorov(m) => kolmogorov_frame(&KolmogorovSpec::chain(m)?),
            GroupId::Heat(n) => kolmogorov_frame(&KolmogorovSpec::heat(*n)),
            GroupId::Euclidean(n) => crate::fields::euclidean_frame(*n),
        })
    }
}

/// Axioms, brackets and Hörmander rank of a catalog group.
#[derive(Clone, Debug, Serialize)]
pub struct GroupCheck {
    pub name: String,
    pub axioms: group::AxiomReport,
    pub brackets: Vec<String>,
    pub min_rank: usize,
    pub dim: usize,
    pub pass: bool,
}

pub fn group_check(id: &GroupId, samples: usize, points: usize, seed: u64) -> Result<GroupCheck> {
    let g = id.group()?;
    let frame = id.frame()?;
    let axioms = g.check_axioms(samples, seed);
    let depth = g.depth() + 1;
    let brackets = frame
        .bracket_table(2)
        .iter()
        .filter(|b| !b.field.is_zero())
        .map(|b| format!("{:?} = {}", b.word, describe(&b.field)))
        .collect();
    let dim = g.total_dim();
    let mut min_rank = dim;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xA5A5);
    for _ in 0..points {
        let z = g.random_point(&mut rng, 1.0);
        min_rank = min_rank.min(frame.hormander_rank(z.coords(), depth));
    }
    Ok(GroupCheck {
        name: g.name.clone(),
        pass: axioms.pass && min_rank == dim,
        axioms,
        brackets,
        min_rank,
        dim,
    })
}

fn describe(f: &crate::fields::PolyVectorField) -> String {
    let parts: Vec<String> = f
        .coeffs
        .iter()
        .enumerate()
        .filter(|(_, c)| !c.is_zero())
        .map(|(i, c)| format!("({c:?})∂_{i}"))
        .collect();
    parts.join(" + ")
}

fn default_alpha() -> f64 {
    2.0
}

fn default_h_rel() -> f64 {
    0.02
}

fn default_true() -> bool {
    true
}

fn default_nodes() -> usize {
    40
}

/// One named check with its parameters. Seeds have no default.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum CheckSpec {
    GroupAxioms {
        id: String,
        group: String,
        samples: usize,
        seed: u64,
    },
    Normalization {
        id: String,
        pole: Vec<f64>,
        time_gap: f64,
        #[serde(default = "default_nodes")]
        nodes: usize,
        tol: f64,
    },
    PdeResidual {
        id: String,
        points: usize,
        seed: u64,
        tol: f64,
    },
    Claim2 {
        id: String,
        r: f64,
        k_lo: i32,
        k_hi: i32,
        tol: f64,
    },
    MvfVolume {
        id: String,
        pole: Vec<f64>,
        r: f64,
        solution: Solution,
        #[serde(default = "default_alpha")]
        alpha: f64,
        samples: usize,
        seed: u64,
        abs_tol: f64,
    },
    MvfSurface {
        id: String,
        pole: Vec<f64>,
        r: f64,
        solution: Solution,
        samples: usize,
        seed: u64,
        abs_tol: f64,
        #[serde(default = "default_h_rel")]
        h_rel: f64,
        #[serde(default = "default_true")]
        richardson: bool,
    },
    Divergence {
        id: String,
        pairs: usize,
        degree: u32,
        seed: u64,
        tol: f64,
    },
    Reproduction {
        id: String,
        xi: Vec<f64>,
        eps: Vec<f64>,
        bump_radius: f64,
        #[serde(default = "default_nodes")]
        nodes: usize,
        tol: f64,
    },
    ReachCone {
        id: String,
        slope: f64,
        n: usize,
        seed: u64,
    },
}

impl CheckSpec {
    pub fn id(&self) -> &str {
        match self {
            CheckSpec::GroupAxioms { id, .. }
            | CheckSpec::Normalization { id, .. }
            | CheckSpec::PdeResidual { id, .. }
            | CheckSpec::Claim2 { id, .. }
            | CheckSpec::MvfVolume { id, .. }
            | CheckSpec::MvfSurface { id, .. }
            | CheckSpec::Divergence { id, .. }
            | CheckSpec::Reproduction { id, .. }
            | CheckSpec::ReachCone { id, .. } => id,
        }
    }
}

/// Operator block of a scenario; unspecified fields give the model operator.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OperatorConfig {
    pub m_dims: Vec<usize>,
    #[serde(default)]
    pub blocks: Option<Vec<crate::ratmat::RatMat>>,
    #[serde(default)]
    pub diffusion: Option<Diffusion>,
    #[serde(default)]
    pub b: Vec<f64>,
    #[serde(default)]
    pub c: f64,
}

impl OperatorConfig {
    pub fn build(&self) -> Result<OperatorSpec> {
        let k = match &self.blocks {
            Some(b) => KolmogorovSpec::new(self.m_dims.clone(), b.clone())?,
            None => KolmogorovSpec::chain(&self.m_dims)?,
        };
        OperatorSpec::new(
            k,
            self.diffusion.clone().unwrap_or(Diffusion::Scalar(1.0)),
            self.b.clone(),
            self.c,
        )
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub schema: u32,
    pub id: String,
    pub operator: OperatorConfig,
    pub checks: Vec<CheckSpec>,
}

impl Scenario {
    pub fn parse(text: &str) -> Result<Self> {
        let sc: Scenario = serde_json::from_str(text).map_err(|e| Error::Config {
            field: format!("line {} column {}", e.line(), e.column()),
            message: e.to_string(),
        })?;
        sc.validate()?;
        Ok(sc)
    }

    pub fn validate(&self) -> Result<()> {
        let cfg = |field: String, message: String| Err(Error::Config { field, message });
        if self.schema != SCHEMA_VERSION {
            return cfg("schema".into(), format!("unsupported version {}", self.schema));
        }
        if let Err(e) = self.operator.build() {
            return cfg("operator".into(), e.to_string());
        }
        let mut seen = std::collections::BTreeSet::new();
        for c in &self.checks {
            if !seen.insert(c.id()) {
                return cfg(format!("checks.{}", c.id()), "duplicate check id".into());
            }
            if let CheckSpec::GroupAxioms { group, .. } = c {
                if let Err(e) = group.parse::<GroupId>() {
                    return cfg(format!("checks.{}.group", c.id()), e.to_string());
                }
            }
        }
        Ok(())
    }
}

/// Non-finite numbers are written as `null` in JSON and read back as NaN.
mod nan_null {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else {
            s.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::NAN))
    }
}

/// Result of one check.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckOutcome {
    pub id: String,
    pub kind: String,
    #[serde(with = "nan_null")]
    pub truth: f64,
    #[serde(with = "nan_null")]
    pub estimate: f64,
    #[serde(with = "nan_null")]
    pub std_error: f64,
    pub pass: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(default)]
    pub detail: Value,
}

impl CheckOutcome {
    fn new(id: &str, kind: &str, truth: f64, estimate: f64, std_error: f64, pass: bool, detail: Value) -> Self {
        Self {
            id: id.into(),
            kind: kind.into(),
            truth,
            estimate,
            std_error,
            pass,
            error: None,
            detail,
        }
    }

    /// `id,truth,estimate,std_error,pass` with 17 significant digits.
    pub fn csv_row(&self) -> String {
        format!(
            "{},{:.16e},{:.16e},{:.16e},{}",
            self.id,
            self.truth,
            self.estimate,
            self.std_error,
            if self.pass { "pass" } else { "fail" }
        )
    }
}

pub const SUMMARY_HEADER: &str = "id,truth,estimate,std_error,pass";

/// Knobs that do not belong in the scenario file.
#[derive(Clone, Copy, Debug)]
pub struct RunOptions {
    pub samples_scale: f64,
    pub threads: Option<usize>,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            samples_scale: 1.0,
            threads: None,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Report {
    pub schema: u32,
    pub scenario: String,
    pub operator: OperatorConfig,
    pub checks: Vec<CheckOutcome>,
    pub all_pass: bool,
    #[serde(default)]
    pub metadata: Value,
}

impl Report {
    pub fn summary_csv(&self) -> String {
        let mut s = String::from(SUMMARY_HEADER);
        s.push('\n');
        for c in &self.checks {
            s.push_str(&c.csv_row());
            s.push('\n');
        }
        s
    }

    pub fn exit_code(&self) -> i32 {
        if self.all_pass {
            0
        } else {
            1
        }
    }
}

fn scaled(samples: usize, scale: f64) -> usize {
    ((samples as f64 * scale).round() as usize).max(1000)
}

fn decay_json(r: &DecayReport) -> Value {
    serde_json::to_value(r).unwrap_or(Value::Null)
}

fn run_check(op: &OperatorSpec, fund: &Arc<Fundamental>, c: &CheckSpec, scale: f64) -> Result<CheckOutcome> {
    let id = c.id();
    Ok(match c {
        CheckSpec::GroupAxioms { group, samples, seed, .. } => {
            let g: GroupId = group.parse()?;
            let rep = group_check(&g, *samples, 100, *seed)?;
            let res = rep.axioms.max_residual();
            CheckOutcome::new(id, "group_axioms", 0.0, res, 0.0, rep.pass, serde_json::to_value(&rep)?)
        }
        CheckSpec::Normalization { pole, time_gap, nodes, tol, .. } => {
            let v = fund.normalization(pole, *time_gap, *nodes)?;
            CheckOutcome::new(id, "normalization", 1.0, v, 0.0, (v - 1.0).abs() <= *tol, Value::Null)
        }
        CheckSpec::PdeResidual { points, seed, tol, .. } => {
            let mut rng = ChaCha8Rng::seed_from_u64(*seed);
            let pole = vec![0.0; fund.n() + 1];
            let mut worst = 0.0f64;
            for _ in 0..*points {
                let s: f64 = rng.random_range(0.05..1.0);
                let g: Vec<f64> = (0..fund.n()).map(|_| rng.random_range(-1.5..1.5)).collect();
                let z = fund.whitened_point(&pole, s, &g)?;
                let h = fund.parabolic_steps(s, 1e-3);
                let u = |w: &[f64]| fund.value(w, &pole).unwrap_or(f64::NAN);
                let r = op.pde_residual(u, &z, &h, Form::Adjoint, None)?;
                worst = worst.max(r.relative());
            }
            CheckOutcome::new(id, "pde_residual", 0.0, worst, 0.0, worst <= *tol, Value::Null)
        }
        CheckSpec::Claim2 { r, k_lo, k_hi, tol, .. } => {
            let ball = LevelBall::envelope(fund.clone(), &vec![0.0; fund.n() + 1], *r)?;
            let eps: Vec<f64> = (*k_lo..=*k_hi).map(|k| 2f64.powi(-k)).collect();
            let rep = ball.claim2_decay(&eps);
            let last = rep.series.iter().map(|s| s.last()).fold(0.0, f64::max);
            CheckOutcome::new(id, "claim2", 0.0, last, 0.0, rep.passes(*tol), decay_json(&rep))
        }
        CheckSpec::MvfVolume {
            pole,
            r,
            solution,
            alpha,
            samples,
            seed,
            abs_tol,
            ..
        } => {
            let ball = LevelBall::envelope(fund.clone(), pole, *r)?;
            let sol = solution.prepare(fund)?;
            sol.check_ball(&ball)?;
            let k = KernelEval::for_ball(&ball, *alpha)?;
            let cfg = MCConfig::new(scaled(*samples, scale), *seed);
            let rep = mvf::volume_formula_rhs(&k, &|z: &[f64]| sol.u(z), &|z: &[f64]| sol.f(z), &ball, &cfg, *abs_tol)?;
            let e = rep.volume_estimate.as_ref().expect("volume estimate").total;
            CheckOutcome::new(id, "mvf_volume", rep.u_at_pole, e.value, e.std_error, rep.pass, serde_json::to_value(&rep)?)
        }
        CheckSpec::MvfSurface {
            pole,
            r,
            solution,
            samples,
            seed,
            abs_tol,
            h_rel,
            richardson,
            ..
        } => {
            let ball = LevelBall::envelope(fund.clone(), pole, *r)?;
            let sol = solution.prepare(fund)?;
            sol.check_ball(&ball)?;
            let k = KernelEval::for_ball(&ball, 2.0)?;
            let cfg = MCConfig::new(scaled(*samples, scale), *seed);
            let rep = mvf::surface_formula_rhs(
                &k,
                &|z: &[f64]| sol.u(z),
                &|z: &[f64]| sol.f(z),
                &ball,
                &cfg,
                *h_rel,
                *richardson,
                *abs_tol,
            )?;
            let e = rep.surface_estimate.as_ref().expect("surface estimate").total;
            CheckOutcome::new(id, "mvf_surface", rep.u_at_pole, e.value, e.std_error, rep.pass, serde_json::to_value(&rep)?)
        }
        CheckSpec::Divergence { pairs, degree, seed, tol, .. } => {
            let mut rng = ChaCha8Rng::seed_from_u64(*seed);
            let nv = op.dim() + 1;
            let mut worst = 0.0f64;
            let mut pass = true;
            for i in 0..*pairs {
                let u = mvf::random_poly(nv, *degree, &mut rng);
                let v = mvf::random_poly(nv, *degree, &mut rng);
                let r = mvf::divergence_identity_residual(op, &u, &v, 20, seed.wrapping_add(i as u64))?;
                worst = worst.max(r.residual / r.scale.max(f64::MIN_POSITIVE));
                pass &= r.passes(*tol);
            }
            CheckOutcome::new(id, "divergence", 0.0, worst, 0.0, pass, Value::Null)
        }
        CheckSpec::Reproduction {
            xi,
            eps,
            bump_radius,
            nodes,
            tol,
            ..
        } => {
            let rep = mvf::reproduction_limit(fund, |x: &[f64]| bump(x, *bump_radius), xi, eps, *nodes)?;
            let s = rep.get("error").expect("error series");
            let pass = s.non_increasing() && s.last() <= *tol;
            CheckOutcome::new(id, "reproduction", 0.0, s.last(), 0.0, pass, decay_json(&rep))
        }
        CheckSpec::ReachCone { slope, n, seed, .. } => {
            let dim = op.dim() + 1;
            let rep = reach::sample_attainable(
                op,
                &vec![0.0; dim],
                &BoxDomain::cube(dim, 1.0),
                *n,
                *seed,
                &SampleConfig::cone(*slope, 1.0),
            )?;
            CheckOutcome::new(
                id,
                "reach_cone",
                0.0,
                rep.violations as f64,
                0.0,
                rep.violations == 0,
                json!({ "samples": n, "exits": rep.exits }),
            )
        }
    })
}

/// Runs every check of `scenario`; a failing check is recorded, not fatal.
pub fn run(scenario: &Scenario, opts: &RunOptions) -> Result<Report> {
    let op = scenario.operator.build()?;
    let fund = Arc::new(Fundamental::new(&op)?);
    let go = || {
        let mut outs: Vec<CheckOutcome> = scenario
            .checks
            .iter()
            .map(|c| {
                run_check(&op, &fund, c, opts.samples_scale).unwrap_or_else(|e| CheckOutcome {
                    error: Some(e.to_string()),
                    ..CheckOutcome::new(c.id(), "error", f64::NAN, f64::NAN, f64::NAN, false, Value::Null)
                })
            })
            .collect();
        outs.sort_by(|a, b| a.id.cmp(&b.id));
        outs
    };
    let checks = match opts.threads {
        Some(t) => rayon::ThreadPoolBuilder::new()
            .num_threads(t.max(1))
            .build()
            .map_err(|e| Error::Config {
                field: "threads".into(),
                message: e.to_string(),
            })?
            .install(go),
        None => go(),
    };
    let stamp = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    Ok(Report {
        schema: SCHEMA_VERSION,
        scenario: scenario.id.clone(),
        operator: scenario.operator.clone(),
        all_pass: checks.iter().all(|c| c.pass),
        checks,
        metadata: json!({
            "version": env!("CARGO_PKG_VERSION"),
            "unix_time": stamp,
            "samples_scale": opts.samples_scale,
        }),
    })
}

/// What `run_scenario` did, with its exit code.
#[derive(Debug)]
pub struct RunOutcome {
    pub code: i32,
    pub report: Option<Report>,
    pub message: String,
}

/// Loads, runs and writes one scenario. Exit code 0 when every check
/// passes, 1 when one fails or errors, 2 for a bad config or output path.
pub fn run_scenario(path: &Path, out_dir: &Path, opts: &RunOptions) -> RunOutcome {
    let fail = |code, message: String| RunOutcome {
        code,
        report: None,
        message,
    };
    let text = match fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) => return fail(2, format!("{}: {e}", path.display())),
    };
    let sc = match Scenario::parse(&text) {
        Ok(s) => s,
        Err(e) => return fail(2, format!("{}: {e}", path.display())),
    };
    let report = match run(&sc, opts) {
        Ok(r) => r,
        Err(e) => return fail(2, e.to_string()),
    };
    if let Err(e) = write_report(&report, out_dir) {
        return fail(2, format!("{}: {e}", out_dir.display()));
    }
    let failed: Vec<&str> = report.checks.iter().filter(|c| !c.pass).map(|c| c.id.as_str()).collect();
    let message = if failed.is_empty() {
        format!("{}: {} checks passed", sc.id, report.checks.len())
    } else {
        format!("{}: failing checks {}", sc.id, failed.join(", "))
    };
    RunOutcome {
        code: report.exit_code(),
        report: Some(report),
        message,
    }
}

pub fn write_report(report: &Report, out_dir: &Path) -> std::io::Result<()> {
    fs::create_dir_all(out_dir)?;
    fs::write(out_dir.join("report.json"), serde_json::to_string_pretty(report)?)?;
    fs::write(out_dir.join("summary.csv"), report.summary_csv())
}

/// One field that differs between two reports.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FieldDiff {
    pub check: String,
    pub field: String,
    pub a: String,
    pub b: String,
}

/// Compares two reports check by check. `truth` must agree to `1e-12`
/// relative, `estimate` and `std_error` to `tol` relative (absolute below
/// one), `pass` exactly.
pub fn report_diff(a: &Report, b: &Report, tol: f64) -> Vec<FieldDiff> {
    let mut out = Vec::new();
    let mut push = |check: &str, field: &str, x: String, y: String| {
        out.push(FieldDiff {
            check: check.into(),
            field: field.into(),
            a: x,
            b: y,
        })
    };
    let close = |x: f64, y: f64, t: f64| (x.is_nan() && y.is_nan()) || (x - y).abs() <= t * x.abs().max(y.abs()).max(1.0);
    for ca in &a.checks {
        let Some(cb) = b.checks.iter().find(|c| c.id == ca.id) else {
            push(&ca.id, "present", "yes".into(), "no".into());
            continue;
        };
        if !close(ca.truth, cb.truth, 1e-12) {
            push(&ca.id, "truth", ca.truth.to_string(), cb.truth.to_string());
        }
        if !close(ca.estimate, cb.estimate, tol) {
            push(&ca.id, "estimate", ca.estimate.to_string(), cb.estimate.to_string());
        }
        if !close(ca.std_error, cb.std_error, tol) {
            push(&ca.id, "std_error", ca.std_error.to_string(), cb.std_error.to_string());
        }
        if ca.pass != cb.pass {
            push(&ca.id, "pass", ca.pass.to_string(), cb.pass.to_string());
        }
    }
    for cb in &b.checks {
        if !a.checks.iter().any(|c| c.id == cb.id) {
            push(&cb.id, "present", "no".into(), "yes".into());
        }
    }
    out
}

pub fn load_report(path: &Path) -> Result<Report> {
    let text = fs::read_to_string(path).map_err(|e| Error::Config {
        field: path.display().to_string(),
        message: e.to_string(),
    })?;
    Ok(serde_json::from_str(&text)?)
}
