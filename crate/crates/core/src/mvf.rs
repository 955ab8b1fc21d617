//! Mean value kernels, the volume and surface formulas with their
//! correction terms, the divergence identity behind them and the
//! reproduction limit of the kernel.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::fields::kolmogorov_frame;
use crate::geometry::{DecayReport, LevelBall, Series};
use crate::integrate::{mc_region_integral, surface_via_derivative, Estimate, MCConfig, Region};
use crate::kolmo::{Form, Fundamental, OperatorSpec};
use crate::poly::Poly;

/// Kernel data for a fixed pole and exponent.
#[derive(Clone, Debug)]
pub struct KernelEval {
    fund: Arc<Fundamental>,
    pole: Vec<f64>,
    alpha: f64,
}

/// `K`, `M_α` and `Γ*` at one point.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Kernels {
    pub k: f64,
    pub m_alpha: f64,
    pub gamma: f64,
}

impl KernelEval {
    pub fn new(fund: Arc<Fundamental>, pole: &[f64], alpha: f64) -> Result<Self> {
        check_dim("pole", fund.n() + 1, pole.len())?;
        if !(alpha > 1.0 && alpha.is_finite()) {
            return Err(Error::Config {
                field: "alpha".into(),
                message: format!("{alpha} must exceed 1"),
            });
        }
        Ok(Self {
            fund,
            pole: pole.to_vec(),
            alpha,
        })
    }

    /// Kernel sharing the ball's operator and pole.
    pub fn for_ball(ball: &LevelBall, alpha: f64) -> Result<Self> {
        Self::new(ball.fundamental().clone(), ball.pole(), alpha)
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn pole(&self) -> &[f64] {
        &self.pole
    }

    pub fn fundamental(&self) -> &Arc<Fundamental> {
        &self.fund
    }

    /// `K = ⟨A∇_hΓ*, ∇_hΓ*⟩ / |∇_GΓ*|` and `M_α = ⟨A∇_hΓ*, ∇_hΓ*⟩ / Γ*^α`.
    ///
    /// The horizontal part uses the first `m_0` frame derivatives, the
    /// norm in `K` all `m_0 + 1`. Both vanish where the gradient does and
    /// outside the pole's past.
    pub fn eval(&self, z: &[f64]) -> Result<Kernels> {
        let ev = self.fund.eval(z, &self.pole)?;
        if ev.value == 0.0 {
            return Ok(Kernels {
                k: 0.0,
                m_alpha: 0.0,
                gamma: 0.0,
            });
        }
        let quad = self.log_quad(&ev.grad_log);
        let full = ev.grad_log.iter().map(|g| g * g).sum::<f64>().sqrt();
        let k = if full > 0.0 { ev.value * quad / full } else { 0.0 };
        Ok(Kernels {
            k,
            m_alpha: quad * ((2.0 - self.alpha) * ev.log_value).exp(),
            gamma: ev.value,
        })
    }

    // ⟨A g_h, g_h⟩ for the log-gradient g
    fn log_quad(&self, g: &[f64]) -> f64 {
        let a = self.fund.diffusion();
        let m0 = self.fund.m0();
        let mut q = 0.0;
        for i in 0..m0 {
            for j in 0..m0 {
                q += a[(i, j)] * g[i] * g[j];
            }
        }
        q.max(0.0)
    }
}

/// `(K, M_α)` at `z`.
pub fn kernel_eval(k: &KernelEval, z: &[f64]) -> Result<(f64, f64)> {
    let e = k.eval(z)?;
    Ok((e.k, e.m_alpha))
}

/// `∫_{1/γ}^{r} ϱ^p dϱ` written through `L = ln(rγ) ≥ 0`.
fn rho_power_integral(p: f64, r: f64, l: f64) -> f64 {
    let q = p + 1.0;
    if q.abs() < 1e-14 {
        l
    } else {
        -r.powf(q) * (-q * l).exp_m1() / q
    }
}

/// Which representation formula an estimate belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Formula {
    Volume,
    Surface,
}

impl Formula {
    pub fn as_str(&self) -> &'static str {
        match self {
            Formula::Volume => "volume",
            Formula::Surface => "surface",
        }
    }
}

/// One formula's right-hand side split into its parts.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FormulaEstimate {
    pub formula: Formula,
    pub alpha: f64,
    pub total: Estimate,
    /// The kernel term: `∫ M u` (volume) or `∫_ψ K u` (surface).
    pub main: Estimate,
    pub f_term: Estimate,
    /// The `(div b - c) u` term.
    pub c_term: Estimate,
    pub noisy: bool,
}

/// Representation-formula check against the known value at the pole.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MVFReport {
    pub u_at_pole: f64,
    pub volume_estimate: Option<FormulaEstimate>,
    pub surface_estimate: Option<FormulaEstimate>,
    pub abs_tol: f64,
    pub pass: bool,
}

impl MVFReport {
    fn new(u_at_pole: f64, abs_tol: f64) -> Self {
        Self {
            u_at_pole,
            volume_estimate: None,
            surface_estimate: None,
            abs_tol,
            pass: true,
        }
    }

    fn refresh(&mut self) {
        let ok = |e: &Option<FormulaEstimate>| {
            e.as_ref()
                .is_none_or(|e| e.total.agrees(self.u_at_pole, self.abs_tol))
        };
        self.pass = ok(&self.volume_estimate) && ok(&self.surface_estimate);
    }

    /// Combines a volume and a surface report for the same problem.
    pub fn merge(mut self, other: MVFReport) -> Self {
        if self.volume_estimate.is_none() {
            self.volume_estimate = other.volume_estimate;
        }
        if self.surface_estimate.is_none() {
            self.surface_estimate = other.surface_estimate;
        }
        self.abs_tol = self.abs_tol.max(other.abs_tol);
        self.refresh();
        self
    }

    /// Deviation from the truth in units of the tolerance used.
    pub fn worst_ratio(&self) -> f64 {
        [&self.volume_estimate, &self.surface_estimate]
            .iter()
            .filter_map(|e| e.as_ref())
            .map(|e| (e.total.value - self.u_at_pole).abs() / self.abs_tol.max(3.0 * e.total.std_error))
            .fold(0.0, f64::max)
    }

    /// `id,formula,truth,estimate,std_error,pass` rows, 17 significant digits.
    pub fn csv_rows(&self, id: &str) -> Vec<String> {
        let mut out = Vec::new();
        for e in [&self.volume_estimate, &self.surface_estimate].into_iter().flatten() {
            let pass = e.total.agrees(self.u_at_pole, self.abs_tol);
            out.push(format!(
                "{id},{},{:.16e},{:.16e},{:.16e},{}",
                e.formula.as_str(),
                self.u_at_pole,
                e.total.value,
                e.total.std_error,
                if pass { "pass" } else { "fail" }
            ));
        }
        out
    }
}

fn check_pole(k: &KernelEval, ball: &LevelBall) -> Result<()> {
    if k.pole.as_slice() != ball.pole() {
        return Err(Error::Config {
            field: "pole".into(),
            message: "kernel and ball poles differ".into(),
        });
    }
    Ok(())
}

/// Right-hand side of the volume formula with exponent `k.alpha()`.
///
/// The inner `ϱ`-integrals are done in closed form: `z ∈ Ω_ϱ` exactly when
/// `ϱ > 1/Γ*(z)`, so each of them is an integral of a power of `ϱ` over
/// `[1/Γ*(z), r]`.
pub fn volume_formula_rhs<U, F>(
    k: &KernelEval,
    u: &U,
    f: &F,
    ball: &LevelBall,
    cfg: &MCConfig,
    abs_tol: f64,
) -> Result<MVFReport>
where
    U: Fn(&[f64]) -> f64 + Sync,
    F: Fn(&[f64]) -> f64 + Sync,
{
    check_pole(k, ball)?;
    let r = ball.radius();
    let alpha = k.alpha;
    let pre = (alpha - 1.0) / r.powf(alpha - 1.0);
    let minus_c = -k.fund.c();
    let ln_r = r.ln();
    let g = |z: &[f64], out: &mut [f64]| {
        out.fill(0.0);
        let Ok(ev) = k.fund.eval(z, &k.pole) else {
            out[0] = f64::NAN;
            return;
        };
        let l = ln_r + ev.log_value;
        if !(l > 0.0) {
            return;
        }
        let uz = u(z);
        let m = k.log_quad(&ev.grad_log) * ((2.0 - alpha) * ev.log_value).exp();
        let i3 = rho_power_integral(alpha - 3.0, r, l);
        let wf = i3 - ev.value * rho_power_integral(alpha - 2.0, r, l);
        let main = pre * m * uz;
        let ft = pre * f(z) * wf;
        let ct = if minus_c != 0.0 { pre * minus_c * uz * i3 } else { 0.0 };
        out[0] = main;
        out[1] = ft;
        out[2] = ct;
        out[3] = main + ft + ct;
    };
    let v = mc_region_integral(&Region::ball(ball), 4, &g, cfg)?;
    let total = v[3];
    let mut rep = MVFReport::new(u(&k.pole), abs_tol);
    rep.volume_estimate = Some(FormulaEstimate {
        formula: Formula::Volume,
        alpha,
        total,
        main: v[0],
        f_term: v[1],
        c_term: v[2],
        noisy: total.std_error > total.value.abs(),
    });
    rep.refresh();
    Ok(rep)
}

/// Right-hand side of the surface formula.
///
/// The surface term is the `r`-derivative of `∫_{Ω_r} M_2 u`, which equals
/// `∫_{ψ_r} K u` by the coarea formula because `Γ*` is `1/r` on `ψ_r`.
#[allow(clippy::too_many_arguments)]
pub fn surface_formula_rhs<U, F>(
    k: &KernelEval,
    u: &U,
    f: &F,
    ball: &LevelBall,
    cfg: &MCConfig,
    h_rel: f64,
    richardson: bool,
    abs_tol: f64,
) -> Result<MVFReport>
where
    U: Fn(&[f64]) -> f64 + Sync,
    F: Fn(&[f64]) -> f64 + Sync,
{
    check_pole(k, ball)?;
    let r = ball.radius();
    let minus_c = -k.fund.c();
    let m_u = |z: &[f64]| match k.fund.eval(z, &k.pole) {
        Ok(ev) if ev.value > 0.0 => k.log_quad(&ev.grad_log) * u(z),
        Ok(_) => 0.0,
        Err(_) => f64::NAN,
    };
    let surf = surface_via_derivative(ball, &m_u, cfg, h_rel, richardson)?;
    let g = |z: &[f64], out: &mut [f64]| {
        out.fill(0.0);
        let Ok(gamma) = k.fund.value(z, &k.pole) else {
            out[0] = f64::NAN;
            return;
        };
        if !(gamma * r > 1.0) {
            return;
        }
        let ft = f(z) * (1.0 / r - gamma);
        let ct = if minus_c != 0.0 { minus_c * u(z) / r } else { 0.0 };
        out[0] = ft;
        out[1] = ct;
        out[2] = ft + ct;
    };
    let corr = mc_region_integral(&Region::ball(ball), 3, &g, &cfg.with_seed(cfg.seed ^ 0x5EED_F00D))?;
    let main = surf.estimate;
    let both = corr[2];
    let total = Estimate {
        value: main.value + both.value,
        std_error: (main.std_error.powi(2) + both.std_error.powi(2)).sqrt(),
        n: main.n + both.n,
        seed: cfg.seed,
    };
    let mut rep = MVFReport::new(u(&k.pole), abs_tol);
    rep.surface_estimate = Some(FormulaEstimate {
        formula: Formula::Surface,
        alpha: 2.0,
        total,
        main,
        f_term: corr[0],
        c_term: corr[1],
        noisy: surf.noisy || total.std_error > total.value.abs(),
    });
    rep.refresh();
    Ok(rep)
}

/// Built-in exact solutions of `ℒu = f`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Solution {
    /// `u ≡ value`.
    Const { value: f64 },
    /// `u = x_index`.
    Coord { index: usize },
    /// `u = x_1 + x_0 t`.
    YPlusXt,
    /// `u = x_0² + 2t`.
    X2Plus2t,
    /// `u = Γ(·; zeta)`, a translated fundamental solution.
    GammaPole { zeta: Vec<f64> },
}

/// A [`Solution`] bound to an operator, with its forcing `f = ℒu`.
#[derive(Clone, Debug)]
pub enum Prepared {
    Poly { u: Poly<f64>, f: Poly<f64> },
    Gamma { fund: Arc<Fundamental>, zeta: Vec<f64> },
}

impl Solution {
    pub fn id(&self) -> &'static str {
        match self {
            Solution::Const { .. } => "const",
            Solution::Coord { .. } => "x_i",
            Solution::YPlusXt => "y_plus_xt",
            Solution::X2Plus2t => "x2_plus_2t",
            Solution::GammaPole { .. } => "gamma_pole",
        }
    }

    pub fn polynomial(&self, nvars: usize) -> Result<Option<Poly<f64>>> {
        let need = |k: usize| -> Result<()> {
            if nvars < k {
                Err(Error::DimensionMismatch {
                    what: "solution variables",
                    expected: k,
                    got: nvars,
                })
            } else {
                Ok(())
            }
        };
        let t = nvars - 1;
        Ok(Some(match self {
            Solution::Const { value } => Poly::constant(nvars, *value),
            Solution::Coord { index } => {
                need(index + 2)?;
                Poly::var(nvars, *index)
            }
            Solution::YPlusXt => {
                need(3)?;
                &Poly::var(nvars, 1) + &(&Poly::var(nvars, 0) * &Poly::var(nvars, t))
            }
            Solution::X2Plus2t => {
                need(2)?;
                let x = Poly::var(nvars, 0);
                &(&x * &x) + &Poly::var(nvars, t).scale(&2.0)
            }
            Solution::GammaPole { .. } => return Ok(None),
        }))
    }

    pub fn prepare(&self, fund: &Arc<Fundamental>) -> Result<Prepared> {
        let nv = fund.n() + 1;
        if let Some(u) = self.polynomial(nv)? {
            let f = fund.op().apply_poly(&u, Form::Direct);
            return Ok(Prepared::Poly { u, f });
        }
        let Solution::GammaPole { zeta } = self else { unreachable!() };
        check_dim("zeta", nv, zeta.len())?;
        Ok(Prepared::Gamma {
            fund: fund.clone(),
            zeta: zeta.clone(),
        })
    }
}

impl Prepared {
    pub fn u(&self, z: &[f64]) -> f64 {
        match self {
            Prepared::Poly { u, .. } => u.eval(z),
            Prepared::Gamma { fund, zeta } => fund.value(zeta, z).unwrap_or(f64::NAN),
        }
    }

    pub fn f(&self, z: &[f64]) -> f64 {
        match self {
            Prepared::Poly { f, .. } => f.eval(z),
            Prepared::Gamma { .. } => 0.0,
        }
    }

    /// Rejects a pole solution whose singularity is within `0.1 Δ` of the ball.
    pub fn check_ball(&self, ball: &LevelBall) -> Result<()> {
        if let Prepared::Gamma { zeta, fund } = self {
            let n = fund.n();
            let d = ball.time_extent();
            let lowest = ball.pole_time() - d;
            if !(zeta[n] < lowest - 0.1 * d) {
                return Err(Error::Config {
                    field: "zeta".into(),
                    message: format!(
                        "pole time {} must lie below {} (ball bottom {lowest} minus 0.1 of its extent)",
                        zeta[n],
                        lowest - 0.1 * d
                    ),
                });
            }
        }
        Ok(())
    }
}

/// Residual of `uℒ*v - vℒu = Σ_j X_jΦ_j + X_{m+1}Φ_{m+1}` with
/// `Φ = (uA∇v - vA∇u - uvb, -uv)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DivergenceCheck {
    pub residual: f64,
    pub scale: f64,
}

impl DivergenceCheck {
    pub fn passes(&self, rel: f64) -> bool {
        self.residual <= rel * self.scale
    }
}

/// Both sides expanded exactly, compared at `samples` seeded points of `[-1, 1]^{N+1}`.
pub fn divergence_identity_residual(
    op: &OperatorSpec,
    u: &Poly<f64>,
    v: &Poly<f64>,
    samples: usize,
    seed: u64,
) -> Result<DivergenceCheck> {
    let n = op.dim();
    let nv = n + 1;
    check_dim("u variables", nv, u.nvars())?;
    check_dim("v variables", nv, v.nvars())?;
    let frame = kolmogorov_frame(&op.kspec);
    let m0 = op.kspec.m0();
    let a = op.diffusion_matrix();
    let b = op.drift_b();
    let xu: Vec<Poly<f64>> = frame.fields[..m0].iter().map(|x| x.apply_f64(u)).collect();
    let xv: Vec<Poly<f64>> = frame.fields[..m0].iter().map(|x| x.apply_f64(v)).collect();
    let uv = u * v;
    let lhs_a = u * &op.apply_poly(v, Form::Adjoint);
    let lhs_b = v * &op.apply_poly(u, Form::Direct);
    let mut rhs = frame.fields[m0].apply_f64(&uv.scale(&-1.0));
    for j in 0..m0 {
        let mut phi = Poly::zero(nv);
        for k in 0..m0 {
            if a[(j, k)] != 0.0 {
                phi = &phi + &(&(u * &xv[k]) - &(v * &xu[k])).scale(&a[(j, k)]);
            }
        }
        if b[j] != 0.0 {
            phi = &phi - &uv.scale(&b[j]);
        }
        rhs = &rhs + &frame.fields[j].apply_f64(&phi);
    }
    let diff = &(&lhs_a - &lhs_b) - &rhs;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut residual = 0.0f64;
    let mut scale = 0.0f64;
    let mut z = vec![0.0; nv];
    for _ in 0..samples.max(1) {
        for zi in z.iter_mut() {
            *zi = rng.random_range(-1.0..1.0);
        }
        residual = residual.max(diff.eval(&z).abs());
        scale = scale.max(lhs_a.eval(&z).abs() + lhs_b.eval(&z).abs() + rhs.eval(&z).abs());
    }
    Ok(DivergenceCheck { residual, scale })
}

/// Dense polynomial of total degree `degree` with coefficients uniform in `[-1, 1]`.
pub fn random_poly<R: Rng>(nvars: usize, degree: u32, rng: &mut R) -> Poly<f64> {
    let mut p = Poly::zero(nvars);
    let mut e = vec![0u32; nvars];
    fn rec<R: Rng>(p: &mut Poly<f64>, e: &mut Vec<u32>, i: usize, left: u32, rng: &mut R) {
        if i == e.len() {
            p.add_term(e.clone(), rng.random_range(-1.0..1.0));
            return;
        }
        for d in 0..=left {
            e[i] = d;
            rec(p, e, i + 1, left - d, rng);
        }
        e[i] = 0;
    }
    rec(&mut p, &mut e, 0, degree, rng);
    p
}

/// Smooth bump `exp(1 - 1/(1 - |x|²/R²))` with peak 1, supported in `|x| < R`.
pub fn bump(x: &[f64], radius: f64) -> f64 {
    let q = x.iter().map(|v| v * v).sum::<f64>() / (radius * radius);
    if q >= 1.0 {
        0.0
    } else {
        (1.0 - 1.0 / (1.0 - q)).exp()
    }
}

/// `|∫Γ*(ξ, t-ε; x, t) φ(x) dx - φ(ξ)|` along the ladder, as series `"error"`.
pub fn reproduction_limit<P: Fn(&[f64]) -> f64>(
    fund: &Fundamental,
    phi: P,
    xi: &[f64],
    eps_ladder: &[f64],
    nodes: usize,
) -> Result<DecayReport> {
    check_dim("base point", fund.n(), xi.len())?;
    let target = phi(xi);
    let mut errs = Vec::with_capacity(eps_ladder.len());
    for &eps in eps_ladder {
        if !(eps > 0.0) {
            return Err(Error::Domain(format!("ladder value {eps} must be positive")));
        }
        errs.push((fund.smooth_against(&phi, xi, eps, nodes)? - target).abs());
    }
    Ok(DecayReport::new(eps_ladder.to_vec(), vec![Series::new("error", errs)]))
}
