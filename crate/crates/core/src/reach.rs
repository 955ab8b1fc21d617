//! Admissible curves `γ̇ = Σ ω_j X_j + X_{m+1}` of Kolmogorov frames, that
//! is `ẋ = Bx + Jω`, `ṫ = -1`; attainable-set sampling, minimum-energy
//! steering and the divergence of `Γ*` along curves.

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::group::BoxDomain;
use crate::kolmo::{Fundamental, OperatorSpec};

/// Piecewise-constant control on `[0, T]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ControlPath {
    pub breakpoints: Vec<f64>,
    pub omega: Vec<Vec<f64>>,
}

impl ControlPath {
    pub fn new(breakpoints: Vec<f64>, omega: Vec<Vec<f64>>) -> Result<Self> {
        let p = Self { breakpoints, omega };
        p.validate()?;
        Ok(p)
    }

    /// A single constant control on `[0, t]`.
    pub fn constant(t: f64, omega: Vec<f64>) -> Result<Self> {
        Self::new(vec![0.0, t], vec![omega])
    }

    /// The zero control, i.e. pure drift.
    pub fn drift(t: f64, m0: usize) -> Result<Self> {
        Self::constant(t, vec![0.0; m0])
    }

    pub fn validate(&self) -> Result<()> {
        let bp = &self.breakpoints;
        if bp.is_empty() || bp[0] != 0.0 {
            return Err(Error::Domain("breakpoints must start at 0".into()));
        }
        if bp.windows(2).any(|w| !(w[1] > w[0])) || bp.iter().any(|b| !b.is_finite()) {
            return Err(Error::Domain("breakpoints must be finite and strictly increasing".into()));
        }
        check_dim("control intervals", bp.len() - 1, self.omega.len())?;
        if let Some(w) = self.omega.first() {
            if self.omega.iter().any(|v| v.len() != w.len()) {
                return Err(Error::Domain("controls must share one dimension".into()));
            }
        }
        Ok(())
    }

    pub fn duration(&self) -> f64 {
        *self.breakpoints.last().unwrap_or(&0.0)
    }

    /// `Σ |ω_i|² Δt_i`.
    pub fn energy(&self) -> f64 {
        self.intervals().map(|(a, b, w)| (b - a) * w.iter().map(|x| x * x).sum::<f64>()).sum()
    }

    /// `∫_0^s |ω|`.
    pub fn l1_up_to(&self, s: f64) -> f64 {
        self.intervals()
            .map(|(a, b, w)| (b.min(s) - a).max(0.0) * w.iter().map(|x| x * x).sum::<f64>().sqrt())
            .sum()
    }

    /// The path restricted to `[0, s]`.
    pub fn truncate(&self, s: f64) -> Self {
        let mut bp = vec![0.0];
        let mut om = Vec::new();
        for (a, b, w) in self.intervals() {
            if a >= s {
                break;
            }
            bp.push(b.min(s));
            om.push(w.to_vec());
        }
        Self { breakpoints: bp, omega: om }
    }

    fn intervals(&self) -> impl Iterator<Item = (f64, f64, &[f64])> {
        self.breakpoints
            .windows(2)
            .zip(&self.omega)
            .map(|(w, o)| (w[0], w[1], o.as_slice()))
    }
}

/// Linear control system of a Kolmogorov operator.
#[derive(Clone, Debug)]
pub struct ControlSystem {
    n: usize,
    m0: usize,
    // B^p / p!
    powers: Vec<DMatrix<f64>>,
}

impl ControlSystem {
    pub fn new(op: &OperatorSpec) -> Result<Self> {
        op.validate()?;
        let b = op.kspec.drift_matrix().to_f64();
        let n = op.dim();
        let mut powers = vec![DMatrix::identity(n, n)];
        loop {
            let p = powers.len();
            let next = &b * powers.last().unwrap() / p as f64;
            if next.iter().all(|x| *x == 0.0) || p > n {
                break;
            }
            powers.push(next);
        }
        Ok(Self { n, m0: op.kspec.m0(), powers })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m0(&self) -> usize {
        self.m0
    }

    /// `e^{hB}`; the series terminates because `B` is nilpotent.
    pub fn flow(&self, h: f64) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(self.n, self.n);
        for (p, c) in self.powers.iter().enumerate() {
            out += c * h.powi(p as i32);
        }
        out
    }

    /// `∫_0^h e^{σB} dσ J`, the response to a unit constant control.
    pub fn input_response(&self, h: f64) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(self.n, self.n);
        for (p, c) in self.powers.iter().enumerate() {
            out += c * (h.powi(p as i32 + 1) / (p + 1) as f64);
        }
        out.columns(0, self.m0).into_owned()
    }

    fn step(&self, x: &DVector<f64>, w: &[f64], h: f64) -> DVector<f64> {
        self.flow(h) * x + self.input_response(h) * DVector::from_column_slice(w)
    }

    fn rate(&self, x: &DVector<f64>, w: &[f64]) -> DVector<f64> {
        let mut d = if self.powers.len() > 1 { &self.powers[1] * x } else { DVector::zeros(self.n) };
        for (j, wj) in w.iter().enumerate() {
            d[j] += wj;
        }
        d
    }

    /// Controllability Gramian `W(s) = ∫_0^s e^{σB} J Jᵀ e^{σBᵀ} dσ`,
    /// Gauss-Legendre (exact for the polynomial integrand).
    pub fn gramian(&self, s: f64) -> DMatrix<f64> {
        let rule = crate::quadrature::gauss_legendre(2 * self.powers.len() + 2, 0.0, s);
        let mut w = DMatrix::zeros(self.n, self.n);
        for (x, wt) in rule.nodes.iter().zip(&rule.weights) {
            let ej = self.flow(*x).columns(0, self.m0).into_owned();
            w += &ej * ej.transpose() * *wt;
        }
        w
    }
}

fn split(z: &[f64], n: usize) -> (DVector<f64>, f64) {
    (DVector::from_column_slice(&z[..n]), z[n])
}

fn join(x: &DVector<f64>, t: f64) -> Vec<f64> {
    let mut v: Vec<f64> = x.iter().copied().collect();
    v.push(t);
    v
}

fn check_path(sys: &ControlSystem, z0: &[f64], path: &ControlPath) -> Result<()> {
    check_dim("start point", sys.n + 1, z0.len())?;
    path.validate()?;
    if let Some(w) = path.omega.first() {
        check_dim("control", sys.m0, w.len())?;
    }
    Ok(())
}

/// Endpoint of the curve from `z0` by exact variation of constants on each
/// interval. With a domain, the first exit is located by sub-sampling and
/// bisection and reported as [`Error::DomainExit`].
pub fn integrate_curve(
    op: &OperatorSpec,
    z0: &[f64],
    path: &ControlPath,
    domain: Option<&BoxDomain>,
) -> Result<Vec<f64>> {
    let sys = ControlSystem::new(op)?;
    match trace(&sys, z0, path, domain)? {
        (z, None) => Ok(z),
        (z, Some(time)) => Err(Error::DomainExit { time, point: z }),
    }
}

// Endpoint, or the last point inside and the exit time.
fn trace(
    sys: &ControlSystem,
    z0: &[f64],
    path: &ControlPath,
    domain: Option<&BoxDomain>,
) -> Result<(Vec<f64>, Option<f64>)> {
    check_path(sys, z0, path)?;
    let (mut x, t0) = split(z0, sys.n);
    if let Some(d) = domain {
        if !d.contains(z0) {
            return Err(Error::Domain("curve starts outside the domain".into()));
        }
    }
    const SUB: usize = 16;
    for (a, b, w) in path.intervals() {
        if let Some(d) = domain {
            let at = |h: f64| join(&sys.step(&x, w, h), t0 - a - h);
            let mut prev = 0.0;
            for k in 1..=SUB {
                let h = (b - a) * k as f64 / SUB as f64;
                if !d.contains(&at(h)) {
                    let (mut lo, mut hi) = (prev, h);
                    for _ in 0..60 {
                        let mid = 0.5 * (lo + hi);
                        if d.contains(&at(mid)) {
                            lo = mid;
                        } else {
                            hi = mid;
                        }
                    }
                    return Ok((at(lo), Some(a + hi)));
                }
                prev = h;
            }
        }
        x = sys.step(&x, w, b - a);
    }
    Ok((join(&x, t0 - path.duration()), None))
}

/// The same endpoint by classical RK4 with `steps` steps per interval.
pub fn integrate_curve_rk4(op: &OperatorSpec, z0: &[f64], path: &ControlPath, steps: usize) -> Result<Vec<f64>> {
    let sys = ControlSystem::new(op)?;
    check_path(&sys, z0, path)?;
    let (mut x, t0) = split(z0, sys.n);
    for (a, b, w) in path.intervals() {
        let h = (b - a) / steps.max(1) as f64;
        for _ in 0..steps.max(1) {
            let k1 = sys.rate(&x, w);
            let k2 = sys.rate(&(&x + &k1 * (h / 2.0)), w);
            let k3 = sys.rate(&(&x + &k2 * (h / 2.0)), w);
            let k4 = sys.rate(&(&x + &k3 * h), w);
            x += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
        }
    }
    Ok(join(&x, t0 - path.duration()))
}

/// RK4 for a time-dependent control `ω(σ)` on `[0, t]`.
pub fn integrate_control_fn<W: Fn(f64) -> Vec<f64>>(
    op: &OperatorSpec,
    z0: &[f64],
    t: f64,
    omega: W,
    steps: usize,
) -> Result<Vec<f64>> {
    let sys = ControlSystem::new(op)?;
    check_dim("start point", sys.n + 1, z0.len())?;
    let (mut x, t0) = split(z0, sys.n);
    let h = t / steps.max(1) as f64;
    for i in 0..steps.max(1) {
        let s = i as f64 * h;
        let (w0, wm, w1) = (omega(s), omega(s + h / 2.0), omega(s + h));
        let k1 = sys.rate(&x, &w0);
        let k2 = sys.rate(&(&x + &k1 * (h / 2.0)), &wm);
        let k3 = sys.rate(&(&x + &k2 * (h / 2.0)), &wm);
        let k4 = sys.rate(&(&x + &k3 * h), &w1);
        x += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
    }
    Ok(join(&x, t0 - t))
}

/// Minimum-energy piecewise-constant control from `z0` to `target` on
/// `steps` equal intervals.
///
/// With `G_i` the response of interval `i`, the control
/// `ω_i = G_iᵀ W_d⁻¹ d / h` and `W_d = Σ G_i G_iᵀ / h` hits the target
/// exactly; `W_d` tends to the Gramian as `steps` grows.
pub fn steer_min_energy(op: &OperatorSpec, z0: &[f64], target: &[f64], steps: usize) -> Result<ControlPath> {
    steer_weighted(op, z0, target, &vec![1.0; steps.max(1)])
}

/// Minimises `Σ h|ω_i|²/w_i` subject to hitting `target`, one interval per
/// weight. Weights concentrated at both ends give a jump, plateau, jump
/// profile in the first block, which keeps curves inside boxes where the
/// uniform solution overshoots.
pub fn steer_weighted(op: &OperatorSpec, z0: &[f64], target: &[f64], weights: &[f64]) -> Result<ControlPath> {
    let sys = ControlSystem::new(op)?;
    check_dim("start point", sys.n + 1, z0.len())?;
    check_dim("target", sys.n + 1, target.len())?;
    if weights.is_empty() || weights.iter().any(|w| !(*w > 0.0) || !w.is_finite()) {
        return Err(Error::Domain("steering weights must be positive and finite".into()));
    }
    let (x0, t0) = split(z0, sys.n);
    let (x1, t1) = split(target, sys.n);
    let s = t0 - t1;
    if !(s > 0.0) {
        return Err(Error::Domain(format!("target time {t1} must lie below the start time {t0}")));
    }
    let steps = weights.len();
    let h = s / steps as f64;
    let resp = sys.input_response(h);
    let gs: Vec<DMatrix<f64>> = (0..steps).map(|i| sys.flow(s - (i + 1) as f64 * h) * &resp).collect();
    let mut wd = DMatrix::zeros(sys.n, sys.n);
    for (g, w) in gs.iter().zip(weights) {
        wd += g * g.transpose() * (*w / h);
    }
    let defect = x1 - sys.flow(s) * x0;
    let scale = wd.amax().max(f64::MIN_POSITIVE);
    let chol = Cholesky::new(&wd / scale).ok_or(Error::SingularGramian)?;
    if chol.l().diagonal().iter().any(|d| *d < 1e-9) {
        return Err(Error::SingularGramian);
    }
    let lambda = chol.solve(&defect) / scale;
    let omega = gs
        .iter()
        .zip(weights)
        .map(|(g, w)| (g.transpose() * &lambda * (*w / h)).iter().copied().collect())
        .collect();
    let breakpoints = (0..=steps).map(|i| if i == steps { s } else { i as f64 * h }).collect();
    ControlPath::new(breakpoints, omega)
}

/// Weights `1` on the first and last `k` of `steps` intervals, `floor` elsewhere.
pub fn end_weights(steps: usize, k: usize, floor: f64) -> Vec<f64> {
    (0..steps).map(|i| if i < k || i + k >= steps { 1.0 } else { floor }).collect()
}

/// Random controls for [`sample_attainable`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleConfig {
    /// Curve durations are uniform in `[0, horizon]`.
    pub horizon: f64,
    /// Each component's magnitude is uniform in `[0, omega_max]`.
    pub omega_max: f64,
    pub max_pieces: usize,
    /// Checks `|x_1| ≤ R(t_0 - t) + 1e-9` for this cone slope when set.
    pub cone: Option<f64>,
}

impl SampleConfig {
    /// Cone experiment with slope `r`: `ω_max = r/2`.
    pub fn cone(r: f64, horizon: f64) -> Self {
        Self {
            horizon,
            omega_max: r / 2.0,
            max_pieces: 8,
            cone: Some(r),
        }
    }
}

/// Endpoints of seeded random admissible curves.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReachSample {
    pub endpoints: Vec<Vec<f64>>,
    pub inside_cone: Vec<bool>,
    pub violations: usize,
    pub exits: usize,
}

impl ReachSample {
    /// `x…, t, inside_cone` per endpoint, 17 significant digits.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        if let Some(p) = self.endpoints.first() {
            let n = p.len() - 1;
            let cols: Vec<String> = (0..n).map(|i| format!("x{i}")).collect();
            out.push_str(&format!("{},t,inside_cone\n", cols.join(",")));
        }
        for (p, ok) in self.endpoints.iter().zip(&self.inside_cone) {
            let vals: Vec<String> = p.iter().map(|v| format!("{v:.16e}")).collect();
            out.push_str(&format!("{},{}\n", vals.join(","), u8::from(*ok)));
        }
        out
    }
}

fn in_cone(z0: &[f64], z: &[f64], slope: f64, n: usize) -> bool {
    n < 2 || (z[1] - z0[1]).abs() <= slope * (z0[n] - z[n]) + 1e-9
}

/// `n` curves from `z0` with bang-bang controls, each truncated where it
/// leaves `domain`. Curve `i` draws from its own counter stream, so the
/// result does not depend on the thread count.
pub fn sample_attainable(
    op: &OperatorSpec,
    z0: &[f64],
    domain: &BoxDomain,
    n: usize,
    seed: u64,
    cfg: &SampleConfig,
) -> Result<ReachSample> {
    let sys = ControlSystem::new(op)?;
    check_dim("start point", sys.n + 1, z0.len())?;
    if !domain.contains(z0) {
        return Err(Error::Domain("start point outside the domain".into()));
    }
    let results: Vec<Result<(Vec<f64>, bool)>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            let total = cfg.horizon * rng.random::<f64>();
            if total <= 0.0 {
                return Ok((z0.to_vec(), false));
            }
            let pieces = rng.random_range(1..=cfg.max_pieces.max(1));
            let mut cuts: Vec<f64> = (0..pieces - 1).map(|_| total * rng.random::<f64>()).collect();
            cuts.push(0.0);
            cuts.push(total);
            cuts.sort_by(f64::total_cmp);
            cuts.dedup();
            let omega = (1..cuts.len())
                .map(|_| {
                    (0..sys.m0)
                        .map(|_| {
                            let m = cfg.omega_max * rng.random::<f64>();
                            if rng.random::<bool>() {
                                m
                            } else {
                                -m
                            }
                        })
                        .collect()
                })
                .collect();
            let path = ControlPath::new(cuts, omega)?;
            let (z, exit) = trace(&sys, z0, &path, Some(domain))?;
            Ok((z, exit.is_some()))
        })
        .collect();
    let mut out = ReachSample {
        endpoints: Vec::with_capacity(n),
        inside_cone: Vec::with_capacity(n),
        violations: 0,
        exits: 0,
    };
    for r in results {
        let (z, exited) = r?;
        let ok = cfg.cone.is_none_or(|slope| in_cone(z0, &z, slope, sys.n));
        out.violations += usize::from(!ok);
        out.exits += usize::from(exited);
        out.inside_cone.push(ok);
        out.endpoints.push(z);
    }
    Ok(out)
}

/// Fraction of grid cells of `domain` whose centre lies in the shrunken
/// cone `|y| < shrink·R(t_0 - t)` and is reached by a steered curve that
/// stays in `domain`: uniform minimum energy first, then increasingly
/// end-weighted controls. Returns `(hit, cells)`.
pub fn cone_coverage(
    op: &OperatorSpec,
    z0: &[f64],
    domain: &BoxDomain,
    slope: f64,
    shrink: f64,
    per_axis: usize,
    steps: usize,
) -> Result<(usize, usize)> {
    let sys = ControlSystem::new(op)?;
    check_dim("start point", sys.n + 1, z0.len())?;
    let dim = sys.n + 1;
    let mut centres = Vec::new();
    crate::kolmo::tensor_for_each(dim, per_axis, |idx| {
        let c: Vec<f64> = idx
            .iter()
            .enumerate()
            .map(|(k, &i)| domain.lo[k] + (domain.hi[k] - domain.lo[k]) * (i as f64 + 0.5) / per_axis as f64)
            .collect();
        let s = z0[sys.n] - c[sys.n];
        if s > 0.0 && (c[1] - z0[1]).abs() < shrink * slope * s {
            centres.push(c);
        }
    });
    let hits: Vec<bool> = centres
        .par_iter()
        .map(|c| {
            let ladder = std::iter::once(vec![1.0; steps]).chain(
                [8, 16, 32, 64]
                    .iter()
                    .filter(|d| steps / **d >= 1)
                    .map(|d| end_weights(steps, steps / d, 1e-4)),
            );
            ladder.into_iter().any(|w| {
                steer_weighted(op, z0, c, &w)
                    .and_then(|p| integrate_curve(op, z0, &p, Some(domain)))
                    .is_ok_and(|z| z.iter().zip(c).all(|(a, b)| (a - b).abs() <= 1e-6))
            })
        })
        .collect();
    Ok((hits.iter().filter(|h| **h).count(), centres.len()))
}

/// `Γ*` and the control ratio along a curve as `s ↓ 0`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct H4Report {
    pub s: Vec<f64>,
    pub gamma: Vec<f64>,
    /// `(1/s)(∫_0^s |ω|)²`.
    pub ratio: Vec<f64>,
    /// Largest ladder value below which every `Γ*` exceeds `1/r`.
    pub s0: Option<f64>,
    pub pass: bool,
}

impl H4Report {
    /// `Γ*` grows along the ladder from index `from` on.
    pub fn eventually_increasing(&self, from: usize) -> bool {
        self.gamma[from.min(self.gamma.len())..].windows(2).all(|w| w[1] >= w[0])
    }
}

/// Follows `path` from `z` and records `Γ*(γ(s); z)` for `s` in the
/// decreasing ladder. Passes when the curve enters `Ω_r(z)` for all small
/// `s` and the ratio drops by at least `100×` across the ladder.
pub fn check_h4(fund: &Fundamental, z: &[f64], r: f64, path: &ControlPath, s_ladder: &[f64]) -> Result<H4Report> {
    let op = fund.op();
    let mut gamma = Vec::with_capacity(s_ladder.len());
    let mut ratio = Vec::with_capacity(s_ladder.len());
    for &s in s_ladder {
        if !(s > 0.0 && s <= path.duration()) {
            return Err(Error::Domain(format!("ladder value {s} outside (0, {}]", path.duration())));
        }
        let p = integrate_curve(op, z, &path.truncate(s), None)?;
        gamma.push(fund.value(&p, z)?);
        ratio.push(path.l1_up_to(s).powi(2) / s);
    }
    let mut s0 = None;
    for (i, &s) in s_ladder.iter().enumerate().rev() {
        if gamma[i] > 1.0 / r {
            s0 = Some(s);
        } else {
            break;
        }
    }
    let drop = match (ratio.first(), ratio.last()) {
        (Some(a), Some(b)) => *b <= 0.01 * a,
        _ => false,
    };
    Ok(H4Report {
        s: s_ladder.to_vec(),
        gamma,
        ratio,
        s0,
        pass: s0.is_some() && drop,
    })
}
