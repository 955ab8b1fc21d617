//! Integration over superlevel sets and the shells between two of them.
//!
//! Time is handled by a tanh-sinh rule in `y = ln(b/s)` on each piece of
//! the time range; every time node is a slice ellipsoid sampled uniformly
//! (radial inverse CDF on shells). Batches use counter-based streams keyed
//! by `(batch, node)`, so results do not depend on the worker count.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{log_unit_ball_volume, LevelBall};
use crate::quadrature::tanh_sinh;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MCConfig {
    pub samples: usize,
    pub seed: u64,
    /// Target number of time nodes per piece of the time range.
    #[serde(default = "default_slices")]
    pub stratify_slices: usize,
    #[serde(default)]
    pub antithetic: bool,
    #[serde(default = "default_batches")]
    pub batches: usize,
    /// Excluded layer `t ∈ (t₀ - guard_rel·Δ, t₀)`.
    #[serde(default = "default_guard")]
    pub guard_rel: f64,
}

fn default_slices() -> usize {
    96
}

fn default_batches() -> usize {
    64
}

fn default_guard() -> f64 {
    1e-8
}

impl MCConfig {
    pub fn new(samples: usize, seed: u64) -> Self {
        Self {
            samples,
            seed,
            stratify_slices: default_slices(),
            antithetic: false,
            batches: default_batches(),
            guard_rel: default_guard(),
        }
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        Self { seed, ..self.clone() }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, message: &str| {
            Err(Error::Config {
                field: field.into(),
                message: message.into(),
            })
        };
        if self.batches < 2 {
            return bad("batches", "need at least 2 batches");
        }
        if self.samples < self.batches {
            return bad("samples", "fewer samples than batches");
        }
        if self.stratify_slices < 4 {
            return bad("stratify_slices", "need at least 4 time nodes");
        }
        if !(self.guard_rel > 0.0 && self.guard_rel < 0.5) {
            return bad("guard_rel", "must lie in (0, 0.5)");
        }
        Ok(())
    }
}

/// Monte-Carlo value with its batch standard error.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub std_error: f64,
    pub n: usize,
    pub seed: u64,
}

impl Estimate {
    pub fn exact(value: f64) -> Self {
        Self {
            value,
            std_error: 0.0,
            n: 0,
            seed: 0,
        }
    }

    pub fn scale(&self, c: f64) -> Self {
        Self {
            value: self.value * c,
            std_error: self.std_error * c.abs(),
            ..*self
        }
    }

    /// Sum of independent or fully dependent parts; the error is added
    /// linearly, which bounds both cases.
    pub fn plus(&self, o: &Estimate) -> Self {
        Self {
            value: self.value + o.value,
            std_error: self.std_error + o.std_error,
            n: self.n + o.n,
            seed: self.seed,
        }
    }

    /// `|value - truth| ≤ max(abs_tol, 3σ)`.
    pub fn agrees(&self, truth: f64, abs_tol: f64) -> bool {
        (self.value - truth).abs() <= abs_tol.max(3.0 * self.std_error)
    }
}

/// Region `Ω_{r_out} ∖ Ω_{r_in}` (`r_in = 0` gives the whole ball).
#[derive(Clone, Debug)]
pub struct Region {
    outer: LevelBall,
    inner: Option<LevelBall>,
}

impl Region {
    pub fn ball(ball: &LevelBall) -> Self {
        Self {
            outer: ball.clone(),
            inner: None,
        }
    }

    pub fn shell(ball: &LevelBall, r_in: f64, r_out: f64) -> Result<Self> {
        if !(0.0 < r_in && r_in < r_out) {
            return Err(Error::Domain(format!("shell radii {r_in} < {r_out} required")));
        }
        Ok(Self {
            outer: ball.with_radius(r_out)?,
            inner: Some(ball.with_radius(r_in)?),
        })
    }

    pub fn outer(&self) -> &LevelBall {
        &self.outer
    }
}

struct Node {
    id: u64,
    s: f64,
    weight: f64,
    rho_in: f64,
    rho_out: f64,
    base: DVector<f64>,
    einv: DMatrix<f64>,
    chol: DMatrix<f64>,
}

impl Node {
    fn new(region: &Region, id: u64, s: f64, weight: f64) -> Self {
        let ball = &region.outer;
        let f = ball.fundamental();
        let n = f.n();
        let rho_out = ball.slice_radius2(s).max(0.0).sqrt();
        let rho_in = region
            .inner
            .as_ref()
            .map_or(0.0, |b| b.slice_radius2(s).max(0.0).sqrt());
        let mut base = DVector::from_column_slice(&ball.pole()[..n]);
        if f.op().kspec.is_heat() {
            base += f.drift_b() * s;
        }
        Self {
            id,
            s,
            weight,
            rho_in,
            rho_out,
            base,
            einv: f.expm(-s),
            chol: f.scaled_chol(s).expect("positive gap"),
        }
    }

    /// Lebesgue measure of the slice piece.
    fn measure(&self, n: usize, logdet: f64) -> f64 {
        let nn = n as i32;
        let shell = self.rho_out.powi(nn) - self.rho_in.powi(nn);
        if shell <= 0.0 {
            return 0.0;
        }
        shell * (log_unit_ball_volume(n) + 0.5 * logdet).exp()
    }

    // uniform direction and a radius uniform in the shell's N-volume
    fn draw(&self, rng: &mut ChaCha8Rng, n: usize, lo: f64, hi: f64) -> (DVector<f64>, f64) {
        let mut dir = DVector::from_iterator(n, (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)));
        let norm = dir.norm();
        dir /= norm;
        let u: f64 = rng.random();
        (dir, (lo + u * (hi - lo)).powf(1.0 / n as f64))
    }

    fn sample(&self, rng: &mut ChaCha8Rng, n: usize, t_pole: f64) -> Vec<f64> {
        let nn = n as i32;
        let (dir, radius) = self.draw(rng, n, self.rho_in.powi(nn), self.rho_out.powi(nn));
        self.point(&dir, radius, t_pole)
    }

    fn point(&self, dir: &DVector<f64>, radius: f64, t_pole: f64) -> Vec<f64> {
        let y = &self.chol * dir * radius;
        let xi = &self.einv * (&self.base - y);
        let mut z: Vec<f64> = xi.iter().copied().collect();
        z.push(t_pole - self.s);
        z
    }
}

const PILOT: usize = 16;
const PILOT_STREAM: u64 = 0xFFFF_FFFF;

fn time_nodes(a: f64, b: f64, target: usize) -> Vec<(f64, f64)> {
    let ymax = (b / a).ln();
    let h = 8.0 / target as f64;
    let rule = tanh_sinh(0.0, ymax, h);
    rule.nodes
        .iter()
        .zip(&rule.weights)
        .filter(|(_, &w)| w > 1e-18 * ymax)
        .map(|(&y, &w)| {
            let s = b * (-y).exp();
            (s, w * s)
        })
        .collect()
}

/// Per-batch sums, the two guard-layer densities, and the sample count.
type BatchOut = (Vec<f64>, [Vec<f64>; 2], usize);

/// Integrates a vector-valued `f(z, out)` over `region`.
///
/// Returns one [`Estimate`] per output. A non-finite sample aborts with an
/// error naming the point.
pub fn mc_region_integral<F>(region: &Region, outputs: usize, f: &F, cfg: &MCConfig) -> Result<Vec<Estimate>>
where
    F: Fn(&[f64], &mut [f64]) + Sync,
{
    cfg.validate()?;
    let ball = &region.outer;
    let fund = ball.fundamental();
    let n = fund.n();
    let t_pole = ball.pole_time();
    let delta = ball.time_extent();
    let guard = cfg.guard_rel * delta;

    // time pieces; the inner ball's extent is a kink of the slice measure
    let mut pieces = Vec::new();
    match &region.inner {
        Some(inner) => {
            let d_in = inner.time_extent();
            pieces.push((guard, d_in));
            pieces.push((d_in, delta));
        }
        None => pieces.push((guard, delta)),
    }
    let mut nodes = Vec::new();
    for &(a, b) in &pieces {
        let target = cfg.stratify_slices;
        for (s, w) in time_nodes(a, b, target) {
            let id = nodes.len() as u64;
            nodes.push(Node::new(region, id, s, w));
        }
    }
    // two slices inside the guard for the power-law extrapolation
    let guard_nodes: Vec<Node> = [guard, 0.5 * guard]
        .iter()
        .enumerate()
        .map(|(i, &s)| Node::new(region, (nodes.len() + i) as u64, s, 0.0))
        .collect();

    let per_batch = cfg.samples / cfg.batches;
    // Neyman allocation from a seeded pilot on a stream of its own
    let scores: Vec<f64> = nodes
        .par_iter()
        .map(|nd| -> Result<f64> {
            let vol = nd.weight * nd.measure(n, fund.logdet_cov(nd.s));
            if vol <= 0.0 {
                return Ok(0.0);
            }
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream((PILOT_STREAM << 32) | nd.id);
            let mut buf = vec![0.0; outputs];
            let (mut m1, mut m2) = (0.0, 0.0);
            for _ in 0..PILOT {
                let z = nd.sample(&mut rng, n, t_pole);
                f(&z, &mut buf);
                let v: f64 = buf.iter().map(|x| x.abs()).sum();
                if !v.is_finite() {
                    return Err(Error::NonFinite { value: v, point: z });
                }
                m1 += v;
                m2 += v * v;
            }
            let mean = m1 / PILOT as f64;
            let sd = (m2 / PILOT as f64 - mean * mean).max(0.0).sqrt();
            Ok(vol * (sd + 0.05 * mean))
        })
        .collect::<Result<_>>()?;
    let total_score: f64 = scores.iter().sum();
    let masses: Vec<f64> = nodes
        .iter()
        .map(|nd| nd.weight * nd.measure(n, fund.logdet_cov(nd.s)))
        .collect();
    let total_mass: f64 = masses.iter().sum();
    let counts: Vec<usize> = masses
        .iter()
        .zip(&scores)
        .map(|(m, sc)| {
            if *m <= 0.0 {
                0
            } else {
                let share = if total_score > 0.0 { sc / total_score } else { m / total_mass };
                ((per_batch as f64) * share).round().max(1.0) as usize
            }
        })
        .collect();
    let guard_count = (per_batch / 200).max(16);

    let batch_results: Vec<Result<BatchOut>> = (0..cfg.batches)
        .into_par_iter()
        .map(|batch| {
            let mut sums = vec![0.0; outputs];
            let mut used = 0usize;
            let mut buf = vec![0.0; outputs];
            let mut slice_mean = |nd: &Node, count: usize, out: &mut [f64]| -> Result<()> {
                out.iter_mut().for_each(|v| *v = 0.0);
                let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
                rng.set_stream(((batch as u64) << 32) | nd.id);
                let nn = n as i32;
                let (lo, hi) = (nd.rho_in.powi(nn), nd.rho_out.powi(nn));
                let mut evals = 0usize;
                for _ in 0..count {
                    let (dir, radius) = nd.draw(&mut rng, n, lo, hi);
                    let signs: &[f64] = if cfg.antithetic { &[1.0, -1.0] } else { &[1.0] };
                    for &sg in signs {
                        let z = nd.point(&(&dir * sg), radius, t_pole);
                        f(&z, &mut buf);
                        for (k, v) in buf.iter().enumerate() {
                            if !v.is_finite() {
                                return Err(Error::NonFinite { value: *v, point: z });
                            }
                            out[k] += v;
                        }
                        evals += 1;
                    }
                }
                let scale = 1.0 / evals.max(1) as f64;
                out.iter_mut().for_each(|v| *v *= scale);
                used += evals;
                Ok(())
            };
            let mut mean = vec![0.0; outputs];
            for (nd, &count) in nodes.iter().zip(&counts) {
                if count == 0 {
                    continue;
                }
                slice_mean(nd, count, &mut mean)?;
                let vol = nd.measure(n, fund.logdet_cov(nd.s));
                for k in 0..outputs {
                    sums[k] += nd.weight * vol * mean[k];
                }
            }
            // slice densities g(s) at the guard and half of it
            let mut g = [vec![0.0; outputs], vec![0.0; outputs]];
            for (i, nd) in guard_nodes.iter().enumerate() {
                let vol = nd.measure(n, fund.logdet_cov(nd.s));
                if vol > 0.0 {
                    slice_mean(nd, guard_count, &mut mean)?;
                    for k in 0..outputs {
                        g[i][k] = vol * mean[k];
                    }
                }
            }
            Ok((sums, g, used))
        })
        .collect();

    let mut per_batch_vals = vec![Vec::with_capacity(cfg.batches); outputs];
    let mut guard_vals = Vec::with_capacity(cfg.batches);
    let mut used_total = 0;
    for res in batch_results {
        let (sums, g, used) = res?;
        used_total += used;
        for k in 0..outputs {
            per_batch_vals[k].push(sums[k]);
        }
        guard_vals.push(g);
    }
    // the exponent is fitted once from the pooled densities, so each batch's
    // share of the excluded mass stays linear in its own samples
    let mut excl_mean = vec![0.0f64; outputs];
    for k in 0..outputs {
        let pooled = |i: usize| guard_vals.iter().map(|g| g[i][k]).sum::<f64>() / cfg.batches as f64;
        let factor = power_law_factor(pooled(0), pooled(1)) * guard;
        for (b, g) in guard_vals.iter().enumerate() {
            let e = g[0][k] * factor;
            per_batch_vals[k][b] += e;
            excl_mean[k] += e / cfg.batches as f64;
        }
    }
    Ok((0..outputs)
        .map(|k| {
            let v = &per_batch_vals[k];
            let b = v.len() as f64;
            let mean = v.iter().sum::<f64>() / b;
            let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (b - 1.0);
            Estimate {
                value: mean,
                std_error: (var / b).sqrt() + 0.1 * excl_mean[k].abs(),
                n: used_total,
                seed: cfg.seed,
            }
        })
        .collect())
}

// ∫_0^ε g = g(ε) ε · factor for g(s) ≈ a s^p fitted through g(ε) and g(ε/2).
fn power_law_factor(g_eps: f64, g_half: f64) -> f64 {
    let p = if g_eps * g_half > 0.0 {
        ((g_eps / g_half).ln() / std::f64::consts::LN_2).clamp(-0.95, 20.0)
    } else {
        0.0
    };
    1.0 / (p + 1.0)
}

/// `∫_{Ω_r} f dz` for a scalar integrand.
pub fn mc_volume_integral<F>(ball: &LevelBall, f: &F, cfg: &MCConfig) -> Result<Estimate>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    let g = |z: &[f64], out: &mut [f64]| out[0] = f(z);
    Ok(mc_region_integral(&Region::ball(ball), 1, &g, cfg)?[0])
}

/// Derivative of `F(ϱ) = ∫_{Ω_ϱ} g dz` at `ϱ = r`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SurfaceEstimate {
    pub estimate: Estimate,
    /// The standard error exceeds the magnitude of the estimate.
    pub noisy: bool,
}

/// `[F(r(1+h)) - F(r(1-h))] / (2rh)` computed as one shell integral, so
/// the two volumes share their random numbers; with `richardson` the step
/// is halved once and combined as `(4 D(h/2) - D(h)) / 3`.
pub fn surface_via_derivative<F>(
    ball: &LevelBall,
    g: &F,
    cfg: &MCConfig,
    h_rel: f64,
    richardson: bool,
) -> Result<SurfaceEstimate>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    if !(h_rel > 0.0 && h_rel <= 0.1) {
        return Err(Error::Config {
            field: "h_rel".into(),
            message: format!("{h_rel} outside (0, 0.1]"),
        });
    }
    let r = ball.radius();
    let diff = |h: f64, cfg: &MCConfig| -> Result<Estimate> {
        let region = Region::shell(ball, r * (1.0 - h), r * (1.0 + h))?;
        let f = |z: &[f64], out: &mut [f64]| out[0] = g(z);
        Ok(mc_region_integral(&region, 1, &f, cfg)?[0].scale(1.0 / (2.0 * r * h)))
    };
    let d1 = diff(h_rel, cfg)?;
    let estimate = if richardson {
        let d2 = diff(0.5 * h_rel, &cfg.with_seed(cfg.seed.wrapping_add(0x9E37_79B9)))?;
        Estimate {
            value: (4.0 * d2.value - d1.value) / 3.0,
            std_error: ((16.0 * d2.std_error.powi(2) + d1.std_error.powi(2)).sqrt()) / 3.0,
            n: d1.n + d2.n,
            seed: cfg.seed,
        }
    } else {
        d1
    };
    Ok(SurfaceEstimate {
        noisy: estimate.std_error > estimate.value.abs(),
        estimate,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kolmo::{Fundamental, KolmogorovSpec, OperatorSpec};
    use std::sync::Arc;

    fn heat_ball(n: usize, r: f64) -> LevelBall {
        let f = Arc::new(Fundamental::new(&OperatorSpec::heat(n)).unwrap());
        LevelBall::envelope(f, &vec![0.0; n + 1], r).unwrap()
    }

    // tensor-grid midpoint oracle for the heat ball volume
    fn grid_volume(ball: &LevelBall, nt: usize, nx: usize) -> f64 {
        let d = ball.time_extent();
        let mut vol = 0.0;
        for i in 0..nt {
            let s = d * (i as f64 + 0.5) / nt as f64;
            let (c, h) = match ball.slice_box(s) {
                Some(b) => b,
                None => continue,
            };
            let dx = 2.0 * h[0] / nx as f64;
            for j in 0..nx {
                let x = c[0] - h[0] + dx * (j as f64 + 0.5);
                if ball.contains(&[x, -s]) {
                    vol += dx * d / nt as f64;
                }
            }
        }
        vol
    }

    #[test]
    fn heat_ball_volume_matches_grid() {
        let ball = heat_ball(1, 1.0);
        let est = mc_volume_integral(&ball, &|_| 1.0, &MCConfig::new(20_000, 1)).unwrap();
        let grid = grid_volume(&ball, 2000, 2000);
        assert!((est.value - grid).abs() < 3.0 * est.std_error + 2e-5, "{est:?} vs {grid}");
        // constant integrands are exact up to the time rule
        let d: f64 = ball.time_extent();
        let closed = 2.0 * 2f64.sqrt() * d.powf(1.5) * (std::f64::consts::PI.sqrt() / 2.0) / 1.5f64.powf(1.5);
        assert!((est.value - closed).abs() < 1e-10, "{} vs {closed}", est.value);
    }

    #[test]
    fn odd_integrand_vanishes() {
        let ball = heat_ball(2, 1.0);
        let est = mc_volume_integral(&ball, &|z| z[0], &MCConfig::new(50_000, 3)).unwrap();
        assert!(est.value.abs() < 3.0 * est.std_error + 1e-12, "{est:?}");
        let mut cfg = MCConfig::new(50_000, 3);
        cfg.antithetic = true;
        let est = mc_volume_integral(&ball, &|z| z[0], &cfg).unwrap();
        assert!(est.value.abs() < 1e-12);
    }

    #[test]
    fn deterministic_for_fixed_seed() {
        let ball = heat_ball(1, 1.0);
        let f = |z: &[f64]| z[0] * z[0] + z[1];
        let a = mc_volume_integral(&ball, &f, &MCConfig::new(10_000, 42)).unwrap();
        let b = mc_volume_integral(&ball, &f, &MCConfig::new(10_000, 42)).unwrap();
        assert_eq!(a.value.to_bits(), b.value.to_bits());
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let c = pool.install(|| mc_volume_integral(&ball, &f, &MCConfig::new(10_000, 42)).unwrap());
        assert_eq!(a.value.to_bits(), c.value.to_bits());
        let d = mc_volume_integral(&ball, &f, &MCConfig::new(10_000, 43)).unwrap();
        assert_ne!(a.value, d.value);
    }

    #[test]
    fn nonfinite_integrand_is_reported() {
        let ball = heat_ball(1, 1.0);
        let err = mc_volume_integral(&ball, &|_| f64::NAN, &MCConfig::new(1000, 1)).unwrap_err();
        assert!(matches!(err, Error::NonFinite { .. }));
    }

    #[test]
    fn shell_matches_difference_of_volumes() {
        let f = Arc::new(Fundamental::new(&OperatorSpec::model(KolmogorovSpec::chain(&[1, 1]).unwrap())).unwrap());
        let ball = LevelBall::envelope(f, &[0.0; 3], 1.0).unwrap();
        let cfg = MCConfig::new(20_000, 5);
        let shell = mc_region_integral(&Region::shell(&ball, 0.9, 1.1).unwrap(), 1, &|_, o: &mut [f64]| o[0] = 1.0, &cfg).unwrap()[0];
        let v = |r: f64| mc_volume_integral(&ball.with_radius(r).unwrap(), &|_| 1.0, &cfg).unwrap().value;
        assert!((shell.value - (v(1.1) - v(0.9))).abs() < 1e-9 * v(1.1));
    }

    #[test]
    fn config_validation() {
        let mut cfg = MCConfig::new(1000, 1);
        cfg.batches = 1;
        assert!(cfg.validate().is_err());
        let ball = heat_ball(1, 1.0);
        assert!(surface_via_derivative(&ball, &|_| 1.0, &MCConfig::new(1000, 1), 0.2, false).is_err());
    }
}
