//! Superlevel sets `Ω_r(z₀) = {Γ*(·; z₀) > 1/r}`.
//!
//! Each time slice of `Ω_r` is the ellipsoid `⟨C_A(s)^{-1} y, y⟩ < ρ(s)²`
//! with `ρ(s)² = 4 (ln r + ln sup Γ*(·, t₀ - s))`, so slice measures and
//! Gaussian tails are closed-form.

use std::fmt::Write as _;
use std::sync::Arc;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::{gamma_ur, ln_gamma};

use crate::error::{check_dim, Error, Result};
use crate::kolmo::Fundamental;

/// Default upper limit for the time extent search.
pub const DEFAULT_HORIZON: f64 = 1e8;

/// Superlevel sets of the exact kernels are bounded for every radius.
pub const MAX_RADIUS: f64 = f64::INFINITY;

/// Kinds of membership test.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Membership {
    Interior,
    /// `|Γ* - 1/r| ≤ δ/r`.
    SphereBand(f64),
    /// `z` lies on the slice `t = t₀ - ε` and in the interior.
    Slice(f64),
}

#[derive(Clone, Debug)]
pub struct LevelBall {
    fund: Arc<Fundamental>,
    pole: Vec<f64>,
    r: f64,
    delta: f64,
}

impl LevelBall {
    /// Builds `Ω_r(pole)` and its time extent `Δ`, the root of
    /// `ln r + ln sup Γ*(·, t₀ - Δ) = 0`.
    pub fn envelope(fund: Arc<Fundamental>, pole: &[f64], r: f64) -> Result<Self> {
        Self::with_horizon(fund, pole, r, DEFAULT_HORIZON)
    }

    pub fn with_horizon(fund: Arc<Fundamental>, pole: &[f64], r: f64, horizon: f64) -> Result<Self> {
        check_dim("pole", fund.n() + 1, pole.len())?;
        if !(r > 0.0 && r.is_finite()) {
            return Err(Error::Domain(format!("radius {r} must be positive")));
        }
        let g = |s: f64| r.ln() + fund.log_sup(s);
        let qp = f64::from(fund.parabolic_dim());
        let mut hi = r.powf(2.0 / qp);
        while g(hi) > 0.0 {
            hi *= 2.0;
            if hi > horizon {
                return Err(Error::Horizon { horizon });
            }
        }
        let mut lo = hi;
        while g(lo) <= 0.0 {
            lo /= 2.0;
            if lo < f64::MIN_POSITIVE {
                return Err(Error::Domain("time extent underflow".into()));
            }
        }
        while (hi - lo) > 1e-13 * hi {
            let mid = 0.5 * (lo + hi);
            if g(mid) > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(Self {
            fund,
            pole: pole.to_vec(),
            r,
            delta: 0.5 * (lo + hi),
        })
    }

    pub fn fundamental(&self) -> &Arc<Fundamental> {
        &self.fund
    }

    pub fn pole(&self) -> &[f64] {
        &self.pole
    }

    pub fn pole_time(&self) -> f64 {
        self.pole[self.fund.n()]
    }

    pub fn radius(&self) -> f64 {
        self.r
    }

    /// `Δ` with `Ω_r ⊂ R^N × (t₀ - Δ, t₀)`.
    pub fn time_extent(&self) -> f64 {
        self.delta
    }

    /// Same ball with another radius.
    pub fn with_radius(&self, r: f64) -> Result<Self> {
        Self::envelope(self.fund.clone(), &self.pole, r)
    }

    /// `ρ(s)²`; non-positive when the slice is empty.
    pub fn slice_radius2(&self, s: f64) -> f64 {
        if !(s > 0.0) {
            return f64::NEG_INFINITY;
        }
        4.0 * (self.r.ln() + self.fund.log_sup(s))
    }

    pub fn log_gamma(&self, z: &[f64]) -> f64 {
        let n = self.fund.n();
        self.fund.log_value_at(&z[..n], self.pole_time() - z[n], &self.pole[..n])
    }

    pub fn contains(&self, z: &[f64]) -> bool {
        let n = self.fund.n();
        z.len() == n + 1 && z[n] < self.pole_time() && self.log_gamma(z) > -self.r.ln()
    }

    pub fn membership(&self, z: &[f64], which: Membership) -> Result<bool> {
        check_dim("point", self.fund.n() + 1, z.len())?;
        if let Some(v) = z.iter().find(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                value: *v,
                point: z.to_vec(),
            });
        }
        let n = self.fund.n();
        Ok(match which {
            Membership::Interior => self.contains(z),
            Membership::SphereBand(delta) => {
                z[n] < self.pole_time() && (self.log_gamma(z).exp() - 1.0 / self.r).abs() <= delta / self.r
            }
            Membership::Slice(eps) => {
                let t = self.pole_time() - eps;
                (z[n] - t).abs() <= 1e-12 * (1.0 + t.abs()) && self.contains(z)
            }
        })
    }

    /// Lebesgue measure of the slice `I_{r,s}`: `ω_N ρ^N √det C_A(s)`.
    pub fn slice_measure(&self, s: f64) -> f64 {
        let rho2 = self.slice_radius2(s);
        if rho2 <= 0.0 {
            return 0.0;
        }
        let n = self.fund.n() as f64;
        (log_unit_ball_volume(self.fund.n()) + 0.5 * n * rho2.ln() + 0.5 * self.fund.logdet_cov(s)).exp()
    }

    /// `∫_{R^N ∖ I_{r,s}} Γ*(ξ, t₀ - s; z₀) dξ = e^{cs} Q(N/2, ρ²/4)`.
    pub fn tail_outside_slice(&self, s: f64) -> f64 {
        let rho2 = self.slice_radius2(s);
        let tilt = (self.fund.c() * s).exp();
        if rho2 <= 0.0 {
            return tilt;
        }
        tilt * gamma_ur(self.fund.n() as f64 / 2.0, rho2 / 4.0)
    }

    /// Centre of the slice ellipsoid in `ξ`: `E(-s)(x₀ + b s)`.
    pub fn slice_center(&self, s: f64) -> DVector<f64> {
        let n = self.fund.n();
        let mut base = DVector::from_column_slice(&self.pole[..n]);
        if self.fund.op().kspec.is_heat() {
            base += self.fund.drift_b() * s;
        }
        self.fund.expm_apply(-s, &base)
    }

    /// Axis-aligned box `(centre, half-widths)` containing the slice.
    pub fn slice_box(&self, s: f64) -> Option<(Vec<f64>, Vec<f64>)> {
        let rho2 = self.slice_radius2(s);
        if rho2 <= 0.0 {
            return None;
        }
        let rho = rho2.sqrt();
        let einv = self.fund.expm(-s);
        let l = self.fund.scaled_chol(s).ok()?;
        let m = &einv * l;
        let half = (0..self.fund.n())
            .map(|i| rho * m.row(i).norm())
            .collect();
        Some((self.slice_center(s).iter().copied().collect(), half))
    }

    /// Maps `u` in the closed unit ball onto the slice at time gap `s`:
    /// `ξ = E(-s)(x₀ + b s - ρ L_s u)`.
    pub fn slice_point(&self, s: f64, u: &[f64]) -> Vec<f64> {
        let n = self.fund.n();
        let rho = self.slice_radius2(s).max(0.0).sqrt();
        let mut base = DVector::from_column_slice(&self.pole[..n]);
        if self.fund.op().kspec.is_heat() {
            base += self.fund.drift_b() * s;
        }
        let l = self.fund.scaled_chol(s).expect("positive gap");
        let y = l * DVector::from_column_slice(u) * rho;
        let xi = self.fund.expm_apply(-s, &(base - y));
        let mut z: Vec<f64> = xi.iter().copied().collect();
        z.push(self.pole_time() - s);
        z
    }

    /// Slice measure and Gaussian tail along a decreasing ladder of gaps.
    pub fn claim2_decay(&self, eps_ladder: &[f64]) -> DecayReport {
        let measure: Vec<f64> = eps_ladder.iter().map(|&e| self.slice_measure(e)).collect();
        let tail: Vec<f64> = eps_ladder.iter().map(|&e| self.tail_outside_slice(e)).collect();
        DecayReport::new(
            eps_ladder.to_vec(),
            vec![
                Series::new("slice_measure", measure),
                Series::new("tail_integral", tail),
            ],
        )
    }
}

/// `ln ω_N = (N/2) ln π - ln Γ(N/2 + 1)`.
pub fn log_unit_ball_volume(n: usize) -> f64 {
    let h = n as f64 / 2.0;
    h * std::f64::consts::PI.ln() - ln_gamma(h + 1.0)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Series {
    pub name: String,
    pub values: Vec<f64>,
}

impl Series {
    pub fn new(name: &str, values: Vec<f64>) -> Self {
        Self {
            name: name.to_string(),
            values,
        }
    }

    pub fn strictly_decreasing(&self) -> bool {
        self.values.windows(2).all(|w| w[1] < w[0])
    }

    pub fn non_increasing(&self) -> bool {
        self.values.windows(2).all(|w| w[1] <= w[0])
    }

    pub fn last(&self) -> f64 {
        self.values.last().copied().unwrap_or(f64::NAN)
    }
}

/// Named sequences indexed by a decreasing ladder `ε`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecayReport {
    pub eps: Vec<f64>,
    pub series: Vec<Series>,
}

impl DecayReport {
    pub fn new(eps: Vec<f64>, series: Vec<Series>) -> Self {
        Self { eps, series }
    }

    pub fn get(&self, name: &str) -> Option<&Series> {
        self.series.iter().find(|s| s.name == name)
    }

    /// Every series strictly decreasing with final value at most `tol`.
    pub fn passes(&self, tol: f64) -> bool {
        self.series.iter().all(|s| s.strictly_decreasing() && s.last() <= tol)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("eps");
        for s in &self.series {
            out.push(',');
            out.push_str(&s.name);
        }
        out.push('\n');
        for (i, e) in self.eps.iter().enumerate() {
            let _ = write!(out, "{e:.17e}");
            for s in &self.series {
                let _ = write!(out, ",{:.17e}", s.values[i]);
            }
            out.push('\n');
        }
        out
    }
}

/// `ε = 2^{-k}` for `k = lo..=hi`.
pub fn dyadic_ladder(lo: i32, hi: i32) -> Vec<f64> {
    (lo..=hi).map(|k| 2f64.powi(-k)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kolmo::{KolmogorovSpec, OperatorSpec};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn heat1() -> Arc<Fundamental> {
        Arc::new(Fundamental::new(&OperatorSpec::heat(1)).unwrap())
    }

    fn kolmo1() -> Arc<Fundamental> {
        Arc::new(Fundamental::new(&OperatorSpec::model(KolmogorovSpec::chain(&[1, 1]).unwrap())).unwrap())
    }

    #[test]
    fn membership_examples() {
        let ball = LevelBall::envelope(heat1(), &[0.0, 0.0], 1.0).unwrap();
        assert!(ball.membership(&[0.0, -0.01], Membership::Interior).unwrap());
        assert!(!ball.membership(&[0.0, 0.0], Membership::Interior).unwrap());
        let xi = (0.04 * (1.0 / (0.04 * std::f64::consts::PI).sqrt()).ln()).sqrt();
        assert!((xi - 0.2037).abs() < 1e-4);
        assert!(ball.membership(&[0.2037, -0.01], Membership::SphereBand(1e-3)).unwrap());
        assert!(ball.membership(&[0.0, -0.01], Membership::Slice(0.01)).unwrap());
        assert!(!ball.membership(&[0.0, -0.02], Membership::Slice(0.01)).unwrap());
    }

    #[test]
    fn time_extents() {
        let ball = LevelBall::envelope(heat1(), &[0.0, 0.0], 1.0).unwrap();
        let want = 1.0 / (4.0 * std::f64::consts::PI);
        assert!((ball.time_extent() - want).abs() < 1e-12 * want);
        let ball = LevelBall::envelope(kolmo1(), &[0.0, 0.0, 0.0], 1.0).unwrap();
        let want = (12.0 / (16.0 * std::f64::consts::PI.powi(2))).powf(0.25);
        assert!((ball.time_extent() - want).abs() < 1e-12 * want);
        assert!((ball.time_extent() - 0.5251).abs() < 1e-4);
        // closed form for c = 0: Δ = (r g(1))^{2/(Q_P-2)}
        let f = kolmo1();
        for r in [0.1, 3.0, 40.0] {
            let b = LevelBall::envelope(f.clone(), &[0.0, 0.0, 0.0], r).unwrap();
            let want = (r * f.log_sup(1.0).exp()).powf(0.5);
            assert!((b.time_extent() - want).abs() < 1e-12 * want);
        }
        assert!(matches!(
            LevelBall::with_horizon(f, &[0.0; 3], 1e30, 10.0),
            Err(Error::Horizon { horizon }) if horizon == 10.0
        ));
    }

    #[test]
    fn homogeneous_scaling_of_extent() {
        // Γ(δ̃_λ z) = λ^{2-Q_P} Γ(z) gives Δ(λ^{Q_P-2} r) = λ² Δ(r)
        let f = kolmo1();
        let b1 = LevelBall::envelope(f.clone(), &[0.0; 3], 1.0).unwrap();
        let lam: f64 = 1.7;
        let b2 = LevelBall::envelope(f, &[0.0; 3], lam.powi(4)).unwrap();
        assert!((b2.time_extent() - lam * lam * b1.time_extent()).abs() < 1e-11);
    }

    #[test]
    fn volume_of_heat_ball() {
        // ∫_0^Δ 2ρ(s)√(2s) ds against the closed form
        let ball = LevelBall::envelope(heat1(), &[0.0, 0.0], 1.0).unwrap();
        let rule = crate::quadrature::tanh_sinh(0.0, ball.time_extent(), 0.02);
        let vol = rule.integrate(|s| ball.slice_measure(s));
        let d: f64 = ball.time_extent();
        let want = 2.0 * 2f64.sqrt() * d.powf(1.5) * (std::f64::consts::PI.sqrt() / 2.0) / 1.5f64.powf(1.5);
        assert!((vol - want).abs() < 1e-10, "{vol} vs {want}");
        assert!((want - 0.030632).abs() < 1e-5);
    }

    #[test]
    fn tails_and_measure_limits() {
        let ball = LevelBall::envelope(heat1(), &[0.0, 0.0], 1.0).unwrap();
        let d = ball.time_extent();
        assert_eq!(ball.slice_measure(d * 1.01), 0.0);
        assert_eq!(ball.tail_outside_slice(d * 1.01), 1.0);
        // in 1-D the tail is erfc(ρ/2)
        let s = 0.01;
        let rho2 = ball.slice_radius2(s);
        let want = statrs::function::erf::erfc((rho2 / 4.0).sqrt());
        assert!((ball.tail_outside_slice(s) - want).abs() < 1e-10 * want, "{} vs {want}", ball.tail_outside_slice(s));
    }

    #[test]
    fn envelope_soundness_and_monotonicity() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for f in [heat1(), kolmo1()] {
            let n = f.n();
            let pole: Vec<f64> = (0..=n).map(|i| 0.1 * i as f64).collect();
            let ball = LevelBall::envelope(f.clone(), &pole, 1.0).unwrap();
            let bigger = ball.with_radius(2.0).unwrap();
            let d = ball.time_extent();
            let (c, h) = bigger.slice_box(d / 3.0).unwrap();
            let mut accepted = 0;
            for _ in 0..200_000 {
                let s = rng.random_range(-0.1 * d..1.5 * d);
                let mut z: Vec<f64> = (0..n)
                    .map(|i| c[i] + rng.random_range(-3.0..3.0) * h[i])
                    .collect();
                z.push(pole[n] - s);
                if ball.contains(&z) {
                    accepted += 1;
                    assert!(s > 0.0 && s < d);
                    let (bc, bh) = ball.slice_box(s).unwrap();
                    for i in 0..n {
                        assert!((z[i] - bc[i]).abs() <= bh[i] * (1.0 + 1e-12));
                    }
                    assert!(bigger.contains(&z));
                }
            }
            assert!(accepted > 100);
        }
    }

    #[test]
    fn slice_points_lie_on_slices() {
        let ball = LevelBall::envelope(kolmo1(), &[0.2, -0.1, 0.5], 1.0).unwrap();
        let s = 0.3 * ball.time_extent();
        let inside = ball.slice_point(s, &[0.3, -0.5]);
        assert!(ball.contains(&inside));
        let edge = ball.slice_point(s, &[0.6, 0.8]);
        let lg = ball.log_gamma(&edge);
        assert!((lg + ball.radius().ln()).abs() < 1e-10);
    }

    #[test]
    fn decay_csv() {
        let ball = LevelBall::envelope(kolmo1(), &[0.0; 3], 1.0).unwrap();
        let rep = ball.claim2_decay(&dyadic_ladder(4, 14));
        assert_eq!(rep.eps.len(), 11);
        let csv = rep.to_csv();
        assert!(csv.starts_with("eps,slice_measure,tail_integral\n"));
        assert_eq!(csv.lines().count(), 12);
        assert!(rep.passes(1e-3));
    }
}
