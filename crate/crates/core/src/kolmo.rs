//! Constant-coefficient Kolmogorov operators
//! `Σ a_ij ∂_ij u + Σ b_j ∂_j u + c u + ⟨Bx, ∇u⟩ - ∂_t u`
//! and their explicit Gaussian fundamental solutions. The heat operator is
//! the case of a single block (`B = 0`).

use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen};
use num_traits::One;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::group::BoxDomain;
use crate::poly::{Poly, Rational};
use crate::quadrature::gauss_hermite;
use crate::ratmat::RatMat;

/// Block structure of the drift matrix `B`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "KolmogorovRaw", into = "KolmogorovRaw")]
pub struct KolmogorovSpec {
    m_dims: Vec<usize>,
    blocks: Vec<RatMat>,
    drift: RatMat,
    exp_coeffs: Vec<RatMat>,
}

#[derive(Serialize, Deserialize)]
struct KolmogorovRaw {
    m_dims: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    blocks: Option<Vec<RatMat>>,
}

impl TryFrom<KolmogorovRaw> for KolmogorovSpec {
    type Error = Error;
    fn try_from(raw: KolmogorovRaw) -> Result<Self> {
        match raw.blocks {
            Some(b) => Self::new(raw.m_dims, b),
            None => Self::chain(&raw.m_dims),
        }
    }
}

impl From<KolmogorovSpec> for KolmogorovRaw {
    fn from(k: KolmogorovSpec) -> Self {
        Self {
            m_dims: k.m_dims,
            blocks: Some(k.blocks),
        }
    }
}

impl KolmogorovSpec {
    /// `blocks[j-1]` is the `m_j × m_{j-1}` block `B_j`.
    pub fn new(m_dims: Vec<usize>, blocks: Vec<RatMat>) -> Result<Self> {
        if m_dims.is_empty() || m_dims.contains(&0) {
            return Err(Error::Spec("block sizes must be positive".into()));
        }
        if m_dims.windows(2).any(|w| w[1] > w[0]) {
            return Err(Error::Spec(format!("block sizes {m_dims:?} must be non-increasing")));
        }
        check_dim("drift blocks", m_dims.len() - 1, blocks.len())?;
        let n: usize = m_dims.iter().sum();
        let offsets = offsets(&m_dims);
        let mut drift = RatMat::zeros(n, n);
        for (j, blk) in blocks.iter().enumerate() {
            let (rows, cols) = (m_dims[j + 1], m_dims[j]);
            if blk.rows() != rows || blk.cols() != cols {
                return Err(Error::Spec(format!(
                    "block B_{} has shape {}x{}, expected {rows}x{cols}",
                    j + 1,
                    blk.rows(),
                    blk.cols()
                )));
            }
            if blk.rank() != rows {
                return Err(Error::Spec(format!("block B_{} is not of full rank {rows}", j + 1)));
            }
            drift.set_block(offsets[j + 1], offsets[j], blk);
        }
        // E(τ) = Σ (-τB)^p / p!, finite because B is nilpotent
        let mut exp_coeffs = vec![RatMat::identity(n)];
        let mut fact = Rational::one();
        let mut pow = RatMat::identity(n);
        for p in 1..=m_dims.len() {
            pow = pow.mul(&drift.scale(-Rational::one()));
            fact *= Rational::from_integer(p as i64);
            if pow.is_zero() {
                break;
            }
            exp_coeffs.push(pow.scale(Rational::one() / fact));
        }
        Ok(Self {
            m_dims,
            blocks,
            drift,
            exp_coeffs,
        })
    }

    /// Chain structure with `B_j = [I_{m_j} | 0]`.
    pub fn chain(m_dims: &[usize]) -> Result<Self> {
        let blocks = m_dims
            .windows(2)
            .map(|w| {
                let mut b = RatMat::zeros(w[1], w[0]);
                for i in 0..w[1].min(w[0]) {
                    b[(i, i)] = Rational::one();
                }
                b
            })
            .collect();
        Self::new(m_dims.to_vec(), blocks)
    }

    /// Heat operator on `R^n`.
    pub fn heat(n: usize) -> Self {
        Self::new(vec![n], vec![]).expect("valid heat structure")
    }

    pub fn dim(&self) -> usize {
        self.m_dims.iter().sum()
    }

    pub fn m_dims(&self) -> &[usize] {
        &self.m_dims
    }

    pub fn m0(&self) -> usize {
        self.m_dims[0]
    }

    pub fn kappa(&self) -> usize {
        self.m_dims.len() - 1
    }

    pub fn is_heat(&self) -> bool {
        self.blocks.is_empty()
    }

    pub fn blocks(&self) -> &[RatMat] {
        &self.blocks
    }

    pub fn drift_matrix(&self) -> &RatMat {
        &self.drift
    }

    /// `E(τ) = Σ_p exp_coeffs[p] τ^p`.
    pub fn exp_coeffs(&self) -> &[RatMat] {
        &self.exp_coeffs
    }

    /// `(B)^{κ+1} = 0` checked exactly.
    pub fn is_nilpotent(&self) -> bool {
        let mut pow = RatMat::identity(self.dim());
        for _ in 0..=self.kappa() {
            pow = pow.mul(&self.drift);
        }
        pow.is_zero()
    }

    /// Layer (1-based) of each spatial coordinate: block `j` sits in layer `j+1`.
    pub fn coord_layers(&self) -> Vec<usize> {
        self.m_dims
            .iter()
            .enumerate()
            .flat_map(|(j, &m)| std::iter::repeat_n(j + 1, m))
            .collect()
    }

    /// `Q = m_0 + 1 + 2m_1 + … + (κ+1)m_κ`.
    pub fn homogeneous_dim(&self) -> u32 {
        1 + self
            .m_dims
            .iter()
            .enumerate()
            .map(|(j, &m)| ((j + 1) * m) as u32)
            .sum::<u32>()
    }

    /// `Q_P = m_0 + 3m_1 + … + (2κ+1)m_κ + 2`.
    pub fn parabolic_dim(&self) -> u32 {
        2 + self
            .m_dims
            .iter()
            .enumerate()
            .map(|(j, &m)| ((2 * j + 1) * m) as u32)
            .sum::<u32>()
    }

    /// Parabolic dilation exponents of the spatial coordinates, `2j+1`.
    pub fn parabolic_exps(&self) -> Vec<u32> {
        self.coord_layers().iter().map(|&l| (2 * l - 1) as u32).collect()
    }

    /// `J = diag(I_{m_0}, 0, …, 0)`.
    pub fn j_matrix(&self) -> RatMat {
        let mut j = RatMat::zeros(self.dim(), self.dim());
        for i in 0..self.m0() {
            j[(i, i)] = Rational::one();
        }
        j
    }

    /// `E(t) = exp(-tB)` evaluated from the finite series.
    pub fn expm(&self, t: f64) -> DMatrix<f64> {
        let n = self.dim();
        let mut out = DMatrix::zeros(n, n);
        let mut tp = 1.0;
        for c in &self.exp_coeffs {
            out += c.to_f64() * tp;
            tp *= t;
        }
        out
    }

    /// Exact coefficients of `C(t) = ∫_0^t E J E^T = Σ_k C_k t^k` (index `k`).
    pub fn covariance_coeffs_exact(&self) -> Vec<RatMat> {
        cov_coeffs_exact(&self.exp_coeffs, &self.j_matrix())
    }

    /// `det C(t)` as an exact univariate polynomial.
    pub fn det_covariance_poly(&self) -> Poly<Rational> {
        let coeffs = self.covariance_coeffs_exact();
        let n = self.dim();
        let entries: Vec<Vec<Poly<Rational>>> = (0..n)
            .map(|i| {
                (0..n)
                    .map(|j| {
                        let mut p = Poly::zero(1);
                        for (k, c) in coeffs.iter().enumerate() {
                            p.add_term(vec![k as u32], c[(i, j)]);
                        }
                        p
                    })
                    .collect()
            })
            .collect();
        poly_det(&entries)
    }
}

fn offsets(m_dims: &[usize]) -> Vec<usize> {
    let mut off = vec![0];
    for m in m_dims {
        off.push(off.last().unwrap() + m);
    }
    off
}

fn cov_coeffs_exact(exp: &[RatMat], d: &RatMat) -> Vec<RatMat> {
    let n = d.rows();
    let kmax = 2 * (exp.len() - 1) + 1;
    let mut out = vec![RatMat::zeros(n, n); kmax + 1];
    for (p, ep) in exp.iter().enumerate() {
        let ed = ep.mul(d);
        for (q, eq) in exp.iter().enumerate() {
            let k = p + q + 1;
            let term = ed.mul(&eq.transpose()).scale(Rational::new(1, k as i64));
            out[k] = out[k].add(&term);
        }
    }
    out
}

// Cofactor expansion; fine for the small dimensions handled here.
fn poly_det(m: &[Vec<Poly<Rational>>]) -> Poly<Rational> {
    let n = m.len();
    if n == 0 {
        return Poly::constant(1, Rational::one());
    }
    if n == 1 {
        return m[0][0].clone();
    }
    let mut det = Poly::zero(1);
    for (j, a) in m[0].iter().enumerate() {
        if a.is_zero() {
            continue;
        }
        let minor: Vec<Vec<Poly<Rational>>> = m[1..]
            .iter()
            .map(|row| {
                row.iter()
                    .enumerate()
                    .filter(|(k, _)| *k != j)
                    .map(|(_, p)| p.clone())
                    .collect()
            })
            .collect();
        let term = a * &poly_det(&minor);
        det = if j % 2 == 0 { &det + &term } else { &det - &term };
    }
    det
}

/// Second-order coefficients of the operator.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Diffusion {
    /// `Λ Σ ∂²_{x_i}` over the first block.
    Scalar(f64),
    /// Constant symmetric positive definite `m_0 × m_0` matrix.
    Matrix(Vec<Vec<f64>>),
}

/// A constant-coefficient Kolmogorov operator.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OperatorSpec {
    pub kspec: KolmogorovSpec,
    pub diffusion: Diffusion,
    /// First-layer drift; only allowed when `B = 0`.
    #[serde(default)]
    pub b: Vec<f64>,
    #[serde(default)]
    pub c: f64,
}

/// Which of `ℒ` and `ℒ*` a residual refers to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Form {
    Direct,
    Adjoint,
}

/// Absolute residual together with the sum of the magnitudes of its terms.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct Residual {
    pub value: f64,
    pub scale: f64,
}

impl Residual {
    pub fn relative(&self) -> f64 {
        if self.scale > 0.0 {
            self.value / self.scale
        } else {
            self.value
        }
    }
}

impl OperatorSpec {
    pub fn new(kspec: KolmogorovSpec, diffusion: Diffusion, b: Vec<f64>, c: f64) -> Result<Self> {
        let op = Self {
            kspec,
            diffusion,
            b,
            c,
        };
        op.validate()?;
        Ok(op)
    }

    /// `Σ ∂²_{x_i} + ⟨Bx, ∇⟩ - ∂_t`.
    pub fn model(kspec: KolmogorovSpec) -> Self {
        Self {
            kspec,
            diffusion: Diffusion::Scalar(1.0),
            b: vec![],
            c: 0.0,
        }
    }

    pub fn heat(n: usize) -> Self {
        Self::model(KolmogorovSpec::heat(n))
    }

    pub fn validate(&self) -> Result<()> {
        let m0 = self.kspec.m0();
        match &self.diffusion {
            Diffusion::Scalar(l) => {
                if !(l.is_finite() && *l > 0.0) {
                    return Err(Error::Spec(format!("diffusion constant {l} must be positive")));
                }
            }
            Diffusion::Matrix(a) => {
                check_dim("diffusion rows", m0, a.len())?;
                for row in a {
                    check_dim("diffusion columns", m0, row.len())?;
                }
                let asym = (0..m0).any(|i| (0..i).any(|j| (a[i][j] - a[j][i]).abs() > 1e-12 * (1.0 + a[i][j].abs())));
                if asym {
                    return Err(Error::Spec("diffusion matrix is not symmetric".into()));
                }
            }
        }
        self.ellipticity()?;
        if !self.b.is_empty() {
            check_dim("drift b", m0, self.b.len())?;
            if !self.kspec.is_heat() && self.b.iter().any(|x| *x != 0.0) {
                return Err(Error::Spec("constant drift b is supported only when B = 0".into()));
            }
        }
        if !(self.c.is_finite() && self.c <= 0.0) {
            return Err(Error::Spec(format!("zero-order coefficient c = {} must be <= 0", self.c)));
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.kspec.dim()
    }

    pub fn diffusion_matrix(&self) -> DMatrix<f64> {
        let m0 = self.kspec.m0();
        match &self.diffusion {
            Diffusion::Scalar(l) => DMatrix::identity(m0, m0) * *l,
            Diffusion::Matrix(a) => DMatrix::from_fn(m0, m0, |i, j| a[i][j]),
        }
    }

    /// Smallest `Λ ≥ 1` with `Λ^{-1}|ξ|² ≤ ⟨Aξ,ξ⟩ ≤ Λ|ξ|²`.
    pub fn ellipticity(&self) -> Result<f64> {
        let eig = SymmetricEigen::new(self.diffusion_matrix());
        let lo = eig.eigenvalues.min();
        let hi = eig.eigenvalues.max();
        if !(lo > 0.0) || !hi.is_finite() {
            return Err(Error::Spec(format!(
                "diffusion matrix is not positive definite (eigenvalues in [{lo}, {hi}])"
            )));
        }
        Ok(hi.max(1.0 / lo).max(1.0))
    }

    /// `b` padded to length `m_0`.
    pub fn drift_b(&self) -> Vec<f64> {
        if self.b.is_empty() {
            vec![0.0; self.kspec.m0()]
        } else {
            self.b.clone()
        }
    }

    /// `ℒp` or `ℒ*p` for a polynomial in `(x, t)`, expanded exactly.
    pub fn apply_poly(&self, p: &Poly<f64>, form: Form) -> Poly<f64> {
        let n = self.dim();
        let nv = n + 1;
        let m0 = self.kspec.m0();
        let a = self.diffusion_matrix();
        let sign = match form {
            Form::Direct => 1.0,
            Form::Adjoint => -1.0,
        };
        let mut out = Poly::zero(nv);
        for i in 0..m0 {
            let di = p.derivative(i);
            for j in 0..m0 {
                if a[(i, j)] != 0.0 {
                    out = &out + &di.derivative(j).scale(&a[(i, j)]);
                }
            }
        }
        let b = self.drift_b();
        let bmat = self.kspec.drift_matrix().to_f64();
        for i in 0..n {
            let mut coef = Poly::zero(nv);
            for j in 0..n {
                if bmat[(i, j)] != 0.0 {
                    coef = &coef + &Poly::var(nv, j).scale(&bmat[(i, j)]);
                }
            }
            if i < m0 && b[i] != 0.0 {
                coef = &coef + &Poly::constant(nv, b[i]);
            }
            if !coef.is_zero() {
                out = &out + &(&coef * &p.derivative(i)).scale(&sign);
            }
        }
        if self.c != 0.0 {
            out = &out + &p.scale(&self.c);
        }
        &out - &p.derivative(n).scale(&sign)
    }

    /// Residual of `ℒu` or `ℒ*u` at `z` by fourth-order central differences
    /// with per-coordinate steps `h`.
    pub fn pde_residual<F>(
        &self,
        u: F,
        z: &[f64],
        h: &[f64],
        form: Form,
        domain: Option<&BoxDomain>,
    ) -> Result<Residual>
    where
        F: Fn(&[f64]) -> f64,
    {
        let n = self.dim();
        check_dim("residual point", n + 1, z.len())?;
        check_dim("residual steps", n + 1, h.len())?;
        if z.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite {
                value: f64::NAN,
                point: z.to_vec(),
            });
        }
        let eval = |p: &[f64]| -> Result<f64> {
            if let Some(d) = domain {
                if !d.contains(p) {
                    return Err(Error::StencilOutsideDomain { point: p.to_vec() });
                }
            }
            let v = u(p);
            if v.is_finite() {
                Ok(v)
            } else {
                Err(Error::NonFinite {
                    value: v,
                    point: p.to_vec(),
                })
            }
        };
        let shifted = |moves: &[(usize, f64)]| -> Result<f64> {
            let mut p = z.to_vec();
            for &(i, d) in moves {
                p[i] += d;
            }
            eval(&p)
        };
        const D1: [(f64, f64); 4] = [(-2.0, 1.0), (-1.0, -8.0), (1.0, 8.0), (2.0, -1.0)];
        let first = |i: usize| -> Result<f64> {
            let mut acc = 0.0;
            for (k, w) in D1 {
                acc += w * shifted(&[(i, k * h[i])])?;
            }
            Ok(acc / (12.0 * h[i]))
        };
        let u0 = eval(z)?;
        let second = |i: usize| -> Result<f64> {
            let mut acc = -30.0 * u0;
            for (k, w) in [(-2.0, -1.0), (-1.0, 16.0), (1.0, 16.0), (2.0, -1.0)] {
                acc += w * shifted(&[(i, k * h[i])])?;
            }
            Ok(acc / (12.0 * h[i] * h[i]))
        };
        let mixed = |i: usize, j: usize| -> Result<f64> {
            let mut acc = 0.0;
            for (ki, wi) in D1 {
                for (kj, wj) in D1 {
                    acc += wi * wj * shifted(&[(i, ki * h[i]), (j, kj * h[j])])?;
                }
            }
            Ok(acc / (144.0 * h[i] * h[j]))
        };

        let a = self.diffusion_matrix();
        let m0 = self.kspec.m0();
        let sign = match form {
            Form::Direct => 1.0,
            Form::Adjoint => -1.0,
        };
        let mut terms = Vec::new();
        for i in 0..m0 {
            for j in 0..m0 {
                if a[(i, j)] == 0.0 {
                    continue;
                }
                let d = if i == j { second(i)? } else { mixed(i, j)? };
                terms.push(a[(i, j)] * d);
            }
        }
        let b = self.drift_b();
        let bmat = self.kspec.drift_matrix().to_f64();
        let x = DVector::from_column_slice(&z[..n]);
        let bx = &bmat * &x;
        let mut grad = vec![None; n];
        for i in 0..n {
            let coef = bx[i] + if i < m0 { b[i] } else { 0.0 };
            if coef != 0.0 {
                let g = match grad[i] {
                    Some(g) => g,
                    None => {
                        let g = first(i)?;
                        grad[i] = Some(g);
                        g
                    }
                };
                terms.push(sign * coef * g);
            }
        }
        if self.c != 0.0 {
            terms.push(self.c * u0);
        }
        terms.push(-sign * first(n)?);
        Ok(Residual {
            value: terms.iter().sum::<f64>().abs(),
            scale: terms.iter().map(|t| t.abs()).sum(),
        })
    }
}

/// Value of `Γ*(z; pole)` with its horizontal log-gradient.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GammaEval {
    pub value: f64,
    pub log_value: f64,
    /// `(∂_{ξ_1}, …, ∂_{ξ_{m_0}}, X_{m+1})` applied to `ln Γ*`.
    pub grad_log: Vec<f64>,
    /// Set when `det C` fell below `1e-300` or the value under/overflowed.
    pub underflow: bool,
}

impl GammaEval {
    /// Horizontal gradient of `Γ*` itself.
    pub fn hgrad(&self) -> Vec<f64> {
        self.grad_log.iter().map(|g| g * self.value).collect()
    }
}

/// Precomputed explicit fundamental solution of an [`OperatorSpec`].
///
/// `C_A(s)` is evaluated through its homogeneity `C_A(s) = S C_A(1) S`
/// with `S = diag(s^{j+1/2})` on block `j`.
#[derive(Clone, Debug)]
pub struct Fundamental {
    op: OperatorSpec,
    n: usize,
    m0: usize,
    bmat: DMatrix<f64>,
    exp: Vec<DMatrix<f64>>,
    cov: Vec<DMatrix<f64>>,
    a: DMatrix<f64>,
    b: DVector<f64>,
    half_exps: Vec<f64>,
    chol1: DMatrix<f64>,
    logdet1: f64,
    qp: u32,
    log_norm: f64,
}

const LN_DET_FLOOR: f64 = -690.7755278982137; // ln 1e-300

impl Fundamental {
    pub fn new(op: &OperatorSpec) -> Result<Self> {
        op.validate()?;
        let k = &op.kspec;
        let n = k.dim();
        let m0 = k.m0();
        let a = op.diffusion_matrix();
        let exp: Vec<DMatrix<f64>> = k.exp_coeffs().iter().map(RatMat::to_f64).collect();
        let mut d = DMatrix::zeros(n, n);
        d.view_mut((0, 0), (m0, m0)).copy_from(&a);
        let kmax = 2 * (exp.len() - 1) + 1;
        let mut cov = vec![DMatrix::zeros(n, n); kmax + 1];
        for (p, ep) in exp.iter().enumerate() {
            for (q, eq) in exp.iter().enumerate() {
                let kk = p + q + 1;
                cov[kk] += ep * &d * eq.transpose() / kk as f64;
            }
        }
        let c1: DMatrix<f64> = cov.iter().fold(DMatrix::zeros(n, n), |acc, c| acc + c);
        let chol = Cholesky::new(c1.clone())
            .ok_or_else(|| Error::Spec("covariance C(1) is not positive definite".into()))?;
        let chol1 = chol.l();
        let logdet1 = 2.0 * chol1.diagonal().iter().map(|x| x.ln()).sum::<f64>();
        let half_exps = k
            .coord_layers()
            .iter()
            .map(|&l| l as f64 - 0.5)
            .collect();
        Ok(Self {
            op: op.clone(),
            n,
            m0,
            bmat: k.drift_matrix().to_f64(),
            exp,
            cov,
            a,
            b: DVector::from_vec(op.drift_b()),
            half_exps,
            chol1,
            logdet1,
            qp: k.parabolic_dim(),
            log_norm: -(n as f64) / 2.0 * (4.0 * std::f64::consts::PI).ln(),
        })
    }

    pub fn op(&self) -> &OperatorSpec {
        &self.op
    }

    /// Spatial dimension `N`.
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m0(&self) -> usize {
        self.m0
    }

    pub fn parabolic_dim(&self) -> u32 {
        self.qp
    }

    pub fn c(&self) -> f64 {
        self.op.c
    }

    pub fn drift_b(&self) -> &DVector<f64> {
        &self.b
    }

    pub fn drift_matrix(&self) -> &DMatrix<f64> {
        &self.bmat
    }

    pub fn diffusion(&self) -> &DMatrix<f64> {
        &self.a
    }

    /// Lower Cholesky factor of `C_A(1)`.
    pub fn chol1(&self) -> &DMatrix<f64> {
        &self.chol1
    }

    /// Exponents `j + 1/2` of the scaling `S` per spatial coordinate.
    pub fn half_exps(&self) -> &[f64] {
        &self.half_exps
    }

    pub fn expm(&self, t: f64) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(self.n, self.n);
        let mut tp = 1.0;
        for c in &self.exp {
            out += c * tp;
            tp *= t;
        }
        out
    }

    /// `E(t) v` without forming the matrix.
    pub fn expm_apply(&self, t: f64, v: &DVector<f64>) -> DVector<f64> {
        let mut out = v.clone();
        let mut tp = 1.0;
        for c in &self.exp[1..] {
            tp *= t;
            out += (c * v) * tp;
        }
        out
    }

    /// `C_A(t)` from its polynomial coefficients.
    pub fn covariance(&self, t: f64) -> Result<DMatrix<f64>> {
        if !(t > 0.0) {
            return Err(Error::Domain(format!("covariance needs t > 0, got {t}")));
        }
        let mut out = DMatrix::zeros(self.n, self.n);
        let mut tp = 1.0;
        for c in &self.cov {
            out += c * tp;
            tp *= t;
        }
        Ok(out)
    }

    /// `ln det C_A(s) = ln det C_A(1) + (Q_P - 2) ln s`.
    pub fn logdet_cov(&self, s: f64) -> f64 {
        self.logdet1 + (self.qp as f64 - 2.0) * s.ln()
    }

    /// `ln sup_ξ Γ*` on the slice at time `t_pole - s`.
    pub fn log_sup(&self, s: f64) -> f64 {
        self.log_norm - 0.5 * self.logdet_cov(s) + self.op.c * s
    }

    /// `d/ds` of [`Self::log_sup`].
    pub fn log_sup_deriv(&self, s: f64) -> f64 {
        -0.5 * (self.qp as f64 - 2.0) / s + self.op.c
    }

    /// Spatial residual `y = x_pole + b s - E(s) ξ`.
    pub fn residual_vector(&self, xi: &[f64], s: f64, x_pole: &[f64]) -> DVector<f64> {
        let xi = DVector::from_column_slice(xi);
        let mut y = DVector::from_column_slice(x_pole) - self.expm_apply(s, &xi);
        if self.op.kspec.is_heat() {
            y += &self.b * s;
        }
        y
    }

    /// `S^{-1} y` and `C_A(1)^{-1} S^{-1} y`.
    fn whiten(&self, y: &DVector<f64>, s: f64) -> (DVector<f64>, DVector<f64>) {
        let ys = DVector::from_iterator(
            self.n,
            y.iter().zip(&self.half_exps).map(|(v, e)| v / s.powf(*e)),
        );
        let v = self
            .chol1
            .solve_lower_triangular(&ys)
            .expect("Cholesky factor is nonsingular");
        let w1 = self
            .chol1
            .tr_solve_lower_triangular(&v)
            .expect("Cholesky factor is nonsingular");
        (v, w1)
    }

    /// Quadratic form `⟨C_A(s)^{-1} y, y⟩`.
    pub fn quad_form(&self, y: &DVector<f64>, s: f64) -> f64 {
        self.whiten(y, s).0.norm_squared()
    }

    /// `ln Γ*` at spatial point `xi`, time gap `s = t_pole - τ > 0`.
    pub fn log_value_at(&self, xi: &[f64], s: f64, x_pole: &[f64]) -> f64 {
        if !(s > 0.0) {
            return f64::NEG_INFINITY;
        }
        let y = self.residual_vector(xi, s, x_pole);
        self.log_sup(s) - 0.25 * self.quad_form(&y, s)
    }

    fn check_points(&self, z: &[f64], pole: &[f64]) -> Result<()> {
        check_dim("point", self.n + 1, z.len())?;
        check_dim("pole", self.n + 1, pole.len())?;
        for p in [z, pole] {
            if let Some(v) = p.iter().find(|v| !v.is_finite()) {
                return Err(Error::NonFinite {
                    value: *v,
                    point: p.to_vec(),
                });
            }
        }
        Ok(())
    }

    /// `Γ*(z; pole)` only.
    pub fn value(&self, z: &[f64], pole: &[f64]) -> Result<f64> {
        self.check_points(z, pole)?;
        let s = pole[self.n] - z[self.n];
        Ok(self.log_value_at(&z[..self.n], s, &pole[..self.n]).exp())
    }

    /// `Γ*(z; pole) = Γ(pole; z)` with its horizontal log-gradient.
    pub fn eval(&self, z: &[f64], pole: &[f64]) -> Result<GammaEval> {
        self.check_points(z, pole)?;
        let n = self.n;
        let s = pole[n] - z[n];
        if !(s > 0.0) {
            return Ok(GammaEval {
                value: 0.0,
                log_value: f64::NEG_INFINITY,
                grad_log: vec![0.0; self.m0 + 1],
                underflow: false,
            });
        }
        let xi = &z[..n];
        let y = self.residual_vector(xi, s, &pole[..n]);
        let (v, w1) = self.whiten(&y, s);
        let q = v.norm_squared();
        // w = C(s)^{-1} y = S^{-1} C(1)^{-1} S^{-1} y
        let w = DVector::from_iterator(
            n,
            w1.iter().zip(&self.half_exps).map(|(v, e)| v / s.powf(*e)),
        );
        let et = self.expm(s).transpose();
        let g_xi = &et * &w * 0.5;
        let xi_v = DVector::from_column_slice(xi);
        let mut dy = &self.bmat * self.expm_apply(s, &xi_v);
        if self.op.kspec.is_heat() {
            dy += &self.b;
        }
        let ew = &et * &w;
        let ah = ew.rows(0, self.m0);
        let quad_c = (ah.transpose() * &self.a * ah)[(0, 0)];
        let dq = 2.0 * w.dot(&dy) - quad_c;
        let ds_log = self.log_sup_deriv(s) - 0.25 * dq;
        let bxi = &self.bmat * &xi_v;
        let x_top = bxi.dot(&g_xi) + ds_log;
        let mut grad_log: Vec<f64> = g_xi.rows(0, self.m0).iter().copied().collect();
        grad_log.push(x_top);
        let log_value = self.log_sup(s) - 0.25 * q;
        let value = log_value.exp();
        let underflow = self.logdet_cov(s) < LN_DET_FLOOR
            || (value == 0.0 && log_value.is_finite())
            || value.is_infinite();
        Ok(GammaEval {
            value,
            log_value,
            grad_log,
            underflow,
        })
    }

    /// Per-coordinate finite-difference steps scaled to the parabolic
    /// geometry at time gap `s`.
    pub fn parabolic_steps(&self, s: f64, h: f64) -> Vec<f64> {
        let mut out: Vec<f64> = self.half_exps.iter().map(|e| h * s.powf(*e)).collect();
        out.push(h * s);
        out
    }

    /// Parabolic dilation `diag(λ I_{m_0}, λ³ I_{m_1}, …, λ²)`.
    pub fn parabolic_dilate(&self, lambda: f64, z: &[f64]) -> Vec<f64> {
        let mut out: Vec<f64> = z[..self.n]
            .iter()
            .zip(&self.half_exps)
            .map(|(x, e)| x * lambda.powf(2.0 * e))
            .collect();
        out.push(z[self.n] * lambda * lambda);
        out
    }

    /// `∫ Γ*(ξ, t_pole - s; pole) dξ` by tensor Gauss-Hermite quadrature in
    /// whitened coordinates.
    pub fn normalization(&self, pole: &[f64], s: f64, nodes: usize) -> Result<f64> {
        check_dim("pole", self.n + 1, pole.len())?;
        let chol = self.scaled_chol(s)?;
        let jac = 2f64.powi(self.n as i32) * chol.diagonal().product();
        let einv = self.expm(-s);
        let base = DVector::from_column_slice(&pole[..self.n])
            + if self.op.kspec.is_heat() { &self.b * s } else { DVector::zeros(self.n) };
        let rule = gauss_hermite(nodes);
        let mut total = 0.0;
        tensor_for_each(self.n, rule.len(), |idx| {
            let v = DVector::from_iterator(self.n, idx.iter().map(|&i| rule.nodes[i]));
            let w: f64 = idx.iter().map(|&i| rule.weights[i]).product();
            let y = &chol * &v * 2.0;
            let xi = &einv * (&base - &y);
            let lg = self.log_value_at(&xi.as_slice()[..self.n], s, &pole[..self.n]);
            total += w * (lg + v.norm_squared()).exp() * jac;
        });
        Ok(total)
    }

    /// Cholesky factor of `C_A(s)`, i.e. `S L_1`.
    pub fn scaled_chol(&self, s: f64) -> Result<DMatrix<f64>> {
        if !(s > 0.0) {
            return Err(Error::Domain(format!("time gap {s} must be positive")));
        }
        let mut l = self.chol1.clone();
        for (i, e) in self.half_exps.iter().enumerate() {
            let f = s.powf(*e);
            l.row_mut(i).scale_mut(f);
        }
        Ok(l)
    }

    /// The point at time gap `s` below `pole` whose whitened residual is
    /// `g`, so that `Γ*(z; pole) ∝ exp(-|g|²)`.
    pub fn whitened_point(&self, pole: &[f64], s: f64, g: &[f64]) -> Result<Vec<f64>> {
        check_dim("pole", self.n + 1, pole.len())?;
        check_dim("whitened residual", self.n, g.len())?;
        let l = self.scaled_chol(s)?;
        let mut base = DVector::from_column_slice(&pole[..self.n]);
        if self.op.kspec.is_heat() {
            base += &self.b * s;
        }
        let xi = self.expm_apply(-s, &(base - l * DVector::from_column_slice(g) * 2.0));
        let mut z: Vec<f64> = xi.iter().copied().collect();
        z.push(pole[self.n] - s);
        Ok(z)
    }

    /// `∫ Γ*(ξ, t - s; x, t) φ(x) dx`, Gauss-Hermite in whitened `x`.
    pub fn smooth_against<F: Fn(&[f64]) -> f64>(
        &self,
        phi: F,
        xi: &[f64],
        s: f64,
        nodes: usize,
    ) -> Result<f64> {
        check_dim("base point", self.n, xi.len())?;
        let chol = self.scaled_chol(s)?;
        let center = self.expm_apply(s, &DVector::from_column_slice(xi))
            - if self.op.kspec.is_heat() { &self.b * s } else { DVector::zeros(self.n) };
        let rule = gauss_hermite(nodes);
        let norm = std::f64::consts::PI.powf(-(self.n as f64) / 2.0) * (self.op.c * s).exp();
        let mut total = 0.0;
        tensor_for_each(self.n, rule.len(), |idx| {
            let v = DVector::from_iterator(self.n, idx.iter().map(|&i| rule.nodes[i]));
            let w: f64 = idx.iter().map(|&i| rule.weights[i]).product();
            let x = &center + &chol * &v * 2.0;
            total += w * phi(x.as_slice());
        });
        Ok(norm * total)
    }
}

/// Visits every multi-index in `{0..n}^dim`.
pub(crate) fn tensor_for_each(dim: usize, n: usize, mut f: impl FnMut(&[usize])) {
    let mut idx = vec![0usize; dim];
    loop {
        f(&idx);
        let mut k = 0;
        loop {
            if k == dim {
                return;
            }
            idx[k] += 1;
            if idx[k] < n {
                break;
            }
            idx[k] = 0;
            k += 1;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn kolmo1() -> OperatorSpec {
        OperatorSpec::model(KolmogorovSpec::chain(&[1, 1]).unwrap())
    }

    // Scaling-and-squaring exponential as an independent oracle.
    fn expm_oracle(m: &DMatrix<f64>) -> DMatrix<f64> {
        let n = m.nrows();
        let sq = 10;
        let a = m / 2f64.powi(sq);
        let mut sum = DMatrix::identity(n, n);
        let mut term = DMatrix::identity(n, n);
        for k in 1..20 {
            term = &term * &a / k as f64;
            sum += &term;
        }
        for _ in 0..sq {
            sum = &sum * &sum;
        }
        sum
    }

    #[test]
    fn exponential_examples() {
        let k = KolmogorovSpec::chain(&[1, 1]).unwrap();
        let e2 = k.expm(2.0);
        assert_eq!(e2, DMatrix::from_row_slice(2, 2, &[1.0, 0.0, -2.0, 1.0]));
        assert_eq!(k.expm(0.0), DMatrix::identity(2, 2));
        let k3 = KolmogorovSpec::chain(&[1, 1, 1]).unwrap();
        let t = 0.7;
        let want = DMatrix::from_row_slice(3, 3, &[1.0, 0.0, 0.0, -t, 1.0, 0.0, t * t / 2.0, -t, 1.0]);
        assert!((k3.expm(t) - &want).abs().max() < 1e-15);
        let oracle = expm_oracle(&(k3.drift_matrix().to_f64() * -t));
        assert!((k3.expm(t) - oracle).abs().max() < 1e-12);
        assert!((k3.expm(0.3) * k3.expm(0.4) - k3.expm(0.7)).abs().max() < 1e-14);
        assert!(k3.is_nilpotent());
    }

    #[test]
    fn rank_and_shape_validation() {
        let bad = RatMat::from_i64(&[&[0, 0]]);
        assert!(KolmogorovSpec::new(vec![2, 1], vec![bad]).is_err());
        assert!(KolmogorovSpec::chain(&[1, 2]).is_err());
        let ok = RatMat::from_i64(&[&[0, 3]]);
        assert!(KolmogorovSpec::new(vec![2, 1], vec![ok]).is_ok());
    }

    #[test]
    fn dimensions() {
        let k = KolmogorovSpec::chain(&[1, 1]).unwrap();
        assert_eq!(k.homogeneous_dim(), 4);
        assert_eq!(k.parabolic_dim(), 6);
        let h = KolmogorovSpec::heat(3);
        assert_eq!(h.homogeneous_dim(), 4);
        assert_eq!(h.parabolic_dim(), 5);
    }

    #[test]
    fn covariance_exact_n1() {
        let k = KolmogorovSpec::chain(&[1, 1]).unwrap();
        let det = k.det_covariance_poly();
        let mut want = Poly::zero(1);
        want.add_term(vec![4], Rational::new(1, 12));
        assert_eq!(det, want);
        let f = Fundamental::new(&kolmo1()).unwrap();
        let c1 = f.covariance(1.0).unwrap();
        let want = DMatrix::from_row_slice(2, 2, &[1.0, -0.5, -0.5, 1.0 / 3.0]);
        assert!((c1 - want).abs().max() < 1e-15);
        // oracle: midpoint quadrature of E J E^T
        let nq = 20000;
        let mut acc = DMatrix::zeros(2, 2);
        for i in 0..nq {
            let s = (i as f64 + 0.5) / nq as f64;
            let e = f.expm(s);
            acc += &e * f.diffusion().to_owned().resize(2, 2, 0.0) * e.transpose() / nq as f64;
        }
        assert!((acc - f.covariance(1.0).unwrap()).abs().max() < 1e-8);
        let c = f.covariance(0.5).unwrap();
        let eig = SymmetricEigen::new(c.clone());
        assert!(eig.eigenvalues.min() > 0.0);
        assert!((c.clone() - c.transpose()).abs().max() == 0.0);
        assert!(f.covariance(0.0).is_err());
    }

    #[test]
    fn scaling_matches_polynomial_covariance() {
        let k = KolmogorovSpec::chain(&[2, 1, 1]).unwrap();
        let op = OperatorSpec::new(k, Diffusion::Matrix(vec![vec![2.0, 0.3], vec![0.3, 1.0]]), vec![], 0.0).unwrap();
        let f = Fundamental::new(&op).unwrap();
        for s in [1e-4, 0.3, 2.0, 17.0] {
            let c = f.covariance(s).unwrap();
            let l = f.scaled_chol(s).unwrap();
            let rel = (&l * l.transpose() - &c).abs().max() / c.abs().max();
            assert!(rel < 1e-12, "s={s} rel={rel}");
            let ld = c.clone().cholesky().unwrap().l().diagonal().map(|x| x.ln()).sum() * 2.0;
            assert!((ld - f.logdet_cov(s)).abs() < 1e-9 * (1.0 + ld.abs()));
        }
    }

    #[test]
    fn gamma_values() {
        let f = Fundamental::new(&kolmo1()).unwrap();
        let v = f.value(&[0.0, 0.0, 0.0], &[0.0, 0.0, 1.0]).unwrap();
        assert!((v - 3f64.sqrt() / (2.0 * std::f64::consts::PI)).abs() < 1e-14);
        assert_eq!(f.value(&[0.0, 0.0, 1.0], &[0.0, 0.0, 1.0]).unwrap(), 0.0);
        assert_eq!(f.value(&[0.0, 0.0, 2.0], &[0.0, 0.0, 1.0]).unwrap(), 0.0);
        let h = Fundamental::new(&OperatorSpec::heat(1)).unwrap();
        let v = h.value(&[0.0, 0.0], &[0.0, 1.0]).unwrap();
        assert!((v - (4.0 * std::f64::consts::PI).powf(-0.5)).abs() < 1e-15);
        let e = h.eval(&[0.0, 0.0], &[0.0, 1.0]).unwrap();
        assert_eq!(e.hgrad()[0], 0.0);
        assert!(h.eval(&[f64::NAN, 0.0], &[0.0, 1.0]).is_err());
    }

    fn numeric_grad(f: &Fundamental, z: &[f64], pole: &[f64]) -> Vec<f64> {
        let n = f.n();
        let lv = |p: &[f64]| f.log_value_at(&p[..n], pole[n] - p[n], &pole[..n]);
        let d = |i: usize, h: f64| {
            let mut a = z.to_vec();
            let mut b = z.to_vec();
            a[i] += h;
            b[i] -= h;
            (lv(&a) - lv(&b)) / (2.0 * h)
        };
        let h = 1e-6;
        let full: Vec<f64> = (0..=n).map(|i| d(i, h)).collect();
        let bmat = f.drift_matrix();
        let x = DVector::from_column_slice(&z[..n]);
        let bx = bmat * x;
        let mut out: Vec<f64> = full[..f.m0()].to_vec();
        let x0: f64 = (0..n).map(|i| bx[i] * full[i]).sum();
        out.push(x0 - full[n]);
        out
    }

    #[test]
    fn analytic_gradient_matches_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let ops = vec![
            kolmo1(),
            OperatorSpec::new(KolmogorovSpec::heat(2), Diffusion::Scalar(0.7), vec![0.4, -0.2], -0.3).unwrap(),
            OperatorSpec::model(KolmogorovSpec::chain(&[2, 1]).unwrap()),
            OperatorSpec::model(KolmogorovSpec::chain(&[1, 1, 1]).unwrap()),
        ];
        for op in ops {
            let f = Fundamental::new(&op).unwrap();
            let n = f.n();
            for _ in 0..10 {
                let mut z: Vec<f64> = (0..n).map(|_| rng.random_range(-0.5..0.5)).collect();
                z.push(rng.random_range(-1.0..-0.2));
                let pole: Vec<f64> = (0..=n).map(|_| rng.random_range(-0.2..0.2)).collect();
                let e = f.eval(&z, &pole).unwrap();
                let g = numeric_grad(&f, &z, &pole);
                for (a, b) in e.grad_log.iter().zip(&g) {
                    assert!((a - b).abs() < 1e-5 * (1.0 + b.abs()), "{a} vs {b}");
                }
            }
        }
    }

    #[test]
    fn residual_of_fundamental_solution() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let ops = vec![
            kolmo1(),
            OperatorSpec::heat(1),
            OperatorSpec::new(KolmogorovSpec::heat(2), Diffusion::Matrix(vec![vec![1.5, 0.4], vec![0.4, 0.8]]), vec![0.3, 0.1], -0.3).unwrap(),
            OperatorSpec::new(KolmogorovSpec::chain(&[1, 1]).unwrap(), Diffusion::Scalar(1.0), vec![], -0.3).unwrap(),
            OperatorSpec::new(KolmogorovSpec::chain(&[2, 1]).unwrap(), Diffusion::Matrix(vec![vec![1.0, 0.2], vec![0.2, 0.5]]), vec![], 0.0).unwrap(),
        ];
        for op in ops {
            let f = Fundamental::new(&op).unwrap();
            let n = f.n();
            let pole: Vec<f64> = vec![0.0; n + 1];
            for _ in 0..20 {
                let s: f64 = rng.random_range(0.05..1.0);
                let mut z: Vec<f64> = f
                    .half_exps()
                    .iter()
                    .map(|e| rng.random_range(-1.0..1.0) * s.powf(*e))
                    .collect();
                z.push(-s);
                let h = f.parabolic_steps(s, 1e-2);
                let u = |p: &[f64]| f.value(p, &pole).unwrap();
                let r = op.pde_residual(u, &z, &h, Form::Adjoint, None).unwrap();
                assert!(r.relative() < 1e-5, "{op:?} rel {}", r.relative());
                // direct form of Γ in its pole variable
                let zp = z.clone();
                let v = |p: &[f64]| f.value(&zp, p).unwrap();
                let r = op.pde_residual(v, &pole, &h, Form::Direct, None).unwrap();
                assert!(r.relative() < 1e-5, "direct rel {}", r.relative());
            }
        }
    }

    #[test]
    fn residual_of_constant_and_domain() {
        let op = kolmo1();
        let r = op.pde_residual(|_| 1.0, &[0.1, 0.2, 0.3], &[0.01; 3], Form::Direct, None).unwrap();
        assert_eq!(r.value, 0.0);
        let d = BoxDomain::cube(3, 0.31);
        let err = op
            .pde_residual(|_| 1.0, &[0.1, 0.2, 0.3], &[0.01; 3], Form::Direct, Some(&d))
            .unwrap_err();
        assert!(matches!(err, Error::StencilOutsideDomain { .. }));
    }

    #[test]
    fn normalization_by_hermite() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for trial in 0..20 {
            let lam = rng.random_range(0.3..3.0);
            let m = match trial % 4 {
                0 => vec![1, 1],
                1 => vec![1],
                2 => vec![2, 1],
                _ => vec![1, 1, 1],
            };
            let op = OperatorSpec::new(KolmogorovSpec::chain(&m).unwrap(), Diffusion::Scalar(lam), vec![], 0.0).unwrap();
            let f = Fundamental::new(&op).unwrap();
            let s = rng.random_range(0.01..5.0);
            let pole: Vec<f64> = (0..=f.n()).map(|_| rng.random_range(-1.0..1.0)).collect();
            let mass = f.normalization(&pole, s, 6).unwrap();
            assert!((mass - 1.0).abs() < 1e-10, "mass {mass}");
        }
    }

    #[test]
    fn normalization_by_monte_carlo() {
        let f = Fundamental::new(&kolmo1()).unwrap();
        let pole = [0.2, -0.1, 0.0];
        let s = 0.5;
        let c = f.covariance(s).unwrap();
        let einv = f.expm(-s);
        let w = &einv * &c * einv.transpose();
        let half: Vec<f64> = (0..2).map(|i| 10.0 * (2.0 * w[(i, i)]).sqrt()).collect();
        let center = &einv * DVector::from_column_slice(&pole[..2]);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let n = 200_000;
        let vol = 4.0 * half[0] * half[1];
        let mut sum = 0.0;
        let mut sq = 0.0;
        for _ in 0..n {
            let x = center[0] + rng.random_range(-half[0]..half[0]);
            let y = center[1] + rng.random_range(-half[1]..half[1]);
            let v = vol * f.value(&[x, y, -s], &pole).unwrap();
            sum += v;
            sq += v * v;
        }
        let mean = sum / n as f64;
        let sd = ((sq / n as f64 - mean * mean) / n as f64).sqrt();
        assert!((mean - 1.0).abs() < 3.0 * sd, "{mean} ± {sd}");
    }

    #[test]
    fn whitened_points() {
        let op = OperatorSpec::new(KolmogorovSpec::chain(&[2, 1]).unwrap(), Diffusion::Matrix(vec![vec![1.0, 0.2], vec![0.2, 0.5]]), vec![], 0.0).unwrap();
        let f = Fundamental::new(&op).unwrap();
        let pole = [0.3, -0.2, 0.1, 0.5];
        let top = f.value(&f.whitened_point(&pole, 0.4, &[0.0; 3]).unwrap(), &pole).unwrap();
        let g = [0.5, -1.0, 0.7];
        let z = f.whitened_point(&pole, 0.4, &g).unwrap();
        let want = top * (-(0.25 + 1.0 + 0.49f64)).exp();
        assert!((f.value(&z, &pole).unwrap() - want).abs() < 1e-12 * want);
        assert!((z[3] - 0.1).abs() < 1e-15);
    }

    #[test]
    fn parabolic_homogeneity() {
        for m in [vec![1, 1], vec![2], vec![1, 1, 1]] {
            let f = Fundamental::new(&OperatorSpec::model(KolmogorovSpec::chain(&m).unwrap())).unwrap();
            let n = f.n();
            let pole = vec![0.0; n + 1];
            let mut z: Vec<f64> = (0..n).map(|i| 0.3 - 0.2 * i as f64).collect();
            z.push(-0.7);
            let base = f.value(&z, &pole).unwrap();
            for lam in [0.1, 0.5, 3.0] {
                let dz = f.parabolic_dilate(lam, &z);
                let v = f.value(&dz, &pole).unwrap() * lam.powi(f.parabolic_dim() as i32 - 2);
                assert!((v - base).abs() <= 1e-9 * base, "{m:?} {lam}");
            }
        }
    }

    #[test]
    fn chapman_kolmogorov() {
        use rand_distr::{Distribution, StandardNormal};
        let f = Fundamental::new(&kolmo1()).unwrap();
        let top = [0.1, 0.2, 1.0];
        let bottom = [-0.2, 0.1, 0.0];
        let mid_t = 0.4;
        let s = top[2] - mid_t;
        let chol = f.scaled_chol(s).unwrap();
        let einv = f.expm(-s);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let n = 100_000;
        let (mut sum, mut sq) = (0.0, 0.0);
        for _ in 0..n {
            let g = DVector::from_iterator(2, (0..2).map(|_| StandardNormal.sample(&mut rng)));
            // η from the density Γ(top; η, mid_t): y = √2 L g
            let y = &chol * g * 2f64.sqrt();
            let eta = &einv * (DVector::from_column_slice(&top[..2]) - y);
            let v = f.value(&bottom, &[eta[0], eta[1], mid_t]).unwrap();
            sum += v;
            sq += v * v;
        }
        let mean = sum / n as f64;
        let sd = ((sq / n as f64 - mean * mean) / n as f64).sqrt();
        let exact = f.value(&bottom, &top).unwrap();
        assert!((mean - exact).abs() < 3.0 * sd, "{mean} vs {exact} ± {sd}");
    }

    #[test]
    fn serde_roundtrip() {
        let op = OperatorSpec::new(KolmogorovSpec::chain(&[2, 1]).unwrap(), Diffusion::Scalar(2.0), vec![], -0.1).unwrap();
        let js = serde_json::to_string(&op).unwrap();
        let back: OperatorSpec = serde_json::from_str(&js).unwrap();
        assert_eq!(back, op);
        let short: KolmogorovSpec = serde_json::from_str(r#"{"m_dims":[1,1]}"#).unwrap();
        assert_eq!(short, KolmogorovSpec::chain(&[1, 1]).unwrap());
        assert!(serde_json::from_str::<KolmogorovSpec>(r#"{"m_dims":[1,2]}"#).is_err());
    }

    #[test]
    fn validation() {
        let k = KolmogorovSpec::chain(&[1, 1]).unwrap();
        assert!(OperatorSpec::new(k.clone(), Diffusion::Scalar(1.0), vec![1.0], 0.0).is_err());
        assert!(OperatorSpec::new(k.clone(), Diffusion::Scalar(1.0), vec![], 0.5).is_err());
        assert!(OperatorSpec::new(k.clone(), Diffusion::Scalar(-1.0), vec![], 0.0).is_err());
        let op = OperatorSpec::new(KolmogorovSpec::heat(2), Diffusion::Matrix(vec![vec![2.0, 0.0], vec![0.0, 0.25]]), vec![], 0.0).unwrap();
        assert_eq!(op.ellipticity().unwrap(), 4.0);
    }
}
