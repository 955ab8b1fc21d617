//! Polynomial vector fields `X = Σ c_k(z) ∂_k`, their brackets, the
//! Hörmander rank condition and invariance under the group structure.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Result};
use crate::group::{GroupSpec, AXIOM_TOL};
use crate::kolmo::KolmogorovSpec;
use crate::poly::{Poly, Rational};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PolyVectorField {
    pub coeffs: Vec<Poly<Rational>>,
}

impl PolyVectorField {
    pub fn new(coeffs: Vec<Poly<Rational>>) -> Result<Self> {
        let n = coeffs.len();
        for c in &coeffs {
            check_dim("field coefficient variables", n, c.nvars())?;
        }
        Ok(Self { coeffs })
    }

    pub fn zero(dim: usize) -> Self {
        Self {
            coeffs: vec![Poly::zero(dim); dim],
        }
    }

    /// The coordinate field `∂_i`.
    pub fn coordinate(dim: usize, i: usize) -> Self {
        let mut f = Self::zero(dim);
        f.coeffs[i] = Poly::constant(dim, Rational::from_integer(1));
        f
    }

    pub fn dim(&self) -> usize {
        self.coeffs.len()
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.iter().all(Poly::is_zero)
    }

    /// `X p = Σ c_k ∂_k p`.
    pub fn apply(&self, p: &Poly<Rational>) -> Poly<Rational> {
        let mut out = Poly::zero(p.nvars());
        for (k, c) in self.coeffs.iter().enumerate() {
            if c.is_zero() {
                continue;
            }
            let d = p.derivative(k);
            if !d.is_zero() {
                out = &out + &(c * &d);
            }
        }
        out
    }

    /// Same as [`Self::apply`] on a real-coefficient polynomial.
    pub fn apply_f64(&self, p: &Poly<f64>) -> Poly<f64> {
        let mut out = Poly::zero(p.nvars());
        for (k, c) in self.coeffs.iter().enumerate() {
            if c.is_zero() {
                continue;
            }
            let d = p.derivative(k);
            if !d.is_zero() {
                out = &out + &(&c.to_f64() * &d);
            }
        }
        out
    }

    /// Coefficient vector at `z`.
    pub fn eval(&self, z: &[f64]) -> Vec<f64> {
        self.coeffs.iter().map(|c| c.eval(z)).collect()
    }

    /// Directional derivative `X u(z)` for a smooth `u` given its gradient.
    pub fn derivative_with(&self, z: &[f64], grad: &[f64]) -> f64 {
        self.eval(z).iter().zip(grad).map(|(c, g)| c * g).sum()
    }

    pub fn add(&self, other: &Self) -> Self {
        Self {
            coeffs: self
                .coeffs
                .iter()
                .zip(&other.coeffs)
                .map(|(a, b)| a + b)
                .collect(),
        }
    }

    pub fn sub(&self, other: &Self) -> Self {
        Self {
            coeffs: self
                .coeffs
                .iter()
                .zip(&other.coeffs)
                .map(|(a, b)| a - b)
                .collect(),
        }
    }

    pub fn scale(&self, c: Rational) -> Self {
        Self {
            coeffs: self.coeffs.iter().map(|p| p.scale(&c)).collect(),
        }
    }

    /// Coordinate divergence `Σ ∂_k c_k`; zero means `X* = -X`.
    pub fn divergence(&self) -> Poly<Rational> {
        self.coeffs
            .iter()
            .enumerate()
            .fold(Poly::zero(self.dim()), |acc, (k, c)| &acc + &c.derivative(k))
    }
}

/// `[a, b]_k = a(b_k) - b(a_k)`.
pub fn lie_bracket(a: &PolyVectorField, b: &PolyVectorField) -> PolyVectorField {
    PolyVectorField {
        coeffs: a
            .coeffs
            .iter()
            .zip(&b.coeffs)
            .map(|(ak, bk)| &a.apply(bk) - &b.apply(ak))
            .collect(),
    }
}

/// `[a,[b,c]] + [b,[c,a]] + [c,[a,b]]`.
pub fn jacobi(a: &PolyVectorField, b: &PolyVectorField, c: &PolyVectorField) -> PolyVectorField {
    lie_bracket(a, &lie_bracket(b, c))
        .add(&lie_bracket(b, &lie_bracket(c, a)))
        .add(&lie_bracket(c, &lie_bracket(a, b)))
}

/// Orthonormal frame `X_1, …, X_m, X_{m+1}`; the last field carries the drift.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Frame {
    pub fields: Vec<PolyVectorField>,
    pub m: usize,
}

/// One entry of a bracket table: the word `[X_{i1},[X_{i2},…]]` and its value.
#[derive(Clone, Debug, PartialEq)]
pub struct Bracket {
    pub word: Vec<usize>,
    pub field: PolyVectorField,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FieldReport {
    pub samples: usize,
    pub invariance: f64,
    pub homogeneity: f64,
    pub pass: bool,
}

impl Frame {
    pub fn new(fields: Vec<PolyVectorField>) -> Result<Self> {
        let dim = fields.first().map_or(0, PolyVectorField::dim);
        for f in &fields {
            check_dim("frame field dimension", dim, f.dim())?;
        }
        let m = fields.len().saturating_sub(1);
        Ok(Self { fields, m })
    }

    pub fn dim(&self) -> usize {
        self.fields.first().map_or(0, PolyVectorField::dim)
    }

    /// Brackets of length `1..=depth`, built as right-nested words.
    pub fn bracket_table(&self, depth: usize) -> Vec<Bracket> {
        let mut all: Vec<Bracket> = self
            .fields
            .iter()
            .enumerate()
            .map(|(i, f)| Bracket {
                word: vec![i],
                field: f.clone(),
            })
            .collect();
        let mut last = all.clone();
        for _ in 1..depth {
            let mut next = Vec::new();
            for (i, f) in self.fields.iter().enumerate() {
                for b in &last {
                    if b.word[0] == i && b.word.len() == 1 {
                        continue;
                    }
                    let mut word = vec![i];
                    word.extend_from_slice(&b.word);
                    next.push(Bracket {
                        word,
                        field: lie_bracket(f, &b.field),
                    });
                }
            }
            all.extend(next.iter().cloned());
            last = next;
        }
        all
    }

    /// Rank at `z` of all brackets up to `depth` (singular values above
    /// `1e-8 σ_max`).
    pub fn hormander_rank(&self, z: &[f64], depth: usize) -> usize {
        let table = self.bracket_table(depth.max(1));
        let n = self.dim();
        let rows: Vec<Vec<f64>> = table.iter().map(|b| b.field.eval(z)).collect();
        let m = DMatrix::from_fn(rows.len(), n, |i, j| rows[i][j]);
        let sv = m.svd(false, false).singular_values;
        let smax = sv.max();
        if smax == 0.0 {
            return 0;
        }
        sv.iter().filter(|&&s| s >= 1e-8 * smax).count()
    }

    /// All brackets of length `mu + 1` vanish identically.
    pub fn is_nilpotent_of_step(&self, mu: usize) -> bool {
        self.bracket_table(mu + 1)
            .iter()
            .filter(|b| b.word.len() == mu + 1)
            .all(|b| b.field.is_zero())
    }

    pub fn divergence_free(&self) -> bool {
        self.fields.iter().all(|f| f.divergence().is_zero())
    }

    /// Left invariance `(dℓ_ζ) X(z) = X(ζ∘z)` and degree-one homogeneity
    /// `c_k(δ_λ z) = λ^{e_k - 1} c_k(z)` on random samples.
    pub fn check_invariance_homogeneity(&self, g: &GroupSpec, samples: usize, seed: u64) -> Result<FieldReport> {
        check_dim("frame dimension", g.total_dim(), self.dim())?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let exps = g.dilation_exps();
        let (mut inv, mut hom) = (0.0f64, 0.0f64);
        for _ in 0..samples.max(1) {
            let zeta = g.random_point(&mut rng, 1.0);
            let z = g.random_point(&mut rng, 1.0);
            let lambda = rng.random_range(0.5..2.0);
            let jac = g.left_translation_jacobian(&zeta, &z)?;
            let moved = g.compose(&zeta, &z)?;
            let dz = g.dilate(lambda, &z)?;
            for f in &self.fields {
                let at_z = nalgebra::DVector::from_vec(f.eval(&z.0));
                let pushed = &jac * at_z;
                let at_moved = f.eval(&moved.0);
                for (a, b) in pushed.iter().zip(&at_moved) {
                    inv = inv.max((a - b).abs());
                }
                let c_z = f.eval(&z.0);
                let c_dz = f.eval(&dz.0);
                for k in 0..c_z.len() {
                    let want = lambda.powi(exps[k] as i32 - 1) * c_z[k];
                    hom = hom.max((c_dz[k] - want).abs());
                }
            }
        }
        Ok(FieldReport {
            samples,
            invariance: inv,
            homogeneity: hom,
            pass: inv <= AXIOM_TOL && hom <= AXIOM_TOL,
        })
    }
}

/// Heisenberg heat frame on `(x, y, s, t)`: `X_j = ∂x_j + 2y_j∂s`,
/// `Y_j = ∂y_j - 2x_j∂s`, last field `-∂_t`.
pub fn heisenberg_heat_frame(n: usize) -> Frame {
    let dim = 2 * n + 2;
    let two = Rational::from_integer(2);
    let s = 2 * n;
    let mut fields = Vec::new();
    for j in 0..n {
        let mut f = PolyVectorField::coordinate(dim, j);
        f.coeffs[s] = Poly::var(dim, n + j).scale(&two);
        fields.push(f);
    }
    for j in 0..n {
        let mut f = PolyVectorField::coordinate(dim, n + j);
        f.coeffs[s] = Poly::var(dim, j).scale(&-two);
        fields.push(f);
    }
    fields.push(PolyVectorField::coordinate(dim, dim - 1).scale(Rational::from_integer(-1)));
    Frame::new(fields).expect("consistent dimensions")
}

/// `∂_{x_1}, …, ∂_{x_{m_0}}` and `X_{m+1} = ⟨Bx, ∇⟩ - ∂_t`.
pub fn kolmogorov_frame(k: &KolmogorovSpec) -> Frame {
    let n = k.dim();
    let dim = n + 1;
    let mut fields: Vec<PolyVectorField> = (0..k.m0()).map(|i| PolyVectorField::coordinate(dim, i)).collect();
    let b = k.drift_matrix();
    let mut drift = PolyVectorField::zero(dim);
    for i in 0..n {
        let mut c = Poly::zero(dim);
        for j in 0..n {
            let bij = b[(i, j)];
            if bij != Rational::from_integer(0) {
                c = &c + &Poly::var(dim, j).scale(&bij);
            }
        }
        drift.coeffs[i] = c;
    }
    drift.coeffs[n] = Poly::constant(dim, Rational::from_integer(-1));
    fields.push(drift);
    Frame::new(fields).expect("consistent dimensions")
}

/// Coordinate frame of `R^n`.
pub fn euclidean_frame(n: usize) -> Frame {
    Frame::new((0..n).map(|i| PolyVectorField::coordinate(n, i)).collect()).expect("consistent dimensions")
}

/// Flow of `X` from `z` for time `s` (RK4 with `steps` steps).
pub fn flow(x: &PolyVectorField, z: &[f64], s: f64, steps: usize) -> Vec<f64> {
    let h = s / steps as f64;
    let mut p = z.to_vec();
    let axpy = |a: &[f64], k: &[f64], h: f64| -> Vec<f64> { a.iter().zip(k).map(|(a, k)| a + h * k).collect() };
    for _ in 0..steps {
        let k1 = x.eval(&p);
        let k2 = x.eval(&axpy(&p, &k1, h / 2.0));
        let k3 = x.eval(&axpy(&p, &k2, h / 2.0));
        let k4 = x.eval(&axpy(&p, &k3, h));
        for i in 0..p.len() {
            p[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
    }
    p
}

/// `X u(z)` from the flow: central difference of `u` along the integral curve.
pub fn lie_derivative_by_flow<F: Fn(&[f64]) -> f64>(x: &PolyVectorField, u: F, z: &[f64], h: f64) -> f64 {
    let fwd = flow(x, z, h, 8);
    let bwd = flow(x, z, -h, 8);
    let fwd2 = flow(x, z, 2.0 * h, 16);
    let bwd2 = flow(x, z, -2.0 * h, 16);
    (8.0 * (u(&fwd) - u(&bwd)) - (u(&fwd2) - u(&bwd2))) / (12.0 * h)
}
