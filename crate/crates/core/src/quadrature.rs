//! One-dimensional quadrature rules.

use nalgebra::{DMatrix, SymmetricEigen};

/// Nodes and weights of a quadrature rule.
#[derive(Clone, Debug)]
pub struct Rule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl Rule {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn integrate(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.nodes.iter().zip(&self.weights).map(|(&x, &w)| w * f(x)).sum()
    }
}

// Golub-Welsch: eigenpairs of the symmetric Jacobi matrix.
fn golub_welsch(n: usize, offdiag: impl Fn(usize) -> f64, mu0: f64) -> Rule {
    let mut jm = DMatrix::<f64>::zeros(n, n);
    for k in 1..n {
        let b = offdiag(k);
        jm[(k - 1, k)] = b;
        jm[(k, k - 1)] = b;
    }
    let eig = SymmetricEigen::new(jm);
    let mut pairs: Vec<(f64, f64)> = (0..n)
        .map(|i| {
            let v0 = eig.eigenvectors[(0, i)];
            (eig.eigenvalues[i], mu0 * v0 * v0)
        })
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    // symmetrize to kill eigen-solver asymmetry
    for i in 0..n / 2 {
        let j = n - 1 - i;
        let x = 0.5 * (pairs[j].0 - pairs[i].0);
        let w = 0.5 * (pairs[i].1 + pairs[j].1);
        pairs[i] = (-x, w);
        pairs[j] = (x, w);
    }
    if n % 2 == 1 {
        pairs[n / 2].0 = 0.0;
    }
    Rule {
        nodes: pairs.iter().map(|p| p.0).collect(),
        weights: pairs.iter().map(|p| p.1).collect(),
    }
}

/// Gauss-Hermite rule for `∫ f(x) e^{-x²} dx`.
pub fn gauss_hermite(n: usize) -> Rule {
    golub_welsch(n, |k| (k as f64 / 2.0).sqrt(), std::f64::consts::PI.sqrt())
}

/// Gauss-Legendre rule on `[a, b]`.
pub fn gauss_legendre(n: usize, a: f64, b: f64) -> Rule {
    let r = golub_welsch(
        n,
        |k| {
            let k = k as f64;
            k / (4.0 * k * k - 1.0).sqrt()
        },
        2.0,
    );
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    Rule {
        nodes: r.nodes.iter().map(|x| mid + half * x).collect(),
        weights: r.weights.iter().map(|w| half * w).collect(),
    }
}

/// Tanh-sinh rule on `[a, b]` with step `h`; nodes whose weight drops
/// below `1e-300` or that round onto an endpoint are discarded.
pub fn tanh_sinh(a: f64, b: f64, h: f64) -> Rule {
    use std::f64::consts::FRAC_PI_2;
    let half = 0.5 * (b - a);
    let mut nodes = Vec::new();
    let mut weights = Vec::new();
    let mut push = |t: f64| -> bool {
        let u = FRAC_PI_2 * t.sinh();
        let ch = u.cosh();
        let w = h * FRAC_PI_2 * t.cosh() / (ch * ch);
        // distance from the nearer endpoint, computed without cancellation
        let gap = 1.0 / (u.abs().exp() * ch);
        let x = if t >= 0.0 {
            b - half * gap
        } else {
            a + half * gap
        };
        if w < 1e-300 || x <= a || x >= b {
            return false;
        }
        nodes.push(x);
        weights.push(half * w);
        true
    };
    push(0.0);
    let mut k = 1;
    loop {
        let t = k as f64 * h;
        let r = push(t);
        let l = push(-t);
        if !r && !l {
            break;
        }
        k += 1;
        if k > 100_000 {
            break;
        }
    }
    let mut pairs: Vec<(f64, f64)> = nodes.into_iter().zip(weights).collect();
    pairs.sort_by(|p, q| p.0.total_cmp(&q.0));
    Rule {
        nodes: pairs.iter().map(|p| p.0).collect(),
        weights: pairs.iter().map(|p| p.1).collect(),
    }
}
