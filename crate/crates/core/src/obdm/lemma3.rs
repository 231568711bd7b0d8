use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{determinant, spectral_norm};
use crate::error::{Error, Result};
use crate::scalar::{cplx, modulus, norm_sqr, Complex, Real};

/// Absolute slack allowed on top of the bound.
pub const LEMMA3_SLACK: f64 = 1e-12;

/// A sampled instance that broke the inequality.
#[derive(Debug, Clone, PartialEq)]
pub struct Lemma3Instance {
    pub trial: usize,
    pub det_abs: f64,
    pub bound: f64,
    /// `v`, `w` and `K` in a plain-text dump.
    pub dump: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Lemma3Report {
    pub p: usize,
    pub q: usize,
    pub trials: usize,
    /// Largest `|det| / (sqrt(e) ||v|| ||w|| ||B||)` seen.
    pub max_ratio: f64,
    pub violations: Vec<Lemma3Instance>,
}

impl Lemma3Report {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

/// `|det M|` and `sqrt(e) ||v|| ||w|| ||B||` for
/// `M = [[0, v^T, 0], [0, A, B], [w, C, D]]` and `K = [[A, B], [C, D]]` with `A` of size `p`.
pub fn lemma3_ratio<T: Real>(
    v: &[Complex<T>],
    w: &[Complex<T>],
    k: &DMatrix<Complex<T>>,
) -> (T, T) {
    let p = v.len();
    let q = w.len();
    let n = p + q;
    assert_eq!(k.nrows(), n, "K must be (p+q) x (p+q)");
    let mut m = DMatrix::from_element(n + 1, n + 1, cplx(T::zero()));
    for a in 0..p {
        m[(0, 1 + a)] = v[a];
    }
    for b in 0..q {
        m[(1 + p + b, 0)] = w[b];
    }
    m.view_mut((1, 1), (n, n)).copy_from(k);
    let det = modulus(determinant(m));
    let nv = v.iter().fold(T::zero(), |s, z| s + norm_sqr(*z)).sqrt();
    let nw = w.iter().fold(T::zero(), |s, z| s + norm_sqr(*z)).sqrt();
    let b = k.view((0, p), (p, q)).into_owned();
    let bound = T::lit(std::f64::consts::E.sqrt()) * nv * nw * spectral_norm(&b);
    (det, bound)
}

fn gaussian_matrix(rng: &mut ChaCha8Rng, n: usize) -> DMatrix<Complex<f64>> {
    DMatrix::from_fn(n, n, |_, _| {
        Complex::new(StandardNormal.sample(rng), StandardNormal.sample(rng))
    })
}

fn gaussian_vector(rng: &mut ChaCha8Rng, n: usize) -> Vec<Complex<f64>> {
    (0..n)
        .map(|_| Complex::new(StandardNormal.sample(rng), StandardNormal.sample(rng)))
        .collect()
}

fn random_unitary(rng: &mut ChaCha8Rng, n: usize) -> DMatrix<Complex<f64>> {
    gaussian_matrix(rng, n).qr().q()
}

/// Random `K` with `||K|| = 1`: a Hermitian matrix scaled to unit norm and
/// rotated by two independent random unitaries, `U H V^*`.
fn random_contraction(rng: &mut ChaCha8Rng, n: usize) -> DMatrix<Complex<f64>> {
    let g = gaussian_matrix(rng, n);
    let herm = (&g + g.adjoint()) * Complex::new(0.5, 0.0);
    let scaled = &herm * Complex::new(1.0 / spectral_norm(&herm), 0.0);
    let u = random_unitary(rng, n);
    let v = random_unitary(rng, n);
    u * scaled * v.adjoint()
}

/// Randomized check of `|det| <= sqrt(e) ||v|| ||w|| ||B||`.
pub fn lemma3_check(p: usize, q: usize, trials: usize, seed: u64) -> Result<Lemma3Report> {
    if p == 0 || q == 0 {
        return Err(Error::Contract(format!("need p, q >= 1, got p = {p}, q = {q}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut max_ratio = 0.0f64;
    let mut violations = Vec::new();
    for trial in 0..trials {
        let k = random_contraction(&mut rng, p + q);
        let v = gaussian_vector(&mut rng, p);
        let w = gaussian_vector(&mut rng, q);
        let (det, bound) = lemma3_ratio(&v, &w, &k);
        if bound > 0.0 {
            max_ratio = max_ratio.max(det / bound);
        }
        if det > bound + LEMMA3_SLACK {
            violations.push(Lemma3Instance {
                trial,
                det_abs: det,
                bound,
                dump: format!("v = {v:?}\nw = {w:?}\nK = {k}"),
            });
        }
    }
    Ok(Lemma3Report {
        p,
        q,
        trials,
        max_ratio,
        violations,
    })
}
