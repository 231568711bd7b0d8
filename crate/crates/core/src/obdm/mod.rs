//! Bosonic one-body density matrix from bordered determinants.
//!
//! For eval points `x <= y` the kernel is `gamma(x, y) = -det B` with
//!
//! ```text
//! B = [ 0        conj(phi(y))^T ]
//!     [ phi(x)   K(x, y)        ]
//! K(x, y) = I - 2 S,   S_ab = h sum_{x <= z < y} phi_a(z) conj(phi_b(z)).
//! ```
//!
//! Pairs with `x > y` use Hermitian symmetry.

mod lemma3;
mod oracle;

pub use lemma3::{lemma3_check, lemma3_ratio, Lemma3Instance, Lemma3Report};
pub use oracle::brute_force_gamma;

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::scalar::{conj, cplx, modulus, norm_sqr, Complex, Real};
use crate::spectral::{OrbitalSelection, SpectralData};

/// Size up to which [`largest_eigenvalue`] uses a full eigendecomposition.
pub const DENSE_EIGEN_LIMIT: usize = 2048;

/// Every `(M / m_s)`-th grid point, `m_s` points per unit cell.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EvalGrid {
    grid: Grid,
    samples_per_unit: usize,
    points: Vec<usize>,
}

impl EvalGrid {
    pub fn new(grid: &Grid, samples_per_unit: usize) -> Result<Self> {
        let m = grid.points_per_unit();
        if samples_per_unit == 0 || !m.is_multiple_of(samples_per_unit) {
            return Err(Error::Config(format!(
                "eval resolution {samples_per_unit} must divide points per unit {m}"
            )));
        }
        let stride = m / samples_per_unit;
        Ok(EvalGrid {
            grid: *grid,
            samples_per_unit,
            points: (0..grid.num_points()).step_by(stride).collect(),
        })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn samples_per_unit(&self) -> usize {
        self.samples_per_unit
    }

    /// Grid indices of the eval points, ascending.
    pub fn points(&self) -> &[usize] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Quadrature weight `1 / m_s` of one eval point.
    pub fn weight<T: Real>(&self) -> T {
        T::one() / T::of_usize(self.samples_per_unit)
    }

    /// Eval indices lying in cell `c`.
    pub fn cell_points(&self, c: usize) -> std::ops::Range<usize> {
        c * self.samples_per_unit..(c + 1) * self.samples_per_unit
    }
}

/// Running overlap matrices `S(p)` at each eval point plus the full-ring total.
#[derive(Debug, Clone)]
pub struct OverlapPrefix<T: Real> {
    eval: EvalGrid,
    /// `prefix[p]` sums grid points strictly before eval point `p`;
    /// `prefix[len]` covers the whole ring.
    prefix: Vec<DMatrix<Complex<T>>>,
    /// `phi_a(x_p)` with orbitals as rows.
    values: DMatrix<Complex<T>>,
}

impl<T: Real> OverlapPrefix<T> {
    /// Builds the table from orbitals given as columns of an `n_g x N` matrix.
    pub fn from_orbitals(orbitals: &DMatrix<Complex<T>>, eval: &EvalGrid) -> Result<Self> {
        let ng = eval.grid().num_points();
        if orbitals.nrows() != ng {
            return Err(Error::Contract(format!(
                "orbitals have {} rows, grid has {ng} points",
                orbitals.nrows()
            )));
        }
        let n = orbitals.ncols();
        let h = cplx(eval.grid().spacing::<T>());
        let mut acc = DMatrix::from_element(n, n, cplx(T::zero()));
        let mut prefix = Vec::with_capacity(eval.len() + 1);
        let mut next = 0;
        for l in 0..ng {
            if next < eval.len() && eval.points()[next] == l {
                prefix.push(acc.clone());
                next += 1;
            }
            let row = orbitals.row(l);
            for a in 0..n {
                let pa = row[a] * h;
                for b in 0..n {
                    acc[(a, b)] += pa * conj(row[b]);
                }
            }
        }
        prefix.push(acc);
        let values = DMatrix::from_fn(n, eval.len(), |a, p| orbitals[(eval.points()[p], a)]);
        Ok(OverlapPrefix {
            eval: eval.clone(),
            prefix,
            values,
        })
    }

    pub fn eval(&self) -> &EvalGrid {
        &self.eval
    }

    pub fn particles(&self) -> usize {
        self.values.nrows()
    }

    /// `S(p)`; `p = eval.len()` gives the full-ring overlap.
    pub fn at(&self, p: usize) -> &DMatrix<Complex<T>> {
        &self.prefix[p]
    }

    pub fn orbital_value(&self, a: usize, p: usize) -> Complex<T> {
        self.values[(a, p)]
    }

    /// `sum_a |phi_a(x_p)|^2`.
    pub fn density(&self, p: usize) -> T {
        self.values.column(p).iter().fold(T::zero(), |s, z| s + norm_sqr(*z))
    }
}

/// Selected orbitals of `spec` as an `n_g x N` matrix.
pub fn selected_orbitals<T: Real>(
    spec: &SpectralData<T>,
    sel: &OrbitalSelection<T>,
) -> Result<DMatrix<Complex<T>>> {
    if let Some(&bad) = sel.indices.iter().find(|&&j| j >= spec.len()) {
        return Err(Error::Contract(format!("orbital index {bad} out of range")));
    }
    Ok(spec.eigenvectors().select_columns(&sel.indices))
}

pub fn prefix_overlaps<T: Real>(
    spec: &SpectralData<T>,
    sel: &OrbitalSelection<T>,
    eval: &EvalGrid,
) -> Result<OverlapPrefix<T>> {
    sel.require_nonempty()?;
    OverlapPrefix::from_orbitals(&selected_orbitals(spec, sel)?, eval)
}

/// `K(x_p, x_q) = I - 2 (S(q) - S(p))` for `p <= q`.
#[derive(Debug, Clone, PartialEq)]
pub struct KMatrix<T: Real>(pub DMatrix<Complex<T>>);

impl<T: Real> KMatrix<T> {
    pub fn matrix(&self) -> &DMatrix<Complex<T>> {
        &self.0
    }

    pub fn norm(&self) -> T {
        spectral_norm(&self.0)
    }
}

pub fn k_matrix<T: Real>(prefix: &OverlapPrefix<T>, p: usize, q: usize) -> Result<KMatrix<T>> {
    if p > q || q > prefix.eval.len() {
        return Err(Error::Contract(format!(
            "k_matrix needs p <= q <= {}, got p = {p}, q = {q}",
            prefix.eval.len()
        )));
    }
    let n = prefix.particles();
    let two = cplx(T::lit(2.0));
    let diff = &prefix.prefix[q] - &prefix.prefix[p];
    Ok(KMatrix(DMatrix::identity(n, n) - diff * two))
}

/// Largest singular value.
pub fn spectral_norm<T: Real>(m: &DMatrix<Complex<T>>) -> T {
    if m.is_empty() {
        return T::zero();
    }
    m.clone()
        .singular_values()
        .iter()
        .fold(T::zero(), |a, s| a.max(*s))
}

/// `[[0, r^T], [c, K]]`.
pub fn bordered<T: Real>(
    row: &[Complex<T>],
    col: &[Complex<T>],
    k: &DMatrix<Complex<T>>,
) -> DMatrix<Complex<T>> {
    let n = k.nrows();
    let mut b = DMatrix::from_element(n + 1, n + 1, cplx(T::zero()));
    for a in 0..n {
        b[(0, a + 1)] = row[a];
        b[(a + 1, 0)] = col[a];
    }
    b.view_mut((1, 1), (n, n)).copy_from(k);
    b
}

pub fn determinant<T: Real>(m: DMatrix<Complex<T>>) -> Complex<T> {
    if m.is_empty() {
        return cplx(T::one());
    }
    m.lu().determinant()
}

/// Adjugate through bordered determinants, `adj(K)_ab = -det[[0, e_a^T], [e_b, K]]`.
pub fn adjugate<T: Real>(k: &DMatrix<Complex<T>>) -> DMatrix<Complex<T>> {
    let n = k.nrows();
    DMatrix::from_fn(n, n, |a, b| {
        let mut r = vec![cplx(T::zero()); n];
        let mut c = vec![cplx(T::zero()); n];
        r[a] = cplx(T::one());
        c[b] = cplx(T::one());
        -determinant(bordered(&r, &c, k))
    })
}

/// `gamma(x_p, x_q)`; ordering and conjugation are handled internally.
pub fn gamma_point<T: Real>(prefix: &OverlapPrefix<T>, p: usize, q: usize) -> Result<Complex<T>> {
    if p > q {
        return gamma_point(prefix, q, p).map(conj);
    }
    let n = prefix.particles();
    let k = k_matrix(prefix, p, q)?;
    let row: Vec<_> = (0..n).map(|a| conj(prefix.orbital_value(a, q))).collect();
    let col: Vec<_> = (0..n).map(|a| prefix.orbital_value(a, p)).collect();
    let b = bordered(&row, &col, k.matrix());
    let g = -determinant(b);
    if !(g.re.is_finite() && g.im.is_finite()) {
        return Err(Error::Numerical(format!(
            "non-finite bordered determinant at ({p}, {q}), ||K|| = {}",
            k.norm().as_f64()
        )));
    }
    Ok(g)
}

/// `gamma` sampled on an eval grid, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ObdmKernel<T> {
    cells: usize,
    samples_per_unit: usize,
    particles: usize,
    values: Vec<Complex<T>>,
}

impl<T: Real> ObdmKernel<T> {
    pub fn from_values(
        cells: usize,
        samples_per_unit: usize,
        particles: usize,
        values: Vec<Complex<T>>,
    ) -> Result<Self> {
        let n = cells * samples_per_unit;
        if values.len() != n * n {
            return Err(Error::Contract(format!(
                "kernel needs {} entries, got {}",
                n * n,
                values.len()
            )));
        }
        Ok(ObdmKernel {
            cells,
            samples_per_unit,
            particles,
            values,
        })
    }

    pub fn cells(&self) -> usize {
        self.cells
    }

    pub fn samples_per_unit(&self) -> usize {
        self.samples_per_unit
    }

    pub fn particles(&self) -> usize {
        self.particles
    }

    pub fn len(&self) -> usize {
        self.cells * self.samples_per_unit
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn weight(&self) -> T {
        T::one() / T::of_usize(self.samples_per_unit)
    }

    #[inline]
    pub fn get(&self, p: usize, q: usize) -> Complex<T> {
        self.values[p * self.len() + q]
    }

    pub fn values(&self) -> &[Complex<T>] {
        &self.values
    }

    /// `w sum_p gamma(x_p, x_p)`, the quadrature of `tr gamma = N`.
    pub fn trace(&self) -> T {
        (0..self.len()).fold(T::zero(), |a, p| a + self.get(p, p).re) * self.weight()
    }

    pub fn hermiticity_defect(&self) -> T {
        let n = self.len();
        let mut worst = T::zero();
        for p in 0..n {
            for q in 0..n {
                worst = worst.max(modulus(self.get(p, q) - conj(self.get(q, p))));
            }
        }
        worst
    }

    /// The `w`-weighted matrix `w gamma(x_p, x_q)`.
    pub fn weighted_matrix(&self) -> DMatrix<Complex<T>> {
        let n = self.len();
        let w = cplx(self.weight());
        DMatrix::from_fn(n, n, |p, q| self.get(p, q) * w)
    }

    /// Pointwise average of kernels with the same shape.
    pub fn mean(kernels: &[ObdmKernel<T>]) -> Result<Self> {
        let first = kernels
            .first()
            .ok_or_else(|| Error::Contract("mean of no kernels".into()))?;
        if kernels
            .iter()
            .any(|k| k.cells != first.cells || k.samples_per_unit != first.samples_per_unit)
        {
            return Err(Error::Contract("kernels differ in shape".into()));
        }
        let inv = cplx(T::one() / T::of_usize(kernels.len()));
        let mut values = vec![cplx(T::zero()); first.values.len()];
        for k in kernels {
            for (v, x) in values.iter_mut().zip(&k.values) {
                *v += *x;
            }
        }
        for v in &mut values {
            *v *= inv;
        }
        let particles = kernels.iter().map(|k| k.particles).sum::<usize>() / kernels.len();
        Ok(ObdmKernel {
            values,
            particles,
            ..first.clone()
        })
    }
}

/// Fills the upper triangle with [`gamma_point`] and mirrors it.
pub fn gamma_kernel<T: Real>(prefix: &OverlapPrefix<T>) -> Result<ObdmKernel<T>> {
    gamma_kernel_with(prefix, gamma_point)
}

/// Benchmark hook: builds the kernel from any per-pair evaluator with the
/// contract of [`gamma_point`] for `p <= q`, so alternative schemes can be
/// timed and compared against the direct path.
pub fn gamma_kernel_with<T, F>(prefix: &OverlapPrefix<T>, mut eval_pair: F) -> Result<ObdmKernel<T>>
where
    T: Real,
    F: FnMut(&OverlapPrefix<T>, usize, usize) -> Result<Complex<T>>,
{
    let n = prefix.eval.len();
    let mut values = vec![cplx(T::zero()); n * n];
    for p in 0..n {
        for q in p..n {
            let g = eval_pair(prefix, p, q)?;
            values[p * n + q] = g;
            values[q * n + p] = conj(g);
        }
        values[p * n + p].im = T::zero();
    }
    ObdmKernel::from_values(
        prefix.eval.grid().length(),
        prefix.eval.samples_per_unit(),
        prefix.particles(),
        values,
    )
}

/// `||1_n gamma 1_m||_2 = sqrt(sum_{x in I_n, y in I_m} |gamma|^2 w^2)`.
pub fn block_hs_norm<T: Real>(kernel: &ObdmKernel<T>, n: usize, m: usize) -> T {
    let s = kernel.samples_per_unit;
    let w = kernel.weight();
    let mut acc = T::zero();
    for p in n * s..(n + 1) * s {
        for q in m * s..(m + 1) * s {
            acc += norm_sqr(kernel.get(p, q));
        }
    }
    acc.sqrt() * w
}

/// All block norms as a row-major `L x L` matrix.
pub fn block_norm_matrix<T: Real>(kernel: &ObdmKernel<T>) -> Vec<T> {
    let l = kernel.cells;
    let mut out = vec![T::zero(); l * l];
    for n in 0..l {
        for m in n..l {
            let v = block_hs_norm(kernel, n, m);
            out[n * l + m] = v;
            out[m * l + n] = v;
        }
    }
    out
}

/// Cell-integrated density `w sum_{x in I_n} gamma(x, x)`.
pub fn cell_density<T: Real>(kernel: &ObdmKernel<T>, n: usize) -> T {
    let s = kernel.samples_per_unit;
    (n * s..(n + 1) * s).fold(T::zero(), |a, p| a + kernel.get(p, p).re) * kernel.weight()
}

/// Top eigenvalue of `w gamma`.
pub fn largest_eigenvalue<T: Real>(kernel: &ObdmKernel<T>) -> Result<T> {
    if kernel.len() <= DENSE_EIGEN_LIMIT {
        let ev = eigenvalues(kernel)?;
        ev.iter()
            .copied()
            .reduce(|a, v| a.max(v))
            .ok_or_else(|| Error::Contract("empty kernel".into()))
    } else {
        power_iteration(&kernel.weighted_matrix(), T::lit(1e-8), 100_000)
    }
}

/// All eigenvalues of `w gamma`, unsorted.
pub fn eigenvalues<T: Real>(kernel: &ObdmKernel<T>) -> Result<Vec<T>> {
    SymmetricEigen::try_new(kernel.weighted_matrix(), T::epsilon(), 10_000)
        .map(|e| e.eigenvalues.iter().copied().collect())
        .ok_or_else(|| {
            Error::Numerical(format!("kernel eigensolver failed, n = {}", kernel.len()))
        })
}

/// Dominant eigenvalue of a positive semidefinite Hermitian matrix.
pub fn power_iteration<T: Real>(a: &DMatrix<Complex<T>>, rel_tol: T, max_iter: usize) -> Result<T> {
    let n = a.nrows();
    let mut v = DVector::from_fn(n, |i, _| cplx(T::one() + T::of_usize(i % 7) / T::lit(10.0)));
    let norm = |x: &DVector<Complex<T>>| x.iter().fold(T::zero(), |s, z| s + norm_sqr(*z)).sqrt();
    let nv = norm(&v);
    v *= cplx(T::one() / nv);
    let mut lambda = T::zero();
    for _ in 0..max_iter {
        let av = a * &v;
        let next = v
            .iter()
            .zip(av.iter())
            .fold(cplx(T::zero()), |s, (x, y)| s + conj(*x) * *y)
            .re;
        let nav = norm(&av);
        if nav == T::zero() {
            return Ok(T::zero());
        }
        v = av * cplx(T::one() / nav);
        if (next - lambda).abs() <= rel_tol * next.abs() {
            return Ok(next);
        }
        lambda = next;
    }
    Err(Error::Numerical(format!(
        "power iteration did not reach relative tolerance {} in {max_iter} steps",
        rel_tol.as_f64()
    )))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MomentumSample<T> {
    pub mode: i64,
    pub k: T,
    pub value: T,
    /// Imaginary residue, zero up to roundoff for a Hermitian kernel.
    pub imag: T,
}

/// `n(k) = (1/L) sum_{x,y} e^{ik(x-y)} gamma(x, y) w^2` at `k = 2 pi q / L`.
pub fn momentum_distribution<T: Real>(kernel: &ObdmKernel<T>, modes: &[i64]) -> Vec<MomentumSample<T>> {
    let n = kernel.len();
    let l = T::of_usize(kernel.cells);
    let w = kernel.weight();
    let xs: Vec<T> = (0..n).map(|p| T::of_usize(p) * w).collect();
    modes
        .iter()
        .map(|&q| {
            let k = T::two_pi() * T::from_i64(q).expect("mode fits scalar") / l;
            let f: Vec<Complex<T>> = xs.iter().map(|x| crate::scalar::cis(k * *x)).collect();
            let mut acc = cplx(T::zero());
            for p in 0..n {
                let mut row = cplx(T::zero());
                for (r, fr) in f.iter().enumerate() {
                    row += kernel.get(p, r) * conj(*fr);
                }
                acc += f[p] * row;
            }
            acc *= cplx(w * w / l);
            MomentumSample {
                mode: q,
                k,
                value: acc.re,
                imag: acc.im,
            }
        })
        .collect()
}
