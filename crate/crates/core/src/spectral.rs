//! Dense diagonalization, local amplitudes and the boundary-condition selection rules.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};
use crate::grid::{BoundaryTwist, Grid};
use crate::hamiltonian::{assemble, DiscreteHamiltonian};
use crate::potential::DisorderRealization;
use crate::scalar::{conj, cplx, modulus, norm_sqr, Complex, Real};

const MAX_SWEEPS: usize = 10_000;

/// Ascending eigenvalues with h-normalized eigenvectors stored as columns.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralData<T: Real> {
    twist: BoundaryTwist<T>,
    spacing: T,
    eigenvalues: Vec<T>,
    eigenvectors: DMatrix<Complex<T>>,
}

impl<T: Real> SpectralData<T> {
    pub fn twist(&self) -> BoundaryTwist<T> {
        self.twist
    }

    pub fn spacing(&self) -> T {
        self.spacing
    }

    pub fn eigenvalues(&self) -> &[T] {
        &self.eigenvalues
    }

    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    /// Number of grid points.
    pub fn dimension(&self) -> usize {
        self.eigenvectors.nrows()
    }

    pub fn eigenvectors(&self) -> &DMatrix<Complex<T>> {
        &self.eigenvectors
    }

    /// `phi_j(x_i)`.
    #[inline]
    pub fn value(&self, j: usize, i: usize) -> Complex<T> {
        self.eigenvectors[(i, j)]
    }

    pub fn eigenvector(&self, j: usize) -> Vec<Complex<T>> {
        self.eigenvectors.column(j).iter().copied().collect()
    }

    /// `h <phi_a, phi_b>` over the grid.
    pub fn overlap(&self, a: usize, b: usize) -> Complex<T> {
        let ca = self.eigenvectors.column(a);
        let cb = self.eigenvectors.column(b);
        let s = ca
            .iter()
            .zip(cb.iter())
            .fold(cplx(T::zero()), |acc, (x, y)| acc + conj(*x) * *y);
        s * cplx(self.spacing)
    }

    /// `max |h <phi_j, phi_k> - delta_jk|`.
    pub fn orthonormality_defect(&self) -> T {
        let v = &self.eigenvectors;
        let g = v.adjoint() * v * cplx(self.spacing);
        let mut worst = T::zero();
        for j in 0..g.nrows() {
            for k in 0..g.ncols() {
                let target = if j == k { T::one() } else { T::zero() };
                worst = worst.max(modulus(g[(j, k)] - cplx(target)));
            }
        }
        worst
    }

    /// Largest `||H phi_j - E_j phi_j||_h / (1 + |E_j|)` over all eigenpairs.
    pub fn residual(&self, h: &DiscreteHamiltonian<T>) -> T {
        let mut worst = T::zero();
        for j in 0..self.len() {
            let phi = self.eigenvector(j);
            let hphi = h.apply(&phi);
            let e = cplx(self.eigenvalues[j]);
            let r = hphi
                .iter()
                .zip(&phi)
                .fold(T::zero(), |acc, (a, b)| acc + norm_sqr(*a - e * *b));
            let r = (r * self.spacing).sqrt() / (T::one() + self.eigenvalues[j].abs());
            worst = worst.max(r);
        }
        worst
    }

    /// Number of eigenvalues `E_j <= mu`.
    pub fn count_below(&self, mu: T) -> usize {
        self.eigenvalues.partition_point(|e| *e <= mu)
    }
}

pub fn count_below<T: Real>(spec: &SpectralData<T>, mu: T) -> usize {
    spec.count_below(mu)
}

pub fn diagonalize<T: Real>(h: &DiscreteHamiltonian<T>) -> Result<SpectralData<T>> {
    let n = h.dimension();
    let eps = T::epsilon();
    let (values, vectors): (Vec<T>, DMatrix<Complex<T>>) = match h.to_dense_real() {
        Some(m) => {
            let eig = SymmetricEigen::try_new(m, eps, MAX_SWEEPS)
                .ok_or_else(|| non_convergence(h))?;
            let vecs = eig.eigenvectors.map(cplx);
            (eig.eigenvalues.iter().copied().collect(), vecs)
        }
        None => {
            let eig = SymmetricEigen::try_new(h.to_dense(), eps, MAX_SWEEPS)
                .ok_or_else(|| non_convergence(h))?;
            (eig.eigenvalues.iter().copied().collect(), eig.eigenvectors)
        }
    };
    if values.iter().any(|e| !e.is_finite()) {
        return Err(Error::Numerical(format!(
            "non-finite eigenvalue for n = {n}, theta = {}",
            h.twist().theta().as_f64()
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).expect("finite eigenvalues"));

    let spacing = h.grid().spacing::<T>();
    let scale = T::one() / spacing.sqrt();
    let tol = T::lit(1e-8);
    let mut eigenvectors = DMatrix::from_element(n, n, cplx(T::zero()));
    for (dst, &src) in order.iter().enumerate() {
        let col = vectors.column(src);
        let norm = col.iter().fold(T::zero(), |acc, z| acc + norm_sqr(*z)).sqrt();
        let max = col.iter().fold(T::zero(), |acc, z| acc.max(modulus(*z)));
        let pivot = col
            .iter()
            .position(|z| modulus(*z) >= max * (T::one() - tol))
            .expect("nonzero eigenvector");
        let p = col[pivot];
        let phase = conj(p) * cplx(T::one() / modulus(p));
        let factor = phase * cplx(scale / norm);
        for i in 0..n {
            eigenvectors[(i, dst)] = col[i] * factor;
        }
        eigenvectors[(pivot, dst)].im = T::zero();
    }
    Ok(SpectralData {
        twist: h.twist(),
        spacing,
        eigenvalues: order.iter().map(|&k| values[k]).collect(),
        eigenvectors,
    })
}

fn non_convergence<T: Real>(h: &DiscreteHamiltonian<T>) -> Error {
    let vmax = h
        .diagonal()
        .iter()
        .fold(T::zero(), |acc, v| acc.max(v.abs()));
    Error::Numerical(format!(
        "eigensolver did not converge: n = {}, theta = {}, max |diag| = {}",
        h.dimension(),
        h.twist().theta().as_f64(),
        vmax.as_f64()
    ))
}

/// `Phi(j, c) = sqrt(h sum_{i in cell c} |phi_j(i)|^2)`, one row per eigenpair.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalAmplitudes<T> {
    cells: usize,
    values: Vec<T>,
}

impl<T: Real> LocalAmplitudes<T> {
    /// Builds amplitudes from explicit rows, e.g. for synthetic inputs.
    pub fn from_rows(cells: usize, rows: &[Vec<T>]) -> Result<Self> {
        if rows.iter().any(|r| r.len() != cells) {
            return Err(Error::Contract("amplitude rows must have one entry per cell".into()));
        }
        Ok(LocalAmplitudes {
            cells,
            values: rows.iter().flatten().copied().collect(),
        })
    }

    pub fn cells(&self) -> usize {
        self.cells
    }

    pub fn states(&self) -> usize {
        self.values.len().checked_div(self.cells).unwrap_or(0)
    }

    pub fn row(&self, j: usize) -> &[T] {
        &self.values[j * self.cells..(j + 1) * self.cells]
    }

    #[inline]
    pub fn get(&self, j: usize, cell: usize) -> T {
        self.values[j * self.cells + cell]
    }

    /// `max_j |sum_c Phi(j, c)^2 - 1|`.
    pub fn normalization_defect(&self) -> T {
        (0..self.states())
            .map(|j| (self.row(j).iter().fold(T::zero(), |a, v| a + *v * *v) - T::one()).abs())
            .fold(T::zero(), |a, v| a.max(v))
    }
}

pub fn local_amplitudes<T: Real>(spec: &SpectralData<T>, grid: &Grid) -> LocalAmplitudes<T> {
    let cells = grid.length();
    let h = spec.spacing();
    let mut values = Vec::with_capacity(spec.len() * cells);
    for j in 0..spec.len() {
        let col = spec.eigenvectors.column(j);
        for c in 0..cells {
            let mass = grid
                .cell_range(c)
                .fold(T::zero(), |acc, i| acc + norm_sqr(col[i]));
            values.push((mass * h).sqrt());
        }
    }
    LocalAmplitudes { cells, values }
}

/// Fermionic boundary condition attached to a particle number.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BoundaryCondition {
    Periodic,
    Antiperiodic,
}

impl BoundaryCondition {
    /// Periodic for odd `n`, antiperiodic for even `n`.
    pub fn for_count(n: usize) -> Self {
        if n % 2 == 1 {
            BoundaryCondition::Periodic
        } else {
            BoundaryCondition::Antiperiodic
        }
    }

    pub fn sign(self) -> i32 {
        match self {
            BoundaryCondition::Periodic => 1,
            BoundaryCondition::Antiperiodic => -1,
        }
    }

    pub fn twist<T: Real>(self) -> BoundaryTwist<T> {
        match self {
            BoundaryCondition::Periodic => BoundaryTwist::periodic(),
            BoundaryCondition::Antiperiodic => BoundaryTwist::antiperiodic(),
        }
    }
}

/// Periodic and antiperiodic spectra of one realization.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumPair<T: Real> {
    pub periodic: SpectralData<T>,
    pub antiperiodic: SpectralData<T>,
}

impl<T: Real> SpectrumPair<T> {
    pub fn compute(grid: &Grid, realization: &DisorderRealization<T>) -> Result<Self> {
        let hp = assemble(grid, realization, BoundaryTwist::periodic())?;
        let ha = hp.with_twist(BoundaryTwist::antiperiodic());
        Ok(SpectrumPair {
            periodic: diagonalize(&hp)?,
            antiperiodic: diagonalize(&ha)?,
        })
    }

    pub fn get(&self, bc: BoundaryCondition) -> &SpectralData<T> {
        match bc {
            BoundaryCondition::Periodic => &self.periodic,
            BoundaryCondition::Antiperiodic => &self.antiperiodic,
        }
    }

    /// Indices `j` (zero-based) where the alternating order of `E^+_j` and `E^-_j` fails by more than `tol`.
    ///
    /// Expected pattern: `E^+ <= E^-` at even zero-based `j`, `E^+ >= E^-` at odd `j`.
    pub fn interlacing_violations(&self, tol: T) -> Vec<usize> {
        let p = self.periodic.eigenvalues();
        let a = self.antiperiodic.eigenvalues();
        (0..p.len().min(a.len()))
            .filter(|&j| {
                let scale = T::one() + p[j].abs().max(a[j].abs());
                if j % 2 == 0 {
                    p[j] - a[j] > tol * scale
                } else {
                    a[j] - p[j] > tol * scale
                }
            })
            .collect()
    }

    /// Smallest `mu` at which the ground state holds `n` particles is
    /// `max(E^+_n, E^-_n)`; returns the midpoint of `[that, next threshold)`.
    pub fn mu_for_count(&self, n: usize) -> Result<T> {
        let len = self.periodic.len();
        if n == 0 || n >= len {
            return Err(Error::Contract(format!("particle count {n} out of range 1..{len}")));
        }
        let p = self.periodic.eigenvalues();
        let a = self.antiperiodic.eigenvalues();
        let lo = p[n - 1].max(a[n - 1]);
        let hi = p[n].max(a[n]);
        Ok((lo + hi) / T::lit(2.0))
    }
}

/// Occupied orbitals of the ground state together with their boundary condition.
#[derive(Debug, Clone, PartialEq)]
pub struct OrbitalSelection<T> {
    pub mu: Option<T>,
    pub n_plus: usize,
    pub n_minus: usize,
    pub n_mu: usize,
    pub sharp: BoundaryCondition,
    pub indices: Vec<usize>,
}

impl<T: Real> OrbitalSelection<T> {
    pub fn count(&self) -> usize {
        self.indices.len()
    }

    pub fn require_nonempty(&self) -> Result<()> {
        if self.indices.is_empty() {
            return Err(Error::EmptySystem(match self.mu {
                Some(mu) => format!("no eigenvalue below mu = {}", mu.as_f64()),
                None => "zero particles requested".into(),
            }));
        }
        Ok(())
    }
}

/// `N_mu = min(N^+, N^-)` orbitals from the spectrum with the induced boundary condition.
///
/// Returns an empty-system error when `N_mu = 0`.
pub fn select_orbitals_mu<T: Real>(pair: &SpectrumPair<T>, mu: T) -> Result<OrbitalSelection<T>> {
    let n_plus = pair.periodic.count_below(mu);
    let n_minus = pair.antiperiodic.count_below(mu);
    let n_mu = n_plus.min(n_minus);
    let sharp = BoundaryCondition::for_count(n_mu);
    let sel = OrbitalSelection {
        mu: Some(mu),
        n_plus,
        n_minus,
        n_mu,
        sharp,
        indices: (0..n_mu).collect(),
    };
    sel.require_nonempty()?;
    let check = pair.get(sharp).count_below(mu);
    if check != n_mu {
        return Err(Error::Invariant(format!(
            "interlacing violated: sharp spectrum has {check} eigenvalues below mu = {}, expected {n_mu}",
            mu.as_f64()
        )));
    }
    Ok(sel)
}

/// Lowest `n` orbitals of the spectrum selected by the parity rule.
pub fn select_orbitals_count<T: Real>(pair: &SpectrumPair<T>, n: usize) -> Result<OrbitalSelection<T>> {
    let len = pair.periodic.len();
    if n == 0 || n > len {
        return Err(Error::Contract(format!("particle count {n} out of range 1..={len}")));
    }
    Ok(OrbitalSelection {
        mu: None,
        n_plus: n,
        n_minus: n,
        n_mu: n,
        sharp: BoundaryCondition::for_count(n),
        indices: (0..n).collect(),
    })
}
