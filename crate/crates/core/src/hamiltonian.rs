//! Finite-difference one-particle operator on the twisted ring.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::grid::{BoundaryTwist, Grid};
use crate::potential::DisorderRealization;
use crate::scalar::{conj, cplx, modulus, Complex, Real};

/// `(H psi)_i = (2 psi_i - psi_{i+1} - psi_{i-1}) / h^2 + V_i psi_i`.
///
/// The twist phase sits on the wrap bond only: `H[n-1, 0] = -e^{i theta} / h^2`.
/// For `theta` in `{0, pi}` every entry is real.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteHamiltonian<T> {
    grid: Grid,
    twist: BoundaryTwist<T>,
    diagonal: Vec<T>,
    hopping: T,
}

pub fn assemble<T: Real>(
    grid: &Grid,
    realization: &DisorderRealization<T>,
    twist: BoundaryTwist<T>,
) -> Result<DiscreteHamiltonian<T>> {
    if !realization.matches(grid) || realization.values().len() != grid.num_points() {
        return Err(Error::Contract(format!(
            "realization has {} points, grid has {}",
            realization.values().len(),
            grid.num_points()
        )));
    }
    DiscreteHamiltonian::from_potential(grid, realization.values(), twist)
}

impl<T: Real> DiscreteHamiltonian<T> {
    pub fn from_potential(grid: &Grid, potential: &[T], twist: BoundaryTwist<T>) -> Result<Self> {
        if potential.len() != grid.num_points() {
            return Err(Error::Contract(format!(
                "potential has {} points, grid has {}",
                potential.len(),
                grid.num_points()
            )));
        }
        let h = grid.spacing::<T>();
        let inv_h2 = T::one() / (h * h);
        let two = T::lit(2.0);
        Ok(DiscreteHamiltonian {
            grid: *grid,
            twist,
            diagonal: potential.iter().map(|v| two * inv_h2 + *v).collect(),
            hopping: -inv_h2,
        })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn twist(&self) -> BoundaryTwist<T> {
        self.twist
    }

    pub fn dimension(&self) -> usize {
        self.diagonal.len()
    }

    pub fn diagonal(&self) -> &[T] {
        &self.diagonal
    }

    /// Nearest-neighbour hopping amplitude `-1 / h^2`.
    pub fn hopping(&self) -> T {
        self.hopping
    }

    /// Same potential with a different boundary twist.
    pub fn with_twist(&self, twist: BoundaryTwist<T>) -> Self {
        DiscreteHamiltonian {
            twist,
            ..self.clone()
        }
    }

    /// Entry `H[n-1, 0]`; its conjugate sits at `H[0, n-1]`.
    pub fn wrap_entry(&self) -> Complex<T> {
        self.twist.phase() * cplx(self.hopping)
    }

    pub fn to_dense(&self) -> DMatrix<Complex<T>> {
        let n = self.dimension();
        let mut m = DMatrix::from_element(n, n, Complex::new(T::zero(), T::zero()));
        for i in 0..n {
            m[(i, i)] = cplx(self.diagonal[i]);
            if i + 1 < n {
                m[(i, i + 1)] = cplx(self.hopping);
                m[(i + 1, i)] = cplx(self.hopping);
            }
        }
        let w = self.wrap_entry();
        m[(n - 1, 0)] = w;
        m[(0, n - 1)] = conj(w);
        m
    }

    /// Real-symmetric form, available for periodic and antiperiodic twists.
    pub fn to_dense_real(&self) -> Option<DMatrix<T>> {
        if !self.twist.is_real() {
            return None;
        }
        let n = self.dimension();
        let mut m = DMatrix::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = self.diagonal[i];
            if i + 1 < n {
                m[(i, i + 1)] = self.hopping;
                m[(i + 1, i)] = self.hopping;
            }
        }
        let w = self.wrap_entry().re;
        m[(n - 1, 0)] = w;
        m[(0, n - 1)] = w;
        Some(m)
    }

    pub fn apply(&self, psi: &[Complex<T>]) -> Vec<Complex<T>> {
        let n = self.dimension();
        assert_eq!(psi.len(), n, "vector length mismatch");
        let t = cplx(self.hopping);
        let w = self.wrap_entry();
        (0..n)
            .map(|i| {
                let mut acc = cplx(self.diagonal[i]) * psi[i];
                acc += if i + 1 < n { t * psi[i + 1] } else { w * psi[0] };
                acc += if i > 0 { t * psi[i - 1] } else { conj(w) * psi[n - 1] };
                acc
            })
            .collect()
    }

    /// `max |H_ij - conj(H_ji)| / max |H_ij|` of the dense representation.
    pub fn hermiticity_defect(&self) -> T {
        let m = self.to_dense();
        let n = m.nrows();
        let mut scale = T::zero();
        let mut defect = T::zero();
        for i in 0..n {
            for j in 0..n {
                scale = scale.max(modulus(m[(i, j)]));
                defect = defect.max(modulus(m[(i, j)] - conj(m[(j, i)])));
            }
        }
        defect / scale
    }
}
