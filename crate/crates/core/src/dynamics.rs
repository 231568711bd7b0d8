//! Free-fermion density evolution and transport observables.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::hamiltonian::DiscreteHamiltonian;
use crate::localization::EnergyWindow;
use crate::scalar::{cis, conj, cplx, norm_sqr, Complex, Real};
use crate::spectral::SpectralData;

/// How the initial one-body matrix was prepared.
#[derive(Debug, Clone, PartialEq)]
pub enum Construction<T> {
    EigenSubset(Vec<usize>),
    TrapProjection {
        trap_cells: Vec<usize>,
        count: usize,
        window: EnergyWindow<T>,
    },
}

/// `Gamma = C C^*` in the eigenbasis, restricted to the eigenpairs `basis`.
///
/// Column `a` of `coefficients` holds `h <phi_j, chi_a>` for `j` in `basis`,
/// so `P_J Gamma P_J = Gamma` by construction.
#[derive(Debug, Clone, PartialEq)]
pub struct InitialOccupation<T: Real> {
    pub construction: Construction<T>,
    pub basis: Vec<usize>,
    pub coefficients: DMatrix<Complex<T>>,
}

impl<T: Real> InitialOccupation<T> {
    pub fn eigen_subset(spec: &SpectralData<T>, indices: &[usize]) -> Result<Self> {
        if indices.iter().any(|&j| j >= spec.len()) {
            return Err(Error::Contract("eigen subset index out of range".into()));
        }
        let k = indices.len();
        Ok(InitialOccupation {
            construction: Construction::EigenSubset(indices.to_vec()),
            basis: indices.to_vec(),
            coefficients: DMatrix::from_fn(k, k, |a, b| {
                cplx(if a == b { T::one() } else { T::zero() })
            }),
        })
    }

    /// `Gamma` as a dense matrix over `basis`.
    pub fn gamma(&self) -> DMatrix<Complex<T>> {
        &self.coefficients * self.coefficients.adjoint()
    }

    pub fn trace(&self) -> T {
        self.coefficients
            .iter()
            .fold(T::zero(), |a, z| a + norm_sqr(*z))
    }

    /// Eigenvalues of `Gamma`, via the small Gram matrix `C^* C`.
    pub fn occupations(&self) -> Result<Vec<T>> {
        if self.coefficients.ncols() == 0 {
            return Ok(Vec::new());
        }
        let gram = self.coefficients.adjoint() * &self.coefficients;
        SymmetricEigen::try_new(gram, T::epsilon(), 10_000)
            .map(|e| e.eigenvalues.iter().copied().collect())
            .ok_or_else(|| Error::Numerical("occupation eigensolver failed".into()))
    }

    /// State after evolving by `t`: `C -> diag(e^{-i E_j t}) C`.
    pub fn advanced(&self, spec: &SpectralData<T>, t: T) -> Self {
        let mut c = self.coefficients.clone();
        for (r, &j) in self.basis.iter().enumerate() {
            let phase = cis(-spec.eigenvalues()[j] * t);
            for a in 0..c.ncols() {
                c[(r, a)] *= phase;
            }
        }
        InitialOccupation {
            coefficients: c,
            ..self.clone()
        }
    }
}

/// Lowest `count` Dirichlet orbitals of the trap, projected onto the window.
///
/// The trap operator is the principal submatrix of `H` on the trap cells,
/// which pins the wave functions to zero outside.
pub fn trap_initial_state<T: Real>(
    spec: &SpectralData<T>,
    hamiltonian: &DiscreteHamiltonian<T>,
    trap_cells: &[usize],
    count: usize,
    window: EnergyWindow<T>,
) -> Result<InitialOccupation<T>> {
    let grid = hamiltonian.grid();
    if trap_cells.is_empty() {
        return Err(Error::Construction("empty trap".into()));
    }
    if let Some(&c) = trap_cells.iter().find(|&&c| c >= grid.length()) {
        return Err(Error::Contract(format!("trap cell {c} outside the ring")));
    }
    let mut cells = trap_cells.to_vec();
    cells.sort_unstable();
    cells.dedup();
    let points: Vec<usize> = cells.iter().flat_map(|&c| grid.cell_range(c)).collect();
    if count == 0 || count > points.len() {
        return Err(Error::Contract(format!(
            "trap holds {} orbitals, {count} requested",
            points.len()
        )));
    }
    let basis = window.select(spec);
    if basis.is_empty() {
        return Err(Error::Construction("energy window contains no eigenpair".into()));
    }

    let full = hamiltonian.to_dense();
    let sub = full.select_rows(&points).select_columns(&points);
    let eig = SymmetricEigen::try_new(sub, T::epsilon(), 10_000)
        .ok_or_else(|| Error::Numerical("trap eigensolver failed".into()))?;
    let mut order: Vec<usize> = (0..points.len()).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[a]
            .partial_cmp(&eig.eigenvalues[b])
            .expect("finite trap eigenvalues")
    });

    let h = grid.spacing::<T>();
    let scale = T::one() / h.sqrt();
    let mut coefficients = DMatrix::from_element(basis.len(), count, cplx(T::zero()));
    for (a, &src) in order.iter().take(count).enumerate() {
        let col = eig.eigenvectors.column(src);
        let norm = col.iter().fold(T::zero(), |s, z| s + norm_sqr(*z)).sqrt();
        let f = cplx(scale / norm);
        for (r, &j) in basis.iter().enumerate() {
            let ov = points
                .iter()
                .zip(col.iter())
                .fold(cplx(T::zero()), |s, (&i, z)| s + conj(spec.value(j, i)) * *z * f);
            coefficients[(r, a)] = ov * cplx(h);
        }
    }
    Ok(InitialOccupation {
        construction: Construction::TrapProjection {
            trap_cells: cells,
            count,
            window,
        },
        basis,
        coefficients,
    })
}

/// Densities on the grid at a list of times.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityTrajectory<T> {
    pub grid: Grid,
    pub times: Vec<T>,
    /// `densities[k][i] = rho_{t_k}(x_i)`.
    pub densities: Vec<Vec<T>>,
}

impl<T: Real> DensityTrajectory<T> {
    /// `N_I(t_k) = h sum_{x in I} rho_{t_k}(x)` for a set of cells.
    pub fn region_count(&self, k: usize, cells: &[usize]) -> T {
        let h = self.grid.spacing::<T>();
        cells
            .iter()
            .flat_map(|&c| self.grid.cell_range(c))
            .fold(T::zero(), |a, i| a + self.densities[k][i])
            * h
    }

    pub fn total(&self, k: usize) -> T {
        self.densities[k].iter().fold(T::zero(), |a, v| a + *v) * self.grid.spacing::<T>()
    }

    /// `max_k |N(t_k) - N(t_0)|` over the whole ring.
    pub fn conservation_defect(&self) -> T {
        let n0 = self.total(0);
        (0..self.times.len()).fold(T::zero(), |a, k| a.max((self.total(k) - n0).abs()))
    }

    pub fn min_density(&self) -> T {
        self.densities
            .iter()
            .flatten()
            .fold(T::zero(), |a, v| a.min(*v))
    }
}

/// `rho_t(x) = sum_a |sum_j phi_j(x) e^{-i E_j t} C_ja|^2`.
pub fn evolve_density<T: Real>(
    spec: &SpectralData<T>,
    grid: &Grid,
    init: &InitialOccupation<T>,
    times: &[T],
) -> Result<DensityTrajectory<T>> {
    if times.iter().any(|t| !t.is_finite()) {
        return Err(Error::Contract("times must be finite".into()));
    }
    let phi = spec.eigenvectors().select_columns(&init.basis);
    let densities = times
        .iter()
        .map(|&t| {
            let c = init.advanced(spec, t).coefficients;
            let psi = &phi * c;
            (0..psi.nrows())
                .map(|i| psi.row(i).iter().fold(T::zero(), |a, z| a + norm_sqr(*z)))
                .collect()
        })
        .collect();
    Ok(DensityTrajectory {
        grid: *grid,
        times: times.to_vec(),
        densities,
    })
}

/// `{0} ∪ {t0 2^k <= t_max} ∪ {t_max}`.
pub fn log_time_grid<T: Real>(t0: T, t_max: T) -> Vec<T> {
    let mut out = vec![T::zero()];
    let mut t = t0;
    while t < t_max {
        out.push(t);
        t *= T::lit(2.0);
    }
    out.push(t_max);
    out
}

/// `max_k |N_I(t_k) - N_I(t_0)|`.
pub fn transport_deviation<T: Real>(traj: &DensityTrajectory<T>, region: &[usize]) -> T {
    let n0 = traj.region_count(0, region);
    (0..traj.times.len()).fold(T::zero(), |a, k| {
        a.max((traj.region_count(k, region) - n0).abs())
    })
}

/// `max_k N_I(t_k)` for a far region `I` disjoint from the trap `K`.
pub fn leakage<T: Real>(traj: &DensityTrajectory<T>, far: &[usize], trap: &[usize]) -> Result<T> {
    if let Some(c) = far.iter().find(|c| trap.contains(c)) {
        return Err(Error::Contract(format!("cell {c} lies in both regions")));
    }
    Ok((0..traj.times.len()).fold(T::zero(), |a, k| a.max(traj.region_count(k, far))))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::BoundaryTwist;
    use crate::hamiltonian::assemble;
    use crate::potential::{sample_potential, PotentialModel};
    use crate::spectral::diagonalize;

    fn system(v: f64, l: usize, seed: u64) -> (Grid, DiscreteHamiltonian<f64>, SpectralData<f64>) {
        let g = Grid::new(l, 8).unwrap();
        let model = if v == 0.0 { PotentialModel::zero() } else { PotentialModel::alloy_step(v) };
        let r = sample_potential(&model, &g, seed, 0).unwrap();
        let h = assemble(&g, &r, BoundaryTwist::periodic()).unwrap();
        let s = diagonalize(&h).unwrap();
        (g, h, s)
    }

    #[test]
    fn eigen_subset_is_stationary() {
        let (g, _, s) = system(4.0, 8, 1);
        let init = InitialOccupation::eigen_subset(&s, &[0, 2, 5]).unwrap();
        let traj = evolve_density(&s, &g, &init, &[0.0, 1.0, 37.5, 1e4]).unwrap();
        for k in 1..4 {
            for i in 0..64 {
                assert!((traj.densities[k][i] - traj.densities[0][i]).abs() < 1e-10);
            }
        }
        assert!(transport_deviation(&traj, &[0, 1, 2]) < 1e-10);
    }

    #[test]
    fn full_trap_gives_lowest_orbitals() {
        let (_, h, s) = system(4.0, 8, 2);
        let all: Vec<usize> = (0..8).collect();
        let init = trap_initial_state(&s, &h, &all, 3, EnergyWindow::below(1e9)).unwrap();
        assert!((init.trace() - 3.0).abs() < 1e-9);
        let gamma = init.gamma();
        for a in 0..gamma.nrows() {
            let expect = if a < 3 { 1.0 } else { 0.0 };
            assert!((gamma[(a, a)].re - expect).abs() < 1e-8);
        }
    }

    #[test]
    fn trap_state_invariants() {
        let (g, h, s) = system(4.0, 16, 3);
        let trap: Vec<usize> = (0..4).collect();
        let narrow = trap_initial_state(&s, &h, &trap, 4, EnergyWindow::below(5.0)).unwrap();
        let wide = trap_initial_state(&s, &h, &trap, 4, EnergyWindow::below(50.0)).unwrap();
        assert!(narrow.trace() <= wide.trace() + 1e-12);
        assert!(wide.trace() <= 4.0 + 1e-10);
        for occ in wide.occupations().unwrap() {
            assert!((-1e-10..=1.0 + 1e-10).contains(&occ));
        }
        let times = log_time_grid(1.0, 1e4);
        let traj = evolve_density(&s, &g, &wide, &times).unwrap();
        assert!(traj.conservation_defect() < 1e-9);
        assert!(traj.min_density() >= -1e-9);
        let all: Vec<usize> = (0..16).collect();
        assert!(transport_deviation(&traj, &all) < 1e-9);
        assert_eq!(leakage(&traj, &[], &trap).unwrap(), 0.0);
        assert!(leakage(&traj, &[3, 9], &trap).is_err());
    }

    #[test]
    fn time_reversal_recovers_initial_density() {
        let (g, h, s) = system(2.0, 8, 4);
        let init = trap_initial_state(&s, &h, &[0, 1, 2], 2, EnergyWindow::below(1e9)).unwrap();
        let t = 13.7;
        let forward = init.advanced(&s, t);
        let back = evolve_density(&s, &g, &forward, &[-t]).unwrap();
        let start = evolve_density(&s, &g, &init, &[0.0]).unwrap();
        for i in 0..64 {
            assert!((back.densities[0][i] - start.densities[0][i]).abs() < 1e-9);
        }
    }

    #[test]
    fn empty_inputs_rejected() {
        let (_, h, s) = system(0.0, 8, 0);
        assert!(matches!(
            trap_initial_state(&s, &h, &[], 1, EnergyWindow::below(1.0)),
            Err(Error::Construction(_))
        ));
        assert!(matches!(
            trap_initial_state(&s, &h, &[0], 1, EnergyWindow::below(-1.0)),
            Err(Error::Construction(_))
        ));
    }

    #[test]
    fn time_grid_shape() {
        let t = log_time_grid(1.0, 1e4);
        assert_eq!(t[0], 0.0);
        assert_eq!(t[1], 1.0);
        assert_eq!(*t.last().unwrap(), 1e4);
        assert_eq!(t[t.len() - 2], 8192.0);
    }
}
