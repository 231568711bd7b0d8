//! Twisted ground energies, the stiffness ratio `X_L` and its variational upper bound `Y_L`.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};
use crate::grid::{BoundaryTwist, Grid, MIN_LENGTH};
use crate::hamiltonian::{assemble, DiscreteHamiltonian};
use crate::localization::SuleData;
use crate::potential::DisorderRealization;
use crate::scalar::{cis, conj, cplx, modulus, Complex, Real};
use crate::spectral::{
    diagonalize, local_amplitudes, select_orbitals_mu, OrbitalSelection, SpectralData, SpectrumPair,
};

/// Relative tolerance for the ground-energy identity cross-check.
pub const IDENTITY_TOL: f64 = 1e-9;
/// Absolute slack for the diamagnetic and variational inequalities.
pub const INEQUALITY_SLACK: f64 = 1e-9;

/// `sum_{E_j <= mu} (mu - E_j)`, the trace of the negative part of `H - mu`.
pub fn negative_part_trace<T: Real>(spec: &SpectralData<T>, mu: T) -> T {
    spec.eigenvalues()
        .iter()
        .take_while(|e| **e <= mu)
        .fold(T::zero(), |a, e| a + (mu - *e))
}

/// `sum_{j < N_mu} E_j` for the spectrum carrying the induced boundary condition.
///
/// Cross-checks against `mu N_mu - tr[H - mu]_-`.
pub fn ground_energy<T: Real>(spec_sharp: &SpectralData<T>, mu: T) -> Result<T> {
    let n = spec_sharp.count_below(mu);
    if n == 0 {
        return Err(Error::EmptySystem(format!(
            "no eigenvalue below mu = {}",
            mu.as_f64()
        )));
    }
    let direct = spec_sharp.eigenvalues()[..n]
        .iter()
        .fold(T::zero(), |a, e| a + *e);
    let via_identity = mu * T::of_usize(n) - negative_part_trace(spec_sharp, mu);
    let scale = T::one().max(direct.abs());
    if (direct - via_identity).abs() > T::lit(IDENTITY_TOL) * scale {
        return Err(Error::Invariant(format!(
            "ground-energy identity mismatch: {} vs {}",
            direct.as_f64(),
            via_identity.as_f64()
        )));
    }
    Ok(direct)
}

/// `theta_mu = theta + (pi/2)(1 + (-1)^N)`.
pub fn shifted_twist<T: Real>(theta: T, n: usize) -> BoundaryTwist<T> {
    if n.is_multiple_of(2) {
        BoundaryTwist::new(theta + T::pi())
    } else {
        BoundaryTwist::new(theta)
    }
}

fn check_theta<T: Real>(theta: T) -> Result<()> {
    if !(theta > T::zero() && theta < T::pi()) {
        return Err(Error::Contract(format!(
            "twist angle {} outside (0, pi)",
            theta.as_f64()
        )));
    }
    Ok(())
}

/// Sum of the lowest `n` eigenvalues at twist `theta_mu` for an arbitrary `theta`.
pub fn energy_at_twist<T: Real>(h: &DiscreteHamiltonian<T>, n: usize, theta: T) -> Result<T> {
    let spec = diagonalize(&h.with_twist(shifted_twist(theta, n)))?;
    Ok(spec.eigenvalues()[..n].iter().fold(T::zero(), |a, e| a + *e))
}

/// Output of [`stiffness_ratio`].
#[derive(Debug, Clone, PartialEq)]
pub struct StiffnessResult<T> {
    pub mu: T,
    pub theta: T,
    pub theta_mu: T,
    pub n_mu: usize,
    pub e_zero: T,
    pub e_theta: T,
    /// `E_theta - E_zero`, accumulated orbital by orbital.
    pub shift: T,
    pub x_l: T,
}

/// Everything computed for one realization at one chemical potential and twist.
#[derive(Debug, Clone)]
pub struct TwistedProblem<T: Real> {
    pub grid: Grid,
    pub hamiltonian: DiscreteHamiltonian<T>,
    pub pair: SpectrumPair<T>,
    pub selection: OrbitalSelection<T>,
    pub twisted: SpectralData<T>,
    pub result: StiffnessResult<T>,
}

impl<T: Real> TwistedProblem<T> {
    pub fn sharp(&self) -> &SpectralData<T> {
        self.pair.get(self.selection.sharp)
    }

    /// Twisted operator `H(theta_mu)`.
    pub fn twisted_hamiltonian(&self) -> DiscreteHamiltonian<T> {
        self.hamiltonian
            .with_twist(BoundaryTwist::new(self.result.theta_mu))
    }
}

/// Diagonalizes `H(theta_mu)` and returns `sum_{j <= N_mu} E_j(theta_mu)`.
pub fn twisted_energy<T: Real>(
    grid: &Grid,
    realization: &DisorderRealization<T>,
    mu: T,
    theta: T,
) -> Result<T> {
    Ok(stiffness_ratio(grid, realization, mu, theta)?.e_theta)
}

pub fn stiffness_ratio<T: Real>(
    grid: &Grid,
    realization: &DisorderRealization<T>,
    mu: T,
    theta: T,
) -> Result<StiffnessResult<T>> {
    Ok(solve_twisted(grid, realization, mu, theta)?.result)
}

pub fn solve_twisted<T: Real>(
    grid: &Grid,
    realization: &DisorderRealization<T>,
    mu: T,
    theta: T,
) -> Result<TwistedProblem<T>> {
    check_theta(theta)?;
    let h0 = assemble(grid, realization, BoundaryTwist::periodic())?;
    let pair = SpectrumPair::compute(grid, realization)?;
    solve_twisted_with(grid, h0, pair, mu, theta)
}

/// Same as [`solve_twisted`] with the periodic operator and the spectra already available.
pub fn solve_twisted_with<T: Real>(
    grid: &Grid,
    h0: DiscreteHamiltonian<T>,
    pair: SpectrumPair<T>,
    mu: T,
    theta: T,
) -> Result<TwistedProblem<T>> {
    check_theta(theta)?;
    let selection = select_orbitals_mu(&pair, mu)?;
    let n = selection.n_mu;
    let twist = shifted_twist(theta, n);
    let h_theta = h0.with_twist(twist);
    let twisted = diagonalize(&h_theta)?;

    let ceiling = pair.periodic.eigenvalues()[n - 1].max(pair.antiperiodic.eigenvalues()[n - 1]);
    let top = twisted.eigenvalues()[n - 1];
    if top > ceiling + T::lit(INEQUALITY_SLACK) * (T::one() + ceiling.abs()) {
        return Err(Error::Invariant(format!(
            "E_N(theta_mu) = {} exceeds max(E+_N, E-_N) = {}; E+ = {:?}, E- = {:?}, E(theta_mu) = {:?}",
            top.as_f64(),
            ceiling.as_f64(),
            head(&pair.periodic, n + 1),
            head(&pair.antiperiodic, n + 1),
            head(&twisted, n + 1),
        )));
    }

    let sharp = pair.get(selection.sharp);
    let e_zero = ground_energy(sharp, mu)?;
    let e_theta = twisted.eigenvalues()[..n]
        .iter()
        .fold(T::zero(), |a, e| a + *e);
    let shift = seam_shift(sharp, &twisted, &h_theta, n);
    let x_l = T::of_usize(grid.length()) * shift / (theta * theta);
    if x_l < -T::lit(INEQUALITY_SLACK) {
        return Err(Error::Invariant(format!(
            "diamagnetic inequality violated: X_L = {}",
            x_l.as_f64()
        )));
    }
    let result = StiffnessResult {
        mu,
        theta,
        theta_mu: twist.theta(),
        n_mu: n,
        e_zero,
        e_theta,
        shift,
        x_l,
    };
    Ok(TwistedProblem {
        grid: *grid,
        hamiltonian: h0,
        pair,
        selection,
        twisted,
        result,
    })
}

fn head<T: Real>(spec: &SpectralData<T>, n: usize) -> Vec<f64> {
    spec.eigenvalues()
        .iter()
        .take(n)
        .map(|e| e.as_f64())
        .collect()
}

/// `sum_j (E_j(theta) - E_j(sharp))` without cancellation.
///
/// The two operators differ only in the wrap bond `D`, so
/// `E_j(theta) - E_j(sharp) = <phi_j, D chi_j> / <phi_j, chi_j>` for the sharp
/// and twisted eigenvectors `phi_j`, `chi_j`. Orbitals with small overlap
/// (degenerate levels) fall back to the plain eigenvalue difference.
fn seam_shift<T: Real>(
    sharp: &SpectralData<T>,
    twisted: &SpectralData<T>,
    h_theta: &DiscreteHamiltonian<T>,
    n: usize,
) -> T {
    let last = sharp.dimension() - 1;
    let inv_h2 = -h_theta.hopping();
    let d_low = -(h_theta.twist().phase() - sharp.twist().phase()) * cplx(inv_h2);
    let d_high = conj(d_low);
    let half = T::lit(0.5);
    let mut total = T::zero();
    for j in 0..n {
        let overlap = (0..=last).fold(cplx(T::zero()), |a, i| {
            a + conj(sharp.value(j, i)) * twisted.value(j, i)
        }) * cplx(sharp.spacing());
        let direct = twisted.eigenvalues()[j] - sharp.eigenvalues()[j];
        if modulus(overlap) < half {
            total += direct;
            continue;
        }
        let seam = (conj(sharp.value(j, last)) * d_low * twisted.value(j, 0)
            + conj(sharp.value(j, 0)) * d_high * twisted.value(j, last))
            * cplx(sharp.spacing());
        total += (seam / overlap).re;
    }
    total
}

/// Richardson combination `(4 X(theta/2) - X(theta)) / 3`, removing the `O(theta^2)` bias.
pub fn richardson<T: Real>(x_theta: T, x_half: T) -> T {
    (T::lit(4.0) * x_half - x_theta) / T::lit(3.0)
}

/// Run of cells on the ring, `start, start + 1, ..., start + len - 1` modulo `L`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CellInterval {
    pub start: usize,
    pub len: usize,
    pub ring: usize,
}

impl CellInterval {
    pub fn contains(&self, cell: usize) -> bool {
        (cell + self.ring - self.start) % self.ring < self.len
    }

    pub fn cells(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.len).map(move |k| (self.start + k) % self.ring)
    }
}

/// Largest connected run of cells with `Phi <= delta` on the ring.
///
/// Ties go to the run with the smallest starting cell.
pub fn flat_region<T: Real>(row: &[T], delta: T) -> Result<CellInterval> {
    if !(delta > T::zero()) {
        return Err(Error::Contract(format!("delta = {} must be positive", delta.as_f64())));
    }
    let l = row.len();
    let cut = delta * (T::one() + T::lit(1e-10).max(T::lit(64.0) * T::epsilon()));
    let ok: Vec<bool> = row.iter().map(|v| *v <= cut).collect();
    if ok.iter().all(|b| *b) {
        return Ok(CellInterval { start: 0, len: l, ring: l });
    }
    let mut best: Option<CellInterval> = None;
    for start in 0..l {
        if !ok[start] || ok[(start + l - 1) % l] {
            continue;
        }
        let mut len = 0;
        while ok[(start + len) % l] {
            len += 1;
        }
        let better = match best {
            None => true,
            Some(b) => len > b.len || (len == b.len && start < b.start),
        };
        if better {
            best = Some(CellInterval { start, len, ring: l });
        }
    }
    best.ok_or_else(|| {
        Error::Construction(format!(
            "no cell with amplitude below delta = {}",
            delta.as_f64()
        ))
    })
}

/// `delta = A_L L^{3/2} exp(-L^xi / (4 ell)^xi)`.
pub fn default_delta<T: Real>(sule: &SuleData<T>, length: usize) -> T {
    let l = T::of_usize(length);
    let four_ell = T::lit(4.0) * sule.ell;
    sule.amplitude * l.powf(T::lit(1.5)) * (-(l.powf(sule.xi) / four_ell.powf(sule.xi))).exp()
}

/// Phase-twisted trial state and the resulting bounds.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialBound<T> {
    pub delta: T,
    pub regions: Vec<CellInterval>,
    /// `theta / |I_j|` per occupied orbital.
    pub slopes: Vec<T>,
    pub gamma_tilde_norm: T,
    /// `1 + 2 |theta| delta L N_mu`.
    pub norm_bound: T,
    /// `mu N_mu + tr[(H(theta_mu) - mu) gamma_trial]`.
    pub direct_value: T,
    pub y_l: T,
    /// Trace and extreme eigenvalues of `gamma_trial`.
    pub trial_trace: T,
    pub trial_min_eigenvalue: T,
    pub trial_max_eigenvalue: T,
}

impl<T: Real> TrialBound<T> {
    pub fn min_region(&self) -> usize {
        self.regions.iter().map(|r| r.len).min().unwrap_or(0)
    }
}

/// Builds `chi_j = e^{i psi_j} phi_j` on the sharp orbitals and evaluates the bound.
///
/// `psi_j` rises linearly by `theta` across the flat region of orbital `j`
/// and is constant elsewhere, so `chi_j` obeys the `theta_mu` boundary condition.
pub fn trial_energy<T: Real>(
    problem: &TwistedProblem<T>,
    delta: T,
) -> Result<TrialBound<T>> {
    let grid = &problem.grid;
    let l = grid.length();
    if l < MIN_LENGTH {
        return Err(Error::Contract(format!("trial bound needs L >= {MIN_LENGTH}")));
    }
    let theta = problem.result.theta;
    let mu = problem.result.mu;
    let n = problem.result.n_mu;
    let sharp = problem.sharp();
    let amps = local_amplitudes(sharp, grid);
    let ng = grid.num_points();
    let m = grid.points_per_unit();
    let h = grid.spacing::<T>();

    let mut regions = Vec::with_capacity(n);
    let mut slopes = Vec::with_capacity(n);
    let mut chis: Vec<Vec<Complex<T>>> = Vec::with_capacity(n);
    for j in 0..n {
        let region = flat_region(amps.row(j), delta)?;
        let step = theta / T::of_usize(region.len * m);
        let mut psi = T::zero();
        let mut chi = Vec::with_capacity(ng);
        for i in 0..ng {
            chi.push(sharp.value(j, i) * cis(psi));
            if region.contains(grid.cell_of(i)) {
                psi += step;
            }
        }
        regions.push(region);
        slopes.push(theta / T::of_usize(region.len));
        chis.push(chi);
    }

    let gram = DMatrix::from_fn(n, n, |a, b| {
        chis[a]
            .iter()
            .zip(&chis[b])
            .fold(cplx(T::zero()), |s, (x, y)| s + conj(*x) * *y)
            * cplx(h)
    });
    let eig = SymmetricEigen::try_new(gram, T::epsilon(), 10_000)
        .ok_or_else(|| Error::Numerical("trial Gram matrix eigensolver failed".into()))?;
    let gt_norm = eig.eigenvalues.iter().fold(T::zero(), |a, v| a.max(*v));
    let gt_min = eig.eigenvalues.iter().fold(gt_norm, |a, v| a.min(*v));
    let scale = gt_norm.max(T::one());

    let h_theta = problem.twisted_hamiltonian();
    let mut kinetic = T::zero();
    for chi in &chis {
        let hchi = h_theta.apply(chi);
        let e = chi
            .iter()
            .zip(&hchi)
            .fold(cplx(T::zero()), |s, (x, y)| s + conj(*x) * *y)
            * cplx(h);
        let norm = chi.iter().fold(T::zero(), |s, x| s + crate::scalar::norm_sqr(*x)) * h;
        kinetic += e.re - mu * norm;
    }
    let n_t = T::of_usize(n);
    let direct_value = mu * n_t + kinetic / scale;

    let norm_bound = T::one() + T::lit(2.0) * theta.abs() * delta * T::of_usize(l) * n_t;
    if gt_norm > norm_bound + T::lit(INEQUALITY_SLACK) {
        return Err(Error::Invariant(format!(
            "trial norm {} exceeds bound {}",
            gt_norm.as_f64(),
            norm_bound.as_f64()
        )));
    }
    let lt = T::of_usize(l);
    let y_l = T::lit(2.0) * delta * lt * lt / theta.abs() * negative_part_trace(sharp, mu) * n_t
        + T::lit(4.0) * lt * delta * delta / T::of_usize(l - 4) * n_t;

    let trial_trace = eig.eigenvalues.iter().fold(T::zero(), |a, v| a + *v) / scale;
    Ok(TrialBound {
        delta,
        regions,
        slopes,
        gamma_tilde_norm: gt_norm,
        norm_bound,
        direct_value,
        y_l,
        trial_trace,
        trial_min_eigenvalue: gt_min / scale,
        trial_max_eigenvalue: gt_norm / scale,
    })
}
