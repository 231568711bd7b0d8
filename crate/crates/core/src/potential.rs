//! Random alloy-type potentials with a counter-based sampler.

use rand::RngCore;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::scalar::Real;

/// Single-site shape of the random potential.
#[derive(Debug, Clone, PartialEq)]
pub enum PotentialKind<T> {
    Zero,
    /// `U = 1_[0,1)`: the potential is constant on each unit cell.
    AlloyStep { v_max: T },
    /// `U` sampled on the `M` grid points of one cell, with `0 <= U <= 1`.
    AlloyBump { profile: Vec<T>, v_max: T },
}

/// `V(x) = W(x) + sum_n omega_n U(x - n)` with `omega_n ~ Uniform[0, v_max]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PotentialModel<T> {
    pub kind: PotentialKind<T>,
    /// Optional 1-periodic background, sampled on the `M` points of a cell.
    pub background: Option<Vec<T>>,
}

impl<T: Real> PotentialModel<T> {
    pub fn zero() -> Self {
        PotentialModel {
            kind: PotentialKind::Zero,
            background: None,
        }
    }

    pub fn alloy_step(v_max: T) -> Self {
        PotentialModel {
            kind: PotentialKind::AlloyStep { v_max },
            background: None,
        }
    }

    pub fn alloy_bump(profile: Vec<T>, v_max: T) -> Self {
        PotentialModel {
            kind: PotentialKind::AlloyBump { profile, v_max },
            background: None,
        }
    }

    pub fn with_background(mut self, background: Vec<T>) -> Self {
        self.background = Some(background);
        self
    }

    pub fn v_max(&self) -> T {
        match &self.kind {
            PotentialKind::Zero => T::zero(),
            PotentialKind::AlloyStep { v_max } | PotentialKind::AlloyBump { v_max, .. } => *v_max,
        }
    }

    pub fn sup_background(&self) -> T {
        self.background
            .as_ref()
            .map(|w| w.iter().fold(T::zero(), |acc, v| acc.max(v.abs())))
            .unwrap_or_else(T::zero)
    }

    pub fn validate(&self, grid: &Grid) -> Result<()> {
        let m = grid.points_per_unit();
        match &self.kind {
            PotentialKind::Zero => {}
            PotentialKind::AlloyStep { v_max } => check_v_max(*v_max)?,
            PotentialKind::AlloyBump { profile, v_max } => {
                check_v_max(*v_max)?;
                if profile.len() != m {
                    return Err(Error::Config(format!(
                        "bump profile has {} samples, grid has {m} points per unit",
                        profile.len()
                    )));
                }
                if profile
                    .iter()
                    .any(|u| !u.is_finite() || *u < T::zero() || *u > T::one())
                {
                    return Err(Error::Config("bump profile must lie in [0, 1]".into()));
                }
                if profile.iter().all(|u| *u <= T::zero()) {
                    return Err(Error::Config("bump profile vanishes identically".into()));
                }
            }
        }
        if let Some(w) = &self.background {
            if w.len() != m {
                return Err(Error::Config(format!(
                    "background has {} samples, grid has {m} points per unit",
                    w.len()
                )));
            }
            if w.iter().any(|v| !v.is_finite()) {
                return Err(Error::Config("background must be finite".into()));
            }
        }
        Ok(())
    }

    fn profile_at(&self, offset: usize) -> T {
        match &self.kind {
            PotentialKind::Zero => T::zero(),
            PotentialKind::AlloyStep { .. } => T::one(),
            PotentialKind::AlloyBump { profile, .. } => profile[offset],
        }
    }
}

fn check_v_max<T: Real>(v: T) -> Result<()> {
    if !(v.is_finite() && v > T::zero()) {
        return Err(Error::Config(format!(
            "v_max must be positive and finite, got {}",
            v.as_f64()
        )));
    }
    Ok(())
}

/// One seeded sample of the potential on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct DisorderRealization<T> {
    base_seed: u64,
    index: u64,
    length: usize,
    points_per_unit: usize,
    couplings: Vec<T>,
    values: Vec<T>,
    v_max: T,
    sup_background: T,
}

impl<T: Real> DisorderRealization<T> {
    pub fn base_seed(&self) -> u64 {
        self.base_seed
    }

    pub fn index(&self) -> u64 {
        self.index
    }

    /// Coupling `omega_n` of each unit cell.
    pub fn couplings(&self) -> &[T] {
        &self.couplings
    }

    /// Potential value at each grid point.
    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn matches(&self, grid: &Grid) -> bool {
        self.length == grid.length() && self.points_per_unit == grid.points_per_unit()
    }

    /// Largest per-cell integral `h * sum |V_i|` over the ring.
    pub fn max_cell_integral(&self) -> T {
        let h = T::one() / T::of_usize(self.points_per_unit);
        self.values
            .chunks(self.points_per_unit)
            .map(|c| c.iter().fold(T::zero(), |acc, v| acc + v.abs()) * h)
            .fold(T::zero(), |acc, v| acc.max(v))
    }

    /// The integrability bound `v_max + sup |W|` every cell integral must obey.
    pub fn cell_integral_bound(&self) -> T {
        self.v_max + self.sup_background
    }
}

/// Uniform `[0, 1)` variate for one cell of one realization.
///
/// Each realization owns a ChaCha stream and each cell a fixed word offset,
/// so the value depends only on `(base_seed, index, cell)`.
pub fn cell_uniform(base_seed: u64, index: u64, cell: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(base_seed);
    rng.set_stream(index);
    rng.set_word_pos(u128::from(cell) * 2);
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

pub fn sample_potential<T: Real>(
    model: &PotentialModel<T>,
    grid: &Grid,
    base_seed: u64,
    index: u64,
) -> Result<DisorderRealization<T>> {
    model.validate(grid)?;
    let l = grid.length();
    let m = grid.points_per_unit();
    let v_max = model.v_max();
    let couplings: Vec<T> = match model.kind {
        PotentialKind::Zero => vec![T::zero(); l],
        _ => (0..l as u64)
            .map(|c| T::lit(cell_uniform(base_seed, index, c)) * v_max)
            .collect(),
    };
    let mut values = Vec::with_capacity(grid.num_points());
    for (c, w) in couplings.iter().enumerate() {
        for off in 0..m {
            let bg = model.background.as_ref().map_or(T::zero(), |b| b[off]);
            let v = bg + *w * model.profile_at(off);
            debug_assert_eq!(grid.cell_of(c * m + off), c);
            values.push(v);
        }
    }
    Ok(DisorderRealization {
        base_seed,
        index,
        length: l,
        points_per_unit: m,
        couplings,
        values,
        v_max,
        sup_background: model.sup_background(),
    })
}
