//! Uniform discretization of the ring `[0, L)` and boundary twists.

use std::ops::Range;

use num_rational::Ratio;

use crate::error::{Error, Result};
use crate::scalar::{cis, Complex, Real};

/// Smallest ring length accepted; the variational stiffness bound needs `L >= 5`.
pub const MIN_LENGTH: usize = 5;
pub const MIN_POINTS_PER_UNIT: usize = 4;

/// Ring of `length` unit cells, each sampled by `points_per_unit` grid points.
///
/// Grid point `i` sits at `x_i = i * h` with `h = 1 / points_per_unit`.
/// Cells are indexed from zero: cell `c` covers `[c, c + 1)` and owns the
/// grid indices `c * M .. (c + 1) * M`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Grid {
    length: usize,
    points_per_unit: usize,
}

impl Grid {
    pub fn new(length: usize, points_per_unit: usize) -> Result<Self> {
        if length < MIN_LENGTH {
            return Err(Error::Config(format!(
                "ring length {length} below minimum {MIN_LENGTH}"
            )));
        }
        if points_per_unit < MIN_POINTS_PER_UNIT {
            return Err(Error::Config(format!(
                "points per unit {points_per_unit} below minimum {MIN_POINTS_PER_UNIT}"
            )));
        }
        let grid = Grid {
            length,
            points_per_unit,
        };
        debug_assert_eq!(
            grid.spacing_exact() * Ratio::from_integer(grid.num_points()),
            Ratio::from_integer(length)
        );
        Ok(grid)
    }

    pub fn length(&self) -> usize {
        self.length
    }

    pub fn points_per_unit(&self) -> usize {
        self.points_per_unit
    }

    pub fn num_points(&self) -> usize {
        self.length * self.points_per_unit
    }

    /// Exact grid spacing `1 / M`.
    pub fn spacing_exact(&self) -> Ratio<usize> {
        Ratio::new(1, self.points_per_unit)
    }

    pub fn spacing<T: Real>(&self) -> T {
        T::one() / T::of_usize(self.points_per_unit)
    }

    pub fn coordinate<T: Real>(&self, i: usize) -> T {
        T::of_usize(i) * self.spacing::<T>()
    }

    pub fn cell_range(&self, cell: usize) -> Range<usize> {
        cell * self.points_per_unit..(cell + 1) * self.points_per_unit
    }

    pub fn cell_of(&self, i: usize) -> usize {
        i / self.points_per_unit
    }
}

/// Boundary phase `psi(L) = e^{i theta} psi(0)`, with `theta` stored in `(-pi, pi]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundaryTwist<T> {
    theta: T,
}

impl<T: Real> BoundaryTwist<T> {
    pub fn new(theta: T) -> Self {
        let two_pi = T::two_pi();
        let mut t = theta - two_pi * (theta / two_pi).round();
        if t <= -T::pi() {
            t += two_pi;
        }
        if t > T::pi() {
            t -= two_pi;
        }
        BoundaryTwist { theta: t }
    }

    pub fn periodic() -> Self {
        BoundaryTwist { theta: T::zero() }
    }

    pub fn antiperiodic() -> Self {
        BoundaryTwist { theta: T::pi() }
    }

    pub fn theta(&self) -> T {
        self.theta
    }

    pub fn is_periodic(&self) -> bool {
        self.theta == T::zero()
    }

    pub fn is_antiperiodic(&self) -> bool {
        self.theta == T::pi()
    }

    /// True when the twisted operator has a real-symmetric representation.
    pub fn is_real(&self) -> bool {
        self.is_periodic() || self.is_antiperiodic()
    }

    /// `e^{i theta}`, exact for the periodic and antiperiodic cases.
    pub fn phase(&self) -> Complex<T> {
        if self.is_periodic() {
            Complex::new(T::one(), T::zero())
        } else if self.is_antiperiodic() {
            Complex::new(-T::one(), T::zero())
        } else {
            cis(self.theta)
        }
    }

    pub fn shifted(&self, delta: T) -> Self {
        Self::new(self.theta + delta)
    }
}
