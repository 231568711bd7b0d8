use nalgebra::DMatrix;

use super::{determinant, selected_orbitals, EvalGrid, ObdmKernel};
use crate::error::{Error, Result};
use crate::scalar::{conj, cplx, Complex, Real};
use crate::spectral::{OrbitalSelection, SpectralData};

/// Largest particle number the brute-force sum accepts.
pub const MAX_ORACLE_PARTICLES: usize = 3;

/// Direct quadrature of `gamma(x, y) = N int Psi(x, z) conj(Psi(y, z)) dz`.
///
/// `Psi = det(phi_a(x_b)) prod_{j<k} sign(x_k - x_j) / sqrt(N!)`. The `N - 1`
/// free coordinates run over every grid point with weight `h`; `x` and `y`
/// run over the eval grid.
pub fn brute_force_gamma<T: Real>(
    spec: &SpectralData<T>,
    sel: &OrbitalSelection<T>,
    eval: &EvalGrid,
) -> Result<ObdmKernel<T>> {
    sel.require_nonempty()?;
    let n = sel.indices.len();
    if n > MAX_ORACLE_PARTICLES {
        return Err(Error::Contract(format!(
            "brute force limited to {MAX_ORACLE_PARTICLES} particles, got {n}"
        )));
    }
    let orbitals = selected_orbitals(spec, sel)?;
    let ng = orbitals.nrows();
    let h = eval.grid().spacing::<T>();
    let free = n - 1;
    let tuples = ng.pow(free as u32);

    // amp[p][t] = Psi-like amplitude with x = eval point p and z = tuple t, signs included.
    let mut amps: Vec<Vec<Complex<T>>> = Vec::with_capacity(eval.len());
    let mut coords = vec![0usize; n];
    for &x in eval.points() {
        let mut row = Vec::with_capacity(tuples);
        for t in 0..tuples {
            coords[0] = x;
            let mut rest = t;
            for c in coords.iter_mut().skip(1) {
                *c = rest % ng;
                rest /= ng;
            }
            let sign = pair_signs(&coords);
            if sign == 0 {
                row.push(cplx(T::zero()));
                continue;
            }
            let m = DMatrix::from_fn(n, n, |a, b| orbitals[(coords[b], a)]);
            let d = determinant(m);
            row.push(if sign > 0 { d } else { -d });
        }
        amps.push(row);
    }

    let mut factorial = 1usize;
    for k in 2..=n {
        factorial *= k;
    }
    let scale = cplx(T::of_usize(n) / T::of_usize(factorial) * h.powi(free as i32));
    let size = eval.len();
    let mut values = vec![cplx(T::zero()); size * size];
    for p in 0..size {
        for q in p..size {
            let s = amps[p]
                .iter()
                .zip(&amps[q])
                .fold(cplx(T::zero()), |acc, (a, b)| acc + *a * conj(*b));
            values[p * size + q] = s * scale;
            values[q * size + p] = conj(s * scale);
        }
        values[p * size + p].im = T::zero();
    }
    ObdmKernel::from_values(eval.grid().length(), eval.samples_per_unit(), n, values)
}

fn pair_signs(coords: &[usize]) -> i32 {
    let mut s = 1;
    for j in 0..coords.len() {
        for k in j + 1..coords.len() {
            match coords[k].cmp(&coords[j]) {
                std::cmp::Ordering::Greater => {}
                std::cmp::Ordering::Less => s = -s,
                std::cmp::Ordering::Equal => return 0,
            }
        }
    }
    s
}
