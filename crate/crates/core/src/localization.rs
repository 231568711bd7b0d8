//! Eigenfunction correlators, ensemble decay fits and localization centers.

use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::spectral::{LocalAmplitudes, SpectralData};

/// Energy interval `J`, either `(-inf, mu]` or `[a, b]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EnergyWindow<T> {
    Below(T),
    Interval(T, T),
}

impl<T: Real> EnergyWindow<T> {
    pub fn below(mu: T) -> Self {
        EnergyWindow::Below(mu)
    }

    pub fn interval(a: T, b: T) -> Result<Self> {
        if !(a <= b) {
            return Err(Error::Config(format!(
                "energy window [{}, {}] is empty",
                a.as_f64(),
                b.as_f64()
            )));
        }
        Ok(EnergyWindow::Interval(a, b))
    }

    pub fn contains(&self, e: T) -> bool {
        match *self {
            EnergyWindow::Below(mu) => e <= mu,
            EnergyWindow::Interval(a, b) => a <= e && e <= b,
        }
    }

    pub fn upper(&self) -> T {
        match *self {
            EnergyWindow::Below(mu) => mu,
            EnergyWindow::Interval(_, b) => b,
        }
    }

    /// Indices of eigenpairs with energies in the window.
    pub fn select(&self, spec: &SpectralData<T>) -> Vec<usize> {
        spec.eigenvalues()
            .iter()
            .enumerate()
            .filter(|(_, e)| self.contains(**e))
            .map(|(j, _)| j)
            .collect()
    }
}

/// `min(|n - m|, L - |n - m|)`.
pub fn torus_distance(n: usize, m: usize, length: usize) -> usize {
    let d = n.abs_diff(m) % length;
    d.min(length - d)
}

/// `Q(n, m) = sum_{E_j in J} Phi(j, n) Phi(j, m)`.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelatorMatrix<T> {
    cells: usize,
    values: Vec<T>,
    window: EnergyWindow<T>,
    theta: T,
    states: usize,
}

impl<T: Real> CorrelatorMatrix<T> {
    pub fn cells(&self) -> usize {
        self.cells
    }

    #[inline]
    pub fn get(&self, n: usize, m: usize) -> T {
        self.values[n * self.cells + m]
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn window(&self) -> EnergyWindow<T> {
        self.window
    }

    pub fn theta(&self) -> T {
        self.theta
    }

    /// Number of eigenpairs in the window.
    pub fn states(&self) -> usize {
        self.states
    }

    pub fn trace(&self) -> T {
        (0..self.cells).fold(T::zero(), |a, n| a + self.get(n, n))
    }
}

pub fn correlator<T: Real>(
    amps: &LocalAmplitudes<T>,
    spec: &SpectralData<T>,
    window: EnergyWindow<T>,
) -> CorrelatorMatrix<T> {
    let l = amps.cells();
    let states = window.select(spec);
    let mut values = vec![T::zero(); l * l];
    for &j in &states {
        let row = amps.row(j);
        for n in 0..l {
            for m in n..l {
                values[n * l + m] += row[n] * row[m];
            }
        }
    }
    for n in 0..l {
        for m in 0..n {
            values[n * l + m] = values[m * l + n];
        }
    }
    CorrelatorMatrix {
        cells: l,
        values,
        window,
        theta: spec.twist().theta(),
        states: states.len(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct BinStats<T> {
    /// Running mean over realizations of the per-realization bin average.
    pub mean: T,
    /// Sum of squared deviations from `mean` (Welford).
    pub m2: T,
    /// Number of ordered cell pairs at this distance in one realization.
    pub pairs: usize,
}

/// Distance-binned ensemble averages of an `L x L` cell matrix.
///
/// Each realization contributes the average over all ordered pairs `(n, m)`
/// at torus distance `d`; the variance is taken across realizations.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleAccumulator<T> {
    length: usize,
    window: Option<EnergyWindow<T>>,
    bins: Vec<BinStats<T>>,
    realizations: usize,
}

impl<T: Real> EnsembleAccumulator<T> {
    pub fn new(length: usize, window: Option<EnergyWindow<T>>) -> Self {
        let mut bins = vec![
            BinStats {
                mean: T::zero(),
                m2: T::zero(),
                pairs: 0
            };
            length / 2 + 1
        ];
        for n in 0..length {
            for m in 0..length {
                bins[torus_distance(n, m, length)].pairs += 1;
            }
        }
        EnsembleAccumulator {
            length,
            window,
            bins,
            realizations: 0,
        }
    }

    pub fn length(&self) -> usize {
        self.length
    }

    pub fn realizations(&self) -> usize {
        self.realizations
    }

    pub fn bins(&self) -> &[BinStats<T>] {
        &self.bins
    }

    pub fn accumulate(&mut self, q: &CorrelatorMatrix<T>) -> Result<()> {
        if let Some(w) = self.window {
            if w != q.window {
                return Err(Error::Contract("correlator window differs from accumulator".into()));
            }
        }
        self.accumulate_matrix(q.cells(), q.values())
    }

    /// Adds one realization of a row-major `L x L` matrix indexed by cells.
    pub fn accumulate_matrix(&mut self, cells: usize, values: &[T]) -> Result<()> {
        if cells != self.length || values.len() != cells * cells {
            return Err(Error::Contract(format!(
                "matrix of {cells} cells does not fit accumulator of length {}",
                self.length
            )));
        }
        let mut local = vec![T::zero(); self.bins.len()];
        for n in 0..cells {
            for m in 0..cells {
                local[torus_distance(n, m, cells)] += values[n * cells + m];
            }
        }
        self.realizations += 1;
        let r = T::of_usize(self.realizations);
        for (bin, s) in self.bins.iter_mut().zip(local) {
            let avg = s / T::of_usize(bin.pairs);
            let delta = avg - bin.mean;
            bin.mean += delta / r;
            bin.m2 += delta * (avg - bin.mean);
        }
        Ok(())
    }

    pub fn merge(&mut self, other: &Self) -> Result<()> {
        if other.length != self.length || other.window != self.window {
            return Err(Error::Contract("cannot merge accumulators of different shape".into()));
        }
        if other.realizations == 0 {
            return Ok(());
        }
        let na = T::of_usize(self.realizations);
        let nb = T::of_usize(other.realizations);
        let n = na + nb;
        for (a, b) in self.bins.iter_mut().zip(&other.bins) {
            let delta = b.mean - a.mean;
            a.mean += delta * nb / n;
            a.m2 += b.m2 + delta * delta * na * nb / n;
        }
        self.realizations += other.realizations;
        Ok(())
    }

    pub fn mean(&self, d: usize) -> T {
        if self.realizations == 0 {
            return T::zero();
        }
        self.bins[d].mean
    }

    /// Sample variance across realizations; zero for fewer than two.
    pub fn variance(&self, d: usize) -> T {
        let r = self.realizations;
        if r < 2 {
            return T::zero();
        }
        (self.bins[d].m2 / T::of_usize(r - 1)).max(T::zero())
    }

    /// Total number of pair samples in bin `d`, i.e. `R * pairs(d)`.
    pub fn count(&self, d: usize) -> usize {
        self.realizations * self.bins[d].pairs
    }

    pub fn means(&self) -> Vec<T> {
        (0..self.bins.len()).map(|d| self.mean(d)).collect()
    }
}

/// Options for [`fit_ecl`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions<T> {
    pub xi: T,
    pub d_min: usize,
    /// Defaults to `L / 2 - 1`.
    pub d_max: Option<usize>,
    /// Fits with `ell > divergence_factor * L` are reported as divergent.
    pub divergence_factor: T,
}

impl<T: Real> Default for FitOptions<T> {
    fn default() -> Self {
        FitOptions {
            xi: T::one(),
            d_min: 2,
            d_max: None,
            divergence_factor: T::lit(10.0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalizationFit<T> {
    pub ell: T,
    pub xi: T,
    pub prefactor: T,
    pub r_squared: T,
    pub slope: T,
    /// Set when `xi` was fitted as well; the two-parameter fit is poorly conditioned.
    pub ill_conditioned: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EclFit<T> {
    Localized(LocalizationFit<T>),
    /// No resolvable decay: slope non-negative or length beyond the box.
    Divergent { slope: T, r_squared: T },
}

impl<T: Real> EclFit<T> {
    pub fn ell(&self) -> Option<T> {
        match self {
            EclFit::Localized(f) => Some(f.ell),
            EclFit::Divergent { .. } => None,
        }
    }

    pub fn is_divergent(&self) -> bool {
        matches!(self, EclFit::Divergent { .. })
    }
}

/// Ordinary least squares `y = a + b x`; returns `(a, b, r_squared)`.
pub fn linear_regression<T: Real>(x: &[T], y: &[T]) -> (T, T, T) {
    let n = T::of_usize(x.len());
    let mx = x.iter().fold(T::zero(), |a, v| a + *v) / n;
    let my = y.iter().fold(T::zero(), |a, v| a + *v) / n;
    let mut sxx = T::zero();
    let mut sxy = T::zero();
    let mut syy = T::zero();
    for (a, b) in x.iter().zip(y) {
        sxx += (*a - mx) * (*a - mx);
        sxy += (*a - mx) * (*b - my);
        syy += (*b - my) * (*b - my);
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r2 = if syy == T::zero() {
        T::one()
    } else {
        sxy * sxy / (sxx * syy)
    };
    (intercept, slope, r2)
}

/// Fits `mean(d) = C exp(-d^xi / ell^xi)` to bins `d_min..=d_max`.
pub fn fit_ecl<T: Real>(acc: &EnsembleAccumulator<T>, opts: FitOptions<T>) -> Result<EclFit<T>> {
    fit_bins(&acc.means(), acc.length(), opts)
}

/// Same fit applied to raw bin means indexed by distance.
pub fn fit_bins<T: Real>(means: &[T], length: usize, opts: FitOptions<T>) -> Result<EclFit<T>> {
    if !(opts.xi > T::zero() && opts.xi <= T::one()) {
        return Err(Error::Config(format!("exponent xi = {} outside (0, 1]", opts.xi.as_f64())));
    }
    let d_max = opts
        .d_max
        .unwrap_or((length / 2).saturating_sub(1))
        .min(means.len().saturating_sub(1));
    if d_max < opts.d_min || d_max + 1 - opts.d_min < 4 {
        return Err(Error::FitDomain(format!(
            "fewer than 4 bins in fit range [{}, {d_max}]",
            opts.d_min
        )));
    }
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for (d, m) in means.iter().enumerate().take(d_max + 1).skip(opts.d_min) {
        if !(*m > T::zero()) {
            return Err(Error::FitDomain(format!(
                "non-positive bin mean {} at distance {d}",
                m.as_f64()
            )));
        }
        xs.push(T::of_usize(d).powf(opts.xi));
        ys.push(m.ln());
    }
    let (a, b, r2) = linear_regression(&xs, &ys);
    if b >= T::zero() {
        return Ok(EclFit::Divergent { slope: b, r_squared: r2 });
    }
    let ell = (-T::one() / b).powf(T::one() / opts.xi);
    if ell > opts.divergence_factor * T::of_usize(length) {
        return Ok(EclFit::Divergent { slope: b, r_squared: r2 });
    }
    Ok(EclFit::Localized(LocalizationFit {
        ell,
        xi: opts.xi,
        prefactor: a.exp(),
        r_squared: r2,
        slope: b,
        ill_conditioned: false,
    }))
}

/// Scans `xi` over `(0, 1]` and keeps the fit with the best `R^2`.
///
/// The result is flagged `ill_conditioned`: `ell` and `xi` trade off strongly.
pub fn fit_ecl_free_exponent<T: Real>(
    acc: &EnsembleAccumulator<T>,
    opts: FitOptions<T>,
) -> Result<EclFit<T>> {
    let mut best: Option<LocalizationFit<T>> = None;
    let steps = 100;
    for k in 1..=steps {
        let xi = T::of_usize(k) / T::of_usize(steps);
        if let EclFit::Localized(f) = fit_ecl(acc, FitOptions { xi, ..opts })? {
            if best.is_none_or(|b| f.r_squared > b.r_squared) {
                best = Some(f);
            }
        }
    }
    match best {
        Some(f) => Ok(EclFit::Localized(LocalizationFit {
            ill_conditioned: true,
            ..f
        })),
        None => fit_ecl(acc, opts),
    }
}

/// Localization centers and the uniform amplitude bound of the selected eigenpairs.
#[derive(Debug, Clone, PartialEq)]
pub struct SuleData<T> {
    pub states: Vec<usize>,
    /// Center cell per selected state, same order as `states`.
    pub centers: Vec<usize>,
    pub amplitude: T,
    pub ell: T,
    pub xi: T,
}

impl<T: Real> SuleData<T> {
    /// Checks `Phi(j, n) <= A L^{3/2} exp(-dist^xi / ell^xi)` for every selected state.
    pub fn envelope_holds(&self, amps: &LocalAmplitudes<T>) -> bool {
        let l = amps.cells();
        let scale = self.amplitude * T::of_usize(l).powf(T::lit(1.5));
        let slack = T::one() + T::lit(1e3) * T::epsilon();
        self.states.iter().zip(&self.centers).all(|(&j, &c)| {
            (0..l).all(|n| {
                let d = T::of_usize(torus_distance(n, c, l));
                let env = (-(d.powf(self.xi) / self.ell.powf(self.xi))).exp();
                amps.get(j, n) <= scale * env * slack
            })
        })
    }
}

/// `gamma_j = argmax_n Phi(j, n)` (smallest cell on ties) and
/// `A_L = max_{j,n} Phi(j, n) exp(dist(n, gamma_j)^xi / ell^xi) L^{-3/2}`.
pub fn sule_extract<T: Real>(
    amps: &LocalAmplitudes<T>,
    states: &[usize],
    ell: T,
    xi: T,
) -> Result<SuleData<T>> {
    if !(ell > T::zero()) {
        return Err(Error::Contract(format!("ell = {} must be positive", ell.as_f64())));
    }
    let l = amps.cells();
    let norm = T::of_usize(l).powf(T::lit(-1.5));
    let mut centers = Vec::with_capacity(states.len());
    let mut amplitude = T::zero();
    for &j in states {
        let row = amps.row(j);
        let mut c = 0;
        for n in 1..l {
            if row[n] > row[c] {
                c = n;
            }
        }
        for (n, phi) in row.iter().enumerate() {
            let d = T::of_usize(torus_distance(n, c, l));
            let v = *phi * (d.powf(xi) / ell.powf(xi)).exp() * norm;
            amplitude = amplitude.max(v);
        }
        centers.push(c);
    }
    Ok(SuleData {
        states: states.to_vec(),
        centers,
        amplitude,
        ell,
        xi,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn torus_distance_examples() {
        assert_eq!(torus_distance(0, 31, 32), 1);
        assert_eq!(torus_distance(0, 16, 32), 16);
        assert_eq!(torus_distance(2, 6, 32), 4);
        assert_eq!(torus_distance(5, 5, 9), 0);
    }

    #[test]
    fn exact_exponential_fit() {
        let means: Vec<f64> = (0..=16).map(|d| (-(d as f64) / 3.0).exp()).collect();
        let fit = fit_bins(&means, 32, FitOptions::default()).unwrap();
        let EclFit::Localized(f) = fit else { panic!("expected decay") };
        assert!((f.ell - 3.0).abs() < 1e-6);
        assert!((f.r_squared - 1.0).abs() < 1e-12);
        assert!((f.prefactor - 1.0).abs() < 1e-9);
    }

    #[test]
    fn flat_data_is_divergent() {
        let means: Vec<f64> = (0..=16).map(|d| 0.5 + 1e-3 * d as f64).collect();
        assert!(fit_bins(&means, 32, FitOptions::default()).unwrap().is_divergent());
        let slow: Vec<f64> = (0..=16).map(|d| (-(d as f64) / 1000.0).exp()).collect();
        assert!(fit_bins(&slow, 32, FitOptions::default()).unwrap().is_divergent());
    }

    #[test]
    fn fit_domain_errors() {
        let mut means: Vec<f64> = (0..=16).map(|d| (-(d as f64)).exp()).collect();
        means[5] = 0.0;
        assert!(matches!(
            fit_bins(&means, 32, FitOptions::default()),
            Err(Error::FitDomain(_))
        ));
        let short = vec![1.0, 0.5, 0.25, 0.1];
        assert!(matches!(
            fit_bins(&short, 6, FitOptions::default()),
            Err(Error::FitDomain(_))
        ));
    }

    #[test]
    fn accumulator_variance_and_counts() {
        let l = 6;
        let vals: Vec<f64> = (0..36).map(|k| 1.0 + (k % 7) as f64).collect();
        let mut acc = EnsembleAccumulator::new(l, None);
        for _ in 0..5 {
            acc.accumulate_matrix(l, &vals).unwrap();
        }
        for d in 0..=3 {
            assert!(acc.variance(d).abs() < 1e-12);
        }
        assert_eq!(acc.count(0), 5 * 6);
        assert_eq!(acc.count(3), 5 * 6);
        assert_eq!(acc.count(1), 5 * 12);
        let diag_mean = (0..6).map(|n| vals[n * 6 + n]).sum::<f64>() / 6.0;
        assert!((acc.mean(0) - diag_mean).abs() < 1e-12);
    }

    #[test]
    fn sule_point_mass_and_uniform() {
        let l = 8;
        let uniform = vec![1.0 / (l as f64).sqrt(); l];
        let amps = LocalAmplitudes::from_rows(l, &[uniform]).unwrap();
        let s = sule_extract(&amps, &[0], 1.0, 1.0).unwrap();
        assert_eq!(s.centers, vec![0]);
        let expect = (1.0 / 8f64.sqrt()) * 4f64.exp() * 8f64.powf(-1.5);
        assert!((s.amplitude - expect).abs() < 1e-12);
        assert!(s.envelope_holds(&amps));

        let mut delta = vec![0.0; l];
        delta[4] = 1.0;
        let amps = LocalAmplitudes::from_rows(l, &[delta]).unwrap();
        let s = sule_extract(&amps, &[0], 2.0, 1.0).unwrap();
        assert_eq!(s.centers, vec![4]);
        assert!((s.amplitude - 8f64.powf(-1.5)).abs() < 1e-15);
    }
}
