//! One realization of each experiment kind. Everything here is pure; the
//! runner owns scheduling and merging.

use std::collections::BTreeMap;

use tglab_core::dynamics::{evolve_density, leakage, log_time_grid, trap_initial_state, transport_deviation};
use tglab_core::grid::BoundaryTwist;
use tglab_core::hamiltonian::assemble;
use tglab_core::localization::{correlator, sule_extract, EnergyWindow};
use tglab_core::obdm::{
    block_norm_matrix, gamma_kernel, largest_eigenvalue, momentum_distribution, prefix_overlaps, EvalGrid,
};
use tglab_core::potential::{sample_potential, PotentialModel};
use tglab_core::spectral::{
    diagonalize, local_amplitudes, select_orbitals_count, select_orbitals_mu, BoundaryCondition,
    OrbitalSelection, SpectrumPair,
};
use tglab_core::stiffness::{default_delta, ground_energy, solve_twisted_with, trial_energy, INEQUALITY_SLACK};
use tglab_core::table::fmt_real;
use tglab_core::{Error, Grid, ObdmKernel, Result};

use crate::config::{ExperimentConfig, Kind, Particles};

/// Column layout of the per-realization table for each kind.
pub fn columns(kind: Kind) -> &'static [&'static str] {
    match kind {
        Kind::Spectrum => &["length", "index", "bc", "j", "energy"],
        Kind::Correlator | Kind::Obdm => &["length", "d", "mean", "variance", "count"],
        Kind::Bec => &["length", "index", "particles", "lambda_max", "n_zero", "trace"],
        Kind::Stiffness => &["length", "index", "theta", "n_mu", "e_zero", "e_theta", "x_l"],
        Kind::Bound => &[
            "length", "index", "theta", "n_mu", "ell", "delta", "status", "min_region", "e_theta",
            "direct_value", "gamma_tilde_norm", "norm_bound", "x_l", "y_l",
        ],
        Kind::Dynamics => &["length", "index", "t", "region", "count"],
    }
}

/// File name of the main table.
pub fn table_name(kind: Kind) -> &'static str {
    match kind {
        Kind::Spectrum => "spectrum.csv",
        Kind::Correlator => "correlator_bins.csv",
        Kind::Obdm => "obdm_bins.csv",
        Kind::Bec => "bec.csv",
        Kind::Stiffness => "stiffness.csv",
        Kind::Bound => "bound.csv",
        Kind::Dynamics => "dynamics.csv",
    }
}

/// Inputs shared by all realizations at one ring length.
#[derive(Debug, Clone)]
pub struct LengthContext<'a> {
    pub cfg: &'a ExperimentConfig,
    pub grid: Grid,
    pub model: PotentialModel<f64>,
    /// Localization length for `bound`, resolved before the main pass.
    pub ell: Option<f64>,
}

impl<'a> LengthContext<'a> {
    pub fn new(cfg: &'a ExperimentConfig, length: usize) -> Result<Self> {
        Ok(LengthContext {
            cfg,
            grid: Grid::new(length, cfg.grid.points_per_unit)?,
            model: cfg.potential.model(),
            ell: None,
        })
    }

    pub fn length(&self) -> usize {
        self.grid.length()
    }
}

/// Result of one realization.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Output {
    pub index: u64,
    pub rows: Vec<Vec<String>>,
    /// Row-major `L x L` cell matrix fed to the distance-bin accumulator.
    pub matrix: Option<Vec<f64>>,
    pub metrics: BTreeMap<String, f64>,
    /// Inequalities that failed beyond their slack.
    pub violations: Vec<String>,
}

impl Output {
    fn new(index: u64) -> Self {
        Output {
            index,
            ..Default::default()
        }
    }

    fn metric(&mut self, name: impl Into<String>, value: f64) {
        self.metrics.insert(name.into(), value);
    }
}

pub fn theta_key(name: &str, theta: f64) -> String {
    format!("{name}@{theta}")
}

fn select(pair: &SpectrumPair<f64>, particles: Particles, length: usize) -> Result<OrbitalSelection<f64>> {
    match particles.count_at(length) {
        Some(n) => select_orbitals_count(pair, n),
        None => select_orbitals_mu(pair, particles.mu().expect("mu mode")),
    }
}

fn kernel(ctx: &LengthContext, pair: &SpectrumPair<f64>) -> Result<ObdmKernel> {
    let sel = select(pair, ctx.cfg.particles, ctx.length())?;
    let eval = EvalGrid::new(&ctx.grid, ctx.cfg.eval_samples)?;
    gamma_kernel(&prefix_overlaps(pair.get(sel.sharp), &sel, &eval)?)
}

/// Runs realization `index` of the configured kind.
pub fn realize(ctx: &LengthContext, index: u64) -> Result<Output> {
    let cfg = ctx.cfg;
    let realization = sample_potential(&ctx.model, &ctx.grid, cfg.base_seed, index)?;
    let l = ctx.length();
    let ls = l.to_string();
    let is = index.to_string();
    let mut out = Output::new(index);
    match cfg.kind {
        Kind::Spectrum => {
            let pair = SpectrumPair::compute(&ctx.grid, &realization)?;
            for (bc, name) in [(BoundaryCondition::Periodic, "periodic"), (BoundaryCondition::Antiperiodic, "antiperiodic")] {
                for (j, e) in pair.get(bc).eigenvalues().iter().enumerate() {
                    out.rows.push(vec![ls.clone(), is.clone(), name.into(), (j + 1).to_string(), fmt_real(*e)]);
                }
            }
            let bad = pair.interlacing_violations(1e-12);
            if !bad.is_empty() {
                out.violations.push(format!("interlacing fails at levels {bad:?}"));
            }
            out.metric("interlacing_violations", bad.len() as f64);
            let sel = select(&pair, cfg.particles, l)?;
            let mu = match cfg.particles.mu() {
                Some(mu) => mu,
                None => pair.mu_for_count(sel.n_mu)?,
            };
            out.metric("n_mu", sel.n_mu as f64);
            out.metric("ground_energy", ground_energy(pair.get(sel.sharp), mu)?);
        }
        Kind::Correlator => {
            let h = assemble(&ctx.grid, &realization, BoundaryTwist::periodic())?;
            let spec = diagonalize(&h)?;
            let q = correlator(&local_amplitudes(&spec, &ctx.grid), &spec, cfg.window());
            out.metric("states", q.states() as f64);
            out.matrix = Some(q.values().to_vec());
        }
        Kind::Obdm => {
            let pair = SpectrumPair::compute(&ctx.grid, &realization)?;
            let k = kernel(ctx, &pair)?;
            out.metric("particles", k.particles() as f64);
            out.metric("trace", k.trace());
            out.matrix = Some(block_norm_matrix(&k));
        }
        Kind::Bec => {
            let pair = SpectrumPair::compute(&ctx.grid, &realization)?;
            let k = kernel(ctx, &pair)?;
            let lambda = largest_eigenvalue(&k)?;
            let n0 = momentum_distribution(&k, &[0])[0].value;
            out.metric("particles", k.particles() as f64);
            out.metric("lambda_max", lambda);
            out.metric("n_zero", n0);
            out.rows.push(vec![
                ls,
                is,
                k.particles().to_string(),
                fmt_real(lambda),
                fmt_real(n0),
                fmt_real(k.trace()),
            ]);
        }
        Kind::Stiffness => {
            let h0 = assemble(&ctx.grid, &realization, BoundaryTwist::periodic())?;
            let pair = SpectrumPair::compute(&ctx.grid, &realization)?;
            let mu = cfg.particles.mu().expect("validated");
            for &theta in &cfg.theta {
                let res = solve_twisted_with(&ctx.grid, h0.clone(), pair.clone(), mu, theta)?.result;
                out.metric(theta_key("x_l", theta), res.x_l);
                out.metric("n_mu", res.n_mu as f64);
                out.rows.push(vec![
                    ls.clone(),
                    is.clone(),
                    fmt_real(theta),
                    res.n_mu.to_string(),
                    fmt_real(res.e_zero),
                    fmt_real(res.e_theta),
                    fmt_real(res.x_l),
                ]);
            }
        }
        Kind::Bound => {
            let ell = ctx
                .ell
                .ok_or_else(|| Error::Contract("bound run without a localization length".into()))?;
            let h0 = assemble(&ctx.grid, &realization, BoundaryTwist::periodic())?;
            let pair = SpectrumPair::compute(&ctx.grid, &realization)?;
            let mu = cfg.particles.mu().expect("validated");
            for &theta in &cfg.theta {
                let p = solve_twisted_with(&ctx.grid, h0.clone(), pair.clone(), mu, theta)?;
                let n = p.result.n_mu;
                let amps = local_amplitudes(p.sharp(), &ctx.grid);
                let states: Vec<usize> = (0..n).collect();
                let sule = sule_extract(&amps, &states, ell, cfg.fit.xi)?;
                let delta = default_delta(&sule, l);
                let mut row = vec![
                    ls.clone(),
                    is.clone(),
                    fmt_real(theta),
                    n.to_string(),
                    fmt_real(ell),
                    fmt_real(delta),
                ];
                match trial_energy(&p, delta) {
                    Ok(tb) => {
                        let checks = [
                            ("energy above trial value", p.result.e_theta - tb.direct_value),
                            ("trial norm above bound", tb.gamma_tilde_norm - tb.norm_bound),
                            ("X_L above Y_L", p.result.x_l - tb.y_l),
                        ];
                        for (what, excess) in checks {
                            if excess > INEQUALITY_SLACK {
                                out.violations.push(format!("{what} by {excess:e} at theta = {theta}"));
                            }
                        }
                        out.metric(theta_key("built", theta), 1.0);
                        out.metric(theta_key("y_l", theta), tb.y_l);
                        row.extend([
                            "ok".to_string(),
                            tb.min_region().to_string(),
                            fmt_real(p.result.e_theta),
                            fmt_real(tb.direct_value),
                            fmt_real(tb.gamma_tilde_norm),
                            fmt_real(tb.norm_bound),
                            fmt_real(p.result.x_l),
                            fmt_real(tb.y_l),
                        ]);
                    }
                    Err(Error::Construction(_)) => {
                        out.metric(theta_key("built", theta), 0.0);
                        let nan = fmt_real(f64::NAN);
                        row.extend([
                            "no_region".to_string(),
                            "0".to_string(),
                            fmt_real(p.result.e_theta),
                            nan.clone(),
                            nan.clone(),
                            nan.clone(),
                            fmt_real(p.result.x_l),
                            nan,
                        ]);
                    }
                    Err(e) => return Err(e),
                }
                out.metric(theta_key("x_l", theta), p.result.x_l);
                out.rows.push(row);
            }
        }
        Kind::Dynamics => {
            let d = &cfg.dynamics;
            let h = assemble(&ctx.grid, &realization, BoundaryTwist::periodic())?;
            let spec = diagonalize(&h)?;
            let trap = d.trap_cells(l);
            let far = d.far_cells(l);
            let init = trap_initial_state(&spec, &h, &trap, d.count(l), cfg.window())?;
            let times = log_time_grid(d.t0, d.t_max);
            let traj = evolve_density(&spec, &ctx.grid, &init, &times)?;
            let defect = traj.conservation_defect();
            if defect > 1e-9 {
                out.violations.push(format!("particle number drifts by {defect:e}"));
            }
            if traj.min_density() < -1e-12 {
                out.violations.push(format!("negative density {:e}", traj.min_density()));
            }
            out.metric("trace", init.trace());
            out.metric("leakage", leakage(&traj, &far, &trap)?);
            out.metric("deviation", transport_deviation(&traj, &trap));
            out.metric("conservation_defect", defect);
            for (k, t) in times.iter().enumerate() {
                for (name, count) in [
                    ("trap", traj.region_count(k, &trap)),
                    ("far", traj.region_count(k, &far)),
                    ("total", traj.total(k)),
                ] {
                    out.rows.push(vec![ls.clone(), is.clone(), fmt_real(*t), name.into(), fmt_real(count)]);
                }
            }
        }
    }
    Ok(out)
}

/// Correlator matrix used to fit `ell` ahead of a `bound` run.
pub fn correlator_matrix(ctx: &LengthContext, index: u64, window: EnergyWindow<f64>) -> Result<Vec<f64>> {
    let realization = sample_potential(&ctx.model, &ctx.grid, ctx.cfg.base_seed, index)?;
    let spec = diagonalize(&assemble(&ctx.grid, &realization, BoundaryTwist::periodic())?)?;
    Ok(correlator(&local_amplitudes(&spec, &ctx.grid), &spec, window).values().to_vec())
}
