
use tglab_core::dynamics::{
    evolve_density, leakage, log_time_grid, trap_initial_state, transport_deviation, InitialOccupation,
};
use tglab_core::grid::{BoundaryTwist, Grid};
use tglab_core::hamiltonian::assemble;
use tglab_core::localization::{correlator, fit_ecl, sule_extract, EnergyWindow, EnsembleAccumulator, FitOptions};
use tglab_core::potential::{sample_potential, PotentialModel};
use tglab_core::spectral::{diagonalize, local_amplitudes, select_orbitals_mu, SpectrumPair};
use tglab_core::stiffness::{
    default_delta, energy_at_twist, ground_energy, solve_twisted, trial_energy, INEQUALITY_SLACK,
};

fn alloy(v: f64) -> PotentialModel<f64> {
    if v == 0.0 {
        PotentialModel::zero()
    } else {
        PotentialModel::alloy_step(v)
    }
}

#[test]
fn free_stiffness_equals_density() {
    let g = Grid::new(32, 8).unwrap();
    let r = sample_potential(&alloy(0.0), &g, 0, 0).unwrap();
    let mu = SpectrumPair::compute(&g, &r).unwrap().mu_for_count(16).unwrap();
    let res = solve_twisted(&g, &r, mu, 0.1).unwrap().result;
    assert_eq!(res.n_mu, 16);
    assert!((res.x_l - 0.5).abs() <= 0.05, "X_L = {}", res.x_l);
}

#[test]
fn stiffness_is_nonnegative_and_identity_holds() {
    for seed in 0..20 {
        let g = Grid::new(16, 8).unwrap();
        let r = sample_potential(&alloy(4.0), &g, 300, seed).unwrap();
        let pair = SpectrumPair::compute(&g, &r).unwrap();
        let sel = select_orbitals_mu(&pair, 3.0).unwrap();
        let e = ground_energy(pair.get(sel.sharp), 3.0).unwrap();
        let direct: f64 = pair.get(sel.sharp).eigenvalues()[..sel.n_mu].iter().sum();
        assert!((e - direct).abs() <= 1e-9 * direct.abs().max(1.0));
        let res = solve_twisted(&g, &r, 3.0, 0.2).unwrap().result;
        assert!(res.x_l >= -INEQUALITY_SLACK, "seed {seed}: X_L = {}", res.x_l);
    }
}

#[test]
fn single_orbital_ground_energy() {
    let g = Grid::new(16, 8).unwrap();
    let r = sample_potential(&alloy(4.0), &g, 3, 0).unwrap();
    let pair = SpectrumPair::compute(&g, &r).unwrap();
    let mu = pair.mu_for_count(1).unwrap();
    let sel = select_orbitals_mu(&pair, mu).unwrap();
    assert_eq!(sel.n_mu, 1);
    let e1 = pair.periodic.eigenvalues()[0];
    let ez = ground_energy(pair.get(sel.sharp), mu).unwrap();
    assert!((ez - e1).abs() < 1e-10 * e1.abs().max(1.0));
}

#[test]
fn twisted_energy_is_even_in_theta() {
    let g = Grid::new(16, 8).unwrap();
    let r = sample_potential(&alloy(4.0), &g, 8, 1).unwrap();
    let h0 = assemble(&g, &r, BoundaryTwist::periodic()).unwrap();
    for n in [5, 6] {
        for theta in [0.1, 0.9, 2.5] {
            let a = energy_at_twist(&h0, n, theta).unwrap();
            let b = energy_at_twist(&h0, n, -theta).unwrap();
            assert!((a - b).abs() < 1e-10 * a.abs().max(1.0));
        }
    }
}

#[test]
fn free_trial_state_spans_the_ring() {
    let g = Grid::new(16, 8).unwrap();
    let r = sample_potential(&alloy(0.0), &g, 0, 0).unwrap();
    let p = solve_twisted(&g, &r, 0.1, 0.2).unwrap();
    assert_eq!(p.result.n_mu, 1);
    let tb = trial_energy(&p, 1.0 / (16.0f64).sqrt()).unwrap();
    assert_eq!(tb.min_region(), 16);
    assert!(p.result.e_theta <= tb.direct_value + INEQUALITY_SLACK);
}

#[test]
fn variational_chain_on_alloy_seeds() {
    let l = 32;
    let mu = 3.0;
    let window = EnergyWindow::below(mu);
    let g = Grid::new(l, 8).unwrap();
    let mut acc = EnsembleAccumulator::new(l, Some(window));
    for i in 0..30 {
        let r = sample_potential(&alloy(4.0), &g, 500, i).unwrap();
        let spec = diagonalize(&assemble(&g, &r, BoundaryTwist::periodic()).unwrap()).unwrap();
        acc.accumulate(&correlator(&local_amplitudes(&spec, &g), &spec, window)).unwrap();
    }
    let ell = fit_ecl(&acc, FitOptions::default()).unwrap().ell().unwrap();

    let mut built = 0;
    for i in 0..10 {
        let r = sample_potential(&alloy(4.0), &g, 600, i).unwrap();
        let p = solve_twisted(&g, &r, mu, 0.2).unwrap();
        let amps = local_amplitudes(p.sharp(), &g);
        let states: Vec<usize> = (0..p.result.n_mu).collect();
        let sule = sule_extract(&amps, &states, ell, 1.0).unwrap();
        let delta = default_delta(&sule, l);
        let Ok(tb) = trial_energy(&p, delta) else { continue };
        built += 1;
        assert!(tb.min_region() >= (l - 4) / 4, "seed {i}: region {}", tb.min_region());
        assert!(p.result.e_theta <= tb.direct_value + INEQUALITY_SLACK);
        assert!(tb.gamma_tilde_norm <= tb.norm_bound + INEQUALITY_SLACK);
        assert!(p.result.x_l <= tb.y_l + INEQUALITY_SLACK, "seed {i}: {} > {}", p.result.x_l, tb.y_l);
        assert!(tb.trial_trace <= p.result.n_mu as f64 + INEQUALITY_SLACK);
        assert!(tb.trial_min_eigenvalue >= -INEQUALITY_SLACK);
        assert!(tb.trial_max_eigenvalue <= 1.0 + INEQUALITY_SLACK);
    }
    assert!(built >= 5, "trial construction succeeded on {built} of 10 seeds");
}

fn trap_setup(v: f64, l: usize, seed: u64) -> (Grid, tglab_core::DiscreteHamiltonian, tglab_core::SpectralData) {
    let g = Grid::new(l, 8).unwrap();
    let r = sample_potential(&alloy(v), &g, seed, 0).unwrap();
    let h = assemble(&g, &r, BoundaryTwist::periodic()).unwrap();
    let spec = diagonalize(&h).unwrap();
    (g, h, spec)
}

#[test]
fn trap_fixture_keeps_most_weight() {
    let (_, h, spec) = trap_setup(4.0, 32, 11);
    let trap: Vec<usize> = (0..8).collect();
    let init = trap_initial_state(&spec, &h, &trap, 4, EnergyWindow::below(8.0)).unwrap();
    assert!(init.trace() >= 3.5, "tr Gamma = {}", init.trace());
    assert!(init.occupations().unwrap().iter().all(|o| *o >= -1e-10 && *o <= 1.0 + 1e-10));
}

#[test]
fn wider_window_never_loses_weight() {
    let (_, h, spec) = trap_setup(4.0, 16, 6);
    let trap: Vec<usize> = (2..7).collect();
    let mut last = 0.0;
    for mu in [2.0, 4.0, 8.0, 30.0, 200.0, f64::INFINITY] {
        let tr = match trap_initial_state(&spec, &h, &trap, 3, EnergyWindow::below(mu)) {
            Ok(init) => init.trace(),
            Err(_) => 0.0,
        };
        assert!(tr >= last - 1e-12, "mu = {mu}: {tr} < {last}");
        last = tr;
    }
    assert!((last - 3.0).abs() < 1e-9);
}

#[test]
fn initial_density_matches_gamma() {
    let (g, h, spec) = trap_setup(4.0, 16, 2);
    let trap: Vec<usize> = (0..4).collect();
    let init = trap_initial_state(&spec, &h, &trap, 3, EnergyWindow::below(20.0)).unwrap();
    let traj = evolve_density(&spec, &g, &init, &[0.0]).unwrap();
    let gamma = init.gamma();
    for x in 0..g.num_points() {
        let mut rho = 0.0;
        for (a, &j) in init.basis.iter().enumerate() {
            for (b, &k) in init.basis.iter().enumerate() {
                rho += (spec.value(j, x) * gamma[(a, b)] * spec.value(k, x).conj()).re;
            }
        }
        assert!((traj.densities[0][x] - rho).abs() < 1e-10 * rho.abs().max(1.0));
    }
    assert!((traj.total(0) - init.trace()).abs() < 1e-9);
}

#[test]
fn free_trap_release_spreads() {
    let l = 32;
    let (g, h, spec) = trap_setup(0.0, l, 0);
    let trap: Vec<usize> = (0..8).collect();
    let far: Vec<usize> = (16..24).collect();
    let init = trap_initial_state(&spec, &h, &trap, 4, EnergyWindow::below(f64::INFINITY)).unwrap();
    assert!((init.trace() - 4.0).abs() < 1e-9);
    let t = (l * l) as f64;
    let traj = evolve_density(&spec, &g, &init, &[0.0, t]).unwrap();
    assert!(traj.region_count(1, &far) > 0.5, "N_far = {}", traj.region_count(1, &far));
    assert!(traj.conservation_defect() < 1e-9);
    assert_eq!(leakage(&traj, &[], &trap).unwrap(), 0.0);
    let ring: Vec<usize> = (0..l).collect();
    assert!(transport_deviation(&traj, &ring) < 1e-9);
    assert!(leakage(&traj, &[3], &trap).is_err());
}

#[test]
fn stationary_state_has_no_transport() {
    let (g, _, spec) = trap_setup(4.0, 16, 4);
    let init = InitialOccupation::eigen_subset(&spec, &[0, 2, 5]).unwrap();
    let times = log_time_grid(1.0, 1e4);
    let traj = evolve_density(&spec, &g, &init, &times).unwrap();
    let left: Vec<usize> = (0..8).collect();
    assert!(transport_deviation(&traj, &left) < 1e-9);
    assert!(traj.conservation_defect() < 1e-9);
    assert!(traj.min_density() >= -1e-12);
}
