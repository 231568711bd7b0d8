use std::f64::consts::PI;

use tglab_core::grid::{BoundaryTwist, Grid};
use tglab_core::hamiltonian::assemble;
use tglab_core::potential::{sample_potential, PotentialModel};
use tglab_core::spectral::{count_below, diagonalize, select_orbitals_count, select_orbitals_mu, SpectrumPair};
use tglab_core::stiffness::{energy_at_twist, ground_energy, solve_twisted};

/// Closed-form spectrum of the free twisted ring Laplacian, ascending.
fn fourier(grid: &Grid, theta: f64) -> Vec<f64> {
    let n = grid.num_points();
    let h = 1.0 / grid.points_per_unit() as f64;
    let mut e: Vec<f64> = (0..n)
        .map(|j| {
            let s = ((2.0 * PI * j as f64 + theta) / (2.0 * n as f64)).sin();
            4.0 / (h * h) * s * s
        })
        .collect();
    e.sort_by(|a, b| a.partial_cmp(b).unwrap());
    e
}

fn free(grid: &Grid, theta: f64) -> Vec<f64> {
    let r = sample_potential(&PotentialModel::<f64>::zero(), grid, 0, 0).unwrap();
    let h = assemble(grid, &r, BoundaryTwist::new(theta)).unwrap();
    diagonalize(&h).unwrap().eigenvalues().to_vec()
}

#[test]
fn free_spectra_match_closed_form() {
    for (l, m) in [(8, 8), (16, 8), (10, 4)] {
        let g = Grid::new(l, m).unwrap();
        for theta in [0.0, PI, 0.2, -1.3, 2.9] {
            let num = free(&g, theta);
            let exact = fourier(&g, theta);
            let scale = exact.last().unwrap();
            for (a, b) in num.iter().zip(&exact) {
                assert!((a - b).abs() <= 1e-10 * scale.max(1.0), "L={l} theta={theta}: {a} vs {b}");
            }
        }
    }
}

#[test]
fn count_below_matches_oracle() {
    let g = Grid::new(16, 8).unwrap();
    let spec = {
        let r = sample_potential(&PotentialModel::<f64>::zero(), &g, 0, 0).unwrap();
        diagonalize(&assemble(&g, &r, BoundaryTwist::periodic()).unwrap()).unwrap()
    };
    let exact = fourier(&g, 0.0);
    for mu in [-0.5, 0.01, 0.5, 1.0, 7.3] {
        let want = exact.iter().filter(|e| **e <= mu).count();
        assert_eq!(count_below(&spec, mu), want, "mu = {mu}");
    }
    let mid = 0.5 * (exact[0] + exact[1]);
    assert_eq!(count_below(&spec, mid), 1);
}

#[test]
fn selection_at_fixed_mu() {
    let g = Grid::new(16, 8).unwrap();
    let r = sample_potential(&PotentialModel::<f64>::zero(), &g, 0, 0).unwrap();
    let pair = SpectrumPair::compute(&g, &r).unwrap();
    let mu = 0.5;
    let n_plus = fourier(&g, 0.0).iter().filter(|e| **e <= mu).count();
    let n_minus = fourier(&g, PI).iter().filter(|e| **e <= mu).count();
    let sel = select_orbitals_mu(&pair, mu).unwrap();
    assert_eq!((sel.n_plus, sel.n_minus), (n_plus, n_minus));
    assert_eq!(sel.n_mu, n_plus.min(n_minus));

    let e = ground_energy(pair.get(sel.sharp), mu).unwrap();
    let bc_theta = if sel.n_mu % 2 == 1 { 0.0 } else { PI };
    let exact: f64 = fourier(&g, bc_theta)[..sel.n_mu].iter().sum();
    assert!((e - exact).abs() < 1e-10 * exact.abs().max(1.0));
}

#[test]
fn three_particles_take_ground_and_degenerate_pair() {
    let g = Grid::new(8, 8).unwrap();
    let r = sample_potential(&PotentialModel::<f64>::zero(), &g, 0, 0).unwrap();
    let pair = SpectrumPair::compute(&g, &r).unwrap();
    let sel = select_orbitals_count(&pair, 3).unwrap();
    let e = pair.get(sel.sharp).eigenvalues();
    assert!(e[0].abs() < 1e-10);
    assert!((e[1] - e[2]).abs() < 1e-10);
    assert!(e[3] > e[2] + 1e-3);
}

#[test]
fn free_twisted_energy_matches_closed_form() {
    let g = Grid::new(32, 8).unwrap();
    let r = sample_potential(&PotentialModel::<f64>::zero(), &g, 0, 0).unwrap();
    let pair = SpectrumPair::compute(&g, &r).unwrap();
    let mu = pair.mu_for_count(16).unwrap();
    let p = solve_twisted(&g, &r, mu, 0.2).unwrap();
    assert_eq!(p.result.n_mu, 16);
    let zero: f64 = fourier(&g, PI)[..16].iter().sum();
    let twisted: f64 = fourier(&g, PI + 0.2)[..16].iter().sum();
    assert!(((p.result.e_theta - p.result.e_zero) - (twisted - zero)).abs() < 1e-10);
}

#[test]
fn gauge_symmetries() {
    let g = Grid::new(8, 8).unwrap();
    let r = sample_potential(&PotentialModel::alloy_step(4.0), &g, 21, 3).unwrap();
    let spec = |theta: f64| {
        diagonalize(&assemble(&g, &r, BoundaryTwist::new(theta)).unwrap())
            .unwrap()
            .eigenvalues()
            .to_vec()
    };
    let base = spec(0.0);
    for (a, b) in base.iter().zip(spec(2.0 * PI)) {
        assert!((a - b).abs() < 1e-12 * a.abs().max(1.0));
    }
    let plus = spec(0.7);
    let minus = spec(-0.7);
    let shifted = spec(0.7 + 2.0 * PI);
    for k in 0..plus.len() {
        let s = plus[k].abs().max(1.0);
        assert!((plus[k] - minus[k]).abs() < 1e-12 * s);
        assert!((plus[k] - shifted[k]).abs() < 1e-12 * s);
    }
    let h0 = assemble(&g, &r, BoundaryTwist::periodic()).unwrap();
    for n in [3, 4] {
        let e = energy_at_twist(&h0, n, 0.4).unwrap();
        assert!((e - energy_at_twist(&h0, n, -0.4).unwrap()).abs() < 1e-10 * e.abs().max(1.0));
        assert!((e - energy_at_twist(&h0, n, 0.4 + 2.0 * PI).unwrap()).abs() < 1e-10 * e.abs().max(1.0));
    }
}

#[test]
fn zero_twist_limits_follow_parity() {
    let g = Grid::new(8, 8).unwrap();
    let r = sample_potential(&PotentialModel::alloy_step(4.0), &g, 5, 0).unwrap();
    let pair = SpectrumPair::compute(&g, &r).unwrap();
    let h0 = assemble(&g, &r, BoundaryTwist::periodic()).unwrap();
    let odd: f64 = pair.periodic.eigenvalues()[..3].iter().sum();
    let even: f64 = pair.antiperiodic.eigenvalues()[..4].iter().sum();
    assert!((energy_at_twist(&h0, 3, 1e-9).unwrap() - odd).abs() < 1e-8);
    assert!((energy_at_twist(&h0, 4, 1e-9).unwrap() - even).abs() < 1e-8);
}
