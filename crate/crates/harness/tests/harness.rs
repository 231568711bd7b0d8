use std::f64::consts::PI;
use std::process::Command;

use tglab::config::{Particles, PotentialConfig, WindowConfig};
use tglab::manifest::RunManifest;
use tglab::report::{self, Csv};
use tglab::{execute, run_ensemble, ExperimentConfig, Kind};
use tglab_core::obdm::{gamma_kernel, largest_eigenvalue, prefix_overlaps, EvalGrid};
use tglab_core::potential::{sample_potential, PotentialModel};
use tglab_core::spectral::{select_orbitals_count, SpectrumPair};
use tglab_core::Grid;

fn cfg(kind: Kind) -> ExperimentConfig {
    let mut c = ExperimentConfig::new(kind);
    c.grid.lengths = vec![16];
    c
}

#[test]
fn free_spectrum_csv_matches_closed_form() {
    let mut c = cfg(Kind::Spectrum);
    c.grid.lengths = vec![8];
    c.potential = PotentialConfig::Zero;
    c.particles = Particles::Count { value: 3 };
    c.window = WindowConfig::All;
    let run = execute(&c, 2).unwrap();
    let csv = Csv::parse(run.file("spectrum.csv").unwrap()).unwrap();
    assert_eq!(csv.header, ["length", "index", "bc", "j", "energy"]);
    let n = 64usize;
    let h = 1.0 / 8.0;
    for (bc, theta) in [("periodic", 0.0), ("antiperiodic", PI)] {
        let mut exact: Vec<f64> = (0..n)
            .map(|j| 4.0 / (h * h) * ((2.0 * PI * j as f64 + theta) / (2.0 * n as f64)).sin().powi(2))
            .collect();
        exact.sort_by(f64::total_cmp);
        let got: Vec<f64> = csv.rows.iter().filter(|r| r[2] == bc).map(|r| r[4].parse().unwrap()).collect();
        assert_eq!(got.len(), n);
        for (a, b) in got.iter().zip(&exact) {
            assert!((a - b).abs() <= 1e-10 * b.max(1.0), "{bc}: {a} vs {b}");
        }
    }
    assert!(run.summary.passed());
}

#[test]
fn repeated_runs_are_byte_identical() {
    let mut c = cfg(Kind::Correlator);
    c.realizations = 12;
    let a = execute(&c, 1).unwrap();
    let b = execute(&c, 1).unwrap();
    let w = execute(&c, 4).unwrap();
    assert_eq!(a.files, b.files);
    assert_eq!(a.files, w.files);
    assert_eq!(a.summary.to_json(), w.summary.to_json());
}

#[test]
fn summary_fit_matches_offline_refit() {
    let mut c = cfg(Kind::Correlator);
    c.grid.lengths = vec![32];
    c.realizations = 100;
    c.base_seed = 3;
    let run = execute(&c, 4).unwrap();
    let csv = Csv::parse(run.file("correlator_bins.csv").unwrap()).unwrap();
    let refit = report::refit_bins(&csv, &c, "correlator").unwrap();
    let summary = run.summary.length(32).unwrap().fit.as_ref().unwrap();
    assert_eq!(refit.len(), 1);
    let ell = summary.ell.unwrap();
    assert!((refit[0].fit.ell.unwrap() - ell).abs() <= 1e-12 * ell);
    assert!((refit[0].fit.r_squared - summary.r_squared).abs() <= 1e-12);
}

#[test]
fn exponential_bins_recover_slope() {
    let mut text = String::from("length,d,mean,variance,count\n");
    for d in 0..=10 {
        text.push_str(&format!("20,{d},{:e},0,20\n", 0.7 * (-(d as f64) / 2.5).exp()));
    }
    let csv = Csv::parse(&text).unwrap();
    let fits = report::refit_bins(&csv, &cfg(Kind::Correlator), "synthetic").unwrap();
    assert!((fits[0].fit.slope + 0.4).abs() < 1e-9);
    assert!((fits[0].fit.ell.unwrap() - 2.5).abs() < 1e-9);
}

#[test]
fn stiffness_table_sorted_by_length() {
    let text = "length,index,theta,n_mu,e_zero,e_theta,x_l\n\
                64,0,0.2,20,0,0,0.01\n16,0,0.2,5,0,0,0.3\n32,0,0.1,9,0,0,0.2\n16,1,0.2,5,0,0,0.5\n32,0,0.2,9,0,0,0.1\n";
    let t = report::stiffness_table(&Csv::parse(text).unwrap()).unwrap();
    let keys: Vec<(String, String)> = t.rows().iter().map(|r| (r[0].clone(), r[1].clone())).collect();
    let want = [("16", "0.2"), ("32", "0.1"), ("32", "0.2"), ("64", "0.2")];
    assert_eq!(keys, want.map(|(a, b)| (a.to_string(), b.to_string())));
    assert_eq!(t.rows()[0][2], "2");
    assert_eq!(t.rows()[0][3].parse::<f64>().unwrap(), 0.4);
}

#[test]
fn bec_table_matches_direct_kernels() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = cfg(Kind::Bec);
    c.grid.lengths = vec![8, 16];
    c.particles = Particles::Density { value: 0.25 };
    c.window = WindowConfig::All;
    c.realizations = 5;
    c.base_seed = 21;
    run_ensemble(&c, 3, Some(dir.path())).unwrap();
    let rep = report::report(dir.path(), None).unwrap();
    let t = rep.table("bec_table.csv").unwrap();

    let direct = |l: usize| {
        let g = Grid::new(l, 8).unwrap();
        let mut v: Vec<f64> = (0..5)
            .map(|i| {
                let r = sample_potential(&PotentialModel::<f64>::alloy_step(4.0), &g, 21, i).unwrap();
                let pair = SpectrumPair::compute(&g, &r).unwrap();
                let sel = select_orbitals_count(&pair, l / 4).unwrap();
                let eval = EvalGrid::new(&g, 4).unwrap();
                largest_eigenvalue(&gamma_kernel(&prefix_overlaps(pair.get(sel.sharp), &sel, &eval).unwrap()).unwrap())
                    .unwrap()
            })
            .collect();
        v.sort_by(f64::total_cmp);
        v[2]
    };
    let ratio: f64 = t.rows()[1][4].parse().unwrap();
    assert!((ratio - direct(16) / direct(8)).abs() < 1e-12);
    assert!(dir.path().join("report").join("report.json").exists());
}

#[test]
fn manifest_lists_every_file_and_report_rejects_tampering() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = cfg(Kind::Stiffness);
    c.realizations = 3;
    let (_, manifest) = run_ensemble(&c, 2, Some(dir.path())).unwrap();
    let names: Vec<&str> = manifest.files.iter().map(|f| f.name.as_str()).collect();
    assert_eq!(names, ["config.toml", "stiffness.csv", "summary.json"]);
    assert_eq!(manifest.seeds.len(), 3);
    assert!(!manifest.partial);
    assert_eq!(RunManifest::load(dir.path()).unwrap(), manifest);
    report::build(dir.path()).unwrap();

    std::fs::write(dir.path().join("notes.txt"), "x").unwrap();
    assert!(report::build(dir.path()).is_err());
    std::fs::remove_file(dir.path().join("notes.txt")).unwrap();

    let csv = dir.path().join("stiffness.csv");
    let mut text = std::fs::read_to_string(&csv).unwrap();
    text.push('\n');
    std::fs::write(&csv, text).unwrap();
    assert!(report::build(dir.path()).is_err());
}

fn ground_thresholds(c: &ExperimentConfig) -> Vec<f64> {
    let g = Grid::new(16, 8).unwrap();
    (0..c.realizations as u64)
        .map(|i| {
            let r = sample_potential(&PotentialModel::<f64>::alloy_step(4.0), &g, c.base_seed, i).unwrap();
            let pair = SpectrumPair::compute(&g, &r).unwrap();
            pair.periodic.eigenvalues()[0].max(pair.antiperiodic.eigenvalues()[0])
        })
        .collect()
}

#[test]
fn few_failures_are_skipped_many_abort() {
    let mut c = cfg(Kind::Spectrum);
    c.realizations = 100;
    c.window = WindowConfig::All;
    let mut t = ground_thresholds(&c);
    t.sort_by(|a, b| b.total_cmp(a));
    c.particles = Particles::Mu { value: 0.5 * (t[1] + t[2]) };
    let run = execute(&c, 4).unwrap();
    assert!(run.abort.is_none());
    let s = run.summary.length(16).unwrap();
    assert_eq!((s.completed, s.failures.len()), (98, 2));
    assert!(!run.summary.passed());

    c.particles = Particles::Mu { value: 0.5 * (t[9] + t[10]) };
    let dir = tempfile::tempdir().unwrap();
    let err = run_ensemble(&c, 4, Some(dir.path())).unwrap_err();
    assert_eq!(err.exit_code(), 1);
    let manifest = RunManifest::load(dir.path()).unwrap();
    assert!(manifest.partial);
    assert_eq!(manifest.seeds.iter().filter(|s| !s.ok).count(), 10);
    assert!(report::build(dir.path()).is_err());
}

#[test]
fn bound_run_fits_length_then_checks_chain() {
    let mut c = cfg(Kind::Bound);
    c.grid.lengths = vec![32];
    c.realizations = 8;
    let run = execute(&c, 4).unwrap();
    assert!(run.abort.is_none(), "{:?}", run.summary.aborted);
    let s = run.summary.length(32).unwrap();
    assert!(s.ell_used.unwrap() > 0.0);
    let csv = Csv::parse(run.file("bound.csv").unwrap()).unwrap();
    assert_eq!(csv.rows.len(), 8);
    assert!(run.summary.checks[0].passed);
}

#[test]
fn dynamics_run_reports_conservation() {
    let mut c = cfg(Kind::Dynamics);
    c.realizations = 2;
    c.dynamics.t_max = 64.0;
    let run = execute(&c, 2).unwrap();
    assert!(run.summary.passed());
    let s = run.summary.length(16).unwrap();
    assert!(s.metrics["conservation_defect"].max < 1e-9);
    let csv = Csv::parse(run.file("dynamics.csv").unwrap()).unwrap();
    // 8 times (0, 1, 2, ..., 32, 64) by 3 regions by 2 realizations.
    assert_eq!(csv.rows.len(), 8 * 3 * 2);
}

fn write_config(dir: &std::path::Path, text: &str) -> std::path::PathBuf {
    let p = dir.join("run.toml");
    std::fs::write(&p, text).unwrap();
    p
}

#[test]
fn cli_exit_codes_and_output_root() {
    let exe = env!("CARGO_BIN_EXE_tglab");
    let dir = tempfile::tempdir().unwrap();

    let bad = write_config(dir.path(), "kind = \"spectrum\"\nrealisations = 2\n");
    let status = Command::new(exe).args(["spectrum", "--config"]).arg(&bad).status().unwrap();
    assert_eq!(status.code(), Some(2));

    let good = write_config(
        dir.path(),
        "kind = \"spectrum\"\nrealizations = 2\n[grid]\nlengths = [8]\n[potential]\nmodel = \"alloy_step\"\nv_max = 4.0\n",
    );
    let root = dir.path().join("runs");
    let out = Command::new(exe)
        .args(["ensemble", "--workers", "2", "--seed", "9", "--config"])
        .arg(&good)
        .env("TGLAB_OUT", &root)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let run_dir = std::path::PathBuf::from(String::from_utf8(out.stdout).unwrap().trim());
    assert!(run_dir.starts_with(&root));
    let stored = ExperimentConfig::load(&run_dir.join("config.toml")).unwrap();
    assert_eq!(stored.base_seed, 9);

    let status = Command::new(exe).arg("report").arg(&run_dir).status().unwrap();
    assert_eq!(status.code(), Some(0));
    assert!(run_dir.join("report").join("spectrum_table.csv").exists());

    let low = write_config(
        dir.path(),
        "kind = \"stiffness\"\n[grid]\nlengths = [8]\n[particles]\nmode = \"mu\"\nvalue = -50.0\n",
    );
    let status = Command::new(exe)
        .args(["stiffness", "--config"])
        .arg(&low)
        .arg("--out")
        .arg(dir.path().join("low"))
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(1));
}
