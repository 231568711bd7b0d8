//! Summary tables computed from a finished run directory.

use std::collections::BTreeMap;
use std::path::Path;

use serde::Serialize;
use tglab_core::localization::fit_bins;
use tglab_core::table::{fmt_real, Table};

use crate::config::ExperimentConfig;
use crate::error::{HarnessError, Result};
use crate::manifest::RunManifest;
use crate::runner::{median, FitSummary, Stats, CONFIG_FILE};

pub const REPORT_DIR: &str = "report";

/// Parsed CSV: header plus rows of raw fields.
#[derive(Debug, Clone)]
pub struct Csv {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Csv {
    pub fn parse(text: &str) -> Result<Self> {
        let mut reader = csv::Reader::from_reader(text.as_bytes());
        let header = reader
            .headers()
            .map_err(|e| HarnessError::Report(e.to_string()))?
            .iter()
            .map(String::from)
            .collect();
        let rows = reader
            .records()
            .map(|r| {
                r.map(|rec| rec.iter().map(String::from).collect())
                    .map_err(|e| HarnessError::Report(e.to_string()))
            })
            .collect::<Result<_>>()?;
        Ok(Csv { header, rows })
    }

    pub fn column(&self, name: &str) -> Result<usize> {
        self.header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| HarnessError::Report(format!("missing column {name}")))
    }

    fn num(&self, row: &[String], col: usize) -> Result<f64> {
        row[col]
            .parse()
            .map_err(|_| HarnessError::Report(format!("bad number {:?}", row[col])))
    }

    fn int(&self, row: &[String], col: usize) -> Result<usize> {
        row[col]
            .parse()
            .map_err(|_| HarnessError::Report(format!("bad integer {:?}", row[col])))
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct DecayFit {
    pub source: String,
    pub length: usize,
    #[serde(flatten)]
    pub fit: FitSummary,
}

#[derive(Debug)]
pub struct ReportOutput {
    pub decay: Vec<DecayFit>,
    pub tables: Vec<(String, Table)>,
}

impl ReportOutput {
    pub fn table(&self, name: &str) -> Option<&Table> {
        self.tables.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }
}

fn read(dir: &Path, name: &str) -> Result<Option<Csv>> {
    let path = dir.join(name);
    if !path.exists() {
        return Ok(None);
    }
    let text = std::fs::read_to_string(&path).map_err(|e| HarnessError::io(&path, e))?;
    Csv::parse(&text).map(Some)
}

/// Refits distance-bin means per length.
pub fn refit_bins(csv: &Csv, cfg: &ExperimentConfig, source: &str) -> Result<Vec<DecayFit>> {
    let (cl, cd, cm) = (csv.column("length")?, csv.column("d")?, csv.column("mean")?);
    let mut by_length: BTreeMap<usize, Vec<(usize, f64)>> = BTreeMap::new();
    for row in &csv.rows {
        by_length
            .entry(csv.int(row, cl)?)
            .or_default()
            .push((csv.int(row, cd)?, csv.num(row, cm)?));
    }
    by_length
        .into_iter()
        .map(|(length, mut bins)| {
            bins.sort_by_key(|b| b.0);
            let means: Vec<f64> = bins.into_iter().map(|b| b.1).collect();
            let fit = fit_bins(&means, length, cfg.fit.options())?;
            Ok(DecayFit {
                source: source.into(),
                length,
                fit: FitSummary::from(&fit),
            })
        })
        .collect()
}

/// Groups a numeric column by the given key columns.
fn grouped(csv: &Csv, keys: &[&str], value: &str) -> Result<BTreeMap<Vec<String>, Vec<f64>>> {
    let kc: Vec<usize> = keys.iter().map(|k| csv.column(k)).collect::<Result<_>>()?;
    let vc = csv.column(value)?;
    let mut out: BTreeMap<Vec<String>, Vec<f64>> = BTreeMap::new();
    for row in &csv.rows {
        out.entry(kc.iter().map(|&c| row[c].clone()).collect())
            .or_default()
            .push(csv.num(row, vc)?);
    }
    Ok(out)
}

fn length_key(k: &[String]) -> usize {
    k[0].parse().unwrap_or(usize::MAX)
}

/// `length, theta, realizations, median/mean/min/max X_L`, sorted by length then angle.
pub fn stiffness_table(csv: &Csv) -> Result<Table> {
    let mut groups: Vec<(Vec<String>, Vec<f64>)> = grouped(csv, &["length", "theta"], "x_l")?.into_iter().collect();
    groups.sort_by(|a, b| {
        length_key(&a.0)
            .cmp(&length_key(&b.0))
            .then(a.0[1].parse::<f64>().unwrap_or(0.0).total_cmp(&b.0[1].parse().unwrap_or(0.0)))
    });
    let mut t = Table::new(&["length", "theta", "realizations", "median_x_l", "mean_x_l", "min_x_l", "max_x_l"]);
    for (k, v) in groups {
        let s = Stats::of(&v).expect("non-empty group");
        t.push(vec![
            k[0].clone(),
            k[1].clone(),
            v.len().to_string(),
            fmt_real(s.median),
            fmt_real(s.mean),
            fmt_real(s.min),
            fmt_real(s.max),
        ]);
    }
    Ok(t)
}

/// `length, realizations, median lambda_max, median n(0), ratio of median lambda_max to the smallest length`.
pub fn bec_table(csv: &Csv) -> Result<Table> {
    let lambda = grouped(csv, &["length"], "lambda_max")?;
    let n0 = grouped(csv, &["length"], "n_zero")?;
    let mut rows: Vec<(usize, f64, f64, usize)> = lambda
        .iter()
        .map(|(k, v)| (length_key(k), median(v).unwrap(), median(&n0[k]).unwrap(), v.len()))
        .collect();
    rows.sort_by_key(|r| r.0);
    let base = rows.first().map(|r| r.1).unwrap_or(1.0);
    let mut t = Table::new(&["length", "realizations", "median_lambda_max", "median_n_zero", "ratio_to_smallest"]);
    for (l, lam, n, count) in rows {
        t.push(vec![l.to_string(), count.to_string(), fmt_real(lam), fmt_real(n), fmt_real(lam / base)]);
    }
    Ok(t)
}

/// Per-length medians of the far-region maximum and the trap-count deviation, recomputed from the trajectories.
pub fn dynamics_table(csv: &Csv) -> Result<Table> {
    let (cl, ci, cr, cc) = (
        csv.column("length")?,
        csv.column("index")?,
        csv.column("region")?,
        csv.column("count")?,
    );
    let mut far: BTreeMap<(usize, usize), f64> = BTreeMap::new();
    let mut trap: BTreeMap<(usize, usize), Vec<f64>> = BTreeMap::new();
    for row in &csv.rows {
        let key = (csv.int(row, cl)?, csv.int(row, ci)?);
        let c = csv.num(row, cc)?;
        match row[cr].as_str() {
            "far" => {
                let e = far.entry(key).or_insert(f64::NEG_INFINITY);
                *e = e.max(c);
            }
            "trap" => trap.entry(key).or_default().push(c),
            _ => {}
        }
    }
    let mut per_length: BTreeMap<usize, (Vec<f64>, Vec<f64>)> = BTreeMap::new();
    for ((l, i), f) in &far {
        let counts = &trap[&(*l, *i)];
        let dev = counts.iter().fold(0.0f64, |a, c| a.max((c - counts[0]).abs()));
        let e = per_length.entry(*l).or_default();
        e.0.push(*f);
        e.1.push(dev);
    }
    let mut t = Table::new(&["length", "realizations", "median_leakage", "median_deviation"]);
    for (l, (f, d)) in per_length {
        t.push(vec![
            l.to_string(),
            f.len().to_string(),
            fmt_real(median(&f).unwrap()),
            fmt_real(median(&d).unwrap()),
        ]);
    }
    Ok(t)
}

/// Counts of successful trial constructions and the largest `X_L - Y_L` per length and angle.
pub fn bound_table(csv: &Csv) -> Result<Table> {
    let (cl, ct, cs, cx, cy) = (
        csv.column("length")?,
        csv.column("theta")?,
        csv.column("status")?,
        csv.column("x_l")?,
        csv.column("y_l")?,
    );
    let mut groups: BTreeMap<(usize, String), (usize, usize, f64)> = BTreeMap::new();
    for row in &csv.rows {
        let e = groups
            .entry((csv.int(row, cl)?, row[ct].clone()))
            .or_insert((0, 0, f64::NEG_INFINITY));
        if row[cs] == "ok" {
            e.0 += 1;
            e.2 = e.2.max(csv.num(row, cx)? - csv.num(row, cy)?);
        } else {
            e.1 += 1;
        }
    }
    let mut t = Table::new(&["length", "theta", "built", "no_region", "max_x_minus_y"]);
    for ((l, th), (built, skipped, gap)) in groups {
        t.push(vec![l.to_string(), th, built.to_string(), skipped.to_string(), fmt_real(gap)]);
    }
    Ok(t)
}

/// Level counts per length and boundary condition.
pub fn spectrum_table(csv: &Csv) -> Result<Table> {
    let groups = grouped(csv, &["length", "bc"], "energy")?;
    let mut t = Table::new(&["length", "bc", "levels", "min_energy", "max_energy"]);
    let mut keys: Vec<_> = groups.keys().cloned().collect();
    keys.sort_by(|a, b| length_key(a).cmp(&length_key(b)).then(a[1].cmp(&b[1])));
    for k in keys {
        let s = Stats::of(&groups[&k]).unwrap();
        t.push(vec![k[0].clone(), k[1].clone(), groups[&k].len().to_string(), fmt_real(s.min), fmt_real(s.max)]);
    }
    Ok(t)
}

/// Verifies the run directory and derives the report tables from its data files.
pub fn build(run: &Path) -> Result<ReportOutput> {
    let manifest = RunManifest::load(run)?;
    manifest.verify(run)?;
    if manifest.partial {
        return Err(HarnessError::Report("run is flagged partial".into()));
    }
    let cfg = ExperimentConfig::load(&run.join(CONFIG_FILE))?;
    let mut decay = Vec::new();
    let mut tables = Vec::new();
    for (file, source) in [("correlator_bins.csv", "correlator"), ("obdm_bins.csv", "obdm")] {
        if let Some(csv) = read(run, file)? {
            decay.extend(refit_bins(&csv, &cfg, source)?);
        }
    }
    if !decay.is_empty() {
        let mut t = Table::new(&["source", "length", "ell", "slope", "r_squared"]);
        for d in &decay {
            t.push(vec![
                d.source.clone(),
                d.length.to_string(),
                d.fit.ell.map(fmt_real).unwrap_or_else(|| "inf".into()),
                fmt_real(d.fit.slope),
                fmt_real(d.fit.r_squared),
            ]);
        }
        tables.push(("decay_fits.csv".to_string(), t));
    }
    type Builder = fn(&Csv) -> Result<Table>;
    let derived: [(&str, &str, Builder); 5] = [
        ("stiffness.csv", "stiffness_table.csv", stiffness_table),
        ("bec.csv", "bec_table.csv", bec_table),
        ("dynamics.csv", "dynamics_table.csv", dynamics_table),
        ("bound.csv", "bound_table.csv", bound_table),
        ("spectrum.csv", "spectrum_table.csv", spectrum_table),
    ];
    for (src, dst, f) in derived {
        if let Some(csv) = read(run, src)? {
            tables.push((dst.to_string(), f(&csv)?));
        }
    }
    Ok(ReportOutput { decay, tables })
}

/// [`build`] plus writing the tables and `report.json` into `out` (default `<run>/report`).
pub fn report(run: &Path, out: Option<&Path>) -> Result<ReportOutput> {
    let rep = build(run)?;
    let dir = out.map(Path::to_path_buf).unwrap_or_else(|| run.join(REPORT_DIR));
    std::fs::create_dir_all(&dir).map_err(|e| HarnessError::io(&dir, e))?;
    for (name, t) in &rep.tables {
        let path = dir.join(name);
        std::fs::write(&path, t.to_csv()).map_err(|e| HarnessError::io(&path, e))?;
    }
    #[derive(Serialize)]
    struct Index<'a> {
        tables: Vec<&'a str>,
        decay: &'a [DecayFit],
    }
    let index = Index {
        tables: rep.tables.iter().map(|(n, _)| n.as_str()).collect(),
        decay: &rep.decay,
    };
    let path = dir.join("report.json");
    let json = serde_json::to_string_pretty(&index).expect("report index is serializable") + "\n";
    std::fs::write(&path, json).map_err(|e| HarnessError::io(&path, e))?;
    Ok(rep)
}
