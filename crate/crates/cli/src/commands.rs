//! The subcommands.
//!
//! Chain-running commands work on cells, one per `alpha`. Cells run on a
//! pool of `run.workers` threads, each writes its own files under
//! `<out>/cell_<i>/`, and merged tables are written afterwards from the
//! calling thread.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use srp_core::fits::{self, FitResult};
use srp_core::fractal::{self, BoxLadder, BoxWindow};
use srp_core::mcmc::run_experiment;
use srp_core::observables::{linear_thresholds, SeriesRecorder};
use srp_core::oracle::ExactEnsemble;
use srp_core::{Chain, InitialCondition, NuCurve, ObservableSeries, ObservableSet, SiteIndex};

use crate::checkpoint::Checkpoint;
use crate::config::{Calibration, ExperimentConfig, FitChoice, InitialChoice, NuGrid};
use crate::error::{CliError, Result};
use crate::output::{real, CsvOut, Table};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

fn comment(command: &str, config: &ExperimentConfig) -> String {
    format!("srp {command} config_hash={} version={VERSION}", config.hash())
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(CliError::io(path))
}

pub fn cell_dir(out: &Path, index: u64) -> PathBuf {
    out.join(format!("cell_{index:03}"))
}

/// Runs `f` for every cell on a pool of `workers` threads, keeping the
/// results in cell order.
fn run_cells<T, F>(workers: usize, cells: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> Result<T> + Sync,
{
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| CliError::Config(format!("cannot start {workers} workers: {e}")))?;
    pool.install(|| (0..cells).into_par_iter().map(&f).collect())
}

fn recorded_observables() -> ObservableSet {
    ObservableSet { scalars: true, winding: true, origin: true, trace: true, ..ObservableSet::default() }
}

fn write_trace(path: &Path, comment: &str, series: &ObservableSeries) -> Result<()> {
    let mut out = CsvOut::create(
        path,
        comment,
        &["sweep", "accepted", "avg_jump_len", "longest_arc_length", "energy_per_site"],
    )?;
    for t in &series.trace {
        out.row([
            t.sweep.to_string(),
            t.accepted.to_string(),
            real(t.avg_jump_len),
            real(t.longest_arc_length),
            real(t.energy_per_site),
        ])?;
    }
    out.finish()
}

fn write_samples(path: &Path, comment: &str, series: &ObservableSeries) -> Result<()> {
    let mut out = CsvOut::create(
        path,
        comment,
        &[
            "sweep",
            "avg_jump_len",
            "energy_per_site",
            "max_cycle_len",
            "max_cycle_arc_length",
            "winding_x",
            "winding_y",
            "winding_abs",
            "origin_cycle_len",
            "origin_dx",
            "origin_dy",
        ],
    )?;
    for (i, sweep) in series.sample_sweeps.iter().enumerate() {
        let s = &series.scalars[i];
        let w = &series.windings[i];
        let o = &series.origin[i];
        out.row([
            sweep.to_string(),
            real(s.avg_jump_len),
            real(s.energy_per_site),
            s.max_cycle_len.to_string(),
            real(s.max_cycle_arc_length),
            w.w[0].to_string(),
            w.w[1].to_string(),
            real(w.w_abs),
            o.cycle_len.to_string(),
            o.jump[0].to_string(),
            o.jump[1].to_string(),
        ])?;
    }
    out.finish()
}

/// Summary of one simulated cell.
#[derive(Debug, Clone, PartialEq)]
pub struct CellSummary {
    pub index: u64,
    pub alpha: f64,
    pub sweeps: u64,
    pub samples: usize,
    pub mean_avg_jump_len: f64,
    pub mean_max_cycle_len: f64,
    pub mean_winding_abs: f64,
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        f64::NAN
    } else {
        sum / n as f64
    }
}

/// Runs `chain` to `target` sweeps and writes the cell's trace, samples and
/// final checkpoint.
fn simulate_cell(mut chain: Chain, target: u64, dir: &Path, comment: &str) -> Result<CellSummary> {
    create_dir(dir)?;
    let mut recorder = SeriesRecorder::new(recorded_observables())?;
    chain.run_until(target, |event| recorder.record(event))?;
    let series = recorder.finish()?;
    write_trace(&dir.join("trace.csv"), comment, &series)?;
    write_samples(&dir.join("samples.csv"), comment, &series)?;
    Checkpoint::capture(&chain)?.save(&dir.join("checkpoint.json"))?;
    Ok(CellSummary {
        index: chain.config().stream,
        alpha: chain.config().alpha,
        sweeps: chain.sweeps(),
        samples: series.sample_sweeps.len(),
        mean_avg_jump_len: mean(series.scalars.iter().map(|s| s.avg_jump_len)),
        mean_max_cycle_len: mean(series.scalars.iter().map(|s| s.max_cycle_len as f64)),
        mean_winding_abs: mean(series.windings.iter().map(|w| w.w_abs)),
    })
}

fn sweep_target(config: &ExperimentConfig, chain: &Chain) -> u64 {
    config.chain.sweeps.unwrap_or_else(|| chain.sample_target(config.chain.samples as u64))
}

/// `simulate`: per-sweep traces, per-sample observables and a checkpoint
/// for every cell. With `resume`, continues the checkpointed chain instead
/// and writes only the sweeps after it.
pub fn simulate(config: &ExperimentConfig, resume: Option<&Path>) -> Result<Vec<CellSummary>> {
    config.validate()?;
    let out = &config.run.out;
    create_dir(out)?;
    let comment = comment("simulate", config);
    let summaries = match resume {
        Some(path) => {
            let chain = Checkpoint::load(path)?.restore()?;
            let target = sweep_target(config, &chain);
            if target < chain.sweeps() {
                return Err(CliError::Config(format!(
                    "checkpoint is at sweep {} but the run ends at sweep {target}",
                    chain.sweeps()
                )));
            }
            let dir = cell_dir(out, chain.config().stream);
            vec![simulate_cell(chain, target, &dir, &comment)?]
        }
        None => {
            let lattice = config.lattice_spec()?;
            let alphas = config.alphas();
            run_cells(config.run.workers, alphas.len(), |i| {
                let chain = Chain::new(lattice.clone(), config.chain_config(alphas[i], i))?;
                let target = sweep_target(config, &chain);
                simulate_cell(chain, target, &cell_dir(out, i as u64), &comment)
            })?
        }
    };
    let mut merged = CsvOut::create(
        &out.join("simulate.csv"),
        &comment,
        &["cell", "alpha", "sweeps", "samples", "mean_avg_jump_len", "mean_max_cycle_len", "mean_winding_abs"],
    )?;
    for s in &summaries {
        merged.row([
            s.index.to_string(),
            real(s.alpha),
            s.sweeps.to_string(),
            s.samples.to_string(),
            real(s.mean_avg_jump_len),
            real(s.mean_max_cycle_len),
            real(s.mean_winding_abs),
        ])?;
    }
    merged.finish()?;
    Ok(summaries)
}

const NU_HEADER: [&str; 5] = ["alpha", "gamma", "K", "nu", "stderr"];

fn nu_rows(alpha: f64, curve: &NuCurve) -> Vec<[String; 5]> {
    (0..curve.thresholds.len())
        .map(|j| {
            let gamma = curve.gamma_grid.as_ref().map_or(String::new(), |g| real(g[j]));
            [real(alpha), gamma, real(curve.thresholds[j]), real(curve.values[j]), real(curve.stderr[j])]
        })
        .collect()
}

/// Reads `(K, nu[, stderr])` columns, by name when present.
fn read_injected_curve(path: &Path) -> Result<NuCurve> {
    let table = Table::read(path)?;
    let k = table.column_index("K").unwrap_or(0);
    let nu = table.column_index("nu").unwrap_or(1);
    if table.headers.len() < 2 {
        return Err(CliError::Parse { path: path.to_path_buf(), line: 1, message: "need K and nu columns".into() });
    }
    let se = table.column_index("stderr");
    let mut curve = NuCurve {
        thresholds: Vec::new(),
        values: Vec::new(),
        stderr: Vec::new(),
        sample_count: 0,
        gamma_grid: None,
    };
    for (_, row) in &table.rows {
        curve.thresholds.push(row[k]);
        curve.values.push(row[nu]);
        curve.stderr.push(se.map_or(f64::NAN, |i| row[i]));
    }
    Ok(curve)
}

/// `nu-curve`: estimates `nu(K)` for every cell and merges the curves into
/// `nu.csv`. With `nu.inject` set, the given curve is written instead.
pub fn nu_curve(config: &ExperimentConfig) -> Result<Vec<(f64, NuCurve)>> {
    config.validate()?;
    let out = &config.run.out;
    create_dir(out)?;
    let comment = comment("nu-curve", config);
    let curves = match &config.nu.inject {
        Some(path) => vec![(config.chain.alpha, read_injected_curve(path)?)],
        None => {
            let lattice = config.lattice_spec()?;
            let n = lattice.n_sites();
            let set = match config.nu.grid {
                NuGrid::Gamma => ObservableSet::default().with_gamma_nu(n),
                NuGrid::Linear => ObservableSet {
                    nu_thresholds: Some(linear_thresholds(config.nu.k_max.unwrap_or(n))),
                    ..ObservableSet::default()
                },
            };
            let alphas = config.alphas();
            run_cells(config.run.workers, alphas.len(), |i| {
                let chain_config = config.chain_config(alphas[i], i);
                let series = run_experiment(&chain_config, &lattice, config.chain.samples, &set)?;
                let curve = series.nu.expect("nu thresholds were requested");
                let dir = cell_dir(out, i as u64);
                create_dir(&dir)?;
                let mut cell = CsvOut::create(&dir.join("nu.csv"), &comment, &NU_HEADER)?;
                for row in nu_rows(alphas[i], &curve) {
                    cell.row(row)?;
                }
                cell.finish()?;
                Ok((alphas[i], curve))
            })?
        }
    };
    let mut merged = CsvOut::create(&out.join("nu.csv"), &comment, &NU_HEADER)?;
    for (alpha, curve) in &curves {
        for row in nu_rows(*alpha, curve) {
            merged.row(row)?;
        }
    }
    merged.finish()?;
    Ok(curves)
}

/// A calibration set and its measured dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationResult {
    pub set: Calibration,
    pub expected: f64,
    pub curve: srp_core::BoxCountCurve,
}

pub fn calibrate(set: Calibration, side: usize, min_box_side: f64) -> Result<CalibrationResult> {
    let (points, ladder, expected) = match set {
        Calibration::Grid => (fractal::full_grid(side), BoxLadder::for_min_box_side(side, min_box_side)?, 2.0),
        Calibration::Line => (fractal::straight_line(side), BoxLadder::for_min_box_side(side, min_box_side)?, 1.0),
        Calibration::Sierpinski => (fractal::sierpinski_triangle(7), fractal::dyadic_ladder(7)?, 3f64.log2()),
    };
    let curve = fractal::boxdim(&points, &ladder, BoxWindow::ALL)?;
    Ok(CalibrationResult { set, expected, curve })
}

/// `boxdim`: longest-cycle dimension per `alpha` from chains started in a
/// winding cycle, or the dimension of a calibration set.
pub fn boxdim(config: &ExperimentConfig) -> Result<Vec<srp_core::DimensionEstimate>> {
    config.validate()?;
    let out = &config.run.out;
    create_dir(out)?;
    let comment = comment("boxdim", config);
    if let Some(set) = config.boxdim.calibration {
        let r = calibrate(set, config.lattice.side, config.boxdim.min_box_side)?;
        let mut csv = CsvOut::create(
            &out.join("calibration.csv"),
            &comment,
            &["n", "count", "ln_inv_r", "ln_count", "in_window"],
        )?;
        for (j, (&(n, count), &(x, y))) in r.curve.counts.iter().zip(&r.curve.points).enumerate() {
            csv.row([n.to_string(), count.to_string(), real(x), real(y), r.curve.window.contains(&j).to_string()])?;
        }
        csv.finish()?;
        let mut summary =
            CsvOut::create(&out.join("calibration_summary.csv"), &comment, &["expected", "slope", "slope_std_err"])?;
        summary.row([real(r.expected), real(r.curve.slope), real(r.curve.slope_std_err)])?;
        summary.finish()?;
        return Ok(Vec::new());
    }
    let lattice = config.lattice_spec()?;
    let mut template = config.chain_config(config.boxdim.alphas[0], 0);
    if config.chain.initial == InitialChoice::Identity {
        template.initial = InitialCondition::ForcedWinding(srp_core::Axis::X);
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.run.workers)
        .build()
        .map_err(|e| CliError::Config(format!("cannot start workers: {e}")))?;
    let estimates = pool.install(|| {
        fractal::dimension_scan(
            &config.boxdim.alphas,
            &template,
            &lattice,
            config.boxdim.samples,
            config.boxdim.min_box_side,
        )
    })?;
    let mut samples =
        CsvOut::create(&out.join("boxdim.csv"), &comment, &["alpha", "sweep", "slope", "std_err", "saturated"])?;
    let mut summary = CsvOut::create(
        &out.join("boxdim_summary.csv"),
        &comment,
        &["alpha", "mean", "std_dev", "used", "samples"],
    )?;
    for e in &estimates {
        for s in &e.samples {
            samples.row([real(e.alpha), s.sweep.to_string(), real(s.slope), real(s.std_err), s.saturated.to_string()])?;
        }
        summary.row([real(e.alpha), real(e.mean), real(e.std_dev), e.used().to_string(), e.samples.len().to_string()])?;
    }
    samples.finish()?;
    summary.finish()?;
    Ok(estimates)
}

fn default_columns(model: FitChoice) -> [&'static str; 2] {
    match model {
        FitChoice::Loglog | FitChoice::ExpRate => ["K", "nu"],
        FitChoice::KtPower | FitChoice::Crossing => ["alpha", "p"],
        FitChoice::KtRate => ["alpha", "r"],
        FitChoice::DimensionLaws => ["alpha", "mean"],
    }
}

fn model_name(model: FitChoice) -> &'static str {
    match model {
        FitChoice::Loglog => "loglog",
        FitChoice::ExpRate => "exp-rate",
        FitChoice::KtPower => "kt-power",
        FitChoice::KtRate => "kt-rate",
        FitChoice::Crossing => "crossing",
        FitChoice::DimensionLaws => "dimension-laws",
    }
}

/// The `(x, y)` pairs the fit section selects from `table`.
fn select_points(config: &ExperimentConfig, model: FitChoice, table: &Table, path: &Path) -> Result<Vec<(f64, f64)>> {
    let column = |name: &str| {
        table.column_index(name).ok_or_else(|| CliError::Parse {
            path: path.to_path_buf(),
            line: 1,
            message: format!("no column named '{name}'"),
        })
    };
    let (x, y) = match &config.fit.columns {
        Some([a, b]) => (column(a)?, column(b)?),
        None => {
            let [a, b] = default_columns(model);
            match (table.column_index(a), table.column_index(b)) {
                (Some(x), Some(y)) => (x, y),
                _ if table.headers.len() >= 2 => (0, 1),
                _ => return Err(CliError::Parse { path: path.to_path_buf(), line: 1, message: "need two columns".into() }),
            }
        }
    };
    let alpha = match config.fit.alpha {
        Some(a) => Some((column("alpha")?, a)),
        None => None,
    };
    Ok(table
        .rows
        .iter()
        .filter(|(_, r)| alpha.is_none_or(|(i, a)| r[i] == a))
        .map(|(_, r)| (r[x], r[y]))
        .filter(|(a, b)| a.is_finite() && b.is_finite())
        .collect())
}

/// A fit as `key=value` lines.
pub fn report(results: &[FitResult]) -> String {
    let mut s = String::new();
    for r in results {
        writeln!(s, "model={}", r.model.name()).unwrap();
        for (i, (name, value)) in r.params.iter().enumerate() {
            writeln!(s, "{name}={}", real(*value)).unwrap();
            if let Some(se) = &r.param_std_err {
                writeln!(s, "{name}_std_err={}", real(se[i])).unwrap();
            }
        }
        writeln!(s, "rss={}", real(r.rss)).unwrap();
        writeln!(s, "converged={}", r.converged).unwrap();
        writeln!(s, "iterations={}", r.iterations).unwrap();
        for w in &r.warnings {
            writeln!(s, "warning={w}").unwrap();
        }
    }
    s
}

/// `fit`: runs one fitter on a CSV and writes `fit_<model>.txt`. Returns the
/// report text.
pub fn fit(config: &ExperimentConfig) -> Result<String> {
    config.validate()?;
    let model = config.fit.model.ok_or_else(|| CliError::Config("fit.model is not set".into()))?;
    let input = config.fit.input.as_ref().ok_or_else(|| CliError::Config("fit.input is not set".into()))?;
    let table = Table::read(input)?;
    let points = select_points(config, model, &table, input)?;
    let f = &config.fit;
    let mut text = format!("# {}\n", comment("fit", config));
    let results = match model {
        FitChoice::Loglog => {
            let k_min = f.k_min.unwrap_or(f64::NEG_INFINITY);
            // Without an explicit upper end, stop before the first empty bin.
            let k_max = f.k_max.unwrap_or_else(|| {
                let empty = points
                    .iter()
                    .filter(|&&(k, v)| k >= k_min && v <= 0.0)
                    .map(|&(k, _)| k)
                    .fold(f64::INFINITY, f64::min);
                points.iter().map(|&(k, _)| k).filter(|&k| k < empty).fold(f64::NEG_INFINITY, f64::max)
            });
            vec![fits::loglog_slope(&points, k_min, k_max)?]
        }
        FitChoice::ExpRate => vec![fits::exp_rate(&points, (f.band[0], f.band[1]))?],
        FitChoice::KtPower => vec![fits::fit_kt_power(&points)?],
        FitChoice::KtRate => vec![fits::fit_kt_rate(&points)?],
        FitChoice::DimensionLaws => {
            let (linear, power) = fits::fit_dimension_laws(&points)?;
            vec![linear, power]
        }
        FitChoice::Crossing => {
            let alpha_c = fits::linear_extrapolate_crossing(&points, f.level)?;
            writeln!(text, "model=crossing\nlevel={}\nalpha_c={}", real(f.level), real(alpha_c)).unwrap();
            Vec::new()
        }
    };
    text.push_str(&report(&results));
    create_dir(&config.run.out)?;
    let path = config.run.out.join(format!("fit_{}.txt", model_name(model)));
    fs::write(&path, &text).map_err(CliError::io(&path))?;
    Ok(text)
}

/// `enumerate`: exact marginals of site 0 on a torus of at most nine sites.
pub fn enumerate(config: &ExperimentConfig) -> Result<ExactEnsemble> {
    config.validate()?;
    let lattice = config.lattice_spec()?;
    let ensemble = ExactEnsemble::enumerate(&lattice, config.chain.alpha, &config.chain.energy.into())?;
    let out = &config.run.out;
    create_dir(out)?;
    let comment = comment("enumerate", config);
    let origin = SiteIndex(0);

    let golden = format!("# {comment}\n{}", srp_core::oracle::cycle_length_csv(&ensemble, origin));
    let path = out.join("cycle_length.csv");
    fs::write(&path, golden).map_err(CliError::io(&path))?;

    let mut jumps = CsvOut::create(&out.join("jump_law.csv"), &comment, &["dx", "dy", "probability"])?;
    for (dz, p) in ensemble.jump_law(origin) {
        jumps.row([dz[0].to_string(), dz[1].to_string(), real(p)])?;
    }
    jumps.finish()?;

    let mut nu = CsvOut::create(&out.join("nu_exact.csv"), &comment, &["K", "nu"])?;
    for (k, v) in ensemble.nu(origin).iter().enumerate() {
        nu.row([k.to_string(), real(*v)])?;
    }
    nu.finish()?;
    Ok(ensemble)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(out: &Path) -> ExperimentConfig {
        let mut c = ExperimentConfig::default();
        c.lattice.side = 8;
        c.chain.thermalization_sweeps = 20;
        c.chain.sweeps_between_samples = 2;
        c.chain.samples = 10;
        c.run.out = out.to_path_buf();
        c
    }

    #[test]
    fn simulate_writes_cell_files() {
        let dir = tempfile::tempdir().unwrap();
        let mut c = small(dir.path());
        c.chain.alphas = Some(vec![0.5, 1.0]);
        c.run.workers = 2;
        let s = simulate(&c, None).unwrap();
        assert_eq!(s.len(), 2);
        assert_eq!(s[1].alpha, 1.0);
        assert_eq!(s[0].sweeps, 40);
        assert_eq!(s[0].samples, 10);
        for cell in ["cell_000", "cell_001"] {
            for f in ["trace.csv", "samples.csv", "checkpoint.json"] {
                assert!(dir.path().join(cell).join(f).exists(), "{cell}/{f}");
            }
        }
        let trace = Table::read(&dir.path().join("cell_000/trace.csv")).unwrap();
        assert_eq!(trace.rows.len(), 40);
    }

    #[test]
    fn uniform_nu_matches_the_exact_tail() {
        // At alpha = 0 every permutation is equally likely and the cycle
        // through a site has uniform length on 1..=N.
        let dir = tempfile::tempdir().unwrap();
        let mut c = small(dir.path());
        c.lattice.side = 4;
        c.chain.alpha = 0.0;
        c.chain.samples = 4000;
        c.nu.grid = NuGrid::Linear;
        let curves = nu_curve(&c).unwrap();
        let curve = &curves[0].1;
        assert_eq!(curve.thresholds.len(), 16);
        for (k, nu) in curve.points() {
            let exact = 1.0 - k / 16.0;
            assert!((nu - exact).abs() < 0.05, "K={k}: {nu} vs {exact}");
        }
    }

    #[test]
    fn nu_curve_is_monotone() {
        let dir = tempfile::tempdir().unwrap();
        let c = small(dir.path());
        let curves = nu_curve(&c).unwrap();
        let v = &curves[0].1.values;
        assert!(v.windows(2).all(|w| w[1] <= w[0]));
        let t = Table::read(&dir.path().join("nu.csv")).unwrap();
        assert_eq!(t.headers, NU_HEADER);
        assert_eq!(t.rows.len(), 99);
    }

    #[test]
    fn injected_curve_is_reproduced_exactly() {
        let dir = tempfile::tempdir().unwrap();
        let input = dir.path().join("in.csv");
        let values: Vec<(f64, f64)> = (1..=30).map(|k| (k as f64, (k as f64).powf(-0.189) / 3.0)).collect();
        let mut text = String::from("K,nu\n");
        for (k, v) in &values {
            text.push_str(&format!("{k},{}\n", real(*v)));
        }
        fs::write(&input, text).unwrap();
        let mut c = small(&dir.path().join("out"));
        c.nu.inject = Some(input);
        nu_curve(&c).unwrap();
        let t = Table::read(&dir.path().join("out/nu.csv")).unwrap();
        let k = t.column_index("K").unwrap();
        let nu = t.column_index("nu").unwrap();
        let back: Vec<(f64, f64)> = t.rows.iter().map(|(_, r)| (r[k], r[nu])).collect();
        assert_eq!(back, values);
    }

    #[test]
    fn calibration_sets_have_known_dimensions() {
        let grid = calibrate(Calibration::Grid, 128, 8.0).unwrap();
        assert!((grid.curve.slope - 2.0).abs() <= 0.01);
        let line = calibrate(Calibration::Line, 128, 8.0).unwrap();
        assert!((line.curve.slope - 1.0).abs() <= 0.01);
        let tri = calibrate(Calibration::Sierpinski, 128, 8.0).unwrap();
        assert!((tri.curve.slope - 1.585).abs() <= 0.02);
    }

    #[test]
    fn fit_reads_columns_and_writes_a_report() {
        let dir = tempfile::tempdir().unwrap();
        let input = dir.path().join("p.csv");
        let mut text = String::from("# crossing data\nalpha,p\n");
        for a in [0.3, 0.4, 0.5, 0.6] {
            text.push_str(&format!("{a},{}\n", -0.019 + 0.415 * a));
        }
        fs::write(&input, text).unwrap();
        let mut c = small(dir.path());
        c.fit.model = Some(FitChoice::Crossing);
        c.fit.input = Some(input.clone());
        let r = fit(&c).unwrap();
        let alpha_c: f64 = r.lines().find_map(|l| l.strip_prefix("alpha_c=")).unwrap().parse().unwrap();
        assert!((alpha_c - 0.648).abs() < 1e-3, "{alpha_c}");
        assert!(dir.path().join("fit_crossing.txt").exists());

        c.fit.model = Some(FitChoice::KtPower);
        assert!(matches!(fit(&c), Err(CliError::Core(srp_core::Error::InsufficientData(_)))));
    }

    #[test]
    fn enumerate_refuses_large_tori() {
        let dir = tempfile::tempdir().unwrap();
        let mut c = small(dir.path());
        c.lattice.extents = Some([2, 3]);
        c.chain.alpha = 1.0;
        let e = enumerate(&c).unwrap();
        assert_eq!(e.len(), 720);
        let golden = fs::read_to_string(dir.path().join("cycle_length.csv")).unwrap();
        assert!(golden.starts_with("# srp enumerate config_hash="));
        c.lattice.extents = Some([2, 5]);
        assert!(matches!(enumerate(&c), Err(CliError::Core(srp_core::Error::Budget(_)))));
    }
}
