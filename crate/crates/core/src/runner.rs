//! Task dispatch and result emission.
//!
//! Every run writes `report.csv` (key/value headline numbers); tasks add
//! their own outputs: `observables.csv` (columns `t,mass1,mass2,total`, one
//! row per step) and `profile_<t>.csv` (columns `s,u1,u2`) for simulations,
//! `spectral.csv` (columns `lambda,K_lambda`, a sweep plus a final summary
//! row at the root) for the characteristic-equation tasks. Floats are
//! written with 17 significant digits so reruns and reimplementations can
//! be diffed numerically; nothing non-deterministic (timings, paths) goes
//! into a CSV. On failure, partially written outputs are removed.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use crate::asymptotics::{
    aeg_from_trajectories, extinction_sufficient, growth_rate, irreducibility_conditions, tau,
};
use crate::config::{RunConfig, SweepConfig, Task};
use crate::error::{Error, Result};
use crate::solver::{simulate_with_safety, Grid, Trajectory};
use crate::spectral::{
    dominant_eigenpair, generator_matrix, k_of_lambda, rank_n_char_matrix, solve_lambda_star,
    solve_rank_n_root, SpectralMethod, SpectralResult,
};

/// Full-precision decimal float for CSV cells (17 significant digits).
pub fn fmt_g(x: f64) -> String {
    format!("{x:.16e}")
}

#[derive(Debug, Clone, PartialEq)]
pub enum HeadlineValue {
    Num(f64),
    Text(String),
    Flag(bool),
}

impl HeadlineValue {
    fn csv_value(&self) -> String {
        match self {
            HeadlineValue::Num(x) => fmt_g(*x),
            HeadlineValue::Text(s) => s.clone(),
            HeadlineValue::Flag(b) => b.to_string(),
        }
    }

    fn brief(&self) -> String {
        match self {
            HeadlineValue::Num(x) => format!("{x:.6e}"),
            HeadlineValue::Text(s) => s.clone(),
            HeadlineValue::Flag(b) => b.to_string(),
        }
    }
}

/// What a completed run produced.
#[derive(Debug, Clone)]
pub struct RunReport {
    pub task: Task,
    pub duration: Duration,
    pub files: Vec<PathBuf>,
    pub headline: Vec<(String, HeadlineValue)>,
}

impl RunReport {
    /// One-line human summary printed by the CLI.
    pub fn summary_line(&self) -> String {
        let mut parts: Vec<String> = self
            .headline
            .iter()
            .take(5)
            .map(|(k, v)| format!("{k}={}", v.brief()))
            .collect();
        parts.push(format!(
            "({} files, {:.2}s)",
            self.files.len(),
            self.duration.as_secs_f64()
        ));
        format!("{}: {}", self.task.tag(), parts.join(" "))
    }
}

struct Outputs {
    dir: PathBuf,
    files: Vec<PathBuf>,
}

impl Outputs {
    fn create(&mut self, name: &str) -> Result<BufWriter<File>> {
        let path = self.dir.join(name);
        let file = File::create(&path)?;
        self.files.push(path);
        Ok(BufWriter::new(file))
    }

    fn cleanup(&self) {
        for f in &self.files {
            let _ = fs::remove_file(f);
        }
    }
}

/// Execute the configured task, writing outputs under `out_dir`.
pub fn run(config: &RunConfig, out_dir: &Path) -> Result<RunReport> {
    let started = Instant::now();
    fs::create_dir_all(out_dir)?;
    let mut outputs = Outputs {
        dir: out_dir.to_path_buf(),
        files: Vec::new(),
    };
    match run_task(config, &mut outputs) {
        Ok(headline) => Ok(RunReport {
            task: config.task,
            duration: started.elapsed(),
            files: outputs.files,
            headline,
        }),
        Err(e) => {
            outputs.cleanup();
            Err(e)
        }
    }
}

type Headline = Vec<(String, HeadlineValue)>;

fn run_task(config: &RunConfig, out: &mut Outputs) -> Result<Headline> {
    config.validate()?;
    let headline = match config.task {
        Task::Simulate => run_simulate(config, out)?,
        Task::Spectral => run_spectral(config, out)?,
        Task::RankN => run_rank_n(config, out)?,
        Task::GeneratorEig => run_generator_eig(config)?,
        Task::Aeg => run_aeg(config, out)?,
        Task::Report => run_report(config)?,
    };
    write_report_csv(config.task, &headline, out)?;
    Ok(headline)
}

fn write_report_csv(task: Task, headline: &Headline, out: &mut Outputs) -> Result<()> {
    let mut w = out.create("report.csv")?;
    writeln!(w, "key,value")?;
    writeln!(w, "task,{}", task.tag())?;
    for (k, v) in headline {
        writeln!(w, "{k},{}", v.csv_value())?;
    }
    w.flush()?;
    Ok(())
}

fn write_observables(name: &str, traj: &Trajectory, out: &mut Outputs) -> Result<()> {
    let mut w = out.create(name)?;
    writeln!(w, "t,mass1,mass2,total")?;
    for obs in &traj.observables {
        writeln!(
            w,
            "{},{},{},{}",
            fmt_g(obs.t),
            fmt_g(obs.mass1),
            fmt_g(obs.mass2),
            fmt_g(obs.total)
        )?;
    }
    w.flush()?;
    Ok(())
}

fn write_profiles(grid: &Grid, traj: &Trajectory, out: &mut Outputs) -> Result<()> {
    for state in &traj.states {
        let mut w = out.create(&format!("profile_{}.csv", state.t))?;
        writeln!(w, "s,u1,u2")?;
        for (i, &s) in grid.centers().iter().enumerate() {
            writeln!(
                w,
                "{},{},{}",
                fmt_g(s),
                fmt_g(state.u1[i]),
                fmt_g(state.u2[i])
            )?;
        }
        w.flush()?;
    }
    Ok(())
}

fn run_simulate(config: &RunConfig, out: &mut Outputs) -> Result<Headline> {
    let grid = config.build_grid()?;
    let params = config.build_model()?;
    let time = config.time.as_ref().expect("validated");
    let initial = config.initial.as_ref().expect("validated").build(&grid)?;
    let output_times = time.resolve_output_times();
    let traj = simulate_with_safety(
        &params,
        &grid,
        &initial,
        time.t_end,
        &output_times,
        config.tolerances.safety,
    )?;
    write_observables("observables.csv", &traj, out)?;
    write_profiles(&grid, &traj, out)?;

    let last = traj.observables.last().unwrap();
    let mut headline: Headline = vec![
        ("t_end".into(), HeadlineValue::Num(last.t)),
        ("final_mass1".into(), HeadlineValue::Num(last.mass1)),
        ("final_mass2".into(), HeadlineValue::Num(last.mass2)),
        ("final_total".into(), HeadlineValue::Num(last.total)),
    ];
    match growth_rate(&traj, &grid, config.tolerances.window_fraction) {
        Ok(est) => {
            headline.push(("growth_rate".into(), HeadlineValue::Num(est.rate)));
            headline.push(("fit_r_squared".into(), HeadlineValue::Num(est.r_squared)));
        }
        Err(Error::ExtinctSignal { .. }) => {
            headline.push((
                "growth_rate".into(),
                HeadlineValue::Num(f64::NEG_INFINITY),
            ));
        }
        Err(_) => {}
    }
    Ok(headline)
}

fn sweep_range(config: &RunConfig, center: f64) -> (f64, f64, usize) {
    match config.sweep {
        Some(SweepConfig { lo, hi, count }) => (lo, hi, count),
        None => (center - 2.0, center + 2.0, 81),
    }
}

fn spectral_headline(result: &SpectralResult) -> Headline {
    vec![
        ("lambda_star".into(), HeadlineValue::Num(result.lambda_star)),
        ("k_at_zero".into(), HeadlineValue::Num(result.k_at_zero)),
        ("bracket_lo".into(), HeadlineValue::Num(result.bracket.0)),
        ("bracket_hi".into(), HeadlineValue::Num(result.bracket.1)),
        (
            "iterations".into(),
            HeadlineValue::Num(result.iterations as f64),
        ),
        (
            "method".into(),
            HeadlineValue::Text(result.method.tag().into()),
        ),
    ]
}

fn run_spectral(config: &RunConfig, out: &mut Outputs) -> Result<Headline> {
    let params = config.build_model()?;
    let result = solve_lambda_star(&params, config.tolerances.root_tol)?;
    let (lo, hi, count) = sweep_range(config, result.lambda_star);
    let mut w = out.create("spectral.csv")?;
    writeln!(w, "lambda,K_lambda")?;
    for i in 0..count {
        let lam = lo + (hi - lo) * (i as f64) / ((count - 1) as f64);
        writeln!(w, "{},{}", fmt_g(lam), fmt_g(k_of_lambda(&params, lam)?))?;
    }
    // summary row: the root itself
    writeln!(
        w,
        "{},{}",
        fmt_g(result.lambda_star),
        fmt_g(k_of_lambda(&params, result.lambda_star)?)
    )?;
    w.flush()?;
    Ok(spectral_headline(&result))
}

fn run_rank_n(config: &RunConfig, out: &mut Outputs) -> Result<Headline> {
    let params = config.build_model()?;
    let rank = params
        .beta
        .separable_terms()
        .map(|t| t.len())
        .unwrap_or(0);
    let result = solve_rank_n_root(&params, config.tolerances.root_tol)?;
    let det_at = |lam: f64| -> Result<f64> {
        let m = rank_n_char_matrix(&params, lam)?;
        let n = m.nrows();
        Ok((nalgebra::DMatrix::identity(n, n) - m).lu().determinant())
    };
    let (lo, hi, count) = sweep_range(config, result.lambda_star);
    let mut w = out.create("spectral.csv")?;
    writeln!(w, "lambda,K_lambda")?;
    for i in 0..count {
        let lam = lo + (hi - lo) * (i as f64) / ((count - 1) as f64);
        writeln!(w, "{},{}", fmt_g(lam), fmt_g(det_at(lam)?))?;
    }
    writeln!(
        w,
        "{},{}",
        fmt_g(result.lambda_star),
        fmt_g(det_at(result.lambda_star)?)
    )?;
    w.flush()?;
    let mut headline = spectral_headline(&result);
    headline.push(("rank".into(), HeadlineValue::Num(rank as f64)));
    Ok(headline)
}

fn run_generator_eig(config: &RunConfig) -> Result<Headline> {
    let grid = config.build_grid()?;
    let params = config.build_model()?;
    let matrix = generator_matrix(&params, &grid)?;
    let (eigenvalue, _vector) = dominant_eigenpair(&matrix, config.tolerances.power_tol)?;
    Ok(vec![
        ("dominant_eigenvalue".into(), HeadlineValue::Num(eigenvalue)),
        (
            "n_cells".into(),
            HeadlineValue::Num(grid.n_cells() as f64),
        ),
        (
            "method".into(),
            HeadlineValue::Text(SpectralMethod::GeneratorPowerIteration.tag().into()),
        ),
    ])
}

fn run_aeg(config: &RunConfig, out: &mut Outputs) -> Result<Headline> {
    let grid = config.build_grid()?;
    let params = config.build_model()?;
    let time = config.time.as_ref().expect("validated");
    let t_end = time.t_end;
    let a = config.initial_a.as_ref().expect("validated").build(&grid)?;
    let b = config.initial_b.as_ref().expect("validated").build(&grid)?;
    let times = [0.5 * t_end, t_end];
    let safety = config.tolerances.safety;
    let traj_a = simulate_with_safety(&params, &grid, &a, t_end, &times, safety)?;
    let traj_b = simulate_with_safety(&params, &grid, &b, t_end, &times, safety)?;
    write_observables("observables_a.csv", &traj_a, out)?;
    write_observables("observables_b.csv", &traj_b, out)?;
    let report = aeg_from_trajectories(&grid, &traj_a, &traj_b, config.tolerances.aeg_tol)?;
    Ok(vec![
        ("rate_a".into(), HeadlineValue::Num(report.rate_a)),
        ("rate_b".into(), HeadlineValue::Num(report.rate_b)),
        (
            "profile_distance".into(),
            HeadlineValue::Num(report.profile_distance),
        ),
        (
            "self_distance_a".into(),
            HeadlineValue::Num(report.self_distance_a),
        ),
        (
            "self_distance_b".into(),
            HeadlineValue::Num(report.self_distance_b),
        ),
        (
            "verdict".into(),
            HeadlineValue::Text(report.verdict.to_string()),
        ),
    ])
}

fn run_report(config: &RunConfig) -> Result<Headline> {
    let params = config.build_model()?;
    let m = params.m;
    let tau_m = tau(&params, m)?;
    let ext = extinction_sufficient(&params);
    let eps = config.tolerances.epsilon.unwrap_or(0.1 * m);
    let flags = irreducibility_conditions(&params, eps)?;
    Ok(vec![
        ("tau_m".into(), HeadlineValue::Num(tau_m)),
        ("birth_sup_B".into(), HeadlineValue::Num(params.birth_sup())),
        (
            "transfer_sup_C".into(),
            HeadlineValue::Num(params.transfer_sup()),
        ),
        ("extinction_lhs".into(), HeadlineValue::Num(ext.lhs)),
        ("extinction_rhs".into(), HeadlineValue::Num(ext.rhs)),
        ("extinction_holds".into(), HeadlineValue::Flag(ext.holds)),
        ("epsilon".into(), HeadlineValue::Num(eps)),
        (
            "birth_corner_ok".into(),
            HeadlineValue::Flag(flags.birth_corner_ok),
        ),
        (
            "c1_at_zero_ok".into(),
            HeadlineValue::Flag(flags.c1_at_zero_ok),
        ),
        ("c2_at_m_ok".into(), HeadlineValue::Flag(flags.c2_at_m_ok)),
    ])
}

/// Write a gnuplot script rendering the run's CSV outputs: mass-vs-time on
/// a log scale and the final profile for simulations, the characteristic
/// curve with its unit (or zero) reference line for spectral tasks. The
/// script lives next to the CSVs and references them by bare filename.
pub fn emit_plot_script(report: &RunReport) -> Result<PathBuf> {
    if report.files.is_empty() {
        return Err(Error::Config(
            "run report lists no output files to plot".into(),
        ));
    }
    let dir = report.files[0]
        .parent()
        .map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from("."));
    let name_of = |p: &PathBuf| p.file_name().unwrap_or_default().to_string_lossy().into_owned();
    let exists = |p: &PathBuf| -> Result<()> {
        if fs::metadata(p).is_err() {
            return Err(Error::Config(format!(
                "listed output {} is missing on disk",
                p.display()
            )));
        }
        Ok(())
    };

    let observables: Vec<&PathBuf> = report
        .files
        .iter()
        .filter(|p| name_of(p).starts_with("observables") && name_of(p).ends_with(".csv"))
        .collect();
    let profiles: Vec<&PathBuf> = report
        .files
        .iter()
        .filter(|p| name_of(p).starts_with("profile_") && name_of(p).ends_with(".csv"))
        .collect();
    let spectral = report.files.iter().find(|p| name_of(p) == "spectral.csv");

    let mut script = String::new();
    script.push_str("set datafile separator \",\"\nset terminal pngcairo size 900,600\n");
    let mut stanzas = 0usize;
    if !observables.is_empty() {
        for p in &observables {
            exists(p)?;
        }
        script.push_str("\nset output \"mass_vs_time.png\"\nset logscale y\n");
        script.push_str("set xlabel \"t\"\nset ylabel \"mass\"\nplot ");
        let plots: Vec<String> = observables
            .iter()
            .map(|p| {
                format!(
                    "\"{}\" skip 1 using 1:4 with lines title \"{} total\"",
                    name_of(p),
                    name_of(p).trim_end_matches(".csv")
                )
            })
            .collect();
        script.push_str(&plots.join(", \\\n     "));
        script.push('\n');
        stanzas += 1;
    }
    if let Some(last_profile) = profiles.last() {
        exists(last_profile)?;
        script.push_str("\nset output \"final_profile.png\"\nunset logscale y\n");
        script.push_str("set xlabel \"s\"\nset ylabel \"density\"\n");
        script.push_str(&format!(
            "plot \"{0}\" skip 1 using 1:2 with lines title \"u1\", \\\n     \"{0}\" skip 1 using 1:3 with lines title \"u2\"\n",
            name_of(last_profile)
        ));
        stanzas += 1;
    }
    if let Some(sp) = spectral {
        exists(sp)?;
        let reference = if report.task == Task::RankN { 0 } else { 1 };
        script.push_str("\nset output \"characteristic.png\"\nunset logscale y\n");
        script.push_str("set xlabel \"lambda\"\nset ylabel \"K\"\n");
        script.push_str(&format!(
            "plot \"{}\" skip 1 using 1:2 with lines title \"K(lambda)\", {reference} with lines dashtype 2 title \"reference\"\n",
            name_of(sp)
        ));
        stanzas += 1;
    }
    if stanzas == 0 {
        return Err(Error::Config(format!(
            "task {} produced no plottable CSV outputs",
            report.task.tag()
        )));
    }
    let path = dir.join("plot.gp");
    fs::write(&path, script)?;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::parse_config;

    fn spectral_config() -> RunConfig {
        parse_config(
            r#"
task = "spectral"

[grid]
m = 1.0
n_cells = 50

[model.gamma1]
form = "constant"
value = 1.0

[model.gamma2]
form = "constant"
value = 1.0

[model.mu]
form = "constant"
value = 0.5

[model.c1]
form = "constant"
value = 0.0

[model.c2]
form = "constant"
value = 0.0

[model.beta]
kind = "separable"

[[model.beta.terms]]
b1 = { form = "constant", value = 2.0 }
b2 = { form = "constant", value = 1.0 }
"#,
        )
        .unwrap()
    }

    #[test]
    fn fmt_g_has_17_significant_digits() {
        assert_eq!(fmt_g(0.5), "5.0000000000000000e-1");
        assert_eq!(fmt_g(1.0), "1.0000000000000000e0");
        let x = 0.1 + 0.2;
        let parsed: f64 = fmt_g(x).parse().unwrap();
        assert_eq!(parsed, x);
    }

    #[test]
    fn spectral_run_writes_summary_and_report() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = spectral_config();
        let report = run(&cfg, dir.path()).unwrap();
        assert_eq!(report.files.len(), 2);
        for f in &report.files {
            let meta = fs::metadata(f).unwrap();
            assert!(meta.len() > 0, "{} is empty", f.display());
        }
        let spectral_txt = fs::read_to_string(dir.path().join("spectral.csv")).unwrap();
        let last = spectral_txt.lines().last().unwrap();
        let fields: Vec<&str> = last.split(',').collect();
        let lam: f64 = fields[0].parse().unwrap();
        let k: f64 = fields[1].parse().unwrap();
        assert!((lam + 0.5).abs() < 1e-8);
        assert!((k - 1.0).abs() < 1e-9);
        assert!(!report.summary_line().is_empty());
    }

    #[test]
    fn simulate_run_zero_horizon_single_row() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = parse_config(
            r#"
task = "simulate"

[grid]
m = 1.0
n_cells = 16

[model.gamma1]
form = "constant"
value = 1.0

[model.gamma2]
form = "constant"
value = 1.0

[model.mu]
form = "constant"
value = 0.0

[model.c1]
form = "constant"
value = 0.0

[model.c2]
form = "constant"
value = 0.0

[model.beta]
kind = "separable"
terms = []

[time]
t_end = 0.0

[initial]
u1 = { form = "constant", value = 1.0 }
u2 = { form = "constant", value = 0.0 }
"#,
        )
        .unwrap();
        let report = run(&cfg, dir.path()).unwrap();
        let obs = fs::read_to_string(dir.path().join("observables.csv")).unwrap();
        let lines: Vec<&str> = obs.lines().collect();
        assert_eq!(lines.len(), 2, "header plus exactly one row: {lines:?}");
        assert!(report.files.iter().any(|f| f.ends_with("profile_0.csv")));
    }

    #[test]
    fn plot_script_stanzas() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = spectral_config();
        let report = run(&cfg, dir.path()).unwrap();
        let script_path = emit_plot_script(&report).unwrap();
        let script = fs::read_to_string(&script_path).unwrap();
        assert!(script.contains("spectral.csv"));
        assert!(script.contains(", 1 with lines"));
        assert_eq!(script.matches("set output").count(), 1);

        // a report with no files errors
        let empty = RunReport {
            task: Task::Report,
            duration: Duration::ZERO,
            files: vec![],
            headline: vec![],
        };
        assert!(emit_plot_script(&empty).is_err());
    }

    #[test]
    fn failed_run_removes_partial_outputs() {
        // rank_n on a trivial kernel fails after report-worthy work begins
        let dir = tempfile::tempdir().unwrap();
        let cfg = parse_config(
            r#"
task = "rank_n"

[grid]
m = 1.0
n_cells = 16

[model.gamma1]
form = "constant"
value = 1.0

[model.gamma2]
form = "constant"
value = 1.0

[model.mu]
form = "constant"
value = 0.5

[model.c1]
form = "constant"
value = 0.0

[model.c2]
form = "constant"
value = 0.0

[model.beta]
kind = "separable"

[[model.beta.terms]]
b1 = { form = "constant", value = 0.0 }
b2 = { form = "constant", value = 0.0 }
"#,
        )
        .unwrap();
        let err = run(&cfg, dir.path()).unwrap_err();
        assert!(matches!(err, Error::NoRoot(_)));
        let leftovers: Vec<_> = fs::read_dir(dir.path()).unwrap().collect();
        assert!(leftovers.is_empty(), "partial outputs left: {leftovers:?}");
    }
}
