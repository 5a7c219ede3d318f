//! Experiment orchestration: TOML configuration, dispatch to the trace /
//! purify / lossy-pipeline / sweep experiments, and deterministic CSV
//! emission. No sampling happens anywhere, so identical configs produce
//! byte-identical output.

use std::fmt::Write as _;
use std::fs::File;
use std::io::{self, Write};
use std::path::PathBuf;
use std::str::FromStr;

use rayon::prelude::*;
use serde::Deserialize;

use crate::error::{Result, SimError};
use crate::fock::MixedState;
use crate::noise::{bell_mixture_channel, BellMixtureParams, DriftParams};
use crate::protocol::{
    eq9_fidelity, eq9_oracle, pdc_pipeline, purify, trace_evolution, PurificationReport,
};
use crate::sources::{ideal_hyper_pair, PdcParams};

/// Which experiment to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExperimentKind {
    /// Stage-by-stage circuit trace of the ideal input.
    Trace,
    /// Single-pair purification through the Bell-diagonal channel and drift.
    Purify,
    /// Lossy down-conversion pipeline with both fidelity accountings.
    Pdc,
    /// Parameter sweep emitting closed-form and oracle columns.
    Sweep,
}

impl FromStr for ExperimentKind {
    type Err = SimError;

    fn from_str(s: &str) -> Result<ExperimentKind> {
        match s {
            "trace" => Ok(ExperimentKind::Trace),
            "purify" => Ok(ExperimentKind::Purify),
            "pdc" => Ok(ExperimentKind::Pdc),
            "sweep" => Ok(ExperimentKind::Sweep),
            other => Err(SimError::Config(format!(
                "unknown experiment kind `{other}` (expected trace, purify, pdc or sweep)"
            ))),
        }
    }
}

/// Inclusive arithmetic grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    pub start: f64,
    pub stop: f64,
    pub step: f64,
}

impl Grid {
    pub fn new(start: f64, stop: f64, step: f64) -> Result<Grid> {
        if !(step > 0.0) {
            return Err(SimError::Config(format!(
                "sweep step must be positive, got {step}"
            )));
        }
        if stop < start - 1e-12 {
            return Err(SimError::Config(format!(
                "sweep stop {stop} is below start {start}"
            )));
        }
        Ok(Grid { start, stop, step })
    }

    pub fn values(&self) -> Vec<f64> {
        let n = ((self.stop - self.start) / self.step + 1e-9).floor() as usize + 1;
        (0..n).map(|i| self.start + i as f64 * self.step).collect()
    }
}

/// What a sweep iterates over.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SweepSpec {
    /// Bit-flip rate sweep: closed-form and brute-force four-photon columns.
    ErrorRate(Grid),
    /// (emission probability, loss) grid with both loss accountings.
    LossGrid { p: Grid, m: Grid },
}

/// Fully validated run description.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub kind: ExperimentKind,
    pub noise: BellMixtureParams,
    pub drift: DriftParams,
    pub pdc: PdcParams,
    pub e: f64,
    pub m: f64,
    pub sweep: SweepSpec,
    pub out: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> RunConfig {
        RunConfig {
            kind: ExperimentKind::Purify,
            noise: BellMixtureParams::noiseless(),
            drift: DriftParams::none(),
            pdc: PdcParams::ideal(0.1).expect("default parameters are valid"),
            e: 0.0,
            m: 0.0,
            sweep: SweepSpec::ErrorRate(Grid {
                start: 0.0,
                stop: 1.0,
                step: 0.1,
            }),
            out: None,
        }
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    kind: Option<String>,
    noise: Option<RawNoise>,
    drift: Option<RawDrift>,
    pdc: Option<RawPdc>,
    error: Option<RawError>,
    loss: Option<RawLoss>,
    sweep: Option<RawSweep>,
    output: Option<RawOutput>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawNoise {
    alpha: Option<f64>,
    beta: Option<f64>,
    delta: Option<f64>,
    eta: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDrift {
    phi: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPdc {
    p: Option<f64>,
    r: Option<f64>,
    pump_phase: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawError {
    e: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawLoss {
    m: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSweep {
    parameter: Option<String>,
    start: Option<f64>,
    stop: Option<f64>,
    step: Option<f64>,
    p_start: Option<f64>,
    p_stop: Option<f64>,
    p_step: Option<f64>,
    m_start: Option<f64>,
    m_stop: Option<f64>,
    m_step: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawOutput {
    path: Option<PathBuf>,
}

fn noise_from_raw(raw: &RawNoise) -> Result<BellMixtureParams> {
    if raw.alpha.is_none() && raw.beta.is_none() && raw.delta.is_none() && raw.eta.is_none() {
        return Ok(BellMixtureParams::noiseless());
    }
    BellMixtureParams::new(
        raw.alpha.unwrap_or(0.0),
        raw.beta.unwrap_or(0.0),
        raw.delta.unwrap_or(0.0),
        raw.eta.unwrap_or(0.0),
    )
    .map_err(|e| SimError::Config(format!("[noise] {e}")))
}

fn sweep_from_raw(raw: &RawSweep) -> Result<SweepSpec> {
    let default = RunConfig::default().sweep;
    match raw.parameter.as_deref() {
        None | Some("e") => {
            let grid = Grid::new(
                raw.start.unwrap_or(0.0),
                raw.stop.unwrap_or(1.0),
                raw.step.unwrap_or(0.1),
            )
            .map_err(|e| SimError::Config(format!("[sweep] {e}")))?;
            if raw.parameter.is_none()
                && raw.start.is_none()
                && raw.stop.is_none()
                && raw.step.is_none()
            {
                return Ok(default);
            }
            Ok(SweepSpec::ErrorRate(grid))
        }
        Some("pm") => {
            let p = Grid::new(
                raw.p_start.unwrap_or(0.05),
                raw.p_stop.unwrap_or(0.1),
                raw.p_step.unwrap_or(0.05),
            )
            .map_err(|e| SimError::Config(format!("[sweep] p grid: {e}")))?;
            let m = Grid::new(
                raw.m_start.unwrap_or(0.0),
                raw.m_stop.unwrap_or(0.5),
                raw.m_step.unwrap_or(0.1),
            )
            .map_err(|e| SimError::Config(format!("[sweep] m grid: {e}")))?;
            Ok(SweepSpec::LossGrid { p, m })
        }
        Some(other) => Err(SimError::Config(format!(
            "[sweep] unknown parameter `{other}` (expected `e` or `pm`)"
        ))),
    }
}

/// Parse and validate a TOML configuration document. Unknown keys, simplex
/// violations and range violations are reported with the offending key.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    let raw: RawConfig =
        toml::from_str(text).map_err(|e| SimError::Config(e.message().to_string()))?;
    let defaults = RunConfig::default();
    let kind = match &raw.kind {
        Some(s) => s.parse()?,
        None => defaults.kind,
    };
    let noise = noise_from_raw(&raw.noise.unwrap_or_default())?;
    let drift = DriftParams::new(raw.drift.unwrap_or_default().phi.unwrap_or(0.0))
        .map_err(|e| SimError::Config(format!("[drift] {e}")))?;
    let raw_pdc = raw.pdc.unwrap_or_default();
    let pdc = PdcParams::new(
        raw_pdc.p.unwrap_or(defaults.pdc.p),
        raw_pdc.r.unwrap_or(1.0),
        raw_pdc.pump_phase.unwrap_or(0.0),
    )
    .map_err(|e| SimError::Config(format!("[pdc] {e}")))?;
    let e = raw.error.unwrap_or_default().e.unwrap_or(0.0);
    if !(0.0..=1.0).contains(&e) {
        return Err(SimError::Config(format!(
            "[error] e must be in [0, 1], got {e}"
        )));
    }
    let m = raw.loss.unwrap_or_default().m.unwrap_or(0.0);
    if !(0.0..=1.0).contains(&m) {
        return Err(SimError::Config(format!(
            "[loss] m must be in [0, 1], got {m}"
        )));
    }
    let sweep = sweep_from_raw(&raw.sweep.unwrap_or_default())?;
    Ok(RunConfig {
        kind,
        noise,
        drift,
        pdc,
        e,
        m,
        sweep,
        out: raw.output.unwrap_or_default().path,
    })
}

/// Fixed-width significand with 12 significant digits, for diff-friendly
/// CSV output.
fn fmt_f(x: f64) -> String {
    format!("{x:.11e}")
}

fn make_writer(out: &Option<PathBuf>) -> Result<Box<dyn Write>> {
    Ok(match out {
        Some(path) => Box::new(File::create(path)?),
        None => Box::new(io::stdout()),
    })
}

fn csv_error(e: csv::Error) -> SimError {
    SimError::Config(format!("CSV emission failed: {e}"))
}

fn write_trace_csv(config: &RunConfig) -> Result<()> {
    let stages = trace_evolution(&ideal_hyper_pair())?;
    let mut text = String::new();
    for (label, state) in &stages {
        let basis = state.basis();
        for (occ, amp) in state.terms() {
            let _ = writeln!(
                text,
                "{label:<18} {:<24} {:+.6},{:+.6}",
                occ.render(basis),
                amp.re,
                amp.im
            );
        }
    }
    print!("{text}");
    let mut w = csv::Writer::from_writer(make_writer(&config.out)?);
    w.write_record(["stage", "term", "re", "im"]).map_err(csv_error)?;
    for (label, state) in &stages {
        let basis = state.basis();
        for (occ, amp) in state.terms() {
            w.write_record([
                label.to_string(),
                occ.render(basis),
                fmt_f(amp.re),
                fmt_f(amp.im),
            ])
            .map_err(csv_error)?;
        }
    }
    w.flush()?;
    Ok(())
}

fn write_report_csv(report: &PurificationReport, out: &Option<PathBuf>) -> Result<()> {
    let mut w = csv::Writer::from_writer(make_writer(out)?);
    w.write_record([
        "pattern",
        "class",
        "probability",
        "fidelity",
        "purity",
        "phase",
        "compensated_fidelity",
    ])
    .map_err(csv_error)?;
    let opt = |v: Option<f64>| v.map(fmt_f).unwrap_or_default();
    for p in &report.patterns {
        w.write_record([
            p.pattern.to_string(),
            p.class.label().to_string(),
            fmt_f(p.probability),
            opt(p.fidelity),
            opt(p.purity),
            opt(p.phase),
            opt(p.compensated_fidelity),
        ])
        .map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

fn run_purify(config: &RunConfig) -> Result<()> {
    let mix = bell_mixture_channel(&ideal_hyper_pair(), &config.noise)?;
    let report = purify(&mix, &config.drift)?;
    println!(
        "accepted probability {:.12}  fidelity {:.12}  compensated {:.12}",
        report.accepted_probability,
        report.accepted_fidelity,
        report.accepted_fidelity_compensated
    );
    write_report_csv(&report, &config.out)
}

fn run_pdc(config: &RunConfig) -> Result<()> {
    let report = pdc_pipeline(&config.pdc, config.e, config.m)?;
    for p in report.patterns.iter().filter(|p| p.probability > 1e-15) {
        println!(
            "pattern {:<10} {:<16} probability {:.12}",
            p.pattern.to_string(),
            p.class.label(),
            p.probability
        );
    }
    let mut w = csv::Writer::from_writer(make_writer(&config.out)?);
    w.write_record([
        "p",
        "m",
        "e",
        "accepted_probability",
        "intact_pair_fidelity",
        "exact_fidelity",
        "closed_form",
        "deviation",
    ])
    .map_err(csv_error)?;
    let (intact, exact, closed, dev) = match report.loss_accounting {
        Some(acc) => (
            fmt_f(acc.intact_pair_fidelity),
            fmt_f(acc.exact_fidelity),
            fmt_f(acc.closed_form),
            fmt_f(acc.deviation),
        ),
        None => (
            String::new(),
            fmt_f(report.accepted_fidelity),
            String::new(),
            String::new(),
        ),
    };
    w.write_record([
        fmt_f(config.pdc.p),
        fmt_f(config.m),
        fmt_f(config.e),
        fmt_f(report.accepted_probability),
        intact,
        exact,
        closed,
        dev,
    ])
    .map_err(csv_error)?;
    w.flush()?;
    Ok(())
}

fn run_sweep(config: &RunConfig) -> Result<()> {
    match config.sweep {
        SweepSpec::ErrorRate(grid) => {
            let rows: Vec<(f64, f64, f64)> = grid
                .values()
                .into_par_iter()
                .map(|e| Ok((e, eq9_fidelity(e)?, eq9_oracle(e)?)))
                .collect::<Result<_>>()?;
            let mut w = csv::Writer::from_writer(make_writer(&config.out)?);
            w.write_record(["e", "closed_form", "oracle"]).map_err(csv_error)?;
            for (e, f, oracle) in rows {
                w.write_record([fmt_f(e), fmt_f(f), fmt_f(oracle)])
                    .map_err(csv_error)?;
            }
            w.flush()?;
        }
        SweepSpec::LossGrid { p, m } => {
            let cells: Vec<(f64, f64)> = p
                .values()
                .into_iter()
                .flat_map(|pv| m.values().into_iter().map(move |mv| (pv, mv)))
                .collect();
            let rows: Vec<[String; 6]> = cells
                .into_par_iter()
                .map(|(pv, mv)| {
                    let params = PdcParams::new(pv, config.pdc.r, config.pdc.pump_phase)?;
                    let report = pdc_pipeline(&params, config.e, mv)?;
                    let acc = report.loss_accounting.ok_or_else(|| {
                        SimError::InvalidParameter(format!(
                            "no accepted events at p={pv}, m={mv}"
                        ))
                    })?;
                    Ok([
                        fmt_f(pv),
                        fmt_f(mv),
                        fmt_f(acc.closed_form),
                        fmt_f(acc.intact_pair_fidelity),
                        fmt_f(acc.exact_fidelity),
                        fmt_f(acc.deviation),
                    ])
                })
                .collect::<Result<_>>()?;
            let mut w = csv::Writer::from_writer(make_writer(&config.out)?);
            w.write_record([
                "p",
                "m",
                "closed_form",
                "intact_pair_fidelity",
                "exact_fidelity",
                "deviation",
            ])
            .map_err(csv_error)?;
            for row in rows {
                w.write_record(&row).map_err(csv_error)?;
            }
            w.flush()?;
        }
    }
    Ok(())
}

/// Execute the configured experiment and emit its artifact (CSV to the
/// output path, or stdout when none is given).
pub fn run(config: &RunConfig) -> Result<()> {
    match config.kind {
        ExperimentKind::Trace => write_trace_csv(config),
        ExperimentKind::Purify => run_purify(config),
        ExperimentKind::Pdc => run_pdc(config),
        ExperimentKind::Sweep => run_sweep(config),
    }
}

/// Purification input for the configured noise channel, exposed so callers
/// can inspect the exact ensemble the `purify` experiment runs on.
pub fn purify_input(config: &RunConfig) -> Result<MixedState> {
    bell_mixture_channel(&ideal_hyper_pair(), &config.noise)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn empty_config_yields_defaults() {
        let config = parse_config("").unwrap();
        assert_eq!(config.kind, ExperimentKind::Purify);
        assert_eq!(config.noise, BellMixtureParams::noiseless());
        assert_abs_diff_eq!(config.drift.phi, 0.0);
        assert_abs_diff_eq!(config.pdc.r, 1.0);
        assert_abs_diff_eq!(config.pdc.pump_phase, 0.0);
        assert_abs_diff_eq!(config.e, 0.0);
        assert_abs_diff_eq!(config.m, 0.0);
    }

    #[test]
    fn empty_noise_section_defaults_to_noiseless() {
        let config = parse_config("[noise]\n").unwrap();
        assert_eq!(config.noise, BellMixtureParams::noiseless());
    }

    #[test]
    fn full_noise_section_accepted() {
        let config = parse_config(
            "[noise]\nalpha = 0.7\nbeta = 0.1\ndelta = 0.1\neta = 0.1\n",
        )
        .unwrap();
        assert_abs_diff_eq!(config.noise.alpha, 0.7);
    }

    #[test]
    fn simplex_violation_names_the_section() {
        let err = parse_config("[noise]\nalpha = 0.7\nbeta = 0.7\n").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("[noise]"), "diagnostic was: {msg}");
        assert!(msg.contains("must equal 1"), "diagnostic was: {msg}");
    }

    #[test]
    fn unknown_key_is_reported() {
        let err = parse_config("[noise]\nalpa = 0.7\n").unwrap_err();
        assert!(err.to_string().contains("alpa"), "got: {err}");
    }

    #[test]
    fn kind_and_sweep_parsing() {
        let config = parse_config(
            "kind = \"sweep\"\n[sweep]\nparameter = \"e\"\nstart = 0.0\nstop = 1.0\nstep = 0.1\n",
        )
        .unwrap();
        assert_eq!(config.kind, ExperimentKind::Sweep);
        match config.sweep {
            SweepSpec::ErrorRate(grid) => assert_eq!(grid.values().len(), 11),
            other => panic!("unexpected sweep {other:?}"),
        }
        assert!(parse_config("kind = \"warp\"").is_err());
        assert!(parse_config("[sweep]\nparameter = \"e\"\nstep = -0.1").is_err());
    }

    #[test]
    fn pm_sweep_grid_dimensions() {
        let config = parse_config(
            "kind = \"sweep\"\n[sweep]\nparameter = \"pm\"\np_start = 0.05\np_stop = 0.1\np_step = 0.05\nm_start = 0.1\nm_stop = 0.5\nm_step = 0.2\n",
        )
        .unwrap();
        match config.sweep {
            SweepSpec::LossGrid { p, m } => {
                assert_eq!(p.values().len(), 2);
                assert_eq!(m.values().len(), 3);
            }
            other => panic!("unexpected sweep {other:?}"),
        }
    }

    #[test]
    fn grid_values_are_inclusive() {
        let grid = Grid::new(0.0, 1.0, 0.1).unwrap();
        let vals = grid.values();
        assert_eq!(vals.len(), 11);
        assert_abs_diff_eq!(vals[10], 1.0, epsilon = 1e-9);
    }

    #[test]
    fn sweep_output_is_deterministic() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("sweep.csv");
        let config = RunConfig {
            kind: ExperimentKind::Sweep,
            sweep: SweepSpec::ErrorRate(Grid::new(0.0, 0.4, 0.2).unwrap()),
            out: Some(out.clone()),
            ..RunConfig::default()
        };
        run(&config).unwrap();
        let first = std::fs::read(&out).unwrap();
        run(&config).unwrap();
        let second = std::fs::read(&out).unwrap();
        assert_eq!(first, second);
        assert_eq!(first.iter().filter(|&&b| b == b'\n').count(), 4);
    }

    #[test]
    fn purify_csv_probability_column_sums_to_one() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("purify.csv");
        let config = RunConfig {
            kind: ExperimentKind::Purify,
            noise: BellMixtureParams::new(0.4, 0.3, 0.2, 0.1).unwrap(),
            out: Some(out.clone()),
            ..RunConfig::default()
        };
        run(&config).unwrap();
        let text = std::fs::read_to_string(&out).unwrap();
        let total: f64 = text
            .lines()
            .skip(1)
            .map(|line| line.split(',').nth(2).unwrap().parse::<f64>().unwrap())
            .sum();
        assert_abs_diff_eq!(total, 1.0, epsilon = 1e-9);
    }
}
