//! Python bindings for the purification simulator. The module mirrors the
//! high-level experiment API: circuit traces, single-pair purification
//! under Bell-diagonal noise and drift, the lossy down-conversion pipeline,
//! the closed-form predictions with their oracles, and the swapping table.

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

use depp_sim as core;
use depp_sim::runner;

fn err(e: core::SimError) -> PyErr {
    PyValueError::new_err(e.to_string())
}

/// One detection pattern of a purification report.
#[pyclass(frozen, get_all)]
#[derive(Clone)]
struct PatternReport {
    pattern: String,
    classification: String,
    probability: f64,
    fidelity: Option<f64>,
    purity: Option<f64>,
    phase: Option<f64>,
    compensated_fidelity: Option<f64>,
}

/// Both fidelity accountings of the lossy pipeline.
#[pyclass(frozen, get_all)]
#[derive(Clone)]
struct LossAccounting {
    intact_pair_fidelity: f64,
    exact_fidelity: f64,
    closed_form: f64,
    deviation: f64,
}

/// Outcome report of a purification or pipeline run.
#[pyclass(frozen, get_all)]
#[derive(Clone)]
struct PurificationReport {
    patterns: Vec<PatternReport>,
    accepted_probability: f64,
    accepted_fidelity: f64,
    accepted_fidelity_compensated: f64,
    rejected_probability: f64,
    four_mode_probability: f64,
    branch_contributions: Vec<(String, f64)>,
    loss_accounting: Option<LossAccounting>,
}

impl From<core::PurificationReport> for PurificationReport {
    fn from(report: core::PurificationReport) -> PurificationReport {
        PurificationReport {
            patterns: report
                .patterns
                .iter()
                .map(|p| PatternReport {
                    pattern: p.pattern.to_string(),
                    classification: p.class.label().to_string(),
                    probability: p.probability,
                    fidelity: p.fidelity,
                    purity: p.purity,
                    phase: p.phase,
                    compensated_fidelity: p.compensated_fidelity,
                })
                .collect(),
            accepted_probability: report.accepted_probability,
            accepted_fidelity: report.accepted_fidelity,
            accepted_fidelity_compensated: report.accepted_fidelity_compensated,
            rejected_probability: report.rejected_probability,
            four_mode_probability: report.four_mode_probability,
            branch_contributions: report.branch_contributions,
            loss_accounting: report.loss_accounting.map(|acc| LossAccounting {
                intact_pair_fidelity: acc.intact_pair_fidelity,
                exact_fidelity: acc.exact_fidelity,
                closed_form: acc.closed_form,
                deviation: acc.deviation,
            }),
        }
    }
}

/// Stage-by-stage amplitudes of the ideal input through the circuit:
/// list of (stage label, list of (mode term, (re, im))).
#[pyfunction]
fn trace_evolution() -> PyResult<Vec<(String, Vec<(String, (f64, f64))>)>> {
    let stages = core::trace_evolution(&core::ideal_hyper_pair()).map_err(err)?;
    Ok(stages
        .into_iter()
        .map(|(label, state)| {
            let basis = state.basis().clone();
            let terms = state
                .terms()
                .map(|(occ, amp)| (occ.render(&basis), (amp.re, amp.im)))
                .collect();
            (label.to_string(), terms)
        })
        .collect())
}

/// Purify the ideal pair after the Bell-diagonal channel (alpha, beta,
/// delta, eta) and a path drift of `phi` radians.
#[pyfunction]
#[pyo3(signature = (alpha, beta, delta, eta, phi = 0.0))]
fn purify(alpha: f64, beta: f64, delta: f64, eta: f64, phi: f64) -> PyResult<PurificationReport> {
    let noise = core::BellMixtureParams::new(alpha, beta, delta, eta).map_err(err)?;
    let drift = core::DriftParams::new(phi).map_err(err)?;
    let mix = core::bell_mixture_channel(&core::ideal_hyper_pair(), &noise).map_err(err)?;
    Ok(core::purify(&mix, &drift).map_err(err)?.into())
}

/// Full lossy-source pipeline: emission probability `p`, per-pair bit-flip
/// probability `e`, per-photon loss `m`.
#[pyfunction]
#[pyo3(signature = (p, e = 0.0, m = 0.0, r = 1.0, pump_phase = 0.0))]
fn pdc_pipeline(p: f64, e: f64, m: f64, r: f64, pump_phase: f64) -> PyResult<PurificationReport> {
    let params = core::PdcParams::new(p, r, pump_phase).map_err(err)?;
    Ok(core::pdc_pipeline(&params, e, m).map_err(err)?.into())
}

/// Closed-form four-mode fidelity under per-pair bit-flip probability `e`.
#[pyfunction]
fn eq9_fidelity(e: f64) -> PyResult<f64> {
    core::eq9_fidelity(e).map_err(err)
}

/// Brute-force four-photon counterpart of `eq9_fidelity`.
#[pyfunction]
fn eq9_oracle(e: f64) -> PyResult<f64> {
    core::eq9_oracle(e).map_err(err)
}

/// Closed-form accepted-pair fidelity under emission probability `p` and
/// per-photon loss `m`.
#[pyfunction]
fn eq10_fidelity(p: f64, m: f64) -> PyResult<f64> {
    core::eq10_fidelity(p, m).map_err(err)
}

/// 4x4 joint Bell-outcome probability table (rows: Alice Phi+, Phi-, Psi+,
/// Psi-; columns: Bob, same order) of the double-error four-mode state.
#[pyfunction]
fn swapping_correlation() -> PyResult<Vec<Vec<f64>>> {
    let params = core::PdcParams::ideal(0.1).map_err(err)?;
    let ensemble = core::two_pair_bitflip_ensemble(&params, 1.0).map_err(err)?;
    let circuit = core::build_depp_circuit();
    let evolved = ensemble.map_states(|s| s.apply(&circuit)).map_err(err)?;
    let outcomes = core::classify_detection(&evolved).map_err(err)?;
    let four = outcomes
        .iter()
        .find(|o| o.class == core::PatternClass::FourMode)
        .ok_or_else(|| PyValueError::new_err("no four-mode outcome"))?;
    let state = four.conditional.branches()[0].state.clone();
    let table = core::swapping_correlation(&state).map_err(err)?;
    Ok(table.iter().map(|row| row.to_vec()).collect())
}

/// Parse a TOML run configuration, returning (kind, output path or None);
/// raises on any validation error with the offending key named.
#[pyfunction]
fn validate_config(text: &str) -> PyResult<(String, Option<String>)> {
    let config = runner::parse_config(text).map_err(err)?;
    let kind = match config.kind {
        runner::ExperimentKind::Trace => "trace",
        runner::ExperimentKind::Purify => "purify",
        runner::ExperimentKind::Pdc => "pdc",
        runner::ExperimentKind::Sweep => "sweep",
    };
    Ok((
        kind.to_string(),
        config.out.map(|p| p.display().to_string()),
    ))
}

#[pymodule]
fn depp_sim_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PatternReport>()?;
    m.add_class::<LossAccounting>()?;
    m.add_class::<PurificationReport>()?;
    m.add_function(wrap_pyfunction!(trace_evolution, m)?)?;
    m.add_function(wrap_pyfunction!(purify, m)?)?;
    m.add_function(wrap_pyfunction!(pdc_pipeline, m)?)?;
    m.add_function(wrap_pyfunction!(eq9_fidelity, m)?)?;
    m.add_function(wrap_pyfunction!(eq9_oracle, m)?)?;
    m.add_function(wrap_pyfunction!(eq10_fidelity, m)?)?;
    m.add_function(wrap_pyfunction!(swapping_correlation, m)?)?;
    m.add_function(wrap_pyfunction!(validate_config, m)?)?;
    Ok(())
}
