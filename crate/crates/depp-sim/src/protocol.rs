//! The purification protocol: circuit construction, stage-by-stage traces,
//! detector-pattern classification, conditional-fidelity reports, and the
//! closed-form error/loss predictions with brute-force oracles.
//!
//! Circuit layout: wave plates on a1 and b1, then the two polarizing beam
//! splitters a1,a2→c1,c2 and b1,b2→d1,d2, then wave plates on c2 and d2.
//! Placing the final plates on c2/d2 (rather than c1/d1) is the unique
//! choice that sends the ideal input to `Φ+⊗(c1d1+c2d2)` while the final
//! plates also undo the polarization flip of bit-flip errors, which emerge
//! on the c2d1/c1d2 patterns.

use std::collections::BTreeMap;
use std::fmt;

use crate::elements::{compose, hwp, pbs};
use crate::error::{Result, SimError};
use crate::fock::{
    reduce_mixture_to_polarization_pair, Basis, Branch, FockState, MixedState, ModeId, ModeMap,
    Occupation, Party, Polarization, Spatial, TwoQubitDensity, C64, PRUNE_EPS,
};
use crate::noise::{
    pair_resolved_loss, photon_loss, spatial_drift, two_pair_bitflip_ensemble, BellKind,
    DriftParams, LossParams,
};
use crate::sources::{PairEmission, PdcParams};

/// Photon count per output spatial label, ordered (c1, c2, d1, d2).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct DetectionPattern {
    counts: [u8; 4],
}

impl DetectionPattern {
    pub const SPATIALS: [Spatial; 4] = [Spatial::C1, Spatial::C2, Spatial::D1, Spatial::D2];

    pub fn new(counts: [u8; 4]) -> DetectionPattern {
        DetectionPattern { counts }
    }

    pub fn counts(&self) -> [u8; 4] {
        self.counts
    }

    pub fn total(&self) -> u32 {
        self.counts.iter().map(|&n| n as u32).sum()
    }

    pub fn class(&self) -> PatternClass {
        let [c1, c2, d1, d2] = self.counts;
        if self.counts == [1, 1, 1, 1] {
            PatternClass::FourMode
        } else if self.total() == 2 && c1 + c2 == 1 && d1 + d2 == 1 {
            PatternClass::PairCoincidence
        } else {
            PatternClass::Rejected
        }
    }

    /// The designated (Alice, Bob) spatial pair of an accepted two-photon
    /// pattern; `None` for anything else.
    pub fn spatial_pair(&self) -> Option<(Spatial, Spatial)> {
        if self.class() != PatternClass::PairCoincidence {
            return None;
        }
        let alice = if self.counts[0] == 1 { Spatial::C1 } else { Spatial::C2 };
        let bob = if self.counts[2] == 1 { Spatial::D1 } else { Spatial::D2 };
        Some((alice, bob))
    }
}

impl fmt::Display for DetectionPattern {
    /// Compact label: spatial labels repeated per photon, e.g. `c1d1`,
    /// `c1c2d1d2`, `c1c1d2`; the empty pattern renders as `vac`.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.total() == 0 {
            return write!(f, "vac");
        }
        for (spatial, &n) in Self::SPATIALS.iter().zip(&self.counts) {
            for _ in 0..n {
                write!(f, "{spatial}")?;
            }
        }
        Ok(())
    }
}

/// Post-selection class of a detection pattern.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PatternClass {
    /// One photon in each of the four output spatial labels.
    FourMode,
    /// Exactly one photon on one c label and one on one d label.
    PairCoincidence,
    /// Everything else: wrong totals, multi-occupancy, same-party doubles.
    Rejected,
}

impl PatternClass {
    pub fn label(self) -> &'static str {
        match self {
            PatternClass::FourMode => "four-mode",
            PatternClass::PairCoincidence => "pair-coincidence",
            PatternClass::Rejected => "rejected",
        }
    }
}

/// One detection pattern with its probability and the conditional
/// (renormalized per branch, sub-weighted) post-measurement ensemble.
#[derive(Debug, Clone)]
pub struct PatternOutcome {
    pub pattern: DetectionPattern,
    pub class: PatternClass,
    pub probability: f64,
    pub conditional: MixedState,
}

/// Per-pattern entry of a [`PurificationReport`]. Density-matrix fields are
/// present only for accepted two-photon patterns.
#[derive(Debug, Clone)]
pub struct PatternReport {
    pub pattern: DetectionPattern,
    pub class: PatternClass,
    pub probability: f64,
    pub density: Option<TwoQubitDensity>,
    pub fidelity: Option<f64>,
    pub purity: Option<f64>,
    /// Relative phase θ of the HH/VV coherence; compensation applies e^{−iθ}.
    pub phase: Option<f64>,
    pub compensated_fidelity: Option<f64>,
}

/// Comparison of the lossy-source fidelity accountings: the closed-form
/// column counts only intact surviving pairs in the numerator, the exact
/// column additionally credits cross-pair survivors with their mixed-state
/// overlap. Their difference is `0.5·p²m²(1−m)²` over the shared
/// denominator.
#[derive(Debug, Clone, Copy)]
pub struct LossAccounting {
    /// Accepted weight counted at fidelity 1 for intact pairs only, over
    /// total accepted weight.
    pub intact_pair_fidelity: f64,
    /// Weighted fidelity over every accepted branch.
    pub exact_fidelity: f64,
    /// The closed-form prediction for the intact-pair accounting.
    pub closed_form: f64,
    /// `exact_fidelity − intact_pair_fidelity`.
    pub deviation: f64,
}

/// Full outcome report of a purification run.
#[derive(Debug, Clone)]
pub struct PurificationReport {
    pub patterns: Vec<PatternReport>,
    pub accepted_probability: f64,
    /// Weighted conditional fidelity over accepted patterns (0 if none).
    pub accepted_fidelity: f64,
    pub accepted_fidelity_compensated: f64,
    pub rejected_probability: f64,
    pub four_mode_probability: f64,
    /// Accepted weight per source-branch tag, sorted by tag.
    pub branch_contributions: Vec<(String, f64)>,
    pub loss_accounting: Option<LossAccounting>,
}

fn circuit_stages() -> [ModeMap; 3] {
    let basis = Basis::transmission();
    let plates_in = compose(&[
        hwp(&basis, Spatial::A1).expect("static circuit"),
        hwp(&basis, Spatial::B1).expect("static circuit"),
    ])
    .expect("static circuit");
    let pbs_a = pbs(&basis, Spatial::A1, Spatial::A2, Spatial::C1, Spatial::C2)
        .expect("static circuit");
    let pbs_b = pbs(
        pbs_a.output(),
        Spatial::B1,
        Spatial::B2,
        Spatial::D1,
        Spatial::D2,
    )
    .expect("static circuit");
    let splitters = compose(&[pbs_a, pbs_b]).expect("static circuit");
    let out_basis = splitters.output().clone();
    let plates_out = compose(&[
        hwp(&out_basis, Spatial::C2).expect("static circuit"),
        hwp(&out_basis, Spatial::D2).expect("static circuit"),
    ])
    .expect("static circuit");
    [plates_in, splitters, plates_out]
}

/// The full purification circuit as a single mode map from the eight
/// transmission modes to the eight detection modes.
pub fn build_depp_circuit() -> ModeMap {
    let stages = circuit_stages();
    compose(&stages).expect("static circuit")
}

/// Stage labels of [`trace_evolution`], in order.
pub const STAGE_LABELS: [&str; 4] = ["input", "after-hwp1-hwp2", "after-pbs", "after-hwp3-hwp4"];

/// Run the input through the circuit one stage at a time, returning the
/// input and the state after each of the three stages.
pub fn trace_evolution(input: &FockState) -> Result<Vec<(&'static str, FockState)>> {
    let stages = circuit_stages();
    let mut out = vec![(STAGE_LABELS[0], input.clone())];
    let mut state = input.clone();
    for (label, map) in STAGE_LABELS[1..].iter().zip(&stages) {
        state = state.apply(map)?;
        out.push((label, state.clone()));
    }
    Ok(out)
}

/// Project every branch onto photon-number sectors per output spatial
/// label. Polarization coherence within each sector is retained. The
/// returned outcomes cover all patterns with nonzero weight; their
/// probabilities sum to the input's total weight.
pub fn classify_detection(mixture: &MixedState) -> Result<Vec<PatternOutcome>> {
    let mut by_pattern: BTreeMap<[u8; 4], Vec<Branch>> = BTreeMap::new();
    for branch in mixture.branches() {
        if branch.weight < PRUNE_EPS {
            continue;
        }
        let basis = branch.state.basis().clone();
        let mut sectors: BTreeMap<[u8; 4], BTreeMap<Occupation, C64>> = BTreeMap::new();
        for (occ, amp) in branch.state.terms() {
            let mut counts = [0u8; 4];
            for (i, &n) in occ.counts().iter().enumerate() {
                if n == 0 {
                    continue;
                }
                let spatial = basis.modes()[i].spatial;
                let slot = DetectionPattern::SPATIALS
                    .iter()
                    .position(|&s| s == spatial)
                    .ok_or_else(|| {
                        SimError::Occupancy(format!(
                            "photon found in non-detection mode {}",
                            basis.modes()[i]
                        ))
                    })?;
                counts[slot] += n;
            }
            sectors
                .entry(counts)
                .or_default()
                .insert(occ.clone(), *amp);
        }
        for (counts, terms) in sectors {
            let projected = FockState::from_terms(basis.clone(), terms);
            let weight = branch.weight * projected.norm_sqr();
            if weight < PRUNE_EPS {
                continue;
            }
            by_pattern
                .entry(counts)
                .or_default()
                .push(Branch::new(weight, projected.normalized()?, branch.tag.clone()));
        }
    }
    by_pattern
        .into_iter()
        .map(|(counts, branches)| {
            let pattern = DetectionPattern::new(counts);
            let probability = branches.iter().map(|b| b.weight).sum();
            Ok(PatternOutcome {
                pattern,
                class: pattern.class(),
                probability,
                conditional: MixedState::conditioned(branches)?,
            })
        })
        .collect()
}

fn party_photon_counts(occ: &Occupation, basis: &Basis) -> (u32, u32) {
    let mut a = 0;
    let mut b = 0;
    for (i, &n) in occ.counts().iter().enumerate() {
        match basis.modes()[i].party() {
            Party::A => a += n as u32,
            Party::B => b += n as u32,
        }
    }
    (a, b)
}

/// Run a single-pair polarization mixture through drift and circuit, then
/// classify and reduce every accepted pattern to its polarization pair.
/// Reports the conditional fidelity before and after compensating the
/// recorded per-pattern HH/VV phase.
pub fn purify(input: &MixedState, drift: &DriftParams) -> Result<PurificationReport> {
    for branch in input.branches() {
        let basis = branch.state.basis();
        for (occ, _) in branch.state.terms() {
            let (a, b) = party_photon_counts(occ, basis);
            if a != 1 || b != 1 {
                return Err(SimError::Occupancy(format!(
                    "purify expects one photon per party, found ({a}, {b}) in branch {}",
                    branch.tag
                )));
            }
        }
    }
    let circuit = build_depp_circuit();
    let evolved = input.map_states(|s| spatial_drift(s, drift)?.apply(&circuit))?;
    let outcomes = classify_detection(&evolved)?;
    assemble_report(outcomes, None)
}

fn assemble_report(
    outcomes: Vec<PatternOutcome>,
    loss_paper: Option<(f64, f64)>, // (p, m) for the closed-form column
) -> Result<PurificationReport> {
    let mut patterns = Vec::new();
    let mut accepted = 0.0;
    let mut fid_acc = 0.0;
    let mut comp_acc = 0.0;
    let mut rejected = 0.0;
    let mut four_mode = 0.0;
    let mut contributions: BTreeMap<String, f64> = BTreeMap::new();
    let mut intact_weight = 0.0;
    for outcome in outcomes {
        let mut report = PatternReport {
            pattern: outcome.pattern,
            class: outcome.class,
            probability: outcome.probability,
            density: None,
            fidelity: None,
            purity: None,
            phase: None,
            compensated_fidelity: None,
        };
        match outcome.class {
            PatternClass::PairCoincidence => {
                let (alice, bob) = outcome.pattern.spatial_pair().expect("accepted pattern");
                let rho = reduce_mixture_to_polarization_pair(&outcome.conditional, alice, bob)?;
                let fidelity = rho.fidelity_phi_plus();
                let compensated = rho.fidelity_phi_plus_compensated();
                accepted += outcome.probability;
                fid_acc += outcome.probability * fidelity;
                comp_acc += outcome.probability * compensated;
                for b in outcome.conditional.branches() {
                    *contributions.entry(b.tag.clone()).or_default() += b.weight;
                    // intact-pair accounting: single surviving pairs and
                    // two-pair events that lost one whole pair
                    if b.tag.starts_with("single") || b.tag.ends_with("intact-pair-kept") {
                        intact_weight += b.weight;
                    }
                }
                report.fidelity = Some(fidelity);
                report.purity = Some(rho.purity());
                report.phase = Some(rho.hh_vv_phase());
                report.compensated_fidelity = Some(compensated);
                report.density = Some(rho);
            }
            PatternClass::FourMode => four_mode += outcome.probability,
            PatternClass::Rejected => rejected += outcome.probability,
        }
        patterns.push(report);
    }
    let exact_fidelity = if accepted > PRUNE_EPS { fid_acc / accepted } else { 0.0 };
    let loss_accounting = match loss_paper {
        Some((p, m)) if accepted > PRUNE_EPS => Some(LossAccounting {
            intact_pair_fidelity: intact_weight / accepted,
            exact_fidelity,
            closed_form: eq10_fidelity(p, m)?,
            deviation: exact_fidelity - intact_weight / accepted,
        }),
        _ => None,
    };
    Ok(PurificationReport {
        patterns,
        accepted_probability: accepted,
        accepted_fidelity: exact_fidelity,
        accepted_fidelity_compensated: if accepted > PRUNE_EPS {
            comp_acc / accepted
        } else {
            0.0
        },
        rejected_probability: rejected,
        four_mode_probability: four_mode,
        branch_contributions: contributions.into_iter().collect(),
        loss_accounting,
    })
}

/// Closed-form conditional fidelity of the four-mode two-pair events under
/// per-pair bit-flip probability `e`:
/// `F = ((1−e)² + e²/4) / ((1−e)² + e²)`.
pub fn eq9_fidelity(e: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&e) {
        return Err(SimError::InvalidParameter(format!(
            "bit-flip probability e must be in [0, 1], got {e}"
        )));
    }
    let q = (1.0 - e) * (1.0 - e);
    Ok((q + e * e / 4.0) / (q + e * e))
}

/// Brute-force counterpart of [`eq9_fidelity`]: build the two-pair bit-flip
/// ensemble, run the circuit, condition on the four-mode coincidence and
/// reduce the (c1, d1) pair. Matches the closed form to working precision.
pub fn eq9_oracle(e: f64) -> Result<f64> {
    let params = PdcParams::ideal(0.1)?; // normalized state is independent of p
    let ensemble = two_pair_bitflip_ensemble(&params, e)?;
    let circuit = build_depp_circuit();
    let evolved = ensemble.map_states(|s| s.apply(&circuit))?;
    let outcomes = classify_detection(&evolved)?;
    let four = outcomes
        .iter()
        .find(|o| o.class == PatternClass::FourMode)
        .ok_or(SimError::ZeroState)?;
    let rho = reduce_mixture_to_polarization_pair(&four.conditional, Spatial::C1, Spatial::D1)?;
    Ok(rho.fidelity_phi_plus())
}

/// Closed-form conditional fidelity of accepted two-photon events with
/// source emission probability `p` and per-photon loss `m`:
/// `F′ = (p(1−m)² + 2p²m²(1−m)²) / (p(1−m)² + 4p²m²(1−m)²)`.
/// Independent of the bit-flip rate. Undefined at `m = 1`.
pub fn eq10_fidelity(p: f64, m: f64) -> Result<f64> {
    if !(p > 0.0 && p <= 1.0) {
        return Err(SimError::InvalidParameter(format!(
            "emission probability p must be in (0, 1], got {p}"
        )));
    }
    if !(0.0..1.0).contains(&m) {
        return Err(SimError::InvalidParameter(format!(
            "loss probability m must be in [0, 1) for the closed form, got {m}"
        )));
    }
    let keep = (1.0 - m) * (1.0 - m);
    let cross = p * p * m * m * keep;
    Ok((p * keep + 2.0 * cross) / (p * keep + 4.0 * cross))
}

/// Full lossy-source chain: emission ensemble (vacuum / one pair / two
/// pairs) with per-pair bit-flip probability `e`, per-photon loss `m` with
/// the two pairs treated as distinguishable emissions, then circuit and
/// classification. The report's [`LossAccounting`] carries both fidelity
/// columns and the closed-form comparison.
pub fn pdc_pipeline(params: &PdcParams, e: f64, m: f64) -> Result<PurificationReport> {
    if !(0.0..=1.0).contains(&e) {
        return Err(SimError::InvalidParameter(format!(
            "bit-flip probability e must be in [0, 1], got {e}"
        )));
    }
    let loss = LossParams::new(m)?;
    let p = params.p;
    let s = PairEmission::from_params(params);
    let sp = s.bitflipped();
    let mut branches = vec![Branch::new(
        1.0 - p - p * p,
        FockState::vacuum(Basis::transmission()),
        "vacuum",
    )];
    // one pair: bit-flip cases, then the exact loss channel (identical to
    // pair-resolved loss when only one pair is present)
    for (we, emission, tag) in [(1.0 - e, &s, "single|no-error"), (e, &sp, "single|one-error")] {
        if we <= 0.0 {
            continue;
        }
        let lossy = photon_loss(&MixedState::pure(emission.pair_state()?, tag), &loss)?;
        for b in lossy.branches() {
            branches.push(Branch::new(p * we * b.weight, b.state.clone(), b.tag.clone()));
        }
    }
    // two pairs: bit-flip cases × pair-resolved loss
    for (we, pair1, pair2, tag) in [
        ((1.0 - e) * (1.0 - e), &s, &s, "two-pair|no-error"),
        (2.0 * e * (1.0 - e), &s, &sp, "two-pair|one-error"),
        (e * e, &sp, &sp, "two-pair|two-error"),
    ] {
        if we <= 0.0 {
            continue;
        }
        for (w, state, class) in pair_resolved_loss(pair1, pair2, &loss)? {
            branches.push(Branch::new(
                p * p * we * w,
                state,
                format!("{tag}|{}", class.label()),
            ));
        }
    }
    let source = MixedState::ensemble(branches)?;
    let circuit = build_depp_circuit();
    let evolved = source.map_states(|st| st.apply(&circuit))?;
    let outcomes = classify_detection(&evolved)?;
    let closed_form_args = if m < 1.0 { Some((p, m)) } else { None };
    assemble_report(outcomes, closed_form_args)
}

fn bell_pair_state(basis: &Basis, s1: Spatial, s2: Spatial, kind: BellKind) -> Result<FockState> {
    use Polarization::{H, V};
    let vac = FockState::vacuum(basis.clone());
    let mk = |p1: Polarization, p2: Polarization| -> Result<FockState> {
        vac.create(ModeId::new(s1, p1))?.create(ModeId::new(s2, p2))
    };
    let ((p1, p2), (q1, q2), sign) = match kind {
        BellKind::PhiPlus => ((H, H), (V, V), 1.0),
        BellKind::PhiMinus => ((H, H), (V, V), -1.0),
        BellKind::PsiPlus => ((H, V), (V, H), 1.0),
        BellKind::PsiMinus => ((H, V), (V, H), -1.0),
    };
    let amp = C64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
    FockState::superpose(&[(amp, &mk(p1, p2)?), (amp * sign, &mk(q1, q2)?)])
}

/// Joint probability table of a Bell-basis polarization measurement on
/// Alice's (c1, c2) photons against the Bell decomposition of Bob's
/// (d1, d2) photons, both ordered (Φ+, Φ−, Ψ+, Ψ−). Requires a normalized
/// four-mode coincident state.
pub fn swapping_correlation(state: &FockState) -> Result<[[f64; 4]; 4]> {
    if !state.is_normalized() {
        return Err(SimError::InvalidParameter(
            "swapping_correlation expects a normalized state".into(),
        ));
    }
    let basis = state.basis().clone();
    for (occ, _) in state.terms() {
        let mut counts = [0u32; 4];
        for (i, &n) in occ.counts().iter().enumerate() {
            if n == 0 {
                continue;
            }
            let slot = DetectionPattern::SPATIALS
                .iter()
                .position(|&sp| sp == basis.modes()[i].spatial)
                .ok_or_else(|| {
                    SimError::Occupancy(format!(
                        "photon found in non-detection mode {}",
                        basis.modes()[i]
                    ))
                })?;
            counts[slot] += n as u32;
        }
        if counts != [1, 1, 1, 1] {
            return Err(SimError::Occupancy(format!(
                "expected one photon per output spatial label, got ({}, {}, {}, {})",
                counts[0], counts[1], counts[2], counts[3]
            )));
        }
    }
    let mut table = [[0.0; 4]; 4];
    for (i, &ka) in BellKind::ALL.iter().enumerate() {
        let alice = bell_pair_state(&basis, Spatial::C1, Spatial::C2, ka)?;
        for (j, &kb) in BellKind::ALL.iter().enumerate() {
            let bob = bell_pair_state(&basis, Spatial::D1, Spatial::D2, kb)?;
            let joint = alice.product(&bob)?;
            table[i][j] = joint.inner(state)?.norm_sqr();
        }
    }
    Ok(table)
}
