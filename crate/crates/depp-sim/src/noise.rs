//! Channel models: Bell-diagonal polarization noise, spatial phase drift,
//! pair-level bit-flip ensembles for the PDC source, and photon loss.
//!
//! Two loss models are provided. [`photon_loss`] is the exact
//! beam-splitter-to-environment channel on the occupation basis, with the
//! environment traced out mode by mode. [`pair_resolved_loss`] applies the
//! same per-photon statistics at the level of the two emission events, so
//! that the two pairs stay distinguishable while photons are being lost;
//! this is the accounting behind the closed-form lossy fidelity, and the
//! two models differ on four-photon states because stimulated-emission
//! terms carry coherent bosonic enhancements.

use std::collections::BTreeMap;

use crate::elements::{compose, hwp, phase_shift};
use crate::error::{Result, SimError};
use crate::fock::{
    sqrt_binomial, Basis, Branch, FockState, MixedState, ModeId, Occupation, Party, Polarization,
    Spatial, C64, PRUNE_EPS, TOL,
};
use crate::sources::{PairEmission, PdcParams};

/// Bell-diagonal channel weights (α, β, δ, η) for (Φ+, Φ−, Ψ+, Ψ−).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BellMixtureParams {
    pub alpha: f64,
    pub beta: f64,
    pub delta: f64,
    pub eta: f64,
}

impl BellMixtureParams {
    pub fn new(alpha: f64, beta: f64, delta: f64, eta: f64) -> Result<BellMixtureParams> {
        let params = BellMixtureParams {
            alpha,
            beta,
            delta,
            eta,
        };
        for (name, v) in params.named() {
            if !(0.0..=1.0).contains(&v) {
                return Err(SimError::InvalidParameter(format!(
                    "{name} must be in [0, 1], got {v}"
                )));
            }
        }
        let total = alpha + beta + delta + eta;
        if (total - 1.0).abs() > TOL {
            return Err(SimError::InvalidParameter(format!(
                "alpha + beta + delta + eta must equal 1, got {total}"
            )));
        }
        Ok(params)
    }

    pub fn noiseless() -> BellMixtureParams {
        BellMixtureParams {
            alpha: 1.0,
            beta: 0.0,
            delta: 0.0,
            eta: 0.0,
        }
    }

    fn named(&self) -> [(&'static str, f64); 4] {
        [
            ("alpha", self.alpha),
            ("beta", self.beta),
            ("delta", self.delta),
            ("eta", self.eta),
        ]
    }
}

/// The four Bell error classes of the polarization channel.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BellKind {
    PhiPlus,
    PhiMinus,
    PsiPlus,
    PsiMinus,
}

impl BellKind {
    pub const ALL: [BellKind; 4] = [
        BellKind::PhiPlus,
        BellKind::PhiMinus,
        BellKind::PsiPlus,
        BellKind::PsiMinus,
    ];

    pub fn label(self) -> &'static str {
        match self {
            BellKind::PhiPlus => "phi+",
            BellKind::PhiMinus => "phi-",
            BellKind::PsiPlus => "psi+",
            BellKind::PsiMinus => "psi-",
        }
    }
}

/// Spatial phase drift `φ = k·ΔL` between the two paths.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DriftParams {
    pub phi: f64,
}

impl DriftParams {
    pub fn new(phi: f64) -> Result<DriftParams> {
        if !phi.is_finite() {
            return Err(SimError::InvalidParameter("drift phase must be finite".into()));
        }
        Ok(DriftParams { phi })
    }

    /// Drift from wave vector and path-length difference.
    pub fn from_path_difference(wave_vector: f64, delta_l: f64) -> Result<DriftParams> {
        DriftParams::new(wave_vector * delta_l)
    }

    pub fn none() -> DriftParams {
        DriftParams { phi: 0.0 }
    }

    /// Phase reduced to [0, 2π) for reporting.
    pub fn phi_mod_2pi(&self) -> f64 {
        self.phi.rem_euclid(std::f64::consts::TAU)
    }
}

/// Per-photon loss probability.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossParams {
    pub m: f64,
}

impl LossParams {
    pub fn new(m: f64) -> Result<LossParams> {
        if !(0.0..=1.0).contains(&m) {
            return Err(SimError::InvalidParameter(format!(
                "loss probability m must be in [0, 1], got {m}"
            )));
        }
        Ok(LossParams { m })
    }
}

fn pauli_map(basis: &Basis, kind: BellKind) -> Result<Option<crate::fock::ModeMap>> {
    // Bell-diagonal noise realized by Pauli operators on party B only:
    // identity, Z_B, X_B, Z_B·X_B.
    let b_v = [
        ModeId::new(Spatial::B1, Polarization::V),
        ModeId::new(Spatial::B2, Polarization::V),
    ];
    let z = || phase_shift(basis, &b_v, std::f64::consts::PI);
    let x = || -> Result<_> {
        compose(&[hwp(basis, Spatial::B1)?, hwp(basis, Spatial::B2)?])
    };
    Ok(match kind {
        BellKind::PhiPlus => None,
        BellKind::PhiMinus => Some(z()?),
        BellKind::PsiPlus => Some(x()?),
        BellKind::PsiMinus => Some(compose(&[x()?, z()?])?),
    })
}

/// Turn the pure hyperentangled input into the Bell-diagonal mixture with
/// weights (α, β, δ, η). Noise acts on party B's polarization only; spatial
/// amplitudes are untouched. Zero-weight branches are omitted.
pub fn bell_mixture_channel(input: &FockState, params: &BellMixtureParams) -> Result<MixedState> {
    if !input.is_normalized() {
        return Err(SimError::InvalidParameter(
            "bell_mixture_channel expects a normalized input state".into(),
        ));
    }
    let basis = input.basis().clone();
    let weights = [params.alpha, params.beta, params.delta, params.eta];
    let mut branches = Vec::new();
    for (kind, weight) in BellKind::ALL.into_iter().zip(weights) {
        if weight <= 0.0 {
            continue;
        }
        let state = match pauli_map(&basis, kind)? {
            None => input.clone(),
            Some(map) => input.apply(&map)?,
        };
        branches.push(Branch::new(weight, state, kind.label()));
    }
    MixedState::ensemble(branches)
}

/// Apply the path-length drift: the lower path (a2 modes) acquires the
/// full relative phase `e^{iφ}`. Only the relative phase between the paths
/// is observable; pinning it to Alice's lower path is a reporting
/// convention.
pub fn spatial_drift(state: &FockState, params: &DriftParams) -> Result<FockState> {
    let modes = [
        ModeId::new(Spatial::A2, Polarization::H),
        ModeId::new(Spatial::A2, Polarization::V),
    ];
    let map = phase_shift(state.basis(), &modes, params.phi)?;
    state.apply(&map)
}

/// Pair-level bit-flip ensemble for the four-photon emission: with error
/// probability `e` per pair, the branches are `S²|0⟩` with `(1−e)²`,
/// `S·S′|0⟩` with `2e(1−e)` and `S′²|0⟩` with `e²`, where `S′` is the
/// emission polynomial with party B's polarization flipped.
pub fn two_pair_bitflip_ensemble(params: &PdcParams, e: f64) -> Result<MixedState> {
    if !(0.0..=1.0).contains(&e) {
        return Err(SimError::InvalidParameter(format!(
            "bit-flip probability e must be in [0, 1], got {e}"
        )));
    }
    let s = PairEmission::from_params(params);
    let sp = s.bitflipped();
    let vac = FockState::vacuum(Basis::transmission());
    let build = |first: &PairEmission, second: &PairEmission| -> Result<FockState> {
        second.apply_to(&first.apply_to(&vac)?)?.normalized()
    };
    let mut branches = Vec::new();
    let cases = [
        ((1.0 - e) * (1.0 - e), (&s, &s), "no-error"),
        (2.0 * e * (1.0 - e), (&s, &sp), "one-error"),
        (e * e, (&sp, &sp), "two-error"),
    ];
    for (weight, (first, second), tag) in cases {
        if weight <= 0.0 {
            continue;
        }
        branches.push(Branch::new(weight, build(first, second)?, tag));
    }
    MixedState::ensemble(branches)
}

/// Exact per-photon loss channel: every mode is coupled to its own
/// environment through a beam splitter of transmissivity `1−m` and the
/// environment is traced out. Output branches are labeled by the lost
/// occupation pattern; total weight is preserved.
pub fn photon_loss(mixture: &MixedState, params: &LossParams) -> Result<MixedState> {
    let m = params.m;
    if m == 0.0 {
        return Ok(mixture.clone());
    }
    let mut branches = Vec::new();
    for branch in mixture.branches() {
        let basis = branch.state.basis().clone();
        // group Kraus outcomes by the environment occupation vector
        let mut outcomes: BTreeMap<Occupation, BTreeMap<Occupation, C64>> = BTreeMap::new();
        for (occ, amp) in branch.state.terms() {
            let counts = occ.counts();
            let mut lost = vec![0u8; counts.len()];
            loop {
                let mut factor = 1.0;
                for (k, &n) in counts.iter().enumerate() {
                    let l = lost[k];
                    factor *= sqrt_binomial(n, l)
                        * m.powf(l as f64 / 2.0)
                        * (1.0 - m).powf((n - l) as f64 / 2.0);
                }
                if factor.abs() >= PRUNE_EPS {
                    let kept: Vec<u8> = counts
                        .iter()
                        .zip(&lost)
                        .map(|(&n, &l)| n - l)
                        .collect();
                    let slot = outcomes
                        .entry(Occupation::from_counts(lost.clone()))
                        .or_default();
                    let entry = slot
                        .entry(Occupation::from_counts(kept))
                        .or_insert(C64::default());
                    *entry += amp * factor;
                }
                // next mixed-radix lost vector bounded by counts
                let mut k = 0;
                loop {
                    if k == counts.len() {
                        break;
                    }
                    if lost[k] < counts[k] {
                        lost[k] += 1;
                        break;
                    }
                    lost[k] = 0;
                    k += 1;
                }
                if k == counts.len() {
                    break;
                }
            }
        }
        for (lost, terms) in outcomes {
            let state = FockState::from_terms(basis.clone(), terms);
            let weight = branch.weight * state.norm_sqr();
            if weight < PRUNE_EPS {
                continue;
            }
            let lost_label = lost.render(&basis);
            let tag = if lost_label == "vac" {
                format!("{}|loss[none]", branch.tag)
            } else {
                format!("{}|loss[{}]", branch.tag, lost_label.replace(' ', "+"))
            };
            branches.push(Branch::new(weight, state.normalized()?, tag));
        }
    }
    if mixture.is_conditioned() {
        MixedState::conditioned(branches)
    } else {
        MixedState::ensemble(branches)
    }
}

/// Outcome class of a survival pattern over the four photons of a two-pair
/// emission, identified by which emission event each photon belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SurvivalClass {
    /// All four photons arrive.
    AllSurvive,
    /// One pair is lost entirely; the other arrives intact.
    IntactPairKept,
    /// One photon from each pair is lost, on opposite parties.
    CrossPairKept,
    /// The two survivors sit on the same party's side.
    SamePartyKept,
    /// Exactly one photon lost.
    ThreeSurvive,
    /// Exactly one photon survives.
    OneSurvives,
    /// Everything lost.
    NoneSurvive,
}

impl SurvivalClass {
    pub fn label(self) -> &'static str {
        match self {
            SurvivalClass::AllSurvive => "all-survive",
            SurvivalClass::IntactPairKept => "intact-pair-kept",
            SurvivalClass::CrossPairKept => "cross-pair-kept",
            SurvivalClass::SamePartyKept => "same-party-kept",
            SurvivalClass::ThreeSurvive => "three-survive",
            SurvivalClass::OneSurvives => "one-survives",
            SurvivalClass::NoneSurvive => "none-survive",
        }
    }
}

fn classify_pattern(survive: [bool; 4]) -> SurvivalClass {
    // order: [pair1 A, pair1 B, pair2 A, pair2 B]
    match survive.iter().filter(|&&s| s).count() {
        4 => SurvivalClass::AllSurvive,
        3 => SurvivalClass::ThreeSurvive,
        1 => SurvivalClass::OneSurvives,
        0 => SurvivalClass::NoneSurvive,
        2 => {
            let [a1, b1, a2, b2] = survive;
            if (a1 && b1) || (a2 && b2) {
                SurvivalClass::IntactPairKept
            } else if (a1 && a2) || (b1 && b2) {
                SurvivalClass::SamePartyKept
            } else {
                SurvivalClass::CrossPairKept
            }
        }
        _ => unreachable!(),
    }
}

/// Conditional factor states of one emission event under a fixed survival
/// pattern of its two photons. When a photon is lost, the environment
/// records the mode it was lost from, so the surviving partner collapses
/// into a definite mode (one sub-branch per emission term).
fn pair_factors(pair: &PairEmission, a_survives: bool, b_survives: bool) -> Result<Vec<(f64, FockState)>> {
    let vac = FockState::vacuum(Basis::transmission());
    match (a_survives, b_survives) {
        (true, true) => Ok(vec![(1.0, pair.pair_state()?)]),
        (false, false) => Ok(vec![(1.0, vac)]),
        (a_only, _) => {
            let weights = pair.term_weights();
            pair.terms()
                .iter()
                .zip(weights)
                .map(|(&(_, a_mode, b_mode), w)| {
                    let survivor = if a_only { a_mode } else { b_mode };
                    Ok((w, vac.create(survivor)?))
                })
                .collect()
        }
    }
}

/// Per-photon loss applied to a two-pair emission while the pairs remain
/// distinguishable, i.e. the loss combinatorics of two independent pairs.
/// Survivors from both pairs are merged back onto the shared transmission
/// modes (renormalized). Returns `(weight, state, class)` triples summing
/// to unit weight.
pub fn pair_resolved_loss(
    pair1: &PairEmission,
    pair2: &PairEmission,
    params: &LossParams,
) -> Result<Vec<(f64, FockState, SurvivalClass)>> {
    let m = params.m;
    let mut out = Vec::new();
    for bits in 0..16u32 {
        let survive = [
            bits & 1 != 0,
            bits & 2 != 0,
            bits & 4 != 0,
            bits & 8 != 0,
        ];
        let pattern_weight: f64 = survive
            .iter()
            .map(|&s| if s { 1.0 - m } else { m })
            .product();
        if pattern_weight < PRUNE_EPS {
            continue;
        }
        let class = classify_pattern(survive);
        let f1 = pair_factors(pair1, survive[0], survive[1])?;
        let f2 = pair_factors(pair2, survive[2], survive[3])?;
        for (w1, s1) in &f1 {
            for (w2, s2) in &f2 {
                let weight = pattern_weight * w1 * w2;
                if weight < PRUNE_EPS {
                    continue;
                }
                let merged = s1.product(s2)?;
                out.push((weight, merged.normalized()?, class));
            }
        }
    }
    Ok(out)
}

/// [`pair_resolved_loss`] packaged as a tagged ensemble.
pub fn two_pair_loss_ensemble(
    pair1: &PairEmission,
    pair2: &PairEmission,
    params: &LossParams,
) -> Result<MixedState> {
    let branches = pair_resolved_loss(pair1, pair2, params)?
        .into_iter()
        .map(|(weight, state, class)| Branch::new(weight, state, class.label()))
        .collect();
    MixedState::ensemble(branches)
}

/// Count photons lost on each party's side, from a loss-pattern tag
/// produced by [`photon_loss`].
pub fn lost_per_party(tag: &str) -> (u32, u32) {
    let Some(start) = tag.rfind("loss[") else {
        return (0, 0);
    };
    let inner = &tag[start + 5..tag.len() - 1];
    if inner == "none" {
        return (0, 0);
    }
    let mut a = 0;
    let mut b = 0;
    for part in inner.split('+') {
        if let Ok(mode) = part.parse::<ModeId>() {
            match mode.party() {
                Party::A => a += 1,
                Party::B => b += 1,
            }
        }
    }
    (a, b)
}
