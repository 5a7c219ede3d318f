//! State preparation: the ideal hyperentangled pair and the truncated
//! PDC emission ensemble with its two-pair term.

use num_complex::Complex64;

use crate::error::{Result, SimError};
use crate::fock::{Basis, Branch, FockState, MixedState, ModeId, C64};

/// Down-conversion source parameters. `p` is the single-pair emission
/// probability (two pairs occur with probability `p²`), `r` the relative
/// emission amplitude into the lower path and `pump_phase` the pump phase
/// between the two paths. Ideal settings are `r = 1`, `pump_phase = 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PdcParams {
    pub p: f64,
    pub r: f64,
    pub pump_phase: f64,
}

impl PdcParams {
    pub fn new(p: f64, r: f64, pump_phase: f64) -> Result<PdcParams> {
        if !(p > 0.0 && p <= 1.0) {
            return Err(SimError::InvalidParameter(format!(
                "emission probability p must be in (0, 1], got {p}"
            )));
        }
        if p + p * p > 1.0 + 1e-12 {
            return Err(SimError::InvalidParameter(format!(
                "p + p² must not exceed 1, got {}",
                p + p * p
            )));
        }
        if !(r >= 0.0) {
            return Err(SimError::InvalidParameter(format!(
                "relative emission amplitude r must be non-negative, got {r}"
            )));
        }
        if !pump_phase.is_finite() {
            return Err(SimError::InvalidParameter("pump phase must be finite".into()));
        }
        Ok(PdcParams { p, r, pump_phase })
    }

    /// Ideal source settings (`r = 1`, `pump_phase = 0`).
    pub fn ideal(p: f64) -> Result<PdcParams> {
        PdcParams::new(p, 1.0, 0.0)
    }
}

/// One pair-emission event as a creation-operator polynomial
/// `Σ_k γ_k a†_k b†_k` over the transmission modes.
#[derive(Debug, Clone, PartialEq)]
pub struct PairEmission {
    terms: Vec<(C64, ModeId, ModeId)>,
}

impl PairEmission {
    /// The emission polynomial `a†_{1H}b†_{1H} + a†_{1V}b†_{1V} +
    /// r·e^{iϕ}(a†_{2H}b†_{2H} + a†_{2V}b†_{2V})`.
    pub fn from_params(params: &PdcParams) -> PairEmission {
        let one = C64::new(1.0, 0.0);
        let lower = Complex64::from_polar(params.r, params.pump_phase);
        let m = |s: &str| s.parse::<ModeId>().expect("static mode label");
        PairEmission {
            terms: vec![
                (one, m("a1H"), m("b1H")),
                (one, m("a1V"), m("b1V")),
                (lower, m("a2H"), m("b2H")),
                (lower, m("a2V"), m("b2V")),
            ],
        }
    }

    /// The same emission with party B's polarization flipped on every term.
    pub fn bitflipped(&self) -> PairEmission {
        PairEmission {
            terms: self
                .terms
                .iter()
                .map(|&(c, a, b)| (c, a, ModeId::new(b.spatial, b.polarization.flipped())))
                .collect(),
        }
    }

    pub fn terms(&self) -> &[(C64, ModeId, ModeId)] {
        &self.terms
    }

    /// Normalized per-term weights `|γ_k|²/Σ|γ|²`.
    pub fn term_weights(&self) -> Vec<f64> {
        let total: f64 = self.terms.iter().map(|(c, _, _)| c.norm_sqr()).sum();
        self.terms
            .iter()
            .map(|(c, _, _)| c.norm_sqr() / total)
            .collect()
    }

    /// Apply the polynomial once to a state (adds one photon pair).
    pub fn apply_to(&self, state: &FockState) -> Result<FockState> {
        let parts = self
            .terms
            .iter()
            .map(|&(coeff, a, b)| Ok((coeff, state.create(a)?.create(b)?)))
            .collect::<Result<Vec<_>>>()?;
        let refs: Vec<(C64, &FockState)> = parts.iter().map(|(c, s)| (*c, s)).collect();
        FockState::superpose(&refs)
    }

    /// Normalized single-pair state `S|0⟩ / ‖S|0⟩‖`.
    pub fn pair_state(&self) -> Result<FockState> {
        self.apply_to(&FockState::vacuum(Basis::transmission()))?
            .normalized()
    }
}

/// The ideal hyperentangled pair
/// `½(|HH⟩+|VV⟩)(|a1b1⟩+|a2b2⟩)` as a two-photon Fock state.
pub fn ideal_hyper_pair() -> FockState {
    PairEmission::from_params(&PdcParams { p: 0.1, r: 1.0, pump_phase: 0.0 })
        .pair_state()
        .expect("ideal pair is normalizable")
}

/// The normalized four-photon state `∝ S²|0⟩` with exact bosonic
/// double-occupation factors, where `S` is the emission polynomial.
pub fn pdc_two_pair_state(params: &PdcParams) -> Result<FockState> {
    let emission = PairEmission::from_params(params);
    let vac = FockState::vacuum(Basis::transmission());
    emission
        .apply_to(&emission.apply_to(&vac)?)?
        .normalized()
}

/// Truncated emission ensemble: vacuum with probability `1 − p − p²`, one
/// pair with `p`, two pairs with `p²`.
pub fn pdc_emission_ensemble(params: &PdcParams) -> Result<MixedState> {
    let p = params.p;
    let emission = PairEmission::from_params(params);
    let branches = vec![
        Branch::new(
            1.0 - p - p * p,
            FockState::vacuum(Basis::transmission()),
            "vacuum",
        ),
        Branch::new(p, emission.pair_state()?, "single-pair"),
        Branch::new(p * p, pdc_two_pair_state(params)?, "two-pair"),
    ];
    MixedState::ensemble(branches)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fock::{Occupation, Polarization, Spatial, TOL};
    use approx::assert_abs_diff_eq;

    #[test]
    fn ideal_pair_amplitudes() {
        let pair = ideal_hyper_pair();
        assert_abs_diff_eq!(pair.norm(), 1.0, epsilon = TOL);
        assert_eq!(pair.num_terms(), 4);
        for (_, amp) in pair.terms() {
            assert_abs_diff_eq!(amp.re, 0.5, epsilon = TOL);
            assert_abs_diff_eq!(amp.im, 0.0, epsilon = TOL);
        }
    }

    #[test]
    fn ideal_pair_reduces_to_phi_plus_on_upper_path() {
        // condition on the |a1b1⟩ branch, then reduce
        let pair = ideal_hyper_pair();
        let basis = pair.basis().clone();
        let upper: Vec<_> = pair
            .terms()
            .filter(|(occ, _)| {
                basis
                    .modes()
                    .iter()
                    .enumerate()
                    .all(|(i, m)| occ.get(i) == 0 || matches!(m.spatial, Spatial::A1 | Spatial::B1))
            })
            .map(|(occ, amp)| (occ.clone(), *amp))
            .collect();
        assert_eq!(upper.len(), 2);
        let mut cond = FockState::zero(basis.clone());
        for (occ, amp) in upper {
            let mut st = FockState::vacuum(basis.clone());
            for (i, &n) in occ.counts().iter().enumerate() {
                for _ in 0..n {
                    st = st.create(basis.modes()[i]).unwrap();
                }
            }
            cond = FockState::superpose(&[(C64::new(1.0, 0.0), &cond), (amp, &st)]).unwrap();
        }
        let cond = cond.normalized().unwrap();
        let rho =
            crate::fock::reduce_to_polarization_pair(&cond, Spatial::A1, Spatial::B1).unwrap();
        assert_abs_diff_eq!(rho.fidelity_phi_plus(), 1.0, epsilon = TOL);
    }

    #[test]
    fn two_pair_state_has_ten_equal_terms() {
        let params = PdcParams::ideal(0.1).unwrap();
        let state = pdc_two_pair_state(&params).unwrap();
        assert_abs_diff_eq!(state.norm(), 1.0, epsilon = TOL);
        assert_eq!(state.num_terms(), 10);
        let expect = 1.0 / 10f64.sqrt();
        for (_, amp) in state.terms() {
            assert_abs_diff_eq!(amp.norm(), expect, epsilon = TOL);
        }
    }

    #[test]
    fn two_pair_double_occupation_enhancement() {
        // before normalization, a monomial (a†b†)² contributes amplitude
        // √2·√2 = 2 on |2,2⟩, equal to the 2γᵢγⱼ cross terms at r=1
        let params = PdcParams::ideal(0.1).unwrap();
        let emission = PairEmission::from_params(&params);
        let vac = FockState::vacuum(Basis::transmission());
        let raw = emission
            .apply_to(&emission.apply_to(&vac).unwrap())
            .unwrap();
        let basis = raw.basis().clone();
        let a1h = basis
            .index_of(ModeId::new(Spatial::A1, Polarization::H))
            .unwrap();
        let b1h = basis
            .index_of(ModeId::new(Spatial::B1, Polarization::H))
            .unwrap();
        let mut counts = vec![0u8; basis.len()];
        counts[a1h] = 2;
        counts[b1h] = 2;
        let double = raw
            .terms()
            .find(|(occ, _)| occ.counts() == counts.as_slice())
            .map(|(_, amp)| *amp)
            .unwrap();
        assert_abs_diff_eq!(double.re, 2.0, epsilon = TOL);
        let _ = Occupation::zeros(basis.len());
    }

    #[test]
    fn two_pair_state_r_zero_limits_to_upper_path() {
        let params = PdcParams::new(0.1, 0.0, 0.0).unwrap();
        let state = pdc_two_pair_state(&params).unwrap();
        assert_abs_diff_eq!(state.norm(), 1.0, epsilon = TOL);
        let basis = state.basis().clone();
        for (occ, _) in state.terms() {
            for (i, &n) in occ.counts().iter().enumerate() {
                if n > 0 {
                    let sp = basis.modes()[i].spatial;
                    assert!(matches!(sp, Spatial::A1 | Spatial::B1));
                }
            }
        }
    }

    #[test]
    fn two_pair_state_path_exchange_symmetry() {
        // at r=1, ϕ=0 the state is invariant under swapping path labels
        // 1↔2 on both parties
        let params = PdcParams::ideal(0.1).unwrap();
        let state = pdc_two_pair_state(&params).unwrap();
        let basis = state.basis().clone();
        let swap = |s: Spatial| match s {
            Spatial::A1 => Spatial::A2,
            Spatial::A2 => Spatial::A1,
            Spatial::B1 => Spatial::B2,
            Spatial::B2 => Spatial::B1,
            other => other,
        };
        for (occ, amp) in state.terms() {
            let mut swapped = vec![0u8; basis.len()];
            for (i, &n) in occ.counts().iter().enumerate() {
                let m = basis.modes()[i];
                let j = basis
                    .index_of(ModeId::new(swap(m.spatial), m.polarization))
                    .unwrap();
                swapped[j] = n;
            }
            let partner = state
                .terms()
                .find(|(o, _)| o.counts() == swapped.as_slice())
                .map(|(_, a)| *a)
                .unwrap();
            assert_abs_diff_eq!((amp - partner).norm(), 0.0, epsilon = TOL);
        }
    }

    #[test]
    fn emission_ensemble_weights() {
        let params = PdcParams::ideal(0.1).unwrap();
        let mix = pdc_emission_ensemble(&params).unwrap();
        let weights: Vec<f64> = mix.branches().iter().map(|b| b.weight).collect();
        assert_abs_diff_eq!(weights[0], 0.89, epsilon = TOL);
        assert_abs_diff_eq!(weights[1], 0.1, epsilon = TOL);
        assert_abs_diff_eq!(weights[2], 0.01, epsilon = TOL);
        // single-pair branch equals the ideal hyperentangled pair
        let single = &mix.branches()[1].state;
        assert!((single.inner(&ideal_hyper_pair()).unwrap().re - 1.0).abs() < TOL);
    }

    #[test]
    fn params_validation() {
        assert!(PdcParams::new(0.0, 1.0, 0.0).is_err());
        assert!(PdcParams::new(0.7, 1.0, 0.0).is_err()); // p + p² > 1
        assert!(PdcParams::new(0.1, -1.0, 0.0).is_err());
        assert!(PdcParams::ideal(0.1).is_ok());
    }
}
