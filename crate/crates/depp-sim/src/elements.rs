//! Constructors for the passive linear-optical elements used by the
//! purification circuit: half-wave plates, polarizing beam splitters and
//! phase shifters, plus map composition.
//!
//! Conventions: the HWP is an exact H↔V exchange with no global phase, and
//! the PBS reflection carries no phase factor. The PBS transmits H and
//! reflects V; the two unnamed port assignments (lower-input H and V) are
//! the unique unitary completion of that rule.

use num_complex::Complex64;

use crate::error::{Result, SimError};
use crate::fock::{Basis, ModeId, ModeMap, Polarization, Spatial, C64};

/// Declarative description of one circuit element.
#[derive(Debug, Clone, PartialEq)]
pub enum ElementSpec {
    /// Bit-flip plate on one spatial label: |H⟩ ⇌ |V⟩.
    Hwp { spatial: Spatial },
    /// Polarizing beam splitter with two input and two output spatial labels.
    Pbs {
        in_upper: Spatial,
        in_lower: Spatial,
        out_transmit: Spatial,
        out_reflect: Spatial,
    },
    /// Multiplies the listed modes' creation operators by `e^{iφ}`.
    Phase { modes: Vec<ModeId>, phi: f64 },
}

impl ElementSpec {
    pub fn build(&self, basis: &Basis) -> Result<ModeMap> {
        match self {
            ElementSpec::Hwp { spatial } => hwp(basis, *spatial),
            ElementSpec::Pbs {
                in_upper,
                in_lower,
                out_transmit,
                out_reflect,
            } => pbs(basis, *in_upper, *in_lower, *out_transmit, *out_reflect),
            ElementSpec::Phase { modes, phi } => phase_shift(basis, modes, *phi),
        }
    }
}

/// Half-wave plate on one spatial label: swaps its H and V modes, identity
/// elsewhere. Involutive.
pub fn hwp(basis: &Basis, spatial: Spatial) -> Result<ModeMap> {
    let h = ModeId::new(spatial, Polarization::H);
    let v = ModeId::new(spatial, Polarization::V);
    if !basis.contains(h) || !basis.contains(v) {
        return Err(SimError::UnknownMode(h));
    }
    let one = C64::new(1.0, 0.0);
    ModeMap::from_rules(
        basis.clone(),
        basis.clone(),
        &[(h, vec![(one, v)]), (v, vec![(one, h)])],
    )
}

/// Polarizing beam splitter. H of the upper input transmits to
/// `out_transmit`, V of the upper input reflects to `out_reflect`; the lower
/// input is mapped to the complementary ports (H reflects, V transmits),
/// which is the unitary completion of the transmit-H/reflect-V rule.
///
/// The output basis replaces the two input spatial labels with the two
/// output labels and is returned in canonical mode order.
pub fn pbs(
    basis: &Basis,
    in_upper: Spatial,
    in_lower: Spatial,
    out_transmit: Spatial,
    out_reflect: Spatial,
) -> Result<ModeMap> {
    let labels = [in_upper, in_lower, out_transmit, out_reflect];
    for (i, a) in labels.iter().enumerate() {
        if labels[..i].contains(a) {
            return Err(SimError::InvalidParameter(format!(
                "PBS spatial labels must be distinct, got {in_upper}, {in_lower}, {out_transmit}, {out_reflect}"
            )));
        }
    }
    for input in [in_upper, in_lower] {
        if !basis.contains_spatial(input) {
            return Err(SimError::UnknownMode(ModeId::new(input, Polarization::H)));
        }
    }
    for output in [out_transmit, out_reflect] {
        if basis.contains_spatial(output) {
            return Err(SimError::InvalidParameter(format!(
                "PBS output label {output} already present in the input basis"
            )));
        }
    }
    let mut out_modes: Vec<ModeId> = basis
        .modes()
        .iter()
        .filter(|m| m.spatial != in_upper && m.spatial != in_lower)
        .copied()
        .collect();
    for s in [out_transmit, out_reflect] {
        out_modes.push(ModeId::new(s, Polarization::H));
        out_modes.push(ModeId::new(s, Polarization::V));
    }
    out_modes.sort();
    let output = Basis::new(out_modes)?;

    let one = C64::new(1.0, 0.0);
    let m = |s, p| ModeId::new(s, p);
    use Polarization::{H, V};
    let rules = [
        (m(in_upper, H), vec![(one, m(out_transmit, H))]),
        (m(in_upper, V), vec![(one, m(out_reflect, V))]),
        (m(in_lower, H), vec![(one, m(out_reflect, H))]),
        (m(in_lower, V), vec![(one, m(out_transmit, V))]),
    ];
    ModeMap::from_rules(basis.clone(), output, &rules)
}

/// Diagonal phase element: multiplies the listed modes by `e^{iφ}`.
pub fn phase_shift(basis: &Basis, modes: &[ModeId], phi: f64) -> Result<ModeMap> {
    let factor = Complex64::from_polar(1.0, phi);
    let rules: Vec<_> = modes
        .iter()
        .map(|&m| {
            if basis.contains(m) {
                Ok((m, vec![(factor, m)]))
            } else {
                Err(SimError::UnknownMode(m))
            }
        })
        .collect::<Result<_>>()?;
    ModeMap::from_rules(basis.clone(), basis.clone(), &rules)
}

/// Sequential composition of element maps (first element first).
pub fn compose(maps: &[ModeMap]) -> Result<ModeMap> {
    let mut iter = maps.iter();
    let first = iter
        .next()
        .ok_or_else(|| SimError::InvalidParameter("empty composition".into()))?;
    let mut acc = first.clone();
    for map in iter {
        acc = acc.then(map)?;
    }
    Ok(acc)
}
