//! Exact sparse representation of few-photon bosonic states over labeled
//! optical modes.
//!
//! States are stored as sparse maps from occupation vectors to complex
//! amplitudes, in a fixed ordered mode basis. All amplitudes refer to
//! normalized number kets, i.e. a state with amplitude `c` on occupation
//! `n` contributes `c · Π_k (a†_k)^{n_k}/√(n_k!) |0⟩`. Everything here is
//! an immutable value; operations return new states.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use nalgebra::{DMatrix, Matrix4};
use num_complex::Complex64;

use crate::error::{Result, SimError};

/// Amplitudes below this magnitude are dropped from the sparse term map.
pub const PRUNE_EPS: f64 = 1e-15;
/// Comparison tolerance used by invariant checks throughout the crate.
pub const TOL: f64 = 1e-12;

pub type C64 = Complex64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Party {
    A,
    B,
}

impl fmt::Display for Party {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Party::A => write!(f, "A"),
            Party::B => write!(f, "B"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Polarization {
    H,
    V,
}

impl Polarization {
    pub fn flipped(self) -> Polarization {
        match self {
            Polarization::H => Polarization::V,
            Polarization::V => Polarization::H,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Polarization::H => "H",
            Polarization::V => "V",
        }
    }
}

/// Spatial mode labels. `a*`/`b*` are the transmission modes of parties A
/// and B, `c*`/`d*` the corresponding detector-side output modes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Spatial {
    A1,
    A2,
    B1,
    B2,
    C1,
    C2,
    D1,
    D2,
}

impl Spatial {
    pub const ALL: [Spatial; 8] = [
        Spatial::A1,
        Spatial::A2,
        Spatial::B1,
        Spatial::B2,
        Spatial::C1,
        Spatial::C2,
        Spatial::D1,
        Spatial::D2,
    ];

    pub fn party(self) -> Party {
        match self {
            Spatial::A1 | Spatial::A2 | Spatial::C1 | Spatial::C2 => Party::A,
            Spatial::B1 | Spatial::B2 | Spatial::D1 | Spatial::D2 => Party::B,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Spatial::A1 => "a1",
            Spatial::A2 => "a2",
            Spatial::B1 => "b1",
            Spatial::B2 => "b2",
            Spatial::C1 => "c1",
            Spatial::C2 => "c2",
            Spatial::D1 => "d1",
            Spatial::D2 => "d2",
        }
    }
}

impl fmt::Display for Spatial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.label())
    }
}

impl FromStr for Spatial {
    type Err = SimError;

    fn from_str(s: &str) -> Result<Spatial> {
        Spatial::ALL
            .into_iter()
            .find(|sp| sp.label() == s)
            .ok_or_else(|| SimError::InvalidParameter(format!("unknown spatial label '{s}'")))
    }
}

/// A labeled optical mode: one spatial path of one party carrying one
/// polarization. `(spatial, polarization)` identifies the mode; the party
/// is derived from the spatial label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ModeId {
    pub spatial: Spatial,
    pub polarization: Polarization,
}

impl ModeId {
    pub fn new(spatial: Spatial, polarization: Polarization) -> ModeId {
        ModeId {
            spatial,
            polarization,
        }
    }

    /// Construct with an explicit party claim, checked against the spatial
    /// label's owner.
    pub fn with_party(party: Party, spatial: Spatial, polarization: Polarization) -> Result<ModeId> {
        if spatial.party() != party {
            return Err(SimError::PartyMismatch {
                spatial: spatial.label().to_string(),
                claimed: party.to_string(),
                actual: spatial.party().to_string(),
            });
        }
        Ok(ModeId::new(spatial, polarization))
    }

    pub fn party(self) -> Party {
        self.spatial.party()
    }
}

impl fmt::Display for ModeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{}", self.spatial, self.polarization.label())
    }
}

impl FromStr for ModeId {
    type Err = SimError;

    fn from_str(s: &str) -> Result<ModeId> {
        if s.len() < 3 {
            return Err(SimError::InvalidParameter(format!("unknown mode '{s}'")));
        }
        let (sp, pol) = s.split_at(s.len() - 1);
        let spatial: Spatial = sp.parse()?;
        let polarization = match pol {
            "H" => Polarization::H,
            "V" => Polarization::V,
            _ => {
                return Err(SimError::InvalidParameter(format!(
                    "unknown polarization '{pol}' in mode '{s}'"
                )))
            }
        };
        Ok(ModeId::new(spatial, polarization))
    }
}

/// Fixed ordered list of modes that occupation vectors refer to.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Basis {
    modes: Arc<[ModeId]>,
}

impl Basis {
    pub fn new(modes: Vec<ModeId>) -> Result<Basis> {
        if modes.is_empty() {
            return Err(SimError::InvalidParameter("empty basis".into()));
        }
        for (i, m) in modes.iter().enumerate() {
            if modes[..i].contains(m) {
                return Err(SimError::DuplicateMode(*m));
            }
        }
        Ok(Basis {
            modes: modes.into(),
        })
    }

    fn for_spatials(spatials: &[Spatial]) -> Basis {
        let mut modes = Vec::with_capacity(spatials.len() * 2);
        for &s in spatials {
            modes.push(ModeId::new(s, Polarization::H));
            modes.push(ModeId::new(s, Polarization::V));
        }
        Basis {
            modes: modes.into(),
        }
    }

    /// The eight transmission modes `a1,a2,b1,b2 × H,V` in canonical order.
    pub fn transmission() -> Basis {
        Basis::for_spatials(&[Spatial::A1, Spatial::A2, Spatial::B1, Spatial::B2])
    }

    /// The eight detector-side modes `c1,c2,d1,d2 × H,V` in canonical order.
    pub fn detection() -> Basis {
        Basis::for_spatials(&[Spatial::C1, Spatial::C2, Spatial::D1, Spatial::D2])
    }

    pub fn len(&self) -> usize {
        self.modes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.modes.is_empty()
    }

    pub fn modes(&self) -> &[ModeId] {
        &self.modes
    }

    pub fn index_of(&self, mode: ModeId) -> Result<usize> {
        self.modes
            .iter()
            .position(|&m| m == mode)
            .ok_or(SimError::UnknownMode(mode))
    }

    pub fn contains(&self, mode: ModeId) -> bool {
        self.modes.contains(&mode)
    }

    pub fn contains_spatial(&self, spatial: Spatial) -> bool {
        self.modes.iter().any(|m| m.spatial == spatial)
    }
}

/// Photon counts per basis mode.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Occupation(Vec<u8>);

impl Occupation {
    pub fn zeros(len: usize) -> Occupation {
        Occupation(vec![0; len])
    }

    pub fn from_counts(counts: Vec<u8>) -> Occupation {
        Occupation(counts)
    }

    pub fn counts(&self) -> &[u8] {
        &self.0
    }

    pub fn total(&self) -> u32 {
        self.0.iter().map(|&n| n as u32).sum()
    }

    pub fn get(&self, i: usize) -> u8 {
        self.0[i]
    }

    /// Render as a space-separated list of mode labels, repeated per photon;
    /// the vacuum renders as `vac`.
    pub fn render(&self, basis: &Basis) -> String {
        let mut parts = Vec::new();
        for (i, &n) in self.0.iter().enumerate() {
            for _ in 0..n {
                parts.push(basis.modes()[i].to_string());
            }
        }
        if parts.is_empty() {
            "vac".to_string()
        } else {
            parts.join(" ")
        }
    }
}

fn sqrt_factorial(n: u8) -> f64 {
    let mut f = 1.0;
    for k in 2..=(n as u64) {
        f *= k as f64;
    }
    f.sqrt()
}

pub(crate) fn sqrt_binomial(n: u8, k: u8) -> f64 {
    let mut b = 1.0;
    for i in 0..(k as u64) {
        b *= (n as u64 - i) as f64 / (i + 1) as f64;
    }
    b.sqrt()
}

/// Sparse multi-photon pure state (not necessarily normalized).
#[derive(Debug, Clone, PartialEq)]
pub struct FockState {
    basis: Basis,
    terms: BTreeMap<Occupation, C64>,
}

impl FockState {
    /// The vacuum ket: a single all-zero occupation with amplitude 1.
    pub fn vacuum(basis: Basis) -> FockState {
        let mut terms = BTreeMap::new();
        terms.insert(Occupation::zeros(basis.len()), C64::new(1.0, 0.0));
        FockState { basis, terms }
    }

    /// The zero vector (empty term map).
    pub fn zero(basis: Basis) -> FockState {
        FockState {
            basis,
            terms: BTreeMap::new(),
        }
    }

    /// Build directly from an amplitude map, pruning negligible entries.
    pub fn from_terms(basis: Basis, terms: BTreeMap<Occupation, C64>) -> FockState {
        let mut state = FockState { basis, terms };
        state.prune();
        state
    }

    pub fn basis(&self) -> &Basis {
        &self.basis
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Occupation, &C64)> {
        self.terms.iter()
    }

    pub fn num_terms(&self) -> usize {
        self.terms.len()
    }

    pub fn amplitude(&self, occ: &Occupation) -> C64 {
        self.terms.get(occ).copied().unwrap_or_default()
    }

    /// Apply the raw bosonic creation operator for `mode`: each occupation
    /// `n` goes to `n+1` with the amplitude scaled by `√(n+1)`.
    pub fn create(&self, mode: ModeId) -> Result<FockState> {
        let idx = self.basis.index_of(mode)?;
        Ok(self.create_index(idx))
    }

    fn create_index(&self, idx: usize) -> FockState {
        let mut terms = BTreeMap::new();
        for (occ, amp) in &self.terms {
            let n = occ.get(idx);
            let mut counts = occ.counts().to_vec();
            counts[idx] = n + 1;
            let entry = terms.entry(Occupation(counts)).or_insert(C64::default());
            *entry += amp * ((n as f64) + 1.0).sqrt();
        }
        FockState {
            basis: self.basis.clone(),
            terms,
        }
    }

    /// Termwise linear combination. Not auto-normalized; exact cancellations
    /// leave an empty term map.
    pub fn superpose(parts: &[(C64, &FockState)]) -> Result<FockState> {
        let first = parts
            .first()
            .ok_or_else(|| SimError::InvalidParameter("empty superposition".into()))?;
        let basis = first.1.basis.clone();
        let mut out = FockState::zero(basis);
        for (coeff, state) in parts {
            if state.basis != out.basis {
                return Err(SimError::BasisMismatch);
            }
            out.add_scaled(*coeff, state);
        }
        out.prune();
        Ok(out)
    }

    fn add_scaled(&mut self, coeff: C64, other: &FockState) {
        for (occ, amp) in &other.terms {
            let entry = self.terms.entry(occ.clone()).or_insert(C64::default());
            *entry += coeff * amp;
        }
    }

    fn prune(&mut self) {
        self.terms.retain(|_, a| a.norm() >= PRUNE_EPS);
    }

    pub fn inner(&self, other: &FockState) -> Result<C64> {
        if self.basis != other.basis {
            return Err(SimError::BasisMismatch);
        }
        let mut acc = C64::default();
        for (occ, amp) in &self.terms {
            if let Some(b) = other.terms.get(occ) {
                acc += amp.conj() * b;
            }
        }
        Ok(acc)
    }

    pub fn norm_sqr(&self) -> f64 {
        self.terms.values().map(|a| a.norm_sqr()).sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sqr().sqrt()
    }

    pub fn scaled(&self, coeff: C64) -> FockState {
        let mut out = self.clone();
        for amp in out.terms.values_mut() {
            *amp *= coeff;
        }
        out.prune();
        out
    }

    pub fn normalized(&self) -> Result<FockState> {
        let n = self.norm();
        if n < PRUNE_EPS {
            return Err(SimError::ZeroState);
        }
        Ok(self.scaled(C64::new(1.0 / n, 0.0)))
    }

    pub fn is_normalized(&self) -> bool {
        (self.norm_sqr() - 1.0).abs() <= TOL
    }

    /// Largest per-term photon count, over all terms.
    pub fn max_photons(&self) -> u32 {
        self.terms.keys().map(|o| o.total()).max().unwrap_or(0)
    }

    /// Product of two states on the same basis, as the product of their
    /// creation-operator expansions applied to the vacuum. Occupations add;
    /// shared modes pick up the exact bosonic factor `√C(n1+n2, n1)`.
    pub fn product(&self, other: &FockState) -> Result<FockState> {
        if self.basis != other.basis {
            return Err(SimError::BasisMismatch);
        }
        let mut out = FockState::zero(self.basis.clone());
        for (o1, a1) in &self.terms {
            for (o2, a2) in &other.terms {
                let mut counts = Vec::with_capacity(o1.counts().len());
                let mut factor = 1.0;
                for (n1, n2) in o1.counts().iter().zip(o2.counts()) {
                    counts.push(n1 + n2);
                    factor *= sqrt_binomial(n1 + n2, *n1);
                }
                let entry = out
                    .terms
                    .entry(Occupation(counts))
                    .or_insert(C64::default());
                *entry += a1 * a2 * factor;
            }
        }
        out.prune();
        Ok(out)
    }

    /// Rewrite the state under a linear map on creation operators. Each
    /// occupation term is expanded as its creation-operator monomial, every
    /// operator is substituted by its image column, and the result is
    /// reassembled with exact bosonic normalization factors.
    pub fn apply(&self, map: &ModeMap) -> Result<FockState> {
        if self.basis != *map.input() {
            return Err(SimError::BasisMismatch);
        }
        let mut out = FockState::zero(map.output().clone());
        for (occ, amp) in &self.terms {
            let mut coeff = *amp;
            for &n in occ.counts() {
                coeff /= sqrt_factorial(n);
            }
            let mut acc = FockState::vacuum(map.output().clone());
            for (i, &n) in occ.counts().iter().enumerate() {
                for _ in 0..n {
                    acc = acc.apply_mapped_creation(map, i);
                }
            }
            out.add_scaled(coeff, &acc);
        }
        out.prune();
        Ok(out)
    }

    /// Apply `Σ_j U[j,i] a†_out,j` for input column `i`.
    fn apply_mapped_creation(&self, map: &ModeMap, column: usize) -> FockState {
        let mut out = FockState::zero(self.basis.clone());
        for j in 0..map.output().len() {
            let u = map.matrix()[(j, column)];
            if u.norm() < PRUNE_EPS {
                continue;
            }
            out.add_scaled(u, &self.create_index(j));
        }
        out
    }
}

/// Linear map on creation operators: `a†_in,i ↦ Σ_j U[j,i] a†_out,j`.
#[derive(Debug, Clone, PartialEq)]
pub struct ModeMap {
    input: Basis,
    output: Basis,
    matrix: DMatrix<C64>,
}

impl ModeMap {
    pub fn identity(basis: Basis) -> ModeMap {
        let n = basis.len();
        ModeMap {
            input: basis.clone(),
            output: basis,
            matrix: DMatrix::identity(n, n),
        }
    }

    /// Build a map from per-mode substitution rules. Input modes without a
    /// rule must be present in the output basis and map to themselves.
    pub fn from_rules(
        input: Basis,
        output: Basis,
        rules: &[(ModeId, Vec<(C64, ModeId)>)],
    ) -> Result<ModeMap> {
        let mut matrix = DMatrix::<C64>::zeros(output.len(), input.len());
        for (i, &mode) in input.modes().iter().enumerate() {
            if let Some((_, images)) = rules.iter().find(|(m, _)| *m == mode) {
                for &(coeff, target) in images {
                    let j = output.index_of(target)?;
                    matrix[(j, i)] += coeff;
                }
            } else {
                let j = output.index_of(mode)?;
                matrix[(j, i)] = C64::new(1.0, 0.0);
            }
        }
        Ok(ModeMap {
            input,
            output,
            matrix,
        })
    }

    pub fn input(&self) -> &Basis {
        &self.input
    }

    pub fn output(&self) -> &Basis {
        &self.output
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.matrix
    }

    /// Sequential composition: `self` first, then `next`.
    pub fn then(&self, next: &ModeMap) -> Result<ModeMap> {
        if self.output != next.input {
            return Err(SimError::BasisMismatch);
        }
        Ok(ModeMap {
            input: self.input.clone(),
            output: next.output.clone(),
            matrix: &next.matrix * &self.matrix,
        })
    }

    /// Columns orthonormal to within `TOL`.
    pub fn is_isometry(&self) -> bool {
        let gram = self.matrix.adjoint() * &self.matrix;
        let n = self.input.len();
        for i in 0..n {
            for j in 0..n {
                let expect = if i == j { 1.0 } else { 0.0 };
                if (gram[(i, j)] - C64::new(expect, 0.0)).norm() > TOL {
                    return false;
                }
            }
        }
        true
    }
}

/// One pure component of a finite ensemble, tagged with its provenance
/// (error class, loss pattern, ...).
#[derive(Debug, Clone)]
pub struct Branch {
    pub weight: f64,
    pub state: FockState,
    pub tag: String,
}

impl Branch {
    pub fn new(weight: f64, state: FockState, tag: impl Into<String>) -> Branch {
        Branch {
            weight,
            state,
            tag: tag.into(),
        }
    }
}

/// Finite ensemble of weighted pure states.
#[derive(Debug, Clone)]
pub struct MixedState {
    branches: Vec<Branch>,
    conditioned: bool,
}

impl MixedState {
    /// A complete ensemble; weights must be non-negative and sum to 1.
    pub fn ensemble(branches: Vec<Branch>) -> Result<MixedState> {
        let total: f64 = branches.iter().map(|b| b.weight).sum();
        if branches.iter().any(|b| b.weight < 0.0) {
            return Err(SimError::InvalidParameter(
                "ensemble weights must be non-negative".into(),
            ));
        }
        if (total - 1.0).abs() > TOL {
            return Err(SimError::InvalidParameter(format!(
                "ensemble weights sum to {total}, expected 1"
            )));
        }
        Ok(MixedState {
            branches,
            conditioned: false,
        })
    }

    /// A sub-normalized ensemble, explicitly flagged as conditioned.
    pub fn conditioned(branches: Vec<Branch>) -> Result<MixedState> {
        if branches.iter().any(|b| b.weight < 0.0) {
            return Err(SimError::InvalidParameter(
                "ensemble weights must be non-negative".into(),
            ));
        }
        Ok(MixedState {
            branches,
            conditioned: true,
        })
    }

    pub fn pure(state: FockState, tag: impl Into<String>) -> MixedState {
        MixedState {
            branches: vec![Branch::new(1.0, state, tag)],
            conditioned: false,
        }
    }

    pub fn branches(&self) -> &[Branch] {
        &self.branches
    }

    pub fn is_conditioned(&self) -> bool {
        self.conditioned
    }

    pub fn total_weight(&self) -> f64 {
        self.branches.iter().map(|b| b.weight).sum()
    }

    /// Apply a pure-state transformation to every branch.
    pub fn map_states<F>(&self, mut f: F) -> Result<MixedState>
    where
        F: FnMut(&FockState) -> Result<FockState>,
    {
        let branches = self
            .branches
            .iter()
            .map(|b| Ok(Branch::new(b.weight, f(&b.state)?, b.tag.clone())))
            .collect::<Result<Vec<_>>>()?;
        Ok(MixedState {
            branches,
            conditioned: self.conditioned,
        })
    }
}

/// 4×4 polarization density matrix of a designated (Alice, Bob) mode pair,
/// in the ordered basis {HH, HV, VH, VV}.
#[derive(Debug, Clone, PartialEq)]
pub struct TwoQubitDensity {
    matrix: Matrix4<C64>,
}

impl TwoQubitDensity {
    /// Validates hermiticity, unit trace and positive semidefiniteness.
    pub fn new(matrix: Matrix4<C64>) -> Result<TwoQubitDensity> {
        let adj = matrix.adjoint();
        let herm_err = (matrix - adj).norm();
        if herm_err > 1e-9 {
            return Err(SimError::InvalidDensity(format!(
                "not Hermitian (deviation {herm_err:.3e})"
            )));
        }
        let trace = matrix.trace();
        if (trace.re - 1.0).abs() > TOL || trace.im.abs() > TOL {
            return Err(SimError::InvalidDensity(format!(
                "trace is {trace}, expected 1"
            )));
        }
        let eigs = matrix.symmetric_eigenvalues();
        if eigs.iter().any(|&e| e < -TOL) {
            return Err(SimError::InvalidDensity(format!(
                "negative eigenvalue {:.3e}",
                eigs.iter().cloned().fold(f64::INFINITY, f64::min)
            )));
        }
        Ok(TwoQubitDensity { matrix })
    }

    pub fn matrix(&self) -> &Matrix4<C64> {
        &self.matrix
    }

    /// Overlap `⟨Φ+|ρ|Φ+⟩` with the target Bell state `(|HH⟩+|VV⟩)/√2`.
    pub fn fidelity_phi_plus(&self) -> f64 {
        let m = &self.matrix;
        ((m[(0, 0)] + m[(0, 3)] + m[(3, 0)] + m[(3, 3)]) / 2.0).re
    }

    pub fn purity(&self) -> f64 {
        (&self.matrix * &self.matrix).trace().re
    }

    /// Relative phase `θ` of the HH/VV coherence, i.e. the state looks like
    /// `(|HH⟩ + e^{iθ}|VV⟩)/√2` when pure. Zero when there is no coherence.
    pub fn hh_vv_phase(&self) -> f64 {
        let c = self.matrix[(3, 0)]; // ⟨VV|ρ|HH⟩ = e^{iθ}/2 for the state above
        if c.norm() < PRUNE_EPS {
            0.0
        } else {
            c.arg()
        }
    }

    /// Fidelity to `Φ+` after compensating the HH/VV relative phase:
    /// `(ρ_HH,HH + ρ_VV,VV)/2 + |ρ_HH,VV|`.
    pub fn fidelity_phi_plus_compensated(&self) -> f64 {
        let m = &self.matrix;
        ((m[(0, 0)] + m[(3, 3)]) / 2.0).re + m[(0, 3)].norm()
    }
}

/// Partial trace of a pure state down to the polarization qubits of one
/// Alice spatial mode and one Bob spatial mode. Every term must hold exactly
/// one photon in each designated spatial mode (post-select first).
pub fn reduce_to_polarization_pair(
    state: &FockState,
    alice: Spatial,
    bob: Spatial,
) -> Result<TwoQubitDensity> {
    let raw = reduce_unnormalized(state, alice, bob)?;
    let trace = raw.trace().re;
    if trace < PRUNE_EPS {
        return Err(SimError::ZeroState);
    }
    TwoQubitDensity::new(raw / C64::new(trace, 0.0))
}

/// Same as [`reduce_to_polarization_pair`] but over a weighted ensemble.
pub fn reduce_mixture_to_polarization_pair(
    mixture: &MixedState,
    alice: Spatial,
    bob: Spatial,
) -> Result<TwoQubitDensity> {
    let mut acc = Matrix4::<C64>::zeros();
    for branch in mixture.branches() {
        if branch.weight < PRUNE_EPS {
            continue;
        }
        let raw = reduce_unnormalized(&branch.state, alice, bob)?;
        let trace = raw.trace().re;
        if trace < PRUNE_EPS {
            return Err(SimError::ZeroState);
        }
        acc += raw * C64::new(branch.weight / trace, 0.0);
    }
    let total = acc.trace().re;
    if total < PRUNE_EPS {
        return Err(SimError::ZeroState);
    }
    TwoQubitDensity::new(acc / C64::new(total, 0.0))
}

fn reduce_unnormalized(state: &FockState, alice: Spatial, bob: Spatial) -> Result<Matrix4<C64>> {
    if alice.party() != Party::A || bob.party() != Party::B {
        return Err(SimError::InvalidParameter(format!(
            "pair reduction expects an Alice and a Bob spatial mode, got ({alice}, {bob})"
        )));
    }
    let basis = state.basis();
    let pair_idx = [
        basis.index_of(ModeId::new(alice, Polarization::H))?,
        basis.index_of(ModeId::new(alice, Polarization::V))?,
        basis.index_of(ModeId::new(bob, Polarization::H))?,
        basis.index_of(ModeId::new(bob, Polarization::V))?,
    ];
    // Group terms by the occupation of all non-pair modes; coherence
    // survives exactly within each group.
    let mut groups: BTreeMap<Vec<u8>, Vec<(usize, C64)>> = BTreeMap::new();
    for (occ, amp) in state.terms() {
        let na = occ.get(pair_idx[0]) + occ.get(pair_idx[1]);
        let nb = occ.get(pair_idx[2]) + occ.get(pair_idx[3]);
        if na != 1 || nb != 1 {
            return Err(SimError::Occupancy(format!(
                "expected one photon in {alice} and one in {bob}, found ({na}, {nb})"
            )));
        }
        let k = 2 * occ.get(pair_idx[1]) as usize + occ.get(pair_idx[3]) as usize;
        let rest: Vec<u8> = occ
            .counts()
            .iter()
            .enumerate()
            .map(|(i, &n)| if pair_idx.contains(&i) { 0 } else { n })
            .collect();
        groups.entry(rest).or_default().push((k, *amp));
    }
    let mut rho = Matrix4::<C64>::zeros();
    for entries in groups.values() {
        for &(k1, a1) in entries {
            for &(k2, a2) in entries {
                rho[(k1, k2)] += a1 * a2.conj();
            }
        }
    }
    Ok(rho)
}
