//! Polarization analyzers, detector models, click sampling and coincidence
//! tallies.
//!
//! Angle convention: `theta1`/`theta2` are *analyzer* angles, i.e. the
//! polarization transmitted to the detector sits at `theta` from H. The
//! half-wave plate in front of the polarizing splitter is physically at
//! `theta / 2` (see [`PolarizationVector::analyzer`]).

use std::collections::BTreeMap;
use std::f64::consts::{FRAC_PI_2, FRAC_PI_4};
use std::fmt;
use std::str::FromStr;

use rand::Rng;

use crate::error::{invalid, Error, Result};
use crate::qcore::{require_finite, PolarizationVector, TwoQubitState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BasisLabel {
    H,
    V,
    /// H + V
    D,
    /// H - V
    A,
    Custom,
}

impl BasisLabel {
    /// Signal-2 analyzer angle for the named bases.
    pub fn angle(self) -> Option<f64> {
        match self {
            BasisLabel::H => Some(0.0),
            BasisLabel::V => Some(FRAC_PI_2),
            BasisLabel::D => Some(FRAC_PI_4),
            BasisLabel::A => Some(3.0 * FRAC_PI_4),
            BasisLabel::Custom => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            BasisLabel::H => "H",
            BasisLabel::V => "V",
            BasisLabel::D => "D",
            BasisLabel::A => "A",
            BasisLabel::Custom => "CUSTOM",
        }
    }
}

impl fmt::Display for BasisLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for BasisLabel {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "H" => BasisLabel::H,
            "V" => BasisLabel::V,
            "D" => BasisLabel::D,
            "A" => BasisLabel::A,
            "CUSTOM" => BasisLabel::Custom,
            other => return Err(invalid(format!("unknown basis label {other:?}"))),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeasurementSetting {
    /// Signal-1 analyzer angle, rad.
    pub theta1: f64,
    /// Signal-2 analyzer angle, rad.
    pub theta2: f64,
    pub basis: BasisLabel,
    /// Phase of the plate inserted in the signal-1 interferometer, rad.
    pub pp_phase: f64,
}

impl MeasurementSetting {
    pub fn custom(theta1: f64, theta2: f64) -> Result<Self> {
        Ok(Self {
            theta1: require_finite("theta1", theta1)?,
            theta2: require_finite("theta2", theta2)?,
            basis: BasisLabel::Custom,
            pp_phase: 0.0,
        })
    }

    /// Signal-2 analyzer fixed by a named basis, signal-1 at `theta1`.
    pub fn with_basis(theta1: f64, basis: BasisLabel) -> Result<Self> {
        let theta2 = basis
            .angle()
            .ok_or_else(|| invalid("CUSTOM settings need explicit angles"))?;
        Ok(Self {
            theta1: require_finite("theta1", theta1)?,
            theta2,
            basis,
            pp_phase: 0.0,
        })
    }

    pub fn analyzer_1(&self) -> PolarizationVector {
        PolarizationVector::analyzer(self.theta1).expect("finite angle")
    }

    pub fn analyzer_2(&self) -> PolarizationVector {
        PolarizationVector::analyzer(self.theta2).expect("finite angle")
    }
}

/// Probabilities of the four analyzer outcomes. The first sign refers to
/// signal 1 (qubit 1), the second to signal 2 (qubit 0); `+` means the photon
/// reaches the detector behind the analyzer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OutcomeProbs {
    pub pp: f64,
    pub pm: f64,
    pub mp: f64,
    pub mm: f64,
}

impl OutcomeProbs {
    pub fn sum(&self) -> f64 {
        self.pp + self.pm + self.mp + self.mm
    }

    pub fn signal1_marginal(&self) -> f64 {
        self.pp + self.pm
    }

    pub fn signal2_marginal(&self) -> f64 {
        self.pp + self.mp
    }

    /// One uniform draw; returns (signal-1 passes, signal-2 passes).
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> (bool, bool) {
        let u: f64 = rng.random::<f64>() * self.sum();
        if u < self.pp {
            (true, true)
        } else if u < self.pp + self.pm {
            (true, false)
        } else if u < self.pp + self.pm + self.mp {
            (false, true)
        } else {
            (false, false)
        }
    }
}

/// Born-rule probabilities for general analyzers on signal 1 and signal 2.
pub fn outcome_probabilities(
    state: &TwoQubitState,
    analyzer_1: &PolarizationVector,
    analyzer_2: &PolarizationVector,
) -> OutcomeProbs {
    let a1p = analyzer_1;
    let a1m = analyzer_1.orthogonal();
    let a2p = analyzer_2;
    let a2m = analyzer_2.orthogonal();
    OutcomeProbs {
        pp: state.projection_probability(a2p, a1p),
        pm: state.projection_probability(&a2m, a1p),
        mp: state.projection_probability(a2p, &a1m),
        mm: state.projection_probability(&a2m, &a1m),
    }
}

pub fn joint_outcome_probabilities(state: &TwoQubitState, setting: &MeasurementSetting) -> OutcomeProbs {
    outcome_probabilities(state, &setting.analyzer_1(), &setting.analyzer_2())
}

/// `Tr[ρ (P(θ2) ⊗ P(θ1))]`
pub fn joint_click_probability(state: &TwoQubitState, setting: &MeasurementSetting) -> f64 {
    state.projection_probability(&setting.analyzer_2(), &setting.analyzer_1())
}

/// Probability that a which-path photon leaves the `+` port of the L/R
/// recombiner when the plate adds `pp_phase` to the R arm. `state` is in the
/// `|m_R n_L>` number basis of [`crate::memory::ideal_psi1`].
pub fn path_port_probability(state: &TwoQubitState, pp_phase: f64) -> f64 {
    let l = state.element(1, 1).re;
    let r = state.element(2, 2).re;
    let coh = state.element(1, 2) * num_complex::Complex64::from_polar(1.0, pp_phase);
    let single = l + r;
    if single <= 0.0 {
        return 0.0;
    }
    ((0.5 * single + coh.re) / single).clamp(0.0, 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectorParams {
    pub efficiency: f64,
    /// Probability of a dark click per gate.
    pub dark_prob: f64,
    pub gate_ns: f64,
}

impl Default for DetectorParams {
    fn default() -> Self {
        Self {
            efficiency: 0.5,
            dark_prob: 0.0,
            gate_ns: 500.0,
        }
    }
}

impl DetectorParams {
    pub fn ideal() -> Self {
        Self {
            efficiency: 1.0,
            dark_prob: 0.0,
            gate_ns: 500.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.efficiency) || !(0.0..=1.0).contains(&self.dark_prob) {
            return Err(invalid("detector probabilities must lie in [0, 1]"));
        }
        if !(self.gate_ns > 0.0) {
            return Err(invalid("gate width must be positive"));
        }
        Ok(())
    }

    /// Click probability with `photons` incident.
    pub fn click_probability(&self, photons: u32) -> f64 {
        let miss = (1.0 - self.efficiency).powi(photons as i32) * (1.0 - self.dark_prob);
        1.0 - miss
    }

    /// Draws two uniforms (signal, dark) regardless of the outcome so that
    /// stream consumption per call is fixed.
    pub fn detect<R: Rng + ?Sized>(&self, photons: u32, rng: &mut R) -> bool {
        let signal = rng.random::<f64>() < 1.0 - (1.0 - self.efficiency).powi(photons as i32);
        let dark = rng.random::<f64>() < self.dark_prob;
        signal || dark
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum DetectorId {
    D1,
    D2,
    D3,
}

impl DetectorId {
    pub const ALL: [DetectorId; 3] = [DetectorId::D1, DetectorId::D2, DetectorId::D3];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn as_str(self) -> &'static str {
        match self {
            DetectorId::D1 => "D1",
            DetectorId::D2 => "D2",
            DetectorId::D3 => "D3",
        }
    }
}

impl fmt::Display for DetectorId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for DetectorId {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "D1" => Ok(DetectorId::D1),
            "D2" => Ok(DetectorId::D2),
            "D3" => Ok(DetectorId::D3),
            other => Err(Error::DataIntegrity(format!("unknown detector {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ClickRecord {
    pub cycle_index: u64,
    pub detector: DetectorId,
    pub clicked: bool,
}

/// Samples one cycle for a single pair: Born outcome, efficiency thinning,
/// dark clicks. Returns the D1 (signal-1) and D2 (signal-2) records.
pub fn sample_clicks<R: Rng + ?Sized>(
    state: &TwoQubitState,
    setting: &MeasurementSetting,
    det1: &DetectorParams,
    det2: &DetectorParams,
    cycle_index: u64,
    rng: &mut R,
) -> (ClickRecord, ClickRecord) {
    let (s1, s2) = joint_outcome_probabilities(state, setting).sample(rng);
    let c1 = det1.detect(s1 as u32, rng);
    let c2 = det2.detect(s2 as u32, rng);
    (
        ClickRecord {
            cycle_index,
            detector: DetectorId::D1,
            clicked: c1,
        },
        ClickRecord {
            cycle_index,
            detector: DetectorId::D2,
            clicked: c2,
        },
    )
}

/// 50:50 routing of `photons` independent photons; returns counts at the
/// two output ports.
pub fn route_photons<R: Rng + ?Sized>(photons: u32, rng: &mut R) -> (u32, u32) {
    let mut a = 0;
    for _ in 0..photons {
        if rng.random::<bool>() {
            a += 1;
        }
    }
    (a, photons - a)
}

/// Beam-splitter stage of the HBT arm with ideal detectors behind it:
/// port a is read by D1, port b by D3.
pub fn hbt_split<R: Rng + ?Sized>(cycle_index: u64, photons: u32, rng: &mut R) -> (ClickRecord, ClickRecord) {
    let (a, b) = route_photons(photons, rng);
    (
        ClickRecord {
            cycle_index,
            detector: DetectorId::D1,
            clicked: a > 0,
        },
        ClickRecord {
            cycle_index,
            detector: DetectorId::D3,
            clicked: b > 0,
        },
    )
}

/// Per-setting tallies over gated cycles.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Tally {
    pub trials: u64,
    /// Indexed by [`DetectorId::index`].
    pub singles: [u64; 3],
    pub pair_12: u64,
    pub pair_13: u64,
    pub pair_23: u64,
    pub triple: u64,
}

impl Tally {
    pub fn record_cycle(&mut self, clicks: [bool; 3]) {
        self.trials += 1;
        for (s, &c) in self.singles.iter_mut().zip(clicks.iter()) {
            *s += c as u64;
        }
        let [c1, c2, c3] = clicks;
        self.pair_12 += (c1 && c2) as u64;
        self.pair_13 += (c1 && c3) as u64;
        self.pair_23 += (c2 && c3) as u64;
        self.triple += (c1 && c2 && c3) as u64;
    }

    pub fn merge(&mut self, other: &Tally) {
        self.trials += other.trials;
        for i in 0..3 {
            self.singles[i] += other.singles[i];
        }
        self.pair_12 += other.pair_12;
        self.pair_13 += other.pair_13;
        self.pair_23 += other.pair_23;
        self.triple += other.triple;
    }

    pub fn singles_1(&self) -> u64 {
        self.singles[0]
    }

    pub fn singles_2(&self) -> u64 {
        self.singles[1]
    }

    /// D1 & D2 same-cycle coincidences.
    pub fn coincidences(&self) -> u64 {
        self.pair_12
    }
}

/// Tallies keyed by measurement setting. Merging is associative and
/// order-independent.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CoincidenceCounts<K: Ord> {
    tallies: BTreeMap<K, Tally>,
}

impl<K: Ord> Default for CoincidenceCounts<K> {
    fn default() -> Self {
        Self {
            tallies: BTreeMap::new(),
        }
    }
}

impl<K: Ord + Clone> CoincidenceCounts<K> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn record_cycle(&mut self, key: &K, clicks: [bool; 3]) {
        self.tallies.entry(key.clone()).or_default().record_cycle(clicks);
    }

    pub fn get(&self, key: &K) -> Option<&Tally> {
        self.tallies.get(key)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&K, &Tally)> {
        self.tallies.iter()
    }

    pub fn len(&self) -> usize {
        self.tallies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tallies.is_empty()
    }

    pub fn total_trials(&self) -> u64 {
        self.tallies.values().map(|t| t.trials).sum()
    }

    pub fn merge_tally(&mut self, key: &K, tally: &Tally) {
        self.tallies.entry(key.clone()).or_default().merge(tally);
    }

    pub fn merge(&mut self, other: &Self) {
        for (k, t) in &other.tallies {
            self.tallies.entry(k.clone()).or_default().merge(t);
        }
    }
}

/// Groups a cycle-ordered record stream and tallies it per setting.
///
/// Every armed cycle counts as one trial of its setting. Records of one
/// cycle must be contiguous, carry one setting, and name each detector at
/// most once; cycle indices must strictly increase between groups.
pub fn count_coincidences<K, I>(records: I) -> Result<CoincidenceCounts<K>>
where
    K: Ord + Clone + fmt::Debug,
    I: IntoIterator<Item = (ClickRecord, K)>,
{
    let mut counts = CoincidenceCounts::new();
    let mut current: Option<(u64, K, [bool; 3], [bool; 3])> = None;
    for (rec, key) in records {
        match &mut current {
            Some((cycle, k, clicks, seen)) if *cycle == rec.cycle_index => {
                if *k != key {
                    return Err(Error::DataIntegrity(format!(
                        "cycle {cycle} carries two settings ({k:?}, {key:?})"
                    )));
                }
                let i = rec.detector.index();
                if seen[i] {
                    return Err(Error::DataIntegrity(format!(
                        "cycle {cycle} lists detector {} twice",
                        rec.detector
                    )));
                }
                seen[i] = true;
                clicks[i] = rec.clicked;
            }
            _ => {
                if let Some((cycle, k, clicks, _)) = current.take() {
                    if rec.cycle_index <= cycle {
                        return Err(Error::DataIntegrity(format!(
                            "cycle {} follows cycle {cycle}: records must be sorted and grouped",
                            rec.cycle_index
                        )));
                    }
                    counts.record_cycle(&k, clicks);
                }
                let mut clicks = [false; 3];
                let mut seen = [false; 3];
                clicks[rec.detector.index()] = rec.clicked;
                seen[rec.detector.index()] = true;
                current = Some((rec.cycle_index, key, clicks, seen));
            }
        }
    }
    if let Some((_, k, clicks, _)) = current {
        counts.record_cycle(&k, clicks);
    }
    Ok(counts)
}
