//! Spontaneous-Raman pair source: per-cycle emission of a signal-1 photon
//! entangled with a low-lying spin wave.

use std::ops::Sub;
use std::sync::Arc;

use rand::Rng;

use crate::error::{invalid, Result};
use crate::qcore::{c, cr, werner_state, TwoQubitState, C64};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SourceParams {
    /// Probability per cycle of exactly one pair.
    pub p_pair: f64,
    /// Probability per cycle of two pairs.
    pub p_double: f64,
    /// Effective mode number of the signal-1 field (unheralded `g = 1 + 1/M`).
    pub mode_number: f64,
    /// Effective mode number of the signal-2 field.
    pub mode_number_s2: f64,
    /// Relative phase between the U and D arms.
    pub phase_phi: f64,
    /// Weight of the ideal state against white noise in the emitted pair state.
    pub visibility: f64,
}

impl Default for SourceParams {
    fn default() -> Self {
        let p_pair = 3.3e-3;
        Self {
            p_pair,
            p_double: p_double_for_heralded_g2(p_pair, 0.10).expect("valid defaults"),
            mode_number: 1.5625,
            mode_number_s2: 1.25,
            phase_phi: 0.0,
            visibility: 1.0,
        }
    }
}

impl SourceParams {
    pub fn validate(&self) -> Result<()> {
        let Self {
            p_pair,
            p_double,
            mode_number,
            mode_number_s2,
            phase_phi,
            visibility,
        } = *self;
        if !(0.0..=1.0).contains(&p_pair) || !(0.0..=1.0).contains(&p_double) {
            return Err(invalid("pair probabilities must lie in [0, 1]"));
        }
        if p_double > p_pair {
            return Err(invalid("p_double must not exceed p_pair"));
        }
        if p_pair + p_double > 1.0 {
            return Err(invalid("p_pair + p_double must not exceed 1"));
        }
        if !(mode_number >= 1.0) || !(mode_number_s2 >= 1.0) {
            return Err(invalid("mode numbers must be >= 1"));
        }
        if !phase_phi.is_finite() {
            return Err(invalid("phase_phi must be finite"));
        }
        if !(0.0..=1.0).contains(&visibility) {
            return Err(invalid("source visibility must lie in [0, 1]"));
        }
        Ok(())
    }

    /// The joint atom-photon state attached to each emitted pair.
    pub fn pair_state(&self) -> Result<TwoQubitState> {
        let ideal = ideal_psi2(self.phase_phi);
        TwoQubitState::mixture(self.visibility, &ideal, &werner_state(0.0)?)
    }
}

/// Double-pair probability that makes the heralded autocorrelation of an
/// ideally routed source equal `target`.
///
/// With `x = p_double / p_pair` the heralded statistic for unit-efficiency
/// detectors is `2x(1 + x) / (1 + 3x/2)²`; this solves that for `x`.
pub fn p_double_for_heralded_g2(p_pair: f64, target: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&p_pair) {
        return Err(invalid("p_pair must lie in [0, 1]"));
    }
    if !(0.0..0.5).contains(&target) {
        return Err(invalid("heralded g2 target must lie in [0, 0.5)"));
    }
    let a = 2.0 - 2.25 * target;
    let b = 2.0 - 3.0 * target;
    let x = (-b + (b * b + 4.0 * a * target).sqrt()) / (2.0 * a);
    let q = p_pair * x;
    if p_pair + q > 1.0 {
        return Err(invalid("requested double-pair rate exceeds unit probability"));
    }
    Ok(q)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PairEmission {
    pub cycle_index: u64,
    /// 0, 1 or 2 pairs.
    pub multiplicity: u8,
    /// Shared state of each emitted pair; `None` when nothing was emitted.
    pub joint_state: Option<Arc<TwoQubitState>>,
}

/// `(|U_a>|H_s1> + e^{iφ}|D_a>|V_s1>)/√2`
pub fn ideal_psi2(phase_phi: f64) -> TwoQubitState {
    let amp = std::f64::consts::FRAC_1_SQRT_2;
    let ph: C64 = C64::from_polar(amp, phase_phi);
    TwoQubitState::from_pure(&[cr(amp), c(0.0, 0.0), c(0.0, 0.0), ph]).expect("normalized")
}

/// Pair source with its joint state prepared once.
#[derive(Debug, Clone)]
pub struct PairSource {
    params: SourceParams,
    state: Arc<TwoQubitState>,
}

impl PairSource {
    pub fn new(params: SourceParams) -> Result<Self> {
        params.validate()?;
        let state = Arc::new(params.pair_state()?);
        Ok(Self { params, state })
    }

    pub fn params(&self) -> &SourceParams {
        &self.params
    }

    pub fn state(&self) -> &Arc<TwoQubitState> {
        &self.state
    }

    /// One uniform draw decides the multiplicity; the draw is the first
    /// value taken from `rng`.
    pub fn sample_emission<R: Rng + ?Sized>(&self, cycle_index: u64, rng: &mut R) -> PairEmission {
        let u: f64 = rng.random();
        let p = &self.params;
        let multiplicity = if u < p.p_double {
            2
        } else if u < p.p_double + p.p_pair {
            1
        } else {
            0
        };
        PairEmission {
            cycle_index,
            multiplicity,
            joint_state: (multiplicity > 0).then(|| Arc::clone(&self.state)),
        }
    }
}

/// Convenience wrapper building the source on the fly.
pub fn sample_emission<R: Rng + ?Sized>(
    params: &SourceParams,
    cycle_index: u64,
    rng: &mut R,
) -> Result<PairEmission> {
    Ok(PairSource::new(*params)?.sample_emission(cycle_index, rng))
}

/// `1 + 1/M` for an M-mode thermal field.
pub fn expected_autocorrelation(mode_number: f64) -> Result<f64> {
    if !(mode_number >= 1.0) {
        return Err(invalid("mode number must be >= 1"));
    }
    Ok(1.0 + 1.0 / mode_number)
}

/// Wave vector in rad/m.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WaveVector {
    pub kx: f64,
    pub ky: f64,
    pub kz: f64,
}

impl WaveVector {
    pub fn new(kx: f64, ky: f64, kz: f64) -> Result<Self> {
        if ![kx, ky, kz].iter().all(|k| k.is_finite()) {
            return Err(invalid("wave vector components must be finite"));
        }
        Ok(Self { kx, ky, kz })
    }

    /// `|k| = 2π/λ` along a unit direction.
    pub fn along(direction: [f64; 3], wavelength: f64) -> Result<Self> {
        let n = direction.iter().map(|d| d * d).sum::<f64>().sqrt();
        if !(n > 0.0) || !(wavelength > 0.0) {
            return Err(invalid("direction must be nonzero and wavelength positive"));
        }
        let k = std::f64::consts::TAU / wavelength / n;
        Self::new(direction[0] * k, direction[1] * k, direction[2] * k)
    }

    pub fn norm(&self) -> f64 {
        (self.kx * self.kx + self.ky * self.ky + self.kz * self.kz).sqrt()
    }
}

impl Sub for WaveVector {
    type Output = WaveVector;
    fn sub(self, rhs: WaveVector) -> WaveVector {
        WaveVector {
            kx: self.kx - rhs.kx,
            ky: self.ky - rhs.ky,
            kz: self.kz - rhs.kz,
        }
    }
}

/// Spin-wave wave vector `k_drive - k_photon` (pump or coupling minus signal).
pub fn spin_wave_wavevector(k_drive: WaveVector, k_photon: WaveVector) -> WaveVector {
    k_drive - k_photon
}
