//! Phenomenological Rydberg-EIT memory: retrieval efficiency versus storage
//! time, Doppler dephasing, per-shot phase jitter between the L and R paths,
//! and the optical loss budget.

use std::f64::consts::FRAC_1_SQRT_2;

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{invalid, Error, Result};
use crate::qcore::{cr, TwoQubitState, C64};
use crate::source::{ideal_psi2, PairEmission};

/// Zero-time efficiency that yields 22.9 % after 300 ns with the default
/// decay constants.
pub const MEASURED_EFFICIENCY_300NS: f64 = 0.229;
pub const CALIBRATION_STORAGE_TIME: f64 = 300e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MemoryParams {
    /// Retrieval efficiency at zero storage time.
    pub eta0: f64,
    /// Gaussian (Doppler) dephasing time, s.
    pub tau_doppler: f64,
    /// Rydberg lifetime, s.
    pub tau_life: f64,
    /// Extra exponential dephasing, s; `f64::INFINITY` disables it.
    pub tau_extra: f64,
    /// Standard deviation of the per-shot L/R phase, rad.
    pub phase_jitter_sigma: f64,
    /// Programmed storage time, s.
    pub storage_time: f64,
}

impl Default for MemoryParams {
    fn default() -> Self {
        let mut p = Self {
            eta0: 1.0,
            tau_doppler: 4.28e-6,
            tau_life: 5e-6,
            tau_extra: f64::INFINITY,
            phase_jitter_sigma: jitter_for_visibility(0.854).expect("valid"),
            storage_time: CALIBRATION_STORAGE_TIME,
        };
        p.eta0 = calibrate_eta0(MEASURED_EFFICIENCY_300NS, CALIBRATION_STORAGE_TIME, &p).expect("valid");
        p
    }
}

impl MemoryParams {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.eta0) {
            return Err(invalid("eta0 must lie in [0, 1]"));
        }
        for (name, tau) in [
            ("tau_doppler", self.tau_doppler),
            ("tau_life", self.tau_life),
            ("tau_extra", self.tau_extra),
        ] {
            if !(tau > 0.0) {
                return Err(invalid(format!("{name} must be positive")));
            }
        }
        if !(self.phase_jitter_sigma >= 0.0) || !self.phase_jitter_sigma.is_finite() {
            return Err(invalid("phase_jitter_sigma must be finite and non-negative"));
        }
        if !(self.storage_time >= 0.0) || !self.storage_time.is_finite() {
            return Err(invalid("storage_time must be finite and non-negative"));
        }
        Ok(())
    }

    /// Retrieval efficiency at the programmed storage time.
    pub fn efficiency(&self) -> f64 {
        decay_profile(self.storage_time, self) * self.eta0
    }
}

/// Doppler dephasing time `1 / ((1/λ1 - 1/λ2)·v)`.
///
/// This is `2π / (Δk·v)` with `Δk = 2π(1/λ1 - 1/λ2)`; the cycle (not radian)
/// convention is the one that gives ≈ 4.28 μs for 475/795 nm at 0.276 m/s.
pub fn doppler_dephasing_time(lambda_coupling: f64, lambda_signal: f64, atom_speed: f64) -> Result<f64> {
    if !(lambda_coupling > 0.0) || !(lambda_signal > 0.0) {
        return Err(invalid("wavelengths must be positive"));
    }
    if !(atom_speed > 0.0) || !atom_speed.is_finite() {
        return Err(invalid("atom speed must be positive"));
    }
    let dk = (1.0 / lambda_coupling - 1.0 / lambda_signal).abs();
    if dk == 0.0 {
        return Err(Error::DivisionByZero("equal wavelengths give no wave-vector mismatch".into()));
    }
    Ok(1.0 / (dk * atom_speed))
}

fn decay_profile(t: f64, p: &MemoryParams) -> f64 {
    let life = (-t / p.tau_life).exp();
    let doppler = (-(t / p.tau_doppler).powi(2)).exp();
    let extra = if p.tau_extra.is_infinite() {
        1.0
    } else {
        (-t / p.tau_extra).exp()
    };
    life * doppler * extra
}

/// `η(t) = η0 · e^{-t/τ_life} · e^{-(t/τ_D)²} · e^{-t/τ_extra}`
pub fn retrieval_efficiency(t: f64, params: &MemoryParams) -> Result<f64> {
    if !(t >= 0.0) {
        return Err(invalid("storage time must be non-negative"));
    }
    Ok(params.eta0 * decay_profile(t, params))
}

/// Zero-time efficiency that makes `η(t) = target` for the decay constants
/// in `params` (its `eta0` is ignored).
pub fn calibrate_eta0(target: f64, t: f64, params: &MemoryParams) -> Result<f64> {
    if !(0.0..=1.0).contains(&target) || !(t >= 0.0) {
        return Err(invalid("target must lie in [0, 1] and t must be non-negative"));
    }
    let eta0 = target / decay_profile(t, params);
    if eta0 > 1.0 {
        return Err(invalid(format!(
            "target efficiency {target} at t = {t:e} s needs eta0 = {eta0} > 1"
        )));
    }
    Ok(eta0)
}

/// Gaussian phase jitter whose ensemble average scales coherences by `visibility`:
/// `σ = sqrt(-2 ln V)`.
pub fn jitter_for_visibility(visibility: f64) -> Result<f64> {
    if !(visibility > 0.0 && visibility <= 1.0) {
        return Err(invalid("visibility must lie in (0, 1]"));
    }
    Ok((-2.0 * visibility.ln()).sqrt())
}

#[derive(Debug, Clone, PartialEq)]
pub struct StoredOutcome {
    pub retrieved: bool,
    /// Phase applied to the `|·1>` branch (zero when not retrieved).
    pub phase: f64,
    /// Retrieved state; `None` when the excitation was lost.
    pub state: Option<TwoQubitState>,
}

/// Stores one excitation. Draws one uniform for survival and, on success
/// with nonzero jitter, one normal for the phase.
pub fn store_excitation<R: Rng + ?Sized>(
    state: &TwoQubitState,
    params: &MemoryParams,
    rng: &mut R,
) -> StoredOutcome {
    let eta = params.efficiency();
    let u: f64 = rng.random();
    if u >= eta {
        return StoredOutcome {
            retrieved: false,
            phase: 0.0,
            state: None,
        };
    }
    let phase = sample_jitter(params.phase_jitter_sigma, rng);
    let state = if phase == 0.0 {
        state.clone()
    } else {
        state.with_qubit1_phase(phase)
    };
    StoredOutcome {
        retrieved: true,
        phase,
        state: Some(state),
    }
}

pub(crate) fn sample_jitter<R: Rng + ?Sized>(sigma: f64, rng: &mut R) -> f64 {
    if sigma == 0.0 {
        0.0
    } else {
        Normal::new(0.0, sigma).expect("validated sigma").sample(rng)
    }
}

/// Passes the first excitation of `emission` through the memory. Each
/// excitation of a double-pair event is stored independently with
/// [`store_excitation`].
pub fn apply_memory_channel<R: Rng + ?Sized>(
    emission: &PairEmission,
    params: &MemoryParams,
    rng: &mut R,
) -> Result<StoredOutcome> {
    params.validate()?;
    let state = emission
        .joint_state
        .as_deref()
        .filter(|_| emission.multiplicity >= 1)
        .ok_or_else(|| invalid("memory channel needs an emission with multiplicity >= 1"))?;
    Ok(store_excitation(state, params, rng))
}

/// `(|U_a>|r_L> + e^{iΘ}|D_a>|r_R>)/√2` with `Θ = φ + θ`.
pub fn ideal_psi3(total_phase: f64) -> TwoQubitState {
    ideal_psi2(total_phase)
}

/// Single-excitation which-path state `(|0_R>|1_L> + e^{iφ}|1_R>|0_L>)/√2`.
///
/// Photon-number basis `|m_R n_L>` with index `2·m_R + n_L`, so the diagonal
/// reads `(p00, p10, p01, p11)` with `p_ij` = probability of i excitations
/// in L and j in R.
pub fn ideal_psi1(phase: f64) -> TwoQubitState {
    let z = cr(0.0);
    TwoQubitState::from_pure(&[z, cr(FRAC_1_SQRT_2), C64::from_polar(FRAC_1_SQRT_2, phase), z])
        .expect("normalized")
}

/// Which-path state whose L/R coherence is scaled by `coherence`.
pub fn whichpath_state(phase: f64, coherence: f64) -> Result<TwoQubitState> {
    if !(0.0..=1.0).contains(&coherence) {
        return Err(invalid("coherence must lie in [0, 1]"));
    }
    let pure = ideal_psi1(phase);
    let mut dephased = pure.rho().clone();
    dephased.set(1, 2, cr(0.0));
    dephased.set(2, 1, cr(0.0));
    TwoQubitState::mixture(coherence, &pure, &TwoQubitState::from_density(dephased)?)
}

/// Fractional losses along the signal-1 chain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossBudget {
    pub detection_loss: f64,
    pub fiber_loss: f64,
    pub filtering_loss: f64,
    pub excitation_loss: f64,
}

impl Default for LossBudget {
    fn default() -> Self {
        Self {
            detection_loss: 0.50,
            fiber_loss: 0.30,
            filtering_loss: 0.335,
            excitation_loss: 0.77,
        }
    }
}

impl LossBudget {
    pub fn validate(&self) -> Result<()> {
        let all = [
            self.detection_loss,
            self.fiber_loss,
            self.filtering_loss,
            self.excitation_loss,
        ];
        if all.iter().all(|l| (0.0..1.0).contains(l)) {
            Ok(())
        } else {
            Err(invalid("each loss must lie in [0, 1)"))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transmission {
    pub transmission: f64,
    pub total_loss: f64,
}

/// `T = Π(1 - loss_i)`, total loss `1 - T`.
pub fn end_to_end_transmission(budget: &LossBudget) -> Result<Transmission> {
    budget.validate()?;
    let transmission = [
        budget.detection_loss,
        budget.fiber_loss,
        budget.filtering_loss,
        budget.excitation_loss,
    ]
    .iter()
    .map(|l| 1.0 - l)
    .product::<f64>();
    Ok(Transmission {
        transmission,
        total_loss: 1.0 - transmission,
    })
}
