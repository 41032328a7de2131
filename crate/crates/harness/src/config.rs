//! Run configuration: TOML with dotted sections, every key optional with a
//! documented default, unknown keys rejected.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use spinlink_core::detection::DetectorParams;
use spinlink_core::memory::{
    calibrate_eta0, jitter_for_visibility, LossBudget, MemoryParams, MEASURED_EFFICIENCY_300NS, CALIBRATION_STORAGE_TIME,
};
use spinlink_core::source::{p_double_for_heralded_g2, SourceParams};

use crate::error::{HarnessError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Campaign {
    CauchySchwarz,
    HeraldedG2,
    Whichpath,
    Chsh,
    Tomo,
    EfficiencyScan,
}

impl Campaign {
    pub const ALL: [Campaign; 6] = [
        Campaign::CauchySchwarz,
        Campaign::HeraldedG2,
        Campaign::Whichpath,
        Campaign::Chsh,
        Campaign::Tomo,
        Campaign::EfficiencyScan,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Campaign::CauchySchwarz => "CAUCHY_SCHWARZ",
            Campaign::HeraldedG2 => "HERALDED_G2",
            Campaign::Whichpath => "WHICHPATH",
            Campaign::Chsh => "CHSH",
            Campaign::Tomo => "TOMO",
            Campaign::EfficiencyScan => "EFFICIENCY_SCAN",
        }
    }
}

impl fmt::Display for Campaign {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Campaign {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self> {
        Campaign::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| HarnessError::DataIntegrity(format!("unknown campaign {s:?}")))
    }
}

/// Trap/operate super-cycle. Times in the units named by each key.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentSchedule {
    pub trap_ms: f64,
    pub op_window_ms: f64,
    pub cycles_per_window: u64,
    pub cycle_ns: f64,
    pub state_prep_ms: f64,
    pub storage_time_ns: f64,
}

impl Default for ExperimentSchedule {
    fn default() -> Self {
        Self {
            trap_ms: 7.5,
            op_window_ms: 1.5,
            cycles_per_window: 3000,
            cycle_ns: 500.0,
            state_prep_ms: 1.0,
            storage_time_ns: 300.0,
        }
    }
}

impl ExperimentSchedule {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("trap_ms", self.trap_ms),
            ("op_window_ms", self.op_window_ms),
            ("cycle_ns", self.cycle_ns),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(config(format!("schedule.{name} must be positive")));
            }
        }
        if !(self.state_prep_ms >= 0.0) || !(self.storage_time_ns >= 0.0) {
            return Err(config("schedule.state_prep_ms and storage_time_ns must be non-negative"));
        }
        if self.cycles_per_window == 0 {
            return Err(config("schedule.cycles_per_window must be positive"));
        }
        let busy_ns = self.cycles_per_window as f64 * self.cycle_ns;
        if busy_ns > self.op_window_ms * 1e6 * (1.0 + 1e-12) {
            return Err(config(format!(
                "{} cycles of {} ns do not fit in a {} ms operation window",
                self.cycles_per_window, self.cycle_ns, self.op_window_ms
            )));
        }
        Ok(())
    }

    /// Duration of one trap + operate + state-preparation super-cycle, s.
    pub fn super_cycle_s(&self) -> f64 {
        (self.trap_ms + self.op_window_ms + self.state_prep_ms) * 1e-3
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SourceConfig {
    pub p_pair: f64,
    /// Overrides the value derived from `heralded_g2_target`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p_double: Option<f64>,
    pub heralded_g2_target: f64,
    pub mode_number: f64,
    pub mode_number_s2: f64,
    pub phase_phi: f64,
    pub visibility: f64,
}

impl Default for SourceConfig {
    fn default() -> Self {
        let d = SourceParams::default();
        Self {
            p_pair: d.p_pair,
            p_double: None,
            heralded_g2_target: 0.10,
            mode_number: d.mode_number,
            mode_number_s2: d.mode_number_s2,
            phase_phi: d.phase_phi,
            visibility: d.visibility,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MemoryConfig {
    /// Send signal 1 straight to detection.
    pub bypass: bool,
    /// Overrides calibration against `target_efficiency` at 300 ns.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eta0: Option<f64>,
    pub target_efficiency: f64,
    pub tau_doppler_us: f64,
    pub tau_life_us: f64,
    /// Extra exponential dephasing; absent means none.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tau_extra_us: Option<f64>,
    /// Overrides the value derived from `stored_visibility`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub phase_jitter_sigma: Option<f64>,
    pub stored_visibility: f64,
}

impl Default for MemoryConfig {
    fn default() -> Self {
        Self {
            bypass: false,
            eta0: None,
            target_efficiency: MEASURED_EFFICIENCY_300NS,
            tau_doppler_us: 4.28,
            tau_life_us: 5.0,
            tau_extra_us: None,
            phase_jitter_sigma: None,
            stored_visibility: 0.854,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectorConfig {
    pub efficiency: f64,
    pub dark_prob: f64,
    pub gate_ns: f64,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        let d = DetectorParams::default();
        Self {
            efficiency: d.efficiency,
            dark_prob: d.dark_prob,
            gate_ns: d.gate_ns,
        }
    }
}

impl DetectorConfig {
    pub fn params(&self) -> DetectorParams {
        DetectorParams {
            efficiency: self.efficiency,
            dark_prob: self.dark_prob,
            gate_ns: self.gate_ns,
        }
    }
}

/// D1 = signal 1, D2 = signal 2 (herald), D3 = second HBT / R-path detector.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectorsConfig {
    pub signal1: DetectorConfig,
    pub signal2: DetectorConfig,
    pub hbt: DetectorConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossConfig {
    pub detection_loss: f64,
    pub fiber_loss: f64,
    pub filtering_loss: f64,
    pub excitation_loss: f64,
    /// Replace the signal-1 detector efficiency by the end-to-end transmission.
    pub apply_to_signal1: bool,
}

impl Default for LossConfig {
    fn default() -> Self {
        let b = LossBudget::default();
        Self {
            detection_loss: b.detection_loss,
            fiber_loss: b.fiber_loss,
            filtering_loss: b.filtering_loss,
            excitation_loss: b.excitation_loss,
            apply_to_signal1: false,
        }
    }
}

impl LossConfig {
    pub fn budget(&self) -> LossBudget {
        LossBudget {
            detection_loss: self.detection_loss,
            fiber_loss: self.fiber_loss,
            filtering_loss: self.filtering_loss,
            excitation_loss: self.excitation_loss,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WhichpathConfig {
    /// L/R coherence of the photon before storage.
    pub input_coherence: f64,
    /// L/R coherence of the excitation written into the memory, before jitter.
    pub stored_coherence: f64,
    pub phase: f64,
}

impl Default for WhichpathConfig {
    fn default() -> Self {
        Self {
            input_coherence: 0.906,
            stored_coherence: 1.0,
            phase: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScanConfig {
    pub fringe_points: u32,
    pub storage_times_ns: Vec<f64>,
}

impl Default for ScanConfig {
    fn default() -> Self {
        Self {
            fringe_points: 12,
            storage_times_ns: vec![100.0, 300.0, 600.0, 1000.0, 2000.0, 3000.0, 4000.0, 6000.0],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TomoConfig {
    pub bootstrap_resamples: u32,
    pub max_iters: usize,
    pub tolerance: f64,
}

impl Default for TomoConfig {
    fn default() -> Self {
        Self {
            bootstrap_resamples: 50,
            max_iters: 2000,
            tolerance: 1e-9,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub campaign: Campaign,
    pub seed: u64,
    /// Number of trap/operate super-cycles.
    pub windows: u64,
    pub write_events: bool,
    pub schedule: ExperimentSchedule,
    pub source: SourceConfig,
    pub memory: MemoryConfig,
    pub detector: DetectorsConfig,
    pub losses: LossConfig,
    pub whichpath: WhichpathConfig,
    pub scan: ScanConfig,
    pub tomo: TomoConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            campaign: Campaign::Chsh,
            seed: 1,
            windows: 16,
            write_events: true,
            schedule: ExperimentSchedule::default(),
            source: SourceConfig::default(),
            memory: MemoryConfig::default(),
            detector: DetectorsConfig::default(),
            losses: LossConfig::default(),
            whichpath: WhichpathConfig::default(),
            scan: ScanConfig::default(),
            tomo: TomoConfig::default(),
        }
    }
}

fn config(msg: impl Into<String>) -> HarnessError {
    HarnessError::Config(msg.into())
}

fn core_config(e: spinlink_core::Error) -> HarnessError {
    HarnessError::Config(e.to_string())
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| config(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        self.schedule.validate()?;
        if self.windows == 0 {
            return Err(config("windows must be positive"));
        }
        self.source_params()?;
        self.memory_params()?;
        for d in [&self.detector.signal1, &self.detector.signal2, &self.detector.hbt] {
            d.params().validate().map_err(core_config)?;
        }
        self.losses.budget().validate().map_err(core_config)?;
        let w = &self.whichpath;
        if !(0.0..=1.0).contains(&w.input_coherence) || !(0.0..=1.0).contains(&w.stored_coherence) {
            return Err(config("whichpath coherences must lie in [0, 1]"));
        }
        if !w.phase.is_finite() {
            return Err(config("whichpath.phase must be finite"));
        }
        if self.scan.fringe_points < 5 {
            return Err(config("scan.fringe_points must be at least 5"));
        }
        if self.campaign == Campaign::EfficiencyScan && self.scan.storage_times_ns.is_empty() {
            return Err(config("scan.storage_times_ns must not be empty"));
        }
        if self.scan.storage_times_ns.iter().any(|t| !(*t >= 0.0) || !t.is_finite()) {
            return Err(config("scan.storage_times_ns must be finite and non-negative"));
        }
        if self.campaign == Campaign::Tomo && !self.windows.is_multiple_of(16) {
            return Err(config("TOMO needs windows to be a multiple of 16 so every setting gets equal trials"));
        }
        if self.tomo.max_iters == 0 || !(self.tomo.tolerance > 0.0) {
            return Err(config("tomo.max_iters and tomo.tolerance must be positive"));
        }
        Ok(())
    }

    pub fn source_params(&self) -> Result<SourceParams> {
        let s = &self.source;
        let p_double = match s.p_double {
            Some(p) => p,
            None => p_double_for_heralded_g2(s.p_pair, s.heralded_g2_target).map_err(core_config)?,
        };
        let p = SourceParams {
            p_pair: s.p_pair,
            p_double,
            mode_number: s.mode_number,
            mode_number_s2: s.mode_number_s2,
            phase_phi: s.phase_phi,
            visibility: s.visibility,
        };
        p.validate().map_err(core_config)?;
        Ok(p)
    }

    /// Memory at the scheduled storage time.
    pub fn memory_params(&self) -> Result<MemoryParams> {
        self.memory_params_at(self.schedule.storage_time_ns * 1e-9)
    }

    pub fn memory_params_at(&self, storage_time: f64) -> Result<MemoryParams> {
        let m = &self.memory;
        let mut p = MemoryParams {
            eta0: 1.0,
            tau_doppler: m.tau_doppler_us * 1e-6,
            tau_life: m.tau_life_us * 1e-6,
            tau_extra: m.tau_extra_us.map_or(f64::INFINITY, |t| t * 1e-6),
            phase_jitter_sigma: match m.phase_jitter_sigma {
                Some(s) => s,
                None => jitter_for_visibility(m.stored_visibility).map_err(core_config)?,
            },
            storage_time,
        };
        p.eta0 = match m.eta0 {
            Some(e) => e,
            None => calibrate_eta0(m.target_efficiency, CALIBRATION_STORAGE_TIME, &p).map_err(core_config)?,
        };
        p.validate().map_err(core_config)?;
        Ok(p)
    }

    /// Signal-1 detector, with the loss budget folded in when requested.
    pub fn signal1_detector(&self) -> Result<DetectorParams> {
        let mut d = self.detector.signal1.params();
        if self.losses.apply_to_signal1 {
            d.efficiency = spinlink_core::memory::end_to_end_transmission(&self.losses.budget())
                .map_err(core_config)?
                .transmission;
        }
        Ok(d)
    }
}
