//! Measurement settings for each campaign and the per-cycle Monte Carlo.
//!
//! Window `w` of the run uses `settings[w % settings.len()]`; cycle `k` of
//! window `w` has global index `w·cycles_per_window + k` and draws every
//! random number from `StreamFactory::new(seed).stream(global)`. Nothing
//! else feeds the simulation, so any worker count gives the same events.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI, TAU};
use std::fmt::Write as _;
use std::io::Write;

use rand::Rng;
use rayon::prelude::*;
use spinlink_core::analysis::{chsh_pairs, quad_angles};
use spinlink_core::detection::{
    outcome_probabilities, path_port_probability, CoincidenceCounts, DetectorId, DetectorParams, Tally,
};
use spinlink_core::memory::{store_excitation, whichpath_state, MemoryParams};
use spinlink_core::qcore::{PolarizationVector, TwoQubitState};
use spinlink_core::rng::{StreamFactory, StreamRng};
use spinlink_core::source::PairSource;
use spinlink_core::tomography::tomo_settings_16;

use crate::config::{Campaign, RunConfig};
use crate::error::{HarnessError, Result};

pub const EVENT_HEADER: &str = "cycle,detector,clicked,setting_theta1,setting_theta2,basis,campaign";

/// Identifies a setting exactly as it appears in the event file.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SettingKey {
    pub basis: String,
    pub theta1: String,
    pub theta2: String,
}

impl SettingKey {
    pub fn new(basis: &str, theta1: f64, theta2: f64) -> Self {
        Self {
            basis: basis.to_string(),
            theta1: format!("{theta1:.6}"),
            theta2: format!("{theta2:.6}"),
        }
    }
}

#[derive(Debug, Clone)]
pub enum Probe {
    /// Polarization analyzers: `a1` on signal 1, `a2` on signal 2.
    Analyzers {
        a1: PolarizationVector,
        a2: PolarizationVector,
    },
    /// Photon counting on both signals, no polarization optics.
    Counting,
    /// Signal 1 split 50:50 onto D1 and D3, signal 2 heralds on D2.
    Hbt,
    /// Which-path excitation read out on separate L (D1) and R (D3) detectors.
    Paths { state: TwoQubitState },
    /// L and R recombined with `pp_phase` on the R arm; + port on D1, - on D3.
    PathPhase { state: TwoQubitState, pp_phase: f64 },
}

#[derive(Debug, Clone)]
pub struct Setting {
    pub key: SettingKey,
    pub theta1: f64,
    pub theta2: f64,
    /// Memory applied to signal 1; `None` sends it straight to detection.
    pub memory: Option<MemoryParams>,
    pub probe: Probe,
}

impl Setting {
    fn new(basis: &str, theta1: f64, theta2: f64, memory: Option<MemoryParams>, probe: Probe) -> Self {
        Self {
            key: SettingKey::new(basis, theta1, theta2),
            theta1,
            theta2,
            memory,
            probe,
        }
    }
}

pub fn armed_detectors(campaign: Campaign) -> &'static [DetectorId] {
    match campaign {
        Campaign::HeraldedG2 | Campaign::Whichpath => &[DetectorId::D1, DetectorId::D2, DetectorId::D3],
        _ => &[DetectorId::D1, DetectorId::D2],
    }
}

/// Signal-2 analyzer angle of each polarization fringe.
pub const FRINGE_BASES: [(&str, f64); 4] = [("H", 0.0), ("V", FRAC_PI_2), ("D", FRAC_PI_4), ("A", 3.0 * FRAC_PI_4)];

fn analyzer(theta: f64) -> Result<PolarizationVector> {
    Ok(PolarizationVector::analyzer(theta)?)
}

/// The ordered setting list of a campaign.
pub fn settings_for(cfg: &RunConfig) -> Result<Vec<Setting>> {
    let stored = if cfg.memory.bypass {
        None
    } else {
        Some(cfg.memory_params()?)
    };
    let n = cfg.scan.fringe_points;
    let mut out = Vec::new();
    match cfg.campaign {
        Campaign::CauchySchwarz => out.push(Setting::new("CS", 0.0, 0.0, stored, Probe::Counting)),
        Campaign::HeraldedG2 => {
            out.push(Setting::new("HBT_IN", 0.0, 0.0, None, Probe::Hbt));
            out.push(Setting::new("HBT_OUT", 0.0, 0.0, stored, Probe::Hbt));
        }
        Campaign::Whichpath => {
            let w = &cfg.whichpath;
            for (tag, coherence, mem) in [("IN", w.input_coherence, None), ("OUT", w.stored_coherence, stored)] {
                let state = whichpath_state(w.phase, coherence)?;
                out.push(Setting::new(
                    &format!("PATHS_{tag}"),
                    0.0,
                    0.0,
                    mem,
                    Probe::Paths { state: state.clone() },
                ));
                for k in 0..n {
                    let pp = TAU * k as f64 / n as f64;
                    out.push(Setting::new(
                        &format!("PP_{tag}"),
                        pp,
                        0.0,
                        mem,
                        Probe::PathPhase {
                            state: state.clone(),
                            pp_phase: pp,
                        },
                    ));
                }
            }
        }
        Campaign::Chsh => {
            for (t1, t2) in chsh_pairs() {
                for (a, b) in quad_angles(t1, t2) {
                    let s = Setting::new(
                        "CHSH",
                        a,
                        b,
                        stored,
                        Probe::Analyzers {
                            a1: analyzer(a)?,
                            a2: analyzer(b)?,
                        },
                    );
                    if !out.iter().any(|o: &Setting| o.key == s.key) {
                        out.push(s);
                    }
                }
            }
            for (label, t2) in FRINGE_BASES {
                for k in 0..n {
                    let t1 = PI * k as f64 / n as f64;
                    out.push(Setting::new(
                        label,
                        t1,
                        t2,
                        stored,
                        Probe::Analyzers {
                            a1: analyzer(t1)?,
                            a2: analyzer(t2)?,
                        },
                    ));
                }
            }
        }
        Campaign::Tomo => {
            for t in tomo_settings_16() {
                // projector_1 acts on qubit 0 (signal 2), projector_2 on qubit 1 (signal 1)
                out.push(Setting::new(
                    &t.label,
                    0.0,
                    0.0,
                    stored,
                    Probe::Analyzers {
                        a1: t.projector_2,
                        a2: t.projector_1,
                    },
                ));
            }
        }
        Campaign::EfficiencyScan => {
            out.push(Setting::new("REF", 0.0, 0.0, None, Probe::Counting));
            for &t in &cfg.scan.storage_times_ns {
                let mem = cfg.memory_params_at(t * 1e-9)?;
                out.push(Setting::new(&storage_label(t), 0.0, 0.0, Some(mem), Probe::Counting));
            }
        }
    }
    Ok(out)
}

pub fn storage_label(t_ns: f64) -> String {
    format!("T{t_ns}")
}

/// Everything one cycle needs, prepared once per run.
pub struct CycleContext {
    pub source: PairSource,
    pub det1: DetectorParams,
    pub det2: DetectorParams,
    pub det3: DetectorParams,
}

impl CycleContext {
    pub fn new(cfg: &RunConfig) -> Result<Self> {
        Ok(Self {
            source: PairSource::new(cfg.source_params()?)?,
            det1: cfg.signal1_detector()?,
            det2: cfg.detector.signal2.params(),
            det3: cfg.detector.hbt.params(),
        })
    }
}

fn survives<R: Rng + ?Sized>(memory: &Option<MemoryParams>, rng: &mut R) -> bool {
    match memory {
        Some(m) => rng.random::<f64>() < m.efficiency(),
        None => true,
    }
}

/// One gated cycle. Returns the click of each detector (D3 false when unarmed).
pub fn simulate_cycle(ctx: &CycleContext, setting: &Setting, global: u64, rng: &mut StreamRng) -> [bool; 3] {
    let emission = ctx.source.sample_emission(global, rng);
    let pairs = emission.multiplicity as u32;
    let (mut n1, mut n2, mut n3) = (0u32, 0u32, 0u32);
    match &setting.probe {
        Probe::Analyzers { a1, a2 } => {
            let state = ctx.source.state();
            for _ in 0..pairs {
                let (s1, s2) = match &setting.memory {
                    Some(m) => {
                        let out = store_excitation(state, m, rng);
                        match out.state {
                            Some(st) => outcome_probabilities(&st, a1, a2).sample(rng),
                            None => {
                                let p2 = outcome_probabilities(state, a1, a2).signal2_marginal();
                                (false, rng.random::<f64>() < p2)
                            }
                        }
                    }
                    None => outcome_probabilities(state, a1, a2).sample(rng),
                };
                n1 += s1 as u32;
                n2 += s2 as u32;
            }
        }
        Probe::Counting => {
            for _ in 0..pairs {
                n2 += 1;
                n1 += survives(&setting.memory, rng) as u32;
            }
        }
        Probe::Hbt => {
            for _ in 0..pairs {
                n2 += 1;
                if survives(&setting.memory, rng) {
                    if rng.random::<bool>() {
                        n1 += 1;
                    } else {
                        n3 += 1;
                    }
                }
            }
        }
        Probe::Paths { state } | Probe::PathPhase { state, .. } => {
            for _ in 0..pairs {
                n2 += 1;
                let st = match &setting.memory {
                    Some(m) => match store_excitation(state, m, rng).state {
                        Some(st) => st,
                        None => continue,
                    },
                    None => state.clone(),
                };
                let p_first = match &setting.probe {
                    Probe::PathPhase { pp_phase, .. } => path_port_probability(&st, *pp_phase),
                    _ => {
                        let l = st.element(1, 1).re;
                        let r = st.element(2, 2).re;
                        l / (l + r)
                    }
                };
                if rng.random::<f64>() < p_first {
                    n1 += 1;
                } else {
                    n3 += 1;
                }
            }
        }
    }
    let c1 = ctx.det1.detect(n1, rng);
    let c2 = ctx.det2.detect(n2, rng);
    let c3 = ctx.det3.detect(n3, rng);
    [c1, c2, c3]
}

/// Result of one trap/operate window.
pub struct WindowOutput {
    pub setting: usize,
    pub tally: Tally,
    pub rows: String,
}

pub fn simulate_window(
    cfg: &RunConfig,
    ctx: &CycleContext,
    settings: &[Setting],
    streams: &StreamFactory,
    window: u64,
    with_rows: bool,
) -> WindowOutput {
    let idx = (window % settings.len() as u64) as usize;
    let setting = &settings[idx];
    let armed = armed_detectors(cfg.campaign);
    let per = cfg.schedule.cycles_per_window;
    let mut tally = Tally::default();
    let mut rows = String::new();
    let campaign = cfg.campaign.as_str();
    for k in 0..per {
        let global = window * per + k;
        let mut rng = streams.stream(global);
        let mut clicks = simulate_cycle(ctx, setting, global, &mut rng);
        if !armed.contains(&DetectorId::D3) {
            clicks[2] = false;
        }
        tally.record_cycle(clicks);
        if with_rows {
            for d in armed {
                let _ = writeln!(
                    rows,
                    "{global},{d},{},{},{},{},{campaign}",
                    clicks[d.index()] as u8,
                    setting.key.theta1,
                    setting.key.theta2,
                    setting.key.basis
                );
            }
        }
    }
    WindowOutput {
        setting: idx,
        tally,
        rows,
    }
}

#[derive(Debug, Clone)]
pub struct SimulationOutput {
    pub tallies: CoincidenceCounts<SettingKey>,
    pub cycles: u64,
    pub event_rows: u64,
}

/// Runs every window, writing event rows to `sink` in cycle order.
pub fn simulate(cfg: &RunConfig, mut sink: Option<&mut dyn Write>, threads: usize) -> Result<SimulationOutput> {
    cfg.validate()?;
    let settings = settings_for(cfg)?;
    let ctx = CycleContext::new(cfg)?;
    let streams = StreamFactory::new(cfg.seed);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| HarnessError::Config(e.to_string()))?;
    let with_rows = sink.is_some();
    if let Some(w) = sink.as_mut() {
        writeln!(w, "{EVENT_HEADER}").map_err(|e| HarnessError::io("events", e))?;
    }
    let mut tallies: CoincidenceCounts<SettingKey> = CoincidenceCounts::new();
    let batch = 64u64;
    let mut start = 0;
    while start < cfg.windows {
        let end = (start + batch).min(cfg.windows);
        let outs: Vec<WindowOutput> = pool.install(|| {
            (start..end)
                .into_par_iter()
                .map(|w| simulate_window(cfg, &ctx, &settings, &streams, w, with_rows))
                .collect()
        });
        for o in outs {
            tallies.merge_tally(&settings[o.setting].key, &o.tally);
            if let Some(w) = sink.as_mut() {
                w.write_all(o.rows.as_bytes()).map_err(|e| HarnessError::io("events", e))?;
            }
        }
        start = end;
    }
    let cycles = cfg.windows * cfg.schedule.cycles_per_window;
    Ok(SimulationOutput {
        tallies,
        cycles,
        event_rows: cycles * armed_detectors(cfg.campaign).len() as u64,
    })
}
