//! Per-campaign reduction of tallies to the reported statistics.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use spinlink_core::analysis::{
    bootstrap_stderr, cauchy_schwarz_r, chsh_e, chsh_pairs, chsh_s, concurrence_whichpath, cross_correlation,
    fit_fringe_visibility, heralded_autocorrelation, quad_angles, ChshQuad, CorrelationEstimate, FringeFit,
    ProbTable,
};
use spinlink_core::detection::{CoincidenceCounts, Tally};
use spinlink_core::memory::retrieval_efficiency;
use spinlink_core::qcore::wootters_concurrence;
use spinlink_core::rng::StreamFactory;
use spinlink_core::source::expected_autocorrelation;
use spinlink_core::tomography::{
    bootstrap_fidelity, fidelity_to_bell, mle_reconstruct, tomo_settings_16, MleOptions, TomoCounts,
};

use crate::campaign::{settings_for, storage_label, SettingKey, FRINGE_BASES};
use crate::config::{Campaign, RunConfig};
use crate::error::{HarnessError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Metric {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub value: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stderr: Option<f64>,
    /// "ok" or "undefined"
    pub status: String,
    pub campaign: String,
    pub seed: u64,
    pub events: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DensityMatrix {
    pub re: Vec<Vec<f64>>,
    pub im: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Summary {
    pub campaign: Campaign,
    pub seed: u64,
    pub windows: u64,
    pub cycles: u64,
    pub events: u64,
    pub duration_s: f64,
    pub metrics: BTreeMap<String, Metric>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rho: Option<DensityMatrix>,
    #[serde(skip)]
    pub fringes: Vec<FringeScan>,
    #[serde(skip)]
    pub warnings: Vec<String>,
}

impl Summary {
    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("summary serializes")
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| HarnessError::Report(format!("summary: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn metric(&self, name: &str) -> Option<&Metric> {
        self.metrics.get(name)
    }

    /// Value of a metric whose status is "ok".
    pub fn value(&self, name: &str) -> Option<f64> {
        self.metrics.get(name).filter(|m| m.status == "ok").and_then(|m| m.value)
    }
}

/// Counts along a scanned phase or angle, with the fit when it succeeded.
#[derive(Debug, Clone, PartialEq)]
pub struct FringeScan {
    pub name: String,
    pub points: Vec<(f64, f64)>,
    pub fit: Option<FringeFit>,
}

struct Builder<'a> {
    cfg: &'a RunConfig,
    events: u64,
    metrics: BTreeMap<String, Metric>,
    warnings: Vec<String>,
}

impl Builder<'_> {
    fn put(&mut self, name: &str, est: spinlink_core::Result<CorrelationEstimate>, note: Option<&str>) {
        let m = match est {
            Ok(e) => Metric {
                value: Some(e.value),
                stderr: e.stderr.is_finite().then_some(e.stderr),
                status: "ok".into(),
                campaign: self.cfg.campaign.to_string(),
                seed: self.cfg.seed,
                events: self.events,
                note: note.map(str::to_string),
            },
            Err(err) => {
                self.warnings.push(format!("{name}: {err}"));
                Metric {
                    value: None,
                    stderr: None,
                    status: "undefined".into(),
                    campaign: self.cfg.campaign.to_string(),
                    seed: self.cfg.seed,
                    events: self.events,
                    note: Some(err.to_string()),
                }
            }
        };
        self.metrics.insert(name.to_string(), m);
    }

    fn put_value(&mut self, name: &str, value: f64, note: Option<&str>) {
        self.put(name, Ok(CorrelationEstimate::exact(value)), note);
    }
}

fn tally(counts: &CoincidenceCounts<SettingKey>, key: &SettingKey) -> Tally {
    counts.get(key).copied().unwrap_or_default()
}

/// Reduces tallies to a summary. `events` and `cycles` are provenance only.
pub fn summarize(
    cfg: &RunConfig,
    counts: &CoincidenceCounts<SettingKey>,
    cycles: u64,
    events: u64,
) -> Result<Summary> {
    let settings = settings_for(cfg)?;
    for (key, _) in counts.iter() {
        if !settings.iter().any(|s| &s.key == key) {
            return Err(HarnessError::DataIntegrity(format!(
                "events contain setting {key:?} not produced by this config"
            )));
        }
    }
    let mut b = Builder {
        cfg,
        events,
        metrics: BTreeMap::new(),
        warnings: Vec::new(),
    };
    let mut fringes = Vec::new();
    let mut rho = None;
    match cfg.campaign {
        Campaign::CauchySchwarz => cauchy_schwarz(&mut b, counts)?,
        Campaign::HeraldedG2 => {
            for (label, name) in [("HBT_IN", "g2_heralded_input"), ("HBT_OUT", "g2_heralded_retrieved")] {
                let t = tally(counts, &SettingKey::new(label, 0.0, 0.0));
                let est = heralded_autocorrelation(
                    t.singles[1] as f64,
                    t.pair_12 as f64,
                    t.pair_23 as f64,
                    t.triple as f64,
                );
                b.put(name, est, None);
                b.put_value(&format!("heralds_{}", label[4..].to_lowercase()), t.singles[1] as f64, None);
            }
        }
        Campaign::Whichpath => whichpath(&mut b, counts, &mut fringes)?,
        Campaign::Chsh => chsh(&mut b, counts, &mut fringes),
        Campaign::Tomo => rho = tomo(&mut b, counts)?,
        Campaign::EfficiencyScan => efficiency_scan(&mut b, counts)?,
    }
    Ok(Summary {
        campaign: cfg.campaign,
        seed: cfg.seed,
        windows: cfg.windows,
        cycles,
        events,
        duration_s: cfg.windows as f64 * cfg.schedule.super_cycle_s(),
        metrics: b.metrics,
        rho,
        fringes,
        warnings: b.warnings,
    })
}

fn cauchy_schwarz(b: &mut Builder, counts: &CoincidenceCounts<SettingKey>) -> Result<()> {
    let t = tally(counts, &SettingKey::new("CS", 0.0, 0.0));
    let g12 = cross_correlation(t.trials, t.singles_1(), t.singles_2(), t.coincidences());
    let g11 = CorrelationEstimate::exact(expected_autocorrelation(b.cfg.source.mode_number)?);
    let g22 = CorrelationEstimate::exact(expected_autocorrelation(b.cfg.source.mode_number_s2)?);
    b.put("g12", g12.clone(), None);
    b.put("g11", Ok(g11), Some("thermal mode model 1 + 1/M"));
    b.put("g22", Ok(g22), Some("thermal mode model 1 + 1/M"));
    let r = g12.and_then(|g| cauchy_schwarz_r(g, g11, g22));
    b.put("R", r, Some("lower-bound style statistic: R >= value"));
    b.put_value("coincidences", t.coincidences() as f64, None);
    Ok(())
}

fn fit_scan(name: &str, points: Vec<(f64, f64)>) -> (spinlink_core::Result<FringeFit>, FringeScan) {
    let fit = fit_fringe_visibility(&points);
    let scan = FringeScan {
        name: name.to_string(),
        points,
        fit: fit.as_ref().ok().copied(),
    };
    (fit, scan)
}

fn visibility(fit: &spinlink_core::Result<FringeFit>) -> spinlink_core::Result<CorrelationEstimate> {
    fit.clone()
        .map(|f| CorrelationEstimate::new(f.visibility, f.visibility_stderr))
}

fn whichpath(
    b: &mut Builder,
    counts: &CoincidenceCounts<SettingKey>,
    fringes: &mut Vec<FringeScan>,
) -> Result<()> {
    let n = b.cfg.scan.fringe_points;
    let streams = StreamFactory::new(b.cfg.seed).domain(0xB007);
    for (i, tag) in ["IN", "OUT"].into_iter().enumerate() {
        let lower = tag.to_lowercase();
        let points: Vec<(f64, f64)> = (0..n)
            .map(|k| {
                let pp = std::f64::consts::TAU * k as f64 / n as f64;
                (pp, tally(counts, &SettingKey::new(&format!("PP_{tag}"), pp, 0.0)).pair_12 as f64)
            })
            .collect();
        let (fit, scan) = fit_scan(&format!("whichpath_{lower}"), points);
        fringes.push(scan);
        let vis = visibility(&fit);
        b.put(&format!("visibility_whichpath_{lower}"), vis.clone(), None);

        // heralded occupation of L (D1) and R (D3)
        let t = tally(counts, &SettingKey::new(&format!("PATHS_{tag}"), 0.0, 0.0));
        let n11 = t.triple;
        let n10 = t.pair_12 - n11;
        let n01 = t.pair_23 - n11;
        let n00 = t.singles[1] + n11 - t.pair_12 - t.pair_23;
        let table = ProbTable::from_counts(n00, n01, n10, n11);
        if let Ok(p) = &table {
            for (name, v) in [("p00", p.p00), ("p01", p.p01), ("p10", p.p10), ("p11", p.p11)] {
                b.put_value(&format!("{name}_{lower}"), v, None);
            }
        }
        let con = match (&table, &vis) {
            (Ok(p), Ok(v)) => concurrence_whichpath(p, v.value.min(1.0)).map(|value| {
                let mut rng = streams.stream(i as u64);
                let vv = v.value.min(1.0);
                let sd_counts = bootstrap_stderr(&[n00, n01, n10, n11], 200, &mut rng, |c| {
                    concurrence_whichpath(&ProbTable::from_counts(c[0], c[1], c[2], c[3])?, vv)
                })
                .unwrap_or(0.0);
                let slope = if value > 0.0 { (p.p01 + p.p10) / p.total() } else { 0.0 };
                let sd = (sd_counts.powi(2) + (slope * v.stderr).powi(2)).sqrt();
                CorrelationEstimate::new(value, sd)
            }),
            (Err(e), _) | (_, Err(e)) => Err(e.clone()),
        };
        b.put(
            &format!("concurrence_{lower}"),
            con,
            Some("stderr: Poisson bootstrap of the occupation counts plus visibility propagation"),
        );
        b.put_value(&format!("heralds_{lower}"), t.singles[1] as f64, None);
    }
    Ok(())
}

/// Expected dark-count contribution to a coincidence tally.
fn dark_coincidences(t: &Tally, d1: f64, d2: f64) -> f64 {
    let n = t.trials as f64;
    (d1 * t.singles[1] as f64 + d2 * t.singles[0] as f64 - d1 * d2 * n).max(0.0)
}

fn chsh(b: &mut Builder, counts: &CoincidenceCounts<SettingKey>, fringes: &mut Vec<FringeScan>) {
    let mut es = Vec::new();
    let mut total = 0;
    for (i, (t1, t2)) in chsh_pairs().into_iter().enumerate() {
        let c: Vec<u64> = quad_angles(t1, t2)
            .iter()
            .map(|&(a, bb)| tally(counts, &SettingKey::new("CHSH", a, bb)).coincidences())
            .collect();
        total += c.iter().sum::<u64>();
        let e = chsh_e(&ChshQuad {
            c_pp: c[0],
            c_mm: c[1],
            c_mp: c[2],
            c_pm: c[3],
        });
        b.put(&format!("E{i}"), e.clone(), None);
        es.push(e);
    }
    let s = es.into_iter().collect::<spinlink_core::Result<Vec<_>>>().map(|v| chsh_s([v[0], v[1], v[2], v[3]]));
    b.put("S", s, None);
    b.put_value("coincidences_chsh", total as f64, None);

    let n = b.cfg.scan.fringe_points;
    let d1 = b.cfg.detector.signal1.dark_prob;
    let d2 = b.cfg.detector.signal2.dark_prob;
    for (label, t2) in FRINGE_BASES {
        let mut raw = Vec::new();
        let mut corrected = Vec::new();
        for k in 0..n {
            let t1 = std::f64::consts::PI * k as f64 / n as f64;
            let t = tally(counts, &SettingKey::new(label, t1, t2));
            let c = t.coincidences() as f64;
            // coincidence fringes oscillate as cos 2θ1
            raw.push((2.0 * t1, c));
            corrected.push((2.0 * t1, (c - dark_coincidences(&t, d1, d2)).max(0.0)));
        }
        let (fit, scan) = fit_scan(&format!("fringe_{label}"), raw);
        fringes.push(scan);
        b.put(&format!("fringe_visibility_{label}"), visibility(&fit), None);
        let (fit_c, _) = fit_scan(&format!("fringe_{label}_corrected"), corrected);
        b.put(
            &format!("fringe_visibility_{label}_corrected"),
            visibility(&fit_c),
            Some("expected dark-count coincidences subtracted"),
        );
    }
}

fn tomo(b: &mut Builder, counts: &CoincidenceCounts<SettingKey>) -> Result<Option<DensityMatrix>> {
    let settings = tomo_settings_16();
    let tallies: Vec<Tally> = settings
        .iter()
        .map(|s| tally(counts, &SettingKey::new(&s.label, 0.0, 0.0)))
        .collect();
    let trials = tallies.iter().map(|t| t.trials).max().unwrap_or(0);
    if tallies.iter().any(|t| t.trials != trials) {
        return Err(HarnessError::DataIntegrity("tomography settings have unequal trial counts".into()));
    }
    let data = TomoCounts::new(settings, tallies.iter().map(|t| t.coincidences()).collect(), trials)?;
    let options = MleOptions {
        max_iters: b.cfg.tomo.max_iters,
        tolerance: b.cfg.tomo.tolerance,
    };
    b.put_value("coincidences_tomo", data.total() as f64, None);
    let mle = match mle_reconstruct(&data, options) {
        Ok(m) => m,
        Err(e) => {
            for name in ["fidelity", "concurrence_tomo", "purity"] {
                b.put(name, Err(e.clone()), None);
            }
            return Ok(None);
        }
    };
    let f = fidelity_to_bell(&mle.state)?;
    let resamples = b.cfg.tomo.bootstrap_resamples as usize;
    let sd = if resamples >= 2 {
        bootstrap_fidelity(&data, resamples, &StreamFactory::new(b.cfg.seed).domain(0x70C0), options).ok()
    } else {
        None
    };
    b.put(
        "fidelity",
        Ok(CorrelationEstimate::new(f, sd.unwrap_or(f64::NAN))),
        Some("stderr: Poisson bootstrap of the 16 coincidence counts"),
    );
    b.put_value("concurrence_tomo", wootters_concurrence(mle.state.rho())?, None);
    b.put_value("purity", mle.state.purity(), None);
    b.put_value("mle_converged", mle.converged as u8 as f64, None);
    b.put_value("mle_iterations", mle.iterations as f64, None);
    b.put_value("mle_grad_norm", mle.grad_norm, None);
    if !mle.converged {
        b.warnings.push(format!(
            "MLE stopped after {} iterations with gradient norm {:e}",
            mle.iterations, mle.grad_norm
        ));
    }
    let rho = mle.state.rho();
    Ok(Some(DensityMatrix {
        re: (0..4).map(|i| (0..4).map(|j| rho.get(i, j).re).collect()).collect(),
        im: (0..4).map(|i| (0..4).map(|j| rho.get(i, j).im).collect()).collect(),
    }))
}

fn efficiency_scan(b: &mut Builder, counts: &CoincidenceCounts<SettingKey>) -> Result<()> {
    let reference = tally(counts, &SettingKey::new("REF", 0.0, 0.0));
    let rate = |t: &Tally| -> spinlink_core::Result<f64> {
        if t.singles_2() == 0 || t.coincidences() == 0 {
            Err(spinlink_core::Error::UndefinedEstimate("no heralded coincidences".into()))
        } else {
            Ok(t.coincidences() as f64 / t.singles_2() as f64)
        }
    };
    let ref_rate = rate(&reference);
    let mut model = Vec::new();
    for &t_ns in &b.cfg.scan.storage_times_ns {
        let t = tally(counts, &SettingKey::new(&storage_label(t_ns), 0.0, 0.0));
        let est = match (&ref_rate, rate(&t)) {
            (Ok(r0), Ok(r)) => {
                let eta = r / r0;
                let rel = (1.0 / t.coincidences() as f64 + 1.0 / reference.coincidences() as f64).sqrt();
                Ok(CorrelationEstimate::new(eta, eta * rel))
            }
            (Err(e), _) => Err(e.clone()),
            (_, Err(e)) => Err(e),
        };
        b.put(
            &format!("efficiency_{t_ns}ns"),
            est,
            Some("heralded retrieval rate relative to the memory-bypass reference"),
        );
        let m = retrieval_efficiency(t_ns * 1e-9, &b.cfg.memory_params_at(t_ns * 1e-9)?)?;
        b.put_value(&format!("efficiency_model_{t_ns}ns"), m, None);
        model.push((t_ns, m));
    }
    model.sort_by(|a, b| a.0.total_cmp(&b.0));
    let monotone = model.windows(2).all(|w| w[1].1 <= w[0].1);
    b.put_value("efficiency_model_monotone", monotone as u8 as f64, None);
    Ok(())
}
