//! Comparison against reference values and plot-ready fringe tables.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use serde::Deserialize;

use crate::error::{HarnessError, Result};
use crate::summary::{FringeScan, Summary};

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReferenceValue {
    pub value: f64,
    pub uncertainty: f64,
    #[serde(default)]
    pub source: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Reference {
    pub metrics: BTreeMap<String, ReferenceValue>,
}

impl Reference {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let r: Reference = toml::from_str(text).map_err(|e| HarnessError::Report(format!("reference: {e}")))?;
        for (name, v) in &r.metrics {
            if !v.value.is_finite() || !(v.uncertainty >= 0.0) {
                return Err(HarnessError::Report(format!("reference {name}: bad value or uncertainty")));
            }
        }
        Ok(r)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        Self::from_toml_str(&text)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RowStatus {
    Pass,
    Fail,
    Absent,
}

impl RowStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            RowStatus::Pass => "pass",
            RowStatus::Fail => "fail",
            RowStatus::Absent => "absent",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonRow {
    pub metric: String,
    pub computed: Option<f64>,
    pub reference_value: f64,
    pub reference_uncertainty: f64,
    pub z: Option<f64>,
    pub status: RowStatus,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub rows: Vec<ComparisonRow>,
    pub z_threshold: f64,
}

impl Comparison {
    /// Every reference metric present and within the threshold.
    pub fn passed(&self) -> bool {
        self.rows.iter().all(|r| r.status == RowStatus::Pass)
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "metric,computed,reference_value,reference_uncertainty,z,status")?;
        for r in &self.rows {
            let opt = |v: Option<f64>| v.map(|x| format!("{x}")).unwrap_or_default();
            writeln!(
                w,
                "{},{},{},{},{},{}",
                r.metric,
                opt(r.computed),
                r.reference_value,
                r.reference_uncertainty,
                opt(r.z),
                r.status.as_str()
            )?;
        }
        Ok(())
    }
}

/// `z = |computed - reference| / uncertainty`; rows pass when `z <= z_threshold`.
/// A metric missing from the summary (or undefined in it) is "absent".
pub fn compare_to_reference(summary: &Summary, reference: &Reference, z_threshold: f64) -> Result<Comparison> {
    if !(z_threshold > 0.0) {
        return Err(HarnessError::Config("z threshold must be positive".into()));
    }
    let rows = reference
        .metrics
        .iter()
        .map(|(name, r)| {
            let computed = summary.value(name);
            let z = computed.map(|c| {
                let diff = (c - r.value).abs();
                if r.uncertainty > 0.0 {
                    diff / r.uncertainty
                } else if diff == 0.0 {
                    0.0
                } else {
                    f64::INFINITY
                }
            });
            let status = match z {
                None => RowStatus::Absent,
                Some(z) if z <= z_threshold => RowStatus::Pass,
                Some(_) => RowStatus::Fail,
            };
            ComparisonRow {
                metric: name.clone(),
                computed,
                reference_value: r.value,
                reference_uncertainty: r.uncertainty,
                z,
                status,
            }
        })
        .collect();
    Ok(Comparison { rows, z_threshold })
}

/// Columns `angle,counts,stderr,fitted`; `fitted` is empty when the fit failed.
pub fn emit_fringe_plot_data<W: Write>(scan: &FringeScan, mut w: W) -> std::io::Result<()> {
    writeln!(w, "angle,counts,stderr,fitted")?;
    for &(x, y) in &scan.points {
        let fitted = scan.fit.map(|f| format!("{}", f.model(x))).unwrap_or_default();
        writeln!(w, "{x:.6},{y},{},{fitted}", y.max(0.0).sqrt())?;
    }
    Ok(())
}
