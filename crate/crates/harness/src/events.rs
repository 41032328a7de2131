//! Event-file reading. Rows are written by [`crate::campaign::simulate`].

use std::path::Path;

use serde::Deserialize;
use spinlink_core::detection::{count_coincidences, ClickRecord, CoincidenceCounts, DetectorId};

use crate::campaign::{SettingKey, EVENT_HEADER};
use crate::config::Campaign;
use crate::error::{HarnessError, Result};

#[derive(Debug, Deserialize)]
struct Row {
    cycle: u64,
    detector: String,
    clicked: u8,
    setting_theta1: String,
    setting_theta2: String,
    basis: String,
    campaign: String,
}

#[derive(Debug, Clone)]
pub struct EventData {
    pub campaign: Campaign,
    pub tallies: CoincidenceCounts<SettingKey>,
    pub rows: u64,
    pub cycles: u64,
}

fn integrity(msg: impl Into<String>) -> HarnessError {
    HarnessError::DataIntegrity(msg.into())
}

/// Parses an event file and tallies it per setting.
pub fn read_events(path: &Path) -> Result<EventData> {
    let file = std::fs::File::open(path).map_err(|e| HarnessError::io(path, e))?;
    read_events_from(file)
}

pub fn read_events_from<R: std::io::Read>(reader: R) -> Result<EventData> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let header = rdr.headers().map_err(|e| integrity(e.to_string()))?.clone();
    if header.iter().collect::<Vec<_>>().join(",") != EVENT_HEADER {
        return Err(integrity(format!("unexpected event header {:?}", header)));
    }
    let mut campaign: Option<Campaign> = None;
    let mut records = Vec::new();
    let mut last_cycle = None;
    let mut cycles = 0u64;
    for (line, row) in rdr.deserialize::<Row>().enumerate() {
        let row = row.map_err(|e| integrity(format!("row {}: {e}", line + 2)))?;
        let c: Campaign = row.campaign.parse()?;
        match campaign {
            None => campaign = Some(c),
            Some(prev) if prev != c => return Err(integrity("event file mixes campaigns")),
            _ => {}
        }
        let detector: DetectorId = row.detector.parse()?;
        let clicked = match row.clicked {
            0 => false,
            1 => true,
            v => return Err(integrity(format!("row {}: clicked must be 0 or 1, got {v}", line + 2))),
        };
        for t in [&row.setting_theta1, &row.setting_theta2] {
            if t.parse::<f64>().is_err() {
                return Err(integrity(format!("row {}: bad angle {t:?}", line + 2)));
            }
        }
        if last_cycle != Some(row.cycle) {
            cycles += 1;
            last_cycle = Some(row.cycle);
        }
        records.push((
            ClickRecord {
                cycle_index: row.cycle,
                detector,
                clicked,
            },
            SettingKey {
                basis: row.basis,
                theta1: row.setting_theta1,
                theta2: row.setting_theta2,
            },
        ));
    }
    let rows = records.len() as u64;
    let tallies = count_coincidences(records)?;
    let campaign = campaign.ok_or_else(|| integrity("event file has no rows"))?;
    Ok(EventData {
        campaign,
        tallies,
        rows,
        cycles,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const HEAD: &str = "cycle,detector,clicked,setting_theta1,setting_theta2,basis,campaign\n";

    #[test]
    #[allow(clippy::approx_constant)]
    fn parses_and_tallies() {
        let text = format!(
            "{HEAD}0,D1,1,0.000000,0.392699,CHSH,CHSH\n0,D2,1,0.000000,0.392699,CHSH,CHSH\n1,D1,0,0.000000,0.392699,CHSH,CHSH\n1,D2,1,0.000000,0.392699,CHSH,CHSH\n"
        );
        let d = read_events_from(text.as_bytes()).unwrap();
        assert_eq!(d.campaign, Campaign::Chsh);
        assert_eq!(d.rows, 4);
        assert_eq!(d.cycles, 2);
        let t = d.tallies.get(&SettingKey::new("CHSH", 0.0, 0.392699)).unwrap();
        assert_eq!(t.trials, 2);
        assert_eq!(t.coincidences(), 1);
        assert_eq!(t.singles_2(), 2);
    }

    #[test]
    fn integrity_errors() {
        for body in [
            "0,D9,1,0.000000,0.000000,CS,CAUCHY_SCHWARZ\n",
            "0,D1,2,0.000000,0.000000,CS,CAUCHY_SCHWARZ\n",
            "0,D1,1,abc,0.000000,CS,CAUCHY_SCHWARZ\n",
            "0,D1,1,0.000000,0.000000,CS,NOPE\n",
            "1,D1,1,0.000000,0.000000,CS,CAUCHY_SCHWARZ\n0,D1,1,0.000000,0.000000,CS,CAUCHY_SCHWARZ\n",
            "0,D1,1,0.000000,0.000000,CS,CAUCHY_SCHWARZ\n0,D1,0,0.000000,0.000000,CS,CAUCHY_SCHWARZ\n",
            "0,D1,1,0.000000,0.000000,CS,CAUCHY_SCHWARZ\n1,D1,1,0.000000,0.000000,CHSH,CHSH\n",
        ] {
            let err = read_events_from(format!("{HEAD}{body}").as_bytes()).unwrap_err();
            assert_eq!(err.exit_code(), 3, "{body}: {err}");
        }
        let err = read_events_from("a,b\n1,2\n".as_bytes()).unwrap_err();
        assert_eq!(err.exit_code(), 3);
    }
}
