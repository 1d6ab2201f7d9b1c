use std::fmt::Write as _;
use std::path::Path;

use serde::Serialize;

use super::rounds::{EvolutionResult, HistoryEntry};
use super::{EvolveError, Origin, PseudoDataset};
use crate::geometry::connected_area_check;
use crate::io::{self, FormatError};

/// `round_0`, `round_<k>t` or `round_<k>s`.
pub fn round_dir_name(round: usize, origin: Origin) -> String {
    match origin {
        Origin::Init => "round_0".to_string(),
        Origin::Teacher => format!("round_{round}t"),
        Origin::Student => format!("round_{round}s"),
    }
}

/// Writes one PNG mask per accepted sample plus `prompts.csv`.
pub fn write_round(dir: &Path, data: &PseudoDataset) -> Result<(), FormatError> {
    std::fs::create_dir_all(dir).map_err(|e| FormatError::Io {
        path: dir.display().to_string(),
        source: e,
    })?;
    let mut prompts = String::from("id,u,v\n");
    for s in &data.samples {
        io::write_mask(&dir.join(format!("{}.png", s.id)), &s.label)?;
        let _ = writeln!(prompts, "{},{},{}", s.id, s.prompt.u, s.prompt.v);
    }
    io::write_bytes(&dir.join("prompts.csv"), prompts.as_bytes())
}

pub fn history_to_csv(history: &[HistoryEntry]) -> String {
    let mut s = String::from("round,origin,count,mean_dice\n");
    for h in history {
        let dice = h.mean_dice.map(|d| d.to_string()).unwrap_or_default();
        let _ = writeln!(s, "{},{},{},{dice}", h.round, h.origin, h.count);
    }
    s
}

pub fn parse_history_csv(text: &str) -> Result<Vec<HistoryEntry>, FormatError> {
    let bad = |line: usize, m: &str| FormatError::Label(format!("history line {line}: {m}"));
    let mut lines = text.lines();
    if lines.next() != Some("round,origin,count,mean_dice") {
        return Err(bad(1, "unexpected header"));
    }
    let mut out = Vec::new();
    for (i, line) in lines.enumerate() {
        let n = i + 2;
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 4 {
            return Err(bad(n, "expected 4 columns"));
        }
        let mean_dice = if cols[3].is_empty() {
            None
        } else {
            Some(
                cols[3]
                    .parse::<f64>()
                    .ok()
                    .filter(|d| d.is_finite())
                    .ok_or_else(|| bad(n, "bad mean_dice"))?,
            )
        };
        out.push(HistoryEntry {
            round: cols[0].parse().map_err(|_| bad(n, "bad round"))?,
            origin: cols[1].parse().map_err(|e: String| bad(n, &e))?,
            count: cols[2].parse().map_err(|_| bad(n, "bad count"))?,
            mean_dice,
        });
    }
    Ok(out)
}

#[derive(Serialize)]
struct Summary<'a> {
    rounds: Vec<String>,
    stalled: &'a Option<String>,
    traces: Vec<(&'a str, &'a [f64])>,
}

/// Writes every round directory, `history.csv`, the final model files and
/// `evolution.json` (loss traces and stall status).
pub fn write_evolution(out: &Path, result: &EvolutionResult) -> Result<(), EvolveError> {
    let mut rounds = Vec::new();
    for d in &result.datasets {
        let name = round_dir_name(d.round, d.origin);
        write_round(&out.join(&name), d)?;
        rounds.push(name);
    }
    io::write_bytes(
        &out.join("history.csv"),
        history_to_csv(&result.history).as_bytes(),
    )?;
    for (name, seg) in [("teacher", &result.teacher), ("student", &result.student)] {
        if let Some(model) = seg.model() {
            if model.is_trained() {
                io::write_bytes(
                    &out.join(format!("{name}.model")),
                    model.to_text().as_bytes(),
                )?;
            }
        }
    }
    let summary = Summary {
        rounds,
        stalled: &result.stalled,
        traces: result
            .traces
            .iter()
            .map(|(k, v)| (k.as_str(), v.as_slice()))
            .collect(),
    };
    io::write_json(&out.join("evolution.json"), &summary)?;
    Ok(())
}

/// Post-hoc check of a round directory's masks.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RoundAudit {
    pub masks: usize,
    /// File names of masks failing the connected-area check.
    pub failing: Vec<String>,
}

pub fn audit_round_dir(dir: &Path, min_area: usize) -> Result<RoundAudit, FormatError> {
    let mut names: Vec<String> = std::fs::read_dir(dir)
        .map_err(|e| FormatError::Io {
            path: dir.display().to_string(),
            source: e,
        })?
        .filter_map(|e| e.ok())
        .map(|e| e.file_name().to_string_lossy().into_owned())
        .filter(|n| n.ends_with(".png"))
        .collect();
    names.sort();
    let mut audit = RoundAudit::default();
    for name in names {
        let mask = io::read_mask(&dir.join(&name))?;
        audit.masks += 1;
        if !connected_area_check(&mask, min_area) {
            audit.failing.push(name);
        }
    }
    Ok(audit)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn history_csv_roundtrip() {
        let h = vec![
            HistoryEntry {
                round: 0,
                origin: Origin::Init,
                count: 12,
                mean_dice: Some(81.25),
            },
            HistoryEntry {
                round: 1,
                origin: Origin::Teacher,
                count: 0,
                mean_dice: None,
            },
        ];
        let text = history_to_csv(&h);
        assert_eq!(
            text,
            "round,origin,count,mean_dice\n0,init,12,81.25\n1,teacher,0,\n"
        );
        assert_eq!(parse_history_csv(&text).unwrap(), h);
        assert!(parse_history_csv("round,origin\n").is_err());
        assert!(parse_history_csv("round,origin,count,mean_dice\n1,boss,3,\n").is_err());
    }

    #[test]
    fn dir_names() {
        assert_eq!(round_dir_name(0, Origin::Init), "round_0");
        assert_eq!(round_dir_name(3, Origin::Student), "round_3s");
        assert_eq!(round_dir_name(2, Origin::Teacher), "round_2t");
    }
}
