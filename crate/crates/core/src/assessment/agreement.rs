use std::fmt::Write as _;

use super::{AssessError, Result, Verdicts};

/// Verdicts for one named slide, as read from `id,staining,density,damage`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct VerdictRow {
    pub id: String,
    pub verdicts: Verdicts,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Agreement {
    /// Matching attributes per slide, out of 3.
    pub matches: Vec<u32>,
    pub per_slide: Vec<f64>,
    pub overall: f64,
}

const ATTRIBUTES: u32 = 3;

/// One point per attribute whose keyword matches; per-slide score is
/// points/3, overall is total points over 3·slides.
pub fn agreement(system: &[Verdicts], experts: &[Verdicts]) -> Result<Agreement> {
    if system.len() != experts.len() || system.is_empty() {
        return Err(AssessError::LengthMismatch {
            system: system.len(),
            experts: experts.len(),
        });
    }
    let matches: Vec<u32> = system.iter().zip(experts).map(|(a, b)| a.matches(b)).collect();
    let per_slide = matches.iter().map(|&m| m as f64 / ATTRIBUTES as f64).collect();
    let total: u32 = matches.iter().sum();
    Ok(Agreement {
        per_slide,
        overall: total as f64 / (ATTRIBUTES as usize * matches.len()) as f64,
        matches,
    })
}

/// Pair system rows with expert rows by slide id, keeping system order.
pub fn pair_rows(system: &[VerdictRow], experts: &[VerdictRow]) -> Result<(Vec<Verdicts>, Vec<Verdicts>)> {
    if system.len() != experts.len() {
        return Err(AssessError::LengthMismatch {
            system: system.len(),
            experts: experts.len(),
        });
    }
    let mut sys = Vec::with_capacity(system.len());
    let mut exp = Vec::with_capacity(system.len());
    for row in system {
        let expert = experts
            .iter()
            .find(|e| e.id == row.id)
            .ok_or_else(|| AssessError::UnknownSlide(row.id.clone()))?;
        sys.push(row.verdicts);
        exp.push(expert.verdicts);
    }
    Ok((sys, exp))
}

/// Two decimals, truncated rather than rounded (2/3 shows as 0.66).
pub fn truncate_2dp(value: f64) -> String {
    // nudge so values like 0.29 (stored as 0.2899…) survive flooring
    let cents = (value * 100.0 + 1e-9).floor();
    format!("{:.2}", cents / 100.0)
}

impl Agreement {
    /// Human-readable table, one line per slide then the overall score.
    pub fn table(&self, ids: &[String]) -> String {
        let mut out = String::from("slide,matches,accuracy,display\n");
        for ((id, m), acc) in ids.iter().zip(&self.matches).zip(&self.per_slide) {
            writeln!(out, "{id},{m}/3,{acc:.3},{}", truncate_2dp(*acc)).unwrap();
        }
        writeln!(out, "overall,{}/{},{:.3},", self.matches.iter().sum::<u32>(), 3 * self.matches.len(), self.overall)
            .unwrap();
        out
    }
}

/// Parse `id,staining,density,damage` lines. Blank lines, `#` comments and
/// a leading `id,...` header are skipped.
pub fn parse_verdict_rows(text: &str) -> Result<Vec<VerdictRow>> {
    let mut rows = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if rows.is_empty() && fields.first() == Some(&"id") {
            continue;
        }
        let [id, staining, density, damage] = fields[..] else {
            return Err(AssessError::Verdict(format!(
                "line {}: expected 4 comma-separated fields, got {}",
                n + 1,
                fields.len()
            )));
        };
        rows.push(VerdictRow {
            id: id.to_string(),
            verdicts: Verdicts {
                staining: staining.parse()?,
                density: density.parse()?,
                damage: damage.parse()?,
            },
        });
    }
    Ok(rows)
}
