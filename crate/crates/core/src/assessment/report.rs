//! Canonical JSON form of a slide assessment.
//!
//! Keys are written in a fixed order and every float with four decimals,
//! so parsing a report and writing it again reproduces the same bytes.

use std::fmt::Write as _;

use serde_json::{Map, Value};

use super::{AssessError, LabelHistogram, Result, Verdicts};
use crate::label::{Label, NUM_LABELS};

/// Wall-clock milliseconds spent in each pipeline stage.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Timings {
    pub decode: f64,
    pub classify: f64,
    pub density: f64,
    pub render: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AssessmentReport {
    pub slide: String,
    pub model: String,
    pub tile_size: u32,
    pub stride: u32,
    pub grid: (usize, usize),
    pub histogram: LabelHistogram,
    pub mean_density: f64,
    pub verdicts: Verdicts,
    pub all_empty: bool,
    pub timings: Timings,
}

fn json_str(s: &str) -> String {
    serde_json::to_string(s).expect("strings always serialize")
}

impl AssessmentReport {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(AssessError::Report(m));
        let t = &self.timings;
        for (name, v) in [
            ("decode", t.decode),
            ("classify", t.classify),
            ("density", t.density),
            ("render", t.render),
        ] {
            if !v.is_finite() || v < 0.0 {
                return bad(format!("timing `{name}` is {v}"));
            }
        }
        let (rows, cols) = self.grid;
        if (rows * cols) as u64 != self.histogram.total() {
            return bad(format!(
                "{rows}x{cols} grid but histogram counts {} tiles",
                self.histogram.total()
            ));
        }
        if !(0.0..=255.0).contains(&self.mean_density) {
            return bad(format!("mean density {} outside [0, 255]", self.mean_density));
        }
        if self.all_empty != (self.histogram.non_empty() == 0) {
            return bad("all_empty flag disagrees with the histogram".into());
        }
        if self.tile_size == 0 || self.stride == 0 || self.stride > self.tile_size {
            return bad(format!("tile {} with stride {}", self.tile_size, self.stride));
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        let mut o = String::new();
        let labels = |f: &dyn Fn(Label) -> String| -> String {
            Label::ALL
                .iter()
                .map(|&l| format!("{}: {}", json_str(l.name()), f(l)))
                .collect::<Vec<_>>()
                .join(", ")
        };
        o.push_str("{\n");
        writeln!(o, "  \"slide\": {},", json_str(&self.slide)).unwrap();
        writeln!(o, "  \"model\": {},", json_str(&self.model)).unwrap();
        writeln!(o, "  \"tile_size\": {},", self.tile_size).unwrap();
        writeln!(o, "  \"stride\": {},", self.stride).unwrap();
        writeln!(o, "  \"grid\": [{}, {}],", self.grid.0, self.grid.1).unwrap();
        writeln!(
            o,
            "  \"histogram\": {{{}}},",
            labels(&|l| self.histogram.count(l).to_string())
        )
        .unwrap();
        writeln!(
            o,
            "  \"ratios\": {{{}}},",
            labels(&|l| format!("{:.4}", self.histogram.ratio(l)))
        )
        .unwrap();
        writeln!(o, "  \"mean_density\": {:.4},", self.mean_density).unwrap();
        writeln!(
            o,
            "  \"verdicts\": {{\"staining\": {}, \"density\": {}, \"damage\": {}}},",
            json_str(self.verdicts.staining.as_str()),
            json_str(self.verdicts.density.as_str()),
            json_str(self.verdicts.damage.as_str())
        )
        .unwrap();
        writeln!(o, "  \"all_empty\": {},", self.all_empty).unwrap();
        let t = &self.timings;
        writeln!(
            o,
            "  \"timings_ms\": {{\"decode\": {:.4}, \"classify\": {:.4}, \"density\": {:.4}, \"render\": {:.4}}}",
            t.decode, t.classify, t.density, t.render
        )
        .unwrap();
        o.push_str("}\n");
        o
    }

    /// Parse and validate a report.
    pub fn from_json(text: &str) -> Result<Self> {
        let value: Value =
            serde_json::from_str(text).map_err(|e| AssessError::Report(e.to_string()))?;
        let root = value
            .as_object()
            .ok_or_else(|| AssessError::Report("report must be a JSON object".into()))?;
        let report = Self::from_object(root)?;

        let ratios = object(root, "ratios")?;
        for l in Label::ALL {
            let r = number(ratios, l.name())?;
            if (r - report.histogram.ratio(l)).abs() > 5.1e-5 {
                return Err(AssessError::Report(format!(
                    "ratio for {l} disagrees with the histogram"
                )));
            }
        }
        report.validate()?;
        Ok(report)
    }

    fn from_object(root: &Map<String, Value>) -> Result<Self> {
        let grid = root
            .get("grid")
            .and_then(Value::as_array)
            .filter(|a| a.len() == 2)
            .and_then(|a| Some((a[0].as_u64()? as usize, a[1].as_u64()? as usize)))
            .ok_or_else(|| AssessError::Report("`grid` must be [rows, cols]".into()))?;
        let hist = object(root, "histogram")?;
        let mut counts = [0u64; NUM_LABELS];
        for l in Label::ALL {
            counts[l.index()] = hist
                .get(l.name())
                .and_then(Value::as_u64)
                .ok_or_else(|| AssessError::Report(format!("histogram lacks a count for {l}")))?;
        }
        let verdicts = object(root, "verdicts")?;
        let timings = object(root, "timings_ms")?;
        Ok(Self {
            slide: string(root, "slide")?,
            model: string(root, "model")?,
            tile_size: unsigned(root, "tile_size")?,
            stride: unsigned(root, "stride")?,
            grid,
            histogram: LabelHistogram::from_counts(counts)?,
            mean_density: number(root, "mean_density")?,
            verdicts: Verdicts {
                staining: string(verdicts, "staining")?.parse()?,
                density: string(verdicts, "density")?.parse()?,
                damage: string(verdicts, "damage")?.parse()?,
            },
            all_empty: root
                .get("all_empty")
                .and_then(Value::as_bool)
                .ok_or_else(|| AssessError::Report("`all_empty` must be a boolean".into()))?,
            timings: Timings {
                decode: number(timings, "decode")?,
                classify: number(timings, "classify")?,
                density: number(timings, "density")?,
                render: number(timings, "render")?,
            },
        })
    }
}

fn object<'a>(map: &'a Map<String, Value>, key: &str) -> Result<&'a Map<String, Value>> {
    map.get(key)
        .and_then(Value::as_object)
        .ok_or_else(|| AssessError::Report(format!("`{key}` must be an object")))
}

fn string(map: &Map<String, Value>, key: &str) -> Result<String> {
    map.get(key)
        .and_then(Value::as_str)
        .map(str::to_string)
        .ok_or_else(|| AssessError::Report(format!("`{key}` must be a string")))
}

fn number(map: &Map<String, Value>, key: &str) -> Result<f64> {
    map.get(key)
        .and_then(Value::as_f64)
        .ok_or_else(|| AssessError::Report(format!("`{key}` must be a number")))
}

fn unsigned(map: &Map<String, Value>, key: &str) -> Result<u32> {
    map.get(key)
        .and_then(Value::as_u64)
        .and_then(|v| u32::try_from(v).ok())
        .ok_or_else(|| AssessError::Report(format!("`{key}` must be a non-negative integer")))
}
