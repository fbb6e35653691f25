//! JSON and CSV reports. Field order is fixed and floats are printed with
//! nine significant digits, so equal summaries give byte-identical files.

use std::path::Path;

use serde::ser::{SerializeMap, Serializer};
use serde::Serialize;
use serde_json::value::RawValue;

use crate::runner::RunSummary;
use crate::HarnessError;

pub const CSV_HEADER: [&str; 7] =
    ["scenario", "trials", "match_rate", "wilson_lo", "wilson_hi", "abort_rate", "analytic_reference"];

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

/// `x` with nine significant digits; positional notation for moderate
/// magnitudes, scientific otherwise.
pub fn sig9(x: f64) -> String {
    if !x.is_finite() {
        return "NaN".into();
    }
    if x == 0.0 {
        return "0.00000000".into();
    }
    let sci = format!("{x:.8e}");
    let exp: i32 = sci.rsplit('e').next().and_then(|e| e.parse().ok()).unwrap_or(0);
    if (-5..=8).contains(&exp) {
        format!("{:.*}", (8 - exp) as usize, x)
    } else {
        sci
    }
}

fn raw(x: f64) -> Box<RawValue> {
    let text = if x.is_finite() { sig9(x) } else { "null".into() };
    RawValue::from_string(text).expect("formatted float is valid JSON")
}

struct Extras<'a>(&'a [(&'static str, f64)]);

impl Serialize for Extras<'_> {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let mut m = s.serialize_map(Some(self.0.len()))?;
        for (k, v) in self.0 {
            m.serialize_entry(k, &raw(*v))?;
        }
        m.end()
    }
}

#[derive(Serialize)]
struct JsonSummary<'a> {
    scenario: &'a str,
    trials: u64,
    match_rate: Box<RawValue>,
    wilson95: [Box<RawValue>; 2],
    abort_rate: Box<RawValue>,
    analytic_reference: Option<Box<RawValue>>,
    n: usize,
    variant: String,
    bc_mode: String,
    master_seed: u64,
    hits: u64,
    scored: u64,
    aborts: u64,
    redraws: u64,
    extras: Extras<'a>,
    digest: &'a str,
}

impl<'a> From<&'a RunSummary> for JsonSummary<'a> {
    fn from(s: &'a RunSummary) -> Self {
        Self {
            scenario: &s.scenario,
            trials: s.trials,
            match_rate: raw(s.match_rate),
            wilson95: [raw(s.wilson95.0), raw(s.wilson95.1)],
            abort_rate: raw(s.abort_rate),
            analytic_reference: s.analytic_reference.map(raw),
            n: s.n,
            variant: s.variant.to_string(),
            bc_mode: s.bc_mode.to_string(),
            master_seed: s.master_seed,
            hits: s.hits,
            scored: s.scored,
            aborts: s.aborts,
            redraws: s.redraws,
            extras: Extras(&s.extras),
            digest: &s.digest,
        }
    }
}

/// Renders the report. A single summary becomes one JSON object, several
/// become an array.
pub fn render_report(summaries: &[RunSummary], format: Format) -> Result<String, HarnessError> {
    if summaries.is_empty() {
        return Err(HarnessError::EmptyReport);
    }
    match format {
        Format::Json => {
            let items: Vec<JsonSummary<'_>> = summaries.iter().map(JsonSummary::from).collect();
            let mut out = if let [one] = &items[..] {
                serde_json::to_string_pretty(one)?
            } else {
                serde_json::to_string_pretty(&items)?
            };
            out.push('\n');
            Ok(out)
        }
        Format::Csv => {
            let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
            w.write_record(CSV_HEADER)?;
            for s in summaries {
                w.write_record([
                    s.scenario.clone(),
                    s.trials.to_string(),
                    sig9(s.match_rate),
                    sig9(s.wilson95.0),
                    sig9(s.wilson95.1),
                    sig9(s.abort_rate),
                    s.analytic_reference.map(sig9).unwrap_or_default(),
                ])?;
            }
            let bytes = w.into_inner().map_err(|e| csv::Error::from(e.into_error()))?;
            Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
        }
    }
}

/// Writes the rendered report to `path`.
pub fn emit_report(summaries: &[RunSummary], format: Format, path: &Path) -> Result<(), HarnessError> {
    let text = render_report(summaries, format)?;
    std::fs::write(path, text).map_err(|source| HarnessError::Write { path: path.display().to_string(), source })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nine_significant_digits() {
        assert_eq!(sig9(0.933_012_701_892_219_3), "0.933012702");
        assert_eq!(sig9(0.75), "0.750000000");
        assert_eq!(sig9(1.0), "1.00000000");
        assert_eq!(sig9(0.0), "0.00000000");
        assert_eq!(sig9(12_345.678_901), "12345.6789");
        assert_eq!(sig9(1.5e-12), "1.50000000e-12");
        assert_eq!(sig9(0.999_999_999_95), "1.00000000");
    }
}
