//! Human, CSV and JSON renderings of a ranking run.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fuzzy::FuzzyConfig;
use crate::ranking::{RankingOptions, RankingRun};
use crate::stress::SkipReason;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("csv output is not utf-8")]
    Utf8,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Human,
    Csv,
    Json,
}

impl std::str::FromStr for Format {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "human" => Ok(Format::Human),
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            other => Err(format!(
                "unknown format '{other}' (expected human, csv or json)"
            )),
        }
    }
}

/// Self-describing JSON document: inputs that shaped the numbers plus the
/// full run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportDocument {
    pub schema_version: u32,
    pub options: RankingOptions,
    pub fuzzy: FuzzyConfig,
    pub run: RankingRun,
}

impl ReportDocument {
    pub fn new(run: RankingRun, options: RankingOptions, fuzzy: FuzzyConfig) -> Self {
        ReportDocument {
            schema_version: SCHEMA_VERSION,
            options,
            fuzzy,
            run,
        }
    }
}

pub fn roman(mut n: usize) -> String {
    const NUMERALS: [(usize, &str); 13] = [
        (1000, "M"),
        (900, "CM"),
        (500, "D"),
        (400, "CD"),
        (100, "C"),
        (90, "XC"),
        (50, "L"),
        (40, "XL"),
        (10, "X"),
        (9, "IX"),
        (5, "V"),
        (4, "IV"),
        (1, "I"),
    ];
    let mut out = String::new();
    for (value, s) in NUMERALS {
        while n >= value {
            out.push_str(s);
            n -= value;
        }
    }
    out
}

pub fn render(doc: &ReportDocument, format: Format) -> Result<String, ReportError> {
    match format {
        Format::Human => Ok(render_human(&doc.run)),
        Format::Csv => render_csv(&doc.run),
        Format::Json => render_json(doc),
    }
}

/// One block per contingency: bus, critical reactive load, CI with its
/// fuzzy rank, and FVSI with its rank.
pub fn render_human(run: &RankingRun) -> String {
    let mut out = String::new();
    for table in &run.tables {
        let _ = writeln!(out, "Contingency: {}", table.contingency);
        let _ = writeln!(
            out,
            "  {:>4}  {:>10}  {:>9}  {:>10}  {:>8}  {:>9}",
            "bus", "Q crit pu", "CI", "rank", "FVSI", "FVSI rank"
        );
        for e in &table.entries {
            let q = run
                .results
                .iter()
                .find(|r| r.scenario.contingency == table.contingency && r.scenario.bus == e.bus)
                .map_or(f64::NAN, |r| r.q_critical);
            let tie = if e.equal_ci { " =" } else { "" };
            let _ = writeln!(
                out,
                "  {:>4}  {:>10.4}  {:>9.3}  {:>10}  {:>8.4}  {:>9}",
                e.bus.to_string(),
                q,
                e.ci,
                format!("{}{}", roman(e.rank), tie),
                e.fvsi,
                roman(e.fvsi_rank)
            );
        }
        out.push('\n');
    }
    for s in &run.skipped {
        let why = match &s.reason {
            SkipReason::Islanded { components } => format!("islanded {components:?}"),
            SkipReason::NotLoadBus => "not a load bus".to_string(),
            SkipReason::UnknownBus => "unknown bus".to_string(),
            SkipReason::BaseInsolvable { diverged } => {
                format!("no solution at base load ({:?})", diverged.reason)
            }
        };
        let _ = writeln!(
            out,
            "skipped: {} bus {}: {why}",
            s.scenario.contingency, s.scenario.bus
        );
    }
    let a = &run.agreement;
    let _ = writeln!(
        out,
        "FVSI agreement: {}/{} buses, {}/{} contingencies identical",
        a.agreeing_buses,
        a.total_buses,
        a.identical_tables,
        run.tables.len()
    );
    out
}

pub const CSV_HEADER: [&str; 9] = [
    "contingency",
    "bus",
    "q_critical_pu",
    "sum_si_vp",
    "sum_si_lf",
    "ci",
    "fvsi",
    "rank_fuzzy",
    "rank_fvsi",
];

pub fn render_csv(run: &RankingRun) -> Result<String, ReportError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(CSV_HEADER)?;
    for r in &run.results {
        let entry = run
            .tables
            .iter()
            .find(|t| t.contingency == r.scenario.contingency)
            .and_then(|t| t.entries.iter().find(|e| e.bus == r.scenario.bus))
            .expect("every result is ranked");
        w.write_record([
            r.scenario.contingency.to_string(),
            r.scenario.bus.to_string(),
            r.q_critical.to_string(),
            r.severity.sum_si_vp.to_string(),
            r.severity.sum_si_lf.to_string(),
            r.ci.to_string(),
            r.fvsi.to_string(),
            entry.rank.to_string(),
            entry.fvsi_rank.to_string(),
        ])?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| ReportError::Csv(e.into_error().into()))?;
    String::from_utf8(bytes).map_err(|_| ReportError::Utf8)
}

pub fn render_json(doc: &ReportDocument) -> Result<String, ReportError> {
    let mut s = serde_json::to_string_pretty(doc)?;
    s.push('\n');
    Ok(s)
}

pub fn parse_json(text: &str) -> Result<ReportDocument, ReportError> {
    Ok(serde_json::from_str(text)?)
}
