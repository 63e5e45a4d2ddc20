//! Network data model and the line-oriented case-file format.
//!
//! A case file has three sections, each introduced by a keyword line:
//!
//! ```text
//! BASE_MVA 100
//! BUS
//! # id  kind  v_setpoint  p_gen  q_gen  p_load  q_load
//!   1   slack 1.06        0.00   0.00   0.00    0.00
//!   3   load  -           0.00   0.00   0.45    0.15
//! BRANCH
//! # id   from  to  r     x     b_half
//!   1-3  1     3   0.08  0.24  0.025
//! ```
//!
//! Everything after `#` is a comment. Fields are whitespace-delimited and all
//! electrical quantities are per-unit on `BASE_MVA`. `v_setpoint` is `-` for
//! load buses.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// The five-bus study system shipped with the crate.
pub const FIVE_BUS_CASE: &str = include_str!("../data/five_bus.case");

/// The twelve screened single and double outages of the five-bus study.
pub const FIVE_BUS_CONTINGENCIES: &str = include_str!("../data/table7.contingencies");

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CaseError {
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("missing section {0}")]
    MissingSection(&'static str),
    #[error("base_mva must be positive and finite, got {0}")]
    InvalidBase(f64),
    #[error("bus {0}: duplicate bus id")]
    DuplicateBus(BusId),
    #[error("bus {bus}: {message}")]
    InvalidBus { bus: BusId, message: String },
    #[error("multiple slack buses: {0:?}")]
    MultipleSlack(Vec<BusId>),
    #[error("missing slack bus")]
    MissingSlack,
    #[error("branch {branch}: duplicate branch id")]
    DuplicateBranch { branch: BranchId },
    #[error("branch {branch}: references unknown bus {bus}")]
    UnknownBus { branch: BranchId, bus: BusId },
    #[error("branch {branch}: self loop at bus {bus}")]
    SelfLoop { branch: BranchId, bus: BusId },
    #[error("branch {branch}: zero series impedance")]
    ZeroImpedance { branch: BranchId },
    #[error("branch {branch}: {message}")]
    InvalidBranch { branch: BranchId, message: String },
    #[error("unknown branch {0}")]
    UnknownBranch(String),
    #[error("branch reference {0} matches more than one parallel branch")]
    AmbiguousBranch(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct BusId(pub u32);

impl fmt::Display for BusId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct BranchId(pub String);

impl BranchId {
    pub fn new(id: impl Into<String>) -> Self {
        BranchId(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for BranchId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BusKind {
    Slack,
    Generator,
    Load,
}

impl BusKind {
    fn keyword(self) -> &'static str {
        match self {
            BusKind::Slack => "slack",
            BusKind::Generator => "generator",
            BusKind::Load => "load",
        }
    }
}

impl FromStr for BusKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "slack" => Ok(BusKind::Slack),
            "generator" | "gen" | "pv" => Ok(BusKind::Generator),
            "load" | "pq" => Ok(BusKind::Load),
            other => Err(format!("unknown bus kind `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bus {
    pub id: BusId,
    pub kind: BusKind,
    /// Voltage magnitude setpoint, present for slack and generator buses.
    pub v_setpoint: Option<f64>,
    pub p_gen: f64,
    pub q_gen: f64,
    pub p_load: f64,
    pub q_load: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Branch {
    pub id: BranchId,
    pub from_bus: BusId,
    pub to_bus: BusId,
    pub r: f64,
    pub x: f64,
    pub b_half: f64,
}

impl Branch {
    /// Series admittance `1 / (r + jx)`.
    pub fn series_admittance(&self) -> num_complex::Complex64 {
        num_complex::Complex64::new(self.r, self.x).inv()
    }

    pub fn connects(&self, a: BusId, b: BusId) -> bool {
        (self.from_bus == a && self.to_bus == b) || (self.from_bus == b && self.to_bus == a)
    }
}

/// A validated per-unit network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Case {
    pub base_mva: f64,
    pub buses: Vec<Bus>,
    pub branches: Vec<Branch>,
}

/// A set of branches taken out of service together.
///
/// The empty set is the base (intact) network.
#[derive(Debug, Clone, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Contingency(pub BTreeSet<BranchId>);

impl Contingency {
    pub fn base() -> Self {
        Contingency::default()
    }

    pub fn is_base(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &BranchId> {
        self.0.iter()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl<S: Into<String>> FromIterator<S> for Contingency {
    fn from_iter<T: IntoIterator<Item = S>>(iter: T) -> Self {
        Contingency(iter.into_iter().map(|s| BranchId(s.into())).collect())
    }
}

impl fmt::Display for Contingency {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_empty() {
            return f.write_str("base");
        }
        let mut first = true;
        for id in &self.0 {
            if !first {
                f.write_str(",")?;
            }
            first = false;
            f.write_str(id.as_str())?;
        }
        Ok(())
    }
}

impl FromStr for Contingency {
    type Err = CaseError;

    /// Parses `"1-2,2-3"`; `"base"` and the empty string denote no outage.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        if s.is_empty() || s.eq_ignore_ascii_case("base") {
            return Ok(Contingency::base());
        }
        let mut set = BTreeSet::new();
        for token in s.split(',') {
            let token = token.trim();
            if token.is_empty() {
                return Err(CaseError::Malformed {
                    line: 0,
                    message: format!("empty branch reference in `{s}`"),
                });
            }
            set.insert(BranchId::new(token));
        }
        Ok(Contingency(set))
    }
}

/// Parses a contingency-list document: one contingency per line, branches
/// comma-separated, `#` comments. Duplicate lines are dropped, keeping the
/// first occurrence.
pub fn parse_contingency_list(text: &str) -> Result<Vec<Contingency>, CaseError> {
    let mut out = Vec::new();
    let mut seen = HashSet::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = strip_comment(raw).trim();
        if line.is_empty() {
            continue;
        }
        let c: Contingency = line.parse().map_err(|e| match e {
            CaseError::Malformed { message, .. } => CaseError::Malformed {
                line: idx + 1,
                message,
            },
            other => other,
        })?;
        if seen.insert(c.clone()) {
            out.push(c);
        }
    }
    Ok(out)
}

fn strip_comment(line: &str) -> &str {
    match line.find('#') {
        Some(pos) => &line[..pos],
        None => line,
    }
}

#[derive(Clone, Copy, PartialEq)]
enum Section {
    None,
    Bus,
    Branch,
}

fn parse_number(field: &str, line: usize, name: &str) -> Result<f64, CaseError> {
    let v: f64 = field.parse().map_err(|_| CaseError::Malformed {
        line,
        message: format!("field `{name}`: cannot parse `{field}` as a number"),
    })?;
    if !v.is_finite() {
        return Err(CaseError::Malformed {
            line,
            message: format!("field `{name}`: value `{field}` is not finite"),
        });
    }
    Ok(v)
}

/// Parses and validates a case document.
pub fn parse_case(text: &str) -> Result<Case, CaseError> {
    let mut base_mva = None;
    let mut buses = Vec::new();
    let mut branches = Vec::new();
    let mut section = Section::None;
    let mut saw_bus = false;
    let mut saw_branch = false;

    for (idx, raw) in text.lines().enumerate() {
        let lineno = idx + 1;
        let line = strip_comment(raw).trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        match fields[0] {
            "BASE_MVA" => {
                if fields.len() != 2 {
                    return Err(CaseError::Malformed {
                        line: lineno,
                        message: "BASE_MVA expects exactly one value".into(),
                    });
                }
                base_mva = Some(parse_number(fields[1], lineno, "base_mva")?);
                section = Section::None;
                continue;
            }
            "BUS" if fields.len() == 1 => {
                section = Section::Bus;
                saw_bus = true;
                continue;
            }
            "BRANCH" if fields.len() == 1 => {
                section = Section::Branch;
                saw_branch = true;
                continue;
            }
            _ => {}
        }
        match section {
            Section::None => {
                return Err(CaseError::Malformed {
                    line: lineno,
                    message: format!("record outside of any section: `{line}`"),
                })
            }
            Section::Bus => buses.push(parse_bus_record(&fields, lineno)?),
            Section::Branch => branches.push(parse_branch_record(&fields, lineno)?),
        }
    }

    let base_mva = base_mva.ok_or(CaseError::MissingSection("BASE_MVA"))?;
    if !saw_bus {
        return Err(CaseError::MissingSection("BUS"));
    }
    if !saw_branch {
        return Err(CaseError::MissingSection("BRANCH"));
    }
    let case = Case {
        base_mva,
        buses,
        branches,
    };
    case.validate()?;
    Ok(case)
}

fn parse_bus_record(fields: &[&str], line: usize) -> Result<Bus, CaseError> {
    if fields.len() != 7 {
        return Err(CaseError::Malformed {
            line,
            message: format!("BUS record needs 7 fields, found {}", fields.len()),
        });
    }
    let id: u32 = fields[0].parse().map_err(|_| CaseError::Malformed {
        line,
        message: format!("bus id `{}` is not a positive integer", fields[0]),
    })?;
    let kind: BusKind = fields[1]
        .parse()
        .map_err(|message| CaseError::Malformed { line, message })?;
    let v_setpoint = match fields[2] {
        "-" => None,
        s => Some(parse_number(s, line, "v_setpoint")?),
    };
    Ok(Bus {
        id: BusId(id),
        kind,
        v_setpoint,
        p_gen: parse_number(fields[3], line, "p_gen")?,
        q_gen: parse_number(fields[4], line, "q_gen")?,
        p_load: parse_number(fields[5], line, "p_load")?,
        q_load: parse_number(fields[6], line, "q_load")?,
    })
}

fn parse_branch_record(fields: &[&str], line: usize) -> Result<Branch, CaseError> {
    if fields.len() != 6 {
        return Err(CaseError::Malformed {
            line,
            message: format!("BRANCH record needs 6 fields, found {}", fields.len()),
        });
    }
    let bus = |s: &str, name: &str| -> Result<BusId, CaseError> {
        s.parse::<u32>()
            .map(BusId)
            .map_err(|_| CaseError::Malformed {
                line,
                message: format!("field `{name}`: `{s}` is not a bus id"),
            })
    };
    Ok(Branch {
        id: BranchId::new(fields[0]),
        from_bus: bus(fields[1], "from")?,
        to_bus: bus(fields[2], "to")?,
        r: parse_number(fields[3], line, "r")?,
        x: parse_number(fields[4], line, "x")?,
        b_half: parse_number(fields[5], line, "b_half")?,
    })
}

impl Case {
    /// Checks every structural invariant of the data model.
    pub fn validate(&self) -> Result<(), CaseError> {
        if !(self.base_mva.is_finite() && self.base_mva > 0.0) {
            return Err(CaseError::InvalidBase(self.base_mva));
        }
        let mut ids = HashSet::new();
        for bus in &self.buses {
            if bus.id.0 == 0 {
                return Err(CaseError::InvalidBus {
                    bus: bus.id,
                    message: "bus ids must be positive".into(),
                });
            }
            if !ids.insert(bus.id) {
                return Err(CaseError::DuplicateBus(bus.id));
            }
            let powers = [bus.p_gen, bus.q_gen, bus.p_load, bus.q_load];
            if powers.iter().any(|v| !v.is_finite()) {
                return Err(CaseError::InvalidBus {
                    bus: bus.id,
                    message: "non-finite power value".into(),
                });
            }
            match (bus.kind, bus.v_setpoint) {
                (BusKind::Load, _) => {}
                (_, None) => {
                    return Err(CaseError::InvalidBus {
                        bus: bus.id,
                        message: "slack and generator buses need a voltage setpoint".into(),
                    })
                }
                (_, Some(v)) if !(v.is_finite() && v > 0.0) => {
                    return Err(CaseError::InvalidBus {
                        bus: bus.id,
                        message: format!("voltage setpoint must be positive, got {v}"),
                    })
                }
                _ => {}
            }
        }
        let slacks: Vec<BusId> = self
            .buses
            .iter()
            .filter(|b| b.kind == BusKind::Slack)
            .map(|b| b.id)
            .collect();
        match slacks.len() {
            0 => return Err(CaseError::MissingSlack),
            1 => {}
            _ => return Err(CaseError::MultipleSlack(slacks)),
        }

        let mut branch_ids = HashSet::new();
        for br in &self.branches {
            if !branch_ids.insert(&br.id) {
                return Err(CaseError::DuplicateBranch {
                    branch: br.id.clone(),
                });
            }
            for end in [br.from_bus, br.to_bus] {
                if !ids.contains(&end) {
                    return Err(CaseError::UnknownBus {
                        branch: br.id.clone(),
                        bus: end,
                    });
                }
            }
            if br.from_bus == br.to_bus {
                return Err(CaseError::SelfLoop {
                    branch: br.id.clone(),
                    bus: br.from_bus,
                });
            }
            if br.r == 0.0 && br.x == 0.0 {
                return Err(CaseError::ZeroImpedance {
                    branch: br.id.clone(),
                });
            }
            if br.r < 0.0 {
                return Err(CaseError::InvalidBranch {
                    branch: br.id.clone(),
                    message: format!("negative resistance {}", br.r),
                });
            }
        }
        Ok(())
    }

    /// Bus id to ordinal (position in `buses`).
    pub fn bus_index(&self) -> HashMap<BusId, usize> {
        self.buses
            .iter()
            .enumerate()
            .map(|(i, b)| (b.id, i))
            .collect()
    }

    pub fn bus(&self, id: BusId) -> Option<&Bus> {
        self.buses.iter().find(|b| b.id == id)
    }

    pub fn slack_index(&self) -> usize {
        self.buses
            .iter()
            .position(|b| b.kind == BusKind::Slack)
            .expect("validated case has a slack bus")
    }

    pub fn load_buses(&self) -> impl Iterator<Item = &Bus> {
        self.buses.iter().filter(|b| b.kind == BusKind::Load)
    }

    /// Resolves a branch reference: an exact branch id, or a `from-to`
    /// endpoint pair in either orientation.
    pub fn branch_position(&self, reference: &BranchId) -> Result<usize, CaseError> {
        if let Some(pos) = self.branches.iter().position(|b| &b.id == reference) {
            return Ok(pos);
        }
        let pair = reference
            .as_str()
            .split_once('-')
            .and_then(|(a, b)| Some((a.trim().parse().ok()?, b.trim().parse().ok()?)));
        if let Some((a, b)) = pair {
            let mut matches = self
                .branches
                .iter()
                .enumerate()
                .filter(|(_, br)| br.connects(BusId(a), BusId(b)))
                .map(|(i, _)| i);
            if let Some(first) = matches.next() {
                if matches.next().is_some() {
                    return Err(CaseError::AmbiguousBranch(reference.to_string()));
                }
                return Ok(first);
            }
        }
        Err(CaseError::UnknownBranch(reference.to_string()))
    }

    /// Per-branch in-service mask for the given outage set.
    pub fn in_service(&self, outages: &Contingency) -> Result<Vec<bool>, CaseError> {
        let mut mask = vec![true; self.branches.len()];
        for id in outages.iter() {
            mask[self.branch_position(id)?] = false;
        }
        Ok(mask)
    }

    /// Rewrites a contingency so that it names branches by their case ids.
    pub fn canonical_contingency(&self, c: &Contingency) -> Result<Contingency, CaseError> {
        let ids = c
            .iter()
            .map(|r| self.branch_position(r).map(|i| self.branches[i].id.clone()))
            .collect::<Result<BTreeSet<_>, _>>()?;
        Ok(Contingency(ids))
    }

    /// Serializes to the case-file format. Values are written with Rust's
    /// shortest round-trip formatting, so `parse_case(to_text())` reproduces
    /// the case bit-for-bit.
    pub fn to_text(&self) -> String {
        use std::fmt::Write;
        let mut s = String::new();
        let _ = writeln!(s, "BASE_MVA {}", self.base_mva);
        let _ = writeln!(s, "\nBUS\n# id kind v_setpoint p_gen q_gen p_load q_load");
        for b in &self.buses {
            let v = b
                .v_setpoint
                .map_or_else(|| "-".to_string(), |v| format!("{v:?}"));
            let _ = writeln!(
                s,
                "{} {} {} {:?} {:?} {:?} {:?}",
                b.id,
                b.kind.keyword(),
                v,
                b.p_gen,
                b.q_gen,
                b.p_load,
                b.q_load
            );
        }
        let _ = writeln!(s, "\nBRANCH\n# id from to r x b_half");
        for br in &self.branches {
            let _ = writeln!(
                s,
                "{} {} {} {:?} {:?} {:?}",
                br.id, br.from_bus, br.to_bus, br.r, br.x, br.b_half
            );
        }
        s
    }
}

impl FromStr for Case {
    type Err = CaseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_case(s)
    }
}

/// The bundled five-bus system.
pub fn five_bus() -> Case {
    parse_case(FIVE_BUS_CASE).expect("bundled case is valid")
}

/// The bundled twelve-contingency list.
pub fn five_bus_contingencies() -> Vec<Contingency> {
    parse_contingency_list(FIVE_BUS_CONTINGENCIES).expect("bundled contingency list is valid")
}
