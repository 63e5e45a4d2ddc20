//! Two parallel single-input Mamdani systems scoring bus voltages and line
//! LF indices on a common severity scale.
//!
//! Each rule maps one input term to one severity term. A rule fires at the
//! membership degree of its input term, clips its output term at that
//! degree, the clipped shapes are combined by pointwise max, and the crisp
//! severity is the centroid of the combined shape sampled on a fixed grid.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::case::{BranchId, BusId};

pub const DEFAULT_FUZZY_CONFIG: &str = include_str!("../data/default_fuzzy.toml");

pub const VOLTAGE_LABELS: [&str; 3] = ["LV", "NV", "OV"];
pub const LF_LABELS: [&str; 5] = ["VS", "S", "M", "H", "VH"];
pub const SEVERITY_LABELS: [&str; 5] = ["VLS", "LS", "BS", "AS", "MS"];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FuzzyError {
    #[error("cannot parse fuzzy config: {0}")]
    Parse(String),
    #[error("{partition}: {message}")]
    Invalid {
        partition: &'static str,
        message: String,
    },
    #[error("{partition}: input {x} has zero membership in every term")]
    Uncovered { partition: &'static str, x: f64 },
    #[error("non-finite input {0}")]
    NonFiniteInput(f64),
}

/// Trapezoid `[a, b, c, d]` with a unit plateau on `[b, c]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MembershipFunction {
    pub label: String,
    pub points: [f64; 4],
}

impl MembershipFunction {
    pub fn new(label: impl Into<String>, points: [f64; 4]) -> Self {
        MembershipFunction {
            label: label.into(),
            points,
        }
    }

    pub fn degree(&self, x: f64) -> f64 {
        let [a, b, c, d] = self.points;
        if b <= x && x <= c {
            1.0
        } else if x <= a || x >= d {
            0.0
        } else if x < b {
            (x - a) / (b - a)
        } else {
            (d - x) / (d - c)
        }
    }

    fn is_ordered(&self) -> bool {
        let p = self.points;
        p.iter().all(|v| v.is_finite()) && p[0] <= p[1] && p[1] <= p[2] && p[2] <= p[3]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Partition {
    pub axis: [f64; 2],
    pub terms: Vec<MembershipFunction>,
}

impl Partition {
    fn position(&self, label: &str) -> Option<usize> {
        self.terms.iter().position(|t| t.label == label)
    }

    fn clamp(&self, x: f64) -> f64 {
        x.clamp(self.axis[0], self.axis[1])
    }

    fn validate(&self, name: &'static str, labels: &[&str]) -> Result<(), FuzzyError> {
        let invalid = |message: String| FuzzyError::Invalid {
            partition: name,
            message,
        };
        let [lo, hi] = self.axis;
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(invalid(format!(
                "axis [{lo}, {hi}] is not an increasing finite range"
            )));
        }
        let mut found: Vec<&str> = self.terms.iter().map(|t| t.label.as_str()).collect();
        found.sort_unstable();
        let mut want = labels.to_vec();
        want.sort_unstable();
        if found != want {
            return Err(invalid(format!(
                "terms must be exactly {labels:?}, found {found:?}"
            )));
        }
        for t in &self.terms {
            if !t.is_ordered() {
                return Err(invalid(format!(
                    "term {} breakpoints {:?} are not ordered",
                    t.label, t.points
                )));
            }
        }
        Ok(())
    }

    /// Exact coverage check. Memberships are piecewise linear with kinks
    /// only at breakpoints, so testing every breakpoint inside the axis and
    /// every midpoint between consecutive ones is sufficient.
    fn check_coverage(&self, name: &'static str) -> Result<(), FuzzyError> {
        let [lo, hi] = self.axis;
        let mut xs: Vec<f64> = self
            .terms
            .iter()
            .flat_map(|t| t.points)
            .chain([lo, hi])
            .filter(|x| (lo..=hi).contains(x))
            .collect();
        xs.sort_by(f64::total_cmp);
        xs.dedup();
        let mids: Vec<f64> = xs.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect();
        for x in xs.into_iter().chain(mids) {
            if self.terms.iter().all(|t| t.degree(x) == 0.0) {
                return Err(FuzzyError::Uncovered { partition: name, x });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuleTables {
    /// `(voltage term, severity term)` pairs.
    pub voltage: Vec<(String, String)>,
    /// `(LF term, severity term)` pairs.
    pub lf: Vec<(String, String)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FuzzyConfig {
    #[serde(default = "default_grid_points")]
    pub grid_points: usize,
    pub voltage: Partition,
    pub lf: Partition,
    pub severity: Partition,
    pub rules: RuleTables,
}

fn default_grid_points() -> usize {
    1001
}

impl Default for FuzzyConfig {
    fn default() -> Self {
        FuzzyConfig::from_toml(DEFAULT_FUZZY_CONFIG).expect("bundled fuzzy config is valid")
    }
}

impl FuzzyConfig {
    /// Parses and validates a TOML document.
    pub fn from_toml(text: &str) -> Result<Self, FuzzyError> {
        let config: FuzzyConfig =
            toml::from_str(text).map_err(|e| FuzzyError::Parse(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), FuzzyError> {
        if self.grid_points < 2 {
            return Err(FuzzyError::Invalid {
                partition: "severity",
                message: format!("grid_points must be >= 2, got {}", self.grid_points),
            });
        }
        self.voltage.validate("voltage", &VOLTAGE_LABELS)?;
        self.lf.validate("lf", &LF_LABELS)?;
        self.severity.validate("severity", &SEVERITY_LABELS)?;
        self.voltage.check_coverage("voltage")?;
        self.lf.check_coverage("lf")?;
        check_rules(
            "voltage",
            &self.rules.voltage,
            &self.voltage,
            &self.severity,
        )?;
        check_rules("lf", &self.rules.lf, &self.lf, &self.severity)?;
        let grid = grid(self.severity.axis, self.grid_points);
        for t in &self.severity.terms {
            if grid.iter().all(|&y| t.degree(y) == 0.0) {
                return Err(FuzzyError::Invalid {
                    partition: "severity",
                    message: format!("term {} has no support on the sampled axis", t.label),
                });
            }
        }
        Ok(())
    }
}

fn check_rules(
    name: &'static str,
    rules: &[(String, String)],
    input: &Partition,
    output: &Partition,
) -> Result<(), FuzzyError> {
    let invalid = |message: String| FuzzyError::Invalid {
        partition: name,
        message,
    };
    for (i, o) in rules {
        if input.position(i).is_none() {
            return Err(invalid(format!("rule references unknown input term {i}")));
        }
        if output.position(o).is_none() {
            return Err(invalid(format!(
                "rule references unknown severity term {o}"
            )));
        }
    }
    for t in &input.terms {
        let n = rules.iter().filter(|(i, _)| *i == t.label).count();
        if n != 1 {
            return Err(invalid(format!(
                "term {} needs exactly one rule, found {n}",
                t.label
            )));
        }
    }
    Ok(())
}

fn grid(axis: [f64; 2], n: usize) -> Vec<f64> {
    let [lo, hi] = axis;
    let step = (hi - lo) / (n - 1) as f64;
    (0..n)
        .map(|k| if k == n - 1 { hi } else { lo + step * k as f64 })
        .collect()
}

/// One single-input inference system with its output shapes pre-sampled.
#[derive(Debug, Clone)]
struct Fis {
    input: Partition,
    /// Input term index and the sampled output term it maps to.
    rules: Vec<(usize, usize)>,
    grid: Vec<f64>,
    outputs: Vec<Vec<f64>>,
}

impl Fis {
    fn new(
        input: &Partition,
        rules: &[(String, String)],
        output: &Partition,
        grid_points: usize,
    ) -> Self {
        let grid = grid(output.axis, grid_points);
        let outputs = output
            .terms
            .iter()
            .map(|t| grid.iter().map(|&y| t.degree(y)).collect())
            .collect();
        let rules = rules
            .iter()
            .map(|(i, o)| (input.position(i).unwrap(), output.position(o).unwrap()))
            .collect();
        Fis {
            input: input.clone(),
            rules,
            grid,
            outputs,
        }
    }

    fn infer(&self, x: f64) -> Result<f64, FuzzyError> {
        if !x.is_finite() {
            return Err(FuzzyError::NonFiniteInput(x));
        }
        let x = self.input.clamp(x);
        let fired: Vec<(f64, &[f64])> = self
            .rules
            .iter()
            .map(|&(i, o)| {
                (
                    self.input.terms[i].degree(x).min(1.0),
                    self.outputs[o].as_slice(),
                )
            })
            .filter(|(w, _)| *w > 0.0)
            .collect();
        let mut area = 0.0;
        let mut moment = 0.0;
        for (g, &y) in self.grid.iter().enumerate() {
            let mu = fired.iter().map(|(w, s)| w.min(s[g])).fold(0.0, f64::max);
            area += mu;
            moment += mu * y;
        }
        // validation guarantees a covered input and supported outputs
        debug_assert!(area > 0.0);
        Ok(moment / area)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BusSeverity {
    pub bus: BusId,
    pub voltage: f64,
    pub severity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LineSeverity {
    pub branch: BranchId,
    pub lf: f64,
    pub severity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeverityResult {
    pub buses: Vec<BusSeverity>,
    pub lines: Vec<LineSeverity>,
    pub sum_si_vp: f64,
    pub sum_si_lf: f64,
    pub ci: f64,
}

/// Validated configuration with both inference systems built.
#[derive(Debug, Clone)]
pub struct SeverityEngine {
    config: FuzzyConfig,
    voltage: Fis,
    lf: Fis,
}

impl SeverityEngine {
    pub fn new(config: FuzzyConfig) -> Result<Self, FuzzyError> {
        config.validate()?;
        let voltage = Fis::new(
            &config.voltage,
            &config.rules.voltage,
            &config.severity,
            config.grid_points,
        );
        let lf = Fis::new(
            &config.lf,
            &config.rules.lf,
            &config.severity,
            config.grid_points,
        );
        Ok(SeverityEngine {
            config,
            voltage,
            lf,
        })
    }

    pub fn config(&self) -> &FuzzyConfig {
        &self.config
    }

    pub fn severity_voltage(&self, v: f64) -> Result<f64, FuzzyError> {
        self.voltage.infer(v)
    }

    pub fn severity_lf(&self, lf: f64) -> Result<f64, FuzzyError> {
        self.lf.infer(lf)
    }

    /// Scores every load-bus voltage and every line LF index and sums them
    /// into the criticality index. Terms are summed in id order, so the
    /// result does not depend on input order.
    pub fn criticality_index(
        &self,
        voltages: &[(BusId, f64)],
        lfs: &[(BranchId, f64)],
    ) -> Result<SeverityResult, FuzzyError> {
        let mut buses = voltages
            .iter()
            .map(|&(bus, v)| {
                Ok(BusSeverity {
                    bus,
                    voltage: v,
                    severity: self.severity_voltage(v)?,
                })
            })
            .collect::<Result<Vec<_>, FuzzyError>>()?;
        buses.sort_by_key(|b| b.bus);
        let mut lines = lfs
            .iter()
            .map(|(branch, lf)| {
                Ok(LineSeverity {
                    branch: branch.clone(),
                    lf: *lf,
                    severity: self.severity_lf(*lf)?,
                })
            })
            .collect::<Result<Vec<_>, FuzzyError>>()?;
        lines.sort_by(|a, b| a.branch.cmp(&b.branch));
        let sum_si_vp: f64 = buses.iter().map(|b| b.severity).sum();
        let sum_si_lf: f64 = lines.iter().map(|l| l.severity).sum();
        Ok(SeverityResult {
            buses,
            lines,
            sum_si_vp,
            sum_si_lf,
            ci: sum_si_vp + sum_si_lf,
        })
    }
}

impl Default for SeverityEngine {
    fn default() -> Self {
        SeverityEngine::new(FuzzyConfig::default()).expect("default config is valid")
    }
}
