//! Critical-load search: ramp a load bus's reactive demand until the power
//! flow stops converging and report the last convergent operating point.

use std::collections::HashSet;

use log::debug;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::case::{BusId, BusKind, Case, CaseError, Contingency};
use crate::indices::{line_indices, LfFormula};
use crate::powerflow::{
    line_flows, BranchFlow, Diverged, LoadDelta, LoadOverrides, PowerFlow, PowerFlowError,
    PowerFlowOptions, PowerFlowOutcome, PowerFlowSolution,
};
use crate::topology::{check_connectivity, Connectivity};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StressError {
    #[error(transparent)]
    Case(#[from] CaseError),
    #[error(transparent)]
    PowerFlow(#[from] PowerFlowError),
    #[error("contingency {contingency} islands the network: {components:?}")]
    Islanded {
        contingency: Contingency,
        components: Vec<Vec<BusId>>,
    },
    #[error("bus {0} is not a load bus")]
    NotLoadBus(BusId),
    #[error("unknown bus {0}")]
    UnknownBus(BusId),
    #[error("contingency {contingency} has no power-flow solution at base load ({diverged:?})")]
    BaseInsolvable {
        contingency: Contingency,
        diverged: Diverged,
    },
    #[error("bus {bus} still converges at +{limit} pu reactive load")]
    RampExhausted { bus: BusId, limit: f64 },
    #[error("invalid ramp options: {0}")]
    InvalidOptions(String),
}

/// How the stressed bus's load grows along the ramp.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RampMode {
    /// Only reactive load increases; real load stays at its scheduled value.
    #[default]
    ReactiveOnly,
    /// Real load grows with reactive load at the bus's scheduled power
    /// factor. Buses with no scheduled reactive load ramp reactive only.
    ConstantPowerFactor,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RampOptions {
    pub coarse_step: f64,
    /// Width of the final bracket around the divergence boundary.
    pub refinement_step: f64,
    pub mode: RampMode,
    /// Start each solve from the last convergent state.
    pub warm_start: bool,
    /// Give up when the added reactive load exceeds this many per-unit.
    pub max_delta_q: f64,
}

impl Default for RampOptions {
    fn default() -> Self {
        RampOptions {
            coarse_step: 0.05,
            refinement_step: 0.005,
            mode: RampMode::ReactiveOnly,
            warm_start: true,
            max_delta_q: 100.0,
        }
    }
}

impl RampOptions {
    pub fn validate(&self) -> Result<(), StressError> {
        let positive = |v: f64| v.is_finite() && v > 0.0;
        if !positive(self.coarse_step)
            || !positive(self.refinement_step)
            || !positive(self.max_delta_q)
        {
            return Err(StressError::InvalidOptions(format!(
                "steps and limit must be positive (coarse {}, refinement {}, max {})",
                self.coarse_step, self.refinement_step, self.max_delta_q
            )));
        }
        if self.refinement_step > self.coarse_step {
            return Err(StressError::InvalidOptions(format!(
                "refinement step {} exceeds coarse step {}",
                self.refinement_step, self.coarse_step
            )));
        }
        Ok(())
    }

    /// Load added at the stressed bus for a reactive increment `dq`.
    pub fn delta(&self, case: &Case, bus: BusId, dq: f64) -> LoadDelta {
        let dp = match self.mode {
            RampMode::ReactiveOnly => 0.0,
            RampMode::ConstantPowerFactor => {
                let b = case.bus(bus).expect("stressed bus exists");
                if b.q_load > 0.0 {
                    dq * b.p_load / b.q_load
                } else {
                    0.0
                }
            }
        };
        LoadDelta { dp, dq }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Scenario {
    pub contingency: Contingency,
    pub bus: BusId,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriticalLoadResult {
    pub scenario: Scenario,
    /// Reactive load added at the stressed bus at the last convergent point.
    pub delta_q: f64,
    /// Total reactive load of the stressed bus at that point.
    pub q_critical: f64,
    /// Total real load of the stressed bus at that point.
    pub p_critical: f64,
    /// Smallest tested increment that failed to converge.
    pub delta_q_diverged: f64,
    pub solution: PowerFlowSolution,
    pub branch_flows: Vec<BranchFlow>,
    pub solves: usize,
}

fn overrides(bus: BusId, delta: LoadDelta) -> LoadOverrides {
    LoadOverrides::from([(bus, delta)])
}

/// Coarse ramp then bisection to `refinement_step`.
pub fn find_critical_load(
    case: &Case,
    contingency: &Contingency,
    bus: BusId,
    ramp: &RampOptions,
    pf: &PowerFlowOptions,
) -> Result<CriticalLoadResult, StressError> {
    ramp.validate()?;
    let stressed = case.bus(bus).ok_or(StressError::UnknownBus(bus))?;
    if stressed.kind != BusKind::Load {
        return Err(StressError::NotLoadBus(bus));
    }
    if let Connectivity::Islanded(components) = check_connectivity(case, contingency)? {
        return Err(StressError::Islanded {
            contingency: contingency.clone(),
            components,
        });
    }

    let solver = PowerFlow::new(case, contingency)?;
    let mut solves = 0usize;
    let mut attempt =
        |dq: f64, start: Option<&PowerFlowSolution>| -> Result<PowerFlowOutcome, StressError> {
            solves += 1;
            let warm = if ramp.warm_start {
                start.map(|s| &s.state)
            } else {
                None
            };
            Ok(solver.solve(&overrides(bus, ramp.delta(case, bus, dq)), warm, pf)?)
        };

    let mut good = match attempt(0.0, None)? {
        PowerFlowOutcome::Converged(s) => s,
        PowerFlowOutcome::Diverged(diverged) => {
            return Err(StressError::BaseInsolvable {
                contingency: contingency.clone(),
                diverged,
            })
        }
    };
    let mut lo = 0.0;
    let mut hi;
    let mut k = 0u32;
    loop {
        k += 1;
        let dq = ramp.coarse_step * f64::from(k);
        if dq > ramp.max_delta_q {
            return Err(StressError::RampExhausted {
                bus,
                limit: ramp.max_delta_q,
            });
        }
        match attempt(dq, Some(&good))? {
            PowerFlowOutcome::Converged(s) => {
                lo = dq;
                good = s;
            }
            PowerFlowOutcome::Diverged(_) => {
                hi = dq;
                break;
            }
        }
    }
    while hi - lo > ramp.refinement_step {
        let mid = 0.5 * (lo + hi);
        match attempt(mid, Some(&good))? {
            PowerFlowOutcome::Converged(s) => {
                lo = mid;
                good = s;
            }
            PowerFlowOutcome::Diverged(_) => hi = mid,
        }
    }
    debug!("bus {bus} under {contingency}: critical dQ in [{lo}, {hi}] after {solves} solves");

    let delta = ramp.delta(case, bus, lo);
    let branch_flows = line_flows(case, contingency, &good)?;
    Ok(CriticalLoadResult {
        scenario: Scenario {
            contingency: contingency.clone(),
            bus,
        },
        delta_q: lo,
        q_critical: stressed.q_load + delta.dq,
        p_critical: stressed.p_load + delta.dp,
        delta_q_diverged: hi,
        solution: good,
        branch_flows,
        solves,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "reason")]
pub enum SkipReason {
    Islanded { components: Vec<Vec<BusId>> },
    NotLoadBus,
    UnknownBus,
    BaseInsolvable { diverged: Diverged },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedScenario {
    pub scenario: Scenario,
    #[serde(flatten)]
    pub reason: SkipReason,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ScenarioPlan {
    pub scenarios: Vec<Scenario>,
    pub skipped: Vec<SkippedScenario>,
}

/// Cross product of contingencies and stressed buses, in contingency-list
/// order and then ascending bus id. An empty contingency list means the
/// intact network only. Contingencies are canonicalized to case branch ids
/// before de-duplication.
pub fn enumerate_scenarios(
    case: &Case,
    contingencies: &[Contingency],
    stressed_buses: &[BusId],
) -> Result<ScenarioPlan, CaseError> {
    let base = [Contingency::base()];
    let list = if contingencies.is_empty() {
        &base[..]
    } else {
        contingencies
    };
    let mut seen = HashSet::new();
    let mut unique = Vec::new();
    for c in list {
        let c = case.canonical_contingency(c)?;
        if seen.insert(c.clone()) {
            unique.push(c);
        }
    }
    let mut buses = stressed_buses.to_vec();
    buses.sort();
    buses.dedup();

    let mut plan = ScenarioPlan::default();
    for c in unique {
        let connectivity = check_connectivity(case, &c)?;
        for &bus in &buses {
            let scenario = Scenario {
                contingency: c.clone(),
                bus,
            };
            let reason = match (case.bus(bus), &connectivity) {
                (None, _) => Some(SkipReason::UnknownBus),
                (Some(b), _) if b.kind != BusKind::Load => Some(SkipReason::NotLoadBus),
                (_, Connectivity::Islanded(components)) => Some(SkipReason::Islanded {
                    components: components.clone(),
                }),
                _ => None,
            };
            match reason {
                Some(reason) => plan.skipped.push(SkippedScenario { scenario, reason }),
                None => plan.scenarios.push(scenario),
            }
        }
    }
    Ok(plan)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScreenedContingency {
    pub contingency: Contingency,
    pub max_lf: f64,
    pub worst_branch: Option<String>,
}

/// Ranks every single and (when `max_order >= 2`) double line outage by the
/// largest post-outage LF index at base load. Islanding or insolvable
/// outages are left out.
pub fn screen_contingencies(
    case: &Case,
    max_order: usize,
    pf: &PowerFlowOptions,
) -> Result<Vec<ScreenedContingency>, StressError> {
    let ids: Vec<_> = case.branches.iter().map(|b| b.id.clone()).collect();
    let mut candidates: Vec<Contingency> = Vec::new();
    if max_order >= 1 {
        candidates.extend(ids.iter().map(|a| Contingency([a.clone()].into())));
    }
    if max_order >= 2 {
        for (i, a) in ids.iter().enumerate() {
            for b in &ids[i + 1..] {
                candidates.push(Contingency([a.clone(), b.clone()].into()));
            }
        }
    }
    let mut out = Vec::new();
    for c in candidates {
        if !check_connectivity(case, &c)?.is_connected() {
            continue;
        }
        let solution = match PowerFlow::new(case, &c)?.solve(&LoadOverrides::new(), None, pf)? {
            PowerFlowOutcome::Converged(s) => s,
            PowerFlowOutcome::Diverged(_) => continue,
        };
        let records =
            line_indices(case, &c, &solution, LfFormula::MaxTransfer).map_err(|e| match e {
                crate::indices::IndexError::Case(c) => StressError::Case(c),
                other => StressError::InvalidOptions(other.to_string()),
            })?;
        let worst = records.iter().max_by(|a, b| a.lf.total_cmp(&b.lf));
        out.push(ScreenedContingency {
            contingency: c,
            max_lf: worst.map_or(0.0, |r| r.lf),
            worst_branch: worst.map(|r| r.branch.to_string()),
        });
    }
    out.sort_by(|a, b| {
        b.max_lf
            .total_cmp(&a.max_lf)
            .then_with(|| a.contingency.cmp(&b.contingency))
    });
    Ok(out)
}
