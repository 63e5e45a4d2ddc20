//! Ranking of load buses by proximity to voltage collapse.
//!
//! The pipeline stresses each load bus with reactive load until the
//! Newton-Raphson power flow stops converging, evaluates the line-flow
//! stability index of every line at that critical point, and scores the
//! operating state with two parallel fuzzy inference systems (bus voltages
//! and line-flow indices). The summed severities form the criticality index
//! used to rank buses, for the intact network and under line outages.

pub mod case;
pub mod fuzzy;
pub mod indices;
pub mod powerflow;
pub mod ranking;
pub mod report;
pub mod stress;
pub mod topology;
pub mod ybus;

pub use case::{parse_case, Branch, BranchId, Bus, BusId, BusKind, Case, CaseError, Contingency};
pub use fuzzy::{FuzzyConfig, FuzzyError, SeverityEngine, SeverityResult};
pub use indices::{bus_fvsi, line_indices, IndexError, LfFormula, LineIndexRecord};
pub use powerflow::{
    line_flows, solve, BranchFlow, BusState, Diverged, DivergenceReason, LoadDelta, LoadOverrides,
    PowerFlow, PowerFlowError, PowerFlowOptions, PowerFlowOutcome, PowerFlowSolution,
};
pub use ranking::{
    compare_with_fvsi, rank_buses, run_ranking, AgreementReport, RankingError, RankingOptions,
    RankingRun, RankingTable, ScenarioResult,
};
pub use report::{render, Format, ReportDocument, ReportError};
pub use stress::{
    enumerate_scenarios, find_critical_load, screen_contingencies, CriticalLoadResult, RampMode,
    RampOptions, Scenario, ScenarioPlan, SkipReason, SkippedScenario, StressError,
};
pub use topology::{check_connectivity, Connectivity};
pub use ybus::{build_ybus, AdmittanceMatrix};
