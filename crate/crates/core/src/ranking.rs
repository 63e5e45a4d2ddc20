//! Full pipeline over a scenario set, per-contingency bus ranking and the
//! comparison against the FVSI ordering.

use log::info;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::case::{BusId, BusKind, Case, CaseError, Contingency};
use crate::fuzzy::{FuzzyError, SeverityEngine, SeverityResult};
use crate::indices::{bus_fvsi, records_from_flows, IndexError, LfFormula, LineIndexRecord};
use crate::powerflow::{
    solve, Diverged, LoadOverrides, PowerFlowError, PowerFlowOptions, PowerFlowOutcome,
};
use crate::stress::{
    enumerate_scenarios, find_critical_load, CriticalLoadResult, RampOptions, Scenario, SkipReason,
    SkippedScenario, StressError,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RankingError {
    #[error(transparent)]
    Case(#[from] CaseError),
    #[error(transparent)]
    PowerFlow(#[from] PowerFlowError),
    #[error(transparent)]
    Fuzzy(#[from] FuzzyError),
    #[error(transparent)]
    Index(#[from] IndexError),
    #[error("scenario bus {bus} under {contingency}: {source}")]
    Stress {
        contingency: Contingency,
        bus: BusId,
        source: StressError,
    },
    #[error("the intact network has no power-flow solution at base load ({0:?})")]
    BaseInsolvable(Diverged),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct RankingOptions {
    pub power_flow: PowerFlowOptions,
    pub ramp: RampOptions,
    pub lf_formula: LfFormula,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BusVoltage {
    pub bus: BusId,
    pub vm: f64,
    pub va: f64,
}

/// Everything computed for one (contingency, stressed bus) pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioResult {
    pub scenario: Scenario,
    pub delta_q: f64,
    pub delta_q_diverged: f64,
    pub q_critical: f64,
    pub p_critical: f64,
    pub solves: usize,
    pub voltages: Vec<BusVoltage>,
    pub lines: Vec<LineIndexRecord>,
    pub severity: SeverityResult,
    pub fvsi: f64,
    pub ci: f64,
}

impl ScenarioResult {
    pub fn voltage(&self, bus: BusId) -> Option<f64> {
        self.voltages.iter().find(|v| v.bus == bus).map(|v| v.vm)
    }
}

/// Indices and severities of a critical operating point.
pub fn evaluate_critical(
    case: &Case,
    critical: CriticalLoadResult,
    formula: LfFormula,
    engine: &SeverityEngine,
) -> Result<ScenarioResult, RankingError> {
    let sol = &critical.solution;
    let lines = records_from_flows(case, &critical.branch_flows, sol, formula)?;
    let load_voltages: Vec<(BusId, f64)> = case
        .buses
        .iter()
        .filter(|b| b.kind == BusKind::Load)
        .map(|b| (b.id, sol.voltage(b.id).expect("bus in solution")))
        .collect();
    let lfs: Vec<_> = lines.iter().map(|r| (r.branch.clone(), r.lf)).collect();
    let severity = engine.criticality_index(&load_voltages, &lfs)?;
    let voltages = sol
        .bus_ids
        .iter()
        .zip(sol.state.vm.iter().zip(&sol.state.va))
        .map(|(&bus, (&vm, &va))| BusVoltage { bus, vm, va })
        .collect();
    Ok(ScenarioResult {
        fvsi: bus_fvsi(&lines),
        ci: severity.ci,
        scenario: critical.scenario,
        delta_q: critical.delta_q,
        delta_q_diverged: critical.delta_q_diverged,
        q_critical: critical.q_critical,
        p_critical: critical.p_critical,
        solves: critical.solves,
        voltages,
        lines,
        severity,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankEntry {
    pub bus: BusId,
    pub ci: f64,
    pub rank: usize,
    pub fvsi: f64,
    pub fvsi_rank: usize,
    /// Another bus in the same table has exactly this CI.
    pub equal_ci: bool,
    /// Fuzzy and FVSI ranks coincide.
    pub agrees: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankingTable {
    pub contingency: Contingency,
    /// Ordered by fuzzy rank.
    pub entries: Vec<RankEntry>,
}

impl RankingTable {
    pub fn fuzzy_order(&self) -> Vec<BusId> {
        self.entries.iter().map(|e| e.bus).collect()
    }

    pub fn fvsi_order(&self) -> Vec<BusId> {
        let mut e: Vec<_> = self.entries.iter().collect();
        e.sort_by_key(|e| e.fvsi_rank);
        e.into_iter().map(|e| e.bus).collect()
    }

    /// Buses sharing the largest CI.
    pub fn top(&self) -> Vec<BusId> {
        match self.entries.first() {
            Some(first) => self
                .entries
                .iter()
                .filter(|e| e.ci == first.ci)
                .map(|e| e.bus)
                .collect(),
            None => Vec::new(),
        }
    }
}

fn order_desc(values: &[(BusId, f64)]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| {
        values[b]
            .1
            .total_cmp(&values[a].1)
            .then(values[a].0.cmp(&values[b].0))
    });
    idx
}

/// Ranks the results of one contingency by decreasing CI, ties broken by
/// ascending bus id. FVSI ranks use the same rule on the bus FVSI.
pub fn rank_buses(contingency: &Contingency, results: &[&ScenarioResult]) -> RankingTable {
    let ci: Vec<_> = results.iter().map(|r| (r.scenario.bus, r.ci)).collect();
    let fv: Vec<_> = results.iter().map(|r| (r.scenario.bus, r.fvsi)).collect();
    let mut fvsi_rank = vec![0; results.len()];
    for (rank, i) in order_desc(&fv).into_iter().enumerate() {
        fvsi_rank[i] = rank + 1;
    }
    let entries = order_desc(&ci)
        .into_iter()
        .enumerate()
        .map(|(pos, i)| RankEntry {
            bus: ci[i].0,
            ci: ci[i].1,
            rank: pos + 1,
            fvsi: fv[i].1,
            fvsi_rank: fvsi_rank[i],
            equal_ci: ci.iter().enumerate().any(|(j, c)| j != i && c.1 == ci[i].1),
            agrees: fvsi_rank[i] == pos + 1,
        })
        .collect();
    RankingTable {
        contingency: contingency.clone(),
        entries,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgreementRow {
    pub contingency: Contingency,
    pub fuzzy_order: Vec<BusId>,
    pub fvsi_order: Vec<BusId>,
    pub disagreeing: Vec<BusId>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AgreementReport {
    pub rows: Vec<AgreementRow>,
    pub agreeing_buses: usize,
    pub total_buses: usize,
    pub identical_tables: usize,
}

impl AgreementReport {
    /// Fraction of ranked buses with matching fuzzy and FVSI ranks, 1 when
    /// nothing was ranked.
    pub fn ratio(&self) -> f64 {
        if self.total_buses == 0 {
            1.0
        } else {
            self.agreeing_buses as f64 / self.total_buses as f64
        }
    }
}

pub fn compare_with_fvsi(tables: &[RankingTable]) -> AgreementReport {
    let mut report = AgreementReport::default();
    for t in tables {
        let disagreeing: Vec<BusId> = t
            .entries
            .iter()
            .filter(|e| !e.agrees)
            .map(|e| e.bus)
            .collect();
        report.total_buses += t.entries.len();
        report.agreeing_buses += t.entries.len() - disagreeing.len();
        if disagreeing.is_empty() {
            report.identical_tables += 1;
        }
        report.rows.push(AgreementRow {
            contingency: t.contingency.clone(),
            fuzzy_order: t.fuzzy_order(),
            fvsi_order: t.fvsi_order(),
            disagreeing,
        });
    }
    report
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankingRun {
    pub results: Vec<ScenarioResult>,
    pub skipped: Vec<SkippedScenario>,
    pub tables: Vec<RankingTable>,
    pub agreement: AgreementReport,
}

/// Stress every scenario, score it and rank the buses of each contingency.
///
/// Scenarios run in parallel; results keep enumeration order. A contingency
/// with no base-load solution is recorded as skipped. Only an insolvable
/// intact network fails the run.
pub fn run_ranking(
    case: &Case,
    contingencies: &[Contingency],
    stressed_buses: &[BusId],
    options: &RankingOptions,
    engine: &SeverityEngine,
) -> Result<RankingRun, RankingError> {
    options.power_flow.validate()?;
    options
        .ramp
        .validate()
        .map_err(|source| RankingError::Stress {
            contingency: Contingency::base(),
            bus: BusId(0),
            source,
        })?;
    if let PowerFlowOutcome::Diverged(d) = solve(
        case,
        &Contingency::base(),
        &LoadOverrides::new(),
        &options.power_flow,
    )? {
        return Err(RankingError::BaseInsolvable(d));
    }

    let plan = enumerate_scenarios(case, contingencies, stressed_buses)?;
    info!(
        "{} scenarios, {} skipped before solving",
        plan.scenarios.len(),
        plan.skipped.len()
    );

    let outcomes: Vec<Result<Result<ScenarioResult, SkippedScenario>, RankingError>> = plan
        .scenarios
        .par_iter()
        .map(|s| {
            match find_critical_load(
                case,
                &s.contingency,
                s.bus,
                &options.ramp,
                &options.power_flow,
            ) {
                Ok(critical) => {
                    evaluate_critical(case, critical, options.lf_formula, engine).map(Ok)
                }
                Err(StressError::BaseInsolvable { diverged, .. }) => Ok(Err(SkippedScenario {
                    scenario: s.clone(),
                    reason: SkipReason::BaseInsolvable { diverged },
                })),
                Err(source) => Err(RankingError::Stress {
                    contingency: s.contingency.clone(),
                    bus: s.bus,
                    source,
                }),
            }
        })
        .collect();

    let mut results = Vec::new();
    let mut skipped = plan.skipped;
    for o in outcomes {
        match o? {
            Ok(r) => results.push(r),
            Err(skip) => skipped.push(skip),
        }
    }

    let mut tables = Vec::new();
    let mut start = 0;
    while start < results.len() {
        let c = &results[start].scenario.contingency;
        let end = start
            + results[start..]
                .iter()
                .take_while(|r| &r.scenario.contingency == c)
                .count();
        let group: Vec<&ScenarioResult> = results[start..end].iter().collect();
        tables.push(rank_buses(c, &group));
        start = end;
    }
    let agreement = compare_with_fvsi(&tables);
    Ok(RankingRun {
        results,
        skipped,
        tables,
        agreement,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::case::five_bus;
    use crate::fuzzy::SeverityResult;

    fn result(bus: u32, ci: f64, fvsi: f64) -> ScenarioResult {
        ScenarioResult {
            scenario: Scenario {
                contingency: Contingency::base(),
                bus: BusId(bus),
            },
            delta_q: 0.0,
            delta_q_diverged: 0.0,
            q_critical: 0.0,
            p_critical: 0.0,
            solves: 0,
            voltages: vec![],
            lines: vec![],
            severity: SeverityResult {
                buses: vec![],
                lines: vec![],
                sum_si_vp: ci,
                sum_si_lf: 0.0,
                ci,
            },
            fvsi,
            ci,
        }
    }

    #[test]
    fn ranks_by_descending_ci() {
        let r = [
            result(5, 166.25, 0.679),
            result(3, 194.99, 0.966),
            result(4, 170.21, 0.964),
        ];
        let t = rank_buses(&Contingency::base(), &r.iter().collect::<Vec<_>>());
        assert_eq!(t.fuzzy_order(), vec![BusId(3), BusId(4), BusId(5)]);
        assert_eq!(
            t.entries.iter().map(|e| e.rank).collect::<Vec<_>>(),
            vec![1, 2, 3]
        );
        assert!(t.entries.iter().all(|e| e.agrees && !e.equal_ci));
        assert_eq!(compare_with_fvsi(&[t]).ratio(), 1.0);
    }

    #[test]
    fn ties_go_to_lower_bus_and_are_flagged() {
        let r = [
            result(4, 114.0, 0.5),
            result(3, 114.0, 0.6),
            result(5, 90.0, 0.4),
        ];
        let t = rank_buses(&Contingency::base(), &r.iter().collect::<Vec<_>>());
        assert_eq!(t.fuzzy_order(), vec![BusId(3), BusId(4), BusId(5)]);
        assert!(t.entries[0].equal_ci && t.entries[1].equal_ci && !t.entries[2].equal_ci);
        assert_eq!(t.top(), vec![BusId(3), BusId(4)]);
    }

    #[test]
    fn disagreement_flags() {
        let r = [
            result(3, 3.0, 0.8),
            result(4, 2.0, 0.9),
            result(5, 1.0, 0.1),
        ];
        let t = rank_buses(&Contingency::base(), &r.iter().collect::<Vec<_>>());
        assert_eq!(t.fvsi_order(), vec![BusId(4), BusId(3), BusId(5)]);
        let rep = compare_with_fvsi(&[t]);
        assert_eq!(rep.rows[0].disagreeing, vec![BusId(3), BusId(4)]);
        assert_eq!(
            (rep.agreeing_buses, rep.total_buses, rep.identical_tables),
            (1, 3, 0)
        );
    }

    #[test]
    fn no_stressed_buses_gives_empty_run() {
        let run = run_ranking(
            &five_bus(),
            &[],
            &[],
            &RankingOptions::default(),
            &SeverityEngine::default(),
        )
        .unwrap();
        assert!(run.results.is_empty() && run.tables.is_empty() && run.skipped.is_empty());
    }

    #[test]
    fn insolvable_intact_network_fails() {
        let mut case = five_bus();
        case.buses[2].q_load = 50.0;
        let err = run_ranking(
            &case,
            &[],
            &[BusId(3)],
            &RankingOptions::default(),
            &SeverityEngine::default(),
        );
        assert!(matches!(err, Err(RankingError::BaseInsolvable(_))));
    }
}
