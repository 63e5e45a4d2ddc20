//! Acceptance criteria for the five-bus study. Prints one PASS/FAIL line per
//! criterion with the evidence behind it and exits non-zero if any fail.

use std::cell::Cell;
use std::process::ExitCode;

use busrank_core::case::{five_bus, five_bus_contingencies};
use busrank_core::fuzzy::SeverityEngine;
use busrank_core::indices::{line_indices, LfFormula};
use busrank_core::powerflow::BusState;
use busrank_core::ranking::evaluate_critical;
use busrank_core::report::{render, Format, ReportDocument};
use busrank_core::stress::{find_critical_load, RampOptions};
use busrank_core::{
    run_ranking, solve, BusId, Contingency, LoadDelta, LoadOverrides, PowerFlow, PowerFlowOptions,
    RankingOptions, RankingRun,
};
use proptest::prelude::*;
use proptest::test_runner::{Config, RngAlgorithm, TestRng, TestRunner};

mod common;

const LOAD_BUSES: [BusId; 3] = [BusId(3), BusId(4), BusId(5)];

// Table 2: rows buses 3, 4, 5; base column then critical load at bus 3, 4, 5
const BASE_V: [f64; 3] = [0.987, 0.984, 0.972];
const CRITICAL_V: [[f64; 3]; 3] = [
    [0.700, 0.752, 0.892],
    [0.808, 0.754, 0.893],
    [0.889, 0.748, 0.751],
];

// Table 3: base column then critical load at bus 3, 4, 5
const LINES: [&str; 7] = ["1-2", "1-3", "2-3", "2-4", "2-5", "3-4", "4-5"];
const LF_BASE: [f64; 7] = [0.083, 0.187, 0.128, 0.141, 0.168, 0.015, 0.038];
const LF_CRITICAL: [[f64; 7]; 3] = [
    [0.135, 0.155, 0.092, 0.096, 0.125, 0.325, 0.784],
    [0.115, 0.146, 0.075, 0.086, 0.120, 0.015, 0.770],
    [0.150, 0.189, 0.061, 0.059, 0.133, 0.006, 0.571],
];

// Table 6
const FVSI: [f64; 3] = [0.966, 0.964, 0.679];

// Table 7: contingency and the bus(es) ranked I
const TABLE7_TOP: [(&str, &[u32]); 12] = [
    ("1-2", &[3]),
    ("2-5", &[3]),
    ("1-2,2-3", &[3]),
    ("2-3,2-5", &[3, 4]),
    ("2-5,3-4", &[3]),
    ("1-2,3-4", &[4]),
    ("2-4,2-5", &[3, 4]),
    ("1-2,2-5", &[4]),
    ("1-2,2-4", &[5]),
    ("1-3,2-5", &[3]),
    ("1-3", &[4]),
    ("2-4", &[3]),
];

struct Outcome {
    pass: bool,
    detail: String,
}

fn report(n: usize, title: &str, o: &Outcome) {
    println!(
        "{} criterion {n}: {title}: {}",
        if o.pass { "PASS" } else { "FAIL" },
        o.detail
    );
}

fn base_run() -> RankingRun {
    run_ranking(
        &five_bus(),
        &[],
        &LOAD_BUSES,
        &RankingOptions::default(),
        &SeverityEngine::default(),
    )
    .unwrap()
}

fn criterion_1() -> Outcome {
    let case = five_bus();
    let sol = solve(
        &case,
        &Contingency::base(),
        &LoadOverrides::new(),
        &PowerFlowOptions::default(),
    )
    .unwrap()
    .converged()
    .expect("base case converges");
    let got: Vec<f64> = LOAD_BUSES
        .iter()
        .map(|&b| sol.voltage(b).unwrap())
        .collect();
    let worst = got
        .iter()
        .zip(BASE_V)
        .map(|(g, e)| (g - e).abs())
        .fold(0.0, f64::max);
    Outcome {
        pass: worst <= 0.001,
        detail: format!(
            "V3..V5 = {:.4}/{:.4}/{:.4}, worst error {worst:.4} (tol 0.001)",
            got[0], got[1], got[2]
        ),
    }
}

fn criterion_2(run: &RankingRun) -> Outcome {
    let mut worst: f64 = 0.0;
    let mut cols = Vec::new();
    for (k, &stressed) in LOAD_BUSES.iter().enumerate() {
        let r = run
            .results
            .iter()
            .find(|r| r.scenario.bus == stressed)
            .unwrap();
        let got: Vec<f64> = LOAD_BUSES.iter().map(|&b| r.voltage(b).unwrap()).collect();
        for (j, g) in got.iter().enumerate() {
            worst = worst.max((g - CRITICAL_V[j][k]).abs());
        }
        cols.push(format!(
            "bus {stressed}: {:.3}/{:.3}/{:.3}",
            got[0], got[1], got[2]
        ));
    }
    Outcome {
        pass: worst <= 0.01,
        detail: format!("{}, worst error {worst:.3} (tol 0.01)", cols.join("; ")),
    }
}

fn criterion_3() -> Outcome {
    let case = five_bus();
    let engine = SeverityEngine::default();
    let pf = PowerFlowOptions::default();
    let base = solve(&case, &Contingency::base(), &LoadOverrides::new(), &pf)
        .unwrap()
        .converged()
        .unwrap();
    let criticals: Vec<_> = LOAD_BUSES
        .iter()
        .map(|&b| {
            find_critical_load(&case, &Contingency::base(), b, &RampOptions::default(), &pf)
                .unwrap()
        })
        .collect();
    let mut lines = Vec::new();
    let mut any = false;
    for formula in [
        LfFormula::MaxTransfer,
        LfFormula::Printed,
        LfFormula::ImpedanceAngle,
    ] {
        let recs = line_indices(&case, &Contingency::base(), &base, formula).unwrap();
        let lf = |recs: &[busrank_core::LineIndexRecord], id: &str| {
            recs.iter()
                .find(|r| r.branch.as_str() == id)
                .map_or(0.0, |r| r.lf)
        };
        let base_err = LINES
            .iter()
            .zip(LF_BASE)
            .map(|(l, e)| (lf(&recs, l) - e).abs())
            .fold(0.0, f64::max);
        let mut crit_err: f64 = 0.0;
        let mut line_45 = Vec::new();
        for (k, c) in criticals.iter().enumerate() {
            let r = evaluate_critical(&case, c.clone(), formula, &engine).unwrap();
            for (j, l) in LINES.iter().enumerate() {
                crit_err = crit_err.max((lf(&r.lines, l) - LF_CRITICAL[k][j]).abs());
            }
            line_45.push(format!("{:.3}", lf(&r.lines, "4-5")));
        }
        let ok = base_err <= 0.02 && crit_err <= 0.05;
        any |= ok;
        lines.push(format!(
            "{formula:?}: base worst {base_err:.3} (tol 0.02), critical worst {crit_err:.3} (tol 0.05), line 4-5 at critical {}{}",
            line_45.join("/"),
            if ok { " [pass]" } else { "" }
        ));
    }
    Outcome {
        pass: any,
        detail: lines.join("; "),
    }
}

fn criterion_4(run: &RankingRun) -> Outcome {
    let got: Vec<f64> = LOAD_BUSES
        .iter()
        .map(|&b| {
            run.results
                .iter()
                .find(|r| r.scenario.bus == b)
                .unwrap()
                .fvsi
        })
        .collect();
    let worst = got
        .iter()
        .zip(FVSI)
        .map(|(g, e)| (g - e).abs())
        .fold(0.0, f64::max);
    let order = run.tables[0].fvsi_order();
    let order_ok = order == LOAD_BUSES;
    Outcome {
        pass: worst <= 0.05 && order_ok,
        detail: format!(
            "bus FVSI {:.3}/{:.3}/{:.3}, worst error {worst:.3} (tol 0.05); FVSI order {:?} ({})",
            got[0],
            got[1],
            got[2],
            order.iter().map(|b| b.0).collect::<Vec<_>>(),
            if order_ok { "matches" } else { "differs" }
        ),
    }
}

fn criterion_5(run: &RankingRun) -> Outcome {
    let t = &run.tables[0];
    let cis: Vec<String> = t
        .entries
        .iter()
        .map(|e| format!("bus {} CI {:.2}", e.bus, e.ci))
        .collect();
    Outcome {
        pass: t.fuzzy_order() == LOAD_BUSES,
        detail: format!("order {} (expected 3, 4, 5)", cis.join(" > ")),
    }
}

fn criterion_6(run: &RankingRun) -> Outcome {
    let mut hits = 0;
    let mut misses = Vec::new();
    for (label, tops) in TABLE7_TOP {
        let c: Contingency = label.parse().unwrap();
        let t = run.tables.iter().find(|t| t.contingency == c).unwrap();
        let top = t.entries[0].bus;
        if tops.contains(&top.0) {
            hits += 1;
        } else {
            misses.push(format!("{label}: top {top}, paper {tops:?}"));
        }
    }
    Outcome {
        pass: hits >= 9,
        detail: format!(
            "{hits}/12 top buses match (need 9); misses: {}",
            misses.join("; ")
        ),
    }
}

fn criterion_7(run: &RankingRun) -> Outcome {
    let case = five_bus();
    let pf = PowerFlowOptions::default();
    let ramp = RampOptions::default();
    let mut parts = Vec::new();
    let mut pass = true;
    let mut check = |name: &str, ok: bool, detail: String| {
        pass &= ok;
        parts.push(format!(
            "{name} {} ({detail})",
            if ok { "ok" } else { "FAILED" }
        ));
    };

    // Jacobian against central differences over 100 random states
    let worst = Cell::new(0.0f64);
    let mut runner = TestRunner::new_with_rng(
        Config {
            failure_persistence: None,
            ..Config::with_cases(100)
        },
        TestRng::deterministic_rng(RngAlgorithm::ChaCha),
    );
    let states = (
        prop::collection::vec(0.7..1.1f64, 5),
        prop::collection::vec(-0.5..0.5f64, 5),
    );
    let res = runner.run(&states, |(vm, va)| {
        let e = common::jacobian_error(&case, &Contingency::base(), &BusState { vm, va });
        worst.set(worst.get().max(e));
        prop_assert!(e <= 1e-4);
        Ok(())
    });
    check(
        "jacobian",
        res.is_ok(),
        format!("worst rel err {:.1e}", worst.get()),
    );

    // certificate, bracketing and brute-force ramp on every scenario
    let (mut cert_worst, mut bracket_ok, mut brute_worst) = (0.0f64, true, 0.0f64);
    for r in &run.results {
        let (c, bus) = (&r.scenario.contingency, r.scenario.bus);
        let ov = LoadOverrides::from([(
            bus,
            LoadDelta {
                dp: 0.0,
                dq: r.delta_q,
            },
        )]);
        let sol = find_critical_load(&case, c, bus, &ramp, &pf)
            .unwrap()
            .solution;
        cert_worst = cert_worst.max(common::certificate(&case, c, &sol.state, &ov));
        let solver = PowerFlow::new(&case, c).unwrap();
        bracket_ok &= common::converges_flat(&solver, bus, r.delta_q)
            && !common::converges_flat(&solver, bus, r.delta_q + ramp.refinement_step);
        brute_worst =
            brute_worst.max((common::brute_force_critical(&case, c, bus) - r.delta_q).abs());
    }
    check(
        "certificate",
        cert_worst < pf.tol,
        format!("worst residual {cert_worst:.1e}"),
    );
    check(
        "bracketing",
        bracket_ok,
        format!("{} scenarios", run.results.len()),
    );
    check(
        "brute-force ramp",
        brute_worst <= ramp.refinement_step && run.results.len() == 36,
        format!(
            "worst gap {brute_worst:.4} over {} scenarios",
            run.results.len()
        ),
    );

    // LF below one at every convergent scenario state
    let (mut max_lf, mut where_) = (0.0f64, String::new());
    for r in &run.results {
        for l in &r.lines {
            if l.lf > max_lf {
                max_lf = l.lf;
                where_ = format!(
                    "line {} with bus {} stressed under {}",
                    l.branch, r.scenario.bus, r.scenario.contingency
                );
            }
        }
    }
    for c in std::iter::once(Contingency::base()).chain(five_bus_contingencies()) {
        let sol = solve(&case, &c, &LoadOverrides::new(), &pf)
            .unwrap()
            .converged()
            .unwrap();
        for l in line_indices(&case, &c, &sol, LfFormula::default()).unwrap() {
            if l.lf > max_lf {
                max_lf = l.lf;
                where_ = format!("line {} at base load under {c}", l.branch);
            }
        }
    }
    check(
        "LF < 1",
        max_lf < 1.0,
        format!("max {max_lf:.3} at {where_}"),
    );

    // SI_LF monotone on a 1000-point grid
    let engine = SeverityEngine::default();
    let [lo, hi] = engine.config().lf.axis;
    let si: Vec<f64> = (0..1000)
        .map(|k| {
            engine
                .severity_lf(lo + (hi - lo) * k as f64 / 999.0)
                .unwrap()
        })
        .collect();
    check(
        "SI_LF monotone",
        si.windows(2).all(|w| w[1] >= w[0]),
        "1000 points".into(),
    );

    // CI additivity
    let additive = run
        .results
        .iter()
        .all(|r| r.ci == r.severity.sum_si_vp + r.severity.sum_si_lf && r.ci == r.severity.ci);
    check(
        "CI additivity",
        additive,
        format!("{} scenarios", run.results.len()),
    );

    // byte-identical JSON across two runs
    let json = |run: RankingRun| {
        render(
            &ReportDocument::new(run, RankingOptions::default(), engine.config().clone()),
            Format::Json,
        )
        .unwrap()
    };
    let again = run_ranking(
        &case,
        &five_bus_contingencies(),
        &LOAD_BUSES,
        &RankingOptions::default(),
        &engine,
    )
    .unwrap();
    check(
        "JSON determinism",
        json(run.clone()) == json(again),
        "two runs".into(),
    );

    Outcome {
        pass,
        detail: parts.join("; "),
    }
}

fn main() -> ExitCode {
    let base = base_run();
    let contingencies = run_ranking(
        &five_bus(),
        &five_bus_contingencies(),
        &LOAD_BUSES,
        &RankingOptions::default(),
        &SeverityEngine::default(),
    )
    .unwrap();

    let outcomes = [
        ("base-case power flow", criterion_1()),
        ("critical-load voltages", criterion_2(&base)),
        ("LF index", criterion_3()),
        ("FVSI", criterion_4(&base)),
        ("base-case fuzzy ranking", criterion_5(&base)),
        ("contingency rankings", criterion_6(&contingencies)),
        ("property suite", criterion_7(&contingencies)),
    ];
    for (n, (title, o)) in outcomes.iter().enumerate() {
        report(n + 1, title, o);
    }
    let failed = outcomes.iter().filter(|(_, o)| !o.pass).count();
    println!(
        "acceptance: {} passed, {failed} failed",
        outcomes.len() - failed
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
