use busrank_core::case::{five_bus, five_bus_contingencies};
use busrank_core::stress::{enumerate_scenarios, find_critical_load, RampOptions};
use busrank_core::{BusId, Contingency, LoadOverrides, PowerFlow, PowerFlowOptions};

mod common;
use common::{brute_force_critical as brute_force, converges_flat as converges};

fn scenarios() -> Vec<(Contingency, BusId)> {
    let case = five_bus();
    enumerate_scenarios(
        &case,
        &five_bus_contingencies(),
        &[BusId(3), BusId(4), BusId(5)],
    )
    .unwrap()
    .scenarios
    .into_iter()
    .map(|s| (s.contingency, s.bus))
    .collect()
}

#[test]
fn search_agrees_with_brute_force_ramp() {
    let case = five_bus();
    let ramp = RampOptions::default();
    let list = scenarios();
    assert_eq!(list.len(), 36);
    for (c, bus) in list {
        let found =
            find_critical_load(&case, &c, bus, &ramp, &PowerFlowOptions::default()).unwrap();
        let brute = brute_force(&case, &c, bus);
        assert!(
            (found.delta_q - brute).abs() <= ramp.refinement_step,
            "{c} bus {bus}: search {} brute {brute}",
            found.delta_q
        );
    }
}

#[test]
fn critical_point_is_bracketed() {
    let case = five_bus();
    let ramp = RampOptions::default();
    for (c, bus) in scenarios() {
        let r = find_critical_load(&case, &c, bus, &ramp, &PowerFlowOptions::default()).unwrap();
        let pf = PowerFlow::new(&case, &c).unwrap();
        assert!(
            converges(&pf, bus, r.delta_q),
            "{c} bus {bus} at {}",
            r.delta_q
        );
        assert!(
            !converges(&pf, bus, r.delta_q + ramp.refinement_step),
            "{c} bus {bus} past {}",
            r.delta_q
        );
    }
}

#[test]
fn stressed_bus_sags_below_base() {
    let case = five_bus();
    for (c, bus) in scenarios() {
        let r = find_critical_load(
            &case,
            &c,
            bus,
            &RampOptions::default(),
            &PowerFlowOptions::default(),
        )
        .unwrap();
        let base = busrank_core::solve(
            &case,
            &c,
            &LoadOverrides::new(),
            &PowerFlowOptions::default(),
        )
        .unwrap()
        .converged()
        .unwrap();
        assert!(
            r.solution.voltage(bus).unwrap() < base.voltage(bus).unwrap(),
            "{c} bus {bus}"
        );
    }
}

#[test]
fn warm_and_cold_searches_agree() {
    let case = five_bus();
    let warm = RampOptions::default();
    let cold = RampOptions {
        warm_start: false,
        ..warm
    };
    for (c, bus) in scenarios() {
        let a = find_critical_load(&case, &c, bus, &warm, &PowerFlowOptions::default()).unwrap();
        let b = find_critical_load(&case, &c, bus, &cold, &PowerFlowOptions::default()).unwrap();
        assert!(
            (a.delta_q - b.delta_q).abs() <= warm.refinement_step,
            "{c} bus {bus}: {} vs {}",
            a.delta_q,
            b.delta_q
        );
    }
}
