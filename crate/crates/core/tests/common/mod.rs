//! Independent oracles shared by the integration tests.
#![allow(dead_code)]

use busrank_core::powerflow::BusState;
use busrank_core::{
    build_ybus, AdmittanceMatrix, BusId, BusKind, Case, Contingency, LoadDelta, LoadOverrides,
    PowerFlow, PowerFlowOptions,
};
use num_complex::Complex64;

/// P and Q at every bus from S = V · conj(Y V).
pub fn complex_injections(y: &AdmittanceMatrix, state: &BusState) -> (Vec<f64>, Vec<f64>) {
    let v = state.phasors();
    let n = v.len();
    let s: Vec<Complex64> = (0..n)
        .map(|i| {
            let current: Complex64 = (0..n).map(|k| y.get(i, k) * v[k]).sum();
            v[i] * current.conj()
        })
        .collect();
    (
        s.iter().map(|s| s.re).collect(),
        s.iter().map(|s| s.im).collect(),
    )
}

/// Scheduled minus injected power per bus ordinal.
pub fn complex_mismatch(
    case: &Case,
    outages: &Contingency,
    state: &BusState,
    overrides: &LoadOverrides,
) -> Vec<(f64, f64)> {
    let y = build_ybus(case, outages).unwrap();
    let (p, q) = complex_injections(&y, state);
    case.buses
        .iter()
        .enumerate()
        .map(|(i, b)| {
            let extra = overrides
                .get(&b.id)
                .copied()
                .unwrap_or(LoadDelta { dp: 0.0, dq: 0.0 });
            (
                b.p_gen - b.p_load - extra.dp - p[i],
                b.q_gen - b.q_load - extra.dq - q[i],
            )
        })
        .collect()
}

/// Largest residual over the equations of the power-flow problem.
pub fn certificate(
    case: &Case,
    outages: &Contingency,
    state: &BusState,
    overrides: &LoadOverrides,
) -> f64 {
    complex_mismatch(case, outages, state, overrides)
        .into_iter()
        .zip(&case.buses)
        .map(|((dp, dq), b)| match b.kind {
            BusKind::Slack => 0.0,
            BusKind::Generator => dp.abs(),
            BusKind::Load => dp.abs().max(dq.abs()),
        })
        .fold(0.0, f64::max)
}

/// Central differences of the injections, rows `[P non-slack; Q load]`,
/// columns `[angles non-slack; magnitudes load]`.
pub fn finite_difference_jacobian(
    case: &Case,
    y: &AdmittanceMatrix,
    state: &BusState,
) -> Vec<Vec<f64>> {
    let angles: Vec<usize> = (0..case.buses.len())
        .filter(|&i| case.buses[i].kind != BusKind::Slack)
        .collect();
    let mags: Vec<usize> = (0..case.buses.len())
        .filter(|&i| case.buses[i].kind == BusKind::Load)
        .collect();
    let rows = |s: &BusState| {
        let (p, q) = complex_injections(y, s);
        angles
            .iter()
            .map(|&i| p[i])
            .chain(mags.iter().map(|&i| q[i]))
            .collect::<Vec<f64>>()
    };
    let h = 1e-6;
    let n = angles.len() + mags.len();
    let mut cols = Vec::with_capacity(n);
    for c in 0..n {
        let (mut up, mut dn) = (state.clone(), state.clone());
        if c < angles.len() {
            up.va[angles[c]] += h;
            dn.va[angles[c]] -= h;
        } else {
            up.vm[mags[c - angles.len()]] += h;
            dn.vm[mags[c - angles.len()]] -= h;
        }
        let (a, b) = (rows(&up), rows(&dn));
        cols.push(
            a.iter()
                .zip(&b)
                .map(|(a, b)| (a - b) / (2.0 * h))
                .collect::<Vec<f64>>(),
        );
    }
    (0..n)
        .map(|r| (0..n).map(|c| cols[c][r]).collect())
        .collect()
}

/// Worst entrywise error of `analytic` against central differences,
/// relative to max(|numeric|, 1).
pub fn jacobian_error(case: &Case, outages: &Contingency, state: &BusState) -> f64 {
    let y = build_ybus(case, outages).unwrap();
    let analytic = busrank_core::powerflow::jacobian(case, &y, state);
    let numeric = finite_difference_jacobian(case, &y, state);
    let mut worst: f64 = 0.0;
    for (r, row) in numeric.iter().enumerate() {
        for (c, &fd) in row.iter().enumerate() {
            worst = worst.max((analytic[(r, c)] - fd).abs() / fd.abs().max(1.0));
        }
    }
    worst
}

pub fn converges_flat(pf: &PowerFlow, bus: BusId, dq: f64) -> bool {
    let ov = LoadOverrides::from([(bus, LoadDelta { dp: 0.0, dq })]);
    pf.solve(&ov, None, &PowerFlowOptions::default())
        .unwrap()
        .is_converged()
}

/// Flat-start ramp in 0.01 steps, refined in 0.001 steps: last convergent
/// reactive increment.
pub fn brute_force_critical(case: &Case, c: &Contingency, bus: BusId) -> f64 {
    let pf = PowerFlow::new(case, c).unwrap();
    let mut k = 0u32;
    while converges_flat(&pf, bus, f64::from(k + 1) * 0.01) {
        k += 1;
    }
    let base = f64::from(k) * 0.01;
    let mut j = 0u32;
    while j < 10 && converges_flat(&pf, bus, base + f64::from(j + 1) * 0.001) {
        j += 1;
    }
    base + f64::from(j) * 0.001
}
