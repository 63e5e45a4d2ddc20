//! Full Newton-Raphson AC power flow in polar coordinates.
//!
//! Unknowns are the angles of every non-slack bus followed by the
//! magnitudes of every load (PQ) bus. Generator buses hold their voltage
//! setpoint; reactive limits are not modelled.

use std::collections::BTreeMap;

use log::{debug, trace};
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::case::{BranchId, BusId, BusKind, Case, CaseError, Contingency};
use crate::ybus::{build_ybus, AdmittanceMatrix};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PowerFlowError {
    #[error(transparent)]
    Case(#[from] CaseError),
    #[error("load override at bus {0}: bus is not a load bus")]
    OverrideNotLoadBus(BusId),
    #[error("load override references unknown bus {0}")]
    OverrideUnknownBus(BusId),
    #[error("invalid solver options: {0}")]
    InvalidOptions(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerFlowOptions {
    /// Largest admissible absolute P/Q mismatch, per-unit.
    pub tol: f64,
    pub max_iter: usize,
    /// Ignore warm-start states and always begin from a flat profile.
    pub flat_start: bool,
}

impl Default for PowerFlowOptions {
    fn default() -> Self {
        PowerFlowOptions {
            tol: 1e-6,
            max_iter: 30,
            flat_start: false,
        }
    }
}

impl PowerFlowOptions {
    pub fn validate(&self) -> Result<(), PowerFlowError> {
        if !(self.tol.is_finite() && self.tol > 0.0) {
            return Err(PowerFlowError::InvalidOptions(format!(
                "tol must be > 0, got {}",
                self.tol
            )));
        }
        if self.max_iter == 0 {
            return Err(PowerFlowError::InvalidOptions(
                "max_iter must be >= 1".into(),
            ));
        }
        Ok(())
    }
}

/// Additional load applied on top of a bus's scheduled load.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LoadDelta {
    pub dp: f64,
    pub dq: f64,
}

pub type LoadOverrides = BTreeMap<BusId, LoadDelta>;

/// Voltage magnitudes and angles, indexed by bus ordinal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BusState {
    pub vm: Vec<f64>,
    pub va: Vec<f64>,
}

impl BusState {
    pub fn flat(case: &Case) -> Self {
        let vm = case
            .buses
            .iter()
            .map(|b| match b.kind {
                BusKind::Load => 1.0,
                _ => b.v_setpoint.expect("validated setpoint"),
            })
            .collect();
        BusState {
            vm,
            va: vec![0.0; case.buses.len()],
        }
    }

    pub fn phasors(&self) -> Vec<Complex64> {
        self.vm
            .iter()
            .zip(&self.va)
            .map(|(&m, &a)| Complex64::from_polar(m, a))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerFlowSolution {
    pub bus_ids: Vec<BusId>,
    pub state: BusState,
    pub iterations: usize,
    pub max_mismatch: f64,
}

impl PowerFlowSolution {
    pub fn voltage(&self, bus: BusId) -> Option<f64> {
        self.bus_ids
            .iter()
            .position(|b| *b == bus)
            .map(|i| self.state.vm[i])
    }

    pub fn angle(&self, bus: BusId) -> Option<f64> {
        self.bus_ids
            .iter()
            .position(|b| *b == bus)
            .map(|i| self.state.va[i])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DivergenceReason {
    MaxIterations,
    SingularJacobian,
    VoltageOutOfRange,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diverged {
    pub reason: DivergenceReason,
    pub iterations: usize,
    pub last_mismatch: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum PowerFlowOutcome {
    Converged(PowerFlowSolution),
    Diverged(Diverged),
}

impl PowerFlowOutcome {
    pub fn converged(self) -> Option<PowerFlowSolution> {
        match self {
            PowerFlowOutcome::Converged(s) => Some(s),
            PowerFlowOutcome::Diverged(_) => None,
        }
    }

    pub fn is_converged(&self) -> bool {
        matches!(self, PowerFlowOutcome::Converged(_))
    }
}

/// Net scheduled injections (generation minus load), per bus ordinal.
#[derive(Debug, Clone, PartialEq)]
pub struct Schedule {
    pub p: Vec<f64>,
    pub q: Vec<f64>,
}

impl Schedule {
    pub fn new(case: &Case, overrides: &LoadOverrides) -> Result<Self, PowerFlowError> {
        let mut p: Vec<f64> = case.buses.iter().map(|b| b.p_gen - b.p_load).collect();
        let mut q: Vec<f64> = case.buses.iter().map(|b| b.q_gen - b.q_load).collect();
        for (&id, delta) in overrides {
            let i = case
                .buses
                .iter()
                .position(|b| b.id == id)
                .ok_or(PowerFlowError::OverrideUnknownBus(id))?;
            if case.buses[i].kind != BusKind::Load {
                return Err(PowerFlowError::OverrideNotLoadBus(id));
            }
            p[i] -= delta.dp;
            q[i] -= delta.dq;
        }
        Ok(Schedule { p, q })
    }
}

/// Per-bus residuals `scheduled - injected`. Entries that are not equations
/// of the power-flow problem (slack P and Q, generator Q) are reported as
/// computed but excluded from [`Mismatch::max_abs`].
#[derive(Debug, Clone, PartialEq)]
pub struct Mismatch {
    pub dp: Vec<f64>,
    pub dq: Vec<f64>,
}

impl Mismatch {
    pub fn max_abs(&self, case: &Case) -> f64 {
        case.buses
            .iter()
            .enumerate()
            .map(|(i, b)| match b.kind {
                BusKind::Slack => 0.0,
                BusKind::Generator => self.dp[i].abs(),
                BusKind::Load => self.dp[i].abs().max(self.dq[i].abs()),
            })
            .fold(0.0, f64::max)
    }
}

/// Real and reactive injections from the polar power-balance equations.
pub fn injections(ybus: &AdmittanceMatrix, state: &BusState) -> (Vec<f64>, Vec<f64>) {
    let n = ybus.dim();
    let mut p = vec![0.0; n];
    let mut q = vec![0.0; n];
    for i in 0..n {
        for k in 0..n {
            let y = ybus.get(i, k);
            if y.re == 0.0 && y.im == 0.0 {
                continue;
            }
            let (s, c) = (state.va[i] - state.va[k]).sin_cos();
            let vv = state.vm[i] * state.vm[k];
            p[i] += vv * (y.re * c + y.im * s);
            q[i] += vv * (y.re * s - y.im * c);
        }
    }
    (p, q)
}

pub fn mismatch(
    case: &Case,
    ybus: &AdmittanceMatrix,
    schedule: &Schedule,
    state: &BusState,
) -> Mismatch {
    debug_assert_eq!(state.vm.len(), case.buses.len());
    let (p, q) = injections(ybus, state);
    Mismatch {
        dp: schedule.p.iter().zip(&p).map(|(s, v)| s - v).collect(),
        dq: schedule.q.iter().zip(&q).map(|(s, v)| s - v).collect(),
    }
}

/// Ordinals of the angle and magnitude unknowns.
#[derive(Debug, Clone, PartialEq)]
pub struct Unknowns {
    pub angles: Vec<usize>,
    pub magnitudes: Vec<usize>,
}

impl Unknowns {
    pub fn of(case: &Case) -> Self {
        let angles = (0..case.buses.len())
            .filter(|&i| case.buses[i].kind != BusKind::Slack)
            .collect();
        let magnitudes = (0..case.buses.len())
            .filter(|&i| case.buses[i].kind == BusKind::Load)
            .collect();
        Unknowns { angles, magnitudes }
    }

    pub fn len(&self) -> usize {
        self.angles.len() + self.magnitudes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Residual vector ordered like the Jacobian rows.
    pub fn residual(&self, m: &Mismatch) -> DVector<f64> {
        DVector::from_iterator(
            self.len(),
            self.angles
                .iter()
                .map(|&i| m.dp[i])
                .chain(self.magnitudes.iter().map(|&i| m.dq[i])),
        )
    }
}

/// Jacobian of the injections with respect to `[angles; magnitudes]`,
/// rows `[P at non-slack buses; Q at load buses]`.
pub fn jacobian(case: &Case, ybus: &AdmittanceMatrix, state: &BusState) -> DMatrix<f64> {
    let unknowns = Unknowns::of(case);
    jacobian_for(&unknowns, ybus, state)
}

fn jacobian_for(unknowns: &Unknowns, ybus: &AdmittanceMatrix, state: &BusState) -> DMatrix<f64> {
    let (p, q) = injections(ybus, state);
    let na = unknowns.angles.len();
    let n = unknowns.len();
    let vm = &state.vm;
    let va = &state.va;
    let mut jac = DMatrix::zeros(n, n);

    // d/dδ_k and d/dV_k of P_i, Q_i
    let dp_dd = |i: usize, k: usize| -> f64 {
        let y = ybus.get(i, k);
        if i == k {
            -q[i] - y.im * vm[i] * vm[i]
        } else {
            let (s, c) = (va[i] - va[k]).sin_cos();
            vm[i] * vm[k] * (y.re * s - y.im * c)
        }
    };
    let dp_dv = |i: usize, k: usize| -> f64 {
        let y = ybus.get(i, k);
        if i == k {
            p[i] / vm[i] + y.re * vm[i]
        } else {
            let (s, c) = (va[i] - va[k]).sin_cos();
            vm[i] * (y.re * c + y.im * s)
        }
    };
    let dq_dd = |i: usize, k: usize| -> f64 {
        let y = ybus.get(i, k);
        if i == k {
            p[i] - y.re * vm[i] * vm[i]
        } else {
            let (s, c) = (va[i] - va[k]).sin_cos();
            -vm[i] * vm[k] * (y.re * c + y.im * s)
        }
    };
    let dq_dv = |i: usize, k: usize| -> f64 {
        let y = ybus.get(i, k);
        if i == k {
            q[i] / vm[i] - y.im * vm[i]
        } else {
            let (s, c) = (va[i] - va[k]).sin_cos();
            vm[i] * (y.re * s - y.im * c)
        }
    };

    for (r, &i) in unknowns.angles.iter().enumerate() {
        for (c, &k) in unknowns.angles.iter().enumerate() {
            jac[(r, c)] = dp_dd(i, k);
        }
        for (c, &k) in unknowns.magnitudes.iter().enumerate() {
            jac[(r, na + c)] = dp_dv(i, k);
        }
    }
    for (r, &i) in unknowns.magnitudes.iter().enumerate() {
        for (c, &k) in unknowns.angles.iter().enumerate() {
            jac[(na + r, c)] = dq_dd(i, k);
        }
        for (c, &k) in unknowns.magnitudes.iter().enumerate() {
            jac[(na + r, na + c)] = dq_dv(i, k);
        }
    }
    jac
}

/// A network prepared for repeated solves under one outage set.
#[derive(Debug, Clone)]
pub struct PowerFlow<'a> {
    case: &'a Case,
    ybus: AdmittanceMatrix,
    unknowns: Unknowns,
}

impl<'a> PowerFlow<'a> {
    pub fn new(case: &'a Case, outages: &Contingency) -> Result<Self, PowerFlowError> {
        Ok(PowerFlow {
            case,
            ybus: build_ybus(case, outages)?,
            unknowns: Unknowns::of(case),
        })
    }

    pub fn case(&self) -> &Case {
        self.case
    }

    pub fn ybus(&self) -> &AdmittanceMatrix {
        &self.ybus
    }

    /// Solves from `start` (or a flat profile). Setpoint magnitudes and the
    /// slack angle are always reset, whatever `start` holds.
    pub fn solve(
        &self,
        overrides: &LoadOverrides,
        start: Option<&BusState>,
        options: &PowerFlowOptions,
    ) -> Result<PowerFlowOutcome, PowerFlowError> {
        options.validate()?;
        let schedule = Schedule::new(self.case, overrides)?;
        let mut state = BusState::flat(self.case);
        if let (Some(s), false) = (start, options.flat_start) {
            for &i in &self.unknowns.angles {
                state.va[i] = s.va[i];
            }
            for &i in &self.unknowns.magnitudes {
                state.vm[i] = s.vm[i];
            }
        }
        Ok(self.iterate(&schedule, state, options))
    }

    fn iterate(
        &self,
        schedule: &Schedule,
        mut state: BusState,
        options: &PowerFlowOptions,
    ) -> PowerFlowOutcome {
        let na = self.unknowns.angles.len();
        let mut iterations = 0;
        loop {
            let m = mismatch(self.case, &self.ybus, schedule, &state);
            let worst = m.max_abs(self.case);
            trace!("newton iteration {iterations}: max mismatch {worst:e}");
            if !worst.is_finite() {
                return self.diverged(DivergenceReason::VoltageOutOfRange, iterations, worst);
            }
            if worst < options.tol {
                debug!("converged in {iterations} iterations, mismatch {worst:e}");
                return PowerFlowOutcome::Converged(PowerFlowSolution {
                    bus_ids: self.case.buses.iter().map(|b| b.id).collect(),
                    state,
                    iterations,
                    max_mismatch: worst,
                });
            }
            if iterations >= options.max_iter {
                return self.diverged(DivergenceReason::MaxIterations, iterations, worst);
            }
            let jac = jacobian_for(&self.unknowns, &self.ybus, &state);
            let rhs = self.unknowns.residual(&m);
            let step = match jac.lu().solve(&rhs) {
                Some(dx) if dx.iter().all(|v| v.is_finite()) => dx,
                _ => return self.diverged(DivergenceReason::SingularJacobian, iterations, worst),
            };
            for (r, &i) in self.unknowns.angles.iter().enumerate() {
                state.va[i] += step[r];
            }
            for (r, &i) in self.unknowns.magnitudes.iter().enumerate() {
                state.vm[i] += step[na + r];
            }
            iterations += 1;
            if self
                .unknowns
                .magnitudes
                .iter()
                .any(|&i| !(state.vm[i] > 0.0 && state.vm[i] <= 2.0))
            {
                return self.diverged(DivergenceReason::VoltageOutOfRange, iterations, worst);
            }
        }
    }

    fn diverged(
        &self,
        reason: DivergenceReason,
        iterations: usize,
        last_mismatch: f64,
    ) -> PowerFlowOutcome {
        debug!("diverged ({reason:?}) after {iterations} iterations, mismatch {last_mismatch:e}");
        PowerFlowOutcome::Diverged(Diverged {
            reason,
            iterations,
            last_mismatch,
        })
    }
}

/// One-shot solve from a flat start.
pub fn solve(
    case: &Case,
    outages: &Contingency,
    overrides: &LoadOverrides,
    options: &PowerFlowOptions,
) -> Result<PowerFlowOutcome, PowerFlowError> {
    PowerFlow::new(case, outages)?.solve(overrides, None, options)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BranchFlow {
    pub branch: BranchId,
    pub sending: BusId,
    pub receiving: BusId,
    pub p_send: f64,
    pub q_send: f64,
    /// Real power delivered into the receiving bus.
    pub p_recv: f64,
    pub q_recv: f64,
    pub p_loss: f64,
    pub q_loss: f64,
}

/// Pi-model flows of every in-service branch, oriented so that the sending
/// end is the one injecting more real power into the branch.
pub fn line_flows(
    case: &Case,
    outages: &Contingency,
    solution: &PowerFlowSolution,
) -> Result<Vec<BranchFlow>, CaseError> {
    let in_service = case.in_service(outages)?;
    let index = case.bus_index();
    let v = solution.state.phasors();
    let flows = case
        .branches
        .iter()
        .zip(in_service)
        .filter(|(_, on)| *on)
        .map(|(br, _)| {
            let (f, t) = (index[&br.from_bus], index[&br.to_bus]);
            let y = br.series_admittance();
            let shunt = Complex64::new(0.0, br.b_half);
            let s_ft = v[f] * ((v[f] - v[t]) * y + v[f] * shunt).conj();
            let s_tf = v[t] * ((v[t] - v[f]) * y + v[t] * shunt).conj();
            let (sending, receiving, s_send, s_back) = if s_ft.re >= s_tf.re {
                (br.from_bus, br.to_bus, s_ft, s_tf)
            } else {
                (br.to_bus, br.from_bus, s_tf, s_ft)
            };
            let loss = s_send + s_back;
            BranchFlow {
                branch: br.id.clone(),
                sending,
                receiving,
                p_send: s_send.re,
                q_send: s_send.im,
                p_recv: -s_back.re,
                q_recv: -s_back.im,
                p_loss: loss.re,
                q_loss: loss.im,
            }
        })
        .collect();
    Ok(flows)
}
