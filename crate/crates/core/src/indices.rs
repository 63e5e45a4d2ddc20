//! Line stability indices evaluated on a converged operating state.
//!
//! The line-flow (LF) index compares the real power delivered at a line's
//! receiving end with the most real power the line could deliver to a load
//! of the same power factor, from a source `V_s` through the series
//! admittance `Y_L∠θ`:
//!
//! ```text
//! P_max = V_s² · Y_L · cos φ / (2 · (1 + cos(θ − φ)))
//! LF    = P_R / P_max
//! ```
//!
//! with `φ = atan2(Q_R, P_R)` and `θ` the angle of `1 / (r + jx)`, negative
//! for an inductive line. This is the form that reproduces published LF
//! tables. Taken literally it is the transfer limit only for unity power
//! factor; [`LfFormula::ImpedanceAngle`] uses `θ = atan2(x, r)` instead,
//! which is exact for any power factor. Charging susceptance is not part of
//! `Y_L`.
//!
//! FVSI is the fast voltage stability index `4 Z² Q_R / (V_s² X)`, which
//! also approaches 1 at a line's loadability limit.

use log::warn;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::case::{Branch, BranchId, BusId, Case, CaseError, Contingency};
use crate::powerflow::{line_flows, BranchFlow, PowerFlowSolution};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum IndexError {
    #[error(transparent)]
    Case(#[from] CaseError),
    #[error("branch {branch}: sending end injects negative real power ({p_send}); flow orientation is broken")]
    Orientation { branch: BranchId, p_send: f64 },
}

/// Which closed form of the LF index to evaluate.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LfFormula {
    /// `P_R / P_max` with `P_max` from the maximum-transfer condition.
    #[default]
    MaxTransfer,
    /// `P_R / P_max` with `θ` the series impedance angle, so that LF is
    /// exactly 1 when the load admittance magnitude equals the line's.
    ImpedanceAngle,
    /// `2 P_R (1 + cos(θ − φ)) / (V_R² Y_L cos θ)`, the compatibility form
    /// with receiving-end voltage and `cos θ` in the denominator.
    Printed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LineIndexRecord {
    pub branch: BranchId,
    pub sending: BusId,
    pub receiving: BusId,
    pub lf: f64,
    /// `None` when the branch has no series reactance.
    pub fvsi: Option<f64>,
    /// Receiving-end power-factor angle `atan2(Q_R, P_R)`.
    pub phi: f64,
    /// Angle of the series admittance `1 / (r + jx)`.
    pub theta: f64,
}

/// LF index of one in-service branch.
///
/// A branch that delivers no real power at its receiving end (`P_R <= 0`,
/// both ends feeding the series losses) has index 0.
pub fn lf_index(
    flow: &BranchFlow,
    branch: &Branch,
    v_sending: f64,
    v_receiving: f64,
    formula: LfFormula,
) -> Result<f64, IndexError> {
    if flow.p_send < 0.0 {
        return Err(IndexError::Orientation {
            branch: flow.branch.clone(),
            p_send: flow.p_send,
        });
    }
    let p_r = flow.p_recv;
    if p_r <= 0.0 {
        return Ok(0.0);
    }
    let y = branch.series_admittance();
    let (y_mag, theta) = (y.norm(), y.arg());
    let phi = flow.q_recv.atan2(p_r);
    let p_max = |theta: f64| {
        v_sending * v_sending * y_mag * phi.cos() / (2.0 * (1.0 + (theta - phi).cos()))
    };
    let lf = match formula {
        LfFormula::MaxTransfer => p_r / p_max(theta),
        LfFormula::ImpedanceAngle => p_r / p_max(-theta),
        LfFormula::Printed => {
            2.0 * p_r * (1.0 + (theta - phi).cos())
                / (v_receiving * v_receiving * y_mag * theta.cos())
        }
    };
    Ok(lf)
}

/// FVSI of a branch, or `None` when its series reactance is zero.
pub fn fvsi(branch: &Branch, q_recv: f64, v_sending: f64) -> Option<f64> {
    if branch.x == 0.0 {
        warn!(
            "branch {}: zero series reactance, FVSI undefined",
            branch.id
        );
        return None;
    }
    let z2 = branch.r * branch.r + branch.x * branch.x;
    Some(4.0 * z2 * q_recv / (v_sending * v_sending * branch.x))
}

/// LF and FVSI for every in-service branch of a converged scenario.
pub fn line_indices(
    case: &Case,
    outages: &Contingency,
    solution: &PowerFlowSolution,
    formula: LfFormula,
) -> Result<Vec<LineIndexRecord>, IndexError> {
    let flows = line_flows(case, outages, solution)?;
    records_from_flows(case, &flows, solution, formula)
}

pub fn records_from_flows(
    case: &Case,
    flows: &[BranchFlow],
    solution: &PowerFlowSolution,
    formula: LfFormula,
) -> Result<Vec<LineIndexRecord>, IndexError> {
    flows
        .iter()
        .map(|flow| {
            let branch = &case.branches[case.branch_position(&flow.branch)?];
            let v_s = solution
                .voltage(flow.sending)
                .expect("sending bus in solution");
            let v_r = solution
                .voltage(flow.receiving)
                .expect("receiving bus in solution");
            let y = branch.series_admittance();
            Ok(LineIndexRecord {
                branch: flow.branch.clone(),
                sending: flow.sending,
                receiving: flow.receiving,
                lf: lf_index(flow, branch, v_s, v_r, formula)?,
                fvsi: fvsi(branch, flow.q_recv, v_s),
                phi: flow.q_recv.atan2(flow.p_recv),
                theta: y.arg(),
            })
        })
        .collect()
}

/// Largest line FVSI of a scenario state, 0 when no line has one.
pub fn bus_fvsi(records: &[LineIndexRecord]) -> f64 {
    records
        .iter()
        .filter_map(|r| r.fvsi)
        .fold(None, |acc: Option<f64>, v| {
            Some(acc.map_or(v, |a| a.max(v)))
        })
        .unwrap_or(0.0)
}
