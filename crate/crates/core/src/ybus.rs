//! Bus admittance matrix.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::case::{Branch, Case, CaseError, Contingency};

/// Dense complex bus admittance matrix, indexed by bus ordinal.
#[derive(Debug, Clone, PartialEq)]
pub struct AdmittanceMatrix(pub DMatrix<Complex64>);

impl AdmittanceMatrix {
    pub fn zeros(n: usize) -> Self {
        AdmittanceMatrix(DMatrix::from_element(n, n, Complex64::new(0.0, 0.0)))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> Complex64 {
        self.0[(i, j)]
    }

    /// Adds the pi-model stamp of one branch between ordinals `f` and `t`.
    pub fn stamp(&mut self, f: usize, t: usize, branch: &Branch, sign: f64) {
        let y = branch.series_admittance() * sign;
        let shunt = Complex64::new(0.0, branch.b_half * sign);
        self.0[(f, f)] += y + shunt;
        self.0[(t, t)] += y + shunt;
        self.0[(f, t)] -= y;
        self.0[(t, f)] -= y;
    }
}

/// Builds the Y-bus with the branches in `outages` removed.
pub fn build_ybus(case: &Case, outages: &Contingency) -> Result<AdmittanceMatrix, CaseError> {
    let in_service = case.in_service(outages)?;
    let index = case.bus_index();
    let mut y = AdmittanceMatrix::zeros(case.buses.len());
    for (branch, _) in case.branches.iter().zip(&in_service).filter(|(_, on)| **on) {
        y.stamp(index[&branch.from_bus], index[&branch.to_bus], branch, 1.0);
    }
    Ok(y)
}
