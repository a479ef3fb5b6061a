//! Double-double replay of a stencil run, used as the round-off baseline.

use crate::dd::DoubleDouble;
use crate::iterops::{StencilOperator, StencilRow};

/// A stencil run carried in double-double arithmetic. Coefficients are the
/// same doubles the `f64` run uses, so the difference between the two runs
/// is arithmetic round-off only.
pub struct ExtendedRun {
    rows: Vec<StencilRow>,
    source: DoubleDouble,
    state: Vec<DoubleDouble>,
    scratch: Vec<DoubleDouble>,
}

impl ExtendedRun {
    pub fn new(op: &StencilOperator, x0: &[f64]) -> Self {
        let state: Vec<DoubleDouble> = x0.iter().map(|&v| DoubleDouble::from(v)).collect();
        Self { rows: op.rows(), source: DoubleDouble::from(op.source), scratch: state.clone(), state }
    }

    pub fn step(&mut self) {
        for (i, row) in self.rows.iter().enumerate() {
            self.scratch[i] = match row {
                StencilRow::Held => self.state[i],
                StencilRow::Taps(taps) => {
                    let mut s = DoubleDouble::ZERO;
                    for &(j, c) in taps {
                        s += self.state[j] * c;
                    }
                    s + self.source
                }
            };
        }
        std::mem::swap(&mut self.state, &mut self.scratch);
    }

    /// `max_i |x_i - state_i|`, evaluated in double-double before rounding.
    pub fn distance(&self, x: &[f64]) -> f64 {
        self.state.iter().zip(x).map(|(s, &v)| (*s - v).abs().to_f64()).fold(0.0, f64::max)
    }

    pub fn state_f64(&self) -> Vec<f64> {
        self.state.iter().map(|s| s.to_f64()).collect()
    }
}
