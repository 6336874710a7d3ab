use serde::{Deserialize, Serialize};

/// Why an iterative scheme stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    /// Gradient (or stationarity) tolerance reached.
    Converged,
    /// Iteration budget exhausted before the tolerance was met.
    MaxIters,
    /// The objective blew up or became non-finite.
    Diverged,
    /// Backtracking could not find a decrease above the minimum step.
    StepSearchFailed,
}

/// Per-iteration history of a descent run.
///
/// Entry `k` of each history refers to iterate `k + 1`, so the first entry
/// describes the initial point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DescentReport {
    pub objective: Vec<f64>,
    pub grad_norm: Vec<f64>,
    /// Step used to leave iterate `k + 1`; one shorter than `objective` unless
    /// the run ended on a failed step.
    pub step: Vec<f64>,
    /// Norm of each iterate (Frobenius, or the `(A, v)` norm).
    pub iterate_norm: Vec<f64>,
    pub termination: Termination,
    /// Number of iterations in which the objective went up.
    pub objective_increases: usize,
}

impl DescentReport {
    pub(crate) fn new() -> Self {
        Self {
            objective: Vec::new(),
            grad_norm: Vec::new(),
            step: Vec::new(),
            iterate_norm: Vec::new(),
            termination: Termination::MaxIters,
            objective_increases: 0,
        }
    }

    pub(crate) fn record(&mut self, objective: f64, grad_norm: f64, iterate_norm: f64) {
        if let Some(&last) = self.objective.last() {
            if objective > last {
                self.objective_increases += 1;
            }
        }
        self.objective.push(objective);
        self.grad_norm.push(grad_norm);
        self.iterate_norm.push(iterate_norm);
    }

    /// Number of iterates visited, counting the starting point.
    pub fn iterations(&self) -> usize {
        self.objective.len()
    }

    pub fn converged(&self) -> bool {
        self.termination == Termination::Converged
    }

    /// True when the objective never increased between consecutive iterates.
    pub fn is_monotone(&self) -> bool {
        self.objective.windows(2).all(|w| w[1] <= w[0])
    }

    /// Like [`is_monotone`](Self::is_monotone), ignoring increases below
    /// `rel_tol * |J|` caused by round-off.
    pub fn is_monotone_within(&self, rel_tol: f64) -> bool {
        self.objective
            .windows(2)
            .all(|w| w[1] <= w[0] + rel_tol * w[0].abs().max(f64::MIN_POSITIVE))
    }

    pub fn final_objective(&self) -> Option<f64> {
        self.objective.last().copied()
    }
}
