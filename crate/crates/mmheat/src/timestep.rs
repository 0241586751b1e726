//! Step-size policies and rejection control.
//!
//! Grid rules (uniform and quadratically graded) step between precomputed
//! target times, so the final time is hit exactly; the adaptive rule for
//! blow-up problems shrinks the step with the solution amplitude,
//!
//! ```text
//!     dt = min(mu, mu / (max_j |u_j| + eps)^2),
//! ```
//!
//! and declares blow-up once `dt` falls to the termination tolerance: at
//! that point the amplitude has reached about `sqrt(mu / tol)`.
//!
//! Rejected steps (tangled mesh, Newton failure, collided sources) are
//! retried with half the step; the gate below aborts a run that rejects
//! too many times in a row.

use crate::model::{StepRule, TimePolicy};

/// What to do next at time `t_now`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepPlan {
    /// Attempt a step of size `dt`. If `snap_to` is set the step completes
    /// a scheduled target and the new time should be assigned, not
    /// accumulated, so grid points and the final time are exact.
    Advance { dt: f64, snap_to: Option<f64> },
    /// The adaptive step collapsed below the termination tolerance: record
    /// a blow-up at the current state instead of stepping.
    BlowUp,
}

/// Plans steps for one run. Grid rules track which target comes next;
/// the adaptive rule is stateless.
#[derive(Debug, Clone)]
pub struct TimeStepper {
    policy: TimePolicy,
    next_target: usize,
}

impl TimeStepper {
    pub fn new(policy: TimePolicy) -> Self {
        TimeStepper {
            policy,
            next_target: 1,
        }
    }

    /// Scheduled time of grid point `k`.
    fn grid(&self, k: usize) -> f64 {
        let t_final = self.policy.final_time;
        match self.policy.rule {
            StepRule::Uniform { steps } => t_final * (k as f64 / steps as f64),
            StepRule::Graded { steps } => {
                let s = k as f64 / steps as f64;
                t_final * (s * s)
            }
            StepRule::BlowupAdaptive { .. } => unreachable!("adaptive rule has no grid"),
        }
    }

    pub fn plan(&self, t_now: f64, max_abs_u: f64) -> StepPlan {
        match self.policy.rule {
            StepRule::Uniform { steps } | StepRule::Graded { steps } => {
                let k = self.next_target.min(steps);
                let target = self.grid(k);
                StepPlan::Advance {
                    dt: target - t_now,
                    snap_to: Some(target),
                }
            }
            StepRule::BlowupAdaptive { mu, epsilon } => {
                let denom = max_abs_u + epsilon;
                let dt = mu.min(mu / (denom * denom));
                if dt <= self.policy.terminate_tol {
                    return StepPlan::BlowUp;
                }
                let t_final = self.policy.final_time;
                if t_now + dt >= t_final {
                    StepPlan::Advance {
                        dt: t_final - t_now,
                        snap_to: Some(t_final),
                    }
                } else {
                    StepPlan::Advance { dt, snap_to: None }
                }
            }
        }
    }

    /// Note that an accepted step landed on its `snap_to` target.
    pub fn target_completed(&mut self) {
        self.next_target += 1;
    }

    pub fn finished(&self, t_now: f64) -> bool {
        t_now >= self.policy.final_time
    }
}

/// Counts consecutive rejections; too many in a row abort the run.
#[derive(Debug, Clone)]
pub struct RejectionGate {
    consecutive: usize,
    limit: usize,
}

pub const DEFAULT_REJECTION_LIMIT: usize = 20;

impl RejectionGate {
    pub fn new(limit: usize) -> Self {
        RejectionGate {
            consecutive: 0,
            limit,
        }
    }

    /// Record a rejection; returns true when the limit is now exceeded.
    pub fn rejected(&mut self) -> bool {
        self.consecutive += 1;
        self.consecutive >= self.limit
    }

    pub fn accepted(&mut self) {
        self.consecutive = 0;
    }

    pub fn count(&self) -> usize {
        self.consecutive
    }
}
