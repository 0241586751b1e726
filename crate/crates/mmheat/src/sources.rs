//! Source motion and the per-step orchestration of mesh movement and the
//! implicit solve.
//!
//! Positions advance by the trapezoid rule
//!
//! ```text
//! alpha^{n+1} = alpha^n + (dt / 2) (psi^{n+1} + psi^n),
//! ```
//!
//! which is second order in `dt`. When some velocity law reads the solution
//! (the interface-coupled case) the new velocity is not known before the
//! solve, so the step runs a predictor pass with the old velocities, then
//! one or more corrector passes that re-evaluate the velocities from the
//! predicted solution and redo both the mesh move and the solve from the
//! old level.

use crate::error::StepError;
use crate::mesh::step_global_mesh;
use crate::model::{NewtonStats, ProblemSpec, SolutionState, SourceLaw, VelocityLaw};
use crate::pde::{implicit_step, SourceTerm};
use crate::problems::{InterfaceOracle, JUMP_TOL};

/// Solution-derived data at one pinned node, read at whatever level the
/// velocity laws need.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SourceContext {
    pub u_at_source: f64,
    /// One-sided difference quotient into the cell left of the pin.
    pub slope_left: f64,
    /// One-sided difference quotient into the cell right of the pin.
    pub slope_right: f64,
}

/// Read the context of every source off a solution state.
pub fn contexts_from(state: &SolutionState) -> Vec<SourceContext> {
    let x = &state.mesh.nodes;
    let u = &state.values;
    state
        .mesh
        .source_indices
        .iter()
        .map(|&j| SourceContext {
            u_at_source: u[j],
            slope_left: (u[j] - u[j - 1]) / (x[j] - x[j - 1]),
            slope_right: (u[j + 1] - u[j]) / (x[j + 1] - x[j]),
        })
        .collect()
}

fn eval_one(
    law: &VelocityLaw,
    t: f64,
    alpha: f64,
    ctx: &SourceContext,
) -> Result<f64, StepError> {
    match *law {
        VelocityLaw::Constant(v) => Ok(v),
        VelocityLaw::Cosine { amplitude, angular } => Ok(amplitude * (angular * t).cos()),
        VelocityLaw::InterfaceOde {
            omega1,
            omega2,
            discrete_slopes,
        } => {
            let denom = if discrete_slopes {
                ctx.slope_left - ctx.slope_right
            } else {
                InterfaceOracle::new(omega1, omega2).flux_jump(t, alpha)
            };
            if denom.abs() < JUMP_TOL {
                return Err(StepError::DegenerateJump {
                    magnitude: denom.abs(),
                });
            }
            Ok((omega1 * omega1 - omega2 * omega2) * ctx.u_at_source / denom)
        }
        VelocityLaw::ExactInterface { omega1, omega2 } => {
            let (_, psi) = InterfaceOracle::new(omega1, omega2).interface_and_velocity(t)?;
            Ok(psi)
        }
        VelocityLaw::NegatedOf(_) => unreachable!("mirrored laws resolve in the second pass"),
    }
}

/// Evaluate every velocity law at time `t`. Mirrored laws are filled in
/// afterwards as exact negations of their targets, so a symmetric pair stays
/// bitwise symmetric.
pub fn eval_velocities(
    laws: &[SourceLaw],
    t: f64,
    positions: &[f64],
    contexts: &[SourceContext],
) -> Result<Vec<f64>, StepError> {
    let mut out = vec![f64::NAN; laws.len()];
    for (i, law) in laws.iter().enumerate() {
        if !matches!(law.velocity, VelocityLaw::NegatedOf(_)) {
            out[i] = eval_one(&law.velocity, t, positions[i], &contexts[i])?;
        }
    }
    for (i, law) in laws.iter().enumerate() {
        if let VelocityLaw::NegatedOf(k) = law.velocity {
            out[i] = -out[k];
        }
    }
    Ok(out)
}

/// Trapezoid update of every source position.
pub fn crank_nicolson_positions(
    old: &[f64],
    psi_old: &[f64],
    psi_new: &[f64],
    dt: f64,
) -> Vec<f64> {
    old.iter()
        .zip(psi_old)
        .zip(psi_new)
        .map(|((&a, &po), &pn)| a + (dt * 0.5) * (pn + po))
        .collect()
}

/// Everything one step needs from the level just computed.
#[derive(Debug, Clone, Copy)]
pub struct StepInputs<'a> {
    pub spec: &'a ProblemSpec,
    /// Solution at the old level (mesh, values, ghosts).
    pub state: &'a SolutionState,
    /// Source positions at the old level.
    pub positions: &'a [f64],
    /// Source velocities at the old level.
    pub velocities: &'a [f64],
    pub dt: f64,
    /// Time stamped on the new level. Grid policies pass the exact target
    /// rather than an accumulated sum.
    pub new_time: f64,
}

#[derive(Debug, Clone)]
pub struct StepOutcome {
    pub state: SolutionState,
    pub positions: Vec<f64>,
    pub velocities: Vec<f64>,
    pub newton: NewtonStats,
}

/// Move the mesh toward `targets` and run the implicit solve on it, both
/// starting from the old level in `inp`.
fn move_and_solve(
    inp: &StepInputs,
    targets: &[f64],
    velocities: &[f64],
) -> Result<(SolutionState, usize), StepError> {
    let spec = inp.spec;
    let new_mesh = step_global_mesh(
        inp.state,
        inp.positions,
        targets,
        &spec.domain,
        &spec.monitor,
        spec.tau,
        inp.dt,
        inp.new_time,
    )?;
    let sources: Vec<SourceTerm> = new_mesh
        .source_indices
        .iter()
        .zip(targets)
        .zip(velocities)
        .zip(&spec.laws)
        .map(|(((&node, &position), &velocity), law)| SourceTerm {
            node,
            position,
            velocity,
            strength: law.strength.clone(),
        })
        .collect();
    implicit_step(
        inp.state,
        &new_mesh,
        inp.dt,
        &spec.boundary,
        &sources,
        spec.newton_tol,
        spec.newton_max_iter,
        spec.strict_paper_labc,
    )
}

/// Advance one step, dispatching on the law structure: positions read off
/// the exact interface, a single pass when no law looks at the solution, or
/// the predictor-corrector loop otherwise.
pub fn advance_one_step(inp: &StepInputs) -> Result<StepOutcome, StepError> {
    let laws = &inp.spec.laws;
    if laws.iter().any(|l| l.velocity.is_exact_interface()) {
        advance_exact(inp)
    } else if laws.iter().any(|l| l.velocity.depends_on_u(laws)) {
        advance_predictor_corrector(inp)
    } else {
        advance_direct(inp)
    }
}

/// Oracle-driven step: interface positions and speeds are evaluated at the
/// new time instead of integrating the velocity law.
fn advance_exact(inp: &StepInputs) -> Result<StepOutcome, StepError> {
    let laws = &inp.spec.laws;
    let ctx = contexts_from(inp.state);
    let mut velocities = vec![f64::NAN; laws.len()];
    let mut exact_pos = vec![None; laws.len()];
    for (i, law) in laws.iter().enumerate() {
        match law.velocity {
            VelocityLaw::ExactInterface { omega1, omega2 } => {
                let (alpha, psi) =
                    InterfaceOracle::new(omega1, omega2).interface_and_velocity(inp.new_time)?;
                exact_pos[i] = Some(alpha);
                velocities[i] = psi;
            }
            VelocityLaw::NegatedOf(_) => {}
            ref law => velocities[i] = eval_one(law, inp.new_time, inp.positions[i], &ctx[i])?,
        }
    }
    for (i, law) in laws.iter().enumerate() {
        if let VelocityLaw::NegatedOf(k) = law.velocity {
            velocities[i] = -velocities[k];
        }
    }
    let mut targets =
        crank_nicolson_positions(inp.positions, inp.velocities, &velocities, inp.dt);
    for (i, pos) in exact_pos.iter().enumerate() {
        if let Some(alpha) = *pos {
            targets[i] = alpha;
        }
    }
    finish(inp, targets, velocities)
}

/// One-shot step for laws that never read the solution.
fn advance_direct(inp: &StepInputs) -> Result<StepOutcome, StepError> {
    let ctx = contexts_from(inp.state);
    let velocities = eval_velocities(&inp.spec.laws, inp.new_time, inp.positions, &ctx)?;
    let targets =
        crank_nicolson_positions(inp.positions, inp.velocities, &velocities, inp.dt);
    finish(inp, targets, velocities)
}

/// Predictor-corrector step. The predictor freezes the velocities at their
/// old values; each corrector pass re-evaluates them from the predicted
/// solution, then redoes the mesh move and the solve from the old level.
/// For laws that never read the solution this lands on the exact same
/// numbers as the one-shot path.
pub fn advance_predictor_corrector(inp: &StepInputs) -> Result<StepOutcome, StepError> {
    let spec = inp.spec;
    let mut newton = NewtonStats::default();

    let mut velocities = inp.velocities.to_vec();
    let mut positions =
        crank_nicolson_positions(inp.positions, inp.velocities, &velocities, inp.dt);
    let (mut state, iterations) = move_and_solve(inp, &positions, &velocities)?;
    newton.record(iterations);

    for _ in 0..spec.corrector_passes.max(1) {
        let ctx = contexts_from(&state);
        velocities = eval_velocities(&spec.laws, inp.new_time, &positions, &ctx)?;
        positions =
            crank_nicolson_positions(inp.positions, inp.velocities, &velocities, inp.dt);
        let (corrected, iterations) = move_and_solve(inp, &positions, &velocities)?;
        newton.record(iterations);
        state = corrected;
    }

    Ok(StepOutcome {
        state,
        positions,
        velocities,
        newton,
    })
}

fn finish(
    inp: &StepInputs,
    targets: Vec<f64>,
    velocities: Vec<f64>,
) -> Result<StepOutcome, StepError> {
    let (state, iterations) = move_and_solve(inp, &targets, &velocities)?;
    let mut newton = NewtonStats::default();
    newton.record(iterations);
    Ok(StepOutcome {
        state,
        positions: targets,
        velocities,
        newton,
    })
}
