//! The outer time loop: plan a step, attempt it, halve and retry on
//! rejection, and collect everything a run reports.

use std::time::Instant;

use crate::error::RunError;
use crate::mesh::initial_mesh;
use crate::model::{
    validate_problem, BlowUpRecord, ErrorRecord, ProblemSpec, RunReport, Snapshot, SolutionState,
    SourceState, StepRule, Termination, TrajectoryRow, VelocityLaw,
};
use crate::problems::{switch_to_pc, InterfaceOracle};
use crate::sources::{advance_one_step, contexts_from, eval_velocities, StepInputs};
use crate::timestep::{RejectionGate, StepPlan, TimeStepper, DEFAULT_REJECTION_LIMIT};

/// Peaks within this relative distance of the maximum count as tied.
const PEAK_TIE_REL: f64 = 1e-9;

#[derive(Debug, Clone)]
pub struct RunOptions {
    /// Times at which to keep a full solution snapshot. A snapshot is taken
    /// at the first accepted level reaching each requested time.
    pub snapshot_times: Vec<f64>,
    /// Maximum retained rows in the mesh and source trajectories.
    pub trajectory_cap: usize,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            snapshot_times: Vec::new(),
            trajectory_cap: 500,
        }
    }
}

impl RunOptions {
    /// No snapshots and a minimal trajectory, for error-study loops.
    pub fn quiet() -> Self {
        RunOptions {
            snapshot_times: Vec::new(),
            trajectory_cap: 2,
        }
    }
}

/// Keeps at most `cap` evenly strided rows of an unbounded sequence, plus
/// the final row. When full, every other retained row is dropped and the
/// stride doubles, so the kept indices stay an arithmetic progression.
#[derive(Debug, Clone)]
pub struct Decimator<T> {
    cap: usize,
    stride: usize,
    seen: usize,
    last_kept: Option<usize>,
    rows: Vec<T>,
}

impl<T> Decimator<T> {
    pub fn new(cap: usize) -> Self {
        Decimator {
            cap: cap.max(2),
            stride: 1,
            seen: 0,
            last_kept: None,
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: T) {
        if self.seen % self.stride == 0 {
            // Reserve one slot so the final row can always be appended.
            if self.rows.len() + 1 == self.cap {
                let mut k = 0usize;
                self.rows.retain(|_| {
                    let keep = k % 2 == 0;
                    k += 1;
                    keep
                });
                self.stride *= 2;
            }
            if self.seen % self.stride == 0 {
                self.rows.push(row);
                self.last_kept = Some(self.seen);
            }
        }
        self.seen += 1;
    }

    /// Append the final row unless the regular stride already kept it.
    pub fn push_final(&mut self, row: T) {
        if self.seen > 0 && self.last_kept != Some(self.seen - 1) {
            self.rows.push(row);
        }
    }

    pub fn into_rows(self) -> Vec<T> {
        self.rows
    }
}

fn blow_up_record(state: &SolutionState, _positions: &[f64]) -> BlowUpRecord {
    let peak = state.max_u();
    let tol = PEAK_TIE_REL * peak.abs().max(f64::MIN_POSITIVE);
    let mut locations = Vec::new();
    let mut node_indices = Vec::new();
    let mut source_indices = Vec::new();
    for (j, &u) in state.values.iter().enumerate() {
        if (peak - u).abs() <= tol {
            locations.push(state.mesh.nodes[j]);
            node_indices.push(j);
            if let Some(i) = state.mesh.source_indices.iter().position(|&p| p == j) {
                source_indices.push(i);
            }
        }
    }
    BlowUpRecord {
        time: state.mesh.time,
        peak,
        locations,
        node_indices,
        source_indices,
    }
}

/// Run a problem to its final time or to blow-up.
pub fn run(spec: &ProblemSpec, opts: &RunOptions) -> Result<RunReport, RunError> {
    let started = Instant::now();
    validate_problem(spec).map_err(RunError::Validation)?;

    let mesh = initial_mesh(spec)?;
    let values: Vec<f64> = mesh
        .nodes
        .iter()
        .map(|&x| spec.initial_condition.eval(x))
        .collect();
    let ghosts = if spec.boundary.is_absorbing() {
        let (gl, gr) = mesh.ghost_positions();
        Some((
            spec.initial_condition.eval(gl),
            spec.initial_condition.eval(gr),
        ))
    } else {
        None
    };
    let mut state = SolutionState {
        mesh,
        values,
        ghosts,
    };
    let mut positions = spec.initial_positions.clone();
    let ctx = contexts_from(&state);
    let mut velocities = eval_velocities(&spec.laws, 0.0, &positions, &ctx)
        .map_err(RunError::InitialVelocities)?;

    let mut stepper = TimeStepper::new(spec.time.clone());
    let mut gate = RejectionGate::new(DEFAULT_REJECTION_LIMIT);
    let mut steps = 0usize;
    let mut rejected_steps = 0usize;
    let mut newton = crate::model::NewtonStats::default();
    let mut max_u_over_run = state.max_u();
    let mut termination = Termination::FinalTime;
    let mut blow_up = None;

    let mut mesh_rows = Decimator::new(opts.trajectory_cap);
    let mut source_rows = Decimator::new(opts.trajectory_cap);
    mesh_rows.push(TrajectoryRow {
        time: state.mesh.time,
        values: state.mesh.nodes.clone(),
    });
    source_rows.push(TrajectoryRow {
        time: state.mesh.time,
        values: positions.clone(),
    });

    let mut wanted = opts.snapshot_times.clone();
    wanted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut next_snapshot = 0usize;
    let mut snapshots = Vec::new();
    while next_snapshot < wanted.len() && wanted[next_snapshot] <= state.mesh.time {
        snapshots.push(Snapshot {
            requested_time: wanted[next_snapshot],
            state: state.clone(),
        });
        next_snapshot += 1;
    }

    while !stepper.finished(state.mesh.time) {
        let (planned_dt, planned_snap) = match stepper.plan(state.mesh.time, state.max_abs_u()) {
            StepPlan::BlowUp => {
                blow_up = Some(blow_up_record(&state, &positions));
                termination = Termination::BlowUp;
                break;
            }
            StepPlan::Advance { dt, snap_to } => (dt, snap_to),
        };

        let mut dt = planned_dt;
        let mut snap = planned_snap;
        loop {
            let new_time = snap.unwrap_or(state.mesh.time + dt);
            let attempt = advance_one_step(&StepInputs {
                spec,
                state: &state,
                positions: &positions,
                velocities: &velocities,
                dt,
                new_time,
            });
            match attempt {
                Ok(out) => {
                    gate.accepted();
                    state = out.state;
                    positions = out.positions;
                    velocities = out.velocities;
                    newton.merge(out.newton);
                    steps += 1;
                    if snap.is_some() {
                        stepper.target_completed();
                    }
                    break;
                }
                Err(err) => {
                    rejected_steps += 1;
                    if gate.rejected() {
                        return Err(RunError::TooManyRejections {
                            time: state.mesh.time,
                            rejections: gate.count(),
                            last: err,
                        });
                    }
                    // A halved step no longer lands on the grid target; the
                    // next planning round re-aims at it.
                    dt *= 0.5;
                    snap = None;
                }
            }
        }

        max_u_over_run = max_u_over_run.max(state.max_u());
        mesh_rows.push(TrajectoryRow {
            time: state.mesh.time,
            values: state.mesh.nodes.clone(),
        });
        source_rows.push(TrajectoryRow {
            time: state.mesh.time,
            values: positions.clone(),
        });
        while next_snapshot < wanted.len() && state.mesh.time >= wanted[next_snapshot] - 1e-12 {
            snapshots.push(Snapshot {
                requested_time: wanted[next_snapshot],
                state: state.clone(),
            });
            next_snapshot += 1;
        }
    }

    mesh_rows.push_final(TrajectoryRow {
        time: state.mesh.time,
        values: state.mesh.nodes.clone(),
    });
    source_rows.push_final(TrajectoryRow {
        time: state.mesh.time,
        values: positions.clone(),
    });

    let errors = match (InterfaceOracle::from_spec(spec), termination) {
        (Some(oracle), Termination::FinalTime) => {
            let t = state.mesh.time;
            let alpha_exact = oracle.interface(t)?;
            let sup_error =
                oracle.sup_error(&state.mesh.nodes, &state.values, t, alpha_exact);
            let numeric_interface = spec
                .laws
                .iter()
                .any(|l| matches!(l.velocity, VelocityLaw::InterfaceOde { .. }));
            let interface_error = if numeric_interface {
                Some((positions[0] - alpha_exact).abs())
            } else {
                None
            };
            Some(ErrorRecord {
                sup_error,
                interface_error,
            })
        }
        _ => None,
    };

    Ok(RunReport {
        final_sources: SourceState {
            positions,
            velocities,
            laws: spec.laws.clone(),
        },
        final_state: state,
        termination,
        blow_up,
        snapshots,
        mesh_trajectory: mesh_rows.into_rows(),
        source_trajectory: source_rows.into_rows(),
        errors,
        steps,
        rejected_steps,
        newton,
        max_u_over_run,
        wall_seconds: started.elapsed().as_secs_f64(),
    })
}

/// One rung of the refinement study.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceRow {
    pub n: usize,
    pub l: usize,
    /// Sup error with the interface read off the exact solution.
    pub e_exact: f64,
    pub ratio_exact: Option<f64>,
    /// Sup error with the interface integrated by predictor-corrector.
    pub e_pc: f64,
    pub ratio_pc: Option<f64>,
    /// Final-time interface position error of the predictor-corrector run.
    pub e_alpha: f64,
    pub ratio_alpha: Option<f64>,
}

/// Default `(N, L)` ladder: doubling the resolution quadruples the step
/// count, so a second-order method shows error ratios near 1/4.
pub const DEFAULT_LADDER: [(usize, usize); 4] = [(40, 40), (80, 160), (160, 640), (320, 2560)];

/// Rerun `base` over the resolution ladder in exact and predictor-corrector
/// mode and tabulate the sup errors with step-to-step ratios.
pub fn converge(
    base: &ProblemSpec,
    ladder: &[(usize, usize)],
) -> Result<Vec<ConvergenceRow>, RunError> {
    let mut rows: Vec<ConvergenceRow> = Vec::with_capacity(ladder.len());
    for &(n, l) in ladder {
        let mut exact = base.clone();
        exact.set_equal_partition(n);
        exact.time.rule = StepRule::Uniform { steps: l };

        let mut pc = exact.clone();
        switch_to_pc(&mut pc, false);

        let exact_report = run(&exact, &RunOptions::quiet())?;
        let pc_report = run(&pc, &RunOptions::quiet())?;

        let e_exact = exact_report
            .errors
            .expect("exact run carries an error record")
            .sup_error;
        let pc_errors = pc_report
            .errors
            .expect("predictor-corrector run carries an error record");
        let e_pc = pc_errors.sup_error;
        let e_alpha = pc_errors
            .interface_error
            .expect("numeric interface carries a position error");

        let prev = rows.last();
        rows.push(ConvergenceRow {
            n,
            l,
            e_exact,
            ratio_exact: prev.map(|p| e_exact / p.e_exact),
            e_pc,
            ratio_pc: prev.map(|p| e_pc / p.e_pc),
            e_alpha,
            ratio_alpha: prev.map(|p| e_alpha / p.e_alpha),
        });
    }
    Ok(rows)
}
