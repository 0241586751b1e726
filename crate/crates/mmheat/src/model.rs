//! Problem description and evolving state for the moving-mesh heat solver.
//!
//! The model is a 1-D heat equation driven by point sources that travel
//! through the domain,
//!
//! ```text
//!     u_t - u_xx = sum_i F_i(t, x, u) * delta(x - alpha_i(t)),
//! ```
//!
//! observed on a finite window with Dirichlet or absorbing boundary rows.
//! Each source carries a strength law `F_i` and a velocity law
//! `alpha_i' = psi_i`. The mesh pins one node to every source position and
//! moves the remaining nodes by an equidistribution relaxation, solved
//! independently on the subdomains between sources.
//!
//! All state types are plain immutable values: a step consumes the state at
//! `t_n` and produces a fresh state at `t_{n+1}`.

use crate::error::ValidationError;

/// Mesh at a single time level. `nodes` are strictly increasing and
/// `source_indices[i]` is the node pinned to source `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct MeshState {
    pub time: f64,
    pub nodes: Vec<f64>,
    pub source_indices: Vec<usize>,
}

impl MeshState {
    /// Number of cells (nodes are indexed `0..=n`).
    pub fn n(&self) -> usize {
        self.nodes.len() - 1
    }

    pub fn is_strictly_increasing(&self) -> bool {
        self.nodes.windows(2).all(|w| w[0] < w[1])
    }

    /// Ghost positions used by absorbing boundary rows: the first and last
    /// cell widths are mirrored outward.
    pub fn ghost_positions(&self) -> (f64, f64) {
        let n = self.n();
        let left = self.nodes[0] - (self.nodes[1] - self.nodes[0]);
        let right = self.nodes[n] + (self.nodes[n] - self.nodes[n - 1]);
        (left, right)
    }
}

/// Solution values on a mesh. `ghosts` carries the two exterior values
/// `(u_{-1}, u_{N+1})` and is present exactly when the problem uses
/// absorbing boundary rows.
#[derive(Debug, Clone, PartialEq)]
pub struct SolutionState {
    pub mesh: MeshState,
    pub values: Vec<f64>,
    pub ghosts: Option<(f64, f64)>,
}

impl SolutionState {
    pub fn max_abs_u(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    pub fn max_u(&self) -> f64 {
        self.values.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v))
    }
}

/// Positions, velocities and laws of the traveling sources at one time level.
#[derive(Debug, Clone, PartialEq)]
pub struct SourceState {
    pub positions: Vec<f64>,
    pub velocities: Vec<f64>,
    pub laws: Vec<SourceLaw>,
}

impl SourceState {
    pub fn q(&self) -> usize {
        self.positions.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SourceLaw {
    pub strength: StrengthLaw,
    pub velocity: VelocityLaw,
}

/// Source strength `F_i(t, x, u)`; the value enters the flux-jump relation
/// `[u_x] = -F_i` at the source, so positive `F` injects heat.
#[derive(Debug, Clone, PartialEq)]
pub enum StrengthLaw {
    Zero,
    /// `F = 1 + u^2`, the classic blow-up forcing.
    OnePlusUSquared,
    /// Closed-form flux jump of the separable two-branch decay solution:
    /// `F = w1 cos(w1 x) e^{-w1^2 t} + w2 cos(w2 (1-x)) e^{-w2^2 t}`.
    InterfaceFlux { omega1: f64, omega2: f64 },
}

impl StrengthLaw {
    pub fn value(&self, t: f64, x: f64, u: f64) -> f64 {
        match *self {
            StrengthLaw::Zero => 0.0,
            StrengthLaw::OnePlusUSquared => 1.0 + u * u,
            StrengthLaw::InterfaceFlux { omega1, omega2 } => {
                omega1 * (omega1 * x).cos() * (-omega1 * omega1 * t).exp()
                    + omega2 * (omega2 * (1.0 - x)).cos() * (-omega2 * omega2 * t).exp()
            }
        }
    }

    /// Partial derivative of `value` with respect to `u`, used by the Newton
    /// Jacobian.
    pub fn du(&self, _t: f64, _x: f64, u: f64) -> f64 {
        match *self {
            StrengthLaw::Zero | StrengthLaw::InterfaceFlux { .. } => 0.0,
            StrengthLaw::OnePlusUSquared => 2.0 * u,
        }
    }
}

/// Source velocity `psi_i`. Laws that depend on the solution couple back
/// through the predictor-corrector loop.
#[derive(Debug, Clone, PartialEq)]
pub enum VelocityLaw {
    Constant(f64),
    /// `psi(t) = amplitude * cos(angular * t)`.
    Cosine { amplitude: f64, angular: f64 },
    /// `psi_i = -psi_k`, keeping source `i` the mirror image of source `k`.
    /// The referenced law must itself be independent of `u`.
    NegatedOf(usize),
    /// Interface speed recovered from the solution:
    /// `psi = (w1^2 - w2^2) u(alpha, t) / F`, with the denominator either
    /// the closed-form flux jump or the discrete one-sided slopes.
    InterfaceOde {
        omega1: f64,
        omega2: f64,
        discrete_slopes: bool,
    },
    /// Position and speed taken from the exact interface of the two-branch
    /// decay solution instead of integrating the velocity law.
    ExactInterface { omega1: f64, omega2: f64 },
}

impl VelocityLaw {
    pub fn depends_on_u(&self, all: &[SourceLaw]) -> bool {
        match *self {
            VelocityLaw::InterfaceOde { .. } => true,
            VelocityLaw::NegatedOf(k) => all
                .get(k)
                .map(|l| l.velocity.depends_on_u(all))
                .unwrap_or(false),
            _ => false,
        }
    }

    pub fn is_exact_interface(&self) -> bool {
        matches!(self, VelocityLaw::ExactInterface { .. })
    }
}

/// Initial data `u(x, 0)`.
#[derive(Debug, Clone, PartialEq)]
pub enum InitialCondition {
    Zero,
    /// Two decaying sine branches meeting at `split`:
    /// `sin(w1 x)` for `x <= split`, `sin(w2 (1 - x))` for `x >= split`.
    PiecewiseSine {
        omega1: f64,
        omega2: f64,
        split: f64,
    },
    /// `cos^2(pi x / 2)` on (-1, 1), zero elsewhere. Evaluated through |x|
    /// so mirrored arguments produce bitwise equal values.
    CosineSquaredBump,
}

impl InitialCondition {
    pub fn eval(&self, x: f64) -> f64 {
        match *self {
            InitialCondition::Zero => 0.0,
            InitialCondition::PiecewiseSine {
                omega1,
                omega2,
                split,
            } => {
                if x <= split {
                    (omega1 * x).sin()
                } else {
                    (omega2 * (1.0 - x)).sin()
                }
            }
            InitialCondition::CosineSquaredBump => {
                let ax = x.abs();
                if ax < 1.0 {
                    let c = (std::f64::consts::FRAC_PI_2 * ax).cos();
                    c * c
                } else {
                    0.0
                }
            }
        }
    }
}

/// How the observed window is chosen.
#[derive(Debug, Clone, PartialEq)]
pub enum DomainLaw {
    Fixed { left: f64, right: f64 },
    /// Window endpoints track the outermost sources at fixed offsets,
    /// recomputed every step before the mesh moves.
    FollowSources { left_gap: f64, right_gap: f64 },
}

impl DomainLaw {
    pub fn endpoints(&self, positions: &[f64]) -> (f64, f64) {
        match *self {
            DomainLaw::Fixed { left, right } => (left, right),
            DomainLaw::FollowSources {
                left_gap,
                right_gap,
            } => (
                positions[0] - left_gap,
                positions[positions.len() - 1] + right_gap,
            ),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum BoundaryKind {
    Dirichlet { left: f64, right: f64 },
    /// Third-order absorbing rows tuned to the frequency `s0`; adds one
    /// ghost unknown beyond each end of the mesh.
    Absorbing { s0: f64 },
}

impl BoundaryKind {
    pub fn is_absorbing(&self) -> bool {
        matches!(self, BoundaryKind::Absorbing { .. })
    }
}

/// Monitor regularization, either a literal value or the resolution-coupled
/// rule `1000 / N^4`.
#[derive(Debug, Clone, PartialEq)]
pub enum EpsilonRule {
    Literal(f64),
    ThousandOverN4,
}

/// Mesh-density monitor
/// `M = w[q+1] |u|^p + w[q] |u_x| + sum_i w[i] ((x - alpha_i)^2 + eps)^{-1/4}`
/// with weights summing to one: `w[0..q]` weight proximity to each source,
/// `w[q]` the gradient term and `w[q+1]` the amplitude term.
#[derive(Debug, Clone, PartialEq)]
pub struct MonitorConfig {
    pub weights: Vec<f64>,
    pub power_p: f64,
    pub epsilon: EpsilonRule,
    pub smoothing_gamma: f64,
    pub smoothing_passes: usize,
    pub floor: f64,
}

impl MonitorConfig {
    pub fn epsilon_value(&self, n: usize) -> f64 {
        match self.epsilon {
            EpsilonRule::Literal(e) => e,
            EpsilonRule::ThousandOverN4 => 1000.0 / (n as f64).powi(4),
        }
    }
}

pub const DEFAULT_SMOOTHING_GAMMA: f64 = 0.5;
pub const DEFAULT_SMOOTHING_PASSES: usize = 2;
pub const DEFAULT_MONITOR_FLOOR: f64 = 1e-8;

/// Time-step selection.
#[derive(Debug, Clone, PartialEq)]
pub enum StepRule {
    /// `L` equal steps to the final time.
    Uniform { steps: usize },
    /// Quadratically graded grid `t_n = T (n/L)^2`: tiny steps first, growing
    /// toward the end.
    Graded { steps: usize },
    /// `dt = min(mu, mu / (max_j u_j + eps)^2)`; the run ends in a reported
    /// blow-up once `dt` falls to the termination tolerance.
    BlowupAdaptive { mu: f64, epsilon: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct TimePolicy {
    pub rule: StepRule,
    pub final_time: f64,
    /// Blow-up declaration threshold on `dt` (adaptive rule only).
    pub terminate_tol: f64,
}

pub const DEFAULT_TERMINATE_TOL: f64 = 1e-16;

/// Complete, steppable description of a problem.
#[derive(Debug, Clone, PartialEq)]
pub struct ProblemSpec {
    pub initial_condition: InitialCondition,
    pub domain: DomainLaw,
    pub boundary: BoundaryKind,
    pub initial_positions: Vec<f64>,
    pub laws: Vec<SourceLaw>,
    pub monitor: MonitorConfig,
    /// Mesh relaxation timescale.
    pub tau: f64,
    /// Cells per subdomain, one entry per gap between consecutive pinned
    /// points (so `q + 1` entries summing to the total cell count `N`).
    pub points_per_subdomain: Vec<usize>,
    pub time: TimePolicy,
    pub newton_tol: f64,
    pub newton_max_iter: usize,
    /// Fixed-point sweeps of the velocity correction after the predictor.
    pub corrector_passes: usize,
    /// Use the alternate right absorbing row that couples to the *left*
    /// boundary value (for comparison runs only).
    pub strict_paper_labc: bool,
}

impl ProblemSpec {
    pub fn q(&self) -> usize {
        self.initial_positions.len()
    }

    /// Total number of cells.
    pub fn n_cells(&self) -> usize {
        self.points_per_subdomain.iter().sum()
    }

    /// Pinned node index for every source: running prefix sums of the
    /// partition.
    pub fn source_indices(&self) -> Vec<usize> {
        let mut acc = 0;
        self.points_per_subdomain[..self.points_per_subdomain.len() - 1]
            .iter()
            .map(|p| {
                acc += p;
                acc
            })
            .collect()
    }

    /// Replace the partition by an equal split of `n` cells over the `q + 1`
    /// subdomains, spreading any remainder from the left.
    pub fn set_equal_partition(&mut self, n: usize) {
        self.points_per_subdomain = equal_partition(n, self.q());
    }

    pub fn resolved_epsilon(&self) -> f64 {
        self.monitor.epsilon_value(self.n_cells())
    }
}

/// Split `n` cells over `parts` subdomains as evenly as possible, remainder
/// distributed one cell at a time from the left.
pub fn equal_partition(n: usize, q: usize) -> Vec<usize> {
    let parts = q + 1;
    let base = n / parts;
    let rem = n % parts;
    (0..parts).map(|i| base + usize::from(i < rem)).collect()
}

/// Validate a problem before any stepping. Collects every violation rather
/// than stopping at the first.
pub fn validate_problem(spec: &ProblemSpec) -> Result<(), Vec<ValidationError>> {
    let mut errors = Vec::new();
    let q = spec.q();

    if spec.laws.len() != q {
        errors.push(ValidationError::InvalidParameter(format!(
            "{} source laws for {} sources",
            spec.laws.len(),
            q
        )));
    }

    if spec
        .initial_positions
        .windows(2)
        .any(|w| !(w[0] < w[1]))
    {
        errors.push(ValidationError::SourcesOutOfOrder {
            positions: spec.initial_positions.clone(),
        });
    }

    let (left, right) = spec.domain.endpoints(&spec.initial_positions);
    if !(left < right) {
        errors.push(ValidationError::InvalidParameter(format!(
            "domain [{left}, {right}] is empty"
        )));
    }
    for (i, &a) in spec.initial_positions.iter().enumerate() {
        if !(left < a && a < right) {
            errors.push(ValidationError::SourceOutsideDomain {
                index: i,
                position: a,
                left,
                right,
            });
        }
    }

    let w = &spec.monitor.weights;
    let sum: f64 = w.iter().sum();
    if w.len() != q + 2 || (sum - 1.0).abs() > 1e-9 || w.iter().any(|&x| x < 0.0) {
        errors.push(ValidationError::WeightsNotNormalized {
            weights: w.clone(),
            expected: q + 2,
        });
    }

    let partition = &spec.points_per_subdomain;
    if partition.len() != q + 1 {
        errors.push(ValidationError::BadPartition {
            partition: partition.clone(),
            reason: format!("expected {} subdomains, got {}", q + 1, partition.len()),
        });
    } else if partition.iter().any(|&p| p < 2) {
        errors.push(ValidationError::BadPartition {
            partition: partition.clone(),
            reason: "every subdomain needs at least 2 cells".into(),
        });
    }

    fn check_positive(errors: &mut Vec<ValidationError>, name: &str, v: f64) {
        if !(v > 0.0) || !v.is_finite() {
            errors.push(ValidationError::InvalidParameter(format!(
                "{name} must be positive and finite, got {v}"
            )));
        }
    }
    check_positive(&mut errors, "tau", spec.tau);
    check_positive(&mut errors, "monitor power p", spec.monitor.power_p);
    check_positive(
        &mut errors,
        "monitor epsilon",
        spec.monitor.epsilon_value(spec.n_cells().max(1)),
    );
    check_positive(&mut errors, "monitor floor", spec.monitor.floor);
    check_positive(&mut errors, "newton_tol", spec.newton_tol);
    check_positive(&mut errors, "final_time", spec.time.final_time);
    check_positive(&mut errors, "terminate_tol", spec.time.terminate_tol);
    if spec.monitor.smoothing_gamma < 0.0 {
        errors.push(ValidationError::InvalidParameter(
            "smoothing_gamma must be nonnegative".into(),
        ));
    }
    match spec.time.rule {
        StepRule::Uniform { steps } | StepRule::Graded { steps } => {
            if steps == 0 {
                errors.push(ValidationError::InvalidParameter(
                    "step count must be at least 1".into(),
                ));
            }
        }
        StepRule::BlowupAdaptive { mu, epsilon } => {
            check_positive(&mut errors, "mu", mu);
            check_positive(&mut errors, "adaptive epsilon", epsilon);
        }
    }
    if spec.corrector_passes == 0 {
        errors.push(ValidationError::InvalidParameter(
            "corrector_passes must be at least 1".into(),
        ));
    }

    for (i, law) in spec.laws.iter().enumerate() {
        if let VelocityLaw::NegatedOf(k) = law.velocity {
            if k >= spec.laws.len() || k == i {
                errors.push(ValidationError::InvalidParameter(format!(
                    "source {i}: mirror reference {k} out of range"
                )));
            } else if matches!(spec.laws[k].velocity, VelocityLaw::NegatedOf(_)) {
                errors.push(ValidationError::InvalidParameter(format!(
                    "source {i}: mirror reference {k} is itself a mirror"
                )));
            } else if spec.laws[k].velocity.depends_on_u(&spec.laws) {
                errors.push(ValidationError::InvalidParameter(format!(
                    "source {i}: mirror of a solution-dependent velocity is unsupported"
                )));
            }
        }
    }

    if let BoundaryKind::Dirichlet {
        left: gl,
        right: gr,
    } = spec.boundary
    {
        let u0l = spec.initial_condition.eval(left);
        let u0r = spec.initial_condition.eval(right);
        if (u0l - gl).abs() > 1e-9 {
            errors.push(ValidationError::IncompatibleInitialCondition {
                x: left,
                u0: u0l,
                expected: gl,
            });
        }
        if (u0r - gr).abs() > 1e-9 {
            errors.push(ValidationError::IncompatibleInitialCondition {
                x: right,
                u0: u0r,
                expected: gr,
            });
        }
    }

    if errors.is_empty() {
        Ok(())
    } else {
        Err(errors)
    }
}

/// How a run ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    FinalTime,
    BlowUp,
}

/// Detected blow-up: the state when the adaptive step collapsed below the
/// termination tolerance. Peaks tying within 1e-9 relative are all reported.
#[derive(Debug, Clone, PartialEq)]
pub struct BlowUpRecord {
    pub time: f64,
    pub peak: f64,
    pub locations: Vec<f64>,
    pub node_indices: Vec<usize>,
    /// Sources whose pinned node carries a tied peak.
    pub source_indices: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct NewtonStats {
    pub solves: usize,
    pub total_iterations: usize,
    pub max_iterations: usize,
}

impl NewtonStats {
    pub fn record(&mut self, iterations: usize) {
        self.solves += 1;
        self.total_iterations += iterations;
        self.max_iterations = self.max_iterations.max(iterations);
    }

    pub fn merge(&mut self, other: NewtonStats) {
        self.solves += other.solves;
        self.total_iterations += other.total_iterations;
        self.max_iterations = self.max_iterations.max(other.max_iterations);
    }
}

/// Sup-norm errors against the exact oracle, when the problem has one.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorRecord {
    /// `max_j |u_j - u_exact(x_j, T)|` on the final mesh.
    pub sup_error: f64,
    /// `|alpha(T) - alpha_exact(T)|`; only meaningful when the interface was
    /// integrated numerically.
    pub interface_error: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryRow {
    pub time: f64,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub requested_time: f64,
    pub state: SolutionState,
}

/// Everything a run produces.
#[derive(Debug, Clone)]
pub struct RunReport {
    pub final_state: SolutionState,
    pub final_sources: SourceState,
    pub termination: Termination,
    pub blow_up: Option<BlowUpRecord>,
    pub snapshots: Vec<Snapshot>,
    pub mesh_trajectory: Vec<TrajectoryRow>,
    pub source_trajectory: Vec<TrajectoryRow>,
    pub errors: Option<ErrorRecord>,
    pub steps: usize,
    pub rejected_steps: usize,
    pub newton: NewtonStats,
    pub max_u_over_run: f64,
    /// Wall-clock seconds; informational only, never written to output files.
    pub wall_seconds: f64,
}
