//! Named example problems and the exact interface solution used to grade
//! the solver on the decaying two-branch case.

use std::f64::consts::PI;

use crate::error::OracleError;
use crate::model::{
    BoundaryKind, DomainLaw, EpsilonRule, InitialCondition, MonitorConfig, ProblemSpec, SourceLaw,
    StepRule, StrengthLaw, TimePolicy, VelocityLaw, DEFAULT_MONITOR_FLOOR, DEFAULT_SMOOTHING_GAMMA,
    DEFAULT_SMOOTHING_PASSES, DEFAULT_TERMINATE_TOL,
};

/// Newton tolerance shared by every preset.
pub const DEFAULT_NEWTON_TOL: f64 = 1e-8;
/// Newton iteration cap shared by every preset.
pub const DEFAULT_NEWTON_MAX_ITER: usize = 50;
/// Flux jumps smaller than this cannot be divided by.
pub const JUMP_TOL: f64 = 1e-12;

/// All names `make_example` accepts.
pub const EXAMPLE_NAMES: [&str; 6] = [
    "example1",
    "linear_q1",
    "linear_q2",
    "sin_q2",
    "symmetric_q2",
    "symmetric_q2_labc",
];

/// Exact solution made of two sine branches decaying at different rates,
///
/// ```text
/// u(x, t) = sin(w1 x) e^{-w1^2 t}        for x <= alpha(t),
/// u(x, t) = sin(w2 (1 - x)) e^{-w2^2 t}  for x >= alpha(t),
/// ```
///
/// joined continuously at the interface `alpha(t)`, the root of the branch
/// difference in (0, 1). The kink at the interface carries the flux jump
/// `u_x(alpha^-) - u_x(alpha^+)`, which is exactly the source strength a
/// moving-source run must reproduce.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InterfaceOracle {
    pub omega1: f64,
    pub omega2: f64,
}

impl InterfaceOracle {
    pub fn new(omega1: f64, omega2: f64) -> Self {
        InterfaceOracle { omega1, omega2 }
    }

    /// Frequencies of the `example1` preset: `w1 = 5 pi / 4`, `w2 = 7 pi / 4`.
    pub fn example1() -> Self {
        InterfaceOracle::new(1.25 * PI, 1.75 * PI)
    }

    /// Build from the first interface-coupled velocity law in `spec`, if any.
    pub fn from_spec(spec: &ProblemSpec) -> Option<Self> {
        spec.laws.iter().find_map(|law| match law.velocity {
            VelocityLaw::ExactInterface { omega1, omega2 }
            | VelocityLaw::InterfaceOde { omega1, omega2, .. } => {
                Some(InterfaceOracle::new(omega1, omega2))
            }
            _ => None,
        })
    }

    /// Left branch `sin(w1 x) e^{-w1^2 t}`, valid for `x <= alpha(t)`.
    pub fn left(&self, t: f64, x: f64) -> f64 {
        (self.omega1 * x).sin() * (-self.omega1 * self.omega1 * t).exp()
    }

    /// Right branch `sin(w2 (1 - x)) e^{-w2^2 t}`, valid for `x >= alpha(t)`.
    pub fn right(&self, t: f64, x: f64) -> f64 {
        (self.omega2 * (1.0 - x)).sin() * (-self.omega2 * self.omega2 * t).exp()
    }

    /// Exact value at `(x, t)` given the interface position `alpha`.
    pub fn exact_u(&self, t: f64, x: f64, alpha: f64) -> f64 {
        if x <= alpha {
            self.left(t, x)
        } else {
            self.right(t, x)
        }
    }

    /// Slope jump `u_x(alpha^-) - u_x(alpha^+)` of the exact solution. The
    /// one-sided derivatives are `w1 cos(w1 a) e^{-w1^2 t}` from the left and
    /// `-w2 cos(w2 (1 - a)) e^{-w2^2 t}` from the right, so their difference
    /// is the sum of the two cosine terms.
    pub fn flux_jump(&self, t: f64, alpha: f64) -> f64 {
        StrengthLaw::InterfaceFlux {
            omega1: self.omega1,
            omega2: self.omega2,
        }
        .value(t, alpha, 0.0)
    }

    /// Interface position at time `t`: the root of
    /// `g(x) = sin(w1 x) e^{-w1^2 t} - sin(w2 (1 - x)) e^{-w2^2 t}` in [0, 1],
    /// located by bisection until the bracket closes to adjacent floats
    /// (well inside 1e-14).
    pub fn interface(&self, t: f64) -> Result<f64, OracleError> {
        let g = |x: f64| self.left(t, x) - self.right(t, x);
        let (mut a, mut b) = (0.0_f64, 1.0_f64);
        let (mut fa, mut fb) = (g(a), g(b));
        if fa == 0.0 {
            return Ok(a);
        }
        if fb == 0.0 {
            return Ok(b);
        }
        if fa.signum() == fb.signum() {
            return Err(OracleError::RootNotBracketed {
                left: a,
                right: b,
                time: t,
            });
        }
        loop {
            let mid = 0.5 * (a + b);
            if mid <= a || mid >= b {
                break;
            }
            let fm = g(mid);
            if fm == 0.0 {
                return Ok(mid);
            }
            if fm.signum() == fa.signum() {
                a = mid;
                fa = fm;
            } else {
                b = mid;
                fb = fm;
            }
        }
        Ok(if fa.abs() <= fb.abs() { a } else { b })
    }

    /// Interface speed from the jump relation,
    /// `psi = (w1^2 - w2^2) u(alpha, t) / (u_x(alpha^-) - u_x(alpha^+))`,
    /// with the caller supplying the solution value at the interface. This is
    /// the same expression the predictor-corrector loop evaluates with
    /// numerical data in place of `u_at_alpha`.
    pub fn velocity_from(&self, t: f64, alpha: f64, u_at_alpha: f64) -> Result<f64, OracleError> {
        let jump = self.flux_jump(t, alpha);
        if jump.abs() < JUMP_TOL {
            return Err(OracleError::DegenerateJump {
                magnitude: jump.abs(),
            });
        }
        Ok((self.omega1 * self.omega1 - self.omega2 * self.omega2) * u_at_alpha / jump)
    }

    /// Interface position and speed at `t`, both from the exact solution.
    pub fn interface_and_velocity(&self, t: f64) -> Result<(f64, f64), OracleError> {
        let alpha = self.interface(t)?;
        let u = 0.5 * (self.left(t, alpha) + self.right(t, alpha));
        let psi = self.velocity_from(t, alpha, u)?;
        Ok((alpha, psi))
    }

    /// Sup-norm error `max_j |u_j - u_exact(x_j, t)|` over the given nodes.
    pub fn sup_error(&self, nodes: &[f64], values: &[f64], t: f64, alpha: f64) -> f64 {
        nodes
            .iter()
            .zip(values)
            .fold(0.0_f64, |acc, (&x, &u)| {
                acc.max((u - self.exact_u(t, x, alpha)).abs())
            })
    }
}

/// Replace every exact-interface velocity law with the coupled form that
/// recovers the speed from the computed solution (predictor-corrector mode).
pub fn switch_to_pc(spec: &mut ProblemSpec, discrete_slopes: bool) {
    for law in &mut spec.laws {
        if let VelocityLaw::ExactInterface { omega1, omega2 } = law.velocity {
            law.velocity = VelocityLaw::InterfaceOde {
                omega1,
                omega2,
                discrete_slopes,
            };
        }
    }
}

fn monitor_q2() -> MonitorConfig {
    MonitorConfig {
        weights: vec![0.3, 0.3, 0.0, 0.4],
        power_p: 2.0,
        epsilon: EpsilonRule::Literal(1e-5),
        smoothing_gamma: DEFAULT_SMOOTHING_GAMMA,
        smoothing_passes: DEFAULT_SMOOTHING_PASSES,
        floor: DEFAULT_MONITOR_FLOOR,
    }
}

/// Shared frame of the two-source blow-up runs: a unit heat bump between
/// far-away cold walls, strength `1 + u^2` at both sources, and adaptive
/// steps that shrink as the amplitude grows.
fn q2_blowup(positions: Vec<f64>, velocities: [VelocityLaw; 2]) -> ProblemSpec {
    let [v0, v1] = velocities;
    ProblemSpec {
        initial_condition: InitialCondition::CosineSquaredBump,
        domain: DomainLaw::Fixed {
            left: -10.0,
            right: 10.0,
        },
        boundary: BoundaryKind::Dirichlet {
            left: 0.0,
            right: 0.0,
        },
        initial_positions: positions,
        laws: vec![
            SourceLaw {
                strength: StrengthLaw::OnePlusUSquared,
                velocity: v0,
            },
            SourceLaw {
                strength: StrengthLaw::OnePlusUSquared,
                velocity: v1,
            },
        ],
        monitor: monitor_q2(),
        tau: 5e-4,
        points_per_subdomain: vec![50, 50, 50],
        time: TimePolicy {
            rule: StepRule::BlowupAdaptive {
                mu: 1e-3,
                epsilon: 1e-5,
            },
            final_time: 5.0,
            terminate_tol: DEFAULT_TERMINATE_TOL,
        },
        newton_tol: DEFAULT_NEWTON_TOL,
        newton_max_iter: DEFAULT_NEWTON_MAX_ITER,
        corrector_passes: 1,
        strict_paper_labc: false,
    }
}

/// Construct one of the named example problems, or `None` for an unknown
/// name (see [`EXAMPLE_NAMES`]).
pub fn make_example(name: &str) -> Option<ProblemSpec> {
    let spec = match name {
        "example1" => {
            let omega1 = 1.25 * PI;
            let omega2 = 1.75 * PI;
            let split = 7.0 / 12.0;
            ProblemSpec {
                initial_condition: InitialCondition::PiecewiseSine {
                    omega1,
                    omega2,
                    split,
                },
                domain: DomainLaw::Fixed {
                    left: 0.0,
                    right: 1.0,
                },
                boundary: BoundaryKind::Dirichlet {
                    left: 0.0,
                    right: 0.0,
                },
                initial_positions: vec![split],
                laws: vec![SourceLaw {
                    strength: StrengthLaw::InterfaceFlux { omega1, omega2 },
                    velocity: VelocityLaw::ExactInterface { omega1, omega2 },
                }],
                monitor: MonitorConfig {
                    weights: vec![0.5, 0.5, 0.0],
                    power_p: 2.0,
                    epsilon: EpsilonRule::ThousandOverN4,
                    smoothing_gamma: DEFAULT_SMOOTHING_GAMMA,
                    smoothing_passes: DEFAULT_SMOOTHING_PASSES,
                    floor: DEFAULT_MONITOR_FLOOR,
                },
                tau: 1e-3,
                points_per_subdomain: vec![20, 20],
                time: TimePolicy {
                    rule: StepRule::Uniform { steps: 40 },
                    final_time: 0.1,
                    terminate_tol: DEFAULT_TERMINATE_TOL,
                },
                newton_tol: DEFAULT_NEWTON_TOL,
                newton_max_iter: DEFAULT_NEWTON_MAX_ITER,
                corrector_passes: 1,
                strict_paper_labc: false,
            }
        }
        "linear_q1" => ProblemSpec {
            initial_condition: InitialCondition::CosineSquaredBump,
            domain: DomainLaw::Fixed {
                left: -10.0,
                right: 10.0,
            },
            boundary: BoundaryKind::Dirichlet {
                left: 0.0,
                right: 0.0,
            },
            initial_positions: vec![0.0],
            laws: vec![SourceLaw {
                strength: StrengthLaw::OnePlusUSquared,
                velocity: VelocityLaw::Constant(2.0),
            }],
            monitor: MonitorConfig {
                weights: vec![0.9, 0.1, 0.0],
                power_p: 2.0,
                epsilon: EpsilonRule::ThousandOverN4,
                smoothing_gamma: DEFAULT_SMOOTHING_GAMMA,
                smoothing_passes: DEFAULT_SMOOTHING_PASSES,
                floor: DEFAULT_MONITOR_FLOOR,
            },
            tau: 1e-3,
            points_per_subdomain: vec![50, 50],
            time: TimePolicy {
                rule: StepRule::Graded { steps: 1000 },
                final_time: 1.0,
                terminate_tol: DEFAULT_TERMINATE_TOL,
            },
            newton_tol: DEFAULT_NEWTON_TOL,
            newton_max_iter: DEFAULT_NEWTON_MAX_ITER,
            corrector_passes: 1,
            strict_paper_labc: false,
        },
        "linear_q2" => q2_blowup(
            vec![0.0, 2.5],
            [VelocityLaw::Constant(2.0), VelocityLaw::Constant(2.0)],
        ),
        "sin_q2" => q2_blowup(
            vec![0.0, 2.5],
            [
                VelocityLaw::Cosine {
                    amplitude: PI,
                    angular: PI,
                },
                VelocityLaw::Cosine {
                    amplitude: PI,
                    angular: PI,
                },
            ],
        ),
        "symmetric_q2" => q2_blowup(
            vec![-2.0, 2.0],
            [
                VelocityLaw::Cosine {
                    amplitude: PI,
                    angular: PI,
                },
                VelocityLaw::NegatedOf(0),
            ],
        ),
        "symmetric_q2_labc" => {
            let mut spec = make_example("symmetric_q2")?;
            spec.domain = DomainLaw::FollowSources {
                left_gap: 4.0,
                right_gap: 4.0,
            };
            spec.boundary = BoundaryKind::Absorbing { s0: 1.0 };
            spec
        }
        _ => return None,
    };
    Some(spec)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::validate_problem;

    fn assert_close(got: f64, want: f64, rel: f64, what: &str) {
        let scale = want.abs().max(1e-300);
        assert!(
            (got - want).abs() <= rel * scale,
            "{what}: got {got:.17e}, want {want:.17e}"
        );
    }

    #[test]
    fn initial_interface_is_exactly_seven_twelfths() {
        // 5 a = 7 (1 - a) balances the two sine arguments at t = 0.
        let alpha = InterfaceOracle::example1().interface(0.0).unwrap();
        assert!((alpha - 7.0 / 12.0).abs() <= 1e-14, "alpha = {alpha:.17}");
    }

    #[test]
    fn golden_values_from_high_precision_evaluation() {
        let oracle = InterfaceOracle::example1();

        // sin(35 pi / 48), the branch value at the initial interface.
        assert_close(
            oracle.left(0.0, 7.0 / 12.0),
            0.751839807478977396,
            1e-15,
            "u(alpha, 0)",
        );

        // Point value on the left branch after one decay period.
        let a01 = oracle.interface(0.1).unwrap();
        assert_close(a01, 0.742247570274780610, 1e-13, "alpha(0.1)");
        assert_close(
            oracle.exact_u(0.1, 0.25, a01),
            0.177872866979830789,
            1e-13,
            "u(0.25, 0.1)",
        );

        // Flux jump and interface speed at t = 0.
        assert_close(
            oracle.flux_jump(0.0, 7.0 / 12.0),
            -6.21418790668065156,
            1e-14,
            "jump(0)",
        );
        let (alpha, psi) = oracle.interface_and_velocity(0.0).unwrap();
        assert_close(alpha, 7.0 / 12.0, 1e-14, "alpha(0)");
        assert_close(psi, 1.79114992600191387, 1e-13, "psi(0)");
    }

    #[test]
    fn branch_values_agree_at_the_interface() {
        let oracle = InterfaceOracle::example1();
        for k in 0..=200 {
            let t = 0.001 * k as f64;
            let alpha = oracle.interface(t).unwrap();
            let gap = (oracle.left(t, alpha) - oracle.right(t, alpha)).abs();
            assert!(gap <= 1e-13, "t = {t}: branch gap {gap:.3e}");
        }
    }

    #[test]
    fn one_sided_slopes_reproduce_the_flux_jump() {
        let oracle = InterfaceOracle::example1();
        let (w1, w2) = (oracle.omega1, oracle.omega2);
        for &t in &[0.0, 0.05, 0.1, 0.2] {
            let a = oracle.interface(t).unwrap();

            // Independent re-derivation of the one-sided derivatives.
            let left_slope = w1 * (w1 * a).cos() * (-w1 * w1 * t).exp();
            let right_slope = -w2 * (w2 * (1.0 - a)).cos() * (-w2 * w2 * t).exp();
            let jump = oracle.flux_jump(t, a);
            assert!(
                (left_slope - right_slope - jump).abs() <= 1e-12,
                "t = {t}: analytic jump mismatch"
            );

            // Finite differences of the branches confirm the analytic forms.
            let d = 1e-6;
            let fd_left = (oracle.left(t, a) - oracle.left(t, a - d)) / d;
            let fd_right = (oracle.right(t, a + d) - oracle.right(t, a)) / d;
            assert!((fd_left - left_slope).abs() <= 1e-4);
            assert!((fd_right - right_slope).abs() <= 1e-4);
        }
    }

    #[test]
    fn interface_velocity_matches_the_drift_of_the_root() {
        let oracle = InterfaceOracle::example1();
        let d = 1e-6;
        for &t in &[0.01, 0.05, 0.1] {
            let (_, psi) = oracle.interface_and_velocity(t).unwrap();
            let ahead = oracle.interface(t + d).unwrap();
            let behind = oracle.interface(t - d).unwrap();
            let drift = (ahead - behind) / (2.0 * d);
            assert_close(psi, drift, 1e-7, "root drift");
        }
    }

    #[test]
    fn equal_frequencies_pin_the_interface_at_the_center() {
        let oracle = InterfaceOracle::new(1.25 * PI, 1.25 * PI);
        for &t in &[0.0, 0.1, 1.0] {
            let (alpha, psi) = oracle.interface_and_velocity(t).unwrap();
            assert!((alpha - 0.5).abs() <= 1e-13);
            assert_eq!(psi, 0.0, "numerator w1^2 - w2^2 vanishes exactly");
        }
    }

    #[test]
    fn vanishing_jump_is_reported_not_divided_by() {
        // With equal frequencies the two cosine terms cancel at
        // x = 1/2 + pi / (2 w), here 0.9 for w = 5 pi / 4.
        let oracle = InterfaceOracle::new(1.25 * PI, 1.25 * PI);
        match oracle.velocity_from(0.0, 0.9, 1.0) {
            Err(OracleError::DegenerateJump { magnitude }) => {
                assert!(magnitude < JUMP_TOL);
            }
            other => panic!("expected a degenerate-jump error, got {other:?}"),
        }
    }

    #[test]
    fn missing_bracket_is_reported() {
        // sin(w1) > 0 and -sin(w2) > 0 put both endpoint values on the same
        // side, so there is no sign change to bisect.
        let oracle = InterfaceOracle::new(0.5 * PI, 4.0);
        match oracle.interface(0.0) {
            Err(OracleError::RootNotBracketed { time, .. }) => assert_eq!(time, 0.0),
            other => panic!("expected a bracket failure, got {other:?}"),
        }
    }

    #[test]
    fn sup_error_vanishes_on_exactly_sampled_data() {
        let oracle = InterfaceOracle::example1();
        let t = 0.05;
        let alpha = oracle.interface(t).unwrap();
        let nodes: Vec<f64> = (0..=40).map(|k| k as f64 / 40.0).collect();
        let values: Vec<f64> = nodes.iter().map(|&x| oracle.exact_u(t, x, alpha)).collect();
        assert_eq!(oracle.sup_error(&nodes, &values, t, alpha), 0.0);

        let mut bumped = values.clone();
        bumped[17] += 3e-3;
        assert_close(
            oracle.sup_error(&nodes, &bumped, t, alpha),
            3e-3,
            1e-12,
            "bumped error",
        );
    }

    #[test]
    fn every_preset_passes_validation() {
        for name in EXAMPLE_NAMES {
            let spec = make_example(name).unwrap();
            if let Err(errors) = validate_problem(&spec) {
                panic!("{name}: {errors:?}");
            }
        }
        assert!(make_example("no_such_example").is_none());
    }

    #[test]
    fn presets_match_the_parameter_table() {
        let e1 = make_example("example1").unwrap();
        assert_eq!(
            e1.domain,
            DomainLaw::Fixed {
                left: 0.0,
                right: 1.0
            }
        );
        assert_eq!(e1.initial_positions, vec![7.0 / 12.0]);
        assert_eq!(e1.monitor.weights, vec![0.5, 0.5, 0.0]);
        assert_eq!(e1.monitor.epsilon, EpsilonRule::ThousandOverN4);
        assert_eq!(e1.tau, 1e-3);
        assert_eq!(e1.time.rule, StepRule::Uniform { steps: 40 });
        assert_eq!(e1.time.final_time, 0.1);
        assert!(e1.laws[0].velocity.is_exact_interface());

        let q1 = make_example("linear_q1").unwrap();
        assert_eq!(q1.monitor.weights, vec![0.9, 0.1, 0.0]);
        assert_eq!(q1.time.rule, StepRule::Graded { steps: 1000 });
        assert_eq!(q1.laws[0].velocity, VelocityLaw::Constant(2.0));
        assert_eq!(q1.initial_positions, vec![0.0]);

        let q2 = make_example("linear_q2").unwrap();
        assert_eq!(q2.initial_positions, vec![0.0, 2.5]);
        assert_eq!(q2.monitor.weights, vec![0.3, 0.3, 0.0, 0.4]);
        assert_eq!(q2.monitor.epsilon, EpsilonRule::Literal(1e-5));
        assert_eq!(q2.tau, 5e-4);
        assert_eq!(q2.points_per_subdomain, vec![50, 50, 50]);
        assert_eq!(
            q2.time.rule,
            StepRule::BlowupAdaptive {
                mu: 1e-3,
                epsilon: 1e-5
            }
        );

        let sin2 = make_example("sin_q2").unwrap();
        for law in &sin2.laws {
            assert_eq!(
                law.velocity,
                VelocityLaw::Cosine {
                    amplitude: PI,
                    angular: PI
                }
            );
        }

        let sym = make_example("symmetric_q2").unwrap();
        assert_eq!(sym.initial_positions, vec![-2.0, 2.0]);
        assert_eq!(sym.laws[1].velocity, VelocityLaw::NegatedOf(0));
        assert_eq!(
            sym.domain,
            DomainLaw::Fixed {
                left: -10.0,
                right: 10.0
            }
        );

        let labc = make_example("symmetric_q2_labc").unwrap();
        assert_eq!(
            labc.domain,
            DomainLaw::FollowSources {
                left_gap: 4.0,
                right_gap: 4.0
            }
        );
        assert_eq!(labc.boundary, BoundaryKind::Absorbing { s0: 1.0 });
        assert_eq!(labc.laws, sym.laws);
    }

    #[test]
    fn pc_switch_swaps_only_the_exact_interface_law() {
        let mut spec = make_example("example1").unwrap();
        switch_to_pc(&mut spec, false);
        match spec.laws[0].velocity {
            VelocityLaw::InterfaceOde {
                omega1,
                omega2,
                discrete_slopes,
            } => {
                assert_eq!(omega1, 1.25 * PI);
                assert_eq!(omega2, 1.75 * PI);
                assert!(!discrete_slopes);
            }
            ref other => panic!("unexpected law {other:?}"),
        }

        let mut q1 = make_example("linear_q1").unwrap();
        let before = q1.laws.clone();
        switch_to_pc(&mut q1, false);
        assert_eq!(q1.laws, before);
    }
}
