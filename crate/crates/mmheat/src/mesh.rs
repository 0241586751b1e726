//! Mesh motion by monitor equidistribution.
//!
//! Nodes relax toward equidistribution of the monitor through the implicit
//! discretization of
//!
//! ```text
//!     x_{t,xi,xi} = -(1/tau) (M x_xi)_xi,
//! ```
//!
//! namely, per interior node `j`,
//!
//! ```text
//!     [d2(x^{n+1}) - d2(x^n)] / dt
//!         = -(1/tau) [M_{j+1/2} (x_{j+1}^{n+1} - x_j^{n+1})
//!                   - M_{j-1/2} (x_j^{n+1} - x_{j-1}^{n+1})],
//! ```
//!
//! with `d2` the second difference, `M_{j+1/2} = (M_j + M_{j+1})/2`, and the
//! monitor frozen at the old time level. Nodes pinned to sources and the two
//! window endpoints get identity rows, which decouples the tridiagonal
//! system into one independent solve per subdomain.
//!
//! The steady state of the relaxation satisfies `M_{j+1/2} h_{j+1} = const`
//! on each slice: cell width inversely proportional to the monitor.

use crate::error::{RunError, StepError};
use crate::linalg::solve_tridiagonal;
use crate::model::{DomainLaw, MeshState, MonitorConfig, ProblemSpec, SolutionState};
use crate::monitor::smoothed_monitor;

/// One implicit relaxation step on a single slice. `old_nodes` and `monitor`
/// cover the slice including both pinned ends; the pins are the new endpoint
/// values. The second-difference right side is assembled as a difference of
/// cell widths, which reverses sign exactly under reflection.
pub fn step_subdomain_mesh(
    slice: usize,
    old_nodes: &[f64],
    monitor: &[f64],
    pin_left: f64,
    pin_right: f64,
    tau: f64,
    dt: f64,
) -> Result<Vec<f64>, StepError> {
    let m = old_nodes.len() - 1;
    let mut lower = vec![0.0; m + 1];
    let mut diag = vec![0.0; m + 1];
    let mut upper = vec![0.0; m + 1];
    let mut rhs = vec![0.0; m + 1];
    diag[0] = 1.0;
    rhs[0] = pin_left;
    diag[m] = 1.0;
    rhs[m] = pin_right;
    let rdt = 1.0 / dt;
    for j in 1..m {
        let m_lo = (monitor[j - 1] + monitor[j]) * 0.5;
        let m_hi = (monitor[j] + monitor[j + 1]) * 0.5;
        lower[j] = rdt + m_lo / tau;
        upper[j] = rdt + m_hi / tau;
        diag[j] = -2.0 * rdt - (m_lo + m_hi) / tau;
        let h_lo = old_nodes[j] - old_nodes[j - 1];
        let h_hi = old_nodes[j + 1] - old_nodes[j];
        rhs[j] = (h_hi - h_lo) * rdt;
    }
    let nodes = solve_tridiagonal(&lower, &diag, &upper, &rhs)?;
    if nodes.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(StepError::MeshTangled { slice });
    }
    Ok(nodes)
}

/// One mesh step for the whole window: evaluate and smooth the monitor on
/// the old state (with the old source positions), then relax every slice
/// independently with its nodes pinned to the new source positions and the
/// new window endpoints.
#[allow(clippy::too_many_arguments)]
pub fn step_global_mesh(
    state: &SolutionState,
    old_positions: &[f64],
    targets: &[f64],
    domain: &DomainLaw,
    monitor_cfg: &MonitorConfig,
    tau: f64,
    dt: f64,
    new_time: f64,
) -> Result<MeshState, StepError> {
    let mesh = &state.mesh;
    let n = mesh.n();
    let q = targets.len();
    let (left, right) = domain.endpoints(targets);

    for (i, &t) in targets.iter().enumerate() {
        if !(left < t && t < right) {
            return Err(StepError::SourceLeftDomain { index: i });
        }
    }
    if targets.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(StepError::SourcesCollided {
            positions: targets.to_vec(),
        });
    }

    let monitor = smoothed_monitor(mesh, &state.values, old_positions, monitor_cfg);

    let mut bounds_idx = Vec::with_capacity(q + 2);
    bounds_idx.push(0);
    bounds_idx.extend_from_slice(&mesh.source_indices);
    bounds_idx.push(n);
    let mut pins = Vec::with_capacity(q + 2);
    pins.push(left);
    pins.extend_from_slice(targets);
    pins.push(right);

    let mut nodes = vec![0.0; n + 1];
    for s in 0..=q {
        let (lo, hi) = (bounds_idx[s], bounds_idx[s + 1]);
        let slice_nodes = step_subdomain_mesh(
            s,
            &mesh.nodes[lo..=hi],
            &monitor[lo..=hi],
            pins[s],
            pins[s + 1],
            tau,
            dt,
        )?;
        nodes[lo..=hi].copy_from_slice(&slice_nodes);
    }

    Ok(MeshState {
        time: new_time,
        nodes,
        source_indices: mesh.source_indices.clone(),
    })
}

/// Worst relative deviation of the cell masses `mu_k = M_{k+1/2} h_{k+1}`
/// from their equidistributed value, over one slice. Zero means perfectly
/// equidistributed.
pub fn equidistribution_residual(nodes: &[f64], monitor: &[f64]) -> f64 {
    let m = nodes.len() - 1;
    if m == 0 {
        return 0.0;
    }
    let mu = cell_masses(nodes, monitor);
    let total = pair_sum(&mu);
    let target = total / m as f64;
    mu.iter()
        .fold(0.0f64, |worst, &v| worst.max((v / target - 1.0).abs()))
}

fn cell_masses(nodes: &[f64], monitor: &[f64]) -> Vec<f64> {
    (0..nodes.len() - 1)
        .map(|k| ((monitor[k] + monitor[k + 1]) * 0.5) * (nodes[k + 1] - nodes[k]))
        .collect()
}

/// Sum accumulated in mirror pairs `(k, len-1-k)`, so a reversed input
/// produces the bitwise identical total.
fn pair_sum(v: &[f64]) -> f64 {
    let mut sum = 0.0;
    let mut i = 0;
    let mut k = v.len();
    while i + 1 < k {
        k -= 1;
        sum += v[i] + v[k];
        i += 1;
    }
    if i < k {
        sum += v[i];
    }
    sum
}

/// Direct equidistribution of one slice: place node `i` at the point where
/// the cumulative cell mass reaches `i/m` of the total. Nodes left of the
/// middle walk the cells from the left, nodes right of it from the right,
/// and an exact-middle node averages the two walks; a mirror-symmetric
/// slice therefore redistributes to a bitwise mirror-symmetric one.
fn redistribute_slice(nodes: &[f64], monitor: &[f64]) -> Vec<f64> {
    let m = nodes.len() - 1;
    if m <= 1 {
        return nodes.to_vec();
    }
    let mu = cell_masses(nodes, monitor);
    let total = pair_sum(&mu);
    let mut out = vec![0.0; m + 1];
    out[0] = nodes[0];
    out[m] = nodes[m];
    for i in 1..m {
        let from_left = (i as f64) * total / (m as f64);
        let from_right = ((m - i) as f64) * total / (m as f64);
        out[i] = match (2 * i).cmp(&m) {
            std::cmp::Ordering::Less => locate_from_left(nodes, &mu, from_left),
            std::cmp::Ordering::Greater => locate_from_right(nodes, &mu, from_right),
            std::cmp::Ordering::Equal => {
                let a = locate_from_left(nodes, &mu, from_left);
                let b = locate_from_right(nodes, &mu, from_right);
                (a + b) * 0.5
            }
        };
    }
    out
}

fn locate_from_left(nodes: &[f64], mu: &[f64], s: f64) -> f64 {
    let m = mu.len();
    let mut cum = 0.0;
    let mut k = 0;
    while k < m - 1 && cum + mu[k] < s {
        cum += mu[k];
        k += 1;
    }
    nodes[k] + ((s - cum) / mu[k]) * (nodes[k + 1] - nodes[k])
}

fn locate_from_right(nodes: &[f64], mu: &[f64], s: f64) -> f64 {
    let m = mu.len();
    let mut cum = 0.0;
    let mut k = m - 1;
    while k > 0 && cum + mu[k] < s {
        cum += mu[k];
        k -= 1;
    }
    nodes[k + 1] - ((s - cum) / mu[k]) * (nodes[k + 1] - nodes[k])
}

/// Equidistributed mesh for the initial data: per-slice uniform fill, then
/// up to 50 rounds of monitor evaluation (on initial data resampled at the
/// current nodes) and direct redistribution, stopping once no node moves
/// more than 1e-12 of the window width.
pub fn initial_mesh(spec: &ProblemSpec) -> Result<MeshState, RunError> {
    let n = spec.n_cells();
    let q = spec.q();
    let (left, right) = spec.domain.endpoints(&spec.initial_positions);
    let src_idx = spec.source_indices();

    let mut bounds_idx = Vec::with_capacity(q + 2);
    bounds_idx.push(0);
    bounds_idx.extend_from_slice(&src_idx);
    bounds_idx.push(n);
    let mut bound_vals = Vec::with_capacity(q + 2);
    bound_vals.push(left);
    bound_vals.extend_from_slice(&spec.initial_positions);
    bound_vals.push(right);

    let mut nodes = vec![0.0; n + 1];
    for s in 0..=q {
        let (lo, hi) = (bounds_idx[s], bounds_idx[s + 1]);
        let (a, b) = (bound_vals[s], bound_vals[s + 1]);
        let m = hi - lo;
        for k in 0..=m {
            nodes[lo + k] = if k == 0 {
                a
            } else if k == m {
                b
            } else {
                (a * ((m - k) as f64) + b * (k as f64)) / (m as f64)
            };
        }
    }

    let mut mesh = MeshState {
        time: 0.0,
        nodes,
        source_indices: src_idx,
    };
    let width = right - left;
    for _ in 0..50 {
        let u: Vec<f64> = mesh
            .nodes
            .iter()
            .map(|&x| spec.initial_condition.eval(x))
            .collect();
        let m = smoothed_monitor(&mesh, &u, &spec.initial_positions, &spec.monitor);
        let mut moved = 0.0f64;
        let mut new_nodes = mesh.nodes.clone();
        for s in 0..=q {
            let (lo, hi) = (bounds_idx[s], bounds_idx[s + 1]);
            let slice = redistribute_slice(&mesh.nodes[lo..=hi], &m[lo..=hi]);
            for (k, v) in slice.into_iter().enumerate() {
                moved = moved.max((v - mesh.nodes[lo + k]).abs());
                new_nodes[lo + k] = v;
            }
        }
        mesh.nodes = new_nodes;
        if moved < 1e-12 * width {
            break;
        }
    }

    if !mesh.is_strictly_increasing() {
        return Err(RunError::InitialMesh(
            "equidistributed initial mesh is not strictly increasing".into(),
        ));
    }
    Ok(mesh)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::dense;
    use crate::model::{
        BoundaryKind, EpsilonRule, InitialCondition, ProblemSpec, SourceLaw, StepRule,
        StrengthLaw, TimePolicy, VelocityLaw,
    };

    #[test]
    fn three_node_relaxation_matches_hand_solution() {
        // M = (1, 1, 3), tau = dt = 1, ends pinned at 0 and 1:
        // row for the middle node is 2 x0 - 5 x1 + 3 x2 = 0, so x1 = 0.6.
        let out = step_subdomain_mesh(0, &[0.0, 0.5, 1.0], &[1.0, 1.0, 3.0], 0.0, 1.0, 1.0, 1.0)
            .unwrap();
        assert!((out[1] - 0.6).abs() < 1e-15, "got {}", out[1]);
        assert_eq!(out[0], 0.0);
        assert_eq!(out[2], 1.0);
    }

    #[test]
    fn slice_step_matches_dense_oracle() {
        let old = [0.0, 0.2, 0.45, 0.8, 1.3, 1.5];
        let mon = [2.0, 1.0, 0.5, 3.0, 1.5, 2.5];
        let (tau, dt) = (1e-2, 5e-3);
        let out = step_subdomain_mesh(0, &old, &mon, 0.0, 1.5, tau, dt).unwrap();

        let m = old.len() - 1;
        let mut a = vec![vec![0.0; m + 1]; m + 1];
        let mut b = vec![0.0; m + 1];
        a[0][0] = 1.0;
        a[m][m] = 1.0;
        b[m] = 1.5;
        for j in 1..m {
            let m_lo = (mon[j - 1] + mon[j]) / 2.0;
            let m_hi = (mon[j] + mon[j + 1]) / 2.0;
            a[j][j - 1] = 1.0 / dt + m_lo / tau;
            a[j][j] = -2.0 / dt - (m_lo + m_hi) / tau;
            a[j][j + 1] = 1.0 / dt + m_hi / tau;
            b[j] = ((old[j + 1] - old[j]) - (old[j] - old[j - 1])) / dt;
        }
        let expect = dense::solve(a, b).unwrap();
        for (x, e) in out.iter().zip(&expect) {
            assert!((x - e).abs() < 1e-12, "{x} vs {e}");
        }
    }

    #[test]
    fn uniform_mesh_with_uniform_monitor_is_a_fixed_point() {
        let old = [0.0, 0.25, 0.5, 0.75, 1.0];
        let mon = [2.0; 5];
        let out = step_subdomain_mesh(0, &old, &mon, 0.0, 1.0, 1e-3, 1e-2).unwrap();
        for (x, e) in out.iter().zip(&old) {
            assert!((x - e).abs() < 1e-14);
        }
    }

    #[test]
    fn infinite_relaxation_time_freezes_the_interior() {
        // With tau enormous the equation reduces to preserving the second
        // difference, so unchanged pins reproduce the old mesh.
        let old = [0.0, 0.1, 0.35, 0.6, 1.0];
        let mon = [5.0, 0.1, 2.0, 8.0, 1.0];
        let out = step_subdomain_mesh(0, &old, &mon, 0.0, 1.0, 1e300, 1e-2).unwrap();
        for (x, e) in out.iter().zip(&old) {
            assert!((x - e).abs() < 1e-12);
        }
    }

    #[test]
    fn repeated_steps_approach_equidistribution() {
        let mut nodes = vec![0.0, 0.01, 0.02, 0.05, 0.3, 0.7, 0.95, 1.0];
        // Monitor concentrated near the right end.
        let monitor_of = |x: f64| 0.1 + x * x;
        let mon: Vec<f64> = nodes.iter().map(|&x| monitor_of(x)).collect();
        let initial = equidistribution_residual(&nodes, &mon);
        for _ in 0..400 {
            let mon: Vec<f64> = nodes.iter().map(|&x| monitor_of(x)).collect();
            nodes = step_subdomain_mesh(0, &nodes, &mon, 0.0, 1.0, 1e-3, 1e-3).unwrap();
        }
        let mon: Vec<f64> = nodes.iter().map(|&x| monitor_of(x)).collect();
        let fin = equidistribution_residual(&nodes, &mon);
        assert!(
            fin < 0.02 * initial,
            "residual went from {initial} to {fin}"
        );
    }

    #[test]
    fn tangled_result_is_reported_not_returned() {
        // Frozen second difference with the right pin pulled inside the old
        // interior node forces a crossing.
        let err = step_subdomain_mesh(3, &[0.0, 0.9, 1.0], &[1.0, 1.0, 1.0], 0.0, 0.5, 1e300, 1.0)
            .unwrap_err();
        assert!(matches!(err, StepError::MeshTangled { slice: 3 }));
    }

    fn two_source_state() -> (SolutionState, Vec<f64>) {
        let nodes: Vec<f64> = (0..=8).map(|k| -4.0 + k as f64).collect();
        let mesh = MeshState {
            time: 0.0,
            nodes,
            source_indices: vec![2, 6],
        };
        let values = mesh
            .nodes
            .iter()
            .map(|&x| InitialCondition::CosineSquaredBump.eval(x / 4.0))
            .collect();
        let state = SolutionState {
            mesh,
            values,
            ghosts: None,
        };
        (state, vec![-2.0, 2.0])
    }

    fn mon_cfg() -> MonitorConfig {
        MonitorConfig {
            weights: vec![0.3, 0.3, 0.2, 0.2],
            power_p: 2.0,
            epsilon: EpsilonRule::Literal(1e-5),
            smoothing_gamma: 0.5,
            smoothing_passes: 2,
            floor: 1e-8,
        }
    }

    #[test]
    fn global_step_pins_sources_and_window_exactly() {
        let (state, old_pos) = two_source_state();
        let targets = [-1.9375, 2.0625];
        let domain = DomainLaw::Fixed {
            left: -4.0,
            right: 4.0,
        };
        let new = step_global_mesh(
            &state, &old_pos, &targets, &domain, &mon_cfg(), 1e-3, 1e-3, 1e-3,
        )
        .unwrap();
        assert_eq!(new.nodes[0].to_bits(), (-4.0f64).to_bits());
        assert_eq!(new.nodes[2].to_bits(), targets[0].to_bits());
        assert_eq!(new.nodes[6].to_bits(), targets[1].to_bits());
        assert_eq!(new.nodes[8].to_bits(), 4.0f64.to_bits());
        assert!(new.is_strictly_increasing());
        assert_eq!(new.time, 1e-3);
    }

    #[test]
    fn collided_and_escaped_targets_are_rejected() {
        let (state, old_pos) = two_source_state();
        let domain = DomainLaw::Fixed {
            left: -4.0,
            right: 4.0,
        };
        let err = step_global_mesh(
            &state,
            &old_pos,
            &[2.0, 2.0],
            &domain,
            &mon_cfg(),
            1e-3,
            1e-3,
            1e-3,
        )
        .unwrap_err();
        assert!(matches!(err, StepError::SourcesCollided { .. }));
        let err = step_global_mesh(
            &state,
            &old_pos,
            &[-2.0, 4.5],
            &domain,
            &mon_cfg(),
            1e-3,
            1e-3,
            1e-3,
        )
        .unwrap_err();
        assert!(matches!(err, StepError::SourceLeftDomain { index: 1 }));
    }

    #[test]
    fn global_step_is_translation_equivariant() {
        let (state, old_pos) = two_source_state();
        let targets = [-1.9375, 2.0625];
        let domain = DomainLaw::Fixed {
            left: -4.0,
            right: 4.0,
        };
        let base = step_global_mesh(
            &state, &old_pos, &targets, &domain, &mon_cfg(), 1e-3, 1e-3, 1e-3,
        )
        .unwrap();

        let c = 3.7;
        let shifted = SolutionState {
            mesh: MeshState {
                time: 0.0,
                nodes: state.mesh.nodes.iter().map(|&x| x + c).collect(),
                source_indices: state.mesh.source_indices.clone(),
            },
            values: state.values.clone(),
            ghosts: None,
        };
        let s_pos: Vec<f64> = old_pos.iter().map(|&a| a + c).collect();
        let s_targets: Vec<f64> = targets.iter().map(|&a| a + c).collect();
        let s_domain = DomainLaw::Fixed {
            left: -4.0 + c,
            right: 4.0 + c,
        };
        let moved = step_global_mesh(
            &shifted, &s_pos, &s_targets, &s_domain, &mon_cfg(), 1e-3, 1e-3, 1e-3,
        )
        .unwrap();
        for (a, b) in base.nodes.iter().zip(&moved.nodes) {
            assert!((a + c - b).abs() < 1e-9, "{a} + {c} vs {b}");
        }
    }

    fn bump_spec(positions: Vec<f64>, partition: Vec<usize>, left: f64, right: f64) -> ProblemSpec {
        let q = positions.len();
        let mut weights = vec![0.3; q];
        let used: f64 = weights.iter().sum();
        weights.push((1.0 - used) / 2.0);
        weights.push((1.0 - used) / 2.0);
        ProblemSpec {
            initial_condition: InitialCondition::CosineSquaredBump,
            domain: DomainLaw::Fixed { left, right },
            boundary: BoundaryKind::Dirichlet {
                left: 0.0,
                right: 0.0,
            },
            initial_positions: positions,
            laws: vec![
                SourceLaw {
                    strength: StrengthLaw::OnePlusUSquared,
                    velocity: VelocityLaw::Constant(2.0),
                };
                q
            ],
            monitor: MonitorConfig {
                weights,
                power_p: 2.0,
                epsilon: EpsilonRule::Literal(1e-5),
                smoothing_gamma: 0.5,
                smoothing_passes: 2,
                floor: 1e-8,
            },
            tau: 1e-3,
            points_per_subdomain: partition,
            time: TimePolicy {
                rule: StepRule::Uniform { steps: 10 },
                final_time: 1.0,
                terminate_tol: 1e-16,
            },
            newton_tol: 1e-8,
            newton_max_iter: 50,
            corrector_passes: 1,
            strict_paper_labc: false,
        }
    }

    #[test]
    fn initial_mesh_pins_and_equidistributes() {
        let spec = bump_spec(vec![0.0], vec![50, 50], -10.0, 10.0);
        let mesh = initial_mesh(&spec).unwrap();
        assert!(mesh.is_strictly_increasing());
        assert_eq!(mesh.nodes[0], -10.0);
        assert_eq!(mesh.nodes[50].to_bits(), 0.0f64.to_bits());
        assert_eq!(mesh.nodes[100], 10.0);

        let u: Vec<f64> = mesh
            .nodes
            .iter()
            .map(|&x| spec.initial_condition.eval(x))
            .collect();
        let m = smoothed_monitor(&mesh, &u, &spec.initial_positions, &spec.monitor);
        let r_left = equidistribution_residual(&mesh.nodes[..=50], &m[..=50]);
        let r_right = equidistribution_residual(&mesh.nodes[50..], &m[50..]);
        assert!(r_left < 1e-6, "left residual {r_left}");
        assert!(r_right < 1e-6, "right residual {r_right}");
    }

    /// Bitwise equality of a value and its reflected partner, except that
    /// +0.0 and -0.0 (the window center) count as the same point.
    fn assert_mirror(a: f64, b: f64, what: &str, k: usize) {
        if a == 0.0 && b == 0.0 {
            return;
        }
        assert_eq!(a.to_bits(), b.to_bits(), "{what}: node {k} breaks mirror symmetry");
    }

    #[test]
    fn initial_mesh_is_bitwise_palindromic_for_symmetric_problems() {
        let spec = bump_spec(vec![-2.0, 2.0], vec![50, 50, 50], -6.0, 6.0);
        let mesh = initial_mesh(&spec).unwrap();
        let n = mesh.n();
        for k in 0..=n {
            assert_mirror(mesh.nodes[k], -mesh.nodes[n - k], "initial mesh", k);
        }
    }

    #[test]
    fn global_mesh_step_preserves_mirror_symmetry_bitwise() {
        let spec = bump_spec(vec![-2.0, 2.0], vec![50, 50, 50], -6.0, 6.0);
        let mesh = initial_mesh(&spec).unwrap();
        let values: Vec<f64> = mesh
            .nodes
            .iter()
            .map(|&x| spec.initial_condition.eval(x))
            .collect();
        let state = SolutionState {
            mesh,
            values,
            ghosts: None,
        };
        // Symmetric targets: both sources moved outward by the same amount.
        let targets = [-2.03125, 2.03125];
        let new = step_global_mesh(
            &state,
            &[-2.0, 2.0],
            &targets,
            &spec.domain,
            &spec.monitor,
            spec.tau,
            1e-3,
            1e-3,
        )
        .unwrap();
        let n = new.n();
        for k in 0..=n {
            assert_mirror(new.nodes[k], -new.nodes[n - k], "stepped mesh", k);
        }
    }
}
