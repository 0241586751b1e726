//! Mesh-density monitor: where the mesh should spend its nodes.
//!
//! For a solution `u` on nodes `x_j` with sources at `alpha_i`,
//!
//! ```text
//!     M_j = w[q+1] |u_j|^p + w[q] |u_x|_j
//!         + sum_i w[i] ((x_j - alpha_i)^2 + eps)^(-1/4),
//! ```
//!
//! floored away from zero and then smoothed by a few damped Jacobi passes.
//!
//! Every reduction in this module is written so that reversing the problem
//! left-to-right produces bitwise-reversed monitor values: sums are grouped
//! commutatively around the midpoint (the proximity terms pair source `i`
//! with source `q-1-i`) and slopes are formed from differences that negate
//! exactly under reflection. Symmetric problems then stay symmetric to the
//! last bit, which matters because near blow-up any asymmetry is amplified
//! by the square of the solution amplitude.

use crate::model::{MeshState, MonitorConfig};

/// Nodewise monitor values on the level-`n` state. No smoothing; apply
/// [`smooth_monitor`] afterwards.
pub fn evaluate_monitor(
    mesh: &MeshState,
    values: &[f64],
    positions: &[f64],
    cfg: &MonitorConfig,
) -> Vec<f64> {
    let n = mesh.n();
    let q = positions.len();
    let eps = cfg.epsilon_value(n);
    let w_grad = cfg.weights[q];
    let w_pow = cfg.weights[q + 1];
    let mut out = Vec::with_capacity(n + 1);
    for j in 0..=n {
        let ux = slope_magnitude(mesh, values, j);
        let base = w_pow * values[j].abs().powf(cfg.power_p) + w_grad * ux;
        let prox = proximity_sum(mesh.nodes[j], positions, &cfg.weights[..q], eps);
        out.push((base + prox).max(cfg.floor));
    }
    out
}

/// |u_x| at node `j`: centered over the two adjacent cells in the interior,
/// one-sided at the ends, and the larger one-sided slope at pinned source
/// nodes where the derivative jumps.
fn slope_magnitude(mesh: &MeshState, values: &[f64], j: usize) -> f64 {
    let n = mesh.n();
    let x = &mesh.nodes;
    let u = values;
    if j == 0 {
        ((u[1] - u[0]) / (x[1] - x[0])).abs()
    } else if j == n {
        ((u[n] - u[n - 1]) / (x[n] - x[n - 1])).abs()
    } else if mesh.source_indices.contains(&j) {
        let left = ((u[j] - u[j - 1]) / (x[j] - x[j - 1])).abs();
        let right = ((u[j + 1] - u[j]) / (x[j + 1] - x[j])).abs();
        left.max(right)
    } else {
        ((u[j + 1] - u[j - 1]) / ((x[j + 1] - x[j]) + (x[j] - x[j - 1]))).abs()
    }
}

/// Sum of the proximity wells at `x`, accumulated in mirror pairs
/// `(i, q-1-i)` so a reflected problem reproduces the sum bitwise.
fn proximity_sum(x: f64, positions: &[f64], weights: &[f64], eps: f64) -> f64 {
    let term = |i: usize| {
        let d = x - positions[i];
        weights[i] * (d * d + eps).powf(-0.25)
    };
    let mut sum = 0.0;
    let mut i = 0;
    let mut k = positions.len();
    while i + 1 < k {
        k -= 1;
        sum += term(i) + term(k);
        i += 1;
    }
    if i < k {
        sum += term(i);
    }
    sum
}

/// Damped Jacobi smoothing, `passes` simultaneous sweeps of
///
/// ```text
///     M_j <- (M_j + gamma (M_{j-1} + M_{j+1})) / (1 + 2 gamma)
/// ```
///
/// with the obvious one-neighbor version at the ends. Simultaneous (not
/// in-place) updates keep the operation symmetric under reversal.
pub fn smooth_monitor(m: &mut [f64], gamma: f64, passes: usize) {
    let n = m.len();
    if n < 2 || passes == 0 || gamma == 0.0 {
        return;
    }
    let mut scratch = vec![0.0; n];
    for _ in 0..passes {
        scratch[0] = (m[0] + gamma * m[1]) / (1.0 + gamma);
        for j in 1..n - 1 {
            scratch[j] = (m[j] + gamma * (m[j - 1] + m[j + 1])) / (1.0 + 2.0 * gamma);
        }
        scratch[n - 1] = (m[n - 1] + gamma * m[n - 2]) / (1.0 + gamma);
        m.copy_from_slice(&scratch);
    }
}

/// Monitor evaluation followed by the configured smoothing, the form the
/// mesh equation consumes.
pub fn smoothed_monitor(
    mesh: &MeshState,
    values: &[f64],
    positions: &[f64],
    cfg: &MonitorConfig,
) -> Vec<f64> {
    let mut m = evaluate_monitor(mesh, values, positions, cfg);
    smooth_monitor(&mut m, cfg.smoothing_gamma, cfg.smoothing_passes);
    m
}
