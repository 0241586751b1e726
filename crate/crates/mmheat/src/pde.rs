//! Implicit solution step on an already-moved mesh.
//!
//! With the mesh at the new level known, the heat equation in the moving
//! frame is discretized fully implicitly at every node `j`:
//!
//! ```text
//!     (u_j - u_j^n)/dt - xdot_j (u_{j+1} - u_{j-1})/(h_{j+1} + h_j)
//!       - 2/(h_{j+1} + h_j) [ (u_{j+1} - u_j)/h_{j+1} - (u_j - u_{j-1})/h_j ]
//!       - [2/(h_{j+1} + h_j)] F_i(t, alpha_i, u_j)  (source nodes only)
//!     = 0,
//! ```
//!
//! where `h` are the new cell widths, `xdot_j` is the node speed over the
//! step, and at a pinned source node the speed is the source velocity and
//! the point forcing `F_i` appears scaled by the lumped cell measure.
//! Newton's method handles the `u`-dependence of `F`; everything else is
//! linear, so problems with solution-independent strengths converge in a
//! single update.
//!
//! Boundary closures: Dirichlet rows pin the end values, keeping the system
//! tridiagonal; absorbing rows adjoin one ghost unknown per side and
//! approximate a transparent boundary to third order around a reference
//! frequency `s0`. The left absorbing row reads
//!
//! ```text
//!     d/dt[(u_1 - u_{-1})/(2 h_1)] - 3 sqrt(s0) du_0/dt
//!       + 3 (s0 + sqrt(s0) xdot_0)(u_1 - u_{-1})/(2 h_1)
//!       - xdot_0 (u_1 - 2 u_0 + u_{-1})/h_1^2 - s0^(3/2) u_0 = 0,
//! ```
//!
//! which annihilates the left-outgoing mode `exp(s0 t + sqrt(s0) x)` up to
//! discretization error; the right row is its exact reflection. Ghost cells
//! mirror the first and last cell widths.

use crate::error::StepError;
use crate::linalg::solve_tridiagonal;
use crate::model::{BoundaryKind, MeshState, SolutionState, StrengthLaw};

/// Forcing data for one source at the new time level, resolved to its
/// pinned node.
#[derive(Debug, Clone)]
pub struct SourceTerm {
    pub node: usize,
    /// Source position at the new level (strength laws may sample it).
    pub position: f64,
    /// Source velocity at the new level; replaces the mesh speed in the
    /// convective term of the pinned row.
    pub velocity: f64,
    pub strength: StrengthLaw,
}

/// Advance the solution over one step. `new_mesh` carries the new time.
/// Returns the new state and the number of Newton updates spent.
pub fn implicit_step(
    old: &SolutionState,
    new_mesh: &MeshState,
    dt: f64,
    boundary: &BoundaryKind,
    sources: &[SourceTerm],
    newton_tol: f64,
    newton_max_iter: usize,
    strict_alt_right: bool,
) -> Result<(SolutionState, usize), StepError> {
    match *boundary {
        BoundaryKind::Dirichlet { left, right } => dirichlet_step(
            old,
            new_mesh,
            dt,
            (left, right),
            sources,
            newton_tol,
            newton_max_iter,
        ),
        BoundaryKind::Absorbing { s0 } => absorbing_step(
            old,
            new_mesh,
            dt,
            s0,
            sources,
            newton_tol,
            newton_max_iter,
            strict_alt_right,
        ),
    }
}

struct PdeRow {
    r: f64,
    lo: f64,
    di: f64,
    hi: f64,
}

/// Residual and Jacobian entries of one interior row. The groupings are
/// chosen so a reflected problem evaluates to the bitwise identical
/// residual: differences negate exactly, `h_hi + h_lo` commutes, and the
/// convective product pairs two exactly-negating factors.
#[allow(clippy::too_many_arguments)]
fn pde_row(
    u_lo: f64,
    u_c: f64,
    u_hi: f64,
    u_old_c: f64,
    h_lo: f64,
    h_hi: f64,
    vel: f64,
    dt: f64,
    src: Option<(&StrengthLaw, f64)>,
    t_new: f64,
) -> PdeRow {
    let den = h_hi + h_lo;
    let cd = 2.0 / den;
    let cx = vel / den;
    let t1 = (u_c - u_old_c) / dt;
    let conv = ((u_hi - u_lo) / den) * vel;
    let d_hi = (u_hi - u_c) / h_hi;
    let d_lo = (u_c - u_lo) / h_lo;
    let diff = (d_hi - d_lo) * cd;
    let (src_val, src_du) = match src {
        Some((law, pos)) => (
            cd * law.value(t_new, pos, u_c),
            cd * law.du(t_new, pos, u_c),
        ),
        None => (0.0, 0.0),
    };
    PdeRow {
        r: ((t1 - conv) - diff) - src_val,
        lo: cx - cd / h_lo,
        di: 1.0 / dt + cd * (1.0 / h_hi + 1.0 / h_lo) - src_du,
        hi: -cx - cd / h_hi,
    }
}

/// Node speeds over the step, with pinned nodes carried by their source
/// velocity instead of the mesh difference quotient.
fn node_velocities(
    old_mesh: &MeshState,
    new_mesh: &MeshState,
    dt: f64,
    sources: &[SourceTerm],
) -> (Vec<f64>, Vec<Option<usize>>) {
    let n = new_mesh.n();
    let mut vel: Vec<f64> = (0..=n)
        .map(|j| (new_mesh.nodes[j] - old_mesh.nodes[j]) / dt)
        .collect();
    let mut src_at: Vec<Option<usize>> = vec![None; n + 1];
    for (si, s) in sources.iter().enumerate() {
        vel[s.node] = s.velocity;
        src_at[s.node] = Some(si);
    }
    (vel, src_at)
}

fn dirichlet_step(
    old: &SolutionState,
    new_mesh: &MeshState,
    dt: f64,
    g: (f64, f64),
    sources: &[SourceTerm],
    tol: f64,
    max_iter: usize,
) -> Result<(SolutionState, usize), StepError> {
    let n = new_mesh.n();
    let t_new = new_mesh.time;
    let xn = &new_mesh.nodes;
    let (vel, src_at) = node_velocities(&old.mesh, new_mesh, dt, sources);

    let mut u = old.values.clone();
    u[0] = g.0;
    u[n] = g.1;

    let mut lower = vec![0.0; n + 1];
    let mut diag = vec![0.0; n + 1];
    let mut upper = vec![0.0; n + 1];
    let mut neg_r = vec![0.0; n + 1];
    let mut iterations = 0usize;
    loop {
        diag[0] = 1.0;
        neg_r[0] = -(u[0] - g.0);
        diag[n] = 1.0;
        neg_r[n] = -(u[n] - g.1);
        let mut rmax = neg_r[0].abs().max(neg_r[n].abs());
        for j in 1..n {
            let row = pde_row(
                u[j - 1],
                u[j],
                u[j + 1],
                old.values[j],
                xn[j] - xn[j - 1],
                xn[j + 1] - xn[j],
                vel[j],
                dt,
                src_at[j].map(|si| (&sources[si].strength, sources[si].position)),
                t_new,
            );
            lower[j] = row.lo;
            diag[j] = row.di;
            upper[j] = row.hi;
            neg_r[j] = -row.r;
            rmax = rmax.max(row.r.abs());
        }
        if !rmax.is_finite() {
            return Err(StepError::NonFiniteSolution);
        }
        if rmax <= tol {
            break;
        }
        if iterations >= max_iter {
            return Err(StepError::NewtonDiverged {
                iterations,
                residual: rmax,
            });
        }
        let delta = solve_tridiagonal(&lower, &diag, &upper, &neg_r)?;
        let mut dmax = 0.0f64;
        let mut umax = 0.0f64;
        for j in 0..=n {
            u[j] += delta[j];
            dmax = dmax.max(delta[j].abs());
            umax = umax.max(u[j].abs());
        }
        iterations += 1;
        if !umax.is_finite() {
            return Err(StepError::NonFiniteSolution);
        }
        if dmax <= tol * umax.max(1.0) {
            break;
        }
    }
    Ok((
        SolutionState {
            mesh: new_mesh.clone(),
            values: u,
            ghosts: None,
        },
        iterations,
    ))
}

/// Jacobian of the absorbing-boundary system: the two three-entry boundary
/// rows plus the tridiagonal interior (indexed over the full unknown vector
/// `w`, rows `1..=n+1`).
struct AbsorbingJac {
    /// Left row coefficients on (w_0, w_1, w_2).
    al: [f64; 3],
    /// Right row coefficients on (w_{n}, w_{n+1}, w_{n+2}).
    ar: [f64; 3],
    lower: Vec<f64>,
    diag: Vec<f64>,
    upper: Vec<f64>,
}

/// Residual and Jacobian of the full absorbing system at the iterate `w`,
/// where `w = [u_{-1}, u_0, .., u_N, u_{N+1}]`. With `strict_alt_right` the
/// right row's zeroth-order term reads `+ s0^(3/2) u_0` (coupling the
/// boundaries); the Jacobian is still assembled in the standard form and
/// the rank-one difference is handled at solve time.
#[allow(clippy::too_many_arguments)]
fn absorbing_system(
    w: &[f64],
    old: &SolutionState,
    new_mesh: &MeshState,
    dt: f64,
    s0: f64,
    vel: &[f64],
    src_at: &[Option<usize>],
    sources: &[SourceTerm],
    strict_alt_right: bool,
) -> (Vec<f64>, AbsorbingJac) {
    let n = new_mesh.n();
    let nw = n + 3;
    let t_new = new_mesh.time;
    let xn = &new_mesh.nodes;
    let xo = &old.mesh.nodes;
    let (gl_old, gr_old) = old
        .ghosts
        .expect("absorbing step requires ghost values on the old state");
    let rs0 = s0.sqrt();
    let e_ = s0 * rs0;

    let mut r = vec![0.0; nw];
    let mut lower = vec![0.0; nw];
    let mut diag = vec![0.0; nw];
    let mut upper = vec![0.0; nw];

    // Interior rows: j = 0..=n at w-index k = j + 1. Ghost cells mirror the
    // end cells, so rows 0 and n see equal widths on both sides.
    for j in 0..=n {
        let h_lo = if j == 0 {
            xn[1] - xn[0]
        } else {
            xn[j] - xn[j - 1]
        };
        let h_hi = if j == n {
            xn[n] - xn[n - 1]
        } else {
            xn[j + 1] - xn[j]
        };
        let k = j + 1;
        let row = pde_row(
            w[k - 1],
            w[k],
            w[k + 1],
            old.values[j],
            h_lo,
            h_hi,
            vel[j],
            dt,
            src_at[j].map(|si| (&sources[si].strength, sources[si].position)),
            t_new,
        );
        lower[k] = row.lo;
        diag[k] = row.di;
        upper[k] = row.hi;
        r[k] = row.r;
    }

    // Left absorbing row on (w_0, w_1, w_2) = (u_{-1}, u_0, u_1).
    let h1n = xn[1] - xn[0];
    let h1o = xo[1] - xo[0];
    let xd0 = (xn[0] - xo[0]) / dt;
    let a_l = 1.0 / (dt * (2.0 * h1n));
    let b_l = 3.0 * (s0 + rs0 * xd0) / (2.0 * h1n);
    let c_l = xd0 / (h1n * h1n);
    let d_ = 3.0 * rs0 / dt;
    r[0] = ((w[2] - w[0]) / (2.0 * h1n) - (old.values[1] - gl_old) / (2.0 * h1o)) / dt
        - d_ * (w[1] - old.values[0])
        + b_l * (w[2] - w[0])
        - c_l * ((w[2] - 2.0 * w[1]) + w[0])
        - e_ * w[1];
    let al = [
        (-a_l - b_l) - c_l,
        (-d_ + 2.0 * c_l) - e_,
        (a_l + b_l) - c_l,
    ];

    // Right absorbing row on (w_n, w_{n+1}, w_{n+2}) = (u_{N-1}, u_N, u_{N+1}).
    let hnn = xn[n] - xn[n - 1];
    let hno = xo[n] - xo[n - 1];
    let xdn = (xn[n] - xo[n]) / dt;
    let a_r = 1.0 / (dt * (2.0 * hnn));
    let b_r = 3.0 * (s0 - rs0 * xdn) / (2.0 * hnn);
    let c_r = xdn / (hnn * hnn);
    let zero_order = if strict_alt_right { w[1] } else { w[n + 1] };
    r[nw - 1] = ((w[n + 2] - w[n]) / (2.0 * hnn) - (gr_old - old.values[n - 1]) / (2.0 * hno))
        / dt
        + d_ * (w[n + 1] - old.values[n])
        + b_r * (w[n + 2] - w[n])
        - c_r * ((w[n + 2] - 2.0 * w[n + 1]) + w[n])
        + e_ * zero_order;
    let ar = [
        (-a_r - b_r) - c_r,
        (d_ + 2.0 * c_r) + e_,
        (a_r + b_r) - c_r,
    ];

    (
        r,
        AbsorbingJac {
            al,
            ar,
            lower,
            diag,
            upper,
        },
    )
}

/// Solve `J x = rhs` for the absorbing Jacobian by eliminating the two
/// ghost unknowns into their neighboring rows (each appears in exactly one
/// interior row), solving the remaining tridiagonal system, and
/// back-substituting the ghosts. No pivoting: the elimination mirrors
/// exactly under reflection, which a pivoted band solver would not.
fn solve_absorbing_linear(jac: &AbsorbingJac, rhs: &[f64]) -> Result<Vec<f64>, StepError> {
    let nw = rhs.len();
    let inner = nw - 2;
    if jac.al[0].abs() < 1e-300 || jac.ar[2].abs() < 1e-300 {
        return Err(StepError::SingularSystem);
    }

    let mut lower = jac.lower[1..nw - 1].to_vec();
    let mut diag = jac.diag[1..nw - 1].to_vec();
    let mut upper = jac.upper[1..nw - 1].to_vec();
    let mut r = rhs[1..nw - 1].to_vec();

    let f = jac.lower[1] / jac.al[0];
    diag[0] = jac.diag[1] - f * jac.al[1];
    upper[0] = jac.upper[1] - f * jac.al[2];
    r[0] = rhs[1] - f * rhs[0];
    lower[0] = 0.0;

    let last = inner - 1;
    let g = jac.upper[nw - 2] / jac.ar[2];
    diag[last] = jac.diag[nw - 2] - g * jac.ar[1];
    lower[last] = jac.lower[nw - 2] - g * jac.ar[0];
    r[last] = rhs[nw - 2] - g * rhs[nw - 1];
    upper[last] = 0.0;

    let x = solve_tridiagonal(&lower, &diag, &upper, &r)?;
    let w0 = (rhs[0] - (jac.al[1] * x[0] + jac.al[2] * x[1])) / jac.al[0];
    let wn2 = (rhs[nw - 1] - (jac.ar[1] * x[last] + jac.ar[0] * x[last - 1])) / jac.ar[2];

    let mut full = Vec::with_capacity(nw);
    full.push(w0);
    full.extend_from_slice(&x);
    full.push(wn2);
    Ok(full)
}

/// Solve with the alternate right row via a rank-one update: the strict
/// Jacobian differs from the standard one by `E e_last (e_1 - e_{n+1})^T`,
/// so two standard solves combine by the usual low-rank formula.
fn solve_absorbing(
    jac: &AbsorbingJac,
    rhs: &[f64],
    strict_alt_right: bool,
    e_coeff: f64,
) -> Result<Vec<f64>, StepError> {
    let y = solve_absorbing_linear(jac, rhs)?;
    if !strict_alt_right {
        return Ok(y);
    }
    let nw = rhs.len();
    let mut e_rhs = vec![0.0; nw];
    e_rhs[nw - 1] = e_coeff;
    let z = solve_absorbing_linear(jac, &e_rhs)?;
    let vy = y[1] - y[nw - 2];
    let vz = z[1] - z[nw - 2];
    let denom = 1.0 + vz;
    if denom.abs() < 1e-300 {
        return Err(StepError::SingularSystem);
    }
    let factor = vy / denom;
    Ok(y.iter().zip(&z).map(|(yi, zi)| yi - factor * zi).collect())
}

#[allow(clippy::too_many_arguments)]
fn absorbing_step(
    old: &SolutionState,
    new_mesh: &MeshState,
    dt: f64,
    s0: f64,
    sources: &[SourceTerm],
    tol: f64,
    max_iter: usize,
    strict_alt_right: bool,
) -> Result<(SolutionState, usize), StepError> {
    let n = new_mesh.n();
    let nw = n + 3;
    let (vel, src_at) = node_velocities(&old.mesh, new_mesh, dt, sources);
    let (gl_old, gr_old) = old
        .ghosts
        .expect("absorbing step requires ghost values on the old state");
    let e_coeff = s0 * s0.sqrt();

    let mut w = Vec::with_capacity(nw);
    w.push(gl_old);
    w.extend_from_slice(&old.values);
    w.push(gr_old);

    let mut iterations = 0usize;
    loop {
        let (r, jac) = absorbing_system(
            &w,
            old,
            new_mesh,
            dt,
            s0,
            &vel,
            &src_at,
            sources,
            strict_alt_right,
        );
        let rmax = r.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if !rmax.is_finite() {
            return Err(StepError::NonFiniteSolution);
        }
        if rmax <= tol {
            break;
        }
        if iterations >= max_iter {
            return Err(StepError::NewtonDiverged {
                iterations,
                residual: rmax,
            });
        }
        let neg_r: Vec<f64> = r.iter().map(|v| -v).collect();
        let delta = solve_absorbing(&jac, &neg_r, strict_alt_right, e_coeff)?;
        let mut dmax = 0.0f64;
        let mut umax = 0.0f64;
        for (wi, di) in w.iter_mut().zip(&delta) {
            *wi += di;
            dmax = dmax.max(di.abs());
            umax = umax.max(wi.abs());
        }
        iterations += 1;
        if !umax.is_finite() {
            return Err(StepError::NonFiniteSolution);
        }
        if dmax <= tol * umax.max(1.0) {
            break;
        }
    }

    Ok((
        SolutionState {
            mesh: new_mesh.clone(),
            values: w[1..=n + 1].to_vec(),
            ghosts: Some((w[0], w[nw - 1])),
        },
        iterations,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::dense;
    use crate::model::{BoundaryKind, MeshState, SolutionState, StrengthLaw};

    fn state(nodes: Vec<f64>, values: Vec<f64>, src: Vec<usize>) -> SolutionState {
        SolutionState {
            mesh: MeshState {
                time: 0.0,
                nodes,
                source_indices: src,
            },
            values,
            ghosts: None,
        }
    }

    fn advance_mesh(old: &MeshState, nodes: Vec<f64>, dt: f64) -> MeshState {
        MeshState {
            time: old.time + dt,
            nodes,
            source_indices: old.source_indices.clone(),
        }
    }

    #[test]
    fn diffusion_step_matches_dense_oracle() {
        // Static nonuniform mesh, no sources: backward Euler diffusion.
        let nodes = vec![0.0, 0.15, 0.4, 0.55, 0.9, 1.0];
        let u0 = vec![0.0, 0.7, -0.3, 1.1, 0.25, 0.0];
        let old = state(nodes.clone(), u0.clone(), vec![]);
        let new_mesh = advance_mesh(&old.mesh, nodes.clone(), 1e-2);
        let dt = 1e-2;
        let (got, iters) = implicit_step(
            &old,
            &new_mesh,
            dt,
            &BoundaryKind::Dirichlet {
                left: 0.0,
                right: 0.0,
            },
            &[],
            1e-12,
            50,
            false,
        )
        .unwrap();
        assert_eq!(iters, 1, "a linear step takes exactly one update");

        let n = nodes.len() - 1;
        let mut a = vec![vec![0.0; n + 1]; n + 1];
        let mut b = vec![0.0; n + 1];
        a[0][0] = 1.0;
        a[n][n] = 1.0;
        for j in 1..n {
            let hl = nodes[j] - nodes[j - 1];
            let hr = nodes[j + 1] - nodes[j];
            let cd = 2.0 / (hl + hr);
            a[j][j - 1] = -cd / hl;
            a[j][j] = 1.0 / dt + cd * (1.0 / hl + 1.0 / hr);
            a[j][j + 1] = -cd / hr;
            b[j] = u0[j] / dt;
        }
        let expect = dense::solve(a, b).unwrap();
        for (x, e) in got.values.iter().zip(&expect) {
            assert!((x - e).abs() < 1e-12, "{x} vs {e}");
        }
    }

    #[test]
    fn linear_profile_is_exact_on_a_moving_mesh() {
        // u = 0.5 + 2x solves the heat equation; node motion must not
        // disturb it (convective term and time term cancel exactly).
        let profile = |x: f64| 0.5 + 2.0 * x;
        let xo = vec![0.0, 0.3, 0.55, 0.8, 1.0];
        let xn = vec![0.0, 0.42, 0.61, 0.74, 1.0];
        let u0: Vec<f64> = xo.iter().map(|&x| profile(x)).collect();
        let old = state(xo, u0, vec![]);
        let new_mesh = advance_mesh(&old.mesh, xn.clone(), 1e-2);
        let (got, _) = implicit_step(
            &old,
            &new_mesh,
            1e-2,
            &BoundaryKind::Dirichlet {
                left: 0.5,
                right: 2.5,
            },
            &[],
            1e-12,
            50,
            false,
        )
        .unwrap();
        for (v, &x) in got.values.iter().zip(&xn) {
            assert!((v - profile(x)).abs() < 1e-10, "{v} vs {}", profile(x));
        }
    }

    #[test]
    fn zero_strength_source_row_is_bitwise_identical_to_a_regular_row() {
        let xo = vec![0.0, 0.25, 0.5, 0.75, 1.0];
        let xn = vec![0.0, 0.25, 0.52, 0.75, 1.0];
        let dt = 1e-2;
        let u0 = vec![0.0, 0.4, 0.9, 0.3, 0.0];
        let old_plain = state(xo.clone(), u0.clone(), vec![]);
        let new_plain = advance_mesh(&old_plain.mesh, xn.clone(), dt);
        let bc = BoundaryKind::Dirichlet {
            left: 0.0,
            right: 0.0,
        };
        let (a, _) = implicit_step(&old_plain, &new_plain, dt, &bc, &[], 1e-10, 50, false).unwrap();

        let old_src = state(xo.clone(), u0, vec![2]);
        let new_src = advance_mesh(&old_src.mesh, xn.clone(), dt);
        let term = SourceTerm {
            node: 2,
            position: xn[2],
            velocity: (xn[2] - xo[2]) / dt,
            strength: StrengthLaw::Zero,
        };
        let (b, _) = implicit_step(&old_src, &new_src, dt, &bc, &[term], 1e-10, 50, false).unwrap();
        for (x, y) in a.values.iter().zip(&b.values) {
            assert_eq!(x.to_bits(), y.to_bits());
        }
    }

    #[test]
    fn tent_steady_state_matches_bisection_oracle() {
        // Stationary source at x = 0 with F = 1 + u^2 on [-h, h], ends held
        // at zero: the peak v solves 2 v / h^2 = (1 + v^2)/h. Independent
        // oracle: bisection on that scalar equation.
        let h = 0.5;
        let oracle = {
            let g = |v: f64| 2.0 * v / (h * h) - (1.0 + v * v) / h;
            let (mut lo, mut hi) = (0.0f64, 1.0f64);
            assert!(g(lo) < 0.0 && g(hi) > 0.0);
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if g(mid) < 0.0 {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            0.5 * (lo + hi)
        };

        let nodes = vec![-h, 0.0, h];
        let mut st = state(nodes.clone(), vec![0.0, 0.0, 0.0], vec![1]);
        let dt = 1e9; // enormous step: lands on the steady state
        let new_mesh = advance_mesh(&st.mesh, nodes, dt);
        let term = SourceTerm {
            node: 1,
            position: 0.0,
            velocity: 0.0,
            strength: StrengthLaw::OnePlusUSquared,
        };
        let bc = BoundaryKind::Dirichlet {
            left: 0.0,
            right: 0.0,
        };
        let (out, _) = implicit_step(&st, &new_mesh, dt, &bc, &[term.clone()], 1e-12, 50, false)
            .unwrap();
        assert!(
            (out.values[1] - oracle).abs() < 1e-8,
            "{} vs oracle {oracle}",
            out.values[1]
        );

        // The steady state is a fixed point: stepping from it stays put.
        st.values = out.values.clone();
        let new_mesh = advance_mesh(&st.mesh, st.mesh.nodes.clone(), 1e-3);
        let (again, iters) =
            implicit_step(&st, &new_mesh, 1e-3, &bc, &[term], 1e-8, 50, false).unwrap();
        assert!(iters <= 1);
        assert!((again.values[1] - out.values[1]).abs() < 1e-9);
    }

    #[test]
    fn newton_divergence_is_reported() {
        let nodes = vec![0.0, 0.5, 1.0];
        let old = state(nodes.clone(), vec![0.0, 0.5, 0.0], vec![]);
        let new_mesh = advance_mesh(&old.mesh, nodes, 1e-2);
        let err = implicit_step(
            &old,
            &new_mesh,
            1e-2,
            &BoundaryKind::Dirichlet {
                left: 0.0,
                right: 0.0,
            },
            &[],
            1e-12,
            0,
            false,
        )
        .unwrap_err();
        assert!(matches!(
            err,
            StepError::NewtonDiverged { iterations: 0, .. }
        ));
    }

    #[test]
    fn overflow_is_reported_as_nonfinite() {
        let nodes = vec![0.0, 0.5, 1.0];
        let old = state(nodes.clone(), vec![0.0, 1e200, 0.0], vec![1]);
        let new_mesh = advance_mesh(&old.mesh, nodes, 1e-2);
        let term = SourceTerm {
            node: 1,
            position: 0.5,
            velocity: 0.0,
            strength: StrengthLaw::OnePlusUSquared,
        };
        let err = implicit_step(
            &old,
            &new_mesh,
            1e-2,
            &BoundaryKind::Dirichlet {
                left: 0.0,
                right: 0.0,
            },
            &[term],
            1e-8,
            50,
            false,
        )
        .unwrap_err();
        assert!(matches!(err, StepError::NonFiniteSolution));
    }

    #[test]
    fn pure_diffusion_respects_the_maximum_principle() {
        let nodes: Vec<f64> = (0..=10).map(|k| k as f64 / 10.0).collect();
        let u0 = vec![0.0, 0.3, 0.9, 0.1, 0.7, 0.2, 0.8, 0.4, 0.6, 0.5, 0.0];
        let old = state(nodes.clone(), u0.clone(), vec![]);
        let mut prev = old;
        for _ in 0..20 {
            let new_mesh = advance_mesh(&prev.mesh, prev.mesh.nodes.clone(), 5e-3);
            let (next, _) = implicit_step(
                &prev,
                &new_mesh,
                5e-3,
                &BoundaryKind::Dirichlet {
                    left: 0.0,
                    right: 0.0,
                },
                &[],
                1e-12,
                50,
                false,
            )
            .unwrap();
            let old_max = prev.values.iter().cloned().fold(0.0f64, f64::max);
            let new_max = next.values.iter().cloned().fold(0.0f64, f64::max);
            let new_min = next.values.iter().cloned().fold(f64::INFINITY, f64::min);
            assert!(new_max <= old_max * (1.0 + 1e-12));
            assert!(new_min >= -1e-12);
            prev = next;
        }
    }

    /// Fill `w` and the old state with an exact outgoing mode and measure
    /// the absorbing-row residual. `sign` +1 picks the left-outgoing mode
    /// `exp(s0 t + sqrt(s0) x)`, -1 the right-outgoing one.
    fn boundary_row_residual(n: usize, h: f64, dt: f64, s0: f64, sign: f64) -> (f64, f64) {
        let mode = |t: f64, x: f64| (s0 * t + sign * s0.sqrt() * x).exp();
        let nodes: Vec<f64> = (0..=n).map(|k| k as f64 * h).collect();
        let old_vals: Vec<f64> = nodes.iter().map(|&x| mode(0.0, x)).collect();
        let ghosts = (mode(0.0, -h), mode(0.0, nodes[n] + h));
        let old = SolutionState {
            mesh: MeshState {
                time: 0.0,
                nodes: nodes.clone(),
                source_indices: vec![],
            },
            values: old_vals,
            ghosts: Some(ghosts),
        };
        let new_mesh = MeshState {
            time: dt,
            nodes,
            source_indices: vec![],
        };
        let mut w = Vec::with_capacity(n + 3);
        w.push(mode(dt, -h));
        for k in 0..=n {
            w.push(mode(dt, new_mesh.nodes[k]));
        }
        w.push(mode(dt, new_mesh.nodes[n] + h));
        let vel = vec![0.0; n + 1];
        let src_at = vec![None; n + 1];
        let (r, _) = absorbing_system(&w, &old, &new_mesh, dt, s0, &vel, &src_at, &[], false);
        // Normalize by the mode size at the relevant end.
        let left = (r[0] / w[1]).abs();
        let right = (r[n + 2] / w[n + 1]).abs();
        (left, right)
    }

    #[test]
    fn absorbing_rows_annihilate_outgoing_modes_to_discretization_order() {
        // dt tied to h^2 makes both truncation sources shrink by 4 per
        // refinement; require at least a factor 3 each level.
        let s0 = 1.0;
        let (l1, r1) = boundary_row_residual(8, 0.125, 0.125 * 0.125, s0, 1.0);
        let (l2, r2) = boundary_row_residual(16, 0.0625, 0.0625 * 0.0625, s0, 1.0);
        assert!(l2 < l1 / 3.0, "left row: {l1} -> {l2}");
        // The left-outgoing mode grows rightward; the right row is not
        // supposed to annihilate it.
        assert!(r2 > l2 * 10.0, "right row should not absorb this mode: {r1} -> {r2}");

        let (lw1, rw1) = boundary_row_residual(8, 0.125, 0.125 * 0.125, s0, -1.0);
        let (lw2, rw2) = boundary_row_residual(16, 0.0625, 0.0625 * 0.0625, s0, -1.0);
        assert!(rw2 < rw1 / 3.0, "right row: {rw1} -> {rw2}");
        assert!(lw2 > rw2 * 10.0, "left row should not absorb this mode: {lw1} -> {lw2}");
    }

    #[test]
    fn absorbing_step_keeps_zero_state_at_zero() {
        let nodes: Vec<f64> = (0..=6).map(|k| k as f64).collect();
        let old = SolutionState {
            mesh: MeshState {
                time: 0.0,
                nodes: nodes.clone(),
                source_indices: vec![],
            },
            values: vec![0.0; 7],
            ghosts: Some((0.0, 0.0)),
        };
        let new_mesh = MeshState {
            time: 1e-3,
            nodes,
            source_indices: vec![],
        };
        let (out, iters) = implicit_step(
            &old,
            &new_mesh,
            1e-3,
            &BoundaryKind::Absorbing { s0: 1.0 },
            &[],
            1e-10,
            50,
            false,
        )
        .unwrap();
        assert_eq!(iters, 0);
        assert!(out.values.iter().all(|&v| v == 0.0));
        assert_eq!(out.ghosts, Some((0.0, 0.0)));
    }

    #[test]
    fn absorbing_step_is_mirror_equivariant_bitwise() {
        // An asymmetric state and its reflection must produce exactly
        // reflected steps: ghost handling, boundary rows, elimination, and
        // the inner solve all mirror.
        let xo = vec![-3.0, -1.7, -0.4, 0.6, 1.9, 3.0];
        let xn = vec![-3.0, -1.65, -0.38, 0.64, 1.88, 3.0];
        let u0 = vec![0.3, 1.1, 2.4, 0.9, 0.2, 0.05];
        let ghosts = (0.17, 0.02);
        let dt = 1e-2;
        let n = xo.len() - 1;

        let old = SolutionState {
            mesh: MeshState {
                time: 0.0,
                nodes: xo.clone(),
                source_indices: vec![2],
            },
            values: u0.clone(),
            ghosts: Some(ghosts),
        };
        let new_mesh = MeshState {
            time: dt,
            nodes: xn.clone(),
            source_indices: vec![2],
        };
        let term = SourceTerm {
            node: 2,
            position: xn[2],
            velocity: 0.7,
            strength: StrengthLaw::OnePlusUSquared,
        };
        let bc = BoundaryKind::Absorbing { s0: 1.0 };
        let (a, it_a) = implicit_step(&old, &new_mesh, dt, &bc, &[term], 1e-9, 50, false).unwrap();

        let mirror = |v: &[f64]| -> Vec<f64> { v.iter().rev().map(|&x| -x).collect() };
        let rev = |v: &[f64]| -> Vec<f64> { v.iter().rev().cloned().collect() };
        let old_m = SolutionState {
            mesh: MeshState {
                time: 0.0,
                nodes: mirror(&xo),
                source_indices: vec![n - 2],
            },
            values: rev(&u0),
            ghosts: Some((ghosts.1, ghosts.0)),
        };
        let new_mesh_m = MeshState {
            time: dt,
            nodes: mirror(&xn),
            source_indices: vec![n - 2],
        };
        let term_m = SourceTerm {
            node: n - 2,
            position: -xn[2],
            velocity: -0.7,
            strength: StrengthLaw::OnePlusUSquared,
        };
        let (b, it_b) =
            implicit_step(&old_m, &new_mesh_m, dt, &bc, &[term_m], 1e-9, 50, false).unwrap();

        assert_eq!(it_a, it_b);
        for k in 0..=n {
            assert_eq!(
                a.values[k].to_bits(),
                b.values[n - k].to_bits(),
                "value at node {k}"
            );
        }
        let (bl, br) = b.ghosts.unwrap();
        let (al, ar) = a.ghosts.unwrap();
        assert_eq!(al.to_bits(), br.to_bits());
        assert_eq!(ar.to_bits(), bl.to_bits());
    }

    #[test]
    fn strict_alternate_right_row_solves_its_own_system() {
        // The strict variant couples the right row to u_0. Verify against a
        // dense solve of the full (n+3)-unknown linear system assembled from
        // the same residual/Jacobian evaluation.
        let xo = vec![0.0, 0.8, 1.7, 2.4, 3.3, 4.0];
        let xn = vec![0.0, 0.85, 1.72, 2.38, 3.31, 4.0];
        let u0 = vec![1.2, 0.9, 0.5, 0.8, 0.3, 0.1];
        let dt = 5e-3;
        let n = xo.len() - 1;
        let old = SolutionState {
            mesh: MeshState {
                time: 0.0,
                nodes: xo,
                source_indices: vec![],
            },
            values: u0,
            ghosts: Some((1.3, 0.05)),
        };
        let new_mesh = MeshState {
            time: dt,
            nodes: xn,
            source_indices: vec![],
        };
        let bc = BoundaryKind::Absorbing { s0: 2.0 };
        let (strict, iters) =
            implicit_step(&old, &new_mesh, dt, &bc, &[], 1e-11, 50, true).unwrap();
        assert_eq!(iters, 1, "linear problem, one update");

        // Dense oracle: assemble the strict Jacobian explicitly.
        let w0: Vec<f64> = {
            let mut w = Vec::new();
            w.push(1.3);
            w.extend_from_slice(&old.values);
            w.push(0.05);
            w
        };
        let vel: Vec<f64> = (0..=n)
            .map(|j| (new_mesh.nodes[j] - old.mesh.nodes[j]) / dt)
            .collect();
        let src_at = vec![None; n + 1];
        let (r, jac) = absorbing_system(&w0, &old, &new_mesh, dt, 2.0, &vel, &src_at, &[], true);
        let nw = n + 3;
        let mut a = vec![vec![0.0; nw]; nw];
        a[0][0] = jac.al[0];
        a[0][1] = jac.al[1];
        a[0][2] = jac.al[2];
        for k in 1..nw - 1 {
            a[k][k - 1] = jac.lower[k];
            a[k][k] = jac.diag[k];
            a[k][k + 1] = jac.upper[k];
        }
        a[nw - 1][nw - 3] = jac.ar[0];
        // Standard row carries +E on u_N; strict moves it to u_0 (col 1).
        let e = 2.0f64 * 2.0f64.sqrt();
        a[nw - 1][nw - 2] = jac.ar[1] - e;
        a[nw - 1][1] += e;
        a[nw - 1][nw - 1] = jac.ar[2];
        let neg_r: Vec<f64> = r.iter().map(|v| -v).collect();
        let delta = dense::solve(a, neg_r).unwrap();
        for j in 0..=n {
            let expect = w0[j + 1] + delta[j + 1];
            assert!(
                (strict.values[j] - expect).abs() < 1e-10,
                "node {j}: {} vs {expect}",
                strict.values[j]
            );
        }

        // And it must differ from the standard variant.
        let (std_out, _) = implicit_step(&old, &new_mesh, dt, &bc, &[], 1e-11, 50, false).unwrap();
        let diff: f64 = strict
            .values
            .iter()
            .zip(&std_out.values)
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max);
        assert!(diff > 1e-12, "variants should not coincide, diff {diff}");
    }
}
