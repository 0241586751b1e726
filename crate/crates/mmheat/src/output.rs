//! Plain-text data files and the JSON run summary.
//!
//! Everything written here is deterministic: floats go out in exponential
//! form with enough digits to round-trip, and no timing or host information
//! ever lands in a file, so identical configs produce byte-identical output.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::driver::ConvergenceRow;
use crate::model::{RunReport, Snapshot, Termination, TrajectoryRow};

fn open(dir: &Path, name: &str) -> io::Result<(PathBuf, io::BufWriter<fs::File>)> {
    fs::create_dir_all(dir)?;
    let path = dir.join(name);
    let file = fs::File::create(&path)?;
    Ok((path, io::BufWriter::new(file)))
}

fn write_rows(
    dir: &Path,
    name: &str,
    rows: &[TrajectoryRow],
    check_monotone: bool,
) -> io::Result<PathBuf> {
    let (path, mut out) = open(dir, name)?;
    for row in rows {
        if check_monotone && !row.values.windows(2).all(|w| w[0] < w[1]) {
            return Err(io::Error::new(
                io::ErrorKind::InvalidData,
                format!("mesh row at t = {} is not strictly increasing", row.time),
            ));
        }
        write!(out, "{:.16e}", row.time)?;
        for v in &row.values {
            write!(out, " {v:.16e}")?;
        }
        writeln!(out)?;
    }
    out.flush()?;
    Ok(path)
}

/// Rows `t_n x_0 .. x_N`; every row is re-checked for strict monotonicity.
pub fn write_mesh_trajectory(dir: &Path, rows: &[TrajectoryRow]) -> io::Result<PathBuf> {
    write_rows(dir, "mesh_trajectory.dat", rows, true)
}

/// Rows `t_n alpha_0 .. alpha_{q-1}`.
pub fn write_source_trajectory(dir: &Path, rows: &[TrajectoryRow]) -> io::Result<PathBuf> {
    write_rows(dir, "source_trajectory.dat", rows, false)
}

/// One file per snapshot with columns `x_j u_j xi_j`, where `xi_j = j / N`
/// is the computational coordinate of the node.
pub fn write_snapshots(dir: &Path, snapshots: &[Snapshot]) -> io::Result<Vec<PathBuf>> {
    let mut paths = Vec::with_capacity(snapshots.len());
    for snap in snapshots {
        let (path, mut out) = open(dir, &format!("snapshot_t{}.dat", snap.requested_time))?;
        let n = snap.state.mesh.n();
        for (j, (&x, &u)) in snap
            .state
            .mesh
            .nodes
            .iter()
            .zip(&snap.state.values)
            .enumerate()
        {
            let xi = j as f64 / n as f64;
            writeln!(out, "{x:.16e} {u:.16e} {xi:.16e}")?;
        }
        out.flush()?;
        paths.push(path);
    }
    Ok(paths)
}

#[derive(Serialize)]
struct NewtonSummary {
    solves: usize,
    total_iterations: usize,
    max_iterations: usize,
}

#[derive(Serialize)]
struct BlowUpSummary {
    time: f64,
    peak: f64,
    locations: Vec<f64>,
    node_indices: Vec<usize>,
    source_indices: Vec<usize>,
}

#[derive(Serialize)]
struct ErrorsSummary {
    sup_error: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    interface_error: Option<f64>,
}

#[derive(Serialize)]
struct SourcesSummary {
    positions: Vec<f64>,
    velocities: Vec<f64>,
}

#[derive(Serialize)]
struct Summary<'a> {
    example: &'a str,
    termination: &'static str,
    final_time: f64,
    steps: usize,
    rejected_steps: usize,
    max_u: f64,
    newton: NewtonSummary,
    sources: SourcesSummary,
    #[serde(skip_serializing_if = "Option::is_none")]
    blow_up: Option<BlowUpSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    errors: Option<ErrorsSummary>,
    /// Decimated source path, rows `[t, alpha_0, ..]`.
    alpha_trajectory: Vec<Vec<f64>>,
}

/// Write `summary.json`. Wall-clock time is deliberately left out so that
/// reruns of the same config are byte-identical.
pub fn write_summary(dir: &Path, example: &str, report: &RunReport) -> io::Result<PathBuf> {
    let summary = Summary {
        example,
        termination: match report.termination {
            Termination::FinalTime => "final_time",
            Termination::BlowUp => "blow_up",
        },
        final_time: report.final_state.mesh.time,
        steps: report.steps,
        rejected_steps: report.rejected_steps,
        max_u: report.max_u_over_run,
        newton: NewtonSummary {
            solves: report.newton.solves,
            total_iterations: report.newton.total_iterations,
            max_iterations: report.newton.max_iterations,
        },
        sources: SourcesSummary {
            positions: report.final_sources.positions.clone(),
            velocities: report.final_sources.velocities.clone(),
        },
        blow_up: report.blow_up.as_ref().map(|b| BlowUpSummary {
            time: b.time,
            peak: b.peak,
            locations: b.locations.clone(),
            node_indices: b.node_indices.clone(),
            source_indices: b.source_indices.clone(),
        }),
        errors: report.errors.map(|e| ErrorsSummary {
            sup_error: e.sup_error,
            interface_error: e.interface_error,
        }),
        alpha_trajectory: report
            .source_trajectory
            .iter()
            .map(|row| {
                let mut r = Vec::with_capacity(row.values.len() + 1);
                r.push(row.time);
                r.extend_from_slice(&row.values);
                r
            })
            .collect(),
    };
    let (path, mut out) = open(dir, "summary.json")?;
    serde_json::to_writer_pretty(&mut out, &summary)?;
    writeln!(out)?;
    out.flush()?;
    Ok(path)
}

fn ratio_cell(r: Option<f64>) -> String {
    match r {
        Some(v) => format!("{v:.5}"),
        None => "-".to_string(),
    }
}

/// Text table of the refinement study, one line per `(N, L)` rung.
pub fn write_convergence(dir: &Path, rows: &[ConvergenceRow]) -> io::Result<PathBuf> {
    let (path, mut out) = open(dir, "convergence.dat")?;
    writeln!(out, "{}", convergence_table(rows))?;
    out.flush()?;
    Ok(path)
}

/// The same table as a string, for printing to the terminal.
pub fn convergence_table(rows: &[ConvergenceRow]) -> String {
    let mut s = String::new();
    s.push_str(&format!(
        "# {:>4} {:>6} {:>13} {:>8} {:>13} {:>8} {:>13} {:>8}\n",
        "N", "L", "E_exact", "ratio", "E_pc", "ratio", "E_alpha", "ratio"
    ));
    for r in rows {
        s.push_str(&format!(
            "  {:>4} {:>6} {:>13.6e} {:>8} {:>13.6e} {:>8} {:>13.6e} {:>8}\n",
            r.n,
            r.l,
            r.e_exact,
            ratio_cell(r.ratio_exact),
            r.e_pc,
            ratio_cell(r.ratio_pc),
            r.e_alpha,
            ratio_cell(r.ratio_alpha),
        ));
    }
    s.pop();
    s
}
