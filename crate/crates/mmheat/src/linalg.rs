//! Direct solvers for the small structured systems the stepper produces.
//!
//! `solve_tridiagonal` uses a twisted (two-sided) elimination: forward from
//! the first row and backward from the last, meeting in the middle. For
//! diagonally dominant systems this is as stable as the usual one-sided
//! sweep, and it has a property the one-sided sweep lacks: reversing the
//! system (rows and columns flipped, sub/super diagonals swapped) reverses
//! the solution *bitwise*. Mirror-symmetric problems therefore stay
//! mirror-symmetric to the last bit, which the symmetric two-source runs
//! rely on — near blow-up any seed asymmetry is amplified by orders of
//! magnitude, so "almost symmetric" arithmetic is not good enough.
//!
//! `solve_banded` is a conventional banded LU with partial pivoting for the
//! wider systems produced by absorbing boundary rows (bandwidth 2).

use crate::error::LinAlgError;

const PIVOT_MIN: f64 = 1e-300;

/// Solve a tridiagonal system. `lower[0]` and `upper[n-1]` are ignored.
///
/// No pivoting is performed; callers supply diagonally dominant systems
/// (mesh equation, heat-step Jacobian). A pivot magnitude below 1e-300
/// reports `SingularPivot`.
pub fn solve_tridiagonal(
    lower: &[f64],
    diag: &[f64],
    upper: &[f64],
    rhs: &[f64],
) -> Result<Vec<f64>, LinAlgError> {
    let n = diag.len();
    if lower.len() != n || upper.len() != n || rhs.len() != n {
        return Err(LinAlgError::DimensionMismatch("tridiagonal band lengths"));
    }
    match n {
        0 => return Ok(Vec::new()),
        1 => {
            check_pivot(diag[0], 0)?;
            return Ok(vec![rhs[0] / diag[0]]);
        }
        _ => {}
    }

    // Meet rows: a single row m for odd n, the adjacent pair (k, k+1) for even n.
    let (meet_lo, meet_hi) = if n % 2 == 1 {
        ((n - 1) / 2, (n - 1) / 2)
    } else {
        (n / 2 - 1, n / 2)
    };

    // Forward sweep over rows 0..meet_lo produces x_i = g[i] - w[i] * x_{i+1}.
    let mut w = vec![0.0; n];
    let mut g = vec![0.0; n];
    if meet_lo > 0 {
        check_pivot(diag[0], 0)?;
        w[0] = upper[0] / diag[0];
        g[0] = rhs[0] / diag[0];
        for i in 1..meet_lo {
            let den = diag[i] - lower[i] * w[i - 1];
            check_pivot(den, i)?;
            w[i] = upper[i] / den;
            g[i] = (rhs[i] - lower[i] * g[i - 1]) / den;
        }
    }

    // Backward sweep over rows meet_hi+1..n produces x_i = gg[i] - ww[i] * x_{i-1}.
    let mut ww = vec![0.0; n];
    let mut gg = vec![0.0; n];
    if meet_hi < n - 1 {
        check_pivot(diag[n - 1], n - 1)?;
        ww[n - 1] = lower[n - 1] / diag[n - 1];
        gg[n - 1] = rhs[n - 1] / diag[n - 1];
        for i in (meet_hi + 1..n - 1).rev() {
            let den = diag[i] - upper[i] * ww[i + 1];
            check_pivot(den, i)?;
            ww[i] = lower[i] / den;
            gg[i] = (rhs[i] - upper[i] * gg[i + 1]) / den;
        }
    }

    let mut x = vec![0.0; n];
    if meet_lo == meet_hi {
        // Odd n >= 3: both partial factorizations feed the central row. The
        // two contributions are added as a single commutative pair so the
        // expression survives reversal bit-for-bit.
        let m = meet_lo;
        let den = diag[m] - (lower[m] * w[m - 1] + upper[m] * ww[m + 1]);
        check_pivot(den, m)?;
        x[m] = (rhs[m] - (lower[m] * g[m - 1] + upper[m] * gg[m + 1])) / den;
    } else {
        // Even n: eliminate into the central 2x2 block and solve it by Cramer's
        // rule, whose products commute under reversal.
        let (k, k2) = (meet_lo, meet_hi);
        let bk = if k > 0 {
            diag[k] - lower[k] * w[k - 1]
        } else {
            diag[k]
        };
        let rk = if k > 0 {
            rhs[k] - lower[k] * g[k - 1]
        } else {
            rhs[k]
        };
        let bk2 = if k2 < n - 1 {
            diag[k2] - upper[k2] * ww[k2 + 1]
        } else {
            diag[k2]
        };
        let rk2 = if k2 < n - 1 {
            rhs[k2] - upper[k2] * gg[k2 + 1]
        } else {
            rhs[k2]
        };
        let det = bk * bk2 - upper[k] * lower[k2];
        check_pivot(det, k)?;
        x[k] = (rk * bk2 - upper[k] * rk2) / det;
        x[k2] = (bk * rk2 - rk * lower[k2]) / det;
    }

    for i in (0..meet_lo).rev() {
        x[i] = g[i] - w[i] * x[i + 1];
    }
    for i in meet_hi + 1..n {
        x[i] = gg[i] - ww[i] * x[i - 1];
    }
    Ok(x)
}

fn check_pivot(p: f64, row: usize) -> Result<(), LinAlgError> {
    if p.abs() < PIVOT_MIN || !p.is_finite() {
        Err(LinAlgError::SingularPivot { row, pivot: p })
    } else {
        Ok(())
    }
}

/// Banded matrix with `p` sub- and super-diagonals, stored by diagonals.
///
/// `bands[d]` holds the diagonal at offset `d as isize - p as isize`
/// (so `bands[0]` is the lowest sub-diagonal and `bands[2p]` the highest
/// super-diagonal); diagonal at offset `o` has length `n - |o|`.
#[derive(Debug, Clone)]
pub struct BandMatrix {
    pub n: usize,
    pub p: usize,
    pub bands: Vec<Vec<f64>>,
}

impl BandMatrix {
    pub fn zero(n: usize, p: usize) -> Self {
        let bands = (0..2 * p + 1)
            .map(|d| {
                let off = d as isize - p as isize;
                vec![0.0; n - off.unsigned_abs()]
            })
            .collect();
        BandMatrix { n, p, bands }
    }

    /// Entry (row, col); zero outside the band.
    pub fn get(&self, row: usize, col: usize) -> f64 {
        let off = col as isize - row as isize;
        if off.unsigned_abs() > self.p {
            return 0.0;
        }
        let d = (off + self.p as isize) as usize;
        let idx = if off >= 0 { row } else { col };
        self.bands[d][idx]
    }

    pub fn set(&mut self, row: usize, col: usize, value: f64) {
        let off = col as isize - row as isize;
        assert!(
            off.unsigned_abs() <= self.p,
            "entry ({row},{col}) outside bandwidth {}",
            self.p
        );
        let d = (off + self.p as isize) as usize;
        let idx = if off >= 0 { row } else { col };
        self.bands[d][idx] = value;
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        for i in 0..self.n {
            let lo = i.saturating_sub(self.p);
            let hi = (i + self.p).min(self.n - 1);
            let mut acc = 0.0;
            for j in lo..=hi {
                acc += self.get(i, j) * x[j];
            }
            y[i] = acc;
        }
        y
    }
}

/// Solve a banded system by LU with partial pivoting within the band.
///
/// Pivoting widens the active row window to `3p + 1` entries; each row
/// carries its own column window so row swaps stay aligned.
pub fn solve_banded(matrix: &BandMatrix, rhs: &[f64]) -> Result<Vec<f64>, LinAlgError> {
    let n = matrix.n;
    let p = matrix.p;
    if rhs.len() != n {
        return Err(LinAlgError::DimensionMismatch("banded rhs length"));
    }
    if n == 0 {
        return Ok(Vec::new());
    }
    let width = 3 * p + 1;

    // Row i stores columns start[i] ..= start[i] + width - 1 (clipped to n).
    let mut start: Vec<usize> = (0..n).map(|i| i.saturating_sub(p)).collect();
    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(n);
    for i in 0..n {
        let mut r = vec![0.0; width];
        let lo = i.saturating_sub(p);
        let hi = (i + p).min(n - 1);
        for j in lo..=hi {
            r[j - start[i]] = matrix.get(i, j);
        }
        rows.push(r);
    }
    let mut x = rhs.to_vec();

    for k in 0..n {
        // Partial pivot among rows k..=k+p.
        let last = (k + p).min(n - 1);
        let mut best = k;
        let mut best_mag = entry(&rows, &start, k, k).abs();
        for r in k + 1..=last {
            let mag = entry(&rows, &start, r, k).abs();
            if mag > best_mag {
                best = r;
                best_mag = mag;
            }
        }
        if best_mag < PIVOT_MIN || !best_mag.is_finite() {
            return Err(LinAlgError::SingularPivot {
                row: k,
                pivot: best_mag,
            });
        }
        if best != k {
            rows.swap(k, best);
            start.swap(k, best);
            x.swap(k, best);
        }
        let pivot = entry(&rows, &start, k, k);
        let col_hi = (start[k] + width - 1).min(n - 1);
        for r in k + 1..=last {
            let f = entry(&rows, &start, r, k) / pivot;
            if f == 0.0 {
                continue;
            }
            for j in k..=col_hi {
                let v = entry(&rows, &start, k, j);
                if v != 0.0 {
                    let cur = entry(&rows, &start, r, j);
                    set_entry(&mut rows, &start, r, j, cur - f * v);
                }
            }
            set_entry(&mut rows, &start, r, k, 0.0);
            x[r] -= f * x[k];
        }
    }

    for k in (0..n).rev() {
        let col_hi = (start[k] + width - 1).min(n - 1);
        let mut acc = x[k];
        for j in k + 1..=col_hi {
            acc -= entry(&rows, &start, k, j) * x[j];
        }
        x[k] = acc / entry(&rows, &start, k, k);
    }
    Ok(x)
}

fn entry(rows: &[Vec<f64>], start: &[usize], r: usize, col: usize) -> f64 {
    let s = start[r];
    if col < s || col >= s + rows[r].len() {
        0.0
    } else {
        rows[r][col - s]
    }
}

fn set_entry(rows: &mut [Vec<f64>], start: &[usize], r: usize, col: usize, value: f64) {
    let s = start[r];
    assert!(col >= s && col < s + rows[r].len(), "fill outside row window");
    rows[r][col - s] = value;
}

/// Dense Gaussian elimination with partial pivoting.
///
/// Reference path: slow, obviously correct, and entirely independent of the
/// structured solvers above. Tests solve the same systems both ways.
pub mod dense {
    use super::PIVOT_MIN;
    use crate::error::LinAlgError;

    /// `a` is row-major n x n, consumed by the elimination.
    pub fn solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Result<Vec<f64>, LinAlgError> {
        let n = b.len();
        assert!(a.len() == n && a.iter().all(|r| r.len() == n));
        for k in 0..n {
            let mut best = k;
            for r in k + 1..n {
                if a[r][k].abs() > a[best][k].abs() {
                    best = r;
                }
            }
            if a[best][k].abs() < PIVOT_MIN {
                return Err(LinAlgError::SingularPivot {
                    row: k,
                    pivot: a[best][k],
                });
            }
            a.swap(k, best);
            b.swap(k, best);
            for r in k + 1..n {
                let f = a[r][k] / a[k][k];
                if f == 0.0 {
                    continue;
                }
                for c in k..n {
                    a[r][c] -= f * a[k][c];
                }
                b[r] -= f * b[k];
            }
        }
        for k in (0..n).rev() {
            let mut acc = b[k];
            for c in k + 1..n {
                acc -= a[k][c] * b[c];
            }
            b[k] = acc / a[k][k];
        }
        Ok(b)
    }
}
