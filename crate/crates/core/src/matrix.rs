//! Two-player zero-sum matrix games and their minimax solution.
//!
//! The row player maximizes. Values are computed with the classical
//! maximin linear program: after shifting every payoff to be at least one,
//! the column player's problem is `max 1ᵀy s.t. A y ≤ 1, y ≥ 0`, whose dual
//! gives the row player's strategy. The LP is solved with a dense tableau
//! simplex using Bland's rule, which is plenty for the ≤ 10×10 matrices
//! that appear in practice here.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const PIVOT_EPS: f64 = 1e-12;

/// Dense row-major payoff matrix; rows belong to the maximizer.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatrixGame {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl MatrixGame {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::InvalidArgument("matrix game needs at least one row and column".into()));
        }
        if data.len() != rows * cols {
            return Err(Error::InvalidArgument(format!("{} entries for a {rows}x{cols} matrix", data.len())));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::InvalidArgument("ragged payoff rows".into()));
        }
        Self::new(rows.len(), cols, rows.concat())
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self::new(rows, cols, data)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn transpose(&self) -> Self {
        let mut data = Vec::with_capacity(self.data.len());
        for j in 0..self.cols {
            for i in 0..self.rows {
                data.push(self.get(i, j));
            }
        }
        Self { rows: self.cols, cols: self.rows, data }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self { rows: self.rows, cols: self.cols, data: self.data.iter().map(|&x| f(x)).collect() }
    }

    /// `M y` for a column mixed strategy `y`.
    pub fn mul_col(&self, y: &[f64]) -> Vec<f64> {
        (0..self.rows).map(|i| dot(self.row(i), y)).collect()
    }

    /// `xᵀ M` for a row mixed strategy `x`.
    pub fn mul_row(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.cols];
        for (i, &xi) in x.iter().enumerate() {
            for (o, &m) in out.iter_mut().zip(self.row(i)) {
                *o += xi * m;
            }
        }
        out
    }

    /// `xᵀ M y`.
    pub fn bilinear(&self, x: &[f64], y: &[f64]) -> f64 {
        dot(x, &self.mul_col(y))
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    /// Duality gap of a strategy pair: best row reply to `col` minus the
    /// column player's best reply to `row`. Non-negative up to rounding.
    pub fn duality_gap(&self, row: &[f64], col: &[f64]) -> f64 {
        let upper = self.mul_col(col).into_iter().fold(f64::NEG_INFINITY, f64::max);
        let lower = self.mul_row(row).into_iter().fold(f64::INFINITY, f64::min);
        upper - lower
    }
}

/// Minimax solution of a matrix game.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatrixSolution {
    pub value: f64,
    pub row_strategy: Vec<f64>,
    pub col_strategy: Vec<f64>,
    pub gap: f64,
}

/// Solves the matrix game to within `tol` (duality gap of the returned
/// strategies).
pub fn matrix_value(game: &MatrixGame, tol: f64) -> Result<MatrixSolution> {
    if !(tol > 0.0) {
        return Err(Error::InvalidArgument(format!("tolerance {tol} must be positive")));
    }
    if let Some(k) = game.data.iter().position(|x| !x.is_finite()) {
        return Err(Error::NonFinitePayoff { row: k / game.cols, col: k % game.cols });
    }
    let shift = game.max_abs() + 1.0;
    let shifted = game.map(|x| x + shift);
    let (y, x, total) = simplex_max_unit(&shifted)?;

    let row_strategy = normalize(x);
    let col_strategy = normalize(y);
    let value = 1.0 / total - shift;
    let gap = game.duality_gap(&row_strategy, &col_strategy);
    if gap > tol {
        return Err(Error::Lp(format!("duality gap {gap:e} exceeds tolerance {tol:e}")));
    }
    Ok(MatrixSolution { value, row_strategy, col_strategy, gap })
}

/// `max 1ᵀy s.t. A y ≤ 1, y ≥ 0` for a strictly positive `A`.
/// Returns `(y, dual x, objective)`.
fn simplex_max_unit(a: &MatrixGame) -> Result<(Vec<f64>, Vec<f64>, f64)> {
    let (m, n) = (a.rows, a.cols);
    let width = n + m + 1;
    let rhs = n + m;
    // rows 0..m are constraints, row m is the reduced-cost row
    let mut t = vec![0.0; (m + 1) * width];
    for i in 0..m {
        t[i * width..i * width + n].copy_from_slice(a.row(i));
        t[i * width + n + i] = 1.0;
        t[i * width + rhs] = 1.0;
    }
    for j in 0..n {
        t[m * width + j] = 1.0;
    }
    let mut basis: Vec<usize> = (n..n + m).collect();

    // Bland's rule cycles are impossible, but bound the loop anyway.
    let max_iter = 50 * (n + m) * (n + m) + 100;
    let mut iter = 0;
    while let Some(enter) = (0..n + m).find(|&j| t[m * width + j] > PIVOT_EPS) {
        let mut leave: Option<usize> = None;
        let mut best = f64::INFINITY;
        for i in 0..m {
            let aij = t[i * width + enter];
            if aij > PIVOT_EPS {
                let ratio = t[i * width + rhs] / aij;
                let better = match leave {
                    None => true,
                    Some(l) => ratio < best || (ratio == best && basis[i] < basis[l]),
                };
                if better {
                    best = ratio;
                    leave = Some(i);
                }
            }
        }
        // A is positive, so the LP is bounded.
        let r = leave.ok_or_else(|| Error::Lp("unbounded column".into()))?;

        let pivot = t[r * width + enter];
        for k in 0..width {
            t[r * width + k] /= pivot;
        }
        for i in 0..=m {
            if i == r {
                continue;
            }
            let f = t[i * width + enter];
            if f != 0.0 {
                for k in 0..width {
                    t[i * width + k] -= f * t[r * width + k];
                }
            }
        }
        basis[r] = enter;

        iter += 1;
        if iter > max_iter {
            return Err(Error::Lp(format!("no convergence after {max_iter} pivots")));
        }
    }

    let mut y = vec![0.0; n];
    for (i, &b) in basis.iter().enumerate() {
        if b < n {
            y[b] = t[i * width + rhs];
        }
    }
    let x: Vec<f64> = (0..m).map(|i| -t[m * width + n + i]).collect();
    let total: f64 = y.iter().sum();
    if !(total > 0.0) {
        return Err(Error::Lp("degenerate optimum".into()));
    }
    Ok((y, x, total))
}

fn normalize(mut v: Vec<f64>) -> Vec<f64> {
    v.iter_mut().for_each(|x| *x = x.max(0.0));
    let s: f64 = v.iter().sum();
    v.iter_mut().for_each(|x| *x /= s);
    v
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
