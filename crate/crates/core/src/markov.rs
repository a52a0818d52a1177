//! Dense finite Markov chains and their stationary distributions.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};

/// Numerical tolerances used by [`solve_stationary_with`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SolverOptions {
    /// Allowed deviation of a row sum from 1.
    pub row_tolerance: f64,
    /// Largest acceptable `max |πP - π|`.
    pub residual_tolerance: f64,
    /// Power iteration stops when successive iterates differ by less than this.
    pub power_tolerance: f64,
    pub max_iterations: usize,
    /// Relative pivot size below which the direct system counts as singular.
    pub pivot_tolerance: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            row_tolerance: 1e-10,
            residual_tolerance: 1e-9,
            power_tolerance: 1e-12,
            max_iterations: 1_000_000,
            pivot_tolerance: 1e-12,
        }
    }
}

/// Row-stochastic matrix; row `i` holds the transition probabilities out of
/// state `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionMatrix {
    entries: DMatrix<f64>,
    labels: Vec<String>,
}

impl TransitionMatrix {
    /// Builds a matrix and checks every row with the default tolerance.
    pub fn new(entries: DMatrix<f64>, labels: Vec<String>) -> Result<Self> {
        let matrix = Self::from_raw(entries, labels)?;
        let bad = matrix.validate_rows_with(SolverOptions::default().row_tolerance);
        if bad.is_empty() {
            Ok(matrix)
        } else {
            Err(not_stochastic(bad))
        }
    }

    /// Builds a matrix without the row-sum check. Used for transcriptions
    /// that are known to be defective.
    pub fn from_raw(entries: DMatrix<f64>, labels: Vec<String>) -> Result<Self> {
        if !entries.is_square() {
            return Err(Error::Domain(format!(
                "transition matrix must be square, got {}x{}",
                entries.nrows(),
                entries.ncols()
            )));
        }
        if labels.len() != entries.nrows() {
            return Err(Error::Domain(format!(
                "{} labels for {} states",
                labels.len(),
                entries.nrows()
            )));
        }
        Ok(Self { entries, labels })
    }

    pub fn dimension(&self) -> usize {
        self.entries.nrows()
    }

    pub fn get(&self, from: usize, to: usize) -> f64 {
        self.entries[(from, to)]
    }

    pub fn entries(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn row_sum(&self, row: usize) -> f64 {
        self.entries.row(row).iter().sum()
    }

    /// Rows whose sum deviates from 1 by more than `tolerance`, paired with
    /// the absolute deviation. Rows containing entries outside `[0, 1]` are
    /// reported as well.
    pub fn validate_rows_with(&self, tolerance: f64) -> Vec<(usize, f64)> {
        (0..self.dimension())
            .filter_map(|row| {
                let deviation = (self.row_sum(row) - 1.0).abs();
                let in_range = self
                    .entries
                    .row(row)
                    .iter()
                    .all(|&p| (-tolerance..=1.0 + tolerance).contains(&p));
                (deviation > tolerance || !in_range || deviation.is_nan())
                    .then_some((row, deviation))
            })
            .collect()
    }

    /// `max |x P - x|` for a row vector `x`.
    pub fn residual(&self, x: &[f64]) -> f64 {
        let n = self.dimension();
        (0..n)
            .map(|j| {
                let flow: f64 = (0..n).map(|i| x[i] * self.entries[(i, j)]).sum();
                (flow - x[j]).abs()
            })
            .fold(0.0, f64::max)
    }

    /// Writes the non-zero entries as `row,col,probability` CSV records.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(writer);
        out.write_record(["row", "col", "from", "to", "probability"])?;
        for i in 0..self.dimension() {
            for j in 0..self.dimension() {
                let p = self.entries[(i, j)];
                if p != 0.0 {
                    out.write_record([
                        i.to_string(),
                        j.to_string(),
                        self.labels[i].clone(),
                        self.labels[j].clone(),
                        format!("{p:.17e}"),
                    ])?;
                }
            }
        }
        out.flush()?;
        Ok(())
    }
}

fn not_stochastic(rows: Vec<(usize, f64)>) -> Error {
    let worst = rows.iter().map(|r| r.1).fold(0.0, f64::max);
    Error::NotStochastic { rows, worst }
}

/// Rows deviating from 1 by more than `1e-10`.
pub fn validate_rows(matrix: &TransitionMatrix) -> Vec<(usize, f64)> {
    matrix.validate_rows_with(SolverOptions::default().row_tolerance)
}

/// Which route produced a stationary distribution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum SolveMethod {
    Direct,
    PowerIteration { iterations: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StationaryDist {
    pub probabilities: Vec<f64>,
    /// `max |πP - π|`.
    pub residual: f64,
    pub method: SolveMethod,
}

impl StationaryDist {
    pub fn len(&self) -> usize {
        self.probabilities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probabilities.is_empty()
    }

    /// `Σ_i f(i) π_i`.
    pub fn expect(&self, f: impl Fn(usize) -> f64) -> f64 {
        self.probabilities
            .iter()
            .enumerate()
            .map(|(i, &p)| p * f(i))
            .sum()
    }
}

impl std::ops::Index<usize> for StationaryDist {
    type Output = f64;

    fn index(&self, i: usize) -> &f64 {
        &self.probabilities[i]
    }
}

pub fn solve_stationary(matrix: &TransitionMatrix) -> Result<StationaryDist> {
    solve_stationary_with(matrix, &SolverOptions::default())
}

/// Stationary distribution of a row-stochastic matrix.
///
/// The balance equations `π(P - I) = 0` with one equation swapped for
/// `Σπ = 1` are solved by LU with partial pivoting. When that system is
/// numerically singular (several closed classes) the canonical answer is the
/// limit of the chain started in state 0, computed by power iteration.
pub fn solve_stationary_with(
    matrix: &TransitionMatrix,
    opts: &SolverOptions,
) -> Result<StationaryDist> {
    let bad = matrix.validate_rows_with(opts.row_tolerance);
    if !bad.is_empty() {
        return Err(not_stochastic(bad));
    }
    if let Some(direct) = solve_direct(matrix, opts) {
        if direct.residual < opts.residual_tolerance {
            return Ok(direct);
        }
    }
    solve_power_with(matrix, opts)
}

fn solve_direct(matrix: &TransitionMatrix, opts: &SolverOptions) -> Option<StationaryDist> {
    let n = matrix.dimension();
    if n == 0 {
        return None;
    }
    let mut system = matrix.entries().transpose();
    for i in 0..n {
        system[(i, i)] -= 1.0;
    }
    for j in 0..n {
        system[(n - 1, j)] = 1.0;
    }
    let mut rhs = DVector::zeros(n);
    rhs[n - 1] = 1.0;

    let scale = system.amax().max(1.0);
    let lu = system.lu();
    let min_pivot = lu
        .u()
        .diagonal()
        .iter()
        .map(|d| d.abs())
        .fold(f64::INFINITY, f64::min);
    if min_pivot < opts.pivot_tolerance * scale {
        return None;
    }
    let solution = lu.solve(&rhs)?;
    let mut probabilities: Vec<f64> = solution.iter().copied().collect();
    if probabilities.iter().any(|&p| p < -1e-10 || !p.is_finite()) {
        return None;
    }
    // Round-off can leave -1e-17 on transient states.
    for p in probabilities.iter_mut() {
        *p = p.max(0.0);
    }
    let total: f64 = probabilities.iter().sum();
    probabilities.iter_mut().for_each(|p| *p /= total);
    let residual = matrix.residual(&probabilities);
    Some(StationaryDist {
        probabilities,
        residual,
        method: SolveMethod::Direct,
    })
}

/// Power iteration from the point mass on state 0.
///
/// Iterates the lazy chain `(I + P) / 2`, which has the same stationary
/// vectors as `P` but is aperiodic, so periodic chains converge as well.
pub fn solve_power(matrix: &TransitionMatrix) -> Result<StationaryDist> {
    solve_power_with(matrix, &SolverOptions::default())
}

pub fn solve_power_with(matrix: &TransitionMatrix, opts: &SolverOptions) -> Result<StationaryDist> {
    let bad = matrix.validate_rows_with(opts.row_tolerance);
    if !bad.is_empty() {
        return Err(not_stochastic(bad));
    }
    let n = matrix.dimension();
    if n == 0 {
        return Err(Error::Domain("empty transition matrix".into()));
    }
    let lazy = (matrix.entries() + DMatrix::<f64>::identity(n, n)) * 0.5;
    let lazy_t = lazy.transpose();
    let mut current = DVector::<f64>::zeros(n);
    current[0] = 1.0;
    let mut next = DVector::<f64>::zeros(n);
    for iteration in 1..=opts.max_iterations {
        lazy_t.mul_to(&current, &mut next);
        let total = next.sum();
        next /= total;
        let change = (&next - &current).amax();
        std::mem::swap(&mut current, &mut next);
        if change < opts.power_tolerance {
            let probabilities: Vec<f64> = current.iter().copied().collect();
            let residual = matrix.residual(&probabilities);
            if residual < opts.residual_tolerance {
                return Ok(StationaryDist {
                    probabilities,
                    residual,
                    method: SolveMethod::PowerIteration {
                        iterations: iteration,
                    },
                });
            }
            return Err(Error::NoConvergence {
                iterations: iteration,
                residual,
            });
        }
    }
    let probabilities: Vec<f64> = current.iter().copied().collect();
    Err(Error::NoConvergence {
        iterations: opts.max_iterations,
        residual: matrix.residual(&probabilities),
    })
}
