//! One-dimensional maximization over a probability interval: coarse grid scan
//! followed by golden-section refinement around the best few cells.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::Result;

/// Lower end of every probability search.
pub const SEARCH_FLOOR: f64 = 1e-4;
/// Coarse grid spacing.
pub const GRID_STEP: f64 = 0.01;
/// Width at which golden-section refinement stops.
pub const REFINE_WIDTH: f64 = 1e-6;
/// A grid whose values span at most this fraction of the peak value counts
/// as flat.
pub const FLAT_TOLERANCE: f64 = 1e-10;
const STARTS: usize = 3;

const INV_PHI: f64 = 0.618_033_988_749_894_8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Maximum {
    pub argmax: f64,
    pub value: f64,
    /// The objective did not vary across the coarse grid; `argmax` is then
    /// the smallest grid point.
    pub flat: bool,
    pub evaluations: usize,
}

/// `{1e-4, 0.01, 0.02, ..., 1.0}`.
pub fn probability_grid() -> Vec<f64> {
    let steps = (1.0 / GRID_STEP).round() as usize;
    std::iter::once(SEARCH_FLOOR)
        .chain((1..=steps).map(|k| k as f64 / steps as f64))
        .collect()
}

/// Evenly spaced points `start, start + step, ...` up to `stop` inclusive.
pub fn linspace_step(start: f64, stop: f64, step: f64) -> Vec<f64> {
    let count = ((stop - start) / step + 1e-9).floor() as usize + 1;
    (0..count).map(|k| start + k as f64 * step).collect()
}

/// Maximizes `f` over `[1e-4, 1]`.
pub fn maximize_probability<F>(f: F) -> Result<Maximum>
where
    F: Fn(f64) -> Result<f64> + Sync,
{
    let grid = probability_grid();
    let values = grid
        .par_iter()
        .map(|&q| f(q))
        .collect::<Result<Vec<f64>>>()?;
    let mut evaluations = grid.len();

    let best = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let worst = values.iter().copied().fold(f64::INFINITY, f64::min);
    if best - worst <= FLAT_TOLERANCE * best.abs() {
        return Ok(Maximum {
            argmax: grid[0],
            value: values[0],
            flat: true,
            evaluations,
        });
    }

    // Top cells by value, smaller q first on ties.
    let mut order: Vec<usize> = (0..grid.len()).collect();
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));

    let mut argmax = grid[order[0]];
    let mut value = values[order[0]];
    for &cell in order.iter().take(STARTS) {
        let lo = grid[cell.saturating_sub(1)];
        let hi = grid[(cell + 1).min(grid.len() - 1)];
        let (q, v, used) = golden_section_max(&f, lo, hi, REFINE_WIDTH)?;
        evaluations += used;
        if v > value || (v == value && q < argmax) {
            argmax = q;
            value = v;
        }
    }
    Ok(Maximum {
        argmax,
        value,
        flat: false,
        evaluations,
    })
}

/// Golden-section search for a maximum of `f` on `[lo, hi]`.
///
/// Returns the best point seen (endpoints included), its value, and the
/// number of evaluations.
pub fn golden_section_max<F>(
    f: &F,
    mut lo: f64,
    mut hi: f64,
    width: f64,
) -> Result<(f64, f64, usize)>
where
    F: Fn(f64) -> Result<f64>,
{
    let mut best = (lo, f(lo)?);
    let f_hi = f(hi)?;
    if f_hi > best.1 {
        best = (hi, f_hi);
    }
    let mut evaluations = 2;

    let mut x1 = hi - INV_PHI * (hi - lo);
    let mut x2 = lo + INV_PHI * (hi - lo);
    let mut f1 = f(x1)?;
    let mut f2 = f(x2)?;
    evaluations += 2;
    while hi - lo > width {
        if f1 >= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - INV_PHI * (hi - lo);
            f1 = f(x1)?;
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + INV_PHI * (hi - lo);
            f2 = f(x2)?;
        }
        evaluations += 1;
    }
    for (x, v) in [(x1, f1), (x2, f2)] {
        if v > best.1 || (v == best.1 && x < best.0) {
            best = (x, v);
        }
    }
    Ok((best.0, best.1, evaluations))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_shape() {
        let g = probability_grid();
        assert_eq!(g.len(), 101);
        assert_eq!(g[0], 1e-4);
        assert_eq!(g[1], 0.01);
        assert_eq!(*g.last().unwrap(), 1.0);
    }

    #[test]
    fn linspace_includes_stop() {
        let xs = linspace_step(0.1, 0.9, 0.1);
        assert_eq!(xs.len(), 9);
        assert!((xs[8] - 0.9).abs() < 1e-12);
        assert_eq!(linspace_step(0.5, 0.5, 0.1), vec![0.5]);
    }

    #[test]
    fn finds_interior_peak() {
        let m = maximize_probability(|q| Ok(-(q - 0.3137).powi(2))).unwrap();
        assert!(!m.flat);
        assert!((m.argmax - 0.3137).abs() < 1e-6);
    }

    #[test]
    fn finds_boundary_peak() {
        let m = maximize_probability(Ok).unwrap();
        assert_eq!(m.argmax, 1.0);
        let m = maximize_probability(|q| Ok(-q)).unwrap();
        assert_eq!(m.argmax, 1e-4);
    }

    #[test]
    fn bimodal_objective_picks_global_peak() {
        // Narrow tall peak at 0.805 next to a broad lower one at 0.2.
        let f = |q: f64| {
            Ok((-(q - 0.2f64).powi(2) * 10.0)
                .exp()
                .max(1.5 * (-(q - 0.805f64).powi(2) * 4000.0).exp()))
        };
        let m = maximize_probability(f).unwrap();
        assert!((m.argmax - 0.805).abs() < 1e-5, "{m:?}");
    }

    #[test]
    fn flat_objective_is_flagged() {
        let m = maximize_probability(|_| Ok(0.25)).unwrap();
        assert!(m.flat);
        assert_eq!(m.argmax, 1e-4);
        assert_eq!(m.value, 0.25);
    }

    #[test]
    fn tiny_but_varying_objective_is_not_flat() {
        let m = maximize_probability(|q| Ok(1e-12 * q)).unwrap();
        assert!(!m.flat);
        assert_eq!(m.argmax, 1.0);
        let m = maximize_probability(|_| Ok(0.0)).unwrap();
        assert!(m.flat);
    }

    #[test]
    fn errors_propagate() {
        let r = maximize_probability(|q| {
            if q > 0.5 {
                Err(crate::Error::Domain("boom".into()))
            } else {
                Ok(q)
            }
        });
        assert!(r.is_err());
    }
}
