use std::fmt;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::format::sig;
use crate::game::{game_analysis, GameParams};
use crate::markov::SolverOptions;
use crate::model::{binomial_pmf, ChannelModel, SystemParams};
use crate::search::linspace_step;
use crate::sim::{compare_to_chain, run_sim, AnalyticReference, SimConfig};
use crate::team::{build_team_chain_as_printed, team_analysis, team_metrics};

/// Row sums must be within this of one.
pub const ROW_SUM_TOLERANCE: f64 = 1e-12;
pub const RESIDUAL_TOLERANCE: f64 = 1e-9;
pub const FLOW_TOLERANCE: f64 = 1e-9;
pub const SYMMETRY_TOLERANCE: f64 = 1e-8;
/// Two-attempt probability above which ZigZag must strictly win.
pub const STRICT_DOMINANCE_THRESHOLD: f64 = 1e-9;

/// One simulated configuration; `tagged` adds a tagged user with that
/// retransmission probability.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SimCase {
    pub m: usize,
    pub pa: f64,
    pub qr: f64,
    pub tagged: Option<f64>,
}

/// Parameters the invariant suite runs over.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationGrid {
    pub ms: Vec<usize>,
    pub pas: Vec<f64>,
    pub qrs: Vec<f64>,
    pub sim_cases: Vec<SimCase>,
    pub sim_frames: u64,
    pub seed: u64,
    /// Run the literally transcribed ZigZag builder as a negative control.
    pub include_literal: bool,
}

impl Default for ValidationGrid {
    fn default() -> Self {
        Self {
            ms: vec![1, 2, 3, 5, 10, 12],
            pas: linspace_step(0.1, 0.9, 0.1),
            qrs: linspace_step(0.1, 1.0, 0.1),
            sim_cases: vec![
                SimCase {
                    m: 5,
                    pa: 0.3,
                    qr: 0.5,
                    tagged: None,
                },
                SimCase {
                    m: 10,
                    pa: 0.2,
                    qr: 0.3,
                    tagged: None,
                },
                SimCase {
                    m: 4,
                    pa: 0.3,
                    qr: 0.4,
                    tagged: Some(0.7),
                },
            ],
            sim_frames: 1_000_000,
            seed: super::DEFAULT_SEED,
            include_literal: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckResult {
    pub name: String,
    pub cases: usize,
    pub failures: usize,
    /// Largest deviation seen (or largest z-score for simulation checks).
    pub worst: f64,
    pub tolerance: f64,
    pub detail: String,
    pub pass: bool,
}

impl CheckResult {
    fn new(name: &str, tolerance: f64, outcomes: &[(f64, bool)], detail: String) -> Self {
        let failures = outcomes.iter().filter(|(_, ok)| !ok).count();
        Self {
            name: name.to_string(),
            cases: outcomes.len(),
            failures,
            worst: outcomes.iter().map(|(w, _)| *w).fold(0.0, f64::max),
            tolerance,
            detail,
            pass: failures == 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationSummary {
    pub checks: Vec<CheckResult>,
    /// Expected failures; they never affect `pass`.
    pub known_discrepancies: Vec<CheckResult>,
    pub pass: bool,
}

impl fmt::Display for ValidationSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let line = |f: &mut fmt::Formatter<'_>, c: &CheckResult, status: &str| {
            writeln!(
                f,
                "{:<36} {:>7} {:>8} {:>14} {:>10}  {status}  {}",
                c.name,
                c.cases,
                c.failures,
                sig(c.worst),
                sig(c.tolerance),
                c.detail
            )
        };
        writeln!(
            f,
            "{:<36} {:>7} {:>8} {:>14} {:>10}  status",
            "check", "cases", "failed", "worst", "tolerance"
        )?;
        for c in &self.checks {
            line(f, c, if c.pass { "PASS" } else { "FAIL" })?;
        }
        if !self.known_discrepancies.is_empty() {
            writeln!(f, "\nknown discrepancies (expected to fail):")?;
            for c in &self.known_discrepancies {
                line(
                    f,
                    c,
                    if c.pass {
                        "unexpectedly clean"
                    } else {
                        "fails as expected"
                    },
                )?;
            }
        }
        write!(f, "\noverall: {}", if self.pass { "PASS" } else { "FAIL" })
    }
}

fn grid_points(grid: &ValidationGrid) -> Vec<(SystemParams, ChannelModel)> {
    let mut points = Vec::new();
    for &m in &grid.ms {
        for &pa in &grid.pas {
            for &qr in &grid.qrs {
                for ch in ChannelModel::ALL {
                    if let Ok(p) = SystemParams::new(m, pa, qr) {
                        points.push((p, ch));
                    }
                }
            }
        }
    }
    points
}

/// Runs every invariant check over `grid`.
pub fn validate_all(grid: &ValidationGrid) -> Result<ValidationSummary> {
    if grid.ms.is_empty() || grid.pas.is_empty() || grid.qrs.is_empty() {
        return Err(Error::Usage(
            "validation grid needs at least one M, p_a and q_r".into(),
        ));
    }
    let points = grid_points(grid);
    if points.is_empty() {
        return Err(Error::Usage(
            "validation grid has no valid parameter combination".into(),
        ));
    }

    let mut checks = vec![
        stochasticity(&points),
        flow_balance(&points),
        symmetric_consistency(grid),
        dominance(grid),
    ];
    checks.extend(simulation(grid));

    let known_discrepancies = if grid.include_literal {
        vec![literal_builder(grid)]
    } else {
        Vec::new()
    };
    let pass = checks.iter().all(|c| c.pass);
    Ok(ValidationSummary {
        checks,
        known_discrepancies,
        pass,
    })
}

fn stochasticity(points: &[(SystemParams, ChannelModel)]) -> CheckResult {
    let outcomes: Vec<(f64, bool)> = points
        .par_iter()
        .flat_map_iter(|(p, ch)| {
            let team = team_analysis(p, *ch).map(|a| (a.matrix, a.stationary.residual));
            let game = game_analysis(&GameParams::symmetric(*p), *ch)
                .map(|a| (a.matrix, a.stationary.residual));
            [team, game].into_iter().map(|r| match r {
                Ok((matrix, residual)) => {
                    let rows = (0..matrix.dimension())
                        .map(|i| (matrix.row_sum(i) - 1.0).abs())
                        .fold(0.0, f64::max);
                    (
                        rows.max(residual),
                        rows <= ROW_SUM_TOLERANCE && residual < RESIDUAL_TOLERANCE,
                    )
                }
                Err(_) => (f64::INFINITY, false),
            })
        })
        .collect();
    CheckResult::new(
        "row sums and residual",
        RESIDUAL_TOLERANCE,
        &outcomes,
        format!("team and game chains; rows within {ROW_SUM_TOLERANCE:e}"),
    )
}

fn flow_balance(points: &[(SystemParams, ChannelModel)]) -> CheckResult {
    let outcomes: Vec<(f64, bool)> = points
        .par_iter()
        .map(|(p, ch)| match team_metrics(p, *ch) {
            Ok(t) => {
                let d = (t.throughput - t.event_throughput).abs();
                (d, d < FLOW_TOLERANCE)
            }
            Err(_) => (f64::INFINITY, false),
        })
        .collect();
    CheckResult::new(
        "flow balance",
        FLOW_TOLERANCE,
        &outcomes,
        "p_a(M - S_B) vs expected deliveries".into(),
    )
}

/// With everyone on the same `q`, `M + 1` tagged throughputs add up to the
/// team throughput of `M + 1` users and the others' backlog is `M` times the
/// tagged backlog probability.
fn symmetric_consistency(grid: &ValidationGrid) -> CheckResult {
    let outcomes: Vec<(f64, bool)> = grid_points(grid)
        .par_iter()
        .map(|&(others, ch)| {
            let m = others.num_users();
            let run = || -> Result<(f64, f64)> {
                let tagged = game_analysis(&GameParams::symmetric(others), ch)?.metrics;
                let team = team_metrics(&others.with_num_users(m + 1)?, ch)?;
                Ok((
                    ((m + 1) as f64 * tagged.throughput - team.throughput).abs(),
                    (tagged.others_backlog - m as f64 * tagged.backlog_prob).abs(),
                ))
            };
            match run() {
                Ok((th, backlog)) => (
                    th.max(backlog),
                    th < SYMMETRY_TOLERANCE && backlog < FLOW_TOLERANCE,
                ),
                Err(_) => (f64::INFINITY, false),
            }
        })
        .collect();
    CheckResult::new(
        "symmetric consistency",
        SYMMETRY_TOLERANCE,
        &outcomes,
        "(M+1) TH = Th_team(M+1), E[N] = M E[a]".into(),
    )
}

fn dominance(grid: &ValidationGrid) -> CheckResult {
    let points: Vec<SystemParams> = grid_points(grid)
        .into_iter()
        .filter(|(_, ch)| *ch == ChannelModel::ZigZag)
        .map(|(p, _)| p)
        .collect();
    let outcomes: Vec<(f64, bool)> = points
        .par_iter()
        .map(|p| {
            match (
                team_metrics(p, ChannelModel::ZigZag),
                team_metrics(p, ChannelModel::Classic),
            ) {
                (Ok(z), Ok(c)) => {
                    let gain = z.throughput - c.throughput;
                    let strict = c.two_attempt_prob > STRICT_DOMINANCE_THRESHOLD;
                    let ok = gain >= -1e-12 && (!strict || gain > 0.0);
                    ((-gain).max(0.0), ok)
                }
                _ => (f64::INFINITY, false),
            }
        })
        .collect();
    CheckResult::new(
        "zigzag dominance",
        0.0,
        &outcomes,
        "Th(zigzag) >= Th(classic), strict when two attempts occur".into(),
    )
}

fn simulation(grid: &ValidationGrid) -> Vec<CheckResult> {
    let mut results = Vec::new();
    for (k, case) in grid.sim_cases.iter().enumerate() {
        for ch in ChannelModel::ALL {
            let name = match case.tagged {
                Some(t) => format!("sim M={} pa={} q={} qt={t} {ch}", case.m, case.pa, case.qr),
                None => format!("sim M={} pa={} q={} {ch}", case.m, case.pa, case.qr),
            };
            let seed = grid
                .seed
                .wrapping_add(k as u64 * 2 + (ch == ChannelModel::Classic) as u64);
            let run = || -> Result<(f64, String)> {
                let params = SystemParams::new(case.m, case.pa, case.qr)?;
                let mut cfg = SimConfig::new(params, ch, grid.sim_frames, seed);
                let reference = match case.tagged {
                    Some(t) => {
                        cfg = cfg.with_tagged(t);
                        AnalyticReference::tagged(&GameParams::new(params, t)?, ch)?
                    }
                    None => AnalyticReference::team(&params, ch)?,
                };
                let report = compare_to_chain(&run_sim(&cfg)?, &reference)?;
                let worst = report
                    .metrics
                    .iter()
                    .max_by(|a, b| a.z.total_cmp(&b.z))
                    .map(|d| d.metric.clone())
                    .unwrap_or_default();
                Ok((
                    report.max_z,
                    format!("{} frames, worst {worst}", grid.sim_frames),
                ))
            };
            results.push(match run() {
                Ok((z, detail)) => CheckResult::new(
                    &name,
                    crate::sim::Z_THRESHOLD,
                    &[(z, z < crate::sim::Z_THRESHOLD)],
                    detail,
                ),
                Err(e) => CheckResult::new(
                    &name,
                    crate::sim::Z_THRESHOLD,
                    &[(f64::INFINITY, false)],
                    e.to_string(),
                ),
            });
        }
    }
    results
}

/// The literally transcribed ZigZag matrix is expected to miss row sums by
/// `|Q_a(0)Q_r(2) - Q_a(2)Q_r(0)|`.
fn literal_builder(grid: &ValidationGrid) -> CheckResult {
    let tolerance = SolverOptions::default().row_tolerance;
    let mut outcomes = Vec::new();
    let mut predicted_ok = true;
    for (p, _) in grid_points(grid)
        .into_iter()
        .filter(|(_, ch)| *ch == ChannelModel::ZigZag)
    {
        let Ok(matrix) = build_team_chain_as_printed(&p) else {
            outcomes.push((f64::INFINITY, false));
            continue;
        };
        for n in 0..matrix.dimension() {
            let defect = (matrix.row_sum(n) - 1.0).abs();
            let qa = |i| binomial_pmf(p.num_users() - n, i, p.arrival_prob());
            let qr = |i| binomial_pmf(n, i, p.retransmit_prob());
            let predicted = (qa(0) * qr(2) - qa(2) * qr(0)).abs();
            predicted_ok &= (defect - predicted).abs() < 1e-12;
            outcomes.push((defect, defect <= tolerance));
        }
    }
    let detail = if predicted_ok {
        "row defect equals |Qa(0)Qr(2) - Qa(2)Qr(0)| on every row"
    } else {
        "row defect differs from |Qa(0)Qr(2) - Qa(2)Qr(0)|"
    };
    CheckResult::new(
        "literal zigzag builder",
        tolerance,
        &outcomes,
        detail.into(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> ValidationGrid {
        ValidationGrid {
            ms: vec![1, 3],
            pas: vec![0.2, 0.7],
            qrs: vec![0.3, 1.0],
            sim_cases: vec![SimCase {
                m: 3,
                pa: 0.3,
                qr: 0.5,
                tagged: None,
            }],
            sim_frames: 60_000,
            ..ValidationGrid::default()
        }
    }

    #[test]
    fn small_grid_passes() {
        let s = validate_all(&small()).unwrap();
        assert!(s.pass, "{s}");
        assert_eq!(s.known_discrepancies.len(), 1);
        assert!(!s.known_discrepancies[0].pass);
        assert!(s.known_discrepancies[0]
            .detail
            .starts_with("row defect equals"));
        let text = s.to_string();
        assert!(text.contains("known discrepancies"));
        assert!(text.ends_with("overall: PASS"));
    }

    #[test]
    fn empty_grid_is_usage_error() {
        let grid = ValidationGrid {
            ms: vec![],
            ..small()
        };
        assert!(matches!(validate_all(&grid), Err(Error::Usage(_))));
    }

    #[test]
    fn literal_builder_can_be_left_out() {
        let grid = ValidationGrid {
            include_literal: false,
            sim_cases: vec![],
            ..small()
        };
        assert!(validate_all(&grid).unwrap().known_discrepancies.is_empty());
    }
}
