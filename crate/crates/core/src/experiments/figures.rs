use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{check_tagged, check_team, Axis, BaselineQ, ExperimentSpec, Normalization, Table};
use crate::error::{Error, Result};
use crate::format::{opt, sig, FAILED};
use crate::game::{find_equilibrium, tagged_metrics, GameParams};
use crate::model::{ChannelModel, SystemParams};
use crate::team::{optimize_team, team_metrics};

/// Default arrival-probability sweep of every figure plotted against `p_a`.
pub const FIGURE_PA: (f64, f64, f64) = (0.02, 0.98, 0.02);
/// Default retransmission-probability sweep of fig10.
pub const FIGURE_QR: (f64, f64, f64) = (0.02, 0.98, 0.02);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FigureId {
    Fig3,
    Fig4,
    Fig5,
    Fig6,
    Fig7,
    Fig8,
    Fig9,
    Fig10,
}

/// Which model a figure evaluates and along which axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FigureSweep {
    /// Tagged-user metrics at the symmetric equilibrium, against `p_a`.
    GameVsArrival,
    /// Team metrics at the team-optimal `q_r`, against `p_a`.
    TeamVsArrival,
    /// Team metrics against `q_r` at a fixed `p_a`.
    TeamVsRetransmit,
}

/// The configuration a figure is bound to.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FigureSetup {
    pub id: FigureId,
    /// Number of non-tagged users for game figures, team size otherwise.
    pub m: usize,
    pub sweep: FigureSweep,
    /// Column prefix of the plotted metric.
    pub metric: &'static str,
    pub title: &'static str,
}

impl FigureId {
    pub const ALL: [FigureId; 8] = [
        FigureId::Fig3,
        FigureId::Fig4,
        FigureId::Fig5,
        FigureId::Fig6,
        FigureId::Fig7,
        FigureId::Fig8,
        FigureId::Fig9,
        FigureId::Fig10,
    ];

    pub fn setup(self) -> FigureSetup {
        use FigureSweep::*;
        let (m, sweep, metric, title) = match self {
            FigureId::Fig3 => (
                5,
                GameVsArrival,
                "tagged_throughput",
                "equilibrium throughput of the tagged user vs arrival probability, M=5",
            ),
            FigureId::Fig4 => (
                10,
                GameVsArrival,
                "tagged_throughput",
                "equilibrium throughput of the tagged user vs arrival probability, M=10",
            ),
            FigureId::Fig5 => (
                5,
                GameVsArrival,
                "tagged_backlog_delay_frames",
                "equilibrium delay of backlogged packets vs arrival probability, M=5",
            ),
            FigureId::Fig6 => (
                10,
                GameVsArrival,
                "tagged_delay_frames",
                "equilibrium delay of transmitted packets vs arrival probability, M=10",
            ),
            FigureId::Fig7 => (
                20,
                GameVsArrival,
                "tagged_delay_frames",
                "equilibrium delay of transmitted packets vs arrival probability, M=20",
            ),
            FigureId::Fig8 => (
                5,
                TeamVsArrival,
                "throughput",
                "team throughput vs arrival probability, M=5",
            ),
            FigureId::Fig9 => (
                5,
                TeamVsArrival,
                "backlog_delay_frames",
                "team delay of backlogged packets vs arrival probability, M=5",
            ),
            FigureId::Fig10 => (
                5,
                TeamVsRetransmit,
                "avg_backlog",
                "team average backlog vs retransmission probability, M=5",
            ),
        };
        FigureSetup {
            id: self,
            m,
            sweep,
            metric,
            title,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            FigureId::Fig3 => "fig3",
            FigureId::Fig4 => "fig4",
            FigureId::Fig5 => "fig5",
            FigureId::Fig6 => "fig6",
            FigureId::Fig7 => "fig7",
            FigureId::Fig8 => "fig8",
            FigureId::Fig9 => "fig9",
            FigureId::Fig10 => "fig10",
        }
    }
}

impl fmt::Display for FigureId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FigureId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        let s = s
            .strip_prefix("figure")
            .map(|r| format!("fig{}", r.trim()))
            .unwrap_or(s);
        FigureId::ALL
            .into_iter()
            .find(|id| id.name() == s)
            .ok_or_else(|| {
                Error::Usage(format!("unknown figure '{s}', expected one of fig3..fig10"))
            })
    }
}

fn default_range((start, stop, step): (f64, f64, f64)) -> Axis {
    Axis::Range { start, stop, step }
}

/// Evaluates the sweep bound to `id`.
///
/// Figures against `p_a` use the requested `pa` when it is a range and the
/// default `0.02:0.98:0.02` otherwise. A scalar `qr` replaces the
/// per-point equilibrium (or team optimum). The figure's own `M` always wins
/// over the requested one. Chosen defaults are returned for the sidecar.
pub fn reproduce_figure(
    id: FigureId,
    spec: &ExperimentSpec,
) -> Result<(Table, BTreeMap<String, String>)> {
    let setup = id.setup();
    let mut defaults = BTreeMap::new();
    defaults.insert("figure".into(), setup.title.to_string());
    defaults.insert("m".into(), setup.m.to_string());
    defaults.insert("delay_unit".into(), "frames".into());

    let fixed_q = match spec.qr {
        Some(Axis::Scalar(q)) => Some(q),
        _ => None,
    };
    let pa_axis = |defaults: &mut BTreeMap<String, String>| -> Result<Vec<f64>> {
        if spec.qr_tagged.is_some() {
            return Err(Error::Usage(format!(
                "{id} does not take a tagged retransmission probability"
            )));
        }
        if matches!(spec.qr, Some(Axis::Range { .. })) {
            return Err(Error::Usage(format!("{id} sweeps pa; qr must be a scalar")));
        }
        let axis = if spec.pa.is_swept() {
            spec.pa
        } else {
            let axis = default_range(FIGURE_PA);
            defaults.insert("pa".into(), axis.to_string());
            axis
        };
        Ok(axis.values())
    };

    let table = match setup.sweep {
        FigureSweep::GameVsArrival => {
            let xs = pa_axis(&mut defaults)?;
            defaults.insert(
                "qr".into(),
                match fixed_q {
                    Some(q) => q.to_string(),
                    None => "symmetric equilibrium at each pa".into(),
                },
            );
            if fixed_q.is_none() {
                defaults.insert(
                    "baseline_q".into(),
                    baseline_label(spec.baseline_q, "equilibrium"),
                );
            }
            game_table(setup.m, &xs, fixed_q, spec.baseline_q)
        }
        FigureSweep::TeamVsArrival => {
            let xs = pa_axis(&mut defaults)?;
            defaults.insert(
                "qr".into(),
                match fixed_q {
                    Some(q) => q.to_string(),
                    None => "team optimum at each pa".into(),
                },
            );
            if fixed_q.is_none() {
                defaults.insert(
                    "baseline_q".into(),
                    baseline_label(spec.baseline_q, "optimum"),
                );
            }
            team_table("pa", &xs, spec.normalization, |pa, ch, zz_q| {
                let q = match (fixed_q, spec.baseline_q, ch, zz_q) {
                    (Some(q), ..) => q,
                    (None, BaselineQ::Shared, ChannelModel::Classic, Some(q)) => q,
                    _ => optimize_team(setup.m, pa, ch)?.q_opt,
                };
                SystemParams::new(setup.m, pa, q)
            })
        }
        FigureSweep::TeamVsRetransmit => {
            if spec.pa.is_swept() {
                return Err(Error::Usage(format!("{id} sweeps qr; pa must be a scalar")));
            }
            let pa = spec.pa.values()[0];
            defaults.insert("pa".into(), pa.to_string());
            let xs = match spec.qr {
                Some(axis @ Axis::Range { .. }) => axis.values(),
                _ => {
                    let axis = default_range(FIGURE_QR);
                    defaults.insert("qr".into(), axis.to_string());
                    axis.values()
                }
            };
            team_table("qr", &xs, spec.normalization, |q, _, _| {
                SystemParams::new(setup.m, pa, q)
            })
        }
    };
    Ok((table, defaults))
}

fn baseline_label(baseline: BaselineQ, what: &str) -> String {
    match baseline {
        BaselineQ::Own => format!("each channel uses its own {what}"),
        BaselineQ::Shared => format!("classic reuses the zigzag {what}"),
    }
}

const GAME_METRICS: [&str; 5] = [
    "q",
    "tagged_throughput",
    "tagged_backlog_prob",
    "tagged_delay_frames",
    "tagged_backlog_delay_frames",
];

fn game_table(m: usize, xs: &[f64], fixed_q: Option<f64>, baseline: BaselineQ) -> Table {
    let mut columns = vec!["pa".to_string()];
    for ch in ChannelModel::ALL {
        columns.extend(GAME_METRICS.iter().map(|c| format!("{c}_{ch}")));
    }
    let rows = xs
        .par_iter()
        .map(|&pa| {
            let mut row = vec![sig(pa)];
            let mut zigzag_q = None;
            for ch in ChannelModel::ALL {
                let q = match (fixed_q, baseline, ch) {
                    (Some(q), ..) => Ok(q),
                    (None, BaselineQ::Shared, ChannelModel::Classic) => zigzag_q
                        .ok_or_else(|| Error::Domain("no zigzag equilibrium to share".into())),
                    _ => find_equilibrium(m, pa, ch).map(|eq| eq.q_star),
                };
                if ch == ChannelModel::ZigZag {
                    zigzag_q = q.as_ref().ok().copied();
                }
                let cells = q.and_then(|q| {
                    let game = GameParams::symmetric(SystemParams::new(m, pa, q)?);
                    let t = tagged_metrics(&game, ch)?;
                    check_tagged(&t, pa)?;
                    Ok(vec![
                        sig(q),
                        sig(t.throughput),
                        sig(t.backlog_prob),
                        opt(t.delay),
                        opt(t.backlog_delay),
                    ])
                });
                row.extend(cells.unwrap_or_else(|_| vec![FAILED.to_string(); GAME_METRICS.len()]));
            }
            row
        })
        .collect();
    Table { columns, rows }
}

const TEAM_METRICS: [&str; 6] = [
    "q",
    "throughput",
    "avg_backlog",
    "delay_frames",
    "backlog_delay_frames",
    "expected_frame_len",
];

/// `params_at(x, channel, zigzag_q)` picks the operating point; `zigzag_q`
/// is the value already chosen for ZigZag in the same row.
fn team_table<F>(axis: &str, xs: &[f64], normalization: Normalization, params_at: F) -> Table
where
    F: Fn(f64, ChannelModel, Option<f64>) -> Result<SystemParams> + Sync,
{
    let metric_name = |c: &'static str| -> &'static str {
        match (normalization, c) {
            (Normalization::Slot, "throughput") => "throughput_per_slot",
            _ => c,
        }
    };
    let mut columns = vec![axis.to_string()];
    for ch in ChannelModel::ALL {
        columns.extend(
            TEAM_METRICS
                .iter()
                .map(|c| format!("{}_{ch}", metric_name(c))),
        );
    }
    let rows = xs
        .par_iter()
        .map(|&x| {
            let mut row = vec![sig(x)];
            let mut zigzag_q = None;
            for ch in ChannelModel::ALL {
                let cells = params_at(x, ch, zigzag_q).and_then(|params| {
                    let t = team_metrics(&params, ch)?;
                    check_team(&t, &params)?;
                    if ch == ChannelModel::ZigZag {
                        zigzag_q = Some(params.retransmit_prob());
                    }
                    let th = match normalization {
                        Normalization::Frame => t.throughput,
                        Normalization::Slot => t.throughput_per_slot,
                    };
                    Ok(vec![
                        sig(params.retransmit_prob()),
                        sig(th),
                        sig(t.avg_backlog),
                        opt(t.delay),
                        opt(t.backlog_delay),
                        sig(t.expected_frame_len),
                    ])
                });
                row.extend(cells.unwrap_or_else(|_| vec![FAILED.to_string(); TEAM_METRICS.len()]));
            }
            row
        })
        .collect();
    Table { columns, rows }
}
