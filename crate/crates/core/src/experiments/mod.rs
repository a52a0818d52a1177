//! Parameter sweeps with CSV/JSON output, figure reproduction and the
//! invariant validation suite.

mod figures;
mod validate;

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::format::{opt, sig, FAILED};
use crate::game::{best_response, find_equilibrium, tagged_metrics, GameParams, TaggedMetrics};
use crate::model::{ChannelModel, SystemParams};
use crate::search::linspace_step;
use crate::sim::{run_sim, SimConfig};
use crate::team::{optimize_team, team_metrics, TeamMetrics};

pub use figures::{reproduce_figure, FigureId, FigureSetup, FigureSweep};
pub use validate::{validate_all, CheckResult, ValidationGrid, ValidationSummary};

pub const TOOL_NAME: &str = "zigzag-aloha";
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

/// A parameter that is either fixed or swept over `start:stop:step`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Axis {
    Scalar(f64),
    Range { start: f64, stop: f64, step: f64 },
}

impl Axis {
    pub fn values(&self) -> Vec<f64> {
        match *self {
            Axis::Scalar(x) => vec![x],
            Axis::Range { start, stop, step } => linspace_step(start, stop, step),
        }
    }

    pub fn is_swept(&self) -> bool {
        self.values().len() > 1
    }

    fn check(&self, name: &str) -> Result<()> {
        if let Axis::Range { start, stop, step } = *self {
            if step.is_nan() || step <= 0.0 || !step.is_finite() {
                return Err(Error::Usage(format!(
                    "--{name}: step must be positive, got {step}"
                )));
            }
            if stop.is_nan() || start.is_nan() || stop < start {
                return Err(Error::Usage(format!(
                    "--{name}: empty range {start}:{stop}:{step}"
                )));
            }
        }
        Ok(())
    }
}

impl FromStr for Axis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let num = |t: &str| {
            t.trim()
                .parse::<f64>()
                .map_err(|_| Error::Usage(format!("'{t}' is not a number in '{s}'")))
        };
        let parts: Vec<&str> = s.split(':').collect();
        let axis = match parts.as_slice() {
            [x] => Axis::Scalar(num(x)?),
            [a, b, c] => Axis::Range {
                start: num(a)?,
                stop: num(b)?,
                step: num(c)?,
            },
            _ => {
                return Err(Error::Usage(format!(
                    "expected a number or start:stop:step, got '{s}'"
                )))
            }
        };
        axis.check("value")?;
        Ok(axis)
    }
}

impl fmt::Display for Axis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Axis::Scalar(x) => write!(f, "{x}"),
            Axis::Range { start, stop, step } => write!(f, "{start}:{stop}:{step}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Team,
    Game,
    BestResponse,
    Equilibrium,
    Optimize,
    Simulate,
    Figure(FigureId),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChannelSelection {
    ZigZag,
    Classic,
    #[default]
    Both,
}

impl ChannelSelection {
    pub fn channels(self) -> Vec<ChannelModel> {
        match self {
            ChannelSelection::ZigZag => vec![ChannelModel::ZigZag],
            ChannelSelection::Classic => vec![ChannelModel::Classic],
            ChannelSelection::Both => ChannelModel::ALL.to_vec(),
        }
    }
}

impl FromStr for ChannelSelection {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "both" => Ok(ChannelSelection::Both),
            other => Ok(match other.parse::<ChannelModel>()? {
                ChannelModel::ZigZag => ChannelSelection::ZigZag,
                ChannelModel::Classic => ChannelSelection::Classic,
            }),
        }
    }
}

/// Time unit of reported throughputs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Normalization {
    #[default]
    Frame,
    Slot,
}

/// Retransmission probability used for the baseline columns of figures that
/// pick `q` per point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BaselineQ {
    /// Each channel uses its own equilibrium (or optimum).
    #[default]
    Own,
    /// The classic channel reuses the ZigZag channel's choice.
    Shared,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    #[default]
    Csv,
    Json,
}

/// Everything needed to run one experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub mode: Mode,
    pub m: Axis,
    pub pa: Axis,
    /// Common retransmission probability (of the others, in game modes).
    pub qr: Option<Axis>,
    /// Retransmission probability of the tagged user.
    pub qr_tagged: Option<Axis>,
    pub channel: ChannelSelection,
    pub normalization: Normalization,
    pub baseline_q: BaselineQ,
    pub seed: u64,
    pub frames: u64,
    pub workers: Option<usize>,
    pub format: OutputFormat,
    pub out: Option<PathBuf>,
}

pub const DEFAULT_M: f64 = 5.0;
pub const DEFAULT_PA: f64 = 0.3;
pub const DEFAULT_QR: f64 = 0.5;
pub const DEFAULT_SEED: u64 = 1;
pub const DEFAULT_FRAMES: u64 = 1_000_000;

impl ExperimentSpec {
    pub fn new(mode: Mode) -> Self {
        Self {
            mode,
            m: Axis::Scalar(DEFAULT_M),
            pa: Axis::Scalar(DEFAULT_PA),
            qr: None,
            qr_tagged: None,
            channel: ChannelSelection::Both,
            normalization: Normalization::Frame,
            baseline_q: BaselineQ::Own,
            seed: DEFAULT_SEED,
            frames: DEFAULT_FRAMES,
            workers: None,
            format: OutputFormat::Csv,
            out: None,
        }
    }

    fn qr_axis(&self) -> Axis {
        self.qr.unwrap_or(Axis::Scalar(DEFAULT_QR))
    }

    /// Swept axis name and values; at most one axis may be swept.
    fn sweep(&self) -> Result<(&'static str, Vec<f64>)> {
        let mut axes: Vec<(&'static str, Axis)> =
            vec![("m", self.m), ("pa", self.pa), ("qr", self.qr_axis())];
        if let Some(t) = self.qr_tagged {
            axes.push(("qr_tagged", t));
        }
        for (name, axis) in &axes {
            axis.check(name)?;
        }
        let swept: Vec<_> = axes.iter().filter(|(_, a)| a.is_swept()).collect();
        match swept.as_slice() {
            [] => Ok(("pa", self.pa.values())),
            [(name, axis)] => Ok((name, axis.values())),
            _ => Err(Error::Usage(format!(
                "only one parameter may be swept, got {}",
                swept.iter().map(|(n, _)| *n).collect::<Vec<_>>().join(", ")
            ))),
        }
    }

    fn point(&self, axis: &str, x: f64) -> Result<Point> {
        let pick = |name: &str, a: Axis| if name == axis { x } else { a.values()[0] };
        let m = pick("m", self.m);
        if m < 1.0 || m.fract() != 0.0 {
            return Err(Error::Usage(format!(
                "--m must be a positive integer, got {m}"
            )));
        }
        let qr = pick("qr", self.qr_axis());
        let point = Point {
            m: m as usize,
            pa: pick("pa", self.pa),
            qr,
            qr_tagged: self.qr_tagged.map(|t| pick("qr_tagged", t)).unwrap_or(qr),
        };
        SystemParams::new(point.m, point.pa, point.qr)
            .and_then(|p| GameParams::new(p, point.qr_tagged))
            .map_err(|e| Error::Usage(e.to_string()))?;
        Ok(point)
    }
}

#[derive(Debug, Clone, Copy)]
struct Point {
    m: usize,
    pa: f64,
    qr: f64,
    qr_tagged: f64,
}

/// Column-oriented result with cells already formatted.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn column(&self, name: &str) -> Option<Vec<&str>> {
        let idx = self.columns.iter().position(|c| c == name)?;
        Some(self.rows.iter().map(|r| r[idx].as_str()).collect())
    }

    /// Numeric column; failed and undefined cells become `None`.
    pub fn numbers(&self, name: &str) -> Option<Vec<Option<f64>>> {
        Some(
            self.column(name)?
                .into_iter()
                .map(|c| c.parse().ok())
                .collect(),
        )
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.columns)?;
        for row in &self.rows {
            w.write_record(row)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    /// `{"columns": [...], "rows": [[...], ...]}` with numeric cells as numbers.
    pub fn to_json(&self) -> Result<String> {
        let rows: Vec<Vec<serde_json::Value>> = self
            .rows
            .iter()
            .map(|r| {
                r.iter()
                    .map(|c| match c.parse::<f64>() {
                        Ok(x) if x.is_finite() => serde_json::json!(x),
                        _ => serde_json::Value::String(c.clone()),
                    })
                    .collect()
            })
            .collect();
        Ok(serde_json::to_string_pretty(
            &serde_json::json!({ "columns": self.columns, "rows": rows }),
        )?)
    }
}

/// Provenance written next to every output file.
#[derive(Debug, Clone, Serialize)]
pub struct Sidecar {
    pub tool: &'static str,
    pub version: &'static str,
    pub spec: ExperimentSpec,
    /// Values chosen by the tool rather than the caller.
    pub defaults: BTreeMap<String, String>,
    pub elapsed_ms: u128,
    pub rows: usize,
    pub failed_cells: usize,
}

#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    pub table: Table,
    pub sidecar: Sidecar,
}

impl ExperimentOutput {
    /// Writes the table to `path` and the sidecar to `path` + `.json`
    /// (`.meta.json` when the table itself is JSON).
    pub fn write(&self, path: &Path, format: OutputFormat) -> Result<PathBuf> {
        let body = match format {
            OutputFormat::Csv => self.table.to_csv()?,
            OutputFormat::Json => self.table.to_json()?,
        };
        std::fs::write(path, body)?;
        let sidecar = sidecar_path(path, format);
        std::fs::write(&sidecar, serde_json::to_string_pretty(&self.sidecar)?)?;
        Ok(sidecar)
    }
}

pub fn sidecar_path(path: &Path, format: OutputFormat) -> PathBuf {
    let suffix = match format {
        OutputFormat::Csv => ".json",
        OutputFormat::Json => ".meta.json",
    };
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

/// Evaluates the requested model at every grid point.
///
/// Points are evaluated concurrently; rows come out in grid order. A point
/// whose evaluation fails gets `error` cells and the run continues.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<ExperimentOutput> {
    let started = Instant::now();
    let run = || -> Result<(Table, BTreeMap<String, String>)> {
        match spec.mode {
            Mode::Figure(id) => reproduce_figure(id, spec),
            _ => sweep(spec),
        }
    };
    let (table, defaults) = match spec.workers {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build()
            .map_err(|e| Error::Usage(format!("cannot start {n} workers: {e}")))?
            .install(run)?,
        None => run()?,
    };
    let failed_cells = table.rows.iter().flatten().filter(|c| *c == FAILED).count();
    Ok(ExperimentOutput {
        sidecar: Sidecar {
            tool: TOOL_NAME,
            version: TOOL_VERSION,
            spec: spec.clone(),
            defaults,
            elapsed_ms: started.elapsed().as_millis(),
            rows: table.rows.len(),
            failed_cells,
        },
        table,
    })
}

fn sweep(spec: &ExperimentSpec) -> Result<(Table, BTreeMap<String, String>)> {
    let (axis, xs) = spec.sweep()?;
    let channels = spec.channel.channels();
    let metric_names = metric_columns(spec);

    let mut columns = vec![axis.to_string()];
    for ch in &channels {
        columns.extend(metric_names.iter().map(|m| format!("{m}_{ch}")));
    }
    let points = xs
        .iter()
        .map(|&x| spec.point(axis, x))
        .collect::<Result<Vec<_>>>()?;
    let rows = points
        .par_iter()
        .zip(xs.par_iter())
        .map(|(point, &x)| {
            let mut row = vec![sig(x)];
            for &ch in &channels {
                match evaluate(spec, point, ch) {
                    Ok(cells) => row.extend(cells),
                    Err(_) => {
                        row.extend(std::iter::repeat_n(FAILED.to_string(), metric_names.len()))
                    }
                }
            }
            row
        })
        .collect();

    let mut defaults = BTreeMap::new();
    if spec.qr.is_none() {
        defaults.insert("qr".into(), DEFAULT_QR.to_string());
    }
    if matches!(spec.mode, Mode::Game | Mode::Simulate) && spec.qr_tagged.is_none() {
        defaults.insert("qr_tagged".into(), "equal to qr".into());
    }
    defaults.insert("delay_unit".into(), "frames".into());
    Ok((Table { columns, rows }, defaults))
}

fn metric_columns(spec: &ExperimentSpec) -> Vec<&'static str> {
    let slot = spec.normalization == Normalization::Slot;
    match spec.mode {
        Mode::Team => {
            if slot {
                vec![
                    "throughput_per_slot",
                    "avg_backlog",
                    "delay_frames",
                    "new_throughput_per_slot",
                    "backlog_throughput_per_slot",
                    "backlog_delay_frames",
                    "expected_frame_len",
                ]
            } else {
                vec![
                    "throughput",
                    "avg_backlog",
                    "delay_frames",
                    "new_throughput",
                    "backlog_throughput",
                    "backlog_delay_frames",
                    "expected_frame_len",
                ]
            }
        }
        Mode::Game => vec![
            "tagged_throughput",
            "tagged_backlog_prob",
            "tagged_delay_frames",
            "tagged_backlog_delay_frames",
        ],
        Mode::BestResponse => vec!["q_br", "br_throughput", "br_flat"],
        Mode::Equilibrium => vec![
            "q_star",
            "tagged_throughput",
            "tagged_delay_frames",
            "br_residual",
            "fixed_points",
        ],
        Mode::Optimize => vec!["q_opt", "throughput_opt", "delay_frames_opt", "flat"],
        Mode::Simulate => {
            let mut cols = vec![
                "throughput",
                "throughput_se",
                "throughput_per_slot",
                "throughput_per_slot_se",
                "avg_backlog",
                "avg_backlog_se",
                "delay_frames",
                "delay_frames_se",
                "backlog_delay_frames",
                "backlog_delay_frames_se",
            ];
            if spec.qr_tagged.is_some() {
                cols.extend([
                    "tagged_throughput",
                    "tagged_throughput_se",
                    "tagged_backlog_prob",
                    "tagged_backlog_prob_se",
                ]);
            }
            cols
        }
        Mode::Figure(_) => Vec::new(),
    }
}

fn evaluate(spec: &ExperimentSpec, p: &Point, channel: ChannelModel) -> Result<Vec<String>> {
    let params = SystemParams::new(p.m, p.pa, p.qr)?;
    let slot = spec.normalization == Normalization::Slot;
    Ok(match spec.mode {
        Mode::Team => {
            let t = team_metrics(&params, channel)?;
            check_team(&t, &params)?;
            let scale = if slot { t.expected_frame_len } else { 1.0 };
            vec![
                sig(t.throughput / scale),
                sig(t.avg_backlog),
                opt(t.delay),
                sig(t.new_throughput / scale),
                sig(t.backlog_throughput / scale),
                opt(t.backlog_delay),
                sig(t.expected_frame_len),
            ]
        }
        Mode::Game => {
            let game = GameParams::new(params, p.qr_tagged)?;
            let t = tagged_metrics(&game, channel)?;
            check_tagged(&t, p.pa)?;
            vec![
                sig(t.throughput),
                sig(t.backlog_prob),
                opt(t.delay),
                opt(t.backlog_delay),
            ]
        }
        Mode::BestResponse => {
            let br = best_response(&params, channel)?;
            vec![sig(br.q_br), sig(br.throughput), br.flat.to_string()]
        }
        Mode::Equilibrium => {
            let eq = find_equilibrium(p.m, p.pa, channel)?;
            let t = tagged_metrics(
                &GameParams::symmetric(params.with_retransmit(eq.q_star)?),
                channel,
            )?;
            vec![
                sig(eq.q_star),
                sig(eq.tagged_throughput),
                opt(t.delay),
                sig(eq.br_residual),
                eq.fixed_points.len().to_string(),
            ]
        }
        Mode::Optimize => {
            let o = optimize_team(p.m, p.pa, channel)?;
            let t = team_metrics(&params.with_retransmit(o.q_opt)?, channel)?;
            let th = if slot {
                t.throughput_per_slot
            } else {
                o.throughput
            };
            vec![sig(o.q_opt), sig(th), opt(t.delay), o.flat.to_string()]
        }
        Mode::Simulate => {
            let mut cfg = SimConfig::new(params, channel, spec.frames, spec.seed);
            if spec.qr_tagged.is_some() {
                cfg = cfg.with_tagged(p.qr_tagged);
            }
            let r = run_sim(&cfg)?;
            let est = |e: Option<crate::sim::Estimate>| match e {
                Some(e) => [sig(e.mean), sig(e.se)],
                None => [
                    crate::format::UNDEFINED.to_string(),
                    crate::format::UNDEFINED.to_string(),
                ],
            };
            let mut cells = Vec::new();
            cells.extend(est(Some(r.throughput_per_frame)));
            cells.extend(est(Some(r.throughput_per_slot)));
            cells.extend(est(Some(r.avg_backlog)));
            cells.extend(est(r.delay_frames));
            cells.extend(est(r.backlog_delay));
            if let Some(t) = &r.tagged {
                cells.extend(est(Some(t.throughput)));
                cells.extend(est(Some(t.backlog_prob)));
            }
            cells
        }
        Mode::Figure(_) => unreachable!("figures are handled by reproduce_figure"),
    })
}

/// Range checks every emitted team row must pass.
pub fn check_team(t: &TeamMetrics, params: &SystemParams) -> Result<()> {
    let m = params.num_users() as f64;
    let ok = t.throughput >= -1e-12
        && t.throughput <= m * params.arrival_prob() + 1e-9
        && (-1e-12..=m + 1e-12).contains(&t.avg_backlog)
        && t.delay.is_none_or(|d| d >= 1.0 - 1e-12)
        && t.backlog_delay.is_none_or(|d| d >= 1.0 - 1e-12)
        && (t.new_throughput + t.backlog_throughput - t.throughput).abs() < 1e-9;
    if ok {
        Ok(())
    } else {
        Err(Error::Domain(format!(
            "team metrics violate their invariants: {t:?}"
        )))
    }
}

pub fn check_tagged(t: &TaggedMetrics, arrival_prob: f64) -> Result<()> {
    let ok = t.throughput >= -1e-12
        && t.throughput <= arrival_prob + 1e-12
        && (-1e-12..=1.0 + 1e-12).contains(&t.backlog_prob)
        && t.delay.is_none_or(|d| d >= 1.0 - 1e-12);
    if ok {
        Ok(())
    } else {
        Err(Error::Domain(format!(
            "tagged metrics violate their invariants: {t:?}"
        )))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn axis_parsing() {
        assert_eq!("0.5".parse::<Axis>().unwrap(), Axis::Scalar(0.5));
        let a: Axis = "0.1:0.9:0.1".parse().unwrap();
        assert_eq!(a.values().len(), 9);
        assert!("0.1:0.9".parse::<Axis>().is_err());
        assert!("0.1:0.9:0".parse::<Axis>().is_err());
        assert!("0.9:0.1:0.1".parse::<Axis>().is_err());
        assert!("x".parse::<Axis>().is_err());
        assert_eq!(a.to_string(), "0.1:0.9:0.1");
    }

    #[test]
    fn one_swept_axis_only() {
        let mut spec = ExperimentSpec::new(Mode::Team);
        spec.pa = "0.1:0.3:0.1".parse().unwrap();
        spec.qr = Some("0.1:0.3:0.1".parse().unwrap());
        assert!(matches!(run_experiment(&spec), Err(Error::Usage(_))));
    }

    #[test]
    fn team_sweep_rows_and_dominance() {
        let mut spec = ExperimentSpec::new(Mode::Team);
        spec.pa = "0.1:0.9:0.1".parse().unwrap();
        let out = run_experiment(&spec).unwrap();
        assert_eq!(out.table.rows.len(), 9);
        assert_eq!(out.table.columns[0], "pa");
        let z = out.table.numbers("throughput_zigzag").unwrap();
        let c = out.table.numbers("throughput_classic").unwrap();
        for (z, c) in z.iter().zip(&c) {
            assert!(z.unwrap() >= c.unwrap());
        }
        assert_eq!(out.sidecar.defaults["qr"], "0.5");
    }

    #[test]
    fn scalar_spec_gives_single_row() {
        let out = run_experiment(&ExperimentSpec::new(Mode::Team)).unwrap();
        assert_eq!(out.table.rows.len(), 1);
        assert_eq!(out.table.rows[0][0], "0.3");
    }

    #[test]
    fn out_of_range_parameters_are_usage_errors() {
        let mut spec = ExperimentSpec::new(Mode::Team);
        spec.pa = "0.5:1.5:0.5".parse().unwrap();
        assert!(matches!(run_experiment(&spec), Err(Error::Usage(_))));
        let mut spec = ExperimentSpec::new(Mode::Team);
        spec.m = Axis::Scalar(2.5);
        assert!(matches!(run_experiment(&spec), Err(Error::Usage(_))));
    }

    #[test]
    fn failing_points_are_marked() {
        // No arrivals: the optimum is undefined, so every metric cell is an error.
        let mut spec = ExperimentSpec::new(Mode::Optimize);
        spec.pa = Axis::Scalar(0.0);
        spec.channel = ChannelSelection::ZigZag;
        let out = run_experiment(&spec).unwrap();
        assert!(out.table.rows[0][1..].iter().all(|c| c == FAILED));
        assert_eq!(out.sidecar.failed_cells, 4);
    }

    #[test]
    fn analytic_output_is_byte_stable() {
        let mut spec = ExperimentSpec::new(Mode::Game);
        spec.qr_tagged = Some("0.2:1.0:0.2".parse().unwrap());
        let a = run_experiment(&spec).unwrap().table.to_csv().unwrap();
        let b = run_experiment(&spec).unwrap().table.to_csv().unwrap();
        assert_eq!(a, b);
        assert!(a.starts_with("qr_tagged,tagged_throughput_zigzag,"));
    }

    #[test]
    fn slot_normalization_divides_by_frame_length() {
        let mut spec = ExperimentSpec::new(Mode::Team);
        spec.channel = ChannelSelection::ZigZag;
        let per_frame = run_experiment(&spec).unwrap().table;
        spec.normalization = Normalization::Slot;
        let per_slot = run_experiment(&spec).unwrap().table;
        let th = per_frame.numbers("throughput_zigzag").unwrap()[0].unwrap();
        let len = per_frame.numbers("expected_frame_len_zigzag").unwrap()[0].unwrap();
        let ths = per_slot.numbers("throughput_per_slot_zigzag").unwrap()[0].unwrap();
        assert!((th / len - ths).abs() < 1e-11);
    }

    #[test]
    fn json_table_has_numbers() {
        let out = run_experiment(&ExperimentSpec::new(Mode::Team)).unwrap();
        let v: serde_json::Value = serde_json::from_str(&out.table.to_json().unwrap()).unwrap();
        assert!(v["rows"][0][1].is_number());
    }

    #[test]
    fn spec_round_trips_through_json() {
        let mut spec = ExperimentSpec::new(Mode::Figure(FigureId::Fig8));
        spec.qr = Some(Axis::Range {
            start: 0.1,
            stop: 0.5,
            step: 0.1,
        });
        let text = serde_json::to_string(&spec).unwrap();
        assert_eq!(serde_json::from_str::<ExperimentSpec>(&text).unwrap(), spec);
    }

    #[test]
    fn writes_table_and_sidecar() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("team.csv");
        let out = run_experiment(&ExperimentSpec::new(Mode::Team)).unwrap();
        let sidecar = out.write(&path, OutputFormat::Csv).unwrap();
        assert!(std::fs::read_to_string(&path).unwrap().starts_with("pa,"));
        let meta: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(sidecar).unwrap()).unwrap();
        assert_eq!(meta["tool"], TOOL_NAME);
        assert_eq!(meta["spec"]["mode"], "team");
    }
}
