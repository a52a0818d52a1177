//! Frame-level Monte Carlo simulation of slotted Aloha with an optional
//! ZigZag receiver.
//!
//! Users are simulated individually so that packet delays can be measured
//! directly. Arrivals are drawn once per frame, like the analytic chains.
//! Standard errors come from batch means.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::game::{game_analysis, GameParams, GameState, TaggedMetrics};
use crate::model::{classify_outcome, ChannelModel, OutcomeKind, SystemParams};
use crate::team::{team_analysis, TeamMetrics};

pub const GENERATOR: &str = "ChaCha8Rng";
pub const DEFAULT_BATCHES: usize = 50;
/// Discrepancies above this many standard errors fail a comparison.
pub const Z_THRESHOLD: f64 = 3.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SimConfig {
    pub params: SystemParams,
    /// Adds one extra user with its own retransmission probability.
    pub tagged_retransmit: Option<f64>,
    pub channel: ChannelModel,
    /// Total frames simulated, warmup included.
    pub horizon_frames: u64,
    pub warmup_frames: u64,
    pub seed: u64,
    pub batches: usize,
}

impl SimConfig {
    pub fn new(
        params: SystemParams,
        channel: ChannelModel,
        horizon_frames: u64,
        seed: u64,
    ) -> Self {
        Self {
            params,
            tagged_retransmit: None,
            channel,
            horizon_frames,
            warmup_frames: horizon_frames / 100,
            seed,
            batches: DEFAULT_BATCHES,
        }
    }

    pub fn with_tagged(mut self, tagged_retransmit: f64) -> Self {
        self.tagged_retransmit = Some(tagged_retransmit);
        self
    }

    pub fn with_warmup(mut self, warmup_frames: u64) -> Self {
        self.warmup_frames = warmup_frames;
        self
    }

    fn validate(&self) -> Result<()> {
        if self.horizon_frames <= self.warmup_frames {
            return Err(Error::Domain(format!(
                "horizon ({}) must exceed warmup ({})",
                self.horizon_frames, self.warmup_frames
            )));
        }
        if self.batches < 30 {
            return Err(Error::Domain(format!(
                "{} batches; at least 30 are needed",
                self.batches
            )));
        }
        if self.horizon_frames - self.warmup_frames < self.batches as u64 {
            return Err(Error::Domain("fewer measured frames than batches".into()));
        }
        if let Some(q) = self.tagged_retransmit {
            crate::model::check_retransmit(q)?;
        }
        Ok(())
    }

    fn num_states(&self) -> usize {
        let m = self.params.num_users();
        if self.tagged_retransmit.is_some() {
            2 * (m + 1)
        } else {
            m + 1
        }
    }
}

/// Sample mean with its batch-means standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Estimate {
    pub mean: f64,
    pub se: f64,
}

impl Estimate {
    fn from_batches(mean: f64, batch_values: &[f64]) -> Self {
        let k = batch_values.len();
        if k < 2 {
            return Self { mean, se: 0.0 };
        }
        let avg = batch_values.iter().sum::<f64>() / k as f64;
        let var = batch_values.iter().map(|v| (v - avg).powi(2)).sum::<f64>() / (k - 1) as f64;
        Self {
            mean,
            se: (var / k as f64).sqrt(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TaggedSimStats {
    pub throughput: Estimate,
    pub backlog_prob: Estimate,
    pub delay: Option<Estimate>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimReport {
    pub config: SimConfig,
    pub generator: &'static str,
    pub frames_measured: u64,
    pub slots_measured: u64,
    /// Deliveries per frame (all users).
    pub throughput_per_frame: Estimate,
    pub throughput_per_slot: Estimate,
    /// Deliveries per frame of packets that were never backlogged.
    pub new_throughput: Estimate,
    /// Backlogged users at the start of a frame (all users).
    pub avg_backlog: Estimate,
    /// Backlogged users among the non-tagged users.
    pub others_backlog: Estimate,
    /// Frames from first attempt to delivery, inclusive.
    pub delay_frames: Option<Estimate>,
    /// Same, restricted to packets that were backlogged at least once.
    pub backlog_delay: Option<Estimate>,
    pub tagged: Option<TaggedSimStats>,
    /// Fraction of frames starting in each chain state (`N`, or `2N + a`
    /// with a tagged user).
    pub state_occupancy: Vec<Estimate>,
    pub collisions: u64,
    pub zigzag_frames: u64,
    /// Whole-run packet accounting, warmup included.
    pub arrivals: u64,
    pub deliveries: u64,
    pub final_backlog: u64,
}

impl SimReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

#[derive(Debug, Clone, Default)]
struct Batch {
    frames: u64,
    slots: u64,
    delivered: u64,
    delivered_new: u64,
    backlog_sum: u64,
    others_backlog_sum: u64,
    delay_sum: u64,
    delay_count: u64,
    backlog_delay_sum: u64,
    backlog_delay_count: u64,
    tagged_delivered: u64,
    tagged_backlogged_frames: u64,
    tagged_delay_sum: u64,
    tagged_delay_count: u64,
    occupancy: Vec<u64>,
}

#[derive(Debug, Clone, Copy, Default)]
struct User {
    backlogged: bool,
    /// Frame of the first transmission of the packet in hand.
    first_attempt: u64,
}

pub fn run_sim(config: &SimConfig) -> Result<SimReport> {
    simulate(config, None::<&mut std::io::Sink>)
}

/// Runs the simulation and writes one CSV record per frame:
/// `frame,slots_elapsed,attempts,outcome,backlog`.
pub fn run_sim_traced<W: Write>(config: &SimConfig, trace: &mut W) -> Result<SimReport> {
    simulate(config, Some(trace))
}

fn simulate<W: Write>(config: &SimConfig, trace: Option<&mut W>) -> Result<SimReport> {
    config.validate()?;
    let mut trace = trace.map(csv::Writer::from_writer);
    if let Some(t) = trace.as_mut() {
        t.write_record(["frame", "slots_elapsed", "attempts", "outcome", "backlog"])?;
    }

    let m = config.params.num_users();
    let tagged = config.tagged_retransmit.is_some();
    let population = m + tagged as usize;
    let retransmit: Vec<f64> = (0..population)
        .map(|u| {
            if u < m {
                config.params.retransmit_prob()
            } else {
                config.tagged_retransmit.unwrap_or(1.0)
            }
        })
        .collect();
    let arrival = config.params.arrival_prob();

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut users = vec![User::default(); population];
    let mut transmitting: Vec<usize> = Vec::with_capacity(population);

    let measured = config.horizon_frames - config.warmup_frames;
    let batch_len = measured / config.batches as u64;
    let mut batches: Vec<Batch> = (0..config.batches)
        .map(|_| Batch {
            occupancy: vec![0; config.num_states()],
            ..Batch::default()
        })
        .collect();

    let mut arrivals = 0u64;
    let mut deliveries = 0u64;
    let mut collisions = 0u64;
    let mut zigzag_frames = 0u64;
    let mut slots_elapsed = 0u64;
    let mut others_backlog = 0usize;
    let mut tagged_backlogged = false;

    for frame in 0..config.horizon_frames {
        let batch = if frame >= config.warmup_frames {
            let k = ((frame - config.warmup_frames) / batch_len).min(config.batches as u64 - 1);
            Some(k as usize)
        } else {
            None
        };
        if let Some(b) = batch {
            let b = &mut batches[b];
            let state = if tagged {
                GameState {
                    n_backlogged: others_backlog,
                    tagged_backlogged,
                }
                .index()
            } else {
                others_backlog
            };
            b.occupancy[state] += 1;
            b.others_backlog_sum += others_backlog as u64;
            b.backlog_sum += (others_backlog + tagged_backlogged as usize) as u64;
            b.tagged_backlogged_frames += tagged_backlogged as u64;
        }

        transmitting.clear();
        let mut new_attempts = 0;
        for (u, user) in users.iter_mut().enumerate() {
            if user.backlogged {
                if rng.random::<f64>() < retransmit[u] {
                    transmitting.push(u);
                }
            } else if rng.random::<f64>() < arrival {
                user.first_attempt = frame;
                arrivals += 1;
                new_attempts += 1;
                transmitting.push(u);
            }
        }
        let outcome = classify_outcome(
            new_attempts,
            transmitting.len() - new_attempts,
            config.channel,
        );
        let frame_slots = outcome.frame_slots() as u64;
        slots_elapsed += frame_slots;

        match outcome.kind {
            OutcomeKind::Idle => {}
            OutcomeKind::Success | OutcomeKind::ZigZagResolved => {
                if outcome.kind == OutcomeKind::ZigZagResolved {
                    zigzag_frames += 1;
                }
                for &u in &transmitting {
                    let user = &mut users[u];
                    let delay = frame - user.first_attempt + 1;
                    let was_backlogged = user.backlogged;
                    user.backlogged = false;
                    deliveries += 1;
                    if was_backlogged {
                        if u < m {
                            others_backlog -= 1;
                        } else {
                            tagged_backlogged = false;
                        }
                    }
                    if let Some(b) = batch {
                        let b = &mut batches[b];
                        b.delivered += 1;
                        b.delay_sum += delay;
                        b.delay_count += 1;
                        if was_backlogged {
                            b.backlog_delay_sum += delay;
                            b.backlog_delay_count += 1;
                        } else {
                            b.delivered_new += 1;
                        }
                        if u == m {
                            b.tagged_delivered += 1;
                            b.tagged_delay_sum += delay;
                            b.tagged_delay_count += 1;
                        }
                    }
                }
            }
            OutcomeKind::Collision => {
                collisions += 1;
                for &u in &transmitting {
                    let user = &mut users[u];
                    if !user.backlogged {
                        user.backlogged = true;
                        if u < m {
                            others_backlog += 1;
                        } else {
                            tagged_backlogged = true;
                        }
                    }
                }
            }
        }

        if let Some(b) = batch {
            batches[b].frames += 1;
            batches[b].slots += frame_slots;
        }
        if let Some(t) = trace.as_mut() {
            t.write_record([
                frame.to_string(),
                slots_elapsed.to_string(),
                transmitting.len().to_string(),
                format!("{:?}", outcome.kind),
                (others_backlog + tagged_backlogged as usize).to_string(),
            ])?;
        }
    }
    if let Some(t) = trace.as_mut() {
        t.flush()?;
    }

    let final_backlog = users.iter().filter(|u| u.backlogged).count() as u64;
    Ok(summarize(
        config,
        &batches,
        Totals {
            arrivals,
            deliveries,
            collisions,
            zigzag_frames,
            final_backlog,
        },
    ))
}

struct Totals {
    arrivals: u64,
    deliveries: u64,
    collisions: u64,
    zigzag_frames: u64,
    final_backlog: u64,
}

fn ratio_estimate(
    batches: &[Batch],
    num: impl Fn(&Batch) -> u64,
    den: impl Fn(&Batch) -> u64,
) -> Option<Estimate> {
    let total_num: u64 = batches.iter().map(&num).sum();
    let total_den: u64 = batches.iter().map(&den).sum();
    if total_den == 0 {
        return None;
    }
    let values: Vec<f64> = batches
        .iter()
        .filter(|b| den(b) > 0)
        .map(|b| num(b) as f64 / den(b) as f64)
        .collect();
    Some(Estimate::from_batches(
        total_num as f64 / total_den as f64,
        &values,
    ))
}

fn summarize(config: &SimConfig, batches: &[Batch], totals: Totals) -> SimReport {
    let per_frame = |num: fn(&Batch) -> u64| {
        ratio_estimate(batches, num, |b| b.frames).expect("measured frames")
    };
    let tagged = config.tagged_retransmit.is_some().then(|| TaggedSimStats {
        throughput: per_frame(|b| b.tagged_delivered),
        backlog_prob: per_frame(|b| b.tagged_backlogged_frames),
        delay: ratio_estimate(batches, |b| b.tagged_delay_sum, |b| b.tagged_delay_count),
    });
    let state_occupancy = (0..config.num_states())
        .map(|s| {
            ratio_estimate(batches, |b| b.occupancy[s], |b| b.frames).expect("measured frames")
        })
        .collect();

    SimReport {
        config: *config,
        generator: GENERATOR,
        frames_measured: batches.iter().map(|b| b.frames).sum(),
        slots_measured: batches.iter().map(|b| b.slots).sum(),
        throughput_per_frame: per_frame(|b| b.delivered),
        throughput_per_slot: ratio_estimate(batches, |b| b.delivered, |b| b.slots)
            .expect("measured slots"),
        new_throughput: per_frame(|b| b.delivered_new),
        avg_backlog: per_frame(|b| b.backlog_sum),
        others_backlog: per_frame(|b| b.others_backlog_sum),
        delay_frames: ratio_estimate(batches, |b| b.delay_sum, |b| b.delay_count),
        backlog_delay: ratio_estimate(batches, |b| b.backlog_delay_sum, |b| b.backlog_delay_count),
        tagged,
        state_occupancy,
        collisions: totals.collisions,
        zigzag_frames: totals.zigzag_frames,
        arrivals: totals.arrivals,
        deliveries: totals.deliveries,
        final_backlog: totals.final_backlog,
    }
}

/// Analytic values a simulation is checked against.
#[derive(Debug, Clone)]
pub enum AnalyticReference {
    Team {
        params: SystemParams,
        channel: ChannelModel,
        metrics: TeamMetrics,
        stationary: Vec<f64>,
    },
    Tagged {
        game: GameParams,
        channel: ChannelModel,
        metrics: TaggedMetrics,
        stationary: Vec<f64>,
    },
}

impl AnalyticReference {
    pub fn team(params: &SystemParams, channel: ChannelModel) -> Result<Self> {
        let a = team_analysis(params, channel)?;
        Ok(Self::Team {
            params: *params,
            channel,
            metrics: a.metrics,
            stationary: a.stationary.probabilities,
        })
    }

    pub fn tagged(game: &GameParams, channel: ChannelModel) -> Result<Self> {
        let a = game_analysis(game, channel)?;
        Ok(Self::Tagged {
            game: *game,
            channel,
            metrics: a.metrics,
            stationary: a.stationary.probabilities,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricDiscrepancy {
    pub metric: String,
    pub simulated: f64,
    pub analytic: f64,
    pub se: f64,
    /// `|simulated - analytic| / se`.
    pub z: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiscrepancyReport {
    pub metrics: Vec<MetricDiscrepancy>,
    pub max_z: f64,
    /// Every `z` is below [`Z_THRESHOLD`].
    pub pass: bool,
}

impl DiscrepancyReport {
    pub fn get(&self, metric: &str) -> Option<&MetricDiscrepancy> {
        self.metrics.iter().find(|d| d.metric == metric)
    }
}

/// Per-metric z-scores of a simulation against the analytic chain.
///
/// Only the structure (population, channel, presence of a tagged user) must
/// match; rate parameters may differ, which is how sensitivity is checked.
pub fn compare_to_chain(
    report: &SimReport,
    reference: &AnalyticReference,
) -> Result<DiscrepancyReport> {
    let cfg = &report.config;
    let mut rows = Vec::new();
    let n = report.frames_measured as f64;
    match reference {
        AnalyticReference::Team {
            params,
            channel,
            metrics,
            stationary,
        } => {
            check_structure(cfg, params.num_users(), *channel, false)?;
            rows.push(discrepancy(
                "throughput",
                report.throughput_per_frame,
                metrics.throughput,
            ));
            rows.push(discrepancy(
                "throughput_per_slot",
                report.throughput_per_slot,
                metrics.throughput_per_slot,
            ));
            rows.push(discrepancy(
                "new_throughput",
                report.new_throughput,
                metrics.new_throughput,
            ));
            rows.push(discrepancy(
                "avg_backlog",
                report.avg_backlog,
                metrics.avg_backlog,
            ));
            push_optional(&mut rows, "delay", report.delay_frames, metrics.delay);
            push_optional(
                &mut rows,
                "backlog_delay",
                report.backlog_delay,
                metrics.backlog_delay,
            );
            push_occupancy(&mut rows, &report.state_occupancy, stationary, n, |i| {
                format!("state[N={i}]")
            });
        }
        AnalyticReference::Tagged {
            game,
            channel,
            metrics,
            stationary,
        } => {
            check_structure(cfg, game.num_others(), *channel, true)?;
            let tagged = report
                .tagged
                .as_ref()
                .expect("tagged config has tagged stats");
            rows.push(discrepancy(
                "tagged_throughput",
                tagged.throughput,
                metrics.throughput,
            ));
            rows.push(discrepancy(
                "tagged_backlog_prob",
                tagged.backlog_prob,
                metrics.backlog_prob,
            ));
            rows.push(discrepancy(
                "others_backlog",
                report.others_backlog,
                metrics.others_backlog,
            ));
            push_optional(&mut rows, "tagged_delay", tagged.delay, metrics.delay);
            push_occupancy(&mut rows, &report.state_occupancy, stationary, n, |i| {
                let s = GameState::from_index(i);
                format!(
                    "state[N={},a={}]",
                    s.n_backlogged, s.tagged_backlogged as u8
                )
            });
        }
    }
    let max_z = rows.iter().map(|d| d.z).fold(0.0, f64::max);
    Ok(DiscrepancyReport {
        pass: max_z < Z_THRESHOLD,
        max_z,
        metrics: rows,
    })
}

fn check_structure(
    cfg: &SimConfig,
    num_users: usize,
    channel: ChannelModel,
    tagged: bool,
) -> Result<()> {
    if cfg.params.num_users() != num_users {
        return Err(Error::Mismatch(format!(
            "simulated {} users, reference has {num_users}",
            cfg.params.num_users()
        )));
    }
    if cfg.channel != channel {
        return Err(Error::Mismatch(format!(
            "simulated {} channel, reference is {channel}",
            cfg.channel
        )));
    }
    if cfg.tagged_retransmit.is_some() != tagged {
        return Err(Error::Mismatch(
            "tagged user present in only one of simulation and reference".into(),
        ));
    }
    Ok(())
}

fn z_score(diff: f64, se: f64) -> f64 {
    if diff <= 1e-12 {
        0.0
    } else if se > 0.0 {
        diff / se
    } else {
        f64::INFINITY
    }
}

fn discrepancy(metric: &str, sim: Estimate, analytic: f64) -> MetricDiscrepancy {
    let diff = (sim.mean - analytic).abs();
    MetricDiscrepancy {
        metric: metric.to_string(),
        simulated: sim.mean,
        analytic,
        se: sim.se,
        z: z_score(diff, sim.se),
    }
}

fn push_optional(
    rows: &mut Vec<MetricDiscrepancy>,
    metric: &str,
    sim: Option<Estimate>,
    analytic: Option<f64>,
) {
    if let (Some(sim), Some(analytic)) = (sim, analytic) {
        rows.push(discrepancy(metric, sim, analytic));
    }
}

/// States never visited in the run have a zero batch SE; for those the
/// binomial SE of the analytic probability over the run length is used.
fn push_occupancy(
    rows: &mut Vec<MetricDiscrepancy>,
    sim: &[Estimate],
    analytic: &[f64],
    frames: f64,
    name: impl Fn(usize) -> String,
) {
    for (i, (s, &a)) in sim.iter().zip(analytic).enumerate() {
        let se = if s.se > 0.0 {
            s.se
        } else {
            (a * (1.0 - a) / frames).sqrt()
        };
        let diff = (s.mean - a).abs();
        rows.push(MetricDiscrepancy {
            metric: name(i),
            simulated: s.mean,
            analytic: a,
            se,
            z: z_score(diff, se),
        });
    }
}
