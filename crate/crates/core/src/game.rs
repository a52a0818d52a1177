//! Non-cooperative model: a tagged user picks its own retransmission
//! probability against `M` others sharing a common one.
//!
//! The chain state is `(N, a)`: `N` backlogged users among the others and the
//! tagged user's own backlog flag `a`. The tagged user's payoff is its
//! throughput; a symmetric equilibrium is a common probability that is a best
//! response to itself.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::markov::{solve_stationary, StationaryDist, TransitionMatrix};
use crate::model::{
    backlog_delta, binomial_vector, check_retransmit, classify_outcome, ChannelModel, OutcomeKind,
    SystemParams,
};
use crate::search::{linspace_step, maximize_probability, GRID_STEP};
use crate::team::RATE_FLOOR;

/// Bisection on `BR(q) - q` stops at this bracket width.
pub const BISECTION_WIDTH: f64 = 1e-5;
/// Largest `|BR(q) - q|` accepted at a refined sign change. Larger values
/// mean the best response jumps across the diagonal there.
pub const FIXED_POINT_TOLERANCE: f64 = 1e-4;
/// Fixed points closer than this are the same point.
const DEDUP_DISTANCE: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GameParams {
    /// The `M` non-tagged users; `retransmit_prob` is their common choice.
    pub others: SystemParams,
    /// Retransmission probability of the tagged user.
    pub tagged_retransmit: f64,
}

impl GameParams {
    pub fn new(others: SystemParams, tagged_retransmit: f64) -> Result<Self> {
        check_retransmit(tagged_retransmit)?;
        Ok(Self {
            others,
            tagged_retransmit,
        })
    }

    /// All `M + 1` users retransmit with the same probability.
    pub fn symmetric(others: SystemParams) -> Self {
        Self {
            tagged_retransmit: others.retransmit_prob(),
            others,
        }
    }

    pub fn num_others(&self) -> usize {
        self.others.num_users()
    }

    pub fn arrival_prob(&self) -> f64 {
        self.others.arrival_prob()
    }

    pub fn num_states(&self) -> usize {
        2 * (self.num_others() + 1)
    }
}

/// Chain state `(N, a)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub struct GameState {
    pub n_backlogged: usize,
    pub tagged_backlogged: bool,
}

impl GameState {
    pub fn index(&self) -> usize {
        2 * self.n_backlogged + self.tagged_backlogged as usize
    }

    pub fn from_index(index: usize) -> Self {
        Self {
            n_backlogged: index / 2,
            tagged_backlogged: index % 2 == 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TaggedMetrics {
    /// Stationary probability that the tagged user holds a backlogged packet.
    pub backlog_prob: f64,
    /// `p_a Σ_N π(N, 0)`, packets per frame.
    pub throughput: f64,
    /// `1 + S / TH` in frames; `None` without traffic.
    pub delay: Option<f64>,
    /// Rate at which the tagged user's packets enter (and leave) the backlog.
    pub backlog_throughput: f64,
    /// Delay of tagged packets that were backlogged at least once.
    pub backlog_delay: Option<f64>,
    /// Expected tagged deliveries per frame summed over outcomes.
    pub event_throughput: f64,
    /// Mean backlog among the other users.
    pub others_backlog: f64,
}

#[derive(Debug, Clone)]
pub struct GameAnalysis {
    pub params: GameParams,
    pub channel: ChannelModel,
    pub matrix: TransitionMatrix,
    pub stationary: StationaryDist,
    pub metrics: TaggedMetrics,
}

/// One joint action of a frame: the tagged user's choice and the others'
/// attempt counts, with the resulting next state.
#[derive(Debug, Clone, Copy)]
struct GameEvent {
    prob: f64,
    tagged_attempts: bool,
    kind: OutcomeKind,
    next: GameState,
}

fn for_each_event(
    state: GameState,
    game: &GameParams,
    channel: ChannelModel,
    mut visit: impl FnMut(GameEvent),
) {
    let m = game.num_others();
    let n = state.n_backlogged;
    let new_dist = binomial_vector(m - n, game.arrival_prob());
    let retx_dist = binomial_vector(n, game.others.retransmit_prob());
    let tagged_prob = if state.tagged_backlogged {
        game.tagged_retransmit
    } else {
        game.arrival_prob()
    };

    for (tagged_attempts, p_tag) in [(true, tagged_prob), (false, 1.0 - tagged_prob)] {
        if p_tag == 0.0 {
            continue;
        }
        let tag = tagged_attempts as usize;
        let (tag_new, tag_retx) = if state.tagged_backlogged {
            (0, tag)
        } else {
            (tag, 0)
        };
        for (i_a, &pa) in new_dist.iter().enumerate() {
            if pa == 0.0 {
                continue;
            }
            for (i_r, &pr) in retx_dist.iter().enumerate() {
                if pr == 0.0 {
                    continue;
                }
                let outcome = classify_outcome(i_a + tag_new, i_r + tag_retx, channel);
                // Others' share of the backlog update.
                let others_only = crate::model::SlotOutcome {
                    kind: outcome.kind,
                    new_attempts: i_a,
                    retx_attempts: i_r,
                };
                let delta = backlog_delta(&others_only).delta;
                let tagged_next = if tagged_attempts {
                    outcome.kind == OutcomeKind::Collision
                } else {
                    state.tagged_backlogged
                };
                visit(GameEvent {
                    prob: p_tag * pa * pr,
                    tagged_attempts,
                    kind: outcome.kind,
                    next: GameState {
                        n_backlogged: (n as i64 + delta) as usize,
                        tagged_backlogged: tagged_next,
                    },
                });
            }
        }
    }
}

fn labels(m: usize) -> Vec<String> {
    (0..2 * (m + 1))
        .map(|i| {
            let s = GameState::from_index(i);
            format!("N={},a={}", s.n_backlogged, s.tagged_backlogged as u8)
        })
        .collect()
}

/// Two-dimensional tagged-user chain over `(N, a)`, indexed `2N + a`.
pub fn build_game_chain(game: &GameParams, channel: ChannelModel) -> Result<TransitionMatrix> {
    let dim = game.num_states();
    let mut p = DMatrix::zeros(dim, dim);
    for from in 0..dim {
        for_each_event(GameState::from_index(from), game, channel, |e| {
            p[(from, e.next.index())] += e.prob;
        });
    }
    TransitionMatrix::new(p, labels(game.num_others()))
}

pub fn game_analysis(game: &GameParams, channel: ChannelModel) -> Result<GameAnalysis> {
    let matrix = build_game_chain(game, channel)?;
    let stationary = solve_stationary(&matrix)?;

    let mut backlog_prob = 0.0;
    let mut unbacklogged = 0.0;
    let mut others_backlog = 0.0;
    let mut event_throughput = 0.0;
    let mut backlog_entry = 0.0;
    for index in 0..game.num_states() {
        let pi = stationary[index];
        let state = GameState::from_index(index);
        if state.tagged_backlogged {
            backlog_prob += pi;
        } else {
            unbacklogged += pi;
        }
        others_backlog += pi * state.n_backlogged as f64;
        if pi == 0.0 {
            continue;
        }
        for_each_event(state, game, channel, |e| {
            if !e.tagged_attempts {
                return;
            }
            if e.kind == OutcomeKind::Collision {
                if !state.tagged_backlogged {
                    backlog_entry += pi * e.prob;
                }
            } else {
                event_throughput += pi * e.prob;
            }
        });
    }

    let throughput = game.arrival_prob() * unbacklogged;
    let delay = (throughput > 0.0).then(|| 1.0 + backlog_prob / throughput);
    let backlog_delay = (backlog_entry > RATE_FLOOR).then(|| 1.0 + backlog_prob / backlog_entry);
    let metrics = TaggedMetrics {
        backlog_prob,
        throughput,
        delay,
        backlog_throughput: backlog_entry,
        backlog_delay,
        event_throughput,
        others_backlog,
    };
    Ok(GameAnalysis {
        params: *game,
        channel,
        matrix,
        stationary,
        metrics,
    })
}

pub fn tagged_metrics(game: &GameParams, channel: ChannelModel) -> Result<TaggedMetrics> {
    game_analysis(game, channel).map(|a| a.metrics)
}

/// Tagged throughput when the others use `q_others` and the tagged user `q`.
pub fn tagged_throughput(
    num_others: usize,
    arrival_prob: f64,
    q_others: f64,
    q: f64,
    channel: ChannelModel,
) -> Result<f64> {
    let others = SystemParams::new(num_others, arrival_prob, q_others)?;
    Ok(tagged_metrics(&GameParams::new(others, q)?, channel)?.throughput)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BestResponse {
    pub q_others: f64,
    pub q_br: f64,
    pub throughput: f64,
    /// The tagged throughput does not depend on the tagged probability;
    /// `q_br` is then the smallest searched value.
    pub flat: bool,
}

/// Tagged user's throughput-maximizing retransmission probability against
/// `others` (whose `retransmit_prob` is the common probability of the others).
pub fn best_response(others: &SystemParams, channel: ChannelModel) -> Result<BestResponse> {
    let max = maximize_probability(|q| {
        Ok(tagged_metrics(&GameParams::new(*others, q)?, channel)?.throughput)
    })?;
    Ok(BestResponse {
        q_others: others.retransmit_prob(),
        q_br: max.argmax,
        throughput: max.value,
        flat: max.flat,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FixedPoint {
    pub q: f64,
    /// `|BR(q) - q|`; zero when the best response is flat at `q`.
    pub residual: f64,
    /// `TH(q, q)`.
    pub tagged_throughput: f64,
    pub flat: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EquilibriumResult {
    pub q_star: f64,
    pub br_residual: f64,
    pub tagged_throughput: f64,
    /// Sampled best responses in increasing `q`.
    pub br_curve: Vec<BestResponse>,
    pub fixed_points: Vec<FixedPoint>,
    /// More than one fixed point was found.
    pub multiple: bool,
}

impl EquilibriumResult {
    /// Best-response curve as CSV: `q,br_q,tagged_throughput`.
    pub fn write_curve_csv<W: std::io::Write>(&self, writer: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(writer);
        out.write_record(["q", "br_q", "tagged_throughput", "flat"])?;
        for s in &self.br_curve {
            out.write_record([
                crate::format::sig(s.q_others),
                crate::format::sig(s.q_br),
                crate::format::sig(s.throughput),
                s.flat.to_string(),
            ])?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Symmetric equilibrium of the retransmission game with `num_others + 1`
/// users.
///
/// `g(q) = BR(q) - q` is sampled on a 0.01 grid of `(0, 1]`; every sign change
/// is refined by bisection, `q = 1` is a candidate when `BR(1) = 1`, and a
/// flat best response makes its own `q` a fixed point. Among all fixed points
/// the one with the highest tagged throughput is returned as `q_star`.
pub fn find_equilibrium(
    num_others: usize,
    arrival_prob: f64,
    channel: ChannelModel,
) -> Result<EquilibriumResult> {
    let base = SystemParams::new(num_others, arrival_prob, 1.0)?;
    let br = |q: f64| -> Result<BestResponse> { best_response(&base.with_retransmit(q)?, channel) };

    let samples = linspace_step(GRID_STEP, 1.0, GRID_STEP);
    let curve = samples
        .par_iter()
        .map(|&q| br(q))
        .collect::<Result<Vec<_>>>()?;

    let symmetric_throughput = |q: f64| tagged_throughput(num_others, arrival_prob, q, q, channel);
    let mut candidates: Vec<FixedPoint> = Vec::new();

    for s in curve.iter().filter(|s| s.flat) {
        candidates.push(FixedPoint {
            q: s.q_others,
            residual: 0.0,
            tagged_throughput: symmetric_throughput(s.q_others)?,
            flat: true,
        });
    }

    let gap = |s: &BestResponse| s.q_br - s.q_others;
    for pair in curve.windows(2) {
        let (left, right) = (&pair[0], &pair[1]);
        if left.flat || right.flat {
            continue;
        }
        let (g_left, g_right) = (gap(left), gap(right));
        if g_left == 0.0 {
            candidates.push(FixedPoint {
                q: left.q_others,
                residual: 0.0,
                tagged_throughput: symmetric_throughput(left.q_others)?,
                flat: false,
            });
        }
        if g_left * g_right >= 0.0 {
            continue;
        }
        let (q, residual) = bisect_gap(&br, left.q_others, g_left, right.q_others, g_right)?;
        if residual <= FIXED_POINT_TOLERANCE {
            candidates.push(FixedPoint {
                q,
                residual,
                tagged_throughput: symmetric_throughput(q)?,
                flat: false,
            });
        }
    }

    if let Some(last) = curve.last() {
        let residual = (last.q_br - 1.0).abs();
        if !last.flat && residual <= BISECTION_WIDTH {
            candidates.push(FixedPoint {
                q: 1.0,
                residual,
                tagged_throughput: symmetric_throughput(1.0)?,
                flat: false,
            });
        }
    }

    let fixed_points = dedup(candidates);
    let best = fixed_points.iter().copied().reduce(|a, b| {
        if b.tagged_throughput > a.tagged_throughput {
            b
        } else {
            a
        }
    });
    match best {
        Some(best) => Ok(EquilibriumResult {
            q_star: best.q,
            br_residual: best.residual,
            tagged_throughput: best.tagged_throughput,
            multiple: fixed_points.len() > 1,
            br_curve: curve,
            fixed_points,
        }),
        None => Err(Error::NoFixedPoint {
            curve: curve.iter().map(|s| (s.q_others, s.q_br)).collect(),
        }),
    }
}

/// Bisection on `g(q) = BR(q) - q` over a bracket with a sign change.
/// Returns the bracket point with the smallest `|g|`.
fn bisect_gap<F>(
    br: &F,
    mut lo: f64,
    mut g_lo: f64,
    mut hi: f64,
    mut g_hi: f64,
) -> Result<(f64, f64)>
where
    F: Fn(f64) -> Result<BestResponse>,
{
    while hi - lo > BISECTION_WIDTH {
        let mid = 0.5 * (lo + hi);
        let s = br(mid)?;
        let g_mid = s.q_br - mid;
        if s.flat || g_mid == 0.0 {
            return Ok((mid, if s.flat { 0.0 } else { g_mid.abs() }));
        }
        if g_mid.signum() == g_lo.signum() {
            lo = mid;
            g_lo = g_mid;
        } else {
            hi = mid;
            g_hi = g_mid;
        }
    }
    // g is close to linear on the final bracket; one secant step usually
    // lands within the best-response accuracy of the root.
    let secant = lo - g_lo * (hi - lo) / (g_hi - g_lo);
    let g_secant = br(secant)?.q_br - secant;
    let best = [(lo, g_lo), (secant, g_secant), (hi, g_hi)]
        .into_iter()
        .min_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
        .expect("non-empty");
    Ok((best.0, best.1.abs()))
}

fn dedup(mut points: Vec<FixedPoint>) -> Vec<FixedPoint> {
    points.sort_by(|a, b| a.q.total_cmp(&b.q));
    let mut out: Vec<FixedPoint> = Vec::with_capacity(points.len());
    for p in points {
        match out.last_mut() {
            Some(last) if (p.q - last.q).abs() < DEDUP_DISTANCE => {
                if p.residual < last.residual {
                    *last = p;
                }
            }
            _ => out.push(p),
        }
    }
    out
}
