//! System parameters, attempt distributions and slot-outcome semantics.
//!
//! Everything the team chain, the game chain and the simulator agree on lives
//! here: how many users attempt in a frame, what the receiver makes of those
//! attempts, and how the backlog moves as a result.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Above this population the binomial coefficients are evaluated in log space.
const DIRECT_BINOMIAL_LIMIT: usize = 64;

/// Population size and per-frame transmission probabilities.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SystemParams {
    num_users: usize,
    arrival_prob: f64,
    retransmit_prob: f64,
}

impl SystemParams {
    pub fn new(num_users: usize, arrival_prob: f64, retransmit_prob: f64) -> Result<Self> {
        if num_users == 0 {
            return Err(Error::Domain(
                "population must contain at least one user".into(),
            ));
        }
        if !(0.0..=1.0).contains(&arrival_prob) {
            return Err(Error::Domain(format!(
                "arrival probability {arrival_prob} is outside [0, 1]"
            )));
        }
        check_retransmit(retransmit_prob)?;
        Ok(Self {
            num_users,
            arrival_prob,
            retransmit_prob,
        })
    }

    pub fn num_users(&self) -> usize {
        self.num_users
    }

    pub fn arrival_prob(&self) -> f64 {
        self.arrival_prob
    }

    pub fn retransmit_prob(&self) -> f64 {
        self.retransmit_prob
    }

    /// Same population and arrivals, different retransmission probability.
    pub fn with_retransmit(&self, retransmit_prob: f64) -> Result<Self> {
        Self::new(self.num_users, self.arrival_prob, retransmit_prob)
    }

    pub fn with_num_users(&self, num_users: usize) -> Result<Self> {
        Self::new(num_users, self.arrival_prob, self.retransmit_prob)
    }
}

pub(crate) fn check_retransmit(q: f64) -> Result<()> {
    if q > 0.0 && q <= 1.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!(
            "retransmission probability {q} is outside (0, 1]"
        )))
    }
}

/// Decoding capability of the receiver.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChannelModel {
    /// Plain collision channel: a slot carries at most one packet.
    Classic,
    /// Two simultaneous packets are both recovered over a two-slot frame.
    ZigZag,
}

impl ChannelModel {
    pub const ALL: [ChannelModel; 2] = [ChannelModel::ZigZag, ChannelModel::Classic];

    /// Largest number of simultaneous packets the receiver can decode.
    pub fn max_resolvable(self) -> usize {
        match self {
            ChannelModel::Classic => 1,
            ChannelModel::ZigZag => 2,
        }
    }

    /// Length in slots of a frame that used ZigZag decoding.
    pub fn zigzag_frame_slots(self) -> u32 {
        2
    }

    pub fn name(self) -> &'static str {
        match self {
            ChannelModel::Classic => "classic",
            ChannelModel::ZigZag => "zigzag",
        }
    }
}

impl std::fmt::Display for ChannelModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for ChannelModel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "classic" | "aloha" => Ok(ChannelModel::Classic),
            "zigzag" => Ok(ChannelModel::ZigZag),
            other => Err(Error::Usage(format!("unknown channel '{other}'"))),
        }
    }
}

/// Receiver feedback for one frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum OutcomeKind {
    Idle,
    Success,
    ZigZagResolved,
    Collision,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SlotOutcome {
    pub kind: OutcomeKind,
    /// Transmitting users that were not backlogged.
    pub new_attempts: usize,
    /// Transmitting backlogged users.
    pub retx_attempts: usize,
}

impl SlotOutcome {
    pub fn total(&self) -> usize {
        self.new_attempts + self.retx_attempts
    }

    /// Slots consumed by the frame carrying this outcome.
    pub fn frame_slots(&self) -> u32 {
        match self.kind {
            OutcomeKind::ZigZagResolved => 2,
            _ => 1,
        }
    }
}

/// Change of the backlog and packets delivered in one frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BacklogDelta {
    pub delta: i64,
    pub delivered_new: usize,
    pub delivered_retx: usize,
}

impl BacklogDelta {
    pub fn delivered(&self) -> usize {
        self.delivered_new + self.delivered_retx
    }
}

/// Maps the attempt counts of a frame to the receiver feedback.
pub fn classify_outcome(
    new_attempts: usize,
    retx_attempts: usize,
    channel: ChannelModel,
) -> SlotOutcome {
    let kind = match new_attempts + retx_attempts {
        0 => OutcomeKind::Idle,
        1 => OutcomeKind::Success,
        2 if channel == ChannelModel::ZigZag => OutcomeKind::ZigZagResolved,
        _ => OutcomeKind::Collision,
    };
    SlotOutcome {
        kind,
        new_attempts,
        retx_attempts,
    }
}

/// Backlog update implied by an outcome.
///
/// Decoded packets leave the system; colliding new packets join the backlog
/// and colliding backlogged packets stay there.
pub fn backlog_delta(outcome: &SlotOutcome) -> BacklogDelta {
    match outcome.kind {
        OutcomeKind::Idle => BacklogDelta {
            delta: 0,
            delivered_new: 0,
            delivered_retx: 0,
        },
        OutcomeKind::Success | OutcomeKind::ZigZagResolved => BacklogDelta {
            delta: -(outcome.retx_attempts as i64),
            delivered_new: outcome.new_attempts,
            delivered_retx: outcome.retx_attempts,
        },
        OutcomeKind::Collision => BacklogDelta {
            delta: outcome.new_attempts as i64,
            delivered_new: 0,
            delivered_retx: 0,
        },
    }
}

/// `P(Binomial(n, p) = k)`.
pub fn binomial_pmf(n: usize, k: usize, p: f64) -> f64 {
    if k > n {
        return 0.0;
    }
    // 0^0 = 1 keeps the degenerate p = 0 and p = 1 cases exact.
    if p == 0.0 {
        return if k == 0 { 1.0 } else { 0.0 };
    }
    if p == 1.0 {
        return if k == n { 1.0 } else { 0.0 };
    }
    let k_small = k.min(n - k);
    if n <= DIRECT_BINOMIAL_LIMIT {
        let mut coeff = 1.0_f64;
        for j in 1..=k_small {
            coeff = coeff * (n - k_small + j) as f64 / j as f64;
        }
        coeff * p.powi(k as i32) * (1.0 - p).powi((n - k) as i32)
    } else {
        let ln_coeff: f64 = (1..=k_small)
            .map(|j| ((n - k_small + j) as f64 / j as f64).ln())
            .sum();
        (ln_coeff + k as f64 * p.ln() + (n - k) as f64 * (-p).ln_1p()).exp()
    }
}

/// Whole `Binomial(n, p)` probability vector, indexed `0..=n`.
pub fn binomial_vector(n: usize, p: f64) -> Vec<f64> {
    (0..=n).map(|k| binomial_pmf(n, k, p)).collect()
}

/// Probability that exactly `i` of the `M - N` unbacklogged users transmit.
pub fn q_a(i: usize, n_backlogged: usize, params: &SystemParams) -> Result<f64> {
    let m = params.num_users();
    if n_backlogged > m {
        return Err(Error::Domain(format!(
            "backlog {n_backlogged} exceeds population {m}"
        )));
    }
    let idle_users = m - n_backlogged;
    if i > idle_users {
        return Err(Error::Domain(format!(
            "{i} new attempts but only {idle_users} unbacklogged users"
        )));
    }
    Ok(binomial_pmf(idle_users, i, params.arrival_prob()))
}

/// Probability that exactly `i` of the `N` backlogged users retransmit.
pub fn q_r(i: usize, n_backlogged: usize, params: &SystemParams) -> Result<f64> {
    if n_backlogged > params.num_users() {
        return Err(Error::Domain(format!(
            "backlog {n_backlogged} exceeds population {}",
            params.num_users()
        )));
    }
    if i > n_backlogged {
        return Err(Error::Domain(format!(
            "{i} retransmissions but only {n_backlogged} backlogged users"
        )));
    }
    Ok(binomial_pmf(n_backlogged, i, params.retransmit_prob()))
}
