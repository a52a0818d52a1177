//! Cooperative model: all users share one retransmission probability and the
//! chain tracks only the number of backlogged users.

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::markov::{solve_stationary, StationaryDist, TransitionMatrix};
use crate::model::{
    backlog_delta, binomial_pmf, binomial_vector, classify_outcome, ChannelModel, SystemParams,
};
use crate::search::{maximize_probability, Maximum};

/// Backlog throughput below this is treated as zero when forming delays.
pub(crate) const RATE_FLOOR: f64 = 1e-13;

/// Steady-state performance of the team chain. Rates are packets per frame,
/// delays are frames, unless the name says otherwise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TeamMetrics {
    /// `p_a (M - S_B)`: accepted arrivals per frame.
    pub throughput: f64,
    /// Mean number of backlogged users.
    pub avg_backlog: f64,
    /// `1 + S_B / Th`; `None` without traffic.
    pub delay: Option<f64>,
    /// Delivered packets that were never backlogged.
    pub new_throughput: f64,
    /// Delivered packets that had been backlogged, `Th - T`.
    pub backlog_throughput: f64,
    /// `1 + S_B / T̄`; `None` when no packet is ever backlogged.
    pub backlog_delay: Option<f64>,
    /// Mean slots per frame.
    pub expected_frame_len: f64,
    pub throughput_per_slot: f64,
    /// Expected deliveries per frame summed over outcomes.
    pub event_throughput: f64,
    /// Stationary probability that exactly two users transmit in a frame.
    pub two_attempt_prob: f64,
}

/// Chain, stationary law and metrics of one team configuration.
#[derive(Debug, Clone)]
pub struct TeamAnalysis {
    pub params: SystemParams,
    pub channel: ChannelModel,
    pub matrix: TransitionMatrix,
    pub stationary: StationaryDist,
    pub metrics: TeamMetrics,
}

/// Per-state expectations of the outcome of one frame.
#[derive(Debug, Clone, Copy, Default)]
struct FrameExpectation {
    delivered: f64,
    delivered_new: f64,
    two_attempts: f64,
}

fn labels(m: usize) -> Vec<String> {
    (0..=m).map(|n| format!("N={n}")).collect()
}

/// Enumerates all `(i_a, i_r)` attempt pairs out of state `n`, passing each
/// pair's probability to `visit`.
fn for_each_event(n: usize, params: &SystemParams, mut visit: impl FnMut(usize, usize, f64)) {
    let new_dist = binomial_vector(params.num_users() - n, params.arrival_prob());
    let retx_dist = binomial_vector(n, params.retransmit_prob());
    for (i_a, &pa) in new_dist.iter().enumerate() {
        if pa == 0.0 {
            continue;
        }
        for (i_r, &pr) in retx_dist.iter().enumerate() {
            if pr != 0.0 {
                visit(i_a, i_r, pa * pr);
            }
        }
    }
}

/// Team chain over the backlog `N = 0..=M`, obtained by pushing every attempt
/// pattern through the outcome semantics.
pub fn build_team_chain(params: &SystemParams, channel: ChannelModel) -> Result<TransitionMatrix> {
    let m = params.num_users();
    let mut p = DMatrix::zeros(m + 1, m + 1);
    for n in 0..=m {
        for_each_event(n, params, |i_a, i_r, prob| {
            let delta = backlog_delta(&classify_outcome(i_a, i_r, channel)).delta;
            let next = (n as i64 + delta) as usize;
            p[(n, next)] += prob;
        });
    }
    TransitionMatrix::new(p, labels(m))
}

/// Piecewise ZigZag team matrix exactly as printed in the original
/// derivation. Its rows do not sum to one; kept to document the defect.
pub fn build_team_chain_as_printed(params: &SystemParams) -> Result<TransitionMatrix> {
    let m = params.num_users();
    let mut p = DMatrix::zeros(m + 1, m + 1);
    for n in 0..=m {
        let qa = |i: usize| binomial_pmf(m - n, i, params.arrival_prob());
        let qr = |i: usize| binomial_pmf(n, i, params.retransmit_prob());
        let mut put = |shift: i64, value: f64| {
            let target = n as i64 + shift;
            if (0..=m as i64).contains(&target) {
                p[(n, target as usize)] += value;
            }
        };
        for i in 3..=m - n {
            put(i as i64, qa(i));
        }
        put(2, qa(2) * (1.0 - qr(0)));
        put(1, qa(1) * (1.0 - qr(0) - qr(1)));
        put(
            0,
            qa(0) * (1.0 - (qr(1) + qr(2))) + (qr(1) + qr(0)) * qa(1) + qa(0) * qr(2),
        );
        put(-1, qa(0) * qr(1));
        put(-2, qa(0) * qr(2));
    }
    TransitionMatrix::from_raw(p, labels(m))
}

fn frame_expectations(params: &SystemParams, channel: ChannelModel) -> Vec<FrameExpectation> {
    (0..=params.num_users())
        .map(|n| {
            let mut e = FrameExpectation::default();
            for_each_event(n, params, |i_a, i_r, prob| {
                let outcome = classify_outcome(i_a, i_r, channel);
                let d = backlog_delta(&outcome);
                e.delivered += prob * d.delivered() as f64;
                e.delivered_new += prob * d.delivered_new as f64;
                if outcome.total() == 2 {
                    e.two_attempts += prob;
                }
            });
            e
        })
        .collect()
}

pub fn team_analysis(params: &SystemParams, channel: ChannelModel) -> Result<TeamAnalysis> {
    let matrix = build_team_chain(params, channel)?;
    let stationary = solve_stationary(&matrix)?;
    let metrics = metrics_from_stationary(params, channel, &stationary);
    Ok(TeamAnalysis {
        params: *params,
        channel,
        matrix,
        stationary,
        metrics,
    })
}

pub fn team_metrics(params: &SystemParams, channel: ChannelModel) -> Result<TeamMetrics> {
    team_analysis(params, channel).map(|a| a.metrics)
}

fn metrics_from_stationary(
    params: &SystemParams,
    channel: ChannelModel,
    pi: &StationaryDist,
) -> TeamMetrics {
    let m = params.num_users() as f64;
    let expectations = frame_expectations(params, channel);

    let avg_backlog = pi.expect(|n| n as f64);
    let throughput = params.arrival_prob() * (m - avg_backlog);
    let event_throughput = pi.expect(|n| expectations[n].delivered);
    let new_throughput = pi.expect(|n| expectations[n].delivered_new);
    let two_attempt_prob = pi.expect(|n| expectations[n].two_attempts);
    let backlog_throughput = throughput - new_throughput;

    let expected_frame_len = match channel {
        ChannelModel::ZigZag => 1.0 + two_attempt_prob,
        ChannelModel::Classic => 1.0,
    };
    let delay = (throughput > 0.0).then(|| 1.0 + avg_backlog / throughput);
    let backlog_delay =
        (backlog_throughput > RATE_FLOOR).then(|| 1.0 + avg_backlog / backlog_throughput);

    TeamMetrics {
        throughput,
        avg_backlog,
        delay,
        new_throughput,
        backlog_throughput,
        backlog_delay,
        expected_frame_len,
        throughput_per_slot: throughput / expected_frame_len,
        event_throughput,
        two_attempt_prob,
    }
}

/// Team-optimal common retransmission probability.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TeamOptimum {
    pub q_opt: f64,
    pub throughput: f64,
    /// Throughput does not depend on the retransmission probability.
    pub flat: bool,
    pub evaluations: usize,
}

impl From<Maximum> for TeamOptimum {
    fn from(m: Maximum) -> Self {
        Self {
            q_opt: m.argmax,
            throughput: m.value,
            flat: m.flat,
            evaluations: m.evaluations,
        }
    }
}

/// Maximizes the team throughput over the common retransmission probability.
pub fn optimize_team(
    num_users: usize,
    arrival_prob: f64,
    channel: ChannelModel,
) -> Result<TeamOptimum> {
    if !(arrival_prob > 0.0 && arrival_prob <= 1.0) {
        return Err(Error::Domain(format!(
            "team optimization needs an arrival probability in (0, 1], got {arrival_prob}"
        )));
    }
    let base = SystemParams::new(num_users, arrival_prob, 1.0)?;
    maximize_probability(|q| Ok(team_metrics(&base.with_retransmit(q)?, channel)?.throughput))
        .map(Into::into)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::markov::validate_rows;

    fn params(m: usize, pa: f64, qr: f64) -> SystemParams {
        SystemParams::new(m, pa, qr).unwrap()
    }

    /// Brute-force transition probabilities: walk all 2^M arrival patterns
    /// and 2^N retransmission patterns, one user at a time.
    fn pattern_oracle(p: &SystemParams, channel: ChannelModel) -> Vec<Vec<f64>> {
        let m = p.num_users();
        let mut rows = vec![vec![0.0; m + 1]; m + 1];
        for (n, row) in rows.iter_mut().enumerate() {
            let idle = m - n;
            for arrivals in 0u32..(1 << idle) {
                for retx in 0u32..(1 << n) {
                    let mut prob = 1.0;
                    for b in 0..idle {
                        prob *= if arrivals >> b & 1 == 1 {
                            p.arrival_prob()
                        } else {
                            1.0 - p.arrival_prob()
                        };
                    }
                    for b in 0..n {
                        prob *= if retx >> b & 1 == 1 {
                            p.retransmit_prob()
                        } else {
                            1.0 - p.retransmit_prob()
                        };
                    }
                    let a = arrivals.count_ones() as usize;
                    let r = retx.count_ones() as usize;
                    let decoded = a + r <= channel.max_resolvable();
                    let next = if decoded { n - r } else { n + a };
                    row[next] += prob;
                }
            }
        }
        rows
    }

    #[test]
    fn matches_pattern_enumeration() {
        for channel in ChannelModel::ALL {
            for &(m, pa, qr) in &[(1, 0.3, 0.5), (3, 0.4, 0.5), (5, 0.3, 0.5), (6, 0.75, 0.2)] {
                let p = params(m, pa, qr);
                let chain = build_team_chain(&p, channel).unwrap();
                let oracle = pattern_oracle(&p, channel);
                for (i, row) in oracle.iter().enumerate() {
                    for (j, expected) in row.iter().enumerate() {
                        assert!((chain.get(i, j) - expected).abs() < 1e-14);
                    }
                }
            }
        }
    }

    #[test]
    fn two_users_never_collide_under_zigzag() {
        for &pa in &[0.1, 0.5, 0.9] {
            for &qr in &[0.1, 1.0] {
                let chain = build_team_chain(&params(2, pa, qr), ChannelModel::ZigZag).unwrap();
                assert_eq!(chain.get(0, 0), 1.0);
            }
        }
    }

    #[test]
    fn two_user_classic_collision() {
        let chain = build_team_chain(&params(2, 0.5, 0.3), ChannelModel::Classic).unwrap();
        assert!((chain.get(0, 2) - 0.25).abs() < 1e-15);
    }

    #[test]
    fn zigzag_chain_matches_corrected_piecewise_form() {
        let p = params(6, 0.35, 0.45);
        let chain = build_team_chain(&p, ChannelModel::ZigZag).unwrap();
        for n in 0..=6usize {
            let qa = |i| q_a_safe(&p, i, n);
            let qr = |i| binomial_pmf(n, i, 0.45);
            let mut expected = [0.0; 7];
            let mut put = |shift: i64, v: f64| {
                let t = n as i64 + shift;
                if (0..=6).contains(&t) {
                    expected[t as usize] += v;
                }
            };
            for i in 3..=6 - n {
                put(i as i64, qa(i));
            }
            put(2, qa(2) * (1.0 - qr(0)));
            put(1, qa(1) * (1.0 - qr(0) - qr(1)));
            put(
                0,
                qa(0) * (1.0 - qr(1) - qr(2)) + qa(1) * qr(0) + qa(2) * qr(0),
            );
            put(-1, qa(0) * qr(1) + qa(1) * qr(1));
            put(-2, qa(0) * qr(2));
            for (j, e) in expected.iter().enumerate() {
                assert!((chain.get(n, j) - e).abs() < 1e-14, "n={n} j={j}");
            }
        }
    }

    fn q_a_safe(p: &SystemParams, i: usize, n: usize) -> f64 {
        binomial_pmf(p.num_users() - n, i, p.arrival_prob())
    }

    #[test]
    fn printed_form_row_defect() {
        let p = params(3, 0.4, 0.5);
        let literal = build_team_chain_as_printed(&p).unwrap();
        let bad = validate_rows(&literal);
        assert!(!bad.is_empty());
        for n in 0..=3usize {
            let defect = q_a_safe(&p, 0, n) * binomial_pmf(n, 2, 0.5)
                - q_a_safe(&p, 2, n) * binomial_pmf(n, 0, 0.5);
            assert!((literal.row_sum(n) - 1.0 - defect).abs() < 1e-14, "row {n}");
        }
    }

    #[test]
    fn printed_form_is_stochastic_without_defect_terms() {
        // No arrivals and a single backlogged user at most retransmitting:
        // with M = 1 the defect terms vanish for every state.
        let literal = build_team_chain_as_printed(&params(1, 0.0, 0.7)).unwrap();
        assert!(validate_rows(&literal).is_empty());
        // p_a = 0 kills Q_a(2, N); Q_r(2, N) vanishes for N < 2.
        let literal = build_team_chain_as_printed(&params(4, 0.0, 0.7)).unwrap();
        let bad: Vec<usize> = validate_rows(&literal).iter().map(|r| r.0).collect();
        assert!(bad.iter().all(|&n| n >= 2));
    }

    #[test]
    fn literal_differs_only_where_terms_are_misplaced() {
        let p = params(5, 0.4, 0.5);
        let literal = build_team_chain_as_printed(&p).unwrap();
        let canonical = build_team_chain(&p, ChannelModel::ZigZag).unwrap();
        for i in 0..=5usize {
            for j in 0..=5usize {
                let diff = literal.get(i, j) - canonical.get(i, j);
                if j == i {
                    // + Q_a(1)Q_r(1) + Q_a(0)Q_r(2) - Q_a(2)Q_r(0)
                    let expected = q_a_safe(&p, 1, i) * binomial_pmf(i, 1, 0.5)
                        + q_a_safe(&p, 0, i) * binomial_pmf(i, 2, 0.5)
                        - q_a_safe(&p, 2, i) * binomial_pmf(i, 0, 0.5);
                    assert!((diff - expected).abs() < 1e-14);
                } else if i >= 1 && j == i - 1 {
                    let expected = -q_a_safe(&p, 1, i) * binomial_pmf(i, 1, 0.5);
                    assert!((diff - expected).abs() < 1e-14);
                } else {
                    assert!(diff.abs() < 1e-15, "({i},{j}) differs by {diff}");
                }
            }
        }
    }

    #[test]
    fn two_user_zigzag_metrics() {
        let m = team_metrics(&params(2, 0.5, 0.4), ChannelModel::ZigZag).unwrap();
        assert!((m.throughput - 1.0).abs() < 1e-12);
        assert!(m.avg_backlog.abs() < 1e-12);
        assert!((m.delay.unwrap() - 1.0).abs() < 1e-12);
        assert!(m.backlog_delay.is_none());
        // Both users transmit together with probability 1/4.
        assert!((m.expected_frame_len - 1.25).abs() < 1e-12);
    }

    #[test]
    fn no_traffic() {
        for channel in ChannelModel::ALL {
            let m = team_metrics(&params(5, 0.0, 0.5), channel).unwrap();
            assert_eq!(m.throughput, 0.0);
            assert_eq!(m.avg_backlog, 0.0);
            assert!(m.delay.is_none());
            assert!(m.backlog_delay.is_none());
        }
    }

    #[test]
    fn flow_balance_at_reference_point() {
        let m = team_metrics(&params(5, 0.3, 0.5), ChannelModel::ZigZag).unwrap();
        assert!((m.throughput - m.event_throughput).abs() < 1e-9);
        assert!((m.new_throughput + m.backlog_throughput - m.throughput).abs() < 1e-12);
    }

    #[test]
    fn single_classic_user() {
        for &pa in &[0.1, 0.6, 1.0] {
            let a = team_analysis(&params(1, pa, 0.3), ChannelModel::Classic).unwrap();
            assert_eq!(a.stationary[0], 1.0);
            assert_eq!(a.metrics.throughput, pa);
        }
    }

    #[test]
    fn delay_ordering() {
        for channel in ChannelModel::ALL {
            for &(m, pa, qr) in &[(5, 0.2, 0.3), (8, 0.5, 0.1), (10, 0.9, 0.9)] {
                let t = team_metrics(&params(m, pa, qr), channel).unwrap();
                let d = t.delay.unwrap();
                assert!(d >= 1.0);
                if let Some(db) = t.backlog_delay {
                    assert!(db >= d - 1e-12);
                }
                assert!(t.throughput <= m as f64 * pa + 1e-9);
            }
        }
    }

    #[test]
    fn optimize_flat_for_two_zigzag_users() {
        for &pa in &[0.2, 0.7] {
            let opt = optimize_team(2, pa, ChannelModel::ZigZag).unwrap();
            assert!(opt.flat);
            assert!((opt.throughput - 2.0 * pa).abs() < 1e-10);
        }
    }

    #[test]
    fn optimum_dominates_grid() {
        for channel in ChannelModel::ALL {
            let opt = optimize_team(5, 0.3, channel).unwrap();
            for q in crate::search::probability_grid() {
                let th = team_metrics(&params(5, 0.3, q), channel)
                    .unwrap()
                    .throughput;
                assert!(opt.throughput >= th - 1e-8, "{channel} q={q}");
            }
        }
    }

    #[test]
    fn zigzag_optimum_beats_classic() {
        let z = optimize_team(5, 0.05, ChannelModel::ZigZag).unwrap();
        let c = optimize_team(5, 0.05, ChannelModel::Classic).unwrap();
        assert!(z.throughput >= c.throughput);
        // Grid oracle for the same claim.
        let best = |channel| {
            crate::search::probability_grid()
                .into_iter()
                .map(|q| {
                    team_metrics(&params(5, 0.05, q), channel)
                        .unwrap()
                        .throughput
                })
                .fold(f64::MIN, f64::max)
        };
        assert!(best(ChannelModel::ZigZag) >= best(ChannelModel::Classic));
    }

    #[test]
    fn optimize_rejects_zero_traffic() {
        assert!(optimize_team(5, 0.0, ChannelModel::ZigZag).is_err());
    }
}
