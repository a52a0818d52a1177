use proptest::prelude::*;
use zigzag_aloha::{
    build_game_chain, build_team_chain, tagged_metrics, team_metrics, validate_rows, ChannelModel,
    GameParams, SystemParams,
};

fn channel() -> impl Strategy<Value = ChannelModel> {
    prop_oneof![Just(ChannelModel::ZigZag), Just(ChannelModel::Classic)]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn team_chain_is_stochastic(m in 1usize..15, pa in 0.0..=1.0f64, q in 0.01..=1.0f64, ch in channel()) {
        let p = SystemParams::new(m, pa, q).unwrap();
        prop_assert!(validate_rows(&build_team_chain(&p, ch).unwrap()).is_empty());
    }

    #[test]
    fn team_metrics_respect_their_ranges(m in 1usize..12, pa in 0.01..=1.0f64, q in 0.01..=1.0f64, ch in channel()) {
        let p = SystemParams::new(m, pa, q).unwrap();
        let t = team_metrics(&p, ch).unwrap();
        prop_assert!(t.throughput >= -1e-12 && t.throughput <= m as f64 * pa + 1e-9);
        prop_assert!(t.avg_backlog >= -1e-12 && t.avg_backlog <= m as f64 + 1e-12);
        prop_assert!((t.throughput - t.event_throughput).abs() < 1e-9);
        if let Some(d) = t.delay {
            prop_assert!(d >= 1.0 - 1e-12);
        }
        let max_len = if ch == ChannelModel::ZigZag { 2.0 } else { 1.0 };
        prop_assert!(t.expected_frame_len >= 1.0 && t.expected_frame_len <= max_len);
    }

    #[test]
    fn game_chain_is_stochastic(m in 1usize..10, pa in 0.0..=1.0f64, q in 0.01..=1.0f64, qt in 0.01..=1.0f64, ch in channel()) {
        let g = GameParams::new(SystemParams::new(m, pa, q).unwrap(), qt).unwrap();
        prop_assert!(validate_rows(&build_game_chain(&g, ch).unwrap()).is_empty());
    }

    #[test]
    fn symmetric_tagged_user_is_an_average_user(m in 1usize..9, pa in 0.01..=1.0f64, q in 0.05..=1.0f64, ch in channel()) {
        let others = SystemParams::new(m, pa, q).unwrap();
        let t = tagged_metrics(&GameParams::symmetric(others), ch).unwrap();
        let team = team_metrics(&others.with_num_users(m + 1).unwrap(), ch).unwrap();
        prop_assert!(((m + 1) as f64 * t.throughput - team.throughput).abs() < 1e-8);
        prop_assert!((t.others_backlog + t.backlog_prob - team.avg_backlog).abs() < 1e-8);
    }

    #[test]
    fn zigzag_never_loses(m in 1usize..12, pa in 0.01..=1.0f64, q in 0.01..=1.0f64) {
        let p = SystemParams::new(m, pa, q).unwrap();
        let z = team_metrics(&p, ChannelModel::ZigZag).unwrap();
        let c = team_metrics(&p, ChannelModel::Classic).unwrap();
        prop_assert!(z.throughput >= c.throughput - 1e-12);
    }
}
