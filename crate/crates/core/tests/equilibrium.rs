use zigzag_aloha::experiments::{run_experiment, ExperimentSpec, Mode};
use zigzag_aloha::game::tagged_throughput;
use zigzag_aloha::{best_response, find_equilibrium, optimize_team, ChannelModel, SystemParams};

#[test]
fn equilibrium_is_a_best_response_to_itself() {
    let eq = find_equilibrium(5, 0.1, ChannelModel::ZigZag).unwrap();
    assert!(eq.br_residual < 1e-5);
    let br = best_response(
        &SystemParams::new(5, 0.1, eq.q_star).unwrap(),
        ChannelModel::ZigZag,
    )
    .unwrap();
    assert!((br.q_br - eq.q_star).abs() < 1e-4);
    assert!(
        (eq.tagged_throughput
            - tagged_throughput(5, 0.1, eq.q_star, eq.q_star, ChannelModel::ZigZag).unwrap())
        .abs()
            < 1e-12
    );
}

#[test]
fn selfish_users_are_more_aggressive_than_the_team() {
    for pa in [0.1, 0.3] {
        let eq = find_equilibrium(5, pa, ChannelModel::ZigZag).unwrap();
        let team = optimize_team(6, pa, ChannelModel::ZigZag).unwrap();
        assert!(
            eq.q_star > team.q_opt,
            "pa={pa}: {} vs {}",
            eq.q_star,
            team.q_opt
        );
        // The equilibrium costs throughput compared to cooperation.
        assert!(6.0 * eq.tagged_throughput <= team.throughput + 1e-9);
    }
}

#[test]
fn heavy_load_collapses_to_full_aggression() {
    let eq = find_equilibrium(5, 0.5, ChannelModel::ZigZag).unwrap();
    assert_eq!(eq.q_star, 1.0);
    assert_eq!(eq.br_residual, 0.0);
}

#[test]
fn curve_csv_lists_every_sample() {
    let eq = find_equilibrium(3, 0.2, ChannelModel::Classic).unwrap();
    let mut buf = Vec::new();
    eq.write_curve_csv(&mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert_eq!(text.lines().count(), eq.br_curve.len() + 1);
    assert!(text.starts_with("q,br_q,tagged_throughput,flat"));
}

#[test]
fn equilibrium_sweep_reports_both_channels() {
    let mut spec = ExperimentSpec::new(Mode::Equilibrium);
    spec.pa = "0.05:0.15:0.05".parse().unwrap();
    let out = run_experiment(&spec).unwrap();
    assert_eq!(out.table.rows.len(), 3);
    let z = out.table.numbers("q_star_zigzag").unwrap();
    assert!(z
        .iter()
        .all(|q| q.is_some_and(|q| (0.0..=1.0).contains(&q))));
    assert!(out.table.column("q_star_classic").is_some());
}
