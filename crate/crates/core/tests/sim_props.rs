use proptest::prelude::*;
use sipmatch::arm::TaskSpec;
use sipmatch::config::EngineConfig;
use sipmatch::controller::InterfaceKind;
use sipmatch::sim::{simulate_session, VirtualUserModel};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn same_seed_same_session(
        seed in any::<u64>(),
        task in prop::sample::select(TaskSpec::shipped_ids().to_vec()),
        bsp in any::<bool>(),
    ) {
        let config = EngineConfig::default();
        let task = TaskSpec::shipped(task).unwrap();
        let kind = if bsp { InterfaceKind::Bsp } else { InterfaceKind::Asp };
        let model = VirtualUserModel::default().with_seed(seed);
        let a = simulate_session(&task, kind, &model, &config).unwrap();
        let b = simulate_session(&task, kind, &model, &config).unwrap();
        prop_assert_eq!(a, b);
        prop_assert_eq!(a.moving_ms + a.wasted_ms, a.completion_ms);
    }
}

#[test]
fn seeds_change_the_session() {
    let config = EngineConfig::default();
    let task = TaskSpec::shipped("task1_jar").unwrap();
    let runs: Vec<_> = (0..4)
        .map(|s| simulate_session(&task, InterfaceKind::Bsp, &VirtualUserModel::default().with_seed(s), &config).unwrap())
        .collect();
    assert!(runs.windows(2).any(|w| w[0] != w[1]));
}
