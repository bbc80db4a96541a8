mod common;

use proptest::prelude::*;

use bytefs_core::Mode;

fn mode_strategy() -> impl Strategy<Value = Mode> {
    prop::sample::select(Mode::ALL.to_vec())
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 48, ..ProptestConfig::default() })]

    #[test]
    fn short_sessions_match_the_model(mode in mode_strategy(), seed in any::<u64>(), ops in 1usize..300) {
        if let Err(e) = common::model_session(mode, ops, seed, 1 << 20) {
            prop_assert!(false, "{mode}: {e}");
        }
    }

    #[test]
    fn small_cache_sessions_match_the_model(mode in mode_strategy(), seed in any::<u64>()) {
        if let Err(e) = common::model_session(mode, 400, seed, 8) {
            prop_assert!(false, "{mode}: {e}");
        }
    }
}

#[test]
fn long_sessions_with_remounts_match_the_model() {
    for (i, mode) in Mode::ALL.into_iter().enumerate() {
        common::model_session(mode, 3000, 0xb17e + i as u64, 64)
            .unwrap_or_else(|e| panic!("{mode}: {e}"));
    }
}
