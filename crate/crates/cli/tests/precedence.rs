use p3s::{LearnerKind, Method};
use p3s_cli::config::{resolve, ConfigLayer};
use proptest::prelude::*;

fn learners() -> impl Strategy<Value = Vec<LearnerKind>> {
    proptest::sample::subsequence(LearnerKind::ALL.to_vec(), 1..=3)
}

prop_compose! {
    fn layer()(
        method in proptest::option::of(proptest::sample::select(Method::ALL.to_vec())),
        k in proptest::option::of(1usize..12),
        outer in proptest::option::of(0usize..80),
        inner in proptest::option::of(0usize..20),
        seed in proptest::option::of(any::<u64>()),
        reward in proptest::option::of(learners()),
        eval in proptest::option::of(learners()),
        folds in proptest::option::of(2usize..12),
        cap in proptest::option::of(1usize..200),
        workers in proptest::option::of(1usize..5),
        target in proptest::option::of("[a-z]{1,6}"),
    ) -> ConfigLayer {
        ConfigLayer {
            data_path: Some("d.csv".into()),
            target_name: target,
            method,
            k,
            outer_iters: outer,
            inner_iters: inner,
            seed,
            reward_learner: reward,
            eval_learners: eval,
            folds,
            onehot_cap: cap,
            out_dir: None,
            workers,
        }
    }
}

proptest! {
    #[test]
    fn flags_beat_file_beat_env_beat_defaults(
        flags in layer(),
        file in layer(),
        env in proptest::option::of(any::<u64>()),
    ) {
        let Ok(c) = resolve(flags.clone(), file.clone(), env) else {
            prop_assert!(flags.target_name.is_none() && file.target_name.is_none());
            return Ok(());
        };
        prop_assert_eq!(Some(c.k), flags.k.or(file.k).or(Some(5)));
        prop_assert_eq!(Some(c.outer_iters), flags.outer_iters.or(file.outer_iters).or(Some(50)));
        prop_assert_eq!(Some(c.inner_iters), flags.inner_iters.or(file.inner_iters).or(Some(10)));
        prop_assert_eq!(Some(c.folds), flags.folds.or(file.folds).or(Some(10)));
        prop_assert_eq!(Some(c.seed), flags.seed.or(file.seed).or(env).or(Some(0)));
        prop_assert_eq!(Some(c.method), flags.method.or(file.method).or(Some(Method::ClusterP3S)));
        prop_assert_eq!(
            Some(c.reward_learner),
            flags.reward_learner.or(file.reward_learner).or(Some(vec![LearnerKind::DecisionTree]))
        );
        prop_assert_eq!(Some(c.target_name), flags.target_name.or(file.target_name));
    }

    #[test]
    fn layers_survive_json(l in layer()) {
        let text = serde_json::to_string(&l).unwrap();
        let back: ConfigLayer = serde_json::from_str(&text).unwrap();
        prop_assert_eq!(back, l);
    }
}
