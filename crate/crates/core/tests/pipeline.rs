mod common;

use common::*;
use proptest::prelude::*;
use tkgc::grid::{grid_search, GridSpec};
use tkgc::model::{seeded_rng, streams};
use tkgc::synthetic::SyntheticSpec;
use tkgc::{
    augment_reciprocal, evaluate, init_params, train, FilterIndex, ModelKind, ModelSpec,
    TemporalRegSpec, TiePolicy, TrainConfig,
};

fn toy() -> tkgc::DatasetSplits {
    augment_reciprocal(SyntheticSpec::default().dataset().unwrap()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn metrics_are_bounded_and_ordered(seed in 0u64..1000, kind in 0usize..3) {
        let mut rng = seeded_rng(seed, streams::DATA);
        let splits = random_dataset(&mut rng, 6, 2, 4);
        let spec = match ModelKind::ALL[kind] {
            ModelKind::ChronoR => ModelSpec::chronor(4, 2, 2, false),
            k => ModelSpec::new(k, 4),
        };
        let params = init_params(spec, splits.num_entities(), splits.num_relations(), splits.num_timestamps(), seed, 0.5).unwrap();
        let filter = FilterIndex::for_queries(&splits, &splits.test);
        let m = |ties| evaluate(&params, &splits.test, &filter, ties).unwrap().overall;
        let (opt, mean, pess) = (m(TiePolicy::Optimistic), m(TiePolicy::Mean), m(TiePolicy::Pessimistic));
        for d in [opt, mean, pess] {
            prop_assert!(d.mrr > 0.0 && d.mrr <= 1.0);
            prop_assert!(d.hits_at_1 <= d.hits_at_3 && d.hits_at_3 <= d.hits_at_10 && d.hits_at_10 <= 1.0);
            prop_assert_eq!(d.queries, 2 * splits.test.len());
        }
        prop_assert!(opt.mrr >= mean.mrr && mean.mrr >= pess.mrr);
    }

    #[test]
    fn constant_scores_rank_by_tie_policy(n in 2usize..40, filtered in 0usize..5) {
        let scores = vec![0.25; n];
        let filter: Vec<u32> = (0..filtered.min(n - 1) as u32 + 1).collect();
        let rank = |ties| tkgc::eval::rank_from_scores(&scores, 0, &filter, ties).unwrap();
        let competitors = (n - filter.len()) as f64;
        prop_assert_eq!(rank(TiePolicy::Optimistic), 1.0);
        prop_assert_eq!(rank(TiePolicy::Pessimistic), 1.0 + competitors);
        prop_assert_eq!(rank(TiePolicy::Mean), 1.0 + competitors / 2.0);
    }
}

#[test]
fn memorised_graph_ranks_first() {
    let splits = toy();
    let mut config = TrainConfig::new(ModelSpec::new(ModelKind::TComplEx, 20));
    config.lambda_emb = 1e-3;
    config.epochs = 200;
    config.valid_every = 0;
    let out = train(&splits, &config).unwrap();
    let filter = FilterIndex::for_queries(&splits, &splits.test);
    let m = evaluate(&out.state.params.model, &splits.test, &filter, TiePolicy::Pessimistic).unwrap();
    assert_eq!(m.mrr(), 1.0, "{m:?}");
}

#[test]
fn grid_resumes_from_results() {
    let dir = tempfile::tempdir().unwrap();
    let splits = toy();
    let mut base = TrainConfig::new(ModelSpec::new(ModelKind::TNTComplEx, 4));
    base.epochs = 2;
    let grid = GridSpec {
        temporal: vec![TemporalRegSpec::np(3), TemporalRegSpec::lp(2)],
        lambda_time: vec![0.0, 0.1],
        ..GridSpec::default()
    };
    let first = grid_search(&splits, &base, &grid, Some(dir.path())).unwrap();
    assert_eq!((first.computed, first.resumed, first.rows.len()), (4, 0, 4));
    let second = grid_search(&splits, &base, &grid, Some(dir.path())).unwrap();
    assert_eq!((second.computed, second.resumed), (0, 4));
    let ids = |o: &tkgc::grid::GridOutcome| o.rows.iter().map(|r| r.id.clone()).collect::<Vec<_>>();
    assert_eq!(ids(&first), ids(&second));
    assert_eq!(first.rows[0].valid, second.rows[0].valid);
}

#[test]
fn training_is_deterministic() {
    let splits = toy();
    let mut config = TrainConfig::new(ModelSpec::chronor(6, 4, 2, true));
    config.temporal = TemporalRegSpec::linear3(3);
    config.lambda_time = 0.1;
    config.epochs = 3;
    config.batch_size = 64;
    let a = train(&splits, &config).unwrap();
    let b = train(&splits, &config).unwrap();
    assert_eq!(a.state.params.model.entity.data(), b.state.params.model.entity.data());
    assert_eq!(a.state.loss_history, b.state.loss_history);
}
