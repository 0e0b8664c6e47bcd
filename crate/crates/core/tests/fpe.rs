use fedpe::fpe::{
    fpe_client_task, gate, personalize, run_fpe, split_dataset, GateDecision, GatePolicy, MetricReport,
    PersonalizationStrategy,
};
use fedpe::model::{init_params, ModelConfig, ModelParams};
use fedpe::synthdata::{generate_population, PopulationSpec};
use fedpe::{ClientDataset, TokenId};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn tiny_model() -> ModelParams {
    init_params(&ModelConfig::new(12, 2, 3, 4)).unwrap()
}

fn thousand_clients() -> Vec<ClientDataset> {
    let spec = PopulationSpec {
        users: 1000,
        vocab_size: 12,
        min_sentences: 2,
        max_sentences: 6,
        min_sentence_len: 1,
        max_sentence_len: 4,
        seed: 17,
        ..PopulationSpec::default()
    };
    generate_population(&spec).unwrap()
}

/// Token count at which training halts, walking batch boundaries by hand.
fn scripted_stop(lengths: &[usize], batch: usize, token_budget: u64, epoch_budget: u64) -> u64 {
    let mut tokens = 0u64;
    for _ in 0..epoch_budget {
        for chunk in lengths.chunks(batch) {
            if tokens >= token_budget {
                return tokens;
            }
            tokens += chunk.iter().map(|&n| n as u64 + 1).sum::<u64>();
        }
    }
    tokens
}

#[test]
fn split_rounds_toward_training() {
    let data = ClientDataset::new(1, (0..10).map(|i| vec![3 + i as TokenId % 5]).collect());
    let (train, test) = split_dataset(&data, 0.8).unwrap();
    assert_eq!((train.len(), test.len()), (8, 2));
    assert_eq!(train.sentences(), &data.sentences()[..8]);
    let two = ClientDataset::new(2, vec![vec![3], vec![4]]);
    let (train, test) = split_dataset(&two, 0.8).unwrap();
    assert_eq!((train.len(), test.len()), (1, 1));
    assert!(split_dataset(&ClientDataset::new(3, vec![vec![3]]), 0.8).is_err());
}

#[test]
fn reports_over_many_clients() {
    let pop = thousand_clients();
    let g = tiny_model();
    let run = run_fpe(&g, &pop, &PersonalizationStrategy::new(8.0, 2, 50, 2)).unwrap();
    assert_eq!(run.reports.len() + run.skipped, 1000);
    assert_eq!(run.skipped, 0);
    for r in &run.reports {
        assert_eq!(r.delta.to_bits(), (r.personalized_accuracy - r.baseline_accuracy).to_bits());
    }
    assert!(run.reports.iter().any(|r| r.delta != 0.0));

    let policy = GatePolicy { min_delta: 0.0, min_test_tokens: 1 };
    for r in &run.reports {
        assert_eq!(gate(r, &policy) == GateDecision::Accept, r.delta >= 0.0);
    }

    let frozen = run_fpe(&g, &pop, &PersonalizationStrategy::frozen(4)).unwrap();
    assert_eq!(frozen.reports.len(), run.reports.len());
    assert!(frozen.reports.iter().all(|r| r.delta == 0.0));
}

#[test]
fn token_budget_stops_at_first_boundary_past_it() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    // about ten targets per sentence, so batches of ten carry ~100 tokens
    let mut lengths = Vec::new();
    let mut left = 12_000;
    while left > 20 {
        let n = rng.random_range(5..=13usize);
        lengths.push(n);
        left -= n + 1;
    }
    lengths.push(left - 1);
    let sentences: Vec<Vec<TokenId>> =
        lengths.iter().map(|&n| (0..n).map(|i| 3 + (i % 9) as TokenId).collect()).collect();
    let train = ClientDataset::new(0, sentences);
    assert_eq!(train.target_tokens(), 12_000);

    let strategy = PersonalizationStrategy::new(0.1, 10, 5000, 1);
    let (_, processed) = personalize(&tiny_model(), &train, &strategy).unwrap();
    assert_eq!(processed, scripted_stop(&lengths, 10, 5000, 1));
    assert!((5000..=5099).contains(&processed), "{processed}");
}

#[test]
fn report_is_only_scalars() {
    let r = MetricReport::new(4, 0.25, 0.5, 10, 4);
    let MetricReport { client_id, baseline_accuracy, personalized_accuracy, delta, n_train_tokens, n_test_tokens } = r;
    assert_eq!((client_id, n_train_tokens, n_test_tokens), (4, 10, 4));
    assert_eq!((baseline_accuracy, personalized_accuracy, delta), (0.25, 0.5, 0.25));
    assert_eq!(std::mem::size_of::<MetricReport>(), 6 * 8);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn stopping_follows_batch_boundaries(
        lengths in prop::collection::vec(1usize..6, 1..25),
        batch in 1usize..6,
        token_budget in 0u64..120,
        epoch_budget in 0u64..4,
    ) {
        let sentences: Vec<Vec<TokenId>> = lengths.iter().map(|&n| vec![5; n]).collect();
        let train = ClientDataset::new(1, sentences);
        let strategy = PersonalizationStrategy::new(0.2, batch, token_budget, epoch_budget);
        let g = tiny_model();
        let (p, processed) = personalize(&g, &train, &strategy).unwrap();
        prop_assert_eq!(processed, scripted_stop(&lengths, batch, token_budget, epoch_budget));
        let max_batch: u64 = lengths.chunks(batch).map(|c| c.iter().map(|&n| n as u64 + 1).sum()).max().unwrap();
        prop_assert!(processed <= token_budget + max_batch);
        prop_assert!(processed <= epoch_budget * train.target_tokens());
        if processed == 0 {
            prop_assert_eq!(p.as_slice(), g.as_slice());
        }
    }

    #[test]
    fn client_task_is_deterministic(seed in 0u64..1000, lr in 0.0f64..2.0, batch in 1usize..5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = rng.random_range(2..10);
        let sentences: Vec<Vec<TokenId>> = (0..n)
            .map(|_| (0..rng.random_range(1..5)).map(|_| rng.random_range(0..12)).collect())
            .collect();
        let data = ClientDataset::new(seed, sentences);
        let strategy = PersonalizationStrategy::new(lr, batch, 40, 2);
        let g = tiny_model();
        let a = fpe_client_task(&g, &data, &strategy).unwrap();
        let b = fpe_client_task(&g, &data, &strategy).unwrap();
        prop_assert_eq!(a, b);
        let (train, test) = split_dataset(&data, 0.8).unwrap();
        prop_assert_eq!(a.n_train_tokens, train.target_tokens());
        prop_assert_eq!(a.n_test_tokens, test.target_tokens());
    }
}
