use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use randcrf::gumbel_crf::CandidateSet;
use randcrf::losses::{exact_crf_loss, loss_gap, monte_carlo_loss, randomized_loss};
use randcrf::spaces::{OutputSpace, StructureFamily};
use randcrf::{Dataset, WeightVector};

mod common;

#[test]
fn monte_carlo_agrees_with_exact_loss() {
    let space = OutputSpace::enumerate(StructureFamily::subset(2, 6).unwrap()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let data = common::random_dataset(&mut rng, &space, 8);
    for (trial, beta) in [0.5, 1.0, 2.0].into_iter().enumerate() {
        let w = common::random_weights(&mut rng, 15, 1.0);
        let exact = exact_crf_loss(&space, &w, &data, beta).unwrap().value;
        let mc = monte_carlo_loss(&space, &w, &data, beta, 50_000, trial as u64).unwrap();
        let se = mc.stderr.unwrap();
        assert!((mc.value - exact).abs() <= 3.0 * se, "beta {beta}: mc {} exact {exact} se {se}", mc.value);
    }
}

#[test]
fn two_outputs_with_zero_weights_is_a_coin_flip() {
    let space = OutputSpace::enumerate(StructureFamily::subset(1, 2).unwrap()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let data = common::random_dataset(&mut rng, &space, 4);
    let w = WeightVector::zeros(1);
    assert_eq!(exact_crf_loss(&space, &w, &data, 1.0).unwrap().value, 0.5);
    let mc = monte_carlo_loss(&space, &w, &data, 1.0, 1_000_000, 3).unwrap();
    assert!((mc.value - 0.5).abs() <= 0.0015, "{}", mc.value);
}

#[test]
fn randomized_loss_bounded_by_exact_loss() {
    let space = OutputSpace::enumerate(StructureFamily::subset(3, 8).unwrap()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for _ in 0..30 {
        let data = common::random_dataset(&mut rng, &space, 6);
        let sets = common::random_sets(&mut rng, &space, &data, 10);
        let w = common::random_weights(&mut rng, 28, 1.0);
        let beta = rng.random_range(0.2..3.0);
        let exact = exact_crf_loss(&space, &w, &data, beta).unwrap().value;
        let rand = randomized_loss(&space, &w, &data, &sets, beta).unwrap().value;
        assert!(rand <= exact + 1e-12);
        assert!(loss_gap(&space, &w, &data, &sets, beta).unwrap() <= 0.0);
    }
}

#[test]
fn sample_order_does_not_change_losses() {
    let space = OutputSpace::enumerate(StructureFamily::spanning_tree(4).unwrap()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let data = common::random_dataset(&mut rng, &space, 9);
    let sets = common::random_sets(&mut rng, &space, &data, 6);
    let w = common::random_weights(&mut rng, 6, 1.0);
    let mut order: Vec<usize> = (0..9).collect();
    order.reverse();
    order.swap(0, 4);
    let permuted = Dataset::new(*data.family(), order.iter().map(|&i| data.samples()[i].clone()).collect()).unwrap();
    let permuted_sets: Vec<CandidateSet> = order.iter().map(|&i| sets[i].clone()).collect();
    let a = exact_crf_loss(&space, &w, &data, 0.8).unwrap().value;
    let b = exact_crf_loss(&space, &w, &permuted, 0.8).unwrap().value;
    assert!((a - b).abs() < 1e-14);
    let a = randomized_loss(&space, &w, &data, &sets, 0.8).unwrap().value;
    let b = randomized_loss(&space, &w, &permuted, &permuted_sets, 0.8).unwrap().value;
    assert!((a - b).abs() < 1e-14);
}

#[test]
fn sets_missing_the_label_are_rejected() {
    let space = OutputSpace::enumerate(StructureFamily::subset(2, 4).unwrap()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    let data = common::random_dataset(&mut rng, &space, 1);
    let y = data.observed_indices(&space).unwrap()[0];
    let other = (y + 1) % space.len();
    let set = CandidateSet::sampled(vec![other as u32]);
    assert!(randomized_loss(&space, &WeightVector::zeros(6), &data, &[set], 1.0).is_err());
}
