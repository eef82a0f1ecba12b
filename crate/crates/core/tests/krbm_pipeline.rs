mod common;

use std::collections::BTreeMap;

use ndarray::Array2;
use proptest::prelude::*;
use rand::Rng;

use voteagg::bench::l0_error;
use voteagg::data::{encode_votes, EncodingScheme, LabelDataset, LabelRecord, VoteEncoding};
use voteagg::krbm::{assign_items, decode_assignment, decode_clusters, krbm_fit, Architecture, KRbmState};
use voteagg::math::{derive_seed, seeded_rng};
use voteagg::rbm::{reconstruction_error, HiddenKind, RbmParams, TrainConfig, VisibleKind};

fn arch(hidden: usize) -> Architecture {
    Architecture {
        hidden,
        visible_kind: VisibleKind::Binary,
        hidden_kind: HiddenKind::Binary,
        sigma: 1.0,
    }
}

fn brute_force_assignment(components: &[RbmParams], enc: &VoteEncoding) -> Vec<usize> {
    enc.vectors()
        .rows()
        .into_iter()
        .map(|x| {
            let mut best = 0;
            let mut best_err = f64::INFINITY;
            for (k, c) in components.iter().enumerate() {
                let e = reconstruction_error(c, x).unwrap();
                if e < best_err {
                    best = k;
                    best_err = e;
                }
            }
            best
        })
        .collect()
}

fn noisy_dataset(seed: u64, items: usize, c: usize) -> LabelDataset {
    let mut rng = seeded_rng(seed);
    let mut records = Vec::new();
    for i in 0..items {
        for w in 0..5 {
            if rng.random::<f64>() < 0.8 {
                records.push(LabelRecord::new(format!("i{i:03}"), format!("w{w}"), rng.random_range(0..c)));
            }
        }
        records.push(LabelRecord::new(format!("i{i:03}"), "w9", i % c));
    }
    LabelDataset::new(records, c, None, false).unwrap()
}

#[test]
fn frozen_components_reduce_to_a_single_argmin_pass() {
    let ds = noisy_dataset(1, 80, 3);
    let enc = encode_votes(&ds, EncodingScheme::OneHot, 6, 2).unwrap();
    let cfg = TrainConfig {
        learning_rate: 0.0,
        weight_decay: 0.0,
        ..TrainConfig::default()
    };
    let seed = 17;
    let state = krbm_fit(&enc, 3, &arch(4), &cfg, 1, seed).unwrap();
    // the components as krbm_fit initializes them
    let init: Vec<RbmParams> = (0..3)
        .map(|j| {
            let mut rng = seeded_rng(derive_seed(seed, j as u64));
            RbmParams::random(enc.dim(), 4, 1.0, VisibleKind::Binary, HiddenKind::Binary, &mut rng).unwrap()
        })
        .collect();
    assert_eq!(state.components, init);
    let mut expected = brute_force_assignment(&init, &enc);
    let counts: Vec<usize> = (0..3).map(|k| expected.iter().filter(|&&a| a == k).count()).collect();
    if counts.iter().all(|&c| c > 0) {
        assert_eq!(state.assignment, expected);
    } else {
        // an empty component was repaired; everything else must still match
        expected.iter_mut().zip(&state.assignment).for_each(|(e, a)| {
            if counts[*a] == 0 {
                *e = *a;
            }
        });
        assert_eq!(state.assignment, expected);
    }
    assert!(state.converged);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn assignment_is_a_per_item_argmin(seed in any::<u64>()) {
        let mut rng = seeded_rng(seed);
        let c = rng.random_range(2..=4);
        let ds = noisy_dataset(seed, 30, c);
        let scheme = [EncodingScheme::OneHot, EncodingScheme::CompactBinary, EncodingScheme::RealValued][rng.random_range(0..3)];
        let enc = encode_votes(&ds, scheme, 6, seed).unwrap();
        let vk = if scheme.is_binary() { VisibleKind::Binary } else { VisibleKind::Gaussian };
        let hk = if rng.random::<bool>() { HiddenKind::Binary } else { HiddenKind::Softmax };
        let k = rng.random_range(1..=4);
        let components: Vec<RbmParams> = (0..k)
            .map(|_| common::random_rbm(&mut rng, enc.dim(), 3, vk, hk, 1.0))
            .collect();
        let state = KRbmState {
            components: components.clone(),
            items: enc.items().to_vec(),
            assignment: vec![0; enc.len()],
            epsilon_history: Vec::new(),
            iteration: 0,
            trace: Vec::new(),
            converged: false,
        };
        let got = assign_items(&state, &enc).unwrap();
        prop_assert_eq!(&got, &brute_force_assignment(&components, &enc));

        // with parameters fixed, the new assignment never costs more than any other
        let cost = |a: &[usize]| -> f64 {
            enc.vectors().rows().into_iter().zip(a).map(|(x, &j)| reconstruction_error(&components[j], x).unwrap()).sum()
        };
        let other: Vec<usize> = (0..enc.len()).map(|_| rng.random_range(0..k)).collect();
        prop_assert!(cost(&got) <= cost(&other) + 1e-12);
    }
}

#[test]
fn separable_patterns_end_in_pure_clusters() {
    let ds = common::separable_dataset(120, 5);
    let mut pure = 0;
    for seed in 0..20 {
        let enc = encode_votes(&ds, EncodingScheme::OneHot, 5, seed).unwrap();
        let state = krbm_fit(&enc, 2, &arch(3), &TrainConfig { seed, ..TrainConfig::default() }, 20, seed).unwrap();
        let gold = ds.gold().unwrap();
        let mut cluster_of_class: BTreeMap<usize, usize> = BTreeMap::new();
        let mut clean = true;
        for (item, &cluster) in state.items.iter().zip(&state.assignment) {
            let class = gold[item];
            if *cluster_of_class.entry(class).or_insert(cluster) != cluster {
                clean = false;
            }
        }
        clean &= cluster_of_class.len() == 2 && cluster_of_class[&0] != cluster_of_class[&1];
        let result = decode_clusters(state, &ds, seed).unwrap();
        if clean {
            pure += 1;
            assert_eq!(l0_error(&result.predicted, gold).unwrap(), 0.0);
        }
    }
    assert!(pure >= 19, "pure in {pure}/20 seeds");
}

#[test]
fn decoding_never_reads_gold() {
    let spec = voteagg::bench::SyntheticSpec::diagonal(60, 8, 5, 3, 0.7);
    let with_gold = voteagg::bench::simulate_crowd(&spec, 2).unwrap();
    let mut wrong_gold = with_gold.gold().unwrap().clone();
    wrong_gold.values_mut().for_each(|g| *g = (*g + 1) % 3);
    let shuffled = LabelDataset::new(with_gold.records().to_vec(), 3, Some(wrong_gold), false).unwrap();
    let without = with_gold.without_gold();
    let items: Vec<String> = with_gold.items().map(String::from).collect();
    let assignment: Vec<usize> = (0..items.len()).map(|i| i % 4).collect();
    let a = decode_assignment(&items, &assignment, &with_gold, 5).unwrap();
    let b = decode_assignment(&items, &assignment, &without, 5).unwrap();
    let c = decode_assignment(&items, &assignment, &shuffled, 5).unwrap();
    assert_eq!(a, b);
    assert_eq!(a, c);
}

#[test]
fn relabeling_components_leaves_predictions_unchanged() {
    let ds = noisy_dataset(4, 90, 3);
    let items: Vec<String> = ds.items().map(String::from).collect();
    // clusters aligned with the planted vote so every cluster has a clear mode
    let assignment: Vec<usize> = (0..items.len()).map(|i| i % 3).collect();
    let perm = [2, 0, 1];
    let permuted: Vec<usize> = assignment.iter().map(|&a| perm[a]).collect();
    let (a, map_a) = decode_assignment(&items, &assignment, &ds, 1).unwrap();
    let (b, map_b) = decode_assignment(&items, &permuted, &ds, 1).unwrap();
    assert_eq!(a, b);
    for (k, label) in map_a {
        assert_eq!(map_b[&perm[k]], label);
    }
}

#[test]
fn fitting_is_deterministic_and_keeps_a_hard_partition() {
    let ds = noisy_dataset(6, 70, 4);
    let enc = encode_votes(&ds, EncodingScheme::CompactBinary, 6, 3).unwrap();
    let cfg = TrainConfig {
        epochs: 3,
        seed: 3,
        ..TrainConfig::default()
    };
    let a = krbm_fit(&enc, 4, &arch(2), &cfg, 6, 3).unwrap();
    let b = krbm_fit(&enc, 4, &arch(2), &cfg, 6, 3).unwrap();
    assert_eq!(a.components, b.components);
    assert_eq!(a.assignment, b.assignment);
    assert_eq!(a.epsilon_history, b.epsilon_history);
    assert_eq!(a.assignment.len(), enc.len());
    for k in 0..4 {
        assert!(a.assignment.contains(&k));
    }
    assert!(a.assignment.iter().all(|&x| x < 4));
    // the last epsilon is the cost of the final assignment under the final components
    let x: Array2<f64> = enc.vectors().clone();
    let final_cost: f64 = x
        .rows()
        .into_iter()
        .zip(&a.assignment)
        .map(|(row, &k)| reconstruction_error(&a.components[k], row).unwrap())
        .sum();
    let last = *a.epsilon_history.last().unwrap();
    assert!(final_cost >= last - 1e-9);
    assert!(a.epsilon_history.iter().all(|e| e.is_finite() && *e >= 0.0));
}
