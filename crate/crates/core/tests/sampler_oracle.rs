mod common;

use std::collections::{BTreeMap, BTreeSet};

use bayeslink::analysis::{pairwise_match_prob, posterior_n};
use bayeslink::blocking::build_blocks;
use bayeslink::model::log_joint_posterior;
use bayeslink::sampler::{
    apply_proposal, chain_rng, init_state, propose, run_chain, AcceptanceRule, ChainConfig,
    MoveKind,
};
use bayeslink::{FieldSchema, Hyperparameters, Mode, Partition, RecordStore};

use common::{exact_partition_posterior, first_appearance, set_partitions, total_variation};

fn four_records() -> (RecordStore, Hyperparameters) {
    let schema = FieldSchema::with_levels(&[2, 2]).unwrap();
    let data = RecordStore::new(
        schema.clone(),
        vec![vec![vec![0, 0], vec![0, 0], vec![0, 1], vec![1, 1]]],
    )
    .unwrap();
    (
        data,
        Hyperparameters::uniform(&schema, 1.0, 2.0, 1.0).unwrap(),
    )
}

fn frequencies(partitions: &[Partition]) -> BTreeMap<Vec<u32>, f64> {
    let mut out = BTreeMap::new();
    for p in partitions {
        *out.entry(first_appearance(p.labels())).or_insert(0.0) += 1.0 / partitions.len() as f64;
    }
    out
}

fn chain(rule: AcceptanceRule, sweeps: usize) -> Vec<Partition> {
    let (data, hyper) = four_records();
    let blocks = build_blocks(&data, &[]).unwrap();
    let config = ChainConfig {
        gibbs_sweeps: sweeps,
        metropolis_rounds: 1,
        proposals_per_round: 3,
        burn_in: 1_000,
        thin: 1,
        rule,
        seed: 5,
        ..ChainConfig::defaults(Mode::Dedup)
    };
    run_chain(&data, &hyper, &blocks, &config)
        .unwrap()
        .partitions
}

#[test]
fn four_record_chain_matches_enumeration() {
    let (data, hyper) = four_records();
    let exact = exact_partition_posterior(&data, &hyper, Mode::Dedup);
    assert_eq!(exact.len(), 15);
    assert!((exact.values().sum::<f64>() - 1.0).abs() < 1e-12);
    let samples = chain(AcceptanceRule::Corrected, 100_000);
    let tv = total_variation(&exact, &frequencies(&samples));
    assert!(tv <= 0.05, "total variation {tv}");

    // derived summaries follow the exact posterior too
    let exact_pair: f64 = exact
        .iter()
        .filter(|(p, _)| p[0] == p[1])
        .map(|(_, w)| w)
        .sum();
    let pair = pairwise_match_prob(&samples, 0, 1).unwrap();
    assert!((pair - exact_pair).abs() < 0.03, "{pair} vs {exact_pair}");
    let exact_n: f64 = exact
        .iter()
        .map(|(p, w)| w * (*p.iter().max().unwrap() as f64 + 1.0))
        .sum();
    let n = posterior_n(&samples).unwrap().mean;
    assert!((n - exact_n).abs() < 0.05, "{n} vs {exact_n}");
}

#[test]
fn every_partition_of_four_records_is_visited() {
    let all: BTreeSet<Vec<u32>> = set_partitions(4).into_iter().collect();
    for rule in [AcceptanceRule::Literal, AcceptanceRule::Corrected] {
        let seen: BTreeSet<Vec<u32>> = chain(rule, 101_000)
            .iter()
            .map(|p| first_appearance(p.labels()))
            .collect();
        assert_eq!(seen, all, "{rule}");
    }
}

#[test]
fn link_mode_enumeration_excludes_within_file_pairs() {
    let schema = FieldSchema::with_levels(&[2]).unwrap();
    let data = RecordStore::new(
        schema.clone(),
        vec![vec![vec![0], vec![1]], vec![vec![0], vec![1]]],
    )
    .unwrap();
    let exact = exact_partition_posterior(&data, &Hyperparameters::defaults(&schema), Mode::Link);
    // 1 all-singletons, 4 single links, 2 perfect matchings
    assert_eq!(exact.len(), 7);
    assert!(exact.keys().all(|p| p[0] != p[1] && p[2] != p[3]));
}

#[test]
fn merging_identical_singletons_never_lowers_the_posterior() {
    let schema = FieldSchema::with_levels(&[3, 4, 2]).unwrap();
    let hyper = Hyperparameters::defaults(&schema);
    let data = RecordStore::new(schema, vec![vec![vec![2, 1, 0]], vec![vec![2, 1, 0]]]).unwrap();
    for seed in 0..50 {
        let mut rng = chain_rng(seed, 0);
        let state = init_state(&data, &hyper, &mut rng);
        let proposal = propose(
            &state,
            &data,
            &hyper,
            Mode::Link,
            AcceptanceRule::Literal,
            (0, 1),
            &mut rng,
        );
        assert_eq!(proposal.kind(), MoveKind::Merge);
        assert!(proposal.log_target_delta() >= 0.0);
        assert!(proposal.log_acceptance() >= 0.0);

        let before = log_joint_posterior(&state, &data, &hyper).unwrap();
        let delta = proposal.log_target_delta();
        let mut merged = state.clone();
        apply_proposal(
            &mut merged,
            &data,
            proposal,
            AcceptanceRule::Literal,
            &mut rng,
        );
        let after = log_joint_posterior(&merged, &data, &hyper).unwrap();
        assert!((after - before - delta).abs() < 1e-8);
        assert_eq!(merged.num_individuals(), 1);
    }
}
