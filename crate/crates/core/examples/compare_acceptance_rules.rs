//! The two split-merge acceptance rules on a four-record file.
//!
//! `Literal` accepts on the posterior ratio alone. `Corrected` adds the
//! proposal ratio and redraws the latent fields of the touched clusters, so
//! its chain leaves the partition posterior invariant. On tiny problems the
//! difference is easy to see.

use std::collections::BTreeMap;

use bayeslink::blocking::build_blocks;
use bayeslink::sampler::{run_chain, AcceptanceRule, ChainConfig};
use bayeslink::{FieldSchema, Hyperparameters, Mode, RecordStore};

fn main() -> bayeslink::Result<()> {
    let schema = FieldSchema::with_levels(&[2, 2])?;
    let data = RecordStore::new(
        schema.clone(),
        vec![vec![vec![0, 0], vec![0, 0], vec![0, 1], vec![1, 1]]],
    )?;
    let hyper = Hyperparameters::uniform(&schema, 1.0, 2.0, 1.0)?;
    let blocks = build_blocks(&data, &[])?;

    let mut freq: BTreeMap<Vec<u32>, [f64; 2]> = BTreeMap::new();
    for (i, rule) in [AcceptanceRule::Literal, AcceptanceRule::Corrected]
        .into_iter()
        .enumerate()
    {
        let config = ChainConfig {
            gibbs_sweeps: 100_000,
            metropolis_rounds: 1,
            proposals_per_round: 3,
            burn_in: 1_000,
            thin: 1,
            rule,
            seed: 5,
            ..ChainConfig::defaults(Mode::Dedup)
        };
        let samples = run_chain(&data, &hyper, &blocks, &config)?;
        let total = samples.len() as f64;
        for p in &samples.partitions {
            freq.entry(p.labels().to_vec()).or_default()[i] += 1.0 / total;
        }
    }

    println!("{:<12} {:>8} {:>10}", "partition", "literal", "corrected");
    for (labels, [lit, cor]) in freq {
        let name: String = labels.iter().map(|l| char::from(b'a' + *l as u8)).collect();
        println!("{name:<12} {lit:>8.4} {cor:>10.4}");
    }
    Ok(())
}
