//! Run several chains, store them, and pool them again later.

use bayeslink::analysis::posterior_n;
use bayeslink::blocking::build_blocks;
use bayeslink::io::{load_samples, save_samples};
use bayeslink::sampler::{pooled_partitions, run_chains, AcceptanceRule, ChainConfig};
use bayeslink::simulate::{generate, ThetaSource, TruthSpec};
use bayeslink::{FieldSchema, Hyperparameters, Mode};

fn main() -> bayeslink::Result<()> {
    let schema = FieldSchema::with_levels(&[2, 30, 40, 20])?;
    let hyper = Hyperparameters::uniform(&schema, 1.0, 99.0, 1.0)?.with_blocked(&[0])?;
    let truth = TruthSpec::FixedSizes {
        individuals: 120,
        file_sizes: vec![60, 60],
    };
    let sim = generate(
        &truth,
        &schema,
        &ThetaSource::symmetric(&schema, 2.0),
        0.02,
        &hyper,
        11,
    )?;
    let blocks = build_blocks(&sim.data, &[0])?;
    let config = ChainConfig {
        gibbs_sweeps: 600,
        metropolis_rounds: 10,
        proposals_per_round: 20,
        burn_in: 100,
        thin: 5,
        record_theta: true,
        rule: AcceptanceRule::Corrected,
        ..ChainConfig::defaults(Mode::Link)
    };
    let chains = run_chains(&sim.data, &hyper, &blocks, &config, 3)?;

    let dir = tempfile::tempdir().expect("temporary directory");
    let mut paths = Vec::new();
    for c in &chains {
        let path = dir.path().join(format!("chain-{}.bin", c.chain));
        save_samples(c, &path)?;
        println!(
            "chain {}: {} partitions, mean N {:.2}, {} bytes",
            c.chain,
            c.len(),
            posterior_n(&c.partitions)?.mean,
            std::fs::metadata(&path).map(|m| m.len()).unwrap_or(0)
        );
        paths.push(path);
    }

    let restored: Vec<_> = paths
        .iter()
        .map(load_samples)
        .collect::<bayeslink::Result<_>>()?;
    assert_eq!(restored, chains);
    let pooled = pooled_partitions(&restored);
    let beta: f64 = restored
        .iter()
        .flat_map(|c| &c.beta_trace)
        .map(|b| b[1])
        .sum::<f64>()
        / restored.iter().map(|c| c.beta_trace.len()).sum::<usize>() as f64;
    println!(
        "pooled: {} partitions, mean N {:.2} (truth {}), mean beta of field 1 {beta:.4}",
        pooled.len(),
        posterior_n(&pooled)?.mean,
        sim.truth.num_individuals()
    );
    Ok(())
}
