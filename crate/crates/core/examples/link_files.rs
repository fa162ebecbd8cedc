//! Link three files that contain no internal duplicates.
//!
//! Writes synthetic CSV files to a temporary directory, loads them back the
//! way user data would be loaded, blocks on the first two fields and summarizes
//! the posterior.
//!
//! ```bash
//! cargo run --release --example link_files
//! ```

use bayeslink::analysis::{posterior_n, shared_mms_partition};
use bayeslink::blocking::build_blocks;
use bayeslink::io::{load_files, write_files, LoadOptions};
use bayeslink::sampler::{run_chain, AcceptanceRule, ChainConfig};
use bayeslink::simulate::{generate, ThetaSource, TruthSpec};
use bayeslink::{FieldSchema, Hyperparameters, Mode};

fn main() -> bayeslink::Result<()> {
    let dir = tempfile::tempdir().expect("temporary directory");

    // 300 people, three lists of 150 drawn from them, 1% distortion
    let schema = FieldSchema::with_levels(&[2, 40, 365, 50])?;
    let hyper = Hyperparameters::uniform(&schema, 1.0, 99.0, 1.0)?.with_blocked(&[0, 1])?;
    let truth = TruthSpec::FixedSizes {
        individuals: 300,
        file_sizes: vec![150; 3],
    };
    let sim = generate(
        &truth,
        &schema,
        &ThetaSource::symmetric(&schema, 5.0),
        0.01,
        &hyper,
        42,
    )?;
    let paths: Vec<_> = (0..3)
        .map(|f| dir.path().join(format!("list-{f}.csv")))
        .collect();
    write_files(&sim.data, None, &paths, b',')?;

    let loaded = load_files(&paths, &LoadOptions::default())?;
    let data = &loaded.data;
    // blocked fields are trusted: they are never distorted
    let key: Vec<usize> = ["f0", "f1"]
        .iter()
        .map(|f| data.schema().field_index(f).expect("field exists"))
        .collect();
    // prior mean distortion of 1%
    let hyper = Hyperparameters::uniform(data.schema(), 1.0, 99.0, 1.0)?.with_blocked(&key)?;
    let blocks = build_blocks(data, &key)?;
    println!(
        "{} records in {} blocks",
        data.num_records(),
        blocks.num_blocks()
    );

    let config = ChainConfig {
        gibbs_sweeps: 400,
        metropolis_rounds: 20,
        proposals_per_round: 50,
        burn_in: 100,
        thin: 2,
        rule: AcceptanceRule::Corrected,
        seed: 1,
        ..ChainConfig::defaults(Mode::Link)
    };
    let samples = run_chain(data, &hyper, &blocks, &config)?;

    let n = posterior_n(&samples.partitions)?;
    println!(
        "posterior N: mean {:.1}, sd {:.1}, 95% interval [{}, {}] (truth {})",
        n.mean,
        n.sd,
        n.quantile(0.025),
        n.quantile(0.975),
        sim.truth.num_individuals()
    );
    let estimate = shared_mms_partition(&samples.partitions)?;
    println!("point estimate: {} individuals", estimate.num_clusters());
    println!(
        "acceptance: {:.4} overall, splits {:.4}, merges {:.4}",
        samples.stats.acceptance_rate(),
        samples.stats.split_rate(),
        samples.stats.merge_rate()
    );
    Ok(())
}
