//! Error rates and the posterior of N as distortion grows.
//!
//! The default is a reduced population that runs in well under a minute;
//! pass `full` for three files of 2000 records (about a minute and a half
//! with `--release`).

use bayeslink::sampler::{AcceptanceRule, ChainConfig};
use bayeslink::simulate::{distortion_sweep, SweepSpec, ThetaSource, TruthSpec};
use bayeslink::{FieldSchema, Hyperparameters, Mode};

fn main() -> bayeslink::Result<()> {
    let full = std::env::args().any(|a| a == "full");
    let (people, per_file) = if full { (4000, 2000) } else { (1000, 500) };

    // sex, birth year, birth day and a location code; the first three are
    // trusted and used for blocking
    let schema = FieldSchema::with_levels(&[2, 40, 365, 1000])?;
    let hyper = Hyperparameters::uniform(&schema, 1.0, 99.0, 1.0)?.with_blocked(&[0, 1, 2])?;
    let spec = SweepSpec {
        truth: TruthSpec::FixedSizes {
            individuals: people,
            file_sizes: vec![per_file; 3],
        },
        theta: ThetaSource::symmetric(&schema, 200.0),
        schema,
        hyper,
        block_keys: vec![0, 1, 2],
        seed: 7,
    };
    let config = ChainConfig {
        gibbs_sweeps: 100,
        metropolis_rounds: 5,
        proposals_per_round: if full { 20_000 } else { 5_000 },
        burn_in: 50,
        thin: 1,
        rule: AcceptanceRule::Corrected,
        ..ChainConfig::defaults(Mode::Link)
    };

    println!(
        "{:>8} {:>8} {:>8} {:>10} {:>8}",
        "level", "FNR", "FPR", "mean N", "true N"
    );
    for row in distortion_sweep(&[0.0, 0.0025, 0.005, 0.01, 0.02, 0.05], &spec, &config)? {
        println!(
            "{:>8} {:>8.4} {:>8.4} {:>10.1} {:>8}",
            row.level, row.posterior.fnr, row.posterior.fpr, row.n.mean, row.true_individuals
        );
    }
    Ok(())
}
