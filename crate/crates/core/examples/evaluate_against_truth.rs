//! Score a posterior against known identities: link error rates, the
//! confusion matrix of file patterns and relative errors of pattern counts.

use bayeslink::analysis::{pattern_counts, shared_mms_partition, Multiplicity};
use bayeslink::blocking::build_blocks;
use bayeslink::evaluation::{
    confusion_matrix, link_counts, posterior_link_counts, relative_errors, truth_pattern_counts,
};
use bayeslink::sampler::{run_chain, AcceptanceRule, ChainConfig};
use bayeslink::simulate::{generate, ThetaSource, TruthSpec};
use bayeslink::{FieldSchema, Hyperparameters, Mode};

fn main() -> bayeslink::Result<()> {
    let schema = FieldSchema::with_levels(&[2, 40, 365, 50])?;
    let hyper = Hyperparameters::uniform(&schema, 1.0, 99.0, 1.0)?.with_blocked(&[0, 1])?;
    let truth = TruthSpec::FixedSizes {
        individuals: 400,
        file_sizes: vec![200; 3],
    };
    let sim = generate(
        &truth,
        &schema,
        &ThetaSource::symmetric(&schema, 10.0),
        0.02,
        &hyper,
        17,
    )?;
    let data = &sim.data;
    let blocks = build_blocks(data, &[0, 1])?;
    let config = ChainConfig {
        gibbs_sweeps: 300,
        metropolis_rounds: 10,
        proposals_per_round: 100,
        burn_in: 100,
        thin: 1,
        rule: AcceptanceRule::Corrected,
        seed: 4,
        ..ChainConfig::defaults(Mode::Link)
    };
    let samples = run_chain(data, &hyper, &blocks, &config)?.partitions;

    let posterior = posterior_link_counts(&samples, &sim.truth)?;
    let point = link_counts(&shared_mms_partition(&samples)?, &sim.truth)?;
    println!(
        "truth: {} links among {} individuals",
        sim.truth.num_links(),
        sim.truth.num_individuals()
    );
    for (what, c) in [("posterior mean", posterior), ("point estimate", point)] {
        println!(
            "{what:>14}: true {:.1}, false {:.1}, missing {:.1}, FNR {:.4}, FPR {:.4}",
            c.true_links, c.false_links, c.missing_links, c.fnr, c.fpr
        );
    }

    let layout = data.layout();
    let confusion = confusion_matrix(&samples, &sim.truth, layout)?.row_normalized();
    let (patterns, rows) = confusion.dense();
    print!("{:>8}", "est\\true");
    for p in &patterns {
        print!("{:>8}", p.to_string());
    }
    println!();
    for (p, row) in patterns.iter().zip(&rows) {
        print!("{:>8}", p.to_string());
        for v in row {
            print!("{v:>8.3}");
        }
        println!();
    }

    let estimates = pattern_counts(&samples, layout, Multiplicity::AtLeastOne)?.means();
    let truth_counts = truth_pattern_counts(&sim.truth, layout, Multiplicity::AtLeastOne)?;
    println!("relative error of pattern counts (%):");
    for (pattern, err) in relative_errors(&estimates, &truth_counts) {
        match err {
            Some(e) => println!("  {pattern:<6} {e:+.2}"),
            None => println!("  {pattern:<6} undefined (no true individuals)"),
        }
    }
    Ok(())
}
