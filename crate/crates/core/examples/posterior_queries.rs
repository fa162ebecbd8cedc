//! The questions a posterior over partitions can answer: match probabilities
//! of pairs and sets, most probable matching sets, and file patterns.

use bayeslink::analysis::{
    kway_match_probs, mms_prob, pairwise_match_prob, pattern_counts, set_match_prob,
    threshold_links, MatchQuery, MmsTable, Multiplicity,
};
use bayeslink::blocking::build_blocks;
use bayeslink::sampler::{run_chain, AcceptanceRule, ChainConfig};
use bayeslink::simulate::{generate, ThetaSource, TruthSpec};
use bayeslink::{FieldSchema, Hyperparameters, Mode};

fn main() -> bayeslink::Result<()> {
    let schema = FieldSchema::with_levels(&[2, 10, 12, 15])?;
    let hyper = Hyperparameters::uniform(&schema, 1.0, 49.0, 1.0)?.with_blocked(&[0])?;
    let truth = TruthSpec::Drawn {
        individuals: 40,
        inclusion: vec![0.6; 3],
    };
    let sim = generate(
        &truth,
        &schema,
        &ThetaSource::symmetric(&schema, 1.0),
        0.05,
        &hyper,
        8,
    )?;
    let data = &sim.data;
    let layout = data.layout();
    let blocks = build_blocks(data, &[0])?;
    let config = ChainConfig {
        gibbs_sweeps: 3_000,
        metropolis_rounds: 5,
        proposals_per_round: 20,
        burn_in: 500,
        thin: 5,
        rule: AcceptanceRule::Corrected,
        seed: 2,
        ..ChainConfig::defaults(Mode::Link)
    };
    let samples = run_chain(data, &hyper, &blocks, &config)?.partitions;

    // showcase the record whose best matching set is most certain among
    // those that link to something
    let table = MmsTable::build(&samples)?;
    let record = (0..data.num_records())
        .filter_map(|r| table.report(r).ok())
        .filter(|m| m.best_set.len() >= 2)
        .max_by(|x, y| x.probability.total_cmp(&y.probability))
        .map_or(0, |m| m.record);
    let report = table.report(record)?;
    let name = |r: u32| layout.record_id(r as usize).to_string();
    let set: Vec<String> = report.best_set.iter().map(|&r| name(r)).collect();
    println!(
        "record {}: most probable set {{{}}} (p = {:.3})",
        name(record as u32),
        set.join(","),
        report.probability
    );

    if report.best_set.len() >= 2 {
        let records: Vec<usize> = report.best_set.iter().map(|&r| r as usize).collect();
        let query = MatchQuery::new(records.clone(), data.num_records())?;
        println!(
            "  all linked: {:.3}; linked and nothing else: {:.3}; first pair: {:.3}",
            set_match_prob(&samples, &query)?,
            mms_prob(&samples, &records)?,
            pairwise_match_prob(&samples, records[0], records[1])?
        );
    }

    let kway = kway_match_probs(&samples, layout)?;
    println!("record {} appears in file patterns:", name(record as u32));
    for (pattern, p) in kway[record].probabilities() {
        println!("  {pattern:<6} {p:.3}");
    }

    let counts = pattern_counts(&samples, layout, Multiplicity::AtLeastOne)?;
    println!(
        "expected individuals per file pattern (mean N {:.1}):",
        counts.mean_n()
    );
    for (pattern, mean) in counts.means() {
        println!("  {pattern:<6} {mean:.2}");
    }

    let links = threshold_links(&samples, 0.5)?;
    println!(
        "{} record pairs with match probability >= 0.5 (not necessarily transitive)",
        links.len()
    );
    Ok(())
}
