//! De-duplicate one file, where the same person may appear several times.

use bayeslink::analysis::{posterior_n, MmsTable};
use bayeslink::blocking::build_blocks;
use bayeslink::io::{load_files, LoadOptions};
use bayeslink::sampler::{run_chain, AcceptanceRule, ChainConfig};
use bayeslink::{Hyperparameters, Mode};

const PEOPLE: &str = "\
sex,birth_year,state,race
m,1931,PA,white
m,1931,PA,white
m,1931,PA,black
f,1928,OH,white
f,1928,OH,white
f,1940,NY,asian
m,1935,CA,white
m,1935,CA,white
f,1928,OH,black
f,1940,NJ,asian
";

fn main() -> bayeslink::Result<()> {
    let dir = tempfile::tempdir().expect("temporary directory");
    let path = dir.path().join("people.csv");
    std::fs::write(&path, PEOPLE).expect("write input");

    let loaded = load_files(&[&path], &LoadOptions::default())?;
    let data = &loaded.data;
    let schema = data.schema();
    let key: Vec<usize> = ["sex", "birth_year"]
        .iter()
        .map(|n| schema.field_index(n).unwrap())
        .collect();
    // high prior distortion so near matches are worth considering
    let hyper = Hyperparameters::uniform(schema, 2.0, 8.0, 1.0)?.with_blocked(&key)?;
    let blocks = build_blocks(data, &key)?;

    let config = ChainConfig {
        gibbs_sweeps: 20_000,
        metropolis_rounds: 1,
        proposals_per_round: 5,
        burn_in: 1_000,
        thin: 5,
        rule: AcceptanceRule::Corrected,
        seed: 3,
        ..ChainConfig::defaults(Mode::Dedup)
    };
    let samples = run_chain(data, &hyper, &blocks, &config)?;
    let n = posterior_n(&samples.partitions)?;
    println!(
        "posterior mean number of people: {:.2} (sd {:.2})",
        n.mean, n.sd
    );

    let table = MmsTable::build(&samples.partitions)?;
    let estimate = table.shared_partition();
    for members in estimate.clusters() {
        let rows: Vec<String> = members.iter().map(|&r| format!("row {}", r + 1)).collect();
        let p = table.report(members[0] as usize)?.probability;
        println!("  {} (p = {p:.2})", rows.join(", "));
    }
    Ok(())
}
