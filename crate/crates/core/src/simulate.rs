//! Synthetic multi-file data drawn from the generative model.
//!
//! Truth, theta and latent fields come from RNG stream 0 of the seed. The
//! distortion coin of every cell comes from stream 1 and its replacement
//! value from stream 2, one of each per cell whatever the level, so with a
//! fixed seed the distorted cells at a lower level are a subset of those at
//! a higher level.

use std::collections::HashMap;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::SliceRandom;
use rand::Rng;

use crate::analysis::{posterior_n, shared_mms_partition, NSummary};
use crate::blocking::build_blocks;
use crate::error::{Error, Result};
use crate::evaluation::{link_counts, posterior_link_counts, GroundTruth, LinkCounts};
use crate::model::{FieldSchema, Hyperparameters, LatentState, RecordStore};
use crate::sampler::{chain_rng, draw_dirichlet, run_chain, AcceptanceStats, ChainConfig};

/// How true individuals map to records.
#[derive(Debug, Clone, PartialEq)]
pub enum TruthSpec {
    /// Individual id of every record, per file.
    Explicit {
        files: Vec<Vec<u64>>,
        /// Permit an individual to appear more than once in a file.
        allow_duplicates: bool,
    },
    /// `individuals` people, each included in file `i` independently with
    /// probability `inclusion[i]`. People in no file produce no records.
    Drawn {
        individuals: usize,
        inclusion: Vec<f64>,
    },
    /// File `i` is a simple random sample of `file_sizes[i]` people from a
    /// population of `individuals`.
    FixedSizes {
        individuals: usize,
        file_sizes: Vec<usize>,
    },
}

/// Where the true field distributions come from.
#[derive(Debug, Clone, PartialEq)]
pub enum ThetaSource {
    Explicit(Vec<Vec<f64>>),
    /// One Dirichlet draw per field with these parameters.
    Dirichlet(Vec<Vec<f64>>),
}

impl ThetaSource {
    /// Symmetric Dirichlet with concentration `alpha` on every level.
    pub fn symmetric(schema: &FieldSchema, alpha: f64) -> Self {
        ThetaSource::Dirichlet(
            (0..schema.num_fields())
                .map(|l| vec![alpha; schema.levels(l)])
                .collect(),
        )
    }

    fn resolve<R: Rng + ?Sized>(&self, schema: &FieldSchema, rng: &mut R) -> Result<Vec<Vec<f64>>> {
        let vectors = match self {
            ThetaSource::Explicit(v) | ThetaSource::Dirichlet(v) => v,
        };
        if vectors.len() != schema.num_fields() {
            return Err(Error::Simulation(format!(
                "{} theta vectors for {} fields",
                vectors.len(),
                schema.num_fields()
            )));
        }
        for (l, v) in vectors.iter().enumerate() {
            if v.len() != schema.levels(l) {
                return Err(Error::Simulation(format!(
                    "field {l}: {} entries for {} levels",
                    v.len(),
                    schema.levels(l)
                )));
            }
        }
        match self {
            ThetaSource::Explicit(v) => {
                for (l, t) in v.iter().enumerate() {
                    if t.iter().any(|&x| !(0.0..=1.0).contains(&x))
                        || (t.iter().sum::<f64>() - 1.0).abs() > 1e-9
                    {
                        return Err(Error::Simulation(format!(
                            "theta for field {l} is not a probability vector"
                        )));
                    }
                }
                Ok(v.clone())
            }
            ThetaSource::Dirichlet(v) => {
                if v.iter().flatten().any(|&a| !(a > 0.0 && a.is_finite())) {
                    return Err(Error::Simulation(
                        "Dirichlet parameters must be positive".into(),
                    ));
                }
                Ok(v.iter().map(|a| draw_dirichlet(a, rng)).collect())
            }
        }
    }
}

/// A generated dataset with its truth.
#[derive(Debug, Clone)]
pub struct Simulated {
    pub data: RecordStore,
    pub truth: GroundTruth,
    /// The generating latent state; its labels are the canonical truth
    /// labels and its beta is the distortion level on non-blocked fields.
    pub state: LatentState,
}

fn truth_ids<R: Rng + ?Sized>(spec: &TruthSpec, rng: &mut R) -> Result<Vec<Vec<u64>>> {
    let files = match spec {
        TruthSpec::Explicit {
            files,
            allow_duplicates,
        } => {
            if !allow_duplicates {
                for (f, ids) in files.iter().enumerate() {
                    let mut sorted = ids.clone();
                    sorted.sort_unstable();
                    if sorted.windows(2).any(|w| w[0] == w[1]) {
                        return Err(Error::Simulation(format!(
                            "file {f} lists an individual twice"
                        )));
                    }
                }
            }
            files.clone()
        }
        TruthSpec::Drawn {
            individuals,
            inclusion,
        } => {
            if inclusion.iter().any(|p| !(0.0..=1.0).contains(p)) {
                return Err(Error::Simulation(
                    "inclusion probabilities must lie in [0, 1]".into(),
                ));
            }
            let mut files = vec![Vec::new(); inclusion.len()];
            for id in 0..*individuals as u64 {
                for (f, &p) in inclusion.iter().enumerate() {
                    if rng.random::<f64>() < p {
                        files[f].push(id);
                    }
                }
            }
            files
        }
        TruthSpec::FixedSizes {
            individuals,
            file_sizes,
        } => {
            let mut files = Vec::with_capacity(file_sizes.len());
            for (f, &size) in file_sizes.iter().enumerate() {
                if size > *individuals {
                    return Err(Error::Simulation(format!(
                        "file {f} needs {size} distinct individuals, population is {individuals}"
                    )));
                }
                let mut ids: Vec<u64> = rand::seq::index::sample(rng, *individuals, size)
                    .into_iter()
                    .map(|i| i as u64)
                    .collect();
                ids.shuffle(rng);
                files.push(ids);
            }
            files
        }
    };
    if files.is_empty() || files.iter().all(Vec::is_empty) {
        return Err(Error::Simulation("the truth produces no records".into()));
    }
    Ok(files)
}

/// Draw a dataset: latent fields from theta, then each non-blocked cell is
/// replaced by a fresh theta draw with probability `distortion` (recorded
/// as distorted even if the draw repeats the true value). Blocked fields
/// are copied.
pub fn generate(
    truth: &TruthSpec,
    schema: &FieldSchema,
    theta: &ThetaSource,
    distortion: f64,
    hyper: &Hyperparameters,
    seed: u64,
) -> Result<Simulated> {
    if !(0.0..=1.0).contains(&distortion) {
        return Err(Error::Simulation(format!(
            "distortion {distortion} outside [0, 1]"
        )));
    }
    hyper.check_schema(schema)?;
    let mut rng = chain_rng(seed, 0);
    let mut coin_rng = chain_rng(seed, 1);
    let mut value_rng = chain_rng(seed, 2);

    let ids = truth_ids(truth, &mut rng)?;
    let theta = theta.resolve(schema, &mut rng)?;
    let samplers: Vec<WeightedIndex<f64>> = theta
        .iter()
        .map(|t| WeightedIndex::new(t).map_err(|e| Error::Simulation(e.to_string())))
        .collect::<Result<_>>()?;
    let p = schema.num_fields();

    let truth = GroundTruth::from_ids(ids.iter().flatten().copied().collect());
    let labels = truth.partition().labels().to_vec();
    let n = labels.len();
    let n_individuals = truth.num_individuals();

    // latent fields in order of first appearance
    let mut y = vec![0u32; n * p];
    for j in 0..n_individuals {
        for l in 0..p {
            y[j * p + l] = samplers[l].sample(&mut rng) as u32;
        }
    }

    let mut values = Vec::with_capacity(n * p);
    let mut z = vec![false; n * p];
    for (r, &label) in labels.iter().enumerate() {
        for l in 0..p {
            let coin = coin_rng.random::<f64>();
            let replacement = samplers[l].sample(&mut value_rng) as u32;
            let distorted = !hyper.is_blocked(l) && coin < distortion;
            z[r * p + l] = distorted;
            values.push(if distorted {
                replacement
            } else {
                y[label as usize * p + l]
            });
        }
    }

    let sizes: Vec<usize> = ids.iter().map(Vec::len).collect();
    let data = RecordStore::from_flat(schema.clone(), &sizes, values)?;
    let beta = (0..p)
        .map(|l| if hyper.is_blocked(l) { 0.0 } else { distortion })
        .collect();
    let state = LatentState::from_parts(labels, y, z, theta, beta)?;
    Ok(Simulated { data, truth, state })
}

/// Merge all files into one, keeping record order; the truth carries over.
pub fn concatenate_files(data: &RecordStore) -> Result<RecordStore> {
    RecordStore::from_flat(
        data.schema().clone(),
        &[data.num_records()],
        data.values().to_vec(),
    )
}

/// Inputs shared by every level of a distortion sweep.
#[derive(Debug, Clone)]
pub struct SweepSpec {
    pub truth: TruthSpec,
    pub schema: FieldSchema,
    pub theta: ThetaSource,
    pub hyper: Hyperparameters,
    pub block_keys: Vec<usize>,
    /// Data seed, shared by all levels.
    pub seed: u64,
}

/// One level of a distortion sweep.
#[derive(Debug, Clone)]
pub struct SweepRow {
    pub level: f64,
    pub true_individuals: usize,
    pub records: usize,
    /// Posterior-mean link counts.
    pub posterior: LinkCounts,
    /// Link counts of the shared most probable MMS estimate.
    pub point_estimate: LinkCounts,
    pub n: NSummary,
    pub stats: AcceptanceStats,
}

/// For each distortion level: generate data, run a chain, score it.
pub fn distortion_sweep(
    levels: &[f64],
    spec: &SweepSpec,
    config: &ChainConfig,
) -> Result<Vec<SweepRow>> {
    if levels.is_empty() {
        return Err(Error::Simulation("no distortion levels".into()));
    }
    let mut rows = Vec::with_capacity(levels.len());
    for &level in levels {
        let sim = generate(
            &spec.truth,
            &spec.schema,
            &spec.theta,
            level,
            &spec.hyper,
            spec.seed,
        )?;
        let blocks = build_blocks(&sim.data, &spec.block_keys)?;
        let samples = run_chain(&sim.data, &spec.hyper, &blocks, config)?;
        let posterior = posterior_link_counts(&samples.partitions, &sim.truth)?;
        let point = link_counts(&shared_mms_partition(&samples.partitions)?, &sim.truth)?;
        let n = posterior_n(&samples.partitions)?;
        log::info!(
            "distortion {level}: FNR {:.4}, FPR {:.4}, mean N {:.1} (truth {})",
            posterior.fnr,
            posterior.fpr,
            n.mean,
            sim.truth.num_individuals()
        );
        rows.push(SweepRow {
            level,
            true_individuals: sim.truth.num_individuals(),
            records: sim.data.num_records(),
            posterior,
            point_estimate: point,
            n,
            stats: samples.stats,
        });
    }
    Ok(rows)
}

/// Count of each value per field, for checking generated marginals.
pub fn value_frequencies(data: &RecordStore, field: usize) -> HashMap<u32, usize> {
    let mut counts = HashMap::new();
    for r in 0..data.num_records() {
        *counts.entry(data.value(r, field)).or_insert(0) += 1;
    }
    counts
}
