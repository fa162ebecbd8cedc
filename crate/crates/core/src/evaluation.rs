//! Scoring estimated linkage against known identities.

use std::collections::{BTreeMap, HashMap};

use crate::analysis::{
    check_files, cluster_patterns, partition_pattern_counts, FilePattern, Multiplicity,
};
use crate::error::{Error, Result};
use crate::model::FileLayout;
use crate::partition::Partition;

/// The true individual behind every record.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroundTruth {
    ids: Vec<u64>,
    partition: Partition,
}

impl GroundTruth {
    pub fn from_ids(ids: Vec<u64>) -> Self {
        let mut index: HashMap<u64, u32> = HashMap::new();
        let labels: Vec<u32> = ids
            .iter()
            .map(|id| {
                let next = index.len() as u32;
                *index.entry(*id).or_insert(next)
            })
            .collect();
        Self {
            partition: Partition::from_canonical(labels),
            ids,
        }
    }

    /// Arbitrary string identifiers, e.g. from an input column.
    pub fn from_strings<S: AsRef<str>>(ids: &[S]) -> Self {
        let mut index: HashMap<&str, u64> = HashMap::new();
        let ids = ids
            .iter()
            .map(|s| {
                let next = index.len() as u64;
                *index.entry(s.as_ref()).or_insert(next)
            })
            .collect();
        Self::from_ids(ids)
    }

    pub fn ids(&self) -> &[u64] {
        &self.ids
    }

    pub fn num_records(&self) -> usize {
        self.ids.len()
    }

    pub fn partition(&self) -> &Partition {
        &self.partition
    }

    pub fn num_individuals(&self) -> usize {
        self.partition.num_clusters()
    }

    /// Number of linked record pairs.
    pub fn num_links(&self) -> u64 {
        self.partition
            .cluster_sizes()
            .iter()
            .map(|&s| pairs(s as u64))
            .sum()
    }
}

fn pairs(n: u64) -> u64 {
    n * n.saturating_sub(1) / 2
}

/// Pairwise linkage errors with the derived rates. Counts are integers for a
/// single partition and posterior means for samples.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkCounts {
    pub true_links: f64,
    pub false_links: f64,
    pub missing_links: f64,
    /// `missing / (true + missing)`.
    pub fnr: f64,
    /// `false / (true + missing)`.
    pub fpr: f64,
    /// `false / (false + true)`.
    pub precision_complement: f64,
}

impl LinkCounts {
    /// Rates from raw counts. With no true links, FNR is 0 and FPR is 0 or
    /// infinite depending on whether any false link exists.
    pub fn from_counts(true_links: f64, false_links: f64, missing_links: f64) -> Self {
        let truth = true_links + missing_links;
        let (fnr, fpr) = if truth > 0.0 {
            (missing_links / truth, false_links / truth)
        } else if false_links > 0.0 {
            (0.0, f64::INFINITY)
        } else {
            (0.0, 0.0)
        };
        let estimated = true_links + false_links;
        Self {
            true_links,
            false_links,
            missing_links,
            fnr,
            fpr,
            precision_complement: if estimated > 0.0 {
                false_links / estimated
            } else {
                0.0
            },
        }
    }
}

fn check_truth(p: &Partition, truth: &GroundTruth) -> Result<()> {
    if p.num_records() != truth.num_records() {
        return Err(Error::Query(format!(
            "estimate covers {} records, truth {}",
            p.num_records(),
            truth.num_records()
        )));
    }
    Ok(())
}

/// `(true, false, missing)` link counts of one partition.
fn raw_link_counts(p: &Partition, truth: &GroundTruth) -> (u64, u64, u64) {
    let mut joint: HashMap<(u32, u32), u64> = HashMap::new();
    for r in 0..p.num_records() {
        *joint
            .entry((p.cluster_of(r), truth.partition.cluster_of(r)))
            .or_insert(0) += 1;
    }
    let both: u64 = joint.values().map(|&c| pairs(c)).sum();
    let estimated: u64 = p.cluster_sizes().iter().map(|&s| pairs(s as u64)).sum();
    (both, estimated - both, truth.num_links() - both)
}

pub fn link_counts(estimate: &Partition, truth: &GroundTruth) -> Result<LinkCounts> {
    check_truth(estimate, truth)?;
    let (t, f, m) = raw_link_counts(estimate, truth);
    Ok(LinkCounts::from_counts(t as f64, f as f64, m as f64))
}

/// Posterior-mean link counts; rates are computed from the mean counts.
pub fn posterior_link_counts(samples: &[Partition], truth: &GroundTruth) -> Result<LinkCounts> {
    if samples.is_empty() {
        return Err(Error::Query("no samples".into()));
    }
    let (mut t, mut f, mut m) = (0u64, 0u64, 0u64);
    for p in samples {
        check_truth(p, truth)?;
        let c = raw_link_counts(p, truth);
        t += c.0;
        f += c.1;
        m += c.2;
    }
    let s = samples.len() as f64;
    Ok(LinkCounts::from_counts(
        t as f64 / s,
        f as f64 / s,
        m as f64 / s,
    ))
}

/// Posterior-mean record counts by (estimated pattern, true pattern).
#[derive(Debug, Clone, PartialEq)]
pub struct ConfusionMatrix {
    pub cells: BTreeMap<(FilePattern, FilePattern), f64>,
    pub num_files: usize,
}

impl ConfusionMatrix {
    pub fn get(&self, estimated: FilePattern, truth: FilePattern) -> f64 {
        self.cells.get(&(estimated, truth)).copied().unwrap_or(0.0)
    }

    pub fn total(&self) -> f64 {
        self.cells.values().sum()
    }

    pub fn row_sums(&self) -> BTreeMap<FilePattern, f64> {
        let mut sums = BTreeMap::new();
        for (&(row, _), &v) in &self.cells {
            *sums.entry(row).or_insert(0.0) += v;
        }
        sums
    }

    /// Each row divided by its sum; rows with zero mass stay empty.
    pub fn row_normalized(&self) -> ConfusionMatrix {
        let sums = self.row_sums();
        let cells = self
            .cells
            .iter()
            .filter(|(k, _)| sums[&k.0] > 0.0)
            .map(|(&k, &v)| (k, v / sums[&k.0]))
            .collect();
        ConfusionMatrix {
            cells,
            num_files: self.num_files,
        }
    }

    /// Dense matrix over all nonempty patterns, rows estimated, columns true.
    pub fn dense(&self) -> (Vec<FilePattern>, Vec<Vec<f64>>) {
        let patterns = FilePattern::all(self.num_files);
        let rows = patterns
            .iter()
            .map(|&r| patterns.iter().map(|&c| self.get(r, c)).collect())
            .collect();
        (patterns, rows)
    }
}

/// Confusion matrix of records' estimated versus true linkage patterns,
/// averaged over the given partitions (a single estimate is a one-element
/// slice).
pub fn confusion_matrix(
    samples: &[Partition],
    truth: &GroundTruth,
    layout: &FileLayout,
) -> Result<ConfusionMatrix> {
    check_files(layout)?;
    if samples.is_empty() {
        return Err(Error::Query("no samples".into()));
    }
    if layout.num_records() != truth.num_records() {
        return Err(Error::Query(
            "layout and truth disagree on record count".into(),
        ));
    }
    let true_patterns = cluster_patterns(&truth.partition, layout);
    let mut counts: BTreeMap<(FilePattern, FilePattern), u64> = BTreeMap::new();
    for p in samples {
        check_truth(p, truth)?;
        let est = cluster_patterns(p, layout);
        for r in 0..p.num_records() {
            let key = (
                est[p.cluster_of(r) as usize],
                true_patterns[truth.partition.cluster_of(r) as usize],
            );
            *counts.entry(key).or_insert(0) += 1;
        }
    }
    let s = samples.len() as f64;
    Ok(ConfusionMatrix {
        cells: counts.into_iter().map(|(k, v)| (k, v as f64 / s)).collect(),
        num_files: layout.num_files(),
    })
}

/// Individuals per file pattern under the truth.
pub fn truth_pattern_counts(
    truth: &GroundTruth,
    layout: &FileLayout,
    multiplicity: Multiplicity,
) -> Result<BTreeMap<FilePattern, u64>> {
    check_files(layout)?;
    if layout.num_records() != truth.num_records() {
        return Err(Error::Query(
            "layout and truth disagree on record count".into(),
        ));
    }
    let mut totals = BTreeMap::new();
    partition_pattern_counts(&truth.partition, layout, multiplicity, &mut totals);
    Ok(totals)
}

/// `100 * (estimate - truth) / truth`, or `None` when the truth is 0.
pub fn relative_error(estimate: f64, truth: f64) -> Option<f64> {
    if truth == 0.0 {
        None
    } else {
        Some(100.0 * (estimate - truth) / truth)
    }
}

/// Relative errors for every pattern present in either table.
pub fn relative_errors(
    estimates: &BTreeMap<FilePattern, f64>,
    truth: &BTreeMap<FilePattern, u64>,
) -> BTreeMap<FilePattern, Option<f64>> {
    let mut keys: Vec<FilePattern> = estimates.keys().chain(truth.keys()).copied().collect();
    keys.sort_unstable();
    keys.dedup();
    keys.into_iter()
        .map(|k| {
            let e = estimates.get(&k).copied().unwrap_or(0.0);
            let t = truth.get(&k).copied().unwrap_or(0) as f64;
            (k, relative_error(e, t))
        })
        .collect()
}
