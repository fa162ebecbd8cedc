//! Posterior summaries computed from stored partitions.
//!
//! Every function takes the stored partitions of one or more chains as a
//! slice; probabilities are empirical frequencies over that slice.

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use crate::error::{Error, Result};
use crate::model::FileLayout;
use crate::partition::Partition;

/// A set of files, as a bitmask over file indices (at most 64 files).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct FilePattern(pub u64);

impl FilePattern {
    pub const MAX_FILES: usize = 64;

    pub fn single(file: usize) -> Self {
        FilePattern(1 << file)
    }

    pub fn from_files(files: impl IntoIterator<Item = usize>) -> Self {
        FilePattern(files.into_iter().fold(0, |acc, f| acc | (1 << f)))
    }

    pub fn insert(&mut self, file: usize) {
        self.0 |= 1 << file;
    }

    pub fn contains(self, file: usize) -> bool {
        self.0 & (1 << file) != 0
    }

    pub fn files(self) -> Vec<usize> {
        (0..Self::MAX_FILES).filter(|&f| self.contains(f)).collect()
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    /// Every nonempty pattern over `num_files` files, in increasing mask order.
    pub fn all(num_files: usize) -> Vec<FilePattern> {
        (1..1u64 << num_files).map(FilePattern).collect()
    }
}

/// Files joined by `+`, e.g. `0+2`.
impl fmt::Display for FilePattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let files: Vec<String> = self.files().iter().map(|f| f.to_string()).collect();
        f.write_str(&files.join("+"))
    }
}

impl std::str::FromStr for FilePattern {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut pattern = FilePattern::default();
        for part in s.split('+') {
            let file: usize = part
                .trim()
                .parse()
                .map_err(|_| Error::Query(format!("bad file pattern {s:?}")))?;
            if file >= Self::MAX_FILES {
                return Err(Error::Query(format!("file {file} out of range")));
            }
            pattern.insert(file);
        }
        Ok(pattern)
    }
}

pub(crate) fn check_files(layout: &FileLayout) -> Result<()> {
    if layout.num_files() > FilePattern::MAX_FILES {
        return Err(Error::Query(format!(
            "file patterns support at most {} files, got {}",
            FilePattern::MAX_FILES,
            layout.num_files()
        )));
    }
    Ok(())
}

/// The file pattern of every cluster of `partition`, indexed by cluster.
pub fn cluster_patterns(partition: &Partition, layout: &FileLayout) -> Vec<FilePattern> {
    let mut patterns = vec![FilePattern::default(); partition.num_clusters()];
    for r in 0..partition.num_records() {
        patterns[partition.cluster_of(r) as usize].insert(layout.file_of(r));
    }
    patterns
}

fn check_samples(samples: &[Partition]) -> Result<usize> {
    let first = samples
        .first()
        .ok_or_else(|| Error::Query("no samples".into()))?;
    let n = first.num_records();
    if samples.iter().any(|p| p.num_records() != n) {
        return Err(Error::Query("samples cover different record counts".into()));
    }
    Ok(n)
}

fn check_records(records: &[usize], n: usize) -> Result<()> {
    for (i, &r) in records.iter().enumerate() {
        if r >= n {
            return Err(Error::Query(format!("record {r} out of range 0..{n}")));
        }
        if records[..i].contains(&r) {
            return Err(Error::Query(format!("record {r} repeated")));
        }
    }
    Ok(())
}

/// A set of at least two distinct records.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MatchQuery {
    records: Vec<usize>,
}

impl MatchQuery {
    pub fn new(records: Vec<usize>, num_records: usize) -> Result<Self> {
        if records.len() < 2 {
            return Err(Error::Query(
                "a match query needs at least two records".into(),
            ));
        }
        check_records(&records, num_records)?;
        Ok(Self { records })
    }

    pub fn records(&self) -> &[usize] {
        &self.records
    }
}

/// Fraction of samples in which `r1` and `r2` share an individual; 1 when
/// they are the same record.
pub fn pairwise_match_prob(samples: &[Partition], r1: usize, r2: usize) -> Result<f64> {
    let n = check_samples(samples)?;
    if r1 >= n || r2 >= n {
        return Err(Error::Query(format!("record out of range 0..{n}")));
    }
    if r1 == r2 {
        return Ok(1.0);
    }
    let hits = samples.iter().filter(|p| p.same_cluster(r1, r2)).count();
    Ok(hits as f64 / samples.len() as f64)
}

/// Fraction of samples in which all queried records share one individual.
pub fn set_match_prob(samples: &[Partition], query: &MatchQuery) -> Result<f64> {
    let n = check_samples(samples)?;
    check_records(query.records(), n)?;
    let first = query.records[0];
    let hits = samples
        .iter()
        .filter(|p| query.records[1..].iter().all(|&r| p.same_cluster(first, r)))
        .count();
    Ok(hits as f64 / samples.len() as f64)
}

fn is_exact_cluster(p: &Partition, records: &[usize]) -> bool {
    let label = p.cluster_of(records[0]);
    if !records.iter().all(|&r| p.cluster_of(r) == label) {
        return false;
    }
    p.labels().iter().filter(|&&l| l == label).count() == records.len()
}

/// Fraction of samples in which the records form exactly one individual:
/// all linked and no other record linked to them.
pub fn mms_prob(samples: &[Partition], records: &[usize]) -> Result<f64> {
    let n = check_samples(samples)?;
    if records.is_empty() {
        return Err(Error::Query("empty record set".into()));
    }
    check_records(records, n)?;
    let hits = samples
        .iter()
        .filter(|p| is_exact_cluster(p, records))
        .count();
    Ok(hits as f64 / samples.len() as f64)
}

/// The most probable maximal matching set of one record.
#[derive(Debug, Clone, PartialEq)]
pub struct MmsReport {
    pub record: usize,
    /// Sorted member records, including `record`.
    pub best_set: Vec<u32>,
    pub probability: f64,
}

/// Occurrence counts of every cluster observed across samples, with each
/// record's most frequent cluster.
#[derive(Debug, Clone)]
pub struct MmsTable {
    sets: Vec<(Vec<u32>, u64)>,
    best: Vec<usize>,
    samples: u64,
}

impl MmsTable {
    pub fn build(samples: &[Partition]) -> Result<Self> {
        let n = check_samples(samples)?;
        let mut index: HashMap<Vec<u32>, usize> = HashMap::new();
        let mut sets: Vec<(Vec<u32>, u64)> = Vec::new();
        for p in samples {
            for members in p.clusters() {
                match index.get(&members) {
                    Some(&i) => sets[i].1 += 1,
                    None => {
                        index.insert(members.clone(), sets.len());
                        sets.push((members, 1));
                    }
                }
            }
        }
        // preference: more occurrences, then fewer members, then
        // lexicographically smaller member list
        let better = |a: usize, b: usize| {
            let (sa, ca) = &sets[a];
            let (sb, cb) = &sets[b];
            cb.cmp(ca)
                .then(sa.len().cmp(&sb.len()))
                .then(sa.cmp(sb))
                .is_lt()
        };
        let mut best = vec![usize::MAX; n];
        for i in 0..sets.len() {
            for &r in &sets[i].0 {
                let current = best[r as usize];
                if current == usize::MAX || better(i, current) {
                    best[r as usize] = i;
                }
            }
        }
        Ok(Self {
            sets,
            best,
            samples: samples.len() as u64,
        })
    }

    pub fn num_samples(&self) -> u64 {
        self.samples
    }

    /// Every observed cluster with its occurrence count.
    pub fn observed_sets(&self) -> impl Iterator<Item = (&[u32], u64)> {
        self.sets.iter().map(|(s, c)| (s.as_slice(), *c))
    }

    /// Observed clusters containing `record` and their MMS probabilities.
    pub fn candidates(&self, record: usize) -> Vec<(&[u32], f64)> {
        self.sets
            .iter()
            .filter(|(s, _)| s.binary_search(&(record as u32)).is_ok())
            .map(|(s, c)| (s.as_slice(), *c as f64 / self.samples as f64))
            .collect()
    }

    pub fn report(&self, record: usize) -> Result<MmsReport> {
        let &i = self
            .best
            .get(record)
            .ok_or_else(|| Error::Query(format!("record {record} out of range")))?;
        let (set, count) = &self.sets[i];
        Ok(MmsReport {
            record,
            best_set: set.clone(),
            probability: *count as f64 / self.samples as f64,
        })
    }

    /// Clusters that are the most probable MMS of every one of their
    /// members; every other record is a singleton.
    pub fn shared_partition(&self) -> Partition {
        let n = self.best.len();
        let mut labels: Vec<u32> = (0..n as u32).collect();
        let mut taken = vec![false; self.sets.len()];
        for r in 0..n {
            let i = self.best[r];
            if taken[i] {
                continue;
            }
            let set = &self.sets[i].0;
            if set.iter().all(|&m| self.best[m as usize] == i) {
                taken[i] = true;
                for &m in set {
                    labels[m as usize] = set[0];
                }
            }
        }
        Partition::from_labels(&labels)
    }
}

/// The observed cluster containing `record` with the highest MMS
/// probability. Ties go to the smaller set, then the lexicographically
/// smaller member list.
pub fn most_probable_mms(samples: &[Partition], record: usize) -> Result<MmsReport> {
    MmsTable::build(samples)?.report(record)
}

/// The shared most probable MMS estimate (transitive by construction).
pub fn shared_mms_partition(samples: &[Partition]) -> Result<Partition> {
    Ok(MmsTable::build(samples)?.shared_partition())
}

/// Per-record occurrence counts of the file pattern of its cluster.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PatternDistribution {
    pub counts: BTreeMap<FilePattern, u64>,
    pub samples: u64,
}

impl PatternDistribution {
    pub fn probability(&self, pattern: FilePattern) -> f64 {
        self.counts.get(&pattern).copied().unwrap_or(0) as f64 / self.samples as f64
    }

    pub fn probabilities(&self) -> BTreeMap<FilePattern, f64> {
        self.counts
            .iter()
            .map(|(&k, &c)| (k, c as f64 / self.samples as f64))
            .collect()
    }
}

/// For each record, the posterior distribution of the set of files its
/// individual appears in. Counts per record always total the sample count.
pub fn kway_match_probs(
    samples: &[Partition],
    layout: &FileLayout,
) -> Result<Vec<PatternDistribution>> {
    let n = check_samples(samples)?;
    check_files(layout)?;
    if layout.num_records() != n {
        return Err(Error::Query(
            "layout and samples disagree on record count".into(),
        ));
    }
    let mut out = vec![
        PatternDistribution {
            counts: BTreeMap::new(),
            samples: samples.len() as u64,
        };
        n
    ];
    for p in samples {
        let patterns = cluster_patterns(p, layout);
        for (r, dist) in out.iter_mut().enumerate() {
            *dist
                .counts
                .entry(patterns[p.cluster_of(r) as usize])
                .or_insert(0) += 1;
        }
    }
    Ok(out)
}

/// Posterior of the number of individuals.
#[derive(Debug, Clone, PartialEq)]
pub struct NSummary {
    /// Sample counts by N.
    pub histogram: BTreeMap<usize, u64>,
    pub mean: f64,
    /// Population standard deviation over samples.
    pub sd: f64,
    pub samples: u64,
}

impl NSummary {
    pub fn from_counts(values: impl IntoIterator<Item = usize>) -> Result<Self> {
        let mut histogram = BTreeMap::new();
        for v in values {
            *histogram.entry(v).or_insert(0u64) += 1;
        }
        let samples: u64 = histogram.values().sum();
        if samples == 0 {
            return Err(Error::Query("no samples".into()));
        }
        let mean = histogram
            .iter()
            .map(|(&v, &c)| v as f64 * c as f64)
            .sum::<f64>()
            / samples as f64;
        let var = histogram
            .iter()
            .map(|(&v, &c)| (v as f64 - mean).powi(2) * c as f64)
            .sum::<f64>()
            / samples as f64;
        Ok(Self {
            histogram,
            mean,
            sd: var.sqrt(),
            samples,
        })
    }

    /// Empirical quantile (lower) of N.
    pub fn quantile(&self, q: f64) -> usize {
        let target = (q.clamp(0.0, 1.0) * self.samples as f64).ceil().max(1.0) as u64;
        let mut seen = 0;
        for (&v, &c) in &self.histogram {
            seen += c;
            if seen >= target {
                return v;
            }
        }
        *self.histogram.keys().next_back().expect("nonempty")
    }
}

pub fn posterior_n(samples: &[Partition]) -> Result<NSummary> {
    check_samples(samples)?;
    NSummary::from_counts(samples.iter().map(Partition::num_clusters))
}

/// Which individuals count toward a file pattern.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Multiplicity {
    /// Individuals with at least one record in each file of the pattern and
    /// none elsewhere.
    #[default]
    AtLeastOne,
    /// Individuals with exactly one record in each file of the pattern and
    /// none elsewhere; others are tallied separately.
    ExactlyOne,
}

/// Posterior-mean counts of individuals per file pattern, kept as integer
/// totals over samples so identities hold exactly.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PatternCounts {
    pub totals: BTreeMap<FilePattern, u64>,
    /// Individuals outside every pattern (only under
    /// [`Multiplicity::ExactlyOne`]).
    pub unmatched: u64,
    /// Sum of N over samples.
    pub n_total: u64,
    pub samples: u64,
}

impl PatternCounts {
    pub fn mean(&self, pattern: FilePattern) -> f64 {
        self.totals.get(&pattern).copied().unwrap_or(0) as f64 / self.samples as f64
    }

    pub fn means(&self) -> BTreeMap<FilePattern, f64> {
        self.totals
            .iter()
            .map(|(&k, &v)| (k, v as f64 / self.samples as f64))
            .collect()
    }

    pub fn mean_n(&self) -> f64 {
        self.n_total as f64 / self.samples as f64
    }
}

pub(crate) fn partition_pattern_counts(
    p: &Partition,
    layout: &FileLayout,
    multiplicity: Multiplicity,
    totals: &mut BTreeMap<FilePattern, u64>,
) -> u64 {
    let mut unmatched = 0;
    let patterns = cluster_patterns(p, layout);
    let exact = match multiplicity {
        Multiplicity::AtLeastOne => None,
        Multiplicity::ExactlyOne => Some(p.cluster_sizes()),
    };
    for (c, &pattern) in patterns.iter().enumerate() {
        // one record per file iff the cluster size equals its file count
        if let Some(sizes) = &exact {
            if sizes[c] != pattern.len() {
                unmatched += 1;
                continue;
            }
        }
        *totals.entry(pattern).or_insert(0) += 1;
    }
    unmatched
}

pub fn pattern_counts(
    samples: &[Partition],
    layout: &FileLayout,
    multiplicity: Multiplicity,
) -> Result<PatternCounts> {
    let n = check_samples(samples)?;
    check_files(layout)?;
    if layout.num_records() != n {
        return Err(Error::Query(
            "layout and samples disagree on record count".into(),
        ));
    }
    let mut totals = BTreeMap::new();
    let mut unmatched = 0;
    let mut n_total = 0;
    for p in samples {
        unmatched += partition_pattern_counts(p, layout, multiplicity, &mut totals);
        n_total += p.num_clusters() as u64;
    }
    Ok(PatternCounts {
        totals,
        unmatched,
        n_total,
        samples: samples.len() as u64,
    })
}

/// Record pairs whose posterior match probability is at least `threshold`.
/// The result is generally not transitive.
pub fn threshold_links(samples: &[Partition], threshold: f64) -> Result<Vec<(u32, u32, f64)>> {
    check_samples(samples)?;
    let mut counts: HashMap<(u32, u32), u64> = HashMap::new();
    for p in samples {
        for members in p.clusters() {
            for (i, &a) in members.iter().enumerate() {
                for &b in &members[i + 1..] {
                    *counts.entry((a, b)).or_insert(0) += 1;
                }
            }
        }
    }
    let total = samples.len() as f64;
    let mut links: Vec<(u32, u32, f64)> = counts
        .into_iter()
        .map(|((a, b), c)| (a, b, c as f64 / total))
        .filter(|&(_, _, prob)| prob >= threshold)
        .collect();
    links.sort_by(|x, y| (x.0, x.1).cmp(&(y.0, y.1)));
    Ok(links)
}
