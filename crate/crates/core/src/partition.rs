//! Canonical partitions of records.

/// Relabel clusters by order of first appearance: the first record gets
/// cluster 0, the next record with a new label gets cluster 1, and so on.
pub fn canonicalize_partition(labels: &[u32]) -> Vec<u32> {
    let mut map = std::collections::HashMap::with_capacity(labels.len().min(1 << 16));
    let mut next = 0u32;
    labels
        .iter()
        .map(|&label| {
            *map.entry(label).or_insert_with(|| {
                next += 1;
                next - 1
            })
        })
        .collect()
}

/// A partition of records in canonical form (see [`canonicalize_partition`]).
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Partition {
    labels: Vec<u32>,
    clusters: usize,
}

impl Partition {
    pub fn from_labels(labels: &[u32]) -> Self {
        Self::from_canonical(canonicalize_partition(labels))
    }

    /// Wrap labels that are already canonical.
    ///
    /// Panics if `labels` is not in canonical form.
    pub fn from_canonical(labels: Vec<u32>) -> Self {
        let mut clusters = 0u32;
        for &label in &labels {
            assert!(label <= clusters, "labels are not canonical");
            if label == clusters {
                clusters += 1;
            }
        }
        Self {
            labels,
            clusters: clusters as usize,
        }
    }

    /// Checks canonical form without panicking.
    pub fn try_from_canonical(labels: Vec<u32>) -> Option<Self> {
        let mut clusters = 0u32;
        for &label in &labels {
            if label > clusters {
                return None;
            }
            if label == clusters {
                clusters += 1;
            }
        }
        Some(Self {
            labels,
            clusters: clusters as usize,
        })
    }

    /// Every record in its own cluster.
    pub fn singletons(num_records: usize) -> Self {
        Self {
            labels: (0..num_records as u32).collect(),
            clusters: num_records,
        }
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn num_records(&self) -> usize {
        self.labels.len()
    }

    pub fn num_clusters(&self) -> usize {
        self.clusters
    }

    #[inline]
    pub fn cluster_of(&self, record: usize) -> u32 {
        self.labels[record]
    }

    pub fn same_cluster(&self, a: usize, b: usize) -> bool {
        self.labels[a] == self.labels[b]
    }

    /// Members of every cluster, in cluster order; members ascending.
    pub fn clusters(&self) -> Vec<Vec<u32>> {
        let mut out = vec![Vec::new(); self.clusters];
        for (r, &label) in self.labels.iter().enumerate() {
            out[label as usize].push(r as u32);
        }
        out
    }

    pub fn cluster_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.clusters];
        for &label in &self.labels {
            sizes[label as usize] += 1;
        }
        sizes
    }
}
