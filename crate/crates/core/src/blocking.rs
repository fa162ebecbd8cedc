//! Exact-agreement blocking and uniform record-pair proposals.
//!
//! Records are grouped by their values on the key fields. The sampler only
//! ever proposes pairs inside one block, so records in different blocks are
//! never linked.

use std::collections::BTreeMap;

use rand::Rng;

use crate::error::{Error, Result};
use crate::model::{Hyperparameters, Mode, RecordStore};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Block {
    key: Vec<u32>,
    records: Vec<u32>,
    // (file, start, end) ranges into `records`
    files: Vec<(usize, usize, usize)>,
}

impl Block {
    pub fn key(&self) -> &[u32] {
        &self.key
    }

    /// Member records in ascending global order (hence grouped by file).
    pub fn records(&self) -> &[u32] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Number of unordered pairs a proposal may draw from this block.
    pub fn eligible_pairs(&self, mode: Mode) -> u64 {
        let n = self.records.len() as u64;
        let all = n * n.saturating_sub(1) / 2;
        match mode {
            Mode::Dedup => all,
            Mode::Link => {
                let same_file: u64 = self
                    .files
                    .iter()
                    .map(|&(_, s, e)| {
                        let m = (e - s) as u64;
                        m * m.saturating_sub(1) / 2
                    })
                    .sum();
                all - same_file
            }
        }
    }
}

/// Partition of all records by their key-field values.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlockIndex {
    key_fields: Vec<usize>,
    blocks: Vec<Block>,
    record_to_block: Vec<u32>,
}

/// Build blocks keyed on exact agreement over `key_fields`. An empty key
/// puts every record in one block. Blocks are ordered by key tuple.
pub fn build_blocks(data: &RecordStore, key_fields: &[usize]) -> Result<BlockIndex> {
    let p = data.num_fields();
    let mut seen = vec![false; p];
    for &l in key_fields {
        if l >= p {
            return Err(Error::Config(format!(
                "blocking field {l} does not exist ({p} fields)"
            )));
        }
        if std::mem::replace(&mut seen[l], true) {
            return Err(Error::Config(format!("blocking field {l} listed twice")));
        }
    }

    let mut groups: BTreeMap<Vec<u32>, Vec<u32>> = BTreeMap::new();
    for r in 0..data.num_records() {
        let key = key_fields.iter().map(|&l| data.value(r, l)).collect();
        groups.entry(key).or_default().push(r as u32);
    }

    let mut record_to_block = vec![0u32; data.num_records()];
    let blocks = groups
        .into_iter()
        .enumerate()
        .map(|(b, (key, records))| {
            let mut files: Vec<(usize, usize, usize)> = Vec::new();
            for (pos, &r) in records.iter().enumerate() {
                record_to_block[r as usize] = b as u32;
                let file = data.file_of(r as usize);
                match files.last_mut() {
                    Some(last) if last.0 == file => last.2 = pos + 1,
                    _ => files.push((file, pos, pos + 1)),
                }
            }
            Block {
                key,
                records,
                files,
            }
        })
        .collect();

    Ok(BlockIndex {
        key_fields: key_fields.to_vec(),
        blocks,
        record_to_block,
    })
}

impl BlockIndex {
    pub fn key_fields(&self) -> &[usize] {
        &self.key_fields
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn num_blocks(&self) -> usize {
        self.blocks.len()
    }

    pub fn num_records(&self) -> usize {
        self.record_to_block.len()
    }

    pub fn block_of(&self, record: usize) -> usize {
        self.record_to_block[record] as usize
    }

    pub fn block_for_key(&self, key: &[u32]) -> Option<&Block> {
        self.blocks
            .binary_search_by(|b| b.key.as_slice().cmp(key))
            .ok()
            .map(|i| &self.blocks[i])
    }

    /// Key fields must be zero-distortion fields (`b = inf`).
    pub fn check_hyperparameters(&self, hyper: &Hyperparameters) -> Result<()> {
        for &l in &self.key_fields {
            if l >= hyper.num_fields() || !hyper.is_blocked(l) {
                return Err(Error::Config(format!(
                    "blocking field {l} must have b = inf in the hyperparameters"
                )));
            }
        }
        Ok(())
    }
}

/// No eligible pair exists in the block (or in any block).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BlockExhausted;

/// Draw an unordered pair uniformly from the block's eligible pairs. In
/// [`Mode::Link`] both records come from different files.
pub fn pairs_in_block<R: Rng + ?Sized>(
    block: &Block,
    mode: Mode,
    rng: &mut R,
) -> std::result::Result<(u32, u32), BlockExhausted> {
    let n = block.records.len();
    match mode {
        Mode::Dedup => {
            if n < 2 {
                return Err(BlockExhausted);
            }
            let i = rng.random_range(0..n);
            let mut j = rng.random_range(0..n - 1);
            if j >= i {
                j += 1;
            }
            Ok((block.records[i], block.records[j]))
        }
        Mode::Link => {
            // Pick the first record's file with weight n_f * (n - n_f); the
            // ordered pair then has probability 1 / sum_f n_f (n - n_f).
            let weights: Vec<u64> = block
                .files
                .iter()
                .map(|&(_, s, e)| {
                    let m = (e - s) as u64;
                    m * (n as u64 - m)
                })
                .collect();
            let total: u64 = weights.iter().sum();
            if total == 0 {
                return Err(BlockExhausted);
            }
            let mut u = rng.random_range(0..total);
            let mut chosen = 0;
            for (f, &w) in weights.iter().enumerate() {
                if u < w {
                    chosen = f;
                    break;
                }
                u -= w;
            }
            let (_, start, end) = block.files[chosen];
            let first = block.records[rng.random_range(start..end)];
            let mut other = rng.random_range(0..n - (end - start));
            if other >= start {
                other += end - start;
            }
            Ok((first, block.records[other]))
        }
    }
}

/// Uniform pair proposals over all eligible pairs of all blocks: a block is
/// chosen with probability proportional to its eligible-pair count, then a
/// pair uniformly within it.
#[derive(Debug, Clone)]
pub struct PairSampler<'a> {
    index: &'a BlockIndex,
    mode: Mode,
    cumulative: Vec<u64>,
    total: u64,
}

impl<'a> PairSampler<'a> {
    pub fn new(index: &'a BlockIndex, mode: Mode) -> Self {
        let mut total = 0u64;
        let cumulative = index
            .blocks
            .iter()
            .map(|b| {
                total += b.eligible_pairs(mode);
                total
            })
            .collect();
        Self {
            index,
            mode,
            cumulative,
            total,
        }
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn total_pairs(&self) -> u64 {
        self.total
    }

    pub fn sample<R: Rng + ?Sized>(
        &self,
        rng: &mut R,
    ) -> std::result::Result<(u32, u32), BlockExhausted> {
        if self.total == 0 {
            return Err(BlockExhausted);
        }
        let u = rng.random_range(0..self.total);
        let b = self.cumulative.partition_point(|&c| c <= u);
        pairs_in_block(&self.index.blocks[b], self.mode, rng)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::FieldSchema;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn store(files: Vec<Vec<Vec<u32>>>, levels: &[usize]) -> RecordStore {
        RecordStore::new(FieldSchema::with_levels(levels).unwrap(), files).unwrap()
    }

    #[test]
    fn empty_key_gives_one_block() {
        let data = store(vec![vec![vec![0], vec![1]], vec![vec![1]]], &[2]);
        let index = build_blocks(&data, &[]).unwrap();
        assert_eq!(index.num_blocks(), 1);
        assert_eq!(index.blocks()[0].len(), 3);
    }

    #[test]
    fn binary_key_sizes() {
        let rows = [0, 0, 1, 1, 1, 0].iter().map(|&v| vec![v, 0]).collect();
        let data = store(vec![rows], &[2, 3]);
        let index = build_blocks(&data, &[0]).unwrap();
        let sizes: Vec<usize> = index.blocks().iter().map(Block::len).collect();
        assert_eq!(sizes, vec![3, 3]);
        assert_eq!(index.block_for_key(&[1]).unwrap().records(), &[2, 3, 4]);
    }

    #[test]
    fn non_key_difference_shares_block() {
        let data = store(vec![vec![vec![1, 0], vec![1, 2]]], &[2, 3]);
        let index = build_blocks(&data, &[0]).unwrap();
        assert_eq!(index.block_of(0), index.block_of(1));
    }

    #[test]
    fn invalid_key_fields() {
        let data = store(vec![vec![vec![0]]], &[2]);
        assert!(build_blocks(&data, &[1]).is_err());
        let data = store(vec![vec![vec![0, 0]]], &[2, 2]);
        assert!(build_blocks(&data, &[0, 0]).is_err());
    }

    #[test]
    fn same_file_block_is_exhausted_in_link_mode() {
        let data = store(vec![vec![vec![0], vec![0]]], &[2]);
        let index = build_blocks(&data, &[]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(
            pairs_in_block(&index.blocks()[0], Mode::Link, &mut rng),
            Err(BlockExhausted)
        );
        assert!(pairs_in_block(&index.blocks()[0], Mode::Dedup, &mut rng).is_ok());
        assert_eq!(
            PairSampler::new(&index, Mode::Link).sample(&mut rng),
            Err(BlockExhausted)
        );
    }

    #[test]
    fn unique_pair_always_drawn() {
        let data = store(vec![vec![vec![0]], vec![vec![0]]], &[2]);
        let index = build_blocks(&data, &[]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..100 {
            let (a, b) = pairs_in_block(&index.blocks()[0], Mode::Link, &mut rng).unwrap();
            assert_eq!((a.min(b), a.max(b)), (0, 1));
        }
    }

    #[test]
    fn cross_file_pairs_are_uniform() {
        let data = store(vec![vec![vec![0], vec![0]], vec![vec![0], vec![0]]], &[2]);
        let index = build_blocks(&data, &[]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut counts = std::collections::HashMap::new();
        let draws = 100_000;
        for _ in 0..draws {
            let (a, b) = pairs_in_block(&index.blocks()[0], Mode::Link, &mut rng).unwrap();
            assert_ne!(data.file_of(a as usize), data.file_of(b as usize));
            *counts.entry((a.min(b), a.max(b))).or_insert(0usize) += 1;
        }
        assert_eq!(counts.len(), 4);
        for (&pair, &c) in &counts {
            let freq = c as f64 / draws as f64;
            assert!((freq - 0.25).abs() < 0.02, "{pair:?}: {freq}");
        }
    }

    #[test]
    fn sampler_never_crosses_blocks() {
        let rows: Vec<Vec<u32>> = (0..30).map(|i| vec![i % 3, i % 5]).collect();
        let data = store(vec![rows[..15].to_vec(), rows[15..].to_vec()], &[3, 5]);
        let index = build_blocks(&data, &[0]).unwrap();
        let sampler = PairSampler::new(&index, Mode::Dedup);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..5000 {
            let (a, b) = sampler.sample(&mut rng).unwrap();
            assert_ne!(a, b);
            assert_eq!(index.block_of(a as usize), index.block_of(b as usize));
        }
    }

    #[test]
    fn block_choice_makes_pairs_uniform_overall() {
        // blocks of sizes 2 and 3 in dedup mode: 1 + 3 = 4 pairs, each 1/4
        let rows = [0, 0, 1, 1, 1].iter().map(|&v| vec![v]).collect();
        let data = store(vec![rows], &[2]);
        let index = build_blocks(&data, &[0]).unwrap();
        let sampler = PairSampler::new(&index, Mode::Dedup);
        assert_eq!(sampler.total_pairs(), 4);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut in_small = 0;
        let draws = 100_000;
        for _ in 0..draws {
            let (a, _) = sampler.sample(&mut rng).unwrap();
            if a < 2 {
                in_small += 1;
            }
        }
        let freq = in_small as f64 / draws as f64;
        assert!((freq - 0.25).abs() < 0.01, "{freq}");
    }

    #[test]
    fn key_fields_must_be_blocked_in_hyperparameters() {
        let data = store(vec![vec![vec![0, 1]]], &[2, 2]);
        let index = build_blocks(&data, &[1]).unwrap();
        let hyper = Hyperparameters::defaults(data.schema());
        assert!(index.check_hyperparameters(&hyper).is_err());
        let hyper = hyper.with_blocked(&[1]).unwrap();
        assert!(index.check_hyperparameters(&hyper).is_ok());
    }
}
