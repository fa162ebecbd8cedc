//! Test-side oracles that share nothing with the library's inference code.
#![allow(dead_code)]

use std::collections::BTreeMap;

use bayeslink::{Hyperparameters, LatentState, Mode, RecordStore};
use statrs::function::gamma::ln_gamma;

/// All set partitions of `n` items as restricted growth strings.
pub fn set_partitions(n: usize) -> Vec<Vec<u32>> {
    fn extend(prefix: &mut Vec<u32>, n: usize, next: u32, out: &mut Vec<Vec<u32>>) {
        if prefix.len() == n {
            out.push(prefix.clone());
            return;
        }
        for label in 0..=next {
            prefix.push(label);
            extend(prefix, n, if label == next { next + 1 } else { next }, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    extend(&mut Vec::with_capacity(n), n, 0, &mut out);
    out
}

/// Relabel by first appearance.
pub fn first_appearance(labels: &[u32]) -> Vec<u32> {
    let mut map = BTreeMap::new();
    labels
        .iter()
        .map(|&l| {
            let next = map.len() as u32;
            *map.entry(l).or_insert(next)
        })
        .collect()
}

fn ln_multibeta(params: &[f64]) -> f64 {
    params.iter().map(|&v| ln_gamma(v)).sum::<f64>() - ln_gamma(params.iter().sum())
}

fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// `ln p(x_l | partition)` for one field with theta and beta integrated out,
/// by summing over every `y` of the clusters and every `z` of the records.
fn field_log_evidence(
    data: &RecordStore,
    hyper: &Hyperparameters,
    field: usize,
    partition: &[u32],
) -> f64 {
    let n = partition.len();
    let clusters = *partition.iter().max().unwrap() as usize + 1;
    let m = data.schema().levels(field);
    let mu = hyper.mu(field);
    let blocked = hyper.is_blocked(field);
    let x: Vec<usize> = (0..n).map(|r| data.value(r, field) as usize).collect();

    let mut terms = Vec::new();
    let mut y = vec![0usize; clusters];
    loop {
        let z_configs = if blocked { 1 } else { 1usize << n };
        for zmask in 0..z_configs {
            let consistent =
                (0..n).all(|r| zmask >> r & 1 == 1 || x[r] == y[partition[r] as usize]);
            if !consistent {
                continue;
            }
            let mut counts = mu.to_vec();
            for &v in &y {
                counts[v] += 1.0;
            }
            let mut distorted = 0;
            for r in 0..n {
                if zmask >> r & 1 == 1 {
                    counts[x[r]] += 1.0;
                    distorted += 1;
                }
            }
            let mut t = ln_multibeta(&counts) - ln_multibeta(mu);
            if !blocked {
                let (a, b) = (hyper.a(field), hyper.b(field));
                t += ln_multibeta(&[a + distorted as f64, b + (n - distorted) as f64])
                    - ln_multibeta(&[a, b]);
            }
            terms.push(t);
        }
        // odometer over y
        let mut i = 0;
        while i < clusters {
            y[i] += 1;
            if y[i] < m {
                break;
            }
            y[i] = 0;
            i += 1;
        }
        if i == clusters {
            break;
        }
    }
    log_sum_exp(&terms)
}

/// Exact posterior over canonical partitions under a uniform prior on label
/// vectors with `N_max = n` labels. Link mode drops partitions that put two
/// records of one file together.
pub fn exact_partition_posterior(
    data: &RecordStore,
    hyper: &Hyperparameters,
    mode: Mode,
) -> BTreeMap<Vec<u32>, f64> {
    let n = data.num_records();
    let mut logs = Vec::new();
    for partition in set_partitions(n) {
        let clusters = *partition.iter().max().unwrap() as usize + 1;
        if mode == Mode::Link {
            let mut seen = std::collections::HashSet::new();
            if !(0..n).all(|r| seen.insert((partition[r], data.file_of(r)))) {
                continue;
            }
        }
        // number of label vectors inducing this partition: n (n-1) ... (n-N+1)
        let mut t: f64 = (0..clusters).map(|k| ((n - k) as f64).ln()).sum();
        for l in 0..data.num_fields() {
            t += field_log_evidence(data, hyper, l, &partition);
        }
        logs.push((partition, t));
    }
    let norm = log_sum_exp(&logs.iter().map(|(_, t)| *t).collect::<Vec<_>>());
    logs.into_iter()
        .map(|(p, t)| (p, (t - norm).exp()))
        .collect()
}

/// Total-variation distance between two distributions on the same keys.
pub fn total_variation(a: &BTreeMap<Vec<u32>, f64>, b: &BTreeMap<Vec<u32>, f64>) -> f64 {
    let mut keys: Vec<&Vec<u32>> = a.keys().chain(b.keys()).collect();
    keys.sort();
    keys.dedup();
    0.5 * keys
        .into_iter()
        .map(|k| (a.get(k).copied().unwrap_or(0.0) - b.get(k).copied().unwrap_or(0.0)).abs())
        .sum::<f64>()
}

/// Every violated state constraint, described in words.
pub fn state_violations(
    state: &LatentState,
    data: &RecordStore,
    hyper: &Hyperparameters,
    mode: Mode,
) -> Vec<String> {
    let mut out = Vec::new();
    let n = data.num_records();
    for r in 0..n {
        let label = state.label(r);
        let y = state.y(label);
        for l in 0..data.num_fields() {
            let z = state.z(r, l);
            if !z && y[l] != data.value(r, l) {
                out.push(format!(
                    "record {r} field {l}: z = 0 but x = {} and y = {}",
                    data.value(r, l),
                    y[l]
                ));
            }
            if z && hyper.is_blocked(l) {
                out.push(format!(
                    "record {r} field {l}: distortion on a blocked field"
                ));
            }
        }
    }
    if mode == Mode::Link {
        let mut seen = BTreeMap::new();
        for r in 0..n {
            if let Some(other) = seen.insert((state.label(r), data.file_of(r)), r) {
                out.push(format!(
                    "records {other} and {r} share file {} and individual",
                    data.file_of(r)
                ));
            }
        }
    }
    out
}
