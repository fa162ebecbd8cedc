//! Split-merge proposals over the linkage structure.
//!
//! A proposal starts from a pair of seed records. If they share an
//! individual, the cluster is split: each seed anchors one side and the
//! remaining members are assigned by fair coin flips (in [`Mode::Link`],
//! a member sharing a file with one side is forced to the other). If they
//! belong to different individuals, the two clusters are merged.
//!
//! Two acceptance rules are available. [`AcceptanceRule::Literal`] copies the
//! latent fields from the seed records, sets the minimal distortion
//! indicators, and accepts with the ratio of joint posterior densities.
//! [`AcceptanceRule::Corrected`] targets the partition posterior with the
//! latent fields and distortion indicators integrated out (given theta and
//! beta), includes the label-count factor of the uniform label prior and the
//! coin-flip proposal probabilities, and on acceptance redraws the latent
//! fields and indicators of the touched clusters from their exact
//! conditional.

use rand::Rng;

use crate::blocking::PairSampler;
use crate::model::{Hyperparameters, LatentState, Mode, RecordStore};

use super::conditionals::distortion_probability;

const LN_2: f64 = std::f64::consts::LN_2;

/// How split-merge proposals are accepted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum AcceptanceRule {
    /// Seed-copy proposal, joint density ratio, no proposal correction.
    #[default]
    Literal,
    /// Collapsed partition target with exact Hastings correction.
    Corrected,
}

impl std::fmt::Display for AcceptanceRule {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            AcceptanceRule::Literal => "literal",
            AcceptanceRule::Corrected => "corrected",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MoveKind {
    Split,
    Merge,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepOutcome {
    /// No eligible pair exists.
    Exhausted,
    /// The move would violate a structural constraint.
    Invalid(MoveKind),
    Rejected(MoveKind),
    Accepted(MoveKind),
}

/// Logarithms of theta and beta, rebuilt whenever either is resampled.
#[derive(Debug, Clone)]
pub(crate) struct LogTables {
    ln_theta: Vec<Vec<f64>>,
    ln_beta: Vec<f64>,
    ln_keep: Vec<f64>,
    blocked: Vec<bool>,
}

impl LogTables {
    pub(crate) fn new(state: &LatentState, hyper: &Hyperparameters) -> Self {
        Self {
            ln_theta: state
                .theta()
                .iter()
                .map(|t| t.iter().map(|v| v.ln()).collect())
                .collect(),
            ln_beta: state.beta().iter().map(|b| b.ln()).collect(),
            ln_keep: state.beta().iter().map(|b| (1.0 - b).ln()).collect(),
            blocked: (0..state.num_fields())
                .map(|l| hyper.is_blocked(l))
                .collect(),
        }
    }

    /// Log contribution of one record's field given its distortion flag.
    #[inline]
    fn record_term(&self, field: usize, x: u32, distorted: bool) -> f64 {
        match (distorted, self.blocked[field]) {
            (true, true) => f64::NEG_INFINITY,
            (true, false) => self.ln_theta[field][x as usize] + self.ln_beta[field],
            (false, true) => 0.0,
            (false, false) => self.ln_keep[field],
        }
    }
}

/// A proposed split or merge, with its log acceptance ratio.
#[derive(Debug, Clone)]
pub struct Proposal {
    kind: MoveKind,
    seeds: (u32, u32),
    /// Label that survives the move; holds `side_a`.
    label: u32,
    /// Merge only: the label that is freed.
    other: Option<u32>,
    side_a: Vec<u32>,
    side_b: Vec<u32>,
    /// Seed-copied latent fields (literal rule).
    y_a: Vec<u32>,
    y_b: Vec<u32>,
    free_flips: usize,
    valid: bool,
    log_target_delta: f64,
    log_hastings: f64,
}

impl Proposal {
    pub fn kind(&self) -> MoveKind {
        self.kind
    }

    pub fn seeds(&self) -> (u32, u32) {
        self.seeds
    }

    /// False when the move breaks a structural constraint (a within-file
    /// duplicate in [`Mode::Link`]).
    pub fn is_valid(&self) -> bool {
        self.valid
    }

    /// Records kept under the surviving label (split) or of the first
    /// cluster (merge).
    pub fn side_a(&self) -> &[u32] {
        &self.side_a
    }

    pub fn side_b(&self) -> &[u32] {
        &self.side_b
    }

    /// Number of members assigned by an unforced coin flip.
    pub fn free_flips(&self) -> usize {
        self.free_flips
    }

    /// Change in the log target density.
    pub fn log_target_delta(&self) -> f64 {
        self.log_target_delta
    }

    /// Log ratio of reverse to forward proposal probabilities.
    pub fn log_hastings(&self) -> f64 {
        self.log_hastings
    }

    pub fn log_acceptance(&self) -> f64 {
        let v = self.log_target_delta + self.log_hastings;
        if v.is_nan() {
            f64::NEG_INFINITY
        } else {
            v
        }
    }
}

/// Build the split or merge proposal for the seed pair `(r1, r2)`.
pub fn propose<R: Rng + ?Sized>(
    state: &LatentState,
    data: &RecordStore,
    hyper: &Hyperparameters,
    mode: Mode,
    rule: AcceptanceRule,
    seeds: (u32, u32),
    rng: &mut R,
) -> Proposal {
    let tables = LogTables::new(state, hyper);
    propose_with(state, data, &tables, mode, rule, seeds, rng)
}

pub(crate) fn propose_with<R: Rng + ?Sized>(
    state: &LatentState,
    data: &RecordStore,
    tables: &LogTables,
    mode: Mode,
    rule: AcceptanceRule,
    seeds: (u32, u32),
    rng: &mut R,
) -> Proposal {
    let (r1, r2) = seeds;
    debug_assert_ne!(r1, r2);
    if state.label(r1 as usize) == state.label(r2 as usize) {
        propose_split(state, data, tables, mode, rule, seeds, rng)
    } else {
        propose_merge(state, data, tables, mode, rule, seeds)
    }
}

fn propose_split<R: Rng + ?Sized>(
    state: &LatentState,
    data: &RecordStore,
    tables: &LogTables,
    mode: Mode,
    rule: AcceptanceRule,
    (r1, r2): (u32, u32),
    rng: &mut R,
) -> Proposal {
    let label = state.label(r1 as usize);
    let members = state.cluster(label);
    let mut side_a = vec![r1];
    let mut side_b = vec![r2];
    let mut files_a = vec![data.file_of(r1 as usize)];
    let mut files_b = vec![data.file_of(r2 as usize)];
    let mut free_flips = 0;
    let mut valid = true;
    for &r in members {
        if r == r1 || r == r2 {
            continue;
        }
        let to_a = if mode.allows_duplicates() {
            free_flips += 1;
            rng.random::<bool>()
        } else {
            let f = data.file_of(r as usize);
            match (files_a.contains(&f), files_b.contains(&f)) {
                (true, true) => {
                    valid = false;
                    true
                }
                (true, false) => false,
                (false, true) => true,
                (false, false) => {
                    free_flips += 1;
                    rng.random::<bool>()
                }
            }
        };
        if to_a {
            side_a.push(r);
            files_a.push(data.file_of(r as usize));
        } else {
            side_b.push(r);
            files_b.push(data.file_of(r as usize));
        }
    }
    side_a.sort_unstable();
    side_b.sort_unstable();

    let mut proposal = Proposal {
        kind: MoveKind::Split,
        seeds: (r1, r2),
        label,
        other: None,
        y_a: data.record(r1 as usize).to_vec(),
        y_b: data.record(r2 as usize).to_vec(),
        side_a,
        side_b,
        free_flips,
        valid,
        log_target_delta: f64::NEG_INFINITY,
        log_hastings: 0.0,
    };
    if !valid {
        return proposal;
    }
    match rule {
        AcceptanceRule::Literal => {
            let p = data.num_fields();
            let y_old = state.y(label);
            let mut delta = 0.0;
            for l in 0..p {
                let ln_theta = &tables.ln_theta[l];
                delta += ln_theta[proposal.y_a[l] as usize] + ln_theta[proposal.y_b[l] as usize]
                    - ln_theta[y_old[l] as usize];
            }
            delta -= old_record_terms(state, data, tables, members);
            delta += seeded_record_terms(data, tables, &proposal.side_a, &proposal.y_a);
            delta += seeded_record_terms(data, tables, &proposal.side_b, &proposal.y_b);
            proposal.log_target_delta = delta;
        }
        AcceptanceRule::Corrected => {
            let n_max = data.num_records() as f64;
            let n = state.num_individuals() as f64;
            let mut delta = (n_max - n).ln();
            for l in 0..data.num_fields() {
                delta += side_log_marginal(state, data, &proposal.side_a, l)
                    + side_log_marginal(state, data, &proposal.side_b, l)
                    - side_log_marginal(state, data, members, l);
            }
            proposal.log_target_delta = delta;
            proposal.log_hastings = free_flips as f64 * LN_2;
        }
    }
    proposal
}

fn propose_merge(
    state: &LatentState,
    data: &RecordStore,
    tables: &LogTables,
    mode: Mode,
    rule: AcceptanceRule,
    (r1, r2): (u32, u32),
) -> Proposal {
    // the surviving label and the copied latent fields come from the
    // lower-indexed seed
    let (first, second) = if r1 < r2 { (r1, r2) } else { (r2, r1) };
    let label = state.label(first as usize);
    let other = state.label(second as usize);
    let side_a = state.cluster(label).to_vec();
    let side_b = state.cluster(other).to_vec();
    let valid = mode.allows_duplicates() || {
        let mut files: Vec<usize> = side_a
            .iter()
            .chain(&side_b)
            .map(|&r| data.file_of(r as usize))
            .collect();
        files.sort_unstable();
        files.windows(2).all(|w| w[0] != w[1])
    };
    let free_flips = side_a.len() + side_b.len() - 2;
    let mut proposal = Proposal {
        kind: MoveKind::Merge,
        seeds: (r1, r2),
        label,
        other: Some(other),
        y_a: data.record(first as usize).to_vec(),
        y_b: Vec::new(),
        side_a,
        side_b,
        free_flips,
        valid,
        log_target_delta: f64::NEG_INFINITY,
        log_hastings: 0.0,
    };
    if !valid {
        return proposal;
    }
    match rule {
        AcceptanceRule::Literal => {
            let mut delta = 0.0;
            let (ya_old, yb_old) = (state.y(label), state.y(other));
            for l in 0..data.num_fields() {
                let ln_theta = &tables.ln_theta[l];
                delta += ln_theta[proposal.y_a[l] as usize]
                    - ln_theta[ya_old[l] as usize]
                    - ln_theta[yb_old[l] as usize];
            }
            delta -= old_record_terms(state, data, tables, &proposal.side_a);
            delta -= old_record_terms(state, data, tables, &proposal.side_b);
            delta += seeded_record_terms(data, tables, &proposal.side_a, &proposal.y_a);
            delta += seeded_record_terms(data, tables, &proposal.side_b, &proposal.y_a);
            proposal.log_target_delta = delta;
        }
        AcceptanceRule::Corrected => {
            let n_max = data.num_records() as f64;
            let n = state.num_individuals() as f64;
            let mut delta = -(n_max - n + 1.0).ln();
            let merged = merged_members(&proposal.side_a, &proposal.side_b);
            for l in 0..data.num_fields() {
                delta += side_log_marginal(state, data, &merged, l)
                    - side_log_marginal(state, data, &proposal.side_a, l)
                    - side_log_marginal(state, data, &proposal.side_b, l);
            }
            proposal.log_target_delta = delta;
            proposal.log_hastings = -(free_flips as f64) * LN_2;
        }
    }
    proposal
}

fn merged_members(a: &[u32], b: &[u32]) -> Vec<u32> {
    let mut out: Vec<u32> = a.iter().chain(b).copied().collect();
    out.sort_unstable();
    out
}

fn old_record_terms(
    state: &LatentState,
    data: &RecordStore,
    tables: &LogTables,
    records: &[u32],
) -> f64 {
    let mut total = 0.0;
    for &r in records {
        for l in 0..data.num_fields() {
            total += tables.record_term(l, data.value(r as usize, l), state.z(r as usize, l));
        }
    }
    total
}

/// Record terms with the minimal distortion indicators implied by `y`.
fn seeded_record_terms(data: &RecordStore, tables: &LogTables, records: &[u32], y: &[u32]) -> f64 {
    let mut total = 0.0;
    for &r in records {
        for (l, &yl) in y.iter().enumerate() {
            let x = data.value(r as usize, l);
            total += tables.record_term(l, x, x != yl);
        }
    }
    total
}

/// Distinct values among the records' field, with multiplicities.
fn tally(data: &RecordStore, records: &[u32], field: usize) -> Vec<(u32, u32)> {
    let mut counts: Vec<(u32, u32)> = Vec::with_capacity(4);
    for &r in records {
        let x = data.value(r as usize, field);
        match counts.iter_mut().find(|(v, _)| *v == x) {
            Some((_, c)) => *c += 1,
            None => counts.push((x, 1)),
        }
    }
    counts
}

fn side_log_marginal(
    state: &LatentState,
    data: &RecordStore,
    records: &[u32],
    field: usize,
) -> f64 {
    let counts = tally(data, records, field);
    cluster_log_marginal(&counts, &state.theta()[field], state.beta()[field])
}

fn log_sum_exp(terms: &[f64]) -> f64 {
    let max = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + terms.iter().map(|t| (t - max).exp()).sum::<f64>().ln()
}

/// Log-weights of each candidate latent value of one cluster field, with the
/// distortion indicators summed out. Entry `i < counts.len()` is for value
/// `counts[i].0`; the last entry lumps every value absent from the cluster.
fn latent_value_weights(counts: &[(u32, u32)], theta: &[f64], beta: f64) -> Vec<f64> {
    let ln_beta = beta.ln();
    let distorted: Vec<f64> = counts
        .iter()
        .map(|&(v, n)| n as f64 * (ln_beta + theta[v as usize].ln()))
        .collect();
    let mut weights = Vec::with_capacity(counts.len() + 1);
    let mut rest = 1.0;
    for (i, &(v, n)) in counts.iter().enumerate() {
        let t = theta[v as usize];
        rest -= t;
        let others: f64 = distorted
            .iter()
            .enumerate()
            .filter(|&(j, _)| j != i)
            .map(|(_, d)| d)
            .sum();
        weights.push(t.ln() + n as f64 * (1.0 - beta + beta * t).ln() + others);
    }
    let all: f64 = distorted.iter().sum();
    weights.push(if rest > 0.0 {
        rest.ln() + all
    } else {
        f64::NEG_INFINITY
    });
    weights
}

/// Log marginal probability of a cluster's observed values for one field,
/// with the shared latent value and the distortion indicators summed out:
/// `log sum_m theta_m prod_r [(1 - beta) 1{x_r = m} + beta theta_{x_r}]`.
/// `counts` holds the distinct observed values and their multiplicities.
pub fn cluster_log_marginal(counts: &[(u32, u32)], theta: &[f64], beta: f64) -> f64 {
    if counts.is_empty() {
        return 0.0;
    }
    if beta <= 0.0 {
        return if counts.len() == 1 {
            theta[counts[0].0 as usize].ln()
        } else {
            f64::NEG_INFINITY
        };
    }
    log_sum_exp(&latent_value_weights(counts, theta, beta))
}

/// Log of the collapsed target: the uniform label prior's count of label
/// vectors for the current partition times every cluster's field marginals.
/// Theta and beta are held fixed.
pub fn collapsed_log_target(state: &LatentState, data: &RecordStore) -> f64 {
    let n_max = data.num_records();
    let n = state.num_individuals();
    let mut total: f64 = (0..n).map(|i| ((n_max - i) as f64).ln()).sum();
    for label in state.occupied_labels() {
        for l in 0..data.num_fields() {
            total += side_log_marginal(state, data, state.cluster(label), l);
        }
    }
    total
}

/// Draw one cluster's latent fields and distortion indicators from their
/// joint conditional given the linkage, theta and beta.
fn redraw_cluster<R: Rng + ?Sized>(
    state: &mut LatentState,
    data: &RecordStore,
    label: u32,
    rng: &mut R,
) {
    let members = state.cluster(label).to_vec();
    for l in 0..data.num_fields() {
        let beta = state.beta()[l];
        let counts = tally(data, &members, l);
        let y = if beta <= 0.0 {
            debug_assert_eq!(counts.len(), 1);
            counts[0].0
        } else {
            let theta = &state.theta()[l];
            let weights = latent_value_weights(&counts, theta, beta);
            let max = weights.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let probs: Vec<f64> = weights.iter().map(|w| (w - max).exp()).collect();
            let mut u = rng.random::<f64>() * probs.iter().sum::<f64>();
            let mut chosen = probs.len() - 1;
            for (i, &p) in probs.iter().enumerate() {
                if u < p {
                    chosen = i;
                    break;
                }
                u -= p;
            }
            if chosen < counts.len() {
                counts[chosen].0
            } else {
                draw_absent(theta, &counts, rng)
            }
        };
        state.set_y(label, l, y);
        let theta_y = state.theta()[l][y as usize];
        for &r in &members {
            let x = data.value(r as usize, l);
            let z = x != y
                || (beta > 0.0 && rng.random::<f64>() < distortion_probability(beta, theta_y));
            state.set_z(r as usize, l, z);
        }
    }
}

/// Draw from theta restricted to values not in `counts`.
fn draw_absent<R: Rng + ?Sized>(theta: &[f64], counts: &[(u32, u32)], rng: &mut R) -> u32 {
    let present = |m: usize| counts.iter().any(|&(v, _)| v as usize == m);
    let total: f64 = theta
        .iter()
        .enumerate()
        .filter(|&(m, _)| !present(m))
        .map(|(_, t)| t)
        .sum();
    let mut u = rng.random::<f64>() * total;
    let mut last = None;
    for (m, &t) in theta.iter().enumerate() {
        if present(m) {
            continue;
        }
        last = Some(m);
        if u < t {
            return m as u32;
        }
        u -= t;
    }
    last.expect("an absent value has positive weight") as u32
}

/// Commit a proposal to the state.
pub fn apply_proposal<R: Rng + ?Sized>(
    state: &mut LatentState,
    data: &RecordStore,
    proposal: Proposal,
    rule: AcceptanceRule,
    rng: &mut R,
) {
    debug_assert!(proposal.valid);
    let p = data.num_fields();
    match proposal.kind {
        MoveKind::Split => {
            let label = proposal.label;
            let fresh = state.split_cluster(label, proposal.side_a, proposal.side_b);
            match rule {
                AcceptanceRule::Literal => {
                    for l in 0..p {
                        state.set_y(label, l, proposal.y_a[l]);
                        state.set_y(fresh, l, proposal.y_b[l]);
                    }
                    set_minimal_z(state, data, label);
                    set_minimal_z(state, data, fresh);
                }
                AcceptanceRule::Corrected => {
                    redraw_cluster(state, data, label, rng);
                    redraw_cluster(state, data, fresh, rng);
                }
            }
        }
        MoveKind::Merge => {
            let label = proposal.label;
            state.merge_clusters(label, proposal.other.expect("merge has two labels"));
            match rule {
                AcceptanceRule::Literal => {
                    for l in 0..p {
                        state.set_y(label, l, proposal.y_a[l]);
                    }
                    set_minimal_z(state, data, label);
                }
                AcceptanceRule::Corrected => redraw_cluster(state, data, label, rng),
            }
        }
    }
}

fn set_minimal_z(state: &mut LatentState, data: &RecordStore, label: u32) {
    let members = state.cluster(label).to_vec();
    for l in 0..data.num_fields() {
        let y = state.y(label)[l];
        for &r in &members {
            state.set_z(r as usize, l, data.value(r as usize, l) != y);
        }
    }
}

pub(crate) fn step_with<R: Rng + ?Sized>(
    state: &mut LatentState,
    data: &RecordStore,
    tables: &LogTables,
    pairs: &PairSampler<'_>,
    rule: AcceptanceRule,
    rng: &mut R,
) -> StepOutcome {
    let seeds = match pairs.sample(rng) {
        Ok(s) => s,
        Err(_) => return StepOutcome::Exhausted,
    };
    let proposal = propose_with(state, data, tables, pairs.mode(), rule, seeds, rng);
    let kind = proposal.kind;
    if !proposal.valid {
        return StepOutcome::Invalid(kind);
    }
    let log_acc = proposal.log_acceptance();
    let accept = log_acc >= 0.0 || rng.random::<f64>().ln() < log_acc;
    if accept {
        apply_proposal(state, data, proposal, rule, rng);
        StepOutcome::Accepted(kind)
    } else {
        StepOutcome::Rejected(kind)
    }
}

/// One split-merge Metropolis-Hastings step: draw a seed pair, build the
/// proposal and accept or reject it.
pub fn split_merge_step<R: Rng + ?Sized>(
    state: &mut LatentState,
    data: &RecordStore,
    hyper: &Hyperparameters,
    pairs: &PairSampler<'_>,
    rule: AcceptanceRule,
    rng: &mut R,
) -> StepOutcome {
    let tables = LogTables::new(state, hyper);
    step_with(state, data, &tables, pairs, rule, rng)
}
