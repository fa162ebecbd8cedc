//! The split-merge MCMC sampler.
//!
//! Each Gibbs sweep runs `metropolis_rounds` rounds of
//! `proposals_per_round` split-merge proposals, resampling the latent fields
//! and distortion indicators after every round, and finishes by resampling
//! theta and beta. Every chain draws from `ChaCha8Rng` seeded with the
//! configured seed; chain `i` uses stream `i`.

mod conditionals;
mod split_merge;

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::blocking::{BlockIndex, PairSampler};
use crate::error::{Error, Result};
use crate::model::{state_consistent, Hyperparameters, LatentState, Mode, RecordStore};
use crate::partition::Partition;

pub use conditionals::{
    beta_parameters, distortion_probability, draw_dirichlet, resample_beta, resample_theta,
    resample_y, resample_z, theta_parameters,
};
pub use split_merge::{
    apply_proposal, cluster_log_marginal, collapsed_log_target, propose, split_merge_step,
    AcceptanceRule, MoveKind, Proposal, StepOutcome,
};

use conditionals::{draw_beta, resample_y_with, resample_z_with, ConditionalTables};
use split_merge::{step_with, LogTables};

/// Loop bounds and bookkeeping for one chain.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainConfig {
    /// Outer Gibbs sweeps.
    pub gibbs_sweeps: usize,
    /// Rounds per sweep; each ends with a y and z refresh.
    pub metropolis_rounds: usize,
    /// Split-merge proposals per round.
    pub proposals_per_round: usize,
    /// Sweeps discarded before storing.
    pub burn_in: usize,
    /// Store every `thin`-th sweep after burn-in.
    pub thin: usize,
    pub mode: Mode,
    pub rule: AcceptanceRule,
    pub seed: u64,
    /// Also store theta after every kept sweep.
    pub record_theta: bool,
    /// Log a progress line every this many sweeps; 0 disables.
    pub progress_every: usize,
}

impl ChainConfig {
    /// Long-run defaults: 10^5 sweeps, 10^5 rounds per sweep for
    /// [`Mode::Link`] and 10^4 for [`Mode::Dedup`], burn-in 1000, thinning 100.
    pub fn defaults(mode: Mode) -> Self {
        Self {
            gibbs_sweeps: 100_000,
            metropolis_rounds: match mode {
                Mode::Link => 100_000,
                Mode::Dedup => 10_000,
            },
            proposals_per_round: 1,
            burn_in: 1_000,
            thin: 100,
            mode,
            rule: AcceptanceRule::Literal,
            seed: 0,
            record_theta: false,
            progress_every: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.gibbs_sweeps == 0 || self.metropolis_rounds == 0 || self.proposals_per_round == 0 {
            return Err(Error::Config(
                "sweep, round and proposal counts must be at least 1".into(),
            ));
        }
        if self.thin == 0 {
            return Err(Error::Config("thin must be at least 1".into()));
        }
        if self.burn_in >= self.gibbs_sweeps {
            return Err(Error::Config(format!(
                "burn-in {} must be below the sweep count {}",
                self.burn_in, self.gibbs_sweeps
            )));
        }
        Ok(())
    }

    /// Number of partitions a chain stores.
    pub fn expected_samples(&self) -> usize {
        (self.gibbs_sweeps - self.burn_in) / self.thin
    }

    fn keeps(&self, sweep: usize) -> bool {
        sweep > self.burn_in && (sweep - self.burn_in) % self.thin == 0
    }
}

/// Split-merge move counters.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct AcceptanceStats {
    pub split_proposed: u64,
    pub split_accepted: u64,
    pub merge_proposed: u64,
    pub merge_accepted: u64,
    /// Steps with no eligible pair.
    pub exhausted: u64,
    /// Proposals rejected for breaking the no-duplicate constraint.
    pub invalid: u64,
}

impl AcceptanceStats {
    pub fn record(&mut self, outcome: StepOutcome) {
        let (kind, accepted) = match outcome {
            StepOutcome::Exhausted => {
                self.exhausted += 1;
                return;
            }
            StepOutcome::Invalid(kind) => {
                self.invalid += 1;
                (kind, false)
            }
            StepOutcome::Rejected(kind) => (kind, false),
            StepOutcome::Accepted(kind) => (kind, true),
        };
        match kind {
            MoveKind::Split => {
                self.split_proposed += 1;
                self.split_accepted += accepted as u64;
            }
            MoveKind::Merge => {
                self.merge_proposed += 1;
                self.merge_accepted += accepted as u64;
            }
        }
    }

    pub fn proposed(&self) -> u64 {
        self.split_proposed + self.merge_proposed
    }

    pub fn accepted(&self) -> u64 {
        self.split_accepted + self.merge_accepted
    }

    pub fn acceptance_rate(&self) -> f64 {
        ratio(self.accepted(), self.proposed())
    }

    pub fn split_rate(&self) -> f64 {
        ratio(self.split_accepted, self.split_proposed)
    }

    pub fn merge_rate(&self) -> f64 {
        ratio(self.merge_accepted, self.merge_proposed)
    }

    pub fn merge(&mut self, other: &AcceptanceStats) {
        self.split_proposed += other.split_proposed;
        self.split_accepted += other.split_accepted;
        self.merge_proposed += other.merge_proposed;
        self.merge_accepted += other.merge_accepted;
        self.exhausted += other.exhausted;
        self.invalid += other.invalid;
    }
}

fn ratio(a: u64, b: u64) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

/// Stored output of one chain.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorSamples {
    pub config: ChainConfig,
    /// RNG stream of the chain.
    pub chain: u64,
    pub file_sizes: Vec<usize>,
    pub partitions: Vec<Partition>,
    /// Number of individuals at each kept sweep.
    pub n_trace: Vec<u32>,
    /// Beta at each kept sweep.
    pub beta_trace: Vec<Vec<f64>>,
    /// Theta at each kept sweep, when requested.
    pub theta_trace: Vec<Vec<Vec<f64>>>,
    pub stats: AcceptanceStats,
}

impl PosteriorSamples {
    pub fn len(&self) -> usize {
        self.partitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.partitions.is_empty()
    }

    pub fn num_records(&self) -> usize {
        self.file_sizes.iter().sum()
    }
}

/// Concatenate the stored partitions of several chains.
pub fn pooled_partitions(chains: &[PosteriorSamples]) -> Vec<Partition> {
    chains
        .iter()
        .flat_map(|c| c.partitions.iter().cloned())
        .collect()
}

/// The starting state: one individual per record, latent fields copied
/// from the records, no distortion, theta and beta drawn from their priors
/// (beta is 0 on blocked fields).
pub fn init_state<R: Rng + ?Sized>(
    data: &RecordStore,
    hyper: &Hyperparameters,
    rng: &mut R,
) -> LatentState {
    let n = data.num_records();
    let p = data.num_fields();
    let theta = (0..p).map(|l| draw_dirichlet(hyper.mu(l), rng)).collect();
    let beta = (0..p)
        .map(|l| {
            if hyper.is_blocked(l) {
                0.0
            } else {
                draw_beta(hyper.a(l), hyper.b(l), rng)
            }
        })
        .collect();
    LatentState::from_parts(
        (0..n as u32).collect(),
        data.values().to_vec(),
        vec![false; n * p],
        theta,
        beta,
    )
    .expect("dimensions follow the data")
}

/// Seeded generator for chain stream `chain`.
pub fn chain_rng(seed: u64, chain: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(chain);
    rng
}

/// Step-level driver holding a state, its RNG and cached lookup tables.
pub struct Sampler<'a> {
    data: &'a RecordStore,
    hyper: &'a Hyperparameters,
    pairs: PairSampler<'a>,
    rule: AcceptanceRule,
    state: LatentState,
    rng: ChaCha8Rng,
    log_tables: LogTables,
    cond_tables: ConditionalTables,
    stats: AcceptanceStats,
}

impl<'a> Sampler<'a> {
    /// Start from [`init_state`] on chain stream `chain`.
    pub fn new(
        data: &'a RecordStore,
        hyper: &'a Hyperparameters,
        blocks: &'a BlockIndex,
        mode: Mode,
        rule: AcceptanceRule,
        seed: u64,
        chain: u64,
    ) -> Result<Self> {
        let mut rng = chain_rng(seed, chain);
        check_inputs(data, hyper, blocks)?;
        let state = init_state(data, hyper, &mut rng);
        Self::with_state(data, hyper, blocks, mode, rule, state, rng)
    }

    /// Start from an explicit state.
    pub fn with_state(
        data: &'a RecordStore,
        hyper: &'a Hyperparameters,
        blocks: &'a BlockIndex,
        mode: Mode,
        rule: AcceptanceRule,
        state: LatentState,
        rng: ChaCha8Rng,
    ) -> Result<Self> {
        check_inputs(data, hyper, blocks)?;
        if !state_consistent(&state, data, hyper, mode) {
            return Err(Error::Inconsistent(
                "initial state violates the model constraints".into(),
            ));
        }
        Ok(Self {
            data,
            hyper,
            pairs: PairSampler::new(blocks, mode),
            rule,
            log_tables: LogTables::new(&state, hyper),
            cond_tables: ConditionalTables::new(&state, hyper),
            state,
            rng,
            stats: AcceptanceStats::default(),
        })
    }

    pub fn state(&self) -> &LatentState {
        &self.state
    }

    pub fn into_state(self) -> LatentState {
        self.state
    }

    pub fn stats(&self) -> &AcceptanceStats {
        &self.stats
    }

    pub fn mode(&self) -> Mode {
        self.pairs.mode()
    }

    pub fn split_merge_step(&mut self) -> StepOutcome {
        let outcome = step_with(
            &mut self.state,
            self.data,
            &self.log_tables,
            &self.pairs,
            self.rule,
            &mut self.rng,
        );
        self.stats.record(outcome);
        outcome
    }

    pub fn resample_y(&mut self) -> Result<()> {
        resample_y_with(&mut self.state, self.data, &self.cond_tables, &mut self.rng)
    }

    pub fn resample_z(&mut self) {
        resample_z_with(
            &mut self.state,
            self.data,
            self.hyper,
            &self.cond_tables,
            &mut self.rng,
        );
    }

    /// Resample theta then beta and refresh the cached tables.
    pub fn resample_parameters(&mut self) {
        resample_theta(&mut self.state, self.data, self.hyper, &mut self.rng);
        resample_beta(&mut self.state, self.data, self.hyper, &mut self.rng);
        self.log_tables = LogTables::new(&self.state, self.hyper);
        self.cond_tables = ConditionalTables::new(&self.state, self.hyper);
    }

    /// One full Gibbs sweep.
    pub fn sweep(&mut self, rounds: usize, proposals: usize) -> Result<()> {
        for _ in 0..rounds {
            for _ in 0..proposals {
                self.split_merge_step();
            }
            self.resample_y()?;
            self.resample_z();
        }
        self.resample_parameters();
        debug_assert!(state_consistent(
            &self.state,
            self.data,
            self.hyper,
            self.mode()
        ));
        Ok(())
    }
}

fn check_inputs(data: &RecordStore, hyper: &Hyperparameters, blocks: &BlockIndex) -> Result<()> {
    hyper.check_schema(data.schema())?;
    if blocks.num_records() != data.num_records() {
        return Err(Error::Dimension(format!(
            "block index covers {} records, data has {}",
            blocks.num_records(),
            data.num_records()
        )));
    }
    blocks.check_hyperparameters(hyper)
}

/// Run one chain on stream 0.
pub fn run_chain(
    data: &RecordStore,
    hyper: &Hyperparameters,
    blocks: &BlockIndex,
    config: &ChainConfig,
) -> Result<PosteriorSamples> {
    run_chain_stream(data, hyper, blocks, config, 0)
}

/// Run one chain on RNG stream `chain`.
pub fn run_chain_stream(
    data: &RecordStore,
    hyper: &Hyperparameters,
    blocks: &BlockIndex,
    config: &ChainConfig,
    chain: u64,
) -> Result<PosteriorSamples> {
    config.validate()?;
    let mut sampler = Sampler::new(
        data,
        hyper,
        blocks,
        config.mode,
        config.rule,
        config.seed,
        chain,
    )?;
    let kept = config.expected_samples();
    let mut out = PosteriorSamples {
        config: config.clone(),
        chain,
        file_sizes: data.layout().file_sizes(),
        partitions: Vec::with_capacity(kept),
        n_trace: Vec::with_capacity(kept),
        beta_trace: Vec::with_capacity(kept),
        theta_trace: Vec::new(),
        stats: AcceptanceStats::default(),
    };
    let start = Instant::now();
    for sweep in 1..=config.gibbs_sweeps {
        sampler.sweep(config.metropolis_rounds, config.proposals_per_round)?;
        if config.keeps(sweep) {
            let state = sampler.state();
            out.partitions.push(state.partition());
            out.n_trace.push(state.num_individuals() as u32);
            out.beta_trace.push(state.beta().to_vec());
            if config.record_theta {
                out.theta_trace.push(state.theta().to_vec());
            }
        }
        if config.progress_every > 0 && sweep % config.progress_every == 0 {
            log::info!(
                "chain {chain} sweep {sweep}/{}: N = {}, acceptance {:.4}, {:.1}s",
                config.gibbs_sweeps,
                sampler.state().num_individuals(),
                sampler.stats().acceptance_rate(),
                start.elapsed().as_secs_f64()
            );
        }
    }
    out.stats = *sampler.stats();
    Ok(out)
}

/// Run `chains` independent chains concurrently on streams `0..chains`.
pub fn run_chains(
    data: &RecordStore,
    hyper: &Hyperparameters,
    blocks: &BlockIndex,
    config: &ChainConfig,
    chains: usize,
) -> Result<Vec<PosteriorSamples>> {
    if chains == 0 {
        return Err(Error::Config("at least one chain is required".into()));
    }
    if chains == 1 {
        return Ok(vec![run_chain(data, hyper, blocks, config)?]);
    }
    std::thread::scope(|scope| {
        let handles: Vec<_> = (0..chains as u64)
            .map(|c| scope.spawn(move || run_chain_stream(data, hyper, blocks, config, c)))
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("chain thread panicked"))
            .collect()
    })
}
