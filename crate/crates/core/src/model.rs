//! Data model and the unnormalized joint posterior.
//!
//! Records are identified by a global index `r` in `0..N_max`, laid out
//! file-major: file 0's rows first, then file 1's, and so on. Categorical
//! values are zero-based level indices.
//!
//! The generative model, per field `l`:
//!
//! ```text
//! theta_l ~ Dirichlet(mu_l)          beta_l ~ Beta(a_l, b_l)
//! y_{j,l} ~ Categorical(theta_l)     z_{r,l} ~ Bernoulli(beta_l)
//! x_{r,l} = y_{label(r),l}           if z_{r,l} = 0
//! x_{r,l} ~ Categorical(theta_l)     if z_{r,l} = 1
//! ```
//!
//! with a uniform prior over label vectors. Setting `b_l = inf` pins
//! `beta_l = 0`, which makes field `l` an exact-agreement (blocking) field.

use std::fmt;
use std::str::FromStr;

use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::partition::Partition;

pub const DEFAULT_A: f64 = 5.0;
pub const DEFAULT_B: f64 = 10.0;
pub const DEFAULT_MU: f64 = 1.0;

/// Whether a latent individual may own more than one record of the same file.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Mode {
    /// Linkage across files with no within-file duplicates (SMERE).
    Link,
    /// Linkage and de-duplication: within-file duplicates allowed (SMERED).
    Dedup,
}

impl Mode {
    pub fn allows_duplicates(self) -> bool {
        matches!(self, Mode::Dedup)
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Mode::Link => f.write_str("smere"),
            Mode::Dedup => f.write_str("smered"),
        }
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "smere" | "link" => Ok(Mode::Link),
            "smered" | "dedup" => Ok(Mode::Dedup),
            other => Err(Error::Config(format!(
                "unknown mode {other:?} (expected smere|link or smered|dedup)"
            ))),
        }
    }
}

/// Field names and the level labels of every categorical field.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FieldSchema {
    names: Vec<String>,
    labels: Vec<Vec<String>>,
}

impl FieldSchema {
    pub fn new(names: Vec<String>, labels: Vec<Vec<String>>) -> Result<Self> {
        if names.is_empty() {
            return Err(Error::Schema("at least one field is required".into()));
        }
        if names.len() != labels.len() {
            return Err(Error::Schema(format!(
                "{} field names but {} label lists",
                names.len(),
                labels.len()
            )));
        }
        let mut seen = std::collections::HashSet::new();
        for name in &names {
            if !seen.insert(name.as_str()) {
                return Err(Error::Schema(format!("duplicate field name {name:?}")));
            }
        }
        for (name, levels) in names.iter().zip(&labels) {
            if levels.is_empty() {
                return Err(Error::Schema(format!("field {name:?} has no levels")));
            }
            if levels.len() > u32::MAX as usize {
                return Err(Error::Schema(format!("field {name:?} has too many levels")));
            }
            let mut seen = std::collections::HashSet::new();
            for label in levels {
                if !seen.insert(label.as_str()) {
                    return Err(Error::Schema(format!(
                        "field {name:?} repeats level {label:?}"
                    )));
                }
            }
        }
        Ok(Self { names, labels })
    }

    /// A schema with generated names `f0, f1, ...` and labels `0, 1, ...`.
    pub fn with_levels(levels: &[usize]) -> Result<Self> {
        let names = (0..levels.len()).map(|l| format!("f{l}")).collect();
        let labels = levels
            .iter()
            .map(|&m| (0..m).map(|v| v.to_string()).collect())
            .collect();
        Self::new(names, labels)
    }

    pub fn num_fields(&self) -> usize {
        self.names.len()
    }

    pub fn levels(&self, field: usize) -> usize {
        self.labels[field].len()
    }

    pub fn name(&self, field: usize) -> &str {
        &self.names[field]
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn labels(&self, field: usize) -> &[String] {
        &self.labels[field]
    }

    pub fn field_index(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }
}

/// `(file, row)` coordinates of a record, both zero-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct RecordId {
    pub file: usize,
    pub row: usize,
}

impl fmt::Display for RecordId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.file, self.row)
    }
}

impl FromStr for RecordId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (file, row) = s
            .split_once(':')
            .ok_or_else(|| Error::Query(format!("record id {s:?} is not of the form file:row")))?;
        let parse = |v: &str| {
            v.trim()
                .parse::<usize>()
                .map_err(|_| Error::Query(format!("record id {s:?} is not of the form file:row")))
        };
        Ok(RecordId {
            file: parse(file)?,
            row: parse(row)?,
        })
    }
}

/// How the global record index space is split across files.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FileLayout {
    offsets: Vec<usize>,
}

impl FileLayout {
    pub fn new(file_sizes: &[usize]) -> Self {
        let mut offsets = Vec::with_capacity(file_sizes.len() + 1);
        offsets.push(0);
        for &n in file_sizes {
            offsets.push(offsets.last().unwrap() + n);
        }
        Self { offsets }
    }

    pub fn num_files(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn num_records(&self) -> usize {
        *self.offsets.last().unwrap()
    }

    pub fn file_size(&self, file: usize) -> usize {
        self.offsets[file + 1] - self.offsets[file]
    }

    pub fn file_sizes(&self) -> Vec<usize> {
        (0..self.num_files()).map(|i| self.file_size(i)).collect()
    }

    /// Global index range of a file's records.
    pub fn file_range(&self, file: usize) -> std::ops::Range<usize> {
        self.offsets[file]..self.offsets[file + 1]
    }

    pub fn file_of(&self, record: usize) -> usize {
        debug_assert!(record < self.num_records());
        self.offsets.partition_point(|&o| o <= record) - 1
    }

    pub fn record_id(&self, record: usize) -> RecordId {
        let file = self.file_of(record);
        RecordId {
            file,
            row: record - self.offsets[file],
        }
    }

    pub fn index_of(&self, id: RecordId) -> Option<usize> {
        if id.file < self.num_files() && id.row < self.file_size(id.file) {
            Some(self.offsets[id.file] + id.row)
        } else {
            None
        }
    }
}

/// k files of complete, integer-encoded categorical records.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RecordStore {
    schema: FieldSchema,
    layout: FileLayout,
    values: Vec<u32>,
}

impl RecordStore {
    /// Build a store from per-file lists of records.
    pub fn new(schema: FieldSchema, files: Vec<Vec<Vec<u32>>>) -> Result<Self> {
        let sizes: Vec<usize> = files.iter().map(Vec::len).collect();
        let p = schema.num_fields();
        let mut values = Vec::with_capacity(sizes.iter().sum::<usize>() * p);
        for (i, file) in files.into_iter().enumerate() {
            for (j, record) in file.into_iter().enumerate() {
                if record.len() != p {
                    return Err(Error::Dimension(format!(
                        "record {i}:{j} has {} fields, schema has {p}",
                        record.len()
                    )));
                }
                values.extend(record);
            }
        }
        Self::from_flat(schema, &sizes, values)
    }

    /// Build a store from a row-major value matrix.
    pub fn from_flat(schema: FieldSchema, file_sizes: &[usize], values: Vec<u32>) -> Result<Self> {
        if file_sizes.is_empty() {
            return Err(Error::Dimension("at least one file is required".into()));
        }
        let layout = FileLayout::new(file_sizes);
        let p = schema.num_fields();
        if layout.num_records() == 0 {
            return Err(Error::Dimension("no records".into()));
        }
        if layout.num_records() > u32::MAX as usize {
            return Err(Error::Dimension("too many records".into()));
        }
        if values.len() != layout.num_records() * p {
            return Err(Error::Dimension(format!(
                "{} values for {} records of {p} fields",
                values.len(),
                layout.num_records()
            )));
        }
        for (idx, &v) in values.iter().enumerate() {
            let field = idx % p;
            if v as usize >= schema.levels(field) {
                let id = layout.record_id(idx / p);
                return Err(Error::Dimension(format!(
                    "record {id} field {:?}: level {v} out of range (M = {})",
                    schema.name(field),
                    schema.levels(field)
                )));
            }
        }
        Ok(Self {
            schema,
            layout,
            values,
        })
    }

    pub fn schema(&self) -> &FieldSchema {
        &self.schema
    }

    pub fn layout(&self) -> &FileLayout {
        &self.layout
    }

    pub fn num_records(&self) -> usize {
        self.layout.num_records()
    }

    pub fn num_files(&self) -> usize {
        self.layout.num_files()
    }

    pub fn num_fields(&self) -> usize {
        self.schema.num_fields()
    }

    pub fn file_of(&self, record: usize) -> usize {
        self.layout.file_of(record)
    }

    #[inline]
    pub fn record(&self, record: usize) -> &[u32] {
        let p = self.num_fields();
        &self.values[record * p..(record + 1) * p]
    }

    #[inline]
    pub fn value(&self, record: usize, field: usize) -> u32 {
        self.values[record * self.num_fields() + field]
    }

    pub fn values(&self) -> &[u32] {
        &self.values
    }
}

/// Known prior parameters. `b[l] == f64::INFINITY` marks a blocked field.
#[derive(Debug, Clone, PartialEq)]
pub struct Hyperparameters {
    a: Vec<f64>,
    b: Vec<f64>,
    mu: Vec<Vec<f64>>,
}

impl Hyperparameters {
    pub fn new(a: Vec<f64>, b: Vec<f64>, mu: Vec<Vec<f64>>) -> Result<Self> {
        if a.len() != b.len() || a.len() != mu.len() {
            return Err(Error::Hyperparameters(format!(
                "a, b, mu lengths differ ({}, {}, {})",
                a.len(),
                b.len(),
                mu.len()
            )));
        }
        for (l, (&al, &bl)) in a.iter().zip(&b).enumerate() {
            if !(al > 0.0 && al.is_finite()) {
                return Err(Error::Hyperparameters(format!(
                    "a[{l}] = {al} must be positive"
                )));
            }
            if !(bl > 0.0) || bl.is_nan() {
                return Err(Error::Hyperparameters(format!(
                    "b[{l}] = {bl} must be positive or infinite"
                )));
            }
            if mu[l].iter().any(|&m| !(m > 0.0 && m.is_finite())) {
                return Err(Error::Hyperparameters(format!(
                    "mu[{l}] entries must be positive"
                )));
            }
        }
        Ok(Self { a, b, mu })
    }

    /// The same `a`, `b` and symmetric `mu` for every field of `schema`.
    pub fn uniform(schema: &FieldSchema, a: f64, b: f64, mu: f64) -> Result<Self> {
        let p = schema.num_fields();
        Self::new(
            vec![a; p],
            vec![b; p],
            (0..p).map(|l| vec![mu; schema.levels(l)]).collect(),
        )
    }

    /// `a = 5`, `b = 10`, `mu = 1` on every field.
    pub fn defaults(schema: &FieldSchema) -> Self {
        Self::uniform(schema, DEFAULT_A, DEFAULT_B, DEFAULT_MU)
            .expect("default hyperparameters are valid")
    }

    /// Mark fields as blocked (`b = inf`).
    pub fn with_blocked(mut self, fields: &[usize]) -> Result<Self> {
        for &l in fields {
            if l >= self.b.len() {
                return Err(Error::Hyperparameters(format!("no field {l} to block")));
            }
            self.b[l] = f64::INFINITY;
        }
        Ok(self)
    }

    pub fn num_fields(&self) -> usize {
        self.a.len()
    }

    pub fn a(&self, field: usize) -> f64 {
        self.a[field]
    }

    pub fn b(&self, field: usize) -> f64 {
        self.b[field]
    }

    pub fn mu(&self, field: usize) -> &[f64] {
        &self.mu[field]
    }

    #[inline]
    pub fn is_blocked(&self, field: usize) -> bool {
        self.b[field].is_infinite()
    }

    pub fn blocked_fields(&self) -> Vec<usize> {
        (0..self.num_fields())
            .filter(|&l| self.is_blocked(l))
            .collect()
    }

    pub fn check_schema(&self, schema: &FieldSchema) -> Result<()> {
        if self.num_fields() != schema.num_fields() {
            return Err(Error::Dimension(format!(
                "hyperparameters cover {} fields, schema has {}",
                self.num_fields(),
                schema.num_fields()
            )));
        }
        for l in 0..schema.num_fields() {
            if self.mu[l].len() != schema.levels(l) {
                return Err(Error::Dimension(format!(
                    "mu[{l}] has {} entries, field {:?} has {} levels",
                    self.mu[l].len(),
                    schema.name(l),
                    schema.levels(l)
                )));
            }
        }
        Ok(())
    }
}

/// One MCMC state: linkage labels, latent individuals, distortion flags and
/// the multinomial and distortion probabilities.
///
/// Labels live in `0..N_max`. Only occupied labels carry meaningful latent
/// field values; rows of `y` belonging to unoccupied labels are ignored.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentState {
    num_fields: usize,
    labels: Vec<u32>,
    members: Vec<Vec<u32>>,
    free: Vec<u32>,
    occupied: usize,
    y: Vec<u32>,
    z: Vec<bool>,
    theta: Vec<Vec<f64>>,
    beta: Vec<f64>,
}

impl LatentState {
    /// Assemble a state. `y` is row-major with one row per label in
    /// `0..labels.len()`, `z` row-major with one row per record.
    pub fn from_parts(
        labels: Vec<u32>,
        y: Vec<u32>,
        z: Vec<bool>,
        theta: Vec<Vec<f64>>,
        beta: Vec<f64>,
    ) -> Result<Self> {
        let n = labels.len();
        let p = beta.len();
        if n == 0 || p == 0 {
            return Err(Error::Dimension("state needs records and fields".into()));
        }
        if theta.len() != p {
            return Err(Error::Dimension(format!(
                "{} theta vectors for {p} fields",
                theta.len()
            )));
        }
        if y.len() != n * p || z.len() != n * p {
            return Err(Error::Dimension(format!(
                "y has {} and z has {} entries, expected {}",
                y.len(),
                z.len(),
                n * p
            )));
        }
        let mut members = vec![Vec::new(); n];
        for (r, &label) in labels.iter().enumerate() {
            if label as usize >= n {
                return Err(Error::Dimension(format!(
                    "label {label} of record {r} outside 0..{n}"
                )));
            }
            members[label as usize].push(r as u32);
        }
        let free: Vec<u32> = (0..n as u32)
            .rev()
            .filter(|&j| members[j as usize].is_empty())
            .collect();
        let occupied = n - free.len();
        Ok(Self {
            num_fields: p,
            labels,
            members,
            free,
            occupied,
            y,
            z,
            theta,
            beta,
        })
    }

    pub fn num_records(&self) -> usize {
        self.labels.len()
    }

    pub fn num_fields(&self) -> usize {
        self.num_fields
    }

    /// Number of occupied labels, `N`.
    pub fn num_individuals(&self) -> usize {
        self.occupied
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    #[inline]
    pub fn label(&self, record: usize) -> u32 {
        self.labels[record]
    }

    /// Records linked to `label`, ascending.
    #[inline]
    pub fn cluster(&self, label: u32) -> &[u32] {
        &self.members[label as usize]
    }

    pub fn occupied_labels(&self) -> impl Iterator<Item = u32> + '_ {
        self.members
            .iter()
            .enumerate()
            .filter(|(_, m)| !m.is_empty())
            .map(|(j, _)| j as u32)
    }

    #[inline]
    pub fn y(&self, label: u32) -> &[u32] {
        let p = self.num_fields;
        &self.y[label as usize * p..(label as usize + 1) * p]
    }

    #[inline]
    pub fn z(&self, record: usize, field: usize) -> bool {
        self.z[record * self.num_fields + field]
    }

    pub fn theta(&self) -> &[Vec<f64>] {
        &self.theta
    }

    pub fn beta(&self) -> &[f64] {
        &self.beta
    }

    pub fn partition(&self) -> Partition {
        Partition::from_labels(&self.labels)
    }

    #[inline]
    pub(crate) fn set_y(&mut self, label: u32, field: usize, value: u32) {
        self.y[label as usize * self.num_fields + field] = value;
    }

    #[inline]
    pub(crate) fn set_z(&mut self, record: usize, field: usize, value: bool) {
        self.z[record * self.num_fields + field] = value;
    }

    pub(crate) fn theta_mut(&mut self) -> &mut [Vec<f64>] {
        &mut self.theta
    }

    pub(crate) fn beta_mut(&mut self) -> &mut [f64] {
        &mut self.beta
    }

    /// Move every record of `from` into `into`; `from` becomes free.
    pub(crate) fn merge_clusters(&mut self, into: u32, from: u32) {
        debug_assert_ne!(into, from);
        let moved = std::mem::take(&mut self.members[from as usize]);
        for &r in &moved {
            self.labels[r as usize] = into;
        }
        let kept = std::mem::take(&mut self.members[into as usize]);
        self.members[into as usize] = merge_sorted(&kept, &moved);
        self.free.push(from);
        self.occupied -= 1;
    }

    /// Replace cluster `label` by `keep` (still under `label`) and `moved`
    /// (under a fresh label, which is returned). Both sides must be sorted.
    pub(crate) fn split_cluster(&mut self, label: u32, keep: Vec<u32>, moved: Vec<u32>) -> u32 {
        debug_assert!(!keep.is_empty() && !moved.is_empty());
        let fresh = self.free.pop().expect("a split always has a free label");
        for &r in &moved {
            self.labels[r as usize] = fresh;
        }
        self.members[label as usize] = keep;
        self.members[fresh as usize] = moved;
        self.occupied += 1;
        fresh
    }
}

fn merge_sorted(a: &[u32], b: &[u32]) -> Vec<u32> {
    let mut out = Vec::with_capacity(a.len() + b.len());
    let (mut i, mut j) = (0, 0);
    while i < a.len() && j < b.len() {
        if a[i] < b[j] {
            out.push(a[i]);
            i += 1;
        } else {
            out.push(b[j]);
            j += 1;
        }
    }
    out.extend_from_slice(&a[i..]);
    out.extend_from_slice(&b[j..]);
    out
}

/// Number of distinct labels.
pub fn count_individuals(labels: &[u32]) -> usize {
    let mut labels = labels.to_vec();
    labels.sort_unstable();
    labels.dedup();
    labels.len()
}

/// `x * ln(y)` with the convention `0 * ln(0) = 0`.
#[inline]
pub(crate) fn xlogy(x: f64, y: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        x * y.ln()
    }
}

pub(crate) fn ln_beta_fn(params: &[f64]) -> f64 {
    params.iter().map(|&v| ln_gamma(v)).sum::<f64>() - ln_gamma(params.iter().sum())
}

fn check_dimensions(
    state: &LatentState,
    data: &RecordStore,
    hyper: &Hyperparameters,
) -> Result<()> {
    hyper.check_schema(data.schema())?;
    if state.num_records() != data.num_records() || state.num_fields() != data.num_fields() {
        return Err(Error::Dimension(format!(
            "state is {}x{}, data is {}x{}",
            state.num_records(),
            state.num_fields(),
            data.num_records(),
            data.num_fields()
        )));
    }
    for l in 0..data.num_fields() {
        if state.theta[l].len() != data.schema().levels(l) {
            return Err(Error::Dimension(format!(
                "theta[{l}] has {} entries, field has {} levels",
                state.theta[l].len(),
                data.schema().levels(l)
            )));
        }
    }
    Ok(())
}

/// Log of the joint posterior density of `(labels, y, z, theta, beta)`
/// given the data, including the Dirichlet and Beta normalizing constants.
///
/// Returns `-inf` when a record has `z = 0` but disagrees with its
/// individual, or a blocked field carries distortion.
pub fn log_joint_posterior(
    state: &LatentState,
    data: &RecordStore,
    hyper: &Hyperparameters,
) -> Result<f64> {
    check_dimensions(state, data, hyper)?;
    let n = data.num_records();
    let mut total = 0.0;
    for l in 0..data.num_fields() {
        let theta = &state.theta[l];
        let blocked = hyper.is_blocked(l);
        if blocked && state.beta[l] != 0.0 {
            return Ok(f64::NEG_INFINITY);
        }

        let mut exponent: Vec<f64> = hyper.mu(l).iter().map(|m| m - 1.0).collect();
        for label in state.occupied_labels() {
            exponent[state.y(label)[l] as usize] += 1.0;
        }
        let mut distorted = 0usize;
        for r in 0..n {
            let x = data.value(r, l);
            if state.z(r, l) {
                if blocked {
                    return Ok(f64::NEG_INFINITY);
                }
                distorted += 1;
                exponent[x as usize] += 1.0;
            } else if state.y(state.label(r))[l] != x {
                return Ok(f64::NEG_INFINITY);
            }
        }
        total -= ln_beta_fn(hyper.mu(l));
        for (m, &e) in exponent.iter().enumerate() {
            total += xlogy(e, theta[m]);
        }

        if !blocked {
            let beta = state.beta[l];
            let (a, b) = (hyper.a(l), hyper.b(l));
            total += xlogy(a - 1.0 + distorted as f64, beta)
                + xlogy(b - 1.0 + (n - distorted) as f64, 1.0 - beta)
                - ln_beta_fn(&[a, b]);
        }
    }
    Ok(total)
}

/// Whether every state invariant holds: label bookkeeping, the `z = 0`
/// agreement rule, simplex and range constraints, zero distortion on
/// blocked fields, and (in [`Mode::Link`]) at most one record per file and
/// individual.
pub fn state_consistent(
    state: &LatentState,
    data: &RecordStore,
    hyper: &Hyperparameters,
    mode: Mode,
) -> bool {
    if check_dimensions(state, data, hyper).is_err() {
        return false;
    }
    let n = data.num_records();
    let p = data.num_fields();

    let mut occupied = 0;
    for (j, members) in state.members.iter().enumerate() {
        if members.is_empty() {
            continue;
        }
        occupied += 1;
        if members.windows(2).any(|w| w[0] >= w[1]) {
            return false;
        }
        if members
            .iter()
            .any(|&r| state.labels[r as usize] as usize != j)
        {
            return false;
        }
        if !mode.allows_duplicates() {
            let mut files: Vec<usize> = members.iter().map(|&r| data.file_of(r as usize)).collect();
            files.dedup();
            if files.len() != members.len() {
                return false;
            }
        }
    }
    if occupied != state.occupied || occupied == 0 || occupied > n {
        return false;
    }
    if state.members.iter().map(Vec::len).sum::<usize>() != n {
        return false;
    }

    for l in 0..p {
        let theta = &state.theta[l];
        if theta.iter().any(|&t| !(0.0..=1.0).contains(&t)) {
            return false;
        }
        if (theta.iter().sum::<f64>() - 1.0).abs() > 1e-12 {
            return false;
        }
        let beta = state.beta[l];
        if !(0.0..=1.0).contains(&beta) {
            return false;
        }
        if hyper.is_blocked(l) && beta != 0.0 {
            return false;
        }
    }
    for r in 0..n {
        let y = state.y(state.label(r));
        for l in 0..p {
            let z = state.z(r, l);
            if z && hyper.is_blocked(l) {
                return false;
            }
            if !z && y[l] != data.value(r, l) {
                return false;
            }
        }
    }
    true
}
