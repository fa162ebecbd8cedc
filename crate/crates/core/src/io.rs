//! Delimited-text record files and the binary sample store.

use std::collections::{BTreeSet, HashMap};
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::evaluation::GroundTruth;
use crate::model::{FieldSchema, Mode, RecordStore};
use crate::partition::Partition;
use crate::sampler::{AcceptanceRule, AcceptanceStats, ChainConfig, PosteriorSamples};

/// Options for [`load_files`].
#[derive(Debug, Clone)]
pub struct LoadOptions {
    pub delimiter: u8,
    /// Column holding true identities; excluded from the fields.
    pub truth_column: Option<String>,
}

impl Default for LoadOptions {
    fn default() -> Self {
        Self {
            delimiter: b',',
            truth_column: None,
        }
    }
}

/// Records loaded from one or more files.
#[derive(Debug, Clone)]
pub struct LoadedData {
    pub data: RecordStore,
    /// Present when a truth column was requested.
    pub truth: Option<GroundTruth>,
    pub paths: Vec<PathBuf>,
}

struct RawFile {
    rows: Vec<Vec<String>>,
    truth: Vec<String>,
}

fn input_error(path: &Path, row: usize, column: &str, message: impl Into<String>) -> Error {
    Error::Input {
        path: path.to_path_buf(),
        row,
        column: column.to_string(),
        message: message.into(),
    }
}

fn read_raw(
    path: &Path,
    options: &LoadOptions,
    fields: &mut Option<Vec<String>>,
) -> Result<RawFile> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(options.delimiter)
        .has_headers(true)
        .from_reader(file);
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| input_error(path, 1, "", e.to_string()))?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    if header.iter().all(String::is_empty) {
        return Err(input_error(path, 1, "", "missing header"));
    }
    let truth_idx = match &options.truth_column {
        Some(name) => Some(
            header
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| input_error(path, 1, name, "truth column not found"))?,
        ),
        None => None,
    };
    let own: Vec<(usize, String)> = header
        .iter()
        .enumerate()
        .filter(|&(i, _)| Some(i) != truth_idx)
        .map(|(i, h)| (i, h.clone()))
        .collect();
    let mut seen = BTreeSet::new();
    for (_, h) in &own {
        if !seen.insert(h.as_str()) {
            return Err(input_error(path, 1, h, "duplicate column"));
        }
    }
    // column order of this file mapped onto the shared field order
    let order: Vec<usize> = match fields {
        None => {
            *fields = Some(own.iter().map(|(_, h)| h.clone()).collect());
            own.iter().map(|&(i, _)| i).collect()
        }
        Some(names) => {
            let mine: BTreeSet<&str> = own.iter().map(|(_, h)| h.as_str()).collect();
            let theirs: BTreeSet<&str> = names.iter().map(String::as_str).collect();
            if mine != theirs {
                return Err(input_error(
                    path,
                    1,
                    "",
                    format!("header {:?} does not match {:?}", header, names),
                ));
            }
            names
                .iter()
                .map(|n| own.iter().find(|(_, h)| h == n).expect("same set").0)
                .collect()
        }
    };
    let names = fields.as_ref().expect("set above");

    let mut rows = Vec::new();
    let mut truth = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let row = i + 2;
        let record = record.map_err(|e| input_error(path, row, "", e.to_string()))?;
        if record.len() != header.len() {
            return Err(input_error(
                path,
                row,
                "",
                format!("{} cells, header has {}", record.len(), header.len()),
            ));
        }
        let mut values = Vec::with_capacity(order.len());
        for (f, &col) in order.iter().enumerate() {
            let cell = record[col].trim();
            if cell.is_empty() {
                return Err(input_error(path, row, &names[f], "empty cell"));
            }
            values.push(cell.to_string());
        }
        if let Some(t) = truth_idx {
            let cell = record[t].trim();
            if cell.is_empty() {
                return Err(input_error(path, row, &header[t], "empty cell"));
            }
            truth.push(cell.to_string());
        }
        rows.push(values);
    }
    if rows.is_empty() {
        return Err(input_error(path, 1, "", "no records"));
    }
    Ok(RawFile { rows, truth })
}

/// Load one file per list. Every file must have the same columns (in any
/// order); field order follows the first file. Each field's levels are the
/// sorted union of the values seen across all files.
pub fn load_files<P: AsRef<Path>>(paths: &[P], options: &LoadOptions) -> Result<LoadedData> {
    if paths.is_empty() {
        return Err(Error::Config("no input files".into()));
    }
    let mut fields = None;
    let raws: Vec<RawFile> = paths
        .iter()
        .map(|p| read_raw(p.as_ref(), options, &mut fields))
        .collect::<Result<_>>()?;
    let names = fields.expect("at least one file");
    if names.is_empty() {
        return Err(input_error(
            paths[0].as_ref(),
            1,
            "",
            "no fields besides the truth column",
        ));
    }

    let p = names.len();
    let mut levels: Vec<BTreeSet<&str>> = vec![BTreeSet::new(); p];
    for raw in &raws {
        for row in &raw.rows {
            for (l, v) in row.iter().enumerate() {
                levels[l].insert(v.as_str());
            }
        }
    }
    let labels: Vec<Vec<String>> = levels
        .iter()
        .map(|s| s.iter().map(|v| v.to_string()).collect())
        .collect();
    let codes: Vec<HashMap<&str, u32>> = labels
        .iter()
        .map(|ls| {
            ls.iter()
                .enumerate()
                .map(|(i, v)| (v.as_str(), i as u32))
                .collect()
        })
        .collect();

    let mut values = Vec::new();
    let mut sizes = Vec::with_capacity(raws.len());
    for raw in &raws {
        sizes.push(raw.rows.len());
        for row in &raw.rows {
            for (l, v) in row.iter().enumerate() {
                values.push(codes[l][v.as_str()]);
            }
        }
    }
    let truth = options.truth_column.as_ref().map(|_| {
        let ids: Vec<&str> = raws
            .iter()
            .flat_map(|r| r.truth.iter().map(String::as_str))
            .collect();
        GroundTruth::from_strings(&ids)
    });
    let schema = FieldSchema::new(names, labels)?;
    Ok(LoadedData {
        data: RecordStore::from_flat(schema, &sizes, values)?,
        truth,
        paths: paths.iter().map(|p| p.as_ref().to_path_buf()).collect(),
    })
}

/// Write each file of `data` to the matching path, with an optional truth
/// column (written first) holding the truth ids.
pub fn write_files<P: AsRef<Path>>(
    data: &RecordStore,
    truth: Option<(&str, &GroundTruth)>,
    paths: &[P],
    delimiter: u8,
) -> Result<()> {
    if paths.len() != data.num_files() {
        return Err(Error::Dimension(format!(
            "{} paths for {} files",
            paths.len(),
            data.num_files()
        )));
    }
    let schema = data.schema();
    for (f, path) in paths.iter().enumerate() {
        let path = path.as_ref();
        let mut writer = csv::WriterBuilder::new()
            .delimiter(delimiter)
            .from_path(path)
            .map_err(|e| csv_error(path, e))?;
        let mut header: Vec<&str> = Vec::new();
        if let Some((name, _)) = truth {
            header.push(name);
        }
        header.extend(schema.names().iter().map(String::as_str));
        writer
            .write_record(&header)
            .map_err(|e| csv_error(path, e))?;
        for r in data.layout().file_range(f) {
            let mut row: Vec<String> = Vec::with_capacity(header.len());
            if let Some((_, t)) = truth {
                row.push(t.ids()[r].to_string());
            }
            for (l, &v) in data.record(r).iter().enumerate() {
                row.push(schema.labels(l)[v as usize].clone());
            }
            writer.write_record(&row).map_err(|e| csv_error(path, e))?;
        }
        writer.flush().map_err(|e| Error::io(path, e))?;
    }
    Ok(())
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Input {
            path: path.to_path_buf(),
            row: 0,
            column: String::new(),
            message: format!("{other:?}"),
        },
    }
}

const MAGIC: &[u8; 8] = b"BLNKSMPL";
const VERSION: u32 = 1;

struct Writer(Vec<u8>);

impl Writer {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    fn u32(&mut self, v: u32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn f64s(&mut self, v: &[f64]) {
        self.u64(v.len() as u64);
        for x in v {
            self.0.extend_from_slice(&x.to_le_bytes());
        }
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    path: &'a Path,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.bytes.len() < n {
            return Err(store_error(self.path, "truncated"));
        }
        let (head, tail) = self.bytes.split_at(n);
        self.bytes = tail;
        Ok(head)
    }
    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(
            self.take(4)?.try_into().expect("4 bytes"),
        ))
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(
            self.take(8)?.try_into().expect("8 bytes"),
        ))
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(
            self.take(8)?.try_into().expect("8 bytes"),
        ))
    }
    /// A length prefix, checked against the bytes left.
    fn len(&mut self, item_bytes: usize) -> Result<usize> {
        let n = self.u64()? as usize;
        if n.saturating_mul(item_bytes) > self.bytes.len() {
            return Err(store_error(self.path, "truncated"));
        }
        Ok(n)
    }
    fn f64s(&mut self) -> Result<Vec<f64>> {
        let n = self.len(8)?;
        (0..n).map(|_| self.f64()).collect()
    }
}

fn store_error(path: &Path, message: impl Into<String>) -> Error {
    Error::SampleStore {
        path: path.to_path_buf(),
        message: message.into(),
    }
}

fn encode(samples: &PosteriorSamples) -> Vec<u8> {
    let mut w = Writer(Vec::new());
    let c = &samples.config;
    for v in [
        c.gibbs_sweeps,
        c.metropolis_rounds,
        c.proposals_per_round,
        c.burn_in,
        c.thin,
    ] {
        w.u64(v as u64);
    }
    w.u8(match c.mode {
        Mode::Link => 0,
        Mode::Dedup => 1,
    });
    w.u8(match c.rule {
        AcceptanceRule::Literal => 0,
        AcceptanceRule::Corrected => 1,
    });
    w.u64(c.seed);
    w.u8(c.record_theta as u8);
    w.u64(c.progress_every as u64);
    w.u64(samples.chain);

    w.u64(samples.file_sizes.len() as u64);
    for &s in &samples.file_sizes {
        w.u64(s as u64);
    }
    let s = &samples.stats;
    for v in [
        s.split_proposed,
        s.split_accepted,
        s.merge_proposed,
        s.merge_accepted,
        s.exhausted,
        s.invalid,
    ] {
        w.u64(v);
    }

    w.u64(samples.partitions.len() as u64);
    for p in &samples.partitions {
        for &l in p.labels() {
            w.u32(l);
        }
    }
    w.u64(samples.n_trace.len() as u64);
    for &n in &samples.n_trace {
        w.u32(n);
    }
    w.u64(samples.beta_trace.len() as u64);
    for b in &samples.beta_trace {
        w.f64s(b);
    }
    w.u64(samples.theta_trace.len() as u64);
    for t in &samples.theta_trace {
        w.u64(t.len() as u64);
        for field in t {
            w.f64s(field);
        }
    }
    w.0
}

fn decode(bytes: &[u8], path: &Path) -> Result<PosteriorSamples> {
    let mut r = Reader { bytes, path };
    let mut counts = [0usize; 5];
    for c in &mut counts {
        *c = r.u64()? as usize;
    }
    let mode = match r.u8()? {
        0 => Mode::Link,
        1 => Mode::Dedup,
        other => return Err(store_error(path, format!("unknown mode {other}"))),
    };
    let rule = match r.u8()? {
        0 => AcceptanceRule::Literal,
        1 => AcceptanceRule::Corrected,
        other => {
            return Err(store_error(
                path,
                format!("unknown acceptance rule {other}"),
            ))
        }
    };
    let seed = r.u64()?;
    let record_theta = r.u8()? != 0;
    let progress_every = r.u64()? as usize;
    let chain = r.u64()?;
    let config = ChainConfig {
        gibbs_sweeps: counts[0],
        metropolis_rounds: counts[1],
        proposals_per_round: counts[2],
        burn_in: counts[3],
        thin: counts[4],
        mode,
        rule,
        seed,
        record_theta,
        progress_every,
    };

    let files = r.len(8)?;
    let file_sizes: Vec<usize> = (0..files)
        .map(|_| r.u64().map(|v| v as usize))
        .collect::<Result<_>>()?;
    let n: usize = file_sizes.iter().sum();
    let mut s = [0u64; 6];
    for v in &mut s {
        *v = r.u64()?;
    }
    let stats = AcceptanceStats {
        split_proposed: s[0],
        split_accepted: s[1],
        merge_proposed: s[2],
        merge_accepted: s[3],
        exhausted: s[4],
        invalid: s[5],
    };

    let count = r.len(4 * n)?;
    let mut partitions = Vec::with_capacity(count);
    for i in 0..count {
        let raw = r.take(4 * n)?;
        let labels: Vec<u32> = raw
            .chunks_exact(4)
            .map(|c| u32::from_le_bytes(c.try_into().expect("4 bytes")))
            .collect();
        let p = Partition::try_from_canonical(labels)
            .ok_or_else(|| store_error(path, format!("partition {i} is not canonical")))?;
        partitions.push(p);
    }
    let count = r.len(4)?;
    let n_trace = (0..count).map(|_| r.u32()).collect::<Result<_>>()?;
    let count = r.len(8)?;
    let beta_trace = (0..count).map(|_| r.f64s()).collect::<Result<_>>()?;
    let count = r.len(8)?;
    let mut theta_trace = Vec::with_capacity(count);
    for _ in 0..count {
        let fields = r.len(8)?;
        theta_trace.push((0..fields).map(|_| r.f64s()).collect::<Result<Vec<_>>>()?);
    }
    if !r.bytes.is_empty() {
        return Err(store_error(path, "unexpected trailing bytes"));
    }
    Ok(PosteriorSamples {
        config,
        chain,
        file_sizes,
        partitions,
        n_trace,
        beta_trace,
        theta_trace,
        stats,
    })
}

/// Write samples as: magic, version (u32), payload length (u64), payload,
/// CRC-32 of the payload. All integers little-endian.
pub fn save_samples(samples: &PosteriorSamples, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let payload = encode(samples);
    let mut out = Vec::with_capacity(payload.len() + 24);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(payload.len() as u64).to_le_bytes());
    out.extend_from_slice(&payload);
    out.extend_from_slice(&crc32fast::hash(&payload).to_le_bytes());
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn load_samples(path: impl AsRef<Path>) -> Result<PosteriorSamples> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let mut r = Reader {
        bytes: &bytes,
        path,
    };
    if r.take(MAGIC.len())
        .map_err(|_| store_error(path, "not a sample file"))?
        != MAGIC
    {
        return Err(store_error(path, "not a sample file"));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(store_error(path, format!("unsupported version {version}")));
    }
    let len = r.u64()? as usize;
    let payload = r.take(len)?;
    let crc = r.u32()?;
    if !r.bytes.is_empty() {
        return Err(store_error(path, "unexpected trailing bytes"));
    }
    if crc32fast::hash(payload) != crc {
        return Err(store_error(path, "checksum mismatch"));
    }
    decode(payload, path)
}
