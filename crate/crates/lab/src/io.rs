//! File formats: trace and result CSVs, binary checkpoints with JSON
//! sidecars, and dataset CSVs with JSON sidecars.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use mfl_core::activation::SphereActivation;
use mfl_core::linalg::Mat;
use mfl_core::loss::Loss;
use mfl_core::net::{ParticleEnsemble, Space};
use mfl_core::tasks::{Dataset, NoiseLaw};
use mfl_core::trace::{Control, Observer, TraceRecord};
use serde::{Deserialize, Serialize};

use crate::{io_err, LabError, Result};

/// Bumped on any change to a CSV column set.
pub const SCHEMA_VERSION: u32 = 1;

pub const TRACE_COLUMNS: [&str; 8] = ["step", "train_risk", "reg", "total", "test_risk", "test01", "alignment", "seconds"];

const MAGIC: &[u8; 4] = b"MFLB";
const CHECKPOINT_VERSION: u32 = 1;

pub fn fmt_f64(v: f64) -> String {
    format!("{v}")
}

pub fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

/// CSV writer with LF line endings.
pub fn csv_writer<W: Write>(w: W) -> csv::Writer<W> {
    csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(w)
}

pub fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir).map_err(io_err(dir))?;
        }
    }
    Ok(BufWriter::new(File::create(path).map_err(io_err(path))?))
}

fn trace_row(r: &TraceRecord) -> [String; 8] {
    [
        r.step.to_string(),
        fmt_f64(r.train_risk),
        fmt_f64(r.reg),
        fmt_f64(r.total),
        fmt_opt(r.test_risk),
        fmt_opt(r.test01),
        fmt_opt(r.alignment),
        fmt_f64(r.seconds),
    ]
}

/// Streams trace records to CSV as they arrive, passing stop requests on
/// from an inner observer.
pub struct TraceWriter<'a, W: Write> {
    out: csv::Writer<W>,
    inner: Option<&'a mut dyn Observer>,
    pub records: Vec<TraceRecord>,
    pub error: Option<csv::Error>,
}

impl<'a, W: Write> TraceWriter<'a, W> {
    pub fn new(w: W, inner: Option<&'a mut dyn Observer>) -> Result<Self> {
        let mut out = csv_writer(w);
        out.write_record(TRACE_COLUMNS)?;
        Ok(Self { out, inner, records: Vec::new(), error: None })
    }

    pub fn finish(mut self) -> Result<Vec<TraceRecord>> {
        if let Some(e) = self.error.take() {
            return Err(e.into());
        }
        self.out.flush().map_err(|e| LabError::Format(e.to_string()))?;
        Ok(self.records)
    }
}

impl<W: Write> Observer for TraceWriter<'_, W> {
    fn record(&mut self, rec: &TraceRecord) -> Control {
        self.records.push(*rec);
        if self.error.is_none() {
            if let Err(e) = self.out.write_record(trace_row(rec)) {
                self.error = Some(e);
            }
        }
        match self.inner.as_mut() {
            Some(o) => o.record(rec),
            None => Control::Continue,
        }
    }
}

pub fn write_trace(path: &Path, trace: &[TraceRecord]) -> Result<()> {
    let mut w = TraceWriter::new(create(path)?, None)?;
    for r in trace {
        w.record(r);
    }
    w.finish().map(|_| ())
}

fn parse_opt(s: &str) -> Result<Option<f64>> {
    if s.is_empty() {
        Ok(None)
    } else {
        s.parse().map(Some).map_err(|_| LabError::Format(format!("bad number `{s}`")))
    }
}

fn parse_num<T: std::str::FromStr>(s: &str) -> Result<T> {
    s.parse().map_err(|_| LabError::Format(format!("bad number `{s}`")))
}

pub fn read_trace(path: &Path) -> Result<Vec<TraceRecord>> {
    let mut rd = csv::Reader::from_path(path)?;
    let header: Vec<String> = rd.headers()?.iter().map(str::to_string).collect();
    if header != TRACE_COLUMNS {
        return Err(LabError::Format(format!("{}: unexpected trace header {header:?}", path.display())));
    }
    let mut out = Vec::new();
    for row in rd.records() {
        let row = row?;
        out.push(TraceRecord {
            step: parse_num(&row[0])?,
            train_risk: parse_num(&row[1])?,
            reg: parse_num(&row[2])?,
            total: parse_num(&row[3])?,
            test_risk: parse_opt(&row[4])?,
            test01: parse_opt(&row[5])?,
            alignment: parse_opt(&row[6])?,
            seconds: parse_num(&row[7])?,
            noise_stream: parse_num(&row[0])?,
        });
    }
    Ok(out)
}

/// Activation recorded with a checkpoint.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ActivationMeta {
    SmoothRelu { kappa: f64, iota: f64 },
    Sphere { phi: SphereActivation },
}

/// JSON sidecar of a checkpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub space: Space,
    pub m: usize,
    pub d: usize,
    /// Steps taken; a resumed run continues the noise streams from here.
    pub step: u64,
    pub seed: u64,
    pub activation: ActivationMeta,
    pub eta: f64,
    pub beta: f64,
    pub lambda: f64,
    pub loss: Loss,
}

pub fn sidecar(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n").map_err(io_err(path))?;
    w.flush().map_err(io_err(path))
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let f = File::open(path).map_err(io_err(path))?;
    Ok(serde_json::from_reader(BufReader::new(f))?)
}

pub fn encode_checkpoint(ens: &ParticleEnsemble) -> Vec<u8> {
    let mut buf = Vec::with_capacity(28 + 8 * ens.weights().len());
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    buf.extend_from_slice(&ens.space().tag().to_le_bytes());
    buf.extend_from_slice(&(ens.len() as u64).to_le_bytes());
    buf.extend_from_slice(&(ens.dim() as u64).to_le_bytes());
    for v in ens.weights() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    buf
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<ParticleEnsemble> {
    let bad = |why: &str| LabError::Format(format!("checkpoint: {why}"));
    if bytes.len() < 28 || &bytes[..4] != MAGIC {
        return Err(bad("missing MFLB header"));
    }
    let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
    let u64_at = |o: usize| u64::from_le_bytes(bytes[o..o + 8].try_into().unwrap());
    if u32_at(4) != CHECKPOINT_VERSION {
        return Err(bad("unsupported version"));
    }
    let space = Space::from_tag(u32_at(8)).ok_or_else(|| bad("unknown space tag"))?;
    let (m, d) = (u64_at(12) as usize, u64_at(20) as usize);
    let count = m.checked_mul(space.particle_width(d)).ok_or_else(|| bad("size overflow"))?;
    let body = &bytes[28..];
    if body.len() != 8 * count {
        return Err(bad("truncated weight block"));
    }
    let weights = body.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
    Ok(ParticleEnsemble::from_weights(space, d, m, weights)?)
}

/// Writes `path` (binary) and `path.json` (sidecar).
pub fn write_checkpoint(path: &Path, ens: &ParticleEnsemble, meta: &CheckpointMeta) -> Result<()> {
    let mut w = create(path)?;
    w.write_all(&encode_checkpoint(ens)).map_err(io_err(path))?;
    w.flush().map_err(io_err(path))?;
    write_json(&sidecar(path), meta)
}

/// Reads a checkpoint; the sidecar is optional.
pub fn read_checkpoint(path: &Path) -> Result<(ParticleEnsemble, Option<CheckpointMeta>)> {
    let mut bytes = Vec::new();
    File::open(path).map_err(io_err(path))?.read_to_end(&mut bytes).map_err(io_err(path))?;
    let ens = decode_checkpoint(&bytes)?;
    let side = sidecar(path);
    let meta = if side.exists() { Some(read_json(&side)?) } else { None };
    Ok((ens, meta))
}

/// JSON sidecar of a dataset CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub d: usize,
    pub n: usize,
    pub bias: f64,
    pub seed: u64,
    pub task_hash: u64,
    pub noise_std: f64,
    pub noise_law: NoiseLaw,
    /// Labels are `±1`, so 0-1 error is meaningful.
    pub sign_valued: bool,
    /// Rows `u_i/√k` of the target directions, when known.
    pub directions: Option<Mat>,
}

/// Writes `x0..x{d-1},y` rows plus the sidecar.
pub fn write_dataset(path: &Path, data: &Dataset, meta: &DatasetMeta) -> Result<()> {
    let mut w = csv_writer(create(path)?);
    let mut header: Vec<String> = (0..data.d).map(|i| format!("x{i}")).collect();
    header.push("y".into());
    w.write_record(&header)?;
    let mut row = Vec::with_capacity(data.d + 1);
    for i in 0..data.n {
        row.clear();
        row.extend(data.input(i).iter().map(|v| fmt_f64(*v)));
        row.push(fmt_f64(data.labels[i]));
        w.write_record(&row)?;
    }
    w.flush().map_err(io_err(path))?;
    write_json(&sidecar(path), meta)
}

pub fn read_dataset(path: &Path) -> Result<(Dataset, DatasetMeta)> {
    let meta: DatasetMeta = read_json(&sidecar(path))?;
    let mut rd = csv::Reader::from_path(path)?;
    if rd.headers()?.len() != meta.d + 1 {
        return Err(LabError::Format(format!("{}: expected {} columns", path.display(), meta.d + 1)));
    }
    let mut inputs = Vec::with_capacity(meta.n * meta.d);
    let mut labels = Vec::with_capacity(meta.n);
    for row in rd.records() {
        let row = row?;
        for c in 0..meta.d {
            inputs.push(parse_num(&row[c])?);
        }
        labels.push(parse_num(&row[meta.d])?);
    }
    if labels.len() != meta.n {
        return Err(LabError::Format(format!("{}: sidecar says n = {}, found {}", path.display(), meta.n, labels.len())));
    }
    let data = Dataset::from_parts(meta.d, inputs, labels, meta.bias, meta.seed, meta.task_hash)?;
    Ok((data, meta))
}
