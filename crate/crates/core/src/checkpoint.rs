//! Binary checkpoint container and the human-readable manifests written next
//! to it.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic "TKGCCKPT" | version u32 | precision bits u32 | model tag u32
//! d u64 | d_j u64 | d_t u64 | conj_tail u8
//! |E| u64 | |R| u64 | |T| u64 | first dated timestamp u64 | seed u64
//! temporal family u32 | p u32 | hidden u64 | per-pair u8
//! dataset hash (u32 length + UTF-8)
//! table count u32, then per table: name (u32 length + UTF-8) | rows u64 | cols u64
//! table data as f64 arrays, in descriptor order
//! ```

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::eval::DirectionMetrics;
use crate::model::{ModelKind, ModelParams, ModelSpec};
use crate::recurrent::{RecurrentKind, RecurrentParams};
use crate::regularisers::{RegFamily, TemporalRegSpec};
use crate::train::{EpochRecord, TrainConfig, TrainableParams};
use crate::types::ComplexTable;

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"TKGCCKPT";
pub const CHECKPOINT_VERSION: u32 = 1;
pub const PRECISION_BITS: u32 = 64;
pub const PRECISION: &str = "f64";

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub seed: u64,
    pub dataset_hash: String,
    pub temporal: TemporalRegSpec,
    pub params: TrainableParams,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TableShape {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
}

impl TableShape {
    pub fn floats(&self) -> usize {
        self.rows * self.cols
    }
}

impl Checkpoint {
    /// Shapes of the serialized tables in file order.
    pub fn table_shapes(&self) -> Vec<TableShape> {
        let p = &self.params;
        let mut v: Vec<TableShape> = p
            .model
            .tables()
            .into_iter()
            .map(|(name, t)| TableShape {
                name: name.to_string(),
                rows: t.rows(),
                cols: t.row_len(),
            })
            .collect();
        if let Some(b) = &p.bias {
            v.push(TableShape {
                name: "linear3_bias".into(),
                rows: 1,
                cols: b.row_len(),
            });
        }
        if let Some(r) = &p.recurrent {
            v.push(TableShape {
                name: "recurrent".into(),
                rows: 1,
                cols: r.data.len(),
            });
        }
        v
    }

    /// Number of f64 values stored in the file.
    pub fn float_count(&self) -> usize {
        self.table_shapes().iter().map(TableShape::floats).sum()
    }
}

fn reg_tag(spec: &TemporalRegSpec) -> u32 {
    match spec.family {
        RegFamily::None => 0,
        RegFamily::Lp => 1,
        RegFamily::Np => 2,
        RegFamily::Linear3 => 3,
        RegFamily::Recurrent(k) => 100 + k.tag(),
    }
}

fn reg_from_tag(tag: u32) -> Result<RegFamily> {
    Ok(match tag {
        0 => RegFamily::None,
        1 => RegFamily::Lp,
        2 => RegFamily::Np,
        3 => RegFamily::Linear3,
        t if t >= 100 => RegFamily::Recurrent(
            RecurrentKind::from_tag(t - 100)
                .ok_or_else(|| Error::Format(format!("unknown recurrent tag {}", t - 100)))?,
        ),
        t => return Err(Error::Format(format!("unknown regulariser tag {t}"))),
    })
}

struct Writer<W: Write> {
    inner: W,
}

impl<W: Write> Writer<W> {
    fn u8(&mut self, v: u8) -> io::Result<()> {
        self.inner.write_all(&[v])
    }
    fn u32(&mut self, v: u32) -> io::Result<()> {
        self.inner.write_all(&v.to_le_bytes())
    }
    fn u64(&mut self, v: u64) -> io::Result<()> {
        self.inner.write_all(&v.to_le_bytes())
    }
    fn str(&mut self, s: &str) -> io::Result<()> {
        self.u32(s.len() as u32)?;
        self.inner.write_all(s.as_bytes())
    }
    fn floats(&mut self, xs: &[f64]) -> io::Result<()> {
        let mut buf = Vec::with_capacity(8 * 4096);
        for chunk in xs.chunks(4096) {
            buf.clear();
            for x in chunk {
                buf.extend_from_slice(&x.to_le_bytes());
            }
            self.inner.write_all(&buf)?;
        }
        Ok(())
    }
}

/// Streams `ckpt` into `out`; returns the number of floats written.
pub fn write_checkpoint<W: Write>(ckpt: &Checkpoint, out: W) -> Result<usize> {
    let mut w = Writer { inner: out };
    let p = &ckpt.params;
    let spec = p.model.spec;
    w.inner.write_all(CHECKPOINT_MAGIC)?;
    w.u32(CHECKPOINT_VERSION)?;
    w.u32(PRECISION_BITS)?;
    w.u32(spec.kind.tag())?;
    w.u64(spec.rank as u64)?;
    w.u64(spec.relation_rank as u64)?;
    w.u64(spec.time_rank as u64)?;
    w.u8(spec.conj_tail as u8)?;
    w.u64(p.model.num_entities() as u64)?;
    w.u64(p.model.num_relations() as u64)?;
    w.u64(p.model.num_timestamps() as u64)?;
    w.u64(p.first_dated as u64)?;
    w.u64(ckpt.seed)?;
    w.u32(reg_tag(&ckpt.temporal))?;
    w.u32(ckpt.temporal.p)?;
    w.u64(ckpt.temporal.hidden as u64)?;
    w.u8(ckpt.temporal.lp_per_pair as u8)?;
    w.str(&ckpt.dataset_hash)?;
    let shapes = ckpt.table_shapes();
    w.u32(shapes.len() as u32)?;
    for s in &shapes {
        w.str(&s.name)?;
        w.u64(s.rows as u64)?;
        w.u64(s.cols as u64)?;
    }
    let mut written = 0;
    for (_, t) in p.model.tables() {
        w.floats(t.data())?;
        written += t.data().len();
    }
    if let Some(b) = &p.bias {
        w.floats(b.data())?;
        written += b.data().len();
    }
    if let Some(r) = &p.recurrent {
        w.floats(&r.data)?;
        written += r.data.len();
    }
    w.inner.flush()?;
    Ok(written)
}

struct Reader<R: Read> {
    inner: R,
}

impl<R: Read> Reader<R> {
    fn bytes<const N: usize>(&mut self) -> Result<[u8; N]> {
        let mut b = [0u8; N];
        self.inner.read_exact(&mut b).map_err(truncated)?;
        Ok(b)
    }
    fn u8(&mut self) -> Result<u8> {
        Ok(self.bytes::<1>()?[0])
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.bytes()?))
    }
    fn usize(&mut self) -> Result<usize> {
        let v = u64::from_le_bytes(self.bytes()?);
        usize::try_from(v).map_err(|_| Error::Format(format!("size {v} does not fit")))
    }
    fn str(&mut self) -> Result<String> {
        let n = self.u32()? as usize;
        if n > 1 << 20 {
            return Err(Error::Format(format!("string length {n} is implausible")));
        }
        let mut b = vec![0u8; n];
        self.inner.read_exact(&mut b).map_err(truncated)?;
        String::from_utf8(b).map_err(|_| Error::Format("invalid UTF-8 string".into()))
    }
    fn floats(&mut self, n: usize) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(n);
        let mut buf = vec![0u8; 8 * 4096];
        let mut left = n;
        while left > 0 {
            let k = left.min(4096);
            self.inner.read_exact(&mut buf[..8 * k]).map_err(truncated)?;
            out.extend(
                buf[..8 * k]
                    .chunks_exact(8)
                    .map(|c| f64::from_le_bytes(c.try_into().unwrap())),
            );
            left -= k;
        }
        Ok(out)
    }
}

fn truncated(e: io::Error) -> Error {
    if e.kind() == io::ErrorKind::UnexpectedEof {
        Error::Format("checkpoint is truncated".into())
    } else {
        Error::Io(e)
    }
}

pub fn read_checkpoint<R: Read>(input: R) -> Result<Checkpoint> {
    let mut r = Reader { inner: input };
    if &r.bytes::<8>()? != CHECKPOINT_MAGIC {
        return Err(Error::Format("not a checkpoint file (bad magic)".into()));
    }
    let version = r.u32()?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::Format(format!("unsupported checkpoint version {version}")));
    }
    let bits = r.u32()?;
    if bits != PRECISION_BITS {
        return Err(Error::Format(format!("unsupported precision of {bits} bits")));
    }
    let tag = r.u32()?;
    let kind = ModelKind::from_tag(tag).ok_or_else(|| Error::Format(format!("unknown model tag {tag}")))?;
    let (rank, relation_rank, time_rank) = (r.usize()?, r.usize()?, r.usize()?);
    let conj_tail = r.u8()? != 0;
    let spec = ModelSpec {
        kind,
        rank,
        relation_rank,
        time_rank,
        conj_tail,
    };
    spec.validate()?;
    let (ne, nr, nt) = (r.usize()?, r.usize()?, r.usize()?);
    let first_dated = r.usize()?;
    let seed = u64::from_le_bytes(r.bytes()?);
    let temporal = TemporalRegSpec {
        family: reg_from_tag(r.u32()?)?,
        p: r.u32()?,
        hidden: r.usize()?,
        lp_per_pair: r.u8()? != 0,
    };
    let dataset_hash = r.str()?;
    let count = r.u32()? as usize;
    let mut shapes = Vec::with_capacity(count.min(16));
    for _ in 0..count {
        shapes.push(TableShape {
            name: r.str()?,
            rows: r.usize()?,
            cols: r.usize()?,
        });
    }

    let mut model = ModelParams::zeros(spec, ne, nr, nt)?;
    let expected: Vec<(&'static str, usize, usize)> = model
        .tables()
        .into_iter()
        .map(|(n, t)| (n, t.rows(), t.row_len()))
        .collect();
    if shapes.len() < expected.len() {
        return Err(Error::Format("checkpoint lacks model tables".into()));
    }
    for ((name, rows, cols), s) in expected.iter().zip(&shapes) {
        if s.name != *name || s.rows != *rows || s.cols != *cols {
            return Err(Error::Format(format!(
                "table {:?} has shape {}x{}, expected {name:?} {rows}x{cols}",
                s.name, s.rows, s.cols
            )));
        }
    }
    for (_, t) in model.tables_mut() {
        let n = t.data().len();
        let data = r.floats(n)?;
        t.data_mut().copy_from_slice(&data);
    }
    let mut params = TrainableParams::plain(model);
    params.first_dated = first_dated;
    for s in &shapes[expected.len()..] {
        let data = r.floats(s.floats())?;
        match s.name.as_str() {
            "linear3_bias" => {
                params.bias = Some(ComplexTable::from_data(1, s.cols / 2, data)?);
            }
            "recurrent" => {
                let RegFamily::Recurrent(kind) = temporal.family else {
                    return Err(Error::Format("recurrent table without recurrent regulariser".into()));
                };
                params.recurrent = Some(RecurrentParams::from_data(kind, temporal.hidden, 2 * time_rank, data)?);
            }
            other => return Err(Error::Format(format!("unknown table {other:?}"))),
        }
    }
    let mut trailing = [0u8; 1];
    if r.inner.read(&mut trailing)? != 0 {
        return Err(Error::Format("trailing bytes after checkpoint data".into()));
    }
    Ok(Checkpoint {
        seed,
        dataset_hash,
        temporal,
        params,
    })
}

/// Writes the checkpoint and returns the SHA-256 of the written bytes.
pub fn save_checkpoint(ckpt: &Checkpoint, path: &Path) -> Result<String> {
    let file = File::create(path).map_err(|e| Error::Io(e).with_path(path))?;
    let mut hashing = HashingWriter {
        inner: BufWriter::new(file),
        hasher: Sha256::new(),
    };
    write_checkpoint(ckpt, &mut hashing)?;
    hashing.inner.flush()?;
    Ok(crate::data::hex_digest_finish(hashing.hasher))
}

/// Reads a checkpoint and returns it with the SHA-256 of the file.
pub fn load_checkpoint(path: &Path) -> Result<(Checkpoint, String)> {
    let file = File::open(path).map_err(|e| Error::Io(e).with_path(path))?;
    let mut hashing = HashingReader {
        inner: BufReader::new(file),
        hasher: Sha256::new(),
    };
    let ckpt = read_checkpoint(&mut hashing)?;
    Ok((ckpt, crate::data::hex_digest_finish(hashing.hasher)))
}

struct HashingWriter<W> {
    inner: W,
    hasher: Sha256,
}

impl<W: Write> Write for HashingWriter<W> {
    fn write(&mut self, buf: &[u8]) -> io::Result<usize> {
        let n = self.inner.write(buf)?;
        self.hasher.update(&buf[..n]);
        Ok(n)
    }
    fn flush(&mut self) -> io::Result<()> {
        self.inner.flush()
    }
}

struct HashingReader<R> {
    inner: R,
    hasher: Sha256,
}

impl<R: Read> Read for HashingReader<R> {
    fn read(&mut self, buf: &mut [u8]) -> io::Result<usize> {
        let n = self.inner.read(buf)?;
        self.hasher.update(&buf[..n]);
        Ok(n)
    }
}

/// Sidecar manifest describing a checkpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointManifest {
    pub format_version: u32,
    pub precision: String,
    pub model: String,
    pub rank: usize,
    pub relation_rank: usize,
    pub time_rank: usize,
    pub conj_tail: bool,
    pub entities: usize,
    pub relations: usize,
    pub timestamps: usize,
    pub seed: u64,
    pub dataset_hash: String,
    pub temporal_regulariser: String,
    pub recurrent_hidden: usize,
    pub total_floats: usize,
    pub tables: Vec<TableShape>,
}

impl CheckpointManifest {
    pub fn of(ckpt: &Checkpoint) -> Self {
        let m = &ckpt.params.model;
        Self {
            format_version: CHECKPOINT_VERSION,
            precision: PRECISION.into(),
            model: m.spec.kind.to_string(),
            rank: m.spec.rank,
            relation_rank: m.spec.relation_rank,
            time_rank: m.spec.time_rank,
            conj_tail: m.spec.conj_tail,
            entities: m.num_entities(),
            relations: m.num_relations(),
            timestamps: m.num_timestamps(),
            seed: ckpt.seed,
            dataset_hash: ckpt.dataset_hash.clone(),
            temporal_regulariser: ckpt.temporal.to_string(),
            recurrent_hidden: ckpt.temporal.hidden,
            total_floats: ckpt.float_count(),
            tables: ckpt.table_shapes(),
        }
    }
}

/// Flat view of a [`TrainConfig`] for manifests and config files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigRecord {
    pub model: String,
    pub rank: usize,
    pub relation_rank: usize,
    pub time_rank: usize,
    pub conj_tail: bool,
    pub temporal_regulariser: String,
    pub recurrent_hidden: usize,
    pub lambda_emb: f64,
    pub lambda_time: f64,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub valid_every: usize,
    pub init_scale: f64,
}

impl From<&TrainConfig> for ConfigRecord {
    fn from(c: &TrainConfig) -> Self {
        Self {
            model: c.model.kind.to_string(),
            rank: c.model.rank,
            relation_rank: c.model.relation_rank,
            time_rank: c.model.time_rank,
            conj_tail: c.model.conj_tail,
            temporal_regulariser: c.temporal.to_string(),
            recurrent_hidden: c.temporal.hidden,
            lambda_emb: c.lambda_emb,
            lambda_time: c.lambda_time,
            learning_rate: c.learning_rate,
            batch_size: c.batch_size,
            epochs: c.epochs,
            seed: c.seed,
            adam_beta1: c.adam.beta1,
            adam_beta2: c.adam.beta2,
            adam_eps: c.adam.eps,
            valid_every: c.valid_every,
            init_scale: c.init_scale,
        }
    }
}

/// Per-epoch line of a run manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLine {
    pub epoch: usize,
    pub train_loss: f64,
    pub seconds: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub valid_mrr: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub valid_hits_at_1: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub valid_hits_at_3: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub valid_hits_at_10: Option<f64>,
}

impl From<&EpochRecord> for EpochLine {
    fn from(r: &EpochRecord) -> Self {
        Self {
            epoch: r.epoch,
            train_loss: r.train_loss,
            seconds: r.seconds,
            valid_mrr: r.valid.map(|m| m.overall.mrr),
            valid_hits_at_1: r.valid.map(|m| m.overall.hits_at_1),
            valid_hits_at_3: r.valid.map(|m| m.overall.hits_at_3),
            valid_hits_at_10: r.valid.map(|m| m.overall.hits_at_10),
        }
    }
}

/// Key-value record of one training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub precision: String,
    pub seed: u64,
    pub dataset_hash: String,
    pub threads: usize,
    pub checkpoint_file: String,
    pub checkpoint_hash: String,
    pub best_epoch: Option<usize>,
    pub config: ConfigRecord,
    pub checkpoint: CheckpointManifest,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub valid: Option<DirectionMetrics>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub test: Option<DirectionMetrics>,
    pub epochs: Vec<EpochLine>,
}

pub fn to_toml<T: Serialize>(value: &T) -> Result<String> {
    toml::to_string_pretty(value).map_err(|e| Error::Format(format!("TOML encoding failed: {e}")))
}

pub fn write_toml<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    std::fs::write(path, to_toml(value)?).map_err(|e| Error::Io(e).with_path(path))
}
