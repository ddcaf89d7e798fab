//! Benchmark ingestion: ICEWS and YAGO15K parsers, vocabulary encoding,
//! reciprocal augmentation, the evaluation filter index and the on-disk
//! encoded-dataset container.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;
use std::str::FromStr;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::types::{DatasetSplits, Quadruple, Vocabulary, NO_TIME_LABEL};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TemporalModifier {
    OccursSince,
    OccursUntil,
}

impl TemporalModifier {
    pub fn as_str(self) -> &'static str {
        match self {
            TemporalModifier::OccursSince => "occursSince",
            TemporalModifier::OccursUntil => "occursUntil",
        }
    }
}

impl FromStr for TemporalModifier {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.trim().trim_start_matches('<').trim_end_matches('>') {
            "occursSince" => Ok(TemporalModifier::OccursSince),
            "occursUntil" => Ok(TemporalModifier::OccursUntil),
            other => Err(format!("unknown temporal modifier {other:?}")),
        }
    }
}

/// A fact as it appears in a raw benchmark file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawFact {
    pub subject: String,
    pub relation: String,
    pub object: String,
    pub time: Option<NaiveDate>,
    pub modifier: Option<TemporalModifier>,
}

impl RawFact {
    fn check(self, line: usize) -> Result<Self> {
        if self.subject.is_empty() || self.relation.is_empty() || self.object.is_empty() {
            return Err(Error::parse(line, "empty subject, relation or object"));
        }
        Ok(self)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DatasetFormat {
    Icews,
    Yago15k,
}

impl FromStr for DatasetFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "icews" | "icews14" | "icews05-15" => Ok(DatasetFormat::Icews),
            "yago" | "yago15k" => Ok(DatasetFormat::Yago15k),
            other => Err(Error::Config(format!("unknown dataset format {other:?}"))),
        }
    }
}

fn lines_of<R: BufRead>(reader: R) -> impl Iterator<Item = (usize, std::io::Result<String>)> {
    reader.lines().enumerate().map(|(i, l)| (i + 1, l))
}

/// Parses ICEWS-style lines: `subject \t relation \t object \t YYYY-MM-DD`.
pub fn parse_icews<R: BufRead>(reader: R) -> Result<Vec<RawFact>> {
    let mut facts = Vec::new();
    for (line_no, line) in lines_of(reader) {
        let line = line?;
        let line = line.trim_end_matches(['\r', '\n']);
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 4 {
            return Err(Error::parse(
                line_no,
                format!("expected 4 tab-separated fields, found {}", fields.len()),
            ));
        }
        let date = NaiveDate::parse_from_str(fields[3].trim(), "%Y-%m-%d")
            .map_err(|e| Error::parse(line_no, format!("bad date {:?}: {e}", fields[3])))?;
        facts.push(
            RawFact {
                subject: fields[0].trim().to_string(),
                relation: fields[1].trim().to_string(),
                object: fields[2].trim().to_string(),
                time: Some(date),
                modifier: None,
            }
            .check(line_no)?,
        );
    }
    Ok(facts)
}

/// Parses a YAGO date literal such as `"2001-##-##"^^<xsd:date>` to January 1
/// of its year.
fn parse_yago_year(raw: &str) -> Option<NaiveDate> {
    let s = raw.trim();
    let s = s.split("^^").next()?.trim().trim_matches('"');
    let (negative, body) = match s.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, s),
    };
    let year_str = body.split('-').next()?;
    if year_str.is_empty() || !year_str.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    let mut year: i32 = year_str.parse().ok()?;
    if negative {
        year = -year;
    }
    NaiveDate::from_ymd_opt(year, 1, 1)
}

/// Parses YAGO15K lines: either `s \t r \t o` or
/// `s \t r \t o \t <occursSince|occursUntil> \t "YYYY-##-##"`.
pub fn parse_yago15k<R: BufRead>(reader: R) -> Result<Vec<RawFact>> {
    let mut facts = Vec::new();
    for (line_no, line) in lines_of(reader) {
        let line = line?;
        let line = line.trim_end_matches(['\r', '\n']);
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').map(str::trim).collect();
        let fact = match fields.len() {
            3 => RawFact {
                subject: fields[0].to_string(),
                relation: fields[1].to_string(),
                object: fields[2].to_string(),
                time: None,
                modifier: None,
            },
            5 => {
                let modifier = fields[3]
                    .parse::<TemporalModifier>()
                    .map_err(|m| Error::parse(line_no, m))?;
                let time = parse_yago_year(fields[4]).ok_or_else(|| {
                    Error::parse(line_no, format!("bad date {:?}", fields[4]))
                })?;
                RawFact {
                    subject: fields[0].to_string(),
                    relation: fields[1].to_string(),
                    object: fields[2].to_string(),
                    time: Some(time),
                    modifier: Some(modifier),
                }
            }
            n => {
                return Err(Error::parse(
                    line_no,
                    format!("expected 3 or 5 tab-separated fields, found {n}"),
                ))
            }
        };
        facts.push(fact.check(line_no)?);
    }
    Ok(facts)
}

/// Folds each fact's temporal modifier into its relation name
/// (`playsFor` + `occursSince` becomes `playsFor@occursSince`).
pub fn group_yago_relations(facts: Vec<RawFact>) -> Vec<RawFact> {
    facts
        .into_iter()
        .map(|mut f| {
            if let Some(m) = f.modifier {
                f.relation = format!("{}@{}", f.relation, m.as_str());
            }
            f
        })
        .collect()
}

/// Reads and parses one raw split file. YAGO files get relation grouping.
pub fn load_raw(path: &Path, format: DatasetFormat) -> Result<Vec<RawFact>> {
    let reader = BufReader::new(File::open(path)?);
    let parsed = match format {
        DatasetFormat::Icews => parse_icews(reader),
        DatasetFormat::Yago15k => parse_yago15k(reader).map(group_yago_relations),
    };
    parsed.map_err(|e| e.with_path(path))
}

/// What to do with facts that carry no timestamp.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum NoTimeHandling {
    /// Map them to a reserved timestamp slot at index 0.
    #[default]
    Reserve,
    /// Drop them from every split.
    Drop,
    /// Treat them as an error.
    Reject,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct BuildOptions {
    pub no_time: NoTimeHandling,
}

fn date_label(d: NaiveDate) -> String {
    d.format("%Y-%m-%d").to_string()
}

/// Encodes raw splits over a vocabulary built from their union.
pub fn build_dataset(
    train: &[RawFact],
    valid: &[RawFact],
    test: &[RawFact],
    options: BuildOptions,
) -> Result<DatasetSplits> {
    if train.is_empty() {
        return Err(Error::Dataset("training split is empty".into()));
    }
    let keep = |f: &&RawFact| f.time.is_some() || options.no_time != NoTimeHandling::Drop;
    let all = || train.iter().chain(valid).chain(test).filter(keep);

    let mut entities: Vec<String> = Vec::new();
    let mut entity_ids: HashMap<&str, u32> = HashMap::new();
    let mut relations: Vec<String> = Vec::new();
    let mut relation_ids: HashMap<&str, u32> = HashMap::new();
    let mut dates: BTreeSet<NaiveDate> = BTreeSet::new();
    let mut any_undated = false;

    for f in all() {
        for name in [&f.subject, &f.object] {
            entity_ids.entry(name.as_str()).or_insert_with(|| {
                entities.push(name.clone());
                (entities.len() - 1) as u32
            });
        }
        relation_ids.entry(f.relation.as_str()).or_insert_with(|| {
            relations.push(f.relation.clone());
            (relations.len() - 1) as u32
        });
        match f.time {
            Some(d) => {
                dates.insert(d);
            }
            None if options.no_time == NoTimeHandling::Reject => {
                return Err(Error::Dataset(format!(
                    "fact ({}, {}, {}) has no timestamp",
                    f.subject, f.relation, f.object
                )))
            }
            None => any_undated = true,
        }
    }

    let reserved = any_undated && options.no_time == NoTimeHandling::Reserve;
    let mut timestamps: Vec<String> = Vec::with_capacity(dates.len() + 1);
    if reserved {
        timestamps.push(NO_TIME_LABEL.to_string());
    }
    let offset = timestamps.len() as u32;
    let date_ids: HashMap<NaiveDate, u32> = dates
        .iter()
        .enumerate()
        .map(|(i, d)| (*d, i as u32 + offset))
        .collect();
    timestamps.extend(dates.iter().map(|d| date_label(*d)));

    let encode = |facts: &[RawFact]| -> Vec<Quadruple> {
        facts
            .iter()
            .filter(keep)
            .map(|f| Quadruple {
                subject: entity_ids[f.subject.as_str()],
                relation: relation_ids[f.relation.as_str()],
                object: entity_ids[f.object.as_str()],
                timestamp: f.time.map_or(0, |d| date_ids[&d]),
            })
            .collect()
    };
    let (train, valid, test) = (encode(train), encode(valid), encode(test));
    let vocabulary = Vocabulary::from_lists(entities, relations, timestamps, reserved)?;
    Ok(DatasetSplits {
        train,
        valid,
        test,
        vocabulary,
        reciprocal: false,
    })
}

/// Doubles the relation space and appends the inverse of every training fact.
pub fn augment_reciprocal(splits: DatasetSplits) -> Result<DatasetSplits> {
    if splits.reciprocal {
        return Err(Error::Dataset("dataset is already reciprocal-augmented".into()));
    }
    let base = splits.num_base_relations() as u32;
    let mut train = Vec::with_capacity(2 * splits.train.len());
    train.extend_from_slice(&splits.train);
    train.extend(splits.train.iter().map(|q| q.reciprocal(base)));
    Ok(DatasetSplits {
        train,
        reciprocal: true,
        ..splits
    })
}

/// Known true objects per `(subject, relation, timestamp)` key.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FilterIndex {
    map: HashMap<(u32, u32, u32), Vec<u32>>,
}

impl FilterIndex {
    /// Builds the index for an arbitrary set of query facts. Keys are the right
    /// queries of `queries` (plus their reciprocal forms when the dataset is
    /// reciprocal); values gather every true object across all splits.
    pub fn for_queries(splits: &DatasetSplits, queries: &[Quadruple]) -> Self {
        let base = splits.num_base_relations() as u32;
        let mut sets: HashMap<(u32, u32, u32), BTreeSet<u32>> = HashMap::new();
        for q in queries {
            sets.entry((q.subject, q.relation, q.timestamp)).or_default();
            if splits.reciprocal {
                let r = q.reciprocal(base);
                sets.entry((r.subject, r.relation, r.timestamp)).or_default();
            }
        }
        let mut add = |q: &Quadruple| {
            if let Some(s) = sets.get_mut(&(q.subject, q.relation, q.timestamp)) {
                s.insert(q.object);
            }
        };
        // train already holds its inverses once augmented
        for q in &splits.train {
            add(q);
        }
        for q in splits.valid.iter().chain(&splits.test) {
            add(q);
            if splits.reciprocal {
                add(&q.reciprocal(base));
            }
        }
        let map = sets
            .into_iter()
            .map(|(k, v)| (k, v.into_iter().collect()))
            .collect();
        Self { map }
    }

    pub fn get(&self, subject: u32, relation: u32, timestamp: u32) -> Option<&[u32]> {
        self.map
            .get(&(subject, relation, timestamp))
            .map(Vec::as_slice)
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }
}

/// Filter index over the valid and test queries.
pub fn build_filter_index(splits: &DatasetSplits) -> FilterIndex {
    let queries: Vec<Quadruple> = splits.valid.iter().chain(&splits.test).copied().collect();
    FilterIndex::for_queries(splits, &queries)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub entities: usize,
    pub relations: usize,
    pub timestamps: usize,
    pub train: usize,
    pub valid: usize,
    pub test: usize,
}

impl DatasetStats {
    pub fn of(splits: &DatasetSplits) -> Self {
        Self {
            entities: splits.num_entities(),
            relations: splits.num_base_relations(),
            timestamps: splits.num_timestamps(),
            train: splits.train.len(),
            valid: splits.valid.len(),
            test: splits.test.len(),
        }
    }

    pub fn facts(&self) -> usize {
        self.train + self.valid + self.test
    }
}

impl fmt::Display for DatasetStats {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "entities\t{}", self.entities)?;
        writeln!(f, "relations\t{}", self.relations)?;
        writeln!(f, "timestamps\t{}", self.timestamps)?;
        writeln!(f, "train\t{}", self.train)?;
        writeln!(f, "valid\t{}", self.valid)?;
        writeln!(f, "test\t{}", self.test)?;
        write!(f, "facts\t{}", self.facts())
    }
}

pub const DATASET_MAGIC: &[u8; 8] = b"TKGCDATA";
pub const DATASET_VERSION: u32 = 1;

const FLAG_RECIPROCAL: u32 = 1;
const FLAG_RESERVED_NO_TIME: u32 = 2;

fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

/// Serializes splits into the encoded-dataset container.
///
/// Layout (all integers little-endian u32): magic, version, flags, |E|, |R|,
/// |T|, train/valid/test sizes, then `subject relation object timestamp` per
/// fact for each split in order, then the vocabulary strings (entities,
/// relations, timestamps) as length-prefixed UTF-8.
pub fn encode_dataset(splits: &DatasetSplits) -> Vec<u8> {
    let mut out = Vec::with_capacity(44 + 16 * splits.num_facts());
    out.extend_from_slice(DATASET_MAGIC);
    put_u32(&mut out, DATASET_VERSION);
    let mut flags = 0;
    if splits.reciprocal {
        flags |= FLAG_RECIPROCAL;
    }
    if splits.vocabulary.reserved_no_time() {
        flags |= FLAG_RESERVED_NO_TIME;
    }
    put_u32(&mut out, flags);
    for n in [
        splits.num_entities(),
        splits.num_base_relations(),
        splits.num_timestamps(),
        splits.train.len(),
        splits.valid.len(),
        splits.test.len(),
    ] {
        put_u32(&mut out, n as u32);
    }
    for q in splits.train.iter().chain(&splits.valid).chain(&splits.test) {
        for v in [q.subject, q.relation, q.object, q.timestamp] {
            put_u32(&mut out, v);
        }
    }
    let v = &splits.vocabulary;
    for name in v.entities().iter().chain(v.relations()).chain(v.timestamps()) {
        put_u32(&mut out, name.len() as u32);
        out.extend_from_slice(name.as_bytes());
    }
    out
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| Error::Format("truncated dataset container".into()))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn string(&mut self) -> Result<String> {
        let n = self.u32()? as usize;
        String::from_utf8(self.take(n)?.to_vec())
            .map_err(|_| Error::Format("vocabulary entry is not UTF-8".into()))
    }
}

pub fn decode_dataset(buf: &[u8]) -> Result<DatasetSplits> {
    let mut c = Cursor { buf, pos: 0 };
    if c.take(8)? != DATASET_MAGIC {
        return Err(Error::Format("not an encoded dataset (bad magic)".into()));
    }
    let version = c.u32()?;
    if version != DATASET_VERSION {
        return Err(Error::Format(format!("unsupported dataset version {version}")));
    }
    let flags = c.u32()?;
    let (ne, nr, nt) = (c.u32()? as usize, c.u32()? as usize, c.u32()? as usize);
    let sizes = [c.u32()? as usize, c.u32()? as usize, c.u32()? as usize];
    let mut splits: Vec<Vec<Quadruple>> = Vec::with_capacity(3);
    for n in sizes {
        let mut v = Vec::with_capacity(n);
        for _ in 0..n {
            v.push(Quadruple::new(c.u32()?, c.u32()?, c.u32()?, c.u32()?));
        }
        splits.push(v);
    }
    let mut read_names = |n: usize| (0..n).map(|_| c.string()).collect::<Result<Vec<_>>>();
    let entities = read_names(ne)?;
    let relations = read_names(nr)?;
    let timestamps = read_names(nt)?;
    if c.pos != buf.len() {
        return Err(Error::Format("trailing bytes after dataset container".into()));
    }
    let vocabulary = Vocabulary::from_lists(
        entities,
        relations,
        timestamps,
        flags & FLAG_RESERVED_NO_TIME != 0,
    )?;
    let test = splits.pop().unwrap();
    let valid = splits.pop().unwrap();
    let train = splits.pop().unwrap();
    let out = DatasetSplits {
        train,
        valid,
        test,
        vocabulary,
        reciprocal: flags & FLAG_RECIPROCAL != 0,
    };
    out.validate()?;
    Ok(out)
}

pub fn save_dataset(splits: &DatasetSplits, path: &Path) -> Result<()> {
    let mut f = File::create(path)?;
    f.write_all(&encode_dataset(splits))?;
    Ok(())
}

/// Loads an encoded dataset and returns it with the SHA-256 of the file bytes.
pub fn load_dataset(path: &Path) -> Result<(DatasetSplits, String)> {
    let mut buf = Vec::new();
    File::open(path)?.read_to_end(&mut buf)?;
    let hash = hex_digest(&buf);
    Ok((decode_dataset(&buf)?, hash))
}

/// SHA-256 of the encoded container, used to tie checkpoints to datasets.
pub fn dataset_hash(splits: &DatasetSplits) -> String {
    hex_digest(&encode_dataset(splits))
}

pub(crate) fn hex_digest(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(bytes);
    hex_digest_finish(h)
}

pub(crate) fn hex_digest_finish(hasher: Sha256) -> String {
    hasher.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn icews(s: &str) -> Result<Vec<RawFact>> {
        parse_icews(s.as_bytes())
    }

    fn fact(s: &str, r: &str, o: &str, t: Option<&str>) -> RawFact {
        RawFact {
            subject: s.into(),
            relation: r.into(),
            object: o.into(),
            time: t.map(|d| NaiveDate::parse_from_str(d, "%Y-%m-%d").unwrap()),
            modifier: None,
        }
    }

    #[test]
    fn icews_line_maps_fields() {
        let f = icews("A\tmeets\tB\t2014-01-01\n").unwrap();
        assert_eq!(f, vec![fact("A", "meets", "B", Some("2014-01-01"))]);
        assert!(icews("").unwrap().is_empty());
    }

    #[test]
    fn icews_errors_name_the_line() {
        let err = icews("A\tr\tB\t2014-01-01\nA\tr\tB\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }), "{err}");
        let err = icews("A\tr\tB\t2014-13-45\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }));
    }

    #[test]
    fn yago_lines() {
        let facts = parse_yago15k(
            "A\tplaysFor\tB\t<occursSince>\t\"2001-##-##\"^^<http://www.w3.org/2001/XMLSchema#date>\nA\tisMarriedTo\tB\n"
                .as_bytes(),
        )
        .unwrap();
        assert_eq!(facts[0].modifier, Some(TemporalModifier::OccursSince));
        assert_eq!(facts[0].time, NaiveDate::from_ymd_opt(2001, 1, 1));
        assert_eq!(facts[1].time, None);
        assert_eq!(facts[1].modifier, None);

        let err = parse_yago15k("A\tr\tB\toccursDuring\t\"2001-##-##\"".as_bytes()).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }));
    }

    #[test]
    fn yago_grouping_doubles_temporal_relations() {
        let mut facts = Vec::new();
        for r in ["r1", "r2", "r3"] {
            for m in ["occursSince", "occursUntil"] {
                let line = format!("A\t{r}\tB\t<{m}>\t\"1999-##-##\"");
                facts.extend(parse_yago15k(line.as_bytes()).unwrap());
            }
        }
        facts.push(fact("A", "static", "B", None));
        let grouped = group_yago_relations(facts);
        assert_eq!(grouped[0].relation, "r1@occursSince");
        assert_eq!(grouped.last().unwrap().relation, "static");
        let temporal: BTreeSet<_> = grouped
            .iter()
            .filter(|f| f.modifier.is_some())
            .map(|f| f.relation.clone())
            .collect();
        assert_eq!(temporal.len(), 6);
    }

    #[test]
    fn build_sorts_timestamps_and_reserves_no_time_slot() {
        let train = vec![
            fact("A", "r", "B", Some("2014-03-01")),
            fact("B", "s", "C", Some("2014-01-01")),
            fact("C", "r", "A", None),
        ];
        let d = build_dataset(&train, &[], &[], BuildOptions::default()).unwrap();
        let v = &d.vocabulary;
        assert_eq!(v.timestamps(), &[NO_TIME_LABEL, "2014-01-01", "2014-03-01"]);
        assert_eq!(v.entities(), &["A", "B", "C"]);
        assert_eq!(d.train[0], Quadruple::new(0, 0, 1, 2));
        assert_eq!(d.train[2].timestamp, 0);

        let dropped = build_dataset(
            &train,
            &[],
            &[],
            BuildOptions {
                no_time: NoTimeHandling::Drop,
            },
        )
        .unwrap();
        assert_eq!(dropped.train.len(), 2);
        assert!(!dropped.vocabulary.reserved_no_time());
        assert!(build_dataset(
            &train,
            &[],
            &[],
            BuildOptions {
                no_time: NoTimeHandling::Reject
            }
        )
        .is_err());
    }

    #[test]
    fn single_fact_corpus() {
        let d = build_dataset(&[fact("A", "r", "B", Some("2014-01-01"))], &[], &[], BuildOptions::default())
            .unwrap();
        assert_eq!(
            (d.num_entities(), d.num_relations(), d.num_timestamps()),
            (2, 1, 1)
        );
        assert!(build_dataset(&[], &[], &[], BuildOptions::default()).is_err());
    }

    #[test]
    fn reciprocal_augmentation() {
        let d = build_dataset(&[fact("A", "r", "B", Some("2014-01-01"))], &[], &[], BuildOptions::default())
            .unwrap();
        let a = augment_reciprocal(d).unwrap();
        assert_eq!(a.train.len(), 2);
        assert_eq!(a.num_relations(), 2);
        assert_eq!(a.train[1], Quadruple::new(1, 1, 0, 0));
        assert!(augment_reciprocal(a).is_err());
    }

    fn toy() -> DatasetSplits {
        let train = vec![
            fact("A", "r", "B", Some("2014-01-01")),
            fact("A", "r", "C", Some("2014-01-02")),
        ];
        let test = vec![
            fact("A", "r", "C", Some("2014-01-01")),
            fact("A", "r", "D", Some("2014-01-02")),
        ];
        build_dataset(&train, &[], &test, BuildOptions::default()).unwrap()
    }

    #[test]
    fn filter_index_groups_by_timestamp() {
        let d = toy();
        let idx = build_filter_index(&d);
        let (a, r) = (0, 0);
        let (b, c, dd) = (1, 2, 3);
        assert_eq!(idx.get(a, r, 0), Some(&[b, c][..]));
        assert_eq!(idx.get(a, r, 1), Some(&[c, dd][..]));
        for q in &d.test {
            assert!(idx.get(q.subject, q.relation, q.timestamp).unwrap().contains(&q.object));
        }
        let mut empty = d.clone();
        empty.test.clear();
        assert!(build_filter_index(&empty).is_empty());
    }

    #[test]
    fn filter_index_covers_reciprocal_queries() {
        let d = augment_reciprocal(toy()).unwrap();
        let idx = build_filter_index(&d);
        // (C, r⁻¹, ?, day 1) has true answer A from both train and test
        assert_eq!(idx.get(2, 1, 0), Some(&[0][..]));
        for q in &d.test {
            let r = q.reciprocal(1);
            assert!(idx.get(r.subject, r.relation, r.timestamp).unwrap().contains(&r.object));
        }
    }

    #[test]
    fn container_round_trip_and_rejects_garbage() {
        let d = augment_reciprocal(toy()).unwrap();
        let bytes = encode_dataset(&d);
        assert_eq!(&bytes[..8], DATASET_MAGIC);
        assert_eq!(decode_dataset(&bytes).unwrap(), d);
        assert!(decode_dataset(&bytes[..bytes.len() - 1]).is_err());
        assert!(decode_dataset(b"NOTADATASET.....").is_err());
        assert_eq!(encode_dataset(&d), bytes);
    }
}
