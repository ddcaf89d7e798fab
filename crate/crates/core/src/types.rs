//! Shared domain types: encoded facts, vocabularies, dataset splits and the
//! complex embedding table layout used by every model.

use std::collections::HashMap;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// An encoded fact `(subject, relation, object, timestamp)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Quadruple {
    pub subject: u32,
    pub relation: u32,
    pub object: u32,
    pub timestamp: u32,
}

impl Quadruple {
    pub fn new(subject: u32, relation: u32, object: u32, timestamp: u32) -> Self {
        Self {
            subject,
            relation,
            object,
            timestamp,
        }
    }

    /// The inverted fact `(object, relation⁻¹, subject, timestamp)` in a relation
    /// space of `2 * base_relations` ids, where `r + base` is the inverse of `r`.
    pub fn reciprocal(&self, base_relations: u32) -> Self {
        let relation = if self.relation < base_relations {
            self.relation + base_relations
        } else {
            self.relation - base_relations
        };
        Self {
            subject: self.object,
            relation,
            object: self.subject,
            timestamp: self.timestamp,
        }
    }
}

/// Label of the reserved timestamp slot for facts without time information.
pub const NO_TIME_LABEL: &str = "<no-time>";

#[derive(Debug, Clone, Default, PartialEq, Eq)]
struct Interner {
    names: Vec<String>,
    ids: HashMap<String, u32>,
}

impl Interner {
    fn from_names(names: Vec<String>) -> Result<Self> {
        let mut ids = HashMap::with_capacity(names.len());
        for (i, n) in names.iter().enumerate() {
            if ids.insert(n.clone(), i as u32).is_some() {
                return Err(Error::Dataset(format!("duplicate vocabulary entry {n:?}")));
            }
        }
        Ok(Self { names, ids })
    }
}

/// Bidirectional string/id maps for entities, relations and timestamps.
///
/// Entity and relation ids follow first-seen order; timestamp ids follow
/// chronological order. When `reserved_no_time` is set, timestamp id 0 is the
/// reserved slot for undated facts and the dated timestamps start at 1.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    entities: Interner,
    relations: Interner,
    timestamps: Interner,
    reserved_no_time: bool,
}

impl Vocabulary {
    /// Builds a vocabulary from already ordered name lists. If `reserved_no_time`
    /// is set the first timestamp must be [`NO_TIME_LABEL`].
    pub fn from_lists(
        entities: Vec<String>,
        relations: Vec<String>,
        timestamps: Vec<String>,
        reserved_no_time: bool,
    ) -> Result<Self> {
        if reserved_no_time && timestamps.first().map(String::as_str) != Some(NO_TIME_LABEL) {
            return Err(Error::Dataset(format!(
                "reserved timestamp slot 0 must be labelled {NO_TIME_LABEL}"
            )));
        }
        Ok(Self {
            entities: Interner::from_names(entities)?,
            relations: Interner::from_names(relations)?,
            timestamps: Interner::from_names(timestamps)?,
            reserved_no_time,
        })
    }

    pub fn num_entities(&self) -> usize {
        self.entities.names.len()
    }

    /// Number of base relations (before reciprocal augmentation).
    pub fn num_relations(&self) -> usize {
        self.relations.names.len()
    }

    /// Number of timestamp slots, including the reserved slot when present.
    pub fn num_timestamps(&self) -> usize {
        self.timestamps.names.len()
    }

    pub fn reserved_no_time(&self) -> bool {
        self.reserved_no_time
    }

    /// Index of the first dated timestamp.
    pub fn first_dated_timestamp(&self) -> usize {
        usize::from(self.reserved_no_time)
    }

    pub fn entity_id(&self, name: &str) -> Option<u32> {
        self.entities.ids.get(name).copied()
    }

    pub fn relation_id(&self, name: &str) -> Option<u32> {
        self.relations.ids.get(name).copied()
    }

    pub fn timestamp_id(&self, name: &str) -> Option<u32> {
        self.timestamps.ids.get(name).copied()
    }

    pub fn entity(&self, id: u32) -> Option<&str> {
        self.entities.names.get(id as usize).map(String::as_str)
    }

    pub fn relation(&self, id: u32) -> Option<&str> {
        self.relations.names.get(id as usize).map(String::as_str)
    }

    pub fn timestamp(&self, id: u32) -> Option<&str> {
        self.timestamps.names.get(id as usize).map(String::as_str)
    }

    pub fn entities(&self) -> &[String] {
        &self.entities.names
    }

    pub fn relations(&self) -> &[String] {
        &self.relations.names
    }

    pub fn timestamps(&self) -> &[String] {
        &self.timestamps.names
    }
}

/// Encoded train/valid/test splits sharing one vocabulary.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetSplits {
    pub train: Vec<Quadruple>,
    pub valid: Vec<Quadruple>,
    pub test: Vec<Quadruple>,
    pub vocabulary: Vocabulary,
    /// Set once the relation space has been doubled with inverse relations and
    /// the training split carries every inverted fact.
    pub reciprocal: bool,
}

impl DatasetSplits {
    pub fn num_entities(&self) -> usize {
        self.vocabulary.num_entities()
    }

    pub fn num_base_relations(&self) -> usize {
        self.vocabulary.num_relations()
    }

    /// Size of the relation id space seen by the models.
    pub fn num_relations(&self) -> usize {
        if self.reciprocal {
            2 * self.vocabulary.num_relations()
        } else {
            self.vocabulary.num_relations()
        }
    }

    pub fn num_timestamps(&self) -> usize {
        self.vocabulary.num_timestamps()
    }

    pub fn num_facts(&self) -> usize {
        self.train.len() + self.valid.len() + self.test.len()
    }

    /// Checks every id of every split against the vocabulary bounds.
    pub fn validate(&self) -> Result<()> {
        let (ne, nr, nt) = (self.num_entities(), self.num_relations(), self.num_timestamps());
        for q in self.train.iter().chain(&self.valid).chain(&self.test) {
            check_id("entity", q.subject as usize, ne)?;
            check_id("entity", q.object as usize, ne)?;
            check_id("relation", q.relation as usize, nr)?;
            check_id("timestamp", q.timestamp as usize, nt)?;
        }
        Ok(())
    }
}

pub(crate) fn check_id(kind: &'static str, id: usize, count: usize) -> Result<()> {
    if id < count {
        Ok(())
    } else {
        Err(Error::IdOutOfRange { kind, id, count })
    }
}

/// A table of complex row vectors stored as `rows × 2·rank` reals.
///
/// Each row holds all real parts followed by all imaginary parts.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexTable {
    rows: usize,
    rank: usize,
    data: Vec<f64>,
}

impl ComplexTable {
    pub fn zeros(rows: usize, rank: usize) -> Self {
        Self {
            rows,
            rank,
            data: vec![0.0; rows * 2 * rank],
        }
    }

    pub fn from_data(rows: usize, rank: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * 2 * rank {
            return Err(Error::Dimension {
                expected: rows * 2 * rank,
                actual: data.len(),
            });
        }
        Ok(Self { rows, rank, data })
    }

    pub fn from_complex_rows(rows: &[Vec<Complex64>]) -> Result<Self> {
        let rank = rows.first().map_or(0, Vec::len);
        let mut t = Self::zeros(rows.len(), rank);
        for (r, row) in rows.iter().enumerate() {
            if row.len() != rank {
                return Err(Error::Dimension {
                    expected: rank,
                    actual: row.len(),
                });
            }
            for (z, c) in row.iter().enumerate() {
                t.set(r, z, *c);
            }
        }
        Ok(t)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    /// Width of a row in reals (`2·rank`).
    pub fn row_len(&self) -> usize {
        2 * self.rank
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn row(&self, r: usize) -> &[f64] {
        let w = self.row_len();
        &self.data[r * w..(r + 1) * w]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        let w = self.row_len();
        &mut self.data[r * w..(r + 1) * w]
    }

    /// Contiguous storage of rows `start..` (used by the temporal regularisers).
    pub fn rows_from(&self, start: usize) -> &[f64] {
        &self.data[start.min(self.rows) * self.row_len()..]
    }

    pub fn get(&self, r: usize, z: usize) -> Complex64 {
        let row = self.row(r);
        Complex64::new(row[z], row[self.rank + z])
    }

    pub fn set(&mut self, r: usize, z: usize, v: Complex64) {
        let rank = self.rank;
        let row = self.row_mut(r);
        row[z] = v.re;
        row[rank + z] = v.im;
    }

    pub fn complex_row(&self, r: usize) -> Vec<Complex64> {
        (0..self.rank).map(|z| self.get(r, z)).collect()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// `Σ_z a_z · b_z · c_z` in complex arithmetic.
pub fn complex_trilinear(a: &[Complex64], b: &[Complex64], c: &[Complex64]) -> Result<Complex64> {
    if b.len() != a.len() {
        return Err(Error::Dimension {
            expected: a.len(),
            actual: b.len(),
        });
    }
    if c.len() != a.len() {
        return Err(Error::Dimension {
            expected: a.len(),
            actual: c.len(),
        });
    }
    Ok(a.iter().zip(b).zip(c).map(|((a, b), c)| a * b * c).sum())
}

pub fn conjugate(a: &[Complex64]) -> Vec<Complex64> {
    a.iter().map(Complex64::conj).collect()
}
