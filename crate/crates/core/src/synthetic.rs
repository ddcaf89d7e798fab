//! Deterministic toy temporal knowledge graph.
//!
//! Every `(subject i, relation j, timestamp l)` has exactly one true object
//! `(i + shift) mod |E|` with `shift = 3j + 2l + 1`. The shift is additive in
//! `j` and `l`, so rotation-style factorisations can represent the graph
//! exactly. Validation and test splits are fixed subsets of the training facts.

use chrono::{Days, NaiveDate};

use crate::data::{build_dataset, BuildOptions, RawFact};
use crate::error::Result;
use crate::types::DatasetSplits;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SyntheticSpec {
    pub entities: usize,
    pub relations: usize,
    pub timestamps: usize,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            entities: 20,
            relations: 3,
            timestamps: 8,
        }
    }
}

impl SyntheticSpec {
    pub fn object(&self, subject: usize, relation: usize, timestamp: usize) -> usize {
        (subject + 3 * relation + 2 * timestamp + 1) % self.entities
    }

    fn fact(&self, i: usize, j: usize, l: usize) -> RawFact {
        let start = NaiveDate::from_ymd_opt(2014, 1, 1).expect("valid date");
        RawFact {
            subject: format!("e{i:02}"),
            relation: format!("r{j}"),
            object: format!("e{:02}", self.object(i, j, l)),
            time: start.checked_add_days(Days::new(l as u64)),
            modifier: None,
        }
    }

    /// Raw train, validation and test facts.
    pub fn raw(&self) -> (Vec<RawFact>, Vec<RawFact>, Vec<RawFact>) {
        let mut train = Vec::new();
        let (mut valid, mut test) = (Vec::new(), Vec::new());
        for l in 0..self.timestamps {
            for j in 0..self.relations {
                for i in 0..self.entities {
                    let f = self.fact(i, j, l);
                    let n = train.len();
                    if n % 8 == 0 {
                        valid.push(f.clone());
                    } else if n % 8 == 4 {
                        test.push(f.clone());
                    }
                    train.push(f);
                }
            }
        }
        (train, valid, test)
    }

    /// Encoded splits without reciprocal augmentation.
    pub fn dataset(&self) -> Result<DatasetSplits> {
        let (train, valid, test) = self.raw();
        build_dataset(&train, &valid, &test, BuildOptions::default())
    }
}

/// Tab-separated ICEWS-style text for raw facts.
pub fn to_icews_tsv(facts: &[RawFact]) -> String {
    facts
        .iter()
        .map(|f| {
            let date = f.time.map(|d| d.format("%Y-%m-%d").to_string()).unwrap_or_default();
            format!("{}\t{}\t{}\t{}\n", f.subject, f.relation, f.object, date)
        })
        .collect()
}
