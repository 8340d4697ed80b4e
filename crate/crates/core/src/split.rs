//! Stratified two-step train / validation / test assignment.
//!
//! Records are grouped by (source, has-annotations). Within each stratum,
//! records are sorted by image id and permuted by a ChaCha stream seeded
//! from the plan seed and the stratum key. The held-out test share is drawn
//! first, `ceil(n * test)`; the remainder is then split into validation,
//! `round(rest * val / (train + val))`, and training.

use std::collections::BTreeMap;
use std::fmt;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::dedup::content_digest;
use crate::error::{Error, Result};
use crate::model::{ImageRecord, Split};

/// Strata smaller than this go entirely to training.
pub const MIN_STRATUM: usize = 3;

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct StratumKey {
    pub source: String,
    pub has_annotations: bool,
}

impl fmt::Display for StratumKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let kind = if self.has_annotations { "pos" } else { "neg" };
        write!(f, "{}:{kind}", self.source)
    }
}

pub fn stratum_key(record: &ImageRecord) -> StratumKey {
    StratumKey {
        source: record.source.clone(),
        has_annotations: record.has_annotations(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitPlan {
    pub train: f64,
    pub val: f64,
    pub test: f64,
    pub seed: u64,
}

impl Default for SplitPlan {
    fn default() -> Self {
        Self {
            train: 0.70,
            val: 0.20,
            test: 0.10,
            seed: 0,
        }
    }
}

impl SplitPlan {
    pub fn validate(&self) -> Result<()> {
        for (name, r) in [("train", self.train), ("val", self.val), ("test", self.test)] {
            if !(r > 0.0 && r < 1.0) {
                return Err(Error::InvalidParameter(format!("{name} ratio {r} not in (0,1)")));
            }
        }
        let sum = self.train + self.val + self.test;
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidParameter(format!("split ratios sum to {sum}, not 1")));
        }
        Ok(())
    }

    /// Sizes `(train, val, test)` for a stratum of `n` records.
    pub fn stratum_sizes(&self, n: usize) -> (usize, usize, usize) {
        if n < MIN_STRATUM {
            return (n, 0, 0);
        }
        // Guard against products such as 10 * 0.1 = 1.0000000000000002.
        let n_test = ((n as f64 * self.test) - 1e-9).ceil().max(0.0) as usize;
        let rest = n - n_test.min(n);
        let n_val = (rest as f64 * self.val / (self.train + self.val)).round() as usize;
        let n_val = n_val.min(rest);
        (rest - n_val, n_val, n_test.min(n))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StratumSummary {
    pub key: StratumKey,
    pub n: usize,
    pub n_train: usize,
    pub n_val: usize,
    pub n_test: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplitOutcome {
    /// Assignment per input record, in input order.
    pub assignments: Vec<Split>,
    pub strata: Vec<StratumSummary>,
    pub warnings: Vec<String>,
}

impl SplitOutcome {
    pub fn count(&self, split: Split) -> usize {
        self.assignments.iter().filter(|s| **s == split).count()
    }
}

fn stratum_seed(seed: u64, key: &StratumKey) -> u64 {
    let digest = content_digest(key.to_string().as_bytes()).0;
    seed ^ u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"))
}

/// Assigns every record to exactly one split.
pub fn two_step_split(records: &[ImageRecord], plan: &SplitPlan) -> Result<SplitOutcome> {
    plan.validate()?;
    if records.is_empty() {
        return Err(Error::InvalidParameter("cannot split an empty record set".into()));
    }
    let mut strata: BTreeMap<StratumKey, Vec<usize>> = BTreeMap::new();
    for (i, r) in records.iter().enumerate() {
        strata.entry(stratum_key(r)).or_default().push(i);
    }
    let mut assignments = vec![Split::Unassigned; records.len()];
    let mut summaries = Vec::with_capacity(strata.len());
    let mut warnings = Vec::new();
    for (key, mut members) in strata {
        let n = members.len();
        if n < MIN_STRATUM {
            warnings.push(format!(
                "stratum {key} has only {n} record(s); all assigned to train"
            ));
        }
        members.sort_by(|&a, &b| records[a].image_id.cmp(&records[b].image_id));
        let mut rng = ChaCha8Rng::seed_from_u64(stratum_seed(plan.seed, &key));
        members.shuffle(&mut rng);
        let (n_train, n_val, n_test) = plan.stratum_sizes(n);
        for (pos, &i) in members.iter().enumerate() {
            assignments[i] = if pos < n_test {
                Split::Test
            } else if pos < n_test + n_val {
                Split::Val
            } else {
                Split::Train
            };
        }
        summaries.push(StratumSummary {
            key,
            n,
            n_train,
            n_val,
            n_test,
        });
    }
    Ok(SplitOutcome {
        assignments,
        strata: summaries,
        warnings,
    })
}

/// Summary CSV: `stratum,n,n_train,n_val,n_test`.
pub fn write_split_summary<W: std::io::Write>(out: W, plan: &SplitPlan, strata: &[StratumSummary]) -> Result<()> {
    let mut out = out;
    writeln!(
        out,
        "# ratios={}/{}/{}; seed={}; test=ceil(n*test), val=round(rest*val/(train+val)); strata<{MIN_STRATUM} -> train",
        plan.train, plan.val, plan.test, plan.seed
    )
    .map_err(|e| Error::io("split summary", e))?;
    let ctx = "split summary";
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["stratum", "n", "n_train", "n_val", "n_test"])
        .map_err(|e| Error::csv(ctx, e))?;
    for s in strata {
        w.write_record([
            s.key.to_string(),
            s.n.to_string(),
            s.n_train.to_string(),
            s.n_val.to_string(),
            s.n_test.to_string(),
        ])
        .map_err(|e| Error::csv(ctx, e))?;
    }
    w.flush().map_err(|e| Error::io(ctx, e))?;
    Ok(())
}
