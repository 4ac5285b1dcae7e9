use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::corpus::{ten_step_schedule, TINY_SCHEDULE};
use crate::error::{Error, Result};
use crate::model::ModelConfig;
use crate::training::{TrainConfig, Variation};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ExperimentSet {
    #[serde(rename = "1")]
    One,
    #[serde(rename = "2")]
    Two,
    #[serde(rename = "3")]
    Three,
    #[serde(rename = "3.1")]
    ThreeOne,
    #[serde(rename = "3.2")]
    ThreeTwo,
}

impl ExperimentSet {
    pub fn id(self) -> &'static str {
        match self {
            ExperimentSet::One => "1",
            ExperimentSet::Two => "2",
            ExperimentSet::Three => "3",
            ExperimentSet::ThreeOne => "3.1",
            ExperimentSet::ThreeTwo => "3.2",
        }
    }

    /// Sets that add coarse-only extra documents.
    pub fn uses_extra(self) -> bool {
        matches!(self, ExperimentSet::Three | ExperimentSet::ThreeOne | ExperimentSet::ThreeTwo)
    }
}

impl fmt::Display for ExperimentSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for ExperimentSet {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "1" => Ok(ExperimentSet::One),
            "2" => Ok(ExperimentSet::Two),
            "3" => Ok(ExperimentSet::Three),
            "3.1" => Ok(ExperimentSet::ThreeOne),
            "3.2" => Ok(ExperimentSet::ThreeTwo),
            _ => Err(Error::Config(format!("unknown experiment set {s:?}"))),
        }
    }
}

/// Where the coarse-only extra documents of a regime come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExtraSource {
    None,
    /// Every document discarded from the regime.
    DiscardedComplement,
    /// The last `n` documents of the slicing permutation, for every regime.
    Fixed(usize),
}

/// One resolved experiment set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentPlan {
    pub set: ExperimentSet,
    pub corpus_size: usize,
    /// Kept document counts, strictly descending.
    pub schedule: Vec<usize>,
    pub extra: ExtraSource,
    pub negatives: bool,
    /// Label the sentences of mixed-in negative documents negative.
    pub negatives_sentence_labels: bool,
    /// Keep sentence labels on coarse-only extra documents.
    pub extra_sentence_labels: bool,
    pub variations: Vec<Variation>,
    pub seeds: usize,
    pub base_seed: u64,
    /// Seed of the slicing permutation and negative sampling.
    pub data_seed: u64,
    pub model: ModelConfig,
    pub train: TrainConfig,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct PlanOverrides {
    pub schedule: Option<Vec<usize>>,
    pub extra: Option<ExtraSource>,
    pub negatives: Option<bool>,
    pub negatives_sentence_labels: Option<bool>,
    pub extra_sentence_labels: Option<bool>,
    pub variations: Option<Vec<Variation>>,
    pub seeds: Option<usize>,
    pub base_seed: Option<u64>,
    pub data_seed: Option<u64>,
    pub model: Option<ModelConfig>,
    pub train: Option<TrainConfig>,
}

/// One training run of a plan.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Cell {
    pub regime: usize,
    pub kept: usize,
    pub extra: usize,
    pub variation: Variation,
    pub repeat: usize,
    pub seed: u64,
}

impl ExperimentPlan {
    /// Extra documents available to a regime keeping `kept` documents.
    pub fn extra_count(&self, kept: usize) -> usize {
        match self.extra {
            ExtraSource::None => 0,
            ExtraSource::DiscardedComplement => self.corpus_size - kept,
            ExtraSource::Fixed(n) => n,
        }
    }

    /// Negative documents mixed in for a regime.
    pub fn negative_count(&self, kept: usize) -> usize {
        if self.negatives {
            kept + self.extra_count(kept)
        } else {
            0
        }
    }

    /// Cells in regime, variation, repeat order. The seed of a cell is
    /// `base_seed` plus its index in the full four-variation grid, so a
    /// cell keeps its seed whichever variations a plan runs.
    pub fn cells(&self) -> Vec<Cell> {
        let mut out = Vec::new();
        for (r, &kept) in self.schedule.iter().enumerate() {
            for v in Variation::ALL {
                if !self.variations.contains(&v) {
                    continue;
                }
                let vi = Variation::ALL.iter().position(|&x| x == v).expect("listed");
                for repeat in 0..self.seeds {
                    let index = ((r * Variation::ALL.len() + vi) * self.seeds + repeat) as u64;
                    out.push(Cell {
                        regime: r,
                        kept,
                        extra: self.extra_count(kept),
                        variation: v,
                        repeat,
                        seed: self.base_seed.wrapping_add(index),
                    });
                }
            }
        }
        out
    }
}

fn default_variations(set: ExperimentSet) -> Vec<Variation> {
    match set {
        ExperimentSet::Two => vec![Variation::Doc, Variation::SentDoc],
        _ => Variation::ALL.to_vec(),
    }
}

/// Resolves a set's defaults and checks overrides against its definition.
pub fn build_plan(set: ExperimentSet, corpus_size: usize, overrides: &PlanOverrides) -> Result<ExperimentPlan> {
    let bad = |m: String| Err(Error::Config(format!("set {set}: {m}")));
    let n = corpus_size;
    let default_schedule = match set {
        ExperimentSet::ThreeTwo => TINY_SCHEDULE.to_vec(),
        ExperimentSet::ThreeOne => ten_step_schedule(n).into_iter().skip(5).collect(),
        _ => ten_step_schedule(n),
    };
    let default_extra = match set {
        ExperimentSet::One | ExperimentSet::Two => ExtraSource::None,
        ExperimentSet::Three | ExperimentSet::ThreeTwo => ExtraSource::DiscardedComplement,
        ExperimentSet::ThreeOne => ExtraSource::Fixed(n - n / 2),
    };
    let plan = ExperimentPlan {
        set,
        corpus_size: n,
        schedule: overrides.schedule.clone().unwrap_or(default_schedule),
        extra: overrides.extra.unwrap_or(default_extra),
        negatives: overrides.negatives.unwrap_or(set != ExperimentSet::One),
        negatives_sentence_labels: overrides.negatives_sentence_labels.unwrap_or(true),
        extra_sentence_labels: overrides.extra_sentence_labels.unwrap_or(true),
        variations: overrides.variations.clone().unwrap_or_else(|| default_variations(set)),
        seeds: overrides.seeds.unwrap_or(3),
        base_seed: overrides.base_seed.unwrap_or(0),
        data_seed: overrides.data_seed.unwrap_or(0),
        model: overrides.model.clone().unwrap_or_default(),
        train: overrides.train.unwrap_or_default(),
    };
    plan.model.validate()?;
    plan.train.validate()?;
    match set {
        ExperimentSet::One if plan.negatives || plan.extra != ExtraSource::None => {
            return bad("uses neither negatives nor extra data".into());
        }
        ExperimentSet::Two => {
            if !plan.negatives || plan.extra != ExtraSource::None {
                return bad("mixes negatives and uses no extra data".into());
            }
            if plan.variations.iter().any(|v| !matches!(v, Variation::Doc | Variation::SentDoc)) {
                return bad("runs only the doc and sent+doc variations".into());
            }
        }
        ExperimentSet::Three | ExperimentSet::ThreeTwo
            if !plan.negatives || plan.extra != ExtraSource::DiscardedComplement =>
        {
            return bad("mixes negatives and uses the discarded complement as extra data".into());
        }
        ExperimentSet::ThreeOne => {
            if !plan.negatives || !matches!(plan.extra, ExtraSource::Fixed(_)) {
                return bad("mixes negatives and uses a fixed extra subset".into());
            }
        }
        _ => {}
    }
    if plan.schedule.is_empty() {
        return bad("empty schedule".into());
    }
    if plan.schedule.windows(2).any(|w| w[0] <= w[1]) || plan.schedule.contains(&0) {
        return bad(format!("schedule {:?} must be positive and strictly descending", plan.schedule));
    }
    let room = match plan.extra {
        ExtraSource::Fixed(e) => n.saturating_sub(e),
        _ => n,
    };
    if plan.schedule[0] > room {
        return bad(format!("corpus of {n} documents cannot keep {} (room {room})", plan.schedule[0]));
    }
    if plan.variations.is_empty() {
        return bad("no variations".into());
    }
    let mut sorted = plan.variations.clone();
    sorted.sort();
    sorted.dedup();
    if sorted.len() != plan.variations.len() {
        return bad("duplicate variations".into());
    }
    if plan.seeds == 0 {
        return bad("at least one seed".into());
    }
    Ok(plan)
}
