use std::fmt::{self, Write as _};

use serde::{Deserialize, Serialize};

use super::chunks::{extract_chunks_in, Chunk};
use crate::corpus::{EventType, Label, NUM_TYPES};
use crate::error::{contract, Result};

/// Chunk counts with derived percentages.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Counts {
    pub gold: usize,
    pub predicted: usize,
    pub correct: usize,
}

impl Counts {
    /// Zero when nothing was predicted, as in the original conlleval script.
    pub fn precision(&self) -> f64 {
        ratio(self.correct, self.predicted)
    }

    pub fn recall(&self) -> f64 {
        ratio(self.correct, self.gold)
    }

    pub fn f1(&self) -> f64 {
        f1(self.precision(), self.recall())
    }

    fn add(&mut self, other: Counts) {
        self.gold += other.gold;
        self.predicted += other.predicted;
        self.correct += other.correct;
    }
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        100.0 * num as f64 / den as f64
    }
}

fn f1(p: f64, r: f64) -> f64 {
    if p + r > 0.0 {
        2.0 * p * r / (p + r)
    } else {
        0.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    /// Indexed by annotation type.
    pub per_type: Vec<Counts>,
    pub overall: Counts,
}

impl ScoreReport {
    pub fn f1(&self) -> f64 {
        self.overall.f1()
    }

    pub fn type_counts(&self, t: EventType) -> Counts {
        self.per_type[t.index()]
    }

    /// Tab-separated report: one row per type, then `ALL`.
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("type\tprecision\trecall\tf1\tgold\tpredicted\tcorrect\n");
        let rows = EventType::all()
            .map(|t| (t.name(), self.per_type[t.index()]))
            .chain(std::iter::once(("ALL", self.overall)));
        for (name, c) in rows {
            writeln!(
                out,
                "{name}\t{:.4}\t{:.4}\t{:.4}\t{}\t{}\t{}",
                c.precision(),
                c.recall(),
                c.f1(),
                c.gold,
                c.predicted,
                c.correct
            )
            .expect("writing to a string");
        }
        out
    }
}

/// conlleval chunk scoring over aligned sentences.
pub fn chunk_f1(gold: &[Vec<Label>], predicted: &[Vec<Label>]) -> Result<ScoreReport> {
    if gold.len() != predicted.len() {
        return contract(format!("{} gold vs {} predicted sentences", gold.len(), predicted.len()));
    }
    let mut per_type = vec![Counts::default(); NUM_TYPES];
    for (i, (g, p)) in gold.iter().zip(predicted).enumerate() {
        if g.len() != p.len() {
            return contract(format!("sentence {i}: {} gold vs {} predicted labels", g.len(), p.len()));
        }
        let gc = extract_chunks_in(g, i);
        let pc = extract_chunks_in(p, i);
        for c in &gc {
            per_type[c.kind.index()].gold += 1;
        }
        for c in &pc {
            per_type[c.kind.index()].predicted += 1;
        }
        for c in matching(&gc, &pc) {
            per_type[c.kind.index()].correct += 1;
        }
    }
    let mut overall = Counts::default();
    per_type.iter().for_each(|&c| overall.add(c));
    Ok(ScoreReport { per_type, overall })
}

/// Chunks present in both lists; extraction yields them sorted.
fn matching<'c>(a: &'c [Chunk], b: &'c [Chunk]) -> impl Iterator<Item = &'c Chunk> {
    a.iter().filter(move |c| b.binary_search(c).is_ok())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BinaryMetrics {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Confusion metrics in percent. A probability equal to the threshold counts
/// as positive.
pub fn binary_metrics(gold: &[bool], probs: &[f64], threshold: f64) -> Result<BinaryMetrics> {
    if gold.is_empty() || gold.len() != probs.len() {
        return contract(format!("binary metrics over {} labels and {} scores", gold.len(), probs.len()));
    }
    let (mut tp, mut fp, mut fneg, mut tn) = (0, 0, 0, 0);
    for (&g, &p) in gold.iter().zip(probs) {
        match (g, p >= threshold) {
            (true, true) => tp += 1,
            (false, true) => fp += 1,
            (true, false) => fneg += 1,
            (false, false) => tn += 1,
        }
    }
    let precision = ratio(tp, tp + fp);
    let recall = ratio(tp, tp + fneg);
    Ok(BinaryMetrics {
        accuracy: ratio(tp + tn, gold.len()),
        precision,
        recall,
        f1: f1(precision, recall),
    })
}

/// Mean and sample standard deviation of a set of runs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AggregateResult {
    pub mean: f64,
    pub std: f64,
    pub runs: usize,
}

impl fmt::Display for AggregateResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.4} ± {:.4}", self.mean, self.std)
    }
}

pub fn aggregate_runs(values: &[f64]) -> Result<AggregateResult> {
    if values.is_empty() {
        return contract("aggregate of zero runs");
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let std = if values.len() == 1 {
        0.0
    } else {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    };
    Ok(AggregateResult {
        mean,
        std,
        runs: values.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::sample::example_labels;

    fn trigger_only() -> Vec<Label> {
        example_labels()
            .into_iter()
            .map(|l| match l.event_type() {
                Some(t) if t.name() == "trigger" => l,
                _ => Label::O,
            })
            .collect()
    }

    #[test]
    fn self_match_is_perfect() {
        let g = vec![example_labels()];
        let r = chunk_f1(&g, &g).unwrap();
        assert_eq!((r.overall.precision(), r.overall.recall(), r.f1()), (100.0, 100.0, 100.0));
    }

    #[test]
    fn all_outside_prediction_scores_zero() {
        let g = vec![example_labels()];
        let p = vec![vec![Label::O; 16]];
        let r = chunk_f1(&g, &p).unwrap();
        assert_eq!(r.f1(), 0.0);
        assert_eq!(r.overall.precision(), 0.0);
    }

    #[test]
    fn trigger_only_prediction() {
        let r = chunk_f1(&[example_labels()], &[trigger_only()]).unwrap();
        assert_eq!(r.overall, Counts { gold: 5, predicted: 1, correct: 1 });
        assert_eq!(r.overall.precision(), 100.0);
        assert_eq!(r.overall.recall(), 20.0);
        assert!((r.f1() - 33.333_333).abs() < 1e-4);
    }

    #[test]
    fn swapping_roles_swaps_precision_and_recall() {
        let a = chunk_f1(&[example_labels()], &[trigger_only()]).unwrap();
        let b = chunk_f1(&[trigger_only()], &[example_labels()]).unwrap();
        assert_eq!(a.overall.precision(), b.overall.recall());
        assert_eq!(a.overall.recall(), b.overall.precision());
    }

    #[test]
    fn length_mismatch_is_an_error() {
        assert!(chunk_f1(&[example_labels()], &[]).is_err());
        assert!(chunk_f1(&[example_labels()], &[vec![Label::O]]).is_err());
    }

    #[test]
    fn tsv_has_header_and_eight_rows() {
        let tsv = chunk_f1(&[example_labels()], &[trigger_only()]).unwrap().to_tsv();
        let lines: Vec<&str> = tsv.lines().collect();
        assert_eq!(lines.len(), 9);
        assert!(lines[8].starts_with("ALL\t100.0000\t20.0000\t33.3333\t5\t1\t1"));
        assert!(lines.iter().all(|l| l.split('\t').count() == 7));
    }

    #[test]
    fn binary_cases() {
        let m = binary_metrics(&[true, false], &[0.9, 0.1], 0.5).unwrap();
        assert_eq!((m.accuracy, m.precision, m.recall, m.f1), (100.0, 100.0, 100.0, 100.0));
        let m = binary_metrics(&[true, false, true, false], &[0.1; 4], 0.5).unwrap();
        assert_eq!(m.recall, 0.0);
        let m = binary_metrics(&[true], &[0.5], 0.5).unwrap();
        assert_eq!(m.recall, 100.0);
        assert!(binary_metrics(&[], &[], 0.5).is_err());
    }

    #[test]
    fn aggregates() {
        let a = aggregate_runs(&[64.0, 64.0, 64.0]).unwrap();
        assert_eq!((a.mean, a.std), (64.0, 0.0));
        let a = aggregate_runs(&[1.0, 2.0, 3.0]).unwrap();
        assert_eq!((a.mean, a.std), (2.0, 1.0));
        let a = aggregate_runs(&[50.0]).unwrap();
        assert_eq!((a.mean, a.std, a.runs), (50.0, 0.0, 1));
        assert_eq!(aggregate_runs(&[64.0, 64.5, 64.5]).unwrap().to_string(), "64.3333 ± 0.2887");
        assert!(aggregate_runs(&[]).is_err());
    }
}
