use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::behaviour::{BehaviourLabel, NUM_BEHAVIOURS};
use crate::error::{Error, Result};
use crate::nn::Tensor;
use crate::sampler::SequenceSample;

fn check(logits: &Tensor, targets: &[usize], k: usize) -> Result<usize> {
    let s = logits.shape();
    if targets.is_empty() || s.len() != 2 || s[0] != targets.len() {
        return Err(Error::Contract(format!("need a non-empty batch of logits matching {} targets, got {s:?}", targets.len())));
    }
    if k == 0 || k > s[1] {
        return Err(Error::Contract(format!("k = {k} is outside [1, {}]", s[1])));
    }
    if let Some(t) = targets.iter().find(|&&t| t >= s[1]) {
        return Err(Error::Contract(format!("target {t} out of range")));
    }
    Ok(s[1])
}

/// Position of class `t` in the ranking of `row`; higher logits first,
/// ties go to the lower class index.
pub fn rank_of(row: &[f32], t: usize) -> usize {
    row.iter()
        .enumerate()
        .filter(|&(j, &v)| v > row[t] || (v == row[t] && j < t))
        .count()
}

/// Class indices from best to worst under the same tie rule.
pub fn ranking(row: &[f32]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..row.len()).collect();
    idx.sort_by(|&a, &b| row[b].total_cmp(&row[a]).then(a.cmp(&b)));
    idx
}

/// Fraction of rows whose target is among the `k` best-scored classes.
pub fn topk_accuracy(logits: &Tensor, targets: &[usize], k: usize) -> Result<f64> {
    let c = check(logits, targets, k)?;
    let hits = targets
        .iter()
        .enumerate()
        .filter(|&(i, &t)| rank_of(&logits.data()[i * c..(i + 1) * c], t) < k)
        .count();
    Ok(hits as f64 / targets.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub sample_id: String,
    pub video_id: String,
    pub ape_id: u32,
    pub start_frame: u32,
    pub sequence_length: usize,
    pub truth: BehaviourLabel,
    /// All classes, best first.
    pub ranked: Vec<BehaviourLabel>,
}

impl SampleRecord {
    pub fn predicted(&self) -> BehaviourLabel {
        self.ranked[0]
    }
}

/// Accuracy summary over sequence samples. Micro averages weight every
/// sample equally; macro averages weight every class present equally.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub count: usize,
    pub top1: f64,
    pub top3: f64,
    pub macro_top1: f64,
    pub macro_top3: f64,
    /// `confusion[truth][predicted]`, in class-index order.
    pub confusion: Vec<Vec<usize>>,
    pub samples: Vec<SampleRecord>,
}

impl EvalReport {
    pub fn from_logits(samples: &[SequenceSample], logits: &Tensor) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::EmptyEvaluation("no samples to evaluate".into()));
        }
        let targets: Vec<usize> = samples.iter().map(|s| s.label.index()).collect();
        check(logits, &targets, 3.min(logits.channels().max(1)))?;
        let c = logits.channels();
        if c != NUM_BEHAVIOURS {
            return Err(Error::Contract(format!("expected {NUM_BEHAVIOURS} logits per sample, got {c}")));
        }
        let mut records: Vec<SampleRecord> = samples
            .iter()
            .enumerate()
            .map(|(i, s)| SampleRecord {
                sample_id: s.id(),
                video_id: s.video_id.clone(),
                ape_id: s.ape_id,
                start_frame: s.start_frame,
                sequence_length: s.sequence_length,
                truth: s.label,
                ranked: ranking(&logits.data()[i * c..(i + 1) * c])
                    .into_iter()
                    .map(|j| BehaviourLabel::from_index(j).expect("index below class count"))
                    .collect(),
            })
            .collect();
        records.sort_by(|a, b| (&a.video_id, a.ape_id, a.start_frame).cmp(&(&b.video_id, b.ape_id, b.start_frame)));
        Ok(Self::from_records(records))
    }

    pub fn from_records(samples: Vec<SampleRecord>) -> Self {
        let mut confusion = vec![vec![0usize; NUM_BEHAVIOURS]; NUM_BEHAVIOURS];
        let mut per_class: BTreeMap<usize, (usize, usize, usize)> = BTreeMap::new();
        let (mut hit1, mut hit3) = (0, 0);
        for r in &samples {
            let t = r.truth.index();
            confusion[t][r.predicted().index()] += 1;
            let in3 = r.ranked.iter().take(3).any(|&l| l == r.truth);
            let e = per_class.entry(t).or_default();
            e.0 += 1;
            if r.predicted() == r.truth {
                hit1 += 1;
                e.1 += 1;
            }
            if in3 {
                hit3 += 1;
                e.2 += 1;
            }
        }
        let n = samples.len().max(1) as f64;
        let classes = per_class.len().max(1) as f64;
        Self {
            count: samples.len(),
            top1: hit1 as f64 / n,
            top3: hit3 as f64 / n,
            macro_top1: per_class.values().map(|&(c, h, _)| h as f64 / c as f64).sum::<f64>() / classes,
            macro_top3: per_class.values().map(|&(c, _, h)| h as f64 / c as f64).sum::<f64>() / classes,
            confusion,
            samples,
        }
    }

    /// Plain-text summary with the accuracy table and confusion matrix.
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("{:<12} {:>10} {:>10}\n", "", "Top1 (%)", "Top3 (%)"));
        out.push_str(&format!("{:<12} {:>10.2} {:>10.2}\n", "micro", 100.0 * self.top1, 100.0 * self.top3));
        out.push_str(&format!("{:<12} {:>10.2} {:>10.2}\n", "macro", 100.0 * self.macro_top1, 100.0 * self.macro_top3));
        out.push_str(&format!("samples: {}\n\nconfusion (rows = truth, columns = prediction)\n", self.count));
        let short: Vec<String> = BehaviourLabel::ALL.iter().map(|l| l.as_str().chars().take(6).collect()).collect();
        out.push_str(&format!("{:<20}", ""));
        for s in &short {
            out.push_str(&format!("{s:>7}"));
        }
        out.push('\n');
        for (i, row) in self.confusion.iter().enumerate() {
            out.push_str(&format!("{:<20}", BehaviourLabel::ALL[i].as_str()));
            for v in row {
                out.push_str(&format!("{v:>7}"));
            }
            out.push('\n');
        }
        out
    }

    /// Writes `<stem>.json` and `<stem>.txt`.
    pub fn save(&self, dir: &Path, stem: &str) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let json = dir.join(format!("{stem}.json"));
        fs::write(&json, serde_json::to_string_pretty(self)?).map_err(|e| Error::io(&json, e))?;
        let txt = dir.join(format!("{stem}.txt"));
        fs::write(&txt, self.to_table()).map_err(|e| Error::io(&txt, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn hand_built_rankings() {
        // truth (class 0) ranks 1st, 3rd and 4th
        let logits = Tensor::from_vec(
            &[3, 4],
            vec![9.0, 1.0, 2.0, 3.0, 1.0, 3.0, 2.0, 0.0, 0.0, 3.0, 2.0, 1.0],
        );
        let t = [0, 0, 0];
        assert!((topk_accuracy(&logits, &t, 1).unwrap() - 1.0 / 3.0).abs() < 1e-12);
        assert!((topk_accuracy(&logits, &t, 3).unwrap() - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(topk_accuracy(&logits, &t, 4).unwrap(), 1.0);
    }

    #[test]
    fn ties_prefer_lower_index() {
        let row = [1.0, 1.0, 1.0];
        assert_eq!(ranking(&row), vec![0, 1, 2]);
        assert_eq!(rank_of(&row, 2), 2);
        let logits = Tensor::from_vec(&[1, 3], row.to_vec());
        assert_eq!(topk_accuracy(&logits, &[0], 1).unwrap(), 1.0);
        assert_eq!(topk_accuracy(&logits, &[1], 1).unwrap(), 0.0);
    }

    #[test]
    fn contract_errors() {
        let logits = Tensor::from_vec(&[1, 9], vec![0.0; 9]);
        assert!(topk_accuracy(&logits, &[0], 0).is_err());
        assert!(topk_accuracy(&logits, &[0], 10).is_err());
        assert!(topk_accuracy(&Tensor::zeros(&[0, 9]), &[], 1).is_err());
    }

    proptest! {
        #[test]
        fn matches_full_sort_oracle(vals in proptest::collection::vec(-3i32..3, 45), t in proptest::collection::vec(0usize..9, 5)) {
            // small integer logits force plenty of ties
            let logits = Tensor::from_vec(&[5, 9], vals.iter().map(|&v| v as f32).collect());
            let mut last = 0.0;
            for k in 1..=9 {
                let acc = topk_accuracy(&logits, &t, k).unwrap();
                let oracle = (0..5).filter(|&i| {
                    let mut order: Vec<(i32, usize)> = (0..9).map(|j| (-vals[i * 9 + j], j)).collect();
                    order.sort();
                    order.iter().take(k).any(|&(_, j)| j == t[i])
                }).count() as f64 / 5.0;
                prop_assert_eq!(acc, oracle);
                prop_assert!(acc >= last);
                last = acc;
            }
            prop_assert_eq!(last, 1.0);
        }
    }
}
