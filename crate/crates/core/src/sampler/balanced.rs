use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::behaviour::BehaviourLabel;
use crate::error::{Error, Result};

/// Class-balanced batch plan over a labelled sample list.
///
/// Each batch holds `batch_size / classes` samples of every class. A class
/// is drawn from successive random permutations of its samples, so a
/// minority class is repeated as evenly as possible within an epoch and
/// the largest class is seen at least once.
#[derive(Debug, Clone)]
pub struct BalancedBatches {
    by_class: Vec<(BehaviourLabel, Vec<usize>)>,
    batch_size: usize,
    seed: u64,
}

impl BalancedBatches {
    /// `classes` lists the classes every batch must contain.
    pub fn new(
        labels: &[BehaviourLabel],
        classes: &[BehaviourLabel],
        batch_size: usize,
        seed: u64,
    ) -> Result<Self> {
        if classes.is_empty() {
            return Err(Error::Config("no classes to balance".into()));
        }
        if batch_size == 0 || batch_size % classes.len() != 0 {
            return Err(Error::Config(format!(
                "batch size {batch_size} is not divisible by the {} classes",
                classes.len()
            )));
        }
        let by_class: Vec<_> = classes
            .iter()
            .map(|&c| {
                let idx = labels.iter().enumerate().filter(|(_, &l)| l == c).map(|(i, _)| i).collect();
                (c, idx)
            })
            .collect();
        let empty: Vec<&str> = by_class
            .iter()
            .filter(|(_, idx): &&(_, Vec<usize>)| idx.is_empty())
            .map(|(c, _)| c.as_str())
            .collect();
        if !empty.is_empty() {
            return Err(Error::Config(format!("classes with no samples: {}", empty.join(", "))));
        }
        Ok(Self { by_class, batch_size, seed })
    }

    pub fn batch_size(&self) -> usize {
        self.batch_size
    }

    pub fn batches_per_epoch(&self) -> usize {
        let max = self.by_class.iter().map(|(_, v)| v.len()).max().unwrap_or(0);
        (max * self.by_class.len()).div_ceil(self.batch_size)
    }

    /// Batches of sample indices for `epoch`; the same `(seed, epoch)`
    /// always yields the same plan.
    pub fn epoch(&self, epoch: u64) -> Vec<Vec<usize>> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(epoch);
        let per_class = self.batch_size / self.by_class.len();
        let n_batches = self.batches_per_epoch();
        let draws: Vec<Vec<usize>> = self
            .by_class
            .iter()
            .map(|(_, idx)| {
                let mut out = Vec::with_capacity(n_batches * per_class);
                while out.len() < n_batches * per_class {
                    let mut perm = idx.clone();
                    perm.shuffle(&mut rng);
                    out.extend(perm);
                }
                out.truncate(n_batches * per_class);
                out
            })
            .collect();
        (0..n_batches)
            .map(|b| {
                let mut batch: Vec<usize> = draws
                    .iter()
                    .flat_map(|d| d[b * per_class..(b + 1) * per_class].iter().copied())
                    .collect();
                batch.shuffle(&mut rng);
                batch
            })
            .collect()
    }
}

/// Plain shuffled batches with no class balancing; the last batch may be short.
pub fn shuffled_batches(n: usize, batch_size: usize, seed: u64, epoch: u64) -> Vec<Vec<usize>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(epoch);
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut rng);
    idx.chunks(batch_size.max(1)).map(|c| c.to_vec()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use BehaviourLabel::*;

    #[test]
    fn nine_classes_one_each() {
        let labels: Vec<_> = BehaviourLabel::ALL.iter().flat_map(|&c| std::iter::repeat(c).take(3 + c.index())).collect();
        let plan = BalancedBatches::new(&labels, &BehaviourLabel::ALL, 9, 1).unwrap();
        for batch in plan.epoch(0) {
            let mut seen: Vec<_> = batch.iter().map(|&i| labels[i].index()).collect();
            seen.sort();
            assert_eq!(seen, (0..9).collect::<Vec<_>>());
        }
    }

    #[test]
    fn minority_is_oversampled() {
        let mut labels = vec![Walking; 100];
        labels.extend([Running; 2]);
        let plan = BalancedBatches::new(&labels, &[Walking, Running], 2, 5).unwrap();
        let epoch = plan.epoch(0);
        assert_eq!(epoch.len(), 100);
        let count = |i| epoch.iter().flatten().filter(|&&j| j == i).count();
        assert_eq!((count(100), count(101)), (50, 50));
        assert!((0..100).all(|i| count(i) == 1));
    }

    #[test]
    fn contract_errors() {
        let labels = vec![Walking; 4];
        assert!(matches!(BalancedBatches::new(&labels, &BehaviourLabel::ALL, 10, 0), Err(Error::Config(_))));
        let err = BalancedBatches::new(&labels, &[Walking, Running], 2, 0).unwrap_err();
        assert!(err.to_string().contains("running"), "{err}");
    }

    #[test]
    fn deterministic_per_seed_and_epoch() {
        let labels: Vec<_> = (0..30).map(|i| if i % 3 == 0 { Sitting } else { Standing }).collect();
        let a = BalancedBatches::new(&labels, &[Sitting, Standing], 4, 9).unwrap();
        assert_eq!(a.epoch(3), a.epoch(3));
        assert_ne!(a.epoch(3), a.epoch(4));
    }

    #[test]
    fn shuffled_covers_everything_once() {
        let mut all: Vec<_> = shuffled_batches(23, 5, 2, 0).concat();
        all.sort();
        assert_eq!(all, (0..23).collect::<Vec<_>>());
    }

    proptest! {
        #[test]
        fn every_batch_is_uniform(counts in proptest::collection::vec(1usize..20, 2..6), per in 1usize..3, seed in any::<u64>()) {
            let classes: Vec<_> = BehaviourLabel::ALL[..counts.len()].to_vec();
            let labels: Vec<_> = counts.iter().zip(&classes).flat_map(|(&n, &c)| std::iter::repeat(c).take(n)).collect();
            let plan = BalancedBatches::new(&labels, &classes, per * classes.len(), seed).unwrap();
            let epoch = plan.epoch(0);
            let max = *counts.iter().max().unwrap();
            prop_assert_eq!(epoch.len(), (max * classes.len()).div_ceil(per * classes.len()));
            for batch in &epoch {
                for &c in &classes {
                    prop_assert_eq!(batch.iter().filter(|&&i| labels[i] == c).count(), per);
                }
            }
        }
    }
}
