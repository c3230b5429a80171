use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative sizes of the train, validation and test partitions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitRatio {
    pub train: u32,
    pub val: u32,
    pub test: u32,
}

impl SplitRatio {
    pub const fn new(train: u32, val: u32, test: u32) -> Self {
        Self { train, val, test }
    }

    /// Partition sizes for `n` items, largest-remainder rounding with ties
    /// going to the earlier partition.
    pub fn sizes(&self, n: usize) -> [usize; 3] {
        let parts = [self.train, self.val, self.test];
        let total: u64 = parts.iter().map(|&p| p as u64).sum();
        let mut sizes = [0usize; 3];
        let mut remainders = [(0u64, 0usize); 3];
        for (i, &p) in parts.iter().enumerate() {
            let scaled = p as u64 * n as u64;
            sizes[i] = (scaled / total) as usize;
            remainders[i] = (scaled % total, i);
        }
        let mut left = n - sizes.iter().sum::<usize>();
        remainders.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
        for &(_, i) in remainders.iter() {
            if left == 0 {
                break;
            }
            sizes[i] += 1;
            left -= 1;
        }
        sizes
    }
}

impl Default for SplitRatio {
    fn default() -> Self {
        Self::new(400, 25, 75)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusSplit {
    pub train: Vec<String>,
    pub val: Vec<String>,
    pub test: Vec<String>,
    pub seed: u64,
}

impl CorpusSplit {
    pub fn all(&self) -> BTreeSet<&str> {
        self.train
            .iter()
            .chain(&self.val)
            .chain(&self.test)
            .map(String::as_str)
            .collect()
    }
}

/// Deterministic shuffled split. Input order does not matter: ids are
/// sorted before the seeded shuffle.
pub fn split_corpus(video_ids: &[String], ratio: SplitRatio, seed: u64) -> Result<CorpusSplit> {
    if video_ids.is_empty() {
        return Err(Error::Config("cannot split an empty set of videos".into()));
    }
    let parts = [ratio.train, ratio.val, ratio.test];
    let nonzero = parts.iter().filter(|&&p| p > 0).count();
    if nonzero == 0 {
        return Err(Error::Config("split ratio has no positive part".into()));
    }
    let mut ids: Vec<String> = video_ids.to_vec();
    ids.sort();
    ids.dedup();
    if ids.len() != video_ids.len() {
        return Err(Error::Config("duplicate video ids in split input".into()));
    }
    if ids.len() < nonzero {
        return Err(Error::Config(format!(
            "{} videos cannot fill {nonzero} partitions",
            ids.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    ids.shuffle(&mut rng);
    let [a, b, _] = ratio.sizes(ids.len());
    let test = ids.split_off(a + b);
    let val = ids.split_off(a);
    Ok(CorpusSplit {
        train: ids,
        val,
        test,
        seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ids(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("vid{i:03}")).collect()
    }

    #[test]
    fn full_scale_ratio() {
        let s = split_corpus(&ids(500), SplitRatio::default(), 0).unwrap();
        assert_eq!((s.train.len(), s.val.len(), s.test.len()), (400, 25, 75));
    }

    #[test]
    fn deterministic_for_fixed_seed_and_input_order_independent() {
        let a = split_corpus(&ids(20), SplitRatio::new(16, 1, 3), 1).unwrap();
        let b = split_corpus(&ids(20), SplitRatio::new(16, 1, 3), 1).unwrap();
        assert_eq!(a, b);
        let mut rev = ids(20);
        rev.reverse();
        assert_eq!(split_corpus(&rev, SplitRatio::new(16, 1, 3), 1).unwrap(), a);
        assert_ne!(split_corpus(&ids(20), SplitRatio::new(16, 1, 3), 2).unwrap(), a);
    }

    #[test]
    fn partitions_are_disjoint_and_cover_everything() {
        let all = ids(100);
        let s = split_corpus(&all, SplitRatio::new(80, 5, 15), 3).unwrap();
        assert_eq!((s.train.len(), s.val.len(), s.test.len()), (80, 5, 15));
        let train: BTreeSet<_> = s.train.iter().collect();
        let val: BTreeSet<_> = s.val.iter().collect();
        let test: BTreeSet<_> = s.test.iter().collect();
        assert!(train.is_disjoint(&val) && train.is_disjoint(&test) && val.is_disjoint(&test));
        let union: BTreeSet<_> = train.union(&val).chain(test.iter()).copied().collect();
        assert_eq!(union, all.iter().collect());
    }

    #[test]
    fn largest_remainder_rounding() {
        // 50 * (400, 25, 75) / 500 = (40, 2.5, 7.5): the tie goes to val.
        assert_eq!(SplitRatio::default().sizes(50), [40, 3, 7]);
        assert_eq!(SplitRatio::default().sizes(7), [6, 0, 1]);
        for n in 1..300 {
            assert_eq!(SplitRatio::new(3, 1, 1).sizes(n).iter().sum::<usize>(), n);
        }
    }

    #[test]
    fn errors() {
        assert!(split_corpus(&[], SplitRatio::default(), 0).is_err());
        assert!(split_corpus(&ids(2), SplitRatio::default(), 0).is_err());
        assert!(split_corpus(&ids(2), SplitRatio::new(1, 0, 1), 0).is_ok());
    }
}
