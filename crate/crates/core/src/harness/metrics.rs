use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Confusion counts with infringing as the positive class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    pub fn_: usize,
}

impl Confusion {
    /// From `(predicted_infringing, actually_pirated)` pairs.
    pub fn from_pairs(pairs: &[(bool, bool)]) -> Self {
        let mut c = Confusion::default();
        for &(pred, truth) in pairs {
            match (pred, truth) {
                (true, true) => c.tp += 1,
                (true, false) => c.fp += 1,
                (false, false) => c.tn += 1,
                (false, true) => c.fn_ += 1,
            }
        }
        c
    }

    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }

    pub fn accuracy(&self) -> f64 {
        (self.tp + self.tn) as f64 / self.total().max(1) as f64
    }

    /// 0 when there are no true positives.
    pub fn f1(&self) -> f64 {
        if self.tp == 0 {
            return 0.0;
        }
        2.0 * self.tp as f64 / (2 * self.tp + self.fp + self.fn_) as f64
    }

    pub fn fpr(&self) -> f64 {
        let neg = self.fp + self.tn;
        if neg == 0 {
            return 0.0;
        }
        self.fp as f64 / neg as f64
    }
}

/// Area under the ROC curve as the probability that a random positive
/// outscores a random negative, ties counting one half.
pub fn auc(scored: &[(f64, bool)]) -> Result<f64> {
    let mut pos: Vec<f64> = scored.iter().filter(|s| s.1).map(|s| s.0).collect();
    let mut neg: Vec<f64> = scored.iter().filter(|s| !s.1).map(|s| s.0).collect();
    if pos.is_empty() || neg.is_empty() {
        return Err(Error::DegenerateGroundTruth(format!(
            "{} positives and {} negatives",
            pos.len(),
            neg.len()
        )));
    }
    pos.sort_by(f64::total_cmp);
    neg.sort_by(f64::total_cmp);
    // for each positive count negatives strictly below and equal
    let mut wins = 0.0;
    let (mut lo, mut hi) = (0usize, 0usize);
    for p in &pos {
        while lo < neg.len() && neg[lo] < *p {
            lo += 1;
        }
        hi = hi.max(lo);
        while hi < neg.len() && neg[hi] <= *p {
            hi += 1;
        }
        wins += lo as f64 + 0.5 * (hi - lo) as f64;
    }
    Ok(wins / (pos.len() * neg.len()) as f64)
}

/// Mean and sample standard deviation across seeds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    pub stddev: f64,
}

impl Stat {
    pub fn of(values: &[f64]) -> Stat {
        let n = values.len();
        if n == 0 {
            return Stat { mean: 0.0, stddev: 0.0 };
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let stddev = if n > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        Stat { mean, stddev }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn brute_auc(scored: &[(f64, bool)]) -> f64 {
        let mut wins = 0.0;
        let mut pairs = 0.0;
        for (p, tp) in scored {
            for (n, tn) in scored {
                if *tp && !*tn {
                    pairs += 1.0;
                    if p > n {
                        wins += 1.0;
                    } else if p == n {
                        wins += 0.5;
                    }
                }
            }
        }
        wins / pairs
    }

    #[test]
    fn perfect_verdicts() {
        let pairs: Vec<(bool, bool)> = (0..10).map(|i| (i < 5, i < 5)).collect();
        let c = Confusion::from_pairs(&pairs);
        assert_eq!(c.accuracy(), 1.0);
        assert_eq!(c.fpr(), 0.0);
        assert_eq!(c.f1(), 1.0);
    }

    #[test]
    fn perfect_ranking() {
        assert_eq!(auc(&[(0.9, true), (0.8, true), (-0.5, false)]).unwrap(), 1.0);
    }

    #[test]
    fn six_artist_table() {
        // (predicted, truth, mean score)
        let table = [
            (true, true, 0.7),
            (false, true, -0.1),
            (true, true, 0.2),
            (true, false, 0.3),
            (false, false, -0.6),
            (false, false, 0.2),
        ];
        let c = Confusion::from_pairs(&table.iter().map(|r| (r.0, r.1)).collect::<Vec<_>>());
        assert_eq!((c.tp, c.fp, c.tn, c.fn_), (2, 1, 2, 1));
        assert!((c.accuracy() - 4.0 / 6.0).abs() < 1e-15);
        assert!((c.f1() - 4.0 / 6.0).abs() < 1e-15);
        assert!((c.fpr() - 1.0 / 3.0).abs() < 1e-15);
        // positives {0.7, -0.1, 0.2} vs negatives {0.3, -0.6, 0.2}:
        // 0.7 beats 3, -0.1 beats 1, 0.2 beats 1 and ties 1 -> 5.5 / 9
        let scored: Vec<(f64, bool)> = table.iter().map(|r| (r.2, r.1)).collect();
        assert!((auc(&scored).unwrap() - 5.5 / 9.0).abs() < 1e-15);
        assert_eq!(auc(&scored).unwrap(), brute_auc(&scored));
    }

    #[test]
    fn auc_needs_both_classes() {
        assert!(matches!(auc(&[(0.1, true)]), Err(Error::DegenerateGroundTruth(_))));
    }

    #[test]
    fn stat_uses_sample_stddev() {
        let s = Stat::of(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(s.mean, 2.5);
        assert!((s.stddev - (5.0f64 / 3.0).sqrt()).abs() < 1e-15);
        assert_eq!(Stat::of(&[0.7]).stddev, 0.0);
    }

    proptest! {
        #[test]
        fn auc_matches_pairwise_oracle(
            scores in prop::collection::vec((-4i32..4, any::<bool>()), 2..30)
        ) {
            let scored: Vec<(f64, bool)> = scores.iter().map(|&(s, t)| (s as f64 / 4.0, t)).collect();
            prop_assume!(scored.iter().any(|s| s.1) && scored.iter().any(|s| !s.1));
            prop_assert!((auc(&scored).unwrap() - brute_auc(&scored)).abs() < 1e-12);
        }

        #[test]
        fn auc_invariant_under_increasing_transform(
            scores in prop::collection::vec((-1.0f64..1.0, any::<bool>()), 2..30)
        ) {
            prop_assume!(scores.iter().any(|s| s.1) && scores.iter().any(|s| !s.1));
            let moved: Vec<(f64, bool)> = scores.iter().map(|&(s, t)| (s.mul_add(3.0, 1.0).exp(), t)).collect();
            prop_assert_eq!(auc(&scores).unwrap(), auc(&moved).unwrap());
        }

        #[test]
        fn confusion_matches_counting(pairs in prop::collection::vec((any::<bool>(), any::<bool>()), 1..40)) {
            let c = Confusion::from_pairs(&pairs);
            let correct = pairs.iter().filter(|(p, t)| p == t).count();
            prop_assert!((c.accuracy() - correct as f64 / pairs.len() as f64).abs() < 1e-15);
            for m in [c.accuracy(), c.f1(), c.fpr()] {
                prop_assert!((0.0..=1.0).contains(&m));
            }
        }
    }
}
