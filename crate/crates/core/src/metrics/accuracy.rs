use std::collections::HashMap;
use std::hash::Hash;

use super::MetricsError;

/// Balanced accuracy over `(gold, predicted)` pairs.
///
/// Each sample is weighted by the inverse frequency of its gold class and the
/// weighted fraction of correct predictions is returned; this equals the mean
/// of per-class recall over the classes present in the gold labels. A
/// predicted label that never occurs as a gold label is simply wrong.
pub fn balanced_accuracy<L: Eq + Hash>(pairs: &[(L, L)]) -> Result<f64, MetricsError> {
    if pairs.is_empty() {
        return Err(MetricsError::Empty);
    }
    // One term hit/n per class, summed in sorted order.
    let mut counts: HashMap<&L, (usize, usize)> = HashMap::new();
    for (gold, predicted) in pairs {
        let e = counts.entry(gold).or_insert((0, 0));
        e.1 += 1;
        if gold == predicted {
            e.0 += 1;
        }
    }
    let mut terms: Vec<f64> = counts.values().map(|&(hit, n)| hit as f64 / n as f64).collect();
    terms.sort_by(f64::total_cmp);
    Ok(terms.iter().sum::<f64>() / terms.len() as f64)
}

/// Recall for every gold class, keyed by class.
pub fn per_class_recall<L: Eq + Hash + Clone>(pairs: &[(L, L)]) -> HashMap<L, f64> {
    let mut seen: HashMap<L, (usize, usize)> = HashMap::new();
    for (gold, predicted) in pairs {
        let e = seen.entry(gold.clone()).or_insert((0, 0));
        e.1 += 1;
        if gold == predicted {
            e.0 += 1;
        }
    }
    seen.into_iter()
        .map(|(k, (hit, n))| (k, hit as f64 / n as f64))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_correct() {
        let pairs = [("a", "a"), ("b", "b"), ("c", "c")];
        assert_eq!(balanced_accuracy(&pairs).unwrap(), 1.0);
    }

    #[test]
    fn constant_predictor_on_two_balanced_classes() {
        let pairs = [("a", "a"), ("a", "a"), ("b", "a"), ("b", "a")];
        assert!((balanced_accuracy(&pairs).unwrap() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn three_class_recalls() {
        // recalls 9/10, 8/10, 7/10 -> mean 0.8
        let mut pairs = Vec::new();
        for (class, hits) in [(0, 9), (1, 8), (2, 7)] {
            for i in 0..10 {
                pairs.push((class, if i < hits { class } else { (class + 1) % 3 }));
            }
        }
        assert!((balanced_accuracy(&pairs).unwrap() - 0.8).abs() < 1e-12);
        let recalls = per_class_recall(&pairs);
        assert!((recalls[&0] - 0.9).abs() < 1e-12);
    }

    #[test]
    fn unseen_prediction_is_wrong() {
        let pairs = [("a", "zzz"), ("b", "b")];
        assert_eq!(balanced_accuracy(&pairs).unwrap(), 0.5);
    }

    #[test]
    fn empty_is_error() {
        assert_eq!(balanced_accuracy::<u8>(&[]), Err(MetricsError::Empty));
    }
}
