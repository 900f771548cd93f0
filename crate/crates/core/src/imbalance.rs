//! Dataset-level class rebalancing and balanced class weights.

use std::sync::Arc;

use rand::seq::index;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// One (bug report, candidate method) pair.
///
/// Vectors are shared: every instance of a bug points at the same report
/// vector, and resampled copies share storage with their originals.
#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    pub report_vec: Arc<[f64]>,
    pub method_vec: Arc<[f64]>,
    pub label: bool,
    pub bug_id: String,
    pub method_id: String,
    /// Report time, epoch seconds.
    pub report_time: i64,
}

impl Instance {
    pub fn target(&self) -> f64 {
        if self.label {
            1.0
        } else {
            0.0
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ResampleKind {
    Original,
    Ros,
    Rus,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResampleStrategy {
    pub kind: ResampleKind,
    pub rng_seed: u64,
}

/// Anything with a binary label can be rebalanced.
pub trait Labeled {
    fn is_positive(&self) -> bool;
}

impl Labeled for Instance {
    fn is_positive(&self) -> bool {
        self.label
    }
}

fn split_classes<T: Labeled>(items: &[T]) -> (Vec<usize>, Vec<usize>) {
    let mut pos = Vec::new();
    let mut neg = Vec::new();
    for (i, item) in items.iter().enumerate() {
        if item.is_positive() {
            pos.push(i);
        } else {
            neg.push(i);
        }
    }
    (pos, neg)
}

/// Rebalances a training set.
///
/// `Ros` returns the input followed by minority copies drawn uniformly with
/// replacement until the classes are equal. `Rus` keeps the minority and a
/// uniform majority subsample of the same size, in input order.
pub fn resample<T: Labeled + Clone>(items: &[T], strategy: &ResampleStrategy) -> Result<Vec<T>> {
    if strategy.kind == ResampleKind::Original {
        return Ok(items.to_vec());
    }
    let (pos, neg) = split_classes(items);
    if pos.is_empty() {
        return Err(Error::SingleClass("positive"));
    }
    if neg.is_empty() {
        return Err(Error::SingleClass("negative"));
    }
    let (minority, majority) = if pos.len() <= neg.len() { (pos, neg) } else { (neg, pos) };
    let mut rng = ChaCha8Rng::seed_from_u64(strategy.rng_seed);
    match strategy.kind {
        ResampleKind::Original => unreachable!(),
        ResampleKind::Ros => {
            let mut out = items.to_vec();
            out.reserve(majority.len() - minority.len());
            for _ in minority.len()..majority.len() {
                let pick = minority[rng.gen_range(0..minority.len())];
                out.push(items[pick].clone());
            }
            Ok(out)
        }
        ResampleKind::Rus => {
            let mut keep = vec![false; items.len()];
            for &i in &minority {
                keep[i] = true;
            }
            for k in index::sample(&mut rng, majority.len(), minority.len()) {
                keep[majority[k]] = true;
            }
            Ok(items
                .iter()
                .zip(keep)
                .filter(|&(_, k)| k)
                .map(|(item, _)| item.clone())
                .collect())
        }
    }
}

/// Balanced weights `N / (2·N_c)`, returned as `(w_neg, w_pos)`.
pub fn class_weights_auto<T: Labeled>(items: &[T]) -> Result<(f64, f64)> {
    let (pos, neg) = split_classes(items);
    if pos.is_empty() {
        return Err(Error::SingleClass("positive"));
    }
    if neg.is_empty() {
        return Err(Error::SingleClass("negative"));
    }
    let n = items.len() as f64;
    Ok((n / (2.0 * neg.len() as f64), n / (2.0 * pos.len() as f64)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[derive(Debug, Clone, PartialEq)]
    struct Item(u32, bool);

    impl Labeled for Item {
        fn is_positive(&self) -> bool {
            self.1
        }
    }

    fn dataset(pos: u32, neg: u32) -> Vec<Item> {
        (0..pos)
            .map(|i| Item(i, true))
            .chain((0..neg).map(|i| Item(100 + i, false)))
            .collect()
    }

    fn strategy(kind: ResampleKind) -> ResampleStrategy {
        ResampleStrategy { kind, rng_seed: 9 }
    }

    #[test]
    fn ros_duplicates_minority() {
        let data = dataset(2, 6);
        let out = resample(&data, &strategy(ResampleKind::Ros)).unwrap();
        assert_eq!(out.len(), 12);
        assert_eq!(&out[..8], &data[..]);
        assert!(out[8..].iter().all(|x| x.1 && x.0 < 2));
        assert_eq!(out.iter().filter(|x| x.1).count(), 6);
    }

    #[test]
    fn rus_subsamples_majority() {
        let data = dataset(2, 6);
        let out = resample(&data, &strategy(ResampleKind::Rus)).unwrap();
        assert_eq!(out.iter().filter(|x| x.1).count(), 2);
        assert_eq!(out.iter().filter(|x| !x.1).count(), 2);
        assert!(out.iter().all(|x| data.contains(x)));
        // input order preserved
        let positions: Vec<usize> = out.iter().map(|x| data.iter().position(|d| d == x).unwrap()).collect();
        assert!(positions.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn balanced_input_unchanged() {
        let data = dataset(3, 3);
        assert_eq!(resample(&data, &strategy(ResampleKind::Ros)).unwrap(), data);
        assert_eq!(resample(&data, &strategy(ResampleKind::Rus)).unwrap(), data);
    }

    #[test]
    fn original_passes_through_single_class() {
        let data = dataset(0, 4);
        assert_eq!(resample(&data, &strategy(ResampleKind::Original)).unwrap(), data);
        assert!(matches!(
            resample(&data, &strategy(ResampleKind::Ros)),
            Err(Error::SingleClass("positive"))
        ));
        assert!(matches!(
            resample(&dataset(2, 0), &strategy(ResampleKind::Rus)),
            Err(Error::SingleClass("negative"))
        ));
    }

    #[test]
    fn auto_weights() {
        let (w_neg, w_pos) = class_weights_auto(&dataset(2, 6)).unwrap();
        assert!((w_neg - 8.0 / 12.0).abs() < 1e-15);
        assert_eq!(w_pos, 2.0);
        assert_eq!(class_weights_auto(&dataset(5, 5)).unwrap(), (1.0, 1.0));
        assert!(matches!(class_weights_auto(&dataset(0, 3)), Err(Error::SingleClass(_))));
    }
}
