use std::collections::BTreeSet;
use std::sync::Arc;

use buglocate::evalkit::{
    accuracy_at_k, average_precision, chronological_split, map_metric, mrr, rank_instances, rank_methods, MapVariant,
    QueryResult, RankedMethod, SplitMode,
};
use buglocate::imbalance::Instance;
use buglocate::neural::{Activation, DenseLayer, Network};
use proptest::prelude::*;

fn query_from_flags(flags: &[bool]) -> QueryResult {
    QueryResult {
        bug_id: "q".into(),
        num_relevant: flags.iter().filter(|&&f| f).count(),
        ranking: flags
            .iter()
            .enumerate()
            .map(|(i, &relevant)| RankedMethod {
                method_id: format!("m{i:02}"),
                score: -(i as f64),
                relevant,
            })
            .collect(),
    }
}

/// Positions (1-based) of relevant items.
fn positions(flags: &[bool]) -> Vec<usize> {
    flags
        .iter()
        .enumerate()
        .filter(|(_, &f)| f)
        .map(|(i, _)| i + 1)
        .collect()
}

/// The i-th relevant item (1-based i) at position p contributes precision i/p.
fn oracle_ap(flags: &[bool]) -> f64 {
    let pos = positions(flags);
    if pos.is_empty() {
        return 0.0;
    }
    pos.iter()
        .enumerate()
        .map(|(i, &p)| (i + 1) as f64 / p as f64)
        .sum::<f64>()
        / pos.len() as f64
}

fn oracle_rr(flags: &[bool]) -> f64 {
    positions(flags).first().map_or(0.0, |&p| 1.0 / p as f64)
}

fn oracle_hit(flags: &[bool], k: usize) -> f64 {
    if flags.iter().take(k).any(|&f| f) {
        1.0
    } else {
        0.0
    }
}

fn rankings() -> impl Strategy<Value = Vec<Vec<bool>>> {
    prop::collection::vec(prop::collection::vec(prop::bool::weighted(0.2), 1..=20), 1..30)
}

proptest! {
    #[test]
    fn metrics_match_definitional_oracle(flags in rankings()) {
        let results: Vec<QueryResult> = flags.iter().map(|f| query_from_flags(f)).collect();
        let n = flags.len() as f64;
        let map = flags.iter().map(|f| oracle_ap(f)).sum::<f64>() / n;
        let rr = flags.iter().map(|f| oracle_rr(f)).sum::<f64>() / n;
        prop_assert!((map_metric(&results, MapVariant::Standard) - map).abs() < 1e-12);
        prop_assert!((mrr(&results) - rr).abs() < 1e-12);
        for k in [1, 5, 10] {
            let acc = flags.iter().map(|f| oracle_hit(f, k)).sum::<f64>() / n;
            prop_assert!((accuracy_at_k(&results, k) - acc).abs() < 1e-12);
        }
    }

    #[test]
    fn accuracy_is_monotone_in_k(flags in rankings()) {
        let results: Vec<QueryResult> = flags.iter().map(|f| query_from_flags(f)).collect();
        let at1 = accuracy_at_k(&results, 1);
        let mut last = 0.0;
        for k in 1..=21 {
            let a = accuracy_at_k(&results, k);
            prop_assert!(a >= last && a >= at1);
            last = a;
        }
    }

    #[test]
    fn perfect_rankings_score_one(len in 1usize..20, rel in 1usize..20) {
        let rel = rel.min(len);
        let flags: Vec<bool> = (0..len).map(|i| i < rel).collect();
        let results = [query_from_flags(&flags)];
        prop_assert_eq!(map_metric(&results, MapVariant::Standard), 1.0);
        prop_assert_eq!(mrr(&results), 1.0);
        prop_assert_eq!(accuracy_at_k(&results, 1), 1.0);
    }

    #[test]
    fn literal_variant_is_mean_precision(flags in prop::collection::vec(any::<bool>(), 1..20)) {
        let q = query_from_flags(&flags);
        let mut hits = 0;
        let mut sum = 0.0;
        for (i, &f) in flags.iter().enumerate() {
            hits += f as usize;
            sum += hits as f64 / (i + 1) as f64;
        }
        prop_assert!((average_precision(&q, MapVariant::PaperLiteral) - sum / flags.len() as f64).abs() < 1e-12);
    }
}

fn dataset(sizes: &[usize], times: &[i64]) -> Vec<Instance> {
    let v: Arc<[f64]> = Arc::from(vec![0.0]);
    let mut out = Vec::new();
    for (b, (&s, &t)) in sizes.iter().zip(times).enumerate() {
        for m in 0..s {
            out.push(Instance {
                report_vec: v.clone(),
                method_vec: v.clone(),
                label: m == 0,
                bug_id: format!("B{b}"),
                method_id: format!("M{m}"),
                report_time: t,
            });
        }
    }
    out
}

fn bugs_with_times() -> impl Strategy<Value = (Vec<usize>, Vec<i64>)> {
    (10usize..40).prop_flat_map(|b| (prop::collection::vec(1usize..8, b), prop::collection::vec(0i64..50, b)))
}

proptest! {
    #[test]
    fn split_is_ordered_disjoint_and_near_deciles((sizes, times) in bugs_with_times()) {
        let data = dataset(&sizes, &times);
        let s = chronological_split(&data, SplitMode::BugDisjoint).unwrap();
        let n = data.len();
        prop_assert_eq!(s.train.len() + s.valid.len() + s.test.len(), n);
        prop_assert!(!s.train.is_empty() && !s.valid.is_empty() && !s.test.is_empty());

        let max_train = s.train.iter().map(|i| i.report_time).max().unwrap();
        let min_valid = s.valid.iter().map(|i| i.report_time).min().unwrap();
        let max_valid = s.valid.iter().map(|i| i.report_time).max().unwrap();
        let min_test = s.test.iter().map(|i| i.report_time).min().unwrap();
        prop_assert!(max_train <= min_valid && max_valid <= min_test);

        let ids = |v: &[Instance]| v.iter().map(|i| i.bug_id.clone()).collect::<BTreeSet<_>>();
        let (a, b, c) = (ids(&s.train), ids(&s.valid), ids(&s.test));
        prop_assert!(a.is_disjoint(&b) && b.is_disjoint(&c) && a.is_disjoint(&c));

        // permutation of the input
        let key = |i: &Instance| (i.bug_id.clone(), i.method_id.clone());
        let mut all: Vec<_> = s.train.iter().chain(&s.valid).chain(&s.test).map(key).collect();
        let mut orig: Vec<_> = data.iter().map(key).collect();
        all.sort();
        orig.sort();
        prop_assert_eq!(all, orig);

        // each cut is at most one bug away from its exact decile
        let mut ordered: Vec<(i64, String, usize)> = sizes
            .iter()
            .zip(&times)
            .enumerate()
            .map(|(b, (&sz, &t))| (t, format!("B{b}"), sz))
            .collect();
        ordered.sort();
        let mut bounds = vec![0usize];
        for (_, _, sz) in &ordered {
            bounds.push(bounds.last().unwrap() + sz);
        }
        // Neighbors of each exact decile; when no neighbor pair leaves all three
        // parts nonempty, only nonemptiness is promised.
        let b = bounds.len() - 1;
        let neighbors = |tenths: usize| {
            let exact = (tenths * n) as f64 / 10.0;
            let lo = bounds.iter().rposition(|&c| c as f64 <= exact).unwrap();
            let hi = bounds.iter().position(|&c| c as f64 >= exact).unwrap();
            [lo, hi]
        };
        let feasible = neighbors(8)
            .iter()
            .any(|&j8| neighbors(9).iter().any(|&j9| 0 < j8 && j8 < j9 && j9 < b));
        if !feasible {
            return Ok(());
        }
        for (cut, tenths) in [(s.train.len(), 8), (s.train.len() + s.valid.len(), 9)] {
            let exact = (tenths * n) as f64 / 10.0;
            let between = bounds
                .iter()
                .filter(|&&c| (c as f64 - exact) * (cut as f64 - exact) > 0.0 && (c as f64 - exact).abs() < (cut as f64 - exact).abs())
                .count();
            prop_assert_eq!(between, 0, "cut {} exact {} bounds {:?}", cut, exact, bounds);
        }
    }
}

fn zero_net(rdim: usize, mdim: usize) -> Network {
    Network {
        report_tower: vec![DenseLayer::zeros(rdim, 2, Activation::Relu)],
        method_tower: vec![DenseLayer::zeros(mdim, 2, Activation::Relu)],
        head: DenseLayer::zeros(4, 1, Activation::Sigmoid),
    }
}

#[test]
fn rank_methods_orders_by_score_then_id() {
    // head reads the method tower's first unit, which copies method[0]
    let mut net = zero_net(1, 1);
    net.method_tower[0].weights[[0, 0]] = 1.0;
    net.head.weights[[0, 2]] = 1.0;
    let truth: BTreeSet<String> = ["b".to_string()].into();
    let cands = vec![
        ("a".to_string(), vec![0.1]),
        ("b".to_string(), vec![0.9]),
        ("c".to_string(), vec![0.5]),
    ];
    let q = rank_methods(&net, "bug", &[0.0], &cands, &truth).unwrap();
    let ids: Vec<&str> = q.ranking.iter().map(|r| r.method_id.as_str()).collect();
    assert_eq!(ids, ["b", "c", "a"]);
    assert!(q.ranking.windows(2).all(|w| w[0].score >= w[1].score));

    let flat = zero_net(1, 1);
    let cands = vec![
        ("z".to_string(), vec![1.0]),
        ("a".to_string(), vec![2.0]),
        ("k".to_string(), vec![3.0]),
    ];
    let q = rank_methods(&flat, "bug", &[0.0], &cands, &BTreeSet::new()).unwrap();
    let ids: Vec<&str> = q.ranking.iter().map(|r| r.method_id.as_str()).collect();
    assert_eq!(ids, ["a", "k", "z"]);
    assert_eq!(q.num_relevant, 0);

    assert!(rank_methods(&flat, "bug", &[0.0, 1.0], &cands, &BTreeSet::new()).is_err());
}

#[test]
fn rank_instances_groups_by_bug() {
    let data = dataset(&[3, 2, 4], &[5, 1, 3]);
    let results = rank_instances(&zero_net(1, 1), &data).unwrap();
    assert_eq!(
        results.iter().map(|q| q.bug_id.as_str()).collect::<Vec<_>>(),
        ["B0", "B1", "B2"]
    );
    assert_eq!(results.iter().map(|q| q.ranking.len()).collect::<Vec<_>>(), [3, 2, 4]);
    assert!(results.iter().all(|q| q.num_relevant == 1));
}
