use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::imbalance::Instance;
use crate::{Error, Result};

/// Records that can be ordered by bug-report time.
pub trait Chronological {
    fn bug_id(&self) -> &str;
    fn report_time(&self) -> i64;
}

impl Chronological for Instance {
    fn bug_id(&self) -> &str {
        &self.bug_id
    }

    fn report_time(&self) -> i64 {
        self.report_time
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitMode {
    /// Deciles moved to bug boundaries; no bug spans two parts.
    #[default]
    BugDisjoint,
    /// Exact instance deciles. A bug may straddle parts, which leaks labels.
    InstanceLevel,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Split<T> {
    pub train: Vec<T>,
    pub valid: Vec<T>,
    pub test: Vec<T>,
}

/// Orders records by (report time, bug id) and cuts them 8/1/1.
///
/// A bug's time is the earliest time among its records, so its records stay
/// contiguous; within a bug, input order is kept. In bug-disjoint mode each
/// cut moves to a bug boundary next to `0.8·N` or `0.9·N`.
pub fn chronological_split<T: Chronological + Clone>(items: &[T], mode: SplitMode) -> Result<Split<T>> {
    let mut bug_time: HashMap<&str, i64> = HashMap::new();
    for it in items {
        let t = bug_time.entry(it.bug_id()).or_insert(it.report_time());
        *t = (*t).min(it.report_time());
    }
    if bug_time.len() < 10 {
        return Err(Error::TooFewBugs(bug_time.len()));
    }
    let mut order: Vec<usize> = (0..items.len()).collect();
    order.sort_by(|&a, &b| {
        let (ba, bb) = (items[a].bug_id(), items[b].bug_id());
        (bug_time[ba], ba).cmp(&(bug_time[bb], bb)).then(a.cmp(&b))
    });

    let n = items.len();
    let (cut8, cut9) = match mode {
        SplitMode::InstanceLevel => {
            log::warn!("instance-level split: a bug's instances may appear in more than one part");
            ((n * 8 + 5) / 10, (n * 9 + 5) / 10)
        }
        SplitMode::BugDisjoint => {
            // cumulative instance counts at each bug boundary
            let mut cum = vec![0usize];
            let mut count = 0;
            for (i, &idx) in order.iter().enumerate() {
                count += 1;
                let last = i + 1 == n || items[order[i + 1]].bug_id() != items[idx].bug_id();
                if last {
                    cum.push(count);
                }
            }
            best_cuts(&cum, n)
        }
    };
    let pick = |range: std::ops::Range<usize>| order[range].iter().map(|&i| items[i].clone()).collect();
    Ok(Split {
        train: pick(0..cut8),
        valid: pick(cut8..cut9),
        test: pick(cut9..n),
    })
}

/// `cum[j]` = instances in the first `j` bugs. Returns instance offsets of
/// the two cuts at bug boundaries `0 < j8 < j9 < B`.
///
/// Each cut goes to one of the two boundaries around its exact decile,
/// choosing the pair with the smallest `|c8 − 0.8N| + |c9 − 0.9N|`. When no
/// such pair leaves every part nonempty (one bug holding over a tenth of the
/// data near the end, say), the same objective is minimized over all
/// boundaries. Ties go to the earlier boundary.
fn best_cuts(cum: &[usize], n: usize) -> (usize, usize) {
    let b = cum.len() - 1;
    let d8 = |j: usize| (10 * cum[j]).abs_diff(8 * n);
    let d9 = |j: usize| (10 * cum[j]).abs_diff(9 * n);
    let around = |tenths: usize| {
        let lo = cum.iter().rposition(|&c| 10 * c <= tenths * n).unwrap();
        let hi = cum.iter().position(|&c| 10 * c >= tenths * n).unwrap();
        [lo, hi]
    };
    let mut best: Option<(usize, usize, usize)> = None;
    for j8 in around(8) {
        for j9 in around(9) {
            if 0 < j8 && j8 < j9 && j9 < b {
                let total = d8(j8) + d9(j9);
                if best.is_none_or(|(t, _, _)| total < t) {
                    best = Some((total, j8, j9));
                }
            }
        }
    }
    if best.is_none() {
        let mut best_prefix = 1;
        for j9 in 2..b {
            if d8(j9 - 1) < d8(best_prefix) {
                best_prefix = j9 - 1;
            }
            let total = d8(best_prefix) + d9(j9);
            if best.is_none_or(|(t, _, _)| total < t) {
                best = Some((total, best_prefix, j9));
            }
        }
    }
    let (_, j8, j9) = best.expect("at least 10 bugs give a feasible pair");
    (cum[j8], cum[j9])
}
