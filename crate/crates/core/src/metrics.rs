//! Working-set ranks, MRU auditing, the rank-based lower bound and
//! competitive-ratio reporting.

use std::collections::{BTreeMap, HashMap};
use std::f64::consts::E;

use serde::{Deserialize, Serialize};

use crate::addressing::ItemId;
use crate::error::{Error, Result};
use crate::tree::AccessRecord;

/// Divisor of the rank-based lower bound: `1 + e`.
pub const ONE_PLUS_E: f64 = 1.0 + E;

/// Competitive ratio ceiling checked on every run.
pub const COMPETITIVE_RATIO_CEILING: f64 = 43.0;

/// Expected push-down attempts are bounded by `ceil(1 / (1 - f))`.
pub fn attempt_bound(f: f64) -> f64 {
    (1.0 / (1.0 - f)).ceil()
}

/// Expected excess of an item's level over its MRU level: `2 - log2(f)`.
pub fn mru_slack_bound(f: f64) -> f64 {
    2.0 - f.log2()
}

/// `(1 + e) * 2 * (1 + ceil(1/(1-f))) * (2 - log2 f)`.
pub fn analytical_ratio_bound(f: f64) -> f64 {
    ONE_PLUS_E * 2.0 * (1.0 + attempt_bound(f)) * mru_slack_bound(f)
}

/// Level of slot number `rank` in a complete binary tree with `c` slots per
/// node, filled level by level.
#[inline]
pub fn mru_level(rank: u64, c: usize) -> u32 {
    debug_assert!(rank >= 1 && c >= 1);
    let slot = (rank - 1) / c as u64 + 1;
    63 - slot.leading_zeros()
}

/// Fenwick tree over time positions; grows by doubling.
#[derive(Debug, Clone, Default)]
struct Fenwick {
    tree: Vec<i64>,
    raw: Vec<i64>,
}

impl Fenwick {
    fn with_capacity(n: usize) -> Self {
        let n = n.max(16).next_power_of_two();
        Fenwick { tree: vec![0; n + 1], raw: vec![0; n] }
    }

    fn grow(&mut self, needed: usize) {
        let mut n = self.raw.len().max(16);
        while n <= needed {
            n *= 2;
        }
        self.raw.resize(n, 0);
        self.tree = vec![0; n + 1];
        for i in 0..n {
            let v = self.raw[i];
            if v != 0 {
                self.bump(i, v);
            }
        }
    }

    fn bump(&mut self, i: usize, delta: i64) {
        let mut k = i + 1;
        while k < self.tree.len() {
            self.tree[k] += delta;
            k += k & k.wrapping_neg();
        }
    }

    fn add(&mut self, i: usize, delta: i64) {
        if i >= self.raw.len() {
            self.grow(i);
        }
        self.raw[i] += delta;
        self.bump(i, delta);
    }

    /// Sum over `0..end`.
    fn prefix(&self, end: usize) -> i64 {
        let mut k = end.min(self.raw.len());
        let mut s = 0;
        while k > 0 {
            s += self.tree[k];
            k &= k - 1;
        }
        s
    }
}

/// Maps each request to the size of its working set: the number of distinct
/// items requested since the previous request to the same item, that item
/// included. A first request gets rank `n`.
///
/// Each item keeps one mark at the time of its latest request, so the rank
/// is a range count over marks, `O(log m)` per request.
#[derive(Debug, Clone)]
pub struct RankTracker {
    n_items: u64,
    last: HashMap<ItemId, usize>,
    marks: Fenwick,
    time: usize,
}

impl RankTracker {
    pub fn new(n_items: u64) -> Self {
        Self::with_capacity(n_items, 1024)
    }

    pub fn with_capacity(n_items: u64, expected_requests: usize) -> Self {
        RankTracker { n_items, last: HashMap::new(), marks: Fenwick::with_capacity(expected_requests), time: 0 }
    }

    pub fn n_items(&self) -> u64 {
        self.n_items
    }

    /// Requests processed so far.
    pub fn time(&self) -> usize {
        self.time
    }

    /// Rank `item` would have if requested next.
    pub fn rank_of(&self, item: ItemId) -> u64 {
        match self.last.get(&item) {
            Some(&t) => (self.marks.prefix(self.time) - self.marks.prefix(t)) as u64,
            None => self.n_items,
        }
    }

    /// Returns the rank of `item` at the current time, then records the request.
    pub fn observe(&mut self, item: ItemId) -> u64 {
        let rank = self.rank_of(item);
        if let Some(t) = self.last.insert(item, self.time) {
            self.marks.add(t, -1);
        }
        self.marks.add(self.time, 1);
        self.time += 1;
        rank
    }
}

/// Ranks of every request in `trace`.
pub fn ranks(trace: &[ItemId], n_items: u64) -> Vec<u64> {
    let mut tracker = RankTracker::with_capacity(n_items, trace.len());
    trace.iter().map(|&v| tracker.observe(v)).collect()
}

/// `sum_t mru_level(rank_t, c)` over the trace.
pub fn lower_bound_levels(trace: &[ItemId], n_items: u64, c: usize) -> u64 {
    ranks(trace, n_items).into_iter().map(|r| u64::from(mru_level(r, c))).sum()
}

/// Access cost no algorithm on a capacity-`c` complete tree can beat:
/// `sum_t mru_level(rank_t, c) / (1 + e)`.
pub fn lower_bound(trace: &[ItemId], n_items: u64, c: usize) -> f64 {
    lower_bound_levels(trace, n_items, c) as f64 / ONE_PLUS_E
}

/// Distribution of `level_found - mru_level(rank)`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MruAudit {
    pub histogram: BTreeMap<i64, u64>,
    pub count: u64,
    pub sum: i64,
    pub max: Option<i64>,
}

impl MruAudit {
    pub fn push(&mut self, level_found: u32, rank: u64, c: usize) {
        let slack = i64::from(level_found) - i64::from(mru_level(rank, c));
        *self.histogram.entry(slack).or_default() += 1;
        self.count += 1;
        self.sum += slack;
        self.max = Some(self.max.map_or(slack, |m| m.max(slack)));
    }

    pub fn mean(&self) -> f64 {
        if self.count == 0 {
            0.0
        } else {
            self.sum as f64 / self.count as f64
        }
    }
}

pub fn mru_audit(stream: impl IntoIterator<Item = (u32, u64)>, c: usize) -> MruAudit {
    let mut audit = MruAudit::default();
    for (level, rank) in stream {
        audit.push(level, rank, c);
    }
    audit
}

/// Running totals for one algorithm over one trace.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CostLedger {
    pub requests: u64,
    pub access: u64,
    pub reconfig: u64,
    pub reversal: u64,
    /// Push-down attempts summed over requests found below the root.
    pub attempts: u64,
    pub deep_requests: u64,
    /// `sum_t mru_level(rank_t, c)`; divide by `1 + e` for the bound.
    pub lower_bound_levels: u64,
    pub records: Vec<AccessRecord>,
    keep_log: bool,
}

impl CostLedger {
    pub fn new() -> Self {
        Self::default()
    }

    /// Ledger that also retains every [`AccessRecord`].
    pub fn with_log() -> Self {
        CostLedger { keep_log: true, ..Self::default() }
    }

    pub fn record(&mut self, rec: &AccessRecord, rank: u64, c: usize) {
        self.requests += 1;
        self.access += rec.access_cost;
        self.reconfig += rec.reconfig_cost;
        self.reversal += rec.reversal_cost;
        if rec.level_found > 0 {
            self.deep_requests += 1;
            self.attempts += u64::from(rec.push_down_attempts);
        }
        self.lower_bound_levels += u64::from(mru_level(rank, c));
        if self.keep_log {
            self.records.push(rec.clone());
        }
    }

    /// Access-only charge, for static policies.
    pub fn record_static(&mut self, level: u32, rank: u64, c: usize) {
        self.requests += 1;
        self.access += u64::from(level);
        self.lower_bound_levels += u64::from(mru_level(rank, c));
    }

    pub fn total(&self) -> u64 {
        self.access + self.reconfig
    }

    pub fn total_uncharged(&self) -> u64 {
        self.total() - self.reversal
    }

    pub fn lower_bound(&self) -> f64 {
        self.lower_bound_levels as f64 / ONE_PLUS_E
    }

    /// Mean push-down attempts over requests that needed a push-down.
    pub fn mean_attempts(&self) -> f64 {
        if self.deep_requests == 0 {
            0.0
        } else {
            self.attempts as f64 / self.deep_requests as f64
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CompetitiveReport {
    pub total_ratio: f64,
    pub access_ratio: f64,
}

pub fn competitive_report(ledger: &CostLedger, lower_bound: f64) -> Result<CompetitiveReport> {
    if lower_bound <= 0.0 || !lower_bound.is_finite() {
        return Err(Error::ZeroLowerBound);
    }
    Ok(CompetitiveReport {
        total_ratio: ledger.total() as f64 / lower_bound,
        access_ratio: ledger.access as f64 / lower_bound,
    })
}
