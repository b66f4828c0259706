//! Static reference policies: the tree frozen at its initial placement, and
//! the frequency-sorted ideal layout.

use std::collections::BTreeMap;

use crate::addressing::ItemId;
use crate::error::Result;
use crate::metrics::{mru_level, CostLedger, RankTracker};
use crate::traces::Trace;
use crate::tree::{SeedTree, TreeConfig};

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FrequencyTable {
    counts: BTreeMap<ItemId, u64>,
}

impl FrequencyTable {
    pub fn from_requests(requests: &[ItemId]) -> Self {
        let mut counts = BTreeMap::new();
        for &v in requests {
            *counts.entry(v).or_default() += 1;
        }
        FrequencyTable { counts }
    }

    pub fn get(&self, item: ItemId) -> u64 {
        self.counts.get(&item).copied().unwrap_or(0)
    }

    pub fn total(&self) -> u64 {
        self.counts.values().sum()
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    /// Items by descending count; ties by ascending id.
    pub fn ranked(&self) -> Vec<(ItemId, u64)> {
        let mut v: Vec<_> = self.counts.iter().map(|(&i, &c)| (i, c)).collect();
        v.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
        v
    }
}

/// Serves the trace from the initial placement with no reconfiguration.
pub fn oblivious_cost(trace: &Trace, config: TreeConfig) -> Result<CostLedger> {
    let tree = SeedTree::init(&trace.items(), config)?;
    let mut ranks = RankTracker::with_capacity(trace.n_items(), trace.len());
    let mut ledger = CostLedger::new();
    for &v in trace.requests() {
        let (_, level) = tree.find(v)?;
        ledger.record_static(level, ranks.observe(v), config.capacity);
    }
    Ok(ledger)
}

/// Access cost of the best static layout ignoring hash paths: the item with
/// the `p`-th highest frequency sits at `mru_level(p, c)`.
pub fn static_optimal_cost(requests: &[ItemId], c: usize) -> u64 {
    FrequencyTable::from_requests(requests)
        .ranked()
        .into_iter()
        .enumerate()
        .map(|(p, (_, freq))| freq * u64::from(mru_level(p as u64 + 1, c)))
        .sum()
}
