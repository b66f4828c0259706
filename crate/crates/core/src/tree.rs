//! The self-adjusting tree itself.
//!
//! Nodes hold at most `c` items. An access walks the item's hash path from
//! the root, lifts the item to the root, and then pushes randomly chosen
//! items one level down at a time until some item lands at the accessed
//! item's old level. A push-down whose last node is already full is undone
//! and retried. Each level therefore keeps its item count across accesses.
//!
//! Each node has `c + 1` slots. Slot `c` is the overflow slot and is only
//! occupied while an access is in flight. Removing an item from a node that
//! has its overflow slot occupied moves the overflow item into the freed
//! slot, so a settled tree never uses slot `c`.

use std::collections::{HashMap, HashSet};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::addressing::{route_child, AddressScheme, DigestAlgorithm, ItemAddress, ItemId, NodeIndex};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TreeConfig {
    pub capacity: usize,
    pub occupancy: f64,
    pub seed: u64,
    pub algorithm: DigestAlgorithm,
}

impl TreeConfig {
    pub fn new(capacity: usize, occupancy: f64, seed: u64) -> Self {
        TreeConfig { capacity, occupancy, seed, algorithm: DigestAlgorithm::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.capacity < 1 {
            return Err(Error::InvalidCapacity(self.capacity));
        }
        if !(self.occupancy > 0.0 && self.occupancy < 1.0) {
            return Err(Error::InvalidOccupancy(self.occupancy));
        }
        Ok(())
    }

    /// Initial item count for `level`: `floor(c * f * 2^level)`.
    pub fn level_quota(&self, level: u32) -> u64 {
        (self.capacity as f64 * self.occupancy * 2f64.powi(level as i32)).floor() as u64
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TreeNode {
    slots: Vec<Option<ItemId>>,
    len: usize,
}

impl TreeNode {
    fn new(capacity: usize) -> Self {
        TreeNode { slots: vec![None; capacity + 1], len: 0 }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn contains(&self, item: ItemId) -> bool {
        self.slots.contains(&Some(item))
    }

    pub fn items(&self) -> impl Iterator<Item = ItemId> + '_ {
        self.slots.iter().filter_map(|s| *s)
    }

    /// `(slot, item)` pairs in slot order.
    pub fn slots(&self) -> impl Iterator<Item = (usize, ItemId)> + '_ {
        self.slots.iter().enumerate().filter_map(|(k, s)| s.map(|v| (k, v)))
    }

    fn nth_item(&self, n: usize) -> (usize, ItemId) {
        self.slots().nth(n).expect("pick index within node length")
    }

    fn lowest_free(&self) -> usize {
        self.slots.iter().position(Option::is_none).expect("node has a free slot")
    }
}

/// Per-request cost breakdown.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AccessRecord {
    pub item: ItemId,
    pub level_found: u32,
    pub access_cost: u64,
    pub move_up_cost: u64,
    pub push_down_attempts: u32,
    /// Move-up plus every push-down edge, reversals included.
    pub reconfig_cost: u64,
    /// Portion of `reconfig_cost` spent undoing failed attempts.
    pub reversal_cost: u64,
    pub total_cost: u64,
    /// Node at the accessed level where the committed push-down ended.
    pub terminal: Option<NodeIndex>,
}

impl AccessRecord {
    fn at_root(item: ItemId) -> Self {
        AccessRecord {
            item,
            level_found: 0,
            access_cost: 0,
            move_up_cost: 0,
            push_down_attempts: 0,
            reconfig_cost: 0,
            reversal_cost: 0,
            total_cost: 0,
            terminal: None,
        }
    }

    fn charged(item: ItemId, level: u32, attempts: u32, terminal: NodeIndex) -> Self {
        let l = u64::from(level);
        let failed = u64::from(attempts - 1);
        let reversal_cost = failed * l;
        let reconfig_cost = l + failed * 2 * l + l;
        AccessRecord {
            item,
            level_found: level,
            access_cost: l,
            move_up_cost: l,
            push_down_attempts: attempts,
            reconfig_cost,
            reversal_cost,
            total_cost: l + reconfig_cost,
            terminal: Some(terminal),
        }
    }

    /// Reconfiguration cost if undoing a failed attempt were free.
    pub fn reconfig_uncharged(&self) -> u64 {
        self.reconfig_cost - self.reversal_cost
    }
}

/// How initialization compared against the per-level quotas.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct InitReport {
    pub quotas: Vec<u64>,
    pub counts: Vec<u64>,
    /// Deepest level whose quota is needed to hold all items.
    pub last_quota_level: u32,
    /// Items placed below `last_quota_level` because their path was blocked.
    pub overflow_items: usize,
    pub warnings: Vec<String>,
}

impl InitReport {
    pub fn met_quotas_exactly(&self) -> bool {
        let l = self.last_quota_level as usize;
        self.overflow_items == 0
            && (0..l).all(|i| self.counts.get(i) == self.quotas.get(i))
            && self.counts.get(l).copied().unwrap_or(0) <= self.quotas.get(l).copied().unwrap_or(0)
    }
}

/// Counters for the self-check mode.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct CheckStats {
    pub accesses_checked: u64,
    pub reversals_checked: u64,
}

/// Order-independent digest of the node/item placement.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct StateDigest(pub u64);

fn splitmix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

fn placement_hash(node: NodeIndex, item: ItemId) -> u64 {
    splitmix(splitmix(node.0) ^ item.0.rotate_left(17))
}

#[derive(Debug, Clone, Copy)]
struct Step {
    item: ItemId,
    from: NodeIndex,
    from_slot: usize,
    to: NodeIndex,
    to_slot: usize,
    compacted: Option<ItemId>,
}

enum Picker<'a> {
    Rng,
    Scripted(&'a mut dyn FnMut(usize) -> usize),
}

#[derive(Debug, Clone)]
pub struct SeedTree {
    config: TreeConfig,
    scheme: AddressScheme,
    nodes: HashMap<NodeIndex, TreeNode>,
    locations: HashMap<ItemId, (NodeIndex, usize)>,
    addresses: HashMap<ItemId, ItemAddress>,
    level_counts: Vec<u64>,
    max_depth: u32,
    digest: u64,
    rng: ChaCha8Rng,
    report: InitReport,
    self_check: bool,
    checks: CheckStats,
    #[cfg(test)]
    attempt_log: Vec<u64>,
}

const SHUFFLE_STREAM: u64 = 0;
const PICK_STREAM: u64 = 1;

impl SeedTree {
    fn empty(config: TreeConfig) -> Self {
        let scheme = AddressScheme::with_algorithm(config.seed, config.algorithm);
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        rng.set_stream(PICK_STREAM);
        SeedTree {
            config,
            scheme,
            nodes: HashMap::new(),
            locations: HashMap::new(),
            addresses: HashMap::new(),
            level_counts: Vec::new(),
            max_depth: 0,
            digest: 0,
            rng,
            report: InitReport::default(),
            self_check: false,
            checks: CheckStats::default(),
            #[cfg(test)]
            attempt_log: Vec::new(),
        }
    }

    fn register(&mut self, items: impl IntoIterator<Item = ItemId>) -> Result<()> {
        for v in items {
            if self.addresses.contains_key(&v) {
                return Err(Error::DuplicateItem(v));
            }
            self.addresses.insert(v, self.scheme.address(v));
        }
        if self.addresses.is_empty() {
            return Err(Error::NoItems);
        }
        Ok(())
    }

    /// Builds the starting tree at fractional occupancy `f`.
    ///
    /// Items are shuffled by seed, then each walks its hash path and stops at
    /// the first node that is not full and whose level is still under quota.
    /// If every such level on its path is blocked, it goes to the shallowest
    /// non-full path node below the last quota level.
    pub fn init(items: &[ItemId], config: TreeConfig) -> Result<Self> {
        config.validate()?;
        let mut tree = SeedTree::empty(config);
        tree.register(items.iter().copied())?;

        let n = items.len() as u64;
        let mut quotas = Vec::new();
        let mut cumulative = 0u64;
        loop {
            let q = config.level_quota(quotas.len() as u32);
            quotas.push(q);
            cumulative += q;
            if cumulative >= n {
                break;
            }
        }
        let last_quota_level = (quotas.len() - 1) as u32;

        let mut order = items.to_vec();
        let mut shuffle_rng = ChaCha8Rng::seed_from_u64(config.seed);
        shuffle_rng.set_stream(SHUFFLE_STREAM);
        order.shuffle(&mut shuffle_rng);

        let mut overflow = 0usize;
        for v in order {
            let addr = tree.addresses[&v].clone();
            let mut placed = false;
            let mut node = NodeIndex::ROOT;
            for level in 0..=last_quota_level {
                let under_quota = tree.level_count(level) < quotas[level as usize];
                if under_quota && !tree.is_full(node) {
                    tree.attach(v, node);
                    placed = true;
                    break;
                }
                node = route_child(node, addr.bit(u64::from(level)));
            }
            if !placed {
                let mut level = last_quota_level + 1;
                while tree.is_full(node) {
                    node = route_child(node, addr.bit(u64::from(level)));
                    level += 1;
                }
                tree.attach(v, node);
                overflow += 1;
            }
        }

        let mut warnings = Vec::new();
        if quotas[0] == 0 {
            warnings.push(format!(
                "capacity * occupancy = {} < 1: root starts empty and stays empty",
                config.capacity as f64 * config.occupancy
            ));
        }
        if overflow > 0 {
            warnings.push(format!("{overflow} items placed below the last quota level"));
        }
        tree.max_depth = (tree.level_counts.len() as u32).saturating_sub(1);
        tree.report = InitReport {
            quotas,
            counts: tree.level_counts.clone(),
            last_quota_level,
            overflow_items: overflow,
            warnings,
        };
        Ok(tree)
    }

    /// Builds a tree from an explicit placement. Every item must sit on its
    /// own hash path and no node may exceed capacity.
    pub fn from_layout(config: TreeConfig, layout: &[(ItemId, NodeIndex)]) -> Result<Self> {
        config.validate()?;
        let mut tree = SeedTree::empty(config);
        tree.register(layout.iter().map(|&(v, _)| v))?;
        for &(v, node) in layout {
            if node.0 == 0 {
                return Err(Error::InvalidLayout("node index 0".into()));
            }
            if tree.addresses[&v].path_node(node.depth()) != node {
                return Err(Error::InvalidLayout(format!("item {v} is not on its hash path at node {node}")));
            }
            if tree.is_full(node) {
                return Err(Error::InvalidLayout(format!("node {node} exceeds capacity")));
            }
            tree.attach(v, node);
        }
        tree.max_depth = (tree.level_counts.len() as u32).saturating_sub(1);
        tree.report.counts = tree.level_counts.clone();
        tree.report.quotas = (0..tree.level_counts.len() as u32).map(|l| config.level_quota(l)).collect();
        tree.report.last_quota_level = tree.max_depth;
        Ok(tree)
    }

    pub fn config(&self) -> &TreeConfig {
        &self.config
    }

    pub fn capacity(&self) -> usize {
        self.config.capacity
    }

    pub fn scheme(&self) -> &AddressScheme {
        &self.scheme
    }

    pub fn init_report(&self) -> &InitReport {
        &self.report
    }

    pub fn len(&self) -> usize {
        self.locations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.locations.is_empty()
    }

    pub fn items(&self) -> impl Iterator<Item = ItemId> + '_ {
        self.locations.keys().copied()
    }

    pub fn address(&self, item: ItemId) -> Option<&ItemAddress> {
        self.addresses.get(&item)
    }

    pub fn location(&self, item: ItemId) -> Option<NodeIndex> {
        self.locations.get(&item).map(|&(n, _)| n)
    }

    pub fn level_of(&self, item: ItemId) -> Option<u32> {
        self.location(item).map(NodeIndex::depth)
    }

    /// Deepest level holding items; constant after construction.
    pub fn max_depth(&self) -> u32 {
        self.max_depth
    }

    pub fn level_counts(&self) -> &[u64] {
        &self.level_counts
    }

    pub fn level_count(&self, level: u32) -> u64 {
        self.level_counts.get(level as usize).copied().unwrap_or(0)
    }

    pub fn node(&self, index: NodeIndex) -> Option<&TreeNode> {
        self.nodes.get(&index)
    }

    /// Non-empty nodes, in no particular order.
    pub fn nodes(&self) -> impl Iterator<Item = (NodeIndex, &TreeNode)> {
        self.nodes.iter().filter(|(_, n)| !n.is_empty()).map(|(&i, n)| (i, n))
    }

    pub fn node_len(&self, index: NodeIndex) -> usize {
        self.nodes.get(&index).map_or(0, TreeNode::len)
    }

    pub fn is_full(&self, index: NodeIndex) -> bool {
        self.node_len(index) >= self.config.capacity
    }

    /// First node found holding more than `c` items, if any.
    pub fn overfilled_node(&self) -> Option<NodeIndex> {
        self.nodes.iter().find(|(_, n)| n.len > self.config.capacity).map(|(&i, _)| i)
    }

    /// Fraction of full nodes among all `2^(L+1) - 1` nodes of levels `0..=L`.
    pub fn full_fraction(&self, last_level: u32) -> f64 {
        let full = self
            .nodes
            .iter()
            .filter(|(i, n)| i.depth() <= last_level && n.len >= self.config.capacity)
            .count();
        full as f64 / ((1u64 << (last_level + 1)) - 1) as f64
    }

    pub fn set_self_check(&mut self, enabled: bool) {
        self.self_check = enabled;
    }

    pub fn check_stats(&self) -> CheckStats {
        self.checks
    }

    /// Incrementally maintained placement digest.
    pub fn state_digest(&self) -> StateDigest {
        StateDigest(self.digest)
    }

    /// Same digest, recomputed from scratch.
    pub fn recompute_digest(&self) -> StateDigest {
        let sum = self
            .nodes
            .iter()
            .flat_map(|(&i, n)| n.items().map(move |v| placement_hash(i, v)))
            .fold(0u64, u64::wrapping_add);
        StateDigest(sum)
    }

    fn attach(&mut self, item: ItemId, node: NodeIndex) -> usize {
        let capacity = self.config.capacity;
        let entry = self.nodes.entry(node).or_insert_with(|| TreeNode::new(capacity));
        let slot = entry.lowest_free();
        entry.slots[slot] = Some(item);
        entry.len += 1;
        self.locations.insert(item, (node, slot));
        let level = node.depth() as usize;
        if self.level_counts.len() <= level {
            self.level_counts.resize(level + 1, 0);
        }
        self.level_counts[level] += 1;
        self.digest = self.digest.wrapping_add(placement_hash(node, item));
        slot
    }

    /// Removes `item` from its node, compacting the overflow slot if used.
    fn detach(&mut self, item: ItemId) -> (NodeIndex, usize, Option<ItemId>) {
        let capacity = self.config.capacity;
        let (node, slot) = self.locations.remove(&item).expect("detach of placed item");
        let entry = self.nodes.get_mut(&node).expect("node of placed item");
        entry.slots[slot] = None;
        entry.len -= 1;
        let mut compacted = None;
        if slot < capacity {
            if let Some(y) = entry.slots[capacity].take() {
                entry.slots[slot] = Some(y);
                self.locations.insert(y, (node, slot));
                compacted = Some(y);
            }
        }
        self.level_counts[node.depth() as usize] -= 1;
        self.digest = self.digest.wrapping_sub(placement_hash(node, item));
        (node, slot, compacted)
    }

    fn move_down(&mut self, from: NodeIndex, pick: usize) -> Step {
        let (_, item) = self.nodes[&from].nth_item(pick);
        let bit = self.addresses[&item].bit(u64::from(from.depth()));
        let to = route_child(from, bit);
        let (_, from_slot, compacted) = self.detach(item);
        let to_slot = self.attach(item, to);
        Step { item, from, from_slot, to, to_slot, compacted }
    }

    fn undo(&mut self, step: Step) {
        let capacity = self.config.capacity;
        let to = self.nodes.get_mut(&step.to).expect("target node");
        debug_assert_eq!(to.slots[step.to_slot], Some(step.item));
        to.slots[step.to_slot] = None;
        to.len -= 1;
        let from = self.nodes.get_mut(&step.from).expect("source node");
        if let Some(y) = step.compacted {
            from.slots[capacity] = Some(y);
            self.locations.insert(y, (step.from, capacity));
        }
        from.slots[step.from_slot] = Some(step.item);
        from.len += 1;
        self.locations.insert(step.item, (step.from, step.from_slot));
        self.level_counts[step.to.depth() as usize] -= 1;
        self.level_counts[step.from.depth() as usize] += 1;
        self.digest = self
            .digest
            .wrapping_sub(placement_hash(step.to, step.item))
            .wrapping_add(placement_hash(step.from, step.item));
    }

    /// Locates `item` by local routing from the root. Read-only; the access
    /// cost is the returned depth.
    pub fn find(&self, item: ItemId) -> Result<(NodeIndex, u32)> {
        let addr = self.addresses.get(&item).ok_or(Error::UnknownItem(item))?;
        let mut node = NodeIndex::ROOT;
        loop {
            if self.nodes.get(&node).is_some_and(|n| n.contains(item)) {
                return Ok((node, node.depth()));
            }
            let depth = node.depth();
            if depth >= self.max_depth {
                return Err(Error::CorruptedState { item, node });
            }
            node = route_child(node, addr.bit(u64::from(depth)));
        }
    }

    /// Serves one request: find, move to the root, randomized push-down.
    pub fn access(&mut self, item: ItemId) -> Result<AccessRecord> {
        self.access_inner(item, Picker::Rng)
    }

    /// Like [`access`](Self::access) but item picks come from `pick`, which
    /// receives the current node's item count and returns a slot-order index.
    pub fn access_with(&mut self, item: ItemId, pick: &mut dyn FnMut(usize) -> usize) -> Result<AccessRecord> {
        self.access_inner(item, Picker::Scripted(pick))
    }

    fn access_inner(&mut self, item: ItemId, mut picker: Picker<'_>) -> Result<AccessRecord> {
        let (found_at, level) = self.find(item)?;
        if level == 0 {
            if self.self_check {
                self.checks.accesses_checked += 1;
            }
            return Ok(AccessRecord::at_root(item));
        }
        let counts_before = self.self_check.then(|| self.level_counts.clone());

        self.detach(item);
        self.attach(item, NodeIndex::ROOT);

        let mut steps: Vec<Step> = Vec::with_capacity(level as usize);
        let mut attempts = 0u32;
        let terminal = loop {
            attempts += 1;
            let digest_before = self.digest;
            #[cfg(test)]
            self.attempt_log.push(digest_before);
            steps.clear();
            let mut node = NodeIndex::ROOT;
            while node.depth() < level {
                let k = self.nodes[&node].len;
                let idx = match &mut picker {
                    Picker::Rng => self.rng.random_range(0..k as u64) as usize,
                    Picker::Scripted(f) => f(k),
                };
                if idx >= k {
                    for s in steps.drain(..).rev() {
                        self.undo(s);
                    }
                    return Err(Error::Config(format!("pick {idx} out of range for node of {k} items")));
                }
                let step = self.move_down(node, idx);
                node = step.to;
                steps.push(step);
            }
            if self.nodes[&node].len <= self.config.capacity {
                break node;
            }
            for s in steps.drain(..).rev() {
                self.undo(s);
            }
            #[cfg(test)]
            self.attempt_log.push(self.digest);
            if self.self_check {
                self.checks.reversals_checked += 1;
                if self.digest != digest_before {
                    return Err(Error::InvariantViolation(format!(
                        "reversal of attempt {attempts} for item {item} did not restore the placement"
                    )));
                }
            }
        };

        if let Some(before) = counts_before {
            self.verify_access(item, found_at, &before, &steps)?;
        }
        Ok(AccessRecord::charged(item, level, attempts, terminal))
    }

    fn verify_access(&mut self, item: ItemId, found_at: NodeIndex, before: &[u64], steps: &[Step]) -> Result<()> {
        self.checks.accesses_checked += 1;
        if self.level_counts != before {
            return Err(Error::InvariantViolation(format!(
                "level counts changed by access of {item}: {before:?} -> {:?}",
                self.level_counts
            )));
        }
        let touched = std::iter::once(NodeIndex::ROOT)
            .chain(std::iter::once(found_at))
            .chain(steps.iter().map(|s| s.to));
        for node in touched {
            if self.node_len(node) > self.config.capacity {
                return Err(Error::InvariantViolation(format!("node {node} over capacity after access of {item}")));
            }
        }
        for v in std::iter::once(item).chain(steps.iter().map(|s| s.item)) {
            self.check_resident(v)?;
        }
        Ok(())
    }

    fn check_resident(&self, v: ItemId) -> Result<()> {
        let (node, slot) = self.locations[&v];
        if self.nodes.get(&node).and_then(|n| n.slots[slot]) != Some(v) {
            return Err(Error::InvariantViolation(format!("location of {v} is stale")));
        }
        if self.addresses[&v].path_node(node.depth()) != node {
            return Err(Error::InvariantViolation(format!("item {v} at node {node} is off its hash path")));
        }
        Ok(())
    }

    /// Full scan: location/node consistency, capacity, hash-path residency,
    /// level counts and the incremental digest.
    pub fn check_invariants(&self) -> Result<()> {
        let mut seen = HashSet::with_capacity(self.locations.len());
        let mut counts = vec![0u64; self.level_counts.len()];
        for (&index, node) in &self.nodes {
            if node.len > self.config.capacity {
                return Err(Error::InvariantViolation(format!("node {index} holds {} items", node.len)));
            }
            if node.slots[self.config.capacity].is_some() {
                return Err(Error::InvariantViolation(format!("node {index} uses its overflow slot")));
            }
            if node.slots().count() != node.len {
                return Err(Error::InvariantViolation(format!("node {index} length mismatch")));
            }
            for (slot, v) in node.slots() {
                if !seen.insert(v) {
                    return Err(Error::InvariantViolation(format!("item {v} stored twice")));
                }
                if self.locations.get(&v) != Some(&(index, slot)) {
                    return Err(Error::InvariantViolation(format!("location of {v} disagrees with node {index}")));
                }
                let level = index.depth() as usize;
                if level >= counts.len() {
                    return Err(Error::InvariantViolation(format!("item {v} below tracked levels")));
                }
                counts[level] += 1;
                self.check_resident(v)?;
            }
        }
        if seen.len() != self.locations.len() || seen.len() != self.addresses.len() {
            return Err(Error::InvariantViolation("item sets disagree".into()));
        }
        if counts != self.level_counts {
            return Err(Error::InvariantViolation(format!(
                "tracked level counts {:?} differ from recount {counts:?}",
                self.level_counts
            )));
        }
        if self.recompute_digest() != self.state_digest() {
            return Err(Error::InvariantViolation("incremental digest drifted".into()));
        }
        Ok(())
    }

    #[cfg(test)]
    pub(crate) fn force_attach(&mut self, item: ItemId, node: NodeIndex) {
        if !self.addresses.contains_key(&item) {
            self.addresses.insert(item, self.scheme.address(item));
        }
        if self.locations.contains_key(&item) {
            self.detach(item);
        }
        self.attach(item, node);
    }
}
