//! Tree state as `2 + c` matchings, the way a reconfigurable datacenter
//! fabric would hold it: two static matchings for left and right tree edges,
//! and `c` dynamic node-to-item matchings (one per slot).
//!
//! Dump format, one section per matching:
//!
//! ```text
//! # seedtree-matchings c=2 depth=1
//! [topo-left]
//! 1 2
//! [topo-right]
//! 1 3
//! [membership-0]
//! 1 17
//! 2 4
//! [membership-1]
//! 1 9
//! ```

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::addressing::{route_child, ItemAddress, ItemId, NodeIndex};
use crate::error::{Error, Result};
use crate::tree::SeedTree;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum MatchingId {
    TopoLeft,
    TopoRight,
    Membership(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Edge {
    Topo(NodeIndex, NodeIndex),
    Member(NodeIndex, ItemId),
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatchingDelta {
    pub removals: Vec<(MatchingId, Edge)>,
    pub additions: Vec<(MatchingId, Edge)>,
}

impl MatchingDelta {
    pub fn len(&self) -> usize {
        self.removals.len() + self.additions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.removals.is_empty() && self.additions.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatchingSet {
    capacity: usize,
    depth: u32,
    topo_left: BTreeSet<(NodeIndex, NodeIndex)>,
    topo_right: BTreeSet<(NodeIndex, NodeIndex)>,
    membership: Vec<BTreeMap<NodeIndex, ItemId>>,
}

impl MatchingSet {
    fn skeleton(capacity: usize, depth: u32) -> Self {
        let inner = 1u64 << depth;
        let topo_left = (1..inner).map(|j| (NodeIndex(j), NodeIndex(2 * j))).collect();
        let topo_right = (1..inner).map(|j| (NodeIndex(j), NodeIndex(2 * j + 1))).collect();
        MatchingSet { capacity, depth, topo_left, topo_right, membership: vec![BTreeMap::new(); capacity] }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// Deepest tree level covered by the topological matchings.
    pub fn depth(&self) -> u32 {
        self.depth
    }

    pub fn matching_count(&self) -> usize {
        2 + self.membership.len()
    }

    pub fn topo_left(&self) -> &BTreeSet<(NodeIndex, NodeIndex)> {
        &self.topo_left
    }

    pub fn topo_right(&self) -> &BTreeSet<(NodeIndex, NodeIndex)> {
        &self.topo_right
    }

    pub fn membership(&self) -> &[BTreeMap<NodeIndex, ItemId>] {
        &self.membership
    }

    /// Every `(node, item)` pair across membership matchings.
    pub fn placement(&self) -> BTreeMap<ItemId, NodeIndex> {
        self.membership.iter().flat_map(|m| m.iter().map(|(&n, &v)| (v, n))).collect()
    }

    fn item_slots(&self) -> HashMap<ItemId, (usize, NodeIndex)> {
        let mut out = HashMap::new();
        for (k, m) in self.membership.iter().enumerate() {
            for (&n, &v) in m {
                out.insert(v, (k, n));
            }
        }
        out
    }

    /// Each item matched at most once overall (node uniqueness per matching
    /// is structural).
    pub fn check(&self) -> Result<()> {
        let mut seen = HashMap::new();
        for (k, m) in self.membership.iter().enumerate() {
            for (&n, &v) in m {
                if let Some((k0, n0)) = seen.insert(v, (k, n)) {
                    return Err(Error::MatchingInconsistency(format!(
                        "item {v} matched to node {n0} in membership-{k0} and node {n} in membership-{k}"
                    )));
                }
            }
        }
        Ok(())
    }

    fn edges_mut(&mut self, id: MatchingId) -> Result<&mut BTreeSet<(NodeIndex, NodeIndex)>> {
        match id {
            MatchingId::TopoLeft => Ok(&mut self.topo_left),
            MatchingId::TopoRight => Ok(&mut self.topo_right),
            MatchingId::Membership(_) => Err(Error::MatchingInconsistency("topo edge on membership matching".into())),
        }
    }

    fn member_mut(&mut self, k: usize) -> Result<&mut BTreeMap<NodeIndex, ItemId>> {
        self.membership
            .get_mut(k)
            .ok_or_else(|| Error::MatchingInconsistency(format!("no membership-{k}")))
    }

    /// Applies removals first, then additions, and rejects any delta that
    /// would match a node or an item twice.
    pub fn apply(&self, deltas: &[MatchingDelta]) -> Result<MatchingSet> {
        let mut out = self.clone();
        for (id, edge) in deltas.iter().flat_map(|d| &d.removals) {
            let ok = match (*id, *edge) {
                (MatchingId::Membership(k), Edge::Member(n, v)) => out.member_mut(k)?.remove(&n) == Some(v),
                (id, Edge::Topo(a, b)) => out.edges_mut(id)?.remove(&(a, b)),
                _ => false,
            };
            if !ok {
                return Err(Error::MatchingInconsistency(format!("removal of absent edge {edge:?} from {id:?}")));
            }
        }
        for (id, edge) in deltas.iter().flat_map(|d| &d.additions) {
            let ok = match (*id, *edge) {
                (MatchingId::Membership(k), Edge::Member(n, v)) => out.member_mut(k)?.insert(n, v).is_none(),
                (id, Edge::Topo(a, b)) => out.edges_mut(id)?.insert((a, b)),
                _ => false,
            };
            if !ok {
                return Err(Error::MatchingInconsistency(format!("addition of {edge:?} to {id:?} clashes")));
            }
        }
        out.check()?;
        Ok(out)
    }

    pub fn to_dump(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "# seedtree-matchings c={} depth={}", self.capacity, self.depth);
        let _ = writeln!(s, "[topo-left]");
        for (a, b) in &self.topo_left {
            let _ = writeln!(s, "{a} {b}");
        }
        let _ = writeln!(s, "[topo-right]");
        for (a, b) in &self.topo_right {
            let _ = writeln!(s, "{a} {b}");
        }
        for (k, m) in self.membership.iter().enumerate() {
            let _ = writeln!(s, "[membership-{k}]");
            for (n, v) in m {
                let _ = writeln!(s, "{n} {v}");
            }
        }
        s
    }

    pub fn from_dump(text: &str) -> Result<MatchingSet> {
        let mut lines = text.lines().enumerate();
        let bad = |line: usize, message: String| Error::Parse { line, message };
        let (capacity, depth) = {
            let (_, header) = lines.next().ok_or(Error::Parse { line: 1, message: "empty dump".into() })?;
            let mut c = None;
            let mut d = None;
            for kv in header.trim_start_matches("# seedtree-matchings").split_whitespace() {
                match kv.split_once('=') {
                    Some(("c", v)) => c = v.parse::<usize>().ok(),
                    Some(("depth", v)) => d = v.parse::<u32>().ok(),
                    _ => {}
                }
            }
            match (c, d) {
                (Some(c), Some(d)) => (c, d),
                _ => return Err(bad(1, format!("bad header {header:?}"))),
            }
        };
        let mut ms = MatchingSet {
            capacity,
            depth,
            topo_left: BTreeSet::new(),
            topo_right: BTreeSet::new(),
            membership: vec![BTreeMap::new(); capacity],
        };
        let mut section: Option<MatchingId> = None;
        for (i, line) in lines {
            let lineno = i + 1;
            let t = line.trim();
            if t.is_empty() || t.starts_with('#') {
                continue;
            }
            if let Some(name) = t.strip_prefix('[').and_then(|r| r.strip_suffix(']')) {
                section = Some(match name {
                    "topo-left" => MatchingId::TopoLeft,
                    "topo-right" => MatchingId::TopoRight,
                    other => {
                        let k = other
                            .strip_prefix("membership-")
                            .and_then(|k| k.parse::<usize>().ok())
                            .filter(|&k| k < capacity)
                            .ok_or_else(|| bad(lineno, format!("unknown section {other:?}")))?;
                        MatchingId::Membership(k)
                    }
                });
                continue;
            }
            let (a, b) = t.split_once(' ').ok_or_else(|| bad(lineno, format!("expected two fields: {t:?}")))?;
            let a: u64 = a.parse().map_err(|e| bad(lineno, format!("{e}")))?;
            let b: u64 = b.trim().parse().map_err(|e| bad(lineno, format!("{e}")))?;
            match section {
                Some(MatchingId::TopoLeft) => {
                    ms.topo_left.insert((NodeIndex(a), NodeIndex(b)));
                }
                Some(MatchingId::TopoRight) => {
                    ms.topo_right.insert((NodeIndex(a), NodeIndex(b)));
                }
                Some(MatchingId::Membership(k)) => {
                    if ms.membership[k].insert(NodeIndex(a), ItemId(b)).is_some() {
                        return Err(bad(lineno, format!("node {a} matched twice in membership-{k}")));
                    }
                }
                None => return Err(bad(lineno, "edge outside any section".into())),
            }
        }
        ms.check()?;
        Ok(ms)
    }
}

/// Snapshot of a settled tree. Item in slot `k` of a node is matched to that
/// node in membership matching `k`.
pub fn export(tree: &SeedTree) -> Result<MatchingSet> {
    if let Some(node) = tree.overfilled_node() {
        return Err(Error::Overfilled(node));
    }
    let mut ms = MatchingSet::skeleton(tree.capacity(), tree.max_depth());
    for (index, node) in tree.nodes() {
        for (slot, v) in node.slots() {
            ms.membership[slot].insert(index, v);
        }
    }
    Ok(ms)
}

/// Nodes visited by a search for `item`, ending at the node hosting it.
pub fn matching_search_path(ms: &MatchingSet, item: ItemId, address: &ItemAddress) -> Result<Vec<NodeIndex>> {
    let mut node = NodeIndex::ROOT;
    let mut path = vec![node];
    loop {
        if ms.membership.iter().any(|m| m.get(&node) == Some(&item)) {
            return Ok(path);
        }
        let bit = address.bit(u64::from(node.depth()));
        let child = route_child(node, bit);
        let edges = if bit == 0 { &ms.topo_left } else { &ms.topo_right };
        if !edges.contains(&(node, child)) {
            return Err(Error::MatchingInconsistency(format!("search for {item} left the tree at node {node}")));
        }
        node = child;
        path.push(node);
    }
}

/// Starts at the root, checks its membership edges, and otherwise follows the
/// topological edge picked by the item's next address bit.
pub fn matching_search(ms: &MatchingSet, item: ItemId, address: &ItemAddress) -> Result<NodeIndex> {
    matching_search_path(ms, item, address).map(|p| *p.last().expect("non-empty path"))
}

/// Per-item membership changes from `before` to `after`, ordered by item.
/// Each item contributes at most one removal and one addition. Topological
/// differences, if any, come last as a single delta.
pub fn diff(before: &MatchingSet, after: &MatchingSet) -> Vec<MatchingDelta> {
    let b = before.item_slots();
    let a = after.item_slots();
    let mut items: Vec<ItemId> = b.keys().chain(a.keys()).copied().collect();
    items.sort_unstable();
    items.dedup();
    let mut out = Vec::new();
    for v in items {
        let (old, new) = (b.get(&v), a.get(&v));
        if old == new {
            continue;
        }
        let mut d = MatchingDelta::default();
        if let Some(&(k, n)) = old {
            d.removals.push((MatchingId::Membership(k), Edge::Member(n, v)));
        }
        if let Some(&(k, n)) = new {
            d.additions.push((MatchingId::Membership(k), Edge::Member(n, v)));
        }
        out.push(d);
    }
    let mut topo = MatchingDelta::default();
    for (id, x, y) in [
        (MatchingId::TopoLeft, &before.topo_left, &after.topo_left),
        (MatchingId::TopoRight, &before.topo_right, &after.topo_right),
    ] {
        topo.removals.extend(x.difference(y).map(|&(p, c)| (id, Edge::Topo(p, c))));
        topo.additions.extend(y.difference(x).map(|&(p, c)| (id, Edge::Topo(p, c))));
    }
    if !topo.is_empty() {
        out.push(topo);
    }
    out
}
