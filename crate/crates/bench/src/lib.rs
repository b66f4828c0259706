//! Workload fixtures shared by the criterion benches.

use seedtree_core::{generate_trace, SeedTree, Trace, TreeConfig};

/// Synthetic trace over `n_items` with locality `p`, fixed seed.
pub fn workload(n_items: u64, requests: usize, p: f64) -> Trace {
    generate_trace(n_items, requests, p, 0xbe4c).expect("valid bench parameters")
}

/// Tree holding every item of `trace`, warmed by one pass over it.
pub fn warmed_tree(trace: &Trace, capacity: usize, occupancy: f64) -> SeedTree {
    let mut tree = SeedTree::init(&trace.items(), TreeConfig::new(capacity, occupancy, 7)).expect("valid tree");
    for &v in trace.requests() {
        tree.access(v).expect("item present");
    }
    tree
}
