use std::collections::HashSet;

use proptest::prelude::*;
use seedtree_core::{
    diff, export, generate_trace, generate_trace_with_stats, matching_search, mru_audit, mru_level, path_node, simulate, CostLedger,
    ItemId, RankTracker, SeedTree, TreeConfig,
};

fn items(n: u64) -> Vec<ItemId> {
    (0..n).map(ItemId).collect()
}

/// Residency and capacity by brute-force recomputation, independent of
/// `check_invariants`.
fn scan(tree: &SeedTree) {
    let c = tree.capacity();
    let seed = tree.config().seed;
    let mut seen = HashSet::new();
    for (index, node) in tree.nodes() {
        assert!(node.len() <= c, "node {index} holds {}", node.len());
        for v in node.items() {
            assert_eq!(path_node(v, seed, index.depth()), index, "{v} off its path");
            assert_eq!(tree.location(v), Some(index));
            assert!(seen.insert(v));
        }
    }
    assert_eq!(seen.len(), tree.len());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn accesses_preserve_tree_invariants(
        c in 1usize..6,
        f in 0.1f64..0.9,
        n in 1u64..200,
        seed in any::<u64>(),
        reqs in prop::collection::vec(any::<u64>(), 1..300),
    ) {
        let mut tree = SeedTree::init(&items(n), TreeConfig::new(c, f, seed)).unwrap();
        tree.set_self_check(true);
        let counts = tree.level_counts().to_vec();
        scan(&tree);
        for r in reqs {
            let v = ItemId(r % n);
            let rec = tree.access(v).unwrap();
            prop_assert_eq!(tree.level_counts(), counts.as_slice());
            prop_assert_eq!(rec.access_cost, u64::from(rec.level_found));
            prop_assert_eq!(rec.total_cost, rec.access_cost + rec.reconfig_cost);
            prop_assert_eq!(rec.push_down_attempts == 0, rec.level_found == 0);
            let l = u64::from(rec.level_found);
            if l > 0 {
                let a = u64::from(rec.push_down_attempts);
                prop_assert_eq!(rec.reconfig_cost, l + (a - 1) * 2 * l + l);
                prop_assert_eq!(rec.reversal_cost, (a - 1) * l);
                prop_assert_eq!(rec.terminal.map(|t| t.depth()), Some(rec.level_found));
            } else {
                prop_assert_eq!(rec.reconfig_cost, 0);
            }
        }
        scan(&tree);
        tree.check_invariants().unwrap();
        prop_assert_eq!(tree.recompute_digest(), tree.state_digest());
    }

    #[test]
    fn init_respects_quotas(c in 1usize..8, f in 0.05f64..0.95, n in 1u64..500, seed in any::<u64>()) {
        let tree = SeedTree::init(&items(n), TreeConfig::new(c, f, seed)).unwrap();
        scan(&tree);
        let report = tree.init_report();
        for l in 0..=report.last_quota_level {
            prop_assert!(tree.level_count(l) <= tree.config().level_quota(l));
        }
        prop_assert_eq!(tree.level_counts().iter().sum::<u64>(), n);
    }

    #[test]
    fn equal_inputs_give_equal_streams(c in 1usize..5, seed in any::<u64>(), p in 0.0f64..0.9) {
        let trace = generate_trace(60, 300, p, seed).unwrap();
        let a = simulate(&trace, TreeConfig::new(c, 0.5, seed), false).unwrap();
        let mut ledger = CostLedger::with_log();
        let mut tree = SeedTree::init(&trace.items(), TreeConfig::new(c, 0.5, seed)).unwrap();
        let mut ranks = RankTracker::new(trace.n_items());
        for &v in trace.requests() {
            let rank = ranks.observe(v);
            ledger.record(&tree.access(v).unwrap(), rank, c);
        }
        prop_assert_eq!(a.ledger.total(), ledger.total());
        let again = simulate(&trace, TreeConfig::new(c, 0.5, seed), false).unwrap();
        prop_assert_eq!(a.ledger, again.ledger);
    }

    #[test]
    fn rank_bounds(reqs in prop::collection::vec(0u64..40, 1..300)) {
        let mut tracker = RankTracker::new(40);
        let mut prev = None;
        for r in reqs {
            let v = ItemId(r);
            let rank = tracker.observe(v);
            prop_assert!((1..=40).contains(&rank));
            if prev == Some(v) {
                prop_assert_eq!(rank, 1);
            }
            prev = Some(v);
        }
    }

    #[test]
    fn matchings_track_every_state(c in 1usize..5, n in 2u64..120, seed in any::<u64>(), reqs in prop::collection::vec(any::<u64>(), 1..60)) {
        let mut tree = SeedTree::init(&items(n), TreeConfig::new(c, 0.5, seed)).unwrap();
        let mut before = export(&tree).unwrap();
        for r in reqs {
            let inner = (1u64 << before.depth()) - 1;
            prop_assert_eq!(before.topo_left().len() as u64, inner);
            prop_assert!(before.topo_left().iter().all(|&(p, ch)| ch.0 == 2 * p.0));
            prop_assert!(before.topo_right().iter().all(|&(p, ch)| ch.0 == 2 * p.0 + 1));
            for v in tree.items() {
                prop_assert_eq!(matching_search(&before, v, tree.address(v).unwrap()).unwrap(), tree.find(v).unwrap().0);
            }
            tree.access(ItemId(r % n)).unwrap();
            let after = export(&tree).unwrap();
            let deltas = diff(&before, &after);
            prop_assert!(deltas.iter().all(|d| d.removals.len() <= 1 && d.additions.len() <= 1));
            prop_assert_eq!(before.apply(&deltas).unwrap(), after.clone());
            before = after;
        }
    }
}

#[test]
fn fullness_bounded_by_occupancy_when_quotas_met() {
    let mut checked = 0;
    for seed in 0..40 {
        let tree_items = items(60);
        let mut tree = SeedTree::init(&tree_items, TreeConfig::new(8, 0.5, seed)).unwrap();
        if !tree.init_report().met_quotas_exactly() {
            continue;
        }
        checked += 1;
        let last = tree.init_report().last_quota_level;
        let trace = generate_trace(60, 2_000, 0.5, seed).unwrap();
        for &v in trace.requests() {
            tree.access(v).unwrap();
            assert!(tree.full_fraction(last) <= 0.5, "seed {seed}");
        }
    }
    assert!(checked > 10, "only {checked} seeds met quotas");
}

#[test]
fn audit_equals_offline_recomputation() {
    let trace = generate_trace(255, 20_000, 0.6, 21).unwrap();
    let c = 2;
    let mut tree = SeedTree::init(&trace.items(), TreeConfig::new(c, 0.5, 21)).unwrap();
    let mut ranks = RankTracker::new(trace.n_items());
    let mut log = Vec::new();
    let mut ledger = CostLedger::with_log();
    for &v in trace.requests() {
        let rank = ranks.observe(v);
        let rec = tree.access(v).unwrap();
        ledger.record(&rec, rank, c);
        log.push(rank);
    }
    let online = simulate(&trace, TreeConfig::new(c, 0.5, 21), false).unwrap().audit;
    let offline = mru_audit(ledger.records.iter().zip(&log).map(|(r, &rank)| (r.level_found, rank)), c);
    assert_eq!(online, offline);
    let sum: i64 = ledger
        .records
        .iter()
        .zip(&log)
        .map(|(r, &rank)| i64::from(r.level_found) - i64::from(mru_level(rank, c)))
        .sum();
    assert_eq!(offline.sum, sum);
    assert_eq!(ledger.total(), ledger.access + ledger.reconfig);
}

#[test]
fn stage_three_covers_paper_scale_item_count() {
    let (trace, stats) = generate_trace_with_stats(65_535, 1_000_000, 0.6, 3).unwrap();
    assert_eq!(trace.requests().iter().collect::<HashSet<_>>().len(), 65_535);
    assert_eq!(trace.n_items(), 65_535);
    assert!((stats.locality_repeat_fraction - 0.6).abs() < 0.005);
}
