use std::collections::BTreeSet;

use dcop_core::generator::{generate, GenConfig};
use dcop_core::mbdpop::{detect_clusters, Heuristic};
use dcop_core::oracle::brute_force;
use dcop_core::rmbdpop::CcPartition;
use dcop_core::runtime::{MessageKind, RunOptions, Schedule};
use dcop_core::solver::{solve, solve_on, Algorithm};
use dcop_core::{build_pseudo_tree, Problem, PseudoTree, VariableId};
use proptest::prelude::*;

fn instance() -> impl Strategy<Value = Problem> {
    let random = (4usize..10, 0.3f64..0.8, any::<u64>())
        .prop_filter_map("too sparse", |(n, d, s)| {
            generate(&GenConfig::random(n, d, s)).ok()
        });
    let scale_free = (5usize..10, 1usize..3, any::<u64>())
        .prop_map(|(n, m1, s)| generate(&GenConfig::scale_free(n, 3, m1, s)).unwrap());
    prop_oneof![random, scale_free]
}

fn bounded_variants(k: usize) -> Vec<Algorithm> {
    let mut v = vec![
        Algorithm::MbDpop {
            k,
            heuristic: Heuristic::Highest,
        },
        Algorithm::MbDpop {
            k,
            heuristic: Heuristic::Lowest,
        },
    ];
    for bits in 0..8 {
        v.push(Algorithm::RmbDpop {
            k,
            dem: bits & 1 != 0,
            ism: bits & 2 != 0,
            caching: bits & 4 != 0,
        });
    }
    v
}

/// Strict ancestors of `v` inside its cluster (stops at the cluster root).
fn cluster_path(tree: &PseudoTree, cr: VariableId, v: VariableId) -> Vec<VariableId> {
    let mut out = Vec::new();
    let mut cur = tree.parent[v.0];
    while let Some(p) = cur {
        if p == cr {
            break;
        }
        out.push(p);
        cur = tree.parent[p.0];
    }
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn dpop_matches_brute_force(p in instance()) {
        let (_, best) = brute_force(&p).unwrap();
        let r = solve(&p, &Algorithm::Dpop { cap: None }, RunOptions::fifo()).unwrap();
        prop_assert_eq!(r.cost, Some(best));
        prop_assert_eq!(r.metrics.total_messages(), 2 * (p.n() as u64 - 1));
    }

    #[test]
    fn bounded_variants_are_optimal_and_bounded(p in instance(), k in 1usize..4) {
        let (_, best) = brute_force(&p).unwrap();
        for algo in bounded_variants(k) {
            let r = solve(&p, &algo, RunOptions::fifo()).unwrap();
            prop_assert_eq!(r.cost, Some(best), "{:?}", algo);
            prop_assert!(r.metrics.peak_table_dims <= k, "{:?}", algo);
        }
    }

    #[test]
    fn schedule_does_not_change_outcome(p in instance(), seed in any::<u64>(), bits in 0u8..8) {
        let algo = Algorithm::RmbDpop { k: 2, dem: bits & 1 != 0, ism: bits & 2 != 0, caching: bits & 4 != 0 };
        let fifo = solve(&p, &algo, RunOptions::fifo()).unwrap();
        let opts = RunOptions { schedule: Schedule::Random(seed), ..RunOptions::fifo() };
        let shuffled = solve(&p, &algo, opts).unwrap();
        prop_assert_eq!(fifo.cost, shuffled.cost);
        prop_assert_eq!(fifo.metrics.msg_count, shuffled.metrics.msg_count);
    }

    /// Without caching a member hears one instantiation per combination of
    /// the root's own cycle-cut nodes and the cycle-cut nodes on its path.
    #[test]
    fn instantiation_count_follows_path(p in instance(), ism in any::<bool>()) {
        let tree = build_pseudo_tree(&p).unwrap();
        let algo = Algorithm::RmbDpop { k: 2, dem: true, ism, caching: false };
        let r = solve_on(&p, &tree, &algo, RunOptions::fifo()).unwrap();
        let clusters = r.clusters.unwrap();
        for cl in &clusters.list {
            let out = CcPartition::new(&tree, cl.cr, &r.cclists[cl.cr.0]).cc_out;
            for &m in &cl.members {
                let path: BTreeSet<VariableId> = cluster_path(&tree, cl.cr, m)
                    .into_iter()
                    .filter(|u| r.cclists[u.0].contains(u))
                    .collect();
                let vars: BTreeSet<VariableId> = out.iter().copied().chain(path).collect();
                let want: u64 = vars.iter().map(|v| p.domain(*v) as u64).product();
                prop_assert_eq!(r.metrics.received_by(m, MessageKind::Instantiation), want);
            }
        }
    }

    #[test]
    fn distributed_enumeration_never_costs_more(p in instance()) {
        let tree = build_pseudo_tree(&p).unwrap();
        let mb = solve_on(&p, &tree, &Algorithm::MbDpop { k: 2, heuristic: Heuristic::Highest }, RunOptions::fifo()).unwrap();
        let algo = Algorithm::RmbDpop { k: 2, dem: true, ism: false, caching: false };
        let rmb = solve_on(&p, &tree, &algo, RunOptions::fifo()).unwrap();
        prop_assert_eq!(&mb.cclists, &rmb.cclists);
        let inner = detect_clusters(&tree, 2).list.iter().any(|cl| {
            !CcPartition::new(&tree, cl.cr, &rmb.cclists[cl.cr.0]).cc_in.is_empty()
        });
        let (a, b) = (rmb.metrics.total_messages(), mb.metrics.total_messages());
        prop_assert!(a <= b);
        if inner {
            prop_assert!(a < b);
        }
    }

    #[test]
    fn caching_is_sound(p in instance(), dem in any::<bool>(), ism in any::<bool>()) {
        let plain = solve(&p, &Algorithm::RmbDpop { k: 2, dem, ism, caching: false }, RunOptions::fifo()).unwrap();
        let cached = solve(&p, &Algorithm::RmbDpop { k: 2, dem, ism, caching: true }, RunOptions::fifo()).unwrap();
        prop_assert_eq!(plain.cost, cached.cost);
        prop_assert_eq!(&plain.cclists, &cached.cclists);
        prop_assert!(
            cached.metrics.count(MessageKind::Instantiation) <= plain.metrics.count(MessageKind::Instantiation)
        );
    }
}
