//! Production routines checked against the brute-force oracles.

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sleepy_core::brute::{brute_ancestor, brute_gpe_validity, brute_window_count, frequency, GpeSetup};
use sleepy_core::harness::gpe_probe;
use sleepy_core::ledger::{Block, BlockStore};
use sleepy_core::oracle::HashFn;
use sleepy_core::schedule::{corrupt_window_count, ParticipationSchedule};
use sleepy_core::{Digest, NodeId, Window};

fn window(rng: &mut ChaCha8Rng) -> Window {
    if rng.gen_bool(0.2) {
        Window::Infinite
    } else {
        Window::Finite(rng.gen_range(0..6))
    }
}

#[test]
fn window_count_matches_set_union() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..10_000 {
        let n = rng.gen_range(1..6);
        let h = rng.gen_range(1..12);
        let awake: Vec<Vec<bool>> = (0..n).map(|_| (0..h).map(|_| rng.gen_bool(0.3)).collect()).collect();
        let corrupt: Vec<bool> = (0..n).map(|_| rng.gen_bool(0.4)).collect();
        let (tf, tb) = (window(&mut rng), window(&mut rng));
        let t = rng.gen_range(0..h as u64);
        let s = ParticipationSchedule::new(awake.clone(), corrupt.clone());
        assert_eq!(
            corrupt_window_count(&s, t, tf, tb),
            brute_window_count(&awake, &corrupt, t, tf, tb),
            "t={t} tf={tf:?} tb={tb:?} awake={awake:?} corrupt={corrupt:?}"
        );
    }
}

#[test]
fn extends_matches_path_walk() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for round in 0..50 {
        let mut store = BlockStore::new(HashFn::new(round, 32));
        let mut tree: Vec<(Digest, Option<Digest>)> = vec![(store.genesis(), None)];
        for i in 0..20u8 {
            let parent = tree[rng.gen_range(0..tree.len())].0;
            let b = Block {
                content: vec![vec![i]],
                parent: Some(parent),
                view: 1 + i as u64,
                epoch: 0,
                seed: None,
                proposer: Some(NodeId(0)),
            };
            tree.push((store.insert(b).unwrap(), Some(parent)));
        }
        for &(a, _) in &tree {
            for &(b, _) in &tree {
                assert_eq!(store.extends(&a, &b).unwrap(), brute_ancestor(&tree, a, b));
            }
        }
    }
}

#[test]
fn gpe_validity_matches_ticket_oracle() {
    for seed in 0..3 {
        let s = GpeSetup {
            n: 4,
            corrupt: 1,
            seed,
            lambda: 32,
            views: 40,
        };
        let oracle = brute_gpe_validity(&s);
        let got = gpe_probe(&s).unwrap();
        assert_eq!(got.len(), 40);
        for (v, ok) in got {
            assert_eq!(ok, oracle[v as usize - 1], "seed {seed} view {v}");
        }
    }
}

#[test]
fn ticket_oracle_frequency() {
    let mut hits = Vec::new();
    for seed in 0..1000 {
        hits.extend(brute_gpe_validity(&GpeSetup {
            n: 3,
            corrupt: 1,
            seed,
            lambda: 32,
            views: 1,
        }));
    }
    // two honest of three: about 2/3 in expectation
    assert!(frequency(&hits) >= 0.45, "{}", frequency(&hits));
    let honest = brute_gpe_validity(&GpeSetup {
        n: 5,
        corrupt: 0,
        seed: 3,
        lambda: 32,
        views: 100,
    });
    assert_eq!(frequency(&honest), 1.0);
}

proptest! {
    #[test]
    fn window_count_is_monotone_in_the_window(
        rows in prop::collection::vec(prop::collection::vec(any::<bool>(), 8), 1..5),
        t in 0u64..8,
        a in 0u64..4,
        b in 0u64..4,
    ) {
        let corrupt = vec![true; rows.len()];
        let s = ParticipationSchedule::new(rows, corrupt);
        let small = corrupt_window_count(&s, t, Window::Finite(a), Window::Finite(b));
        let big = corrupt_window_count(&s, t, Window::Finite(a + 1), Window::Finite(b + 1));
        let all = corrupt_window_count(&s, t, Window::Infinite, Window::Infinite);
        prop_assert!(small <= big && big <= all && all <= s.n());
    }
}
