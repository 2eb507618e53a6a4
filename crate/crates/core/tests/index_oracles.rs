//! Brute-force plaintext oracles for the cipher B-tree.

use std::ops::Bound;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use cipherdb_core::crypto::{derive_column_key, ore_decrypt, ore_encrypt, MasterKey, OreWidth, Scheme};
use cipherdb_core::index::{comparator, CipherBTree, IndexError, OreKey, DEFAULT_FANOUT};

fn setup(seed: u64) -> (ChaCha8Rng, cipherdb_core::crypto::ColumnKey) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let master = MasterKey::generate(&mut rng);
    let key = derive_column_key(&master, b"idx", Scheme::Ore).unwrap();
    (rng, key)
}

fn height_bound(fanout: usize, n: usize) -> usize {
    if n == 0 {
        return 1;
    }
    let half = (fanout as f64 / 2.0).ceil();
    (n as f64).log(half).ceil() as usize + 1
}

#[test]
fn comparator_agrees_with_plaintext() {
    let (mut rng, key) = setup(1);
    let e3 = ore_encrypt(3, &key, OreWidth::W32, &mut rng).unwrap();
    let e9 = ore_encrypt(9, &key, OreWidth::W32, &mut rng).unwrap();
    assert_eq!(comparator(&e3, &e9).unwrap(), -1);
    let e3b = ore_encrypt(3, &key, OreWidth::W32, &mut rng).unwrap();
    assert_eq!(comparator(&e3, &e3b).unwrap(), 0);
    for _ in 0..200 {
        let (x, y) = (rng.gen::<u32>() as u64, rng.gen::<u32>() as u64);
        let cx = ore_encrypt(x, &key, OreWidth::W32, &mut rng).unwrap();
        let cy = ore_encrypt(y, &key, OreWidth::W32, &mut rng).unwrap();
        let fwd = comparator(&cx, &cy).unwrap();
        assert_eq!(fwd, -comparator(&cy, &cx).unwrap());
        assert_eq!(fwd as i64, (x as i64 - y as i64).signum().min(1).max(-1));
    }
}

#[test]
fn insert_traversal_matches_sort_oracle() {
    let (mut rng, key) = setup(2);
    let mut tree = CipherBTree::new(DEFAULT_FANOUT);
    let mut plains = Vec::new();
    for row_id in 0..10_000u64 {
        let m = rng.gen::<u32>() as u64;
        let cipher = ore_encrypt(m, &key, OreWidth::W32, &mut rng).unwrap();
        tree.insert(OreKey { cipher, row_id }).unwrap();
        plains.push(m);
    }
    tree.check_invariants().unwrap();
    assert!(tree.height() <= height_bound(DEFAULT_FANOUT, 10_000));

    let decrypted: Vec<u64> = tree
        .keys_in_order()
        .unwrap()
        .iter()
        .map(|k| ore_decrypt(&k.cipher, &key, OreWidth::W32).unwrap())
        .collect();
    let mut expected = plains.clone();
    expected.sort_unstable();
    assert_eq!(decrypted, expected);
}

#[test]
fn duplicates_order_by_row_id() {
    let (mut rng, key) = setup(3);
    let mut tree = CipherBTree::new(8);
    for row_id in [5u64, 2, 9, 1] {
        let cipher = ore_encrypt(42, &key, OreWidth::W32, &mut rng).unwrap();
        tree.insert(OreKey { cipher, row_id }).unwrap();
    }
    let ids: Vec<u64> = tree.keys_in_order().unwrap().iter().map(|k| k.row_id).collect();
    assert_eq!(ids, vec![1, 2, 5, 9]);
}

#[test]
fn empty_tree_contract() {
    let tree = CipherBTree::new(DEFAULT_FANOUT);
    assert_eq!(tree.height(), 1);
    assert!(matches!(tree.ore_min(), Err(IndexError::EmptyTree)));
    assert!(matches!(tree.ore_max(), Err(IndexError::EmptyTree)));
}

#[test]
fn range_scan_matches_brute_force_oracle() {
    let (mut rng, key) = setup(4);
    // Randomized (dataset, interval) instances against the plaintext filter.
    for trial in 0..30 {
        let n = 500 + trial * 37;
        let mut tree = CipherBTree::new(16);
        let mut plains = Vec::new();
        for row_id in 0..n as u64 {
            let m = rng.gen_range(0u64..1000);
            let cipher = ore_encrypt(m, &key, OreWidth::W32, &mut rng).unwrap();
            tree.insert(OreKey { cipher, row_id }).unwrap();
            plains.push(m);
        }
        tree.check_invariants().unwrap();

        let (mut lo, mut hi) = (rng.gen_range(0u64..1000), rng.gen_range(0u64..1000));
        if lo > hi {
            std::mem::swap(&mut lo, &mut hi);
        }
        let lo_c = ore_encrypt(lo, &key, OreWidth::W32, &mut rng).unwrap();
        let hi_c = ore_encrypt(hi, &key, OreWidth::W32, &mut rng).unwrap();

        let got = tree
            .range_scan(Bound::Included(&lo_c), Bound::Included(&hi_c))
            .unwrap();
        let mut expected: Vec<u64> = plains
            .iter()
            .enumerate()
            .filter(|(_, &m)| m >= lo && m <= hi)
            .map(|(i, _)| i as u64)
            .collect();
        expected.sort_by_key(|&i| (plains[i as usize], i));
        assert_eq!(got, expected);

        let got_open = tree
            .range_scan(Bound::Excluded(&lo_c), Bound::Excluded(&hi_c))
            .unwrap();
        let mut expected_open: Vec<u64> = plains
            .iter()
            .enumerate()
            .filter(|(_, &m)| m > lo && m < hi)
            .map(|(i, _)| i as u64)
            .collect();
        expected_open.sort_by_key(|&i| (plains[i as usize], i));
        assert_eq!(got_open, expected_open);
    }
}

#[test]
fn range_scan_edge_cases() {
    let (mut rng, key) = setup(5);
    let mut tree = CipherBTree::new(8);
    for (row_id, m) in (1u64..=100).enumerate() {
        let cipher = ore_encrypt(m, &key, OreWidth::W32, &mut rng).unwrap();
        tree.insert(OreKey { cipher, row_id: row_id as u64 }).unwrap();
    }
    let c10 = ore_encrypt(10, &key, OreWidth::W32, &mut rng).unwrap();
    let c20 = ore_encrypt(20, &key, OreWidth::W32, &mut rng).unwrap();

    // [10, 20] closed over keys {1..100} holds 11 rows.
    let hits = tree.range_scan(Bound::Included(&c10), Bound::Included(&c20)).unwrap();
    assert_eq!(hits.len(), 11);

    // (x, x) open is empty.
    let open = tree.range_scan(Bound::Excluded(&c10), Bound::Excluded(&c10)).unwrap();
    assert!(open.is_empty());

    // Unbounded scan returns everything in order.
    let all = tree.range_scan(Bound::Unbounded, Bound::Unbounded).unwrap();
    assert_eq!(all.len(), 100);

    // Inverted bounds are rejected.
    assert!(matches!(
        tree.range_scan(Bound::Included(&c20), Bound::Included(&c10)),
        Err(IndexError::InvertedBounds)
    ));
}

#[test]
fn min_max_and_tombstone_rebuild() {
    let (mut rng, key) = setup(6);
    let mut tree = CipherBTree::new(8);
    for (row_id, m) in [(0u64, 5u64), (1, 1), (2, 9)] {
        let cipher = ore_encrypt(m, &key, OreWidth::W32, &mut rng).unwrap();
        tree.insert(OreKey { cipher, row_id }).unwrap();
    }
    let min = tree.ore_min().unwrap();
    let max = tree.ore_max().unwrap();
    assert_eq!(ore_decrypt(&min.cipher, &key, OreWidth::W32).unwrap(), 1);
    assert_eq!(ore_decrypt(&max.cipher, &key, OreWidth::W32).unwrap(), 9);

    // Delete the current max; after rebuild the next max surfaces.
    tree.delete(max.row_id);
    tree.rebuild().unwrap();
    tree.check_invariants().unwrap();
    let max2 = tree.ore_max().unwrap();
    assert_eq!(ore_decrypt(&max2.cipher, &key, OreWidth::W32).unwrap(), 5);
    assert_eq!(tree.live_len(), 2);

    // Single key: min == max.
    let mut single = CipherBTree::new(8);
    let c = ore_encrypt(7, &key, OreWidth::W32, &mut rng).unwrap();
    single.insert(OreKey { cipher: c, row_id: 0 }).unwrap();
    assert_eq!(single.ore_min().unwrap(), single.ore_max().unwrap());
}

#[test]
fn comparator_sequence_identical_for_order_isomorphic_inputs() {
    // Two plaintext sequences with the same order relations must drive the
    // tree through the same comparator outcome sequence during bulk insert.
    let (mut rng, key) = setup(7);
    let base: Vec<u64> = (0..2000).map(|_| rng.gen_range(0u64..500_000)).collect();
    // Strictly monotone remap preserves all order relations.
    let remapped: Vec<u64> = base.iter().map(|&v| v * 3 + 17).collect();

    let mut logs = Vec::new();
    for seq in [&base, &remapped] {
        let mut tree = CipherBTree::new(16);
        tree.record_compares();
        for (row_id, &m) in seq.iter().enumerate() {
            let cipher = ore_encrypt(m, &key, OreWidth::W32, &mut rng).unwrap();
            tree.insert(OreKey { cipher, row_id: row_id as u64 }).unwrap();
        }
        logs.push(tree.take_compare_log());
    }
    assert!(!logs[0].is_empty());
    assert_eq!(logs[0], logs[1]);
}

#[test]
fn page_file_round_trip() {
    let (mut rng, key) = setup(8);
    let mut tree = CipherBTree::new(16);
    for row_id in 0..500u64 {
        let m = rng.gen::<u32>() as u64;
        let cipher = ore_encrypt(m, &key, OreWidth::W32, &mut rng).unwrap();
        tree.insert(OreKey { cipher, row_id }).unwrap();
    }
    tree.delete(42);

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("idx.cbt");
    tree.save(&path).unwrap();
    let loaded = CipherBTree::load(&path).unwrap();
    loaded.check_invariants().unwrap();
    assert_eq!(loaded.keys_in_order().unwrap(), tree.keys_in_order().unwrap());
    assert_eq!(loaded.live_len(), tree.live_len());
}
