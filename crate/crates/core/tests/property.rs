//! Property-based checks: randomized inputs with shrinking for the
//! order-revealing comparison, homomorphic sums, and index scans.

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use cipherdb_core::crypto::{
    derive_column_key, modp, ore_compare, ore_encrypt, sahe_add, sahe_decrypt, sahe_encrypt,
    ColumnKey, MasterKey, OreWidth, Scheme,
};
use cipherdb_core::index::{CipherBTree, OreKey};

fn keys(seed: u64) -> (ChaCha8Rng, ColumnKey, ColumnKey) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let master = MasterKey::generate(&mut rng);
    let ore = derive_column_key(&master, b"p.ore", Scheme::Ore).unwrap();
    let ahe = derive_column_key(&master, b"p.ahe", Scheme::Ahe).unwrap();
    (rng, ore, ahe)
}

proptest! {
    #[test]
    fn ore_comparison_agrees_with_plaintext_order(seed: u64, x: u64, y: u64) {
        let (mut rng, ore, _) = keys(seed);
        let cx = ore_encrypt(x, &ore, OreWidth::W64, &mut rng).unwrap();
        let cy = ore_encrypt(y, &ore, OreWidth::W64, &mut rng).unwrap();
        prop_assert_eq!(ore_compare(&cx, &cy).unwrap(), x.cmp(&y));
        prop_assert_eq!(ore_compare(&cy, &cx).unwrap(), y.cmp(&x));
    }

    #[test]
    fn ahe_sum_of_any_vector_round_trips(seed: u64, values in prop::collection::vec(0u64..1 << 48, 1..40)) {
        let (_, _, ahe) = keys(seed);
        let mut acc = None;
        let mut expected = 0u128;
        for (i, &v) in values.iter().enumerate() {
            let c = sahe_encrypt(v as u128, &ahe, i as u64).unwrap();
            expected = modp::add_mod(expected, v as u128);
            acc = Some(match acc {
                None => c,
                Some(a) => sahe_add(&a, &c).unwrap(),
            });
        }
        prop_assert_eq!(sahe_decrypt(&acc.unwrap(), &ahe).unwrap(), expected);
    }

    #[test]
    fn index_scan_equals_filter_for_any_dataset(
        seed: u64,
        values in prop::collection::vec(0u64..500, 0..120),
        bounds: (u64, u64),
    ) {
        let (mut rng, ore, _) = keys(seed);
        let (lo, hi) = (bounds.0.min(bounds.1) % 500, bounds.0.max(bounds.1) % 500);
        let (lo, hi) = (lo.min(hi), lo.max(hi));
        let mut tree = CipherBTree::new(8);
        for (row_id, &v) in values.iter().enumerate() {
            let cipher = ore_encrypt(v, &ore, OreWidth::W32, &mut rng).unwrap();
            tree.insert(OreKey { cipher, row_id: row_id as u64 }).unwrap();
        }
        tree.check_invariants().unwrap();
        let lo_c = ore_encrypt(lo, &ore, OreWidth::W32, &mut rng).unwrap();
        let hi_c = ore_encrypt(hi, &ore, OreWidth::W32, &mut rng).unwrap();
        let got = tree
            .range_scan(std::ops::Bound::Included(&lo_c), std::ops::Bound::Included(&hi_c))
            .unwrap();
        let mut expected: Vec<u64> = values
            .iter()
            .enumerate()
            .filter(|(_, &v)| v >= lo && v <= hi)
            .map(|(i, _)| i as u64)
            .collect();
        expected.sort_by_key(|&i| (values[i as usize], i));
        prop_assert_eq!(got, expected);
    }
}
