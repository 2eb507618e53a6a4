//! Plaintext-oracle checks for every ciphertext scheme.

use std::cmp::Ordering;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use cipherdb_core::crypto::{
    derive_column_key, det_encrypt, modp, ore_compare, ore_decrypt, ore_encrypt, rnd_decrypt,
    rnd_encrypt, sahe_add, sahe_add_plain, sahe_decrypt, sahe_encrypt, sahe_sub, smhe_decrypt,
    smhe_div, smhe_encrypt, smhe_mul, smhe_mul_plain, CryptoError, MasterKey, OreWidth, RndCipher,
    Scheme,
};

fn rng() -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(0x5eed)
}

fn master(rng: &mut ChaCha8Rng) -> MasterKey {
    MasterKey::generate(rng)
}

#[test]
fn key_derivation_is_deterministic_and_separated() {
    let mut r = rng();
    let k = master(&mut r);
    let a1 = derive_column_key(&k, b"col_a", Scheme::Ore).unwrap();
    let a2 = derive_column_key(&k, b"col_a", Scheme::Ore).unwrap();
    assert_eq!(a1.key_bytes(), a2.key_bytes());

    let det = derive_column_key(&k, b"col_a", Scheme::Det).unwrap();
    assert_ne!(a1.key_bytes(), det.key_bytes());

    let other_label = derive_column_key(&k, b"col_b", Scheme::Ore).unwrap();
    assert_ne!(a1.key_bytes(), other_label.key_bytes());

    assert_eq!(
        derive_column_key(&k, b"", Scheme::Ore).unwrap_err(),
        CryptoError::EmptyLabel
    );
}

#[test]
fn key_derivation_independent_across_masters() {
    let mut r = rng();
    for _ in 0..100 {
        let k1 = master(&mut r);
        let k2 = master(&mut r);
        let a = derive_column_key(&k1, b"col_a", Scheme::Ore).unwrap();
        let b = derive_column_key(&k2, b"col_a", Scheme::Ore).unwrap();
        assert_ne!(a.key_bytes(), b.key_bytes());
    }
}

#[test]
fn sahe_matches_plaintext_addition_oracle() {
    let mut r = rng();
    let k = derive_column_key(&master(&mut r), b"a", Scheme::Ahe).unwrap();
    for _ in 0..1000 {
        let (x, y) = (r.gen::<u64>() as u128, r.gen::<u64>() as u128);
        let cx = sahe_encrypt(x, &k, r.gen()).unwrap();
        let cy = sahe_encrypt(y, &k, r.gen()).unwrap();
        let sum = sahe_add(&cx, &cy).unwrap();
        assert_eq!(sahe_decrypt(&sum, &k).unwrap(), modp::add_mod(x, y));
        assert_eq!(sum.nonces.len(), 2);
        let diff = sahe_sub(&cx, &cy).unwrap();
        assert_eq!(sahe_decrypt(&diff, &k).unwrap(), modp::sub_mod(x, y));
    }
}

#[test]
fn sahe_identities() {
    let mut r = rng();
    let k = derive_column_key(&master(&mut r), b"a", Scheme::Ahe).unwrap();
    let m = 123456789u128;
    let zero = sahe_encrypt(0, &k, 7).unwrap();
    let cm = sahe_encrypt(m, &k, 8).unwrap();
    assert_eq!(sahe_decrypt(&sahe_add(&zero, &cm).unwrap(), &k).unwrap(), m);
    assert_eq!(sahe_decrypt(&sahe_sub(&cm, &cm).unwrap(), &k).unwrap(), 0);
    assert_eq!(
        sahe_decrypt(&sahe_add_plain(&cm, 11).unwrap(), &k).unwrap(),
        m + 11
    );
    // E(0)'s masked value is exactly the PRF output.
    assert_eq!(
        zero.masked_sum,
        cipherdb_core::crypto::keys::prf_mask(&k, 7)
    );
    // Round trip plus nondeterminism over distinct nonces.
    let c1 = sahe_encrypt(5, &k, 1).unwrap();
    let c2 = sahe_encrypt(5, &k, 2).unwrap();
    assert_ne!(c1.to_bytes(), c2.to_bytes());
    assert_eq!(sahe_decrypt(&c1, &k).unwrap(), 5);
}

#[test]
fn sahe_overlapping_nonce_multisets_decrypt_with_multiplicity() {
    let mut r = rng();
    let k = derive_column_key(&master(&mut r), b"a", Scheme::Ahe).unwrap();
    let c = sahe_encrypt(21, &k, 99).unwrap();
    // Re-aggregating the same ciphertext duplicates its nonce.
    let doubled = sahe_add(&c, &c).unwrap();
    assert_eq!(doubled.nonces.len(), 2);
    assert_eq!(sahe_decrypt(&doubled, &k).unwrap(), 42);
}

#[test]
fn smhe_matches_plaintext_multiplication_oracle() {
    let mut r = rng();
    let k = derive_column_key(&master(&mut r), b"m", Scheme::Mhe).unwrap();
    for _ in 0..1000 {
        let (x, y) = (r.gen::<u64>() as u128, (r.gen::<u64>() as u128) | 1);
        let cx = smhe_encrypt(x, &k, r.gen()).unwrap();
        let cy = smhe_encrypt(y, &k, r.gen()).unwrap();
        let prod = smhe_mul(&cx, &cy).unwrap();
        assert_eq!(smhe_decrypt(&prod, &k).unwrap(), modp::mul_mod(x, y));
        // Division undoes the multiplication.
        let quot = smhe_div(&prod, &cy).unwrap();
        assert_eq!(smhe_decrypt(&quot, &k).unwrap(), x);
    }
}

#[test]
fn smhe_identities() {
    let mut r = rng();
    let k = derive_column_key(&master(&mut r), b"m", Scheme::Mhe).unwrap();
    let c6 = smhe_encrypt(6, &k, 1).unwrap();
    let c7 = smhe_encrypt(7, &k, 2).unwrap();
    assert_eq!(smhe_decrypt(&smhe_mul(&c6, &c7).unwrap(), &k).unwrap(), 42);
    let one = smhe_encrypt(1, &k, 3).unwrap();
    let m = smhe_encrypt(12345, &k, 4).unwrap();
    assert_eq!(smhe_decrypt(&smhe_mul(&one, &m).unwrap(), &k).unwrap(), 12345);
    assert_eq!(smhe_decrypt(&smhe_div(&m, &m).unwrap(), &k).unwrap(), 1);
    assert_eq!(
        smhe_decrypt(&smhe_mul_plain(&m, 2).unwrap(), &k).unwrap(),
        24690
    );
    let zero = smhe_encrypt(0, &k, 5).unwrap();
    assert_eq!(
        smhe_div(&m, &zero).unwrap_err(),
        CryptoError::NonInvertibleDivisor
    );
}

#[test]
fn ore_order_agreement_exhaustive_8bit() {
    let mut r = rng();
    let k = derive_column_key(&master(&mut r), b"o", Scheme::Ore).unwrap();
    let ciphers: Vec<_> = (0u64..=255)
        .map(|m| ore_encrypt(m, &k, OreWidth::W8, &mut r).unwrap())
        .collect();
    for a in 0..=255usize {
        for b in 0..=255usize {
            assert_eq!(
                ore_compare(&ciphers[a], &ciphers[b]).unwrap(),
                a.cmp(&b),
                "order mismatch at ({a}, {b})"
            );
        }
    }
    // Sorting ciphertexts by ore_compare reproduces numeric order.
    let mut shuffled: Vec<usize> = (0..256).rev().collect();
    shuffled.sort_by(|&i, &j| ore_compare(&ciphers[i], &ciphers[j]).unwrap());
    assert_eq!(shuffled, (0..256).collect::<Vec<_>>());
}

#[test]
fn ore_order_agreement_random_pairs() {
    let mut r = rng();
    let k = derive_column_key(&master(&mut r), b"o", Scheme::Ore).unwrap();
    for _ in 0..10_000 {
        let (x, y) = (r.gen::<u32>() as u64, r.gen::<u32>() as u64);
        let cx = ore_encrypt(x, &k, OreWidth::W32, &mut r).unwrap();
        let cy = ore_encrypt(y, &k, OreWidth::W32, &mut r).unwrap();
        assert_eq!(ore_compare(&cx, &cy).unwrap(), x.cmp(&y));
    }
    for _ in 0..1000 {
        let (x, y) = (r.gen::<u64>(), r.gen::<u64>());
        let cx = ore_encrypt(x, &k, OreWidth::W64, &mut r).unwrap();
        let cy = ore_encrypt(y, &k, OreWidth::W64, &mut r).unwrap();
        assert_eq!(ore_compare(&cx, &cy).unwrap(), x.cmp(&y));
    }
}

#[test]
fn ore_contracts() {
    let mut r = rng();
    let k = derive_column_key(&master(&mut r), b"o", Scheme::Ore).unwrap();
    let a = ore_encrypt(5, &k, OreWidth::W32, &mut r).unwrap();
    let b = ore_encrypt(7, &k, OreWidth::W32, &mut r).unwrap();
    assert_eq!(ore_compare(&a, &b).unwrap(), Ordering::Less);
    assert_eq!(ore_compare(&a, &a).unwrap(), Ordering::Equal);

    // Independent encryptions of equal plaintext compare Equal but serialize
    // to distinct bytes.
    let a2 = ore_encrypt(5, &k, OreWidth::W32, &mut r).unwrap();
    assert_eq!(ore_compare(&a, &a2).unwrap(), Ordering::Equal);
    assert_ne!(a.to_bytes(), a2.to_bytes());

    // Round trip and range enforcement.
    assert_eq!(ore_decrypt(&a, &k, OreWidth::W32).unwrap(), 5);
    assert_eq!(
        ore_encrypt(256, &k, OreWidth::W8, &mut r).unwrap_err(),
        CryptoError::ValueOutOfRange
    );

    // Mixed widths refuse to compare.
    let w8 = ore_encrypt(5, &k, OreWidth::W8, &mut r).unwrap();
    assert_eq!(ore_compare(&a, &w8).unwrap_err(), CryptoError::LayoutMismatch);
}

#[test]
fn det_and_rnd_contracts() {
    let mut r = rng();
    let m = master(&mut r);
    let dk = derive_column_key(&m, b"d", Scheme::Det).unwrap();
    let rk = derive_column_key(&m, b"r", Scheme::Rnd).unwrap();

    let c1 = det_encrypt(b"hello", &dk).unwrap();
    let c2 = det_encrypt(b"hello", &dk).unwrap();
    assert_eq!(c1, c2);
    assert_eq!(
        cipherdb_core::crypto::det_decrypt(&c1, &dk).unwrap(),
        b"hello"
    );

    let rc1 = rnd_encrypt(b"hello", &rk, &mut r).unwrap();
    let rc2 = rnd_encrypt(b"hello", &rk, &mut r).unwrap();
    assert_ne!(rc1.to_bytes(), rc2.to_bytes());
    assert_eq!(rnd_decrypt(&rc1, &rk).unwrap(), b"hello");

    // Any single-byte tamper fails authentication.
    let mut tampered = rc1.clone();
    tampered.body[0] ^= 1;
    assert_eq!(rnd_decrypt(&tampered, &rk).unwrap_err(), CryptoError::AuthFailure);
    let mut tampered = rc1.clone();
    tampered.tag[3] ^= 0x80;
    assert_eq!(rnd_decrypt(&tampered, &rk).unwrap_err(), CryptoError::AuthFailure);
}

#[test]
fn serialization_round_trips() {
    let mut r = rng();
    let m = master(&mut r);
    let ak = derive_column_key(&m, b"a", Scheme::Ahe).unwrap();
    let mk = derive_column_key(&m, b"m", Scheme::Mhe).unwrap();
    let ok = derive_column_key(&m, b"o", Scheme::Ore).unwrap();
    let rk = derive_column_key(&m, b"r", Scheme::Rnd).unwrap();

    let a = sahe_sub(
        &sahe_encrypt(10, &ak, 1).unwrap(),
        &sahe_encrypt(3, &ak, 2).unwrap(),
    )
    .unwrap();
    assert_eq!(
        cipherdb_core::crypto::AheCipher::from_bytes(&a.to_bytes()).unwrap(),
        a
    );

    let p = smhe_encrypt(9, &mk, 1).unwrap();
    assert_eq!(
        cipherdb_core::crypto::MheCipher::from_bytes(&p.to_bytes()).unwrap(),
        p
    );

    let o = ore_encrypt(12345, &ok, OreWidth::W32, &mut r).unwrap();
    assert_eq!(
        cipherdb_core::crypto::OreCipher::from_bytes(&o.to_bytes()).unwrap(),
        o
    );

    let c = rnd_encrypt(b"payload", &rk, &mut r).unwrap();
    assert_eq!(RndCipher::from_bytes(&c.to_bytes()).unwrap(), c);
}

#[test]
fn prf_outputs_do_not_collide_across_keys() {
    let mut r = rng();
    let m = master(&mut r);
    let mut seen = std::collections::HashSet::new();
    for label in ["a", "b", "c", "d", "e"] {
        let k = derive_column_key(&m, label.as_bytes(), Scheme::Ahe).unwrap();
        for nonce in 0..200u64 {
            assert!(seen.insert(cipherdb_core::crypto::keys::prf_mask(&k, nonce)));
        }
    }
}

#[test]
fn leakage_cardinality_after_k_way_add() {
    let mut r = rng();
    let k = derive_column_key(&master(&mut r), b"a", Scheme::Ahe).unwrap();
    let mut acc = sahe_encrypt(1, &k, 0).unwrap();
    for i in 1..50u64 {
        acc = sahe_add(&acc, &sahe_encrypt(1, &k, i).unwrap()).unwrap();
    }
    assert_eq!(acc.nonces.len(), 50);
    assert_eq!(sahe_decrypt(&acc, &k).unwrap(), 50);
}

#[test]
fn homomorphic_nondeterminism() {
    let mut r = rng();
    let m = master(&mut r);
    let ak = derive_column_key(&m, b"a", Scheme::Ahe).unwrap();
    let mk = derive_column_key(&m, b"m", Scheme::Mhe).unwrap();
    let mut nonce = || r.next_u64();
    assert_ne!(
        sahe_encrypt(42, &ak, nonce()).unwrap().to_bytes(),
        sahe_encrypt(42, &ak, nonce()).unwrap().to_bytes()
    );
    assert_ne!(
        smhe_encrypt(42, &mk, nonce()).unwrap().to_bytes(),
        smhe_encrypt(42, &mk, nonce()).unwrap().to_bytes()
    );
}
