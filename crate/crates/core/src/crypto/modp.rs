//! Arithmetic modulo the Mersenne prime p = 2^127 - 1.
//!
//! All homomorphic masking works in Z_p. The prime is odd (so 2 is
//! invertible) and every nonzero residue has an inverse, which keeps
//! ciphertext division total on nonzero operands.

/// The modulus p = 2^127 - 1.
pub const P: u128 = (1u128 << 127) - 1;

/// Identifier of the modulus in force, embedded in ciphertexts so that
/// operands from different parameter sets cannot be combined silently.
pub const MODULUS_ID: u32 = 1;

const MASK: u128 = P;

/// Folds a value below 2^128 into [0, p).
#[inline]
pub fn reduce(x: u128) -> u128 {
    // 2^127 ≡ 1 (mod p), so the top bit folds back in.
    let mut r = (x >> 127) + (x & MASK);
    if r >= P {
        r -= P;
    }
    r
}

#[inline]
pub fn add_mod(a: u128, b: u128) -> u128 {
    debug_assert!(a < P && b < P);
    // a + b < 2^128, safe to fold once.
    reduce(a + b)
}

#[inline]
pub fn sub_mod(a: u128, b: u128) -> u128 {
    debug_assert!(a < P && b < P);
    if a >= b {
        a - b
    } else {
        P - (b - a)
    }
}

/// 256-bit product of two 128-bit values, as (hi, lo).
#[inline]
fn widening_mul(a: u128, b: u128) -> (u128, u128) {
    let (a0, a1) = (a as u64 as u128, a >> 64);
    let (b0, b1) = (b as u64 as u128, b >> 64);

    let ll = a0 * b0;
    let lh = a0 * b1;
    let hl = a1 * b0;
    let hh = a1 * b1;

    let (mid, mid_carry) = lh.overflowing_add(hl);
    let (lo, lo_carry) = ll.overflowing_add(mid << 64);
    let hi = hh
        + (mid >> 64)
        + ((mid_carry as u128) << 64)
        + lo_carry as u128;
    (hi, lo)
}

#[inline]
pub fn mul_mod(a: u128, b: u128) -> u128 {
    debug_assert!(a < P && b < P);
    let (hi, lo) = widening_mul(a, b);
    // hi < 2^126 since a, b < 2^127; and 2^128 ≡ 2 (mod p).
    let lo_red = reduce(lo);
    reduce((hi << 1) + lo_red)
}

pub fn pow_mod(mut base: u128, mut exp: u128) -> u128 {
    let mut acc = 1u128;
    base = reduce(base);
    while exp > 0 {
        if exp & 1 == 1 {
            acc = mul_mod(acc, base);
        }
        base = mul_mod(base, base);
        exp >>= 1;
    }
    acc
}

/// Multiplicative inverse by Fermat's little theorem. Returns `None` for zero.
pub fn inv_mod(a: u128) -> Option<u128> {
    if a % P == 0 {
        return None;
    }
    Some(pow_mod(a, P - 2))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_pow_128_folds_to_two() {
        // 2^64 * 2^64 = 2^128 ≡ 2 (mod p)
        assert_eq!(mul_mod(1u128 << 64, 1u128 << 64), 2);
    }

    #[test]
    fn p_is_zero() {
        assert_eq!(reduce(P), 0);
        assert_eq!(add_mod(P - 1, 1), 0);
    }

    #[test]
    fn inverse_roundtrip() {
        let mut x = 0x1234_5678_9abc_def0_u128;
        for _ in 0..200 {
            x = x.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407) & MASK;
            let a = reduce(x);
            if a == 0 {
                continue;
            }
            let inv = inv_mod(a).unwrap();
            assert_eq!(mul_mod(a, inv), 1);
        }
        assert!(inv_mod(0).is_none());
    }

    #[test]
    fn distributive() {
        let a = reduce(0xdead_beef_cafe_babe_1234_5678_u128);
        let b = reduce(0x0fed_cba9_8765_4321_u128);
        let c = reduce(0x1111_2222_3333_4444_5555_u128);
        assert_eq!(
            mul_mod(a, add_mod(b, c)),
            add_mod(mul_mod(a, b), mul_mod(a, c))
        );
    }

    #[test]
    fn sub_cancels_add() {
        let a = reduce(98765432109876543210u128);
        let b = reduce(12345678901234567890u128);
        assert_eq!(sub_mod(add_mod(a, b), b), a);
        assert_eq!(sub_mod(b, b), 0);
    }
}
