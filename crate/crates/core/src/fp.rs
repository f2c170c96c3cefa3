//! Arithmetic in the fingerprint prime field `F_q`, `q = 2^62 - 57`.

/// Fingerprint modulus: the largest prime below `2^62` of the form `2^62 - c`
/// with small `c`. Exceeds `2^61`, so one random evaluation point gives a
/// Schwartz-Zippel collision probability of at most `2D / q` for total degree
/// `D`.
pub const Q: u64 = (1u64 << 62) - 57;

#[inline]
pub fn add(a: u64, b: u64) -> u64 {
    let s = a + b; // no overflow: both < 2^62
    if s >= Q {
        s - Q
    } else {
        s
    }
}

#[inline]
pub fn sub(a: u64, b: u64) -> u64 {
    if a >= b {
        a - b
    } else {
        a + Q - b
    }
}

#[inline]
pub fn mul(a: u64, b: u64) -> u64 {
    ((a as u128 * b as u128) % Q as u128) as u64
}

pub fn pow(mut base: u64, mut exp: u64) -> u64 {
    let mut acc = 1u64;
    base %= Q;
    while exp > 0 {
        if exp & 1 == 1 {
            acc = mul(acc, base);
        }
        base = mul(base, base);
        exp >>= 1;
    }
    acc
}

/// Modular inverse via Fermat; panics on zero.
pub fn inv(a: u64) -> u64 {
    assert!(!a.is_multiple_of(Q), "inverse of zero in F_q");
    pow(a, Q - 2)
}

/// Signed exponent power: `base^e` with `e` possibly negative.
pub fn pow_i(base: u64, e: i64) -> u64 {
    if e >= 0 {
        pow(base, e as u64)
    } else {
        pow(inv(base), (-e) as u64)
    }
}

/// Reduce an arbitrary signed integer into `F_q`.
#[inline]
pub fn from_i64(v: i64) -> u64 {
    let r = v.rem_euclid(Q as i64);
    r as u64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn q_is_prime() {
        // Deterministic Miller-Rabin; these bases are exact for u64.
        assert!(miller_rabin(Q));
    }

    fn miller_rabin(n: u64) -> bool {
        if n < 2 {
            return false;
        }
        let mut d = n - 1;
        let mut s = 0;
        while d.is_multiple_of(2) {
            d /= 2;
            s += 1;
        }
        'witness: for &a in &[2u64, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37] {
            if a % n == 0 {
                continue;
            }
            let mut x = mod_pow(a, d, n);
            if x == 1 || x == n - 1 {
                continue;
            }
            for _ in 0..s - 1 {
                x = ((x as u128 * x as u128) % n as u128) as u64;
                if x == n - 1 {
                    continue 'witness;
                }
            }
            return false;
        }
        true
    }

    fn mod_pow(mut b: u64, mut e: u64, m: u64) -> u64 {
        let mut acc = 1u64;
        b %= m;
        while e > 0 {
            if e & 1 == 1 {
                acc = ((acc as u128 * b as u128) % m as u128) as u64;
            }
            b = ((b as u128 * b as u128) % m as u128) as u64;
            e >>= 1;
        }
        acc
    }

    #[test]
    fn field_ops() {
        assert_eq!(mul(inv(12345), 12345), 1);
        assert_eq!(add(Q - 1, 1), 0);
        assert_eq!(sub(0, 1), Q - 1);
        assert_eq!(pow_i(7, -2), inv(49));
        assert_eq!(from_i64(-1), Q - 1);
    }
}
