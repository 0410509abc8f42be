//! Integer helpers for chain arithmetic: modular reduction of signed offsets
//! and factorization of `u128` values.

use num_bigint::BigUint;

/// `i mod n` normalized into `[0, n)`, for any signed `i`.
pub fn residue(i: i128, n: u128) -> u128 {
    debug_assert!(n > 0);
    if i >= 0 {
        (i as u128) % n
    } else {
        let r = i.unsigned_abs() % n;
        if r == 0 {
            0
        } else {
            n - r
        }
    }
}

/// `(a + b) mod n` for `a, b < n` without overflow.
pub fn add_mod(a: u128, b: u128, n: u128) -> u128 {
    if a >= n - b {
        a - (n - b)
    } else {
        a + b
    }
}

fn mul_mod(mut a: u128, mut b: u128, n: u128) -> u128 {
    if let Some(p) = a.checked_mul(b) {
        return p % n;
    }
    a %= n;
    let mut acc = 0u128;
    while b > 0 {
        if b & 1 == 1 {
            acc = add_mod(acc, a, n);
        }
        a = add_mod(a, a, n);
        b >>= 1;
    }
    acc
}

fn pow_mod(mut base: u128, mut exp: u128, n: u128) -> u128 {
    let mut acc = 1u128 % n;
    base %= n;
    while exp > 0 {
        if exp & 1 == 1 {
            acc = mul_mod(acc, base, n);
        }
        base = mul_mod(base, base, n);
        exp >>= 1;
    }
    acc
}

const SMALL_PRIMES: [u128; 25] = [
    2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53, 59, 61, 67, 71, 73, 79, 83, 89, 97,
];

/// Miller-Rabin with the first 25 prime bases; deterministic far beyond 2^64.
pub fn is_prime(n: u128) -> bool {
    if n < 2 {
        return false;
    }
    for &p in &SMALL_PRIMES {
        if n % p == 0 {
            return n == p;
        }
    }
    let mut d = n - 1;
    let mut s = 0;
    while d % 2 == 0 {
        d /= 2;
        s += 1;
    }
    'witness: for &a in &SMALL_PRIMES {
        let mut x = pow_mod(a, d, n);
        if x == 1 || x == n - 1 {
            continue;
        }
        for _ in 1..s {
            x = mul_mod(x, x, n);
            if x == n - 1 {
                continue 'witness;
            }
        }
        return false;
    }
    true
}

fn gcd(mut a: u128, mut b: u128) -> u128 {
    while b != 0 {
        let t = a % b;
        a = b;
        b = t;
    }
    a
}

// Pollard-Brent; `n` is odd, composite, and free of small factors.
fn find_factor(n: u128) -> u128 {
    let mut c = 1u128;
    loop {
        let f = |x: u128| add_mod(mul_mod(x, x, n), c % n, n);
        let (mut x, mut y, mut d) = (2u128, 2u128, 1u128);
        while d == 1 {
            x = f(x);
            y = f(f(y));
            d = gcd(x.abs_diff(y), n);
        }
        if d != n {
            return d;
        }
        c += 1;
    }
}

/// Prime factors with multiplicity, ascending.
pub fn factorize(mut n: u128) -> Vec<u128> {
    let mut out = Vec::new();
    if n < 2 {
        return out;
    }
    for p in (2u128..).take_while(|p| *p < 1000) {
        while n % p == 0 {
            out.push(p);
            n /= p;
        }
        if n == 1 {
            return out;
        }
    }
    let mut stack = vec![n];
    while let Some(m) = stack.pop() {
        if m == 1 {
            continue;
        }
        if is_prime(m) {
            out.push(m);
        } else {
            let d = find_factor(m);
            stack.push(d);
            stack.push(m / d);
        }
    }
    out.sort_unstable();
    out
}

/// p-adic valuation of `n > 0`.
pub fn valuation(mut n: u128, p: u128) -> u32 {
    let mut v = 0;
    while n % p == 0 {
        n /= p;
        v += 1;
    }
    v
}

/// Smallest integer `m >= 1` with `base^m >= target`, for `base >= 2`.
pub fn min_exponent_covering(base: u128, target: u128) -> u32 {
    let b = BigUint::from(base);
    let t = BigUint::from(target);
    let mut acc = b.clone();
    let mut m = 1;
    while acc < t {
        acc *= &b;
        m += 1;
    }
    m
}
