//! Finite fields GF(p^e) on the integers `0..q`.
//!
//! An element of an extension field is its coefficient vector read as a
//! base-`p` numeral (constant term first). Multiplication goes through
//! discrete log tables built from a primitive element.

use crate::error::{Error, Result};

/// Largest order accepted by [`field`].
pub const MAX_ORDER: u32 = 1 << 20;

/// Fixed moduli (coefficients constant-term first, monic).
const FIXED_POLYS: &[(u32, &[u32])] = &[
    (4, &[1, 1, 1]),
    (8, &[1, 1, 0, 1]),
    (9, &[2, 2, 1]),
    (16, &[1, 1, 0, 0, 1]),
    (25, &[2, 4, 1]),
    (27, &[1, 2, 0, 1]),
    (32, &[1, 0, 1, 0, 0, 1]),
    (49, &[3, 6, 1]),
];

#[derive(Clone, Debug)]
pub struct FiniteField {
    p: u32,
    e: u32,
    q: u32,
    poly: Vec<u32>,
    exp: Vec<u32>,
    log: Vec<u32>,
}

/// `Some((p, e))` when `q = p^e` with `p` prime.
pub fn prime_power(q: u32) -> Option<(u32, u32)> {
    if q < 2 {
        return None;
    }
    let p = (2..=q).find(|&d| q.is_multiple_of(d) || (d as u64) * (d as u64) > q as u64).map(|d| if q.is_multiple_of(d) { d } else { q })?;
    let (mut r, mut e) = (q, 0);
    while r % p == 0 {
        r /= p;
        e += 1;
    }
    (r == 1).then_some((p, e))
}

fn digits(mut a: u32, p: u32, e: u32) -> Vec<u32> {
    (0..e)
        .map(|_| {
            let d = a % p;
            a /= p;
            d
        })
        .collect()
}

fn undigits(d: &[u32], p: u32) -> u32 {
    d.iter().rev().fold(0, |acc, &c| acc * p + c)
}

/// Product of two residues modulo the monic `poly` of degree `e`.
fn poly_mul(a: &[u32], b: &[u32], poly: &[u32], p: u32) -> Vec<u32> {
    let e = poly.len() - 1;
    let mut prod = vec![0u64; 2 * e];
    for (i, &x) in a.iter().enumerate() {
        for (j, &y) in b.iter().enumerate() {
            prod[i + j] = (prod[i + j] + x as u64 * y as u64) % p as u64;
        }
    }
    for i in (e..prod.len()).rev() {
        let c = prod[i];
        if c != 0 {
            for (j, &f) in poly.iter().enumerate().take(e) {
                let t = &mut prod[i - e + j];
                *t = (*t + (p as u64 - c) * f as u64) % p as u64;
            }
            prod[i] = 0;
        }
    }
    prod[..e].iter().map(|&c| c as u32).collect()
}

/// True when the monic `poly` has no factor of degree ≤ deg/2, by trial
/// division against every monic polynomial of that degree.
fn is_irreducible(poly: &[u32], p: u32) -> bool {
    let n = poly.len() - 1;
    for d in 1..=n / 2 {
        let count = (p as u64).pow(d as u32);
        for code in 0..count {
            let mut g: Vec<u32> = digits(code as u32, p, d as u32);
            g.push(1);
            if poly_rem(poly, &g, p).iter().all(|&c| c == 0) {
                return false;
            }
        }
    }
    true
}

fn poly_rem(a: &[u32], m: &[u32], p: u32) -> Vec<u32> {
    let mut r: Vec<u64> = a.iter().map(|&c| c as u64).collect();
    let dm = m.len() - 1;
    for i in (dm..r.len()).rev() {
        let c = r[i] % p as u64;
        if c != 0 {
            for j in 0..=dm {
                let t = &mut r[i - dm + j];
                *t = (*t + (p as u64 - c) * m[j] as u64) % p as u64;
            }
        }
    }
    r.truncate(dm);
    r.into_iter().map(|c| (c % p as u64) as u32).collect()
}

/// First monic irreducible of degree `e` over GF(p), in numeral order.
fn search_irreducible(p: u32, e: u32) -> Vec<u32> {
    let count = (p as u64).pow(e);
    (0..count)
        .map(|code| {
            let mut f = digits(code as u32, p, e);
            f.push(1);
            f
        })
        .find(|f| f[0] != 0 && is_irreducible(f, p))
        .expect("irreducible polynomials exist in every degree")
}

impl FiniteField {
    fn build(p: u32, e: u32, poly: Vec<u32>) -> Option<Self> {
        let q = p.pow(e);
        let mul_raw = |a: u32, b: u32| -> u32 {
            if e == 1 {
                ((a as u64 * b as u64) % p as u64) as u32
            } else {
                undigits(&poly_mul(&digits(a, p, e), &digits(b, p, e), &poly, p), p)
            }
        };
        // Smallest primitive element.
        for g in 2.min(q - 1)..q {
            let mut exp = Vec::with_capacity(q as usize - 1);
            let mut log = vec![u32::MAX; q as usize];
            let mut x = 1u32;
            let mut ok = true;
            for i in 0..q - 1 {
                if log[x as usize] != u32::MAX {
                    ok = false;
                    break;
                }
                log[x as usize] = i;
                exp.push(x);
                x = mul_raw(x, g);
            }
            if ok && x == 1 {
                return Some(FiniteField { p, e, q, poly: poly.clone(), exp, log });
            }
            if q == 2 {
                break;
            }
        }
        (q == 2).then(|| FiniteField { p, e, q, poly, exp: vec![1], log: vec![u32::MAX, 0] })
    }

    pub fn order(&self) -> u32 {
        self.q
    }
    pub fn characteristic(&self) -> u32 {
        self.p
    }
    pub fn degree(&self) -> u32 {
        self.e
    }
    /// The modulus, constant term first; `[0, 1]` for prime fields.
    pub fn polynomial(&self) -> &[u32] {
        &self.poly
    }

    pub fn elements(&self) -> impl Iterator<Item = u32> {
        0..self.q
    }

    pub fn add(&self, a: u32, b: u32) -> u32 {
        if self.e == 1 {
            return ((a as u64 + b as u64) % self.p as u64) as u32;
        }
        if self.p == 2 {
            return a ^ b;
        }
        let (mut a, mut b, mut out, mut place) = (a, b, 0, 1);
        for _ in 0..self.e {
            out += ((a % self.p + b % self.p) % self.p) * place;
            a /= self.p;
            b /= self.p;
            place *= self.p;
        }
        out
    }

    pub fn neg(&self, a: u32) -> u32 {
        if self.e == 1 {
            return (self.p - a % self.p) % self.p;
        }
        let d: Vec<u32> = digits(a, self.p, self.e).iter().map(|&c| (self.p - c) % self.p).collect();
        undigits(&d, self.p)
    }

    pub fn sub(&self, a: u32, b: u32) -> u32 {
        self.add(a, self.neg(b))
    }

    pub fn mul(&self, a: u32, b: u32) -> u32 {
        if a == 0 || b == 0 {
            return 0;
        }
        let l = self.log[a as usize] as u64 + self.log[b as usize] as u64;
        self.exp[(l % (self.q as u64 - 1)) as usize]
    }

    pub fn inv(&self, a: u32) -> Option<u32> {
        (a != 0).then(|| self.exp[((self.q - 1 - self.log[a as usize]) % (self.q - 1)) as usize])
    }

    /// Exhaustive check of the field axioms; cubic in q.
    pub fn verify_axioms(&self) -> bool {
        let q = self.q;
        for a in 0..q {
            if self.add(a, 0) != a || self.mul(a, 1) != a || self.add(a, self.neg(a)) != 0 {
                return false;
            }
            if a != 0 && self.inv(a).map(|i| self.mul(a, i)) != Some(1) {
                return false;
            }
            for b in 0..q {
                if self.add(a, b) != self.add(b, a) || self.mul(a, b) != self.mul(b, a) {
                    return false;
                }
                for c in 0..q {
                    if self.add(self.add(a, b), c) != self.add(a, self.add(b, c))
                        || self.mul(self.mul(a, b), c) != self.mul(a, self.mul(b, c))
                        || self.mul(a, self.add(b, c)) != self.add(self.mul(a, b), self.mul(a, c))
                    {
                        return false;
                    }
                }
            }
        }
        true
    }
}

/// The field of order `q`. Extension fields use the fixed moduli where
/// tabled and otherwise the first irreducible in numeral order. Axioms are
/// verified exhaustively for `q ≤ 49`.
pub fn field(q: u32) -> Result<FiniteField> {
    let (p, e) = prime_power(q).ok_or_else(|| Error::Parameter(format!("{q} is not a prime power")))?;
    if q > MAX_ORDER {
        return Err(Error::Unsupported(format!("fields above order {MAX_ORDER}")));
    }
    let poly = if e == 1 {
        vec![0, 1]
    } else {
        FIXED_POLYS
            .iter()
            .find(|(o, _)| *o == q)
            .map(|(_, f)| f.to_vec())
            .unwrap_or_else(|| search_irreducible(p, e))
    };
    let f = FiniteField::build(p, e, poly).ok_or_else(|| Error::Structure(format!("modulus for GF({q}) is reducible")))?;
    if q <= 49 && !f.verify_axioms() {
        return Err(Error::Structure(format!("GF({q}) fails the field axioms")));
    }
    Ok(f)
}

/// Fixed moduli, for tests and documentation.
pub fn fixed_polynomials() -> impl Iterator<Item = (u32, &'static [u32])> {
    FIXED_POLYS.iter().copied()
}

/// Whether `poly` (constant term first, monic) has a root in GF(p).
pub fn has_root(poly: &[u32], p: u32) -> bool {
    (0..p).any(|x| poly.iter().rev().fold(0u64, |acc, &c| (acc * x as u64 + c as u64) % p as u64) == 0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn prime_powers() {
        assert_eq!(prime_power(2), Some((2, 1)));
        assert_eq!(prime_power(49), Some((7, 2)));
        assert_eq!(prime_power(12), None);
        assert_eq!(prime_power(1), None);
        assert_eq!(prime_power(1024), Some((2, 10)));
        assert_eq!(prime_power(997), Some((997, 1)));
    }

    #[test]
    fn gf5() {
        let f = field(5).unwrap();
        assert_eq!(f.add(2, 4), 1);
        assert_eq!(f.mul(3, 4), 2);
        assert_eq!(f.inv(2), Some(3));
    }

    #[test]
    fn gf4_alpha_squared() {
        // α = 2 (the polynomial x): α·α = α + 1 = 3.
        let f = field(4).unwrap();
        assert_eq!(f.mul(2, 2), 3);
        assert_eq!(f.add(2, 1), 3);
    }

    #[test]
    fn not_a_prime_power() {
        assert!(matches!(field(12), Err(Error::Parameter(_))));
        assert!(field(1).is_err());
    }

    #[test]
    fn searched_modulus() {
        let f = field(81).unwrap();
        assert_eq!(f.degree(), 4);
        assert!(is_irreducible(f.polynomial(), 3));
        let f = field(64).unwrap();
        assert!(is_irreducible(f.polynomial(), 2));
        assert_eq!(f.mul(f.inv(37).unwrap(), 37), 1);
    }

    #[test]
    fn fixed_polys_irreducible() {
        for (q, poly) in fixed_polynomials() {
            let (p, _) = prime_power(q).unwrap();
            assert!(!has_root(poly, p), "GF({q}) modulus has a root");
            assert!(is_irreducible(poly, p), "GF({q}) modulus reducible");
        }
    }
}
