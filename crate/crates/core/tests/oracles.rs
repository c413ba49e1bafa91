//! Library results checked against small independent implementations.

use std::collections::HashMap;
use std::time::{Duration, Instant};

use dirdesign::design::{verify_undirected, GroupType};
use dirdesign::field::field;
use dirdesign::orbit::orbit_gdd;
use dirdesign::td::td;
use dirdesign::trades::{max_matching, two_matching, TradeGraph};

#[test]
fn gf4_matches_hand_table() {
    // Elements a0 + a1·x with x² = x + 1, encoded as a0 + 2·a1.
    let mul = [[0, 0, 0, 0], [0, 1, 2, 3], [0, 2, 3, 1], [0, 3, 1, 2]];
    let f = field(4).unwrap();
    for a in 0..4u32 {
        for b in 0..4u32 {
            assert_eq!(f.add(a, b), a ^ b, "{a}+{b}");
            assert_eq!(f.mul(a, b), mul[a as usize][b as usize], "{a}·{b}");
        }
    }
}

fn poly_mod_mul(a: &[u32], b: &[u32], m: &[u32], p: u32) -> Vec<u32> {
    let e = m.len() - 1;
    let mut r = vec![0u32; a.len() + b.len()];
    for (i, &x) in a.iter().enumerate() {
        for (j, &y) in b.iter().enumerate() {
            r[i + j] = (r[i + j] + x * y) % p;
        }
    }
    // Reduce with the monic modulus from the top down.
    for d in (e..r.len()).rev() {
        let c = r[d];
        if c != 0 {
            for (k, &mk) in m.iter().enumerate() {
                let idx = d - e + k;
                r[idx] = (r[idx] + p * p - c * mk % p) % p;
            }
        }
    }
    r.truncate(e);
    r
}

fn digits(mut a: u32, p: u32, e: usize) -> Vec<u32> {
    (0..e)
        .map(|_| {
            let d = a % p;
            a /= p;
            d
        })
        .collect()
}

/// True when no monic polynomial of degree 1..=deg/2 divides `m`.
fn irreducible_by_trial(m: &[u32], p: u32) -> bool {
    let e = m.len() - 1;
    for d in 1..=e / 2 {
        for code in 0..p.pow(d as u32) {
            let mut g = digits(code, p, d);
            g.push(1);
            let mut r = m.to_vec();
            for top in (d..=e).rev() {
                let c = r[top];
                if c != 0 {
                    for (k, &gk) in g.iter().enumerate() {
                        let idx = top - d + k;
                        r[idx] = (r[idx] + p * p - c * gk % p) % p;
                    }
                }
            }
            if r[..d].iter().all(|&x| x == 0) {
                return false;
            }
        }
    }
    true
}

#[test]
fn extension_fields_match_schoolbook_arithmetic() {
    for (q, p, e) in [(8, 2, 3), (9, 3, 2), (16, 2, 4), (25, 5, 2), (27, 3, 3), (32, 2, 5), (49, 7, 2), (64, 2, 6), (81, 3, 4)] {
        let f = field(q).unwrap();
        let m = f.polynomial().to_vec();
        assert_eq!(m.len(), e + 1);
        assert!(irreducible_by_trial(&m, p), "GF({q}) modulus {m:?} factors");
        for a in 0..q {
            for b in 0..q {
                let want = poly_mod_mul(&digits(a, p, e), &digits(b, p, e), &m, p);
                let got = digits(f.mul(a, b), p, e);
                assert_eq!(got, want, "GF({q}): {a}·{b}");
                let sum: Vec<u32> = digits(a, p, e).iter().zip(digits(b, p, e)).map(|(x, y)| (x + y) % p).collect();
                assert_eq!(digits(f.add(a, b), p, e), sum, "GF({q}): {a}+{b}");
            }
        }
    }
}

#[test]
fn prime_fields_match_modular_arithmetic() {
    for p in [2u32, 3, 5, 7, 11, 13, 31] {
        let f = field(p).unwrap();
        for a in 0..p {
            for b in 0..p {
                assert_eq!(f.mul(a, b), a * b % p);
                assert_eq!(f.add(a, b), (a + b) % p);
            }
            if a != 0 {
                assert_eq!(f.mul(a, f.inv(a).unwrap()), 1);
            }
        }
    }
}

#[test]
fn transversal_designs_cover_cross_pairs_once() {
    for (k, q) in [(3, 2), (4, 3), (5, 4), (6, 5), (8, 7), (9, 8), (10, 9), (5, 11), (6, 16)] {
        let t = td(k, q).unwrap();
        let d = t.design();
        let group: HashMap<u32, usize> =
            d.groups().unwrap().iter().enumerate().flat_map(|(i, g)| g.iter().map(move |&p| (p, i))).collect();
        let mut seen: HashMap<(u32, u32), u32> = HashMap::new();
        for b in d.blocks() {
            let p = b.points();
            assert_eq!(p.len(), k);
            let mut gs: Vec<usize> = p.iter().map(|x| group[x]).collect();
            gs.sort_unstable();
            gs.dedup();
            assert_eq!(gs.len(), k, "TD({k},{q}) block misses a group");
            for i in 0..k {
                for j in i + 1..k {
                    *seen.entry((p[i].min(p[j]), p[i].max(p[j]))).or_default() += 1;
                }
            }
        }
        let cross = k * (k - 1) / 2 * q * q;
        assert_eq!(seen.len(), cross, "TD({k},{q})");
        assert!(seen.values().all(|&c| c == 1), "TD({k},{q}) repeats a pair");
    }
}

/// Largest matching by trying every edge subset in order.
fn brute_matching(n: usize, edges: &[(usize, usize)]) -> usize {
    fn rec(i: usize, edges: &[(usize, usize)], used: &mut Vec<bool>) -> usize {
        if i == edges.len() {
            return 0;
        }
        let skip = rec(i + 1, edges, used);
        let (a, b) = edges[i];
        if used[a] || used[b] {
            return skip;
        }
        used[a] = true;
        used[b] = true;
        let take = 1 + rec(i + 1, edges, used);
        used[a] = false;
        used[b] = false;
        skip.max(take)
    }
    rec(0, edges, &mut vec![false; n])
}

/// Deterministic pseudo-random graphs, so the oracle comparison is reproducible.
fn graphs() -> impl Iterator<Item = TradeGraph> {
    let mut state = 0x2545_f491_4f6c_dd1du64;
    (0..300).map(move |i| {
        let n = 2 + i % 9;
        let mut edges = Vec::new();
        for a in 0..n {
            for b in a + 1..n {
                state ^= state << 13;
                state ^= state >> 7;
                state ^= state << 17;
                if state % 100 < 35 {
                    edges.push((a, b));
                }
            }
        }
        TradeGraph { vertices: (0..n).collect(), edges }
    })
}

#[test]
fn matchings_agree_with_brute_force() {
    for g in graphs() {
        let n = g.vertices.len();
        let m = max_matching(&g);
        assert_eq!(m.len(), brute_matching(n, &g.edges), "{g:?}");
        let mut used = vec![false; n];
        for &(a, b) in &m {
            assert!(g.edges.contains(&(a, b)));
            assert!(!std::mem::replace(&mut used[a], true) && !std::mem::replace(&mut used[b], true));
        }
    }
}

#[test]
fn two_matchings_are_valid_and_beat_matchings() {
    for g in graphs() {
        let n = g.vertices.len();
        let has = |a: usize, b: usize| g.edges.contains(&(a.min(b), a.max(b)));
        let (edges, cycles) = two_matching(&g);
        let mut used = vec![false; n];
        let mut take = |v: usize| assert!(!std::mem::replace(&mut used[v], true), "vertex {v} reused in {g:?}");
        for &(a, b) in &edges {
            assert!(has(a, b));
            take(a);
            take(b);
        }
        for c in &cycles {
            assert!(c.len() >= 3 && c.len() % 2 == 1, "{c:?}");
            for i in 0..c.len() {
                assert!(has(c[i], c[(i + 1) % c.len()]), "{c:?} is not a cycle of {g:?}");
                take(c[i]);
            }
        }
        let value = edges.len() + cycles.iter().map(|c| c.len().div_ceil(2)).sum::<usize>();
        assert!(value >= brute_matching(n, &g.edges), "{g:?}");
    }
}

#[test]
fn cyclic_search_outputs_are_gdds() {
    let deadline = Instant::now() + Duration::from_secs(60);
    for (t, ks) in [("1^7", vec![3]), ("1^13", vec![3]), ("1^19", vec![3]), ("1^13", vec![4]), ("3^8 7^1", vec![5]), ("2^7", vec![3])] {
        let ty = GroupType::parse(t).unwrap();
        let (d, _) = orbit_gdd(&ty, &ks, deadline, 2_000_000).unwrap();
        let d = d.unwrap_or_else(|| panic!("no cyclic GDD of type {t}"));
        assert_eq!(d.group_type(), ty);
        assert!(d.blocks().iter().all(|b| ks.contains(&b.len())));
        // Independent count: each cross pair once, no pair inside a group.
        let group: HashMap<u32, usize> =
            d.groups().unwrap().iter().enumerate().flat_map(|(i, g)| g.iter().map(move |&p| (p, i))).collect();
        let mut seen: HashMap<(u32, u32), u32> = HashMap::new();
        for b in d.blocks() {
            let p = b.points();
            for i in 0..p.len() {
                for j in i + 1..p.len() {
                    assert_ne!(group[&p[i]], group[&p[j]], "{t}: block inside a group");
                    *seen.entry((p[i].min(p[j]), p[i].max(p[j]))).or_default() += 1;
                }
            }
        }
        assert_eq!(seen.len(), ty.cross_pairs(), "{t}");
        assert!(seen.values().all(|&c| c == 1), "{t}");
        assert!(verify_undirected(&d).pass);
    }
}
