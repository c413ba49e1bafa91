//! Transversal designs over finite fields, MacNeish products and truncation.

use serde_json::json;

use crate::design::{verify_undirected, Block, GroupedDesign, Point};
use crate::error::{Error, Result};
use crate::field::{field, prime_power};
use crate::parallel;

/// A TD(k,n): an undirected GDD of type n^k with λ = 1. Point `j·n + x` is
/// element `x` of column `j`, and every block lists its points in column order.
#[derive(Clone, Debug, PartialEq)]
pub struct TransversalDesign {
    k: usize,
    n: usize,
    design: GroupedDesign,
}

impl TransversalDesign {
    pub fn k(&self) -> usize {
        self.k
    }
    pub fn n(&self) -> usize {
        self.n
    }
    pub fn design(&self) -> &GroupedDesign {
        &self.design
    }
    pub fn into_design(self) -> GroupedDesign {
        self.design
    }

    fn assemble(k: usize, n: usize, blocks: Vec<Block>, provenance: serde_json::Value) -> Result<Self> {
        let groups = (0..k).map(|j| ((j * n) as Point..((j + 1) * n) as Point).collect()).collect();
        let design = GroupedDesign::new(k * n, &[k], 1, false, Some(groups), blocks)?.with_provenance(provenance);
        let td = TransversalDesign { k, n, design };
        td.verify()?;
        Ok(td)
    }

    /// Each cross-column pair exactly once; each block a transversal.
    pub fn verify(&self) -> Result<()> {
        let n = self.n as Point;
        for (i, b) in self.design.blocks().iter().enumerate() {
            if b.points().iter().enumerate().any(|(j, &p)| p / n != j as Point) {
                return Err(Error::Structure(format!("TD block {i} is not in column order")));
            }
        }
        if self.design.num_blocks() != self.n * self.n {
            return Err(Error::Structure(format!("TD has {} blocks, expected {}", self.design.num_blocks(), self.n * self.n)));
        }
        match verify_undirected(&self.design).first_problem() {
            Some(p) => Err(Error::Structure(format!("TD({},{}) fails: {p}", self.k, self.n))),
            None => Ok(()),
        }
    }
}

/// TD(k,q) for a prime power q and `2 ≤ k ≤ q+1`. Block `B_{s,t}` has
/// `s + c_j·t` in column `j < q` (with `c_j` the j-th field element) and `t`
/// in column `q` when `k = q+1`.
pub fn td(k: usize, q: usize) -> Result<TransversalDesign> {
    let qq = u32::try_from(q).map_err(|_| Error::Parameter(format!("order {q} too large")))?;
    if prime_power(qq).is_none() {
        return Err(Error::Parameter(format!("{q} is not a prime power")));
    }
    if k < 2 {
        return Err(Error::Parameter(format!("TD needs k ≥ 2, got {k}")));
    }
    if k > q + 1 {
        return Err(Error::Unsupported(format!("TD({k},{q}) needs k ≤ q+1")));
    }
    let f = field(qq)?;
    let blocks = parallel::map_range(q * q, |i| {
        let (s, t) = ((i / q) as u32, (i % q) as u32);
        let pts: Vec<Point> = (0..k)
            .map(|j| {
                let x = if j < q { f.add(s, f.mul(j as u32, t)) } else { t };
                (j * q) as Point + x
            })
            .collect();
        Block::new(&pts).expect("columns are disjoint")
    });
    TransversalDesign::assemble(k, q, blocks, json!({"kind": "td", "k": k, "n": q}))
}

/// TD(k, a·b) from TD(k,a) and TD(k,b): point `(x,y)` of column `j` becomes
/// `j·ab + x·b + y`; block pairs multiply coordinatewise.
pub fn macneish(a: &TransversalDesign, b: &TransversalDesign) -> Result<TransversalDesign> {
    if a.k != b.k {
        return Err(Error::Parameter(format!("MacNeish product of TD({},·) and TD({},·)", a.k, b.k)));
    }
    let (k, na, nb) = (a.k, a.n, b.n);
    let n = na * nb;
    let ab = a.design.blocks();
    let bb = b.design.blocks();
    let blocks = parallel::map_range(ab.len() * bb.len(), |i| {
        let (x, y) = (&ab[i / bb.len()], &bb[i % bb.len()]);
        let pts: Vec<Point> = (0..k)
            .map(|j| {
                let xa = x.points()[j] as usize - j * na;
                let yb = y.points()[j] as usize - j * nb;
                (j * n + xa * nb + yb) as Point
            })
            .collect();
        Block::new(&pts).expect("columns are disjoint")
    });
    let prov = json!({"kind": "macneish", "k": k, "n": n, "factors": [a.design.provenance(), b.design.provenance()]});
    TransversalDesign::assemble(k, n, blocks, prov)
}

/// The single-block TD(k,1).
pub fn trivial(k: usize) -> Result<TransversalDesign> {
    let pts: Vec<Point> = (0..k as Point).collect();
    TransversalDesign::assemble(k, 1, vec![Block::new(&pts)?], json!({"kind": "td", "k": k, "n": 1}))
}

/// Prime-power factorization `n = Π q_i`, ascending.
pub fn prime_power_factors(n: usize) -> Vec<usize> {
    let mut out = Vec::new();
    let mut r = n;
    let mut p = 2;
    while p * p <= r {
        if r.is_multiple_of(p) {
            let mut q = 1;
            while r.is_multiple_of(p) {
                r /= p;
                q *= p;
            }
            out.push(q);
        }
        p += 1;
    }
    if r > 1 {
        out.push(r);
    }
    out.sort_unstable();
    out
}

/// Largest k for which [`td_any`] builds a TD(k,n): q+1 for a prime power,
/// otherwise the smallest factor width over the prime-power factorization.
pub fn width(n: usize) -> usize {
    if n <= 1 {
        return usize::MAX;
    }
    prime_power_factors(n).into_iter().map(|q| q + 1).min().expect("n > 1 has a factor")
}

/// TD(k,n) by direct construction or MacNeish products of prime-power TDs.
pub fn td_any(k: usize, n: usize) -> Result<TransversalDesign> {
    if n == 1 {
        return trivial(k);
    }
    if k > width(n) {
        return Err(Error::Unsupported(format!("TD({k},{n}) is beyond the constructible width {}", width(n))));
    }
    let mut factors = prime_power_factors(n).into_iter();
    let mut acc = td(k, factors.next().expect("n > 1"))?;
    for q in factors {
        acc = macneish(&acc, &td(k, q)?)?;
    }
    Ok(acc)
}

/// Deletes points from a TD: column `i` keeps its first `keep[i]` elements.
/// Empty columns vanish and points are renumbered in order. The result is an
/// undirected λ=1 GDD, verified before it is returned.
pub fn truncate(t: &TransversalDesign, keep: &[usize]) -> Result<GroupedDesign> {
    let (k, n) = (t.k, t.n);
    if keep.len() != k {
        return Err(Error::Parameter(format!("{} sizes for {k} columns", keep.len())));
    }
    if let Some(&s) = keep.iter().find(|&&s| s > n) {
        return Err(Error::Parameter(format!("cannot keep {s} of {n} points")));
    }
    let mut new_id = vec![None; k * n];
    let mut groups = Vec::new();
    let mut next: Point = 0;
    for (j, &s) in keep.iter().enumerate() {
        if s == 0 {
            continue;
        }
        let g: Vec<Point> = (0..s).map(|x| {
            new_id[j * n + x] = Some(next);
            next += 1;
            next - 1
        }).collect();
        groups.push(g);
    }
    let mut sizes = Vec::new();
    let mut blocks = Vec::with_capacity(t.design.num_blocks());
    for b in t.design.blocks() {
        let pts: Vec<Point> = b.points().iter().filter_map(|&p| new_id[p as usize]).collect();
        if pts.len() < 2 {
            return Err(Error::Structure(format!("truncation leaves a block of size {}", pts.len())));
        }
        if !sizes.contains(&pts.len()) {
            sizes.push(pts.len());
        }
        blocks.push(Block::new(&pts)?);
    }
    let prov = json!({"kind": "truncate", "td": t.design.provenance(), "keep": keep});
    let d = GroupedDesign::new(next as usize, &sizes, 1, false, Some(groups), blocks)?.with_provenance(prov);
    if let Some(p) = verify_undirected(&d).first_problem() {
        return Err(Error::Structure(format!("truncated TD fails: {p}")));
    }
    Ok(d)
}
