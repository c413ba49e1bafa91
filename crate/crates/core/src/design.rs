//! Directed and undirected (grouped) block designs and their exact checkers.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::atomic::{AtomicU32, Ordering};

use serde::{Deserialize, Serialize};
use smallvec::SmallVec;

use crate::error::{Error, Result};
use crate::parallel;

pub type Point = u32;

/// A block: a sequence of distinct points. For directed designs the order is
/// significant and covers the pairs `(p[i], p[j])` with `i < j`.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Block(SmallVec<[Point; 6]>);

impl Serialize for Block {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.0.as_slice().serialize(s)
    }
}

impl<'de> Deserialize<'de> for Block {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let v = Vec::<Point>::deserialize(d)?;
        Block::new(&v).map_err(serde::de::Error::custom)
    }
}

impl Block {
    pub fn new(points: &[Point]) -> Result<Self> {
        for (i, p) in points.iter().enumerate() {
            if points[..i].contains(p) {
                return Err(Error::Structure(format!("point {p} repeated in block {points:?}")));
            }
        }
        Ok(Block(SmallVec::from_slice(points)))
    }

    /// Skips the distinctness check; callers must guarantee it.
    pub(crate) fn from_vec_unchecked(points: SmallVec<[Point; 6]>) -> Self {
        debug_assert!(Block::new(&points).is_ok());
        Block(points)
    }

    #[inline]
    pub fn points(&self) -> &[Point] {
        &self.0
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.0.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, p: Point) -> bool {
        self.0.contains(&p)
    }

    pub fn reversed(&self) -> Block {
        Block(self.0.iter().rev().copied().collect())
    }

    pub fn sorted(&self) -> SmallVec<[Point; 6]> {
        let mut s = self.0.clone();
        s.sort_unstable();
        s
    }

    pub fn map(&self, f: impl Fn(Point) -> Point) -> Block {
        Block(self.0.iter().map(|&p| f(p)).collect())
    }

    /// Ordered pairs covered by the block, in row-major order.
    pub fn pairs(&self) -> impl Iterator<Item = (Point, Point)> + '_ {
        let p = &self.0;
        (0..p.len()).flat_map(move |i| (i + 1..p.len()).map(move |j| (p[i], p[j])))
    }

    /// Number of points shared with `other`, order ignored.
    pub fn intersection(&self, other: &Block) -> usize {
        self.0.iter().filter(|p| other.0.contains(p)).count()
    }
}

impl fmt::Debug for Block {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", self.0.as_slice())
    }
}

impl fmt::Display for Block {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, p) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{p}")?;
        }
        write!(f, ")")
    }
}

/// Ordered pairs `(points[i], points[j])`, `i < j`, of a block.
pub fn block_pairs(block: &Block) -> Vec<(Point, Point)> {
    block.pairs().collect()
}

/// Multiset of group sizes, rendered like `5^5 4^1`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct GroupType(Vec<(usize, usize)>);

impl GroupType {
    /// Normalizes: merges equal sizes, drops zero multiplicities, sorts by size descending.
    pub fn new(parts: &[(usize, usize)]) -> Self {
        let mut m: BTreeMap<usize, usize> = BTreeMap::new();
        for &(g, u) in parts {
            if u > 0 {
                *m.entry(g).or_default() += u;
            }
        }
        GroupType(m.into_iter().rev().collect())
    }

    pub fn uniform(g: usize, u: usize) -> Self {
        Self::new(&[(g, u)])
    }

    pub fn from_sizes(sizes: impl IntoIterator<Item = usize>) -> Self {
        let parts: Vec<_> = sizes.into_iter().map(|g| (g, 1)).collect();
        Self::new(&parts)
    }

    pub fn parts(&self) -> &[(usize, usize)] {
        &self.0
    }

    pub fn points(&self) -> usize {
        self.0.iter().map(|(g, u)| g * u).sum()
    }

    pub fn num_groups(&self) -> usize {
        self.0.iter().map(|(_, u)| u).sum()
    }

    /// Group sizes, largest first, with multiplicity.
    pub fn sizes(&self) -> Vec<usize> {
        self.0.iter().flat_map(|&(g, u)| std::iter::repeat_n(g, u)).collect()
    }

    /// Number of unordered pairs of points in different groups.
    pub fn cross_pairs(&self) -> usize {
        let n = self.points();
        let within: usize = self.0.iter().map(|(g, u)| u * g * g.saturating_sub(1) / 2).sum();
        n * n.saturating_sub(1) / 2 - within
    }

    /// Parses `5^5 4^1`, `(15)^6`, `3^8,7`; a bare size means multiplicity one.
    pub fn parse(s: &str) -> Result<Self> {
        let mut parts = Vec::new();
        for tok in s.split(|c: char| c.is_whitespace() || c == ',').filter(|t| !t.is_empty()) {
            let (g, u) = match tok.split_once('^') {
                Some((g, u)) => (g, u),
                None => (tok, "1"),
            };
            let g = g.trim_start_matches('(').trim_end_matches(')');
            let g: usize = g.parse().map_err(|_| Error::Parameter(format!("bad group size in `{s}`")))?;
            let u: usize = u.parse().map_err(|_| Error::Parameter(format!("bad multiplicity in `{s}`")))?;
            if g == 0 {
                return Err(Error::Parameter(format!("zero group size in `{s}`")));
            }
            parts.push((g, u));
        }
        if parts.is_empty() {
            return Err(Error::Parameter("empty group type".into()));
        }
        Ok(Self::new(&parts))
    }
}

impl fmt::Display for GroupType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, (g, u)) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, " ")?;
            }
            write!(f, "{g}^{u}")?;
        }
        Ok(())
    }
}

/// A design on points `0..v`: optional group partition, blocks, index and
/// directedness. Covers DDs, DGDDs, GDDs and TDs uniformly.
#[derive(Clone, Debug, PartialEq)]
pub struct GroupedDesign {
    v: usize,
    block_sizes: Vec<usize>,
    lambda: u32,
    directed: bool,
    groups: Option<Vec<Vec<Point>>>,
    blocks: Vec<Block>,
    labels: BTreeMap<Point, String>,
    provenance: serde_json::Value,
}

impl GroupedDesign {
    /// Checks structure only (ids in range, groups partition the points,
    /// block sizes declared); coverage is left to the verifiers.
    pub fn new(
        v: usize,
        block_sizes: &[usize],
        lambda: u32,
        directed: bool,
        groups: Option<Vec<Vec<Point>>>,
        blocks: Vec<Block>,
    ) -> Result<Self> {
        if lambda == 0 {
            return Err(Error::Structure("lambda must be positive".into()));
        }
        let mut ks = block_sizes.to_vec();
        ks.sort_unstable();
        ks.dedup();
        if ks.is_empty() || ks[0] < 2 {
            return Err(Error::Structure(format!("block sizes {ks:?} invalid")));
        }
        if let Some(gs) = &groups {
            let mut seen = vec![false; v];
            for g in gs {
                if g.is_empty() {
                    return Err(Error::Structure("empty group".into()));
                }
                for &p in g {
                    let p = p as usize;
                    if p >= v || seen[p] {
                        return Err(Error::Structure(format!("groups do not partition 0..{v} (point {p})")));
                    }
                    seen[p] = true;
                }
            }
            if let Some(p) = seen.iter().position(|s| !s) {
                return Err(Error::Structure(format!("point {p} lies in no group")));
            }
        }
        for (i, b) in blocks.iter().enumerate() {
            if !ks.contains(&b.len()) {
                return Err(Error::Structure(format!("block {i} has size {}, not in {ks:?}", b.len())));
            }
            if let Some(p) = b.points().iter().find(|&&p| p as usize >= v) {
                return Err(Error::Structure(format!("block {i} uses point {p} outside 0..{v}")));
            }
        }
        Ok(GroupedDesign {
            v,
            block_sizes: ks,
            lambda,
            directed,
            groups,
            blocks,
            labels: BTreeMap::new(),
            provenance: serde_json::Value::Object(Default::default()),
        })
    }

    pub fn with_labels(mut self, labels: BTreeMap<Point, String>) -> Self {
        self.labels = labels;
        self
    }

    pub fn with_provenance(mut self, provenance: serde_json::Value) -> Self {
        self.provenance = match provenance {
            serde_json::Value::Null => serde_json::Value::Object(Default::default()),
            p => p,
        };
        self
    }

    pub fn v(&self) -> usize {
        self.v
    }
    pub fn block_sizes(&self) -> &[usize] {
        &self.block_sizes
    }
    /// The block size when it is uniform.
    pub fn k(&self) -> Option<usize> {
        (self.block_sizes.len() == 1).then(|| self.block_sizes[0])
    }
    pub fn lambda(&self) -> u32 {
        self.lambda
    }
    pub fn directed(&self) -> bool {
        self.directed
    }
    pub fn groups(&self) -> Option<&[Vec<Point>]> {
        self.groups.as_deref()
    }
    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }
    pub fn num_blocks(&self) -> usize {
        self.blocks.len()
    }
    pub fn labels(&self) -> &BTreeMap<Point, String> {
        &self.labels
    }
    pub fn provenance(&self) -> &serde_json::Value {
        &self.provenance
    }
    pub fn into_blocks(self) -> Vec<Block> {
        self.blocks
    }

    /// Group type; a design without groups has type `1^v`.
    pub fn group_type(&self) -> GroupType {
        match &self.groups {
            Some(gs) => GroupType::from_sizes(gs.iter().map(|g| g.len())),
            None => GroupType::uniform(1, self.v),
        }
    }

    /// Group index of every point (each point is its own group when ungrouped).
    pub fn group_of(&self) -> Vec<u32> {
        match &self.groups {
            Some(gs) => {
                let mut of = vec![0u32; self.v];
                for (i, g) in gs.iter().enumerate() {
                    for &p in g {
                        of[p as usize] = i as u32;
                    }
                }
                of
            }
            None => (0..self.v as u32).collect(),
        }
    }

    /// Block count implied by the parameters (uniform block size only).
    pub fn expected_blocks(&self) -> Option<usize> {
        let k = self.k()?;
        let pairs = self.group_type().cross_pairs() * if self.directed { 2 } else { 1 };
        let num = self.lambda as usize * pairs;
        let den = k * (k - 1) / 2;
        num.is_multiple_of(den).then_some(num / den)
    }

    /// Blocks sorted lexicographically; for equality tests and diffs only.
    pub fn canonical(&self) -> GroupedDesign {
        let mut d = self.clone();
        if !d.directed {
            for b in &mut d.blocks {
                b.0.sort_unstable();
            }
        }
        parallel::sort_unstable(&mut d.blocks);
        if let Some(gs) = &mut d.groups {
            for g in gs.iter_mut() {
                g.sort_unstable();
            }
            gs.sort();
        }
        d
    }

    /// Applies a point permutation `perm[old] = new` to blocks, groups and labels.
    pub fn relabel(&self, perm: &[Point]) -> Result<GroupedDesign> {
        if perm.len() != self.v {
            return Err(Error::Parameter(format!("permutation of length {} on {} points", perm.len(), self.v)));
        }
        let mut seen = vec![false; self.v];
        for &p in perm {
            if p as usize >= self.v || std::mem::replace(&mut seen[p as usize], true) {
                return Err(Error::Parameter("not a permutation".into()));
            }
        }
        let blocks = parallel::map(&self.blocks, |b| b.map(|p| perm[p as usize]));
        let groups = self
            .groups
            .as_ref()
            .map(|gs| gs.iter().map(|g| g.iter().map(|&p| perm[p as usize]).collect()).collect());
        let labels = self.labels.iter().map(|(&p, l)| (perm[p as usize], l.clone())).collect();
        Ok(GroupedDesign { blocks, groups, labels, ..self.clone() })
    }

    /// Every block reversed.
    pub fn reversed(&self) -> GroupedDesign {
        let blocks = parallel::map(&self.blocks, Block::reversed);
        GroupedDesign { blocks, ..self.clone() }
    }

    /// Copy with a replaced block list, re-checking structure.
    pub fn with_blocks(&self, blocks: Vec<Block>) -> Result<GroupedDesign> {
        GroupedDesign::new(self.v, &self.block_sizes, self.lambda, self.directed, self.groups.clone(), blocks)
            .map(|d| d.with_labels(self.labels.clone()).with_provenance(self.provenance.clone()))
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairViolation {
    pub pair: (Point, Point),
    pub observed: u32,
    pub expected: u32,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockViolation {
    pub i: usize,
    pub j: usize,
    pub intersection: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CoverageReport {
    pub pass: bool,
    pub violations: Vec<PairViolation>,
    pub block_violations: Vec<BlockViolation>,
}

impl CoverageReport {
    fn from_parts(violations: Vec<PairViolation>, block_violations: Vec<BlockViolation>) -> Self {
        CoverageReport { pass: violations.is_empty() && block_violations.is_empty(), violations, block_violations }
    }

    /// Combines two reports; passes only if both pass.
    pub fn and(mut self, other: CoverageReport) -> Self {
        self.violations.extend(other.violations);
        self.block_violations.extend(other.block_violations);
        self.pass = self.violations.is_empty() && self.block_violations.is_empty();
        self
    }

    /// One-line description of the first problem, if any.
    pub fn first_problem(&self) -> Option<String> {
        if let Some(v) = self.violations.first() {
            return Some(format!(
                "pair ({},{}) covered {} times, expected {} ({} pair violations)",
                v.pair.0,
                v.pair.1,
                v.observed,
                v.expected,
                self.violations.len()
            ));
        }
        self.block_violations.first().map(|b| {
            format!(
                "blocks {} and {} share {} points ({} block violations)",
                b.i,
                b.j,
                b.intersection,
                self.block_violations.len()
            )
        })
    }
}

/// Dense `v × v` table of pair counts, filled in parallel.
fn pair_counts(d: &GroupedDesign, ordered: bool) -> Vec<u32> {
    let v = d.v;
    let table: Vec<AtomicU32> = (0..v * v).map(|_| AtomicU32::new(0)).collect();
    let chunks: Vec<&[Block]> = d.blocks.chunks(4096).collect();
    parallel::map(&chunks, |chunk| {
        for b in chunk.iter() {
            for (x, y) in b.pairs() {
                let (x, y) = if ordered || x < y { (x, y) } else { (y, x) };
                table[x as usize * v + y as usize].fetch_add(1, Ordering::Relaxed);
            }
        }
    });
    table.into_iter().map(AtomicU32::into_inner).collect()
}

fn coverage(d: &GroupedDesign, ordered: bool, lambda: u32) -> CoverageReport {
    let v = d.v;
    let counts = pair_counts(d, ordered);
    let group = d.group_of();
    let rows = parallel::map_range(v, |x| {
        let mut out = Vec::new();
        let start = if ordered { 0 } else { x + 1 };
        for y in start..v {
            if y == x {
                continue;
            }
            let expected = if group[x] == group[y] { 0 } else { lambda };
            let observed = counts[x * v + y];
            if observed != expected {
                out.push(PairViolation { pair: (x as Point, y as Point), observed, expected });
            }
        }
        out
    });
    CoverageReport::from_parts(rows.into_iter().flatten().collect(), Vec::new())
}

/// Exact ordered-pair coverage: cross-group pairs exactly λ times,
/// within-group pairs never.
pub fn verify_directed(design: &GroupedDesign) -> Result<CoverageReport> {
    if !design.directed {
        return Err(Error::Parameter("verify_directed on an undirected design".into()));
    }
    Ok(coverage(design, true, design.lambda))
}

/// Exact unordered-pair coverage with the design's own λ (block order ignored).
pub fn verify_undirected(design: &GroupedDesign) -> CoverageReport {
    coverage(design, false, design.lambda)
}

/// Verifies the coverage appropriate to the design's directedness.
pub fn verify_coverage(design: &GroupedDesign) -> CoverageReport {
    coverage(design, design.directed, design.lambda)
}

/// Any two blocks share at most two points.
///
/// Two blocks share three or more points iff they share a 3-subset, so this
/// sorts the 3-subsets of all blocks and reports the block pairs behind every
/// repeated one. Linear in the number of blocks apart from the sort.
pub fn verify_super_simple(design: &GroupedDesign) -> CoverageReport {
    let v = design.v as u64;
    let keyed = parallel::flat_map(&design.blocks.iter().enumerate().collect::<Vec<_>>(), |&(i, b)| {
        let s = b.sorted();
        let n = s.len();
        let mut out = Vec::with_capacity(n * (n - 1) * (n.saturating_sub(2)) / 6);
        for a in 0..n {
            for c in a + 1..n {
                for e in c + 1..n {
                    let key = (s[a] as u64 * v + s[c] as u64) * v + s[e] as u64;
                    out.push((key, i as u32));
                }
            }
        }
        out
    });
    let mut keyed = keyed;
    parallel::sort_unstable(&mut keyed);
    let mut pairs = Vec::new();
    let mut start = 0;
    while start < keyed.len() {
        let mut end = start + 1;
        while end < keyed.len() && keyed[end].0 == keyed[start].0 {
            end += 1;
        }
        for x in start..end {
            for y in x + 1..end {
                pairs.push((keyed[x].1 as usize, keyed[y].1 as usize));
            }
        }
        start = end;
    }
    pairs.sort_unstable();
    pairs.dedup();
    let viol = pairs
        .into_iter()
        .map(|(i, j)| BlockViolation { i, j, intersection: design.blocks[i].intersection(&design.blocks[j]) })
        .collect();
    CoverageReport::from_parts(Vec::new(), viol)
}

/// Reference O(b²) pairwise check; same verdict and violations as
/// [`verify_super_simple`].
pub fn verify_super_simple_pairwise(design: &GroupedDesign) -> CoverageReport {
    let sets: Vec<_> = design.blocks.iter().map(Block::sorted).collect();
    let rows = parallel::map_range(sets.len(), |i| {
        let mut out = Vec::new();
        for j in i + 1..sets.len() {
            let n = sets[i].iter().filter(|p| sets[j].binary_search(p).is_ok()).count();
            if n > 2 {
                out.push(BlockViolation { i, j, intersection: n });
            }
        }
        out
    });
    CoverageReport::from_parts(Vec::new(), rows.into_iter().flatten().collect())
}

/// Coverage and super-simplicity together.
pub fn verify_all(design: &GroupedDesign) -> CoverageReport {
    let (a, b) = parallel::join(|| verify_coverage(design), || verify_super_simple(design));
    a.and(b)
}

/// The undirected design on the same blocks with index 2λ.
pub fn underlying(design: &GroupedDesign) -> Result<GroupedDesign> {
    if !design.directed {
        return Err(Error::Parameter("underlying() of an undirected design".into()));
    }
    let mut d = design.clone();
    d.directed = false;
    d.lambda *= 2;
    Ok(d)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Admissibility {
    Yes { blocks: usize },
    No { reason: String },
}

impl Admissibility {
    pub fn is_yes(&self) -> bool {
        matches!(self, Admissibility::Yes { .. })
    }
}

/// Orders for which a super-simple (v,5,2)DD is constructed here.
pub fn admissible(v: usize) -> Admissibility {
    if !v.is_multiple_of(5) && v % 5 != 1 {
        Admissibility::No { reason: format!("{v} ≢ 0,1 (mod 5)") }
    } else if v < 15 {
        Admissibility::No { reason: format!("{v} < 15") }
    } else {
        Admissibility::Yes { blocks: v * (v - 1) / 5 }
    }
}
