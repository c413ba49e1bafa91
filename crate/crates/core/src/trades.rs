//! Directed trades of volume 2, trade graphs, and defining-set lower bounds.
//!
//! A defining set must contain a block of every trade's T1. So for any set of
//! block-disjoint trades it holds at least one block per trade, and for a
//! cyclical trade of length s (consecutive blocks pairwise forming trades) at
//! least ⌊(s+1)/2⌋ of its blocks. A certificate is a block-disjoint
//! collection of both, each trade stored with its partner T2.

use std::collections::HashMap;
use std::ops::Range;
use std::time::Instant;

use petgraph::graph::{NodeIndex, UnGraph};
use serde::{Deserialize, Serialize};
use smallvec::SmallVec;

use crate::design::{Block, GroupedDesign, Point};
use crate::error::{Error, Result};
use crate::parallel;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DirectedTrade {
    pub t1: Vec<Block>,
    pub t2: Vec<Block>,
}

impl DirectedTrade {
    pub fn volume(&self) -> usize {
        self.t1.len()
    }

    pub fn foundation(&self) -> Vec<Point> {
        let mut f: Vec<Point> = self.t1.iter().flat_map(|b| b.points().iter().copied()).collect();
        f.sort_unstable();
        f.dedup();
        f
    }
}

fn pair_multiset(blocks: &[Block]) -> Vec<(Point, Point)> {
    let mut m: Vec<_> = blocks.iter().flat_map(|b| b.pairs()).collect();
    m.sort_unstable();
    m
}

/// T1 and T2 share no block and cover the same ordered pairs equally often.
pub fn is_trade(t1: &[Block], t2: &[Block]) -> bool {
    !t1.is_empty()
        && t1.len() == t2.len()
        && !t1.iter().any(|b| t2.contains(b))
        && pair_multiset(t1) == pair_multiset(t2)
}

/// Volume-2 trade with T1 = {b1, b2}, if one exists; T2 is returned sorted.
///
/// Blocks sharing at most one point have no partner: the 5-cliques of their
/// pair support are the blocks themselves. Blocks sharing exactly two points
/// x, y trade iff x, y are adjacent in both and in opposite order, and then
/// the unique partner swaps x and y in each. Larger overlaps go to
/// [`find_partner_exhaustive`].
pub fn find_partner(b1: &Block, b2: &Block) -> Option<DirectedTrade> {
    if b1.len() != 5 || b2.len() != 5 || b1 == b2 {
        return None;
    }
    let common: SmallVec<[Point; 5]> = b1.points().iter().copied().filter(|&p| b2.contains(p)).collect();
    match common.len() {
        0 | 1 => None,
        2 => {
            let (i, j) = adjacent(b1, common[0], common[1])?;
            let (k, l) = adjacent(b2, common[0], common[1])?;
            // Opposite orders: b1 has common[0] first iff b2 has it second.
            if (b1.points()[i] == common[0]) == (b2.points()[k] == common[0]) {
                return None;
            }
            let mut c1 = b1.points().to_vec();
            c1.swap(i, j);
            let mut c2 = b2.points().to_vec();
            c2.swap(k, l);
            Some(sorted_trade(b1, b2, Block::new(&c1).ok()?, Block::new(&c2).ok()?))
        }
        _ => find_partner_exhaustive(b1, b2),
    }
}

/// Positions (i, i+1) of x and y when adjacent in `b`.
fn adjacent(b: &Block, x: Point, y: Point) -> Option<(usize, usize)> {
    let p = b.points();
    let i = p.iter().position(|&z| z == x)?;
    let j = p.iter().position(|&z| z == y)?;
    (i.abs_diff(j) == 1).then_some((i.min(j), i.max(j)))
}

fn sorted_trade(b1: &Block, b2: &Block, c1: Block, c2: Block) -> DirectedTrade {
    let mut t2 = vec![c1, c2];
    t2.sort();
    DirectedTrade { t1: vec![b1.clone(), b2.clone()], t2 }
}

/// Reference search over every candidate T2: each c1 is an ordering of a
/// 5-subset of the foundation using only pairs of T1's pair multiset, and c2
/// must be the transitive tournament left over. Deterministic: subsets and
/// orderings in lexicographic order, first hit returned.
pub fn find_partner_exhaustive(b1: &Block, b2: &Block) -> Option<DirectedTrade> {
    if b1 == b2 || b1.len() != b2.len() {
        return None;
    }
    let k = b1.len();
    let t1 = [b1.clone(), b2.clone()];
    let m = pair_multiset(&t1);
    let mut f: Vec<Point> = t1.iter().flat_map(|b| b.points().iter().copied()).collect();
    f.sort_unstable();
    f.dedup();
    let count = |x: Point, y: Point| m.iter().filter(|&&p| p == (x, y)).count();
    let mut found = None;
    for_each_subset(&f, k, &mut |sub| {
        if found.is_some() {
            return;
        }
        // Clique in the unordered pair support.
        for i in 0..k {
            for j in i + 1..k {
                if count(sub[i], sub[j]) + count(sub[j], sub[i]) == 0 {
                    return;
                }
            }
        }
        let mut perm = sub.to_vec();
        loop {
            if let Some(c2) = residual(&m, &perm) {
                let c1 = Block::new(&perm).expect("distinct");
                if !t1.contains(&c1) && !t1.contains(&c2) {
                    found = Some(sorted_trade(b1, b2, c1, c2));
                    return;
                }
            }
            if !next_permutation(&mut perm) {
                break;
            }
        }
    });
    found
}

/// If `order`'s pairs are a sub-multiset of `m` and the rest is the pair set
/// of a single block, that block.
fn residual(m: &[(Point, Point)], order: &[Point]) -> Option<Block> {
    let mut rest = m.to_vec();
    for i in 0..order.len() {
        for j in i + 1..order.len() {
            let pos = rest.iter().position(|&p| p == (order[i], order[j]))?;
            rest.swap_remove(pos);
        }
    }
    // A transitive tournament: sort points by out-degree.
    let mut pts: Vec<Point> = rest.iter().flat_map(|&(a, b)| [a, b]).collect();
    pts.sort_unstable();
    pts.dedup();
    if pts.len() != order.len() {
        return None;
    }
    let mut by_out: Vec<(usize, Point)> = pts.iter().map(|&p| (rest.iter().filter(|e| e.0 == p).count(), p)).collect();
    by_out.sort_unstable_by(|a, b| b.cmp(a));
    let c: Vec<Point> = by_out.iter().map(|&(_, p)| p).collect();
    let block = Block::new(&c).ok()?;
    let mut want: Vec<_> = block.pairs().collect();
    want.sort_unstable();
    rest.sort_unstable();
    (want == rest).then_some(block)
}

fn for_each_subset(items: &[Point], k: usize, f: &mut impl FnMut(&[Point])) {
    fn rec(items: &[Point], k: usize, start: usize, cur: &mut Vec<Point>, f: &mut impl FnMut(&[Point])) {
        if cur.len() == k {
            f(cur);
            return;
        }
        for i in start..items.len() {
            if items.len() - i < k - cur.len() {
                break;
            }
            cur.push(items[i]);
            rec(items, k, i + 1, cur, f);
            cur.pop();
        }
    }
    rec(items, k, 0, &mut Vec::with_capacity(k), f);
}

fn next_permutation(a: &mut [Point]) -> bool {
    let n = a.len();
    if n < 2 {
        return false;
    }
    let mut i = n - 1;
    while i > 0 && a[i - 1] >= a[i] {
        i -= 1;
    }
    if i == 0 {
        return false;
    }
    let mut j = n - 1;
    while a[j] <= a[i - 1] {
        j -= 1;
    }
    a.swap(i - 1, j);
    a[i..].reverse();
    true
}

/// Blocks as vertices (`vertices[i]` is a block index), an edge wherever the
/// two blocks form the T1 of a volume-2 trade. Edges use vertex positions.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct TradeGraph {
    pub vertices: Vec<usize>,
    pub edges: Vec<(usize, usize)>,
}

impl TradeGraph {
    pub fn to_petgraph(&self) -> UnGraph<usize, ()> {
        let mut g = UnGraph::with_capacity(self.vertices.len(), self.edges.len());
        for &v in &self.vertices {
            g.add_node(v);
        }
        for &(a, b) in &self.edges {
            g.add_edge(NodeIndex::new(a), NodeIndex::new(b), ());
        }
        g
    }

    pub fn degree(&self) -> Vec<usize> {
        let mut d = vec![0; self.vertices.len()];
        for &(a, b) in &self.edges {
            d[a] += 1;
            d[b] += 1;
        }
        d
    }
}

/// Trade graph on `scope` (all blocks by default). Only blocks sharing an
/// unordered pair of points can trade, so candidates come from a pair index.
pub fn trade_graph(design: &GroupedDesign, scope: Option<&[usize]>) -> TradeGraph {
    let vertices: Vec<usize> = match scope {
        Some(s) => s.to_vec(),
        None => (0..design.num_blocks()).collect(),
    };
    let blocks = design.blocks();
    let v = design.v() as u64;
    let mut keyed = parallel::flat_map(&(0..vertices.len()).collect::<Vec<_>>(), |&i| {
        let b = &blocks[vertices[i]];
        b.pairs()
            .map(|(x, y)| ((x.min(y) as u64) * v + x.max(y) as u64, i as u32))
            .collect::<Vec<_>>()
    });
    parallel::sort_unstable(&mut keyed);
    let mut runs = Vec::new();
    let mut s = 0;
    while s < keyed.len() {
        let mut e = s + 1;
        while e < keyed.len() && keyed[e].0 == keyed[s].0 {
            e += 1;
        }
        if e - s > 1 {
            runs.push(s..e);
        }
        s = e;
    }
    let mut edges = parallel::flat_map(&runs, |r: &Range<usize>| {
        let mut out = Vec::new();
        for a in r.clone() {
            for c in a + 1..r.end {
                let (i, j) = (keyed[a].1 as usize, keyed[c].1 as usize);
                if i != j && find_partner(&blocks[vertices[i]], &blocks[vertices[j]]).is_some() {
                    out.push((i.min(j), i.max(j)));
                }
            }
        }
        out
    });
    parallel::sort_unstable(&mut edges);
    edges.dedup();
    TradeGraph { vertices, edges }
}

/// Maximum-cardinality matching (Gabow's blossom algorithm from petgraph),
/// as pairs of vertex positions.
pub fn max_matching(g: &TradeGraph) -> Vec<(usize, usize)> {
    let pg = g.to_petgraph();
    let m = petgraph::algo::maximum_matching(&pg);
    let mut out: Vec<(usize, usize)> =
        m.edges().map(|(a, b)| (a.index().min(b.index()), a.index().max(b.index()))).collect();
    out.sort_unstable();
    out
}

/// Maximal matching by a min-degree-first greedy pass; for graphs too large
/// for the exact algorithm. Any matching gives a valid bound.
pub fn greedy_matching(g: &TradeGraph) -> Vec<(usize, usize)> {
    let n = g.vertices.len();
    let mut adj = vec![Vec::new(); n];
    for &(a, b) in &g.edges {
        adj[a].push(b);
        adj[b].push(a);
    }
    let mut deg: Vec<usize> = adj.iter().map(Vec::len).collect();
    let mut matched = vec![false; n];
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by_key(|&i| deg[i]);
    let mut out = Vec::new();
    for &a in &order {
        if matched[a] {
            continue;
        }
        if let Some(&b) = adj[a].iter().filter(|&&b| !matched[b]).min_by_key(|&&b| deg[b]) {
            matched[a] = true;
            matched[b] = true;
            out.push((a.min(b), a.max(b)));
            for &c in adj[a].iter().chain(adj[b].iter()) {
                deg[c] = deg[c].saturating_sub(1);
            }
        }
    }
    out.sort_unstable();
    out
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatchedTrade {
    pub blocks: [usize; 2],
    pub partner: [Block; 2],
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CyclicalTrade {
    /// Block indices in cyclic order.
    pub blocks: Vec<usize>,
    /// Partner of each consecutive pair `(blocks[i], blocks[i+1 mod s])`.
    pub partners: Vec<[Block; 2]>,
    pub contribution: usize,
}

fn partner_of(d: &GroupedDesign, i: usize, j: usize) -> Option<[Block; 2]> {
    let t = find_partner(&d.blocks()[i], &d.blocks()[j])?;
    let [a, b]: [Block; 2] = t.t2.try_into().ok()?;
    Some([a, b])
}

/// The blocks `orbit` (in order) as a cyclical trade: every cyclically
/// consecutive pair must trade. Bound ⌊(s+1)/2⌋; needs s ≥ 3.
pub fn cyclical(design: &GroupedDesign, orbit: &[usize]) -> Option<CyclicalTrade> {
    let s = orbit.len();
    if s < 3 {
        return None;
    }
    let mut distinct = orbit.to_vec();
    distinct.sort_unstable();
    distinct.dedup();
    if distinct.len() != s || distinct.last().is_some_and(|&i| i >= design.num_blocks()) {
        return None;
    }
    let partners =
        (0..s).map(|i| partner_of(design, orbit[i], orbit[(i + 1) % s])).collect::<Option<Vec<_>>>()?;
    Some(CyclicalTrade { blocks: orbit.to_vec(), partners, contribution: s.div_ceil(2) })
}

/// Structure the certifier may exploit: table columns (block-index sets) and
/// cyclic orbits (block indices in development order).
#[derive(Clone, Debug, Default)]
pub struct Hints {
    pub columns: Vec<Vec<usize>>,
    pub orbits: Vec<Vec<usize>>,
}

impl Hints {
    pub fn none() -> Self {
        Hints::default()
    }

    pub fn is_empty(&self) -> bool {
        self.columns.is_empty() && self.orbits.is_empty()
    }

    pub fn from_ranges(columns: Vec<Vec<usize>>, orbits: &[Range<usize>]) -> Self {
        Hints { columns, orbits: orbits.iter().map(|r| r.clone().collect()).collect() }
    }
}

#[derive(Clone, Debug)]
pub struct CertifyOptions {
    /// Graphs with more vertices than this use the greedy matching.
    pub exact_limit: usize,
    /// Whether to also run the hint-free global matching.
    pub global: bool,
    pub deadline: Option<Instant>,
}

impl Default for CertifyOptions {
    fn default() -> Self {
        CertifyOptions { exact_limit: 20_000, global: true, deadline: None }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TradeCertificate {
    /// sha256 of the certified design file, when known.
    pub design_checksum: Option<String>,
    pub blocks: usize,
    pub matching: Vec<MatchedTrade>,
    pub cycles: Vec<CyclicalTrade>,
    pub lower_bound: usize,
    /// `lower_bound / blocks`, as `[numerator, denominator]`.
    pub ratio: [usize; 2],
    /// `ratio ≥ 1/2`.
    pub success: bool,
    /// False when a deadline cut the computation short.
    pub complete: bool,
    pub strategy: String,
}

impl TradeCertificate {
    pub fn new(blocks: usize, matching: Vec<MatchedTrade>, cycles: Vec<CyclicalTrade>, strategy: &str) -> Self {
        let lower_bound = matching.len() + cycles.iter().map(|c| c.contribution).sum::<usize>();
        TradeCertificate {
            design_checksum: None,
            blocks,
            matching,
            cycles,
            lower_bound,
            ratio: [lower_bound, blocks],
            success: blocks == 0 || 2 * lower_bound >= blocks,
            complete: true,
            strategy: strategy.to_string(),
        }
    }

    pub fn ratio_f64(&self) -> f64 {
        if self.blocks == 0 {
            1.0
        } else {
            self.lower_bound as f64 / self.blocks as f64
        }
    }

    pub fn with_checksum(mut self, checksum: String) -> Self {
        self.design_checksum = Some(checksum);
        self
    }

    pub fn to_json(&self) -> String {
        let v = serde_json::to_value(self).expect("certificate serializes");
        let mut s = serde_json::to_string_pretty(&v).expect("certificate serializes");
        s.push('\n');
        s
    }

    /// Every block index used by a component.
    pub fn used_blocks(&self) -> Vec<usize> {
        let mut u: Vec<usize> = self.matching.iter().flat_map(|m| m.blocks).collect();
        u.extend(self.cycles.iter().flat_map(|c| c.blocks.iter().copied()));
        u
    }
}

/// Re-checks a certificate against a design: disjoint components, every
/// stored partner a genuine trade, and the bound arithmetic.
pub fn verify_certificate(design: &GroupedDesign, cert: &TradeCertificate) -> Result<()> {
    let bad = |m: String| Err(Error::Structure(format!("certificate: {m}")));
    let b = design.blocks();
    if cert.blocks != b.len() {
        return bad(format!("certifies {} blocks, design has {}", cert.blocks, b.len()));
    }
    let mut used = cert.used_blocks();
    if used.iter().any(|&i| i >= b.len()) {
        return bad("block index out of range".into());
    }
    used.sort_unstable();
    if used.windows(2).any(|w| w[0] == w[1]) {
        return bad("components share a block".into());
    }
    for m in &cert.matching {
        let t1 = [b[m.blocks[0]].clone(), b[m.blocks[1]].clone()];
        if !is_trade(&t1, &m.partner) {
            return bad(format!("blocks {:?} with the stored partner are not a trade", m.blocks));
        }
    }
    for c in &cert.cycles {
        let s = c.blocks.len();
        if s < 3 || c.partners.len() != s || c.contribution != s.div_ceil(2) {
            return bad("malformed cycle".into());
        }
        for i in 0..s {
            let t1 = [b[c.blocks[i]].clone(), b[c.blocks[(i + 1) % s]].clone()];
            if !is_trade(&t1, &c.partners[i]) {
                return bad(format!("cycle edge {i} is not a trade"));
            }
        }
    }
    let lb = cert.matching.len() + cert.cycles.iter().map(|c| c.contribution).sum::<usize>();
    if lb != cert.lower_bound || cert.ratio != [lb, b.len()] || lb > b.len() {
        return bad("bound arithmetic".into());
    }
    if cert.success != (b.is_empty() || 2 * lb >= b.len()) {
        return bad("success flag".into());
    }
    Ok(())
}

/// Disjoint edges and odd cycles from a maximum matching of the bipartite
/// double cover (`u` on the left joined to `w` on the right for every edge).
/// Matched arcs form paths and cycles of the graph: paths and even cycles are
/// cut into edges, odd cycles are kept. The bound is at least half the cover
/// matching, so it can beat a plain maximum matching when odd cycles exist.
pub fn two_matching(g: &TradeGraph) -> (Vec<(usize, usize)>, Vec<Vec<usize>>) {
    let n = g.vertices.len();
    let mut cover = UnGraph::<(), ()>::with_capacity(2 * n, 2 * g.edges.len());
    for _ in 0..2 * n {
        cover.add_node(());
    }
    for &(a, b) in &g.edges {
        cover.add_edge(NodeIndex::new(a), NodeIndex::new(n + b), ());
        cover.add_edge(NodeIndex::new(b), NodeIndex::new(n + a), ());
    }
    let m = petgraph::algo::maximum_matching(&cover);
    let mut next = vec![None; n];
    let mut has_prev = vec![false; n];
    for u in 0..n {
        if let Some(w) = m.mate(NodeIndex::new(u)) {
            next[u] = Some(w.index() - n);
            has_prev[w.index() - n] = true;
        }
    }
    let mut seen = vec![false; n];
    let mut edges = Vec::new();
    let mut cycles = Vec::new();
    let cut = |walk: &[usize], edges: &mut Vec<(usize, usize)>| {
        for pair in walk.chunks_exact(2) {
            edges.push((pair[0].min(pair[1]), pair[0].max(pair[1])));
        }
    };
    // Paths first, from their sources.
    for s in 0..n {
        if has_prev[s] || seen[s] {
            continue;
        }
        let mut walk = vec![s];
        seen[s] = true;
        let mut u = s;
        while let Some(w) = next[u] {
            seen[w] = true;
            walk.push(w);
            u = w;
        }
        cut(&walk, &mut edges);
    }
    for s in 0..n {
        if seen[s] {
            continue;
        }
        let mut walk = vec![s];
        seen[s] = true;
        let mut u = next[s].expect("remaining vertices lie on cycles");
        while u != s {
            seen[u] = true;
            walk.push(u);
            u = next[u].expect("remaining vertices lie on cycles");
        }
        if walk.len() % 2 == 1 && walk.len() >= 3 {
            cycles.push(walk);
        } else {
            cut(&walk, &mut edges);
        }
    }
    edges.sort_unstable();
    (edges, cycles)
}

type Packing = (Vec<MatchedTrade>, Vec<CyclicalTrade>);

fn packing_value(p: &Packing) -> usize {
    p.0.len() + p.1.iter().map(|c| c.contribution).sum::<usize>()
}

fn to_trades(design: &GroupedDesign, g: &TradeGraph, m: &[(usize, usize)]) -> Vec<MatchedTrade> {
    m.iter()
        .map(|&(a, c)| {
            let (i, j) = (g.vertices[a], g.vertices[c]);
            MatchedTrade { blocks: [i, j], partner: partner_of(design, i, j).expect("edge is a trade") }
        })
        .collect()
}

/// Best packing of disjoint trades on `scope`: the better of a maximum
/// matching and a maximum 2-matching (edges plus odd cycles). Large scopes
/// fall back to a greedy matching.
fn packing_on(design: &GroupedDesign, scope: &[usize], opts: &CertifyOptions) -> Packing {
    if scope.len() < 2 {
        return (Vec::new(), Vec::new());
    }
    let g = trade_graph(design, Some(scope));
    if g.vertices.len() > opts.exact_limit {
        return (to_trades(design, &g, &greedy_matching(&g)), Vec::new());
    }
    let plain: Packing = (to_trades(design, &g, &max_matching(&g)), Vec::new());
    if 2 * plain.0.len() == g.vertices.len() {
        return plain;
    }
    let (edges, cyc) = two_matching(&g);
    let cycles: Vec<CyclicalTrade> = cyc
        .iter()
        .map(|c| {
            let blocks: Vec<usize> = c.iter().map(|&x| g.vertices[x]).collect();
            cyclical(design, &blocks).expect("cover cycles are trade cycles")
        })
        .collect();
    let two: Packing = (to_trades(design, &g, &edges), cycles);
    if packing_value(&two) > packing_value(&plain) {
        two
    } else {
        plain
    }
}

/// Best decomposition of a cyclic orbit into cyclical trades using one step:
/// `b_i` follows `b_{i+j}`. Only returned when it beats a perfect matching,
/// i.e. when the cycles have odd length.
fn orbit_cycles(design: &GroupedDesign, orbit: &[usize]) -> Option<Vec<CyclicalTrade>> {
    let l = orbit.len();
    let mut best: Option<(usize, usize)> = None;
    for j in 1..=l / 2 {
        let g = gcd(j, l);
        let len = l / g;
        if len < 3 || len.is_multiple_of(2) {
            continue;
        }
        let gain = g * len.div_ceil(2);
        if best.is_some_and(|(_, b)| b >= gain) {
            continue;
        }
        if find_partner(&design.blocks()[orbit[0]], &design.blocks()[orbit[j]]).is_some() {
            best = Some((j, gain));
        }
    }
    let (j, _) = best?;
    let g = gcd(j, l);
    (0..g)
        .map(|start| {
            let cyc: Vec<usize> = (0..l / g).map(|t| orbit[(start + t * j) % l]).collect();
            cyclical(design, &cyc)
        })
        .collect()
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 { a } else { gcd(b, a % b) }
}

fn expired(opts: &CertifyOptions) -> bool {
    opts.deadline.is_some_and(|d| Instant::now() >= d)
}

/// Certificate from column hints: per column, the better of a maximum
/// matching and odd orbit cycles plus a matching of the rest; then a
/// matching on everything left over.
fn certify_hinted(design: &GroupedDesign, hints: &Hints, opts: &CertifyOptions) -> TradeCertificate {
    let b = design.num_blocks();
    let mut used = vec![false; b];
    let mut matching = Vec::new();
    let mut cycles = Vec::new();
    let mut complete = true;
    let orbit_of: HashMap<usize, usize> =
        hints.orbits.iter().enumerate().flat_map(|(o, bl)| bl.iter().map(move |&i| (i, o))).collect();
    let cycle_options: Vec<Option<Vec<CyclicalTrade>>> = parallel::map(&hints.orbits, |o| orbit_cycles(design, o));
    for col in &hints.columns {
        if expired(opts) {
            complete = false;
            break;
        }
        let col: Vec<usize> = col.iter().copied().filter(|&i| i < b && !used[i]).collect();
        let plain = packing_on(design, &col, opts);
        let mut orbits: Vec<usize> = col.iter().filter_map(|i| orbit_of.get(i).copied()).collect();
        orbits.sort_unstable();
        orbits.dedup();
        let mut cyc: Vec<CyclicalTrade> = Vec::new();
        for o in orbits {
            if hints.orbits[o].iter().all(|i| col.contains(i)) {
                if let Some(cs) = &cycle_options[o] {
                    cyc.extend(cs.iter().cloned());
                }
            }
        }
        let take_plain = if cyc.is_empty() {
            true
        } else {
            let in_cycle: Vec<usize> = cyc.iter().flat_map(|c| c.blocks.iter().copied()).collect();
            let rest: Vec<usize> = col.iter().copied().filter(|i| !in_cycle.contains(i)).collect();
            let (rest_m, rest_c) = packing_on(design, &rest, opts);
            let with_cycles = rest_m.len() + cyc.iter().chain(&rest_c).map(|c| c.contribution).sum::<usize>();
            if with_cycles > packing_value(&plain) {
                for &i in &in_cycle {
                    used[i] = true;
                }
                for m in &rest_m {
                    used[m.blocks[0]] = true;
                    used[m.blocks[1]] = true;
                }
                for c in &rest_c {
                    for &i in &c.blocks {
                        used[i] = true;
                    }
                }
                cycles.extend(cyc);
                cycles.extend(rest_c);
                matching.extend(rest_m);
                false
            } else {
                true
            }
        };
        if take_plain {
            let (pm, pc) = plain;
            for m in &pm {
                used[m.blocks[0]] = true;
                used[m.blocks[1]] = true;
            }
            for c in &pc {
                for &i in &c.blocks {
                    used[i] = true;
                }
            }
            matching.extend(pm);
            cycles.extend(pc);
        }
    }
    if complete && !expired(opts) {
        let rest: Vec<usize> = (0..b).filter(|&i| !used[i]).collect();
        let (m, c) = packing_on(design, &rest, opts);
        matching.extend(m);
        cycles.extend(c);
    } else {
        complete = false;
    }
    let mut c = TradeCertificate::new(b, matching, cycles, "columns+orbits+global");
    c.complete = complete;
    c
}

/// Lower-bound certificate: hinted and global strategies, better one wins,
/// so hints can only help.
pub fn certify(design: &GroupedDesign, hints: &Hints, opts: &CertifyOptions) -> TradeCertificate {
    let b = design.num_blocks();
    let hinted = (!hints.is_empty()).then(|| certify_hinted(design, hints, opts));
    let global = (opts.global || hinted.is_none()).then(|| {
        if expired(opts) {
            let mut c = TradeCertificate::new(b, Vec::new(), Vec::new(), "global");
            c.complete = false;
            return c;
        }
        let all: Vec<usize> = (0..b).collect();
        let (m, c) = packing_on(design, &all, opts);
        TradeCertificate::new(b, m, c, "global")
    });
    match (hinted, global) {
        (Some(h), Some(g)) => {
            if g.lower_bound > h.lower_bound {
                g
            } else {
                h
            }
        }
        (Some(h), None) => h,
        (None, Some(g)) => g,
        (None, None) => unreachable!("global runs when there are no hints"),
    }
}

/// Lifts a certificate along an index map (`map[i]` = block of `design` that
/// plays the role of block `i`), re-deriving every partner on `design`.
/// Components that no longer trade are dropped, so the result stays sound.
pub fn lift(design: &GroupedDesign, cert: &TradeCertificate, map: &dyn Fn(usize) -> usize) -> (Vec<MatchedTrade>, Vec<CyclicalTrade>) {
    let matching = cert
        .matching
        .iter()
        .filter_map(|m| {
            let (i, j) = (map(m.blocks[0]), map(m.blocks[1]));
            partner_of(design, i, j).map(|partner| MatchedTrade { blocks: [i, j], partner })
        })
        .collect();
    let cycles = cert
        .cycles
        .iter()
        .filter_map(|c| cyclical(design, &c.blocks.iter().map(|&i| map(i)).collect::<Vec<_>>()))
        .collect();
    (matching, cycles)
}

/// Matched trades for block pairs of `design`, skipping pairs that do not trade.
pub fn partner_list(design: &GroupedDesign, pairs: &[(usize, usize)]) -> Vec<MatchedTrade> {
    pairs
        .iter()
        .filter_map(|&(i, j)| partner_of(design, i, j).map(|partner| MatchedTrade { blocks: [i, j], partner }))
        .collect()
}

/// Combines block-disjoint components into one certificate.
pub fn combine(blocks: usize, parts: Vec<(Vec<MatchedTrade>, Vec<CyclicalTrade>)>, strategy: &str) -> Result<TradeCertificate> {
    let mut matching = Vec::new();
    let mut cycles = Vec::new();
    for (m, c) in parts {
        matching.extend(m);
        cycles.extend(c);
    }
    let cert = TradeCertificate::new(blocks, matching, cycles, strategy);
    let mut used = cert.used_blocks();
    used.sort_unstable();
    if used.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::Structure("combined certificate components overlap".into()));
    }
    Ok(cert)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn blk(p: &[Point]) -> Block {
        Block::new(p).unwrap()
    }

    #[test]
    fn prefix_swap_trade() {
        let t1 = [blk(&[1, 2, 3, 4, 5]), blk(&[2, 1, 6, 7, 8])];
        let t2 = [blk(&[1, 2, 6, 7, 8]), blk(&[2, 1, 3, 4, 5])];
        assert!(is_trade(&t1, &t2));
        assert!(!is_trade(&t1, &t1));
        assert!(!is_trade(&[blk(&[1, 2, 3, 4, 5])], &[blk(&[1, 2, 3, 5, 4])]));
    }

    #[test]
    fn partner_examples() {
        let t = find_partner(&blk(&[1, 2, 3, 4, 5]), &blk(&[2, 1, 6, 7, 8])).unwrap();
        assert_eq!(t.t2, vec![blk(&[1, 2, 6, 7, 8]), blk(&[2, 1, 3, 4, 5])]);
        assert_eq!(Some(t.clone()), find_partner_exhaustive(&t.t1[0], &t.t1[1]));
        assert!(find_partner(&blk(&[1, 2, 3, 4, 5]), &blk(&[6, 7, 8, 9, 10])).is_none());
        let (a, b) = (blk(&[1, 2, 3, 4, 5]), blk(&[1, 2, 3, 4, 6]));
        assert_eq!(find_partner(&a, &b), find_partner_exhaustive(&a, &b));
    }

    #[test]
    fn matchings() {
        let path = TradeGraph { vertices: vec![0, 1, 2], edges: vec![(0, 1), (1, 2)] };
        assert_eq!(max_matching(&path).len(), 1);
        let cyc = TradeGraph { vertices: (0..24).collect(), edges: (0..24).map(|i| (i.min((i + 1) % 24), i.max((i + 1) % 24))).collect() };
        assert_eq!(max_matching(&cyc).len(), 12);
        assert_eq!(greedy_matching(&path).len(), 1);
        let tri = TradeGraph { vertices: vec![0, 1, 2], edges: vec![(0, 1), (0, 2), (1, 2)] };
        let (e, c) = two_matching(&tri);
        assert!(e.is_empty());
        assert_eq!(c.len(), 1);
        assert_eq!(c[0].len(), 3);
    }

    #[test]
    fn single_block_scope_is_edgeless() {
        let d = GroupedDesign::new(5, &[5], 1, true, None, vec![blk(&[0, 1, 2, 3, 4])]).unwrap();
        assert!(trade_graph(&d, Some(&[0])).edges.is_empty());
        assert!(cyclical(&d, &[0]).is_none());
    }
}
