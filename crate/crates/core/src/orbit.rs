//! Search for λ=1 GDDs with a cyclic automorphism.
//!
//! Points are `Z_n × S` plus a few fixed points. A symbol's copies either form
//! rows (`{x} × C` is a group for every `x`) or a column (`Z_n × {s}`, possibly
//! joined with the fixed points). A base block covers a set of pair orbits
//! ("items"); developing every base block mod `n` covers each pair once iff
//! the base blocks cover each item exactly once. `n` is odd, so every pair
//! orbit has full length. Block orbits are full too: a block fixed by a
//! translation would repeat an item, so designs that need short orbits (such
//! as the cyclic STS(15)) are out of reach.

use std::collections::HashMap;
use std::time::Instant;

use serde_json::json;

use crate::design::{Block, GroupType, GroupedDesign, Point};
use crate::error::Result;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Role {
    /// Member of the row class with this id.
    Row(usize),
    /// Member of the column group with this id; fixed points may share it.
    Col(usize),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Layout {
    pub n: usize,
    pub symbols: Vec<Role>,
    /// Group id of each fixed point; `Role::Col(id)` joins a column group.
    pub fixed: Vec<Role>,
}

impl Layout {
    pub fn points(&self) -> usize {
        self.n * self.symbols.len() + self.fixed.len()
    }

    fn point(&self, x: usize, s: usize) -> usize {
        x * self.symbols.len() + s
    }

    /// Group key of a point: rows are keyed by `(class, x)`.
    fn group_key(&self, p: usize) -> (usize, usize, usize) {
        let fin = self.n * self.symbols.len();
        let role = if p < fin { self.symbols[p % self.symbols.len()] } else { self.fixed[p - fin] };
        match role {
            Role::Row(c) if p < fin => (0, c, p / self.symbols.len()),
            Role::Row(c) => (2, c, 0),
            Role::Col(c) => (1, c, 0),
        }
    }

    /// The groups, as lists of points.
    pub fn groups(&self) -> Vec<Vec<usize>> {
        let mut by: HashMap<(usize, usize, usize), Vec<usize>> = HashMap::new();
        for p in 0..self.points() {
            by.entry(self.group_key(p)).or_default().push(p);
        }
        let mut gs: Vec<Vec<usize>> = by.into_values().collect();
        gs.sort();
        gs
    }

    pub fn group_type(&self) -> GroupType {
        GroupType::from_sizes(self.groups().iter().map(Vec::len))
    }

    /// Translate a point by `t`; fixed points do not move.
    fn shift(&self, p: usize, t: usize) -> usize {
        let s = self.symbols.len();
        if p < self.n * s {
            self.point((p / s + t) % self.n, p % s)
        } else {
            p
        }
    }
}

/// Cyclic layouts whose group type is `t`, most promising first.
pub fn layouts(t: &GroupType) -> Vec<Layout> {
    let (g, u, h) = match t.parts() {
        [(g, u)] => (*g, *u, None),
        [(a, 1), (b, u)] => (*b, *u, Some(*a)),
        [(a, u), (b, 1)] => (*a, *u, Some(*b)),
        _ => return Vec::new(),
    };
    let mut out = Vec::new();
    // The odd group: `a` columns plus `f` fixed points.
    let tail = |n: usize, h: usize, cols: usize, rows: Option<usize>| -> Vec<(Vec<Role>, Vec<Role>)> {
        let mut v = Vec::new();
        for a in 0..=h / n {
            let f = h - a * n;
            if rows.is_none() && f > 0 && a == 0 {
                continue;
            }
            let mut syms = Vec::new();
            let mut fixed = Vec::new();
            if let Some(r) = rows {
                syms.extend(std::iter::repeat_n(Role::Row(0), r));
            }
            let id = cols;
            syms.extend(std::iter::repeat_n(Role::Col(id), a));
            fixed.extend(std::iter::repeat_n(Role::Col(id), f));
            v.push((syms, fixed));
        }
        v
    };
    let odd = |n: usize| n >= 3 && n % 2 == 1;
    // Rows: n = u groups of size g, or n = u − 1 plus one fixed group of size g.
    for (n, extra) in [(u, false), (u.wrapping_sub(1), true)] {
        if !odd(n) {
            continue;
        }
        let h = h.unwrap_or(0);
        for (mut syms, mut fixed) in tail(n, h, 0, Some(g)) {
            if extra {
                if !fixed.is_empty() {
                    continue;
                }
                fixed.extend(std::iter::repeat_n(Role::Row(1), g));
            }
            if h == 0 {
                syms.retain(|r| matches!(r, Role::Row(_)));
            }
            out.push(Layout { n, symbols: syms, fixed });
        }
    }
    // Columns: each group of size g = n is one symbol.
    if odd(g) {
        if let Some(h) = h {
            for (tail_syms, fixed) in tail(g, h, u, None) {
                let mut syms: Vec<Role> = (0..u).map(Role::Col).collect();
                syms.extend(tail_syms);
                out.push(Layout { n: g, symbols: syms, fixed });
            }
        } else {
            out.push(Layout { n: g, symbols: (0..u).map(Role::Col).collect(), fixed: Vec::new() });
        }
    }
    out.retain(|l| l.group_type() == *t && l.points() <= 128);
    out.dedup();
    out
}

/// Tries each layout of `t` in turn, sharing the node cap. The result is
/// relabelled so that groups are consecutive, largest first.
pub fn orbit_gdd(t: &GroupType, ks: &[usize], deadline: Instant, max_nodes: u64) -> Result<(Option<GroupedDesign>, u64)> {
    let mut spent = 0;
    for layout in layouts(t) {
        let mut s = OrbitSearch::new(&layout, ks, deadline, max_nodes.saturating_sub(spent));
        let found = s.run();
        spent += s.nodes;
        let Some(base) = found else {
            if Instant::now() >= deadline || spent >= max_nodes {
                break;
            }
            continue;
        };
        let mut groups = layout.groups();
        groups.sort_by_key(|g| (std::cmp::Reverse(g.len()), g[0]));
        let mut label = vec![0 as Point; layout.points()];
        let mut next = 0;
        for &p in groups.iter().flatten() {
            label[p] = next;
            next += 1;
        }
        let relabel = |b: &Block| Block::new(&b.points().iter().map(|&p| label[p as usize]).collect::<Vec<_>>()).expect("bijection");
        let blocks: Vec<Block> = s.develop(&base).iter().map(relabel).collect();
        let groups: Vec<Vec<Point>> = groups.iter().map(|g| g.iter().map(|&p| label[p]).collect()).collect();
        let d = GroupedDesign::new(layout.points(), ks, 1, false, Some(groups), blocks)?.with_provenance(json!({
            "kind": "orbit_gdd",
            "type": t.to_string(),
            "K": ks,
            "key": crate::search::cache_key(t, ks),
            "modulus": layout.n,
            "base_blocks": base.iter().map(|b| b.iter().map(|&p| label[p]).collect::<Vec<_>>()).collect::<Vec<_>>(),
        }));
        return Ok((Some(d), spent));
    }
    Ok((None, spent))
}

pub struct OrbitSearch<'a> {
    layout: &'a Layout,
    ks: Vec<usize>,
    max_k: usize,
    npts: usize,
    group: Vec<usize>,
    /// `item[p * npts + q]`: the pair orbit of {p, q}, or `NONE` within a group.
    item: Vec<u32>,
    /// One representative pair per item.
    reps: Vec<(usize, usize)>,
    covered: Vec<bool>,
    order: Vec<usize>,
    base: Vec<Vec<usize>>,
    rng: u64,
    pub nodes: u64,
    limit: u64,
    deadline: Instant,
    max_nodes: u64,
    /// The deadline or the node cap stopped the search.
    pub timed_out: bool,
}

const NONE: u32 = u32::MAX;

impl<'a> OrbitSearch<'a> {
    pub fn new(layout: &'a Layout, ks: &[usize], deadline: Instant, max_nodes: u64) -> Self {
        let npts = layout.points();
        let mut keys: HashMap<(usize, usize, usize), usize> = HashMap::new();
        let group: Vec<usize> = (0..npts)
            .map(|p| {
                let k = layout.group_key(p);
                let next = keys.len();
                *keys.entry(k).or_insert(next)
            })
            .collect();
        let s = layout.symbols.len();
        let fin = layout.n * s;
        let mut ids: HashMap<(u8, usize, usize, usize), u32> = HashMap::new();
        let mut item = vec![NONE; npts * npts];
        let mut reps = Vec::new();
        for p in 0..npts {
            for q in 0..npts {
                if p == q || group[p] == group[q] {
                    continue;
                }
                let key = match (p < fin, q < fin) {
                    (true, true) => {
                        let (x, a) = (p / s, p % s);
                        let (y, b) = (q / s, q % s);
                        let d = (y + layout.n - x) % layout.n;
                        (0, a, b, d).min((0, b, a, (layout.n - d) % layout.n))
                    }
                    (true, false) => (1, q - fin, p % s, 0),
                    (false, true) => (1, p - fin, q % s, 0),
                    (false, false) => unreachable!("fixed points share one group per layout"),
                };
                let next = ids.len() as u32;
                let id = *ids.entry(key).or_insert_with(|| {
                    reps.push((p.min(q), p.max(q)));
                    next
                });
                item[p * npts + q] = id;
            }
        }
        let ks: Vec<usize> = ks.to_vec();
        // Fixed-point items first: they have the fewest ways to be covered.
        let mut order: Vec<usize> = (0..reps.len()).collect();
        order.sort_by_key(|&i| (reps[i].1 < fin, i));
        OrbitSearch {
            layout,
            max_k: ks.iter().copied().max().unwrap_or(0),
            ks,
            npts,
            group,
            covered: vec![false; reps.len()],
            item,
            reps,
            order,
            base: Vec::new(),
            rng: 0,
            nodes: 0,
            limit: u64::MAX,
            deadline,
            max_nodes,
            timed_out: false,
        }
    }

    pub fn items(&self) -> usize {
        self.reps.len()
    }

    /// Restarts with growing node limits and reshuffled candidate orders
    /// until a set of base blocks is found or the deadline passes.
    pub fn run(&mut self) -> Option<Vec<Vec<usize>>> {
        for attempt in 0u64.. {
            self.rng = attempt.wrapping_mul(0x9e37_79b9_7f4a_7c15) | 1;
            self.limit = self.nodes + 20_000 * (attempt + 1);
            self.covered.iter_mut().for_each(|c| *c = false);
            self.base.clear();
            if self.step() {
                return Some(std::mem::take(&mut self.base));
            }
            if self.timed_out {
                return None;
            }
        }
        None
    }

    /// Every translate of every base block.
    pub fn develop(&self, base: &[Vec<usize>]) -> Vec<Block> {
        let mut out = Vec::new();
        for b in base {
            for t in 0..self.layout.n {
                let pts: Vec<Point> = b.iter().map(|&p| self.layout.shift(p, t) as Point).collect();
                out.push(Block::new(&pts).expect("distinct points"));
            }
        }
        out
    }

    fn next_rand(&mut self) -> u64 {
        self.rng ^= self.rng << 13;
        self.rng ^= self.rng >> 7;
        self.rng ^= self.rng << 17;
        self.rng
    }

    fn step(&mut self) -> bool {
        self.nodes += 1;
        if self.nodes >= self.limit {
            return false;
        }
        if self.nodes >= self.max_nodes || (self.nodes & 0xfff == 0 && Instant::now() >= self.deadline) {
            self.timed_out = true;
        }
        if self.timed_out {
            return false;
        }
        let Some(it) = self.order.iter().copied().find(|&i| !self.covered[i]) else {
            return true;
        };
        let (p, q) = self.reps[it];
        let mut cands: Vec<usize> = (0..self.npts)
            .filter(|&c| c != p && c != q && self.group[c] != self.group[p] && self.group[c] != self.group[q])
            .collect();
        let mut keyed: Vec<(u64, usize)> = cands.iter().map(|&c| (self.next_rand(), c)).collect();
        keyed.sort_unstable();
        cands = keyed.into_iter().map(|(_, c)| c).collect();
        let mut block = vec![p, q];
        let mut items = vec![it as u32];
        self.covered[it] = true;
        let ok = self.extend(&mut block, &mut items, &cands, 0);
        if !ok {
            self.covered[it] = false;
        }
        ok
    }

    fn extend(&mut self, block: &mut Vec<usize>, items: &mut Vec<u32>, cands: &[usize], from: usize) -> bool {
        if self.ks.contains(&block.len()) {
            self.base.push(block.clone());
            if self.step() {
                return true;
            }
            self.base.pop();
            if self.timed_out || self.nodes >= self.limit {
                return false;
            }
        }
        if block.len() >= self.max_k {
            return false;
        }
        'next: for i in from..cands.len() {
            let c = cands[i];
            let mark = items.len();
            for &b in block.iter() {
                let id = self.item[b * self.npts + c];
                if id == NONE || self.covered[id as usize] {
                    for &j in &items[mark..] {
                        self.covered[j as usize] = false;
                    }
                    items.truncate(mark);
                    continue 'next;
                }
                self.covered[id as usize] = true;
                items.push(id);
            }
            block.push(c);
            if self.extend(block, items, cands, i + 1) {
                return true;
            }
            block.pop();
            for &j in &items[mark..] {
                self.covered[j as usize] = false;
            }
            items.truncate(mark);
            if self.timed_out || self.nodes >= self.limit {
                return false;
            }
        }
        false
    }
}
