//! Weighting and filling, the two recursive constructions.
//!
//! Weighting inflates every master point `x` into `w(x)` copies and replaces
//! each master block by a copy of an ingredient design on the inflated
//! points. Exactly one side is directed:
//!
//! * mechanism A: directed master, undirected ingredients (a TD or GDD). Each
//!   ingredient block meets every position group at most once, so it inherits
//!   the order of the master block.
//! * mechanism B: undirected master, directed ingredients (a DGDD). Ingredient
//!   blocks keep their own order.
//!
//! Filling replaces every group of a DGDD (plus an optional new point) by a
//! directed design. Every result is verified before it is returned.

use std::collections::HashMap;
use std::ops::Range;
use std::sync::Arc;

use parking_lot::Mutex;
use serde_json::json;

use crate::catalog::Catalog;
use crate::design::{verify_all, Block, GroupType, GroupedDesign, Point};
use crate::error::{Error, Result};
use crate::parallel;
use crate::search::{cache_key, search_gdd, IngredientCache, SearchOptions};
use crate::td::{td_any, width};

/// Weight of every master point; zero drops the point.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct WeightAssignment(Vec<usize>);

impl WeightAssignment {
    pub fn constant(v: usize, w: usize) -> Self {
        WeightAssignment(vec![w; v])
    }

    pub fn from_vec(w: Vec<usize>) -> Self {
        WeightAssignment(w)
    }

    pub fn get(&self, x: Point) -> usize {
        self.0[x as usize]
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// The common weight, if there is one.
    pub fn uniform(&self) -> Option<usize> {
        let w = *self.0.first()?;
        self.0.iter().all(|&x| x == w).then_some(w)
    }

    /// Flat id of copy 0 of each point; copies of `x` are
    /// `offset[x] .. offset[x] + w(x)`.
    fn offsets(&self) -> (Vec<Point>, usize) {
        let mut off = Vec::with_capacity(self.0.len());
        let mut next = 0usize;
        for &w in &self.0 {
            off.push(next as Point);
            next += w;
        }
        (off, next)
    }
}

/// What a block of the master needs: an ingredient with one group per block
/// position (sizes in position order), of the given directedness and index.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct IngredientRequest {
    pub directed: bool,
    pub sizes: Vec<usize>,
    pub lambda: u32,
    pub block_sizes: Vec<usize>,
}

impl IngredientRequest {
    pub fn group_type(&self) -> GroupType {
        GroupType::from_sizes(self.sizes.iter().copied().filter(|&s| s > 0))
    }

    /// Position order does not matter to a supplier.
    fn normalized(&self) -> IngredientRequest {
        let mut sizes: Vec<usize> = self.sizes.iter().copied().filter(|&s| s > 0).collect();
        sizes.sort_unstable();
        let mut ks = self.block_sizes.clone();
        ks.sort_unstable();
        ks.dedup();
        IngredientRequest { directed: self.directed, sizes, lambda: self.lambda, block_sizes: ks }
    }

    pub fn describe(&self) -> String {
        let ks: Vec<String> = self.block_sizes.iter().map(|k| k.to_string()).collect();
        format!(
            "{} of type {} with λ={} and K={{{}}}",
            if self.directed { "DGDD" } else { "GDD" },
            self.group_type(),
            self.lambda,
            ks.join(",")
        )
    }
}

/// A design handed out by a supplier, with a key identifying it.
#[derive(Clone, Debug)]
pub struct Supplied {
    pub key: String,
    pub design: Arc<GroupedDesign>,
}

/// Source of verified ingredients and fillers.
pub trait IngredientSupplier: Sync {
    fn ingredient(&self, req: &IngredientRequest) -> Result<Supplied>;

    /// A directed (v,5,2)DD used to fill a group.
    fn filler(&self, v: usize) -> Result<Supplied>;
}

/// Resolves requests from the catalog, then transversal designs, then the
/// ingredient cache and a bounded search. Answers are memoized.
pub struct StandardSupplier {
    catalog: &'static Catalog,
    cache: IngredientCache,
    search: SearchOptions,
    memo: Mutex<HashMap<String, Supplied>>,
}

impl StandardSupplier {
    pub fn new(catalog: &'static Catalog, cache: IngredientCache, search: SearchOptions) -> Self {
        StandardSupplier { catalog, cache, search, memo: Mutex::new(HashMap::new()) }
    }

    pub fn embedded() -> Result<Self> {
        Ok(StandardSupplier::new(Catalog::embedded()?, IngredientCache::disabled(), SearchOptions::default()))
    }

    fn memoized(&self, key: &str, make: impl FnOnce() -> Result<Supplied>) -> Result<Supplied> {
        if let Some(s) = self.memo.lock().get(key) {
            return Ok(s.clone());
        }
        let s = make()?;
        Ok(self.memo.lock().entry(key.to_string()).or_insert(s).clone())
    }
}

impl IngredientSupplier for StandardSupplier {
    fn ingredient(&self, req: &IngredientRequest) -> Result<Supplied> {
        let req = req.normalized();
        let unsatisfied = || Error::UnsatisfiedIngredient(req.describe());
        let t = req.group_type();
        let memo_key = format!("{}-{}-{}-{:?}", req.directed, t, req.lambda, req.block_sizes);
        self.memoized(&memo_key, || {
            if req.directed {
                let e = self.catalog.find_dgdd(&t).ok_or_else(unsatisfied)?;
                let d = e.build()?;
                if d.lambda() != req.lambda || !req.block_sizes.iter().all(|k| d.block_sizes().contains(k)) {
                    return Err(unsatisfied());
                }
                return Ok(Supplied { key: e.id.clone(), design: Arc::new(d) });
            }
            if req.lambda != 1 {
                return Err(unsatisfied());
            }
            let k = req.sizes.len();
            if let [(n, u)] = t.parts() {
                if req.block_sizes == [k] && *u == k && width(*n) >= k {
                    let td = td_any(k, *n)?;
                    return Ok(Supplied { key: format!("td-{k}-{n}"), design: Arc::new(td.into_design()) });
                }
            }
            let outcome = search_gdd(&t, &req.block_sizes, &self.search, &self.cache)?;
            let key = cache_key(&t, &req.block_sizes);
            match outcome.design() {
                Some(d) => Ok(Supplied { key, design: Arc::new(d) }),
                None => Err(unsatisfied()),
            }
        })
    }

    fn filler(&self, v: usize) -> Result<Supplied> {
        self.memoized(&format!("dd-{v}"), || {
            let e = self.catalog.find_dd(v).ok_or_else(|| Error::UnsatisfiedIngredient(format!("({v},5,2)DD filler")))?;
            Ok(Supplied { key: e.id.clone(), design: Arc::new(e.build()?) })
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize)]
pub enum Mechanism {
    A,
    B,
}

/// Where a copy of a source design sits in a result: block `i` of the source
/// became block `blocks.start + i`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Placement {
    /// Index into [`Built::sources`].
    pub source: usize,
    /// Master block (weighting) or group index (filling) the copy replaces.
    pub anchor: usize,
    pub blocks: Range<usize>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Layout {
    Wfc { mechanism: Mechanism, placements: Vec<Placement> },
    /// The DGDD's blocks come first, unchanged.
    Fill { base: Range<usize>, placements: Vec<Placement> },
}

/// A constructed design with the block layout that produced it.
#[derive(Clone, Debug)]
pub struct Built {
    pub design: GroupedDesign,
    pub layout: Layout,
    pub sources: Vec<Supplied>,
}

fn integrity(step: &str, d: &GroupedDesign) -> Result<()> {
    match verify_all(d).first_problem() {
        None => Ok(()),
        Some(p) => Err(Error::ConstructionIntegrity { step: step.to_string(), detail: p }),
    }
}

fn provenance_of(sources: &[Supplied]) -> serde_json::Value {
    let mut m = serde_json::Map::new();
    for s in sources {
        m.insert(s.key.clone(), s.design.provenance().clone());
    }
    serde_json::Value::Object(m)
}

/// Ingredient group (sorted by size, ties by index) assigned to each master
/// block position (sorted by weight, ties by position).
fn match_groups(ing: &GroupedDesign, weights: &[usize]) -> Option<Vec<Option<usize>>> {
    let groups = ing.groups()?;
    let mut pos: Vec<usize> = (0..weights.len()).filter(|&i| weights[i] > 0).collect();
    pos.sort_by_key(|&i| weights[i]);
    let mut gi: Vec<usize> = (0..groups.len()).collect();
    gi.sort_by_key(|&g| groups[g].len());
    if pos.len() != gi.len() {
        return None;
    }
    let mut out = vec![None; weights.len()];
    for (&p, &g) in pos.iter().zip(&gi) {
        if groups[g].len() != weights[p] {
            return None;
        }
        out[p] = Some(g);
    }
    Some(out)
}

/// Weighting: see the module docs for the two mechanisms. The result has
/// index `λ_master·λ_ingredient` and one group per master group (or per
/// master point when the master has no groups) of size `Σ w(x)`.
pub fn wfc(master: &GroupedDesign, w: &WeightAssignment, supply: &dyn IngredientSupplier) -> Result<Built> {
    let mechanism = match (master.directed(), w.len() == master.v()) {
        (_, false) => return Err(Error::Parameter(format!("{} weights for {} points", w.len(), master.v()))),
        (true, _) => Mechanism::A,
        (false, _) => Mechanism::B,
    };
    let (offsets, total) = w.offsets();
    let master_blocks = master.blocks();

    // One request per distinct weight profile.
    let profile = |b: &Block| -> Vec<usize> { b.points().iter().map(|&x| w.get(x)).collect() };
    let mut sources: Vec<Supplied> = Vec::new();
    let mut by_profile: HashMap<Vec<usize>, usize> = HashMap::new();
    let mut source_of = Vec::with_capacity(master_blocks.len());
    let ingredient_lambda = match mechanism {
        Mechanism::A => 1,
        Mechanism::B => 2,
    };
    for b in master_blocks {
        let mut key = profile(b);
        key.sort_unstable();
        let idx = match by_profile.get(&key) {
            Some(&i) => i,
            None => {
                let req = IngredientRequest {
                    directed: mechanism == Mechanism::B,
                    sizes: key.clone(),
                    lambda: ingredient_lambda,
                    block_sizes: vec![5],
                };
                let s = supply.ingredient(&req)?;
                if s.design.directed() != (mechanism == Mechanism::B) {
                    return Err(Error::Parameter("ingredients must be directed exactly when the master is not".into()));
                }
                sources.push(s);
                by_profile.insert(key, sources.len() - 1);
                sources.len() - 1
            }
        };
        source_of.push(idx);
    }

    // Expand each master block; copies are laid out in master block order.
    let mut starts = Vec::with_capacity(master_blocks.len() + 1);
    let mut acc = 0;
    for &s in &source_of {
        starts.push(acc);
        acc += sources[s].design.num_blocks();
    }
    starts.push(acc);
    let expanded = parallel::map_range(master_blocks.len(), |bi| -> Result<Vec<Block>> {
        let b = &master_blocks[bi];
        let ing = &sources[source_of[bi]].design;
        let weights = profile(b);
        let assign = match_groups(ing, &weights)
            .ok_or_else(|| Error::UnsatisfiedIngredient(format!("ingredient {} does not fit weights {weights:?}", sources[source_of[bi]].key)))?;
        // Ingredient point → (master position, flat id).
        let mut image = vec![(usize::MAX, 0 as Point); ing.v()];
        let groups = ing.groups().expect("matched ingredients have groups");
        for (p, g) in assign.iter().enumerate() {
            if let Some(g) = g {
                let mut pts = groups[*g].clone();
                pts.sort_unstable();
                for (c, &q) in pts.iter().enumerate() {
                    image[q as usize] = (p, offsets[b.points()[p] as usize] + c as Point);
                }
            }
        }
        ing.blocks()
            .iter()
            .map(|ib| {
                let mut pts: Vec<(usize, Point)> = ib.points().iter().map(|&q| image[q as usize]).collect();
                if mechanism == Mechanism::A {
                    pts.sort_by_key(|&(p, _)| p);
                }
                let flat: Vec<Point> = pts.iter().map(|&(_, x)| x).collect();
                Block::new(&flat)
            })
            .collect()
    });
    let mut blocks = Vec::with_capacity(acc);
    for e in expanded {
        blocks.extend(e?);
    }

    let offsets = &offsets;
    let groups: Vec<Vec<Point>> = match master.groups() {
        Some(gs) => gs
            .iter()
            .map(|g| g.iter().flat_map(|&x| (0..w.get(x)).map(move |c| offsets[x as usize] + c as Point)).collect::<Vec<_>>())
            .filter(|g| !g.is_empty())
            .collect(),
        None => (0..master.v() as Point)
            .filter(|&x| w.get(x) > 0)
            .map(|x| (0..w.get(x)).map(|c| offsets[x as usize] + c as Point).collect())
            .collect(),
    };
    let mut ks: Vec<usize> = sources.iter().flat_map(|s| s.design.block_sizes().to_vec()).collect();
    ks.sort_unstable();
    ks.dedup();
    let lambda = master.lambda() * sources.first().map_or(1, |s| s.design.lambda());
    let mut prov = json!({
        "kind": "wfc",
        "mechanism": mechanism,
        "master": master.provenance(),
        "ingredients": provenance_of(&sources),
    });
    match w.uniform() {
        Some(c) => prov["weight"] = json!(c),
        None => prov["weights"] = json!(w.0),
    }
    if w.0.contains(&0) {
        prov["dropped"] = json!(w.0.iter().filter(|&&x| x == 0).count());
    }
    let design = GroupedDesign::new(total, &ks, lambda, true, Some(groups), blocks)
        .map_err(|e| Error::ConstructionIntegrity { step: "wfc".into(), detail: e.to_string() })?
        .with_provenance(prov);
    integrity("wfc", &design)?;
    let placements = (0..master_blocks.len())
        .map(|bi| Placement { source: source_of[bi], anchor: bi, blocks: starts[bi]..starts[bi + 1] })
        .collect();
    Ok(Built { design, layout: Layout::Wfc { mechanism, placements }, sources })
}

/// Filling: each group `G` becomes a (|G|+η,5,2)DD on `G` (plus the new point,
/// which takes the largest id). Groups with `|G|+η ≤ 1` need no blocks.
pub fn fill(dgdd: &GroupedDesign, eta: usize, supply: &dyn IngredientSupplier) -> Result<Built> {
    if eta > 1 {
        return Err(Error::Parameter(format!("η must be 0 or 1, got {eta}")));
    }
    if !dgdd.directed() {
        return Err(Error::Parameter("filling needs a directed GDD".into()));
    }
    let groups = dgdd.groups().ok_or_else(|| Error::Parameter("filling needs a grouped design".into()))?;
    let inf = dgdd.v() as Point;
    let mut sources: Vec<Supplied> = Vec::new();
    let mut index: HashMap<usize, usize> = HashMap::new();
    let mut blocks = dgdd.blocks().to_vec();
    let base = 0..blocks.len();
    let mut placements = Vec::new();
    for (gi, g) in groups.iter().enumerate() {
        let n = g.len() + eta;
        if n <= 1 {
            continue;
        }
        let si = match index.get(&n) {
            Some(&i) => i,
            None => {
                let s = supply.filler(n)?;
                if !s.design.directed() || s.design.v() != n || s.design.groups().is_some() || s.design.lambda() != dgdd.lambda() {
                    return Err(Error::UnsatisfiedIngredient(format!("filler {} is not a ({n},5,{})DD", s.key, dgdd.lambda())));
                }
                sources.push(s);
                index.insert(n, sources.len() - 1);
                sources.len() - 1
            }
        };
        let mut pts = g.clone();
        pts.sort_unstable();
        if eta == 1 {
            pts.push(inf);
        }
        let start = blocks.len();
        blocks.extend(sources[si].design.blocks().iter().map(|b| b.map(|p| pts[p as usize])));
        placements.push(Placement { source: si, anchor: gi, blocks: start..blocks.len() });
    }
    let mut ks = dgdd.block_sizes().to_vec();
    ks.extend(sources.iter().flat_map(|s| s.design.block_sizes().to_vec()));
    ks.sort_unstable();
    ks.dedup();
    let mut counts: Vec<(String, usize)> = Vec::new();
    for p in &placements {
        let key = &sources[p.source].key;
        match counts.iter_mut().find(|(k, _)| k == key) {
            Some((_, c)) => *c += 1,
            None => counts.push((key.clone(), 1)),
        }
    }
    let prov = json!({
        "kind": "fill",
        "eta": eta,
        "dgdd": dgdd.provenance(),
        "fillers": counts.iter().map(|(k, c)| json!({"id": k, "copies": c})).collect::<Vec<_>>(),
        "filler_provenance": provenance_of(&sources),
    });
    let design = GroupedDesign::new(dgdd.v() + eta, &ks, dgdd.lambda(), true, None, blocks)
        .map_err(|e| Error::ConstructionIntegrity { step: "fill".into(), detail: e.to_string() })?
        .with_provenance(prov);
    integrity("fill", &design)?;
    Ok(Built { design, layout: Layout::Fill { base, placements }, sources })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::build_catalog;
    use crate::td::{td, trivial, truncate};

    #[test]
    fn mechanism_a_twenty_five() {
        let s = StandardSupplier::embedded().unwrap();
        let m = build_catalog("dgdd-5^5").unwrap();
        let r = wfc(&m, &WeightAssignment::constant(25, 4), &s).unwrap();
        assert_eq!(r.design.num_blocks(), 1600);
        assert_eq!(r.design.group_type(), GroupType::uniform(20, 5));
        assert_eq!(r.design.lambda(), 2);
    }

    #[test]
    fn mechanism_b_truncated_master() {
        let s = StandardSupplier::embedded().unwrap();
        let m = truncate(&td(6, 5).unwrap(), &[5, 5, 5, 5, 5, 4]).unwrap();
        let r = wfc(&m, &WeightAssignment::constant(29, 5), &s).unwrap();
        assert_eq!(r.design.group_type(), GroupType::parse("25^5 20^1").unwrap());
        let r = wfc(td(5, 7).unwrap().design(), &WeightAssignment::constant(35, 5), &s).unwrap();
        assert_eq!(r.design.group_type(), GroupType::uniform(35, 5));
    }

    #[test]
    fn fill_sixteen_groups() {
        let s = StandardSupplier::embedded().unwrap();
        let m = build_catalog("dgdd-4^6").unwrap();
        let g = wfc(&m, &WeightAssignment::constant(24, 4), &s).unwrap();
        let r = fill(&g.design, 0, &s).unwrap();
        assert_eq!(r.design.num_blocks(), 1824);
        assert_eq!(r.design.v(), 96);
    }

    #[test]
    fn unit_weights_reproduce_master() {
        let s = StandardSupplier::embedded().unwrap();
        let m = build_catalog("dgdd-5^5").unwrap();
        let r = wfc(&m, &WeightAssignment::constant(25, 1), &TrivialSupplier(&s)).unwrap();
        assert_eq!(r.design.blocks(), m.blocks());
    }

    struct TrivialSupplier<'a>(&'a StandardSupplier);

    impl IngredientSupplier for TrivialSupplier<'_> {
        fn ingredient(&self, req: &IngredientRequest) -> Result<Supplied> {
            let d = trivial(req.sizes.len()).unwrap().into_design();
            Ok(Supplied { key: "trivial".into(), design: Arc::new(d) })
        }
        fn filler(&self, v: usize) -> Result<Supplied> {
            self.0.filler(v)
        }
    }

    #[test]
    fn rejects_same_directedness() {
        let s = StandardSupplier::embedded().unwrap();
        let m = td(5, 4).unwrap().into_design();
        // Undirected master, but an undirected ingredient answers.
        assert!(wfc(&m, &WeightAssignment::constant(20, 1), &TrivialSupplier(&s)).is_err());
        assert!(matches!(
            wfc(&m, &WeightAssignment::constant(20, 7), &s),
            Err(Error::UnsatisfiedIngredient(_))
        ));
    }
}
