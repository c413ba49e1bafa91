//! Recipe planning and execution for every admissible v, and composite
//! defining-set certificates.
//!
//! `plan(v)` routes v to the catalog, to one of the small composite recipes
//! (weighting a catalog DGDD or a truncated TD, then filling), to a truncated
//! TD(k,m) with five full groups and `k−5` short ones, or, for v ≥ 1595, to
//! the same construction with k = 7 and recursively planned fillers.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::sync::Arc;
use std::time::{Duration, Instant};

use parking_lot::Mutex;
use serde::{Deserialize, Serialize};

use crate::catalog::{Catalog, Target};
use crate::constructions::{
    fill, wfc, Built, IngredientRequest, IngredientSupplier, Layout, Mechanism, Supplied, WeightAssignment,
};
use crate::design::{admissible, Admissibility, GroupType, GroupedDesign};
use crate::error::{Error, Result};
use crate::format::{checksum, sha256_hex};
use crate::parallel;
use crate::search::{cache_key, search_gdd, IngredientCache, SearchOptions, SearchOutcome};
use crate::td::{td_any, truncate, width};
use crate::trades::{
    self, combine, cyclical, lift, max_matching, partner_list, verify_certificate, CertifyOptions, CyclicalTrade,
    Hints, MatchedTrade, TradeCertificate, TradeGraph,
};

/// Admissible v in [15, 300] that cannot be planned with a zero search budget:
/// each needs a GDD (4^7 6^1 or 5^6 7^1) that no construction here supplies.
pub const DOCUMENTED_GAPS: [usize; 4] = [170, 171, 185, 186];

/// Rows `(lo, hi, m, k)`: v ∈ [lo, hi] is built from a truncated TD(k, m).
const TD_ROWS: [(usize, usize, usize, usize); 5] = [
    (190, 281, 7, 8),
    (285, 451, 9, 10),
    (455, 651, 13, 10),
    (655, 1251, 25, 10),
    // TD(10,36) is out of reach (width(36) = 5); m = 32 covers the range.
    (1255, 1591, 32, 10),
];

/// Smallest v routed through the k = 7 recursion.
pub const RECURSION_FROM: usize = 1595;

/// A construction tree. Leaves are catalog entries, TDs, truncated TDs and
/// searched GDDs.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "node", rename_all = "snake_case")]
pub enum Recipe {
    Catalog { id: String },
    Td { k: usize, n: usize },
    Truncate { k: usize, n: usize, keep: Vec<usize> },
    SearchGdd { group_type: String, block_sizes: Vec<usize> },
    Wfc { master: Box<Recipe>, weight: usize, ingredients: Vec<Recipe> },
    Fill { v: usize, route: String, dgdd: Box<Recipe>, eta: usize, fillers: Vec<Recipe> },
}

impl Recipe {
    pub fn fingerprint(&self) -> String {
        sha256_hex(serde_json::to_string(self).expect("recipes serialize").as_bytes())
    }

    /// Short human-readable name.
    pub fn label(&self) -> String {
        match self {
            Recipe::Catalog { id } => id.clone(),
            Recipe::Td { k, n } => format!("TD({k},{n})"),
            Recipe::Truncate { k, n, keep } => format!("TD({k},{n})|{keep:?}"),
            Recipe::SearchGdd { group_type, block_sizes } => {
                cache_key(&GroupType::parse(group_type).expect("planned types parse"), block_sizes)
            }
            Recipe::Wfc { master, weight, .. } => format!("{}×{weight}", master.label()),
            Recipe::Fill { v, .. } => format!("dd-v{v}*"),
        }
    }

    /// How v was routed, for sweeps and reports.
    pub fn route(&self) -> String {
        match self {
            Recipe::Catalog { id } => format!("catalog {id}"),
            Recipe::Fill { route, .. } => route.clone(),
            other => other.label(),
        }
    }

    pub fn children(&self) -> Vec<&Recipe> {
        match self {
            Recipe::Wfc { master, ingredients, .. } => std::iter::once(master.as_ref()).chain(ingredients).collect(),
            Recipe::Fill { dgdd, fillers, .. } => std::iter::once(dgdd.as_ref()).chain(fillers).collect(),
            _ => Vec::new(),
        }
    }

    pub fn leaves(&self) -> Vec<&Recipe> {
        let kids = self.children();
        if kids.is_empty() {
            return vec![self];
        }
        kids.into_iter().flat_map(Recipe::leaves).collect()
    }

    pub fn depth(&self) -> usize {
        1 + self.children().into_iter().map(Recipe::depth).max().unwrap_or(0)
    }

    /// Every directed design planned below this node (including itself).
    pub fn planned_dds(&self) -> Vec<usize> {
        let mut out = Vec::new();
        self.visit(&mut |r| {
            if let Recipe::Fill { v, .. } = r {
                out.push(*v);
            }
        });
        out
    }

    fn visit(&self, f: &mut impl FnMut(&Recipe)) {
        f(self);
        for c in self.children() {
            c.visit(f);
        }
    }

    /// Indented tree.
    pub fn render(&self) -> String {
        let mut s = String::new();
        self.render_into(&mut s, 0);
        s
    }

    fn render_into(&self, s: &mut String, depth: usize) {
        let pad = "  ".repeat(depth);
        let line = match self {
            Recipe::Fill { v, eta, route, .. } => format!("fill → ({v},5,2)DD, η={eta} [{route}]"),
            Recipe::Wfc { weight, .. } => format!("weight {weight}"),
            other => other.label(),
        };
        let _ = writeln!(s, "{pad}{line}");
        for c in self.children() {
            c.render_into(s, depth + 1);
        }
    }
}

#[derive(Clone, Debug)]
pub struct PlanOptions {
    pub search: SearchOptions,
    pub cache: IngredientCache,
}

impl Default for PlanOptions {
    fn default() -> Self {
        PlanOptions { search: SearchOptions { budget: Duration::ZERO, seed: 0 }, cache: IngredientCache::from_env() }
    }
}

/// One executed recipe node.
#[derive(Debug)]
pub struct Executed {
    pub recipe: Recipe,
    pub fingerprint: String,
    pub design: Arc<GroupedDesign>,
    pub layout: Option<Layout>,
    /// The master (weighting) or the DGDD (filling).
    pub base: Option<Arc<Executed>>,
    /// Aligned with the layout's source indices.
    pub sources: Vec<Arc<Executed>>,
}

/// Plans, executes and certifies, memoizing all three.
pub struct Planner {
    catalog: &'static Catalog,
    opts: PlanOptions,
    plans: Mutex<HashMap<usize, std::result::Result<Recipe, String>>>,
    executed: Mutex<HashMap<String, Arc<Executed>>>,
    certs: Mutex<HashMap<String, Arc<TradeCertificate>>>,
}

impl Planner {
    pub fn new(catalog: &'static Catalog, opts: PlanOptions) -> Self {
        Planner {
            catalog,
            opts,
            plans: Mutex::new(HashMap::new()),
            executed: Mutex::new(HashMap::new()),
            certs: Mutex::new(HashMap::new()),
        }
    }

    pub fn embedded(opts: PlanOptions) -> Result<Self> {
        Ok(Planner::new(Catalog::embedded()?, opts))
    }

    pub fn catalog(&self) -> &'static Catalog {
        self.catalog
    }

    /// Recipe for a super-simple (v,5,2)DD.
    pub fn plan(&self, v: usize) -> Result<Recipe> {
        if let Admissibility::No { reason } = admissible(v) {
            return Err(Error::Parameter(reason));
        }
        if let Some(r) = self.plans.lock().get(&v) {
            return r.clone().map_err(|reason| Error::Planning { v, reason });
        }
        let r = self.plan_uncached(v).map_err(|e| match e {
            Error::Planning { reason, .. } => reason,
            other => other.to_string(),
        });
        self.plans.lock().insert(v, r.clone());
        r.map_err(|reason| Error::Planning { v, reason })
    }

    fn plan_uncached(&self, v: usize) -> Result<Recipe> {
        if let Some(e) = self.catalog.find_dd(v) {
            return Ok(Recipe::Catalog { id: e.id.clone() });
        }
        let eta = v % 5;
        let cat = |id: &str| Recipe::Catalog { id: id.to_string() };
        let fill_of = |dgdd: Recipe, route: &str, groups: &[usize]| -> Result<Recipe> {
            let mut sizes: Vec<usize> = groups.iter().map(|g| g + eta).collect();
            sizes.sort_unstable();
            sizes.dedup();
            let fillers = sizes.into_iter().map(|n| self.plan(n)).collect::<Result<Vec<_>>>()?;
            Ok(Recipe::Fill { v, route: route.to_string(), dgdd: Box::new(dgdd), eta, fillers })
        };
        let wfc_of = |master: Recipe, weight: usize, ingredients: Vec<Recipe>| Recipe::Wfc {
            master: Box::new(master),
            weight,
            ingredients,
        };
        if v == 96 {
            // 16^6 has 96 points, so no extra point: η = 0 although 96 ≡ 1.
            let d = wfc_of(cat("dgdd-4^6"), 4, vec![Recipe::Td { k: 5, n: 4 }]);
            let route = "4^6 weighted by TD(5,4), filled".to_string();
            return Ok(Recipe::Fill { v, route, dgdd: Box::new(d), eta: 0, fillers: vec![self.plan(16)?] });
        }
        let dgdd5 = |js: std::ops::RangeInclusive<usize>| js.map(|j| cat(&format!("dgdd-5^{j}"))).collect::<Vec<_>>();
        match v - eta {
            90 | 105 | 135 => {
                let t = (v - eta) / 15;
                return fill_of(cat(&format!("dgdd-15^{t}")), "15^t filled", &[15]);
            }
            100 | 120 | 140 | 160 | 180 => {
                let t = (v - eta) / 20;
                let d = wfc_of(cat(&format!("dgdd-5^{t}")), 4, vec![Recipe::Td { k: 5, n: 4 }]);
                return fill_of(d, "5^t weighted by TD(5,4), filled", &[20]);
            }
            125 | 145 | 150 => {
                let a = (v - eta - 125) / 5;
                let mut keep = vec![5; 5];
                keep.push(a);
                let master = Recipe::Truncate { k: 6, n: 5, keep };
                let top = if a > 0 { 6 } else { 5 };
                let d = wfc_of(master, 5, dgdd5(5..=top));
                let groups: Vec<usize> = if a > 0 { vec![25, 5 * a] } else { vec![25] };
                return fill_of(d, "truncated TD(6,5) weighted by 5, filled", &groups);
            }
            165 => {
                let d = wfc_of(cat("dgdd-3^11"), 5, vec![Recipe::Td { k: 5, n: 5 }]);
                return fill_of(d, "3^11 weighted by TD(5,5), filled", &[15]);
            }
            175 => {
                let d = wfc_of(Recipe::Td { k: 5, n: 7 }, 5, dgdd5(5..=5));
                return fill_of(d, "TD(5,7) weighted by 5, filled", &[35]);
            }
            155 | 170 | 185 => {
                let (ty, ks, groups): (&str, Vec<usize>, Vec<usize>) = match v - eta {
                    155 => ("3^8 7^1", vec![5], vec![15, 35]),
                    170 => ("4^7 6^1", vec![5, 6, 7, 8], vec![20, 30]),
                    _ => ("5^6 7^1", vec![5, 6, 7], vec![25, 35]),
                };
                let t = GroupType::parse(ty)?;
                match search_gdd(&t, &ks, &self.opts.search, &self.opts.cache)? {
                    SearchOutcome::Found { .. } => {}
                    SearchOutcome::NotFound { reason } => {
                        return Err(Error::Planning {
                            v,
                            reason: format!("needs a {{{}}}-GDD of type {ty}: {reason}", join(&ks)),
                        })
                    }
                }
                let top = *ks.iter().max().expect("nonempty");
                let master = Recipe::SearchGdd { group_type: t.to_string(), block_sizes: ks };
                let d = wfc_of(master, 5, dgdd5(5..=top));
                return fill_of(d, &format!("searched GDD {ty} weighted by 5, filled"), &groups);
            }
            _ => {}
        }
        if let Some(&(_, _, m, k)) = TD_ROWS.iter().find(|r| (r.0..=r.1).contains(&v)) {
            return self.truncated_td(v, m, k, "truncated TD(k,m) weighted by 5, filled");
        }
        if v >= RECURSION_FROM {
            // m as large as possible with a TD(7,m) and 3 ≤ S ≤ 2m.
            let mut reasons = Vec::new();
            let mut m = (v - eta - 15) / 25;
            while m >= 63 {
                let s = (v - eta - 25 * m) / 5;
                if width(m) >= 7 && (3..=2 * m).contains(&s) {
                    match self.truncated_td(v, m, 7, "recursion: truncated TD(7,m) weighted by 5, filled") {
                        Ok(r) => return Ok(r),
                        Err(e) => reasons.push(format!("m={m}: {e}")),
                    }
                }
                m -= 1;
            }
            return Err(Error::Planning { v, reason: format!("no recursion parameters ({})", reasons.join("; ")) });
        }
        Err(Error::Planning { v, reason: "no route".into() })
    }

    /// v = 25m + 5Σa_i + η from TD(k,m) with five full groups and groups of
    /// sizes a_1 ≥ … ≥ a_{k−5}, each 0 or in [3,m]; the lexicographically
    /// smallest feasible sequence is used.
    fn truncated_td(&self, v: usize, m: usize, k: usize, route: &str) -> Result<Recipe> {
        let eta = v % 5;
        if width(m) < k {
            return Err(Error::Planning { v, reason: format!("TD({k},{m}) not constructible (width {})", width(m)) });
        }
        if v < 25 * m + eta || !(v - eta - 25 * m).is_multiple_of(5) {
            return Err(Error::Planning { v, reason: format!("{v} is not 25·{m} + 5S + η") });
        }
        let s = (v - eta - 25 * m) / 5;
        let r = k - 5;
        let big = self.plan(5 * m + eta);
        if let Err(e) = &big {
            return Err(Error::Planning { v, reason: format!("filler {}: {e}", 5 * m + eta) });
        }
        let ok = |a: usize| a == 0 || self.plan(5 * a + eta).is_ok();
        let a = choose_sizes(s, r, m, &ok)
            .ok_or_else(|| Error::Planning { v, reason: format!("no sizes a_1..a_{r} ∈ {{0}}∪[3,{m}] summing to {s}") })?;
        let nz = a.iter().filter(|&&x| x > 0).count();
        let mut keep = vec![m; 5];
        keep.extend(&a);
        let master = Recipe::Truncate { k, n: m, keep };
        let ingredients = (5..=5 + nz).map(|j| Recipe::Catalog { id: format!("dgdd-5^{j}") }).collect();
        let dgdd = Recipe::Wfc { master: Box::new(master), weight: 5, ingredients };
        let mut sizes: Vec<usize> = std::iter::once(5 * m + eta).chain(a.iter().filter(|&&x| x > 0).map(|x| 5 * x + eta)).collect();
        sizes.sort_unstable();
        sizes.dedup();
        let fillers = sizes.into_iter().map(|n| self.plan(n)).collect::<Result<Vec<_>>>()?;
        Ok(Recipe::Fill { v, route: route.to_string(), dgdd: Box::new(dgdd), eta, fillers })
    }

    /// Runs a recipe bottom-up; every node's output is verified.
    pub fn execute(&self, recipe: &Recipe) -> Result<Arc<Executed>> {
        let fp = recipe.fingerprint();
        if let Some(e) = self.executed.lock().get(&fp) {
            return Ok(e.clone());
        }
        let e = Arc::new(self.execute_uncached(recipe, fp.clone())?);
        Ok(self.executed.lock().entry(fp).or_insert(e).clone())
    }

    fn execute_uncached(&self, recipe: &Recipe, fingerprint: String) -> Result<Executed> {
        let leaf = |d: GroupedDesign| Executed {
            recipe: recipe.clone(),
            fingerprint: fingerprint.clone(),
            design: Arc::new(d),
            layout: None,
            base: None,
            sources: Vec::new(),
        };
        match recipe {
            Recipe::Catalog { id } => Ok(leaf(self.catalog.build(id)?)),
            Recipe::Td { k, n } => Ok(leaf(td_any(*k, *n)?.into_design())),
            Recipe::Truncate { k, n, keep } => Ok(leaf(truncate(&td_any(*k, *n)?, keep)?)),
            Recipe::SearchGdd { group_type, block_sizes } => {
                let t = GroupType::parse(group_type)?;
                match search_gdd(&t, block_sizes, &self.opts.search, &self.opts.cache)? {
                    SearchOutcome::Found { design, .. } => Ok(leaf(design)),
                    SearchOutcome::NotFound { reason } => {
                        Err(Error::UnsatisfiedIngredient(format!("GDD {group_type}: {reason}")))
                    }
                }
            }
            Recipe::Wfc { master, weight, ingredients } => {
                let base = self.execute(master)?;
                let supply = RecipeSupplier::new(self, ingredients, &[]);
                let built = wfc(&base.design, &WeightAssignment::constant(base.design.v(), *weight), &supply)?;
                Ok(supply.finish(recipe, fingerprint, built, base))
            }
            Recipe::Fill { dgdd, eta, fillers, .. } => {
                // Fillers are independent; build them concurrently first.
                let (base, pre) = parallel::join(|| self.execute(dgdd), || {
                    parallel::map(fillers, |f| self.execute(f).map(|_| ()))
                });
                let base = base?;
                pre.into_iter().collect::<Result<Vec<_>>>()?;
                let supply = RecipeSupplier::new(self, &[], fillers);
                let built = fill(&base.design, *eta, &supply)?;
                Ok(supply.finish(recipe, fingerprint, built, base))
            }
        }
    }

    /// Plans and executes v.
    pub fn construct(&self, v: usize) -> Result<Arc<Executed>> {
        let r = self.plan(v)?;
        self.execute(&r)
    }

    /// Defining-set certificate for the design `plan(v)` produces. Composite
    /// designs are certified from their parts: copies of an ingredient share
    /// one certificate lifted into place, and a directed master's trades are
    /// lifted through its ingredient copies. The deadline bounds the whole
    /// computation; when it passes, the certificate is marked incomplete.
    pub fn certify_d(&self, v: usize, budget: Option<Duration>) -> Result<TradeCertificate> {
        let e = self.construct(v)?;
        let deadline = budget.map(|b| Instant::now() + b);
        let cert = self.certify_executed(&e, deadline)?;
        verify_certificate(&e.design, &cert)?;
        Ok(cert.with_checksum(checksum(&e.design)))
    }

    /// Certificate for a design loaded from a file. With hints, a catalog
    /// design uses its column and orbit structure, and a design identical to
    /// what the planner builds for its v is certified from its parts.
    /// Otherwise the global packing is used.
    pub fn certify_design(&self, d: &GroupedDesign, hints: bool, budget: Option<Duration>) -> Result<TradeCertificate> {
        let deadline = budget.map(|b| Instant::now() + b);
        let opts = CertifyOptions { deadline, ..CertifyOptions::default() };
        let sum = checksum(d);
        let cert = if !hints {
            trades::certify(d, &Hints::none(), &opts)
        } else if let Some(id) = d.provenance().get("kind").filter(|k| *k == "catalog").and(d.provenance().get("id")) {
            let id = id.as_str().ok_or_else(|| Error::Format("catalog id is not a string".into()))?;
            trades::certify(d, &catalog_hints(self.catalog, id)?, &opts)
        } else {
            let rebuilt = match admissible(d.v()).is_yes() && d.directed() {
                true => self.construct(d.v()).ok().filter(|e| checksum(&e.design) == sum),
                false => None,
            };
            match rebuilt {
                Some(e) => self.certify_executed(&e, deadline)?,
                None => trades::certify(d, &Hints::none(), &opts),
            }
        };
        verify_certificate(d, &cert)?;
        Ok(cert.with_checksum(sum))
    }

    pub fn certify_executed(&self, e: &Executed, deadline: Option<Instant>) -> Result<TradeCertificate> {
        if let Some(c) = self.certs.lock().get(&e.fingerprint) {
            return Ok((**c).clone());
        }
        let c = self.certify_uncached(e, deadline)?;
        if c.complete {
            self.certs.lock().insert(e.fingerprint.clone(), Arc::new(c.clone()));
        }
        Ok(c)
    }

    fn certify_uncached(&self, e: &Executed, deadline: Option<Instant>) -> Result<TradeCertificate> {
        let d = &e.design;
        if !d.directed() {
            return Err(Error::Unsupported(format!("{} is undirected; trades are directed", e.recipe.label())));
        }
        let opts = CertifyOptions { deadline, ..CertifyOptions::default() };
        let expired = || deadline.is_some_and(|t| Instant::now() >= t);
        let b = d.num_blocks();
        let Some(layout) = &e.layout else {
            let hints = match &e.recipe {
                Recipe::Catalog { id } => catalog_hints(self.catalog, id)?,
                _ => Hints::none(),
            };
            return Ok(trades::certify(d, &hints, &opts));
        };
        let mut parts = Vec::new();
        let mut complete = true;
        let placements = match layout {
            Layout::Wfc { mechanism: Mechanism::A, placements } => {
                let base = e.base.as_ref().expect("weighting has a master");
                let mc = self.certify_executed(base, deadline)?;
                complete &= mc.complete;
                parts.push(lift_through_copies(d, &mc, placements));
                &placements[..0]
            }
            Layout::Wfc { mechanism: Mechanism::B, placements } => &placements[..],
            Layout::Fill { base, placements } => {
                let bc = self.certify_executed(e.base.as_ref().expect("filling has a DGDD"), deadline)?;
                complete &= bc.complete;
                let start = base.start;
                parts.push(lift(d, &bc, &|i| start + i));
                &placements[..]
            }
        };
        for p in placements {
            if expired() {
                complete = false;
                break;
            }
            let sc = self.certify_executed(&e.sources[p.source], deadline)?;
            complete &= sc.complete;
            let start = p.blocks.start;
            parts.push(lift(d, &sc, &|i| start + i));
        }
        let strategy = match layout {
            Layout::Wfc { mechanism: Mechanism::A, .. } => "master trades lifted through ingredient copies",
            Layout::Wfc { mechanism: Mechanism::B, .. } => "ingredient certificates per copy",
            Layout::Fill { .. } => "DGDD certificate plus filler certificates",
        };
        let mut cert = combine(b, parts, strategy)?;
        cert.complete = complete && !expired();
        // Small composites: a direct global packing may do better.
        if b <= 4000 && !expired() {
            let direct = trades::certify(d, &Hints::none(), &opts);
            if direct.lower_bound > cert.lower_bound {
                return Ok(direct);
            }
        }
        Ok(cert)
    }

    /// Plans (and optionally executes) every admissible v in the range.
    pub fn sweep(&self, vs: impl IntoIterator<Item = usize>, execute: bool) -> Vec<SweepEntry> {
        vs.into_iter()
            .filter(|&v| admissible(v).is_yes())
            .map(|v| {
                let t = Instant::now();
                let outcome = self.plan(v).and_then(|r| {
                    let route = r.route();
                    if execute {
                        let e = self.execute(&r)?;
                        Ok((route, Some(e.design.num_blocks())))
                    } else {
                        Ok((route, None))
                    }
                });
                let seconds = t.elapsed().as_secs_f64();
                match outcome {
                    Ok((route, blocks)) => SweepEntry { v, route: Some(route), blocks, error: None, seconds },
                    Err(e) => SweepEntry { v, route: None, blocks: None, error: Some(e.to_string()), seconds },
                }
            })
            .collect()
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct SweepEntry {
    pub v: usize,
    pub route: Option<String>,
    pub blocks: Option<usize>,
    pub error: Option<String>,
    pub seconds: f64,
}

fn join(ks: &[usize]) -> String {
    ks.iter().map(|k| k.to_string()).collect::<Vec<_>>().join(",")
}

/// Lexicographically smallest non-increasing `(a_1..a_r)` with entries in
/// `{0} ∪ [3,m]`, sum `s`, and `ok(a_i)` for every entry.
pub fn choose_sizes(s: usize, r: usize, m: usize, ok: &dyn Fn(usize) -> bool) -> Option<Vec<usize>> {
    fn rec(s: usize, r: usize, cap: usize, ok: &dyn Fn(usize) -> bool, out: &mut Vec<usize>) -> bool {
        if r == 0 {
            return s == 0;
        }
        if s == 0 {
            out.extend(std::iter::repeat_n(0, r));
            return true;
        }
        let lo = s.div_ceil(r).max(3);
        for a in lo..=cap.min(s) {
            if !ok(a) {
                continue;
            }
            out.push(a);
            if rec(s - a, r - 1, a, ok, out) {
                return true;
            }
            out.pop();
        }
        false
    }
    let mut out = Vec::with_capacity(r);
    rec(s, r, m, ok, &mut out).then_some(out)
}

fn catalog_hints(catalog: &Catalog, id: &str) -> Result<Hints> {
    let e = catalog.get(id)?;
    Ok(Hints::from_ranges(e.column_blocks()?, &e.orbit_ranges()?))
}

/// Mechanism A: if master blocks `b1, b2` trade (sharing points x, y), every
/// block of copy(b1) trades with the block of copy(b2) through the same copies
/// of x and y, so each master trade lifts to a perfect matching of trades
/// between the two copies; master cycles lift by following these matchings.
fn lift_through_copies(
    d: &GroupedDesign,
    master: &TradeCertificate,
    placements: &[crate::constructions::Placement],
) -> (Vec<MatchedTrade>, Vec<CyclicalTrade>) {
    let pair_matching = |b1: usize, b2: usize| -> Vec<(usize, usize)> {
        let (x, y) = (placements[b1].blocks.clone(), placements[b2].blocks.clone());
        let vertices: Vec<usize> = x.clone().chain(y.clone()).collect();
        let nx = x.len();
        let mut edges = Vec::new();
        for i in 0..nx {
            for j in 0..y.len() {
                if trades::find_partner(&d.blocks()[x.start + i], &d.blocks()[y.start + j]).is_some() {
                    edges.push((i, nx + j));
                }
            }
        }
        let g = TradeGraph { vertices, edges };
        max_matching(&g).into_iter().map(|(a, c)| (g.vertices[a], g.vertices[c])).collect()
    };
    let mut matching = Vec::new();
    let mut cycles = Vec::new();
    let as_trades = |pairs: Vec<(usize, usize)>| -> Vec<MatchedTrade> { partner_list(d, &pairs) };
    for m in &master.matching {
        matching.extend(as_trades(pair_matching(m.blocks[0], m.blocks[1])));
    }
    for c in &master.cycles {
        let s = c.blocks.len();
        let steps: Vec<Vec<(usize, usize)>> = (0..s).map(|i| pair_matching(c.blocks[i], c.blocks[(i + 1) % s])).collect();
        let perfect = (0..s).all(|i| steps[i].len() == placements[c.blocks[i]].blocks.len());
        let mut lifted = Vec::new();
        if perfect {
            let maps: Vec<HashMap<usize, usize>> = steps
                .iter()
                .enumerate()
                .map(|(i, st)| {
                    let from = &placements[c.blocks[i]].blocks;
                    st.iter().map(|&(a, b)| if from.contains(&a) { (a, b) } else { (b, a) }).collect()
                })
                .collect();
            let mut seen = std::collections::HashSet::new();
            for start in placements[c.blocks[0]].blocks.clone() {
                if seen.contains(&start) {
                    continue;
                }
                let mut cyc = Vec::new();
                let mut u = start;
                loop {
                    for map in &maps {
                        cyc.push(u);
                        u = map[&u];
                    }
                    if u == start {
                        break;
                    }
                }
                seen.extend(cyc.iter().copied());
                match cyclical(d, &cyc) {
                    Some(ct) => lifted.push(ct),
                    None => {
                        lifted.clear();
                        break;
                    }
                }
            }
        }
        if lifted.is_empty() {
            // Fall back to matchings between alternate consecutive copies.
            for i in (0..s - 1).step_by(2) {
                matching.extend(as_trades(pair_matching(c.blocks[i], c.blocks[i + 1])));
            }
        } else {
            cycles.extend(lifted);
        }
    }
    (matching, cycles)
}

/// Supplies a weighting or filling step from the recipe's child recipes and
/// remembers which executed child answered each key.
struct RecipeSupplier<'a> {
    planner: &'a Planner,
    ingredients: &'a [Recipe],
    fillers: &'a [Recipe],
    used: Mutex<HashMap<String, Arc<Executed>>>,
}

impl<'a> RecipeSupplier<'a> {
    fn new(planner: &'a Planner, ingredients: &'a [Recipe], fillers: &'a [Recipe]) -> Self {
        RecipeSupplier { planner, ingredients, fillers, used: Mutex::new(HashMap::new()) }
    }

    fn supply(&self, e: Arc<Executed>) -> Supplied {
        let key = e.recipe.label();
        self.used.lock().insert(key.clone(), e.clone());
        Supplied { key, design: e.design.clone() }
    }

    fn finish(self, recipe: &Recipe, fingerprint: String, built: Built, base: Arc<Executed>) -> Executed {
        let used = self.used.into_inner();
        let sources = built.sources.iter().map(|s| used[&s.key].clone()).collect();
        Executed {
            recipe: recipe.clone(),
            fingerprint,
            design: Arc::new(built.design),
            layout: Some(built.layout),
            base: Some(base),
            sources,
        }
    }
}

impl IngredientSupplier for RecipeSupplier<'_> {
    fn ingredient(&self, req: &IngredientRequest) -> Result<Supplied> {
        let want = req.group_type();
        for r in self.ingredients {
            let e = self.planner.execute(r)?;
            let d = &e.design;
            if d.directed() == req.directed && d.lambda() == req.lambda && d.group_type() == want {
                return Ok(self.supply(e));
            }
        }
        Err(Error::UnsatisfiedIngredient(req.describe()))
    }

    fn filler(&self, v: usize) -> Result<Supplied> {
        for r in self.fillers {
            let fv = match r {
                Recipe::Fill { v, .. } => *v,
                Recipe::Catalog { id } => match self.planner.catalog.get(id)?.target {
                    Target::Dd { v } => v,
                    _ => continue,
                },
                _ => continue,
            };
            if fv == v {
                return Ok(self.supply(self.planner.execute(r)?));
            }
        }
        Err(Error::UnsatisfiedIngredient(format!("({v},5,2)DD filler")))
    }
}

/// Provenance tree of a design file as indented text. Leaves are catalog
/// ids, TD parameters and search keys.
pub fn explain(d: &GroupedDesign) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "design: v={}, {} blocks, λ={}, {}", d.v(), d.num_blocks(), d.lambda(), if d.directed() { "directed" } else { "undirected" });
    explain_node(d.provenance(), &mut s, 1, None);
    s
}

fn explain_node(p: &serde_json::Value, s: &mut String, depth: usize, tag: Option<&str>) {
    let pad = "  ".repeat(depth);
    let tag = tag.map(|t| format!("{t}: ")).unwrap_or_default();
    let kind = p.get("kind").and_then(|k| k.as_str()).unwrap_or("unknown");
    let line = match kind {
        "catalog" => format!("catalog {}", p["id"].as_str().unwrap_or("?")),
        "td" => format!("TD({},{})", p["k"], p["n"]),
        "macneish" => format!("TD({},{}) by MacNeish product", p["k"], p["n"]),
        "truncate" => format!("truncation keeping {}", p["keep"]),
        "search_gdd" => format!("searched GDD {} (key {})", p["type"].as_str().unwrap_or("?"), p["key"].as_str().unwrap_or("?")),
        "orbit_gdd" => format!(
            "cyclic GDD {} mod {} (key {})",
            p["type"].as_str().unwrap_or("?"),
            p["modulus"],
            p["key"].as_str().unwrap_or("?")
        ),
        "wfc" => {
            let w = p.get("weight").map(|w| w.to_string()).unwrap_or_else(|| "varied".into());
            format!("weighting, mechanism {}, weight {w}", p["mechanism"].as_str().unwrap_or("?"))
        }
        "fill" => format!("filling, η={}", p["eta"]),
        other => other.to_string(),
    };
    let _ = writeln!(s, "{pad}{tag}{line}");
    match kind {
        "macneish" => {
            for f in p["factors"].as_array().into_iter().flatten() {
                explain_node(f, s, depth + 1, Some("factor"));
            }
        }
        "truncate" => explain_node(&p["td"], s, depth + 1, Some("td")),
        "wfc" => {
            explain_node(&p["master"], s, depth + 1, Some("master"));
            for (k, v) in p["ingredients"].as_object().into_iter().flatten() {
                explain_node(v, s, depth + 1, Some(&format!("ingredient {k}")));
            }
        }
        "fill" => {
            explain_node(&p["dgdd"], s, depth + 1, Some("dgdd"));
            let copies: HashMap<&str, u64> = p["fillers"]
                .as_array()
                .into_iter()
                .flatten()
                .filter_map(|f| Some((f["id"].as_str()?, f["copies"].as_u64()?)))
                .collect();
            for (k, v) in p["filler_provenance"].as_object().into_iter().flatten() {
                let n = copies.get(k.as_str()).copied().unwrap_or(0);
                explain_node(v, s, depth + 1, Some(&format!("filler {k} ×{n}")));
            }
        }
        _ => {}
    }
}

/// Leaf labels of an explain tree, for checks that leaves are constructible.
pub fn provenance_leaves(p: &serde_json::Value) -> Vec<String> {
    let kind = p.get("kind").and_then(|k| k.as_str()).unwrap_or("unknown");
    match kind {
        "catalog" => vec![format!("catalog:{}", p["id"].as_str().unwrap_or("?"))],
        "td" => vec![format!("td:{},{}", p["k"], p["n"])],
        "search_gdd" | "orbit_gdd" => vec![format!("search:{}", p["key"].as_str().unwrap_or("?"))],
        "macneish" => p["factors"].as_array().into_iter().flatten().flat_map(provenance_leaves).collect(),
        "truncate" => provenance_leaves(&p["td"]),
        "wfc" => {
            let mut v = provenance_leaves(&p["master"]);
            v.extend(p["ingredients"].as_object().into_iter().flatten().flat_map(|(_, x)| provenance_leaves(x)));
            v
        }
        "fill" => {
            let mut v = provenance_leaves(&p["dgdd"]);
            v.extend(p["filler_provenance"].as_object().into_iter().flatten().flat_map(|(_, x)| provenance_leaves(x)));
            v
        }
        other => vec![format!("unknown:{other}")],
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn planner() -> Planner {
        Planner::embedded(PlanOptions { search: SearchOptions { budget: Duration::ZERO, seed: 0 }, cache: IngredientCache::disabled() })
            .unwrap()
    }

    #[test]
    fn sizes_rule() {
        let all = |_: usize| true;
        assert_eq!(choose_sizes(3, 3, 7, &all), Some(vec![3, 0, 0]));
        assert_eq!(choose_sizes(4, 2, 63, &all), Some(vec![4, 0]));
        assert_eq!(choose_sizes(20, 3, 7, &all), Some(vec![7, 7, 6]));
        assert_eq!(choose_sizes(22, 3, 7, &all), None);
        assert_eq!(choose_sizes(5, 2, 63, &|a| a != 5), None);
        assert_eq!(choose_sizes(6, 2, 63, &|a| a != 6), Some(vec![3, 3]));
    }

    #[test]
    fn routes() {
        let p = planner();
        assert_eq!(p.plan(45).unwrap(), Recipe::Catalog { id: "dd-v45".into() });
        assert!(matches!(p.plan(17), Err(Error::Parameter(_))));
        assert!(matches!(p.plan(170), Err(Error::Planning { .. })));
        assert!(p.plan(155).unwrap().leaves().iter().any(|l| matches!(l, Recipe::SearchGdd { .. })));
        let r = p.plan(190).unwrap();
        let Recipe::Fill { dgdd, .. } = &r else { panic!("{r:?}") };
        let Recipe::Wfc { master, .. } = dgdd.as_ref() else { panic!() };
        assert_eq!(**master, Recipe::Truncate { k: 8, n: 7, keep: vec![7, 7, 7, 7, 7, 3, 0, 0] });
    }

    #[test]
    fn ninety_six() {
        let p = planner();
        let e = p.construct(96).unwrap();
        assert_eq!(e.design.num_blocks(), 1824);
        let c = p.certify_d(96, None).unwrap();
        assert!(c.success, "{}", c.lower_bound);
    }
}
