//! The base-block catalog: every direct construction as data.
//!
//! The catalog ships as `data/catalog.txt` (grammar in `CATALOG.md`) and is
//! compiled in; an external file with the same grammar can be loaded instead.
//! The last line carries a sha256 of everything before it and is checked on
//! every load.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::sync::OnceLock;

use serde_json::json;

use crate::cyclic::{self, BaseBlock, OrbitSpec, Symbol};
use crate::design::{verify_directed, verify_super_simple, Block, GroupType, GroupedDesign, Point};
use crate::error::{Error, Result};
use crate::format::sha256_hex;

const EMBEDDED: &str = include_str!("../data/catalog.txt");

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum EntryKind {
    Dd,
    Dgdd,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum GroupRule {
    /// Groups `{i, i+t, i+2t, …}` for `0 ≤ i < t`.
    Stride(u32),
    Explicit(Vec<Vec<Point>>),
}

impl GroupRule {
    pub fn groups(&self, n: u32) -> Vec<Vec<Point>> {
        match self {
            GroupRule::Stride(t) => (0..*t).map(|i| (i..n).step_by(*t as usize).collect()).collect(),
            GroupRule::Explicit(gs) => gs.clone(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Target {
    Dd { v: usize },
    Dgdd { group_type: GroupType, rule: GroupRule },
}

impl fmt::Display for Target {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Target::Dd { v } => write!(f, "({v},5,2)DD"),
            Target::Dgdd { group_type, .. } => write!(f, "(5,2)-DGDD of type {group_type}"),
        }
    }
}

/// A correction applied to the printed table: base block `index` was
/// printed as `printed`, or was missing (`None`).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Erratum {
    pub index: usize,
    pub printed: Option<BaseBlock>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CatalogEntry {
    pub id: String,
    pub kind: EntryKind,
    pub target: Target,
    pub orbit: OrbitSpec,
    /// Base-block indices of each table column.
    pub columns: Vec<Vec<usize>>,
    /// The published lower bound on smallest defining sets, as printed.
    pub claim: (u64, u64),
    pub errata: Vec<Erratum>,
}

impl CatalogEntry {
    pub fn v(&self) -> usize {
        self.orbit.universe()
    }

    /// Block count required by the parameters.
    pub fn expected_blocks(&self) -> usize {
        let v = self.v();
        match &self.target {
            Target::Dd { .. } => v * (v - 1) / 5,
            Target::Dgdd { group_type, .. } => 2 * 2 * group_type.cross_pairs() / 10,
        }
    }

    /// Block indices (into the developed design) of each column's orbits.
    pub fn column_blocks(&self) -> Result<Vec<Vec<usize>>> {
        let off = self.orbit.offsets()?;
        Ok(self.columns.iter().map(|col| col.iter().flat_map(|&i| off[i]..off[i + 1]).collect()).collect())
    }

    /// Block-index ranges of each base block's orbit.
    pub fn orbit_ranges(&self) -> Result<Vec<std::ops::Range<usize>>> {
        let off = self.orbit.offsets()?;
        Ok(off.windows(2).map(|w| w[0]..w[1]).collect())
    }

    /// Develops, attaches groups, and verifies; returns only verified designs.
    pub fn build(&self) -> Result<GroupedDesign> {
        let n = self.orbit.modulus;
        let dev = cyclic::develop(&self.orbit)?;
        let blocks: Vec<Block> = dev.iter().map(|b| cyclic::to_block(b, n)).collect();
        let groups = match &self.target {
            Target::Dd { .. } => None,
            Target::Dgdd { rule, .. } => Some(rule.groups(n)),
        };
        let integrity = |detail: String| Error::CatalogIntegrity { id: self.id.clone(), detail };
        let mut labels = BTreeMap::new();
        if self.orbit.infinity {
            labels.insert(n, "inf".to_string());
        }
        let d = GroupedDesign::new(self.v(), &[5], 2, true, groups, blocks)
            .map_err(|e| integrity(e.to_string()))?
            .with_labels(labels)
            .with_provenance(json!({"kind": "catalog", "id": self.id}));
        if let Target::Dgdd { group_type, .. } = &self.target {
            if d.group_type() != *group_type {
                return Err(integrity(format!("groups have type {}, declared {group_type}", d.group_type())));
            }
        }
        if d.num_blocks() != self.expected_blocks() {
            return Err(integrity(format!("{} blocks developed, {} required", d.num_blocks(), self.expected_blocks())));
        }
        let cov = verify_directed(&d)?;
        if let Some(p) = cov.first_problem() {
            return Err(integrity(p));
        }
        if let Some(p) = verify_super_simple(&d).first_problem() {
            return Err(integrity(p));
        }
        Ok(d)
    }
}

#[derive(Clone, Debug)]
pub struct Catalog {
    entries: Vec<CatalogEntry>,
    checksum: String,
}

/// sha256 over every byte before the trailing `checksum` line.
pub fn compute_checksum(text: &str) -> String {
    sha256_hex(body(text).as_bytes())
}

fn body(text: &str) -> &str {
    let trimmed = text.trim_end_matches('\n');
    match trimmed.rfind('\n') {
        Some(i) if trimmed[i + 1..].starts_with("checksum ") => &text[..i + 1],
        _ if trimmed.starts_with("checksum ") => "",
        _ => text,
    }
}

fn perr(line: usize, msg: impl Into<String>) -> Error {
    Error::CatalogFormat { line, msg: msg.into() }
}

fn parse_num<T: std::str::FromStr>(s: &str, line: usize, what: &str) -> Result<T> {
    s.trim().parse().map_err(|_| perr(line, format!("bad {what} `{s}`")))
}

fn parse_base(s: &str, line: usize) -> Result<BaseBlock> {
    s.split(',')
        .map(|t| match t.trim() {
            "inf" => Ok(Symbol::Inf),
            t => parse_num(t, line, "symbol").map(Symbol::Res),
        })
        .collect()
}

fn parse_index_list(s: &str, line: usize) -> Result<Vec<usize>> {
    s.split(',').map(|t| parse_num(t, line, "index")).collect()
}

#[derive(Default)]
struct Draft {
    id: String,
    start: usize,
    kind: Option<EntryKind>,
    v: Option<usize>,
    group_type: Option<GroupType>,
    rule: Option<GroupRule>,
    modulus: Option<u32>,
    inc: Option<u32>,
    inf: Option<bool>,
    columns: Option<Vec<Vec<usize>>>,
    claim: Option<(u64, u64)>,
    blocks: Vec<BaseBlock>,
    errata: Vec<Erratum>,
}

impl Draft {
    fn finish(self, line: usize) -> Result<CatalogEntry> {
        let missing = |f: &str| perr(self.start, format!("entry `{}` lacks `{f}`", self.id));
        let kind = self.kind.ok_or_else(|| missing("kind"))?;
        let orbit = OrbitSpec {
            base: self.blocks,
            modulus: self.modulus.ok_or_else(|| missing("mod"))?,
            increment: self.inc.ok_or_else(|| missing("inc"))?,
            infinity: self.inf.ok_or_else(|| missing("inf"))?,
        };
        orbit.validate().map_err(|e| perr(line, format!("entry `{}`: {e}", self.id)))?;
        if orbit.base.iter().any(|b| b.len() != 5) {
            return Err(perr(line, format!("entry `{}` has a base block of size ≠ 5", self.id)));
        }
        let target = match kind {
            EntryKind::Dd => {
                if self.group_type.is_some() || self.rule.is_some() {
                    return Err(perr(self.start, "dd entries take `v`, not `type`/`groups`"));
                }
                let v = self.v.ok_or_else(|| missing("v"))?;
                if v != orbit.universe() {
                    return Err(perr(self.start, format!("v {v} but mod/inf give {}", orbit.universe())));
                }
                Target::Dd { v }
            }
            EntryKind::Dgdd => {
                if self.v.is_some() || orbit.infinity {
                    return Err(perr(self.start, "dgdd entries take `type` and `groups`, and no ∞"));
                }
                let group_type = self.group_type.ok_or_else(|| missing("type"))?;
                if group_type.points() != orbit.modulus as usize {
                    return Err(perr(self.start, format!("type {group_type} does not have {} points", orbit.modulus)));
                }
                Target::Dgdd { group_type, rule: self.rule.ok_or_else(|| missing("groups"))? }
            }
        };
        let columns = self.columns.ok_or_else(|| missing("columns"))?;
        let mut seen: Vec<usize> = columns.iter().flatten().copied().collect();
        seen.sort_unstable();
        if seen != (0..orbit.base.len()).collect::<Vec<_>>() {
            return Err(perr(self.start, format!("columns of `{}` do not partition its base blocks", self.id)));
        }
        let claim = self.claim.ok_or_else(|| missing("claim"))?;
        if claim.1 == 0 || 2 * claim.0 < claim.1 {
            return Err(perr(self.start, format!("claim {}/{} is below 1/2", claim.0, claim.1)));
        }
        for e in &self.errata {
            if e.index >= orbit.base.len() {
                return Err(perr(self.start, format!("erratum for missing base block {}", e.index)));
            }
        }
        Ok(CatalogEntry { id: self.id, kind, target, orbit, columns, claim, errata: self.errata })
    }
}

impl Catalog {
    /// Parses and checks the trailing checksum.
    pub fn parse(text: &str) -> Result<Catalog> {
        let body_text = body(text);
        let last = text[body_text.len()..].trim();
        let n_body = body_text.lines().count();
        let declared = last
            .strip_prefix("checksum sha256 ")
            .ok_or_else(|| perr(n_body + 1, "missing final `checksum sha256 <hex>` line"))?
            .trim();
        let actual = compute_checksum(text);
        if declared != actual {
            return Err(perr(n_body + 1, format!("checksum mismatch: file says {declared}, content hashes to {actual}")));
        }
        let mut entries: Vec<CatalogEntry> = Vec::new();
        let mut cur: Option<Draft> = None;
        for (i, raw) in body_text.lines().enumerate() {
            let ln = i + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, rest) = line.split_once(' ').map(|(k, r)| (k, r.trim())).unwrap_or((line, ""));
            if key == "entry" {
                if cur.is_some() {
                    return Err(perr(ln, "`entry` before `end`"));
                }
                if rest.is_empty() || entries.iter().any(|e| e.id == rest) {
                    return Err(perr(ln, format!("missing or duplicate id `{rest}`")));
                }
                cur = Some(Draft { id: rest.to_string(), start: ln, ..Default::default() });
                continue;
            }
            let d = cur.as_mut().ok_or_else(|| perr(ln, format!("`{key}` outside an entry")))?;
            let dup = |set: bool| if set { Err(perr(ln, format!("duplicate `{key}`"))) } else { Ok(()) };
            match key {
                "kind" => {
                    dup(d.kind.is_some())?;
                    d.kind = Some(match rest {
                        "dd" => EntryKind::Dd,
                        "dgdd" => EntryKind::Dgdd,
                        _ => return Err(perr(ln, format!("unknown kind `{rest}`"))),
                    });
                }
                "v" => {
                    dup(d.v.is_some())?;
                    d.v = Some(parse_num(rest, ln, "v")?);
                }
                "type" => {
                    dup(d.group_type.is_some())?;
                    d.group_type = Some(GroupType::parse(rest).map_err(|e| perr(ln, e.to_string()))?);
                }
                "groups" => {
                    dup(d.rule.is_some())?;
                    d.rule = Some(if let Some(t) = rest.strip_prefix("stride ") {
                        GroupRule::Stride(parse_num(t, ln, "stride")?)
                    } else if let Some(gs) = rest.strip_prefix("explicit ") {
                        GroupRule::Explicit(
                            gs.split('|')
                                .map(|g| g.split(',').map(|p| parse_num(p, ln, "point")).collect())
                                .collect::<Result<_>>()?,
                        )
                    } else {
                        return Err(perr(ln, format!("unknown group rule `{rest}`")));
                    });
                }
                "mod" => {
                    dup(d.modulus.is_some())?;
                    d.modulus = Some(parse_num(rest, ln, "modulus")?);
                }
                "inc" => {
                    dup(d.inc.is_some())?;
                    d.inc = Some(parse_num(rest, ln, "increment")?);
                }
                "inf" => {
                    dup(d.inf.is_some())?;
                    d.inf = Some(match rest {
                        "yes" => true,
                        "no" => false,
                        _ => return Err(perr(ln, "inf must be yes or no")),
                    });
                }
                "columns" => {
                    dup(d.columns.is_some())?;
                    d.columns = Some(rest.split('|').map(|c| parse_index_list(c, ln)).collect::<Result<_>>()?);
                }
                "claim" => {
                    dup(d.claim.is_some())?;
                    let (p, q) = rest.split_once('/').ok_or_else(|| perr(ln, "claim must be p/q"))?;
                    d.claim = Some((parse_num(p, ln, "numerator")?, parse_num(q, ln, "denominator")?));
                }
                "block" => d.blocks.push(parse_base(rest, ln)?),
                "erratum" => {
                    let (idx, what) = rest.split_once(' ').ok_or_else(|| perr(ln, "erratum <index> printed|absent"))?;
                    let index = parse_num(idx, ln, "erratum index")?;
                    let printed = match what.trim() {
                        "absent" => None,
                        w => Some(parse_base(
                            w.strip_prefix("printed ").ok_or_else(|| perr(ln, "erratum <index> printed|absent"))?,
                            ln,
                        )?),
                    };
                    d.errata.push(Erratum { index, printed });
                }
                "end" => entries.push(cur.take().expect("inside an entry").finish(ln)?),
                _ => return Err(perr(ln, format!("unknown field `{key}`"))),
            }
        }
        if let Some(d) = cur {
            return Err(perr(d.start, format!("entry `{}` is not closed by `end`", d.id)));
        }
        Ok(Catalog { entries, checksum: actual })
    }

    pub fn load(path: &Path) -> Result<Catalog> {
        Catalog::parse(&std::fs::read_to_string(path)?)
    }

    /// The compiled-in catalog.
    pub fn embedded() -> Result<&'static Catalog> {
        static CAT: OnceLock<std::result::Result<Catalog, String>> = OnceLock::new();
        CAT.get_or_init(|| Catalog::parse(EMBEDDED).map_err(|e| e.to_string()))
            .as_ref()
            .map_err(|e| Error::CatalogFormat { line: 0, msg: format!("embedded catalog: {e}") })
    }

    pub fn embedded_text() -> &'static str {
        EMBEDDED
    }

    pub fn checksum(&self) -> &str {
        &self.checksum
    }

    pub fn entries(&self) -> &[CatalogEntry] {
        &self.entries
    }

    pub fn get(&self, id: &str) -> Result<&CatalogEntry> {
        self.entries.iter().find(|e| e.id == id).ok_or_else(|| Error::UnknownEntry(id.to_string()))
    }

    pub fn ids(&self) -> Vec<(String, Target)> {
        self.entries.iter().map(|e| (e.id.clone(), e.target.clone())).collect()
    }

    pub fn find_dd(&self, v: usize) -> Option<&CatalogEntry> {
        self.entries.iter().find(|e| e.target == Target::Dd { v })
    }

    pub fn find_dgdd(&self, t: &GroupType) -> Option<&CatalogEntry> {
        self.entries
            .iter()
            .find(|e| matches!(&e.target, Target::Dgdd { group_type, .. } if group_type == t))
    }

    pub fn build(&self, id: &str) -> Result<GroupedDesign> {
        self.get(id)?.build()
    }
}

/// Builds and verifies an entry of the compiled-in catalog.
pub fn build_catalog(id: &str) -> Result<GroupedDesign> {
    Catalog::embedded()?.build(id)
}

/// Stable listing of the compiled-in catalog.
pub fn catalog_ids() -> Vec<(String, Target)> {
    Catalog::embedded().map(Catalog::ids).unwrap_or_default()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn with_checksum(body: &str) -> String {
        format!("{body}checksum sha256 {}\n", compute_checksum(body))
    }

    const TINY: &str = "entry t\nkind dd\nv 15\nmod 14\ninc 2\ninf yes\ncolumns 0,3 | 1,4 | 2,5\nclaim 21/42\n\
block 1,0,2,3,8\nblock 0,3,13,11,9\nblock 0,1,4,10,9\nblock 0,7,11,4,2\nblock 1,0,inf,5,7\nblock 13,2,inf,0,10\nend\n";

    #[test]
    fn embedded_loads() {
        let c = Catalog::embedded().unwrap();
        assert_eq!(c.entries().len(), 48);
        assert_eq!(c.checksum(), compute_checksum(EMBEDDED));
    }

    #[test]
    fn tiny_catalog_builds() {
        let c = Catalog::parse(&with_checksum(TINY)).unwrap();
        let d = c.build("t").unwrap();
        assert_eq!(d.num_blocks(), 42);
        assert_eq!(d.labels().get(&14).map(String::as_str), Some("inf"));
        assert_eq!(c.get("t").unwrap().column_blocks().unwrap()[0], (0..7).chain(21..28).collect::<Vec<_>>());
    }

    #[test]
    fn checksum_mismatch_rejected() {
        let mut text = with_checksum(TINY);
        text = text.replacen("claim 21/42", "claim 22/42", 1);
        assert!(matches!(Catalog::parse(&text), Err(Error::CatalogFormat { .. })));
    }

    #[test]
    fn unknown_field_rejected() {
        let text = with_checksum(&TINY.replacen("claim", "colour red\nclaim", 1));
        let err = Catalog::parse(&text).unwrap_err();
        assert!(err.to_string().contains("unknown field `colour`"), "{err}");
    }

    #[test]
    fn typo_is_an_integrity_error() {
        let text = with_checksum(&TINY.replacen("block 1,0,2,3,8", "block 1,0,2,8,3", 1));
        let c = Catalog::parse(&text).unwrap();
        assert!(matches!(c.build("t"), Err(Error::CatalogIntegrity { .. })));
    }

    #[test]
    fn stride_groups() {
        assert_eq!(GroupRule::Stride(3).groups(9), vec![vec![0, 3, 6], vec![1, 4, 7], vec![2, 5, 8]]);
    }
}
