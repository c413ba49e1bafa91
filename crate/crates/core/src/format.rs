//! The JSON design file: keys sorted, one block per line, so files diff well.
//!
//! ```text
//! {
//!   "blocks": [
//!     [1,0,2,3,8],
//!     ...
//!   ],
//!   "directed": true,
//!   "groups": null,
//!   "k": 5,
//!   "labels": {"14": "inf"},
//!   "lambda": 2,
//!   "provenance": {...},
//!   "v": 15
//! }
//! ```
//!
//! `k` is a number for uniform block size, else the sorted array of sizes.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::Path;

use serde::Deserialize;
use sha2::{Digest, Sha256};

use crate::design::{Block, GroupedDesign, Point};
use crate::error::{Error, Result};

#[derive(Deserialize)]
#[serde(untagged)]
enum KField {
    One(usize),
    Many(Vec<usize>),
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct DesignFile {
    v: usize,
    k: KField,
    lambda: u32,
    directed: bool,
    #[serde(default)]
    groups: Option<Vec<Vec<Point>>>,
    blocks: Vec<Vec<Point>>,
    #[serde(default)]
    labels: BTreeMap<String, String>,
    #[serde(default)]
    provenance: serde_json::Value,
}

fn write_rows(out: &mut String, rows: impl Iterator<Item = impl AsRef<[Point]>>) {
    let mut first = true;
    out.push('[');
    for r in rows {
        out.push_str(if first { "\n    [" } else { ",\n    [" });
        first = false;
        for (i, p) in r.as_ref().iter().enumerate() {
            if i > 0 {
                out.push(',');
            }
            let _ = write!(out, "{p}");
        }
        out.push(']');
    }
    out.push_str(if first { "]" } else { "\n  ]" });
}

/// Serializes a design; output is byte-for-byte deterministic.
pub fn to_json(d: &GroupedDesign) -> String {
    let mut s = String::with_capacity(d.num_blocks() * 24 + 256);
    s.push_str("{\n  \"blocks\": ");
    write_rows(&mut s, d.blocks().iter().map(Block::points));
    let _ = write!(s, ",\n  \"directed\": {},\n  \"groups\": ", d.directed());
    match d.groups() {
        Some(gs) => write_rows(&mut s, gs.iter()),
        None => s.push_str("null"),
    }
    s.push_str(",\n  \"k\": ");
    match d.k() {
        Some(k) => {
            let _ = write!(s, "{k}");
        }
        None => s.push_str(&serde_json::to_string(d.block_sizes()).expect("sizes serialize")),
    }
    let labels: BTreeMap<String, &String> = d.labels().iter().map(|(p, l)| (p.to_string(), l)).collect();
    let _ = write!(
        s,
        ",\n  \"labels\": {},\n  \"lambda\": {},\n  \"provenance\": {},\n  \"v\": {}\n}}\n",
        serde_json::to_string(&labels).expect("labels serialize"),
        d.lambda(),
        serde_json::to_string(d.provenance()).expect("provenance serializes"),
        d.v()
    );
    s
}

pub fn from_json(text: &str) -> Result<GroupedDesign> {
    let f: DesignFile = serde_json::from_str(text).map_err(|e| Error::Format(e.to_string()))?;
    let ks = match f.k {
        KField::One(k) => vec![k],
        KField::Many(ks) => ks,
    };
    let blocks = f.blocks.iter().map(|b| Block::new(b)).collect::<Result<Vec<_>>>()?;
    let mut labels = BTreeMap::new();
    for (k, l) in f.labels {
        let p: Point = k.parse().map_err(|_| Error::Format(format!("label key `{k}` is not a point id")))?;
        if p as usize >= f.v {
            return Err(Error::Format(format!("label for point {p} outside 0..{}", f.v)));
        }
        labels.insert(p, l);
    }
    Ok(GroupedDesign::new(f.v, &ks, f.lambda, f.directed, f.groups, blocks)?
        .with_labels(labels)
        .with_provenance(f.provenance))
}

/// Hex sha256 of the serialized design.
pub fn checksum(d: &GroupedDesign) -> String {
    sha256_hex(to_json(d).as_bytes())
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    digest.iter().fold(String::with_capacity(64), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

pub fn read(path: &Path) -> Result<GroupedDesign> {
    from_json(&fs::read_to_string(path)?)
}

/// Writes atomically (temp file in the same directory, then rename).
/// Refuses to replace an existing file unless `force`.
pub fn write(path: &Path, d: &GroupedDesign, force: bool) -> Result<()> {
    write_text(path, &to_json(d), force)
}

pub fn write_text(path: &Path, text: &str, force: bool) -> Result<()> {
    if path.exists() && !force {
        return Err(Error::Io(std::io::Error::new(
            std::io::ErrorKind::AlreadyExists,
            format!("{} exists (use --force to overwrite)", path.display()),
        )));
    }
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    fs::create_dir_all(dir)?;
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("design");
    let tmp = dir.join(format!(".{name}.{}.tmp", std::process::id()));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(text.as_bytes())?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path).inspect_err(|_| {
        let _ = fs::remove_file(&tmp);
    })?;
    Ok(())
}
