//! Cyclic development of base blocks over Z_n, with an optional fixed point ∞.

use std::fmt;

use smallvec::SmallVec;

use crate::design::{Block, Point};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Symbol {
    Res(u32),
    Inf,
}

impl fmt::Display for Symbol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Symbol::Res(r) => write!(f, "{r}"),
            Symbol::Inf => write!(f, "inf"),
        }
    }
}

/// A base block over `{0..n-1, ∞}`.
pub type BaseBlock = Vec<Symbol>;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct OrbitSpec {
    pub base: Vec<BaseBlock>,
    pub modulus: u32,
    pub increment: u32,
    pub infinity: bool,
}

impl OrbitSpec {
    /// Number of points after development: `n`, plus one for ∞.
    pub fn universe(&self) -> usize {
        self.modulus as usize + usize::from(self.infinity)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.modulus;
        if self.increment == 0 || self.increment >= n {
            return Err(Error::Parameter(format!("increment {} not in 1..{n}", self.increment)));
        }
        for b in &self.base {
            check_base(b, n)?;
            if !self.infinity && b.contains(&Symbol::Inf) {
                return Err(Error::Parameter("∞ used by a spec without infinity".into()));
            }
        }
        Ok(())
    }

    /// Start offset of each base block's orbit inside `develop(self)`.
    pub fn offsets(&self) -> Result<Vec<usize>> {
        let mut off = Vec::with_capacity(self.base.len() + 1);
        let mut acc = 0;
        for b in &self.base {
            off.push(acc);
            acc += orbit_len(b, self.increment, self.modulus)?;
        }
        off.push(acc);
        Ok(off)
    }
}

fn check_base(b: &BaseBlock, n: u32) -> Result<()> {
    for (i, s) in b.iter().enumerate() {
        if let Symbol::Res(r) = s {
            if *r >= n {
                return Err(Error::Parameter(format!("symbol {r} not below modulus {n}")));
            }
        }
        if b[..i].contains(s) {
            return Err(Error::Parameter(format!("symbol {s} repeated in base block")));
        }
    }
    Ok(())
}

fn shift(b: &BaseBlock, t: u32, n: u32) -> BaseBlock {
    b.iter()
        .map(|s| match s {
            Symbol::Res(r) => Symbol::Res(((*r as u64 + t as u64) % n as u64) as u32),
            Symbol::Inf => Symbol::Inf,
        })
        .collect()
}

/// Length of the orbit of `base` under `+d (mod n)`.
pub fn orbit_len(base: &BaseBlock, d: u32, n: u32) -> Result<usize> {
    if d == 0 || d >= n {
        return Err(Error::Parameter(format!("increment {d} not in 1..{n}")));
    }
    check_base(base, n)?;
    // A translate equals the base as a sequence only when every finite symbol
    // is fixed, i.e. j·d ≡ 0 (mod n). Set-wise coincidences are left to the
    // super-simplicity check.
    if base.iter().all(|s| *s == Symbol::Inf) {
        return Ok(1);
    }
    Ok((n / gcd(d, n)) as usize)
}

pub(crate) fn gcd(a: u32, b: u32) -> u32 {
    if b == 0 { a } else { gcd(b, a % b) }
}

/// The distinct translates `base + j·d (mod n)`, `j = 0, 1, …`, up to the
/// first repetition; ∞ stays fixed.
pub fn orbit(base: &BaseBlock, d: u32, n: u32) -> Result<Vec<BaseBlock>> {
    let len = orbit_len(base, d, n)?;
    Ok((0..len as u32).map(|j| shift(base, (j as u64 * d as u64 % n as u64) as u32, n)).collect())
}

/// Concatenated orbits of every base block, in base-block order.
pub fn develop(spec: &OrbitSpec) -> Result<Vec<BaseBlock>> {
    spec.validate()?;
    let mut out = Vec::new();
    for b in &spec.base {
        out.extend(orbit(b, spec.increment, spec.modulus)?);
    }
    Ok(out)
}

/// Maps symbols to point ids: residues to themselves, ∞ to `n`.
pub fn to_block(b: &BaseBlock, n: u32) -> Block {
    let pts: SmallVec<[Point; 6]> = b
        .iter()
        .map(|s| match s {
            Symbol::Res(r) => *r,
            Symbol::Inf => n,
        })
        .collect();
    Block::from_vec_unchecked(pts)
}
