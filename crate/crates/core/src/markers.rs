//! The marker family `0^l1 1 w 1`, its reserved prefix, and occurrence scanning.

use serde::{Deserialize, Serialize};

use crate::bitword::BitWord;
use crate::error::{Error, Result};

/// All words `0^l1 | 1 | w | 1` with `w` of length `l2`, member `i` having payload `i`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MarkerFamily {
    ell1: usize,
    ell2: usize,
}

/// One marker occurrence: 1-based start and member index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Occurrence {
    pub pos: usize,
    pub index: usize,
}

impl MarkerFamily {
    pub fn new(ell1: usize, ell2: usize) -> Result<Self> {
        if ell1 <= ell2 {
            return Err(Error::Config(format!("marker zero run {ell1} must exceed payload length {ell2}")));
        }
        if ell2 > 40 {
            return Err(Error::Config(format!("payload length {ell2} too large")));
        }
        Ok(Self { ell1, ell2 })
    }

    pub fn ell1(&self) -> usize {
        self.ell1
    }

    pub fn ell2(&self) -> usize {
        self.ell2
    }

    /// Marker length `L_M = l1 + l2 + 2`.
    pub fn marker_len(&self) -> usize {
        self.ell1 + self.ell2 + 2
    }

    pub fn size(&self) -> usize {
        1 << self.ell2
    }

    pub fn member(&self, index: usize) -> BitWord {
        debug_assert!(index < self.size());
        let mut bits = vec![false; self.ell1];
        bits.push(true);
        bits.extend(BitWord::from_uint(index as u128, self.ell2).into_bits());
        bits.push(true);
        BitWord::from_bits(bits)
    }

    pub fn members(&self) -> impl Iterator<Item = BitWord> + '_ {
        (0..self.size()).map(|i| self.member(i))
    }

    /// Member index of the length-`L_M` window of `bits` starting at 0-based `start`.
    pub fn index_at(&self, bits: &[bool], start: usize) -> Option<usize> {
        let lm = self.marker_len();
        if start + lm > bits.len() {
            return None;
        }
        let w = &bits[start..start + lm];
        if w[..self.ell1].iter().any(|&b| b) || !w[self.ell1] || !w[lm - 1] {
            return None;
        }
        Some(w[self.ell1 + 1..lm - 1].iter().fold(0usize, |acc, &b| (acc << 1) | b as usize))
    }

    /// All occurrences in ascending position order.
    pub fn scan(&self, w: &BitWord) -> Vec<Occurrence> {
        scan_bits(self, w.bits())
    }

    pub fn verify_mu(&self) -> bool {
        verify_mu(&self.members().collect::<Vec<_>>())
    }
}

pub(crate) fn scan_bits(fam: &MarkerFamily, bits: &[bool]) -> Vec<Occurrence> {
    let lm = fam.marker_len();
    let mut out = Vec::new();
    if bits.len() < lm {
        return out;
    }
    // zeros[i]: length of the zero run ending just before position i
    let mut run = 0usize;
    let mut zeros = vec![0usize; bits.len() + 1];
    for (i, &b) in bits.iter().enumerate() {
        zeros[i] = run;
        run = if b { 0 } else { run + 1 };
    }
    zeros[bits.len()] = run;
    for start in 0..=bits.len() - lm {
        let one = start + fam.ell1;
        if zeros[one] >= fam.ell1 && bits[one] && bits[start + lm - 1] {
            let index = bits[one + 1..start + lm - 1].iter().fold(0usize, |acc, &b| (acc << 1) | b as usize);
            out.push(Occurrence { pos: start + 1, index });
        }
    }
    debug_assert!(out.windows(2).all(|p| p[1].pos - p[0].pos >= lm), "overlapping marker occurrences");
    out
}

pub fn build_family(ell1: usize, ell2: usize) -> Result<MarkerFamily> {
    MarkerFamily::new(ell1, ell2)
}

pub fn scan_occurrences(w: &BitWord, fam: &MarkerFamily) -> Vec<Occurrence> {
    fam.scan(w)
}

/// No proper prefix of any member equals the same-length suffix of any member.
pub fn verify_mu(members: &[BitWord]) -> bool {
    let Some(len) = members.first().map(BitWord::len) else {
        return true;
    };
    if members.iter().any(|m| m.len() != len) {
        return false;
    }
    (1..len).all(|p| {
        let prefixes: std::collections::HashSet<&[bool]> = members.iter().map(|m| &m.bits()[..p]).collect();
        members.iter().all(|m| !prefixes.contains(&m.bits()[len - p..]))
    })
}

/// The reserved markers `m_0 .. m_l`: the first `l + 1` members in payload order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReservedMarkers {
    count: usize,
}

impl ReservedMarkers {
    pub fn new(fam: &MarkerFamily, count: usize) -> Result<Self> {
        if count > fam.size() {
            return Err(Error::Config(format!("{count} reserved markers requested from a family of {}", fam.size())));
        }
        Ok(Self { count })
    }

    pub fn len(&self) -> usize {
        self.count
    }

    pub fn is_empty(&self) -> bool {
        self.count == 0
    }

    pub fn contains(&self, index: usize) -> bool {
        index < self.count
    }
}
