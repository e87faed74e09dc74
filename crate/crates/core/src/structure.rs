//! Word-level structure: legit words, repeat-free encoding, block hierarchies
//! with their hashes, and the marker adjacency table.

use std::collections::HashSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bitword::BitWord;
use crate::error::{Error, Result};
use crate::markers::{scan_bits, MarkerFamily, ReservedMarkers};

/// Structural lengths shared by encoder and decoder.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StructureParams {
    /// Every window of this many bits of a legit word contains a marker.
    pub window_w: usize,
    /// Repeat-free window.
    pub l_rf: usize,
    /// Hash length.
    pub l_h: usize,
    /// Blocks longer than this are halved at the next level.
    pub stop_len: usize,
    /// Number of hierarchy levels.
    pub levels: usize,
}

/// Number of levels needed until a block of `max_len` bits is at most `stop_len` long.
pub fn level_count(max_len: usize, stop_len: usize) -> usize {
    let mut len = max_len;
    let mut levels = 1;
    while len > stop_len {
        len = len.div_ceil(2);
        levels += 1;
    }
    levels
}

pub fn is_repeat_free(w: &BitWord, ell: usize) -> bool {
    repeat_free_bits(w.bits(), ell)
}

pub(crate) fn repeat_free_bits(bits: &[bool], ell: usize) -> bool {
    if ell == 0 {
        return bits.is_empty();
    }
    if bits.len() < ell {
        return true;
    }
    if ell <= 128 {
        let mask = if ell == 128 { u128::MAX } else { (1u128 << ell) - 1 };
        let mut seen = HashSet::with_capacity(bits.len());
        let mut v = 0u128;
        for (i, &b) in bits.iter().enumerate() {
            v = ((v << 1) | b as u128) & mask;
            if i + 1 >= ell && !seen.insert(v) {
                return false;
            }
        }
        true
    } else {
        let mut seen = HashSet::with_capacity(bits.len());
        bits.windows(ell).all(|win| seen.insert(win))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum LegitProperty {
    /// Marker density: every window of `W` bits holds a marker.
    MarkerDensity,
    /// Repeat-freeness with window `L_RF`.
    RepeatFree,
    /// No reserved marker occurs.
    NoReserved,
}

impl std::fmt::Display for LegitProperty {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            LegitProperty::MarkerDensity => "P1 (marker density)",
            LegitProperty::RepeatFree => "P2 (repeat-free)",
            LegitProperty::NoReserved => "P3 (no reserved marker)",
        })
    }
}

/// Checks the three properties in order and reports the first one that fails.
pub fn is_legit(
    z: &BitWord,
    fam: &MarkerFamily,
    reserved: &ReservedMarkers,
    sp: &StructureParams,
) -> (bool, Option<LegitProperty>) {
    match first_violation(z.bits(), fam, reserved, sp) {
        None => (true, None),
        Some(p) => (false, Some(p)),
    }
}

fn first_violation(
    bits: &[bool],
    fam: &MarkerFamily,
    reserved: &ReservedMarkers,
    sp: &StructureParams,
) -> Option<LegitProperty> {
    let occ = scan_bits(fam, bits);
    if !dense_markers(bits.len(), &occ.iter().map(|o| o.pos).collect::<Vec<_>>(), fam.marker_len(), sp.window_w) {
        return Some(LegitProperty::MarkerDensity);
    }
    if !repeat_free_bits(bits, sp.l_rf) {
        return Some(LegitProperty::RepeatFree);
    }
    if occ.iter().any(|o| reserved.contains(o.index)) {
        return Some(LegitProperty::NoReserved);
    }
    None
}

/// Whether every window `[s, s + w - 1]` contains a whole marker starting at one of `positions`.
fn dense_markers(len: usize, positions: &[usize], lm: usize, w: usize) -> bool {
    if len < w {
        return true;
    }
    if w < lm {
        return false;
    }
    let mut next = 0;
    for s in 1..=len - w + 1 {
        while next < positions.len() && positions[next] < s {
            next += 1;
        }
        match positions.get(next) {
            Some(&p) if p + lm <= s + w => {}
            _ => return false,
        }
    }
    true
}

/// Rejection-sampling outcome.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Sample {
    pub word: BitWord,
    pub rejections: u64,
    /// Rejections per first failing property: density, repeat-free, reserved.
    pub rejected_by: [u64; 3],
}

pub const DEFAULT_SAMPLING_BUDGET: u64 = 1_000_000;

/// Draws uniform words of length `m` until one is legit.
pub fn sample_legit(
    m: usize,
    fam: &MarkerFamily,
    reserved: &ReservedMarkers,
    sp: &StructureParams,
    seed: u64,
    budget: u64,
) -> Result<Sample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rejected_by = [0u64; 3];
    let mut bits = vec![false; m];
    for attempt in 0..budget {
        bits.iter_mut().for_each(|b| *b = rng.gen());
        match first_violation(&bits, fam, reserved, sp) {
            None => {
                return Ok(Sample { word: BitWord::from_bits(bits), rejections: attempt, rejected_by });
            }
            Some(p) => rejected_by[p as usize] += 1,
        }
    }
    let names = [LegitProperty::MarkerDensity, LegitProperty::RepeatFree, LegitProperty::NoReserved];
    let worst = (0..3).max_by_key(|&i| (rejected_by[i], std::cmp::Reverse(i))).unwrap_or(0);
    Err(Error::Sampling {
        attempts: budget,
        dominant: format!("{} ({} of {budget} draws)", names[worst], rejected_by[worst]),
    })
}

const SCRAMBLER_VARIANTS: usize = 4;

fn scrambler_mask(variant: usize, len: usize) -> Vec<bool> {
    let seed = 0x7a3c_91e5_0000_0000u64 ^ ((variant as u64) << 40) ^ len as u64;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..len).map(|_| rng.gen()).collect()
}

fn scramble(z: &BitWord, variant: usize) -> BitWord {
    let mut bits = vec![variant & 2 != 0, variant & 1 != 0];
    bits.extend(z.bits().iter().zip(scrambler_mask(variant, z.len())).map(|(&a, b)| a ^ b));
    BitWord::from_bits(bits)
}

/// Adds a 2-bit header and masks `z` with the first of four fixed pseudo-random
/// masks for which the result is `ell`-repeat-free and satisfies `accept`.
pub fn repeat_free_encode_with(z: &BitWord, ell: usize, mut accept: impl FnMut(&BitWord) -> bool) -> Result<BitWord> {
    for variant in 0..SCRAMBLER_VARIANTS {
        let out = scramble(z, variant);
        if is_repeat_free(&out, ell) && accept(&out) {
            return Ok(out);
        }
    }
    Err(Error::Encode(format!(
        "none of the {SCRAMBLER_VARIANTS} scrambler masks gives a {ell}-repeat-free word of length {}",
        z.len() + 2
    )))
}

pub fn repeat_free_encode(z: &BitWord, ell: usize) -> Result<BitWord> {
    repeat_free_encode_with(z, ell, |_| true)
}

pub fn repeat_free_decode(zp: &BitWord) -> Result<BitWord> {
    if zp.len() < 2 {
        return Err(Error::Domain("scrambled word lacks its header".into()));
    }
    let variant = (zp.bits()[0] as usize) << 1 | zp.bits()[1] as usize;
    let body = &zp.bits()[2..];
    let mask = scrambler_mask(variant, body.len());
    Ok(BitWord::from_bits(body.iter().zip(mask).map(|(&a, b)| a ^ b).collect()))
}

/// Hash of a block: its `hash_len`-bit prefix, or `b | 1 | 0...` when shorter.
pub fn block_hash(block: &[bool], hash_len: usize) -> BitWord {
    if block.len() >= hash_len {
        return BitWord::from_bits(block[..hash_len].to_vec());
    }
    let mut bits = block.to_vec();
    bits.push(true);
    bits.resize(hash_len, false);
    BitWord::from_bits(bits)
}

/// Block lengths of the next level.
pub fn refine(lens: &[usize], stop_len: usize) -> Vec<usize> {
    let mut out = Vec::with_capacity(2 * lens.len());
    for &len in lens {
        if len > stop_len {
            out.push(len.div_ceil(2));
            out.push(len / 2);
        } else {
            out.push(len);
        }
    }
    out
}

/// For each block of `lens`, the indices of its children at the next level.
pub fn children(lens: &[usize], stop_len: usize) -> Vec<std::ops::Range<usize>> {
    let mut next = 0;
    lens.iter()
        .map(|&len| {
            let k = if len > stop_len { 2 } else { 1 };
            next += k;
            next - k..next
        })
        .collect()
}

pub fn starts_of(lens: &[usize]) -> Vec<usize> {
    let mut pos = 1;
    lens.iter()
        .map(|&l| {
            let s = pos;
            pos += l;
            s
        })
        .collect()
}

/// One hierarchy level: block geometry over `z′` and the block hashes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Level {
    /// 1-based block starts.
    pub starts: Vec<usize>,
    pub lens: Vec<usize>,
    pub hashes: Vec<BitWord>,
    pub hash_len: usize,
}

impl Level {
    pub fn len(&self) -> usize {
        self.lens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lens.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockHierarchy {
    pub levels: Vec<Level>,
}

impl BlockHierarchy {
    fn build(zp: &BitWord, level1: Vec<usize>, level1_hash_len: usize, sp: &StructureParams) -> Result<Self> {
        if level1.iter().sum::<usize>() != zp.len() {
            return Err(Error::Structure("level-1 blocks do not tile the word".into()));
        }
        let mut levels = Vec::with_capacity(sp.levels);
        let mut lens = level1;
        for l in 0..sp.levels {
            if l > 0 {
                lens = refine(&lens, sp.stop_len);
            }
            let hash_len = if l == 0 { level1_hash_len } else { sp.l_h };
            let starts = starts_of(&lens);
            let hashes = starts.iter().zip(&lens).map(|(&s, &n)| block_hash(&zp.bits()[s - 1..s - 1 + n], hash_len)).collect();
            levels.push(Level { starts, lens: lens.clone(), hashes, hash_len });
        }
        Ok(Self { levels })
    }

    pub fn level(&self, l: usize) -> &Level {
        &self.levels[l - 1]
    }

    pub fn num_levels(&self) -> usize {
        self.levels.len()
    }

    /// Fails if two blocks of one level share a hash.
    pub fn check_distinct_hashes(&self) -> Result<()> {
        for (l, level) in self.levels.iter().enumerate() {
            let mut seen = HashSet::new();
            if let Some(h) = level.hashes.iter().find(|h| !seen.insert(*h)) {
                return Err(Error::Encode(format!("hash {h} repeats at level {}", l + 1)));
            }
        }
        Ok(())
    }
}

/// Level-1 blocks start at each marker position; the level-1 hash is the marker.
pub fn build_hierarchy_markers(
    zp: &BitWord,
    positions: &[usize],
    sp: &StructureParams,
    marker_len: usize,
) -> Result<BlockHierarchy> {
    if positions.first() != Some(&1) {
        return Err(Error::Structure("first marker must sit at position 1".into()));
    }
    let mut lens = Vec::with_capacity(positions.len());
    for (i, &p) in positions.iter().enumerate() {
        let end = positions.get(i + 1).copied().unwrap_or(zp.len() + 1);
        if end < p + marker_len || end > zp.len() + 1 {
            return Err(Error::Structure(format!("marker at {p} is followed too closely or overruns the word")));
        }
        lens.push(end - p);
    }
    BlockHierarchy::build(zp, lens, marker_len, sp)
}

/// Level-1 lengths of an even split: `parts - 1` blocks of `len / parts`, the rest last.
pub fn even_split(len: usize, parts: usize) -> Vec<usize> {
    let base = len / parts;
    let mut lens = vec![base; parts];
    lens[parts - 1] = len - base * (parts - 1);
    lens
}

pub fn build_hierarchy_even(zp: &BitWord, parts: usize, sp: &StructureParams) -> Result<BlockHierarchy> {
    if parts == 0 {
        return Err(Error::Config("at least one level-1 block required".into()));
    }
    BlockHierarchy::build(zp, even_split(zp.len(), parts), sp.l_h, sp)
}

/// Successor marker and its distance, per family member.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AdjacencyTable {
    pub rows: Vec<Option<(usize, usize)>>,
}

pub fn build_adjacency(zp: &BitWord, fam: &MarkerFamily) -> Result<AdjacencyTable> {
    let occ = fam.scan(zp);
    let mut rows = vec![None; fam.size()];
    let mut seen = vec![false; fam.size()];
    for (i, o) in occ.iter().enumerate() {
        if std::mem::replace(&mut seen[o.index], true) {
            return Err(Error::Structure(format!("marker {} occurs more than once", o.index)));
        }
        rows[o.index] = occ.get(i + 1).map(|n| (n.index, n.pos - o.pos));
    }
    Ok(AdjacencyTable { rows })
}

impl AdjacencyTable {
    /// One `2 L_M`-bit symbol per row: successor index then distance, big-endian.
    pub fn serialize(&self, marker_len: usize) -> Result<Vec<u128>> {
        self.rows.iter().map(|r| encode_row(*r, marker_len)).collect()
    }

    /// Inverse of `serialize`; malformed rows are reported as domain errors.
    pub fn deserialize(symbols: &[u128], marker_len: usize) -> Result<Self> {
        let rows = symbols.iter().map(|&s| decode_row(s, marker_len, symbols.len())).collect::<Result<_>>()?;
        Ok(Self { rows })
    }

    pub fn check_spacing(&self, marker_len: usize, max_distance: usize) -> Result<()> {
        for (a, row) in self.rows.iter().enumerate() {
            if let Some((_, d)) = row {
                if *d < marker_len || *d > max_distance {
                    return Err(Error::Structure(format!("marker {a} has successor distance {d}")));
                }
            }
        }
        Ok(())
    }
}

pub fn encode_row(row: Option<(usize, usize)>, marker_len: usize) -> Result<u128> {
    let field_mask = (1u128 << marker_len) - 1;
    match row {
        None => Ok(field_mask << marker_len),
        Some((succ, dist)) => {
            if succ as u128 >= field_mask || dist as u128 > field_mask {
                return Err(Error::Encode(format!("adjacency row ({succ}, {dist}) overflows {marker_len}-bit fields")));
            }
            Ok((succ as u128) << marker_len | dist as u128)
        }
    }
}

pub fn decode_row(symbol: u128, marker_len: usize, family_size: usize) -> Result<Option<(usize, usize)>> {
    let field_mask = (1u128 << marker_len) - 1;
    let (succ, dist) = (symbol >> marker_len, symbol & field_mask);
    if succ == field_mask && dist == 0 {
        return Ok(None);
    }
    if succ >= family_size as u128 || dist == 0 {
        return Err(Error::Domain(format!("malformed adjacency row {symbol:#x}")));
    }
    Ok(Some((succ as usize, dist as usize)))
}
