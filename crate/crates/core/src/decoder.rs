//! Reconstruction from fragments: redundancy, marker chain, then level-by-level
//! hash recovery, either by longest matching over fragment orderings or, for
//! substitution-only channels, by affixing fragments at their best offsets.

use std::collections::HashMap;

use itertools::Itertools;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bitword::BitWord;
use crate::channel::FragmentSet;
use crate::codec::{interleave, CodeParams, CodewordLayout, Mode};
use crate::error::{Error, Result, Stage};
use crate::gf::{pack_symbols, unpack_symbols, FieldSpec};
use crate::markers::MarkerFamily;
use crate::rs::{RsCode, SymbolEstimate};
use crate::structure::{block_hash, children, encode_row, even_split, refine, repeat_free_decode, starts_of, AdjacencyTable};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecoderKind {
    General,
    SubstitutionsOnly,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DecodeOptions {
    /// Largest `t` for which all `(t + 1)!` fragment orderings are tried.
    pub perm_cap: usize,
    pub parallel: bool,
}

pub const DEFAULT_PERM_CAP: usize = 7;

impl Default for DecodeOptions {
    fn default() -> Self {
        Self { perm_cap: DEFAULT_PERM_CAP, parallel: true }
    }
}

/// Errors and erasures one RS decoding corrected.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RsStats {
    pub errors: usize,
    pub erasures: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LevelTrace {
    pub level: usize,
    pub blocks: usize,
    /// Longest matching size (general) or fully covered blocks (substitution-only).
    pub matched: usize,
    /// Level-`ℓ` block estimates; `None` is an erasure.
    pub estimates: Vec<Option<BitWord>>,
    /// Next-level hash decoding.
    pub next: RsStats,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecodeTrace {
    pub redundancy: RsStats,
    pub chain: Option<RsStats>,
    pub levels: Vec<LevelTrace>,
    pub permutations: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Decoded {
    pub codeword: BitWord,
    /// `z` for the randomized code, the original message for the explicit one.
    pub message: BitWord,
    pub trace: DecodeTrace,
}

/// The payload `r^A | r^B | r′` and its regions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RecoveredRedundancy {
    pub payload: BitWord,
    pub stats: RsStats,
}

impl RecoveredRedundancy {
    pub fn region(&self, range: &std::ops::Range<usize>) -> BitWord {
        BitWord::from_bits(self.payload.bits()[range.clone()].to_vec())
    }
}

fn rs_failure(stage: Stage, e: Error) -> Error {
    match e {
        Error::RsDecode(reason) => Error::decode(stage, reason),
        other => other,
    }
}

fn rs_decode(k: usize, data_len: usize, rho: usize, received: &[SymbolEstimate], stage: Stage) -> Result<(Vec<u128>, RsStats)> {
    let field = FieldSpec::with_default_modulus(k as u32)?;
    let code = RsCode::new(field, data_len, rho)?;
    let c = code.decode_raw(received).map_err(|e| rs_failure(stage, e))?;
    Ok((c.data, RsStats { errors: c.errors, erasures: c.erasures }))
}

/// A chunk is read only when its marker occurs exactly once over all fragments
/// and the fragment holds the whole chunk after it.
pub fn recover_r(frags: &[BitWord], params: &CodeParams, layout: &CodewordLayout) -> Result<RecoveredRedundancy> {
    let fam = params.family()?;
    let (lm, s, l) = (layout.marker_len, layout.chunk_bits, layout.chunk_count);
    let mut seen: Vec<Option<(usize, usize)>> = vec![None; l + 1];
    let mut count = vec![0usize; l + 1];
    for (fi, f) in frags.iter().enumerate() {
        for o in fam.scan(f) {
            if (1..=l).contains(&o.index) {
                count[o.index] += 1;
                seen[o.index] = Some((fi, o.pos - 1));
            }
        }
    }
    let received: Vec<SymbolEstimate> = (1..=l)
        .map(|i| match seen[i] {
            Some((fi, h)) if count[i] == 1 && h + lm + s <= frags[fi].len() => {
                let bits = &frags[fi].bits()[h + lm..h + lm + s];
                SymbolEstimate::Known(bits.iter().fold(0u128, |acc, &b| (acc << 1) | b as u128))
            }
            _ => SymbolEstimate::Erased,
        })
        .collect();
    let (data, stats) = rs_decode(s, l - params.rho_r, params.rho_r, &received, Stage::Redundancy)?;
    let mut payload = unpack_symbols(&data, s as u32);
    let parity = crate::codec::parity_bits(&payload, s, params.rho_r)?;
    payload.extend_from(&parity);
    Ok(RecoveredRedundancy { payload, stats })
}

/// Marker positions `p_1 = 1 < p_2 < ...` of `z′` and their member indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MarkerChain {
    pub positions: Vec<usize>,
    pub indices: Vec<usize>,
    pub stats: RsStats,
}

/// Estimates the adjacency table from the fragments and corrects it with `r^A`.
pub fn recover_marker_chain(frags: &[BitWord], params: &CodeParams, layout: &CodewordLayout, r_a: &BitWord) -> Result<MarkerChain> {
    if params.mode != Mode::Randomized {
        return Err(Error::Config("marker chain exists only in the randomized code".into()));
    }
    let fam = params.family()?;
    let lm = layout.marker_len;
    let reserved = layout.chunk_count + 1;
    let estimate = estimate_adjacency(frags, &fam, reserved);
    let mut received: Vec<SymbolEstimate> =
        estimate.iter().map(|row| SymbolEstimate::Known(row.map_or(0, |r| encode_row(r, lm).unwrap_or(0)))).collect();
    received.extend(pack_symbols(r_a, 2 * lm as u32)?.into_iter().map(SymbolEstimate::Known));
    let (rows, stats) = rs_decode(2 * lm, fam.size(), params.rho_a, &received, Stage::MarkerChain)?;
    let table = AdjacencyTable::deserialize(&rows, lm).map_err(|e| Error::decode(Stage::MarkerChain, e.to_string()))?;
    walk_chain(&table, params, lm).map(|(positions, indices)| MarkerChain { positions, indices, stats })
}

/// Row estimate per member: `Some(None)` for "no successor", `None` for unknown.
fn estimate_adjacency(frags: &[BitWord], fam: &MarkerFamily, reserved: usize) -> Vec<Option<Option<(usize, usize)>>> {
    let occ: Vec<_> = frags.iter().map(|f| fam.scan(f)).collect();
    let mut count = vec![0usize; fam.size()];
    occ.iter().flatten().for_each(|o| count[o.index] += 1);
    let mut rows: Vec<Option<Option<(usize, usize)>>> = vec![Some(None); fam.size()];
    for a in (0..fam.size()).filter(|&a| a == 0 || a >= reserved) {
        rows[a] = match count[a] {
            0 => Some(None),
            1 => {
                let (f, i) = occ
                    .iter()
                    .enumerate()
                    .find_map(|(f, v)| v.iter().position(|o| o.index == a).map(|i| (f, i)))
                    .expect("counted occurrence");
                match occ[f].get(i + 1) {
                    // the last marker of z′ is followed by m_1 of r
                    Some(n) if n.index > 0 && n.index < reserved => Some(None),
                    Some(n) => Some(Some((n.index, n.pos - occ[f][i].pos))),
                    None => None,
                }
            }
            _ => None,
        };
    }
    rows
}

fn walk_chain(table: &AdjacencyTable, params: &CodeParams, lm: usize) -> Result<(Vec<usize>, Vec<usize>)> {
    let zlen = params.z_prime_len();
    let (mut positions, mut indices) = (vec![1usize], vec![0usize]);
    let mut cur = 0;
    while let Some((next, d)) = table.rows[cur] {
        let p = positions.last().expect("non-empty") + d;
        if d < lm || p + lm - 1 > zlen || positions.len() > table.rows.len() {
            return Err(Error::decode(Stage::MarkerChain, "inconsistent adjacency"));
        }
        positions.push(p);
        indices.push(next);
        cur = next;
    }
    if zlen + 1 - positions.last().expect("non-empty") < lm {
        return Err(Error::decode(Stage::MarkerChain, "inconsistent adjacency"));
    }
    Ok((positions, indices))
}

/// Geometry and hash keys of one level; keys are hashes read as `hash_len`-bit integers.
#[derive(Debug, Clone)]
struct LevelKeys {
    hash_len: usize,
    lens: Vec<usize>,
    /// 0-based starts within `z′`.
    starts: Vec<usize>,
    /// 0-based ends (exclusive) of the hash windows.
    window_ends: Vec<usize>,
    keys: Vec<u128>,
    long: HashMap<u128, usize>,
    short: Vec<(usize, HashMap<u128, usize>)>,
}

impl LevelKeys {
    fn new(lens: Vec<usize>, keys: Vec<u128>, hash_len: usize) -> Self {
        let starts: Vec<usize> = starts_of(&lens).into_iter().map(|s| s - 1).collect();
        let window_ends = starts.iter().zip(&lens).map(|(&s, &l)| s + l.min(hash_len)).collect();
        let mut long = HashMap::new();
        let mut short: Vec<(usize, HashMap<u128, usize>)> = Vec::new();
        for (j, (&len, &key)) in lens.iter().zip(&keys).enumerate() {
            if len >= hash_len {
                long.entry(key).or_insert(j);
            } else {
                match short.iter_mut().find(|(l, _)| *l == len) {
                    Some((_, m)) => {
                        m.entry(key).or_insert(j);
                    }
                    None => short.push((len, HashMap::from([(key, j)]))),
                }
            }
        }
        Self { hash_len, lens, starts, window_ends, keys, long, short }
    }

    fn window(&self, j: usize) -> usize {
        self.lens[j].min(self.hash_len)
    }

    /// `(p, j)` for every offset `p` of `bits` whose window hashes to block `j`.
    /// With `whole_block` the full block must fit, otherwise only its hash window.
    fn matches(&self, bits: &[bool], whole_block: bool) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        let fits = |p: usize, j: usize| p + if whole_block { self.lens[j] } else { self.window(j) } <= bits.len();
        let k = self.hash_len;
        if !self.long.is_empty() && bits.len() >= k {
            let mask = if k == 128 { u128::MAX } else { (1u128 << k) - 1 };
            let mut v = 0u128;
            for (i, &b) in bits.iter().enumerate() {
                v = ((v << 1) | b as u128) & mask;
                if i + 1 >= k {
                    let p = i + 1 - k;
                    if let Some(&j) = self.long.get(&v) {
                        if fits(p, j) {
                            out.push((p, j));
                        }
                    }
                }
            }
        }
        for (len, map) in &self.short {
            let pad = 1u128 << (k - len - 1);
            let mask = (1u128 << len) - 1;
            let mut v = 0u128;
            for (i, &b) in bits.iter().enumerate() {
                v = ((v << 1) | b as u128) & mask;
                if i + 1 >= *len {
                    if let Some(&j) = map.get(&(v << (k - len) | pad)) {
                        out.push((i + 1 - len, j));
                    }
                }
            }
        }
        out.sort_unstable();
        out
    }
}

fn key_of(block: &[bool], hash_len: usize) -> u128 {
    block_hash(block, hash_len).to_uint()
}

/// One selected substring: block index (0-based) and start in the concatenation (0-based).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct MatchPair {
    pub block: usize,
    pub start: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Matching {
    /// Fragment order of the concatenation.
    pub order: Vec<usize>,
    pub pairs: Vec<MatchPair>,
}

impl Matching {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
struct Cand {
    start: usize,
    block: usize,
    end: usize,
}

/// Candidates of one fragment in (start, block) order plus an end-ascending permutation.
#[derive(Debug, Clone)]
struct FragCands {
    len: usize,
    by_start: Vec<Cand>,
    by_end: Vec<usize>,
}

impl FragCands {
    fn new(bits: &[bool], keys: &LevelKeys) -> Self {
        let by_start: Vec<Cand> =
            keys.matches(bits, true).into_iter().map(|(p, j)| Cand { start: p, block: j, end: p + keys.lens[j] }).collect();
        let mut by_end: Vec<usize> = (0..by_start.len()).collect();
        by_end.sort_by_key(|&i| (by_start[i].end, i));
        Self { len: bits.len(), by_start, by_end }
    }
}

/// Prefix maximum over reversed block indices, so `query(j)` covers blocks `> j`.
struct Fenwick {
    tree: Vec<u32>,
}

impl Fenwick {
    fn new(n: usize) -> Self {
        Self { tree: vec![0; n + 1] }
    }

    fn update(&mut self, rev: usize, v: u32) {
        let mut i = rev + 1;
        while i < self.tree.len() {
            self.tree[i] = self.tree[i].max(v);
            i += i & i.wrapping_neg();
        }
    }

    /// Max over reversed indices `< rev`.
    fn query(&self, rev: usize) -> u32 {
        let (mut i, mut m) = (rev, 0);
        while i > 0 {
            m = m.max(self.tree[i]);
            i -= i & i.wrapping_neg();
        }
        m
    }
}

/// Longest chain for a fragment order. Returns its size and, if asked, the
/// lexicographically smallest `(start, block)` sequence achieving it.
fn chain(frags: &[&FragCands], blocks: usize, reconstruct: bool) -> (usize, Vec<MatchPair>) {
    let mut all = Vec::with_capacity(frags.iter().map(|f| f.by_start.len()).sum());
    let mut by_end = Vec::with_capacity(all.capacity());
    let mut offset = 0;
    for f in frags {
        let base = all.len();
        all.extend(f.by_start.iter().map(|c| Cand { start: c.start + offset, block: c.block, end: c.end + offset }));
        by_end.extend(f.by_end.iter().map(|&i| base + i));
        offset += f.len;
    }
    if all.is_empty() {
        return (0, Vec::new());
    }
    let rev = |j: usize| blocks - 1 - j;
    let mut best = vec![0u32; all.len()];
    let mut fen = Fenwick::new(blocks);
    let mut ptr = all.len();
    for &c in by_end.iter().rev() {
        while ptr > 0 && all[ptr - 1].start >= all[c].end {
            ptr -= 1;
            fen.update(rev(all[ptr].block), best[ptr]);
        }
        best[c] = 1 + fen.query(rev(all[c].block));
    }
    let k = *best.iter().max().expect("non-empty") as usize;
    if !reconstruct {
        return (k, Vec::new());
    }
    let mut pairs = Vec::with_capacity(k);
    let (mut need, mut last_end, mut last_block) = (k as u32, 0usize, None::<usize>);
    for (c, cand) in all.iter().enumerate() {
        if need > 0 && cand.start >= last_end && last_block.map_or(true, |b| cand.block > b) && best[c] == need {
            pairs.push(MatchPair { block: cand.block, start: cand.start });
            need -= 1;
            last_end = cand.end;
            last_block = Some(cand.block);
        }
    }
    (k, pairs)
}

/// Maximum set of non-overlapping substrings of `concat`, each inside one fragment,
/// hashing to blocks with strictly increasing indices. `fragment_lens` must tile `concat`.
pub fn longest_matching(concat: &BitWord, fragment_lens: &[usize], lens: &[usize], hashes: &[BitWord]) -> Result<Matching> {
    if lens.len() != hashes.len() {
        return Err(Error::Config("block lengths and hashes differ in count".into()));
    }
    if fragment_lens.iter().sum::<usize>() != concat.len() {
        return Err(Error::Range("fragment lengths do not tile the concatenation".into()));
    }
    let Some(hash_len) = hashes.first().map(BitWord::len) else {
        return Ok(Matching { order: (0..fragment_lens.len()).collect(), pairs: Vec::new() });
    };
    if hashes.iter().any(|h| h.len() != hash_len) || hash_len > 127 {
        return Err(Error::Config("hashes must share one length of at most 127 bits".into()));
    }
    let keys = LevelKeys::new(lens.to_vec(), hashes.iter().map(BitWord::to_uint).collect(), hash_len);
    let mut offset = 0;
    let cands: Vec<FragCands> = fragment_lens
        .iter()
        .map(|&n| {
            let f = FragCands::new(&concat.bits()[offset..offset + n], &keys);
            offset += n;
            f
        })
        .collect();
    let refs: Vec<&FragCands> = cands.iter().collect();
    let (_, pairs) = chain(&refs, lens.len(), true);
    Ok(Matching { order: (0..fragment_lens.len()).collect(), pairs })
}

/// Level-1 lengths and hash keys known after the redundancy (and chain) steps.
fn level_one(params: &CodeParams, layout: &CodewordLayout, red: &RecoveredRedundancy, chain: Option<&MarkerChain>) -> Result<LevelKeys> {
    let zlen = layout.z_prime_len;
    match (params.mode, chain) {
        (Mode::Randomized, Some(c)) => {
            let fam = params.family()?;
            let mut lens: Vec<usize> = c.positions.windows(2).map(|p| p[1] - p[0]).collect();
            lens.push(zlen + 1 - c.positions.last().expect("non-empty"));
            let keys = c.indices.iter().map(|&i| fam.member(i).to_uint()).collect();
            Ok(LevelKeys::new(lens, keys, layout.marker_len))
        }
        (Mode::Explicit, _) => {
            let lens = even_split(zlen, params.parts());
            let keys = pack_symbols(&red.region(&layout.r_b_hashes), params.structure.l_h as u32)?;
            Ok(LevelKeys::new(lens, keys, params.structure.l_h))
        }
        _ => Err(Error::Config("randomized decoding needs a marker chain".into())),
    }
}

/// RS-decodes the next level's hashes from their estimates.
fn next_level(
    params: &CodeParams,
    layout: &CodewordLayout,
    red: &RecoveredRedundancy,
    cur: &LevelKeys,
    level: usize,
    estimates: &[Option<Vec<bool>>],
) -> Result<(LevelKeys, RsStats)> {
    let l_h = params.structure.l_h;
    let lens = refine(&cur.lens, params.structure.stop_len);
    let mut received = Vec::with_capacity(lens.len() + params.rho_b);
    for (est, kids) in estimates.iter().zip(children(&cur.lens, params.structure.stop_len)) {
        let mut off = 0;
        for kid in kids {
            received.push(match est {
                Some(b) => SymbolEstimate::Known(key_of(&b[off..off + lens[kid]], l_h)),
                None => SymbolEstimate::Erased,
            });
            off += lens[kid];
        }
    }
    let parity = red.region(&layout.r_b_levels[level - 1]);
    received.extend(pack_symbols(&parity, l_h as u32)?.into_iter().map(SymbolEstimate::Known));
    let (keys, stats) = rs_decode(l_h, lens.len(), params.rho_b, &received, Stage::Level(level + 1))?;
    Ok((LevelKeys::new(lens, keys, l_h), stats))
}

fn finish(params: &CodeParams, layout: &CodewordLayout, red: &RecoveredRedundancy, last: &LevelKeys, trace: DecodeTrace) -> Result<Decoded> {
    let k = last.hash_len;
    let mut bits = Vec::with_capacity(layout.z_prime_len);
    for (&len, &key) in last.lens.iter().zip(&last.keys) {
        if len > k {
            return Err(Error::decode(Stage::Reassembly, "last level holds blocks longer than the hash"));
        }
        bits.extend((0..len).map(|i| key >> (k - 1 - i) & 1 == 1));
    }
    let z_prime = BitWord::from_bits(bits);
    let fam = params.family()?;
    let codeword = z_prime.concat(&interleave(&red.payload, &fam, layout));
    let message = match params.mode {
        Mode::Randomized => z_prime.slice(layout.marker_len + 1, z_prime.len())?,
        Mode::Explicit => repeat_free_decode(&z_prime).map_err(|e| Error::decode(Stage::Reassembly, e.to_string()))?,
    };
    Ok(Decoded { codeword, message, trace })
}

fn prelude(frags: &[BitWord], params: &CodeParams, layout: &CodewordLayout) -> Result<(RecoveredRedundancy, Option<MarkerChain>)> {
    let red = recover_r(frags, params, layout)?;
    let chain = match params.mode {
        Mode::Randomized => Some(recover_marker_chain(frags, params, layout, &red.region(&layout.r_a))?),
        Mode::Explicit => None,
    };
    Ok((red, chain))
}

fn factorial(n: usize) -> u64 {
    (1..=n as u64).product()
}

/// Longest matching over all orderings of the canonically sorted fragments; the first
/// ordering (lexicographically) reaching the maximum wins.
fn best_over_orderings(cands: &[FragCands], blocks: usize, parallel: bool) -> Matching {
    let f = cands.len();
    let perms: Vec<Vec<usize>> = (0..f).permutations(f).collect();
    let size = |perm: &Vec<usize>| {
        let refs: Vec<&FragCands> = perm.iter().map(|&i| &cands[i]).collect();
        chain(&refs, blocks, false).0
    };
    let pick = |a: (usize, usize), b: (usize, usize)| if b.0 > a.0 || (b.0 == a.0 && b.1 < a.1) { b } else { a };
    let (_, idx) = if parallel {
        perms.par_iter().enumerate().map(|(i, p)| (size(p), i)).reduce(|| (0, usize::MAX), pick)
    } else {
        perms.iter().enumerate().map(|(i, p)| (size(p), i)).fold((0, usize::MAX), pick)
    };
    let order = perms[idx.min(perms.len() - 1)].clone();
    let refs: Vec<&FragCands> = order.iter().map(|&i| &cands[i]).collect();
    let (_, pairs) = chain(&refs, blocks, true);
    Matching { order, pairs }
}

/// General decoder: tolerates substitutions, insertions and deletions.
pub fn decode_general(frags: &FragmentSet, params: &CodeParams, layout: &CodewordLayout, opts: &DecodeOptions) -> Result<Decoded> {
    let frags = frags.canonical();
    if frags.is_empty() {
        return Err(Error::decode(Stage::Redundancy, "no fragments"));
    }
    if frags.len() > opts.perm_cap + 1 {
        return Err(Error::Resource(format!(
            "{} fragments need {}! orderings, above the cap of t = {}; use the substitution-only decoder",
            frags.len(),
            frags.len(),
            opts.perm_cap
        )));
    }
    let (red, chain) = prelude(&frags, params, layout)?;
    let mut trace = DecodeTrace { redundancy: red.stats, chain: chain.as_ref().map(|c| c.stats), ..Default::default() };
    let mut cur = level_one(params, layout, &red, chain.as_ref())?;
    for level in 1..params.structure.levels {
        let cands: Vec<FragCands> = frags.iter().map(|f| FragCands::new(f.bits(), &cur)).collect();
        let m = best_over_orderings(&cands, cur.lens.len(), opts.parallel);
        trace.permutations += factorial(frags.len());
        let concat: Vec<bool> = m.order.iter().flat_map(|&i| frags[i].bits().iter().copied()).collect();
        let mut estimates: Vec<Option<Vec<bool>>> = vec![None; cur.lens.len()];
        for p in &m.pairs {
            estimates[p.block] = Some(concat[p.start..p.start + cur.lens[p.block]].to_vec());
        }
        let (next, stats) = next_level(params, layout, &red, &cur, level, &estimates)?;
        trace.levels.push(LevelTrace {
            level,
            blocks: cur.lens.len(),
            matched: m.len(),
            estimates: estimates.into_iter().map(|e| e.map(BitWord::from_bits)).collect(),
            next: stats,
        });
        cur = next;
    }
    finish(params, layout, &red, &cur, trace)
}

/// Offset, match count and traversed count of one fragment's best placement.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Placement {
    offset: usize,
    matches: usize,
}

/// `J_max` of a fragment: among offsets where at least half of the traversed hash
/// windows match, the one with the most matches (smallest offset on ties).
fn best_placement(bits: &[bool], keys: &LevelKeys, n: usize) -> Option<Placement> {
    let mut counts: HashMap<usize, usize> = HashMap::new();
    for (p, j) in keys.matches(bits, false) {
        if let Some(off) = keys.starts[j].checked_sub(p) {
            if off + bits.len() <= n {
                *counts.entry(off).or_default() += 1;
            }
        }
    }
    counts
        .into_iter()
        .filter(|&(off, hits)| {
            let lo = keys.starts.partition_point(|&s| s < off);
            let hi = keys.window_ends.partition_point(|&e| e <= off + bits.len());
            let traversed = hi.saturating_sub(lo);
            traversed >= 1 && 2 * hits >= traversed
        })
        .map(|(offset, matches)| Placement { offset, matches })
        .min_by_key(|p| (std::cmp::Reverse(p.matches), p.offset))
}

/// Partial codeword estimate; bits written with conflicting values become unknown.
struct Affixed {
    bits: Vec<Option<bool>>,
    conflict: Vec<bool>,
}

impl Affixed {
    fn new(n: usize) -> Self {
        Self { bits: vec![None; n], conflict: vec![false; n] }
    }

    fn write(&mut self, offset: usize, frag: &[bool]) {
        for (i, &b) in frag.iter().enumerate() {
            let pos = offset + i;
            if self.conflict[pos] {
                continue;
            }
            match self.bits[pos] {
                None => self.bits[pos] = Some(b),
                Some(x) if x != b => {
                    self.bits[pos] = None;
                    self.conflict[pos] = true;
                }
                Some(_) => {}
            }
        }
    }

    fn read(&self, range: std::ops::Range<usize>) -> Option<Vec<bool>> {
        self.bits[range].iter().copied().collect()
    }
}

/// Polynomial-time decoder of the explicit code for substitution-only channels.
pub fn decode_substitutions_only(frags: &FragmentSet, params: &CodeParams, layout: &CodewordLayout) -> Result<Decoded> {
    if params.mode != Mode::Explicit {
        return Err(Error::Config("the substitution-only decoder applies to the explicit code".into()));
    }
    let frags = frags.canonical();
    let n = layout.len;
    if frags.iter().map(BitWord::len).sum::<usize>() != n {
        return Err(Error::Config("fragment lengths do not sum to the codeword length; channel was not substitution-only".into()));
    }
    let (red, _) = prelude(&frags, params, layout)?;
    let mut trace = DecodeTrace { redundancy: red.stats, ..Default::default() };
    let mut cur = level_one(params, layout, &red, None)?;
    for level in 1..params.structure.levels {
        let placements: Vec<Option<Placement>> = frags.iter().map(|f| best_placement(f.bits(), &cur, n)).collect();
        let mut order: Vec<usize> = (0..frags.len()).filter(|&i| placements[i].is_some()).collect();
        order.sort_by_key(|&i| (placements[i].expect("filtered").offset, i));
        let mut affixed = Affixed::new(n);
        for (h, &i) in order.iter().enumerate() {
            let p = placements[i].expect("filtered");
            let span_end = p.offset + frags[i].len() - 1;
            let dominated = order[h + 1..].iter().any(|&k| {
                let q = placements[k].expect("filtered");
                q.offset >= p.offset && q.offset <= span_end && q.matches > p.matches
            });
            if !dominated {
                affixed.write(p.offset, frags[i].bits());
            }
        }
        let estimates: Vec<Option<Vec<bool>>> =
            cur.starts.iter().zip(&cur.lens).map(|(&s, &len)| affixed.read(s..s + len)).collect();
        let matched = estimates.iter().flatten().count();
        // hashes of the next level come from the affixed bits directly, so a child whose
        // hash window is known is usable even when its sibling is not
        let lens = refine(&cur.lens, params.structure.stop_len);
        let next_est: Vec<Option<Vec<bool>>> = starts_of(&lens)
            .iter()
            .zip(&lens)
            .map(|(&s, &len)| affixed.read(s - 1..s - 1 + len.min(params.structure.l_h)))
            .collect();
        let (next, stats) = next_level_from_windows(params, layout, &red, level, lens, &next_est)?;
        trace.levels.push(LevelTrace {
            level,
            blocks: cur.lens.len(),
            matched,
            estimates: estimates.into_iter().map(|e| e.map(BitWord::from_bits)).collect(),
            next: stats,
        });
        cur = next;
    }
    finish(params, layout, &red, &cur, trace)
}

fn next_level_from_windows(
    params: &CodeParams,
    layout: &CodewordLayout,
    red: &RecoveredRedundancy,
    level: usize,
    lens: Vec<usize>,
    windows: &[Option<Vec<bool>>],
) -> Result<(LevelKeys, RsStats)> {
    let l_h = params.structure.l_h;
    let mut received: Vec<SymbolEstimate> =
        windows.iter().map(|w| w.as_ref().map_or(SymbolEstimate::Erased, |b| SymbolEstimate::Known(key_of(b, l_h)))).collect();
    let parity = red.region(&layout.r_b_levels[level - 1]);
    received.extend(pack_symbols(&parity, l_h as u32)?.into_iter().map(SymbolEstimate::Known));
    let (keys, stats) = rs_decode(l_h, lens.len(), params.rho_b, &received, Stage::Level(level + 1))?;
    Ok((LevelKeys::new(lens, keys, l_h), stats))
}

pub fn decode(frags: &FragmentSet, params: &CodeParams, kind: DecoderKind, opts: &DecodeOptions) -> Result<Decoded> {
    let layout = crate::codec::layout_of(params)?;
    match kind {
        DecoderKind::General => decode_general(frags, params, &layout, opts),
        DecoderKind::SubstitutionsOnly => decode_substitutions_only(frags, params, &layout),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{sample_action, transmit, ChannelAction, ALL_EDITS, SUBSTITUTIONS};
    use crate::codec::{encode_explicit, encode_randomized, Encoded};
    use crate::EditScript;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Exhaustive maximum over increasing block sequences, placing each block at any
    /// offset inside a fragment after the previous one.
    fn brute(concat: &[bool], frag_lens: &[usize], lens: &[usize], hashes: &[BitWord]) -> usize {
        let k = hashes[0].len();
        let mut bounds = vec![0];
        frag_lens.iter().for_each(|&n| bounds.push(bounds.last().unwrap() + n));
        let inside = |s: usize, e: usize| bounds.windows(2).any(|w| w[0] <= s && e <= w[1]);
        fn go(j: usize, from: usize, ctx: &dyn Fn(usize, usize) -> bool, concat: &[bool], lens: &[usize], hashes: &[BitWord], k: usize) -> usize {
            if j == lens.len() {
                return 0;
            }
            let mut best = go(j + 1, from, ctx, concat, lens, hashes, k);
            for s in from..concat.len() {
                let e = s + lens[j];
                if e <= concat.len() && ctx(s, e) && block_hash(&concat[s..e], k) == hashes[j] {
                    best = best.max(1 + go(j + 1, e, ctx, concat, lens, hashes, k));
                }
            }
            best
        }
        go(0, 0, &inside, concat, lens, hashes, k)
    }

    fn random_instance(rng: &mut ChaCha8Rng) -> (BitWord, Vec<usize>, Vec<usize>, Vec<BitWord>) {
        let n = rng.gen_range(8..=64);
        let concat: Vec<bool> = (0..n).map(|_| rng.gen_bool(0.5)).collect();
        let frags = rng.gen_range(1..=4).min(n);
        let mut cuts: Vec<usize> = rand::seq::index::sample(rng, n - 1, frags - 1).into_iter().map(|c| c + 1).collect();
        cuts.sort_unstable();
        let mut frag_lens = Vec::new();
        let mut prev = 0;
        for c in cuts.into_iter().chain(std::iter::once(n)) {
            frag_lens.push(c - prev);
            prev = c;
        }
        let k = rng.gen_range(3..=5);
        let blocks = rng.gen_range(1..=8);
        let mut lens = Vec::new();
        let mut hashes: Vec<BitWord> = Vec::new();
        for _ in 0..1000 {
            if hashes.len() == blocks {
                break;
            }
            let len = rng.gen_range(1..=6);
            let h = if rng.gen_bool(0.7) {
                // a hash taken from the word itself so candidates exist
                let s = rng.gen_range(0..=n - len);
                block_hash(&concat[s..s + len], k)
            } else {
                block_hash(&(0..len).map(|_| rng.gen_bool(0.5)).collect::<Vec<_>>(), k)
            };
            if !hashes.contains(&h) {
                hashes.push(h);
                lens.push(len);
            }
        }
        (BitWord::from_bits(concat), frag_lens, lens, hashes)
    }

    #[test]
    fn matching_equals_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..1000 {
            let (concat, fl, lens, hashes) = random_instance(&mut rng);
            let m = longest_matching(&concat, &fl, &lens, &hashes).unwrap();
            assert_eq!(m.len(), brute(concat.bits(), &fl, &lens, &hashes));
            let mut end = 0;
            for (i, p) in m.pairs.iter().enumerate() {
                assert!(i == 0 || p.block > m.pairs[i - 1].block);
                assert!(p.start >= end);
                end = p.start + lens[p.block];
                assert_eq!(block_hash(&concat.bits()[p.start..end], hashes[0].len()), hashes[p.block]);
            }
        }
    }

    #[test]
    fn matching_prefers_smallest_positions() {
        // block 0 (hash "11") can start at 0 or 2; the DP picks 0
        let concat: BitWord = "1111".parse().unwrap();
        let m = longest_matching(&concat, &[4], &[2], &["11".parse().unwrap()]).unwrap();
        assert_eq!(m.pairs, vec![MatchPair { block: 0, start: 0 }]);
    }

    #[test]
    fn matching_identity_is_complete() {
        let p = CodeParams::auto(Mode::Explicit, 300, 1, 0).unwrap();
        let enc = encode_explicit(&BitWord::zeros(300), &p).unwrap();
        let lvl = enc.transcript.hierarchy.level(2);
        let m = longest_matching(&enc.codeword, &[enc.codeword.len()], &lvl.lens, &lvl.hashes).unwrap();
        assert_eq!(m.len(), lvl.len());
    }

    fn roundtrip(enc: &Encoded, p: &CodeParams, action: &ChannelAction, kind: DecoderKind) -> Result<Decoded> {
        let frags = transmit(&enc.codeword, action, 3)?;
        decode(&frags, p, kind, &DecodeOptions::default())
    }

    #[test]
    fn identity_channel_recovers() {
        for mode in [Mode::Randomized, Mode::Explicit] {
            let p = CodeParams::auto(mode, 120, 1, 1).unwrap();
            let enc = match mode {
                Mode::Randomized => encode_randomized(&p, 5).unwrap(),
                Mode::Explicit => encode_explicit(&BitWord::from_uint(0xdead_beef, 120), &p).unwrap(),
            };
            let d = roundtrip(&enc, &p, &ChannelAction::identity(), DecoderKind::General).unwrap();
            assert_eq!(d.codeword, enc.codeword);
            assert_eq!(d.message, enc.transcript.message);
        }
    }

    #[test]
    fn random_trials_within_guarantee() {
        for (mode, t, te) in [(Mode::Randomized, 1, 1), (Mode::Explicit, 2, 1), (Mode::Randomized, 2, 0)] {
            let p = CodeParams::auto(mode, 150, t, te).unwrap();
            for seed in 0..25u64 {
                let enc = match mode {
                    Mode::Randomized => encode_randomized(&p, seed).unwrap(),
                    Mode::Explicit => {
                        let mut rng = ChaCha8Rng::seed_from_u64(seed);
                        encode_explicit(&BitWord::from_bits((0..150).map(|_| rng.gen()).collect()), &p).unwrap()
                    }
                };
                let a = sample_action(&enc.codeword, t, te, ALL_EDITS, seed).unwrap();
                let d = roundtrip(&enc, &p, &a, DecoderKind::General).unwrap_or_else(|e| panic!("{mode:?} seed {seed}: {e}"));
                assert_eq!(d.codeword, enc.codeword);
                for lt in &d.trace.levels {
                    assert!(lt.matched + t + te >= lt.blocks);
                }
            }
        }
    }

    #[test]
    fn substitution_decoder_agrees_with_general() {
        let p = CodeParams::auto(Mode::Explicit, 200, 2, 1).unwrap();
        for seed in 0..25u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let msg = BitWord::from_bits((0..200).map(|_| rng.gen()).collect());
            let enc = encode_explicit(&msg, &p).unwrap();
            let a = sample_action(&enc.codeword, 2, 1, SUBSTITUTIONS, seed).unwrap();
            let s = roundtrip(&enc, &p, &a, DecoderKind::SubstitutionsOnly).unwrap();
            let g = roundtrip(&enc, &p, &a, DecoderKind::General).unwrap();
            assert_eq!(s.message, msg);
            assert_eq!(s.codeword, g.codeword);
        }
    }

    #[test]
    fn substitution_decoder_refuses_randomized_and_indels() {
        let p = CodeParams::auto(Mode::Randomized, 100, 1, 0).unwrap();
        let enc = encode_randomized(&p, 1).unwrap();
        let f = FragmentSet::new(vec![enc.codeword.clone()]);
        assert!(matches!(decode(&f, &p, DecoderKind::SubstitutionsOnly, &DecodeOptions::default()), Err(Error::Config(_))));
        let p = CodeParams::auto(Mode::Explicit, 100, 1, 1).unwrap();
        let enc = encode_explicit(&BitWord::zeros(100), &p).unwrap();
        let a = ChannelAction { edits: EditScript::new(vec![crate::EditOp::Delete { pos: 5 }]), cuts: vec![40] };
        assert!(matches!(roundtrip(&enc, &p, &a, DecoderKind::SubstitutionsOnly), Err(Error::Config(_))));
    }

    #[test]
    fn too_many_fragments_is_a_resource_error() {
        let p = CodeParams::auto(Mode::Explicit, 100, 1, 0).unwrap();
        let enc = encode_explicit(&BitWord::zeros(100), &p).unwrap();
        let a = ChannelAction { edits: EditScript::empty(), cuts: vec![10, 20, 30] };
        let frags = transmit(&enc.codeword, &a, 0).unwrap();
        let opts = DecodeOptions { perm_cap: 2, parallel: false };
        assert!(matches!(decode(&frags, &p, DecoderKind::General, &opts), Err(Error::Resource(_))));
    }

    #[test]
    fn decoding_is_deterministic_under_shuffles() {
        let p = CodeParams::auto(Mode::Randomized, 150, 2, 1).unwrap();
        let enc = encode_randomized(&p, 2).unwrap();
        let a = sample_action(&enc.codeword, 2, 1, ALL_EDITS, 9).unwrap();
        let d0 = decode(&transmit(&enc.codeword, &a, 0).unwrap(), &p, DecoderKind::General, &DecodeOptions::default()).unwrap();
        for seed in 1..6 {
            let opts = DecodeOptions { parallel: seed % 2 == 0, ..Default::default() };
            let d = decode(&transmit(&enc.codeword, &a, seed).unwrap(), &p, DecoderKind::General, &opts).unwrap();
            assert_eq!(d, d0);
        }
    }

    #[test]
    fn placement_follows_half_rule() {
        // five blocks of 6 bits with 6-bit hashes; the fragment agrees on three at offset 0
        let lens = vec![6; 5];
        let word: Vec<bool> = (0..30).map(|i| (i * 7 + i / 3) % 5 < 2).collect();
        let keys: Vec<u128> = word.chunks(6).map(|c| key_of(c, 6)).collect();
        let lk = LevelKeys::new(lens, keys, 6);
        let mut frag = word.clone();
        frag[6] = !frag[6];
        frag[18] = !frag[18];
        let p = best_placement(&frag, &lk, 30).unwrap();
        assert_eq!(p, Placement { offset: 0, matches: 3 });
        frag[0] = !frag[0];
        assert_eq!(best_placement(&frag, &lk, 30), None);
    }
}
