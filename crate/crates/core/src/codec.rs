//! The randomized and explicit encoders and the codeword layout they share
//! with the decoders.
//!
//! A codeword is `z′ | r` where `r = m_1 | x_1 | ... | m_l | x_l` interleaves the
//! reserved markers with the `S`-bit chunks `x_i` of `r^A | r^B | r′`.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::bitword::BitWord;
use crate::error::{Error, Result};
use crate::gf::{pack_symbols, unpack_symbols, FieldSpec};
use crate::markers::{MarkerFamily, ReservedMarkers};
use crate::rs::RsCode;
use crate::structure::{
    build_adjacency, build_hierarchy_even, build_hierarchy_markers, even_split, level_count, repeat_free_bits,
    repeat_free_encode_with, sample_legit, AdjacencyTable, BlockHierarchy, StructureParams, DEFAULT_SAMPLING_BUDGET,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Random legit message with marker-delimited level-1 blocks.
    Randomized,
    /// Any message, scrambled to be repeat-free and split evenly at level 1.
    Explicit,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CodeParams {
    pub mode: Mode,
    /// Message length (`|z|`).
    pub m: usize,
    pub t: usize,
    pub t_e: usize,
    pub ell1: usize,
    pub ell2: usize,
    pub structure: StructureParams,
    pub rho_a: usize,
    pub rho_b: usize,
    pub rho_r: usize,
    #[serde(default)]
    pub parity_override: bool,
}

/// Parity counts `(rho_A, rho_B, rho_R)` for a mode.
pub fn default_parities(mode: Mode, t: usize, t_e: usize) -> (usize, usize, usize) {
    match mode {
        Mode::Randomized => (4 * t + 6 * t_e, 2 * t + 6 * t_e, t + 6 * t_e),
        Mode::Explicit => (0, 20 * t + 20 * t_e, t + 6 * t_e),
    }
}

impl CodeParams {
    pub fn randomized(m: usize, t: usize, t_e: usize, ell1: usize, ell2: usize, window_w: usize, l_rf: usize) -> Result<Self> {
        let lm = ell1 + ell2 + 2;
        let l_h = 3 * lm;
        let b_max = (window_w + lm).min(m + lm);
        let levels = level_count(b_max, l_h).max(2);
        let (rho_a, rho_b, rho_r) = default_parities(Mode::Randomized, t, t_e);
        let p = Self {
            mode: Mode::Randomized,
            m,
            t,
            t_e,
            ell1,
            ell2,
            structure: StructureParams { window_w, l_rf, l_h, stop_len: l_h, levels },
            rho_a,
            rho_b,
            rho_r,
            parity_override: false,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn explicit(m: usize, t: usize, t_e: usize, ell1: usize, ell2: usize, l_rf: usize) -> Result<Self> {
        let lm = ell1 + ell2 + 2;
        let l_h = 3 * lm;
        let parts = t + t_e + 1;
        if m + 2 < parts {
            return Err(Error::Config(format!("message of {m} bits cannot be split into {parts} blocks")));
        }
        let b_max = *even_split(m + 2, parts).iter().max().expect("parts >= 1");
        let levels = level_count(b_max, l_h);
        let (rho_a, rho_b, rho_r) = default_parities(Mode::Explicit, t, t_e);
        let p = Self {
            mode: Mode::Explicit,
            m,
            t,
            t_e,
            ell1,
            ell2,
            structure: StructureParams { window_w: m + 3, l_rf, l_h, stop_len: l_h, levels },
            rho_a,
            rho_b,
            rho_r,
            parity_override: false,
        };
        p.validate()?;
        Ok(p)
    }

    /// Smallest marker family (with `l1 = L_M / 2`) that admits a valid configuration.
    pub fn auto(mode: Mode, m: usize, t: usize, t_e: usize) -> Result<Self> {
        let mut last = None;
        for lm in (8..=42).step_by(2) {
            let ell1 = lm / 2;
            let ell2 = lm - 2 - ell1;
            let l_rf = match mode {
                Mode::Randomized => lm,
                Mode::Explicit => default_explicit_l_rf(m, lm),
            };
            let attempt = match mode {
                Mode::Randomized => Self::randomized(m, t, t_e, ell1, ell2, m + 1, l_rf),
                Mode::Explicit => Self::explicit(m, t, t_e, ell1, ell2, l_rf),
            };
            match attempt {
                Ok(p) => return Ok(p),
                Err(e) => last = Some(e),
            }
        }
        Err(last.unwrap_or_else(|| Error::Config("no feasible marker family".into())))
    }

    /// Replaces the parity counts and records that the defaults were overridden.
    pub fn with_parities(mut self, rho_a: usize, rho_b: usize, rho_r: usize) -> Result<Self> {
        self.rho_a = rho_a;
        self.rho_b = rho_b;
        self.rho_r = rho_r;
        self.parity_override = (rho_a, rho_b, rho_r) != default_parities(self.mode, self.t, self.t_e);
        self.validate()?;
        Ok(self)
    }

    pub fn marker_len(&self) -> usize {
        self.ell1 + self.ell2 + 2
    }

    /// Chunk width `S = L_M / 2`.
    pub fn chunk_bits(&self) -> usize {
        self.marker_len() / 2
    }

    pub fn z_prime_len(&self) -> usize {
        match self.mode {
            Mode::Randomized => self.m + self.marker_len(),
            Mode::Explicit => self.m + 2,
        }
    }

    /// Level-1 block count of the explicit code.
    pub fn parts(&self) -> usize {
        self.t + self.t_e + 1
    }

    pub fn family(&self) -> Result<MarkerFamily> {
        MarkerFamily::new(self.ell1, self.ell2)
    }

    pub fn validate(&self) -> Result<()> {
        let fam = self.family()?;
        let lm = fam.marker_len();
        let sp = &self.structure;
        if lm % 2 != 0 {
            return Err(Error::Config(format!("marker length {lm} must be even")));
        }
        if sp.l_h != 3 * lm || sp.stop_len != sp.l_h {
            return Err(Error::Config(format!("hash length {} and stop length {} must equal 3 L_M = {}", sp.l_h, sp.stop_len, 3 * lm)));
        }
        if sp.l_h > crate::gf::MAX_DEGREE as usize {
            return Err(Error::Config(format!("hash length {} exceeds the widest supported field", sp.l_h)));
        }
        if sp.l_rf > lm || 3 * sp.l_rf < 2 * lm {
            return Err(Error::Config(format!("repeat-free window {} must lie in [2 L_M / 3, L_M] = [{}, {lm}]", sp.l_rf, (2 * lm).div_ceil(3))));
        }
        let expected_levels = match self.mode {
            Mode::Randomized => {
                if sp.window_w < lm && sp.window_w <= self.m {
                    return Err(Error::Config(format!("window {} cannot hold a marker of {lm} bits", sp.window_w)));
                }
                level_count((sp.window_w + lm).min(self.z_prime_len()), sp.stop_len).max(2)
            }
            Mode::Explicit => {
                if self.z_prime_len() < self.parts() {
                    return Err(Error::Config("more level-1 blocks than bits".into()));
                }
                level_count(*even_split(self.z_prime_len(), self.parts()).iter().max().expect("parts >= 1"), sp.stop_len)
            }
        };
        if sp.levels != expected_levels {
            return Err(Error::Config(format!("level count {} disagrees with derived {expected_levels}", sp.levels)));
        }
        if !self.parity_override && (self.rho_a, self.rho_b, self.rho_r) != default_parities(self.mode, self.t, self.t_e) {
            return Err(Error::Config("parity counts differ from the defaults without the override flag".into()));
        }
        if self.mode == Mode::Explicit && self.rho_a != 0 {
            return Err(Error::Config("the explicit code carries no adjacency parity".into()));
        }
        let l = self.chunk_count();
        if l + 1 > fam.size() {
            return Err(Error::Config(format!("{l} chunks need {} reserved markers but the family has {}", l + 1, fam.size())));
        }
        if self.mode == Mode::Randomized && l + 1 == fam.size() {
            return Err(Error::Config("randomized code needs at least one non-reserved marker".into()));
        }
        if l as u128 > (1u128 << self.chunk_bits()) - 1 {
            return Err(Error::Config(format!("{l} chunks exceed the GF(2^{}) code length", self.chunk_bits())));
        }
        if self.mode == Mode::Randomized && fam.size() + self.rho_a > (1usize << (2 * lm).min(60)) - 1 {
            return Err(Error::Config("adjacency code too long for its field".into()));
        }
        Ok(())
    }

    /// Number of interleaved chunks `l`.
    pub fn chunk_count(&self) -> usize {
        let s = self.chunk_bits();
        let lm = self.marker_len();
        let l_h = self.structure.l_h;
        let r_a = self.rho_a * 2 * lm;
        let r_b = match self.mode {
            Mode::Randomized => 0,
            Mode::Explicit => self.parts() * l_h,
        } + (self.structure.levels - 1) * self.rho_b * l_h;
        (r_a + r_b) / s + self.rho_r
    }

    /// Largest possible level-1 block.
    pub fn max_level1_block(&self) -> usize {
        match self.mode {
            Mode::Randomized => (self.structure.window_w + self.marker_len()).min(self.z_prime_len()),
            Mode::Explicit => *even_split(self.z_prime_len(), self.parts()).iter().max().expect("parts >= 1"),
        }
    }
}

/// Explicit-mode `L_RF` default for message length `m` and marker length `lm`.
pub fn default_explicit_l_rf(m: usize, lm: usize) -> usize {
    let log = usize::BITS as usize - (m + 2).leading_zeros() as usize;
    (2 * log + 2).max((2 * lm).div_ceil(3)).min(lm)
}

/// Bit regions of a codeword. Payload ranges index `r^A | r^B | r′`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CodewordLayout {
    pub mode: Mode,
    pub z_prime_len: usize,
    pub marker_len: usize,
    pub chunk_bits: usize,
    pub chunk_count: usize,
    pub r_a: Range<usize>,
    /// Raw level-1 hashes (explicit code only).
    pub r_b_hashes: Range<usize>,
    /// Parity of levels `2..=levels`, in order.
    pub r_b_levels: Vec<Range<usize>>,
    pub r_prime: Range<usize>,
    pub len: usize,
}

impl CodewordLayout {
    pub fn payload_len(&self) -> usize {
        self.chunk_count * self.chunk_bits
    }

    pub fn r_len(&self) -> usize {
        self.len - self.z_prime_len
    }

    /// 0-based codeword offset of marker `m_i`, `1 <= i <= l`.
    pub fn marker_offset(&self, i: usize) -> usize {
        self.z_prime_len + (i - 1) * (self.marker_len + self.chunk_bits)
    }

    /// 0-based codeword offset of chunk `x_i`.
    pub fn chunk_offset(&self, i: usize) -> usize {
        self.marker_offset(i) + self.marker_len
    }
}

pub fn layout_of(params: &CodeParams) -> Result<CodewordLayout> {
    params.validate()?;
    let lm = params.marker_len();
    let s = params.chunk_bits();
    let l_h = params.structure.l_h;
    let r_a = 0..params.rho_a * 2 * lm;
    let hashes = match params.mode {
        Mode::Randomized => 0,
        Mode::Explicit => params.parts() * l_h,
    };
    let r_b_hashes = r_a.end..r_a.end + hashes;
    let mut pos = r_b_hashes.end;
    let r_b_levels = (1..params.structure.levels)
        .map(|_| {
            let r = pos..pos + params.rho_b * l_h;
            pos = r.end;
            r
        })
        .collect();
    let r_prime = pos..pos + params.rho_r * s;
    let l = params.chunk_count();
    if r_prime.end != l * s {
        return Err(Error::Config("redundancy is not a whole number of chunks".into()));
    }
    Ok(CodewordLayout {
        mode: params.mode,
        z_prime_len: params.z_prime_len(),
        marker_len: lm,
        chunk_bits: s,
        chunk_count: l,
        r_a,
        r_b_hashes,
        r_b_levels,
        r_prime,
        len: params.z_prime_len() + l * (lm + s),
    })
}

/// Redundancy breakdown in bits.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Redundancy {
    pub r_a: usize,
    pub r_b_hashes: usize,
    pub r_b_levels: Vec<usize>,
    pub r_prime: usize,
    pub marker_overhead: usize,
    /// Codeword length minus message length.
    pub total: usize,
}

pub fn redundancy(params: &CodeParams) -> Result<Redundancy> {
    let layout = layout_of(params)?;
    Ok(Redundancy {
        r_a: layout.r_a.len(),
        r_b_hashes: layout.r_b_hashes.len(),
        r_b_levels: layout.r_b_levels.iter().map(|r| r.len()).collect(),
        r_prime: layout.r_prime.len(),
        marker_overhead: layout.chunk_count * layout.marker_len,
        total: layout.len - params.m,
    })
}

/// Everything the encoder computed, kept for inspection and tests.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transcript {
    /// `z` (randomized) or the message (explicit).
    pub message: BitWord,
    pub z_prime: BitWord,
    /// 1-based marker positions in `z′` (randomized code).
    pub marker_positions: Vec<usize>,
    pub hierarchy: BlockHierarchy,
    pub adjacency: Option<AdjacencyTable>,
    pub r_a: BitWord,
    pub r_b: BitWord,
    pub r_prime: BitWord,
    pub r: BitWord,
    /// Rejected draws or scrambler variants before success.
    pub rejections: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Encoded {
    pub codeword: BitWord,
    pub layout: CodewordLayout,
    pub transcript: Transcript,
}

/// Packs bits into `k`-bit symbols and returns RS parity bits.
pub(crate) fn parity_bits(bits: &BitWord, k: usize, rho: usize) -> Result<BitWord> {
    let symbols = pack_symbols(bits, k as u32)?;
    let field = FieldSpec::with_default_modulus(k as u32)?;
    let code = RsCode::new(field, symbols.len(), rho)?;
    Ok(unpack_symbols(&code.encode_raw(&symbols)?, k as u32))
}

/// Hash parity of levels `2..=levels`, concatenated.
fn level_parities(h: &BlockHierarchy, params: &CodeParams) -> Result<BitWord> {
    let mut out = BitWord::new();
    for level in &h.levels[1..] {
        let mut bits = BitWord::new();
        level.hashes.iter().for_each(|x| bits.extend_from(x));
        out.extend_from(&parity_bits(&bits, params.structure.l_h, params.rho_b)?);
    }
    Ok(out)
}

/// `m_1 | x_1 | ... | m_l | x_l` for the payload `r^A | r^B | r′`.
pub(crate) fn interleave(payload: &BitWord, fam: &MarkerFamily, layout: &CodewordLayout) -> BitWord {
    let s = layout.chunk_bits;
    let mut r = BitWord::new();
    for (i, chunk) in payload.bits().chunks(s).enumerate() {
        r.extend_from(&fam.member(i + 1));
        r.extend_from(&BitWord::from_bits(chunk.to_vec()));
    }
    r
}

fn redundancy_tail(ra_rb: &BitWord, params: &CodeParams, layout: &CodewordLayout, fam: &MarkerFamily) -> Result<(BitWord, BitWord)> {
    let r_prime = parity_bits(ra_rb, layout.chunk_bits, params.rho_r)?;
    let payload = ra_rb.concat(&r_prime);
    debug_assert_eq!(payload.len(), layout.payload_len());
    Ok((r_prime, interleave(&payload, fam, layout)))
}

/// Checks every invariant an encoded codeword must satisfy.
pub fn check_codeword(codeword: &BitWord, params: &CodeParams, hierarchy: &BlockHierarchy) -> Result<()> {
    let layout = layout_of(params)?;
    let fam = params.family()?;
    if codeword.len() != layout.len {
        return Err(Error::Structure(format!("codeword has {} bits, layout expects {}", codeword.len(), layout.len)));
    }
    let occ = fam.scan(codeword);
    if occ.windows(2).any(|p| p[1].pos < p[0].pos + layout.marker_len) {
        return Err(Error::Structure("overlapping marker occurrences".into()));
    }
    let mut expected: Vec<(usize, usize)> = (1..=layout.chunk_count).map(|i| (layout.marker_offset(i) + 1, i)).collect();
    if params.mode == Mode::Randomized {
        expected.insert(0, (1, 0));
    }
    let reserved = layout.chunk_count + 1;
    let found: Vec<(usize, usize)> = occ.iter().filter(|o| o.index < reserved).map(|o| (o.pos, o.index)).collect();
    if found != expected {
        return Err(Error::Structure("reserved markers are not exactly at their layout positions".into()));
    }
    if params.mode == Mode::Randomized
        && occ.iter().any(|o| o.index >= reserved && o.pos + layout.marker_len - 1 > layout.z_prime_len)
    {
        return Err(Error::Structure("a message marker occurs outside z′".into()));
    }
    if !repeat_free_bits(codeword.bits(), 3 * params.structure.l_rf) {
        return Err(Error::Structure(format!("codeword is not {}-repeat-free", 3 * params.structure.l_rf)));
    }
    hierarchy.check_distinct_hashes()?;
    if hierarchy.num_levels() != params.structure.levels {
        return Err(Error::Structure("hierarchy depth differs from the configured level count".into()));
    }
    if hierarchy.levels.last().is_some_and(|l| l.lens.iter().any(|&n| n > params.structure.stop_len)) {
        return Err(Error::Structure("last level still has blocks above the stop length".into()));
    }
    Ok(())
}

const MAX_RANDOMIZED_ATTEMPTS: u64 = 256;

/// Samples a legit `z` and encodes it; draws violating a codeword invariant are resampled.
pub fn encode_randomized(params: &CodeParams, seed: u64) -> Result<Encoded> {
    if params.mode != Mode::Randomized {
        return Err(Error::Config("randomized encoder called with explicit parameters".into()));
    }
    let layout = layout_of(params)?;
    let fam = params.family()?;
    let reserved = ReservedMarkers::new(&fam, layout.chunk_count + 1)?;
    let mut rejections = 0u64;
    let mut last_err = None;
    for attempt in 0..MAX_RANDOMIZED_ATTEMPTS {
        let draw_seed = seed.wrapping_add(attempt.wrapping_mul(0x9e37_79b9_7f4a_7c15));
        let sample = sample_legit(params.m, &fam, &reserved, &params.structure, draw_seed, DEFAULT_SAMPLING_BUDGET)?;
        rejections += sample.rejections;
        match encode_randomized_word(params, &sample.word) {
            Ok(mut enc) => {
                enc.transcript.rejections = rejections;
                return Ok(enc);
            }
            Err(e @ (Error::Structure(_) | Error::Encode(_))) => {
                rejections += 1;
                last_err = Some(e);
            }
            Err(e) => return Err(e),
        }
    }
    Err(Error::Encode(format!(
        "{MAX_RANDOMIZED_ATTEMPTS} legit draws all violated codeword invariants; last: {}",
        last_err.map(|e| e.to_string()).unwrap_or_default()
    )))
}

/// Encodes a given legit `z` with the randomized construction.
pub fn encode_randomized_word(params: &CodeParams, z: &BitWord) -> Result<Encoded> {
    let layout = layout_of(params)?;
    let fam = params.family()?;
    let reserved = ReservedMarkers::new(&fam, layout.chunk_count + 1)?;
    if z.len() != params.m {
        return Err(Error::Config(format!("message has {} bits, expected {}", z.len(), params.m)));
    }
    let (legit, why) = crate::structure::is_legit(z, &fam, &reserved, &params.structure);
    if !legit {
        return Err(Error::Structure(format!("z is not legit: {}", why.map(|p| p.to_string()).unwrap_or_default())));
    }
    let lm = layout.marker_len;
    let z_prime = fam.member(0).concat(z);
    let marker_positions: Vec<usize> = fam.scan(&z_prime).iter().map(|o| o.pos).collect();
    let hierarchy = build_hierarchy_markers(&z_prime, &marker_positions, &params.structure, lm)?;
    let adjacency = build_adjacency(&z_prime, &fam)?;
    adjacency.check_spacing(lm, params.max_level1_block())?;
    let v_a = adjacency.serialize(lm)?;
    let field_a = FieldSpec::with_default_modulus(2 * lm as u32)?;
    let code_a = RsCode::new(field_a, v_a.len(), params.rho_a)?;
    let r_a = unpack_symbols(&code_a.encode_raw(&v_a)?, 2 * lm as u32);
    let r_b = level_parities(&hierarchy, params)?;
    let (r_prime, r) = redundancy_tail(&r_a.concat(&r_b), params, &layout, &fam)?;
    let codeword = z_prime.concat(&r);
    check_codeword(&codeword, params, &hierarchy)?;
    Ok(Encoded {
        codeword,
        layout,
        transcript: Transcript {
            message: z.clone(),
            z_prime,
            marker_positions,
            hierarchy,
            adjacency: Some(adjacency),
            r_a,
            r_b,
            r_prime,
            r,
            rejections: 0,
        },
    })
}

/// Scrambles `msg` to a repeat-free `z′`, trying each scrambler variant until the
/// resulting codeword satisfies every invariant.
pub fn encode_explicit(msg: &BitWord, params: &CodeParams) -> Result<Encoded> {
    if params.mode != Mode::Explicit {
        return Err(Error::Config("explicit encoder called with randomized parameters".into()));
    }
    if msg.len() != params.m {
        return Err(Error::Config(format!("message has {} bits, expected {}", msg.len(), params.m)));
    }
    let layout = layout_of(params)?;
    let fam = params.family()?;
    let mut result = None;
    let mut rejections = 0u64;
    let mut last_err = None;
    repeat_free_encode_with(msg, params.structure.l_rf, |zp| match explicit_from_z_prime(zp, params, &layout, &fam) {
        Ok(enc) => {
            result = Some(enc);
            true
        }
        Err(e) => {
            rejections += 1;
            last_err = Some(e);
            false
        }
    })
    .map_err(|e| match &last_err {
        Some(inner) => Error::Encode(format!("{e}; last invariant failure: {inner}")),
        None => e,
    })?;
    let mut enc = result.expect("accepted variant produced an encoding");
    enc.transcript.message = msg.clone();
    enc.transcript.rejections = rejections;
    Ok(enc)
}

fn explicit_from_z_prime(zp: &BitWord, params: &CodeParams, layout: &CodewordLayout, fam: &MarkerFamily) -> Result<Encoded> {
    let hierarchy = build_hierarchy_even(zp, params.parts(), &params.structure)?;
    let mut r_b = BitWord::new();
    hierarchy.level(1).hashes.iter().for_each(|h| r_b.extend_from(h));
    r_b.extend_from(&level_parities(&hierarchy, params)?);
    let (r_prime, r) = redundancy_tail(&r_b, params, layout, fam)?;
    let codeword = zp.concat(&r);
    check_codeword(&codeword, params, &hierarchy)?;
    Ok(Encoded {
        codeword,
        layout: layout.clone(),
        transcript: Transcript {
            message: BitWord::new(),
            z_prime: zp.clone(),
            marker_positions: Vec::new(),
            hierarchy,
            adjacency: None,
            r_a: BitWord::new(),
            r_b,
            r_prime,
            r,
            rejections: 0,
        },
    })
}
