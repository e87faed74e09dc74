//! Arithmetic in GF(2^k) for 2 <= k <= 127.
//!
//! Elements are stored as `u128` bit patterns, bit `i` holding the coefficient
//! of `x^i`. Fields up to 16 bits use log/exp tables; wider fields multiply
//! carry-lessly and reduce by the modulus.

use std::collections::HashMap;
use std::fmt;
use std::sync::{Arc, Mutex, OnceLock};

use crate::bitword::BitWord;
use crate::error::{Error, Result};

pub const MAX_DEGREE: u32 = 127;
const TABLE_DEGREE: u32 = 16;

/// Primitive polynomials for small degrees, indexed by degree.
const PRIMITIVE: [u128; 17] = [
    0, 0, 0b111, 0b1011, 0b1_0011, 0b10_0101, 0b100_0011, 0b1000_0011, 0x11d, 0x211, 0x409, 0x805, 0x1053,
    0x201b, 0x4443, 0x8003, 0x1100b,
];

struct Tables {
    exp: Vec<u32>,
    log: Vec<u32>,
}

struct Inner {
    k: u32,
    modulus: u128,
    /// Modulus without its leading term.
    low: u128,
    tables: Option<Tables>,
}

/// A concrete field GF(2^k) given by an irreducible modulus. Cheap to clone.
#[derive(Clone)]
pub struct FieldSpec {
    inner: Arc<Inner>,
}

impl fmt::Debug for FieldSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "GF(2^{}) mod {:#x}", self.k(), self.modulus())
    }
}

impl PartialEq for FieldSpec {
    fn eq(&self, other: &Self) -> bool {
        self.k() == other.k() && self.modulus() == other.modulus()
    }
}

impl Eq for FieldSpec {}

/// An element tagged with the field it belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct FieldElement {
    value: u128,
    k: u32,
    modulus: u128,
}

impl FieldElement {
    pub fn value(&self) -> u128 {
        self.value
    }
}

impl FieldSpec {
    pub fn new(k: u32, modulus: u128) -> Result<Self> {
        if !(2..=MAX_DEGREE).contains(&k) {
            return Err(Error::Config(format!("field degree {k} outside 2..={MAX_DEGREE}")));
        }
        if degree(modulus) != Some(k) {
            return Err(Error::Config(format!("modulus {modulus:#x} does not have degree {k}")));
        }
        let irreducible = if k <= TABLE_DEGREE { irreducible_by_division(modulus) } else { irreducible_rabin(modulus) };
        if !irreducible {
            return Err(Error::Config(format!("modulus {modulus:#x} is reducible")));
        }
        let low = modulus ^ (1u128 << k);
        let tables = (k <= TABLE_DEGREE).then(|| build_tables(k, modulus)).flatten();
        Ok(Self { inner: Arc::new(Inner { k, modulus, low, tables }) })
    }

    /// The field with the library's default modulus for degree `k`, shared process-wide.
    pub fn with_default_modulus(k: u32) -> Result<Self> {
        static CACHE: OnceLock<Mutex<HashMap<u32, FieldSpec>>> = OnceLock::new();
        let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
        if let Some(f) = cache.lock().expect("field cache poisoned").get(&k) {
            return Ok(f.clone());
        }
        let modulus = default_modulus(k)?;
        let field = Self::new(k, modulus)?;
        cache.lock().expect("field cache poisoned").insert(k, field.clone());
        Ok(field)
    }

    pub fn k(&self) -> u32 {
        self.inner.k
    }

    pub fn modulus(&self) -> u128 {
        self.inner.modulus
    }

    /// Number of nonzero elements, 2^k - 1.
    pub fn order(&self) -> u128 {
        mask(self.k())
    }

    pub fn element(&self, value: u128) -> Result<FieldElement> {
        if value > mask(self.k()) {
            return Err(Error::Range(format!("{value:#x} is not an element of GF(2^{})", self.k())));
        }
        Ok(FieldElement { value, k: self.k(), modulus: self.modulus() })
    }

    pub fn zero(&self) -> FieldElement {
        FieldElement { value: 0, k: self.k(), modulus: self.modulus() }
    }

    pub fn one(&self) -> FieldElement {
        FieldElement { value: 1, k: self.k(), modulus: self.modulus() }
    }

    fn check(&self, a: &FieldElement) -> Result<()> {
        if a.k != self.k() || a.modulus != self.modulus() {
            return Err(Error::Config(format!(
                "element of GF(2^{}) mod {:#x} used in {self:?}",
                a.k, a.modulus
            )));
        }
        Ok(())
    }

    pub fn add(&self, a: FieldElement, b: FieldElement) -> Result<FieldElement> {
        self.check(&a)?;
        self.check(&b)?;
        Ok(FieldElement { value: a.value ^ b.value, ..a })
    }

    pub fn mul(&self, a: FieldElement, b: FieldElement) -> Result<FieldElement> {
        self.check(&a)?;
        self.check(&b)?;
        Ok(FieldElement { value: self.mul_raw(a.value, b.value), ..a })
    }

    pub fn inv(&self, a: FieldElement) -> Result<FieldElement> {
        self.check(&a)?;
        if a.value == 0 {
            return Err(Error::Domain("zero has no inverse".into()));
        }
        Ok(FieldElement { value: self.inv_raw(a.value), ..a })
    }

    /// Splits `w` into k-bit symbols of this field.
    pub fn pack(&self, w: &BitWord) -> Result<Vec<FieldElement>> {
        Ok(pack_symbols(w, self.k())?
            .into_iter()
            .map(|value| FieldElement { value, k: self.k(), modulus: self.modulus() })
            .collect())
    }

    pub fn unpack(&self, symbols: &[FieldElement]) -> Result<BitWord> {
        for s in symbols {
            self.check(s)?;
        }
        Ok(unpack_symbols(&symbols.iter().map(|s| s.value).collect::<Vec<_>>(), self.k()))
    }

    /// The fixed generator used for evaluation points: the class of `x`.
    pub(crate) fn alpha(&self) -> u128 {
        2
    }

    pub(crate) fn mul_raw(&self, a: u128, b: u128) -> u128 {
        if a == 0 || b == 0 {
            return 0;
        }
        let inner = &*self.inner;
        if let Some(t) = &inner.tables {
            return t.exp[(t.log[a as usize] + t.log[b as usize]) as usize] as u128;
        }
        if inner.k <= 64 {
            let mut p = clmul64(a as u64, b as u64);
            let m = mask(inner.k);
            while p >> inner.k != 0 {
                p = (p & m) ^ clmul64((p >> inner.k) as u64, inner.low as u64);
            }
            p
        } else {
            mulmod_bitwise(a, b, inner.modulus, inner.k)
        }
    }

    pub(crate) fn pow_raw(&self, mut a: u128, mut e: u128) -> u128 {
        let mut r = 1u128;
        while e > 0 {
            if e & 1 == 1 {
                r = self.mul_raw(r, a);
            }
            a = self.mul_raw(a, a);
            e >>= 1;
        }
        r
    }

    pub(crate) fn inv_raw(&self, a: u128) -> u128 {
        debug_assert!(a != 0);
        if let Some(t) = &self.inner.tables {
            let ord = mask(self.k()) as usize;
            return t.exp[ord - t.log[a as usize] as usize] as u128;
        }
        self.pow_raw(a, mask(self.k()) - 1)
    }
}

/// Consecutive k-bit chunks of `w`, first bit of each chunk most significant.
pub fn pack_symbols(w: &BitWord, k: u32) -> Result<Vec<u128>> {
    let k_us = k as usize;
    if k == 0 || k > 128 || w.len() % k_us != 0 {
        return Err(Error::Alignment { len: w.len(), k });
    }
    Ok(w.bits().chunks(k_us).map(|c| c.iter().fold(0u128, |acc, &b| (acc << 1) | b as u128)).collect())
}

pub fn unpack_symbols(symbols: &[u128], k: u32) -> BitWord {
    let mut out = BitWord::new();
    for &s in symbols {
        out.extend_from(&BitWord::from_uint(s, k as usize));
    }
    out
}

fn mask(k: u32) -> u128 {
    if k >= 128 {
        u128::MAX
    } else {
        (1u128 << k) - 1
    }
}

fn degree(p: u128) -> Option<u32> {
    (p != 0).then(|| 127 - p.leading_zeros())
}

fn clmul64(a: u64, b: u64) -> u128 {
    let mut table = [0u128; 16];
    for i in 1..16 {
        table[i] = (table[i >> 1] << 1) ^ if i & 1 == 1 { a as u128 } else { 0 };
    }
    let mut r = 0u128;
    for nib in (0..16).rev() {
        r = (r << 4) ^ table[((b >> (4 * nib)) & 15) as usize];
    }
    r
}

/// Shift-and-add multiplication modulo `f` of degree `k`; valid for any `f`.
fn mulmod_bitwise(a: u128, b: u128, f: u128, k: u32) -> u128 {
    let mut r = 0u128;
    for i in (0..k).rev() {
        r <<= 1;
        if r >> k & 1 == 1 {
            r ^= f;
        }
        if b >> i & 1 == 1 {
            r ^= a;
        }
    }
    r
}

fn poly_mod(mut a: u128, b: u128) -> u128 {
    let db = degree(b).expect("nonzero divisor");
    while let Some(da) = degree(a) {
        if da < db {
            break;
        }
        a ^= b << (da - db);
    }
    a
}

fn poly_gcd(mut a: u128, mut b: u128) -> u128 {
    while b != 0 {
        let r = poly_mod(a, b);
        a = b;
        b = r;
    }
    a
}

/// Trial division by every polynomial of degree at most k/2.
fn irreducible_by_division(f: u128) -> bool {
    let k = degree(f).unwrap_or(0);
    if k == 0 {
        return false;
    }
    (1..=k / 2).all(|d| ((1u128 << d)..(1u128 << (d + 1))).all(|g| poly_mod(f, g) != 0))
}

/// Rabin's test: x^(2^k) = x mod f and gcd(x^(2^(k/q)) - x, f) = 1 for primes q | k.
fn irreducible_rabin(f: u128) -> bool {
    let k = degree(f).unwrap_or(0);
    if k == 0 {
        return false;
    }
    if k == 1 {
        return true;
    }
    let frob = |e: u32| {
        let mut x = 2u128;
        for _ in 0..e {
            x = mulmod_bitwise(x, x, f, k);
        }
        x
    };
    if frob(k) != 2 {
        return false;
    }
    let primes = (2..=k).filter(|&q| k % q == 0 && (2..q).all(|d| q % d != 0));
    for q in primes {
        if poly_gcd(f, frob(k / q) ^ 2) != 1 {
            return false;
        }
    }
    true
}

fn build_tables(k: u32, modulus: u128) -> Option<Tables> {
    let ord = mask(k) as usize;
    let mut exp = vec![0u32; 2 * ord + 1];
    let mut log = vec![0u32; ord + 1];
    let mut x = 1u128;
    for (i, slot) in exp.iter_mut().enumerate().take(ord) {
        if i > 0 && x == 1 {
            // x is not primitive for this modulus; fall back to direct multiplication
            return None;
        }
        *slot = x as u32;
        log[x as usize] = i as u32;
        x = mulmod_bitwise(x, 2, modulus, k);
    }
    for i in ord..exp.len() {
        exp[i] = exp[i - ord];
    }
    Some(Tables { exp, log })
}

/// Smallest multiplicative order of `x` accepted for a default modulus above degree 16.
pub const MIN_GENERATOR_ORDER: u128 = 1 << 16;

/// Whether `x^i != 1` for every `0 < i < bound`.
fn x_order_at_least(f: u128, k: u32, bound: u128) -> bool {
    let mut x = 2u128;
    for _ in 1..bound {
        if x == 1 {
            return false;
        }
        x = mulmod_bitwise(x, 2, f, k);
    }
    true
}

/// Default modulus: the tabulated primitive polynomial for k <= 16, otherwise the
/// irreducible trinomial x^k + x^a + 1 with the smallest a, falling back to pentanomials,
/// among those in which `x` has order at least `MIN_GENERATOR_ORDER`.
pub fn default_modulus(k: u32) -> Result<u128> {
    if !(2..=MAX_DEGREE).contains(&k) {
        return Err(Error::Config(format!("field degree {k} outside 2..={MAX_DEGREE}")));
    }
    if k <= TABLE_DEGREE {
        return Ok(PRIMITIVE[k as usize]);
    }
    let top = 1u128 << k;
    for a in 1..k {
        let f = top | (1 << a) | 1;
        if irreducible_rabin(f) && x_order_at_least(f, k, MIN_GENERATOR_ORDER) {
            return Ok(f);
        }
    }
    for a in 3..k {
        for b in 2..a {
            for c in 1..b {
                let f = top | (1 << a) | (1 << b) | (1 << c) | 1;
                if irreducible_rabin(f) && x_order_at_least(f, k, MIN_GENERATOR_ORDER) {
                    return Ok(f);
                }
            }
        }
    }
    Err(Error::Config(format!("no low-weight irreducible polynomial of degree {k}")))
}
