//! Systematic Reed-Solomon codes with errors-and-erasures decoding.
//!
//! Codeword position `i` (0-based) carries the coefficient of `x^(n-1-i)`, so
//! data occupies the leading positions and its locator is `alpha^(n-1-i)`.
//! The generator has roots `alpha^1 .. alpha^rho`.

use crate::error::{Error, Result};
use crate::gf::{FieldElement, FieldSpec};

/// Received symbol: a value, or a position known to be unreliable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SymbolEstimate {
    Known(u128),
    Erased,
}

#[derive(Debug, Clone)]
pub struct RsCode {
    field: FieldSpec,
    data_len: usize,
    parity_len: usize,
    /// Generator coefficients, highest degree first (monic).
    generator: Vec<u128>,
}

/// What the decoder did to reach the codeword.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Correction {
    pub data: Vec<u128>,
    pub errors: usize,
    pub erasures: usize,
}

impl RsCode {
    pub fn new(field: FieldSpec, data_len: usize, parity_len: usize) -> Result<Self> {
        let n = data_len + parity_len;
        if n as u128 > field.order() {
            return Err(Error::Config(format!(
                "length {n} exceeds the {} evaluation points of GF(2^{})",
                field.order(),
                field.k()
            )));
        }
        // distinct locators need alpha^i != 1 for 0 < i < n
        let alpha = field.alpha();
        let mut p = alpha;
        for i in 1..n {
            if p == 1 {
                return Err(Error::Config(format!("generator has order {i} < code length {n}")));
            }
            p = field.mul_raw(p, alpha);
        }
        let mut generator = vec![1u128];
        let mut root = 1u128;
        for _ in 0..parity_len {
            root = field.mul_raw(root, alpha);
            // multiply by (x + root)
            let mut next = generator.clone();
            next.push(0);
            for (i, &g) in generator.iter().enumerate() {
                next[i + 1] ^= field.mul_raw(g, root);
            }
            generator = next;
        }
        Ok(Self { field, data_len, parity_len, generator })
    }

    pub fn field(&self) -> &FieldSpec {
        &self.field
    }

    pub fn data_len(&self) -> usize {
        self.data_len
    }

    pub fn parity_len(&self) -> usize {
        self.parity_len
    }

    pub fn len(&self) -> usize {
        self.data_len + self.parity_len
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Parity symbols for raw symbol values.
    pub fn encode_raw(&self, data: &[u128]) -> Result<Vec<u128>> {
        if data.len() != self.data_len {
            return Err(Error::Config(format!("expected {} data symbols, got {}", self.data_len, data.len())));
        }
        if let Some(bad) = data.iter().find(|&&d| d > self.field.order()) {
            return Err(Error::Range(format!("symbol {bad:#x} outside GF(2^{})", self.field.k())));
        }
        let f = &self.field;
        let rho = self.parity_len;
        // long division of data * x^rho by the generator
        let mut rem = vec![0u128; rho];
        for &d in data {
            let lead = d ^ rem.first().copied().unwrap_or(0);
            rem.rotate_left(1.min(rho));
            if let Some(last) = rem.last_mut() {
                *last = 0;
            }
            if lead != 0 {
                for (r, &g) in rem.iter_mut().zip(&self.generator[1..]) {
                    *r ^= f.mul_raw(g, lead);
                }
            }
        }
        Ok(rem)
    }

    pub fn encode(&self, data: &[FieldElement]) -> Result<Vec<FieldElement>> {
        let raw: Vec<u128> = data
            .iter()
            .map(|e| self.field.element(e.value()).and_then(|c| if c == *e { Ok(e.value()) } else { Err(mismatch()) }))
            .collect::<Result<_>>()?;
        self.encode_raw(&raw)?.into_iter().map(|v| self.field.element(v)).collect()
    }

    pub fn decode(&self, received: &[Option<FieldElement>]) -> Result<Vec<FieldElement>> {
        let est: Vec<SymbolEstimate> = received
            .iter()
            .map(|r| match r {
                Some(e) => {
                    let c = self.field.element(e.value())?;
                    if c != *e {
                        return Err(mismatch());
                    }
                    Ok(SymbolEstimate::Known(e.value()))
                }
                None => Ok(SymbolEstimate::Erased),
            })
            .collect::<Result<_>>()?;
        self.decode_raw(&est)?.data.into_iter().map(|v| self.field.element(v)).collect()
    }

    /// Errors-and-erasures decoding; succeeds whenever 2*errors + erasures <= rho.
    pub fn decode_raw(&self, received: &[SymbolEstimate]) -> Result<Correction> {
        let n = self.len();
        if received.len() != n {
            return Err(Error::Config(format!("expected {n} received symbols, got {}", received.len())));
        }
        let f = &self.field;
        let rho = self.parity_len;
        let mut word: Vec<u128> = Vec::with_capacity(n);
        let mut erased = Vec::new();
        for (i, r) in received.iter().enumerate() {
            match *r {
                SymbolEstimate::Known(v) if v <= f.order() => word.push(v),
                SymbolEstimate::Known(v) => {
                    return Err(Error::Range(format!("symbol {v:#x} outside GF(2^{})", f.k())));
                }
                SymbolEstimate::Erased => {
                    word.push(0);
                    erased.push(i);
                }
            }
        }
        if erased.len() > rho {
            return Err(Error::RsDecode(format!("{} erasures exceed {rho} parity symbols", erased.len())));
        }
        let locator = |i: usize| f.pow_raw(f.alpha(), (n - 1 - i) as u128);
        let syndromes = self.syndromes(&word);
        if syndromes.iter().all(|&s| s == 0) && erased.is_empty() {
            return Ok(Correction { data: word[..self.data_len].to_vec(), errors: 0, erasures: 0 });
        }

        // erasure locator, coefficients lowest degree first
        let mut gamma = vec![1u128];
        for &i in &erased {
            let x = locator(i);
            let mut next = gamma.clone();
            next.push(0);
            for (j, &g) in gamma.iter().enumerate() {
                next[j + 1] ^= f.mul_raw(g, x);
            }
            gamma = next;
        }

        // Berlekamp-Massey seeded with the erasure locator
        let s = erased.len();
        let mut lambda = gamma.clone();
        let mut b = gamma;
        let mut l = s;
        for r in (s + 1)..=rho {
            let mut delta = 0u128;
            for (i, &c) in lambda.iter().enumerate() {
                if i < r {
                    delta ^= f.mul_raw(c, syndromes[r - i - 1]);
                }
            }
            let mut xb = vec![0u128];
            xb.extend_from_slice(&b);
            if delta == 0 {
                b = xb;
                continue;
            }
            let mut t = lambda.clone();
            if t.len() < xb.len() {
                t.resize(xb.len(), 0);
            }
            for (ti, &bi) in t.iter_mut().zip(&xb) {
                *ti ^= f.mul_raw(delta, bi);
            }
            if 2 * l < r + s {
                l = r + s - l;
                let dinv = f.inv_raw(delta);
                b = lambda.iter().map(|&c| f.mul_raw(c, dinv)).collect();
            } else {
                b = xb;
            }
            lambda = t;
        }
        while lambda.len() > 1 && *lambda.last().expect("nonempty") == 0 {
            lambda.pop();
        }
        let deg = lambda.len() - 1;
        if deg != l || 2 * (l - s) + s > rho {
            return Err(Error::RsDecode("error locator exceeds the correction radius".into()));
        }

        // Chien search over the code's positions
        let eval = |poly: &[u128], x: u128| poly.iter().rev().fold(0u128, |acc, &c| f.mul_raw(acc, x) ^ c);
        let mut positions = Vec::with_capacity(deg);
        for i in 0..n {
            let xinv = f.inv_raw(locator(i));
            if eval(&lambda, xinv) == 0 {
                positions.push(i);
            }
        }
        if positions.len() != deg {
            return Err(Error::RsDecode(format!("locator of degree {deg} has {} roots in range", positions.len())));
        }

        // Forney: e_i = Omega(X^-1) / Lambda'(X^-1), with Omega = S * Lambda mod x^rho
        let mut omega = vec![0u128; rho];
        for (i, &c) in lambda.iter().enumerate() {
            for j in 0..rho.saturating_sub(i) {
                omega[i + j] ^= f.mul_raw(c, syndromes[j]);
            }
        }
        let dlambda: Vec<u128> = lambda.iter().enumerate().skip(1).map(|(i, &c)| if i % 2 == 1 { c } else { 0 }).collect();
        for &i in &positions {
            let xinv = f.inv_raw(locator(i));
            let den = eval(&dlambda, xinv);
            if den == 0 {
                return Err(Error::RsDecode("repeated root in error locator".into()));
            }
            word[i] ^= f.mul_raw(eval(&omega, xinv), f.inv_raw(den));
        }
        if self.syndromes(&word).iter().any(|&s| s != 0) {
            return Err(Error::RsDecode("correction does not yield a codeword".into()));
        }
        let errors = positions.iter().filter(|p| !erased.contains(p)).count();
        if 2 * errors + s > rho {
            return Err(Error::RsDecode("correction exceeds the guaranteed radius".into()));
        }
        Ok(Correction { data: word[..self.data_len].to_vec(), errors, erasures: s })
    }

    fn syndromes(&self, word: &[u128]) -> Vec<u128> {
        let f = &self.field;
        let mut root = 1u128;
        (0..self.parity_len)
            .map(|_| {
                root = f.mul_raw(root, f.alpha());
                word.iter().fold(0u128, |acc, &c| f.mul_raw(acc, root) ^ c)
            })
            .collect()
    }
}

fn mismatch() -> Error {
    Error::Config("symbol belongs to a different field".into())
}
