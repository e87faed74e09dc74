//! Binary words with 1-based slicing and sequential edit scripts.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A finite binary string. Positions are 1-based in the public API.
#[derive(Clone, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BitWord {
    bits: Vec<bool>,
}

impl BitWord {
    pub fn new() -> Self {
        Self { bits: Vec::new() }
    }

    pub fn from_bits(bits: Vec<bool>) -> Self {
        Self { bits }
    }

    pub fn zeros(len: usize) -> Self {
        Self { bits: vec![false; len] }
    }

    /// The `width` low bits of `value`, most significant first.
    pub fn from_uint(value: u128, width: usize) -> Self {
        debug_assert!(width <= 128);
        let bits = (0..width).rev().map(|i| (value >> i) & 1 == 1).collect();
        Self { bits }
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn into_bits(self) -> Vec<bool> {
        self.bits
    }

    /// Bit at 1-based position `i`.
    pub fn get(&self, i: usize) -> Result<bool> {
        if i == 0 || i > self.len() {
            return Err(Error::Range(format!("position {i} in word of length {}", self.len())));
        }
        Ok(self.bits[i - 1])
    }

    /// `x_i .. x_j` inclusive; `i = j + 1` gives the empty word.
    pub fn slice(&self, i: usize, j: usize) -> Result<BitWord> {
        if i == 0 || i > j + 1 || j > self.len() {
            return Err(Error::Range(format!("slice [{i}, {j}] of word of length {}", self.len())));
        }
        Ok(Self { bits: self.bits[i - 1..j].to_vec() })
    }

    pub fn concat(&self, other: &BitWord) -> BitWord {
        let mut bits = Vec::with_capacity(self.len() + other.len());
        bits.extend_from_slice(&self.bits);
        bits.extend_from_slice(&other.bits);
        Self { bits }
    }

    pub fn push(&mut self, bit: bool) {
        self.bits.push(bit);
    }

    pub fn extend_from(&mut self, other: &BitWord) {
        self.bits.extend_from_slice(&other.bits);
    }

    /// Interprets the word as an unsigned integer, first bit most significant.
    pub fn to_uint(&self) -> u128 {
        debug_assert!(self.len() <= 128);
        self.bits.iter().fold(0u128, |acc, &b| (acc << 1) | b as u128)
    }

    pub fn apply_edits(&self, script: &EditScript) -> Result<BitWord> {
        let mut bits = self.bits.clone();
        for (k, op) in script.ops().iter().enumerate() {
            match *op {
                EditOp::Substitute { pos, bit } => {
                    if pos == 0 || pos > bits.len() {
                        return Err(Error::Range(format!("edit {k}: substitute at {pos}, length {}", bits.len())));
                    }
                    if bits[pos - 1] == bit {
                        return Err(Error::Domain(format!("edit {k}: substitution at {pos} does not change the bit")));
                    }
                    bits[pos - 1] = bit;
                }
                EditOp::Delete { pos } => {
                    if pos == 0 || pos > bits.len() {
                        return Err(Error::Range(format!("edit {k}: delete at {pos}, length {}", bits.len())));
                    }
                    bits.remove(pos - 1);
                }
                EditOp::Insert { pos, bit } => {
                    if pos == 0 || pos > bits.len() + 1 {
                        return Err(Error::Range(format!("edit {k}: insert at {pos}, length {}", bits.len())));
                    }
                    bits.insert(pos - 1, bit);
                }
            }
        }
        Ok(Self { bits })
    }

    /// Length-prefixed binary form: u64 LE bit count, then bits packed LSB-first.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = (self.len() as u64).to_le_bytes().to_vec();
        out.resize(8 + self.len().div_ceil(8), 0);
        for (i, &b) in self.bits.iter().enumerate() {
            if b {
                out[8 + i / 8] |= 1 << (i % 8);
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<BitWord> {
        if bytes.len() < 8 {
            return Err(Error::Parse("missing length prefix".into()));
        }
        let len = u64::from_le_bytes(bytes[..8].try_into().expect("eight bytes")) as usize;
        let body = &bytes[8..];
        if body.len() != len.div_ceil(8) {
            return Err(Error::Parse(format!("expected {} payload bytes, found {}", len.div_ceil(8), body.len())));
        }
        let bits = (0..len).map(|i| body[i / 8] >> (i % 8) & 1 == 1).collect();
        Ok(Self { bits })
    }
}

impl FromStr for BitWord {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        s.chars()
            .map(|c| match c {
                '0' => Ok(false),
                '1' => Ok(true),
                other => Err(Error::Parse(format!("unexpected character {other:?} in bit string"))),
            })
            .collect::<Result<Vec<_>>>()
            .map(BitWord::from_bits)
    }
}

impl fmt::Display for BitWord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for &b in &self.bits {
            f.write_str(if b { "1" } else { "0" })?;
        }
        Ok(())
    }
}

impl fmt::Debug for BitWord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "BitWord({self})")
    }
}

impl Serialize for BitWord {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for BitWord {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// One edit. Positions refer to the word as it stands when the edit is applied.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum EditOp {
    Substitute { pos: usize, bit: bool },
    Delete { pos: usize },
    Insert { pos: usize, bit: bool },
}

impl EditOp {
    pub fn kind(&self) -> EditKind {
        match self {
            EditOp::Substitute { .. } => EditKind::Substitution,
            EditOp::Delete { .. } => EditKind::Deletion,
            EditOp::Insert { .. } => EditKind::Insertion,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EditKind {
    Substitution,
    Deletion,
    Insertion,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EditScript(Vec<EditOp>);

impl EditScript {
    pub fn new(ops: Vec<EditOp>) -> Self {
        Self(ops)
    }

    pub fn empty() -> Self {
        Self(Vec::new())
    }

    pub fn ops(&self) -> &[EditOp] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn substitutions_only(&self) -> bool {
        self.0.iter().all(|op| op.kind() == EditKind::Substitution)
    }
}

impl FromIterator<EditOp> for EditScript {
    fn from_iter<I: IntoIterator<Item = EditOp>>(iter: I) -> Self {
        Self(iter.into_iter().collect())
    }
}
