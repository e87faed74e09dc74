//! The t-breaks t_e-edit-errors channel: edits first, then cuts, then a shuffle.

use std::fmt;
use std::str::FromStr;

use itertools::Itertools;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bitword::{BitWord, EditKind, EditOp, EditScript};
use crate::error::{Error, Result};

/// Unordered channel output. Equality is multiset equality.
#[derive(Debug, Clone, Default, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FragmentSet(Vec<BitWord>);

impl FragmentSet {
    pub fn new(fragments: Vec<BitWord>) -> Self {
        Self(fragments)
    }

    pub fn fragments(&self) -> &[BitWord] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn total_len(&self) -> usize {
        self.0.iter().map(BitWord::len).sum()
    }

    /// Fragments in ascending lexicographic order.
    pub fn canonical(&self) -> Vec<BitWord> {
        let mut v = self.0.clone();
        v.sort();
        v
    }
}

impl PartialEq for FragmentSet {
    fn eq(&self, other: &Self) -> bool {
        self.canonical() == other.canonical()
    }
}

/// One fragment per line; blank lines are skipped.
impl FromStr for FragmentSet {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        s.lines().map(str::trim).filter(|l| !l.is_empty()).map(str::parse).collect::<Result<_>>().map(Self)
    }
}

impl fmt::Display for FragmentSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.iter().try_for_each(|w| writeln!(f, "{w}"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ChannelAction {
    pub edits: EditScript,
    /// Strictly increasing cut positions in `[1, n′ - 1]`; a cut at `p` ends a fragment after bit `p`.
    pub cuts: Vec<usize>,
}

impl ChannelAction {
    pub fn identity() -> Self {
        Self { edits: EditScript::empty(), cuts: Vec::new() }
    }

    pub fn validate_cuts(&self, edited_len: usize) -> Result<()> {
        let in_range = self.cuts.iter().all(|&c| c >= 1 && c < edited_len);
        if !in_range || self.cuts.windows(2).any(|p| p[0] >= p[1]) {
            return Err(Error::Range(format!("cuts {:?} invalid for a word of {edited_len} bits", self.cuts)));
        }
        Ok(())
    }
}

/// Replayable adversarial case.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Scenario {
    pub edits: EditScript,
    pub cuts: Vec<usize>,
    #[serde(default)]
    pub seed: u64,
}

impl Scenario {
    pub fn action(&self) -> ChannelAction {
        ChannelAction { edits: self.edits.clone(), cuts: self.cuts.clone() }
    }
}

/// Fragments in transmission order, before shuffling.
pub fn cut(w: &BitWord, cuts: &[usize]) -> Vec<BitWord> {
    let mut bounds = Vec::with_capacity(cuts.len() + 2);
    bounds.push(0);
    bounds.extend_from_slice(cuts);
    bounds.push(w.len());
    bounds.windows(2).map(|p| BitWord::from_bits(w.bits()[p[0]..p[1]].to_vec())).collect()
}

pub fn transmit(w: &BitWord, action: &ChannelAction, seed: u64) -> Result<FragmentSet> {
    let edited = w.apply_edits(&action.edits)?;
    action.validate_cuts(edited.len())?;
    let mut pieces = cut(&edited, &action.cuts);
    pieces.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    Ok(FragmentSet(pieces))
}

pub const ALL_EDITS: &[EditKind] = &[EditKind::Substitution, EditKind::Deletion, EditKind::Insertion];
pub const SUBSTITUTIONS: &[EditKind] = &[EditKind::Substitution];

/// A random action: edit count uniform in `[0, t_e]`, kinds and positions uniform,
/// then `t` distinct cuts on the edited word.
pub fn sample_action(w: &BitWord, t: usize, t_e: usize, kinds: &[EditKind], seed: u64) -> Result<ChannelAction> {
    if kinds.is_empty() && t_e > 0 {
        return Err(Error::Config("no edit kinds allowed".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let count = rng.gen_range(0..=t_e);
    let mut bits = w.bits().to_vec();
    let mut ops = Vec::with_capacity(count);
    for _ in 0..count {
        let kind = match kinds.choose(&mut rng) {
            Some(EditKind::Insertion) => EditKind::Insertion,
            Some(k) if !bits.is_empty() => *k,
            _ => EditKind::Insertion,
        };
        let op = match kind {
            EditKind::Substitution => {
                let pos = rng.gen_range(1..=bits.len());
                bits[pos - 1] = !bits[pos - 1];
                EditOp::Substitute { pos, bit: bits[pos - 1] }
            }
            EditKind::Deletion => {
                let pos = rng.gen_range(1..=bits.len());
                bits.remove(pos - 1);
                EditOp::Delete { pos }
            }
            EditKind::Insertion => {
                let pos = rng.gen_range(1..=bits.len() + 1);
                let bit = rng.gen();
                bits.insert(pos - 1, bit);
                EditOp::Insert { pos, bit }
            }
        };
        ops.push(op);
    }
    if bits.len() <= t {
        return Err(Error::Range(format!("cannot place {t} cuts in a word of {} bits", bits.len())));
    }
    let mut cuts: Vec<usize> = rand::seq::index::sample(&mut rng, bits.len() - 1, t).into_iter().map(|c| c + 1).collect();
    cuts.sort_unstable();
    Ok(ChannelAction { edits: EditScript::new(ops), cuts })
}

/// Canonical edit scripts: after a deletion at `p` the next edit may sit at `p`,
/// after any other edit it must sit strictly later. Substitutions flip the bit.
fn scripts(w: Vec<bool>, min_pos: usize, remaining: usize, kinds: Vec<EditKind>) -> Box<dyn Iterator<Item = Vec<EditOp>>> {
    let head = std::iter::once(Vec::new());
    if remaining == 0 {
        return Box::new(head);
    }
    let len = w.len();
    let rest = (min_pos..=len + 1).flat_map(move |p| {
        let w = w.clone();
        let kinds = kinds.clone();
        kinds
            .clone()
            .into_iter()
            .flat_map(move |k| -> Vec<(EditOp, Vec<bool>, usize)> {
                let mut out = Vec::new();
                match k {
                    EditKind::Substitution if p <= len => {
                        let mut v = w.clone();
                        v[p - 1] = !v[p - 1];
                        out.push((EditOp::Substitute { pos: p, bit: v[p - 1] }, v, p + 1));
                    }
                    EditKind::Deletion if p <= len => {
                        let mut v = w.clone();
                        v.remove(p - 1);
                        out.push((EditOp::Delete { pos: p }, v, p));
                    }
                    EditKind::Insertion => {
                        for bit in [false, true] {
                            let mut v = w.clone();
                            v.insert(p - 1, bit);
                            out.push((EditOp::Insert { pos: p, bit }, v, p + 1));
                        }
                    }
                    _ => {}
                }
                out
            })
            .flat_map(move |(op, v, next)| {
                scripts(v, next, remaining - 1, kinds.clone()).map(move |mut tail| {
                    tail.insert(0, op);
                    tail
                })
            })
    });
    Box::new(head.chain(rest))
}

fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    (0..k).fold(1u128, |acc, i| acc * (n - i) as u128 / (i + 1) as u128)
}

fn cut_sets(len: usize, t: usize, at_most: bool) -> u128 {
    let sizes = if at_most { 0..=t } else { t..=t };
    sizes.map(|k| binomial(len.saturating_sub(1), k)).sum()
}

/// Number of actions `exhaust_actions` would emit.
pub fn count_actions(n: usize, t: usize, t_e: usize, kinds: &[EditKind], at_most: bool) -> u128 {
    fn go(len: usize, min_pos: usize, remaining: usize, kinds: &[EditKind], t: usize, at_most: bool) -> u128 {
        let mut total = cut_sets(len, t, at_most);
        if remaining == 0 {
            return total;
        }
        for p in min_pos..=len + 1 {
            for k in kinds {
                total += match k {
                    EditKind::Substitution if p <= len => go(len, p + 1, remaining - 1, kinds, t, at_most),
                    EditKind::Deletion if p <= len => go(len - 1, p, remaining - 1, kinds, t, at_most),
                    EditKind::Insertion => 2 * go(len + 1, p + 1, remaining - 1, kinds, t, at_most),
                    _ => 0,
                };
            }
        }
        total
    }
    go(n, 1, t_e, kinds, t, at_most)
}

pub const DEFAULT_EXHAUST_BUDGET: u128 = 50_000_000;

/// Every edit script of at most `t_e` edits over `kinds`, each combined with every
/// set of exactly `t` cuts (or at most `t` with `at_most`), in canonical order.
pub fn exhaust_actions(
    w: &BitWord,
    t: usize,
    t_e: usize,
    kinds: &[EditKind],
    at_most: bool,
    budget: u128,
) -> Result<impl Iterator<Item = ChannelAction>> {
    let count = count_actions(w.len(), t, t_e, kinds, at_most);
    if count > budget {
        return Err(Error::Resource(format!("{count} channel actions exceed the budget of {budget}")));
    }
    let base = w.clone();
    let iter = scripts(w.bits().to_vec(), 1, t_e, kinds.to_vec()).flat_map(move |ops| {
        let script = EditScript::new(ops);
        let len = base.apply_edits(&script).expect("canonical script applies").len();
        let sizes = if at_most { 0..=t } else { t..=t };
        sizes.flat_map(move |k| (1..len).combinations(k)).map(move |cuts| ChannelAction { edits: script.clone(), cuts })
    });
    Ok(iter)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    fn w(s: &str) -> BitWord {
        s.parse().unwrap()
    }

    fn set(v: &[&str]) -> FragmentSet {
        FragmentSet::new(v.iter().map(|s| w(s)).collect())
    }

    #[test]
    fn transmit_examples() {
        let a = ChannelAction { edits: EditScript::empty(), cuts: vec![2, 4] };
        assert_eq!(transmit(&w("010011"), &a, 0).unwrap(), set(&["01", "00", "11"]));
        assert_eq!(transmit(&w("0110"), &ChannelAction::identity(), 5).unwrap(), set(&["0110"]));
        let a = ChannelAction { edits: EditScript::new(vec![EditOp::Substitute { pos: 2, bit: false }]), cuts: vec![2] };
        assert_eq!(transmit(&w("0100"), &a, 1).unwrap(), set(&["00", "00"]));
        let bad = ChannelAction { edits: EditScript::empty(), cuts: vec![3, 3] };
        assert!(matches!(transmit(&w("010011"), &bad, 0), Err(Error::Range(_))));
    }

    #[test]
    fn shuffle_preserves_multiset() {
        let x = w("0110100111010");
        let a = ChannelAction { edits: EditScript::empty(), cuts: vec![1, 5, 9] };
        let base = transmit(&x, &a, 0).unwrap();
        for seed in 1..20 {
            assert_eq!(transmit(&x, &a, seed).unwrap(), base);
        }
    }

    #[test]
    fn sampled_actions_are_well_formed() {
        let x = BitWord::zeros(50);
        for seed in 0..300 {
            let a = sample_action(&x, 3, 2, ALL_EDITS, seed).unwrap();
            assert_eq!(a, sample_action(&x, 3, 2, ALL_EDITS, seed).unwrap());
            assert_eq!(a.cuts.len(), 3);
            assert!(a.cuts.windows(2).all(|p| p[0] < p[1]));
            assert!(a.edits.len() <= 2);
            let f = transmit(&x, &a, seed).unwrap();
            let ins = a.edits.ops().iter().filter(|o| o.kind() == EditKind::Insertion).count();
            let del = a.edits.ops().iter().filter(|o| o.kind() == EditKind::Deletion).count();
            assert_eq!(f.total_len(), 50 + ins - del);
            assert!(f.fragments().iter().all(|g| !g.is_empty()));
        }
    }

    #[test]
    fn exhaust_examples() {
        let count = |n, t, te, kinds| exhaust_actions(&BitWord::zeros(n), t, te, kinds, false, 1000).unwrap().count();
        assert_eq!(count(5, 1, 0, ALL_EDITS), 4);
        assert_eq!(count(4, 2, 0, ALL_EDITS), 3);
        assert_eq!(count(4, 1, 1, SUBSTITUTIONS), 15);
    }

    /// Independent count: scripts enumerated as position tuples with the canonical
    /// ordering rule, then each weighted by its cut sets.
    fn oracle_count(n: usize, t: usize, t_e: usize, kinds: &[EditKind], at_most: bool) -> u128 {
        let mut total = 0u128;
        let mut stack = vec![(n, 1usize, t_e)];
        while let Some((len, min_pos, rem)) = stack.pop() {
            let sizes: Vec<usize> = if at_most { (0..=t).collect() } else { vec![t] };
            total += sizes.iter().map(|&k| (1..len).combinations(k).count() as u128).sum::<u128>();
            if rem == 0 {
                continue;
            }
            for p in min_pos..=len + 1 {
                if kinds.contains(&EditKind::Substitution) && p <= len {
                    stack.push((len, p + 1, rem - 1));
                }
                if kinds.contains(&EditKind::Deletion) && p <= len {
                    stack.push((len - 1, p, rem - 1));
                }
                if kinds.contains(&EditKind::Insertion) {
                    stack.push((len + 1, p + 1, rem - 1));
                    stack.push((len + 1, p + 1, rem - 1));
                }
            }
        }
        total
    }

    #[test]
    fn exhaust_counts_match_oracle_and_have_no_duplicates() {
        let kind_sets: [&[EditKind]; 3] = [SUBSTITUTIONS, &[EditKind::Deletion, EditKind::Insertion], ALL_EDITS];
        for n in 2..=6 {
            for t in 0..=2 {
                for t_e in 0..=2 {
                    for kinds in kind_sets {
                        for at_most in [false, true] {
                            let x = BitWord::from_uint(0b101101, n);
                            let actions: Vec<_> = exhaust_actions(&x, t, t_e, kinds, at_most, u128::MAX).unwrap().collect();
                            let expect = oracle_count(n, t, t_e, kinds, at_most);
                            assert_eq!(actions.len() as u128, expect, "n={n} t={t} te={t_e}");
                            assert_eq!(count_actions(n, t, t_e, kinds, at_most), expect);
                            assert_eq!(actions.iter().collect::<HashSet<_>>().len(), actions.len());
                            for a in &actions {
                                transmit(&x, a, 0).unwrap();
                            }
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn exhaustive_scripts_reach_every_edited_word() {
        // every word within one deletion pair of x is reachable, including adjacent deletions
        let x = w("0110");
        let reached: HashSet<BitWord> = exhaust_actions(&x, 0, 2, &[EditKind::Deletion], false, 1000)
            .unwrap()
            .map(|a| x.apply_edits(&a.edits).unwrap())
            .collect();
        for i in 0..4 {
            for j in i + 1..4 {
                let v: Vec<bool> = x.bits().iter().enumerate().filter(|&(k, _)| k != i && k != j).map(|(_, &b)| b).collect();
                assert!(reached.contains(&BitWord::from_bits(v)));
            }
        }
    }

    #[test]
    fn budget_is_enforced() {
        assert!(matches!(exhaust_actions(&BitWord::zeros(100), 3, 2, ALL_EDITS, false, 1000), Err(Error::Resource(_))));
    }

    #[test]
    fn fragment_file_round_trip() {
        let f = set(&["0101", "11", "0"]);
        assert_eq!(f.to_string().parse::<FragmentSet>().unwrap(), f);
        let s = Scenario { edits: EditScript::new(vec![EditOp::Delete { pos: 3 }]), cuts: vec![2], seed: 4 };
        assert_eq!(serde_json::from_str::<Scenario>(&serde_json::to_string(&s).unwrap()).unwrap(), s);
    }
}
