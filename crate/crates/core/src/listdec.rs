//! List decoding over the error-free breaks channel: output families, the
//! brute-force list size `L(t, t′, n)`, its upper bound and the length threshold
//! above which lists of size `t′ + 1` are guaranteed.

use std::collections::{BTreeSet, HashMap};

use itertools::Itertools;
use num_rational::Ratio;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bitword::BitWord;
use crate::channel::cut;
use crate::error::{Error, Result};

/// One channel output: fragments in ascending order.
pub type Multiset = Vec<BitWord>;

/// All distinct outputs of exactly `t` distinct cuts.
pub type OutputFamily = BTreeSet<Multiset>;

pub fn enumerate_outputs(w: &BitWord, t: usize) -> Result<OutputFamily> {
    if w.len() <= t {
        return Err(Error::Range(format!("{t} cuts do not fit a word of {} bits", w.len())));
    }
    Ok((1..w.len())
        .combinations(t)
        .map(|cuts| {
            let mut pieces = cut(w, &cuts);
            pieces.sort();
            pieces
        })
        .collect())
}

/// Upper bound `C(t′+1, t′-t+1) (t′-t+1)! / (t+1)` on the list size.
pub fn bound_upper(t: usize, t_prime: usize) -> Result<Ratio<u128>> {
    if t >= t_prime {
        return Err(Error::Domain(format!("bound needs t < t′, got t = {t}, t′ = {t_prime}")));
    }
    let d = (t_prime - t + 1) as u128;
    let binom = (0..d).fold(1u128, |acc, i| acc * (t_prime as u128 + 1 - i) / (i + 1));
    let fact: u128 = (1..=d).product();
    Ok(Ratio::new(binom * fact, t as u128 + 1))
}

/// Smallest length `(t′+1)(3 + 2 ceil(log2(2(t′+1))))` from which `L >= t′ + 1` holds.
pub fn bound_lower_threshold(t_prime: usize) -> Result<usize> {
    if t_prime < 6 {
        return Err(Error::Domain(format!("threshold needs t′ >= 6, got {t_prime}")));
    }
    let x = 2 * (t_prime + 1);
    let log = usize::BITS - (x - 1).leading_zeros();
    Ok((t_prime + 1) * (3 + 2 * log as usize))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ListSize {
    pub value: usize,
    /// Lexicographically smallest pair attaining `value`; `None` if no pair qualifies.
    pub witness: Option<(BitWord, BitWord)>,
}

pub const DEFAULT_PAIR_BUDGET: u128 = 1 << 24;

/// Interned outputs of every length-`n` word, as sorted id lists.
struct Outputs {
    ids: Vec<Vec<u32>>,
}

impl Outputs {
    /// Fragments are coded as `1 << len | value`, outputs as sorted code lists.
    fn new(n: usize, t: usize, table: &mut HashMap<Vec<u32>, u32>) -> Self {
        let ids = (0..1u32 << n)
            .map(|v| {
                let mut set: Vec<u32> = (1..n)
                    .combinations(t)
                    .map(|cuts| {
                        let mut bounds = vec![0];
                        bounds.extend(cuts);
                        bounds.push(n);
                        let mut codes: Vec<u32> = bounds
                            .windows(2)
                            .map(|p| {
                                let len = p[1] - p[0];
                                let frag = (v >> (n - p[1])) & ((1 << len) - 1);
                                1 << len | frag
                            })
                            .collect();
                        codes.sort_unstable();
                        let next = table.len() as u32;
                        *table.entry(codes).or_insert(next)
                    })
                    .collect();
                set.sort_unstable();
                set.dedup();
                set
            })
            .collect();
        Self { ids }
    }
}

fn common(a: &[u32], b: &[u32]) -> usize {
    let (mut i, mut j, mut n) = (0, 0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                n += 1;
                i += 1;
                j += 1;
            }
        }
    }
    n
}

/// `max |B_t′(c) ∩ B_t′(c′)|` over word pairs with disjoint `B_t`, by exhaustive search.
pub fn brute_force_l(t: usize, t_prime: usize, n: usize, budget: u128) -> Result<ListSize> {
    if t >= t_prime {
        return Err(Error::Domain(format!("list size needs t < t′, got t = {t}, t′ = {t_prime}")));
    }
    if n <= t_prime || n > 24 {
        return Err(Error::Range(format!("length {n} must exceed t′ = {t_prime} and be at most 24")));
    }
    let words = 1u128 << n;
    let pairs = words * (words - 1) / 2;
    if pairs > budget {
        return Err(Error::Resource(format!("{pairs} word pairs exceed the budget of {budget}")));
    }
    let mut table = HashMap::new();
    let small = Outputs::new(n, t, &mut table);
    let mut table = HashMap::new();
    let large = Outputs::new(n, t_prime, &mut table);
    let best = (0..1usize << n)
        .into_par_iter()
        .map(|a| {
            let mut best: (usize, Option<(usize, usize)>) = (0, None);
            for b in a + 1..1 << n {
                if common(&small.ids[a], &small.ids[b]) > 0 {
                    continue;
                }
                let v = common(&large.ids[a], &large.ids[b]);
                if best.1.is_none() || v > best.0 {
                    best = (v, Some((a, b)));
                }
            }
            best
        })
        .reduce(|| (0, None), |x, y| if y.1.is_some() && (x.1.is_none() || y.0 > x.0 || (y.0 == x.0 && y.1 < x.1)) { y } else { x });
    let word = |v: usize| BitWord::from_uint(v as u128, n);
    Ok(ListSize { value: best.0, witness: best.1.map(|(a, b)| (word(a), word(b))) })
}

/// Whether `B_t(a)` and `B_t(b)` share no output.
pub fn disjoint_at(a: &BitWord, b: &BitWord, t: usize) -> Result<bool> {
    let x = enumerate_outputs(a, t)?;
    Ok(enumerate_outputs(b, t)?.is_disjoint(&x))
}

/// `|B_t′(a) ∩ B_t′(b)|`.
pub fn common_outputs(a: &BitWord, b: &BitWord, t_prime: usize) -> Result<usize> {
    let x = enumerate_outputs(a, t_prime)?;
    Ok(enumerate_outputs(b, t_prime)?.intersection(&x).count())
}

/// A list: words of one length, pairwise disjoint at radius `t`, all able to
/// produce the same `t′`-cut output.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct List {
    pub output: Multiset,
    pub words: Vec<BitWord>,
}

impl List {
    pub fn size(&self) -> usize {
        self.words.len()
    }
}

/// Indices of a largest clique of `adj` (bitmask rows, at most 32 vertices);
/// the lexicographically smallest among the largest.
fn max_clique(adj: &[u32]) -> Vec<usize> {
    fn go(i: usize, cand: u32, cur: &mut Vec<usize>, best: &mut Vec<usize>, adj: &[u32]) {
        if cur.len() + cand.count_ones() as usize <= best.len() {
            if cur.len() > best.len() {
                *best = cur.clone();
            }
            return;
        }
        if cand == 0 {
            *best = cur.clone();
            return;
        }
        let v = cand.trailing_zeros() as usize;
        let _ = i;
        cur.push(v);
        go(v + 1, cand & adj[v] & !((2u32 << v) - 1), cur, best, adj);
        cur.pop();
        go(v + 1, cand & !(1u32 << v), cur, best, adj);
    }
    let all = if adj.len() == 32 { u32::MAX } else { (1u32 << adj.len()) - 1 };
    let mut best = Vec::new();
    go(0, all, &mut Vec::new(), &mut best, adj);
    best
}

/// Distinct words obtained by concatenating the fragments in every order.
fn orderings(frags: &[BitWord]) -> Vec<BitWord> {
    let mut words: Vec<BitWord> =
        frags.iter().permutations(frags.len()).map(|p| p.into_iter().fold(BitWord::new(), |acc, f| acc.concat(f))).collect();
    words.sort();
    words.dedup();
    words
}

/// Largest list over all outputs of length-`n` words: for each `t′`-cut output, the
/// largest set of its orderings that are pairwise disjoint at radius `t`.
pub fn brute_force_list_size(t: usize, t_prime: usize, n: usize, budget: u128) -> Result<List> {
    if t >= t_prime {
        return Err(Error::Domain(format!("list size needs t < t′, got t = {t}, t′ = {t_prime}")));
    }
    if n <= t_prime || n > 20 || t_prime > 3 {
        return Err(Error::Range(format!("exhaustive list search needs t′ < n <= 20 and t′ <= 3, got n = {n}, t′ = {t_prime}")));
    }
    let outputs = (1u128 << n) * binomial(n - 1, t_prime);
    if outputs > budget {
        return Err(Error::Resource(format!("{outputs} outputs exceed the budget of {budget}")));
    }
    let mut table = HashMap::new();
    let small = Outputs::new(n, t, &mut table);
    let mut all: Vec<Multiset> = (0..1u128 << n)
        .flat_map(|v| {
            let w = BitWord::from_uint(v, n);
            (1..n).combinations(t_prime).map(move |cuts| {
                let mut pieces = cut(&w, &cuts);
                pieces.sort();
                pieces
            })
        })
        .collect();
    all.sort();
    all.dedup();
    let best = all
        .par_iter()
        .enumerate()
        .map(|(i, s)| {
            let words = orderings(s);
            let idx: Vec<usize> = words.iter().map(|w| w.to_uint() as usize).collect();
            let adj: Vec<u32> = (0..words.len())
                .map(|a| {
                    (0..words.len())
                        .filter(|&b| b != a && common(&small.ids[idx[a]], &small.ids[idx[b]]) == 0)
                        .fold(0u32, |m, b| m | 1 << b)
                })
                .collect();
            let clique = max_clique(&adj);
            (clique.len(), i, clique.into_iter().map(|k| words[k].clone()).collect::<Vec<_>>())
        })
        .reduce(|| (0, usize::MAX, Vec::new()), |x, y| if y.0 > x.0 || (y.0 == x.0 && y.1 < x.1) { y } else { x });
    Ok(List { output: all.get(best.1).cloned().unwrap_or_default(), words: best.2 })
}

/// Checks that `list` is a valid list at radii `t < t′`.
pub fn verify_list(list: &List, t: usize, t_prime: usize) -> Result<bool> {
    if list.output.len() != t_prime + 1 || list.output.iter().any(BitWord::is_empty) {
        return Ok(false);
    }
    let mut used = vec![false; list.output.len()];
    if !list.words.iter().all(|w| splits_into(w.bits(), &list.output, &mut used)) {
        return Ok(false);
    }
    for (a, b) in list.words.iter().tuple_combinations() {
        if a == b || !disjoint_at(a, b, t)? {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Whether `bits` is a concatenation of all unused `frags` in some order.
fn splits_into(bits: &[bool], frags: &[BitWord], used: &mut [bool]) -> bool {
    if bits.is_empty() {
        return used.iter().all(|&u| u);
    }
    for i in 0..frags.len() {
        let f = frags[i].bits();
        if used[i] || !bits.starts_with(f) || frags[..i].iter().zip(&used[..i]).any(|(g, &u)| !u && g == &frags[i]) {
            continue;
        }
        used[i] = true;
        let ok = splits_into(&bits[f.len()..], frags, used);
        used[i] = false;
        if ok {
            return true;
        }
    }
    false
}

/// Best-effort list search at lengths beyond brute force: draw `t′ + 1` fragments
/// (marker-like words `0^a 1 w 1` padded with random bits), take all their orderings
/// and greedily collect orderings pairwise disjoint at radius `t`.
pub fn search_list_witness(t: usize, t_prime: usize, n: usize, budget: u64, seed: u64) -> Result<List> {
    if t >= t_prime {
        return Err(Error::Domain(format!("list search needs t < t′, got t = {t}, t′ = {t_prime}")));
    }
    if n <= t_prime || t_prime > 7 {
        return Err(Error::Range(format!("list search needs t′ < n and t′ <= 7, got n = {n}, t′ = {t_prime}")));
    }
    if binomial(n - 1, t) > MAX_EVAL_OUTPUTS {
        return Err(Error::Resource(format!("C({}, {t}) outputs per word exceed the evaluation cap", n - 1)));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<List> = None;
    for _ in 0..budget.max(1) {
        let frags = marker_fragments(n, t_prime, &mut rng);
        let mut output = frags.clone();
        output.sort();
        let words = orderings(&frags);
        let sets: Vec<OutputFamily> = words.iter().map(|w| enumerate_outputs(w, t)).collect::<Result<_>>()?;
        let mut chosen: Vec<usize> = Vec::new();
        for i in 0..words.len() {
            if chosen.iter().all(|&j| sets[i].is_disjoint(&sets[j])) {
                chosen.push(i);
            }
        }
        if best.as_ref().map_or(true, |b| chosen.len() > b.size()) {
            best = Some(List { output, words: chosen.into_iter().map(|i| words[i].clone()).collect() });
        }
    }
    Ok(best.expect("at least one draw"))
}

fn marker_fragments(n: usize, t_prime: usize, rng: &mut ChaCha8Rng) -> Vec<BitWord> {
    let parts = t_prime + 1;
    let base = n / parts;
    (0..parts)
        .map(|i| {
            let len = if i + 1 == parts { n - base * (parts - 1) } else { base };
            let zeros = (len / 3).max(1).min(len);
            let mut bits = vec![false; zeros];
            while bits.len() < len {
                bits.push(bits.len() == zeros || rng.gen());
            }
            if len > zeros + 1 {
                bits[len - 1] = true;
            }
            BitWord::from_bits(bits)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Witness {
    pub pair: Option<(BitWord, BitWord)>,
    pub size: usize,
    /// Whether the search covered every pair.
    pub exhaustive: bool,
    pub evaluated: u64,
}

/// Largest `C(n-1, t′)` a heuristic evaluation will enumerate.
pub const MAX_EVAL_OUTPUTS: u128 = 200_000;

fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    (0..k).fold(1u128, |acc, i| acc * (n - i) as u128 / (i + 1) as u128)
}

/// Best-effort search for a pair with disjoint `B_t` and many common `B_t′` outputs.
///
/// Falls back to `brute_force_l` when the pair count fits `budget`. Otherwise it
/// tries block-permutation pairs (cut a random word into `t′ + 1` blocks and reorder
/// them) refined by single-bit hill climbing, within `budget` evaluations.
pub fn search_witness(t: usize, t_prime: usize, n: usize, budget: u64, seed: u64) -> Result<Witness> {
    if t >= t_prime {
        return Err(Error::Domain(format!("witness search needs t < t′, got t = {t}, t′ = {t_prime}")));
    }
    if n <= t_prime {
        return Ok(Witness { pair: None, size: 0, exhaustive: true, evaluated: 0 });
    }
    if n <= 24 && (1u128 << n) * ((1u128 << n) - 1) / 2 <= budget as u128 {
        let l = brute_force_l(t, t_prime, n, budget as u128)?;
        let pairs = (1u64 << n) * ((1u64 << n) - 1) / 2;
        return Ok(Witness { pair: l.witness, size: l.value, exhaustive: true, evaluated: pairs });
    }
    if binomial(n - 1, t_prime) > MAX_EVAL_OUTPUTS {
        return Ok(Witness { pair: None, size: 0, exhaustive: false, evaluated: 0 });
    }
    let score = |a: &BitWord, b: &BitWord| -> Result<Option<usize>> {
        if a == b || !disjoint_at(a, b, t)? {
            return Ok(None);
        }
        common_outputs(a, b, t_prime).map(Some)
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<(usize, BitWord, BitWord)> = None;
    let mut evaluated = 0u64;
    while evaluated < budget {
        let (mut a, mut b) = block_permutation_pair(n, t_prime, &mut rng);
        let Some(mut cur) = score(&a, &b)? else {
            evaluated += 1;
            continue;
        };
        evaluated += 1;
        for _ in 0..4 * n {
            if evaluated >= budget {
                break;
            }
            let (mut a2, mut b2) = (a.clone().into_bits(), b.clone().into_bits());
            let i = rng.gen_range(0..n);
            if rng.gen_bool(0.5) {
                a2[i] = !a2[i];
            } else {
                b2[i] = !b2[i];
            }
            let (a2, b2) = (BitWord::from_bits(a2), BitWord::from_bits(b2));
            evaluated += 1;
            if let Some(s) = score(&a2, &b2)? {
                if s >= cur {
                    (a, b, cur) = (a2, b2, s);
                }
            }
        }
        let (x, y) = if a <= b { (a, b) } else { (b, a) };
        if best.as_ref().map_or(true, |(s, bx, by)| cur > *s || (cur == *s && (&x, &y) < (bx, by))) {
            best = Some((cur, x, y));
        }
    }
    Ok(match best {
        Some((size, a, b)) => Witness { pair: Some((a, b)), size, exhaustive: false, evaluated },
        None => Witness { pair: None, size: 0, exhaustive: false, evaluated },
    })
}

fn block_permutation_pair(n: usize, t_prime: usize, rng: &mut ChaCha8Rng) -> (BitWord, BitWord) {
    let a: Vec<bool> = (0..n).map(|_| rng.gen()).collect();
    let mut cuts: Vec<usize> = rand::seq::index::sample(rng, n - 1, t_prime).into_iter().map(|c| c + 1).collect();
    cuts.sort_unstable();
    let aw = BitWord::from_bits(a);
    let mut blocks = cut(&aw, &cuts);
    let original = blocks.clone();
    for _ in 0..8 {
        blocks.shuffle(rng);
        if blocks != original {
            break;
        }
    }
    let b = blocks.iter().fold(BitWord::new(), |acc, x| acc.concat(x));
    (aw, b)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn w(s: &str) -> BitWord {
        s.parse().unwrap()
    }

    fn ms(v: &[&str]) -> Multiset {
        let mut m: Multiset = v.iter().map(|s| w(s)).collect();
        m.sort();
        m
    }

    #[test]
    fn output_examples() {
        assert_eq!(enumerate_outputs(&w("01"), 1).unwrap(), BTreeSet::from([ms(&["0", "1"])]));
        assert_eq!(enumerate_outputs(&w("00"), 1).unwrap(), BTreeSet::from([ms(&["0", "0"])]));
        let f = enumerate_outputs(&w("0101"), 1).unwrap();
        assert_eq!(f, BTreeSet::from([ms(&["0", "101"]), ms(&["01", "01"]), ms(&["010", "1"])]));
        assert!(enumerate_outputs(&w("01"), 2).is_err());
    }

    #[test]
    fn output_family_size_is_bounded() {
        for v in 0..256u128 {
            let x = BitWord::from_uint(v, 8);
            for t in 0..=4 {
                assert!(enumerate_outputs(&x, t).unwrap().len() as u128 <= binomial(7, t));
            }
        }
    }

    #[test]
    fn bound_examples() {
        assert_eq!(bound_upper(1, 2).unwrap(), Ratio::from_integer(3));
        assert_eq!(bound_upper(2, 3).unwrap(), Ratio::from_integer(4));
        for tp in 1..=10usize {
            let fact: u128 = (1..=tp as u128 + 1).product();
            for t in 0..tp {
                let b = bound_upper(t, tp).unwrap();
                assert!(b <= Ratio::from_integer(fact));
                // equals (t′+1)! / (t+1)!
                let small: u128 = (1..=t as u128 + 1).product();
                assert_eq!(b, Ratio::new(fact, small));
            }
        }
        assert!(matches!(bound_upper(2, 2), Err(Error::Domain(_))));
    }

    #[test]
    fn threshold_examples() {
        assert_eq!(bound_lower_threshold(6).unwrap(), 77);
        assert_eq!(bound_lower_threshold(7).unwrap(), 88);
        assert!(matches!(bound_lower_threshold(5), Err(Error::Domain(_))));
        for tp in 6..40 {
            assert!(bound_lower_threshold(tp + 1).unwrap() > bound_lower_threshold(tp).unwrap());
        }
    }

    /// Direct definition with `BitWord` outputs.
    fn naive_l(t: usize, tp: usize, n: usize) -> usize {
        let words: Vec<BitWord> = (0..1u128 << n).map(|v| BitWord::from_uint(v, n)).collect();
        let small: Vec<OutputFamily> = words.iter().map(|x| enumerate_outputs(x, t).unwrap()).collect();
        let large: Vec<OutputFamily> = words.iter().map(|x| enumerate_outputs(x, tp).unwrap()).collect();
        let mut best = 0;
        for a in 0..words.len() {
            for b in a + 1..words.len() {
                if small[a].is_disjoint(&small[b]) {
                    best = best.max(large[a].intersection(&large[b]).count());
                }
            }
        }
        best
    }

    #[test]
    fn brute_force_matches_definition() {
        for n in 3..=6 {
            for tp in 1..n.min(4) {
                for t in 0..tp {
                    let l = brute_force_l(t, tp, n, DEFAULT_PAIR_BUDGET).unwrap();
                    assert_eq!(l.value, naive_l(t, tp, n), "t={t} t′={tp} n={n}");
                    let (a, b) = l.witness.unwrap();
                    assert_ne!(a, b);
                    assert!(disjoint_at(&a, &b, t).unwrap());
                    assert_eq!(common_outputs(&a, &b, tp).unwrap(), l.value);
                }
            }
        }
    }

    #[test]
    fn budget_is_enforced() {
        assert!(matches!(brute_force_l(1, 2, 12, 1000), Err(Error::Resource(_))));
    }

    #[test]
    fn heuristic_witnesses_are_valid() {
        for (t, tp, n) in [(1, 2, 14), (0, 1, 16), (1, 3, 14)] {
            let wit = search_witness(t, tp, n, 300, 5).unwrap();
            assert!(!wit.exhaustive);
            if let Some((a, b)) = &wit.pair {
                assert!(disjoint_at(a, b, t).unwrap());
                assert_eq!(common_outputs(a, b, tp).unwrap(), wit.size);
            }
        }
    }

    #[test]
    fn pair_overlap_fixture() {
        // the displayed pair maximum; it exceeds the list bound from n = 5 on
        let l = brute_force_l(1, 2, 6, DEFAULT_PAIR_BUDGET).unwrap();
        assert_eq!(l.value, 5);
        assert_eq!(l.witness, Some((w("010001"), w("100001"))));
    }

    #[test]
    fn max_clique_matches_subsets() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..300 {
            let k = rng.gen_range(1..=10);
            let mut adj = vec![0u32; k];
            for a in 0..k {
                for b in a + 1..k {
                    if rng.gen_bool(0.6) {
                        adj[a] |= 1 << b;
                        adj[b] |= 1 << a;
                    }
                }
            }
            let best = (0u32..1 << k)
                .filter(|m| (0..k).all(|a| m >> a & 1 == 0 || (adj[a] | 1 << a) & m == *m))
                .map(u32::count_ones)
                .max()
                .unwrap();
            let c = max_clique(&adj);
            assert_eq!(c.len() as u32, best);
            assert!(c.iter().tuple_combinations().all(|(&a, &b)| adj[a] >> b & 1 == 1));
        }
    }

    #[test]
    fn list_sizes_respect_the_bound() {
        for n in 3..=7 {
            for tp in 1..n.min(4) {
                for t in 0..tp {
                    let list = brute_force_list_size(t, tp, n, u128::MAX).unwrap();
                    assert!(verify_list(&list, t, tp).unwrap());
                    assert!(Ratio::from_integer(list.size() as u128) <= bound_upper(t, tp).unwrap(), "t={t} t′={tp} n={n}");
                }
            }
        }
    }

    #[test]
    fn list_search_finds_valid_lists() {
        let list = search_list_witness(1, 6, 77, 2, 1).unwrap();
        assert!(verify_list(&list, 1, 6).unwrap());
        assert!(list.size() >= 7);
    }
}
