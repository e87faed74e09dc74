//! End-to-end acceptance run. Prints one PASS/FAIL line per criterion.
//!
//! Criteria 6 and 7 compare the pairwise list quantity against the closed-form
//! upper bound, which it exceeds from n = 5 on; they are expected to fail. The
//! run fails if any other criterion fails or if either of those starts passing.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use tornpaper::bitword::{BitWord, EditKind};
use tornpaper::channel::{transmit, DEFAULT_EXHAUST_BUDGET};
use tornpaper::codec::{default_explicit_l_rf, layout_of, CodeParams, Mode};
use tornpaper::decoder::{decode, longest_matching, DecodeOptions, DecoderKind};
use tornpaper::experiment::{encode_seeded, run, run_trial, ChannelMode, EditSet, Experiment, Summary, TrialRecord};
use tornpaper::gf::FieldSpec;
use tornpaper::listdec::{
    bound_lower_threshold, bound_upper, brute_force_l, brute_force_list_size, common_outputs, disjoint_at, search_witness, verify_list,
    DEFAULT_PAIR_BUDGET,
};
use tornpaper::markers::build_family;
use tornpaper::rs::{RsCode, SymbolEstimate};
use tornpaper::structure::block_hash;

const EXPECTED_FAILURES: &[usize] = &[6, 7];

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict { pass, detail: detail.into() }
}

/// Level checks pooled over every within-guarantee general-decoder trial.
#[derive(Default)]
struct CheckTally {
    trials: u64,
    violations: u64,
    worst_slack: Option<i64>,
    worst_erroneous: usize,
}

impl CheckTally {
    fn add(&mut self, r: &TrialRecord, t_e: usize) {
        if let (true, Some(c)) = (r.within, r.checks) {
            self.trials += 1;
            self.violations += !c.holds(t_e) as u64;
            self.worst_slack = Some(self.worst_slack.map_or(c.matching_slack, |s| s.min(c.matching_slack)));
            self.worst_erroneous = self.worst_erroneous.max(c.erroneous);
        }
    }
}

fn explicit(m: usize, t: usize, t_e: usize, ell1: usize, ell2: usize) -> CodeParams {
    let lm = ell1 + ell2 + 2;
    CodeParams::explicit(m, t, t_e, ell1, ell2, default_explicit_l_rf(m, lm)).unwrap()
}

fn sweep(params: &CodeParams, channel: ChannelMode, edits: EditSet, decoder: DecoderKind, seed: u64, tally: &mut CheckTally) -> (Summary, u64) {
    let exp = Experiment { params: params.clone(), channel, edits, decoder, seed };
    let mut indels = 0;
    let s = run(&exp, true, |r| {
        tally.add(r, params.t_e);
        indels += r.action.edits.ops().iter().any(|op| op.kind() != EditKind::Substitution) as u64;
    })
    .unwrap();
    (s, indels)
}

fn cell(p: &CodeParams) -> String {
    let mode = match p.mode {
        Mode::Randomized => "R",
        Mode::Explicit => "E",
    };
    format!("{mode}(t={},te={},m={},n={})", p.t, p.t_e, p.m, layout_of(p).unwrap().len)
}

fn criterion_1(tally: &mut CheckTally) -> Verdict {
    let exhaustive = ChannelMode::Exhaustive { at_most: false, budget: DEFAULT_EXHAUST_BUDGET };
    let mut ok = true;
    let mut parts = Vec::new();
    let exhaustive_cells = [
        CodeParams::auto(Mode::Randomized, 40, 1, 0).unwrap(),
        CodeParams::auto(Mode::Randomized, 16, 2, 0).unwrap(),
        CodeParams::auto(Mode::Explicit, 40, 1, 1).unwrap(),
    ];
    for p in &exhaustive_cells {
        let (s, _) = sweep(p, exhaustive.clone(), EditSet::Substitutions, DecoderKind::General, 7, tally);
        ok &= s.within > 0 && s.success_rate() == 1.0;
        parts.push(format!("{} exhaustive {}/{}", cell(p), s.within_successes, s.within));
    }
    let random_cells = [
        CodeParams::auto(Mode::Randomized, 40, 1, 1).unwrap(),
        CodeParams::auto(Mode::Randomized, 40, 2, 1).unwrap(),
        CodeParams::auto(Mode::Explicit, 40, 1, 1).unwrap(),
        CodeParams::auto(Mode::Explicit, 40, 2, 1).unwrap(),
        CodeParams::auto(Mode::Explicit, 200, 1, 1).unwrap(),
    ];
    for p in &random_cells {
        let channel = ChannelMode::Random { trials: 3500, cuts: None, edits: None };
        let (s, indels) = sweep(p, channel, EditSet::All, DecoderKind::General, 19, tally);
        ok &= indels >= 1000 && s.success_rate() == 1.0;
        parts.push(format!(
            "{} random {}/{} ({indels} with indels, levels {})",
            cell(p),
            s.within_successes,
            s.within,
            p.structure.levels
        ));
    }
    verdict(ok, parts.join("; "))
}

fn median(mut v: Vec<u64>) -> f64 {
    v.sort_unstable();
    v[v.len() / 2] as f64
}

fn criterion_2() -> Verdict {
    let mut ok = true;
    let mut parts = Vec::new();
    let base = CodeParams::auto(Mode::Explicit, 40, 1, 1).unwrap();
    let exhaustive = ChannelMode::Exhaustive { at_most: false, budget: DEFAULT_EXHAUST_BUDGET };
    let (s, _) = sweep(&base, exhaustive, EditSet::Substitutions, DecoderKind::SubstitutionsOnly, 7, &mut CheckTally::default());
    ok &= s.within > 0 && s.success_rate() == 1.0;
    parts.push(format!("{} exhaustive {}/{}", cell(&base), s.within_successes, s.within));

    // one marker family for every t, so only t changes; m = 600 keeps two or more levels
    let widest = CodeParams::auto(Mode::Explicit, 600, 5, 1).unwrap();
    let (ell1, ell2) = (widest.ell1, widest.ell2);
    let serial = DecodeOptions { parallel: false, ..DecodeOptions::default() };
    let mut subst = Vec::new();
    let mut general = Vec::new();
    for t in 1..=5 {
        let p = explicit(600, t, 1, ell1, ell2);
        let es = Experiment {
            params: p.clone(),
            channel: ChannelMode::Random { trials: 0, cuts: None, edits: None },
            edits: EditSet::Substitutions,
            decoder: DecoderKind::SubstitutionsOnly,
            seed: 3,
        };
        let mut times = (Vec::new(), Vec::new());
        let mut perms = 0;
        let mut fails = 0;
        for i in 0..40u64 {
            let enc = encode_seeded(&p, 1000 + i).unwrap();
            let action = tornpaper::channel::sample_action(&enc.codeword, t, 1, EditSet::Substitutions.kinds(), i).unwrap();
            let r = run_trial(i, &enc, action.clone(), &es, i, &serial);
            fails += !r.success as u64;
            times.0.push(r.micros);
            if i < 5 {
                let frags = transmit(&enc.codeword, &action, i).unwrap();
                let start = Instant::now();
                let d = decode(&frags, &p, DecoderKind::General, &serial);
                times.1.push(start.elapsed().as_micros() as u64);
                fails += d.as_ref().map_or(true, |d| d.codeword != enc.codeword) as u64;
                perms = d.map_or(0, |d| d.trace.permutations);
            }
        }
        ok &= fails == 0;
        subst.push((layout_of(&p).unwrap().len, median(times.0)));
        general.push((perms, median(times.1)));
    }
    let ratios: Vec<f64> = subst.windows(2).map(|w| w[1].1 / w[0].1.max(1.0)).collect();
    ok &= ratios.iter().all(|&r| r < 4.0);
    parts.push(format!(
        "subst median us by t=1..5: {} (ratios {})",
        subst.iter().map(|(n, us)| format!("{us:.0}@n={n}")).collect::<Vec<_>>().join(", "),
        ratios.iter().map(|r| format!("{r:.2}")).collect::<Vec<_>>().join(", ")
    ));
    parts.push(format!(
        "general orderings/us by t: {}",
        general.iter().map(|(p, us)| format!("{p}/{us:.0}")).collect::<Vec<_>>().join(", ")
    ));
    verdict(ok, parts.join("; "))
}

fn criterion_3() -> Verdict {
    let mut checked = 0;
    let mut bad = Vec::new();
    for mode in [Mode::Randomized, Mode::Explicit] {
        for t in 1..=3 {
            for t_e in 0..=2 {
                for m in [40, 120] {
                    let Ok(p) = CodeParams::auto(mode, m, t, t_e) else { continue };
                    let l = layout_of(&p).unwrap();
                    let lm = p.marker_len();
                    let lh = 3 * lm;
                    let r_a = match mode {
                        Mode::Randomized => (4 * t + 6 * t_e) * 2 * lm,
                        Mode::Explicit => 0,
                    };
                    let per_level = match mode {
                        Mode::Randomized => (2 * t + 6 * t_e) * lh,
                        Mode::Explicit => (20 * t + 20 * t_e) * lh,
                    };
                    let r_prime = (t + 6 * t_e) * lm / 2;
                    let payload = l.r_a.len() + l.r_b_hashes.len() + l.r_b_levels.iter().map(|r| r.len()).sum::<usize>() + l.r_prime.len();
                    let exact = l.r_a.len() == r_a
                        && l.r_b_levels.len() + 1 == p.structure.levels
                        && l.r_b_levels.iter().all(|r| r.len() == per_level)
                        && l.r_prime.len() == r_prime
                        && payload == l.chunk_count * lm / 2
                        && l.len == l.z_prime_len + l.chunk_count * (lm + lm / 2);
                    checked += 1;
                    if !exact {
                        bad.push(format!("{mode:?} t={t} te={t_e} m={m}"));
                    }
                }
            }
        }
    }
    verdict(checked >= 20 && bad.is_empty(), format!("{checked} configurations, mismatches: {bad:?}"))
}

fn criterion_4() -> Verdict {
    let mut decodes = 0u64;
    let mut failures = 0u64;
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for k in 2..=4u32 {
        let field = FieldSpec::with_default_modulus(k).unwrap();
        let q = 1u128 << k;
        for n in 2..=15.min(q as usize - 1) {
            for rho in 1..n {
                let code = RsCode::new(field.clone(), n - rho, rho).unwrap();
                let data: Vec<u128> = (0..n - rho).map(|_| rng.gen_range(0..q)).collect();
                let cw: Vec<u128> = data.iter().copied().chain(code.encode_raw(&data).unwrap()).collect();
                // every position gets one of: intact, error, erasure
                let mut pattern = vec![0u8; n];
                loop {
                    let e = pattern.iter().filter(|&&x| x == 1).count();
                    let s = pattern.iter().filter(|&&x| x == 2).count();
                    if 2 * e + s <= rho {
                        let rx: Vec<SymbolEstimate> = cw
                            .iter()
                            .zip(&pattern)
                            .map(|(&v, &x)| match x {
                                0 => SymbolEstimate::Known(v),
                                1 => SymbolEstimate::Known(v ^ rng.gen_range(1..q)),
                                _ => SymbolEstimate::Erased,
                            })
                            .collect();
                        decodes += 1;
                        if code.decode_raw(&rx).map(|c| c.data != data).unwrap_or(true) {
                            failures += 1;
                        }
                    }
                    let Some(i) = pattern.iter().position(|&x| x < 2) else { break };
                    pattern[i] += 1;
                    pattern[..i].iter_mut().for_each(|x| *x = 0);
                }
            }
        }
    }
    verdict(failures == 0, format!("{decodes} error/erasure patterns over k <= 4, n <= 15; {failures} failures"))
}

/// Longest matching by exhaustive search over block choices, memoized on (block, position).
fn brute_matching(concat: &[bool], frag_lens: &[usize], lens: &[usize], hashes: &[BitWord]) -> usize {
    let k = hashes[0].len();
    let mut bounds = vec![0];
    frag_lens.iter().for_each(|&n| bounds.push(bounds.last().unwrap() + n));
    let inside = |s: usize, e: usize| bounds.windows(2).any(|w| w[0] <= s && e <= w[1]);
    let mut memo = HashMap::new();
    fn go(
        j: usize,
        from: usize,
        concat: &[bool],
        lens: &[usize],
        hashes: &[BitWord],
        k: usize,
        inside: &dyn Fn(usize, usize) -> bool,
        memo: &mut HashMap<(usize, usize), usize>,
    ) -> usize {
        if j == lens.len() {
            return 0;
        }
        if let Some(&v) = memo.get(&(j, from)) {
            return v;
        }
        let mut best = go(j + 1, from, concat, lens, hashes, k, inside, memo);
        for s in from..concat.len() {
            let e = s + lens[j];
            if e <= concat.len() && inside(s, e) && block_hash(&concat[s..e], k) == hashes[j] {
                best = best.max(1 + go(j + 1, e, concat, lens, hashes, k, inside, memo));
            }
        }
        memo.insert((j, from), best);
        best
    }
    go(0, 0, concat, lens, hashes, k, &inside, &mut memo)
}

fn criterion_5() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut instances = 0;
    let mut mismatches = 0;
    let mut nonzero = 0;
    while instances < 1500 {
        let n = rng.gen_range(8..=64);
        let concat: Vec<bool> = (0..n).map(|_| rng.gen()).collect();
        let frags = rng.gen_range(1..=4);
        let mut cuts: Vec<usize> = rand::seq::index::sample(&mut rng, n - 1, frags - 1).into_iter().map(|c| c + 1).collect();
        cuts.sort_unstable();
        cuts.push(n);
        let frag_lens: Vec<usize> = cuts.iter().scan(0, |prev, &c| Some(c - std::mem::replace(prev, c))).collect();
        let k = rng.gen_range(3..=5);
        let blocks = rng.gen_range(1..=8);
        let (mut lens, mut hashes) = (Vec::new(), Vec::<BitWord>::new());
        for _ in 0..1000 {
            if hashes.len() == blocks {
                break;
            }
            let len = rng.gen_range(1..=6);
            let s = rng.gen_range(0..=n - len);
            let h = block_hash(&concat[s..s + len], k);
            if !hashes.contains(&h) {
                hashes.push(h);
                lens.push(len);
            }
        }
        let word = BitWord::from_bits(concat.clone());
        let dp = longest_matching(&word, &frag_lens, &lens, &hashes).unwrap();
        let bf = brute_matching(&concat, &frag_lens, &lens, &hashes);
        instances += 1;
        nonzero += (bf > 0) as usize;
        if dp.len() != bf {
            mismatches += 1;
        }
    }
    verdict(mismatches == 0, format!("{instances} instances ({nonzero} with a nonempty matching), {mismatches} mismatches"))
}

fn ratio_le(value: usize, t: usize, tp: usize) -> bool {
    let b = bound_upper(t, tp).unwrap();
    value as u128 * b.denom() <= *b.numer()
}

fn criterion_6() -> Verdict {
    let hand = bound_upper(1, 2).unwrap() == 3.into() && bound_upper(2, 3).unwrap() == 4.into();
    let mut exceed = Vec::new();
    let mut cells = 0;
    let mut list_ok = true;
    for n in 2..=10 {
        for tp in 1..=3usize.min(n - 1) {
            for t in 0..tp {
                let l = brute_force_l(t, tp, n, DEFAULT_PAIR_BUDGET).unwrap();
                cells += 1;
                if !ratio_le(l.value, t, tp) {
                    let (a, b) = l.witness.unwrap();
                    exceed.push(format!("n={n} t={t} t'={tp}: {} > {} ({a}/{b})", l.value, bound_upper(t, tp).unwrap()));
                }
                let list = brute_force_list_size(t, tp, n, u128::MAX).unwrap();
                list_ok &= verify_list(&list, t, tp).unwrap() && ratio_le(list.size(), t, tp);
            }
        }
    }
    println!(
        "  supplementary: largest list of pairwise t-disjoint words sharing one t'-output <= bound in all {cells} cells: {}",
        if list_ok { "yes" } else { "no" }
    );
    let first = exceed.first().cloned().unwrap_or_default();
    verdict(
        hand && exceed.is_empty(),
        format!("bound_upper(1,2)=3 and (2,3)=4: {hand}; pairwise L exceeds the bound in {}/{cells} cells, first {first}", exceed.len()),
    )
}

fn criterion_7() -> Verdict {
    let thresholds = bound_lower_threshold(6) == Ok(77) && bound_lower_threshold(7) == Ok(88);
    let mut agree = true;
    let mut valid = true;
    let mut over = Vec::new();
    for (t, tp) in [(0, 1), (0, 2), (1, 2), (1, 3), (2, 3)] {
        for n in (tp + 1)..=14 {
            // exhaustive where the pair count fits, hill climbing beyond
            let budget = if n <= 10 { 1 << 20 } else { 4000 };
            let w = search_witness(t, tp, n, budget, n as u64).unwrap();
            if w.exhaustive && n <= 10 {
                agree &= w.size == brute_force_l(t, tp, n, DEFAULT_PAIR_BUDGET).unwrap().value;
            }
            if let Some((a, b)) = &w.pair {
                valid &= disjoint_at(a, b, t).unwrap() && common_outputs(a, b, tp).unwrap() == w.size;
            }
            if !ratio_le(w.size, t, tp) {
                over.push(format!("(t={t},t'={tp},n={n}): {}", w.size));
            }
        }
    }
    let first = over.first().cloned().unwrap_or_default();
    verdict(
        thresholds && agree && valid && over.is_empty(),
        format!(
            "thresholds 77/88: {thresholds}; exhaustive search = brute force: {agree}; witnesses valid: {valid}; above the bound: {} cells, first {first}",
            over.len()
        ),
    )
}

fn mutually_uncorrelated(members: &[BitWord]) -> bool {
    members.iter().all(|a| {
        members.iter().all(|b| (1..a.len()).all(|k| a.bits()[..k] != b.bits()[b.len() - k..]))
    })
}

fn criterion_8() -> Verdict {
    let mut families = 0;
    let mut mu = true;
    for ell1 in 1..=8 {
        for ell2 in 0..ell1 {
            let fam = build_family(ell1, ell2).unwrap();
            let members: Vec<BitWord> = fam.members().collect();
            mu &= mutually_uncorrelated(&members) && fam.verify_mu();
            families += 1;
        }
    }
    let configs = [
        CodeParams::auto(Mode::Randomized, 40, 1, 0).unwrap(),
        CodeParams::auto(Mode::Randomized, 40, 1, 1).unwrap(),
        CodeParams::auto(Mode::Randomized, 16, 2, 0).unwrap(),
        CodeParams::auto(Mode::Randomized, 40, 2, 1).unwrap(),
        CodeParams::auto(Mode::Explicit, 40, 1, 1).unwrap(),
        CodeParams::auto(Mode::Explicit, 40, 2, 1).unwrap(),
        CodeParams::auto(Mode::Explicit, 200, 1, 1).unwrap(),
    ];
    let mut words = 0;
    let mut violations = Vec::new();
    for p in &configs {
        let fam = p.family().unwrap();
        let lm = p.marker_len();
        let window = 3 * p.structure.l_rf;
        for seed in 0..100 {
            let enc = encode_seeded(p, seed).unwrap();
            words += 1;
            let occ = fam.scan(&enc.codeword);
            let overlap = occ.windows(2).any(|w| w[1].pos < w[0].pos + lm);
            let mut seen = HashSet::new();
            let repeat_free = enc.codeword.bits().windows(window).all(|w| seen.insert(w));
            let distinct = enc.transcript.hierarchy.levels.iter().all(|l| l.hashes.iter().collect::<BTreeSet<_>>().len() == l.hashes.len());
            if overlap || !repeat_free || !distinct {
                violations.push(format!("{} seed {seed}", cell(p)));
            }
        }
    }
    verdict(
        mu && violations.is_empty(),
        format!("MU families checked: {families} (all: {mu}); codewords checked: {words}; violations: {violations:?}"),
    )
}

fn criterion_9(tally: &CheckTally) -> Verdict {
    verdict(
        tally.trials > 0 && tally.violations == 0,
        format!(
            "{} within-guarantee general decodes; violations {}; smallest matching slack {:?}; most erroneous blocks {}",
            tally.trials, tally.violations, tally.worst_slack, tally.worst_erroneous
        ),
    )
}

fn main() {
    // `cargo test` passes filter arguments; the run is all-or-nothing
    if std::env::args().skip(1).any(|a| a == "--list") {
        println!("acceptance: test");
        return;
    }
    // numeric arguments select criteria, for reruns by hand
    let only: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut tally = CheckTally::default();
    let mut failed = Vec::new();
    let mut report = |id: usize, f: &mut dyn FnMut() -> Verdict| {
        if !only.is_empty() && !only.contains(&id) {
            return;
        }
        let start = Instant::now();
        let v = f();
        let status = if v.pass { "PASS" } else { "FAIL" };
        println!("criterion {id}: {status} [{:.1}s] {}", start.elapsed().as_secs_f64(), v.detail);
        if !v.pass {
            failed.push(id);
        }
    };
    report(1, &mut || criterion_1(&mut tally));
    report(2, &mut criterion_2);
    report(3, &mut criterion_3);
    report(4, &mut criterion_4);
    report(5, &mut criterion_5);
    report(6, &mut criterion_6);
    report(7, &mut criterion_7);
    report(8, &mut criterion_8);
    report(9, &mut || criterion_9(&tally));
    if !only.is_empty() {
        return;
    }
    if failed != EXPECTED_FAILURES {
        eprintln!("failing criteria {failed:?}, expected exactly {EXPECTED_FAILURES:?}");
        std::process::exit(1);
    }
    println!("failing criteria {failed:?} match the documented list-size discrepancy");
}
