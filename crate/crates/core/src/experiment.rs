//! Round-trip harness: encode, push through the channel, decode, and check the
//! per-level matching and block-error counts against the transcript.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bitword::{BitWord, EditKind, EditOp};
use crate::channel::{exhaust_actions, sample_action, transmit, ChannelAction, Scenario, ALL_EDITS, SUBSTITUTIONS};
use crate::codec::{encode_explicit, encode_randomized, CodeParams, Encoded, Mode};
use crate::decoder::{decode, DecodeOptions, Decoded, DecoderKind};
use crate::error::{Error, Result};

/// How trials are generated.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ChannelMode {
    /// `trials` random actions; each trial encodes a fresh word.
    Random {
        trials: u64,
        /// Cuts per trial; defaults to `t`. More than `t` makes the trial out of guarantee.
        #[serde(default)]
        cuts: Option<usize>,
        /// Edits are drawn uniformly from `0..=edits`; defaults to `t_e`.
        #[serde(default)]
        edits: Option<usize>,
    },
    /// Every action with exactly `t` cuts (all counts up to `t` with `at_most`) and at
    /// most `t_e` edits, against one codeword.
    Exhaustive {
        #[serde(default)]
        at_most: bool,
        budget: u128,
    },
    /// Replayed actions against one codeword.
    Scripted { scenarios: Vec<Scenario> },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EditSet {
    Substitutions,
    All,
}

impl EditSet {
    pub fn kinds(self) -> &'static [EditKind] {
        match self {
            EditSet::Substitutions => SUBSTITUTIONS,
            EditSet::All => ALL_EDITS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Experiment {
    pub params: CodeParams,
    pub channel: ChannelMode,
    pub edits: EditSet,
    pub decoder: DecoderKind,
    pub seed: u64,
}

/// Level checks for one decode: matching sizes against `N - t - t_e`, and
/// wrong-but-kept block estimates against `t_e`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LevelCheck {
    /// Smallest `matched - (blocks - t - t_e)` over levels; negative is a violation.
    pub matching_slack: i64,
    /// Largest count of kept block estimates that differ from the true block.
    pub erroneous: usize,
}

impl LevelCheck {
    pub fn holds(&self, t_e: usize) -> bool {
        self.matching_slack >= 0 && self.erroneous <= t_e
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub index: u64,
    pub action: ChannelAction,
    pub within: bool,
    pub success: bool,
    pub checks: Option<LevelCheck>,
    pub error: Option<String>,
    pub micros: u64,
}

impl TrialRecord {
    /// A within-guarantee failure or level-check violation.
    pub fn violation(&self, t_e: usize) -> bool {
        self.within && (!self.success || self.checks.is_some_and(|c| !c.holds(t_e)))
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Summary {
    pub trials: u64,
    pub within: u64,
    pub within_successes: u64,
    pub check_violations: u64,
    pub out_of_guarantee: u64,
    pub out_successes: u64,
}

impl Summary {
    fn add(&mut self, r: &TrialRecord, t_e: usize) {
        self.trials += 1;
        if r.within {
            self.within += 1;
            self.within_successes += r.success as u64;
            self.check_violations += r.checks.is_some_and(|c| !c.holds(t_e)) as u64;
        } else {
            self.out_of_guarantee += 1;
            self.out_successes += r.success as u64;
        }
    }

    /// Success rate over within-guarantee trials; 1 when there are none.
    pub fn success_rate(&self) -> f64 {
        if self.within == 0 {
            1.0
        } else {
            self.within_successes as f64 / self.within as f64
        }
    }

    pub fn violations(&self) -> u64 {
        self.within - self.within_successes + self.check_violations
    }
}

/// Encodes one word: the seed drives the randomized sampler, or a random message.
pub fn encode_seeded(params: &CodeParams, seed: u64) -> Result<Encoded> {
    match params.mode {
        Mode::Randomized => encode_randomized(params, seed),
        Mode::Explicit => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let msg = BitWord::from_bits((0..params.m).map(|_| rng.gen()).collect());
            encode_explicit(&msg, params)
        }
    }
}

/// Level checks of a successful decode against the encoder's transcript.
pub fn check_levels(decoded: &Decoded, enc: &Encoded, params: &CodeParams) -> LevelCheck {
    let budget = (params.t + params.t_e) as i64;
    let zp = enc.transcript.z_prime.bits();
    let mut out = LevelCheck { matching_slack: i64::MAX, erroneous: 0 };
    for lt in &decoded.trace.levels {
        let level = enc.transcript.hierarchy.level(lt.level);
        out.matching_slack = out.matching_slack.min(lt.matched as i64 - (lt.blocks as i64 - budget));
        let wrong = lt
            .estimates
            .iter()
            .zip(level.starts.iter().zip(&level.lens))
            .filter(|(e, (&s, &n))| e.as_ref().is_some_and(|b| b.bits() != &zp[s - 1..s - 1 + n]))
            .count();
        out.erroneous = out.erroneous.max(wrong);
    }
    if out.matching_slack == i64::MAX {
        out.matching_slack = 0;
    }
    out
}

fn within(action: &ChannelAction, params: &CodeParams) -> bool {
    action.cuts.len() <= params.t && action.edits.len() <= params.t_e
}

/// Runs one action against `enc`.
pub fn run_trial(index: u64, enc: &Encoded, action: ChannelAction, exp: &Experiment, shuffle: u64, opts: &DecodeOptions) -> TrialRecord {
    let params = &exp.params;
    let start = Instant::now();
    let result = transmit(&enc.codeword, &action, shuffle).and_then(|frags| decode(&frags, params, exp.decoder, opts));
    let micros = start.elapsed().as_micros() as u64;
    let within = within(&action, params);
    match result {
        Ok(d) => {
            let success = d.codeword == enc.codeword;
            let checks = (exp.decoder == DecoderKind::General).then(|| check_levels(&d, enc, params));
            let error = (!success).then(|| "decoded a different codeword".to_string());
            TrialRecord { index, action, within, success, checks, error, micros }
        }
        Err(e) => TrialRecord { index, action, within, success: false, checks: None, error: Some(e.to_string()), micros },
    }
}

/// Mixes a trial index into the experiment seed.
pub fn trial_seed(seed: u64, index: u64) -> u64 {
    seed ^ index.wrapping_add(1).wrapping_mul(0x9e37_79b9_7f4a_7c15)
}

const CHUNK: usize = 1024;

/// Runs the experiment, calling `sink` on every record in trial order.
pub fn run(exp: &Experiment, parallel: bool, mut sink: impl FnMut(&TrialRecord)) -> Result<Summary> {
    exp.params.validate()?;
    if exp.decoder == DecoderKind::SubstitutionsOnly && exp.edits != EditSet::Substitutions {
        return Err(Error::Config("the substitution-only decoder cannot face insertions or deletions".into()));
    }
    if let ChannelMode::Scripted { scenarios } = &exp.channel {
        let bad = scenarios.iter().flat_map(|s| s.edits.ops()).any(|op| !exp.edits.kinds().contains(&op.kind()));
        if bad {
            return Err(Error::Config("scripted edits fall outside the configured edit set".into()));
        }
    }
    // nested parallelism buys nothing once trials run in parallel
    let opts = DecodeOptions { parallel: !parallel, ..DecodeOptions::default() };
    let t_e = exp.params.t_e;
    let mut summary = Summary::default();
    let mut emit = |batch: Vec<TrialRecord>, summary: &mut Summary| {
        for r in &batch {
            summary.add(r, t_e);
            sink(r);
        }
    };
    let map = |jobs: Vec<(u64, ChannelAction)>, enc: &Encoded| -> Vec<TrialRecord> {
        let one = |(i, a): (u64, ChannelAction)| run_trial(i, enc, a, exp, trial_seed(exp.seed, i), &opts);
        if parallel {
            jobs.into_par_iter().map(one).collect()
        } else {
            jobs.into_iter().map(one).collect()
        }
    };
    match &exp.channel {
        ChannelMode::Random { trials, cuts, edits } => {
            let cuts = cuts.unwrap_or(exp.params.t);
            let edits = edits.unwrap_or(t_e);
            let mut next = 0u64;
            while next < *trials {
                let end = (next + CHUNK as u64).min(*trials);
                let one = |i: u64| -> Result<TrialRecord> {
                    let s = trial_seed(exp.seed, i);
                    let enc = encode_seeded(&exp.params, s)?;
                    let action = sample_action(&enc.codeword, cuts, edits, exp.edits.kinds(), s.rotate_left(17))?;
                    Ok(run_trial(i, &enc, action, exp, s.rotate_left(31), &opts))
                };
                let batch: Vec<TrialRecord> = if parallel {
                    (next..end).into_par_iter().map(one).collect::<Result<_>>()?
                } else {
                    (next..end).map(one).collect::<Result<_>>()?
                };
                emit(batch, &mut summary);
                next = end;
            }
        }
        ChannelMode::Exhaustive { at_most, budget } => {
            let enc = encode_seeded(&exp.params, exp.seed)?;
            let mut actions = exhaust_actions(&enc.codeword, exp.params.t, t_e, exp.edits.kinds(), *at_most, *budget)?.enumerate();
            loop {
                let jobs: Vec<(u64, ChannelAction)> = actions.by_ref().take(CHUNK).map(|(i, a)| (i as u64, a)).collect();
                if jobs.is_empty() {
                    break;
                }
                emit(map(jobs, &enc), &mut summary);
            }
        }
        ChannelMode::Scripted { scenarios } => {
            let enc = encode_seeded(&exp.params, exp.seed)?;
            let records = scenarios
                .iter()
                .enumerate()
                .map(|(i, s)| run_trial(i as u64, &enc, s.action(), exp, s.seed, &opts))
                .collect();
            emit(records, &mut summary);
        }
    }
    Ok(summary)
}

/// Compact action text: edits as `S<pos>`, `D<pos>`, `I<pos>:<bit>`, cuts joined by `|`.
pub fn describe(action: &ChannelAction) -> (String, String) {
    let edits = action
        .edits
        .ops()
        .iter()
        .map(|op| match op {
            EditOp::Substitute { pos, .. } => format!("S{pos}"),
            EditOp::Delete { pos } => format!("D{pos}"),
            EditOp::Insert { pos, bit } => format!("I{pos}:{}", *bit as u8),
        })
        .collect::<Vec<_>>()
        .join(";");
    let cuts = action.cuts.iter().map(usize::to_string).collect::<Vec<_>>().join("|");
    (edits, cuts)
}
