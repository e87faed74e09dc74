//! `tornpaper`: encode, corrupt, decode and sweep codes for the torn-paper channel.

mod config;

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use tornpaper::channel::{sample_action, transmit, FragmentSet, Scenario, DEFAULT_EXHAUST_BUDGET};
use tornpaper::codec::{encode_explicit, layout_of, redundancy, CodeParams, CodewordLayout, Mode};
use tornpaper::decoder::{decode, DecodeOptions, DecoderKind};
use tornpaper::experiment::{describe, run, ChannelMode, Experiment};
use tornpaper::listdec::{bound_lower_threshold, bound_upper, brute_force_l, brute_force_list_size, DEFAULT_PAIR_BUDGET};
use tornpaper::{BitWord, Error};

use config::Config;

#[derive(Parser)]
#[command(name = "tornpaper", version, about = "Codes for the adversarial torn-paper channel with edit errors")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Encode a message (explicit) or sample a codeword (randomized).
    Encode {
        #[command(flatten)]
        common: Common,
        /// Message as a text file of 0/1 characters (explicit mode); random from the seed otherwise.
        #[arg(long)]
        message: Option<PathBuf>,
    },
    /// Push a codeword through the channel and write the fragments.
    Corrupt {
        #[command(flatten)]
        common: Common,
        /// Codeword file written by `encode`; its header sits next to it.
        #[arg(long)]
        input: PathBuf,
        /// Replay a scenario (JSON) instead of sampling one.
        #[arg(long)]
        scenario: Option<PathBuf>,
    },
    /// Decode a fragment file against a codeword header.
    Decode {
        /// Header written by `encode`.
        #[arg(long)]
        header: PathBuf,
        /// One fragment per line.
        #[arg(long)]
        fragments: PathBuf,
        #[arg(long, value_enum, default_value_t = DecoderArg::General)]
        decoder: DecoderArg,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Encode, corrupt and decode many times; one CSV row per trial.
    Roundtrip {
        #[command(flatten)]
        common: Common,
        /// Every action with exactly t cuts and at most t_e edits.
        #[arg(long)]
        exhaustive: bool,
        #[arg(long)]
        trials: Option<u64>,
        /// Add a wall-time column (breaks byte-stable output).
        #[arg(long)]
        timing: bool,
    },
    /// Brute-force list sizes next to the closed-form bounds.
    Listbounds {
        /// t range, `a-b` or a single value.
        #[arg(long, default_value = "0-2")]
        t: Span,
        #[arg(long = "t-prime", default_value = "1-3")]
        t_prime: Span,
        #[arg(long, default_value = "2-8")]
        n: Span,
        #[arg(long, default_value_t = DEFAULT_PAIR_BUDGET)]
        budget: u128,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// Redundancy breakdown over message lengths.
    Bench {
        #[command(flatten)]
        common: Common,
        /// Comma-separated message lengths; defaults to the config's m.
        #[arg(long, value_delimiter = ',')]
        m: Vec<usize>,
    },
}

#[derive(Args)]
struct Common {
    /// JSON configuration.
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    decoder: Option<DecoderArg>,
    /// Worker threads; 1 runs serially.
    #[arg(long)]
    jobs: Option<usize>,
}

#[derive(Clone, Copy, ValueEnum)]
enum DecoderArg {
    General,
    Subst,
}

impl From<DecoderArg> for DecoderKind {
    fn from(d: DecoderArg) -> Self {
        match d {
            DecoderArg::General => DecoderKind::General,
            DecoderArg::Subst => DecoderKind::SubstitutionsOnly,
        }
    }
}

#[derive(Clone, Copy, Debug)]
struct Span(usize, usize);

impl std::str::FromStr for Span {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let parse = |x: &str| x.trim().parse::<usize>().map_err(|e| format!("{x:?}: {e}"));
        match s.split_once('-') {
            Some((a, b)) => Ok(Span(parse(a)?, parse(b)?)),
            None => parse(s).map(|v| Span(v, v)),
        }
    }
}

/// Failure classes, each with its own exit code.
#[derive(Debug)]
enum Failure {
    Violation(String),
    Config(String),
    Resource(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Violation(_) => 1,
            Failure::Config(_) => 2,
            Failure::Resource(_) => 3,
        }
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Failure::Violation(s) | Failure::Config(s) | Failure::Resource(s) => f.write_str(s),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Resource(_) | Error::Sampling { .. } => Failure::Resource(e.to_string()),
            Error::Config(_) | Error::Domain(_) | Error::Parse(_) | Error::Range(_) | Error::Alignment { .. } => Failure::Config(e.to_string()),
            _ => Failure::Violation(e.to_string()),
        }
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Config(e.to_string())
    }
}

impl From<csv::Error> for Failure {
    fn from(e: csv::Error) -> Self {
        Failure::Config(e.to_string())
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Failure::Config(e.to_string())
    }
}

type Outcome<T = ()> = Result<T, Failure>;

/// JSON sidecar written next to every codeword file.
#[derive(Debug, Serialize, Deserialize)]
struct Header {
    params: CodeParams,
    layout: CodewordLayout,
    /// SHA-256 of the layout's JSON; guards against decoding with a stale header.
    layout_digest: String,
    seed: u64,
    len: usize,
}

fn layout_digest(layout: &CodewordLayout) -> Outcome<String> {
    Ok(hex::encode(Sha256::digest(serde_json::to_vec(layout)?)))
}

fn header_path(codeword: &Path) -> PathBuf {
    let mut p = codeword.as_os_str().to_owned();
    p.push(".json");
    PathBuf::from(p)
}

fn read_header(path: &Path) -> Outcome<Header> {
    let h: Header = serde_json::from_str(&fs::read_to_string(path)?)?;
    let layout = layout_of(&h.params)?;
    if layout != h.layout || layout_digest(&layout)? != h.layout_digest {
        return Err(Failure::Config(format!("{}: layout does not match its parameters", path.display())));
    }
    Ok(h)
}

fn output(out: Option<&Path>) -> Outcome<Box<dyn Write + Send>> {
    Ok(match out {
        Some(p) => Box::new(io::BufWriter::new(fs::File::create(p)?)),
        None => Box::new(io::BufWriter::new(io::stdout())),
    })
}

fn with_jobs<T: Send>(jobs: Option<usize>, f: impl FnOnce() -> T + Send) -> Outcome<T> {
    match jobs {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map(|pool| pool.install(f))
            .map_err(|e| Failure::Resource(e.to_string())),
        None => Ok(f()),
    }
}

fn cmd_encode(common: &Common, message: Option<&Path>) -> Outcome {
    let cfg = Config::load(&common.config)?;
    let params = cfg.params()?;
    let seed = common.seed.unwrap_or(cfg.seed);
    let enc = match (params.mode, message) {
        (Mode::Explicit, Some(path)) => encode_explicit(&fs::read_to_string(path)?.trim().parse()?, &params)?,
        (Mode::Randomized, Some(_)) => return Err(Failure::Config("the randomized code takes no message; use --seed".into())),
        _ => tornpaper::experiment::encode_seeded(&params, seed)?,
    };
    let out = common.out.clone().ok_or_else(|| Failure::Config("encode needs --out".into()))?;
    fs::write(&out, enc.codeword.to_bytes())?;
    let header = Header { layout_digest: layout_digest(&enc.layout)?, layout: enc.layout, params: params.clone(), seed, len: enc.codeword.len() };
    fs::write(header_path(&out), serde_json::to_string_pretty(&header)?)?;
    let red = redundancy(&params)?;
    println!("n = {}, m = {}, rejected draws = {}", header.len, params.m, enc.transcript.rejections);
    println!("r^A: {} bits", red.r_a);
    println!("r^B hashes: {} bits", red.r_b_hashes);
    for (l, bits) in red.r_b_levels.iter().enumerate() {
        println!("r^B level {}: {bits} bits", l + 2);
    }
    println!("r': {} bits", red.r_prime);
    println!("marker overhead: {} bits", red.marker_overhead);
    println!("total redundancy: {} bits", red.total);
    Ok(())
}

fn cmd_corrupt(common: &Common, input: &Path, scenario: Option<&Path>) -> Outcome {
    let cfg = Config::load(&common.config)?;
    let header = read_header(&header_path(input))?;
    let codeword = BitWord::from_bytes(&fs::read(input)?)?;
    if codeword.len() != header.len {
        return Err(Failure::Config("codeword length disagrees with its header".into()));
    }
    let seed = common.seed.unwrap_or(cfg.seed);
    let scenario = match scenario {
        Some(p) => serde_json::from_str(&fs::read_to_string(p)?)?,
        None => {
            let a = sample_action(&codeword, header.params.t, header.params.t_e, cfg.edits.kinds(), seed)?;
            Scenario { edits: a.edits, cuts: a.cuts, seed }
        }
    };
    let frags = transmit(&codeword, &scenario.action(), scenario.seed)?;
    let mut w = output(common.out.as_deref())?;
    w.write_all(frags.to_string().as_bytes())?;
    w.flush()?;
    eprintln!("{}", serde_json::to_string(&scenario)?);
    Ok(())
}

fn cmd_decode(header: &Path, fragments: &Path, decoder: DecoderArg, out: Option<&Path>) -> Outcome {
    let header = read_header(header)?;
    let frags: FragmentSet = fs::read_to_string(fragments)?.parse()?;
    let decoded = decode(&frags, &header.params, decoder.into(), &DecodeOptions::default())?;
    let mut w = output(out)?;
    writeln!(w, "{}", decoded.message)?;
    w.flush()?;
    eprintln!("{}", serde_json::to_string(&decoded.trace.levels.iter().map(|l| (l.level, l.blocks, l.matched)).collect::<Vec<_>>())?);
    Ok(())
}

fn cmd_roundtrip(common: &Common, exhaustive: bool, trials: Option<u64>, timing: bool) -> Outcome {
    let cfg = Config::load(&common.config)?;
    let params = cfg.params()?;
    let channel = if exhaustive {
        ChannelMode::Exhaustive { at_most: false, budget: DEFAULT_EXHAUST_BUDGET }
    } else if let Some(trials) = trials {
        ChannelMode::Random { trials, cuts: None, edits: None }
    } else {
        cfg.channel.clone().unwrap_or(ChannelMode::Random { trials: 1000, cuts: None, edits: None })
    };
    let exp = Experiment {
        params,
        channel,
        edits: cfg.edits,
        decoder: common.decoder.map_or(cfg.decoder, DecoderKind::from),
        seed: common.seed.unwrap_or(cfg.seed),
    };
    let mut csv = csv::Writer::from_writer(output(common.out.as_deref())?);
    let mut head = vec!["trial", "edits", "cuts", "within", "success", "matching_slack", "erroneous", "error"];
    if timing {
        head.push("micros");
    }
    csv.write_record(&head)?;
    let mut failed = None;
    let parallel = common.jobs != Some(1);
    let summary = with_jobs(common.jobs, || {
        run(&exp, parallel, |r| {
            let (edits, cuts) = describe(&r.action);
            let mut row = vec![
                r.index.to_string(),
                edits,
                cuts,
                r.within.to_string(),
                r.success.to_string(),
                r.checks.map_or(String::new(), |c| c.matching_slack.to_string()),
                r.checks.map_or(String::new(), |c| c.erroneous.to_string()),
                r.error.clone().unwrap_or_default(),
            ];
            if timing {
                row.push(r.micros.to_string());
            }
            if let Err(e) = csv.write_record(&row) {
                failed.get_or_insert(e);
            }
        })
    })??;
    if let Some(e) = failed {
        return Err(e.into());
    }
    csv.flush()?;
    eprintln!("{}", serde_json::to_string(&summary)?);
    if summary.violations() > 0 {
        return Err(Failure::Violation(format!("{} within-guarantee violations", summary.violations())));
    }
    Ok(())
}

fn cmd_listbounds(t: Span, tp: Span, n: Span, budget: u128, out: Option<&Path>, jobs: Option<usize>) -> Outcome {
    let mut csv = csv::Writer::from_writer(output(out)?);
    csv.write_record(["t", "t_prime", "n", "L_brute", "L_upper", "threshold", "witness_c", "witness_c_prime", "list_size", "status"])?;
    let mut exceeded = 0;
    for tp in tp.0..=tp.1 {
        let threshold = bound_lower_threshold(tp).map_or(String::new(), |v| v.to_string());
        for t in t.0..=t.1.min(tp.saturating_sub(1)) {
            let upper = bound_upper(t, tp)?;
            for n in n.0.max(tp + 1)..=n.1 {
                let cell = with_jobs(jobs, || (brute_force_l(t, tp, n, budget), brute_force_list_size(t, tp, n, budget)))?;
                let row = match cell {
                    (Ok(l), list) => {
                        let exceeds = l.value as u128 * upper.denom() > *upper.numer();
                        exceeded += exceeds as usize;
                        let (c, c2) = l.witness.map_or((String::new(), String::new()), |(a, b)| (a.to_string(), b.to_string()));
                        let list = list.map_or(String::new(), |x| x.size().to_string());
                        let status = if exceeds { "exceeds" } else { "ok" };
                        [t.to_string(), tp.to_string(), n.to_string(), l.value.to_string(), upper.to_string(), threshold.clone(), c, c2, list, status.into()]
                    }
                    (Err(Error::Resource(_)), _) => {
                        [t.to_string(), tp.to_string(), n.to_string(), String::new(), upper.to_string(), threshold.clone(), String::new(), String::new(), String::new(), "skipped".into()]
                    }
                    (Err(e), _) => return Err(e.into()),
                };
                csv.write_record(&row)?;
            }
        }
    }
    csv.flush()?;
    if exceeded > 0 {
        eprintln!("{exceeded} cells exceed the upper bound under the pairwise definition");
    }
    Ok(())
}

fn cmd_bench(common: &Common, ms: &[usize]) -> Outcome {
    let cfg = Config::load(&common.config)?;
    let ms = if ms.is_empty() { vec![cfg.m] } else { ms.to_vec() };
    let mut csv = csv::Writer::from_writer(output(common.out.as_deref())?);
    csv.write_record(["m", "n", "marker_len", "r_a", "r_b_hashes", "r_b_levels", "r_prime", "marker_overhead", "total", "reference"])?;
    for m in ms {
        let params = Config { m, ..cfg.clone() }.params()?;
        let red = redundancy(&params)?;
        let n = params.m + red.total;
        let e = (params.t + params.t_e).max(1) as f64;
        // (t + t_e) log(n / (t + t_e)) without constants
        let reference = e * (n as f64 / e).log2();
        csv.write_record([
            m.to_string(),
            n.to_string(),
            params.marker_len().to_string(),
            red.r_a.to_string(),
            red.r_b_hashes.to_string(),
            red.r_b_levels.iter().sum::<usize>().to_string(),
            red.r_prime.to_string(),
            red.marker_overhead.to_string(),
            red.total.to_string(),
            format!("{reference:.1}"),
        ])?;
    }
    csv.flush()?;
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Encode { common, message } => cmd_encode(common, message.as_deref()),
        Command::Corrupt { common, input, scenario } => cmd_corrupt(common, input, scenario.as_deref()),
        Command::Decode { header, fragments, decoder, out } => cmd_decode(header, fragments, *decoder, out.as_deref()),
        Command::Roundtrip { common, exhaustive, trials, timing } => cmd_roundtrip(common, *exhaustive, *trials, *timing),
        Command::Listbounds { t, t_prime, n, budget, out, jobs } => cmd_listbounds(*t, *t_prime, *n, *budget, out.as_deref(), *jobs),
        Command::Bench { common, m } => cmd_bench(common, m),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {f}");
            ExitCode::from(f.code())
        }
    }
}
