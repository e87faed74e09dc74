use std::path::Path;

use serde::{Deserialize, Serialize};

use tornpaper::codec::{default_explicit_l_rf, CodeParams, Mode};
use tornpaper::decoder::DecoderKind;
use tornpaper::experiment::{ChannelMode, EditSet};
use tornpaper::{Error, Result};

/// Experiment configuration file. Marker lengths left out are chosen automatically.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub mode: Mode,
    pub m: usize,
    pub t: usize,
    pub t_e: usize,
    #[serde(default)]
    pub ell1: Option<usize>,
    #[serde(default)]
    pub ell2: Option<usize>,
    #[serde(default)]
    pub l_rf: Option<usize>,
    #[serde(default)]
    pub window_w: Option<usize>,
    /// `(rho_A, rho_B, rho_R)` overriding the defaults.
    #[serde(default)]
    pub parities: Option<(usize, usize, usize)>,
    #[serde(default = "all_edits")]
    pub edits: EditSet,
    #[serde(default = "general")]
    pub decoder: DecoderKind,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub channel: Option<ChannelMode>,
}

fn all_edits() -> EditSet {
    EditSet::All
}

fn general() -> DecoderKind {
    DecoderKind::General
}

impl Config {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn params(&self) -> Result<CodeParams> {
        let p = match (self.ell1, self.ell2) {
            (Some(ell1), Some(ell2)) => {
                let lm = ell1 + ell2 + 2;
                match self.mode {
                    Mode::Randomized => {
                        CodeParams::randomized(self.m, self.t, self.t_e, ell1, ell2, self.window_w.unwrap_or(self.m + 1), self.l_rf.unwrap_or(lm))?
                    }
                    Mode::Explicit => {
                        CodeParams::explicit(self.m, self.t, self.t_e, ell1, ell2, self.l_rf.unwrap_or_else(|| default_explicit_l_rf(self.m, lm)))?
                    }
                }
            }
            (None, None) => CodeParams::auto(self.mode, self.m, self.t, self.t_e)?,
            _ => return Err(Error::Config("give both ell1 and ell2 or neither".into())),
        };
        match self.parities {
            Some((a, b, r)) => p.with_parities(a, b, r),
            None => Ok(p),
        }
    }
}
