//! Provenance headers and the plain-text model file.

use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

use igp::{KernelFamily, KernelSpec};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Clone, Debug)]
pub struct Provenance {
    pub seed: u64,
    pub config_hash: String,
    pub extra: Vec<String>,
}

impl Provenance {
    /// Hash of the subcommand, its serialisable options and the bytes of
    /// every input file. Output locations do not enter the hash.
    pub fn new<T: Serialize>(command: &str, args: &T, seed: u64, inputs: &[&Path]) -> Result<Self> {
        let mut h = Sha256::new();
        h.update(command.as_bytes());
        h.update(serde_json::to_vec(args)?);
        for p in inputs {
            let bytes = fs::read(p).with_context(|| format!("reading {}", p.display()))?;
            h.update(Sha256::digest(&bytes));
        }
        let config_hash = h.finalize().iter().map(|b| format!("{b:02x}")).collect();
        Ok(Provenance { seed, config_hash, extra: Vec::new() })
    }

    pub fn with(mut self, line: String) -> Self {
        self.extra.push(line);
        self
    }

    pub fn header(&self) -> Vec<String> {
        let mut v = vec![format!("igp {VERSION}"), format!("seed={}", self.seed), format!("config={}", self.config_hash)];
        v.extend(self.extra.iter().cloned());
        v
    }

    pub fn write_text(&self, path: &Path, body: &[String]) -> Result<()> {
        let mut out = String::new();
        for c in self.header() {
            out.push_str("# ");
            out.push_str(&c);
            out.push('\n');
        }
        for l in body {
            out.push_str(l);
            out.push('\n');
        }
        fs::write(path, out).with_context(|| format!("writing {}", path.display()))
    }
}

/// Fitted kernel plus the flags needed to reuse it.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelFile {
    pub kernel: KernelSpec,
    pub lml: f64,
    pub points: bool,
}

fn join(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x}")).collect::<Vec<_>>().join(",")
}

impl ModelFile {
    pub fn lines(&self) -> Vec<String> {
        let k = &self.kernel;
        vec![
            format!("kernel={}", k.family.tag()),
            format!("amplitude={}", k.amplitude),
            format!("length_scales={}", join(&k.length_scales)),
            format!("base_noise={}", k.base_noise),
            format!("lml={}", self.lml),
            format!("points={}", self.points),
        ]
    }

    pub fn parse(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let mut family = None;
        let mut amplitude = None;
        let mut ls = None;
        let mut noise = None;
        let mut lml = f64::NAN;
        let mut points = false;
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let ctx = || format!("{}:{}", path.display(), i + 1);
            let Some((k, v)) = line.split_once('=') else {
                bail!("{}: expected key=value, got '{line}'", ctx());
            };
            let num = |s: &str| s.trim().parse::<f64>().with_context(|| format!("{}: bad number '{s}'", ctx()));
            match k.trim() {
                "kernel" => family = Some(v.parse::<KernelFamily>().with_context(ctx)?),
                "amplitude" => amplitude = Some(num(v)?),
                "length_scales" => ls = Some(v.split(',').map(num).collect::<Result<Vec<f64>>>()?),
                "base_noise" => noise = Some(num(v)?),
                "lml" => lml = num(v)?,
                "points" => points = v.trim().parse().with_context(ctx)?,
                _ => {}
            }
        }
        let (Some(family), Some(amplitude), Some(ls), Some(noise)) = (family, amplitude, ls, noise) else {
            bail!("{}: model file needs kernel, amplitude, length_scales and base_noise", path.display());
        };
        let kernel = KernelSpec::new(family, amplitude, ls, noise);
        kernel.validate().with_context(|| path.display().to_string())?;
        Ok(ModelFile { kernel, lml, points })
    }
}
