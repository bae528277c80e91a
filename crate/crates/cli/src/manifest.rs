//! Run manifests: what ran, on which inputs, producing which bytes.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::Parser;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::commands::{execute, Outcome};
use crate::{Cli, Command};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileHash {
    pub path: PathBuf,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub schema: u32,
    pub version: String,
    pub command: String,
    /// Arguments after the program name, with the seed made explicit.
    pub argv: Vec<String>,
    pub cwd: PathBuf,
    pub seed: Option<u64>,
    pub config: Value,
    pub inputs: Vec<FileHash>,
    pub outputs: Vec<FileHash>,
}

fn sha256(path: &Path) -> Result<String> {
    let bytes = fs::read(path).with_context(|| format!("hashing {}", path.display()))?;
    Ok(Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect())
}

fn hashes(paths: &[PathBuf]) -> Result<Vec<FileHash>> {
    paths
        .iter()
        .map(|p| {
            Ok(FileHash {
                path: p.clone(),
                sha256: sha256(p)?,
            })
        })
        .collect()
}

fn command_name(c: &Command) -> &'static str {
    match c {
        Command::LexiconFit { .. } => "lexicon-fit",
        Command::Measure(_) => "measure",
        Command::Calibrate(_) => "calibrate",
        Command::Apply(_) => "apply",
        Command::Synth { .. } => "synth",
        Command::Baseline(_) => "baseline",
        Command::Replay { .. } => "replay",
    }
}

/// Drops `--manifest <path>` and pins the seed so a replay does not depend
/// on the environment.
fn replay_argv(args: &[String], seed: Option<u64>) -> Vec<String> {
    let mut out = Vec::with_capacity(args.len() + 2);
    let mut skip = false;
    let mut has_seed = false;
    for a in args {
        if skip {
            skip = false;
            continue;
        }
        if a == "--manifest" {
            skip = true;
            continue;
        }
        if a.starts_with("--manifest=") {
            continue;
        }
        has_seed |= a == "--seed" || a.starts_with("--seed=");
        out.push(a.clone());
    }
    if let (Some(seed), false) = (seed, has_seed) {
        out.push("--seed".into());
        out.push(seed.to_string());
    }
    out
}

pub fn run(cli: Cli, args: &[String]) -> Result<()> {
    if let Command::Replay { path } = &cli.command {
        return replay(path);
    }
    let outcome: Outcome = execute(&cli.command)?;
    let manifest = RunManifest {
        schema: 1,
        version: env!("CARGO_PKG_VERSION").to_string(),
        command: command_name(&cli.command).to_string(),
        argv: replay_argv(args, outcome.seed),
        cwd: std::env::current_dir()?,
        seed: outcome.seed,
        config: outcome.config,
        inputs: hashes(&outcome.inputs)?,
        outputs: hashes(&outcome.outputs)?,
    };
    let path = match cli.manifest {
        Some(p) => p,
        None => {
            let first = outcome.outputs.first().context("command produced no output")?;
            PathBuf::from(format!("{}.manifest.json", first.display()))
        }
    };
    let mut bytes = serde_json::to_vec_pretty(&manifest)?;
    bytes.push(b'\n');
    fs::write(&path, bytes).with_context(|| format!("writing {}", path.display()))?;
    eprintln!("manifest: {}", path.display());
    Ok(())
}

fn replay(path: &Path) -> Result<()> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let manifest: RunManifest = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    if manifest.cwd.is_dir() {
        std::env::set_current_dir(&manifest.cwd)?;
    }
    for input in &manifest.inputs {
        let now = sha256(&input.path)?;
        if now != input.sha256 {
            bail!("input {} changed since the recorded run", input.path.display());
        }
    }
    let cli = Cli::try_parse_from(std::iter::once("certcal".to_string()).chain(manifest.argv.iter().cloned()))
        .context("manifest arguments no longer parse")?;
    if matches!(cli.command, Command::Replay { .. }) {
        bail!("a replay manifest cannot replay itself");
    }
    let outcome = execute(&cli.command)?;
    let now = hashes(&outcome.outputs)?;
    let mut mismatched = Vec::new();
    for expected in &manifest.outputs {
        match now.iter().find(|h| h.path == expected.path) {
            Some(h) if h.sha256 == expected.sha256 => {}
            _ => mismatched.push(expected.path.display().to_string()),
        }
    }
    if !mismatched.is_empty() || now.len() != manifest.outputs.len() {
        bail!("replay produced different outputs: {}", mismatched.join(", "));
    }
    println!("replay ok: {} outputs identical", now.len());
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn argv_pins_seed_and_drops_manifest() {
        let args: Vec<String> = ["synth", "--spec", "a.json", "--manifest", "m.json", "--n", "5"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        assert_eq!(
            replay_argv(&args, Some(7)),
            vec!["synth", "--spec", "a.json", "--n", "5", "--seed", "7"]
        );
        let with_seed: Vec<String> = ["apply", "--seed=3"].iter().map(|s| s.to_string()).collect();
        assert_eq!(replay_argv(&with_seed, Some(3)), with_seed);
    }
}
