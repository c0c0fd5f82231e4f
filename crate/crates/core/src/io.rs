//! Persistence: posterior ensembles as per-chain CSV files with a checksummed
//! manifest, and the run manifest written next to every command's outputs.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::calibration::{Chain, ChainConfig, PosteriorEnsemble};
use crate::error::{Error, Result};
use crate::scenario::ScenarioConfig;

pub const ENSEMBLE_MANIFEST: &str = "ensemble.json";
pub const RUN_MANIFEST: &str = "manifest.json";
const ENSEMBLE_FORMAT: u32 = 1;

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn sha256_file(path: impl AsRef<Path>) -> Result<String> {
    Ok(sha256_hex(&fs::read(path)?))
}

/// Writes `bytes` to `path`, creating parent directories.
pub fn write_file(path: impl AsRef<Path>, bytes: &[u8]) -> Result<()> {
    let path = path.as_ref();
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    fs::write(path, bytes)?;
    Ok(())
}

/// Renders CSV through `f` into memory, then writes it in one piece.
pub fn write_csv_file(
    path: impl AsRef<Path>,
    f: impl FnOnce(&mut Vec<u8>) -> Result<()>,
) -> Result<()> {
    let mut buf = Vec::new();
    f(&mut buf)?;
    write_file(path, &buf)
}

pub fn write_json_file(path: impl AsRef<Path>, value: &impl Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_file(path, text.as_bytes())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ChainEntry {
    file: String,
    rows: usize,
    sha256: String,
    acceptance_rate: f64,
    burn_in_acceptance_rate: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct EnsembleManifest {
    format: u32,
    scenario: String,
    parameter_names: Vec<String>,
    config: ChainConfig,
    chains: Vec<ChainEntry>,
}

fn chain_file(k: usize) -> String {
    format!("chain_{k}.csv")
}

/// Saves one `chain_<k>.csv` per chain (parameter columns followed by
/// `log_posterior`) and an `ensemble.json` manifest with checksums.
pub fn persist_ensemble(ensemble: &PosteriorEnsemble, dir: impl AsRef<Path>) -> Result<()> {
    ensemble.validate()?;
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    let mut entries = Vec::with_capacity(ensemble.chains.len());
    for (k, chain) in ensemble.chains.iter().enumerate() {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = ensemble.parameter_names.clone();
        header.push("log_posterior".into());
        w.write_record(&header)?;
        for (s, lp) in chain.samples.iter().zip(&chain.log_posterior) {
            let mut row: Vec<String> = s.iter().map(|v| v.to_string()).collect();
            row.push(lp.to_string());
            w.write_record(&row)?;
        }
        let bytes = w
            .into_inner()
            .map_err(|e| Error::data(format!("writing chain {k}: {e}")))?;
        let file = chain_file(k);
        fs::write(dir.join(&file), &bytes)?;
        entries.push(ChainEntry {
            file,
            rows: chain.samples.len(),
            sha256: sha256_hex(&bytes),
            acceptance_rate: chain.acceptance_rate,
            burn_in_acceptance_rate: chain
                .burn_in_acceptance_rate
                .is_finite()
                .then_some(chain.burn_in_acceptance_rate),
        });
    }
    let manifest = EnsembleManifest {
        format: ENSEMBLE_FORMAT,
        scenario: ensemble.scenario.clone(),
        parameter_names: ensemble.parameter_names.clone(),
        config: ensemble.config.clone(),
        chains: entries,
    };
    write_json_file(dir.join(ENSEMBLE_MANIFEST), &manifest)
}

/// Loads an ensemble saved by [`persist_ensemble`], verifying checksums,
/// headers and row counts.
pub fn load_ensemble(dir: impl AsRef<Path>) -> Result<PosteriorEnsemble> {
    let dir = dir.as_ref();
    let manifest_path = dir.join(ENSEMBLE_MANIFEST);
    let manifest: EnsembleManifest = serde_json::from_slice(
        &fs::read(&manifest_path)
            .map_err(|e| Error::data(format!("cannot read {}: {e}", manifest_path.display())))?,
    )?;
    if manifest.format != ENSEMBLE_FORMAT {
        return Err(Error::data(format!(
            "unsupported ensemble format {}",
            manifest.format
        )));
    }
    let d = manifest.parameter_names.len();
    let mut chains = Vec::with_capacity(manifest.chains.len());
    for entry in &manifest.chains {
        let path = dir.join(&entry.file);
        let bytes = fs::read(&path)?;
        if sha256_hex(&bytes) != entry.sha256 {
            return Err(Error::data(format!(
                "checksum mismatch for {}",
                path.display()
            )));
        }
        let mut reader = csv::Reader::from_reader(bytes.as_slice());
        let header: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
        let mut expected = manifest.parameter_names.clone();
        expected.push("log_posterior".into());
        if header != expected {
            return Err(Error::data(format!(
                "unexpected header in {}",
                path.display()
            )));
        }
        let mut samples = Vec::with_capacity(entry.rows);
        let mut log_posterior = Vec::with_capacity(entry.rows);
        for (i, rec) in reader.records().enumerate() {
            let rec = rec?;
            if rec.len() != d + 1 {
                return Err(Error::data(format!(
                    "{}: row {} has {} fields, expected {}",
                    path.display(),
                    i + 1,
                    rec.len(),
                    d + 1
                )));
            }
            let values = rec
                .iter()
                .map(|f| {
                    f.parse::<f64>()
                        .map_err(|_| Error::data(format!("{}: bad number '{f}'", path.display())))
                })
                .collect::<Result<Vec<f64>>>()?;
            log_posterior.push(values[d]);
            samples.push(values[..d].to_vec());
        }
        if samples.len() != entry.rows {
            return Err(Error::data(format!(
                "{}: {} rows, manifest lists {}",
                path.display(),
                samples.len(),
                entry.rows
            )));
        }
        chains.push(Chain {
            samples,
            log_posterior,
            acceptance_rate: entry.acceptance_rate,
            burn_in_acceptance_rate: entry.burn_in_acceptance_rate.unwrap_or(f64::NAN),
        });
    }
    let ensemble = PosteriorEnsemble {
        parameter_names: manifest.parameter_names,
        chains,
        scenario: manifest.scenario,
        config: manifest.config,
    };
    ensemble.validate()?;
    Ok(ensemble)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputEntry {
    pub file: String,
    pub bytes: u64,
    pub sha256: String,
}

/// Provenance record written as `manifest.json` in each output directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub command: String,
    pub scenario: String,
    pub scenario_hash: String,
    pub seed: u64,
    /// Seconds since the Unix epoch.
    pub started_at: u64,
    pub finished_at: Option<u64>,
    /// Input path to SHA-256.
    pub inputs: BTreeMap<String, String>,
    pub chain_settings: Option<ChainConfig>,
    /// Command-specific settings.
    pub settings: BTreeMap<String, serde_json::Value>,
    pub outputs: Vec<OutputEntry>,
}

/// Honours `SOURCE_DATE_EPOCH` so that reruns can reproduce the manifest
/// byte for byte.
fn unix_now() -> u64 {
    if let Some(t) = std::env::var("SOURCE_DATE_EPOCH")
        .ok()
        .and_then(|v| v.parse().ok())
    {
        return t;
    }
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

impl RunManifest {
    pub fn new(command: &str, scenario: &ScenarioConfig, seed: u64) -> Self {
        RunManifest {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            scenario: scenario.name.clone(),
            scenario_hash: scenario.config_hash(),
            seed,
            started_at: unix_now(),
            finished_at: None,
            inputs: BTreeMap::new(),
            chain_settings: None,
            settings: BTreeMap::new(),
            outputs: Vec::new(),
        }
    }

    pub fn add_input(&mut self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        self.inputs
            .insert(path.display().to_string(), sha256_file(path)?);
        Ok(())
    }

    pub fn set(&mut self, key: &str, value: impl Serialize) -> Result<()> {
        self.settings
            .insert(key.to_string(), serde_json::to_value(value)?);
        Ok(())
    }

    /// Re-hashes the recorded inputs; returns the paths that changed.
    pub fn drifted_inputs(&self) -> Result<Vec<String>> {
        let mut changed = Vec::new();
        for (path, hash) in &self.inputs {
            match sha256_file(path) {
                Ok(h) if &h == hash => {}
                _ => changed.push(path.clone()),
            }
        }
        Ok(changed)
    }

    /// Inventories every file under `dir` (except this manifest) and writes
    /// the manifest there.
    pub fn finish(mut self, dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let mut files = Vec::new();
        collect_files(dir, dir, &mut files)?;
        files.sort();
        self.outputs = files
            .into_iter()
            .filter(|f| f != Path::new(RUN_MANIFEST))
            .map(|rel| {
                let bytes = fs::read(dir.join(&rel))?;
                Ok(OutputEntry {
                    file: rel.to_string_lossy().replace('\\', "/"),
                    bytes: bytes.len() as u64,
                    sha256: sha256_hex(&bytes),
                })
            })
            .collect::<Result<_>>()?;
        self.finished_at = Some(unix_now());
        write_json_file(dir.join(RUN_MANIFEST), &self)?;
        Ok(self)
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        Ok(serde_json::from_slice(&fs::read(
            dir.as_ref().join(RUN_MANIFEST),
        )?)?)
    }
}

fn collect_files(root: &Path, dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    for entry in fs::read_dir(dir)? {
        let path = entry?.path();
        if path.is_dir() {
            collect_files(root, &path, out)?;
        } else {
            out.push(path.strip_prefix(root).expect("inside root").to_path_buf());
        }
    }
    Ok(())
}
