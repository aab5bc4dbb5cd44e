//! Checkpoint format: magic, version, a JSON header (model config echo,
//! parameter manifest, normalizer state, training iteration), then the flat
//! little-endian f64 parameter array in manifest order. Round trips are
//! byte-identical.

use crate::error::{Result, RoltError};
use crate::model::{ModelConfig, Policy};
use crate::ppo::ObsNormalizer;
use serde::{Deserialize, Serialize};
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"ROLTCKPT";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Header {
    model: ModelConfig,
    manifest: Vec<(String, Vec<usize>)>,
    normalizer: ObsNormalizer,
    iteration: u64,
}

/// A loaded checkpoint, not yet bound to a live policy.
#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub model: ModelConfig,
    pub manifest: Vec<(String, Vec<usize>)>,
    pub normalizer: ObsNormalizer,
    pub iteration: u64,
    pub params: Vec<f64>,
}

impl Checkpoint {
    /// Rebuild the policy: construct parameters for the stored config, check
    /// the manifest matches, then overwrite values with the stored array.
    pub fn into_policy(self) -> Result<(Policy, ObsNormalizer, u64)> {
        let mut policy = Policy::new(self.model.clone(), 0)?;
        let expect = policy.params.manifest();
        if expect != self.manifest {
            return Err(RoltError::Checkpoint(format!(
                "parameter manifest mismatch: checkpoint has {} entries, model wants {}",
                self.manifest.len(),
                expect.len()
            )));
        }
        if self.params.len() != policy.params.total_elems() {
            return Err(RoltError::Checkpoint(format!(
                "flat parameter count {} does not match model {}",
                self.params.len(),
                policy.params.total_elems()
            )));
        }
        policy.params.load_flat(&self.params);
        Ok((policy, self.normalizer, self.iteration))
    }
}

pub fn checkpoint_save(
    path: &Path,
    policy: &Policy,
    normalizer: &ObsNormalizer,
    iteration: u64,
) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    let header = Header {
        model: policy.cfg.clone(),
        manifest: policy.params.manifest(),
        normalizer: normalizer.clone(),
        iteration,
    };
    let header_bytes = serde_json::to_vec(&header)
        .map_err(|e| RoltError::Checkpoint(format!("header serialize: {e}")))?;
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(CHECKPOINT_MAGIC)?;
    w.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
    w.write_all(&(header_bytes.len() as u64).to_le_bytes())?;
    w.write_all(&header_bytes)?;
    let flat = policy.params.flatten();
    w.write_all(&(flat.len() as u64).to_le_bytes())?;
    for v in flat {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn checkpoint_load(path: &Path) -> Result<Checkpoint> {
    let mut r = BufReader::new(File::open(path).map_err(|e| {
        RoltError::Checkpoint(format!("cannot open {}: {e}", path.display()))
    })?);
    let mut magic = [0u8; 8];
    read_exact(&mut r, &mut magic, path, "magic")?;
    if &magic != CHECKPOINT_MAGIC {
        return Err(RoltError::Checkpoint(format!(
            "{} is not a checkpoint (bad magic)",
            path.display()
        )));
    }
    let mut v = [0u8; 4];
    read_exact(&mut r, &mut v, path, "version")?;
    let version = u32::from_le_bytes(v);
    if version != CHECKPOINT_VERSION {
        return Err(RoltError::Checkpoint(format!(
            "checkpoint version {version} unsupported (expected {CHECKPOINT_VERSION})"
        )));
    }
    let mut l = [0u8; 8];
    read_exact(&mut r, &mut l, path, "header length")?;
    let header_len = u64::from_le_bytes(l) as usize;
    let mut header_bytes = vec![0u8; header_len];
    read_exact(&mut r, &mut header_bytes, path, "header")?;
    let header: Header = serde_json::from_slice(&header_bytes)
        .map_err(|e| RoltError::Checkpoint(format!("header parse: {e}")))?;
    read_exact(&mut r, &mut l, path, "parameter count")?;
    let count = u64::from_le_bytes(l) as usize;
    let mut params = Vec::with_capacity(count);
    let mut buf = [0u8; 8];
    for _ in 0..count {
        read_exact(&mut r, &mut buf, path, "parameters")?;
        params.push(f64::from_le_bytes(buf));
    }
    // Trailing bytes mean the file is not something we wrote.
    let mut probe = [0u8; 1];
    if r.read(&mut probe)? != 0 {
        return Err(RoltError::Checkpoint(format!(
            "{} has trailing bytes after the parameter array",
            path.display()
        )));
    }
    Ok(Checkpoint {
        model: header.model,
        manifest: header.manifest,
        normalizer: header.normalizer,
        iteration: header.iteration,
        params,
    })
}

fn read_exact(r: &mut impl Read, buf: &mut [u8], path: &Path, what: &str) -> Result<()> {
    r.read_exact(buf).map_err(|e| {
        RoltError::Checkpoint(format!(
            "{} truncated while reading {what}: {e}",
            path.display()
        ))
    })
}
