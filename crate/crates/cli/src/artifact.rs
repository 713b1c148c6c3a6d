//! Perturbation artifact files: a structured-text metadata header, a `---`
//! separator line, then the delta array as raw little-endian f64 bytes in
//! row-major order. Round trips are bit-exact.

use std::collections::HashMap;
use std::path::Path;

use ndarray::Array2;
use thiserror::Error;

use sotto_core::optim::PerturbationArtifact;

const MAGIC: &str = "sotto-uap";
const VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ArtifactError {
    #[error("artifact schema mismatch: {0}")]
    SchemaMismatch(String),
    #[error("artifact io: {0}")]
    Io(#[from] std::io::Error),
}

fn schema(reason: impl Into<String>) -> ArtifactError {
    ArtifactError::SchemaMismatch(reason.into())
}

/// An artifact plus the provenance fields that only exist on disk.
#[derive(Clone, Debug, PartialEq)]
pub struct StoredArtifact {
    pub artifact: PerturbationArtifact,
    pub train_config_digest: String,
    pub created_at: u64,
}

/// Seconds since the epoch, honoring SOURCE_DATE_EPOCH so runs can be made
/// byte-reproducible.
pub fn created_at_now() -> u64 {
    if let Ok(v) = std::env::var("SOURCE_DATE_EPOCH") {
        if let Ok(secs) = v.parse() {
            return secs;
        }
    }
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

pub fn save_artifact(stored: &StoredArtifact, path: &Path) -> Result<(), ArtifactError> {
    let a = &stored.artifact;
    if !a.is_within_ball() {
        return Err(schema(format!(
            "max|delta| {} exceeds tau {}",
            a.max_abs(),
            a.tau
        )));
    }
    for (field, value) in [
        ("id", &a.id),
        ("encoder_id", &a.encoder_id),
        ("target_text", &a.target_text),
        ("train_config_digest", &stored.train_config_digest),
    ] {
        if value.contains('\n') {
            return Err(schema(format!("{field} contains a newline")));
        }
    }
    let mut out = String::new();
    out.push_str(&format!("{MAGIC} {VERSION}\n"));
    out.push_str(&format!("id={}\n", a.id));
    out.push_str(&format!("encoder_id={}\n", a.encoder_id));
    out.push_str(&format!("target_text={}\n", a.target_text));
    out.push_str(&format!("tau={:?}\n", a.tau));
    out.push_str(&format!("seed={}\n", a.seed));
    out.push_str(&format!("frame_hop={}\n", a.frame_hop));
    out.push_str(&format!("channels={}\n", a.channels()));
    out.push_str(&format!("frames={}\n", a.frames()));
    out.push_str(&format!("train_config_digest={}\n", stored.train_config_digest));
    out.push_str(&format!("created_at={}\n", stored.created_at));
    out.push_str("---\n");
    let mut bytes = out.into_bytes();
    for &v in a.delta.iter() {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    std::fs::write(path, bytes)?;
    Ok(())
}

pub fn load_artifact(path: &Path) -> Result<StoredArtifact, ArtifactError> {
    let bytes = std::fs::read(path)?;
    let sep = b"\n---\n";
    let split = bytes
        .windows(sep.len())
        .position(|w| w == sep)
        .ok_or_else(|| schema("missing header separator"))?;
    let header = std::str::from_utf8(&bytes[..split])
        .map_err(|_| schema("header is not utf-8"))?;
    let payload = &bytes[split + sep.len()..];

    let mut lines = header.lines();
    let first = lines.next().ok_or_else(|| schema("empty header"))?;
    match first.split_once(' ') {
        Some((MAGIC, v)) if v.parse() == Ok(VERSION) => {}
        Some((MAGIC, v)) => return Err(schema(format!("unsupported version {v}"))),
        _ => return Err(schema(format!("bad magic line {first:?}"))),
    }
    let mut fields: HashMap<&str, &str> = HashMap::new();
    for line in lines {
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| schema(format!("malformed header line {line:?}")))?;
        fields.insert(k, v);
    }
    let get = |k: &str| fields.get(k).copied().ok_or_else(|| schema(format!("missing field {k}")));
    let parse_num = |k: &str| -> Result<u64, ArtifactError> {
        get(k)?.parse().map_err(|_| schema(format!("bad {k}")))
    };

    let tau: f64 = get("tau")?.parse().map_err(|_| schema("bad tau"))?;
    let channels = parse_num("channels")? as usize;
    let frames = parse_num("frames")? as usize;
    if payload.len() != channels * frames * 8 {
        return Err(schema(format!(
            "payload is {} bytes, want {} for {channels}x{frames}",
            payload.len(),
            channels * frames * 8
        )));
    }
    let values: Vec<f64> = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let delta = Array2::from_shape_vec((channels, frames), values)
        .map_err(|e| schema(e.to_string()))?;

    let artifact = PerturbationArtifact {
        id: get("id")?.to_string(),
        encoder_id: get("encoder_id")?.to_string(),
        target_text: get("target_text")?.to_string(),
        tau,
        seed: parse_num("seed")?,
        frame_hop: parse_num("frame_hop")? as usize,
        delta,
    };
    if !artifact.is_within_ball() {
        return Err(schema(format!(
            "max|delta| {} exceeds tau {tau}",
            artifact.max_abs()
        )));
    }
    Ok(StoredArtifact {
        artifact,
        train_config_digest: get("train_config_digest")?.to_string(),
        created_at: parse_num("created_at")?,
    })
}
