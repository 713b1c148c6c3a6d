//! Line-delimited corpus manifests: a `# split=<name>` header, then one
//! tab-separated (path, transcript, duration-seconds) record per clip.
//! Paths are relative to the manifest file's directory.

use std::path::{Path, PathBuf};

use thiserror::Error;

use sotto_core::audio::{AudioClip, Manifest, ManifestEntry, Split};

use crate::wav::{self, AudioIoError};

#[derive(Debug, Error)]
pub enum ManifestError {
    #[error("manifest {path}: {reason}")]
    Malformed { path: String, reason: String },
    #[error("manifest {path}: audio file {audio} not found")]
    MissingAudio { path: String, audio: String },
    #[error("{audio}: duration {actual:.3}s does not match declared {declared:.3}s")]
    DurationMismatch {
        audio: String,
        declared: f64,
        actual: f64,
    },
    #[error(transparent)]
    Audio(#[from] AudioIoError),
    #[error("manifest io: {0}")]
    Io(#[from] std::io::Error),
}

fn malformed(path: &Path, reason: impl Into<String>) -> ManifestError {
    ManifestError::Malformed {
        path: path.display().to_string(),
        reason: reason.into(),
    }
}

pub fn save_manifest(manifest: &Manifest, path: &Path) -> Result<(), ManifestError> {
    let mut out = format!("# split={}\n", manifest.split);
    for e in &manifest.entries {
        if e.transcript.contains(['\t', '\n']) || e.path.contains(['\t', '\n']) {
            return Err(malformed(path, format!("record {} contains a tab or newline", e.path)));
        }
        out.push_str(&format!("{}\t{}\t{:?}\n", e.path, e.transcript, e.duration_secs));
    }
    std::fs::write(path, out)?;
    Ok(())
}

pub fn load_manifest(path: &Path) -> Result<Manifest, ManifestError> {
    let text = std::fs::read_to_string(path)?;
    let base = path.parent().unwrap_or(Path::new("."));
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| malformed(path, "empty file"))?;
    let split = match header.strip_prefix("# split=") {
        Some("train") => Split::Train,
        Some("test") => Split::Test,
        _ => return Err(malformed(path, format!("bad header {header:?}"))),
    };
    let mut entries = Vec::new();
    for (i, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let mut parts = line.splitn(3, '\t');
        let (p, t, d) = match (parts.next(), parts.next(), parts.next()) {
            (Some(p), Some(t), Some(d)) => (p, t, d),
            _ => return Err(malformed(path, format!("line {}: want 3 fields", i + 2))),
        };
        let duration_secs: f64 = d
            .parse()
            .map_err(|_| malformed(path, format!("line {}: bad duration {d:?}", i + 2)))?;
        if !base.join(p).is_file() {
            return Err(ManifestError::MissingAudio {
                path: path.display().to_string(),
                audio: p.to_string(),
            });
        }
        entries.push(ManifestEntry {
            path: p.to_string(),
            transcript: t.to_string(),
            duration_secs,
        });
    }
    Ok(Manifest { split, entries })
}

/// Write clips under `root/<split>/` and a manifest at `root/<split>.tsv`.
pub fn write_corpus(clips: &[AudioClip], split: Split, root: &Path) -> Result<PathBuf, ManifestError> {
    let sub = root.join(split.to_string());
    std::fs::create_dir_all(&sub)?;
    let mut entries = Vec::with_capacity(clips.len());
    for clip in clips {
        let rel = format!("{split}/{}.wav", clip.id);
        wav::save_clip(clip, &root.join(&rel))?;
        entries.push(ManifestEntry {
            path: rel,
            transcript: clip.transcript.clone().unwrap_or_default(),
            duration_secs: clip.duration_secs(),
        });
    }
    let manifest_path = root.join(format!("{split}.tsv"));
    save_manifest(&Manifest { split, entries }, &manifest_path)?;
    Ok(manifest_path)
}

/// Load every clip a manifest references, attaching transcripts. Ids come
/// from file stems; declared durations are checked against the audio.
pub fn load_clips(manifest_path: &Path) -> Result<Vec<AudioClip>, ManifestError> {
    let manifest = load_manifest(manifest_path)?;
    let base = manifest_path.parent().unwrap_or(Path::new("."));
    let mut clips = Vec::with_capacity(manifest.entries.len());
    for e in &manifest.entries {
        let mut clip = wav::load_clip(&base.join(&e.path), sotto_core::CANONICAL_RATE)?;
        if (clip.duration_secs() - e.duration_secs).abs() > 0.05 {
            return Err(ManifestError::DurationMismatch {
                audio: e.path.clone(),
                declared: e.duration_secs,
                actual: clip.duration_secs(),
            });
        }
        if !e.transcript.is_empty() {
            clip.transcript = Some(e.transcript.clone());
        }
        clips.push(clip);
    }
    Ok(clips)
}
