//! Session manifests and crash-safe file output.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::codecs::CodecKind;
use crate::corpus::{sha256_hex, TokenId, VocabIdentity};
use crate::error::{Result, StegoError};
use crate::reformer::ReformConfig;

pub const MANIFEST_SCHEMA: u32 = 1;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArtifactRef {
    pub path: PathBuf,
    pub sha256: String,
}

impl ArtifactRef {
    pub fn of(path: &Path) -> Result<Self> {
        let bytes = fs::read(path)?;
        Ok(ArtifactRef {
            path: fs::canonicalize(path)?,
            sha256: sha256_hex(&bytes),
        })
    }

    /// Reads the artifact at `path` (or the recorded one) and checks its hash.
    pub fn read_verified(&self, name: &str, path: Option<&Path>) -> Result<Vec<u8>> {
        let path = path.unwrap_or(&self.path);
        let bytes = fs::read(path)?;
        let found = sha256_hex(&bytes);
        if found != self.sha256 {
            return Err(StegoError::ArtifactMismatch {
                artifact: format!("{name} ({})", path.display()),
                expected: self.sha256.clone(),
                found,
            });
        }
        Ok(bytes)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum StegoFormat {
    /// Detokenized text; a trailing stop token is dropped.
    Text,
    /// `{"tokens":[...]}`, lossless for every vocabulary.
    Ids,
}

/// Where step distributions came from.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ProviderRef {
    Ngram { model: ArtifactRef },
    Tcp { addr: String },
    Command { command: String },
}

/// Everything the receiver needs except the key and the stegotext.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub schema: u32,
    pub vocab: ArtifactRef,
    pub vocab_identity: VocabIdentity,
    pub provider: ProviderRef,
    pub target_freq: ArtifactRef,
    pub model_freq: ArtifactRef,
    pub reform: ReformConfig,
    pub codec: CodecKind,
    pub precision: u32,
    pub nonce: u64,
    pub max_len: usize,
    pub prompt: Vec<TokenId>,
    pub stop_tokens: Vec<TokenId>,
    pub format: StegoFormat,
    pub stego_sha256: String,
}

impl Manifest {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let m: Manifest = serde_json::from_str(text)
            .map_err(|e| StegoError::Malformed(format!("bad manifest: {e}")))?;
        if m.schema != MANIFEST_SCHEMA {
            return Err(StegoError::Malformed(format!(
                "manifest schema {} not supported",
                m.schema
            )));
        }
        Ok(m)
    }
}

/// Writes `data` to a sibling temp file, syncs it and renames it over
/// `path`, so readers never see a partial file.
pub fn write_atomic(path: &Path, data: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    let name = path
        .file_name()
        .ok_or_else(|| StegoError::InvalidConfig(format!("{} is not a file path", path.display())))?;
    let tmp = dir.join(format!(
        ".{}.tmp{}",
        name.to_string_lossy(),
        std::process::id()
    ));
    let result = (|| {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(data)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    })();
    if result.is_err() {
        let _ = fs::remove_file(&tmp);
    }
    Ok(result?)
}
