//! On-disk model format.
//!
//! ```text
//! model/
//!   model.toml            window, classifier, solver settings
//!   stage1/ postures/ gestures/
//!     manifest.toml       dims, classes, blocks, lambda, digests
//!     A.mat P.mat norms.mat [center.mat]
//! ```
//!
//! Matrices are raw little-endian f64 in column-major order. Every file is
//! listed with its SHA-256 in the manifest, and loading recomputes one
//! projector row from the dictionary as an end-to-end check.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::classify::L1Options;
use crate::dictionary::{projector_row, Dictionary, PreparedDictionary, Projector};
use crate::error::{Error, Result};
use crate::recognizer::{ClassifierKind, RecognizerModel};

pub const FORMAT_VERSION: u32 = 1;
pub const MODEL_FILE: &str = "model.toml";
const PARTS: [&str; 3] = ["stage1", "postures", "gestures"];
/// Allowed gap between a stored projector row and its recomputation.
const ROW_CHECK_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelManifest {
    pub format_version: u32,
    pub window: usize,
    pub classifier: ClassifierKind,
    pub stage1_reference: f64,
    pub l1: L1Options,
    pub l1_lambda: Option<f64>,
    pub dictionaries: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DictionaryManifest {
    pub format_version: u32,
    pub rows: usize,
    pub cols: usize,
    pub classes: Vec<String>,
    pub blocks: Vec<usize>,
    pub lambda: f64,
    pub centered: bool,
    /// File name to hex SHA-256.
    pub sha256: BTreeMap<String, String>,
}

fn hex_digest(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

fn encode(values: &[f64]) -> Vec<u8> {
    values.iter().flat_map(|v| v.to_le_bytes()).collect()
}

fn decode(path: &Path, bytes: &[u8], expected: usize) -> Result<Vec<f64>> {
    if bytes.len() != expected * 8 {
        return Err(Error::ModelFormat(format!("{}: {} bytes, expected {}", path.display(), bytes.len(), expected * 8)));
    }
    Ok(bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect())
}

fn write(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn read(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

fn read_toml<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = String::from_utf8(read(path)?).map_err(|e| Error::ModelFormat(format!("{}: {e}", path.display())))?;
    toml::from_str(&text).map_err(|e| Error::ModelFormat(format!("{}: {e}", path.display())))
}

fn to_toml<T: Serialize>(value: &T) -> Result<String> {
    toml::to_string(value).map_err(|e| Error::ModelFormat(e.to_string()))
}

fn save_dictionary(dir: &Path, d: &PreparedDictionary) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let dict = &d.dictionary;
    let mut files = vec![
        ("A.mat", encode(dict.matrix().as_slice())),
        ("P.mat", encode(d.projector.matrix().as_slice())),
        ("norms.mat", encode(dict.column_norms())),
    ];
    if let Some(c) = dict.center() {
        files.push(("center.mat", encode(c.as_slice())));
    }
    let mut sha256 = BTreeMap::new();
    for (name, bytes) in &files {
        write(&dir.join(name), bytes)?;
        sha256.insert(name.to_string(), hex_digest(bytes));
    }
    let manifest = DictionaryManifest {
        format_version: FORMAT_VERSION,
        rows: dict.rows(),
        cols: dict.cols(),
        classes: dict.class_names().to_vec(),
        blocks: dict.block_sizes(),
        lambda: dict.lambda(),
        centered: dict.center().is_some(),
        sha256,
    };
    write(&dir.join("manifest.toml"), to_toml(&manifest)?.as_bytes())
}

fn load_dictionary(dir: &Path) -> Result<PreparedDictionary> {
    let m: DictionaryManifest = read_toml(&dir.join("manifest.toml"))?;
    if m.format_version != FORMAT_VERSION {
        return Err(Error::ModelFormat(format!("{}: format version {}", dir.display(), m.format_version)));
    }
    let load = |name: &str, len: usize| -> Result<Vec<f64>> {
        let path = dir.join(name);
        let bytes = read(&path)?;
        let digest = m.sha256.get(name).ok_or_else(|| Error::ModelFormat(format!("{}: no digest for {name}", dir.display())))?;
        if hex_digest(&bytes) != *digest {
            return Err(Error::Checksum(path));
        }
        decode(&path, &bytes, len)
    };
    let a = DMatrix::from_vec(m.rows, m.cols, load("A.mat", m.rows * m.cols)?);
    let p = DMatrix::from_vec(m.cols, m.rows, load("P.mat", m.rows * m.cols)?);
    let norms = load("norms.mat", m.cols)?;
    let center = if m.centered { Some(DVector::from_vec(load("center.mat", m.rows)?)) } else { None };
    let dictionary = Dictionary::from_parts(a, m.classes, &m.blocks, norms, center, m.lambda)?;

    // a projector row recomputed from A must match the stored one
    let seed = u64::from_le_bytes(Sha256::digest(m.sha256["P.mat"].as_bytes())[..8].try_into().expect("8 bytes"));
    let i = ChaCha8Rng::seed_from_u64(seed).random_range(0..m.cols);
    let fresh = projector_row(&dictionary, i)?;
    let stored = p.row(i).transpose();
    let scale = fresh.amax().max(1.0);
    if (fresh - stored).amax() > ROW_CHECK_TOL * scale {
        return Err(Error::Checksum(dir.join("P.mat")));
    }
    Ok(PreparedDictionary { dictionary, projector: Projector::from_matrix(p, m.lambda) })
}

pub fn save_model(dir: impl AsRef<Path>, model: &RecognizerModel) -> Result<()> {
    let dir = dir.as_ref();
    model.validate()?;
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for (name, d) in PARTS.iter().zip([&model.stage1, &model.postures, &model.gestures]) {
        save_dictionary(&dir.join(name), d)?;
    }
    let manifest = ModelManifest {
        format_version: FORMAT_VERSION,
        window: model.window,
        classifier: model.classifier,
        stage1_reference: model.stage1_reference,
        l1: model.l1,
        l1_lambda: model.l1_lambda,
        dictionaries: PARTS.iter().map(|s| s.to_string()).collect(),
    };
    write(&dir.join(MODEL_FILE), to_toml(&manifest)?.as_bytes())
}

pub fn load_model(dir: impl AsRef<Path>) -> Result<RecognizerModel> {
    let dir = dir.as_ref();
    let manifest_path = dir.join(MODEL_FILE);
    if !manifest_path.exists() {
        return Err(Error::ModelFormat(format!("{} not found", manifest_path.display())));
    }
    let m: ModelManifest = read_toml(&manifest_path)?;
    if m.format_version != FORMAT_VERSION {
        return Err(Error::ModelFormat(format!("model format version {}, expected {FORMAT_VERSION}", m.format_version)));
    }
    let model = RecognizerModel {
        stage1: load_dictionary(&dir.join(PARTS[0]))?,
        postures: load_dictionary(&dir.join(PARTS[1]))?,
        gestures: load_dictionary(&dir.join(PARTS[2]))?,
        window: m.window,
        classifier: m.classifier,
        l1: m.l1,
        l1_lambda: m.l1_lambda,
        stage1_reference: m.stage1_reference,
    };
    model.validate()?;
    Ok(model)
}

/// Every file a saved model consists of, relative to its directory.
pub fn model_files() -> Vec<PathBuf> {
    let mut v = vec![PathBuf::from(MODEL_FILE)];
    for p in PARTS {
        for f in ["manifest.toml", "A.mat", "P.mat", "norms.mat"] {
            v.push(Path::new(p).join(f));
        }
    }
    v
}
