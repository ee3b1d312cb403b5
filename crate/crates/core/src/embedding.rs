//! Embedding bundles: one document's vectors at document, sentence and word
//! level, stored in the `.hpeb` binary layout with a JSON manifest beside it.
//!
//! Payload layout, all little-endian:
//!
//! ```text
//! b"HPEB"  u32 version (=1)  u32 dim  u32 sentence_count
//! u32 word_count × sentence_count
//! f32 × dim                          document vector
//! f32 × dim × sentence_count         sentence vectors, in order
//! f32 × dim × total_words            word vectors, sentence-major
//! ```
//!
//! The manifest (`<stem>.manifest.json`) carries the document id, counts and
//! a SHA-256 of the payload.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::segment::SegmentedDocument;
use crate::tensor::splitmix64;

pub const MAGIC: &[u8; 4] = b"HPEB";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum BundleError {
    #[error("bundle I/O: {0}")]
    Io(#[from] std::io::Error),
    #[error("manifest: {0}")]
    Manifest(#[from] serde_json::Error),
    #[error("bad bundle format: {0}")]
    Format(String),
    #[error("corrupt bundle: {0}")]
    Corruption(String),
    #[error("invalid embedding configuration: {0}")]
    Config(String),
    #[error("bundle does not pair with its segmentation: {0}")]
    Invalid(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingBundle {
    pub doc_id: String,
    pub dim: usize,
    pub doc_vec: Vec<f32>,
    pub sent_vecs: Vec<Vec<f32>>,
    /// One vector per word, grouped by sentence.
    pub word_vecs: Vec<Vec<Vec<f32>>>,
}

impl EmbeddingBundle {
    pub fn word_counts(&self) -> Vec<usize> {
        self.word_vecs.iter().map(Vec::len).collect()
    }

    /// Bit-level equality (NaN payloads included).
    pub fn bit_eq(&self, other: &EmbeddingBundle) -> bool {
        fn same(a: &[f32], b: &[f32]) -> bool {
            a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits())
        }
        self.doc_id == other.doc_id
            && self.dim == other.dim
            && same(&self.doc_vec, &other.doc_vec)
            && self.sent_vecs.len() == other.sent_vecs.len()
            && self
                .sent_vecs
                .iter()
                .zip(&other.sent_vecs)
                .all(|(a, b)| same(a, b))
            && self.word_vecs.len() == other.word_vecs.len()
            && self
                .word_vecs
                .iter()
                .zip(&other.word_vecs)
                .all(|(a, b)| a.len() == b.len() && a.iter().zip(b).all(|(x, y)| same(x, y)))
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub doc_id: String,
    pub file: String,
    pub sentence_count: usize,
    pub word_counts: Vec<usize>,
    /// Hex SHA-256 of the payload file.
    pub checksum: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BundleManifest {
    pub version: u32,
    pub dim: usize,
    pub doc_count: usize,
    pub documents: Vec<ManifestEntry>,
}

/// Name of the manifest that sits beside a payload.
pub fn manifest_path(payload: &Path) -> PathBuf {
    payload.with_extension("manifest.json")
}

pub fn encode_payload(bundle: &EmbeddingBundle) -> Vec<u8> {
    let total_words: usize = bundle.word_vecs.iter().map(Vec::len).sum();
    let floats = bundle.dim * (1 + bundle.sent_vecs.len() + total_words);
    let mut out = Vec::with_capacity(16 + 4 * bundle.word_vecs.len() + 4 * floats);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(bundle.dim as u32).to_le_bytes());
    out.extend_from_slice(&(bundle.sent_vecs.len() as u32).to_le_bytes());
    for words in &bundle.word_vecs {
        out.extend_from_slice(&(words.len() as u32).to_le_bytes());
    }
    let mut put = |v: &[f32]| {
        for x in v {
            out.extend_from_slice(&x.to_le_bytes());
        }
    };
    put(&bundle.doc_vec);
    bundle.sent_vecs.iter().for_each(|v| put(v));
    bundle.word_vecs.iter().flatten().for_each(|v| put(v));
    out
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Cursor<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8], BundleError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        match end {
            Some(end) => {
                let s = &self.bytes[self.pos..end];
                self.pos = end;
                Ok(s)
            }
            None => Err(BundleError::Corruption(format!(
                "payload truncated at byte {} (needed {n} more)",
                self.pos
            ))),
        }
    }

    fn u32(&mut self) -> Result<u32, BundleError> {
        Ok(u32::from_le_bytes(
            self.take(4)?.try_into().expect("4 bytes"),
        ))
    }

    fn vec(&mut self, dim: usize) -> Result<Vec<f32>, BundleError> {
        let raw = self.take(
            dim.checked_mul(4)
                .ok_or_else(|| BundleError::Corruption("dimension overflows".into()))?,
        )?;
        Ok(raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
            .collect())
    }
}

/// Parse a payload; `doc_id` is supplied by the caller (it lives in the
/// manifest, not the payload).
pub fn decode_payload(bytes: &[u8], doc_id: &str) -> Result<EmbeddingBundle, BundleError> {
    let mut c = Cursor { bytes, pos: 0 };
    let magic = c
        .take(4)
        .map_err(|_| BundleError::Format("file shorter than magic".into()))?;
    if magic != MAGIC {
        return Err(BundleError::Format(format!("bad magic {magic:?}")));
    }
    let version = c.u32()?;
    if version != FORMAT_VERSION {
        return Err(BundleError::Format(format!(
            "unsupported version {version}"
        )));
    }
    let dim = c.u32()? as usize;
    let sentences = c.u32()? as usize;
    if sentences > bytes.len() / 4 {
        return Err(BundleError::Corruption(format!(
            "sentence count {sentences} exceeds payload size"
        )));
    }
    let counts = (0..sentences)
        .map(|_| c.u32().map(|v| v as usize))
        .collect::<Result<Vec<_>, _>>()?;
    let doc_vec = c.vec(dim)?;
    let sent_vecs = (0..sentences)
        .map(|_| c.vec(dim))
        .collect::<Result<Vec<_>, _>>()?;
    let mut word_vecs = Vec::with_capacity(sentences);
    for &n in &counts {
        word_vecs.push((0..n).map(|_| c.vec(dim)).collect::<Result<Vec<_>, _>>()?);
    }
    if c.pos != bytes.len() {
        return Err(BundleError::Corruption(format!(
            "{} trailing bytes after payload",
            bytes.len() - c.pos
        )));
    }
    Ok(EmbeddingBundle {
        doc_id: doc_id.to_string(),
        dim,
        doc_vec,
        sent_vecs,
        word_vecs,
    })
}

pub fn checksum(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn entry_for(bundle: &EmbeddingBundle, file: &str, payload: &[u8]) -> ManifestEntry {
    ManifestEntry {
        doc_id: bundle.doc_id.clone(),
        file: file.to_string(),
        sentence_count: bundle.sent_vecs.len(),
        word_counts: bundle.word_counts(),
        checksum: checksum(payload),
    }
}

/// Write `<path>` (payload) and `<stem>.manifest.json`.
pub fn write_bundle(bundle: &EmbeddingBundle, path: &Path) -> Result<ManifestEntry, BundleError> {
    let payload = encode_payload(bundle);
    let file = path
        .file_name()
        .map(|f| f.to_string_lossy().into_owned())
        .unwrap_or_default();
    let entry = entry_for(bundle, &file, &payload);
    let manifest = BundleManifest {
        version: FORMAT_VERSION,
        dim: bundle.dim,
        doc_count: 1,
        documents: vec![entry.clone()],
    };
    fs::write(path, &payload)?;
    fs::write(manifest_path(path), serde_json::to_vec_pretty(&manifest)?)?;
    Ok(entry)
}

pub fn read_bundle(path: &Path) -> Result<EmbeddingBundle, BundleError> {
    let payload = fs::read(path)?;
    let mpath = manifest_path(path);
    let manifest: BundleManifest = match fs::read(&mpath) {
        Ok(raw) => serde_json::from_slice(&raw)?,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
            return Err(BundleError::Format(format!(
                "missing manifest {}",
                mpath.display()
            )))
        }
        Err(e) => return Err(e.into()),
    };
    if manifest.version != FORMAT_VERSION {
        return Err(BundleError::Format(format!(
            "manifest version {}",
            manifest.version
        )));
    }
    let [entry] = manifest.documents.as_slice() else {
        return Err(BundleError::Format(format!(
            "per-file manifest lists {} documents",
            manifest.documents.len()
        )));
    };
    // Header problems (magic, version) take precedence over checksum
    // mismatches so a foreign file reports as a format error.
    if payload.len() < 8 || &payload[..4] != MAGIC {
        return Err(BundleError::Format("bad magic".into()));
    }
    let actual = checksum(&payload);
    if actual != entry.checksum {
        return Err(BundleError::Corruption(format!(
            "checksum mismatch for `{}`: manifest {} payload {actual}",
            entry.doc_id, entry.checksum
        )));
    }
    let bundle = decode_payload(&payload, &entry.doc_id)?;
    if bundle.dim != manifest.dim
        || bundle.sent_vecs.len() != entry.sentence_count
        || bundle.word_counts() != entry.word_counts
    {
        return Err(BundleError::Corruption(format!(
            "counts in payload disagree with manifest for `{}`",
            entry.doc_id
        )));
    }
    Ok(bundle)
}

/// File stem for a document id: safe characters kept, plus a short hash so
/// distinct ids never collide.
pub fn bundle_file_stem(doc_id: &str) -> String {
    let safe: String = doc_id
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '-' || c == '_' {
                c
            } else {
                '_'
            }
        })
        .take(64)
        .collect();
    format!("{safe}-{}", &checksum(doc_id.as_bytes())[..8])
}

/// Write each bundle as its own payload/manifest pair plus a directory-level
/// `manifest.json` listing them all.
pub fn write_bundle_dir(
    bundles: &[EmbeddingBundle],
    dir: &Path,
) -> Result<BundleManifest, BundleError> {
    fs::create_dir_all(dir)?;
    let dim = bundles.first().map_or(0, |b| b.dim);
    let mut documents = Vec::with_capacity(bundles.len());
    for b in bundles {
        if b.dim != dim {
            return Err(BundleError::Config(format!(
                "mixed dimensions {} and {dim} in one directory",
                b.dim
            )));
        }
        let path = dir.join(format!("{}.hpeb", bundle_file_stem(&b.doc_id)));
        documents.push(write_bundle(b, &path)?);
    }
    let manifest = BundleManifest {
        version: FORMAT_VERSION,
        dim,
        doc_count: documents.len(),
        documents,
    };
    fs::write(
        dir.join("manifest.json"),
        serde_json::to_vec_pretty(&manifest)?,
    )?;
    Ok(manifest)
}

/// Read every `.hpeb` in a directory (sorted by file name).
pub fn read_bundle_dir(dir: &Path) -> Result<Vec<EmbeddingBundle>, BundleError> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "hpeb"))
        .collect();
    paths.sort();
    paths.iter().map(|p| read_bundle(p)).collect()
}

/// 64-bit FNV-1a.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

/// Deterministic pseudo-embedding of one token: component `i` is
/// `2·u − 1` where `u` is the top 53 bits of
/// `splitmix64(key ^ (i+1)·φ)` scaled to `[0, 1)` and
/// `key = splitmix64(seed ^ fnv1a64(token))`.
pub fn hash_token_vector(token: &str, dim: usize, seed: u64) -> Vec<f32> {
    let key = splitmix64(seed ^ fnv1a64(token.as_bytes()));
    (0..dim as u64)
        .map(|i| {
            let bits = splitmix64(key ^ (i + 1).wrapping_mul(GOLDEN));
            let u = (bits >> 11) as f64 * (1.0 / (1u64 << 53) as f64);
            (2.0 * u - 1.0) as f32
        })
        .collect()
}

fn mean_f32(vectors: &[Vec<f32>], dim: usize) -> Vec<f32> {
    let mut acc = vec![0.0f64; dim];
    for v in vectors {
        acc.iter_mut().zip(v).for_each(|(a, &x)| *a += x as f64);
    }
    let n = vectors.len().max(1) as f64;
    acc.into_iter().map(|a| (a / n) as f32).collect()
}

/// Stand-in for pretrained embeddings: keyed hash vectors per word, sentence
/// vectors as word means, document vector as the sentence mean.
pub fn hash_embed(
    doc: &SegmentedDocument,
    dim: usize,
    seed: u64,
) -> Result<EmbeddingBundle, BundleError> {
    if dim < 2 {
        return Err(BundleError::Config(format!("dim must be >= 2, got {dim}")));
    }
    let word_vecs: Vec<Vec<Vec<f32>>> = doc
        .sentences
        .iter()
        .map(|s| {
            s.words
                .iter()
                .map(|w| hash_token_vector(w, dim, seed))
                .collect()
        })
        .collect();
    let sent_vecs: Vec<Vec<f32>> = word_vecs.iter().map(|ws| mean_f32(ws, dim)).collect();
    let doc_vec = mean_f32(&sent_vecs, dim);
    Ok(EmbeddingBundle {
        doc_id: doc.doc_id.clone(),
        dim,
        doc_vec,
        sent_vecs,
        word_vecs,
    })
}

/// Where in a bundle a violation sits. Sentence and word indices are
/// 0-based.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Location {
    Document,
    Sentence(usize),
    Word(usize, usize),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Violation {
    DocId {
        expected: String,
        found: String,
    },
    SentenceCount {
        expected: usize,
        found: usize,
    },
    /// Number of per-sentence word groups differs from the sentence count.
    WordGroupCount {
        expected: usize,
        found: usize,
    },
    WordCount {
        sentence: usize,
        expected: usize,
        found: usize,
    },
    Dimension {
        at: Location,
        expected: usize,
        found: usize,
    },
    NonFinite {
        at: Location,
        component: usize,
    },
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_clean(&self) -> bool {
        self.violations.is_empty()
    }
}

pub fn validate_bundle(bundle: &EmbeddingBundle, doc: &SegmentedDocument) -> ValidationReport {
    let mut v = Vec::new();
    if bundle.doc_id != doc.doc_id {
        v.push(Violation::DocId {
            expected: doc.doc_id.clone(),
            found: bundle.doc_id.clone(),
        });
    }
    let dim = bundle.dim;
    let check = |at: Location, vec: &[f32], v: &mut Vec<Violation>| {
        if vec.len() != dim {
            v.push(Violation::Dimension {
                at: at.clone(),
                expected: dim,
                found: vec.len(),
            });
        }
        for (i, x) in vec.iter().enumerate() {
            if !x.is_finite() {
                v.push(Violation::NonFinite {
                    at: at.clone(),
                    component: i,
                });
            }
        }
    };
    check(Location::Document, &bundle.doc_vec, &mut v);
    let n_sent = doc.sentences.len();
    if bundle.sent_vecs.len() != n_sent {
        v.push(Violation::SentenceCount {
            expected: n_sent,
            found: bundle.sent_vecs.len(),
        });
    }
    for (j, s) in bundle.sent_vecs.iter().enumerate() {
        check(Location::Sentence(j), s, &mut v);
    }
    if bundle.word_vecs.len() != n_sent {
        v.push(Violation::WordGroupCount {
            expected: n_sent,
            found: bundle.word_vecs.len(),
        });
    }
    for (j, words) in bundle.word_vecs.iter().enumerate() {
        if let Some(sent) = doc.sentences.get(j) {
            if words.len() != sent.words.len() {
                v.push(Violation::WordCount {
                    sentence: j,
                    expected: sent.words.len(),
                    found: words.len(),
                });
            }
        }
        for (k, w) in words.iter().enumerate() {
            check(Location::Word(j, k), w, &mut v);
        }
    }
    ValidationReport { violations: v }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::segment::segment;

    fn doc() -> SegmentedDocument {
        segment("d1", "I am happy. It rains. happy happy").unwrap()
    }

    #[test]
    fn repeated_tokens_share_vectors() {
        let b = hash_embed(&doc(), 8, 3).unwrap();
        assert_eq!(b.word_vecs[0][2], b.word_vecs[2][0]);
        assert_eq!(b.word_vecs[2][0], b.word_vecs[2][1]);
        assert_ne!(b.word_vecs[0][0], b.word_vecs[0][1]);
    }

    #[test]
    fn sentence_vector_is_word_mean() {
        let b = hash_embed(&doc(), 16, 0).unwrap();
        let (w1, w2) = (&b.word_vecs[1][0], &b.word_vecs[1][1]);
        for i in 0..16 {
            let expect = (w1[i] as f64 + w2[i] as f64) / 2.0;
            assert!((b.sent_vecs[1][i] as f64 - expect).abs() <= 1e-6);
        }
        for i in 0..16 {
            let expect = b.sent_vecs.iter().map(|s| s[i] as f64).sum::<f64>() / 3.0;
            assert!((b.doc_vec[i] as f64 - expect).abs() <= 1e-6);
        }
    }

    #[test]
    fn values_in_range_and_dim_checked() {
        let b = hash_embed(&doc(), 64, 9).unwrap();
        assert!(b
            .word_vecs
            .iter()
            .flatten()
            .flatten()
            .all(|&x| (-1.0..=1.0).contains(&x)));
        assert!(matches!(
            hash_embed(&doc(), 1, 0),
            Err(BundleError::Config(_))
        ));
    }

    #[test]
    fn clean_validation() {
        let d = doc();
        let b = hash_embed(&d, 4, 1).unwrap();
        assert!(validate_bundle(&b, &d).is_clean());
    }

    #[test]
    fn nan_reported_at_coordinates() {
        let d = doc();
        let mut b = hash_embed(&d, 4, 1).unwrap();
        b.word_vecs[1][1][3] = f32::NAN;
        let r = validate_bundle(&b, &d);
        assert_eq!(
            r.violations,
            vec![Violation::NonFinite {
                at: Location::Word(1, 1),
                component: 3
            }]
        );
    }

    #[test]
    fn missing_sentence_vector_reported_once() {
        let d = doc();
        let mut b = hash_embed(&d, 4, 1).unwrap();
        b.sent_vecs.pop();
        let r = validate_bundle(&b, &d);
        assert_eq!(
            r.violations,
            vec![Violation::SentenceCount {
                expected: 3,
                found: 2
            }]
        );
    }

    #[test]
    fn round_trip_and_corruption() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d1.hpeb");
        let b = hash_embed(&doc(), 5, 2).unwrap();
        write_bundle(&b, &path).unwrap();
        assert!(read_bundle(&path).unwrap().bit_eq(&b));

        // altered magic
        let mut bytes = fs::read(&path).unwrap();
        bytes[0] = b'X';
        fs::write(&path, &bytes).unwrap();
        assert!(matches!(read_bundle(&path), Err(BundleError::Format(_))));

        // truncated payload
        write_bundle(&b, &path).unwrap();
        let bytes = fs::read(&path).unwrap();
        assert!(matches!(
            decode_payload(&bytes[..bytes.len() - 3], "d1"),
            Err(BundleError::Corruption(_))
        ));

        // flipped float byte → checksum mismatch
        let mut bytes = fs::read(&path).unwrap();
        let last = bytes.len() - 1;
        bytes[last] ^= 0x01;
        fs::write(&path, &bytes).unwrap();
        assert!(matches!(
            read_bundle(&path),
            Err(BundleError::Corruption(_))
        ));
    }

    #[test]
    fn manifest_count_mismatch_is_corruption() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d1.hpeb");
        let b = hash_embed(&doc(), 3, 2).unwrap();
        write_bundle(&b, &path).unwrap();
        let mpath = manifest_path(&path);
        let mut m: BundleManifest = serde_json::from_slice(&fs::read(&mpath).unwrap()).unwrap();
        m.documents[0].word_counts[0] += 1;
        fs::write(&mpath, serde_json::to_vec(&m).unwrap()).unwrap();
        assert!(matches!(
            read_bundle(&path),
            Err(BundleError::Corruption(_))
        ));
    }

    #[test]
    fn directory_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let d1 = doc();
        let d2 = segment("x/y z", "Another one here. Yes.").unwrap();
        let bundles = vec![
            hash_embed(&d1, 4, 0).unwrap(),
            hash_embed(&d2, 4, 0).unwrap(),
        ];
        let m = write_bundle_dir(&bundles, dir.path()).unwrap();
        assert_eq!(m.doc_count, 2);
        let mut back = read_bundle_dir(dir.path()).unwrap();
        back.sort_by(|a, b| a.doc_id.cmp(&b.doc_id));
        assert!(back[0].bit_eq(&bundles[0]));
        assert!(back[1].bit_eq(&bundles[1]));
    }
}
