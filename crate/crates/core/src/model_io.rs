//! `.efc` model files and run manifests.
//!
//! Layout of a model file:
//!
//! ```text
//! EFC-MODEL\n
//! version 1\n
//! header <len>\n
//! <len bytes of JSON>\n
//! payload <len>\n
//! <len bytes of little-endian f64>
//! sha256 <64 hex digits>\n
//! ```
//!
//! The checksum covers every byte before the `sha256` line. For each class, in
//! header order, the payload holds the scalars `threshold, min, median, p95,
//! max, ridge`, then the `m·Q` local fields (`i·Q + a−1`), then the `D×D`
//! couplings row-major with `idx(i,a) = i·(Q−1) + (a−1)`, `D = m·(Q−1)`.

use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::classifier::{MultiClassModel, TrainingParams};
use crate::error::{EfcError, Result};
use crate::potts::{ClassModel, CouplingMatrix, DenseMatrix, EnergySummary, LocalFields};
use crate::preprocess::PreprocessorState;

pub const MAGIC: &str = "EFC-MODEL";
pub const FORMAT_VERSION: u32 = 1;
pub const PSEUDOCOUNT_CONVENTION: &str =
    "f_i = (1-alpha) f_emp + alpha/Q; f_ij = (1-alpha) f_emp + alpha/Q^2; f_ii(a,b) = f_i(a) delta_ab";
pub const FIELD_CONVENTION: &str =
    "h_i(a) = ln(f_i(a)/f_i(Q)) - sum_{j != i, b < Q} e_ij(a,b) f_j(b)";
const SCALARS_PER_CLASS: usize = 6;

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    pseudocount_convention: String,
    field_convention: String,
    coupling_layout: String,
    m: usize,
    q: usize,
    params: TrainingParams,
    preprocessor: PreprocessorState,
    classes: Vec<ClassHeader>,
}

/// Scalars are duplicated here for readability; the payload is authoritative.
#[derive(Debug, Serialize, Deserialize)]
struct ClassHeader {
    label: String,
    sample_count: usize,
    threshold: Option<f64>,
    fields_len: usize,
    couplings_len: usize,
}

fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| EfcError::io(path, e))?;
    Ok(sha256_hex(&bytes))
}

pub fn encode(model: &MultiClassModel) -> Result<Vec<u8>> {
    let (m, q) = (model.m(), model.q());
    let d = m * (q - 1);
    let header = Header {
        pseudocount_convention: PSEUDOCOUNT_CONVENTION.into(),
        field_convention: FIELD_CONVENTION.into(),
        coupling_layout: "row-major; idx(i,a) = i*(Q-1) + (a-1)".into(),
        m,
        q,
        params: model.params,
        preprocessor: model.preprocessor.clone(),
        classes: model
            .classes
            .iter()
            .map(|c| ClassHeader {
                label: c.label.clone(),
                sample_count: c.sample_count,
                threshold: c.threshold.is_finite().then_some(c.threshold),
                fields_len: m * q,
                couplings_len: d * d,
            })
            .collect(),
    };
    let json = serde_json::to_vec_pretty(&header)?;
    let mut payload = Vec::new();
    for c in &model.classes {
        let s = &c.summary;
        for v in [c.threshold, s.min, s.median, s.p95, s.max, c.ridge]
            .iter()
            .chain(&c.fields.values)
            .chain(&c.couplings.matrix.data)
        {
            payload.extend_from_slice(&v.to_le_bytes());
        }
    }
    let mut out = Vec::with_capacity(json.len() + payload.len() + 160);
    write!(
        out,
        "{MAGIC}\nversion {FORMAT_VERSION}\nheader {}\n",
        json.len()
    )
    .expect("vec write");
    out.extend_from_slice(&json);
    write!(out, "\npayload {}\n", payload.len()).expect("vec write");
    out.extend_from_slice(&payload);
    let digest = sha256_hex(&out);
    writeln!(out, "sha256 {digest}").expect("vec write");
    Ok(out)
}

/// Writes through a temporary file in the target directory, then renames.
pub fn save(model: &MultiClassModel, path: &Path) -> Result<()> {
    let bytes = encode(model)?;
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(&dir).map_err(|e| EfcError::io(&dir, e))?;
    tmp.write_all(&bytes).map_err(|e| EfcError::io(path, e))?;
    tmp.as_file()
        .sync_all()
        .map_err(|e| EfcError::io(path, e))?;
    tmp.persist(path).map_err(|e| EfcError::io(path, e.error))?;
    Ok(())
}

pub fn load(path: &Path) -> Result<MultiClassModel> {
    let bytes = std::fs::read(path).map_err(|e| EfcError::io(path, e))?;
    decode(&bytes, path)
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> Cursor<'a> {
    fn fail(&self, field: &'static str, detail: impl Into<String>) -> EfcError {
        EfcError::ModelFormat {
            path: self.path.to_path_buf(),
            field,
            detail: detail.into(),
        }
    }

    fn line(&mut self, field: &'static str) -> Result<&'a str> {
        let rest = &self.bytes[self.pos..];
        let end = rest
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| self.fail(field, "unexpected end of file"))?;
        self.pos += end + 1;
        std::str::from_utf8(&rest[..end]).map_err(|_| self.fail(field, "not UTF-8"))
    }

    fn keyed_usize(&mut self, key: &'static str) -> Result<usize> {
        let line = self.line(key)?;
        line.strip_prefix(key)
            .and_then(|v| v.strip_prefix(' '))
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| self.fail(key, format!("expected `{key} <n>`, found {line:?}")))
    }

    fn take(&mut self, len: usize, field: &'static str) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < len {
            return Err(self.fail(field, "unexpected end of file"));
        }
        let out = &self.bytes[self.pos..self.pos + len];
        self.pos += len;
        Ok(out)
    }
}

pub fn decode(bytes: &[u8], path: &Path) -> Result<MultiClassModel> {
    let mut cur = Cursor {
        bytes,
        pos: 0,
        path,
    };
    let magic = cur.line("magic")?;
    if magic != MAGIC {
        return Err(cur.fail("magic", format!("expected {MAGIC:?}, found {magic:?}")));
    }
    let version = cur.keyed_usize("version")?;
    if version != FORMAT_VERSION as usize {
        return Err(cur.fail(
            "version",
            format!("file has version {version}, this build reads version {FORMAT_VERSION}"),
        ));
    }

    // checksum trailer: "sha256 " + 64 hex + "\n"
    const TRAILER: usize = 7 + 64 + 1;
    let body_len = bytes
        .len()
        .checked_sub(TRAILER)
        .filter(|&l| l >= cur.pos && bytes[l..].starts_with(b"sha256 ") && bytes.ends_with(b"\n"))
        .ok_or_else(|| cur.fail("checksum", "missing checksum trailer (file truncated?)"))?;
    let stored = std::str::from_utf8(&bytes[body_len + 7..bytes.len() - 1]).unwrap_or("");
    let actual = sha256_hex(&bytes[..body_len]);
    if stored != actual {
        return Err(cur.fail("checksum", format!("stored {stored}, computed {actual}")));
    }
    let mut cur = Cursor {
        bytes: &bytes[..body_len],
        pos: cur.pos,
        path,
    };

    let header_len = cur.keyed_usize("header")?;
    let json = cur.take(header_len, "header")?;
    let header: Header =
        serde_json::from_slice(json).map_err(|e| cur.fail("header", e.to_string()))?;
    if !cur.line("header")?.is_empty() {
        return Err(cur.fail("header", "header length does not match"));
    }
    let payload_len = cur.keyed_usize("payload")?;
    let payload = cur.take(payload_len, "payload")?;
    if cur.pos != cur.bytes.len() {
        return Err(cur.fail("payload", "trailing bytes after payload"));
    }

    let (m, q) = (header.m, header.q);
    if q < 2
        || m < 2
        || header.params.q != q
        || header.preprocessor.q != q
        || header.preprocessor.m() != m
    {
        return Err(cur.fail("dimensions", format!("inconsistent m = {m}, Q = {q}")));
    }
    let d = m * (q - 1);
    let per_class = SCALARS_PER_CLASS + m * q + d * d;
    for c in &header.classes {
        if c.fields_len != m * q || c.couplings_len != d * d {
            return Err(cur.fail(
                "dimensions",
                format!(
                    "class `{}` declares {} fields and {} couplings",
                    c.label, c.fields_len, c.couplings_len
                ),
            ));
        }
    }
    if payload_len != header.classes.len() * per_class * 8 {
        return Err(cur.fail(
            "dimensions",
            format!(
                "payload has {payload_len} bytes, header implies {}",
                header.classes.len() * per_class * 8
            ),
        ));
    }
    let values: Vec<f64> = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect();

    let mut classes = Vec::with_capacity(header.classes.len());
    for (c, block) in header.classes.iter().zip(values.chunks_exact(per_class)) {
        let (scalars, rest) = block.split_at(SCALARS_PER_CLASS);
        let (fields, couplings) = rest.split_at(m * q);
        if (0..m).any(|i| fields[i * q + q - 1] != 0.0) {
            return Err(cur.fail(
                "fields",
                format!("class `{}` has a nonzero reference field", c.label),
            ));
        }
        let summary = EnergySummary {
            min: scalars[1],
            median: scalars[2],
            p95: scalars[3],
            max: scalars[4],
        };
        if scalars[0].to_bits() != summary.p95.to_bits() {
            return Err(cur.fail(
                "threshold",
                format!(
                    "class `{}` threshold differs from its 95th percentile",
                    c.label
                ),
            ));
        }
        classes.push(ClassModel {
            label: c.label.clone(),
            couplings: CouplingMatrix::new(
                m,
                q,
                DenseMatrix {
                    dim: d,
                    data: couplings.to_vec(),
                },
            )?,
            fields: LocalFields {
                m,
                q,
                values: fields.to_vec(),
            },
            threshold: scalars[0],
            alpha: header.params.alpha,
            sample_count: c.sample_count,
            ridge: scalars[5],
            summary,
        });
    }
    MultiClassModel::new(classes, header.preprocessor, header.params)
}

/// Everything needed to replay a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub software: String,
    pub command: String,
    pub seed: u64,
    pub inputs: Vec<InputDigest>,
    /// Flag name → value as given on the command line (or its default).
    pub flags: Vec<(String, String)>,
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputDigest {
    pub path: String,
    pub sha256: String,
}

impl RunManifest {
    pub fn new(command: &str, seed: u64) -> Self {
        RunManifest {
            software: format!("efc {}", env!("CARGO_PKG_VERSION")),
            command: command.into(),
            seed,
            inputs: Vec::new(),
            flags: Vec::new(),
            notes: Vec::new(),
        }
    }

    pub fn add_input(&mut self, path: &Path) -> Result<()> {
        self.inputs.push(InputDigest {
            path: path.display().to_string(),
            sha256: sha256_file(path)?,
        });
        Ok(())
    }

    pub fn flag(&mut self, name: &str, value: impl ToString) {
        self.flags.push((name.into(), value.to_string()));
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_vec_pretty(self)?;
        std::fs::write(path, json).map_err(|e| EfcError::io(path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::preprocess::{DiscretizedTable, EncodedFeature, FeatureEncoder};
    use crate::table::LabelColumn;

    fn model() -> MultiClassModel {
        let mut symbols = Vec::new();
        let mut labels = Vec::new();
        for k in 0..40u16 {
            symbols.extend([1 + k % 2, 1 + k % 3, 1]);
            labels.push("x");
            symbols.extend([3, 2 + k % 2, 1 + k % 4]);
            labels.push("y");
        }
        let t =
            DiscretizedTable::new(symbols, 3, 4, Some(LabelColumn::from_values(labels))).unwrap();
        let pre = PreprocessorState {
            q: 4,
            features: vec![
                EncodedFeature {
                    name: "proto".into(),
                    encoder: FeatureEncoder::Symbolic {
                        values: vec!["tcp".into(), "udp".into()],
                    },
                },
                EncodedFeature {
                    name: "bytes".into(),
                    encoder: FeatureEncoder::Continuous {
                        scale: 1234.5,
                        edges: vec![0.1, 0.2 + 1e-17, 1.0 / 3.0],
                    },
                },
                EncodedFeature {
                    name: "pkts".into(),
                    encoder: FeatureEncoder::Continuous {
                        scale: 1.0,
                        edges: vec![],
                    },
                },
            ],
            fitted_on: 80,
        };
        let params = TrainingParams {
            q: 4,
            alpha: 0.5,
            cap: Some(100),
            seed: 17,
            ..Default::default()
        };
        MultiClassModel::train_discretized(&t, pre, params).unwrap()
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let m = model();
        let bytes = encode(&m).unwrap();
        let back = decode(&bytes, Path::new("mem")).unwrap();
        assert_eq!(back, m);
        for (a, b) in back.classes.iter().zip(&m.classes) {
            assert!(a
                .couplings
                .matrix
                .data
                .iter()
                .zip(&b.couplings.matrix.data)
                .all(|(x, y)| x.to_bits() == y.to_bits()));
            assert_eq!(a.threshold.to_bits(), b.threshold.to_bits());
        }
        assert_eq!(encode(&back).unwrap(), bytes);
    }

    #[test]
    fn truncation_is_caught_by_checksum() {
        let bytes = encode(&model()).unwrap();
        for cut in [bytes.len() - 1, bytes.len() - 40, bytes.len() / 2] {
            let err = decode(&bytes[..cut], Path::new("m.efc")).unwrap_err();
            assert!(
                matches!(
                    err,
                    EfcError::ModelFormat {
                        field: "checksum",
                        ..
                    }
                ),
                "{err}"
            );
        }
        let mut flipped = bytes.clone();
        let mid = flipped.len() - 200;
        flipped[mid] ^= 1;
        let err = decode(&flipped, Path::new("m.efc")).unwrap_err();
        assert!(err.to_string().contains("checksum"), "{err}");
    }

    #[test]
    fn version_bump_is_rejected() {
        let bytes = encode(&model()).unwrap();
        let text = String::from_utf8_lossy(&bytes[..30]).replace("version 1", "version 2");
        let mut bumped = text.into_bytes();
        bumped.extend_from_slice(&bytes[30..]);
        let err = decode(&bumped, Path::new("m.efc")).unwrap_err();
        assert!(
            matches!(
                err,
                EfcError::ModelFormat {
                    field: "version",
                    ..
                }
            ),
            "{err}"
        );
        assert!(decode(b"NOT-A-MODEL\n", Path::new("m.efc")).is_err());
    }

    #[test]
    fn declared_dimensions_must_match() {
        let bytes = encode(&model()).unwrap();
        let needle = b"\"fields_len\": 12";
        let at = bytes
            .windows(needle.len())
            .position(|w| w == needle)
            .unwrap();
        let mut patched = bytes.clone();
        patched[at + needle.len() - 2..at + needle.len()].copy_from_slice(b"13");
        // re-sign so only the dimension check can fail
        let body = patched.len() - 72;
        let digest = sha256_hex(&patched[..body]);
        patched.truncate(body);
        patched.extend_from_slice(format!("sha256 {digest}\n").as_bytes());
        let err = decode(&patched, Path::new("m.efc")).unwrap_err();
        assert!(
            matches!(
                err,
                EfcError::ModelFormat {
                    field: "dimensions",
                    ..
                }
            ),
            "{err}"
        );
    }

    #[test]
    fn save_and_load_through_disk() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.efc");
        let m = model();
        save(&m, &path).unwrap();
        assert_eq!(load(&path).unwrap(), m);
        let missing = load(&dir.path().join("nope.efc")).unwrap_err();
        assert!(missing.to_string().contains("nope.efc"));
    }
}
