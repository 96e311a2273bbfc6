//! `BIEM1` embedding files and `BIAN1` annotation files.
//!
//! Both start with a single compact JSON header line terminated by `\n`,
//! followed by a little-endian payload:
//!
//! * `BIEM1`: `M·L·D` `f32` values (sample-major, then patch-major), then `M`
//!   `u32` class ids.
//! * `BIAN1`: per sample, `K_global` bytes then `L·K_spatial` bytes, each 0 or 1.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const EMBEDDING_MAGIC: &str = "BIEM1";
pub const ANNOTATION_MAGIC: &str = "BIAN1";
const MAX_HEADER: usize = 4096;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct EmbeddingHeader {
    magic: String,
    #[serde(rename = "M")]
    m: usize,
    #[serde(rename = "L")]
    l: usize,
    #[serde(rename = "D")]
    d: usize,
    #[serde(rename = "N")]
    n: usize,
    dtype: String,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct AnnotationHeader {
    magic: String,
    #[serde(rename = "M")]
    m: usize,
    #[serde(rename = "L")]
    l: usize,
    #[serde(rename = "K_global")]
    k_global: usize,
    #[serde(rename = "K_spatial")]
    k_spatial: usize,
}

/// Contents of a `BIEM1` file.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingDataset {
    pub samples: usize,
    pub patches: usize,
    pub dim: usize,
    pub classes: usize,
    /// `samples·patches·dim` values.
    pub values: Vec<f32>,
    pub labels: Vec<u32>,
}

/// Contents of a `BIAN1` file.
#[derive(Clone, Debug, PartialEq)]
pub struct AnnotationData {
    pub samples: usize,
    pub patches: usize,
    pub k_global: usize,
    pub k_spatial: usize,
    /// Per sample: `k_global` global bytes, then `patches·k_spatial` spatial bytes.
    pub bytes: Vec<u8>,
}

fn format_err(offset: usize, message: impl Into<String>) -> Error {
    Error::Format {
        offset: offset as u64,
        message: message.into(),
    }
}

/// Splits off the header line. Returns the header text and payload offset.
fn split_header(bytes: &[u8]) -> Result<(&str, usize)> {
    let limit = bytes.len().min(MAX_HEADER);
    let end = bytes[..limit]
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| format_err(limit, "no header line terminator"))?;
    let text = std::str::from_utf8(&bytes[..end])
        .map_err(|e| format_err(e.valid_up_to(), "header is not UTF-8"))?;
    Ok((text, end + 1))
}

fn check_magic(text: &str, found: &str, expected: &str) -> Result<()> {
    if found == expected {
        return Ok(());
    }
    let offset = text.find(found).unwrap_or(0);
    Err(format_err(
        offset,
        format!("bad magic {found:?}, expected {expected:?}"),
    ))
}

fn parse_header<H: for<'de> Deserialize<'de>>(text: &str) -> Result<H> {
    serde_json::from_str(text).map_err(|e| {
        // serde_json reports 1-based columns on the single header line.
        format_err(e.column().saturating_sub(1), format!("invalid header: {e}"))
    })
}

fn checked_len(parts: &[usize], offset: usize) -> Result<usize> {
    parts
        .iter()
        .try_fold(1usize, |acc, &x| acc.checked_mul(x))
        .ok_or_else(|| format_err(offset, "header dimensions overflow"))
}

fn check_length(bytes: &[u8], expected: usize) -> Result<()> {
    if bytes.len() < expected {
        return Err(format_err(
            bytes.len(),
            format!("truncated file: expected {expected} bytes, found {}", bytes.len()),
        ));
    }
    if bytes.len() > expected {
        return Err(format_err(
            expected,
            format!("{} trailing bytes after payload", bytes.len() - expected),
        ));
    }
    Ok(())
}

impl EmbeddingDataset {
    pub fn new(
        samples: usize,
        patches: usize,
        dim: usize,
        classes: usize,
        values: Vec<f32>,
        labels: Vec<u32>,
    ) -> Result<Self> {
        if values.len() != samples * patches * dim || labels.len() != samples {
            return Err(Error::shape(
                "EmbeddingDataset",
                format!(
                    "{} values and {} labels for M={samples} L={patches} D={dim}",
                    values.len(),
                    labels.len()
                ),
            ));
        }
        if let Some(&y) = labels.iter().find(|&&y| y as usize >= classes) {
            return Err(Error::Contract(format!("label {y} out of range for {classes} classes")));
        }
        Ok(EmbeddingDataset {
            samples,
            patches,
            dim,
            classes,
            values,
            labels,
        })
    }

    /// Values of one sample, `patches·dim` long.
    pub fn sample_values(&self, i: usize) -> &[f32] {
        let n = self.patches * self.dim;
        &self.values[i * n..(i + 1) * n]
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let header = EmbeddingHeader {
            magic: EMBEDDING_MAGIC.into(),
            m: self.samples,
            l: self.patches,
            d: self.dim,
            n: self.classes,
            dtype: "f32le".into(),
        };
        let mut out = serde_json::to_vec(&header).expect("header serializes");
        out.push(b'\n');
        out.reserve(4 * (self.values.len() + self.labels.len()));
        for v in &self.values {
            out.extend_from_slice(&v.to_le_bytes());
        }
        for y in &self.labels {
            out.extend_from_slice(&y.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let (text, start) = split_header(bytes)?;
        let h: EmbeddingHeader = parse_header(text)?;
        check_magic(text, &h.magic, EMBEDDING_MAGIC)?;
        if h.dtype != "f32le" {
            let offset = text.find(&h.dtype).unwrap_or(0);
            return Err(format_err(offset, format!("unsupported dtype {:?}", h.dtype)));
        }
        if h.l == 0 || h.d == 0 || h.n == 0 {
            return Err(format_err(0, "L, D and N must be at least 1"));
        }
        let count = checked_len(&[h.m, h.l, h.d], 0)?;
        let payload = checked_len(&[count, 4], 0)?;
        let expected = start + payload + 4 * h.m;
        check_length(bytes, expected)?;

        let mut values = Vec::with_capacity(count);
        for (i, chunk) in bytes[start..start + payload].chunks_exact(4).enumerate() {
            let v = f32::from_le_bytes(chunk.try_into().expect("4 bytes"));
            if !v.is_finite() {
                return Err(format_err(start + 4 * i, format!("non-finite value {v}")));
            }
            values.push(v);
        }
        let label_start = start + payload;
        let mut labels = Vec::with_capacity(h.m);
        for (i, chunk) in bytes[label_start..].chunks_exact(4).enumerate() {
            let y = u32::from_le_bytes(chunk.try_into().expect("4 bytes"));
            if y as usize >= h.n {
                return Err(format_err(
                    label_start + 4 * i,
                    format!("label {y} out of range for N={}", h.n),
                ));
            }
            labels.push(y);
        }
        Ok(EmbeddingDataset {
            samples: h.m,
            patches: h.l,
            dim: h.d,
            classes: h.n,
            values,
            labels,
        })
    }
}

impl AnnotationData {
    pub fn new(samples: usize, patches: usize, k_global: usize, k_spatial: usize, bytes: Vec<u8>) -> Result<Self> {
        if bytes.len() != samples * (k_global + patches * k_spatial) {
            return Err(Error::shape(
                "AnnotationData",
                format!("{} bytes for M={samples} L={patches} K={k_global}+{k_spatial}", bytes.len()),
            ));
        }
        if bytes.iter().any(|&b| b > 1) {
            return Err(Error::Contract("annotation bytes must be 0 or 1".into()));
        }
        Ok(AnnotationData {
            samples,
            patches,
            k_global,
            k_spatial,
            bytes,
        })
    }

    fn stride(&self) -> usize {
        self.k_global + self.patches * self.k_spatial
    }

    /// Global and spatial bytes of one sample.
    pub fn sample_bytes(&self, i: usize) -> (&[u8], &[u8]) {
        let s = self.stride();
        self.bytes[i * s..(i + 1) * s].split_at(self.k_global)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let header = AnnotationHeader {
            magic: ANNOTATION_MAGIC.into(),
            m: self.samples,
            l: self.patches,
            k_global: self.k_global,
            k_spatial: self.k_spatial,
        };
        let mut out = serde_json::to_vec(&header).expect("header serializes");
        out.push(b'\n');
        out.extend_from_slice(&self.bytes);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let (text, start) = split_header(bytes)?;
        let h: AnnotationHeader = parse_header(text)?;
        check_magic(text, &h.magic, ANNOTATION_MAGIC)?;
        let stride = h
            .k_global
            .checked_add(checked_len(&[h.l, h.k_spatial], 0)?)
            .ok_or_else(|| format_err(0, "header dimensions overflow"))?;
        let payload = checked_len(&[h.m, stride], 0)?;
        check_length(bytes, start + payload)?;
        if let Some(i) = bytes[start..].iter().position(|&b| b > 1) {
            return Err(format_err(
                start + i,
                format!("annotation byte {} is not 0 or 1", bytes[start + i]),
            ));
        }
        Ok(AnnotationData {
            samples: h.m,
            patches: h.l,
            k_global: h.k_global,
            k_spatial: h.k_spatial,
            bytes: bytes[start..].to_vec(),
        })
    }
}

fn read(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(path, e))
}

pub(crate) fn write(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn save_dataset(path: impl AsRef<Path>, data: &EmbeddingDataset) -> Result<()> {
    write(path.as_ref(), &data.to_bytes())
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<EmbeddingDataset> {
    EmbeddingDataset::from_bytes(&read(path.as_ref())?)
}

pub fn save_annotations(path: impl AsRef<Path>, ann: &AnnotationData) -> Result<()> {
    write(path.as_ref(), &ann.to_bytes())
}

pub fn load_annotations(path: impl AsRef<Path>) -> Result<AnnotationData> {
    AnnotationData::from_bytes(&read(path.as_ref())?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn small() -> EmbeddingDataset {
        let values = (0..24).map(|i| i as f32 * 0.5 - 3.0).collect();
        EmbeddingDataset::new(2, 3, 4, 3, values, vec![2, 0]).unwrap()
    }

    fn header_len(bytes: &[u8]) -> usize {
        bytes.iter().position(|&b| b == b'\n').unwrap() + 1
    }

    #[test]
    fn payload_size_follows_header() {
        let bytes = small().to_bytes();
        assert_eq!(bytes.len() - header_len(&bytes), 96 + 8);
        assert!(bytes.starts_with(br#"{"magic":"BIEM1","M":2,"L":3,"D":4,"N":3,"dtype":"f32le"}"#));
    }

    #[test]
    fn truncation_reports_file_end() {
        let bytes = small().to_bytes();
        for cut in [1, 5, 40] {
            let short = &bytes[..bytes.len() - cut];
            match EmbeddingDataset::from_bytes(short) {
                Err(Error::Format { offset, .. }) => assert_eq!(offset as usize, short.len()),
                other => panic!("expected format error, got {other:?}"),
            }
        }
        let mut long = bytes.clone();
        long.push(0);
        match EmbeddingDataset::from_bytes(&long) {
            Err(Error::Format { offset, .. }) => assert_eq!(offset as usize, bytes.len()),
            other => panic!("expected format error, got {other:?}"),
        }
    }

    #[test]
    fn every_magic_byte_corruption_is_rejected() {
        let bytes = small().to_bytes();
        let at = bytes.windows(5).position(|w| w == b"BIEM1").unwrap();
        for i in at..at + 5 {
            for v in 0..=255u8 {
                if v == bytes[i] {
                    continue;
                }
                let mut bad = bytes.clone();
                bad[i] = v;
                assert!(
                    matches!(EmbeddingDataset::from_bytes(&bad), Err(Error::Format { .. })),
                    "byte {i} -> {v}"
                );
            }
        }
    }

    #[test]
    fn out_of_range_label_names_its_offset() {
        let mut bytes = small().to_bytes();
        let n = bytes.len();
        bytes[n - 4..].copy_from_slice(&7u32.to_le_bytes());
        match EmbeddingDataset::from_bytes(&bytes) {
            Err(Error::Format { offset, .. }) => assert_eq!(offset as usize, n - 4),
            other => panic!("expected format error, got {other:?}"),
        }
    }

    #[test]
    fn non_finite_values_rejected() {
        let mut d = small();
        d.values[5] = f32::NAN;
        let bytes = d.to_bytes();
        match EmbeddingDataset::from_bytes(&bytes) {
            Err(Error::Format { offset, .. }) => assert_eq!(offset as usize, header_len(&bytes) + 20),
            other => panic!("expected format error, got {other:?}"),
        }
    }

    #[test]
    fn unknown_header_keys_rejected() {
        let text = b"{\"magic\":\"BIEM1\",\"M\":0,\"L\":1,\"D\":1,\"N\":1,\"dtype\":\"f32le\",\"x\":1}\n";
        assert!(EmbeddingDataset::from_bytes(text).is_err());
        let ok = b"{\"magic\":\"BIEM1\",\"M\":0,\"L\":1,\"D\":1,\"N\":1,\"dtype\":\"f32le\"}\n";
        assert_eq!(EmbeddingDataset::from_bytes(ok).unwrap().samples, 0);
    }

    #[test]
    fn annotation_round_trip_and_validation() {
        let ann = AnnotationData::new(2, 2, 1, 2, vec![1, 0, 1, 1, 0, 0, 0, 0, 1, 1]).unwrap();
        let bytes = ann.to_bytes();
        assert_eq!(AnnotationData::from_bytes(&bytes).unwrap(), ann);
        assert_eq!(ann.sample_bytes(1), (&[0u8][..], &[0u8, 0, 1, 1][..]));

        let mut bad = bytes.clone();
        let n = bad.len();
        bad[n - 1] = 2;
        match AnnotationData::from_bytes(&bad) {
            Err(Error::Format { offset, .. }) => assert_eq!(offset as usize, n - 1),
            other => panic!("expected format error, got {other:?}"),
        }
        let at = bytes.windows(5).position(|w| w == b"BIAN1").unwrap();
        let mut bad = bytes.clone();
        bad[at + 4] = b'2';
        assert!(AnnotationData::from_bytes(&bad).is_err());
        assert!(AnnotationData::from_bytes(&bytes[..n - 1]).is_err());
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("nested/data.biem");
        save_dataset(&path, &small()).unwrap();
        assert_eq!(load_dataset(&path).unwrap(), small());
        assert!(matches!(load_dataset(dir.path().join("missing")), Err(Error::Io { .. })));
    }

    proptest! {
        #[test]
        fn byte_round_trip_is_exact(
            (m, l, d) in (0usize..4, 1usize..4, 1usize..4),
            seed in any::<u64>(),
        ) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let values: Vec<f32> = (0..m * l * d).map(|_| rng.gen_range(-1e6f32..1e6)).collect();
            let labels: Vec<u32> = (0..m).map(|_| rng.gen_range(0..5)).collect();
            let data = EmbeddingDataset::new(m, l, d, 5, values, labels).unwrap();
            let bytes = data.to_bytes();
            let back = EmbeddingDataset::from_bytes(&bytes).unwrap();
            prop_assert_eq!(&back, &data);
            prop_assert_eq!(back.to_bytes(), bytes);
        }
    }
}
