//! Feature matrices, label vectors and their on-disk formats.
//!
//! Features travel as FVEC files: a 16-byte little-endian header
//! (`"SPLF"`, version `1`, `n_rows`, `n_cols`) followed by `n_rows * n_cols`
//! IEEE-754 binary32 values in row-major order. Labels are plain UTF-8 text,
//! one non-negative base-10 integer per line.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

pub const FVEC_MAGIC: [u8; 4] = *b"SPLF";
pub const FVEC_VERSION: u32 = 1;
pub const FVEC_HEADER_LEN: usize = 16;

/// Minimum pairwise distance between synthetic cluster centers.
pub const SYNTH_MIN_CENTER_DIST: f64 = 6.0;

/// Number of leading coordinates synthetic cluster centers occupy.
pub const SYNTH_CENTER_SPAN: usize = 2;

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("not an FVEC file: expected magic \"SPLF\", found {found:02X?}")]
    BadMagic { found: Vec<u8> },

    #[error("unsupported FVEC version {0}")]
    UnsupportedVersion(u32),

    #[error("dimension mismatch: header declares {rows}x{cols} ({expected} bytes of payload) but payload has {found} bytes")]
    DimMismatch {
        rows: usize,
        cols: usize,
        expected: usize,
        found: usize,
    },

    #[error("non-finite value at row {row}, column {col}")]
    NonFinite { row: usize, col: usize },

    #[error("empty matrix ({rows}x{cols})")]
    Empty { rows: usize, cols: usize },

    #[error("parse error at line {line}: {token:?} is not a base-10 integer")]
    Parse { line: usize, token: String },

    #[error("negative label at line {line}")]
    NegativeLabel { line: usize },

    #[error("label {label} at index {index} is out of range for {num_classes} classes")]
    LabelOutOfRange {
        index: usize,
        label: usize,
        num_classes: usize,
    },

    #[error("label count {labels} does not match row count {rows}")]
    LabelCount { labels: usize, rows: usize },

    #[error("bad parameters: {0}")]
    BadParams(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl FormatError {
    fn io(path: &Path, source: std::io::Error) -> Self {
        FormatError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, FormatError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Domain {
    Source,
    Target,
}

impl fmt::Display for Domain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Domain::Source => f.write_str("source"),
            Domain::Target => f.write_str("target"),
        }
    }
}

/// Class ids in `0..num_classes`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelVector {
    values: Vec<usize>,
    num_classes: usize,
}

impl LabelVector {
    /// Builds a label vector whose class count is `1 + max(values)` (0 when empty).
    pub fn new(values: Vec<usize>) -> Self {
        let num_classes = values.iter().max().map_or(0, |&m| m + 1);
        LabelVector {
            values,
            num_classes,
        }
    }

    pub fn with_classes(values: Vec<usize>, num_classes: usize) -> Result<Self> {
        if let Some((index, &label)) = values.iter().enumerate().find(|(_, &v)| v >= num_classes) {
            return Err(FormatError::LabelOutOfRange {
                index,
                label,
                num_classes,
            });
        }
        Ok(LabelVector {
            values,
            num_classes,
        })
    }

    pub fn values(&self) -> &[usize] {
        &self.values
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Re-tags the vector with a larger class count (e.g. the source's `C`).
    pub fn into_classes(self, num_classes: usize) -> Result<Self> {
        LabelVector::with_classes(self.values, num_classes)
    }

    /// Number of samples carrying each class id.
    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.num_classes];
        for &v in &self.values {
            counts[v] += 1;
        }
        counts
    }
}

/// An `n x d` matrix of finite feature vectors, one sample per row.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSet {
    data: DMatrix<f32>,
    domain: Domain,
    labels: Option<LabelVector>,
}

impl FeatureSet {
    pub fn new(data: DMatrix<f32>, domain: Domain) -> Result<Self> {
        check_matrix(&data)?;
        Ok(FeatureSet {
            data,
            domain,
            labels: None,
        })
    }

    /// Builds a feature set from row-major values.
    pub fn from_rows(rows: usize, cols: usize, values: &[f32], domain: Domain) -> Result<Self> {
        if values.len() != rows * cols {
            return Err(FormatError::DimMismatch {
                rows,
                cols,
                expected: rows * cols * 4,
                found: values.len() * 4,
            });
        }
        FeatureSet::new(DMatrix::from_row_slice(rows, cols, values), domain)
    }

    pub fn with_labels(mut self, labels: LabelVector) -> Result<Self> {
        if labels.len() != self.rows() {
            return Err(FormatError::LabelCount {
                labels: labels.len(),
                rows: self.rows(),
            });
        }
        self.labels = Some(labels);
        Ok(self)
    }

    pub fn without_labels(mut self) -> Self {
        self.labels = None;
        self
    }

    pub fn data(&self) -> &DMatrix<f32> {
        &self.data
    }

    pub fn domain(&self) -> Domain {
        self.domain
    }

    pub fn labels(&self) -> Option<&LabelVector> {
        self.labels.as_ref()
    }

    pub fn rows(&self) -> usize {
        self.data.nrows()
    }

    pub fn cols(&self) -> usize {
        self.data.ncols()
    }

    /// The features widened to `f64`, the precision all numerical work runs in.
    pub fn to_f64(&self) -> DMatrix<f64> {
        self.data.map(f64::from)
    }
}

fn check_matrix(data: &DMatrix<f32>) -> Result<()> {
    if data.nrows() == 0 || data.ncols() == 0 {
        return Err(FormatError::Empty {
            rows: data.nrows(),
            cols: data.ncols(),
        });
    }
    for row in 0..data.nrows() {
        for col in 0..data.ncols() {
            if !data[(row, col)].is_finite() {
                return Err(FormatError::NonFinite { row, col });
            }
        }
    }
    Ok(())
}

/// Serializes a matrix to FVEC bytes.
pub fn encode_fvec(data: &DMatrix<f32>) -> Vec<u8> {
    let (rows, cols) = data.shape();
    let mut out = Vec::with_capacity(FVEC_HEADER_LEN + rows * cols * 4);
    out.extend_from_slice(&FVEC_MAGIC);
    out.extend_from_slice(&FVEC_VERSION.to_le_bytes());
    out.extend_from_slice(&(rows as u32).to_le_bytes());
    out.extend_from_slice(&(cols as u32).to_le_bytes());
    for row in 0..rows {
        for col in 0..cols {
            out.extend_from_slice(&data[(row, col)].to_le_bytes());
        }
    }
    out
}

/// Parses FVEC bytes. Checks the header and payload length but not finiteness.
pub fn decode_fvec(bytes: &[u8]) -> Result<DMatrix<f32>> {
    if bytes.len() < 4 || bytes[..4] != FVEC_MAGIC {
        return Err(FormatError::BadMagic {
            found: bytes[..bytes.len().min(4)].to_vec(),
        });
    }
    if bytes.len() < FVEC_HEADER_LEN {
        return Err(FormatError::DimMismatch {
            rows: 0,
            cols: 0,
            expected: FVEC_HEADER_LEN,
            found: bytes.len(),
        });
    }
    let word = |at: usize| u32::from_le_bytes(bytes[at..at + 4].try_into().unwrap());
    let version = word(4);
    if version != FVEC_VERSION {
        return Err(FormatError::UnsupportedVersion(version));
    }
    let rows = word(8) as usize;
    let cols = word(12) as usize;
    let payload = &bytes[FVEC_HEADER_LEN..];
    let expected = rows
        .checked_mul(cols)
        .and_then(|n| n.checked_mul(4))
        .unwrap_or(usize::MAX);
    if payload.len() != expected {
        return Err(FormatError::DimMismatch {
            rows,
            cols,
            expected,
            found: payload.len(),
        });
    }
    let values: Vec<f32> = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok(DMatrix::from_row_slice(rows, cols, &values))
}

/// Reads an FVEC file without rejecting non-finite entries (used by `inspect`).
pub fn read_matrix(path: impl AsRef<Path>) -> Result<DMatrix<f32>> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| FormatError::io(path, e))?;
    decode_fvec(&bytes)
}

pub fn read_fvec(path: impl AsRef<Path>, domain: Domain) -> Result<FeatureSet> {
    FeatureSet::new(read_matrix(path)?, domain)
}

pub fn write_fvec(fs: &FeatureSet, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_fvec(fs.data())).map_err(|e| FormatError::io(path, e))
}

pub fn parse_labels(text: &str) -> Result<LabelVector> {
    let mut values = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let token = raw.trim();
        let parsed: i64 = token.parse().map_err(|_| FormatError::Parse {
            line,
            token: token.to_string(),
        })?;
        if parsed < 0 {
            return Err(FormatError::NegativeLabel { line });
        }
        values.push(parsed as usize);
    }
    Ok(LabelVector::new(values))
}

pub fn read_labels(path: impl AsRef<Path>) -> Result<LabelVector> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| FormatError::io(path, e))?;
    parse_labels(&text)
}

pub fn format_labels(labels: &LabelVector) -> String {
    let mut out = String::with_capacity(labels.len() * 3);
    for v in labels.values() {
        out.push_str(&v.to_string());
        out.push('\n');
    }
    out
}

pub fn write_labels(labels: &LabelVector, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, format_labels(labels)).map_err(|e| FormatError::io(path, e))
}

/// Parameters for [`gen_synth`].
#[derive(Debug, Clone, PartialEq)]
pub struct SynthParams {
    pub seed: u64,
    pub n_per_class: usize,
    pub num_classes: usize,
    pub dim: usize,
    /// Translation of every target sample along coordinate 0.
    pub shift: f64,
    /// Rotation (radians) of every target sample in the plane of coordinates 0 and 1.
    pub rotation: f64,
}

/// A labelled source set plus a target set whose labels are kept aside for scoring.
#[derive(Debug, Clone)]
pub struct SynthPair {
    pub source: FeatureSet,
    pub target: FeatureSet,
    pub target_labels: LabelVector,
}

/// Generates a two-domain Gaussian-blob problem.
///
/// Cluster centers lie in the plane of coordinates 0 and 1, drawn uniformly
/// from a square of half-width `4.5 * sqrt(C)` and rejected until every pair
/// is at least [`SYNTH_MIN_CENTER_DIST`] apart. Every sample adds unit-variance
/// isotropic noise in all `d` coordinates. Target samples are fresh draws that
/// are then rotated in that plane and translated along coordinate 0, so the
/// domain shift acts on the discriminative directions.
pub fn gen_synth(params: &SynthParams) -> Result<SynthPair> {
    let SynthParams {
        seed,
        n_per_class,
        num_classes,
        dim,
        shift,
        rotation,
    } = *params;
    if num_classes < 2 {
        return Err(FormatError::BadParams(format!(
            "need at least 2 classes, got {num_classes}"
        )));
    }
    if dim < 2 {
        return Err(FormatError::BadParams(format!(
            "need dimension at least 2, got {dim}"
        )));
    }
    if n_per_class < 2 {
        return Err(FormatError::BadParams(format!(
            "need at least 2 samples per class, got {n_per_class}"
        )));
    }
    if !shift.is_finite() || !rotation.is_finite() {
        return Err(FormatError::BadParams(
            "shift and rotation must be finite".into(),
        ));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let centers = sample_centers(&mut rng, num_classes, SYNTH_CENTER_SPAN);

    let n = n_per_class * num_classes;
    let labels: Vec<usize> = (0..num_classes)
        .flat_map(|c| std::iter::repeat_n(c, n_per_class))
        .collect();

    let draw = |rng: &mut ChaCha8Rng| -> Vec<f64> {
        let mut values = Vec::with_capacity(n * dim);
        for &c in &labels {
            for j in 0..dim {
                let noise: f64 = rng.sample(StandardNormal);
                let center = centers[c].get(j).copied().unwrap_or(0.0);
                values.push(center + noise);
            }
        }
        values
    };
    let source_values = draw(&mut rng);
    let mut target_values = draw(&mut rng);

    let (sin, cos) = rotation.sin_cos();
    for row in target_values.chunks_exact_mut(dim) {
        let (x0, x1) = (row[0], row[1]);
        row[0] = cos * x0 - sin * x1 + shift;
        row[1] = sin * x0 + cos * x1;
    }

    let to_f32 = |v: Vec<f64>| v.into_iter().map(|x| x as f32).collect::<Vec<_>>();
    let label_vector = LabelVector::with_classes(labels, num_classes)?;
    let source = FeatureSet::from_rows(n, dim, &to_f32(source_values), Domain::Source)?
        .with_labels(label_vector.clone())?;
    let target = FeatureSet::from_rows(n, dim, &to_f32(target_values), Domain::Target)?;
    Ok(SynthPair {
        source,
        target,
        target_labels: label_vector,
    })
}

/// Rejection-samples `count` centers in `span` dimensions from a cube of
/// half-width `4.5 * sqrt(count)`. The cube grows by a quarter each time a
/// batch of attempts is exhausted, so placement always terminates.
fn sample_centers(rng: &mut ChaCha8Rng, count: usize, span: usize) -> Vec<Vec<f64>> {
    const ATTEMPTS_PER_WIDTH: usize = 10_000;
    let mut half_width = 4.5 * (count as f64).sqrt();
    loop {
        let mut centers: Vec<Vec<f64>> = Vec::with_capacity(count);
        for _ in 0..ATTEMPTS_PER_WIDTH {
            let candidate: Vec<f64> = (0..span)
                .map(|_| rng.random_range(-half_width..=half_width))
                .collect();
            let far_enough = centers.iter().all(|c| {
                let sq: f64 = c.iter().zip(&candidate).map(|(a, b)| (a - b).powi(2)).sum();
                sq.sqrt() >= SYNTH_MIN_CENTER_DIST
            });
            if far_enough {
                centers.push(candidate);
                if centers.len() == count {
                    return centers;
                }
            }
        }
        half_width *= 1.25;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    const ONE_BY_TWO: [u8; 24] = [
        0x53, 0x50, 0x4C, 0x46, 0x01, 0x00, 0x00, 0x00, 0x01, 0x00, 0x00, 0x00, 0x02, 0x00, 0x00,
        0x00, 0x00, 0x00, 0x80, 0x3F, 0x00, 0x00, 0x00, 0x40,
    ];

    #[test]
    fn decodes_documented_layout() {
        let m = decode_fvec(&ONE_BY_TWO).unwrap();
        assert_eq!(m.shape(), (1, 2));
        assert_eq!(m[(0, 0)], 1.0);
        assert_eq!(m[(0, 1)], 2.0);
        assert_eq!(encode_fvec(&m), ONE_BY_TWO);
    }

    #[test]
    fn encodes_zero_and_identity() {
        let zero = encode_fvec(&DMatrix::from_element(1, 1, 0.0f32));
        assert_eq!(zero.len(), 20);
        assert_eq!(&zero[16..], &[0, 0, 0, 0]);

        let eye = encode_fvec(&DMatrix::<f32>::identity(2, 2));
        assert_eq!(&eye[8..16], &[2, 0, 0, 0, 2, 0, 0, 0]);
        let floats: Vec<f32> = eye[16..]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        assert_eq!(floats, vec![1.0, 0.0, 0.0, 1.0]);
    }

    #[test]
    fn rejects_truncated_payload() {
        let mut bytes = encode_fvec(&DMatrix::from_element(4, 4, 1.5f32));
        bytes.truncate(FVEC_HEADER_LEN + 15 * 4);
        assert!(matches!(
            decode_fvec(&bytes),
            Err(FormatError::DimMismatch {
                rows: 4,
                cols: 4,
                expected: 64,
                found: 60
            })
        ));
    }

    #[test]
    fn rejects_bad_magic_and_version() {
        assert!(matches!(
            decode_fvec(b"NOPE\x01\0\0\0\x01\0\0\0\x01\0\0\0\0\0\0\0"),
            Err(FormatError::BadMagic { .. })
        ));
        assert!(matches!(
            decode_fvec(b"SP"),
            Err(FormatError::BadMagic { .. })
        ));
        let mut bytes = ONE_BY_TWO.to_vec();
        bytes[4] = 2;
        assert!(matches!(
            decode_fvec(&bytes),
            Err(FormatError::UnsupportedVersion(2))
        ));
    }

    #[test]
    fn rejects_non_finite_on_read() {
        let mut bytes = ONE_BY_TWO.to_vec();
        bytes[20..24].copy_from_slice(&f32::NAN.to_le_bytes());
        let m = decode_fvec(&bytes).unwrap();
        assert!(matches!(
            FeatureSet::new(m, Domain::Source),
            Err(FormatError::NonFinite { row: 0, col: 1 })
        ));
    }

    #[test]
    fn rejects_empty_feature_set() {
        let empty = DMatrix::<f32>::zeros(0, 3);
        assert!(matches!(
            FeatureSet::new(empty, Domain::Source),
            Err(FormatError::Empty { rows: 0, cols: 3 })
        ));
    }

    #[test]
    fn label_parsing() {
        let labels = parse_labels("0\n2\n1\n").unwrap();
        assert_eq!(labels.values(), &[0, 2, 1]);
        assert_eq!(labels.num_classes(), 3);

        let empty = parse_labels("").unwrap();
        assert!(empty.is_empty());
        let fs = FeatureSet::from_rows(1, 1, &[0.0], Domain::Target).unwrap();
        assert!(matches!(
            fs.with_labels(empty),
            Err(FormatError::LabelCount { labels: 0, rows: 1 })
        ));

        match parse_labels("0\nx\n") {
            Err(FormatError::Parse { line, token }) => {
                assert_eq!(line, 2);
                assert_eq!(token, "x");
            }
            other => panic!("expected parse error, got {other:?}"),
        }
        assert!(matches!(
            parse_labels("1\n-3\n"),
            Err(FormatError::NegativeLabel { line: 2 })
        ));
    }

    #[test]
    fn label_class_override() {
        let labels = LabelVector::new(vec![0, 1]).into_classes(4).unwrap();
        assert_eq!(labels.num_classes(), 4);
        assert_eq!(labels.class_counts(), vec![1, 1, 0, 0]);
        assert!(matches!(
            LabelVector::new(vec![0, 5]).into_classes(3),
            Err(FormatError::LabelOutOfRange {
                index: 1,
                label: 5,
                ..
            })
        ));
    }

    #[test]
    fn synth_is_deterministic() {
        let params = SynthParams {
            seed: 3,
            n_per_class: 4,
            num_classes: 3,
            dim: 5,
            shift: 1.0,
            rotation: 0.2,
        };
        let a = gen_synth(&params).unwrap();
        let b = gen_synth(&params).unwrap();
        assert_eq!(encode_fvec(a.source.data()), encode_fvec(b.source.data()));
        assert_eq!(encode_fvec(a.target.data()), encode_fvec(b.target.data()));
        assert_eq!(a.target_labels, b.target_labels);
        assert_eq!(a.source.rows(), 12);
        assert!(a.target.labels().is_none());
    }

    #[test]
    fn synth_rejects_bad_params() {
        let base = SynthParams {
            seed: 0,
            n_per_class: 5,
            num_classes: 3,
            dim: 4,
            shift: 0.0,
            rotation: 0.0,
        };
        for bad in [
            SynthParams {
                num_classes: 1,
                ..base.clone()
            },
            SynthParams {
                dim: 1,
                ..base.clone()
            },
            SynthParams {
                n_per_class: 1,
                ..base.clone()
            },
            SynthParams {
                shift: f64::NAN,
                ..base.clone()
            },
        ] {
            assert!(matches!(gen_synth(&bad), Err(FormatError::BadParams(_))));
        }
    }

    #[test]
    fn synth_centers_are_separated() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for span in [2, 5, 12] {
            let centers = sample_centers(&mut rng, 12, span);
            assert_eq!(centers.len(), 12);
            for (i, a) in centers.iter().enumerate() {
                assert_eq!(a.len(), span);
                for b in &centers[i + 1..] {
                    let sq: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum();
                    assert!(sq.sqrt() >= SYNTH_MIN_CENTER_DIST);
                }
            }
        }
    }

    #[test]
    fn synth_zero_shift_target_matches_source_distribution() {
        let pair = gen_synth(&SynthParams {
            seed: 9,
            n_per_class: 400,
            num_classes: 2,
            dim: 3,
            shift: 0.0,
            rotation: 0.0,
        })
        .unwrap();
        let (s, t) = (pair.source.to_f64(), pair.target.to_f64());
        for class in 0..2 {
            let rows = class * 400..(class + 1) * 400;
            for col in 0..3 {
                let ms: f64 = rows.clone().map(|r| s[(r, col)]).sum::<f64>() / 400.0;
                let mt: f64 = rows.clone().map(|r| t[(r, col)]).sum::<f64>() / 400.0;
                // means of two independent N(mu, 1/400) estimates differ by ~0.07
                assert!(
                    (ms - mt).abs() < 0.3,
                    "class {class} col {col}: {ms} vs {mt}"
                );
            }
        }
    }

    proptest! {
        #[test]
        fn fvec_round_trip_is_bit_exact(
            rows in 1usize..8,
            cols in 1usize..8,
            seed in any::<u64>(),
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let values: Vec<f32> = (0..rows * cols)
                .map(|_| f32::from_bits(rng.random::<u32>()))
                .collect();
            let m = DMatrix::from_row_slice(rows, cols, &values);
            let bytes = encode_fvec(&m);
            let back = decode_fvec(&bytes).unwrap();
            let back_bits: Vec<u32> = back.transpose().iter().map(|x| x.to_bits()).collect();
            let bits: Vec<u32> = values.iter().map(|x| x.to_bits()).collect();
            prop_assert_eq!(back_bits, bits);
            prop_assert_eq!(encode_fvec(&back), bytes);
        }

        #[test]
        fn label_round_trip(values in proptest::collection::vec(0usize..50, 0..40)) {
            let labels = LabelVector::new(values.clone());
            let back = parse_labels(&format_labels(&labels)).unwrap();
            prop_assert_eq!(back.values(), &values[..]);
        }
    }
}
