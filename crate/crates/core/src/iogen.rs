//! Matrix CSV I/O, sample correlation estimation and seeded synthetic
//! correlation matrices with a sparse precision structure.
//!
//! Matrix files are headerless, comma separated, one row per line. Values are
//! written with 17 significant digits so a write/read cycle is lossless.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::scalar::Scalar;
use crate::symcore::{cholesky_lower, spd_inverse, validate_corr, CorrMatrix, SpdMatrix};

/// Identity of the generator behind [`generate_synthetic`].
pub const RNG_ALGORITHM: &str = "ChaCha8Rng (rand_chacha 0.9, seed_from_u64)";

fn io_err(path: &Path, e: impl std::fmt::Display) -> Error {
    Error::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    }
}

/// Parses a headerless CSV of reals into a square matrix, without any
/// further validation.
pub fn read_raw_matrix<T: Scalar>(path: impl AsRef<Path>) -> Result<Matrix<T>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| io_err(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(file);

    let mut rows: Vec<Vec<T>> = Vec::new();
    for (r, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::Parse {
            row: r + 1,
            col: 0,
            message: e.to_string(),
        })?;
        let mut row = Vec::with_capacity(record.len());
        for (c, tok) in record.iter().enumerate() {
            let v = tok.parse::<T>().map_err(|_| Error::Parse {
                row: r + 1,
                col: c + 1,
                message: format!("cannot parse {tok:?} as a real number"),
            })?;
            if !v.is_finite() {
                return Err(Error::Parse {
                    row: r + 1,
                    col: c + 1,
                    message: format!("non-finite value {tok:?}"),
                });
            }
            row.push(v);
        }
        if let Some(first) = rows.first() {
            if row.len() != first.len() {
                return Err(Error::Parse {
                    row: r + 1,
                    col: row.len().min(first.len()) + 1,
                    message: format!("expected {} values, found {}", first.len(), row.len()),
                });
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::Parse {
            row: 1,
            col: 1,
            message: "empty matrix file".into(),
        });
    }
    Matrix::from_rows(&rows)
}

/// Reads and validates a correlation matrix. With `normalize`, any SPD
/// covariance is rescaled to unit diagonal; without it a non-unit diagonal is
/// rejected.
pub fn read_matrix<T: Scalar>(path: impl AsRef<Path>, normalize: bool) -> Result<CorrMatrix<T>> {
    let m = read_raw_matrix(path)?;
    if normalize {
        Ok(SpdMatrix::new(m)?.normalized())
    } else {
        validate_corr(m)
    }
}

fn write_rows<T: Scalar>(path: &Path, header: Option<&str>, m: &Matrix<T>) -> Result<()> {
    let file = File::create(path).map_err(|e| io_err(path, e))?;
    let mut w = BufWriter::new(file);
    if let Some(h) = header {
        writeln!(w, "{h}").map_err(|e| io_err(path, e))?;
    }
    let mut line = String::new();
    for i in 0..m.nrows() {
        line.clear();
        for (j, x) in m.row(i).iter().enumerate() {
            if j > 0 {
                line.push(',');
            }
            line.push_str(&format_real(*x));
        }
        writeln!(w, "{line}").map_err(|e| io_err(path, e))?;
    }
    w.flush().map_err(|e| io_err(path, e))
}

/// 17 significant digits, scientific notation.
pub fn format_real<T: Scalar>(x: T) -> String {
    format!("{:.16e}", x.as_f64())
}

pub fn write_matrix<T: Scalar>(m: &Matrix<T>, path: impl AsRef<Path>) -> Result<()> {
    write_rows(path.as_ref(), None, m)
}

/// Writes `stage,kl_nats` rows.
pub fn write_trace<T: Scalar>(trace: &[(usize, T)], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| io_err(path, e))?;
    let mut w = BufWriter::new(file);
    writeln!(w, "stage,kl_nats").map_err(|e| io_err(path, e))?;
    for &(stage, kl) in trace {
        writeln!(w, "{stage},{}", format_real(kl)).map_err(|e| io_err(path, e))?;
    }
    w.flush().map_err(|e| io_err(path, e))
}

/// Reads a trace written by [`write_trace`].
pub fn read_trace<T: Scalar>(path: impl AsRef<Path>) -> Result<Vec<(usize, T)>> {
    let path = path.as_ref();
    let mut reader = csv::Reader::from_path(path).map_err(|e| io_err(path, e))?;
    let mut out = Vec::new();
    for (r, rec) in reader.records().enumerate() {
        let bad = |col: usize, message: String| Error::Parse {
            row: r + 2,
            col,
            message,
        };
        let rec = rec.map_err(|e| bad(0, e.to_string()))?;
        let stage = rec
            .get(0)
            .and_then(|s| s.trim().parse().ok())
            .ok_or_else(|| bad(1, "bad stage".into()))?;
        let kl = rec
            .get(1)
            .and_then(|s| s.trim().parse().ok())
            .ok_or_else(|| bad(2, "bad KL value".into()))?;
        out.push((stage, kl));
    }
    Ok(out)
}

/// `|m^-1|` elementwise, for plotting the sparsity of the precision matrix.
pub fn sparsity_pattern<T: Scalar>(m: &Matrix<T>) -> Result<Matrix<T>> {
    Ok(spd_inverse(m)?.map(|x| x.abs()))
}

pub fn sparsity_dump<T: Scalar>(m: &Matrix<T>, path: impl AsRef<Path>) -> Result<()> {
    write_matrix(&sparsity_pattern(m)?, path)
}

/// Sample correlation of an `m x n` table whose columns are variables
/// (covariance with divisor `m - 1`, rescaled to unit diagonal).
pub fn empirical_correlation<T: Scalar>(samples: &Matrix<T>) -> Result<CorrMatrix<T>> {
    let (m, n) = (samples.nrows(), samples.ncols());
    if m < 2 {
        return Err(Error::InvalidArgument(format!(
            "need at least two samples, got {m}"
        )));
    }
    samples.all_finite()?;
    let count = T::from_usize(m).expect("sample count representable");
    let means: Vec<T> = (0..n)
        .map(|j| (0..m).map(|i| samples[(i, j)]).sum::<T>() / count)
        .collect();
    let mut cov = Matrix::<T>::zeros(n, n);
    for i in 0..m {
        let row = samples.row(i);
        for a in 0..n {
            let da = row[a] - means[a];
            for b in a..n {
                cov[(a, b)] += da * (row[b] - means[b]);
            }
        }
    }
    let denom = count - T::one();
    let cov = Matrix::<T>::from_fn(n, n, |a, b| {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        cov[(lo, hi)] / denom
    });
    for (i, v) in cov.diag().into_iter().enumerate() {
        if !(v > T::zero()) {
            return Err(Error::NotPositiveDefinite {
                pivot: i,
                value: v.as_f64(),
            });
        }
    }
    let corr = SpdMatrix::from_symmetrizing(&cov)?.normalized();
    // pivots at roundoff level mean the sample correlation is singular
    let floor = T::epsilon() * T::from_usize(n.max(1)).expect("n representable") * T::lit(16.0);
    let l = cholesky_lower(corr.as_matrix())?;
    for i in 0..n {
        let pivot = l[(i, i)] * l[(i, i)];
        if pivot <= floor {
            return Err(Error::NotPositiveDefinite {
                pivot: i,
                value: pivot.as_f64(),
            });
        }
    }
    Ok(corr)
}

/// Parameters of a synthetic instance.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SyntheticSpec {
    pub n: usize,
    /// Probability that a pair is an edge of the precision graph.
    pub density: f64,
    pub seed: u64,
}

impl SyntheticSpec {
    pub fn new(n: usize, density: f64, seed: u64) -> Result<Self> {
        let spec = Self { n, density, seed };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(Error::InvalidArgument(format!(
                "synthetic instances need n >= 2, got {}",
                self.n
            )));
        }
        // density 0 is accepted and yields the identity
        if !(0.0..=1.0).contains(&self.density) {
            return Err(Error::InvalidArgument(format!(
                "density must lie in [0, 1], got {}",
                self.density
            )));
        }
        Ok(())
    }
}

/// Random correlation matrix whose inverse has an Erdos-Renyi sparsity
/// pattern. Each present off-diagonal precision entry is uniform in
/// `[-1, 1]`; each diagonal entry is the row's absolute sum plus one, which
/// makes the precision strictly diagonally dominant. The precision is then
/// inverted and rescaled to unit diagonal.
pub fn generate_synthetic<T: Scalar>(spec: &SyntheticSpec) -> Result<CorrMatrix<T>> {
    let precision = synthetic_precision(spec)?;
    let cov = spd_inverse(&precision)?;
    Ok(SpdMatrix::from_symmetrizing(&cov)?.normalized())
}

/// The diagonally dominant precision matrix behind [`generate_synthetic`].
pub fn synthetic_precision<T: Scalar>(spec: &SyntheticSpec) -> Result<Matrix<T>> {
    spec.validate()?;
    let n = spec.n;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut k = Matrix::<f64>::zeros(n, n);
    for i in 0..n {
        for j in (i + 1)..n {
            let present = rng.random::<f64>() < spec.density;
            if present {
                let w = rng.random_range(-1.0..=1.0);
                k[(i, j)] = w;
                k[(j, i)] = w;
            }
        }
    }
    for i in 0..n {
        let row_sum: f64 = k.row(i).iter().map(|x| x.abs()).sum();
        k[(i, i)] = row_sum + 1.0;
    }
    Ok(k.cast())
}

/// Fraction of off-diagonal entries of `m^-1` with magnitude above
/// `threshold`.
pub fn precision_nonzero_fraction<T: Scalar>(m: &Matrix<T>, threshold: T) -> Result<f64> {
    let inv = spd_inverse(m)?;
    let n = inv.nrows();
    if n < 2 {
        return Ok(0.0);
    }
    let mut count = 0usize;
    for i in 0..n {
        for j in 0..n {
            if i != j && inv[(i, j)].abs() > threshold {
                count += 1;
            }
        }
    }
    Ok(count as f64 / (n * (n - 1)) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write_text(dir: &tempfile::TempDir, name: &str, text: &str) -> std::path::PathBuf {
        let p = dir.path().join(name);
        let mut f = File::create(&p).unwrap();
        f.write_all(text.as_bytes()).unwrap();
        p
    }

    #[test]
    fn reads_identity() {
        let dir = tempfile::tempdir().unwrap();
        let p = write_text(&dir, "id.csv", "1,0,0\n0,1,0\n0,0,1\n");
        let m: CorrMatrix<f64> = read_matrix(&p, false).unwrap();
        assert_eq!(m.as_matrix(), &Matrix::identity(3));
    }

    #[test]
    fn ragged_rows_report_location() {
        let dir = tempfile::tempdir().unwrap();
        let p = write_text(&dir, "bad.csv", "1,0,0\n0,1\n0,0,1\n");
        match read_matrix::<f64>(&p, false) {
            Err(Error::Parse { row, .. }) => assert_eq!(row, 2),
            other => panic!("unexpected {other:?}"),
        }
        let p = write_text(&dir, "tok.csv", "1,0\n0,abc\n");
        match read_matrix::<f64>(&p, false) {
            Err(Error::Parse { row, col, .. }) => assert_eq!((row, col), (2, 2)),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn missing_file_is_io_error() {
        assert!(matches!(
            read_matrix::<f64>("/nonexistent/matrix.csv", false),
            Err(Error::Io { .. })
        ));
    }

    #[test]
    fn normalize_option() {
        let dir = tempfile::tempdir().unwrap();
        let p = write_text(&dir, "cov.csv", "4,1\n1,1\n");
        assert!(matches!(
            read_matrix::<f64>(&p, false),
            Err(Error::NotUnitDiagonal { .. })
        ));
        let m = read_matrix::<f64>(&p, true).unwrap();
        assert!((m[(0, 1)] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn sparsity_of_identity() {
        let s = sparsity_pattern(&Matrix::<f64>::identity(4)).unwrap();
        assert_eq!(s, Matrix::identity(4));
    }

    #[test]
    fn two_identical_columns_not_pd() {
        let samples = Matrix::<f64>::from_fn(50, 3, |i, j| {
            let x = ((i * 7919) % 101) as f64;
            if j == 2 {
                ((i * 31) % 17) as f64
            } else {
                x
            }
        });
        assert!(matches!(
            empirical_correlation(&samples),
            Err(Error::NotPositiveDefinite { .. })
        ));
    }

    #[test]
    fn zero_density_gives_identity() {
        let spec = SyntheticSpec::new(6, 0.0, 1).unwrap();
        let m: CorrMatrix<f64> = generate_synthetic(&spec).unwrap();
        assert_eq!(m.as_matrix(), &Matrix::identity(6));
    }

    #[test]
    fn synthetic_is_deterministic() {
        let spec = SyntheticSpec::new(30, 0.5, 7).unwrap();
        let a: CorrMatrix<f64> = generate_synthetic(&spec).unwrap();
        let b: CorrMatrix<f64> = generate_synthetic(&spec).unwrap();
        assert_eq!(a, b);
        let c: CorrMatrix<f64> =
            generate_synthetic(&SyntheticSpec::new(30, 0.5, 8).unwrap()).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn synthetic_spec_validation() {
        assert!(SyntheticSpec::new(1, 0.5, 0).is_err());
        assert!(SyntheticSpec::new(5, 1.5, 0).is_err());
        assert!(SyntheticSpec::new(5, -0.1, 0).is_err());
        assert!(SyntheticSpec::new(5, 1.0, 0).is_ok());
    }
}
