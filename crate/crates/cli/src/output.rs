//! CSV file formats written by the CLI.
//!
//! Floats use Rust's shortest round-trip representation, so files are
//! lossless and byte-identical across runs with the same inputs.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use anyhow::{Context, bail, ensure};
use koopman_core::spectral::C64;
use koopman_core::{Dictionary, KoopmanModel};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::experiment::{Diagnostic, Method, RawError, SpectrumResult, SummaryRow};

pub const SUMMARY_HEADER: &str = "checkpoint_or_n,method,mean,std,count";

fn create(path: &Path) -> anyhow::Result<BufWriter<File>> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    Ok(BufWriter::new(
        File::create(path).with_context(|| format!("creating {}", path.display()))?,
    ))
}

pub fn write_summary<W: Write>(rows: &[SummaryRow], mut out: W) -> std::io::Result<()> {
    writeln!(out, "{SUMMARY_HEADER}")?;
    for r in rows {
        writeln!(out, "{},{},{:e},{:e},{}", r.key, r.method.name(), r.mean, r.std, r.count)?;
    }
    out.flush()
}

pub fn save_summary(path: &Path, rows: &[SummaryRow]) -> anyhow::Result<()> {
    Ok(write_summary(rows, create(path)?)?)
}

fn parse_method(s: &str) -> anyhow::Result<Method> {
    Method::ALL
        .into_iter()
        .find(|m| m.name() == s)
        .with_context(|| format!("unknown method {s:?}"))
}

pub fn read_summary<R: BufRead>(input: R) -> anyhow::Result<Vec<SummaryRow>> {
    let mut lines = input.lines();
    let header = lines.next().context("empty summary file")??;
    ensure!(header == SUMMARY_HEADER, "unexpected summary header {header:?}");
    let mut rows = Vec::new();
    for line in lines {
        let line = line?;
        let f: Vec<&str> = line.split(',').collect();
        ensure!(f.len() == 5, "malformed summary row {line:?}");
        rows.push(SummaryRow {
            key: f[0].parse()?,
            method: parse_method(f[1])?,
            mean: f[2].parse()?,
            std: f[3].parse()?,
            count: f[4].parse()?,
        });
    }
    Ok(rows)
}

pub fn load_summary(path: &Path) -> anyhow::Result<Vec<SummaryRow>> {
    read_summary(BufReader::new(File::open(path).with_context(|| format!("opening {}", path.display()))?))
}

pub const RAW_HEADER: &str = "checkpoint_or_n,method,trajectory,step,error";

pub fn save_raw(path: &Path, rows: &[RawError]) -> anyhow::Result<()> {
    let mut out = create(path)?;
    writeln!(out, "{RAW_HEADER}")?;
    for r in rows {
        writeln!(out, "{},{},{},{},{:e}", r.key, r.method.name(), r.trajectory, r.step, r.error)?;
    }
    out.flush()?;
    Ok(())
}

pub fn load_raw(path: &Path) -> anyhow::Result<Vec<RawError>> {
    let input = BufReader::new(File::open(path).with_context(|| format!("opening {}", path.display()))?);
    let mut lines = input.lines();
    let header = lines.next().context("empty raw error file")??;
    ensure!(header == RAW_HEADER, "unexpected raw error header {header:?}");
    lines
        .map(|line| {
            let line = line?;
            let f: Vec<&str> = line.split(',').collect();
            ensure!(f.len() == 5, "malformed raw error row {line:?}");
            Ok(RawError {
                key: f[0].parse()?,
                method: parse_method(f[1])?,
                trajectory: f[2].parse()?,
                step: f[3].parse()?,
                error: f[4].parse()?,
            })
        })
        .collect()
}

pub fn save_diagnostics(path: &Path, rows: &[Diagnostic]) -> anyhow::Result<()> {
    let mut out = create(path)?;
    writeln!(out, "checkpoint,method,predictor,nonfinite,note")?;
    for d in rows {
        let clean = |s: &str| s.replace([',', '\n'], ";");
        writeln!(
            out,
            "{},{},{},{},{}",
            d.key,
            d.method.name(),
            clean(&d.predictor),
            d.nonfinite,
            clean(&d.note)
        )?;
    }
    out.flush()?;
    Ok(())
}

pub fn save_eigenvalues(path: &Path, spectra: &[SpectrumResult]) -> anyhow::Result<()> {
    let mut out = create(path)?;
    writeln!(out, "method,pairs,re,im,abs")?;
    for s in spectra {
        for z in &s.eigenvalues {
            writeln!(out, "{},{},{:e},{:e},{:e}", s.method.name(), s.pairs, z.re, z.im, z.norm())?;
        }
    }
    out.flush()?;
    Ok(())
}

/// Plain `re,im,abs` listing of one spectrum.
pub fn write_spectrum<W: Write>(eigenvalues: &[C64], mut out: W) -> std::io::Result<()> {
    writeln!(out, "re,im,abs")?;
    for z in eigenvalues {
        writeln!(out, "{:e},{:e},{:e}", z.re, z.im, z.norm())?;
    }
    out.flush()
}

pub fn save_counts(path: &Path, threshold: f64, rows: &[(Method, usize, f64)]) -> anyhow::Result<()> {
    let mut out = create(path)?;
    writeln!(out, "method,threshold,mean_count_above,total")?;
    for (m, total, count) in rows {
        writeln!(out, "{},{:e},{:e},{}", m.name(), threshold, count, total)?;
    }
    out.flush()?;
    Ok(())
}

/// Dictionary description stored in a matrix file header.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixMeta {
    pub kind: String,
    pub var_count: usize,
    pub max_degree: u32,
    pub size: usize,
    pub ordering: String,
    pub exponents: Vec<Vec<u32>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pairs: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma: Option<f64>,
}

impl MatrixMeta {
    pub fn new(kind: &str, dict: &Dictionary) -> Self {
        Self {
            kind: kind.into(),
            var_count: dict.var_count(),
            max_degree: dict.max_degree(),
            size: dict.len(),
            ordering: "graded, descending lexicographic within a degree".into(),
            exponents: dict.entries().iter().map(|m| m.exponents().to_vec()).collect(),
            pairs: None,
            sigma: None,
        }
    }
}

/// Dense matrix as CSV rows, preceded by one `# {json}` metadata line.
pub fn write_matrix<W: Write>(meta: &MatrixMeta, matrix: &DMatrix<f64>, mut out: W) -> anyhow::Result<()> {
    writeln!(out, "# {}", serde_json::to_string(meta)?)?;
    for i in 0..matrix.nrows() {
        let row: Vec<String> = matrix.row(i).iter().map(|v| format!("{v:e}")).collect();
        writeln!(out, "{}", row.join(","))?;
    }
    out.flush()?;
    Ok(())
}

pub fn save_matrix(path: &Path, meta: &MatrixMeta, matrix: &DMatrix<f64>) -> anyhow::Result<()> {
    write_matrix(meta, matrix, create(path)?)
}

pub fn read_matrix<R: BufRead>(input: R) -> anyhow::Result<(MatrixMeta, KoopmanModel)> {
    let mut lines = input.lines();
    let first = lines.next().context("empty matrix file")??;
    let Some(json) = first.strip_prefix("# ") else {
        bail!("matrix file must start with a '# {{...}}' metadata line");
    };
    let meta: MatrixMeta = serde_json::from_str(json).context("parsing matrix metadata")?;
    let mut data = Vec::with_capacity(meta.size * meta.size);
    let mut rows = 0;
    for line in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let before = data.len();
        for v in line.split(',') {
            data.push(v.trim().parse::<f64>().with_context(|| format!("bad matrix entry {v:?}"))?);
        }
        ensure!(data.len() - before == meta.size, "matrix row {rows} has the wrong length");
        rows += 1;
    }
    ensure!(rows == meta.size, "expected {} matrix rows, found {rows}", meta.size);
    let dict = Dictionary::new(meta.var_count, meta.max_degree)?;
    let stored: Vec<Vec<u32>> = dict.entries().iter().map(|m| m.exponents().to_vec()).collect();
    ensure!(stored == meta.exponents, "dictionary ordering in the file does not match this build");
    let model = KoopmanModel::new(dict, DMatrix::from_row_slice(meta.size, meta.size, &data))?;
    Ok((meta, model))
}

pub fn load_matrix(path: &Path) -> anyhow::Result<(MatrixMeta, KoopmanModel)> {
    read_matrix(BufReader::new(File::open(path).with_context(|| format!("opening {}", path.display()))?))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn summary_round_trip() {
        let rows = vec![
            SummaryRow {
                key: 500,
                method: Method::Proposed,
                mean: 0.1 + 0.2,
                std: 1e-17,
                count: 100_000,
            },
            SummaryRow {
                key: 500,
                method: Method::Edmd,
                mean: f64::NAN,
                std: f64::INFINITY,
                count: 3,
            },
        ];
        let mut buf = Vec::new();
        write_summary(&rows, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("checkpoint_or_n,method,mean,std,count\n500,proposed,"));
        let back = read_summary(&buf[..]).unwrap();
        assert_eq!(back[0], rows[0]);
        assert!(back[1].mean.is_nan() && back[1].std.is_infinite());
    }

    #[test]
    fn matrix_round_trip() {
        let dict = Dictionary::new(2, 2).unwrap();
        let m = DMatrix::from_fn(6, 6, |i, j| (i as f64 + 1.0) / (j as f64 + 3.0));
        let mut meta = MatrixMeta::new("seed", &dict);
        meta.sigma = Some(1.0);
        let mut buf = Vec::new();
        write_matrix(&meta, &m, &mut buf).unwrap();
        let (meta2, model) = read_matrix(&buf[..]).unwrap();
        assert_eq!(meta2, meta);
        assert_eq!(model.matrix(), &m);
    }

    #[test]
    fn matrix_rejects_malformed_files() {
        assert!(read_matrix(&b"1,2\n3,4\n"[..]).is_err());
        let dict = Dictionary::new(1, 1).unwrap();
        let mut buf = Vec::new();
        write_matrix(&MatrixMeta::new("x", &dict), &DMatrix::identity(2, 2), &mut buf).unwrap();
        buf.extend_from_slice(b"1,2\n");
        assert!(read_matrix(&buf[..]).is_err());
    }

    #[test]
    fn spectrum_listing() {
        let mut buf = Vec::new();
        write_spectrum(&[C64::new(3.0, -4.0)], &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "re,im,abs\n3e0,-4e0,5e0\n");
    }
}
