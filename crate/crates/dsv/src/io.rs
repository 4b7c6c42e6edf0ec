//! Run directories, embedding files and AUC fixture tables.
//!
//! A run directory holds a `manifest.txt` of flat `key = value` lines:
//!
//! ```text
//! version = 1
//! task_id = bottle
//! dim = 16
//! hp_grid = 0.03125, 0.0625
//! trn = trn.csv
//! test = test.csv
//! labels = labels.txt
//! aug[0.03125] = aug_0.03125.csv
//! test[0.03125] = test_0.03125.csv
//! scores[0.0625] = scores_0.0625.txt
//! ```
//!
//! `labels`, per-candidate `trn[..]`, `test[..]` and `scores[..]` entries are
//! optional. Embedding files are comma-separated decimal rows, or the raw
//! little-endian container described at [`read_binary`] when the file name
//! ends in `.f64`.

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{DsvError, Result};
use crate::geometry::EmbeddingSet;
use crate::harness::metrics::EvaluationTable;
use crate::run::{CandidateModel, SelectionRun};

pub const MANIFEST: &str = "manifest.txt";
pub const MANIFEST_VERSION: u32 = 1;
pub const BINARY_MAGIC: &[u8; 4] = b"DSVF";

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> DsvError + '_ {
    move |source| DsvError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn parse_err(path: &Path, line: usize, message: impl Into<String>) -> DsvError {
    DsvError::Parse {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

/// Shortest decimal text that reads back to the same `f64`.
pub fn format_f64(v: f64) -> String {
    format!("{v:?}")
}

fn parse_f64(s: &str, path: &Path, line: usize) -> Result<f64> {
    let v: f64 = s
        .trim()
        .parse()
        .map_err(|_| parse_err(path, line, format!("'{}' is not a number", s.trim())))?;
    if !v.is_finite() {
        return Err(parse_err(path, line, format!("non-finite value '{}'", s.trim())));
    }
    Ok(v)
}

// ---------------------------------------------------------------------------
// Embedding files

pub fn read_csv(path: &Path, dim: Option<usize>) -> Result<EmbeddingSet> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let mut data = Vec::new();
    let mut width = dim;
    for (i, line) in text.lines().enumerate() {
        let lineno = i + 1;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let start = data.len();
        for field in line.split(',') {
            data.push(parse_f64(field, path, lineno)?);
        }
        let n = data.len() - start;
        match width {
            Some(w) if w != n => {
                return Err(parse_err(path, lineno, format!("row has {n} values, expected {w}")));
            }
            Some(_) => {}
            None => width = Some(n),
        }
    }
    let Some(w) = width.filter(|_| !data.is_empty()) else {
        return Err(DsvError::Validation {
            path: path.to_path_buf(),
            message: "no vectors".into(),
        });
    };
    EmbeddingSet::from_flat(data, w).map_err(|e| DsvError::Validation {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

pub fn write_csv(path: &Path, set: &EmbeddingSet) -> Result<()> {
    let mut out = String::with_capacity(set.as_flat().len() * 24);
    for row in set.rows() {
        let cells: Vec<String> = row.iter().map(|v| format!("{v:.16e}")).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    fs::write(path, out).map_err(io_err(path))
}

/// Raw container: `DSVF`, `u32` dimension, `u64` vector count (16-byte
/// header, little-endian), then `count·dim` little-endian `f64` values.
pub fn read_binary(path: &Path, dim: Option<usize>) -> Result<EmbeddingSet> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    let invalid = |m: String| DsvError::Validation {
        path: path.to_path_buf(),
        message: m,
    };
    if bytes.len() < 16 || &bytes[..4] != BINARY_MAGIC {
        return Err(invalid("missing DSVF header".into()));
    }
    let d = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes")) as usize;
    let n = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes")) as usize;
    if let Some(expected) = dim {
        if d != expected {
            return Err(invalid(format!("dimension {d}, expected {expected}")));
        }
    }
    let body = &bytes[16..];
    if d == 0 || n == 0 || body.len() != n * d * 8 {
        return Err(invalid(format!(
            "header declares {n} vectors of dimension {d} but the body has {} bytes",
            body.len()
        )));
    }
    let data: Vec<f64> = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    EmbeddingSet::from_flat(data, d).map_err(|e| invalid(e.to_string()))
}

pub fn write_binary(path: &Path, set: &EmbeddingSet) -> Result<()> {
    let mut out = Vec::with_capacity(16 + set.as_flat().len() * 8);
    out.extend_from_slice(BINARY_MAGIC);
    out.extend_from_slice(&(set.dim() as u32).to_le_bytes());
    out.extend_from_slice(&(set.len() as u64).to_le_bytes());
    for v in set.as_flat() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(path, out).map_err(io_err(path))
}

fn is_binary(path: &Path) -> bool {
    path.extension().is_some_and(|e| e == "f64")
}

pub fn read_embeddings(path: &Path, dim: Option<usize>) -> Result<EmbeddingSet> {
    if is_binary(path) {
        read_binary(path, dim)
    } else {
        read_csv(path, dim)
    }
}

pub fn write_embeddings(path: &Path, set: &EmbeddingSet) -> Result<()> {
    if is_binary(path) {
        write_binary(path, set)
    } else {
        write_csv(path, set)
    }
}

/// One value per line.
fn read_column(path: &Path) -> Result<Vec<(usize, String)>> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    Ok(text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| (i + 1, l.trim().to_string()))
        .collect())
}

pub fn read_labels(path: &Path, expected: usize) -> Result<Vec<bool>> {
    let rows = read_column(path)?;
    let labels = rows
        .iter()
        .map(|(line, v)| match v.as_str() {
            "0" => Ok(false),
            "1" => Ok(true),
            other => Err(parse_err(path, *line, format!("label '{other}' is not 0 or 1"))),
        })
        .collect::<Result<Vec<_>>>()?;
    if labels.len() != expected {
        return Err(DsvError::Validation {
            path: path.to_path_buf(),
            message: format!("{} labels for {expected} test vectors", labels.len()),
        });
    }
    Ok(labels)
}

pub fn read_scores(path: &Path, expected: usize) -> Result<Vec<f64>> {
    let rows = read_column(path)?;
    let scores = rows
        .iter()
        .map(|(line, v)| parse_f64(v, path, *line))
        .collect::<Result<Vec<_>>>()?;
    if scores.len() != expected {
        return Err(DsvError::Validation {
            path: path.to_path_buf(),
            message: format!("{} scores for {expected} test vectors", scores.len()),
        });
    }
    Ok(scores)
}

fn write_lines(path: &Path, lines: impl Iterator<Item = String>) -> Result<()> {
    let mut out = String::new();
    for l in lines {
        out.push_str(&l);
        out.push('\n');
    }
    fs::write(path, out).map_err(io_err(path))
}

// ---------------------------------------------------------------------------
// Manifest

#[derive(Debug, Default)]
struct Manifest {
    task_id: Option<String>,
    dim: Option<usize>,
    hp_grid: Option<Vec<f64>>,
    trn: Option<PathBuf>,
    test: Option<PathBuf>,
    labels: Option<PathBuf>,
    /// Keyed by the HP text as written, so lookups are exact.
    per_hp: BTreeMap<(String, String), (PathBuf, usize)>,
}

fn parse_manifest(path: &Path) -> Result<Manifest> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let dir = path.parent().unwrap_or(Path::new("."));
    let mut m = Manifest::default();
    let mut version = None;
    let mut seen = HashSet::new();
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| parse_err(path, line_no, "expected 'key = value'"))?;
        let (key, value) = (key.trim(), value.trim());
        if !seen.insert(key.to_string()) {
            return Err(parse_err(path, line_no, format!("duplicate key '{key}'")));
        }
        let file = || dir.join(value);
        match key {
            "version" => {
                let v: u32 = value
                    .parse()
                    .map_err(|_| parse_err(path, line_no, format!("bad version '{value}'")))?;
                if v != MANIFEST_VERSION {
                    return Err(parse_err(path, line_no, format!("unsupported manifest version {v}")));
                }
                version = Some(v);
            }
            "task_id" => m.task_id = Some(value.to_string()),
            "dim" => {
                let d: usize = value
                    .parse()
                    .map_err(|_| parse_err(path, line_no, format!("bad dimension '{value}'")))?;
                if d == 0 {
                    return Err(parse_err(path, line_no, "dimension must be positive"));
                }
                m.dim = Some(d);
            }
            "hp_grid" => {
                m.hp_grid = Some(
                    value
                        .split(',')
                        .map(|v| parse_f64(v, path, line_no))
                        .collect::<Result<_>>()?,
                )
            }
            "trn" => m.trn = Some(file()),
            "test" => m.test = Some(file()),
            "labels" => m.labels = Some(file()),
            _ => {
                let (kind, hp) = key
                    .strip_suffix(']')
                    .and_then(|k| k.split_once('['))
                    .ok_or_else(|| parse_err(path, line_no, format!("unknown key '{key}'")))?;
                if !matches!(kind, "aug" | "trn" | "test" | "scores") {
                    return Err(parse_err(path, line_no, format!("unknown key '{key}'")));
                }
                let hp = hp.trim().to_string();
                parse_f64(&hp, path, line_no)?;
                m.per_hp.insert((kind.to_string(), hp), (file(), line_no));
            }
        }
    }
    if version.is_none() {
        return Err(DsvError::Validation {
            path: path.to_path_buf(),
            message: "missing 'version'".into(),
        });
    }
    Ok(m)
}

/// Reads and validates a run directory. Candidates come back in ascending
/// hyperparameter order.
pub fn load_run(dir: &Path) -> Result<SelectionRun> {
    let manifest_path = dir.join(MANIFEST);
    let mut m = parse_manifest(&manifest_path)?;
    let missing = |k: &str| DsvError::Validation {
        path: manifest_path.clone(),
        message: format!("missing '{k}'"),
    };
    let task_id = m.task_id.take().ok_or_else(|| missing("task_id"))?;
    let dim = m.dim.ok_or_else(|| missing("dim"))?;
    let grid = m.hp_grid.take().ok_or_else(|| missing("hp_grid"))?;
    let trn = read_embeddings(&m.trn.take().ok_or_else(|| missing("trn"))?, Some(dim))?;
    let test_path = m.test.take().ok_or_else(|| missing("test"))?;
    let test = read_embeddings(&test_path, Some(dim))?;
    let labels = m.labels.take().map(|p| read_labels(&p, test.len())).transpose()?;

    // match per-candidate entries to grid values numerically
    let mut by_hp: BTreeMap<(String, u64), (PathBuf, usize)> = BTreeMap::new();
    for ((kind, hp), v) in std::mem::take(&mut m.per_hp) {
        let value: f64 = hp.parse().expect("validated while parsing");
        by_hp.insert((kind, value.to_bits()), v);
    }
    let mut candidates = Vec::with_capacity(grid.len());
    for &hp in &grid {
        let key = |kind: &str| (kind.to_string(), hp.to_bits());
        let aug_path = by_hp.remove(&key("aug")).ok_or_else(|| DsvError::Validation {
            path: manifest_path.clone(),
            message: format!("no 'aug[{}]' entry for grid value {}", format_f64(hp), format_f64(hp)),
        })?;
        let mut c = CandidateModel::new(hp, read_embeddings(&aug_path.0, Some(dim))?);
        if let Some((p, _)) = by_hp.remove(&key("trn")) {
            c.trn = Some(read_embeddings(&p, Some(dim))?);
        }
        if let Some((p, _)) = by_hp.remove(&key("test")) {
            let t = read_embeddings(&p, Some(dim))?;
            if t.len() != test.len() {
                return Err(DsvError::Validation {
                    path: p,
                    message: format!("{} vectors, run test set has {}", t.len(), test.len()),
                });
            }
            c.test = Some(t);
        }
        if let Some((p, _)) = by_hp.remove(&key("scores")) {
            c.scores = Some(read_scores(&p, test.len())?);
        }
        candidates.push(c);
    }
    if let Some(((kind, bits), (_, line))) = by_hp.into_iter().next() {
        return Err(parse_err(
            &manifest_path,
            line,
            format!("'{kind}[{}]' does not match any hp_grid value", format_f64(f64::from_bits(bits))),
        ));
    }
    candidates.sort_by(|a, b| a.hp_value.total_cmp(&b.hp_value));
    if candidates.windows(2).any(|w| w[0].hp_value == w[1].hp_value) {
        return Err(DsvError::Validation {
            path: manifest_path,
            message: "duplicate hp_grid value".into(),
        });
    }
    let run = SelectionRun {
        task_id,
        trn,
        test,
        labels,
        candidates,
    };
    run.validate().map_err(|e| DsvError::Validation {
        path: manifest_path.clone(),
        message: e.to_string(),
    })?;
    Ok(run)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum EmbeddingFormat {
    #[default]
    Csv,
    Binary,
}

impl EmbeddingFormat {
    fn ext(self) -> &'static str {
        match self {
            EmbeddingFormat::Csv => "csv",
            EmbeddingFormat::Binary => "f64",
        }
    }
}

/// Writes `run` as a run directory, creating `dir` if needed.
pub fn save_run(run: &SelectionRun, dir: &Path, format: EmbeddingFormat) -> Result<()> {
    run.validate()?;
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let ext = format.ext();
    let mut manifest = vec![
        format!("version = {MANIFEST_VERSION}"),
        format!("task_id = {}", run.task_id),
        format!("dim = {}", run.dim()),
        format!(
            "hp_grid = {}",
            run.candidates.iter().map(|c| format_f64(c.hp_value)).collect::<Vec<_>>().join(", ")
        ),
    ];
    let trn_name = format!("trn.{ext}");
    write_embeddings(&dir.join(&trn_name), &run.trn)?;
    manifest.push(format!("trn = {trn_name}"));
    let test_name = format!("test.{ext}");
    write_embeddings(&dir.join(&test_name), &run.test)?;
    manifest.push(format!("test = {test_name}"));
    if let Some(labels) = &run.labels {
        write_lines(&dir.join("labels.txt"), labels.iter().map(|&l| if l { "1" } else { "0" }.to_string()))?;
        manifest.push("labels = labels.txt".into());
    }
    for c in &run.candidates {
        let hp = format_f64(c.hp_value);
        let name = format!("aug_{hp}.{ext}");
        write_embeddings(&dir.join(&name), &c.aug)?;
        manifest.push(format!("aug[{hp}] = {name}"));
        if let Some(t) = &c.trn {
            let name = format!("trn_{hp}.{ext}");
            write_embeddings(&dir.join(&name), t)?;
            manifest.push(format!("trn[{hp}] = {name}"));
        }
        if let Some(t) = &c.test {
            let name = format!("test_{hp}.{ext}");
            write_embeddings(&dir.join(&name), t)?;
            manifest.push(format!("test[{hp}] = {name}"));
        }
        if let Some(s) = &c.scores {
            let name = format!("scores_{hp}.txt");
            write_lines(&dir.join(&name), s.iter().map(|v| format!("{v:.16e}")))?;
            manifest.push(format!("scores[{hp}] = {name}"));
        }
    }
    write_lines(&dir.join(MANIFEST), manifest.into_iter())
}

// ---------------------------------------------------------------------------
// Fixture tables

/// Reads a `task,method,...` CSV of AUC values into a methods × tasks table.
pub fn load_fixture_table(path: &Path) -> Result<EvaluationTable> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines.next().ok_or_else(|| DsvError::Validation {
        path: path.to_path_buf(),
        message: "empty fixture".into(),
    })?;
    let cols: Vec<&str> = header.split(',').map(str::trim).collect();
    if cols.len() < 2 || cols[0] != "task" {
        return Err(parse_err(path, 1, "header must start with 'task' followed by method names"));
    }
    let methods: Vec<String> = cols[1..].iter().map(|s| s.to_string()).collect();
    let mut tasks = Vec::new();
    let mut auc = vec![Vec::new(); methods.len()];
    for (i, line) in lines {
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != cols.len() {
            return Err(parse_err(path, i + 1, format!("{} fields, header has {}", fields.len(), cols.len())));
        }
        tasks.push(fields[0].to_string());
        for (m, f) in fields[1..].iter().enumerate() {
            let v = parse_f64(f, path, i + 1)?;
            if !(0.0..=1.0).contains(&v) {
                return Err(parse_err(path, i + 1, format!("AUC {v} outside [0, 1]")));
            }
            auc[m].push(v);
        }
    }
    EvaluationTable::new(methods, tasks, auc).map_err(|e| DsvError::Validation {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

/// Every `*.csv` fixture in `dir`, sorted by file name, named by file stem.
pub fn load_fixture_dir(dir: &Path) -> Result<Vec<(String, EvaluationTable)>> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(io_err(dir))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == "csv"))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(DsvError::Validation {
            path: dir.to_path_buf(),
            message: "no .csv fixture tables".into(),
        });
    }
    paths
        .iter()
        .map(|p| {
            let name = p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
            load_fixture_table(p).map(|t| (name, t))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fixtures() -> PathBuf {
        Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/appendix")
    }

    #[test]
    fn fixture_cells() {
        let t = load_fixture_table(&fixtures().join("cutpaste.csv")).unwrap();
        assert_eq!((t.methods.len(), t.tasks.len()), (9, 21));
        let m = t.method_index("dsv").unwrap();
        let k = t.tasks.iter().position(|x| x == "bottle").unwrap();
        assert_eq!(t.auc[m][k], 0.980);
        let t = load_fixture_table(&fixtures().join("cutout.csv")).unwrap();
        let k = t.tasks.iter().position(|x| x == "carpet").unwrap();
        assert_eq!(t.column("dsv").unwrap()[k], 0.815);
    }

    #[test]
    fn empty_fixture_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("empty.csv");
        fs::write(&p, "").unwrap();
        assert!(matches!(load_fixture_table(&p), Err(DsvError::Validation { .. })));
    }

    #[test]
    fn csv_diagnostics_name_line() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.csv");
        fs::write(&p, "1,2\n3\n").unwrap();
        match read_csv(&p, None) {
            Err(DsvError::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
        fs::write(&p, "1,2\n3,nan\n").unwrap();
        match read_csv(&p, None) {
            Err(DsvError::Parse { line, message, .. }) => {
                assert_eq!(line, 2);
                assert!(message.contains("non-finite"));
            }
            other => panic!("{other:?}"),
        }
        fs::write(&p, "1,2,3\n").unwrap();
        assert!(matches!(read_csv(&p, Some(2)), Err(DsvError::Parse { line: 1, .. })));
    }

    #[test]
    fn binary_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.f64");
        let s = EmbeddingSet::from_rows(vec![vec![0.1, -2.5e-300], vec![1e300, 3.0]]).unwrap();
        write_embeddings(&p, &s).unwrap();
        assert_eq!(fs::metadata(&p).unwrap().len(), 16 + 32);
        assert_eq!(read_embeddings(&p, Some(2)).unwrap(), s);
        assert!(read_binary(&p, Some(3)).is_err());
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.csv");
        let s = EmbeddingSet::from_rows(vec![vec![0.1, 1.0 / 3.0, -7.25e-12], vec![std::f64::consts::PI, 2e10, -0.0]]).unwrap();
        write_csv(&p, &s).unwrap();
        assert_eq!(read_csv(&p, None).unwrap(), s);
    }
}
