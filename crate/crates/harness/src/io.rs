//! Plain-text artifact formats and checksummed output directories.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use ndarray::Array2;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{HarnessError, Result};

pub const TRAJECTORY_HEADER: &str =
    "step,complexity_bits,accuracy_bits,expected_utility,epsilon_bits,fitted_beta";
pub const PLANE_HEADER: &str = "source_kind,gamma,seed,complexity_bits,accuracy_bits,epsilon_bits,fitted_beta,expected_utility,converged,steps";
pub const CURVE_HEADER: &str = "beta,complexity_bits,accuracy_bits,objective";
pub const MODE_MAP_HEADER: &str = "meaning,modal_word,modal_prob";

/// Shortest representation that parses back to the same `f64`.
pub fn num(v: f64) -> String {
    format!("{v}")
}

pub fn opt_num(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

/// Dense row-major matrix, 17 significant digits, no header.
pub fn matrix_csv(m: &Array2<f64>) -> String {
    let mut out = String::with_capacity(m.len() * 24);
    for row in m.rows() {
        for (j, v) in row.iter().enumerate() {
            if j > 0 {
                out.push(',');
            }
            write!(out, "{v:.16e}").expect("writing to a String cannot fail");
        }
        out.push('\n');
    }
    out
}

pub fn parse_matrix(text: &str, path: &Path) -> Result<Array2<f64>> {
    let rows: Vec<Vec<f64>> = text
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| parse_fields(l, path))
        .collect::<Result<_>>()?;
    let ncols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(malformed(path, "ragged matrix rows"));
    }
    let flat: Vec<f64> = rows.into_iter().flatten().collect();
    Array2::from_shape_vec((flat.len() / ncols.max(1), ncols), flat)
        .map_err(|e| malformed(path, &e.to_string()))
}

fn parse_fields(line: &str, path: &Path) -> Result<Vec<f64>> {
    line.split(',')
        .map(|f| {
            f.trim()
                .parse::<f64>()
                .map_err(|_| malformed(path, &format!("not a number: {f:?}")))
        })
        .collect()
}

pub fn malformed(path: &Path, reason: &str) -> HarnessError {
    HarnessError::Malformed {
        path: path.to_path_buf(),
        reason: reason.to_string(),
    }
}

/// Header-checked CSV rows as string fields.
pub fn read_table(path: &Path, header: &str) -> Result<Vec<Vec<String>>> {
    let text = read_text(path)?;
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h == header => {}
        _ => return Err(malformed(path, &format!("expected header {header:?}"))),
    }
    let width = header.split(',').count();
    lines
        .filter(|l| !l.is_empty())
        .map(|l| {
            let fields: Vec<String> = l.split(',').map(str::to_string).collect();
            if fields.len() == width {
                Ok(fields)
            } else {
                Err(malformed(path, &format!("row has {} fields, want {width}", fields.len())))
            }
        })
        .collect()
}

pub fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// JSON manifest describing one directory of artifacts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub kind: String,
    pub software_version: String,
    pub config: serde_json::Value,
    pub details: serde_json::Value,
    pub constants: serde_json::Value,
    /// Relative path → SHA-256 of every file this manifest owns.
    pub files: BTreeMap<String, String>,
}

pub const MANIFEST_NAME: &str = "manifest.json";

impl Manifest {
    pub fn read(dir: &Path) -> Result<Self> {
        let path = dir.join(MANIFEST_NAME);
        serde_json::from_str(&read_text(&path)?).map_err(|e| malformed(&path, &e.to_string()))
    }

    /// Checks every listed file against its recorded checksum.
    pub fn verify(&self, dir: &Path) -> Result<()> {
        for (rel, want) in &self.files {
            let path = dir.join(rel);
            let bytes = std::fs::read(&path).map_err(|e| HarnessError::io(&path, e))?;
            if &sha256_hex(&bytes) != want {
                return Err(malformed(&path, "checksum mismatch"));
            }
        }
        Ok(())
    }
}

/// Writes files under one directory and remembers their checksums.
#[derive(Debug)]
pub struct ArtifactDir {
    root: PathBuf,
    files: BTreeMap<String, String>,
}

impl ArtifactDir {
    /// Creates (or empties of tracked state) the directory `root`.
    pub fn create(root: impl Into<PathBuf>) -> Result<Self> {
        let root = root.into();
        std::fs::create_dir_all(&root).map_err(|e| HarnessError::io(&root, e))?;
        Ok(Self {
            root,
            files: BTreeMap::new(),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn write(&mut self, rel: &str, contents: impl AsRef<[u8]>) -> Result<()> {
        let path = self.root.join(rel);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).map_err(|e| HarnessError::io(parent, e))?;
        }
        let bytes = contents.as_ref();
        std::fs::write(&path, bytes).map_err(|e| HarnessError::io(&path, e))?;
        self.files.insert(rel.to_string(), sha256_hex(bytes));
        Ok(())
    }

    /// Records a file written by someone else (e.g. a nested manifest).
    pub fn adopt(&mut self, rel: &str) -> Result<()> {
        let path = self.root.join(rel);
        let bytes = std::fs::read(&path).map_err(|e| HarnessError::io(&path, e))?;
        self.files.insert(rel.to_string(), sha256_hex(&bytes));
        Ok(())
    }

    pub fn finish(
        self,
        kind: &str,
        config: serde_json::Value,
        details: serde_json::Value,
        constants: serde_json::Value,
    ) -> Result<Manifest> {
        let manifest = Manifest {
            kind: kind.to_string(),
            software_version: env!("CARGO_PKG_VERSION").to_string(),
            config,
            details,
            constants,
            files: self.files,
        };
        let path = self.root.join(MANIFEST_NAME);
        let mut text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
        text.push('\n');
        std::fs::write(&path, text).map_err(|e| HarnessError::io(&path, e))?;
        Ok(manifest)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn matrix_round_trip_is_exact() {
        let m = array![[0.1, 1.0 / 3.0, 2e-300], [5e-324, 0.0, 1.0]];
        let text = matrix_csv(&m);
        assert!(text.starts_with("1.0000000000000001e-1,"));
        assert_eq!(parse_matrix(&text, Path::new("m")).unwrap(), m);
    }

    #[test]
    fn numbers_round_trip() {
        for v in [0.1, 1e-8, 4.605_170_185_988_091, 1e7, 0.0] {
            assert_eq!(num(v).parse::<f64>().unwrap(), v);
        }
        assert_eq!(opt_num(None), "");
    }

    #[test]
    fn headers_are_exact() {
        assert_eq!(PLANE_HEADER.split(',').count(), 10);
        assert_eq!(TRAJECTORY_HEADER.split(',').count(), 6);
    }

    #[test]
    fn manifest_detects_tampering() {
        let dir = tempfile::tempdir().unwrap();
        let mut a = ArtifactDir::create(dir.path()).unwrap();
        a.write("x/data.csv", "1,2\n").unwrap();
        let m = a.finish("test", serde_json::Value::Null, serde_json::Value::Null, serde_json::Value::Null).unwrap();
        let back = Manifest::read(dir.path()).unwrap();
        assert_eq!(back, m);
        back.verify(dir.path()).unwrap();
        std::fs::write(dir.path().join("x/data.csv"), "1,3\n").unwrap();
        assert!(back.verify(dir.path()).is_err());
    }

    #[test]
    fn sha256_known_value() {
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }
}
