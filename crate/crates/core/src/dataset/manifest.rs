//! Dataset manifest: one JSON object per line. The first line is the header,
//! every following line one sample record.

use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::format::write_atomic;
use super::grid::GridSpec;
use crate::error::{Error, Result};
use crate::fem::{LoadCase, MeshSpec};
use crate::simp::OptimizationParams;

pub const MANIFEST_FILE: &str = "manifest.jsonl";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestHeader {
    pub format_version: u32,
    pub mesh: MeshSpec,
    pub load_name: String,
    pub load: LoadCase,
    pub grid: GridSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub id: String,
    pub volfrac: f64,
    pub penal: f64,
    pub rmin: f64,
    pub nelx: usize,
    pub nely: usize,
    pub compliance: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Path relative to the dataset root; absent when the run failed.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid_file: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum Line {
    Header(ManifestHeader),
    Sample(SampleRecord),
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetManifest {
    pub header: ManifestHeader,
    pub records: Vec<SampleRecord>,
    /// Directory the manifest lives in; grid paths resolve against it.
    pub root: PathBuf,
}

/// Stable identifier of a grid point: FNV-1a over its canonical text form.
pub fn sample_id(params: &OptimizationParams, nelx: usize, nely: usize) -> String {
    let key = format!(
        "{:.6}|{:.6}|{:.6}|{nelx}x{nely}",
        params.volfrac, params.penal, params.rmin
    );
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for b in key.bytes() {
        hash ^= u64::from(b);
        hash = hash.wrapping_mul(0x0100_0000_01b3);
    }
    format!("{hash:016x}")
}

impl DatasetManifest {
    pub fn path(&self) -> PathBuf {
        self.root.join(MANIFEST_FILE)
    }

    pub fn grid_path(&self, record: &SampleRecord) -> Option<PathBuf> {
        record.grid_file.as_ref().map(|f| self.root.join(f))
    }

    pub fn encode(&self) -> Result<String> {
        let mut out = serde_json::to_string(&Line::Header(self.header.clone()))
            .map_err(|e| Error::State(e.to_string()))?;
        out.push('\n');
        for r in &self.records {
            out.push_str(
                &serde_json::to_string(&Line::Sample(r.clone()))
                    .map_err(|e| Error::State(e.to_string()))?,
            );
            out.push('\n');
        }
        Ok(out)
    }

    /// Atomic write to `<root>/manifest.jsonl`.
    pub fn save(&self) -> Result<()> {
        write_atomic(&self.path(), self.encode()?.as_bytes())
    }

    /// Loads `path`, which may be the manifest file or its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let (root, file) = if path.is_dir() {
            (path.to_path_buf(), path.join(MANIFEST_FILE))
        } else {
            let root = path.parent().map(Path::to_path_buf).unwrap_or_default();
            (root, path.to_path_buf())
        };
        let text = fs::read_to_string(&file).map_err(|e| Error::io(&file, e))?;
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = match lines.next().map(serde_json::from_str::<Line>) {
            Some(Ok(Line::Header(h))) => h,
            Some(Ok(Line::Sample(_))) => {
                return Err(Error::format(&file, "first line must be the header"))
            }
            Some(Err(e)) => return Err(Error::format(&file, format!("header: {e}"))),
            None => return Err(Error::format(&file, "empty manifest")),
        };
        if header.format_version != FORMAT_VERSION {
            return Err(Error::format(
                &file,
                format!("unsupported format version {}", header.format_version),
            ));
        }
        let mut records = Vec::new();
        for (i, line) in lines.enumerate() {
            match serde_json::from_str::<Line>(line) {
                Ok(Line::Sample(r)) => records.push(r),
                Ok(Line::Header(_)) => {
                    return Err(Error::format(&file, format!("duplicate header at record {i}")))
                }
                Err(e) => return Err(Error::format(&file, format!("record {i}: {e}"))),
            }
        }
        let manifest = Self {
            header,
            records,
            root,
        };
        manifest.check_unique_ids().map_err(|r| Error::format(&file, r))?;
        Ok(manifest)
    }

    fn check_unique_ids(&self) -> std::result::Result<(), String> {
        let mut seen = HashSet::new();
        for r in &self.records {
            if !seen.insert(r.id.as_str()) {
                return Err(format!("duplicate sample id {}", r.id));
            }
        }
        Ok(())
    }

    pub fn is_complete(&self) -> bool {
        self.records.len() == self.header.grid.cardinality()
            && self.records.iter().all(|r| r.error.is_none())
    }

    /// Distinct volume fractions present, ascending.
    pub fn volfracs(&self) -> Vec<f64> {
        let mut v: Vec<f64> = self.records.iter().map(|r| r.volfrac).collect();
        v.sort_by(f64::total_cmp);
        v.dedup();
        v
    }
}
