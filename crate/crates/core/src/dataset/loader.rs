use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::format::read_grid_f32;
use super::manifest::DatasetManifest;
use crate::error::{Error, Result};

/// Every usable sample of a manifest, held in memory as `f32` grids.
#[derive(Debug, Clone)]
pub struct LoadedDataset {
    pub nelx: usize,
    pub nely: usize,
    pub ids: Vec<String>,
    pub labels: Vec<f32>,
    /// Sample-major, each sample `nely * nelx` row-major values.
    pub grids: Vec<f32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub ids: Vec<String>,
    /// `len * nely * nelx` values.
    pub grids: Vec<f32>,
    /// Volume-fraction condition of each sample.
    pub labels: Vec<f32>,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

impl LoadedDataset {
    /// Reads every successful record's grid. Failed records are skipped.
    pub fn load(manifest: &DatasetManifest) -> Result<Self> {
        let (nelx, nely) = (manifest.header.mesh.nelx, manifest.header.mesh.nely);
        let mut out = Self {
            nelx,
            nely,
            ids: Vec::new(),
            labels: Vec::new(),
            grids: Vec::new(),
        };
        for record in &manifest.records {
            let Some(path) = manifest.grid_path(record) else {
                continue;
            };
            let (x, y, values) = read_grid_f32(&path)?;
            if (x, y) != (nelx, nely) {
                return Err(Error::format(
                    &path,
                    format!("grid is {x}x{y}, dataset is {nelx}x{nely}"),
                ));
            }
            if let Some(v) = values.iter().find(|v| !v.is_finite()) {
                return Err(Error::format(&path, format!("non-finite density {v}")));
            }
            out.ids.push(record.id.clone());
            out.labels.push(record.volfrac as f32);
            out.grids.extend_from_slice(&values);
        }
        if out.ids.is_empty() {
            return Err(Error::State(format!(
                "dataset at {} has no usable samples",
                manifest.root.display()
            )));
        }
        Ok(out)
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn pixels(&self) -> usize {
        self.nelx * self.nely
    }

    pub fn batch_count(&self, batch_size: usize) -> usize {
        self.len().div_ceil(batch_size.max(1))
    }

    /// Sample order of one epoch: a permutation seeded by `shuffle_seed`.
    pub fn permutation(&self, shuffle_seed: u64) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.len()).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(shuffle_seed));
        order
    }

    pub fn gather(&self, indices: &[usize]) -> Batch {
        let px = self.pixels();
        let mut grids = Vec::with_capacity(indices.len() * px);
        for &i in indices {
            grids.extend_from_slice(&self.grids[i * px..(i + 1) * px]);
        }
        Batch {
            ids: indices.iter().map(|&i| self.ids[i].clone()).collect(),
            grids,
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
        }
    }

    /// One epoch of batches; the final batch may be short.
    pub fn batches(&self, batch_size: usize, shuffle_seed: u64) -> impl Iterator<Item = Batch> + '_ {
        let order = self.permutation(shuffle_seed);
        let size = batch_size.max(1);
        (0..self.batch_count(size)).map(move |b| {
            let end = ((b + 1) * size).min(order.len());
            self.gather(&order[b * size..end])
        })
    }
}

/// Loads `manifest` and yields one shuffled epoch of `(grids, labels)` batches.
pub fn load_batches(
    manifest: &DatasetManifest,
    batch_size: usize,
    shuffle_seed: u64,
) -> Result<Vec<Batch>> {
    let data = LoadedDataset::load(manifest)?;
    Ok(data.batches(batch_size, shuffle_seed).collect())
}
