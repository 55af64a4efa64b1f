//! Centroid initialization and the distributional-clustering objective.

mod assign;
mod init;

pub use assign::{cluster_kl_loss, soft_assign, target_distribution};
pub use init::{gmm_init, kmeans_init};

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitMethod {
    KMeans,
    Gmm,
}

impl std::str::FromStr for InitMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<InitMethod> {
        match s {
            "kmeans" => Ok(InitMethod::KMeans),
            "gmm" => Ok(InitMethod::Gmm),
            other => Err(Error::config(format!(
                "unknown init method {other:?} (expected kmeans or gmm)"
            ))),
        }
    }
}

/// K trainable cluster centers of width `dim`, shared between the clustering
/// loss and the alignment layers.
#[derive(Debug, Clone)]
pub struct Centroids {
    pub k: usize,
    pub dim: usize,
    /// Row-major K x dim.
    pub weights: Vec<f64>,
    pub init_method: InitMethod,
}

impl Centroids {
    pub fn row(&self, k: usize) -> &[f64] {
        &self.weights[k * self.dim..(k + 1) * self.dim]
    }

    /// TSV form: a `K` header line, then K rows of `dim` values.
    pub fn save_tsv(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        writeln!(w, "{}", self.k)?;
        for k in 0..self.k {
            let row: Vec<String> = self.row(k).iter().map(|v| format!("{v}")).collect();
            writeln!(w, "{}", row.join("\t"))?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn load_tsv(path: &Path) -> Result<Centroids> {
        let f = File::open(path)
            .map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))?;
        let mut lines = BufReader::new(f).lines();
        let k: usize = lines
            .next()
            .ok_or_else(|| Error::data("empty centroid file"))??
            .trim()
            .parse()
            .map_err(|_| Error::data("bad centroid header"))?;
        let mut weights = Vec::new();
        let mut dim = 0;
        for line in lines {
            let line = line?;
            if line.is_empty() {
                continue;
            }
            let row: Vec<f64> = line
                .split('\t')
                .map(|s| s.parse().map_err(|_| Error::data(format!("bad centroid value {s:?}"))))
                .collect::<Result<_>>()?;
            if dim == 0 {
                dim = row.len();
            } else if row.len() != dim {
                return Err(Error::data("ragged centroid rows"));
            }
            weights.extend(row);
        }
        if weights.len() != k * dim || k == 0 {
            return Err(Error::data(format!(
                "centroid file should hold {k} rows, found {}",
                if dim == 0 { 0 } else { weights.len() / dim }
            )));
        }
        Ok(Centroids { k, dim, weights, init_method: InitMethod::KMeans })
    }
}
