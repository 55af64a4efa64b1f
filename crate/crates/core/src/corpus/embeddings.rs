//! Pretrained word-embedding loading (GloVe-style plain text) with seeded
//! random fallback rows for out-of-file tokens.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::corpus::{Vocabulary, PAD_ID};
use crate::error::{Error, Result};

/// Dense `V x D` embedding matrix. Row 0 (PAD) is all zeros and is never
/// updated during training because PAD positions are never gathered.
#[derive(Debug, Clone)]
pub struct EmbeddingTable {
    pub rows: usize,
    pub dim: usize,
    pub weights: Vec<f64>,
}

impl EmbeddingTable {
    pub fn row(&self, id: u32) -> &[f64] {
        let i = id as usize;
        &self.weights[i * self.dim..(i + 1) * self.dim]
    }
}

fn random_row(rng: &mut ChaCha8Rng, dim: usize) -> impl Iterator<Item = f64> + '_ {
    (0..dim).map(move |_| rng.random::<f64>() * 0.1 - 0.05)
}

/// Uniform [-0.05, 0.05] table (PAD row zeroed), for runs without pretrained
/// vectors.
pub fn random_embeddings(vocab_size: usize, dim: usize, seed: u64) -> EmbeddingTable {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut weights = vec![0.0; vocab_size * dim];
    for id in 1..vocab_size {
        for (slot, v) in weights[id * dim..(id + 1) * dim]
            .iter_mut()
            .zip(random_row(&mut rng, dim))
        {
            *slot = v;
        }
    }
    EmbeddingTable { rows: vocab_size, dim, weights }
}

/// Load rows for vocabulary tokens from a whitespace-separated text file
/// (`token v1 ... vD` per line). Tokens absent from the file get seeded
/// uniform rows in [-0.05, 0.05]; the PAD row stays zero.
pub fn load_embeddings(
    path: &Path,
    vocab: &Vocabulary,
    dim: usize,
    seed: u64,
) -> Result<EmbeddingTable> {
    let file = File::open(path)
        .map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))?;
    let mut from_file: HashMap<u32, Vec<f64>> = HashMap::new();
    for (lineno, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.is_empty() {
            continue;
        }
        let mut parts = line.split_whitespace();
        let token = parts
            .next()
            .ok_or_else(|| Error::data(format!("{}:{}: blank row", path.display(), lineno + 1)))?;
        if !vocab.contains(token) {
            // still validate the row width so malformed files surface early
            if parts.count() != dim {
                return Err(Error::data(format!(
                    "{}:{}: expected {dim} values",
                    path.display(),
                    lineno + 1
                )));
            }
            continue;
        }
        let values: Vec<f64> = parts
            .map(|s| {
                s.parse::<f64>().map_err(|_| {
                    Error::data(format!("{}:{}: bad value {s:?}", path.display(), lineno + 1))
                })
            })
            .collect::<Result<_>>()?;
        if values.len() != dim {
            return Err(Error::data(format!(
                "{}:{}: row has {} values, expected {dim}",
                path.display(),
                lineno + 1,
                values.len()
            )));
        }
        from_file.insert(vocab.id_of(token), values);
    }

    let v = vocab.size();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut weights = vec![0.0; v * dim];
    for id in 1..v as u32 {
        let dst = &mut weights[id as usize * dim..(id as usize + 1) * dim];
        match from_file.get(&id) {
            Some(row) => dst.copy_from_slice(row),
            None => {
                // draw in id order so missing rows are seed-reproducible
                for (slot, val) in dst.iter_mut().zip(random_row(&mut rng, dim)) {
                    *slot = val;
                }
            }
        }
    }
    for w in &mut weights[..dim] {
        *w = 0.0; // PAD row
    }
    debug_assert_eq!(PAD_ID, 0);
    Ok(EmbeddingTable { rows: v, dim, weights })
}
