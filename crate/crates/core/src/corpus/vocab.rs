//! Frequency-thresholded vocabulary with PAD/UNK specials.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};

pub const PAD_ID: u32 = 0;
pub const UNK_ID: u32 = 1;
const PAD_TOKEN: &str = "<pad>";
const UNK_TOKEN: &str = "<unk>";

/// Token-to-id mapping. PAD is 0, UNK is 1; real tokens get ids from 2 in
/// descending-frequency order (lexicographic tie-break).
#[derive(Debug, Clone)]
pub struct Vocabulary {
    token_to_id: HashMap<String, u32>,
    id_to_token: Vec<String>,
    freqs: Vec<u64>,
}

impl Vocabulary {
    pub fn size(&self) -> usize {
        self.id_to_token.len()
    }

    pub fn id_of(&self, token: &str) -> u32 {
        self.token_to_id.get(token).copied().unwrap_or(UNK_ID)
    }

    pub fn contains(&self, token: &str) -> bool {
        self.token_to_id.contains_key(token)
    }

    pub fn token_of(&self, id: u32) -> &str {
        &self.id_to_token[id as usize]
    }

    pub fn freq_of(&self, id: u32) -> u64 {
        self.freqs[id as usize]
    }

    /// Write `token<TAB>id<TAB>freq`, one line per id in order.
    pub fn save_tsv(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        for (id, token) in self.id_to_token.iter().enumerate() {
            writeln!(w, "{token}\t{id}\t{}", self.freqs[id])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn load_tsv(path: &Path) -> Result<Vocabulary> {
        let f = File::open(path)?;
        let mut id_to_token = Vec::new();
        let mut freqs = Vec::new();
        for (lineno, line) in BufReader::new(f).lines().enumerate() {
            let line = line?;
            let mut parts = line.split('\t');
            let (token, id, freq) = match (parts.next(), parts.next(), parts.next()) {
                (Some(t), Some(i), Some(fq)) => (t, i, fq),
                _ => {
                    return Err(Error::data(format!(
                        "{}:{}: expected token<TAB>id<TAB>freq",
                        path.display(),
                        lineno + 1
                    )))
                }
            };
            let id: usize = id
                .parse()
                .map_err(|_| Error::data(format!("bad vocab id {id:?}")))?;
            if id != id_to_token.len() {
                return Err(Error::data(format!(
                    "vocab ids out of order at line {}",
                    lineno + 1
                )));
            }
            let freq: u64 = freq
                .parse()
                .map_err(|_| Error::data(format!("bad vocab freq {freq:?}")))?;
            id_to_token.push(token.to_string());
            freqs.push(freq);
        }
        if id_to_token.len() < 2 || id_to_token[0] != PAD_TOKEN || id_to_token[1] != UNK_TOKEN {
            return Err(Error::data("vocab file missing PAD/UNK header rows"));
        }
        let token_to_id = id_to_token
            .iter()
            .enumerate()
            .skip(2)
            .map(|(id, t)| (t.clone(), id as u32))
            .collect();
        Ok(Vocabulary { token_to_id, id_to_token, freqs })
    }
}

/// Build a vocabulary from training-split token streams. Tokens with
/// frequency <= `min_count` fall to UNK; surviving tokens are ordered by
/// descending frequency, then lexicographically.
pub fn build_vocab(streams: &[Vec<String>], min_count: u64) -> Result<Vocabulary> {
    let mut counts: HashMap<&str, u64> = HashMap::new();
    for stream in streams {
        for token in stream {
            *counts.entry(token.as_str()).or_insert(0) += 1;
        }
    }
    let mut kept: Vec<(&str, u64)> = counts
        .iter()
        .filter(|&(_, &c)| c > min_count)
        .map(|(&t, &c)| (t, c))
        .collect();
    if kept.is_empty() {
        return Err(Error::data(format!(
            "empty vocabulary: no token frequency exceeds {min_count}"
        )));
    }
    kept.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));

    let dropped_total: u64 = counts
        .iter()
        .filter(|&(_, &c)| c <= min_count)
        .map(|(_, &c)| c)
        .sum();
    let mut id_to_token = vec![PAD_TOKEN.to_string(), UNK_TOKEN.to_string()];
    let mut freqs = vec![0, dropped_total];
    let mut token_to_id = HashMap::with_capacity(kept.len());
    for (token, count) in kept {
        token_to_id.insert(token.to_string(), id_to_token.len() as u32);
        id_to_token.push(token.to_string());
        freqs.push(count);
    }
    Ok(Vocabulary { token_to_id, id_to_token, freqs })
}
