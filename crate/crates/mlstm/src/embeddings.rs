//! Pretrained word vectors and average-pooled text embeddings.
//!
//! The store is loaded from the common plain-text vector layout (one
//! `word v1 .. v_d` entry per line, no header). Text is embedded by
//! averaging the vectors of its tokens; words without a pretrained vector
//! get a deterministic seeded vector that is cached so every lookup of the
//! same word sees the same bits.

use std::collections::HashMap;
use std::io::BufRead;
use std::sync::Mutex;

use crate::error::{Error, Result};
use crate::numerics::{fnv1a, SeededRng, Vector};

/// Range of the generated out-of-vocabulary vectors, comparable in scale to
/// typical pretrained embeddings.
pub const OOV_BOUND: f64 = 0.05;

#[derive(Debug)]
pub struct WordVectorStore {
    vectors: HashMap<String, Vector>,
    dim: usize,
    seed: u64,
    duplicates: usize,
    oov_cache: Mutex<HashMap<String, Vector>>,
}

impl WordVectorStore {
    /// A store with no pretrained entries; every word is out-of-vocabulary.
    pub fn empty(dim: usize, seed: u64) -> Self {
        WordVectorStore {
            vectors: HashMap::new(),
            dim,
            seed,
            duplicates: 0,
            oov_cache: Mutex::new(HashMap::new()),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    /// Number of duplicate words seen while loading (last entry won).
    pub fn duplicates(&self) -> usize {
        self.duplicates
    }

    pub fn contains(&self, word: &str) -> bool {
        self.vectors.contains_key(word)
    }

    /// The vector for a word: pretrained when present, otherwise a cached
    /// deterministic vector derived from hash(word, seed).
    pub fn lookup(&self, word: &str) -> Vector {
        if let Some(v) = self.vectors.get(word) {
            return v.clone();
        }
        let mut cache = self.oov_cache.lock().expect("oov cache poisoned");
        if let Some(v) = cache.get(word) {
            return v.clone();
        }
        let v = self.generate_oov(word);
        cache.insert(word.to_string(), v.clone());
        v
    }

    fn generate_oov(&self, word: &str) -> Vector {
        let mut rng = SeededRng::new(fnv1a(word.as_bytes()) ^ self.seed);
        (0..self.dim).map(|_| rng.uniform(-OOV_BOUND, OOV_BOUND)).collect()
    }
}

/// Load word vectors from a line stream.
///
/// Each line must hold a word followed by exactly `expected_dim` values.
/// Duplicate words are counted and the last entry wins.
pub fn load_word_vectors(
    source: impl BufRead,
    expected_dim: usize,
    seed: u64,
) -> Result<WordVectorStore> {
    let mut vectors = HashMap::new();
    let mut duplicates = 0;
    for (idx, line) in source.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        let mut parts = line.split_whitespace();
        let word = parts.next().ok_or_else(|| Error::Parse {
            line: line_no,
            msg: "empty line in word-vector file".into(),
        })?;
        let values: Vec<f64> = parts
            .map(|tok| {
                tok.parse::<f64>().map_err(|e| Error::Parse {
                    line: line_no,
                    msg: format!("bad value {tok:?}: {e}"),
                })
            })
            .collect::<Result<_>>()?;
        if values.len() != expected_dim {
            return Err(Error::Parse {
                line: line_no,
                msg: format!(
                    "expected {expected_dim} values for {word:?}, found {}",
                    values.len()
                ),
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Parse {
                line: line_no,
                msg: format!("non-finite value for {word:?}"),
            });
        }
        if vectors.insert(word.to_string(), Vector::from_vec(values)).is_some() {
            duplicates += 1;
        }
    }
    Ok(WordVectorStore {
        vectors,
        dim: expected_dim,
        seed,
        duplicates,
        oov_cache: Mutex::new(HashMap::new()),
    })
}

/// Lowercase and split on runs of non-alphanumeric characters.
pub fn tokenize(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_string)
        .collect()
}

/// Mean of the token vectors; the zero vector when the text has no tokens.
pub fn embed_text(store: &WordVectorStore, text: &str) -> Vector {
    let tokens = tokenize(text);
    if tokens.is_empty() {
        return Vector::zeros(store.dim());
    }
    let mut acc = Vector::zeros(store.dim());
    for token in &tokens {
        acc.add_assign(&store.lookup(token));
    }
    acc.scale(1.0 / tokens.len() as f64);
    acc
}
