//! Token embedding providers for BERTScore at desk scale.
//!
//! The default provider derives a deterministic unit vector per token from a
//! seeded hash (distinct tokens collide with negligible probability). An
//! alternative provider learns vectors from corpus co-occurrence counts:
//! positive PMI rows reduced to a fixed width by random projection, so tokens
//! that share contexts score similar.

use std::collections::{BTreeMap, HashMap};

use crate::rng::Rng;
use crate::text;

/// Deterministic per-token unit vectors of a fixed width.
pub trait EmbeddingProvider {
    fn dim(&self) -> usize;
    /// Unit-norm vector (Euclidean norm 1 within 1e-9); same token, same vector.
    fn embed(&self, token: &str) -> Vec<f64>;
}

fn fnv1a(token: &str) -> u64 {
    let mut hash: u64 = 0xcbf29ce484222325;
    for byte in token.as_bytes() {
        hash ^= u64::from(*byte);
        hash = hash.wrapping_mul(0x100000001b3);
    }
    hash
}

fn normalize(mut v: Vec<f64>) -> Vec<f64> {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        for x in &mut v {
            *x /= norm;
        }
    } else {
        v[0] = 1.0;
    }
    v
}

fn hash_vector(token: &str, seed: u64, dim: usize) -> Vec<f64> {
    let mut rng = Rng::new(fnv1a(token) ^ seed);
    normalize((0..dim).map(|_| rng.normal()).collect())
}

/// Seeded-hash unit vectors: injective with overwhelming probability and
/// nearly orthogonal for distinct tokens.
#[derive(Debug, Clone)]
pub struct HashEmbedder {
    dim: usize,
    seed: u64,
}

impl HashEmbedder {
    pub fn new(dim: usize, seed: u64) -> Self {
        assert!(dim >= 1, "embedding width must be at least 1");
        HashEmbedder { dim, seed }
    }
}

impl EmbeddingProvider for HashEmbedder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, token: &str) -> Vec<f64> {
        hash_vector(token, self.seed, self.dim)
    }
}

/// Corpus-trained embeddings: PPMI word/context weights projected to `dim`
/// dimensions with hash-derived random context vectors. Tokens unseen in
/// training fall back to hash vectors.
pub struct PpmiEmbedder {
    dim: usize,
    seed: u64,
    vectors: HashMap<String, Vec<f64>>,
}

impl PpmiEmbedder {
    /// Train on raw texts (tokenized with the corpus word tokenizer) using a
    /// symmetric co-occurrence window.
    pub fn train<S: AsRef<str>>(
        texts: &[S],
        dim: usize,
        window: usize,
        max_vocab: usize,
        seed: u64,
    ) -> Self {
        assert!(dim >= 1, "embedding width must be at least 1");
        assert!(window >= 1, "context window must be at least 1");

        let tokenized: Vec<Vec<String>> = texts
            .iter()
            .map(|t| text::word_tokens(t.as_ref()))
            .collect();

        // vocabulary: most frequent tokens first, ties lexicographic
        let mut freq: HashMap<&str, u64> = HashMap::new();
        for tokens in &tokenized {
            for tok in tokens {
                *freq.entry(tok).or_insert(0) += 1;
            }
        }
        let mut ranked: Vec<(&str, u64)> = freq.into_iter().collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        ranked.truncate(max_vocab);
        let index: HashMap<&str, u32> = ranked
            .iter()
            .enumerate()
            .map(|(i, (t, _))| (*t, i as u32))
            .collect();

        // co-occurrence counts within the window, per word in sorted order
        let mut pair_counts: BTreeMap<(u32, u32), u64> = BTreeMap::new();
        let mut word_totals: HashMap<u32, u64> = HashMap::new();
        let mut grand_total: u64 = 0;
        for tokens in &tokenized {
            let ids: Vec<Option<u32>> = tokens
                .iter()
                .map(|t| index.get(t.as_str()).copied())
                .collect();
            for (i, id) in ids.iter().enumerate() {
                let Some(w) = *id else { continue };
                let hi = (i + window).min(ids.len() - 1);
                for c in ids[i + 1..=hi].iter().flatten() {
                    *pair_counts.entry((w, *c)).or_insert(0) += 1;
                    *pair_counts.entry((*c, w)).or_insert(0) += 1;
                    *word_totals.entry(w).or_insert(0) += 1;
                    *word_totals.entry(*c).or_insert(0) += 1;
                    grand_total += 2;
                }
            }
        }

        // project PPMI rows onto hash-derived context directions
        let context_vec: Vec<Vec<f64>> = ranked
            .iter()
            .map(|(t, _)| hash_vector(t, seed ^ 0x5eed_c0de, dim))
            .collect();
        let mut rows: HashMap<u32, Vec<f64>> = HashMap::new();
        if grand_total > 0 {
            let n = grand_total as f64;
            for (&(w, c), &count) in &pair_counts {
                let pw = word_totals[&w] as f64;
                let pc = word_totals[&c] as f64;
                let pmi = ((count as f64 * n) / (pw * pc)).ln();
                if pmi <= 0.0 {
                    continue;
                }
                let row = rows.entry(w).or_insert_with(|| vec![0.0; dim]);
                for (x, basis) in row.iter_mut().zip(&context_vec[c as usize]) {
                    *x += pmi * basis;
                }
            }
        }

        let vectors = ranked
            .iter()
            .enumerate()
            .filter_map(|(i, (t, _))| {
                rows.remove(&(i as u32)).map(|row| {
                    let has_signal = row.iter().any(|&x| x != 0.0);
                    let v = if has_signal {
                        normalize(row)
                    } else {
                        hash_vector(t, seed, dim)
                    };
                    (t.to_string(), v)
                })
            })
            .collect();
        PpmiEmbedder { dim, seed, vectors }
    }
}

impl EmbeddingProvider for PpmiEmbedder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, token: &str) -> Vec<f64> {
        self.vectors
            .get(token)
            .cloned()
            .unwrap_or_else(|| hash_vector(token, self.seed, self.dim))
    }
}

/// Explicit token -> vector table (normalized on insert); handy for tests and
/// hand-constructed similarity geometries. Unknown tokens fall back to hash
/// vectors under seed 0.
#[derive(Debug, Clone, Default)]
pub struct FixedEmbedder {
    vectors: HashMap<String, Vec<f64>>,
    dim: usize,
}

impl FixedEmbedder {
    pub fn new() -> Self {
        FixedEmbedder::default()
    }

    pub fn insert(&mut self, token: &str, vector: Vec<f64>) {
        assert!(self.dim == 0 || self.dim == vector.len(), "width mismatch");
        self.dim = vector.len();
        self.vectors.insert(token.to_string(), normalize(vector));
    }
}

impl EmbeddingProvider for FixedEmbedder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, token: &str) -> Vec<f64> {
        self.vectors
            .get(token)
            .cloned()
            .unwrap_or_else(|| hash_vector(token, 0, self.dim.max(1)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn norm(v: &[f64]) -> f64 {
        v.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    #[test]
    fn hash_embedder_is_unit_norm_and_deterministic() {
        let e = HashEmbedder::new(48, 9);
        let a = e.embed("শিরোনাম");
        let b = e.embed("শিরোনাম");
        assert_eq!(a, b);
        assert!((norm(&a) - 1.0).abs() < 1e-9);
        assert_ne!(e.embed("x"), e.embed("y"));
    }

    #[test]
    fn hash_embedder_distinct_tokens_nearly_orthogonal() {
        let e = HashEmbedder::new(256, 3);
        let a = e.embed("alpha");
        let b = e.embed("beta");
        let dot: f64 = a.iter().zip(&b).map(|(x, y)| x * y).sum();
        assert!(dot.abs() < 0.5);
    }

    #[test]
    fn ppmi_embedder_groups_shared_context_words() {
        // "good" and "great" share the context "news"; "stone" never does.
        let texts: Vec<String> = (0..40)
            .flat_map(|i| {
                vec![
                    format!("good news arrived {i}"),
                    format!("great news arrived {i}"),
                    format!("stone wall stands {i}"),
                ]
            })
            .collect();
        let e = PpmiEmbedder::train(&texts, 64, 2, 1000, 5);
        let dot = |x: &str, y: &str| -> f64 {
            e.embed(x).iter().zip(e.embed(y)).map(|(a, b)| a * b).sum()
        };
        assert!((norm(&e.embed("good")) - 1.0).abs() < 1e-9);
        assert!(dot("good", "great") > dot("good", "stone"));
        assert_eq!(e.embed("good"), e.embed("good"));
    }

    #[test]
    fn ppmi_unseen_token_falls_back_to_hash() {
        let e = PpmiEmbedder::train(&["a b"], 16, 2, 10, 1);
        let v = e.embed("nowhere");
        assert!((norm(&v) - 1.0).abs() < 1e-9);
    }

    #[test]
    fn fixed_embedder_normalizes() {
        let mut e = FixedEmbedder::new();
        e.insert("x", vec![3.0, 4.0]);
        let v = e.embed("x");
        assert!((norm(&v) - 1.0).abs() < 1e-12);
        assert!((v[0] - 0.6).abs() < 1e-12);
    }
}
