use super::{Embedder, EmbeddingVector, ProviderError};

pub const LOCAL_DIMS: usize = 256;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

/// 64-bit FNV-1a. Fixed constants, so bucket assignment is identical on
/// every platform and run.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    bytes
        .iter()
        .fold(FNV_OFFSET, |h, &b| (h ^ b as u64).wrapping_mul(FNV_PRIME))
}

/// Lowercase ASCII-alphanumeric runs.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_ascii_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(|t| t.to_ascii_lowercase())
        .collect()
}

/// Feature-hashing bag-of-words embedder: term frequencies in `dims`
/// buckets, then L2-normalized.
#[derive(Debug, Clone)]
pub struct LocalEmbedder {
    dims: usize,
}

impl LocalEmbedder {
    pub fn new() -> Self {
        Self { dims: LOCAL_DIMS }
    }

    pub fn with_dims(dims: usize) -> Self {
        assert!(dims > 0, "embedding dimension must be positive");
        Self { dims }
    }

    pub fn bucket(&self, token: &str) -> usize {
        (fnv1a64(token.as_bytes()) % self.dims as u64) as usize
    }

    /// Bucket counts before normalization.
    pub fn raw_counts(&self, text: &str) -> Vec<f64> {
        let mut v = vec![0.0; self.dims];
        for t in tokenize(text) {
            v[self.bucket(&t)] += 1.0;
        }
        v
    }
}

impl Default for LocalEmbedder {
    fn default() -> Self {
        Self::new()
    }
}

impl Embedder for LocalEmbedder {
    fn dims(&self) -> usize {
        self.dims
    }

    fn embed(&self, text: &str) -> Result<EmbeddingVector, ProviderError> {
        if text.trim().is_empty() {
            return Err(ProviderError::EmptyText);
        }
        EmbeddingVector::normalized(self.raw_counts(text)).ok_or(ProviderError::EmptyText)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::providers::cosine_distance;
    use proptest::prelude::*;

    #[test]
    fn fnv_reference_values() {
        // Published FNV-1a 64 test vectors.
        assert_eq!(fnv1a64(b""), 0xcbf29ce484222325);
        assert_eq!(fnv1a64(b"a"), 0xaf63dc4c8601ec8c);
        assert_eq!(fnv1a64(b"foobar"), 0x85944171f73967e8);
    }

    #[test]
    fn term_frequencies_before_normalization() {
        let e = LocalEmbedder::new();
        let raw = e.raw_counts("a a b");
        assert_eq!(raw[e.bucket("a")], 2.0);
        assert_eq!(raw[e.bucket("b")], 1.0);
        assert_eq!(raw.iter().sum::<f64>(), 3.0);
        let v = e.embed("a a b").unwrap();
        assert!((v.norm() - 1.0).abs() < 1e-9);
        let expected = 2.0 / 5f64.sqrt();
        assert!((v.values()[e.bucket("a")] - expected).abs() < 1e-12);
    }

    #[test]
    fn tokenization_lowercases_and_splits() {
        assert_eq!(
            tokenize("Mar_10 Kp-Index, 3.75"),
            vec!["mar", "10", "kp", "index", "3", "75"]
        );
    }

    #[test]
    fn empty_text_is_rejected() {
        let e = LocalEmbedder::new();
        assert_eq!(e.embed("   "), Err(ProviderError::EmptyText));
        assert_eq!(e.embed("!!"), Err(ProviderError::EmptyText));
    }

    #[test]
    fn closer_texts_have_smaller_distance() {
        // Oracle: direct computation with the local embedder.
        let e = LocalEmbedder::new();
        let q = e.embed("march 10 forecast").unwrap();
        let near = e.embed("march 10 forecast kp").unwrap();
        let far = e.embed("population census").unwrap();
        let (dn, df) = (cosine_distance(&q, &near), cosine_distance(&q, &far));
        // 3 shared tokens out of 3 vs 4: cos = 3 / (sqrt(3) * 2)
        assert!((dn - (1.0 - 3.0 / (3f64.sqrt() * 2.0))).abs() < 1e-12);
        assert!(dn < df);
    }

    proptest! {
        #[test]
        fn deterministic_and_unit_norm(s in "[a-zA-Z0-9 ,._-]{1,80}") {
            let e = LocalEmbedder::new();
            match (e.embed(&s), e.embed(&s)) {
                (Ok(a), Ok(b)) => {
                    prop_assert_eq!(&a, &b);
                    prop_assert!((a.norm() - 1.0).abs() < 1e-9);
                    prop_assert_eq!(a.dims(), LOCAL_DIMS);
                }
                (Err(a), Err(b)) => prop_assert_eq!(a, b),
                _ => prop_assert!(false, "non-deterministic result"),
            }
        }
    }
}
