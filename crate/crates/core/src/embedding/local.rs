use super::{EmbedError, EmbeddingProvider, EmbeddingVector};
use crate::hashing::fnv1a64;

pub const LOCAL_DIM: usize = 1024;
/// Bump the version suffix whenever tokenization, hashing or `LOCAL_DIM` change.
pub const LOCAL_PROVIDER_ID: &str = "local-hashed-bow-v1";

/// Hashed bag of words: lowercase, split on non-alphanumerics, bucket each token by
/// FNV-1a modulo [`LOCAL_DIM`], count, then L2-normalize. Text without tokens maps to
/// the zero vector, which [`EmbeddingVector::is_usable`] reports as unusable.
pub fn embed_local(text: &str) -> EmbeddingVector {
    let mut values = vec![0.0f64; LOCAL_DIM];
    let lowered = text.to_lowercase();
    for token in lowered
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
    {
        values[(fnv1a64(token.as_bytes()) % LOCAL_DIM as u64) as usize] += 1.0;
    }
    let n = super::norm(&values);
    if n > 0.0 {
        values.iter_mut().for_each(|v| *v /= n);
    }
    EmbeddingVector {
        provider_id: LOCAL_PROVIDER_ID.to_string(),
        values,
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct LocalEmbedder;

impl EmbeddingProvider for LocalEmbedder {
    fn provider_id(&self) -> &str {
        LOCAL_PROVIDER_ID
    }

    fn dim(&self) -> Option<usize> {
        Some(LOCAL_DIM)
    }

    fn embed_batch(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>, EmbedError> {
        Ok(texts.iter().map(|t| embed_local(t)).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::cosine;
    use proptest::prelude::*;

    fn buckets(text: &str) -> Vec<usize> {
        text.to_lowercase()
            .split(|c: char| !c.is_alphanumeric())
            .filter(|t| !t.is_empty())
            .map(|t| (fnv1a64(t.as_bytes()) % LOCAL_DIM as u64) as usize)
            .collect()
    }

    #[test]
    fn deterministic() {
        assert_eq!(
            embed_local("Who pays the rent?"),
            embed_local("Who pays the rent?")
        );
    }

    #[test]
    fn order_invariant() {
        let c = cosine(&embed_local("who pays rent"), &embed_local("rent pays who")).unwrap();
        assert!((c - 1.0).abs() < 1e-12);
    }

    #[test]
    fn disjoint_sentences_are_orthogonal() {
        let a = "landlord repairs leaking roof";
        let b = "defamation requires publication";
        let (ba, bb) = (buckets(a), buckets(b));
        assert!(
            ba.iter().all(|x| !bb.contains(x)),
            "fixture has a bucket collision"
        );
        assert_eq!(cosine(&embed_local(a), &embed_local(b)).unwrap(), 0.0);
    }

    #[test]
    fn empty_text_is_unusable() {
        let v = embed_local("  ?!  ");
        assert_eq!(v.dim(), LOCAL_DIM);
        assert!(!v.is_usable());
    }

    proptest! {
        #[test]
        fn unit_norm(text in "[a-zA-Z0-9 ,.?]{0,80}") {
            let v = embed_local(&text);
            if v.is_usable() {
                prop_assert!((v.norm() - 1.0).abs() < 1e-9);
            } else {
                prop_assert!(buckets(&text).is_empty());
            }
        }
    }
}
