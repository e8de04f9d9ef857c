use super::{Embedding, EmbeddingProvider};
use crate::http::HttpFailure;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;
const LCG_MUL: u64 = 6_364_136_223_846_793_005;
const LCG_INC: u64 = 1_442_695_040_888_963_407;

/// FNV-1a over the little-endian seed bytes followed by the text bytes.
pub(crate) fn seeded_hash(seed: u64, text: &str) -> u64 {
    seed.to_le_bytes()
        .iter()
        .chain(text.as_bytes())
        .fold(FNV_OFFSET, |h, &b| (h ^ u64::from(b)).wrapping_mul(FNV_PRIME))
}

/// Deterministic offline embedder.
///
/// The seeded text hash seeds a 64-bit LCG (`x <- x * 6364136223846793005 +
/// 1442695040888963407`); each step's top 53 bits give one sample in
/// `[-1, 1)`. The `dim` samples are L2-normalized.
#[derive(Debug, Clone)]
pub struct StubEmbedder {
    seed: u64,
    dim: usize,
}

impl StubEmbedder {
    pub fn new(seed: u64, dim: usize) -> Self {
        Self { seed, dim }
    }

    pub fn embed(&self, text: &str) -> Embedding {
        let mut state = seeded_hash(self.seed, text);
        let mut values: Vec<f64> = (0..self.dim)
            .map(|_| {
                state = state.wrapping_mul(LCG_MUL).wrapping_add(LCG_INC);
                (state >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0
            })
            .collect();
        let norm = values.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 {
            values[0] = 1.0;
        } else {
            values.iter_mut().for_each(|x| *x /= norm);
        }
        Embedding(values.into_iter().map(|x| x as f32).collect())
    }
}

impl EmbeddingProvider for StubEmbedder {
    fn identity(&self) -> String {
        format!("stub:seed={},dim={}", self.seed, self.dim)
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn embed_batch(&self, texts: &[String]) -> Result<Vec<Embedding>, HttpFailure> {
        Ok(texts.iter().map(|t| self.embed(t)).collect())
    }
}
