use super::{MethodVector, PathContext, CODE_DIM};

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

fn fnv1a(seed: u64, bytes: &[u8]) -> u64 {
    let mut h = FNV_OFFSET;
    for b in seed.to_le_bytes().iter().chain(bytes) {
        h ^= u64::from(*b);
        h = h.wrapping_mul(FNV_PRIME);
    }
    h
}

/// Bucket of a context string in `[0, CODE_DIM)`.
pub(crate) fn bucket(seed: u64, context: &PathContext) -> usize {
    (fnv1a(seed, context.to_string().as_bytes()) % CODE_DIM as u64) as usize
}

/// ±1 per bucket. Signs are shared within a bucket so counts never cancel.
pub(crate) fn bucket_sign(seed: u64, bucket: usize) -> f64 {
    let h = fnv1a(seed ^ 0x9e37_79b9_7f4a_7c15, &(bucket as u64).to_le_bytes());
    if h >> 63 == 0 {
        1.0
    } else {
        -1.0
    }
}

/// Signed bag-of-contexts count vector, scaled to unit L2 norm. The hash is
/// FNV-1a over the seed and the context's `start,path,end` UTF-8 bytes, so
/// results do not depend on platform or process.
pub fn embed_hashed(seed: u64, contexts: &[PathContext]) -> MethodVector {
    let mut values = vec![0.0; CODE_DIM];
    if contexts.is_empty() {
        return MethodVector {
            values,
            degenerate: true,
        };
    }
    for context in contexts {
        let b = bucket(seed, context);
        values[b] += bucket_sign(seed, b);
    }
    let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
    for v in &mut values {
        *v /= norm;
    }
    MethodVector {
        values,
        degenerate: false,
    }
}
