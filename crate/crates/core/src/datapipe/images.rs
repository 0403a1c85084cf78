use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use crate::error::Result;

/// Supplies single-channel square images by id, row-major in `[-1, 1]`.
pub trait ImageSource {
    fn load(&self, image_id: &str, size: usize) -> Result<Vec<f64>>;
}

/// Deterministic stand-in rasters: pixels drawn from a generator seeded by
/// the SHA-256 of the image id.
#[derive(Debug, Clone, Copy, Default)]
pub struct SyntheticImages;

impl ImageSource for SyntheticImages {
    fn load(&self, image_id: &str, size: usize) -> Result<Vec<f64>> {
        Ok(synthetic_image(image_id, size))
    }
}

pub fn synthetic_image(image_id: &str, size: usize) -> Vec<f64> {
    let digest: [u8; 32] = Sha256::digest(image_id.as_bytes()).into();
    let mut rng = ChaCha8Rng::from_seed(digest);
    (0..size * size).map(|_| rng.random_range(-1.0..=1.0)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_and_distinct() {
        let a = synthetic_image("123", 12);
        assert_eq!(a.len(), 144);
        assert_eq!(a, synthetic_image("123", 12));
        assert_ne!(a, synthetic_image("124", 12));
        assert!(a.iter().all(|v| (-1.0..=1.0).contains(v)));
    }
}
