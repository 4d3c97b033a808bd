//! Helpers shared by the integration suites: seeded normal draws and
//! exactly-orthonormal random designs.

// Each integration binary compiles this module separately and uses its
// own subset of the helpers.
#![allow(dead_code)]

use efs_core::greedy::DesignMatrix;
use rand_chacha::ChaCha8Rng;
use rand_core::RngCore;

/// Standard normal draw via the polar transform.
pub fn normal(rng: &mut ChaCha8Rng) -> f64 {
    loop {
        let u = (rng.next_u64() >> 11) as f64 / (1u64 << 53) as f64;
        let v = (rng.next_u64() >> 11) as f64 / (1u64 << 53) as f64;
        let a = 2.0 * u - 1.0;
        let b = 2.0 * v - 1.0;
        let s = a * a + b * b;
        if s > 0.0 && s < 1.0 {
            return a * (-2.0 * s.ln() / s).sqrt();
        }
    }
}

pub fn normal_vec(rng: &mut ChaCha8Rng, len: usize) -> Vec<f64> {
    (0..len).map(|_| normal(rng)).collect()
}

/// Random design whose columns are exactly orthonormal in the `1/n`
/// inner product: Gaussian columns passed twice through modified
/// Gram-Schmidt, then scaled by `sqrt(n)`.
pub fn random_orthonormal_design(n: usize, p: usize, seed: u64) -> DesignMatrix {
    use rand_core::SeedableRng;
    assert!(p <= n);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut cols: Vec<Vec<f64>> = (0..p).map(|_| normal_vec(&mut rng, n)).collect();
    for _pass in 0..2 {
        for j in 0..p {
            for i in 0..j {
                let d: f64 = cols[i].iter().zip(&cols[j]).map(|(&a, &b)| a * b).sum();
                for t in 0..n {
                    cols[j][t] -= d * cols[i][t];
                }
            }
            let norm: f64 = cols[j].iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!(norm > 1e-8, "degenerate random draw");
            for v in cols[j].iter_mut() {
                *v /= norm;
            }
        }
    }
    let scale = (n as f64).sqrt();
    let values: Vec<f64> = cols.iter().flatten().map(|&v| v * scale).collect();
    DesignMatrix::new(n, p, values).unwrap()
}

/// Design whose `j`-th column is `sqrt(n) e_j`: exactly orthonormal, and
/// least-squares coefficients are just scaled response entries.
pub fn canonical_design(n: usize, p: usize) -> DesignMatrix {
    assert!(p <= n);
    let mut values = vec![0.0; n * p];
    let root = (n as f64).sqrt();
    for j in 0..p {
        values[j * n + j] = root;
    }
    DesignMatrix::new(n, p, values).unwrap()
}
