#![allow(dead_code)]

use mfl_core::linalg::Mat;
use mfl_core::tasks::Dataset;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussians(r: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| r.sample::<f64, _>(StandardNormal)).collect()
}

pub fn unit(r: &mut ChaCha8Rng, d: usize) -> Vec<f64> {
    let mut v = gaussians(r, d);
    let n = v.iter().map(|c| c * c).sum::<f64>().sqrt();
    v.iter_mut().for_each(|c| *c /= n);
    v
}

/// Gaussian inputs and labels; bias coordinate `bias`.
pub fn random_dataset(r: &mut ChaCha8Rng, d: usize, n: usize, bias: f64) -> Dataset {
    let x = gaussians(r, n * d);
    let y = gaussians(r, n);
    Dataset::from_parts(d, x, y, bias, 0, 0).unwrap()
}

/// `A Aᵀ + δI` for Gaussian `A`.
pub fn random_psd(r: &mut ChaCha8Rng, d: usize, ridge: f64) -> Mat {
    let a = Mat::from_rows(d, d, gaussians(r, d * d)).unwrap();
    let mut s = a.matmul(&a.transpose());
    for i in 0..d {
        s.data[i * d + i] += ridge;
    }
    s
}

/// `k` orthonormal rows scaled by `1/√k`, by Gram-Schmidt.
pub fn random_directions(r: &mut ChaCha8Rng, k: usize, d: usize) -> Mat {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    while rows.len() < k {
        let mut v = gaussians(r, d);
        for q in &rows {
            let c: f64 = v.iter().zip(q).map(|(a, b)| a * b).sum();
            v.iter_mut().zip(q).for_each(|(a, b)| *a -= c * b);
        }
        let n = v.iter().map(|c| c * c).sum::<f64>().sqrt();
        if n > 1e-8 {
            rows.push(v.into_iter().map(|c| c / n).collect());
        }
    }
    let s = 1.0 / (k as f64).sqrt();
    Mat::from_rows(k, d, rows.concat().into_iter().map(|c| c * s).collect()).unwrap()
}
