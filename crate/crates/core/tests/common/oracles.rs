//! Independent reference implementations.

use super::rng;
use nalgebra::{DMatrix, SymmetricEigen};
use rand_distr::{Distribution, StandardNormal};
use stylemapper::analysis::Embedding2D;

pub fn gaussian_rows(seed: u64, n: usize, d: usize, scales: &[f64]) -> Vec<Vec<f64>> {
    let mut r = rng(seed);
    (0..n).map(|_| (0..d).map(|k| { let z: f64 = StandardNormal.sample(&mut r); scales[k] * z }).collect()).collect()
}

/// Top-two projection from a dense symmetric eigensolver.
pub fn oracle_projection(rows: &[Vec<f64>]) -> Vec<[f64; 2]> {
    let n = rows.len();
    let d = rows[0].len();
    let m = DMatrix::from_fn(n, d, |i, j| rows[i][j]);
    let mean = m.row_mean();
    let c = DMatrix::from_fn(n, d, |i, j| m[(i, j)] - mean[j]);
    let cov = c.transpose() * &c / (n as f64 - 1.0);
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let comps: Vec<Vec<f64>> = order[..2].iter().map(|&k| eig.eigenvectors.column(k).iter().copied().collect()).collect();
    (0..n)
        .map(|i| {
            let p = |v: &Vec<f64>| (0..d).map(|j| c[(i, j)] * v[j]).sum::<f64>();
            [p(&comps[0]), p(&comps[1])]
        })
        .collect()
}

pub fn clusters(seed: u64, centres: &[([f64; 2], usize)], per: usize, spread: f64) -> Embedding2D {
    let mut r = rng(seed);
    let mut pts = Vec::new();
    let mut labels = Vec::new();
    for &(c, l) in centres {
        for _ in 0..per {
            let dx: f64 = StandardNormal.sample(&mut r);
            let dy: f64 = StandardNormal.sample(&mut r);
            pts.push([c[0] + spread * dx, c[1] + spread * dy]);
            labels.push(l);
        }
    }
    Embedding2D::new(pts, labels).unwrap()
}

/// Exhaustive most-representative search.
pub fn brute_force_representative(codes: &[Vec<f64>]) -> usize {
    if codes.len() == 1 {
        return 0;
    }
    let mut best = 0;
    let mut best_val = f64::INFINITY;
    for i in 0..codes.len() {
        let mut s = 0.0;
        for j in 0..codes.len() {
            if i != j {
                s += codes[i].iter().zip(&codes[j]).map(|(a, b)| (a - b).abs()).sum::<f64>() / 8.0;
            }
        }
        let m = s / (codes.len() - 1) as f64;
        if m < best_val {
            best_val = m;
            best = i;
        }
    }
    best
}
