//! PCA, SVC and similarity statistics against independent oracles.

mod common;

use common::oracles::{clusters, gaussian_rows, oracle_projection};
use common::rng;
use rand::Rng;
use stylemapper::analysis::*;
use stylemapper::data::Image;
use stylemapper::inference::StyleModel;
use stylemapper::model::StyleCode;
use stylemapper::transforms::{fixed_transform, Family};
use stylemapper::Result;

#[test]
fn pca_matches_dense_eigensolver_up_to_sign() {
    let rows = gaussian_rows(31, 60, 8, &[3.0, 2.0, 1.0, 0.8, 0.6, 0.4, 0.2, 0.1]);
    let pca = pca_2d_rows(&rows).unwrap();
    let oracle = oracle_projection(&rows);
    for axis in 0..2 {
        let same: f64 = pca.points.iter().zip(&oracle).map(|(a, b)| (a[axis] - b[axis]).abs()).fold(0.0, f64::max);
        let flip: f64 = pca.points.iter().zip(&oracle).map(|(a, b)| (a[axis] + b[axis]).abs()).fold(0.0, f64::max);
        assert!(same.min(flip) < 1e-6, "axis {axis}: {same} {flip}");
    }
    for c in &pca.components {
        let lead = c.iter().copied().fold(0.0f64, |a, x| if x.abs() > a.abs() { x } else { a });
        assert!(lead > 0.0);
    }
}

#[test]
fn planar_codes_reconstruct_exactly() {
    let mut r = rng(32);
    let u: Vec<f64> = (0..8).map(|_| r.random_range(-1.0..1.0)).collect();
    let v: Vec<f64> = (0..8).map(|_| r.random_range(-1.0..1.0)).collect();
    let rows: Vec<Vec<f64>> = (0..20)
        .map(|_| {
            let (a, b) = (r.random_range(-3.0..3.0), r.random_range(-3.0..3.0));
            (0..8).map(|k| 0.5 + a * u[k] + b * v[k]).collect()
        })
        .collect();
    let pca = pca_2d_rows(&rows).unwrap();
    for (row, p) in rows.iter().zip(&pca.points) {
        let back = pca.reconstruct(*p);
        for (x, y) in row.iter().zip(&back) {
            assert!((x - y).abs() < 1e-6);
        }
    }
}

#[test]
fn isotropic_cloud_spreads_variance_evenly() {
    let rows = gaussian_rows(33, 4000, 8, &[1.0; 8]);
    let frac = pca_2d_rows(&rows).unwrap().explained_fraction();
    assert!((frac - 0.25).abs() < 0.05, "{frac}");
}

#[test]
fn pca_is_translation_invariant() {
    let rows = gaussian_rows(34, 30, 8, &[2.0, 1.5, 1.0, 1.0, 0.5, 0.5, 0.2, 0.1]);
    let shifted: Vec<Vec<f64>> = rows.iter().map(|r| r.iter().map(|x| x + 7.0).collect()).collect();
    let a = pca_2d_rows(&rows).unwrap();
    let b = pca_2d_rows(&shifted).unwrap();
    for (p, q) in a.points.iter().zip(&b.points) {
        assert!((p[0] - q[0]).abs() < 1e-9 && (p[1] - q[1]).abs() < 1e-9);
    }
}

#[test]
fn separable_clusters_are_fully_separated() {
    let e = clusters(35, &[([0.0, 0.0], 0), ([10.0, 10.0], 1)], 30, 0.5);
    let (svc, acc) = svc_discriminate(&e).unwrap();
    assert_eq!(acc, 1.0);
    assert!(svc.kkt_residual() < 1e-3, "{}", svc.kkt_residual());
}

#[test]
fn xor_pattern_needs_the_kernel() {
    let e = clusters(36, &[([-2.0, -2.0], 0), ([2.0, 2.0], 0), ([-2.0, 2.0], 1), ([2.0, -2.0], 1)], 25, 0.4);
    let (svc, acc) = svc_discriminate(&e).unwrap();
    assert!(acc >= 0.95, "{acc}");
    assert!(svc.kkt_residual() < 1e-3);
    // the decision function changes sign between quadrants on a dense grid
    for (x, y, want) in [(-2.0, -2.0, 0), (2.0, 2.0, 0), (-2.0, 2.0, 1), (2.0, -2.0, 1)] {
        let mut hits = 0;
        for i in -5..=5 {
            for j in -5..=5 {
                let p = [x + 0.1 * i as f64, y + 0.1 * j as f64];
                hits += usize::from(svc.predict(p) == want);
            }
        }
        assert!(hits >= 115, "quadrant ({x}, {y}): {hits}/121");
    }
}

/// Codes derived deterministically from pixel statistics.
struct PixelStats;

impl StyleModel<f64> for PixelStats {
    fn style_codes(&self, imgs: &[&Image<f64>]) -> Result<Vec<StyleCode<f64>>> {
        imgs.iter()
            .map(|i| {
                let p = i.pixels();
                let v: Vec<f64> = (0..8).map(|k| p[(k * 37) % p.len()] / 255.0 + 0.01 * (k as f64 + 1.0)).collect();
                StyleCode::new(v)
            })
            .collect()
    }
    fn transfer_all(&self, imgs: &[&Image<f64>], _: &StyleCode<f64>) -> Result<Vec<Image<f64>>> {
        Ok(imgs.iter().map(|i| (*i).clone()).collect())
    }
}

#[test]
fn similarity_matrix_matches_double_loop() {
    let ds = stylemapper::experiments::phantom_dataset::<f64>((2, 1, 5), 16, 8).unwrap();
    let specs: Vec<_> = [Family::Linear, Family::Negative, Family::Log].iter().map(|f| fixed_transform(*f).unwrap()).collect();
    let m = cross_style_matrix(&PixelStats, &ds.test, &specs).unwrap();
    for i in 0..3 {
        for j in 0..3 {
            let mut total = 0.0;
            for x in &ds.test {
                let a = stylemapper::transforms::apply_transform(&specs[i], x).unwrap();
                let b = stylemapper::transforms::apply_transform(&specs[j], x).unwrap();
                let ca = PixelStats.style_codes(&[&a]).unwrap().remove(0);
                let cb = PixelStats.style_codes(&[&b]).unwrap().remove(0);
                total += cosine_similarity(&ca, &cb).unwrap();
            }
            assert!((m.get(i, j) - total / ds.test.len() as f64).abs() < 1e-9);
            assert!((m.get(i, j) - m.get(j, i)).abs() < 1e-9);
        }
        assert!((m.get(i, i) - 1.0).abs() < 1e-9);
    }
}

#[test]
fn pair_statistics_match_enumeration() {
    let mut r = rng(37);
    let codes: Vec<StyleCode<f64>> =
        (0..5).map(|_| StyleCode::new((0..8).map(|_| r.random_range(-1.0..1.0)).collect()).unwrap()).collect();
    let mut sims = Vec::new();
    for i in 0..5 {
        for j in i + 1..5 {
            let (a, b) = (codes[i].values(), codes[j].values());
            let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
            let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
            let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
            sims.push(dot / (na * nb));
        }
    }
    assert_eq!(sims.len(), 10);
    let mean = sims.iter().sum::<f64>() / 10.0;
    let sd = (sims.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / 10.0).sqrt();
    let (m, s) = pairwise_stats(&codes).unwrap();
    assert!((m - mean).abs() < 1e-12 && (s - sd).abs() < 1e-12);
}

#[test]
fn cosine_is_scale_invariant() {
    let a = StyleCode::new(vec![0.2, -1.0, 3.0, 0.5, 0.0, 1.0, -0.3, 2.0]).unwrap();
    let b = StyleCode::new(vec![1.0, 0.4, -2.0, 0.1, 0.7, 0.0, 0.3, 1.0]).unwrap();
    let scaled = StyleCode::new(a.values().iter().map(|x| x * 3.5).collect()).unwrap();
    let s1 = cosine_similarity(&a, &b).unwrap();
    assert!((s1 - cosine_similarity(&scaled, &b).unwrap()).abs() < 1e-12);
    assert!((s1 - cosine_similarity(&b, &a).unwrap()).abs() < 1e-15);
}
