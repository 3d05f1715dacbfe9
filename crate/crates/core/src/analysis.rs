//! Style-code analytics: cosine similarities, PCA to the plane and a kernel
//! SVC for telling two styles apart.

use crate::data::Image;
use crate::error::{Error, Result};
use crate::inference::StyleModel;
use crate::model::StyleCode;
use crate::scalar::Scalar;
use crate::transforms::{apply_transform, TransformSpec};

pub fn cosine_similarity<T: Scalar>(a: &StyleCode<T>, b: &StyleCode<T>) -> Result<f64> {
    cosine(&to_f64(a), &to_f64(b))
}

fn to_f64<T: Scalar>(c: &StyleCode<T>) -> Vec<f64> {
    c.values().iter().map(|v| v.as_f64()).collect()
}

fn cosine(a: &[f64], b: &[f64]) -> Result<f64> {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return Err(Error::invalid("cosine similarity of a zero-norm code"));
    }
    Ok((dot / (na * nb)).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityMatrix {
    pub labels: Vec<String>,
    pub values: Vec<Vec<f64>>,
}

impl SimilarityMatrix {
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i][j]
    }

    pub fn to_csv(&self) -> String {
        let mut out = format!("style,{}\n", self.labels.join(","));
        for (label, row) in self.labels.iter().zip(&self.values) {
            let cells: Vec<String> = row.iter().map(|v| format!("{v:.6}")).collect();
            out.push_str(&format!("{label},{}\n", cells.join(",")));
        }
        out
    }
}

fn styled_codes<T: Scalar, M: StyleModel<T>>(model: &M, imgs: &[Image<T>], spec: &TransformSpec) -> Result<Vec<Vec<f64>>> {
    let styled = imgs.iter().map(|x| apply_transform(spec, x)).collect::<Result<Vec<_>>>()?;
    let codes = model.style_codes(&styled.iter().collect::<Vec<_>>())?;
    Ok(codes.iter().map(to_f64).collect())
}

/// Entry `(i, j)`: cosine similarity between the codes of `T_i(x_k)` and
/// `T_j(x_k)`, averaged over images `k`.
pub fn cross_style_matrix<T: Scalar, M: StyleModel<T>>(
    model: &M,
    test_imgs: &[Image<T>],
    specs: &[TransformSpec],
) -> Result<SimilarityMatrix> {
    if test_imgs.is_empty() || specs.len() < 2 {
        return Err(Error::invalid("need at least one image and two styles"));
    }
    let codes = specs.iter().map(|s| styled_codes(model, test_imgs, s)).collect::<Result<Vec<_>>>()?;
    let m = specs.len();
    let mut values = vec![vec![0.0; m]; m];
    for i in 0..m {
        for j in i..m {
            let mut total = 0.0;
            for k in 0..test_imgs.len() {
                total += cosine(&codes[i][k], &codes[j][k])?;
            }
            values[i][j] = total / test_imgs.len() as f64;
            values[j][i] = values[i][j];
        }
    }
    Ok(SimilarityMatrix { labels: specs.iter().map(|s| s.to_string()).collect(), values })
}

/// Mean and population standard deviation of the cosine similarity over all
/// unordered pairs of codes.
pub fn pairwise_stats<T: Scalar>(codes: &[StyleCode<T>]) -> Result<(f64, f64)> {
    if codes.len() < 2 {
        return Err(Error::invalid("need at least two codes"));
    }
    let v: Vec<Vec<f64>> = codes.iter().map(to_f64).collect();
    let mut sims = Vec::new();
    for i in 0..v.len() {
        for j in i + 1..v.len() {
            sims.push(cosine(&v[i], &v[j])?);
        }
    }
    let n = sims.len() as f64;
    let mean = sims.iter().sum::<f64>() / n;
    let var = sims.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / n;
    Ok((mean, var.sqrt()))
}

pub fn same_style_stats<T: Scalar, M: StyleModel<T>>(
    model: &M,
    test_imgs: &[Image<T>],
    spec: &TransformSpec,
) -> Result<(f64, f64)> {
    if test_imgs.len() < 2 {
        return Err(Error::invalid("need at least two images"));
    }
    let styled = test_imgs.iter().map(|x| apply_transform(spec, x)).collect::<Result<Vec<_>>>()?;
    pairwise_stats(&model.style_codes(&styled.iter().collect::<Vec<_>>())?)
}

/// Eigen-decomposition of a symmetric matrix by cyclic Jacobi rotations.
/// Returns eigenvalues in descending order with matching column vectors.
pub fn symmetric_eigen(a: &[Vec<f64>]) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    let n = a.len();
    if n == 0 || a.iter().any(|r| r.len() != n) {
        return Err(Error::shape("symmetric_eigen", format!("{n} rows of unequal length")));
    }
    let mut m: Vec<Vec<f64>> = a.to_vec();
    let mut v: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| f64::from(u8::from(i == j))).collect()).collect();
    let scale: f64 = m.iter().flatten().map(|x| x * x).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
    for _sweep in 0..100 {
        let off: f64 = (0..n).flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j))).map(|(i, j)| m[i][j].powi(2)).sum();
        if off.sqrt() <= 1e-15 * scale {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if m[p][q].abs() <= f64::MIN_POSITIVE {
                    continue;
                }
                let theta = (m[q][q] - m[p][p]) / (2.0 * m[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (mkp, mkq) = (m[k][p], m[k][q]);
                    m[k][p] = c * mkp - s * mkq;
                    m[k][q] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let (mpk, mqk) = (m[p][k], m[q][k]);
                    m[p][k] = c * mpk - s * mqk;
                    m[q][k] = s * mpk + c * mqk;
                }
                for row in v.iter_mut() {
                    let (vp, vq) = (row[p], row[q]);
                    row[p] = c * vp - s * vq;
                    row[q] = s * vp + c * vq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m[j][j].total_cmp(&m[i][i]));
    let values = order.iter().map(|&i| m[i][i]).collect();
    let vectors = order.iter().map(|&i| v.iter().map(|row| row[i]).collect()).collect();
    Ok((values, vectors))
}

/// Points in the plane with a class id per point.
#[derive(Debug, Clone, PartialEq)]
pub struct Embedding2D {
    pub points: Vec<[f64; 2]>,
    pub labels: Vec<usize>,
}

impl Embedding2D {
    pub fn new(points: Vec<[f64; 2]>, labels: Vec<usize>) -> Result<Self> {
        if points.len() != labels.len() {
            return Err(Error::invalid(format!("{} points with {} labels", points.len(), labels.len())));
        }
        if points.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::invalid("embedding has non-finite coordinates"));
        }
        Ok(Self { points, labels })
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("x,y,label\n");
        for (p, l) in self.points.iter().zip(&self.labels) {
            out.push_str(&format!("{:.9},{:.9},{l}\n", p[0], p[1]));
        }
        out
    }
}

/// Fitted two-component PCA.
#[derive(Debug, Clone, PartialEq)]
pub struct Pca2d {
    pub mean: Vec<f64>,
    /// Top two unit eigenvectors of the sample covariance.
    pub components: [Vec<f64>; 2],
    /// All eigenvalues, descending.
    pub eigenvalues: Vec<f64>,
    pub points: Vec<[f64; 2]>,
}

impl Pca2d {
    pub fn explained_fraction(&self) -> f64 {
        let total: f64 = self.eigenvalues.iter().map(|v| v.max(0.0)).sum();
        (self.eigenvalues[0] + self.eigenvalues[1]) / total
    }

    /// Maps plane coordinates back into code space.
    pub fn reconstruct(&self, p: [f64; 2]) -> Vec<f64> {
        self.mean
            .iter()
            .enumerate()
            .map(|(k, m)| m + p[0] * self.components[0][k] + p[1] * self.components[1][k])
            .collect()
    }

    pub fn embed(&self, labels: Vec<usize>) -> Result<Embedding2D> {
        Embedding2D::new(self.points.clone(), labels)
    }
}

/// Projects mean-centred rows onto the top two covariance eigenvectors. Each
/// eigenvector is signed so its largest-magnitude entry is positive.
pub fn pca_2d_rows(rows: &[Vec<f64>]) -> Result<Pca2d> {
    let n = rows.len();
    if n < 3 {
        return Err(Error::InsufficientVariance(format!("{n} points, need at least 3")));
    }
    let d = rows[0].len();
    if d < 2 || rows.iter().any(|r| r.len() != d) {
        return Err(Error::shape("pca_2d", format!("rows of dimension {d}")));
    }
    let mean: Vec<f64> = (0..d).map(|k| rows.iter().map(|r| r[k]).sum::<f64>() / n as f64).collect();
    let centred: Vec<Vec<f64>> = rows.iter().map(|r| r.iter().zip(&mean).map(|(x, m)| x - m).collect()).collect();
    let mut cov = vec![vec![0.0; d]; d];
    for r in &centred {
        for i in 0..d {
            for j in 0..d {
                cov[i][j] += r[i] * r[j];
            }
        }
    }
    cov.iter_mut().flatten().for_each(|c| *c /= (n - 1) as f64);
    let (values, mut vectors) = symmetric_eigen(&cov)?;
    let top = values[0].max(0.0);
    if top <= 1e-12 || values[1] <= 1e-10 * top {
        return Err(Error::InsufficientVariance(format!("covariance rank below 2 (eigenvalues {:.3e}, {:.3e})", values[0], values[1])));
    }
    for v in vectors.iter_mut().take(2) {
        let lead = v.iter().copied().fold(0.0f64, |acc, x| if x.abs() > acc.abs() { x } else { acc });
        if lead < 0.0 {
            v.iter_mut().for_each(|x| *x = -*x);
        }
    }
    let components = [vectors[0].clone(), vectors[1].clone()];
    let points = centred
        .iter()
        .map(|r| {
            let dot = |c: &Vec<f64>| r.iter().zip(c).map(|(a, b)| a * b).sum::<f64>();
            [dot(&components[0]), dot(&components[1])]
        })
        .collect();
    Ok(Pca2d { mean, components, eigenvalues: values, points })
}

pub fn pca_2d<T: Scalar>(codes: &[StyleCode<T>]) -> Result<Pca2d> {
    pca_2d_rows(&codes.iter().map(to_f64).collect::<Vec<_>>())
}

/// Soft-margin SVC with an RBF kernel, fitted by SMO.
#[derive(Debug, Clone)]
pub struct Svc {
    pub points: Vec<[f64; 2]>,
    /// +1 for `positive_label`, -1 for `negative_label`.
    pub y: Vec<f64>,
    pub alpha: Vec<f64>,
    pub rho: f64,
    pub gamma: f64,
    pub c: f64,
    pub negative_label: usize,
    pub positive_label: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SvcOptions {
    pub c: f64,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SvcOptions {
    fn default() -> Self {
        Self { c: 1.0, tol: 1e-4, max_iter: 1_000_000 }
    }
}

fn rbf(gamma: f64, a: &[f64; 2], b: &[f64; 2]) -> f64 {
    let d2 = (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2);
    (-gamma * d2).exp()
}

/// `1 / (2 * mean squared distance)` over distinct pairs.
pub fn rbf_gamma(points: &[[f64; 2]]) -> f64 {
    let mut total = 0.0;
    let mut count = 0usize;
    for i in 0..points.len() {
        for j in i + 1..points.len() {
            total += (points[i][0] - points[j][0]).powi(2) + (points[i][1] - points[j][1]).powi(2);
            count += 1;
        }
    }
    let mean = if count == 0 { 0.0 } else { total / count as f64 };
    if mean > 0.0 {
        1.0 / (2.0 * mean)
    } else {
        1.0
    }
}

impl Svc {
    pub fn fit(embedding: &Embedding2D, opts: SvcOptions) -> Result<Self> {
        let mut classes: Vec<usize> = embedding.labels.clone();
        classes.sort_unstable();
        classes.dedup();
        if classes.len() != 2 {
            return Err(Error::invalid(format!("SVC needs exactly two classes, got {}", classes.len())));
        }
        if !(opts.c > 0.0) {
            return Err(Error::invalid("SVC penalty must be positive"));
        }
        let (neg, pos) = (classes[0], classes[1]);
        let pts = embedding.points.clone();
        let y: Vec<f64> = embedding.labels.iter().map(|&l| if l == pos { 1.0 } else { -1.0 }).collect();
        let n = pts.len();
        let gamma = rbf_gamma(&pts);
        let k: Vec<Vec<f64>> = pts.iter().map(|a| pts.iter().map(|b| rbf(gamma, a, b)).collect()).collect();
        let q = |i: usize, j: usize| y[i] * y[j] * k[i][j];
        let cc = opts.c;
        let mut alpha = vec![0.0; n];
        let mut grad = vec![-1.0; n];
        let is_up = |a: f64, yt: f64| (yt > 0.0 && a < cc) || (yt < 0.0 && a > 0.0);
        let is_low = |a: f64, yt: f64| (yt > 0.0 && a > 0.0) || (yt < 0.0 && a < cc);
        const TAU: f64 = 1e-12;
        for _ in 0..opts.max_iter {
            // working set by maximal violation, second index by second-order gain
            let mut gmax = f64::NEG_INFINITY;
            let mut i = usize::MAX;
            for t in 0..n {
                if is_up(alpha[t], y[t]) && -y[t] * grad[t] > gmax {
                    gmax = -y[t] * grad[t];
                    i = t;
                }
            }
            let mut gmin = f64::INFINITY;
            let mut j = usize::MAX;
            let mut best = f64::INFINITY;
            for t in 0..n {
                if !is_low(alpha[t], y[t]) {
                    continue;
                }
                let v = -y[t] * grad[t];
                gmin = gmin.min(v);
                if i != usize::MAX && v < gmax {
                    let b = gmax - v;
                    let a = (k[i][i] + k[t][t] - 2.0 * k[i][t]).max(TAU);
                    let gain = -(b * b) / a;
                    if gain < best {
                        best = gain;
                        j = t;
                    }
                }
            }
            if i == usize::MAX || j == usize::MAX || gmax - gmin < opts.tol {
                break;
            }
            let (ai, aj) = (alpha[i], alpha[j]);
            let quad = (k[i][i] + k[j][j] - 2.0 * k[i][j]).max(TAU);
            if y[i] != y[j] {
                let delta = (-grad[i] - grad[j]) / quad;
                let diff = ai - aj;
                let (mut ni, mut nj) = (ai + delta, aj + delta);
                if diff > 0.0 && nj < 0.0 {
                    nj = 0.0;
                    ni = diff;
                } else if diff <= 0.0 && ni < 0.0 {
                    ni = 0.0;
                    nj = -diff;
                }
                if diff > 0.0 && ni > cc {
                    ni = cc;
                    nj = cc - diff;
                } else if diff <= 0.0 && nj > cc {
                    nj = cc;
                    ni = cc + diff;
                }
                alpha[i] = ni;
                alpha[j] = nj;
            } else {
                let delta = (grad[i] - grad[j]) / quad;
                let sum = ai + aj;
                let (mut ni, mut nj) = (ai - delta, aj + delta);
                if sum > cc && ni > cc {
                    ni = cc;
                    nj = sum - cc;
                } else if sum <= cc && nj < 0.0 {
                    nj = 0.0;
                    ni = sum;
                }
                if sum > cc && nj > cc {
                    nj = cc;
                    ni = sum - cc;
                } else if sum <= cc && ni < 0.0 {
                    ni = 0.0;
                    nj = sum;
                }
                alpha[i] = ni;
                alpha[j] = nj;
            }
            let (di, dj) = (alpha[i] - ai, alpha[j] - aj);
            for t in 0..n {
                grad[t] += q(t, i) * di + q(t, j) * dj;
            }
        }
        // rho from free vectors, else the midpoint of the feasible interval
        let mut free_sum = 0.0;
        let mut free = 0usize;
        let (mut ub, mut lb) = (f64::INFINITY, f64::NEG_INFINITY);
        for t in 0..n {
            let yg = y[t] * grad[t];
            if alpha[t] > 0.0 && alpha[t] < cc {
                free_sum += yg;
                free += 1;
            } else if (alpha[t] >= cc && y[t] < 0.0) || (alpha[t] <= 0.0 && y[t] > 0.0) {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        }
        let rho = if free > 0 { free_sum / free as f64 } else { (ub + lb) / 2.0 };
        Ok(Self { points: pts, y, alpha, rho, gamma, c: cc, negative_label: neg, positive_label: pos })
    }

    pub fn decision(&self, p: [f64; 2]) -> f64 {
        self.points
            .iter()
            .zip(&self.y)
            .zip(&self.alpha)
            .filter(|(_, &a)| a > 0.0)
            .map(|((x, y), a)| a * y * rbf(self.gamma, x, &p))
            .sum::<f64>()
            - self.rho
    }

    pub fn predict(&self, p: [f64; 2]) -> usize {
        if self.decision(p) > 0.0 {
            self.positive_label
        } else {
            self.negative_label
        }
    }

    /// Largest KKT violation at the solution: box feasibility, equality
    /// constraint, and the margin conditions against the fitted offset.
    pub fn kkt_residual(&self) -> f64 {
        let mut worst: f64 = self.alpha.iter().zip(&self.y).map(|(a, y)| a * y).sum::<f64>().abs();
        for (t, p) in self.points.iter().enumerate() {
            let a = self.alpha[t];
            worst = worst.max((-a).max(0.0)).max((a - self.c).max(0.0));
            let margin = self.y[t] * self.decision(*p);
            let r = if a <= 0.0 {
                (1.0 - margin).max(0.0)
            } else if a >= self.c {
                (margin - 1.0).max(0.0)
            } else {
                (margin - 1.0).abs()
            };
            worst = worst.max(r);
        }
        worst
    }

    pub fn accuracy(&self, embedding: &Embedding2D) -> f64 {
        let hits = embedding.points.iter().zip(&embedding.labels).filter(|(p, &l)| self.predict(**p) == l).count();
        hits as f64 / embedding.points.len() as f64
    }
}

/// Fits the SVC and reports its accuracy on the same points.
pub fn svc_discriminate(embedding: &Embedding2D) -> Result<(Svc, f64)> {
    let svc = Svc::fit(embedding, SvcOptions::default())?;
    let acc = svc.accuracy(embedding);
    Ok((svc, acc))
}
