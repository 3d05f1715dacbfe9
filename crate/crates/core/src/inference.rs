//! One-shot and few-shot transfer to a target style.

use crate::data::Image;
use crate::error::{Error, Result};
use crate::model::{ModelParams, StyleCode};
use crate::scalar::Scalar;
use crate::transforms::{apply_transform, TransformSpec};

/// What evaluation needs from a trained model. Implemented by
/// [`ModelParams`]; tests substitute stubs.
pub trait StyleModel<T: Scalar> {
    fn style_codes(&self, imgs: &[&Image<T>]) -> Result<Vec<StyleCode<T>>>;
    /// Re-renders each image with the given style.
    fn transfer_all(&self, imgs: &[&Image<T>], code: &StyleCode<T>) -> Result<Vec<Image<T>>>;
}

/// Images per forward pass, to bound graph memory.
const CHUNK: usize = 8;

impl<T: Scalar> StyleModel<T> for ModelParams<T> {
    fn style_codes(&self, imgs: &[&Image<T>]) -> Result<Vec<StyleCode<T>>> {
        let mut out = Vec::with_capacity(imgs.len());
        for chunk in imgs.chunks(CHUNK) {
            out.extend(self.encode_styles(chunk)?);
        }
        Ok(out)
    }

    fn transfer_all(&self, imgs: &[&Image<T>], code: &StyleCode<T>) -> Result<Vec<Image<T>>> {
        let mut out = Vec::with_capacity(imgs.len());
        for chunk in imgs.chunks(CHUNK) {
            out.extend(self.transfer_batch(chunk, code)?);
        }
        Ok(out)
    }
}

/// Style codes of `N >= 1` images sharing one target style.
#[derive(Debug, Clone)]
pub struct StyleCodeSet<T> {
    codes: Vec<StyleCode<T>>,
    source: String,
}

impl<T: Scalar> StyleCodeSet<T> {
    pub fn new(codes: Vec<StyleCode<T>>, source: impl Into<String>) -> Result<Self> {
        if codes.is_empty() {
            return Err(Error::invalid("style code set is empty"));
        }
        Ok(Self { codes, source: source.into() })
    }

    pub fn codes(&self) -> &[StyleCode<T>] {
        &self.codes
    }

    pub fn source(&self) -> &str {
        &self.source
    }
}

/// Index of the code with the smallest mean MAE to all other codes; the
/// lowest index wins ties.
pub fn most_representative_index<T: Scalar>(codes: &[StyleCode<T>]) -> Result<usize> {
    let n = codes.len();
    if n == 0 {
        return Err(Error::invalid("style code set is empty"));
    }
    if n == 1 {
        return Ok(0);
    }
    let mut best = (0, f64::INFINITY);
    for (i, si) in codes.iter().enumerate() {
        let total: f64 = codes.iter().enumerate().filter(|&(j, _)| j != i).map(|(_, sj)| si.mae(sj)).sum();
        let mean = total / (n - 1) as f64;
        if mean < best.1 {
            best = (i, mean);
        }
    }
    Ok(best.0)
}

pub fn most_representative_code<T: Scalar>(set: &StyleCodeSet<T>) -> StyleCode<T> {
    let k = most_representative_index(set.codes()).expect("set is non-empty");
    set.codes[k].clone()
}

pub fn transfer<T: Scalar, M: StyleModel<T>>(model: &M, content_img: &Image<T>, target: &StyleCode<T>) -> Result<Image<T>> {
    Ok(model.transfer_all(&[content_img], target)?.remove(0))
}

/// Pixel MAE in `[0, 1]` units pooled over two equally sized image lists.
pub fn set_mae<T: Scalar>(a: &[Image<T>], b: &[Image<T>]) -> Result<f64> {
    if a.len() != b.len() || a.is_empty() {
        return Err(Error::invalid(format!("image sets of sizes {} and {}", a.len(), b.len())));
    }
    let mut total = 0.0;
    let mut count = 0usize;
    for (x, y) in a.iter().zip(b) {
        let n = x.pixels().len();
        total += x.mae(y)? * n as f64;
        count += n;
    }
    Ok(total / count as f64)
}

/// Splits a test set into donors (first half) and evaluation images.
pub fn split_donors<I: Clone>(imgs: &[I]) -> Result<(Vec<I>, Vec<I>)> {
    if imgs.len() < 2 {
        return Err(Error::invalid("need at least two images to split into donors and test images"));
    }
    let half = imgs.len() / 2;
    Ok((imgs[..half].to_vec(), imgs[half..].to_vec()))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransferEval {
    pub n_target: usize,
    /// MAE between transferred images and the transformed ground truth.
    pub mae: f64,
    /// MAE between the untouched test images and the ground truth.
    pub baseline: f64,
    pub normalized: f64,
}

/// Target code from the first `n_target` transformed donors, then transfer of
/// every test image and comparison against its transformed version.
pub fn evaluate_transfer<T: Scalar, M: StyleModel<T>>(
    model: &M,
    test_imgs: &[Image<T>],
    target_spec: &TransformSpec,
    n_target: usize,
    donor_imgs: &[Image<T>],
) -> Result<TransferEval> {
    if n_target == 0 || n_target > donor_imgs.len() {
        return Err(Error::invalid(format!("n_target {n_target} with {} donor images", donor_imgs.len())));
    }
    if test_imgs.is_empty() {
        return Err(Error::invalid("no test images"));
    }
    if test_imgs.iter().any(|t| donor_imgs.contains(t)) {
        return Err(Error::invalid("donor and test images overlap"));
    }
    let donors = donor_imgs[..n_target].iter().map(|d| apply_transform(target_spec, d)).collect::<Result<Vec<_>>>()?;
    let codes = model.style_codes(&donors.iter().collect::<Vec<_>>())?;
    let code = most_representative_code(&StyleCodeSet::new(codes, target_spec.to_string())?);
    let truth = test_imgs.iter().map(|x| apply_transform(target_spec, x)).collect::<Result<Vec<_>>>()?;
    let moved = model.transfer_all(&test_imgs.iter().collect::<Vec<_>>(), &code)?;
    let mae = set_mae(&moved, &truth)?;
    let baseline = set_mae(test_imgs, &truth)?;
    if baseline <= 0.0 {
        return Err(Error::invalid(format!("{target_spec} leaves the test images unchanged; normalized MAE undefined")));
    }
    Ok(TransferEval { n_target, mae, baseline, normalized: mae / baseline })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn code(v: f64) -> StyleCode<f64> {
        StyleCode::new(vec![v; 8]).unwrap()
    }

    #[test]
    fn single_code_is_returned() {
        let set = StyleCodeSet::new(vec![code(0.3)], "one").unwrap();
        assert_eq!(most_representative_code(&set), code(0.3));
    }

    #[test]
    fn middle_code_wins() {
        let set = StyleCodeSet::new(vec![code(0.0), code(1.0), code(0.1)], "three").unwrap();
        assert_eq!(most_representative_code(&set), code(0.1));
    }

    #[test]
    fn ties_go_to_lowest_index() {
        assert_eq!(most_representative_index(&[code(0.0), code(1.0)]).unwrap(), 0);
        assert!(StyleCodeSet::<f64>::new(vec![], "none").is_err());
    }

    #[test]
    fn donor_split_halves() {
        let (d, t) = split_donors(&[1, 2, 3, 4, 5]).unwrap();
        assert_eq!(d, vec![1, 2]);
        assert_eq!(t, vec![3, 4, 5]);
    }
}
