//! Most-representative code and transfer evaluation.

mod common;

use common::oracles::brute_force_representative as brute_force;
use common::rng;
use rand::Rng;
use stylemapper::data::Image;
use stylemapper::experiments::phantom_dataset;
use stylemapper::inference::*;
use stylemapper::model::{ArchConfig, ModelParams, StyleCode};
use stylemapper::transforms::{apply_transform, fixed_transform, Family, TransformSpec};
use stylemapper::Result;

#[test]
fn fifty_random_codes_match_exhaustive_search() {
    let mut r = rng(21);
    let raw: Vec<Vec<f64>> = (0..50).map(|_| (0..8).map(|_| r.random_range(-2.0..2.0)).collect()).collect();
    let codes: Vec<StyleCode<f64>> = raw.iter().map(|v| StyleCode::new(v.clone()).unwrap()).collect();
    let k = brute_force(&raw);
    let set = StyleCodeSet::new(codes.clone(), "random").unwrap();
    assert_eq!(most_representative_code(&set), codes[k]);
}

#[test]
fn selection_is_permutation_invariant() {
    let mut r = rng(22);
    let raw: Vec<Vec<f64>> = (0..12).map(|_| (0..8).map(|_| r.random_range(0.0..1.0)).collect()).collect();
    let codes: Vec<StyleCode<f64>> = raw.iter().map(|v| StyleCode::new(v.clone()).unwrap()).collect();
    let pick = most_representative_code(&StyleCodeSet::new(codes.clone(), "a").unwrap());
    let mut rev = codes.clone();
    rev.reverse();
    assert_eq!(most_representative_code(&StyleCodeSet::new(rev, "b").unwrap()), pick);
    assert!(codes.contains(&pick));
}

struct Identity;

impl StyleModel<f64> for Identity {
    fn style_codes(&self, imgs: &[&Image<f64>]) -> Result<Vec<StyleCode<f64>>> {
        imgs.iter().map(|i| StyleCode::new(vec![i.pixels()[0] + 1.0; 8])).collect()
    }
    fn transfer_all(&self, imgs: &[&Image<f64>], _code: &StyleCode<f64>) -> Result<Vec<Image<f64>>> {
        Ok(imgs.iter().map(|i| (*i).clone()).collect())
    }
}

struct Perfect(TransformSpec);

impl StyleModel<f64> for Perfect {
    fn style_codes(&self, imgs: &[&Image<f64>]) -> Result<Vec<StyleCode<f64>>> {
        Identity.style_codes(imgs)
    }
    fn transfer_all(&self, imgs: &[&Image<f64>], _code: &StyleCode<f64>) -> Result<Vec<Image<f64>>> {
        imgs.iter().map(|i| apply_transform(&self.0, i)).collect()
    }
}

#[test]
fn stub_models_bracket_the_normalized_error() {
    let ds = phantom_dataset::<f64>((2, 1, 8), 16, 3).unwrap();
    let (donors, test) = split_donors(&ds.test).unwrap();
    let spec = fixed_transform(Family::PowerLaw).unwrap();
    let id = evaluate_transfer(&Identity, &test, &spec, 2, &donors).unwrap();
    assert_eq!(id.normalized, 1.0);
    let perfect = evaluate_transfer(&Perfect(spec), &test, &spec, 4, &donors).unwrap();
    assert_eq!(perfect.normalized, 0.0);
    assert!(evaluate_transfer(&Identity, &test, &spec, 5, &donors).is_err());
    assert!(evaluate_transfer(&Identity, &test, &spec, 2, &test).is_err());
}

#[test]
fn transfer_of_a_batch_keeps_shapes() {
    let ds = phantom_dataset::<f32>((2, 1, 25), 16, 4).unwrap();
    let m = ModelParams::<f32>::new(ArchConfig::tiny(), 0).unwrap();
    let code = m.encode_style(&ds.test[0]).unwrap();
    let refs: Vec<&Image<f32>> = ds.test.iter().collect();
    let out = m.transfer_all(&refs, &code).unwrap();
    assert_eq!(out.len(), 25);
    assert!(out.iter().all(|o| o.width() == 16 && o.height() == 16));
    let single = transfer(&m, &ds.test[3], &code).unwrap();
    assert_eq!(single, out[3]);
}
