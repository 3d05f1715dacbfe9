#![allow(dead_code)]

pub mod oracles;
pub mod suites;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use stylemapper::autodiff::{Graph, Tensor, Var};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_tensor(rng: &mut ChaCha8Rng, shape: &[usize], lo: f64, hi: f64) -> Tensor<f64> {
    let n = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| rng.random_range(lo..hi)).collect()).unwrap()
}

/// Values bounded away from zero so kinks (ReLU, |.|) stay outside the
/// finite-difference stencil.
pub fn random_tensor_off_zero(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor<f64> {
    let n = shape.iter().product();
    let data = (0..n)
        .map(|_| {
            let m = rng.random_range(0.05..1.0);
            if rng.random_bool(0.5) { m } else { -m }
        })
        .collect();
    Tensor::new(shape, data).unwrap()
}

/// Largest relative error between the analytic gradient and central
/// differences over every input coordinate (or `max_coords` random ones).
pub fn gradcheck<F>(inputs: &[Tensor<f64>], build: F, step: f64, max_coords: Option<usize>, seed: u64) -> f64
where
    F: Fn(&mut Graph<f64>, &[Var]) -> Var,
{
    let eval = |vals: &[Tensor<f64>]| -> f64 {
        let mut g = Graph::new();
        let vars: Vec<Var> = vals.iter().map(|t| g.constant(t.clone())).collect();
        let out = build(&mut g, &vars);
        g.value(out).data()[0]
    };
    let mut g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|t| g.param(t.clone())).collect();
    let out = build(&mut g, &vars);
    g.backward(out).unwrap();
    let analytic: Vec<Vec<f64>> = inputs
        .iter()
        .zip(&vars)
        .map(|(t, &v)| g.grad(v).map(<[f64]>::to_vec).unwrap_or_else(|| vec![0.0; t.len()]))
        .collect();

    let mut coords: Vec<(usize, usize)> =
        inputs.iter().enumerate().flat_map(|(i, t)| (0..t.len()).map(move |j| (i, j))).collect();
    if let Some(k) = max_coords {
        let mut r = rng(seed);
        let mut picked = Vec::with_capacity(k);
        for _ in 0..k.min(coords.len()) {
            let idx = r.random_range(0..coords.len());
            picked.push(coords.swap_remove(idx));
        }
        coords = picked;
    }
    let mut worst: f64 = 0.0;
    let mut vals = inputs.to_vec();
    for (i, j) in coords {
        let orig = vals[i].data()[j];
        vals[i].data_mut()[j] = orig + step;
        let fp = eval(&vals);
        vals[i].data_mut()[j] = orig - step;
        let fm = eval(&vals);
        vals[i].data_mut()[j] = orig;
        let numeric = (fp - fm) / (2.0 * step);
        let a = analytic[i][j];
        let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-4);
        worst = worst.max(rel);
    }
    worst
}

/// Reduces any tensor to a scalar with fixed pseudo-random weights so every
/// output element contributes a distinct amount.
pub fn project(g: &mut Graph<f64>, v: Var, seed: u64) -> Var {
    let n = g.value(v).len();
    let mut r = rng(seed);
    let w: Vec<f64> = (0..n).map(|_| r.random_range(-1.0..1.0)).collect();
    g.weighted_sum(v, &w).unwrap()
}

/// Relative error between backprop and central differences on `coords`
/// random parameter entries of a whole model.
pub fn model_gradcheck<F>(model: &stylemapper::model::ModelParams<f64>, build: F, coords: usize, step: f64, seed: u64) -> f64
where
    F: Fn(&mut Graph<f64>, &stylemapper::model::BoundModel<'_, f64>) -> Var,
{
    let mut g = Graph::new();
    let nets = model.bind(&mut g, true);
    let out = build(&mut g, &nets);
    g.backward(out).unwrap();
    let grads = model.store().gradients(&g, nets.params());

    let eval = |m: &stylemapper::model::ModelParams<f64>| -> f64 {
        let mut g = Graph::new();
        let nets = m.bind(&mut g, false);
        let out = build(&mut g, &nets);
        g.value(out).data()[0]
    };
    let sizes: Vec<usize> = model.store().iter().map(|(_, t)| t.len()).collect();
    let total: usize = sizes.iter().sum();
    let mut r = rng(seed);
    let mut work = model.clone();
    let mut worst: f64 = 0.0;
    for _ in 0..coords {
        let mut flat = r.random_range(0..total);
        let mut ti = 0;
        while flat >= sizes[ti] {
            flat -= sizes[ti];
            ti += 1;
        }
        let orig = work.store().iter().nth(ti).unwrap().1.data()[flat];
        work.store_mut().tensors_mut()[ti].data_mut()[flat] = orig + step;
        let fp = eval(&work);
        work.store_mut().tensors_mut()[ti].data_mut()[flat] = orig - step;
        let fm = eval(&work);
        work.store_mut().tensors_mut()[ti].data_mut()[flat] = orig;
        let numeric = (fp - fm) / (2.0 * step);
        let a = grads[ti][flat];
        let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-4);
        worst = worst.max(rel);
    }
    worst
}
