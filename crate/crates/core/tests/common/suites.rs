//! Gradient checks shared by the focused tests and the acceptance target.

use super::{gradcheck, model_gradcheck, project, random_tensor, random_tensor_off_zero, rng};
use stylemapper::autodiff::{Conv2dOptions, Tensor};
use stylemapper::data::Image;
use stylemapper::losses::{build_total_loss, LossWeights, QuadBatch};
use stylemapper::model::{ArchConfig, ModelParams, Networks};
use stylemapper::transforms::{fixed_transform, Family};

const STEP: f64 = 1e-3;
pub const PRIMITIVE_TOL: f64 = 1e-3;
const NET_STEP: f64 = 1e-5;
pub const NETWORK_TOL: f64 = 1e-2;

fn push(out: &mut Vec<(String, f64)>, name: &str, err: f64) {
    out.push((name.to_string(), err));
}

pub fn elementwise_primitives(out: &mut Vec<(String, f64)>) {
    let mut r = rng(1);
    let a = random_tensor(&mut r, &[2, 3, 4], -1.0, 1.0);
    let b = random_tensor(&mut r, &[2, 3, 4], -1.0, 1.0);
    push(out, "add", gradcheck(&[a.clone(), b.clone()], |g, v| { let o = g.add(v[0], v[1]).unwrap(); project(g, o, 1) }, STEP, None, 0));
    push(out, "sub", gradcheck(&[a.clone(), b.clone()], |g, v| { let o = g.sub(v[0], v[1]).unwrap(); project(g, o, 2) }, STEP, None, 0));
    push(out, "mul", gradcheck(&[a.clone(), b.clone()], |g, v| { let o = g.mul(v[0], v[1]).unwrap(); project(g, o, 3) }, STEP, None, 0));
    push(out, "scale", gradcheck(&[a.clone()], |g, v| { let o = g.scale(v[0], -2.5); project(g, o, 4) }, STEP, None, 0));
    push(out, "sigmoid", gradcheck(&[a.clone()], |g, v| { let o = g.sigmoid(v[0]); project(g, o, 5) }, STEP, None, 0));
    push(out, "tanh", gradcheck(&[a.clone()], |g, v| { let o = g.tanh(v[0]); project(g, o, 6) }, STEP, None, 0));
    let k = random_tensor_off_zero(&mut r, &[2, 3, 4]);
    push(out, "relu", gradcheck(&[k], |g, v| { let o = g.relu(v[0]); project(g, o, 7) }, STEP, None, 0));
    push(out, "reshape", gradcheck(&[a.clone()], |g, v| { let o = g.reshape(v[0], &[6, 4]).unwrap(); project(g, o, 8) }, STEP, None, 0));
    push(out, "sum", gradcheck(&[a], |g, v| g.sum(v[0]), STEP, None, 0));
}

pub fn matrix_primitives(out: &mut Vec<(String, f64)>) {
    let mut r = rng(2);
    let a = random_tensor(&mut r, &[3, 4], -1.0, 1.0);
    let b = random_tensor(&mut r, &[4, 5], -1.0, 1.0);
    push(out, "matmul", gradcheck(&[a.clone(), b], |g, v| { let o = g.matmul(v[0], v[1]).unwrap(); project(g, o, 9) }, STEP, None, 0));
    let w = random_tensor(&mut r, &[6, 4], -1.0, 1.0);
    let bias = random_tensor(&mut r, &[6], -1.0, 1.0);
    push(out, "fully_connected",
        gradcheck(&[a, w, bias], |g, v| { let o = g.linear(v[0], v[1], Some(v[2])).unwrap(); project(g, o, 10) }, STEP, None, 0),
    );
}

pub fn convolution_variants(out: &mut Vec<(String, f64)>) {
    let mut r = rng(3);
    for (k, stride, pad) in [(3, 1, 1), (4, 2, 1), (3, 2, 1), (1, 1, 0), (3, 1, 0), (5, 1, 2)] {
        let x = random_tensor(&mut r, &[2, 3, 8, 8], -1.0, 1.0);
        let w = random_tensor(&mut r, &[4, 3, k, k], -0.5, 0.5);
        let b = random_tensor(&mut r, &[4], -0.5, 0.5);
        let opts = Conv2dOptions { stride, padding: pad };
        let err = gradcheck(
            &[x, w, b],
            |g, v| { let o = g.conv2d(v[0], v[1], Some(v[2]), opts).unwrap(); project(g, o, 11) },
            STEP,
            None,
            0,
        );
        push(out, &format!("conv2d k={k} s={stride} p={pad}"), err);
    }
}

pub fn upsample_and_pooling(out: &mut Vec<(String, f64)>) {
    let mut r = rng(4);
    let x = random_tensor(&mut r, &[2, 3, 4, 4], -1.0, 1.0);
    push(out, "upsample2x", gradcheck(&[x.clone()], |g, v| { let o = g.upsample2x(v[0]).unwrap(); project(g, o, 12) }, STEP, None, 0));
    push(out, "global_avg_pool", gradcheck(&[x], |g, v| { let o = g.global_avg_pool(v[0]).unwrap(); project(g, o, 13) }, STEP, None, 0));
}

pub fn normalisation_primitives(out: &mut Vec<(String, f64)>) {
    let mut r = rng(5);
    let x = random_tensor(&mut r, &[2, 3, 8, 8], -2.0, 2.0);
    push(out, "instance_norm", gradcheck(&[x.clone()], |g, v| { let o = g.instance_norm(v[0], 1e-5).unwrap(); project(g, o, 14) }, STEP, None, 0));
    let s = random_tensor(&mut r, &[2, 3], 0.5, 1.5);
    let t = random_tensor(&mut r, &[2, 3], -1.0, 1.0);
    push(out, "channel_affine",
        gradcheck(&[x, s, t], |g, v| { let o = g.channel_affine(v[0], v[1], v[2]).unwrap(); project(g, o, 15) }, STEP, None, 0),
    );
}

pub fn selection_and_losses(out: &mut Vec<(String, f64)>) {
    let mut r = rng(6);
    let x = random_tensor(&mut r, &[4, 2, 3], -1.0, 1.0);
    push(out, "index_select",
        gradcheck(&[x.clone()], |g, v| { let o = g.index_select(v[0], &[3, 0, 0, 2, 1]).unwrap(); project(g, o, 16) }, STEP, None, 0),
    );
    let a = random_tensor_off_zero(&mut r, &[4, 2, 3]);
    let zero = Tensor::zeros(&[4, 2, 3]);
    push(out, "l1_loss", gradcheck(&[a.clone(), zero.clone()], |g, v| g.l1_loss(v[0], v[1]).unwrap(), STEP, None, 0));
    push(out, "l1_per_sample",
        gradcheck(&[a, zero], |g, v| { let o = g.l1_per_sample(v[0], v[1]).unwrap(); project(g, o, 17) }, STEP, None, 0),
    );
    push(out, "weighted_sum", gradcheck(&[x], |g, v| project(g, v[0], 18), STEP, None, 0));
}

pub fn primitive_errors() -> Vec<(String, f64)> {
    let mut out = Vec::new();
    elementwise_primitives(&mut out);
    matrix_primitives(&mut out);
    convolution_variants(&mut out);
    upsample_and_pooling(&mut out);
    normalisation_primitives(&mut out);
    selection_and_losses(&mut out);
    out
}

pub fn tiny_f64() -> ModelParams<f64> {
    ModelParams::new(ArchConfig::tiny(), 3).unwrap()
}

/// Content encoder, style encoder, full autoencoder and the total training
/// loss, each on random 8x8 inputs.
pub fn network_errors() -> Vec<(String, f64)> {
    let m = tiny_f64();
    let mut out = Vec::new();
    let x = random_tensor(&mut rng(10), &[2, 1, 8, 8], 0.0, 1.0);
    let err = model_gradcheck(&m, |g, n| { let xv = g.constant(x.clone()); let c = n.content(g, xv).unwrap(); project(g, c, 1) }, 40, NET_STEP, 1);
    push(&mut out, "content encoder", err);

    let x = random_tensor(&mut rng(11), &[2, 1, 8, 8], 0.0, 1.0);
    let err = model_gradcheck(&m, |g, n| { let xv = g.constant(x.clone()); let s = n.style(g, xv).unwrap(); project(g, s, 2) }, 40, NET_STEP, 2);
    push(&mut out, "style encoder", err);

    let x = random_tensor(&mut rng(12), &[1, 1, 8, 8], 0.0, 1.0);
    let err = model_gradcheck(
        &m,
        |g, n| {
            let xv = g.constant(x.clone());
            let c = n.content(g, xv).unwrap();
            let s = n.style(g, xv).unwrap();
            let y = n.decode(g, c, s).unwrap();
            project(g, y, 3)
        },
        60,
        NET_STEP,
        3,
    );
    push(&mut out, "autoencoder", err);

    let mut r = rng(13);
    let a = random_tensor(&mut r, &[64], 0.0, 255.0);
    let b = random_tensor(&mut r, &[64], 0.0, 255.0);
    let x1 = Image::new(8, 8, a.into_data()).unwrap();
    let x2 = Image::new(8, 8, b.into_data()).unwrap();
    let batch = QuadBatch::new(x1, x2, fixed_transform(Family::Log).unwrap()).unwrap();
    let t = batch.tensor();
    let err = model_gradcheck(
        &m,
        |g, n| {
            let xv = g.constant(t.clone());
            build_total_loss(g, n, xv, &LossWeights::default()).unwrap().total
        },
        20,
        NET_STEP,
        4,
    );
    push(&mut out, "total loss", err);
    out
}
