//! Reconstruction, latent-consistency and cross-domain triplet losses.
//!
//! All distances are per-element means in `[0, 1]` pixel units. The whole
//! objective for one batch is built as a single graph: the four images are
//! encoded once and the decoder runs on all sixteen content/style pairings.

use std::fmt;

use crate::autodiff::{Graph, Tensor, Var};
use crate::data::Image;
use crate::error::{Error, Result};
use crate::model::{ModelParams, Networks};
use crate::scalar::Scalar;
use crate::transforms::{apply_transform, TransformSpec};

/// One of the four images of a training step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum QuadSlot {
    X1,
    X2,
    TX1,
    TX2,
}

impl QuadSlot {
    pub const ALL: [QuadSlot; 4] = [QuadSlot::X1, QuadSlot::X2, QuadSlot::TX1, QuadSlot::TX2];

    pub fn index(self) -> usize {
        self as usize
    }

    /// Which raw image the anatomy comes from.
    pub fn content_id(self) -> usize {
        self.index() % 2
    }

    /// 0 for raw style, 1 for the transformed style.
    pub fn style_id(self) -> usize {
        self.index() / 2
    }

    fn from_ids(content: usize, style: usize) -> Self {
        Self::ALL[content + 2 * style]
    }
}

impl fmt::Display for QuadSlot {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            QuadSlot::X1 => "X1",
            QuadSlot::X2 => "X2",
            QuadSlot::TX1 => "T(X1)",
            QuadSlot::TX2 => "T(X2)",
        })
    }
}

/// Content source, style source, target.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CrossTriplet {
    pub content: QuadSlot,
    pub style: QuadSlot,
    pub target: QuadSlot,
}

/// The twelve cross-reconstruction triplets: every ordered pair of distinct
/// slots, with the target whose content and style both match.
pub fn enumerate_cross_triplets() -> Vec<CrossTriplet> {
    use QuadSlot::*;
    let pairs = [
        (X2, X1),
        (X1, X2),
        (X2, TX1),
        (X1, TX2),
        (X2, TX2),
        (X1, TX1),
        (TX2, X1),
        (TX1, X2),
        (TX2, X2),
        (TX1, X1),
        (TX2, TX1),
        (TX1, TX2),
    ];
    pairs
        .into_iter()
        .map(|(content, style)| CrossTriplet {
            content,
            style,
            target: QuadSlot::from_ids(content.content_id(), style.style_id()),
        })
        .collect()
}

/// Two distinct raw images and the same transform applied to each.
#[derive(Debug, Clone)]
pub struct QuadBatch<T> {
    pub x1: Image<T>,
    pub x2: Image<T>,
    pub t_x1: Image<T>,
    pub t_x2: Image<T>,
    pub spec: TransformSpec,
}

impl<T: Scalar> QuadBatch<T> {
    pub fn new(x1: Image<T>, x2: Image<T>, spec: TransformSpec) -> Result<Self> {
        if x1 == x2 {
            return Err(Error::invalid("batch images must be distinct"));
        }
        Self::new_unchecked(x1, x2, spec)
    }

    /// Like [`QuadBatch::new`] but allows `x1 == x2`.
    pub fn new_unchecked(x1: Image<T>, x2: Image<T>, spec: TransformSpec) -> Result<Self> {
        if (x1.width(), x1.height()) != (x2.width(), x2.height()) {
            return Err(Error::shape("batch", "images of different sizes"));
        }
        let t_x1 = apply_transform(&spec, &x1)?;
        let t_x2 = apply_transform(&spec, &x2)?;
        Ok(Self { x1, x2, t_x1, t_x2, spec })
    }

    pub fn image(&self, slot: QuadSlot) -> &Image<T> {
        match slot {
            QuadSlot::X1 => &self.x1,
            QuadSlot::X2 => &self.x2,
            QuadSlot::TX1 => &self.t_x1,
            QuadSlot::TX2 => &self.t_x2,
        }
    }

    /// `[4, 1, H, W]` in slot order, pixels in `[0, 1]`.
    pub fn tensor(&self) -> Tensor<T> {
        let (w, h) = (self.x1.width(), self.x1.height());
        let data = QuadSlot::ALL.iter().flat_map(|&s| self.image(s).to_unit()).collect();
        Tensor::new(&[4, 1, h, w], data).expect("batch images share a size")
    }

    pub fn cross_triplets(&self) -> Vec<(&Image<T>, &Image<T>, &Image<T>)> {
        enumerate_cross_triplets()
            .into_iter()
            .map(|t| (self.image(t.content), self.image(t.style), self.image(t.target)))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub lambda_recon: f64,
    pub lambda_same_s: f64,
    pub lambda_same_c: f64,
    pub lambda_cross: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self { lambda_recon: 10.0, lambda_same_s: 5.0, lambda_same_c: 5.0, lambda_cross: 1.0 }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        let all = [self.lambda_recon, self.lambda_same_s, self.lambda_same_c, self.lambda_cross];
        if all.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::invalid(format!("loss weights must be finite and non-negative: {self:?}")));
        }
        Ok(())
    }
}

/// Every term of the objective for one batch.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossBreakdown {
    /// Indexed by [`QuadSlot`].
    pub recon: [f64; 4],
    pub same_s: f64,
    pub same_s_t: f64,
    pub same_c: [f64; 2],
    /// Sum of the twelve triplet terms.
    pub cross: f64,
    pub total: f64,
}

impl LossBreakdown {
    pub const CSV_HEADER: &'static str =
        "step,total,recon_x1,recon_x2,recon_tx1,recon_tx2,same_s,same_sT,same_c1,same_c2,cross";

    pub fn weighted_total(&self, w: &LossWeights) -> f64 {
        w.lambda_recon * self.recon.iter().sum::<f64>()
            + w.lambda_same_s * (self.same_s + self.same_s_t)
            + w.lambda_same_c * (self.same_c[0] + self.same_c[1])
            + w.lambda_cross * self.cross
    }

    pub fn terms(&self) -> [(&'static str, f64); 9] {
        [
            ("recon_x1", self.recon[0]),
            ("recon_x2", self.recon[1]),
            ("recon_tx1", self.recon[2]),
            ("recon_tx2", self.recon[3]),
            ("same_s", self.same_s),
            ("same_sT", self.same_s_t),
            ("same_c1", self.same_c[0]),
            ("same_c2", self.same_c[1]),
            ("cross", self.cross),
        ]
    }

    pub fn csv_row(&self, step: usize) -> String {
        let mut row = format!("{step},{:e}", self.total);
        for (_, v) in self.terms() {
            row.push_str(&format!(",{v:e}"));
        }
        row
    }

    pub fn first_non_finite(&self) -> Option<&'static str> {
        if !self.total.is_finite() {
            if let Some((name, _)) = self.terms().into_iter().find(|(_, v)| !v.is_finite()) {
                return Some(name);
            }
            return Some("total");
        }
        None
    }
}

/// Graph nodes of a built objective.
#[derive(Debug, Clone, Copy)]
pub struct LossNodes {
    pub total: Var,
    /// `[16]`: four self-reconstructions in slot order, then the triplets in
    /// [`enumerate_cross_triplets`] order.
    pub pairs: Var,
    /// `[2]`: raw pair, transformed pair.
    pub same_s: Var,
    /// `[2]`: content of x1 vs t_x1, x2 vs t_x2.
    pub same_c: Var,
}

impl LossNodes {
    pub fn breakdown<T: Scalar>(&self, g: &Graph<T>) -> LossBreakdown {
        let f = |v: Var| g.value(v).data().iter().map(|x| x.as_f64()).collect::<Vec<_>>();
        let pairs = f(self.pairs);
        let ss = f(self.same_s);
        let sc = f(self.same_c);
        LossBreakdown {
            recon: [pairs[0], pairs[1], pairs[2], pairs[3]],
            same_s: ss[0],
            same_s_t: ss[1],
            same_c: [sc[0], sc[1]],
            cross: pairs[4..].iter().sum(),
            total: g.value(self.total).data()[0].as_f64(),
        }
    }
}

/// Builds the full weighted objective for a `[4, 1, H, W]` batch tensor.
pub fn build_total_loss<T: Scalar, N: Networks<T>>(
    g: &mut Graph<T>,
    nets: &N,
    batch: Var,
    weights: &LossWeights,
) -> Result<LossNodes> {
    if g.shape(batch).first() != Some(&4) {
        return Err(Error::shape("total_loss", format!("batch {:?}, expected 4 images", g.shape(batch))));
    }
    let c = nets.content(g, batch)?;
    let s = nets.style(g, batch)?;

    let mut content_idx = vec![0, 1, 2, 3];
    let mut style_idx = vec![0, 1, 2, 3];
    let mut target_idx = vec![0, 1, 2, 3];
    for t in enumerate_cross_triplets() {
        content_idx.push(t.content.index());
        style_idx.push(t.style.index());
        target_idx.push(t.target.index());
    }
    let cs = g.index_select(c, &content_idx)?;
    let ss = g.index_select(s, &style_idx)?;
    let decoded = nets.decode(g, cs, ss)?;
    let targets = g.index_select(batch, &target_idx)?;
    let pairs = g.l1_per_sample(decoded, targets)?;

    let s_a = g.index_select(s, &[0, 2])?;
    let s_b = g.index_select(s, &[1, 3])?;
    let same_s = g.l1_per_sample(s_a, s_b)?;
    let c_a = g.index_select(c, &[0, 1])?;
    let c_b = g.index_select(c, &[2, 3])?;
    let same_c = g.l1_per_sample(c_a, c_b)?;

    let lit = |x: f64| T::lit(x);
    let mut pair_w = vec![lit(weights.lambda_recon); 4];
    pair_w.extend(std::iter::repeat_n(lit(weights.lambda_cross), 12));
    let a = g.weighted_sum(pairs, &pair_w)?;
    let b = g.weighted_sum(same_s, &[lit(weights.lambda_same_s); 2])?;
    let d = g.weighted_sum(same_c, &[lit(weights.lambda_same_c); 2])?;
    let ab = g.add(a, b)?;
    let total = g.add(ab, d)?;
    Ok(LossNodes { total, pairs, same_s, same_c })
}

/// Evaluates `f` on a fresh graph with the model bound as constants.
fn eval_model<T: Scalar, R>(
    model: &ModelParams<T>,
    f: impl FnOnce(&mut Graph<T>, &crate::model::BoundModel<'_, T>) -> Result<R>,
) -> Result<R> {
    let mut g = Graph::new();
    let nets = model.bind(&mut g, false);
    f(&mut g, &nets)
}

fn image_var<T: Scalar>(g: &mut Graph<T>, imgs: &[&Image<T>]) -> Result<Var> {
    let (w, h) = (imgs[0].width(), imgs[0].height());
    let data = imgs.iter().flat_map(|i| i.to_unit()).collect();
    Ok(g.constant(Tensor::new(&[imgs.len(), 1, h, w], data)?))
}

/// MAE between the autoencoded image and the image.
pub fn image_recon_loss_with<T: Scalar, N: Networks<T>>(g: &mut Graph<T>, nets: &N, img: &Image<T>) -> Result<f64> {
    let x = image_var(g, &[img])?;
    let c = nets.content(g, x)?;
    let s = nets.style(g, x)?;
    let y = nets.decode(g, c, s)?;
    let l = g.l1_loss(y, x)?;
    Ok(g.value(l).data()[0].as_f64())
}

pub fn image_recon_loss<T: Scalar>(model: &ModelParams<T>, img: &Image<T>) -> Result<f64> {
    eval_model(model, |g, n| image_recon_loss_with(g, n, img))
}

/// `(same_s, same_sT, same_c_x1, same_c_x2)`.
pub fn latent_same_losses_with<T: Scalar, N: Networks<T>>(
    g: &mut Graph<T>,
    nets: &N,
    batch: &QuadBatch<T>,
) -> Result<(f64, f64, f64, f64)> {
    let x = g.constant(batch.tensor());
    let c = nets.content(g, x)?;
    let s = nets.style(g, x)?;
    let pick = |g: &mut Graph<T>, v: Var, i: usize| g.index_select(v, &[i]);
    let mut out = [0.0; 4];
    for (k, (v, i, j)) in [(s, 0, 1), (s, 2, 3), (c, 0, 2), (c, 1, 3)].into_iter().enumerate() {
        let a = pick(g, v, i)?;
        let b = pick(g, v, j)?;
        let l = g.l1_loss(a, b)?;
        out[k] = g.value(l).data()[0].as_f64();
    }
    Ok((out[0], out[1], out[2], out[3]))
}

pub fn latent_same_losses<T: Scalar>(model: &ModelParams<T>, batch: &QuadBatch<T>) -> Result<(f64, f64, f64, f64)> {
    eval_model(model, |g, n| latent_same_losses_with(g, n, batch))
}

/// Sum over the twelve triplets, each decoded separately.
pub fn cross_loss_with<T: Scalar, N: Networks<T>>(g: &mut Graph<T>, nets: &N, batch: &QuadBatch<T>) -> Result<f64> {
    let mut total = 0.0;
    for (p1, p2, p3) in batch.cross_triplets() {
        let a = image_var(g, &[p1])?;
        let b = image_var(g, &[p2])?;
        let t = image_var(g, &[p3])?;
        let c = nets.content(g, a)?;
        let s = nets.style(g, b)?;
        let y = nets.decode(g, c, s)?;
        let l = g.l1_loss(y, t)?;
        total += g.value(l).data()[0].as_f64();
    }
    Ok(total)
}

pub fn cross_loss<T: Scalar>(model: &ModelParams<T>, batch: &QuadBatch<T>) -> Result<f64> {
    eval_model(model, |g, n| cross_loss_with(g, n, batch))
}

pub fn total_loss_with<T: Scalar, N: Networks<T>>(
    g: &mut Graph<T>,
    nets: &N,
    batch: &QuadBatch<T>,
    weights: &LossWeights,
) -> Result<LossBreakdown> {
    weights.validate()?;
    let x = g.constant(batch.tensor());
    let nodes = build_total_loss(g, nets, x, weights)?;
    Ok(nodes.breakdown(g))
}

pub fn total_loss<T: Scalar>(model: &ModelParams<T>, batch: &QuadBatch<T>, weights: &LossWeights) -> Result<LossBreakdown> {
    eval_model(model, |g, n| total_loss_with(g, n, batch, weights))
}
