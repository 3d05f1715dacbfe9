//! Content encoder, style encoder and AdaIN decoder.
//!
//! Networks see pixels in `[0, 1]`; conversion from the `[0, 255]` image
//! domain happens at this boundary.

use std::collections::BTreeMap;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{
    decode_checkpoint, encode_checkpoint, kaiming_init, BoundParams, Conv2dOptions, Graph, ParamId, ParamStore,
    Tensor, Var,
};
use crate::data::Image;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Length of every style code.
pub const STYLE_DIM: usize = 8;

const IN_EPS: f64 = 1e-5;

/// Layer counts and widths. `base_channels` is the stem width; the content
/// code has `4 * base_channels` channels at a quarter of the input size.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ArchConfig {
    pub base_channels: usize,
    pub content_res_blocks: usize,
    pub decoder_res_blocks: usize,
    pub style_downsamples: usize,
    pub mlp_hidden: usize,
    pub stem_kernel: usize,
    pub down_kernel: usize,
    pub up_kernel: usize,
}

impl Default for ArchConfig {
    fn default() -> Self {
        Self {
            base_channels: 64,
            content_res_blocks: 4,
            decoder_res_blocks: 4,
            style_downsamples: 3,
            mlp_hidden: 256,
            stem_kernel: 7,
            down_kernel: 4,
            up_kernel: 5,
        }
    }
}

impl ArchConfig {
    /// Small CPU-friendly variant used for desk-scale experiments.
    pub fn desk() -> Self {
        Self {
            base_channels: 16,
            content_res_blocks: 4,
            decoder_res_blocks: 4,
            style_downsamples: 3,
            mlp_hidden: 64,
            stem_kernel: 3,
            down_kernel: 4,
            up_kernel: 3,
        }
    }

    /// Tiny variant for gradient checks at 8x8.
    pub fn tiny() -> Self {
        Self {
            base_channels: 2,
            content_res_blocks: 1,
            decoder_res_blocks: 1,
            style_downsamples: 3,
            mlp_hidden: 6,
            stem_kernel: 3,
            down_kernel: 4,
            up_kernel: 3,
        }
    }

    pub fn content_channels(&self) -> usize {
        4 * self.base_channels
    }

    pub fn validate(&self) -> Result<()> {
        let odd = |k: usize| k % 2 == 1;
        if self.base_channels == 0
            || self.mlp_hidden == 0
            || self.style_downsamples == 0
            || !odd(self.stem_kernel)
            || !odd(self.up_kernel)
            || self.down_kernel < 2
        {
            return Err(Error::invalid(format!("unsupported architecture {self:?}")));
        }
        Ok(())
    }

    pub fn entries(&self) -> Vec<(&'static str, usize)> {
        vec![
            ("base_channels", self.base_channels),
            ("content_res_blocks", self.content_res_blocks),
            ("decoder_res_blocks", self.decoder_res_blocks),
            ("style_downsamples", self.style_downsamples),
            ("mlp_hidden", self.mlp_hidden),
            ("stem_kernel", self.stem_kernel),
            ("down_kernel", self.down_kernel),
            ("up_kernel", self.up_kernel),
        ]
    }

    pub fn set(&mut self, key: &str, value: usize) -> Result<()> {
        let slot = match key {
            "base_channels" => &mut self.base_channels,
            "content_res_blocks" => &mut self.content_res_blocks,
            "decoder_res_blocks" => &mut self.decoder_res_blocks,
            "style_downsamples" => &mut self.style_downsamples,
            "mlp_hidden" => &mut self.mlp_hidden,
            "stem_kernel" => &mut self.stem_kernel,
            "down_kernel" => &mut self.down_kernel,
            "up_kernel" => &mut self.up_kernel,
            _ => return Err(Error::Config { key: key.into(), message: "unknown architecture key".into() }),
        };
        *slot = value;
        Ok(())
    }

    fn header(&self) -> String {
        self.entries().iter().map(|(k, v)| format!("{k}={v}\n")).collect()
    }

    fn from_header(text: &str) -> Result<Self> {
        let mut arch = ArchConfig::default();
        for line in text.lines().filter(|l| !l.trim().is_empty()) {
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Format { what: "checkpoint header", message: line.to_string() })?;
            let v = v
                .trim()
                .parse()
                .map_err(|_| Error::Format { what: "checkpoint header", message: format!("`{k}` is not an integer") })?;
            arch.set(k.trim(), v)?;
        }
        arch.validate()?;
        Ok(arch)
    }
}

/// Spatial feature map `[C, H/4, W/4]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ContentCode<T>(pub Tensor<T>);

/// Eight-dimensional style vector.
#[derive(Debug, Clone, PartialEq)]
pub struct StyleCode<T>(Vec<T>);

impl<T: Scalar> StyleCode<T> {
    pub fn new(values: Vec<T>) -> Result<Self> {
        if values.len() != STYLE_DIM {
            return Err(Error::shape("style code", format!("{} values, expected {STYLE_DIM}", values.len())));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("style code has non-finite entries"));
        }
        Ok(Self(values))
    }

    pub fn values(&self) -> &[T] {
        &self.0
    }

    /// Mean absolute difference over the entries.
    pub fn mae(&self, other: &Self) -> f64 {
        self.0.iter().zip(&other.0).map(|(a, b)| (a.as_f64() - b.as_f64()).abs()).sum::<f64>() / STYLE_DIM as f64
    }
}

#[derive(Debug, Clone, Copy)]
struct Conv {
    w: ParamId,
    b: ParamId,
    opts: Conv2dOptions,
}

#[derive(Debug, Clone, Copy)]
struct Dense {
    w: ParamId,
    b: ParamId,
}

#[derive(Debug, Clone, Copy)]
struct ResBlock {
    first: Conv,
    second: Conv,
}

#[derive(Debug, Clone)]
struct Layout {
    content_stem: Conv,
    content_down: Vec<Conv>,
    content_res: Vec<ResBlock>,
    style_stem: Conv,
    style_down: Vec<Conv>,
    style_fc: Dense,
    mlp_in: Dense,
    mlp_out: Dense,
    dec_res: Vec<ResBlock>,
    dec_up: Vec<Conv>,
    dec_out: Conv,
}

struct Builder<'a, T> {
    store: ParamStore<T>,
    rng: &'a mut ChaCha8Rng,
}

impl<T: Scalar> Builder<'_, T> {
    fn conv(&mut self, name: &str, cin: usize, cout: usize, k: usize, stride: usize, padding: usize) -> Result<Conv> {
        let w = kaiming_init(&[cout, cin, k, k], cin * k * k, self.rng)?;
        let w = self.store.insert(format!("{name}.weight"), w);
        let b = self.store.insert(format!("{name}.bias"), Tensor::zeros(&[cout]));
        Ok(Conv { w, b, opts: Conv2dOptions { stride, padding } })
    }

    fn dense(&mut self, name: &str, fin: usize, fout: usize) -> Result<Dense> {
        let w = kaiming_init(&[fout, fin], fin, self.rng)?;
        let w = self.store.insert(format!("{name}.weight"), w);
        let b = self.store.insert(format!("{name}.bias"), Tensor::zeros(&[fout]));
        Ok(Dense { w, b })
    }

    fn res(&mut self, name: &str, ch: usize) -> Result<ResBlock> {
        Ok(ResBlock {
            first: self.conv(&format!("{name}.conv1"), ch, ch, 3, 1, 1)?,
            second: self.conv(&format!("{name}.conv2"), ch, ch, 3, 1, 1)?,
        })
    }
}

/// Trainable parameters of all three networks plus their wiring.
#[derive(Debug, Clone)]
pub struct ModelParams<T> {
    arch: ArchConfig,
    store: ParamStore<T>,
    layout: Layout,
}

impl<T: Scalar> ModelParams<T> {
    /// Kaiming-initialised weights, zero biases.
    pub fn new(arch: ArchConfig, seed: u64) -> Result<Self> {
        arch.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut b = Builder { store: ParamStore::new(), rng: &mut rng };
        let base = arch.base_channels;
        let cc = arch.content_channels();
        let (sk, dk, uk) = (arch.stem_kernel, arch.down_kernel, arch.up_kernel);
        let down_pad = (dk - 1) / 2;

        let content_stem = b.conv("content.stem", 1, base, sk, 1, sk / 2)?;
        let content_down = vec![
            b.conv("content.down0", base, 2 * base, dk, 2, down_pad)?,
            b.conv("content.down1", 2 * base, cc, dk, 2, down_pad)?,
        ];
        let content_res = (0..arch.content_res_blocks).map(|i| b.res(&format!("content.res{i}"), cc)).collect::<Result<_>>()?;

        let style_stem = b.conv("style.stem", 1, base, sk, 1, sk / 2)?;
        let mut style_down = Vec::with_capacity(arch.style_downsamples);
        let mut ch = base;
        for i in 0..arch.style_downsamples {
            let next = if i < 2 { ch * 2 } else { ch };
            style_down.push(b.conv(&format!("style.down{i}"), ch, next, dk, 2, down_pad)?);
            ch = next;
        }
        let style_fc = b.dense("style.fc", ch, STYLE_DIM)?;

        let adain_params = 2 * 2 * cc * arch.decoder_res_blocks;
        let mlp_in = b.dense("decoder.mlp0", STYLE_DIM, arch.mlp_hidden)?;
        let mlp_out = b.dense("decoder.mlp1", arch.mlp_hidden, adain_params.max(1))?;
        let dec_res = (0..arch.decoder_res_blocks).map(|i| b.res(&format!("decoder.res{i}"), cc)).collect::<Result<_>>()?;
        let dec_up = vec![
            b.conv("decoder.up0", cc, 2 * base, uk, 1, uk / 2)?,
            b.conv("decoder.up1", 2 * base, base, uk, 1, uk / 2)?,
        ];
        let dec_out = b.conv("decoder.out", base, 1, sk, 1, sk / 2)?;

        let store = b.store;
        Ok(Self {
            arch,
            store,
            layout: Layout {
                content_stem,
                content_down,
                content_res,
                style_stem,
                style_down,
                style_fc,
                mlp_in,
                mlp_out,
                dec_res,
                dec_up,
                dec_out,
            },
        })
    }

    pub fn arch(&self) -> &ArchConfig {
        &self.arch
    }

    pub fn store(&self) -> &ParamStore<T> {
        &self.store
    }

    pub fn store_mut(&mut self) -> &mut ParamStore<T> {
        &mut self.store
    }

    pub fn all_finite(&self) -> bool {
        self.store.all_finite()
    }

    pub fn cast<U: Scalar>(&self) -> ModelParams<U> {
        ModelParams { arch: self.arch, store: self.store.cast(), layout: self.layout.clone() }
    }

    /// Places the parameters on `graph` and returns the network view over them.
    pub fn bind<'a>(&'a self, graph: &mut Graph<T>, trainable: bool) -> BoundModel<'a, T> {
        BoundModel { model: self, vars: self.store.bind(graph, trainable) }
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        encode_checkpoint(&self.arch.header(), &self.store)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let ck = decode_checkpoint(bytes)?;
        let arch = ArchConfig::from_header(&ck.header)?;
        let mut model = Self::new(arch, 0)?;
        ck.load_into(&mut model.store)?;
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }

    /// Parameter counts per network, for logging.
    pub fn summary(&self) -> BTreeMap<&'static str, usize> {
        let mut out = BTreeMap::new();
        for (name, t) in self.store.iter() {
            let net = name.split('.').next().unwrap_or("");
            let key = match net {
                "content" => "content",
                "style" => "style",
                _ => "decoder",
            };
            *out.entry(key).or_insert(0) += t.len();
        }
        out
    }

    fn check_image(&self, img: &Image<T>) -> Result<()> {
        if img.width() % 4 != 0 || img.height() % 4 != 0 {
            return Err(Error::shape(
                "encoder",
                format!("{}x{} is not divisible by 4", img.width(), img.height()),
            ));
        }
        Ok(())
    }

    fn image_var(&self, g: &mut Graph<T>, imgs: &[&Image<T>]) -> Result<Var> {
        let first = imgs.first().ok_or_else(|| Error::invalid("no images"))?;
        let (w, h) = (first.width(), first.height());
        let mut data = Vec::with_capacity(imgs.len() * w * h);
        for img in imgs {
            self.check_image(img)?;
            if (img.width(), img.height()) != (w, h) {
                return Err(Error::shape("batch", "images of different sizes"));
            }
            data.extend(img.to_unit());
        }
        Ok(g.constant(Tensor::new(&[imgs.len(), 1, h, w], data)?))
    }

    pub fn encode_content(&self, img: &Image<T>) -> Result<ContentCode<T>> {
        let mut g = Graph::new();
        let net = self.bind(&mut g, false);
        let x = self.image_var(&mut g, &[img])?;
        let c = net.content(&mut g, x)?;
        let shape = g.shape(c)[1..].to_vec();
        Ok(ContentCode(g.value(c).clone().reshaped(&shape)?))
    }

    pub fn encode_style(&self, img: &Image<T>) -> Result<StyleCode<T>> {
        Ok(self.encode_styles(&[img])?.remove(0))
    }

    /// Style codes for several same-sized images in one pass.
    pub fn encode_styles(&self, imgs: &[&Image<T>]) -> Result<Vec<StyleCode<T>>> {
        let mut g = Graph::new();
        let net = self.bind(&mut g, false);
        let x = self.image_var(&mut g, imgs)?;
        let s = net.style(&mut g, x)?;
        g.value(s).data().chunks(STYLE_DIM).map(|c| StyleCode::new(c.to_vec())).collect()
    }

    pub fn decode(&self, content: &ContentCode<T>, style: &StyleCode<T>) -> Result<Image<T>> {
        let cc = self.arch.content_channels();
        let shape = content.0.shape();
        if shape.len() != 3 || shape[0] != cc {
            return Err(Error::shape("decode", format!("content code {shape:?}, expected [{cc}, h, w]")));
        }
        let mut g = Graph::new();
        let net = self.bind(&mut g, false);
        let mut cshape = vec![1];
        cshape.extend_from_slice(shape);
        let c = g.constant(content.0.clone().reshaped(&cshape)?);
        let s = g.constant(Tensor::new(&[1, STYLE_DIM], style.values().to_vec())?);
        let y = net.decode(&mut g, c, s)?;
        let (h, w) = (g.shape(y)[2], g.shape(y)[3]);
        Image::from_unit(w, h, g.value(y).data())
    }

    /// `decode(encode_content(img), style)` for a batch, in one graph.
    pub fn transfer_batch(&self, imgs: &[&Image<T>], style: &StyleCode<T>) -> Result<Vec<Image<T>>> {
        let mut g = Graph::new();
        let net = self.bind(&mut g, false);
        let x = self.image_var(&mut g, imgs)?;
        let c = net.content(&mut g, x)?;
        let s = g.constant(Tensor::new(&[1, STYLE_DIM], style.values().to_vec())?);
        let s = g.index_select(s, &vec![0; imgs.len()])?;
        let y = net.decode(&mut g, c, s)?;
        let (h, w) = (g.shape(y)[2], g.shape(y)[3]);
        g.value(y).data().chunks(h * w).map(|p| Image::from_unit(w, h, p)).collect()
    }
}

/// The three networks as graph builders. Inputs and outputs are `[N, 1, H, W]`
/// tensors with pixels in `[0, 1]`.
pub trait Networks<T: Scalar> {
    /// `[N, 1, H, W] -> [N, C, H/4, W/4]`
    fn content(&self, g: &mut Graph<T>, x: Var) -> Result<Var>;
    /// `[N, 1, H, W] -> [N, 8]`
    fn style(&self, g: &mut Graph<T>, x: Var) -> Result<Var>;
    /// content `[N, C, h, w]`, style `[N, 8]` `-> [N, 1, 4h, 4w]`
    fn decode(&self, g: &mut Graph<T>, content: Var, style: Var) -> Result<Var>;
}

/// A [`ModelParams`] bound to a particular graph.
pub struct BoundModel<'a, T> {
    model: &'a ModelParams<T>,
    vars: BoundParams,
}

impl<T: Scalar> BoundModel<'_, T> {
    pub fn params(&self) -> &BoundParams {
        &self.vars
    }

    fn conv(&self, g: &mut Graph<T>, x: Var, c: &Conv) -> Result<Var> {
        g.conv2d(x, self.vars.var(c.w), Some(self.vars.var(c.b)), c.opts)
    }

    fn dense(&self, g: &mut Graph<T>, x: Var, d: &Dense) -> Result<Var> {
        g.linear(x, self.vars.var(d.w), Some(self.vars.var(d.b)))
    }

    fn conv_in_relu(&self, g: &mut Graph<T>, x: Var, c: &Conv) -> Result<Var> {
        let y = self.conv(g, x, c)?;
        let y = g.instance_norm(y, T::lit(IN_EPS))?;
        Ok(g.relu(y))
    }

    /// Residual block whose normalisations are either plain instance norm or
    /// AdaIN with the given `(scale, shift)` pairs.
    fn res_block(&self, g: &mut Graph<T>, x: Var, r: &ResBlock, adain: Option<[(Var, Var); 2]>) -> Result<Var> {
        let norm = |g: &mut Graph<T>, y: Var, k: usize| -> Result<Var> {
            let y = g.instance_norm(y, T::lit(IN_EPS))?;
            match adain {
                Some(mods) => g.channel_affine(y, mods[k].0, mods[k].1),
                None => Ok(y),
            }
        };
        let y = self.conv(g, x, &r.first)?;
        let y = norm(g, y, 0)?;
        let y = g.relu(y);
        let y = self.conv(g, y, &r.second)?;
        let y = norm(g, y, 1)?;
        g.add(x, y)
    }
}

impl<T: Scalar> Networks<T> for BoundModel<'_, T> {
    fn content(&self, g: &mut Graph<T>, x: Var) -> Result<Var> {
        let (h, w) = (g.shape(x)[2], g.shape(x)[3]);
        if h % 4 != 0 || w % 4 != 0 {
            return Err(Error::shape("content encoder", format!("{w}x{h} is not divisible by 4")));
        }
        let l = &self.model.layout;
        let mut y = self.conv_in_relu(g, x, &l.content_stem)?;
        for c in &l.content_down {
            y = self.conv_in_relu(g, y, c)?;
        }
        for r in &l.content_res {
            y = self.res_block(g, y, r, None)?;
        }
        Ok(y)
    }

    fn style(&self, g: &mut Graph<T>, x: Var) -> Result<Var> {
        let (h, w) = (g.shape(x)[2], g.shape(x)[3]);
        if h % 4 != 0 || w % 4 != 0 {
            return Err(Error::shape("style encoder", format!("{w}x{h} is not divisible by 4")));
        }
        let l = &self.model.layout;
        let y = self.conv(g, x, &l.style_stem)?;
        let mut y = g.relu(y);
        for c in &l.style_down {
            let z = self.conv(g, y, c)?;
            y = g.relu(z);
        }
        let pooled = g.global_avg_pool(y)?;
        self.dense(g, pooled, &l.style_fc)
    }

    fn decode(&self, g: &mut Graph<T>, content: Var, style: Var) -> Result<Var> {
        let l = &self.model.layout;
        let cc = self.model.arch.content_channels();
        let cs = g.shape(content).to_vec();
        let ss = g.shape(style).to_vec();
        if cs.len() != 4 || cs[1] != cc || ss != [cs[0], STYLE_DIM] {
            return Err(Error::shape("decoder", format!("content {cs:?} with style {ss:?}")));
        }
        let n = cs[0];
        let hidden = self.dense(g, style, &l.mlp_in)?;
        let hidden = g.relu(hidden);
        let mods = self.dense(g, hidden, &l.mlp_out)?;
        // columns of `mods`: per block, [scale1, shift1, scale2, shift2] each `cc` wide
        let md = g.value(mods).data().len() / n;
        let mut y = content;
        for (bi, r) in l.dec_res.iter().enumerate() {
            let mut pairs = [(content, content); 2];
            for (k, pair) in pairs.iter_mut().enumerate() {
                let base = (bi * 4 + k * 2) * cc;
                let scale = column_slice(g, mods, n, md, base, cc)?;
                let shift = column_slice(g, mods, n, md, base + cc, cc)?;
                let ones = g.constant(Tensor::full(&[n, cc], T::one()));
                // scale is predicted as an offset from 1
                *pair = (g.add(scale, ones)?, shift);
            }
            y = self.res_block(g, y, r, Some(pairs))?;
        }
        for c in &l.dec_up {
            let u = g.upsample2x(y)?;
            let z = self.conv(g, u, c)?;
            y = g.relu(z);
        }
        let out = self.conv(g, y, &l.dec_out)?;
        Ok(g.sigmoid(out))
    }
}

/// Columns `[start, start + width)` of an `[n, total]` matrix as an `[n, width]` node.
fn column_slice<T: Scalar>(g: &mut Graph<T>, m: Var, n: usize, total: usize, start: usize, width: usize) -> Result<Var> {
    // reshape to [n * total, 1] rows and gather the wanted entries
    let flat = g.reshape(m, &[n * total, 1])?;
    let idx: Vec<usize> = (0..n).flat_map(|r| (start..start + width).map(move |c| r * total + c)).collect();
    let picked = g.index_select(flat, &idx)?;
    g.reshape(picked, &[n, width])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::generate_phantom;

    #[test]
    fn content_code_shape_is_quarter_resolution() {
        let arch = ArchConfig { base_channels: 16, content_res_blocks: 1, decoder_res_blocks: 1, ..ArchConfig::desk() };
        let m = ModelParams::<f32>::new(arch, 1).unwrap();
        let img = generate_phantom::<f32>(1, 64).unwrap();
        let c = m.encode_content(&img).unwrap();
        assert_eq!(c.0.shape(), &[64, 16, 16]);
        let s = m.encode_style(&img).unwrap();
        assert_eq!(s.values().len(), STYLE_DIM);
        assert_eq!(m.encode_style(&img.clone()).unwrap(), s);
        let out = m.decode(&c, &s).unwrap();
        assert_eq!((out.width(), out.height()), (64, 64));
    }

    #[test]
    fn constant_inputs_give_distinct_content_codes() {
        let m = ModelParams::<f64>::new(ArchConfig::tiny(), 2).unwrap();
        let zero = Image::filled(8, 8, 0.0).unwrap();
        let one = Image::filled(8, 8, 255.0).unwrap();
        let a = m.encode_content(&zero).unwrap();
        let b = m.encode_content(&one).unwrap();
        let l1: f64 = a.0.data().iter().zip(b.0.data()).map(|(x, y)| (x - y).abs()).sum();
        assert!(l1 > 0.0);
    }

    #[test]
    fn rejects_sizes_not_divisible_by_four() {
        let m = ModelParams::<f32>::new(ArchConfig::tiny(), 0).unwrap();
        let img = Image::filled(10, 12, 0.0f32).unwrap();
        assert!(m.encode_content(&img).is_err());
        assert!(m.encode_style(&img).is_err());
    }

    #[test]
    fn style_dim_is_eight_for_every_size() {
        let m = ModelParams::<f32>::new(ArchConfig::tiny(), 0).unwrap();
        for side in [8, 12, 16, 32] {
            let img = Image::filled(side, side, 40.0f32).unwrap();
            assert_eq!(m.encode_style(&img).unwrap().values().len(), 8);
        }
    }

    #[test]
    fn checkpoint_round_trip() {
        let m = ModelParams::<f32>::new(ArchConfig::tiny(), 5).unwrap();
        let back = ModelParams::<f32>::from_bytes(&m.to_bytes().unwrap()).unwrap();
        assert_eq!(back.store(), m.store());
        assert_eq!(back.arch(), m.arch());
    }

    #[test]
    fn decode_rejects_mismatched_codes() {
        let m = ModelParams::<f32>::new(ArchConfig::tiny(), 0).unwrap();
        let bad = ContentCode(Tensor::zeros(&[3, 2, 2]));
        let s = StyleCode::new(vec![0.0; 8]).unwrap();
        assert!(m.decode(&bad, &s).is_err());
        assert!(StyleCode::<f32>::new(vec![0.0; 7]).is_err());
    }
}
