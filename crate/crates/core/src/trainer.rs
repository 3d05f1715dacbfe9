//! The training loop: sample a pair and a style, build the four-image batch,
//! take one Adam step on the weighted objective.

use std::fmt::Write as _;
use std::path::PathBuf;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{adam_step, AdamConfig, AdamState, Graph, Tensor};
use crate::data::{Dataset, Image};
use crate::error::{Error, Result};
use crate::inference::{most_representative_code, set_mae, StyleCodeSet, StyleModel};
use crate::losses::{build_total_loss, LossBreakdown, LossWeights, QuadBatch};
use crate::model::{ArchConfig, ModelParams};
use crate::scalar::Scalar;
use crate::transforms::{apply_transform, fixed_transform, sample_parameters, Family, TransformSpec};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    pub max_iters: usize,
    pub log_every: usize,
    /// 0 disables intermediate checkpoints.
    pub checkpoint_every: usize,
    /// 0 disables validation.
    pub validate_every: usize,
    /// Validation rounds without improvement before stopping.
    pub patience: usize,
    pub weights: LossWeights,
    pub excluded_families: Vec<Family>,
    pub fixed_style_ablation: bool,
    pub seed: u64,
    pub image_size: usize,
    pub arch: ArchConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let adam = AdamConfig::default();
        Self {
            lr: adam.lr,
            beta1: adam.beta1,
            beta2: adam.beta2,
            eps: adam.eps,
            weight_decay: adam.weight_decay,
            max_iters: 10_000,
            log_every: 1,
            checkpoint_every: 0,
            validate_every: 0,
            patience: 25,
            weights: LossWeights::default(),
            excluded_families: Vec::new(),
            fixed_style_ablation: false,
            seed: 0,
            image_size: 64,
            arch: ArchConfig::desk(),
        }
    }
}

fn parse_num<V: std::str::FromStr>(key: &str, value: &str) -> Result<V> {
    value.trim().parse().map_err(|_| Error::Config { key: key.into(), message: format!("cannot parse `{value}`") })
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value.trim() {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        other => Err(Error::Config { key: key.into(), message: format!("expected true or false, got `{other}`") }),
    }
}

impl TrainConfig {
    pub fn adam(&self) -> AdamConfig {
        AdamConfig { lr: self.lr, beta1: self.beta1, beta2: self.beta2, eps: self.eps, weight_decay: self.weight_decay }
    }

    pub fn included_families(&self) -> Vec<Family> {
        Family::TRAINING.into_iter().filter(|f| !self.excluded_families.contains(f)).collect()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |key: &str, message: &str| Err(Error::Config { key: key.into(), message: message.into() });
        if self.max_iters == 0 {
            return bad("max_iters", "must be at least 1");
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad("lr", "must be positive");
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return bad("beta1", "moment decay rates must lie in [0, 1)");
        }
        if !(self.eps > 0.0) || !(self.weight_decay >= 0.0) {
            return bad("eps", "eps must be positive and weight_decay non-negative");
        }
        if self.log_every == 0 {
            return bad("log_every", "must be at least 1");
        }
        if self.excluded_families.contains(&Family::Exp) {
            return bad("excluded_families", "exp is never a training family");
        }
        if self.included_families().is_empty() {
            return bad("excluded_families", "must leave at least one training family");
        }
        if self.image_size < 8 || self.image_size % 4 != 0 {
            return bad("image_size", "must be a multiple of 4, at least 8");
        }
        self.weights.validate()?;
        self.arch.validate()
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "lr" => self.lr = parse_num(key, value)?,
            "beta1" => self.beta1 = parse_num(key, value)?,
            "beta2" => self.beta2 = parse_num(key, value)?,
            "eps" => self.eps = parse_num(key, value)?,
            "weight_decay" => self.weight_decay = parse_num(key, value)?,
            "max_iters" => self.max_iters = parse_num(key, value)?,
            "log_every" => self.log_every = parse_num(key, value)?,
            "checkpoint_every" => self.checkpoint_every = parse_num(key, value)?,
            "validate_every" => self.validate_every = parse_num(key, value)?,
            "patience" => self.patience = parse_num(key, value)?,
            "lambda_recon" => self.weights.lambda_recon = parse_num(key, value)?,
            "lambda_same_s" => self.weights.lambda_same_s = parse_num(key, value)?,
            "lambda_same_c" => self.weights.lambda_same_c = parse_num(key, value)?,
            "lambda_cross" => self.weights.lambda_cross = parse_num(key, value)?,
            "excluded_families" => {
                self.excluded_families = value
                    .split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(|s| s.parse().map_err(|e: Error| Error::Config { key: key.into(), message: e.to_string() }))
                    .collect::<Result<_>>()?;
            }
            "fixed_style_ablation" => self.fixed_style_ablation = parse_bool(key, value)?,
            "seed" => self.seed = parse_num(key, value)?,
            "image_size" => self.image_size = parse_num(key, value)?,
            _ => match key.strip_prefix("arch.") {
                Some(k) => self.arch.set(k, parse_num(key, value)?)?,
                None => return Err(Error::Config { key: key.into(), message: "unknown key".into() }),
            },
        }
        Ok(())
    }

    /// Reads `key=value` lines; `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (key, value) in config_pairs(text)? {
            cfg.set(&key, &value)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_text(&self) -> String {
        let fams: Vec<&str> = self.excluded_families.iter().map(|f| f.name()).collect();
        let mut s = String::new();
        let w = &self.weights;
        let _ = writeln!(s, "lr={:e}\nbeta1={}\nbeta2={}\neps={:e}\nweight_decay={:e}", self.lr, self.beta1, self.beta2, self.eps, self.weight_decay);
        let _ = writeln!(
            s,
            "max_iters={}\nlog_every={}\ncheckpoint_every={}\nvalidate_every={}\npatience={}",
            self.max_iters, self.log_every, self.checkpoint_every, self.validate_every, self.patience
        );
        let _ = writeln!(
            s,
            "lambda_recon={}\nlambda_same_s={}\nlambda_same_c={}\nlambda_cross={}",
            w.lambda_recon, w.lambda_same_s, w.lambda_same_c, w.lambda_cross
        );
        let _ = writeln!(s, "excluded_families={}\nfixed_style_ablation={}", fams.join(","), self.fixed_style_ablation);
        let _ = writeln!(s, "seed={}\nimage_size={}", self.seed, self.image_size);
        for (k, v) in self.arch.entries() {
            let _ = writeln!(s, "arch.{k}={v}");
        }
        s
    }
}

/// Splits config text into `(key, value)` pairs, skipping blanks and comments.
pub fn config_pairs(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| Error::Config {
            key: format!("line {}", n + 1),
            message: format!("expected key=value, got `{line}`"),
        })?;
        out.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}

/// One sampled training step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepSample {
    pub first: usize,
    pub second: usize,
    pub spec: TransformSpec,
}

/// Draws `(x1, x2, T)` tuples; reproducible from the seed alone.
#[derive(Debug, Clone)]
pub struct StepSampler {
    rng: ChaCha8Rng,
    families: Vec<Family>,
    fixed: bool,
}

impl StepSampler {
    pub fn new(config: &TrainConfig) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        rng.set_stream(1);
        Self { rng, families: config.included_families(), fixed: config.fixed_style_ablation }
    }

    /// `x1 != x2` by rejection, both as indices and as pixel content.
    pub fn next<T: Scalar>(&mut self, images: &[Image<T>]) -> Result<StepSample> {
        let n = images.len();
        if n < 2 {
            return Err(Error::invalid("training needs at least two images"));
        }
        let first = self.rng.random_range(0..n);
        let mut tries = 0;
        let second = loop {
            let j = self.rng.random_range(0..n);
            if j != first && images[j] != images[first] {
                break j;
            }
            tries += 1;
            if tries > 1000 * n {
                return Err(Error::invalid("training images are all identical"));
            }
        };
        let family = self.families[self.rng.random_range(0..self.families.len())];
        let spec = if self.fixed { fixed_transform(family)? } else { sample_parameters(family, &mut self.rng)? };
        Ok(StepSample { first, second, spec })
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainLog {
    /// Logged steps, 1-based.
    pub rows: Vec<(usize, LossBreakdown)>,
    /// Total loss at every step, logged or not.
    pub totals: Vec<f64>,
    /// Family used at every step.
    pub families: Vec<Family>,
    pub validation: Vec<(usize, f64)>,
    pub stopped_early_at: Option<usize>,
}

impl TrainLog {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(LossBreakdown::CSV_HEADER);
        out.push('\n');
        for (step, b) in &self.rows {
            out.push_str(&b.csv_row(*step));
            out.push('\n');
        }
        out
    }

    pub fn validation_csv(&self) -> String {
        let mut out = String::from("step,validation_mae\n");
        for (step, v) in &self.validation {
            let _ = writeln!(out, "{step},{v:e}");
        }
        out
    }

    /// Mean of the total loss over `[from, to)` steps (0-based).
    pub fn mean_total(&self, from: usize, to: usize) -> f64 {
        let s = &self.totals[from.min(self.totals.len())..to.min(self.totals.len())];
        s.iter().sum::<f64>() / s.len().max(1) as f64
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome<T> {
    pub model: ModelParams<T>,
    pub log: TrainLog,
}

/// Optional side effects of a run.
#[derive(Debug, Clone, Default)]
pub struct TrainOptions {
    pub checkpoint_dir: Option<PathBuf>,
    /// Specs used for validation; defaults to the fixed settings of the
    /// included families.
    pub validation_specs: Option<Vec<TransformSpec>>,
    /// Print progress to stderr every this many steps (0 = silent).
    pub progress_every: usize,
}

pub fn train<T: Scalar>(dataset: &Dataset<Image<T>>, config: &TrainConfig) -> Result<TrainOutcome<T>> {
    train_with(dataset, config, &TrainOptions::default())
}

pub fn train_with<T: Scalar>(
    dataset: &Dataset<Image<T>>,
    config: &TrainConfig,
    options: &TrainOptions,
) -> Result<TrainOutcome<T>> {
    config.validate()?;
    let images = &dataset.train;
    if images.len() < 2 {
        return Err(Error::invalid(format!("training needs at least two images, got {}", images.len())));
    }
    if let Some(bad) = images.iter().find(|i| i.width() != config.image_size || i.height() != config.image_size) {
        return Err(Error::invalid(format!(
            "training image is {}x{}, config expects {}",
            bad.width(),
            bad.height(),
            config.image_size
        )));
    }
    if let Some(dir) = &options.checkpoint_dir {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mut model = ModelParams::<T>::new(config.arch, config.seed)?;
    let mut sampler = StepSampler::new(config);
    let tensors: Vec<Tensor<T>> = model.store().iter().map(|(_, t)| t.clone()).collect();
    let mut adam_state = AdamState::new(&tensors);
    let adam = config.adam();
    let excluded = &config.excluded_families;
    let val_specs = match &options.validation_specs {
        Some(s) => s.clone(),
        None => config.included_families().into_iter().map(fixed_transform).collect::<Result<_>>()?,
    };
    let mut log = TrainLog::default();
    let mut best_val = f64::INFINITY;
    let mut stale = 0usize;

    for step in 1..=config.max_iters {
        let sample = sampler.next(images)?;
        let family = sample.spec.family();
        if excluded.contains(&family) {
            return Err(Error::invalid(format!("step {step} sampled excluded family {family}")));
        }
        let batch = QuadBatch::new(images[sample.first].clone(), images[sample.second].clone(), sample.spec)?;

        let mut g = Graph::new();
        let (breakdown, grads) = {
            let nets = model.bind(&mut g, true);
            let x = g.constant(batch.tensor());
            let nodes = build_total_loss(&mut g, &nets, x, &config.weights)?;
            let breakdown = nodes.breakdown(&g);
            if let Some(term) = breakdown.first_non_finite() {
                return Err(Error::NonFiniteLoss { term, step });
            }
            g.backward(nodes.total)?;
            (breakdown, model.store().gradients(&g, nets.params()))
        };
        drop(g);
        let store = model.store();
        let names: Vec<String> = store.ids().map(|id| store.name(id).to_string()).collect();
        adam_step(model.store_mut().tensors_mut(), &grads, &mut adam_state, &adam, &|i| names[i].clone())?;
        if !model.all_finite() {
            return Err(Error::NonFiniteGradient(format!("parameters after step {step}")));
        }

        log.totals.push(breakdown.total);
        log.families.push(family);
        if (step - 1) % config.log_every == 0 {
            log.rows.push((step, breakdown));
        }
        if options.progress_every > 0 && step % options.progress_every == 0 {
            eprintln!("step {step}: total {:.4}", breakdown.total);
        }
        if config.checkpoint_every > 0 && step % config.checkpoint_every == 0 {
            if let Some(dir) = &options.checkpoint_dir {
                model.save(&dir.join(format!("step_{step:06}.smpr")))?;
            }
        }
        if config.validate_every > 0 && step % config.validate_every == 0 && !dataset.validation.is_empty() {
            let v = validate(&model, &dataset.validation, &val_specs)?;
            log.validation.push((step, v));
            if v < best_val {
                best_val = v;
                stale = 0;
            } else {
                stale += 1;
                if stale >= config.patience {
                    log.stopped_early_at = Some(step);
                    break;
                }
            }
        }
    }
    if let Some(dir) = &options.checkpoint_dir {
        model.save(&dir.join("final.smpr"))?;
        let path = dir.join("train_log.csv");
        std::fs::write(&path, log.to_csv()).map_err(|e| Error::io(&path, e))?;
    }
    Ok(TrainOutcome { model, log })
}

/// Mean MAE between transferred validation images and their directly
/// transformed versions, over all `target_specs`. The target code for each
/// spec is the most representative code of the transformed split.
pub fn validate<T: Scalar, M: StyleModel<T>>(model: &M, validation: &[Image<T>], target_specs: &[TransformSpec]) -> Result<f64> {
    if validation.is_empty() {
        return Err(Error::invalid("validation split is empty"));
    }
    if target_specs.is_empty() {
        return Err(Error::invalid("no validation styles"));
    }
    let refs: Vec<&Image<T>> = validation.iter().collect();
    let mut total = 0.0;
    for spec in target_specs {
        let truth = validation.iter().map(|x| apply_transform(spec, x)).collect::<Result<Vec<_>>>()?;
        let codes = model.style_codes(&truth.iter().collect::<Vec<_>>())?;
        let code = most_representative_code(&StyleCodeSet::new(codes, spec.to_string())?);
        let moved = model.transfer_all(&refs, &code)?;
        total += set_mae(&moved, &truth)?;
    }
    Ok(total / target_specs.len() as f64)
}
