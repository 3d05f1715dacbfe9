//! End-to-end pipelines: data setup, training and the evaluation protocols.
//!
//! Every run writes into `<out>/<experiment>-<config hash>-s<seed>/`, starting
//! with a manifest holding the full config so the run can be repeated.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::analysis::{cross_style_matrix, pca_2d, same_style_stats, svc_discriminate, Svc};
use crate::data::{generate_phantom, parse_manifest, preprocess_corpus, read_raw_image, write_pgm, Dataset, Image, RawImage};
use crate::error::{Error, Result};
use crate::inference::{evaluate_transfer, most_representative_code, set_mae, split_donors, StyleCodeSet, StyleModel, TransferEval};
use crate::model::{ModelParams, StyleCode, STYLE_DIM};
use crate::scalar::Scalar;
use crate::trainer::{config_pairs, train_with, TrainConfig, TrainLog, TrainOptions};
use crate::transforms::{apply_transform, exp_target_style, fixed_transform, Family, TransformSpec};

/// Phantom corpus of `train + validation + test` images, preprocessed as a
/// whole and cut in generation order.
pub fn phantom_dataset<T: Scalar>(sizes: (usize, usize, usize), image_size: usize, seed: u64) -> Result<Dataset<Image<T>>> {
    let (ntr, nva, nte) = sizes;
    if ntr < 2 || nva == 0 || nte < 2 {
        return Err(Error::invalid(format!("phantom split {sizes:?} is too small")));
    }
    let total = ntr + nva + nte;
    let raw = (0..total)
        .map(|i| generate_phantom::<f64>(seed.wrapping_mul(1_000_003).wrapping_add(i as u64), image_size).map(|p| RawImage::from(&p)))
        .collect::<Result<Vec<_>>>()?;
    let mut imgs = preprocess_corpus::<T>(&raw)?;
    let test = imgs.split_off(ntr + nva);
    let validation = imgs.split_off(ntr);
    Ok(Dataset { train: imgs, validation, test, seed })
}

/// Images listed in a `path<TAB>split` manifest, preprocessed together.
pub fn manifest_dataset<T: Scalar>(path: &Path, seed: u64) -> Result<Dataset<Image<T>>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let base = path.parent().unwrap_or(Path::new("."));
    let paths = parse_manifest(&text, seed)?;
    let resolve = |p: &PathBuf| if p.is_absolute() { p.clone() } else { base.join(p) };
    let all: Vec<PathBuf> = paths.train.iter().chain(&paths.validation).chain(&paths.test).map(resolve).collect();
    let raw = all.iter().map(|p| read_raw_image(p)).collect::<Result<Vec<_>>>()?;
    let mut imgs = preprocess_corpus::<T>(&raw)?;
    let test = imgs.split_off(paths.train.len() + paths.validation.len());
    let validation = imgs.split_off(paths.train.len());
    Ok(Dataset { train: imgs, validation, test, seed })
}

#[derive(Debug, Clone, PartialEq)]
pub enum DataSource {
    Phantoms { train: usize, validation: usize, test: usize, seed: u64 },
    Manifest(PathBuf),
}

/// Training config plus data and evaluation settings, read from `key=value`
/// text. Keys not listed here go to [`TrainConfig`].
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub data: DataSource,
    pub train: TrainConfig,
    pub n_targets: Vec<usize>,
    /// Leave the two Sobel families out of the model used for the exp style.
    pub exp_exclude_sobel: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            data: DataSource::Phantoms { train: 64, validation: 16, test: 32, seed: 7 },
            train: desk_train_config(),
            n_targets: vec![1, 2, 5, 10],
            exp_exclude_sobel: false,
        }
    }
}

impl ExperimentConfig {
    /// Full-width networks and a 25/25 donor/test split. Days of CPU time.
    pub fn paper() -> Self {
        let mut train = TrainConfig { max_iters: 100_000, validate_every: 1000, seed: 7, ..TrainConfig::default() };
        train.arch = crate::model::ArchConfig::default();
        Self { data: DataSource::Phantoms { train: 400, validation: 50, test: 50, seed: 7 }, train, ..Self::default() }
    }
}

/// Training settings sized for a CPU in minutes rather than a GPU in days.
pub fn desk_train_config() -> TrainConfig {
    let mut t = TrainConfig { lr: 1e-3, max_iters: 3000, log_every: 1, validate_every: 250, seed: 7, ..TrainConfig::default() };
    t.arch.content_res_blocks = 2;
    t.arch.decoder_res_blocks = 2;
    t
}

fn parse_list<V: FromStr>(key: &str, value: &str) -> Result<Vec<V>> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse().map_err(|_| Error::Config { key: key.into(), message: format!("cannot parse `{s}`") }))
        .collect()
}

impl ExperimentConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let cfg_err = |message: String| Error::Config { key: key.into(), message };
        match key {
            "data.phantoms" => {
                let v: Vec<usize> = parse_list(key, value)?;
                let [train, validation, test] = v[..] else {
                    return Err(cfg_err("expected train,validation,test counts".into()));
                };
                let seed = match self.data {
                    DataSource::Phantoms { seed, .. } => seed,
                    DataSource::Manifest(_) => 7,
                };
                self.data = DataSource::Phantoms { train, validation, test, seed };
            }
            "data.seed" => {
                let s = value.trim().parse().map_err(|_| cfg_err(format!("cannot parse `{value}`")))?;
                match &mut self.data {
                    DataSource::Phantoms { seed, .. } => *seed = s,
                    DataSource::Manifest(_) => return Err(cfg_err("only applies to phantom data".into())),
                }
            }
            "data.manifest" => {
                let p = PathBuf::from(value.trim());
                if !p.exists() {
                    return Err(cfg_err(format!("{} does not exist", p.display())));
                }
                self.data = DataSource::Manifest(p);
            }
            "eval.n_targets" => {
                self.n_targets = parse_list(key, value)?;
                if self.n_targets.is_empty() || self.n_targets.contains(&0) {
                    return Err(cfg_err("need positive target counts".into()));
                }
            }
            "exp.exclude_sobel" => {
                self.exp_exclude_sobel = match value.trim() {
                    "true" | "1" | "yes" => true,
                    "false" | "0" | "no" => false,
                    other => return Err(cfg_err(format!("expected true or false, got `{other}`"))),
                }
            }
            _ => self.train.set(key, value)?,
        }
        Ok(())
    }

    /// Applies `text` on top of `self`.
    pub fn apply(mut self, text: &str) -> Result<Self> {
        for (k, v) in config_pairs(text)? {
            self.set(&k, &v)?;
        }
        self.train.validate()?;
        Ok(self)
    }

    pub fn parse(text: &str) -> Result<Self> {
        Self::default().apply(text)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        match &self.data {
            DataSource::Phantoms { train, validation, test, seed } => {
                let _ = writeln!(s, "data.phantoms={train},{validation},{test}\ndata.seed={seed}");
            }
            DataSource::Manifest(p) => {
                let _ = writeln!(s, "data.manifest={}", p.display());
            }
        }
        let ns: Vec<String> = self.n_targets.iter().map(|n| n.to_string()).collect();
        let _ = writeln!(s, "eval.n_targets={}\nexp.exclude_sobel={}", ns.join(","), self.exp_exclude_sobel);
        s.push_str(&self.train.to_text());
        s
    }

    pub fn load_data<T: Scalar>(&self) -> Result<Dataset<Image<T>>> {
        let ds = match &self.data {
            DataSource::Phantoms { train, validation, test, seed } => {
                phantom_dataset((*train, *validation, *test), self.train.image_size, *seed)?
            }
            DataSource::Manifest(p) => manifest_dataset(p, self.train.seed)?,
        };
        if let Some(bad) = ds.train.iter().chain(&ds.validation).chain(&ds.test).find(|i| {
            i.width() != self.train.image_size || i.height() != self.train.image_size
        }) {
            return Err(Error::invalid(format!(
                "image of {}x{} does not match image_size={}",
                bad.width(),
                bad.height(),
                self.train.image_size
            )));
        }
        Ok(ds)
    }

    /// FNV-1a of the config text, for naming run directories.
    pub fn hash(&self) -> String {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for b in self.to_text().bytes() {
            h ^= u64::from(b);
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
        format!("{h:016x}")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Experiment {
    OneshotLog,
    OneshotGamma,
    OneshotExp,
    ScannerStyle,
    AblationFixed,
    Similarity,
}

impl Experiment {
    pub const ALL: [Experiment; 6] = [
        Experiment::OneshotLog,
        Experiment::OneshotGamma,
        Experiment::OneshotExp,
        Experiment::ScannerStyle,
        Experiment::AblationFixed,
        Experiment::Similarity,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Experiment::OneshotLog => "oneshot-log",
            Experiment::OneshotGamma => "oneshot-gamma",
            Experiment::OneshotExp => "oneshot-exp",
            Experiment::ScannerStyle => "scanner-style",
            Experiment::AblationFixed => "ablation-fixed",
            Experiment::Similarity => "similarity",
        }
    }

    /// Family held out of training, if any.
    pub fn held_out(self) -> Option<Family> {
        match self {
            Experiment::OneshotLog | Experiment::AblationFixed => Some(Family::Log),
            Experiment::OneshotGamma => Some(Family::PowerLaw),
            _ => None,
        }
    }

    /// `base` with this experiment's hold-out applied.
    pub fn configure(self, mut cfg: ExperimentConfig) -> ExperimentConfig {
        cfg.train.excluded_families = self.held_out().into_iter().collect();
        cfg
    }
}

impl FromStr for Experiment {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|e| e.name() == s)
            .ok_or_else(|| Error::invalid(format!("unknown experiment `{s}`")))
    }
}

/// Target style of a one-shot experiment.
pub fn target_style(family: Option<Family>) -> Result<TransformSpec> {
    match family {
        Some(f) => fixed_transform(f),
        None => Ok(exp_target_style()),
    }
}

/// Normalized transfer error for each donor count.
pub fn nshot_sweep<T: Scalar, M: StyleModel<T>>(
    model: &M,
    test: &[Image<T>],
    spec: &TransformSpec,
    n_targets: &[usize],
) -> Result<Vec<TransferEval>> {
    let (donors, rest) = split_donors(test)?;
    n_targets.iter().map(|&n| evaluate_transfer(model, &rest, spec, n, &donors)).collect()
}

pub fn sweep_csv(style: &TransformSpec, evals: &[TransferEval]) -> String {
    let mut out = String::from("target_style,n_target,normalized_mae,mae,baseline_mae\n");
    for e in evals {
        let _ = writeln!(out, "{style},{},{:.6},{:.6},{:.6}", e.n_target, e.normalized, e.mae, e.baseline);
    }
    out
}

pub struct RunDir {
    pub path: PathBuf,
}

impl RunDir {
    pub fn create(root: &Path, name: &str, cfg: &ExperimentConfig) -> Result<Self> {
        let path = root.join(format!("{name}-{}-s{}", cfg.hash(), cfg.train.seed));
        fs::create_dir_all(&path).map_err(|e| Error::io(&path, e))?;
        let manifest = format!(
            "experiment={name}\nversion={}\nseed={}\n# config\n{}",
            env!("CARGO_PKG_VERSION"),
            cfg.train.seed,
            cfg.to_text()
        );
        let dir = Self { path };
        dir.write("manifest.txt", &manifest)?;
        Ok(dir)
    }

    pub fn write(&self, file: &str, text: &str) -> Result<()> {
        let p = self.path.join(file);
        fs::write(&p, text).map_err(|e| Error::io(&p, e))
    }
}

/// Trains with the config, keeping checkpoints under `dir/<tag>`.
pub fn train_model(
    cfg: &ExperimentConfig,
    data: &Dataset<Image<f32>>,
    dir: &RunDir,
    tag: &str,
    progress_every: usize,
) -> Result<(ModelParams<f32>, TrainLog)> {
    let options = TrainOptions { checkpoint_dir: Some(dir.path.join(tag)), validation_specs: None, progress_every };
    let out = train_with(data, &cfg.train, &options)?;
    dir.write(&format!("{tag}/validation.csv"), &out.log.validation_csv())?;
    Ok((out.model, out.log))
}

/// Summary lines printed by the CLI.
#[derive(Debug, Clone, Default)]
pub struct RunReport {
    pub dir: PathBuf,
    pub lines: Vec<String>,
}

pub fn run_experiment(exp: Experiment, cfg: &ExperimentConfig, out_root: &Path, progress_every: usize) -> Result<RunReport> {
    let dir = RunDir::create(out_root, exp.name(), cfg)?;
    let data = cfg.load_data::<f32>()?;
    let mut report = RunReport { dir: dir.path.clone(), lines: Vec::new() };
    match exp {
        Experiment::OneshotLog | Experiment::OneshotGamma | Experiment::OneshotExp => {
            let mut cfg = cfg.clone();
            if exp == Experiment::OneshotExp && cfg.exp_exclude_sobel {
                cfg.train.excluded_families.extend([Family::SobelX, Family::SobelY]);
            }
            let (model, _) = train_model(&cfg, &data, &dir, "model", progress_every)?;
            let spec = target_style(exp.held_out())?;
            let evals = nshot_sweep(&model, &data.test, &spec, &cfg.n_targets)?;
            dir.write("transfer_eval.csv", &sweep_csv(&spec, &evals))?;
            write_examples(&model, &data.test, &spec, &dir)?;
            for e in &evals {
                report.lines.push(format!("{spec}: n_target={} normalized MAE {:.4}", e.n_target, e.normalized));
            }
        }
        Experiment::AblationFixed => {
            let (random_model, _) = train_model(cfg, &data, &dir, "randomized", progress_every)?;
            let mut fixed_cfg = cfg.clone();
            fixed_cfg.train.fixed_style_ablation = true;
            let (fixed_model, _) = train_model(&fixed_cfg, &data, &dir, "fixed", progress_every)?;
            let spec = target_style(exp.held_out())?;
            let a = nshot_sweep(&random_model, &data.test, &spec, &cfg.n_targets)?;
            let b = nshot_sweep(&fixed_model, &data.test, &spec, &cfg.n_targets)?;
            let mut csv = String::from("training,n_target,normalized_mae\n");
            for (name, evals) in [("randomized", &a), ("fixed", &b)] {
                for e in evals {
                    let _ = writeln!(csv, "{name},{},{:.6}", e.n_target, e.normalized);
                    report.lines.push(format!("{name} styles: n_target={} normalized MAE {:.4}", e.n_target, e.normalized));
                }
            }
            dir.write("ablation.csv", &csv)?;
        }
        Experiment::ScannerStyle => {
            let (model, _) = train_model(cfg, &data, &dir, "model", progress_every)?;
            let (a, b) = scanner_styles();
            let result = scanner_study(&model, &data.test, &a, &b)?;
            dir.write("embedding.csv", &result.embedding_csv)?;
            let raster = decision_raster(&result.svc, 128)?;
            write_pgm(&dir.path.join("boundary.pgm"), &raster)?;
            dir.write("scanner_transfer.csv", &format!("source,target,normalized_mae\n{a},{b},{:.6}\n", result.transfer_normalized))?;
            report.lines.push(format!("SVC accuracy {:.4}", result.accuracy));
            report.lines.push(format!("one-shot transfer {a} -> {b}: normalized MAE {:.4}", result.transfer_normalized));
        }
        Experiment::Similarity => {
            let (model, _) = train_model(cfg, &data, &dir, "model", progress_every)?;
            let mut specs: Vec<TransformSpec> = Family::TRAINING.iter().map(|f| fixed_transform(*f)).collect::<Result<_>>()?;
            specs.push(exp_target_style());
            let m = cross_style_matrix(&model, &data.test, &specs)?;
            dir.write("similarity.csv", &m.to_csv())?;
            let mut csv = String::from("style,mean,stddev\n");
            for s in &specs {
                let (mean, sd) = same_style_stats(&model, &data.test, s)?;
                let _ = writeln!(csv, "{s},{mean:.6},{sd:.6}");
                report.lines.push(format!("{s}: same-style similarity {mean:.4} +/- {sd:.4}"));
            }
            dir.write("same_style.csv", &csv)?;
        }
    }
    report.dir = dir.path;
    Ok(report)
}

fn write_examples(model: &ModelParams<f32>, test: &[Image<f32>], spec: &TransformSpec, dir: &RunDir) -> Result<()> {
    let (donors, rest) = split_donors(test)?;
    let donor = apply_transform(spec, &donors[0])?;
    let code = model.encode_style(&donor)?;
    let ex = dir.path.join("examples");
    fs::create_dir_all(&ex).map_err(|e| Error::io(&ex, e))?;
    write_pgm(&ex.join("donor.pgm"), &donor)?;
    for (i, x) in rest.iter().take(3).enumerate() {
        write_pgm(&ex.join(format!("input_{i}.pgm")), x)?;
        write_pgm(&ex.join(format!("transferred_{i}.pgm")), &model.transfer_batch(&[x], &code)?[0])?;
        write_pgm(&ex.join(format!("truth_{i}.pgm")), &apply_transform(spec, x)?)?;
    }
    Ok(())
}

/// Two simulated acquisition styles: a darkening and a brightening curve.
pub fn scanner_styles() -> (TransformSpec, TransformSpec) {
    (TransformSpec::PowerLaw { gamma: 1.6 }, TransformSpec::PiecewiseLinear { r1: 60.0, r2: 160.0, s1: 80.0, s2: 230.0 })
}

pub struct ScannerStudy {
    pub embedding_csv: String,
    pub svc: Svc,
    pub accuracy: f64,
    pub transfer_normalized: f64,
}

/// Codes of the test images under both styles, their PCA embedding and SVC,
/// plus a one-shot transfer from style `a` to style `b`.
pub fn scanner_study<T: Scalar>(model: &ModelParams<T>, test: &[Image<T>], a: &TransformSpec, b: &TransformSpec) -> Result<ScannerStudy> {
    let imgs_a = test.iter().map(|x| apply_transform(a, x)).collect::<Result<Vec<_>>>()?;
    let imgs_b = test.iter().map(|x| apply_transform(b, x)).collect::<Result<Vec<_>>>()?;
    let mut codes = model.style_codes(&imgs_a.iter().collect::<Vec<_>>())?;
    codes.extend(model.style_codes(&imgs_b.iter().collect::<Vec<_>>())?);
    let labels: Vec<usize> = (0..codes.len()).map(|i| usize::from(i >= imgs_a.len())).collect();
    let embedding = pca_2d(&codes)?.embed(labels)?;
    let (svc, accuracy) = svc_discriminate(&embedding)?;

    let half = test.len() / 2;
    let donor_codes = model.style_codes(&[&imgs_b[0]])?;
    let code = most_representative_code(&StyleCodeSet::new(donor_codes, b.to_string())?);
    let sources: Vec<&Image<T>> = imgs_a[half..].iter().collect();
    let moved = model.transfer_all(&sources, &code)?;
    let truth = &imgs_b[half..];
    let normalized = set_mae(&moved, truth)? / set_mae(&imgs_a[half..], truth)?;
    Ok(ScannerStudy { embedding_csv: embedding.to_csv(), svc, accuracy, transfer_normalized: normalized })
}

/// Rasterises the SVC decision over the bounding box of its points:
/// class regions at 64 and 192, the boundary itself at 255.
pub fn decision_raster(svc: &Svc, side: usize) -> Result<Image<f32>> {
    let xs = svc.points.iter().map(|p| p[0]);
    let ys = svc.points.iter().map(|p| p[1]);
    let (x0, x1) = xs.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    let (y0, y1) = ys.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    let pad = |lo: f64, hi: f64| {
        let m = 0.1 * (hi - lo).max(1e-6);
        (lo - m, hi + m)
    };
    let ((x0, x1), (y0, y1)) = (pad(x0, x1), pad(y0, y1));
    let at = |i: usize, j: usize| {
        let x = x0 + (x1 - x0) * (i as f64 + 0.5) / side as f64;
        let y = y1 - (y1 - y0) * (j as f64 + 0.5) / side as f64;
        svc.decision([x, y])
    };
    let mut px = Vec::with_capacity(side * side);
    for j in 0..side {
        for i in 0..side {
            let d = at(i, j);
            let edge = i + 1 < side && (at(i + 1, j) > 0.0) != (d > 0.0);
            px.push(if edge { 255.0 } else if d > 0.0 { 192.0 } else { 64.0 });
        }
    }
    Image::new(side, side, px)
}

/// One code per row: `label,s0,...,s7`.
pub fn codes_to_csv<T: Scalar>(labels: &[String], codes: &[StyleCode<T>]) -> String {
    let mut out = String::from("label");
    for k in 0..STYLE_DIM {
        let _ = write!(out, ",s{k}");
    }
    out.push('\n');
    for (label, c) in labels.iter().zip(codes) {
        out.push_str(label);
        for v in c.values() {
            let _ = write!(out, ",{:e}", v.as_f64());
        }
        out.push('\n');
    }
    out
}

pub fn codes_from_csv(text: &str) -> Result<Vec<StyleCode<f64>>> {
    let bad = |message: String| Error::Format { what: "style code CSV", message };
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    match lines.next() {
        Some(h) if h.starts_with("label") => {}
        _ => return Err(bad("missing header".into())),
    }
    lines
        .enumerate()
        .map(|(i, line)| {
            let vals = line
                .split(',')
                .skip(1)
                .map(|v| v.trim().parse::<f64>().map_err(|_| bad(format!("row {}: `{v}` is not a number", i + 1))))
                .collect::<Result<Vec<_>>>()?;
            StyleCode::new(vals).map_err(|e| bad(format!("row {}: {e}", i + 1)))
        })
        .collect()
}
