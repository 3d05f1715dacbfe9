use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use stylemapper::analysis::{pca_2d, svc_discriminate};
use stylemapper::data::{list_images, read_image, write_image, write_pgm};
use stylemapper::experiments::{
    codes_from_csv, codes_to_csv, decision_raster, nshot_sweep, run_experiment, sweep_csv, target_style, train_model,
    Experiment, ExperimentConfig, RunDir,
};
use stylemapper::inference::{most_representative_code, StyleCodeSet, StyleModel};
use stylemapper::model::ModelParams;
use stylemapper::transforms::{apply_transform, exp_target_style, fixed_transform, sample_parameters, Family, TransformSpec};
use stylemapper::Image32;

#[derive(Parser)]
#[command(name = "stylemapper", version, about = "Grayscale style transfer with disentangled style and content encoders")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model from a key=value config.
    Train {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Print a progress line every N steps (0 = quiet).
        #[arg(long, default_value_t = 100)]
        progress: usize,
    },
    /// Apply one simulated style to an image.
    Transform(TransformArgs),
    /// Re-render an image in the style of one or more donor images.
    Transfer {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, conflicts_with = "style_dir", required_unless_present = "style_dir")]
        style_image: Option<PathBuf>,
        #[arg(long, requires = "n_target")]
        style_dir: Option<PathBuf>,
        #[arg(long)]
        n_target: Option<usize>,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
    },
    /// Normalized transfer error over a sweep of donor counts.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Target style family; `exp` selects the unseen exponential style.
        #[arg(long)]
        family: Family,
        #[arg(long)]
        out: PathBuf,
    },
    /// Style codes of every image in a directory, as CSV.
    Codes {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        input_dir: PathBuf,
        #[arg(long)]
        output: PathBuf,
    },
    /// PCA embedding and RBF-SVC between two sets of style codes.
    Discriminate {
        #[arg(long)]
        codes_a: PathBuf,
        #[arg(long)]
        codes_b: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run one of the end-to-end experiment pipelines.
    Reproduce {
        experiment: Experiment,
        /// Desk-sized networks and data (default). Without it the full-size setup is used.
        #[arg(long)]
        desk_scale: bool,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 100)]
        progress: usize,
    },
}

#[derive(Args)]
struct TransformArgs {
    #[arg(long)]
    family: Family,
    /// Use the family's fixed parameter setting.
    #[arg(long, conflicts_with = "seed", required_unless_present = "seed")]
    fixed: bool,
    /// Sample the parameters from this seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Parameter override, e.g. `--param gamma=0.5`.
    #[arg(long = "param", value_parser = parse_param)]
    params: Vec<(String, f64)>,
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    output: PathBuf,
    /// Where to write the transform description; defaults to `<output>.transform.txt`.
    #[arg(long)]
    sidecar: Option<PathBuf>,
}

fn parse_param(s: &str) -> Result<(String, f64), String> {
    let (k, v) = s.split_once('=').ok_or_else(|| format!("expected key=value, got `{s}`"))?;
    let v = v.parse().map_err(|_| format!("`{v}` is not a number"))?;
    Ok((k.trim().to_string(), v))
}

fn load_config(path: Option<&Path>, base: ExperimentConfig) -> Result<ExperimentConfig> {
    match path {
        None => Ok(base),
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            Ok(base.apply(&text)?)
        }
    }
}

fn load_model(path: &Path) -> Result<ModelParams<f32>> {
    ModelParams::load(path).with_context(|| format!("loading checkpoint {}", path.display()))
}

fn create_dir(p: &Path) -> Result<()> {
    fs::create_dir_all(p).with_context(|| format!("creating {}", p.display()))
}

fn cmd_transform(a: TransformArgs) -> Result<()> {
    let base = match (a.family, a.seed) {
        (Family::Exp, None) => exp_target_style(),
        (f, None) => fixed_transform(f)?,
        (f, Some(seed)) => sample_parameters(f, &mut ChaCha8Rng::seed_from_u64(seed))?,
    };
    let spec = TransformSpec::with_overrides(base, &a.params)?;
    let img: Image32 = read_image(&a.input)?;
    write_image(&a.output, &apply_transform(&spec, &img)?)?;
    let sidecar = a.sidecar.unwrap_or_else(|| {
        let mut s = a.output.clone().into_os_string();
        s.push(".transform.txt");
        s.into()
    });
    fs::write(&sidecar, spec.to_sidecar()).with_context(|| format!("writing {}", sidecar.display()))?;
    println!("{spec}");
    Ok(())
}

fn cmd_transfer(
    checkpoint: &Path,
    style_image: Option<PathBuf>,
    style_dir: Option<PathBuf>,
    n_target: Option<usize>,
    input: &Path,
    output: &Path,
) -> Result<()> {
    let model = load_model(checkpoint)?;
    let donors: Vec<PathBuf> = match (style_image, style_dir) {
        (Some(p), _) => vec![p],
        (None, Some(dir)) => {
            let n = n_target.unwrap_or(1);
            let all = list_images(&dir)?;
            if n == 0 || n > all.len() {
                bail!("--n-target {n} but {} holds {} images", dir.display(), all.len());
            }
            all.into_iter().take(n).collect()
        }
        (None, None) => unreachable!("clap requires one style source"),
    };
    let imgs = donors.iter().map(|p| read_image::<f32>(p)).collect::<stylemapper::Result<Vec<_>>>()?;
    let codes = model.style_codes(&imgs.iter().collect::<Vec<_>>())?;
    let code = most_representative_code(&StyleCodeSet::new(codes, "donors")?);
    let content: Image32 = read_image(input)?;
    let out = model.transfer_all(&[&content], &code)?;
    write_image(output, &out[0])?;
    Ok(())
}

fn cmd_eval(checkpoint: &Path, config: Option<&Path>, family: Family, out: &Path) -> Result<()> {
    let model = load_model(checkpoint)?;
    let cfg = load_config(config, ExperimentConfig::default())?;
    let data = cfg.load_data::<f32>()?;
    let spec = target_style((family != Family::Exp).then_some(family))?;
    let evals = nshot_sweep(&model, &data.test, &spec, &cfg.n_targets)?;
    let csv = sweep_csv(&spec, &evals);
    create_dir(out)?;
    fs::write(out.join("transfer_eval.csv"), &csv)?;
    print!("{csv}");
    Ok(())
}

fn cmd_codes(checkpoint: &Path, input_dir: &Path, output: &Path) -> Result<()> {
    let model = load_model(checkpoint)?;
    let paths = list_images(input_dir)?;
    if paths.is_empty() {
        bail!("no PNG or PGM images in {}", input_dir.display());
    }
    let imgs = paths.iter().map(|p| read_image::<f32>(p)).collect::<stylemapper::Result<Vec<_>>>()?;
    let codes = model.style_codes(&imgs.iter().collect::<Vec<_>>())?;
    let labels: Vec<String> =
        paths.iter().map(|p| p.file_name().map(|n| n.to_string_lossy().replace(',', "_")).unwrap_or_default()).collect();
    fs::write(output, codes_to_csv(&labels, &codes)).with_context(|| format!("writing {}", output.display()))?;
    Ok(())
}

fn cmd_discriminate(a: &Path, b: &Path, out: &Path) -> Result<()> {
    let read = |p: &Path| -> Result<_> {
        let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
        Ok(codes_from_csv(&text)?)
    };
    let mut codes = read(a)?;
    let na = codes.len();
    codes.extend(read(b)?);
    let labels = (0..codes.len()).map(|i| usize::from(i >= na)).collect();
    let embedding = pca_2d(&codes)?.embed(labels)?;
    let (svc, accuracy) = svc_discriminate(&embedding)?;
    create_dir(out)?;
    fs::write(out.join("embedding.csv"), embedding.to_csv())?;
    write_pgm(&out.join("boundary.pgm"), &decision_raster(&svc, 128)?)?;
    println!("accuracy {accuracy:.4}");
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train { config, out, progress } => {
            let cfg = load_config(config.as_deref(), ExperimentConfig::default())?;
            let dir = RunDir::create(&out, "train", &cfg)?;
            let data = cfg.load_data::<f32>()?;
            let (_, log) = train_model(&cfg, &data, &dir, "model", progress)?;
            println!("{}", dir.path.display());
            if let Some(last) = log.totals.last() {
                println!("final loss {last:.5}");
            }
        }
        Command::Transform(a) => cmd_transform(a)?,
        Command::Transfer { checkpoint, style_image, style_dir, n_target, input, output } => {
            cmd_transfer(&checkpoint, style_image, style_dir, n_target, &input, &output)?
        }
        Command::Eval { checkpoint, config, family, out } => cmd_eval(&checkpoint, config.as_deref(), family, &out)?,
        Command::Codes { checkpoint, input_dir, output } => cmd_codes(&checkpoint, &input_dir, &output)?,
        Command::Discriminate { codes_a, codes_b, out } => cmd_discriminate(&codes_a, &codes_b, &out)?,
        Command::Reproduce { experiment, desk_scale, config, out, progress } => {
            let base = if desk_scale { ExperimentConfig::default() } else { ExperimentConfig::paper() };
            let cfg = load_config(config.as_deref(), experiment.configure(base))?;
            let report = run_experiment(experiment, &cfg, &out, progress)?;
            println!("{}", report.dir.display());
            for line in report.lines {
                println!("{line}");
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            let usage = matches!(e.downcast_ref::<stylemapper::Error>(), Some(stylemapper::Error::Config { .. }));
            ExitCode::from(if usage { 1 } else { 2 })
        }
    }
}
