//! Simulated imaging styles: intensity transfer functions and Sobel
//! filters, in randomized and fixed form.
//!
//! All formulas work in the `[0, 255]` intensity domain. Every forward
//! transform is followed by [`normalize_to_range`].

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::Rng;

use crate::data::{Image, I_MAX};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Family {
    Linear,
    Negative,
    Log,
    PowerLaw,
    PiecewiseLinear,
    SobelX,
    SobelY,
    Exp,
}

impl Family {
    /// The seven families sampled during training (everything except `Exp`).
    pub const TRAINING: [Family; 7] = [
        Family::Linear,
        Family::Negative,
        Family::Log,
        Family::PowerLaw,
        Family::PiecewiseLinear,
        Family::SobelX,
        Family::SobelY,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Family::Linear => "linear",
            Family::Negative => "negative",
            Family::Log => "log",
            Family::PowerLaw => "powerlaw",
            Family::PiecewiseLinear => "piecewise",
            Family::SobelX => "sobelx",
            Family::SobelY => "sobely",
            Family::Exp => "exp",
        }
    }

    pub fn is_invertible(self) -> bool {
        matches!(
            self,
            Family::Linear | Family::Negative | Family::Log | Family::PowerLaw | Family::PiecewiseLinear
        )
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.trim().to_ascii_lowercase().replace(['-', '_'], "");
        Ok(match norm.as_str() {
            "linear" | "identity" => Family::Linear,
            "negative" => Family::Negative,
            "log" => Family::Log,
            "powerlaw" | "gamma" | "power" => Family::PowerLaw,
            "piecewise" | "piecewiselinear" => Family::PiecewiseLinear,
            "sobelx" => Family::SobelX,
            "sobely" => Family::SobelY,
            "exp" => Family::Exp,
            _ => return Err(Error::invalid(format!("unknown transform family `{s}`"))),
        })
    }
}

/// One simulated style: a family plus its parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TransformSpec {
    /// `m * I + b`
    Linear { slope: f64, intercept: f64 },
    /// `m * I + b` with negative slope
    Negative { slope: f64, intercept: f64 },
    /// `a * c_log * ln(1 + I)` where `c_log = 255 / ln(1 + max(I))`
    Log { a: f64 },
    /// `255 * (I / 255)^gamma`
    PowerLaw { gamma: f64 },
    /// three segments through `(r1, s1)` and `(r2, s2)`
    PiecewiseLinear { r1: f64, r2: f64, s1: f64, s2: f64 },
    SobelX,
    SobelY,
    /// `a * exp(b * I)`
    Exp { a: f64, b: f64 },
}

pub const SOBEL_X: [[f64; 3]; 3] = [[1.0, 0.0, -1.0], [2.0, 0.0, -2.0], [1.0, 0.0, -1.0]];
pub const SOBEL_Y: [[f64; 3]; 3] = [[1.0, 2.0, 1.0], [0.0, 0.0, 0.0], [-1.0, -2.0, -1.0]];

impl TransformSpec {
    pub fn family(&self) -> Family {
        match self {
            TransformSpec::Linear { .. } => Family::Linear,
            TransformSpec::Negative { .. } => Family::Negative,
            TransformSpec::Log { .. } => Family::Log,
            TransformSpec::PowerLaw { .. } => Family::PowerLaw,
            TransformSpec::PiecewiseLinear { .. } => Family::PiecewiseLinear,
            TransformSpec::SobelX => Family::SobelX,
            TransformSpec::SobelY => Family::SobelY,
            TransformSpec::Exp { .. } => Family::Exp,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            TransformSpec::Linear { slope, intercept } | TransformSpec::Negative { slope, intercept } => {
                slope.is_finite() && intercept.is_finite() && slope != 0.0
            }
            TransformSpec::Log { a } => a.is_finite() && a > 0.0,
            TransformSpec::PowerLaw { gamma } => gamma.is_finite() && gamma > 0.0,
            TransformSpec::PiecewiseLinear { r1, r2, s1, s2 } => {
                0.0 < r1 && r1 < r2 && r2 < I_MAX && 0.0 < s1 && s1 < s2 && s2 < I_MAX
            }
            TransformSpec::SobelX | TransformSpec::SobelY => true,
            TransformSpec::Exp { a, b } => a.is_finite() && b.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::invalid(format!("invalid transform parameters {self:?}")))
        }
    }

    /// Key/value text describing the transform, one `key=value` per line.
    pub fn to_sidecar(&self) -> String {
        let mut out = format!("family={}\n", self.family());
        for (k, v) in self.params() {
            out.push_str(&format!("{k}={v}\n"));
        }
        out
    }

    pub fn params(&self) -> Vec<(&'static str, f64)> {
        match *self {
            TransformSpec::Linear { slope, intercept } | TransformSpec::Negative { slope, intercept } => {
                vec![("slope", slope), ("intercept", intercept)]
            }
            TransformSpec::Log { a } => vec![("a", a)],
            TransformSpec::PowerLaw { gamma } => vec![("gamma", gamma)],
            TransformSpec::PiecewiseLinear { r1, r2, s1, s2 } => vec![("r1", r1), ("r2", r2), ("s1", s1), ("s2", s2)],
            TransformSpec::SobelX | TransformSpec::SobelY => vec![],
            TransformSpec::Exp { a, b } => vec![("a", a), ("b", b)],
        }
    }

    /// Starts from `base` (normally the fixed setting) and overrides the named parameters.
    pub fn with_overrides(base: TransformSpec, overrides: &[(String, f64)]) -> Result<TransformSpec> {
        let mut spec = base;
        for (key, v) in overrides {
            let v = *v;
            let slot = match (&mut spec, key.as_str()) {
                (TransformSpec::Linear { slope, .. } | TransformSpec::Negative { slope, .. }, "slope") => slope,
                (TransformSpec::Linear { intercept, .. } | TransformSpec::Negative { intercept, .. }, "intercept") => {
                    intercept
                }
                (TransformSpec::Log { a } | TransformSpec::Exp { a, .. }, "a") => a,
                (TransformSpec::Exp { b, .. }, "b") => b,
                (TransformSpec::PowerLaw { gamma }, "gamma") => gamma,
                (TransformSpec::PiecewiseLinear { r1, .. }, "r1") => r1,
                (TransformSpec::PiecewiseLinear { r2, .. }, "r2") => r2,
                (TransformSpec::PiecewiseLinear { s1, .. }, "s1") => s1,
                (TransformSpec::PiecewiseLinear { s2, .. }, "s2") => s2,
                _ => return Err(Error::invalid(format!("`{key}` is not a parameter of {}", base.family()))),
            };
            *slot = v;
        }
        spec.validate()?;
        Ok(spec)
    }

    pub fn from_sidecar(text: &str) -> Result<TransformSpec> {
        let mut family = None;
        let mut overrides = Vec::new();
        for line in text.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#')) {
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Format { what: "transform sidecar", message: format!("line `{line}`") })?;
            if k.trim() == "family" {
                family = Some(v.parse::<Family>()?);
            } else {
                let value = v.trim().parse::<f64>().map_err(|_| Error::Format {
                    what: "transform sidecar",
                    message: format!("`{k}` is not a number"),
                })?;
                overrides.push((k.trim().to_string(), value));
            }
        }
        let family = family.ok_or_else(|| Error::Format { what: "transform sidecar", message: "missing family".into() })?;
        let base = match family {
            Family::Exp => exp_target_style(),
            f => fixed_transform(f)?,
        };
        Self::with_overrides(base, &overrides)
    }
}

impl fmt::Display for TransformSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.family())?;
        for (k, v) in self.params() {
            write!(f, " {k}={v:.4}")?;
        }
        Ok(())
    }
}

/// The unseen exponential evaluation style, `2.3 * exp(0.02 * I)`.
pub fn exp_target_style() -> TransformSpec {
    TransformSpec::Exp { a: 2.3, b: 0.02 }
}

/// Draws a family uniformly from `families`, then its parameters.
pub fn sample_transform_from<R: Rng + ?Sized>(families: &[Family], rng: &mut R) -> Result<TransformSpec> {
    if families.is_empty() {
        return Err(Error::invalid("no transform family to sample from"));
    }
    let family = families[rng.random_range(0..families.len())];
    sample_parameters(family, rng)
}

/// Uniform choice among the seven training families with randomized parameters.
pub fn sample_random_transform<R: Rng + ?Sized>(rng: &mut R) -> TransformSpec {
    sample_transform_from(&Family::TRAINING, rng).expect("non-empty family list")
}

/// Randomized parameters for one family. Sobel filters have none.
pub fn sample_parameters<R: Rng + ?Sized>(family: Family, rng: &mut R) -> Result<TransformSpec> {
    Ok(match family {
        Family::Linear => {
            let theta = rng.random_range(PI / 8.0..3.0 * PI / 8.0);
            TransformSpec::Linear { slope: theta.tan(), intercept: rng.random_range(-20.0..20.0) }
        }
        Family::Negative => {
            let theta = rng.random_range(-3.0 * PI / 8.0..-PI / 8.0);
            TransformSpec::Negative { slope: theta.tan(), intercept: rng.random_range(235.0..275.0) }
        }
        Family::Log => TransformSpec::Log { a: rng.random_range(0.7..1.3) },
        Family::PowerLaw => TransformSpec::PowerLaw { gamma: 2f64.powf(rng.random_range(-5.0..5.0)) },
        Family::PiecewiseLinear => TransformSpec::PiecewiseLinear {
            r1: rng.random_range(55.0..95.0),
            r2: rng.random_range(130.0..170.0),
            s1: rng.random_range(35.0..75.0),
            s2: rng.random_range(205.0..245.0),
        },
        Family::SobelX => TransformSpec::SobelX,
        Family::SobelY => TransformSpec::SobelY,
        Family::Exp => return Err(Error::invalid("the exp style is never sampled; build it explicitly")),
    })
}

/// Parameters fixed at the means of their sampling distributions
/// (power-law at `gamma = 0.5`).
pub fn fixed_transform(family: Family) -> Result<TransformSpec> {
    Ok(match family {
        Family::Linear => TransformSpec::Linear { slope: 1.0, intercept: 0.0 },
        Family::Negative => TransformSpec::Negative { slope: -1.0, intercept: I_MAX },
        Family::Log => TransformSpec::Log { a: 1.0 },
        Family::PowerLaw => TransformSpec::PowerLaw { gamma: 0.5 },
        Family::PiecewiseLinear => TransformSpec::PiecewiseLinear { r1: 75.0, r2: 150.0, s1: 55.0, s2: 225.0 },
        Family::SobelX => TransformSpec::SobelX,
        Family::SobelY => TransformSpec::SobelY,
        Family::Exp => return Err(Error::invalid("the exp style has no mean setting; construct it explicitly")),
    })
}

fn piecewise(v: f64, r1: f64, r2: f64, s1: f64, s2: f64) -> f64 {
    if v <= r1 {
        s1 / r1 * v
    } else if v <= r2 {
        (s2 - s1) / (r2 - r1) * (v - r1) + s1
    } else {
        (I_MAX - s2) / (I_MAX - r2) * (v - r2) + s2
    }
}

fn log_scale(max: f64) -> Result<f64> {
    if max <= 0.0 {
        return Err(Error::LogScaleUndefined);
    }
    Ok(I_MAX / (1.0 + max).ln())
}

/// 2-D linear convolution (kernel flipped) with zero padding, same size output.
pub fn convolve3x3<T: Scalar>(img: &Image<T>, kernel: &[[f64; 3]; 3]) -> Vec<T> {
    let (w, h) = (img.width() as isize, img.height() as isize);
    let px = img.pixels();
    let mut out = Vec::with_capacity(px.len());
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (i, row) in kernel.iter().enumerate() {
                for (j, &k) in row.iter().enumerate() {
                    let (sy, sx) = (y - (i as isize - 1), x - (j as isize - 1));
                    if (0..h).contains(&sy) && (0..w).contains(&sx) {
                        acc += k * px[(sy * w + sx) as usize].as_f64();
                    }
                }
            }
            out.push(T::lit(acc));
        }
    }
    out
}

/// The family formula applied pointwise (or by convolution), before
/// range normalisation.
pub fn raw_transform<T: Scalar>(spec: &TransformSpec, img: &Image<T>) -> Result<Vec<T>> {
    spec.validate()?;
    let px = img.pixels();
    let map = |f: &dyn Fn(f64) -> f64| px.iter().map(|p| T::lit(f(p.as_f64()))).collect::<Vec<T>>();
    Ok(match *spec {
        TransformSpec::Linear { slope, intercept } | TransformSpec::Negative { slope, intercept } => {
            map(&|v| slope * v + intercept)
        }
        TransformSpec::Log { a } => {
            let c = a * log_scale(img.max_value().as_f64())?;
            map(&|v| c * (1.0 + v).ln())
        }
        TransformSpec::PowerLaw { gamma } => map(&|v| I_MAX * (v / I_MAX).powf(gamma)),
        TransformSpec::PiecewiseLinear { r1, r2, s1, s2 } => map(&|v| piecewise(v, r1, r2, s1, s2)),
        TransformSpec::SobelX => convolve3x3(img, &SOBEL_X),
        TransformSpec::SobelY => convolve3x3(img, &SOBEL_Y),
        TransformSpec::Exp { a, b } => map(&|v| a * (b * v).exp()),
    })
}

/// Applies the style and brings the result back into `[0, 255]`.
pub fn apply_transform<T: Scalar>(spec: &TransformSpec, img: &Image<T>) -> Result<Image<T>> {
    let raw = raw_transform(spec, img)?;
    normalize_to_range(img.width(), img.height(), &raw)
}

/// Leaves in-range rasters alone; otherwise min-max stretches to `[0, 255]`.
/// Constant out-of-range rasters become all zeros.
///
/// Values within `1e-9 * 255` of the bounds count as in range (and are
/// clamped), so floating-point noise at exactly 255 does not trigger a
/// rescale.
pub fn normalize_to_range<T: Scalar>(width: usize, height: usize, raw: &[T]) -> Result<Image<T>> {
    if let Some(v) = raw.iter().find(|v| !v.is_finite()) {
        return Err(Error::invalid(format!("non-finite value {v} in transform output")));
    }
    let tol = T::lit(1e-9 * I_MAX);
    let (lo, hi) = (T::zero(), T::lit(I_MAX));
    if raw.iter().all(|&v| v >= lo - tol && v <= hi + tol) {
        return Image::new(width, height, raw.iter().map(|&v| v.max(lo).min(hi)).collect());
    }
    let min = raw.iter().copied().fold(T::infinity(), T::min);
    let max = raw.iter().copied().fold(T::neg_infinity(), T::max);
    if max <= min {
        return Image::new(width, height, vec![T::zero(); raw.len()]);
    }
    let span = max - min;
    Image::new(width, height, raw.iter().map(|&v| ((v - min) / span * hi).max(lo).min(hi)).collect())
}

/// Analytic inverse of the five monotone families.
///
/// The log family's scale depends on the maximum of the image it was applied
/// to, so that value must be supplied as `source_max`.
pub fn invert_transform<T: Scalar>(spec: &TransformSpec, img_out: &Image<T>, source_max: Option<f64>) -> Result<Image<T>> {
    spec.validate()?;
    let inv: Box<dyn Fn(f64) -> f64> = match *spec {
        TransformSpec::Linear { slope, intercept } | TransformSpec::Negative { slope, intercept } => {
            Box::new(move |y| (y - intercept) / slope)
        }
        TransformSpec::Log { a } => {
            let max = source_max.ok_or_else(|| Error::invalid("inverting the log style needs the source image maximum"))?;
            let c = a * log_scale(max)?;
            Box::new(move |y| (y / c).exp() - 1.0)
        }
        TransformSpec::PowerLaw { gamma } => Box::new(move |y| I_MAX * (y / I_MAX).powf(1.0 / gamma)),
        TransformSpec::PiecewiseLinear { r1, r2, s1, s2 } => {
            // the inverse is again piecewise linear, with the roles of r and s swapped
            Box::new(move |y| piecewise(y, s1, s2, r1, r2))
        }
        TransformSpec::SobelX => return Err(Error::NonInvertible("sobelx")),
        TransformSpec::SobelY => return Err(Error::NonInvertible("sobely")),
        TransformSpec::Exp { .. } => return Err(Error::NonInvertible("exp")),
    };
    let px = img_out.pixels().iter().map(|p| T::lit(inv(p.as_f64()).clamp(0.0, I_MAX))).collect();
    Image::new(img_out.width(), img_out.height(), px)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn ramp() -> Image<f64> {
        Image::new(16, 16, (0..256).map(f64::from).collect()).unwrap()
    }

    fn random_image(seed: u64, side: usize) -> Image<f64> {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        Image::new(side, side, (0..side * side).map(|_| r.random_range(0.0..=255.0)).collect()).unwrap()
    }

    #[test]
    fn sampling_is_uniform_over_families() {
        let mut r = ChaCha8Rng::seed_from_u64(42);
        let mut counts = std::collections::HashMap::new();
        for _ in 0..7000 {
            *counts.entry(sample_random_transform(&mut r).family()).or_insert(0usize) += 1;
        }
        assert_eq!(counts.len(), 7);
        for (f, c) in counts {
            assert!((850..=1150).contains(&c), "{f}: {c}");
        }
    }

    #[test]
    fn sampled_parameters_stay_in_their_ranges() {
        let mut r = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..2000 {
            match sample_random_transform(&mut r) {
                TransformSpec::Linear { slope, intercept } => {
                    assert!(((PI / 8.0).tan()..=(3.0 * PI / 8.0).tan()).contains(&slope));
                    assert!((-20.0..=20.0).contains(&intercept));
                }
                TransformSpec::Negative { slope, intercept } => {
                    assert!((-(3.0 * PI / 8.0).tan()..=-(PI / 8.0).tan()).contains(&slope));
                    assert!((235.0..=275.0).contains(&intercept));
                }
                TransformSpec::Log { a } => assert!((0.7..=1.3).contains(&a)),
                TransformSpec::PowerLaw { gamma } => assert!((0.03125..=32.0).contains(&gamma)),
                s @ TransformSpec::PiecewiseLinear { .. } => s.validate().unwrap(),
                TransformSpec::SobelX | TransformSpec::SobelY => {}
                TransformSpec::Exp { .. } => panic!("exp sampled"),
            }
        }
    }

    #[test]
    fn fixed_settings() {
        let img = ramp();
        let id = apply_transform(&fixed_transform(Family::Linear).unwrap(), &img).unwrap();
        assert_eq!(id, img);
        let neg = apply_transform(&fixed_transform(Family::Negative).unwrap(), &img).unwrap();
        assert_eq!(neg.pixels()[0], 255.0);
        assert_eq!(neg.pixels()[255], 0.0);
        let pw = apply_transform(&fixed_transform(Family::PiecewiseLinear).unwrap(), &img).unwrap();
        assert!((pw.pixels()[75] - 55.0).abs() < 1e-12);
        assert!((pw.pixels()[150] - 225.0).abs() < 1e-12);
        let gamma = apply_transform(&fixed_transform(Family::PowerLaw).unwrap(), &img).unwrap();
        assert_eq!(gamma.pixels()[255], 255.0);
        assert!(fixed_transform(Family::Exp).is_err());
    }

    #[test]
    fn exp_before_normalisation() {
        let img = Image::<f64>::filled(8, 8, 0.0).unwrap();
        let raw = raw_transform(&exp_target_style(), &img).unwrap();
        assert!((raw[0] - 2.3).abs() < 1e-12);
    }

    #[test]
    fn sobel_of_constant_interior_is_zero() {
        let img = Image::<f64>::filled(8, 8, 100.0).unwrap();
        let raw = raw_transform(&TransformSpec::SobelX, &img).unwrap();
        for y in 1..7 {
            for x in 1..7 {
                assert_eq!(raw[y * 8 + x], 0.0);
            }
        }
    }

    #[test]
    fn normalisation_branches() {
        let inside: Vec<f64> = (0..64).map(|i| i as f64 * 3.0).collect();
        assert_eq!(normalize_to_range(8, 8, &inside).unwrap().pixels(), inside.as_slice());
        let sobel: Vec<f64> = (0..64).map(|i| -510.0 + i as f64 * 1020.0 / 63.0).collect();
        let n = normalize_to_range(8, 8, &sobel).unwrap();
        assert_eq!(n.pixels()[0], 0.0);
        assert!((n.pixels()[63] - 255.0).abs() < 1e-12);
        assert!((n.pixels()[31] - (sobel[31] + 510.0) / 1020.0 * 255.0).abs() < 1e-9);
        let flat = vec![300.0; 64];
        assert!(normalize_to_range(8, 8, &flat).unwrap().pixels().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn log_of_black_image_is_undefined() {
        let img = Image::<f64>::filled(8, 8, 0.0).unwrap();
        let err = apply_transform(&TransformSpec::Log { a: 1.0 }, &img).unwrap_err();
        assert!(err.to_string().contains("log scale undefined"));
    }

    #[test]
    fn inverses() {
        let img = random_image(1, 16);
        // 8-bit content: the fixed negative is then exact in floating point
        let quantised = Image::new(16, 16, img.pixels().iter().map(|p| p.round()).collect()).unwrap();
        let neg = fixed_transform(Family::Negative).unwrap();
        let once = apply_transform(&neg, &quantised).unwrap();
        assert_eq!(invert_transform(&neg, &once, None).unwrap(), quantised);
        assert_eq!(apply_transform(&neg, &once).unwrap(), quantised);

        let log = TransformSpec::Log { a: 1.0 };
        let fwd = apply_transform(&log, &img).unwrap();
        let back = invert_transform(&log, &fwd, Some(img.max_value())).unwrap();
        let worst = back.pixels().iter().zip(img.pixels()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(worst <= 1.0 / 255.0, "{worst}");
        assert!(invert_transform(&log, &fwd, None).is_err());

        for s in [TransformSpec::SobelX, TransformSpec::SobelY, exp_target_style()] {
            assert!(invert_transform(&s, &img, None).unwrap_err().to_string().contains("non-invertible"));
        }
    }

    #[test]
    fn sidecar_round_trip() {
        let mut r = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..50 {
            let s = sample_random_transform(&mut r);
            assert_eq!(TransformSpec::from_sidecar(&s.to_sidecar()).unwrap(), s);
        }
        let e = exp_target_style();
        assert_eq!(TransformSpec::from_sidecar(&e.to_sidecar()).unwrap(), e);
        assert!(TransformSpec::from_sidecar("family=log\ngamma=2\n").is_err());
    }

    fn pointwise(spec: &TransformSpec, v: f64, max: f64) -> f64 {
        let img = Image::new(8, 8, {
            let mut px = vec![0.0; 64];
            px[0] = v;
            px[1] = max;
            px
        })
        .unwrap();
        raw_transform(spec, &img).unwrap()[0]
    }

    proptest! {
        #[test]
        fn monotone_families_preserve_order(p in 0.0f64..=255.0, q in 0.0f64..=255.0, seed in 0u64..1000) {
            let (p, q) = if p <= q { (p, q) } else { (q, p) };
            let mut r = ChaCha8Rng::seed_from_u64(seed);
            for fam in [Family::Linear, Family::Log, Family::PowerLaw, Family::PiecewiseLinear] {
                let spec = sample_parameters(fam, &mut r).unwrap();
                prop_assert!(pointwise(&spec, p, 255.0) <= pointwise(&spec, q, 255.0));
            }
            let neg = fixed_transform(Family::Negative).unwrap();
            prop_assert!(pointwise(&neg, p, 255.0) >= pointwise(&neg, q, 255.0));
        }

        #[test]
        fn piecewise_is_continuous_at_breakpoints(seed in 0u64..1000) {
            let mut r = ChaCha8Rng::seed_from_u64(seed);
            if let TransformSpec::PiecewiseLinear { r1, r2, s1, s2 } = sample_parameters(Family::PiecewiseLinear, &mut r).unwrap() {
                for b in [r1, r2] {
                    let jump = (piecewise(b - 1e-6, r1, r2, s1, s2) - piecewise(b + 1e-6, r1, r2, s1, s2)).abs();
                    prop_assert!(jump < 1e-3);
                }
            }
        }

        #[test]
        fn every_family_yields_a_valid_image(seed in 0u64..500) {
            let img = random_image(seed, 8);
            let mut r = ChaCha8Rng::seed_from_u64(seed);
            let spec = sample_random_transform(&mut r);
            let out = apply_transform(&spec, &img).unwrap();
            prop_assert!(out.pixels().iter().all(|&v| (0.0..=255.0).contains(&v)));
            prop_assert_eq!(apply_transform(&spec, &img).unwrap(), out);
        }
    }
}
