//! Seeded synthesis of the corruption processes used for training and
//! robustness evaluation.
//!
//! Every corruption is a pure function of (image, spec): the generator is
//! instantiated from the spec's seed per call, draws run over pixels in
//! row-major order (channels innermost where applicable), and the result is
//! clamped into [0, 1]. Identical inputs therefore reproduce bit-identical
//! noise fields.

use std::str::FromStr;

use crate::error::{CoreError, Result};
use crate::imaging::{ImageF, PatchPair};
use crate::rng::{mix_seed, SeededRng};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NoiseKind {
    None,
    /// Additive: y = x + n, n ~ Normal(0, param) per pixel-channel.
    Gaussian,
    /// Multiplicative: y = x * (1 + n), n ~ Normal(0, param) per pixel-channel.
    Speckle,
    /// Quantizing: y = param * Poisson(x / param) per pixel-channel; smaller
    /// param means weaker noise.
    Poisson,
    /// With probability param a pixel (all three channels jointly) becomes
    /// 1.0 or 0.0, equally likely.
    SaltPepper,
}

impl NoiseKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            NoiseKind::None => "none",
            NoiseKind::Gaussian => "gaussian",
            NoiseKind::Speckle => "speckle",
            NoiseKind::Poisson => "poisson",
            NoiseKind::SaltPepper => "salt_pepper",
        }
    }
}

impl FromStr for NoiseKind {
    type Err = CoreError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(NoiseKind::None),
            "gaussian" => Ok(NoiseKind::Gaussian),
            "speckle" => Ok(NoiseKind::Speckle),
            "poisson" => Ok(NoiseKind::Poisson),
            "salt_pepper" | "salt-pepper" | "sp" => Ok(NoiseKind::SaltPepper),
            other => Err(CoreError::invalid(
                "noise",
                format!("unknown noise kind '{other}'"),
            )),
        }
    }
}

/// A validated corruption description: kind, strength parameter and seed.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NoiseSpec {
    kind: NoiseKind,
    param: f64,
    seed: u64,
}

impl NoiseSpec {
    /// `param` is the variance for gaussian/speckle, the quantization step
    /// for poisson and the flip probability for salt_pepper (must be <= 1).
    pub fn new(kind: NoiseKind, param: f64, seed: u64) -> Result<NoiseSpec> {
        if !param.is_finite() || param < 0.0 {
            return Err(CoreError::invalid(
                "noise",
                format!("negative or non-finite param {param}"),
            ));
        }
        if kind == NoiseKind::SaltPepper && param > 1.0 {
            return Err(CoreError::invalid(
                "noise",
                format!("salt_pepper probability {param} > 1"),
            ));
        }
        Ok(NoiseSpec { kind, param, seed })
    }

    pub fn none() -> NoiseSpec {
        NoiseSpec {
            kind: NoiseKind::None,
            param: 0.0,
            seed: 0,
        }
    }

    pub fn kind(&self) -> NoiseKind {
        self.kind
    }

    pub fn param(&self) -> f64 {
        self.param
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn with_seed(&self, seed: u64) -> NoiseSpec {
        NoiseSpec { seed, ..*self }
    }

    /// Parse the CLI form "kind:param:seed", e.g. "gaussian:0.1:7".
    pub fn parse(s: &str) -> Result<NoiseSpec> {
        let parts: Vec<&str> = s.split(':').collect();
        if parts.len() != 3 {
            return Err(CoreError::invalid(
                "noise",
                format!("expected kind:param:seed, got '{s}'"),
            ));
        }
        let kind = NoiseKind::from_str(parts[0])?;
        let param: f64 = parts[1]
            .parse()
            .map_err(|_| CoreError::invalid("noise", format!("bad param '{}'", parts[1])))?;
        let seed: u64 = parts[2]
            .parse()
            .map_err(|_| CoreError::invalid("noise", format!("bad seed '{}'", parts[2])))?;
        NoiseSpec::new(kind, param, seed)
    }

    /// Stable label for reports: "gaussian(0.1)", "none", ...
    pub fn label(&self) -> String {
        match self.kind {
            NoiseKind::None => "none".to_string(),
            _ => format!("{}({})", self.kind.as_str(), self.param),
        }
    }
}

/// Apply the corruption described by `spec` to `img`.
pub fn corrupt(img: &ImageF, spec: &NoiseSpec) -> ImageF {
    if spec.kind == NoiseKind::None {
        return img.clone();
    }
    let mut rng = SeededRng::new(spec.seed);
    let mut data = img.data().to_vec();
    match spec.kind {
        NoiseKind::None => unreachable!(),
        NoiseKind::Gaussian => {
            let sigma = spec.param.sqrt();
            for v in &mut data {
                *v = (*v as f64 + sigma * rng.gaussian()) as f32;
            }
        }
        NoiseKind::Speckle => {
            let sigma = spec.param.sqrt();
            for v in &mut data {
                *v = (*v as f64 * (1.0 + sigma * rng.gaussian())) as f32;
            }
        }
        NoiseKind::Poisson => {
            let lambda = spec.param;
            if lambda > 0.0 {
                for v in &mut data {
                    *v = (lambda * rng.poisson(*v as f64 / lambda) as f64) as f32;
                }
            }
        }
        NoiseKind::SaltPepper => {
            let p = spec.param;
            for px in data.chunks_mut(3) {
                if rng.uniform() < p {
                    let value = if rng.uniform() < 0.5 { 1.0 } else { 0.0 };
                    px.fill(value);
                }
            }
        }
    }
    ImageF::from_data_clamped(img.height(), img.width(), data).expect("clamped noise output")
}

/// Corrupt only the LR member of each pair; HR stays clean. Patch `i` uses
/// the sub-seed `mix_seed(spec.seed, i)`.
pub fn corrupt_batch(pairs: &[PatchPair], spec: &NoiseSpec) -> Vec<PatchPair> {
    pairs
        .iter()
        .enumerate()
        .map(|(i, pair)| PatchPair {
            hr: pair.hr.clone(),
            lr: corrupt(&pair.lr, &spec.with_seed(mix_seed(spec.seed, i as u64))),
            scale: pair.scale,
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imaging::sample_patches;

    #[test]
    fn spec_validation() {
        assert!(NoiseSpec::new(NoiseKind::Gaussian, -0.1, 0).is_err());
        assert!(NoiseSpec::new(NoiseKind::SaltPepper, 1.5, 0).is_err());
        assert!(NoiseSpec::new(NoiseKind::SaltPepper, 0.2, 0).is_ok());
        assert!("wiggle".parse::<NoiseKind>().is_err());
    }

    #[test]
    fn parse_round_trip() {
        let spec = NoiseSpec::parse("gaussian:0.1:7").unwrap();
        assert_eq!(spec.kind(), NoiseKind::Gaussian);
        assert_eq!(spec.param(), 0.1);
        assert_eq!(spec.seed(), 7);
        assert!(NoiseSpec::parse("gaussian:0.1").is_err());
        assert!(NoiseSpec::parse("gaussian:x:1").is_err());
    }

    #[test]
    fn none_is_bit_identical() {
        let img = ImageF::constant(5, 5, 0.42).unwrap();
        let out = corrupt(&img, &NoiseSpec::none());
        assert_eq!(img, out);
    }

    #[test]
    fn speckle_and_poisson_fix_zero() {
        let zero = ImageF::constant(6, 6, 0.0).unwrap();
        let speckle = NoiseSpec::new(NoiseKind::Speckle, 0.1, 3).unwrap();
        assert_eq!(corrupt(&zero, &speckle), zero);
        let poisson = NoiseSpec::new(NoiseKind::Poisson, 0.1, 3).unwrap();
        assert_eq!(corrupt(&zero, &poisson), zero);
    }

    #[test]
    fn determinism_and_seed_sensitivity() {
        let img = ImageF::constant(16, 16, 0.5).unwrap();
        let spec = NoiseSpec::new(NoiseKind::Gaussian, 0.04, 11).unwrap();
        let a = corrupt(&img, &spec);
        let b = corrupt(&img, &spec);
        assert_eq!(a, b);

        let c = corrupt(&img, &spec.with_seed(12));
        let differing = a
            .data()
            .iter()
            .zip(c.data())
            .filter(|(x, y)| x != y)
            .count();
        assert!(
            differing as f64 >= 0.99 * a.data().len() as f64,
            "only {differing} values differ"
        );
    }

    #[test]
    fn outputs_stay_in_range() {
        let img = ImageF::constant(16, 16, 0.9).unwrap();
        for spec in [
            NoiseSpec::new(NoiseKind::Gaussian, 0.3, 1).unwrap(),
            NoiseSpec::new(NoiseKind::Speckle, 0.3, 1).unwrap(),
            NoiseSpec::new(NoiseKind::Poisson, 0.25, 1).unwrap(),
            NoiseSpec::new(NoiseKind::SaltPepper, 0.5, 1).unwrap(),
        ] {
            let out = corrupt(&img, &spec);
            assert!(out.data().iter().all(|v| (0.0..=1.0).contains(v)));
        }
    }

    #[test]
    fn batch_corrupts_lr_only_and_reproduces() {
        let data: Vec<f32> = (0..24 * 24 * 3).map(|i| (i % 83) as f32 / 82.0).collect();
        let img = ImageF::new(24, 24, data).unwrap();
        let pairs = sample_patches(&img, 4, 8, 2, &mut SeededRng::new(5)).unwrap();
        let spec = NoiseSpec::new(NoiseKind::Gaussian, 0.05, 9).unwrap();

        let a = corrupt_batch(&pairs, &spec);
        let b = corrupt_batch(&pairs, &spec);
        for ((pa, pb), orig) in a.iter().zip(&b).zip(&pairs) {
            assert_eq!(pa.hr, orig.hr, "HR must stay clean");
            assert_eq!(pa.lr, pb.lr, "same seed, same noise field");
            assert_ne!(pa.lr, orig.lr, "LR must actually be corrupted");
        }
        // Distinct patches get distinct sub-seeded noise.
        assert_ne!(a[0].lr, a[1].lr);

        let none = corrupt_batch(&pairs, &NoiseSpec::none());
        for (pn, orig) in none.iter().zip(&pairs) {
            assert_eq!(pn.lr, orig.lr);
        }
    }

    #[test]
    fn monotone_psnr_decay_in_sigma() {
        let data: Vec<f32> = (0..32 * 32 * 3).map(|i| (i % 61) as f32 / 60.0).collect();
        let img = ImageF::new(32, 32, data).unwrap();
        let mut last = f64::INFINITY;
        for sigma2 in [0.05, 0.1, 0.2] {
            let spec = NoiseSpec::new(NoiseKind::Gaussian, sigma2, 17).unwrap();
            let p = crate::imaging::psnr(&img, &corrupt(&img, &spec)).unwrap();
            assert!(p < last, "psnr must fall as variance grows: {p} vs {last}");
            last = p;
        }
    }
}
