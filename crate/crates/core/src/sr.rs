//! WDSR-style super-resolution models and their two denoising composites.
//!
//! The network is two paths summed at the output. Main path: 3x3 head conv
//! into `F` channels, `B` residual blocks (3x3 conv widening to `e*F`, ReLU,
//! 3x3 conv back to `F`, identity skip), 3x3 tail conv into `3*s^2` channels,
//! pixel shuffle. Skip path: one 5x5 conv into `3*s^2` channels, pixel
//! shuffle. Every convolution is weight-normalized. A per-channel mean is
//! subtracted at the input and added back at the output.
//!
//! The three variants differ only in which image feeds which path:
//! baseline feeds the input to both, pre-net feeds the denoised image to
//! both, in-net feeds the noisy image to the main path and the denoised
//! image to the skip path. All variants share one forward implementation,
//! so with an identity denoiser they are bit-identical by construction.
//! Denoisers run at image level, outside the gradient tape.

use std::path::Path;
use std::str::FromStr;

use crate::checkpoint::Checkpoint;
use crate::denoise::{DaeModel, Denoiser, DenoiserKind, DenoiserSpec};
use crate::error::{CoreError, Result};
use crate::imaging::{images_to_batch, tensor_to_image, ImageF};
use crate::rng::SeededRng;
use crate::tensor::{
    add, offset_channels, pixel_shuffle, relu, ConvWn, Parameter, Tensor,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SrVariant {
    Baseline,
    PreNet,
    InNet,
}

impl SrVariant {
    pub fn as_str(&self) -> &'static str {
        match self {
            SrVariant::Baseline => "baseline",
            SrVariant::PreNet => "pre-net",
            SrVariant::InNet => "in-net",
        }
    }
}

impl FromStr for SrVariant {
    type Err = CoreError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "baseline" => Ok(SrVariant::Baseline),
            "pre-net" | "pre_net" => Ok(SrVariant::PreNet),
            "in-net" | "in_net" => Ok(SrVariant::InNet),
            other => Err(CoreError::invalid(
                "sr",
                format!("unknown variant '{other}'"),
            )),
        }
    }
}

/// Architecture and composition choices for one model.
#[derive(Clone, Debug, PartialEq)]
pub struct SrConfig {
    pub scale: usize,
    pub blocks: usize,
    pub filters: usize,
    pub expansion: usize,
    pub variant: SrVariant,
    pub denoiser: DenoiserSpec,
    pub rgb_mean: [f32; 3],
}

impl SrConfig {
    pub fn new(
        scale: usize,
        blocks: usize,
        filters: usize,
        expansion: usize,
        variant: SrVariant,
        denoiser: DenoiserSpec,
        rgb_mean: [f32; 3],
    ) -> Result<SrConfig> {
        if scale == 0 || blocks == 0 || filters == 0 || expansion == 0 {
            return Err(CoreError::invalid(
                "sr",
                format!(
                    "scale ({scale}), blocks ({blocks}), filters ({filters}) and expansion ({expansion}) must all be >= 1"
                ),
            ));
        }
        // The baseline has no denoiser slot; force identity so that config
        // equality and checkpoints stay canonical.
        let denoiser = if variant == SrVariant::Baseline {
            DenoiserSpec::identity()
        } else {
            denoiser
        };
        Ok(SrConfig {
            scale,
            blocks,
            filters,
            expansion,
            variant,
            denoiser,
            rgb_mean,
        })
    }

    /// Total parameter element count implied by the layer list.
    pub fn param_elements(&self) -> usize {
        let (f, e, s) = (self.filters, self.expansion, self.scale);
        let conv = |cout: usize, cin: usize, k: usize| cout * cin * k * k + 2 * cout;
        let head = conv(f, 3, 3);
        let block = conv(e * f, f, 3) + conv(f, e * f, 3);
        let tail = conv(3 * s * s, f, 3);
        let skip = conv(3 * s * s, 3, 5);
        head + self.blocks * block + tail + skip
    }

    /// Stable label used in run artifacts: "baseline", "pre-net+median", ...
    pub fn label(&self) -> String {
        match self.variant {
            SrVariant::Baseline => "baseline".to_string(),
            _ => format!("{}+{}", self.variant.as_str(), self.denoiser.kind().as_str()),
        }
    }
}

struct ResBlock {
    conv1: ConvWn,
    conv2: ConvWn,
}

pub struct SrModel {
    config: SrConfig,
    head: ConvWn,
    blocks: Vec<ResBlock>,
    tail: ConvWn,
    skip: ConvWn,
    denoiser: Denoiser,
}

impl SrModel {
    /// He-initialized model; weight-norm gains start at the per-channel norm
    /// of the direction, so resolved kernels equal their init draws.
    pub fn init(config: SrConfig, seed: u64) -> Result<SrModel> {
        let denoiser = Denoiser::from_spec(&config.denoiser)?;
        Self::init_with_denoiser(config, seed, denoiser)
    }

    /// As [`SrModel::init`] but with an already built denoiser (e.g. a DAE
    /// trained in-process rather than loaded from disk).
    pub fn init_with_denoiser(
        config: SrConfig,
        seed: u64,
        denoiser: Denoiser,
    ) -> Result<SrModel> {
        if denoiser.kind() != config.denoiser.kind() {
            return Err(CoreError::invalid(
                "sr",
                format!(
                    "denoiser kind {} does not match config {}",
                    denoiser.kind().as_str(),
                    config.denoiser.kind().as_str()
                ),
            ));
        }
        let mut rng = SeededRng::new(seed);
        let (f, e, s) = (config.filters, config.expansion, config.scale);
        let head = ConvWn::init("head", f, 3, 3, 1, &mut rng)?;
        let mut blocks = Vec::with_capacity(config.blocks);
        for i in 0..config.blocks {
            blocks.push(ResBlock {
                conv1: ConvWn::init(&format!("body.block{i}.conv1"), e * f, f, 3, 1, &mut rng)?,
                conv2: ConvWn::init(&format!("body.block{i}.conv2"), f, e * f, 3, 1, &mut rng)?,
            });
        }
        let tail = ConvWn::init("tail", 3 * s * s, f, 3, 1, &mut rng)?;
        let skip = ConvWn::init("skip", 3 * s * s, 3, 5, 2, &mut rng)?;
        Ok(SrModel {
            config,
            head,
            blocks,
            tail,
            skip,
            denoiser,
        })
    }

    pub fn config(&self) -> &SrConfig {
        &self.config
    }

    pub fn denoiser(&self) -> &Denoiser {
        &self.denoiser
    }

    /// The shared two-path forward. `main_in` and `skip_in` are `[N, 3, H, W]`
    /// batches; output is `[N, 3, s*H, s*W]`, unclamped.
    pub fn forward_tensors(&self, main_in: &Tensor, skip_in: &Tensor) -> Result<Tensor> {
        for (role, t) in [("main", main_in), ("skip", skip_in)] {
            let s = t.shape();
            if s.len() != 4 || s[1] != 3 {
                return Err(CoreError::shape(
                    "sr_forward",
                    format!("{role} input must be [N, 3, H, W], got {s:?}"),
                ));
            }
        }
        let m = self.config.rgb_mean;
        let neg = [-m[0], -m[1], -m[2]];
        let xm = offset_channels(main_in, &neg)?;
        let xs = offset_channels(skip_in, &neg)?;

        let mut h = self.head.forward(&xm)?;
        for block in &self.blocks {
            let widened = relu(&block.conv1.forward(&h)?);
            let narrowed = block.conv2.forward(&widened)?;
            h = add(&narrowed, &h)?;
        }
        let main = pixel_shuffle(&self.tail.forward(&h)?, self.config.scale)?;
        let skip = pixel_shuffle(&self.skip.forward(&xs)?, self.config.scale)?;
        let out = add(&main, &skip)?;
        let out_mean = {
            // The output has 3 channels again after the pixel shuffle.
            offset_channels(&out, &m)?
        };
        Ok(out_mean)
    }

    /// Build (main, skip) input batches for this variant from noisy images,
    /// applying the denoiser at image level where the variant calls for it.
    pub fn prepare_batch(&self, noisy: &[ImageF]) -> Result<(Tensor, Tensor)> {
        match self.config.variant {
            SrVariant::Baseline => {
                let t = images_to_batch(noisy)?;
                Ok((t.clone(), t))
            }
            SrVariant::PreNet => {
                let denoised: Vec<ImageF> = noisy
                    .iter()
                    .map(|im| self.denoiser.apply(im))
                    .collect::<Result<_>>()?;
                let t = images_to_batch(&denoised)?;
                Ok((t.clone(), t))
            }
            SrVariant::InNet => {
                let denoised: Vec<ImageF> = noisy
                    .iter()
                    .map(|im| self.denoiser.apply(im))
                    .collect::<Result<_>>()?;
                Ok((images_to_batch(noisy)?, images_to_batch(&denoised)?))
            }
        }
    }

    /// Super-resolve one image, clamping the result into [0, 1].
    pub fn super_resolve(&self, img: &ImageF) -> Result<ImageF> {
        let (main, skip) = self.prepare_batch(std::slice::from_ref(img))?;
        let out = self.forward_tensors(&main, &skip)?;
        tensor_to_image(&out)
    }

    /// Baseline-path forward on a raw tensor, ignoring the variant's
    /// denoiser. Used by tests and the clean pretraining phase.
    pub fn forward_baseline(&self, x: &Tensor) -> Result<Tensor> {
        self.forward_tensors(x, x)
    }

    /// Trainable SR parameters, in a fixed order. The embedded denoiser is
    /// not included; a DAE denoiser is frozen and trains separately.
    pub fn params(&self) -> Vec<&Parameter> {
        let mut out = self.head.params();
        for b in &self.blocks {
            out.extend(b.conv1.params());
            out.extend(b.conv2.params());
        }
        out.extend(self.tail.params());
        out.extend(self.skip.params());
        out
    }

    pub fn params_mut(&mut self) -> Vec<&mut Parameter> {
        let mut out = self.head.params_mut();
        for b in &mut self.blocks {
            out.extend(b.conv1.params_mut());
            out.extend(b.conv2.params_mut());
        }
        out.extend(self.tail.params_mut());
        out.extend(self.skip.params_mut());
        out
    }

    pub fn param_elements(&self) -> usize {
        self.params().iter().map(|p| p.value().len()).sum()
    }

    /// Copy parameter values from another model with the same architecture.
    pub fn load_params_from(&mut self, other: &SrModel) -> Result<()> {
        let src: Vec<(String, Vec<f32>)> = other
            .params()
            .iter()
            .map(|p| (p.name().to_string(), p.value().data().to_vec()))
            .collect();
        for (p, (name, data)) in self.params_mut().into_iter().zip(src) {
            if p.name() != name {
                return Err(CoreError::FingerprintMismatch(format!(
                    "parameter order mismatch: '{}' vs '{}'",
                    p.name(),
                    name
                )));
            }
            p.load_data(data)?;
        }
        Ok(())
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut ckpt = Checkpoint::new();
        ckpt.set_meta("format", "sr-model");
        ckpt.set_meta("scale", self.config.scale.to_string());
        ckpt.set_meta("blocks", self.config.blocks.to_string());
        ckpt.set_meta("filters", self.config.filters.to_string());
        ckpt.set_meta("expansion", self.config.expansion.to_string());
        ckpt.set_meta("variant", self.config.variant.as_str());
        ckpt.set_meta("denoiser.kind", self.config.denoiser.kind().as_str());
        ckpt.set_meta("denoiser.window", self.config.denoiser.window().to_string());
        ckpt.set_meta(
            "rgb_mean",
            format!(
                "{} {} {}",
                self.config.rgb_mean[0], self.config.rgb_mean[1], self.config.rgb_mean[2]
            ),
        );
        for p in self.params() {
            ckpt.insert(p.name(), p.value().shape().to_vec(), p.value().data().to_vec());
        }
        // A DAE denoiser embeds its weights so the checkpoint stands alone.
        if let Denoiser::Dae(dae) = &self.denoiser {
            for p in dae.params() {
                ckpt.insert(
                    format!("denoiser.dae.{}", p.name()),
                    p.value().shape().to_vec(),
                    p.value().data().to_vec(),
                );
            }
        }
        ckpt
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.to_checkpoint().write_to(path)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<SrModel> {
        let path = path.as_ref();
        let origin = path.display().to_string();
        let ckpt = Checkpoint::read_from(path)?;
        Self::from_checkpoint(&ckpt, &origin)
    }

    pub fn from_checkpoint(ckpt: &Checkpoint, origin: &str) -> Result<SrModel> {
        if ckpt.require_meta("format", origin)? != "sr-model" {
            return Err(CoreError::FingerprintMismatch(format!(
                "'{origin}' is not an sr-model checkpoint"
            )));
        }
        let num = |key: &str| -> Result<usize> {
            ckpt.require_meta(key, origin)?
                .parse::<usize>()
                .map_err(|_| CoreError::Checkpoint {
                    path: origin.to_string(),
                    detail: format!("meta '{key}' is not an integer"),
                })
        };
        let variant = SrVariant::from_str(ckpt.require_meta("variant", origin)?)?;
        let den_kind = DenoiserKind::from_str(ckpt.require_meta("denoiser.kind", origin)?)?;
        let den_window = num("denoiser.window")?;
        let rgb_mean = {
            let raw = ckpt.require_meta("rgb_mean", origin)?;
            let parts: Vec<f32> = raw
                .split_whitespace()
                .map(|s| s.parse::<f32>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| CoreError::Checkpoint {
                    path: origin.to_string(),
                    detail: format!("bad rgb_mean '{raw}'"),
                })?;
            if parts.len() != 3 {
                return Err(CoreError::Checkpoint {
                    path: origin.to_string(),
                    detail: format!("rgb_mean needs 3 values, got {}", parts.len()),
                });
            }
            [parts[0], parts[1], parts[2]]
        };
        let config = SrConfig::new(
            num("scale")?,
            num("blocks")?,
            num("filters")?,
            num("expansion")?,
            variant,
            DenoiserSpec::new(den_kind, den_window)?,
            rgb_mean,
        )?;

        let denoiser = if den_kind == DenoiserKind::Dae {
            // Rebuild the embedded DAE from its prefixed entries.
            let mut sub = Checkpoint::new();
            sub.set_meta("format", "dae-model");
            sub.set_meta("fingerprint", DaeModel::fingerprint());
            for (name, entry) in &ckpt.entries {
                if let Some(stripped) = name.strip_prefix("denoiser.dae.") {
                    sub.insert(stripped, entry.shape.clone(), entry.data.clone());
                }
            }
            Denoiser::from_dae(DaeModel::from_checkpoint(&sub, origin)?)
        } else {
            Denoiser::from_spec(&config.denoiser)?
        };

        let mut model = SrModel::init_with_denoiser(config, 0, denoiser)?;
        for p in model.params_mut() {
            let entry = ckpt.get(p.name()).ok_or_else(|| {
                CoreError::FingerprintMismatch(format!(
                    "'{origin}' misses parameter '{}'",
                    p.name()
                ))
            })?;
            if entry.shape != p.value().shape() {
                return Err(CoreError::FingerprintMismatch(format!(
                    "'{origin}' parameter '{}' has shape {:?}, expected {:?}",
                    p.name(),
                    entry.shape,
                    p.value().shape()
                )));
            }
            p.load_data(entry.data.clone())?;
        }
        Ok(model)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imaging::image_to_tensor;

    fn tiny_config(variant: SrVariant, den: DenoiserSpec) -> SrConfig {
        SrConfig::new(2, 2, 8, 4, variant, den, [0.4, 0.45, 0.5]).unwrap()
    }

    fn rand_image(seed: u64, h: usize, w: usize) -> ImageF {
        let mut rng = SeededRng::new(seed);
        let data = (0..h * w * 3).map(|_| rng.uniform_f32()).collect();
        ImageF::new(h, w, data).unwrap()
    }

    #[test]
    fn config_validation_and_baseline_denoiser_forcing() {
        assert!(SrConfig::new(
            2,
            0,
            8,
            4,
            SrVariant::Baseline,
            DenoiserSpec::identity(),
            [0.0; 3]
        )
        .is_err());
        let c = tiny_config(
            SrVariant::Baseline,
            DenoiserSpec::new(DenoiserKind::Median, 5).unwrap(),
        );
        assert_eq!(c.denoiser.kind(), DenoiserKind::Identity);
    }

    #[test]
    fn output_shape_is_scaled() {
        let model = SrModel::init(tiny_config(SrVariant::Baseline, DenoiserSpec::identity()), 1)
            .unwrap();
        let img = rand_image(2, 10, 12);
        let out = model.super_resolve(&img).unwrap();
        assert_eq!((out.height(), out.width()), (20, 24));
    }

    #[test]
    fn param_count_matches_hand_tally() {
        // B=2, F=8, e=4, s=2, tallied layer by layer:
        //   head  8*3*9 + 16       = 232
        //   block (32*8*9 + 64) + (8*32*9 + 16) = 4688, twice = 9376
        //   tail  12*8*9 + 24      = 888
        //   skip  12*3*25 + 24     = 924
        let config = tiny_config(SrVariant::Baseline, DenoiserSpec::identity());
        assert_eq!(config.param_elements(), 11_420);
        let model = SrModel::init(config, 3).unwrap();
        assert_eq!(model.param_elements(), 11_420);
    }

    #[test]
    fn zero_weights_output_rgb_mean() {
        let mut model =
            SrModel::init(tiny_config(SrVariant::Baseline, DenoiserSpec::identity()), 4).unwrap();
        for p in model.params_mut() {
            let data = if p.name().ends_with(".v") {
                vec![1.0; p.value().len()]
            } else {
                vec![0.0; p.value().len()]
            };
            p.load_data(data).unwrap();
        }
        let img = rand_image(5, 8, 8);
        let out = model.super_resolve(&img).unwrap();
        let mean = model.config().rgb_mean;
        for y in 0..out.height() {
            for x in 0..out.width() {
                for c in 0..3 {
                    assert!((out.get(y, x, c) - mean[c]).abs() < 1e-6);
                }
            }
        }
    }

    #[test]
    fn identity_denoiser_variants_are_bit_identical() {
        let seed = 9;
        let base = SrModel::init(tiny_config(SrVariant::Baseline, DenoiserSpec::identity()), seed)
            .unwrap();
        let pre =
            SrModel::init(tiny_config(SrVariant::PreNet, DenoiserSpec::identity()), seed).unwrap();
        let innet =
            SrModel::init(tiny_config(SrVariant::InNet, DenoiserSpec::identity()), seed).unwrap();
        for trial in 0..3 {
            let img = rand_image(100 + trial, 8, 8);
            let b = base.super_resolve(&img).unwrap();
            assert_eq!(b, pre.super_resolve(&img).unwrap());
            assert_eq!(b, innet.super_resolve(&img).unwrap());
        }
    }

    #[test]
    fn trainable_param_names_agree_across_variants() {
        let seed = 10;
        let names = |m: &SrModel| -> Vec<String> {
            m.params().iter().map(|p| p.name().to_string()).collect()
        };
        let base = SrModel::init(tiny_config(SrVariant::Baseline, DenoiserSpec::identity()), seed)
            .unwrap();
        let pre = SrModel::init(
            tiny_config(
                SrVariant::PreNet,
                DenoiserSpec::new(DenoiserKind::Median, 5).unwrap(),
            ),
            seed,
        )
        .unwrap();
        let innet = SrModel::init(
            tiny_config(
                SrVariant::InNet,
                DenoiserSpec::new(DenoiserKind::Wiener, 5).unwrap(),
            ),
            seed,
        )
        .unwrap();
        assert_eq!(names(&base), names(&pre));
        assert_eq!(names(&base), names(&innet));
    }

    #[test]
    fn zeroing_skip_path_changes_output() {
        let config = tiny_config(SrVariant::Baseline, DenoiserSpec::identity());
        let model = SrModel::init(config.clone(), 11).unwrap();
        let mut without_skip = SrModel::init(config, 11).unwrap();
        for p in without_skip.params_mut() {
            if p.name().starts_with("skip.") && p.name().ends_with(".g") {
                p.load_data(vec![0.0; p.value().len()]).unwrap();
            }
        }
        let img = rand_image(12, 8, 8);
        assert_ne!(
            model.super_resolve(&img).unwrap(),
            without_skip.super_resolve(&img).unwrap(),
            "the skip path must contribute to the output"
        );
    }

    #[test]
    fn in_net_with_zeroed_main_is_pure_skip() {
        let config = tiny_config(
            SrVariant::InNet,
            DenoiserSpec::new(DenoiserKind::Median, 3).unwrap(),
        );
        let mut model = SrModel::init(config, 13).unwrap();
        // Zero the main path by zeroing the tail gains and bias.
        for p in model.params_mut() {
            if p.name().starts_with("tail.") && !p.name().ends_with(".v") {
                p.load_data(vec![0.0; p.value().len()]).unwrap();
            }
        }
        let img = rand_image(14, 8, 8);
        let full = model.super_resolve(&img).unwrap();

        // Hand-evaluate the skip path on the denoised image.
        let denoised = model.denoiser().apply(&img).unwrap();
        let mean = model.config().rgb_mean;
        let x = offset_channels(&image_to_tensor(&denoised), &[-mean[0], -mean[1], -mean[2]])
            .unwrap();
        let skip_only = pixel_shuffle(&model.skip.forward(&x).unwrap(), 2).unwrap();
        let expect = tensor_to_image(&offset_channels(&skip_only, &mean).unwrap()).unwrap();
        assert_eq!(full, expect);
    }

    #[test]
    fn save_load_round_trip_forward_equal() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("sr.ckpt");
        let model = SrModel::init(
            tiny_config(
                SrVariant::PreNet,
                DenoiserSpec::new(DenoiserKind::Median, 5).unwrap(),
            ),
            15,
        )
        .unwrap();
        model.save(&path).unwrap();
        let loaded = SrModel::load(&path).unwrap();
        assert_eq!(loaded.config(), model.config());
        let img = rand_image(16, 8, 8);
        assert_eq!(
            model.super_resolve(&img).unwrap(),
            loaded.super_resolve(&img).unwrap()
        );
    }

    #[test]
    fn same_seed_same_init() {
        let config = tiny_config(SrVariant::Baseline, DenoiserSpec::identity());
        let a = SrModel::init(config.clone(), 21).unwrap();
        let b = SrModel::init(config, 21).unwrap();
        for (pa, pb) in a.params().iter().zip(b.params()) {
            assert_eq!(pa.value().data(), pb.value().data());
        }
    }

    #[test]
    fn load_rejects_foreign_checkpoint() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("foreign.ckpt");
        let mut ckpt = Checkpoint::new();
        ckpt.set_meta("format", "dae-model");
        ckpt.write_to(&path).unwrap();
        assert!(matches!(
            SrModel::load(&path),
            Err(CoreError::FingerprintMismatch(_))
        ));
    }
}
