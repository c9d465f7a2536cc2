//! Convolutional denoising autoencoder.
//!
//! Encoder: three weight-normalized 5x5 convolutions with 64, 128 and 256
//! output channels, each followed by ReLU and 2x2 max-pooling. Decoder:
//! the mirror image, three stages of nearest-neighbor upsampling plus a 5x5
//! convolution (256 -> 128 -> 64 -> 3) with ReLU between stages. Upsample +
//! conv is used instead of transposed convolution to avoid checkerboard
//! artifacts.
//!
//! Tensor inputs need spatial dims divisible by 8 (three poolings);
//! [`DaeModel::forward_image`] reflect-pads other sizes up and crops back.

use std::path::Path;

use super::median::reflect;
use crate::checkpoint::Checkpoint;
use crate::error::{CoreError, Result};
use crate::imaging::{images_to_batch, tensor_to_image, ImageF};
use crate::rng::SeededRng;
use crate::tensor::{backward, max_pool2, mse_loss, nearest_upsample2, relu, AdamState, ConvWn, Parameter, Tensor};

const KERNEL: usize = 5;
const PAD: usize = 2;
/// (name, cout, cin) for every layer, encoder then decoder.
const LAYOUT: [(&str, usize, usize); 6] = [
    ("enc1", 64, 3),
    ("enc2", 128, 64),
    ("enc3", 256, 128),
    ("dec1", 128, 256),
    ("dec2", 64, 128),
    ("dec3", 3, 64),
];

pub struct DaeModel {
    layers: Vec<ConvWn>,
}

impl DaeModel {
    pub fn init(seed: u64) -> Result<DaeModel> {
        let mut rng = SeededRng::new(seed);
        let layers = LAYOUT
            .iter()
            .map(|&(name, cout, cin)| ConvWn::init(name, cout, cin, KERNEL, PAD, &mut rng))
            .collect::<Result<Vec<_>>>()?;
        Ok(DaeModel { layers })
    }

    /// Encoder-decoder pass over `[N, 3, H, W]` with H, W divisible by 8.
    /// Output is unclamped; image-level callers clamp.
    pub fn forward_tensor(&self, x: &Tensor) -> Result<Tensor> {
        let s = x.shape();
        if s.len() != 4 || s[1] != 3 || s[2] % 8 != 0 || s[3] % 8 != 0 {
            return Err(CoreError::shape(
                "dae_forward",
                format!("expected [N, 3, 8k, 8k], got {s:?}"),
            ));
        }
        let mut h = x.clone();
        for enc in &self.layers[..3] {
            h = max_pool2(&relu(&enc.forward(&h)?))?;
        }
        h = relu(&self.layers[3].forward(&nearest_upsample2(&h)?)?);
        h = relu(&self.layers[4].forward(&nearest_upsample2(&h)?)?);
        self.layers[5].forward(&nearest_upsample2(&h)?)
    }

    /// Denoise an image: reflect-pad to the next multiple of 8 if needed,
    /// run the network, crop back and clamp into [0, 1].
    pub fn forward_image(&self, img: &ImageF) -> Result<ImageF> {
        let (h, w) = (img.height(), img.width());
        let ph = h.div_ceil(8) * 8;
        let pw = w.div_ceil(8) * 8;
        let padded = if ph == h && pw == w {
            img.clone()
        } else {
            let mut data = vec![0.0f32; ph * pw * 3];
            for y in 0..ph {
                let sy = reflect(y as isize, h);
                for x in 0..pw {
                    let sx = reflect(x as isize, w);
                    for c in 0..3 {
                        data[(y * pw + x) * 3 + c] = img.get(sy, sx, c);
                    }
                }
            }
            ImageF::new(ph, pw, data)?
        };
        let out = self.forward_tensor(&images_to_batch(&[padded])?)?;
        let full = tensor_to_image(&out)?;
        if ph == h && pw == w {
            Ok(full)
        } else {
            full.crop(0, 0, h, w)
        }
    }

    pub fn params(&self) -> Vec<&Parameter> {
        self.layers.iter().flat_map(|l| l.params()).collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Parameter> {
        self.layers.iter_mut().flat_map(|l| l.params_mut()).collect()
    }

    pub fn set_frozen(&mut self, frozen: bool) {
        for l in &mut self.layers {
            l.set_frozen(frozen);
        }
    }

    pub fn param_elements(&self) -> usize {
        self.layers.iter().map(|l| l.param_elements()).sum()
    }

    /// Layer-shape fingerprint embedded in checkpoints and verified at load.
    pub(crate) fn fingerprint() -> String {
        LAYOUT
            .iter()
            .map(|&(name, cout, cin)| format!("{name}:{cout}x{cin}x{KERNEL}x{KERNEL}"))
            .collect::<Vec<_>>()
            .join(",")
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut ckpt = Checkpoint::new();
        ckpt.set_meta("format", "dae-model");
        ckpt.set_meta("fingerprint", Self::fingerprint());
        for p in self.params() {
            ckpt.insert(p.name(), p.value().shape().to_vec(), p.value().data().to_vec());
        }
        ckpt
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.to_checkpoint().write_to(path)
    }

    pub fn from_checkpoint(ckpt: &Checkpoint, origin: &str) -> Result<DaeModel> {
        if ckpt.require_meta("format", origin)? != "dae-model" {
            return Err(CoreError::FingerprintMismatch(format!(
                "'{origin}' is not a dae-model checkpoint"
            )));
        }
        if ckpt.require_meta("fingerprint", origin)? != Self::fingerprint() {
            return Err(CoreError::FingerprintMismatch(format!(
                "'{origin}' was written for a different architecture"
            )));
        }
        let mut model = DaeModel::init(0)?;
        for p in model.params_mut() {
            let entry = ckpt.get(p.name()).ok_or_else(|| {
                CoreError::FingerprintMismatch(format!("'{origin}' misses parameter '{}'", p.name()))
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

    pub fn load(path: impl AsRef<Path>) -> Result<DaeModel> {
        let path = path.as_ref();
        let ckpt = Checkpoint::read_from(path)?;
        DaeModel::from_checkpoint(&ckpt, &path.display().to_string())
    }
}

/// Per-epoch mean training loss.
pub struct DaeTrainReport {
    pub epoch_losses: Vec<f64>,
}

/// Minimize MSE(dae(noisy), clean) with Adam over the given (noisy, clean)
/// pairs. Pairs are consumed in order, `batch_size` at a time; one epoch is
/// one pass over the data. Aborts on a non-finite loss.
pub fn train_dae(
    model: &mut DaeModel,
    data: &[(ImageF, ImageF)],
    epochs: usize,
    batch_size: usize,
    lr: f32,
) -> Result<DaeTrainReport> {
    if data.is_empty() {
        return Err(CoreError::invalid("train_dae", "empty training data"));
    }
    if batch_size == 0 {
        return Err(CoreError::invalid("train_dae", "batch_size must be >= 1"));
    }
    let mut adam = AdamState::new(lr);
    let mut epoch_losses = Vec::with_capacity(epochs);
    for epoch in 0..epochs {
        let mut acc = 0.0f64;
        let mut batches = 0usize;
        for chunk in data.chunks(batch_size) {
            let noisy: Vec<ImageF> = chunk.iter().map(|(n, _)| n.clone()).collect();
            let clean: Vec<ImageF> = chunk.iter().map(|(_, c)| c.clone()).collect();
            let x = images_to_batch(&noisy)?;
            let target = images_to_batch(&clean)?;
            let pred = model.forward_tensor(&x)?;
            let loss = mse_loss(&pred, &target)?;
            let value = loss.item()?;
            if !value.is_finite() {
                return Err(CoreError::NonFinite {
                    op: "train_dae",
                    detail: format!("loss became {value} at epoch {epoch}, batch {batches}"),
                });
            }
            backward(&loss)?;
            adam.step(&mut model.params_mut())?;
            acc += value as f64;
            batches += 1;
        }
        epoch_losses.push(acc / batches as f64);
    }
    Ok(DaeTrainReport { epoch_losses })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parameter_count_matches_architecture_tally() {
        let model = DaeModel::init(1).unwrap();
        let expected: usize = LAYOUT
            .iter()
            .map(|&(_, cout, cin)| cout * cin * KERNEL * KERNEL + 2 * cout)
            .sum();
        assert_eq!(expected, 2_058_886);
        assert_eq!(model.param_elements(), expected);
    }

    #[test]
    fn output_shape_equals_input_shape() {
        let model = DaeModel::init(2).unwrap();
        for (h, w) in [(48, 48), (50, 50), (24, 40)] {
            let img = ImageF::constant(h, w, 0.5).unwrap();
            let out = model.forward_image(&img).unwrap();
            assert_eq!((out.height(), out.width()), (h, w));
        }
    }

    #[test]
    fn zero_weight_model_outputs_zero() {
        let mut model = DaeModel::init(3).unwrap();
        for p in model.params_mut() {
            // Directions keep tiny mass so weight-norm stays defined; with
            // g = 0 every resolved kernel and bias is exactly zero.
            let data = if p.name().ends_with(".v") {
                vec![1.0; p.value().len()]
            } else {
                vec![0.0; p.value().len()]
            };
            p.load_data(data).unwrap();
        }
        let img = ImageF::constant(16, 16, 0.7).unwrap();
        let out = model.forward_image(&img).unwrap();
        assert!(out.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn save_load_round_trips_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("dae.ckpt");
        let model = DaeModel::init(4).unwrap();
        model.save(&path).unwrap();
        let loaded = DaeModel::load(&path).unwrap();
        for (a, b) in model.params().iter().zip(loaded.params()) {
            assert_eq!(a.value().data(), b.value().data());
        }
        let img = ImageF::constant(8, 8, 0.4).unwrap();
        assert_eq!(
            model.forward_image(&img).unwrap(),
            loaded.forward_image(&img).unwrap()
        );
    }

    #[test]
    fn wrong_checkpoint_is_fingerprint_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("other.ckpt");
        let mut ckpt = Checkpoint::new();
        ckpt.set_meta("format", "sr-model");
        ckpt.write_to(&path).unwrap();
        assert!(matches!(
            DaeModel::load(&path),
            Err(CoreError::FingerprintMismatch(_))
        ));
    }

    #[test]
    fn frozen_dae_exposes_no_trainable_params() {
        let mut model = DaeModel::init(5).unwrap();
        model.set_frozen(true);
        assert!(model.params().iter().all(|p| p.frozen()));
        assert!(model.params().iter().all(|p| !p.value().requires_grad()));
    }
}
