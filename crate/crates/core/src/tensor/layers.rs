//! Weight-normalized convolution layer, the building block of both the SR
//! models and the denoising autoencoder.

use super::ops::{conv2d, weight_norm_resolve};
use super::{Parameter, Tensor};
use crate::error::Result;
use crate::rng::SeededRng;

/// Convolution parameterized as direction `v`, per-channel gain `g` and bias
/// `b`. The effective kernel `g * v / ||v||` is resolved on the tape each
/// forward pass, so gradients reach `v` and `g`.
pub struct ConvWn {
    pub v: Parameter,
    pub g: Parameter,
    pub b: Parameter,
    pub padding: usize,
}

impl ConvWn {
    /// He fan-in init for `v`; `g` starts at the per-channel norm of `v`
    /// (so the resolved kernel equals `v` initially) and `b` at zero.
    pub fn init(
        prefix: &str,
        cout: usize,
        cin: usize,
        k: usize,
        padding: usize,
        rng: &mut SeededRng,
    ) -> Result<ConvWn> {
        let fan_in = cin * k * k;
        let std = (2.0 / fan_in as f64).sqrt();
        let v_data: Vec<f32> = (0..cout * fan_in)
            .map(|_| (rng.gaussian() * std) as f32)
            .collect();
        let g_data: Vec<f32> = (0..cout)
            .map(|c| {
                let s: f64 = v_data[c * fan_in..][..fan_in]
                    .iter()
                    .map(|&x| x as f64 * x as f64)
                    .sum();
                s.sqrt() as f32
            })
            .collect();
        Ok(ConvWn {
            v: Parameter::new(format!("{prefix}.v"), v_data, &[cout, cin, k, k])?,
            g: Parameter::new(format!("{prefix}.g"), g_data, &[cout])?,
            b: Parameter::new(format!("{prefix}.b"), vec![0.0; cout], &[cout])?,
            padding,
        })
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let w = weight_norm_resolve(self.v.value(), self.g.value())?;
        conv2d(x, &w, self.b.value(), self.padding)
    }

    pub fn params(&self) -> Vec<&Parameter> {
        vec![&self.v, &self.g, &self.b]
    }

    pub fn params_mut(&mut self) -> Vec<&mut Parameter> {
        vec![&mut self.v, &mut self.g, &mut self.b]
    }

    pub fn set_frozen(&mut self, frozen: bool) {
        self.v.set_frozen(frozen);
        self.g.set_frozen(frozen);
        self.b.set_frozen(frozen);
    }

    pub fn param_elements(&self) -> usize {
        self.v.value().len() + self.g.value().len() + self.b.value().len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::ops::weight_norm_resolve;

    #[test]
    fn init_resolves_to_v() {
        let mut rng = SeededRng::new(11);
        let layer = ConvWn::init("l", 4, 3, 3, 1, &mut rng).unwrap();
        let w = weight_norm_resolve(layer.v.value(), layer.g.value()).unwrap();
        for (a, b) in w.data().iter().zip(layer.v.value().data()) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn init_is_seed_deterministic() {
        let a = ConvWn::init("l", 2, 2, 3, 1, &mut SeededRng::new(5)).unwrap();
        let b = ConvWn::init("l", 2, 2, 3, 1, &mut SeededRng::new(5)).unwrap();
        assert_eq!(a.v.value().data(), b.v.value().data());
        assert_eq!(a.g.value().data(), b.g.value().data());
    }

    #[test]
    fn forward_shape_is_same_with_matching_padding() {
        let mut rng = SeededRng::new(1);
        let layer = ConvWn::init("l", 5, 3, 3, 1, &mut rng).unwrap();
        let x = Tensor::zeros(&[2, 3, 6, 6]);
        let y = layer.forward(&x).unwrap();
        assert_eq!(y.shape(), &[2, 5, 6, 6]);
    }
}
