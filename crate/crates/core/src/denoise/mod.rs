//! Interchangeable denoisers behind one interface: identity, median filter,
//! locally adaptive Wiener filter, and a convolutional denoising autoencoder.
//!
//! The classical filters act on images outside the gradient tape; the DAE's
//! parameters are frozen whenever it is embedded in an SR model, so no
//! backward path ever runs through a denoiser.

mod dae;
mod median;
mod wiener;

pub use dae::{train_dae, DaeModel, DaeTrainReport};
pub use median::median_filter;
pub use wiener::wiener_filter;

use std::path::PathBuf;
use std::str::FromStr;

use crate::error::{CoreError, Result};
use crate::imaging::ImageF;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DenoiserKind {
    Identity,
    Median,
    Wiener,
    Dae,
}

impl DenoiserKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            DenoiserKind::Identity => "identity",
            DenoiserKind::Median => "median",
            DenoiserKind::Wiener => "wiener",
            DenoiserKind::Dae => "dae",
        }
    }
}

impl FromStr for DenoiserKind {
    type Err = CoreError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "identity" => Ok(DenoiserKind::Identity),
            "median" => Ok(DenoiserKind::Median),
            "wiener" => Ok(DenoiserKind::Wiener),
            "dae" => Ok(DenoiserKind::Dae),
            other => Err(CoreError::invalid(
                "denoiser",
                format!("unknown denoiser kind '{other}'"),
            )),
        }
    }
}

/// Which denoiser to build and how: window side for the classical filters
/// (odd, >= 3; default 5) and a checkpoint path for the DAE.
#[derive(Clone, Debug, PartialEq)]
pub struct DenoiserSpec {
    kind: DenoiserKind,
    window: usize,
    dae_checkpoint: Option<PathBuf>,
}

impl DenoiserSpec {
    pub fn new(kind: DenoiserKind, window: usize) -> Result<DenoiserSpec> {
        if window % 2 == 0 || window < 3 {
            return Err(CoreError::invalid(
                "denoiser",
                format!("window must be odd and >= 3, got {window}"),
            ));
        }
        Ok(DenoiserSpec {
            kind,
            window,
            dae_checkpoint: None,
        })
    }

    pub fn identity() -> DenoiserSpec {
        DenoiserSpec {
            kind: DenoiserKind::Identity,
            window: 5,
            dae_checkpoint: None,
        }
    }

    pub fn with_dae_checkpoint(mut self, path: impl Into<PathBuf>) -> DenoiserSpec {
        self.dae_checkpoint = Some(path.into());
        self
    }

    pub fn kind(&self) -> DenoiserKind {
        self.kind
    }

    pub fn window(&self) -> usize {
        self.window
    }

    pub fn dae_checkpoint(&self) -> Option<&PathBuf> {
        self.dae_checkpoint.as_ref()
    }
}

/// A ready-to-apply denoiser.
pub enum Denoiser {
    Identity,
    Median { window: usize },
    Wiener { window: usize },
    Dae(DaeModel),
}

impl Denoiser {
    /// Build from a spec; `Dae` loads (and freezes) the referenced
    /// checkpoint.
    pub fn from_spec(spec: &DenoiserSpec) -> Result<Denoiser> {
        match spec.kind {
            DenoiserKind::Identity => Ok(Denoiser::Identity),
            DenoiserKind::Median => Ok(Denoiser::Median {
                window: spec.window,
            }),
            DenoiserKind::Wiener => Ok(Denoiser::Wiener {
                window: spec.window,
            }),
            DenoiserKind::Dae => {
                let path = spec.dae_checkpoint.as_ref().ok_or_else(|| {
                    CoreError::invalid(
                        "denoiser",
                        "dae denoiser requires a checkpoint path or trained weights",
                    )
                })?;
                let mut model = DaeModel::load(path)?;
                model.set_frozen(true);
                Ok(Denoiser::Dae(model))
            }
        }
    }

    /// Build a DAE denoiser from an already trained model, freezing it.
    pub fn from_dae(mut model: DaeModel) -> Denoiser {
        model.set_frozen(true);
        Denoiser::Dae(model)
    }

    pub fn kind(&self) -> DenoiserKind {
        match self {
            Denoiser::Identity => DenoiserKind::Identity,
            Denoiser::Median { .. } => DenoiserKind::Median,
            Denoiser::Wiener { .. } => DenoiserKind::Wiener,
            Denoiser::Dae(_) => DenoiserKind::Dae,
        }
    }

    /// Run the denoiser on an image. Identity returns the input unchanged.
    pub fn apply(&self, img: &ImageF) -> Result<ImageF> {
        match self {
            Denoiser::Identity => Ok(img.clone()),
            Denoiser::Median { window } => median_filter(img, *window),
            Denoiser::Wiener { window } => wiener_filter(img, *window),
            Denoiser::Dae(model) => model.forward_image(img),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spec_rejects_even_or_tiny_windows() {
        assert!(DenoiserSpec::new(DenoiserKind::Median, 4).is_err());
        assert!(DenoiserSpec::new(DenoiserKind::Median, 1).is_err());
        assert!(DenoiserSpec::new(DenoiserKind::Median, 5).is_ok());
    }

    #[test]
    fn identity_returns_input() {
        let img = ImageF::constant(4, 4, 0.3).unwrap();
        let d = Denoiser::from_spec(&DenoiserSpec::identity()).unwrap();
        assert_eq!(d.apply(&img).unwrap(), img);
    }

    #[test]
    fn median_spec_dispatches_to_median_filter() {
        let mut data = vec![0.2f32; 5 * 5 * 3];
        data[36] = 1.0;
        let img = ImageF::new(5, 5, data).unwrap();
        let d = Denoiser::from_spec(&DenoiserSpec::new(DenoiserKind::Median, 5).unwrap()).unwrap();
        assert_eq!(d.apply(&img).unwrap(), median_filter(&img, 5).unwrap());
    }

    #[test]
    fn dae_without_checkpoint_is_error() {
        let spec = DenoiserSpec::new(DenoiserKind::Dae, 5).unwrap();
        assert!(Denoiser::from_spec(&spec).is_err());
    }
}
