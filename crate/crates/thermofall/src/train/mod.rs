//! Loss configuration and the alternating adversarial training loop for the
//! seven model variants.

mod loss;
mod run;

pub use loss::{
    adv_loss_grad, diff_frames, diff_loss, diff_loss_grad, gan_loss, gan_loss_d_grads, mse_loss,
    mse_loss_grad, roi_mse_loss, roi_mse_loss_grad, union_masks, LOG_CLAMP,
};
pub use run::{
    eval_generator_loss, generator_loss_and_grads, train, Batch, GanModels, GeneratorGrads,
    GeneratorLossTerms, GeneratorOutputs, LossRow, TrainSample, WindowSet,
};

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// The seven trainable model variants.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Variant {
    Thermal3dcae,
    Flow3dcae,
    ThermalRoi3dcae,
    ThermalDiffRoi3dcae,
    FlowRoi3dcae,
    FusionRoi3dcae,
    FusionDiffRoi3dcae,
}

/// Which input channels a variant consumes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ChannelSet {
    Thermal,
    Flow,
    Fusion,
}

impl Variant {
    pub const ALL: [Variant; 7] = [
        Variant::Thermal3dcae,
        Variant::Flow3dcae,
        Variant::ThermalRoi3dcae,
        Variant::ThermalDiffRoi3dcae,
        Variant::FlowRoi3dcae,
        Variant::FusionRoi3dcae,
        Variant::FusionDiffRoi3dcae,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Thermal3dcae => "Thermal-3DCAE",
            Variant::Flow3dcae => "Flow-3DCAE",
            Variant::ThermalRoi3dcae => "Thermal-ROI-3DCAE",
            Variant::ThermalDiffRoi3dcae => "Thermal-Diff-ROI-3DCAE",
            Variant::FlowRoi3dcae => "Flow-ROI-3DCAE",
            Variant::FusionRoi3dcae => "Fusion-ROI-3DCAE",
            Variant::FusionDiffRoi3dcae => "Fusion-Diff-ROI-3DCAE",
        }
    }

    pub fn channels(self) -> ChannelSet {
        match self {
            Variant::Thermal3dcae | Variant::ThermalRoi3dcae | Variant::ThermalDiffRoi3dcae => {
                ChannelSet::Thermal
            }
            Variant::Flow3dcae | Variant::FlowRoi3dcae => ChannelSet::Flow,
            Variant::FusionRoi3dcae | Variant::FusionDiffRoi3dcae => ChannelSet::Fusion,
        }
    }

    pub fn uses_roi_loss(self) -> bool {
        !matches!(self, Variant::Thermal3dcae | Variant::Flow3dcae)
    }

    pub fn uses_diff_loss(self) -> bool {
        matches!(
            self,
            Variant::ThermalDiffRoi3dcae | Variant::FusionDiffRoi3dcae
        )
    }
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Variant {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| {
                Error::Config(format!(
                    "unknown variant `{s}`; expected one of: {}",
                    Variant::ALL.map(|v| v.name()).join(", ")
                ))
            })
    }
}

impl Serialize for Variant {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.name())
    }
}

impl<'de> Deserialize<'de> for Variant {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Weighted-loss constants per variant. Only the weights the variant's loss
/// actually uses may be set.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct LossConfig {
    pub variant: Variant,
    /// Reconstruction weight of the single-channel total loss.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    /// ROI term weight under the difference constraint.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda_s: Option<f64>,
    /// Difference term weight under the difference constraint.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda_d: Option<f64>,
    /// Thermal ROI weight of the fusion loss.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda_t: Option<f64>,
    /// Flow ROI weight of the fusion losses.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda_f: Option<f64>,
    /// Thermal ROI weight of the fusion loss with difference constraint.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda_t_s: Option<f64>,
    /// Thermal difference weight of the fusion loss with difference constraint.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda_t_d: Option<f64>,
}

impl LossConfig {
    /// The best-performing constants: 1 for the difference-constraint
    /// variants, 0.1 for the rest.
    pub fn defaults(variant: Variant) -> LossConfig {
        let mut cfg = LossConfig {
            variant,
            lambda: None,
            lambda_s: None,
            lambda_d: None,
            lambda_t: None,
            lambda_f: None,
            lambda_t_s: None,
            lambda_t_d: None,
        };
        match variant {
            Variant::Thermal3dcae | Variant::Flow3dcae => cfg.lambda = Some(0.1),
            Variant::ThermalRoi3dcae | Variant::FlowRoi3dcae => cfg.lambda = Some(0.1),
            Variant::ThermalDiffRoi3dcae => {
                cfg.lambda_s = Some(1.0);
                cfg.lambda_d = Some(1.0);
            }
            Variant::FusionRoi3dcae => {
                cfg.lambda_t = Some(0.1);
                cfg.lambda_f = Some(0.1);
            }
            Variant::FusionDiffRoi3dcae => {
                cfg.lambda_t_s = Some(1.0);
                cfg.lambda_t_d = Some(1.0);
                cfg.lambda_f = Some(1.0);
            }
        }
        cfg
    }

    fn applicable(&self) -> [(&'static str, bool); 7] {
        let v = self.variant;
        [
            (
                "lambda",
                matches!(
                    v,
                    Variant::Thermal3dcae
                        | Variant::Flow3dcae
                        | Variant::ThermalRoi3dcae
                        | Variant::FlowRoi3dcae
                ),
            ),
            ("lambda_s", v == Variant::ThermalDiffRoi3dcae),
            ("lambda_d", v == Variant::ThermalDiffRoi3dcae),
            ("lambda_t", v == Variant::FusionRoi3dcae),
            (
                "lambda_f",
                matches!(v, Variant::FusionRoi3dcae | Variant::FusionDiffRoi3dcae),
            ),
            ("lambda_t_s", v == Variant::FusionDiffRoi3dcae),
            ("lambda_t_d", v == Variant::FusionDiffRoi3dcae),
        ]
    }

    pub fn validate(&self) -> Result<()> {
        let values = [
            ("lambda", self.lambda),
            ("lambda_s", self.lambda_s),
            ("lambda_d", self.lambda_d),
            ("lambda_t", self.lambda_t),
            ("lambda_f", self.lambda_f),
            ("lambda_t_s", self.lambda_t_s),
            ("lambda_t_d", self.lambda_t_d),
        ];
        for ((name, applicable), (_, value)) in self.applicable().iter().zip(values.iter()) {
            match (applicable, value) {
                (false, Some(_)) => {
                    return Err(Error::Config(format!(
                        "loss weight `{name}` does not apply to variant {}",
                        self.variant
                    )))
                }
                (true, Some(v)) if *v <= 0.0 => {
                    return Err(Error::Config(format!(
                        "loss weight `{name}` must be positive, got {v}"
                    )))
                }
                _ => {}
            }
        }
        Ok(())
    }

    fn weight(&self, v: Option<f64>, default_of: fn(&LossConfig) -> Option<f64>) -> f64 {
        v.unwrap_or_else(|| default_of(&LossConfig::defaults(self.variant)).unwrap_or(0.0))
    }

    pub fn lambda_value(&self) -> f64 {
        self.weight(self.lambda, |c| c.lambda)
    }
    pub fn lambda_s_value(&self) -> f64 {
        self.weight(self.lambda_s, |c| c.lambda_s)
    }
    pub fn lambda_d_value(&self) -> f64 {
        self.weight(self.lambda_d, |c| c.lambda_d)
    }
    pub fn lambda_t_value(&self) -> f64 {
        self.weight(self.lambda_t, |c| c.lambda_t)
    }
    pub fn lambda_f_value(&self) -> f64 {
        self.weight(self.lambda_f, |c| c.lambda_f)
    }
    pub fn lambda_t_s_value(&self) -> f64 {
        self.weight(self.lambda_t_s, |c| c.lambda_t_s)
    }
    pub fn lambda_t_d_value(&self) -> f64 {
        self.weight(self.lambda_t_d, |c| c.lambda_t_d)
    }
}

/// Training hyperparameters. The optimizers are fixed by role: SGD for the
/// discriminator, Adadelta for the autoencoders.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub disc_learning_rate: f32,
    pub adadelta_rho: f32,
    pub adadelta_epsilon: f32,
    pub adadelta_learning_rate: f32,
    /// Save an intermediate checkpoint every N epochs (0 = final only).
    pub checkpoint_every: usize,
    /// Train on every k-th sliding window. Scoring always uses stride 1;
    /// this only thins the training set for small-machine runs.
    pub window_stride: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 300,
            batch_size: 16,
            seed: 7,
            disc_learning_rate: 2e-4,
            adadelta_rho: 0.95,
            adadelta_epsilon: 1e-6,
            adadelta_learning_rate: 1.0,
            checkpoint_every: 0,
            window_stride: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs < 1 {
            return Err(Error::Config("epochs must be >= 1".into()));
        }
        if self.batch_size < 1 {
            return Err(Error::Config("batch_size must be >= 1".into()));
        }
        if self.window_stride < 1 {
            return Err(Error::Config("window_stride must be >= 1".into()));
        }
        Ok(())
    }
}
