//! Pipeline configuration, stored as TOML.

use std::fs;
use std::path::{Path, PathBuf};

use microt_core::device::ClassifierSpec;
use microt_core::distill::{DistillConfig, SslConfig};
use microt_core::image::Augmentation;
use microt_core::probe::ProbeConfig;
use microt_core::{BlockSpec, HeadSpec, NetSpec};
use serde::{Deserialize, Serialize};

use crate::error::{PipelineError, Result};

/// One layer of an extractor; channel and input widths are inferred.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum LayerConfig {
    Conv {
        channels: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
    },
    Dense {
        outputs: usize,
    },
    Relu,
    GlobalAvgPool,
}

/// Where a dataset comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum DataSource {
    /// Bundled glyph images; the public role draws the eight public glyphs,
    /// the local role the four disjoint local ones.
    Synthetic { samples: usize },
    Idx { images: PathBuf, labels: PathBuf },
    Csv { path: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    /// Images are resized to `side × side`.
    pub side: usize,
    /// Train/test/validation ratio of the local data.
    pub split: [u32; 3],
    pub public: DataSource,
    pub local: DataSource,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TeacherConfig {
    pub layers: Vec<LayerConfig>,
    /// Width of the projection head the SSL loss is computed on.
    pub projection_dim: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SslSection {
    pub tau_guide: f64,
    pub tau_explore: f64,
    pub ema_momentum: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub center_momentum: Option<f64>,
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub crop_min: f64,
    pub crop_max: f64,
    pub flip_probability: f64,
    pub noise_sigma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudentConfig {
    pub layers: Vec<LayerConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSection {
    pub alpha: f64,
    pub beta: f64,
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_grad_norm: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitSection {
    /// Inclusive candidate prefix lengths; defaults to 25 %–85 % of the blocks.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub range: Option<[usize; 2]>,
    pub probe_epochs: usize,
    pub probe_lr: f64,
    pub probe_batch_size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuantSection {
    pub enabled: bool,
    pub calibration_samples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeviceSection {
    pub lr: f64,
    pub epochs: usize,
    /// Cap on local training samples; all of the train split when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub train_samples: Option<usize>,
    pub hidden: Vec<usize>,
    pub shuffle: bool,
    pub sram_bytes: usize,
    pub flash_bytes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StageSection {
    /// Calibration sample count drawn from the validation split; all of it when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub calibration_samples: Option<usize>,
    pub adjust_factors: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostSection {
    pub joules_per_mac: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: u64,
    pub data: DataConfig,
    pub teacher: TeacherConfig,
    pub ssl: SslSection,
    pub student: StudentConfig,
    pub distill: TrainSection,
    pub joint: TrainSection,
    pub split: SplitSection,
    pub quant: QuantSection,
    pub device: DeviceSection,
    pub stage: StageSection,
    pub cost: CostSection,
    /// Directory relative data paths are resolved against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

fn conv(channels: usize, stride: usize) -> LayerConfig {
    LayerConfig::Conv {
        channels,
        kernel: 3,
        stride,
        padding: 1,
    }
}

impl Default for PipelineConfig {
    /// Desk-scale run on the bundled synthetic glyph data.
    fn default() -> Self {
        PipelineConfig {
            seed: 7,
            data: DataConfig {
                side: 12,
                split: [8, 1, 1],
                public: DataSource::Synthetic { samples: 800 },
                local: DataSource::Synthetic { samples: 2500 },
            },
            teacher: TeacherConfig {
                layers: vec![
                    conv(8, 1),
                    LayerConfig::Relu,
                    conv(16, 2),
                    LayerConfig::Relu,
                    conv(32, 2),
                    LayerConfig::Relu,
                    LayerConfig::GlobalAvgPool,
                ],
                projection_dim: 32,
            },
            ssl: SslSection {
                tau_guide: 0.04,
                tau_explore: 0.1,
                ema_momentum: 0.996,
                center_momentum: Some(0.9),
                epochs: 10,
                lr: 0.05,
                batch_size: 16,
                crop_min: 0.7,
                crop_max: 1.0,
                flip_probability: 0.5,
                noise_sigma: 0.05,
            },
            student: StudentConfig {
                layers: vec![
                    conv(8, 1),
                    LayerConfig::Relu,
                    conv(16, 2),
                    LayerConfig::Relu,
                    conv(64, 2),
                    LayerConfig::Relu,
                    LayerConfig::GlobalAvgPool,
                ],
            },
            distill: TrainSection {
                alpha: 1.0,
                beta: 1.0,
                epochs: 30,
                lr: 0.2,
                batch_size: 16,
                max_grad_norm: Some(2.0),
            },
            joint: TrainSection {
                alpha: 1.0,
                beta: 1.0,
                epochs: 20,
                lr: 0.1,
                batch_size: 16,
                max_grad_norm: Some(2.0),
            },
            split: SplitSection {
                range: None,
                probe_epochs: 30,
                probe_lr: 0.1,
                probe_batch_size: 16,
            },
            quant: QuantSection {
                enabled: true,
                calibration_samples: 64,
            },
            device: DeviceSection {
                lr: 0.05,
                epochs: 100,
                train_samples: Some(1000),
                hidden: Vec::new(),
                shuffle: false,
                sram_bytes: 512 * 1024,
                flash_bytes: 16 * 1024 * 1024,
            },
            stage: StageSection {
                calibration_samples: None,
                adjust_factors: vec![0.9, 1.0, 1.1],
            },
            cost: CostSection { joules_per_mac: 1.0 },
            base_dir: PathBuf::new(),
        }
    }
}

fn invalid(msg: impl Into<String>) -> PipelineError {
    PipelineError::Config(msg.into())
}

/// Resolves `layers` against an input shape.
pub fn build_blocks(input_shape: &[usize], layers: &[LayerConfig]) -> Result<Vec<BlockSpec>> {
    let mut shape = input_shape.to_vec();
    let mut blocks = Vec::with_capacity(layers.len());
    for layer in layers {
        match *layer {
            LayerConfig::Conv { channels, kernel, stride, padding } => {
                let [c, h, w] = shape[..] else {
                    return Err(invalid("conv layers need [channels, height, width] inputs"));
                };
                if kernel == 0 || stride == 0 || h + 2 * padding < kernel || w + 2 * padding < kernel {
                    return Err(invalid("conv kernel does not fit its input"));
                }
                blocks.push(BlockSpec::Conv2d {
                    in_ch: c,
                    out_ch: channels,
                    kernel,
                    stride,
                    padding,
                });
                shape = vec![channels, (h + 2 * padding - kernel) / stride + 1, (w + 2 * padding - kernel) / stride + 1];
            }
            LayerConfig::Dense { outputs } => {
                blocks.push(BlockSpec::Dense {
                    inputs: shape.iter().product(),
                    outputs,
                });
                shape = vec![outputs];
            }
            LayerConfig::Relu => blocks.push(BlockSpec::Relu),
            LayerConfig::GlobalAvgPool => {
                if shape.len() != 3 {
                    return Err(invalid("global average pooling needs a feature map"));
                }
                blocks.push(BlockSpec::GlobalAvgPool);
                shape = vec![shape[0]];
            }
        }
    }
    Ok(blocks)
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: PipelineConfig = toml::from_str(text).map_err(|e| invalid(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is always serializable")
    }

    /// Reads a config file; relative data paths resolve against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| invalid(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::from_toml(&text)?;
        cfg.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        cfg.check_paths()?;
        Ok(cfg)
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    fn check_paths(&self) -> Result<()> {
        for src in [&self.data.public, &self.data.local] {
            let paths: Vec<&PathBuf> = match src {
                DataSource::Synthetic { .. } => vec![],
                DataSource::Idx { images, labels } => vec![images, labels],
                DataSource::Csv { path } => vec![path],
            };
            for p in paths {
                let full = self.resolve(p);
                if !full.exists() {
                    return Err(invalid(format!("data file {} does not exist", full.display())));
                }
            }
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if self.data.side < 5 {
            return Err(invalid("data.side must be at least 5"));
        }
        if self.data.split.contains(&0) {
            return Err(invalid("data.split ratios must be positive"));
        }
        if self.teacher.layers.is_empty() || self.student.layers.is_empty() {
            return Err(invalid("teacher and student need layers"));
        }
        if self.teacher.projection_dim < 2 {
            return Err(invalid("teacher.projection_dim must be at least 2"));
        }
        if self.stage.adjust_factors.iter().any(|&f| f <= 0.0 || !f.is_finite()) {
            return Err(invalid("stage.adjust_factors must be positive"));
        }
        if self.stage.calibration_samples == Some(0) || self.device.train_samples == Some(0) {
            return Err(invalid("sample counts must be positive"));
        }
        if self.cost.joules_per_mac.is_nan() || self.cost.joules_per_mac <= 0.0 {
            return Err(invalid("cost.joules_per_mac must be positive"));
        }
        if self.quant.calibration_samples == 0 {
            return Err(invalid("quant.calibration_samples must be positive"));
        }
        self.ssl_config().validate().map_err(|e| invalid(format!("ssl: {e}")))?;
        self.distill_config().validate().map_err(|e| invalid(format!("distill: {e}")))?;
        self.joint_config().validate().map_err(|e| invalid(format!("joint: {e}")))?;
        Ok(())
    }

    pub fn ssl_config(&self) -> SslConfig {
        let s = &self.ssl;
        SslConfig {
            tau_guide: s.tau_guide,
            tau_explore: s.tau_explore,
            ema_momentum: s.ema_momentum,
            augmentation: Augmentation {
                crop_fraction: (s.crop_min, s.crop_max),
                flip_probability: s.flip_probability,
                noise_sigma: s.noise_sigma,
            },
            epochs: s.epochs,
            lr: s.lr,
            batch_size: s.batch_size,
            center_momentum: s.center_momentum,
        }
    }

    fn train_config(t: &TrainSection) -> DistillConfig {
        DistillConfig {
            alpha: t.alpha,
            beta: t.beta,
            epochs: t.epochs,
            lr: t.lr,
            batch_size: t.batch_size,
            max_grad_norm: t.max_grad_norm,
        }
    }

    pub fn distill_config(&self) -> DistillConfig {
        Self::train_config(&self.distill)
    }

    pub fn joint_config(&self) -> DistillConfig {
        Self::train_config(&self.joint)
    }

    pub fn probe_config(&self) -> ProbeConfig {
        ProbeConfig {
            epochs: self.split.probe_epochs,
            lr: self.split.probe_lr,
            batch_size: self.split.probe_batch_size,
        }
    }

    pub fn classifier_spec(&self) -> ClassifierSpec {
        ClassifierSpec {
            hidden: self.device.hidden.clone(),
            ..ClassifierSpec::default()
        }
    }

    pub fn teacher_spec(&self, input_shape: &[usize]) -> Result<NetSpec> {
        Ok(NetSpec {
            input_shape: input_shape.to_vec(),
            blocks: build_blocks(input_shape, &self.teacher.layers)?,
            head: Some(HeadSpec::new(self.teacher.projection_dim)),
        })
    }

    pub fn student_spec(&self, input_shape: &[usize]) -> Result<NetSpec> {
        Ok(NetSpec {
            input_shape: input_shape.to_vec(),
            blocks: build_blocks(input_shape, &self.student.layers)?,
            head: None,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_round_trips() {
        let cfg = PipelineConfig::default();
        let text = cfg.to_toml();
        let back = PipelineConfig::from_toml(&text).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.to_toml(), text);
    }

    #[test]
    fn optional_keys_round_trip() {
        let mut cfg = PipelineConfig::default();
        cfg.ssl.center_momentum = None;
        cfg.split.range = Some([2, 4]);
        cfg.device.train_samples = None;
        cfg.stage.calibration_samples = Some(5);
        let back = PipelineConfig::from_toml(&cfg.to_toml()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn missing_seed_rejected() {
        let text = PipelineConfig::default().to_toml().replace("seed = 7\n", "");
        assert!(PipelineConfig::from_toml(&text).is_err());
    }

    #[test]
    fn missing_data_file_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = PipelineConfig::default();
        cfg.data.local = DataSource::Csv { path: "absent.csv".into() };
        let path = dir.path().join("cfg.toml");
        fs::write(&path, cfg.to_toml()).unwrap();
        assert!(matches!(PipelineConfig::load(&path), Err(PipelineError::Config(_))));
    }

    #[test]
    fn blocks_infer_widths() {
        let blocks = build_blocks(
            &[1, 12, 12],
            &[conv(4, 2), LayerConfig::Relu, LayerConfig::Dense { outputs: 10 }],
        )
        .unwrap();
        assert_eq!(
            blocks[2],
            BlockSpec::Dense {
                inputs: 4 * 6 * 6,
                outputs: 10
            }
        );
        assert!(build_blocks(&[5], &[conv(4, 1)]).is_err());
    }
}
