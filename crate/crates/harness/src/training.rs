//! End-to-end model training on synthetic scenes: the channel-feature
//! detector, a partially trained copy used as the negative miner, shape
//! pretraining and pedestrian fine-tuning of the CNN.

use pednav_core::acf::{train_acf_with_report, BoostConfig, TreeEnsemble};
use pednav_core::cascade::{build_training_set, AnnotatedImage, AugmentConfig, DatasetSpec, MiningConfig};
use pednav_core::cnn::{default_architecture, pretrain_auxiliary, train, transfer_init, CnnModel, LayerSpec, TrainConfig, TrainLog, INPUT_SHAPE};
use pednav_core::imageproc::{Image, PyramidConfig};
use serde::{Deserialize, Serialize};

use crate::render::{mix, render_frame};
use crate::scenarios::{planted, PlantedParams};
use crate::shapes::{shape_dataset, SHAPE_CLASSES};
use crate::Result;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainingConfig {
    pub seed: u64,
    /// Planted scenes whose people provide positives.
    pub positive_scenes: usize,
    /// Person-free scenes providing negatives.
    pub negative_scenes: usize,
    pub frames_per_scene: usize,
    /// Context margin, in window pixels per side, around detector positives.
    pub acf_margin: usize,
    /// Replaces the trained acceptance threshold of the detector; `None`
    /// keeps the quantile calibrated on the training positives.
    pub acf_accept_threshold: Option<f64>,
    pub acf: BoostConfig,
    /// Bootstrapping schedule of the partially trained negative miner.
    pub miner_stages: Vec<usize>,
    pub augment: AugmentConfig,
    pub mining: MiningConfig,
    pub shapes_per_class: usize,
    pub shapes_val_per_class: usize,
    pub architecture: Vec<LayerSpec>,
    pub pretrain: TrainConfig,
    pub finetune: TrainConfig,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            positive_scenes: 400,
            negative_scenes: 200,
            frames_per_scene: 1,
            acf_margin: 8,
            acf_accept_threshold: Some(0.0),
            acf: BoostConfig::default(),
            miner_stages: vec![32, 128],
            augment: AugmentConfig::default(),
            mining: MiningConfig::default(),
            shapes_per_class: 200,
            shapes_val_per_class: 50,
            architecture: default_architecture(SHAPE_CLASSES.len()),
            pretrain: TrainConfig::default(),
            finetune: TrainConfig::default(),
        }
    }
}

impl TrainingConfig {
    /// A reduced configuration that trains every model in a few minutes on
    /// one CPU core.
    pub fn desk() -> Self {
        let conv = |filters| LayerSpec::Conv {
            filters,
            kernel: 3,
            pad: 1,
            stride: 1,
        };
        let pool = LayerSpec::MaxPool { window: 2, stride: 2 };
        Self {
            positive_scenes: 500,
            negative_scenes: 200,
            frames_per_scene: 1,
            acf: BoostConfig {
                stage_trees: vec![16, 64, 256],
                initial_negatives: 4000,
                negatives_per_image: 25,
                max_negatives: 8000,
                pyramid: PyramidConfig {
                    scales_per_octave: 16,
                    shrink: 2,
                    ..PyramidConfig::default()
                },
                ..BoostConfig::default()
            },
            miner_stages: vec![16, 64],
            mining: MiningConfig {
                per_image: 10,
                ..MiningConfig::default()
            },
            shapes_per_class: 150,
            shapes_val_per_class: 25,
            architecture: vec![
                conv(8),
                LayerSpec::Relu,
                pool,
                conv(16),
                LayerSpec::Relu,
                pool,
                conv(32),
                LayerSpec::Relu,
                pool,
                LayerSpec::FullyConnected { units: 64 },
                LayerSpec::Relu,
                LayerSpec::FullyConnected { units: 32 },
                LayerSpec::Relu,
                LayerSpec::FullyConnected { units: SHAPE_CLASSES.len() },
                LayerSpec::Softmax,
            ],
            pretrain: TrainConfig {
                epochs: 12,
                minibatch: 20,
                learning_rate: 0.01,
                ..TrainConfig::default()
            },
            finetune: TrainConfig {
                epochs: 5,
                minibatch: 20,
                learning_rate: 0.002,
                ..TrainConfig::default()
            },
            ..Self::default()
        }
    }
}

/// Rendered training material.
pub struct TrainingScenes {
    /// Frames with their usable (non-ignored) pedestrian boxes.
    pub positives: Vec<AnnotatedImage>,
    /// Pedestrian-free frames.
    pub negatives: Vec<Image>,
}

fn annotated_frames(seed: u64, scenes: usize, params: &PlantedParams) -> Result<Vec<AnnotatedImage>> {
    let mut out = Vec::new();
    for i in 0..scenes {
        let s = planted(mix(seed, i as u64), params);
        for f in 0..s.frames {
            let r = render_frame(&s, f)?;
            let boxes = r.truth.iter().filter(|g| !g.ignore).map(|g| g.bbox).collect();
            out.push(AnnotatedImage { image: r.image, boxes });
        }
    }
    Ok(out)
}

pub fn training_scenes(cfg: &TrainingConfig) -> Result<TrainingScenes> {
    let params = PlantedParams {
        frames: cfg.frames_per_scene.max(1),
        ..PlantedParams::default()
    };
    let positives = annotated_frames(mix(cfg.seed, 0x5000), cfg.positive_scenes, &params)?;
    let empty_params = PlantedParams {
        people: (0, 0),
        clutter: (3, 7),
        ..params
    };
    let mut negatives = Vec::new();
    for i in 0..cfg.negative_scenes {
        let s = planted(mix(mix(cfg.seed, 0x6000), i as u64), &empty_params);
        for f in 0..s.frames {
            negatives.push(render_frame(&s, f)?.image);
        }
    }
    Ok(TrainingScenes { positives, negatives })
}

/// Window-sized crops of every annotated box plus `margin` window pixels of
/// context on each side.
pub fn detector_positives(frames: &[AnnotatedImage], window: usize, margin: usize) -> Vec<Image> {
    let size = window + 2 * margin;
    let k = size as f64 / window as f64;
    frames
        .iter()
        .flat_map(|a| {
            a.boxes.iter().map(move |b| {
                let (w, h) = (b.w * k, b.h * k);
                a.image.crop_resize(b.x - (w - b.w) / 2.0, b.y - (h - b.h) / 2.0, w, h, size, size)
            })
        })
        .collect()
}

pub struct DetectorModels {
    pub detector: TreeEnsemble,
    pub miner: TreeEnsemble,
}

pub fn train_detectors(scenes: &TrainingScenes, cfg: &TrainingConfig) -> Result<DetectorModels> {
    let pos = detector_positives(&scenes.positives, cfg.acf.pyramid.window_width, cfg.acf_margin);
    log::info!("detector: {} positives, {} negative frames", pos.len(), scenes.negatives.len());
    let miner_cfg = BoostConfig {
        stage_trees: cfg.miner_stages.clone(),
        ..cfg.acf.clone()
    };
    let (mut miner, _) = train_acf_with_report(&pos, &scenes.negatives, &miner_cfg)?;
    // The miner scores every window; mining keeps the best few per frame.
    miner.accept_threshold = f64::NEG_INFINITY;
    miner.cascade_reject = f64::NEG_INFINITY;
    let (mut detector, report) = train_acf_with_report(&pos, &scenes.negatives, &cfg.acf)?;
    for s in &report.stages {
        log::info!("stage {} trees: {} negatives ({} mined), error {:.4}", s.trees, s.negatives, s.mined, s.training_error);
    }
    if let Some(t) = cfg.acf_accept_threshold {
        detector.accept_threshold = t;
    }
    Ok(DetectorModels { detector, miner })
}

pub struct Pretrained {
    pub model: CnnModel,
    pub log: TrainLog,
    pub val_accuracy: f64,
}

pub fn pretrain_shapes(cfg: &TrainingConfig) -> Result<Pretrained> {
    let size = INPUT_SHAPE.height;
    let train_set = shape_dataset(cfg.shapes_per_class, size, mix(cfg.seed, 0x7000));
    let val_set = shape_dataset(cfg.shapes_val_per_class, size, mix(cfg.seed, 0x7001));
    let (model, log) = pretrain_auxiliary(&train_set, &val_set, &cfg.architecture, &cfg.pretrain)?;
    let val_accuracy = if val_set.is_empty() { f64::NAN } else { val_set.accuracy(&model)? };
    log::info!("pretraining: held-out accuracy {val_accuracy:.3}");
    Ok(Pretrained { model, log, val_accuracy })
}

pub fn build_dataset(scenes: &TrainingScenes, miner: &TreeEnsemble, cfg: &TrainingConfig) -> Result<DatasetSpec> {
    Ok(build_training_set(&scenes.positives, &scenes.negatives, &cfg.augment, miner, &cfg.mining)?)
}

pub struct FineTuned {
    pub model: CnnModel,
    pub log: TrainLog,
    pub val_accuracy: f64,
}

/// Transfers the convolutional stage of `pretrained` into a two-class model
/// and fine-tunes it on the dataset.
pub fn finetune(pretrained: &CnnModel, data: &DatasetSpec, cfg: &TrainingConfig) -> Result<FineTuned> {
    let (train_set, val_set) = data.split(cfg.mining.split_seed);
    let init = transfer_init(pretrained, 2, cfg.finetune.init_std, mix(cfg.seed, 0x8000))?;
    let (model, log) = train(&init, &train_set, &val_set, &cfg.finetune)?;
    let val_accuracy = if val_set.is_empty() { f64::NAN } else { val_set.accuracy(&model)? };
    log::info!("fine-tuning: held-out accuracy {val_accuracy:.3}");
    Ok(FineTuned { model, log, val_accuracy })
}

/// Everything `train_all` produces.
pub struct TrainedModels {
    pub detector: TreeEnsemble,
    pub miner: TreeEnsemble,
    pub pretrained: Pretrained,
    pub dataset_counts: [usize; 3],
    pub mined_negatives: usize,
    pub cnn: FineTuned,
}

pub fn train_all(cfg: &TrainingConfig) -> Result<TrainedModels> {
    let scenes = training_scenes(cfg)?;
    let dets = train_detectors(&scenes, cfg)?;
    let data = build_dataset(&scenes, &dets.miner, cfg)?;
    let pretrained = pretrain_shapes(cfg)?;
    let cnn = finetune(&pretrained.model, &data, cfg)?;
    Ok(TrainedModels {
        detector: dets.detector,
        miner: dets.miner,
        pretrained,
        dataset_counts: data.positive_counts,
        mined_negatives: data.negatives.len(),
        cnn,
    })
}
