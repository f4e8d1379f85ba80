use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use nalgebra::Vector2;
use pednav_core::acf::TreeEnsemble;
use pednav_core::cascade::{calibrate_threshold, detect_pedestrians, load_inria, read_detections, write_detections};
use pednav_core::cnn::CnnModel;
use pednav_core::geometry::{calibrate_homography, foot_point, project_to_floor, read_correspondences};
use pednav_core::imageproc::io::load_image;
use pednav_core::tracker::{write_track_log, Tracker};
use pednav_harness::bench::{detections_subset, true_positive_scores, BenchReport};
use pednav_harness::config::HarnessConfig;
use pednav_harness::eval::{evaluate_detections, evaluate_proposals};
use pednav_harness::output::{load_dataset, save_dataset, write_run};
use pednav_harness::pipeline::{run_pipeline, FrameRecord, Models, PipelineConfig};
use pednav_harness::render::mix;
use pednav_harness::scenarios::{self, planted, PlantedParams};
use pednav_harness::script::ScenarioScript;
use pednav_harness::training::{self, TrainingScenes};
use pednav_harness::{Error, Result};

const EXIT_USAGE: u8 = 1;
const EXIT_DATA: u8 = 2;
const EXIT_ASSERTION: u8 = 3;

/// Pedestrian detection, tracking and human-aware navigation on synthetic scenes.
#[derive(Parser)]
#[command(name = "pednav", version)]
struct Cli {
    /// TOML file overriding the built-in configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the training seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Repeat for more log output.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct SceneSource {
    /// Train on an annotated dataset directory instead of synthetic scenes.
    #[arg(long)]
    inria: Option<PathBuf>,
}

#[derive(Args)]
struct ModelArgs {
    /// Channel-feature detector model.
    #[arg(long)]
    acf: PathBuf,
    /// CNN model; without it the proposals are the detections.
    #[arg(long)]
    cnn: Option<PathBuf>,
    /// Proposal-score threshold for the CNN stage.
    #[arg(long, allow_hyphen_values = true)]
    score_threshold: Option<f64>,
}

#[derive(Subcommand)]
enum Command {
    /// Pretrain the CNN on the shape-classification task.
    Pretrain {
        /// Output CNN model.
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the channel-feature detector and the negative miner.
    TrainAcf {
        /// Output detector model.
        #[arg(long)]
        out: PathBuf,
        /// Also write the partially trained negative miner.
        #[arg(long)]
        miner_out: Option<PathBuf>,
        #[command(flatten)]
        source: SceneSource,
    },
    /// Build the augmented CNN training set with mined negatives.
    BuildDataset {
        /// Negative-miner model from `train-acf`.
        #[arg(long)]
        miner: PathBuf,
        /// Output dataset directory.
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        source: SceneSource,
    },
    /// Fine-tune a pretrained CNN on a dataset directory.
    TrainCnn {
        /// Dataset directory from `build-dataset`.
        #[arg(long)]
        dataset: PathBuf,
        /// Pretrained CNN whose convolutional layers are transferred.
        #[arg(long)]
        pretrained: PathBuf,
        /// Output CNN model.
        #[arg(long)]
        out: PathBuf,
    },
    /// Detect pedestrians in images; frame ids follow the argument order.
    Detect {
        #[command(flatten)]
        models: ModelArgs,
        /// Output detections file.
        #[arg(long)]
        out: PathBuf,
        /// PNG or binary PPM images.
        #[arg(required = true)]
        images: Vec<PathBuf>,
    },
    /// Track detections on the floor plane.
    Track {
        /// Detections file as written by `detect`.
        #[arg(long)]
        detections: PathBuf,
        /// `u v x y` image/floor correspondences.
        #[arg(long)]
        correspondences: PathBuf,
        /// Frame rate in frames per second.
        #[arg(long, default_value_t = 10.0)]
        rate: f64,
        /// Output track log.
        #[arg(long)]
        out: PathBuf,
    },
    /// Replay a scenario through detection, tracking and planning.
    Simulate {
        /// Scenario script, or one of `empty`, `standing`, `walker`.
        #[arg(long)]
        scenario: String,
        #[command(flatten)]
        models: ModelArgs,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
        /// Also write every frame record as JSON lines.
        #[arg(long)]
        records: bool,
    },
    /// Write a built-in scenario as a script.
    Scenario {
        /// `empty`, `standing` or `walker`.
        name: String,
        /// Output file; standard output when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compare the channel-feature stage alone with the full cascade on planted scenes.
    Eval {
        #[command(flatten)]
        models: ModelArgs,
        /// Number of planted evaluation scenes.
        #[arg(long)]
        scenes: Option<usize>,
        /// Also write the metrics as JSON.
        #[arg(long)]
        json: Option<PathBuf>,
        /// Fail unless false positives drop by this fraction.
        #[arg(long)]
        min_fp_reduction: Option<f64>,
        /// Fail if recall drops by more than this many percentage points.
        #[arg(long)]
        max_recall_drop: Option<f64>,
    },
    /// Time the cascade with and without a calibrated score threshold.
    Bench {
        /// Channel-feature detector model.
        #[arg(long)]
        acf: PathBuf,
        /// CNN model.
        #[arg(long)]
        cnn: PathBuf,
        /// Share of true-positive proposals the calibrated threshold keeps.
        #[arg(long)]
        retain: Option<f64>,
        /// Also write the report as JSON.
        #[arg(long)]
        json: Option<PathBuf>,
    },
}

fn load_models(args: &ModelArgs) -> Result<Models> {
    Ok(Models {
        acf: TreeEnsemble::load(&args.acf)?,
        cnn: args.cnn.as_ref().map(CnnModel::load).transpose()?,
    })
}

fn pipeline_config(cfg: &HarnessConfig, args: &ModelArgs) -> PipelineConfig {
    let mut p = cfg.pipeline.clone();
    if let Some(t) = args.score_threshold {
        p.cascade.score_threshold = t;
    }
    p
}

fn scenes(cfg: &HarnessConfig, source: &SceneSource) -> Result<TrainingScenes> {
    match &source.inria {
        Some(dir) => {
            let (positives, negatives) = load_inria(dir)?;
            Ok(TrainingScenes { positives, negatives })
        }
        None => training::training_scenes(&cfg.training),
    }
}

fn scenario(name: &str) -> Result<ScenarioScript> {
    match name {
        "empty" => Ok(scenarios::empty(100)),
        "standing" => Ok(scenarios::standing()),
        "walker" => Ok(scenarios::walker()),
        path => ScenarioScript::parse(&std::fs::read_to_string(path)?),
    }
}

fn planted_records(models: &Models, cfg: &PipelineConfig, seed: u64, scenes: usize) -> Result<Vec<FrameRecord>> {
    let params = PlantedParams::default();
    let mut out = Vec::new();
    for i in 0..scenes {
        out.extend(run_pipeline(&planted(mix(seed, i as u64), &params), models, cfg)?);
    }
    Ok(out)
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::Data(e.to_string()))?;
    std::fs::write(path, text)?;
    Ok(())
}

/// Outcome of a verb that may check a property.
enum Verdict {
    Ok,
    Failed(String),
}

fn run(cli: Cli) -> Result<Verdict> {
    let mut cfg = HarnessConfig::load(cli.config.as_deref())?;
    if let Some(seed) = cli.seed {
        cfg.training.seed = seed;
    }
    match cli.command {
        Command::Pretrain { out } => {
            let p = training::pretrain_shapes(&cfg.training)?;
            p.model.save(&out)?;
            println!("pretrained model written to {} (held-out accuracy {:.3})", out.display(), p.val_accuracy);
        }
        Command::TrainAcf { out, miner_out, source } => {
            let s = scenes(&cfg, &source)?;
            let d = training::train_detectors(&s, &cfg.training)?;
            d.detector.save(&out)?;
            if let Some(m) = miner_out {
                d.miner.save(m)?;
            }
            println!("detector with {} trees written to {}", d.detector.trees.len(), out.display());
        }
        Command::BuildDataset { miner, out, source } => {
            let s = scenes(&cfg, &source)?;
            let data = training::build_dataset(&s, &TreeEnsemble::load(miner)?, &cfg.training)?;
            save_dataset(&data, &out)?;
            let [a, b, c] = data.positive_counts;
            println!("positives {a} → {b} → {c}, negatives {}", data.negatives.len());
        }
        Command::TrainCnn { dataset, pretrained, out } => {
            let data = load_dataset(&dataset)?;
            let ft = training::finetune(&CnnModel::load(pretrained)?, &data, &cfg.training)?;
            ft.model.save(&out)?;
            println!("fine-tuned model written to {} (held-out accuracy {:.3})", out.display(), ft.val_accuracy);
        }
        Command::Detect { models, out, images } => {
            let m = load_models(&models)?;
            let p = pipeline_config(&cfg, &models);
            let cnn = if p.use_cnn { m.cnn.as_ref() } else { None };
            let mut w = BufWriter::new(File::create(&out)?);
            for (frame, path) in images.iter().enumerate() {
                let img = load_image(path)?;
                let r = detect_pedestrians(&img, &m.acf, cnn, &p.cascade).map_err(|e| Error::from(e).at_frame(frame))?;
                write_detections(&mut w, frame, &r.detections)?;
            }
            w.flush()?;
        }
        Command::Track { detections, correspondences, rate, out } => {
            if rate.is_nan() || rate <= 0.0 {
                return Err(Error::Config("frame rate must be positive".into()));
            }
            let dets = read_detections(BufReader::new(File::open(detections)?))?;
            let cal = calibrate_homography(&read_correspondences(BufReader::new(File::open(correspondences)?))?)?;
            let mut tracker = Tracker::new(cfg.pipeline.tracker.clone());
            let mut w = BufWriter::new(File::create(&out)?);
            let last = dets.iter().map(|d| d.0).max();
            for frame in 0..last.map_or(0, |l| l + 1) {
                let mut z = Vec::new();
                for (_, b, _) in dets.iter().filter(|d| d.0 == frame) {
                    match project_to_floor(foot_point(b), &cal.homography) {
                        Ok(p) => z.push(Vector2::new(p.x, p.y)),
                        Err(e) => log::info!("frame {frame}: dropping detection: {e}"),
                    }
                }
                let tracks = tracker.step(&z, 1.0 / rate).map_err(|e| Error::from(e).at_frame(frame))?;
                write_track_log(&mut w, frame, &tracks)?;
            }
            w.flush()?;
        }
        Command::Simulate { scenario: name, models, out, records } => {
            let script = scenario(&name)?;
            let m = load_models(&models)?;
            let recs = run_pipeline(&script, &m, &pipeline_config(&cfg, &models))?;
            write_run(&out, &recs)?;
            if records {
                let mut w = BufWriter::new(File::create(out.join("records.jsonl"))?);
                for r in &recs {
                    let line = serde_json::to_string(&r.without_timing()).map_err(|e| Error::Data(e.to_string()))?;
                    writeln!(w, "{line}")?;
                }
                w.flush()?;
            }
            let reached = recs.last().is_some_and(|r| r.robot.distance(&script.robot.goal) <= script.world.resolution);
            println!("{} frames written to {} (goal reached: {reached})", recs.len(), out.display());
        }
        Command::Scenario { name, out } => {
            let text = scenario(&name)?.to_text();
            match out {
                Some(p) => std::fs::write(p, text)?,
                None => print!("{text}"),
            }
        }
        Command::Eval { models, scenes, json, min_fp_reduction, max_recall_drop } => {
            let m = load_models(&models)?;
            if m.cnn.is_none() {
                return Err(Error::Config("eval compares against the CNN stage; pass --cnn".into()));
            }
            let p = pipeline_config(&cfg, &models);
            let recs = planted_records(&m, &p, cfg.eval.seed, scenes.unwrap_or(cfg.eval.eval_scenes))?;
            let alone = evaluate_proposals(&recs, p.cascade.score_threshold, cfg.eval.iou_threshold);
            let full = evaluate_detections(&recs, cfg.eval.iou_threshold);
            println!("{:<12} {:>8} {:>10} {:>8} {:>8}", "", "recall", "precision", "FP/frame", "LAMR");
            for (label, x) in [("ACF", &alone), ("ACF+CNN", &full)] {
                let lamr = x.log_average_miss_rate.map_or("-".to_string(), |v| format!("{v:.3}"));
                println!("{label:<12} {:>8.3} {:>10.3} {:>8.3} {lamr:>8}", x.recall, x.precision, x.fp_per_frame);
            }
            if let Some(j) = json {
                write_json(&j, &serde_json::json!({ "frames": recs.len(), "acf": alone, "acf_cnn": full }))?;
            }
            let reduction = if alone.fp_per_frame > 0.0 { 1.0 - full.fp_per_frame / alone.fp_per_frame } else { 0.0 };
            let drop = 100.0 * (alone.recall - full.recall);
            if let Some(min) = min_fp_reduction {
                if reduction < min {
                    return Ok(Verdict::Failed(format!("false positives dropped by {:.1}%, below {:.1}%", 100.0 * reduction, 100.0 * min)));
                }
            }
            if let Some(max) = max_recall_drop {
                if drop > max {
                    return Ok(Verdict::Failed(format!("recall dropped by {drop:.2} points, above {max}")));
                }
            }
        }
        Command::Bench { acf, cnn, retain, json } => {
            let m = Models {
                acf: TreeEnsemble::load(acf)?,
                cnn: Some(CnnModel::load(cnn)?),
            };
            let base = PipelineConfig {
                use_cnn: true,
                ..cfg.pipeline.clone()
            };
            let calib = planted_records(&m, &base, mix(cfg.eval.seed, 1), cfg.eval.calibration_scenes)?;
            let threshold = calibrate_threshold(&true_positive_scores(&calib, cfg.eval.iou_threshold), retain.unwrap_or(cfg.eval.retain))?;
            let baseline = planted_records(&m, &base, cfg.eval.seed, cfg.eval.eval_scenes)?;
            let mut thr_cfg = base.clone();
            thr_cfg.cascade.score_threshold = threshold;
            let thresholded = planted_records(&m, &thr_cfg, cfg.eval.seed, cfg.eval.eval_scenes)?;
            let report = BenchReport::new(threshold, &baseline, &thresholded)?;
            print!("{}", report.to_table());
            if let Some(j) = json {
                std::fs::write(j, report.to_json()?)?;
            }
            if !report.speedup_holds() {
                return Ok(Verdict::Failed("thresholding did not reduce CNN work".into()));
            }
            if !detections_subset(&thresholded, &baseline) {
                return Ok(Verdict::Failed("thresholded detections are not a subset of the baseline".into()));
            }
        }
    }
    Ok(Verdict::Ok)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(EXIT_USAGE) } else { ExitCode::SUCCESS };
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(Verdict::Ok) => ExitCode::SUCCESS,
        Ok(Verdict::Failed(msg)) => {
            eprintln!("check failed: {msg}");
            ExitCode::from(EXIT_ASSERTION)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_DATA)
        }
    }
}
