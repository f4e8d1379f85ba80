//! End-to-end acceptance suite. Prints one PASS/FAIL line per criterion and
//! exits non-zero when any criterion fails.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path as FsPath;
use std::process::{Command, ExitCode};
use std::time::Instant;

use nalgebra::{Matrix2, Matrix4, Vector2, Vector4};
use pednav_core::acf::{detect, nms, BoundingBox, DepthTwoTree, Proposal, TreeEnsemble};
use pednav_core::cascade::{build_training_set, calibrate_threshold, split_counts, AnnotatedImage, AugmentConfig, DatasetSpec, MiningConfig};
use pednav_core::cnn::{bce_loss, cross_entropy, softmax, transfer_init, CnnModel, LayerSpec, ParamGroup, Shape, Tensor};
use pednav_core::geometry::{calibrate_homography, foot_point, project_to_floor, WorldPoint};
use pednav_core::imageproc::{build_pyramid, Image, PyramidConfig};
use pednav_core::planner::{neighbors, plan_astar, CostMap, OccupancyGrid, Plan};
use pednav_core::tracker::{associate_nn, associate_nnjpda, innovation, predict, update, JpdaConfig, KalmanState, TrackerConfig};
use pednav_harness::bench::{detections_subset, true_positive_scores, BenchReport};
use pednav_harness::config::HarnessConfig;
use pednav_harness::eval::{evaluate_detections, evaluate_proposals, match_frame, Outcome};
use pednav_harness::pipeline::{run_pipeline, FrameRecord, Models, PipelineConfig};
use pednav_harness::render::{mix, render_frame};
use pednav_harness::scenarios::{self, planted, PlantedParams};
use pednav_harness::script::{default_camera, ScenarioScript};
use pednav_harness::training::{train_all, training_scenes, TrainingConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Verdict = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn fail<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

struct Suite {
    failed: Vec<u32>,
}

impl Suite {
    fn run(&mut self, id: u32, name: &str, f: impl FnOnce() -> Verdict) {
        let start = Instant::now();
        let verdict = match catch_unwind(AssertUnwindSafe(f)) {
            Ok(v) => v,
            Err(p) => Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into())),
        };
        let secs = start.elapsed().as_secs_f64();
        match verdict {
            Ok(detail) => println!("criterion {id:>2} PASS  {name}: {detail} [{secs:.1}s]"),
            Err(detail) => {
                println!("criterion {id:>2} FAIL  {name}: {detail} [{secs:.1}s]");
                self.failed.push(id);
            }
        }
    }
}

/// Desk-scale models plus the evaluation frames shared by later criteria.
struct Trained {
    models: Models,
    config: HarnessConfig,
    scenes: Vec<ScenarioScript>,
    records: Vec<FrameRecord>,
}

fn planted_scenes(seed: u64, n: usize) -> Vec<ScenarioScript> {
    let params = PlantedParams::default();
    (0..n).map(|i| planted(mix(seed, i as u64), &params)).collect()
}

fn run_scenes(scenes: &[ScenarioScript], models: &Models, cfg: &PipelineConfig) -> Result<Vec<FrameRecord>, String> {
    let mut out = Vec::new();
    for s in scenes {
        out.extend(run_pipeline(s, models, cfg).map_err(fail)?);
    }
    Ok(out)
}

// 1 ---------------------------------------------------------------------

fn accept_all(shrink: usize) -> TreeEnsemble {
    TreeEnsemble {
        trees: vec![DepthTwoTree::constant(1.0)],
        window_width: 64,
        window_height: 64,
        shrink,
        cascade_reject: f64::NEG_INFINITY,
        accept_threshold: 0.0,
    }
}

fn augmentation_cardinalities() -> Verdict {
    let cfg = TrainingConfig {
        positive_scenes: 120,
        negative_scenes: 2,
        ..TrainingConfig::desk()
    };
    let scenes = training_scenes(&cfg).map_err(fail)?;
    let mut left = 200usize;
    let mut frames: Vec<AnnotatedImage> = Vec::new();
    for mut a in scenes.positives {
        if left == 0 {
            break;
        }
        a.boxes.truncate(left);
        left -= a.boxes.len();
        frames.push(a);
    }
    ensure(left == 0, || format!("only {} planted positives rendered", 200 - left))?;
    let start = Instant::now();
    let miner = accept_all(4);
    let data = build_training_set(&frames, &scenes.negatives, &AugmentConfig::default(), &miner, &MiningConfig::default()).map_err(fail)?;
    let secs = start.elapsed().as_secs_f64();
    ensure(data.positive_counts == [200, 400, 800], || format!("counts {:?}", data.positive_counts))?;
    ensure(data.positives.len() == 800, || format!("{} positive crops", data.positives.len()))?;
    ensure(secs < 60.0, || format!("took {secs:.1}s"))?;

    // Other sizes, including a single box.
    let img = Image::filled(96, 96, &[0.3, 0.5, 0.7]);
    for n in [1usize, 7, 13] {
        let frames = vec![AnnotatedImage {
            image: img.clone(),
            boxes: (0..n).map(|i| BoundingBox::new(i as f64, 2.0, 64.0, 64.0).unwrap()).collect(),
        }];
        let d = build_training_set(&frames, std::slice::from_ref(&img), &AugmentConfig::default(), &miner, &MiningConfig::default()).map_err(fail)?;
        ensure(d.positive_counts == [n, 2 * n, 4 * n], || format!("n = {n}: counts {:?}", d.positive_counts))?;
    }
    Ok(format!("200 → 400 → 800 in {secs:.1}s; exact at n = 1, 7, 13"))
}

// 2 ---------------------------------------------------------------------

fn split_arithmetic() -> Verdict {
    let (train, val) = split_counts(17500, 0.1);
    ensure((train, val) == (15751, 1749), || format!("17500 → {train}/{val}"))?;
    let small = DatasetSpec {
        positives: vec![Image::filled(64, 64, &[0.5, 0.5, 0.5]); 13],
        negatives: vec![Image::filled(64, 64, &[0.1, 0.1, 0.1]); 8],
        positive_counts: [13, 13, 13],
        val_fraction: 0.1,
    };
    let (t, v) = small.split(3);
    let expect = split_counts(21, 0.1);
    ensure((t.len(), v.len()) == expect, || format!("21 samples split {}/{} instead of {expect:?}", t.len(), v.len()))?;
    for n in 1..2000usize {
        let (a, b) = split_counts(n, 0.1);
        ensure(a + b == n && b == (n - 1) / 10, || format!("n = {n}: {a}/{b}"))?;
    }
    Ok("17500 → 15751/1749".into())
}

// 3 ---------------------------------------------------------------------

fn reduced_model(seed: u64) -> CnnModel {
    let conv = |filters| LayerSpec::Conv {
        filters,
        kernel: 3,
        pad: 1,
        stride: 1,
    };
    let specs = [
        conv(3),
        LayerSpec::Relu,
        LayerSpec::MaxPool { window: 2, stride: 2 },
        conv(4),
        LayerSpec::Relu,
        LayerSpec::FullyConnected { units: 6 },
        LayerSpec::Relu,
        LayerSpec::FullyConnected { units: 2 },
        LayerSpec::Softmax,
    ];
    let mut m = CnnModel::new(Shape::new(3, 8, 8), &specs).unwrap();
    m.init_he(seed);
    let mut rng = ChaCha8Rng::seed_from_u64(mix(seed, 1));
    for (_, block) in m.parameters_mut() {
        for v in block.iter_mut() {
            *v += rng.random_range(-0.05..0.05);
        }
    }
    m
}

fn gradient_check() -> Verdict {
    let h = 1e-4;
    let mut worst = [0.0f64; 3];
    for seed in 0..20u64 {
        let mut m = reduced_model(seed);
        let mut rng = ChaCha8Rng::seed_from_u64(mix(seed, 2));
        let x = Tensor::new(m.input, (0..m.input.len()).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
        let label = rng.random_range(0..2usize);
        let (_, grads) = m.backward(&x, label).map_err(fail)?;
        for (b, (group, analytic)) in grads.blocks.iter().enumerate() {
            for (i, &a) in analytic.iter().enumerate() {
                let orig = m.parameters()[b].1[i];
                m.parameters_mut()[b].1[i] = orig + h;
                let up = cross_entropy(&m.forward(&x).unwrap(), label);
                m.parameters_mut()[b].1[i] = orig - h;
                let down = cross_entropy(&m.forward(&x).unwrap(), label);
                m.parameters_mut()[b].1[i] = orig;
                let numeric = (up - down) / (2.0 * h);
                let rel = (a - numeric).abs() / (a.abs() + numeric.abs()).max(1e-8);
                let g = match group {
                    ParamGroup::Conv => 0,
                    ParamGroup::FullyConnected => 1,
                    ParamGroup::Classifier => 2,
                };
                worst[g] = worst[g].max(rel);
            }
        }
    }
    let max = worst.iter().copied().fold(0.0, f64::max);
    let detail = format!("max relative error conv {:.1e}, fc {:.1e}, classifier {:.1e}", worst[0], worst[1], worst[2]);
    ensure(max <= 1e-3, || detail.clone())?;
    Ok(detail)
}

// 4 ---------------------------------------------------------------------

fn softmax_and_loss() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst_sum = 0.0f64;
    for _ in 0..10_000 {
        let k = rng.random_range(2..12);
        let scale = [1.0, 30.0, 700.0][rng.random_range(0..3)];
        let logits: Vec<f64> = (0..k).map(|_| rng.random_range(-scale..scale)).collect();
        let p = softmax(&logits);
        worst_sum = worst_sum.max((p.iter().sum::<f64>() - 1.0).abs());
        let q: f64 = rng.random_range(0.0..=1.0);
        for y in 0..2 {
            let l = bce_loss(&[1.0 - q, q], y);
            ensure(l >= 0.0 && l.is_finite(), || format!("BCE({q}, {y}) = {l}"))?;
        }
    }
    ensure(worst_sum <= 1e-9, || format!("softmax sums off by {worst_sum:e}"))?;
    for y in 0..2 {
        let l = bce_loss(&[0.5, 0.5], y);
        ensure((l - 2f64.ln()).abs() <= 1e-9, || format!("BCE(uniform, {y}) = {l}"))?;
    }
    let m = reduced_model(9);
    let out = m.forward(&Tensor::new(m.input, vec![0.25; m.input.len()]).unwrap()).map_err(fail)?;
    ensure((out.iter().sum::<f64>() - 1.0).abs() <= 1e-9, || "network output does not sum to 1".into())?;
    Ok(format!("worst softmax sum error {worst_sum:.1e}; BCE(uniform) = ln 2"))
}

// 5 ---------------------------------------------------------------------

fn transfer_protocol() -> Verdict {
    let desk = TrainingConfig::desk();
    let std = desk.finetune.init_std;
    let mut source = CnnModel::new(pednav_core::cnn::INPUT_SHAPE, &desk.architecture).map_err(fail)?;
    source.init_he(55);
    let mut draws: Vec<f64> = Vec::new();
    let mut seed = 0;
    while draws.len() < 10_000 || seed < 2 {
        let t = transfer_init(&source, 2, std, seed).map_err(fail)?;
        for (dst, src) in t.layers.iter().zip(&source.layers) {
            if dst.group == Some(ParamGroup::Conv) {
                let same = dst.weights.len() == src.weights.len()
                    && dst.weights.iter().zip(&src.weights).all(|(a, b)| a.to_bits() == b.to_bits())
                    && dst.bias.iter().zip(&src.bias).all(|(a, b)| a.to_bits() == b.to_bits());
                ensure(same, || "convolutional parameters differ from the source".into())?;
            }
        }
        for l in &t.layers {
            if matches!(l.group, Some(ParamGroup::FullyConnected | ParamGroup::Classifier)) {
                draws.extend(&l.weights);
            }
        }
        seed += 1;
    }
    let n = draws.len() as f64;
    let mean = draws.iter().sum::<f64>() / n;
    let var = draws.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    ensure((0.009..=0.011).contains(&var), || format!("FC weight variance {var:.5} over {} draws", draws.len()))?;
    Ok(format!("conv stage bit-equal; FC weight variance {var:.5} over {} draws", draws.len()))
}

// 6 ---------------------------------------------------------------------

fn cascade_correctness(slot: &mut Option<Trained>) -> Verdict {
    let start = Instant::now();
    let config = HarnessConfig::default();
    let trained = train_all(&config.training).map_err(fail)?;
    let models = Models {
        acf: trained.detector,
        cnn: Some(trained.cnn.model),
    };
    let train_secs = start.elapsed().as_secs_f64();
    let scenes = planted_scenes(config.eval.seed, 25);
    let records = run_scenes(&scenes, &models, &config.pipeline)?;
    let total = start.elapsed().as_secs_f64();
    let iou = config.eval.iou_threshold;
    let alone = evaluate_proposals(&records, f64::NEG_INFINITY, iou);
    let full = evaluate_detections(&records, iou);
    *slot = Some(Trained {
        models,
        config,
        scenes,
        records,
    });
    let reduction = 1.0 - full.fp_per_frame / alone.fp_per_frame;
    let drop = 100.0 * (alone.recall - full.recall);
    let detail = format!(
        "{} frames; FP/frame {:.3} → {:.3} ({:.0}% fewer); recall {:.4} → {:.4} (−{drop:.2} pp); training {train_secs:.0}s, total {total:.0}s",
        alone.frames,
        alone.fp_per_frame,
        full.fp_per_frame,
        100.0 * reduction,
        alone.recall,
        full.recall
    );
    ensure(alone.frames == 100, || detail.clone())?;
    ensure(full.fp_per_frame < alone.fp_per_frame && reduction >= 0.30, || detail.clone())?;
    ensure(drop <= 2.0, || detail.clone())?;
    ensure(alone.recall >= 0.95, || format!("proposal recall below 0.95: {detail}"))?;
    ensure(total < 600.0, || format!("over ten minutes: {detail}"))?;
    Ok(detail)
}

fn trained(slot: &Option<Trained>) -> Result<&Trained, String> {
    slot.as_ref().ok_or_else(|| "no trained models (criterion 6 did not train)".to_string())
}

// 7 ---------------------------------------------------------------------

fn threshold_speedup(t: &Trained) -> Verdict {
    let iou = t.config.eval.iou_threshold;
    let calibration = run_scenes(&planted_scenes(mix(t.config.eval.seed, 1), t.config.eval.calibration_scenes), &t.models, &t.config.pipeline)?;
    let threshold = calibrate_threshold(&true_positive_scores(&calibration, iou), t.config.eval.retain).map_err(fail)?;
    let mut cfg = t.config.pipeline.clone();
    cfg.cascade.score_threshold = threshold;
    let thresholded = run_scenes(&t.scenes, &t.models, &cfg)?;
    let report = BenchReport::new(threshold, &t.records, &thresholded).map_err(fail)?;
    let detail = format!(
        "threshold {threshold:.2}; CNN calls/frame {:.2} → {:.2}; CNN ms {:.2} → {:.2}",
        report.baseline.cnn_invocations.mean,
        report.thresholded.cnn_invocations.mean,
        report.baseline.cnn_time.mean * 1e3,
        report.thresholded.cnn_time.mean * 1e3
    );
    ensure(report.speedup_holds(), || detail.clone())?;
    ensure(detections_subset(&thresholded, &t.records), || format!("thresholded detections not a subset: {detail}"))?;
    print!("{}", report.to_table());
    Ok(detail)
}

// 8 ---------------------------------------------------------------------

/// Every window scored with every tree; no early rejection.
fn full_evaluation(pyr: &pednav_core::imageproc::Pyramid, model: &TreeEnsemble) -> Vec<Proposal> {
    let (cw, ch) = (model.window_width / model.shrink, model.window_height / model.shrink);
    let mut out = Vec::new();
    for (level, lvl) in pyr.levels.iter().enumerate() {
        let s = &lvl.stack;
        if s.width < cw || s.height < ch {
            continue;
        }
        for cy in 0..=s.height - ch {
            for cx in 0..=s.width - cw {
                let feature = |f: usize| {
                    let (c, rem) = (f / (cw * ch), f % (cw * ch));
                    s.get(c, cy + rem / cw, cx + rem % cw)
                };
                let score = model.trees.iter().fold(0.0, |acc, t| acc + t.eval(feature));
                if score > model.accept_threshold {
                    let raw = BoundingBox {
                        x: (cx * model.shrink) as f64 / lvl.scale_x,
                        y: (cy * model.shrink) as f64 / lvl.scale_y,
                        w: model.window_width as f64 / lvl.scale_x,
                        h: model.window_height as f64 / lvl.scale_y,
                    };
                    if let Some(bbox) = raw.clip(pyr.image_width as f64, pyr.image_height as f64) {
                        out.push(Proposal { bbox, score, level });
                    }
                }
            }
        }
    }
    out
}

fn acf_oracle(t: &Trained) -> Verdict {
    let model = &t.models.acf;
    ensure(model.cascade_reject.is_finite(), || "detector has no soft cascade".into())?;
    let cfg = PyramidConfig {
        scales_per_octave: t.config.pipeline.cascade.scales_per_octave,
        shrink: model.shrink,
        window_width: model.window_width,
        window_height: model.window_height,
    };
    let params = PlantedParams::default();
    let (mut fast, mut full) = (0usize, 0usize);
    for i in 0..20u64 {
        let scene = planted(mix(0xAC0F, i), &params);
        let img = render_frame(&scene, i as usize % scene.frames).map_err(fail)?.image;
        let pyr = build_pyramid(&img, &cfg).map_err(fail)?;
        let cascade = detect(&pyr, model, 1);
        let oracle = full_evaluation(&pyr, model);
        for p in &cascade {
            ensure(oracle.iter().any(|o| o.level == p.level && o.bbox == p.bbox && o.score == p.score), || {
                format!("frame {i}: cascade window {:?} (score {}) missing from the oracle", p.bbox, p.score)
            })?;
        }
        fast += cascade.len();
        full += oracle.len();
    }
    Ok(format!("{fast} cascade windows ⊆ {full} oracle windows, scores identical"))
}

// 9 ---------------------------------------------------------------------

fn precedes(a: &Proposal, b: &Proposal) -> std::cmp::Ordering {
    b.score.total_cmp(&a.score).then(a.bbox.x.total_cmp(&b.bbox.x)).then(a.bbox.y.total_cmp(&b.bbox.y))
}

/// Repeatedly takes the best remaining box and discards everything it overlaps.
fn reference_nms(props: &[Proposal], overlap: f64) -> Vec<Proposal> {
    let mut remaining = props.to_vec();
    let mut out = Vec::new();
    while let Some((i, _)) = remaining.iter().enumerate().min_by(|a, b| precedes(a.1, b.1)) {
        let best = remaining.remove(i);
        remaining.retain(|p| p.bbox.iou(&best.bbox) <= overlap);
        out.push(best);
    }
    out
}

fn nms_oracle() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut kept = 0usize;
    for set in 0..1000 {
        let n = rng.random_range(0..60);
        let props: Vec<Proposal> = (0..n)
            .map(|_| {
                let w = rng.random_range(4..40) as f64;
                Proposal {
                    bbox: BoundingBox::new(rng.random_range(0..60) as f64, rng.random_range(0..60) as f64, w, w * rng.random_range(1.0..2.5)).unwrap(),
                    score: rng.random_range(0..12) as f64 * 0.5,
                    level: rng.random_range(0..4),
                }
            })
            .collect();
        let overlap = [0.3, 0.5, 0.65][set % 3];
        let got = nms(&props, overlap);
        let want = reference_nms(&props, overlap);
        ensure(got == want, || format!("set {set}: {} kept vs {} in the reference", got.len(), want.len()))?;
        kept += got.len();
    }
    Ok(format!("1000 sets identical ({kept} boxes kept)"))
}

// 10 --------------------------------------------------------------------

fn kalman_properties() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut worst_eig = f64::INFINITY;
    let mut cycles = 0;
    for _ in 0..10 {
        let mut s = KalmanState::at_rest(Vector2::new(rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0)), 0.3, 2.0);
        for _ in 0..1000 {
            s = predict(&s, rng.random_range(0.01..0.5), rng.random_range(0.0..3.0));
            let a = Matrix2::new(rng.random_range(-0.3..0.3), rng.random_range(-0.3..0.3), rng.random_range(-0.3..0.3), rng.random_range(-0.3..0.3));
            let r = a * a.transpose() + Matrix2::identity() * rng.random_range(1e-4..0.05);
            let z = s.position() + Vector2::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
            s = update(&s, &z, &r).map_err(fail)?;
            let p: Matrix4<f64> = s.covariance;
            ensure(p == p.transpose(), || format!("cycle {cycles}: covariance not symmetric"))?;
            let eig = p.symmetric_eigen().eigenvalues;
            let (lo, hi) = (eig.min(), eig.max());
            ensure(lo >= -1e-12 * hi.max(1.0), || format!("cycle {cycles}: eigenvalue {lo:e}"))?;
            worst_eig = worst_eig.min(lo);
            cycles += 1;
        }
    }
    let cfg = TrackerConfig::default();
    let r = Matrix2::identity() * cfg.measurement_noise.powi(2);
    let dt = 0.1;
    let mut worst_v = 0.0f64;
    for _ in 0..100 {
        let p0 = Vector2::new(rng.random_range(0.0..8.0), rng.random_range(0.0..6.0));
        let heading: f64 = rng.random_range(0.0..std::f64::consts::TAU);
        let v = Vector2::new(heading.cos(), heading.sin()) * rng.random_range(0.2..1.8);
        let mut s = KalmanState::at_rest(p0, cfg.measurement_noise, cfg.initial_velocity_std);
        for k in 1..=20 {
            s = predict(&s, dt, cfg.process_noise);
            s = update(&s, &(p0 + v * (k as f64 * dt)), &r).map_err(fail)?;
        }
        worst_v = worst_v.max((s.velocity() - v).norm());
    }
    ensure(worst_v < 0.1, || format!("velocity error {worst_v:.3} m/s at frame 20"))?;
    Ok(format!("{cycles} cycles symmetric PSD (min eigenvalue {worst_eig:.1e}); velocity error ≤ {worst_v:.4} m/s at frame 20"))
}

// 11 --------------------------------------------------------------------

fn gaussian(t: &KalmanState, z: &Vector2<f64>, r: &Matrix2<f64>) -> f64 {
    let (y, s) = innovation(t, z, r);
    let m2 = (y.transpose() * s.try_inverse().unwrap() * y)[0];
    (-0.5 * m2).exp() / (2.0 * std::f64::consts::PI * s.determinant().sqrt())
}

fn association() -> Verdict {
    let cfg = JpdaConfig::default();
    let gate = TrackerConfig::default().gate;
    let r = Matrix2::identity() * 0.01;
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for case in 0..500 {
        let nt = rng.random_range(0..6);
        let tracks: Vec<KalmanState> = (0..nt)
            .map(|i| {
                let mut s = KalmanState::at_rest(Vector2::new(12.0 * i as f64, rng.random_range(-1.0..1.0)), 0.1, 1.0);
                s.covariance += Matrix4::from_diagonal(&Vector4::new(0.01, 0.01, 0.0, 0.0)) * rng.random_range(0.0..2.0);
                s
            })
            .collect();
        let mut dets = Vec::new();
        for t in &tracks {
            if rng.random_bool(0.8) {
                dets.push(t.position() + Vector2::new(rng.random_range(-0.1..0.1), rng.random_range(-0.1..0.1)));
            }
        }
        for _ in 0..rng.random_range(0..3) {
            dets.push(Vector2::new(rng.random_range(-50.0..80.0), rng.random_range(30.0..60.0)));
        }
        let nn = associate_nn(&tracks, &dets, &r, gate);
        let jp = associate_nnjpda(&tracks, &dets, &r, gate, &cfg);
        ensure(nn == jp.assignment, || format!("case {case}: {nn:?} vs {:?}", jp.assignment))?;
    }

    // Two tracks, both gating both detections.
    let tracks = [KalmanState::at_rest(Vector2::new(0.0, 0.0), 0.3, 1.0), KalmanState::at_rest(Vector2::new(0.5, 0.0), 0.3, 1.0)];
    let dets = [Vector2::new(0.2, 0.1), Vector2::new(0.35, -0.05)];
    let r = Matrix2::identity() * 0.04;
    let out = associate_nnjpda(&tracks, &dets, &r, gate, &cfg);
    let pg = 1.0 - (-gate * gate / 2.0).exp();
    let miss = 1.0 - cfg.detection_probability * pg;
    let hit = |t: usize, d: usize| cfg.detection_probability * gaussian(&tracks[t], &dets[d], &r) / cfg.clutter_density;
    // (detection of track 0, detection of track 1); 2 marks a miss.
    let events: [(usize, usize, f64); 7] = [
        (2, 2, miss * miss),
        (0, 2, hit(0, 0) * miss),
        (1, 2, hit(0, 1) * miss),
        (2, 0, miss * hit(1, 0)),
        (2, 1, miss * hit(1, 1)),
        (0, 1, hit(0, 0) * hit(1, 1)),
        (1, 0, hit(0, 1) * hit(1, 0)),
    ];
    let total: f64 = events.iter().map(|e| e.2).sum();
    let mut expected = [[0.0; 3]; 2];
    for (a, b, w) in events {
        expected[0][a] += w / total;
        expected[1][b] += w / total;
    }
    ensure(out.events == 7, || format!("{} joint events enumerated", out.events))?;
    let mut worst = 0.0f64;
    for (got, want) in out.probabilities.iter().zip(&expected) {
        for (g, w) in got.iter().zip(want) {
            worst = worst.max((g - w).abs());
        }
    }
    ensure(worst <= 1e-9, || format!("marginals differ by {worst:e}"))?;
    Ok(format!("NN = NNJPDA on 500 unambiguous cases; 2×2 marginals within {worst:.1e}"))
}

// 12 --------------------------------------------------------------------

fn homography(t: Option<&Trained>) -> Verdict {
    let cam = default_camera();
    let (w, h) = (320, 240);
    let grid: Vec<WorldPoint> = (0..6).flat_map(|i| (0..5).map(move |j| WorldPoint::new(1.0 + 1.2 * i as f64, 0.5 + 1.1 * j as f64))).collect();
    let cal = calibrate_homography(&cam.correspondences(&grid, w, h)).map_err(fail)?;
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let mut worst = 0.0f64;
    let mut held_out = 0;
    while held_out < 500 {
        let p = WorldPoint::new(rng.random_range(0.0..8.0), rng.random_range(0.0..6.0));
        let Some(c) = cam.correspondences(&[p], w, h).pop() else { continue };
        let q = project_to_floor((c.u, c.v), &cal.homography).map_err(fail)?;
        worst = worst.max(q.distance(&p));
        held_out += 1;
    }
    ensure(worst < 1e-6, || format!("held-out projection error {worst:e} m"))?;

    let t = t.ok_or_else(|| format!("held-out error {worst:.1e} m, but no trained models for the detection check"))?;
    let mut errors = Vec::new();
    let mut k = 0;
    for scene in &t.scenes {
        let hom = scene.homography().map_err(fail)?;
        for _ in 0..scene.frames {
            let r = &t.records[k];
            k += 1;
            let dets: Vec<_> = r.detections.iter().map(|d| (d.bbox, d.score)).collect();
            for (o, (b, _)) in match_frame(&r.ground_truth, &dets, t.config.eval.iou_threshold).into_iter().zip(&dets) {
                if let Outcome::TruePositive(g) = o {
                    let p = project_to_floor(foot_point(b), &hom).map_err(fail)?;
                    errors.push(p.distance(&r.ground_truth[g].world));
                }
            }
        }
    }
    ensure(!errors.is_empty(), || "no matched detections".into())?;
    let mean = errors.iter().sum::<f64>() / errors.len() as f64;
    let max = errors.iter().copied().fold(0.0, f64::max);
    let detail = format!("held-out error {worst:.1e} m; world error over {} detections mean {mean:.4} m (max {max:.3} m)", errors.len());
    ensure(mean < 0.05, || detail.clone())?;
    Ok(detail)
}

// 13 --------------------------------------------------------------------

/// Plain Dijkstra over the same move set: eight neighbours, no corner cutting.
fn dijkstra(cm: &CostMap, start: usize, goal: usize) -> f64 {
    let g = &cm.grid;
    let mut dist = vec![f64::INFINITY; g.len()];
    let mut done = vec![false; g.len()];
    dist[start] = 0.0;
    while let Some(u) = (0..g.len()).filter(|i| !done[*i] && dist[*i].is_finite()).min_by(|a, b| dist[*a].total_cmp(&dist[*b])) {
        if u == goal {
            break;
        }
        done[u] = true;
        let (x, y) = g.coords(u);
        for dx in -1isize..=1 {
            for dy in -1isize..=1 {
                let (nx, ny) = (x as isize + dx, y as isize + dy);
                if (dx, dy) == (0, 0) || nx < 0 || ny < 0 || nx >= g.width as isize || ny >= g.height as isize {
                    continue;
                }
                let (nx, ny) = (nx as usize, ny as usize);
                let diagonal = dx != 0 && dy != 0;
                if g.is_occupied(nx, ny) || (diagonal && (g.is_occupied(nx, y) || g.is_occupied(x, ny))) {
                    continue;
                }
                let n = g.index(nx, ny);
                let len = if diagonal { std::f64::consts::SQRT_2 } else { 1.0 };
                let cand = dist[u] + len * g.resolution * (1.0 + cm.human[n]);
                if cand < dist[n] {
                    dist[n] = cand;
                }
            }
        }
    }
    dist[goal]
}

fn astar_optimality() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let (mut found, mut blocked) = (0, 0);
    for case in 0..200 {
        let mut grid = OccupancyGrid::new(20, 20, 0.1, WorldPoint::new(0.0, 0.0)).map_err(fail)?;
        let density = rng.random_range(0.0..0.4);
        for y in 0..20 {
            for x in 0..20 {
                grid.set_occupied(x, y, rng.random_bool(density));
            }
        }
        let human: Vec<f64> = (0..grid.len()).map(|_| if rng.random_bool(0.5) { rng.random_range(0.0..8.0) } else { 0.0 }).collect();
        let free: Vec<usize> = (0..grid.len()).filter(|i| !grid.occupied_by_index(*i)).collect();
        if free.len() < 2 {
            continue;
        }
        let s = free[rng.random_range(0..free.len())];
        let g = free[rng.random_range(0..free.len())];
        let cm = CostMap::new(grid, human).map_err(fail)?;
        let (sx, sy) = cm.grid.coords(s);
        let (gx, gy) = cm.grid.coords(g);
        let plan = plan_astar(&cm, cm.grid.center(sx, sy), cm.grid.center(gx, gy)).map_err(fail)?;
        let oracle = dijkstra(&cm, s, g);
        match plan {
            Plan::NoPath => {
                ensure(oracle.is_infinite(), || format!("case {case}: A* found no path, oracle cost {oracle}"))?;
                blocked += 1;
            }
            Plan::Found(p) => {
                ensure(p.cost == oracle, || format!("case {case}: A* {} vs oracle {oracle}", p.cost))?;
                for w in p.cells.windows(2) {
                    let a = cm.grid.index(w[0].0, w[0].1);
                    let b = cm.grid.index(w[1].0, w[1].1);
                    ensure(neighbors(&cm.grid, a).any(|(n, _)| n == b), || format!("case {case}: path takes an illegal step"))?;
                }
                found += 1;
            }
        }
    }
    Ok(format!("{found} path costs equal the oracle, {blocked} unreachable agree"))
}

fn binomial_upper_tail(k: usize, n: usize) -> f64 {
    let mut total = 0.0;
    for i in k..=n {
        let mut c = 1.0f64;
        for j in 0..i {
            c *= (n - j) as f64 / (j + 1) as f64;
        }
        total += c * 0.5f64.powi(n as i32);
    }
    total
}

fn planner(t: Option<&Trained>) -> Verdict {
    let optimal = astar_optimality()?;
    let t = t.ok_or_else(|| format!("{optimal}; no trained models for the scenarios"))?;

    let walker = scenarios::walker();
    let recs = run_pipeline(&walker, &t.models, &t.config.pipeline).map_err(fail)?;
    let person = &walker.people[0];
    let (mut left, mut beside) = (0usize, 0usize);
    for r in &recs {
        let time = walker.time_of(r.frame);
        let at = person.position_at(time);
        let (vx, vy) = person.velocity_at(time);
        let speed = vx.hypot(vy);
        if speed < 1e-9 {
            continue;
        }
        let (dx, dy) = (r.robot.x - at.x, r.robot.y - at.y);
        let along = (dx * vx + dy * vy) / speed;
        if along.abs() <= 1.0 {
            beside += 1;
            if vx * dy - vy * dx > 0.0 {
                left += 1;
            }
        }
    }
    let last = recs.last().ok_or("walker produced no frames")?;
    let end = person.position_at(walker.time_of(last.frame));
    let ahead = last.robot.x > end.x;
    let p = binomial_upper_tail(left, beside);
    let walk = format!("overtake on the left in {left}/{beside} side-by-side frames (p = {p:.1e})");
    ensure(ahead && beside >= 5 && p < 0.05, || format!("{walk}, robot ahead at the end: {ahead}"))?;

    let mut triggers: Vec<u64> = Vec::new();
    let mut trigger_frames = 0;
    for r in recs.iter().filter(|r| !r.replan_triggers.is_empty()) {
        trigger_frames += 1;
        let at = person.position_at(walker.time_of(r.frame));
        let nearest = r.tracks.iter().min_by(|a, b| a.position.distance(&at).total_cmp(&b.position.distance(&at))).map(|tr| tr.id);
        for id in &r.replan_triggers {
            ensure(Some(*id) == nearest, || format!("frame {}: replan triggered by track {id}, not the walker's", r.frame))?;
            if !triggers.contains(id) {
                triggers.push(*id);
            }
        }
    }
    ensure(triggers.len() == 1, || format!("replans triggered by tracks {triggers:?}"))?;
    let walk = format!("{walk}; the walker's track triggered {trigger_frames} replans");

    let standing = &scenarios::standing();
    let recs = run_pipeline(standing, &t.models, &t.config.pipeline).map_err(fail)?;
    let sigma = t.config.pipeline.han.sigma;
    let clearance = recs
        .iter()
        .flat_map(|r| standing.people.iter().map(move |p| p.position_at(standing.time_of(r.frame)).distance(&r.robot)))
        .fold(f64::INFINITY, f64::min);
    let last = recs.last().ok_or("standing produced no frames")?;
    let to_goal = last.robot.distance(&standing.robot.goal);
    let stand = format!("standing clearance {clearance:.2} m (σ₀ = {sigma}), final distance to goal {to_goal:.3} m");
    ensure(clearance >= sigma, || stand.clone())?;
    ensure(to_goal <= standing.world.resolution, || stand.clone())?;
    Ok(format!("{optimal}; {walk}; {stand}"))
}

// 14 --------------------------------------------------------------------

fn determinism(t: &Trained) -> Verdict {
    let dir = tempfile::tempdir().map_err(fail)?;
    let acf = dir.path().join("acf.bin");
    let cnn = dir.path().join("cnn.bin");
    t.models.acf.save(&acf).map_err(fail)?;
    t.models.cnn.as_ref().ok_or("no CNN")?.save(&cnn).map_err(fail)?;
    let mut script = scenarios::walker();
    script.frames = 40;
    let script_path = dir.path().join("walker.txt");
    std::fs::write(&script_path, script.to_text()).map_err(fail)?;
    let run = |out: &FsPath| -> Result<(), String> {
        let status = Command::new(env!("CARGO_BIN_EXE_pednav"))
            .arg("simulate")
            .arg("--scenario")
            .arg(&script_path)
            .arg("--acf")
            .arg(&acf)
            .arg("--cnn")
            .arg(&cnn)
            .arg("--out")
            .arg(out)
            .arg("--records")
            .status()
            .map_err(fail)?;
        ensure(status.success(), || format!("simulate exited with {status}"))
    };
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    run(&a)?;
    run(&b)?;
    let mut lines = 0;
    for name in ["detections.txt", "tracks.txt", "paths.csv", "records.jsonl"] {
        let x = std::fs::read_to_string(a.join(name)).map_err(fail)?;
        let y = std::fs::read_to_string(b.join(name)).map_err(fail)?;
        ensure(x == y, || format!("{name} differs between runs"))?;
        ensure(!x.is_empty(), || format!("{name} is empty"))?;
        lines += x.lines().count();
    }
    Ok(format!("two simulate runs identical over {lines} record lines"))
}

fn main() -> ExitCode {
    let mut suite = Suite { failed: Vec::new() };
    let mut models: Option<Trained> = None;
    suite.run(1, "augmentation cardinalities", augmentation_cardinalities);
    suite.run(2, "split arithmetic", split_arithmetic);
    suite.run(3, "CNN gradient check", gradient_check);
    suite.run(4, "softmax and loss invariants", softmax_and_loss);
    suite.run(5, "transfer protocol", transfer_protocol);
    suite.run(6, "cascade correctness", || cascade_correctness(&mut models));
    suite.run(7, "threshold speedup", || threshold_speedup(trained(&models)?));
    suite.run(8, "ACF oracle equivalence", || acf_oracle(trained(&models)?));
    suite.run(9, "NMS oracle equivalence", nms_oracle);
    suite.run(10, "Kalman properties", kalman_properties);
    suite.run(11, "association", association);
    suite.run(12, "homography", || homography(models.as_ref()));
    suite.run(13, "planner", || planner(models.as_ref()));
    suite.run(14, "end-to-end determinism", || determinism(trained(&models)?));
    if suite.failed.is_empty() {
        println!("acceptance: all 14 criteria passed");
        ExitCode::SUCCESS
    } else {
        println!("acceptance: failed criteria {:?}", suite.failed);
        ExitCode::FAILURE
    }
}
