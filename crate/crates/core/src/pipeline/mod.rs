//! Experiment driver behind the `flippoint` binary.
//!
//! Each [`Stage`] reads the artifacts of earlier stages from the output
//! directory, writes its own CSVs there, and finishes with a
//! `manifest_<stage>.txt` listing every output with its SHA-256. A missing
//! input fails the stage before anything is written.

mod config;
mod io;

use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

pub use config::{derive_seed, ExperimentConfig};
pub use io::{files, read_dataset_csv, sha256_file, write_dataset_csv, write_image_records, write_ppm, Manifest};

use crate::adversarial::{compare_attack_vs_flip, constrained_loss_attack, flip_distance_histogram, write_attack_csv, write_histogram_csv, AttackConfig, AttackRow};
use crate::features::{apply_selector, haar3d_forward, haar3d_inverse, load_cifar_batch, scatter_selector, select_coefficients, CoefficientSelector, LabeledImages, WaveletCoeffs, COEFF_LEN};
use crate::flip::{closest_flip, compare_batch, write_flip_csv, Comparison, FlipOptions, FlipQuery, ImageContext};
use crate::net::{read_checkpoint, write_checkpoint};
use crate::path::{profile_to_flip, sample_line, LineSegment, PathOptions};
use crate::region::region_report;
use crate::train::{train_with_eval, TrainConfig};
use crate::util::{fmt_f64, fmt_opt};
use crate::{Dataset, Error, Network, Result};
use io::{create, out_path, require};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Prepare,
    Train,
    Recon,
    Flip,
    Path,
    Regions,
    Attack,
}

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Stage::Prepare => "prepare",
            Stage::Train => "train",
            Stage::Recon => "recon",
            Stage::Flip => "flip",
            Stage::Path => "path",
            Stage::Regions => "regions",
            Stage::Attack => "attack",
        }
    }
}

/// What a stage produced.
#[derive(Debug, Clone, PartialEq)]
pub struct StageOutcome {
    pub manifest: Manifest,
    /// Human-readable `key: value` lines.
    pub summary: Vec<String>,
}

fn producer(stage: Stage) -> String {
    format!("flippoint {}", stage.name())
}

/// Runs one stage.
pub fn run(stage: Stage, cfg: &ExperimentConfig) -> Result<StageOutcome> {
    cfg.validate()?;
    fs::create_dir_all(&cfg.out_dir)?;
    let seed = derive_seed(cfg.seed, stage.name());
    let (written, summary) = match stage {
        Stage::Prepare => cmd_prepare(cfg)?,
        Stage::Train => cmd_train(cfg, seed)?,
        Stage::Recon => cmd_recon(cfg)?,
        Stage::Flip => cmd_flip(cfg, seed)?,
        Stage::Path => cmd_path(cfg, seed)?,
        Stage::Regions => cmd_regions(cfg, seed)?,
        Stage::Attack => cmd_attack(cfg, seed)?,
    };
    let manifest = Manifest::write(stage.name(), cfg.seed, seed, cfg.digest(), &cfg.out_dir, &written)?;
    Ok(StageOutcome { manifest, summary })
}

/// Runs every stage in order.
pub fn run_all(cfg: &ExperimentConfig) -> Result<Vec<StageOutcome>> {
    [
        Stage::Prepare,
        Stage::Train,
        Stage::Recon,
        Stage::Flip,
        Stage::Path,
        Stage::Regions,
        Stage::Attack,
    ]
    .into_iter()
    .map(|s| run(s, cfg))
    .collect()
}

type Written = (Vec<String>, Vec<String>);

/// Loads and concatenates raw batches, keeping at most `cap` images.
fn load_batches(cfg: &ExperimentConfig, names: &[String], cap: usize) -> Result<(LabeledImages, Vec<u8>)> {
    let mut all = LabeledImages::default();
    for name in names {
        let path = cfg.data_dir.join(name);
        require(&path, "the CIFAR-10 binary distribution (cifar-10-binary.tar.gz)")?;
        let raw = fs::read(&path)?;
        let batch = load_cifar_batch(&raw, cfg.classes, &path.display().to_string())?;
        all.images.extend(batch.images);
        all.labels.extend(batch.labels);
        all.records.extend(batch.records);
        if cap > 0 && all.images.len() >= cap {
            break;
        }
    }
    if cap > 0 {
        all.images.truncate(cap);
        all.labels.truncate(cap);
        all.records.truncate(cap);
    }
    let raw_labels = all
        .labels
        .iter()
        .map(|&l| if l == 0 { cfg.classes.0 } else { cfg.classes.1 })
        .collect();
    Ok((all, raw_labels))
}

fn coefficient_matrix(coeffs: &[WaveletCoeffs]) -> DMatrix<f64> {
    DMatrix::from_fn(coeffs.len(), COEFF_LEN, |r, c| coeffs[r].as_slice()[c])
}

fn features_dataset(cfg: &ExperimentConfig, coeffs: &[WaveletCoeffs], imgs: &LabeledImages, sel: &CoefficientSelector, tag: &str) -> Result<Dataset> {
    let rows: Vec<DVector<f64>> = coeffs.iter().map(|w| apply_selector(w, sel)).collect();
    let features = DMatrix::from_fn(rows.len(), sel.len(), |r, c| rows[r][c]);
    let provenance = imgs.records.iter().map(|r| format!("{tag}:{r}")).collect();
    Dataset::new(features, imgs.labels.clone(), cfg.class_names.clone(), provenance)
}

fn cmd_prepare(cfg: &ExperimentConfig) -> Result<Written> {
    let (train, _) = load_batches(cfg, &cfg.train_files, cfg.max_train)?;
    let (test, test_raw_labels) = load_batches(cfg, &cfg.test_files, cfg.max_test)?;
    if train.images.is_empty() {
        return Err(Error::InvalidInput("no training images of the selected classes".into()));
    }
    let train_coeffs: Vec<WaveletCoeffs> = train.images.par_iter().map(haar3d_forward).collect();
    let test_coeffs: Vec<WaveletCoeffs> = test.images.par_iter().map(haar3d_forward).collect();
    let sel = select_coefficients(coefficient_matrix(&train_coeffs), cfg.k)?;

    let dir = &cfg.out_dir;
    sel.write_text(create(&out_path(dir, files::SELECTOR))?)?;
    let train_ds = features_dataset(cfg, &train_coeffs, &train, &sel, "train")?;
    let test_ds = features_dataset(cfg, &test_coeffs, &test, &sel, "test")?;
    write_dataset_csv(&train_ds, &out_path(dir, files::TRAIN_FEATURES))?;
    write_dataset_csv(&test_ds, &out_path(dir, files::TEST_FEATURES))?;
    write_image_records(&test.images, &test_raw_labels, &out_path(dir, files::TEST_IMAGES))?;
    Ok((
        vec![
            files::SELECTOR.into(),
            files::TRAIN_FEATURES.into(),
            files::TEST_FEATURES.into(),
            files::TEST_IMAGES.into(),
        ],
        vec![
            format!("train images: {}", train_ds.len()),
            format!("test images: {}", test_ds.len()),
            format!("coefficients: {}", sel.len()),
        ],
    ))
}

fn load_features(cfg: &ExperimentConfig, name: &str) -> Result<Dataset> {
    let path = out_path(&cfg.out_dir, name);
    require(&path, &producer(Stage::Prepare))?;
    read_dataset_csv(&path, cfg.class_names.clone())
}

fn load_model(cfg: &ExperimentConfig) -> Result<Network> {
    let path = out_path(&cfg.out_dir, files::MODEL);
    require(&path, &producer(Stage::Train))?;
    read_checkpoint(io::open(&path)?, &path.display().to_string())
}

fn cmd_train(cfg: &ExperimentConfig, seed: u64) -> Result<Written> {
    let train = load_features(cfg, files::TRAIN_FEATURES)?;
    let test = load_features(cfg, files::TEST_FEATURES)?;
    let mut widths = vec![train.dim()];
    widths.extend(&cfg.hidden);
    widths.push(2);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let init = Network::random(&widths, cfg.sigma_init, &mut rng)?;
    let tc = TrainConfig {
        learning_rate: cfg.learning_rate,
        dropout_rate: cfg.dropout,
        epochs: cfg.epochs,
        batch_size: cfg.batch_size,
        seed,
        train_sigma: cfg.train_sigma,
        ..TrainConfig::default()
    };
    let (net, report) = train_with_eval(&init, &train, (!test.is_empty()).then_some(&test), &tc)?;

    let dir = &cfg.out_dir;
    let mut ckpt = create(&out_path(dir, files::MODEL))?;
    write_checkpoint(&net, &mut ckpt)?;
    std::io::Write::flush(&mut ckpt)?;
    report.write_csv(create(&out_path(dir, files::TRAIN_LOSS))?)?;
    let mut w = csv::Writer::from_writer(create(&out_path(dir, files::TRAIN_SUMMARY))?);
    w.write_record(["epochs", "final_loss", "train_accuracy", "test_accuracy", "sigmas"])?;
    let sigmas: Vec<String> = net.layers()[..net.layers().len() - 1].iter().map(|l| fmt_f64(l.sigma)).collect();
    w.write_record([
        cfg.epochs.to_string(),
        fmt_opt(report.epoch_losses.last().copied()),
        fmt_f64(report.train_accuracy),
        fmt_opt(report.test_accuracy),
        sigmas.join(" "),
    ])?;
    w.flush()?;
    Ok((
        vec![files::MODEL.into(), files::TRAIN_LOSS.into(), files::TRAIN_SUMMARY.into()],
        vec![
            format!("train accuracy: {:.4}", report.train_accuracy),
            format!("test accuracy: {}", report.test_accuracy.map_or("n/a".into(), |a| format!("{a:.4}"))),
        ],
    ))
}

fn cmd_recon(cfg: &ExperimentConfig) -> Result<Written> {
    let k_max = cfg.recon_ks.iter().copied().max().unwrap_or(0);
    let (train, _) = load_batches(cfg, &cfg.train_files, cfg.recon_train_subset)?;
    let (test, _) = load_batches(cfg, &cfg.test_files, cfg.recon_image + 1)?;
    let image = test.images.get(cfg.recon_image).ok_or_else(|| {
        Error::InvalidParameter(format!("recon_image {} beyond the {} test images", cfg.recon_image, test.images.len()))
    })?;
    let coeffs: Vec<WaveletCoeffs> = train.images.par_iter().map(haar3d_forward).collect();
    let sel = select_coefficients(coefficient_matrix(&coeffs), k_max)?;
    let full = haar3d_forward(image);

    let dir = &cfg.out_dir;
    let mut written = vec!["recon_original.ppm".to_string()];
    write_ppm(image, &out_path(dir, "recon_original.ppm"))?;
    let mut w = csv::Writer::from_writer(create(&out_path(dir, files::RECON_ERRORS))?);
    w.write_record(["k", "rms_error", "max_pixel_violation"])?;
    for &k in &cfg.recon_ks {
        let sub = sel.truncated(k);
        let kept = scatter_selector(&apply_selector(&full, &sub), &sub, &WaveletCoeffs::zeros())?;
        let recon = haar3d_inverse(&kept);
        let name = format!("recon_k{k}.ppm");
        write_ppm(&recon, &out_path(dir, &name))?;
        written.push(name);
        let rms = (image.pixels().iter().zip(recon.pixels()).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / image.pixels().len() as f64).sqrt();
        w.write_record([k.to_string(), fmt_f64(rms), fmt_f64(recon.bound_violation())])?;
    }
    w.flush()?;
    written.push(files::RECON_ERRORS.into());
    Ok((written, vec![format!("reconstructions: {:?}", cfg.recon_ks)]))
}

fn flip_options(cfg: &ExperimentConfig, seed: u64) -> FlipOptions {
    FlipOptions {
        restarts: cfg.flip_restarts,
        max_outer: cfg.flip_max_outer,
        max_step: cfg.flip_max_step,
        seed,
        ..FlipOptions::default()
    }
}

fn mean(xs: impl Iterator<Item = f64>) -> Option<f64> {
    let (s, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    (n > 0).then(|| s / n as f64)
}

fn cmd_flip(cfg: &ExperimentConfig, seed: u64) -> Result<Written> {
    let net = load_model(cfg)?;
    let test = load_features(cfg, files::TEST_FEATURES)?;
    let sel_path = out_path(&cfg.out_dir, files::SELECTOR);
    require(&sel_path, &producer(Stage::Prepare))?;
    let sel = CoefficientSelector::read_text(io::open(&sel_path)?, &sel_path.display().to_string())?;
    let img_path = out_path(&cfg.out_dir, files::TEST_IMAGES);
    require(&img_path, &producer(Stage::Prepare))?;
    let images = load_cifar_batch(&fs::read(&img_path)?, cfg.classes, &img_path.display().to_string())?;
    if images.images.len() != test.len() {
        return Err(Error::InvalidInput(format!(
            "{} holds {} images but {} has {} rows",
            files::TEST_IMAGES,
            images.images.len(),
            files::TEST_FEATURES,
            test.len()
        )));
    }

    let n = cfg.flip_count.min(test.len());
    let bases: Vec<WaveletCoeffs> = images.images[..n].par_iter().map(haar3d_forward).collect();
    let mut queries = Vec::with_capacity(n);
    for (i, base) in bases.iter().enumerate() {
        let x = test.sample(i);
        let pred = net.predict(&x)?;
        queries.push(FlipQuery {
            id: i,
            x,
            pair: (pred, 1 - pred),
            image: Some(ImageContext { selector: &sel, base }),
        });
    }
    let opts = flip_options(cfg, seed);
    let results: Vec<Comparison> = compare_batch(&net, &queries, &opts).into_iter().collect::<Result<_>>()?;

    let dir = &cfg.out_dir;
    let rows: Vec<(usize, &Comparison)> = results.iter().enumerate().collect();
    write_flip_csv(&rows, create(&out_path(dir, files::FLIPS))?)?;

    let converged: Vec<&Comparison> = results.iter().filter(|c| c.closest.is_converged()).collect();
    let legit = converged.iter().filter(|c| c.closest.legitimate_image == Some(true)).count();
    let beta_mean = mean(converged.iter().filter_map(|c| c.metrics.beta));
    let ratio_mean = mean(converged.iter().filter_map(|c| c.metrics.directional_ratio));
    let angle_mean = mean(converged.iter().filter_map(|c| c.metrics.angle_deg));
    let box_exits = results
        .iter()
        .filter(|c| c.directional.as_ref().is_some_and(|d| d.status == crate::flip::FlipStatus::BoxExit))
        .count();
    let frac = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };

    let mut w = csv::Writer::from_writer(create(&out_path(dir, files::FLIP_SUMMARY))?);
    w.write_record([
        "queries",
        "converged",
        "converged_fraction",
        "legitimate_fraction",
        "beta_mean",
        "directional_ratio_mean",
        "angle_deg_mean",
        "directional_box_exit_fraction",
    ])?;
    w.write_record([
        n.to_string(),
        converged.len().to_string(),
        fmt_f64(frac(converged.len(), n)),
        fmt_f64(frac(legit, converged.len())),
        fmt_opt(beta_mean),
        fmt_opt(ratio_mean),
        fmt_opt(angle_mean),
        fmt_f64(frac(box_exits, n)),
    ])?;
    w.flush()?;

    let closest: Vec<_> = converged.iter().map(|c| c.closest.clone()).collect();
    let bins = flip_distance_histogram(&closest, cfg.histogram_bin_width)?;
    write_histogram_csv(&bins, create(&out_path(dir, files::FLIP_HISTOGRAM))?)?;

    let mut w = csv::Writer::from_writer(create(&out_path(dir, files::ANGLE_DISTANCE))?);
    w.write_record(["query_id", "distance", "taylor_distance", "beta", "angle_deg"])?;
    for (id, c) in results.iter().enumerate().filter(|(_, c)| c.closest.is_converged()) {
        w.write_record([
            id.to_string(),
            fmt_f64(c.closest.distance),
            fmt_opt(c.taylor.as_ref().map(|t| t.distance)),
            fmt_opt(c.metrics.beta),
            fmt_opt(c.metrics.angle_deg),
        ])?;
    }
    w.flush()?;

    Ok((
        vec![
            files::FLIPS.into(),
            files::FLIP_SUMMARY.into(),
            files::FLIP_HISTOGRAM.into(),
            files::ANGLE_DISTANCE.into(),
        ],
        vec![
            format!("queries: {n}"),
            format!("converged: {} ({:.4})", converged.len(), frac(converged.len(), n)),
            format!("legitimate among converged: {:.4}", frac(legit, converged.len())),
            format!("mean beta: {}", beta_mean.map_or("n/a".into(), |b| format!("{b:.4}"))),
        ],
    ))
}

fn path_options(cfg: &ExperimentConfig) -> PathOptions {
    PathOptions {
        score_tol: cfg.score_tol,
        max_samples: cfg.path_max_samples,
    }
}

fn cmd_path(cfg: &ExperimentConfig, seed: u64) -> Result<Written> {
    let net = load_model(cfg)?;
    let test = load_features(cfg, files::TEST_FEATURES)?;
    for id in [cfg.path_from, cfg.path_to] {
        if id >= test.len() {
            return Err(Error::InvalidParameter(format!("test image {id} out of range ({} images)", test.len())));
        }
    }
    let x1 = test.sample(cfg.path_from);
    let x2 = test.sample(cfg.path_to);
    let popts = path_options(cfg);
    let seg = LineSegment::between(x1.clone(), x2)?;
    let profile = sample_line(&net, &seg, &popts)?;

    let dir = &cfg.out_dir;
    profile.write_csv(create(&out_path(dir, files::PATH_PROFILE))?)?;
    let length = seg.length();
    let mut w = csv::Writer::from_writer(create(&out_path(dir, files::PATH_CROSSINGS))?);
    w.write_record(["alpha", "distance_from_start"])?;
    for &a in &profile.crossings {
        w.write_record([fmt_f64(a), fmt_f64(a * length)])?;
    }
    w.flush()?;

    let mut written = vec![files::PATH_PROFILE.to_string(), files::PATH_CROSSINGS.to_string()];
    let pred = net.predict(&x1)?;
    let flip = closest_flip(&net, &x1, (pred, 1 - pred), &flip_options(cfg, seed))?;
    let flip_note = if flip.is_converged() && flip.distance > 0.0 {
        let p = profile_to_flip(&net, &x1, &flip, cfg.path_overshoot, &popts)?;
        p.write_csv(create(&out_path(dir, files::PATH_FLIP_PROFILE))?)?;
        written.push(files::PATH_FLIP_PROFILE.into());
        format!("flip profile: distance {:.6}", flip.distance)
    } else {
        format!("flip profile skipped: status {}", flip.status.as_str())
    };
    Ok((
        written,
        vec![
            format!("samples: {}{}", profile.len(), if profile.capped { " (capped)" } else { "" }),
            format!("crossings: {}", profile.crossings.len()),
            flip_note,
        ],
    ))
}

fn cmd_regions(cfg: &ExperimentConfig, seed: u64) -> Result<Written> {
    let net = load_model(cfg)?;
    let train = load_features(cfg, files::TRAIN_FEATURES)?;
    let cap = (cfg.region_max_points > 0).then_some(cfg.region_max_points);
    let (graph, report) = region_report(&net, &train, cfg.region_class, cap, seed, &path_options(cfg))?;
    let dir = &cfg.out_dir;
    let mut edges = create(&out_path(dir, files::REGION_EDGES))?;
    graph.write_edge_list(&mut edges)?;
    std::io::Write::flush(&mut edges)?;
    report.write_csv(create(&out_path(dir, files::REGION_SUMMARY))?)?;
    Ok((
        vec![files::REGION_EDGES.into(), files::REGION_SUMMARY.into()],
        vec![
            format!("points: {}", report.node_count),
            format!("fraction direct: {:.4}", report.fraction_direct),
            format!("components: {}", report.component_count),
        ],
    ))
}

fn cmd_attack(cfg: &ExperimentConfig, seed: u64) -> Result<Written> {
    let net = load_model(cfg)?;
    let test = load_features(cfg, files::TEST_FEATURES)?;
    let n = cfg.attack_count.min(test.len());
    let fopts = flip_options(cfg, seed);
    let popts = path_options(cfg);
    let per_input: Vec<Result<Vec<AttackRow>>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let x = test.sample(i);
            let pred = net.predict(&x)?;
            let target = 1 - pred;
            let flip = closest_flip(&net, &x, (pred, target), &fopts)?;
            let mut rows = Vec::with_capacity(cfg.attack_epsilons.len());
            for &eps in &cfg.attack_epsilons {
                let ac = AttackConfig {
                    steps: cfg.attack_steps,
                    seed,
                    ..AttackConfig::new(eps)
                };
                let attack = constrained_loss_attack(&net, &x, target, &ac)?;
                let cmp = flip.is_converged().then(|| compare_attack_vs_flip(&net, &x, &attack, &flip, &popts)).transpose()?;
                rows.push(AttackRow {
                    id: i,
                    epsilon: eps,
                    succeeded: attack.succeeded,
                    attack_distance: attack.distance,
                    flip_distance: flip.is_converged().then_some(flip.distance),
                    first_crossing_distance: cmp.and_then(|c| c.first_crossing_distance),
                    angle_deg: if attack.succeeded { cmp.and_then(|c| c.angle_deg) } else { None },
                });
            }
            Ok(rows)
        })
        .collect();
    let mut rows = Vec::new();
    for r in per_input {
        rows.extend(r?);
    }
    let dir = &cfg.out_dir;
    write_attack_csv(&rows, create(&out_path(dir, files::ATTACKS))?)?;
    let mut w = csv::Writer::from_writer(create(&out_path(dir, files::ATTACK_SUMMARY))?);
    w.write_record(["epsilon", "attempts", "successes", "success_rate"])?;
    let mut summary = Vec::new();
    for &eps in &cfg.attack_epsilons {
        let these: Vec<&AttackRow> = rows.iter().filter(|r| r.epsilon == eps).collect();
        let ok = these.iter().filter(|r| r.succeeded).count();
        let rate = if these.is_empty() { 0.0 } else { ok as f64 / these.len() as f64 };
        w.write_record([fmt_f64(eps), these.len().to_string(), ok.to_string(), fmt_f64(rate)])?;
        summary.push(format!("epsilon {eps}: {ok}/{} succeeded", these.len()));
    }
    w.flush()?;
    Ok((vec![files::ATTACKS.into(), files::ATTACK_SUMMARY.into()], summary))
}

/// JSON error record for stderr.
pub fn error_record(stage: Option<Stage>, err: &Error) -> String {
    let mut v = serde_json::json!({
        "error": err.kind(),
        "message": err.to_string(),
        "command": stage.map(Stage::name),
    });
    if let Error::MissingDependency { path, producer } = err {
        v["missing"] = serde_json::Value::String(path.display().to_string());
        v["producer"] = serde_json::Value::String(producer.clone());
    }
    if let Error::Format { file, offset, .. } = err {
        v["file"] = serde_json::Value::String(file.clone());
        v["offset"] = serde_json::Value::from(*offset);
    }
    v.to_string()
}

/// Writes a synthetic batch in the CIFAR-10 binary layout: smooth random
/// images whose classes differ in overall colour balance. For tests and
/// examples that need the pipeline without the real data.
pub fn write_synthetic_batch(path: &Path, records: usize, labels: (u8, u8), seed: u64) -> Result<()> {
    use rand::Rng;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(records * crate::features::CIFAR_RECORD_LEN);
    for i in 0..records {
        let label = match i % 3 {
            0 => labels.0,
            1 => labels.1,
            _ => (labels.0.max(labels.1) + 1) % 10,
        };
        let tint: [f64; 3] = if label == labels.0 { [0.55, 0.6, 0.7] } else { [0.35, 0.4, 0.6] };
        let (fr, fc) = (rng.random_range(0.05..0.3), rng.random_range(0.05..0.3));
        let phase: f64 = rng.random_range(0.0..std::f64::consts::TAU);
        let amp: f64 = rng.random_range(0.05..0.2);
        out.push(label);
        for (ch, t) in tint.iter().enumerate() {
            for r in 0..32 {
                for c in 0..32 {
                    let wave = (fr * r as f64 + fc * c as f64 + phase + ch as f64).sin();
                    let noise: f64 = rng.random_range(-0.05..0.05);
                    let v = (t + amp * wave + noise).clamp(0.0, 1.0);
                    out.push((v * 255.0).round() as u8);
                }
            }
        }
    }
    fs::write(path, out)?;
    Ok(())
}
