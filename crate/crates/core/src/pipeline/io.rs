//! Artifact files: feature CSVs, image records, PPM previews, run manifests.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use sha2::{Digest, Sha256};

use crate::features::{ImageTensor, CIFAR_RECORD_LEN, SIDE};
use crate::util::fmt_f64;
use crate::{Dataset, Error, Result};

/// Fails with a dependency error unless `path` exists.
pub(crate) fn require(path: &Path, producer: &str) -> Result<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(Error::MissingDependency {
            path: path.to_path_buf(),
            producer: producer.to_string(),
        })
    }
}

pub(crate) fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

pub(crate) fn open(path: &Path) -> Result<BufReader<File>> {
    Ok(BufReader::new(File::open(path)?))
}

/// `record,label,f0,...` with full-precision values.
pub fn write_dataset_csv(data: &Dataset, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    let mut header = vec!["record".to_string(), "label".to_string()];
    header.extend((0..data.dim()).map(|c| format!("f{c}")));
    w.write_record(&header)?;
    for r in 0..data.len() {
        let mut row = vec![
            data.provenance.get(r).cloned().unwrap_or_default(),
            data.labels[r].to_string(),
        ];
        row.extend((0..data.dim()).map(|c| fmt_f64(data.features[(r, c)])));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_dataset_csv(path: &Path, class_names: [String; 2]) -> Result<Dataset> {
    let name = path.display().to_string();
    let mut rdr = csv::Reader::from_reader(open(path)?);
    let dim = rdr.headers()?.len().saturating_sub(2);
    let mut values = Vec::new();
    let mut labels = Vec::new();
    let mut provenance = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let offset = rec.position().map_or(0, |p| p.byte());
        let bad = |reason: String| Error::Format {
            file: name.clone(),
            offset,
            reason,
        };
        if rec.len() != dim + 2 {
            return Err(bad(format!("expected {} fields, got {}", dim + 2, rec.len())));
        }
        provenance.push(rec[0].to_string());
        labels.push(rec[1].parse::<usize>().map_err(|e| bad(format!("label: {e}")))?);
        for f in rec.iter().skip(2) {
            values.push(f.parse::<f64>().map_err(|e| bad(format!("value {f:?}: {e}")))?);
        }
    }
    let features = DMatrix::from_row_slice(labels.len(), dim, &values);
    Dataset::new(features, labels, class_names, provenance)
}

/// Writes images back in the 3073-byte record layout (label byte, then
/// channel-planar pixels scaled to 0..=255).
pub fn write_image_records(images: &[ImageTensor], raw_labels: &[u8], path: &Path) -> Result<()> {
    let mut out = create(path)?;
    let mut rec = Vec::with_capacity(CIFAR_RECORD_LEN);
    for (img, &label) in images.iter().zip(raw_labels) {
        rec.clear();
        rec.push(label);
        rec.extend(img.pixels().iter().map(|&v| (v * 255.0).round().clamp(0.0, 255.0) as u8));
        out.write_all(&rec)?;
    }
    out.flush()?;
    Ok(())
}

/// Binary PPM, pixels clamped to `[0, 1]`.
pub fn write_ppm(img: &ImageTensor, path: &Path) -> Result<()> {
    let mut out = create(path)?;
    write!(out, "P6\n{SIDE} {SIDE}\n255\n")?;
    let mut buf = Vec::with_capacity(SIDE * SIDE * 3);
    for r in 0..SIDE {
        for c in 0..SIDE {
            for ch in 0..3 {
                buf.push((img.at(r, c, ch).clamp(0.0, 1.0) * 255.0).round() as u8);
            }
        }
    }
    out.write_all(&buf)?;
    out.flush()?;
    Ok(())
}

pub fn sha256_file(path: &Path) -> Result<String> {
    Ok(hex::encode(Sha256::digest(fs::read(path)?)))
}

/// Line-delimited `key=value` record of one command run: its seeds, the
/// config hash, and a digest per output file.
#[derive(Debug, Clone, PartialEq)]
pub struct Manifest {
    pub command: String,
    pub seed: u64,
    pub stage_seed: u64,
    pub config_sha256: String,
    pub outputs: Vec<(String, String)>,
}

impl Manifest {
    pub fn file_name(command: &str) -> String {
        format!("manifest_{command}.txt")
    }

    /// Digests `files` (relative to `dir`) and writes the manifest next to them.
    pub fn write(command: &str, seed: u64, stage_seed: u64, config_sha256: String, dir: &Path, files: &[String]) -> Result<Manifest> {
        let mut outputs = Vec::with_capacity(files.len());
        for f in files {
            outputs.push((f.clone(), sha256_file(&dir.join(f))?));
        }
        let m = Manifest {
            command: command.to_string(),
            seed,
            stage_seed,
            config_sha256,
            outputs,
        };
        let mut out = create(&dir.join(Self::file_name(command)))?;
        writeln!(out, "command={}", m.command)?;
        writeln!(out, "version={}", env!("CARGO_PKG_VERSION"))?;
        writeln!(out, "seed={}", m.seed)?;
        writeln!(out, "stage_seed={}", m.stage_seed)?;
        writeln!(out, "config_sha256={}", m.config_sha256)?;
        for (f, d) in &m.outputs {
            writeln!(out, "output={f} sha256={d}")?;
        }
        out.flush()?;
        Ok(m)
    }

    pub fn read(path: &Path) -> Result<Manifest> {
        let text = fs::read_to_string(path)?;
        let name = path.display().to_string();
        let mut m = Manifest {
            command: String::new(),
            seed: 0,
            stage_seed: 0,
            config_sha256: String::new(),
            outputs: Vec::new(),
        };
        let mut offset = 0u64;
        for line in text.lines() {
            let bad = |reason: &str| Error::Format {
                file: name.clone(),
                offset,
                reason: reason.to_string(),
            };
            let (k, v) = line.split_once('=').ok_or_else(|| bad("expected key=value"))?;
            match k {
                "command" => m.command = v.to_string(),
                "seed" => m.seed = v.parse().map_err(|_| bad("bad seed"))?,
                "stage_seed" => m.stage_seed = v.parse().map_err(|_| bad("bad stage seed"))?,
                "config_sha256" => m.config_sha256 = v.to_string(),
                "output" => {
                    let (f, d) = v.split_once(" sha256=").ok_or_else(|| bad("bad output line"))?;
                    m.outputs.push((f.to_string(), d.to_string()));
                }
                _ => {}
            }
            offset += line.len() as u64 + 1;
        }
        Ok(m)
    }
}

/// Output-directory file names shared between commands.
pub mod files {
    pub const SELECTOR: &str = "selector.txt";
    pub const TRAIN_FEATURES: &str = "train_features.csv";
    pub const TEST_FEATURES: &str = "test_features.csv";
    pub const TEST_IMAGES: &str = "test_images.bin";
    pub const MODEL: &str = "model.ckpt";
    pub const TRAIN_LOSS: &str = "train_loss.csv";
    pub const TRAIN_SUMMARY: &str = "train_summary.csv";
    pub const RECON_ERRORS: &str = "recon_errors.csv";
    pub const FLIPS: &str = "flips.csv";
    pub const FLIP_SUMMARY: &str = "flip_summary.csv";
    pub const FLIP_HISTOGRAM: &str = "flip_histogram.csv";
    pub const ANGLE_DISTANCE: &str = "angle_vs_distance.csv";
    pub const PATH_PROFILE: &str = "path_profile.csv";
    pub const PATH_FLIP_PROFILE: &str = "path_flip_profile.csv";
    pub const PATH_CROSSINGS: &str = "path_crossings.csv";
    pub const REGION_EDGES: &str = "region_edges.txt";
    pub const REGION_SUMMARY: &str = "region_summary.csv";
    pub const ATTACKS: &str = "attacks.csv";
    pub const ATTACK_SUMMARY: &str = "attack_summary.csv";
}

pub(crate) fn out_path(dir: &Path, name: &str) -> PathBuf {
    dir.join(name)
}
