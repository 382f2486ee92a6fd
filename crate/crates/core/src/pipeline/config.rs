//! Flat `key = value` experiment configuration.

use std::path::PathBuf;

use sha2::{Digest, Sha256};

use crate::{Error, Result};

/// Everything a pipeline run reads. Defaults reproduce the full-size setup:
/// planes vs ships, 200 coefficients, the 12-hidden-layer network.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub data_dir: PathBuf,
    pub out_dir: PathBuf,
    pub train_files: Vec<String>,
    pub test_files: Vec<String>,
    /// Raw CIFAR-10 label ids mapped to 0 and 1.
    pub classes: (u8, u8),
    pub class_names: [String; 2],
    pub k: usize,
    /// Keep at most this many images per split (0 = all).
    pub max_train: usize,
    pub max_test: usize,
    pub seed: u64,
    /// Worker threads (0 = all cores).
    pub threads: usize,

    pub hidden: Vec<usize>,
    pub sigma_init: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub dropout: f64,
    pub train_sigma: bool,

    pub flip_count: usize,
    pub flip_restarts: usize,
    pub flip_max_outer: usize,
    pub flip_max_step: f64,
    pub histogram_bin_width: f64,

    pub path_from: usize,
    pub path_to: usize,
    pub path_overshoot: f64,
    pub score_tol: f64,
    pub path_max_samples: usize,

    pub region_class: usize,
    pub region_max_points: usize,

    pub attack_epsilons: Vec<f64>,
    pub attack_count: usize,
    pub attack_steps: usize,

    pub recon_ks: Vec<usize>,
    pub recon_image: usize,
    pub recon_train_subset: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            data_dir: PathBuf::from("data/cifar-10-batches-bin"),
            out_dir: PathBuf::from("out"),
            train_files: (1..=5).map(|i| format!("data_batch_{i}.bin")).collect(),
            test_files: vec!["test_batch.bin".into()],
            classes: (0, 8),
            class_names: ["plane".into(), "ship".into()],
            k: 200,
            max_train: 0,
            max_test: 0,
            seed: 0,
            threads: 0,
            hidden: vec![700, 600, 510, 440, 375, 325, 285, 250, 215, 160, 100, 40],
            sigma_init: 1.0,
            epochs: 100,
            batch_size: 64,
            learning_rate: 0.001,
            dropout: 0.5,
            train_sigma: true,
            flip_count: 200,
            flip_restarts: 4,
            flip_max_outer: 100,
            flip_max_step: 1e4,
            histogram_bin_width: 0.1,
            path_from: 0,
            path_to: 1,
            path_overshoot: 2.0,
            score_tol: 0.01,
            path_max_samples: 1_000_000,
            region_class: 1,
            region_max_points: 200,
            attack_epsilons: vec![0.1, 0.5, 2.0],
            attack_count: 100,
            attack_steps: 500,
            recon_ks: vec![2200, 1000, 500, 200],
            recon_image: 0,
            recon_train_subset: 2500,
        }
    }
}

fn list<T: std::str::FromStr>(key: &str, v: &str) -> Result<Vec<T>>
where
    T::Err: std::fmt::Display,
{
    v.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<T>().map_err(|e| Error::Config(format!("{key}: bad list item {s:?}: {e}"))))
        .collect()
}

fn scalar<T: std::str::FromStr>(key: &str, v: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    v.parse::<T>().map_err(|e| Error::Config(format!("{key}: bad value {v:?}: {e}")))
}

fn join<T: ToString>(xs: &[T]) -> String {
    xs.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

impl ExperimentConfig {
    /// Parses `key = value` lines; `#` starts a comment. Unset keys keep their
    /// defaults, unknown keys are an error.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value, got {raw:?}", n + 1)))?;
            cfg.set(key.trim(), value.trim())?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Applies one override.
    pub fn set(&mut self, key: &str, v: &str) -> Result<()> {
        match key {
            "data_dir" => self.data_dir = PathBuf::from(v),
            "out_dir" => self.out_dir = PathBuf::from(v),
            "train_files" => self.train_files = list(key, v)?,
            "test_files" => self.test_files = list(key, v)?,
            "classes" => {
                let c: Vec<u8> = list(key, v)?;
                if c.len() != 2 {
                    return Err(Error::Config(format!("classes: need two ids, got {v:?}")));
                }
                self.classes = (c[0], c[1]);
            }
            "class_names" => {
                let c: Vec<String> = list(key, v)?;
                if c.len() != 2 {
                    return Err(Error::Config(format!("class_names: need two names, got {v:?}")));
                }
                self.class_names = [c[0].clone(), c[1].clone()];
            }
            "k" => self.k = scalar(key, v)?,
            "max_train" => self.max_train = scalar(key, v)?,
            "max_test" => self.max_test = scalar(key, v)?,
            "seed" => self.seed = scalar(key, v)?,
            "threads" => self.threads = scalar(key, v)?,
            "hidden" => self.hidden = list(key, v)?,
            "sigma_init" => self.sigma_init = scalar(key, v)?,
            "epochs" => self.epochs = scalar(key, v)?,
            "batch_size" => self.batch_size = scalar(key, v)?,
            "learning_rate" => self.learning_rate = scalar(key, v)?,
            "dropout" => self.dropout = scalar(key, v)?,
            "train_sigma" => self.train_sigma = scalar(key, v)?,
            "flip_count" => self.flip_count = scalar(key, v)?,
            "flip_restarts" => self.flip_restarts = scalar(key, v)?,
            "flip_max_outer" => self.flip_max_outer = scalar(key, v)?,
            "flip_max_step" => self.flip_max_step = scalar(key, v)?,
            "histogram_bin_width" => self.histogram_bin_width = scalar(key, v)?,
            "path_from" => self.path_from = scalar(key, v)?,
            "path_to" => self.path_to = scalar(key, v)?,
            "path_overshoot" => self.path_overshoot = scalar(key, v)?,
            "score_tol" => self.score_tol = scalar(key, v)?,
            "path_max_samples" => self.path_max_samples = scalar(key, v)?,
            "region_class" => self.region_class = scalar(key, v)?,
            "region_max_points" => self.region_max_points = scalar(key, v)?,
            "attack_epsilons" => self.attack_epsilons = list(key, v)?,
            "attack_count" => self.attack_count = scalar(key, v)?,
            "attack_steps" => self.attack_steps = scalar(key, v)?,
            "recon_ks" => self.recon_ks = list(key, v)?,
            "recon_image" => self.recon_image = scalar(key, v)?,
            "recon_train_subset" => self.recon_train_subset = scalar(key, v)?,
            _ => return Err(Error::Config(format!("unknown key {key:?}"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if !(1..=crate::features::COEFF_LEN).contains(&self.k) {
            return Err(Error::Config(format!("k must lie in [1, 4096], got {}", self.k)));
        }
        if self.classes.0 == self.classes.1 || self.classes.0 > 9 || self.classes.1 > 9 {
            return Err(Error::Config(format!("classes must be two distinct ids in 0..=9, got {:?}", self.classes)));
        }
        if self.hidden.contains(&0) {
            return Err(Error::Config("hidden layer widths must be positive".into()));
        }
        if self.region_class > 1 {
            return Err(Error::Config("region_class must be 0 or 1".into()));
        }
        if self.recon_ks.iter().any(|&k| k == 0 || k > crate::features::COEFF_LEN) {
            return Err(Error::Config("recon_ks entries must lie in [1, 4096]".into()));
        }
        Ok(())
    }

    /// Canonical `key = value` rendering of every setting, in a fixed order.
    pub fn to_text(&self) -> String {
        let lines = [
            ("data_dir", self.data_dir.display().to_string()),
            ("out_dir", self.out_dir.display().to_string()),
            ("train_files", self.train_files.join(",")),
            ("test_files", self.test_files.join(",")),
            ("classes", format!("{},{}", self.classes.0, self.classes.1)),
            ("class_names", self.class_names.join(",")),
            ("k", self.k.to_string()),
            ("max_train", self.max_train.to_string()),
            ("max_test", self.max_test.to_string()),
            ("seed", self.seed.to_string()),
            ("threads", self.threads.to_string()),
            ("hidden", join(&self.hidden)),
            ("sigma_init", self.sigma_init.to_string()),
            ("epochs", self.epochs.to_string()),
            ("batch_size", self.batch_size.to_string()),
            ("learning_rate", self.learning_rate.to_string()),
            ("dropout", self.dropout.to_string()),
            ("train_sigma", self.train_sigma.to_string()),
            ("flip_count", self.flip_count.to_string()),
            ("flip_restarts", self.flip_restarts.to_string()),
            ("flip_max_outer", self.flip_max_outer.to_string()),
            ("flip_max_step", self.flip_max_step.to_string()),
            ("histogram_bin_width", self.histogram_bin_width.to_string()),
            ("path_from", self.path_from.to_string()),
            ("path_to", self.path_to.to_string()),
            ("path_overshoot", self.path_overshoot.to_string()),
            ("score_tol", self.score_tol.to_string()),
            ("path_max_samples", self.path_max_samples.to_string()),
            ("region_class", self.region_class.to_string()),
            ("region_max_points", self.region_max_points.to_string()),
            ("attack_epsilons", join(&self.attack_epsilons)),
            ("attack_count", self.attack_count.to_string()),
            ("attack_steps", self.attack_steps.to_string()),
            ("recon_ks", join(&self.recon_ks)),
            ("recon_image", self.recon_image.to_string()),
            ("recon_train_subset", self.recon_train_subset.to_string()),
        ];
        lines.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }

    /// SHA-256 of [`Self::to_text`] with the machine-specific keys
    /// (`out_dir`, `threads`) left out, so relocating a run keeps its hash.
    pub fn digest(&self) -> String {
        let text: String = self
            .to_text()
            .lines()
            .filter(|l| !l.starts_with("out_dir") && !l.starts_with("threads"))
            .map(|l| format!("{l}\n"))
            .collect();
        hex::encode(Sha256::digest(text.as_bytes()))
    }
}

/// Per-stage seed: the first 8 bytes of `SHA-256(seed_le || stage)`.
pub fn derive_seed(seed: u64, stage: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(stage.as_bytes());
    let d = h.finalize();
    u64::from_le_bytes(d[..8].try_into().expect("digest has 32 bytes"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_overrides_and_comments() {
        let cfg = ExperimentConfig::parse(
            "# desk run\nk = 20\nhidden = 64, 32\nclasses = 1,9 # cars vs trucks\n\nattack_epsilons = 0.25\n",
        )
        .unwrap();
        assert_eq!(cfg.k, 20);
        assert_eq!(cfg.hidden, vec![64, 32]);
        assert_eq!(cfg.classes, (1, 9));
        assert_eq!(cfg.attack_epsilons, vec![0.25]);
        assert_eq!(cfg.epochs, 100);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(ExperimentConfig::parse("nonsense").is_err());
        assert!(ExperimentConfig::parse("colour = red").is_err());
        assert!(ExperimentConfig::parse("k = 0").is_err());
        assert!(ExperimentConfig::parse("k = 5000").is_err());
        assert!(ExperimentConfig::parse("k = ten").is_err());
        assert!(ExperimentConfig::parse("classes = 3,3").is_err());
    }

    #[test]
    fn text_round_trip() {
        let mut cfg = ExperimentConfig::default();
        cfg.k = 37;
        cfg.attack_epsilons = vec![0.1, 0.75];
        let back = ExperimentConfig::parse(&cfg.to_text()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn digest_ignores_location() {
        let a = ExperimentConfig::default();
        let mut b = a.clone();
        b.out_dir = PathBuf::from("/elsewhere");
        b.threads = 3;
        assert_eq!(a.digest(), b.digest());
        b.k = 10;
        assert_ne!(a.digest(), b.digest());
    }

    #[test]
    fn stage_seeds_differ() {
        assert_ne!(derive_seed(0, "train"), derive_seed(0, "flip"));
        assert_ne!(derive_seed(0, "train"), derive_seed(1, "train"));
        assert_eq!(derive_seed(7, "train"), derive_seed(7, "train"));
    }
}
