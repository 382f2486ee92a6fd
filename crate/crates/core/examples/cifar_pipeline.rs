//! Every pipeline stage end to end in a temporary directory. Uses the real
//! CIFAR-10 batches when `CIFAR10_DIR` points at them, otherwise small
//! synthetic batches in the same binary layout.

use flippoint::pipeline::{run, write_synthetic_batch, ExperimentConfig, Stage};

fn main() -> flippoint::Result<()> {
    let work = std::env::temp_dir().join("flippoint_example");
    std::fs::create_dir_all(&work)?;
    let mut cfg = ExperimentConfig::default();
    cfg.out_dir = work.join("out");
    match std::env::var_os("CIFAR10_DIR") {
        Some(dir) => {
            cfg.data_dir = dir.into();
            cfg.max_train = 2000;
            cfg.max_test = 200;
            cfg.epochs = 10;
        }
        None => {
            cfg.data_dir = work.join("data");
            std::fs::create_dir_all(&cfg.data_dir)?;
            write_synthetic_batch(&cfg.data_dir.join("train.bin"), 300, (0, 8), 1)?;
            write_synthetic_batch(&cfg.data_dir.join("test.bin"), 60, (0, 8), 2)?;
            cfg.train_files = vec!["train.bin".into()];
            cfg.test_files = vec!["test.bin".into()];
            cfg.k = 40;
            cfg.hidden = vec![30, 20];
            cfg.epochs = 20;
            cfg.recon_ks = vec![150, 40];
            cfg.recon_train_subset = 200;
        }
    }
    cfg.flip_count = 10;
    cfg.attack_count = 5;
    cfg.region_max_points = 20;

    for stage in [Stage::Prepare, Stage::Train, Stage::Recon, Stage::Flip, Stage::Path, Stage::Regions, Stage::Attack] {
        let out = run(stage, &cfg)?;
        println!("[{}]", stage.name());
        for line in out.summary {
            println!("  {line}");
        }
    }
    println!("outputs in {}", cfg.out_dir.display());
    Ok(())
}
