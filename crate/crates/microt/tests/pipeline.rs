use std::fs;
use std::path::Path;
use std::process::Command;

use microt::config::DataSource;
use microt::pipeline::artifacts;
use microt::report::Table;
use microt::{Pipeline, PipelineConfig, STAGES};
use microt_core::cost::savings;

fn tiny_config() -> PipelineConfig {
    let mut cfg = PipelineConfig::default();
    cfg.data.side = 8;
    cfg.data.public = DataSource::Synthetic { samples: 48 };
    cfg.data.local = DataSource::Synthetic { samples: 160 };
    cfg.ssl.epochs = 1;
    cfg.distill.epochs = 2;
    cfg.joint.epochs = 1;
    cfg.split.probe_epochs = 3;
    cfg.quant.calibration_samples = 8;
    cfg.device.epochs = 3;
    cfg.device.train_samples = None;
    cfg
}

fn snapshot(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()))
        .collect();
    files.sort();
    files
}

#[test]
fn stages_are_resumable_and_idempotent() {
    let dir = tempfile::tempdir().unwrap();
    let pipeline = Pipeline::new(tiny_config(), dir.path());
    pipeline.run_all().unwrap();
    let before = snapshot(dir.path());
    for stage in STAGES {
        pipeline.run_stage(stage).unwrap();
        assert_eq!(snapshot(dir.path()), before, "rerunning {stage} changed the output directory");
    }
    let config = fs::read_to_string(dir.path().join(artifacts::CONFIG)).unwrap();
    assert_eq!(PipelineConfig::from_toml(&config).unwrap(), *pipeline.config());
}

#[test]
fn reports_have_the_documented_schema() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = tiny_config();
    cfg.stage.adjust_factors = vec![0.8, 1.0, 1.2];
    Pipeline::new(cfg, dir.path()).run_all().unwrap();
    let read = |name: &str| Table::read("test", &dir.path().join(name)).unwrap();

    let base = read(artifacts::BASELINES);
    let methods: Vec<&str> = base.rows.iter().map(|r| r[0].as_str()).collect();
    assert_eq!(methods, ["none", "head-only", "part-only", "stage-decision"]);

    let sweep = read(artifacts::SWEEP);
    let factors: Vec<String> = sweep.rows.iter().map(|r| r[0].clone()).collect();
    assert_eq!(&factors[..3], ["0.8", "1", "1.2"]);
    assert_eq!(sweep.rows.len(), 6);

    let cost = read(artifacts::COST_REPORT);
    let col = |t: &Table, name: &str| t.column(name).unwrap();
    let (mp, mf, em, sv) = (col(&cost, "mac_part"), col(&cost, "mac_full"), col(&cost, "expected_macs"), col(&cost, "savings_percent"));
    for row in &cost.rows {
        let full: f64 = row[mf].parse().unwrap();
        let expected: f64 = row[em].parse().unwrap();
        assert!(row[mp].parse::<f64>().unwrap() <= full);
        assert_eq!(row[sv].parse::<f64>().unwrap(), savings(full, expected).unwrap());
    }

    let routing = read(artifacts::ROUTING_LOG);
    assert_eq!(routing.header, ["sample_id", "confidence", "exited_early", "prediction", "label", "macs"]);
    let split = read(artifacts::SPLIT_REPORT);
    assert!(split.footer.iter().any(|l| l.starts_with("optimal_index=")));
    let bytes = fs::read(dir.path().join(artifacts::SUMMARY)).unwrap();
    assert!(!bytes.contains(&b'\r'));
}

#[test]
fn missing_predecessor_names_stage_and_artifact() {
    let dir = tempfile::tempdir().unwrap();
    let err = Pipeline::new(tiny_config(), dir.path()).run_stage("joint-train").unwrap_err();
    let msg = err.to_string();
    assert!(msg.starts_with("joint-train:"), "{msg}");
    assert!(msg.contains("missing artifact"), "{msg}");
}

#[test]
fn cli_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let bin = env!("CARGO_BIN_EXE_microt");
    let out = Command::new(bin)
        .args(["--stage", "calibrate", "--out"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(!out.status.success());
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("calibrate:"), "{stderr}");

    let bad = Command::new(bin).args(["--stage", "bogus"]).output().unwrap();
    assert!(!bad.status.success());

    let cfg_path = dir.path().join("run.toml");
    fs::write(&cfg_path, tiny_config().to_toml()).unwrap();
    let out_dir = dir.path().join("out");
    let ok = Command::new(bin)
        .arg("--config")
        .arg(&cfg_path)
        .args(["--seed", "3", "--stage", "teach-ssl", "--out"])
        .arg(&out_dir)
        .output()
        .unwrap();
    assert!(ok.status.success(), "{}", String::from_utf8_lossy(&ok.stderr));
    assert!(out_dir.join(artifacts::TEACHER).exists());
    let saved = PipelineConfig::from_toml(&fs::read_to_string(out_dir.join(artifacts::CONFIG)).unwrap()).unwrap();
    assert_eq!(saved.seed, 3);
}
