//! The staged pipeline. Each stage reads its predecessors' artifacts from
//! the output directory and writes its own, so any stage can be re-run on
//! its own.

use std::path::{Path, PathBuf};

use microt_core::cost::{cost_report, savings};
use microt_core::data::Dataset;
use microt_core::device::{
    classifier, Device, DeviceClassifier, EmbeddingRecord, EmbeddingStore, EpochOrder, MemoryBudget, Region,
    StageTrainer,
};
use microt_core::distill::{extract_embeddings, joint_train, run_distillation, train_teacher, EmbeddingDataset};
use microt_core::quant::{quantize, QuantBlock, QuantNet};
use microt_core::split::{default_range, find_optimal_split, ProbeData};
use microt_core::stage::{CalibrationResult, StagePipeline, SweepRow};
use microt_core::{seeded_rng, BlockNet, Extractor, Tensor};
use rand::seq::SliceRandom;

use crate::config::PipelineConfig;
use crate::error::{CoreContext, PipelineError, Result};
use crate::formats::{self, read_file, write_file};
use crate::ingest::{load_source, DatasetHandle, Role, PREPROCESSING};
use crate::report::{optimal_index, routing_table, split_table, sweep_table, Table};

pub const STAGES: [&str; 9] = [
    "teach-ssl",
    "distill",
    "split",
    "joint-train",
    "quantize",
    "device-train",
    "calibrate",
    "infer",
    "report",
];

/// Artifact file names inside the output directory.
pub mod artifacts {
    pub const CONFIG: &str = "config.toml";
    pub const TEACHER: &str = "teacher.mcrt";
    pub const EMBEDDINGS: &str = "teacher_embeddings.memb";
    pub const STUDENT: &str = "student.mcrt";
    pub const SPLIT_REPORT: &str = "split_report.csv";
    pub const JOINT: &str = "joint.mcrt";
    pub const PART: &str = "part.mcrt";
    pub const REMAINDER: &str = "remainder.mcrt";
    pub const PART_QUANT: &str = "part.mcrq";
    pub const REMAINDER_QUANT: &str = "remainder.mcrq";
    pub const PART_STORE: &str = "part_train.mfea";
    pub const FULL_STORE: &str = "full_train.mfea";
    pub const PART_CLASSIFIER: &str = "part.mclf";
    pub const FULL_CLASSIFIER: &str = "full.mclf";
    pub const DEVICE_LOG: &str = "device_log.csv";
    pub const CALIBRATION: &str = "calibration.csv";
    pub const ROUTING_LOG: &str = "routing_log.csv";
    pub const SWEEP: &str = "ratio_sweep.csv";
    pub const BASELINES: &str = "baselines.csv";
    pub const SUMMARY: &str = "summary.csv";
    pub const COST_REPORT: &str = "cost_report.csv";
    pub const SUMMARY_TEXT: &str = "summary.txt";

    /// CSV reports, the files compared across reruns.
    pub const REPORTS: [&str; 9] = [
        SPLIT_REPORT,
        DEVICE_LOG,
        CALIBRATION,
        ROUTING_LOG,
        SWEEP,
        BASELINES,
        SUMMARY,
        COST_REPORT,
        SUMMARY_TEXT,
    ];
}

/// Independent random streams derived from the config seed.
#[derive(Debug, Clone, Copy)]
#[repr(u64)]
enum Stream {
    PublicData = 1,
    LocalData,
    LocalSplit,
    Teacher,
    StudentInit,
    Distill,
    Split,
    Joint,
    PartClassifier,
    FullClassifier,
    DeviceOrder,
    Calibration,
    Untrained,
}

/// SplitMix64 finalizer over `seed + stream`.
fn derive_seed(seed: u64, stream: Stream) -> u64 {
    let mut z = seed.wrapping_add((stream as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Ratios the ablation rows of the sweep aim for.
pub const TARGET_RATIOS: [f64; 3] = [0.25, 0.5, 0.75];

/// Part and remainder extractors in float or int8 form.
pub struct Extractors {
    pub part: Box<dyn Extractor>,
    pub remainder: Box<dyn Extractor>,
    /// Bytes the extractor occupies when resident on the device.
    pub bytes: usize,
    pub quantized: bool,
}

fn float_bytes(net: &BlockNet) -> usize {
    net.param_count() * 4
}

fn quant_bytes(net: &QuantNet) -> usize {
    net.blocks()
        .iter()
        .map(|b| match b {
            QuantBlock::Dense { weight, bias, .. } | QuantBlock::Conv2d { weight, bias, .. } => {
                weight.values.len() + 4 * bias.len() + 8
            }
            _ => 0,
        })
        .sum()
}

pub struct Pipeline {
    cfg: PipelineConfig,
    out: PathBuf,
}

impl Pipeline {
    pub fn new(cfg: PipelineConfig, out: impl Into<PathBuf>) -> Self {
        Pipeline { cfg, out: out.into() }
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.cfg
    }

    pub fn out_dir(&self) -> &Path {
        &self.out
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn seed(&self, stream: Stream) -> u64 {
        derive_seed(self.cfg.seed, stream)
    }

    /// Runs every stage in order.
    pub fn run_all(&self) -> Result<()> {
        STAGES.iter().try_for_each(|s| self.run_stage(s))
    }

    pub fn run_stage(&self, name: &str) -> Result<()> {
        write_file("config", &self.path(artifacts::CONFIG), self.cfg.to_toml().as_bytes())?;
        match name {
            "teach-ssl" => self.teach_ssl(),
            "distill" => self.distill(),
            "split" => self.split(),
            "joint-train" => self.joint_train(),
            "quantize" => self.quantize(),
            "device-train" => self.device_train(),
            "calibrate" => self.calibrate(),
            "infer" => self.infer(),
            "report" => self.report(),
            other => Err(PipelineError::Config(format!("unknown stage {other:?}"))),
        }
    }

    pub fn public_data(&self, stage: &'static str) -> Result<Dataset> {
        load_source(&self.cfg, Role::Public, self.seed(Stream::PublicData)).map_err(|e| e.in_stage(stage))
    }

    pub fn local_data(&self, stage: &'static str) -> Result<DatasetHandle> {
        let data = load_source(&self.cfg, Role::Local, self.seed(Stream::LocalData)).map_err(|e| e.in_stage(stage))?;
        DatasetHandle::new(data, self.cfg.data.split, self.seed(Stream::LocalSplit), PREPROCESSING)
            .map_err(|e| e.in_stage(stage))
    }

    /// The local training samples used on the device.
    pub fn device_train_data(&self, local: &DatasetHandle) -> Dataset {
        let mut idx = local.splits.train.clone();
        if let Some(n) = self.cfg.device.train_samples {
            idx.truncate(n);
        }
        local.dataset.subset(&idx)
    }

    fn read_model(&self, stage: &'static str, name: &str) -> Result<BlockNet> {
        read_file(stage, &self.path(name), formats::decode_model)
    }

    fn read_classifier(&self, stage: &'static str, name: &str) -> Result<DeviceClassifier> {
        read_file(stage, &self.path(name), formats::decode_classifier)
    }

    fn read_embeddings(&self, stage: &'static str) -> Result<EmbeddingDataset> {
        read_file(stage, &self.path(artifacts::EMBEDDINGS), formats::decode_embeddings)
    }

    fn split_index(&self, stage: &'static str) -> Result<usize> {
        let path = self.path(artifacts::SPLIT_REPORT);
        let table = Table::read(stage, &path)?;
        optimal_index(&table).ok_or(PipelineError::Format {
            stage,
            path,
            message: "no optimal_index footer".into(),
        })
    }

    fn teach_ssl(&self) -> Result<()> {
        const STAGE: &str = "teach-ssl";
        let public = self.public_data(STAGE)?;
        let shape = public.input_shape().expect("non-empty dataset").to_vec();
        let spec = self.cfg.teacher_spec(&shape).map_err(|e| e.in_stage(STAGE))?;
        let teacher = train_teacher(&public, &spec, &self.cfg.ssl_config(), self.seed(Stream::Teacher)).stage(STAGE)?;
        write_file(STAGE, &self.path(artifacts::TEACHER), &formats::encode_model(&teacher))
    }

    fn distill(&self) -> Result<()> {
        const STAGE: &str = "distill";
        let teacher = self.read_model(STAGE, artifacts::TEACHER)?;
        let public = self.public_data(STAGE)?;
        let bytes = formats::encode_embeddings(&extract_embeddings(&teacher, &public).stage(STAGE)?);
        write_file(STAGE, &self.path(artifacts::EMBEDDINGS), &bytes)?;
        let emb = formats::decode_embeddings(&bytes).expect("freshly encoded");
        let shape = public.input_shape().expect("non-empty dataset").to_vec();
        let spec = self.cfg.student_spec(&shape).map_err(|e| e.in_stage(STAGE))?;
        let init = BlockNet::seeded_init(&spec, self.seed(Stream::StudentInit)).stage(STAGE)?;
        let student =
            run_distillation(&init, &emb, &public, &self.cfg.distill_config(), self.seed(Stream::Distill)).stage(STAGE)?;
        write_file(STAGE, &self.path(artifacts::STUDENT), &formats::encode_model(&student))
    }

    fn split(&self) -> Result<()> {
        const STAGE: &str = "split";
        let student = self.read_model(STAGE, artifacts::STUDENT)?;
        let local = self.local_data(STAGE)?;
        let (train, val) = (local.train(), local.val());
        let range = match self.cfg.split.range {
            Some([lo, hi]) => (lo, hi),
            None => default_range(student.blocks().len()),
        };
        let report = find_optimal_split(
            &student,
            ProbeData { train: &train, test: &val },
            range,
            &self.cfg.probe_config(),
            self.seed(Stream::Split),
        )
        .stage(STAGE)?;
        split_table(&report).write(STAGE, &self.path(artifacts::SPLIT_REPORT))
    }

    fn joint_train(&self) -> Result<()> {
        const STAGE: &str = "joint-train";
        let student = self.read_model(STAGE, artifacts::STUDENT)?;
        let emb = self.read_embeddings(STAGE)?;
        let index = self.split_index(STAGE)?;
        let public = self.public_data(STAGE)?;
        let joint =
            joint_train(&student, index, &emb, &public, &self.cfg.joint_config(), self.seed(Stream::Joint)).stage(STAGE)?;
        let bytes = formats::encode_model(&joint);
        write_file(STAGE, &self.path(artifacts::JOINT), &bytes)?;
        let joint = formats::decode_model(&bytes).expect("freshly encoded");
        let (part, remainder) = joint.split_at(index).stage(STAGE)?;
        write_file(STAGE, &self.path(artifacts::PART), &formats::encode_model(&part))?;
        write_file(STAGE, &self.path(artifacts::REMAINDER), &formats::encode_model(&remainder))
    }

    fn quantize(&self) -> Result<()> {
        const STAGE: &str = "quantize";
        if !self.cfg.quant.enabled {
            return Ok(());
        }
        let joint = self.read_model(STAGE, artifacts::JOINT)?;
        let index = self.split_index(STAGE)?;
        let local = self.local_data(STAGE)?;
        let train = self.device_train_data(&local);
        let n = self.cfg.quant.calibration_samples.min(train.len());
        let q = quantize(&joint.without_head(), &train.inputs()[..n]).stage(STAGE)?;
        let (part, remainder) = q.split_at(index).stage(STAGE)?;
        write_file(STAGE, &self.path(artifacts::PART_QUANT), &formats::encode_quant(&part))?;
        write_file(STAGE, &self.path(artifacts::REMAINDER_QUANT), &formats::encode_quant(&remainder))
    }

    /// The extractors the device runs: int8 when quantization is enabled.
    pub fn extractors(&self, stage: &'static str) -> Result<Extractors> {
        if self.cfg.quant.enabled {
            let part = read_file(stage, &self.path(artifacts::PART_QUANT), formats::decode_quant)?;
            let remainder = read_file(stage, &self.path(artifacts::REMAINDER_QUANT), formats::decode_quant)?;
            Ok(Extractors {
                bytes: quant_bytes(&part) + quant_bytes(&remainder),
                part: Box::new(part),
                remainder: Box::new(remainder),
                quantized: true,
            })
        } else {
            let part = self.read_model(stage, artifacts::PART)?;
            let remainder = self.read_model(stage, artifacts::REMAINDER)?;
            Ok(Extractors {
                bytes: float_bytes(&part) + float_bytes(&remainder),
                part: Box::new(part),
                remainder: Box::new(remainder),
                quantized: false,
            })
        }
    }

    fn epoch_order(&self, epoch: u64) -> EpochOrder {
        if self.cfg.device.shuffle {
            EpochOrder::Shuffled {
                seed: self.seed(Stream::DeviceOrder).wrapping_add(epoch),
            }
        } else {
            EpochOrder::Fixed
        }
    }

    fn device_train(&self) -> Result<()> {
        const STAGE: &str = "device-train";
        let ex = self.extractors(STAGE)?;
        let local = self.local_data(STAGE)?;
        let train = self.device_train_data(&local);
        let dc = &self.cfg.device;
        let classes = local.dataset.classes();
        let spec = self.cfg.classifier_spec();
        let part_dim: usize = ex.part.output_shape().iter().product();
        let full_dim: usize = ex.remainder.output_shape().iter().product();

        let mut device = Device::new(MemoryBudget::new(dc.sram_bytes, dc.flash_bytes));
        device.load_extractor(ex.bytes).stage(STAGE)?;
        let mut part_clf = device
            .build_classifier_with(part_dim, classes, dc.lr, &spec, self.seed(Stream::PartClassifier))
            .stage(STAGE)?;
        let mut full_clf = device
            .build_classifier_with(full_dim, classes, dc.lr, &spec, self.seed(Stream::FullClassifier))
            .stage(STAGE)?;
        let mut part_store = EmbeddingStore::new(part_dim);
        let mut full_store = EmbeddingStore::new(full_dim);

        let mut order: Vec<usize> = (0..train.len()).collect();
        if let EpochOrder::Shuffled { seed } = self.epoch_order(0) {
            order.shuffle(&mut seeded_rng(seed));
        }
        let mut trainer = StageTrainer::new(&*ex.part, &*ex.remainder).stage(STAGE)?;
        let (mut part_loss, mut full_loss) = (0.0, 0.0);
        for &i in &order {
            let (x, y) = (train.input(i), train.label(i));
            trainer.begin(x).stage(STAGE)?;
            let part_features = trainer.part_features().stage(STAGE)?;
            part_loss += trainer.train_part(&mut part_clf, y).stage(STAGE)?;
            let (loss, full_features) = trainer.train_full(&mut full_clf, y).stage(STAGE)?;
            full_loss += loss;
            device
                .store_embedding(&mut part_store, EmbeddingRecord::from_tensor(y, &part_features))
                .stage(STAGE)?;
            device
                .store_embedding(&mut full_store, EmbeddingRecord::from_tensor(y, &full_features))
                .stage(STAGE)?;
        }
        let n = train.len() as f64;
        let mut log = Table::new(&["epoch", "part_loss", "full_loss"]);
        log.comment(format!("train_samples={}", train.len()))
            .comment(format!("extractor={}", if ex.quantized { "int8" } else { "float" }))
            .comment(format!("part_forward_calls={}", trainer.part_forward_calls()))
            .comment("epoch 1 is stage-trained from a single part pass; later epochs train from stored embeddings");
        log.row(vec!["1".into(), (part_loss / n).to_string(), (full_loss / n).to_string()]);
        for epoch in 2..=dc.epochs {
            let order = self.epoch_order(epoch as u64);
            let p = device.train_stored(&mut part_clf, &part_store, 1, order).stage(STAGE)?;
            let f = device.train_stored(&mut full_clf, &full_store, 1, order).stage(STAGE)?;
            log.row(vec![epoch.to_string(), p[0].to_string(), f[0].to_string()]);
        }
        log.comment(format!("sram_peak_bytes={}", device.budget.peak(Region::Sram)))
            .comment(format!("flash_used_bytes={}", device.budget.used(Region::Flash)));
        write_file(STAGE, &self.path(artifacts::PART_STORE), &formats::encode_embedding_store(&part_store))?;
        write_file(STAGE, &self.path(artifacts::FULL_STORE), &formats::encode_embedding_store(&full_store))?;
        write_file(STAGE, &self.path(artifacts::PART_CLASSIFIER), &formats::encode_classifier(&part_clf))?;
        write_file(STAGE, &self.path(artifacts::FULL_CLASSIFIER), &formats::encode_classifier(&full_clf))?;
        log.write(STAGE, &self.path(artifacts::DEVICE_LOG))
    }

    fn calibrate(&self) -> Result<()> {
        const STAGE: &str = "calibrate";
        let ex = self.extractors(STAGE)?;
        let part_clf = self.read_classifier(STAGE, artifacts::PART_CLASSIFIER)?;
        let full_clf = self.read_classifier(STAGE, artifacts::FULL_CLASSIFIER)?;
        let pipe = StagePipeline::new(&*ex.part, &*ex.remainder, &part_clf, &full_clf).stage(STAGE)?;
        // Held-out samples: the device classifiers are overconfident on
        // the samples they were trained on.
        let local = self.local_data(STAGE)?;
        let val = local.val();
        let mut idx: Vec<usize> = (0..val.len()).collect();
        if let Some(n) = self.cfg.stage.calibration_samples {
            idx.shuffle(&mut seeded_rng(self.seed(Stream::Calibration)));
            idx.truncate(n);
        }
        let samples: Vec<Tensor> = idx.iter().map(|&i| val.input(i).clone()).collect();
        let calib = pipe.calibrate(&samples, 1.0).stage(STAGE)?;
        let mut t = Table::new(&["rank", "confidence"]);
        t.comment("confidence=max softmax probability of the part head")
            .comment("calibration population=validation split")
            .comment(format!("n_samples={}", calib.n_samples))
            .comment(format!("median={}", calib.median));
        for (i, c) in calib.confidences.iter().enumerate() {
            t.row(vec![i.to_string(), c.to_string()]);
        }
        t.write(STAGE, &self.path(artifacts::CALIBRATION))
    }

    fn read_calibration(&self, stage: &'static str) -> Result<CalibrationResult> {
        let path = self.path(artifacts::CALIBRATION);
        let confidences: Vec<f64> = Table::read(stage, &path)?.parse_column(stage, &path, "confidence")?;
        CalibrationResult::from_confidences(confidences, 1.0).stage(stage)
    }

    fn infer(&self) -> Result<()> {
        const STAGE: &str = "infer";
        let ex = self.extractors(STAGE)?;
        let part_clf = self.read_classifier(STAGE, artifacts::PART_CLASSIFIER)?;
        let full_clf = self.read_classifier(STAGE, artifacts::FULL_CLASSIFIER)?;
        let pipe = StagePipeline::new(&*ex.part, &*ex.remainder, &part_clf, &full_clf).stage(STAGE)?;
        let calib = self.read_calibration(STAGE)?;
        let local = self.local_data(STAGE)?;
        let test = local.test();
        let (inputs, labels) = (test.inputs(), Some(test.labels()));

        let outcome = pipe.route(calib.threshold, inputs, labels).stage(STAGE)?;
        routing_table(&outcome).write(STAGE, &self.path(artifacts::ROUTING_LOG))?;

        let mut factors: Vec<(Option<f64>, f64)> = self.cfg.stage.adjust_factors.iter().map(|&f| (None, f)).collect();
        for r in TARGET_RATIOS {
            factors.push((Some(r), factor_for_ratio(&calib, r)));
        }
        let rows = factors
            .iter()
            .map(|&(target, f)| {
                let row = pipe.sweep_ratio(&calib, inputs, labels, &[f]).stage(STAGE)?;
                Ok((target, row.into_iter().next().expect("one factor")))
            })
            .collect::<Result<Vec<(Option<f64>, SweepRow)>>>()?;
        sweep_table(&rows).write(STAGE, &self.path(artifacts::SWEEP))?;

        // Accuracy of the full path alone, of the part path alone, and of
        // an untrained full classifier.
        let mut full_correct = 0;
        let mut part_correct = 0;
        let mut untrained_correct = 0;
        let untrained = classifier(
            full_clf.feature_dim(),
            full_clf.classes(),
            full_clf.lr(),
            &self.cfg.classifier_spec(),
            self.seed(Stream::Untrained),
        )
        .stage(STAGE)?;
        for (x, y) in test.iter() {
            let boundary = ex.part.extract(x).stage(STAGE)?;
            let features = ex.remainder.extract(&boundary).stage(STAGE)?.flatten();
            let y = y as usize;
            full_correct += usize::from(full_clf.predict(&features).stage(STAGE)? == y);
            untrained_correct += usize::from(untrained.predict(&features).stage(STAGE)? == y);
            part_correct += usize::from(part_clf.predict(&boundary.flatten()).stage(STAGE)? == y);
        }
        let n = test.len() as f64;
        let full_only = ex.part.extractor_macs() + ex.remainder.extractor_macs() + full_clf.macs();
        let mut t = Table::new(&["method", "ratio", "accuracy", "macs_per_sample"]);
        t.comment(format!("test_samples={}", test.len()))
            .comment("none=untrained randomly initialized classifier on full features");
        t.row(vec!["none".into(), "0".into(), (untrained_correct as f64 / n).to_string(), full_only.to_string()]);
        t.row(vec!["head-only".into(), "0".into(), (full_correct as f64 / n).to_string(), full_only.to_string()]);
        t.row(vec!["part-only".into(), "1".into(), (part_correct as f64 / n).to_string(), pipe.part_macs().to_string()]);
        let mean_macs = outcome.total_macs() as f64 / n;
        t.row(vec![
            "stage-decision".into(),
            outcome.ratio.to_string(),
            outcome.accuracy().expect("labelled").to_string(),
            mean_macs.to_string(),
        ]);
        t.write(STAGE, &self.path(artifacts::BASELINES))
    }

    fn report(&self) -> Result<()> {
        const STAGE: &str = "report";
        let ex = self.extractors(STAGE)?;
        let part_clf = self.read_classifier(STAGE, artifacts::PART_CLASSIFIER)?;
        let full_clf = self.read_classifier(STAGE, artifacts::FULL_CLASSIFIER)?;
        let pipe = StagePipeline::new(&*ex.part, &*ex.remainder, &part_clf, &full_clf).stage(STAGE)?;
        let (mac_part, mac_full) = (pipe.part_macs(), pipe.full_macs());
        let jpm = self.cfg.cost.joules_per_mac;

        let sweep_path = self.path(artifacts::SWEEP);
        let sweep = Table::read(STAGE, &sweep_path)?;
        let factors: Vec<f64> = sweep.parse_column(STAGE, &sweep_path, "factor")?;
        let ratios: Vec<f64> = sweep.parse_column(STAGE, &sweep_path, "ratio")?;
        let accuracies: Vec<String> = sweep.parse_column(STAGE, &sweep_path, "accuracy")?;
        let targets: Vec<String> = sweep.parse_column(STAGE, &sweep_path, "target_ratio")?;
        let base_path = self.path(artifacts::BASELINES);
        let base = Table::read(STAGE, &base_path)?;
        let calib = self.read_calibration(STAGE)?;
        let split_index = self.split_index(STAGE)?;

        let mut cost = Table::new(&[
            "model",
            "ratio",
            "mac_part",
            "mac_full",
            "expected_macs",
            "proxy_energy",
            "savings_percent",
        ]);
        cost.comment("MAC-count proxy for energy; board power and runtime are not modelled")
            .comment(format!("joules_per_mac={jpm}"))
            .comment("mac_full is the early-exit full path: part extractor and head, remainder, full head");
        let mut summary = Table::new(&["method", "adjust_factor", "ratio", "accuracy", "macs_per_sample", "savings_percent"]);
        summary
            .comment(format!("split_index={split_index}"))
            .comment(format!("extractor={}", if ex.quantized { "int8" } else { "float" }))
            .comment(format!("calibration_median={}", calib.median))
            .comment(format!("preprocessing={PREPROCESSING}"));
        for row in &base.rows {
            let macs: f64 = row[3].parse().unwrap_or(f64::NAN);
            let saved = savings(mac_full as f64, macs).stage(STAGE)?;
            summary.row(vec![row[0].clone(), String::new(), row[1].clone(), row[2].clone(), row[3].clone(), saved.to_string()]);
        }
        let full = cost_report(mac_part, mac_full, 0.0, jpm).stage(STAGE)?;
        cost.row(vec![
            "full-only".into(),
            "0".into(),
            mac_part.to_string(),
            mac_full.to_string(),
            full.expected_macs.to_string(),
            full.proxy_energy.to_string(),
            full.savings_percent.to_string(),
        ]);
        let mut text = String::new();
        text.push_str(&format!("split index {split_index}, part MACs {mac_part}, full-path MACs {mac_full}\n"));
        text.push_str(&format!("calibration median confidence {}\n\n", calib.median));
        for row in &base.rows {
            text.push_str(&format!("{:<15} ratio {:<6} accuracy {}\n", row[0], row[1], row[2]));
        }
        text.push('\n');
        for i in 0..factors.len() {
            let c = cost_report(mac_part, mac_full, ratios[i], jpm).stage(STAGE)?;
            let label = if targets[i].is_empty() {
                format!("stage-decision x{}", factors[i])
            } else {
                format!("stage-decision target {}", targets[i])
            };
            cost.row(vec![
                label.clone(),
                ratios[i].to_string(),
                mac_part.to_string(),
                mac_full.to_string(),
                c.expected_macs.to_string(),
                c.proxy_energy.to_string(),
                c.savings_percent.to_string(),
            ]);
            summary.row(vec![
                "stage-decision".into(),
                factors[i].to_string(),
                ratios[i].to_string(),
                accuracies[i].clone(),
                c.expected_macs.to_string(),
                c.savings_percent.to_string(),
            ]);
            text.push_str(&format!(
                "{label:<32} ratio {:.3} accuracy {:<8} expected MACs {:.1} savings {:.2}%\n",
                ratios[i], accuracies[i], c.expected_macs, c.savings_percent
            ));
        }
        summary.write(STAGE, &self.path(artifacts::SUMMARY))?;
        cost.write(STAGE, &self.path(artifacts::COST_REPORT))?;
        write_file(STAGE, &self.path(artifacts::SUMMARY_TEXT), text.as_bytes())
    }
}

/// Adjust factor whose threshold lets roughly `ratio` of the calibration
/// population exit early.
pub fn factor_for_ratio(calib: &CalibrationResult, ratio: f64) -> f64 {
    let c = &calib.confidences;
    let k = ((1.0 - ratio) * c.len() as f64).floor() as usize;
    let threshold = c[k.min(c.len() - 1)];
    if calib.median > 0.0 {
        threshold / calib.median
    } else {
        1.0
    }
}
