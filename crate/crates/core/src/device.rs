//! Simulated microcontroller side: single-layer classifiers trained with
//! batch size one, stage-training of the part and full classifiers from a
//! single part-extractor pass, embedding storage, and SRAM/flash counters.

use alloc::vec::Vec;

use rand::seq::SliceRandom;

use crate::distill::cross_entropy_grad;
use crate::net::{BlockNet, BlockSpec, Extractor, GradientTape, HeadSpec, Init, NetSpec};
use crate::tensor::Tensor;
use crate::{math, seeded_rng, Error, Result};

/// Bytes per stored scalar on the device.
pub const SCALAR_BYTES: usize = 4;
/// Per-record header on flash: label and sequence number, both `u32`.
pub const RECORD_HEADER_BYTES: usize = 8;

/// Flash bytes taken by one stored embedding of `dim` features.
pub const fn record_footprint(dim: usize) -> usize {
    RECORD_HEADER_BYTES + dim * SCALAR_BYTES
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Region {
    Sram,
    Flash,
}

impl Region {
    fn name(self) -> &'static str {
        match self {
            Region::Sram => "sram",
            Region::Flash => "flash",
        }
    }
}

/// SRAM and flash limits with live and peak counters.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MemoryBudget {
    pub sram_limit: usize,
    pub flash_limit: usize,
    sram_used: usize,
    flash_used: usize,
    sram_peak: usize,
    flash_peak: usize,
}

impl MemoryBudget {
    pub fn new(sram_limit: usize, flash_limit: usize) -> Self {
        MemoryBudget {
            sram_limit,
            flash_limit,
            sram_used: 0,
            flash_used: 0,
            sram_peak: 0,
            flash_peak: 0,
        }
    }

    pub fn used(&self, region: Region) -> usize {
        match region {
            Region::Sram => self.sram_used,
            Region::Flash => self.flash_used,
        }
    }

    pub fn peak(&self, region: Region) -> usize {
        match region {
            Region::Sram => self.sram_peak,
            Region::Flash => self.flash_peak,
        }
    }

    pub fn available(&self, region: Region) -> usize {
        match region {
            Region::Sram => self.sram_limit - self.sram_used,
            Region::Flash => self.flash_limit - self.flash_used,
        }
    }

    pub fn allocate(&mut self, region: Region, bytes: usize) -> Result<()> {
        let available = self.available(region);
        if bytes > available {
            return Err(Error::BudgetExceeded {
                counter: region.name(),
                requested: bytes,
                available,
            });
        }
        let (used, peak) = match region {
            Region::Sram => (&mut self.sram_used, &mut self.sram_peak),
            Region::Flash => (&mut self.flash_used, &mut self.flash_peak),
        };
        *used += bytes;
        *peak = (*peak).max(*used);
        Ok(())
    }

    pub fn free(&mut self, region: Region, bytes: usize) {
        let used = match region {
            Region::Sram => &mut self.sram_used,
            Region::Flash => &mut self.flash_used,
        };
        debug_assert!(bytes <= *used, "freeing more than allocated");
        *used = used.saturating_sub(bytes);
    }
}

/// A stored `(label, features)` pair written by the extractor.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingRecord {
    pub label: u32,
    pub features: Vec<f32>,
}

impl EmbeddingRecord {
    pub fn from_tensor(label: u32, t: &Tensor) -> Self {
        EmbeddingRecord {
            label,
            features: t.data().iter().map(|&v| v as f32).collect(),
        }
    }

    pub fn to_tensor(&self) -> Tensor {
        Tensor::vector(self.features.iter().map(|&v| f64::from(v)).collect())
    }
}

/// Classifier layout: optional hidden ReLU layers before a dense+softmax head.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierSpec {
    pub hidden: Vec<usize>,
    pub temperature: f64,
    pub init: Init,
}

impl Default for ClassifierSpec {
    fn default() -> Self {
        ClassifierSpec {
            hidden: Vec::new(),
            temperature: 1.0,
            init: Init::FanUniform,
        }
    }
}

/// Buffers charged for one classifier, in scalars.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Footprint {
    pub weights: usize,
    pub biases: usize,
    pub outputs: usize,
    pub errors: usize,
}

impl Footprint {
    pub fn bytes(&self) -> usize {
        (self.weights + self.biases + self.outputs + self.errors) * SCALAR_BYTES
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeviceClassifier {
    net: BlockNet,
    lr: f64,
}

impl DeviceClassifier {
    /// Wraps an existing classifier network (e.g. a restored checkpoint).
    pub fn from_net(net: BlockNet, lr: f64) -> Result<Self> {
        let head = net.head().ok_or_else(|| Error::invalid("classifier needs a head"))?;
        if head.classes() < 2 {
            return Err(Error::invalid("classifier needs at least two classes"));
        }
        if net.input_shape().len() != 1 {
            return Err(Error::invalid("classifier input must be a flat feature vector"));
        }
        if !(lr >= 0.0) || !lr.is_finite() {
            return Err(Error::invalid("learning rate must be finite and non-negative"));
        }
        Ok(DeviceClassifier { net, lr })
    }

    pub fn net(&self) -> &BlockNet {
        &self.net
    }

    pub fn lr(&self) -> f64 {
        self.lr
    }

    pub fn feature_dim(&self) -> usize {
        self.net.input_shape()[0]
    }

    pub fn classes(&self) -> usize {
        self.net.head().expect("checked at construction").classes()
    }

    pub fn macs(&self) -> u64 {
        self.net.macs()
    }

    pub fn footprint(&self) -> Footprint {
        let mut weights = 0;
        let mut biases = 0;
        let mut outputs = 0;
        for p in self.net.params() {
            if p.shape().len() == 2 {
                weights += p.len();
            } else {
                biases += p.len();
                outputs += p.len();
            }
        }
        Footprint {
            weights,
            biases,
            outputs,
            errors: outputs,
        }
    }

    fn check_dim(&self, n: usize) -> Result<()> {
        if n != self.feature_dim() {
            return Err(Error::Dimension {
                context: "classifier input",
                expected: self.feature_dim(),
                found: n,
            });
        }
        Ok(())
    }

    /// Class probabilities for one feature vector.
    pub fn probabilities(&self, features: &Tensor) -> Result<Tensor> {
        self.check_dim(features.len())?;
        let x = features.clone().reshape(self.net.input_shape())?;
        self.net.predict(&x)
    }

    pub fn predict(&self, features: &Tensor) -> Result<usize> {
        Ok(math::argmax(self.probabilities(features)?.data()))
    }

    /// Loss and gradients of one labelled sample.
    fn sample_grad(&self, features: &Tensor, label: u32) -> Result<(f64, GradientTape)> {
        self.check_dim(features.len())?;
        let x = features.clone().reshape(self.net.input_shape())?;
        let acts = self.net.forward(&x)?;
        let logits = acts.logits().expect("classifier has a head");
        let temperature = self.net.head().expect("head").temperature;
        let (loss, mut g) = cross_entropy_grad(
            &logits.data().iter().map(|v| v / temperature).collect::<Vec<_>>(),
            label as usize,
        )?;
        if !loss.is_finite() {
            return Err(Error::NonFiniteLoss {
                stage: "device-train",
                step: 0,
            });
        }
        g.iter_mut().for_each(|v| *v /= temperature);
        Ok((loss, self.net.backward_logits(&Tensor::vector(g), &acts)?))
    }

    /// One forward, softmax cross-entropy, backward and SGD update on a
    /// single sample. Returns the loss before the update.
    pub fn train_step(&mut self, rec: &EmbeddingRecord) -> Result<f64> {
        self.train_step_tensor(&rec.to_tensor(), rec.label)
    }

    pub fn train_step_tensor(&mut self, features: &Tensor, label: u32) -> Result<f64> {
        let (loss, tape) = self.sample_grad(features, label)?;
        self.net.sgd_step(&tape, self.lr)?;
        Ok(loss)
    }

    pub fn accuracy(&self, records: &[EmbeddingRecord]) -> Result<f64> {
        if records.is_empty() {
            return Err(Error::Empty("evaluation records"));
        }
        let mut correct = 0;
        for r in records {
            if self.predict(&r.to_tensor())? == r.label as usize {
                correct += 1;
            }
        }
        Ok(correct as f64 / records.len() as f64)
    }
}

/// Builds an untrained classifier without touching any memory budget.
pub fn classifier(feature_dim: usize, classes: usize, lr: f64, spec: &ClassifierSpec, seed: u64) -> Result<DeviceClassifier> {
    if feature_dim == 0 {
        return Err(Error::invalid("feature dimension must be positive"));
    }
    if classes < 2 {
        return Err(Error::invalid("classifier needs at least two classes"));
    }
    let mut blocks = Vec::new();
    let mut width = feature_dim;
    for &h in &spec.hidden {
        blocks.push(BlockSpec::Dense { inputs: width, outputs: h });
        blocks.push(BlockSpec::Relu);
        width = h;
    }
    let net = BlockNet::seeded_init(
        &NetSpec {
            input_shape: alloc::vec![feature_dim],
            blocks,
            head: Some(HeadSpec {
                classes,
                temperature: spec.temperature,
                init: spec.init,
            }),
        },
        seed,
    )?;
    DeviceClassifier::from_net(net, lr)
}

/// Order of samples within each epoch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum EpochOrder {
    #[default]
    Fixed,
    Shuffled { seed: u64 },
}

fn epoch_orders(n: usize, epochs: usize, order: EpochOrder) -> impl Iterator<Item = Vec<usize>> {
    let mut rng = match order {
        EpochOrder::Shuffled { seed } => Some(seeded_rng(seed)),
        EpochOrder::Fixed => None,
    };
    (0..epochs).map(move |_| {
        let mut idx: Vec<usize> = (0..n).collect();
        if let Some(r) = rng.as_mut() {
            idx.shuffle(r);
        }
        idx
    })
}

/// Batch-size-one training over stored records; returns the mean loss of
/// each epoch.
pub fn train_epochs(
    clf: &mut DeviceClassifier,
    records: &[EmbeddingRecord],
    epochs: usize,
    order: EpochOrder,
) -> Result<Vec<f64>> {
    if records.is_empty() {
        return Err(Error::Empty("training records"));
    }
    let mut losses = Vec::with_capacity(epochs);
    for idx in epoch_orders(records.len(), epochs, order) {
        let mut sum = 0.0;
        for i in idx {
            sum += clf.train_step(&records[i])?;
        }
        losses.push(sum / records.len() as f64);
    }
    Ok(losses)
}

/// Minibatch SGD with gradients averaged over `batch` samples; the
/// reference the batch-one trainer is compared against.
pub fn train_batched(
    clf: &mut DeviceClassifier,
    records: &[EmbeddingRecord],
    epochs: usize,
    batch: usize,
    order: EpochOrder,
) -> Result<()> {
    if records.is_empty() || batch == 0 {
        return Err(Error::Empty("training records"));
    }
    for idx in epoch_orders(records.len(), epochs, order) {
        for chunk in idx.chunks(batch) {
            let mut tape = GradientTape::zeros_like(&clf.net);
            for &i in chunk {
                let (_, t) = clf.sample_grad(&records[i].to_tensor(), records[i].label)?;
                tape.accumulate(&t)?;
            }
            if chunk.len() > 1 {
                tape.scale(1.0 / chunk.len() as f64);
            }
            clf.net.sgd_step(&tape, clf.lr)?;
        }
    }
    Ok(())
}

/// Device-side session: a memory budget plus what currently occupies it.
#[derive(Debug, Clone, PartialEq)]
pub struct Device {
    pub budget: MemoryBudget,
    extractor_bytes: usize,
}

impl Device {
    pub fn new(budget: MemoryBudget) -> Self {
        Device {
            budget,
            extractor_bytes: 0,
        }
    }

    /// Charges a resident feature extractor of `bytes` to SRAM.
    pub fn load_extractor(&mut self, bytes: usize) -> Result<()> {
        self.offload_extractor();
        self.budget.allocate(Region::Sram, bytes)?;
        self.extractor_bytes = bytes;
        Ok(())
    }

    pub fn offload_extractor(&mut self) {
        self.budget.free(Region::Sram, self.extractor_bytes);
        self.extractor_bytes = 0;
    }

    pub fn extractor_resident(&self) -> usize {
        self.extractor_bytes
    }

    /// Allocates weight, bias, output and error arrays, then seeds the weights.
    pub fn build_classifier(&mut self, feature_dim: usize, classes: usize, lr: f64, seed: u64) -> Result<DeviceClassifier> {
        self.build_classifier_with(feature_dim, classes, lr, &ClassifierSpec::default(), seed)
    }

    pub fn build_classifier_with(
        &mut self,
        feature_dim: usize,
        classes: usize,
        lr: f64,
        spec: &ClassifierSpec,
        seed: u64,
    ) -> Result<DeviceClassifier> {
        let clf = classifier(feature_dim, classes, lr, spec, seed)?;
        self.budget.allocate(Region::Sram, clf.footprint().bytes())?;
        Ok(clf)
    }

    pub fn release_classifier(&mut self, clf: DeviceClassifier) {
        self.budget.free(Region::Sram, clf.footprint().bytes());
    }

    /// Appends a record to flash-backed storage.
    pub fn store_embedding(&mut self, store: &mut EmbeddingStore, rec: EmbeddingRecord) -> Result<()> {
        if rec.features.len() != store.dim {
            return Err(Error::Dimension {
                context: "stored embedding",
                expected: store.dim,
                found: rec.features.len(),
            });
        }
        self.budget.allocate(Region::Flash, record_footprint(store.dim))?;
        store.records.push(rec);
        Ok(())
    }

    pub fn erase_store(&mut self, store: &mut EmbeddingStore) {
        self.budget.free(Region::Flash, store.records.len() * record_footprint(store.dim));
        store.records.clear();
    }

    /// Classifier-only training from stored embeddings. The extractor is
    /// offloaded first, so only the classifier occupies SRAM.
    pub fn train_stored(
        &mut self,
        clf: &mut DeviceClassifier,
        store: &EmbeddingStore,
        epochs: usize,
        order: EpochOrder,
    ) -> Result<Vec<f64>> {
        self.offload_extractor();
        train_epochs(clf, &store.records, epochs, order)
    }
}

/// Embeddings kept in flash for deferred training.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingStore {
    dim: usize,
    records: Vec<EmbeddingRecord>,
}

impl EmbeddingStore {
    pub fn new(dim: usize) -> Self {
        EmbeddingStore {
            dim,
            records: Vec::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn records(&self) -> &[EmbeddingRecord] {
        &self.records
    }

    /// Records of `dim` features that fit in `flash_bytes`.
    pub fn capacity(dim: usize, flash_bytes: usize) -> usize {
        flash_bytes / record_footprint(dim)
    }
}

/// Boundary activation of the current sample, valid between the part pass
/// and the full continuation.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct StageCache {
    boundary: Option<Tensor>,
    part_trained: bool,
}

/// Trains part and full classifiers from a single pass through the part
/// extractor per sample. Extractors are only borrowed immutably.
#[derive(Debug)]
pub struct StageTrainer<'a, P: Extractor + ?Sized, R: Extractor + ?Sized> {
    part: &'a P,
    remainder: &'a R,
    cache: StageCache,
    part_forward_calls: usize,
}

/// Losses of one stage-training step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StageLosses {
    pub part: f64,
    pub full: f64,
}

impl<'a, P: Extractor + ?Sized, R: Extractor + ?Sized> StageTrainer<'a, P, R> {
    pub fn new(part: &'a P, remainder: &'a R) -> Result<Self> {
        if part.output_shape().iter().product::<usize>() == 0 {
            return Err(Error::invalid("empty part output"));
        }
        Ok(StageTrainer {
            part,
            remainder,
            cache: StageCache::default(),
            part_forward_calls: 0,
        })
    }

    pub fn part_forward_calls(&self) -> usize {
        self.part_forward_calls
    }

    /// Runs the part extractor and caches the boundary activation.
    pub fn begin(&mut self, input: &Tensor) -> Result<()> {
        if self.cache.boundary.is_some() {
            return Err(Error::CacheInvalidated("previous sample not finished"));
        }
        let boundary = self.part.extract(input)?;
        self.part_forward_calls += 1;
        self.cache = StageCache {
            boundary: Some(boundary),
            part_trained: false,
        };
        Ok(())
    }

    /// The cached boundary as the part classifier's input.
    pub fn part_features(&self) -> Result<Tensor> {
        let b = self
            .cache
            .boundary
            .as_ref()
            .ok_or(Error::CacheInvalidated("no boundary cached"))?;
        Ok(b.clone().flatten())
    }

    pub fn train_part(&mut self, part_clf: &mut DeviceClassifier, label: u32) -> Result<f64> {
        if self.cache.part_trained {
            return Err(Error::CacheInvalidated("part classifier already trained on this sample"));
        }
        let x = self.part_features()?;
        let loss = part_clf.train_step_tensor(&x, label)?;
        self.cache.part_trained = true;
        Ok(loss)
    }

    /// Continues from the cached boundary through the remainder, trains the
    /// full classifier and clears the cache.
    pub fn train_full(&mut self, full_clf: &mut DeviceClassifier, label: u32) -> Result<(f64, Tensor)> {
        if !self.cache.part_trained {
            return Err(Error::CacheInvalidated("part classifier must be trained first"));
        }
        let boundary = self
            .cache
            .boundary
            .take()
            .ok_or(Error::CacheInvalidated("no boundary cached"))?;
        let features = self.remainder.extract(&boundary)?.flatten();
        let loss = full_clf.train_step_tensor(&features, label)?;
        self.cache = StageCache::default();
        Ok((loss, features))
    }

    /// `begin`, `train_part` and `train_full` for one labelled sample.
    pub fn stage_train(
        &mut self,
        part_clf: &mut DeviceClassifier,
        full_clf: &mut DeviceClassifier,
        input: &Tensor,
        label: u32,
    ) -> Result<StageLosses> {
        self.begin(input)?;
        let part = self.train_part(part_clf, label)?;
        let (full, _) = self.train_full(full_clf, label)?;
        Ok(StageLosses { part, full })
    }

    /// Single pass producing both embeddings of a sample for storage.
    pub fn embed(&mut self, input: &Tensor) -> Result<(Tensor, Tensor)> {
        self.begin(input)?;
        let part = self.part_features()?;
        let boundary = self.cache.boundary.take().expect("just cached");
        self.cache = StageCache::default();
        let full = self.remainder.extract(&boundary)?.flatten();
        Ok((part, full))
    }
}
