//! Optimization loop, evaluation metrics, checkpoints and ablations.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::augmentation::{AugmentConfig, AugmentMode};
use crate::config::KeyValues;
use crate::dataset::{Dataset, DatasetIndex, EpochPlan, LoadOptions, Split};
use crate::error::{Error, Result};
use crate::model::{argmax, Model, ModelConfig, Parameters, RunMode, SkipMode};
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq)]
pub struct AdamHyper {
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamHyper {
    fn default() -> Self {
        AdamHyper {
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub adam: AdamHyper,
    pub seed: u64,
    /// Cosine decay from `learning_rate` to `min_learning_rate` over the run.
    pub cosine: bool,
    pub min_learning_rate: f64,
    pub n_points: usize,
    pub augment: AugmentMode,
    /// Random FPS start points during training instead of the
    /// lexicographic minimum.
    pub random_fps_start: bool,
    /// Evaluate every this many epochs (and always after the last).
    pub eval_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 32,
            epochs: 200,
            learning_rate: 0.001,
            adam: AdamHyper::default(),
            seed: 0,
            cosine: true,
            min_learning_rate: 1e-5,
            n_points: 1024,
            augment: AugmentMode::None,
            random_fps_start: false,
            eval_every: 1,
        }
    }
}

const TRAIN_KEYS: [&str; 13] = [
    "batch_size",
    "epochs",
    "learning_rate",
    "beta1",
    "beta2",
    "epsilon",
    "seed",
    "cosine",
    "min_learning_rate",
    "n_points",
    "augment",
    "random_fps_start",
    "eval_every",
];

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.batch_size == 0 || self.epochs == 0 || self.n_points == 0 || self.eval_every == 0 {
            return bad("batch size, epochs, point count and eval interval must be at least 1");
        }
        if !(self.learning_rate >= 0.0 && self.min_learning_rate >= 0.0) {
            return bad("learning rates must be non-negative");
        }
        let a = &self.adam;
        if !((0.0..1.0).contains(&a.beta1) && (0.0..1.0).contains(&a.beta2) && a.epsilon > 0.0) {
            return bad("Adam betas must lie in [0, 1) and epsilon must be positive");
        }
        Ok(())
    }

    pub fn is_train_key(key: &str) -> bool {
        TRAIN_KEYS.contains(&key)
    }

    pub fn apply(&mut self, kv: &KeyValues) -> Result<()> {
        macro_rules! set {
            ($key:literal, $field:expr) => {
                if let Some(v) = kv.parsed($key)? {
                    $field = v;
                }
            };
        }
        set!("batch_size", self.batch_size);
        set!("epochs", self.epochs);
        set!("learning_rate", self.learning_rate);
        set!("beta1", self.adam.beta1);
        set!("beta2", self.adam.beta2);
        set!("epsilon", self.adam.epsilon);
        set!("seed", self.seed);
        set!("cosine", self.cosine);
        set!("min_learning_rate", self.min_learning_rate);
        set!("n_points", self.n_points);
        set!("augment", self.augment);
        set!("random_fps_start", self.random_fps_start);
        set!("eval_every", self.eval_every);
        self.validate()
    }

    /// Learning rate used during `epoch` (0-based).
    pub fn lr_at(&self, epoch: usize) -> f64 {
        if !self.cosine || self.epochs <= 1 {
            return self.learning_rate;
        }
        let floor = self.min_learning_rate.min(self.learning_rate);
        let t = epoch as f64 / (self.epochs - 1) as f64;
        floor + 0.5 * (self.learning_rate - floor) * (1.0 + (PI * t).cos())
    }

    fn step_seed(&self, step: u64) -> u64 {
        self.seed ^ step.wrapping_add(1).wrapping_mul(0xd1b5_4a32_d192_ed03)
    }
}

/// One bias-corrected Adam update of a flat parameter block.
pub fn adam_update(
    w: &mut [f64],
    g: &[f64],
    m: &mut [f64],
    v: &mut [f64],
    t: u64,
    lr: f64,
    hp: &AdamHyper,
) -> Result<()> {
    let n = w.len();
    if g.len() != n || m.len() != n || v.len() != n {
        return Err(Error::State(format!(
            "Adam block of {n} values got {} gradients and moments of {}/{}",
            g.len(),
            m.len(),
            v.len()
        )));
    }
    if t == 0 {
        return Err(Error::State("Adam step counter starts at 1".into()));
    }
    let c1 = 1.0 - hp.beta1.powi(t as i32);
    let c2 = 1.0 - hp.beta2.powi(t as i32);
    for i in 0..n {
        m[i] = hp.beta1 * m[i] + (1.0 - hp.beta1) * g[i];
        v[i] = hp.beta2 * v[i] + (1.0 - hp.beta2) * g[i] * g[i];
        let mh = m[i] / c1;
        let vh = v[i] / c2;
        w[i] -= lr * mh / (vh.sqrt() + hp.epsilon);
    }
    Ok(())
}

/// First and second moments per named parameter.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct AdamState {
    pub t: u64,
    pub m: BTreeMap<String, Vec<f64>>,
    pub v: BTreeMap<String, Vec<f64>>,
}

impl AdamState {
    /// Advances the step counter and updates every trainable tensor;
    /// parameters missing from `grads` see a zero gradient.
    pub fn step(
        &mut self,
        params: &mut Parameters,
        grads: &BTreeMap<String, Vec<f64>>,
        lr: f64,
        hp: &AdamHyper,
    ) -> Result<()> {
        if let Some(name) = grads.keys().find(|n| params.get(n).is_err()) {
            return Err(Error::State(format!("gradient for unknown parameter `{name}`")));
        }
        self.t += 1;
        for name in params.trainable_names() {
            let w = params.get_mut(&name).expect("listed name").data_mut();
            let n = w.len();
            let zero;
            let g = match grads.get(&name) {
                Some(g) => g.as_slice(),
                None => {
                    zero = vec![0.0; n];
                    &zero
                }
            };
            let m = self.m.entry(name.clone()).or_insert_with(|| vec![0.0; n]);
            let v = self.v.entry(name.clone()).or_insert_with(|| vec![0.0; n]);
            adam_update(w, g, m, v, self.t, lr, hp)?;
        }
        Ok(())
    }
}

/// Accuracy summary; confusion rows are true classes, columns predictions.
#[derive(Clone, Debug, PartialEq)]
pub struct EvalResult {
    pub overall_accuracy: f64,
    pub mean_class_accuracy: f64,
    pub confusion: Vec<Vec<usize>>,
}

impl EvalResult {
    pub fn from_confusion(confusion: Vec<Vec<usize>>) -> Self {
        let total: usize = confusion.iter().flatten().sum();
        let trace: usize = (0..confusion.len()).map(|i| confusion[i][i]).sum();
        let recalls: Vec<f64> = confusion
            .iter()
            .enumerate()
            .filter_map(|(i, row)| {
                let n: usize = row.iter().sum();
                (n > 0).then(|| row[i] as f64 / n as f64)
            })
            .collect();
        EvalResult {
            overall_accuracy: if total == 0 { 0.0 } else { trace as f64 / total as f64 },
            mean_class_accuracy: if recalls.is_empty() {
                0.0
            } else {
                recalls.iter().sum::<f64>() / recalls.len() as f64
            },
            confusion,
        }
    }

    pub fn from_predictions(labels: &[usize], predictions: &[usize], n_classes: usize) -> Result<Self> {
        if labels.len() != predictions.len() {
            return Err(Error::dim(format!(
                "{} labels but {} predictions",
                labels.len(),
                predictions.len()
            )));
        }
        let mut confusion = vec![vec![0; n_classes]; n_classes];
        for (i, (&l, &p)) in labels.iter().zip(predictions).enumerate() {
            if l >= n_classes || p >= n_classes {
                return Err(Error::Label {
                    index: i,
                    label: l.max(p),
                    classes: n_classes,
                });
            }
            confusion[l][p] += 1;
        }
        Ok(Self::from_confusion(confusion))
    }

    pub fn total(&self) -> usize {
        self.confusion.iter().flatten().sum()
    }

    /// `true_class,<predicted classes...>` with one row per class.
    pub fn write_confusion_csv(&self, classes: &[String], writer: impl Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["true_class".to_string()];
        header.extend(classes.iter().cloned());
        w.write_record(&header)?;
        for (c, row) in classes.iter().zip(&self.confusion) {
            let mut rec = vec![c.clone()];
            rec.extend(row.iter().map(usize::to_string));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

const EVAL_CHUNK: usize = 32;

/// Eval-mode predictions over a dataset, in dataset order.
pub fn predict_all(model: &Model, data: &Dataset) -> Result<Vec<usize>> {
    let mut preds = Vec::with_capacity(data.len());
    for chunk in data.clouds.chunks(EVAL_CHUNK) {
        let out = model.forward(chunk, RunMode::Eval, 0)?;
        let logits = out.forward.graph.value(out.logits);
        let k = logits.last_dim();
        preds.extend(logits.data().chunks_exact(k).map(argmax));
    }
    Ok(preds)
}

pub fn evaluate(model: &Model, data: &Dataset) -> Result<EvalResult> {
    if data.is_empty() {
        return Err(Error::Config("cannot evaluate an empty split".into()));
    }
    let preds = predict_all(model, data)?;
    EvalResult::from_predictions(&data.labels, &preds, model.config.n_classes)
}

/// Loads `split` of `index` and evaluates.
pub fn evaluate_index(model: &Model, index: &DatasetIndex, split: Split, opts: &LoadOptions) -> Result<EvalResult> {
    evaluate(model, &Dataset::load(index, split, opts)?)
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_oa: f64,
    pub eval_oa: Option<f64>,
    pub eval_macc: Option<f64>,
}

pub fn write_log_csv(log: &[EpochLog], writer: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["epoch", "train_loss", "train_oa", "eval_oa", "eval_macc"])?;
    let opt = |v: Option<f64>| v.map_or(String::new(), |x| x.to_string());
    for e in log {
        w.write_record([
            e.epoch.to_string(),
            e.train_loss.to_string(),
            e.train_oa.to_string(),
            opt(e.eval_oa),
            opt(e.eval_macc),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub struct TrainOutcome {
    /// Parameters from the epoch with the best eval OA (the last epoch when
    /// there is no eval split).
    pub best: Model,
    pub last: Model,
    pub best_epoch: usize,
    pub log: Vec<EpochLog>,
}

/// Where `train` writes its artifacts.
#[derive(Clone, Debug)]
pub struct TrainOutputs {
    pub dir: PathBuf,
    pub classes: Vec<String>,
}

impl TrainOutputs {
    pub fn checkpoint(&self) -> PathBuf {
        self.dir.join("checkpoint.pskn")
    }

    pub fn log(&self) -> PathBuf {
        self.dir.join("train_log.csv")
    }
}

/// Runs the optimization loop. Deterministic given the configs.
pub fn train(
    train_data: &Dataset,
    eval_data: Option<&Dataset>,
    model_cfg: &ModelConfig,
    cfg: &TrainConfig,
    outputs: Option<&TrainOutputs>,
    mut progress: impl FnMut(&EpochLog),
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if train_data.is_empty() {
        return Err(Error::Config("training split is empty".into()));
    }
    if train_data.classes.len() != model_cfg.n_classes {
        return Err(Error::Config(format!(
            "dataset has {} classes, model is configured for {}",
            train_data.classes.len(),
            model_cfg.n_classes
        )));
    }
    let mut model = Model::new(model_cfg.clone(), cfg.seed)?;
    let mut adam = AdamState::default();
    let augment = (cfg.augment != AugmentMode::None).then(|| AugmentConfig {
        mode: cfg.augment,
        seed: cfg.seed,
        ..Default::default()
    });
    if let Some(o) = outputs {
        std::fs::create_dir_all(&o.dir)?;
    }
    let mut log = Vec::with_capacity(cfg.epochs);
    let mut best: Option<(f64, usize, Model)> = None;
    let mut step = 0u64;
    for epoch in 0..cfg.epochs {
        let lr = cfg.lr_at(epoch);
        let plan = EpochPlan {
            seed: cfg.seed,
            epoch: epoch as u64,
            shuffle: true,
            augment: augment.clone(),
        };
        let (mut loss_sum, mut correct) = (0.0, 0usize);
        for batch in train_data.batches(cfg.batch_size, &plan)? {
            let mode = RunMode::Train {
                seed: cfg.step_seed(step),
                random_fps_start: cfg.random_fps_start,
            };
            step += 1;
            let out = model.forward(&batch.clouds, mode, 0)?;
            let mut fwd = out.forward;
            let k = fwd.graph.value(out.logits).last_dim();
            correct += fwd
                .graph
                .value(out.logits)
                .data()
                .chunks_exact(k)
                .zip(&batch.labels)
                .filter(|(row, &l)| argmax(row) == l)
                .count();
            let loss = fwd.graph.softmax_cross_entropy(out.logits, &batch.labels)?;
            loss_sum += fwd.graph.value(loss).data()[0] * batch.labels.len() as f64;
            fwd.graph.backward(loss)?;
            let grads: BTreeMap<String, Vec<f64>> = fwd
                .param_vars()
                .iter()
                .filter_map(|(name, &v)| fwd.graph.grad(v).map(|g| (name.clone(), g.to_vec())))
                .collect();
            let stats = fwd.into_batch_stats();
            adam.step(&mut model.params, &grads, lr, &cfg.adam)?;
            model.params.apply_batch_stats(&stats);
        }
        let n = train_data.len() as f64;
        let mut entry = EpochLog {
            epoch: epoch + 1,
            train_loss: loss_sum / n,
            train_oa: correct as f64 / n,
            eval_oa: None,
            eval_macc: None,
        };
        let last_epoch = epoch + 1 == cfg.epochs;
        let score = match eval_data {
            Some(d) if (epoch + 1) % cfg.eval_every == 0 || last_epoch => {
                let r = evaluate(&model, d)?;
                entry.eval_oa = Some(r.overall_accuracy);
                entry.eval_macc = Some(r.mean_class_accuracy);
                Some(r.overall_accuracy)
            }
            Some(_) => None,
            None => last_epoch.then_some(entry.train_oa),
        };
        if let Some(s) = score {
            if best.as_ref().is_none_or(|b| s > b.0 || eval_data.is_none()) {
                if let Some(o) = outputs {
                    save_checkpoint(&model, &o.classes, &o.checkpoint())?;
                }
                best = Some((s, epoch + 1, model.clone()));
            }
        }
        progress(&entry);
        log.push(entry);
        if let Some(o) = outputs {
            let f = std::fs::File::create(o.log())?;
            write_log_csv(&log, f)?;
        }
    }
    let (_, best_epoch, best_model) = best.expect("last epoch always scores");
    Ok(TrainOutcome {
        best: best_model,
        last: model,
        best_epoch,
        log,
    })
}

/// Loads both splits of `index` and trains.
pub fn train_index(
    index: &DatasetIndex,
    model_cfg: &ModelConfig,
    cfg: &TrainConfig,
    opts: &LoadOptions,
    outputs: Option<&TrainOutputs>,
    progress: impl FnMut(&EpochLog),
) -> Result<TrainOutcome> {
    let train_data = Dataset::load(index, Split::Train, opts)?;
    let test_data = Dataset::load(index, Split::Test, opts)?;
    let eval = (!test_data.is_empty()).then_some(&test_data);
    train(&train_data, eval, model_cfg, cfg, outputs, progress)
}

pub const CHECKPOINT_MAGIC: [u8; 4] = *b"PSKN";
pub const CHECKPOINT_VERSION: u32 = 1;
const CLASSES_KEY: &str = "classes";

/// A trained model plus the class names its outputs refer to.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub model: Model,
    pub classes: Vec<String>,
}

fn put_u64(out: &mut Vec<u8>, v: u64) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_str(out: &mut Vec<u8>, s: &str) {
    put_u64(out, s.len() as u64);
    out.extend_from_slice(s.as_bytes());
}

/// Little-endian: magic, u32 version, config text, tensor count, then per
/// tensor its name, rank, dims and values.
pub fn encode_checkpoint(model: &Model, classes: &[String]) -> Vec<u8> {
    let mut kv = model.config.to_key_values();
    kv.set(CLASSES_KEY, classes.join(","));
    let mut text = String::new();
    for k in kv.keys() {
        text.push_str(&format!("{k} = {}\n", kv.get(k).unwrap_or("")));
    }
    let mut out = Vec::new();
    out.extend_from_slice(&CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    put_str(&mut out, &text);
    put_u64(&mut out, model.params.len() as u64);
    for (name, t) in model.params.iter() {
        put_str(&mut out, name);
        put_u64(&mut out, t.shape().len() as u64);
        for &d in t.shape() {
            put_u64(&mut out, d as u64);
        }
        for v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::Checkpoint(format!("truncated at byte {}", self.pos)))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn len(&mut self) -> Result<usize> {
        let v = self.u64()?;
        usize::try_from(v)
            .ok()
            .filter(|&n| n <= self.bytes.len())
            .ok_or_else(|| Error::Checkpoint(format!("implausible length {v} at byte {}", self.pos - 8)))
    }

    fn string(&mut self) -> Result<String> {
        let n = self.len()?;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|_| Error::Checkpoint("string is not UTF-8".into()))
    }
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<Checkpoint> {
    let mut c = Cursor { bytes, pos: 0 };
    if c.take(4).map_err(|_| Error::Checkpoint("file too short".into()))? != CHECKPOINT_MAGIC {
        return Err(Error::Checkpoint("bad magic, not a model checkpoint".into()));
    }
    let version = u32::from_le_bytes(c.take(4)?.try_into().unwrap());
    if version != CHECKPOINT_VERSION {
        return Err(Error::Checkpoint(format!(
            "format version {version}, this build reads {CHECKPOINT_VERSION}"
        )));
    }
    let text = c.string()?;
    let kv = KeyValues::parse(&text).map_err(|e| Error::Checkpoint(format!("config: {e}")))?;
    let classes: Vec<String> = kv.list(CLASSES_KEY)?.unwrap_or_default();
    let mut model_kv = KeyValues::default();
    for k in kv.keys().filter(|k| *k != CLASSES_KEY) {
        model_kv.set(k, kv.get(k).unwrap_or(""));
    }
    let config = ModelConfig::from_key_values(&model_kv).map_err(|e| Error::Checkpoint(format!("config: {e}")))?;
    let n = c.len()?;
    let mut tensors = BTreeMap::new();
    for _ in 0..n {
        let name = c.string()?;
        let rank = c.len()?;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(c.len()?);
        }
        let numel = shape.iter().try_fold(1usize, |a, &d| a.checked_mul(d));
        let bytes = numel
            .and_then(|n| n.checked_mul(8))
            .ok_or_else(|| Error::Checkpoint(format!("tensor `{name}` is too large")))?;
        let data = c
            .take(bytes)?
            .chunks_exact(8)
            .map(|b| f64::from_le_bytes(b.try_into().unwrap()))
            .collect();
        let t = Tensor::new(shape, data).map_err(|e| Error::Checkpoint(e.to_string()))?;
        if tensors.insert(name.clone(), t).is_some() {
            return Err(Error::Checkpoint(format!("tensor `{name}` stored twice")));
        }
    }
    if c.pos != bytes.len() {
        return Err(Error::Checkpoint(format!("{} trailing bytes", bytes.len() - c.pos)));
    }
    let model =
        Model::from_parts(config, Parameters::from_map(tensors)).map_err(|e| Error::Checkpoint(e.to_string()))?;
    if !classes.is_empty() && classes.len() != model.config.n_classes {
        return Err(Error::Checkpoint(format!(
            "{} class names for {} outputs",
            classes.len(),
            model.config.n_classes
        )));
    }
    Ok(Checkpoint { model, classes })
}

pub fn save_checkpoint(model: &Model, classes: &[String], path: &Path) -> Result<()> {
    std::fs::write(path, encode_checkpoint(model, classes))
        .map_err(|e| Error::Checkpoint(format!("{}: {e}", path.display())))
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = std::fs::read(path).map_err(|e| Error::Checkpoint(format!("{}: {e}", path.display())))?;
    decode_checkpoint(&bytes)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AblationKind {
    Augmentation,
    SkipMode,
}

impl AblationKind {
    pub fn header(self) -> &'static str {
        match self {
            AblationKind::Augmentation => "augmentation_mode",
            AblationKind::SkipMode => "skip_connection_mode",
        }
    }

    pub fn file_name(self) -> &'static str {
        match self {
            AblationKind::Augmentation => "ablation_augmentation.csv",
            AblationKind::SkipMode => "ablation_skip_mode.csv",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AblationRow {
    pub variant: String,
    pub result: EvalResult,
}

/// `base` with the given skip mode. For addition, stage 1 gets a point
/// embedding as wide as its pooled features and later stages end their MLP
/// at their input width, so both operands of every sum match.
pub fn with_skip_mode(base: &ModelConfig, mode: SkipMode) -> ModelConfig {
    let mut cfg = base.clone();
    cfg.skip_mode = mode;
    if mode == SkipMode::Addition {
        cfg.embed_width = Some(cfg.stages[0].pooled_width());
        for i in 1..cfg.stages.len() {
            let w = cfg.stages[i - 1].reduce_width;
            if let Some(last) = cfg.stages[i].mlp_widths.last_mut() {
                *last = w;
            }
        }
    }
    cfg
}

/// Trains one model per variant with identical seeds and data, evaluating
/// each on `eval_data`.
pub fn run_ablation(
    kind: AblationKind,
    train_data: &Dataset,
    eval_data: &Dataset,
    model_cfg: &ModelConfig,
    cfg: &TrainConfig,
    mut progress: impl FnMut(&str, &EpochLog),
) -> Result<Vec<AblationRow>> {
    let variants: Vec<(String, ModelConfig, TrainConfig)> = match kind {
        AblationKind::Augmentation => AugmentMode::ABLATION_ORDER
            .iter()
            .map(|&m| {
                let mut t = cfg.clone();
                t.augment = m;
                (m.name().to_string(), model_cfg.clone(), t)
            })
            .collect(),
        AblationKind::SkipMode => [SkipMode::Concatenation, SkipMode::Addition]
            .iter()
            .map(|&s| (s.name().to_string(), with_skip_mode(model_cfg, s), cfg.clone()))
            .collect(),
    };
    let mut rows = Vec::with_capacity(variants.len());
    for (name, mcfg, tcfg) in variants {
        mcfg.validate()?;
        let outcome = train(train_data, Some(eval_data), &mcfg, &tcfg, None, |e| progress(&name, e))?;
        let result = evaluate(&outcome.best, eval_data)?;
        rows.push(AblationRow { variant: name, result });
    }
    Ok(rows)
}

pub fn write_ablation_csv(kind: AblationKind, rows: &[AblationRow], writer: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record([kind.header(), "oa", "macc"])?;
    for r in rows {
        w.write_record([
            r.variant.clone(),
            format!("{:.6}", r.result.overall_accuracy),
            format!("{:.6}", r.result.mean_class_accuracy),
        ])?;
    }
    w.flush()?;
    Ok(())
}
