//! The classification network.
//!
//! Each stage samples centers by FPS, groups neighbors by ball query, runs a
//! shared MLP over every `[offset ⧺ feature]` row, max-pools each group,
//! joins the pooled vector with the center's own input row (the skip
//! connection) and reduces it with one more shared layer. A final shared MLP
//! over `[xyz ⧺ features]` is max-pooled into the global descriptor that the
//! fully connected head turns into class logits.
//!
//! Shared layers are `linear → batch norm → relu`. Hidden head layers are
//! `linear → relu → dropout`; the last head layer emits raw logits.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::augmentation::sample_rng;
use crate::config::{join, KeyValues};
use crate::error::{Error, Result};
use crate::geometry::{normalize_unit_sphere, sample_and_group, GroupedNeighborhood, Point, PointCloud};
use crate::tensor::{BatchStats, Graph, NormMode, Tensor, Var};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum SkipMode {
    Concatenation,
    Addition,
}

impl SkipMode {
    pub fn name(self) -> &'static str {
        match self {
            SkipMode::Concatenation => "concatenation",
            SkipMode::Addition => "addition",
        }
    }
}

impl fmt::Display for SkipMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SkipMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "concatenation" | "concat" => Ok(SkipMode::Concatenation),
            "addition" | "add" => Ok(SkipMode::Addition),
            other => Err(Error::Config(format!("unknown skip mode `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StageConfig {
    pub n_out: usize,
    pub radius: f64,
    pub group_size: usize,
    pub mlp_widths: Vec<usize>,
    pub reduce_width: usize,
}

impl StageConfig {
    pub fn pooled_width(&self) -> usize {
        *self.mlp_widths.last().unwrap_or(&0)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelConfig {
    pub stages: Vec<StageConfig>,
    /// Optional per-point `3 → width` shared layer ahead of the first stage.
    /// Without it the first stage sees raw coordinates as its input features.
    pub embed_width: Option<usize>,
    /// Hidden widths of the global shared MLP, before `global_width`.
    pub global_hidden: Vec<usize>,
    pub global_width: usize,
    pub fc_widths: Vec<usize>,
    pub n_classes: usize,
    pub skip_mode: SkipMode,
    pub dropout_rate: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            stages: vec![
                StageConfig {
                    n_out: 512,
                    radius: 0.2,
                    group_size: 32,
                    mlp_widths: vec![64, 64, 128],
                    reduce_width: 128,
                },
                StageConfig {
                    n_out: 128,
                    radius: 0.4,
                    group_size: 64,
                    mlp_widths: vec![128, 128, 256],
                    reduce_width: 256,
                },
            ],
            embed_width: None,
            global_hidden: vec![512],
            global_width: 1024,
            fc_widths: vec![512, 256],
            n_classes: 40,
            skip_mode: SkipMode::Concatenation,
            dropout_rate: 0.4,
        }
    }
}

const MODEL_KEYS: [&str; 8] = [
    "n_classes",
    "skip_mode",
    "dropout",
    "embed_width",
    "global_hidden",
    "global_width",
    "fc_widths",
    "stages",
];
const STAGE_KEYS: [&str; 5] = ["n_out", "radius", "group_size", "mlp_widths", "reduce_width"];

impl ModelConfig {
    /// Input feature width of stage `i`.
    pub fn stage_input_width(&self, i: usize) -> usize {
        if i == 0 {
            self.embed_width.unwrap_or(3)
        } else {
            self.stages[i - 1].reduce_width
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.n_classes < 2 {
            return bad(format!("n_classes must be at least 2, got {}", self.n_classes));
        }
        if self.stages.is_empty() {
            return bad("at least one stage is required".into());
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return bad(format!("dropout {} outside [0, 1)", self.dropout_rate));
        }
        if self.embed_width == Some(0)
            || self.global_width == 0
            || self.global_hidden.contains(&0)
            || self.fc_widths.contains(&0)
        {
            return bad("all widths must be positive".into());
        }
        for (i, s) in self.stages.iter().enumerate() {
            let n = i + 1;
            if s.n_out == 0 || s.group_size == 0 || s.reduce_width == 0 {
                return bad(format!("stage {n}: counts and widths must be positive"));
            }
            if s.mlp_widths.is_empty() || s.mlp_widths.contains(&0) {
                return bad(format!("stage {n}: mlp widths must be non-empty and positive"));
            }
            if !(s.radius > 0.0 && s.radius.is_finite()) {
                return bad(format!("stage {n}: radius must be positive"));
            }
            if i > 0 && s.n_out > self.stages[i - 1].n_out {
                return bad(format!(
                    "stage {n} samples {} centers from only {}",
                    s.n_out,
                    self.stages[i - 1].n_out
                ));
            }
            if self.skip_mode == SkipMode::Addition && self.stage_input_width(i) != s.pooled_width() {
                return bad(format!(
                    "stage {n}: additive skip joins width {} with pooled width {}",
                    self.stage_input_width(i),
                    s.pooled_width()
                ));
            }
        }
        Ok(())
    }

    pub fn min_points(&self) -> usize {
        self.stages[0].n_out
    }

    /// Overrides fields from `model.*`-style keys; see [`ModelConfig::to_key_values`].
    pub fn apply(&mut self, kv: &KeyValues) -> Result<()> {
        if let Some(v) = kv.parsed("n_classes")? {
            self.n_classes = v;
        }
        if let Some(v) = kv.get("skip_mode") {
            self.skip_mode = v.parse()?;
        }
        if let Some(v) = kv.parsed("dropout")? {
            self.dropout_rate = v;
        }
        match kv.get("embed_width") {
            None => {}
            Some("" | "none") => self.embed_width = None,
            Some(_) => self.embed_width = kv.parsed("embed_width")?,
        }
        if let Some(v) = kv.list("global_hidden")? {
            self.global_hidden = v;
        }
        if let Some(v) = kv.parsed("global_width")? {
            self.global_width = v;
        }
        if let Some(v) = kv.list("fc_widths")? {
            self.fc_widths = v;
        }
        if let Some(n) = kv.parsed::<usize>("stages")? {
            self.stages.resize(
                n,
                StageConfig {
                    n_out: 1,
                    radius: 1.0,
                    group_size: 1,
                    mlp_widths: vec![1],
                    reduce_width: 1,
                },
            );
        }
        for (i, s) in self.stages.iter_mut().enumerate() {
            let key = |k: &str| format!("stage{}.{k}", i + 1);
            if let Some(v) = kv.parsed(&key("n_out"))? {
                s.n_out = v;
            }
            if let Some(v) = kv.parsed(&key("radius"))? {
                s.radius = v;
            }
            if let Some(v) = kv.parsed(&key("group_size"))? {
                s.group_size = v;
            }
            if let Some(v) = kv.list(&key("mlp_widths"))? {
                s.mlp_widths = v;
            }
            if let Some(v) = kv.parsed(&key("reduce_width"))? {
                s.reduce_width = v;
            }
        }
        Ok(())
    }

    pub fn is_model_key(key: &str) -> bool {
        if MODEL_KEYS.contains(&key) {
            return true;
        }
        key.strip_prefix("stage")
            .and_then(|rest| rest.split_once('.'))
            .is_some_and(|(n, k)| n.parse::<usize>().is_ok() && STAGE_KEYS.contains(&k))
    }

    pub fn from_key_values(kv: &KeyValues) -> Result<Self> {
        let mut cfg = ModelConfig::default();
        cfg.apply(kv)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_key_values(&self) -> KeyValues {
        let mut kv = KeyValues::default();
        kv.set("n_classes", self.n_classes);
        kv.set("skip_mode", self.skip_mode);
        kv.set("dropout", self.dropout_rate);
        kv.set(
            "embed_width",
            self.embed_width.map_or("none".to_string(), |w| w.to_string()),
        );
        kv.set("global_hidden", join(&self.global_hidden));
        kv.set("global_width", self.global_width);
        kv.set("fc_widths", join(&self.fc_widths));
        kv.set("stages", self.stages.len());
        for (i, s) in self.stages.iter().enumerate() {
            let n = i + 1;
            kv.set(&format!("stage{n}.n_out"), s.n_out);
            kv.set(&format!("stage{n}.radius"), s.radius);
            kv.set(&format!("stage{n}.group_size"), s.group_size);
            kv.set(&format!("stage{n}.mlp_widths"), join(&s.mlp_widths));
            kv.set(&format!("stage{n}.reduce_width"), s.reduce_width);
        }
        kv
    }

    pub fn to_text(&self) -> String {
        let kv = self.to_key_values();
        kv.keys()
            .map(|k| format!("{k} = {}\n", kv.get(k).unwrap_or("")))
            .collect()
    }

    /// Every shared or fully connected layer as `(name, fan_in, fan_out, normalized)`.
    pub fn layers(&self) -> Vec<LayerSpec> {
        let mut out = Vec::new();
        let mut push = |name: String, fan_in: usize, fan_out: usize, norm: bool| {
            out.push(LayerSpec {
                name,
                fan_in,
                fan_out,
                norm,
            })
        };
        if let Some(e) = self.embed_width {
            push("embed".into(), 3, e, true);
        }
        let mut c_in = self.stage_input_width(0);
        for (i, s) in self.stages.iter().enumerate() {
            let mut w = 3 + c_in;
            for (l, &d) in s.mlp_widths.iter().enumerate() {
                push(format!("stage{}.mlp{l}", i + 1), w, d, true);
                w = d;
            }
            let joined = match self.skip_mode {
                SkipMode::Concatenation => c_in + w,
                SkipMode::Addition => w,
            };
            push(format!("stage{}.reduce", i + 1), joined, s.reduce_width, true);
            c_in = s.reduce_width;
        }
        let mut w = 3 + c_in;
        for (l, &d) in self.global_hidden.iter().chain([&self.global_width]).enumerate() {
            push(format!("global{l}"), w, d, true);
            w = d;
        }
        for (l, &d) in self.fc_widths.iter().chain([&self.n_classes]).enumerate() {
            push(format!("fc{l}"), w, d, false);
            w = d;
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LayerSpec {
    pub name: String,
    pub fan_in: usize,
    pub fan_out: usize,
    pub norm: bool,
}

const RUNNING_MEAN: &str = "running_mean";
const RUNNING_VAR: &str = "running_var";

/// Named parameter tensors, including batch-norm running statistics.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Parameters {
    tensors: BTreeMap<String, Tensor>,
}

impl Parameters {
    /// Seeded uniform fan-in initialization.
    pub fn init(cfg: &ModelConfig, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut tensors = BTreeMap::new();
        for layer in cfg.layers() {
            let w_bound = (6.0 / layer.fan_in as f64).sqrt();
            let b_bound = 1.0 / (layer.fan_in as f64).sqrt();
            let w: Vec<f64> = (0..layer.fan_in * layer.fan_out)
                .map(|_| rng.random_range(-w_bound..w_bound))
                .collect();
            let b: Vec<f64> = (0..layer.fan_out)
                .map(|_| rng.random_range(-b_bound..b_bound))
                .collect();
            let n = &layer.name;
            tensors.insert(
                format!("{n}.weight"),
                Tensor::new(vec![layer.fan_in, layer.fan_out], w).expect("weight shape"),
            );
            tensors.insert(
                format!("{n}.bias"),
                Tensor::new(vec![layer.fan_out], b).expect("bias shape"),
            );
            if layer.norm {
                tensors.insert(format!("{n}.gamma"), Tensor::filled(vec![layer.fan_out], 1.0));
                tensors.insert(format!("{n}.beta"), Tensor::zeros(vec![layer.fan_out]));
                tensors.insert(format!("{n}.{RUNNING_MEAN}"), Tensor::zeros(vec![layer.fan_out]));
                tensors.insert(format!("{n}.{RUNNING_VAR}"), Tensor::filled(vec![layer.fan_out], 1.0));
            }
        }
        Parameters { tensors }
    }

    pub fn from_map(tensors: BTreeMap<String, Tensor>) -> Self {
        Parameters { tensors }
    }

    pub fn get(&self, name: &str) -> Result<&Tensor> {
        self.tensors
            .get(name)
            .ok_or_else(|| Error::Config(format!("missing parameter `{name}`")))
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.tensors.get_mut(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Tensor)> {
        self.tensors.iter()
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn is_trainable(name: &str) -> bool {
        !(name.ends_with(RUNNING_MEAN) || name.ends_with(RUNNING_VAR))
    }

    pub fn trainable_names(&self) -> Vec<String> {
        self.tensors.keys().filter(|n| Self::is_trainable(n)).cloned().collect()
    }

    /// Number of trainable scalars (running statistics excluded).
    pub fn count(&self) -> usize {
        self.tensors
            .iter()
            .filter(|(n, _)| Self::is_trainable(n))
            .map(|(_, t)| t.numel())
            .sum()
    }

    /// Checks names and shapes against the layers `cfg` implies.
    pub fn check_against(&self, cfg: &ModelConfig) -> Result<()> {
        let expected = Parameters::init(cfg, 0);
        if expected.tensors.len() != self.tensors.len() {
            return Err(Error::Config(format!(
                "expected {} parameter tensors, found {}",
                expected.tensors.len(),
                self.tensors.len()
            )));
        }
        for (name, t) in &expected.tensors {
            let have = self.get(name)?;
            if have.shape() != t.shape() {
                return Err(Error::Config(format!(
                    "parameter `{name}` has shape {:?}, expected {:?}",
                    have.shape(),
                    t.shape()
                )));
            }
        }
        Ok(())
    }

    /// Folds observed batch statistics into the running buffers.
    pub fn apply_batch_stats(&mut self, stats: &[(String, BatchStats)]) {
        for (layer, s) in stats {
            let mean_key = format!("{layer}.{RUNNING_MEAN}");
            let var_key = format!("{layer}.{RUNNING_VAR}");
            let (Some(mut m), Some(mut v)) = (self.tensors.remove(&mean_key), self.tensors.remove(&var_key)) else {
                continue;
            };
            s.update_running(m.data_mut(), v.data_mut());
            self.tensors.insert(mean_key, m);
            self.tensors.insert(var_key, v);
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum RunMode {
    /// Running-stat normalization, no dropout, FPS from the lexicographically
    /// smallest point.
    Eval,
    /// Batch-stat normalization and dropout; `seed` drives dropout masks and,
    /// when enabled, random FPS start points.
    Train { seed: u64, random_fps_start: bool },
}

impl RunMode {
    pub fn is_train(self) -> bool {
        matches!(self, RunMode::Train { .. })
    }
}

/// Per-sample sampling and grouping for every stage.
#[derive(Clone, Debug)]
pub struct SampleGeometry {
    pub stages: Vec<GroupedNeighborhood>,
}

/// Runs FPS and ball query for one (normalized) cloud through all stages.
pub fn plan_geometry(cloud: &PointCloud, cfg: &ModelConfig, mode: RunMode, sample: u64) -> Result<SampleGeometry> {
    if cloud.len() < cfg.min_points() {
        return Err(Error::InputSize {
            needed: cfg.min_points(),
            got: cloud.len(),
        });
    }
    let mut rng = match mode {
        RunMode::Train {
            seed,
            random_fps_start: true,
        } => Some(sample_rng(seed, sample)),
        _ => None,
    };
    let mut level = PointCloud::new(cloud.points().to_vec())?;
    let mut stages = Vec::with_capacity(cfg.stages.len());
    for s in &cfg.stages {
        let start = match rng.as_mut() {
            Some(r) => r.random_range(0..level.len()),
            None => level.lexicographic_min_index().unwrap_or(0),
        };
        let g = sample_and_group(&level, s.n_out, s.radius, s.group_size, start)?;
        level = PointCloud::new(g.centers.clone())?;
        stages.push(g);
    }
    Ok(SampleGeometry { stages })
}

/// Graph-building context for one forward pass.
pub struct Forward<'a> {
    pub graph: Graph,
    params: &'a Parameters,
    cfg: &'a ModelConfig,
    mode: RunMode,
    vars: HashMap<String, Var>,
    stats: Vec<(String, BatchStats)>,
    dropout_rng: Option<ChaCha8Rng>,
}

impl<'a> Forward<'a> {
    pub fn new(cfg: &'a ModelConfig, params: &'a Parameters, mode: RunMode) -> Self {
        let dropout_rng = match mode {
            RunMode::Train { seed, .. } => Some(sample_rng(seed, u64::MAX)),
            RunMode::Eval => None,
        };
        Forward {
            graph: Graph::new(),
            params,
            cfg,
            mode,
            vars: HashMap::new(),
            stats: Vec::new(),
            dropout_rng,
        }
    }

    /// Graph node of a parameter, registered on first use.
    pub fn param(&mut self, name: &str) -> Result<Var> {
        if let Some(&v) = self.vars.get(name) {
            return Ok(v);
        }
        let mut t = self.params.get(name)?.clone();
        t.requires_grad = Parameters::is_trainable(name);
        let v = self.graph.leaf(t);
        self.vars.insert(name.to_string(), v);
        Ok(v)
    }

    /// Parameter nodes registered so far.
    pub fn param_vars(&self) -> &HashMap<String, Var> {
        &self.vars
    }

    pub fn into_batch_stats(self) -> Vec<(String, BatchStats)> {
        self.stats
    }

    pub fn batch_stats(&self) -> &[(String, BatchStats)] {
        &self.stats
    }

    fn linear(&mut self, layer: &str, x: Var) -> Result<Var> {
        let w = self.param(&format!("{layer}.weight"))?;
        let b = self.param(&format!("{layer}.bias"))?;
        let y = self.graph.matmul(x, w)?;
        self.graph.add_row(y, b)
    }

    /// `linear → batch norm → relu` applied row-wise.
    pub fn shared_layer(&mut self, layer: &str, x: Var) -> Result<Var> {
        let y = self.linear(layer, x)?;
        let gamma = self.param(&format!("{layer}.gamma"))?;
        let beta = self.param(&format!("{layer}.beta"))?;
        let (y, stats) = match self.mode {
            RunMode::Train { .. } => self.graph.batch_norm(y, gamma, beta, NormMode::Train)?,
            RunMode::Eval => {
                let mean = self.params.get(&format!("{layer}.{RUNNING_MEAN}"))?.data();
                let var = self.params.get(&format!("{layer}.{RUNNING_VAR}"))?.data();
                self.graph.batch_norm(y, gamma, beta, NormMode::Eval { mean, var })?
            }
        };
        if let Some(s) = stats {
            self.stats.push((layer.to_string(), s));
        }
        Ok(self.graph.relu(y))
    }

    /// Input feature rows for the first stage, one block per sample.
    pub fn input_features(&mut self, clouds: &[PointCloud]) -> Result<Var> {
        let xyz: Vec<f64> = clouds
            .iter()
            .flat_map(|c| c.points().iter().flat_map(|p| p.to_vec()))
            .collect();
        let rows = xyz.len() / 3;
        let x = self.graph.constant(Tensor::new(vec![rows, 3], xyz)?);
        match self.cfg.embed_width {
            Some(_) => self.shared_layer("embed", x),
            None => Ok(x),
        }
    }

    /// Shared MLP and max-pool of one stage: returns the pooled block
    /// `[Σ centers × d]` and the centers' own input rows `[Σ centers × c_in]`.
    ///
    /// `prev` holds the stage's input feature rows for all samples stacked,
    /// `prev_offsets[b]` is where sample `b`'s rows start. `groups[b]` indexes
    /// into sample `b`'s rows.
    pub fn pooled(
        &mut self,
        stage: usize,
        groups: &[&GroupedNeighborhood],
        prev: Var,
        prev_offsets: &[usize],
    ) -> Result<(Var, Var)> {
        let s = &self.cfg.stages[stage];
        let name = format!("stage{}", stage + 1);
        let k = s.group_size;
        let n_layers = s.mlp_widths.len();
        let mut offsets = Vec::new();
        let mut neighbor_rows = Vec::new();
        let mut center_rows = Vec::new();
        for (g, &base) in groups.iter().zip(prev_offsets) {
            if g.group_size != k {
                return Err(Error::dim(format!(
                    "{name}: groups of {} neighbors for a stage of group size {k}",
                    g.group_size
                )));
            }
            offsets.extend_from_slice(&g.grouped_points);
            neighbor_rows.extend(g.indices.iter().map(|i| base + i));
            let centers = g
                .center_indices
                .as_ref()
                .ok_or_else(|| Error::Contract(format!("{name}: groups lack center indices")))?;
            center_rows.extend(centers.iter().map(|i| base + i));
        }
        let n_rows = neighbor_rows.len();
        let n_groups = center_rows.len();
        let offsets = self.graph.constant(Tensor::new(vec![n_rows, 3], offsets)?);
        let gathered = self.graph.gather_rows(prev, &neighbor_rows)?;
        let mut x = self.graph.concat_last(offsets, gathered)?;
        for l in 0..n_layers {
            x = self.shared_layer(&format!("{name}.mlp{l}"), x)?;
        }
        let d = self.graph.value(x).last_dim();
        let grouped = self.graph.reshape(x, vec![n_groups, k, d])?;
        let pooled = self.graph.max_over_axis(grouped)?;
        let centers = self.graph.gather_rows(prev, &center_rows)?;
        Ok((pooled, centers))
    }

    /// One full stage: pooled features joined with the center rows by the
    /// configured skip mode, then reduced. Returns `[Σ centers × reduce_width]`.
    pub fn stage(
        &mut self,
        stage: usize,
        groups: &[&GroupedNeighborhood],
        prev: Var,
        prev_offsets: &[usize],
    ) -> Result<Var> {
        let name = format!("stage{}", stage + 1);
        let (pooled, centers) = self.pooled(stage, groups, prev, prev_offsets)?;
        let joined = match self.cfg.skip_mode {
            SkipMode::Concatenation => self.graph.concat_last(centers, pooled)?,
            SkipMode::Addition => {
                let cw = self.graph.value(centers).last_dim();
                let pw = self.graph.value(pooled).last_dim();
                if cw != pw {
                    return Err(Error::Config(format!(
                        "{name}: additive skip joins width {cw} with pooled width {pw}"
                    )));
                }
                self.graph.add(centers, pooled)?
            }
        };
        self.shared_layer(&format!("{name}.reduce"), joined)
    }

    /// Shared MLP over `[xyz ⧺ features]` rows, max-pooled per sample.
    /// Every sample must contribute the same number of rows.
    pub fn global_feature(&mut self, xyz: &[Point], features: Var, n_samples: usize) -> Result<Var> {
        let rows = xyz.len();
        if rows != self.graph.value(features).rows() || n_samples == 0 || !rows.is_multiple_of(n_samples) {
            return Err(Error::dim(format!(
                "global feature: {rows} coordinates, {} feature rows, {n_samples} samples",
                self.graph.value(features).rows()
            )));
        }
        let xyz_t = self.graph.constant(Tensor::new(
            vec![rows, 3],
            xyz.iter().flat_map(|p| p.to_vec()).collect(),
        )?);
        let mut x = self.graph.concat_last(xyz_t, features)?;
        for l in 0..=self.cfg.global_hidden.len() {
            x = self.shared_layer(&format!("global{l}"), x)?;
        }
        let d = self.graph.value(x).last_dim();
        let per = self.graph.reshape(x, vec![n_samples, rows / n_samples, d])?;
        self.graph.max_over_axis(per)
    }

    /// Fully connected head; returns `[B × n_classes]` logits.
    pub fn classify(&mut self, global: Var) -> Result<Var> {
        let mut x = global;
        let hidden = self.cfg.fc_widths.len();
        for l in 0..hidden {
            x = self.linear(&format!("fc{l}"), x)?;
            x = self.graph.relu(x);
            let rate = self.cfg.dropout_rate;
            if let (Some(rng), true) = (self.dropout_rng.as_mut(), rate > 0.0) {
                let keep = 1.0 / (1.0 - rate);
                let mask = (0..self.graph.value(x).numel())
                    .map(|_| if rng.random::<f64>() < rate { 0.0 } else { keep })
                    .collect();
                x = self.graph.mask(x, mask)?;
            }
        }
        self.linear(&format!("fc{hidden}"), x)
    }

    /// Full network over already-normalized clouds with precomputed geometry.
    pub fn network(&mut self, clouds: &[PointCloud], geometry: &[SampleGeometry]) -> Result<Var> {
        if clouds.is_empty() || clouds.len() != geometry.len() {
            return Err(Error::dim(format!(
                "{} clouds with {} geometry plans",
                clouds.len(),
                geometry.len()
            )));
        }
        let mut features = self.input_features(clouds)?;
        let mut offsets: Vec<usize> = clouds
            .iter()
            .scan(0, |acc, c| {
                let o = *acc;
                *acc += c.len();
                Some(o)
            })
            .collect();
        for i in 0..self.cfg.stages.len() {
            let groups: Vec<&GroupedNeighborhood> = geometry.iter().map(|g| &g.stages[i]).collect();
            features = self.stage(i, &groups, features, &offsets)?;
            let n_out = self.cfg.stages[i].n_out;
            offsets = (0..clouds.len()).map(|b| b * n_out).collect();
        }
        let last = self.cfg.stages.len() - 1;
        let xyz: Vec<Point> = geometry
            .iter()
            .flat_map(|g| g.stages[last].centers.iter().copied())
            .collect();
        let global = self.global_feature(&xyz, features, clouds.len())?;
        self.classify(global)
    }
}

/// A configuration with its parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    pub config: ModelConfig,
    pub params: Parameters,
}

/// Result of a batched forward pass.
pub struct ForwardOutput<'a> {
    pub forward: Forward<'a>,
    pub logits: Var,
}

impl Model {
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let params = Parameters::init(&config, seed);
        Ok(Model { config, params })
    }

    pub fn from_parts(config: ModelConfig, params: Parameters) -> Result<Self> {
        config.validate()?;
        params.check_against(&config)?;
        Ok(Model { config, params })
    }

    pub fn param_count(&self) -> usize {
        self.params.count()
    }

    /// Forward over normalized clouds. In training mode the sample index
    /// `first_sample + b` seeds cloud `b`'s FPS start.
    pub fn forward(&self, clouds: &[PointCloud], mode: RunMode, first_sample: u64) -> Result<ForwardOutput<'_>> {
        let geometry = clouds
            .par_iter()
            .enumerate()
            .map(|(b, c)| plan_geometry(c, &self.config, mode, first_sample + b as u64))
            .collect::<Result<Vec<_>>>()?;
        let mut forward = Forward::new(&self.config, &self.params, mode);
        let logits = forward.network(clouds, &geometry)?;
        Ok(ForwardOutput { forward, logits })
    }

    /// Eval-mode logits for a raw cloud (normalized here).
    pub fn logits(&self, cloud: &PointCloud) -> Result<Vec<f64>> {
        let normalized = normalize_unit_sphere(cloud)?;
        let out = self.forward(std::slice::from_ref(&normalized), RunMode::Eval, 0)?;
        Ok(out.forward.graph.value(out.logits).data().to_vec())
    }

    pub fn predict(&self, cloud: &PointCloud) -> Result<usize> {
        Ok(argmax(&self.logits(cloud)?))
    }
}

/// Index of the largest value; first one wins on ties.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}
