//! The `skipnet` command line.

use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

use crate::augmentation::AugmentMode;
use crate::config::KeyValues;
use crate::dataset::index::MODELNET40;
use crate::dataset::{
    apply_manifest, dataset_stats, read_cloud, write_shape_dataset, Dataset, DatasetIndex, DatasetStats, LoadOptions,
    RefinementManifest, Shape, Split,
};
use crate::error::{Error, Result};
use crate::geometry::{
    ball_query, ball_query_grid, farthest_point_sample, normalize_unit_sphere, sample_and_group, Point, PointCloud,
};
use crate::model::{Forward, Model, ModelConfig, RunMode, SkipMode};
use crate::tensor::softmax;
use crate::training::{
    evaluate, load_checkpoint, run_ablation, train, write_ablation_csv, AblationKind, TrainConfig, TrainOutputs,
};

#[derive(Debug, Parser)]
#[command(
    name = "skipnet",
    version,
    about = "Point cloud classification and dataset refinement"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Apply a refinement manifest to a dataset index and write the audit.
    Refine(RefineArgs),
    /// Print class count, instance total and per-class extremes.
    Stats(StatsArgs),
    /// Train a model; writes a checkpoint and a per-epoch log.
    Train(TrainArgs),
    /// Evaluate a checkpoint on a split; writes the confusion matrix.
    Eval(EvalArgs),
    /// Print the top-3 classes for one OFF or point file.
    Classify(ClassifyArgs),
    /// Run the augmentation and skip-mode ablations.
    Ablate(TrainArgs),
    /// Time the sampling, grouping and forward kernels.
    Bench(BenchArgs),
    /// Write a procedural shape dataset in the `<class>/<split>/*.off` layout.
    Synth(SynthArgs),
}

#[derive(Debug, Args)]
pub struct RefineArgs {
    /// Dataset root directory, or an index CSV.
    #[arg(long)]
    pub root: PathBuf,
    /// Manifest CSV; the bundled refinement manifest when omitted.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct StatsArgs {
    /// Dataset root directory or index CSV. Without it, the built-in
    /// ModelNet40 count table is summarized.
    #[arg(long)]
    pub root: Option<PathBuf>,
    /// Apply this manifest first.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    #[arg(long)]
    pub split: Option<Split>,
}

#[derive(Debug, Args, Clone)]
pub struct TrainArgs {
    #[arg(long)]
    pub root: PathBuf,
    /// Refine the index with this manifest before training.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// `key = value` file with model and training settings; flags win.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub augment: Option<AugmentMode>,
    #[arg(long)]
    pub skip_mode: Option<SkipMode>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub n_points: Option<usize>,
    /// Keep the learning rate constant.
    #[arg(long)]
    pub no_cosine: bool,
    /// Comma separated class subset.
    #[arg(long, value_delimiter = ',')]
    pub classes: Option<Vec<String>>,
    /// Directory for cached point samples.
    #[arg(long)]
    pub cache: Option<PathBuf>,
    #[arg(long)]
    pub quiet: bool,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub root: PathBuf,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    #[arg(long, default_value = "test")]
    pub split: Split,
    #[arg(long, default_value_t = 1024)]
    pub n_points: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Directory for `confusion.csv`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub cache: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ClassifyArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// `.off`, `.pspc` or `x y z` text file.
    pub input: PathBuf,
    #[arg(long, default_value_t = 1024)]
    pub n_points: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// Cloud sizes for the FPS and ball query timings.
    #[arg(long, value_delimiter = ',', default_value = "1024,2048,4096,8192")]
    pub sizes: Vec<usize>,
    #[arg(long, default_value_t = 5)]
    pub reps: usize,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, default_value_t = 1024)]
    pub n_points: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Write `bench.csv` here.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub out: PathBuf,
    /// Number of shape classes (at most 10).
    #[arg(long, default_value_t = 10)]
    pub classes: usize,
    #[arg(long, default_value_t = 100)]
    pub train: usize,
    #[arg(long, default_value_t = 25)]
    pub test: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

/// Parses arguments, runs, and maps failures to exit codes.
pub fn main() -> i32 {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Refine(a) => cmd_refine(&a),
        Command::Stats(a) => cmd_stats(&a),
        Command::Train(a) => cmd_train(&a),
        Command::Eval(a) => cmd_eval(&a),
        Command::Classify(a) => cmd_classify(&a),
        Command::Ablate(a) => cmd_ablate(&a),
        Command::Bench(a) => cmd_bench(&a),
        Command::Synth(a) => cmd_synth(&a),
    }
}

fn require(path: &Path, what: &str) -> Result<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(Error::Config(format!("{what} `{}` does not exist", path.display())))
    }
}

fn open_index(root: &Path, manifest: Option<&Path>) -> Result<DatasetIndex> {
    require(root, "dataset root")?;
    let index = DatasetIndex::open(root)?;
    match manifest {
        None => Ok(index),
        Some(m) => {
            require(m, "manifest")?;
            Ok(apply_manifest(&index, &RefinementManifest::load(m)?)?.0)
        }
    }
}

fn create_file(path: &Path) -> Result<std::fs::File> {
    std::fs::File::create(path).map_err(|e| Error::Ingestion {
        path: path.to_path_buf(),
        msg: e.to_string(),
    })
}

fn cmd_refine(a: &RefineArgs) -> Result<()> {
    require(&a.root, "dataset root")?;
    let manifest = match &a.manifest {
        Some(m) => {
            require(m, "manifest")?;
            RefinementManifest::load(m)?
        }
        None => RefinementManifest::shipped(),
    };
    let index = DatasetIndex::open(&a.root)?;
    let (refined, report) = apply_manifest(&index, &manifest)?;
    std::fs::create_dir_all(&a.out)?;
    refined.write_csv(create_file(&a.out.join("refined_index.csv"))?)?;
    report.write_table_csv(create_file(&a.out.join("audit_table.csv"))?)?;
    report.write_final_counts_csv(create_file(&a.out.join("audit_final_counts.csv"))?)?;
    print!("{}", report.render());
    let (cols, removed, original) = report.totals();
    let finals: Vec<String> = report
        .columns
        .iter()
        .zip(&cols)
        .map(|(c, n)| format!("{c}={n}"))
        .collect();
    println!(
        "final: {}{}removed={removed} touched={original}",
        finals.join(" "),
        if finals.is_empty() { "" } else { " " }
    );
    println!("entries: {} -> {}", index.len(), refined.len());
    Ok(())
}

fn print_stats(s: &DatasetStats) {
    println!("classes: {}", s.n_classes);
    println!("instances: {}", s.total);
    println!("max: {} ({})", s.max, s.max_class.as_deref().unwrap_or("-"));
    println!("min: {} ({})", s.min, s.min_class.as_deref().unwrap_or("-"));
    println!("mean: {:.2}", s.mean);
}

fn cmd_stats(a: &StatsArgs) -> Result<()> {
    let index = match &a.root {
        Some(r) => open_index(r, a.manifest.as_deref())?,
        None => {
            let reference = DatasetIndex::synthetic(&MODELNET40)?;
            match &a.manifest {
                Some(m) => {
                    require(m, "manifest")?;
                    apply_manifest(&reference, &RefinementManifest::load(m)?)?.0
                }
                None => reference,
            }
        }
    };
    let index = match a.split {
        Some(s) => DatasetIndex::new(index.split(s).cloned().collect(), index.classes().to_vec())?,
        None => index,
    };
    print_stats(&dataset_stats(&index));
    Ok(())
}

/// Model and training configs from the config file, then flags.
fn configs(a: &TrainArgs, n_classes: usize) -> Result<(ModelConfig, TrainConfig)> {
    let mut model = ModelConfig::default();
    let mut train = TrainConfig::default();
    if let Some(path) = &a.config {
        require(path, "config")?;
        let kv = KeyValues::load(path)?;
        kv.check_known(|k| ModelConfig::is_model_key(k) || TrainConfig::is_train_key(k))?;
        model.apply(&kv)?;
        train.apply(&kv)?;
    }
    model.n_classes = n_classes;
    if let Some(v) = a.skip_mode {
        model.skip_mode = v;
    }
    if let Some(v) = a.seed {
        train.seed = v;
    }
    if let Some(v) = a.augment {
        train.augment = v;
    }
    if let Some(v) = a.epochs {
        train.epochs = v;
    }
    if let Some(v) = a.batch_size {
        train.batch_size = v;
    }
    if let Some(v) = a.lr {
        train.learning_rate = v;
    }
    if let Some(v) = a.n_points {
        train.n_points = v;
    }
    if a.no_cosine {
        train.cosine = false;
    }
    model.validate()?;
    train.validate()?;
    Ok((model, train))
}

fn training_data(a: &TrainArgs) -> Result<(DatasetIndex, Dataset, Dataset, ModelConfig, TrainConfig)> {
    let mut index = open_index(&a.root, a.manifest.as_deref())?;
    if let Some(c) = &a.classes {
        index = index.subset(c)?;
    }
    let (model, train) = configs(a, index.classes().len())?;
    let opts = LoadOptions {
        n_points: train.n_points,
        sample_seed: train.seed,
        cache_dir: a.cache.clone(),
    };
    let started = Instant::now();
    let train_data = Dataset::load(&index, Split::Train, &opts)?;
    let test_data = Dataset::load(&index, Split::Test, &opts)?;
    if !a.quiet {
        eprintln!(
            "loaded {} train / {} test samples over {} classes in {:.1}s",
            train_data.len(),
            test_data.len(),
            index.classes().len(),
            started.elapsed().as_secs_f64()
        );
    }
    Ok((index, train_data, test_data, model, train))
}

fn cmd_train(a: &TrainArgs) -> Result<()> {
    let (index, train_data, test_data, model, cfg) = training_data(a)?;
    let outputs = TrainOutputs {
        dir: a.out.clone(),
        classes: index.classes().to_vec(),
    };
    std::fs::create_dir_all(&a.out)?;
    std::fs::write(a.out.join("config.txt"), config_text(&model, &cfg))?;
    let eval = (!test_data.is_empty()).then_some(&test_data);
    let quiet = a.quiet;
    let outcome = train(&train_data, eval, &model, &cfg, Some(&outputs), |e| {
        if !quiet {
            let ev = match (e.eval_oa, e.eval_macc) {
                (Some(oa), Some(m)) => format!(" eval_oa {oa:.4} eval_macc {m:.4}"),
                _ => String::new(),
            };
            eprintln!(
                "epoch {:>3} loss {:.4} train_oa {:.4}{ev}",
                e.epoch, e.train_loss, e.train_oa
            );
        }
    })?;
    println!(
        "best epoch {} checkpoint {} log {}",
        outcome.best_epoch,
        outputs.checkpoint().display(),
        outputs.log().display()
    );
    Ok(())
}

fn config_text(model: &ModelConfig, train: &TrainConfig) -> String {
    let mut text = model.to_text();
    text.push_str(&format!(
        "batch_size = {}\nepochs = {}\nlearning_rate = {}\nseed = {}\ncosine = {}\nmin_learning_rate = {}\nn_points = {}\naugment = {}\nrandom_fps_start = {}\n",
        train.batch_size,
        train.epochs,
        train.learning_rate,
        train.seed,
        train.cosine,
        train.min_learning_rate,
        train.n_points,
        train.augment,
        train.random_fps_start
    ));
    text
}

fn cmd_eval(a: &EvalArgs) -> Result<()> {
    require(&a.checkpoint, "checkpoint")?;
    let ckpt = load_checkpoint(&a.checkpoint)?;
    let index = open_index(&a.root, a.manifest.as_deref())?;
    if !ckpt.classes.is_empty() && ckpt.classes != index.classes() {
        return Err(Error::Config(format!(
            "checkpoint classes [{}] differ from dataset classes [{}]",
            ckpt.classes.join(","),
            index.classes().join(",")
        )));
    }
    let opts = LoadOptions {
        n_points: a.n_points,
        sample_seed: a.seed,
        cache_dir: a.cache.clone(),
    };
    let data = Dataset::load(&index, a.split, &opts)?;
    let r = evaluate(&ckpt.model, &data)?;
    println!("samples: {}", r.total());
    println!("oa: {:.6}", r.overall_accuracy);
    println!("macc: {:.6}", r.mean_class_accuracy);
    if let Some(out) = &a.out {
        std::fs::create_dir_all(out)?;
        r.write_confusion_csv(index.classes(), create_file(&out.join("confusion.csv"))?)?;
    }
    Ok(())
}

fn cmd_classify(a: &ClassifyArgs) -> Result<()> {
    require(&a.checkpoint, "checkpoint")?;
    require(&a.input, "input")?;
    let ckpt = load_checkpoint(&a.checkpoint)?;
    let cloud = read_cloud(&a.input, a.n_points, a.seed)?;
    let logits = ckpt.model.logits(&cloud)?;
    let probs = softmax(&logits);
    let mut order: Vec<usize> = (0..probs.len()).collect();
    order.sort_by(|&i, &j| probs[j].total_cmp(&probs[i]).then(i.cmp(&j)));
    for &i in order.iter().take(3) {
        let name = ckpt.classes.get(i).cloned().unwrap_or_else(|| format!("class_{i}"));
        println!("{name}\t{:.6}", probs[i]);
    }
    Ok(())
}

fn cmd_ablate(a: &TrainArgs) -> Result<()> {
    let (_, train_data, test_data, model, cfg) = training_data(a)?;
    let eval = if test_data.is_empty() { &train_data } else { &test_data };
    std::fs::create_dir_all(&a.out)?;
    let quiet = a.quiet;
    for kind in [AblationKind::Augmentation, AblationKind::SkipMode] {
        let rows = run_ablation(kind, &train_data, eval, &model, &cfg, |variant, e| {
            if !quiet {
                eprintln!(
                    "[{variant}] epoch {:>3} loss {:.4} train_oa {:.4}",
                    e.epoch, e.train_loss, e.train_oa
                );
            }
        })?;
        let path = a.out.join(kind.file_name());
        write_ablation_csv(kind, &rows, create_file(&path)?)?;
        println!("{}", path.display());
        for r in &rows {
            println!(
                "  {:<20} oa {:.4} macc {:.4}",
                r.variant, r.result.overall_accuracy, r.result.mean_class_accuracy
            );
        }
    }
    Ok(())
}

fn median_secs(reps: usize, mut f: impl FnMut() -> Result<()>) -> Result<f64> {
    let mut times = Vec::with_capacity(reps.max(1));
    for _ in 0..reps.max(1) {
        let t = Instant::now();
        f()?;
        times.push(t.elapsed().as_secs_f64());
    }
    times.sort_by(f64::total_cmp);
    Ok(times[times.len() / 2])
}

fn random_cloud(n: usize, seed: u64) -> Result<PointCloud> {
    use rand::Rng;
    let mut rng = crate::augmentation::sample_rng(seed, n as u64);
    let pts: Vec<Point> = (0..n)
        .map(|_| std::array::from_fn(|_| rng.random_range(-1.0..1.0)))
        .collect();
    normalize_unit_sphere(&PointCloud::new(pts)?)
}

fn cmd_bench(a: &BenchArgs) -> Result<()> {
    let mut model_cfg = ModelConfig::default();
    if let Some(p) = &a.config {
        require(p, "config")?;
        let kv = KeyValues::load(p)?;
        kv.check_known(|k| ModelConfig::is_model_key(k) || TrainConfig::is_train_key(k))?;
        model_cfg.apply(&kv)?;
        model_cfg.validate()?;
    }
    let s1 = model_cfg.stages[0].clone();
    let mut rows: Vec<(String, usize, f64)> = Vec::new();
    for &n in &a.sizes {
        let cloud = random_cloud(n, a.seed)?;
        // Half the cloud, so the quadratic cost shows across sizes.
        let half = (n / 2).max(1);
        let t = median_secs(a.reps, || farthest_point_sample(cloud.points(), half, 0).map(|_| ()))?;
        rows.push(("fps_half".into(), n, t));
        let centers: Vec<Point> = farthest_point_sample(cloud.points(), s1.n_out.min(n), 0)?
            .into_iter()
            .map(|i| cloud.points()[i])
            .collect();
        let scan = ball_query(cloud.points(), &centers, s1.radius, s1.group_size)?;
        let grid = ball_query_grid(cloud.points(), &centers, s1.radius, s1.group_size)?;
        if scan.indices != grid.indices {
            return Err(Error::Contract(format!("grid ball query differs from scan at N={n}")));
        }
        let t = median_secs(a.reps, || {
            ball_query(cloud.points(), &centers, s1.radius, s1.group_size).map(|_| ())
        })?;
        rows.push(("ball_query_scan".into(), n, t));
        let t = median_secs(a.reps, || {
            ball_query_grid(cloud.points(), &centers, s1.radius, s1.group_size).map(|_| ())
        })?;
        rows.push(("ball_query_grid".into(), n, t));
    }
    let model = Model::new(model_cfg.clone(), a.seed)?;
    let cloud = random_cloud(a.n_points, a.seed)?;
    let t = median_secs(a.reps, || {
        let g = sample_and_group(&cloud, s1.n_out, s1.radius, s1.group_size, 0)?;
        let mut fwd = Forward::new(&model.config, &model.params, RunMode::Eval);
        let x = fwd.input_features(std::slice::from_ref(&cloud))?;
        fwd.stage(0, &[&g], x, &[0])?;
        Ok(())
    })?;
    rows.push(("stage1_forward".into(), a.n_points, t));
    let t = median_secs(a.reps, || model.logits(&cloud).map(|_| ()))?;
    rows.push(("full_forward".into(), a.n_points, t));

    println!(
        "{:<18} {:>7} {:>12} {:>14}",
        "kernel", "points", "median_ms", "points_per_s"
    );
    let mut csv_rows = Vec::new();
    for (name, n, t) in &rows {
        let pps = *n as f64 / t.max(1e-12);
        println!("{name:<18} {n:>7} {:>12.3} {pps:>14.0}", t * 1e3);
        csv_rows.push([
            name.clone(),
            n.to_string(),
            format!("{:.6}", t * 1e3),
            format!("{pps:.0}"),
        ]);
    }
    println!("parameters: {}", model.param_count());
    println!("ball query grid == scan: yes");
    if let Some(out) = &a.out {
        std::fs::create_dir_all(out)?;
        let mut w = csv::Writer::from_writer(create_file(&out.join("bench.csv"))?);
        w.write_record(["kernel", "points", "median_ms", "points_per_s"])?;
        for r in csv_rows {
            w.write_record(&r)?;
        }
        w.flush()?;
    }
    Ok(())
}

fn cmd_synth(a: &SynthArgs) -> Result<()> {
    if a.classes == 0 || a.classes > Shape::ALL.len() {
        return Err(Error::Parameter(format!(
            "--classes must be in 1..={}",
            Shape::ALL.len()
        )));
    }
    let index = write_shape_dataset(&a.out, &Shape::ALL[..a.classes], a.train, a.test, a.seed)?;
    println!(
        "wrote {} meshes over {} classes to {}",
        index.len(),
        a.classes,
        a.out.display()
    );
    Ok(())
}
