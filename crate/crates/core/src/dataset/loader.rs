//! Point-set ingestion, the per-instance point cache and batching.

use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::augmentation::{augment, sample_rng, AugmentConfig};
use crate::error::{Error, Result};
use crate::geometry::{normalize_unit_sphere, Point, PointCloud};

use super::index::{DatasetIndex, IndexEntry, Split};
use super::mesh::{parse_off, sample_mesh};

pub const PSPC_MAGIC: [u8; 4] = *b"PSPC";
pub const PSPC_VERSION: u32 = 1;
const PSPC_HEADER: usize = 4 + 4 + 8;

fn ingest(path: &Path, msg: impl Into<String>) -> Error {
    Error::Ingestion {
        path: path.to_path_buf(),
        msg: msg.into(),
    }
}

/// Little-endian point cache: magic, u32 version, u64 count, xyz f64 triples.
pub fn encode_points(points: &[Point]) -> Vec<u8> {
    let mut out = Vec::with_capacity(PSPC_HEADER + points.len() * 24);
    out.extend_from_slice(&PSPC_MAGIC);
    out.extend_from_slice(&PSPC_VERSION.to_le_bytes());
    out.extend_from_slice(&(points.len() as u64).to_le_bytes());
    for v in points.iter().flatten() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_points(bytes: &[u8]) -> std::result::Result<Vec<Point>, String> {
    if bytes.len() < PSPC_HEADER || bytes[..4] != PSPC_MAGIC {
        return Err("not a point cache (bad magic)".into());
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != PSPC_VERSION {
        return Err(format!("point cache version {version}, expected {PSPC_VERSION}"));
    }
    let n = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
    let body = &bytes[PSPC_HEADER..];
    if n.checked_mul(24) != Some(body.len()) {
        return Err(format!(
            "point cache declares {n} points but holds {} bytes",
            body.len()
        ));
    }
    Ok(body
        .chunks_exact(24)
        .map(|c| std::array::from_fn(|k| f64::from_le_bytes(c[8 * k..8 * k + 8].try_into().unwrap())))
        .collect())
}

fn parse_xyz(text: &str, path: &Path) -> Result<Vec<Point>> {
    let mut points = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let vals: Vec<f64> = line
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|t| !t.is_empty())
            .map(str::parse)
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| ingest(path, format!("line {}: {e}", i + 1)))?;
        if vals.len() < 3 {
            return Err(ingest(path, format!("line {}: expected x y z", i + 1)));
        }
        points.push([vals[0], vals[1], vals[2]]);
    }
    Ok(points)
}

/// Reads a cloud from `.off` (surface-sampled to `n` points), `.pspc`, or
/// whitespace/comma separated `x y z` text. Point files with more than `n`
/// points are subsampled with `seed`; `n = 0` keeps them all.
pub fn read_cloud(path: &Path, n: usize, seed: u64) -> Result<PointCloud> {
    let bytes = std::fs::read(path).map_err(|e| ingest(path, e.to_string()))?;
    let ext = path
        .extension()
        .map(|e| e.to_string_lossy().to_ascii_lowercase())
        .unwrap_or_default();
    let points = match ext.as_str() {
        "off" => {
            let mesh = parse_off(&bytes).map_err(|e| ingest(path, e.to_string()))?;
            return sample_mesh(&mesh, n, seed).map_err(|e| ingest(path, e.to_string()));
        }
        "pspc" => decode_points(&bytes).map_err(|m| ingest(path, m))?,
        _ => parse_xyz(
            std::str::from_utf8(&bytes).map_err(|e| ingest(path, e.to_string()))?,
            path,
        )?,
    };
    let points = if n > 0 && points.len() > n {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut keep = rand::seq::index::sample(&mut rng, points.len(), n).into_vec();
        keep.sort_unstable();
        keep.into_iter().map(|i| points[i]).collect()
    } else {
        points
    };
    PointCloud::new(points).map_err(|e| ingest(path, e.to_string()))
}

/// FNV-1a, for stable per-instance seeds.
pub fn stable_hash(text: &str) -> u64 {
    text.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| {
        (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct LoadOptions {
    pub n_points: usize,
    /// Mixed with each instance id to seed its surface sampling.
    pub sample_seed: u64,
    pub cache_dir: Option<PathBuf>,
}

impl Default for LoadOptions {
    fn default() -> Self {
        LoadOptions {
            n_points: 1024,
            sample_seed: 0,
            cache_dir: None,
        }
    }
}

impl LoadOptions {
    fn seed_for(&self, e: &IndexEntry) -> u64 {
        self.sample_seed ^ stable_hash(&format!("{}/{}", e.class, e.instance))
    }

    fn cache_path(&self, e: &IndexEntry) -> Option<PathBuf> {
        self.cache_dir.as_ref().map(|d| {
            d.join(&e.class).join(e.split.name()).join(format!(
                "{}.{}.{:016x}.pspc",
                e.instance, self.n_points, self.sample_seed
            ))
        })
    }

    /// Raw (unnormalized) points of one entry, through the cache if set.
    pub fn load_entry(&self, e: &IndexEntry) -> Result<PointCloud> {
        let cache = self.cache_path(e);
        if let Some(c) = &cache {
            if let Ok(bytes) = std::fs::read(c) {
                if let Ok(points) = decode_points(&bytes) {
                    if points.len() == self.n_points {
                        return PointCloud::new(points);
                    }
                }
            }
        }
        let cloud = read_cloud(&e.path, self.n_points, self.seed_for(e))?;
        if cloud.len() < self.n_points {
            return Err(ingest(
                &e.path,
                format!("{} points, {} required", cloud.len(), self.n_points),
            ));
        }
        if let Some(c) = &cache {
            if let Some(dir) = c.parent() {
                std::fs::create_dir_all(dir).map_err(|err| ingest(dir, err.to_string()))?;
            }
            std::fs::write(c, encode_points(cloud.points())).map_err(|err| ingest(c, err.to_string()))?;
        }
        Ok(cloud)
    }
}

/// Normalized clouds and labels of one split, in index order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Dataset {
    pub classes: Vec<String>,
    pub instances: Vec<String>,
    pub clouds: Vec<PointCloud>,
    pub labels: Vec<usize>,
}

/// One pass over a dataset.
#[derive(Clone, Debug, PartialEq)]
pub struct EpochPlan {
    pub seed: u64,
    pub epoch: u64,
    pub shuffle: bool,
    pub augment: Option<AugmentConfig>,
}

impl EpochPlan {
    pub fn ordered() -> Self {
        EpochPlan {
            seed: 0,
            epoch: 0,
            shuffle: false,
            augment: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Batch {
    /// Positions in the dataset.
    pub indices: Vec<usize>,
    pub clouds: Vec<PointCloud>,
    pub labels: Vec<usize>,
}

fn epoch_mix(seed: u64, epoch: u64) -> u64 {
    seed ^ epoch.wrapping_add(1).wrapping_mul(0x9e37_79b9_7f4a_7c15)
}

impl Dataset {
    /// Parses and samples every entry of `split` in parallel; order follows
    /// the index.
    pub fn load(index: &DatasetIndex, split: Split, opts: &LoadOptions) -> Result<Self> {
        let entries: Vec<&IndexEntry> = index.split(split).collect();
        let clouds = entries
            .par_iter()
            .map(|e| normalize_unit_sphere(&opts.load_entry(e)?).map_err(|err| ingest(&e.path, err.to_string())))
            .collect::<Result<Vec<_>>>()?;
        let labels = entries
            .iter()
            .map(|e| index.class_index(&e.class).expect("index lists its classes"))
            .collect();
        Ok(Dataset {
            classes: index.classes().to_vec(),
            instances: entries.iter().map(|e| e.instance.clone()).collect(),
            clouds,
            labels,
        })
    }

    pub fn from_clouds(classes: Vec<String>, clouds: Vec<PointCloud>, labels: Vec<usize>) -> Result<Self> {
        if clouds.len() != labels.len() {
            return Err(Error::dim(format!(
                "{} clouds but {} labels",
                clouds.len(),
                labels.len()
            )));
        }
        if let Some((i, &l)) = labels.iter().enumerate().find(|(_, &l)| l >= classes.len()) {
            return Err(Error::Label {
                index: i,
                label: l,
                classes: classes.len(),
            });
        }
        Ok(Dataset {
            instances: (0..clouds.len()).map(|i| format!("sample_{i:04}")).collect(),
            classes,
            clouds,
            labels,
        })
    }

    pub fn len(&self) -> usize {
        self.clouds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clouds.is_empty()
    }

    pub fn order(&self, plan: &EpochPlan) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.len()).collect();
        if plan.shuffle {
            order.shuffle(&mut ChaCha8Rng::seed_from_u64(epoch_mix(plan.seed, plan.epoch)));
        }
        order
    }

    /// Splits one epoch into batches; the last may be short.
    pub fn batches(&self, batch_size: usize, plan: &EpochPlan) -> Result<Vec<Batch>> {
        if batch_size == 0 {
            return Err(Error::Parameter("batch size must be positive".into()));
        }
        if let Some(a) = &plan.augment {
            a.validate()?;
        }
        let order = self.order(plan);
        order
            .chunks(batch_size)
            .map(|chunk| {
                let clouds = chunk
                    .iter()
                    .map(|&i| match &plan.augment {
                        Some(a) => {
                            let mut rng = sample_rng(epoch_mix(a.seed, plan.epoch), i as u64);
                            augment(&self.clouds[i], a, &mut rng)
                        }
                        None => Ok(self.clouds[i].clone()),
                    })
                    .collect::<Result<Vec<_>>>()?;
                Ok(Batch {
                    indices: chunk.to_vec(),
                    labels: chunk.iter().map(|&i| self.labels[i]).collect(),
                    clouds,
                })
            })
            .collect()
    }
}

/// Loads `split` and returns the first epoch's batches. Augmentation applies
/// to the train split only.
pub fn load_batches(
    index: &DatasetIndex,
    split: Split,
    batch_size: usize,
    opts: &LoadOptions,
    seed: u64,
    augment: Option<&AugmentConfig>,
) -> Result<Vec<Batch>> {
    let data = Dataset::load(index, split, opts)?;
    if data.is_empty() {
        return Err(Error::Config(format!("split `{split}` is empty")));
    }
    let plan = EpochPlan {
        seed,
        epoch: 0,
        shuffle: true,
        augment: if split == Split::Train { augment.cloned() } else { None },
    };
    data.batches(batch_size, &plan)
}
