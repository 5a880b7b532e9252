//! Training-time point cloud augmentation.

use std::f64::consts::TAU;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::geometry::{Point, PointCloud};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum AugmentMode {
    None,
    Rotation,
    Jitter,
    AnisotropicScaling,
    Translation,
    All,
}

impl AugmentMode {
    /// Row order of the augmentation ablation table.
    pub const ABLATION_ORDER: [AugmentMode; 6] = [
        AugmentMode::None,
        AugmentMode::All,
        AugmentMode::AnisotropicScaling,
        AugmentMode::Jitter,
        AugmentMode::Rotation,
        AugmentMode::Translation,
    ];

    pub fn name(self) -> &'static str {
        match self {
            AugmentMode::None => "none",
            AugmentMode::Rotation => "rotation",
            AugmentMode::Jitter => "jitter",
            AugmentMode::AnisotropicScaling => "anisotropic_scaling",
            AugmentMode::Translation => "translation",
            AugmentMode::All => "all",
        }
    }
}

impl fmt::Display for AugmentMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for AugmentMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "none" => AugmentMode::None,
            "rotation" => AugmentMode::Rotation,
            "jitter" => AugmentMode::Jitter,
            "anisotropic_scaling" | "scaling" => AugmentMode::AnisotropicScaling,
            "translation" => AugmentMode::Translation,
            "all" => AugmentMode::All,
            other => {
                return Err(Error::Config(format!("unknown augmentation mode `{other}`")));
            }
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AugmentConfig {
    pub mode: AugmentMode,
    pub seed: u64,
    pub jitter_sigma: f64,
    pub jitter_clip: f64,
    pub scale_range: (f64, f64),
    pub translate_range: f64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        AugmentConfig {
            mode: AugmentMode::None,
            seed: 0,
            jitter_sigma: 0.01,
            jitter_clip: 0.05,
            scale_range: (0.8, 1.25),
            translate_range: 0.1,
        }
    }
}

impl AugmentConfig {
    pub fn with_mode(mode: AugmentMode) -> Self {
        AugmentConfig {
            mode,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.scale_range;
        if !(self.jitter_sigma > 0.0 && self.jitter_clip > 0.0) {
            return Err(Error::Config("jitter sigma and clip must be positive".into()));
        }
        if !(lo > 0.0 && lo <= hi) {
            return Err(Error::Config(format!("bad scale range [{lo}, {hi}]")));
        }
        if self.translate_range.is_nan() || self.translate_range < 0.0 {
            return Err(Error::Config("translation range must be non-negative".into()));
        }
        Ok(())
    }

    /// Generator for sample `index`; independent streams per index.
    pub fn rng_for(&self, index: u64) -> ChaCha8Rng {
        sample_rng(self.seed, index)
    }
}

pub fn sample_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Rotation about the vertical (y) axis.
pub fn rotate_y(p: &Point, angle: f64) -> Point {
    let (s, c) = angle.sin_cos();
    [c * p[0] + s * p[2], p[1], -s * p[0] + c * p[2]]
}

pub fn augment(cloud: &PointCloud, cfg: &AugmentConfig, rng: &mut impl Rng) -> Result<PointCloud> {
    match cfg.mode {
        AugmentMode::None => Ok(cloud.clone()),
        AugmentMode::Rotation => rotation(cloud, rng),
        AugmentMode::Jitter => jitter(cloud, cfg, rng),
        AugmentMode::AnisotropicScaling => scaling(cloud, cfg, rng),
        AugmentMode::Translation => translation(cloud, cfg, rng),
        AugmentMode::All => {
            let c = scaling(cloud, cfg, rng)?;
            let c = rotation(&c, rng)?;
            let c = translation(&c, cfg, rng)?;
            jitter(&c, cfg, rng)
        }
    }
}

fn rotation(cloud: &PointCloud, rng: &mut impl Rng) -> Result<PointCloud> {
    let angle = rng.random_range(0.0..TAU);
    cloud.map_points(|p| rotate_y(p, angle))
}

fn scaling(cloud: &PointCloud, cfg: &AugmentConfig, rng: &mut impl Rng) -> Result<PointCloud> {
    let (lo, hi) = cfg.scale_range;
    let s: [f64; 3] = std::array::from_fn(|_| rng.random_range(lo..=hi));
    cloud.map_points(|p| [p[0] * s[0], p[1] * s[1], p[2] * s[2]])
}

fn translation(cloud: &PointCloud, cfg: &AugmentConfig, rng: &mut impl Rng) -> Result<PointCloud> {
    let t = cfg.translate_range;
    let d: [f64; 3] = std::array::from_fn(|_| rng.random_range(-t..=t));
    cloud.map_points(|p| [p[0] + d[0], p[1] + d[1], p[2] + d[2]])
}

fn jitter(cloud: &PointCloud, cfg: &AugmentConfig, rng: &mut impl Rng) -> Result<PointCloud> {
    let normal = Normal::new(0.0, cfg.jitter_sigma).map_err(|e| Error::Config(format!("jitter sigma: {e}")))?;
    let clip = cfg.jitter_clip;
    let points = cloud
        .points()
        .iter()
        .map(|p| {
            let n: [f64; 3] = std::array::from_fn(|_| normal.sample(rng).clamp(-clip, clip));
            [p[0] + n[0], p[1] + n[1], p[2] + n[2]]
        })
        .collect();
    match cloud.features() {
        Some(f) => PointCloud::with_features(points, f.clone()),
        None => PointCloud::new(points),
    }
}
