//! Synthetic fingerprint-like images with exact ROI masks.
//!
//! The foreground is an ellipse filled with wavy sinusoidal ridges; the
//! background is flat with additive noise. A [`SensorStyle`] controls the
//! intensity and texture statistics, so two styles emulate two sensors
//! observing the same kind of finger.

use std::path::Path;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{save_mask, save_plane, Domain, FingerprintSample, Manifest, ManifestRow, Sensing};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SensorStyle {
    /// Ridge period range in pixels.
    pub ridge_period: (f64, f64),
    /// Peak-to-peak ridge amplitude.
    pub ridge_contrast: f64,
    pub foreground_level: f64,
    pub background_level: f64,
    /// Standard deviation of background noise.
    pub background_noise: f64,
    /// Standard deviation of foreground noise.
    pub foreground_noise: f64,
}

impl Default for SensorStyle {
    fn default() -> Self {
        Self::synthetic()
    }
}

impl SensorStyle {
    /// Dark, high-contrast ridges on a bright, clean background.
    pub fn synthetic() -> Self {
        Self {
            ridge_period: (4.0, 6.0),
            ridge_contrast: 0.7,
            foreground_level: 0.45,
            background_level: 0.9,
            background_noise: 0.03,
            foreground_noise: 0.03,
        }
    }

    /// A second sensor: fainter ridges, duller background and heavy
    /// background noise.
    pub fn shifted() -> Self {
        Self {
            ridge_period: (4.0, 6.0),
            ridge_contrast: 0.5,
            foreground_level: 0.5,
            background_level: 0.8,
            background_noise: 0.25,
            foreground_noise: 0.05,
        }
    }
}

/// Draws one `(image, mask)` pair of the given `(width, height)`.
pub fn generate(
    rng: &mut impl Rng,
    width: usize,
    height: usize,
    style: &SensorStyle,
) -> (Array2<f64>, Array2<u8>) {
    let (w, h) = (width as f64, height as f64);
    let a = rng.random_range(0.30..0.42) * w;
    let b = rng.random_range(0.34..0.46) * h;
    let cx = rng.random_range(a..=(w - a).max(a));
    let cy = rng.random_range(b..=(h - b).max(b));
    let tilt: f64 = rng.random_range(-0.3..0.3);
    let period = rng.random_range(style.ridge_period.0..=style.ridge_period.1);
    let theta: f64 = rng.random_range(0.0..std::f64::consts::PI);
    let warp_amp = rng.random_range(0.5..2.0);
    let warp_len = rng.random_range(0.6..1.2) * w.max(h);
    let phase0: f64 = rng.random_range(0.0..std::f64::consts::TAU);
    let bg_noise = Normal::new(0.0, style.background_noise.max(1e-12)).expect("finite std");
    let fg_noise = Normal::new(0.0, style.foreground_noise.max(1e-12)).expect("finite std");
    let (ct, st) = (tilt.cos(), tilt.sin());
    let (co, so) = (theta.cos(), theta.sin());
    let k = std::f64::consts::TAU / period;

    let mut image = Array2::zeros((height, width));
    let mut mask = Array2::zeros((height, width));
    for y in 0..height {
        for x in 0..width {
            let (px, py) = (x as f64 + 0.5 - cx, y as f64 + 0.5 - cy);
            let u = (px * ct + py * st) / a;
            let v = (-px * st + py * ct) / b;
            let inside = u * u + v * v <= 1.0;
            let value = if inside {
                let along = px * co + py * so;
                let across = -px * so + py * co;
                let warp = warp_amp * (std::f64::consts::TAU * across / warp_len).sin() * period;
                let ridge = (k * (along + warp) + phase0).cos();
                style.foreground_level + 0.5 * style.ridge_contrast * ridge + fg_noise.sample(rng)
            } else {
                style.background_level + bg_noise.sample(rng)
            };
            image[[y, x]] = value.clamp(0.0, 1.0);
            mask[[y, x]] = u8::from(inside);
        }
    }
    (image, mask)
}

/// `count` samples with ids `000000`, `000001`, … drawn from `seed`.
pub fn generate_samples(
    count: usize,
    width: usize,
    height: usize,
    style: &SensorStyle,
    seed: u64,
    database: &str,
    domain: Domain,
) -> Vec<FingerprintSample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|i| {
            let (image, mask) = generate(&mut rng, width, height, style);
            FingerprintSample {
                image,
                mask: Some(mask),
                domain,
                database: database.to_string(),
                id: format!("{i:06}"),
                native_size: (width, height),
            }
        })
        .collect()
}

/// Writes samples as `<root>/<database>/{images,masks}/<id>.png`.
pub fn write_database(root: &Path, database: &str, samples: &[FingerprintSample]) -> Result<()> {
    let images = root.join(database).join("images");
    let masks = root.join(database).join("masks");
    for d in [&images, &masks] {
        std::fs::create_dir_all(d).map_err(|e| Error::io(d, e))?;
    }
    for s in samples {
        save_plane(&s.image, &images.join(format!("{}.png", s.id)))?;
        if let Some(m) = &s.mask {
            save_mask(m, &masks.join(format!("{}.png", s.id)))?;
        }
    }
    Ok(())
}

/// Description of one generated database for [`write_dataset`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthDatabase {
    pub name: String,
    pub sensing: Sensing,
    pub style: SensorStyle,
    pub count: usize,
    pub width: usize,
    pub height: usize,
}

/// Generates several databases under `root` plus a `manifest.toml` that
/// [`super::load_catalog`] accepts. Database `i` is seeded with `seed + i`.
pub fn write_dataset(root: &Path, databases: &[SynthDatabase], seed: u64) -> Result<Manifest> {
    let mut manifest = Manifest::default();
    for (i, db) in databases.iter().enumerate() {
        let domain = Domain::for_sensing(db.sensing);
        let samples = generate_samples(
            db.count,
            db.width,
            db.height,
            &db.style,
            seed.wrapping_add(i as u64),
            &db.name,
            domain,
        );
        write_database(root, &db.name, &samples)?;
        manifest.databases.push(ManifestRow {
            name: db.name.clone(),
            sensing: db.sensing,
            domain: Some(domain),
            width: Some(db.width),
            height: Some(db.height),
            path: None,
        });
    }
    let path = root.join("manifest.toml");
    std::fs::write(&path, manifest.to_toml_string()).map_err(|e| Error::io(&path, e))?;
    Ok(manifest)
}
