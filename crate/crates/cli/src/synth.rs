//! Synthetic texture benchmark.
//!
//! Five texture classes rendered at 224x224 and pushed through a fixed
//! "backbone" of Gabor filter banks, so the whole pipeline can be exercised
//! without pretrained networks. Block b (0-based) sees the image at 1/2^b
//! resolution, applies `8 * 2^b` unit-norm Gabor filters followed by a
//! thresholded ReLU (a conv layer with a fixed negative bias), and
//! average-pools by 4, giving strides (4, 8, 16, 32) and channels
//! (8, 16, 32, 64).

use std::f64::consts::PI;
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use radam_core::aggregate::ActivationMap;
use radam_core::tensorio::{write_manifest, write_tensor, ManifestLine, Split};

pub const IMAGE_SIZE: usize = 224;
pub const BLOCK_STRIDES: [usize; 4] = [4, 8, 16, 32];
pub const BLOCK_CHANNELS: [usize; 4] = [8, 16, 32, 64];
const KERNEL_RADIUS: usize = 3;
const POOL: usize = 4;
/// ReLU threshold, in units of the filter response std on unit white noise.
const RELU_THRESHOLD: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TextureClass {
    GratingCoarse,
    GratingFine,
    Checkerboard,
    WhiteNoise,
    LowPassNoise,
}

impl TextureClass {
    pub const ALL: [TextureClass; 5] = [
        TextureClass::GratingCoarse,
        TextureClass::GratingFine,
        TextureClass::Checkerboard,
        TextureClass::WhiteNoise,
        TextureClass::LowPassNoise,
    ];

    pub fn name(self) -> &'static str {
        match self {
            TextureClass::GratingCoarse => "grating_coarse",
            TextureClass::GratingFine => "grating_fine",
            TextureClass::Checkerboard => "checkerboard",
            TextureClass::WhiteNoise => "white_noise",
            TextureClass::LowPassNoise => "lowpass_noise",
        }
    }
}

/// Row-major grayscale image.
#[derive(Debug, Clone)]
pub struct Image {
    pub size: usize,
    pub pixels: Vec<f64>,
}

fn gaussian_noise(rng: &mut impl Rng, n: usize) -> Vec<f64> {
    (0..n)
        .map(|_| rng.sample::<f64, _>(StandardNormal))
        .collect()
}

fn separable_blur(src: &[f64], size: usize, sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil() as isize;
    let kernel: Vec<f64> = (-radius..=radius)
        .map(|t| (-(t * t) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let norm: f64 = kernel.iter().sum();
    let clamp = |i: isize| i.clamp(0, size as isize - 1) as usize;
    let mut tmp = vec![0.0; size * size];
    for y in 0..size {
        for x in 0..size {
            tmp[y * size + x] = kernel
                .iter()
                .enumerate()
                .map(|(k, w)| w * src[y * size + clamp(x as isize + k as isize - radius)])
                .sum::<f64>()
                / norm;
        }
    }
    let mut out = vec![0.0; size * size];
    for y in 0..size {
        for x in 0..size {
            out[y * size + x] = kernel
                .iter()
                .enumerate()
                .map(|(k, w)| w * tmp[clamp(y as isize + k as isize - radius) * size + x])
                .sum::<f64>()
                / norm;
        }
    }
    out
}

fn unit_variance(mut v: Vec<f64>) -> Vec<f64> {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let sd = (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt();
    v.iter_mut().for_each(|x| *x = (*x - mean) / sd);
    v
}

/// Render one texture sample with random phase, orientation jitter,
/// contrast, brightness and additive noise.
pub fn render(class: TextureClass, rng: &mut impl Rng) -> Image {
    let size = IMAGE_SIZE;
    let mut pixels = match class {
        TextureClass::GratingCoarse | TextureClass::GratingFine => {
            let period = if class == TextureClass::GratingCoarse {
                16.0
            } else {
                6.0
            };
            let theta = PI / 6.0 + rng.random_range(-0.15..0.15);
            let phase = rng.random_range(0.0..2.0 * PI);
            let (s, c) = theta.sin_cos();
            (0..size * size)
                .map(|i| {
                    let (x, y) = ((i % size) as f64, (i / size) as f64);
                    (2.0 * PI * (x * c + y * s) / period + phase).sin()
                })
                .collect()
        }
        TextureClass::Checkerboard => {
            let cell = 8.0;
            let (ox, oy) = (
                rng.random_range(0.0..2.0 * cell),
                rng.random_range(0.0..2.0 * cell),
            );
            (0..size * size)
                .map(|i| {
                    let (x, y) = ((i % size) as f64 + ox, (i / size) as f64 + oy);
                    let parity = ((x / cell).floor() + (y / cell).floor()) as i64;
                    if parity.rem_euclid(2) == 0 {
                        1.0
                    } else {
                        -1.0
                    }
                })
                .collect()
        }
        TextureClass::WhiteNoise => gaussian_noise(rng, size * size),
        TextureClass::LowPassNoise => {
            unit_variance(separable_blur(&gaussian_noise(rng, size * size), size, 3.0))
        }
    };
    let contrast = rng.random_range(0.6..1.4);
    let brightness = rng.random_range(-0.3..0.3);
    let jitter = gaussian_noise(rng, size * size);
    for (p, n) in pixels.iter_mut().zip(jitter) {
        *p = contrast * *p + brightness + 0.1 * n;
    }
    Image { size, pixels }
}

/// 2x2 average downsampling.
fn halve(img: &[f64], size: usize) -> Vec<f64> {
    let half = size / 2;
    let mut out = Vec::with_capacity(half * half);
    for y in 0..half {
        for x in 0..half {
            let i = 2 * y * size + 2 * x;
            out.push(0.25 * (img[i] + img[i + 1] + img[i + size] + img[i + size + 1]));
        }
    }
    out
}

/// Even and odd Gabor kernels at `channels / 2` orientations.
fn gabor_bank(channels: usize) -> Vec<Vec<f64>> {
    let side = 2 * KERNEL_RADIUS + 1;
    let (sigma, wavelength) = (1.5, 4.0);
    let orientations = channels / 2;
    let mut bank = Vec::with_capacity(channels);
    for o in 0..orientations {
        let theta = PI * o as f64 / orientations as f64;
        let (s, c) = theta.sin_cos();
        for odd in [false, true] {
            let mut k: Vec<f64> = (0..side * side)
                .map(|i| {
                    let x = (i % side) as f64 - KERNEL_RADIUS as f64;
                    let y = (i / side) as f64 - KERNEL_RADIUS as f64;
                    let u = x * c + y * s;
                    let env = (-(x * x + y * y) / (2.0 * sigma * sigma)).exp();
                    let arg = 2.0 * PI * u / wavelength;
                    env * if odd { arg.sin() } else { arg.cos() }
                })
                .collect();
            // zero mean so flat regions give no response, unit norm so unit
            // white noise gives unit response std
            let mean = k.iter().sum::<f64>() / k.len() as f64;
            k.iter_mut().for_each(|v| *v -= mean);
            let norm = k.iter().map(|v| v * v).sum::<f64>().sqrt();
            k.iter_mut().for_each(|v| *v /= norm);
            bank.push(k);
        }
    }
    bank
}

/// Thresholded-ReLU filter responses of one pyramid level, average-pooled by 4.
fn filter_level(img: &[f64], size: usize, bank: &[Vec<f64>], block: usize) -> ActivationMap {
    let side = 2 * KERNEL_RADIUS + 1;
    let out = size / POOL;
    let r = KERNEL_RADIUS as isize;
    let clamp = |i: isize| i.clamp(0, size as isize - 1) as usize;
    let mut data = vec![0.0; bank.len() * out * out];
    for (c, kernel) in bank.iter().enumerate() {
        let plane = &mut data[c * out * out..(c + 1) * out * out];
        for y in 0..size {
            for x in 0..size {
                let mut acc = 0.0;
                for ky in 0..side {
                    let row = clamp(y as isize + ky as isize - r) * size;
                    for kx in 0..side {
                        acc +=
                            kernel[ky * side + kx] * img[row + clamp(x as isize + kx as isize - r)];
                    }
                }
                plane[(y / POOL) * out + x / POOL] += (acc - RELU_THRESHOLD).max(0.0);
            }
        }
        let area = (POOL * POOL) as f64;
        plane.iter_mut().for_each(|v| *v /= area);
    }
    ActivationMap::new(out, out, bank.len(), data, block + 1).expect("finite filter responses")
}

/// Fixed multi-scale filter-bank "backbone".
#[derive(Debug, Clone)]
pub struct FilterBackbone {
    banks: Vec<Vec<Vec<f64>>>,
}

impl Default for FilterBackbone {
    fn default() -> Self {
        FilterBackbone {
            banks: BLOCK_CHANNELS.iter().map(|&c| gabor_bank(c)).collect(),
        }
    }
}

impl FilterBackbone {
    pub fn blocks(&self, image: &Image) -> Vec<ActivationMap> {
        let mut level = image.pixels.clone();
        let mut size = image.size;
        let mut maps = Vec::with_capacity(self.banks.len());
        for (b, bank) in self.banks.iter().enumerate() {
            if b > 0 {
                level = halve(&level, size);
                size /= 2;
            }
            maps.push(filter_level(&level, size, bank, b));
        }
        maps
    }
}

/// One rendered-and-filtered sample.
#[derive(Debug, Clone)]
pub struct Sample {
    pub label: String,
    pub split: Split,
    pub blocks: Vec<ActivationMap>,
}

/// `per_class` samples of each class; within a class, even positions go to
/// train and odd ones to test (a 50/50 split).
pub fn generate(per_class: usize, seed: u64) -> Vec<Sample> {
    let backbone = FilterBackbone::default();
    let jobs: Vec<(TextureClass, usize)> = TextureClass::ALL
        .iter()
        .flat_map(|&c| (0..per_class).map(move |i| (c, i)))
        .collect();
    jobs.par_iter()
        .enumerate()
        .map(|(idx, &(class, i))| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(idx as u64);
            let image = render(class, &mut rng);
            Sample {
                label: class.name().to_string(),
                split: if i % 2 == 0 {
                    Split::Train
                } else {
                    Split::Test
                },
                blocks: backbone.blocks(&image),
            }
        })
        .collect()
}

/// Write samples as per-image block directories plus `manifest.jsonl`.
pub fn write_dataset(samples: &[Sample], dir: &Path) -> anyhow::Result<std::path::PathBuf> {
    fs::create_dir_all(dir)?;
    let mut lines = Vec::with_capacity(samples.len());
    for (i, s) in samples.iter().enumerate() {
        let rel = format!("images/{i:05}");
        let image_dir = dir.join(&rel);
        fs::create_dir_all(&image_dir)?;
        for (b, map) in s.blocks.iter().enumerate() {
            write_tensor(
                &map.to_tensor()?,
                image_dir.join(format!("block_{}.radt", b + 1)),
            )?;
        }
        lines.push(ManifestLine {
            path: rel,
            label: s.label.clone(),
            split: s.split,
            fold: None,
        });
    }
    let manifest = dir.join("manifest.jsonl");
    write_manifest(&lines, &manifest)?;
    Ok(manifest)
}
