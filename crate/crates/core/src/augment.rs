//! Seeded image augmentation: the transformation family used to expand a
//! handful of shots into many training images.
//!
//! # Random stream
//!
//! Parameters are drawn from ChaCha8 (`rand_chacha::ChaCha8Rng`) seeded with
//! `SeedableRng::seed_from_u64(config.seed)`. Each uniform variate takes one
//! `next_u64()` call: `u = (x >> 11) · 2⁻⁵³`, then `lo + (hi - lo) · u`.
//! Per parameter set the draw order is scale, angle, tx, ty, the three color
//! shifts, then contrast. Both the generator and this mapping are fixed, so
//! augmentation manifests are reproducible across releases.

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

use crate::error::{Error, Result};

/// An `h × w × c` image with interleaved channels and values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageTensor {
    height: usize,
    width: usize,
    channels: usize,
    pixels: Vec<f32>,
}

impl ImageTensor {
    pub fn new(height: usize, width: usize, channels: usize, pixels: Vec<f32>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::Shape(format!("empty image {height}x{width}")));
        }
        if channels != 1 && channels != 3 {
            return Err(Error::Shape(format!("unsupported channel count {channels}")));
        }
        if pixels.len() != height * width * channels {
            return Err(Error::Shape(format!(
                "{} pixel values for a {height}x{width}x{channels} image",
                pixels.len()
            )));
        }
        if pixels.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::Shape("pixel values must lie in [0, 1]".into()));
        }
        Ok(Self {
            height,
            width,
            channels,
            pixels,
        })
    }

    pub fn filled(height: usize, width: usize, channels: usize, value: f32) -> Result<Self> {
        Self::new(height, width, channels, vec![value; height * width * channels])
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.height, self.width, self.channels)
    }

    pub fn pixels(&self) -> &[f32] {
        &self.pixels
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize, c: usize) -> f32 {
        self.pixels[(y * self.width + x) * self.channels + c]
    }

    /// Bilinear sample at continuous coordinates, replicating edge pixels
    /// outside the image.
    fn sample_bilinear(&self, x: f64, y: f64, c: usize) -> f64 {
        let max_x = (self.width - 1) as f64;
        let max_y = (self.height - 1) as f64;
        let x = x.clamp(0.0, max_x);
        let y = y.clamp(0.0, max_y);
        let x0 = x.floor() as usize;
        let y0 = y.floor() as usize;
        let x1 = (x0 + 1).min(self.width - 1);
        let y1 = (y0 + 1).min(self.height - 1);
        let fx = x - x0 as f64;
        let fy = y - y0 as f64;
        let p = |yy, xx| self.get(yy, xx, c) as f64;
        let top = p(y0, x0) * (1.0 - fx) + p(y0, x1) * fx;
        let bottom = p(y1, x0) * (1.0 - fx) + p(y1, x1) * fx;
        top * (1.0 - fy) + bottom * fy
    }
}

/// Closed interval `[lo, hi]` for one augmentation parameter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Range {
    pub lo: f64,
    pub hi: f64,
}

impl Range {
    pub const fn new(lo: f64, hi: f64) -> Self {
        Self { lo, hi }
    }

    /// Degenerate range `[v, v]`.
    pub const fn point(v: f64) -> Self {
        Self { lo: v, hi: v }
    }

    pub fn contains(&self, v: f64) -> bool {
        self.lo <= v && v <= self.hi
    }

    fn validate(&self, name: &str, strictly_positive: bool) -> Result<()> {
        if !(self.lo.is_finite() && self.hi.is_finite()) {
            return Err(Error::Config(format!("{name} range must be finite")));
        }
        if self.lo > self.hi {
            return Err(Error::Config(format!(
                "{name} range has lo {} > hi {}",
                self.lo, self.hi
            )));
        }
        if strictly_positive && self.lo <= 0.0 {
            return Err(Error::Config(format!("{name} range must be strictly positive")));
        }
        Ok(())
    }
}

impl std::str::FromStr for Range {
    type Err = Error;

    /// Parses `lo:hi`.
    fn from_str(s: &str) -> Result<Self> {
        let (lo, hi) = s
            .split_once(':')
            .ok_or_else(|| Error::Config(format!("expected lo:hi, got {s:?}")))?;
        let parse = |v: &str| {
            v.trim()
                .parse::<f64>()
                .map_err(|e| Error::Config(format!("bad range bound {v:?}: {e}")))
        };
        Ok(Range::new(parse(lo)?, parse(hi)?))
    }
}

/// Parameter ranges and seed for [`sample_params`].
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentConfig {
    pub scale_range: Range,
    pub angle_range_deg: Range,
    pub translate_frac_range: Range,
    pub color_shift_range: Range,
    pub contrast_range: Range,
    pub seed: u64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self {
            scale_range: Range::new(0.9, 1.1),
            angle_range_deg: Range::new(-15.0, 15.0),
            translate_frac_range: Range::new(-0.1, 0.1),
            color_shift_range: Range::new(-0.1, 0.1),
            contrast_range: Range::new(0.8, 1.2),
            seed: 0,
        }
    }
}

impl AugmentConfig {
    /// Ranges that only ever produce the identity transform.
    pub fn identity(seed: u64) -> Self {
        Self {
            scale_range: Range::point(1.0),
            angle_range_deg: Range::point(0.0),
            translate_frac_range: Range::point(0.0),
            color_shift_range: Range::point(0.0),
            contrast_range: Range::point(1.0),
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.scale_range.validate("scale", true)?;
        self.angle_range_deg.validate("angle", false)?;
        self.translate_frac_range.validate("translate", false)?;
        self.color_shift_range.validate("color", false)?;
        self.contrast_range.validate("contrast", true)
    }
}

/// One draw from the transformation family.
///
/// `color_shift` always carries three values (one per RGB channel);
/// single-channel images use the first.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AugmentationParams {
    pub scale: f64,
    pub angle_deg: f64,
    pub tx_frac: f64,
    pub ty_frac: f64,
    pub color_shift: [f64; 3],
    pub contrast: f64,
}

impl AugmentationParams {
    pub const IDENTITY: Self = Self {
        scale: 1.0,
        angle_deg: 0.0,
        tx_frac: 0.0,
        ty_frac: 0.0,
        color_shift: [0.0; 3],
        contrast: 1.0,
    };

    fn is_identity_warp(&self) -> bool {
        self.scale == 1.0 && self.angle_deg == 0.0 && self.tx_frac == 0.0 && self.ty_frac == 0.0
    }
}

struct UniformStream(ChaCha8Rng);

impl UniformStream {
    fn new(seed: u64) -> Self {
        Self(ChaCha8Rng::seed_from_u64(seed))
    }

    fn unit(&mut self) -> f64 {
        (self.0.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    fn draw(&mut self, r: Range) -> f64 {
        // always consume a variate so the stream layout never depends on ranges
        let u = self.unit();
        if r.lo == r.hi {
            r.lo
        } else {
            (r.lo + (r.hi - r.lo) * u).clamp(r.lo, r.hi)
        }
    }
}

/// Draws `n` independent parameter sets, uniformly per field.
pub fn sample_params(config: &AugmentConfig, n: usize) -> Result<Vec<AugmentationParams>> {
    config.validate()?;
    let mut rng = UniformStream::new(config.seed);
    Ok((0..n)
        .map(|_| {
            let scale = rng.draw(config.scale_range);
            let angle_deg = rng.draw(config.angle_range_deg);
            let tx_frac = rng.draw(config.translate_frac_range);
            let ty_frac = rng.draw(config.translate_frac_range);
            let color_shift = [
                rng.draw(config.color_shift_range),
                rng.draw(config.color_shift_range),
                rng.draw(config.color_shift_range),
            ];
            let contrast = rng.draw(config.contrast_range);
            AugmentationParams {
                scale,
                angle_deg,
                tx_frac,
                ty_frac,
                color_shift,
                contrast,
            }
        })
        .collect())
}

/// Applies one transform: geometric warp (scale and rotation about the
/// center, then translation; bilinear, edge-replicated), then contrast about
/// 0.5, then per-channel color shift, then a clamp to `[0, 1]`.
pub fn apply_transform(image: &ImageTensor, params: &AugmentationParams) -> ImageTensor {
    let (h, w, c) = image.shape();
    let mut out: Vec<f64> = if params.is_identity_warp() {
        image.pixels.iter().map(|&p| p as f64).collect()
    } else {
        warp(image, params)
    };

    if params.contrast != 1.0 {
        for p in &mut out {
            *p = (*p - 0.5) * params.contrast + 0.5;
        }
    }
    for (i, p) in out.iter_mut().enumerate() {
        *p += params.color_shift[i % c];
    }

    let pixels = out.into_iter().map(|p| p.clamp(0.0, 1.0) as f32).collect();
    ImageTensor {
        height: h,
        width: w,
        channels: c,
        pixels,
    }
}

fn warp(image: &ImageTensor, params: &AugmentationParams) -> Vec<f64> {
    let (h, w, c) = image.shape();
    let cx = (w as f64 - 1.0) / 2.0;
    let cy = (h as f64 - 1.0) / 2.0;
    let tx = params.tx_frac * w as f64;
    let ty = params.ty_frac * h as f64;
    let (sin, cos) = params.angle_deg.to_radians().sin_cos();
    let inv_scale = 1.0 / params.scale;

    // forward: p' = s·R·(p - c) + c + t, so sample the source at
    // p = R⁻¹·(p' - c - t)/s + c
    let mut out = Vec::with_capacity(h * w * c);
    for y in 0..h {
        for x in 0..w {
            let dx = x as f64 - cx - tx;
            let dy = y as f64 - cy - ty;
            let sx = (cos * dx + sin * dy) * inv_scale + cx;
            let sy = (-sin * dx + cos * dy) * inv_scale + cy;
            for ch in 0..c {
                out.push(image.sample_bilinear(sx, sy, ch));
            }
        }
    }
    out
}

/// Expands `M` images into `M·N`: output `i·N + j` is image `i` under the
/// `j`-th of its own `N` parameter sets, all drawn from one seeded stream.
pub fn augment_set(
    images: &[ImageTensor],
    config: &AugmentConfig,
    n_per_image: usize,
) -> Result<Vec<ImageTensor>> {
    let first = images
        .first()
        .ok_or_else(|| Error::Config("augment_set needs at least one image".into()))?;
    if n_per_image == 0 {
        return Err(Error::Config("n_per_image must be at least 1".into()));
    }
    if let Some(bad) = images.iter().find(|im| im.shape() != first.shape()) {
        return Err(Error::Shape(format!(
            "expected {:?}, found {:?}",
            first.shape(),
            bad.shape()
        )));
    }
    let params = sample_params(config, images.len() * n_per_image)?;
    Ok(images
        .iter()
        .zip(params.chunks_exact(n_per_image))
        .flat_map(|(im, ps)| ps.iter().map(move |p| apply_transform(im, p)))
        .collect())
}
