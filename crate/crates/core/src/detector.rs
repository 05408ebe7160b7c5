//! HTTP client for an external face detector, and local cropping.
//!
//! Wire protocol: `POST <endpoint>` with the PNG as the body,
//! `Content-Type: image/png` and, when configured, `Authorization: Bearer
//! <token>`. A 2xx response carries a JSON array of
//! `{"x", "y", "width", "height", "confidence"}` objects.

pub mod mock;

use std::time::Duration;

use log::warn;
use serde::Deserialize;

use crate::augment::ImageTensor;
use crate::error::{Error, Result};

/// A detected face region in pixel coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundingBox {
    pub x: u32,
    pub y: u32,
    pub width: u32,
    pub height: u32,
    pub confidence: f64,
}

impl BoundingBox {
    pub fn full(image: &ImageTensor) -> Self {
        Self {
            x: 0,
            y: 0,
            width: image.width() as u32,
            height: image.height() as u32,
            confidence: 1.0,
        }
    }

    /// `(x, y, width, height)` intersected with a `width × height` image;
    /// `None` when nothing is left.
    pub fn clamped(&self, width: usize, height: usize) -> Option<(usize, usize, usize, usize)> {
        let (x, y) = (self.x as usize, self.y as usize);
        let x_end = (x + self.width as usize).min(width);
        let y_end = (y + self.height as usize).min(height);
        if x >= x_end || y >= y_end {
            return None;
        }
        Some((x, y, x_end - x, y_end - y))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectorConfig {
    pub endpoint_url: String,
    pub timeout_ms: u64,
    pub min_confidence: f64,
    pub auth_token: Option<String>,
}

impl DetectorConfig {
    pub fn new(endpoint_url: impl Into<String>) -> Self {
        Self {
            endpoint_url: endpoint_url.into(),
            timeout_ms: 10_000,
            min_confidence: 0.5,
            auth_token: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.timeout_ms == 0 {
            return Err(Error::Config("detector timeout must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.min_confidence) {
            return Err(Error::Config(format!(
                "min_confidence {} outside [0, 1]",
                self.min_confidence
            )));
        }
        reqwest::Url::parse(&self.endpoint_url)
            .map_err(|e| Error::Config(format!("bad detector url {:?}: {e}", self.endpoint_url)))?;
        Ok(())
    }
}

#[derive(Deserialize)]
struct WireBox {
    x: u32,
    y: u32,
    width: u32,
    height: u32,
    confidence: f64,
}

/// Blocking detector client. Cheap to share across threads.
#[derive(Debug, Clone)]
pub struct DetectorClient {
    config: DetectorConfig,
    http: reqwest::blocking::Client,
}

impl DetectorClient {
    pub fn new(config: DetectorConfig) -> Result<Self> {
        config.validate()?;
        let http = reqwest::blocking::Client::builder()
            .timeout(Duration::from_millis(config.timeout_ms))
            .build()
            .map_err(|e| Error::Network(e.to_string()))?;
        Ok(Self { config, http })
    }

    pub fn config(&self) -> &DetectorConfig {
        &self.config
    }

    /// Detects faces in a PNG. Boxes below `min_confidence` are dropped and
    /// the rest sorted by descending confidence. A timed-out request is
    /// retried once.
    pub fn detect_faces(&self, png: &[u8]) -> Result<Vec<BoundingBox>> {
        let (status, body) = match self.send(png) {
            Err(Error::NetworkTimeout { .. }) => {
                warn!("detector request timed out, retrying once");
                self.send(png)?
            }
            other => other?,
        };
        if !(200..300).contains(&status) {
            return Err(Error::Service { status });
        }
        let mut boxes = parse_boxes(&body)?;
        boxes.retain(|b| b.confidence >= self.config.min_confidence);
        boxes.sort_by(|a, b| b.confidence.total_cmp(&a.confidence));
        Ok(boxes)
    }

    fn send(&self, png: &[u8]) -> Result<(u16, Vec<u8>)> {
        let mut req = self
            .http
            .post(&self.config.endpoint_url)
            .header(reqwest::header::CONTENT_TYPE, "image/png")
            .body(png.to_vec());
        if let Some(token) = &self.config.auth_token {
            req = req.bearer_auth(token);
        }
        let resp = req.send().map_err(|e| self.map_err(e))?;
        let status = resp.status().as_u16();
        let body = resp.bytes().map_err(|e| self.map_err(e))?;
        Ok((status, body.to_vec()))
    }

    fn map_err(&self, e: reqwest::Error) -> Error {
        if e.is_timeout() {
            Error::NetworkTimeout {
                timeout_ms: self.config.timeout_ms,
            }
        } else if e.is_connect() {
            Error::Network(e.to_string())
        } else {
            Error::Protocol(e.to_string())
        }
    }
}

fn parse_boxes(body: &[u8]) -> Result<Vec<BoundingBox>> {
    let wire: Vec<WireBox> = serde_json::from_slice(body)
        .map_err(|e| Error::Protocol(format!("malformed detector response: {e}")))?;
    wire.into_iter()
        .enumerate()
        .map(|(i, w)| {
            if w.width == 0 || w.height == 0 {
                return Err(Error::Protocol(format!("box {i} has zero size")));
            }
            if !(0.0..=1.0).contains(&w.confidence) {
                return Err(Error::Protocol(format!(
                    "box {i} confidence {} outside [0, 1]",
                    w.confidence
                )));
            }
            Ok(BoundingBox {
                x: w.x,
                y: w.y,
                width: w.width,
                height: w.height,
                confidence: w.confidence,
            })
        })
        .collect()
}

/// One-shot convenience wrapper around [`DetectorClient::detect_faces`].
pub fn detect_faces(image_bytes: &[u8], config: &DetectorConfig) -> Result<Vec<BoundingBox>> {
    DetectorClient::new(config.clone())?.detect_faces(image_bytes)
}

/// Cuts the part of `image` covered by `bbox`, clamped to the image bounds.
pub fn crop(image: &ImageTensor, bbox: &BoundingBox) -> Result<ImageTensor> {
    let (x, y, w, h) = bbox
        .clamped(image.width(), image.height())
        .ok_or_else(|| Error::InvalidBox(format!("{bbox:?} does not intersect the image")))?;
    let c = image.channels();
    let row_len = image.width() * c;
    let mut pixels = Vec::with_capacity(w * h * c);
    for yy in y..y + h {
        let start = yy * row_len + x * c;
        pixels.extend_from_slice(&image.pixels()[start..start + w * c]);
    }
    ImageTensor::new(h, w, c, pixels)
}

/// Crops to the most confident box, or keeps the whole image (with a
/// warning) when there are none.
pub fn select_face(image: &ImageTensor, boxes: &[BoundingBox]) -> Result<ImageTensor> {
    let best = boxes.iter().max_by(|a, b| a.confidence.total_cmp(&b.confidence));
    match best {
        Some(b) => crop(image, b),
        None => {
            warn!("no face detected, using the whole image");
            Ok(image.clone())
        }
    }
}
