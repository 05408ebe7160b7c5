//! Enrollment store and the accept/reject decision rule.
//!
//! # FTPL1 gallery files
//!
//! Little-endian throughout. Header:
//!
//! ```text
//! magic        5 bytes  "FTPL1"
//! version      u16      (currently 1)
//! created_at   i64      unix seconds
//! model_id_len u16, model_id UTF-8
//! count        u32      number of templates
//! ```
//!
//! Then per template, in identity order:
//!
//! ```text
//! id_len u16, identity_id UTF-8
//! d            u32
//! epsilon      f64
//! sample_count u64
//! mean         d × f64
//! L            d(d+1)/2 × f64, lower triangle packed row by row
//! ```

use std::collections::BTreeMap;
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use crate::embedding::{Embedding, EmbeddingSet};
use crate::error::{Error, Result};
use crate::fsutil;
use crate::linalg::CholeskyFactor;
use crate::template::{fit_template, mahalanobis, GaussianTemplate};

pub const FTPL1_MAGIC: &[u8; 5] = b"FTPL1";
pub const FORMAT_VERSION: u16 = 1;

/// Outcome of checking one probe against one identity.
#[derive(Debug, Clone, PartialEq)]
pub struct VerificationResult {
    pub identity_id: String,
    pub distance: f64,
    pub threshold: f64,
    pub accepted: bool,
}

/// All enrolled templates for one embedding model.
#[derive(Debug, Clone, PartialEq)]
pub struct Gallery {
    templates: BTreeMap<String, GaussianTemplate>,
    model_id: String,
    created_at: i64,
    format_version: u16,
}

impl Gallery {
    pub fn new(model_id: impl Into<String>) -> Self {
        let created_at = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs() as i64)
            .unwrap_or(0);
        Self {
            templates: BTreeMap::new(),
            model_id: model_id.into(),
            created_at,
            format_version: FORMAT_VERSION,
        }
    }

    pub fn model_id(&self) -> &str {
        &self.model_id
    }

    pub fn created_at(&self) -> i64 {
        self.created_at
    }

    pub fn format_version(&self) -> u16 {
        self.format_version
    }

    pub fn len(&self) -> usize {
        self.templates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.templates.is_empty()
    }

    /// Embedding dimension shared by all templates, if any are enrolled.
    pub fn dim(&self) -> Option<usize> {
        self.templates.values().next().map(GaussianTemplate::dim)
    }

    pub fn template(&self, identity_id: &str) -> Option<&GaussianTemplate> {
        self.templates.get(identity_id)
    }

    /// Templates in lexicographic identity order.
    pub fn templates(&self) -> impl Iterator<Item = &GaussianTemplate> {
        self.templates.values()
    }

    pub fn identities(&self) -> impl Iterator<Item = &str> {
        self.templates.keys().map(String::as_str)
    }

    /// Fits a template to `samples` and stores it under `identity_id`.
    pub fn enroll(
        &mut self,
        identity_id: &str,
        samples: &EmbeddingSet,
        epsilon: f64,
        overwrite: bool,
    ) -> Result<&GaussianTemplate> {
        if samples.model_id() != self.model_id {
            return Err(Error::ModelMismatch {
                expected: self.model_id.clone(),
                got: samples.model_id().to_string(),
            });
        }
        if !overwrite && self.templates.contains_key(identity_id) {
            return Err(Error::DuplicateIdentity(identity_id.to_string()));
        }
        let template = fit_template(samples, identity_id, epsilon)?;
        self.insert(template, overwrite)
    }

    /// Adds a ready-made template.
    pub fn insert(&mut self, template: GaussianTemplate, overwrite: bool) -> Result<&GaussianTemplate> {
        if template.model_id() != self.model_id {
            return Err(Error::ModelMismatch {
                expected: self.model_id.clone(),
                got: template.model_id().to_string(),
            });
        }
        let id = template.identity_id().to_string();
        if !overwrite && self.templates.contains_key(&id) {
            return Err(Error::DuplicateIdentity(id));
        }
        // an overwrite of the only template may change the dimension
        let others = self.templates.iter().filter(|(k, _)| **k != id);
        if let Some((_, other)) = others.into_iter().next() {
            if other.dim() != template.dim() {
                return Err(Error::DimensionMismatch {
                    expected: other.dim(),
                    got: template.dim(),
                });
            }
        }
        self.templates.insert(id.clone(), template);
        Ok(&self.templates[&id])
    }

    /// Distance of `probe` to `identity_id`; accepted iff `distance ≤ threshold`.
    pub fn verify(
        &self,
        identity_id: &str,
        probe: &Embedding,
        threshold: f64,
    ) -> Result<VerificationResult> {
        let template = self
            .templates
            .get(identity_id)
            .ok_or_else(|| Error::UnknownIdentity(identity_id.to_string()))?;
        let distance = mahalanobis(template, probe)?;
        Ok(VerificationResult {
            identity_id: identity_id.to_string(),
            distance,
            threshold,
            accepted: distance <= threshold,
        })
    }

    /// Distances to every enrolled identity, nearest first. Ties keep
    /// lexicographic identity order.
    pub fn identify(&self, probe: &Embedding) -> Result<Vec<(String, f64)>> {
        if self.templates.is_empty() {
            return Err(Error::EmptyGallery);
        }
        let mut ranked = self
            .templates
            .iter()
            .map(|(id, t)| Ok((id.clone(), mahalanobis(t, probe)?)))
            .collect::<Result<Vec<_>>>()?;
        // stable sort over identity-ordered input
        ranked.sort_by(|a, b| a.1.total_cmp(&b.1));
        Ok(ranked)
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        out.extend_from_slice(FTPL1_MAGIC);
        out.extend_from_slice(&self.format_version.to_le_bytes());
        out.extend_from_slice(&self.created_at.to_le_bytes());
        put_str(&mut out, &self.model_id)?;
        out.extend_from_slice(&(self.templates.len() as u32).to_le_bytes());
        for t in self.templates.values() {
            put_str(&mut out, t.identity_id())?;
            out.extend_from_slice(&(t.dim() as u32).to_le_bytes());
            out.extend_from_slice(&t.epsilon().to_le_bytes());
            out.extend_from_slice(&t.sample_count().to_le_bytes());
            for v in t.mean() {
                out.extend_from_slice(&v.to_le_bytes());
            }
            for v in t.chol_lower().packed_lower() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(5)? != FTPL1_MAGIC {
            return Err(Error::Format("bad magic, not a FTPL1 file".into()));
        }
        let version = r.u16()?;
        if version != FORMAT_VERSION {
            return Err(Error::Version {
                expected: FORMAT_VERSION,
                found: version,
            });
        }
        let created_at = r.i64()?;
        let model_id = r.string()?;
        let count = r.u32()?;
        let mut gallery = Gallery {
            templates: BTreeMap::new(),
            model_id,
            created_at,
            format_version: version,
        };
        for _ in 0..count {
            let identity_id = r.string()?;
            let d = r.u32()? as usize;
            if d == 0 {
                return Err(Error::Format(format!("template {identity_id:?} has d = 0")));
            }
            let epsilon = r.f64()?;
            let sample_count = r.u64()?;
            let mean = r.f64s(d)?;
            let packed_len = d
                .checked_mul(d + 1)
                .map(|v| v / 2)
                .ok_or_else(|| Error::Format(format!("template dimension {d} is too large")))?;
            let packed = r.f64s(packed_len)?;
            let chol = CholeskyFactor::from_packed_lower(d, &packed)
                .map_err(|e| Error::Format(format!("template {identity_id:?}: {e}")))?;
            let template = GaussianTemplate::from_parts(
                identity_id.clone(),
                mean,
                chol,
                epsilon,
                sample_count,
                gallery.model_id.clone(),
            )
            .map_err(|e| Error::Format(format!("template {identity_id:?}: {e}")))?;
            if gallery.templates.contains_key(&identity_id) {
                return Err(Error::Format(format!("duplicate identity {identity_id:?}")));
            }
            gallery
                .insert(template, false)
                .map_err(|e| Error::Format(e.to_string()))?;
        }
        if r.pos != bytes.len() {
            return Err(Error::Format(format!(
                "{} trailing bytes after last template",
                bytes.len() - r.pos
            )));
        }
        Ok(gallery)
    }
}

/// Writes the gallery atomically (temp file, then rename).
pub fn save_gallery(gallery: &Gallery, path: impl AsRef<Path>) -> Result<()> {
    fsutil::atomic_write(path.as_ref(), &gallery.to_bytes()?)
}

pub fn load_gallery(path: impl AsRef<Path>) -> Result<Gallery> {
    Gallery::from_bytes(&fsutil::read(path.as_ref())?)
}

fn put_str(out: &mut Vec<u8>, s: &str) -> Result<()> {
    let len = u16::try_from(s.len())
        .map_err(|_| Error::Format(format!("string of {} bytes is too long", s.len())))?;
    out.extend_from_slice(&len.to_le_bytes());
    out.extend_from_slice(s.as_bytes());
    Ok(())
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| {
                Error::Format(format!(
                    "unexpected end of file: need {n} bytes at offset {}",
                    self.pos
                ))
            })?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn array<const N: usize>(&mut self) -> Result<[u8; N]> {
        Ok(self.take(N)?.try_into().unwrap())
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.array()?))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.array()?))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.array()?))
    }

    fn i64(&mut self) -> Result<i64> {
        Ok(i64::from_le_bytes(self.array()?))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.array()?))
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let len = n
            .checked_mul(8)
            .ok_or_else(|| Error::Format("length overflow".into()))?;
        Ok(self
            .take(len)?
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }

    fn string(&mut self) -> Result<String> {
        let len = self.u16()? as usize;
        let raw = self.take(len)?;
        String::from_utf8(raw.to_vec()).map_err(|e| Error::Format(format!("invalid UTF-8: {e}")))
    }
}
