//! On-disk formats for embeddings and images.
//!
//! # FEDM1 embedding files
//!
//! Little-endian throughout:
//!
//! | offset | size | field                                 |
//! |--------|------|---------------------------------------|
//! | 0      | 5    | magic `FEDM1`                         |
//! | 5      | 1    | dtype, `0x01` = f32                   |
//! | 6      | 4    | `d` (u32, ≥ 1)                        |
//! | 10     | 4    | `count` (u32, ≥ 1)                    |
//! | 14     | 2    | `model_id_len` (u16, ≤ 256)           |
//! | 16     | len  | `model_id`, UTF-8                     |
//! | 16+len | 4·d·count | row-major f32 values             |
//!
//! Nothing may follow the payload. Per-row identity labels, when present,
//! live in a sidecar text file `<path>.labels` with one label per line.

use std::io::Cursor;
use std::path::{Path, PathBuf};

use crate::augment::ImageTensor;
use crate::embedding::EmbeddingSet;
use crate::error::{Error, Result};
use crate::fsutil;

pub const FEDM1_MAGIC: &[u8; 5] = b"FEDM1";
pub const DTYPE_F32_LE: u8 = 0x01;
pub const MAX_MODEL_ID_LEN: usize = 256;
const FIXED_HEADER_LEN: usize = 16;

/// Parsed FEDM1 header.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EmbeddingFileHeader {
    pub dtype: u8,
    pub d: u32,
    pub count: u32,
    pub model_id: String,
}

impl EmbeddingFileHeader {
    /// Header length in bytes, including the model id.
    pub fn encoded_len(&self) -> usize {
        FIXED_HEADER_LEN + self.model_id.len()
    }

    fn parse(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < FIXED_HEADER_LEN {
            if bytes.len() >= 5 && &bytes[..5] != FEDM1_MAGIC {
                return Err(Error::Format("bad magic, not a FEDM1 file".into()));
            }
            return Err(Error::Truncation {
                expected: FIXED_HEADER_LEN as u64,
                found: bytes.len() as u64,
            });
        }
        if &bytes[..5] != FEDM1_MAGIC {
            return Err(Error::Format("bad magic, not a FEDM1 file".into()));
        }
        let dtype = bytes[5];
        if dtype != DTYPE_F32_LE {
            return Err(Error::Format(format!("unsupported dtype 0x{dtype:02x}")));
        }
        let d = u32::from_le_bytes(bytes[6..10].try_into().unwrap());
        let count = u32::from_le_bytes(bytes[10..14].try_into().unwrap());
        let model_id_len = u16::from_le_bytes(bytes[14..16].try_into().unwrap()) as usize;
        if d == 0 || count == 0 {
            return Err(Error::Format(format!("invalid shape d={d}, count={count}")));
        }
        if model_id_len > MAX_MODEL_ID_LEN {
            return Err(Error::Format(format!("model id length {model_id_len} exceeds {MAX_MODEL_ID_LEN}")));
        }
        let end = FIXED_HEADER_LEN + model_id_len;
        if bytes.len() < end {
            return Err(Error::Truncation {
                expected: end as u64,
                found: bytes.len() as u64,
            });
        }
        let model_id = std::str::from_utf8(&bytes[FIXED_HEADER_LEN..end])
            .map_err(|e| Error::Format(format!("model id is not UTF-8: {e}")))?
            .to_string();
        Ok(Self {
            dtype,
            d,
            count,
            model_id,
        })
    }
}

/// Serializes a set to FEDM1 bytes, narrowing values to f32.
pub fn encode_embeddings(set: &EmbeddingSet) -> Result<Vec<u8>> {
    let model = set.model_id().as_bytes();
    if model.len() > MAX_MODEL_ID_LEN {
        return Err(Error::Format(format!("model id longer than {MAX_MODEL_ID_LEN} bytes")));
    }
    let d = u32::try_from(set.dim()).map_err(|_| Error::Format("dimension exceeds u32".into()))?;
    let count =
        u32::try_from(set.count()).map_err(|_| Error::Format("row count exceeds u32".into()))?;
    let mut out = Vec::with_capacity(FIXED_HEADER_LEN + model.len() + 4 * set.as_flat().len());
    out.extend_from_slice(FEDM1_MAGIC);
    out.push(DTYPE_F32_LE);
    out.extend_from_slice(&d.to_le_bytes());
    out.extend_from_slice(&count.to_le_bytes());
    out.extend_from_slice(&(model.len() as u16).to_le_bytes());
    out.extend_from_slice(model);
    for &v in set.as_flat() {
        let narrowed = v as f32;
        if !narrowed.is_finite() {
            return Err(Error::InvalidEmbedding(format!("{v} does not fit in f32")));
        }
        out.extend_from_slice(&narrowed.to_le_bytes());
    }
    Ok(out)
}

/// Parses FEDM1 bytes. Labels are not part of the binary payload.
pub fn decode_embeddings(bytes: &[u8]) -> Result<EmbeddingSet> {
    let header = EmbeddingFileHeader::parse(bytes)?;
    let start = header.encoded_len() as u128;
    let payload = header.d as u128 * header.count as u128 * 4;
    let available = bytes.len() as u128 - start;
    if available < payload {
        return Err(Error::Truncation {
            expected: u64::try_from(start + payload).unwrap_or(u64::MAX),
            found: bytes.len() as u64,
        });
    }
    if available > payload {
        return Err(Error::Format(format!(
            "{} trailing bytes after payload",
            available - payload
        )));
    }
    let values: Vec<f64> = bytes[start as usize..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
        .collect();
    EmbeddingSet::from_flat(header.d as usize, values, header.model_id)
}

/// Path of the labels sidecar for an embedding file.
pub fn labels_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".labels");
    PathBuf::from(s)
}

/// Reads a FEDM1 file, attaching labels from its sidecar if one exists.
pub fn read_embeddings(path: impl AsRef<Path>) -> Result<EmbeddingSet> {
    let path = path.as_ref();
    let set = decode_embeddings(&fsutil::read(path)?)?;
    let sidecar = labels_path(path);
    if sidecar.exists() {
        let text = std::fs::read_to_string(&sidecar).map_err(|e| Error::io(&sidecar, e))?;
        let labels: Vec<String> = text.lines().map(str::to_string).collect();
        return set.with_labels(labels);
    }
    Ok(set)
}

/// Writes a FEDM1 file (and its labels sidecar when the set is labeled).
pub fn write_embeddings(set: &EmbeddingSet, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    if let Some(bad) = set
        .source_labels()
        .and_then(|labels| labels.iter().find(|l| l.contains(['\n', '\r'])))
    {
        return Err(Error::Format(format!("label {bad:?} contains a line break")));
    }
    fsutil::atomic_write(path, &encode_embeddings(set)?)?;
    if let Some(labels) = set.source_labels() {
        let mut text = labels.join("\n");
        text.push('\n');
        fsutil::atomic_write(&labels_path(path), text.as_bytes())?;
    }
    Ok(())
}

/// Reads embeddings from CSV: comma separated, one row per embedding, with an
/// optional header row. A header whose last column is `label` marks that
/// column as per-row identity labels.
pub fn read_embeddings_csv(path: impl AsRef<Path>, model_id: &str) -> Result<EmbeddingSet> {
    let path = path.as_ref();
    let bytes = fsutil::read(path)?;
    parse_embeddings_csv(&bytes, model_id)
}

pub fn parse_embeddings_csv(bytes: &[u8], model_id: &str) -> Result<EmbeddingSet> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(bytes);
    let mut records = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| Error::Format(e.to_string()))?;
        if rec.len() == 1 && rec[0].is_empty() {
            continue;
        }
        records.push(rec);
    }
    let first = records
        .first()
        .ok_or_else(|| Error::Format("CSV contains no rows".into()))?;
    let has_header = first.iter().any(|f| f.parse::<f64>().is_err());
    let has_label = has_header && first.iter().next_back() == Some("label");
    let data_rows = &records[has_header as usize..];
    if data_rows.is_empty() {
        return Err(Error::Format("CSV contains a header but no data".into()));
    }

    let width = first.len();
    let dim = width - has_label as usize;
    let mut values = Vec::with_capacity(data_rows.len() * dim);
    let mut labels = Vec::new();
    for (i, rec) in data_rows.iter().enumerate() {
        if rec.len() != width {
            return Err(Error::Format(format!(
                "row {} has {} fields, expected {width}",
                i + 1,
                rec.len()
            )));
        }
        for field in rec.iter().take(dim) {
            let v = field
                .parse::<f64>()
                .map_err(|_| Error::Parse(format!("row {}: {field:?} is not a number", i + 1)))?;
            values.push(v);
        }
        if has_label {
            labels.push(rec[dim].to_string());
        }
    }
    let set = EmbeddingSet::from_flat(dim, values, model_id)?;
    if has_label {
        set.with_labels(labels)
    } else {
        Ok(set)
    }
}

/// Decodes PNG bytes. Grayscale images keep one channel; everything else
/// becomes RGB (alpha dropped). 8-bit value `v` maps to `v / 255`.
pub fn decode_png(bytes: &[u8]) -> Result<ImageTensor> {
    let img = image::load_from_memory_with_format(bytes, image::ImageFormat::Png)
        .map_err(|e| Error::Format(format!("cannot decode PNG: {e}")))?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let (channels, raw) = if img.color().has_color() {
        (3, img.to_rgb8().into_raw())
    } else {
        (1, img.to_luma8().into_raw())
    };
    let pixels = raw.into_iter().map(|v| v as f32 / 255.0).collect();
    ImageTensor::new(h, w, channels, pixels)
}

/// Encodes to 8-bit PNG, rounding `p·255` to the nearest integer.
pub fn encode_png(image: &ImageTensor) -> Result<Vec<u8>> {
    let raw: Vec<u8> = image
        .pixels()
        .iter()
        .map(|&p| (p.clamp(0.0, 1.0) * 255.0).round() as u8)
        .collect();
    let (w, h) = (image.width() as u32, image.height() as u32);
    let dynamic = if image.channels() == 1 {
        image::DynamicImage::ImageLuma8(image::GrayImage::from_raw(w, h, raw).expect("buffer size"))
    } else {
        image::DynamicImage::ImageRgb8(image::RgbImage::from_raw(w, h, raw).expect("buffer size"))
    };
    let mut out = Cursor::new(Vec::new());
    dynamic
        .write_to(&mut out, image::ImageFormat::Png)
        .map_err(|e| Error::Format(format!("cannot encode PNG: {e}")))?;
    Ok(out.into_inner())
}

pub fn read_image(path: impl AsRef<Path>) -> Result<ImageTensor> {
    decode_png(&fsutil::read(path.as_ref())?)
}

pub fn write_image(image: &ImageTensor, path: impl AsRef<Path>) -> Result<()> {
    fsutil::atomic_write(path.as_ref(), &encode_png(image)?)
}
