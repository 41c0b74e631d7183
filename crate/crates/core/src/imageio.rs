//! 8-bit RGB PNG and little-endian PFM files.
//!
//! PNG values are stored as `round(255·c)` and read back as `byte / 255`
//! with no gamma handling. PFM stores rows bottom to top, as the format
//! prescribes.

use std::io::{BufRead, Cursor};
use std::path::Path;

use crate::linalg::V3;

#[derive(Debug, thiserror::Error)]
pub enum ImageError {
    #[error("i/o on {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("malformed file at byte {offset}: {message}")]
    Parse { offset: usize, message: String },
    #[error("png: {0}")]
    Png(String),
    #[error("expected {expected} values for a {width}x{height} image, got {got}")]
    Size { width: usize, height: usize, expected: usize, got: usize },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ImageError + '_ {
    move |source| ImageError::Io { path: path.display().to_string(), source }
}

/// A float image with 1 or 3 channels, row-major from the top row.
#[derive(Clone, Debug, PartialEq)]
pub struct FloatImage {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub data: Vec<f32>,
}

impl FloatImage {
    pub fn from_scalar(width: usize, height: usize, values: &[f64]) -> Self {
        Self { width, height, channels: 1, data: values.iter().map(|&v| v as f32).collect() }
    }

    pub fn from_vectors(width: usize, height: usize, values: &[V3<f64>]) -> Self {
        Self { width, height, channels: 3, data: values.iter().flat_map(|v| v.map(|c| c as f32)).collect() }
    }

    pub fn to_scalar(&self) -> Vec<f64> {
        self.data.iter().step_by(self.channels).map(|&v| v as f64).collect()
    }

    pub fn to_vectors(&self) -> Vec<V3<f64>> {
        self.data.chunks_exact(self.channels).map(|c| std::array::from_fn(|k| c[k.min(c.len() - 1)] as f64)).collect()
    }
}

pub fn quantize(c: f64) -> u8 {
    (c.clamp(0.0, 1.0) * 255.0).round() as u8
}

pub fn encode_png(width: usize, height: usize, rgb: &[V3<f64>]) -> Result<Vec<u8>, ImageError> {
    if rgb.len() != width * height {
        return Err(ImageError::Size { width, height, expected: width * height, got: rgb.len() });
    }
    let bytes: Vec<u8> = rgb.iter().flat_map(|c| c.map(quantize)).collect();
    let mut out = Vec::new();
    {
        let mut enc = png::Encoder::new(&mut out, width as u32, height as u32);
        enc.set_color(png::ColorType::Rgb);
        enc.set_depth(png::BitDepth::Eight);
        let mut w = enc.write_header().map_err(|e| ImageError::Png(e.to_string()))?;
        w.write_image_data(&bytes).map_err(|e| ImageError::Png(e.to_string()))?;
    }
    Ok(out)
}

pub fn decode_png(bytes: &[u8]) -> Result<(usize, usize, Vec<V3<f64>>), ImageError> {
    let mut dec = png::Decoder::new(Cursor::new(bytes));
    dec.set_transformations(png::Transformations::normalize_to_color8());
    let mut reader = dec.read_info().map_err(|e| ImageError::Png(e.to_string()))?;
    let size = reader.output_buffer_size().ok_or_else(|| ImageError::Png("image too large".into()))?;
    let mut buf = vec![0; size];
    let info = reader.next_frame(&mut buf).map_err(|e| ImageError::Png(e.to_string()))?;
    let (w, h) = (info.width as usize, info.height as usize);
    let stride = info.color_type.samples();
    let px = |c: &[u8]| -> V3<f64> {
        let g = |k: usize| c[k] as f64 / 255.0;
        if stride >= 3 { [g(0), g(1), g(2)] } else { [g(0); 3] }
    };
    let rgb = buf[..info.buffer_size()].chunks_exact(stride).map(px).collect();
    Ok((w, h, rgb))
}

pub fn write_png(path: &Path, width: usize, height: usize, rgb: &[V3<f64>]) -> Result<(), ImageError> {
    std::fs::write(path, encode_png(width, height, rgb)?).map_err(io_err(path))
}

pub fn read_png(path: &Path) -> Result<(usize, usize, Vec<V3<f64>>), ImageError> {
    decode_png(&std::fs::read(path).map_err(io_err(path))?)
}

pub fn encode_pfm(img: &FloatImage) -> Result<Vec<u8>, ImageError> {
    let expected = img.width * img.height * img.channels;
    if !matches!(img.channels, 1 | 3) || img.data.len() != expected {
        return Err(ImageError::Size { width: img.width, height: img.height, expected, got: img.data.len() });
    }
    let tag = if img.channels == 3 { "PF" } else { "Pf" };
    let mut out = format!("{tag}\n{} {}\n-1.0\n", img.width, img.height).into_bytes();
    let row = img.width * img.channels;
    for y in (0..img.height).rev() {
        for v in &img.data[y * row..(y + 1) * row] {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

fn parse_err(offset: usize, message: impl Into<String>) -> ImageError {
    ImageError::Parse { offset, message: message.into() }
}

pub fn decode_pfm(bytes: &[u8]) -> Result<FloatImage, ImageError> {
    let mut cur = Cursor::new(bytes);
    let mut token = |what: &str| -> Result<(usize, String), ImageError> {
        // whitespace-separated header token
        let mut s = Vec::new();
        loop {
            let buf = cur.fill_buf().unwrap_or(&[]);
            let Some(&b) = buf.first() else { break };
            if b.is_ascii_whitespace() {
                if !s.is_empty() {
                    break;
                }
            } else {
                s.push(b);
            }
            cur.consume(1);
        }
        let start = cur.position() as usize - s.len();
        if s.is_empty() {
            return Err(parse_err(start, format!("missing {what}")));
        }
        // exactly one whitespace byte separates the header from the data
        cur.consume(1);
        String::from_utf8(s).map(|t| (start, t)).map_err(|_| parse_err(start, format!("{what} is not ASCII")))
    };
    let (off, tag) = token("format tag")?;
    let channels = match tag.as_str() {
        "PF" => 3,
        "Pf" => 1,
        other => return Err(parse_err(off, format!("unknown PFM tag {other:?}"))),
    };
    let mut dim = |what: &str| -> Result<usize, ImageError> {
        let (off, t) = token(what)?;
        t.parse::<usize>().map_err(|_| parse_err(off, format!("bad {what} {t:?}")))
    };
    let width = dim("width")?;
    let height = dim("height")?;
    let (off, scale) = token("scale")?;
    let scale: f64 = scale.parse().map_err(|_| parse_err(off, format!("bad scale {scale:?}")))?;
    if scale == 0.0 || !scale.is_finite() {
        return Err(parse_err(off, "scale must be a nonzero number"));
    }
    let little = scale < 0.0;
    let start = (cur.position() as usize).min(bytes.len());
    let n = width * height * channels;
    let body = &bytes[start..];
    if body.len() < 4 * n {
        return Err(parse_err(bytes.len(), format!("expected {} data bytes, found {}", 4 * n, body.len())));
    }
    let row = width * channels;
    let mut data = vec![0f32; n];
    for (k, c) in body[..4 * n].chunks_exact(4).enumerate() {
        let b = [c[0], c[1], c[2], c[3]];
        let v = if little { f32::from_le_bytes(b) } else { f32::from_be_bytes(b) };
        let (fy, x) = (k / row, k % row);
        data[(height - 1 - fy) * row + x] = v;
    }
    Ok(FloatImage { width, height, channels, data })
}

pub fn write_pfm(path: &Path, img: &FloatImage) -> Result<(), ImageError> {
    std::fs::write(path, encode_pfm(img)?).map_err(io_err(path))
}

pub fn read_pfm(path: &Path) -> Result<FloatImage, ImageError> {
    decode_pfm(&std::fs::read(path).map_err(io_err(path))?)
}
