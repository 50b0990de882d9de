//! Binary PGM/PPM (P5/P6) and PFM reading and writing.
//!
//! Integer formats are scaled to `[0, 1]` by their maxval on load and
//! written with maxval 255 after clamping and rounding half-up. PFM keeps
//! 32-bit samples unscaled and is written little-endian, bottom row first.

use std::fs;
use std::io::Write;
use std::path::Path;

use adstv_core::Image;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("unsupported format: {0}")]
    Unsupported(String),
    #[error("malformed header: {0}")]
    Header(String),
    #[error("maxval {0} not supported (expected 255 or 65535)")]
    Maxval(u32),
    #[error("truncated payload: expected {expected} bytes, found {found}")]
    Truncated { expected: usize, found: usize },
    #[error(transparent)]
    Image(#[from] adstv_core::Error),
}

pub type Result<T> = std::result::Result<T, IoError>;

/// On-disk representation chosen from the file extension.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Pnm,
    Pfm,
}

impl Format {
    pub fn from_path(path: &Path) -> Result<Self> {
        let ext = path
            .extension()
            .and_then(|e| e.to_str())
            .map(str::to_ascii_lowercase)
            .unwrap_or_default();
        match ext.as_str() {
            "pgm" | "ppm" | "pnm" => Ok(Format::Pnm),
            "pfm" => Ok(Format::Pfm),
            _ => Err(IoError::Unsupported(format!("extension of {}", path.display()))),
        }
    }
}

pub fn load_image(path: impl AsRef<Path>) -> Result<Image> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|source| IoError::Io {
        path: path.display().to_string(),
        source,
    })?;
    decode(&bytes)
}

pub fn save_image(img: &Image, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = match Format::from_path(path)? {
        Format::Pnm => encode_pnm(img),
        Format::Pfm => encode_pfm(img),
    };
    let mut file = fs::File::create(path).map_err(|source| IoError::Io {
        path: path.display().to_string(),
        source,
    })?;
    file.write_all(&bytes).map_err(|source| IoError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Decode from the magic number: `P5`, `P6`, `Pf` or `PF`.
pub fn decode(bytes: &[u8]) -> Result<Image> {
    match bytes.get(..2) {
        Some(b"P5") => decode_pnm(bytes, 1),
        Some(b"P6") => decode_pnm(bytes, 3),
        Some(b"Pf") => decode_pfm(bytes, 1),
        Some(b"PF") => decode_pfm(bytes, 3),
        _ => Err(IoError::Unsupported("unknown magic number".into())),
    }
}

struct Header<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Header<'a> {
    fn skip_space(&mut self) {
        while let Some(&b) = self.bytes.get(self.pos) {
            if b == b'#' {
                while self.bytes.get(self.pos).is_some_and(|&c| c != b'\n') {
                    self.pos += 1;
                }
            } else if b.is_ascii_whitespace() {
                self.pos += 1;
            } else {
                break;
            }
        }
    }

    fn token(&mut self) -> Result<&'a str> {
        self.skip_space();
        let start = self.pos;
        while self.bytes.get(self.pos).is_some_and(|b| !b.is_ascii_whitespace()) {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(IoError::Header("unexpected end of header".into()));
        }
        std::str::from_utf8(&self.bytes[start..self.pos]).map_err(|_| IoError::Header("non-ASCII header".into()))
    }

    fn number<T: std::str::FromStr>(&mut self, what: &str) -> Result<T> {
        let tok = self.token()?;
        tok.parse().map_err(|_| IoError::Header(format!("bad {what}: {tok:?}")))
    }

    /// Consume the single whitespace byte that ends the header.
    fn end(&mut self) -> Result<usize> {
        match self.bytes.get(self.pos) {
            Some(b) if b.is_ascii_whitespace() => Ok(self.pos + 1),
            _ => Err(IoError::Header("missing whitespace after header".into())),
        }
    }
}

fn payload<'a>(bytes: &'a [u8], start: usize, expected: usize) -> Result<&'a [u8]> {
    let found = bytes.len().saturating_sub(start);
    if found < expected {
        return Err(IoError::Truncated { expected, found });
    }
    Ok(&bytes[start..start + expected])
}

fn decode_pnm(bytes: &[u8], channels: usize) -> Result<Image> {
    let mut h = Header { bytes, pos: 2 };
    let width: usize = h.number("width")?;
    let height: usize = h.number("height")?;
    let maxval: u32 = h.number("maxval")?;
    let start = h.end()?;
    let wide = match maxval {
        255 => false,
        65535 => true,
        m => return Err(IoError::Maxval(m)),
    };
    let n = width * height;
    let per = if wide { 2 } else { 1 };
    let raw = payload(bytes, start, n * channels * per)?;
    let scale = maxval as f64;
    let mut data = vec![0.0; n * channels];
    for i in 0..n {
        for c in 0..channels {
            let k = i * channels + c;
            let v = if wide {
                u16::from_be_bytes([raw[2 * k], raw[2 * k + 1]]) as f64
            } else {
                raw[k] as f64
            };
            data[c * n + i] = v / scale;
        }
    }
    Ok(Image::new(width, height, channels, data)?)
}

fn decode_pfm(bytes: &[u8], channels: usize) -> Result<Image> {
    let mut h = Header { bytes, pos: 2 };
    let width: usize = h.number("width")?;
    let height: usize = h.number("height")?;
    let scale: f64 = h.number("scale")?;
    let start = h.end()?;
    if scale == 0.0 || !scale.is_finite() {
        return Err(IoError::Header("scale must be nonzero".into()));
    }
    let little = scale < 0.0;
    let n = width * height;
    let raw = payload(bytes, start, n * channels * 4)?;
    let mut data = vec![0.0; n * channels];
    for (k, chunk) in raw.chunks_exact(4).enumerate() {
        let b = [chunk[0], chunk[1], chunk[2], chunk[3]];
        let v = if little { f32::from_le_bytes(b) } else { f32::from_be_bytes(b) };
        let (p, c) = (k / channels, k % channels);
        // rows are stored bottom to top
        let (x, row) = (p % width, p / width);
        let y = height - 1 - row;
        data[c * n + y * width + x] = v as f64;
    }
    Ok(Image::new(width, height, channels, data)?)
}

/// Round half-up to `0..=255` after clamping to `[0, 1]`.
pub fn quantize(v: f64) -> u8 {
    let v = if v.is_nan() { 0.0 } else { v.clamp(0.0, 1.0) };
    (v * 255.0 + 0.5).floor() as u8
}

pub fn encode_pnm(img: &Image) -> Vec<u8> {
    let (w, h, c) = img.dims();
    let magic = if c == 1 { "P5" } else { "P6" };
    let mut out = format!("{magic}\n{w} {h}\n255\n").into_bytes();
    let n = w * h;
    out.reserve(n * c);
    for i in 0..n {
        for ch in 0..c {
            out.push(quantize(img.channel(ch)[i]));
        }
    }
    out
}

pub fn encode_pfm(img: &Image) -> Vec<u8> {
    let (w, h, c) = img.dims();
    let magic = if c == 1 { "Pf" } else { "PF" };
    let mut out = format!("{magic}\n{w} {h}\n-1.0\n").into_bytes();
    out.reserve(w * h * c * 4);
    for y in (0..h).rev() {
        for x in 0..w {
            for ch in 0..c {
                out.extend_from_slice(&(img.get(ch, x, y) as f32).to_le_bytes());
            }
        }
    }
    out
}
