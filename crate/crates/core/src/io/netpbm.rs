use std::path::Path;

use super::{read_bytes, write_bytes};
use crate::error::{Error, Result};
use crate::imagegrid::{DepthMap, ImageBuffer};

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> Cursor<'a> {
    fn new(bytes: &'a [u8], path: &'a Path) -> Self {
        Self { bytes, pos: 0, path }
    }

    fn line(&self) -> usize {
        1 + self.bytes[..self.pos.min(self.bytes.len())]
            .iter()
            .filter(|&&b| b == b'\n')
            .count()
    }

    fn err(&self, message: impl Into<String>) -> Error {
        Error::Parse {
            path: self.path.into(),
            line: self.line(),
            message: message.into(),
        }
    }

    fn magic(&mut self) -> Result<[u8; 2]> {
        if self.bytes.len() < 2 {
            return Err(self.err("file too short for a header"));
        }
        self.pos = 2;
        Ok([self.bytes[0], self.bytes[1]])
    }

    /// Next whitespace-delimited header token; `#` comments are skipped when `comments` is set.
    fn token(&mut self, comments: bool) -> Result<&'a str> {
        loop {
            match self.bytes.get(self.pos) {
                Some(b) if b.is_ascii_whitespace() => self.pos += 1,
                Some(b'#') if comments => {
                    while self.bytes.get(self.pos).is_some_and(|&b| b != b'\n') {
                        self.pos += 1;
                    }
                }
                Some(_) => break,
                None => return Err(self.err("truncated header")),
            }
        }
        let start = self.pos;
        while self
            .bytes
            .get(self.pos)
            .is_some_and(|b| !b.is_ascii_whitespace())
        {
            self.pos += 1;
        }
        std::str::from_utf8(&self.bytes[start..self.pos]).map_err(|_| self.err("non-ASCII header"))
    }

    fn number<T: std::str::FromStr>(&mut self, what: &str, comments: bool) -> Result<T> {
        let tok = self.token(comments)?;
        tok.parse()
            .map_err(|_| self.err(format!("invalid {what} `{tok}`")))
    }

    /// Consumes the single whitespace byte ending the header, then returns exactly `len` raster bytes.
    fn raster(&mut self, len: usize) -> Result<&'a [u8]> {
        match self.bytes.get(self.pos) {
            Some(b) if b.is_ascii_whitespace() => self.pos += 1,
            _ => return Err(self.err("header must end with one whitespace byte")),
        }
        let have = self.bytes.len() - self.pos;
        if have < len {
            return Err(self.err(format!("truncated raster: {have} of {len} bytes")));
        }
        if have > len {
            return Err(self.err(format!("{} unexpected bytes after raster", have - len)));
        }
        Ok(&self.bytes[self.pos..])
    }
}

fn dims(c: &mut Cursor<'_>, comments: bool) -> Result<(usize, usize)> {
    let w: usize = c.number("width", comments)?;
    let h: usize = c.number("height", comments)?;
    if w == 0 || h == 0 {
        return Err(c.err(format!("empty image {w}x{h}")));
    }
    w.checked_mul(h)
        .and_then(|n| n.checked_mul(12))
        .ok_or_else(|| c.err("image dimensions overflow"))?;
    Ok((w, h))
}

/// Binary PGM (`P5`, one channel) or PPM (`P6`, three channels); values divided by maxval.
pub fn decode_pnm(bytes: &[u8], path: &Path) -> Result<ImageBuffer> {
    let mut c = Cursor::new(bytes, path);
    let channels = match &c.magic()? {
        b"P5" => 1,
        b"P6" => 3,
        m => {
            return Err(Error::UnsupportedFormat {
                path: path.into(),
                message: format!("magic `{}`; only binary P5/P6 are read", String::from_utf8_lossy(m)),
            })
        }
    };
    let (w, h) = dims(&mut c, true)?;
    let maxval: u32 = c.number("maxval", true)?;
    if !(1..=65535).contains(&maxval) {
        return Err(c.err(format!("maxval {maxval} outside 1..=65535")));
    }
    let wide = maxval > 255;
    let n = w * h * channels;
    let raster = c.raster(if wide { 2 * n } else { n })?;
    let scale = maxval as f64;
    let data: Vec<f64> = if wide {
        raster
            .chunks_exact(2)
            .map(|b| u16::from_be_bytes([b[0], b[1]]) as f64 / scale)
            .collect()
    } else {
        raster.iter().map(|&b| b as f64 / scale).collect()
    };
    if data.iter().any(|&x| x > 1.0) {
        return Err(c.err(format!("sample exceeds maxval {maxval}")));
    }
    ImageBuffer::new(w, h, channels, data)
}

/// Values are clamped to `[0, 1]` and rounded to the nearest level. `maxval` is 255 or 65535.
pub fn encode_pnm(img: &ImageBuffer, maxval: u16) -> Result<Vec<u8>> {
    if maxval != 255 && maxval != 65535 {
        return Err(Error::InvalidArgument(format!(
            "maxval must be 255 or 65535, got {maxval}"
        )));
    }
    let magic = match img.channels() {
        1 => "P5",
        3 => "P6",
        c => return Err(Error::InvalidArgument(format!("cannot encode {c} channels"))),
    };
    let mut out = format!("{magic}\n{} {}\n{maxval}\n", img.width(), img.height()).into_bytes();
    let m = maxval as f64;
    for &x in img.data() {
        let q = (x.clamp(0.0, 1.0) * m).round() as u16;
        if maxval == 255 {
            out.push(q as u8);
        } else {
            out.extend_from_slice(&q.to_be_bytes());
        }
    }
    Ok(out)
}

pub fn read_image(path: impl AsRef<Path>) -> Result<ImageBuffer> {
    let path = path.as_ref();
    decode_pnm(&read_bytes(path)?, path)
}

pub fn write_image(img: &ImageBuffer, path: impl AsRef<Path>, maxval: u16) -> Result<()> {
    write_bytes(path.as_ref(), &encode_pnm(img, maxval)?)
}

/// PFM (`Pf` grey or `PF` colour). Rows are stored bottom to top; the sign of the
/// scale field selects byte order (negative = little-endian). Values are returned
/// unchecked, so zeros and non-finite entries survive.
pub fn decode_pfm(bytes: &[u8], path: &Path) -> Result<(usize, usize, usize, Vec<f64>)> {
    let mut c = Cursor::new(bytes, path);
    let channels = match &c.magic()? {
        b"Pf" => 1,
        b"PF" => 3,
        m => {
            return Err(Error::UnsupportedFormat {
                path: path.into(),
                message: format!("magic `{}` is not PFM", String::from_utf8_lossy(m)),
            })
        }
    };
    let (w, h) = dims(&mut c, false)?;
    let scale: f64 = c.number("scale", false)?;
    if scale == 0.0 || !scale.is_finite() {
        return Err(c.err(format!("invalid scale {scale}")));
    }
    let little = scale < 0.0;
    let row = w * channels;
    let raster = c.raster(4 * row * h)?;
    let mut data = vec![0.0; row * h];
    for (i, b) in raster.chunks_exact(4).enumerate() {
        let b = [b[0], b[1], b[2], b[3]];
        let x = if little {
            f32::from_le_bytes(b)
        } else {
            f32::from_be_bytes(b)
        };
        let (file_row, col) = (i / row, i % row);
        data[(h - 1 - file_row) * row + col] = x as f64;
    }
    Ok((w, h, channels, data))
}

/// Little-endian, scale `-1`, values narrowed to `f32`.
pub fn encode_pfm(width: usize, height: usize, channels: usize, data: &[f64]) -> Result<Vec<u8>> {
    let magic = match channels {
        1 => "Pf",
        3 => "PF",
        c => return Err(Error::InvalidArgument(format!("cannot encode {c} channels"))),
    };
    let row = width * channels;
    if data.len() != row * height {
        return Err(Error::dims(
            format!("{} values ({width}x{height}x{channels})", row * height),
            format!("{} values", data.len()),
        ));
    }
    let mut out = format!("{magic}\n{width} {height}\n-1.0\n").into_bytes();
    out.reserve(4 * data.len());
    for r in (0..height).rev() {
        for &x in &data[r * row..(r + 1) * row] {
            out.extend_from_slice(&(x as f32).to_le_bytes());
        }
    }
    Ok(out)
}

pub fn read_pfm(path: impl AsRef<Path>) -> Result<(usize, usize, usize, Vec<f64>)> {
    let path = path.as_ref();
    decode_pfm(&read_bytes(path)?, path)
}

pub fn write_pfm(
    width: usize,
    height: usize,
    channels: usize,
    data: &[f64],
    path: impl AsRef<Path>,
) -> Result<()> {
    write_bytes(path.as_ref(), &encode_pfm(width, height, channels, data)?)
}

/// Single-channel PFM holding strictly positive depths.
pub fn read_depth(path: impl AsRef<Path>) -> Result<DepthMap> {
    let path = path.as_ref();
    let (w, h, channels, data) = read_pfm(path)?;
    if channels != 1 {
        return Err(Error::UnsupportedFormat {
            path: path.into(),
            message: "depth maps are single-channel (Pf)".into(),
        });
    }
    DepthMap::new(w, h, data)
}

pub fn write_depth(depth: &DepthMap, path: impl AsRef<Path>) -> Result<()> {
    write_pfm(depth.width(), depth.height(), 1, depth.data(), path)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p() -> &'static Path {
        Path::new("x")
    }

    #[test]
    fn one_pixel_pgm() {
        let img = decode_pnm(b"P5\n1 1\n255\n\x80", p()).unwrap();
        assert_eq!(img.data(), &[128.0 / 255.0]);
    }

    #[test]
    fn header_comments_and_sixteen_bit() {
        let img = decode_pnm(b"P5 # grey\n2 1\n# max\n65535\n\x01\x00\xff\xff", p()).unwrap();
        assert_eq!(img.data(), &[256.0 / 65535.0, 1.0]);
    }

    #[test]
    fn pnm_round_trip_is_quantization_exact() {
        let img = ImageBuffer::from_fn(3, 2, 3, |x, y, c| ((x + 3 * y + 7 * c) % 11) as f64 / 10.0).unwrap();
        for maxval in [255u16, 65535] {
            let once = decode_pnm(&encode_pnm(&img, maxval).unwrap(), p()).unwrap();
            let twice = decode_pnm(&encode_pnm(&once, maxval).unwrap(), p()).unwrap();
            assert_eq!(once, twice);
            for (a, b) in img.data().iter().zip(once.data()) {
                assert!((a - b).abs() <= 0.5 / maxval as f64 + 1e-15);
            }
        }
    }

    #[test]
    fn truncated_and_padded_rejected() {
        assert!(matches!(decode_pnm(b"P5\n2 2\n255\n\x01\x02\x03", p()), Err(Error::Parse { .. })));
        assert!(matches!(decode_pnm(b"P5\n1 1\n255\n\x01\x02", p()), Err(Error::Parse { .. })));
        assert!(matches!(decode_pnm(b"P5\n1 1", p()), Err(Error::Parse { .. })));
        assert!(matches!(decode_pnm(b"P", p()), Err(Error::Parse { .. })));
        assert!(matches!(decode_pnm(b"P5\n1 1\n300\n\xff\xff", p()), Err(Error::Parse { .. })));
    }

    #[test]
    fn ascii_variants_unsupported() {
        assert!(matches!(
            decode_pnm(b"P2\n1 1\n255\n7\n", p()),
            Err(Error::UnsupportedFormat { .. })
        ));
    }

    #[test]
    fn pfm_layout_is_bottom_up_little_endian() {
        let bytes = encode_pfm(1, 2, 1, &[1.0, 2.0]).unwrap();
        let mut expected = b"Pf\n1 2\n-1.0\n".to_vec();
        expected.extend_from_slice(&2.0f32.to_le_bytes());
        expected.extend_from_slice(&1.0f32.to_le_bytes());
        assert_eq!(bytes, expected);
    }

    #[test]
    fn pfm_big_endian_read() {
        let mut bytes = b"Pf\n2 1\n1.0\n".to_vec();
        bytes.extend_from_slice(&3.5f32.to_be_bytes());
        bytes.extend_from_slice(&(-0.25f32).to_be_bytes());
        let (w, h, c, data) = decode_pfm(&bytes, p()).unwrap();
        assert_eq!((w, h, c), (2, 1, 1));
        assert_eq!(data, vec![3.5, -0.25]);
    }

    #[test]
    fn pfm_truncated_rejected() {
        let bytes = encode_pfm(4, 3, 1, &[1.0; 12]).unwrap();
        for cut in [1, 5, bytes.len() - 1] {
            assert!(matches!(decode_pfm(&bytes[..cut], p()), Err(Error::Parse { .. })));
        }
    }
}
