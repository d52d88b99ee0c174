//! RGB images and the netpbm formats they travel in (P6 in, P6/P5 out).

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Image {
    width: usize,
    height: usize,
    pixels: Vec<[u8; 3]>,
}

impl Image {
    pub fn new(width: usize, height: usize, pixels: Vec<[u8; 3]>) -> Result<Self> {
        if width == 0 || height == 0 || pixels.len() != width * height {
            return Err(Error::InvalidArgument(format!(
                "{width}x{height} image with {} pixels",
                pixels.len()
            )));
        }
        Ok(Image { width, height, pixels })
    }

    pub fn filled(width: usize, height: usize, rgb: [u8; 3]) -> Result<Self> {
        Self::new(width, height, vec![rgb; width * height])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[[u8; 3]] {
        &self.pixels
    }

    pub fn pixel(&self, x: usize, y: usize) -> [u8; 3] {
        self.pixels[y * self.width + x]
    }

    pub fn set_pixel(&mut self, x: usize, y: usize, rgb: [u8; 3]) {
        self.pixels[y * self.width + x] = rgb;
    }

    pub fn is_square(&self) -> bool {
        self.width == self.height
    }
}

/// Reads a binary P6 file with maxval 255.
pub fn decode_image(path: impl AsRef<Path>) -> Result<Image> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_ppm(&bytes).map_err(|e| match e {
        Error::UnsupportedFormat { reason, .. } => Error::UnsupportedFormat { path: path.into(), reason },
        Error::CorruptFile { reason, .. } => Error::CorruptFile { path: path.into(), reason },
        other => other,
    })
}

pub fn decode_ppm(bytes: &[u8]) -> Result<Image> {
    let unsupported = |reason: &str| Error::UnsupportedFormat { path: Default::default(), reason: reason.into() };
    let corrupt = |reason: String| Error::CorruptFile { path: Default::default(), reason };
    if bytes.len() < 2 || &bytes[..2] != b"P6" {
        return Err(unsupported("not a binary PPM (P6)"));
    }
    let mut pos = 2;
    let mut fields = [0usize; 3];
    for field in &mut fields {
        loop {
            match bytes.get(pos) {
                Some(b'#') => {
                    while bytes.get(pos).is_some_and(|&b| b != b'\n') {
                        pos += 1;
                    }
                }
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                _ => break,
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(u8::is_ascii_digit) {
            pos += 1;
        }
        *field = std::str::from_utf8(&bytes[start..pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| corrupt("malformed header".into()))?;
    }
    if !bytes.get(pos).is_some_and(u8::is_ascii_whitespace) {
        return Err(corrupt("malformed header".into()));
    }
    pos += 1;
    let [width, height, maxval] = fields;
    if maxval != 255 {
        return Err(unsupported(&format!("maxval {maxval}, only 255 is supported")));
    }
    if width == 0 || height == 0 {
        return Err(corrupt(format!("empty image {width}x{height}")));
    }
    let raster = &bytes[pos..];
    let expected = width * height * 3;
    if raster.len() != expected {
        return Err(corrupt(format!(
            "{width}x{height} needs {expected} raster bytes, found {}",
            raster.len()
        )));
    }
    let pixels = raster.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect();
    Image::new(width, height, pixels)
}

pub fn encode_ppm(image: &Image) -> Vec<u8> {
    let mut out = format!("P6\n{} {}\n255\n", image.width, image.height).into_bytes();
    out.extend(image.pixels.iter().flatten());
    out
}

pub fn write_ppm(image: &Image, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_ppm(image)).map_err(|e| Error::io(path, e))
}

/// Binary P5 grayscale.
pub fn encode_pgm(width: usize, height: usize, gray: &[u8]) -> Vec<u8> {
    assert_eq!(gray.len(), width * height);
    let mut out = format!("P5\n{width} {height}\n255\n").into_bytes();
    out.extend_from_slice(gray);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_red_pixel() {
        let img = decode_ppm(b"P6\n1 1\n255\n\xff\x00\x00").unwrap();
        assert_eq!((img.width(), img.height()), (1, 1));
        assert_eq!(img.pixels(), &[[255, 0, 0]]);
    }

    #[test]
    fn sixteen_bit_is_unsupported() {
        let res = decode_ppm(b"P6\n1 1\n65535\n\x00\x00\x00\x00\x00\x00");
        assert!(matches!(res, Err(Error::UnsupportedFormat { .. })));
        assert!(matches!(decode_ppm(b"P3\n1 1\n255\n0 0 0"), Err(Error::UnsupportedFormat { .. })));
    }

    #[test]
    fn short_raster_is_corrupt() {
        let mut bytes = b"P6\n2 2\n255\n".to_vec();
        bytes.extend([7u8; 9]);
        assert!(matches!(decode_ppm(&bytes), Err(Error::CorruptFile { .. })));
    }

    #[test]
    fn comments_and_round_trip() {
        let img = decode_ppm(b"P6 # comment\n2 # w\n1\n255\n\x01\x02\x03\x04\x05\x06").unwrap();
        assert_eq!(img.pixels(), &[[1, 2, 3], [4, 5, 6]]);
        assert_eq!(decode_ppm(&encode_ppm(&img)).unwrap(), img);
    }

    #[test]
    fn decode_error_names_the_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("bad.ppm");
        fs::write(&p, b"P6\n4 4\n255\n\x00").unwrap();
        let msg = decode_image(&p).unwrap_err().to_string();
        assert!(msg.contains("bad.ppm"), "{msg}");
    }
}
