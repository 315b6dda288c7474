//! Binary PGM/PPM (P5/P6, maxval 255) images shaped `[C, H, W]`, C in {1, 3}.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

/// Round-half-up quantization of `[0, 1]` to a byte; out-of-range values clamp.
pub fn quantize(v: f64) -> u8 {
    (v * 255.0 + 0.5).floor().clamp(0.0, 255.0) as u8
}

pub fn encode_ppm<T: Scalar>(image: &Tensor<T>) -> Result<Vec<u8>> {
    let [c, h, w] = image.shape() else {
        return Err(Error::invalid(format!("ppm: expected [C, H, W], got {:?}", image.shape())));
    };
    let (c, h, w) = (*c, *h, *w);
    let magic = match c {
        1 => "P5",
        3 => "P6",
        _ => return Err(Error::invalid(format!("ppm: 1 or 3 channels, got {c}"))),
    };
    let mut out = format!("{magic}\n{w} {h}\n255\n").into_bytes();
    let d = image.data();
    for y in 0..h {
        for x in 0..w {
            for ch in 0..c {
                out.push(quantize(d[(ch * h + y) * w + x].as_f64()));
            }
        }
    }
    Ok(out)
}

fn bad(offset: usize, msg: impl Into<String>) -> Error {
    Error::Format { what: "PPM", offset, msg: msg.into() }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Cursor<'_> {
    fn skip_space(&mut self) {
        while let Some(&b) = self.bytes.get(self.pos) {
            if b == b'#' {
                while self.bytes.get(self.pos).is_some_and(|&b| b != b'\n') {
                    self.pos += 1;
                }
            } else if b.is_ascii_whitespace() {
                self.pos += 1;
            } else {
                break;
            }
        }
    }

    fn number(&mut self) -> Result<usize> {
        self.skip_space();
        let start = self.pos;
        while self.bytes.get(self.pos).is_some_and(u8::is_ascii_digit) {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(bad(start, "expected a decimal number"));
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .unwrap()
            .parse()
            .map_err(|_| bad(start, "number out of range"))
    }
}

pub fn decode_ppm(bytes: &[u8]) -> Result<Tensor<f32>> {
    let c = match bytes.get(..2) {
        Some(b"P5") => 1,
        Some(b"P6") => 3,
        _ => return Err(bad(0, "expected P5 or P6 magic")),
    };
    let mut cur = Cursor { bytes, pos: 2 };
    let w = cur.number()?;
    let h = cur.number()?;
    cur.skip_space();
    let at = cur.pos;
    let maxval = cur.number()?;
    if maxval != 255 {
        return Err(bad(at, format!("unsupported maxval {maxval}")));
    }
    if w == 0 || h == 0 {
        return Err(bad(at, "zero image extent"));
    }
    match bytes.get(cur.pos) {
        Some(b) if b.is_ascii_whitespace() => cur.pos += 1,
        _ => return Err(bad(cur.pos, "expected whitespace after maxval")),
    }
    let need = c * h * w;
    let pixels = &bytes[cur.pos..];
    if pixels.len() != need {
        return Err(bad(
            cur.pos + pixels.len().min(need),
            format!("expected {need} pixel bytes, found {}", pixels.len()),
        ));
    }
    let mut data = vec![0f32; need];
    for y in 0..h {
        for x in 0..w {
            for ch in 0..c {
                data[(ch * h + y) * w + x] = pixels[(y * w + x) * c + ch] as f32 / 255.0;
            }
        }
    }
    Tensor::new(vec![c, h, w], data)
}

pub fn save_ppm<T: Scalar>(image: &Tensor<T>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_ppm(image)?).map_err(|e| Error::io(path, e))
}

pub fn load_ppm(path: impl AsRef<Path>) -> Result<Tensor<f32>> {
    let path = path.as_ref();
    decode_ppm(&fs::read(path).map_err(|e| Error::io(path, e))?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gray_image_bytes() {
        let b = encode_ppm(&Tensor::<f32>::zeros(&[1, 2, 2])).unwrap();
        let mut want = b"P5\n2 2\n255\n".to_vec();
        want.extend([0u8; 4]);
        assert_eq!(b, want);
    }

    #[test]
    fn half_rounds_up() {
        assert_eq!(quantize(0.5), 128);
        assert_eq!(quantize(1.0), 255);
        assert_eq!(quantize(-0.2), 0);
    }

    #[test]
    fn rgb_interleaving_roundtrip() {
        let img = Tensor::<f32>::from_f64(&[3, 1, 2], &[1.0, 0.0, 0.0, 1.0, 0.2, 0.6]).unwrap();
        let b = encode_ppm(&img).unwrap();
        assert_eq!(&b[b.len() - 6..], &[255, 0, 51, 0, 255, 153]);
        let back = decode_ppm(&b).unwrap();
        assert_eq!(back.shape(), &[3, 1, 2]);
        assert_eq!(encode_ppm(&back).unwrap(), b);
    }

    #[test]
    fn comments_and_errors() {
        let back = decode_ppm(b"P5 # c\n1 1\n255\n\x80").unwrap();
        assert_eq!(back.data(), &[128.0 / 255.0]);
        assert!(matches!(decode_ppm(b"P3\n1 1\n255\n"), Err(Error::Format { offset: 0, .. })));
        assert!(matches!(decode_ppm(b"P5\n2 1\n255\n\x00"), Err(Error::Format { offset: 12, .. })));
        assert!(matches!(decode_ppm(b"P5\n1 1\n65535\n\x00\x00"), Err(Error::Format { offset: 7, .. })));
    }
}
