//! Binary PPM (`P6`) images.

use std::fs;
use std::path::Path;

use crate::error::{Error, IoContext, Result};
use crate::tensor::Tensor;

/// Encode an `[H, W, 3]` image with values in `[0, 1]` as P6, maxval 255.
pub fn encode_ppm(image: &Tensor) -> Result<Vec<u8>> {
    let (h, w) = match *image.shape() {
        [h, w, 3] => (h, w),
        ref s => return Err(Error::Shape(format!("PPM needs [H, W, 3], got {s:?}"))),
    };
    let mut out = format!("P6\n{w} {h}\n255\n").into_bytes();
    out.reserve(h * w * 3);
    for &v in image.data() {
        if !(0.0..=1.0).contains(&v) {
            return Err(Error::Dataset(format!("pixel value {v} outside [0, 1]")));
        }
        out.push((v * 255.0).round() as u8);
    }
    Ok(out)
}

struct Cursor<'a> {
    bytes: &'a [u8],
    at: usize,
}

impl Cursor<'_> {
    fn err(&self, msg: impl Into<String>) -> Error {
        Error::Parse {
            offset: self.at,
            msg: msg.into(),
        }
    }

    /// Skip whitespace and `#` comments.
    fn skip_space(&mut self) {
        while let Some(&b) = self.bytes.get(self.at) {
            if b == b'#' {
                while self.bytes.get(self.at).is_some_and(|&c| c != b'\n') {
                    self.at += 1;
                }
            } else if b.is_ascii_whitespace() {
                self.at += 1;
            } else {
                break;
            }
        }
    }

    fn number(&mut self, what: &str) -> Result<usize> {
        self.skip_space();
        let start = self.at;
        while self.bytes.get(self.at).is_some_and(u8::is_ascii_digit) {
            self.at += 1;
        }
        if start == self.at {
            return Err(self.err(format!("expected {what}")));
        }
        std::str::from_utf8(&self.bytes[start..self.at])
            .expect("ascii digits")
            .parse()
            .map_err(|_| Error::Parse {
                offset: start,
                msg: format!("{what} out of range"),
            })
    }
}

/// Decode a P6 image into `[H, W, 3]` with values `v / maxval`.
pub fn decode_ppm(bytes: &[u8]) -> Result<Tensor> {
    let mut c = Cursor { bytes, at: 0 };
    if !bytes.starts_with(b"P6") {
        return Err(c.err("missing P6 magic"));
    }
    c.at = 2;
    let w = c.number("width")?;
    let h = c.number("height")?;
    let maxval = c.number("maxval")?;
    if w == 0 || h == 0 {
        return Err(c.err("zero image extent"));
    }
    if maxval == 0 || maxval > 255 {
        return Err(c.err(format!("unsupported maxval {maxval}")));
    }
    if !bytes.get(c.at).is_some_and(u8::is_ascii_whitespace) {
        return Err(c.err("expected whitespace after maxval"));
    }
    c.at += 1;
    let n = w * h * 3;
    let payload = &bytes[c.at..];
    if payload.len() < n {
        return Err(Error::Parse {
            offset: bytes.len(),
            msg: format!("truncated payload: {} of {n} bytes", payload.len()),
        });
    }
    let scale = maxval as f32;
    let data = payload[..n].iter().map(|&b| f32::from(b) / scale).collect();
    Tensor::new(&[h, w, 3], data)
}

pub fn save_ppm(image: &Tensor, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_ppm(image)?).at(path)
}

pub fn load_ppm(path: impl AsRef<Path>) -> Result<Tensor> {
    let path = path.as_ref();
    decode_ppm(&fs::read(path).at(path)?)
}
