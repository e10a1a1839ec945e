//! Binary PGM (P5) and PPM (P6) with maxval 255.
//! https://netpbm.sourceforge.net/doc/ppm.html

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::image::Image;

const WHAT: &str = "netpbm image";

pub fn decode(bytes: &[u8]) -> Result<Image> {
    let mut cursor = Header { bytes, pos: 0 };
    let magic = cursor.token()?;
    let channels = match magic {
        b"P5" => 1,
        b"P6" => 3,
        other => {
            return Err(Error::malformed(
                WHAT,
                format!(
                    "unsupported format token {:?}, expected P5 or P6",
                    String::from_utf8_lossy(other)
                ),
            ))
        }
    };
    let width = cursor.number("width")?;
    let height = cursor.number("height")?;
    let maxval = cursor.number("maxval")?;
    if maxval != 255 {
        return Err(Error::malformed(WHAT, format!("maxval {maxval} is not 255")));
    }
    if width == 0 || height == 0 {
        return Err(Error::malformed(WHAT, format!("empty raster {width}x{height}")));
    }
    // exactly one whitespace byte separates the header from the raster
    match cursor.bytes.get(cursor.pos) {
        Some(b) if b.is_ascii_whitespace() => cursor.pos += 1,
        _ => return Err(Error::malformed(WHAT, "missing whitespace before raster")),
    }
    let needed = width
        .checked_mul(height)
        .and_then(|n| n.checked_mul(channels))
        .ok_or(Error::Overflow("netpbm raster size"))?;
    let raster = &bytes[cursor.pos..];
    if raster.len() < needed {
        return Err(Error::Truncated {
            what: WHAT,
            needed,
            available: raster.len(),
        });
    }
    if raster.len() > needed {
        return Err(Error::TrailingBytes {
            what: WHAT,
            count: raster.len() - needed,
        });
    }
    let data = raster.iter().map(|&v| f64::from(v) / 255.0).collect();
    Image::new(height, width, channels, data)
}

/// P5 for single-channel images, P6 for RGB. Values are clamped to [0, 1]
/// and rounded half-up to 8 bits.
pub fn encode(image: &Image) -> Vec<u8> {
    let token = if image.channels() == 1 { "P5" } else { "P6" };
    let mut out = format!("{token}\n{} {}\n255\n", image.width(), image.height()).into_bytes();
    out.extend(image.data().iter().map(|&v| quantize(v)));
    out
}

pub fn quantize(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0 + 0.5).floor() as u8
}

pub fn read_image(path: impl AsRef<Path>) -> Result<Image> {
    decode(&fs::read(path)?)
}

pub fn write_image(image: &Image, path: impl AsRef<Path>) -> Result<()> {
    let mut file = fs::File::create(path)?;
    file.write_all(&encode(image))?;
    Ok(())
}

pub fn read_pgm(path: impl AsRef<Path>) -> Result<Image> {
    let image = read_image(path)?;
    if image.channels() != 1 {
        return Err(Error::malformed(WHAT, "expected a P5 graymap"));
    }
    Ok(image)
}

pub fn read_ppm(path: impl AsRef<Path>) -> Result<Image> {
    let image = read_image(path)?;
    if image.channels() != 3 {
        return Err(Error::malformed(WHAT, "expected a P6 pixmap"));
    }
    Ok(image)
}

pub fn write_pgm(image: &Image, path: impl AsRef<Path>) -> Result<()> {
    if image.channels() != 1 {
        return Err(Error::ShapeMismatch("PGM output needs a 1-channel image".into()));
    }
    write_image(image, path)
}

pub fn write_ppm(image: &Image, path: impl AsRef<Path>) -> Result<()> {
    if image.channels() != 3 {
        return Err(Error::ShapeMismatch("PPM output needs a 3-channel image".into()));
    }
    write_image(image, path)
}

struct Header<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Header<'a> {
    fn skip_space_and_comments(&mut self) {
        while let Some(&b) = self.bytes.get(self.pos) {
            if b == b'#' {
                while let Some(&c) = self.bytes.get(self.pos) {
                    self.pos += 1;
                    if c == b'\n' || c == b'\r' {
                        break;
                    }
                }
            } else if b.is_ascii_whitespace() {
                self.pos += 1;
            } else {
                break;
            }
        }
    }

    fn token(&mut self) -> Result<&'a [u8]> {
        self.skip_space_and_comments();
        let start = self.pos;
        while let Some(&b) = self.bytes.get(self.pos) {
            if b.is_ascii_whitespace() || b == b'#' {
                break;
            }
            self.pos += 1;
        }
        if start == self.pos {
            return Err(Error::Truncated {
                what: "netpbm header",
                needed: start + 1,
                available: self.bytes.len(),
            });
        }
        Ok(&self.bytes[start..self.pos])
    }

    fn number(&mut self, field: &str) -> Result<usize> {
        let token = self.token()?;
        std::str::from_utf8(token)
            .ok()
            .filter(|s| s.bytes().all(|b| b.is_ascii_digit()))
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| {
                Error::malformed(
                    WHAT,
                    format!("bad {field} {:?}", String::from_utf8_lossy(token)),
                )
            })
    }
}
