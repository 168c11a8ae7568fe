//! Binary PPM (P6) and PGM (P5) images.

use std::path::Path;

use crate::error::{Error, Result};
use crate::freqmask::{BitMask2D, HighFreqMap};
use crate::tensor::Tensor;

struct Header {
    magic: [u8; 2],
    width: usize,
    height: usize,
    maxval: usize,
}

fn skip_space_and_comments(bytes: &[u8], mut i: usize) -> usize {
    loop {
        while i < bytes.len() && bytes[i].is_ascii_whitespace() {
            i += 1;
        }
        if i < bytes.len() && bytes[i] == b'#' {
            while i < bytes.len() && bytes[i] != b'\n' {
                i += 1;
            }
        } else {
            return i;
        }
    }
}

fn parse_number(bytes: &[u8], i: &mut usize, what: &str) -> Result<usize> {
    *i = skip_space_and_comments(bytes, *i);
    let start = *i;
    while *i < bytes.len() && bytes[*i].is_ascii_digit() {
        *i += 1;
    }
    if start == *i {
        return Err(Error::format(format!("missing {what} in header")));
    }
    std::str::from_utf8(&bytes[start..*i])
        .expect("ascii digits")
        .parse()
        .map_err(|_| Error::format(format!("{what} out of range")))
}

fn parse_header(bytes: &[u8]) -> Result<(Header, usize)> {
    if bytes.len() < 2 || bytes[0] != b'P' || !matches!(bytes[1], b'5' | b'6') {
        return Err(Error::format("not a binary PPM (P6) or PGM (P5) file"));
    }
    let mut i = 2;
    let width = parse_number(bytes, &mut i, "width")?;
    let height = parse_number(bytes, &mut i, "height")?;
    let maxval = parse_number(bytes, &mut i, "maxval")?;
    if width == 0 || height == 0 {
        return Err(Error::format("image dimensions must be positive"));
    }
    if !(1..=255).contains(&maxval) {
        return Err(Error::format(format!("unsupported maxval {maxval}")));
    }
    if i >= bytes.len() || !bytes[i].is_ascii_whitespace() {
        return Err(Error::format("header must end with a single whitespace byte"));
    }
    Ok((
        Header {
            magic: [bytes[0], bytes[1]],
            width,
            height,
            maxval,
        },
        i + 1,
    ))
}

/// Decodes P6 to three channels and P5 to three identical channels, scaled
/// to `[0, 1]`.
pub fn decode(bytes: &[u8]) -> Result<Tensor> {
    let (gray, h, w) = decode_raw(bytes)?;
    match gray {
        Raw::Rgb(t) => Ok(t),
        Raw::Gray(plane) => {
            let mut data = Vec::with_capacity(3 * plane.len());
            for _ in 0..3 {
                data.extend_from_slice(&plane);
            }
            Tensor::new(3, h, w, data)
        }
    }
}

enum Raw {
    Rgb(Tensor),
    Gray(Vec<f32>),
}

fn decode_raw(bytes: &[u8]) -> Result<(Raw, usize, usize)> {
    let (hd, start) = parse_header(bytes)?;
    let channels = if hd.magic[1] == b'6' { 3 } else { 1 };
    let n = hd.width * hd.height * channels;
    let payload = &bytes[start..];
    if payload.len() < n {
        return Err(Error::format(format!(
            "truncated payload: {} of {n} bytes",
            payload.len()
        )));
    }
    let scale = hd.maxval as f32;
    let plane = hd.width * hd.height;
    if channels == 1 {
        let values = payload[..n].iter().map(|&b| (b as f32 / scale).min(1.0)).collect();
        return Ok((Raw::Gray(values), hd.height, hd.width));
    }
    let mut data = vec![0.0f32; n];
    for (p, px) in payload[..n].chunks_exact(3).enumerate() {
        for c in 0..3 {
            data[c * plane + p] = (px[c] as f32 / scale).min(1.0);
        }
    }
    Ok((
        Raw::Rgb(Tensor::new(3, hd.height, hd.width, data)?),
        hd.height,
        hd.width,
    ))
}

fn quantize(v: f32) -> u8 {
    // f32::round is half away from zero
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Three channels encode as P6, one channel as P5.
pub fn encode(t: &Tensor) -> Result<Vec<u8>> {
    let (c, h, w) = t.shape();
    let magic = match c {
        3 => "P6",
        1 => "P5",
        _ => return Err(Error::format(format!("cannot encode {c} channels"))),
    };
    let mut out = format!("{magic}\n{w} {h}\n255\n").into_bytes();
    let plane = h * w;
    out.reserve(c * plane);
    for p in 0..plane {
        for ch in 0..c {
            out.push(quantize(t.data()[ch * plane + p]));
        }
    }
    Ok(out)
}

pub fn load_image(path: impl AsRef<Path>) -> Result<Tensor> {
    decode(&std::fs::read(path)?)
}

pub fn save_image(t: &Tensor, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, encode(t)?)?;
    Ok(())
}

/// Mask as P5 with 0 / 255.
pub fn encode_mask(m: &BitMask2D) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", m.width(), m.height()).into_bytes();
    out.extend(m.bits().iter().map(|&b| if b { 255u8 } else { 0 }));
    out
}

/// Any P5/P6 image; a pixel is set when its first channel exceeds half scale.
pub fn decode_mask(bytes: &[u8]) -> Result<BitMask2D> {
    let (raw, h, w) = decode_raw(bytes)?;
    let bits = match raw {
        Raw::Gray(v) => v.iter().map(|&x| x > 0.5).collect(),
        Raw::Rgb(t) => t.plane(0).iter().map(|&x| x > 0.5).collect(),
    };
    BitMask2D::new(h, w, bits)
}

pub fn save_mask(m: &BitMask2D, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, encode_mask(m))?;
    Ok(())
}

pub fn load_mask(path: impl AsRef<Path>) -> Result<BitMask2D> {
    decode_mask(&std::fs::read(path)?)
}

/// High-frequency map as an 8-bit P5.
pub fn save_hfmap(h: &HighFreqMap, path: impl AsRef<Path>) -> Result<()> {
    let t = Tensor::new(1, h.height(), h.width(), h.values().to_vec())?;
    save_image(&t, path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn white_pixel() {
        let t = decode(b"P6\n1 1\n255\n\xff\xff\xff").unwrap();
        assert_eq!(t.data(), &[1.0, 1.0, 1.0]);
    }

    #[test]
    fn gray_promotes_to_three_channels() {
        let t = decode(b"P5 2 1 255 \x00\xff").unwrap();
        assert_eq!(t.shape(), (3, 1, 2));
        assert_eq!(t.data(), &[0.0, 1.0, 0.0, 1.0, 0.0, 1.0]);
    }

    #[test]
    fn comments_and_maxval() {
        let t = decode(b"P5\n# a comment\n1 # inline\n1\n15\n\x0f").unwrap();
        assert_eq!(t.data()[0], 1.0);
    }

    #[test]
    fn malformed_inputs() {
        for bytes in [
            &b"P3\n1 1\n255\n"[..],
            b"P6\n1 1\n",
            b"P6\n1 1\n65535\n\0\0\0\0\0\0",
            b"P6\n2 2\n255\n\0\0\0",
            b"P6\n0 1\n255\n",
            b"P6\nx 1\n255\n",
            b"",
        ] {
            assert!(matches!(decode(bytes), Err(Error::Format(_))), "{bytes:?}");
        }
    }

    #[test]
    fn quantization_rounds_half_away() {
        assert_eq!(quantize(0.5 / 255.0), 1);
        assert_eq!(quantize(-0.3), 0);
        assert_eq!(quantize(1.7), 255);
    }

    #[test]
    fn mask_roundtrip() {
        let m = BitMask2D::from_fn(3, 5, |y, x| (x + y) % 2 == 0);
        assert_eq!(decode_mask(&encode_mask(&m)).unwrap(), m);
    }

    proptest! {
        #[test]
        fn save_load_within_half_step(
            (h, w, c, vals) in (1usize..6, 1usize..6, prop::sample::select(vec![1usize, 3]))
                .prop_flat_map(|(h, w, c)| (Just(h), Just(w), Just(c), prop::collection::vec(0.0f32..=1.0, h * w * c)))
        ) {
            let t = Tensor::new(c, h, w, vals).unwrap();
            let back = decode(&encode(&t).unwrap()).unwrap();
            for ch in 0..3 {
                for y in 0..h {
                    for x in 0..w {
                        let src = t.at(if c == 1 { 0 } else { ch }, y, x);
                        prop_assert!((back.at(ch, y, x) - src).abs() <= 1.0 / 510.0 + 1e-7);
                    }
                }
            }
        }
    }
}
