//! PNG and binary PPM (P6) reading and writing.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::Image;
use crate::{Error, Result};

/// Loads an image, choosing the decoder from the file's magic bytes.
pub fn load_image(path: impl AsRef<Path>) -> Result<Image> {
    let bytes = std::fs::read(path.as_ref())?;
    if bytes.starts_with(b"P6") {
        decode_ppm(&bytes)
    } else {
        decode_png(&bytes)
    }
}

pub fn decode_png(bytes: &[u8]) -> Result<Image> {
    let mut decoder = png::Decoder::new(std::io::Cursor::new(bytes));
    decoder.set_transformations(png::Transformations::EXPAND | png::Transformations::STRIP_16);
    let mut reader = decoder.read_info().map_err(|e| Error::format("PNG", e.to_string()))?;
    let size = reader
        .output_buffer_size()
        .ok_or_else(|| Error::format("PNG", "image too large"))?;
    let mut buf = vec![0u8; size];
    let info = reader.next_frame(&mut buf).map_err(|e| Error::format("PNG", e.to_string()))?;
    let (w, h) = (info.width as usize, info.height as usize);
    let src_depth = match info.color_type {
        png::ColorType::Grayscale => 1,
        png::ColorType::GrayscaleAlpha => 2,
        png::ColorType::Rgb => 3,
        png::ColorType::Rgba => 4,
        png::ColorType::Indexed => return Err(Error::format("PNG", "unexpanded palette")),
    };
    let mut data = Vec::with_capacity(w * h * 3);
    for px in buf[..w * h * src_depth].chunks_exact(src_depth) {
        let rgb = if src_depth < 3 { [px[0]; 3] } else { [px[0], px[1], px[2]] };
        data.extend(rgb.iter().map(|v| *v as f32 / 255.0));
    }
    Image::from_data(w, h, 3, data)
}

fn to_u8(v: f32) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

pub fn save_png(img: &Image, path: impl AsRef<Path>) -> Result<()> {
    let color = match img.depth() {
        1 => png::ColorType::Grayscale,
        3 => png::ColorType::Rgb,
        d => return Err(Error::invalid(format!("cannot write a {d}-channel PNG"))),
    };
    let file = BufWriter::new(File::create(path)?);
    let mut enc = png::Encoder::new(file, img.width() as u32, img.height() as u32);
    enc.set_color(color);
    enc.set_depth(png::BitDepth::Eight);
    let mut writer = enc.write_header().map_err(|e| Error::format("PNG", e.to_string()))?;
    let bytes: Vec<u8> = img.data().iter().map(|v| to_u8(*v)).collect();
    writer
        .write_image_data(&bytes)
        .map_err(|e| Error::format("PNG", e.to_string()))?;
    Ok(())
}

pub fn decode_ppm(bytes: &[u8]) -> Result<Image> {
    let mut pos = 0usize;
    let mut fields = Vec::with_capacity(4);
    while fields.len() < 4 {
        while pos < bytes.len() && (bytes[pos].is_ascii_whitespace() || bytes[pos] == b'#') {
            if bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
            } else {
                pos += 1;
            }
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(Error::format("PPM", "truncated header"));
        }
        fields.push(String::from_utf8_lossy(&bytes[start..pos]).into_owned());
    }
    // exactly one whitespace byte separates the header from the raster
    pos += 1;
    if fields[0] != "P6" {
        return Err(Error::format("PPM", format!("unsupported magic {}", fields[0])));
    }
    let parse = |s: &str| s.parse::<usize>().map_err(|_| Error::format("PPM", format!("bad number {s}")));
    let (w, h, maxval) = (parse(&fields[1])?, parse(&fields[2])?, parse(&fields[3])?);
    if maxval == 0 || maxval > 65535 {
        return Err(Error::format("PPM", format!("bad maxval {maxval}")));
    }
    let bps = if maxval < 256 { 1 } else { 2 };
    let need = w * h * 3 * bps;
    let raster = bytes
        .get(pos..pos + need)
        .ok_or_else(|| Error::format("PPM", "truncated raster"))?;
    let data = if bps == 1 {
        raster.iter().map(|v| *v as f32 / maxval as f32).collect()
    } else {
        raster
            .chunks_exact(2)
            .map(|b| u16::from_be_bytes([b[0], b[1]]) as f32 / maxval as f32)
            .collect()
    };
    Image::from_data(w, h, 3, data)
}

pub fn save_ppm(img: &Image, path: impl AsRef<Path>) -> Result<()> {
    if img.depth() != 3 {
        return Err(Error::invalid("PPM output needs 3 channels"));
    }
    let mut out = BufWriter::new(File::create(path)?);
    write!(out, "P6\n{} {}\n255\n", img.width(), img.height())?;
    let bytes: Vec<u8> = img.data().iter().map(|v| to_u8(*v)).collect();
    out.write_all(&bytes)?;
    Ok(())
}

/// Reads a PPM from any reader (used by tests and stdin pipelines).
pub fn read_ppm(reader: impl Read) -> Result<Image> {
    let mut bytes = Vec::new();
    BufReader::new(reader).read_to_end(&mut bytes)?;
    decode_ppm(&bytes)
}
