//! File formats: PNG and binary PPM/PGM images, 16-bit mono WAV audio and
//! the `LFTV` raw voxel format.

use std::fs;
use std::io::Cursor;
use std::path::Path;

use ndgrad::Tensor;

use super::grid::SignalGrid;
use crate::error::{LiftError, Result};

const VOLUME_MAGIC: &[u8; 4] = b"LFTV";

pub(crate) fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    if !path.exists() {
        return Err(LiftError::MissingInput(path.to_path_buf()));
    }
    Ok(fs::read(path)?)
}

fn name(path: &Path) -> String {
    path.display().to_string()
}

/// Loads an 8- or 16-bit PNG, or a binary PPM (`P6`) / PGM (`P5`), as an
/// RGB grid with values in `[0, 1]`. Gray images are copied to all three
/// channels and alpha is dropped.
pub fn load_image(path: &Path) -> Result<SignalGrid> {
    let bytes = read_bytes(path)?;
    decode_image(&bytes, &name(path))
}

pub fn decode_image(bytes: &[u8], source: &str) -> Result<SignalGrid> {
    if bytes.starts_with(b"\x89PNG") {
        decode_png(bytes, source)
    } else if bytes.starts_with(b"P5") || bytes.starts_with(b"P6") {
        decode_pnm(bytes, source)
    } else {
        Err(LiftError::parse(source, 0, "not a PNG, PPM (P6) or PGM (P5) file"))
    }
}

fn decode_png(bytes: &[u8], source: &str) -> Result<SignalGrid> {
    let mut cursor = Cursor::new(bytes);
    let decoded = {
        let mut decoder = png::Decoder::new(&mut cursor);
        decoder.set_transformations(png::Transformations::EXPAND);
        decoder.read_info().and_then(|mut reader| {
            let mut buf = vec![0; reader.output_buffer_size()];
            let info = reader.next_frame(&mut buf)?;
            buf.truncate(info.buffer_size());
            Ok((info, buf))
        })
    };
    let (info, buf) = decoded.map_err(|e| LiftError::parse(source, cursor.position(), e.to_string()))?;
    let (w, h) = (info.width as usize, info.height as usize);
    let colors = info.color_type.samples();
    let wide = info.bit_depth == png::BitDepth::Sixteen;
    let sample = |i: usize| -> f64 {
        if wide {
            u16::from_be_bytes([buf[2 * i], buf[2 * i + 1]]) as f64 / 65535.0
        } else {
            buf[i] as f64 / 255.0
        }
    };
    let gray = colors < 3;
    let values = Tensor::from_fn(&[h, w, 3], |i| {
        let (p, c) = (i / 3, i % 3);
        sample(p * colors + if gray { 0 } else { c })
    });
    SignalGrid::new(values, source)
}

fn decode_pnm(bytes: &[u8], source: &str) -> Result<SignalGrid> {
    let color = bytes[1] == b'6';
    let mut pos = 2;
    let mut fields = [0usize; 3];
    for field in fields.iter_mut() {
        // Whitespace and `#` comments separate header fields.
        loop {
            match bytes.get(pos) {
                Some(b'#') => {
                    while !matches!(bytes.get(pos), Some(b'\n') | None) {
                        pos += 1;
                    }
                }
                Some(c) if c.is_ascii_whitespace() => pos += 1,
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
            .filter(|&v| v > 0)
            .ok_or_else(|| LiftError::parse(source, start as u64, "expected a positive header integer"))?;
    }
    if !bytes.get(pos).is_some_and(u8::is_ascii_whitespace) {
        return Err(LiftError::parse(source, pos as u64, "missing whitespace after header"));
    }
    pos += 1;
    let [w, h, maxval] = fields;
    if maxval > 65535 {
        return Err(LiftError::parse(source, pos as u64, format!("maxval {maxval} exceeds 65535")));
    }
    let bps = if maxval < 256 { 1 } else { 2 };
    let colors = if color { 3 } else { 1 };
    let need = w * h * colors * bps;
    let payload = &bytes[pos..];
    if payload.len() < need {
        return Err(LiftError::parse(
            source,
            bytes.len() as u64,
            format!("pixel data truncated: {} of {need} bytes", payload.len()),
        ));
    }
    let sample = |i: usize| -> f64 {
        let raw = if bps == 1 {
            payload[i] as f64
        } else {
            u16::from_be_bytes([payload[2 * i], payload[2 * i + 1]]) as f64
        };
        raw / maxval as f64
    };
    let values = Tensor::from_fn(&[h, w, 3], |i| {
        let (p, c) = (i / 3, i % 3);
        sample(if color { p * 3 + c } else { p })
    });
    SignalGrid::new(values, source)
}

fn quantize(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Writes a 2-D grid with 1 or 3 channels as an 8-bit gray or RGB PNG.
/// Values are clamped to `[0, 1]`.
pub fn save_image(grid: &SignalGrid, path: &Path) -> Result<()> {
    let bytes = encode_png(grid)?;
    Ok(fs::write(path, bytes)?)
}

pub fn encode_png(grid: &SignalGrid) -> Result<Vec<u8>> {
    if grid.dims() != 2 || !matches!(grid.channels(), 1 | 3) {
        return Err(LiftError::Unsupported(format!(
            "PNG output needs a 2-D grid with 1 or 3 channels, got {:?}",
            grid.values.shape()
        )));
    }
    let (h, w) = (grid.spatial()[0], grid.spatial()[1]);
    let color = if grid.channels() == 3 {
        png::ColorType::Rgb
    } else {
        png::ColorType::Grayscale
    };
    let pixels: Vec<u8> = grid.values.data().iter().map(|&v| quantize(v)).collect();
    encode_png_raw(w as u32, h as u32, color, &pixels)
}

pub(crate) fn encode_png_raw(w: u32, h: u32, color: png::ColorType, pixels: &[u8]) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    {
        let mut enc = png::Encoder::new(&mut out, w, h);
        enc.set_color(color);
        enc.set_depth(png::BitDepth::Eight);
        let mut writer = enc
            .write_header()
            .map_err(|e| LiftError::Io(std::io::Error::other(e)))?;
        writer
            .write_image_data(pixels)
            .map_err(|e| LiftError::Io(std::io::Error::other(e)))?;
    }
    Ok(out)
}

/// Loads 16-bit PCM mono WAV as an `[N, 1]` grid in `[-1, 1]` together
/// with its sample rate.
pub fn load_audio_with_rate(path: &Path) -> Result<(SignalGrid, u32)> {
    let bytes = read_bytes(path)?;
    let source = name(path);
    let mut cursor = Cursor::new(&bytes[..]);
    let parsed = hound::WavReader::new(&mut cursor).and_then(|reader| {
        let spec = reader.spec();
        let samples = reader.into_samples::<i16>().collect::<std::result::Result<Vec<_>, _>>()?;
        Ok((spec, samples))
    });
    let (spec, samples) = parsed.map_err(|e| LiftError::parse(&source, cursor.position(), e.to_string()))?;
    if spec.channels != 1 || spec.bits_per_sample != 16 || spec.sample_format != hound::SampleFormat::Int {
        return Err(LiftError::parse(
            &source,
            0,
            format!(
                "need 16-bit integer mono audio, found {} channel(s) of {}-bit {:?}",
                spec.channels, spec.bits_per_sample, spec.sample_format
            ),
        ));
    }
    if samples.is_empty() {
        return Err(LiftError::parse(&source, bytes.len() as u64, "no audio samples"));
    }
    let n = samples.len();
    let values = Tensor::new(&[n, 1], samples.iter().map(|&s| s as f64 / 32768.0).collect())?;
    Ok((SignalGrid::new(values, source)?, spec.sample_rate))
}

pub fn load_audio(path: &Path) -> Result<SignalGrid> {
    Ok(load_audio_with_rate(path)?.0)
}

/// Writes a `[N, 1]` grid as 16-bit PCM mono WAV, clamping to `[-1, 1]`.
pub fn save_audio(grid: &SignalGrid, path: &Path, sample_rate: u32) -> Result<()> {
    if grid.dims() != 1 || grid.channels() != 1 {
        return Err(LiftError::Unsupported(format!(
            "WAV output needs a [N, 1] grid, got {:?}",
            grid.values.shape()
        )));
    }
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let io = |e: hound::Error| LiftError::Io(std::io::Error::other(e));
    let mut w = hound::WavWriter::create(path, spec).map_err(io)?;
    for &v in grid.values.data() {
        w.write_sample((v.clamp(-1.0, 1.0) * 32767.0).round() as i16).map_err(io)?;
    }
    w.finalize().map_err(io)
}

/// Loads an `LFTV` volume: magic, three little-endian `u32` extents, then
/// one `u8` per voxel in row-major order. Values map to `[0, 1]`.
pub fn load_volume(path: &Path) -> Result<SignalGrid> {
    let bytes = read_bytes(path)?;
    decode_volume(&bytes, &name(path))
}

pub fn decode_volume(bytes: &[u8], source: &str) -> Result<SignalGrid> {
    if bytes.len() < 4 || &bytes[..4] != VOLUME_MAGIC {
        return Err(LiftError::parse(source, 0, "missing LFTV magic"));
    }
    if bytes.len() < 16 {
        return Err(LiftError::parse(source, bytes.len() as u64, "header truncated"));
    }
    let dims: Vec<usize> = (0..3)
        .map(|k| u32::from_le_bytes(bytes[4 + 4 * k..8 + 4 * k].try_into().expect("4 bytes")) as usize)
        .collect();
    if let Some(k) = dims.iter().position(|&d| d == 0) {
        return Err(LiftError::parse(source, 4 + 4 * k as u64, "zero volume extent"));
    }
    let n: usize = dims.iter().product();
    let payload = &bytes[16..];
    if payload.len() != n {
        return Err(LiftError::parse(
            source,
            16 + payload.len().min(n) as u64,
            format!("expected {n} voxels, found {}", payload.len()),
        ));
    }
    let values = Tensor::new(
        &[dims[0], dims[1], dims[2], 1],
        payload.iter().map(|&b| b as f64 / 255.0).collect(),
    )?;
    SignalGrid::new(values, source)
}

pub fn encode_volume(grid: &SignalGrid) -> Result<Vec<u8>> {
    if grid.dims() != 3 || grid.channels() != 1 {
        return Err(LiftError::Unsupported(format!(
            "volume output needs a [X, Y, Z, 1] grid, got {:?}",
            grid.values.shape()
        )));
    }
    let mut out = VOLUME_MAGIC.to_vec();
    for &d in grid.spatial() {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    out.extend(grid.values.data().iter().map(|&v| quantize(v)));
    Ok(out)
}

pub fn save_volume(grid: &SignalGrid, path: &Path) -> Result<()> {
    Ok(fs::write(path, encode_volume(grid)?)?)
}

/// Loads any supported signal, choosing the format by content.
pub fn load_signal(path: &Path) -> Result<SignalGrid> {
    let bytes = read_bytes(path)?;
    if bytes.starts_with(b"RIFF") {
        load_audio(path)
    } else if bytes.starts_with(VOLUME_MAGIC) {
        decode_volume(&bytes, &name(path))
    } else {
        decode_image(&bytes, &name(path))
    }
}

/// Writes a signal in the format matching its dimensionality: PNG for
/// images, WAV for audio and `LFTV` for volumes.
pub fn save_signal(grid: &SignalGrid, path: &Path, sample_rate: u32) -> Result<()> {
    match grid.dims() {
        1 => save_audio(grid, path, sample_rate),
        2 => save_image(grid, path),
        _ => save_volume(grid, path),
    }
}
