//! File formats.
//!
//! * VOXG: `b"VOXG"`, version `u32 = 1`, then `H`, `W`, `D` as `u32`, then
//!   `H·W·D` `f32` values in `(n, m, l)` row-major order; all little-endian.
//! * Silhouettes: binary PGM (`P5`), maxval 255, `round(255·S)` per pixel.
//! * Loss history: CSV `iter,loss_total,loss_proj,loss_vol`.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::projector::Silhouette;
use crate::recon::LossRecord;
use crate::volume::{BinaryVolume, VoxelGrid};

pub const VOXG_MAGIC: &[u8; 4] = b"VOXG";
pub const VOXG_VERSION: u32 = 1;
const VOXG_HEADER_LEN: usize = 20;

pub fn encode_voxg(v: &VoxelGrid) -> Vec<u8> {
    let mut out = Vec::with_capacity(VOXG_HEADER_LEN + 4 * v.len());
    out.extend_from_slice(VOXG_MAGIC);
    out.extend_from_slice(&VOXG_VERSION.to_le_bytes());
    for d in v.dims() {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    for &x in v.data() {
        out.extend_from_slice(&(x as f32).to_le_bytes());
    }
    out
}

pub fn decode_voxg(bytes: &[u8]) -> Result<VoxelGrid> {
    if bytes.len() < VOXG_HEADER_LEN {
        return Err(Error::format("VOXG", "truncated header"));
    }
    if &bytes[..4] != VOXG_MAGIC {
        return Err(Error::format("VOXG", "bad magic"));
    }
    let word = |i: usize| u32::from_le_bytes(bytes[4 * i..4 * i + 4].try_into().unwrap());
    let version = word(1);
    if version != VOXG_VERSION {
        return Err(Error::format(
            "VOXG",
            format!("unsupported version {version}"),
        ));
    }
    let dims = [word(2) as usize, word(3) as usize, word(4) as usize];
    let count = dims
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| Error::format("VOXG", "dims overflow"))?;
    let payload = &bytes[VOXG_HEADER_LEN..];
    if payload.len() != count * 4 {
        return Err(Error::format(
            "VOXG",
            format!("{} payload bytes for dims {dims:?}", payload.len()),
        ));
    }
    let data = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
        .collect();
    VoxelGrid::new(dims, data)
}

pub fn write_voxg(path: &Path, v: &VoxelGrid) -> Result<()> {
    write_bytes(path, &encode_voxg(v))
}

pub fn write_binary_voxg(path: &Path, v: &BinaryVolume) -> Result<()> {
    write_voxg(path, &VoxelGrid::from(v))
}

pub fn read_voxg(path: &Path) -> Result<VoxelGrid> {
    decode_voxg(&read_bytes(path)?)
}

pub fn encode_pgm(s: &Silhouette) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", s.width(), s.height()).into_bytes();
    out.extend(
        s.data()
            .iter()
            .map(|&x| (255.0 * x).round().clamp(0.0, 255.0) as u8),
    );
    out
}

/// Reads a binary PGM with any maxval up to 255, scaling to `[0, 1]`.
/// Header comments are accepted.
pub fn decode_pgm(bytes: &[u8]) -> Result<Silhouette> {
    let mut pos = 0;
    let magic = next_token(bytes, &mut pos)?;
    if magic != b"P5" {
        return Err(Error::format("PGM", "expected P5 magic"));
    }
    let width = parse_header_number(next_token(bytes, &mut pos)?)?;
    let height = parse_header_number(next_token(bytes, &mut pos)?)?;
    let maxval = parse_header_number(next_token(bytes, &mut pos)?)?;
    if maxval == 0 || maxval > 255 {
        return Err(Error::format("PGM", format!("unsupported maxval {maxval}")));
    }
    // exactly one whitespace byte separates the header from the raster
    if pos >= bytes.len() || !bytes[pos].is_ascii_whitespace() {
        return Err(Error::format("PGM", "missing raster"));
    }
    pos += 1;
    let raster = &bytes[pos..];
    if raster.len() != width * height {
        return Err(Error::format(
            "PGM",
            format!("{} raster bytes for {width}x{height}", raster.len()),
        ));
    }
    let scale = maxval as f64;
    Silhouette::new(
        height,
        width,
        raster
            .iter()
            .map(|&b| (b as f64 / scale).min(1.0))
            .collect(),
    )
}

fn next_token<'a>(bytes: &'a [u8], pos: &mut usize) -> Result<&'a [u8]> {
    loop {
        while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
            *pos += 1;
        }
        if *pos < bytes.len() && bytes[*pos] == b'#' {
            while *pos < bytes.len() && bytes[*pos] != b'\n' {
                *pos += 1;
            }
            continue;
        }
        break;
    }
    let start = *pos;
    while *pos < bytes.len() && !bytes[*pos].is_ascii_whitespace() {
        *pos += 1;
    }
    if start == *pos {
        return Err(Error::format("PGM", "truncated header"));
    }
    Ok(&bytes[start..*pos])
}

fn parse_header_number(tok: &[u8]) -> Result<usize> {
    std::str::from_utf8(tok)
        .ok()
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| Error::format("PGM", "bad header number"))
}

pub fn write_pgm(path: &Path, s: &Silhouette) -> Result<()> {
    write_bytes(path, &encode_pgm(s))
}

pub fn read_pgm(path: &Path) -> Result<Silhouette> {
    decode_pgm(&read_bytes(path)?)
}

/// Loss history as CSV with `\n` line endings.
pub fn loss_history_csv(history: &[LossRecord]) -> String {
    let mut out = String::from("iter,loss_total,loss_proj,loss_vol\n");
    for r in history {
        let _ = writeln!(out, "{},{},{},{}", r.iter, r.total, r.proj, r.vol);
    }
    out
}

pub fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}
