//! Volume persistence and slice export.
//!
//! A volume is stored as two files sharing a stem: `<stem>.json` holds the
//! header and `<stem>.raw` the payload, little-endian `f32` in storage order
//! (first spatial index slowest, channel fastest). Values are narrowed to
//! `f32` on save, so `load(save(v)) == v` bitwise whenever `v` holds
//! `f32`-representable values, which is the case for everything loaded from
//! disk.
//!
//! Slices are exported as binary PGM (P5) or PPM (P6) with the header
//! `P5\n<width> <height>\n255\n` and no other metadata.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::volume::{AffineParams, DisplacementField, Shape3, Volume3};

pub const DTYPE: &str = "f32";
pub const ORDER: &str = "i-slowest-c-fastest";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VolumeKind {
    Image,
    Label,
    Ddf,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VolumeHeader {
    pub shape: [usize; 3],
    pub channels: usize,
    pub dtype: String,
    pub order: String,
    pub kind: VolumeKind,
}

impl VolumeHeader {
    pub fn payload_bytes(&self) -> usize {
        4 * self.shape.iter().product::<usize>() * self.channels
    }
}

/// Header and payload paths for a volume stem; any extension on `path` is
/// replaced.
pub fn volume_paths(path: &Path) -> (PathBuf, PathBuf) {
    (path.with_extension("json"), path.with_extension("raw"))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::MissingFile(path.to_path_buf()),
        _ => Error::io(path, e),
    })
}

pub fn save_volume(path: &Path, v: &Volume3, kind: VolumeKind) -> Result<()> {
    let (header_path, payload_path) = volume_paths(path);
    let mut payload = Vec::with_capacity(v.len() * 4);
    for (index, &x) in v.data().iter().enumerate() {
        let narrowed = x as f32;
        if !narrowed.is_finite() {
            return Err(Error::NonFinite { index });
        }
        payload.extend_from_slice(&narrowed.to_le_bytes());
    }
    let header = VolumeHeader {
        shape: v.shape().dims(),
        channels: v.channels(),
        dtype: DTYPE.into(),
        order: ORDER.into(),
        kind,
    };
    let mut text = serde_json::to_string_pretty(&header).expect("header serialises");
    text.push('\n');
    write_file(&header_path, text.as_bytes())?;
    write_file(&payload_path, &payload)
}

pub fn read_header(path: &Path) -> Result<VolumeHeader> {
    let (header_path, _) = volume_paths(path);
    let text = read_file(&header_path)?;
    let malformed = |reason: String| Error::MalformedHeader {
        path: header_path.clone(),
        reason,
    };
    let header: VolumeHeader =
        serde_json::from_slice(&text).map_err(|e| malformed(e.to_string()))?;
    if header.dtype != DTYPE {
        return Err(malformed(format!("unsupported dtype {:?}", header.dtype)));
    }
    if header.order != ORDER {
        return Err(malformed(format!("unsupported order {:?}", header.order)));
    }
    if header.channels == 0 || header.shape.iter().any(|&d| d < 2) {
        return Err(malformed(format!(
            "shape {:?} with {} channels is not a valid volume",
            header.shape, header.channels
        )));
    }
    Ok(header)
}

pub fn load_volume_with_header(path: &Path) -> Result<(VolumeHeader, Volume3)> {
    let header = read_header(path)?;
    let (_, payload_path) = volume_paths(path);
    let bytes = read_file(&payload_path)?;
    let expected = header.payload_bytes();
    if bytes.len() != expected {
        return Err(Error::LengthMismatch {
            path: payload_path,
            expected,
            actual: bytes.len(),
        });
    }
    let mut data = Vec::with_capacity(expected / 4);
    for (index, chunk) in bytes.chunks_exact(4).enumerate() {
        let x = f32::from_le_bytes(chunk.try_into().expect("4-byte chunk"));
        if !x.is_finite() {
            return Err(Error::NonFinitePayload {
                path: payload_path,
                index,
            });
        }
        data.push(f64::from(x));
    }
    let v = Volume3::new(Shape3(header.shape), header.channels, data)?;
    Ok((header, v))
}

pub fn load_volume(path: &Path) -> Result<Volume3> {
    load_volume_with_header(path).map(|(_, v)| v)
}

pub fn save_ddf(path: &Path, ddf: &DisplacementField) -> Result<()> {
    save_volume(path, &ddf.to_volume()?, VolumeKind::Ddf)
}

pub fn load_ddf(path: &Path) -> Result<DisplacementField> {
    DisplacementField::from_volume(&load_volume(path)?)
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct AffineFile {
    kind: String,
    theta: [[f64; 3]; 4],
}

/// Writes `{"kind": "affine", "theta": [[..3], [..3], [..3], [..3]]}`.
pub fn save_affine(path: &Path, theta: &AffineParams) -> Result<()> {
    let file = AffineFile {
        kind: "affine".into(),
        theta: *theta.theta(),
    };
    let mut text = serde_json::to_string_pretty(&file).expect("affine serialises");
    text.push('\n');
    write_file(path, text.as_bytes())
}

pub fn load_affine(path: &Path) -> Result<AffineParams> {
    let text = read_file(path)?;
    let malformed = |reason: String| Error::MalformedHeader {
        path: path.to_path_buf(),
        reason,
    };
    let file: AffineFile = serde_json::from_slice(&text).map_err(|e| malformed(e.to_string()))?;
    if file.kind != "affine" {
        return Err(malformed(format!(
            "expected kind \"affine\", found {:?}",
            file.kind
        )));
    }
    AffineParams::new(file.theta)
}

/// Transform parameters as stored on disk.
#[derive(Debug, Clone, PartialEq)]
pub enum StoredParams {
    Affine(AffineParams),
    Ddf(DisplacementField),
}

/// Loads either an affine JSON file or a DDF volume, telling them apart by
/// the JSON content of `path`.
pub fn load_params(path: &Path) -> Result<StoredParams> {
    let json_path = path.with_extension("json");
    let text = read_file(&json_path)?;
    let value: serde_json::Value =
        serde_json::from_slice(&text).map_err(|e| Error::MalformedHeader {
            path: json_path.clone(),
            reason: e.to_string(),
        })?;
    if value.get("theta").is_some() {
        load_affine(&json_path).map(StoredParams::Affine)
    } else {
        load_ddf(path).map(StoredParams::Ddf)
    }
}

/// Round half away from zero, as `f64::round` does.
fn to_byte(x: f64) -> u8 {
    (x * 255.0).round().clamp(0.0, 255.0) as u8
}

/// Extracts one channel of the slice `index` along `axis` as rows of the
/// remaining two axes, in increasing axis order. Returns `(width, height,
/// values)`.
fn slice_values(
    v: &Volume3,
    axis: usize,
    index: usize,
    channel: usize,
) -> Result<(usize, usize, Vec<f64>)> {
    let dims = v.shape().dims();
    if axis > 2 {
        return Err(Error::IndexOutOfRange {
            axis,
            index: axis,
            extent: 3,
        });
    }
    if index >= dims[axis] {
        return Err(Error::IndexOutOfRange {
            axis,
            index,
            extent: dims[axis],
        });
    }
    let (row_axis, col_axis) = match axis {
        0 => (1, 2),
        1 => (0, 2),
        _ => (0, 1),
    };
    let (height, width) = (dims[row_axis], dims[col_axis]);
    let mut values = Vec::with_capacity(width * height);
    for r in 0..height {
        for c in 0..width {
            let mut p = [0; 3];
            p[axis] = index;
            p[row_axis] = r;
            p[col_axis] = c;
            values.push(v.get(p[0], p[1], p[2], channel));
        }
    }
    Ok((width, height, values))
}

/// PGM bytes for a slice of channel 0, min-max scaled per slice to
/// `[0, 255]`. A constant slice maps to 0.
pub fn slice_pgm(v: &Volume3, axis: usize, index: usize) -> Result<Vec<u8>> {
    let (width, height, values) = slice_values(v, axis, index, 0)?;
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut out = format!("P5\n{width} {height}\n255\n").into_bytes();
    if hi > lo {
        out.extend(values.iter().map(|&x| to_byte((x - lo) / (hi - lo))));
    } else {
        out.resize(out.len() + values.len(), 0);
    }
    Ok(out)
}

/// PPM bytes for a slice of a three-channel volume with values in `[0, 1]`.
pub fn slice_ppm(rgb: &Volume3, axis: usize, index: usize) -> Result<Vec<u8>> {
    if rgb.channels() != 3 {
        return Err(Error::InvalidShape {
            shape: vec![rgb.channels()],
            reason: "colour export needs exactly 3 channels".into(),
        });
    }
    let planes: Vec<Vec<f64>> = (0..3)
        .map(|c| slice_values(rgb, axis, index, c).map(|(_, _, v)| v))
        .collect::<Result<_>>()?;
    let (width, height, _) = slice_values(rgb, axis, index, 0)?;
    let mut out = format!("P6\n{width} {height}\n255\n").into_bytes();
    for n in 0..width * height {
        for plane in &planes {
            out.push(to_byte(plane[n]));
        }
    }
    Ok(out)
}

/// Writes a grayscale slice. Nothing is written if the index is invalid.
pub fn export_slice(v: &Volume3, axis: usize, index: usize, path: &Path) -> Result<()> {
    let bytes = slice_pgm(v, axis, index)?;
    write_file(path, &bytes)
}

/// Writes a colour slice of a label comparison map.
pub fn export_comparison(map: &Volume3, axis: usize, index: usize, path: &Path) -> Result<()> {
    let bytes = slice_ppm(map, axis, index)?;
    write_file(path, &bytes)
}
