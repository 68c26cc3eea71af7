//! On-disk formats: 16-bit PNG / PNM images and the light field directory
//! layout (`manifest.json` plus one `view_RR_CC.png` per view).

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::colour::WhitePoint;
use crate::error::{Error, Result};
use crate::image::Image;
use crate::lightfield::{ColourSpace, LightField, ViewIndex};

pub const MANIFEST_NAME: &str = "manifest.json";

#[inline]
fn quantize(v: f64) -> u16 {
    (v.clamp(0.0, 1.0) * 65535.0).round() as u16
}

/// Writes a 16-bit grey or RGB PNG. Samples are clipped to `[0, 1]`.
pub fn write_png16(path: &Path, img: &Image) -> Result<()> {
    let file = BufWriter::new(File::create(path)?);
    let mut enc = png::Encoder::new(file, img.width() as u32, img.height() as u32);
    enc.set_color(if img.channels() == 3 {
        png::ColorType::Rgb
    } else {
        png::ColorType::Grayscale
    });
    enc.set_depth(png::BitDepth::Sixteen);
    let mut writer = enc
        .write_header()
        .map_err(|e| Error::format(path, e.to_string()))?;
    let bytes: Vec<u8> = img.data().iter().flat_map(|&v| quantize(v).to_be_bytes()).collect();
    writer
        .write_image_data(&bytes)
        .map_err(|e| Error::format(path, e.to_string()))?;
    writer.finish().map_err(|e| Error::format(path, e.to_string()))?;
    Ok(())
}

fn read_png(path: &Path) -> Result<Image> {
    let decoder = png::Decoder::new(BufReader::new(File::open(path)?));
    let mut reader = decoder.read_info().map_err(|e| Error::format(path, e.to_string()))?;
    let mut buf = vec![0; reader.output_buffer_size().unwrap_or(0)];
    let info = reader
        .next_frame(&mut buf)
        .map_err(|e| Error::format(path, e.to_string()))?;
    let channels = match info.color_type {
        png::ColorType::Grayscale => 1,
        png::ColorType::Rgb => 3,
        other => return Err(Error::format(path, format!("unsupported PNG colour type {other:?}"))),
    };
    let bytes = &buf[..info.buffer_size()];
    let data: Vec<f64> = match info.bit_depth {
        png::BitDepth::Sixteen => bytes
            .chunks_exact(2)
            .map(|b| u16::from_be_bytes([b[0], b[1]]) as f64 / 65535.0)
            .collect(),
        png::BitDepth::Eight => bytes.iter().map(|&b| b as f64 / 255.0).collect(),
        other => return Err(Error::format(path, format!("unsupported PNG bit depth {other:?}"))),
    };
    Image::from_vec(info.width as usize, info.height as usize, channels, data)
}

/// Writes a binary PGM (grey) or PPM (RGB) with maxval 65535, samples big-endian.
pub fn write_pnm16(path: &Path, img: &Image) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    let magic = if img.channels() == 3 { "P6" } else { "P5" };
    write!(w, "{magic}\n{} {}\n65535\n", img.width(), img.height())?;
    for &v in img.data() {
        w.write_all(&quantize(v).to_be_bytes())?;
    }
    w.flush()?;
    Ok(())
}

fn read_pnm(path: &Path) -> Result<Image> {
    let mut bytes = Vec::new();
    File::open(path)?.read_to_end(&mut bytes)?;
    let mut pos = 0;
    let mut next_token = |bytes: &[u8]| -> Option<String> {
        loop {
            while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if pos < bytes.len() && bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
                continue;
            }
            break;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        (pos > start).then(|| String::from_utf8_lossy(&bytes[start..pos]).into_owned())
    };
    let bad = |reason: &str| Error::format(path, reason);
    let magic = next_token(&bytes).ok_or_else(|| bad("empty file"))?;
    let channels = match magic.as_str() {
        "P5" => 1,
        "P6" => 3,
        _ => return Err(bad("expected binary PGM (P5) or PPM (P6)")),
    };
    let mut num = |what: &str| -> Result<usize> {
        next_token(&bytes)
            .and_then(|t| t.parse().ok())
            .ok_or_else(|| bad(&format!("bad {what}")))
    };
    let width = num("width")?;
    let height = num("height")?;
    let maxval = num("maxval")?;
    if maxval == 0 || maxval > 65535 {
        return Err(bad("maxval out of range"));
    }
    // Exactly one whitespace byte separates the header from the raster.
    let start = pos + 1;
    let count = width * height * channels;
    let sample_bytes = if maxval > 255 { 2 } else { 1 };
    if bytes.len() < start + count * sample_bytes {
        return Err(bad("truncated raster"));
    }
    let raster = &bytes[start..start + count * sample_bytes];
    let scale = maxval as f64;
    let data = if sample_bytes == 2 {
        raster
            .chunks_exact(2)
            .map(|b| u16::from_be_bytes([b[0], b[1]]) as f64 / scale)
            .collect()
    } else {
        raster.iter().map(|&b| b as f64 / scale).collect()
    };
    Image::from_vec(width, height, channels, data)
}

/// Reads a PNG, PGM or PPM image, normalizing samples to `[0, 1]`.
pub fn read_image(path: &Path) -> Result<Image> {
    match path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref() {
        Some("png") => read_png(path),
        Some("ppm" | "pgm" | "pnm") => read_pnm(path),
        _ => Err(Error::format(path, "unknown image extension")),
    }
}

/// Writes PNG or PNM depending on the file extension.
pub fn write_image(path: &Path, img: &Image) -> Result<()> {
    match path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref() {
        Some("png") => write_png16(path, img),
        Some("ppm" | "pgm" | "pnm") => write_pnm16(path, img),
        _ => Err(Error::format(path, "unknown image extension")),
    }
}

/// Light field manifest as stored in `manifest.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub rows: usize,
    pub cols: usize,
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub colour_space: ColourSpace,
    #[serde(default)]
    pub white_point: WhitePoint,
    /// Row-major validity mask, `rows` lists of `cols` flags.
    pub valid: Vec<Vec<bool>>,
    #[serde(default)]
    pub history: Vec<String>,
}

pub fn view_file_name(v: ViewIndex, ext: &str) -> String {
    format!("view_{:02}_{:02}.{ext}", v.row, v.col)
}

// LAB samples are stored as L/100, (a+128)/255, (b+128)/255 so that they fit
// the unsigned 16-bit container.
fn encode_for_disk(img: &Image, cs: ColourSpace) -> Image {
    match cs {
        ColourSpace::Lab => {
            let mut out = img.clone();
            for px in out.data_mut().chunks_exact_mut(3) {
                px[0] /= 100.0;
                px[1] = (px[1] + 128.0) / 255.0;
                px[2] = (px[2] + 128.0) / 255.0;
            }
            out
        }
        _ => img.clone(),
    }
}

fn decode_from_disk(mut img: Image, cs: ColourSpace) -> Image {
    if cs == ColourSpace::Lab {
        for px in img.data_mut().chunks_exact_mut(3) {
            px[0] *= 100.0;
            px[1] = px[1] * 255.0 - 128.0;
            px[2] = px[2] * 255.0 - 128.0;
        }
    }
    img
}

/// Saves a light field as a manifest plus one 16-bit PNG per view.
pub fn save_lightfield(lf: &LightField, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    let manifest = Manifest {
        rows: lf.rows(),
        cols: lf.cols(),
        width: lf.width(),
        height: lf.height(),
        channels: lf.channels(),
        colour_space: lf.colour_space(),
        white_point: lf.white_point(),
        valid: lf.valid_mask().chunks(lf.cols()).map(|r| r.to_vec()).collect(),
        history: lf.history().to_vec(),
    };
    let mut text = serde_json::to_string_pretty(&manifest)?;
    text.push('\n');
    fs::write(dir.join(MANIFEST_NAME), text)?;
    for v in lf.indices() {
        let img = encode_for_disk(lf.view(v), lf.colour_space());
        write_png16(&dir.join(view_file_name(v, "png")), &img)?;
    }
    Ok(())
}

fn find_view_file(dir: &Path, v: ViewIndex) -> Option<PathBuf> {
    ["png", "ppm", "pgm"]
        .iter()
        .map(|ext| dir.join(view_file_name(v, ext)))
        .find(|p| p.exists())
}

pub fn read_manifest(dir: &Path) -> Result<Manifest> {
    let path = dir.join(MANIFEST_NAME);
    if !path.exists() {
        return Err(Error::MissingManifest(path));
    }
    let manifest: Manifest =
        serde_json::from_str(&fs::read_to_string(&path)?).map_err(|e| Error::format(&path, e.to_string()))?;
    if manifest.valid.len() != manifest.rows || manifest.valid.iter().any(|r| r.len() != manifest.cols) {
        return Err(Error::format(&path, "validity mask does not match rows x cols"));
    }
    Ok(manifest)
}

/// Loads a light field directory written by [`save_lightfield`] (or by hand:
/// 16-bit PPM/PGM views are accepted too).
///
/// Views flagged invalid may be absent; they are filled with zeros.
pub fn load_lightfield(dir: &Path) -> Result<LightField> {
    let m = read_manifest(dir)?;
    let mut views = Vec::with_capacity(m.rows * m.cols);
    let mut valid = Vec::with_capacity(m.rows * m.cols);
    let centre = ViewIndex::new(m.rows / 2, m.cols / 2);
    for row in 0..m.rows {
        for col in 0..m.cols {
            let v = ViewIndex::new(row, col);
            let flagged = m.valid[row][col];
            let img = match find_view_file(dir, v) {
                Some(path) => {
                    let img = read_image(&path)?;
                    if img.width() != m.width || img.height() != m.height || img.channels() != m.channels {
                        return Err(Error::DimensionMismatch {
                            expected: format!("{}x{}x{}", m.width, m.height, m.channels),
                            actual: format!("{} in {}", img.shape_string(), path.display()),
                        });
                    }
                    decode_from_disk(img, m.colour_space)
                }
                None if v == centre => return Err(Error::MissingCentreView { row, col }),
                None if flagged => {
                    return Err(Error::MissingView {
                        row,
                        col,
                        path: dir.join(view_file_name(v, "png")),
                    })
                }
                None => Image::new(m.width, m.height, m.channels),
            };
            views.push(img);
            valid.push(flagged);
        }
    }
    let mut lf = LightField::with_mask(m.rows, m.cols, views, valid, m.colour_space)?;
    lf.set_white_point(m.white_point)?;
    lf.set_history(m.history);
    Ok(lf)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp_lf(rows: usize, cols: usize) -> LightField {
        LightField::from_views_fn(rows, cols, ColourSpace::LinearRgb, |v| {
            Image::from_fn(7, 5, 3, |x, y| {
                [
                    x as f64 / 7.0,
                    y as f64 / 5.0,
                    (v.row * cols + v.col) as f64 / (rows * cols) as f64,
                ]
            })
        })
        .unwrap()
    }

    #[test]
    fn save_load_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let lf = ramp_lf(3, 3);
        save_lightfield(&lf, dir.path()).unwrap();
        let back = load_lightfield(dir.path()).unwrap();
        assert_eq!(back.rows(), 3);
        for (a, b) in lf.views().iter().zip(back.views()) {
            for (x, y) in a.data().iter().zip(b.data()) {
                assert!((x - y).abs() <= 0.5 / 65535.0 + 1e-12);
            }
        }
    }

    #[test]
    fn lab_light_field_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let lf = ramp_lf(3, 3).to_lab().unwrap();
        save_lightfield(&lf, dir.path()).unwrap();
        let back = load_lightfield(dir.path()).unwrap();
        assert_eq!(back.colour_space(), ColourSpace::Lab);
        for (a, b) in lf.views().iter().zip(back.views()) {
            for (x, y) in a.data().iter().zip(b.data()) {
                assert!((x - y).abs() < 255.0 / 65535.0);
            }
        }
    }

    #[test]
    fn missing_valid_view_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        save_lightfield(&ramp_lf(3, 3), dir.path()).unwrap();
        fs::remove_file(dir.path().join("view_00_02.png")).unwrap();
        assert!(matches!(load_lightfield(dir.path()), Err(Error::MissingView { row: 0, col: 2, .. })));
    }

    #[test]
    fn missing_invalid_view_is_tolerated() {
        let dir = tempfile::tempdir().unwrap();
        let mut lf = ramp_lf(5, 5);
        lf.invalidate(ViewIndex::new(4, 0)).unwrap();
        save_lightfield(&lf, dir.path()).unwrap();
        fs::remove_file(dir.path().join("view_04_00.png")).unwrap();
        let n_files = fs::read_dir(dir.path())
            .unwrap()
            .filter(|e| e.as_ref().unwrap().file_name().to_string_lossy().starts_with("view_"))
            .count();
        assert_eq!(n_files, 24);
        let back = load_lightfield(dir.path()).unwrap();
        assert_eq!(back.valid_mask().iter().filter(|v| !**v).count(), 1);
        assert!(!back.is_valid(ViewIndex::new(4, 0)));
    }

    #[test]
    fn missing_manifest_and_centre() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(load_lightfield(dir.path()), Err(Error::MissingManifest(_))));
        save_lightfield(&ramp_lf(3, 3), dir.path()).unwrap();
        fs::remove_file(dir.path().join("view_01_01.png")).unwrap();
        assert!(matches!(load_lightfield(dir.path()), Err(Error::MissingCentreView { .. })));
    }

    #[test]
    fn inconsistent_view_size_rejected() {
        let dir = tempfile::tempdir().unwrap();
        save_lightfield(&ramp_lf(3, 3), dir.path()).unwrap();
        write_png16(&dir.path().join("view_00_00.png"), &Image::new(3, 3, 3)).unwrap();
        assert!(matches!(load_lightfield(dir.path()), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn ppm_views_accepted() {
        let dir = tempfile::tempdir().unwrap();
        let lf = ramp_lf(3, 3);
        save_lightfield(&lf, dir.path()).unwrap();
        let v = ViewIndex::new(2, 2);
        fs::remove_file(dir.path().join("view_02_02.png")).unwrap();
        write_pnm16(&dir.path().join("view_02_02.ppm"), lf.view(v)).unwrap();
        let back = load_lightfield(dir.path()).unwrap();
        for (x, y) in lf.view(v).data().iter().zip(back.view(v).data()) {
            assert!((x - y).abs() <= 0.5 / 65535.0 + 1e-12);
        }
    }

    #[test]
    fn pnm_header_is_big_endian_16_bit() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.pgm");
        let img = Image::from_vec(2, 1, 1, vec![1.0, 256.0 / 65535.0]).unwrap();
        write_pnm16(&path, &img).unwrap();
        let bytes = fs::read(&path).unwrap();
        assert!(bytes.starts_with(b"P5\n2 1\n65535\n"));
        assert_eq!(&bytes[bytes.len() - 4..], &[0xff, 0xff, 0x01, 0x00]);
        assert_eq!(read_image(&path).unwrap(), img);
    }
}
