use std::fs;
use std::path::{Path, PathBuf};

use ndarray::Array2;

use crate::error::{NmfError, Result};
use crate::factor_model::NonnegativeMatrix;

/// Grayscale raster as stored in a PGM file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrayImage {
    pub width: usize,
    pub height: usize,
    pub maxval: u16,
    /// Row-major pixel values in `0..=maxval`.
    pub pixels: Vec<u16>,
}

struct Header {
    magic: [u8; 2],
    width: usize,
    height: usize,
    maxval: u16,
    body_start: usize,
}

fn bad(path: &Path, msg: impl Into<String>) -> NmfError {
    NmfError::Parse {
        path: path.to_path_buf(),
        line: 0,
        col: 0,
        msg: msg.into(),
    }
}

fn parse_header(bytes: &[u8], path: &Path) -> Result<Header> {
    if bytes.len() < 2 || bytes[0] != b'P' || !(bytes[1] == b'2' || bytes[1] == b'5') {
        return Err(bad(path, "not a P2/P5 PGM file"));
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
                Some(_) => break,
                None => return Err(bad(path, "truncated PGM header")),
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(u8::is_ascii_digit) {
            pos += 1;
        }
        *field = std::str::from_utf8(&bytes[start..pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| bad(path, "malformed PGM header field"))?;
    }
    let [width, height, maxval] = fields;
    if width == 0 || height == 0 || maxval == 0 || maxval > u16::MAX as usize {
        return Err(bad(path, format!("invalid PGM geometry {width}x{height}, maxval {maxval}")));
    }
    // exactly one whitespace byte separates the header from a P5 body
    if !bytes.get(pos).is_some_and(u8::is_ascii_whitespace) && bytes[1] == b'5' {
        return Err(bad(path, "missing separator after PGM header"));
    }
    Ok(Header {
        magic: [bytes[0], bytes[1]],
        width,
        height,
        maxval: maxval as u16,
        body_start: pos + 1,
    })
}

pub fn read_pgm(path: &Path) -> Result<GrayImage> {
    let bytes = fs::read(path).map_err(|e| NmfError::io(path, e))?;
    let hdr = parse_header(&bytes, path)?;
    let count = hdr.width * hdr.height;
    let body = bytes.get(hdr.body_start.min(bytes.len())..).unwrap_or(&[]);
    let pixels: Vec<u16> = if hdr.magic[1] == b'5' {
        let wide = hdr.maxval > 255;
        let need = if wide { 2 * count } else { count };
        if body.len() < need {
            return Err(bad(path, format!("pixel data is {} bytes, expected {need}", body.len())));
        }
        if wide {
            body[..need]
                .chunks_exact(2)
                .map(|c| u16::from_be_bytes([c[0], c[1]]))
                .collect()
        } else {
            body[..need].iter().map(|&b| b as u16).collect()
        }
    } else {
        let text = std::str::from_utf8(body).map_err(|_| bad(path, "non-ASCII P2 body"))?;
        let values: std::result::Result<Vec<u16>, _> = text
            .lines()
            .map(|l| l.split('#').next().unwrap_or(""))
            .flat_map(str::split_ascii_whitespace)
            .map(str::parse::<u16>)
            .collect();
        let values = values.map_err(|e| bad(path, format!("bad P2 pixel: {e}")))?;
        if values.len() < count {
            return Err(bad(path, format!("{} pixels, expected {count}", values.len())));
        }
        values.into_iter().take(count).collect()
    };
    if let Some(p) = pixels.iter().find(|&&p| p > hdr.maxval) {
        return Err(bad(path, format!("pixel {p} exceeds maxval {}", hdr.maxval)));
    }
    Ok(GrayImage {
        width: hdr.width,
        height: hdr.height,
        maxval: hdr.maxval,
        pixels,
    })
}

/// Writes binary P5 (one byte per pixel when `maxval <= 255`).
pub fn write_pgm(img: &GrayImage, path: &Path) -> Result<()> {
    let mut out = format!("P5\n{} {}\n{}\n", img.width, img.height, img.maxval).into_bytes();
    if img.maxval > 255 {
        for p in &img.pixels {
            out.extend_from_slice(&p.to_be_bytes());
        }
    } else {
        out.extend(img.pixels.iter().map(|&p| p as u8));
    }
    fs::write(path, out).map_err(|e| NmfError::io(path, e))
}

/// Every `*.pgm` in `dir` (sorted by file name) becomes one column of `V`.
/// Raw pixel values are clamped at `max_level` and divided by it.
pub fn load_image_dir(dir: &Path, width: usize, height: usize, max_level: f64) -> Result<NonnegativeMatrix> {
    if !(max_level > 0.0) {
        return Err(NmfError::config(format!("max_level must be > 0, got {max_level}")));
    }
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| NmfError::io(dir, e))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| {
            p.extension()
                .and_then(|e| e.to_str())
                .is_some_and(|e| e.eq_ignore_ascii_case("pgm"))
        })
        .collect();
    if files.is_empty() {
        return Err(NmfError::EmptyDirectory(dir.to_path_buf()));
    }
    files.sort();
    let f = width * height;
    let mut v = Array2::<f64>::zeros((f, files.len()));
    for (j, path) in files.iter().enumerate() {
        let img = read_pgm(path)?;
        if img.width != width || img.height != height {
            return Err(bad(
                path,
                format!("image is {}x{}, expected {width}x{height}", img.width, img.height),
            ));
        }
        for (i, &p) in img.pixels.iter().enumerate() {
            v[[i, j]] = (p as f64).min(max_level) / max_level;
        }
    }
    NonnegativeMatrix::new(v)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn clamp_then_scale() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("a.pgm"), "P2\n# test\n2 2\n100\n0 25\n50 75\n").unwrap();
        let v = load_image_dir(dir.path(), 2, 2, 50.0).unwrap();
        assert_eq!(v.shape(), (4, 1));
        assert_eq!(v.column(0).to_vec(), vec![0.0, 0.5, 1.0, 1.0]);
    }

    #[test]
    fn empty_directory_rejected() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(
            load_image_dir(dir.path(), 2, 2, 50.0),
            Err(NmfError::EmptyDirectory(_))
        ));
    }

    #[test]
    fn size_mismatch_rejected() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("a.pgm"), "P2 2 2 255 1 2 3 4").unwrap();
        fs::write(dir.path().join("b.pgm"), "P2 3 1 255 1 2 3").unwrap();
        assert!(load_image_dir(dir.path(), 2, 2, 50.0).is_err());
    }

    #[test]
    fn p5_round_trip_cbcl_shape() {
        let dir = tempfile::tempdir().unwrap();
        for i in 0..3u16 {
            let img = GrayImage {
                width: 19,
                height: 19,
                maxval: 255,
                pixels: (0..361).map(|p| (p + i * 7) % 256).collect(),
            };
            let path = dir.path().join(format!("face{i:04}.pgm"));
            write_pgm(&img, &path).unwrap();
            assert_eq!(read_pgm(&path).unwrap(), img);
        }
        let v = load_image_dir(dir.path(), 19, 19, 50.0).unwrap();
        assert_eq!(v.shape(), (361, 3));
        assert!(v.max_entry() <= 1.0);
    }

    #[test]
    fn sixteen_bit_p5() {
        let dir = tempfile::tempdir().unwrap();
        let img = GrayImage {
            width: 2,
            height: 1,
            maxval: 1000,
            pixels: vec![999, 3],
        };
        let path = dir.path().join("w.pgm");
        write_pgm(&img, &path).unwrap();
        assert_eq!(read_pgm(&path).unwrap(), img);
    }
}
