use std::path::Path;

use crate::datagen_io::{write_pgm, GrayImage};
use crate::error::{check_dim, NmfError, Result};
use crate::factor_model::NonnegativeMatrix;

/// Lay the columns of `W` out as `tile_w × tile_h` tiles on a near-square
/// grid. Each tile is stretched to the full 0..=255 range; constant tiles
/// render as 0.
pub fn basis_mosaic(w: &NonnegativeMatrix, tile_w: usize, tile_h: usize) -> Result<GrayImage> {
    if tile_w == 0 || tile_h == 0 {
        return Err(NmfError::config("tile dimensions must be positive"));
    }
    check_dim("basis mosaic", "rows of W (tile_w * tile_h)", tile_w * tile_h, w.rows())?;
    let k = w.cols();
    let grid_cols = (k as f64).sqrt().ceil() as usize;
    let grid_rows = k.div_ceil(grid_cols);
    let width = grid_cols * tile_w;
    let height = grid_rows * tile_h;
    let mut pixels = vec![0u16; width * height];
    for t in 0..k {
        let col = w.column(t);
        let lo = col.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = col.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let span = hi - lo;
        let (gx, gy) = (t % grid_cols, t / grid_cols);
        for y in 0..tile_h {
            for x in 0..tile_w {
                let value = col[y * tile_w + x];
                let level = if span > 0.0 {
                    ((value - lo) / span * 255.0).round() as u16
                } else {
                    0
                };
                pixels[(gy * tile_h + y) * width + gx * tile_w + x] = level;
            }
        }
    }
    Ok(GrayImage {
        width,
        height,
        maxval: 255,
        pixels,
    })
}

pub fn emit_basis_mosaic(w: &NonnegativeMatrix, tile_w: usize, tile_h: usize, path: &Path) -> Result<()> {
    let img = basis_mosaic(w, tile_w, tile_h)?;
    write_pgm(&img, path)
}
