//! Two-dimensional sinusoidal positional encoding.
//!
//! Channels `[0, z/2)` encode the column coordinate x and channels
//! `[z/2, z)` the row coordinate y. Within each half, channel pairs
//! `(2i, 2i + 1)` hold `sin` and `cos` of `coord / 10000^(4i/z)`.

use nalgebra::DMatrix;

use crate::aggregate::AggregatedMap;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct PositionalEncoding {
    /// `w*h x z`, rows in the same `y * w + x` order as [`AggregatedMap`].
    pub table: DMatrix<f64>,
    pub width: usize,
    pub height: usize,
}

pub fn positional_encoding(width: usize, height: usize, z: usize) -> Result<PositionalEncoding> {
    if width == 0 || height == 0 {
        return Err(Error::validation(format!(
            "positional encoding grid must be at least 1x1, got {width}x{height}"
        )));
    }
    if z == 0 || !z.is_multiple_of(4) {
        return Err(Error::validation(format!(
            "positional encoding needs a channel count divisible by 4, got {z}"
        )));
    }
    let half = z / 2;
    let freqs: Vec<f64> = (0..z / 4)
        .map(|i| 10000f64.powf(-(4.0 * i as f64) / z as f64))
        .collect();

    let mut table = DMatrix::zeros(width * height, z);
    for y in 0..height {
        for x in 0..width {
            let row = y * width + x;
            for (i, &f) in freqs.iter().enumerate() {
                let (sx, cx) = (x as f64 * f).sin_cos();
                let (sy, cy) = (y as f64 * f).sin_cos();
                table[(row, 2 * i)] = sx;
                table[(row, 2 * i + 1)] = cx;
                table[(row, half + 2 * i)] = sy;
                table[(row, half + 2 * i + 1)] = cy;
            }
        }
    }
    Ok(PositionalEncoding {
        table,
        width,
        height,
    })
}

/// `X' + PE`. Apply exactly once; the sum is not idempotent.
pub fn add_pe(map: &AggregatedMap, pe: &PositionalEncoding) -> Result<AggregatedMap> {
    let mut out = map.clone();
    add_pe_in_place(&mut out, pe)?;
    Ok(out)
}

pub fn add_pe_in_place(map: &mut AggregatedMap, pe: &PositionalEncoding) -> Result<()> {
    if map.width != pe.width || map.height != pe.height || map.data.shape() != pe.table.shape() {
        return Err(Error::validation(format!(
            "positional encoding {}x{} ({:?}) does not match map {}x{} ({:?})",
            pe.width,
            pe.height,
            pe.table.shape(),
            map.width,
            map.height,
            map.data.shape()
        )));
    }
    map.data += &pe.table;
    Ok(())
}
