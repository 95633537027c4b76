//! Multi-depth activation-map aggregation and the global-average-pooling
//! baselines.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::tensorio::Tensor;

/// Channel slices with a Euclidean norm below this are treated as dead.
pub const DEAD_CHANNEL_NORM: f64 = 1e-12;

/// Output of one backbone block: `channels` slices of `height x width`.
///
/// Storage is channel-major with each slice row-major, so element
/// `(x, y, c)` lives at `c * height * width + y * width + x`.
#[derive(Debug, Clone, PartialEq)]
pub struct ActivationMap {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<f64>,
    /// One-based position of the block in the backbone.
    pub block_index: usize,
}

impl ActivationMap {
    pub fn new(
        width: usize,
        height: usize,
        channels: usize,
        data: Vec<f64>,
        block_index: usize,
    ) -> Result<Self> {
        if width == 0 || height == 0 || channels == 0 {
            return Err(Error::validation(format!(
                "activation map dims must be positive, got {width}x{height}x{channels}"
            )));
        }
        if data.len() != width * height * channels {
            return Err(Error::validation(format!(
                "activation map {width}x{height}x{channels} needs {} values, got {}",
                width * height * channels,
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::validation("activation map has non-finite entries"));
        }
        Ok(ActivationMap {
            width,
            height,
            channels,
            data,
            block_index,
        })
    }

    /// Build from a channel-first tensor: `[z, h, w]` or `[1, z, h, w]`.
    pub fn from_tensor(tensor: &Tensor, block_index: usize) -> Result<Self> {
        let (z, h, w) = match *tensor.dims() {
            [z, h, w] => (z, h, w),
            [1, z, h, w] => (z, h, w),
            ref dims => {
                return Err(Error::validation(format!(
                    "block {block_index}: expected [z, h, w] or [1, z, h, w], got {dims:?}"
                )))
            }
        };
        let data = tensor.data().iter().map(|&v| v as f64).collect();
        ActivationMap::new(w, h, z, data, block_index)
    }

    /// Channel-first `[z, h, w]` tensor.
    pub fn to_tensor(&self) -> Result<Tensor> {
        Tensor::new(
            vec![self.channels, self.height, self.width],
            self.data.iter().map(|&v| v as f32).collect(),
        )
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// Row-major `height x width` slice of channel `c`.
    pub fn channel(&self, c: usize) -> &[f64] {
        let plane = self.width * self.height;
        &self.data[c * plane..(c + 1) * plane]
    }

    fn planes_mut(&mut self) -> std::slice::ChunksExactMut<'_, f64> {
        let plane = self.width * self.height;
        self.data.chunks_exact_mut(plane)
    }
}

/// Divide every channel slice by its Euclidean norm. Dead channels stay zero.
pub fn normalize_channels(map: &ActivationMap) -> ActivationMap {
    let mut out = map.clone();
    for plane in out.planes_mut() {
        let norm = plane.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm < DEAD_CHANNEL_NORM {
            plane.fill(0.0);
        } else {
            plane.iter_mut().for_each(|v| *v /= norm);
        }
    }
    out
}

/// Source sample positions and weights along one axis for half-pixel-center
/// bilinear resampling, clamped at the borders.
fn axis_taps(src: usize, dst: usize) -> Vec<(usize, usize, f64)> {
    let scale = src as f64 / dst as f64;
    (0..dst)
        .map(|i| {
            let pos = ((i as f64 + 0.5) * scale - 0.5).max(0.0);
            let lo = (pos.floor() as usize).min(src - 1);
            let hi = (lo + 1).min(src - 1);
            (lo, hi, pos - lo as f64)
        })
        .collect()
}

/// Bilinear resize of a row-major `src_h x src_w` map with half-pixel centers
/// and no corner alignment.
pub fn resize_bilinear(
    src: &[f64],
    src_w: usize,
    src_h: usize,
    dst_w: usize,
    dst_h: usize,
) -> Result<Vec<f64>> {
    if src_w == 0 || src_h == 0 || src.len() != src_w * src_h {
        return Err(Error::validation(format!(
            "source map {src_w}x{src_h} with {} values",
            src.len()
        )));
    }
    if dst_w == 0 || dst_h == 0 {
        return Err(Error::validation(format!(
            "resize target must be at least 1x1, got {dst_w}x{dst_h}"
        )));
    }
    if src_w == dst_w && src_h == dst_h {
        return Ok(src.to_vec());
    }
    let xs = axis_taps(src_w, dst_w);
    let ys = axis_taps(src_h, dst_h);
    let mut out = Vec::with_capacity(dst_w * dst_h);
    for &(y0, y1, fy) in &ys {
        let row0 = &src[y0 * src_w..(y0 + 1) * src_w];
        let row1 = &src[y1 * src_w..(y1 + 1) * src_w];
        for &(x0, x1, fx) in &xs {
            let top = row0[x0] + (row0[x1] - row0[x0]) * fx;
            let bottom = row1[x0] + (row1[x1] - row1[x0]) * fx;
            out.push(top + (bottom - top) * fy);
        }
    }
    Ok(out)
}

/// The flattened multi-block map X': one row per anchor pixel, one column per
/// channel. Row `r` is pixel `(x, y)` with `r = y * width + x`.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregatedMap {
    pub data: DMatrix<f64>,
    pub width: usize,
    pub height: usize,
    /// First column of each block's channels.
    pub channel_offsets: Vec<usize>,
}

impl AggregatedMap {
    pub fn pixels(&self) -> usize {
        self.data.nrows()
    }

    pub fn channels(&self) -> usize {
        self.data.ncols()
    }

    pub fn row_of(&self, x: usize, y: usize) -> usize {
        y * self.width + x
    }

    pub fn pixel_of(&self, row: usize) -> (usize, usize) {
        (row % self.width, row / self.width)
    }
}

/// Zero-based position of the anchor block, the ceil(n/2)-th of n.
pub fn anchor_index(n: usize) -> usize {
    n.div_ceil(2).saturating_sub(1)
}

/// Normalize, resize to the middle block's spatial size, concatenate along
/// channels and flatten.
pub fn aggregate_maps(maps: &[ActivationMap]) -> Result<AggregatedMap> {
    if maps.len() < 2 {
        return Err(Error::validation(format!(
            "aggregation needs at least 2 blocks, got {}",
            maps.len()
        )));
    }
    if maps
        .windows(2)
        .any(|p| p[0].block_index >= p[1].block_index)
    {
        return Err(Error::validation("blocks must be sorted by block index"));
    }
    let anchor = &maps[anchor_index(maps.len())];
    let (w, h) = (anchor.width, anchor.height);
    let z: usize = maps.iter().map(|m| m.channels).sum();

    let mut columns = Vec::with_capacity(w * h * z);
    let mut channel_offsets = Vec::with_capacity(maps.len());
    for map in maps {
        channel_offsets.push(columns.len() / (w * h));
        let normalized = normalize_channels(map);
        for c in 0..map.channels {
            let resized = resize_bilinear(normalized.channel(c), map.width, map.height, w, h)?;
            columns.extend(resized);
        }
    }
    Ok(AggregatedMap {
        data: DMatrix::from_vec(w * h, z, columns),
        width: w,
        height: h,
        channel_offsets,
    })
}

/// Per-channel spatial mean.
pub fn gap(map: &ActivationMap) -> Vec<f64> {
    let plane = (map.width * map.height) as f64;
    (0..map.channels)
        .map(|c| map.channel(c).iter().sum::<f64>() / plane)
        .collect()
}

/// Concatenated [`gap`] of every block, in block order.
pub fn gap_agg(maps: &[ActivationMap]) -> Vec<f64> {
    maps.iter().flat_map(gap).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn map(w: usize, h: usize, z: usize, data: Vec<f64>, block: usize) -> ActivationMap {
        ActivationMap::new(w, h, z, data, block).unwrap()
    }

    /// Bilinear as a triangle-kernel sum over an edge-replicated source.
    fn triangle_oracle(src: &[f64], sw: usize, sh: usize, dw: usize, dh: usize) -> Vec<f64> {
        let at = |x: i64, y: i64| {
            let x = x.clamp(0, sw as i64 - 1) as usize;
            let y = y.clamp(0, sh as i64 - 1) as usize;
            src[y * sw + x]
        };
        let tri = |d: f64| (1.0 - d.abs()).max(0.0);
        let mut out = vec![0.0; dw * dh];
        for y in 0..dh {
            let sy = (y as f64 + 0.5) * sh as f64 / dh as f64 - 0.5;
            for x in 0..dw {
                let sx = (x as f64 + 0.5) * sw as f64 / dw as f64 - 0.5;
                let mut acc = 0.0;
                for iy in (sy.floor() as i64 - 1)..=(sy.ceil() as i64 + 1) {
                    for ix in (sx.floor() as i64 - 1)..=(sx.ceil() as i64 + 1) {
                        acc += tri(sx - ix as f64) * tri(sy - iy as f64) * at(ix, iy);
                    }
                }
                out[y * dw + x] = acc;
            }
        }
        out
    }

    #[test]
    fn normalize_single_channel() {
        let m = map(2, 2, 1, vec![3.0, 4.0, 0.0, 0.0], 1);
        assert_eq!(normalize_channels(&m).data(), &[0.6, 0.8, 0.0, 0.0]);
    }

    #[test]
    fn normalize_dead_channel() {
        let m = map(2, 1, 2, vec![0.0, 0.0, 1.0, 1.0], 1);
        let n = normalize_channels(&m);
        assert_eq!(n.channel(0), &[0.0, 0.0]);
        let norm: f64 = n.channel(1).iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!((norm - 1.0).abs() < 1e-12);
    }

    #[test]
    fn resize_identity() {
        let src: Vec<f64> = (0..28 * 28).map(|i| (i as f64).sin()).collect();
        assert_eq!(resize_bilinear(&src, 28, 28, 28, 28).unwrap(), src);
    }

    #[test]
    fn resize_constant_extension() {
        let out = resize_bilinear(&[7.0], 1, 1, 4, 4).unwrap();
        assert_eq!(out, vec![7.0; 16]);
    }

    #[test]
    fn resize_two_by_two_upscale() {
        let src = [0.0, 1.0, 2.0, 3.0];
        let out = resize_bilinear(&src, 2, 2, 4, 4).unwrap();
        let oracle = triangle_oracle(&src, 2, 2, 4, 4);
        for (a, b) in out.iter().zip(&oracle) {
            assert!((a - b).abs() < 1e-6, "{out:?} vs {oracle:?}");
        }
        // first row: 0, 0.25, 0.75, 1
        assert!((out[1] - 0.25).abs() < 1e-12 && (out[2] - 0.75).abs() < 1e-12);
    }

    #[test]
    fn resize_rejects_empty_target() {
        assert!(resize_bilinear(&[1.0], 1, 1, 0, 3).is_err());
    }

    #[test]
    fn anchor_is_middle_block() {
        assert_eq!(anchor_index(4), 1);
        assert_eq!(anchor_index(5), 2);
        assert_eq!(anchor_index(2), 0);
        assert_eq!(anchor_index(3), 1);
    }

    #[test]
    fn convnext_tiny_shapes() {
        let sizes = [(56, 96), (28, 192), (14, 384), (7, 768)];
        let maps: Vec<_> = sizes
            .iter()
            .enumerate()
            .map(|(i, &(s, z))| map(s, s, z, vec![1.0; s * s * z], i + 1))
            .collect();
        let agg = aggregate_maps(&maps).unwrap();
        assert_eq!((agg.width, agg.height), (28, 28));
        assert_eq!(agg.channels(), 1440);
        assert_eq!(agg.channel_offsets, vec![0, 96, 288, 672]);
        assert_eq!(gap_agg(&maps).len(), 1440);
    }

    #[test]
    fn constant_channels_give_identical_rows() {
        let a = map(3, 3, 2, [vec![2.0; 9], vec![5.0; 9]].concat(), 1);
        let b = map(3, 3, 1, vec![-1.0; 9], 2);
        let agg = aggregate_maps(&[a, b]).unwrap();
        for r in 1..agg.pixels() {
            assert_eq!(agg.data.row(r), agg.data.row(0));
        }
    }

    #[test]
    fn three_blocks_against_manual_pipeline() {
        let mk = |s: usize, z: usize, block: usize| {
            let data = (0..s * s * z)
                .map(|i| ((i * 7 + block * 13) % 11) as f64 - 3.0)
                .collect();
            map(s, s, z, data, block)
        };
        let maps = vec![mk(8, 2, 1), mk(4, 3, 2), mk(2, 1, 3)];
        let agg = aggregate_maps(&maps).unwrap();
        assert_eq!(agg.data.shape(), (16, 6));

        let mut col = 0;
        for m in &maps {
            for c in 0..m.channels() {
                let ch = m.channel(c);
                let norm = ch.iter().map(|v| v * v).sum::<f64>().sqrt();
                let normed: Vec<f64> = ch.iter().map(|v| v / norm).collect();
                let expected = triangle_oracle(&normed, m.width(), m.height(), 4, 4);
                for (r, e) in expected.iter().enumerate() {
                    assert!((agg.data[(r, col)] - e).abs() < 1e-9);
                }
                col += 1;
            }
        }
    }

    #[test]
    fn aggregation_rejects_bad_input() {
        let a = map(2, 2, 1, vec![1.0; 4], 1);
        assert!(aggregate_maps(std::slice::from_ref(&a)).is_err());
        let b = map(2, 2, 1, vec![1.0; 4], 1);
        assert!(aggregate_maps(&[a, b]).is_err());
    }

    #[test]
    fn gap_values() {
        let m = map(2, 2, 2, vec![5.0, 5.0, 5.0, 5.0, 0.0, 1.0, 2.0, 3.0], 1);
        assert_eq!(gap(&m), vec![5.0, 1.5]);
        let m3 = map(1, 1, 3, vec![1.0, 2.0, 3.0], 1);
        assert_eq!(gap(&m3).len(), 3);
    }

    #[test]
    fn gap_agg_constant_blocks() {
        let a = map(2, 2, 2, [vec![1.0; 4], vec![2.0; 4]].concat(), 1);
        let b = map(1, 1, 2, vec![3.0, 4.0], 2);
        assert_eq!(gap_agg(&[a, b]), vec![1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn tensor_layout_round_trip() {
        let m = map(3, 2, 2, (0..12).map(|i| i as f64).collect(), 1);
        let t = m.to_tensor().unwrap();
        assert_eq!(t.dims(), &[2, 2, 3]);
        assert_eq!(ActivationMap::from_tensor(&t, 1).unwrap(), m);
        let batched = Tensor::new(vec![1, 2, 2, 3], t.data().to_vec()).unwrap();
        assert_eq!(ActivationMap::from_tensor(&batched, 1).unwrap(), m);
        let flat = Tensor::from_vec(vec![0.0; 4]).unwrap();
        assert!(ActivationMap::from_tensor(&flat, 1).is_err());
    }

    proptest! {
        #[test]
        fn normalized_norms_are_zero_or_one(
            w in 1usize..6, h in 1usize..6, z in 1usize..4,
            seed in any::<u32>(), dead in any::<bool>(),
        ) {
            let mut data: Vec<f64> = (0..w * h * z)
                .map(|i| (((i as u64 * 2654435761 + seed as u64) % 1000) as f64 - 500.0) / 37.0)
                .collect();
            if dead {
                data[..w * h].fill(0.0);
            }
            let n = normalize_channels(&map(w, h, z, data, 1));
            for c in 0..z {
                let norm = n.channel(c).iter().map(|v| v * v).sum::<f64>().sqrt();
                prop_assert!(norm < 1e-6 || (norm - 1.0).abs() < 1e-6);
            }
        }

        #[test]
        fn resize_matches_triangle_oracle(
            sw in 1usize..7, sh in 1usize..7, dw in 1usize..9, dh in 1usize..9, seed in any::<u32>(),
        ) {
            let src: Vec<f64> = (0..sw * sh)
                .map(|i| ((i as u64 * 40503 + seed as u64) % 97) as f64 / 7.0)
                .collect();
            let out = resize_bilinear(&src, sw, sh, dw, dh).unwrap();
            let oracle = triangle_oracle(&src, sw, sh, dw, dh);
            for (a, b) in out.iter().zip(&oracle) {
                prop_assert!((a - b).abs() < 1e-9);
            }
        }

        #[test]
        fn columns_depend_only_on_their_block(
            perturb in 0usize..3, seed in any::<u32>(),
        ) {
            let mk = |s: usize, z: usize, block: usize, salt: u64| {
                let data = (0..s * s * z)
                    .map(|i| ((i as u64 * 2246822519 + salt) % 101) as f64 + 1.0)
                    .collect();
                map(s, s, z, data, block)
            };
            let base = vec![mk(6, 2, 1, 1), mk(3, 3, 2, 2), mk(2, 2, 3, 3)];
            let mut changed = base.clone();
            let (s, z) = (base[perturb].width(), base[perturb].channels());
            changed[perturb] = mk(s, z, perturb + 1, seed as u64 + 17);
            let a = aggregate_maps(&base).unwrap();
            let b = aggregate_maps(&changed).unwrap();
            for (i, m) in base.iter().enumerate() {
                if i == perturb {
                    continue;
                }
                let start = a.channel_offsets[i];
                for c in start..start + m.channels() {
                    prop_assert_eq!(a.data.column(c), b.data.column(c));
                }
            }
            for r in 0..a.pixels() {
                let (x, y) = a.pixel_of(r);
                prop_assert_eq!(a.row_of(x, y), r);
            }
        }
    }
}
