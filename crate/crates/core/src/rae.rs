//! Randomized autoencoders and the end-to-end RADAM descriptor.
//!
//! Each autoencoder treats the pixels of X' as samples: a frozen random
//! projection with a sigmoid gives the hidden activations g, and the decoder
//! is the least-squares map from g back to X'. The decoder weights of m such
//! autoencoders, summed, are the image descriptor.

use nalgebra::DMatrix;

use crate::aggregate::{aggregate_maps, ActivationMap, AggregatedMap};
use crate::error::{Error, Result};
use crate::posenc::{add_pe_in_place, positional_encoding, PositionalEncoding};
use crate::rng::{encoder_weights, EncoderWeights, LcgParams};

/// Below this, `g^T g` for a single hidden neuron is considered singular.
pub const GRAM_EPS: f64 = 1e-12;
/// Relative singular-value cutoff for the multi-neuron pseudo-inverse.
pub const PINV_RCOND: f64 = 1e-10;

pub const DEFAULT_SOUP_SIZE: usize = 4;

#[inline]
fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

/// Hidden activations `sigmoid(X W)`, one row per pixel.
pub fn sigmoid_forward(x: &DMatrix<f64>, w: &EncoderWeights) -> Result<DMatrix<f64>> {
    if x.ncols() != w.inputs() {
        return Err(Error::validation(format!(
            "encoder expects {} inputs, map has {} channels",
            w.inputs(),
            x.ncols()
        )));
    }
    let mut g = x * &w.matrix;
    g.apply(|v| *v = sigmoid(*v));
    Ok(g)
}

/// Decoder weights `f`, `z x q`. For a single hidden neuron this is the
/// vector (nu_1, ..., nu_z).
#[derive(Debug, Clone, PartialEq)]
pub struct DecoderWeights {
    pub matrix: DMatrix<f64>,
}

impl DecoderWeights {
    /// Column-major flattening; for q = 1 simply the z weights.
    pub fn as_slice(&self) -> &[f64] {
        self.matrix.as_slice()
    }

    pub fn len(&self) -> usize {
        self.matrix.len()
    }

    pub fn is_empty(&self) -> bool {
        self.matrix.is_empty()
    }
}

/// Least-squares decoder `argmin_f ||X - g f^T||_F = X^T g (g^T g)^+`.
pub fn fit_decoder(x: &DMatrix<f64>, g: &DMatrix<f64>) -> Result<DecoderWeights> {
    fit_decoder_ridge(x, g, 0.0)
}

/// [`fit_decoder`] with an optional ridge term: `X^T g (g^T g + ridge I)^+`.
pub fn fit_decoder_ridge(x: &DMatrix<f64>, g: &DMatrix<f64>, ridge: f64) -> Result<DecoderWeights> {
    if x.nrows() != g.nrows() {
        return Err(Error::validation(format!(
            "map has {} pixels, hidden activations have {}",
            x.nrows(),
            g.nrows()
        )));
    }
    if !(ridge >= 0.0 && ridge.is_finite()) {
        return Err(Error::validation(format!(
            "ridge must be >= 0, got {ridge}"
        )));
    }
    let xtg = x.tr_mul(g);
    if g.ncols() == 1 {
        let gram = g.column(0).norm_squared() + ridge;
        if gram.is_nan() || gram < GRAM_EPS {
            return Err(Error::degenerate(format!(
                "hidden activations vanish (g^T g = {gram:e})"
            )));
        }
        return Ok(DecoderWeights { matrix: xtg / gram });
    }

    let mut gram = g.tr_mul(g);
    for i in 0..gram.nrows() {
        gram[(i, i)] += ridge;
    }
    let svd = gram.svd(true, true);
    let smax = svd.singular_values.max();
    if smax.is_nan() || smax < GRAM_EPS {
        return Err(Error::degenerate("hidden activations vanish"));
    }
    let pinv = svd
        .pseudo_inverse(PINV_RCOND * smax)
        .map_err(|e| Error::degenerate(e.to_string()))?;
    Ok(DecoderWeights { matrix: xtg * pinv })
}

/// Where a descriptor came from.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Provenance {
    /// Channels contributed by each block, in block order.
    pub block_channels: Vec<usize>,
    /// Spatial size the blocks were resized to.
    pub anchor: (usize, usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    pub phi: Vec<f64>,
    /// Number of autoencoders summed.
    pub m: usize,
    pub provenance: Provenance,
}

/// Elementwise sum of decoder weights, in the given order.
pub fn soup(decoders: &[DecoderWeights]) -> Result<FeatureVector> {
    let first = decoders
        .first()
        .ok_or_else(|| Error::validation("soup needs at least one decoder"))?;
    let mut phi = vec![0.0; first.len()];
    for (k, d) in decoders.iter().enumerate() {
        if d.matrix.shape() != first.matrix.shape() {
            return Err(Error::validation(format!(
                "decoder {k} has shape {:?}, expected {:?}",
                d.matrix.shape(),
                first.matrix.shape()
            )));
        }
        phi.iter_mut().zip(d.as_slice()).for_each(|(p, v)| *p += v);
    }
    Ok(FeatureVector {
        phi,
        m: decoders.len(),
        provenance: Provenance::default(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RadamConfig {
    /// Number of autoencoders in the soup.
    pub m: usize,
    /// Hidden neurons per autoencoder.
    pub q: usize,
    pub lcg: LcgParams,
    pub ridge: f64,
}

impl Default for RadamConfig {
    fn default() -> Self {
        RadamConfig {
            m: DEFAULT_SOUP_SIZE,
            q: 1,
            lcg: LcgParams::ZX81,
            ridge: 0.0,
        }
    }
}

/// RADAM encoder prepared for one anchor grid and channel count.
///
/// The positional encoding table and the m encoder weight matrices depend
/// only on `(w, h, z)` and the config, so they are computed once and shared
/// by every image of a dataset.
#[derive(Debug, Clone)]
pub struct RadamEncoder {
    config: RadamConfig,
    pe: PositionalEncoding,
    weights: Vec<EncoderWeights>,
}

impl RadamEncoder {
    pub fn new(width: usize, height: usize, z: usize, config: RadamConfig) -> Result<Self> {
        if config.m == 0 {
            return Err(Error::validation("soup size m must be at least 1"));
        }
        let pe = positional_encoding(width, height, z)?;
        let weights = encoder_weights(&config.lcg, z, config.q, config.m)?;
        Ok(RadamEncoder {
            config,
            pe,
            weights,
        })
    }

    /// Prepare an encoder matching the shape these maps aggregate to.
    pub fn for_maps(maps: &[ActivationMap], config: RadamConfig) -> Result<Self> {
        let anchor = maps
            .get(crate::aggregate::anchor_index(maps.len()))
            .ok_or_else(|| Error::validation("no activation maps"))?;
        let z = maps.iter().map(|m| m.channels()).sum();
        RadamEncoder::new(anchor.width(), anchor.height(), z, config)
    }

    pub fn config(&self) -> &RadamConfig {
        &self.config
    }

    pub fn weights(&self) -> &[EncoderWeights] {
        &self.weights
    }

    pub fn positional_encoding(&self) -> &PositionalEncoding {
        &self.pe
    }

    /// X' with the positional encoding added.
    pub fn prepare(&self, maps: &[ActivationMap]) -> Result<AggregatedMap> {
        let mut agg = aggregate_maps(maps)?;
        add_pe_in_place(&mut agg, &self.pe)?;
        Ok(agg)
    }

    /// Decoder of every autoencoder, in ascending seed order.
    pub fn decoders(&self, x: &DMatrix<f64>) -> Result<Vec<DecoderWeights>> {
        self.weights
            .iter()
            .map(|w| {
                let g = sigmoid_forward(x, w)?;
                fit_decoder_ridge(x, &g, self.config.ridge)
            })
            .collect()
    }

    pub fn encode(&self, maps: &[ActivationMap]) -> Result<FeatureVector> {
        let agg = self.prepare(maps)?;
        let mut feature = soup(&self.decoders(&agg.data)?)?;
        feature.provenance = Provenance {
            block_channels: maps.iter().map(|m| m.channels()).collect(),
            anchor: (agg.width, agg.height),
        };
        Ok(feature)
    }
}

/// One-shot RADAM descriptor of an image's activation maps (q = 1).
pub fn radam_feature(maps: &[ActivationMap], m: usize, lcg: LcgParams) -> Result<FeatureVector> {
    let config = RadamConfig {
        m,
        lcg,
        ..RadamConfig::default()
    };
    RadamEncoder::for_maps(maps, config)?.encode(maps)
}
