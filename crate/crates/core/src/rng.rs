//! Deterministic encoder weights drawn from a linear congruential generator.
//!
//! All m encoders share one LCG stream of `m * z * q` states. Encoder k takes
//! the k-th contiguous chunk, reshaped column-major to `z x q`, standardizes
//! each column (zero mean, unit population variance) and orthonormalizes the
//! columns. Growing m therefore never changes the weights of earlier encoders.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Parameters of `x_{k+1} = (a * x_k + b) mod c`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct LcgParams {
    a: u64,
    b: u64,
    c: u64,
    x0: u64,
}

impl LcgParams {
    /// ZX81 constants: a = 75, b = 74, c = 2^16 + 1, starting from 0.
    pub const ZX81: LcgParams = LcgParams {
        a: 75,
        b: 74,
        c: 65537,
        x0: 0,
    };

    pub fn new(a: u64, b: u64, c: u64, x0: u64) -> Result<Self> {
        if c <= 1 {
            return Err(Error::validation(format!(
                "LCG modulus must exceed 1, got {c}"
            )));
        }
        if a >= c || b >= c || x0 >= c {
            return Err(Error::validation(format!(
                "LCG a={a}, b={b}, x0={x0} must all be below the modulus {c}"
            )));
        }
        Ok(LcgParams { a, b, c, x0 })
    }

    pub fn a(&self) -> u64 {
        self.a
    }

    pub fn b(&self) -> u64 {
        self.b
    }

    pub fn c(&self) -> u64 {
        self.c
    }

    pub fn x0(&self) -> u64 {
        self.x0
    }

    /// Same generator, started `offset` states further into the stream.
    pub fn advanced(&self, offset: u64) -> LcgParams {
        let mut lcg = Lcg::new(*self);
        let mut x0 = self.x0;
        for _ in 0..offset {
            x0 = lcg.next_state();
        }
        LcgParams { x0, ..*self }
    }
}

impl Default for LcgParams {
    fn default() -> Self {
        LcgParams::ZX81
    }
}

/// Iterator over successor states; the initial state is never yielded.
#[derive(Debug, Clone)]
pub struct Lcg {
    params: LcgParams,
    state: u64,
}

impl Lcg {
    pub fn new(params: LcgParams) -> Self {
        Lcg {
            state: params.x0,
            params,
        }
    }

    fn next_state(&mut self) -> u64 {
        let p = &self.params;
        let next = (p.a as u128 * self.state as u128 + p.b as u128) % p.c as u128;
        self.state = next as u64;
        self.state
    }
}

impl Iterator for Lcg {
    type Item = u64;

    fn next(&mut self) -> Option<u64> {
        Some(self.next_state())
    }
}

/// The first `count` successor states after `x0`.
pub fn lcg_sequence(params: &LcgParams, count: usize) -> Vec<u64> {
    Lcg::new(*params).take(count).collect()
}

/// Shift to zero mean and scale to unit population standard deviation.
pub fn standardize(v: &[f64]) -> Result<Vec<f64>> {
    if v.len() < 2 {
        return Err(Error::degenerate(format!(
            "standardization needs at least 2 values, got {}",
            v.len()
        )));
    }
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    let std = var.sqrt();
    if !(std > 0.0 && std.is_finite()) || std <= f64::EPSILON * mean.abs() {
        return Err(Error::degenerate("zero variance"));
    }
    Ok(v.iter().map(|x| (x - mean) / std).collect())
}

/// Orthonormalize the columns of a `z x q` matrix, `z >= q`.
///
/// For q = 1 this is scaling to unit Euclidean norm. Otherwise it is the Q
/// factor of a reduced QR decomposition with column signs chosen so that the
/// diagonal of R is nonnegative, which makes the result unique.
pub fn orthogonalize(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let (z, q) = m.shape();
    if q == 0 || z < q {
        return Err(Error::validation(format!(
            "orthogonalize needs rows >= cols >= 1, got {z}x{q}"
        )));
    }
    if q == 1 {
        let norm = m.norm();
        if !(norm > 0.0 && norm.is_finite()) {
            return Err(Error::degenerate("zero column cannot be normalized"));
        }
        return Ok(m / norm);
    }

    let qr = m.clone().qr();
    let r = qr.r();
    let mut basis = qr.q();
    let scale = (0..q).map(|i| r[(i, i)].abs()).fold(0.0, f64::max);
    for i in 0..q {
        let d = r[(i, i)];
        if d.is_nan() || d.abs() <= 1e-10 * scale {
            return Err(Error::degenerate(format!(
                "matrix is rank deficient (column {i})"
            )));
        }
        if d < 0.0 {
            basis.column_mut(i).neg_mut();
        }
    }
    Ok(basis)
}

/// Random projection of one randomized autoencoder.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderWeights {
    /// `z x q`, orthonormal columns.
    pub matrix: DMatrix<f64>,
    /// Zero-based index of the encoder within the soup.
    pub seed_index: usize,
}

impl EncoderWeights {
    pub fn inputs(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn hidden(&self) -> usize {
        self.matrix.ncols()
    }
}

/// Weights for `m` encoders of shape `z x q` from a single LCG stream.
pub fn encoder_weights(
    params: &LcgParams,
    z: usize,
    q: usize,
    m: usize,
) -> Result<Vec<EncoderWeights>> {
    if z == 0 || q == 0 || m == 0 {
        return Err(Error::validation(format!(
            "encoder shape must be positive, got z={z}, q={q}, m={m}"
        )));
    }
    if z < q {
        return Err(Error::validation(format!(
            "encoder needs z >= q, got z={z}, q={q}"
        )));
    }
    let mut stream = Lcg::new(*params);
    (0..m)
        .map(|k| {
            let mut columns = Vec::with_capacity(z * q);
            for _ in 0..q {
                let raw: Vec<f64> = stream.by_ref().take(z).map(|x| x as f64).collect();
                let col = standardize(&raw).map_err(|e| match e {
                    Error::Degenerate(msg) => {
                        Error::degenerate(format!("encoder {k}: LCG chunk {msg}"))
                    }
                    other => other,
                })?;
                columns.extend(col);
            }
            let matrix = orthogonalize(&DMatrix::from_vec(z, q, columns))?;
            Ok(EncoderWeights {
                matrix,
                seed_index: k,
            })
        })
        .collect()
}
