//! Invariant checks runnable from the command line.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use radam_core::aggregate::{normalize_channels, ActivationMap};
use radam_core::posenc::positional_encoding;
use radam_core::rae::{fit_decoder, sigmoid_forward, soup, RadamConfig, RadamEncoder};
use radam_core::rng::{encoder_weights, lcg_sequence, standardize, LcgParams};
use radam_core::tensorio::Tensor;

const EXPECTED_LCG: [u64; 3] = [74, 5624, 28652];
const SEED: u64 = 0x5eed;

/// Deliberate defects for checking that the suite catches them.
#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Fault {
    /// Use a = 76 instead of 75.
    LcgMultiplier,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub module: &'static str,
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelftestReport {
    pub checks: Vec<Check>,
}

impl SelftestReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.passed)
    }
}

impl std::fmt::Display for SelftestReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        for c in &self.checks {
            let status = if c.passed { "PASS" } else { "FAIL" };
            writeln!(f, "{status}  {:<9} {:<26} {}", c.module, c.name, c.detail)?;
        }
        let failed = self.failures().count();
        write!(f, "{} checks, {failed} failed", self.checks.len())
    }
}

fn check(module: &'static str, name: &'static str, passed: bool, detail: String) -> Check {
    Check {
        module,
        name,
        passed,
        detail,
    }
}

fn lcg_params(fault: Option<Fault>) -> LcgParams {
    match fault {
        Some(Fault::LcgMultiplier) => LcgParams::new(76, 74, 65537, 0).expect("valid constants"),
        None => LcgParams::ZX81,
    }
}

fn lcg_values(params: &LcgParams) -> Check {
    let got = lcg_sequence(params, 3);
    check(
        "rng",
        "lcg_first_states",
        got == EXPECTED_LCG,
        format!("got {got:?}, expected {EXPECTED_LCG:?}"),
    )
}

fn orthonormality(params: &LcgParams) -> Check {
    let shapes = [
        (8, 1, 4),
        (64, 4, 3),
        (96, 8, 2),
        (1440, 1, 4),
        (480, 16, 2),
    ];
    let mut worst = 0.0f64;
    for &(z, q, m) in &shapes {
        match encoder_weights(params, z, q, m) {
            Ok(ws) => {
                for w in ws {
                    let gram = w.matrix.tr_mul(&w.matrix) - DMatrix::<f64>::identity(q, q);
                    worst = worst.max(gram.amax());
                }
            }
            Err(e) => return check("rng", "encoder_orthonormality", false, e.to_string()),
        }
    }
    check(
        "rng",
        "encoder_orthonormality",
        worst <= 1e-6,
        format!("max |W^T W - I| = {worst:.2e} (limit 1e-6)"),
    )
}

fn standardization(params: &LcgParams) -> Check {
    let raw: Vec<f64> = lcg_sequence(params, 257)
        .into_iter()
        .map(|x| x as f64)
        .collect();
    match standardize(&raw) {
        Ok(v) => {
            let n = v.len() as f64;
            let mean = v.iter().sum::<f64>() / n;
            let sd = (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt();
            check(
                "rng",
                "standardize",
                mean.abs() <= 1e-9 && (sd - 1.0).abs() <= 1e-9,
                format!("mean {mean:.1e}, std - 1 = {:.1e}", sd - 1.0),
            )
        }
        Err(e) => check("rng", "standardize", false, e.to_string()),
    }
}

fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
}

fn least_squares(params: &LcgParams, rng: &mut ChaCha8Rng) -> Check {
    let (wh, z) = (196, 32);
    let x = random_matrix(rng, wh, z);
    let run = || -> radam_core::Result<(f64, usize)> {
        let w = &encoder_weights(params, z, 1, 1)?[0];
        let g = sigmoid_forward(&x, w)?;
        let f = fit_decoder(&x, &g)?.matrix;
        let xtg = x.tr_mul(&g);
        let residual = (&xtg - &f * g.tr_mul(&g)).norm() / xtg.norm();
        let loss = |f: &DMatrix<f64>| (&x - &g * f.transpose()).norm();
        let base = loss(&f);
        let mut rng = ChaCha8Rng::seed_from_u64(SEED + 1);
        let worse = (0..50)
            .filter(|_| {
                let mut p = random_matrix(&mut rng, z, 1);
                p *= 1e-3 / p.norm();
                loss(&(&f + p)) >= base
            })
            .count();
        Ok((residual, worse))
    };
    match run() {
        Ok((residual, worse)) => check(
            "rae",
            "least_squares_optimality",
            residual <= 1e-6 && worse == 50,
            format!("relative residual {residual:.1e}, {worse}/50 perturbations no better"),
        ),
        Err(e) => check("rae", "least_squares_optimality", false, e.to_string()),
    }
}

fn soup_prefix(params: &LcgParams, rng: &mut ChaCha8Rng) -> Check {
    let (wh, z, m) = (49, 16, 6);
    let x = random_matrix(rng, wh, z);
    let run = || -> radam_core::Result<f64> {
        let config = RadamConfig {
            m,
            lcg: *params,
            ..RadamConfig::default()
        };
        let decoders = RadamEncoder::new(7, 7, z, config)?.decoders(&x)?;
        let mut worst = 0.0f64;
        for k in 2..=m {
            let hi = soup(&decoders[..k])?.phi;
            let lo = soup(&decoders[..k - 1])?.phi;
            for ((h, l), d) in hi.iter().zip(&lo).zip(decoders[k - 1].as_slice()) {
                worst = worst.max((h - l - d).abs());
            }
        }
        Ok(worst)
    };
    match run() {
        Ok(worst) => check(
            "rae",
            "soup_prefix",
            worst <= 1e-9,
            format!("max |phi_k - phi_(k-1) - f_k| = {worst:.1e} for k = 2..{m}"),
        ),
        Err(e) => check("rae", "soup_prefix", false, e.to_string()),
    }
}

fn pe_bounds() -> Check {
    let (w, h, z) = (7, 5, 64);
    let pe = match positional_encoding(w, h, z) {
        Ok(pe) => pe,
        Err(e) => return check("posenc", "bounds_and_structure", false, e.to_string()),
    };
    let bounded = pe.table.amax() <= 1.0;
    let structured = (0..w * h).all(|r| {
        let (x, y) = (r % w, r / w);
        (0..z / 2).all(|c| {
            pe.table[(r, c)] == pe.table[(x, c)]
                && pe.table[(r, z / 2 + c)] == pe.table[(y * w, z / 2 + c)]
        })
    });
    check(
        "posenc",
        "bounds_and_structure",
        bounded && structured,
        format!(
            "max |PE| = {:.3}, row structure {}",
            pe.table.amax(),
            if structured { "ok" } else { "broken" }
        ),
    )
}

fn channel_norms(rng: &mut ChaCha8Rng) -> Check {
    let (w, h, z) = (6, 4, 5);
    let mut data: Vec<f64> = (0..w * h * z)
        .map(|_| rng.random_range(-2.0..2.0))
        .collect();
    data[..w * h].fill(0.0);
    let run = || -> radam_core::Result<f64> {
        let map = normalize_channels(&ActivationMap::new(w, h, z, data.clone(), 0)?);
        let mut worst = 0.0f64;
        for c in 0..z {
            let n = map.channel(c).iter().map(|v| v * v).sum::<f64>().sqrt();
            worst = worst.max(n.min((n - 1.0).abs()));
        }
        Ok(worst)
    };
    match run() {
        Ok(worst) => check(
            "aggregate",
            "channel_norms",
            worst <= 1e-6,
            format!("max distance of channel norms from {{0, 1}} = {worst:.1e}"),
        ),
        Err(e) => check("aggregate", "channel_norms", false, e.to_string()),
    }
}

fn radt_round_trip(rng: &mut ChaCha8Rng) -> Check {
    let data: Vec<f32> = (0..2 * 3 * 4)
        .map(|_| rng.random_range(-1e3..1e3))
        .collect();
    let run = || -> radam_core::Result<bool> {
        let t = Tensor::new(vec![2, 3, 4], data.clone())?;
        let back = Tensor::from_bytes(&t.to_bytes()?)?;
        Ok(back == t
            && back
                .data()
                .iter()
                .zip(&data)
                .all(|(a, b)| a.to_bits() == b.to_bits()))
    };
    match run() {
        Ok(ok) => check(
            "tensorio",
            "radt_round_trip",
            ok,
            if ok {
                "bitwise identical".into()
            } else {
                "payload differs".into()
            },
        ),
        Err(e) => check("tensorio", "radt_round_trip", false, e.to_string()),
    }
}

pub fn cmd_selftest(fault: Option<Fault>) -> SelftestReport {
    let params = lcg_params(fault);
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    SelftestReport {
        checks: vec![
            lcg_values(&params),
            orthonormality(&params),
            standardization(&params),
            least_squares(&params, &mut rng),
            soup_prefix(&params, &mut rng),
            pe_bounds(),
            channel_norms(&mut rng),
            radt_round_trip(&mut rng),
        ],
    }
}
