//! Synthetic process generators standing in for proprietary plant data.

use nalgebra::DMatrix;
use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::data::{default_sensors, TimeSeriesFrame};
use crate::error::{Error, Result};

/// Per-sensor coupling of a shared latent driver: sensor j reads
/// `gain_j * d(t - delay_j) + offset_j + noise`.
#[derive(Debug, Clone, PartialEq)]
pub struct CouplingSpec {
    pub gains: Vec<f64>,
    pub offsets: Vec<f64>,
    pub delays: Vec<usize>,
    pub noise_sigmas: Vec<f64>,
    /// Innovation std of the latent walk.
    pub walk_sigma: f64,
    /// Leak factor of the walk; 1.0 is a pure random walk, values just below
    /// 1.0 keep long records range-bounded.
    pub walk_leak: f64,
    pub sine_amplitude: f64,
    pub sine_period: f64,
}

impl CouplingSpec {
    /// Identity coupling for `s` sensors: unit gain, no offset, no delay,
    /// noiseless.
    pub fn identity(s: usize) -> Self {
        Self {
            gains: vec![1.0; s],
            offsets: vec![0.0; s],
            delays: vec![0; s],
            noise_sigmas: vec![0.0; s],
            walk_sigma: 0.05,
            walk_leak: 0.99,
            sine_amplitude: 1.0,
            sine_period: 200.0,
        }
    }

    pub fn sensor_count(&self) -> usize {
        self.gains.len()
    }

    fn validate(&self, t: usize) -> Result<()> {
        let s = self.gains.len();
        if self.offsets.len() != s || self.delays.len() != s || self.noise_sigmas.len() != s {
            return Err(Error::Shape(
                "coupling spec vectors must share one length".into(),
            ));
        }
        if let Some(&bad) = self.delays.iter().find(|&&d| d >= t) {
            return Err(Error::InvalidArgument(format!(
                "sensor delay {bad} >= frame length {t}"
            )));
        }
        if self.sine_period <= 0.0 {
            return Err(Error::InvalidArgument("sine_period must be > 0".into()));
        }
        Ok(())
    }
}

/// Latent driver trace, extended into the past so delayed taps are defined.
#[derive(Debug, Clone)]
pub struct LatentDriver {
    values: Vec<f64>,
    lead: usize,
}

impl LatentDriver {
    /// Driver value at frame time index `t`; negative offsets up to the lead
    /// are valid via `at_delayed`.
    pub fn at(&self, t: usize) -> f64 {
        self.values[self.lead + t]
    }

    pub fn at_delayed(&self, t: usize, delay: usize) -> f64 {
        self.values[self.lead + t - delay]
    }
}

/// Shared-driver generator: a leaky random walk plus a sinusoid drives every
/// channel through per-sensor gain, offset, delay and noise.
pub fn gen_coupled_process(
    seed: u64,
    t: usize,
    spec: &CouplingSpec,
) -> Result<(TimeSeriesFrame, LatentDriver)> {
    if t < 200 {
        return Err(Error::InvalidArgument(format!(
            "coupled process needs T >= 200, got {t}"
        )));
    }
    let s = spec.sensor_count();
    if s < 3 {
        return Err(Error::InvalidArgument(format!(
            "coupled process needs S >= 3, got {s}"
        )));
    }
    spec.validate(t)?;

    let lead = spec.delays.iter().copied().max().unwrap_or(0);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let walk_noise = Normal::new(0.0, 1.0).expect("unit normal");

    let mut driver = Vec::with_capacity(lead + t);
    let mut walk = 0.0;
    for i in 0..lead + t {
        walk = spec.walk_leak * walk + spec.walk_sigma * walk_noise.sample(&mut rng);
        let tau = i as f64 - lead as f64;
        driver.push(walk + spec.sine_amplitude * (2.0 * std::f64::consts::PI * tau / spec.sine_period).sin());
    }
    let driver = LatentDriver {
        values: driver,
        lead,
    };

    let mut values = Array2::zeros((t, s));
    for j in 0..s {
        for i in 0..t {
            let noise = if spec.noise_sigmas[j] > 0.0 {
                spec.noise_sigmas[j] * walk_noise.sample(&mut rng)
            } else {
                0.0
            };
            values[(i, j)] =
                spec.gains[j] * driver.at_delayed(i, spec.delays[j]) + spec.offsets[j] + noise;
        }
    }

    let frame = TimeSeriesFrame::dense(
        (0..t).map(|i| i as f64).collect(),
        values,
        default_sensors(s, -1e12, 1e12),
    )?;
    Ok((frame, driver))
}

/// One lagged edge of the vector-autoregressive generator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VarEdge {
    pub source: usize,
    pub target: usize,
    /// Lag in samples; must be >= 1.
    pub delay: usize,
    pub coef: f64,
}

/// Samples dropped from the start of the VAR trajectory so the zero initial
/// state has washed out.
const VAR_BURN_IN: usize = 200;

/// x_j(t) = sum over incoming edges coef * x_i(t - delay) + rho * x_j(t-1)
/// + N(0, sigma). Rejects coefficient sets whose companion matrix has
/// spectral radius >= 1.
pub fn gen_var_process(
    seed: u64,
    t: usize,
    s: usize,
    edges: &[VarEdge],
    rho: f64,
    noise_sigma: f64,
) -> Result<TimeSeriesFrame> {
    if s == 0 || t == 0 {
        return Err(Error::EmptyInput("VAR process needs T > 0 and S > 0".into()));
    }
    for e in edges {
        if e.source >= s || e.target >= s {
            return Err(Error::Schema(format!(
                "edge {} -> {} references unknown sensor (S = {s})",
                e.source, e.target
            )));
        }
        if e.delay < 1 {
            return Err(Error::InvalidArgument(format!(
                "edge {} -> {} has delay 0; lags must be >= 1",
                e.source, e.target
            )));
        }
    }

    let radius = companion_spectral_radius(s, edges, rho);
    if radius >= 1.0 {
        return Err(Error::Instability(format!(
            "VAR companion spectral radius {radius:.4} >= 1"
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, 1.0).expect("unit normal");

    let total = t + VAR_BURN_IN;
    let mut x = Array2::zeros((total, s));
    for i in 0..total {
        for j in 0..s {
            let mut v = if noise_sigma > 0.0 {
                noise_sigma * noise.sample(&mut rng)
            } else {
                0.0
            };
            if i >= 1 {
                v += rho * x[(i - 1, j)];
            }
            x[(i, j)] = v;
        }
        // Edge contributions applied after the base row so ordering of edge
        // definitions cannot change RNG consumption.
        for e in edges {
            if i >= e.delay {
                x[(i, e.target)] += e.coef * x[(i - e.delay, e.source)];
            }
        }
    }

    let values = x.slice(ndarray::s![VAR_BURN_IN.., ..]).to_owned();
    TimeSeriesFrame::dense(
        (0..t).map(|i| i as f64).collect(),
        values,
        default_sensors(s, -1e12, 1e12),
    )
}

/// Spectral radius of the companion matrix of the VAR defined by `edges`
/// plus a `rho` self-lag at delay 1.
pub fn companion_spectral_radius(s: usize, edges: &[VarEdge], rho: f64) -> f64 {
    let order = edges.iter().map(|e| e.delay).max().unwrap_or(1).max(1);
    let n = s * order;
    let mut companion = DMatrix::zeros(n, n);
    for j in 0..s {
        companion[(j, j)] += rho;
    }
    for e in edges {
        companion[(e.target, (e.delay - 1) * s + e.source)] += e.coef;
    }
    for block in 1..order {
        for j in 0..s {
            companion[(block * s + j, (block - 1) * s + j)] = 1.0;
        }
    }
    // The Schur iteration behind complex_eigenvalues spins forever on an
    // all-zero matrix; that case is trivially radius 0.
    if companion.iter().all(|&v| v == 0.0) {
        return 0.0;
    }
    companion
        .complex_eigenvalues()
        .iter()
        .map(|c| c.norm())
        .fold(0.0, f64::max)
}
