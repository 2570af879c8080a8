//! Discrete volatility-uncertainty sets and seeded Brownian increments.
//!
//! Volatility `[σ_lower, σ_upper]` is replaced by `m` equally spaced levels.
//! For level `k` and sample `j`, the increments `ζ[k][j][i]` are independent
//! `N(0, (σ_k)² Δ)` draws. Each `(k, j)` stream is a ChaCha8 generator keyed
//! by a splitmix64 hash of `(seed, k, j)`; normals come from the ziggurat
//! sampler of `rand_distr::StandardNormal`. Streams do not depend on each
//! other, so generation order and thread count never change the output.

use std::io::{self, Read, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use thiserror::Error;

use crate::model::VolatilityBounds;

/// Tolerance used when deciding that a delay is an integer number of steps.
pub const ALIGNMENT_TOLERANCE: f64 = 1e-9;

/// Upper limit on the step count search of [`TimeGrid::aligned_to_delay`].
const MAX_ALIGNMENT_FACTOR: usize = 1000;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ScenarioError {
    #[error("time grid needs a positive finite horizon and at least one step (T = {horizon}, N = {steps})")]
    InvalidTimeGrid { horizon: f64, steps: usize },
    #[error("volatility grid needs at least one level")]
    ZeroLevels,
    #[error("a single volatility level needs sigma_lower == sigma_upper")]
    DegenerateGridRequest,
    #[error("need at least one sample per level")]
    ZeroSamples,
    #[error("volatility level index {index} out of range (m = {levels})")]
    IndexOutOfRange { index: usize, levels: usize },
    #[error("no step count in [{steps}, {limit}] makes tau = {tau} a multiple of the step on [0, {horizon}]")]
    CannotAlign {
        horizon: f64,
        steps: usize,
        limit: usize,
        tau: f64,
    },
    #[error("ensemble dump: {0}")]
    Dump(String),
}

/// Uniform grid `t_i = i Δ`, `i = 0..=N`, `Δ = T / N`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    horizon: f64,
    steps: usize,
}

impl TimeGrid {
    pub fn new(horizon: f64, steps: usize) -> Result<Self, ScenarioError> {
        if !(horizon > 0.0 && horizon.is_finite()) || steps == 0 {
            return Err(ScenarioError::InvalidTimeGrid { horizon, steps });
        }
        Ok(TimeGrid { horizon, steps })
    }

    /// Smallest grid with at least `steps` steps on which `tau` is a whole
    /// number of steps. The flag reports whether `steps` had to grow.
    pub fn aligned_to_delay(
        horizon: f64,
        steps: usize,
        tau: f64,
    ) -> Result<(TimeGrid, bool), ScenarioError> {
        let limit = steps.saturating_mul(MAX_ALIGNMENT_FACTOR);
        for n in steps..=limit {
            let grid = TimeGrid::new(horizon, n)?;
            if grid.steps_for(tau).is_some() {
                return Ok((grid, n != steps));
            }
        }
        Err(ScenarioError::CannotAlign {
            horizon,
            steps,
            limit,
            tau,
        })
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn dt(&self) -> f64 {
        self.horizon / self.steps as f64
    }

    pub fn time(&self, i: usize) -> f64 {
        i as f64 * self.dt()
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        (0..=self.steps).map(|i| self.time(i))
    }

    /// `Some(r)` when `span = r Δ` for a whole number `r ≥ 0`.
    pub fn steps_for(&self, span: f64) -> Option<usize> {
        let r = span / self.dt();
        let nearest = r.round();
        if r >= -ALIGNMENT_TOLERANCE
            && (r - nearest).abs() <= ALIGNMENT_TOLERANCE * r.abs().max(1.0)
        {
            Some(nearest.max(0.0) as usize)
        } else {
            None
        }
    }
}

/// Equally spaced volatility levels (standard deviations) from `σ_lower` to
/// `σ_upper`.
#[derive(Debug, Clone, PartialEq)]
pub struct VolatilityGrid {
    levels: Vec<f64>,
}

impl VolatilityGrid {
    pub fn levels(&self) -> &[f64] {
        &self.levels
    }

    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }

    pub fn level(&self, k: usize) -> Result<f64, ScenarioError> {
        self.levels
            .get(k)
            .copied()
            .ok_or(ScenarioError::IndexOutOfRange {
                index: k,
                levels: self.levels.len(),
            })
    }
}

/// `σ_k = σ_lower + k (σ_upper - σ_lower) / (m - 1)`, `k = 0..m`, where the
/// bounds are the square roots of the configured variances.
pub fn build_volatility_grid(
    vol: &VolatilityBounds,
    m: usize,
) -> Result<VolatilityGrid, ScenarioError> {
    let (lo, hi) = (vol.sigma_lower(), vol.sigma_upper());
    let levels = match m {
        0 => return Err(ScenarioError::ZeroLevels),
        1 if lo != hi => return Err(ScenarioError::DegenerateGridRequest),
        1 => vec![lo],
        _ => {
            let step = (hi - lo) / (m - 1) as f64;
            let mut levels: Vec<f64> = (0..m).map(|k| lo + k as f64 * step).collect();
            // Pin the top level to σ_upper exactly.
            levels[m - 1] = hi;
            levels
        }
    };
    Ok(VolatilityGrid { levels })
}

/// Quadratic-variation increment `(σ_k)² Δ` of scenario level `k`.
pub fn qv_increment(grid: &VolatilityGrid, k: usize, dt: f64) -> Result<f64, ScenarioError> {
    let sigma = grid.level(k)?;
    Ok(sigma * sigma * dt)
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Independent generator for scenario `(k, j)` under `seed`.
pub fn stream_rng(seed: u64, k: usize, j: usize) -> ChaCha8Rng {
    let mut state = splitmix64(seed);
    state = splitmix64(state ^ k as u64);
    state = splitmix64(state ^ (j as u64).rotate_left(32));
    let mut key = [0u8; 32];
    for chunk in key.chunks_exact_mut(8) {
        state = splitmix64(state);
        chunk.copy_from_slice(&state.to_le_bytes());
    }
    ChaCha8Rng::from_seed(key)
}

/// Seeded `m × n × N` array of Brownian increments.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioEnsemble {
    vol_grid: VolatilityGrid,
    samples: usize,
    time: TimeGrid,
    seed: u64,
    increments: Vec<f64>,
}

impl ScenarioEnsemble {
    pub fn vol_grid(&self) -> &VolatilityGrid {
        &self.vol_grid
    }

    /// Number of levels `m`.
    pub fn levels(&self) -> usize {
        self.vol_grid.len()
    }

    /// Samples per level `n`.
    pub fn samples(&self) -> usize {
        self.samples
    }

    pub fn time(&self) -> &TimeGrid {
        &self.time
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// `(m, n, N)`.
    pub fn shape(&self) -> (usize, usize, usize) {
        (self.levels(), self.samples, self.time.steps())
    }

    /// Increments `ζ[k][j][1..=N]` of one scenario path.
    pub fn path_increments(&self, k: usize, j: usize) -> &[f64] {
        let steps = self.time.steps();
        let start = (k * self.samples + j) * steps;
        &self.increments[start..start + steps]
    }

    /// All increments in `(k, j, i)` row-major order.
    pub fn increments(&self) -> &[f64] {
        &self.increments
    }

    pub fn qv_increment(&self, k: usize) -> Result<f64, ScenarioError> {
        qv_increment(&self.vol_grid, k, self.time.dt())
    }

    /// Writes the binary dump: magic `GSDE`, version `u32`, `m`, `n`, `N` as
    /// `u64`, `Δ` as `f64`, seed `u64`, then the increments as `f64`, all
    /// little-endian.
    pub fn write_dump<W: Write>(&self, mut out: W) -> io::Result<()> {
        let (m, n, steps) = self.shape();
        out.write_all(DUMP_MAGIC)?;
        out.write_all(&DUMP_VERSION.to_le_bytes())?;
        for dim in [m, n, steps] {
            out.write_all(&(dim as u64).to_le_bytes())?;
        }
        out.write_all(&self.time.dt().to_le_bytes())?;
        out.write_all(&self.seed.to_le_bytes())?;
        for v in &self.increments {
            out.write_all(&v.to_le_bytes())?;
        }
        out.flush()
    }
}

pub const DUMP_MAGIC: &[u8; 4] = b"GSDE";
pub const DUMP_VERSION: u32 = 1;

/// Contents of an ensemble dump.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleDump {
    pub levels: usize,
    pub samples: usize,
    pub steps: usize,
    pub dt: f64,
    pub seed: u64,
    pub increments: Vec<f64>,
}

impl EnsembleDump {
    pub fn read<R: Read>(mut input: R) -> Result<Self, ScenarioError> {
        let io_err = |e: io::Error| ScenarioError::Dump(e.to_string());
        let mut magic = [0u8; 4];
        input.read_exact(&mut magic).map_err(io_err)?;
        if &magic != DUMP_MAGIC {
            return Err(ScenarioError::Dump("bad magic".into()));
        }
        let mut b4 = [0u8; 4];
        input.read_exact(&mut b4).map_err(io_err)?;
        let version = u32::from_le_bytes(b4);
        if version != DUMP_VERSION {
            return Err(ScenarioError::Dump(format!(
                "unsupported version {version}"
            )));
        }
        let mut b8 = [0u8; 8];
        let mut next = |input: &mut R| -> Result<[u8; 8], ScenarioError> {
            input.read_exact(&mut b8).map_err(io_err)?;
            Ok(b8)
        };
        let levels = u64::from_le_bytes(next(&mut input)?) as usize;
        let samples = u64::from_le_bytes(next(&mut input)?) as usize;
        let steps = u64::from_le_bytes(next(&mut input)?) as usize;
        let dt = f64::from_le_bytes(next(&mut input)?);
        let seed = u64::from_le_bytes(next(&mut input)?);
        let count = levels
            .checked_mul(samples)
            .and_then(|c| c.checked_mul(steps))
            .ok_or_else(|| ScenarioError::Dump("dimensions overflow".into()))?;
        let mut increments = Vec::with_capacity(count);
        for _ in 0..count {
            increments.push(f64::from_le_bytes(next(&mut input)?));
        }
        Ok(EnsembleDump {
            levels,
            samples,
            steps,
            dt,
            seed,
            increments,
        })
    }
}

/// Draws every `ζ[k][j][i] ~ N(0, (σ_k)² Δ)`.
pub fn generate_ensemble(
    grid: &VolatilityGrid,
    samples: usize,
    time: &TimeGrid,
    seed: u64,
) -> Result<ScenarioEnsemble, ScenarioError> {
    if grid.is_empty() {
        return Err(ScenarioError::ZeroLevels);
    }
    if samples == 0 {
        return Err(ScenarioError::ZeroSamples);
    }
    let steps = time.steps();
    let sqrt_dt = time.dt().sqrt();
    let mut increments = vec![0.0; grid.len() * samples * steps];
    increments
        .par_chunks_mut(steps)
        .enumerate()
        .for_each(|(path, chunk)| {
            let (k, j) = (path / samples, path % samples);
            let scale = grid.levels[k] * sqrt_dt;
            let mut rng = stream_rng(seed, k, j);
            for z in chunk.iter_mut() {
                let normal: f64 = rng.sample(StandardNormal);
                *z = scale * normal;
            }
        });
    Ok(ScenarioEnsemble {
        vol_grid: grid.clone(),
        samples,
        time: *time,
        seed,
        increments,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn example_vol() -> VolatilityBounds {
        VolatilityBounds::new(0.5, 1.0).unwrap()
    }

    #[test]
    fn two_level_grid_hits_both_bounds() {
        let g = build_volatility_grid(&example_vol(), 2).unwrap();
        assert_abs_diff_eq!(g.levels()[0], 0.5f64.sqrt(), epsilon = 1e-15);
        assert_eq!(g.levels()[1], 1.0);
    }

    #[test]
    fn three_level_grid_midpoint() {
        let g = build_volatility_grid(&example_vol(), 3).unwrap();
        assert_abs_diff_eq!(g.levels()[1], 0.853_553_390_593_273_7, epsilon = 1e-15);
    }

    #[test]
    fn degenerate_grids() {
        let unit = VolatilityBounds::new(1.0, 1.0).unwrap();
        assert_eq!(build_volatility_grid(&unit, 1).unwrap().levels(), &[1.0]);
        assert_eq!(build_volatility_grid(&unit, 3).unwrap().levels(), &[1.0; 3]);
        assert_eq!(
            build_volatility_grid(&example_vol(), 1).unwrap_err(),
            ScenarioError::DegenerateGridRequest
        );
        assert_eq!(
            build_volatility_grid(&example_vol(), 0).unwrap_err(),
            ScenarioError::ZeroLevels
        );
    }

    #[test]
    fn qv_increment_examples() {
        let unit = build_volatility_grid(&VolatilityBounds::new(1.0, 1.0).unwrap(), 1).unwrap();
        assert_eq!(qv_increment(&unit, 0, 0.001).unwrap(), 0.001);
        let g = build_volatility_grid(&example_vol(), 2).unwrap();
        assert_abs_diff_eq!(qv_increment(&g, 0, 0.001).unwrap(), 0.0005, epsilon = 1e-18);
        assert!(matches!(
            qv_increment(&g, 2, 0.001),
            Err(ScenarioError::IndexOutOfRange {
                index: 2,
                levels: 2
            })
        ));
    }

    proptest! {
        #[test]
        fn grid_is_monotone_with_fixed_endpoints(lo in 0.01f64..4.0, width in 0.0f64..4.0, m in 2usize..40) {
            let vol = VolatilityBounds::new(lo, lo + width).unwrap();
            let g = build_volatility_grid(&vol, m).unwrap();
            prop_assert_eq!(g.len(), m);
            prop_assert_eq!(g.levels()[0], vol.sigma_lower());
            prop_assert_eq!(g.levels()[m - 1], vol.sigma_upper());
            if width > 0.0 {
                prop_assert!(g.levels().windows(2).all(|w| w[0] < w[1]));
            }
            let dt = 1e-3;
            for k in 0..m {
                let q = qv_increment(&g, k, dt).unwrap();
                prop_assert!(q <= vol.sigma_upper_sq * dt * (1.0 + 1e-12));
                prop_assert!(q >= vol.sigma_lower_sq * dt * (1.0 - 1e-12));
            }
            // Refining keeps the same extreme levels.
            let finer = build_volatility_grid(&vol, 2 * m + 1).unwrap();
            prop_assert_eq!(finer.levels()[0], g.levels()[0]);
            prop_assert_eq!(finer.levels()[2 * m], g.levels()[m - 1]);
        }
    }

    #[test]
    fn ensemble_shape() {
        let g = build_volatility_grid(&example_vol(), 5).unwrap();
        let time = TimeGrid::new(1.0, 1000).unwrap();
        let e = generate_ensemble(&g, 20, &time, 7).unwrap();
        assert_eq!(e.shape(), (5, 20, 1000));
        assert_eq!(e.increments().len(), 5 * 20 * 1000);
        assert_eq!(e.path_increments(4, 19).len(), 1000);
    }

    #[test]
    fn unit_variance_statistics() {
        let g = build_volatility_grid(&VolatilityBounds::new(1.0, 1.0).unwrap(), 1).unwrap();
        let time = TimeGrid::new(1.0, 1000).unwrap();
        let e = generate_ensemble(&g, 1000, &time, 2024).unwrap();
        let xs = e.increments();
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let var = xs.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
        assert!((0.00097..=0.00103).contains(&var), "variance {var}");
    }

    #[test]
    fn regeneration_is_bit_identical_and_order_free() {
        let g = build_volatility_grid(&example_vol(), 3).unwrap();
        let time = TimeGrid::new(2.0, 200).unwrap();
        let a = generate_ensemble(&g, 4, &time, 99).unwrap();
        let b = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap()
            .install(|| generate_ensemble(&g, 4, &time, 99).unwrap());
        assert_eq!(a, b);
        // Stream (k, j) does not depend on how many samples were requested.
        let wider = generate_ensemble(&g, 9, &time, 99).unwrap();
        assert_eq!(a.path_increments(2, 3), wider.path_increments(2, 3));
        let other = generate_ensemble(&g, 4, &time, 100).unwrap();
        assert_ne!(a.increments(), other.increments());
    }

    #[test]
    fn increment_sum_second_moment_respects_upper_variance() {
        // E|∫ dB|² over [0, T] is at most σ_upper² T for every level.
        let vol = example_vol();
        let g = build_volatility_grid(&vol, 5).unwrap();
        let time = TimeGrid::new(1.0, 100).unwrap();
        let samples = 4000;
        let e = generate_ensemble(&g, samples, &time, 5).unwrap();
        for k in 0..g.len() {
            let squares: Vec<f64> = (0..samples)
                .map(|j| e.path_increments(k, j).iter().sum::<f64>().powi(2))
                .collect();
            let n = samples as f64;
            let mean = squares.iter().sum::<f64>() / n;
            let sd = (squares.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
            assert!(
                mean <= vol.sigma_upper_sq * time.horizon() + 3.0 * sd / n.sqrt(),
                "level {k}: {mean}"
            );
        }
    }

    #[test]
    fn dump_round_trip() {
        let g = build_volatility_grid(&example_vol(), 2).unwrap();
        let time = TimeGrid::new(1.0, 10).unwrap();
        let e = generate_ensemble(&g, 3, &time, 11).unwrap();
        let mut buf = Vec::new();
        e.write_dump(&mut buf).unwrap();
        assert_eq!(&buf[..4], b"GSDE");
        assert_eq!(buf.len(), 4 + 4 + 5 * 8 + 60 * 8);
        let back = EnsembleDump::read(buf.as_slice()).unwrap();
        assert_eq!(
            (back.levels, back.samples, back.steps, back.seed),
            (2, 3, 10, 11)
        );
        assert_eq!(back.dt, 0.1);
        assert_eq!(back.increments, e.increments());
        assert!(EnsembleDump::read(&b"GSDX"[..]).is_err());
    }

    #[test]
    fn delay_alignment() {
        let g = TimeGrid::new(20.0, 20_000).unwrap();
        assert_eq!(g.steps_for(0.01), Some(10));
        assert_eq!(g.steps_for(0.08), Some(80));
        assert_eq!(g.steps_for(2.0), Some(2000));
        assert_eq!(g.steps_for(0.0105), None);
        let (aligned, adjusted) = TimeGrid::aligned_to_delay(1.0, 1000, 0.0125).unwrap();
        assert!(adjusted);
        assert_eq!(aligned.steps(), 1040);
        let (same, adjusted) = TimeGrid::aligned_to_delay(20.0, 20_000, 0.08).unwrap();
        assert!(!adjusted);
        assert_eq!(same, g);
    }
}
