//! Monte Carlo unravelings: normalized quantum trajectories, the linear
//! (reference-measure) SDE, empirical tails and their comparison with bounds.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{Beta, ContinuousCDF};

use crate::deviation::{BoundReport, MeasurementSetup};
use crate::error::{Error, Result};
use crate::lindblad::GeneratorContext;
use crate::spectral::{eigh_unchecked, identity, op_norm, trace_norm, CMatrix, DensityOperator, SuperOperator};

pub const CONFIDENCE: f64 = 0.99;
/// Jump intensities below this make the post-jump normalization meaningless.
pub const MIN_JUMP_INTENSITY: f64 = 1e-14;
const MAX_RESAMPLES: u32 = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    #[default]
    EulerMaruyama,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryConfig {
    pub dt: f64,
    pub t_max: f64,
    pub n_paths: usize,
    pub base_seed: u64,
    #[serde(default)]
    pub scheme: Scheme,
    #[serde(default = "default_clip")]
    pub positivity_clip: f64,
    /// Keep the state at each checkpoint (needed for mean-state diagnostics).
    #[serde(default)]
    pub store_states: bool,
}

fn default_clip() -> f64 {
    1e-10
}

impl TrajectoryConfig {
    pub fn new(dt: f64, t_max: f64, n_paths: usize, base_seed: u64) -> Self {
        Self {
            dt,
            t_max,
            n_paths,
            base_seed,
            scheme: Scheme::EulerMaruyama,
            positivity_clip: default_clip(),
            store_states: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::InvalidInput(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.t_max >= self.dt && self.t_max.is_finite()) {
            return Err(Error::InvalidInput(format!("t_max = {} is below dt = {}", self.t_max, self.dt)));
        }
        if self.n_paths == 0 {
            return Err(Error::InvalidInput("n_paths must be positive".into()));
        }
        if !(self.positivity_clip >= 0.0) {
            return Err(Error::InvalidInput("positivity_clip must be nonnegative".into()));
        }
        Ok(())
    }

    pub fn n_steps(&self) -> usize {
        (self.t_max / self.dt).round() as usize
    }

    /// dt times an upper estimate of the total jump intensity, when it
    /// exceeds the 0.1 warning threshold.
    pub fn intensity_warning(&self, setup: &MeasurementSetup) -> Option<f64> {
        let total: f64 = setup.channels().iter().map(|l| op_norm(l).powi(2)).sum();
        let x = self.dt * total;
        (x >= 0.1).then_some(x)
    }

    /// Step indices of the requested checkpoint times (rounded to the grid).
    pub fn checkpoint_steps(&self, checkpoints: &[f64]) -> Result<Vec<usize>> {
        let n = self.n_steps();
        checkpoints
            .iter()
            .map(|&t| {
                let k = (t / self.dt).round();
                if !(k >= 1.0) || k as usize > n {
                    return Err(Error::InvalidInput(format!("checkpoint {t} is outside (0, {}]", self.t_max)));
                }
                Ok(k as usize)
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PathRecord {
    pub path_index: usize,
    /// Checkpoint times on the grid.
    pub times: Vec<f64>,
    /// estimators[c][j]: estimator of channel j at checkpoint c.
    pub estimators: Vec<Vec<f64>>,
    pub states: Option<Vec<CMatrix>>,
    /// Steps whose smallest eigenvalue fell below −positivity_clip before clipping.
    pub positivity_violations: usize,
    pub steps: usize,
    /// Attempts discarded because a jump fired at negligible intensity.
    pub resamples: u32,
}

/// Dense d²-vector kernels for one setup; all per-step work is matrix-vector
/// products on preallocated buffers.
struct Kernels {
    d: usize,
    schrodinger: CMatrix,
    /// X ↦ LX + XL* per Brownian channel.
    diffusion: Vec<CMatrix>,
    /// X ↦ LXL* per Poisson channel.
    jump: Vec<CMatrix>,
    /// c with Tr[Oρ] = Σ c_i vec(ρ)_i for O = L + L* (Brownian) or L*L (Poisson).
    observables: Vec<Vec<Complex64>>,
    q: usize,
}

impl Kernels {
    fn new(setup: &MeasurementSetup) -> Self {
        let d = setup.ctx().dim();
        let id = identity(d);
        let mut diffusion = Vec::new();
        let mut jump = Vec::new();
        let mut observables = Vec::new();
        for (j, l) in setup.channels().iter().enumerate() {
            let o = if setup.is_brownian(j) {
                diffusion.push(
                    SuperOperator::sandwich(l, &id).matrix() + SuperOperator::sandwich(&id, &l.adjoint()).matrix(),
                );
                l + l.adjoint()
            } else {
                jump.push(SuperOperator::sandwich(l, &l.adjoint()).matrix().clone());
                l.adjoint() * l
            };
            observables.push(crate::spectral::vec(&o.transpose()).iter().copied().collect());
        }
        Self { d, schrodinger: setup.ctx().schrodinger().matrix().clone(), diffusion, jump, observables, q: setup.q() }
    }

    fn expectation(&self, j: usize, x: &[Complex64]) -> f64 {
        self.observables[j].iter().zip(x).map(|(c, v)| c * v).sum::<Complex64>().re
    }
}

fn matvec(m: &CMatrix, x: &[Complex64], out: &mut [Complex64]) {
    out.iter_mut().for_each(|o| *o = Complex64::from(0.0));
    let n = x.len();
    let data = m.as_slice();
    for (col, &xc) in x.iter().enumerate() {
        if xc == Complex64::from(0.0) {
            continue;
        }
        let column = &data[col * n..(col + 1) * n];
        for (o, &a) in out.iter_mut().zip(column) {
            *o += a * xc;
        }
    }
}

fn trace_of(d: usize, x: &[Complex64]) -> f64 {
    (0..d).map(|i| x[i * d + i].re).sum()
}

/// Symmetrize, clip negative eigenvalues and renormalize in place; returns
/// the smallest eigenvalue seen before clipping.
fn restore_state(d: usize, x: &mut [Complex64]) -> f64 {
    for i in 0..d {
        x[i * d + i].im = 0.0;
        for j in i + 1..d {
            let a = 0.5 * (x[j * d + i] + x[i * d + j].conj());
            x[j * d + i] = a;
            x[i * d + j] = a.conj();
        }
    }
    let min = match d {
        1 => {
            x[0] = Complex64::from(1.0);
            return 1.0;
        }
        2 => {
            let a = x[0].re;
            let c = x[3].re;
            let b = x[2];
            let mid = 0.5 * (a + c);
            let rad = (0.25 * (a - c) * (a - c) + b.norm_sqr()).sqrt();
            let (lo, hi) = (mid - rad, mid + rad);
            if lo < 0.0 {
                // keep only the top spectral projection: λ₊(ρ − λ₋I)/(λ₊ − λ₋)
                let scale = if hi - lo > 0.0 { hi / (hi - lo) } else { 0.0 };
                x[0] = Complex64::from((a - lo) * scale);
                x[3] = Complex64::from((c - lo) * scale);
                x[1] *= scale;
                x[2] *= scale;
            }
            lo
        }
        _ => {
            let m = CMatrix::from_column_slice(d, d, x);
            let e = eigh_unchecked(&m);
            let lo = e.values[0];
            if lo < 0.0 {
                let fixed = e.reconstruct_with(|v| v.max(0.0));
                x.copy_from_slice(fixed.as_slice());
            }
            lo
        }
    };
    let tr = trace_of(d, x);
    if tr > 0.0 {
        x.iter_mut().for_each(|v| *v /= tr);
    }
    min
}

/// Deterministic stream keyed by (seed, path, channel, attempt).
pub fn channel_rng(base_seed: u64, path: usize, channel: usize, attempt: u32) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&base_seed.to_le_bytes());
    key[8..16].copy_from_slice(&(path as u64).to_le_bytes());
    key[16..24].copy_from_slice(&(channel as u64).to_le_bytes());
    key[24..28].copy_from_slice(&attempt.to_le_bytes());
    ChaCha8Rng::from_seed(key)
}

fn check_initial(setup: &MeasurementSetup, rho0: &DensityOperator) -> Result<()> {
    if rho0.dim() != setup.ctx().dim() {
        return Err(Error::DimensionMismatch { expected: setup.ctx().dim(), found: rho0.dim() });
    }
    Ok(())
}

struct Attempt {
    estimators: Vec<Vec<f64>>,
    states: Option<Vec<CMatrix>>,
    violations: usize,
}

fn attempt_path(
    k: &Kernels,
    rho0: &DensityOperator,
    config: &TrajectoryConfig,
    steps: &[usize],
    path: usize,
    attempt: u32,
) -> Option<Attempt> {
    let d = k.d;
    let n = d * d;
    let l = k.observables.len();
    let dt = config.dt;
    let sqrt_dt = dt.sqrt();
    let last = *steps.iter().max().unwrap_or(&0);
    let mut rngs: Vec<ChaCha8Rng> =
        (0..l).map(|j| channel_rng(config.base_seed, path, j, attempt)).collect();

    let mut x: Vec<Complex64> = rho0.matrix().as_slice().to_vec();
    let mut next = vec![Complex64::from(0.0); n];
    let mut buf = vec![Complex64::from(0.0); n];
    let mut integral = vec![0.0; l];
    let mut counts = vec![0.0; l];
    let mut noise = vec![0.0; l];
    let mut estimators = Vec::with_capacity(steps.len());
    let mut states = config.store_states.then(|| Vec::with_capacity(steps.len()));
    let mut violations = 0;
    let mut record = |step: usize, integral: &[f64], counts: &[f64], noise: &[f64], x: &[Complex64]| {
        let t = step as f64 * dt;
        estimators.push(
            (0..l).map(|j| if j < k.q { (integral[j] + noise[j]) / t } else { counts[j] / t }).collect::<Vec<_>>(),
        );
        if let Some(s) = states.as_mut() {
            s.push(CMatrix::from_column_slice(d, d, x));
        }
    };

    let mut cursor = 0;
    for step in 1..=last {
        matvec(&k.schrodinger, &x, &mut next);
        for (v, xv) in next.iter_mut().zip(&x) {
            *v = xv + *v * dt;
        }
        for j in 0..l {
            let mean = k.expectation(j, &x);
            if j < k.q {
                let db: f64 = rngs[j].sample::<f64, _>(StandardNormal) * sqrt_dt;
                integral[j] += mean * dt;
                noise[j] += db;
                matvec(&k.diffusion[j], &x, &mut buf);
                for ((v, b), xv) in next.iter_mut().zip(&buf).zip(&x) {
                    *v += (b - xv * mean) * db;
                }
            } else {
                let fire = rngs[j].random::<f64>() < (mean.max(0.0) * dt).min(1.0);
                matvec(&k.jump[j - k.q], &x, &mut buf);
                // compensator −(LρL* − λρ)dt
                for ((v, b), xv) in next.iter_mut().zip(&buf).zip(&x) {
                    *v -= (b - xv * mean) * dt;
                }
                if fire {
                    if mean < MIN_JUMP_INTENSITY {
                        return None;
                    }
                    counts[j] += 1.0;
                    for ((v, b), xv) in next.iter_mut().zip(&buf).zip(&x) {
                        *v += b / mean - xv;
                    }
                }
            }
        }
        std::mem::swap(&mut x, &mut next);
        if restore_state(d, &mut x) < -config.positivity_clip {
            violations += 1;
        }
        while cursor < steps.len() && steps[cursor] == step {
            record(step, &integral, &counts, &noise, &x);
            cursor += 1;
        }
    }
    Some(Attempt { estimators, states, violations })
}

fn sorted_steps(config: &TrajectoryConfig, checkpoints: &[f64]) -> Result<Vec<usize>> {
    let steps = config.checkpoint_steps(checkpoints)?;
    if steps.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidInput("checkpoints must be strictly increasing on the time grid".into()));
    }
    Ok(steps)
}

fn simulate_with(
    k: &Kernels,
    rho0: &DensityOperator,
    config: &TrajectoryConfig,
    steps: &[usize],
    path_index: usize,
) -> Result<PathRecord> {
    for attempt in 0..MAX_RESAMPLES {
        if let Some(a) = attempt_path(k, rho0, config, steps, path_index, attempt) {
            return Ok(PathRecord {
                path_index,
                times: steps.iter().map(|&s| s as f64 * config.dt).collect(),
                estimators: a.estimators,
                states: a.states,
                positivity_violations: a.violations,
                steps: steps.last().copied().unwrap_or(0),
                resamples: attempt,
            });
        }
    }
    Err(Error::AllPathsInvalid)
}

/// One normalized trajectory; estimators are recorded at `checkpoints`.
pub fn simulate_path(
    setup: &MeasurementSetup,
    rho0: &DensityOperator,
    config: &TrajectoryConfig,
    checkpoints: &[f64],
    path_index: usize,
) -> Result<PathRecord> {
    config.validate()?;
    check_initial(setup, rho0)?;
    let steps = sorted_steps(config, checkpoints)?;
    simulate_with(&Kernels::new(setup), rho0, config, &steps, path_index)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearPath {
    pub times: Vec<f64>,
    /// Z(t) = Tr σ_t at each checkpoint.
    pub z: Vec<f64>,
    /// Set when Z went negative. The step keeps σ positive, so this only flags
    /// round-off. Z = 0 is allowed: it is reached after a jump with L_u σ L_u* = 0.
    pub failed: bool,
}

/// Linear SDE under the reference measure: unit-rate Poisson and standard
/// Brownian drivers, no normalization.
pub fn simulate_linear_path(
    setup: &MeasurementSetup,
    rho0: &DensityOperator,
    config: &TrajectoryConfig,
    checkpoints: &[f64],
    path_index: usize,
) -> Result<LinearPath> {
    config.validate()?;
    check_initial(setup, rho0)?;
    let steps = sorted_steps(config, checkpoints)?;
    Ok(linear_with(&LinearKernels::new(setup), rho0, config, &steps, path_index))
}

/// Factors for the positivity-preserving linear step. Between jumps
/// σ ↦ MσM* + dt R(σ) with M = I + G dt + Σ_B L_B dW_B, G = −iH − ½K + ½n_P,
/// and R the part of Σ_j L_j·L_j* not carried by measured channels (CP, since
/// the directions are orthonormal); a Poisson event maps σ ↦ L_P σ L_P*. Same
/// weak order as Euler, but σ stays positive.
struct LinearKernels {
    d: usize,
    drift: CMatrix,
    brownian: Vec<CMatrix>,
    poisson: Vec<CMatrix>,
    residual: CMatrix,
}

impl LinearKernels {
    fn new(setup: &MeasurementSetup) -> Self {
        let d = setup.ctx().dim();
        let lind = setup.ctx().lindbladian();
        let n_p = (setup.len() - setup.q()) as f64;
        let id = identity(d);
        let drift = lind.hamiltonian() * Complex64::new(0.0, -1.0) - lind.jump_square_sum() * Complex64::from(0.5)
            + &id * Complex64::from(0.5 * n_p);
        let mut residual = lind
            .jumps()
            .iter()
            .map(|l| SuperOperator::sandwich(l, &l.adjoint()).matrix().clone())
            .fold(CMatrix::zeros(d * d, d * d), |a, b| a + b);
        let (mut brownian, mut poisson) = (Vec::new(), Vec::new());
        for (j, l) in setup.channels().iter().enumerate() {
            residual -= SuperOperator::sandwich(l, &l.adjoint()).matrix();
            if setup.is_brownian(j) {
                brownian.push(l.clone());
            } else {
                poisson.push(l.clone());
            }
        }
        Self { d, drift, brownian, poisson, residual }
    }
}

fn linear_with(k: &LinearKernels, rho0: &DensityOperator, config: &TrajectoryConfig, steps: &[usize], path: usize) -> LinearPath {
    let d = k.d;
    let n = d * d;
    let dt = config.dt;
    let sqrt_dt = dt.sqrt();
    let last = steps.last().copied().unwrap_or(0);
    let q = k.brownian.len();
    // distinct from the normalized-path streams
    let mut rngs: Vec<ChaCha8Rng> =
        (0..q + k.poisson.len()).map(|j| channel_rng(config.base_seed, path, j, u32::MAX)).collect();
    let id = identity(d);
    let step_drift = &id + &k.drift * Complex64::from(dt);
    let mut sigma = rho0.matrix().clone();
    let mut buf = vec![Complex64::from(0.0); n];
    let mut z = Vec::with_capacity(steps.len());
    let mut failed = false;
    let mut cursor = 0;
    for step in 1..=last {
        let mut m = step_drift.clone();
        for (j, l) in k.brownian.iter().enumerate() {
            let dw: f64 = rngs[j].sample::<f64, _>(StandardNormal) * sqrt_dt;
            m += l * Complex64::from(dw);
        }
        let mut jumped = false;
        for (j, l) in k.poisson.iter().enumerate() {
            if rngs[q + j].random::<f64>() < dt.min(1.0) {
                sigma = l * &sigma * l.adjoint();
                jumped = true;
            }
        }
        if !jumped {
            matvec(&k.residual, sigma.as_slice(), &mut buf);
            sigma = &m * &sigma * m.adjoint() + CMatrix::from_column_slice(d, d, &buf) * Complex64::from(dt);
        }
        let tr = trace_of(d, sigma.as_slice());
        if !(tr >= 0.0) {
            failed = true;
        }
        while cursor < steps.len() && steps[cursor] == step {
            z.push(tr);
            cursor += 1;
        }
    }
    LinearPath { times: steps.iter().map(|&s| s as f64 * dt).collect(), z, failed }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalTail {
    pub thresholds: Vec<f64>,
    pub exceedances: usize,
    pub n_paths: usize,
    pub estimate: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

impl EmpiricalTail {
    pub fn new(thresholds: Vec<f64>, exceedances: usize, n_paths: usize) -> Result<Self> {
        if n_paths == 0 || exceedances > n_paths {
            return Err(Error::InvalidInput(format!("{exceedances} exceedances out of {n_paths} paths")));
        }
        let (ci_low, ci_high) = clopper_pearson(exceedances, n_paths, CONFIDENCE)?;
        Ok(Self { thresholds, exceedances, n_paths, estimate: exceedances as f64 / n_paths as f64, ci_low, ci_high })
    }

    pub fn contains(&self, p: f64) -> bool {
        self.ci_low <= p && p <= self.ci_high
    }

    pub fn width(&self) -> f64 {
        self.ci_high - self.ci_low
    }
}

/// Exact binomial confidence interval.
pub fn clopper_pearson(k: usize, n: usize, confidence: f64) -> Result<(f64, f64)> {
    let alpha = 1.0 - confidence;
    let beta = |a: f64, b: f64| Beta::new(a, b).map_err(|e| Error::Numerical(e.to_string()));
    let low = if k == 0 { 0.0 } else { beta(k as f64, (n - k + 1) as f64)?.inverse_cdf(0.5 * alpha) };
    let high = if k == n { 1.0 } else { beta((k + 1) as f64, (n - k) as f64)?.inverse_cdf(1.0 - 0.5 * alpha) };
    Ok((low, high))
}

/// Ensemble statistics at one checkpoint.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckpointSummary {
    pub t: f64,
    pub tail: EmpiricalTail,
    pub estimator_mean: Vec<f64>,
    pub estimator_stderr: Vec<f64>,
    /// Present when states were stored.
    pub mean_state: Option<CMatrix>,
    /// √d · (Σ_ij Var ρ_ij / n)^{1/2}, a trace-norm scale for the mean state.
    pub mean_state_stderr: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryEnsemble {
    pub checkpoints: Vec<CheckpointSummary>,
    pub n_paths: usize,
    pub resamples: u64,
    pub positivity_violations: u64,
    pub total_steps: u64,
}

impl TrajectoryEnsemble {
    pub fn violation_fraction(&self) -> f64 {
        if self.total_steps == 0 {
            0.0
        } else {
            self.positivity_violations as f64 / self.total_steps as f64
        }
    }
}

fn mean_and_stderr(values: impl Iterator<Item = f64> + Clone, n: usize) -> (f64, f64) {
    let nf = n as f64;
    let mean = values.clone().sum::<f64>() / nf;
    if n < 2 {
        return (mean, 0.0);
    }
    let var = values.map(|v| (v - mean) * (v - mean)).sum::<f64>() / (nf - 1.0);
    (mean, (var / nf).sqrt())
}

/// Runs `config.n_paths` independent trajectories and reports the joint
/// exceedance ∩_j {E_j(t) − m_j ≥ r_j} at each checkpoint. Use −∞ to disable a channel.
pub fn run_ensemble(
    setup: &MeasurementSetup,
    rho0: &DensityOperator,
    config: &TrajectoryConfig,
    thresholds: &[f64],
    checkpoints: &[f64],
) -> Result<TrajectoryEnsemble> {
    config.validate()?;
    check_initial(setup, rho0)?;
    if thresholds.len() != setup.len() {
        return Err(Error::DimensionMismatch { expected: setup.len(), found: thresholds.len() });
    }
    let steps = sorted_steps(config, checkpoints)?;
    let mean = crate::deviation::mean_vector(setup)?;
    let kernels = Kernels::new(setup);
    let results: Vec<Result<PathRecord>> =
        (0..config.n_paths).into_par_iter().map(|p| simulate_with(&kernels, rho0, config, &steps, p)).collect();
    let paths: Vec<PathRecord> = results.into_iter().filter_map(|r| r.ok()).collect();
    if paths.is_empty() {
        return Err(Error::AllPathsInvalid);
    }
    let n = paths.len();
    let l = setup.len();
    let d = setup.ctx().dim();
    let mut summaries = Vec::with_capacity(steps.len());
    for (c, &step) in steps.iter().enumerate() {
        let exceed = paths
            .iter()
            .filter(|p| (0..l).all(|j| p.estimators[c][j] - mean[j] >= thresholds[j]))
            .count();
        let (estimator_mean, estimator_stderr) =
            (0..l).map(|j| mean_and_stderr(paths.iter().map(move |p| p.estimators[c][j]), n)).unzip();
        let (mean_state, mean_state_stderr) = if config.store_states {
            let states: Vec<&CMatrix> = paths.iter().filter_map(|p| p.states.as_ref().map(|s| &s[c])).collect();
            let mut avg = CMatrix::zeros(d, d);
            for s in &states {
                avg += *s;
            }
            avg /= Complex64::from(n as f64);
            let var: f64 = states.iter().map(|s| (*s - &avg).norm_squared()).sum::<f64>() / (n as f64 - 1.0).max(1.0);
            (Some(avg), Some((d as f64).sqrt() * (var / n as f64).sqrt()))
        } else {
            (None, None)
        };
        summaries.push(CheckpointSummary {
            t: step as f64 * config.dt,
            tail: EmpiricalTail::new(thresholds.to_vec(), exceed, n)?,
            estimator_mean,
            estimator_stderr,
            mean_state,
            mean_state_stderr,
        });
    }
    Ok(TrajectoryEnsemble {
        checkpoints: summaries,
        n_paths: n,
        resamples: paths.iter().map(|p| u64::from(p.resamples)).sum(),
        positivity_violations: paths.iter().map(|p| p.positivity_violations as u64).sum(),
        total_steps: paths.iter().map(|p| p.steps as u64).sum(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct MartingaleSummary {
    pub t: f64,
    pub mean: f64,
    pub stderr: f64,
}

/// Ensemble mean of Z(t) for the linear SDE.
pub fn run_linear_ensemble(
    setup: &MeasurementSetup,
    rho0: &DensityOperator,
    config: &TrajectoryConfig,
    checkpoints: &[f64],
) -> Result<(Vec<MartingaleSummary>, usize)> {
    config.validate()?;
    check_initial(setup, rho0)?;
    let steps = sorted_steps(config, checkpoints)?;
    let kernels = LinearKernels::new(setup);
    let paths: Vec<LinearPath> =
        (0..config.n_paths).into_par_iter().map(|p| linear_with(&kernels, rho0, config, &steps, p)).collect();
    let failures = paths.iter().filter(|p| p.failed).count();
    let n = paths.len();
    let out = steps
        .iter()
        .enumerate()
        .map(|(c, &s)| {
            let (mean, stderr) = mean_and_stderr(paths.iter().map(|p| p.z[c]), n);
            MartingaleSummary { t: s as f64 * config.dt, mean, stderr }
        })
        .collect();
    Ok((out, failures))
}

/// e^{tL*}ρ.
pub fn evolve_state(ctx: &GeneratorContext, rho: &DensityOperator, t: f64) -> Result<CMatrix> {
    crate::spectral::check_square(rho.matrix(), ctx.dim())?;
    let propagator = (ctx.schrodinger().matrix() * Complex64::from(t)).exp();
    let v = propagator * crate::spectral::vec(rho.matrix());
    Ok(crate::spectral::unvec(&v, ctx.dim()))
}

/// Trace-norm distance between an ensemble mean state and e^{tL*}ρ₀.
pub fn mean_state_error(ctx: &GeneratorContext, rho0: &DensityOperator, summary: &CheckpointSummary) -> Result<f64> {
    let mean = summary
        .mean_state
        .as_ref()
        .ok_or_else(|| Error::MissingInput("mean state (run with store_states)".into()))?;
    Ok(trace_norm(&(mean - evolve_state(ctx, rho0, summary.t)?)))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Comparison {
    pub consistent: bool,
    pub bound: f64,
    pub margin: f64,
}

/// The bound must dominate the empirical tail: consistent iff the lower
/// confidence limit does not exceed it.
pub fn compare_with_bound(tail: &EmpiricalTail, report: &BoundReport, t: f64) -> Comparison {
    let bound = report.bound(t);
    Comparison { consistent: tail.ci_low <= bound, bound, margin: bound - tail.estimate }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lindblad::{stationary_state, Lindbladian};

    fn scalar_setup(c: f64, brownian: bool) -> MeasurementSetup {
        let l = Lindbladian::from_jumps(vec![CMatrix::from_element(1, 1, Complex64::from(c))]).unwrap();
        MeasurementSetup::new(stationary_state(&l).unwrap(), vec![vec![1.0]], usize::from(brownian)).unwrap()
    }

    #[test]
    fn pure_brownian_estimator_is_noise_over_t() {
        let s = scalar_setup(0.0, true);
        let cfg = TrajectoryConfig::new(0.01, 1.0, 1, 7);
        let rho = DensityOperator::maximally_mixed(1);
        let rec = simulate_path(&s, &rho, &cfg, &[1.0], 0).unwrap();
        let mut rng = channel_rng(7, 0, 0, 0);
        let w: f64 = (0..100).map(|_| rng.sample::<f64, _>(StandardNormal) * 0.1).sum();
        assert!((rec.estimators[0][0] - w).abs() < 1e-12);
    }

    #[test]
    fn clopper_pearson_edges() {
        let (lo, hi) = clopper_pearson(0, 100, 0.99).unwrap();
        assert_eq!(lo, 0.0);
        assert!((hi - (1.0 - 0.005f64.powf(0.01))).abs() < 1e-10);
        let (lo, hi) = clopper_pearson(100, 100, 0.99).unwrap();
        assert_eq!(hi, 1.0);
        assert!((lo - 0.005f64.powf(0.01)).abs() < 1e-10);
        let t = EmpiricalTail::new(vec![0.0], 37, 200).unwrap();
        assert!(t.contains(t.estimate));
    }

    #[test]
    fn qubit_clip_keeps_top_projection() {
        // eigenvalues 1.1 and −0.1 with eigenvectors |±⟩
        let mut x = vec![Complex64::from(0.5), Complex64::from(0.6), Complex64::from(0.6), Complex64::from(0.5)];
        let min = restore_state(2, &mut x);
        assert!((min + 0.1).abs() < 1e-14);
        for v in &x {
            assert!((v.re - 0.5).abs() < 1e-14);
        }
    }

    #[test]
    fn disabled_channel_always_exceeds() {
        let s = scalar_setup(0.0, true);
        let cfg = TrajectoryConfig::new(0.1, 1.0, 20, 3);
        let rho = DensityOperator::maximally_mixed(1);
        let e = run_ensemble(&s, &rho, &cfg, &[f64::NEG_INFINITY], &[1.0]).unwrap();
        assert_eq!(e.checkpoints[0].tail.estimate, 1.0);
    }

    #[test]
    fn zero_brownian_channel_keeps_z_at_one() {
        let s = scalar_setup(0.0, true);
        let cfg = TrajectoryConfig::new(0.01, 1.0, 5, 3);
        let rho = DensityOperator::maximally_mixed(1);
        let (m, fails) = run_linear_ensemble(&s, &rho, &cfg, &[0.5, 1.0]).unwrap();
        assert_eq!(fails, 0);
        for c in m {
            assert!((c.mean - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn zero_poisson_channel_shrinks_z_on_jumps() {
        let s = scalar_setup(0.0, false);
        let cfg = TrajectoryConfig::new(0.01, 1.0, 1, 3);
        let rho = DensityOperator::maximally_mixed(1);
        let p = simulate_linear_path(&s, &rho, &cfg, &[1.0], 0).unwrap();
        // without an event each step multiplies Z by (1 + dt/2)²; an event sends it to 0
        let alive = (1.005f64).powi(200);
        assert!(p.z[0] == 0.0 || (p.z[0] - alive).abs() < 1e-12, "{}", p.z[0]);
        assert!(!p.failed);
    }

    #[test]
    fn checkpoints_must_be_positive() {
        let cfg = TrajectoryConfig::new(0.1, 1.0, 1, 0);
        assert!(cfg.checkpoint_steps(&[0.0]).is_err());
        assert!(cfg.checkpoint_steps(&[1.5]).is_err());
        assert_eq!(cfg.checkpoint_steps(&[0.3, 1.0]).unwrap(), vec![3, 10]);
    }

    #[test]
    fn compare_flags_halved_bound() {
        let s = scalar_setup(0.0, true);
        let rep = crate::deviation::main_bound(&s, s.ctx().stationary(), &[1.0]).unwrap();
        let tail = EmpiricalTail::new(vec![1.0], 0, 1000).unwrap();
        assert!(compare_with_bound(&tail, &rep, 4.0).consistent);
    }
}
