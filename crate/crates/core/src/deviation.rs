//! Tilted generators, the scaled cumulant generating function, finite-time
//! deviation bounds and the rate function.

use argmin::core::{CostFunction, Executor, Gradient};
use argmin::solver::linesearch::MoreThuenteLineSearch;
use argmin::solver::quasinewton::LBFGS;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::lindblad::{check_detailed_balance, GeneratorContext};
use crate::spectral::{
    gamma_map, hermitian_part, identity, inner_product, CMatrix, DensityOperator, InnerProductKind,
    SuperOperator,
};

const DIRECTION_TOL: f64 = 1e-12;
const LAMBDA_BOX: f64 = 50.0;
const LAMBDA_CAP: f64 = 700.0;
const MAX_ITERATIONS: usize = 10_000;
const GAP_TOL: f64 = 1e-8;
const UNBOUNDED_SLOPE: f64 = 1e-8;

/// Orthonormal real directions u_1..u_ℓ in R^k; the first q are Brownian channels.
#[derive(Debug, Clone)]
pub struct MeasurementSetup {
    ctx: GeneratorContext,
    directions: Vec<Vec<f64>>,
    q: usize,
    channels: Vec<CMatrix>,
}

impl MeasurementSetup {
    pub fn new(ctx: GeneratorContext, directions: Vec<Vec<f64>>, q: usize) -> Result<Self> {
        let k = ctx.lindbladian().num_jumps();
        let l = directions.len();
        if l == 0 || l > k {
            return Err(Error::InvalidInput(format!("need 1 ≤ ℓ ≤ k = {k} directions, got {l}")));
        }
        if q > l {
            return Err(Error::InvalidInput(format!("q = {q} exceeds ℓ = {l}")));
        }
        for (i, u) in directions.iter().enumerate() {
            if u.len() != k {
                return Err(Error::DimensionMismatch { expected: k, found: u.len() });
            }
            if u.iter().any(|x| !x.is_finite()) {
                return Err(Error::InvalidInput(format!("direction {i} is not finite")));
            }
            let n: f64 = u.iter().map(|x| x * x).sum::<f64>().sqrt();
            if (n - 1.0).abs() > DIRECTION_TOL {
                return Err(Error::InvalidInput(format!("direction {i} has norm {n}")));
            }
            for (j, w) in directions.iter().enumerate().take(i) {
                let ip: f64 = u.iter().zip(w).map(|(a, b)| a * b).sum();
                if ip.abs() > DIRECTION_TOL {
                    return Err(Error::InvalidInput(format!("directions {j} and {i} are not orthogonal")));
                }
            }
        }
        let channels = directions
            .iter()
            .map(|u| ctx.lindbladian().combination(u))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { ctx, directions, q, channels })
    }

    /// Direction e_j selecting jump j alone.
    pub fn unit_direction(k: usize, j: usize) -> Vec<f64> {
        let mut u = vec![0.0; k];
        u[j] = 1.0;
        u
    }

    pub fn ctx(&self) -> &GeneratorContext {
        &self.ctx
    }

    pub fn directions(&self) -> &[Vec<f64>] {
        &self.directions
    }

    pub fn q(&self) -> usize {
        self.q
    }

    pub fn len(&self) -> usize {
        self.directions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.directions.is_empty()
    }

    pub fn is_brownian(&self, j: usize) -> bool {
        j < self.q
    }

    /// L_{u_j}.
    pub fn channel(&self, j: usize) -> &CMatrix {
        &self.channels[j]
    }

    pub fn channels(&self) -> &[CMatrix] {
        &self.channels
    }
}

/// m_j = Tr[σ(L_u + L_u*)] for Brownian channels, Tr[σ L_u* L_u] for Poisson channels.
pub fn mean_vector(setup: &MeasurementSetup) -> Result<Vec<f64>> {
    let sigma = setup.ctx().sigma()?;
    Ok((0..setup.len())
        .map(|j| {
            let l = setup.channel(j);
            let o = if setup.is_brownian(j) { l + l.adjoint() } else { l.adjoint() * l };
            crate::spectral::trace(&(sigma.matrix() * o)).re
        })
        .collect())
}

/// KMS-symmetrized quadratic forms ½⟨X,(Φ+Φ^KMS)X⟩ per channel.
pub fn f_statistics(setup: &MeasurementSetup, x: &CMatrix) -> Result<Vec<f64>> {
    let sigma = setup.ctx().sigma()?;
    (0..setup.len())
        .map(|j| {
            let l = setup.channel(j);
            let image = if setup.is_brownian(j) { l.adjoint() * x + x * l } else { l.adjoint() * x * l };
            Ok(inner_product(InnerProductKind::Kms, sigma, x, &image)?.re)
        })
        .collect()
}

fn check_lambda(setup: &MeasurementSetup, lambda: &[f64]) -> Result<()> {
    if lambda.len() != setup.len() {
        return Err(Error::DimensionMismatch { expected: setup.len(), found: lambda.len() });
    }
    if lambda.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidInput("tilt has non-finite entries".into()));
    }
    Ok(())
}

/// L_λ(X) = L(X) + Σ_B λ_j(L*X + XL + ½λ_j X) + Σ_P (e^{λ_j} − 1) L*XL.
pub fn perturbed_generator(setup: &MeasurementSetup, lambda: &[f64]) -> Result<SuperOperator> {
    check_lambda(setup, lambda)?;
    let d = setup.ctx().dim();
    let id = identity(d);
    let mut m = setup.ctx().heisenberg().matrix().clone();
    for (j, &lam) in lambda.iter().enumerate() {
        let l = setup.channel(j);
        if setup.is_brownian(j) {
            let phi = SuperOperator::sandwich(&l.adjoint(), &id).matrix() + SuperOperator::sandwich(&id, l).matrix();
            m += (phi + identity(d * d) * Complex64::from(0.5 * lam)) * Complex64::from(lam);
        } else {
            m += SuperOperator::sandwich(&l.adjoint(), l).matrix() * Complex64::from(lam.exp_m1());
        }
    }
    SuperOperator::from_matrix(d, m)
}

/// Whitened, KMS-symmetrized pieces of the tilted generator; each evaluation
/// of e(λ) is one Hermitian eigenproblem of size d².
#[derive(Debug, Clone)]
pub struct Scgf {
    base: CMatrix,
    terms: Vec<CMatrix>,
    brownian: Vec<bool>,
}

#[derive(Debug, Clone)]
pub struct ScgfValue {
    pub value: f64,
    pub gradient: Vec<f64>,
    /// Gap between the two largest eigenvalues.
    pub gap: f64,
}

impl Scgf {
    pub fn new(setup: &MeasurementSetup) -> Result<Self> {
        let sigma = setup.ctx().sigma()?;
        let d = sigma.dim();
        let id = identity(d);
        let w = SuperOperator::from_map(d, |x| gamma_map(0.5, sigma, x).expect("square"));
        let w_inv = SuperOperator::from_map(d, |x| gamma_map(-0.5, sigma, x).expect("square"));
        let whiten = |s: &CMatrix| hermitian_part(&(w.matrix() * s * w_inv.matrix()));
        let base = whiten(setup.ctx().heisenberg().matrix());
        let terms = (0..setup.len())
            .map(|j| {
                let l = setup.channel(j);
                let s = if setup.is_brownian(j) {
                    SuperOperator::sandwich(&l.adjoint(), &id).matrix() + SuperOperator::sandwich(&id, l).matrix()
                } else {
                    SuperOperator::sandwich(&l.adjoint(), l).matrix().clone()
                };
                whiten(&s)
            })
            .collect();
        let brownian = (0..setup.len()).map(|j| setup.is_brownian(j)).collect();
        Ok(Self { base, terms, brownian })
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    fn assemble(&self, lambda: &[f64]) -> CMatrix {
        let n = self.base.nrows();
        let mut m = self.base.clone();
        for (j, &lam) in lambda.iter().enumerate() {
            if self.brownian[j] {
                m += &self.terms[j] * Complex64::from(lam) + identity(n) * Complex64::from(0.5 * lam * lam);
            } else {
                m += &self.terms[j] * Complex64::from(lam.exp_m1());
            }
        }
        m
    }

    pub fn value(&self, lambda: &[f64]) -> f64 {
        let ev = self.assemble(lambda).symmetric_eigenvalues();
        ev.max()
    }

    /// Value, Hellmann–Feynman gradient, and top spectral gap.
    pub fn evaluate(&self, lambda: &[f64]) -> ScgfValue {
        let e = crate::spectral::eigh_unchecked(&self.assemble(lambda));
        let n = e.values.len();
        let value = e.values[n - 1];
        let gap = if n > 1 { value - e.values[n - 2] } else { f64::INFINITY };
        let v = e.vectors.column(n - 1);
        let gradient = lambda
            .iter()
            .enumerate()
            .map(|(j, &lam)| {
                let expect = v.dotc(&(&self.terms[j] * v)).re;
                if self.brownian[j] {
                    expect + lam
                } else {
                    lam.exp() * expect
                }
            })
            .collect();
        ScgfValue { value, gradient, gap }
    }
}

/// Largest eigenvalue of ½(L_λ + L_λ^KMS).
pub fn scgf(setup: &MeasurementSetup, lambda: &[f64]) -> Result<f64> {
    check_lambda(setup, lambda)?;
    Ok(Scgf::new(setup)?.value(lambda))
}

/// Result of sup_λ {λ·s − e(λ)} over a box.
#[derive(Debug, Clone, PartialEq)]
pub struct LegendrePoint {
    pub value: f64,
    pub lambda: Vec<f64>,
    /// Norm of the projected gradient at the returned tilt.
    pub residual: f64,
    pub iterations: usize,
    pub unbounded: bool,
}

struct Objective<'a> {
    scgf: &'a Scgf,
    s: &'a [f64],
}

impl Objective<'_> {
    fn value(&self, lambda: &[f64]) -> f64 {
        dot(lambda, self.s) - self.scgf.value(lambda)
    }

    /// Objective value and gradient; finite differences stand in for the
    /// Hellmann–Feynman gradient when the top eigenvalue is nearly degenerate.
    fn value_and_gradient(&self, lambda: &[f64]) -> (f64, Vec<f64>) {
        let ev = self.scgf.evaluate(lambda);
        let grad_e = if ev.gap >= GAP_TOL {
            ev.gradient
        } else {
            (0..lambda.len())
                .map(|j| {
                    let h = 1e-6 * (1.0 + lambda[j].abs());
                    let mut up = lambda.to_vec();
                    let mut down = lambda.to_vec();
                    up[j] += h;
                    down[j] -= h;
                    (self.scgf.value(&up) - self.scgf.value(&down)) / (2.0 * h)
                })
                .collect()
        };
        let g = self.s.iter().zip(&grad_e).map(|(s, e)| s - e).collect();
        (dot(lambda, self.s) - ev.value, g)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn project(lambda: &mut [f64], lo: &[f64], hi: &[f64]) {
    for j in 0..lambda.len() {
        lambda[j] = lambda[j].clamp(lo[j], hi[j]);
    }
}

fn projected_gradient_norm(lambda: &[f64], g: &[f64], lo: &[f64], hi: &[f64]) -> f64 {
    lambda
        .iter()
        .zip(g)
        .enumerate()
        .map(|(j, (&x, &gj))| {
            let blocked = (x <= lo[j] && gj < 0.0) || (x >= hi[j] && gj > 0.0);
            if blocked {
                0.0
            } else {
                gj * gj
            }
        })
        .sum::<f64>()
        .sqrt()
}

/// Bisection on the (decreasing) derivative of a one-dimensional concave objective.
fn maximize_1d(obj: &Objective, nonneg: bool) -> LegendrePoint {
    let slope = |x: f64| obj.value_and_gradient(&[x]).1[0];
    let lo_limit = if nonneg { 0.0 } else { -LAMBDA_CAP };
    let mut iterations = 0;

    if nonneg && slope(0.0) <= 0.0 {
        let (v, g) = obj.value_and_gradient(&[0.0]);
        return LegendrePoint { value: v, lambda: vec![0.0], residual: g[0].max(0.0), iterations: 1, unbounded: false };
    }
    let mut hi = LAMBDA_BOX;
    while slope(hi) > 0.0 {
        iterations += 1;
        if hi >= LAMBDA_CAP {
            let g = slope(LAMBDA_CAP);
            let unbounded = g > UNBOUNDED_SLOPE;
            return LegendrePoint {
                value: if unbounded { f64::INFINITY } else { obj.value(&[LAMBDA_CAP]) },
                lambda: vec![LAMBDA_CAP],
                residual: g,
                iterations,
                unbounded,
            };
        }
        hi = (hi * 2.0).min(LAMBDA_CAP);
    }
    let mut lo = if nonneg { 0.0 } else { -LAMBDA_BOX };
    while slope(lo) < 0.0 {
        iterations += 1;
        if lo <= lo_limit {
            let g = slope(lo_limit);
            let unbounded = -g > UNBOUNDED_SLOPE;
            return LegendrePoint {
                value: if unbounded { f64::INFINITY } else { obj.value(&[lo_limit]) },
                lambda: vec![lo_limit],
                residual: -g,
                iterations,
                unbounded,
            };
        }
        lo = (lo * 2.0).max(lo_limit);
    }
    while hi - lo > 1e-13 * (1.0 + hi.abs()) && iterations < MAX_ITERATIONS {
        iterations += 1;
        let mid = 0.5 * (lo + hi);
        let g = slope(mid);
        if g == 0.0 {
            lo = mid;
            hi = mid;
        } else if g > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let x = 0.5 * (lo + hi);
    let (value, g) = obj.value_and_gradient(&[x]);
    LegendrePoint { value, lambda: vec![x], residual: g[0].abs(), iterations, unbounded: false }
}

/// Projected gradient ascent with Barzilai–Borwein steps and Armijo backtracking.
fn maximize_box(obj: &Objective, nonneg: bool) -> LegendrePoint {
    let l = obj.s.len();
    let lo = vec![if nonneg { 0.0 } else { -LAMBDA_BOX }; l];
    let hi = vec![LAMBDA_BOX; l];
    maximize_box_from(obj, nonneg, lo, hi)
}

fn maximize_box_from(obj: &Objective, nonneg: bool, mut lo: Vec<f64>, mut hi: Vec<f64>) -> LegendrePoint {
    let l = obj.s.len();
    let mut x = vec![0.0; l];
    let (mut fx, mut g) = obj.value_and_gradient(&x);
    let mut step = 1.0;
    let mut iterations = 0;
    loop {
        while iterations < MAX_ITERATIONS {
            iterations += 1;
            let mut accepted = None;
            let mut t = step;
            for _ in 0..60 {
                let mut trial: Vec<f64> = x.iter().zip(&g).map(|(a, b)| a + t * b).collect();
                project(&mut trial, &lo, &hi);
                let d: Vec<f64> = trial.iter().zip(&x).map(|(a, b)| a - b).collect();
                let ft = obj.value(&trial);
                if ft >= fx + 1e-4 * dot(&g, &d) - 1e-15 * fx.abs() {
                    accepted = Some((trial, d));
                    break;
                }
                t *= 0.5;
            }
            let Some((trial, d)) = accepted else { break };
            let (ft, gt) = obj.value_and_gradient(&trial);
            let dg: Vec<f64> = g.iter().zip(&gt).map(|(a, b)| a - b).collect();
            let curvature = dot(&d, &dg);
            step = if curvature > 0.0 { (dot(&d, &d) / curvature).clamp(1e-8, 1e8) } else { 1.0 };
            let change = (ft - fx).abs();
            x = trial;
            fx = ft;
            g = gt;
            let residual = projected_gradient_norm(&x, &g, &lo, &hi);
            if residual < 1e-11 || (change < 1e-15 * (1.0 + fx.abs()) && residual < 1e-7) {
                break;
            }
        }
        // extend the box along coordinates that still push outward
        let mut extended = false;
        for j in 0..l {
            if x[j] >= hi[j] && g[j] > 0.0 && hi[j] < LAMBDA_CAP {
                hi[j] = (hi[j] * 2.0).min(LAMBDA_CAP);
                extended = true;
            }
            if !nonneg && x[j] <= lo[j] && g[j] < 0.0 && lo[j] > -LAMBDA_CAP {
                lo[j] = (lo[j] * 2.0).max(-LAMBDA_CAP);
                extended = true;
            }
        }
        if !extended || iterations >= MAX_ITERATIONS {
            break;
        }
    }
    let unbounded = (0..l).any(|j| {
        (x[j] >= LAMBDA_CAP && g[j] > UNBOUNDED_SLOPE) || (!nonneg && x[j] <= -LAMBDA_CAP && g[j] < -UNBOUNDED_SLOPE)
    });
    LegendrePoint {
        value: if unbounded { f64::INFINITY } else { fx },
        residual: projected_gradient_norm(&x, &g, &lo, &hi),
        lambda: x,
        iterations,
        unbounded,
    }
}

/// sup_λ {λ·s − e(λ)} over λ ≥ 0 (`nonneg`) or all of R^ℓ.
pub fn legendre_transform(scgf: &Scgf, s: &[f64], nonneg: bool) -> LegendrePoint {
    let obj = Objective { scgf, s };
    if s.len() == 1 {
        maximize_1d(&obj, nonneg)
    } else {
        maximize_box(&obj, nonneg)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundReport {
    pub r: Vec<f64>,
    pub mean: Vec<f64>,
    pub lambda_star: Vec<f64>,
    pub exponent: f64,
    pub prefactor: f64,
    pub residual: f64,
}

impl BoundReport {
    pub fn bound(&self, t: f64) -> f64 {
        if self.exponent == f64::INFINITY {
            return 0.0;
        }
        self.prefactor * (-t * self.exponent).exp()
    }
}

/// ‖Γ_σ^{-1}(ρ)‖_{L²(σ)} = √Tr[ρσ^{-1/2}ρσ^{-1/2}].
pub fn bound_prefactor(ctx: &GeneratorContext, rho: &DensityOperator) -> Result<f64> {
    let sigma = ctx.sigma()?;
    crate::spectral::check_square(rho.matrix(), sigma.dim())?;
    let y = gamma_map(-1.0, sigma, rho.matrix())?;
    crate::spectral::kms_norm(sigma, &y)
}

pub fn main_bound(setup: &MeasurementSetup, rho: &DensityOperator, r: &[f64]) -> Result<BoundReport> {
    if r.len() != setup.len() {
        return Err(Error::DimensionMismatch { expected: setup.len(), found: r.len() });
    }
    for (index, &value) in r.iter().enumerate() {
        if !(value >= 0.0) {
            return Err(Error::NegativeThreshold { index, value });
        }
    }
    let mean = mean_vector(setup)?;
    let prefactor = bound_prefactor(setup.ctx(), rho)?;
    let s: Vec<f64> = mean.iter().zip(r).map(|(m, r)| m + r).collect();
    let point = legendre_transform(&Scgf::new(setup)?, &s, true);
    if point.value.is_nan() {
        return Err(Error::Numerical("deviation exponent is NaN".into()));
    }
    Ok(BoundReport {
        r: r.to_vec(),
        mean,
        lambda_star: point.lambda,
        exponent: point.value.max(0.0),
        prefactor,
        residual: point.residual,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct RatePoint {
    pub s: Vec<f64>,
    pub value: f64,
    pub lambda: Vec<f64>,
    pub unbounded: bool,
}

/// I(s) = sup_λ {λ·s − e(λ)} on a grid; requires a KMS-symmetric generator.
pub fn rate_function(setup: &MeasurementSetup, s_grid: &[Vec<f64>]) -> Result<Vec<RatePoint>> {
    let db = check_detailed_balance(InnerProductKind::Kms, setup.ctx())?;
    if !db.symmetric {
        return Err(Error::NotKmsSymmetric(db.deviation));
    }
    for s in s_grid {
        if s.len() != setup.len() {
            return Err(Error::DimensionMismatch { expected: setup.len(), found: s.len() });
        }
    }
    let scgf = Scgf::new(setup)?;
    Ok(s_grid
        .par_iter()
        .map(|s| {
            let p = legendre_transform(&scgf, s, false);
            RatePoint { s: s.clone(), value: p.value.max(0.0), lambda: p.lambda, unbounded: p.unbounded }
        })
        .collect())
}

/// D(p‖q) = Σ p ln(p/q) − p + q with 0 ln 0 = 0.
pub fn mass_relative_entropy(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::DimensionMismatch { expected: p.len(), found: q.len() });
    }
    let mut acc = 0.0;
    for (&a, &b) in p.iter().zip(q) {
        if a < 0.0 || b < 0.0 || a.is_nan() || b.is_nan() {
            return Err(Error::InvalidInput(format!("negative mass ({a}, {b})")));
        }
        if a == 0.0 {
            acc += b;
        } else if b == 0.0 {
            return Ok(f64::INFINITY);
        } else {
            acc += a * (a / b).ln() - a + b;
        }
    }
    Ok(acc)
}

pub const CROSSCHECK_MAX_DIM: usize = 3;

struct VariationalProblem {
    dim: usize,
    w: CMatrix,
    dirichlet: CMatrix,
    terms: Vec<CMatrix>,
    q: usize,
    target: Vec<f64>,
}

impl VariationalProblem {
    fn hermitian_from(&self, p: &[f64]) -> CMatrix {
        let d = self.dim;
        let mut b = CMatrix::zeros(d, d);
        let mut k = 0;
        for i in 0..d {
            b[(i, i)] = Complex64::from(p[k]);
            k += 1;
            for j in i + 1..d {
                let z = Complex64::new(p[k], p[k + 1]);
                b[(i, j)] = z;
                b[(j, i)] = z.conj();
                k += 2;
            }
        }
        b
    }

    fn objective(&self, p: &[f64]) -> f64 {
        let b = self.hermitian_from(p);
        let x = &b * &b;
        let v = &self.w * crate::spectral::vec(&x);
        let norm2 = v.norm_squared();
        if !(norm2 > 1e-300) {
            return f64::INFINITY;
        }
        let form = |m: &CMatrix| v.dotc(&(m * &v)).re / norm2;
        let mut total = form(&self.dirichlet);
        let mut p_mass = Vec::new();
        let mut q_mass = Vec::new();
        for (j, t) in self.terms.iter().enumerate() {
            let f = form(t);
            if j < self.q {
                total += 0.5 * (self.target[j] - f).powi(2);
            } else {
                p_mass.push(self.target[j]);
                q_mass.push(f.max(0.0));
            }
        }
        total + mass_relative_entropy(&p_mass, &q_mass).unwrap_or(f64::INFINITY)
    }
}

impl CostFunction for VariationalProblem {
    type Param = Vec<f64>;
    type Output = f64;

    fn cost(&self, p: &Self::Param) -> std::result::Result<f64, argmin::core::Error> {
        Ok(self.objective(p))
    }
}

impl Gradient for VariationalProblem {
    type Param = Vec<f64>;
    type Gradient = Vec<f64>;

    fn gradient(&self, p: &Self::Param) -> std::result::Result<Vec<f64>, argmin::core::Error> {
        let mut out = vec![0.0; p.len()];
        for k in 0..p.len() {
            let h = 1e-7 * (1.0 + p[k].abs());
            let mut up = p.clone();
            let mut down = p.clone();
            up[k] += h;
            down[k] -= h;
            out[k] = (self.objective(&up) - self.objective(&down)) / (2.0 * h);
        }
        Ok(out)
    }
}

/// Direct minimization of the closed-form variational objective over PSD X
/// with ‖X‖_{L²(σ)} = 1, parametrized as X ∝ B² for Hermitian B.
pub fn direct_variational_crosscheck(setup: &MeasurementSetup, r: &[f64], seed: u64, starts: usize) -> Result<f64> {
    let d = setup.ctx().dim();
    if d > CROSSCHECK_MAX_DIM {
        return Err(Error::DimensionGuard { dim: d, guard: CROSSCHECK_MAX_DIM });
    }
    if r.len() != setup.len() {
        return Err(Error::DimensionMismatch { expected: setup.len(), found: r.len() });
    }
    for (index, &value) in r.iter().enumerate() {
        if !(value >= 0.0) {
            return Err(Error::NegativeThreshold { index, value });
        }
    }
    let sigma = setup.ctx().sigma()?;
    let mean = mean_vector(setup)?;
    let target: Vec<f64> = mean.iter().zip(r).map(|(m, r)| m + r).collect();
    let scgf = Scgf::new(setup)?;
    let w = SuperOperator::from_map(d, |x| gamma_map(0.5, sigma, x).expect("square")).matrix().clone();
    let problem = VariationalProblem {
        dim: d,
        w,
        dirichlet: -scgf.base.clone(),
        terms: scgf.terms.clone(),
        q: setup.q(),
        target,
    };
    if d == 1 {
        return Ok(problem.objective(&[1.0]));
    }

    let n_params = d * d;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut initial: Vec<Vec<f64>> = Vec::with_capacity(starts + 1);
    // first start: B = I
    let mut id_start = vec![0.0; n_params];
    let mut k = 0;
    for i in 0..d {
        id_start[k] = 1.0;
        k += 1 + 2 * (d - 1 - i);
    }
    initial.push(id_start);
    for _ in 0..starts {
        initial.push((0..n_params).map(|_| rng.random_range(-1.0..1.0)).collect());
    }
    let mut best = problem.objective(&initial[0]);
    for x0 in initial {
        let solver = LBFGS::new(MoreThuenteLineSearch::new(), 10)
            .with_tolerance_grad(1e-12)
            .and_then(|s| s.with_tolerance_cost(1e-16))
            .map_err(|e| Error::Numerical(e.to_string()))?;
        let start_cost = problem.objective(&x0);
        best = best.min(start_cost);
        let Ok(res) = Executor::new(&problem, solver)
            .configure(|state| state.param(x0).max_iters(2000))
            .run()
        else {
            continue;
        };
        let c = res.state().get_best_cost();
        if c.is_finite() {
            best = best.min(c);
        }
    }
    Ok(best)
}

impl CostFunction for &VariationalProblem {
    type Param = Vec<f64>;
    type Output = f64;

    fn cost(&self, p: &Self::Param) -> std::result::Result<f64, argmin::core::Error> {
        (*self).cost(p)
    }
}

impl Gradient for &VariationalProblem {
    type Param = Vec<f64>;
    type Gradient = Vec<f64>;

    fn gradient(&self, p: &Self::Param) -> std::result::Result<Vec<f64>, argmin::core::Error> {
        (*self).gradient(p)
    }
}
