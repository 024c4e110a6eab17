//! Spectral gap, entropy functionals, log-Sobolev and transport constants,
//! Lipschitz norms and the concentration bounds built from them.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::deviation::bound_prefactor;
use crate::error::{Error, Result};
use crate::lindblad::{bohr_frequencies_of, fisher_information, GeneratorContext};
use crate::spectral::{
    commutator, eigh_unchecked, gamma_map, hermitian_part, identity, inner_product, kms_norm, op_norm,
    spectral_transform, trace, trace_norm, CMatrix, DensityOperator, FaithfulState, HermitianOperator,
    InnerProductKind, SpectralTransform, SuperOperator,
};

/// KMS-whitened symmetrization of −L: a Hermitian d²×d² matrix whose
/// spectrum is that of the symmetrized Dirichlet form.
fn whitened_dirichlet(ctx: &GeneratorContext) -> Result<(CMatrix, crate::spectral::CVector)> {
    let sigma = ctx.sigma()?;
    let d = sigma.dim();
    let w = SuperOperator::from_map(d, |x| gamma_map(0.5, sigma, x).expect("square"));
    let w_inv = SuperOperator::from_map(d, |x| gamma_map(-0.5, sigma, x).expect("square"));
    let a = -hermitian_part(&(w.matrix() * ctx.heisenberg().matrix() * w_inv.matrix()));
    let v0 = w.matrix() * crate::spectral::vec(&identity(d));
    Ok((a, v0))
}

/// Smallest eigenvalue of the symmetrized −L on the KMS-orthogonal
/// complement of the identity.
pub fn spectral_gap(ctx: &GeneratorContext) -> Result<f64> {
    let (a, v0) = whitened_dirichlet(ctx)?;
    let n = a.nrows();
    if n == 1 {
        return Ok(0.0);
    }
    // lift the identity direction above the rest of the spectrum
    let shift = 1.0 + 2.0 * op_norm(&a);
    let lifted = &a + &v0 * v0.adjoint() * Complex64::from(shift / v0.norm_squared());
    Ok(eigh_unchecked(&lifted).values[0].max(0.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntropyKind {
    Variance,
    Ent2,
    RelativeEntropy,
    EntropyProduction,
}

/// ‖X − Tr[σX]‖²_{L²(σ)}.
pub fn variance(sigma: &FaithfulState, x: &CMatrix) -> Result<f64> {
    crate::spectral::check_square(x, sigma.dim())?;
    let mean = trace(&(sigma.matrix() * x));
    let centered = x - identity(sigma.dim()) * mean;
    Ok(kms_norm(sigma, &centered)?.powi(2))
}

fn xlogx_trace(values: &[f64]) -> f64 {
    values.iter().filter(|&&v| v > 0.0).map(|&v| v * v.ln()).sum()
}

/// Tr[Y²(ln Y² − ln σ)] − Tr[Y²] ln Tr[Y²] with Y = Γ^{1/2}(X), X ≥ 0.
pub fn ent2(sigma: &FaithfulState, x: &CMatrix) -> Result<f64> {
    let y = gamma_map(0.5, sigma, x)?;
    let y2 = hermitian_part(&(&y * &y));
    let e = crate::spectral::eigh(&y2)?;
    let clipped: Vec<f64> = e.values.iter().map(|v| v.max(0.0)).collect();
    let mass: f64 = clipped.iter().sum();
    let cross = trace(&(&y2 * sigma.log())).re;
    let norm_term = if mass > 0.0 { mass * mass.ln() } else { 0.0 };
    Ok(xlogx_trace(&clipped) - cross - norm_term)
}

/// D(ρ‖σ) = Tr[ρ(ln ρ − ln σ)].
pub fn relative_entropy(sigma: &FaithfulState, rho: &DensityOperator) -> Result<f64> {
    crate::spectral::check_square(rho.matrix(), sigma.dim())?;
    let p = rho.eigenvalues();
    Ok(xlogx_trace(&p) - trace(&(rho.matrix() * sigma.log())).re)
}

/// EP(ρ) = −Tr[L*(ρ)(ln ρ − ln σ)]; +∞ when the flow leaves the support of ρ.
pub fn entropy_production(ctx: &GeneratorContext, rho: &DensityOperator) -> Result<f64> {
    let sigma = ctx.sigma()?;
    crate::spectral::check_square(rho.matrix(), sigma.dim())?;
    let flow = ctx.schrodinger().apply(rho.matrix())?;
    let e = crate::spectral::eigh(rho.matrix())?;
    let rotated = e.vectors.adjoint() * &flow * &e.vectors;
    let mut acc = 0.0;
    for (i, &p) in e.values.iter().enumerate() {
        let f = rotated[(i, i)].re;
        if p > 1e-300 {
            acc -= f * p.ln();
        } else if f > 1e-14 {
            return Ok(f64::INFINITY);
        }
    }
    Ok(acc + trace(&(flow * sigma.log())).re)
}

/// Observable arguments for Variance/Ent2, states for the other two.
pub fn entropy_functional(kind: EntropyKind, ctx: &GeneratorContext, argument: &CMatrix) -> Result<f64> {
    let sigma = ctx.sigma()?;
    match kind {
        EntropyKind::Variance => variance(sigma, argument),
        EntropyKind::Ent2 => ent2(sigma, argument),
        EntropyKind::RelativeEntropy => relative_entropy(sigma, &DensityOperator::new(argument.clone())?),
        EntropyKind::EntropyProduction => entropy_production(ctx, &DensityOperator::new(argument.clone())?),
    }
}

/// α₂ of the depolarizing semigroup towards σ: (1 − 2s)/ln(1/s − 1), s = s_min.
pub fn lsi_depolarizing(sigma: &FaithfulState) -> f64 {
    let s = sigma.s_min();
    let x = 1.0 - 2.0 * s;
    if x.abs() < 1e-6 {
        // x / (2 atanh x) = ½(1 − x²/3 − …)
        return 0.5 * (1.0 - x * x / 3.0);
    }
    x / (1.0 / s - 1.0).ln()
}

/// C = 1/(8α₂²).
pub fn ti_from_lsi(alpha2: f64) -> Result<f64> {
    if !(alpha2 > 0.0) || !alpha2.is_finite() {
        return Err(Error::InvalidInput(format!("α₂ must be positive, got {alpha2}")));
    }
    Ok(1.0 / (8.0 * alpha2 * alpha2))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Computed,
    ClosedForm,
    UserSupplied,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Constant {
    pub value: f64,
    pub provenance: Provenance,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FunctionalConstants {
    pub spectral_gap: Constant,
    pub lsi_alpha2: Option<Constant>,
    pub ti_constant: Option<Constant>,
}

impl FunctionalConstants {
    pub fn computed(ctx: &GeneratorContext) -> Result<Self> {
        let gap = spectral_gap(ctx)?;
        Ok(Self {
            spectral_gap: Constant { value: gap, provenance: Provenance::Computed },
            lsi_alpha2: None,
            ti_constant: None,
        })
    }

    /// Attach α₂ and the transport constant it implies. Rejects α₂ above the gap.
    pub fn with_lsi(mut self, alpha2: f64, provenance: Provenance) -> Result<Self> {
        if !(alpha2 > 0.0) || alpha2 > self.spectral_gap.value + 1e-9 {
            return Err(Error::InvalidInput(format!(
                "α₂ = {alpha2} is incompatible with the spectral gap {}",
                self.spectral_gap.value
            )));
        }
        self.lsi_alpha2 = Some(Constant { value: alpha2, provenance });
        self.ti_constant = Some(Constant { value: ti_from_lsi(alpha2)?, provenance });
        Ok(self)
    }

    pub fn with_ti(mut self, c: f64) -> Result<Self> {
        if !(c > 0.0) || !c.is_finite() {
            return Err(Error::InvalidInput(format!("TI constant must be positive, got {c}")));
        }
        self.ti_constant = Some(Constant { value: c, provenance: Provenance::UserSupplied });
        Ok(self)
    }
}

/// Derivations ∂_j = [L_j, ·] weighted by their Bohr frequencies.
#[derive(Debug, Clone)]
pub struct LipschitzContext {
    sigma: FaithfulState,
    derivations: Vec<CMatrix>,
    bohr: Vec<f64>,
}

impl LipschitzContext {
    /// Uses the generator's own jumps.
    pub fn new(ctx: &GeneratorContext) -> Result<Self> {
        let sigma = ctx.sigma()?.clone();
        let bohr = ctx.bohr().ok_or(Error::NoBohrFrequencies)?.to_vec();
        Ok(Self { sigma, derivations: ctx.lindbladian().jumps().to_vec(), bohr })
    }

    /// Arbitrary modular eigenvectors as derivations, e.g. unnormalized matrix units.
    pub fn with_derivations(sigma: &FaithfulState, derivations: Vec<CMatrix>) -> Result<Self> {
        for op in &derivations {
            crate::spectral::check_square(op, sigma.dim())?;
        }
        let bohr = bohr_frequencies_of(sigma, &derivations).ok_or(Error::NoBohrFrequencies)?;
        Ok(Self { sigma: sigma.clone(), derivations, bohr })
    }

    pub fn sigma(&self) -> &FaithfulState {
        &self.sigma
    }

    pub fn derivations(&self) -> &[CMatrix] {
        &self.derivations
    }

    pub fn bohr(&self) -> &[f64] {
        &self.bohr
    }

    fn norm_unchecked(&self, x: &CMatrix) -> f64 {
        self.derivations
            .iter()
            .zip(&self.bohr)
            .map(|(l, &w)| 2.0 * (0.5 * w).cosh() * op_norm(&commutator(l, x)).powi(2))
            .sum::<f64>()
            .sqrt()
    }
}

/// (Σ_j (e^{−ω_j/2} + e^{ω_j/2}) ‖[L_j, X]‖²)^{1/2}.
pub fn lipschitz_norm(lip: &LipschitzContext, x: &HermitianOperator) -> Result<f64> {
    crate::spectral::check_square(x.matrix(), lip.sigma.dim())?;
    Ok(lip.norm_unchecked(x.matrix()))
}

/// Õ(u) = Δ^{1/4}(L_u*) + Δ^{−1/4}(L_u).
pub fn tilde_observable(ctx: &GeneratorContext, u: &[f64]) -> Result<HermitianOperator> {
    let sigma = ctx.sigma()?;
    let l = ctx.lindbladian().combination(u)?;
    let a = spectral_transform(SpectralTransform::DeltaPower(0.25), sigma, &l.adjoint())?;
    let b = spectral_transform(SpectralTransform::DeltaPower(-0.25), sigma, &l)?;
    HermitianOperator::new(a + b)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "snake_case")]
pub enum ConcentrationInput {
    /// exp(−t r²/4); the caller attests the transport-cost membership hypothesis.
    TiGaussian { prefactor: f64, attested: bool },
    /// exp(−t r²/(2(1 + C‖Õ‖²_Lip))).
    TiLipschitz { prefactor: f64, c: f64, lipschitz: f64 },
    /// exp(−λ t r²/(2(λ + 2‖Õ‖²_∞))).
    Poincare { prefactor: f64, gap: f64, sup_norm: f64 },
    /// Maximally mixed depolarizing in dimension d with observable eigenvalues O_x; prefactor d.
    Depolarizing { d: usize, eigenvalues: Vec<f64> },
    /// exp(−4α₂² t r²/(8α₂² + n α(u))).
    Tensor { prefactor: f64, alpha2: f64, n: usize, alpha_u: f64 },
    /// exp(β‖H‖/2 − t r²/(2(1 + C L²))) with user-supplied C and Ornstein–Lipschitz value L.
    Gibbs { beta: f64, h_norm: f64, c: Option<f64>, ornstein_lipschitz: Option<f64> },
}

/// bound(t, r) = prefactor · exp(−rate · t r²).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConcentrationBound {
    pub rate: f64,
    pub prefactor: f64,
}

impl ConcentrationBound {
    pub fn exponent(&self, t: f64, r: f64) -> f64 {
        self.rate * t * r * r
    }

    pub fn bound(&self, t: f64, r: f64) -> f64 {
        self.prefactor * (-self.exponent(t, r)).exp()
    }
}

/// Σ_{x,y} (O_x − O_y)² over ordered pairs.
pub fn pair_spread(eigenvalues: &[f64]) -> f64 {
    eigenvalues.iter().flat_map(|a| eigenvalues.iter().map(move |b| (a - b) * (a - b))).sum()
}

fn positive(name: &str, v: f64) -> Result<f64> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(Error::InvalidInput(format!("{name} must be positive, got {v}")))
    }
}

fn nonnegative(name: &str, v: f64) -> Result<f64> {
    if v >= 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(Error::InvalidInput(format!("{name} must be nonnegative, got {v}")))
    }
}

pub fn concentration_bound(input: &ConcentrationInput) -> Result<ConcentrationBound> {
    match *input {
        ConcentrationInput::TiGaussian { prefactor, attested } => {
            if !attested {
                return Err(Error::HypothesisNotAttested(
                    "(√C Õ, √C Õ) must belong to the transport-cost class".into(),
                ));
            }
            Ok(ConcentrationBound { rate: 0.25, prefactor: positive("prefactor", prefactor)? })
        }
        ConcentrationInput::TiLipschitz { prefactor, c, lipschitz } => {
            let c = positive("C", c)?;
            let l = nonnegative("Lipschitz norm", lipschitz)?;
            Ok(ConcentrationBound { rate: 1.0 / (2.0 * (1.0 + c * l * l)), prefactor: positive("prefactor", prefactor)? })
        }
        ConcentrationInput::Poincare { prefactor, gap, sup_norm } => {
            let g = positive("gap", gap)?;
            let s = nonnegative("sup norm", sup_norm)?;
            Ok(ConcentrationBound { rate: g / (2.0 * (g + 2.0 * s * s)), prefactor: positive("prefactor", prefactor)? })
        }
        ConcentrationInput::Depolarizing { d, ref eigenvalues } => {
            if d < 2 || eigenvalues.len() != d {
                return Err(Error::InvalidInput(format!("need d ≥ 2 eigenvalues, got d = {d}, {}", eigenvalues.len())));
            }
            // 4α²/(8α² + 2Σ) with α = (d−2)/(d ln(d−1)); equal to the (d−2)² form and finite at d = 2
            let alpha = lsi_depolarizing(&FaithfulState::maximally_mixed(d));
            let spread = pair_spread(eigenvalues);
            let a2 = alpha * alpha;
            Ok(ConcentrationBound { rate: 4.0 * a2 / (8.0 * a2 + 2.0 * spread), prefactor: d as f64 })
        }
        ConcentrationInput::Tensor { prefactor, alpha2, n, alpha_u } => {
            let a = positive("α₂", alpha2)?;
            let au = nonnegative("α(u)", alpha_u)?;
            let a2 = a * a;
            Ok(ConcentrationBound {
                rate: 4.0 * a2 / (8.0 * a2 + n as f64 * au),
                prefactor: positive("prefactor", prefactor)?,
            })
        }
        ConcentrationInput::Gibbs { beta, h_norm, c, ornstein_lipschitz } => {
            let c = c.ok_or_else(|| Error::MissingInput("Gibbs transport constant C".into()))?;
            let l = ornstein_lipschitz.ok_or_else(|| Error::MissingInput("Ornstein–Lipschitz value".into()))?;
            let c = positive("C", c)?;
            let l = nonnegative("Ornstein–Lipschitz value", l)?;
            let beta = nonnegative("β", beta)?;
            let h = nonnegative("‖H‖", h_norm)?;
            Ok(ConcentrationBound { rate: 1.0 / (2.0 * (1.0 + c * l * l)), prefactor: (0.5 * beta * h).exp() })
        }
    }
}

/// ‖Γ_σ^{-1}(ρ)‖_{L²(σ)}, the prefactor shared by most variants.
pub fn concentration_prefactor(ctx: &GeneratorContext, rho: &DensityOperator) -> Result<f64> {
    bound_prefactor(ctx, rho)
}

/// α(u) = 2|J| max_{k,j} e^{ω_{kj}/2} ‖Σ_i u_{k,i}[L_{k,j}, Õ_{k,i}]‖²_∞ for identical local factors.
pub fn tensor_alpha(factors: &[(GeneratorContext, Vec<f64>)]) -> Result<f64> {
    let mut worst: f64 = 0.0;
    let mut n_jumps = None;
    for (ctx, u) in factors {
        let jumps = ctx.lindbladian().jumps();
        match n_jumps {
            None => n_jumps = Some(jumps.len()),
            Some(n) if n != jumps.len() => {
                return Err(Error::InvalidInput("factors must share the jump index set".into()))
            }
            _ => {}
        }
        let bohr = ctx.bohr().ok_or(Error::NoBohrFrequencies)?;
        let tilde = tilde_observable(ctx, u)?;
        for (l, &w) in jumps.iter().zip(bohr) {
            worst = worst.max((0.5 * w).exp() * op_norm(&commutator(l, tilde.matrix())).powi(2));
        }
    }
    Ok(2.0 * n_jumps.unwrap_or(0) as f64 * worst)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoincareTiCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
}

/// ‖ρ − σ‖₁² ≤ (4/λ) I(ρ).
pub fn verify_poincare_ti(ctx: &GeneratorContext, rho: &DensityOperator) -> Result<PoincareTiCheck> {
    let sigma = ctx.sigma()?;
    crate::spectral::check_square(rho.matrix(), sigma.dim())?;
    let gap = spectral_gap(ctx)?;
    let lhs = trace_norm(&(rho.matrix() - sigma.matrix())).powi(2);
    let info = fisher_information(ctx, rho)?;
    let rhs = if gap > 0.0 { 4.0 * info / gap } else { f64::INFINITY };
    Ok(PoincareTiCheck { lhs, rhs, holds: lhs <= rhs + 1e-9 })
}

pub const W1_RANDOM_STARTS: usize = 10;

fn hermitian_from(d: usize, p: &[f64]) -> CMatrix {
    let mut x = CMatrix::zeros(d, d);
    let mut k = 0;
    for i in 0..d {
        x[(i, i)] = Complex64::from(p[k]);
        k += 1;
        for j in i + 1..d {
            let z = Complex64::new(p[k], p[k + 1]);
            x[(i, j)] = z;
            x[(j, i)] = z.conj();
            k += 2;
        }
    }
    x
}

fn params_from(x: &CMatrix) -> Vec<f64> {
    let d = x.nrows();
    let h = hermitian_part(x);
    let mut p = Vec::with_capacity(d * d);
    for i in 0..d {
        p.push(h[(i, i)].re);
        for j in i + 1..d {
            p.push(h[(i, j)].re);
            p.push(h[(i, j)].im);
        }
    }
    p
}

/// Reduce a matrix functional E ↦ Re Tr[G E] to the Hermitian parameter basis.
fn functional_params(g: &CMatrix) -> Vec<f64> {
    let d = g.nrows();
    let mut out = Vec::with_capacity(d * d);
    for i in 0..d {
        out.push(g[(i, i)].re);
        for j in i + 1..d {
            out.push(g[(j, i)].re + g[(i, j)].re);
            out.push(g[(i, j)].im - g[(j, i)].im);
        }
    }
    out
}

struct W1Objective<'a> {
    lip: &'a LipschitzContext,
    delta: CMatrix,
    d: usize,
}

impl W1Objective<'_> {
    /// |Tr[ΔX]| / ‖X‖_Lip and a subgradient from the top singular pairs.
    fn evaluate(&self, p: &[f64]) -> Result<(f64, Vec<f64>)> {
        let x = hermitian_from(self.d, p);
        let pairing = trace(&(&self.delta * &x)).re;
        let mut lip2 = 0.0;
        let mut dlip2 = CMatrix::zeros(self.d, self.d);
        for (l, &w) in self.lip.derivations.iter().zip(&self.lip.bohr) {
            let weight = 2.0 * (0.5 * w).cosh();
            let svd = commutator(l, &x).svd(true, true);
            let (k, s) = svd
                .singular_values
                .iter()
                .copied()
                .enumerate()
                .fold((0, 0.0), |acc, (i, v)| if v > acc.1 { (i, v) } else { acc });
            if s == 0.0 {
                continue;
            }
            lip2 += weight * s * s;
            let a = svd.u.as_ref().expect("left vectors").column(k).into_owned();
            let b = svd.v_t.as_ref().expect("right vectors").row(k).adjoint();
            // ds = Re Tr[(b a†)(L E − E L)] = Re Tr[(b a† L − L b a†) E]
            let ba = &b * a.adjoint();
            dlip2 += (&ba * l - l * &ba) * Complex64::from(2.0 * weight * s);
        }
        let lip_norm = lip2.sqrt();
        if lip_norm <= 1e-14 * (1.0 + crate::spectral::max_norm(&x)) {
            if pairing.abs() > 1e-12 {
                return Err(Error::UnboundedDirection(format!("pairing {pairing} with zero Lipschitz norm")));
            }
            return Ok((0.0, vec![0.0; p.len()]));
        }
        let f = pairing.abs() / lip_norm;
        let dp = functional_params(&self.delta.transpose());
        let dl = functional_params(&dlip2.transpose());
        let sign = pairing.signum();
        let g = dp
            .iter()
            .zip(&dl)
            .map(|(a, b)| sign * a / lip_norm - f * b / (2.0 * lip2))
            .collect();
        Ok((f, g))
    }
}

/// Feasible-point lower bound on W₁: the best ratio |Tr[(ρ₁−ρ₂)X]| / ‖X‖_Lip over
/// ρ₁ − ρ₂, any extra candidates, and random starts, each refined by ascent.
pub fn w1_lower_bound_with(
    lip: &LipschitzContext,
    rho1: &DensityOperator,
    rho2: &DensityOperator,
    candidates: &[CMatrix],
    seed: u64,
) -> Result<f64> {
    let d = lip.sigma.dim();
    crate::spectral::check_square(rho1.matrix(), d)?;
    crate::spectral::check_square(rho2.matrix(), d)?;
    let delta = rho1.matrix() - rho2.matrix();
    if crate::spectral::max_norm(&delta) == 0.0 {
        return Ok(0.0);
    }
    let obj = W1Objective { lip, delta: delta.clone(), d };

    let mut starts: Vec<Vec<f64>> = vec![params_from(&delta)];
    starts.extend(candidates.iter().map(params_from));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..W1_RANDOM_STARTS {
        starts.push((0..d * d).map(|_| rng.random_range(-1.0..1.0)).collect());
    }

    let mut best: f64 = 0.0;
    let mut best_p = starts[0].clone();
    for mut p in starts {
        let (mut f, mut g) = obj.evaluate(&p)?;
        let mut step = 0.1;
        for _ in 0..500 {
            let scale = p.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-12);
            let gn = g.iter().map(|v| v * v).sum::<f64>().sqrt();
            if gn * scale < 1e-12 * f.max(1e-300) {
                break;
            }
            let mut accepted = None;
            let mut t = step;
            for _ in 0..40 {
                let trial: Vec<f64> = p.iter().zip(&g).map(|(a, b)| a + t * scale * b / gn).collect();
                let (ft, gt) = obj.evaluate(&trial)?;
                if ft > f {
                    accepted = Some((trial, ft, gt, t));
                    break;
                }
                t *= 0.5;
            }
            let Some((trial, ft, gt, t)) = accepted else { break };
            let gain = ft - f;
            p = trial;
            f = ft;
            g = gt;
            step = (2.0 * t).min(1.0);
            if gain <= 1e-13 * f {
                break;
            }
        }
        if f > best {
            best = f;
            best_p = p;
        }
    }
    // kinks where top singular values cross stall the subgradient steps;
    // finish with difference quotients from the best point
    Ok(best.max(polish(&obj, best_p)?))
}

fn polish(obj: &W1Objective, mut p: Vec<f64>) -> Result<f64> {
    let mut f = obj.evaluate(&p)?.0;
    let mut step = 0.01;
    for _ in 0..200 {
        let scale = p.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-12);
        let h = 1e-7 * scale;
        let mut g = vec![0.0; p.len()];
        for k in 0..p.len() {
            let mut up = p.clone();
            let mut down = p.clone();
            up[k] += h;
            down[k] -= h;
            g[k] = (obj.evaluate(&up)?.0 - obj.evaluate(&down)?.0) / (2.0 * h);
        }
        let gn = g.iter().map(|v| v * v).sum::<f64>().sqrt();
        if gn == 0.0 {
            break;
        }
        let mut t = step;
        let mut gain = 0.0;
        for _ in 0..40 {
            let trial: Vec<f64> = p.iter().zip(&g).map(|(a, b)| a + t * scale * b / gn).collect();
            let ft = obj.evaluate(&trial)?.0;
            if ft > f {
                gain = ft - f;
                p = trial;
                f = ft;
                step = (2.0 * t).min(1.0);
                break;
            }
            t *= 0.5;
        }
        if gain <= 1e-13 * f {
            break;
        }
    }
    Ok(f)
}

pub fn w1_lower_bound(lip: &LipschitzContext, rho1: &DensityOperator, rho2: &DensityOperator) -> Result<f64> {
    w1_lower_bound_with(lip, rho1, rho2, &[], 0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LsiBracket {
    pub lower: f64,
    pub upper: f64,
    pub min_gap: f64,
}

/// min λ_k / (ln(d⁴ max ‖σ_k⁻¹‖) + 11) ≤ α₂ ≤ min λ_k / 2 for products of
/// KMS-symmetric factors of equal local dimension.
pub fn tensorization_lsi_bounds(factors: &[GeneratorContext]) -> Result<LsiBracket> {
    let first = factors.first().ok_or_else(|| Error::InvalidInput("no factors".into()))?;
    let d = first.dim();
    let mut min_gap = f64::INFINITY;
    let mut max_inv: f64 = 0.0;
    for ctx in factors {
        if ctx.dim() != d {
            return Err(Error::DimensionMismatch { expected: d, found: ctx.dim() });
        }
        let db = crate::lindblad::check_detailed_balance(InnerProductKind::Kms, ctx)?;
        if !db.symmetric {
            return Err(Error::NotKmsSymmetric(db.deviation));
        }
        min_gap = min_gap.min(spectral_gap(ctx)?);
        max_inv = max_inv.max(1.0 / ctx.sigma()?.s_min());
    }
    let lower = min_gap / (((d as f64).powi(4) * max_inv).ln() + 11.0);
    Ok(LsiBracket { lower, upper: 0.5 * min_gap, min_gap })
}

/// E(X) ≥ λ Var(X) check value: E(X) − λ Var(X).
pub fn poincare_slack(ctx: &GeneratorContext, gap: f64, x: &CMatrix) -> Result<f64> {
    let sigma = ctx.sigma()?;
    Ok(crate::lindblad::dirichlet_form(ctx, x)? - gap * variance(sigma, x)?)
}

/// ⟨X, Y⟩ helper used by reports: Tr[σ X].
pub fn expectation(sigma: &FaithfulState, x: &CMatrix) -> Result<f64> {
    Ok(inner_product(InnerProductKind::Gns, sigma, &identity(sigma.dim()), x)?.re)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lindblad::stationary_state;
    use crate::models::{classical_embedding, depolarizing, matrix_unit_derivations, ClassicalChain};
    use crate::spectral::{diag, ket_bra, pauli_z};

    fn depol(d: usize) -> GeneratorContext {
        stationary_state(&depolarizing(&FaithfulState::maximally_mixed(d))).unwrap()
    }

    #[test]
    fn depolarizing_gap_is_one() {
        for d in 2..=3 {
            assert!((spectral_gap(&depol(d)).unwrap() - 1.0).abs() < 1e-10);
        }
        let sigma = FaithfulState::diagonal(&[0.7, 0.2, 0.1]).unwrap();
        let ctx = stationary_state(&depolarizing(&sigma)).unwrap();
        assert!((spectral_gap(&ctx).unwrap() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn two_state_gap_counts_coherences() {
        // the classical gap is a + b, but coherences decay at (a + b)/2
        let chain = ClassicalChain::two_state(0.3, 0.5).unwrap();
        let ctx = stationary_state(&classical_embedding(&chain)).unwrap();
        assert!((chain.spectral_gap() - 0.8).abs() < 1e-12);
        assert!((spectral_gap(&ctx).unwrap() - 0.4).abs() < 1e-10);
    }

    #[test]
    fn entropies() {
        let half = FaithfulState::maximally_mixed(2);
        assert!(variance(&half, &identity(2)).unwrap().abs() < 1e-15);
        assert!((variance(&half, &pauli_z()).unwrap() - 1.0).abs() < 1e-14);
        let pure = DensityOperator::new(ket_bra(2, 0, 0)).unwrap();
        assert!((relative_entropy(&half, &pure).unwrap() - 2f64.ln()).abs() < 1e-14);
        assert!(relative_entropy(&half, half.state()).unwrap().abs() < 1e-14);
        let ctx = depol(2);
        assert_eq!(entropy_production(&ctx, &pure).unwrap(), f64::INFINITY);
        let rho = DensityOperator::new(diag(&[0.8, 0.2])).unwrap();
        // depolarizing: EP = (1 − e^{...}) form, check against −Tr[(σ − ρ)(ln ρ − ln σ)]
        let want = -((0.5 - 0.8) * (0.8f64.ln() - 0.5f64.ln()) + (0.5 - 0.2) * (0.2f64.ln() - 0.5f64.ln()));
        assert!((entropy_production(&ctx, &rho).unwrap() - want).abs() < 1e-13);
        assert!(ent2(&half, &identity(2)).unwrap().abs() < 1e-14);
    }

    #[test]
    fn depolarizing_lsi_closed_forms() {
        let a3 = lsi_depolarizing(&FaithfulState::maximally_mixed(3));
        assert!((a3 - 1.0 / (3.0 * 2f64.ln())).abs() < 1e-12);
        let a4 = lsi_depolarizing(&FaithfulState::maximally_mixed(4));
        assert!((a4 - 2.0 / (4.0 * 3f64.ln())).abs() < 1e-12);
        assert_eq!(lsi_depolarizing(&FaithfulState::maximally_mixed(2)), 0.5);
        let near = FaithfulState::diagonal(&[0.5 + 1e-9, 0.5 - 1e-9]).unwrap();
        assert!((lsi_depolarizing(&near) - 0.5).abs() < 1e-12);
        assert_eq!(ti_from_lsi(1.0).unwrap(), 0.125);
        assert_eq!(ti_from_lsi(0.5).unwrap(), 0.5);
        assert!((ti_from_lsi(a3).unwrap() - 9.0 * 2f64.ln().powi(2) / 8.0).abs() < 1e-12);
        assert!(ti_from_lsi(0.0).is_err());
    }

    #[test]
    fn lipschitz_of_sigma_z() {
        let half = FaithfulState::maximally_mixed(2);
        let lip = LipschitzContext::with_derivations(&half, matrix_unit_derivations(&half)).unwrap();
        let z = HermitianOperator::new(pauli_z()).unwrap();
        assert!((lipschitz_norm(&lip, &z).unwrap() - 4.0).abs() < 1e-12);
        let id = HermitianOperator::new(identity(2)).unwrap();
        assert_eq!(lipschitz_norm(&lip, &id).unwrap(), 0.0);
    }

    #[test]
    fn w1_beats_explicit_point() {
        let half = FaithfulState::maximally_mixed(2);
        let lip = LipschitzContext::with_derivations(&half, matrix_unit_derivations(&half)).unwrap();
        let pure = DensityOperator::new(ket_bra(2, 0, 0)).unwrap();
        let w = w1_lower_bound(&lip, &pure, half.state()).unwrap();
        assert!(w >= 0.25 - 1e-12, "{w}");
        assert_eq!(w1_lower_bound(&lip, &pure, &pure).unwrap(), 0.0);
    }

    #[test]
    fn concentration_examples() {
        let g = concentration_bound(&ConcentrationInput::TiGaussian { prefactor: 1.0, attested: true }).unwrap();
        assert!((g.bound(4.0, 1.0) - (-1f64).exp()).abs() < 1e-15);
        assert!(matches!(
            concentration_bound(&ConcentrationInput::TiGaussian { prefactor: 1.0, attested: false }),
            Err(Error::HypothesisNotAttested(_))
        ));
        let p = concentration_bound(&ConcentrationInput::Poincare { prefactor: 1.0, gap: 1.0, sup_norm: 1.0 }).unwrap();
        assert!((p.exponent(6.0, 1.0) - 1.0).abs() < 1e-15);
        let eig = vec![1.0, -1.0, 0.0, 0.0];
        assert_eq!(pair_spread(&eig), 16.0);
        let dep = concentration_bound(&ConcentrationInput::Depolarizing { d: 4, eigenvalues: eig }).unwrap();
        let want = 2.0 * 4.0 / (4.0 * 4.0 + 16.0 * 16.0 * 3f64.ln().powi(2));
        assert!((dep.rate - want).abs() < 1e-14);
        assert_eq!(dep.prefactor, 4.0);
        assert!(matches!(
            concentration_bound(&ConcentrationInput::Gibbs { beta: 1.0, h_norm: 1.0, c: None, ornstein_lipschitz: Some(1.0) }),
            Err(Error::MissingInput(_))
        ));
    }

    #[test]
    fn poincare_ti_at_pure_state() {
        let ctx = depol(2);
        let pure = DensityOperator::new(ket_bra(2, 0, 0)).unwrap();
        let c = verify_poincare_ti(&ctx, &pure).unwrap();
        assert!((c.lhs - 1.0).abs() < 1e-12 && (c.rhs - 2.0).abs() < 1e-12 && c.holds);
        let c = verify_poincare_ti(&ctx, ctx.stationary()).unwrap();
        assert!(c.lhs.abs() < 1e-20 && c.holds);
    }

    #[test]
    fn tensor_bracket_for_qutrits() {
        let b = tensorization_lsi_bounds(&[depol(3), depol(3)]).unwrap();
        assert!((b.lower - 1.0 / (243f64.ln() + 11.0)).abs() < 1e-10);
        assert!((b.upper - 0.5).abs() < 1e-10);
    }

    #[test]
    fn tilde_at_maximally_mixed_is_observable() {
        let ctx = depol(2);
        let u = crate::deviation::MeasurementSetup::unit_direction(4, 1);
        let t = tilde_observable(&ctx, &u).unwrap();
        let l = ctx.lindbladian().combination(&u).unwrap();
        assert!(crate::spectral::max_norm(&(t.matrix() - (&l + l.adjoint()))) < 1e-14);
    }
}
