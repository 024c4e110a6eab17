//! Lindblad generators, stationary states, detailed balance and Dirichlet forms.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::spectral::{
    anticommutator, check_square, commutator, gamma_map, gram, gram_inverse, hermitian_part, identity,
    inner_product, max_norm, psd_sqrt, spectral_transform, unvec, CMatrix, CVector, DensityOperator, FaithfulState,
    HermitianOperator, InnerProductKind, SpectralTransform, SuperOperator, I,
};

/// L(X) = i[H,X] + Σ L_j* X L_j − ½{Σ L_j* L_j, X}.
#[derive(Debug, Clone, PartialEq)]
pub struct Lindbladian {
    dim: usize,
    hamiltonian: HermitianOperator,
    jumps: Vec<CMatrix>,
}

impl Lindbladian {
    pub fn new(hamiltonian: CMatrix, jumps: Vec<CMatrix>) -> Result<Self> {
        let hamiltonian = HermitianOperator::new(hamiltonian)?;
        let dim = hamiltonian.dim();
        for j in &jumps {
            check_square(j, dim)?;
        }
        Ok(Self { dim, hamiltonian, jumps })
    }

    /// H = 0; with Σ K*K = id this is the generator Φ − id of Φ(X) = Σ K*XK.
    pub fn from_jumps(jumps: Vec<CMatrix>) -> Result<Self> {
        let dim = jumps
            .first()
            .map(|j| j.nrows())
            .ok_or_else(|| Error::InvalidInput("empty jump list".into()))?;
        Self::new(CMatrix::zeros(dim, dim), jumps)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn hamiltonian(&self) -> &CMatrix {
        self.hamiltonian.matrix()
    }

    pub fn jumps(&self) -> &[CMatrix] {
        &self.jumps
    }

    pub fn num_jumps(&self) -> usize {
        self.jumps.len()
    }

    /// Σ_j L_j* L_j.
    pub fn jump_square_sum(&self) -> CMatrix {
        self.jumps.iter().fold(CMatrix::zeros(self.dim, self.dim), |acc, l| acc + l.adjoint() * l)
    }

    /// L_u = Σ_i u_i L_i.
    pub fn combination(&self, u: &[f64]) -> Result<CMatrix> {
        if u.len() != self.jumps.len() {
            return Err(Error::DimensionMismatch { expected: self.jumps.len(), found: u.len() });
        }
        Ok(self
            .jumps
            .iter()
            .zip(u)
            .fold(CMatrix::zeros(self.dim, self.dim), |acc, (l, &w)| acc + l * Complex64::from(w)))
    }

    pub fn apply(&self, x: &CMatrix) -> Result<CMatrix> {
        check_square(x, self.dim)?;
        let h = self.hamiltonian.matrix();
        let mut out = commutator(h, x) * I;
        for l in &self.jumps {
            out += l.adjoint() * x * l;
        }
        out -= anticommutator(&self.jump_square_sum(), x) * Complex64::from(0.5);
        Ok(out)
    }

    /// Schrödinger picture, the Hilbert–Schmidt adjoint of `apply`.
    pub fn apply_adjoint(&self, rho: &CMatrix) -> Result<CMatrix> {
        check_square(rho, self.dim)?;
        let h = self.hamiltonian.matrix();
        let mut out = commutator(h, rho) * (-I);
        for l in &self.jumps {
            out += l * rho * l.adjoint();
        }
        out -= anticommutator(&self.jump_square_sum(), rho) * Complex64::from(0.5);
        Ok(out)
    }

    pub fn heisenberg(&self) -> SuperOperator {
        let d = self.dim;
        let id = identity(d);
        let h = self.hamiltonian.matrix();
        let k = self.jump_square_sum();
        let mut m = (SuperOperator::sandwich(h, &id).matrix() - SuperOperator::sandwich(&id, h).matrix()) * I;
        for l in &self.jumps {
            m += SuperOperator::sandwich(&l.adjoint(), l).matrix();
        }
        m -= (SuperOperator::sandwich(&k, &id).matrix() + SuperOperator::sandwich(&id, &k).matrix())
            * Complex64::from(0.5);
        SuperOperator::from_matrix(d, m).expect("consistent dimension")
    }

    pub fn schrodinger(&self) -> SuperOperator {
        self.heisenberg().hs_adjoint()
    }
}

/// A generator together with its stationary state and derived data.
#[derive(Debug, Clone)]
pub struct GeneratorContext {
    lindbladian: Lindbladian,
    stationary: DensityOperator,
    sigma: Option<FaithfulState>,
    heisenberg: SuperOperator,
    schrodinger: SuperOperator,
    kernel_dim: usize,
    primitive: bool,
    bohr: Option<Vec<f64>>,
}

impl GeneratorContext {
    pub fn lindbladian(&self) -> &Lindbladian {
        &self.lindbladian
    }

    pub fn dim(&self) -> usize {
        self.lindbladian.dim
    }

    pub fn stationary(&self) -> &DensityOperator {
        &self.stationary
    }

    /// The faithful stationary state, or an error if it is not faithful.
    pub fn sigma(&self) -> Result<&FaithfulState> {
        self.sigma
            .as_ref()
            .ok_or_else(|| Error::NotFaithful(self.stationary.eigenvalues().first().copied().unwrap_or(0.0)))
    }

    pub fn heisenberg(&self) -> &SuperOperator {
        &self.heisenberg
    }

    pub fn schrodinger(&self) -> &SuperOperator {
        &self.schrodinger
    }

    pub fn kernel_dim(&self) -> usize {
        self.kernel_dim
    }

    pub fn is_primitive(&self) -> bool {
        self.primitive
    }

    pub fn bohr(&self) -> Option<&[f64]> {
        self.bohr.as_deref()
    }

    pub fn apply(&self, x: &CMatrix) -> Result<CMatrix> {
        self.heisenberg.apply(x)
    }
}

fn kernel_basis(s: &CMatrix) -> (Vec<CVector>, Vec<CVector>) {
    // right and left null vectors (as columns) of a square matrix
    let n = s.nrows();
    let svd = s.clone().svd(true, true);
    let u = svd.u.expect("requested");
    let v_t = svd.v_t.expect("requested");
    let scale = svd.singular_values.max();
    let threshold = 1e-9 * scale.max(f64::MIN_POSITIVE);
    let mut right = Vec::new();
    let mut left = Vec::new();
    for k in 0..n {
        if scale == 0.0 || svd.singular_values[k] <= threshold {
            right.push(v_t.row(k).adjoint());
            left.push(u.column(k).into_owned());
        }
    }
    (right, left)
}

/// Kernel of the Schrödinger superoperator, trace-normalized.
pub fn stationary_state(lindbladian: &Lindbladian) -> Result<GeneratorContext> {
    let d = lindbladian.dim();
    let heisenberg = lindbladian.heisenberg();
    let schrodinger = heisenberg.hs_adjoint();
    let (right, left) = kernel_basis(schrodinger.matrix());
    let kernel_dim = right.len();
    if kernel_dim == 0 {
        return Err(Error::Numerical("Schrödinger superoperator has no numerical kernel".into()));
    }
    let candidate = if kernel_dim == 1 {
        unvec(&right[0], d)
    } else {
        // spectral projection onto the kernel along the range, applied to id/d
        let v = CMatrix::from_columns(&right);
        let w = CMatrix::from_columns(&left);
        let gram = w.adjoint() * &v;
        let inv = gram
            .try_inverse()
            .ok_or_else(|| Error::Numerical("kernel projection is singular".into()))?;
        let mixed = crate::spectral::vec(&(identity(d) / Complex64::from(d as f64)));
        unvec(&(&v * (inv * (w.adjoint() * mixed))), d)
    };
    let tr = crate::spectral::trace(&candidate);
    if tr.norm() < 1e-12 {
        return Err(Error::Numerical("kernel vector has vanishing trace".into()));
    }
    let stationary = DensityOperator::project(&hermitian_part(&(candidate / tr)))?;
    let residual = max_norm(&schrodinger.apply(stationary.matrix())?);
    if residual > 1e-9 * schrodinger.max_norm().max(1.0) {
        return Err(Error::Numerical(format!("stationarity residual {residual:e}")));
    }
    let sigma = FaithfulState::new(stationary.clone()).ok();
    if kernel_dim > 1 && sigma.is_none() {
        return Err(Error::NoFaithfulStationaryState);
    }
    let primitive = kernel_dim == 1 && sigma.is_some();
    let bohr = sigma.as_ref().and_then(|s| bohr_for(s, lindbladian.jumps()));
    Ok(GeneratorContext {
        lindbladian: lindbladian.clone(),
        stationary,
        sigma,
        heisenberg,
        schrodinger,
        kernel_dim,
        primitive,
        bohr,
    })
}

/// Adjoint of S for the chosen σ-weighted inner product: G⁻¹ S† G.
pub fn dual_superoperator(kind: InnerProductKind, sigma: &FaithfulState, s: &SuperOperator) -> Result<SuperOperator> {
    if s.dim() != sigma.dim() {
        return Err(Error::DimensionMismatch { expected: sigma.dim(), found: s.dim() });
    }
    gram_inverse(kind, sigma).compose(&s.hs_adjoint())?.compose(&gram(kind, sigma))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetailedBalance {
    pub symmetric: bool,
    pub deviation: f64,
}

pub fn symmetry_deviation(kind: InnerProductKind, sigma: &FaithfulState, s: &SuperOperator) -> Result<DetailedBalance> {
    let dual = dual_superoperator(kind, sigma, s)?;
    let deviation = max_norm(&(s.matrix() - dual.matrix()));
    Ok(DetailedBalance { symmetric: deviation <= 1e-8 * s.max_norm(), deviation })
}

pub fn check_detailed_balance(kind: InnerProductKind, ctx: &GeneratorContext) -> Result<DetailedBalance> {
    symmetry_deviation(kind, ctx.sigma()?, ctx.heisenberg())
}

fn bohr_for(sigma: &FaithfulState, jumps: &[CMatrix]) -> Option<Vec<f64>> {
    jumps
        .iter()
        .map(|l| {
            let norm2 = l.norm_squared();
            if norm2 < 1e-28 {
                return Some(0.0);
            }
            let dl = spectral_transform(SpectralTransform::DeltaPower(1.0), sigma, l).ok()?;
            let c = l.dotc(&dl) / Complex64::from(norm2);
            let residual = (&dl - l * c).norm() / norm2.sqrt();
            (residual <= 1e-8 && c.re > 0.0 && c.im.abs() <= 1e-8 * c.re).then(|| -c.re.ln())
        })
        .collect()
}

/// ω_j with Δ_σ(L_j) = e^{−ω_j} L_j, or None when some jump is not a modular eigenvector.
pub fn bohr_frequencies(ctx: &GeneratorContext) -> Option<Vec<f64>> {
    ctx.bohr.clone()
}

/// Bohr frequencies of an arbitrary operator list against σ.
pub fn bohr_frequencies_of(sigma: &FaithfulState, ops: &[CMatrix]) -> Option<Vec<f64>> {
    bohr_for(sigma, ops)
}

/// A + Δ^{1/2}(A*), which satisfies the modular alignment condition.
pub fn align_jump(sigma: &FaithfulState, a: &CMatrix) -> Result<CMatrix> {
    Ok(a + spectral_transform(SpectralTransform::DeltaPower(0.5), sigma, &a.adjoint())?)
}

/// max_j ‖Δ^{1/2}(L_j*) − L_j‖ relative to ‖L_j‖.
pub fn alignment_residual(sigma: &FaithfulState, jumps: &[CMatrix]) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for l in jumps {
        let t = spectral_transform(SpectralTransform::DeltaPower(0.5), sigma, &l.adjoint())?;
        worst = worst.max(max_norm(&(t - l)) / max_norm(l).max(1.0));
    }
    Ok(worst)
}

/// H = (i/2) tanh(log Δ^{1/4})(Σ L_j* L_j) for aligned jumps.
pub fn kms_canonical_hamiltonian(ctx: &GeneratorContext) -> Result<HermitianOperator> {
    let sigma = ctx.sigma()?;
    let jumps = ctx.lindbladian.jumps();
    let residual = alignment_residual(sigma, jumps)?;
    if residual > 1e-8 {
        return Err(Error::AlignmentFailed(residual));
    }
    let k = ctx.lindbladian.jump_square_sum();
    let h = spectral_transform(SpectralTransform::TanhLogQuarter, sigma, &k)? * (I * 0.5);
    HermitianOperator::new(h)
}

/// E(X) = −½(⟨X, L X⟩ + ⟨L X, X⟩) in the KMS inner product.
pub fn dirichlet_form(ctx: &GeneratorContext, x: &CMatrix) -> Result<f64> {
    let sigma = ctx.sigma()?;
    let lx = ctx.apply(x)?;
    Ok(-inner_product(InnerProductKind::Kms, sigma, x, &lx)?.re)
}

/// I(ρ) = E(Γ^{-1/2}(√ρ)).
pub fn fisher_information(ctx: &GeneratorContext, rho: &DensityOperator) -> Result<f64> {
    let sigma = ctx.sigma()?;
    check_square(rho.matrix(), sigma.dim())?;
    let x = gamma_map(-0.5, sigma, &psd_sqrt(rho.matrix())?)?;
    dirichlet_form(ctx, &x)
}

/// Same QMS iff the Heisenberg superoperators agree.
pub fn gauge_equivalence_check(a: &Lindbladian, b: &Lindbladian) -> Result<bool> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch { expected: a.dim(), found: b.dim() });
    }
    Ok(max_norm(&(a.heisenberg().matrix() - b.heisenberg().matrix())) <= 1e-9)
}

/// L'_i = Σ_j U_ij L_j + c_i id with H' = H − Im(Σ_j c_j L_j*) + e·id; generates the same QMS.
pub fn gauge_transform(l: &Lindbladian, u: &CMatrix, c: &[Complex64], e: f64) -> Result<Lindbladian> {
    let k = l.num_jumps();
    check_square(u, k)?;
    if c.len() != k {
        return Err(Error::DimensionMismatch { expected: k, found: c.len() });
    }
    let d = l.dim();
    let id = identity(d);
    let jumps: Vec<CMatrix> = (0..k)
        .map(|i| {
            l.jumps().iter().enumerate().fold(id.clone() * c[i], |acc, (j, lj)| acc + lj * u[(i, j)])
        })
        .collect();
    let a = l
        .jumps()
        .iter()
        .zip(c)
        .fold(CMatrix::zeros(d, d), |acc, (lj, &cj)| acc + lj.adjoint() * cj);
    let im_a = (&a - a.adjoint()) * (-I * 0.5);
    let h = l.hamiltonian() - im_a + id * Complex64::from(e);
    Lindbladian::new(hermitian_part(&h), jumps)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::{diag, ket_bra, trace};

    fn amplitude_damping() -> Lindbladian {
        Lindbladian::from_jumps(vec![ket_bra(2, 0, 1)]).unwrap()
    }

    #[test]
    fn generator_examples() {
        let l = amplitude_damping();
        let out = l.apply(&ket_bra(2, 0, 0)).unwrap();
        assert!(max_norm(&(out - ket_bra(2, 1, 1))) < 1e-15);
        let out = l.apply(&ket_bra(2, 1, 1)).unwrap();
        assert!(max_norm(&(out + ket_bra(2, 1, 1))) < 1e-15);
        assert!(max_norm(&l.apply(&identity(2)).unwrap()) < 1e-15);
    }

    #[test]
    fn superoperators_match_direct_application() {
        let h = crate::spectral::from_real(2, 2, &[0.3, 0.1, 0.1, -0.2]);
        let l = Lindbladian::new(h, vec![ket_bra(2, 0, 1) * Complex64::new(0.5, 0.2), ket_bra(2, 1, 1)]).unwrap();
        let sh = l.heisenberg();
        let ss = l.schrodinger();
        for i in 0..2 {
            for j in 0..2 {
                let e = ket_bra(2, i, j);
                assert!(max_norm(&(sh.apply(&e).unwrap() - l.apply(&e).unwrap())) < 1e-13);
                assert!(max_norm(&(ss.apply(&e).unwrap() - l.apply_adjoint(&e).unwrap())) < 1e-13);
            }
        }
    }

    #[test]
    fn amplitude_damping_is_not_faithful() {
        let ctx = stationary_state(&amplitude_damping()).unwrap();
        assert!(max_norm(&(ctx.stationary().matrix() - ket_bra(2, 0, 0))) < 1e-9);
        assert!(!ctx.is_primitive());
        assert!(matches!(ctx.sigma(), Err(Error::NotFaithful(_))));
        assert!(dirichlet_form(&ctx, &identity(2)).is_err());
    }

    #[test]
    fn thermal_qubit_bohr() {
        let (s0, s1) = (0.7, 0.3);
        let l = Lindbladian::from_jumps(vec![ket_bra(2, 0, 1), ket_bra(2, 1, 0) * Complex64::from((s1 / s0 as f64).sqrt())])
            .unwrap();
        let ctx = stationary_state(&l).unwrap();
        assert!(max_norm(&(ctx.stationary().matrix() - diag(&[s0, s1]))) < 1e-9);
        let w = bohr_frequencies(&ctx).unwrap();
        assert!((w[0] - (s1 / s0 as f64).ln()).abs() < 1e-10);
        assert!((w[1] + (s1 / s0 as f64).ln()).abs() < 1e-10);

        let mixed = Lindbladian::from_jumps(vec![crate::spectral::pauli_x()]).unwrap();
        let sigma = FaithfulState::diagonal(&[s0, s1]).unwrap();
        assert!(bohr_frequencies_of(&sigma, mixed.jumps()).is_none());
    }

    #[test]
    fn canonical_hamiltonian_of_aligned_pair() {
        let sigma = FaithfulState::diagonal(&[0.8, 0.2]).unwrap();
        let r = (0.2f64 / 0.8).sqrt();
        let l1 = ket_bra(2, 0, 1) + ket_bra(2, 1, 0) * Complex64::from(r);
        let l2 = (ket_bra(2, 0, 1) - ket_bra(2, 1, 0) * Complex64::from(r)) * I;
        assert!(alignment_residual(&sigma, &[l1.clone(), l2.clone()]).unwrap() < 1e-14);
        let l = Lindbladian::from_jumps(vec![l1, l2]).unwrap();
        let ctx = stationary_state(&l).unwrap();
        let h = kms_canonical_hamiltonian(&ctx).unwrap();
        assert!(max_norm(&(h.matrix() - h.matrix().adjoint())) < 1e-12);
        assert!(check_detailed_balance(InnerProductKind::Kms, &ctx).unwrap().symmetric);
    }

    #[test]
    fn unaligned_jumps_are_refused() {
        let l = amplitude_damping();
        let mut with_pump = l.jumps().to_vec();
        with_pump.push(ket_bra(2, 1, 0) * Complex64::from(0.5));
        let ctx = stationary_state(&Lindbladian::from_jumps(with_pump).unwrap()).unwrap();
        assert!(matches!(kms_canonical_hamiltonian(&ctx), Err(Error::AlignmentFailed(_))));
    }

    #[test]
    fn fisher_vanishes_at_sigma() {
        let sigma = FaithfulState::diagonal(&[0.6, 0.4]).unwrap();
        let r = (0.4f64 / 0.6).sqrt();
        let l = Lindbladian::from_jumps(vec![ket_bra(2, 0, 1), ket_bra(2, 1, 0) * Complex64::from(r)]).unwrap();
        let ctx = stationary_state(&l).unwrap();
        assert!(fisher_information(&ctx, sigma.state()).unwrap().abs() < 1e-12);
        assert!(trace(ctx.stationary().matrix()).re - 1.0 < 1e-12);
    }
}
