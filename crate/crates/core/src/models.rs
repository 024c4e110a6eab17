//! Constructors for the example semigroups: depolarizing, classical chains,
//! tensor products, heat-bath samplers and the detailed-balance counterexamples.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::lindblad::{dual_superoperator, Lindbladian};
use crate::spectral::{
    check_square, embed_operator, gram, gram_inverse, hermitian_function, identity, ket_bra, kron, max_norm,
    partial_trace, CMatrix, DensityOperator, FaithfulState, InnerProductKind, SuperOperator,
};

pub const DEFAULT_DIMENSION_GUARD: usize = 64;

/// Jumps √s_x |e_x><e_y| over the eigenbasis of σ, H = 0; generates X ↦ Tr[σX] id − X.
pub fn depolarizing(sigma: &FaithfulState) -> Lindbladian {
    let d = sigma.dim();
    let s = sigma.eigenvalues();
    let mut jumps = Vec::with_capacity(d * d);
    for x in 0..d {
        for y in 0..d {
            let unit = sigma.from_eigenbasis(&ket_bra(d, x, y));
            jumps.push(unit * Complex64::from(s[x].sqrt()));
        }
    }
    Lindbladian::from_jumps(jumps).expect("square jumps")
}

/// Unit-normalized |e_x><e_y| over the eigenbasis of σ, in the same order as
/// the jumps of [`depolarizing`]; the derivations used for depolarizing Lipschitz norms.
pub fn matrix_unit_derivations(sigma: &FaithfulState) -> Vec<CMatrix> {
    let d = sigma.dim();
    (0..d)
        .flat_map(|x| (0..d).map(move |y| (x, y)))
        .map(|(x, y)| sigma.from_eigenbasis(&ket_bra(d, x, y)))
        .collect()
}

/// Index of the jump √s_x|e_x><e_y| in [`depolarizing`].
pub fn depolarizing_jump_index(dim: usize, x: usize, y: usize) -> usize {
    x * dim + y
}

/// Continuous-time Markov chain on n states.
#[derive(Debug, Clone)]
pub struct ClassicalChain {
    rates: DMatrix<f64>,
    stationary: Vec<f64>,
    reversible: bool,
}

impl ClassicalChain {
    /// `rates` is Q with nonnegative off-diagonal entries and zero row sums; it must be irreducible.
    pub fn new(rates: DMatrix<f64>) -> Result<Self> {
        let n = rates.nrows();
        if n == 0 || rates.ncols() != n {
            return Err(Error::InvalidInput("rate matrix must be square and nonempty".into()));
        }
        let scale = rates.amax().max(1.0);
        for i in 0..n {
            for j in 0..n {
                if i != j && rates[(i, j)] < 0.0 {
                    return Err(Error::InvalidInput(format!("negative rate Q[{i}][{j}]")));
                }
            }
            let row: f64 = rates.row(i).sum();
            if row.abs() > 1e-12 * scale {
                return Err(Error::InvalidInput(format!("row {i} of Q sums to {row}")));
            }
        }
        let svd = rates.transpose().svd(false, true);
        let v_t = svd.v_t.expect("requested");
        let k = svd.singular_values.imin();
        let mut pi: Vec<f64> = v_t.row(k).iter().copied().collect();
        let total: f64 = pi.iter().sum();
        pi.iter_mut().for_each(|p| *p /= total);
        if pi.iter().any(|&p| !(p > 1e-14)) {
            return Err(Error::InvalidInput("chain is not irreducible".into()));
        }
        let residual = (DMatrix::from_row_slice(1, n, &pi) * &rates).amax();
        if residual > 1e-12 * scale {
            return Err(Error::Numerical(format!("stationary residual {residual:e}")));
        }
        let reversible = (0..n)
            .all(|i| (0..n).all(|j| (pi[i] * rates[(i, j)] - pi[j] * rates[(j, i)]).abs() <= 1e-12 * scale));
        Ok(Self { rates, stationary: pi, reversible })
    }

    pub fn two_state(a: f64, b: f64) -> Result<Self> {
        Self::new(DMatrix::from_row_slice(2, 2, &[-a, a, b, -b]))
    }

    pub fn size(&self) -> usize {
        self.stationary.len()
    }

    pub fn rates(&self) -> &DMatrix<f64> {
        &self.rates
    }

    pub fn stationary(&self) -> &[f64] {
        &self.stationary
    }

    pub fn is_reversible(&self) -> bool {
        self.reversible
    }

    /// −Σ_ij π_i g_i Q_ij g_j.
    pub fn dirichlet_form(&self, g: &[f64]) -> f64 {
        let n = self.size();
        let mut acc = 0.0;
        for i in 0..n {
            for j in 0..n {
                acc += self.stationary[i] * g[i] * self.rates[(i, j)] * g[j];
            }
        }
        -acc
    }

    /// Gap of the π-symmetrized rate matrix.
    pub fn spectral_gap(&self) -> f64 {
        let n = self.size();
        let pi = &self.stationary;
        let sym = DMatrix::from_fn(n, n, |i, j| {
            let a = pi[i].sqrt() * self.rates[(i, j)] / pi[j].sqrt();
            let b = pi[j].sqrt() * self.rates[(j, i)] / pi[i].sqrt();
            -0.5 * (a + b)
        });
        let mut ev: Vec<f64> = sym.symmetric_eigenvalues().iter().copied().collect();
        ev.sort_by(f64::total_cmp);
        ev.get(1).copied().unwrap_or(0.0)
    }
}

/// One jump √Q_ij |j><i| per directed edge, H = 0.
pub fn classical_embedding(chain: &ClassicalChain) -> Lindbladian {
    let n = chain.size();
    let mut jumps = Vec::new();
    for i in 0..n {
        for j in 0..n {
            let q = chain.rates()[(i, j)];
            if i != j && q > 0.0 {
                jumps.push(ket_bra(n, j, i) * Complex64::from(q.sqrt()));
            }
        }
    }
    if jumps.is_empty() {
        jumps.push(CMatrix::zeros(n, n));
    }
    Lindbladian::from_jumps(jumps).expect("square jumps")
}

/// Σ_k L_k ⊗ id on the other factors; factor 0 is the most significant.
pub fn tensor_product(factors: &[Lindbladian], guard: usize) -> Result<Lindbladian> {
    if factors.is_empty() {
        return Err(Error::InvalidInput("no factors".into()));
    }
    let dims: Vec<usize> = factors.iter().map(|f| f.dim()).collect();
    let total: usize = dims.iter().product();
    if total > guard {
        return Err(Error::DimensionGuard { dim: total, guard });
    }
    let mut h = CMatrix::zeros(total, total);
    let mut jumps = Vec::new();
    for (k, f) in factors.iter().enumerate() {
        let before: usize = dims[..k].iter().product();
        let after: usize = dims[k + 1..].iter().product();
        let lift = |m: &CMatrix| kron(&kron(&identity(before), m), &identity(after));
        h += lift(f.hamiltonian());
        jumps.extend(f.jumps().iter().map(lift));
    }
    Lindbladian::new(h, jumps)
}

pub fn tensor_state(states: &[&CMatrix]) -> CMatrix {
    states.iter().fold(identity(1), |acc, s| kron(&acc, s))
}

/// H = Σ_A h_A on `n_sites` sites of dimension `local_dim`, with pairwise commuting terms.
#[derive(Debug, Clone)]
pub struct CommutingHamiltonian {
    n_sites: usize,
    local_dim: usize,
    terms: Vec<(Vec<usize>, CMatrix)>,
    beta: f64,
}

impl CommutingHamiltonian {
    pub fn new(n_sites: usize, local_dim: usize, terms: Vec<(Vec<usize>, CMatrix)>, beta: f64) -> Result<Self> {
        let total = local_dim.pow(n_sites as u32);
        if total > DEFAULT_DIMENSION_GUARD {
            return Err(Error::DimensionGuard { dim: total, guard: DEFAULT_DIMENSION_GUARD });
        }
        if !(beta >= 0.0) || !beta.is_finite() {
            return Err(Error::InvalidInput(format!("inverse temperature {beta}")));
        }
        let dims = vec![local_dim; n_sites];
        let mut embedded = Vec::with_capacity(terms.len());
        for (support, h) in &terms {
            if support.is_empty() || support.iter().any(|&s| s >= n_sites) {
                return Err(Error::InvalidInput(format!("bad support {support:?}")));
            }
            let norm = crate::spectral::op_norm(h);
            if norm > 1.0 + 1e-12 {
                return Err(Error::InvalidInput(format!("term on {support:?} has norm {norm} > 1")));
            }
            crate::spectral::HermitianOperator::new(h.clone())?;
            embedded.push(embed_operator(h, support, &dims)?);
        }
        for a in 0..embedded.len() {
            for b in a + 1..embedded.len() {
                let c = crate::spectral::commutator(&embedded[a], &embedded[b]);
                if max_norm(&c) > 1e-10 {
                    return Err(Error::InvalidInput(format!("terms {a} and {b} do not commute")));
                }
            }
        }
        Ok(Self { n_sites, local_dim, terms, beta })
    }

    pub fn n_sites(&self) -> usize {
        self.n_sites
    }

    pub fn local_dim(&self) -> usize {
        self.local_dim
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn terms(&self) -> &[(Vec<usize>, CMatrix)] {
        &self.terms
    }

    pub fn dims(&self) -> Vec<usize> {
        vec![self.local_dim; self.n_sites]
    }

    pub fn matrix(&self) -> CMatrix {
        let dims = self.dims();
        let total: usize = dims.iter().product();
        self.terms.iter().fold(CMatrix::zeros(total, total), |acc, (s, h)| {
            acc + embed_operator(h, s, &dims).expect("validated support")
        })
    }

    /// e^{−βH}/Tr e^{−βH}.
    pub fn gibbs_state(&self) -> Result<FaithfulState> {
        let h = self.matrix();
        let e = crate::spectral::eigh(&h)?;
        let shift = e.values[0];
        let w = e.reconstruct_with(|x| (-self.beta * (x - shift)).exp());
        let z = crate::spectral::trace(&w).re;
        FaithfulState::from_matrix(crate::spectral::hermitian_part(&(w / Complex64::from(z))))
    }
}

#[derive(Debug, Clone)]
pub struct HeatBath {
    pub lindbladian: Lindbladian,
    pub gibbs: FaithfulState,
    /// Ψ_v in the Heisenberg picture, one per site.
    pub site_channels: Vec<SuperOperator>,
}

/// Σ_v (Ψ_v − id) with Ψ_v* the Petz recovery of the partial trace over site v.
pub fn heat_bath(h: &CommutingHamiltonian) -> Result<HeatBath> {
    let dims = h.dims();
    let d = h.local_dim();
    let total: usize = dims.iter().product();
    let omega = h.gibbs_state()?;
    let omega_half = omega.power(0.5);
    let mut jumps = Vec::new();
    let mut site_channels = Vec::new();
    for v in 0..h.n_sites() {
        let others: Vec<usize> = (0..h.n_sites()).filter(|&k| k != v).collect();
        let reduced = partial_trace(omega.matrix(), &[v], &dims)?;
        let reduced_inv_half = hermitian_function(&reduced, |x| x.powf(-0.5))?;
        let lifted = if others.is_empty() {
            identity(total) * reduced_inv_half[(0, 0)]
        } else {
            embed_operator(&reduced_inv_half, &others, &dims)?
        };
        let front = &omega_half * lifted;
        let mut site_jumps = Vec::with_capacity(d * d);
        for a in 0..d {
            for b in 0..d {
                let flip = embed_operator(&ket_bra(d, b, a), &[v], &dims)?;
                site_jumps.push(&front * flip);
            }
        }
        let psi = SuperOperator::from_map(total, |x| {
            site_jumps.iter().map(|k| k.adjoint() * x * k).sum()
        });
        let unital = max_norm(&(psi.apply(&identity(total))? - identity(total)));
        if unital > 1e-10 {
            return Err(Error::Numerical(format!("site {v} channel not unital ({unital:e})")));
        }
        let choi_min = psi.choi_min_eigenvalue();
        if choi_min < -1e-10 {
            return Err(Error::Numerical(format!("site {v} channel not CP ({choi_min:e})")));
        }
        site_channels.push(psi);
        jumps.extend(site_jumps);
    }
    Ok(HeatBath { lindbladian: Lindbladian::from_jumps(jumps)?, gibbs: omega, site_channels })
}

/// Lindbladian of Φ − id for a unital CP map Φ given in the Heisenberg picture.
pub fn channel_generator(channel: &SuperOperator) -> Result<Lindbladian> {
    let d = channel.dim();
    let unital = max_norm(&(channel.apply(&identity(d))? - identity(d)));
    if unital > 1e-10 {
        return Err(Error::InvalidInput(format!("channel is not unital ({unital:e})")));
    }
    let scale = channel.max_norm().max(1.0);
    let kraus = channel.kraus_heisenberg(1e-12 * scale)?;
    let l = if kraus.is_empty() {
        Lindbladian::from_jumps(vec![CMatrix::zeros(d, d)])?
    } else {
        Lindbladian::from_jumps(kraus)?
    };
    let expected = channel.sub(&SuperOperator::identity(d))?;
    let err = max_norm(&(l.heisenberg().matrix() - expected.matrix()));
    if err > 1e-10 * scale {
        return Err(Error::Numerical(format!("Kraus reconstruction error {err:e}")));
    }
    Ok(l)
}

pub fn kraus_channel(kraus: &[CMatrix]) -> Result<SuperOperator> {
    let d = kraus.first().map(|k| k.nrows()).ok_or_else(|| Error::InvalidInput("no Kraus operators".into()))?;
    for k in kraus {
        check_square(k, d)?;
    }
    Ok(SuperOperator::from_map(d, |x| kraus.iter().map(|k| k.adjoint() * x * k).sum()))
}

#[derive(Debug, Clone, Copy)]
pub struct CounterexampleParams {
    pub u1: [f64; 2],
    pub u2: [f64; 2],
    pub v1: [f64; 2],
    pub v2: [f64; 2],
    pub p: f64,
}

impl Default for CounterexampleParams {
    fn default() -> Self {
        let (t1, t2) = (0.3f64, 1.1f64);
        Self { u1: [1.0, 0.0], u2: [0.0, 1.0], v1: [t1.cos(), t1.sin()], v2: [t2.cos(), t2.sin()], p: 0.3 }
    }
}

#[derive(Debug, Clone)]
pub struct Counterexamples {
    pub phi: SuperOperator,
    /// Φ^KMS ∘ Φ.
    pub psi: SuperOperator,
    /// M⁻¹ ∘ Ψ_* ∘ Γ.
    pub psi_tilde: SuperOperator,
    pub sigma: FaithfulState,
    pub p_channel: SuperOperator,
    pub p_sigma: FaithfulState,
}

fn dot(a: [f64; 2], b: [f64; 2]) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

fn outer(a: [f64; 2], b: [f64; 2]) -> CMatrix {
    crate::spectral::from_real(2, 2, &[a[0] * b[0], a[0] * b[1], a[1] * b[0], a[1] * b[1]])
}

pub fn symmetry_counterexamples(params: &CounterexampleParams) -> Result<Counterexamples> {
    let CounterexampleParams { u1, u2, v1, v2, p } = *params;
    let tol = 1e-12;
    for (name, w) in [("u1", u1), ("u2", u2), ("v1", v1), ("v2", v2)] {
        if (dot(w, w) - 1.0).abs() > tol {
            return Err(Error::InvalidInput(format!("{name} is not a unit vector")));
        }
    }
    if dot(u1, u2).abs() > tol {
        return Err(Error::InvalidInput("u1 and u2 are not orthogonal".into()));
    }
    if dot(v1, v2).abs() <= tol {
        return Err(Error::InvalidInput("v1 and v2 must not be orthogonal".into()));
    }
    let a = dot(v2, u1).powi(2);
    let b = dot(v1, u2).powi(2);
    if (a + b - 1.0).abs() <= tol || a * b <= tol || (a - b).abs() <= tol {
        return Err(Error::InvalidInput(format!("degenerate overlaps a = {a}, b = {b}")));
    }
    if !(p > 0.0 && p < 0.5) {
        return Err(Error::InvalidInput(format!("p = {p} outside (0, 1/2)")));
    }
    let sigma_m = outer(v1, v1) * Complex64::from(a / (a + b)) + outer(v2, v2) * Complex64::from(b / (a + b));
    let sigma = FaithfulState::new(DensityOperator::new(sigma_m)?)?;
    if max_norm(&(sigma.matrix() - identity(2) * Complex64::from(0.5))) <= tol {
        return Err(Error::InvalidInput("stationary state is maximally mixed".into()));
    }

    let phi = kraus_channel(&[outer(v1, u1), outer(v2, u2)])?;
    let phi_kms = dual_superoperator(InnerProductKind::Kms, &sigma, &phi)?;
    let psi = phi_kms.compose(&phi)?;
    let psi_tilde = gram_inverse(InnerProductKind::Bkm, &sigma)
        .compose(&psi.hs_adjoint())?
        .compose(&gram(InnerProductKind::Kms, &sigma))?;

    let k1 = crate::spectral::diag(&[p.sqrt(), (1.0 - p).sqrt()]);
    let k2 = crate::spectral::from_real(2, 2, &[0.0, p.sqrt(), (1.0 - p).sqrt(), 0.0]);
    let p_channel = kraus_channel(&[k1, k2])?;
    let p_sigma = FaithfulState::diagonal(&[p, 1.0 - p])?;
    Ok(Counterexamples { phi, psi, psi_tilde, sigma, p_channel, p_sigma })
}

/// ⟨x, Φ^GNS(P) x⟩ for P the all-ones matrix and x = (1, −1).
pub fn gns_positivity_witness(channel: &SuperOperator, sigma: &FaithfulState) -> Result<f64> {
    let dual = dual_superoperator(InnerProductKind::Gns, sigma, channel)?;
    let ones = CMatrix::from_element(2, 2, Complex64::from(1.0));
    let m = dual.apply(&ones)?;
    let x = crate::spectral::CVector::from_vec(vec![Complex64::from(1.0), Complex64::from(-1.0)]);
    Ok(x.dotc(&(&m * &x)).re)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lindblad::{check_detailed_balance, stationary_state, symmetry_deviation};
    use crate::spectral::{diag, trace};

    #[test]
    fn depolarizing_closed_form() {
        let sigma = FaithfulState::from_matrix(crate::spectral::from_real(2, 2, &[0.7, 0.2, 0.2, 0.3])).unwrap();
        let l = depolarizing(&sigma);
        let closed = SuperOperator::from_map(2, |x| identity(2) * trace(&(sigma.matrix() * x)) - x);
        assert!(max_norm(&(l.heisenberg().matrix() - closed.matrix())) < 1e-12);
        let ctx = stationary_state(&l).unwrap();
        assert!(max_norm(&(ctx.stationary().matrix() - sigma.matrix())) < 1e-9);
        assert!(check_detailed_balance(InnerProductKind::Gns, &ctx).unwrap().symmetric);

        let half = depolarizing(&FaithfulState::maximally_mixed(2));
        for j in half.jumps() {
            assert!((max_norm(j) - 0.5f64.sqrt()).abs() < 1e-14);
        }
    }

    #[test]
    fn two_state_chain() {
        let (a, b) = (0.7, 1.9);
        let chain = ClassicalChain::two_state(a, b).unwrap();
        assert!((chain.stationary()[0] - b / (a + b)).abs() < 1e-14);
        assert!((chain.spectral_gap() - (a + b)).abs() < 1e-12);
        let ctx = stationary_state(&classical_embedding(&chain)).unwrap();
        assert!(max_norm(&(ctx.stationary().matrix() - diag(chain.stationary()))) < 1e-9);
        let g = [0.3, -1.2];
        let x = diag(&g);
        let lx = ctx.apply(&x).unwrap();
        let qg = chain.rates() * nalgebra::DVector::from_column_slice(&g);
        assert!(max_norm(&(lx - diag(qg.as_slice()))) < 1e-14);
    }

    #[test]
    fn nonreversible_chain_is_not_kms_symmetric() {
        let q = DMatrix::from_row_slice(3, 3, &[-1.0, 1.0, 0.0, 0.0, -1.0, 1.0, 1.0, 0.2, -1.2]);
        let chain = ClassicalChain::new(q).unwrap();
        assert!(!chain.is_reversible());
        let ctx = stationary_state(&classical_embedding(&chain)).unwrap();
        assert!(!check_detailed_balance(InnerProductKind::Kms, &ctx).unwrap().symmetric);
    }

    #[test]
    fn tensor_product_of_one_factor_is_identity() {
        let l = depolarizing(&FaithfulState::diagonal(&[0.6, 0.4]).unwrap());
        let t = tensor_product(std::slice::from_ref(&l), DEFAULT_DIMENSION_GUARD).unwrap();
        assert_eq!(t.heisenberg(), l.heisenberg());
        let big = vec![l; 7];
        assert!(matches!(tensor_product(&big, 64), Err(Error::DimensionGuard { dim: 128, guard: 64 })));
    }

    #[test]
    fn heat_bath_single_site_is_depolarizing() {
        let field = crate::spectral::pauli_z() * Complex64::from(0.8);
        let h = CommutingHamiltonian::new(1, 2, vec![(vec![0], field)], 0.7).unwrap();
        let hb = heat_bath(&h).unwrap();
        let dep = depolarizing(&hb.gibbs);
        assert!(max_norm(&(hb.lindbladian.heisenberg().matrix() - dep.heisenberg().matrix())) < 1e-12);
    }

    #[test]
    fn noncommuting_terms_rejected() {
        let terms = vec![(vec![0], crate::spectral::pauli_z()), (vec![0], crate::spectral::pauli_x())];
        assert!(CommutingHamiltonian::new(1, 2, terms, 1.0).is_err());
        let big = vec![(vec![0], crate::spectral::pauli_z() * Complex64::from(2.0))];
        assert!(CommutingHamiltonian::new(1, 2, big, 1.0).is_err());
    }

    #[test]
    fn counterexample_stationary_state() {
        let fx = symmetry_counterexamples(&CounterexampleParams::default()).unwrap();
        let psi_l = channel_generator(&fx.psi).unwrap();
        let ctx = stationary_state(&psi_l).unwrap();
        assert!(max_norm(&(ctx.stationary().matrix() - fx.sigma.matrix())) < 1e-9);
        let phi_l = channel_generator(&fx.phi).unwrap();
        let ctx_phi = stationary_state(&phi_l).unwrap();
        assert!(max_norm(&(ctx_phi.stationary().matrix() - fx.sigma.matrix())) < 1e-12);
        let gen = fx.psi.sub(&SuperOperator::identity(2)).unwrap();
        assert!(symmetry_deviation(InnerProductKind::Kms, &fx.sigma, &gen).unwrap().deviation < 1e-10);
    }

    #[test]
    fn counterexample_rejects_bad_parameters() {
        let mut p = CounterexampleParams::default();
        p.p = 0.6;
        assert!(symmetry_counterexamples(&p).is_err());
        let mut p = CounterexampleParams::default();
        p.v2 = [0.0, 1.0];
        p.v1 = [1.0, 0.0];
        assert!(symmetry_counterexamples(&p).is_err());
    }
}
