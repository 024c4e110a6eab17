//! Dense complex matrices, superoperators in column-stacking form, and the
//! spectral calculus of the modular operator of a faithful state.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type CMatrix = DMatrix<Complex64>;
pub type CVector = DVector<Complex64>;

pub const HERMITICITY_TOL: f64 = 1e-10;
pub const FAITHFUL_TOL: f64 = 1e-12;

pub const ZERO: Complex64 = Complex64::new(0.0, 0.0);
pub const ONE: Complex64 = Complex64::new(1.0, 0.0);
pub const I: Complex64 = Complex64::new(0.0, 1.0);

pub fn identity(dim: usize) -> CMatrix {
    CMatrix::identity(dim, dim)
}

/// Real diagonal matrix.
pub fn diag(values: &[f64]) -> CMatrix {
    let d = values.len();
    CMatrix::from_fn(d, d, |i, j| if i == j { Complex64::from(values[i]) } else { ZERO })
}

/// Matrix unit |i><j|.
pub fn ket_bra(dim: usize, i: usize, j: usize) -> CMatrix {
    let mut m = CMatrix::zeros(dim, dim);
    m[(i, j)] = ONE;
    m
}

pub fn from_real(rows: usize, cols: usize, data_row_major: &[f64]) -> CMatrix {
    CMatrix::from_fn(rows, cols, |i, j| Complex64::from(data_row_major[i * cols + j]))
}

pub fn pauli_x() -> CMatrix {
    from_real(2, 2, &[0.0, 1.0, 1.0, 0.0])
}

pub fn pauli_y() -> CMatrix {
    CMatrix::from_row_slice(2, 2, &[ZERO, -I, I, ZERO])
}

pub fn pauli_z() -> CMatrix {
    from_real(2, 2, &[1.0, 0.0, 0.0, -1.0])
}

pub fn trace(a: &CMatrix) -> Complex64 {
    a.diagonal().iter().sum()
}

pub fn max_norm(a: &CMatrix) -> f64 {
    a.iter().fold(0.0, |m, z| m.max(z.norm()))
}

pub fn commutator(a: &CMatrix, b: &CMatrix) -> CMatrix {
    a * b - b * a
}

pub fn anticommutator(a: &CMatrix, b: &CMatrix) -> CMatrix {
    a * b + b * a
}

pub fn hermitian_part(a: &CMatrix) -> CMatrix {
    (a + a.adjoint()) * Complex64::from(0.5)
}

pub fn kron(a: &CMatrix, b: &CMatrix) -> CMatrix {
    a.kronecker(b)
}

/// Largest singular value.
pub fn op_norm(a: &CMatrix) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    a.clone().singular_values().max()
}

/// Sum of singular values.
pub fn trace_norm(a: &CMatrix) -> f64 {
    a.clone().singular_values().sum()
}

pub fn check_square(a: &CMatrix, dim: usize) -> Result<()> {
    if a.nrows() != dim || a.ncols() != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            found: if a.nrows() != dim { a.nrows() } else { a.ncols() },
        });
    }
    Ok(())
}

fn hermiticity_deviation(a: &CMatrix) -> f64 {
    max_norm(&(a - a.adjoint()))
}

/// Eigen-decomposition of a Hermitian matrix, eigenvalues ascending.
#[derive(Debug, Clone)]
pub struct Eigh {
    pub values: Vec<f64>,
    pub vectors: CMatrix,
}

impl Eigh {
    pub fn reconstruct_with(&self, f: impl Fn(f64) -> f64) -> CMatrix {
        let d = self.values.len();
        let mut scaled = self.vectors.clone();
        for j in 0..d {
            let w = Complex64::from(f(self.values[j]));
            for i in 0..d {
                scaled[(i, j)] *= w;
            }
        }
        scaled * self.vectors.adjoint()
    }
}

/// Hermitian eigensolver applied to (A+A*)/2 once hermiticity is asserted.
pub fn eigh(a: &CMatrix) -> Result<Eigh> {
    if a.nrows() != a.ncols() {
        return Err(Error::DimensionMismatch { expected: a.nrows(), found: a.ncols() });
    }
    let dev = hermiticity_deviation(a);
    if dev > HERMITICITY_TOL * (1.0 + max_norm(a)) {
        return Err(Error::NotHermitian(dev));
    }
    Ok(eigh_unchecked(&hermitian_part(a)))
}

pub(crate) fn eigh_unchecked(h: &CMatrix) -> Eigh {
    let d = h.nrows();
    let se = h.clone().symmetric_eigen();
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&i, &j| se.eigenvalues[i].total_cmp(&se.eigenvalues[j]));
    let values = order.iter().map(|&i| se.eigenvalues[i]).collect();
    let vectors = CMatrix::from_fn(d, d, |r, c| se.eigenvectors[(r, order[c])]);
    Eigh { values, vectors }
}

pub fn eigenvalues_hermitian(a: &CMatrix) -> Vec<f64> {
    let mut v: Vec<f64> = hermitian_part(a).symmetric_eigenvalues().iter().copied().collect();
    v.sort_by(f64::total_cmp);
    v
}

/// f(A) for Hermitian A.
pub fn hermitian_function(a: &CMatrix, f: impl Fn(f64) -> f64) -> Result<CMatrix> {
    Ok(eigh(a)?.reconstruct_with(f))
}

/// Square root of a PSD matrix, eigenvalues clipped at zero first.
pub fn psd_sqrt(a: &CMatrix) -> Result<CMatrix> {
    hermitian_function(a, |x| x.max(0.0).sqrt())
}

#[derive(Debug, Clone, PartialEq)]
pub struct HermitianOperator {
    entries: CMatrix,
}

impl HermitianOperator {
    pub fn new(entries: CMatrix) -> Result<Self> {
        if entries.nrows() != entries.ncols() {
            return Err(Error::DimensionMismatch { expected: entries.nrows(), found: entries.ncols() });
        }
        let dev = hermiticity_deviation(&entries);
        if dev > HERMITICITY_TOL {
            return Err(Error::NotHermitian(dev));
        }
        Ok(Self { entries: hermitian_part(&entries) })
    }

    pub fn zeros(dim: usize) -> Self {
        Self { entries: CMatrix::zeros(dim, dim) }
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.entries
    }

    pub fn into_matrix(self) -> CMatrix {
        self.entries
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DensityOperator {
    entries: CMatrix,
}

impl DensityOperator {
    /// Validates hermiticity, positivity (eigenvalues above -1e-10 are clipped) and unit trace.
    pub fn new(entries: CMatrix) -> Result<Self> {
        let e = eigh(&entries)?;
        let min = e.values.first().copied().unwrap_or(0.0);
        if min < -HERMITICITY_TOL {
            return Err(Error::InvalidState(format!("negative eigenvalue {min:e}")));
        }
        let tr = trace(&entries);
        if (tr - ONE).norm() > HERMITICITY_TOL {
            return Err(Error::InvalidState(format!("trace {tr} differs from 1")));
        }
        Ok(Self { entries: e.reconstruct_with(|x| x.max(0.0)) })
    }

    /// Hermitian-symmetrize, clip negative eigenvalues and renormalize the trace.
    pub fn project(entries: &CMatrix) -> Result<Self> {
        let e = eigh_unchecked(&hermitian_part(entries));
        let total: f64 = e.values.iter().map(|x| x.max(0.0)).sum();
        if !(total > 0.0) || !total.is_finite() {
            return Err(Error::InvalidState("no positive part".into()));
        }
        Ok(Self { entries: e.reconstruct_with(|x| x.max(0.0) / total) })
    }

    pub fn maximally_mixed(dim: usize) -> Self {
        Self { entries: identity(dim) / Complex64::from(dim as f64) }
    }

    /// Pure state |psi><psi| of a normalized copy of psi.
    pub fn pure(psi: &CVector) -> Result<Self> {
        let n = psi.norm();
        if n == 0.0 {
            return Err(Error::InvalidState("zero vector".into()));
        }
        let v = psi / Complex64::from(n);
        Ok(Self { entries: &v * v.adjoint() })
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.entries
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        eigenvalues_hermitian(&self.entries)
    }
}

/// A full-rank state with its spectral decomposition (eigenvalues descending).
#[derive(Debug, Clone)]
pub struct FaithfulState {
    state: DensityOperator,
    values: Vec<f64>,
    vectors: CMatrix,
}

impl FaithfulState {
    pub fn new(state: DensityOperator) -> Result<Self> {
        Self::with_threshold(state, FAITHFUL_TOL)
    }

    pub fn with_threshold(state: DensityOperator, threshold: f64) -> Result<Self> {
        let e = eigh_unchecked(state.matrix());
        let d = e.values.len();
        let values: Vec<f64> = e.values.iter().rev().copied().collect();
        let vectors = CMatrix::from_fn(d, d, |r, c| e.vectors[(r, d - 1 - c)]);
        let min = values.last().copied().unwrap_or(0.0);
        if !(min > threshold) {
            return Err(Error::NotFaithful(min));
        }
        Ok(Self { state, values, vectors })
    }

    pub fn from_matrix(m: CMatrix) -> Result<Self> {
        Self::new(DensityOperator::new(m)?)
    }

    pub fn maximally_mixed(dim: usize) -> Self {
        Self::new(DensityOperator::maximally_mixed(dim)).expect("maximally mixed state is faithful")
    }

    /// diag(p) in the computational basis; p must be a probability vector.
    pub fn diagonal(p: &[f64]) -> Result<Self> {
        Self::from_matrix(diag(p))
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn state(&self) -> &DensityOperator {
        &self.state
    }

    pub fn matrix(&self) -> &CMatrix {
        self.state.matrix()
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.values
    }

    pub fn eigenvectors(&self) -> &CMatrix {
        &self.vectors
    }

    pub fn s_min(&self) -> f64 {
        *self.values.last().expect("nonempty spectrum")
    }

    pub fn to_eigenbasis(&self, x: &CMatrix) -> CMatrix {
        self.vectors.adjoint() * x * &self.vectors
    }

    pub fn from_eigenbasis(&self, y: &CMatrix) -> CMatrix {
        &self.vectors * y * self.vectors.adjoint()
    }

    /// Scale element (i,j) of X in the eigenbasis by w(s_i, s_j).
    pub fn scale_entries(&self, x: &CMatrix, w: impl Fn(f64, f64) -> f64) -> Result<CMatrix> {
        check_square(x, self.dim())?;
        let mut y = self.to_eigenbasis(x);
        for j in 0..self.dim() {
            for i in 0..self.dim() {
                y[(i, j)] *= w(self.values[i], self.values[j]);
            }
        }
        Ok(self.from_eigenbasis(&y))
    }

    /// σ^p.
    pub fn power(&self, p: f64) -> CMatrix {
        let d = self.dim();
        let mut scaled = self.vectors.clone();
        for j in 0..d {
            let w = Complex64::from(self.values[j].powf(p));
            for i in 0..d {
                scaled[(i, j)] *= w;
            }
        }
        scaled * self.vectors.adjoint()
    }

    /// ln σ.
    pub fn log(&self) -> CMatrix {
        let d = self.dim();
        let mut scaled = self.vectors.clone();
        for j in 0..d {
            let w = Complex64::from(self.values[j].ln());
            for i in 0..d {
                scaled[(i, j)] *= w;
            }
        }
        scaled * self.vectors.adjoint()
    }
}

/// (s_i - s_j)/(ln s_i - ln s_j), with the diagonal limit s_i.
pub fn bkm_coefficient(si: f64, sj: f64) -> f64 {
    if (si - sj).abs() < 1e-12 * si {
        si
    } else {
        (si - sj) / (si.ln() - sj.ln())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InnerProductKind {
    Gns,
    Kms,
    Bkm,
}

impl InnerProductKind {
    pub const ALL: [InnerProductKind; 3] = [InnerProductKind::Gns, InnerProductKind::Kms, InnerProductKind::Bkm];

    fn weight(self, si: f64, sj: f64) -> f64 {
        match self {
            InnerProductKind::Gns => sj,
            InnerProductKind::Kms => (si * sj).sqrt(),
            InnerProductKind::Bkm => bkm_coefficient(si, sj),
        }
    }
}

impl std::fmt::Display for InnerProductKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            InnerProductKind::Gns => "GNS",
            InnerProductKind::Kms => "KMS",
            InnerProductKind::Bkm => "BKM",
        })
    }
}

/// σ-weighted sesquilinear form, antilinear in X.
pub fn inner_product(kind: InnerProductKind, sigma: &FaithfulState, x: &CMatrix, y: &CMatrix) -> Result<Complex64> {
    check_square(x, sigma.dim())?;
    check_square(y, sigma.dim())?;
    let xt = sigma.to_eigenbasis(x);
    let yt = sigma.to_eigenbasis(y);
    let s = sigma.eigenvalues();
    let mut acc = ZERO;
    for j in 0..s.len() {
        for i in 0..s.len() {
            acc += xt[(i, j)].conj() * yt[(i, j)] * kind.weight(s[i], s[j]);
        }
    }
    Ok(acc)
}

/// ‖X‖ in the KMS geometry, the L²(σ) norm.
pub fn kms_norm(sigma: &FaithfulState, x: &CMatrix) -> Result<f64> {
    Ok(inner_product(InnerProductKind::Kms, sigma, x, x)?.re.max(0.0).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SpectralTransform {
    /// Δ^p: X ↦ σ^p X σ^{-p}.
    DeltaPower(f64),
    /// tanh(¼ ln Δ), zero on entries with s_i = s_j.
    TanhLogQuarter,
    BkmM,
    BkmMInverse,
}

pub fn spectral_transform(kind: SpectralTransform, sigma: &FaithfulState, x: &CMatrix) -> Result<CMatrix> {
    match kind {
        SpectralTransform::DeltaPower(p) => sigma.scale_entries(x, |si, sj| (si / sj).powf(p)),
        SpectralTransform::TanhLogQuarter => sigma.scale_entries(x, |si, sj| {
            let (a, b) = (si.sqrt(), sj.sqrt());
            (a - b) / (a + b)
        }),
        SpectralTransform::BkmM => sigma.scale_entries(x, bkm_coefficient),
        SpectralTransform::BkmMInverse => sigma.scale_entries(x, |si, sj| 1.0 / bkm_coefficient(si, sj)),
    }
}

/// Γ_σ^power(X) = σ^{power/2} X σ^{power/2}.
pub fn gamma_map(power: f64, sigma: &FaithfulState, x: &CMatrix) -> Result<CMatrix> {
    let p = power / 2.0;
    sigma.scale_entries(x, |si, sj| (si * sj).powf(p))
}

pub fn vec(x: &CMatrix) -> CVector {
    CVector::from_column_slice(x.as_slice())
}

pub fn unvec(v: &CVector, dim: usize) -> CMatrix {
    CMatrix::from_column_slice(dim, dim, v.as_slice())
}

/// Linear map on dim×dim matrices; |i><j| is basis index j·dim+i.
#[derive(Debug, Clone, PartialEq)]
pub struct SuperOperator {
    dim: usize,
    matrix: CMatrix,
}

impl SuperOperator {
    pub fn from_matrix(dim: usize, matrix: CMatrix) -> Result<Self> {
        check_square(&matrix, dim * dim)?;
        Ok(Self { dim, matrix })
    }

    /// Tabulates a linear map on the matrix units.
    pub fn from_map(dim: usize, f: impl Fn(&CMatrix) -> CMatrix) -> Self {
        let n = dim * dim;
        let mut matrix = CMatrix::zeros(n, n);
        for j in 0..dim {
            for i in 0..dim {
                let image = f(&ket_bra(dim, i, j));
                matrix.set_column(j * dim + i, &vec(&image));
            }
        }
        Self { dim, matrix }
    }

    pub fn identity(dim: usize) -> Self {
        Self { dim, matrix: identity(dim * dim) }
    }

    pub fn zero(dim: usize) -> Self {
        Self { dim, matrix: CMatrix::zeros(dim * dim, dim * dim) }
    }

    /// X ↦ A X B.
    pub fn sandwich(a: &CMatrix, b: &CMatrix) -> Self {
        Self { dim: a.nrows(), matrix: kron(&b.transpose(), a) }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn apply(&self, x: &CMatrix) -> Result<CMatrix> {
        check_square(x, self.dim)?;
        Ok(unvec(&(&self.matrix * vec(x)), self.dim))
    }

    /// self ∘ other.
    pub fn compose(&self, other: &SuperOperator) -> Result<SuperOperator> {
        if self.dim != other.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, found: other.dim });
        }
        Ok(Self { dim: self.dim, matrix: &self.matrix * &other.matrix })
    }

    /// Hilbert–Schmidt adjoint.
    pub fn hs_adjoint(&self) -> SuperOperator {
        Self { dim: self.dim, matrix: self.matrix.adjoint() }
    }

    pub fn add(&self, other: &SuperOperator) -> Result<SuperOperator> {
        if self.dim != other.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, found: other.dim });
        }
        Ok(Self { dim: self.dim, matrix: &self.matrix + &other.matrix })
    }

    pub fn sub(&self, other: &SuperOperator) -> Result<SuperOperator> {
        self.add(&other.scale(-1.0))
    }

    pub fn scale(&self, c: f64) -> SuperOperator {
        Self { dim: self.dim, matrix: &self.matrix * Complex64::from(c) }
    }

    pub fn max_norm(&self) -> f64 {
        max_norm(&self.matrix)
    }

    /// Choi matrix Σ_ij |i><j| ⊗ S(|i><j|).
    pub fn choi(&self) -> CMatrix {
        let d = self.dim;
        let mut c = CMatrix::zeros(d * d, d * d);
        for i in 0..d {
            for j in 0..d {
                let image = unvec(&self.matrix.column(j * d + i).into_owned(), d);
                c.view_mut((i * d, j * d), (d, d)).copy_from(&image);
            }
        }
        c
    }

    /// Smallest eigenvalue of the (Hermitian part of the) Choi matrix.
    pub fn choi_min_eigenvalue(&self) -> f64 {
        eigenvalues_hermitian(&self.choi())[0]
    }

    pub fn is_completely_positive(&self, tol: f64) -> bool {
        max_norm(&(self.choi() - self.choi().adjoint())) <= tol && self.choi_min_eigenvalue() >= -tol
    }

    /// Operators K_i with S(X) = Σ K_i* X K_i, read off the Choi matrix of a CP map.
    pub fn kraus_heisenberg(&self, tol: f64) -> Result<Vec<CMatrix>> {
        let d = self.dim;
        let e = eigh_unchecked(&hermitian_part(&self.choi()));
        if e.values[0] < -tol {
            return Err(Error::InvalidInput(format!(
                "map is not completely positive (Choi eigenvalue {:e})",
                e.values[0]
            )));
        }
        let mut out = Vec::new();
        for (k, &mu) in e.values.iter().enumerate() {
            if mu <= tol {
                continue;
            }
            let w = e.vectors.column(k) * Complex64::from(mu.sqrt());
            let k_star = CMatrix::from_fn(d, d, |m, i| w[i * d + m]);
            out.push(k_star.adjoint());
        }
        Ok(out)
    }
}

/// Gram superoperator G with ⟨X,Y⟩ = vec(X)* G vec(Y).
pub fn gram(kind: InnerProductKind, sigma: &FaithfulState) -> SuperOperator {
    let d = sigma.dim();
    match kind {
        InnerProductKind::Gns => SuperOperator::sandwich(&identity(d), sigma.matrix()),
        InnerProductKind::Kms => SuperOperator::from_map(d, |x| gamma_map(1.0, sigma, x).expect("square")),
        InnerProductKind::Bkm => {
            SuperOperator::from_map(d, |x| spectral_transform(SpectralTransform::BkmM, sigma, x).expect("square"))
        }
    }
}

pub fn gram_inverse(kind: InnerProductKind, sigma: &FaithfulState) -> SuperOperator {
    let d = sigma.dim();
    match kind {
        InnerProductKind::Gns => SuperOperator::sandwich(&identity(d), &sigma.power(-1.0)),
        InnerProductKind::Kms => SuperOperator::from_map(d, |x| gamma_map(-1.0, sigma, x).expect("square")),
        InnerProductKind::Bkm => SuperOperator::from_map(d, |x| {
            spectral_transform(SpectralTransform::BkmMInverse, sigma, x).expect("square")
        }),
    }
}

/// Operator of dimension `dims.product()` acting as `op` on the listed sites
/// and as the identity elsewhere; site 0 is the most significant tensor factor.
pub fn embed_operator(op: &CMatrix, sites: &[usize], dims: &[usize]) -> Result<CMatrix> {
    let local: usize = sites.iter().map(|&s| dims[s]).product();
    check_square(op, local)?;
    let total: usize = dims.iter().product();
    let digits = |mut idx: usize| {
        let mut out = vec![0usize; dims.len()];
        for k in (0..dims.len()).rev() {
            out[k] = idx % dims[k];
            idx /= dims[k];
        }
        out
    };
    let sub = |dig: &[usize]| sites.iter().fold(0usize, |acc, &s| acc * dims[s] + dig[s]);
    let mut full = CMatrix::zeros(total, total);
    for a in 0..total {
        let da = digits(a);
        for b in 0..total {
            let db = digits(b);
            let rest_equal = (0..dims.len()).all(|k| sites.contains(&k) || da[k] == db[k]);
            if rest_equal {
                full[(a, b)] = op[(sub(&da), sub(&db))];
            }
        }
    }
    Ok(full)
}

/// Partial trace over the listed sites.
pub fn partial_trace(rho: &CMatrix, traced: &[usize], dims: &[usize]) -> Result<CMatrix> {
    let total: usize = dims.iter().product();
    check_square(rho, total)?;
    let kept: Vec<usize> = (0..dims.len()).filter(|k| !traced.contains(k)).collect();
    let kept_dim: usize = kept.iter().map(|&k| dims[k]).product();
    let digits = |mut idx: usize| {
        let mut out = vec![0usize; dims.len()];
        for k in (0..dims.len()).rev() {
            out[k] = idx % dims[k];
            idx /= dims[k];
        }
        out
    };
    let sub = |dig: &[usize], sites: &[usize]| sites.iter().fold(0usize, |acc, &s| acc * dims[s] + dig[s]);
    let mut out = CMatrix::zeros(kept_dim, kept_dim);
    for a in 0..total {
        let da = digits(a);
        for b in 0..total {
            let db = digits(b);
            if traced.iter().all(|&k| da[k] == db[k]) {
                out[(sub(&da, &kept), sub(&db, &kept))] += rho[(a, b)];
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn inner_product_examples() {
        let s = FaithfulState::diagonal(&[0.7, 0.3]).unwrap();
        let id = identity(2);
        assert_abs_diff_eq!(inner_product(InnerProductKind::Kms, &s, &id, &id).unwrap().re, 1.0, epsilon = 1e-14);

        let half = FaithfulState::maximally_mixed(2);
        let z = pauli_z();
        assert_abs_diff_eq!(inner_product(InnerProductKind::Gns, &half, &z, &z).unwrap().re, 1.0, epsilon = 1e-14);

        let e01 = ket_bra(2, 0, 1);
        let got = inner_product(InnerProductKind::Bkm, &s, &e01, &e01).unwrap();
        let want = (0.7f64 - 0.3) / (0.7f64.ln() - 0.3f64.ln());
        assert_abs_diff_eq!(got.re, want, epsilon = 1e-14);
        assert_abs_diff_eq!(got.im, 0.0, epsilon = 1e-14);
    }

    #[test]
    fn bkm_integral_matches_closed_form() {
        // midpoint rule for ∫ s1^{1-t} s2^t dt
        let (s1, s2) = (0.8f64, 0.2f64);
        let n = 200_000;
        let quad: f64 = (0..n)
            .map(|k| {
                let t = (k as f64 + 0.5) / n as f64;
                s1.powf(1.0 - t) * s2.powf(t)
            })
            .sum::<f64>()
            / n as f64;
        assert_abs_diff_eq!(bkm_coefficient(s1, s2), quad, epsilon = 1e-10);
        assert_eq!(bkm_coefficient(0.5, 0.5), 0.5);
    }

    #[test]
    fn transforms() {
        let s = FaithfulState::diagonal(&[0.6, 0.4]).unwrap();
        let x = diag(&[2.0, -1.0]);
        let y = spectral_transform(SpectralTransform::DeltaPower(1.0), &s, &x).unwrap();
        assert!(max_norm(&(y - &x)) < 1e-14);
        let t = spectral_transform(SpectralTransform::TanhLogQuarter, &s, &x).unwrap();
        assert!(max_norm(&t) < 1e-14);

        let off = ket_bra(2, 0, 1);
        let t = spectral_transform(SpectralTransform::TanhLogQuarter, &s, &off).unwrap();
        let want = (0.25 * (0.6f64 / 0.4).ln()).tanh();
        assert_abs_diff_eq!(t[(0, 1)].re, want, epsilon = 1e-14);
    }

    #[test]
    fn gamma_examples() {
        let s = FaithfulState::diagonal(&[0.6, 0.3, 0.1]).unwrap();
        let g = gamma_map(1.0, &s, &identity(3)).unwrap();
        assert!(max_norm(&(g - s.matrix())) < 1e-14);
        let back = gamma_map(-1.0, &s, s.matrix()).unwrap();
        assert!(max_norm(&(back - identity(3))) < 1e-13);
        let x = from_real(3, 3, &[1.0, 2.0, 0.5, -1.0, 0.0, 3.0, 0.2, 0.1, 4.0]);
        let twice = gamma_map(0.5, &s, &gamma_map(0.5, &s, &x).unwrap()).unwrap();
        assert!(max_norm(&(twice - gamma_map(1.0, &s, &x).unwrap())) < 1e-12);
    }

    #[test]
    fn superoperator_conventions() {
        let id = SuperOperator::identity(2);
        assert_eq!(id, SuperOperator::from_map(2, |x| x.clone()));
        let sx = pauli_x();
        let s = SuperOperator::sandwich(&sx, &sx);
        let out = s.apply(&ket_bra(2, 0, 0)).unwrap();
        assert!(max_norm(&(out - ket_bra(2, 1, 1))) < 1e-15);
        // matrix unit |i><j| sits at j*dim + i
        let v = vec(&ket_bra(3, 2, 1));
        assert_eq!(v[1 * 3 + 2], ONE);

        let a = from_real(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        let b = from_real(2, 2, &[0.0, 1.0, -1.0, 0.5]);
        let sa = SuperOperator::sandwich(&a, &b);
        let sb = SuperOperator::sandwich(&b, &a);
        let x = from_real(2, 2, &[1.0, -2.0, 0.5, 3.0]);
        let lhs = sa.compose(&sb).unwrap().apply(&x).unwrap();
        let rhs = sa.apply(&sb.apply(&x).unwrap()).unwrap();
        assert!(max_norm(&(lhs - rhs)) < 1e-12);
    }

    #[test]
    fn kraus_roundtrip() {
        let k1 = from_real(2, 2, &[0.6f64.sqrt(), 0.0, 0.0, 0.3f64.sqrt()]);
        let k2 = from_real(2, 2, &[0.0, 0.4f64.sqrt(), 0.7f64.sqrt(), 0.0]);
        let phi = SuperOperator::from_map(2, |x| k1.adjoint() * x * &k1 + k2.adjoint() * x * &k2);
        assert!(phi.is_completely_positive(1e-12));
        let ks = phi.kraus_heisenberg(1e-12).unwrap();
        let rebuilt = SuperOperator::from_map(2, |x| ks.iter().map(|k| k.adjoint() * x * k).sum());
        assert!(max_norm(&(rebuilt.matrix() - phi.matrix())) < 1e-12);

        let transpose = SuperOperator::from_map(2, |x| x.transpose());
        assert!(!transpose.is_completely_positive(1e-12));
    }

    #[test]
    fn embedding_and_partial_trace() {
        let z = pauli_z();
        let x = pauli_x();
        let full = embed_operator(&z, &[1], &[2, 2]).unwrap();
        assert!(max_norm(&(full - kron(&identity(2), &z))) < 1e-15);
        let zx = kron(&z, &x);
        let swapped = embed_operator(&zx, &[1, 0], &[2, 2]).unwrap();
        assert!(max_norm(&(swapped - kron(&x, &z))) < 1e-15);

        let a = diag(&[0.7, 0.3]);
        let b = diag(&[0.2, 0.8]);
        let ab = kron(&a, &b);
        assert!(max_norm(&(partial_trace(&ab, &[1], &[2, 2]).unwrap() - &a)) < 1e-15);
        assert!(max_norm(&(partial_trace(&ab, &[0], &[2, 2]).unwrap() - &b)) < 1e-15);
    }

    #[test]
    fn faithfulness_guard() {
        let pure = DensityOperator::new(diag(&[1.0, 0.0])).unwrap();
        assert!(matches!(FaithfulState::new(pure), Err(Error::NotFaithful(_))));
        assert!(DensityOperator::new(diag(&[1.2, -0.2])).is_err());
        assert!(DensityOperator::new(diag(&[0.5, 0.4])).is_err());
    }
}
