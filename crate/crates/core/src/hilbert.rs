//! Truncated Fock-space linear algebra.
//!
//! Hybrid operators and states use the qubit as the slow index: the hybrid
//! basis index of `|q⟩ ⊗ |n⟩` is `q * cutoff + n`, with qubit basis order
//! `(|↓⟩, |↑⟩)`. Pauli matrices are the standard ones in that order, so
//! `σ_z|↓⟩ = −|↓⟩` and `σ_z|↑⟩ = +|↑⟩`.

use nalgebra::{DMatrix, DVector, Matrix2, SymmetricEigen};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;
pub type CMat = DMatrix<C64>;
pub type CVec = DVector<C64>;
pub type Qubit2 = Matrix2<C64>;

/// Number of top Fock levels inspected by the tail-mass check.
pub const TAIL_LEVELS: usize = 10;
/// Maximum population allowed in the top levels.
pub const TAIL_TOLERANCE: f64 = 1e-8;

const HERMITIAN_TOL: f64 = 1e-10;

#[inline]
pub(crate) fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

#[inline]
pub(crate) fn cis(phase: f64) -> C64 {
    C64::from_polar(1.0, phase)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct FockSpace {
    cutoff: usize,
}

impl FockSpace {
    pub fn new(cutoff: usize) -> Result<Self> {
        if cutoff < 2 {
            return Err(Error::InvalidSpace(cutoff));
        }
        Ok(Self { cutoff })
    }

    pub fn cutoff(&self) -> usize {
        self.cutoff
    }

    /// Dimension of the hybrid (qubit ⊗ oscillator) space.
    pub fn hybrid_dim(&self) -> usize {
        2 * self.cutoff
    }

    fn tail_levels(&self) -> usize {
        TAIL_LEVELS.min(self.cutoff - 1)
    }

    /// Cutoff needed to hold a Poisson distribution of mean `nbar` with
    /// headroom for the tail check.
    pub fn required_for_mean(nbar: f64) -> usize {
        (nbar + 10.0 * (nbar + 1.0).sqrt()).ceil() as usize + TAIL_LEVELS + 2
    }
}

// ---------------------------------------------------------------------------
// Dense products through matrixmultiply's complex kernel.

#[derive(Clone, Copy)]
enum Op {
    N,
    /// Conjugate transpose.
    H,
}

fn gemm(a: &CMat, oa: Op, b: &CMat, ob: Op) -> CMat {
    use matrixmultiply::CGemmOption as G;
    let (m, k) = match oa {
        Op::N => a.shape(),
        Op::H => (a.ncols(), a.nrows()),
    };
    let (kb, n) = match ob {
        Op::N => b.shape(),
        Op::H => (b.ncols(), b.nrows()),
    };
    assert_eq!(k, kb, "inner dimensions differ");
    let mut out = CMat::zeros(m, n);
    if m == 0 || n == 0 || k == 0 {
        return out;
    }
    // No conjugate flag in the kernel: conjugate a copy and read it transposed.
    let ca;
    let (pa, rsa, csa) = match oa {
        Op::N => (a.as_ptr(), 1, a.nrows() as isize),
        Op::H => {
            ca = a.map(|z| z.conj());
            (ca.as_ptr(), a.nrows() as isize, 1)
        }
    };
    let cb;
    let (pb, rsb, csb) = match ob {
        Op::N => (b.as_ptr(), 1, b.nrows() as isize),
        Op::H => {
            cb = b.map(|z| z.conj());
            (cb.as_ptr(), b.nrows() as isize, 1)
        }
    };
    // SAFETY: Complex<f64> is repr(C) with layout [f64; 2]; the shapes and
    // column-major strides above describe the nalgebra buffers exactly.
    unsafe {
        matrixmultiply::zgemm(
            G::Standard,
            G::Standard,
            m,
            k,
            n,
            [1.0, 0.0],
            pa as *const [f64; 2],
            rsa,
            csa,
            pb as *const [f64; 2],
            rsb,
            csb,
            [0.0, 0.0],
            out.as_mut_ptr() as *mut [f64; 2],
            1,
            m as isize,
        );
    }
    out
}

/// `a · b`
pub fn mul(a: &CMat, b: &CMat) -> CMat {
    gemm(a, Op::N, b, Op::N)
}

/// `a · b†`
pub fn mul_adj(a: &CMat, b: &CMat) -> CMat {
    gemm(a, Op::N, b, Op::H)
}

/// `a† · b`
pub fn adj_mul(a: &CMat, b: &CMat) -> CMat {
    gemm(a, Op::H, b, Op::N)
}

/// `u · m · u†`
pub fn sandwich(u: &CMat, m: &CMat) -> CMat {
    mul_adj(&mul(u, m), u)
}

/// Largest entry of `|m − m†|`.
pub fn hermitian_defect(m: &CMat) -> f64 {
    let n = m.nrows();
    let mut worst = 0.0f64;
    for j in 0..n {
        for i in 0..=j {
            worst = worst.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    worst
}

fn max_abs(m: &CMat) -> f64 {
    m.iter().fold(0.0f64, |acc, z| acc.max(z.norm()))
}

fn check_hermitian(m: &CMat) -> Result<()> {
    if !m.is_square() {
        return Err(Error::DimensionMismatch { expected: m.nrows(), got: m.ncols() });
    }
    let defect = hermitian_defect(m);
    if defect > HERMITIAN_TOL * max_abs(m).max(1.0) {
        return Err(Error::NotHermitian(defect));
    }
    Ok(())
}

/// Eigendecomposition of a Hermitian matrix: ascending eigenvalues and the
/// matching orthonormal eigenvectors as columns.
pub fn hermitian_eigen(m: &CMat) -> Result<(Vec<f64>, CMat)> {
    check_hermitian(m)?;
    // Symmetrize so rounding noise does not leak into the decomposition.
    let sym = (m + m.adjoint()) * c(0.5, 0.0);
    let eig = SymmetricEigen::new(sym);
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = CMat::from_fn(m.nrows(), order.len(), |r, k| eig.eigenvectors[(r, order[k])]);
    Ok((values, vectors))
}

/// `f(m)` for Hermitian `m`, via eigendecomposition.
pub fn function_of_hermitian(m: &CMat, f: impl Fn(f64) -> C64) -> Result<CMat> {
    let (values, vectors) = hermitian_eigen(m)?;
    Ok(apply_spectral(&values, &vectors, f))
}

pub(crate) fn apply_spectral(values: &[f64], vectors: &CMat, f: impl Fn(f64) -> C64) -> CMat {
    let mut scaled = vectors.clone();
    for (k, &lam) in values.iter().enumerate() {
        let fk = f(lam);
        scaled.column_mut(k).iter_mut().for_each(|z| *z *= fk);
    }
    mul_adj(&scaled, vectors)
}

/// `e^{−iHt}` for Hermitian `H` of any dimension.
pub fn hermitian_exponential(h: &CMat, t: f64) -> Result<CMat> {
    function_of_hermitian(h, |lam| cis(-lam * t))
}

// ---------------------------------------------------------------------------
// Oscillator operators.

#[derive(Clone, Debug)]
pub struct OscillatorOperator {
    pub space: FockSpace,
    pub matrix: CMat,
    pub hermitian: bool,
}

impl OscillatorOperator {
    pub fn new(space: FockSpace, matrix: CMat) -> Result<Self> {
        let n = space.cutoff();
        if matrix.shape() != (n, n) {
            return Err(Error::DimensionMismatch { expected: n, got: matrix.nrows() });
        }
        let hermitian = hermitian_defect(&matrix) <= HERMITIAN_TOL * max_abs(&matrix).max(1.0);
        Ok(Self { space, matrix, hermitian })
    }

    pub fn exp_i(&self, t: f64) -> Result<CMat> {
        hermitian_exponential(&self.matrix, t)
    }
}

pub fn ladder(space: FockSpace) -> (OscillatorOperator, OscillatorOperator) {
    let n = space.cutoff();
    let mut a = CMat::zeros(n, n);
    for m in 0..n - 1 {
        a[(m, m + 1)] = c(((m + 1) as f64).sqrt(), 0.0);
    }
    let ad = a.adjoint();
    (
        OscillatorOperator { space, matrix: a, hermitian: false },
        OscillatorOperator { space, matrix: ad, hermitian: false },
    )
}

pub fn quadratures(space: FockSpace) -> (OscillatorOperator, OscillatorOperator) {
    let (a, ad) = ladder(space);
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let x = (&a.matrix + &ad.matrix) * c(s, 0.0);
    let p = (&a.matrix - &ad.matrix) * c(0.0, -s);
    (
        OscillatorOperator { space, matrix: x, hermitian: true },
        OscillatorOperator { space, matrix: p, hermitian: true },
    )
}

/// Rotated quadrature `x_θ = (a e^{−iθ} + a† e^{iθ})/√2`. `x_0 = x`, `x_{π/2} = p`.
pub fn rotated_quadrature(space: FockSpace, theta: f64) -> OscillatorOperator {
    let (a, ad) = ladder(space);
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let m = (&a.matrix * cis(-theta) + &ad.matrix * cis(theta)) * c(s, 0.0);
    OscillatorOperator { space, matrix: m, hermitian: true }
}

pub fn number_operator(space: FockSpace) -> OscillatorOperator {
    let n = space.cutoff();
    let m = CMat::from_diagonal(&CVec::from_fn(n, |i, _| c(i as f64, 0.0)));
    OscillatorOperator { space, matrix: m, hermitian: true }
}

pub fn identity(space: FockSpace) -> OscillatorOperator {
    OscillatorOperator { space, matrix: CMat::identity(space.cutoff(), space.cutoff()), hermitian: true }
}

/// Displacement operators for one Fock space, sharing a single
/// eigendecomposition of the generator `i(a† − a)`.
///
/// `D(α) = R(φ) D(|α|) R(φ)†` with `R(φ) = e^{iφ a†a}`, so every amplitude
/// reuses the same spectral data and the result is exactly unitary.
#[derive(Clone, Debug)]
pub struct DisplacementKernel {
    space: FockSpace,
    values: Vec<f64>,
    vectors: CMat,
}

impl DisplacementKernel {
    pub fn new(space: FockSpace) -> Self {
        let (a, ad) = ladder(space);
        let gen = (&ad.matrix - &a.matrix) * c(0.0, 1.0);
        let (values, vectors) = hermitian_eigen(&gen).expect("i(a† − a) is Hermitian");
        Self { space, values, vectors }
    }

    pub fn space(&self) -> FockSpace {
        self.space
    }

    /// Dense `D(α)`.
    pub fn matrix(&self, alpha: C64) -> CMat {
        let r = alpha.norm();
        let phi = alpha.arg();
        let n = self.space.cutoff();
        // (R V) diag(e^{−irλ}) (R V)†
        let rv = CMat::from_fn(n, n, |i, j| self.vectors[(i, j)] * cis(phi * i as f64));
        let mut scaled = rv.clone();
        for (k, &lam) in self.values.iter().enumerate() {
            let f = cis(-r * lam);
            scaled.column_mut(k).iter_mut().for_each(|z| *z *= f);
        }
        mul_adj(&scaled, &rv)
    }

    /// `D(α)·v` without forming the matrix.
    pub fn apply(&self, alpha: C64, v: &CVec) -> CVec {
        let r = alpha.norm();
        let phi = alpha.arg();
        let rot: CVec = CVec::from_fn(v.len(), |i, _| v[i] * cis(-phi * i as f64));
        let mut w = self.vectors.ad_mul(&rot);
        for (k, &lam) in self.values.iter().enumerate() {
            w[k] *= cis(-r * lam);
        }
        let out = &self.vectors * w;
        CVec::from_fn(v.len(), |i, _| out[i] * cis(phi * i as f64))
    }
}

/// Dense `D(α) = exp(α a† − α* a)` with the tail-mass check of `D(α)|0⟩`.
pub fn displacement(space: FockSpace, alpha: C64) -> Result<OscillatorOperator> {
    check_coherent_fits(space, alpha)?;
    let m = DisplacementKernel::new(space).matrix(alpha);
    Ok(OscillatorOperator { space, matrix: m, hermitian: false })
}

/// Fails if the coherent state `|α⟩` would put more than the tolerance into
/// the top Fock levels.
pub fn check_coherent_fits(space: FockSpace, alpha: C64) -> Result<()> {
    let tail = coherent_tail(alpha.norm_sqr(), space.cutoff() - space.tail_levels());
    if tail >= TAIL_TOLERANCE {
        return Err(Error::TruncationOverflow {
            cutoff: space.cutoff(),
            required: FockSpace::required_for_mean(alpha.norm_sqr()),
            tail,
        });
    }
    Ok(())
}

/// Poisson mass `P(n ≥ from)` for mean `mean`.
fn coherent_tail(mean: f64, from: usize) -> f64 {
    let mut p = (-mean).exp();
    let mut below = 0.0;
    for n in 0..from {
        below += p;
        p *= mean / (n + 1) as f64;
    }
    (1.0 - below).max(0.0)
}

/// Truncated coherent state `|γ⟩` from its Poisson amplitudes, renormalized.
pub fn coherent_state(space: FockSpace, gamma: C64) -> Result<CVec> {
    check_coherent_fits(space, gamma)?;
    let n = space.cutoff();
    let mut v = CVec::zeros(n);
    let mut amp = c((-0.5 * gamma.norm_sqr()).exp(), 0.0);
    for k in 0..n {
        v[k] = amp;
        amp = amp * gamma / ((k + 1) as f64).sqrt();
    }
    let norm = v.norm();
    Ok(v / c(norm, 0.0))
}

/// Thermal oscillator density matrix with mean occupation `nbar`.
pub fn thermal_density(space: FockSpace, nbar: f64) -> Result<CMat> {
    if !(nbar >= 0.0) {
        return Err(Error::InvalidInput(format!("thermal occupation {nbar} must be nonnegative")));
    }
    let n = space.cutoff();
    let ratio = nbar / (1.0 + nbar);
    let mut diag: Vec<f64> = (0..n).map(|k| ratio.powi(k as i32)).collect();
    let total: f64 = diag.iter().sum();
    diag.iter_mut().for_each(|p| *p /= total);
    let tail: f64 = diag[n - space.tail_levels()..].iter().sum();
    if tail >= TAIL_TOLERANCE {
        return Err(Error::TruncationOverflow {
            cutoff: n,
            required: FockSpace::required_for_mean(nbar * 4.0),
            tail,
        });
    }
    Ok(CMat::from_diagonal(&CVec::from_iterator(n, diag.into_iter().map(|p| c(p, 0.0)))))
}

// ---------------------------------------------------------------------------
// Qubit operators.

pub const DOWN: usize = 0;
pub const UP: usize = 1;

pub fn sigma_x() -> Qubit2 {
    Qubit2::new(c(0.0, 0.0), c(1.0, 0.0), c(1.0, 0.0), c(0.0, 0.0))
}

pub fn sigma_y() -> Qubit2 {
    // σ_y|↑⟩ = i|↓⟩, σ_y|↓⟩ = −i|↑⟩ in (↓, ↑) order.
    Qubit2::new(c(0.0, 0.0), c(0.0, 1.0), c(0.0, -1.0), c(0.0, 0.0))
}

pub fn sigma_z() -> Qubit2 {
    Qubit2::new(c(-1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(1.0, 0.0))
}

/// `exp(−i θ/2 n̂·σ)` for a unit axis `n̂`.
fn axis_rotation(theta: f64, n: [f64; 3]) -> Qubit2 {
    let gen = sigma_x() * c(n[0], 0.0) + sigma_y() * c(n[1], 0.0) + sigma_z() * c(n[2], 0.0);
    Qubit2::identity() * c((theta / 2.0).cos(), 0.0) - gen * c(0.0, (theta / 2.0).sin())
}

pub fn rx(theta: f64) -> Qubit2 {
    axis_rotation(theta, [1.0, 0.0, 0.0])
}

pub fn ry(theta: f64) -> Qubit2 {
    axis_rotation(theta, [0.0, 1.0, 0.0])
}

pub fn rz(theta: f64) -> Qubit2 {
    axis_rotation(theta, [0.0, 0.0, 1.0])
}

/// Rotation by `theta` about `n̂(φ) = (0, sin φ, cos φ)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QubitAxis {
    pub theta: f64,
    pub phi: f64,
}

impl QubitAxis {
    pub fn unitary(&self) -> Qubit2 {
        axis_rotation(self.theta, [0.0, self.phi.sin(), self.phi.cos()])
    }
}

/// `q ⊗ I` on the hybrid space.
pub fn embed_qubit(q: &Qubit2, space: FockSpace) -> CMat {
    let n = space.cutoff();
    let mut m = CMat::zeros(2 * n, 2 * n);
    for i in 0..2 {
        for j in 0..2 {
            let z = q[(i, j)];
            if z != c(0.0, 0.0) {
                for k in 0..n {
                    m[(i * n + k, j * n + k)] = z;
                }
            }
        }
    }
    m
}

/// `I ⊗ op` on the hybrid space.
pub fn embed_oscillator(op: &OscillatorOperator) -> CMat {
    embed_product(&Qubit2::identity(), &op.matrix)
}

/// `q ⊗ m`.
pub fn embed_product(q: &Qubit2, m: &CMat) -> CMat {
    let n = m.nrows();
    let mut out = CMat::zeros(2 * n, 2 * n);
    for i in 0..2 {
        for j in 0..2 {
            let z = q[(i, j)];
            if z != c(0.0, 0.0) {
                out.view_mut((i * n, j * n), (n, n)).copy_from(&(m * z));
            }
        }
    }
    out
}

// ---------------------------------------------------------------------------
// Hybrid states.

#[derive(Clone, Debug, PartialEq)]
pub enum StateData {
    Pure(CVec),
    Density(CMat),
}

#[derive(Clone, Debug, PartialEq)]
pub struct HybridState {
    space: FockSpace,
    data: StateData,
}

impl HybridState {
    pub fn from_pure(space: FockSpace, v: CVec) -> Result<Self> {
        if v.len() != space.hybrid_dim() {
            return Err(Error::DimensionMismatch { expected: space.hybrid_dim(), got: v.len() });
        }
        let norm = v.norm();
        if (norm - 1.0).abs() > 1e-10 {
            return Err(Error::InvalidState(format!("pure state norm {norm} differs from 1")));
        }
        Ok(Self { space, data: StateData::Pure(v) })
    }

    /// Validates Hermiticity, unit trace and positivity.
    pub fn from_density(space: FockSpace, m: CMat) -> Result<Self> {
        let state = Self::from_density_unchecked(space, m)?;
        state.validate()?;
        Ok(state)
    }

    pub(crate) fn from_density_unchecked(space: FockSpace, m: CMat) -> Result<Self> {
        if m.shape() != (space.hybrid_dim(), space.hybrid_dim()) {
            return Err(Error::DimensionMismatch { expected: space.hybrid_dim(), got: m.nrows() });
        }
        Ok(Self { space, data: StateData::Density(m) })
    }

    /// `|q⟩ ⊗ |ψ⟩` from a normalized qubit vector and oscillator vector.
    pub fn product(space: FockSpace, qubit: [C64; 2], osc: &CVec) -> Result<Self> {
        let n = space.cutoff();
        if osc.len() != n {
            return Err(Error::DimensionMismatch { expected: n, got: osc.len() });
        }
        let v = CVec::from_fn(2 * n, |i, _| qubit[i / n] * osc[i % n]);
        Self::from_pure(space, v)
    }

    /// `|↓⟩ ⊗ |ψ⟩`.
    pub fn down(space: FockSpace, osc: &CVec) -> Result<Self> {
        Self::product(space, [c(1.0, 0.0), c(0.0, 0.0)], osc)
    }

    /// `|↓⟩⟨↓| ⊗ ρ`.
    pub fn down_density(space: FockSpace, rho: &CMat) -> Result<Self> {
        let mut q = Qubit2::zeros();
        q[(DOWN, DOWN)] = c(1.0, 0.0);
        Self::from_density(space, embed_product(&q, rho))
    }

    /// `|↓⟩ ⊗ |0⟩`.
    pub fn ground(space: FockSpace) -> Self {
        let mut v = CVec::zeros(space.hybrid_dim());
        v[0] = c(1.0, 0.0);
        Self { space, data: StateData::Pure(v) }
    }

    pub fn space(&self) -> FockSpace {
        self.space
    }

    pub fn data(&self) -> &StateData {
        &self.data
    }

    pub fn is_pure(&self) -> bool {
        matches!(self.data, StateData::Pure(_))
    }

    pub fn to_density(&self) -> CMat {
        match &self.data {
            StateData::Pure(v) => v * v.adjoint(),
            StateData::Density(m) => m.clone(),
        }
    }

    pub fn into_density(self) -> Self {
        let m = self.to_density();
        Self { space: self.space, data: StateData::Density(m) }
    }

    pub fn validate(&self) -> Result<()> {
        match &self.data {
            StateData::Pure(v) => {
                let norm = v.norm();
                if (norm - 1.0).abs() > 1e-10 {
                    return Err(Error::InvalidState(format!("norm {norm}")));
                }
            }
            StateData::Density(m) => {
                let defect = hermitian_defect(m);
                if defect > 1e-10 {
                    return Err(Error::InvalidState(format!("density not Hermitian ({defect:.2e})")));
                }
                let tr = m.trace().re;
                if (tr - 1.0).abs() > 1e-10 {
                    return Err(Error::InvalidState(format!("trace {tr}")));
                }
                let (values, _) = hermitian_eigen(m)?;
                if values[0] < -1e-10 {
                    return Err(Error::InvalidState(format!("negative eigenvalue {:.3e}", values[0])));
                }
            }
        }
        Ok(())
    }

    /// `⟨op⟩` for a hybrid-space operator.
    pub fn expectation(&self, op: &CMat) -> Result<C64> {
        let d = self.space.hybrid_dim();
        if op.shape() != (d, d) {
            return Err(Error::DimensionMismatch { expected: d, got: op.nrows() });
        }
        Ok(match &self.data {
            StateData::Pure(v) => v.dotc(&(op * v)),
            StateData::Density(m) => trace_product(op, m),
        })
    }

    /// Oscillator reduced density matrix `Tr_q ρ`.
    pub fn oscillator_density(&self) -> CMat {
        let n = self.space.cutoff();
        match &self.data {
            StateData::Pure(v) => {
                let lo = v.rows(0, n).into_owned();
                let hi = v.rows(n, n).into_owned();
                &lo * lo.adjoint() + &hi * hi.adjoint()
            }
            StateData::Density(m) => m.view((0, 0), (n, n)) + m.view((n, n), (n, n)),
        }
    }

    /// Expectation of an oscillator operator.
    pub fn oscillator_expectation(&self, op: &CMat) -> C64 {
        let n = self.space.cutoff();
        match &self.data {
            StateData::Pure(v) => {
                let lo = v.rows(0, n);
                let hi = v.rows(n, n);
                lo.dotc(&(op * lo)) + hi.dotc(&(op * hi))
            }
            StateData::Density(_) => trace_product(op, &self.oscillator_density()),
        }
    }

    /// Qubit reduced density matrix.
    pub fn qubit_density(&self) -> Qubit2 {
        let n = self.space.cutoff();
        let m = self.to_density();
        let mut q = Qubit2::zeros();
        for i in 0..2 {
            for j in 0..2 {
                q[(i, j)] = (0..n).map(|k| m[(i * n + k, j * n + k)]).sum();
            }
        }
        q
    }

    /// Fock populations of the oscillator.
    pub fn populations(&self) -> Vec<f64> {
        let n = self.space.cutoff();
        match &self.data {
            StateData::Pure(v) => (0..n).map(|k| v[k].norm_sqr() + v[n + k].norm_sqr()).collect(),
            StateData::Density(m) => (0..n).map(|k| m[(k, k)].re + m[(n + k, n + k)].re).collect(),
        }
    }

    pub fn mean_occupation(&self) -> f64 {
        self.populations().iter().enumerate().map(|(k, p)| k as f64 * p).sum()
    }

    /// Population in the top Fock levels.
    pub fn tail_mass(&self) -> f64 {
        let pops = self.populations();
        pops[pops.len() - self.space.tail_levels()..].iter().sum()
    }

    pub fn check_tail(&self) -> Result<()> {
        self.check_tail_below(TAIL_TOLERANCE)
    }

    pub fn check_tail_below(&self, tolerance: f64) -> Result<()> {
        let tail = self.tail_mass();
        if tail >= tolerance {
            let nbar = self.mean_occupation();
            return Err(Error::TruncationOverflow {
                cutoff: self.space.cutoff(),
                required: FockSpace::required_for_mean(nbar).max(self.space.cutoff() + 20),
                tail,
            });
        }
        Ok(())
    }

    /// Applies a diagonal oscillator phase `e^{−i δ t n}`, i.e. the free
    /// harmonic evolution that moves a state between frames.
    pub fn rotate_oscillator(&self, angle: f64) -> Self {
        let n = self.space.cutoff();
        let ph: Vec<C64> = (0..2 * n).map(|i| cis(-angle * (i % n) as f64)).collect();
        let data = match &self.data {
            StateData::Pure(v) => StateData::Pure(CVec::from_fn(2 * n, |i, _| v[i] * ph[i])),
            StateData::Density(m) => {
                StateData::Density(CMat::from_fn(2 * n, 2 * n, |i, j| m[(i, j)] * ph[i] * ph[j].conj()))
            }
        };
        Self { space: self.space, data }
    }

    /// Same state in a larger (or equal) Fock space, zero-padded.
    pub fn pad_to(&self, space: FockSpace) -> Result<Self> {
        let (n, m) = (self.space.cutoff(), space.cutoff());
        if m < n {
            return Err(Error::DimensionMismatch { expected: n, got: m });
        }
        let map = |i: usize| (i / n) * m + i % n;
        let data = match &self.data {
            StateData::Pure(v) => {
                let mut w = CVec::zeros(2 * m);
                for i in 0..2 * n {
                    w[map(i)] = v[i];
                }
                StateData::Pure(w)
            }
            StateData::Density(r) => {
                let mut w = CMat::zeros(2 * m, 2 * m);
                for j in 0..2 * n {
                    for i in 0..2 * n {
                        w[(map(i), map(j))] = r[(i, j)];
                    }
                }
                StateData::Density(w)
            }
        };
        Ok(Self { space, data })
    }
}

/// `Tr(a·b)` without forming the product.
pub fn trace_product(a: &CMat, b: &CMat) -> C64 {
    let n = a.nrows();
    let mut acc = c(0.0, 0.0);
    for j in 0..n {
        for i in 0..n {
            acc += a[(i, j)] * b[(j, i)];
        }
    }
    acc
}
