//! Harmonic-plus-Fourier potentials `V(x) = (δ/2)x² + Σ B_n cos(2πnx/Λ + Φ_n)`.
//!
//! Energies and frequencies are angular (rad/s); positions are the
//! dimensionless quadrature `x = (a + a†)/√2`.

use std::f64::consts::{PI, SQRT_2, TAU};

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::hilbert::{self, c, CMat, CVec, FockSpace};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FourierTerm {
    pub n: u32,
    /// Amplitude in rad/s.
    pub b: f64,
    /// Phase in radians.
    pub phi: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FourierPotential {
    pub delta: f64,
    pub lambda: f64,
    pub terms: Vec<FourierTerm>,
}

impl FourierPotential {
    pub fn new(delta: f64, lambda: f64, terms: Vec<FourierTerm>) -> Result<Self> {
        if !(lambda > 0.0) || !lambda.is_finite() {
            return Err(Error::InvalidInput(format!("period must be positive, got {lambda}")));
        }
        if !delta.is_finite() {
            return Err(Error::InvalidInput("harmonic coefficient must be finite".into()));
        }
        let mut seen = std::collections::BTreeSet::new();
        for t in &terms {
            if t.n == 0 || !seen.insert(t.n) {
                return Err(Error::InvalidInput(format!("term index {} is zero or repeated", t.n)));
            }
            if !t.b.is_finite() || !t.phi.is_finite() {
                return Err(Error::InvalidInput(format!("term {} is not finite", t.n)));
            }
        }
        Ok(Self { delta, lambda, terms })
    }

    /// δ = 2π·500 rad/s, Λ = 3√2, a single term with B = 0.8/200 µs and
    /// phase `phi`.
    pub fn double_well(phi: f64) -> Self {
        Self {
            delta: TAU * 500.0,
            lambda: 3.0 * SQRT_2,
            terms: vec![FourierTerm { n: 1, b: 4000.0, phi }],
        }
    }

    /// `α₀ = πn/(√2Λ)` for the gate that synthesizes term `n`.
    pub fn alpha0(&self, n: u32) -> f64 {
        PI * n as f64 / (SQRT_2 * self.lambda)
    }

    /// Inverse of [`alpha0`](Self::alpha0) for `n = 1`.
    pub fn lambda_from_alpha0(alpha0: f64) -> f64 {
        PI / (SQRT_2 * alpha0)
    }

    fn k(&self, n: u32) -> f64 {
        TAU * n as f64 / self.lambda
    }

    pub fn evaluate(&self, x: f64) -> f64 {
        0.5 * self.delta * x * x + self.terms.iter().map(|t| t.b * (self.k(t.n) * x + t.phi).cos()).sum::<f64>()
    }

    pub fn derivative(&self, x: f64) -> f64 {
        self.delta * x - self.terms.iter().map(|t| t.b * self.k(t.n) * (self.k(t.n) * x + t.phi).sin()).sum::<f64>()
    }

    pub fn second_derivative(&self, x: f64) -> f64 {
        self.delta
            - self.terms.iter().map(|t| t.b * self.k(t.n).powi(2) * (self.k(t.n) * x + t.phi).cos()).sum::<f64>()
    }

    /// Canonical text used for hashing; 17 significant digits.
    pub fn canonical_text(&self) -> String {
        let mut s = format!("delta={:.16e};lambda={:.16e}", self.delta, self.lambda);
        for t in &self.terms {
            s.push_str(&format!(";n={},b={:.16e},phi={:.16e}", t.n, t.b, t.phi));
        }
        s
    }

    /// First 16 hex digits of the SHA-256 of [`canonical_text`](Self::canonical_text).
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.canonical_text().as_bytes());
        digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }

    /// Fourier part `Σ B_n cos(2πn x/Λ + Φ_n)` as an oscillator matrix.
    pub fn fourier_operator(&self, space: FockSpace) -> Result<CMat> {
        let n = space.cutoff();
        if self.terms.is_empty() {
            return Ok(CMat::zeros(n, n));
        }
        let (x, _) = hilbert::quadratures(space);
        let (values, vectors) = hilbert::hermitian_eigen(&x.matrix)?;
        let f = |xv: f64| c(self.terms.iter().map(|t| t.b * (self.k(t.n) * xv + t.phi).cos()).sum(), 0.0);
        Ok(hilbert::apply_spectral(&values, &vectors, f))
    }

    /// `H_sim = δ(a†a + ½) + Σ B_n cos(2πn x/Λ + Φ_n)`.
    ///
    /// The harmonic part uses the number operator rather than `(x² + p²)/2`,
    /// which differs from it on the last retained level.
    pub fn hamiltonian(&self, space: FockSpace) -> Result<CMat> {
        let mut h = self.fourier_operator(space)?;
        for k in 0..space.cutoff() {
            h[(k, k)] += c(self.delta * (k as f64 + 0.5), 0.0);
        }
        Ok(h)
    }
}

// ---------------------------------------------------------------------------
// Fourier fitting.

#[derive(Clone, Debug, PartialEq)]
pub struct FourierFit {
    pub terms: Vec<FourierTerm>,
    /// Discarded constant offset.
    pub offset: f64,
    /// `max |V − offset − fit|` on a 1001-point grid over `[−Λ/2, Λ/2]`.
    pub residual: f64,
}

const FIT_SAMPLES: usize = 4096;

/// Order-`n_max` Fourier approximant of `v` on `[−Λ/2, Λ/2]`, by periodic
/// trapezoidal quadrature. Amplitudes are nonnegative, phases in `[0, 2π)`.
pub fn fourier_fit(v: impl Fn(f64) -> f64, lambda: f64, n_max: u32) -> Result<FourierFit> {
    if n_max < 1 {
        return Err(Error::InvalidInput("fit order must be at least 1".into()));
    }
    if !(lambda > 0.0) {
        return Err(Error::InvalidInput(format!("period must be positive, got {lambda}")));
    }
    let h = lambda / FIT_SAMPLES as f64;
    let xs: Vec<f64> = (0..FIT_SAMPLES).map(|i| -lambda / 2.0 + i as f64 * h).collect();
    let mut samples = Vec::with_capacity(FIT_SAMPLES);
    for &x in &xs {
        // The periodic rule wants the average of the two endpoint values.
        let y = if x == -lambda / 2.0 { 0.5 * (v(x) + v(lambda / 2.0)) } else { v(x) };
        if !y.is_finite() {
            return Err(Error::InvalidInput(format!("potential is not finite at x = {x}")));
        }
        samples.push(y);
    }
    let offset = samples.iter().sum::<f64>() / FIT_SAMPLES as f64;
    let mut terms = Vec::with_capacity(n_max as usize);
    for n in 1..=n_max {
        let k = TAU * n as f64 / lambda;
        let (mut cs, mut sn) = (0.0, 0.0);
        for (&x, &y) in xs.iter().zip(&samples) {
            cs += y * (k * x).cos();
            sn += y * (k * x).sin();
        }
        cs *= 2.0 / FIT_SAMPLES as f64;
        sn *= 2.0 / FIT_SAMPLES as f64;
        // c cos θ + s sin θ = B cos(θ + Φ) with B cos Φ = c, B sin Φ = −s.
        let b = cs.hypot(sn);
        // Quadrature noise on a pure cosine would otherwise fold to Φ ≈ 2π.
        let sn = if sn.abs() < 1e-12 * b { 0.0 } else { sn };
        let phi = (-sn).atan2(cs).rem_euclid(TAU);
        terms.push(FourierTerm { n, b, phi });
    }
    let fit = FourierPotential { delta: 0.0, lambda, terms: terms.clone() };
    let residual = (0..1001)
        .map(|i| -lambda / 2.0 + lambda * i as f64 / 1000.0)
        .map(|x| (v(x) - offset - fit.evaluate(x)).abs())
        .fold(0.0f64, f64::max);
    Ok(FourierFit { terms, offset, residual })
}

// ---------------------------------------------------------------------------
// Double-well geometry.

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WellGeometry {
    pub x_min_1: f64,
    pub x_min_2: f64,
    pub x_max: f64,
    pub barrier_left: f64,
    pub barrier_right: f64,
    /// `Ξ = 1 − (V(x_max) − V(x_min,1)) / (V(x_max) − V(x_min,2))`.
    pub xi: f64,
}

const SCAN_POINTS: usize = 4000;

/// Locates all critical points of `V` in `[−Λ, Λ]`, sorted.
fn critical_points(p: &FourierPotential) -> Vec<f64> {
    let lo = -p.lambda;
    let h = 2.0 * p.lambda / SCAN_POINTS as f64;
    let scale = p.delta.abs().max(p.terms.iter().map(|t| t.b.abs()).fold(0.0, f64::max)).max(f64::MIN_POSITIVE);
    let d = |x: f64| p.derivative(x) / scale;
    // Midpoint grid: symmetric about the origin without sampling it, so a
    // root at x = 0 of a symmetric potential always falls inside a bracket.
    let xs: Vec<f64> = (0..SCAN_POINTS).map(|i| lo + (i as f64 + 0.5) * h).collect();
    let mut roots = Vec::new();
    for w in xs.windows(2) {
        let (a, b) = (w[0], w[1]);
        let (da, db) = (d(a), d(b));
        if da == 0.0 {
            roots.push(a);
        } else if da.signum() != db.signum() && db != 0.0 {
            roots.push(bisect(&d, a, b));
        }
    }
    roots
}

fn bisect(f: &impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
    let mut fa = f(a);
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        let fm = f(m);
        if fm == 0.0 || (b - a) < 1e-15 * m.abs().max(1.0) {
            return m;
        }
        if fm.signum() == fa.signum() {
            a = m;
            fa = fm;
        } else {
            b = m;
        }
    }
    0.5 * (a + b)
}

pub fn analyze_double_well(p: &FourierPotential) -> Result<WellGeometry> {
    let crit = critical_points(p);
    let (mut minima, mut maxima) = (Vec::new(), Vec::new());
    for &x in &crit {
        if p.second_derivative(x) > 0.0 {
            minima.push(x);
        } else {
            maxima.push(x);
        }
    }
    let ok = minima.len() == 2 && maxima.len() == 1 && minima[0] < maxima[0] && maxima[0] < minima[1];
    if !ok {
        return Err(Error::NotADoubleWell { minima, maxima });
    }
    let (x1, x2, xm) = (minima[0], minima[1], maxima[0]);
    let vm = p.evaluate(xm);
    let barrier_left = vm - p.evaluate(x1);
    let barrier_right = vm - p.evaluate(x2);
    Ok(WellGeometry {
        x_min_1: x1,
        x_min_2: x2,
        x_max: xm,
        barrier_left,
        barrier_right,
        xi: 1.0 - barrier_left / barrier_right,
    })
}

// ---------------------------------------------------------------------------
// Spectrum.

#[derive(Clone, Debug)]
pub struct Spectrum {
    /// Ascending eigenvalues in rad/s.
    pub values: Vec<f64>,
    /// Eigenvectors as columns, in the order of `values`.
    pub vectors: CMat,
}

impl Spectrum {
    /// Population of `psi` in the lowest `levels` eigenstates.
    pub fn occupancy(&self, psi: &CVec, levels: usize) -> f64 {
        (0..levels).map(|k| self.vectors.column(k).dotc(psi).norm_sqr()).sum()
    }
}

const CONVERGED_LEVELS: usize = 10;

/// Eigendecomposition of `H_sim`, checked against cutoff + 20.
pub fn spectrum(p: &FourierPotential, space: FockSpace) -> Result<Spectrum> {
    let (values, vectors) = hilbert::hermitian_eigen(&p.hamiltonian(space)?)?;
    let larger = FockSpace::new(space.cutoff() + 20)?;
    let (big, _) = hilbert::hermitian_eigen(&p.hamiltonian(larger)?)?;
    let levels = CONVERGED_LEVELS.min(space.cutoff() / 2);
    let shift = (0..levels).map(|k| (values[k] - big[k]).abs()).fold(0.0, f64::max);
    let scale = p.delta.abs().max(1.0);
    if shift > 1e-8 * scale {
        return Err(Error::SpectrumNotConverged { cutoff: space.cutoff(), larger: larger.cutoff(), shift });
    }
    Ok(Spectrum { values, vectors })
}
