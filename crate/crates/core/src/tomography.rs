//! Emulated measurement chain: characteristic-function sampling through the
//! SDD + qubit-readout protocol, Hermitian completion, Wigner reconstruction,
//! position marginals and the two `⟨x⟩` estimators.
//!
//! Conventions: `χ(β) = Tr[D(β)ρ]` with `D(β) = exp(βa† − β*a)`, so
//! `χ(iv) = ⟨e^{i√2 v x}⟩`, and
//! `W(x,p) = (1/2π²) ∫ d²β χ(β) e^{i√2(p Re β − x Im β)}`.

use std::f64::consts::{FRAC_1_SQRT_2, PI, SQRT_2};

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::hilbert::{self, c, cis, CMat, HybridState, Qubit2, C64};
use crate::par;

/// Agreement required between the direct and protocol evaluations of χ.
const PATH_TOLERANCE: f64 = 1e-8;
const SAME_POINT: f64 = 1e-12;

/// `⟨m|D(β)|n⟩` for `m < rows`, `n < cols`, exact (no truncated generator).
///
/// Each diagonal `m − n = ±k` is a normalized associated-Laguerre sequence
/// `f_n = √(n!/(n+k)!) x^{k/2} e^{−x/2} L_n^{(k)}(x)`, `x = |β|²`, built with
/// the three-term recurrence in `n`. That recurrence runs from the forbidden
/// region into the oscillatory one, so it is forward-stable; recursing across
/// columns instead loses all accuracy past `n ≈ 40` at `|β| ≈ 2.5`.
pub fn displacement_elements(beta: C64, rows: usize, cols: usize) -> CMat {
    let mut d = CMat::zeros(rows, cols);
    let x = beta.norm_sqr();
    let unit = if x > 0.0 { beta / x.sqrt() } else { c(1.0, 0.0) };
    let mut f0 = (-0.5 * x).exp();
    for k in 0..rows.max(cols) {
        if k > 0 {
            f0 *= (x / k as f64).sqrt();
        }
        let kf = k as f64;
        // Below the diagonal the phase is (β/|β|)^k, above it (−β*/|β|)^k.
        for lower in [true, false] {
            if !lower && k == 0 {
                continue;
            }
            let len = if lower { rows.saturating_sub(k).min(cols) } else { rows.min(cols.saturating_sub(k)) };
            let phase = if lower { unit.powi(k as i32) } else { (-unit.conj()).powi(k as i32) };
            let (mut prev, mut f) = (0.0, f0);
            for n in 0..len {
                let (m, col) = if lower { (n + k, n) } else { (n, n + k) };
                d[(m, col)] = phase * f;
                let nf = n as f64;
                let next = ((2.0 * nf + kf + 1.0 - x) * f - (nf * (nf + kf)).sqrt() * prev)
                    / ((nf + 1.0) * (nf + kf + 1.0)).sqrt();
                prev = f;
                f = next;
            }
        }
    }
    d
}

fn chi_direct(rho: &CMat, beta: C64) -> C64 {
    let n = rho.nrows();
    hilbert::trace_product(&displacement_elements(beta, n, n), rho)
}

/// `Tr[D(β/2)† D(β/2)† ρ] = χ(β)*`. The intermediate index of the product
/// runs over a padded space large enough that every column below the cutoff
/// is complete to 1e-12, so the result carries no truncation error of its own.
fn half_displacement_overlap(rho: &CMat, beta: C64) -> C64 {
    let n = rho.nrows();
    let half = 0.5 * beta;
    let mut rows = n + 20 + (4.0 * half.norm() * (n as f64).sqrt() + half.norm_sqr()).ceil() as usize;
    loop {
        let m = displacement_elements(half, rows, rows);
        let defect = (0..n).map(|j| 1.0 - m.column(j).norm_squared()).fold(0.0, f64::max);
        // Rounding alone leaves ~1e-13; the cap only guards against a
        // defect that never settles.
        if defect < 1e-12 || rows > 8 * (n + 20) {
            // (M†M†)_{ij} = Σ_k (M_{ki})* (M_{jk})*
            let left = m.columns(0, n).adjoint();
            let right = m.rows(0, n).adjoint();
            return hilbert::trace_product(&hilbert::mul(&left, &right), rho);
        }
        rows += rows / 2;
    }
}

/// Emulates the SDD + readout protocol for a qubit prepared in `|q⟩`:
/// returns `P(↓)` after `D(σ_x β/2)`.
fn protocol_down_probability(qubit: [C64; 2], overlap_conj_chi: C64) -> f64 {
    // Coefficients in the (+, −) basis.
    let cp = (qubit[0] + qubit[1]) * FRAC_1_SQRT_2;
    let cm = (qubit[0] - qubit[1]) * FRAC_1_SQRT_2;
    // P↓ = ½[|c₊|² + |c₋|² + 2 Re(c₊* c₋ ⟨D(−β)⟩)]
    0.5 * (cp.norm_sqr() + cm.norm_sqr() + 2.0 * (cp.conj() * cm * overlap_conj_chi).re)
}

fn rx_half_pi_down() -> [C64; 2] {
    let r: Qubit2 = hilbert::rx(PI / 2.0);
    [r[(0, 0)], r[(1, 0)]]
}

/// Readout probabilities `(P↓ for Re, P↓ for Im)` from the protocol.
fn protocol_probabilities(rho: &CMat, beta: C64) -> (f64, f64) {
    let overlap = half_displacement_overlap(rho, beta);
    let down = [c(1.0, 0.0), c(0.0, 0.0)];
    (protocol_down_probability(down, overlap), protocol_down_probability(rx_half_pi_down(), overlap))
}

/// `χ(β) = Tr[D(β)ρ_osc]`, evaluated directly and through the readout
/// protocol; the two must agree.
pub fn chi_point(state: &HybridState, beta: C64) -> Result<C64> {
    chi_from_density(&state.oscillator_density(), beta)
}

fn chi_from_density(rho: &CMat, beta: C64) -> Result<C64> {
    let direct = chi_direct(rho, beta);
    let (p_re, p_im) = protocol_probabilities(rho, beta);
    let protocol = c(2.0 * p_re - 1.0, 2.0 * p_im - 1.0);
    let gap = (direct - protocol).norm();
    if gap > PATH_TOLERANCE {
        return Err(Error::InvalidState(format!("characteristic function paths disagree by {gap:.3e} at β={beta}")));
    }
    Ok(if beta == c(0.0, 0.0) { c(1.0, 0.0) } else { protocol })
}

// ---------------------------------------------------------------------------
// Scans.

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScanPoint {
    pub beta: C64,
    pub re: f64,
    pub im: f64,
    /// 0 marks a noiseless value.
    pub shots_re: u32,
    pub shots_im: u32,
}

impl ScanPoint {
    pub fn value(&self) -> C64 {
        c(self.re, self.im)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ScanKind {
    Line,
    Grid,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CharacteristicScan {
    pub points: Vec<ScanPoint>,
    /// Constant subtracted from every χ value before reconstruction.
    pub background: Option<C64>,
    pub kind: ScanKind,
}

impl CharacteristicScan {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("re_beta,im_beta,re_chi,im_chi,shots_re,shots_im\n");
        for p in &self.points {
            out.push_str(&format!(
                "{:.16e},{:.16e},{:.16e},{:.16e},{},{}\n",
                p.beta.re, p.beta.im, p.re, p.im, p.shots_re, p.shots_im
            ));
        }
        out
    }

    pub fn from_csv(text: &str, kind: ScanKind) -> Result<Self> {
        let mut points = Vec::new();
        for (i, line) in text.lines().enumerate().skip(1) {
            let bad = |msg: &str| Error::Parse { line: i + 1, msg: msg.to_string() };
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 6 {
                return Err(bad("expected 6 columns"));
            }
            let num = |s: &str| s.trim().parse::<f64>().map_err(|_| bad("bad number"));
            let int = |s: &str| s.trim().parse::<u32>().map_err(|_| bad("bad shot count"));
            points.push(ScanPoint {
                beta: c(num(f[0])?, num(f[1])?),
                re: num(f[2])?,
                im: num(f[3])?,
                shots_re: int(f[4])?,
                shots_im: int(f[5])?,
            });
        }
        Ok(Self { points, background: None, kind })
    }
}

/// Half-plane grid: `n_re` points over `Re β ∈ [−re_max, re_max]`, `n_im`
/// points over `Im β ∈ [0, im_max]`.
pub fn half_plane_grid(re_max: f64, n_re: usize, im_max: f64, n_im: usize) -> Vec<C64> {
    let mut out = Vec::with_capacity(n_re * n_im);
    for k in 0..n_im {
        for j in 0..n_re {
            out.push(c(linspace_at(-re_max, re_max, n_re, j), linspace_at(0.0, im_max, n_im, k)));
        }
    }
    out
}

/// `n` points along `β = iv`, `v ∈ [0, v_max]`.
pub fn line_grid(v_max: f64, n: usize) -> Vec<C64> {
    (0..n).map(|k| c(0.0, linspace_at(0.0, v_max, n, k))).collect()
}

fn linspace_at(a: f64, b: f64, n: usize, k: usize) -> f64 {
    if n < 2 {
        a
    } else {
        a + (b - a) * k as f64 / (n - 1) as f64
    }
}

pub fn seeded_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Binomial readout estimate `2k/shots − 1`, `k ~ Binomial(shots, (1+v)/2)`.
pub fn sample_expectation(value: f64, shots: u32, rng: &mut ChaCha8Rng) -> f64 {
    if shots == 0 {
        return value;
    }
    let p = (0.5 * (1.0 + value)).clamp(0.0, 1.0);
    let k = Binomial::new(shots as u64, p).expect("p clamped to [0, 1]").sample(rng);
    2.0 * k as f64 / shots as f64 - 1.0
}

/// Samples χ at every β. Point `i` draws from stream `i` of the seeded
/// generator, so results do not depend on scheduling. `shots = 0` returns
/// the noiseless values.
pub fn sample_scan(state: &HybridState, betas: &[C64], shots: u32, seed: u64, kind: ScanKind) -> Result<CharacteristicScan> {
    let rho = state.oscillator_density();
    let points = par::map_range(betas.len(), |i| -> Result<ScanPoint> {
        let beta = betas[i];
        let chi = chi_from_density(&rho, beta)?;
        let mut rng = seeded_rng(seed, i as u64);
        let re = sample_expectation(chi.re, shots, &mut rng);
        let im = sample_expectation(chi.im, shots, &mut rng);
        Ok(ScanPoint { beta, re, im, shots_re: shots, shots_im: shots })
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    Ok(CharacteristicScan { points, background: None, kind })
}

fn shot_sigma(shots: u32) -> f64 {
    if shots == 0 {
        1e-9
    } else {
        1.0 / (shots as f64).sqrt()
    }
}

/// Appends `χ(−β) = χ(β)*` for every point whose mirror is missing.
/// Existing mirrors are kept; disagreements beyond 3σ are logged.
pub fn complete_hermitian(scan: &CharacteristicScan) -> CharacteristicScan {
    let mut out = scan.points.clone();
    let mut conflicts = 0;
    for p in &scan.points {
        let mirror = -p.beta;
        let mirrored = ScanPoint { beta: mirror, re: p.re, im: -p.im, ..*p };
        match out.iter().find(|q| (q.beta - mirror).norm() < SAME_POINT) {
            Some(q) => {
                let sigma = shot_sigma(p.shots_re.min(q.shots_re)).max(shot_sigma(p.shots_im.min(q.shots_im)));
                if (q.value() - mirrored.value()).norm() > 3.0 * SQRT_2 * sigma && q.beta != p.beta {
                    conflicts += 1;
                }
            }
            None => out.push(mirrored),
        }
    }
    if conflicts > 0 {
        log::warn!("{conflicts} mirrored scan points disagree beyond 3σ");
    }
    CharacteristicScan { points: out, background: scan.background, kind: scan.kind }
}

// ---------------------------------------------------------------------------
// Wigner reconstruction.

#[derive(Clone, Debug, PartialEq)]
pub struct WignerGrid {
    pub x_axis: Vec<f64>,
    pub p_axis: Vec<f64>,
    /// `values[(i, j)] = W(x_i, p_j)`.
    pub values: DMatrix<f64>,
    /// Largest discarded imaginary part.
    pub max_imag: f64,
}

impl WignerGrid {
    pub fn dx(&self) -> f64 {
        self.x_axis[1] - self.x_axis[0]
    }

    pub fn dp(&self) -> f64 {
        self.p_axis[1] - self.p_axis[0]
    }

    /// `Σ W dx dp`.
    pub fn normalization(&self) -> f64 {
        self.values.sum() * self.dx() * self.dp()
    }

    /// `(x, p)` of the largest value.
    pub fn peak(&self) -> (f64, f64) {
        let (mut bi, mut bj) = (0, 0);
        for j in 0..self.values.ncols() {
            for i in 0..self.values.nrows() {
                if self.values[(i, j)] > self.values[(bi, bj)] {
                    (bi, bj) = (i, j);
                }
            }
        }
        (self.x_axis[bi], self.p_axis[bj])
    }

    /// Axes as two header rows, then one row of `W(x_i, ·)` per x.
    pub fn to_csv(&self) -> String {
        let row = |name: &str, v: &[f64]| {
            let mut s = String::from(name);
            for x in v {
                s.push_str(&format!(",{x:.16e}"));
            }
            s.push('\n');
            s
        };
        let mut out = row("x_axis", &self.x_axis);
        out.push_str(&row("p_axis", &self.p_axis));
        for i in 0..self.values.nrows() {
            let vals: Vec<f64> = self.values.row(i).iter().copied().collect();
            out.push_str(&row("W", &vals));
        }
        out
    }
}

/// Scan values on a centered uniform grid, zero-padded.
struct PaddedGrid {
    du: f64,
    dv: f64,
    /// `chi[(k, j)]` at `β = (j − cu) du + i (k − cv) dv`.
    chi: CMat,
}

fn uniform_axis(values: impl Iterator<Item = f64>, name: &str) -> Result<(f64, i64, i64)> {
    let mut v: Vec<f64> = values.collect();
    v.sort_by(|a, b| a.total_cmp(b));
    v.dedup_by(|a, b| (*a - *b).abs() < 1e-9);
    if v.len() < 2 {
        return Err(Error::InvalidInput(format!("scan has fewer than two {name} values")));
    }
    let step = v[1] - v[0];
    for w in v.windows(2) {
        if ((w[1] - w[0]) - step).abs() > 1e-9 * step.max(1.0) {
            return Err(Error::InvalidInput(format!("scan grid is not uniform along {name}")));
        }
    }
    let lo = v[0] / step;
    let hi = v[v.len() - 1] / step;
    if (lo - lo.round()).abs() > 1e-6 || (hi - hi.round()).abs() > 1e-6 {
        return Err(Error::InvalidInput(format!("scan grid along {name} is not aligned with the origin")));
    }
    Ok((step, lo.round() as i64, hi.round() as i64))
}

fn padded_grid(scan: &CharacteristicScan, pad_radius: f64) -> Result<PaddedGrid> {
    let (du, u_lo, u_hi) = uniform_axis(scan.points.iter().map(|p| p.beta.re), "Re β")?;
    let (dv, v_lo, v_hi) = uniform_axis(scan.points.iter().map(|p| p.beta.im), "Im β")?;
    let hu = ((pad_radius / du + 1e-9).floor() as i64).max(u_lo.abs()).max(u_hi);
    let hv = ((pad_radius / dv + 1e-9).floor() as i64).max(v_lo.abs()).max(v_hi);
    let (lu, lv) = ((2 * hu + 1) as usize, (2 * hv + 1) as usize);
    let mut chi = CMat::zeros(lv, lu);
    let mut filled = vec![false; lu * lv];
    let bg = scan.background.unwrap_or(c(0.0, 0.0));
    for p in &scan.points {
        let j = ((p.beta.re / du).round() as i64 + hu) as usize;
        let k = ((p.beta.im / dv).round() as i64 + hv) as usize;
        chi[(k, j)] = p.value() - bg;
        filled[k * lu + j] = true;
    }
    for k in (v_lo + hv) as usize..=(v_hi + hv) as usize {
        for j in (u_lo + hu) as usize..=(u_hi + hu) as usize {
            if !filled[k * lu + j] {
                return Err(Error::InvalidInput("scan grid has missing points; complete it to the full plane".into()));
            }
        }
    }
    if u_lo != -u_hi || v_lo != -v_hi {
        return Err(Error::InvalidInput("scan must cover the full plane; apply Hermitian completion".into()));
    }
    Ok(PaddedGrid { du, dv, chi })
}

fn centered_axis(len: usize, step: f64) -> Vec<f64> {
    let c0 = (len - 1) as f64 / 2.0;
    (0..len).map(|l| (l as f64 - c0) * step).collect()
}

/// Wigner function via a 2-D FFT on the zero-padded scan. Output spacing is
/// the reciprocal of the padded extent: `dp = 2π/(√2·L_u·Δu)`.
pub fn wigner_from_scan(scan: &CharacteristicScan, pad_radius: f64) -> Result<WignerGrid> {
    let g = padded_grid(scan, pad_radius)?;
    let (lv, lu) = g.chi.shape();
    let (cu, cv) = ((lu - 1) as f64 / 2.0, (lv - 1) as f64 / 2.0);
    let mut planner = FftPlanner::<f64>::new();
    let inv = planner.plan_fft_inverse(lu);
    let fwd = planner.plan_fft_forward(lv);

    // Along u: Σ_j f_j e^{+i2π(j−c)(l−c)/L}.
    let mut rows: Vec<Vec<C64>> = (0..lv)
        .map(|k| (0..lu).map(|j| g.chi[(k, j)] * cis(-2.0 * PI * j as f64 * cu / lu as f64)).collect())
        .collect();
    for r in rows.iter_mut() {
        inv.process(r);
        for (l, z) in r.iter_mut().enumerate() {
            *z *= cis(-2.0 * PI * cu * (l as f64 - cu) / lu as f64);
        }
    }
    // Along v: Σ_k f_k e^{−i2π(k−c)(l−c)/L}.
    let mut out = CMat::zeros(lv, lu); // (x index, p index)
    for lp in 0..lu {
        let mut col: Vec<C64> =
            (0..lv).map(|k| rows[k][lp] * cis(2.0 * PI * k as f64 * cv / lv as f64)).collect();
        fwd.process(&mut col);
        for (lx, z) in col.into_iter().enumerate() {
            out[(lx, lp)] = z * cis(2.0 * PI * cv * (lx as f64 - cv) / lv as f64);
        }
    }
    let scale = g.du * g.dv / (2.0 * PI * PI);
    let max_imag = out.iter().map(|z| z.im.abs()).fold(0.0, f64::max) * scale;
    Ok(WignerGrid {
        x_axis: centered_axis(lv, 2.0 * PI / (SQRT_2 * lv as f64 * g.dv)),
        p_axis: centered_axis(lu, 2.0 * PI / (SQRT_2 * lu as f64 * g.du)),
        values: out.map(|z| z.re * scale),
        max_imag,
    })
}

/// Riemann-sum evaluation of the Wigner transform on the same padded grid
/// and output axes as [`wigner_from_scan`]. O(L⁴); the FFT's oracle.
pub fn wigner_direct(scan: &CharacteristicScan, pad_radius: f64) -> Result<WignerGrid> {
    let g = padded_grid(scan, pad_radius)?;
    let (lv, lu) = g.chi.shape();
    let x_axis = centered_axis(lv, 2.0 * PI / (SQRT_2 * lv as f64 * g.dv));
    let p_axis = centered_axis(lu, 2.0 * PI / (SQRT_2 * lu as f64 * g.du));
    let u = centered_axis(lu, g.du);
    let v = centered_axis(lv, g.dv);
    let scale = g.du * g.dv / (2.0 * PI * PI);
    let vals = par::map_range(lv * lu, |idx| {
        let (ix, ip) = (idx % lv, idx / lv);
        let mut acc = c(0.0, 0.0);
        for k in 0..lv {
            for j in 0..lu {
                let z = g.chi[(k, j)];
                if z != c(0.0, 0.0) {
                    acc += z * cis(SQRT_2 * (p_axis[ip] * u[j] - x_axis[ix] * v[k]));
                }
            }
        }
        acc * scale
    });
    let max_imag = vals.iter().map(|z| z.im.abs()).fold(0.0, f64::max);
    Ok(WignerGrid { values: DMatrix::from_fn(lv, lu, |i, j| vals[j * lv + i].re), x_axis, p_axis, max_imag })
}

// ---------------------------------------------------------------------------
// Marginals.

#[derive(Clone, Debug, PartialEq)]
pub struct Marginal {
    pub x: Vec<f64>,
    pub p: Vec<f64>,
}

impl Marginal {
    pub fn integral(&self) -> f64 {
        let dx = self.x[1] - self.x[0];
        self.p.iter().sum::<f64>() * dx
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("x,P\n");
        for (x, p) in self.x.iter().zip(&self.p) {
            out.push_str(&format!("{x:.16e},{p:.16e}\n"));
        }
        out
    }
}

pub enum MarginalSource<'a> {
    Wigner(&'a WignerGrid),
    /// Scan along `β = iv`, `v ≥ 0`, evaluated at the given positions.
    Line { scan: &'a CharacteristicScan, x: &'a [f64] },
}

/// `P(x) = ∫ W dp`, or from a line scan
/// `P(x) = (1/π√2) ∫ χ(iv) e^{−i√2 x v} dv` with the `v < 0` half supplied
/// by Hermitian symmetry.
pub fn prob_x(source: MarginalSource<'_>) -> Result<Marginal> {
    match source {
        MarginalSource::Wigner(w) => {
            let dp = w.dp();
            let p = (0..w.values.nrows()).map(|i| w.values.row(i).sum() * dp).collect();
            Ok(Marginal { x: w.x_axis.clone(), p })
        }
        MarginalSource::Line { scan, x } => {
            let (dv, samples) = line_samples(scan)?;
            let p = x
                .iter()
                .map(|&xi| {
                    let mut acc = 0.5; // χ(0) = 1, counted once across both halves
                    for &(v, chi) in &samples {
                        acc += (chi * cis(-SQRT_2 * xi * v)).re;
                    }
                    SQRT_2 / PI * dv * acc
                })
                .collect();
            Ok(Marginal { x: x.to_vec(), p })
        }
    }
}

/// Uniform `v > 0` samples of a line scan, background removed.
fn line_samples(scan: &CharacteristicScan) -> Result<(f64, Vec<(f64, C64)>)> {
    let bg = scan.background.unwrap_or(c(0.0, 0.0));
    let mut pts: Vec<(f64, C64)> = scan
        .points
        .iter()
        .filter(|p| p.beta.re.abs() < SAME_POINT && p.beta.im > SAME_POINT)
        .map(|p| (p.beta.im, p.value() - bg))
        .collect();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    if pts.len() < 2 {
        return Err(Error::InvalidInput("line scan needs at least two points with Im β > 0".into()));
    }
    let dv = pts[1].0 - pts[0].0;
    for (k, (v, _)) in pts.iter().enumerate() {
        let first = pts[0].0;
        if (v - first - k as f64 * dv).abs() > 1e-9 || ((first / dv) - (first / dv).round()).abs() > 1e-6 {
            return Err(Error::InvalidInput("line scan is not a uniform grid anchored at 0".into()));
        }
    }
    Ok((dv, pts))
}

// ---------------------------------------------------------------------------
// Position estimators.

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum SlopeModel {
    /// `Im χ(iv) = c₁v + c₃v³`; `Im χ` is odd in v.
    #[default]
    OddCubic,
    /// `Im χ(iv) = c₁v`.
    Line,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SlopeFit {
    pub x_expect: f64,
    pub uncertainty: f64,
}

/// `⟨x⟩ = (1/√2) ∂Im χ(iv)/∂v |₀` from a least-squares fit through the exact
/// anchor `χ(0) = 1`.
pub fn xexpect_slope(scan: &CharacteristicScan, model: SlopeModel) -> Result<SlopeFit> {
    let bg = scan.background.unwrap_or(c(0.0, 0.0));
    let pts: Vec<&ScanPoint> =
        scan.points.iter().filter(|p| p.beta.re.abs() < SAME_POINT && p.beta.im > SAME_POINT).collect();
    if pts.len() < 3 {
        return Err(Error::InvalidInput(format!("slope fit needs at least 3 points on Re β = 0, got {}", pts.len())));
    }
    let cols = match model {
        SlopeModel::OddCubic => 2,
        SlopeModel::Line => 1,
    };
    let noisy = pts.iter().all(|p| p.shots_im > 0);
    let mut a = DMatrix::<f64>::zeros(pts.len(), cols);
    let mut y = nalgebra::DVector::<f64>::zeros(pts.len());
    let mut w = nalgebra::DVector::<f64>::from_element(pts.len(), 1.0);
    for (i, p) in pts.iter().enumerate() {
        let v = p.beta.im;
        a[(i, 0)] = v;
        if cols == 2 {
            a[(i, 1)] = v * v * v;
        }
        y[i] = p.im - bg.im;
        if noisy {
            w[i] = p.shots_im as f64 / (1.0 - y[i] * y[i]).max(1e-3);
        }
    }
    let aw = DMatrix::from_fn(a.nrows(), cols, |i, j| a[(i, j)] * w[i]);
    let normal = a.transpose() * &aw;
    let inv = normal.try_inverse().ok_or_else(|| Error::InvalidInput("degenerate slope fit".into()))?;
    let coef = &inv * (aw.transpose() * &y);
    let var = if noisy {
        inv[(0, 0)]
    } else {
        let resid = &y - &a * &coef;
        let dof = (pts.len() - cols).max(1) as f64;
        inv[(0, 0)] * resid.norm_squared() / dof
    };
    Ok(SlopeFit { x_expect: coef[0] * FRAC_1_SQRT_2, uncertainty: var.sqrt() * FRAC_1_SQRT_2 })
}

/// Probe point of the two-point finite difference with spacing `h`.
pub fn pfd_probe(h: f64) -> C64 {
    c(0.0, 0.5 * h)
}

/// `⟨x⟩ ≈ [Im χ(ih/2) − Im χ(−ih/2)] / (√2 h) = Im χ(ih/2) / (√2·h/2)`.
pub fn pfd_from_im_chi(im_chi: f64, h: f64) -> f64 {
    im_chi / (SQRT_2 * 0.5 * h)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PfdEstimate {
    pub x_expect: f64,
    /// Sampled (or exact, for zero shots) `Im χ` at the probe.
    pub im_chi: f64,
    /// `|noiseless estimate − ⟨x⟩|` for the model state.
    pub bias: f64,
}

/// Single-point `⟨x⟩` estimate from `shots` readouts of `Im χ(ih/2)`, drawn
/// from stream `stream` of the seeded generator.
pub fn xexpect_2pfd(state: &HybridState, h: f64, shots: u32, seed: u64, stream: u64) -> Result<PfdEstimate> {
    if !(h > 0.0) {
        return Err(Error::InvalidInput(format!("finite-difference spacing {h} must be positive")));
    }
    let rho = state.oscillator_density();
    let chi = chi_from_density(&rho, pfd_probe(h))?;
    let (x, _) = hilbert::quadratures(state.space());
    let exact = hilbert::trace_product(&x.matrix, &rho).re;
    let bias = (pfd_from_im_chi(chi.im, h) - exact).abs();
    let im_chi = sample_expectation(chi.im, shots, &mut seeded_rng(seed, stream));
    Ok(PfdEstimate { x_expect: pfd_from_im_chi(im_chi, h), im_chi, bias })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hilbert::FockSpace;

    fn coherent(n: usize, gamma: C64) -> HybridState {
        let s = FockSpace::new(n).unwrap();
        HybridState::down(s, &hilbert::coherent_state(s, gamma).unwrap()).unwrap()
    }

    #[test]
    fn displacement_elements_match_laguerre_closed_form() {
        // Reference values from the closed form at 40-digit precision.
        let cases = [
            (c(0.0, 2.449), 100, 80, c(0.1195557402467761, 0.0)),
            (c(0.0, 4.0), 147, 91, c(-0.05843939008952815, 0.0)),
            (c(7.0, -2.0), 30, 120, c(0.09325002548848113, -0.008017905314552857)),
            (c(1.5, 0.5), 0, 3, c(-0.2631714604377052, 0.3801365539655741)),
        ];
        for (beta, m, n, want) in cases {
            let d = displacement_elements(beta, 160, 160);
            assert!((d[(m, n)] - want).norm() < 1e-13, "{beta} {m} {n}: {}", d[(m, n)]);
        }
        let d = displacement_elements(c(0.0, 0.0), 5, 7);
        assert_eq!(d[(3, 3)], c(1.0, 0.0));
        assert_eq!(d[(2, 4)], c(0.0, 0.0));
    }

    fn coherent_chi(beta: C64, gamma: C64) -> C64 {
        (c(-0.5 * beta.norm_sqr(), 0.0) + beta * gamma.conj() - beta.conj() * gamma).exp()
    }

    #[test]
    fn displacement_elements_match_truncated_generator() {
        let s = FockSpace::new(80).unwrap();
        let beta = c(0.7, -0.4);
        let exact = displacement_elements(beta, 80, 80);
        let kernel = hilbert::DisplacementKernel::new(s).matrix(beta);
        assert!((exact.view((0, 0), (30, 30)) - kernel.view((0, 0), (30, 30))).norm() < 1e-10);
    }

    #[test]
    fn chi_of_coherent_state() {
        let g = c(-1.5 * FRAC_1_SQRT_2, 0.3);
        let st = coherent(60, g);
        assert_eq!(chi_point(&st, c(0.0, 0.0)).unwrap(), c(1.0, 0.0));
        for beta in [c(0.3, 0.2), c(-1.0, 0.5), c(2.0, -3.0), c(0.0, 4.0)] {
            assert!((chi_point(&st, beta).unwrap() - coherent_chi(beta, g)).norm() < 1e-9, "{beta}");
        }
    }

    #[test]
    fn seeded_scans_repeat() {
        let st = coherent(40, c(0.5, 0.0));
        let betas = half_plane_grid(2.0, 5, 2.0, 3);
        let a = sample_scan(&st, &betas, 500, 7, ScanKind::Grid).unwrap();
        let b = sample_scan(&st, &betas, 500, 7, ScanKind::Grid).unwrap();
        assert_eq!(a.to_csv(), b.to_csv());
        let c2 = sample_scan(&st, &betas, 500, 8, ScanKind::Grid).unwrap();
        assert_ne!(a.to_csv(), c2.to_csv());
    }

    #[test]
    fn hermitian_completion_is_idempotent() {
        let st = coherent(40, c(0.5, 0.2));
        let scan = sample_scan(&st, &half_plane_grid(2.0, 5, 2.0, 3), 0, 1, ScanKind::Grid).unwrap();
        let full = complete_hermitian(&scan);
        assert_eq!(full.points.len(), 5 * 5);
        assert_eq!(complete_hermitian(&full), full);
        for p in &full.points {
            assert!((p.value() - coherent_chi(p.beta, c(0.5, 0.2))).norm() < 1e-9);
        }
    }

    #[test]
    fn fft_matches_direct_sum() {
        let st = coherent(40, c(-1.0, 0.4));
        let scan = complete_hermitian(&sample_scan(&st, &half_plane_grid(4.0, 21, 4.0, 11), 0, 1, ScanKind::Grid).unwrap());
        let fast = wigner_from_scan(&scan, 4.0).unwrap();
        let slow = wigner_direct(&scan, 4.0).unwrap();
        assert!((&fast.values - &slow.values).abs().max() < 1e-8);
        assert_eq!(fast.x_axis, slow.x_axis);
    }

    #[test]
    fn non_uniform_grid_is_rejected() {
        let mut betas = half_plane_grid(2.0, 5, 2.0, 3);
        betas.push(c(0.3, 0.0));
        let st = coherent(30, c(0.0, 0.0));
        let scan = complete_hermitian(&sample_scan(&st, &betas, 0, 1, ScanKind::Grid).unwrap());
        assert!(wigner_from_scan(&scan, 10.0).is_err());
    }

    #[test]
    fn slope_models() {
        let g = c(-1.5 * FRAC_1_SQRT_2, 0.0);
        let st = coherent(40, g);
        let betas = [c(0.0, 0.1), c(0.0, 0.2), c(0.0, 0.3)];
        let scan = sample_scan(&st, &betas, 0, 0, ScanKind::Line).unwrap();
        let odd = xexpect_slope(&scan, SlopeModel::OddCubic).unwrap();
        assert!((odd.x_expect + 1.5).abs() < 0.02);
        let line = xexpect_slope(&scan, SlopeModel::Line).unwrap();
        assert!((line.x_expect + 1.5).abs() > 0.1);
        assert!(xexpect_slope(&sample_scan(&st, &betas[..2], 0, 0, ScanKind::Line).unwrap(), SlopeModel::Line).is_err());
    }
}
