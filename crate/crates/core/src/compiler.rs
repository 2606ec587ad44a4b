//! Lowering of a [`FourierPotential`] into a gate program of SDD/SQR
//! primitives, and of that program into a timed pulse schedule.
//!
//! Primitive lists are in application (time) order: the first element acts
//! first. Operator products are written right-to-left as usual, so
//! `Q = D(−σ_xα)·R_φ(−ϑ)·D(σ_xα)` is emitted as
//! `[SDD(α), SQRX(φ), SQRZ(−ϑ), SQRX(−φ), SDD(−α)]`.
//!
//! The composed `Q(α, ϑ, φ)` equals
//! `exp(½iϑ(σ_z cos(2√2|α| x_q + φ) + σ_y sin(2√2|α| x_q + φ)))` with `x_q`
//! the quadrature at phase `arg α + π/2`. To make the gate act on the
//! interaction-picture position `x_I(kΔt) = x_{kδΔt}` the compiler therefore
//! emits SDD amplitudes `α₀e^{i(ζ − π/2)}`.

use std::f64::consts::{FRAC_PI_2, SQRT_2, TAU};
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::hilbert::{self, c, CMat, DisplacementKernel, FockSpace, Qubit2};
use crate::potential::{FourierPotential, FourierTerm};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Basis {
    Down,
    Up,
}

impl Basis {
    pub fn index(self) -> usize {
        match self {
            Basis::Down => hilbert::DOWN,
            Basis::Up => hilbert::UP,
        }
    }

    fn as_str(self) -> &'static str {
        match self {
            Basis::Down => "down",
            Basis::Up => "up",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        match s {
            "down" => Some(Basis::Down),
            "up" => Some(Basis::Up),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Primitive {
    /// `D(σ_x α)`, with laser detuning `detuning` (rad/s) during the pulse.
    Sdd { alpha: hilbert::C64, detuning: f64 },
    /// `R_x(angle)`.
    SqrX { angle: f64 },
    /// `R_z(angle)`, realized as a frame update.
    SqrZ { angle: f64 },
    /// Qubit reset.
    Prep { state: Basis },
    /// Projective qubit measurement keeping `keep`.
    Measure { keep: Basis },
}

impl Primitive {
    pub fn is_sdd(&self) -> bool {
        matches!(self, Primitive::Sdd { .. })
    }

    fn with_detuning(self, d: f64) -> Self {
        match self {
            Primitive::Sdd { alpha, .. } => Primitive::Sdd { alpha, detuning: d },
            other => other,
        }
    }

    fn write_text(&self, out: &mut String) {
        match *self {
            Primitive::Sdd { alpha, detuning } => {
                write!(out, "SDD {} {} {}", num(alpha.re), num(alpha.im), num(detuning)).unwrap()
            }
            Primitive::SqrX { angle } => write!(out, "SQRX {}", num(angle)).unwrap(),
            Primitive::SqrZ { angle } => write!(out, "SQRZ {}", num(angle)).unwrap(),
            Primitive::Prep { state } => write!(out, "PREP {}", state.as_str()).unwrap(),
            Primitive::Measure { keep } => write!(out, "MEAS {}", keep.as_str()).unwrap(),
        }
    }

    fn parse_text(words: &[&str], line: usize) -> Result<Self> {
        let err = |msg: &str| Error::Parse { line, msg: msg.to_string() };
        let f = |i: usize| -> Result<f64> {
            words.get(i).ok_or_else(|| err("missing field"))?.parse::<f64>().map_err(|e| err(&e.to_string()))
        };
        let expect = |n: usize| if words.len() == n { Ok(()) } else { Err(err("wrong field count")) };
        match words.first().copied() {
            Some("SDD") => {
                expect(4)?;
                Ok(Primitive::Sdd { alpha: c(f(1)?, f(2)?), detuning: f(3)? })
            }
            Some("SQRX") => {
                expect(2)?;
                Ok(Primitive::SqrX { angle: f(1)? })
            }
            Some("SQRZ") => {
                expect(2)?;
                Ok(Primitive::SqrZ { angle: f(1)? })
            }
            Some("PREP") | Some("MEAS") => {
                expect(2)?;
                let b = Basis::parse(words[1]).ok_or_else(|| err("basis must be down or up"))?;
                Ok(if words[0] == "PREP" { Primitive::Prep { state: b } } else { Primitive::Measure { keep: b } })
            }
            Some(other) => Err(err(&format!("unknown primitive {other}"))),
            None => Err(err("empty line")),
        }
    }
}

/// 17 significant digits; parses back to the identical `f64`.
pub(crate) fn num(x: f64) -> String {
    format!("{x:.16e}")
}

// ---------------------------------------------------------------------------
// Gate parameters and BQSP blocks.

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrigGateParams {
    /// `πn/(√2Λ)`.
    pub alpha0: f64,
    /// `kδΔt` reduced to `[0, 2π)`.
    pub zeta: f64,
    /// `B_n Δt`.
    pub theta: f64,
    /// `Φ_n`.
    pub phi: f64,
}

impl TrigGateParams {
    /// `α₀e^{iζ}`.
    pub fn alpha(&self) -> hilbert::C64 {
        hilbert::C64::from_polar(self.alpha0, self.zeta)
    }

    /// SDD amplitude whose gate acts on the quadrature at phase `ζ`.
    pub fn sdd_alpha(&self) -> hilbert::C64 {
        hilbert::C64::from_polar(self.alpha0, self.zeta - FRAC_PI_2)
    }
}

pub fn trig_gate_params(term: FourierTerm, k: usize, dt: f64, lambda: f64, delta: f64) -> TrigGateParams {
    if k == 0 && (delta * dt).abs() > 0.5 {
        log::warn!("phase advance per step δΔt = {:.3} rad exceeds 0.5", delta * dt);
    }
    TrigGateParams {
        alpha0: std::f64::consts::PI * term.n as f64 / (SQRT_2 * lambda),
        zeta: (k as f64 * delta * dt).rem_euclid(TAU),
        theta: term.b * dt,
        phi: term.phi,
    }
}

/// `Q(α, ϑ, φ) = D(−σ_xα)·R_φ(−ϑ)·D(σ_xα)`, with
/// `R_φ(−ϑ) = R_x(−φ)R_z(−ϑ)R_x(φ)`. SQR_X entries are dropped when `φ = 0`.
pub fn build_q(alpha: hilbert::C64, theta: f64, phi: f64) -> Vec<Primitive> {
    let mut out = vec![Primitive::Sdd { alpha, detuning: 0.0 }];
    if phi != 0.0 {
        out.push(Primitive::SqrX { angle: phi });
    }
    out.push(Primitive::SqrZ { angle: -theta });
    if phi != 0.0 {
        out.push(Primitive::SqrX { angle: -phi });
    }
    out.push(Primitive::Sdd { alpha: -alpha, detuning: 0.0 });
    out
}

/// `G̃_c = Q(α, ϑ, φ)·Q(−α, ϑ, −φ)`: the second factor acts first.
pub fn build_trig_gate(alpha: hilbert::C64, theta: f64, phi: f64) -> Vec<Primitive> {
    let mut out = build_q(-alpha, theta, -phi);
    out.extend(build_q(alpha, theta, phi));
    out
}

/// `R_y(θ)` as `R_z(π/2)R_x(θ)R_z(−π/2)`, in time order.
fn ry_sequence(theta: f64) -> [Primitive; 3] {
    [
        Primitive::SqrZ { angle: -FRAC_PI_2 },
        Primitive::SqrX { angle: theta },
        Primitive::SqrZ { angle: FRAC_PI_2 },
    ]
}

/// Takes `|↓⟩⊗|0⟩` to `|↓⟩⊗|x0/√2⟩`: rotate `|↓⟩` to `|+⟩`, displace by
/// `σ_x x0/√2`, rotate back.
pub fn initialization_sequence(x0: f64) -> Vec<Primitive> {
    let mut out = ry_sequence(-FRAC_PI_2).to_vec();
    out.push(Primitive::Sdd { alpha: c(x0 / SQRT_2, 0.0), detuning: 0.0 });
    out.extend(ry_sequence(FRAC_PI_2));
    out
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct InitialStatePlan {
    pub x0: f64,
}

// ---------------------------------------------------------------------------
// Programs.

#[derive(Clone, Debug, PartialEq)]
pub struct ProgramMeta {
    pub k: usize,
    pub dt: f64,
    pub hash: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GateProgram {
    pub primitives: Vec<Primitive>,
    /// Index of the first primitive of each Trotter step.
    pub step_starts: Vec<usize>,
    pub meta: ProgramMeta,
}

impl GateProgram {
    pub fn sdd_count(&self) -> usize {
        self.primitives.iter().filter(|p| p.is_sdd()).count()
    }

    /// SDDs inside the Trotter steps.
    pub fn evolution_sdd_count(&self) -> usize {
        match self.step_starts.first() {
            Some(&s) => self.primitives[s..].iter().filter(|p| p.is_sdd()).count(),
            None => 0,
        }
    }

    /// Step index owning primitive `i`, if any.
    pub fn step_of(&self, i: usize) -> Option<usize> {
        match self.step_starts.partition_point(|&s| s <= i) {
            0 => None,
            k => Some(k - 1),
        }
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        writeln!(out, "#K {}", self.meta.k).unwrap();
        writeln!(out, "#dt_s {}", num(self.meta.dt)).unwrap();
        writeln!(out, "#hash {}", self.meta.hash).unwrap();
        let mut next = 0;
        for (i, p) in self.primitives.iter().enumerate() {
            while next < self.step_starts.len() && self.step_starts[next] == i {
                writeln!(out, "#step {next}").unwrap();
                next += 1;
            }
            p.write_text(&mut out);
            out.push('\n');
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut primitives = Vec::new();
        let mut step_starts = Vec::new();
        let (mut k, mut dt, mut hash) = (None, None, None);
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let words: Vec<&str> = raw.split_whitespace().collect();
            if words.is_empty() {
                continue;
            }
            let err = |msg: &str| Error::Parse { line, msg: msg.to_string() };
            if let Some(key) = words[0].strip_prefix('#') {
                let val = words.get(1).copied().unwrap_or("");
                match key {
                    "K" => k = Some(val.parse::<usize>().map_err(|e| err(&e.to_string()))?),
                    "dt_s" => dt = Some(val.parse::<f64>().map_err(|e| err(&e.to_string()))?),
                    "hash" => hash = Some(val.to_string()),
                    "step" => {
                        let idx = val.parse::<usize>().map_err(|e| err(&e.to_string()))?;
                        if idx != step_starts.len() {
                            return Err(err("step markers out of order"));
                        }
                        step_starts.push(primitives.len());
                    }
                    _ => {}
                }
                continue;
            }
            primitives.push(Primitive::parse_text(&words, line)?);
        }
        let missing = |h: &str| Error::Parse { line: 0, msg: format!("missing #{h} header") };
        let meta = ProgramMeta {
            k: k.ok_or_else(|| missing("K"))?,
            dt: dt.ok_or_else(|| missing("dt_s"))?,
            hash: hash.ok_or_else(|| missing("hash"))?,
        };
        if meta.k != step_starts.len() {
            return Err(Error::Parse {
                line: 0,
                msg: format!("#K {} but {} step markers", meta.k, step_starts.len()),
            });
        }
        Ok(Self { primitives, step_starts, meta })
    }
}

/// Initialization, post-selection, then `k` Trotter steps of one trigonometric
/// gate per Fourier term, then a final post-selection.
pub fn compile_evolution(p: &FourierPotential, dt: f64, k: usize, init: InitialStatePlan) -> GateProgram {
    let mut primitives = vec![Primitive::Prep { state: Basis::Down }];
    primitives.extend(initialization_sequence(init.x0));
    primitives.push(Primitive::Measure { keep: Basis::Down });
    let mut step_starts = Vec::with_capacity(k);
    for step in 0..k {
        step_starts.push(primitives.len());
        for term in &p.terms {
            let g = trig_gate_params(*term, step, dt, p.lambda, p.delta);
            primitives
                .extend(build_trig_gate(g.sdd_alpha(), g.theta, g.phi).into_iter().map(|q| q.with_detuning(-p.delta)));
        }
    }
    if k > 0 {
        primitives.push(Primitive::Measure { keep: Basis::Down });
    }
    GateProgram { primitives, step_starts, meta: ProgramMeta { k, dt, hash: p.hash() } }
}

// ---------------------------------------------------------------------------
// Dense composition, used as an oracle and for small checks.

fn qubit_block(q: &Qubit2, space: FockSpace) -> CMat {
    hilbert::embed_qubit(q, space)
}

/// `D(σ_x α) = I⊗(D(α)+D(−α))/2 + σ_x⊗(D(α)−D(−α))/2`.
pub fn sdd_unitary(kernel: &DisplacementKernel, alpha: hilbert::C64) -> CMat {
    let dp = kernel.matrix(alpha);
    let dm = kernel.matrix(-alpha);
    let half = c(0.5, 0.0);
    hilbert::embed_product(&Qubit2::identity(), &((&dp + &dm) * half))
        + hilbert::embed_product(&hilbert::sigma_x(), &((&dp - &dm) * half))
}

/// Product of a unitary primitive sequence, first element acting first.
pub fn compose_unitary(prims: &[Primitive], space: FockSpace) -> Result<CMat> {
    let kernel = DisplacementKernel::new(space);
    let mut u = CMat::identity(space.hybrid_dim(), space.hybrid_dim());
    for p in prims {
        let step = match *p {
            Primitive::Sdd { alpha, .. } => sdd_unitary(&kernel, alpha),
            Primitive::SqrX { angle } => qubit_block(&hilbert::rx(angle), space),
            Primitive::SqrZ { angle } => qubit_block(&hilbert::rz(angle), space),
            Primitive::Prep { .. } | Primitive::Measure { .. } => {
                return Err(Error::InvalidInput("non-unitary primitive in composition".into()))
            }
        };
        u = hilbert::mul(&step, &u);
    }
    Ok(u)
}

// ---------------------------------------------------------------------------
// Schedules.

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HardwareProfile {
    /// Sideband Rabi frequency Ω (rad/s).
    pub omega: f64,
    /// Carrier Rabi frequency Ω₀ (rad/s).
    pub omega0: f64,
    /// Motional dephasing rate γ_φ (1/s).
    pub gamma_phi: f64,
}

impl HardwareProfile {
    pub fn new(omega: f64, omega0: f64, gamma_phi: f64) -> Result<Self> {
        if !(omega > 0.0 && omega0 > 0.0 && gamma_phi > 0.0) {
            return Err(Error::InvalidInput("hardware rates must be positive".into()));
        }
        Ok(Self { omega, omega0, gamma_phi })
    }

    /// Ω = π/150 µs, Ω₀ = π/35 µs, γ_φ = 18 s⁻¹.
    pub fn trapped_ion() -> Self {
        Self { omega: std::f64::consts::PI / 150e-6, omega0: std::f64::consts::PI / 35e-6, gamma_phi: 18.0 }
    }

    pub fn sdd_duration(&self, alpha: hilbert::C64) -> f64 {
        2.0 * alpha.norm() / self.omega
    }

    pub fn sqrx_duration(&self, angle: f64) -> f64 {
        angle.abs() / self.omega0
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScheduleEntry {
    pub primitive: Primitive,
    pub start: f64,
    pub duration: f64,
    /// Qubit (spin) phase: accumulated SQR_Z frame.
    pub phase_s: f64,
    /// Motional phase. Constant across the evolution when the detuning
    /// supplies the per-step phase advance.
    pub phase_m: f64,
    /// Time at which the programmed SDD phase holds exactly; the laser phase
    /// sweeps at `−δ_L` away from it.
    pub phase_ref: f64,
}

impl ScheduleEntry {
    /// Red/blue sideband phases `(φ_s − φ_m, φ_s + φ_m)`.
    pub fn sideband_phases(&self) -> (f64, f64) {
        (self.phase_s - self.phase_m, self.phase_s + self.phase_m)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PulseSchedule {
    pub entries: Vec<ScheduleEntry>,
    pub total: f64,
    pub meta: ProgramMeta,
    pub step_starts: Vec<usize>,
}

impl PulseSchedule {
    /// Duration of the Trotter steps (from the first step marker to the end).
    pub fn evolution_duration(&self) -> f64 {
        match self.step_starts.first() {
            Some(&s) if s < self.entries.len() => self.total - self.entries[s].start,
            _ => 0.0,
        }
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        writeln!(out, "#K {}", self.meta.k).unwrap();
        writeln!(out, "#dt_s {}", num(self.meta.dt)).unwrap();
        writeln!(out, "#hash {}", self.meta.hash).unwrap();
        writeln!(out, "#total_s {}", num(self.total)).unwrap();
        writeln!(out, "#columns start_s duration_s phase_s phase_m phase_ref_s primitive").unwrap();
        let mut next = 0;
        for (i, e) in self.entries.iter().enumerate() {
            while next < self.step_starts.len() && self.step_starts[next] == i {
                writeln!(out, "#step {next}").unwrap();
                next += 1;
            }
            write!(
                out,
                "{} {} {} {} {} ",
                num(e.start),
                num(e.duration),
                num(e.phase_s),
                num(e.phase_m),
                num(e.phase_ref)
            )
            .unwrap();
            e.primitive.write_text(&mut out);
            out.push('\n');
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut entries = Vec::new();
        let mut step_starts = Vec::new();
        let (mut k, mut dt, mut hash, mut total) = (None, None, None, None);
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let words: Vec<&str> = raw.split_whitespace().collect();
            if words.is_empty() {
                continue;
            }
            let err = |msg: &str| Error::Parse { line, msg: msg.to_string() };
            let f = |s: &str| s.parse::<f64>().map_err(|e| err(&e.to_string()));
            if let Some(key) = words[0].strip_prefix('#') {
                let val = words.get(1).copied().unwrap_or("");
                match key {
                    "K" => k = Some(val.parse::<usize>().map_err(|e| err(&e.to_string()))?),
                    "dt_s" => dt = Some(f(val)?),
                    "hash" => hash = Some(val.to_string()),
                    "total_s" => total = Some(f(val)?),
                    "step" => step_starts.push(entries.len()),
                    _ => {}
                }
                continue;
            }
            if words.len() < 6 {
                return Err(err("schedule line too short"));
            }
            entries.push(ScheduleEntry {
                start: f(words[0])?,
                duration: f(words[1])?,
                phase_s: f(words[2])?,
                phase_m: f(words[3])?,
                phase_ref: f(words[4])?,
                primitive: Primitive::parse_text(&words[5..], line)?,
            });
        }
        let missing = |h: &str| Error::Parse { line: 0, msg: format!("missing #{h} header") };
        Ok(Self {
            entries,
            total: total.ok_or_else(|| missing("total_s"))?,
            meta: ProgramMeta {
                k: k.ok_or_else(|| missing("K"))?,
                dt: dt.ok_or_else(|| missing("dt_s"))?,
                hash: hash.ok_or_else(|| missing("hash"))?,
            },
            step_starts,
        })
    }
}

/// Assigns durations and laser phases. Evolution SDDs carry `δ_L = −δ`;
/// initialization SDDs carry none. SQR_Z entries take no time and shift the
/// qubit frame of every later pulse.
pub fn lower_to_schedule(program: &GateProgram, hw: &HardwareProfile, delta: f64) -> Result<PulseSchedule> {
    if !(hw.omega > 0.0 && hw.omega0 > 0.0 && hw.gamma_phi >= 0.0) {
        return Err(Error::InvalidInput("hardware rates must be positive".into()));
    }
    let mut entries = Vec::with_capacity(program.primitives.len());
    let (mut t, mut frame, mut step_ref) = (0.0f64, 0.0f64, None::<f64>);
    for (i, &prim) in program.primitives.iter().enumerate() {
        if program.step_starts.contains(&i) {
            step_ref = Some(t);
        }
        let in_evolution = step_ref.is_some();
        let (primitive, duration, phase_m, phase_ref) = match prim {
            Primitive::Sdd { alpha, .. } => {
                let (dl, tref) = if in_evolution { (-delta, step_ref.unwrap()) } else { (0.0, t) };
                let phase_m = (alpha.arg() + dl * tref).rem_euclid(TAU);
                (Primitive::Sdd { alpha, detuning: dl }, hw.sdd_duration(alpha), phase_m, tref)
            }
            Primitive::SqrX { angle } => (prim, hw.sqrx_duration(angle), 0.0, t),
            Primitive::SqrZ { .. } | Primitive::Prep { .. } | Primitive::Measure { .. } => (prim, 0.0, 0.0, t),
        };
        entries.push(ScheduleEntry { primitive, start: t, duration, phase_s: frame, phase_m, phase_ref });
        if let Primitive::SqrZ { angle } = prim {
            frame = (frame + angle).rem_euclid(TAU);
        }
        t += duration;
    }
    Ok(PulseSchedule { entries, total: t, meta: program.meta.clone(), step_starts: program.step_starts.clone() })
}
