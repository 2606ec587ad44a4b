//! Experiment configs, model runs, SRMSE error budgets and figure
//! reproduction.

mod config;
mod figures;

pub use config::{Estimator, ExperimentConfig, ScanPlan};
pub use figures::{
    meta_text, reproduce_asymmetric, reproduce_budget, reproduce_symmetric, turning_time, AsymmetricPanel, AsymmetricReport,
    SymmetricReport, PROVENANCE,
};

use std::f64::consts::FRAC_1_SQRT_2;

use crate::compiler::{compile_evolution, GateProgram, InitialStatePlan};
use crate::engine::{self, EvolutionResult, ProgramTiming, SddTiming};
use crate::error::{Error, Result};
use crate::hilbert::{self, c, FockSpace, HybridState};
use crate::tomography::{self, ScanKind, SlopeModel};

/// `100·√(Σ(a−b)²/Σa²)`.
pub fn srmse(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() || a.is_empty() {
        return Err(Error::DimensionMismatch { expected: a.len(), got: b.len() });
    }
    let norm: f64 = a.iter().map(|x| x * x).sum();
    if !(norm > 0.0) {
        return Err(Error::InvalidInput("reference series has zero norm".into()));
    }
    let err: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum();
    Ok(100.0 * (err / norm).sqrt())
}

/// `|↓⟩ ⊗ D(x₀/√2)ρ_th D†` (pure coherent state when `n̄ = 0`).
pub fn initial_state(cfg: &ExperimentConfig, space: FockSpace) -> Result<HybridState> {
    let gamma = c(cfg.x0 * FRAC_1_SQRT_2, 0.0);
    if cfg.thermal_nbar == 0.0 {
        return HybridState::down(space, &hilbert::coherent_state(space, gamma)?);
    }
    let d = hilbert::displacement(space, gamma)?;
    let rho = hilbert::sandwich(&d.matrix, &hilbert::thermal_density(space, cfg.thermal_nbar)?);
    HybridState::down_density(space, &rho)
}

/// Program input: `|↓⟩⟨↓| ⊗ ρ_th` (the ground state when `n̄ = 0`).
pub fn program_input(cfg: &ExperimentConfig, space: FockSpace) -> Result<HybridState> {
    if cfg.thermal_nbar == 0.0 {
        return Ok(HybridState::ground(space));
    }
    HybridState::down_density(space, &hilbert::thermal_density(space, cfg.thermal_nbar)?)
}

pub fn compile(cfg: &ExperimentConfig) -> GateProgram {
    compile_evolution(&cfg.potential, cfg.dt, cfg.steps, InitialStatePlan { x0: cfg.x0 })
}

pub fn program_timing(cfg: &ExperimentConfig) -> ProgramTiming {
    let sdd = if cfg.noise.detuned_sdd { SddTiming::Detuned } else { SddTiming::Programmed };
    let mut t = ProgramTiming::new(cfg.hardware, cfg.potential.delta, sdd);
    t.max_substep = cfg.max_substep;
    t
}

/// Ideal evolution under `H_sim`.
pub fn run_exact(cfg: &ExperimentConfig) -> Result<EvolutionResult> {
    let space = FockSpace::new(cfg.cutoff)?;
    engine::exact_interaction_evolve(&cfg.potential, &initial_state(cfg, space)?, &cfg.times())
}

/// `H_sim` with motional dephasing (potential-mode Lindblad).
pub fn run_dephasing(cfg: &ExperimentConfig) -> Result<EvolutionResult> {
    let space = FockSpace::new(cfg.cutoff)?;
    let rho0 = initial_state(cfg, space)?.into_density();
    engine::lindblad_potential(&cfg.potential, &rho0, cfg.noise.effective_gamma(), &cfg.times(), cfg.max_substep)
}

/// Largest cutoff `run_program` escalates to before giving up.
pub const MAX_REPLAY_CUTOFF: usize = 200;

/// The compiled program, with dephasing during every pulse when enabled.
/// Pure-state replay is used when there is nothing to dephase. On a tail
/// overflow the run is repeated at the cutoff the error asks for, up to
/// `MAX_REPLAY_CUTOFF`.
pub fn run_program(cfg: &ExperimentConfig, program: &GateProgram) -> Result<EvolutionResult> {
    let gamma = cfg.noise.effective_gamma();
    let timing = program_timing(cfg);
    let pure = gamma == 0.0 && cfg.thermal_nbar == 0.0;
    let mut cutoff = if pure { cfg.cutoff } else { cfg.lindblad_cutoff };
    loop {
        let space = FockSpace::new(cutoff)?;
        let input = program_input(cfg, space)?;
        let run = if pure {
            engine::gate_evolve_timed(program, &input, &cfg.checkpoints(), &timing)
        } else {
            engine::lindblad_program(program, &input.into_density(), gamma, &cfg.checkpoints(), &timing)
        };
        match run {
            Err(Error::TruncationOverflow { required, .. }) if required <= MAX_REPLAY_CUTOFF && required > cutoff => {
                log::info!("replay tail overflow at cutoff {cutoff}; retrying at {required}");
                cutoff = required;
            }
            other => return other,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BudgetLayer {
    pub name: String,
    pub incremental: f64,
    pub cumulative: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ErrorBudget {
    pub layers: Vec<BudgetLayer>,
}

impl ErrorBudget {
    pub fn layer(&self, name: &str) -> Option<&BudgetLayer> {
        self.layers.iter().find(|l| l.name == name)
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("{:<14}{:>12}{:>24}\n", "source", "srmse_pct", "cumulative_srmse_pct");
        for l in &self.layers {
            out.push_str(&format!("{:<14}{:>12.2}{:>24.2}\n", l.name, l.incremental, l.cumulative));
        }
        out
    }
}

/// Lab-frame `⟨x⟩(t)` traces of every model in a budget run.
#[derive(Clone, Debug)]
pub struct BudgetRun {
    pub budget: ErrorBudget,
    pub times: Vec<f64>,
    /// `(layer name, trace)`, starting with `exact`.
    pub traces: Vec<(String, Vec<f64>)>,
}

/// Seed-averaged readout estimates of `⟨x⟩` at every checkpoint state.
/// Seed `s` draws from generator `seed + s`, stream = checkpoint index.
pub fn estimator_trace(states: &[HybridState], estimator: Estimator, seed: u64, seeds: u32) -> Result<Vec<f64>> {
    let points = crate::par::map_range(states.len(), |i| -> Result<f64> {
        let st = &states[i];
        let mut acc = 0.0;
        match estimator {
            Estimator::Pfd { h, shots } => {
                let exact = tomography::chi_point(st, tomography::pfd_probe(h))?.im;
                for s in 0..seeds as u64 {
                    let mut rng = tomography::seeded_rng(seed.wrapping_add(s), i as u64);
                    acc += tomography::pfd_from_im_chi(tomography::sample_expectation(exact, shots, &mut rng), h);
                }
            }
            Estimator::Slope { shots } => {
                let betas = [c(0.0, 0.1), c(0.0, 0.2), c(0.0, 0.3)];
                let exact: Vec<f64> = betas.iter().map(|b| tomography::chi_point(st, *b).map(|z| z.im)).collect::<Result<_>>()?;
                for s in 0..seeds as u64 {
                    let mut rng = tomography::seeded_rng(seed.wrapping_add(s), i as u64);
                    let points = betas
                        .iter()
                        .zip(&exact)
                        .map(|(b, v)| tomography::ScanPoint {
                            beta: *b,
                            re: 0.0,
                            im: tomography::sample_expectation(*v, shots, &mut rng),
                            shots_re: shots,
                            shots_im: shots,
                        })
                        .collect();
                    let scan = tomography::CharacteristicScan { points, background: None, kind: ScanKind::Line };
                    acc += tomography::xexpect_slope(&scan, SlopeModel::OddCubic)?.x_expect;
                }
            }
        }
        Ok(acc / seeds as f64)
    });
    points.into_iter().collect()
}

fn estimator_name(e: Estimator) -> String {
    match e {
        Estimator::Pfd { .. } => "2pfd".into(),
        Estimator::Slope { .. } => "slope".into(),
    }
}

/// Layers exact → dephasing → dephasing+Trotter → readout estimator.
/// Incremental SRMSE compares each layer with the previous one, cumulative
/// with the exact trace; both call `srmse(layer, reference)`.
pub fn run_error_budget(cfg: &ExperimentConfig) -> Result<BudgetRun> {
    let program = compile(cfg);
    let exact = run_exact(cfg)?;
    let times = exact.times.clone();
    let x_exact = exact.x_expect_lab();
    let (dephasing, trotter) = crate::par::join(
        || cfg.noise.dephasing.then(|| run_dephasing(cfg)).transpose(),
        || cfg.noise.trotter.then(|| run_program(cfg, &program)).transpose(),
    );
    let (dephasing, trotter) = (dephasing?, trotter?);

    let mut traces = vec![("exact".to_string(), x_exact.clone())];
    let mut layers = Vec::new();
    let mut last_states = exact.to_lab().states;
    let mut push = |name: String, x: Vec<f64>, traces: &mut Vec<(String, Vec<f64>)>| -> Result<()> {
        let prev = &traces.last().expect("exact trace present").1;
        layers.push(BudgetLayer { incremental: srmse(&x, prev)?, cumulative: srmse(&x, &x_exact)?, name: name.clone() });
        traces.push((name, x));
        Ok(())
    };
    if let Some(r) = dephasing {
        let lab = r.to_lab();
        push("dephasing".into(), lab.x_expect(), &mut traces)?;
        last_states = lab.states;
    }
    if let Some(r) = trotter {
        let lab = r.to_lab();
        push("trotter".into(), lab.x_expect(), &mut traces)?;
        last_states = lab.states;
    }
    let est = estimator_trace(&last_states, cfg.estimator, cfg.seed, cfg.pfd_seeds)?;
    push(estimator_name(cfg.estimator), est, &mut traces)?;
    Ok(BudgetRun { budget: ErrorBudget { layers }, times, traces })
}
