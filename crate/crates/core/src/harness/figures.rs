//! Figure reproductions: the symmetric double-well run, the asymmetric panel
//! set and the error budget. Every routine writes deterministic artifacts.

use std::f64::consts::{FRAC_1_SQRT_2, PI};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::{compile, run_error_budget, run_exact, run_program, BudgetRun, ExperimentConfig};
use crate::compiler::lower_to_schedule;
use crate::engine::EvolutionResult;
use crate::error::{Error, Result};
use crate::hilbert::{self, c, FockSpace};
use crate::potential::{self, WellGeometry};
use crate::tomography::{self, MarginalSource, ScanKind};

/// Trap and species constants recorded in `meta.txt`. Nothing downstream
/// reads them; the simulation works in dimensionless quadratures.
pub const PROVENANCE: &[(&str, &str)] = &[
    ("species", "171Yb+"),
    ("trap_frequency", "2pi*1.33 MHz"),
    ("qubit_frequency", "2pi*12.6 GHz"),
    ("raman_wavelength", "355 nm"),
    ("lamb_dicke_eta", "0.08"),
    ("ground_state_extent", "4.7 nm"),
    ("initial_nbar", "0.04"),
    ("ion_mass", "171Yb+ atomic mass"),
];

/// Times at which position marginals are written.
const MARGINAL_TIMES_MS: [f64; 3] = [0.0, 2.0, 4.0];

/// Zero crossings of a sampled trace, linearly interpolated.
pub fn sign_changes(times: &[f64], x: &[f64]) -> Vec<f64> {
    let mut out = Vec::new();
    for i in 1..times.len().min(x.len()) {
        let (a, b) = (x[i - 1], x[i]);
        if a == 0.0 {
            continue;
        }
        if a * b <= 0.0 && b != a {
            let f = a / (a - b);
            out.push(times[i - 1] + f * (times[i] - times[i - 1]));
        }
    }
    out
}

/// Time of the first opposite-side extremum, measured as the midpoint of the
/// first two zero crossings.
pub fn turning_time(times: &[f64], x: &[f64]) -> Option<f64> {
    let z = sign_changes(times, x);
    (z.len() >= 2).then(|| 0.5 * (z[0] + z[1]))
}

fn half_amplitude(x: &[f64]) -> f64 {
    let max = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = x.iter().copied().fold(f64::INFINITY, f64::min);
    0.5 * (max - min)
}

fn trace_csv(times: &[f64], columns: &[(&str, &[f64])]) -> String {
    let mut out = String::from("t_s");
    for (name, _) in columns {
        out.push(',');
        out.push_str(name);
    }
    out.push('\n');
    for (i, t) in times.iter().enumerate() {
        let _ = write!(out, "{t:.16e}");
        for (_, col) in columns {
            let _ = write!(out, ",{:.16e}", col[i]);
        }
        out.push('\n');
    }
    out
}

/// `meta.txt` body: provenance, the config echo and `key=value` results.
pub fn meta_text(cfg: &ExperimentConfig, results: &[(String, String)]) -> String {
    let mut out = String::from("# provenance (recorded only)\n");
    for (k, v) in PROVENANCE {
        let _ = writeln!(out, "{k}={v}");
    }
    out.push_str("# config\n");
    out.push_str(&cfg.to_text());
    out.push_str("# results\n");
    for (k, v) in results {
        let _ = writeln!(out, "{k}={v}");
    }
    out
}

fn write(dir: &Path, name: &str, text: &str) -> Result<()> {
    fs::write(dir.join(name), text)?;
    Ok(())
}

/// Writes `program.txt` and `schedule.txt`.
fn write_program(cfg: &ExperimentConfig, dir: &Path) -> Result<()> {
    let program = compile(cfg);
    let schedule = lower_to_schedule(&program, &cfg.hardware, cfg.potential.delta)?;
    write(dir, "program.txt", &program.to_text())?;
    write(dir, "schedule.txt", &schedule.to_text())
}

fn geometry_lines(g: &WellGeometry, delta: f64) -> Vec<(String, String)> {
    vec![
        ("x_min_left".into(), format!("{:.6}", g.x_min_1)),
        ("x_min_right".into(), format!("{:.6}", g.x_min_2)),
        ("x_max".into(), format!("{:.6}", g.x_max)),
        ("barrier_left_over_delta".into(), format!("{:.6}", g.barrier_left / delta)),
        ("barrier_right_over_delta".into(), format!("{:.6}", g.barrier_right / delta)),
        ("xi".into(), format!("{:.6}", g.xi)),
    ]
}

/// Index of the checkpoint closest to `t`.
fn nearest(times: &[f64], t: f64) -> usize {
    let mut best = 0;
    for (i, s) in times.iter().enumerate() {
        if (s - t).abs() < (times[best] - t).abs() {
            best = i;
        }
    }
    best
}

#[derive(Clone, Debug)]
pub struct SymmetricReport {
    pub geometry: WellGeometry,
    /// Population of the coherent input in the two lowest eigenstates.
    pub two_level_occupancy: f64,
    pub times: Vec<f64>,
    pub x_exact: Vec<f64>,
    pub x_model: Vec<f64>,
    pub turning_time_exact: Option<f64>,
    pub turning_time_model: Option<f64>,
    pub wigner_normalization: f64,
    /// `(time, ∫P dx)` for every written marginal.
    pub marginal_integrals: Vec<(f64, f64)>,
}

/// Symmetric double well: program, schedule, model and exact `⟨x⟩`, the
/// initial Wigner function and position marginals, under `out/fig3`.
pub fn reproduce_symmetric(cfg: &ExperimentConfig, out: &Path) -> Result<SymmetricReport> {
    let dir = out.join("fig3");
    fs::create_dir_all(&dir)?;
    write_program(cfg, &dir)?;
    let geometry = potential::analyze_double_well(&cfg.potential)?;
    let space = FockSpace::new(cfg.cutoff)?;
    let coherent = hilbert::coherent_state(space, c(cfg.x0 * FRAC_1_SQRT_2, 0.0))?;
    let two_level_occupancy = potential::spectrum(&cfg.potential, space)?.occupancy(&coherent, 2);

    let (exact, model) = crate::par::join(|| run_exact(cfg), || run_program(cfg, &compile(cfg)));
    let (exact, model) = (exact?, model?.to_lab());
    let x_exact = exact.x_expect_lab();
    let x_model = model.x_expect();
    write(&dir, "xexpect.csv", &model.to_csv())?;
    write(&dir, "xexpect_exact.csv", &exact.to_lab().to_csv())?;

    let plan = &cfg.scan;
    let scan = tomography::sample_scan(
        &model.states[0],
        &tomography::half_plane_grid(plan.re_max, plan.n_re, plan.im_max, plan.n_im),
        plan.grid_shots,
        cfg.seed,
        ScanKind::Grid,
    )?;
    write(&dir, "scan.csv", &scan.to_csv())?;
    let wigner = tomography::wigner_from_scan(&tomography::complete_hermitian(&scan), plan.pad_radius)?;
    write(&dir, "wigner.csv", &wigner.to_csv())?;

    let xs: Vec<f64> = (0..=200).map(|i| -5.0 + 0.05 * i as f64).collect();
    let line = tomography::line_grid(plan.line_v_max, plan.line_n);
    let mut marginal_integrals = Vec::new();
    for (k, &ms) in MARGINAL_TIMES_MS.iter().enumerate() {
        let i = nearest(&model.times, ms * 1e-3);
        let scan = tomography::sample_scan(
            &model.states[i],
            &line,
            plan.line_shots,
            cfg.seed.wrapping_add(1 + k as u64),
            ScanKind::Line,
        )?;
        let m = tomography::prob_x(MarginalSource::Line { scan: &scan, x: &xs })?;
        marginal_integrals.push((model.times[i], m.integral()));
        write(&dir, &format!("marginal_{}ms.csv", ms as u32), &m.to_csv())?;
    }

    let turning_time_exact = turning_time(&exact.times, &x_exact);
    let turning_time_model = turning_time(&model.times, &x_model);
    let fmt_opt = |t: Option<f64>| t.map_or("none".to_string(), |t| format!("{:.6e}", t));
    let mut results = geometry_lines(&geometry, cfg.potential.delta);
    results.push(("two_level_occupancy".into(), format!("{two_level_occupancy:.6}")));
    results.push(("turning_time_exact_s".into(), fmt_opt(turning_time_exact)));
    results.push(("turning_time_model_s".into(), fmt_opt(turning_time_model)));
    results.push(("wigner_normalization".into(), format!("{:.6}", wigner.normalization())));
    results.push(("wigner_max_imag".into(), format!("{:.3e}", wigner.max_imag)));
    write(&dir, "meta.txt", &meta_text(cfg, &results))?;

    Ok(SymmetricReport {
        geometry,
        two_level_occupancy,
        times: exact.times.clone(),
        x_exact,
        x_model,
        turning_time_exact,
        turning_time_model,
        wigner_normalization: wigner.normalization(),
        marginal_integrals,
    })
}

#[derive(Clone, Debug)]
pub struct AsymmetricPanel {
    pub name: String,
    pub phi: f64,
    pub x0: f64,
    pub xi: f64,
    pub times: Vec<f64>,
    pub x_exact: Vec<f64>,
    pub x_model: Vec<f64>,
    /// Single-seed readout estimate of the model trace.
    pub x_readout: Vec<f64>,
    /// Half the peak-to-peak excursion of the exact trace.
    pub amplitude: f64,
}

#[derive(Clone, Debug)]
pub struct AsymmetricReport {
    pub panels: Vec<AsymmetricPanel>,
}

impl AsymmetricReport {
    pub fn panel(&self, name: &str) -> Option<&AsymmetricPanel> {
        self.panels.iter().find(|p| p.name == name)
    }
}

#[derive(Clone, Copy)]
enum Start {
    Configured,
    LeftMinimum,
    RightMinimum,
    Barrier,
}

fn with_phase(cfg: &ExperimentConfig, phi: f64) -> Result<ExperimentConfig> {
    let mut out = cfg.clone();
    let term = out
        .potential
        .terms
        .first_mut()
        .ok_or_else(|| Error::Config("asymmetric panels need at least one Fourier term".into()))?;
    term.phi = phi.rem_euclid(2.0 * PI);
    Ok(out)
}

fn run_panel(cfg: &ExperimentConfig, name: &str, phi: f64, start: Start, out: &Path) -> Result<AsymmetricPanel> {
    let mut cfg = with_phase(cfg, phi)?;
    let geometry = potential::analyze_double_well(&cfg.potential)?;
    cfg.x0 = match start {
        Start::Configured => cfg.x0,
        Start::LeftMinimum => geometry.x_min_1,
        Start::RightMinimum => geometry.x_min_2,
        Start::Barrier => geometry.x_max,
    };
    cfg.name = name.to_string();
    let dir = out.join(name);
    fs::create_dir_all(&dir)?;
    write_program(&cfg, &dir)?;

    let (exact, model) = crate::par::join(|| run_exact(&cfg), || run_program(&cfg, &compile(&cfg)));
    let (exact, model): (EvolutionResult, EvolutionResult) = (exact?, model?.to_lab());
    let x_exact = exact.x_expect_lab();
    let x_model = model.x_expect();
    let x_readout = super::estimator_trace(&model.states, cfg.estimator, cfg.seed, 1)?;

    // Readout trace in the standard trace layout; theory curves alongside.
    let n_bar = model.n_bar();
    let mut csv = String::from("t_s,x_expect,n_bar,acceptance\n");
    for i in 0..model.times.len() {
        let _ = writeln!(
            csv,
            "{:.16e},{:.16e},{:.16e},{:.16e}",
            model.times[i], x_readout[i], n_bar[i], model.acceptance[i]
        );
    }
    write(&dir, "xexpect.csv", &csv)?;
    write(&dir, "theory.csv", &trace_csv(&exact.times, &[("exact", &x_exact), ("model", &x_model)]))?;

    let amplitude = half_amplitude(&x_exact);
    let mut results = geometry_lines(&geometry, cfg.potential.delta);
    results.push(("x0".into(), format!("{:.6}", cfg.x0)));
    results.push(("amplitude_exact".into(), format!("{amplitude:.6}")));
    results.push(("amplitude_model".into(), format!("{:.6}", half_amplitude(&x_model))));
    write(&dir, "meta.txt", &meta_text(&cfg, &results))?;

    Ok(AsymmetricPanel {
        name: name.to_string(),
        phi,
        x0: cfg.x0,
        xi: geometry.xi,
        times: exact.times.clone(),
        x_exact,
        x_model,
        x_readout,
        amplitude,
    })
}

/// Asymmetric wells: the symmetric reference, three starting points in the
/// `φ = −π/20` well and the deeper `φ = −π/10` well, under `out/fig4/<panel>`.
pub fn reproduce_asymmetric(cfg: &ExperimentConfig, out: &Path) -> Result<AsymmetricReport> {
    let dir = out.join("fig4");
    let specs: [(&str, f64, Start); 5] = [
        ("sym-left", 0.0, Start::Configured),
        ("asym20-left", -PI / 20.0, Start::LeftMinimum),
        ("asym20-right", -PI / 20.0, Start::RightMinimum),
        ("asym20-center", -PI / 20.0, Start::Barrier),
        ("asym10-left", -PI / 10.0, Start::LeftMinimum),
    ];
    let panels = crate::par::map_slice(&specs, |(name, phi, start)| run_panel(cfg, name, *phi, *start, &dir));
    Ok(AsymmetricReport { panels: panels.into_iter().collect::<Result<_>>()? })
}

/// Error budget table and the traces behind it, under `out/fig5`.
pub fn reproduce_budget(cfg: &ExperimentConfig, out: &Path) -> Result<BudgetRun> {
    let dir = out.join("fig5");
    fs::create_dir_all(&dir)?;
    write_program(cfg, &dir)?;
    let run = run_error_budget(cfg)?;
    write(&dir, "budget.txt", &run.budget.to_text())?;
    let cols: Vec<(&str, &[f64])> = run.traces.iter().map(|(n, x)| (n.as_str(), x.as_slice())).collect();
    write(&dir, "traces.csv", &trace_csv(&run.times, &cols))?;
    let results: Vec<(String, String)> = run
        .budget
        .layers
        .iter()
        .flat_map(|l| {
            [
                (format!("{}_srmse_pct", l.name), format!("{:.4}", l.incremental)),
                (format!("{}_cumulative_srmse_pct", l.name), format!("{:.4}", l.cumulative)),
            ]
        })
        .collect();
    write(&dir, "meta.txt", &meta_text(cfg, &results))?;
    Ok(run)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn turning_time_is_midpoint_of_first_two_crossings() {
        let t: Vec<f64> = (0..=100).map(|i| i as f64 * 0.01).collect();
        let x: Vec<f64> = t.iter().map(|&t| -(2.0 * PI * t).cos()).collect();
        let tt = turning_time(&t, &x).unwrap();
        assert!((tt - 0.5).abs() < 1e-3, "{tt}");
        assert!(turning_time(&t[..10], &x[..10]).is_none());
    }

    #[test]
    fn trace_csv_layout() {
        let s = trace_csv(&[0.0, 1.0], &[("a", &[1.0, 2.0]), ("b", &[3.0, 4.0])]);
        assert_eq!(s.lines().next(), Some("t_s,a,b"));
        assert_eq!(s.lines().count(), 3);
    }
}
