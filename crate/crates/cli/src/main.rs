use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use tgifs::compiler::{lower_to_schedule, GateProgram};
use tgifs::engine::{self, EvolutionResult};
use tgifs::harness::{self, ExperimentConfig};
use tgifs::hilbert::{FockSpace, HybridState};
use tgifs::tomography::{self, MarginalSource, ScanKind};

#[derive(Parser)]
#[command(name = "tgifs", version, about = "Trotterized gate-level simulator for a trapped-ion double well")]
struct Cli {
    /// Overrides the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Overrides the Fock cutoff of pure-state runs.
    #[arg(long, global = true)]
    cutoff: Option<usize>,
    /// Output root; artifacts go to `<out>/<name>/`.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compile a config into program.txt and schedule.txt.
    Compile { config: PathBuf },
    /// Evolve a config (or replay a program.txt) and write xexpect.csv.
    Evolve {
        input: PathBuf,
        #[arg(long, value_enum, default_value_t = Model::Trotter)]
        model: Model,
        /// Config supplying δ and the cutoff when `input` is a program.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Characteristic-function scan, Wigner function and position marginal.
    Tomo {
        config: PathBuf,
        /// Checkpoint time; the nearest sampled step is used.
        #[arg(long, default_value_t = 0.0)]
        at_ms: f64,
    },
    /// SRMSE error budget.
    Budget { config: Option<PathBuf> },
    /// Regenerate a figure's artifacts.
    Reproduce {
        #[arg(value_enum)]
        figure: Figure,
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Model {
    /// Ideal evolution under the target Hamiltonian.
    Exact,
    /// Target Hamiltonian with motional dephasing.
    Dephasing,
    /// Literal gate replay, pure state.
    Gate,
    /// Timed program with dephasing during every pulse.
    Trotter,
}

#[derive(Clone, Copy, ValueEnum)]
enum Figure {
    Fig3,
    Fig4,
    Fig5,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.replace('\n', " "));
            ExitCode::from(1)
        }
    }
}

type CliResult<T> = Result<T, String>;

fn load(cli: &Cli, path: Option<&Path>) -> CliResult<ExperimentConfig> {
    let mut cfg = match path {
        Some(p) => ExperimentConfig::load(p).map_err(|e| e.to_string())?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(cutoff) = cli.cutoff {
        cfg.cutoff = cutoff;
    }
    Ok(cfg)
}

fn out_dir(cli: &Cli, name: &str) -> CliResult<PathBuf> {
    let dir = cli.out.join(name);
    fs::create_dir_all(&dir).map_err(|e| format!("cannot create {}: {e}", dir.display()))?;
    Ok(dir)
}

fn write(dir: &Path, name: &str, text: &str) -> CliResult<()> {
    let path = dir.join(name);
    fs::write(&path, text).map_err(|e| format!("cannot write {}: {e}", path.display()))
}

/// Literal pure-state replay. The program carries no frame rate of its own,
/// so the config's δ is attached for the lab-frame readout.
fn gate_replay(cfg: &ExperimentConfig, program: &GateProgram) -> tgifs::error::Result<EvolutionResult> {
    let space = FockSpace::new(cfg.cutoff)?;
    let checkpoints: Vec<usize> = (0..=program.meta.k).step_by(cfg.sample_every).collect();
    let r = engine::gate_evolve(program, &HybridState::ground(space), &checkpoints)?;
    Ok(EvolutionResult { delta: cfg.potential.delta, ..r })
}

fn run(cli: &Cli) -> CliResult<()> {
    let err = |e: tgifs::error::Error| e.to_string();
    match &cli.command {
        Command::Compile { config } => {
            let cfg = load(cli, Some(config))?;
            let dir = out_dir(cli, &cfg.name)?;
            let program = harness::compile(&cfg);
            let schedule = lower_to_schedule(&program, &cfg.hardware, cfg.potential.delta).map_err(err)?;
            write(&dir, "program.txt", &program.to_text())?;
            write(&dir, "schedule.txt", &schedule.to_text())?;
            write(&dir, "meta.txt", &harness::meta_text(&cfg, &[]))?;
            println!("{}: {} SDDs, hash {}", dir.display(), program.sdd_count(), program.meta.hash);
        }
        Command::Evolve { input, model, config } => {
            let text = fs::read_to_string(input).map_err(|e| format!("cannot read {}: {e}", input.display()))?;
            let (cfg, result) = if text.trim_start().starts_with("#K") {
                let cfg = load(cli, config.as_deref())?;
                let program = GateProgram::from_text(&text).map_err(err)?;
                if program.meta.hash != cfg.potential.hash() {
                    log::warn!("program hash differs from the config potential; frames use the config's δ");
                }
                let r = match model {
                    Model::Gate => gate_replay(&cfg, &program).map_err(err)?,
                    Model::Trotter => harness::run_program(&cfg, &program).map_err(err)?,
                    Model::Exact | Model::Dephasing => {
                        return Err("exact and dephasing models need a config, not a program".into())
                    }
                };
                (cfg, r)
            } else {
                let cfg = load(cli, Some(input))?;
                let r = match model {
                    Model::Exact => harness::run_exact(&cfg),
                    Model::Dephasing => harness::run_dephasing(&cfg),
                    Model::Gate => gate_replay(&cfg, &harness::compile(&cfg)),
                    Model::Trotter => harness::run_program(&cfg, &harness::compile(&cfg)),
                }
                .map_err(err)?;
                (cfg, r)
            };
            let dir = out_dir(cli, &cfg.name)?;
            write(&dir, "xexpect.csv", &result.to_lab().to_csv())?;
            write(&dir, "meta.txt", &harness::meta_text(&cfg, &[]))?;
            println!("{}: {} checkpoints", dir.join("xexpect.csv").display(), result.times.len());
        }
        Command::Tomo { config, at_ms } => {
            let cfg = load(cli, Some(config))?;
            let result = harness::run_program(&cfg, &harness::compile(&cfg)).map_err(err)?.to_lab();
            let i = (0..result.times.len())
                .min_by(|&a, &b| (result.times[a] - at_ms * 1e-3).abs().total_cmp(&(result.times[b] - at_ms * 1e-3).abs()))
                .ok_or("no checkpoints")?;
            let state = &result.states[i];
            let plan = &cfg.scan;
            let grid = tomography::half_plane_grid(plan.re_max, plan.n_re, plan.im_max, plan.n_im);
            let scan = tomography::sample_scan(state, &grid, plan.grid_shots, cfg.seed, ScanKind::Grid).map_err(err)?;
            let wigner =
                tomography::wigner_from_scan(&tomography::complete_hermitian(&scan), plan.pad_radius).map_err(err)?;
            let line = tomography::line_grid(plan.line_v_max, plan.line_n);
            let line_scan = tomography::sample_scan(state, &line, plan.line_shots, cfg.seed.wrapping_add(1), ScanKind::Line)
                .map_err(err)?;
            let xs: Vec<f64> = (0..=200).map(|k| -5.0 + 0.05 * k as f64).collect();
            let marginal = tomography::prob_x(MarginalSource::Line { scan: &line_scan, x: &xs }).map_err(err)?;
            let dir = out_dir(cli, &cfg.name)?;
            write(&dir, "scan.csv", &scan.to_csv())?;
            write(&dir, "wigner.csv", &wigner.to_csv())?;
            write(&dir, "marginal.csv", &marginal.to_csv())?;
            let results = vec![
                ("t_s".to_string(), format!("{:e}", result.times[i])),
                ("wigner_normalization".to_string(), format!("{:.6}", wigner.normalization())),
            ];
            write(&dir, "meta.txt", &harness::meta_text(&cfg, &results))?;
            println!("{}: t = {:.3} ms", dir.display(), result.times[i] * 1e3);
        }
        Command::Budget { config } => {
            let cfg = load(cli, config.as_deref())?;
            let run = harness::run_error_budget(&cfg).map_err(err)?;
            let dir = out_dir(cli, &cfg.name)?;
            let text = run.budget.to_text();
            write(&dir, "budget.txt", &text)?;
            write(&dir, "meta.txt", &harness::meta_text(&cfg, &[]))?;
            print!("{text}");
        }
        Command::Reproduce { figure, config } => {
            let cfg = load(cli, config.as_deref())?;
            fs::create_dir_all(&cli.out).map_err(|e| format!("cannot create {}: {e}", cli.out.display()))?;
            match figure {
                Figure::Fig3 => {
                    let r = harness::reproduce_symmetric(&cfg, &cli.out).map_err(err)?;
                    println!("two-level occupancy {:.4}", r.two_level_occupancy);
                    if let Some(t) = r.turning_time_exact {
                        println!("turning time {:.3} ms", t * 1e3);
                    }
                }
                Figure::Fig4 => {
                    let r = harness::reproduce_asymmetric(&cfg, &cli.out).map_err(err)?;
                    for p in &r.panels {
                        println!("{:<14} xi {:+.4} amplitude {:.4}", p.name, p.xi, p.amplitude);
                    }
                }
                Figure::Fig5 => print!("{}", harness::reproduce_budget(&cfg, &cli.out).map_err(err)?.budget.to_text()),
            }
        }
    }
    Ok(())
}
