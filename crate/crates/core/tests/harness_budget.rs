use tgifs::compiler::GateProgram;
use tgifs::harness::{self, ErrorBudget, ExperimentConfig};
use tgifs::tomography::{self, CharacteristicScan, ScanKind};

fn budget(text: &str) -> ErrorBudget {
    harness::run_error_budget(&ExperimentConfig::parse(text).unwrap()).unwrap().budget
}

fn cumulative(b: &ErrorBudget) -> Vec<f64> {
    b.layers.iter().map(|l| l.cumulative).collect()
}

#[test]
fn canonical_budget_is_monotone_and_shrinks_without_error_sources() {
    let canonical = budget("");
    let names: Vec<&str> = canonical.layers.iter().map(|l| l.name.as_str()).collect();
    assert_eq!(names, ["dephasing", "trotter", "2pfd"]);
    let c = cumulative(&canonical);
    assert!(c.windows(2).all(|w| w[1] >= w[0]), "{c:?}");

    // γ_φ = 0 and Δt/8, with the Rabi rates raised by the same factor so the
    // pulses still fit inside a step.
    let fine = budget(
        "gamma_phi_per_s=0\ndt_us=25\nsteps=624\nsample_every_steps=16\nsideband_pi_time_us=18.75\ncarrier_pi_time_us=4.375",
    );
    for (f, c) in cumulative(&fine).iter().zip(&c) {
        assert!(f < c, "{f} vs {c}");
    }
    for name in ["dephasing", "trotter"] {
        assert!(fine.layer(name).unwrap().incremental < canonical.layer(name).unwrap().incremental);
    }
}

#[test]
fn noiseless_zero_spacing_readout_adds_nothing() {
    let b = budget("pfd_h=0.0001\npfd_shots=0\npfd_seeds=1");
    assert!(b.layer("2pfd").unwrap().incremental < 0.3);
}

#[test]
fn config_text_round_trips() {
    let cfg = ExperimentConfig::parse("name=rt\nterm1_phi_rad=-0.15707963267948966\nestimator=slope\nseed=9").unwrap();
    assert_eq!(ExperimentConfig::parse(&cfg.to_text()).unwrap(), cfg);
}

#[test]
fn emitted_csvs_parse_back_losslessly() {
    let cfg = ExperimentConfig::parse("steps=4\nsample_every_steps=1\ngamma_phi_per_s=0").unwrap();
    let r = harness::run_exact(&cfg).unwrap();
    let csv = r.to_csv();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("t_s,x_expect,n_bar,acceptance"));
    for ((line, t), x) in lines.zip(&r.times).zip(r.x_expect()) {
        let f: Vec<f64> = line.split(',').map(|v| v.parse().unwrap()).collect();
        assert_eq!(f[0].to_bits(), t.to_bits());
        assert_eq!(f[1].to_bits(), x.to_bits());
    }

    let st = &r.states[2];
    let scan = tomography::sample_scan(st, &tomography::half_plane_grid(4.0, 21, 4.0, 11), 500, 1, ScanKind::Grid).unwrap();
    assert_eq!(CharacteristicScan::from_csv(&scan.to_csv(), ScanKind::Grid).unwrap(), scan);

    let program = harness::compile(&ExperimentConfig::default());
    assert_eq!(GateProgram::from_text(&program.to_text()).unwrap(), program);
}
