use std::f64::consts::{FRAC_PI_2, PI};

use num_complex::Complex64 as C;
use proptest::prelude::*;
use tgifs::compiler::{
    build_q, build_trig_gate, compile_evolution, compose_unitary, lower_to_schedule, GateProgram, HardwareProfile,
    InitialStatePlan, Primitive,
};
use tgifs::harness::ExperimentConfig;
use tgifs::hilbert::{self, CMat, FockSpace};
use tgifs::potential::FourierPotential;

const CUTOFF: usize = 100;
const INTERIOR: usize = 40;

/// Largest element difference over the interior Fock block of every qubit
/// sector.
fn interior_defect(u: &CMat, v: &CMat) -> f64 {
    let mut worst: f64 = 0.0;
    for a in 0..2 {
        for b in 0..2 {
            for i in 0..INTERIOR {
                for j in 0..INTERIOR {
                    worst = worst.max((u[(a * CUTOFF + i, b * CUTOFF + j)] - v[(a * CUTOFF + i, b * CUTOFF + j)]).norm());
                }
            }
        }
    }
    worst
}

/// `cos` and `sin` of `2√2|α| x_q + φ`, with `x_q` the quadrature at phase
/// `Arg α + π/2` that the SDD pair acts on.
fn trig_operators(space: FockSpace, alpha: C, phi: f64) -> (CMat, CMat) {
    let xq = hilbert::rotated_quadrature(space, alpha.arg() + FRAC_PI_2);
    let k = 2.0 * 2f64.sqrt() * alpha.norm();
    let cos = hilbert::function_of_hermitian(&xq.matrix, |x| C::new((k * x + phi).cos(), 0.0)).unwrap();
    let sin = hilbert::function_of_hermitian(&xq.matrix, |x| C::new((k * x + phi).sin(), 0.0)).unwrap();
    (cos, sin)
}

/// `exp(½iϑ(σ_z cos(·) + σ_y sin(·)))`.
fn q_closed_form(space: FockSpace, alpha: C, theta: f64, phi: f64) -> CMat {
    let (cos, sin) = trig_operators(space, alpha, phi);
    let g = hilbert::embed_product(&hilbert::sigma_z(), &cos) + hilbert::embed_product(&hilbert::sigma_y(), &sin);
    hilbert::hermitian_exponential(&g, -0.5 * theta).unwrap()
}

fn trotter_defect(space: FockSpace, alpha: C, theta: f64, phi: f64) -> f64 {
    let (cos, _) = trig_operators(space, alpha, phi);
    let target = hilbert::hermitian_exponential(&hilbert::embed_product(&hilbert::sigma_z(), &cos), -theta).unwrap();
    interior_defect(&compose_unitary(&build_trig_gate(alpha, theta, phi), space).unwrap(), &target)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn build_q_matches_closed_form(r in 0.05..1.0f64, arg in 0.0..(2.0 * PI), theta in 0.0..1.0f64, phi in -PI..PI) {
        let space = FockSpace::new(CUTOFF).unwrap();
        let alpha = C::from_polar(r, arg);
        let u = compose_unitary(&build_q(alpha, theta, phi), space).unwrap();
        prop_assert!(interior_defect(&u, &q_closed_form(space, alpha, theta, phi)) < 1e-7);
    }
}

#[test]
fn zero_angle_and_structure() {
    let space = FockSpace::new(CUTOFF).unwrap();
    let id = CMat::identity(2 * CUTOFF, 2 * CUTOFF);
    let alpha = C::new(PI / 6.0, 0.0);
    assert!(interior_defect(&compose_unitary(&build_q(alpha, 0.0, 0.0), space).unwrap(), &id) < 1e-9);
    assert!(interior_defect(&compose_unitary(&build_trig_gate(alpha, 0.0, 0.0), space).unwrap(), &id) < 1e-9);
    assert_eq!(
        build_q(alpha, 0.8, 0.0),
        vec![
            Primitive::Sdd { alpha, detuning: 0.0 },
            Primitive::SqrZ { angle: -0.8 },
            Primitive::Sdd { alpha: -alpha, detuning: 0.0 },
        ]
    );
}

#[test]
fn trotter_defect_is_quadratic() {
    let space = FockSpace::new(CUTOFF).unwrap();
    let alpha = C::new(PI / 6.0, 0.0);
    let thetas = [0.1, 0.2, 0.4, 0.8];
    let defects: Vec<f64> = thetas.iter().map(|&t| trotter_defect(space, alpha, t, 0.0)).collect();
    let (lx, ly): (Vec<f64>, Vec<f64>) = thetas.iter().zip(&defects).map(|(t, d)| (t.ln(), d.ln())).unzip();
    let mx = lx.iter().sum::<f64>() / 4.0;
    let my = ly.iter().sum::<f64>() / 4.0;
    let slope = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum::<f64>()
        / lx.iter().map(|x| (x - mx).powi(2)).sum::<f64>();
    assert!((slope - 2.0).abs() < 0.15, "slope {slope}, defects {defects:?}");
    assert!(defects[2] <= defects[3] / 3.5);
    // Same scaling with a nonzero axis angle.
    let d8 = trotter_defect(space, alpha, 0.8, -PI / 20.0);
    let d4 = trotter_defect(space, alpha, 0.4, -PI / 20.0);
    assert!(d4 <= d8 / 3.5);
}

#[test]
fn down_block_approximates_cosine_gate() {
    let space = FockSpace::new(CUTOFF).unwrap();
    let alpha = C::new(PI / 6.0, 0.0);
    let theta = 0.1;
    let u = compose_unitary(&build_trig_gate(alpha, theta, 0.0), space).unwrap();
    let (cos, _) = trig_operators(space, alpha, 0.0);
    // ⟨↓|σ_z|↓⟩ = −1 with standard Paulis in (↓, ↑) order.
    let target = hilbert::hermitian_exponential(&cos, theta).unwrap();
    let down = u.view((0, 0), (CUTOFF, CUTOFF)).into_owned();
    let diff = (down - target).view((0, 0), (INTERIOR, INTERIOR)).iter().map(|z| z.norm()).fold(0.0, f64::max);
    assert!(diff < 2.0 * theta * theta, "{diff}");
}

fn canonical(k: usize) -> GateProgram {
    compile_evolution(&FourierPotential::double_well(0.0), 200e-6, k, InitialStatePlan { x0: -1.5 })
}

#[test]
fn program_shapes() {
    assert_eq!(canonical(78).evolution_sdd_count(), 312);
    let init = canonical(0);
    assert!(init.step_starts.is_empty());
    assert!(init.primitives.iter().all(|p| !matches!(p, Primitive::Sdd { detuning, .. } if *detuning != 0.0)));
    let asym = compile_evolution(&FourierPotential::double_well(-PI / 20.0), 200e-6, 1, InitialStatePlan { x0: -1.5 });
    assert_eq!(asym.primitives.len() - asym.step_starts[0] - 1, 10);
    assert_eq!(canonical(78).to_text(), canonical(78).to_text());
}

#[test]
fn schedule_durations() {
    let hw = HardwareProfile::trapped_ion();
    assert!((hw.sdd_duration(C::new(PI / 6.0, 0.0)) - 50e-6).abs() < 1e-15);
    assert!((hw.sqrx_duration(FRAC_PI_2) - 17.5e-6).abs() < 1e-15);
    let s = lower_to_schedule(&canonical(78), &hw, 2.0 * PI * 500.0).unwrap();
    assert!((s.evolution_duration() - 78.0 * 200e-6).abs() < 1e-12);
}

#[test]
fn alpha0_and_lambda_compile_identically() {
    let a = ExperimentConfig::parse("alpha0=0.5235987755982988").unwrap();
    let b = ExperimentConfig::parse("lambda=4.242640687119286").unwrap();
    let pa = tgifs::harness::compile(&a);
    let pb = tgifs::harness::compile(&b);
    assert_eq!(pa.to_text(), pb.to_text());
    assert_eq!(pa.meta.hash, pb.meta.hash);
}
