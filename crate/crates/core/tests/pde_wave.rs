use std::f64::consts::PI;

use pdectl::pde::{
    primitive, solve_stoch_wave, solve_wave, wave_energy, CoefficientField, Damping, Grid,
    GridFunction, WaveSystem,
};
use pdectl::polyjet::seeded_rng;
use proptest::prelude::*;
use rand::RngExt;

fn energies(
    coef: &CoefficientField,
    g: &Grid,
    y0: &GridFunction,
    y1: &GridFunction,
    d: Damping,
) -> Vec<f64> {
    let t = solve_wave(coef, g, y0, y1, None, d).unwrap();
    wave_energy(&t, coef, None).unwrap()
}

#[test]
fn undamped_energy_is_conserved_over_ten_thousand_steps() {
    let n = 99;
    let h = 1.0 / (n + 1) as f64;
    let g = Grid::unit_interval(n, 1e4 * 0.5 * h, 10_000).unwrap();
    let y0 = g.dirichlet_mode(&[1]);
    let e = energies(
        &CoefficientField::laplacian(),
        &g,
        &y0,
        &g.zeros(),
        Damping::None,
    );
    let e0 = e[0];
    assert!(e.iter().all(|x| (x / e0 - 1.0).abs() <= 1e-10));
}

#[test]
fn zero_data_gives_zero_trajectory() {
    let g = Grid::unit_square(5, 1.0, 10).unwrap();
    let t = solve_wave(
        &CoefficientField::laplacian(),
        &g,
        &g.zeros(),
        &g.zeros(),
        None,
        Damping::None,
    )
    .unwrap();
    assert!(t
        .states
        .iter()
        .chain(t.velocities.as_ref().unwrap())
        .flatten()
        .all(|v| *v == 0.0));
    assert!(wave_energy(&t, &CoefficientField::laplacian(), None)
        .unwrap()
        .iter()
        .all(|e| *e == 0.0));
}

#[test]
fn standing_mode_energy_matches_the_continuum_value() {
    let g = Grid::unit_interval(2999, 0.01, 10).unwrap();
    let y0 = g.sample(|x| (PI * x[0]).sin());
    let e = energies(
        &CoefficientField::laplacian(),
        &g,
        &y0,
        &g.zeros(),
        Damping::None,
    );
    for v in e {
        assert!((v / (PI * PI / 4.0) - 1.0).abs() < 1e-6, "{v}");
    }
}

fn interior_damping() -> CoefficientField {
    CoefficientField::laplacian().with_damping(|x| if x[0] > 0.3 && x[0] < 0.7 { 1.0 } else { 0.0 })
}

#[test]
fn interior_damping_dissipates() {
    let g = Grid::unit_interval(100, 5.0, 1000).unwrap();
    let y0 = g.sample(|x| (x[0] * (1.0 - x[0])).powi(2) * 16.0);
    let e = energies(&interior_damping(), &g, &y0, &g.zeros(), Damping::Interior);
    assert!(e.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-14)));
    assert!(e[e.len() - 1] < 0.5 * e[0]);
}

#[test]
fn dissipation_identity_holds_per_step() {
    let g = Grid::unit_interval(60, 2.0, 300).unwrap();
    let coef = interior_damping().with_constant_potential(-1.0);
    let sys = WaveSystem::new(&coef, &g, Damping::Interior).unwrap();
    let y0 = g.sample(|x| (3.0 * PI * x[0]).sin() + x[0] * (1.0 - x[0]));
    let t = sys.solve(&y0.values, &g.zeros().values, None).unwrap();
    let v = t.velocities.as_ref().unwrap();
    for k in 0..g.steps() {
        let e0 = sys.energy(&t.states[k], &v[k]);
        let e1 = sys.energy(&t.states[k + 1], &v[k + 1]);
        let loss: f64 = (0..v[k].len())
            .map(|i| {
                let vb = 0.5 * (v[k][i] + v[k + 1][i]);
                g.dt() * sys.damping()[i] * vb * vb
            })
            .sum();
        assert!(
            ((e0 - e1) - loss).abs() <= 1e-6 * loss.max(1e-14 * e0),
            "step {k}"
        );
    }
}

#[test]
fn time_reversal_recovers_initial_data() {
    for g in [
        Grid::unit_interval(80, 1.3, 200).unwrap(),
        Grid::unit_square(12, 0.7, 60).unwrap(),
    ] {
        let coef = CoefficientField::laplacian().with_diffusivity(|x| 1.0 + 0.5 * x[0]);
        let sys = WaveSystem::new(&coef, &g, Damping::None).unwrap();
        let y0 =
            g.sample(|x| x.iter().map(|s| s * (1.0 - s)).product::<f64>() * (2.0 * x[0]).cos());
        let y1 = g.sample(|x| (PI * x[0]).sin() * x.iter().product::<f64>());
        let fwd = sys.solve(&y0.values, &y1.values, None).unwrap();
        let n = g.steps();
        let back_v: Vec<f64> = fwd.velocities.as_ref().unwrap()[n]
            .iter()
            .map(|v| -v)
            .collect();
        let back = sys.solve(&fwd.states[n], &back_v, None).unwrap();
        let y = back.terminal();
        let v = back.velocity(n).unwrap();
        let err: f64 = y
            .values
            .iter()
            .zip(&y0.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        let errv: f64 = v
            .values
            .iter()
            .zip(&y1.values)
            .map(|(a, b)| (a + b).abs())
            .fold(0.0, f64::max);
        assert!(err <= 1e-8 * y0.max_abs() && errv <= 1e-8 * (y0.max_abs() + y1.max_abs()));
    }
}

#[test]
fn neumann_end_conserves_energy() {
    let g = Grid::unit_interval(50, 3.0, 600).unwrap();
    let y0 = g.sample(|x| (PI * x[0]).sin().powi(3));
    let d = Damping::Boundary {
        left: None,
        right: Some(0.0),
    };
    let e = energies(&CoefficientField::laplacian(), &g, &y0, &g.zeros(), d);
    assert!(e.iter().all(|x| (x / e[0] - 1.0).abs() <= 1e-10));
}

#[test]
fn boundary_damping_is_interval_only() {
    let g = Grid::unit_square(5, 1.0, 4).unwrap();
    let d = Damping::Boundary {
        left: None,
        right: Some(1.0),
    };
    assert!(WaveSystem::new(&CoefficientField::laplacian(), &g, d).is_err());
}

#[test]
fn nonlinear_potential_energy_uses_the_primitive() {
    let cube = |s: f64| s * s * s;
    for y in [-2.0, -0.3, 0.0, 0.7, 3.0] {
        assert!((primitive(&cube, y) - y.powi(4) / 4.0).abs() < 1e-12 * (1.0 + y.powi(4)));
    }
    let log = |s: f64| s * s.abs().ln_1p().powf(1.3);
    let y: f64 = 2.5;
    let mid = primitive(&log, y);
    let fine: f64 = (0..20000)
        .map(|k| log((k as f64 + 0.5) * y / 20000.0) * y / 20000.0)
        .sum();
    assert!((mid - fine).abs() < 1e-7);
    let g = Grid::unit_interval(20, 0.1, 5).unwrap();
    let y0 = g.dirichlet_mode(&[1]);
    let t = solve_wave(
        &CoefficientField::laplacian(),
        &g,
        &y0,
        &g.zeros(),
        None,
        Damping::None,
    )
    .unwrap();
    let lin = wave_energy(&t, &CoefficientField::laplacian(), None).unwrap();
    let nl = wave_energy(&t, &CoefficientField::laplacian(), Some(&cube)).unwrap();
    let extra: f64 = y0.values.iter().map(|v| g.cell() * v.powi(4) / 4.0).sum();
    assert!((nl[0] - lin[0] - extra).abs() < 1e-12);
}

#[test]
fn noise_free_stochastic_wave_is_deterministic_wave() {
    let g = Grid::unit_interval(30, 1.0, 100).unwrap();
    let coef = CoefficientField::laplacian().with_constant_potential(0.5);
    let y0 = g.dirichlet_mode(&[2]);
    let y1 = g.sample(|x| x[0] * (1.0 - x[0]));
    let det = solve_wave(&coef, &g, &y0, &y1, None, Damping::None).unwrap();
    for p in solve_stoch_wave(&coef, &g, &y0, &y1, 5, 3).unwrap() {
        assert_eq!(p.states, det.states);
    }
    let noisy = coef.clone().with_noise(|_| 1.0).with_noise_source(|x| x[0]);
    let zero = solve_stoch_wave(&noisy, &g, &g.zeros(), &g.zeros(), 5, 2).unwrap();
    assert!(zero[0].states.iter().flatten().any(|v| *v != 0.0));
    let quiet = coef.with_noise(|_| 1.0);
    let zero = solve_stoch_wave(&quiet, &g, &g.zeros(), &g.zeros(), 5, 2).unwrap();
    assert!(zero[1].states.iter().flatten().all(|v| *v == 0.0));
}

#[test]
fn stochastic_energy_grows_at_most_exponentially() {
    let g = Grid::unit_interval(40, 1.0, 200).unwrap();
    let a4 = 1.0;
    let coef = CoefficientField::laplacian().with_noise(move |_| a4);
    let y0 = g.dirichlet_mode(&[1]);
    let paths = solve_stoch_wave(&coef, &g, &y0, &g.zeros(), 17, 256).unwrap();
    let e0 = wave_energy(&paths[0], &coef, None).unwrap()[0];
    let mut mean = vec![0.0; g.steps() + 1];
    for p in &paths {
        for (m, e) in mean.iter_mut().zip(wave_energy(p, &coef, None).unwrap()) {
            *m += e / paths.len() as f64;
        }
    }
    // |y|² ≤ E/μ₁, so the Itô term adds at most a₄²/μ₁ · E per unit time
    let rate = a4 * a4 / (PI * PI);
    for (k, m) in mean.iter().enumerate() {
        assert!(*m <= 1.5 * e0 * (rate * g.time(k)).exp());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(30))]

    #[test]
    fn doubling_data_quadruples_energy(seed in any::<u64>()) {
        let g = Grid::unit_interval(25, 1.0, 50).unwrap();
        let mut rng = seeded_rng(seed);
        let vals: Vec<f64> = (0..g.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let y0 = GridFunction::new(g, vals).unwrap();
        let e1 = energies(&interior_damping(), &g, &y0, &g.zeros(), Damping::Interior);
        let e2 = energies(&interior_damping(), &g, &y0.scale(2.0), &g.zeros(), Damping::Interior);
        for (a, b) in e1.iter().zip(&e2) {
            prop_assert!((4.0 * a - b).abs() <= 1e-8 * b);
        }
    }
}
