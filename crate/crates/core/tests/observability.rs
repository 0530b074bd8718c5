use std::f64::consts::PI;

use pdectl::control::{make_control_geometry, Domain};
use pdectl::observability::{
    forward_obs_ratio, heat_observability, lr_gram_constant, lr_growth_fit, obs_constant_heat,
    obs_constant_wave, potential_sweep, stoch_obs_lower_bound, Anchor, HeatObsMode, LrCutoff,
    QuotientOptions, WaveObsOptions, WaveObservation,
};
use pdectl::pde::{CoefficientField, Grid};
use proptest::prelude::*;

fn interval_mask(g: &Grid, a: f64, b: f64) -> Vec<f64> {
    (0..g.len())
        .map(|k| {
            let x = g.point(k)[0];
            if x > a && x < b {
                1.0
            } else {
                0.0
            }
        })
        .collect()
}

fn heat_constant(g: &Grid, a: f64, b: f64, mode: HeatObsMode) -> f64 {
    let e = heat_observability(
        &CoefficientField::laplacian(),
        g,
        &interval_mask(g, a, b),
        mode,
        &QuotientOptions::default(),
    )
    .unwrap();
    assert!(e.eigen_residual <= 1e-5);
    assert!((e.maximizer.norm() - 1.0).abs() < 1e-10);
    e.constant
}

#[test]
fn heat_constant_grows_as_the_observed_region_shrinks() {
    let g = Grid::unit_interval(40, 0.3, 150).unwrap();
    let pairs = [
        ((0.3, 0.6), (0.2, 0.7)),
        ((0.4, 0.5), (0.3, 0.6)),
        ((0.0, 0.2), (0.0, 0.5)),
        ((0.7, 0.9), (0.6, 1.0)),
        ((0.45, 0.55), (0.4, 0.6)),
        ((0.1, 0.3), (0.05, 0.35)),
        ((0.5, 0.8), (0.5, 0.9)),
        ((0.2, 0.4), (0.0, 1.0)),
        ((0.6, 0.7), (0.55, 0.8)),
        ((0.25, 0.3), (0.2, 0.32)),
    ];
    for mode in [HeatObsMode::Initial, HeatObsMode::Terminal] {
        for ((a1, b1), (a2, b2)) in pairs {
            let small = heat_constant(&g, a1, b1, mode);
            let large = heat_constant(&g, a2, b2, mode);
            assert!(
                small >= large * (1.0 - 1e-12),
                "{mode:?} ({a1},{b1}) {small} < ({a2},{b2}) {large}"
            );
        }
    }
}

#[test]
fn full_observation_bounds_the_initial_state_by_the_horizon() {
    for t in [0.1, 0.5, 2.0] {
        let g = Grid::unit_interval(50, t, 200).unwrap();
        let c = heat_constant(&g, 0.0, 1.0, HeatObsMode::Initial);
        assert!(c <= (1.0 / t).sqrt() * (1.0 + 1e-9), "T={t}: {c}");
    }
}

#[test]
fn heat_geometry_entry_point_and_empty_region() {
    let g = Grid::unit_interval(30, 0.2, 80).unwrap();
    let geo = make_control_geometry(&Domain::unit(1), &[-0.1], 0.15, 0.2).unwrap();
    let e = obs_constant_heat(
        &CoefficientField::laplacian(),
        &g,
        &geo,
        HeatObsMode::Initial,
    )
    .unwrap();
    assert!(e.constant > 0.0 && e.regularization > 0.0 && !e.lower_bound_only);
    let none = vec![0.0; g.len()];
    let err = heat_observability(
        &CoefficientField::laplacian(),
        &g,
        &none,
        HeatObsMode::Initial,
        &QuotientOptions::default(),
    );
    assert!(err.is_err());
}

#[test]
fn potential_sweep_reports_a_fit() {
    let g = Grid::unit_interval(40, 0.5, 200).unwrap();
    let geo = make_control_geometry(&Domain::unit(1), &[-0.1], 0.15, 0.5)
        .unwrap()
        .with_omega(&[0.3], &[0.6])
        .unwrap();
    let s = potential_sweep(
        &CoefficientField::laplacian(),
        &g,
        &geo,
        HeatObsMode::Initial,
        &[0.0, 5.0, 10.0, 20.0, 40.0],
    )
    .unwrap();
    assert_eq!(s.constants.len(), 5);
    assert!(s.constants.iter().all(|c| c.is_finite() && *c > 0.0));
    assert!(s.residual.is_finite() && (0.0..=1.0).contains(&s.r_squared));
}

fn wave_constant(n: usize, horizon: f64, obs: WaveObservation, anchor: Anchor) -> f64 {
    let h = 1.0 / (n + 1) as f64;
    let steps = (horizon / (0.5 * h)).ceil() as usize;
    let g = Grid::unit_interval(n, horizon, steps).unwrap();
    let geo = make_control_geometry(&Domain::unit(1), &[-0.1], 0.15, horizon).unwrap();
    let opts = WaveObsOptions {
        anchor,
        ..Default::default()
    };
    let e = obs_constant_wave(&CoefficientField::laplacian(), &g, &geo, obs, &opts).unwrap();
    assert!(e.eigen_residual <= 1e-5);
    assert_eq!(e.beyond_critical_time, Some(horizon > geo.t_star));
    e.constant
}

#[test]
fn wave_constant_diverges_under_refinement_below_the_critical_time() {
    let coarse = wave_constant(50, 1.0, WaveObservation::Interior, Anchor::Initial);
    let fine = wave_constant(200, 1.0, WaveObservation::Interior, Anchor::Initial);
    assert!(fine > 5.0 * coarse, "{coarse} -> {fine}");
}

#[test]
fn wave_constant_stabilizes_beyond_the_critical_time() {
    let mid = wave_constant(100, 2.5, WaveObservation::Interior, Anchor::Initial);
    let fine = wave_constant(200, 2.5, WaveObservation::Interior, Anchor::Initial);
    assert!(fine <= 1.5 * mid, "{mid} -> {fine}");
    let trace = wave_constant(100, 2.5, WaveObservation::BoundaryTrace, Anchor::Initial);
    assert!(trace.is_finite() && trace > 0.0);
}

#[test]
fn wave_constant_is_invariant_under_time_reversal() {
    for obs in [WaveObservation::Interior, WaveObservation::BoundaryTrace] {
        let a = wave_constant(60, 2.5, obs, Anchor::Initial);
        let b = wave_constant(60, 2.5, obs, Anchor::Terminal);
        assert!((a / b - 1.0).abs() <= 1e-6, "{obs:?}: {a} vs {b}");
    }
}

#[test]
fn full_wave_observation_is_finite_and_normalized() {
    let g = Grid::unit_interval(40, 2.5, 200).unwrap();
    let mut geo = make_control_geometry(&Domain::unit(1), &[-0.1], 0.15, 2.5).unwrap();
    geo = geo.with_omega(&[0.0], &[1.0]).unwrap();
    let e = obs_constant_wave(
        &CoefficientField::laplacian(),
        &g,
        &geo,
        WaveObservation::Interior,
        &WaveObsOptions::default(),
    )
    .unwrap();
    assert!(e.constant.is_finite() && e.constant > 0.0);
    let q = e.maximizer.norm();
    assert!(q <= 1.0 + 1e-12 && e.maximizer_velocity.is_some());
    // with full observation and a long horizon the constant is close to sqrt(2/T)
    assert!(e.constant < 2.0 * (2.0f64 / 2.5).sqrt());
}

#[test]
fn lr_gram_on_the_whole_interval_is_the_identity() {
    let s = lr_gram_constant(LrCutoff::Modes(12), &[0.0], &[1.0]).unwrap();
    for (i, row) in s.gram.iter().enumerate() {
        for (j, v) in row.iter().enumerate() {
            let expect = if i == j { 1.0 } else { 0.0 };
            assert!((v - expect).abs() < 1e-15);
        }
    }
    assert!((s.constant - 1.0).abs() < 1e-14);
    let f = lr_growth_fit(&[0.0], &[1.0], &[10.0, 40.0, 90.0, 160.0, 250.0]).unwrap();
    assert!(f.constants.iter().all(|c| (c - 1.0).abs() < 1e-14));
    assert!(f.slope.abs() < 1e-12);
}

#[test]
fn lr_two_mode_gram_matches_the_closed_form() {
    let s = lr_gram_constant(LrCutoff::Modes(2), &[0.0], &[0.5]).unwrap();
    let off = 4.0 / (3.0 * PI);
    assert!((s.gram[0][0] - 0.5).abs() < 1e-15 && (s.gram[1][1] - 0.5).abs() < 1e-15);
    assert!((s.gram[0][1] - off).abs() < 1e-15 && (s.gram[1][0] - off).abs() < 1e-15);
    assert!((s.lambda_min - (0.5 - off)).abs() < 1e-12);
}

#[test]
fn lr_lambda_min_decreases_strictly_with_modes() {
    let mut prev = f64::INFINITY;
    for k in 1..=30 {
        let s = lr_gram_constant(LrCutoff::Modes(k), &[0.2], &[0.4]).unwrap();
        assert!(s.lambda_min > 0.0 && s.lambda_min < prev, "K={k}");
        assert!(s.lambda_min <= 1.0);
        prev = s.lambda_min;
    }
}

#[test]
fn lr_constant_grows_like_exp_sqrt_r() {
    let r: Vec<f64> = (1..=40).map(|k| (k as f64 * PI).powi(2)).collect();
    let f = lr_growth_fit(&[0.2], &[0.4], &r).unwrap();
    assert!(f.r_squared >= 0.95 && f.slope > 0.0, "{f:?}");
    let mut mu: Vec<f64> = (1..10usize)
        .flat_map(|i| (1..10usize).map(move |j| PI * PI * (i * i + j * j) as f64))
        .filter(|m| *m <= 800.0)
        .collect();
    mu.sort_by(f64::total_cmp);
    mu.dedup();
    let f2 = lr_growth_fit(&[0.2, 0.2], &[0.4, 0.4], &mu).unwrap();
    assert!(f2.r_squared >= 0.9, "{f2:?}");
}

#[test]
fn lr_argument_errors() {
    assert!(lr_gram_constant(LrCutoff::Modes(3), &[0.3], &[0.3]).is_err());
    assert!(lr_gram_constant(LrCutoff::Modes(3), &[0.5], &[0.2]).is_err());
    assert!(lr_growth_fit(&[0.2], &[0.4], &[10.0, 40.0, 90.0]).is_err());
    assert!(lr_growth_fit(&[0.2], &[0.4], &[10.0, 40.0, 40.0, 90.0]).is_err());
}

fn stoch_setup(horizon: f64) -> (Grid, pdectl::control::ControlGeometry) {
    let g = Grid::unit_interval(30, horizon, 100).unwrap();
    let geo = make_control_geometry(&Domain::unit(1), &[-0.1], 0.15, horizon)
        .unwrap()
        .with_omega(&[0.3], &[0.6])
        .unwrap();
    (g, geo)
}

#[test]
fn noise_free_lower_bound_is_the_deterministic_ratio() {
    let (g, geo) = stoch_setup(0.2);
    let coef = CoefficientField::laplacian();
    let e = stoch_obs_lower_bound(&coef, &g, &geo, 4, 256, 11).unwrap();
    assert!(e.lower_bound_only);
    let det = forward_obs_ratio(&coef, &g, &geo.mask(&g), &e.maximizer).unwrap();
    assert!((e.constant / det - 1.0).abs() <= 1e-6);
    assert!(e.half_width.unwrap() <= 1e-9 * e.constant);
    let first = stoch_obs_lower_bound(&coef, &g, &geo, 1, 256, 11).unwrap();
    let det1 = forward_obs_ratio(&coef, &g, &geo.mask(&g), &g.dirichlet_mode(&[1])).unwrap();
    assert!((first.constant / det1 - 1.0).abs() <= 1e-6);
    assert!(e.constant >= first.constant);
}

#[test]
fn shorter_horizon_raises_the_stochastic_lower_bound() {
    let coef = CoefficientField::laplacian().with_noise(|_| 1.0);
    let (g, geo) = stoch_setup(0.4);
    let long = stoch_obs_lower_bound(&coef, &g, &geo, 3, 512, 5).unwrap();
    let (g, geo) = stoch_setup(0.2);
    let short = stoch_obs_lower_bound(&coef, &g, &geo, 3, 512, 5).unwrap();
    assert!(
        short.constant > long.constant,
        "{} vs {}",
        short.constant,
        long.constant
    );
}

#[test]
fn stochastic_lower_bound_is_reproducible_across_seeds() {
    let coef = CoefficientField::laplacian().with_noise(|_| 1.0);
    let (g, geo) = stoch_setup(0.2);
    let a = stoch_obs_lower_bound(&coef, &g, &geo, 1, 1024, 1).unwrap();
    let b = stoch_obs_lower_bound(&coef, &g, &geo, 1, 1024, 2).unwrap();
    let hw = a.half_width.unwrap().max(b.half_width.unwrap());
    assert!(hw > 0.0);
    assert!((a.constant - b.constant).abs() <= 3.0 * hw);
    assert_eq!(
        a,
        stoch_obs_lower_bound(&coef, &g, &geo, 1, 1024, 1).unwrap()
    );
    assert!(stoch_obs_lower_bound(&coef, &g, &geo, 1, 255, 1).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn nested_regions_order_heat_constants(a in 0.0..0.6f64, w in 0.1..0.3f64, grow in 0.02..0.2f64) {
        let g = Grid::unit_interval(24, 0.2, 60).unwrap();
        let small = heat_constant(&g, a, a + w, HeatObsMode::Initial);
        let large = heat_constant(&g, (a - grow).max(0.0), (a + w + grow).min(1.0), HeatObsMode::Initial);
        prop_assert!(small >= large * (1.0 - 1e-12));
    }
}
