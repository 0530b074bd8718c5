use nalgebra::DMatrix;
use pdectl::control::{
    check_assumption_d, controllability_gramian, hum_exact_control_wave, hum_null_control_heat,
    kalman_rank, lambda_min, make_control_geometry, random_system as random_integer_system,
    semilinear_null_control, ControlGeometry, Domain, Face, HeatGramian, LinearODE,
    SemilinearOptions, WaveGramian,
};
use pdectl::identities::fit_slope;
use pdectl::pde::{blow_up_threshold, solve_semilinear_heat, CoefficientField, Grid, GridFunction};
use pdectl::polyjet::seeded_rng;
use pdectl::Error;
use rand::{Rng, RngExt};

fn mat(rows: usize, cols: usize, v: &[f64]) -> DMatrix<f64> {
    DMatrix::from_row_slice(rows, cols, v)
}

#[test]
fn kalman_examples() {
    let di = LinearODE::new(mat(2, 2, &[0.0, 1.0, 0.0, 0.0]), mat(2, 1, &[0.0, 1.0])).unwrap();
    assert_eq!(kalman_rank(&di), 2);
    let zero = LinearODE::new(mat(2, 2, &[0.0, 1.0, 0.0, 0.0]), DMatrix::zeros(2, 1)).unwrap();
    assert_eq!(kalman_rank(&zero), 0);
    assert!(LinearODE::new(DMatrix::zeros(2, 3), DMatrix::zeros(2, 1)).is_err());
}

/// Integer systems: some generic, some with an uncontrollable block or a repeated diagonal.
fn random_system(rng: &mut impl Rng, n: usize) -> LinearODE {
    let m = rng.random_range(1..=2usize);
    let mut a = DMatrix::from_fn(n, n, |_, _| rng.random_range(-2i32..=2) as f64);
    let mut b = DMatrix::from_fn(n, m, |_, _| rng.random_range(-2i32..=2) as f64);
    match rng.random_range(0..4) {
        0 if n > 1 => {
            // the last state is decoupled and not actuated
            let k = n - 1;
            for j in 0..n {
                if j != k {
                    a[(k, j)] = 0.0;
                }
            }
            b.row_mut(k).fill(0.0);
        }
        1 => {
            a = DMatrix::identity(n, n) * 2.0;
            b = DMatrix::from_fn(n, 1, |_, _| rng.random_range(-2i32..=2) as f64);
        }
        _ => {}
    }
    LinearODE::new(a, b).unwrap()
}

fn det(m: &DMatrix<f64>) -> f64 {
    let n = m.nrows();
    if n == 1 {
        return m[(0, 0)];
    }
    (0..n)
        .map(|j| {
            let minor = m.clone().remove_row(0).remove_column(j);
            let s = if j % 2 == 0 { 1.0 } else { -1.0 };
            s * m[(0, j)] * det(&minor)
        })
        .sum()
}

fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    if k == 0 {
        return vec![vec![]];
    }
    if n < k {
        return vec![];
    }
    let mut out = combinations(n - 1, k);
    for mut c in combinations(n - 1, k - 1) {
        c.push(n - 1);
        out.push(c);
    }
    out
}

/// Largest order of a non-vanishing minor; exact for integer matrices of this size.
fn minor_rank(c: &DMatrix<f64>) -> usize {
    let (r, k) = c.shape();
    for order in (1..=r.min(k)).rev() {
        for rows in combinations(r, order) {
            for cols in combinations(k, order) {
                let sub = DMatrix::from_fn(order, order, |i, j| c[(rows[i], cols[j])]);
                if det(&sub) != 0.0 {
                    return order;
                }
            }
        }
    }
    0
}

#[test]
fn kalman_rank_matches_independent_oracles() {
    let mut rng = seeded_rng(41);
    for case in 0..100 {
        let n = 1 + case % 6;
        let sys = random_system(&mut rng, n);
        let c = sys.controllability_matrix();
        let rank = kalman_rank(&sys);
        if n <= 4 {
            assert_eq!(rank, minor_rank(&c), "case {case}");
        } else {
            assert_eq!(rank, c.rank(1e-9 * c.norm()), "case {case}");
        }
    }
}

#[test]
fn gramian_examples() {
    let a = mat(2, 2, &[0.3, 1.0, -1.0, 0.1]);
    let w =
        controllability_gramian(&LinearODE::new(a, DMatrix::zeros(2, 1)).unwrap(), 1.0).unwrap();
    assert_eq!(w, DMatrix::zeros(2, 2));
    let w = controllability_gramian(
        &LinearODE::new(DMatrix::zeros(3, 3), DMatrix::identity(3, 3)).unwrap(),
        2.0,
    )
    .unwrap();
    assert!((w - DMatrix::identity(3, 3) * 2.0).abs().max() <= 2e-8);
    assert!(controllability_gramian(
        &LinearODE::new(DMatrix::zeros(1, 1), DMatrix::zeros(1, 1)).unwrap(),
        0.0
    )
    .is_err());
    // scalar oracle: ∫₀¹ e^{2at} dt
    let w = controllability_gramian(
        &LinearODE::new(mat(1, 1, &[-0.7]), mat(1, 1, &[1.0])).unwrap(),
        1.0,
    )
    .unwrap();
    let exact = (1.0 - (-1.4f64).exp()) / 1.4;
    assert!((w[(0, 0)] / exact - 1.0).abs() < 1e-12);
}

#[test]
fn kalman_and_gramian_agree() {
    let mut rng = seeded_rng(5);
    for case in 0..100 {
        let n = 1 + case % 5;
        let sys = random_system(&mut rng, n);
        let w = controllability_gramian(&sys, 1.0).unwrap();
        assert!((&w - w.transpose()).abs().max() <= 1e-12 * w.abs().max().max(1.0));
        let by_rank = kalman_rank(&sys) == n;
        let by_gramian = lambda_min(&w) > 1e-8;
        assert_eq!(
            by_rank,
            by_gramian,
            "case {case}: λ_min = {:e}",
            lambda_min(&w)
        );
    }
}

#[test]
fn integer_systems_cover_both_outcomes() {
    let mut controllable = 0;
    for i in 0..200u64 {
        let n = 1 + (i % 5) as usize;
        let sys = random_integer_system(i, n).unwrap();
        assert_eq!(sys.dim(), n);
        assert!(sys
            .a
            .iter()
            .chain(sys.b.iter())
            .all(|v| v.fract() == 0.0 && v.abs() <= 2.0));
        let c = sys.controllability_matrix();
        let rank = kalman_rank(&sys);
        if n <= 3 {
            assert_eq!(rank, minor_rank(&c), "seed {i}");
        }
        let by_gramian = lambda_min(&controllability_gramian(&sys, 1.0).unwrap()) > 1e-8;
        assert_eq!(rank == n, by_gramian, "seed {i}");
        controllable += usize::from(rank == n);
        let again = random_integer_system(i, n).unwrap();
        assert_eq!((again.a, again.b), (sys.a, sys.b));
    }
    assert!((40..180).contains(&controllable), "{controllable}");
    assert!(random_integer_system(0, 0).is_err());
}

#[test]
fn geometry_examples() {
    let g = make_control_geometry(&Domain::unit(1), &[-0.1], 0.15, 2.5).unwrap();
    assert_eq!(
        g.gamma0,
        vec![Face {
            axis: 0,
            upper: true
        }]
    );
    assert_eq!(g.gamma_star, g.gamma0);
    assert!((g.t_star - 2.2).abs() < 1e-12);
    assert!(g.beyond_critical_time());
    let grid = Grid::unit_interval(99, 1.0, 1).unwrap();
    let mask = g.mask(&grid);
    for k in 0..grid.len() {
        let x = grid.point(k)[0];
        assert_eq!(mask[k] == 1.0, x >= 0.85 - 1e-12, "node {x}");
    }

    let sq = make_control_geometry(&Domain::unit(2), &[-0.1, -0.1], 0.1, 4.0).unwrap();
    assert_eq!(
        sq.gamma0,
        vec![
            Face {
                axis: 0,
                upper: true
            },
            Face {
                axis: 1,
                upper: true
            }
        ]
    );
    assert!((sq.t_star - 2.0 * (2.0f64 * 1.21).sqrt()).abs() < 1e-12);
    assert!((sq.t_star - 3.1113).abs() < 1e-4);
    let grid = Grid::unit_square(9, 1.0, 1).unwrap();
    let m = sq.mask(&grid);
    assert_eq!(m[grid.index(8, 0)], 1.0);
    assert_eq!(m[grid.index(0, 8)], 1.0);
    assert_eq!(m[grid.index(4, 4)], 0.0);

    let all = make_control_geometry(&Domain::unit(2), &[2.0, 0.5], 2.0, 1.0).unwrap();
    assert!(all.mask(&grid).iter().all(|v| *v == 1.0));
    assert!(make_control_geometry(&Domain::unit(1), &[0.5], 0.1, 1.0).is_err());
    assert!(make_control_geometry(&Domain::unit(2), &[1.0, 0.3], 0.1, 1.0).is_err());
}

#[test]
fn assumption_d_margins() {
    let d = Domain::unit(1);
    let r = check_assumption_d(&d, &[-2.0], 1.0).unwrap();
    assert_eq!(r.mu0, 4.0);
    assert!(r.mu0_ok && r.no_critical_point);
    assert!((r.min_grad - 4.0).abs() < 1e-12);
    assert!((r.condition_iii_margin + 5.0).abs() < 1e-12);
    assert!(!r.condition_iii_ok);
    assert!((r.rescale_factor.unwrap() - 9.0 / 4.0).abs() < 1e-12);

    let r = check_assumption_d(&d, &[-0.1], 1.0).unwrap();
    assert!((r.condition_iii_margin - (0.01 - 1.21)).abs() < 1e-12);
    for (dom, x0, margin) in [
        (Domain::unit(1), -1.5, 2.25 - 6.25),
        (Domain::unit(1), -10.0, 100.0 - 121.0),
        (Domain::new(&[9.0], &[10.0]).unwrap(), 0.0, 81.0 - 100.0),
        (
            Domain::new(&[99.0], &[100.0]).unwrap(),
            0.0,
            9801.0 - 10000.0,
        ),
    ] {
        let r = check_assumption_d(&dom, &[x0], 1.0).unwrap();
        assert!(
            (r.condition_iii_margin - margin).abs() < 1e-9 * margin.abs(),
            "{x0}: {}",
            r.condition_iii_margin
        );
        assert!(!r.condition_iii_ok);
    }
    let r = check_assumption_d(&Domain::unit(2), &[-0.5, -0.5], 2.0).unwrap();
    assert_eq!(r.mu0, 16.0);
    assert!((r.condition_iii_margin - (2.0 * 0.5 - 4.5)).abs() < 1e-12);
}

fn heat_setup(t: f64, steps: usize) -> (Grid, ControlGeometry) {
    let grid = Grid::unit_interval(100, t, steps).unwrap();
    let geo = make_control_geometry(&Domain::unit(1), &[-0.1], 0.15, t)
        .unwrap()
        .with_omega(&[0.3], &[0.6])
        .unwrap();
    (grid, geo)
}

#[test]
fn heat_null_control_of_zero_data_is_zero() {
    let (g, geo) = heat_setup(0.5, 100);
    let r = hum_null_control_heat(
        &CoefficientField::laplacian(),
        &g,
        &geo,
        &g.zeros(),
        1e-8,
        1e-8,
        500,
    )
    .unwrap();
    assert_eq!(r.cg_iterations, 0);
    assert_eq!(r.terminal_residual, 0.0);
    assert!(r.control.iter().flatten().all(|u| *u == 0.0));
}

#[test]
fn heat_null_control_reaches_small_terminal_state_with_sqrt_epsilon_law() {
    let (g, geo) = heat_setup(0.5, 500);
    let coef = CoefficientField::laplacian();
    let y0 = g.dirichlet_mode(&[1]);
    let eps = [1e-4, 1e-6, 1e-8];
    let res: Vec<_> = eps
        .iter()
        .map(|e| hum_null_control_heat(&coef, &g, &geo, &y0, *e, 1e-8, 500).unwrap())
        .collect();
    assert!(res[2].terminal_residual <= 1e-3 * y0.norm());
    let slope = fit_slope(
        &eps.iter().map(|e| e.ln()).collect::<Vec<_>>(),
        &res.iter()
            .map(|r| r.terminal_residual.ln())
            .collect::<Vec<_>>(),
    );
    assert!((0.4..=0.6).contains(&slope), "slope {slope}");

    // the CG solution satisfies (Λ + εI)φ = -y_free(T) with φ = -y(T)/ε
    let gram = HeatGramian::new(&coef, &g, geo.mask(&g), None).unwrap();
    let free = gram.forward(&y0.values, None).unwrap();
    let terminal = gram.forward(&y0.values, Some(&res[0].control)).unwrap();
    let phi: Vec<f64> = terminal.iter().map(|v| -v / eps[0]).collect();
    let lhs = gram.apply(&phi).unwrap();
    let defect: Vec<f64> = (0..g.len())
        .map(|i| lhs[i] + eps[0] * phi[i] + free[i])
        .collect();
    assert!(g.norm(&defect) <= 1e-7 * g.norm(&free));
}

#[test]
fn shorter_horizon_costs_more() {
    let coef = CoefficientField::laplacian();
    let (g5, geo5) = heat_setup(0.5, 250);
    let (g1, geo1) = heat_setup(0.1, 50);
    let long = hum_null_control_heat(&coef, &g5, &geo5, &g5.dirichlet_mode(&[1]), 1e-8, 1e-8, 500)
        .unwrap();
    let short = hum_null_control_heat(&coef, &g1, &geo1, &g1.dirichlet_mode(&[1]), 1e-8, 1e-8, 500)
        .unwrap();
    assert!(short.cost > long.cost);
    assert!(short.relative_residual <= 1e-3);
}

#[test]
fn hum_control_minimizes_the_penalized_cost() {
    let (g, geo) = heat_setup(0.3, 60);
    let coef = CoefficientField::laplacian();
    let y0 = g.sample(|x| x[0] * (1.0 - x[0]));
    let eps = 1e-4;
    let r = hum_null_control_heat(&coef, &g, &geo, &y0, eps, 1e-12, 500).unwrap();
    let gram = HeatGramian::new(&coef, &g, geo.mask(&g), None).unwrap();
    let j = |u: &[Vec<f64>]| {
        let yt = gram.forward(&y0.values, Some(u)).unwrap();
        let cost: f64 = u.iter().map(|v| g.dt() * g.inner(v, v)).sum();
        0.5 * cost + 0.5 / eps * g.inner(&yt, &yt)
    };
    let j0 = j(&r.control);
    let chi = geo.mask(&g);
    let mut rng = seeded_rng(3);
    for _ in 0..20 {
        let s = rng.random_range(1e-3..1e-1);
        let pert: Vec<Vec<f64>> = r
            .control
            .iter()
            .map(|u| {
                u.iter()
                    .zip(&chi)
                    .map(|(a, c)| a + s * c * rng.random_range(-1.0..1.0))
                    .collect()
            })
            .collect();
        assert!(j(&pert) >= j0);
    }
    // stationarity: u = L*φ with φ = -y(T)/ε
    let yt = gram.forward(&y0.values, Some(&r.control)).unwrap();
    let phi: Vec<f64> = yt.iter().map(|v| -v / eps).collect();
    let u = gram.control_from(&phi).unwrap();
    let diff: f64 = u
        .iter()
        .flatten()
        .zip(r.control.iter().flatten())
        .map(|(a, b)| (a - b).powi(2))
        .sum();
    let size: f64 = r.control.iter().flatten().map(|a| a * a).sum();
    assert!(diff.sqrt() <= 1e-6 * size.sqrt());
}

#[test]
fn gramians_are_symmetric() {
    let mut rng = seeded_rng(19);
    let g = Grid::unit_interval(30, 0.2, 40).unwrap();
    let coef = CoefficientField::laplacian()
        .with_diffusivity(|x| 1.0 + x[0])
        .with_time_potential(|t, x| t - x[0]);
    let heat = HeatGramian::new(
        &coef,
        &g,
        (0..30)
            .map(|k| if (10..20).contains(&k) { 1.0 } else { 0.0 })
            .collect(),
        None,
    )
    .unwrap();
    let gw = Grid::unit_interval(30, 1.5, 50).unwrap();
    let wave = WaveGramian::new(
        &CoefficientField::laplacian().with_diffusivity(|x| 1.0 + x[0]),
        &gw,
        (0..30).map(|k| if k > 20 { 1.0 } else { 0.0 }).collect(),
    )
    .unwrap();
    for _ in 0..20 {
        let a: Vec<f64> = (0..30).map(|_| rng.random_range(-1.0..1.0)).collect();
        let b: Vec<f64> = (0..30).map(|_| rng.random_range(-1.0..1.0)).collect();
        let lhs = g.inner(&heat.apply(&a).unwrap(), &b);
        let rhs = g.inner(&a, &heat.apply(&b).unwrap());
        assert!((lhs - rhs).abs() <= 1e-10 * g.norm(&a) * g.norm(&b));

        let a: Vec<f64> = (0..wave.len())
            .map(|_| rng.random_range(-1.0..1.0))
            .collect();
        let b: Vec<f64> = (0..wave.len())
            .map(|_| rng.random_range(-1.0..1.0))
            .collect();
        let lhs = wave.inner(&wave.apply(&a).unwrap(), &b);
        let rhs = wave.inner(&a, &wave.apply(&b).unwrap());
        let na = wave.inner(&a, &a).sqrt();
        let nb = wave.inner(&b, &b).sqrt();
        assert!((lhs - rhs).abs() <= 1e-10 * na * nb, "{lhs} {rhs}");
        assert!(wave.inner(&wave.apply(&a).unwrap(), &a) >= -1e-12 * na * na);
    }
}

fn wave_setup(t: f64) -> (Grid, ControlGeometry) {
    let h = 1.0 / 101.0;
    let grid = Grid::unit_interval(100, t, (t / h).ceil() as usize).unwrap();
    let geo = make_control_geometry(&Domain::unit(1), &[-0.1], 0.15, t).unwrap();
    (grid, geo)
}

#[test]
fn wave_exact_control_beyond_the_critical_time() {
    let (g, geo) = wave_setup(2.5);
    let z = g.zeros();
    let coef = CoefficientField::laplacian();
    let r = hum_exact_control_wave(&coef, &g, &geo, (&z, &z), (&z, &z), 1e-3, 200).unwrap();
    assert_eq!(r.cg_iterations, 0);
    assert!(r.control.iter().flatten().all(|u| *u == 0.0));
    let y0 = g.dirichlet_mode(&[1]);
    let r = hum_exact_control_wave(&coef, &g, &geo, (&y0, &z), (&z, &z), 1e-3, 200).unwrap();
    assert!(r.relative_residual <= 1e-2, "{}", r.relative_residual);
    assert!(r.warnings.is_empty());
    // a non-zero target is reached as well
    let target = g.dirichlet_mode(&[2]).scale(0.5);
    let r = hum_exact_control_wave(&coef, &g, &geo, (&y0, &z), (&target, &z), 1e-3, 200).unwrap();
    assert!(r.relative_residual <= 1e-2);
}

#[test]
fn wave_exact_control_stalls_below_the_critical_time() {
    let (g, geo) = wave_setup(1.0);
    let z = g.zeros();
    let y0 = g.dirichlet_mode(&[1]);
    match hum_exact_control_wave(
        &CoefficientField::laplacian(),
        &g,
        &geo,
        (&y0, &z),
        (&z, &z),
        1e-2,
        200,
    ) {
        Err(Error::NoConvergence {
            residual, history, ..
        }) => {
            assert!(residual > 1e-1, "{residual}");
            assert!(history.windows(2).all(|w| w[1] <= w[0]));
        }
        other => panic!("expected a plateau, got {other:?}"),
    }
}

#[test]
fn semilinear_control_trivial_cases() {
    let (g, geo) = heat_setup(0.2, 50);
    let coef = CoefficientField::laplacian();
    let r = semilinear_null_control(
        &coef,
        &g,
        &geo,
        &g.zeros(),
        1.2,
        1e-8,
        5,
        SemilinearOptions::default(),
    )
    .unwrap();
    assert_eq!(r.outer_history.len(), 1);
    assert!(r.control.iter().flatten().all(|u| *u == 0.0));

    let y0 = g.dirichlet_mode(&[1]);
    let semi = semilinear_null_control(
        &coef,
        &g,
        &geo,
        &y0,
        0.0,
        1e-10,
        5,
        SemilinearOptions::default(),
    )
    .unwrap();
    let lin = hum_null_control_heat(
        &coef.clone().with_constant_potential(1.0),
        &g,
        &geo,
        &y0,
        1e-8,
        1e-8,
        500,
    )
    .unwrap();
    let diff: f64 = semi
        .control
        .iter()
        .flatten()
        .zip(lin.control.iter().flatten())
        .map(|(a, b)| (a - b).powi(2))
        .sum();
    let size: f64 = lin.control.iter().flatten().map(|a| a * a).sum();
    assert!(diff.sqrt() <= 1e-6 * size.sqrt());
    assert!((semi.terminal_residual / lin.terminal_residual - 1.0).abs() < 1e-6);
}

#[test]
fn semilinear_control_avoids_blow_up() {
    let t = 0.4;
    let g = Grid::unit_interval(49, t, 400).unwrap();
    let geo = make_control_geometry(&Domain::unit(1), &[-0.1], 0.15, t)
        .unwrap()
        .with_omega(&[0.3], &[0.6])
        .unwrap();
    let coef = CoefficientField::laplacian();
    let mode = g.dirichlet_mode(&[1]);
    let a = blow_up_threshold(&coef, &g, &mode, 1.2, 1.0, 1e12, 1e-3)
        .unwrap()
        .unwrap();
    let y0: GridFunction = mode.scale(1.1 * a);
    assert!(solve_semilinear_heat(&coef, &g, &y0, None, 1.2, -1.0)
        .unwrap()
        .blew_up());
    let r = semilinear_null_control(
        &coef,
        &g,
        &geo,
        &y0,
        1.2,
        1e-6,
        20,
        SemilinearOptions::default(),
    )
    .unwrap();
    assert!(r.relative_residual <= 1e-2, "{}", r.relative_residual);
    assert!(r.outer_history.len() <= 20);
    let big = semilinear_null_control(
        &coef,
        &g,
        &geo,
        &g.zeros(),
        1.7,
        1e-6,
        2,
        SemilinearOptions::default(),
    )
    .unwrap();
    assert_eq!(big.warnings.len(), 1);
}
