use exclusion_core::boundary::{PfrakVariant, RateModel};
use exclusion_core::pde::{
    classify_stability, entropy_inequality_check, mass_balance_residual, parabolic_bounds_check, read_binary,
    solve_hydro, solve_perturbed, stationary_profiles, write_binary, DensityField, Grid, PdeError, Scheme,
    SolverOptions, Stability,
};
use exclusion_core::testfn::{SpaceBasis, TestFunction};
use proptest::prelude::*;
use std::f64::consts::PI;

fn l3() -> RateModel<f64> {
    RateModel::l3(1.0, 2.0, None).unwrap().0
}

const ROOT: f64 = 0.853_553_390_593_273_8;

fn all_frames(n: usize) -> (Grid, SolverOptions) {
    (Grid::new(n).unwrap(), SolverOptions { max_frames: usize::MAX, ..Default::default() })
}

fn hydro(gamma: &dyn Fn(f64) -> f64, n: usize, t: f64) -> DensityField<f64> {
    let (grid, opts) = all_frames(n);
    solve_hydro(gamma, &l3(), grid, grid.explicit_dt(), t, &opts).unwrap()
}

fn smooth(x: f64) -> f64 {
    0.5 + 0.3 * (PI * x).cos()
}

#[test]
fn half_filling_is_a_fixed_point() {
    let f = hydro(&|_| 0.5, 32, 0.2);
    assert!(f.values().iter().all(|v| (v - 0.5).abs() < 1e-14));
}

#[test]
fn upper_root_is_a_fixed_point() {
    let grid = Grid::new(64).unwrap();
    let f = solve_hydro(&|_| ROOT, &l3(), grid, grid.explicit_dt(), 1.0, &SolverOptions::default()).unwrap();
    let dev = f.values().iter().map(|v| (v - ROOT).abs()).fold(0.0, f64::max);
    assert!(dev < 1e-6, "{dev}");
}

fn l2_coarse_diff(coarse: &DensityField<f64>, fine: &DensityField<f64>) -> f64 {
    let a = coarse.last();
    let b = fine.last();
    let n = a.len() - 1;
    let s: f64 = (0..=n).map(|i| (a[i] - b[2 * i]).powi(2) * if i == 0 || i == n { 0.5 } else { 1.0 }).sum();
    (s / n as f64).sqrt()
}

#[test]
fn spatial_order_is_two() {
    let t = 0.1;
    let fields: Vec<_> = [32usize, 64, 128, 256]
        .iter()
        .map(|&n| {
            let grid = Grid::new(n).unwrap();
            let opts = SolverOptions { max_frames: 1, ..Default::default() };
            solve_hydro(&smooth, &l3(), grid, grid.explicit_dt(), t, &opts).unwrap()
        })
        .collect();
    let d: Vec<f64> = fields.windows(2).map(|w| l2_coarse_diff(&w[0], &w[1])).collect();
    for w in d.windows(2) {
        let order = (w[0] / w[1]).log2();
        assert!((1.8..=2.2).contains(&order), "order {order} from {d:?}");
    }
}

#[test]
fn mass_balance_converges_at_second_order() {
    let res: Vec<f64> = [32usize, 64, 128]
        .iter()
        .map(|&n| {
            // an asymmetric start: for smooth() the two boundary fluxes cancel
            let f = hydro(&|x| 0.3 + 0.4 * x * x, n, 0.1);
            mass_balance_residual(&f, &l3()).unwrap().iter().fold(0.0f64, |a, b| a.max(b.abs()))
        })
        .collect();
    for w in res.windows(2) {
        let order = (w[0] / w[1]).log2();
        assert!(order >= 1.8, "{res:?}");
    }
}

#[test]
fn mass_balance_vanishes_at_a_root() {
    let f = hydro(&|_| ROOT, 32, 0.1);
    assert!(mass_balance_residual(&f, &l3()).unwrap().iter().all(|r| r.abs() < 1e-13));
}

#[test]
fn annihilating_model_balances_a_full_start() {
    let model = RateModel::single_site((0.0, 1.0), (0.0, 1.0)).unwrap();
    let grid = Grid::new(32).unwrap();
    let opts = SolverOptions { max_frames: usize::MAX, ..Default::default() };
    let f = solve_hydro(&|_| 1.0, &model, grid, grid.explicit_dt(), 0.2, &opts).unwrap();
    let mass = f.pairing(f.frames() - 1, |_| 1.0);
    assert!(mass < 0.9);
    let r: Vec<f64> = mass_balance_residual(&f, &model).unwrap();
    assert!(r.iter().all(|v| v.abs() < 5.0 * grid.explicit_dt::<f64>()), "{:?}", r.last());
}

#[test]
fn zero_tilt_is_bitwise_identical() {
    let grid = Grid::new(32).unwrap();
    let opts = SolverOptions { max_frames: 20, ..Default::default() };
    let zero = TestFunction::zeros(SpaceBasis::Cosine, 3, 4, 0.1).unwrap();
    let a = solve_hydro(&smooth, &l3(), grid, grid.explicit_dt(), 0.1, &opts).unwrap();
    let b = solve_perturbed(&smooth, &l3(), &zero, grid, grid.explicit_dt(), 0.1, &opts).unwrap();
    assert_eq!(a.values(), b.values());
}

#[test]
fn tilted_mass_balance_is_small() {
    let grid = Grid::new(64).unwrap();
    let opts = SolverOptions { max_frames: usize::MAX, ..Default::default() };
    let g = TestFunction::affine(0.0, 0.5, 0, 1, 0.2).unwrap();
    let f = solve_perturbed(&smooth, &l3(), &g, grid, grid.explicit_dt(), 0.2, &opts).unwrap();
    let r = mass_balance_residual(&f, &l3()).unwrap();
    let worst = r.iter().fold(0.0f64, |a, b| a.max(b.abs()));
    assert!(worst < 5.0 * (grid.dx::<f64>().powi(2) + grid.explicit_dt::<f64>()), "{worst}");
}

#[test]
fn tilted_empty_start_stays_in_range() {
    let grid = Grid::new(32).unwrap();
    let g = TestFunction::affine(0.3, 0.5, 0, 1, 0.3).unwrap();
    let f = solve_perturbed(&|_| 0.0, &l3(), &g, grid, grid.explicit_dt(), 0.3, &SolverOptions::default()).unwrap();
    assert!(parabolic_bounds_check(&f, None).is_ok());
    assert!(f.last()[0] > 0.0);
}

#[test]
fn paper_variant_changes_the_tilted_flux_only() {
    let grid = Grid::new(16).unwrap();
    let g = TestFunction::affine(0.4, 0.0, 0, 1, 0.05).unwrap();
    let c = SolverOptions::default();
    let p = SolverOptions { pfrak: PfrakVariant::Paper, ..c };
    let a = solve_perturbed(&smooth, &l3(), &g, grid, grid.explicit_dt(), 0.05, &c).unwrap();
    let b = solve_perturbed(&smooth, &l3(), &g, grid, grid.explicit_dt(), 0.05, &p).unwrap();
    assert_ne!(a.last(), b.last());
}

#[test]
fn crank_nicolson_agrees_with_explicit() {
    let grid = Grid::new(64).unwrap();
    let ex = solve_hydro(&smooth, &l3(), grid, grid.explicit_dt(), 0.1, &SolverOptions::default()).unwrap();
    let cn_opts = SolverOptions { scheme: Scheme::CrankNicolson, ..Default::default() };
    let cn = solve_hydro(&smooth, &l3(), grid, 1e-4, 0.1, &cn_opts).unwrap();
    let diff = ex.last().iter().zip(cn.last()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    assert!(diff < 1e-4, "{diff}");
}

#[test]
fn crank_nicolson_with_tilt_agrees_with_explicit() {
    let grid = Grid::new(64).unwrap();
    let g = TestFunction::from_coefficients(SpaceBasis::Cosine, 1, 1, 0.1, vec![0.2, 0.4, -0.1, 0.6]).unwrap();
    let ex = solve_perturbed(&smooth, &l3(), &g, grid, grid.explicit_dt(), 0.1, &SolverOptions::default()).unwrap();
    let cn_opts = SolverOptions { scheme: Scheme::CrankNicolson, ..Default::default() };
    let cn = solve_perturbed(&smooth, &l3(), &g, grid, 1e-4, 0.1, &cn_opts).unwrap();
    let diff = ex.last().iter().zip(cn.last()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    assert!(diff < 1e-4, "{diff}");
}

#[test]
fn initial_frame_samples_gamma() {
    let f = hydro(&smooth, 16, 0.01);
    for (i, v) in f.frame(0).iter().enumerate() {
        assert_eq!(*v, smooth(i as f64 / 16.0));
    }
    assert!(matches!(
        solve_hydro(&|x| 1.5 * x, &l3(), Grid::new(16).unwrap(), 1e-4, 0.1, &SolverOptions::default()),
        Err(PdeError::InitialRange { .. })
    ));
    assert!(matches!(Grid::new(4), Err(PdeError::GridSize(4))));
}

#[test]
fn cell_averages_smooth_a_jump() {
    let grid = Grid::new(16).unwrap();
    let step = |x: f64| if x < 0.5 { 0.2 } else { 0.8 };
    let opts = SolverOptions { cell_average: true, max_frames: 1, ..Default::default() };
    let f = solve_hydro(&step, &l3(), grid, grid.explicit_dt(), 0.0, &opts).unwrap();
    assert!((f.frame(0)[8] - 0.5).abs() < 1e-12);
    assert!((f.frame(0)[0] - 0.2).abs() < 1e-15);
}

#[test]
fn three_stationary_profiles() {
    let p = stationary_profiles(&l3(), 1000, 1e-12).unwrap();
    let expected = [0.5 - 0.5 * 0.5f64.sqrt(), 0.5, 0.5 + 0.5 * 0.5f64.sqrt()];
    assert_eq!(p.len(), 3, "{p:?}");
    for (prof, e) in p.iter().zip(expected) {
        assert!((prof.alpha - e).abs() < 1e-10 && (prof.beta - e).abs() < 1e-10, "{prof:?}");
        assert!(prof.residual_left < 1e-10 && prof.residual_right < 1e-10);
    }
}

#[test]
fn linear_reservoirs_have_one_profile() {
    let model = RateModel::single_site((0.7, 0.4), (0.2, 1.1)).unwrap();
    let p = stationary_profiles(&model, 500, 1e-12).unwrap();
    assert_eq!(p.len(), 1);
    // -F_-(a) = b - a and F_+(b) = b - a with F(r) = in (1 - r) - out r
    let (a, b) = (p[0].alpha, p[0].beta);
    assert!((-(0.7 * (1.0 - a) - 0.4 * a) - (b - a)).abs() < 1e-10);
    assert!(((0.2 * (1.0 - b) - 1.1 * b) - (b - a)).abs() < 1e-10);
}

#[test]
fn stationary_profiles_are_fixed_points() {
    let grid = Grid::new(64).unwrap();
    for p in stationary_profiles(&l3(), 1000, 1e-12).unwrap() {
        let f = solve_hydro(&|x| p.eval(x), &l3(), grid, grid.explicit_dt(), 1.0, &SolverOptions::default()).unwrap();
        for k in 0..f.frames() {
            for (i, v) in f.frame(k).iter().enumerate() {
                assert!((v - p.eval(grid.node(i))).abs() < 1e-6);
            }
        }
    }
}

#[test]
fn stability_labels_for_l3() {
    let p = stationary_profiles(&l3(), 1000, 1e-12).unwrap();
    let labels: Vec<_> = p.iter().map(|q| classify_stability(&l3(), q, 0.01, 1.0).unwrap()).collect();
    assert_eq!(labels, vec![Stability::Stable, Stability::Unstable, Stability::Stable]);
}

#[test]
fn bounds_check_reports_margin() {
    let half = DensityField::from_frames(Grid::new(8).unwrap(), 0.1, vec![vec![0.5; 9]; 3], "h").unwrap();
    assert_eq!(parabolic_bounds_check(&half, None).unwrap().epsilon, 0.5);
    let f = {
        let grid = Grid::new(128).unwrap();
        solve_hydro(&|x| x, &l3(), grid, grid.explicit_dt(), 1.0, &SolverOptions::default()).unwrap()
    };
    assert!(parabolic_bounds_check(&f, None).unwrap().epsilon > 0.0);
    let mut frames = vec![vec![0.5; 9]; 3];
    frames[2][4] = 1.2;
    let bad = DensityField::from_frames(Grid::new(8).unwrap(), 0.1, frames, "h").unwrap();
    match parabolic_bounds_check(&bad, None) {
        Err(PdeError::Bounds { t, x, value }) => {
            assert!((t - 0.2).abs() < 1e-12 && x == 0.5 && value == 1.2);
        }
        other => panic!("{other:?}"),
    }
}

#[test]
fn entropy_check_at_root_and_away() {
    let f = hydro(&|_| ROOT, 32, 0.2);
    let r = entropy_inequality_check(&f, &l3(), 1e-12).unwrap();
    assert!(r.min_c0 < 1e-10 && r.holds, "{}", r.min_c0);
    let c = |n: usize| {
        let grid = Grid::new(n).unwrap();
        let f = solve_hydro(&|_| 0.3, &l3(), grid, grid.explicit_dt(), 0.5, &SolverOptions::default()).unwrap();
        entropy_inequality_check(&f, &l3(), 10.0).unwrap().min_c0
    };
    let (c64, c128) = (c(64), c(128));
    assert!(c128.is_finite() && c128 > 0.0);
    assert!((c64 - c128).abs() < 0.05 * c128, "{c64} vs {c128}");
    let touching = DensityField::from_frames(Grid::new(8).unwrap(), 0.1, vec![vec![0.5; 9], vec![0.0; 9]], "h").unwrap();
    assert!(matches!(entropy_inequality_check(&touching, &l3(), 1.0), Err(PdeError::Singular { .. })));
}

#[test]
fn binary_dump_round_trips_through_a_file() {
    let f = hydro(&smooth, 16, 0.01);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("field.bin");
    write_binary(&f, std::fs::File::create(&path).unwrap()).unwrap();
    let g = read_binary(std::fs::File::open(&path).unwrap()).unwrap();
    assert_eq!(g.values(), f.values());
    assert_eq!(g.model_hash(), l3().content_hash());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn maximum_principle(c in proptest::collection::vec(-0.15f64..0.15, 4), mean in 0.2f64..0.8, a in 0.5f64..3.0, d in 0.1f64..2.0) {
        let model = RateModel::l3(a, a + d, None).unwrap().0;
        let gamma = |x: f64| {
            let v = mean + c.iter().enumerate().map(|(k, ck)| ck * ((k + 1) as f64 * PI * x).cos()).sum::<f64>();
            v.clamp(0.0, 1.0)
        };
        let grid = Grid::new(24).unwrap();
        let f = solve_hydro(&gamma, &model, grid, grid.explicit_dt(), 0.3, &SolverOptions { max_frames: 50, ..Default::default() }).unwrap();
        prop_assert!(f.values().iter().all(|v| (0.0..=1.0).contains(v)));
    }
}
