//! The experiments behind each subcommand.

use exclusion_core::boundary::RateModel;
use exclusion_core::ldp::{decompose_i, eval_i, eval_j, DecompositionReport, LdpOptions, PathDensity};
use exclusion_core::pde::{
    classify_stability, mass_balance_residual, parabolic_bounds_check, solve_hydro, solve_perturbed, stationary_profiles, write_binary,
    write_csv, DensityField, Grid, SolverOptions, Stability,
};
use exclusion_core::profile::Profile;
use exclusion_core::sim::{dynkin_residual, SimConfig, TrajectoryRecord};
use exclusion_core::testfn::TestFunction;
use serde::Serialize;

use crate::config::{ExperimentConfig, ExperimentKind};
use crate::ensemble::{mean_se, run_ensemble, sample_variance};
use crate::report::{compare, pde_pairings, ComparisonReport};
use crate::{Artifact, Assertion, HarnessError, Outcome};

/// Replica stream shared by every ensemble, so that a zero tilt reproduces
/// the untilted runs.
const STREAM: u64 = 0;

fn csv_bytes<T: Serialize>(rows: impl IntoIterator<Item = T>) -> Result<Vec<u8>, HarnessError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).map_err(|e| HarnessError::Io(e.to_string()))?;
    }
    w.into_inner().map_err(|e| HarnessError::Io(e.to_string()))
}

fn json_bytes<T: Serialize>(v: &T) -> Result<Vec<u8>, HarnessError> {
    let mut out = serde_json::to_vec_pretty(v).map_err(|e| HarnessError::Io(e.to_string()))?;
    out.push(b'\n');
    Ok(out)
}

fn observables(cfg: &ExperimentConfig) -> Result<(Vec<TestFunction<f64>>, Vec<String>), HarnessError> {
    let hs = cfg.observables.iter().map(|o| o.build(cfg.t_final)).collect::<Result<Vec<_>, _>>()?;
    let mut labels: Vec<String> = cfg.observables.iter().map(|o| o.label()).collect();
    for (i, l) in labels.iter_mut().enumerate() {
        if l == "H" {
            *l = format!("H{i}");
        }
    }
    Ok((hs, labels))
}

/// Tilt in the lightest representation: static affine and sine tilts need
/// no time degree.
fn sim_tilt(cfg: &ExperimentConfig) -> Result<Option<TestFunction<f64>>, HarnessError> {
    cfg.tilt.as_ref().map(|t| t.build(0, 1, cfg.t_final)).transpose()
}

fn sim_config(cfg: &ExperimentConfig, n: usize, hs: &[TestFunction<f64>], tilt: Option<TestFunction<f64>>) -> SimConfig {
    let mut sc = SimConfig::new(n, cfg.t_final);
    sc.sample_times = cfg.sample_times();
    sc.observables = hs.to_vec();
    sc.tilt = tilt;
    sc.accumulate = cfg.dynkin;
    sc.snapshots = cfg.snapshots;
    sc
}

fn gamma_of(p: Profile) -> impl Fn(f64) -> f64 + Sync + Copy {
    move |x| p.eval(x)
}

fn solve(
    cfg: &ExperimentConfig,
    model: &RateModel<f64>,
    tilt: Option<&TestFunction<f64>>,
    n: usize,
    t_final: f64,
    opts: &SolverOptions,
) -> Result<DensityField<f64>, HarnessError> {
    let grid = Grid::new(n)?;
    let dt = cfg.grid.dt.unwrap_or_else(|| grid.explicit_dt());
    let gamma = gamma_of(cfg.initial);
    Ok(match tilt {
        Some(g) => solve_perturbed(&gamma, model, g, grid, dt, t_final, opts)?,
        None => solve_hydro(&gamma, model, grid, dt, t_final, opts)?,
    })
}

#[derive(Serialize)]
struct SampleRow<'a> {
    n: usize,
    replica: usize,
    t: f64,
    observable: &'a str,
    value: f64,
}

#[derive(Serialize)]
struct SnapshotRow<'a> {
    n: usize,
    replica: usize,
    t: f64,
    occupancy: &'a str,
}

#[derive(Serialize)]
struct DynkinRow<'a> {
    n: usize,
    replica: usize,
    observable: &'a str,
    martingale: f64,
}

#[derive(Serialize)]
struct EventRow {
    n: usize,
    replica: usize,
    bulk: u64,
    left: u64,
    right: u64,
    rejected: u64,
}

fn ensembles(cfg: &ExperimentConfig, model: &RateModel<f64>, hs: &[TestFunction<f64>], tilt: Option<TestFunction<f64>>) -> Result<Vec<Vec<TrajectoryRecord>>, HarnessError> {
    let gamma = gamma_of(cfg.initial);
    cfg.sizes
        .iter()
        .map(|&n| {
            let sc = sim_config(cfg, n, hs, tilt.clone());
            Ok(run_ensemble(&sc, model, &gamma, cfg.seed, cfg.replicas, STREAM)?)
        })
        .collect()
}

pub fn simulate(cfg: &ExperimentConfig, model: &RateModel<f64>) -> Result<Outcome, HarnessError> {
    let (hs, labels) = observables(cfg)?;
    let runs = ensembles(cfg, model, &hs, sim_tilt(cfg)?)?;
    let mut samples = Vec::new();
    let mut snaps = Vec::new();
    let mut dynkin = Vec::new();
    let mut events = Vec::new();
    let mut complete = true;
    for (&n, ens) in cfg.sizes.iter().zip(&runs) {
        for (r, rec) in ens.iter().enumerate() {
            complete &= rec.values.len() == rec.sample_times.len();
            for (k, &t) in rec.sample_times.iter().enumerate() {
                for (j, l) in labels.iter().enumerate() {
                    samples.push(SampleRow { n, replica: r, t, observable: l, value: rec.values[k][j] });
                }
                if let Some(s) = &rec.snapshots {
                    snaps.push(SnapshotRow { n, replica: r, t, occupancy: &s[k] });
                }
            }
            if cfg.dynkin {
                for (j, l) in labels.iter().enumerate() {
                    dynkin.push(DynkinRow { n, replica: r, observable: l, martingale: dynkin_residual(rec, j)? });
                }
            }
            let c = rec.counters;
            events.push(EventRow { n, replica: r, bulk: c.bulk, left: c.left, right: c.right, rejected: c.rejected });
        }
    }
    let mut files = vec![Artifact::new("trajectories.csv", csv_bytes(samples)?), Artifact::new("events.csv", csv_bytes(events)?)];
    if cfg.snapshots {
        files.push(Artifact::new("snapshots.csv", csv_bytes(snaps)?));
    }
    if cfg.dynkin {
        files.push(Artifact::new("dynkin.csv", csv_bytes(dynkin)?));
    }
    let samples_per_replica = cfg.sample_times().len();
    Ok(Outcome {
        files,
        assertions: vec![Assertion::new("every replica recorded every sample time", complete, format!("{samples_per_replica} samples per replica"))],
        summary: serde_json::json!({ "sizes": cfg.sizes, "replicas": cfg.replicas, "samples_per_replica": samples_per_replica }),
    })
}

#[derive(Serialize)]
struct MassRow {
    t: f64,
    residual: f64,
}

pub fn pde(cfg: &ExperimentConfig, model: &RateModel<f64>) -> Result<Outcome, HarnessError> {
    let p = cfg.ldp.options;
    let tilt = cfg.tilt.as_ref().map(|t| t.build(p.p, p.j, cfg.t_final)).transpose()?;
    let field = solve(cfg, model, tilt.as_ref(), cfg.grid.n, cfg.t_final, &cfg.grid.solver)?;
    let mut csv = Vec::new();
    write_csv(&field, &mut csv)?;
    let mass = mass_balance_residual(&field, model)?;
    let rows = mass.iter().enumerate().map(|(k, &r)| MassRow { t: field.time(k), residual: r });
    let mut files = vec![Artifact::new("field.csv", csv), Artifact::new("mass_balance.csv", csv_bytes(rows)?)];
    if cfg.binary {
        let mut bin = Vec::new();
        write_binary(&field, &mut bin)?;
        files.push(Artifact::new("field.bin", bin));
    }
    let bounds = parabolic_bounds_check(&field, None);
    let max_mass = mass.iter().fold(0.0f64, |a, r| a.max(r.abs()));
    let assertions = vec![
        Assertion::new("density stays in [0, 1]", bounds.is_ok(), format!("{bounds:?}")),
        Assertion::new("mass balance residual is finite", max_mass.is_finite(), format!("max |residual| = {max_mass:e}")),
    ];
    Ok(Outcome {
        files,
        assertions,
        summary: serde_json::json!({
            "n": field.grid().n(),
            "dt": field.dt(),
            "frames": field.frames(),
            "model_hash": field.model_hash(),
            "max_mass_residual": max_mass,
            "bounds": bounds.ok(),
        }),
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct StationaryRow {
    pub alpha: f64,
    pub beta: f64,
    pub residual_left: f64,
    pub residual_right: f64,
    pub stability: Option<Stability>,
}

pub fn stationary(cfg: &ExperimentConfig, model: &RateModel<f64>) -> Result<Outcome, HarnessError> {
    let s = &cfg.stationary;
    let profiles = stationary_profiles(model, s.resolution, s.tol)?;
    let mut rows = Vec::with_capacity(profiles.len());
    for p in &profiles {
        let stability = if s.classify { Some(classify_stability(model, p, s.delta, s.t_final)?) } else { None };
        rows.push(StationaryRow { alpha: p.alpha, beta: p.beta, residual_left: p.residual_left, residual_right: p.residual_right, stability });
    }
    let worst = rows.iter().fold(0.0f64, |a, r| a.max(r.residual_left).max(r.residual_right));
    let assertions = vec![
        Assertion::new("at least one stationary profile", !rows.is_empty(), format!("{} found", rows.len())),
        Assertion::new("boundary residuals below 1e-9", worst <= 1e-9, format!("max residual {worst:e}")),
    ];
    let files = vec![
        Artifact::new("stationary.json", json_bytes(&serde_json::json!({ "profiles": rows }))?),
        Artifact::new("stationary.csv", csv_bytes(&rows)?),
    ];
    Ok(Outcome { files, assertions, summary: serde_json::json!({ "profiles": rows.len() }) })
}

fn comparison_outcome(report: ComparisonReport) -> Result<Outcome, HarnessError> {
    let v = &report.verdict;
    let mut assertions = vec![Assertion::new(
        "sup-gap non-increasing in N up to 2 standard errors",
        v.non_increasing,
        format!("sup gaps {:?}", report.summary.iter().map(|s| s.sup_gap).collect::<Vec<_>>()),
    )];
    if let Some(g) = v.max_final_gap {
        assertions.push(Assertion::new("final sup-gap within tolerance", v.final_gap_ok, format!("{} <= {g}", v.final_sup_gap)));
    }
    let files = vec![
        Artifact::new("comparison.csv", csv_bytes(&report.rows)?),
        Artifact::new("summary.csv", csv_bytes(&report.summary)?),
        Artifact::new("report.json", json_bytes(&report)?),
    ];
    Ok(Outcome {
        files,
        assertions,
        summary: serde_json::json!({ "se_available": report.se_available, "verdict": report.verdict }),
    })
}

/// Ensemble means against the PDE reference; the tilted equation when
/// `tilted` is set.
pub fn comparison(cfg: &ExperimentConfig, model: &RateModel<f64>, tilted: bool) -> Result<ComparisonReport, HarnessError> {
    let (hs, labels) = observables(cfg)?;
    let tilt = if tilted { sim_tilt(cfg)? } else { None };
    let field = solve(cfg, model, tilt.as_ref(), cfg.grid.n, cfg.t_final, &cfg.grid.solver)?;
    let times = cfg.sample_times();
    let pde = pde_pairings(&field, &times, &hs);
    let runs = ensembles(cfg, model, &hs, tilt)?;
    let name = if tilted { ExperimentKind::TiltCompare } else { ExperimentKind::HydroCompare };
    Ok(compare(&name.to_string(), &cfg.sizes, &runs, &labels, &times, &pde, cfg.max_final_gap))
}

pub fn hydro_compare(cfg: &ExperimentConfig, model: &RateModel<f64>) -> Result<Outcome, HarnessError> {
    comparison_outcome(comparison(cfg, model, false)?)
}

pub fn tilt_compare(cfg: &ExperimentConfig, model: &RateModel<f64>) -> Result<Outcome, HarnessError> {
    comparison_outcome(comparison(cfg, model, true)?)
}

#[derive(Debug, Clone, Serialize)]
pub struct HydroLdpRow {
    pub i: f64,
    pub iterations: usize,
    pub grad_norm: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct BatteryRow {
    pub tilt: String,
    pub i: f64,
    pub j_argmax: f64,
    pub j_tilt: f64,
    pub sup_distance: f64,
    /// The tilt lies in the optimisation basis.
    pub in_span: bool,
    pub decomposition: DecompositionReport,
}

#[derive(Debug, Clone, Serialize)]
pub struct LdpReport {
    pub hydro: HydroLdpRow,
    pub battery: Vec<BatteryRow>,
}

fn in_span(g: &TestFunction<f64>, o: &LdpOptions) -> bool {
    g.basis() == o.free_basis && g.p() <= o.p && g.j() <= o.j
}

/// Zero-cost check on the hydrodynamic path and the tilt battery.
pub fn ldp_report(cfg: &ExperimentConfig, model: &RateModel<f64>) -> Result<LdpReport, HarnessError> {
    let o = cfg.ldp.options;
    let gamma = gamma_of(cfg.initial);
    let field = solve(cfg, model, None, cfg.ldp.n, cfg.t_final, &cfg.grid.solver)?;
    let path = PathDensity::from_field(&field)?;
    let h = eval_i(&path, model, &gamma, &o)?;
    let hydro = HydroLdpRow { i: h.value, iterations: h.iterations, grad_norm: h.grad_norm };
    let mut battery = Vec::new();
    for spec in &cfg.ldp.battery {
        let g = spec.build(o.p, o.j, cfg.t_final)?;
        let field = solve(cfg, model, Some(&g), cfg.ldp.n, cfg.t_final, &cfg.grid.solver)?;
        let path = PathDensity::from_field(&field)?;
        let r = eval_i(&path, model, &gamma, &o)?;
        let j_argmax = eval_j(&path, &r.argmax, model, &gamma)?;
        let j_tilt = eval_j(&path, &g, model, &gamma)?;
        let sup_distance = r.argmax.sup_distance(&g, 64, 128);
        let decomposition = decompose_i(&path, model, &o)?;
        battery.push(BatteryRow { tilt: spec.label(), i: r.value, j_argmax, j_tilt, sup_distance, in_span: in_span(&g, &o), decomposition });
    }
    Ok(LdpReport { hydro, battery })
}

#[derive(Serialize)]
struct LdpCsvRow<'a> {
    path: &'a str,
    i: f64,
    i1: Option<f64>,
    i2: Option<f64>,
    residual: Option<f64>,
    tolerance: Option<f64>,
    j_argmax: Option<f64>,
    j_tilt: Option<f64>,
    sup_distance: Option<f64>,
}

pub fn ldp_check(cfg: &ExperimentConfig, model: &RateModel<f64>) -> Result<Outcome, HarnessError> {
    let report = ldp_report(cfg, model)?;
    let mut assertions = vec![Assertion::new("hydrodynamic path has I <= 1e-3", report.hydro.i <= 1e-3, format!("I = {:e}", report.hydro.i))];
    for b in &report.battery {
        let d = &b.decomposition;
        assertions.push(Assertion::new(
            format!("decomposition identity for G = {}", b.tilt),
            d.within_tolerance(),
            format!("|I - I1 - I2| = {:e}, tolerance {:e}", d.residual, d.tolerance),
        ));
        if b.in_span {
            let dj = (b.j_argmax - b.j_tilt).abs();
            assertions.push(Assertion::new(format!("argmax recovers G = {}", b.tilt), dj <= 1e-3 && b.sup_distance <= 0.05, format!("|dJ| = {dj:e}, sup distance {}", b.sup_distance)));
        }
    }
    let mut rows = vec![LdpCsvRow { path: "hydro", i: report.hydro.i, i1: None, i2: None, residual: None, tolerance: None, j_argmax: None, j_tilt: None, sup_distance: None }];
    rows.extend(report.battery.iter().map(|b| LdpCsvRow {
        path: &b.tilt,
        i: b.i,
        i1: Some(b.decomposition.i1),
        i2: Some(b.decomposition.i2),
        residual: Some(b.decomposition.residual),
        tolerance: Some(b.decomposition.tolerance),
        j_argmax: Some(b.j_argmax),
        j_tilt: Some(b.j_tilt),
        sup_distance: Some(b.sup_distance),
    }));
    let files = vec![Artifact::new("ldp.csv", csv_bytes(rows)?), Artifact::new("ldp.json", json_bytes(&report)?)];
    Ok(Outcome { files, assertions, summary: serde_json::json!({ "hydro_i": report.hydro.i, "battery": report.battery.len() }) })
}

#[derive(Debug, Clone, Serialize)]
pub struct GridRow {
    pub n: usize,
    /// Discrete `L2` distance at `T` to the next finer grid.
    pub l2_to_finer: Option<f64>,
    pub order: Option<f64>,
    pub max_mass_residual: f64,
    pub mass_ratio: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct DynkinRowSummary {
    pub n: usize,
    pub observable: String,
    pub mean: f64,
    pub se: Option<f64>,
    pub variance: Option<f64>,
}

/// Grid refinement of the PDE solver at `T`.
pub fn grid_study(cfg: &ExperimentConfig, model: &RateModel<f64>) -> Result<Vec<GridRow>, HarnessError> {
    let c = &cfg.convergence;
    let gamma = gamma_of(c.initial);
    let opts = SolverOptions { max_frames: usize::MAX, ..cfg.grid.solver };
    let mut finals = Vec::new();
    let mut mass = Vec::new();
    for &n in &c.grids {
        let grid = Grid::new(n)?;
        let f = solve_hydro(&gamma, model, grid, grid.explicit_dt(), c.t_final, &opts)?;
        mass.push(mass_balance_residual(&f, model)?.iter().fold(0.0f64, |a, r| a.max(r.abs())));
        finals.push(f.last().to_vec());
    }
    let dist: Vec<f64> = finals
        .windows(2)
        .map(|w| {
            let (a, b) = (&w[0], &w[1]);
            let n = a.len() - 1;
            let s: f64 = (0..=n).map(|i| (a[i] - b[2 * i]).powi(2) * if i == 0 || i == n { 0.5 } else { 1.0 }).sum();
            (s / n as f64).sqrt()
        })
        .collect();
    Ok((0..c.grids.len())
        .map(|k| GridRow {
            n: c.grids[k],
            l2_to_finer: dist.get(k).copied(),
            order: (k + 1 < dist.len()).then(|| (dist[k] / dist[k + 1]).log2()),
            max_mass_residual: mass[k],
            mass_ratio: (k > 0).then(|| mass[k - 1] / mass[k]),
        })
        .collect())
}

/// Dynkin martingales at `T` per lattice size and observable.
pub fn dynkin_study(cfg: &ExperimentConfig, model: &RateModel<f64>) -> Result<Vec<DynkinRowSummary>, HarnessError> {
    let (hs, labels) = observables(cfg)?;
    let mut c = cfg.clone();
    c.dynkin = true;
    c.snapshots = false;
    c.samples = 1;
    let runs = ensembles(&c, model, &hs, sim_tilt(cfg)?)?;
    let mut out = Vec::new();
    for (&n, ens) in cfg.sizes.iter().zip(&runs) {
        for (j, l) in labels.iter().enumerate() {
            let xs = ens.iter().map(|r| dynkin_residual(r, j)).collect::<Result<Vec<_>, _>>()?;
            let s = mean_se(&xs);
            out.push(DynkinRowSummary { n, observable: l.clone(), mean: s.mean, se: s.se, variance: sample_variance(&xs) });
        }
    }
    Ok(out)
}

pub fn convergence_study(cfg: &ExperimentConfig, model: &RateModel<f64>) -> Result<Outcome, HarnessError> {
    let grids = grid_study(cfg, model)?;
    let orders: Vec<f64> = grids.iter().filter_map(|g| g.order).collect();
    let mass_ratios: Vec<f64> = grids.iter().filter_map(|g| g.mass_ratio).collect();
    let mut assertions = vec![
        Assertion::new("spatial order in [1.8, 2.2]", orders.iter().all(|o| (1.8..=2.2).contains(o)), format!("orders {orders:?}")),
        Assertion::new("mass residual shrinks about 4x per doubling", mass_ratios.iter().all(|r| *r >= 3.5), format!("ratios {mass_ratios:?}")),
    ];
    let mut files = vec![Artifact::new("grid_convergence.csv", csv_bytes(&grids)?)];
    let mut dynkin = Vec::new();
    if !cfg.sizes.is_empty() {
        dynkin = dynkin_study(cfg, model)?;
        let centred = dynkin.iter().all(|d| d.se.is_none_or(|se| d.mean.abs() <= 3.0 * se));
        assertions.push(Assertion::new("Dynkin martingales centred within 3 standard errors", centred, String::new()));
        let k = cfg.observables.len();
        let shrinking = dynkin.windows(k + 1).all(|w| match (w[0].variance, w[k].variance) {
            (Some(a), Some(b)) => b < a,
            _ => true,
        });
        assertions.push(Assertion::new("Dynkin variance decreases with N", shrinking, String::new()));
        files.push(Artifact::new("dynkin.csv", csv_bytes(&dynkin)?));
    }
    Ok(Outcome { files, assertions, summary: serde_json::json!({ "grids": grids, "dynkin": dynkin }) })
}

pub fn dispatch(kind: ExperimentKind, cfg: &ExperimentConfig, model: &RateModel<f64>) -> Result<Outcome, HarnessError> {
    match kind {
        ExperimentKind::Simulate => simulate(cfg, model),
        ExperimentKind::Pde => pde(cfg, model),
        ExperimentKind::Stationary => stationary(cfg, model),
        ExperimentKind::HydroCompare => hydro_compare(cfg, model),
        ExperimentKind::TiltCompare => tilt_compare(cfg, model),
        ExperimentKind::LdpCheck => ldp_check(cfg, model),
        ExperimentKind::ConvergenceStudy => convergence_study(cfg, model),
    }
}
