use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use num_complex::Complex;
use qfilter::gaussian::{
    apply_kernel, coefficient_ensemble, coefficient_stats, estimate_moment, hermite_synthesis, propagate_coefficients,
    relative_l2_error, small_time_beta, small_time_omega, write_moments_csv, DeterministicFlow, GaussianProfile,
    KernelParams, MomentOutcome, RealGrid,
};
use qfilter::linalg::hs_norm;
use qfilter::mixed::{
    hamiltonian_sensitivity, lindblad_rhs, master_growth_report, simulate_linear_master, simulate_nonlinear_master,
    simulate_vectorized_unraveling, solve_lindblad, spectral_decompose, trace_martingale_report,
};
use qfilter::operators::{
    build_hamiltonian_scaled, build_oscillator_ladder, build_position, check_dissipativity, ModelSpec, DEFAULT_SAMPLES,
};
use qfilter::pure::{
    galerkin_convergence, growth_report, lift_to_linear, martingale_report, normalize_trajectory, simulate_linear,
    simulate_nonlinear, Recording,
};
use qfilter::sde::{derive_seed, sample_path};
use qfilter::stats::{least_squares_slope, run_ensemble, Welford};
use qfilter::{BrownianPath, CVector};
use serde::Serialize;
use serde_json::{json, Value};

use crate::build;
use crate::config::{CouplingSpec, ExperimentConfig, Format, HamiltonianSpec, Task};
use crate::error::Result;
use crate::girsanov::girsanov_density_check;

fn sci(values: &[f64]) -> String {
    let parts: Vec<String> = values.iter().map(|v| format!("{v:.3e}")).collect();
    format!("[{}]", parts.join(", "))
}

/// Pass/fail outcome of one named check of a task.
#[derive(Clone, Debug, PartialEq, Serialize, serde::Deserialize)]
pub struct CheckOutcome {
    pub id: String,
    pub passed: bool,
    pub measured: String,
    pub tolerance: String,
}

/// Files written by a task, relative to its output directory.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TaskOutput {
    pub task: Task,
    pub summary: Value,
    pub checks: Vec<CheckOutcome>,
    pub files: Vec<PathBuf>,
}

struct Runner<'a> {
    config: &'a ExperimentConfig,
    out: &'a Path,
    parallel: bool,
    files: Vec<PathBuf>,
    checks: Vec<CheckOutcome>,
    summary: serde_json::Map<String, Value>,
}

fn collect<R>(results: Vec<qfilter::Result<R>>) -> Result<Vec<R>> {
    Ok(results.into_iter().collect::<qfilter::Result<Vec<_>>>()?)
}

impl<'a> Runner<'a> {
    fn seed(&self, stream: u64) -> u64 {
        derive_seed(self.config.run.master_seed, self.config.task.tag() * 16 + stream)
    }

    fn count(&self) -> u64 {
        self.config.run.trajectories
    }

    fn path(&self, channels: usize, stream: u64, i: u64) -> Result<Arc<BrownianPath>> {
        let run = &self.config.run;
        Ok(Arc::new(sample_path(channels, run.horizon, run.dt, self.seed(stream), i)?))
    }

    fn paths(&self, channels: usize, stream: u64) -> Result<Vec<Arc<BrownianPath>>> {
        (0..self.count()).map(|i| self.path(channels, stream, i)).collect()
    }

    fn recording(&self) -> Recording {
        Recording::every(self.config.stride())
    }

    fn create(&mut self, name: &str) -> Result<BufWriter<File>> {
        self.files.push(PathBuf::from(name));
        Ok(BufWriter::new(File::create(self.out.join(name))?))
    }

    fn write_table(&mut self, name: &str, header: &[&str], rows: &[Vec<f64>]) -> Result<()> {
        let mut w = csv::Writer::from_writer(self.create(name)?);
        w.write_record(header)?;
        for row in rows {
            w.write_record(row.iter().map(|v| v.to_string()))?;
        }
        w.flush()?;
        Ok(())
    }

    fn note(&mut self, key: &str, value: impl Serialize) -> Result<()> {
        self.summary.insert(key.into(), serde_json::to_value(value)?);
        Ok(())
    }

    fn check(&mut self, id: &str, passed: bool, measured: String, tolerance: String) {
        self.checks.push(CheckOutcome {
            id: id.into(),
            passed,
            measured,
            tolerance,
        });
    }

    fn pure_linear(&mut self) -> Result<()> {
        let cfg = self.config;
        let model = build::model(cfg.model()?)?;
        let x0 = build::initial_vector(&cfg.initial, model.dim());
        let rec = self.recording();
        let n = model.channels();
        let seed = self.seed(0);
        let run = &cfg.run;
        let trajs = collect(run_ensemble(self.count(), self.parallel, |i| {
            let y = Arc::new(sample_path(n, run.horizon, run.dt, seed, i)?);
            simulate_linear(&model, &x0, &y, rec)
        }))?;
        let (sigma, allowance) = (cfg.checks.sigma, cfg.checks.allowance);
        let report = martingale_report(&trajs, sigma, allowance)?;
        if cfg.writes(Format::Csv) {
            trajs[0].write_csv(self.create("trajectory_0.csv")?, 1)?;
            let rows: Vec<Vec<f64>> = (0..report.times.len())
                .map(|i| vec![report.times[i], report.mean[i], report.se[i], report.c_mean[i], report.c_se[i]])
                .collect();
            self.write_table("norm_martingale.csv", &["t", "mean_norm_sq", "se", "mean_c_norm_sq", "c_se"], &rows)?;
        }
        let worst = report
            .mean
            .iter()
            .zip(&report.se)
            .skip(1)
            .map(|(m, s)| (m - report.bound).abs() - sigma * s)
            .fold(f64::NEG_INFINITY, f64::max);
        self.check(
            "norm-martingale",
            !report.any_violated,
            format!("max(|E||chi||^2 - {}| - {sigma} SE) = {worst:.4e}", report.bound),
            format!("<= {allowance}"),
        );
        self.note("martingale", &report)?;
        if let Some(g) = &cfg.girsanov {
            let report = girsanov_density_check(
                &model,
                &x0,
                run.horizon,
                run.dt,
                self.count(),
                self.seed(1),
                self.seed(2),
                &g.functionals,
                self.parallel,
            )?;
            self.check(
                "girsanov-density",
                report.max_abs_z <= g.max_z,
                format!("max |z| = {:.3}", report.max_abs_z),
                format!("<= {}", g.max_z),
            );
            self.note("girsanov", &report)?;
        }
        Ok(())
    }

    fn pure_nonlinear(&mut self) -> Result<()> {
        let cfg = self.config;
        let model = build::model(cfg.model()?)?;
        let x0 = build::initial_vector(&cfg.initial, model.dim());
        let rec = self.recording();
        let paths = self.paths(model.channels(), 0)?;
        let trajs = collect(run_ensemble(self.count(), self.parallel, |i| {
            simulate_nonlinear(&model, &x0, &paths[i as usize], rec)
        }))?;
        let norm_defect = trajs
            .iter()
            .flat_map(|t| t.norm_sq().iter())
            .fold(0.0f64, |m, n| m.max((n - 1.0).abs()));
        let step_defect = trajs.iter().fold(0.0f64, |m, t| m.max(t.max_defect()));
        let populations: Vec<f64> = (0..model.dim())
            .map(|k| trajs.iter().map(|t| t.final_state()[k].norm_sqr()).sum::<f64>() / trajs.len() as f64)
            .collect();
        if cfg.writes(Format::Csv) {
            trajs[0].write_csv(self.create("trajectory_0.csv")?, 1)?;
        }
        self.check(
            "unit-norm",
            norm_defect <= 1e-12,
            format!("max | ||phi||^2 - 1 | = {norm_defect:.3e}"),
            "<= 1e-12".into(),
        );
        self.note("max_norm_defect", norm_defect)?;
        self.note("max_step_defect", step_defect)?;
        self.note("final_populations", populations)?;
        Ok(())
    }

    /// Root-mean-square over paths of `distance(path)` at `dt / 2^level`.
    fn refinement_study(
        &mut self,
        name: &str,
        distance: impl Fn(&Arc<BrownianPath>) -> qfilter::Result<f64> + Sync,
        channels: usize,
    ) -> Result<(Vec<f64>, Vec<f64>, f64)> {
        let levels = self.config.checks.levels;
        let dt = self.config.run.dt;
        let dts: Vec<f64> = (0..=levels).map(|l| dt / (1u64 << l) as f64).collect();
        let paths = self.paths(channels, 0)?;
        let per_path = collect(run_ensemble(self.count(), self.parallel, |i| {
            let base = &paths[i as usize];
            (0..=levels)
                .map(|l| {
                    if l == 0 {
                        distance(base)
                    } else {
                        distance(&Arc::new(base.refine(1 << l)?))
                    }
                })
                .collect::<qfilter::Result<Vec<f64>>>()
        }))?;
        let rms: Vec<f64> = (0..=levels)
            .map(|l| {
                let w: Welford = per_path.iter().map(|d| d[l] * d[l]).collect();
                w.mean().sqrt()
            })
            .collect();
        let worst_finest = per_path.iter().fold(0.0f64, |m, d| m.max(d[levels]));
        let rows: Vec<Vec<f64>> = dts.iter().zip(&rms).map(|(d, e)| vec![*d, *e]).collect();
        self.write_table(name, &["dt", "rms_distance"], &rows)?;
        Ok((dts, rms, worst_finest))
    }

    fn equivalence(&mut self) -> Result<()> {
        let cfg = self.config;
        let model = build::model(cfg.model()?)?;
        let x0 = build::initial_vector(&cfg.initial, model.dim());
        let distance = |p: &Arc<BrownianPath>| -> qfilter::Result<f64> {
            let non = simulate_nonlinear(&model, &x0, p, Recording::full())?;
            let (_, y) = lift_to_linear(&non)?;
            let lin = simulate_linear(&model, &x0, &y, Recording::full())?;
            let (back, _) = normalize_trajectory(&lin)?;
            Ok(back
                .states()
                .iter()
                .zip(non.states())
                .map(|(a, b)| (a - b).norm())
                .fold(0.0, f64::max))
        };
        let (dts, errs, _) = self.refinement_study("equivalence.csv", distance, model.channels())?;
        let order = fitted_order(&dts, &errs);
        let decreasing = errs.windows(2).all(|w| w[1] < w[0]);
        let min_order = cfg.checks.min_order;
        self.check(
            "round-trip",
            decreasing && order >= min_order,
            format!("order {order:.3}, errors {}", sci(&errs)),
            format!("decreasing, order >= {min_order}"),
        );
        self.note("dts", &dts)?;
        self.note("rms_round_trip_error", &errs)?;
        self.note("order", order)?;
        Ok(())
    }

    fn master_linear(&mut self) -> Result<()> {
        let cfg = self.config;
        let model = build::model(cfg.model()?)?;
        let g0 = build::initial_density(&cfg.initial, model.dim())?;
        let rec = self.recording();
        let paths = self.paths(model.channels(), 0)?;
        let trajs = collect(run_ensemble(self.count(), self.parallel, |i| {
            simulate_linear_master(&model, &g0, &paths[i as usize], rec)
        }))?;
        let (sigma, allowance) = (cfg.checks.sigma, cfg.checks.allowance);
        let report = trace_martingale_report(&trajs, sigma, allowance)?;
        if cfg.writes(Format::Csv) {
            let rows: Vec<Vec<f64>> = (0..report.times.len())
                .map(|i| vec![report.times[i], report.mean[i], report.se[i], report.c_mean[i], report.c_se[i]])
                .collect();
            self.write_table("trace_martingale.csv", &["t", "mean_trace", "se", "mean_c_norm", "c_se"], &rows)?;
        }
        if cfg.writes(Format::Jsonl) {
            trajs[0].write_jsonl(self.create("trajectory_0.jsonl")?)?;
        }
        let worst = report
            .mean
            .iter()
            .zip(&report.se)
            .skip(1)
            .map(|(m, s)| (m - report.bound).abs() - sigma * s)
            .fold(f64::NEG_INFINITY, f64::max);
        self.check(
            "trace-martingale",
            !report.any_violated && report.max_residual <= 1e-10,
            format!(
                "max(|E tr - {}| - {sigma} SE) = {worst:.4e}, pathwise residual {:.2e}",
                report.bound, report.max_residual
            ),
            format!("<= {allowance}, residual <= 1e-10"),
        );
        self.note("trace_martingale", &report)?;
        drop(trajs);
        if let Some(p) = &cfg.perturbation {
            let v = build::perturbation(&p.potential, p.norm, model.dim())?;
            let perturbed = Arc::new(model.with_hamiltonian(model.hamiltonian().add(&v)?)?);
            let report =
                hamiltonian_sensitivity(&model, &perturbed, &g0, &paths, rec, sigma, 0.0, self.parallel)?;
            let worst = report
                .lhs_mean
                .iter()
                .zip(&report.lhs_se)
                .zip(&report.rhs)
                .skip(1)
                .map(|((l, s), r)| l - sigma * s - r)
                .fold(f64::NEG_INFINITY, f64::max);
            self.check(
                "hamiltonian-sensitivity",
                !report.any_violated,
                format!("max(E tr|g1 - g2| - {sigma} SE - 2t||dH|| tr g0) = {worst:.4e}"),
                "<= 0".into(),
            );
            if cfg.writes(Format::Csv) {
                let rows: Vec<Vec<f64>> = (0..report.times.len())
                    .map(|i| vec![report.times[i], report.lhs_mean[i], report.lhs_se[i], report.rhs[i]])
                    .collect();
                self.write_table("sensitivity.csv", &["t", "mean_trace_distance", "se", "bound"], &rows)?;
            }
            self.note("sensitivity", &report)?;
        }
        Ok(())
    }

    fn master_nonlinear(&mut self) -> Result<()> {
        let cfg = self.config;
        let model = build::model(cfg.model()?)?;
        let rho0 = build::initial_density(&cfg.initial, model.dim())?;
        let rec = self.recording();
        let paths = self.paths(model.channels(), 0)?;
        let trajs = collect(run_ensemble(self.count(), self.parallel, |i| {
            simulate_nonlinear_master(&model, &rho0, &paths[i as usize], rec)
        }))?;
        let trace_defect = trajs
            .iter()
            .flat_map(|t| t.states().iter())
            .fold(0.0f64, |m, g| m.max((g.trace().re - 1.0).abs()));
        let min_eig = trajs
            .iter()
            .flat_map(|t| t.min_eigenvalues().iter())
            .fold(f64::INFINITY, |m, &e| m.min(e));
        let correction = trajs
            .iter()
            .flat_map(|t| t.hermitian_corrections().iter())
            .fold(0.0f64, |m, &c| m.max(c));
        if cfg.writes(Format::Jsonl) {
            trajs[0].write_jsonl(self.create("trajectory_0.jsonl")?)?;
        }
        self.check(
            "unit-trace",
            trace_defect <= 1e-10,
            format!("max |tr rho - 1| = {trace_defect:.3e}"),
            "<= 1e-10".into(),
        );
        self.note("max_trace_defect", trace_defect)?;
        self.note("min_eigenvalue", min_eig)?;
        self.note("max_hermitian_correction", correction)?;
        Ok(())
    }

    fn unravel(&mut self) -> Result<()> {
        let cfg = self.config;
        let model = build::model(cfg.model()?)?;
        let rho0 = build::initial_density(&cfg.initial, model.dim())?;
        let ens = spectral_decompose(&rho0)?;
        let distance = |p: &Arc<BrownianPath>| -> qfilter::Result<f64> {
            let (_, rec) = simulate_vectorized_unraveling(&model, &ens, p, Recording::full())?;
            let direct = simulate_nonlinear_master(&model, &rho0, p, Recording::full())?;
            Ok(rec
                .states()
                .iter()
                .zip(direct.states())
                .map(|(a, b)| hs_norm(&(a - b)))
                .fold(0.0, f64::max))
        };
        let (dts, errs, worst) = self.refinement_study("unravel.csv", distance, model.channels())?;
        let order = fitted_order(&dts, &errs);
        let (min_order, max_distance) = (cfg.checks.min_order, cfg.checks.max_distance);
        self.check(
            "unraveling-equivalence",
            order >= min_order && worst <= max_distance,
            format!("order {order:.3}, max distance at dt = {:e}: {worst:.3e}", dts[dts.len() - 1]),
            format!("order >= {min_order}, distance <= {max_distance}"),
        );
        self.note("rank", ens.len())?;
        self.note("dts", &dts)?;
        self.note("rms_max_hs_distance", &errs)?;
        self.note("finest_max_hs_distance", worst)?;
        self.note("order", order)?;
        Ok(())
    }

    fn lindblad(&mut self) -> Result<()> {
        let cfg = self.config;
        let mcfg = cfg.model()?;
        let model = build::model(mcfg)?;
        let g0 = build::initial_density(&cfg.initial, model.dim())?;
        let run = &cfg.run;
        let exact = solve_lindblad(&model, &g0, run.horizon, run.dt, self.recording())?;
        if cfg.writes(Format::Jsonl) {
            exact.write_jsonl(self.create("lindblad.jsonl")?)?;
        }
        let target = exact.final_state();
        let m = model.dim();
        if self.count() >= 2 {
            let paths = self.paths(model.channels(), 0)?;
            let finals = collect(run_ensemble(self.count(), self.parallel, |i| {
                simulate_linear_master(&model, &g0, &paths[i as usize], Recording::endpoints())
                    .map(|t| t.final_state().clone())
            }))?;
            let sigma = cfg.checks.sigma;
            let mut euler = g0.entries().clone();
            for _ in 0..run.steps() {
                euler += lindblad_rhs(&model, &euler) * Complex::new(run.dt, 0.0);
            }
            let mut worst_z = 0.0f64;
            let mut rows = Vec::new();
            for r in 0..m {
                for c in r..m {
                    for (part, pick) in [(0.0, (|z: Complex<f64>| z.re) as fn(Complex<f64>) -> f64), (1.0, |z| z.im)] {
                        if r == c && part == 1.0 {
                            continue;
                        }
                        let w: Welford = finals.iter().map(|g| pick(g[(r, c)])).collect();
                        let diff = w.mean() - pick(target[(r, c)]);
                        let bias = (pick(euler[(r, c)]) - pick(target[(r, c)])).abs();
                        let excess = diff.abs() - bias;
                        let z = if excess <= 0.0 { 0.0 } else { excess / w.standard_error() };
                        worst_z = worst_z.max(z);
                        rows.push(vec![
                            r as f64,
                            c as f64,
                            part,
                            w.mean(),
                            w.standard_error(),
                            pick(target[(r, c)]),
                            bias,
                        ]);
                    }
                }
            }
            if cfg.writes(Format::Csv) {
                self.write_table("ensemble_vs_lindblad.csv", &["row", "col", "imag", "mean", "se", "lindblad", "step_bias"], &rows)?;
            }
            self.check(
                "ensemble-mean",
                worst_z <= sigma,
                format!("max (|mean - lindblad| - step bias) / SE = {worst_z:.3} at t = {}", run.horizon),
                format!("<= {sigma}"),
            );
            self.note("max_componentwise_z", worst_z)?;
        }
        if let (2, HamiltonianSpec::Zero, [CouplingSpec::Annihilation { scale }]) =
            (mcfg.dim, &mcfg.hamiltonian, mcfg.couplings.as_slice())
        {
            let start = g0.entries()[(1, 1)].re;
            let predicted = (-scale * scale * run.horizon).exp() * start;
            let got = target[(1, 1)].re;
            let rel = if predicted == 0.0 { got.abs() } else { (got / predicted - 1.0).abs() };
            self.check(
                "qubit-decay",
                rel <= 0.01,
                format!("rho_ee(T) = {got:.6}, predicted {predicted:.6}, relative error {rel:.2e}"),
                "<= 1%".into(),
            );
        }
        let parts: Vec<&CheckOutcome> =
            self.checks.iter().filter(|c| c.id == "ensemble-mean" || c.id == "qubit-decay").collect();
        if parts.len() == 2 {
            let passed = parts.iter().all(|c| c.passed);
            let measured = parts.iter().map(|c| c.measured.as_str()).collect::<Vec<_>>().join("; ");
            let tolerance = parts.iter().map(|c| c.tolerance.as_str()).collect::<Vec<_>>().join("; ");
            self.check("lindblad-consistency", passed, measured, tolerance);
        }
        self.note("final_state_re", target.map(|z| z.re).as_slice())?;
        self.note("final_state_im", target.map(|z| z.im).as_slice())?;
        Ok(())
    }

    fn oracle_compare(&mut self) -> Result<()> {
        let cfg = self.config;
        let o = &cfg.oracle;
        let params = KernelParams::new(o.alpha, o.h)?;
        let m = o.dim;
        let model = Arc::new(ModelSpec::new(
            build_hamiltonian_scaled(0.5 * o.h, &|_| 0.0, m)?,
            vec![build_position(m)?.scale(Complex::new(o.alpha, 0.0))],
            build_oscillator_ladder(m, 1)?,
        )?);
        let grid = RealGrid::spanning(-o.half_width, o.half_width, o.grid_points)?;
        let ground = GaussianProfile::ground();
        let f = ground.sample(&grid);
        let mut chi0 = CVector::zeros(m);
        chi0[0] = Complex::new(1.0, 0.0);
        let paths = self.paths(1, 0)?;
        let results = collect(run_ensemble(self.count(), self.parallel, |i| {
            let y = &paths[i as usize];
            let traj = simulate_linear(&model, &chi0, y, Recording::endpoints())?;
            let galerkin = hermite_synthesis(traj.final_state(), &grid);
            let states = propagate_coefficients(params, y)?;
            let state = *states.last().expect("nonempty path");
            let kernel = apply_kernel(&state, &grid, &f)?;
            let closed = ground.propagate(&state)?.sample(&grid);
            Ok((
                relative_l2_error(&grid, &galerkin, &kernel),
                relative_l2_error(&grid, &kernel, &closed),
                state,
                galerkin,
                kernel,
            ))
        }))?;
        let worst = results.iter().fold(0.0f64, |m, r| m.max(r.0));
        let quadrature = results.iter().fold(0.0f64, |m, r| m.max(r.1));
        let steps = (o.small_t / o.small_dt).round() as usize;
        let flow = DeterministicFlow::new(params, o.small_dt, steps);
        let rel = |a: f64, b: f64| (a / b - 1.0).abs();
        let free = (params.ih() * o.small_t).inv();
        let omega_err = rel(flow.omega(steps).re, (small_time_omega(params, o.small_t) - free).re);
        let beta_err = rel(flow.beta(steps).re, (small_time_beta(params, o.small_t) - free).re);
        let (_, _, state, galerkin, kernel) = &results[0];
        if cfg.writes(Format::Csv) {
            let rows: Vec<Vec<f64>> = (0..grid.len)
                .map(|k| vec![grid.point(k), galerkin[k].re, galerkin[k].im, kernel[k].re, kernel[k].im])
                .collect();
            self.write_table("oracle_profiles.csv", &["x", "galerkin_re", "galerkin_im", "kernel_re", "kernel_im"], &rows)?;
        }
        let kernel_json = serde_json::to_vec_pretty(&state.to_json())?;
        std::fs::write(self.out.join("kernel.json"), kernel_json)?;
        self.files.push("kernel.json".into());
        let tol = o.small_time_tolerance;
        self.check(
            "oracle-agreement",
            worst <= o.max_relative_l2 && omega_err <= tol && beta_err <= tol,
            format!(
                "relative L2 {worst:.3e}; small-time Re omega {omega_err:.2e}, Re beta {beta_err:.2e} at t = {}",
                o.small_t
            ),
            format!("L2 <= {}, small-time <= {tol}", o.max_relative_l2),
        );
        self.note("max_relative_l2", worst)?;
        self.note("max_quadrature_vs_closed_form", quadrature)?;
        self.note("small_time_omega_error", omega_err)?;
        self.note("small_time_beta_error", beta_err)?;
        Ok(())
    }

    fn moments(&mut self) -> Result<()> {
        let cfg = self.config;
        let mc = &cfg.moments;
        let run = &cfg.run;
        let params = KernelParams::new(mc.alpha, mc.h)?;
        let samples =
            coefficient_ensemble(params, run.horizon, run.steps(), self.count(), self.seed(0), self.parallel)?;
        let stats = coefficient_stats(mc.alpha, run.horizon, &samples)?;
        let outcomes = mc
            .orders
            .iter()
            .map(|&p| estimate_moment(p, mc.alpha, run.horizon, &samples, None))
            .collect::<qfilter::Result<Vec<_>>>()?;
        write_moments_csv(&outcomes, self.create("moments.csv")?)?;
        let sigma = cfg.checks.sigma;
        self.check(
            "coefficient-stats",
            stats.max_z() <= sigma,
            format!(
                "Var a {:.4e}, Var b {:.4e}, Cov {:.4e} (targets {:.4e}, {:.4e}); max |z| {:.2}",
                stats.var_a,
                stats.var_b,
                stats.cov_ab,
                stats.target_var,
                stats.target_cov,
                stats.max_z()
            ),
            format!("<= {sigma} SE"),
        );
        let mut passed = true;
        let mut parts = Vec::new();
        for o in &outcomes {
            match o {
                MomentOutcome::Finite(e) => {
                    let exact = qfilter::gaussian::moment_closed_form(e.p).expect("finite below two");
                    let ok = e.estimate.is_finite() && e.estimate > 0.0;
                    let ok = match moment_tolerance(e.p) {
                        Some(tol) => ok && (e.estimate / exact - 1.0).abs() <= tol,
                        None => ok,
                    };
                    passed &= ok;
                    parts.push(format!("p={}: {:.4} (exact {:.4})", e.p, e.estimate, exact));
                }
                MomentOutcome::Divergent(d) => {
                    passed &= d.diverging;
                    parts.push(format!("p={}: diverging={} (Hill {:.3})", d.p, d.diverging, d.hill_index));
                }
            }
        }
        self.check(
            "moment-boundary",
            passed,
            parts.join("; "),
            "p<1 within 5%, 1<=p<1.5 within 10%, p<2 finite, p>=2 flagged".into(),
        );
        self.note("coefficient_stats", &stats)?;
        self.note("moments", &outcomes)?;
        Ok(())
    }

    fn dissipativity(&mut self) -> Result<()> {
        let cfg = self.config;
        let model = build::model(cfg.model()?)?;
        let report = check_dissipativity(&*model, DEFAULT_SAMPLES, self.seed(3));
        let alpha = report.alpha_hat;
        let x0 = build::initial_vector(&cfg.initial, model.dim());
        let g0 = build::initial_density(&cfg.initial, model.dim())?;
        let rec = self.recording();
        let paths = self.paths(model.channels(), 0)?;
        let sigma = cfg.checks.sigma;
        let pure = collect(run_ensemble(self.count(), self.parallel, |i| {
            simulate_linear(&model, &x0, &paths[i as usize], rec)
        }))?;
        let pure_report = growth_report(&pure, alpha, 0.0, sigma)?;
        drop(pure);
        let mixed = collect(run_ensemble(self.count(), self.parallel, |i| {
            simulate_linear_master(&model, &g0, &paths[i as usize], rec)
        }))?;
        let mixed_report = master_growth_report(&mixed, alpha, 0.0, sigma)?;
        if cfg.writes(Format::Csv) {
            let rows: Vec<Vec<f64>> = (0..pure_report.times.len())
                .map(|i| {
                    vec![
                        pure_report.times[i],
                        pure_report.mean[i],
                        pure_report.se[i],
                        pure_report.bound[i],
                        mixed_report.mean[i],
                        mixed_report.se[i],
                        mixed_report.bound[i],
                    ]
                })
                .collect();
            self.write_table(
                "growth.csv",
                &["t", "pure_mean", "pure_se", "pure_bound", "mixed_mean", "mixed_se", "mixed_bound"],
                &rows,
            )?;
        }
        let margin = |r: &qfilter::pure::GrowthReport| {
            r.mean
                .iter()
                .zip(&r.se)
                .zip(&r.bound)
                .skip(1)
                .map(|((m, s), b)| m - sigma * s - b)
                .fold(f64::NEG_INFINITY, f64::max)
        };
        self.check(
            "growth-bounds",
            !pure_report.any_violated && !mixed_report.any_violated,
            format!(
                "alpha {alpha:.4}; max(mean - {sigma} SE - bound): pure {:.4e}, mixed {:.4e}",
                margin(&pure_report),
                margin(&mixed_report)
            ),
            "<= 0".into(),
        );
        self.note("dissipativity", &report)?;
        self.note("pure_growth", &pure_report)?;
        self.note("mixed_growth", &mixed_report)?;
        Ok(())
    }

    fn convergence(&mut self) -> Result<()> {
        let cfg = self.config;
        let mcfg = cfg.model()?;
        let dims = &cfg.convergence.dims;
        let family = dims
            .iter()
            .map(|&m| build::model_at(mcfg, m))
            .collect::<qfilter::Result<Vec<_>>>()?;
        let x0 = build::initial_vector(&cfg.initial, dims[0]);
        let paths = self.paths(family[0].channels(), 0)?;
        let table = galerkin_convergence(&family, &x0, &paths, self.parallel)?;
        let rows: Vec<Vec<f64>> = (0..table.dims.len())
            .map(|i| {
                vec![
                    table.dims[i] as f64,
                    table.lambdas[i],
                    table.mean_sq_error[i],
                    table.se[i],
                    table.rms_error[i],
                ]
            })
            .collect();
        self.write_table("convergence.csv", &["m", "lambda_m", "mean_sq_error", "se", "rms_error"], &rows)?;
        let slope = table.slope.unwrap_or(f64::NAN);
        let min_order = cfg.checks.min_order;
        self.check(
            "galerkin-convergence",
            table.strictly_decreasing && slope <= -min_order,
            format!("slope {slope:.3}, errors {}", sci(&table.mean_sq_error)),
            format!("strictly decreasing, slope <= -{min_order}"),
        );
        self.note("table", &table)?;
        Ok(())
    }
}

/// Accepted relative error of a moment estimate of order `p`, or `None`
/// where only finiteness is required.
pub fn moment_tolerance(p: f64) -> Option<f64> {
    if p < 1.0 {
        Some(0.05)
    } else if p < 1.5 {
        Some(0.10)
    } else {
        None
    }
}

/// Least-squares slope of `ln error` against `ln dt`.
pub fn fitted_order(dts: &[f64], errors: &[f64]) -> f64 {
    let x: Vec<f64> = dts.iter().map(|d| d.ln()).collect();
    let y: Vec<f64> = errors.iter().map(|e| e.ln()).collect();
    least_squares_slope(&x, &y)
}

/// Runs the configured task, writing data files into `out`.
pub fn run_task(config: &ExperimentConfig, out: &Path, parallel: bool) -> Result<TaskOutput> {
    let mut runner = Runner {
        config,
        out,
        parallel,
        files: Vec::new(),
        checks: Vec::new(),
        summary: serde_json::Map::new(),
    };
    match config.task {
        Task::PureLinear => runner.pure_linear()?,
        Task::PureNonlinear => runner.pure_nonlinear()?,
        Task::Equivalence => runner.equivalence()?,
        Task::MasterLinear => runner.master_linear()?,
        Task::MasterNonlinear => runner.master_nonlinear()?,
        Task::Unravel => runner.unravel()?,
        Task::Lindblad => runner.lindblad()?,
        Task::OracleCompare => runner.oracle_compare()?,
        Task::Moments => runner.moments()?,
        Task::Dissipativity => runner.dissipativity()?,
        Task::Convergence => runner.convergence()?,
    }
    let summary = json!({
        "task": config.task,
        "config_hash": config.hash(),
        "results": Value::Object(runner.summary),
        "checks": &runner.checks,
    });
    std::fs::write(out.join("summary.json"), serde_json::to_vec_pretty(&summary)?)?;
    runner.files.push("summary.json".into());
    Ok(TaskOutput {
        task: config.task,
        summary,
        checks: runner.checks,
        files: runner.files,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fitted_order_recovers_power_laws() {
        let dts = [4e-3, 2e-3, 1e-3];
        let errs: Vec<f64> = dts.iter().map(|d: &f64| 3.0 * d.powf(0.75)).collect();
        assert!((fitted_order(&dts, &errs) - 0.75).abs() < 1e-12);
    }

    #[test]
    fn moment_tolerances_tighten_away_from_the_boundary() {
        assert_eq!(moment_tolerance(0.5), Some(0.05));
        assert_eq!(moment_tolerance(1.0), Some(0.10));
        assert_eq!(moment_tolerance(1.5), None);
    }

    #[test]
    fn scientific_lists_format() {
        assert_eq!(sci(&[1.0, 0.25]), "[1.000e0, 2.500e-1]");
    }
}
