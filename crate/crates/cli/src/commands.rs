//! One function per subcommand. Each builds its CSV files and report in
//! memory and hands them to [`Outputs`] at the end.

use anyhow::{bail, Context, Result};
use lattice_cocycle::attractor::{approximate_attractor, attraction_check, invariance_residual};
use lattice_cocycle::diagnostics::{
    absorbing_check, absorbing_radius_sq, energy_series, tail_decay_check, tail_inequality_check, AbsorbOptions,
    InequalityOptions, TailOptions,
};
use lattice_cocycle::forcing::{compact_open_distance, hull_sample};
use lattice_cocycle::integrator::{integrate_sampled, uniform_times};
use lattice_cocycle::sampling::{ball_points, sphere_points};
use lattice_cocycle::{AttractorError, DiagnosticsError, EnsembleSpec, LatticeVector, SetSample};
use rayon::prelude::*;

use crate::config::{ExperimentConfig, ForcingKind, InitialKind};
use crate::output::{Csv, Outputs, Report};

/// Tolerance of the envelope and permanence checks.
const ENERGY_TOL: f64 = 1e-6;

pub struct CommandResult {
    pub report: Report,
    pub files: Vec<std::path::PathBuf>,
}

impl CommandResult {
    pub fn passed(&self) -> bool {
        self.report.passed()
    }
}

fn initial_states(cfg: &ExperimentConfig, radius: f64, count: usize) -> Vec<LatticeVector> {
    let n = cfg.lattice.window_radius;
    match cfg.run.initial {
        InitialKind::Sphere => sphere_points(n, count, radius, cfg.run.seed),
        InitialKind::Ball => ball_points(n, count, radius, cfg.run.seed),
        InitialKind::Zero => vec![LatticeVector::zeros(n); count],
        InitialKind::Unit => vec![LatticeVector::unit(n, 0).scale(radius); count],
    }
}

fn finish(report: Report, mut outputs: Outputs, name: &str) -> Result<CommandResult> {
    outputs.add(format!("{name}_report.txt"), report.text().to_string());
    let files = outputs.write()?;
    Ok(CommandResult { report, files })
}

pub fn simulate(cfg: &ExperimentConfig) -> Result<CommandResult> {
    let params = cfg.params()?;
    let g = cfg.forcing().shift(cfg.shifts()[0]);
    let v0 = &initial_states(cfg, cfg.run.seed_ball_radius, 1)[0];
    let times = uniform_times(cfg.run.t_final, cfg.run.sample_dt);
    let traj = integrate_sampled(&params, &g, v0, &times, &cfg.integrator())?;
    let c = g.sup_norm_bound();
    let energy = energy_series(&traj)?.with_envelope(&params, c);
    let p = cfg.output.precision;

    let mut trajectory = Csv::new(&["t", "i", "u_i"], p);
    for (t, u) in traj.iter() {
        for (i, x) in u.iter() {
            let row = [trajectory.num(t), i.to_string(), trajectory.num(x)];
            trajectory.row(&row);
        }
    }
    let mut energy_csv = Csv::new(&["t", "y", "envelope"], p);
    for ((t, y), e) in energy.times.iter().zip(&energy.y).zip(&energy.envelope) {
        let row = [energy_csv.num(*t), energy_csv.num(*y), energy_csv.num(*e)];
        energy_csv.row(&row);
    }

    let mut report = Report::default();
    report.title("simulate");
    report.info(format!("forcing {}, window N = {}", g.id(), cfg.lattice.window_radius));
    report.info(format!("C = {c:.6e}, y(0) = {:.6e}, y(T) = {:.6e}", energy.y[0], energy.y[energy.y.len() - 1]));
    report.check(
        &format!("y(t) <= envelope(t) + {ENERGY_TOL:e} at all {} samples", energy.y.len()),
        energy.domination_margin() + ENERGY_TOL,
    );

    let mut outputs = Outputs::new(&cfg.output.directory);
    outputs.add("trajectory.csv", trajectory.into_string());
    outputs.add("energy.csv", energy_csv.into_string());
    finish(report, outputs, "simulate")
}

pub fn absorb(cfg: &ExperimentConfig) -> Result<CommandResult> {
    let params = cfg.params()?;
    let shifts = cfg.shifts();
    let g_set = hull_sample(&cfg.forcing(), &shifts);
    let v0 = initial_states(cfg, cfg.run.seed_ball_radius, cfg.run.n_initial);
    let opts = AbsorbOptions {
        sample_dt: cfg.run.sample_dt,
        extra_time: cfg.run.t_final,
        tolerance: ENERGY_TOL,
    };
    let r = absorbing_check(&params, &g_set, &v0, &cfg.integrator(), &opts)?;
    let p = cfg.output.precision;

    let mut csv = Csv::new(
        &["run", "shift_h", "initial_norm_sq", "entry_time", "max_after_entry", "held"],
        p,
    );
    // runs are ordered initial-major, shift-minor
    for (j, run) in r.runs.iter().enumerate() {
        let h = shifts[j % shifts.len()];
        let row = [
            j.to_string(),
            csv.num(h),
            csv.num(run.initial_norm_sq),
            csv.num(run.entry_time.unwrap_or(f64::INFINITY)),
            csv.num(run.max_after_entry),
            run.held.to_string(),
        ];
        csv.row(&row);
    }

    let mut report = Report::default();
    report.title("absorb");
    report.info(format!("C = {:.6e}", r.sup_norm_bound));
    report.info(format!("R^2 = 1 + C^2/(lambda(lambda + 2 alpha)) = {:.6e}", r.r_squared));
    report.info(format!("initial radius r = {:.6e}, {} runs", r.initial_radius, r.runs.len()));
    report.info(format!("entry time (derived, 1/(lambda + 2 alpha)): {:.6e}", r.entry_time_pred.derived));
    report.info(format!(
        "entry time (paper-literal, 1/(lambda(lambda + 2 alpha))): {:.6e}",
        r.entry_time_pred.product_prefactor
    ));
    report.info(format!("latest observed entry time: {:.6e}", r.entry_time_obs));
    report.check(
        "every run enters ||u||^2 <= R^2 by the derived entry time + sample_dt",
        r.entry_time_pred.derived + r.sample_dt - r.entry_time_obs,
    );
    let max_after = r.runs.iter().map(|x| x.max_after_entry).fold(f64::NEG_INFINITY, f64::max);
    report.check(
        &format!("||u||^2 <= R^2 + {:e} after entry", r.tolerance),
        r.r_squared + r.tolerance - max_after,
    );

    let mut outputs = Outputs::new(&cfg.output.directory);
    outputs.add("entry_times.csv", csv.into_string());
    finish(report, outputs, "absorb")
}

pub fn tails(cfg: &ExperimentConfig) -> Result<CommandResult> {
    cfg.validate_tails()?;
    let params = cfg.params()?;
    let shifts = cfg.shifts();
    let g_set = hull_sample(&cfg.forcing(), &shifts);
    let q = absorbing_radius_sq(&params, g_set[0].sup_norm_bound());
    let radius = cfg.run.seed_ball_radius.min(q.sqrt());
    let initial = initial_states(cfg, radius, cfg.run.n_initial);
    let opts = TailOptions {
        cross_constant: cfg.run.cross_constant,
        sample_dt: cfg.run.sample_dt,
        k: cfg.run.k,
        ..TailOptions::default()
    };
    let mut report = Report::default();
    report.title("tails");
    report.info(format!("eps = {:e}, ||Q||^2 = R^2 = {q:.6e}", cfg.run.eps));

    let decay = match tail_decay_check(&params, &g_set, q, cfg.run.eps, &initial, &cfg.integrator(), &opts) {
        Err(DiagnosticsError::WindowTooSmall { k, window, min_window }) => {
            report.flag(
                "window compatibility 2k <= N",
                false,
                &format!("window too small: k = {k} needs N >= {min_window}, got N = {window}"),
            );
            let mut outputs = Outputs::new(&cfg.output.directory);
            outputs.add("tails_report.txt", report.text().to_string());
            outputs.write()?;
            bail!("window too small: k = {k} requires window_radius >= {min_window} (got {window})");
        }
        other => other?,
    };

    let p = cfg.output.precision;
    let mut outputs = Outputs::new(&cfg.output.directory);
    for (j, rec) in decay.records.iter().enumerate() {
        let mut csv = Csv::new(&["t", "weighted_tail", "raw_tail", "bound"], p);
        for ((t, w), r) in rec.times.iter().zip(&rec.weighted_tail).zip(&rec.raw_tail) {
            let row = [csv.num(*t), csv.num(*w), csv.num(*r), csv.num(decay.bound)];
            csv.row(&row);
        }
        outputs.add(format!("tails_{j:03}.csv"), csv.into_string());
    }

    report.info(format!(
        "k = {}, forcing tail index n(eps) = {}, T(eps) = {:.6e}{}",
        decay.k,
        decay.forcing_tail_index,
        decay.decay_time,
        if decay.decay_time <= 0.0 { " (<= 0: checked from t = 0)" } else { "" }
    ));
    report.check(
        &format!(
            "weighted tail <= 2 eps/alpha + {:e} = {:.6e} for t >= T(eps) (max {:.6e})",
            opts.tolerance,
            decay.bound + opts.tolerance,
            decay.max_weighted_after
        ),
        decay.margin,
    );

    let ineq_opts = InequalityOptions {
        cross_constant: cfg.run.cross_constant,
        sample_dt: cfg.run.sample_dt,
        horizon: cfg.run.t_final,
        ..InequalityOptions::default()
    };
    let ineq = tail_inequality_check(&params, &g_set, &initial, decay.k, q, &cfg.integrator(), &ineq_opts)?;
    report.flag(
        "dW/dt + alpha W <= budget + forcing tail + slack at >= 99% of samples",
        ineq.fraction() >= 0.99,
        &format!(
            "{}/{} samples, worst margin {:.6e}",
            ineq.satisfied, ineq.samples, ineq.worst_margin
        ),
    );
    for v in ineq.violations.iter().take(20) {
        report.info(format!("  violation t = {:.6e}: lhs {:.6e} > rhs {:.6e}", v.t, v.lhs, v.rhs));
    }
    finish(report, outputs, "tails")
}

pub fn attractor(cfg: &ExperimentConfig) -> Result<CommandResult> {
    let params = cfg.params()?;
    let forcing = cfg.forcing();
    let shifts = cfg.shifts();
    let spec = EnsembleSpec {
        hull_shifts: shifts.clone(),
        seed_ball_radius: cfg.run.seed_ball_radius,
        settle_time: cfg.run.settle_time,
        n_points: cfg.run.n_points,
        seed: cfg.run.seed,
        tail_margin: 1.0,
    };
    let integ = cfg.integrator();
    let approx = match approximate_attractor(&params, &forcing, &spec, &integ) {
        Err(AttractorError::SettleTooShort { given, minimum }) => {
            bail!("run.settle_time = {given} is shorter than the required minimum {minimum:.6e}")
        }
        other => other?,
    };
    let q = absorbing_radius_sq(&params, forcing.sup_norm_bound());
    let p = cfg.output.precision;

    let mut csv = Csv::new(&["shift_h", "point_id", "i", "u_i"], p);
    for (h, section) in approx.hull_shifts.iter().zip(&approx.sections) {
        for (id, u) in section.points().iter().enumerate() {
            for (i, x) in u.iter() {
                let row = [csv.num(*h), id.to_string(), i.to_string(), csv.num(x)];
                csv.row(&row);
            }
        }
    }

    let per_set = (cfg.run.n_points / 4).max(1);
    let n = cfg.lattice.window_radius;
    let tests: Vec<SetSample> = (1..=2)
        .map(|s| SetSample::new(ball_points(n, per_set, cfg.run.seed_ball_radius, cfg.run.seed.wrapping_add(s))))
        .collect();
    let ladder = attraction_check(&approx, &params, &tests, &cfg.run.ladder, &integ)?;

    let mut report = Report::default();
    report.title("attractor");
    report.info(format!(
        "{} shifts x {} points, settle time {:.6e}, R^2 = {q:.6e}",
        shifts.len(),
        cfg.run.n_points,
        approx.settle_time
    ));
    report.info(format!(
        "max section norm^2 {:.6e}, max section norm {:.6e}, resolution {:.6e}",
        approx.max_norm_sq(),
        approx.max_norm_sq().sqrt(),
        approx.resolution()
    ));
    report.check("all section points inside Q (norm^2 <= R^2 + 1e-6)", q + ENERGY_TOL - approx.max_norm_sq());
    report.info("attraction ladder: t, sup beta, beta per shift");
    for ((t, b), row) in ladder.times.iter().zip(&ladder.betas).zip(&ladder.per_shift) {
        let cells: Vec<String> = row.iter().map(|x| format!("{x:.3e}")).collect();
        report.info(format!("  {t:>8.3} {b:.6e} [{}]", cells.join(" ")));
    }
    // 5% slack for ensemble noise, with an absolute floor at round-off level
    let worst_rise = ladder
        .betas
        .windows(2)
        .map(|w| w[1] - (w[0] * 1.05 + 1e-12))
        .fold(f64::NEG_INFINITY, f64::max);
    if ladder.betas.len() > 1 {
        report.check("attraction ladder nonincreasing (5% slack)", -worst_rise);
    }
    if shifts.len() > 1 {
        let dh = shifts[1] - shifts[0];
        let residual = invariance_residual(&approx, &params, dh, &integ)?;
        report.info(format!(
            "invariance residual at t = {dh:.6e}: {residual:.6e} ({} the resolution {:.6e})",
            if residual < approx.resolution() { "below" } else { "not below" },
            approx.resolution()
        ));
        if forcing.is_autonomous() {
            report.check("autonomous invariance residual <= 1e-3", 1e-3 - residual);
        }
    }

    let mut outputs = Outputs::new(&cfg.output.directory);
    outputs.add("sections.csv", csv.into_string());
    finish(report, outputs, "attractor")
}

pub fn hull(cfg: &ExperimentConfig) -> Result<CommandResult> {
    let base = cfg.forcing();
    let shifts = cfg.shifts();
    let fs = hull_sample(&base, &shifts);
    let (l_max, step) = (cfg.run.metric_l_max, cfg.run.metric_grid_step);
    let m = fs.len();
    let matrix: Vec<Vec<f64>> = (0..m)
        .into_par_iter()
        .map(|i| {
            (0..m)
                .map(|j| compact_open_distance(&fs[i], &fs[j], l_max, step).map(|d| d.value))
                .collect::<Result<Vec<_>, _>>()
        })
        .collect::<Result<_, _>>()
        .context("computing the hull distance matrix")?;
    let asym = (0..m)
        .flat_map(|i| (0..m).map(move |j| (i, j)))
        .map(|(i, j)| (matrix[i][j] - matrix[j][i]).abs())
        .fold(0.0, f64::max);
    let diag = (0..m).map(|i| matrix[i][i].abs()).fold(0.0, f64::max);

    let p = cfg.output.precision;
    let header: Vec<String> = std::iter::once("shift_h".to_string())
        .chain(shifts.iter().map(|h| crate::output::fmt_sig(*h, p)))
        .collect();
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    let mut csv = Csv::new(&header, p);
    for (h, row) in shifts.iter().zip(&matrix) {
        let fields: Vec<String> = std::iter::once(csv.num(*h)).chain(row.iter().map(|x| csv.num(*x))).collect();
        csv.row(&fields);
    }

    let mut report = Report::default();
    report.title("hull");
    report.info(format!("{m} hull samples, L_max = {l_max:e}, grid step = {step:e}"));
    report.flag("d(f, f) = 0 on the diagonal", diag == 0.0, &format!("max |d(f_j, f_j)| = {diag:.6e}"));
    report.check("matrix symmetric to 1e-12", 1e-12 - asym);
    let trend: Vec<f64> = [0.01, 0.1, 1.0]
        .iter()
        .map(|&h| compact_open_distance(&base, &base.shift(h), l_max, step).map(|d| d.value))
        .collect::<Result<_, _>>()?;
    report.info(format!(
        "d(f, f^h) for h = 0.01, 0.1, 1: {:.6e}, {:.6e}, {:.6e}",
        trend[0], trend[1], trend[2]
    ));
    if cfg.forcing.kind == ForcingKind::Example {
        report.flag(
            "d(f, f^0.01) < d(f, f^1)",
            trend[0] < trend[2],
            &format!("difference {:.6e}", trend[2] - trend[0]),
        );
    }

    let mut outputs = Outputs::new(&cfg.output.directory);
    outputs.add("hull.csv", csv.into_string());
    finish(report, outputs, "hull")
}
