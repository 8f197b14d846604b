//! One function per task. Each fills a [`Report`] and returns the
//! terminations that decide the exit status.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde_json::json;

use coarse_osc::chaos::{ChaosBasis, ChaosCoeffs};
use coarse_osc::coarse_map::{
    full_state_defect, newton_fixed_point, relax, AveragedMap, CoarseFixedPoint,
};
use coarse_osc::continuation::{
    both_directions, continue_branch, continue_fold_curve, continue_hopf_curve, detect_fold,
    detect_hopf, Branch, BranchPoint, BreakdownPolicy, ContinuationConfig, Direction, Param,
};
use coarse_osc::diagnostics::{
    classify_synchrony, correlation_snapshot, desync_probe, log_log_slope, strobe_raster,
    walkthrough_period, SyncOptions, WalkthroughOptions,
};
use coarse_osc::network::{
    measure_angular_frequency, FrequencyProbe, Heterogeneity, Integrator, ModelParams, NetworkState,
};
use coarse_osc::projective::{
    direct_coarse_trajectory, measure_speedup, projective_integrate, ProjectionSchedule,
    RealizationSource, SampleKind,
};
use coarse_osc::signal::median;
use coarse_osc::Error;

use crate::config::{ExperimentConfig, Task};
use crate::output::{branch_table, num, opt, Report, Table};

pub type TaskResult = Result<(), Error>;

pub fn run(task: Task, cfg: &ExperimentConfig, report: &mut Report) -> TaskResult {
    match task {
        Task::Simulate => simulate(cfg, report),
        Task::FreqSweep => freq_sweep(cfg, report),
        Task::Correlate => correlate(cfg, report),
        Task::Project => project(cfg, report),
        Task::Speedup => speedup(cfg, report),
        Task::FixedPoint => fixed_point(cfg, report),
        Task::Branch => branch(cfg, report),
        Task::FoldCurve => curve(cfg, report, CurveKind::Fold),
        Task::HopfCurve => curve(cfg, report, CurveKind::Hopf),
        Task::SyncScan => sync_scan(cfg, report),
        Task::Walkthrough => walkthrough(cfg, report),
    }
}

fn realization(cfg: &ExperimentConfig, seed: u64) -> Heterogeneity {
    if cfg.model.single_oscillator {
        Heterogeneity::homogeneous(1)
    } else {
        Heterogeneity::standard_normal(cfg.model.n_osc, seed)
    }
}

fn seeds_or_default(list: &[u64], cfg: &ExperimentConfig) -> Vec<u64> {
    if list.is_empty() {
        vec![cfg.numerics.seed]
    } else {
        list.to_vec()
    }
}

/// Chaos order usable on `het`: a single oscillator only supports `q = 0`.
fn order(cfg: &ExperimentConfig, q: usize) -> usize {
    if cfg.model.single_oscillator {
        0
    } else {
        q
    }
}

fn coeff_header(q: usize) -> Vec<String> {
    let mut h: Vec<String> = (0..=q).map(|k| format!("a{k}")).collect();
    h.extend((0..=q).map(|k| format!("b{k}")));
    h
}

fn coeff_row(z: &ChaosCoeffs) -> Vec<String> {
    z.a.iter().chain(&z.b).map(|v| num(*v)).collect()
}

fn table_with(name: &str, lead: &[&str], q: usize, tail: &[&str], doc: &str) -> Table {
    let mut header: Vec<String> = lead.iter().map(|s| s.to_string()).collect();
    header.extend(coeff_header(q));
    header.extend(tail.iter().map(|s| s.to_string()));
    Table {
        name: name.into(),
        header,
        rows: Vec::new(),
        doc: doc.into(),
    }
}

fn simulate(cfg: &ExperimentConfig, report: &mut Report) -> TaskResult {
    let params = cfg.model.params();
    let het = realization(cfg, cfg.numerics.seed);
    report.seeds = vec![cfg.numerics.seed];
    let q = order(cfg, cfg.numerics.q_projection);
    let basis = ChaosBasis::new(het.clone(), q)?;
    let mut state = if cfg.simulate.random_initial {
        // reuse the snapshot generator for its seeded initial condition
        let s = correlation_snapshot(&params, &het, q, &[0.0], cfg.numerics.seed, cfg.numerics.dt)?;
        NetworkState {
            x: s[0].x.clone(),
            y: s[0].y.clone(),
            t: 0.0,
        }
    } else {
        NetworkState::uniform(het.len(), 1.0, 0.0, 0.0)
    };
    let mut table = table_with(
        "simulate",
        &["t"],
        q,
        &["residual_x", "residual_y"],
        "coarse trajectory of plain simulation: chaos coefficients and normalized fit residuals",
    );
    let mut integ = Integrator::new(cfg.numerics.dt)?;
    let steps = (cfg.simulate.duration / cfg.simulate.sample_interval).round() as usize;
    for k in 0..=steps {
        if k > 0 {
            integ.advance(&mut state, &params, &het, cfg.simulate.sample_interval)?;
            state.t = k as f64 * cfg.simulate.sample_interval;
        }
        let z = basis.restrict(&state)?;
        let (rx, ry) = basis.fit_residual(&state)?;
        let mut row = vec![num(state.t)];
        row.extend(coeff_row(&z));
        row.extend([num(rx), num(ry)]);
        table.push(row);
    }
    report.tables.push(table);
    Ok(())
}

fn freq_sweep(cfg: &ExperimentConfig, report: &mut Report) -> TaskResult {
    let f = &cfg.freq_sweep;
    let probe = FrequencyProbe {
        settle_time: f.settle_time,
        measure_time: f.measure_time,
        dt: cfg.numerics.dt,
        ..FrequencyProbe::default()
    };
    let phis: Vec<f64> = (0..f.points)
        .map(|k| {
            if f.points == 1 {
                f.phi_min
            } else {
                f.phi_min + (f.phi_max - f.phi_min) * k as f64 / (f.points - 1) as f64
            }
        })
        .collect();
    let results = phis
        .par_iter()
        .map(|&phi| {
            measure_angular_frequency(
                &ModelParams::isolated(phi),
                &Heterogeneity::homogeneous(1),
                &probe,
            )
        })
        .collect::<Result<Vec<_>, _>>()?;
    let mut t = Table::new(
        "freq-sweep",
        &["phi", "state", "angular_frequency", "amplitude"],
        "isolated unforced oscillator: angular frequency of sustained oscillation versus phi; empty when quiescent",
    );
    for (phi, r) in phis.iter().zip(&results) {
        let (state, w, a) = match r {
            coarse_osc::network::Oscillation::Oscillating {
                angular_frequency,
                amplitude,
            } => ("oscillating", Some(*angular_frequency), Some(*amplitude)),
            coarse_osc::network::Oscillation::Quiescent => ("quiescent", None, None),
        };
        t.push(vec![num(*phi), state.into(), opt(w), opt(a)]);
    }
    report.tables.push(t);
    Ok(())
}

fn correlate(cfg: &ExperimentConfig, report: &mut Report) -> TaskResult {
    let params = cfg.model.params();
    let het = realization(cfg, cfg.numerics.seed);
    let q = order(cfg, cfg.numerics.q);
    let times = if cfg.correlate.times.is_empty() {
        let period = params.forcing_period()?;
        vec![0.0, period, 2.0 * period]
    } else {
        cfg.correlate.times.clone()
    };
    let seeds = seeds_or_default(&cfg.correlate.initial_seeds, cfg);
    report.seeds = vec![cfg.numerics.seed];
    let snaps = seeds
        .par_iter()
        .map(|&s| correlation_snapshot(&params, &het, q, &times, s, cfg.numerics.dt))
        .collect::<Result<Vec<_>, _>>()?;
    let basis = ChaosBasis::new(het.clone(), q)?;
    let mut scatter = Table::new(
        "correlate-scatter",
        &["initial_seed", "t", "i", "mu", "x", "y", "fit_x", "fit_y"],
        "per-oscillator state against mu, with the fitted chaos expansion evaluated at each mu",
    );
    let mut resid = Table::new(
        "correlate-residuals",
        &["initial_seed", "t", "residual_x", "residual_y"],
        "normalized least-squares fit residual rms(residual)/std(data)",
    );
    for (seed, series) in seeds.iter().zip(&snaps) {
        for s in series {
            let fit = basis.lift(&s.fit, s.t)?;
            for i in 0..s.mu.len() {
                scatter.push(vec![
                    seed.to_string(),
                    num(s.t),
                    i.to_string(),
                    num(s.mu[i]),
                    num(s.x[i]),
                    num(s.y[i]),
                    num(fit.x[i]),
                    num(fit.y[i]),
                ]);
            }
            resid.push(vec![
                seed.to_string(),
                num(s.t),
                num(s.residual.0),
                num(s.residual.1),
            ]);
        }
    }
    let medians: Vec<_> = times
        .iter()
        .enumerate()
        .map(|(k, t)| {
            let rx: Vec<f64> = snaps.iter().map(|s| s[k].residual.0).collect();
            let ry: Vec<f64> = snaps.iter().map(|s| s[k].residual.1).collect();
            json!({ "t": t, "median_residual_x": median(&rx), "median_residual_y": median(&ry) })
        })
        .collect();
    report.note("median_residuals", medians);
    report.tables.push(scatter);
    report.tables.push(resid);
    Ok(())
}

fn initial_coeffs(cfg: &ExperimentConfig, q: usize) -> ChaosCoeffs {
    let mut z = ChaosCoeffs::zeros(q);
    z.a[0] = cfg.project.initial[0];
    z.b[0] = cfg.project.initial[1];
    z
}

fn source(cfg: &ExperimentConfig) -> RealizationSource {
    if cfg.project.fresh_realizations && !cfg.model.single_oscillator {
        RealizationSource::Fresh {
            n: cfg.model.n_osc,
            seed: cfg.numerics.seed,
        }
    } else {
        RealizationSource::Fixed(realization(cfg, cfg.numerics.seed))
    }
}

fn project(cfg: &ExperimentConfig, report: &mut Report) -> TaskResult {
    let params = cfg.model.params();
    let q = order(cfg, cfg.numerics.q_projection);
    let z0 = initial_coeffs(cfg, q);
    let p = &cfg.project;
    let schedule = ProjectionSchedule {
        dt: cfg.numerics.dt,
        n_inner: p.n_inner,
        n_project: p.n_project,
        fit_order: p.fit_order,
    };
    let het = realization(cfg, cfg.numerics.seed);
    report.seeds = vec![cfg.numerics.seed];
    let proj = projective_integrate(&z0, &params, &schedule, &source(cfg), p.duration)?;
    let direct = direct_coarse_trajectory(&z0, &params, &het, cfg.numerics.dt, p.duration)?;
    let mut t = table_with(
        "project",
        &["run", "t", "kind"],
        q,
        &[],
        "coarse trajectories of projective integration (kind burst/projected) and of direct integration",
    );
    for (run, series) in [("projective", &proj), ("direct", &direct)] {
        for s in series {
            let kind = match s.kind {
                SampleKind::Burst => "burst",
                SampleKind::Projected => "projected",
            };
            let mut row = vec![run.to_string(), num(s.t), kind.to_string()];
            row.extend(coeff_row(&s.z));
            t.push(row);
        }
    }
    // compare on the direct grid, at burst samples only
    let k = q.min(1);
    let max_diff = proj
        .iter()
        .filter(|s| s.kind == SampleKind::Burst)
        .filter_map(|s| {
            let idx = (s.t / cfg.numerics.dt).round() as usize;
            direct.get(idx).map(|d| (d.z.a[k] - s.z.a[k]).abs())
        })
        .fold(0.0f64, f64::max);
    report.note(&format!("max_abs_diff_a{k}"), max_diff);
    report.tables.push(t);
    Ok(())
}

fn speedup(cfg: &ExperimentConfig, report: &mut Report) -> TaskResult {
    let params = cfg.model.params();
    let q = order(cfg, cfg.numerics.q_projection);
    let z0 = initial_coeffs(cfg, q);
    report.seeds = vec![cfg.numerics.seed];
    let mut t = Table::new(
        "speedup",
        &["n_project", "direct_seconds", "projective_seconds", "speedup"],
        "wall-clock ratio direct/projective over the same horizon (median of repeats); timing columns vary between runs",
    );
    let mut rows = Vec::new();
    for &n2 in &cfg.speedup.n_project {
        let schedule = ProjectionSchedule {
            dt: cfg.numerics.dt,
            n_inner: cfg.project.n_inner,
            n_project: n2,
            fit_order: cfg.project.fit_order,
        };
        let r = measure_speedup(
            &z0,
            &params,
            &schedule,
            &source(cfg),
            cfg.speedup.duration,
            cfg.speedup.repeats,
        )?;
        t.push(vec![
            n2.to_string(),
            num(r.direct.as_secs_f64()),
            num(r.projective.as_secs_f64()),
            num(r.speedup),
        ]);
        rows.push(r);
    }
    // smallest N2 beyond which every measured speedup exceeds one
    let mut crossover = None;
    for (i, r) in rows.iter().enumerate().rev() {
        if r.speedup > 1.0 {
            crossover = Some(rows[i].n_project);
        } else {
            break;
        }
    }
    report.note("crossover_n_project", json!(crossover));
    report.tables.push(t);
    Ok(())
}

pub(crate) struct MapSetup {
    pub map: AveragedMap,
    pub params: ModelParams,
}

pub(crate) fn map_setup(cfg: &ExperimentConfig, report: &mut Report) -> Result<MapSetup, Error> {
    let params = cfg.model.params();
    let map = if cfg.model.single_oscillator {
        AveragedMap::single_oscillator(cfg.numerics.dt)
    } else {
        report.seeds = cfg.numerics.seeds();
        AveragedMap::new(&cfg.numerics.map_config(), cfg.model.n_osc)?
    };
    Ok(MapSetup { map, params })
}

pub(crate) fn find_fixed_point(
    cfg: &ExperimentConfig,
    setup: &MapSetup,
) -> Result<CoarseFixedPoint, Error> {
    let q = setup.map.q();
    let guess = if cfg.fixed_point.initial.is_empty() {
        let het = setup.map.members()[0].heterogeneity().clone();
        relax(
            &ChaosCoeffs::constant(1.0, 0.0, q),
            &setup.params,
            &het,
            cfg.numerics.relax_periods,
            cfg.numerics.dt,
        )?
    } else {
        ChaosCoeffs::from_flat(&cfg.fixed_point.initial)?
    };
    newton_fixed_point(
        &setup.map,
        &guess,
        &setup.params,
        &cfg.numerics.map_config().newton(),
    )
}

fn fixed_point(cfg: &ExperimentConfig, report: &mut Report) -> TaskResult {
    let setup = map_setup(cfg, report)?;
    let fp = find_fixed_point(cfg, &setup)?;
    let mut hist = Table::new(
        "fixed-point-newton",
        &["iteration", "residual"],
        "max |h(z) - z| before each Newton update and after the last",
    );
    for (k, r) in fp.residual_history.iter().enumerate() {
        hist.push(vec![k.to_string(), num(*r)]);
    }
    let mut ev = Table::new(
        "fixed-point-eigenvalues",
        &["re", "im", "modulus"],
        "coarse Jacobian spectrum",
    );
    for l in &fp.jacobian_eigenvalues {
        ev.push(vec![num(l.re), num(l.im), num(l.norm())]);
    }
    let basis = &setup.map.members()[0];
    let het = basis.heterogeneity();
    let (dx, dy) = full_state_defect(&fp.z, &setup.params, het, cfg.numerics.dt)?;
    let mut defect = Table::new(
        "fixed-point-defect",
        &["i", "mu", "dx", "dy"],
        "change of each oscillator over one period from the lifted coarse fixed point (first realization)",
    );
    for i in 0..dx.len() {
        defect.push(vec![
            i.to_string(),
            num(het.mu()[i]),
            num(dx[i]),
            num(dy[i]),
        ]);
    }
    let max_dx = dx.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    report.note("z", fp.z.to_flat());
    report.note("residual", fp.residual);
    report.note("iterations", fp.iterations);
    report.note("stable", fp.stable);
    report.note("max_abs_dx", max_dx);
    report.tables.extend([hist, ev, defect]);
    Ok(())
}

fn trace_branch(
    setup: &MapSetup,
    fp: &CoarseFixedPoint,
    free: Param,
    cc: &ContinuationConfig,
    both: bool,
) -> Result<(Branch, Vec<coarse_osc::continuation::Termination>), Error> {
    if both {
        let (b, tb, tf) = both_directions(cc, |c| {
            continue_branch(&setup.map, fp, &setup.params, free, c)
        })?;
        Ok((b, vec![tb, tf]))
    } else {
        let b = continue_branch(&setup.map, fp, &setup.params, free, cc)?;
        let t = b.termination.clone();
        Ok((b, vec![t]))
    }
}

/// Refined bifurcations of `kind` on `branch`, ordered by the free
/// parameter and with duplicates (closed loops) removed.
fn refined(
    setup: &MapSetup,
    branch: &Branch,
    cc: &ContinuationConfig,
    kind: CurveKind,
) -> Result<Vec<BranchPoint>, Error> {
    let idx = match kind {
        CurveKind::Fold => branch.fold_brackets(),
        CurveKind::Hopf => branch.hopf_brackets(),
    };
    let mut out: Vec<BranchPoint> = Vec::new();
    for i in idx {
        let p = match kind {
            CurveKind::Fold => detect_fold(&setup.map, &setup.params, branch, i, cc)?,
            CurveKind::Hopf => detect_hopf(&setup.map, &setup.params, branch, i, cc)?,
        };
        let dup = out.iter().any(|q| {
            (q.params[0].1 - p.params[0].1).abs() < 1e-6
                && q.z.iter().zip(&p.z).all(|(a, b)| (a - b).abs() < 1e-4)
        });
        if !dup {
            out.push(p);
        }
    }
    out.sort_by(|a, b| a.params[0].1.total_cmp(&b.params[0].1));
    Ok(out)
}

fn bifurcation_table(name: &str, free: Param, q: usize, points: &[(&str, &BranchPoint)]) -> Table {
    let mut header = vec!["kind".to_string(), free.name().to_string()];
    header.extend(coeff_header(q));
    header.extend(["distance_to_unity", "theta"].map(String::from));
    let mut t = Table {
        name: name.into(),
        header,
        rows: Vec::new(),
        doc: "refined fold and Neimark-Sacker points; distance_to_unity = min |lambda - 1|".into(),
    };
    for (kind, p) in points {
        let mut row = vec![kind.to_string(), num(p.params[0].1)];
        row.extend(p.z.iter().map(|v| num(*v)));
        row.push(num(p.distance_to_unity()));
        row.push(opt(p.theta));
        t.push(row);
    }
    t
}

fn branch(cfg: &ExperimentConfig, report: &mut Report) -> TaskResult {
    let setup = map_setup(cfg, report)?;
    let fp = find_fixed_point(cfg, &setup)?;
    let free = cfg.continuation.free_param();
    let cc = cfg.continuation.resolve(cfg.numerics.fd_step);
    let (b, ends) = trace_branch(&setup, &fp, free, &cc, cfg.continuation.both())?;
    let folds = refined(&setup, &b, &cc, CurveKind::Fold)?;
    let hopfs = refined(&setup, &b, &cc, CurveKind::Hopf)?;
    let mut listed: Vec<(&str, &BranchPoint)> = folds.iter().map(|p| ("fold", p)).collect();
    listed.extend(hopfs.iter().map(|p| ("hopf", p)));
    report.note(
        "folds",
        folds.iter().map(|p| p.params[0].1).collect::<Vec<_>>(),
    );
    report.note(
        "hopfs",
        hopfs.iter().map(|p| p.params[0].1).collect::<Vec<_>>(),
    );
    for (k, t) in ends.into_iter().enumerate() {
        report.terminations.push((format!("branch end {k}"), t));
    }
    report.tables.push(branch_table("branch", &b, ""));
    report
        .tables
        .push(bifurcation_table("branch-bifurcations", free, fp.z.q(), &listed));
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum CurveKind {
    Fold,
    Hopf,
}

fn curve(cfg: &ExperimentConfig, report: &mut Report, kind: CurveKind) -> TaskResult {
    let section = match kind {
        CurveKind::Fold => &cfg.fold_curve,
        CurveKind::Hopf => &cfg.hopf_curve,
    };
    let setup = map_setup(cfg, report)?;
    let fp = find_fixed_point(cfg, &setup)?;
    let free = cfg.continuation.free_param();
    let free2: Param = section.free2.parse()?;
    let cc = cfg.continuation.resolve(cfg.numerics.fd_step);
    // the start branch only needs to reach the requested bifurcation
    let search = ContinuationConfig {
        direction: Direction::Forward,
        ..cc.clone()
    };
    let (b, _) = trace_branch(&setup, &fp, free, &search, true)?;
    let found = refined(&setup, &b, &search, kind)?;
    let start = found.get(section.index).ok_or_else(|| {
        Error::CannotStart(format!(
            "branch holds {} {} point(s), index {} requested",
            found.len(),
            if kind == CurveKind::Fold {
                "fold"
            } else {
                "Hopf"
            },
            section.index
        ))
    })?;
    report.note(
        "start",
        json!({ free.name(): start.params[0].1, "z": start.z }),
    );

    let probe_hets: Vec<Heterogeneity> = setup
        .map
        .members()
        .iter()
        .take(section.probe_realizations)
        .map(|m| m.heterogeneity().clone())
        .collect();
    let sync = SyncOptions {
        settle_periods: cfg.numerics.settle_periods,
        observe_periods: cfg.numerics.observe_periods,
        dt: cfg.numerics.dt,
        ..SyncOptions::default()
    };
    let probe = desync_probe(&probe_hets, sync);
    let mut policy = BreakdownPolicy::new(section.breakdown_threshold, probe);
    if section.breakdown_every_point {
        policy = policy.at_every_point();
    }
    let policy = section.breakdown_policy.then_some(&policy);
    let pair = (free2, free);
    let run = |c: &ContinuationConfig| match kind {
        CurveKind::Fold => continue_fold_curve(&setup.map, start, &setup.params, pair, c, policy),
        CurveKind::Hopf => continue_hopf_curve(&setup.map, start, &setup.params, pair, c, policy),
    };
    let name = match kind {
        CurveKind::Fold => "fold-curve",
        CurveKind::Hopf => "hopf-curve",
    };
    let curve = if cfg.continuation.both() {
        let (c, tb, tf) = both_directions(&cc, run)?;
        report.terminations.push((format!("{name} backward"), tb));
        report.terminations.push((format!("{name} forward"), tf));
        c
    } else {
        let c = run(&cc)?;
        report
            .terminations
            .push((name.into(), c.termination.clone()));
        c
    };
    if kind == CurveKind::Hopf {
        report.note("theta_monotone", curve.theta_monotone());
    }
    report.tables.push(branch_table(
        name,
        &curve,
        "columns start with the two continued parameters",
    ));
    Ok(())
}

fn sync_scan(cfg: &ExperimentConfig, report: &mut Report) -> TaskResult {
    let s = &cfg.sync_scan;
    let seeds = seeds_or_default(&s.realization_seeds, cfg);
    report.seeds = seeds.clone();
    let opts = SyncOptions {
        settle_periods: cfg.numerics.settle_periods,
        observe_periods: cfg.numerics.observe_periods,
        dt: cfg.numerics.dt,
        ..SyncOptions::default()
    };
    let mut jobs = Vec::new();
    for &beta in &s.beta {
        for &omega in &s.omega {
            for &seed in &seeds {
                jobs.push((beta, omega, seed));
            }
        }
    }
    let base = cfg.model.params();
    let reports = jobs
        .par_iter()
        .map(|&(beta, omega, seed)| {
            let p = ModelParams {
                beta,
                omega,
                ..base
            };
            classify_synchrony(&p, &realization(cfg, seed), &opts)
        })
        .collect::<Result<Vec<_>, _>>()?;
    let mut t = Table::new(
        "sync-scan",
        &[
            "beta",
            "omega",
            "seed",
            "desync_fraction",
            "n_locked_cluster",
            "n_quiescent",
            "modal_count",
            "cluster_locked_to_forcing",
            "modal_ties",
            "desync_indices",
        ],
        "winding-count synchrony classification after settling; indices are oscillator positions in the realization",
    );
    for ((beta, omega, seed), r) in jobs.iter().zip(&reports) {
        let join = |v: &[usize]| {
            v.iter()
                .map(|i| i.to_string())
                .collect::<Vec<_>>()
                .join(" ")
        };
        t.push(vec![
            num(*beta),
            num(*omega),
            seed.to_string(),
            num(r.desync_fraction),
            r.n_locked_cluster.to_string(),
            r.quiescent_indices.len().to_string(),
            r.modal_count.to_string(),
            r.cluster_locked_to_forcing.to_string(),
            join(&r.modal_ties),
            join(&r.desync_indices),
        ]);
    }
    report.tables.push(t);

    if s.raster_periods > 0 {
        let mut raster = Table::new(
            "sync-raster",
            &["beta", "omega", "seed", "strobe", "rank", "i", "mu", "x"],
            "x_i at successive forcing periods for the oscillators with the largest mu (rank 0 = largest)",
        );
        for &(beta, omega, seed) in &jobs {
            let het = realization(cfg, seed);
            let p = ModelParams {
                beta,
                omega,
                ..base
            };
            let rows = strobe_raster(
                &p,
                &het,
                cfg.numerics.settle_periods,
                s.raster_periods,
                cfg.numerics.dt,
            )?;
            let mut order: Vec<usize> = (0..het.len()).collect();
            order.sort_by(|&a, &b| het.mu()[b].total_cmp(&het.mu()[a]));
            for (k, row) in rows.iter().enumerate() {
                for (rank, &i) in order.iter().take(s.raster_top).enumerate() {
                    raster.push(vec![
                        num(beta),
                        num(omega),
                        seed.to_string(),
                        k.to_string(),
                        rank.to_string(),
                        i.to_string(),
                        num(het.mu()[i]),
                        num(row[i]),
                    ]);
                }
            }
        }
        report.tables.push(raster);
    }
    Ok(())
}

fn walkthrough(cfg: &ExperimentConfig, report: &mut Report) -> TaskResult {
    let w = &cfg.walkthrough;
    let above = w.side == "above";
    let omega_star = match w.omega_star {
        Some(v) => v,
        None => {
            let setup = map_setup(cfg, report)?;
            let fp = find_fixed_point(cfg, &setup)?;
            let cc = ContinuationConfig {
                direction: if above {
                    Direction::Forward
                } else {
                    Direction::Backward
                },
                stop_after_folds: Some(1),
                ..cfg.continuation.resolve(cfg.numerics.fd_step)
            };
            let b = continue_branch(&setup.map, &fp, &setup.params, Param::Omega, &cc)?;
            let i = *b
                .fold_brackets()
                .first()
                .ok_or_else(|| Error::CannotStart("no fold found on the omega branch".into()))?;
            detect_fold(&setup.map, &setup.params, &b, i, &cc)?.params[0].1
        }
    };
    report.note("omega_star", omega_star);
    let omegas: Vec<f64> = w
        .offsets
        .iter()
        .map(|d| {
            if above {
                omega_star + d
            } else {
                omega_star - d
            }
        })
        .collect();
    let opts = WalkthroughOptions {
        settle_periods: cfg.numerics.settle_periods,
        budget_periods: w.budget_periods,
        min_turns: w.min_turns,
        dt: cfg.numerics.dt,
    };
    let seeds = seeds_or_default(&w.realization_seeds, cfg);
    report.seeds = seeds.clone();
    let params = cfg.model.params();
    let mut t = Table::new(
        "walkthrough",
        &["seed", "omega", "distance", "period", "winding", "exceeded_budget"],
        "time per turn of the strobed (a0, b0) around its centroid; winding = signed turns over the budget; empty period when too few turns",
    );
    let mut slopes = Vec::new();
    for &seed in &seeds {
        let est = walkthrough_period(&params, &realization(cfg, seed), omega_star, &omegas, &opts)?;
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for (e, d) in est.iter().zip(&w.offsets) {
            t.push(vec![
                seed.to_string(),
                num(e.omega),
                num(*d),
                opt(e.period),
                num(e.winding),
                e.exceeded_budget.to_string(),
            ]);
            if let Some(p) = e.period {
                xs.push(*d);
                ys.push(p);
            }
        }
        slopes.push(if xs.len() >= 2 {
            Some(log_log_slope(&xs, &ys))
        } else {
            None
        });
    }
    report.note("log_log_slopes", json!(slopes));
    report.tables.push(t);
    Ok(())
}

/// Forcing-period helper used by recipes.
pub(crate) fn two_periods(omega: f64) -> Vec<f64> {
    vec![0.0, 2.0 * PI / omega, 4.0 * PI / omega]
}
