//! Canned configurations behind `reproduce <id>`.

use crate::config::{BoundSpec, ExperimentConfig, Task};
use crate::tasks::two_periods;

pub struct Recipe {
    /// Subdirectory of the output directory.
    pub label: String,
    pub task: Task,
    pub config: ExperimentConfig,
}

fn recipe(label: &str, task: Task, config: ExperimentConfig) -> Recipe {
    let mut config = config;
    config.task = Some(task);
    Recipe {
        label: label.into(),
        task,
        config,
    }
}

fn bound(param: &str, min: f64, max: f64) -> BoundSpec {
    BoundSpec {
        param: param.into(),
        min,
        max,
    }
}

fn single(phi: f64) -> ExperimentConfig {
    let mut c = ExperimentConfig::default();
    c.model.single_oscillator = true;
    c.model.n_osc = 1;
    c.model.beta = 0.0;
    c.model.phi = phi;
    c.numerics.q = 0;
    c
}

fn network(beta: f64) -> ExperimentConfig {
    let mut c = ExperimentConfig::default();
    c.model.beta = beta;
    c
}

/// Shrinks a configuration so that a smoke run finishes in seconds.
fn shrink(c: &mut ExperimentConfig) {
    if !c.model.single_oscillator {
        c.model.n_osc = 60;
        c.numerics.r = 2;
    }
    c.continuation.max_points = c.continuation.max_points.min(12);
    c.numerics.relax_periods = c.numerics.relax_periods.min(20);
    c.numerics.settle_periods = c.numerics.settle_periods.min(10);
    c.numerics.observe_periods = c.numerics.observe_periods.min(20);
    c.freq_sweep.points = c.freq_sweep.points.min(6);
    c.freq_sweep.settle_time = c.freq_sweep.settle_time.min(100.0);
    c.freq_sweep.measure_time = c.freq_sweep.measure_time.min(60.0);
    c.project.duration = c.project.duration.min(10.0);
    c.speedup.duration = c.speedup.duration.min(5.0);
    c.speedup.repeats = 1;
    c.sync_scan.raster_periods = c.sync_scan.raster_periods.min(5);
    c.walkthrough.budget_periods = c.walkthrough.budget_periods.min(200);
    c.correlate.initial_seeds.truncate(2);
    c.sync_scan.realization_seeds.truncate(1);
}

pub fn recipes(id: u8, quick: bool) -> Option<Vec<Recipe>> {
    let mut out = match id {
        1 => vec![recipe(
            "freq-sweep",
            Task::FreqSweep,
            ExperimentConfig::default(),
        )],
        2 => {
            let mut c = network(0.1);
            c.numerics.q = 1;
            c.correlate.times = two_periods(c.model.omega);
            c.correlate.initial_seeds = (1..=10).collect();
            vec![recipe("correlate", Task::Correlate, c)]
        }
        3 => [1usize, 71]
            .iter()
            .map(|&n2| {
                let mut c = network(0.5);
                c.project.n_project = n2;
                recipe(&format!("n-project-{n2}"), Task::Project, c)
            })
            .collect(),
        4 => vec![recipe("speedup", Task::Speedup, network(0.5))],
        5 => vec![recipe("fixed-point", Task::FixedPoint, network(0.5))],
        6 => [0.0, 0.5]
            .iter()
            .map(|&beta| {
                let mut c = network(beta);
                c.continuation.max_step = 0.2;
                c.continuation.bounds = vec![bound("omega", 0.5, 1.3)];
                recipe(&format!("beta-{beta}"), Task::Branch, c)
            })
            .collect(),
        7 => {
            let mut v = Vec::new();
            for (who, base) in [("single", single(1.0)), ("network", network(0.5))] {
                for (side, index) in [("left", 0), ("right", 1)] {
                    let mut c = base.clone();
                    c.fold_curve.free2 = "amplitude".into();
                    c.fold_curve.index = index;
                    c.continuation.max_step = 0.05;
                    c.continuation.bounds =
                        vec![bound("amplitude", 0.02, 1.0), bound("omega", 0.3, 1.5)];
                    v.push(recipe(&format!("{who}-{side}"), Task::FoldCurve, c));
                }
            }
            v
        }
        8 => [("left", 0), ("right", 1)]
            .iter()
            .map(|&(side, index)| {
                let mut c = network(0.5);
                c.fold_curve.free2 = "beta".into();
                c.fold_curve.index = index;
                c.fold_curve.breakdown_policy = true;
                c.continuation.max_step = 0.1;
                c.continuation.bounds = vec![bound("beta", 0.0, 2.0), bound("omega", 0.3, 1.5)];
                recipe(side, Task::FoldCurve, c)
            })
            .collect(),
        9 => {
            let mut c = network(1.2);
            c.sync_scan.beta = vec![1.2];
            c.sync_scan.omega = vec![0.925, 0.935];
            c.sync_scan.raster_periods = 60;
            vec![recipe("sync-scan", Task::SyncScan, c)]
        }
        10 => [("left", 0), ("right", 1)]
            .iter()
            .map(|&(side, index)| {
                let mut c = single(1.0);
                c.fold_curve.free2 = "phi".into();
                c.fold_curve.index = index;
                c.continuation.max_step = 0.05;
                c.continuation.bounds = vec![bound("phi", 0.0, 3.0), bound("omega", 0.3, 1.5)];
                recipe(side, Task::FoldCurve, c)
            })
            .collect(),
        11 => {
            let mut c = single(0.8);
            c.continuation.bounds = vec![bound("omega", 0.2, 2.5)];
            vec![recipe("branch", Task::Branch, c)]
        }
        12 => {
            let mut v = Vec::new();
            for (side, index) in [("left", 0), ("right", 1)] {
                let mut c = single(1.0);
                c.fold_curve.free2 = "phi".into();
                c.fold_curve.index = index;
                c.continuation.bounds = vec![bound("phi", 0.0, 3.0), bound("omega", 0.3, 1.5)];
                v.push(recipe(&format!("fold-{side}"), Task::FoldCurve, c));
            }
            for (who, mut c) in [("single", single(0.7)), ("network", network(0.3))] {
                c.model.phi = 0.7;
                c.model.omega = 0.9;
                c.hopf_curve.free2 = "phi".into();
                c.continuation.max_step = 0.02;
                c.continuation.bounds = vec![bound("omega", 0.3, 1.5), bound("phi", 0.0, 3.0)];
                v.push(recipe(&format!("hopf-{who}"), Task::HopfCurve, c));
            }
            v
        }
        _ => return None,
    };
    if quick {
        for r in &mut out {
            shrink(&mut r.config);
        }
    }
    Some(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_experiment_has_a_valid_recipe() {
        for id in 1..=12 {
            for quick in [false, true] {
                let rs = recipes(id, quick).unwrap();
                assert!(!rs.is_empty());
                for r in rs {
                    r.config
                        .validate()
                        .unwrap_or_else(|e| panic!("experiment {id} {}: {e}", r.label));
                }
            }
        }
        assert!(recipes(0, false).is_none());
        assert!(recipes(13, false).is_none());
    }
}
