use proptest::prelude::*;

use coarse_osc::chaos::{ChaosBasis, ChaosCoeffs};
use coarse_osc::coarse_map::{coarse_map, eigenvalues};
use coarse_osc::diagnostics::{classify_synchrony_from, SyncOptions};
use coarse_osc::network::{integrate, rhs, Heterogeneity, ModelParams, NetworkState};
use nalgebra::DMatrix;

fn coeffs(q: usize, vals: &[f64]) -> ChaosCoeffs {
    ChaosCoeffs::new(vals[..=q].to_vec(), vals[q + 1..2 * q + 2].to_vec()).unwrap()
}

fn permuted(v: &[f64], perm: &[usize]) -> Vec<f64> {
    perm.iter().map(|&i| v[i]).collect()
}

fn permutation(n: usize, seed: u64) -> Vec<usize> {
    use rand::seq::SliceRandom;
    use rand::SeedableRng;
    let mut p: Vec<usize> = (0..n).collect();
    p.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
    p
}

fn net(n: usize, beta: f64) -> ModelParams {
    ModelParams {
        beta,
        n_osc: n,
        ..ModelParams::reference()
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn restrict_undoes_lift(
        q in 0usize..=4,
        n in 30usize..300,
        seed in any::<u64>(),
        vals in prop::collection::vec(-3.0f64..3.0, 10),
    ) {
        let z = coeffs(q, &vals);
        let basis = ChaosBasis::new(Heterogeneity::standard_normal(n, seed), q).unwrap();
        let back = basis.restrict(&basis.lift(&z, 0.0).unwrap()).unwrap();
        let scale = vals.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        prop_assert!(back.max_abs_diff(&z) < 1e-10 * scale);
    }

    #[test]
    fn fit_residual_never_grows_with_order(
        n in 30usize..200,
        seed in any::<u64>(),
        xs in prop::collection::vec(-2.0f64..2.0, 200),
    ) {
        let het = Heterogeneity::standard_normal(n, seed);
        let state = NetworkState { x: xs[..n].to_vec(), y: xs[200 - n..].to_vec(), t: 0.0 };
        let mut last = (f64::INFINITY, f64::INFINITY);
        for q in 0..=4 {
            let r = ChaosBasis::new(het.clone(), q).unwrap().fit_residual(&state).unwrap();
            prop_assert!(r.0 <= last.0 + 1e-12 && r.1 <= last.1 + 1e-12);
            last = r;
        }
    }

    #[test]
    fn mean_field_matches_pairwise_sum(
        n in 2usize..40,
        seed in any::<u64>(),
        eps in 0.0f64..2.0,
        beta in 0.0f64..1.5,
        t in 0.0f64..20.0,
        xs in prop::collection::vec(-2.5f64..2.5, 80),
    ) {
        let het = Heterogeneity::standard_normal(n, seed);
        let p = ModelParams { epsilon: eps, ..net(n, beta) };
        let state = NetworkState { x: xs[..n].to_vec(), y: xs[40..40 + n].to_vec(), t };
        let (dx, dy) = rhs(&state, &p, &het).unwrap();
        for i in 0..n {
            let x = state.x[i];
            let g = p.phi + p.beta * het.mu()[i];
            let pair: f64 = state.x.iter().map(|xj| x - xj).sum::<f64>() / n as f64;
            let want = state.y[i] - x * (x * x / 3.0 - g) + x * x / 2.0 - eps * pair;
            prop_assert!((dx[i] - want).abs() < 1e-12 * (1.0 + want.abs()));
            prop_assert!((dy[i] - (-x + p.amplitude * (p.omega * t).sin())).abs() < 1e-12);
        }
    }

    #[test]
    fn rk4_converges_at_fourth_order(
        x0 in -2.0f64..2.0,
        y0 in -1.0f64..1.0,
    ) {
        let p = net(1, 0.0);
        let het = Heterogeneity::homogeneous(1);
        let s = NetworkState { x: vec![x0], y: vec![y0], t: 0.0 };
        let end = |dt: f64| integrate(&s, &p, &het, 2.0, dt).unwrap();
        let gap = |a: &NetworkState, b: &NetworkState| (a.x[0] - b.x[0]).hypot(a.y[0] - b.y[0]);
        let (c, m, f) = (end(0.04), end(0.02), end(0.01));
        let order = (gap(&c, &m) / gap(&m, &f)).log2();
        prop_assert!((3.5..4.5).contains(&order), "order {order}");
    }

    #[test]
    fn zero_beta_network_moves_as_one_oscillator(
        n in 2usize..30,
        seed in any::<u64>(),
        x0 in -2.0f64..2.0,
        y0 in -1.0f64..1.0,
    ) {
        let het = Heterogeneity::standard_normal(n, seed);
        let end = integrate(&NetworkState::uniform(n, x0, y0, 0.0), &net(n, 0.0), &het, 5.0, 0.01).unwrap();
        let one = integrate(
            &NetworkState::uniform(1, x0, y0, 0.0),
            &net(1, 0.0),
            &Heterogeneity::homogeneous(1),
            5.0,
            0.01,
        )
        .unwrap();
        for i in 0..n {
            prop_assert!((end.x[i] - one.x[0]).abs() < 1e-12 && (end.y[i] - one.y[0]).abs() < 1e-12);
        }
    }

    #[test]
    fn relabelling_oscillators_permutes_the_field(
        n in 2usize..40,
        seed in any::<u64>(),
        xs in prop::collection::vec(-2.0f64..2.0, 80),
    ) {
        let het = Heterogeneity::standard_normal(n, seed);
        let perm = permutation(n, seed ^ 1);
        let p = net(n, 0.7);
        let s = NetworkState { x: xs[..n].to_vec(), y: xs[40..40 + n].to_vec(), t: 1.3 };
        let sp = NetworkState { x: permuted(&s.x, &perm), y: permuted(&s.y, &perm), t: s.t };
        let hp = Heterogeneity::from_values(permuted(het.mu(), &perm));
        let (dx, dy) = rhs(&s, &p, &het).unwrap();
        let (dxp, dyp) = rhs(&sp, &p, &hp).unwrap();
        for (k, &i) in perm.iter().enumerate() {
            // the mean is summed in a different order
            prop_assert!((dxp[k] - dx[i]).abs() < 1e-12 && dyp[k] == dy[i]);
        }
    }

    #[test]
    fn eigenvalues_come_in_conjugate_pairs(
        m in 2usize..7,
        vals in prop::collection::vec(-2.0f64..2.0, 36),
    ) {
        let j = DMatrix::from_fn(m, m, |r, c| vals[r * 6 + c]);
        let ev = eigenvalues(&j);
        prop_assert_eq!(ev.len(), m);
        for l in &ev {
            let partner = ev.iter().map(|o| (o - l.conj()).norm()).fold(f64::INFINITY, f64::min);
            prop_assert!(partner < 1e-8 * (1.0 + l.norm()));
        }
        let trace: f64 = ev.iter().map(|l| l.re).sum();
        prop_assert!((trace - j.trace()).abs() < 1e-8 * (1.0 + j.norm()));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn coarse_map_ignores_oscillator_order(seed in any::<u64>(), a1 in -0.3f64..0.3) {
        let n = 40;
        let het = Heterogeneity::standard_normal(n, seed);
        let hp = Heterogeneity::from_values(permuted(het.mu(), &permutation(n, seed ^ 7)));
        let z = ChaosCoeffs::new(vec![1.2, a1], vec![0.3, -0.1]).unwrap();
        let p = net(n, 0.5);
        let a = coarse_map(&z, &p, &het, 0.01).unwrap();
        let b = coarse_map(&z, &p, &hp, 0.01).unwrap();
        prop_assert!(a.max_abs_diff(&b) < 1e-9);
    }

    #[test]
    fn synchrony_report_ignores_oscillator_order(seed in any::<u64>()) {
        let n = 24;
        let het = Heterogeneity::standard_normal(n, seed);
        let perm = permutation(n, seed ^ 3);
        let hp = Heterogeneity::from_values(permuted(het.mu(), &perm));
        let p = ModelParams { omega: 0.95, ..net(n, 1.2) };
        let opts = SyncOptions { settle_periods: 10, observe_periods: 20, dt: 0.01, ..SyncOptions::default() };
        let start = NetworkState::uniform(n, 1.0, 0.0, 0.0);
        let a = classify_synchrony_from(&p, &het, start.clone(), &opts).unwrap();
        let b = classify_synchrony_from(&p, &hp, start, &opts).unwrap();
        prop_assert_eq!(a.desync_fraction, b.desync_fraction);
        prop_assert_eq!(a.n_locked_cluster, b.n_locked_cluster);
        let mut mapped: Vec<usize> = b.desync_indices.iter().map(|&k| perm[k]).collect();
        mapped.sort_unstable();
        prop_assert_eq!(mapped, a.desync_indices);
    }
}
