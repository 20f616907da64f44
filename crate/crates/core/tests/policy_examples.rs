use bermudan::lookahead::Estimates;
use bermudan::model::{
    simulate_fresh_subpaths, simulate_paths, simulate_paths_for, GbmParams, MarkovModel,
};
use bermudan::oracle::{FiniteChain, LatticePut};
use bermudan::payoff::{PayoffSpec, Reward};
use bermudan::policy::{
    fit_baseline_ls, fit_baseline_tr, fit_policy, lower_bound_price, point_price, realized_payoffs,
    select_parameter, select_window, EktConfig, SplitPlan, WindowGrid, WindowSpec,
};
use bermudan::regress::{Continuation, FnEstimate};
use bermudan::rng::{Purpose, SeedPlan};
use bermudan::spline::ParameterGrid;

fn put_grid() -> ParameterGrid {
    ParameterGrid::product(&[0, 1, 2], &[50.0, 25.0, 12.5, 6.25]).unwrap()
}

fn windows() -> WindowGrid {
    WindowGrid::new(vec![
        WindowSpec::Fixed(0),
        WindowSpec::Fixed(4),
        WindowSpec::ToMaturity,
    ])
    .unwrap()
}

fn cfg(l: usize, t: usize, v: usize, grid: ParameterGrid, a: f64) -> EktConfig {
    EktConfig {
        split: SplitPlan::new(l, t, v).unwrap(),
        grid,
        windows: windows(),
        domain_bound: a,
    }
}

#[test]
fn single_period_is_conditional_expectation() {
    let model = GbmParams::single(100.0, 0.05, 0.25, 1, 1.0).unwrap();
    let put = PayoffSpec::put(100.0, 0.05, 1.0, 1).unwrap();
    let c = cfg(4000, 1000, 1000, put_grid(), 300.0);
    let policy = fit_policy(&model, &put, &c, &SeedPlan::new(8)).unwrap();
    let q0 = policy.continuation(0, &[100.0]);
    let exact = LatticePut {
        x0: 100.0,
        strike: 100.0,
        rate: 0.05,
        vol: 0.25,
        horizon: 1.0,
    }
    .black_scholes()
    .unwrap();
    // spread of f_1 estimated on an independent sample
    let eval = simulate_paths_for(&model, 4000, &SeedPlan::new(99), Purpose::Evaluation).unwrap();
    let f1: Vec<f64> = eval.slice(1).iter().map(|x| put.reward(1, &[*x])).collect();
    let m = f1.iter().sum::<f64>() / f1.len() as f64;
    let sd = (f1.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (f1.len() - 1) as f64).sqrt();
    let se = sd / 4000f64.sqrt();
    assert!((q0 - exact).abs() < 3.0 * se, "{q0} vs {exact} (se {se})");
}

#[test]
fn single_period_baselines_agree() {
    let model = GbmParams::single(100.0, 0.05, 0.25, 1, 1.0).unwrap();
    let put = PayoffSpec::put(100.0, 0.05, 1.0, 1).unwrap();
    let seeds = SeedPlan::new(4);
    let ls = fit_baseline_ls(&model, &put, 2000, 3, &seeds).unwrap();
    let tr = fit_baseline_tr(&model, &put, 2000, 3, &seeds).unwrap();
    assert_eq!(ls, tr);
}

#[test]
fn zero_vol_in_the_money_exercises_at_first_date() {
    let model = GbmParams::single(80.0, 0.05, 0.0, 12, 1.0).unwrap();
    let put = PayoffSpec::put(90.0, 0.05, 1.0, 12).unwrap();
    let seeds = SeedPlan::new(2);
    let expected = 90.0 * (-0.05f64 / 12.0).exp() - 80.0;
    let eval = simulate_paths_for(&model, 200, &seeds, Purpose::Evaluation).unwrap();
    let ekt = fit_policy(&model, &put, &cfg(600, 200, 200, put_grid(), 200.0), &seeds).unwrap();
    let ls = fit_baseline_ls(&model, &put, 500, 3, &seeds).unwrap();
    let tr = fit_baseline_tr(&model, &put, 500, 3, &seeds).unwrap();
    let zero = Estimates::zeros(12);
    for pol in [&ekt.estimates, &ls.estimates, &tr.estimates, &zero] {
        let pay = realized_payoffs(pol, &put, &eval).unwrap();
        assert!(
            pay.iter().all(|v| (v - expected).abs() < 1e-9),
            "{:?}",
            &pay[..3]
        );
    }
}

#[test]
fn never_exercising_gives_european_price() {
    let model = GbmParams::single(100.0, 0.05, 0.25, 12, 1.0).unwrap();
    let put = PayoffSpec::put(90.0, 0.05, 1.0, 12).unwrap();
    let hold = Estimates {
        by_time: vec![Continuation::Constant(put.payoff_bound()); 12],
    };
    let eval = simulate_paths_for(&model, 20_000, &SeedPlan::new(6), Purpose::Evaluation).unwrap();
    let est = lower_bound_price(&hold, &put, &eval).unwrap();
    let direct: f64 = eval
        .slice(12)
        .iter()
        .map(|x| put.reward(12, &[*x]))
        .sum::<f64>()
        / 20_000.0;
    assert!((est.price - direct).abs() < 1e-12);
    let bs = LatticePut {
        x0: 100.0,
        strike: 90.0,
        rate: 0.05,
        vol: 0.25,
        horizon: 1.0,
    }
    .black_scholes()
    .unwrap();
    assert!((est.price - bs).abs() < 4.0 * est.stderr);
}

#[test]
fn parameter_risks_match_brute_force() {
    let xs: Vec<f64> = (0..50).map(|i| i as f64 / 49.0 * 2.0 - 1.0).collect();
    let ys: Vec<f64> = xs.iter().map(|x| x * x + 0.05 * (7.0 * x).sin()).collect();
    let a = |x: &[f64]| x[0] * x[0];
    let b = |_: &[f64]| 0.3;
    let c = |x: &[f64]| x[0].abs();
    let cands: [FnEstimate<&dyn Fn(&[f64]) -> f64>; 3] =
        [FnEstimate(&b), FnEstimate(&c), FnEstimate(&a)];
    let (best, risks) = select_parameter(&cands, &xs, 1, &ys).unwrap();
    let fs: [&dyn Fn(&[f64]) -> f64; 3] = [&b, &c, &a];
    let brute: Vec<f64> = fs
        .iter()
        .map(|g| {
            xs.iter()
                .zip(&ys)
                .map(|(x, y)| (g(&[*x]) - y).powi(2))
                .sum::<f64>()
                / 50.0
        })
        .collect();
    for (r, q) in risks.iter().zip(&brute) {
        assert!((r - q).abs() < 1e-14);
    }
    let mut order: Vec<usize> = (0..3).collect();
    order.sort_by(|&i, &j| brute[i].partial_cmp(&brute[j]).unwrap());
    assert_eq!(best, order[0]);
    assert_eq!(best, 2);
}

#[test]
fn immediate_exercise_beats_holding_on_decreasing_payoffs() {
    let model = GbmParams::single(80.0, 0.05, 0.0, 12, 1.0).unwrap();
    let put = PayoffSpec::put(90.0, 0.05, 1.0, 12).unwrap();
    let seeds = SeedPlan::new(1);
    let t = 3;
    let start = vec![80.0 * (0.05f64 * 3.0 / 12.0).exp(); 10];
    let val = simulate_fresh_subpaths(&model, &start, 0, t, 12, &seeds).unwrap();
    let finalized = Estimates::zeros(12);
    let a = Continuation::Constant(0.0);
    let b = Continuation::Constant(90.0);
    let (best, values) = select_window(&put, &finalized, t, &[b.clone(), a.clone()], &val).unwrap();
    assert_eq!(best, 1);
    // A stops at t; B holds at t and then meets zero estimates at t + 1
    let fa = 90.0 * (-0.05f64 * 3.0 / 12.0).exp() - 80.0;
    let fb = 90.0 * (-0.05f64 * 4.0 / 12.0).exp() - 80.0;
    assert!((values[1] - fa).abs() < 1e-9 && (values[0] - fb).abs() < 1e-9);
    let hold = Estimates {
        by_time: vec![Continuation::Constant(90.0); 12],
    };
    let (_, values) = select_window(&put, &hold, t, &[b.clone(), a.clone()], &val).unwrap();
    let ft = 90.0 * (-0.05f64).exp() - 80.0;
    assert!((values[0] - ft).abs() < 1e-9);
}

fn small_put() -> (GbmParams, PayoffSpec, EktConfig) {
    let model = GbmParams::single(100.0, 0.05, 0.25, 6, 0.5).unwrap();
    let put = PayoffSpec::put(90.0, 0.05, 0.5, 6).unwrap();
    (model, put, cfg(1800, 600, 600, put_grid(), 300.0))
}

#[test]
fn window_choice_replays() {
    let (model, put, c) = small_put();
    let seeds = SeedPlan::new(12);
    let policy = fit_policy(&model, &put, &c, &seeds).unwrap();
    let paths = simulate_paths(&model, c.split.total(), &seeds).unwrap();
    let n_lt = c.split.learning + c.split.testing;
    for sel in &policy.selections {
        let wi = sel.windows.iter().position(|&w| w == sel.window).unwrap();
        assert!(sel
            .validation_values
            .iter()
            .all(|&v| v <= sel.validation_values[wi]));
        assert_eq!(sel.params, sel.window_params[wi]);
        // independent replay of the chosen rule on regenerated validation paths
        let t = sel.t;
        let starts = paths.slice(t)[n_lt..].to_vec();
        let val = simulate_fresh_subpaths(&model, &starts, n_lt, t, 6, &seeds).unwrap();
        let mut total = 0.0;
        for i in 0..val.n() {
            let p = val.path(i);
            let mut pay = put.reward(6, p.at(6));
            for s in t..6 {
                let x = p.at(s);
                if put.reward(s, x) >= policy.continuation(s, x) {
                    pay = put.reward(s, x);
                    break;
                }
            }
            total += pay;
        }
        let replay = total / val.n() as f64;
        assert!((replay - sel.validation_values[wi]).abs() < 1e-12, "t={t}");
    }
}

#[test]
fn estimates_stay_within_truncation_level() {
    let (model, put, c) = small_put();
    let policy = fit_policy(&model, &put, &c, &SeedPlan::new(13)).unwrap();
    for t in 0..6 {
        for k in 0..=600 {
            let x = k as f64;
            let v = policy.continuation(t, &[x]);
            assert!(v.abs() <= put.payoff_bound());
        }
    }
}

#[test]
fn deterministic_across_runs_and_thread_counts() {
    let (model, put, c) = small_put();
    let seeds = SeedPlan::new(77);
    let a = fit_policy(&model, &put, &c, &seeds).unwrap();
    let b = rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .unwrap()
        .install(|| fit_policy(&model, &put, &c, &seeds).unwrap());
    assert_eq!(a, b);
    let other = fit_policy(&model, &put, &c, &SeedPlan::new(78)).unwrap();
    assert_ne!(a, other);
}

#[test]
fn point_price_cases() {
    let put = PayoffSpec::put(90.0, 0.05, 1.0, 1).unwrap();
    let q = |v: f64| Estimates {
        by_time: vec![Continuation::Constant(v)],
    };
    assert_eq!(point_price(&q(0.0), &put, &[80.0]), 10.0);
    assert_eq!(point_price(&q(12.0), &put, &[80.0]), 12.0);
}

#[test]
fn finite_chain_point_price_near_exact_value() {
    let chain = FiniteChain::random(6, 4, 1003).unwrap();
    let exact = chain.dp_exact();
    let grid = ParameterGrid::product(&[0, 1], &[0.5, 0.25, 0.125]).unwrap();
    let c = cfg(6000, 2000, 2000, grid, 2.0);
    let policy = fit_policy(&chain, &chain, &c, &SeedPlan::new(5)).unwrap();
    let x0 = chain.initial_state().to_vec();
    let v0 = exact.v[0][chain.initial()];
    let est = point_price(&policy, &chain, &x0);
    assert!((est - v0).abs() < 0.03, "{est} vs {v0}");
    assert_eq!(policy.maturity(), chain.maturity());
}

#[test]
fn streaming_price_matches_stored_paths() {
    let (model, put, c) = small_put();
    let seeds = SeedPlan::new(31);
    let policy = fit_policy(&model, &put, &c, &seeds).unwrap();
    let eval = simulate_paths_for(&model, 5000, &seeds, Purpose::Evaluation).unwrap();
    let stored = lower_bound_price(&policy, &put, &eval).unwrap();
    let streamed =
        bermudan::policy::monte_carlo_price(&policy, &model, &put, 5000, &seeds).unwrap();
    assert_eq!(stored, streamed);
}
