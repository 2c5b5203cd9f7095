mod support;

use facesub::svm::*;
use proptest::prelude::*;
use rand::Rng;
use support::*;

fn random_problem(seed: u64) -> SvmProblem<f64> {
    let mut r = rng(seed);
    let dim = r.random_range(2..7);
    let n = r.random_range(5..30);
    let mut raw = Vec::new();
    let mut groups = Vec::new();
    for i in 0..n {
        let g = match i % 3 {
            0 => Group::Positive,
            1 => Group::Negative,
            _ => Group::Background,
        };
        let shift = if g == Group::Positive { 0.8 } else { -0.3 };
        raw.push((0..dim).map(|k| gaussian(&mut r) + if k == 0 { shift } else { 0.0 }).collect::<Vec<f64>>());
        groups.push(g);
    }
    SvmProblem::from_raw(raw.iter().map(Vec::as_slice).zip(groups)).unwrap()
}

fn per_sample_costs(p: &SvmProblem<f64>, c: f64) -> Vec<f64> {
    let costs = group_costs(p.counts(), c);
    p.groups().iter().map(|&g| costs.of(g)).collect()
}

#[test]
fn one_dimensional_closed_form() {
    let p = SvmProblem::from_features(vec![vec![1.0f64]], vec![Group::Positive]).unwrap();
    let m = train(&p, &SvmConfig::default()).unwrap();
    assert!((m.weights[0] - 20.0 / 21.0).abs() < 1e-6);
    let best = 0.5 * (20.0f64 / 21.0).powi(2) + 10.0 * (1.0 - 20.0 / 21.0f64).powi(2);
    assert!((m.objective - best).abs() < 1e-9);
}

#[test]
fn group_costs_divide_by_group_size() {
    let c = group_costs(GroupCounts { positive: 4, negative: 0, background: 5 }, 10.0);
    assert_eq!(c.positive, 2.5);
    assert_eq!(c.negative, 0.0);
    assert_eq!(c.background, 2.0);
}

#[test]
fn objective_matches_definition() {
    for seed in 0..20 {
        let p = random_problem(seed);
        let cs = per_sample_costs(&p, 10.0);
        let w: Vec<f64> = (0..p.dim()).map(|k| 0.1 * k as f64 - 0.2).collect();
        let costs = group_costs(p.counts(), 10.0);
        let ours = svm_objective(&w, &p, &costs);
        let oracle = svm_objective_oracle(&w, p.features(), p.labels(), &cs);
        assert!((ours - oracle).abs() < 1e-12 * oracle.max(1.0));
    }
}

#[test]
fn trained_objective_matches_gradient_descent_oracle() {
    for seed in 0..50 {
        let p = random_problem(1000 + seed);
        let cs = per_sample_costs(&p, 10.0);
        let m = train(&p, &SvmConfig::default()).unwrap();
        let w = svm_gd_oracle(p.features(), p.labels(), &cs, 50_000);
        let oracle = svm_objective_oracle(&w, p.features(), p.labels(), &cs);
        assert!(
            (m.objective - oracle).abs() <= 1e-6 * oracle.abs(),
            "seed {seed}: {} vs {oracle}",
            m.objective
        );
    }
}

#[test]
fn gradient_matches_finite_differences() {
    for seed in 0..30 {
        let p = random_problem(5000 + seed);
        let costs = group_costs(p.counts(), 10.0);
        let mut r = rng(seed);
        let w: Vec<f64> = (0..p.dim()).map(|_| 0.5 * gaussian(&mut r)).collect();
        let g = svm_gradient(&w, &p, &costs);
        let h = 1e-6;
        for k in 0..w.len() {
            let (mut a, mut b) = (w.clone(), w.clone());
            a[k] += h;
            b[k] -= h;
            let fd = (svm_objective(&a, &p, &costs) - svm_objective(&b, &p, &costs)) / (2.0 * h);
            assert!((fd - g[k]).abs() < 1e-5 * g[k].abs().max(1.0), "seed {seed} k {k}");
        }
    }
}

#[test]
fn budget_exhaustion_is_a_convergence_error() {
    let p = random_problem(3);
    let cfg = SvmConfig { max_iterations: 1, tolerance: 1e-14, ..Default::default() };
    assert!(matches!(train(&p, &cfg), Err(facesub::Error::Convergence { .. })));
}

#[test]
fn positive_sample_required() {
    let p = SvmProblem::from_features(vec![vec![1.0f64, 1.0]], vec![Group::Negative]).unwrap();
    assert!(train(&p, &SvmConfig::default()).is_err());
}

proptest! {
    #[test]
    fn optimum_is_stationary(seed in 0u64..10_000) {
        let p = random_problem(seed);
        let m = train(&p, &SvmConfig::default()).unwrap();
        let g = svm_gradient(&m.weights, &p, &group_costs(p.counts(), 10.0));
        let gn = g.iter().map(|v| v * v).sum::<f64>().sqrt();
        let wn = m.weights.iter().map(|v| v * v).sum::<f64>().sqrt();
        prop_assert!(gn <= 1e-6 * (1.0 + wn));
    }

    #[test]
    fn training_is_deterministic(seed in 0u64..10_000) {
        let p = random_problem(seed);
        prop_assert_eq!(train(&p, &SvmConfig::default()).unwrap(), train(&p, &SvmConfig::default()).unwrap());
    }
}
