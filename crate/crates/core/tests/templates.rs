mod support;

use facesub::aggregate::*;
use facesub::matrix::Matrix;
use facesub::quality::{quality_weights, QualityConfig};
use facesub::similarity::*;
use facesub::types::Template;
use proptest::prelude::*;
use rand::Rng;
use support::*;

fn random_template(seed: u64, dim: usize, n: usize) -> Template<f64> {
    let mut r = rng(seed);
    let vectors = (0..n)
        .map(|_| unit((0..dim).map(|_| gaussian(&mut r)).collect()))
        .collect();
    let scores = (0..n).map(|_| r.random_range(0.3..0.999)).collect();
    Template::from_vectors(vectors, scores, None).unwrap()
}

fn samples(t: &Template<f64>) -> Vec<Vec<f64>> {
    t.samples().iter().map(|s| s.as_slice().to_vec()).collect()
}

fn subspace(cols: &[Vec<f64>], spectrum: Vec<f64>) -> Subspace<f64> {
    Subspace::new(Matrix::from_columns(cols).unwrap(), spectrum, SubspaceKind::Quality).unwrap()
}

fn axis(d: usize, k: usize) -> Vec<f64> {
    let mut v = vec![0.0; d];
    v[k] = 1.0;
    v
}

#[test]
fn quality_weights_match_definition() {
    let mut r = rng(3);
    for _ in 0..50 {
        let scores: Vec<f64> = (0..20).map(|_| r.random_range(1e-6..1.0 - 1e-6)).collect();
        let ours = quality_weights(&scores, &QualityConfig::default()).unwrap();
        let oracle = quality_weights_oracle(&scores, 7.0, 0.3);
        for (a, b) in ours.as_slice().iter().zip(oracle) {
            assert!((a - b).abs() < 1e-15);
        }
    }
}

#[test]
fn exemplars_match_definitions() {
    let t = random_template(5, 6, 9);
    let ys = samples(&t);
    let mean = exemplar_mean(&t);
    let q = exemplar_quality(&t, &QualityConfig::default()).unwrap();
    let w = quality_weights_oracle(t.qualities(), 7.0, 0.3);
    for k in 0..6 {
        let m: f64 = ys.iter().map(|y| y[k]).sum::<f64>() / 9.0;
        let qk: f64 = ys.iter().zip(&w).map(|(y, w)| w * y[k]).sum::<f64>() / 9.0;
        assert!((mean.vector[k] - m).abs() < 1e-15);
        assert!((q.vector[k] - qk).abs() < 1e-15);
    }
}

#[test]
fn subspaces_match_oracle_both_routes() {
    let cfg = AggregateConfig::default();
    for (seed, dim, n) in [(1, 8, 20), (2, 20, 6), (3, 5, 5), (4, 32, 50), (5, 32, 4)] {
        let t = random_template(seed, dim, n);
        let d = cfg.subspace_dim.min(dim).min(n);
        let sub = learn_subspace_with(&t, &cfg).unwrap();
        let (vals, vecs) = weighted_subspace_oracle(&samples(&t), &vec![1.0; n], d);
        assert!(frobenius_diff(&projector(&vecs), &sub.projector()) < 1e-8, "Sub {seed}");
        for (a, b) in sub.spectrum().iter().zip(&vals) {
            assert!((a - b).abs() < 1e-10);
        }
        let w: Vec<f64> = quality_weights_oracle(t.qualities(), 7.0, 0.3).iter().map(|x| x * n as f64).collect();
        let qsub = learn_subspace_quality(&t, &cfg).unwrap();
        let (qvals, qvecs) = weighted_subspace_oracle(&samples(&t), &w, d);
        assert!(frobenius_diff(&projector(&qvecs), &qsub.projector()) < 1e-8, "QSub {seed}");
        for (a, b) in qsub.spectrum().iter().zip(&qvals) {
            assert!((a - b).abs() < 1e-10);
        }
    }
}

#[test]
fn centered_subspace_matches_oracle() {
    let cfg = AggregateConfig { center: true, ..Default::default() };
    let t = random_template(9, 10, 7);
    let ys = samples(&t);
    let mean: Vec<f64> = (0..10).map(|k| ys.iter().map(|y| y[k]).sum::<f64>() / 7.0).collect();
    let centered: Vec<Vec<f64>> = ys.iter().map(|y| y.iter().zip(&mean).map(|(a, b)| a - b).collect()).collect();
    let (_, vecs) = weighted_subspace_oracle(&centered, &[1.0; 7], 3);
    let sub = learn_subspace_with(&t, &cfg).unwrap();
    assert!(frobenius_diff(&projector(&vecs), &sub.projector()) < 1e-8);
}

#[test]
fn projection_metric_identities() {
    let s = subspace(&[axis(3, 0), axis(3, 1)], vec![1.0, 1.0]);
    let t = subspace(&[axis(3, 0), axis(3, 2)], vec![1.0, 1.0]);
    let o = subspace(&[axis(3, 2)], vec![1.0]);
    assert!((projection_metric(&s, &s).unwrap() - 1.0).abs() < 1e-15);
    assert_eq!(projection_metric(&s, &o).unwrap(), 0.0);
    assert!((projection_metric(&s, &t).unwrap() - 0.5f64.sqrt()).abs() < 1e-15);
}

#[test]
fn pm_equals_principal_angle_path() {
    let cfg = AggregateConfig { subspace_dim: 4, ..Default::default() };
    for seed in 0..30 {
        let a = learn_subspace_with(&random_template(seed, 12, 10), &cfg).unwrap();
        let b = learn_subspace_with(&random_template(seed + 100, 12, 10), &cfg).unwrap();
        let pm = projection_metric(&a, &b).unwrap();
        let cos = principal_angle_cosines(&a, &b).unwrap().cosines;
        let mean_sq = cos.iter().map(|c| c * c).sum::<f64>() / cos.len() as f64;
        assert!((pm - mean_sq.sqrt()).abs() < 1e-10);

        // singular values of P₁ᵀP₂ through the oracle
        let cross = a.basis().tr_matmul(b.basis()).unwrap();
        let g = cross.tr_matmul(&cross).unwrap();
        let rows: Vec<Vec<f64>> = (0..g.rows()).map(|i| g.row(i).to_vec()).collect();
        let (sv2, _) = jacobi_oracle(&rows);
        let oracle = (sv2.iter().map(|v| v.max(0.0)).sum::<f64>() / 4.0).sqrt();
        assert!((pm - oracle).abs() < 1e-10);
    }
}

#[test]
fn vpm_analytic_cases() {
    let e = std::f64::consts::E;
    let cols = [axis(4, 0), axis(4, 1)];
    let s = subspace(&cols, vec![e * e, e * e]);
    assert!((vpm(&s, &s).unwrap() - 0.25).abs() < 1e-10);
    let s = subspace(&cols, vec![e.powi(4), 1.0]);
    assert!((vpm(&s, &s).unwrap() - 0.5f64.sqrt()).abs() < 1e-10);
    // full clamp: each basis becomes P/d, so the metric scales by 1/d per side
    let s = subspace(&cols, vec![1.0, 0.5]);
    let b = variance_weighted_basis(&s);
    assert!(b.sub(&s.basis().scale(0.5)).unwrap().frobenius_norm() < 1e-15);
    let pm = projection_metric(&s, &s).unwrap();
    assert!((vpm(&s, &s).unwrap() - pm / 4.0).abs() < 1e-10);
    let t = subspace(&[unit(vec![1.0, 0.0, 1.0, 0.0]), axis(4, 1)], vec![0.9, 0.2]);
    let pm = projection_metric(&s, &t).unwrap();
    assert!((vpm(&s, &t).unwrap() - pm / 4.0).abs() < 1e-10);
}

#[test]
fn fusion_rules() {
    let t = random_template(1, 8, 6);
    let agg = AggregateConfig::default();
    let plain = SimilarityConfig::named("Cos+Sub-PM", 1.0).unwrap();
    let r = represent(&t, &plain, &agg).unwrap();
    assert!((template_similarity(&r, &r, &plain).unwrap() - 2.0).abs() < 1e-12);

    let zero = SimilarityConfig::named("QCos+QSub-VPM", 0.0).unwrap();
    let qcos = SimilarityConfig::named("QCos", 1.0).unwrap();
    let u = random_template(2, 8, 6);
    let (ra, rb) = (represent(&t, &zero, &agg).unwrap(), represent(&u, &zero, &agg).unwrap());
    let (qa, qb) = (represent(&t, &qcos, &agg).unwrap(), represent(&u, &qcos, &agg).unwrap());
    assert_eq!(
        template_similarity(&ra, &rb, &zero).unwrap(),
        template_similarity(&qa, &qb, &qcos).unwrap()
    );
}

#[test]
fn all_variants_parse_and_score() {
    let agg = AggregateConfig::default();
    let a = random_template(3, 8, 5);
    let b = random_template(4, 8, 7);
    for name in SimilarityConfig::VARIANTS {
        let cfg: SimilarityConfig = name.parse().unwrap();
        assert_eq!(cfg.name(), name);
        let s = template_similarity(&represent(&a, &cfg, &agg).unwrap(), &represent(&b, &cfg, &agg).unwrap(), &cfg).unwrap();
        assert!(s.is_finite());
    }
    assert!("QCos+Sub-XYZ".parse::<SimilarityConfig>().is_err());
}

#[test]
fn single_precision_pipeline_agrees() {
    let t = random_template(8, 10, 12);
    let t32 = Template::from_vectors(
        t.samples().iter().map(|s| s.as_slice().iter().map(|&x| x as f32).collect()).collect(),
        t.qualities().iter().map(|&q| q as f32).collect(),
        None,
    )
    .unwrap();
    let cfg = AggregateConfig::default();
    let p64 = learn_subspace_quality(&t, &cfg).unwrap().projector();
    let p32 = learn_subspace_quality(&t32, &cfg).unwrap().projector().cast::<f64>();
    assert!(p64.sub(&p32).unwrap().frobenius_norm() < 1e-4);
}

proptest! {
    #[test]
    fn projector_properties(seed in 0u64..5000, dim in 2usize..16, n in 1usize..20) {
        let t = random_template(seed, dim, n);
        let s = learn_subspace_quality(&t, &AggregateConfig::default()).unwrap();
        let p = s.projector();
        prop_assert!(p.sub(&p.matmul(&p).unwrap()).unwrap().frobenius_norm() < 1e-10);
        prop_assert!(p.sub(&p.transpose()).unwrap().frobenius_norm() < 1e-12);
        prop_assert!((p.trace() - s.dim() as f64).abs() < 1e-10);
        for w in s.spectrum().windows(2) {
            prop_assert!(w[0] >= w[1]);
        }
    }

    #[test]
    fn uniform_scores_make_qsub_equal_sub(seed in 0u64..5000, dim in 2usize..12, n in 1usize..15, score in 0.31f64..0.99) {
        let t = random_template(seed, dim, n);
        let flat = Template::from_vectors(samples(&t), vec![score; n], None).unwrap();
        let cfg = AggregateConfig::default();
        let a = learn_subspace_with(&flat, &cfg).unwrap();
        let b = learn_subspace_quality(&flat, &cfg).unwrap();
        prop_assert!(a.projector().sub(&b.projector()).unwrap().frobenius_norm() <= 1e-8);
        for (x, y) in a.spectrum().iter().zip(b.spectrum()) {
            prop_assert!((x - y).abs() <= 1e-10 * a.spectrum()[0].max(1.0));
        }
    }

    #[test]
    fn pm_symmetric_and_bounded(s1 in 0u64..5000, s2 in 0u64..5000, d1 in 1usize..5, d2 in 1usize..5) {
        let a = learn_subspace_with(&random_template(s1, 9, 8), &AggregateConfig { subspace_dim: d1, ..Default::default() }).unwrap();
        let b = learn_subspace_with(&random_template(s2, 9, 8), &AggregateConfig { subspace_dim: d2, ..Default::default() }).unwrap();
        let ab = projection_metric(&a, &b).unwrap();
        let ba = projection_metric(&b, &a).unwrap();
        prop_assert!((ab - ba).abs() < 1e-14);
        prop_assert!((-1e-15..=1.0 + 1e-12).contains(&ab));
        let v = vpm(&a, &b).unwrap();
        prop_assert!((v - vpm(&b, &a).unwrap()).abs() < 1e-14);
        prop_assert!(v >= 0.0 && v <= 1.0 + 1e-12);
    }

    #[test]
    fn sample_order_does_not_matter(seed in 0u64..5000, shift in 0usize..10) {
        let t = random_template(seed, 7, 10);
        let mut ys = samples(&t);
        let mut qs = t.qualities().to_vec();
        ys.rotate_left(shift);
        qs.rotate_left(shift);
        let u = Template::from_vectors(ys, qs, None).unwrap();
        let cfg = AggregateConfig::default();
        let a = learn_subspace_quality(&t, &cfg).unwrap().projector();
        let b = learn_subspace_quality(&u, &cfg).unwrap().projector();
        prop_assert!(a.sub(&b).unwrap().frobenius_norm() < 1e-9);
    }
}
