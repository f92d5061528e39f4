use tvbma::project::{future_bias_scale, ModelFuture};
use tvbma::{sample_projection, summarize, ProjectionInputs, ProjectionVariant, WeightVector};

fn flat(id: &str, level: f64, m: usize) -> ModelFuture {
    ModelFuture {
        id: id.into(),
        trend: vec![level; m],
        anomalies: vec![0.0; m],
        reference_mean: 0.0,
        ar1: None,
    }
}

fn inputs(models: Vec<ModelFuture>, weights: Vec<f64>, bias: f64, f: f64) -> ProjectionInputs {
    ProjectionInputs {
        models,
        weights: WeightVector::new(weights).unwrap(),
        bias_scale: bias,
        f,
        variant: ProjectionVariant::Boot,
        n_draws: 100_000,
    }
}

#[test]
fn single_model_gives_normal_quantiles() {
    let r = sample_projection(&inputs(vec![flat("a", 0.0, 20)], vec![1.0], 1.0, 1.0), 3).unwrap();
    let s = &r.summary;
    // 1.6448536 is the standard normal 95th percentile
    assert!((s.ci90.0 + 1.644_853_6).abs() < 0.03, "{s:?}");
    assert!((s.ci90.1 - 1.644_853_6).abs() < 0.03, "{s:?}");
    assert!(s.mean.abs() < 0.02);
    assert!((s.mode - s.median).abs() < 2.0 * s.bandwidth, "{s:?}");
}

#[test]
fn interval_widens_with_f() {
    let models = vec![flat("a", 1.0, 10), flat("b", 2.0, 10)];
    let mut last = 0.0;
    for f in [0.0, 0.5, 1.0, 2.0, 4.0] {
        let w = sample_projection(&inputs(models.clone(), vec![0.5, 0.5], 0.7, f), 9)
            .unwrap()
            .summary
            .ci_width();
        assert!(w > last, "f={f}: {w} <= {last}");
        last = w;
    }
}

#[test]
fn draw_counts_follow_weights() {
    let w = vec![0.5, 0.3, 0.2];
    let models = vec![flat("a", 0.0, 5), flat("b", 1.0, 5), flat("c", 2.0, 5)];
    let r = sample_projection(&inputs(models, w.clone(), 0.0, 0.0), 11).unwrap();
    let n = 100_000.0;
    let chi2: f64 = r
        .per_model_draw_counts
        .iter()
        .zip(&w)
        .map(|(&c, p)| (c as f64 - n * p).powi(2) / (n * p))
        .sum();
    // 0.999 quantile of chi-square with 2 degrees of freedom
    assert!(chi2 < 13.82, "chi2 {chi2}");
}

#[test]
fn zero_weight_models_are_never_drawn() {
    let models = vec![flat("a", 0.0, 5), flat("b", 1.0, 5), flat("c", 2.0, 5)];
    let r = sample_projection(&inputs(models, vec![0.0, 1.0, 0.0], 0.3, 1.0), 5).unwrap();
    assert_eq!(r.per_model_draw_counts, vec![0, 100_000, 0]);
}

#[test]
fn projection_is_deterministic() {
    let models = vec![flat("a", 0.0, 5), flat("b", 1.0, 5)];
    let i = inputs(models, vec![0.4, 0.6], 0.3, 1.0);
    assert_eq!(sample_projection(&i, 1).unwrap(), sample_projection(&i, 1).unwrap());
    assert_ne!(sample_projection(&i, 1).unwrap(), sample_projection(&i, 2).unwrap());
}

#[test]
fn bias_scale_matches_hand_value() {
    // closest pairs 0->1, 1->0, 2->1 give differences -1, 1, 2
    let v = vec![vec![0.0; 4], vec![1.0; 4], vec![3.0; 4]];
    let s = future_bias_scale(&v).unwrap();
    assert!((s - (7.0f64 / 3.0).sqrt()).abs() < 1e-12, "{s}");
}

#[test]
fn bias_scale_vanishes_for_equal_means() {
    let v = vec![vec![1.0, -1.0], vec![-1.0, 1.0], vec![0.0, 0.0]];
    assert_eq!(future_bias_scale(&v).unwrap(), 0.0);
}

#[test]
fn bias_draws_have_zero_mean() {
    let r = sample_projection(&inputs(vec![flat("a", 0.0, 5)], vec![1.0], 2.0, 1.5), 17).unwrap();
    // standard error is 3 / sqrt(1e5), about 0.0095
    assert!(r.summary.mean.abs() < 0.04, "{}", r.summary.mean);
}

#[test]
fn density_integrates_to_one() {
    let models = vec![flat("a", 0.0, 5), flat("b", 3.0, 5)];
    let r = sample_projection(&inputs(models, vec![0.3, 0.7], 0.5, 1.0), 4).unwrap();
    let g = r.density().unwrap();
    let area: f64 = g
        .x
        .windows(2)
        .zip(g.density.windows(2))
        .map(|(x, d)| 0.5 * (x[1] - x[0]) * (d[0] + d[1]))
        .sum();
    assert!((area - 1.0).abs() < 1e-3, "{area}");
}

#[test]
fn constant_sample_summary() {
    let s = summarize(&[2.5; 50]).unwrap();
    assert_eq!((s.mean, s.median, s.mode, s.ci90), (2.5, 2.5, 2.5, (2.5, 2.5)));
    assert_eq!(s.bandwidth, 0.0);
}

#[test]
fn ar1_variant_spreads_draws() {
    let mut m = flat("a", 0.0, 40);
    m.anomalies = (0..40).map(|t| if t % 2 == 0 { 1.0 } else { -0.8 }).collect();
    let mut i = inputs(vec![m], vec![1.0], 0.0, 0.0);
    i.variant = ProjectionVariant::Ar1;
    let r = sample_projection(&i, 2).unwrap();
    assert!(r.summary.ci_width() > 0.0);
}
