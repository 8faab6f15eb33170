use chronos_core::growth::{
    compare_models, fit_logistic_mle, fit_normal_mle, logistic_cdf, logistic_gradient, logistic_loglik, logistic_pdf,
    logistic_quantile, verify_logistic_ode,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn logistic_draws(n: usize, mu: f64, beta: f64, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let u: f64 = rng.random_range(f64::EPSILON..1.0);
            logistic_quantile(u, mu, beta)
        })
        .collect()
}

fn normal_draws(n: usize, mu: f64, sigma: f64, seed: u64) -> Vec<f64> {
    // Box–Muller.
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let u1: f64 = rng.random_range(f64::EPSILON..1.0);
            let u2: f64 = rng.random_range(0.0..1.0);
            mu + sigma * (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
        })
        .collect()
}

/// Composite Simpson rule.
fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, intervals: usize) -> f64 {
    let h = (b - a) / intervals as f64;
    let mut s = f(a) + f(b);
    for k in 1..intervals {
        s += f(a + k as f64 * h) * if k % 2 == 1 { 4.0 } else { 2.0 };
    }
    s * h / 3.0
}

#[test]
fn pdf_integrates_to_one() {
    let (mu, beta) = (100.0, 8.0);
    let total = simpson(|t| logistic_pdf(t, mu, beta), mu - 40.0 * beta, mu + 40.0 * beta, 200_000);
    assert!((total - 1.0).abs() < 1e-9, "{total}");
}

#[test]
fn cdf_matches_integrated_pdf() {
    let (mu, beta) = (3.0, 1.5);
    let lo = mu - 60.0 * beta;
    for k in 0..=20 {
        let t = mu - 10.0 + k as f64;
        let integral = simpson(|s| logistic_pdf(s, mu, beta), lo, t, 100_000);
        assert!((integral - logistic_cdf(t, mu, beta)).abs() < 1e-8, "t = {t}");
    }
}

#[test]
fn pdf_is_derivative_of_cdf() {
    let h = 1e-5;
    for k in -50..=50 {
        let t = k as f64 * 0.7;
        let fd = (logistic_cdf(t + h, 1.0, 2.0) - logistic_cdf(t - h, 1.0, 2.0)) / (2.0 * h);
        assert!((fd - logistic_pdf(t, 1.0, 2.0)).abs() < 1e-6);
    }
}

#[test]
fn ode_residual_is_second_order() {
    let grid: Vec<f64> = (-100..=100).map(|k| k as f64 * 0.1).collect();
    let r1 = verify_logistic_ode(0.0, 1.0, &grid, 1e-4);
    assert!(r1 <= 1e-7, "{r1}");
    let coarse = verify_logistic_ode(0.0, 1.0, &grid, 1e-2);
    let fine = verify_logistic_ode(0.0, 1.0, &grid, 5e-3);
    let ratio = coarse / fine;
    assert!((3.5..4.5).contains(&ratio), "ratio {ratio}");
}

#[test]
fn large_logistic_sample_recovers_parameters() {
    let samples = logistic_draws(10_000, 100.0, 8.0, 42);
    let fit = fit_logistic_mle(&samples).unwrap();
    assert!((fit.mu - 100.0).abs() <= 0.5, "{}", fit.mu);
    assert!((fit.beta - 8.0).abs() <= 0.3, "{}", fit.beta);
    assert!(fit.gradient_norm <= 1e-8);

    // Grid search around the estimate finds nothing better.
    let mut best = f64::NEG_INFINITY;
    let mut arg = (0.0, 0.0);
    for i in -40..=40 {
        for j in -40..=40 {
            let (m, b) = (fit.mu + i as f64 * 0.01, fit.beta + j as f64 * 0.01);
            let l = logistic_loglik(&samples, m, b);
            if l > best {
                best = l;
                arg = (m, b);
            }
        }
    }
    assert!(fit.loglik >= best - 1e-9);
    assert!((arg.0 - fit.mu).abs() <= 0.01 && (arg.1 - fit.beta).abs() <= 0.01);
}

#[test]
fn analytic_gradient_matches_finite_differences() {
    let samples = logistic_draws(500, 50.0, 5.0, 7);
    for (mu, beta) in [(50.0, 5.0), (47.0, 6.5), (55.0, 3.0)] {
        let g = logistic_gradient(&samples, mu, beta);
        let h = 1e-5;
        let gm = (logistic_loglik(&samples, mu + h, beta) - logistic_loglik(&samples, mu - h, beta)) / (2.0 * h);
        let gb = (logistic_loglik(&samples, mu, beta + h) - logistic_loglik(&samples, mu, beta - h)) / (2.0 * h);
        assert!((g[0] - gm).abs() <= 1e-6 * g[0].abs().max(1.0), "{} vs {gm}", g[0]);
        assert!((g[1] - gb).abs() <= 1e-6 * g[1].abs().max(1.0), "{} vs {gb}", g[1]);
    }
}

#[test]
fn fit_beats_random_perturbations() {
    let samples = logistic_draws(300, 10.0, 2.0, 3);
    let fit = fit_logistic_mle(&samples).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..100 {
        let m = fit.mu + rng.random_range(-1.0..1.0);
        let b = fit.beta * rng.random_range(0.5..1.5);
        assert!(logistic_loglik(&samples, m, b) <= fit.loglik);
    }
}

#[test]
fn normal_loglik_identity() {
    let samples = normal_draws(1000, 3.0, 2.0, 1);
    let f = fit_normal_mle(&samples).unwrap();
    let n = samples.len() as f64;
    let closed = -n / 2.0 * (1.0 + (2.0 * std::f64::consts::PI * f.sigma * f.sigma).ln());
    assert!((f.loglik - closed).abs() < 1e-9 * closed.abs());
}

#[test]
fn comparison_prefers_the_generating_family() {
    let mut logistic_wins = 0;
    let mut normal_wins = 0;
    for seed in 0..10 {
        if compare_models(&logistic_draws(2000, 100.0, 8.0, seed), None).unwrap().delta_loglik >= 0.0 {
            logistic_wins += 1;
        }
        if compare_models(&normal_draws(2000, 100.0, 14.0, 100 + seed), None).unwrap().delta_loglik <= 0.0 {
            normal_wins += 1;
        }
    }
    assert!(logistic_wins >= 9 && normal_wins >= 9, "{logistic_wins} {normal_wins}");
}

#[test]
fn histogram_counts_every_sample() {
    let samples = logistic_draws(1234, 0.0, 1.0, 9);
    let report = compare_models(&samples, None).unwrap();
    assert_eq!(report.histogram.iter().map(|b| b.count).sum::<usize>(), samples.len());
    let area: f64 = report.histogram.iter().map(|b| b.density * (b.right - b.left)).sum();
    assert!((area - 1.0).abs() < 1e-12);
    assert_eq!(report.ecdf.len(), samples.len());
    assert_eq!(report.ecdf.last().unwrap().empirical, 1.0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn location_scale_equivariance(seed in 0u64..1000, shift in -500.0f64..500.0, scale in 0.1f64..10.0) {
        let samples = logistic_draws(200, 20.0, 3.0, seed);
        let base = fit_logistic_mle(&samples).unwrap();
        let shifted: Vec<f64> = samples.iter().map(|v| v + shift).collect();
        let s = fit_logistic_mle(&shifted).unwrap();
        prop_assert!((s.mu - base.mu - shift).abs() <= 1e-8 * (1.0 + shift.abs()));
        prop_assert!((s.beta - base.beta).abs() <= 1e-8);
        let scaled: Vec<f64> = samples.iter().map(|v| v * scale).collect();
        let s = fit_logistic_mle(&scaled).unwrap();
        prop_assert!((s.beta - base.beta * scale).abs() <= 1e-8 * scale.max(1.0));
        let n0 = fit_normal_mle(&samples).unwrap();
        let n1 = fit_normal_mle(&scaled).unwrap();
        prop_assert!((n1.sigma - n0.sigma * scale).abs() <= 1e-8 * scale.max(1.0));
    }

    #[test]
    fn pdf_is_symmetric(mu in -100.0f64..100.0, beta in 0.1f64..20.0, x in 0.0f64..50.0) {
        prop_assert!((logistic_pdf(mu + x, mu, beta) - logistic_pdf(mu - x, mu, beta)).abs() <= 1e-15);
    }

    #[test]
    fn cdf_is_monotone_and_bounded(mu in -10.0f64..10.0, beta in 0.1f64..5.0, a in -30.0f64..30.0, d in 1e-3f64..5.0) {
        let (fa, fb) = (logistic_cdf(a, mu, beta), logistic_cdf(a + d, mu, beta));
        prop_assert!(fa > 0.0 && fb < 1.0 || fb == 1.0 && (a + d - mu) / beta > 30.0);
        prop_assert!(fa <= fb);
    }
}
