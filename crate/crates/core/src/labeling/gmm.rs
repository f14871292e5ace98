//! One-dimensional Gaussian mixtures fitted by expectation-maximization.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::ScoreRange;
use crate::error::{Error, Result};

/// Settings for [`fit_gmm`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EmConfig {
    pub max_iterations: usize,
    /// Stop once the relative log-likelihood improvement drops below this.
    pub tolerance: f64,
    /// Variances are floored at `variance_floor_factor * range_len^2`.
    pub variance_floor_factor: f64,
    /// Total number of EM runs. Run 0 uses the quantile initialization, later runs
    /// jitter its means. The best log-likelihood wins.
    pub restarts: usize,
    pub seed: u64,
    /// Score range used for the variance floor. Defaults to the data range.
    pub score_range: Option<ScoreRange>,
}

impl Default for EmConfig {
    fn default() -> Self {
        EmConfig {
            max_iterations: 500,
            tolerance: 1e-8,
            variance_floor_factor: 1e-6,
            restarts: 1,
            seed: 0,
            score_range: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GmmComponent {
    pub weight: f64,
    pub mean: f64,
    pub variance: f64,
}

impl GmmComponent {
    fn log_density(&self, y: f64) -> f64 {
        let d = y - self.mean;
        -0.5 * ((2.0 * PI * self.variance).ln() + d * d / self.variance)
    }

    /// Weighted log density `ln(weight * N(y | mean, variance))`.
    pub fn log_weighted_density(&self, y: f64) -> f64 {
        self.weight.ln() + self.log_density(y)
    }
}

/// A fitted mixture. Components are sorted by ascending mean, so a component's
/// index is also its quality rank.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GmmModel {
    pub components: Vec<GmmComponent>,
    /// Data log-likelihood; `None` for mixtures built from explicit components.
    pub log_likelihood: Option<f64>,
    pub n_iterations: usize,
    pub converged: bool,
    /// Set when two components share a mean exactly.
    pub degenerate: bool,
    /// Log-likelihood after the initialization and after every EM iteration of
    /// the winning run.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub trace: Vec<f64>,
}

impl GmmModel {
    /// Wraps explicit components (sorted on the way in). Weights are renormalized.
    pub fn from_components(mut components: Vec<GmmComponent>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::Validation("mixture needs at least one component".into()));
        }
        for c in &components {
            if !(c.weight > 0.0 && c.variance > 0.0 && c.mean.is_finite()) {
                return Err(Error::Validation(format!("invalid mixture component {c:?}")));
            }
        }
        let total: f64 = components.iter().map(|c| c.weight).sum();
        components.iter_mut().for_each(|c| c.weight /= total);
        let degenerate = sort_components(&mut components);
        Ok(GmmModel {
            components,
            log_likelihood: None,
            n_iterations: 0,
            converged: true,
            degenerate,
            trace: Vec::new(),
        })
    }

    pub fn n_components(&self) -> usize {
        self.components.len()
    }

    /// Mixture density p(y).
    pub fn density(&self, y: f64) -> f64 {
        self.components
            .iter()
            .map(|c| c.log_weighted_density(y).exp())
            .sum()
    }

    /// Posterior class probabilities, evaluated in log space.
    pub fn posterior(&self, y: f64) -> Vec<f64> {
        let logs: Vec<f64> = self
            .components
            .iter()
            .map(|c| c.log_weighted_density(y))
            .collect();
        let norm = log_sum_exp(&logs);
        let mut p: Vec<f64> = logs.iter().map(|l| (l - norm).exp()).collect();
        let s: f64 = p.iter().sum();
        p.iter_mut().for_each(|v| *v /= s);
        p
    }

    /// Index of the most probable component; ties go to the lower-mean one.
    pub fn argmax(&self, y: f64) -> usize {
        let mut best = 0;
        let mut best_log = f64::NEG_INFINITY;
        for (k, c) in self.components.iter().enumerate() {
            let l = c.log_weighted_density(y);
            if l > best_log {
                best_log = l;
                best = k;
            }
        }
        best
    }

    pub fn assign_labels(&self, scores: &[f64]) -> Vec<usize> {
        scores.iter().map(|&y| self.argmax(y)).collect()
    }

    pub fn log_likelihood_of(&self, scores: &[f64]) -> f64 {
        let mut buf = vec![0.0; self.components.len()];
        scores
            .iter()
            .map(|&y| {
                for (b, c) in buf.iter_mut().zip(&self.components) {
                    *b = c.log_weighted_density(y);
                }
                log_sum_exp(&buf)
            })
            .sum()
    }
}

fn log_sum_exp(v: &[f64]) -> f64 {
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Sorts by mean then variance; returns true when two means tie exactly.
fn sort_components(components: &mut [GmmComponent]) -> bool {
    components.sort_by(|a, b| {
        a.mean
            .total_cmp(&b.mean)
            .then(a.variance.total_cmp(&b.variance))
    });
    components.windows(2).any(|w| w[0].mean == w[1].mean)
}

/// Linear-interpolation quantile of sorted data.
fn quantile(sorted: &[f64], p: f64) -> f64 {
    let pos = p * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + frac * (sorted[hi] - sorted[lo])
}

struct EmRun {
    components: Vec<GmmComponent>,
    log_likelihood: f64,
    n_iterations: usize,
    converged: bool,
    trace: Vec<f64>,
}

/// E-step. Fills `resp` (row-major, one row per score) and returns the log-likelihood.
fn expectation(components: &[GmmComponent], scores: &[f64], resp: &mut [f64]) -> f64 {
    let k = components.len();
    let mut ll = 0.0;
    for (i, &y) in scores.iter().enumerate() {
        let row = &mut resp[i * k..(i + 1) * k];
        for (r, c) in row.iter_mut().zip(components) {
            *r = c.log_weighted_density(y);
        }
        let norm = log_sum_exp(row);
        ll += norm;
        row.iter_mut().for_each(|r| *r = (*r - norm).exp());
    }
    ll
}

fn maximization(components: &mut [GmmComponent], scores: &[f64], resp: &[f64], floor: f64) {
    let k = components.len();
    let n = scores.len() as f64;
    for (j, c) in components.iter_mut().enumerate() {
        let mut mass = 0.0;
        let mut first = 0.0;
        for (i, &y) in scores.iter().enumerate() {
            let r = resp[i * k + j];
            mass += r;
            first += r * y;
        }
        if mass <= f64::MIN_POSITIVE {
            // emptied component: keep its location, give it negligible weight
            c.weight = f64::MIN_POSITIVE;
            c.variance = c.variance.max(floor);
            continue;
        }
        let mean = first / mass;
        let second: f64 = scores
            .iter()
            .enumerate()
            .map(|(i, &y)| resp[i * k + j] * (y - mean) * (y - mean))
            .sum();
        c.weight = mass / n;
        c.mean = mean;
        c.variance = (second / mass).max(floor);
    }
}

fn run_em(init: Vec<GmmComponent>, scores: &[f64], config: &EmConfig, floor: f64) -> EmRun {
    let mut components = init;
    let mut resp = vec![0.0; scores.len() * components.len()];
    let mut ll = expectation(&components, scores, &mut resp);
    let mut trace = vec![ll];
    let mut converged = false;
    let mut n_iterations = 0;
    for it in 1..=config.max_iterations {
        maximization(&mut components, scores, &resp, floor);
        let next = expectation(&components, scores, &mut resp);
        trace.push(next);
        n_iterations = it;
        let improvement = (next - ll) / ll.abs().max(f64::MIN_POSITIVE);
        ll = next;
        if improvement < config.tolerance {
            converged = true;
            break;
        }
    }
    EmRun {
        components,
        log_likelihood: ll,
        n_iterations,
        converged,
        trace,
    }
}

/// Fits an `n_components` mixture to `scores` by EM.
pub fn fit_gmm(scores: &[f64], n_components: usize, config: &EmConfig) -> Result<GmmModel> {
    if n_components == 0 {
        return Err(Error::Validation("n_components must be at least 1".into()));
    }
    let required = 10 * n_components;
    if scores.len() < required {
        return Err(Error::TooFewSamples {
            required,
            actual: scores.len(),
        });
    }
    if let Some(bad) = scores.iter().find(|v| !v.is_finite()) {
        return Err(Error::Validation(format!("non-finite score {bad}")));
    }
    let mut sorted = scores.to_vec();
    sorted.sort_by(f64::total_cmp);
    let (lo, hi) = (sorted[0], sorted[sorted.len() - 1]);
    if lo == hi {
        return Err(Error::Degenerate(format!("all {} scores equal {lo}", scores.len())));
    }

    let n = scores.len() as f64;
    let mean = scores.iter().sum::<f64>() / n;
    let variance = scores.iter().map(|y| (y - mean) * (y - mean)).sum::<f64>() / n;
    let range_len = config.score_range.map_or(hi - lo, |r| r.len());
    let floor = config.variance_floor_factor * range_len * range_len;
    let k = n_components as f64;

    let base: Vec<GmmComponent> = (0..n_components)
        .map(|j| GmmComponent {
            weight: 1.0 / k,
            mean: quantile(&sorted, (j as f64 + 0.5) / k),
            variance: (variance / (k * k)).max(floor),
        })
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let jitter = variance.sqrt() / k;
    let mut best: Option<EmRun> = None;
    for restart in 0..config.restarts.max(1) {
        let init = if restart == 0 {
            base.clone()
        } else {
            base.iter()
                .map(|c| GmmComponent {
                    mean: c.mean + jitter * rng.random_range(-1.0..1.0),
                    ..*c
                })
                .collect()
        };
        let run = run_em(init, scores, config, floor);
        log::debug!(
            "EM restart {restart}: ll={} after {} iterations",
            run.log_likelihood,
            run.n_iterations
        );
        if best
            .as_ref()
            .is_none_or(|b| run.log_likelihood > b.log_likelihood)
        {
            best = Some(run);
        }
    }

    let run = best.expect("at least one EM run");
    let mut components = run.components;
    let degenerate = sort_components(&mut components);
    let total: f64 = components.iter().map(|c| c.weight).sum();
    components.iter_mut().for_each(|c| c.weight /= total);
    Ok(GmmModel {
        components,
        log_likelihood: Some(run.log_likelihood),
        n_iterations: run.n_iterations,
        converged: run.converged,
        degenerate,
        trace: run.trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand_distr::{Distribution, Normal};

    fn two_mixture_draws(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let low = Normal::new(2.0, 0.3).unwrap();
        let high = Normal::new(4.0, 0.3).unwrap();
        (0..n)
            .map(|_| {
                if rng.random_bool(0.5) {
                    low.sample(&mut rng)
                } else {
                    high.sample(&mut rng)
                }
            })
            .collect()
    }

    #[test]
    fn single_component_is_closed_form() {
        let scores: Vec<f64> = (0..50).map(|i| ((i * 37) % 11) as f64 * 0.3 + 1.0).collect();
        let m = fit_gmm(&scores, 1, &EmConfig::default()).unwrap();
        let n = scores.len() as f64;
        let mean = scores.iter().sum::<f64>() / n;
        let var = scores.iter().map(|y| (y - mean).powi(2)).sum::<f64>() / n;
        assert_eq!(m.components.len(), 1);
        assert_abs_diff_eq!(m.components[0].mean, mean, epsilon = 1e-9);
        assert_abs_diff_eq!(m.components[0].variance, var, epsilon = 1e-9);
        assert_abs_diff_eq!(m.components[0].weight, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn recovers_two_component_mixture() {
        let scores = two_mixture_draws(5000, 7);
        let m = fit_gmm(&scores, 2, &EmConfig::default()).unwrap();
        assert!(m.converged);
        let (a, b) = (m.components[0], m.components[1]);
        assert!((a.mean - 2.0).abs() < 0.05, "{a:?}");
        assert!((b.mean - 4.0).abs() < 0.05, "{b:?}");
        assert!((a.weight - 0.5).abs() < 0.03);
        assert!((b.weight - 0.5).abs() < 0.03);
        for w in m.trace.windows(2) {
            assert!(w[1] >= w[0] - 1e-10 * w[0].abs(), "ll decreased: {w:?}");
        }
    }

    #[test]
    fn rejects_too_few_and_constant() {
        assert!(matches!(
            fit_gmm(&[1.0; 15], 2, &EmConfig::default()),
            Err(Error::TooFewSamples { required: 20, actual: 15 })
        ));
        assert!(matches!(
            fit_gmm(&[3.0; 40], 2, &EmConfig::default()),
            Err(Error::Degenerate(_))
        ));
        assert!(fit_gmm(&[1.0, 2.0], 0, &EmConfig::default()).is_err());
    }

    #[test]
    fn posterior_examples() {
        let m = GmmModel::from_components(vec![
            GmmComponent { weight: 0.5, mean: 2.0, variance: 0.09 },
            GmmComponent { weight: 0.5, mean: 4.0, variance: 0.09 },
        ])
        .unwrap();
        assert!(m.posterior(2.0)[0] > 0.5);
        let mid = m.posterior(3.0);
        assert_abs_diff_eq!(mid[0], 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(mid[1], 0.5, epsilon = 1e-12);
        // logistic of the log-density gap, evaluated from the raw Gaussian formula
        let y: f64 = 2.5;
        let pdf = |mu: f64| (-(y - mu).powi(2) / (2.0 * 0.09)).exp() / (2.0 * PI * 0.09).sqrt();
        let gap = pdf(2.0).ln() - pdf(4.0).ln();
        let expected = 1.0 / (1.0 + (-gap).exp());
        assert_abs_diff_eq!(m.posterior(y)[0], expected, epsilon = 1e-12);
        assert_eq!(m.argmax(-100.0), 0);
        assert_eq!(m.argmax(3.0), 0, "exact tie goes to the lower class");
    }

    #[test]
    fn deterministic_fits() {
        let scores = two_mixture_draws(800, 3);
        let cfg = EmConfig { restarts: 4, seed: 11, ..EmConfig::default() };
        let a = fit_gmm(&scores, 3, &cfg).unwrap();
        let b = fit_gmm(&scores, 3, &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn restarts_never_worse_than_single_run() {
        let scores = two_mixture_draws(600, 5);
        let single = fit_gmm(&scores, 3, &EmConfig::default()).unwrap();
        let multi = fit_gmm(&scores, 3, &EmConfig { restarts: 6, seed: 2, ..EmConfig::default() }).unwrap();
        assert!(multi.log_likelihood >= single.log_likelihood);
    }

    #[test]
    fn variance_floor_holds_on_repeated_values() {
        let mut scores = vec![2.0; 40];
        scores.extend(std::iter::repeat_n(4.0, 40));
        let m = fit_gmm(&scores, 2, &EmConfig::default()).unwrap();
        let floor = 1e-6 * 4.0;
        for c in &m.components {
            assert!(c.variance >= floor);
        }
        assert_abs_diff_eq!(m.components[0].mean, 2.0, epsilon = 1e-9);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(48))]
            #[test]
            fn posteriors_are_normalized(
                means in proptest::collection::vec(-5.0f64..5.0, 1..5),
                y in -50.0f64..50.0,
            ) {
                let comps = means
                    .iter()
                    .enumerate()
                    .map(|(i, &m)| GmmComponent { weight: 1.0 + i as f64, mean: m + i as f64 * 1e-3, variance: 0.1 + 0.2 * i as f64 })
                    .collect();
                let model = GmmModel::from_components(comps).unwrap();
                let p = model.posterior(y);
                prop_assert!(p.iter().all(|&v| v >= 0.0));
                prop_assert!((p.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
            }

            #[test]
            fn em_is_monotone(seed in 0u64..1000, k in 1usize..4) {
                let scores = two_mixture_draws(300, seed);
                let m = fit_gmm(&scores, k, &EmConfig::default()).unwrap();
                for w in m.trace.windows(2) {
                    prop_assert!(w[1] >= w[0] - 1e-10 * w[0].abs());
                }
                let total: f64 = m.components.iter().map(|c| c.weight).sum();
                prop_assert!((total - 1.0).abs() < 1e-9);
                prop_assert!(m.components.windows(2).all(|w| w[0].mean <= w[1].mean));
            }
        }
    }
}
