//! Natural scene statistics: MSCN coefficients, generalized Gaussian fits and the
//! 36-dimensional two-scale BRISQUE-style feature vector.

use std::sync::OnceLock;

use statrs::function::gamma::gamma;

use super::plane::{ImagePlane, Plane};
use crate::error::{Error, Result};

/// Radius of the 7x7 local-statistics window.
const WINDOW_RADIUS: usize = 3;
const WINDOW_SIGMA: f64 = 7.0 / 6.0;
/// Divisive-normalization stabilizer for luma in [0, 1].
pub const MSCN_C: f64 = 1.0 / 255.0;

pub const FEATURES_PER_SCALE: usize = 18;
pub const BRISQUE_DIM: usize = 2 * FEATURES_PER_SCALE;

const SHAPE_MIN: f64 = 0.2;
const SHAPE_STEP: f64 = 0.001;
const SHAPE_COUNT: usize = 9801; // 0.2 ..= 10.0

const MIN_FIT_SAMPLES: usize = 100;

/// Normalized 1-D Gaussian taps. The 2-D window is their outer product.
fn window_taps() -> [f64; 2 * WINDOW_RADIUS + 1] {
    let mut taps = [0.0; 2 * WINDOW_RADIUS + 1];
    for (i, t) in taps.iter_mut().enumerate() {
        let d = i as f64 - WINDOW_RADIUS as f64;
        *t = (-d * d / (2.0 * WINDOW_SIGMA * WINDOW_SIGMA)).exp();
    }
    let s: f64 = taps.iter().sum();
    taps.iter_mut().for_each(|t| *t /= s);
    taps
}

/// Half-sample symmetric extension: `d c b a | a b c d | d c b a`.
#[inline]
fn reflect(i: isize, n: usize) -> usize {
    let n = n as isize;
    let period = 2 * n;
    let mut m = i.rem_euclid(period);
    if m >= n {
        m = period - 1 - m;
    }
    m as usize
}

/// Separable Gaussian smoothing with symmetric boundary extension.
fn gaussian_blur(p: &Plane) -> Plane {
    let taps = window_taps();
    let (w, h) = (p.width(), p.height());
    let r = WINDOW_RADIUS as isize;
    let horizontal = Plane::from_fn(w, h, |x, y| {
        taps.iter()
            .enumerate()
            .map(|(k, t)| t * p.get(reflect(x as isize + k as isize - r, w), y))
            .sum()
    });
    Plane::from_fn(w, h, |x, y| {
        taps.iter()
            .enumerate()
            .map(|(k, t)| t * horizontal.get(x, reflect(y as isize + k as isize - r, h)))
            .sum()
    })
}

/// Mean-subtracted contrast-normalized coefficients `(I - mu) / (sigma + C)`.
///
/// The coefficients do not change when a constant is added to the image, so
/// the plane is first shifted by one of its own pixel values; a flat image then
/// yields exact zeros.
pub fn mscn_coefficients(img: &Plane) -> Plane {
    let reference = img.data().first().copied().unwrap_or(0.0);
    let img = &img.map(|v| v - reference);
    let mu = gaussian_blur(img);
    let second = gaussian_blur(&img.map(|v| v * v));
    let data = img
        .data()
        .iter()
        .zip(mu.data())
        .zip(second.data())
        .map(|((&i, &m), &s)| {
            let sigma = (s - m * m).abs().sqrt();
            (i - m) / (sigma + MSCN_C)
        })
        .collect();
    Plane::new(img.width(), img.height(), data).expect("same shape as input")
}

fn shape_at(i: usize) -> f64 {
    SHAPE_MIN + SHAPE_STEP * i as f64
}

/// `Gamma(2/a)^2 / (Gamma(1/a) Gamma(3/a))` over the shape grid. Increasing in `a`.
fn ratio_table() -> &'static [f64] {
    static TABLE: OnceLock<Vec<f64>> = OnceLock::new();
    TABLE.get_or_init(|| {
        (0..SHAPE_COUNT)
            .map(|i| {
                let a = shape_at(i);
                let g2 = gamma(2.0 / a);
                g2 * g2 / (gamma(1.0 / a) * gamma(3.0 / a))
            })
            .collect()
    })
}

/// Grid shape whose ratio is nearest to `rho`; flags values beyond the grid ends.
fn invert_ratio(rho: f64) -> (f64, bool) {
    let table = ratio_table();
    let clamped = rho < table[0] || rho > table[SHAPE_COUNT - 1];
    let mut best = 0;
    let mut best_diff = f64::INFINITY;
    for (i, &r) in table.iter().enumerate() {
        let d = (r - rho).abs();
        if d < best_diff {
            best_diff = d;
            best = i;
        }
    }
    (shape_at(best), clamped)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GgdFit {
    pub shape: f64,
    pub variance: f64,
    /// The moment ratio fell outside the shape grid and was clamped to its edge.
    pub clamped: bool,
}

/// Moment-matching fit of a zero-mean generalized Gaussian.
pub fn fit_ggd(samples: &[f64]) -> Result<GgdFit> {
    if samples.len() < MIN_FIT_SAMPLES {
        return Err(Error::TooFewSamples {
            required: MIN_FIT_SAMPLES,
            actual: samples.len(),
        });
    }
    let n = samples.len() as f64;
    let second = samples.iter().map(|v| v * v).sum::<f64>() / n;
    if second == 0.0 {
        return Err(Error::Degenerate("GGD fit on all-zero samples".into()));
    }
    let abs_mean = samples.iter().map(|v| v.abs()).sum::<f64>() / n;
    let (shape, clamped) = invert_ratio(abs_mean * abs_mean / second);
    if clamped {
        log::warn!("GGD shape ratio outside grid, clamped to {shape}");
    }
    Ok(GgdFit {
        shape,
        variance: second,
        clamped,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AggdFit {
    pub shape: f64,
    pub left_variance: f64,
    pub right_variance: f64,
    pub mean_offset: f64,
    pub clamped: bool,
}

/// Moment-matching fit of an asymmetric generalized Gaussian.
pub fn fit_aggd(samples: &[f64]) -> Result<AggdFit> {
    if samples.len() < MIN_FIT_SAMPLES {
        return Err(Error::TooFewSamples {
            required: MIN_FIT_SAMPLES,
            actual: samples.len(),
        });
    }
    let (mut left_sq, mut left_n, mut right_sq, mut right_n) = (0.0, 0usize, 0.0, 0usize);
    let (mut abs_sum, mut sq_sum) = (0.0, 0.0);
    for &v in samples {
        if v < 0.0 {
            left_sq += v * v;
            left_n += 1;
        } else if v > 0.0 {
            right_sq += v * v;
            right_n += 1;
        }
        abs_sum += v.abs();
        sq_sum += v * v;
    }
    if left_n == 0 || right_n == 0 {
        return Err(Error::Degenerate("AGGD fit needs samples of both signs".into()));
    }
    let n = samples.len() as f64;
    let left_std = (left_sq / left_n as f64).sqrt();
    let right_std = (right_sq / right_n as f64).sqrt();
    let gamma_hat = left_std / right_std;
    let abs_mean = abs_sum / n;
    let r_hat = abs_mean * abs_mean / (sq_sum / n);
    let g2 = gamma_hat * gamma_hat;
    let r_norm = r_hat * (g2 * gamma_hat + 1.0) * (gamma_hat + 1.0) / ((g2 + 1.0) * (g2 + 1.0));
    let (shape, clamped) = invert_ratio(r_norm);
    if clamped {
        log::warn!("AGGD shape ratio outside grid, clamped to {shape}");
    }
    let g1 = gamma(1.0 / shape);
    let mean_offset =
        (right_std - left_std) * (gamma(2.0 / shape) / g1) * (g1 / gamma(3.0 / shape)).sqrt();
    Ok(AggdFit {
        shape,
        left_variance: left_std * left_std,
        right_variance: right_std * right_std,
        mean_offset,
        clamped,
    })
}

/// Neighbor offsets `(dx, dy)` of the four pairwise products, in feature order:
/// horizontal, vertical, main diagonal, secondary diagonal.
pub const ORIENTATIONS: [(isize, isize); 4] = [(1, 0), (0, 1), (1, 1), (-1, 1)];

/// Products of each coefficient with its neighbor at `(dx, dy)`, over all pixel
/// pairs that lie inside the plane.
pub fn pairwise_products(p: &Plane, (dx, dy): (isize, isize)) -> Vec<f64> {
    let (w, h) = (p.width() as isize, p.height() as isize);
    let mut out = Vec::with_capacity(p.data().len());
    for y in 0..h {
        let ny = y + dy;
        if ny < 0 || ny >= h {
            continue;
        }
        for x in 0..w {
            let nx = x + dx;
            if nx < 0 || nx >= w {
                continue;
            }
            out.push(p.get(x as usize, y as usize) * p.get(nx as usize, ny as usize));
        }
    }
    out
}

fn scale_features(plane: &Plane, out: &mut Vec<f64>) -> Result<()> {
    let mscn = mscn_coefficients(plane);
    let ggd = fit_ggd(mscn.data())?;
    out.extend([ggd.shape, ggd.variance]);
    for o in ORIENTATIONS {
        let a = fit_aggd(&pairwise_products(&mscn, o))?;
        out.extend([a.shape, a.mean_offset, a.left_variance, a.right_variance]);
    }
    Ok(())
}

/// The 36-dimensional feature vector.
///
/// Per scale (full resolution, then one 2x downsample), in order: MSCN GGD shape and
/// variance, then for each orientation in [`ORIENTATIONS`] the AGGD shape, mean
/// offset, left variance and right variance of the pairwise products.
pub fn brisque_features(img: &ImagePlane) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(BRISQUE_DIM);
    let full = img.plane();
    scale_features(full, &mut out)?;
    scale_features(&full.downsample2(), &mut out)?;
    Ok(out)
}

/// Elementwise mean of per-frame feature vectors.
pub fn pool_temporal(frame_features: &[Vec<f64>]) -> Result<Vec<f64>> {
    let first = frame_features
        .first()
        .ok_or_else(|| Error::Validation("no frames to pool".into()))?;
    let dim = first.len();
    let mut sum = vec![0.0; dim];
    for f in frame_features {
        if f.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                actual: f.len(),
            });
        }
        sum.iter_mut().zip(f).for_each(|(s, v)| *s += v);
    }
    let n = frame_features.len() as f64;
    Ok(sum.into_iter().map(|s| s / n).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Gamma, Normal};

    /// Draws from an AGGD with the given shape and side standard deviations.
    fn aggd_draws(n: usize, shape: f64, left_std: f64, right_std: f64, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let scale = (gamma(1.0 / shape) / gamma(3.0 / shape)).sqrt();
        let (bl, br) = (left_std * scale, right_std * scale);
        let g = Gamma::new(1.0 / shape, 1.0).unwrap();
        (0..n)
            .map(|_| {
                let mag = g.sample(&mut rng).powf(1.0 / shape);
                if rng.random::<f64>() < bl / (bl + br) {
                    -bl * mag
                } else {
                    br * mag
                }
            })
            .collect()
    }

    fn normal_draws(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = Normal::new(0.0, 1.3).unwrap();
        (0..n).map(|_| d.sample(&mut rng)).collect()
    }

    /// Direct 2-D windowed MSCN over an explicitly mirrored image.
    fn scalar_mscn(img: &[Vec<f64>]) -> Vec<Vec<f64>> {
        let h = img.len() as isize;
        let w = img[0].len() as isize;
        let mirror = |i: isize, n: isize| -> usize {
            let mut i = i;
            loop {
                if i < 0 {
                    i = -i - 1;
                } else if i >= n {
                    i = 2 * n - i - 1;
                } else {
                    return i as usize;
                }
            }
        };
        let s2 = 2.0 * (7.0f64 / 6.0).powi(2);
        let mut win = [[0.0; 7]; 7];
        let mut total = 0.0;
        for (dy, row) in win.iter_mut().enumerate() {
            for (dx, v) in row.iter_mut().enumerate() {
                let (a, b) = (dx as f64 - 3.0, dy as f64 - 3.0);
                *v = (-(a * a + b * b) / s2).exp();
                total += *v;
            }
        }
        let mut out = vec![vec![0.0; w as usize]; h as usize];
        for y in 0..h {
            for x in 0..w {
                let (mut m, mut s) = (0.0, 0.0);
                for dy in -3..=3isize {
                    for dx in -3..=3isize {
                        let k = win[(dy + 3) as usize][(dx + 3) as usize] / total;
                        let v = img[mirror(y + dy, h)][mirror(x + dx, w)];
                        m += k * v;
                        s += k * v * v;
                    }
                }
                let sigma = (s - m * m).abs().sqrt();
                out[y as usize][x as usize] = (img[y as usize][x as usize] - m) / (sigma + 1.0 / 255.0);
            }
        }
        out
    }

    #[test]
    fn reflect_indices() {
        assert_eq!(reflect(-1, 5), 0);
        assert_eq!(reflect(-3, 5), 2);
        assert_eq!(reflect(5, 5), 4);
        assert_eq!(reflect(7, 5), 2);
        assert_eq!(reflect(-4, 2), 0);
        assert_eq!(reflect(3, 5), 3);
    }

    #[test]
    fn constant_image_gives_zero_mscn() {
        for level in [0.0, 0.37, 0.42, 0.123456789, 1.0] {
            let p = Plane::from_fn(40, 33, |_, _| level);
            assert!(mscn_coefficients(&p).data().iter().all(|&v| v == 0.0), "{level}");
        }
    }

    #[test]
    fn checkerboard_matches_scalar_oracle() {
        let board: Vec<Vec<f64>> = (0..8)
            .map(|y| (0..8).map(|x| ((x + y) % 2) as f64).collect())
            .collect();
        let p = Plane::from_fn(8, 8, |x, y| board[y][x]);
        let got = mscn_coefficients(&p);
        let want = scalar_mscn(&board);
        for y in 0..8 {
            for x in 0..8 {
                assert_abs_diff_eq!(got.get(x, y), want[y][x], epsilon = 1e-12);
            }
        }
        let mean = got.data().iter().sum::<f64>() / 64.0;
        assert!(mean.abs() < 1e-9);
        // coefficients are symmetric about 0: the board's two colours mirror each other
        let mut sorted: Vec<f64> = got.data().to_vec();
        sorted.sort_by(f64::total_cmp);
        for (a, b) in sorted.iter().zip(sorted.iter().rev()) {
            assert_abs_diff_eq!(*a, -*b, epsilon = 1e-12);
        }
    }

    #[test]
    fn ggd_shape_of_gaussian_and_laplacian() {
        let g = fit_ggd(&normal_draws(10_000, 1)).unwrap();
        assert!((g.shape - 2.0).abs() < 0.1, "{g:?}");
        assert!(!g.clamped);
        let laplace = aggd_draws(10_000, 1.0, 1.0, 1.0, 2);
        let l = fit_ggd(&laplace).unwrap();
        assert!((l.shape - 1.0).abs() < 0.1, "{l:?}");
    }

    #[test]
    fn ggd_recovers_heavy_tailed_shape() {
        let draws = aggd_draws(100_000, 0.6, 0.8, 0.8, 3);
        let fit = fit_ggd(&draws).unwrap();
        assert!((fit.shape - 0.6).abs() < 0.05, "{fit:?}");
    }

    #[test]
    fn ggd_errors_and_clamping() {
        assert!(matches!(fit_ggd(&[0.0; 200]), Err(Error::Degenerate(_))));
        assert!(matches!(fit_ggd(&[1.0; 50]), Err(Error::TooFewSamples { .. })));
        // constant magnitude: ratio 1, beyond the largest tabulated shape
        let two_point: Vec<f64> = (0..200).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
        let fit = fit_ggd(&two_point).unwrap();
        assert!(fit.clamped);
        assert_abs_diff_eq!(fit.shape, 10.0, epsilon = 1e-9);
    }

    #[test]
    fn aggd_symmetric_gaussian() {
        let fit = fit_aggd(&normal_draws(50_000, 4)).unwrap();
        let ratio = (fit.left_variance / fit.right_variance).sqrt();
        assert!((ratio - 1.0).abs() < 0.05, "{fit:?}");
        assert!(fit.mean_offset.abs() < 0.03, "{fit:?}");
    }

    #[test]
    fn aggd_recovers_generating_parameters() {
        let draws = aggd_draws(100_000, 1.5, 0.5, 1.0, 5);
        let fit = fit_aggd(&draws).unwrap();
        assert!((fit.shape - 1.5).abs() < 0.15, "{fit:?}");
        assert!((fit.left_variance.sqrt() - 0.5).abs() < 0.05, "{fit:?}");
        assert!((fit.right_variance.sqrt() - 1.0).abs() < 0.1, "{fit:?}");
    }

    #[test]
    fn aggd_rejects_single_signed_input() {
        let positive: Vec<f64> = (1..=200).map(|i| i as f64).collect();
        assert!(matches!(fit_aggd(&positive), Err(Error::Degenerate(_))));
    }

    fn noise_image(sd: f64, seed: u64) -> ImagePlane {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = Normal::new(0.5f64, sd).unwrap();
        let luma: Vec<f64> = (0..96 * 80).map(|_| d.sample(&mut rng).clamp(0.0, 1.0)).collect();
        ImagePlane::from_luma(96, 80, luma).unwrap()
    }

    #[test]
    fn noise_image_features() {
        // Noise well below the stabilizer C: the normalization is nearly linear, so the
        // coefficients stay Gaussian.
        let img = noise_image(1e-4, 6);
        let f = brisque_features(&img).unwrap();
        assert_eq!(f.len(), BRISQUE_DIM);
        assert!(f.iter().all(|v| v.is_finite()));
        assert!((f[0] - 2.0).abs() < 0.1, "MSCN shape {}", f[0]);
        assert_eq!(brisque_features(&img).unwrap(), f);
    }

    #[test]
    fn strong_noise_is_platykurtic_after_normalization() {
        // Dividing by a 7x7 local deviation bounds the coefficients.
        let f = brisque_features(&noise_image(0.1, 6)).unwrap();
        assert!(f[0] > 2.5, "MSCN shape {}", f[0]);
    }

    #[test]
    fn flat_image_fails_to_fit() {
        let img = ImagePlane::from_luma(32, 32, vec![0.5; 1024]).unwrap();
        assert!(brisque_features(&img).is_err());
    }

    #[test]
    fn pooling_examples() {
        let v = vec![1.0, -2.5, 3.0];
        assert_eq!(pool_temporal(std::slice::from_ref(&v)).unwrap(), v);
        let neg: Vec<f64> = v.iter().map(|x| -x).collect();
        assert_eq!(pool_temporal(&[v.clone(), neg]).unwrap(), vec![0.0; 3]);
        assert!(pool_temporal(&[]).is_err());
        assert!(pool_temporal(&[v, vec![1.0]]).is_err());

        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let frames: Vec<Vec<f64>> = (0..3).map(|_| (0..36).map(|_| rng.random_range(-5.0..5.0)).collect()).collect();
        let pooled = pool_temporal(&frames).unwrap();
        for j in 0..36 {
            let mut s = 0.0;
            for f in &frames {
                s += f[j];
            }
            assert_abs_diff_eq!(pooled[j], s / 3.0, epsilon = 1e-12);
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(32))]
            #[test]
            fn pooling_is_permutation_invariant(
                frames in proptest::collection::vec(proptest::collection::vec(-100.0f64..100.0, 4), 1..8),
                rot in 0usize..8,
            ) {
                let mut shuffled = frames.clone();
                let k = rot % frames.len();
                shuffled.rotate_left(k);
                shuffled.reverse();
                let a = pool_temporal(&frames).unwrap();
                let b = pool_temporal(&shuffled).unwrap();
                for (x, y) in a.iter().zip(&b) {
                    prop_assert!((x - y).abs() <= 1e-12 * (1.0 + x.abs()));
                }
            }
        }
    }
}
