use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};

use super::{DatasetError, DatasetKind, DatasetSplit, FactorSample, Instance, Item};

pub const SINELINES_LEN: usize = 64;
/// Upper end of the sampling grid; `t` runs over 64 equally spaced points in `[0, T_MAX]`.
pub const SINELINES_T_MAX: f64 = 10.0;
pub const SINELINES_FACTOR_NAMES: &[&str] = &["slope", "intercept", "amplitude", "frequency", "phase"];

pub fn sinelines_t_grid() -> [f64; SINELINES_LEN] {
    let step = SINELINES_T_MAX / (SINELINES_LEN - 1) as f64;
    std::array::from_fn(|i| i as f64 * step)
}

/// `x_t = z1 t + z2 + z3 sin(z4 t + z5)` on the fixed grid.
pub fn sinelines_decode(z: &[f64]) -> Result<Instance, DatasetError> {
    if z.len() != 5 {
        return Err(DatasetError::Domain(format!(
            "sinelines needs 5 factors, got {}",
            z.len()
        )));
    }
    if z.iter().any(|v| !v.is_finite()) {
        return Err(DatasetError::Domain("non-finite sinelines factor".into()));
    }
    let (slope, intercept, amplitude, frequency, phase) = (z[0], z[1], z[2], z[3], z[4]);
    let data: Vec<f32> = sinelines_t_grid()
        .iter()
        .map(|&t| (slope * t + intercept + amplitude * (frequency * t + phase).sin()) as f32)
        .collect();
    if data.iter().any(|v| !v.is_finite()) {
        return Err(DatasetError::Domain("sinelines output overflowed f32".into()));
    }
    Ok(Instance::from_trusted(DatasetKind::Sinelines, data))
}

fn sample_factors(rng: &mut ChaCha8Rng) -> [f64; 5] {
    let mut slope: f64 = rng.random_range(-1.0..1.0);
    while slope == -1.0 {
        slope = rng.random_range(-1.0..1.0);
    }
    let intercept: f64 = StandardNormal.sample(rng);
    let amplitude: f64 = Exp1.sample(rng);
    let frequency: f64 = Exp1.sample(rng);
    let phase: f64 = rng.random_range(0.0..std::f64::consts::TAU);
    [slope, intercept, amplitude, frequency, phase]
}

/// Draws `n` factor vectors from the generative distributions and decodes them.
pub fn sinelines_sample(n: usize, seed: u64) -> Vec<(FactorSample, Instance)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let z = sample_factors(&mut rng).to_vec();
            let x = sinelines_decode(&z).expect("sampled factors are finite");
            (
                FactorSample {
                    z,
                    factor_names: SINELINES_FACTOR_NAMES,
                },
                x,
            )
        })
        .collect()
}

pub fn sinelines_split(n: usize, seed: u64) -> DatasetSplit {
    let items = sinelines_sample(n, seed)
        .into_iter()
        .map(|(f, x)| Item {
            factors: Some(f.z),
            label: None,
            x,
        })
        .collect();
    let mut split = DatasetSplit::from_items(
        DatasetKind::Sinelines,
        SINELINES_FACTOR_NAMES,
        items,
        seed,
        false,
    );
    split.metadata.insert(
        "t_grid".into(),
        serde_json::json!({ "points": SINELINES_LEN, "lo": 0.0, "hi": SINELINES_T_MAX }),
    );
    split
}

#[cfg(test)]
mod tests {
    use super::*;
    use statrs::distribution::{ContinuousCDF, Exp, Normal, Uniform};

    #[test]
    fn zero_factors_give_zeros() {
        let x = sinelines_decode(&[0.0; 5]).unwrap();
        assert!(x.data.iter().all(|&v| v == 0.0));
        assert_eq!(x.len(), 64);
    }

    #[test]
    fn zero_amplitude_is_flat_intercept() {
        for (q, p) in [(0.3, 1.0), (5.0, -2.0), (0.0, 0.0)] {
            let x = sinelines_decode(&[0.0, 1.0, 0.0, q, p]).unwrap();
            assert!(x.data.iter().all(|&v| v == 1.0));
        }
    }

    #[test]
    fn pure_slope_reproduces_grid() {
        let x = sinelines_decode(&[1.0, 0.0, 0.0, 2.0, 1.0]).unwrap();
        for (v, t) in x.data.iter().zip(sinelines_t_grid()) {
            assert_eq!(*v, t as f32);
        }
    }

    #[test]
    fn non_finite_is_rejected() {
        assert!(sinelines_decode(&[f64::NAN, 0.0, 0.0, 0.0, 0.0]).is_err());
        assert!(sinelines_decode(&[0.0; 4]).is_err());
    }

    #[test]
    fn sampler_supports_and_amplitude_mean() {
        let s = sinelines_sample(10_000, 17);
        let mean_amp = s.iter().map(|(f, _)| f.z[2]).sum::<f64>() / s.len() as f64;
        assert!((0.95..=1.05).contains(&mean_amp), "{mean_amp}");
        for (f, _) in &s {
            assert!(f.z[0] > -1.0 && f.z[0] < 1.0);
            assert!(f.z[4] >= 0.0 && f.z[4] < std::f64::consts::TAU);
        }
    }

    #[test]
    fn sampler_is_reproducible() {
        let a = sinelines_sample(2, 5);
        let b = sinelines_sample(2, 5);
        assert_eq!(a, b);
        assert_ne!(a, sinelines_sample(2, 6));
    }

    fn ks_statistic(mut xs: Vec<f64>, cdf: impl Fn(f64) -> f64) -> f64 {
        xs.sort_by(f64::total_cmp);
        let n = xs.len() as f64;
        xs.iter()
            .enumerate()
            .map(|(i, &x)| {
                let f = cdf(x);
                (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
            })
            .fold(0.0, f64::max)
    }

    #[test]
    fn marginals_pass_ks() {
        let s = sinelines_sample(100_000, 2024);
        let col = |k: usize| s.iter().map(|(f, _)| f.z[k]).collect::<Vec<_>>();
        let uniform = Uniform::new(-1.0, 1.0).unwrap();
        let normal = Normal::new(0.0, 1.0).unwrap();
        let exp = Exp::new(1.0).unwrap();
        let phase = Uniform::new(0.0, std::f64::consts::TAU).unwrap();
        let stats = [
            ks_statistic(col(0), |x| uniform.cdf(x)),
            ks_statistic(col(1), |x| normal.cdf(x)),
            ks_statistic(col(2), |x| exp.cdf(x)),
            ks_statistic(col(3), |x| exp.cdf(x)),
            ks_statistic(col(4), |x| phase.cdf(x)),
        ];
        for (k, d) in stats.iter().enumerate() {
            assert!(*d < 0.02, "factor {k}: KS = {d}");
        }
    }

    #[test]
    fn disagreement_threshold_is_about_two_percent_of_range() {
        let s = sinelines_sample(20_000, 9);
        let mut all: Vec<f64> = s
            .iter()
            .flat_map(|(_, x)| x.data.iter().map(|&v| v as f64))
            .collect();
        all.sort_by(f64::total_cmp);
        // Central 99% range, robust to the exponential tails.
        let lo = all[all.len() / 200];
        let hi = all[all.len() - all.len() / 200];
        let frac = 0.5 / (hi - lo);
        assert!((0.01..0.04).contains(&frac), "threshold fraction {frac}");
    }
}
