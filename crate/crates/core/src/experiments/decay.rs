//! How fast the error gradient fades with the age of an output spike.

use rand::Rng;

use super::seeds::{stream_rng, Stream};
use crate::disparity::{error_grad_all, SpikeAgeVector};
use crate::kernels::{ImpactParams, IMPACT_EPS};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DecaySample {
    /// Age of the output spike, ms.
    pub age: f64,
    pub abs_grad: f64,
}

/// `|dE/dt|` for every output spike of `pairs` random vector pairs. Each
/// pair has 1 to 10 desired and 1 to 10 output spikes with ages uniform in
/// `[IMPACT_EPS, max_age]`.
pub fn decay_samples(
    pairs: usize,
    max_age: f64,
    impact: ImpactParams,
    seed: u64,
) -> Vec<DecaySample> {
    let mut rng = stream_rng(seed, Stream::Figure);
    let mut out = Vec::new();
    for _ in 0..pairs {
        let n = rng.gen_range(1..=10);
        let m = rng.gen_range(1..=10);
        let output = SpikeAgeVector::new((0..n).map(|_| rng.gen_range(IMPACT_EPS..=max_age)));
        let desired = SpikeAgeVector::new((0..m).map(|_| rng.gen_range(IMPACT_EPS..=max_age)));
        let grads = error_grad_all(&desired, &output, impact);
        out.extend(
            output
                .ages()
                .iter()
                .zip(grads)
                .map(|(&age, g)| DecaySample {
                    age,
                    abs_grad: g.abs(),
                }),
        );
    }
    out
}

/// Median `|dE/dt|` over samples whose age lies in `[lo, hi]`.
pub fn median_in(samples: &[DecaySample], lo: f64, hi: f64) -> Option<f64> {
    let mut xs: Vec<f64> = samples
        .iter()
        .filter(|s| s.age >= lo && s.age <= hi)
        .map(|s| s.abs_grad)
        .collect();
    if xs.is_empty() {
        return None;
    }
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    Some(if n % 2 == 1 {
        xs[n / 2]
    } else {
        0.5 * (xs[n / 2 - 1] + xs[n / 2])
    })
}

/// Medians over consecutive age bins of width `width`.
pub fn binned_medians(
    samples: &[DecaySample],
    max_age: f64,
    width: f64,
) -> Vec<(f64, Option<f64>)> {
    let bins = (max_age / width).ceil() as usize;
    (0..bins)
        .map(|b| {
            let lo = b as f64 * width;
            (lo, median_in(samples, lo, lo + width))
        })
        .collect()
}
