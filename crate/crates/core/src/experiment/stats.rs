use serde::{Deserialize, Serialize};

use crate::transport::pairwise_sum;

/// Mean, spread and a normal-approximation 95% interval over trials.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub count: usize,
    pub mean: f64,
    /// Sample standard deviation (0 for a single trial).
    pub sd: f64,
    /// Standard error of the mean.
    pub se: f64,
    pub ci95_low: f64,
    pub ci95_high: f64,
}

impl Aggregate {
    pub fn of(values: &[f64]) -> Self {
        let count = values.len();
        let mean = pairwise_sum(values) / count as f64;
        let sd = if count > 1 {
            let dev: Vec<f64> = values.iter().map(|v| (v - mean).powi(2)).collect();
            (pairwise_sum(&dev) / (count - 1) as f64).sqrt()
        } else {
            0.0
        };
        let se = sd / (count as f64).sqrt();
        Self {
            count,
            mean,
            sd,
            se,
            ci95_low: mean - 1.96 * se,
            ci95_high: mean + 1.96 * se,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn aggregate() {
        let a = Aggregate::of(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(a.mean, 2.5);
        assert!((a.sd - (5.0f64 / 3.0).sqrt()).abs() < 1e-15);
        assert!((a.se - a.sd / 2.0).abs() < 1e-15);
        let one = Aggregate::of(&[0.7]);
        assert_eq!((one.sd, one.ci95_low, one.ci95_high), (0.0, 0.7, 0.7));
    }
}
