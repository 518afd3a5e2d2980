use statrs::distribution::{ContinuousCDF, StudentsT};

/// Replica statistics. CI half-widths use Student-t with count − 1 degrees
/// of freedom and are absent for a single value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Stats {
    pub count: usize,
    pub mean: f64,
    /// Sample standard deviation; 0 for a single value.
    pub std: f64,
    pub median: f64,
    pub min: f64,
    pub max: f64,
    /// Two-sided 95% half-width.
    pub ci95: Option<f64>,
    /// One-sided 95% margin, t(0.95)·s/√m.
    pub one_sided95: Option<f64>,
}

pub fn student_t_quantile(p: f64, dof: usize) -> f64 {
    StudentsT::new(0.0, 1.0, dof as f64).expect("positive dof").inverse_cdf(p)
}

impl Stats {
    pub fn of(values: &[f64]) -> Option<Self> {
        let m = values.len();
        if m == 0 {
            return None;
        }
        let mean = values.iter().sum::<f64>() / m as f64;
        let std = if m > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (m - 1) as f64).sqrt()
        } else {
            0.0
        };
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        let median = if m % 2 == 1 { sorted[m / 2] } else { 0.5 * (sorted[m / 2 - 1] + sorted[m / 2]) };
        let se = std / (m as f64).sqrt();
        let ci = |p| (m > 1).then(|| student_t_quantile(p, m - 1) * se);
        Some(Self {
            count: m,
            mean,
            std,
            median,
            min: sorted[0],
            max: sorted[m - 1],
            ci95: ci(0.975),
            one_sided95: ci(0.95),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn known_values() {
        let s = Stats::of(&[1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(s.mean, 2.5);
        assert_eq!(s.median, 2.5);
        assert!((s.std - (5.0f64 / 3.0).sqrt()).abs() < 1e-15);
        // t(0.975, 3) = 3.182446305284263
        assert!((s.ci95.unwrap() - 3.182446305284263 * s.std / 2.0).abs() < 1e-9);
        // t(0.95, 9) = 1.8331129326536335
        assert!((student_t_quantile(0.95, 9) - 1.8331129326536335).abs() < 1e-9);
        let one = Stats::of(&[5.0]).unwrap();
        assert_eq!((one.std, one.ci95), (0.0, None));
        assert!(Stats::of(&[]).is_none());
    }
}
