//! Small numeric helpers shared across modules.

use statrs::distribution::{ChiSquared, Continuous, ContinuousCDF, Normal, StudentsT};
use statrs::function::gamma::ln_gamma;

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Population variance (divisor n).
pub fn var_pop(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / xs.len() as f64
}

/// Sample variance (divisor n - 1).
pub fn var_sample(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() as f64 - 1.0)
}

pub fn std_pop(xs: &[f64]) -> f64 {
    var_pop(xs).sqrt()
}

/// Pearson correlation; 0 when either side has zero variance.
pub fn correlation(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len());
    if n < 2 {
        return 0.0;
    }
    let (a, b) = (&a[..n], &b[..n]);
    let ma = mean(a);
    let mb = mean(b);
    let mut sab = 0.0;
    let mut saa = 0.0;
    let mut sbb = 0.0;
    for (x, y) in a.iter().zip(b) {
        let dx = x - ma;
        let dy = y - mb;
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa <= 0.0 || sbb <= 0.0 {
        0.0
    } else {
        sab / (saa * sbb).sqrt()
    }
}

pub fn skewness(xs: &[f64]) -> f64 {
    let m = mean(xs);
    let v = var_pop(xs);
    let m3 = xs.iter().map(|x| (x - m).powi(3)).sum::<f64>() / xs.len() as f64;
    m3 / v.powf(1.5)
}

/// Non-excess kurtosis (normal = 3).
pub fn kurtosis(xs: &[f64]) -> f64 {
    let m = mean(xs);
    let v = var_pop(xs);
    let m4 = xs.iter().map(|x| (x - m).powi(4)).sum::<f64>() / xs.len() as f64;
    m4 / (v * v)
}

pub fn rmse(pred: &[f64], actual: &[f64]) -> f64 {
    mse(pred, actual).sqrt()
}

pub fn mse(pred: &[f64], actual: &[f64]) -> f64 {
    let n = pred.len().min(actual.len());
    pred.iter()
        .zip(actual)
        .map(|(p, a)| (p - a) * (p - a))
        .sum::<f64>()
        / n as f64
}

/// Upper tail of the chi-square distribution.
pub fn chi2_sf(x: f64, dof: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    let d = ChiSquared::new(dof).expect("positive dof");
    (1.0 - d.cdf(x)).clamp(0.0, 1.0)
}

pub fn normal_quantile(p: f64) -> f64 {
    Normal::new(0.0, 1.0).expect("unit normal").inverse_cdf(p)
}

pub fn normal_cdf(x: f64) -> f64 {
    Normal::new(0.0, 1.0).expect("unit normal").cdf(x)
}

fn student(nu: f64) -> StudentsT {
    StudentsT::new(0.0, 1.0, nu).expect("valid Student-t")
}

/// Quantile of the (non-standardised) Student-t with `nu` degrees of freedom.
pub fn t_quantile(p: f64, nu: f64) -> f64 {
    student(nu).inverse_cdf(p)
}

pub fn t_cdf(x: f64, nu: f64) -> f64 {
    student(nu).cdf(x)
}

pub fn t_pdf(x: f64, nu: f64) -> f64 {
    student(nu).pdf(x)
}

/// Log-density of the unit-variance Student-t evaluated at `z`.
///
/// Precomputes the normalising constant so the hot loop in likelihoods only
/// pays for one `ln`.
#[derive(Debug, Clone, Copy)]
pub struct StdTLogPdf {
    nu: f64,
    constant: f64,
}

impl StdTLogPdf {
    pub fn new(nu: f64) -> Self {
        let constant = ln_gamma((nu + 1.0) / 2.0)
            - ln_gamma(nu / 2.0)
            - 0.5 * (std::f64::consts::PI * (nu - 2.0)).ln();
        Self { nu, constant }
    }

    pub fn constant(&self) -> f64 {
        self.constant
    }

    /// ln f(r | variance), r distributed as sqrt(variance) * unit-variance t.
    #[inline]
    pub fn eval(&self, r: f64, variance: f64) -> f64 {
        self.constant
            - 0.5 * variance.ln()
            - 0.5 * (self.nu + 1.0) * (r * r / ((self.nu - 2.0) * variance)).ln_1p()
    }
}

/// E|e| for a unit-variance Student-t innovation with `nu` > 2 degrees of freedom.
pub fn std_t_abs_mean(nu: f64) -> f64 {
    ((nu - 2.0).sqrt() / std::f64::consts::PI.sqrt())
        * (ln_gamma((nu - 1.0) / 2.0) - ln_gamma(nu / 2.0)).exp()
}

/// Empirical quantile by linear interpolation between order statistics
/// (the "type 7" definition). `sorted` must be ascending.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = (n as f64 - 1.0) * p.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn median(xs: &[f64]) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    quantile_sorted(&v, 0.5)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn abs_moment_gaussian_limit() {
        // E|Z| = sqrt(2/pi) for the normal.
        let v = std_t_abs_mean(1e7);
        assert!((v - (2.0 / std::f64::consts::PI).sqrt()).abs() < 1e-6);
    }

    #[test]
    fn std_t_density_integrates_to_one() {
        let f = StdTLogPdf::new(5.0);
        let h = 1e-3;
        let s: f64 = (-40_000..=40_000)
            .map(|i| f.eval(i as f64 * h, 1.0).exp() * h)
            .sum();
        assert!((s - 1.0).abs() < 1e-4, "{s}");
    }

    #[test]
    fn chi2_tail_known_value() {
        assert!((chi2_sf(3.841_458_820_694_124, 1.0) - 0.05).abs() < 1e-9);
    }
}
