//! Finite Gaussian mixtures used as latent and predictive marginals.

use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::error::{InlaError, Result};

/// Scale on which the mixture components are Gaussian. A `Log` mixture
/// describes `log X`; its summaries are reported for `X`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scale {
    Log,
    Natural,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MixtureComponent {
    pub mean: f64,
    pub sd: f64,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureMarginal {
    components: Vec<MixtureComponent>,
    scale: Scale,
}

/// Tolerance of quantile root finding, in the units of the Gaussian scale.
const QUANTILE_TOL: f64 = 1e-8;

fn std_normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

fn std_normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

impl MixtureMarginal {
    /// Weights are normalized to sum to one. Components with zero weight are
    /// dropped; a zero standard deviation denotes a point mass.
    pub fn new(components: Vec<MixtureComponent>, scale: Scale) -> Result<Self> {
        if components.is_empty() {
            return Err(InlaError::InvalidArgument("mixture needs at least one component".into()));
        }
        for c in &components {
            if !(c.mean.is_finite() && c.sd.is_finite() && c.sd >= 0.0 && c.weight.is_finite() && c.weight >= 0.0) {
                return Err(InlaError::InvalidArgument(format!("invalid mixture component {c:?}")));
            }
        }
        let total: f64 = components.iter().map(|c| c.weight).sum();
        if !(total > 0.0) {
            return Err(InlaError::InvalidArgument("mixture weights sum to zero".into()));
        }
        let components = components
            .into_iter()
            .filter(|c| c.weight > 0.0)
            .map(|c| MixtureComponent { weight: c.weight / total, ..c })
            .collect();
        Ok(Self { components, scale })
    }

    pub fn gaussian(mean: f64, sd: f64, scale: Scale) -> Result<Self> {
        Self::new(vec![MixtureComponent { mean, sd, weight: 1.0 }], scale)
    }

    pub fn components(&self) -> &[MixtureComponent] {
        &self.components
    }

    pub fn scale(&self) -> Scale {
        self.scale
    }

    /// Mean on the Gaussian scale.
    pub fn gaussian_mean(&self) -> f64 {
        self.components.iter().map(|c| c.weight * c.mean).sum()
    }

    /// Standard deviation on the Gaussian scale.
    pub fn gaussian_sd(&self) -> f64 {
        let m = self.gaussian_mean();
        let second: f64 = self.components.iter().map(|c| c.weight * (c.sd * c.sd + c.mean * c.mean)).sum();
        (second - m * m).max(0.0).sqrt()
    }

    /// CDF on the Gaussian scale.
    pub fn gaussian_cdf(&self, x: f64) -> f64 {
        self.components
            .iter()
            .map(|c| {
                let p = if c.sd > 0.0 { std_normal_cdf((x - c.mean) / c.sd) } else if x >= c.mean { 1.0 } else { 0.0 };
                c.weight * p
            })
            .sum()
    }

    fn gaussian_pdf(&self, x: f64) -> f64 {
        self.components.iter().filter(|c| c.sd > 0.0).map(|c| c.weight * std_normal_pdf((x - c.mean) / c.sd) / c.sd).sum()
    }

    /// Quantile on the Gaussian scale: safeguarded Newton iteration inside a
    /// shrinking bisection bracket, stopped once the bracket or the step is
    /// below 1e-8.
    pub fn gaussian_quantile(&self, p: f64) -> Result<f64> {
        if !(p > 0.0 && p < 1.0) {
            return Err(InlaError::InvalidArgument(format!("quantile level must lie in (0, 1), got {p}")));
        }
        let mut lo = self.components.iter().map(|c| c.mean - 40.0 * c.sd).fold(f64::INFINITY, f64::min) - 1.0;
        let mut hi = self.components.iter().map(|c| c.mean + 40.0 * c.sd).fold(f64::NEG_INFINITY, f64::max) + 1.0;
        let mut x = self.gaussian_mean();
        if !(x > lo && x < hi) {
            x = 0.5 * (lo + hi);
        }
        for _ in 0..200 {
            let fx = self.gaussian_cdf(x) - p;
            if fx > 0.0 {
                hi = x;
            } else {
                lo = x;
            }
            if hi - lo <= QUANTILE_TOL {
                break;
            }
            let d = self.gaussian_pdf(x);
            let newton = if d > 0.0 { x - fx / d } else { f64::NAN };
            let next = if newton > lo && newton < hi { newton } else { 0.5 * (lo + hi) };
            if (next - x).abs() <= 0.25 * QUANTILE_TOL {
                x = next;
                break;
            }
            x = next;
        }
        Ok(x)
    }

    fn to_natural(&self, x: f64) -> f64 {
        match self.scale {
            Scale::Log => x.exp(),
            Scale::Natural => x,
        }
    }

    /// Mean on the reported scale (lognormal moments for log mixtures).
    pub fn mean(&self) -> f64 {
        match self.scale {
            Scale::Natural => self.gaussian_mean(),
            Scale::Log => self.components.iter().map(|c| c.weight * (c.mean + 0.5 * c.sd * c.sd).exp()).sum(),
        }
    }

    /// Standard deviation on the reported scale.
    pub fn sd(&self) -> f64 {
        match self.scale {
            Scale::Natural => self.gaussian_sd(),
            Scale::Log => {
                let m = self.mean();
                let second: f64 =
                    self.components.iter().map(|c| c.weight * (2.0 * c.mean + 2.0 * c.sd * c.sd).exp()).sum();
                (second - m * m).max(0.0).sqrt()
            }
        }
    }

    /// Quantile on the reported scale.
    pub fn quantile(&self, p: f64) -> Result<f64> {
        Ok(self.to_natural(self.gaussian_quantile(p)?))
    }

    pub fn median(&self) -> Result<f64> {
        self.quantile(0.5)
    }

    /// Half the width of the central 95% credible interval.
    pub fn ci95_halfwidth(&self) -> Result<f64> {
        Ok(((self.quantile(0.975)? - self.quantile(0.025)?) / 2.0).max(0.0))
    }

    /// `P(X > t)` with `t` on the reported scale.
    pub fn exceed_prob(&self, t: f64) -> Result<f64> {
        let x = match self.scale {
            Scale::Log => {
                if !(t > 0.0) {
                    return Err(InlaError::InvalidArgument(format!("threshold must be positive, got {t}")));
                }
                t.ln()
            }
            Scale::Natural => t,
        };
        let upper: f64 = self
            .components
            .iter()
            .map(|c| {
                let p = if c.sd > 0.0 { 0.5 * erfc((x - c.mean) / (c.sd * std::f64::consts::SQRT_2)) } else if c.mean > x { 1.0 } else { 0.0 };
                c.weight * p
            })
            .sum();
        Ok(upper.clamp(0.0, 1.0))
    }

    /// All headline summaries at once.
    pub fn summaries(&self, thresholds: &[f64]) -> Result<MixtureSummary> {
        let q025 = self.quantile(0.025)?;
        let q975 = self.quantile(0.975)?;
        Ok(MixtureSummary {
            mean: self.mean(),
            sd: self.sd(),
            median: self.median()?,
            q025,
            q975,
            ci95_halfwidth: ((q975 - q025) / 2.0).max(0.0),
            exceed: thresholds.iter().map(|&t| self.exceed_prob(t)).collect::<Result<_>>()?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureSummary {
    pub mean: f64,
    pub sd: f64,
    pub median: f64,
    pub q025: f64,
    pub q975: f64,
    pub ci95_halfwidth: f64,
    /// Exceedance probabilities in the order of the requested thresholds.
    pub exceed: Vec<f64>,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exceedance_at_component_median_is_half() {
        let m = MixtureMarginal::gaussian(35f64.ln(), 0.7, Scale::Log).unwrap();
        assert!((m.exceed_prob(35.0).unwrap() - 0.5).abs() < 1e-15);
        assert!(m.exceed_prob(0.0).is_err());
    }

    #[test]
    fn narrow_component_median() {
        let m = MixtureMarginal::gaussian(20f64.ln(), 1e-9, Scale::Log).unwrap();
        assert!((m.median().unwrap() - 20.0).abs() < 1e-6);
    }

    #[test]
    fn degenerate_mixture_exceedances() {
        let m = MixtureMarginal::gaussian(50f64.ln(), 1e-6, Scale::Log).unwrap();
        assert!((m.exceed_prob(35.0).unwrap() - 1.0).abs() < 1e-9);
        assert!(m.exceed_prob(75.0).unwrap() < 1e-9);
        assert!(m.exceed_prob(1e6).unwrap() < 1e-9);
    }

    #[test]
    fn quantile_inverts_cdf() {
        let comps = vec![
            MixtureComponent { mean: -1.0, sd: 0.3, weight: 0.2 },
            MixtureComponent { mean: 0.5, sd: 1.0, weight: 0.5 },
            MixtureComponent { mean: 3.0, sd: 0.1, weight: 0.3 },
        ];
        let m = MixtureMarginal::new(comps, Scale::Natural).unwrap();
        for p in [0.01, 0.2, 0.5, 0.71, 0.99] {
            let q = m.gaussian_quantile(p).unwrap();
            assert!((m.gaussian_cdf(q) - p).abs() < 1e-8);
        }
        let w: f64 = m.components().iter().map(|c| c.weight).sum();
        assert!((w - 1.0).abs() < 1e-12);
    }

    #[test]
    fn lognormal_moments() {
        let (mu, s) = (1.2f64, 0.4f64);
        let m = MixtureMarginal::gaussian(mu, s, Scale::Log).unwrap();
        let mean = (mu + s * s / 2.0).exp();
        assert!((m.mean() - mean).abs() < 1e-12);
        let sd = ((s * s).exp() - 1.0).sqrt() * mean;
        assert!((m.sd() - sd).abs() < 1e-12);
    }
}
