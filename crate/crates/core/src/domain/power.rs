use crate::linalg::least_squares;
use crate::num::Scalar;

use super::params::{Utilization, FEATURE_COUNT};
use super::DomainError;

/// Affine map from the ten utilization features to watts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AffinePowerModel<S> {
    pub coefficients: [S; FEATURE_COUNT],
    /// Static draw in watts, counted once per end system.
    pub intercept: S,
}

impl<S: Scalar> AffinePowerModel<S> {
    pub fn new(coefficients: [S; FEATURE_COUNT], intercept: S) -> Result<Self, DomainError> {
        if !(intercept >= S::zero()) || coefficients.iter().any(|c| !c.is_finite()) {
            return Err(DomainError::InvalidParam(
                "intercept must be >= 0 and coefficients finite".into(),
            ));
        }
        Ok(Self { coefficients, intercept })
    }

    /// Load-dependent part `coefficients · features`, not clamped.
    pub fn dynamic(&self, features: &[S; FEATURE_COUNT]) -> S {
        self.coefficients.iter().zip(features).fold(S::zero(), |s, (c, f)| s + *c * *f)
    }

    /// Watts for one feature vector, never negative.
    pub fn predict(&self, features: &[S; FEATURE_COUNT]) -> S {
        (self.intercept + self.dynamic(features)).max(S::zero())
    }

    /// Watts for processes sharing one host: one intercept plus every
    /// process's dynamic part.
    pub fn predict_processes<'a, I>(&self, processes: I) -> S
    where
        I: IntoIterator<Item = &'a [S; FEATURE_COUNT]>,
    {
        let dynamic = processes.into_iter().fold(S::zero(), |s, f| s + self.dynamic(f));
        (self.intercept + dynamic).max(S::zero())
    }

    /// Ordinary least squares over `(features, watts)` samples.
    pub fn fit(samples: &[([S; FEATURE_COUNT], S)]) -> Result<Self, DomainError> {
        if samples.len() < FEATURE_COUNT + 2 {
            return Err(DomainError::DegenerateDesign);
        }
        let rows: Vec<Vec<S>> = samples
            .iter()
            .map(|(f, _)| std::iter::once(S::one()).chain(f.iter().copied()).collect())
            .collect();
        let y: Vec<S> = samples.iter().map(|(_, w)| *w).collect();
        let x = least_squares(&rows, &y).map_err(|_| DomainError::DegenerateDesign)?;
        Ok(Self {
            // A small negative intercept from noisy data carries no meaning.
            intercept: x[0].max(S::zero()),
            coefficients: std::array::from_fn(|i| x[i + 1]),
        })
    }

    /// Ten coefficients then the intercept, one per line.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for c in self.coefficients.iter().chain(std::iter::once(&self.intercept)) {
            out.push_str(&format!("{c}\n"));
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self, DomainError> {
        let values: Vec<S> = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty())
            .enumerate()
            .map(|(i, l)| {
                l.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .and_then(S::from_f64)
                    .ok_or_else(|| DomainError::ModelFormat(format!("line {}: bad number '{l}'", i + 1)))
            })
            .collect::<Result<_, _>>()?;
        if values.len() != FEATURE_COUNT + 1 {
            return Err(DomainError::ModelFormat(format!(
                "expected {} values, found {}",
                FEATURE_COUNT + 1,
                values.len()
            )));
        }
        Self::new(std::array::from_fn(|i| values[i]), values[FEATURE_COUNT])
    }
}

impl AffinePowerModel<f64> {
    pub fn predict_utilization(&self, u: &Utilization) -> f64 {
        self.predict(&u.features())
    }
}

/// Watts drawn at utilization `u`.
pub fn predict_power(model: &AffinePowerModel<f64>, u: &Utilization) -> f64 {
    model.predict_utilization(u)
}

/// Least-squares affine fit of measured watts on utilization.
pub fn fit_power_model(samples: &[(Utilization, f64)]) -> Result<AffinePowerModel<f64>, DomainError> {
    let s: Vec<([f64; FEATURE_COUNT], f64)> = samples.iter().map(|(u, w)| (u.features(), *w)).collect();
    AffinePowerModel::fit(&s)
}
