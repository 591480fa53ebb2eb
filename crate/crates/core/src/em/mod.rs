//! Mixtures of HTH distributions fitted by expectation-conditional
//! maximization with deterministic annealing of the responsibilities.

mod estep;
mod fit;
mod kmeans;
mod mstep;

pub use estep::{e_step, observed_loglik, EStepCache, Expectations};
pub use fit::{bic, count_free_params, ecm_fit, fit_from, FitConfig, FitResult};
pub use kmeans::{kmeans, kmeans_init, KMeans};
pub use mstep::{m_step, MStepReport};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::dist::HthParams;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureModel {
    pub weights: Vec<f64>,
    pub components: Vec<HthParams>,
}

impl MixtureModel {
    pub fn new(weights: Vec<f64>, components: Vec<HthParams>) -> Result<Self> {
        let mut m = Self { weights, components };
        m.validate()?;
        m.canonicalize();
        Ok(m)
    }

    pub fn g(&self) -> usize {
        self.components.len()
    }

    pub fn p(&self) -> usize {
        self.components[0].p()
    }

    pub fn q(&self) -> usize {
        self.components[0].q()
    }

    pub fn validate(&self) -> Result<()> {
        if self.components.is_empty() || self.weights.len() != self.components.len() {
            return Err(Error::Dimension(format!(
                "{} weights for {} components",
                self.weights.len(),
                self.components.len()
            )));
        }
        let (p, q) = (self.p(), self.q());
        for c in &self.components {
            if c.p() != p || c.q() != q {
                return Err(Error::Dimension("components disagree in p or q".into()));
            }
            c.validate()?;
        }
        if self.weights.iter().any(|w| !(*w > 0.0)) || (self.weights.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::Domain("mixing proportions must be positive and sum to 1".into()));
        }
        Ok(())
    }

    /// Components by descending weight (ties by first coordinate of μ),
    /// skewness columns by descending norm. Idempotent.
    pub fn canonicalize(&mut self) {
        for c in &mut self.components {
            c.canonicalize();
        }
        let mut order: Vec<usize> = (0..self.g()).collect();
        order.sort_by(|&a, &b| {
            self.weights[b]
                .total_cmp(&self.weights[a])
                .then(self.components[a].mu[0].total_cmp(&self.components[b].mu[0]))
        });
        self.weights = order.iter().map(|&k| self.weights[k]).collect();
        self.components = order.iter().map(|&k| self.components[k].clone()).collect();
    }
}

pub(crate) fn check_data(data: &DMatrix<f64>) -> Result<()> {
    if data.nrows() == 0 || data.ncols() == 0 {
        return Err(Error::Dimension("data matrix is empty".into()));
    }
    if data.iter().any(|v| !v.is_finite()) {
        return Err(Error::Domain("data contain non-finite values".into()));
    }
    Ok(())
}
