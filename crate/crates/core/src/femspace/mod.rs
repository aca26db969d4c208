//! Polynomial spaces on elements and edges: quadrature, orthonormal bases and
//! the local L2 projections.

mod basis;
mod projection;
pub mod quadrature;

use std::fmt;

use thiserror::Error;

pub use basis::{dim_p, monomial_exponents, EdgeBasis, ElementBasis};
pub use projection::{project_q0, project_q0_vector, project_qb, project_qb_vector, project_qhp, project_qs, QhpProjection};
pub use quadrature::{edge_rule, triangle_rule, QuadratureRule};

/// Largest polynomial degree accepted in an element tuple; quadrature for the
/// products of two such polynomials stays within the tabulated range.
pub const MAX_DEGREE: usize = 9;

#[derive(Debug, Error)]
pub enum FemError {
    #[error("quadrature order {0} outside supported range 1..=20")]
    QuadratureOrder(usize),
    #[error("invalid element configuration: {0}")]
    InvalidConfig(String),
    #[error(
        "element {element} with mu = 0 is outside the stabilizer-free regime: pressure degree n = {n} exceeds \
         edge velocity degree j = {j} (mu = 0 needs n <= j; choose mu > 0)"
    )]
    Regime { element: String, n: usize, j: usize },
}

/// Degree tuple `(k, j, l, m, n)` with the stabilizer parameters.
///
/// * `k`: interior velocity, `j`: edge velocity, `l`: weak gradient,
///   `m`: weak divergence, `n`: pressure.
/// * `gamma` scales the velocity stabilizer by `h_T^-gamma`, `beta` the pressure
///   jump penalty by `h_e^-beta`, and `mu` switches the latter on.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ElementConfig {
    pub k: usize,
    pub j: usize,
    pub l: usize,
    pub m: usize,
    pub n: usize,
    pub gamma: f64,
    pub beta: f64,
    pub mu: f64,
}

impl ElementConfig {
    /// Tuple with default parameters: `gamma = 1`, `beta = -1` and `mu` chosen
    /// by [`ElementConfig::default_mu`].
    pub fn new(k: usize, j: usize, l: usize, m: usize, n: usize) -> Self {
        ElementConfig { k, j, l, m, n, gamma: 1.0, beta: -1.0, mu: Self::default_mu(n, j) }
    }

    /// The pressure jump penalty is off when the edge velocity space is at least
    /// as rich as the pressure space, and on otherwise.
    pub fn default_mu(n: usize, j: usize) -> f64 {
        if n <= j {
            0.0
        } else {
            1.0
        }
    }

    pub fn with_gamma(mut self, gamma: f64) -> Self {
        self.gamma = gamma;
        self
    }

    pub fn with_beta(mut self, beta: f64) -> Self {
        self.beta = beta;
        self
    }

    pub fn with_mu(mut self, mu: f64) -> Self {
        self.mu = mu;
        self
    }

    pub fn tuple(&self) -> [usize; 5] {
        [self.k, self.j, self.l, self.m, self.n]
    }

    /// Degree of the test tensors in the operator identities: `min(j, l)`.
    pub fn s(&self) -> usize {
        self.j.min(self.l)
    }

    /// Degree of the space holding the full weak gradient `grad v0 + delta`.
    pub fn gradient_degree(&self) -> usize {
        if self.k == 0 {
            self.l
        } else {
            (self.k - 1).max(self.l)
        }
    }

    /// Degree of the hierarchical element basis covering every element space.
    pub fn basis_degree(&self) -> usize {
        self.k.max(self.l).max(self.m).max(self.n)
    }

    pub fn max_degree(&self) -> usize {
        self.basis_degree().max(self.j)
    }

    /// `k - 1 <= n <= min(m, k + 1)`: the range covered by the error analysis.
    pub fn in_error_regime(&self) -> bool {
        self.n + 1 >= self.k && self.n <= self.m.min(self.k + 1)
    }

    /// `n <= j`: the pressure jump penalty may be dropped.
    pub fn stabilizer_free_admissible(&self) -> bool {
        self.n <= self.j
    }

    pub fn validate(&self) -> Result<(), FemError> {
        if self.max_degree() > MAX_DEGREE {
            return Err(FemError::InvalidConfig(format!("degrees above {MAX_DEGREE} are not supported")));
        }
        if !self.gamma.is_finite() || !self.beta.is_finite() {
            return Err(FemError::InvalidConfig("gamma and beta must be finite".into()));
        }
        if !self.mu.is_finite() || self.mu < 0.0 {
            return Err(FemError::InvalidConfig(format!("mu must be finite and non-negative, got {}", self.mu)));
        }
        Ok(())
    }

    /// Refuses `mu = 0` when `n > j`.
    pub fn check_regime(&self) -> Result<(), FemError> {
        if self.mu == 0.0 && !self.stabilizer_free_admissible() {
            return Err(FemError::Regime { element: self.to_string(), n: self.n, j: self.j });
        }
        Ok(())
    }

    pub fn regime_flags(&self) -> String {
        format!(
            "mu = {}, n <= j: {}, k-1 <= n <= min(m, k+1): {}",
            self.mu,
            self.stabilizer_free_admissible(),
            self.in_error_regime()
        )
    }

    /// Triangle rule integrating products of any two element basis functions.
    pub fn element_quad_order(&self) -> usize {
        2 * self.basis_degree() + 2
    }

    /// Edge rule integrating products of any two traces.
    pub fn edge_quad_order(&self) -> usize {
        2 * self.max_degree() + 2
    }

    /// Rules for integrals involving non-polynomial data.
    pub fn data_quad_order(&self) -> usize {
        (2 * self.max_degree() + 6).min(quadrature::MAX_ORDER)
    }
}

impl fmt::Display for ElementConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{},{},{},{})", self.k, self.j, self.l, self.m, self.n)
    }
}
