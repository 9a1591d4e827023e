//! Generalized Gauss-Laguerre quadrature for gamma-mixture expectations.
//!
//! Expectations E_z[h(z)] with z ~ Gamma(shape, 1) reduce to the weight
//! z^{shape-1} e^{-z}; nodes and weights come from the Golub-Welsch
//! eigenvalue construction of the generalized Laguerre Jacobi matrix.

use nalgebra::DMatrix;
use std::sync::RwLock;

/// Node counts tried in order by the adaptive expectation.
const NODE_LADDER: [usize; 5] = [16, 32, 64, 128, 256];

/// Quadrature nodes with weights normalized so they sum to one, i.e. the
/// weights already absorb the 1/Gamma(shape) normalization of the mixture.
#[derive(Debug, Clone)]
pub struct GaussLaguerre {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussLaguerre {
    /// Rule for the weight z^alpha e^{-z} on (0, inf), alpha > -1.
    /// Weights are normalized to unit total mass.
    pub fn new(alpha: f64, n: usize) -> Self {
        assert!(alpha > -1.0 && n >= 1);
        let mut jacobi = DMatrix::<f64>::zeros(n, n);
        for i in 0..n {
            jacobi[(i, i)] = 2.0 * i as f64 + alpha + 1.0;
            if i > 0 {
                let b = (i as f64 * (i as f64 + alpha)).sqrt();
                jacobi[(i, i - 1)] = b;
                jacobi[(i - 1, i)] = b;
            }
        }
        let eig = jacobi.symmetric_eigen();
        let mut pairs: Vec<(f64, f64)> = (0..n)
            .map(|j| {
                let v0 = eig.eigenvectors[(0, j)];
                (eig.eigenvalues[j], v0 * v0)
            })
            .collect();
        pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        GaussLaguerre {
            nodes: pairs.iter().map(|p| p.0).collect(),
            weights: pairs.iter().map(|p| p.1).collect(),
        }
    }

    pub fn integrate<F: Fn(f64) -> f64>(&self, f: F) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * f(x))
            .sum()
    }
}

/// Expectation operator for z ~ Gamma(shape, 1) with cached quadrature
/// tables of increasing node count.
pub struct GammaMixture {
    shape: f64,
    tables: RwLock<Vec<Option<GaussLaguerre>>>,
}

impl GammaMixture {
    pub fn new(shape: f64) -> Self {
        assert!(shape > 0.0, "gamma shape must be positive");
        GammaMixture {
            shape,
            tables: RwLock::new(vec![None; NODE_LADDER.len()]),
        }
    }

    pub fn shape(&self) -> f64 {
        self.shape
    }

    fn table(&self, slot: usize) -> GaussLaguerre {
        {
            let guard = self.tables.read().unwrap();
            if let Some(t) = &guard[slot] {
                return t.clone();
            }
        }
        let t = GaussLaguerre::new(self.shape - 1.0, NODE_LADDER[slot]);
        let mut guard = self.tables.write().unwrap();
        guard[slot] = Some(t.clone());
        t
    }

    /// E[f(z)] with the given node count.
    pub fn expect_with(&self, slot: usize, f: impl Fn(f64) -> f64) -> f64 {
        self.table(slot).integrate(f)
    }

    /// Adaptive E[f(z)]: doubles the node count until two successive
    /// estimates agree to `tol` or the ladder is exhausted.
    pub fn expect<F: Fn(f64) -> f64>(&self, f: F, tol: f64) -> f64 {
        let mut prev = self.expect_with(0, &f);
        for slot in 1..NODE_LADDER.len() {
            let cur = self.expect_with(slot, &f);
            if (cur - prev).abs() <= tol {
                return cur;
            }
            prev = cur;
        }
        prev
    }

    /// Smallest ladder slot on which `f` has converged to `tol`, probed by
    /// comparison with the next slot. Used to freeze a node count before a
    /// large batch of structurally similar evaluations.
    pub fn converged_slot<F: Fn(f64) -> f64>(&self, f: F, tol: f64) -> usize {
        let mut prev = self.expect_with(0, &f);
        for slot in 1..NODE_LADDER.len() {
            let cur = self.expect_with(slot, &f);
            if (cur - prev).abs() <= tol {
                return slot;
            }
            prev = cur;
        }
        NODE_LADDER.len() - 1
    }

    pub fn max_slot() -> usize {
        NODE_LADDER.len() - 1
    }
}
