//! One-dimensional Gauss–Legendre rules and Lagrange interpolation helpers
//! shared by the temporal and spatial discretizations.

/// Nodes and weights of the `n`-point Gauss–Legendre rule on `[0, 1]`,
/// with nodes in ascending order. Exact for polynomials of degree `2n - 1`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1, "a quadrature rule needs at least one point");
    let mut pairs: Vec<(f64, f64)> = (0..n)
        .map(|i| {
            // Chebyshev-like initial guess for the i-th root of P_n on [-1, 1],
            // polished by Newton iteration.
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            for _ in 0..100 {
                let (p, dp) = legendre_and_derivative(n, x);
                let dx = p / dp;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, dp) = legendre_and_derivative(n, x);
            // Map node to [0, 1]; the standard weight 2 / ((1 - x^2) dp^2)
            // picks up a factor 1/2 from the interval change.
            (0.5 * (1.0 + x), 1.0 / ((1.0 - x * x) * dp * dp))
        })
        .collect();
    pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    pairs.into_iter().unzip()
}

/// Value and first derivative of the Legendre polynomial `P_n` at `x ∈ (-1, 1)`.
fn legendre_and_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p_prev = 1.0_f64;
    let mut p = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 1..n {
        let k = k as f64;
        let p_next = ((2.0 * k + 1.0) * x * p - k * p_prev) / (k + 1.0);
        p_prev = p;
        p = p_next;
    }
    let dp = (n as f64) * (x * p - p_prev) / (x * x - 1.0);
    (p, dp)
}

/// Lagrange interpolation basis on a fixed set of pairwise distinct nodes.
///
/// Basis function `j` is one at node `j` and zero at every other node.
/// Evaluation uses the direct product formulas, which are perfectly adequate
/// for the small node counts (≤ 5) used by this crate.
#[derive(Debug, Clone)]
pub struct LagrangeBasis {
    nodes: Vec<f64>,
}

impl LagrangeBasis {
    /// Basis through the given nodes. Panics if two nodes coincide.
    pub fn new(nodes: Vec<f64>) -> Self {
        assert!(!nodes.is_empty(), "need at least one interpolation node");
        for i in 0..nodes.len() {
            for j in 0..i {
                assert!(
                    (nodes[i] - nodes[j]).abs() > 0.0,
                    "interpolation nodes must be distinct"
                );
            }
        }
        Self { nodes }
    }

    /// The `n + 1` equispaced nodes `0, 1/n, …, 1` on the unit interval.
    pub fn equispaced_unit(n: usize) -> Self {
        let nodes = if n == 0 {
            // A single node; place it at the interval midpoint so that the
            // constant shape function has a canonical anchor.
            vec![0.5]
        } else {
            (0..=n).map(|k| k as f64 / n as f64).collect()
        };
        Self::new(nodes)
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Value of basis function `j` at `t`.
    pub fn eval(&self, j: usize, t: f64) -> f64 {
        let tj = self.nodes[j];
        self.nodes
            .iter()
            .enumerate()
            .filter(|&(m, _)| m != j)
            .map(|(_, &tm)| (t - tm) / (tj - tm))
            .product()
    }

    /// First derivative of basis function `j` at `t`.
    pub fn eval_deriv(&self, j: usize, t: f64) -> f64 {
        let tj = self.nodes[j];
        let mut sum = 0.0;
        for (m, &tm) in self.nodes.iter().enumerate() {
            if m == j {
                continue;
            }
            let mut prod = 1.0 / (tj - tm);
            for (k, &tk) in self.nodes.iter().enumerate() {
                if k == j || k == m {
                    continue;
                }
                prod *= (t - tk) / (tj - tk);
            }
            sum += prod;
        }
        sum
    }

    /// Second derivative of basis function `j` at `t`.
    pub fn eval_deriv2(&self, j: usize, t: f64) -> f64 {
        let tj = self.nodes[j];
        let mut sum = 0.0;
        for (m, &tm) in self.nodes.iter().enumerate() {
            if m == j {
                continue;
            }
            for (k, &tk) in self.nodes.iter().enumerate() {
                if k == j || k == m {
                    continue;
                }
                let mut prod = 1.0 / ((tj - tm) * (tj - tk));
                for (l, &tl) in self.nodes.iter().enumerate() {
                    if l == j || l == m || l == k {
                        continue;
                    }
                    prod *= (t - tl) / (tj - tl);
                }
                sum += prod;
            }
        }
        sum
    }

    /// All basis values at `t`.
    pub fn eval_all(&self, t: f64) -> Vec<f64> {
        (0..self.len()).map(|j| self.eval(j, t)).collect()
    }

    /// All basis derivatives at `t`.
    pub fn deriv_all(&self, t: f64) -> Vec<f64> {
        (0..self.len()).map(|j| self.eval_deriv(j, t)).collect()
    }
}
