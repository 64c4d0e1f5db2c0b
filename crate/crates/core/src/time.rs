//! Temporal partitions into left-open slabs and the nodal machinery of the
//! discontinuous-in-time discretization: Gauss-point bases, endpoint limits,
//! degree-raising reconstruction and degree-lowering restriction of slab
//! polynomials.

use std::collections::BTreeSet;

use crate::quadrature::{gauss_legendre, LagrangeBasis};
use crate::{Error, Result};

/// Partition `0 = t_0 < t_1 < … < t_N = T` of the simulation interval into
/// left-open slabs `I_n = (t_{n-1}, t_n]`. Slabs are indexed from 0 in code;
/// dumps use the 1-based numbering conventional in the literature.
#[derive(Debug, Clone, PartialEq)]
pub struct TimePartition {
    points: Vec<f64>,
}

impl TimePartition {
    /// Uniform partition of `(0, final_time]` into `n_slabs` slabs.
    pub fn uniform(final_time: f64, n_slabs: usize) -> Result<Self> {
        if !(final_time > 0.0) {
            return Err(Error::InvalidInput(format!(
                "final time must be positive, got {final_time}"
            )));
        }
        if n_slabs == 0 {
            return Err(Error::InvalidInput("need at least one slab".into()));
        }
        let points = (0..=n_slabs)
            .map(|i| final_time * i as f64 / n_slabs as f64)
            .collect();
        Ok(Self { points })
    }

    /// Partition through explicitly given time points, starting at zero.
    pub fn from_points(points: Vec<f64>) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::InvalidInput(
                "a partition needs at least two time points".into(),
            ));
        }
        if points[0] != 0.0 {
            return Err(Error::InvalidInput(format!(
                "partition must start at t = 0, got {}",
                points[0]
            )));
        }
        for win in points.windows(2) {
            if !(win[1] > win[0]) {
                return Err(Error::InvalidInput(format!(
                    "time points must be strictly increasing, got {} after {}",
                    win[1], win[0]
                )));
            }
        }
        Ok(Self { points })
    }

    pub fn n_slabs(&self) -> usize {
        self.points.len() - 1
    }

    pub fn final_time(&self) -> f64 {
        *self.points.last().unwrap()
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    /// The slab `(t_{n-1}, t_n]` for the 0-based index `n - 1`.
    pub fn span(&self, slab: usize) -> (f64, f64) {
        (self.points[slab], self.points[slab + 1])
    }

    pub fn width(&self, slab: usize) -> f64 {
        self.points[slab + 1] - self.points[slab]
    }

    /// New partition with every marked slab bisected at its midpoint.
    /// Marks are 0-based slab indices; unknown indices are rejected.
    pub fn refined(&self, marks: &BTreeSet<usize>) -> Result<Self> {
        if let Some(&bad) = marks.iter().find(|&&m| m >= self.n_slabs()) {
            return Err(Error::InvalidInput(format!(
                "slab index {bad} out of range (have {} slabs)",
                self.n_slabs()
            )));
        }
        let mut points = Vec::with_capacity(self.points.len() + marks.len());
        points.push(self.points[0]);
        for n in 0..self.n_slabs() {
            let (a, b) = self.span(n);
            if marks.contains(&n) {
                points.push(0.5 * (a + b));
            }
            points.push(b);
        }
        Ok(Self { points })
    }

    /// One line per slab: `n t_start t_end`, 1-based slab numbers.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        for n in 0..self.n_slabs() {
            let (a, b) = self.span(n);
            out.push_str(&format!("{} {a:.12e} {b:.12e}\n", n + 1));
        }
        out
    }
}

/// The `count` Gauss–Legendre nodes of the interval `span`.
pub fn gauss_nodes_on(span: (f64, f64), count: usize) -> Vec<f64> {
    let (nodes, _) = gauss_legendre(count);
    nodes
        .into_iter()
        .map(|x| span.0 + (span.1 - span.0) * x)
        .collect()
}

/// Gauss–Legendre nodes and weights on `span`, weights scaled by its width.
pub fn gauss_rule_on(span: (f64, f64), count: usize) -> (Vec<f64>, Vec<f64>) {
    let (nodes, weights) = gauss_legendre(count);
    let w = span.1 - span.0;
    (
        nodes.into_iter().map(|x| span.0 + w * x).collect(),
        weights.into_iter().map(|wi| wi * w).collect(),
    )
}

/// A vector-valued polynomial on one slab, stored nodally: `blocks[j]` is the
/// spatial coefficient vector attached to temporal node `nodes[j]`. Solutions
/// of the discontinuous-in-time method live at the slab's Gauss points; the
/// derived weight polynomials may carry other node sets (e.g. an anchor at
/// the slab's left endpoint).
#[derive(Debug, Clone)]
pub struct SlabPoly {
    span: (f64, f64),
    nodes: Vec<f64>,
    blocks: Vec<Vec<f64>>,
}

impl SlabPoly {
    /// Degree-`degree` polynomial nodal at the slab's Gauss points.
    pub fn at_gauss(span: (f64, f64), degree: usize, blocks: Vec<Vec<f64>>) -> Self {
        assert_eq!(
            blocks.len(),
            degree + 1,
            "need one coefficient block per Gauss node"
        );
        Self::from_nodes(span, gauss_nodes_on(span, degree + 1), blocks)
    }

    /// Polynomial nodal at an explicit set of temporal nodes.
    pub fn from_nodes(span: (f64, f64), nodes: Vec<f64>, blocks: Vec<Vec<f64>>) -> Self {
        assert!(span.1 > span.0, "slab must have positive width");
        assert_eq!(nodes.len(), blocks.len(), "one block per node");
        assert!(!blocks.is_empty(), "need at least one node");
        let dim = blocks[0].len();
        assert!(
            blocks.iter().all(|b| b.len() == dim),
            "all blocks must have equal length"
        );
        Self { span, nodes, blocks }
    }

    pub fn span(&self) -> (f64, f64) {
        self.span
    }

    pub fn width(&self) -> f64 {
        self.span.1 - self.span.0
    }

    pub fn degree(&self) -> usize {
        self.nodes.len() - 1
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn blocks(&self) -> &[Vec<f64>] {
        &self.blocks
    }

    /// Spatial dimension of the coefficient blocks.
    pub fn dim(&self) -> usize {
        self.blocks[0].len()
    }

    /// Lagrange basis through this polynomial's temporal nodes.
    pub fn basis(&self) -> LagrangeBasis {
        LagrangeBasis::new(self.nodes.clone())
    }

    /// Value at time `t` (polynomial extension; `t` need not lie in the slab).
    pub fn eval(&self, t: f64) -> Vec<f64> {
        let basis = self.basis();
        let mut out = vec![0.0; self.dim()];
        for (j, block) in self.blocks.iter().enumerate() {
            let phi = basis.eval(j, t);
            for (o, &b) in out.iter_mut().zip(block) {
                *o += phi * b;
            }
        }
        out
    }

    /// Time derivative at `t`.
    pub fn eval_deriv(&self, t: f64) -> Vec<f64> {
        let basis = self.basis();
        let mut out = vec![0.0; self.dim()];
        for (j, block) in self.blocks.iter().enumerate() {
            let dphi = basis.eval_deriv(j, t);
            for (o, &b) in out.iter_mut().zip(block) {
                *o += dphi * b;
            }
        }
        out
    }

    /// One-sided endpoint values: (value at the left endpoint from inside,
    /// value at the right endpoint from inside).
    pub fn limits(&self) -> (Vec<f64>, Vec<f64>) {
        (self.eval(self.span.0), self.eval(self.span.1))
    }

    /// Degree-raising reconstruction: the unique polynomial of one degree
    /// higher that interpolates `left_state` at the slab's left endpoint and
    /// this polynomial's values at its own nodes. For the first slab the
    /// anchor is the interpolated initial value; otherwise it is the previous
    /// slab's right-endpoint value (transferred to this slab's mesh if the
    /// meshes differ).
    pub fn reconstructed(&self, left_state: &[f64]) -> SlabPoly {
        assert_eq!(left_state.len(), self.dim(), "anchor dimension mismatch");
        let mut nodes = Vec::with_capacity(self.nodes.len() + 1);
        nodes.push(self.span.0);
        nodes.extend_from_slice(&self.nodes);
        let mut blocks = Vec::with_capacity(self.blocks.len() + 1);
        blocks.push(left_state.to_vec());
        blocks.extend(self.blocks.iter().cloned());
        SlabPoly::from_nodes(self.span, nodes, blocks)
    }

    /// Degree-lowering restriction: the interpolant of this polynomial at the
    /// `target + 1` Gauss nodes of the slab. Requires `target < degree`.
    pub fn restricted(&self, target: usize) -> Result<SlabPoly> {
        if target >= self.degree() {
            return Err(Error::InvalidInput(format!(
                "restriction target degree {target} must be below the input degree {}",
                self.degree()
            )));
        }
        let nodes = gauss_nodes_on(self.span, target + 1);
        let blocks = nodes.iter().map(|&t| self.eval(t)).collect();
        Ok(SlabPoly::from_nodes(self.span, nodes, blocks))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::{assert_abs_diff_eq, assert_relative_eq};
    use proptest::prelude::*;

    /// Solve the (tiny) Vandermonde system for monomial coefficients through
    /// the given points — an interpolation oracle independent of the
    /// Lagrange-basis code under test.
    fn monomial_through(points: &[(f64, f64)]) -> Vec<f64> {
        let n = points.len();
        let mut a = vec![vec![0.0; n + 1]; n];
        for (i, &(t, v)) in points.iter().enumerate() {
            for j in 0..n {
                a[i][j] = t.powi(j as i32);
            }
            a[i][n] = v;
        }
        // Gaussian elimination with partial pivoting.
        for col in 0..n {
            let pivot = (col..n)
                .max_by(|&i, &j| a[i][col].abs().partial_cmp(&a[j][col].abs()).unwrap())
                .unwrap();
            a.swap(col, pivot);
            for row in 0..n {
                if row == col {
                    continue;
                }
                let f = a[row][col] / a[col][col];
                for k in col..=n {
                    a[row][k] -= f * a[col][k];
                }
            }
        }
        (0..n).map(|i| a[i][n] / a[i][i]).collect()
    }

    fn scalar(values: &[f64]) -> Vec<Vec<f64>> {
        values.iter().map(|&v| vec![v]).collect()
    }

    #[test]
    fn uniform_partition_examples() {
        let p = TimePartition::uniform(1.0, 25).unwrap();
        assert_eq!(p.n_slabs(), 25);
        for n in 0..25 {
            assert_relative_eq!(p.width(n), 0.04, max_relative = 1e-14);
        }
        let single = TimePartition::uniform(0.5, 1).unwrap();
        assert_eq!(single.points(), &[0.0, 0.5]);
        let two = TimePartition::uniform(1.0, 2).unwrap();
        assert_eq!(two.points(), &[0.0, 0.5, 1.0]);
        assert!(TimePartition::uniform(-1.0, 3).is_err());
        assert!(TimePartition::uniform(1.0, 0).is_err());
    }

    #[test]
    fn partition_widths_sum_to_final_time() {
        let p = TimePartition::from_points(vec![0.0, 0.1, 0.25, 0.6, 1.0]).unwrap();
        let total: f64 = (0..p.n_slabs()).map(|n| p.width(n)).sum();
        assert_relative_eq!(total, p.final_time(), max_relative = 1e-12);
    }

    #[test]
    fn refine_bisects_marked_slabs() {
        let p = TimePartition::uniform(1.0, 2).unwrap();
        // Bisect the first slab (0, 0.5].
        let refined = p.refined(&BTreeSet::from([0])).unwrap();
        assert_eq!(refined.points(), &[0.0, 0.25, 0.5, 1.0]);

        // Marking every slab halves the step uniformly.
        let all = p.refined(&BTreeSet::from([0, 1])).unwrap();
        assert_eq!(all.points(), &[0.0, 0.25, 0.5, 0.75, 1.0]);

        // No marks: identity.
        let same = p.refined(&BTreeSet::new()).unwrap();
        assert_eq!(same, p);

        assert!(p.refined(&BTreeSet::from([2])).is_err());
    }

    #[test]
    fn dump_lists_slabs_one_based() {
        let p = TimePartition::uniform(1.0, 2).unwrap();
        let dump = p.dump();
        let lines: Vec<&str> = dump.lines().collect();
        assert_eq!(lines.len(), 2);
        assert!(lines[0].starts_with("1 "));
        assert!(lines[1].starts_with("2 "));
        let fields: Vec<&str> = lines[1].split_whitespace().collect();
        assert_relative_eq!(fields[1].parse::<f64>().unwrap(), 0.5);
        assert_relative_eq!(fields[2].parse::<f64>().unwrap(), 1.0);
    }

    #[test]
    fn reconstruction_of_piecewise_constant_is_the_connecting_line() {
        // Constant 1.5 on the slab (-6, -4], previous value 0.8: the raised
        // polynomial is the line through (-6, 0.8) and the midpoint Gauss
        // node (-5, 1.5), i.e. 0.7 t + 5, reaching 2.2 at the right end.
        let poly = SlabPoly::at_gauss((-6.0, -4.0), 0, scalar(&[1.5]));
        let lifted = poly.reconstructed(&[0.8]);
        assert_eq!(lifted.degree(), 1);
        assert_eq!(lifted.nodes(), &[-6.0, -5.0]);
        assert_relative_eq!(lifted.eval(-4.0)[0], 2.2, max_relative = 1e-13);
        let coeffs = monomial_through(&[(-6.0, 0.8), (-5.0, 1.5)]);
        assert_relative_eq!(coeffs[0], 5.0, max_relative = 1e-12);
        assert_relative_eq!(coeffs[1], 0.7, max_relative = 1e-12);
        for &t in &[-6.0, -5.5, -4.7, -4.0] {
            assert_relative_eq!(
                lifted.eval(t)[0],
                coeffs[0] + coeffs[1] * t,
                max_relative = 1e-12
            );
        }
    }

    #[test]
    fn reconstruction_of_sampled_line_with_offset_anchor() {
        // Degree-1 data on (0, 2]: the line 0.4 t + 1.5 sampled at the two
        // Gauss nodes, anchored at (0, 0.8). The raised quadratic is
        // -1.05 t^2 + 2.5 t + 0.8 exactly.
        let g = gauss_nodes_on((0.0, 2.0), 2);
        let values: Vec<f64> = g.iter().map(|&t| 0.4 * t + 1.5).collect();
        assert_abs_diff_eq!(values[0], 1.6691, epsilon = 5e-5);
        assert_abs_diff_eq!(values[1], 2.1309, epsilon = 5e-5);

        let poly = SlabPoly::at_gauss((0.0, 2.0), 1, scalar(&values));
        let lifted = poly.reconstructed(&[0.8]);
        assert_eq!(lifted.degree(), 2);

        let oracle = monomial_through(&[(0.0, 0.8), (g[0], values[0]), (g[1], values[1])]);
        assert_relative_eq!(oracle[0], 0.8, max_relative = 1e-12);
        assert_relative_eq!(oracle[1], 2.5, max_relative = 1e-12);
        assert_relative_eq!(oracle[2], -1.05, max_relative = 1e-12);
        for &t in &[0.0, 0.3, 1.0, 1.9, 2.0] {
            let expected = oracle[0] + oracle[1] * t + oracle[2] * t * t;
            assert_relative_eq!(lifted.eval(t)[0], expected, max_relative = 1e-12);
        }
    }

    #[test]
    fn reconstruction_from_two_decimal_readings_matches_published_curve() {
        // Feeding the rounded nodal readings (1.66, 2.13) through the exact
        // reconstruction reproduces the published quadratic coefficients
        // (-1.0318, 2.4708, 0.8) to plotting accuracy.
        let g = gauss_nodes_on((0.0, 2.0), 2);
        let poly = SlabPoly::at_gauss((0.0, 2.0), 1, scalar(&[1.66, 2.13]));
        let lifted = poly.reconstructed(&[0.8]);
        let coeffs = monomial_through(&[(0.0, 0.8), (g[0], 1.66), (g[1], 2.13)]);
        assert_abs_diff_eq!(coeffs[0], 0.8, epsilon = 1e-12);
        assert_abs_diff_eq!(coeffs[1], 2.4708, epsilon = 1e-3);
        assert_abs_diff_eq!(coeffs[2], -1.0318, epsilon = 1e-3);
        // Frozen high-precision values of the same coefficients.
        assert_abs_diff_eq!(coeffs[1], 2.470936120442628, epsilon = 1e-12);
        assert_abs_diff_eq!(coeffs[2], -1.0319520903319708, epsilon = 1e-12);
        // The reconstruction agrees with the independent interpolation oracle.
        for &t in &[0.0, 0.5, 1.3, 2.0] {
            let expected = coeffs[0] + coeffs[1] * t + coeffs[2] * t * t;
            assert_relative_eq!(lifted.eval(t)[0], expected, max_relative = 1e-12);
        }
    }

    #[test]
    fn reconstruction_of_continuous_data_is_identity() {
        let poly = SlabPoly::at_gauss((3.0, 3.5), 0, scalar(&[1.25]));
        let lifted = poly.reconstructed(&[1.25]);
        for &t in &[3.0, 3.2, 3.5] {
            assert_relative_eq!(lifted.eval(t)[0], 1.25, max_relative = 1e-14);
        }
    }

    #[test]
    fn restriction_of_line_to_constant_is_midpoint_value() {
        let g = gauss_nodes_on((-2.0, 2.0), 2);
        let values: Vec<f64> = g.iter().map(|&t| 0.4 * t + 1.5).collect();
        let poly = SlabPoly::at_gauss((-2.0, 2.0), 1, scalar(&values));
        let restricted = poly.restricted(0).unwrap();
        assert_eq!(restricted.degree(), 0);
        assert_relative_eq!(restricted.blocks()[0][0], 1.5, max_relative = 1e-13);
    }

    #[test]
    fn restriction_of_quadratic_matches_published_line() {
        // Quadratic 0.45833 t^2 - 5.3063 t + 16.138 on (4, 8], restricted to
        // the line through its values at the two-point Gauss nodes. The line
        // rounds to 0.1937 t + 0.25.
        let q = |t: f64| 0.45833 * t * t - 5.3063 * t + 16.138;
        let g3 = gauss_nodes_on((4.0, 8.0), 3);
        let blocks = scalar(&g3.iter().map(|&t| q(t)).collect::<Vec<_>>());
        let poly = SlabPoly::at_gauss((4.0, 8.0), 2, blocks);
        let restricted = poly.restricted(1).unwrap();

        // Frozen values of the restriction at its own Gauss nodes.
        assert_abs_diff_eq!(restricted.blocks()[0][0], 1.1875673604041408, epsilon = 1e-12);
        assert_abs_diff_eq!(restricted.blocks()[1][0], 1.6348059729291925, epsilon = 1e-12);

        let g2 = gauss_nodes_on((4.0, 8.0), 2);
        let line = monomial_through(&[(g2[0], q(g2[0])), (g2[1], q(g2[1]))]);
        assert_abs_diff_eq!(line[0], 0.25, epsilon = 1e-3);
        assert_abs_diff_eq!(line[1], 0.1937, epsilon = 1e-3);
        assert_abs_diff_eq!(line[0], 0.24922666666666667, epsilon = 1e-12);
        assert_abs_diff_eq!(line[1], 0.19366, epsilon = 1e-12);
        for &t in &[4.0, 5.5, 7.0, 8.0] {
            assert_relative_eq!(
                restricted.eval(t)[0],
                line[0] + line[1] * t,
                max_relative = 1e-12
            );
        }
    }

    #[test]
    fn restriction_reproduces_embedded_lower_degree_data() {
        // A line stored in the degree-2 nodal basis restricts to itself.
        let g3 = gauss_nodes_on((1.0, 2.0), 3);
        let blocks = scalar(&g3.iter().map(|&t| -0.3 * t + 2.0).collect::<Vec<_>>());
        let poly = SlabPoly::at_gauss((1.0, 2.0), 2, blocks);
        let restricted = poly.restricted(1).unwrap();
        for &t in &[1.0, 1.4, 2.0] {
            assert_relative_eq!(restricted.eval(t)[0], -0.3 * t + 2.0, max_relative = 1e-13);
        }
        assert!(poly.restricted(2).is_err());
        assert!(poly.restricted(5).is_err());
    }

    #[test]
    fn restriction_is_a_projection() {
        // Restrict, re-embed in the original nodal basis, restrict again:
        // the result is unchanged.
        let g4 = gauss_nodes_on((0.5, 0.9), 4);
        let blocks = scalar(&g4.iter().map(|&t| t.sin()).collect::<Vec<_>>());
        let poly = SlabPoly::at_gauss((0.5, 0.9), 3, blocks);
        let once = poly.restricted(1).unwrap();
        let re_embedded = SlabPoly::at_gauss(
            (0.5, 0.9),
            3,
            g4.iter().map(|&t| once.eval(t)).collect(),
        );
        let twice = re_embedded.restricted(1).unwrap();
        for (a, b) in once.blocks().iter().zip(twice.blocks()) {
            assert_relative_eq!(a[0], b[0], max_relative = 1e-12);
        }
    }

    #[test]
    fn restriction_preserves_gauss_values() {
        let g4 = gauss_nodes_on((0.0, 1.0), 4);
        let blocks = scalar(&g4.iter().map(|&t| (3.0 * t).cos()).collect::<Vec<_>>());
        let poly = SlabPoly::at_gauss((0.0, 1.0), 3, blocks);
        for target in 0..3 {
            let restricted = poly.restricted(target).unwrap();
            for &t in restricted.nodes() {
                assert_relative_eq!(
                    restricted.eval(t)[0],
                    poly.eval(t)[0],
                    max_relative = 1e-12
                );
            }
        }
    }

    #[test]
    fn degree_zero_restriction_approximates_interval_mean() {
        // For smooth v, the midpoint value differs from the L² best constant
        // (the mean) by at most τ²/24 · max|v''|.
        let span = (1.0, 1.1);
        let tau = span.1 - span.0;
        let g3 = gauss_nodes_on(span, 3);
        let blocks = scalar(&g3.iter().map(|&t| t.sin()).collect::<Vec<_>>());
        let poly = SlabPoly::at_gauss(span, 2, blocks);
        let restricted = poly.restricted(0).unwrap();

        let (nodes, weights) = gauss_rule_on(span, 8);
        let mean: f64 = nodes
            .iter()
            .zip(&weights)
            .map(|(&t, &w)| w * t.sin())
            .sum::<f64>()
            / tau;
        // poly itself interpolates sin only approximately; compare against
        // the midpoint of the interpolant, then bound against the mean.
        assert!((restricted.blocks()[0][0] - mean).abs() <= tau * tau / 24.0 + 1e-9);
    }

    #[test]
    fn endpoint_limits_extrapolate_the_nodal_polynomial() {
        let constant = SlabPoly::at_gauss((2.0, 2.5), 0, scalar(&[0.8]));
        let (left, right) = constant.limits();
        assert_relative_eq!(left[0], 0.8);
        assert_relative_eq!(right[0], 0.8);

        // Degree 1 on (0, 2] with four-decimal nodal readings: endpoints
        // extrapolate to 1.5 and 2.3 at reading precision.
        let poly = SlabPoly::at_gauss((0.0, 2.0), 1, scalar(&[1.6691, 2.1309]));
        let (left, right) = poly.limits();
        assert_abs_diff_eq!(left[0], 1.5, epsilon = 1e-3);
        assert_abs_diff_eq!(right[0], 2.3, epsilon = 1e-3);
        assert_abs_diff_eq!(left[0], 1.5000694685323462, epsilon = 1e-12);
        assert_abs_diff_eq!(right[0], 2.2999305314676538, epsilon = 1e-12);

        // The right-endpoint limit of a constant slab feeds the next slab's
        // reconstruction anchor.
        let (_, prev_end) = constant.limits();
        let next = SlabPoly::at_gauss((2.5, 3.0), 0, scalar(&[1.5]));
        let lifted = next.reconstructed(&prev_end);
        assert_relative_eq!(lifted.eval(2.5)[0], 0.8, max_relative = 1e-13);
    }

    proptest! {
        /// Sampling a random polynomial of degree r+1 at the Gauss nodes and
        /// anchoring at its own left-endpoint value reconstructs it exactly.
        #[test]
        fn reconstruction_is_exact_on_matching_polynomials(
            r in 0usize..4,
            coeffs in prop::collection::vec(-1.0f64..1.0, 5),
            start in -2.0f64..2.0,
            width in 0.1f64..3.0,
        ) {
            let span = (start, start + width);
            let p = |t: f64| -> f64 {
                (0..=r + 1).map(|k| coeffs[k] * t.powi(k as i32)).sum()
            };
            let g = gauss_nodes_on(span, r + 1);
            let blocks = g.iter().map(|&t| vec![p(t)]).collect();
            let poly = SlabPoly::at_gauss(span, r, blocks);
            let lifted = poly.reconstructed(&[p(span.0)]);
            for i in 0..=6 {
                let t = span.0 + width * i as f64 / 6.0;
                prop_assert!((lifted.eval(t)[0] - p(t)).abs() < 1e-9);
            }
        }

        /// Restriction reproduces any embedded polynomial of the target degree.
        #[test]
        fn restriction_reproduces_polynomials_of_target_degree(
            s in 1usize..4,
            coeffs in prop::collection::vec(-1.0f64..1.0, 4),
            start in -2.0f64..2.0,
            width in 0.1f64..3.0,
        ) {
            let span = (start, start + width);
            let r = s - 1;
            let p = |t: f64| -> f64 {
                (0..=r).map(|k| coeffs[k] * t.powi(k as i32)).sum()
            };
            let g = gauss_nodes_on(span, s + 1);
            let blocks = g.iter().map(|&t| vec![p(t)]).collect();
            let poly = SlabPoly::at_gauss(span, s, blocks);
            let restricted = poly.restricted(r).unwrap();
            for i in 0..=6 {
                let t = span.0 + width * i as f64 / 6.0;
                prop_assert!((restricted.eval(t)[0] - p(t)).abs() < 1e-9);
            }
        }
    }
}
