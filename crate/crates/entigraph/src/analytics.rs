//! Closed-form analytics for the augmentation model: extinction
//! probability, the accuracy band of the growth theorem, the general
//! mixture-of-exponentials form, and a Poisson branching-process
//! approximation of the whole curve.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use rayon::prelude::*;
use std::collections::BTreeMap;

use crate::graph::ModelParams;
use crate::process::{AccuracyCurve, ProcessError};
use crate::Real;

/// Errors from the closed-form analytics.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AnalyticsError {
    #[error("lambda must be a number, got NaN")]
    UndefinedLambda,
    #[error("the accuracy band needs lambda > 1, got {0}")]
    SubcriticalLambda(f64),
    #[error("upper-bound decay factor fell outside (0, 1); lambda is too close to 1 for this vertex count")]
    DegenerateBound,
    #[error("tolerance must be positive, got {0}")]
    BadTolerance(f64),
    #[error("mixture weights and rates must have equal nonzero length")]
    MixtureShape,
    #[error("mixture weights must be nonnegative and sum to 1, got total {0}")]
    UnnormalizedWeights(f64),
    #[error("mixture rates must lie in (0, 1], got {0}")]
    BadRate(f64),
    #[error("step value must be nonnegative and finite, got {0}")]
    BadStep(f64),
    #[error("branching approximation needs depth >= 1 and at least one tree")]
    BadApproxSetup,
    #[error(transparent)]
    Curve(#[from] ProcessError),
}

/// Iteration tolerance used when none is supplied.
pub const DEFAULT_FIXED_POINT_TOL: f64 = 1e-12;

/// Extinction probability of a Poisson(`lambda`) branching process: the
/// smallest root of `rho = exp(lambda * (rho - 1))`.
///
/// Subcritical and critical processes (`lambda <= 1`) return exactly 1.
/// Above 1 the fixed-point iteration starts at 0 and climbs monotonically,
/// stopping once the residual drops below `tol` or the iterates stop
/// moving at machine precision, so it terminates for any positive `tol`.
pub fn extinction_probability<T: Real>(lambda: T, tol: T) -> Result<T, AnalyticsError> {
    if lambda.is_nan() {
        return Err(AnalyticsError::UndefinedLambda);
    }
    if tol.is_nan() || tol <= T::zero() {
        return Err(AnalyticsError::BadTolerance(tol.to_f64().unwrap_or(f64::NAN)));
    }
    if lambda <= T::one() {
        return Ok(T::one());
    }
    let mut rho = T::zero();
    loop {
        let next = (lambda * (rho - T::one())).exp();
        if next <= rho {
            return Ok(rho);
        }
        if next - rho < tol {
            return Ok(next);
        }
        rho = next;
    }
}

/// Asymptotic accuracy ceiling `C = (1 - rho(lambda))^2`: the probability
/// that a uniform ordered pair has both endpoints in the infinite
/// component, which is where the learned set eventually saturates.
pub fn c_lambda<T: Real>(lambda: T) -> T {
    if lambda.is_nan() {
        return T::nan();
    }
    let tol = T::from_f64_lossy(DEFAULT_FIXED_POINT_TOL).max(T::epsilon());
    let rho = extinction_probability(lambda, tol).expect("tolerance is positive");
    let survive = T::one() - rho;
    survive * survive
}

/// Closed-form accuracy band for the supercritical model.
///
/// At step `t` the truth is bracketed by
/// `lower = (p + C (1 - C_lb^t)) (1 - eps)` and
/// `upper = (p + C (1 - C_ub^t)) (1 + eps)` with `C = c_lambda`,
/// `C_lb = 1 - 1 / (V (V - 1))`, and
/// `C_ub = 1 - (1 + eps) ln V / (V (V - 1) ln lambda)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TheoremBounds<T = f64> {
    p: T,
    epsilon: T,
    c: T,
    c_lb: T,
    c_ub: T,
}

impl<T: Real> TheoremBounds<T> {
    /// Precomputes the band constants; requires `lambda > 1` and a vertex
    /// count large enough to keep the upper decay factor inside (0, 1).
    pub fn new(params: &ModelParams<T>) -> Result<Self, AnalyticsError> {
        let lambda = params.lambda();
        if lambda.is_nan() {
            return Err(AnalyticsError::UndefinedLambda);
        }
        if lambda <= T::one() {
            return Err(AnalyticsError::SubcriticalLambda(lambda.to_f64().unwrap_or(f64::NAN)));
        }
        let eps = params.epsilon();
        let pairs = T::from_count(params.ordered_pair_count());
        let vertices = T::from_count(params.vertex_count() as u64);
        let c_lb = T::one() - T::one() / pairs;
        let c_ub = T::one() - (T::one() + eps) * vertices.ln() / (pairs * lambda.ln());
        if !(c_ub > T::zero() && c_ub < T::one()) {
            return Err(AnalyticsError::DegenerateBound);
        }
        Ok(TheoremBounds {
            p: params.edge_probability(),
            epsilon: eps,
            c: c_lambda(lambda),
            c_lb,
            c_ub,
        })
    }

    pub fn c(&self) -> T {
        self.c
    }

    pub fn lower_decay(&self) -> T {
        self.c_lb
    }

    pub fn upper_decay(&self) -> T {
        self.c_ub
    }

    /// `(lower, upper)` at step `t`.
    pub fn band(&self, t: u64) -> (T, T) {
        let t = T::from_count(t);
        let one = T::one();
        let lower = (self.p + self.c * (one - self.c_lb.powf(t))) * (one - self.epsilon);
        let upper = (self.p + self.c * (one - self.c_ub.powf(t))) * (one + self.epsilon);
        (lower, upper)
    }
}

/// One-shot band evaluation at step `t`.
pub fn theorem_band<T: Real>(params: &ModelParams<T>, t: u64) -> Result<(T, T), AnalyticsError> {
    Ok(TheoremBounds::new(params)?.band(t))
}

/// General mixture-of-exponentials accuracy value
/// `p + C (1 - sum_k mu_k (1 - a_k)^t)`.
///
/// `weights` is a probability mass function over the rates, `rates` holds
/// the per-step inclusion probabilities `a_k` in (0, 1], and `t` is a
/// nonnegative real step count.
pub fn moe_value<T: Real>(
    p: T,
    c: T,
    weights: &[T],
    rates: &[T],
    t: T,
) -> Result<T, AnalyticsError> {
    if weights.is_empty() || weights.len() != rates.len() {
        return Err(AnalyticsError::MixtureShape);
    }
    let mut total = T::zero();
    for &w in weights {
        if w.is_nan() || w < T::zero() {
            return Err(AnalyticsError::UnnormalizedWeights(w.to_f64().unwrap_or(f64::NAN)));
        }
        total = total + w;
    }
    let slack = T::from_f64_lossy(1e-9)
        .max(T::epsilon() * T::from_count(16 * weights.len() as u64));
    if (total - T::one()).abs() > slack {
        return Err(AnalyticsError::UnnormalizedWeights(total.to_f64().unwrap_or(f64::NAN)));
    }
    for &a in rates {
        if !(a > T::zero() && a <= T::one()) {
            return Err(AnalyticsError::BadRate(a.to_f64().unwrap_or(f64::NAN)));
        }
    }
    if !(t >= T::zero() && t.is_finite()) {
        return Err(AnalyticsError::BadStep(t.to_f64().unwrap_or(f64::NAN)));
    }
    let surviving: T =
        weights.iter().zip(rates).map(|(&w, &a)| w * (T::one() - a).powf(t)).sum();
    Ok(p + c * (T::one() - surviving))
}

/// Which per-node statistic the depth-limited tree walk records.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum OffspringStat {
    /// Size of the subtree hanging from the node, the node included.
    #[default]
    SubtreeSize,
    /// One plus the node's direct offspring count.
    DirectOffspring,
}

/// Monte Carlo branching-process approximation of the accuracy curve.
///
/// Trees of depth `L` are sampled from a Poisson(`lambda`) offspring law.
/// A node at depth `L - l` contributes its recorded statistic `k` to the
/// level-`l` empirical distribution `P_l`; the curve is then
/// `p + C (1 - sum_l w_l sum_k P_l(k) (1 - k / (V (V - 1)))^t)` with
/// level weights `w_l = (lambda - 1) / lambda^(l + 1)`. The truncated
/// tail mass `lambda^-(L + 1)` sits on a unit atom so the weights stay a
/// probability mass function. Recorded statistics are clamped to the
/// pair count, since a star can never contain more edges than there are
/// ordered pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct BranchingApprox<T = f64> {
    p: T,
    c: T,
    pair_count: u64,
    level_weights: Vec<T>,
    residual_weight: T,
    level_pmfs: Vec<Vec<(u64, T)>>,
    trees: u32,
}

impl<T: Real> BranchingApprox<T> {
    /// Samples `mc_trees` truncated trees and assembles the per-level
    /// size distributions. Trees run on independent counter-mode RNG
    /// streams derived from `seed`, so the estimate is reproducible and
    /// independent of thread scheduling.
    pub fn estimate(
        params: &ModelParams<T>,
        depth: usize,
        mc_trees: u32,
        stat: OffspringStat,
        seed: u64,
    ) -> Result<Self, AnalyticsError> {
        let lambda = params.lambda();
        if lambda.is_nan() {
            return Err(AnalyticsError::UndefinedLambda);
        }
        if lambda <= T::one() {
            return Err(AnalyticsError::SubcriticalLambda(lambda.to_f64().unwrap_or(f64::NAN)));
        }
        if depth == 0 || mc_trees == 0 {
            return Err(AnalyticsError::BadApproxSetup);
        }
        let pair_count = params.ordered_pair_count();
        let lambda_f = lambda.to_f64().expect("lambda fits in f64");

        let histograms = (0..mc_trees)
            .into_par_iter()
            .map(|tree| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(tree as u64);
                tree_level_histograms(&mut rng, lambda_f, depth, stat, pair_count)
            })
            .reduce(
                || vec![BTreeMap::new(); depth + 1],
                |mut left, right| {
                    for (acc, part) in left.iter_mut().zip(right) {
                        for (k, n) in part {
                            *acc.entry(k).or_insert(0u64) += n;
                        }
                    }
                    left
                },
            );

        let mut level_weights = Vec::with_capacity(depth + 1);
        let mut weight = (lambda - T::one()) / lambda;
        let mut total_weight = T::zero();
        for _ in 0..=depth {
            level_weights.push(weight);
            total_weight = total_weight + weight;
            weight = weight / lambda;
        }
        let residual_weight = T::one() - total_weight;

        let level_pmfs = histograms
            .into_iter()
            .map(|hist| {
                let total: u64 = hist.values().sum();
                if total == 0 {
                    // Every sampled tree died before reaching this level;
                    // fall back to the unit atom.
                    return vec![(1u64, T::one())];
                }
                let denom = T::from_count(total);
                hist.into_iter().map(|(k, n)| (k, T::from_count(n) / denom)).collect()
            })
            .collect();

        Ok(BranchingApprox {
            p: params.edge_probability(),
            c: c_lambda(lambda),
            pair_count,
            level_weights,
            residual_weight,
            level_pmfs,
            trees: mc_trees,
        })
    }

    pub fn c(&self) -> T {
        self.c
    }

    pub fn depth(&self) -> usize {
        self.level_weights.len() - 1
    }

    /// Level weights `w_0 ..= w_L`, summing with the residual to 1.
    pub fn level_weights(&self) -> &[T] {
        &self.level_weights
    }

    pub fn residual_weight(&self) -> T {
        self.residual_weight
    }

    /// Empirical `(k, probability)` pairs for level `l`, sorted by `k`.
    pub fn level_pmf(&self, level: usize) -> &[(u64, T)] {
        &self.level_pmfs[level]
    }

    /// Approximate accuracy after `t` steps.
    pub fn value(&self, t: u64) -> T {
        let t = T::from_count(t);
        let pairs = T::from_count(self.pair_count);
        let one = T::one();
        let decay = |k: u64| (one - T::from_count(k) / pairs).powf(t);
        let mut surviving = self.residual_weight * decay(1);
        for (w, pmf) in self.level_weights.iter().zip(&self.level_pmfs) {
            for &(k, prob) in pmf {
                surviving = surviving + *w * prob * decay(k);
            }
        }
        self.p + self.c * (one - surviving)
    }

    /// Approximate curve over a step grid, packaged like a deterministic
    /// accuracy curve; the replicate count records the tree sample size.
    pub fn curve(&self, step_grid: &[u64]) -> Result<AccuracyCurve<T>, AnalyticsError> {
        let mean_acc: Vec<T> = step_grid.iter().map(|&t| self.value(t)).collect();
        let stderr = vec![T::zero(); step_grid.len()];
        Ok(AccuracyCurve::new(step_grid.to_vec(), mean_acc, stderr, self.trees.max(1))?)
    }
}

/// Samples one truncated tree and returns the per-level statistic counts,
/// index `l` holding nodes at depth `depth - l`.
fn tree_level_histograms(
    rng: &mut ChaCha8Rng,
    lambda: f64,
    depth: usize,
    stat: OffspringStat,
    pair_count: u64,
) -> Vec<BTreeMap<u64, u64>> {
    let poisson = Poisson::new(lambda).expect("lambda is positive and finite");
    // offspring[d][i] = offspring count of node i at depth d, d < depth.
    let mut offspring: Vec<Vec<u32>> = Vec::with_capacity(depth);
    let mut width = 1usize;
    for _ in 0..depth {
        if width == 0 {
            break;
        }
        let row: Vec<u32> = (0..width).map(|_| poisson.sample(rng) as u32).collect();
        width = row.iter().map(|&c| c as usize).sum();
        offspring.push(row);
    }
    let widths: Vec<usize> = {
        let mut w = vec![1usize];
        for row in &offspring {
            w.push(row.iter().map(|&c| c as usize).sum());
        }
        while w.len() < depth + 1 {
            w.push(0);
        }
        w
    };

    // sizes[d][i] = subtree size of node i at depth d, leaves at `depth`
    // counting just themselves.
    let mut sizes: Vec<Vec<u64>> = widths.iter().map(|&w| vec![1u64; w]).collect();
    for d in (0..depth).rev() {
        let (upper, lower) = sizes.split_at_mut(d + 1);
        let here = &mut upper[d];
        let below = &lower[0];
        let mut child = 0usize;
        for (i, node_size) in here.iter_mut().enumerate() {
            let kids = offspring.get(d).map_or(0, |row| *row.get(i).unwrap_or(&0)) as usize;
            *node_size = 1 + below[child..child + kids].iter().sum::<u64>();
            child += kids;
        }
    }

    let mut histograms = vec![BTreeMap::new(); depth + 1];
    for (d, row_sizes) in sizes.iter().enumerate() {
        let level = depth - d;
        for (i, &size) in row_sizes.iter().enumerate() {
            let k = match stat {
                OffspringStat::SubtreeSize => size,
                OffspringStat::DirectOffspring => {
                    1 + offspring.get(d).map_or(0, |row| *row.get(i).unwrap_or(&0)) as u64
                }
            };
            *histograms[level].entry(k.clamp(1, pair_count)).or_insert(0u64) += 1;
        }
    }
    histograms
}

/// Depth heuristic for [`BranchingApprox::estimate`]: about
/// `log_lambda V`, so the deepest level holds on the order of `V` nodes
/// and recorded sizes stay comparable to the pair count.
pub fn default_approx_depth<T: Real>(params: &ModelParams<T>) -> usize {
    let lambda = params.lambda().to_f64().unwrap_or(f64::NAN);
    let v = params.vertex_count() as f64;
    if lambda.is_nan() || lambda <= 1.0 {
        return 1;
    }
    (v.ln() / lambda.ln()).ceil().clamp(1.0, 30.0) as usize
}

/// One-shot approximation over a grid with the subtree-size statistic.
pub fn branching_approx_curve<T: Real>(
    params: &ModelParams<T>,
    depth: usize,
    mc_trees: u32,
    step_grid: &[u64],
    seed: u64,
) -> Result<AccuracyCurve<T>, AnalyticsError> {
    BranchingApprox::estimate(params, depth, mc_trees, OffspringStat::SubtreeSize, seed)?
        .curve(step_grid)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::generate_er;
    use crate::process::{exact_acc_curve, pair_probabilities};
    use proptest::prelude::*;

    /// Independent root finder for `exp(lambda (rho - 1)) = rho` used as
    /// an oracle: bisection on the sign change below the trivial root.
    fn extinction_by_bisection(lambda: f64) -> f64 {
        let g = |rho: f64| (lambda * (rho - 1.0)).exp() - rho;
        let (mut lo, mut hi) = (0.0f64, 1.0 - 1e-9);
        assert!(g(lo) > 0.0 && g(hi) < 0.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if g(mid) > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn subcritical_and_critical_extinction_is_one() {
        for lambda in [0.0, 0.3, 0.9, 1.0] {
            assert_eq!(extinction_probability(lambda, 1e-12).unwrap(), 1.0);
        }
    }

    #[test]
    fn extinction_matches_bisection_oracle() {
        for lambda in [1.1, 1.5, 2.0, 3.0, 5.0, 10.0] {
            let rho = extinction_probability(lambda, 1e-14).unwrap();
            let oracle = extinction_by_bisection(lambda);
            assert!(
                (rho - oracle).abs() < 1e-10,
                "lambda={lambda}: {rho} vs oracle {oracle}"
            );
            let residual = ((lambda * (rho - 1.0)).exp() - rho).abs();
            assert!(residual < 1e-12, "lambda={lambda}: residual {residual}");
        }
    }

    #[test]
    fn extinction_is_decreasing_in_lambda() {
        let grid = [1.05, 1.2, 1.5, 2.0, 3.0, 5.0, 10.0, 20.0];
        let values: Vec<f64> =
            grid.iter().map(|&l| extinction_probability(l, 1e-13).unwrap()).collect();
        assert!(values.windows(2).all(|w| w[0] > w[1]));
    }

    #[test]
    fn extinction_validates_input() {
        assert_eq!(
            extinction_probability(f64::NAN, 1e-12).unwrap_err(),
            AnalyticsError::UndefinedLambda
        );
        assert_eq!(
            extinction_probability(2.0, 0.0).unwrap_err(),
            AnalyticsError::BadTolerance(0.0)
        );
    }

    #[test]
    fn ceiling_is_squared_survival() {
        assert_eq!(c_lambda(0.5), 0.0);
        assert_eq!(c_lambda(1.0), 0.0);
        let rho = extinction_by_bisection(2.0);
        assert!((c_lambda(2.0) - (1.0 - rho) * (1.0 - rho)).abs() < 1e-10);
        assert!(c_lambda(10.0) > 0.999);
    }

    #[test]
    fn band_requires_supercritical_lambda() {
        let params = ModelParams::new(100, 1.0f64, 0.1).unwrap();
        assert_eq!(theorem_band(&params, 5).unwrap_err(), AnalyticsError::SubcriticalLambda(1.0));
    }

    #[test]
    fn band_rejects_degenerate_upper_decay() {
        // lambda barely above 1 blows the (1 + eps) ln V / ln lambda term
        // past the pair count.
        let params = ModelParams::new(3, 1.0000001f64, 0.1).unwrap();
        assert_eq!(TheoremBounds::new(&params).unwrap_err(), AnalyticsError::DegenerateBound);
    }

    #[test]
    fn band_endpoints_follow_the_closed_form() {
        let params = ModelParams::new(100, 3.0f64, 0.1).unwrap();
        let p = params.edge_probability();
        let (lo, hi) = theorem_band(&params, 0).unwrap();
        assert!((lo - p * 0.9).abs() < 1e-15);
        assert!((hi - p * 1.1).abs() < 1e-15);

        let c = c_lambda(3.0);
        let (lo, hi) = theorem_band(&params, 1_000_000_000_000).unwrap();
        assert!((lo - (p + c) * 0.9).abs() < 1e-9);
        assert!((hi - (p + c) * 1.1).abs() < 1e-9);
    }

    #[test]
    fn band_matches_an_independent_evaluation() {
        let (v, lambda, eps) = (100usize, 3.0f64, 0.1f64);
        let params = ModelParams::new(v, lambda, eps).unwrap();
        let bounds = TheoremBounds::new(&params).unwrap();
        let pairs = (v * (v - 1)) as f64;
        let p = lambda / v as f64;
        let c = c_lambda(lambda);
        for t in [0u64, 1, 10, 1000, 250_000, 10_000_000] {
            let c_lb = 1.0 - 1.0 / pairs;
            let c_ub = 1.0 - (1.0 + eps) * (v as f64).ln() / (pairs * lambda.ln());
            let expect_lo = (p + c * (1.0 - c_lb.powf(t as f64))) * (1.0 - eps);
            let expect_hi = (p + c * (1.0 - c_ub.powf(t as f64))) * (1.0 + eps);
            let (lo, hi) = bounds.band(t);
            assert!((lo - expect_lo).abs() < 1e-12);
            assert!((hi - expect_hi).abs() < 1e-12);
        }
    }

    #[test]
    fn mixture_value_on_a_single_atom() {
        let y = moe_value::<f64>(0.1, 0.5, &[1.0], &[0.25], 1.0).unwrap();
        assert!((y - 0.225).abs() < 1e-15);
        assert_eq!(moe_value::<f64>(0.1, 0.5, &[1.0], &[0.25], 0.0).unwrap(), 0.1);
        let tail = moe_value::<f64>(0.1, 0.5, &[1.0], &[0.25], 1e9).unwrap();
        assert!((tail - 0.6).abs() < 1e-12);
    }

    #[test]
    fn mixture_value_validates_input() {
        assert_eq!(moe_value(0.1, 0.5, &[], &[], 1.0).unwrap_err(), AnalyticsError::MixtureShape);
        assert_eq!(
            moe_value(0.1, 0.5, &[0.5, 0.4], &[0.1, 0.2], 1.0).unwrap_err(),
            AnalyticsError::UnnormalizedWeights(0.9)
        );
        assert_eq!(
            moe_value(0.1, 0.5, &[1.0], &[0.0], 1.0).unwrap_err(),
            AnalyticsError::BadRate(0.0)
        );
        assert_eq!(
            moe_value(0.1, 0.5, &[1.0], &[1.5], 1.0).unwrap_err(),
            AnalyticsError::BadRate(1.5)
        );
        assert_eq!(
            moe_value(0.1, 0.5, &[1.0], &[0.5], -1.0).unwrap_err(),
            AnalyticsError::BadStep(-1.0)
        );
    }

    #[test]
    fn mixture_reproduces_the_exact_curve() {
        // Building the mixture from the per-pair counts of a concrete
        // graph must reproduce the exact oracle: same decomposition, two
        // routes.
        let params = ModelParams::new(30, 2.0f64, 0.1).unwrap();
        let g = generate_er(&params, 11);
        let probs = pair_probabilities(&g).unwrap();
        let pairs = g.ordered_pair_count() as f64;
        let mut histogram: BTreeMap<u64, u64> = BTreeMap::new();
        for ((i, j), count) in probs.support() {
            if !g.has_edge(i, j) {
                *histogram.entry(count).or_insert(0) += 1;
            }
        }
        let grown: u64 = histogram.values().sum();
        assert!(grown > 0, "seed must give a graph with room to grow");
        let weights: Vec<f64> =
            histogram.values().map(|&n| n as f64 / grown as f64).collect();
        let rates: Vec<f64> = histogram.keys().map(|&k| k as f64 / pairs).collect();
        let p = g.edge_count() as f64 / pairs;
        let c = grown as f64 / pairs;

        let grid = [0u64, 1, 5, 20, 100, 1000, 50_000];
        let exact = exact_acc_curve::<f64>(&g, &grid).unwrap();
        for (i, &t) in grid.iter().enumerate() {
            let via_mixture = moe_value(p, c, &weights, &rates, t as f64).unwrap();
            assert!(
                (via_mixture - exact.mean_acc()[i]).abs() < 1e-12,
                "t={t}: mixture {via_mixture} vs exact {}",
                exact.mean_acc()[i]
            );
        }
    }

    #[test]
    fn approx_setup_is_validated() {
        let params = ModelParams::new(100, 3.0f64, 0.1).unwrap();
        assert_eq!(
            BranchingApprox::<f64>::estimate(&params, 0, 10, OffspringStat::SubtreeSize, 1)
                .unwrap_err(),
            AnalyticsError::BadApproxSetup
        );
        assert_eq!(
            BranchingApprox::<f64>::estimate(&params, 3, 0, OffspringStat::SubtreeSize, 1)
                .unwrap_err(),
            AnalyticsError::BadApproxSetup
        );
        let sub = ModelParams::new(100, 0.9f64, 0.1).unwrap();
        assert_eq!(
            BranchingApprox::<f64>::estimate(&sub, 3, 10, OffspringStat::SubtreeSize, 1)
                .unwrap_err(),
            AnalyticsError::SubcriticalLambda(0.9)
        );
    }

    #[test]
    fn approx_weights_and_pmfs_are_normalized() {
        let params = ModelParams::new(100, 3.0f64, 0.1).unwrap();
        let approx =
            BranchingApprox::estimate(&params, 5, 500, OffspringStat::SubtreeSize, 7).unwrap();
        assert_eq!(approx.depth(), 5);
        let total: f64 = approx.level_weights().iter().sum::<f64>() + approx.residual_weight();
        assert!((total - 1.0).abs() < 1e-12);
        assert!((approx.residual_weight() - 3.0f64.powi(-6)).abs() < 1e-12);
        for level in 0..=approx.depth() {
            let mass: f64 = approx.level_pmf(level).iter().map(|&(_, p)| p).sum();
            assert!((mass - 1.0).abs() < 1e-12, "level {level} mass {mass}");
            assert!(approx.level_pmf(level).iter().all(|&(k, _)| (1..=9900).contains(&k)));
        }
    }

    #[test]
    fn approx_is_seeded_and_hits_both_endpoints() {
        let params = ModelParams::new(100, 3.0f64, 0.1).unwrap();
        let a = BranchingApprox::estimate(&params, 5, 400, OffspringStat::SubtreeSize, 3).unwrap();
        let b = BranchingApprox::estimate(&params, 5, 400, OffspringStat::SubtreeSize, 3).unwrap();
        assert_eq!(a, b);
        let c = BranchingApprox::estimate(&params, 5, 400, OffspringStat::SubtreeSize, 4).unwrap();
        assert_ne!(a, c);

        assert!((a.value(0) - params.edge_probability()).abs() < 1e-9);
        let ceiling = params.edge_probability() + c_lambda(3.0);
        assert!((a.value(1_000_000_000_000) - ceiling).abs() < 1e-6);
    }

    #[test]
    fn approx_supports_the_direct_offspring_statistic() {
        let params = ModelParams::new(100, 3.0f64, 0.1).unwrap();
        let approx =
            BranchingApprox::estimate(&params, 4, 300, OffspringStat::DirectOffspring, 9).unwrap();
        assert!((approx.value(0) - params.edge_probability()).abs() < 1e-9);
        // Leaves record the unit atom, so the deepest level is exactly
        // the k = 1 point.
        assert_eq!(approx.level_pmf(0), &[(1u64, 1.0f64)]);
    }

    #[test]
    fn approx_curve_is_monotone_on_a_log_grid() {
        let params = ModelParams::new(100, 3.0f64, 0.1).unwrap();
        let grid = crate::process::log_step_grid(10_000_000, 20);
        let curve = branching_approx_curve::<f64>(&params, 5, 300, &grid, 5).unwrap();
        assert!(curve.mean_acc().windows(2).all(|w| w[0] <= w[1] + 1e-12));
        assert_eq!(curve.replicates(), 300);
    }

    #[test]
    fn depth_heuristic_tracks_log_lambda_v() {
        let params = ModelParams::new(100, 3.0f64, 0.1).unwrap();
        assert_eq!(default_approx_depth(&params), 5);
        let dense = ModelParams::new(100, 10.0f64, 0.1).unwrap();
        assert_eq!(default_approx_depth(&dense), 2);
    }

    #[test]
    fn deep_walks_stay_clamped_to_the_pair_count() {
        // V = 10 gives only 90 ordered pairs while depth-8 trees at
        // lambda = 4 reach thousands of nodes, so every recorded size
        // must be clamped and values must stay within the model ceiling.
        let params = ModelParams::new(10, 4.0f64, 0.1).unwrap();
        let approx =
            BranchingApprox::estimate(&params, 8, 200, OffspringStat::SubtreeSize, 2).unwrap();
        for level in 0..=approx.depth() {
            assert!(approx.level_pmf(level).iter().all(|&(k, _)| k <= 90));
        }
        let ceiling = params.edge_probability() + approx.c();
        for t in [0u64, 1, 10, 1000] {
            let y = approx.value(t);
            assert!(y.is_finite() && y >= 0.0 && y <= ceiling + 1e-12, "t={t}: {y}");
        }
    }

    #[test]
    fn approximation_works_at_reduced_precision() {
        let params = ModelParams::<f32>::new(50, 2.0f32, 0.1).unwrap();
        let approx =
            BranchingApprox::estimate(&params, 3, 50, OffspringStat::SubtreeSize, 1).unwrap();
        assert!((approx.value(0) - 0.04f32).abs() < 1e-5);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn band_lower_never_exceeds_upper(
            v in 10usize..200,
            lambda in 1.05f64..5.0,
            eps in 0.01f64..0.5,
            t in 0u64..10_000_000,
        ) {
            prop_assume!(lambda / (v as f64) <= 1.0);
            let params = ModelParams::new(v, lambda, eps).unwrap();
            match TheoremBounds::new(&params) {
                Ok(bounds) => {
                    let (lo, hi) = bounds.band(t);
                    prop_assert!(lo <= hi, "lo {lo} hi {hi}");
                    prop_assert!(lo >= 0.0);
                }
                Err(AnalyticsError::DegenerateBound) => {}
                Err(other) => prop_assert!(false, "unexpected error {other:?}"),
            }
        }

        #[test]
        fn mixture_curves_grow_and_flatten(
            p in 0.0f64..0.2,
            c in 0.0f64..0.8,
            raw_weights in proptest::collection::vec(0.01f64..1.0, 1..6),
            seed_rates in proptest::collection::vec(0.0001f64..1.0, 6),
        ) {
            let total: f64 = raw_weights.iter().sum();
            let weights: Vec<f64> = raw_weights.iter().map(|w| w / total).collect();
            let rates: Vec<f64> = seed_rates[..weights.len()].to_vec();
            let ts: Vec<f64> = (0..60).map(|i| i as f64 * 5.0).collect();
            let ys: Vec<f64> = ts
                .iter()
                .map(|&t| moe_value(p, c, &weights, &rates, t).unwrap())
                .collect();
            for w in ys.windows(2) {
                prop_assert!(w[1] >= w[0] - 1e-12);
            }
            for w in ys.windows(3) {
                prop_assert!(w[2] - w[1] <= w[1] - w[0] + 1e-12);
            }
        }
    }
}
