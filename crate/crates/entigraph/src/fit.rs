//! Least-squares fitting of mixture-of-exponentials scaling curves and
//! phase classification of accuracy curves.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::process::AccuracyCurve;
use crate::Real;

/// Errors from fitting and phase classification.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum FitError {
    #[error("term count must be at least 1")]
    NoTerms,
    #[error("need at least {needed} points to fit {terms} terms, got {got}")]
    TooFewPoints { needed: usize, got: usize, terms: usize },
    #[error("x values must be finite and distinct")]
    BadAbscissas,
    #[error("y values must be finite")]
    BadOrdinates,
    #[error("no start reduced the residual below the constant-model baseline")]
    NoConvergence,
    #[error("fit parameters must satisfy b >= 0 and 0 < r < 1")]
    InvalidParams,
    #[error("malformed fit JSON: {0}")]
    MalformedJson(String),
    #[error("phase classification needs at least {needed} points, got {got}")]
    TooFewPhasePoints { needed: usize, got: usize },
    #[error("phase classification needs positive steps spanning at least {needed_decades} decades")]
    NarrowStepSpan { needed_decades: u32 },
    #[error("phase boundaries are indeterminate: no clean linear prefix before the plateau")]
    IndeterminatePhases,
}

/// One decaying term `b * r^x` of a fitted mixture.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExpTerm<T = f64> {
    pub b: T,
    pub r: T,
}

/// Fitted mixture of decaying exponentials `y(x) = a - sum_i b_i r_i^x`.
///
/// Terms are kept sorted by rate, descending, so equal fits have equal
/// representations. The JSON form is
/// `{"a": .., "terms": [{"b": .., "r": ..}, ..], "sse": .., "iters": ..}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MoEFit<T = f64> {
    pub a: T,
    pub terms: Vec<ExpTerm<T>>,
    #[serde(rename = "sse")]
    pub residual_sse: T,
    #[serde(rename = "iters")]
    pub iterations: u32,
}

impl<T: Real> MoEFit<T> {
    /// Checks the term conventions: nonnegative weights, rates strictly
    /// inside (0, 1), everything finite.
    pub fn validate(&self) -> Result<(), FitError> {
        let ok = self.a.is_finite()
            && self.residual_sse.is_finite()
            && self.terms.iter().all(|t| {
                t.b.is_finite() && t.b >= T::zero() && t.r > T::zero() && t.r < T::one()
            });
        if ok {
            Ok(())
        } else {
            Err(FitError::InvalidParams)
        }
    }

    /// Value of the fitted curve at `x`.
    pub fn eval(&self, x: T) -> T {
        self.a - self.terms.iter().map(|t| t.b * t.r.powf(x)).sum::<T>()
    }

    /// Stable JSON rendering.
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("fit serialization cannot fail")
    }

    /// Parses and validates the JSON form.
    pub fn from_json(text: &str) -> Result<Self, FitError> {
        let fit: Self =
            serde_json::from_str(text).map_err(|e| FitError::MalformedJson(e.to_string()))?;
        fit.validate()?;
        Ok(fit)
    }
}

/// Free-function alias for [`MoEFit::eval`].
pub fn eval_moe_fit<T: Real>(fit: &MoEFit<T>, x: T) -> T {
    fit.eval(x)
}

/// Parameter vector layout for the optimizer: `a` raw, weights as
/// `b = exp(gamma)`, rates as `r = sigmoid(s)` with `s` clamped so `r`
/// stays strictly inside (0, 1) at working precision.
struct Reparam<T> {
    a: T,
    b: Vec<T>,
    r: Vec<T>,
}

fn s_clamp_limit<T: Real>() -> T {
    (T::one() / T::epsilon()).ln() * T::from_f64_lossy(0.9)
}

fn sigmoid<T: Real>(s: T) -> T {
    T::one() / (T::one() + (-s).exp())
}

fn unpack<T: Real>(theta: &[T], k: usize) -> Reparam<T> {
    let limit = s_clamp_limit::<T>();
    Reparam {
        a: theta[0],
        b: theta[1..1 + k].iter().map(|&g| g.exp()).collect(),
        r: theta[1 + k..].iter().map(|&s| sigmoid(s.max(-limit).min(limit))).collect(),
    }
}

fn sse_at<T: Real>(xs: &[T], ys: &[T], theta: &[T], k: usize) -> T {
    let p = unpack(theta, k);
    xs.iter()
        .zip(ys)
        .map(|(&x, &y)| {
            let model =
                p.a - p.b.iter().zip(&p.r).map(|(&b, &r)| b * r.powf(x)).sum::<T>();
            let e = model - y;
            e * e
        })
        .sum()
}

/// Solves `m delta = rhs` by Gaussian elimination with partial pivoting;
/// `None` on a (numerically) singular system.
fn solve_dense<T: Real>(mut m: Vec<Vec<T>>, mut rhs: Vec<T>) -> Option<Vec<T>> {
    let n = rhs.len();
    for col in 0..n {
        let pivot_row = (col..n)
            .max_by(|&i, &j| m[i][col].abs().partial_cmp(&m[j][col].abs()).expect("finite"))?;
        if m[pivot_row][col].abs() <= T::min_positive_value() {
            return None;
        }
        m.swap(col, pivot_row);
        rhs.swap(col, pivot_row);
        for row in col + 1..n {
            let factor = m[row][col] / m[col][col];
            if factor == T::zero() {
                continue;
            }
            let (pivot_rows, target_rows) = m.split_at_mut(row);
            let pivot = &pivot_rows[col][col..n];
            for (cell, &p) in target_rows[0][col..n].iter_mut().zip(pivot) {
                *cell = *cell - factor * p;
            }
            rhs[row] = rhs[row] - factor * rhs[col];
        }
    }
    let mut solution = vec![T::zero(); n];
    for row in (0..n).rev() {
        let mut sum = rhs[row];
        for c in row + 1..n {
            sum = sum - m[row][c] * solution[c];
        }
        solution[row] = sum / m[row][row];
        if !solution[row].is_finite() {
            return None;
        }
    }
    Some(solution)
}

/// Result of one Levenberg-Marquardt descent: the best parameters found,
/// their SSE, and the iterations consumed.
struct Descent<T> {
    theta: Vec<T>,
    sse: T,
    iterations: u32,
}

fn lm_descent<T: Real>(
    xs: &[T],
    ys: &[T],
    k: usize,
    mut theta: Vec<T>,
    max_iter: u32,
    tol: T,
) -> Descent<T> {
    let n = theta.len();
    let limit = s_clamp_limit::<T>();
    let mut sse = sse_at(xs, ys, &theta, k);
    let mut mu = T::from_f64_lossy(1e-3);
    let mu_floor = T::from_f64_lossy(1e-12).max(T::epsilon() * T::epsilon());
    let mut iterations = 0u32;

    'outer: while iterations < max_iter {
        iterations += 1;
        let p = unpack(&theta, k);

        // Residuals e = model - y and the Jacobian of the model.
        let mut jtj = vec![vec![T::zero(); n]; n];
        let mut jte = vec![T::zero(); n];
        for (&x, &y) in xs.iter().zip(ys) {
            let mut row = vec![T::zero(); n];
            row[0] = T::one();
            let mut model = p.a;
            for i in 0..k {
                let pow = p.r[i].powf(x);
                model = model - p.b[i] * pow;
                row[1 + i] = -p.b[i] * pow;
                row[1 + k + i] = -p.b[i] * x * pow * (T::one() - p.r[i]);
            }
            let e = model - y;
            for i in 0..n {
                jte[i] = jte[i] + row[i] * e;
                for j in i..n {
                    jtj[i][j] = jtj[i][j] + row[i] * row[j];
                }
            }
        }
        for i in 1..n {
            let (above, rest) = jtj.split_at_mut(i);
            for (j, upper_row) in above.iter().enumerate() {
                rest[0][j] = upper_row[i];
            }
        }

        let mut accepted = false;
        for _ in 0..30 {
            let mut damped = jtj.clone();
            for (i, row) in damped.iter_mut().enumerate() {
                let scale = jtj[i][i].max(T::from_f64_lossy(1e-12));
                row[i] = row[i] + mu * scale;
            }
            let rhs: Vec<T> = jte.iter().map(|&g| -g).collect();
            if let Some(step) = solve_dense(damped, rhs) {
                let mut trial = theta.clone();
                for i in 0..n {
                    trial[i] = trial[i] + step[i];
                }
                for s in trial[1 + k..].iter_mut() {
                    *s = s.max(-limit).min(limit);
                }
                let trial_sse = sse_at(xs, ys, &trial, k);
                if trial_sse < sse {
                    let improvement = sse - trial_sse;
                    theta = trial;
                    sse = trial_sse;
                    mu = (mu * T::from_f64_lossy(0.3)).max(mu_floor);
                    accepted = true;
                    if improvement <= tol * (sse + T::from_f64_lossy(1e-30)) {
                        break 'outer;
                    }
                    break;
                }
            }
            mu = mu * T::from_f64_lossy(10.0);
        }
        if !accepted {
            break;
        }
    }
    Descent { theta, sse, iterations }
}

fn start_from_rates<T: Real>(xs: &[T], ys: &[T], rates: &[T], k: usize) -> Vec<T> {
    let y_max = ys.iter().copied().fold(T::neg_infinity(), T::max);
    let y_min = ys.iter().copied().fold(T::infinity(), T::min);
    let a0 = y_max
        + (y_max - y_min) * T::from_f64_lossy(0.05)
        + T::from_f64_lossy(1e-9) * (T::one() + y_max.abs());
    let first = xs
        .iter()
        .zip(ys)
        .min_by(|l, r| l.0.partial_cmp(r.0).expect("finite"))
        .map(|(_, &y)| y)
        .expect("points are nonempty");
    let deficit = (a0 - first).max(T::from_f64_lossy(1e-6) * (T::one() + a0.abs()));
    let b0 = deficit / T::from_count(k as u64);
    let mut theta = vec![a0];
    theta.extend(std::iter::repeat_n(b0.ln(), k));
    let limit = s_clamp_limit::<T>();
    theta.extend(rates.iter().map(|&r| {
        let r = r
            .max(T::from_f64_lossy(1e-9))
            .min(T::one() - T::from_f64_lossy(1e-9).max(T::epsilon()));
        (r / (T::one() - r)).ln().max(-limit).min(limit)
    }));
    theta
}

/// Fits `y(x) = a - sum b_i r_i^x` by damped least squares from a spread
/// of deterministic and seeded starts, keeping the best basin.
///
/// Needs at least `2 k + 1` points with distinct finite `x`. Returns
/// [`FitError::NoConvergence`] when no start ends with a residual below
/// the constant-model baseline `sum (y - mean(y))^2`; data already fit to
/// machine precision (a constant series, say) passes the gate with its
/// near-zero residual. Among starts whose residuals are all at machine
/// precision the one with the smallest total weight wins, so constant
/// data resolves to vanishing `b` rather than an arbitrary `a - b` split.
/// `iterations` on the result counts LM steps summed over all starts.
pub fn fit_moe<T: Real>(
    points: &[(T, T)],
    k_terms: usize,
    seed: u64,
    max_iter: u32,
    tol: T,
) -> Result<MoEFit<T>, FitError> {
    if k_terms == 0 {
        return Err(FitError::NoTerms);
    }
    let needed = 2 * k_terms + 1;
    if points.len() < needed {
        return Err(FitError::TooFewPoints { needed, got: points.len(), terms: k_terms });
    }
    let xs: Vec<T> = points.iter().map(|&(x, _)| x).collect();
    let ys: Vec<T> = points.iter().map(|&(_, y)| y).collect();
    if !xs.iter().all(|x| x.is_finite()) {
        return Err(FitError::BadAbscissas);
    }
    let mut sorted = xs.clone();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
    if sorted.windows(2).any(|w| w[0] == w[1]) {
        return Err(FitError::BadAbscissas);
    }
    if !ys.iter().all(|y| y.is_finite()) {
        return Err(FitError::BadOrdinates);
    }

    let x_span = *sorted.last().expect("nonempty") - sorted[0];
    let k = k_terms;

    let mut rate_sets: Vec<Vec<T>> = Vec::new();
    let anchors = [0.999, 0.9, 0.05];
    rate_sets.push((0..k).map(|i| T::from_f64_lossy(anchors[i % anchors.len()])).collect());

    let span = x_span.to_f64().unwrap_or(1.0).max(0.01);
    rate_sets.push(
        (0..k)
            .map(|i| {
                let frac = if k == 1 { 0.5 } else { i as f64 / (k - 1) as f64 };
                let tau = (span * 0.03) * (100.0f64).powf(frac);
                T::from_f64_lossy((-1.0 / tau).exp())
            })
            .collect(),
    );

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..8 {
        rate_sets
            .push((0..k).map(|_| sigmoid(T::from_f64_lossy(rng.random_range(-4.0..9.0)))).collect());
    }

    let mut starts: Vec<Vec<T>> =
        rate_sets.iter().map(|rates| start_from_rates(&xs, &ys, rates, k)).collect();
    // One start is the constant model itself: intercept at the mean with
    // weights small enough that `a - b r^x` rounds to `a`, making it an
    // exact stationary point whenever the data is flat.
    let y_mean = ys.iter().copied().sum::<T>() / T::from_count(ys.len() as u64);
    let mut flat = start_from_rates(&xs, &ys, &rate_sets[0], k);
    flat[0] = y_mean;
    let tiny_ln = T::min_positive_value().sqrt().ln();
    for g in flat[1..1 + k].iter_mut() {
        *g = tiny_ln;
    }
    starts.push(flat);

    let baseline: T = ys.iter().map(|&y| (y - y_mean) * (y - y_mean)).sum();
    let y_scale = ys.iter().fold(T::zero(), |m, y| m.max(y.abs()));
    let machine_floor = T::from_count(ys.len() as u64)
        * (T::epsilon() * (T::one() + y_scale)).powi(2)
        * T::from_f64_lossy(64.0);
    let total_weight = |theta: &[T]| theta[1..1 + k].iter().map(|&g| g.exp()).sum::<T>();

    let mut best: Option<Descent<T>> = None;
    let mut total_iterations = 0u32;
    for theta0 in starts {
        let descent = lm_descent(&xs, &ys, k, theta0, max_iter, tol);
        total_iterations = total_iterations.saturating_add(descent.iterations);
        let improves = match &best {
            None => true,
            Some(b) if descent.sse <= machine_floor && b.sse <= machine_floor => {
                total_weight(&descent.theta) < total_weight(&b.theta)
            }
            Some(b) => descent.sse < b.sse,
        };
        if improves {
            best = Some(descent);
        }
    }
    let Descent { theta, sse: best_sse, .. } = best.expect("at least one start ran");
    if best_sse > machine_floor && best_sse >= baseline * T::from_f64_lossy(1.0 - 1e-9) {
        return Err(FitError::NoConvergence);
    }

    let p = unpack(&theta, k);
    let mut terms: Vec<ExpTerm<T>> =
        p.b.into_iter().zip(p.r).map(|(b, r)| ExpTerm { b, r }).collect();
    terms.sort_by(|l, r| r.r.partial_cmp(&l.r).expect("rates are finite"));
    let fit = MoEFit { a: p.a, terms, residual_sse: best_sse, iterations: total_iterations };
    fit.validate()?;
    Ok(fit)
}

/// Minimum points accepted by [`classify_phases`].
pub const MIN_PHASE_POINTS: usize = 10;
/// Minimum decades the positive steps must span.
pub const MIN_PHASE_DECADES: u32 = 3;
/// Prefix linear fits must keep at least this coefficient of
/// determination to count as the initial linear phase.
pub const PHASE_R2_THRESHOLD: f64 = 0.98;
/// A point within this relative distance of the final value counts as
/// saturated.
pub const PHASE_PLATEAU_FRACTION: f64 = 0.02;

/// Boundary steps of the three growth phases: the linear regime ends at
/// `t1`, the saturated plateau starts at `t2`, and `0 < t1 < t2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseBoundaries<T = f64> {
    pub t1: T,
    pub t2: T,
}

/// Locates the phase boundaries of an accuracy curve on a log step grid.
///
/// `t1` is the last grid point whose prefix (three points or more) still
/// admits a linear fit with `R^2 >=` [`PHASE_R2_THRESHOLD`]; `t2` is the
/// first grid point within [`PHASE_PLATEAU_FRACTION`] of the final value.
/// Curves without a clean separation (`t1 >= t2`), such as constant or
/// globally linear ones, are reported as indeterminate rather than given
/// arbitrary boundaries.
pub fn classify_phases<T: Real>(curve: &AccuracyCurve<T>) -> Result<PhaseBoundaries<T>, FitError> {
    let n = curve.len();
    if n < MIN_PHASE_POINTS {
        return Err(FitError::TooFewPhasePoints { needed: MIN_PHASE_POINTS, got: n });
    }
    let steps = curve.steps();
    let first_positive = steps.iter().copied().find(|&t| t > 0).expect("grid is increasing");
    let last = *steps.last().expect("grid is nonempty");
    if (last as f64) < (first_positive as f64) * 10f64.powi(MIN_PHASE_DECADES as i32) {
        return Err(FitError::NarrowStepSpan { needed_decades: MIN_PHASE_DECADES });
    }

    let ts: Vec<f64> = steps.iter().map(|&t| t as f64).collect();
    let ys: Vec<f64> =
        curve.mean_acc().iter().map(|&y| y.to_f64().expect("accuracy fits in f64")).collect();

    let mut t1_index = None;
    for i in 2..n {
        if prefix_r2(&ts[..=i], &ys[..=i]) >= PHASE_R2_THRESHOLD {
            t1_index = Some(i);
        }
    }
    let y_last = ys[n - 1];
    let t2_index = (0..n)
        .find(|&i| (ys[i] - y_last).abs() <= PHASE_PLATEAU_FRACTION * y_last.abs())
        .expect("the final point always qualifies");

    match t1_index {
        Some(i1) if i1 < t2_index => Ok(PhaseBoundaries {
            t1: T::from_count(steps[i1]),
            t2: T::from_count(steps[t2_index]),
        }),
        _ => Err(FitError::IndeterminatePhases),
    }
}

/// Coefficient of determination of the least-squares line through the
/// points; a perfectly flat prefix counts as 1.
fn prefix_r2(ts: &[f64], ys: &[f64]) -> f64 {
    let n = ts.len() as f64;
    let t_mean = ts.iter().sum::<f64>() / n;
    let y_mean = ys.iter().sum::<f64>() / n;
    let mut stt = 0.0;
    let mut sty = 0.0;
    let mut syy = 0.0;
    for (&t, &y) in ts.iter().zip(ys) {
        stt += (t - t_mean) * (t - t_mean);
        sty += (t - t_mean) * (y - y_mean);
        syy += (y - y_mean) * (y - y_mean);
    }
    if syy == 0.0 {
        return 1.0;
    }
    let ss_res = (syy - sty * sty / stt).max(0.0);
    1.0 - ss_res / syy
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analytics::moe_value;
    use crate::process::log_step_grid;
    use proptest::prelude::*;

    fn paper_style_fit() -> MoEFit<f64> {
        MoEFit {
            a: 64.5456,
            terms: vec![
                ExpTerm { b: 13.8352, r: 0.9989 },
                ExpTerm { b: 8.4705, r: 0.8961 },
                ExpTerm { b: 3.932, r: 0.0546 },
            ],
            residual_sse: 0.0,
            iterations: 0,
        }
    }

    #[test]
    fn eval_matches_hand_computation() {
        let fit: MoEFit<f64> = MoEFit {
            a: 1.0,
            terms: vec![ExpTerm { b: 1.0, r: 0.5 }],
            residual_sse: 0.0,
            iterations: 0,
        };
        assert_eq!(fit.eval(0.0), 0.0);
        assert_eq!(fit.eval(1.0), 0.5);
        assert!((fit.eval(1e9) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn eval_of_reference_coefficients_at_zero() {
        let fit = paper_style_fit();
        assert!((eval_moe_fit(&fit, 0.0) - 38.3079).abs() < 1e-9);
    }

    #[test]
    fn json_round_trip_keeps_the_schema() {
        let fit = MoEFit {
            a: 0.5,
            terms: vec![ExpTerm { b: 0.25, r: 0.75 }],
            residual_sse: 0.125,
            iterations: 12,
        };
        let text = fit.to_json();
        assert_eq!(text, r#"{"a":0.5,"terms":[{"b":0.25,"r":0.75}],"sse":0.125,"iters":12}"#);
        let back = MoEFit::<f64>::from_json(&text).unwrap();
        assert_eq!(back, fit);
    }

    #[test]
    fn json_parsing_validates_terms() {
        let bad = r#"{"a":0.5,"terms":[{"b":0.25,"r":1.5}],"sse":0.0,"iters":1}"#;
        assert_eq!(MoEFit::<f64>::from_json(bad).unwrap_err(), FitError::InvalidParams);
        assert!(matches!(
            MoEFit::<f64>::from_json("not json"),
            Err(FitError::MalformedJson(_))
        ));
    }

    #[test]
    fn input_validation_catches_shape_problems() {
        let points: Vec<(f64, f64)> = (0..4).map(|i| (i as f64, i as f64)).collect();
        assert_eq!(fit_moe(&points, 0, 1, 100, 1e-12).unwrap_err(), FitError::NoTerms);
        assert_eq!(
            fit_moe(&points, 2, 1, 100, 1e-12).unwrap_err(),
            FitError::TooFewPoints { needed: 5, got: 4, terms: 2 }
        );
        let dup = [(0.0, 1.0), (0.0, 2.0), (1.0, 3.0), (2.0, 4.0)];
        assert_eq!(fit_moe(&dup, 1, 1, 100, 1e-12).unwrap_err(), FitError::BadAbscissas);
        let nan = [(0.0, 1.0), (1.0, f64::NAN), (2.0, 3.0), (3.0, 4.0)];
        assert_eq!(fit_moe(&nan, 1, 1, 100, 1e-12).unwrap_err(), FitError::BadOrdinates);
    }

    #[test]
    fn planted_two_term_mixture_is_recovered() {
        let truth = MoEFit {
            a: 0.8,
            terms: vec![ExpTerm { b: 0.3, r: 0.99 }, ExpTerm { b: 0.2, r: 0.7 }],
            residual_sse: 0.0,
            iterations: 0,
        };
        let points: Vec<(f64, f64)> =
            (0..=40).map(|i| (i as f64 * 10.0, truth.eval(i as f64 * 10.0))).collect();
        let fit = fit_moe(&points, 2, 0, 400, 1e-14).unwrap();
        assert!((fit.a - truth.a).abs() / truth.a < 1e-6, "a = {}", fit.a);
        for (got, want) in fit.terms.iter().zip(&truth.terms) {
            assert!((got.b - want.b).abs() / want.b < 1e-5, "b = {}", got.b);
            assert!((got.r - want.r).abs() / want.r < 1e-6, "r = {}", got.r);
        }
        assert!(fit.residual_sse < 1e-12);
    }

    #[test]
    fn constant_data_fits_with_vanishing_weights() {
        let points: Vec<(f64, f64)> = (0..=20).map(|i| (i as f64, 5.0)).collect();
        let fit = fit_moe(&points, 2, 0, 200, 1e-14).unwrap();
        assert!((fit.a - 5.0).abs() < 1e-7, "a = {}", fit.a);
        for term in &fit.terms {
            assert!(term.b.abs() < 1e-7, "b = {}", term.b);
        }
        assert!(fit.residual_sse < 1e-14);
    }

    #[test]
    fn refitting_a_fit_is_idempotent() {
        let first = MoEFit {
            a: 0.9,
            terms: vec![ExpTerm { b: 0.5, r: 0.95 }, ExpTerm { b: 0.3, r: 0.4 }],
            residual_sse: 0.0,
            iterations: 0,
        };
        let points: Vec<(f64, f64)> =
            (0..=30).map(|i| (i as f64 * 4.0, first.eval(i as f64 * 4.0))).collect();
        let again = fit_moe(&points, 2, 7, 400, 1e-14).unwrap();
        assert!((again.a - first.a).abs() < 1e-6);
        for (got, want) in again.terms.iter().zip(&first.terms) {
            assert!((got.b - want.b).abs() < 1e-6);
            assert!((got.r - want.r).abs() < 1e-6);
        }
    }

    #[test]
    fn decreasing_data_reports_no_convergence() {
        // Every admissible parameter choice is nondecreasing in x, so on
        // strictly decreasing data nothing beats the constant baseline
        // and the failure must surface as an error.
        let points: Vec<(f64, f64)> =
            (0..=20).map(|i| (i as f64, 10.0 - 0.5 * i as f64)).collect();
        assert_eq!(fit_moe(&points, 2, 1, 200, 1e-12).unwrap_err(), FitError::NoConvergence);
    }

    #[test]
    fn single_term_fit_works_in_reduced_precision() {
        let points: Vec<(f32, f32)> = (0..=12)
            .map(|i| {
                let x = i as f32;
                (x, 2.0 - 1.5 * 0.8f32.powf(x))
            })
            .collect();
        let fit = fit_moe(&points, 1, 3, 200, 1e-6f32).unwrap();
        assert!((fit.a - 2.0).abs() < 1e-2);
        assert!((fit.terms[0].r - 0.8).abs() < 1e-2);
    }

    #[test]
    fn phase_boundaries_on_a_sigmoid_like_mixture() {
        let grid = log_step_grid(1_000_000, 25);
        let weights = [0.6, 0.4];
        let rates = [1e-4, 1e-2];
        let mean: Vec<f64> = grid
            .iter()
            .map(|&t| moe_value(0.03, 0.8, &weights, &rates, t as f64).unwrap())
            .collect();
        let stderr = vec![0.0; grid.len()];
        let curve = AccuracyCurve::new(grid.clone(), mean, stderr, 1).unwrap();
        let phases = classify_phases(&curve).unwrap();
        assert!(phases.t1 > 0.0);
        assert!(phases.t1 < phases.t2);
        assert!(phases.t2 <= 1_000_000.0);
    }

    #[test]
    fn constant_curve_has_no_phases() {
        let grid = log_step_grid(1_000_000, 15);
        let curve = AccuracyCurve::new(
            grid.clone(),
            vec![0.25; grid.len()],
            vec![0.0; grid.len()],
            1,
        )
        .unwrap();
        assert_eq!(classify_phases(&curve).unwrap_err(), FitError::IndeterminatePhases);
    }

    #[test]
    fn globally_linear_curve_has_no_phases() {
        let grid = log_step_grid(1_000_000, 20);
        let t_max = *grid.last().unwrap() as f64;
        let mean: Vec<f64> = grid.iter().map(|&t| t as f64 / t_max).collect();
        let curve = AccuracyCurve::new(grid.clone(), mean, vec![0.0; grid.len()], 1).unwrap();
        assert_eq!(classify_phases(&curve).unwrap_err(), FitError::IndeterminatePhases);
    }

    #[test]
    fn phase_classification_validates_the_grid() {
        let short = AccuracyCurve::new(vec![0, 1, 10], vec![0.1, 0.2, 0.3], vec![0.0; 3], 1)
            .unwrap();
        assert_eq!(
            classify_phases(&short).unwrap_err(),
            FitError::TooFewPhasePoints { needed: MIN_PHASE_POINTS, got: 3 }
        );
        let narrow_grid: Vec<u64> = (1..=12).collect();
        let narrow = AccuracyCurve::new(
            narrow_grid.clone(),
            narrow_grid.iter().map(|&t| t as f64 / 100.0).collect(),
            vec![0.0; narrow_grid.len()],
            1,
        )
        .unwrap();
        assert_eq!(
            classify_phases(&narrow).unwrap_err(),
            FitError::NarrowStepSpan { needed_decades: MIN_PHASE_DECADES }
        );
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(128))]

        #[test]
        fn valid_fits_are_monotone_and_concave(
            a in 0.0f64..100.0,
            bs in proptest::collection::vec(0.0f64..10.0, 1..4),
            rs in proptest::collection::vec(0.01f64..0.999, 4),
        ) {
            let terms: Vec<ExpTerm<f64>> = bs
                .iter()
                .zip(&rs)
                .map(|(&b, &r)| ExpTerm { b, r })
                .collect();
            let fit = MoEFit { a, terms, residual_sse: 0.0, iterations: 0 };
            fit.validate().unwrap();
            let ys: Vec<f64> = (0..50).map(|i| fit.eval(i as f64)).collect();
            for w in ys.windows(2) {
                prop_assert!(w[1] >= w[0] - 1e-9);
            }
            for w in ys.windows(3) {
                prop_assert!(w[2] - w[1] <= w[1] - w[0] + 1e-9);
            }
        }
    }
}
