//! Idealized branching-process recursions for parallel peeling.
//!
//! The neighbourhood of a vertex is modelled as a tree in which every vertex
//! has Poisson(rc) child edges, each carrying `r - 1` child vertices. A
//! non-root vertex survives round `i` iff at least `k - 1` of its child edges
//! still have all their children alive; the root needs `k`. With
//! `beta_i = rho_{i-1}^(r-1) * r * c`:
//!
//! ```text
//! rho_i    = P(Poisson(beta_i) >= k - 1)
//! lambda_i = P(Poisson(beta_i) >= k)
//! ```
//!
//! `lambda_t` predicts the fraction of vertices left after `t` rounds. The
//! subtable variant replaces the product `rho_{i-1}^(r-1)` by the survival
//! probabilities of the other subtables, taking the current round's value for
//! subtables already processed in this round.

use crate::error::{Error, Result};

/// `P(Poisson(beta) >= at_least)`.
///
/// When the tail is the smaller side (`at_least > beta`) it is summed
/// directly so that values far below machine epsilon keep full relative
/// precision; otherwise the complement of the lower sum is used.
pub fn poisson_tail(beta: f64, at_least: u32) -> Result<f64> {
    if !(beta >= 0.0) {
        return Err(Error::NegativeMean(beta));
    }
    if at_least == 0 {
        return Ok(1.0);
    }
    if beta == 0.0 {
        return Ok(0.0);
    }
    if (at_least as f64) > beta {
        Ok(upper_sum(beta, at_least).min(1.0))
    } else {
        Ok((1.0 - lower_sum(beta, at_least)).clamp(0.0, 1.0))
    }
}

/// `P(Poisson(beta) < below)`, summed term by term.
pub fn poisson_cdf_below(beta: f64, below: u32) -> Result<f64> {
    if !(beta >= 0.0) {
        return Err(Error::NegativeMean(beta));
    }
    Ok(lower_sum(beta, below).min(1.0))
}

fn lower_sum(beta: f64, below: u32) -> f64 {
    let mut term = (-beta).exp();
    let mut sum = 0.0;
    for j in 0..below {
        if j > 0 {
            term *= beta / j as f64;
        }
        sum += term;
    }
    sum
}

fn upper_sum(beta: f64, from: u32) -> f64 {
    // First term e^-beta beta^j / j! in log space; ln(j!) summed exactly.
    let ln_fact: f64 = (2..=from).map(|i| (i as f64).ln()).sum();
    let mut term = (-beta + from as f64 * beta.ln() - ln_fact).exp();
    let mut sum = 0.0;
    let mut j = from;
    while term > sum * f64::EPSILON * 0.25 && term > 0.0 {
        sum += term;
        j += 1;
        term *= beta / j as f64;
    }
    sum
}

fn check_params(c: f64, r: usize, k: u32) -> Result<()> {
    if !(c > 0.0) || r < 2 || k < 2 {
        return Err(Error::InvalidParameter(format!(
            "recursion needs c > 0, r >= 2, k >= 2 (got c = {c}, r = {r}, k = {k})"
        )));
    }
    Ok(())
}

/// The map `beta -> P(Poisson(beta) >= k-1)^(r-1) * r * c`.
pub fn beta_map(beta: f64, c: f64, r: usize, k: u32) -> f64 {
    let rho = poisson_tail(beta.max(0.0), k - 1).unwrap_or(0.0);
    rho.powi(r as i32 - 1) * r as f64 * c
}

/// Output of [`iterate_plain`].
#[derive(Debug, Clone, PartialEq)]
pub struct RecursionTrace {
    pub c: f64,
    pub r: usize,
    pub k: u32,
    /// `beta_1 ..= beta_t`; `beta[0]` is `beta_1 = rc`.
    pub beta: Vec<f64>,
    /// `rho_0 ..= rho_t` with `rho_0 = 1`.
    pub rho: Vec<f64>,
    /// `lambda_0 ..= lambda_t` with `lambda_0 = 1` (nothing peeled yet).
    pub lambda: Vec<f64>,
}

impl RecursionTrace {
    /// Number of rounds evaluated.
    pub fn rounds(&self) -> usize {
        self.lambda.len() - 1
    }

    pub fn beta_at(&self, round: usize) -> f64 {
        self.beta[round - 1]
    }

    /// `round(lambda_t * n)`, the predicted survivor count.
    pub fn predicted_count(&self, round: usize, n: usize) -> f64 {
        (self.lambda[round] * n as f64).round()
    }
}

/// Iterates the plain recursion for up to `t_max` rounds. Stops early once
/// `lambda_i < stop_eps` or `|lambda_i - lambda_{i-1}| < stop_eps`.
pub fn iterate_plain(c: f64, r: usize, k: u32, t_max: usize, stop_eps: f64) -> Result<RecursionTrace> {
    check_params(c, r, k)?;
    let mut trace = RecursionTrace {
        c,
        r,
        k,
        beta: Vec::new(),
        rho: vec![1.0],
        lambda: vec![1.0],
    };
    for _ in 0..t_max {
        let prev_rho = *trace.rho.last().unwrap();
        let beta = prev_rho.powi(r as i32 - 1) * r as f64 * c;
        let rho = poisson_tail(beta, k - 1)?;
        let lambda = poisson_tail(beta, k)?;
        let prev_lambda = *trace.lambda.last().unwrap();
        trace.beta.push(beta);
        trace.rho.push(rho);
        trace.lambda.push(lambda);
        if lambda < stop_eps || (lambda - prev_lambda).abs() < stop_eps {
            break;
        }
    }
    Ok(trace)
}

/// Output of [`iterate_subtable`]. Rows are rounds `i >= 1`, columns are
/// subtables; row 0 of `rho` and `lambda` is the all-ones initial state.
#[derive(Debug, Clone, PartialEq)]
pub struct SubtableTrace {
    pub c: f64,
    pub r: usize,
    pub k: u32,
    pub rho: Vec<Vec<f64>>,
    pub lambda: Vec<Vec<f64>>,
    /// `beta[i][j]` for `i >= 1`; row 0 is unused and zero.
    pub beta: Vec<Vec<f64>>,
    /// Overall surviving fraction after subround `(i, j)`; row 0 is all ones.
    pub lambda_prime: Vec<Vec<f64>>,
}

impl SubtableTrace {
    pub fn rounds(&self) -> usize {
        self.lambda.len() - 1
    }

    /// `lambda'` in flattened subround order, `m = (i - 1) r + j` for
    /// 1-based `j`. Index 0 holds the initial value 1.
    pub fn flattened_lambda_prime(&self) -> Vec<f64> {
        std::iter::once(1.0)
            .chain(self.lambda_prime[1..].iter().flatten().copied())
            .collect()
    }
}

/// Iterates the subtable recursion for up to `round_max` rounds, stopping at
/// the end of the first round in which some subround's overall survival
/// `lambda'` drops below `stop_eps` or changes by less than `stop_eps`.
pub fn iterate_subtable(
    c: f64,
    r: usize,
    k: u32,
    round_max: usize,
    stop_eps: f64,
) -> Result<SubtableTrace> {
    check_params(c, r, k)?;
    let mut trace = SubtableTrace {
        c,
        r,
        k,
        rho: vec![vec![1.0; r]],
        lambda: vec![vec![1.0; r]],
        beta: vec![vec![0.0; r]],
        lambda_prime: vec![vec![1.0; r]],
    };
    let mut prev_lp = 1.0;
    for _ in 0..round_max {
        let prev_rho = trace.rho.last().unwrap().clone();
        let prev_lambda = trace.lambda.last().unwrap().clone();
        let mut rho = prev_rho.clone();
        let mut lambda = prev_lambda.clone();
        let mut beta = vec![0.0; r];
        let mut lambda_prime = vec![0.0; r];
        let mut stop = false;
        for j in 0..r {
            // rho[h] already holds this round's value for h < j.
            let others: f64 = (0..r).filter(|&h| h != j).map(|h| rho[h]).product();
            beta[j] = others * r as f64 * c;
            rho[j] = poisson_tail(beta[j], k - 1)?;
            lambda[j] = poisson_tail(beta[j], k)?;
            lambda_prime[j] = lambda.iter().sum::<f64>() / r as f64;
            if lambda_prime[j] < stop_eps || (lambda_prime[j] - prev_lp).abs() < stop_eps {
                stop = true;
            }
            prev_lp = lambda_prime[j];
        }
        trace.rho.push(rho);
        trace.lambda.push(lambda);
        trace.beta.push(beta);
        trace.lambda_prime.push(lambda_prime);
        if stop {
            break;
        }
    }
    Ok(trace)
}

/// `min_{x > 0} x / (r (1 - e^-x)^(r-1))`, the 2-core threshold, by
/// golden-section search (the objective is unimodal for `r >= 3`).
pub fn threshold_closed_form(r: usize) -> Result<f64> {
    if r < 3 {
        return Err(Error::InvalidParameter(format!(
            "closed-form threshold needs r >= 3, got {r}"
        )));
    }
    let f = |x: f64| x / (r as f64 * (-(-x).exp_m1()).powi(r as i32 - 1));
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (1e-6, 50.0);
    let mut x1 = b - inv_phi * (b - a);
    let mut x2 = a + inv_phi * (b - a);
    let (mut f1, mut f2) = (f(x1), f(x2));
    while b - a > 1e-12 {
        if f1 < f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - inv_phi * (b - a);
            f1 = f(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + inv_phi * (b - a);
            f2 = f(x2);
        }
    }
    Ok(f((a + b) / 2.0))
}

/// Convergence criterion for the bisection threshold.
const CONVERGED_LAMBDA: f64 = 1e-12;
const CONVERGENCE_ITERATIONS: usize = 100_000;

/// Whether the plain recursion drives `lambda` below `1e-12` within the
/// iteration cap.
pub fn peels_to_empty(c: f64, r: usize, k: u32) -> bool {
    let mut rho = 1.0f64;
    for _ in 0..CONVERGENCE_ITERATIONS {
        let beta = rho.powi(r as i32 - 1) * r as f64 * c;
        if poisson_tail(beta, k).unwrap_or(1.0) < CONVERGED_LAMBDA {
            return true;
        }
        rho = poisson_tail(beta, k - 1).unwrap_or(1.0);
    }
    false
}

/// Threshold density by bisection on recursion convergence.
pub fn threshold_bisection(r: usize, k: u32, tol: f64) -> Result<f64> {
    if r < 3 || k < 2 || !(tol > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "threshold needs r >= 3, k >= 2, tol > 0 (got r = {r}, k = {k}, tol = {tol})"
        )));
    }
    let mut lo = 1e-3;
    let mut hi = 1.0;
    while peels_to_empty(hi, r, k) {
        hi *= 2.0;
        if hi > 1e6 {
            return Err(Error::Bracket { lo, hi });
        }
    }
    if !peels_to_empty(lo, r, k) {
        return Err(Error::Bracket { lo, hi });
    }
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if peels_to_empty(mid, r, k) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Threshold density `c*_{k,r}`: the closed form for `k = 2`, bisection
/// otherwise.
pub fn threshold(r: usize, k: u32, tol: f64) -> Result<f64> {
    if !(tol > 0.0) {
        return Err(Error::InvalidParameter(format!("tol must be positive, got {tol}")));
    }
    if k == 2 {
        threshold_closed_form(r)
    } else {
        threshold_bisection(r, k, tol)
    }
}

/// Stable positive fixed point of the beta map above threshold.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FixedPoint {
    pub beta: f64,
    /// Contraction factor: derivative of the beta map at `beta`.
    pub a: f64,
    /// Limiting survivor fraction `P(Poisson(beta) >= k)`.
    pub lambda: f64,
}

const FIXED_POINT_TOL: f64 = 1e-12;
const FIXED_POINT_ITERATIONS: usize = 1_000_000;

/// Finds the fixed point by direct iteration from `beta_1 = rc` and
/// evaluates the contraction factor
/// `a = (r-1) beta e^-beta S_{k-2} (1 - S_{k-3}/S_{k-2}) / (1 - e^-beta S_{k-2})`
/// with `S_j = sum_{h <= j} beta^h / h!`.
pub fn contraction_factor(c: f64, r: usize, k: u32) -> Result<FixedPoint> {
    check_params(c, r, k)?;
    let mut beta = r as f64 * c;
    let mut converged = false;
    for _ in 0..FIXED_POINT_ITERATIONS {
        let next = beta_map(beta, c, r, k);
        let delta = (next - beta).abs();
        beta = next;
        if beta < 1e-9 {
            break;
        }
        if delta < FIXED_POINT_TOL {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::NoFixedPoint { c, r, k });
    }
    let partial = |upto: i64| -> f64 {
        if upto < 0 {
            return 0.0;
        }
        let mut term = 1.0;
        let mut sum = 1.0;
        for h in 1..=upto {
            term *= beta / h as f64;
            sum += term;
        }
        sum
    };
    let s_k2 = partial(k as i64 - 2);
    let s_k3 = partial(k as i64 - 3);
    let e = (-beta).exp();
    let a = (r as f64 - 1.0) * beta * e * s_k2 * (1.0 - s_k3 / s_k2) / (1.0 - e * s_k2);
    if !(a > 0.0 && a < 1.0) {
        return Err(Error::UnstableFixedPoint { c, a });
    }
    Ok(FixedPoint {
        beta,
        a,
        lambda: poisson_tail(beta, k)?,
    })
}

/// `ln ln n / ln((k-1)(r-1))`, the leading term of the round count below
/// threshold.
pub fn round_bound(n: f64, r: usize, k: u32) -> Result<f64> {
    let branching = (k as f64 - 1.0) * (r as f64 - 1.0);
    if branching < 2.0 {
        return Err(Error::InvalidParameter(format!(
            "(k-1)(r-1) = {branching}; the round bound needs at least 2"
        )));
    }
    if !(n > std::f64::consts::E) {
        return Err(Error::InvalidParameter(format!("round bound needs n > e, got {n}")));
    }
    Ok(n.ln().ln() / branching.ln())
}
