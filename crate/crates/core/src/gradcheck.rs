//! Central finite differences as an independent oracle for the analytic
//! backward passes. Everything here runs in `f64`.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::activations::{
    arelu_backward, arelu_forward, baseline_backward, baseline_forward, AReLUState, ActivationKind,
    Mode, PReluState,
};
use crate::error::{Error, Result};
use crate::layers::{
    conv2d_backward, conv2d_forward, linear_backward, linear_forward, maxpool2d_backward,
    maxpool2d_forward, softmax_xent_backward, softmax_xent_forward, ConvParams,
};
use crate::tensor::Tensor;

pub const DEFAULT_H: f64 = 1e-5;
pub const DEFAULT_TOLERANCE: f64 = 1e-5;
/// Sampled inputs stay at least this far from any kink.
pub const KINK_MARGIN: f64 = 1e-3;

/// `|a - n| / max(|a|, |n|, 1e-8)`
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8)
}

fn check_step(h: f64) -> Result<()> {
    if !(1e-6..=1e-3).contains(&h) {
        return Err(Error::Oracle(format!("step {h} outside [1e-6, 1e-3]")));
    }
    Ok(())
}

fn finite(v: f64, at: usize) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::Oracle(format!(
            "non-finite evaluation ({v}) while perturbing coordinate {at}"
        )))
    }
}

/// Central difference `(f(θ + h e_i) - f(θ - h e_i)) / 2h` for every coordinate.
pub fn finite_diff(mut f: impl FnMut(&[f64]) -> f64, params: &[f64], h: f64) -> Result<Vec<f64>> {
    check_step(h)?;
    let mut theta = params.to_vec();
    let mut grad = Vec::with_capacity(theta.len());
    for i in 0..theta.len() {
        let orig = theta[i];
        theta[i] = orig + h;
        let plus = finite(f(&theta), i)?;
        theta[i] = orig - h;
        let minus = finite(f(&theta), i)?;
        theta[i] = orig;
        grad.push((plus - minus) / (2.0 * h));
    }
    Ok(grad)
}

/// Whether the forward and backward one-sided differences of `f` along
/// coordinate `i` disagree by more than `tol` (relative to their size).
pub fn is_kink(
    mut f: impl FnMut(&[f64]) -> f64,
    params: &[f64],
    i: usize,
    h: f64,
    tol: f64,
) -> Result<bool> {
    check_step(h)?;
    let mut theta = params.to_vec();
    let center = finite(f(&theta), i)?;
    theta[i] = params[i] + h;
    let plus = finite(f(&theta), i)?;
    theta[i] = params[i] - h;
    let minus = finite(f(&theta), i)?;
    let fwd = (plus - center) / h;
    let bwd = (center - minus) / h;
    Ok((fwd - bwd).abs() > tol * fwd.abs().max(bwd.abs()).max(1.0))
}

/// Maps parameter blocks to a flat output vector.
pub type BlockFn<'a> = dyn Fn(&[Vec<f64>]) -> Result<Vec<f64>> + 'a;

/// Central difference of `L(θ) = Σ_j w_j y_j(θ)` with respect to one block of
/// a multi-block input. The two perturbed outputs are differenced element-wise
/// before weighting, which keeps the rounding error proportional to each
/// output's own change rather than to the size of `L`.
pub fn weighted_diff(
    forward: &BlockFn<'_>,
    blocks: &[Vec<f64>],
    which: usize,
    weights: &[f64],
    h: f64,
) -> Result<Vec<f64>> {
    check_step(h)?;
    let mut theta = blocks.to_vec();
    let mut grad = Vec::with_capacity(theta[which].len());
    for i in 0..theta[which].len() {
        let orig = theta[which][i];
        theta[which][i] = orig + h;
        let plus = forward(&theta)?;
        theta[which][i] = orig - h;
        let minus = forward(&theta)?;
        theta[which][i] = orig;
        if plus.len() != weights.len() || minus.len() != weights.len() {
            return Err(Error::Oracle(format!(
                "forward produced {} outputs for {} weights",
                plus.len(),
                weights.len()
            )));
        }
        let mut acc = 0.0;
        for ((p, m), w) in plus.iter().zip(&minus).zip(weights) {
            acc += w * (p - m);
        }
        grad.push(finite(acc / (2.0 * h), i)?);
    }
    Ok(grad)
}

/// Analytic and numeric gradients of one named parameter block.
#[derive(Debug, Clone)]
pub struct GradPair {
    pub name: String,
    pub analytic: Vec<f64>,
    pub numeric: Vec<f64>,
}

impl GradPair {
    pub fn new(name: impl Into<String>, analytic: Vec<f64>, numeric: Vec<f64>) -> Self {
        GradPair {
            name: name.into(),
            analytic,
            numeric,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamReport {
    pub name: String,
    pub max_rel: f64,
    pub max_abs: f64,
    /// `(trial, element)` of the largest relative error.
    pub worst: Option<(usize, usize)>,
    pub compared: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub op: String,
    pub trials: usize,
    pub tolerance: f64,
    pub params: Vec<ParamReport>,
}

impl GradCheckReport {
    pub fn max_rel(&self) -> f64 {
        self.params.iter().map(|p| p.max_rel).fold(0.0, f64::max)
    }

    pub fn passed(&self) -> bool {
        self.params
            .iter()
            .all(|p| p.max_rel < self.tolerance && p.max_rel.is_finite())
    }

    pub fn param(&self, name: &str) -> Option<&ParamReport> {
        self.params.iter().find(|p| p.name == name)
    }

    pub fn summary(&self) -> String {
        let parts: Vec<String> = self
            .params
            .iter()
            .map(|p| format!("{}={:.2e}", p.name, p.max_rel))
            .collect();
        format!(
            "{:<12} {} trials={} max_rel={:.3e} [{}]",
            self.op,
            if self.passed() { "PASS" } else { "FAIL" },
            self.trials,
            self.max_rel(),
            parts.join(" ")
        )
    }
}

/// Runs `trial` with a seeded generator `trials` times and folds the
/// per-block worst cases into a report.
pub fn check_operation<F>(
    op: &str,
    trials: usize,
    tolerance: f64,
    seed: u64,
    mut trial: F,
) -> Result<GradCheckReport>
where
    F: FnMut(&mut ChaCha8Rng) -> Result<Vec<GradPair>>,
{
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params: Vec<ParamReport> = Vec::new();
    for t in 0..trials {
        for pair in trial(&mut rng)? {
            if pair.analytic.len() != pair.numeric.len() {
                return Err(Error::Oracle(format!(
                    "{op}/{}: {} analytic vs {} numeric entries",
                    pair.name,
                    pair.analytic.len(),
                    pair.numeric.len()
                )));
            }
            let idx = match params.iter().position(|p| p.name == pair.name) {
                Some(i) => i,
                None => {
                    params.push(ParamReport {
                        name: pair.name.clone(),
                        max_rel: 0.0,
                        max_abs: 0.0,
                        worst: None,
                        compared: 0,
                    });
                    params.len() - 1
                }
            };
            let rep = &mut params[idx];
            for (i, (&a, &n)) in pair.analytic.iter().zip(&pair.numeric).enumerate() {
                let rel = relative_error(a, n);
                // NaN compares false, so route it explicitly into the worst slot.
                if rel > rep.max_rel || rel.is_nan() {
                    rep.max_rel = if rel.is_nan() { f64::INFINITY } else { rel };
                    rep.worst = Some((t, i));
                }
                rep.max_abs = rep.max_abs.max((a - n).abs());
                rep.compared += 1;
            }
        }
    }
    Ok(GradCheckReport {
        op: op.to_string(),
        trials,
        tolerance,
        params,
    })
}

/// Uniform draw from `[lo, hi]` that keeps `KINK_MARGIN` away from every kink.
fn sample_away(rng: &mut ChaCha8Rng, lo: f64, hi: f64, kinks: &[f64]) -> f64 {
    loop {
        let v = rng.random_range(lo..=hi);
        if kinks.iter().all(|k| (v - k).abs() > KINK_MARGIN) {
            return v;
        }
    }
}

fn uniform_vec(rng: &mut ChaCha8Rng, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(lo..=hi)).collect()
}

fn tensor(dims: &[usize], data: &[f64]) -> Result<Tensor<f64>> {
    Tensor::from_vec(dims, data.to_vec())
}

/// Every operation with a built-in check, by name.
pub fn op_names() -> Vec<&'static str> {
    let mut names: Vec<&'static str> = ActivationKind::ALL.iter().map(|k| k.name()).collect();
    names.extend(["conv2d", "maxpool2d", "linear", "softmax_xent"]);
    names
}

/// Default trial count of a named check.
pub fn default_trials(op: &str) -> usize {
    if op == "arelu" {
        1000
    } else {
        100
    }
}

/// Runs the built-in check for `op` (see [`op_names`]).
pub fn check_named(op: &str, trials: usize, seed: u64) -> Result<GradCheckReport> {
    let tol = DEFAULT_TOLERANCE;
    match op {
        "arelu" => check_arelu(trials, seed, 0.011, 0.989),
        "conv2d" => check_operation(op, trials, tol, seed, conv_trial),
        "maxpool2d" => check_operation(op, trials, tol, seed, maxpool_trial),
        "linear" => check_operation(op, trials, tol, seed, linear_trial),
        "softmax_xent" => check_operation(op, trials, tol, seed, xent_trial),
        other => {
            let kind: ActivationKind = other
                .parse()
                .map_err(|_| Error::config(format!("no gradient check named '{other}'")))?;
            check_operation(op, trials, tol, seed, |rng| baseline_trial(kind, rng))
        }
    }
}

/// AReLU with `alpha` drawn from `[alpha_lo, alpha_hi]`. Ranges strictly
/// inside the clamp interval exercise the live gradient; ranges outside it
/// exercise the detached one (both sides are then zero).
pub fn check_arelu(
    trials: usize,
    seed: u64,
    alpha_lo: f64,
    alpha_hi: f64,
) -> Result<GradCheckReport> {
    check_operation("arelu", trials, DEFAULT_TOLERANCE, seed, |rng| {
        let n = rng.random_range(1..=24);
        let x: Vec<f64> = (0..n)
            .map(|_| sample_away(rng, -3.0, 3.0, &[0.0]))
            .collect();
        let w = uniform_vec(rng, n, -1.0, 1.0);
        let alpha = rng.random_range(alpha_lo..=alpha_hi);
        let beta = rng.random_range(-3.0..=3.0);

        let xt = tensor(&[n], &x)?;
        let mut state = AReLUState::<f64>::new(alpha, beta);
        let (_, ctx) = arelu_forward(&xt, &state);
        let (dx, da, db) = arelu_backward(&ctx, &mut state, &tensor(&[n], &w)?)?;

        let forward = |b: &[Vec<f64>]| -> Result<Vec<f64>> {
            let st = AReLUState::<f64>::new(b[1][0], b[2][0]);
            Ok(arelu_forward(&tensor(&[n], &b[0])?, &st).0.into_data())
        };
        let blocks = vec![x, vec![alpha], vec![beta]];
        Ok(vec![
            GradPair::new(
                "x",
                dx.into_data(),
                weighted_diff(&forward, &blocks, 0, &w, DEFAULT_H)?,
            ),
            GradPair::new(
                "alpha",
                vec![da],
                weighted_diff(&forward, &blocks, 1, &w, DEFAULT_H)?,
            ),
            GradPair::new(
                "beta",
                vec![db],
                weighted_diff(&forward, &blocks, 2, &w, DEFAULT_H)?,
            ),
        ])
    })
}

fn baseline_trial(kind: ActivationKind, rng: &mut ChaCha8Rng) -> Result<Vec<GradPair>> {
    if kind == ActivationKind::AReLU {
        return Err(Error::config("use check_arelu for AReLU"));
    }
    let n = rng.random_range(1..=24);
    let (lo, hi) = if kind == ActivationKind::ReLU6 {
        (-2.0, 8.0)
    } else {
        (-4.0, 4.0)
    };
    let x: Vec<f64> = (0..n)
        .map(|_| sample_away(rng, lo, hi, kind.kinks()))
        .collect();
    let w = uniform_vec(rng, n, -1.0, 1.0);
    let slope = rng.random_range(0.05..=0.6);
    // RReLU is checked in training mode with identical slope draws on every
    // evaluation.
    let rrelu_seed: u64 = rng.random();

    let forward = |b: &[Vec<f64>]| -> Result<Vec<f64>> {
        let prelu = PReluState::<f64>::new(b[1][0]);
        let mut r = ChaCha8Rng::seed_from_u64(rrelu_seed);
        let (y, _) = baseline_forward(
            &kind,
            &tensor(&[n], &b[0])?,
            Mode::Train,
            Some(&prelu),
            &mut r,
        )?;
        Ok(y.into_data())
    };
    let prelu = PReluState::<f64>::new(slope);
    let mut r = ChaCha8Rng::seed_from_u64(rrelu_seed);
    let xt = tensor(&[n], &x)?;
    let (_, ctx) = baseline_forward(&kind, &xt, Mode::Train, Some(&prelu), &mut r)?;
    let (dx, dslope) = baseline_backward(&kind, &ctx, &tensor(&[n], &w)?, Some(&prelu))?;

    let blocks = vec![x, vec![slope]];
    let mut pairs = vec![GradPair::new(
        "x",
        dx.into_data(),
        weighted_diff(&forward, &blocks, 0, &w, DEFAULT_H)?,
    )];
    if kind == ActivationKind::PReLU {
        let ds = dslope
            .ok_or_else(|| Error::Oracle("prelu backward returned no slope gradient".into()))?;
        pairs.push(GradPair::new(
            "slope",
            vec![ds],
            weighted_diff(&forward, &blocks, 1, &w, DEFAULT_H)?,
        ));
    }
    Ok(pairs)
}

fn conv_trial(rng: &mut ChaCha8Rng) -> Result<Vec<GradPair>> {
    let n = rng.random_range(1..=2);
    let cin = rng.random_range(1..=3);
    let cout = rng.random_range(1..=3);
    let k = rng.random_range(1..=3);
    let stride = rng.random_range(1..=2);
    let pad = rng.random_range(0..=1);
    let h = rng.random_range(k.max(2)..=5);
    let wd = rng.random_range(k.max(2)..=5);
    let xd = [n, cin, h, wd];
    let wdims = [cout, cin, k, k];
    let x = uniform_vec(rng, xd.iter().product(), -1.0, 1.0);
    let wt = uniform_vec(rng, wdims.iter().product(), -1.0, 1.0);
    let b = uniform_vec(rng, cout, -1.0, 1.0);

    let build = |b: &[Vec<f64>]| -> Result<(Tensor<f64>, ConvParams<f64>)> {
        let p = ConvParams::new(tensor(&wdims, &b[1])?, tensor(&[cout], &b[2])?, stride, pad)?;
        Ok((tensor(&xd, &b[0])?, p))
    };
    let forward = |b: &[Vec<f64>]| -> Result<Vec<f64>> {
        let (xt, p) = build(b)?;
        Ok(conv2d_forward(&xt, &p)?.0.into_data())
    };
    let blocks = vec![x, wt, b];
    let (xt, p) = build(&blocks)?;
    let (y, ctx) = conv2d_forward(&xt, &p)?;
    let g = uniform_vec(rng, y.len(), -1.0, 1.0);
    let (dx, dw, db) = conv2d_backward(&ctx, &p, &tensor(y.dims(), &g)?, true)?;
    let dx = dx.ok_or_else(|| Error::Oracle("conv backward skipped the input gradient".into()))?;
    Ok(vec![
        GradPair::new(
            "x",
            dx.into_data(),
            weighted_diff(&forward, &blocks, 0, &g, DEFAULT_H)?,
        ),
        GradPair::new(
            "weight",
            dw.into_data(),
            weighted_diff(&forward, &blocks, 1, &g, DEFAULT_H)?,
        ),
        GradPair::new(
            "bias",
            db.into_data(),
            weighted_diff(&forward, &blocks, 2, &g, DEFAULT_H)?,
        ),
    ])
}

fn maxpool_trial(rng: &mut ChaCha8Rng) -> Result<Vec<GradPair>> {
    let n = rng.random_range(1..=2);
    let c = rng.random_range(1..=3);
    let h = rng.random_range(2..=7);
    let w = rng.random_range(2..=7);
    let window = rng.random_range(1..=h.min(w).min(3));
    let stride = rng.random_range(1..=window);
    let dims = [n, c, h, w];
    // Distinct values at least 0.04 apart, so no perturbation can reorder a
    // window and there are no ties.
    let count = n * c * h * w;
    let mut order: Vec<usize> = (0..count).collect();
    order.shuffle(rng);
    let x: Vec<f64> = order
        .iter()
        .map(|&r| r as f64 * 0.05 - count as f64 * 0.025 + rng.random_range(0.0..0.01))
        .collect();

    let forward = |b: &[Vec<f64>]| -> Result<Vec<f64>> {
        Ok(maxpool2d_forward(&tensor(&dims, &b[0])?, window, stride)?
            .0
            .into_data())
    };
    let (y, ctx) = maxpool2d_forward(&tensor(&dims, &x)?, window, stride)?;
    let g = uniform_vec(rng, y.len(), -1.0, 1.0);
    let dx = maxpool2d_backward(&ctx, &tensor(y.dims(), &g)?)?;
    let blocks = vec![x];
    Ok(vec![GradPair::new(
        "x",
        dx.into_data(),
        weighted_diff(&forward, &blocks, 0, &g, DEFAULT_H)?,
    )])
}

fn linear_trial(rng: &mut ChaCha8Rng) -> Result<Vec<GradPair>> {
    let n = rng.random_range(1..=4);
    let din = rng.random_range(1..=8);
    let dout = rng.random_range(1..=6);
    let x = uniform_vec(rng, n * din, -1.0, 1.0);
    let wt = uniform_vec(rng, dout * din, -1.0, 1.0);
    let b = uniform_vec(rng, dout, -1.0, 1.0);
    let forward = |bl: &[Vec<f64>]| -> Result<Vec<f64>> {
        let (y, _) = linear_forward(
            &tensor(&[n, din], &bl[0])?,
            &tensor(&[dout, din], &bl[1])?,
            &tensor(&[dout], &bl[2])?,
        )?;
        Ok(y.into_data())
    };
    let blocks = vec![x, wt, b];
    let wten = tensor(&[dout, din], &blocks[1])?;
    let (y, ctx) = linear_forward(
        &tensor(&[n, din], &blocks[0])?,
        &wten,
        &tensor(&[dout], &blocks[2])?,
    )?;
    let g = uniform_vec(rng, y.len(), -1.0, 1.0);
    let (dx, dw, db) = linear_backward(&ctx, &wten, &tensor(y.dims(), &g)?)?;
    Ok(vec![
        GradPair::new(
            "x",
            dx.into_data(),
            weighted_diff(&forward, &blocks, 0, &g, DEFAULT_H)?,
        ),
        GradPair::new(
            "weight",
            dw.into_data(),
            weighted_diff(&forward, &blocks, 1, &g, DEFAULT_H)?,
        ),
        GradPair::new(
            "bias",
            db.into_data(),
            weighted_diff(&forward, &blocks, 2, &g, DEFAULT_H)?,
        ),
    ])
}

fn xent_trial(rng: &mut ChaCha8Rng) -> Result<Vec<GradPair>> {
    let n = rng.random_range(1..=4);
    let k = rng.random_range(2..=10);
    let logits = uniform_vec(rng, n * k, -3.0, 3.0);
    let labels: Vec<usize> = (0..n).map(|_| rng.random_range(0..k)).collect();
    let loss = |z: &[f64]| -> f64 {
        tensor(&[n, k], z)
            .and_then(|t| softmax_xent_forward(&t, &labels))
            .map_or(f64::NAN, |(l, _)| l)
    };
    let (_, ctx) = softmax_xent_forward(&tensor(&[n, k], &logits)?, &labels)?;
    let d: Tensor<f64> = softmax_xent_backward(&ctx);
    Ok(vec![GradPair::new(
        "logits",
        d.into_data(),
        finite_diff(loss, &logits, DEFAULT_H)?,
    )])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::activations::sigmoid;

    #[test]
    fn quadratic_is_exact() {
        let g = finite_diff(|p| p[0] * p[0], &[3.0], 1e-4).unwrap();
        assert!((g[0] - 6.0).abs() < 1e-8);
    }

    #[test]
    fn constant_has_zero_gradient() {
        let g = finite_diff(|_| 4.2, &[1.0, -2.0, 0.5], DEFAULT_H).unwrap();
        assert!(g.iter().all(|v| v.abs() < 1e-10));
    }

    #[test]
    fn closed_forms() {
        for &x in &[-2.5, -0.3, 0.0, 0.7, 1.9] {
            let s = finite_diff(|p| sigmoid(p[0]), &[x], DEFAULT_H).unwrap()[0];
            assert!((s - sigmoid(x) * (1.0 - sigmoid(x))).abs() < 1e-8);
            let t = finite_diff(|p| p[0].tanh(), &[x], DEFAULT_H).unwrap()[0];
            assert!((t - (1.0 - x.tanh().powi(2))).abs() < 1e-8);
            let c = finite_diff(|p| p[0].powi(3) - 2.0 * p[0], &[x], DEFAULT_H).unwrap()[0];
            assert!((c - (3.0 * x * x - 2.0)).abs() < 1e-8);
        }
    }

    #[test]
    fn abs_at_zero_is_a_kink() {
        assert!(is_kink(|p| p[0].abs(), &[0.0], 0, DEFAULT_H, 1e-3).unwrap());
        assert!(!is_kink(|p| p[0].abs(), &[0.5], 0, DEFAULT_H, 1e-3).unwrap());
        assert!(!is_kink(|p| p[0] * p[0], &[3.0], 0, DEFAULT_H, 1e-3).unwrap());
    }

    #[test]
    fn non_finite_evaluation_is_an_oracle_error() {
        let err = finite_diff(|p| p[0].ln(), &[0.0], 1e-3).unwrap_err();
        assert!(matches!(err, Error::Oracle(_)));
        assert!(matches!(
            finite_diff(|p| p[0], &[0.0], 1e-1),
            Err(Error::Oracle(_))
        ));
    }

    #[test]
    fn relative_error_floor() {
        assert_eq!(relative_error(0.0, 0.0), 0.0);
        assert!((relative_error(1e-9, 0.0) - 0.1).abs() < 1e-15);
        assert!((relative_error(2.0, 1.0) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn corrupted_relu_backward_is_caught() {
        let report = check_operation("relu-corrupt", 50, DEFAULT_TOLERANCE, 9, |rng| {
            let n = 8;
            let x: Vec<f64> = (0..n)
                .map(|_| sample_away(rng, -2.0, 2.0, &[0.0]))
                .collect();
            let w = uniform_vec(rng, n, -1.0, 1.0);
            let analytic: Vec<f64> = x
                .iter()
                .zip(&w)
                .map(|(&v, &g)| if v >= 0.0 { 1.01 * g } else { 0.0 })
                .collect();
            let relu = |b: &[Vec<f64>]| -> Result<Vec<f64>> {
                Ok(b[0].iter().map(|v| v.max(0.0)).collect())
            };
            Ok(vec![GradPair::new(
                "x",
                analytic,
                weighted_diff(&relu, &[x], 0, &w, DEFAULT_H)?,
            )])
        })
        .unwrap();
        assert!(!report.passed());
        let rel = report.max_rel();
        assert!((rel - 0.01 / 1.01).abs() < 1e-6, "{rel}");
    }

    #[test]
    fn every_named_op_passes_a_short_run() {
        for op in op_names() {
            let report = check_named(op, 5, 1).unwrap();
            assert!(report.passed(), "{}", report.summary());
        }
    }

    #[test]
    fn arelu_detached_regime_agrees() {
        let above = check_arelu(50, 3, 0.995, 1.5).unwrap();
        assert!(above.passed(), "{}", above.summary());
        assert_eq!(above.param("alpha").unwrap().max_abs, 0.0);
        let below = check_arelu(50, 4, -0.5, 0.005).unwrap();
        assert_eq!(below.param("alpha").unwrap().max_abs, 0.0);
    }

    #[test]
    fn unknown_op_is_a_config_error() {
        assert!(matches!(check_named("nope", 1, 0), Err(Error::Config(_))));
    }
}
