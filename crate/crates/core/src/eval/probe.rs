//! Multinomial logistic regression as a linear probe.
//!
//! The objective is the mean cross-entropy plus `(λ/2)‖W‖²` (the intercept is
//! not penalized). It is minimized by accelerated gradient descent with step
//! `1/L`, where `L = ½ λ_max(X̃ᵀX̃/N) + λ` bounds the gradient's Lipschitz
//! constant. Whenever a step would raise the objective the momentum is reset,
//! and if a plain gradient step still fails `L` is doubled, so the accepted
//! objective sequence never increases.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{EvalConfig, EvalError, SplitStrategy, Standardizer};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub class: usize,
    pub support: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub auroc: f64,
}

/// Test-split metrics for one seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeMetrics {
    pub accuracy: f64,
    pub macro_f1: f64,
    pub auroc_ovr: f64,
    pub per_class: Vec<ClassMetrics>,
    pub split_seed: u64,
    pub converged: bool,
    pub iterations: usize,
    pub final_gradient_norm: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

impl MeanStd {
    /// Mean and sample standard deviation (0 for a single value).
    pub fn of(values: &[f64]) -> Self {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let std = if values.len() > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        Self { mean, std }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeReport {
    /// Label codes, in the order used for class indices.
    pub classes: Vec<usize>,
    pub accuracy: MeanStd,
    pub macro_f1: MeanStd,
    pub auroc_ovr: MeanStd,
    /// False when any seed hit `max_iterations` before the tolerance.
    pub converged: bool,
    pub per_seed: Vec<ProbeMetrics>,
}

/// A fitted multinomial logistic model.
#[derive(Debug, Clone)]
pub struct LogisticFit {
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
    /// Objective after every accepted step, starting from the zero model.
    pub objective_history: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
    pub gradient_norm: f64,
}

impl LogisticFit {
    pub fn probabilities(&self, x: ArrayView2<'_, f64>) -> Array2<f64> {
        let mut logits = x.dot(&self.weights) + &self.bias;
        for mut row in logits.rows_mut() {
            softmax_inplace(row.as_slice_mut().expect("row-major"));
        }
        logits
    }
}

fn softmax_inplace(row: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        total += *v;
    }
    row.iter_mut().for_each(|v| *v /= total);
}

struct Problem<'a> {
    x: ArrayView2<'a, f64>,
    y: &'a [usize],
    penalty: f64,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0f64; 4];
    let (ca, cb) = (a.chunks_exact(4), b.chunks_exact(4));
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        acc[0] += x[0] * y[0];
        acc[1] += x[1] * y[1];
        acc[2] += x[2] * y[2];
        acc[3] += x[3] * y[3];
    }
    let mut tail = 0.0;
    for (x, y) in ra.iter().zip(rb) {
        tail += x * y;
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

impl Problem<'_> {
    fn row(&self, i: usize) -> &[f64] {
        self.x.row(i).to_slice().expect("row-major design")
    }

    /// Logits for weights stored class-major (`classes × p`).
    fn logits(&self, wt: &Array2<f64>, b: &Array1<f64>) -> Array2<f64> {
        let k = wt.nrows();
        let mut out = Array2::zeros((self.x.nrows(), k));
        for i in 0..self.x.nrows() {
            let row = self.row(i);
            for c in 0..k {
                out[[i, c]] = dot(row, wt.row(c).as_slice().expect("contiguous")) + b[c];
            }
        }
        out
    }

    /// `Rᵀ X`, class-major.
    fn xt_times(&self, residual: &Array2<f64>) -> Array2<f64> {
        let k = residual.ncols();
        let mut out = Array2::zeros((k, self.x.ncols()));
        for i in 0..self.x.nrows() {
            let row = self.row(i);
            for c in 0..k {
                let r = residual[[i, c]];
                if r != 0.0 {
                    axpy(r, row, out.row_mut(c).into_slice().expect("contiguous"));
                }
            }
        }
        out
    }

    fn objective_from_logits(&self, logits: &Array2<f64>, wt: &Array2<f64>) -> f64 {
        let n = self.x.nrows() as f64;
        let mut loss = 0.0;
        for (row, &label) in logits.rows().into_iter().zip(self.y) {
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
            loss += lse - row[label];
        }
        loss / n + 0.5 * self.penalty * wt.iter().map(|v| v * v).sum::<f64>()
    }

    fn gradient_from_logits(&self, logits: &Array2<f64>, wt: &Array2<f64>) -> (Array2<f64>, Array1<f64>) {
        let n = self.x.nrows() as f64;
        let mut residual = logits.clone();
        for (mut row, &label) in residual.rows_mut().into_iter().zip(self.y) {
            softmax_inplace(row.as_slice_mut().expect("row-major"));
            row[label] -= 1.0;
        }
        residual /= n;
        let gw = self.xt_times(&residual) + &(wt * self.penalty);
        let gb = residual.sum_axis(Axis(0));
        (gw, gb)
    }

    /// `½ λ_max([X 1]ᵀ[X 1] / N) + λ`, by power iteration.
    fn lipschitz(&self) -> f64 {
        let n = self.x.nrows() as f64;
        let p = self.x.ncols();
        let mut v = Array2::from_elem((1, p), 1.0 / ((p + 1) as f64).sqrt());
        let mut v_bias = 1.0 / ((p + 1) as f64).sqrt();
        let mut estimate = 0.0;
        for _ in 0..100 {
            let xv = self.logits(&v, &Array1::from_elem(1, v_bias));
            let mut next = self.xt_times(&xv) / n;
            let next_bias = xv.sum() / n;
            let norm = (next.iter().map(|a| a * a).sum::<f64>() + next_bias * next_bias).sqrt();
            if norm == 0.0 {
                break;
            }
            let change = (norm - estimate).abs();
            estimate = norm;
            next /= norm;
            v = next;
            v_bias = next_bias / norm;
            if change <= 1e-6 * norm {
                break;
            }
        }
        0.5 * estimate + self.penalty
    }
}

fn norm2(gw: &Array2<f64>, gb: &Array1<f64>) -> f64 {
    gw.iter().chain(gb.iter()).map(|g| g * g).sum::<f64>().sqrt()
}

/// Fits multinomial logistic regression with labels in `0..classes`.
pub fn fit_logistic(
    x: ArrayView2<'_, f64>,
    y: &[usize],
    classes: usize,
    penalty: f64,
    max_iterations: usize,
    tolerance: f64,
) -> LogisticFit {
    let owned;
    let x = if x.is_standard_layout() {
        x
    } else {
        owned = x.as_standard_layout().into_owned();
        owned.view()
    };
    let problem = Problem { x, y, penalty };
    let p = x.ncols();
    let mut lipschitz = problem.lipschitz();

    // Weights are kept class-major; logits are linear in (w, b) so the
    // extrapolated point's logits follow from those of the iterates.
    let mut w = Array2::<f64>::zeros((classes, p));
    let mut b = Array1::<f64>::zeros(classes);
    let mut z_w = problem.logits(&w, &b);
    let mut f_w = problem.objective_from_logits(&z_w, &w);
    let (mut yw, mut yb, mut z_y) = (w.clone(), b.clone(), z_w.clone());
    let mut grad: Option<(Array2<f64>, Array1<f64>)> = None;
    let mut at_w = true;
    let mut t = 1.0f64;
    let mut history = vec![f_w];
    let mut converged = false;
    let mut iterations = 0;

    while iterations < max_iterations {
        iterations += 1;
        let (gw, gb) = grad.take().unwrap_or_else(|| problem.gradient_from_logits(&z_y, &yw));
        if at_w && norm2(&gw, &gb) <= tolerance {
            converged = true;
            break;
        }
        let cw = &yw - &(&gw / lipschitz);
        let cb = &yb - &(&gb / lipschitz);
        let z_c = problem.logits(&cw, &cb);
        let f_c = problem.objective_from_logits(&z_c, &cw);
        if f_c > f_w {
            if at_w {
                lipschitz *= 2.0;
                grad = Some((gw, gb));
            } else {
                yw.assign(&w);
                yb.assign(&b);
                z_y.assign(&z_w);
                at_w = true;
                t = 1.0;
            }
            continue;
        }
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        let momentum = (t - 1.0) / t_next;
        yw = &cw + &((&cw - &w) * momentum);
        yb = &cb + &((&cb - &b) * momentum);
        z_y = &z_c + &((&z_c - &z_w) * momentum);
        at_w = momentum == 0.0;
        t = t_next;
        let decrease = f_w - f_c;
        w = cw;
        b = cb;
        z_w = z_c;
        f_w = f_c;
        history.push(f_w);
        if decrease <= tolerance * f_w.abs().max(1.0) {
            converged = true;
            break;
        }
    }
    let (gw, gb) = problem.gradient_from_logits(&z_w, &w);
    let gradient_norm = norm2(&gw, &gb);
    let weights = w.reversed_axes().as_standard_layout().into_owned();
    LogisticFit { weights, bias: b, objective_history: history, converged, iterations, gradient_norm }
}

/// Maps label codes to dense class indices and checks class sizes.
fn index_classes(labels: &[usize]) -> Result<(Vec<usize>, Vec<usize>), EvalError> {
    let mut classes: Vec<usize> = labels.to_vec();
    classes.sort_unstable();
    classes.dedup();
    if classes.len() < 2 {
        return Err(EvalError::SingleClass);
    }
    let y: Vec<usize> = labels.iter().map(|l| classes.binary_search(l).expect("present")).collect();
    for (k, &class) in classes.iter().enumerate() {
        let count = y.iter().filter(|&&c| c == k).count();
        if count < 2 {
            return Err(EvalError::ClassTooSmall { class, count });
        }
    }
    Ok((classes, y))
}

fn stratified_split(y: &[usize], classes: usize, train_fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for k in 0..classes {
        let mut members: Vec<usize> = (0..y.len()).filter(|&i| y[i] == k).collect();
        members.shuffle(&mut rng);
        let n_train = ((train_fraction * members.len() as f64).round() as usize).clamp(1, members.len() - 1);
        train.extend_from_slice(&members[..n_train]);
        test.extend_from_slice(&members[n_train..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    (train, test)
}

fn grouped_split(groups: &[usize], train_fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut ids: Vec<usize> = groups.to_vec();
    ids.sort_unstable();
    ids.dedup();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    ids.shuffle(&mut rng);
    let target_test = ((1.0 - train_fraction) * groups.len() as f64).round() as usize;
    let mut held = Vec::new();
    let mut held_rows = 0;
    for &gid in &ids[..ids.len().saturating_sub(1)] {
        if held_rows >= target_test.max(1) {
            break;
        }
        held.push(gid);
        held_rows += groups.iter().filter(|&&g| g == gid).count();
    }
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for (i, g) in groups.iter().enumerate() {
        if held.contains(g) {
            test.push(i);
        } else {
            train.push(i);
        }
    }
    (train, test)
}

/// Area under the ROC curve via the rank-sum statistic, ties averaged.
/// `None` when one side is empty.
pub(crate) fn auroc(scores: &[f64], positive: &[bool]) -> Option<f64> {
    let n_pos = positive.iter().filter(|&&p| p).count();
    let n_neg = positive.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return None;
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let avg_rank = (i + j) as f64 / 2.0 + 1.0;
        rank_sum += avg_rank * order[i..=j].iter().filter(|&&k| positive[k]).count() as f64;
        i = j + 1;
    }
    let u = rank_sum - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Some(u / (n_pos * n_neg) as f64)
}

fn score_split(
    x: ArrayView2<'_, f64>,
    y: &[usize],
    classes: &[usize],
    train: &[usize],
    test: &[usize],
    cfg: &EvalConfig,
    seed: u64,
) -> ProbeMetrics {
    let k = classes.len();
    let x_train = x.select(Axis(0), train);
    let x_test = x.select(Axis(0), test);
    let (x_train, x_test) = if cfg.standardize {
        let s = Standardizer::fit(x_train.view());
        (s.transform(x_train.view()), s.transform(x_test.view()))
    } else {
        (x_train, x_test)
    };
    let y_train: Vec<usize> = train.iter().map(|&i| y[i]).collect();
    let y_test: Vec<usize> = test.iter().map(|&i| y[i]).collect();
    let fit = fit_logistic(x_train.view(), &y_train, k, cfg.l2_penalty, cfg.max_iterations, cfg.tolerance);
    let probs = fit.probabilities(x_test.view());

    let predicted: Vec<usize> = probs
        .rows()
        .into_iter()
        .map(|r| r.iter().enumerate().fold(0, |best, (c, &v)| if v > r[best] { c } else { best }))
        .collect();
    let correct = predicted.iter().zip(&y_test).filter(|(p, t)| p == t).count();
    let mut per_class = Vec::with_capacity(k);
    let mut aurocs = Vec::new();
    for c in 0..k {
        let tp = predicted.iter().zip(&y_test).filter(|&(&p, &t)| p == c && t == c).count() as f64;
        let predicted_c = predicted.iter().filter(|&&p| p == c).count() as f64;
        let support = y_test.iter().filter(|&&t| t == c).count();
        let precision = if predicted_c > 0.0 { tp / predicted_c } else { 0.0 };
        let recall = if support > 0 { tp / support as f64 } else { 0.0 };
        let f1 = if precision + recall > 0.0 { 2.0 * precision * recall / (precision + recall) } else { 0.0 };
        let positive: Vec<bool> = y_test.iter().map(|&t| t == c).collect();
        let scores: Vec<f64> = probs.column(c).to_vec();
        let area = auroc(&scores, &positive);
        aurocs.extend(area);
        per_class.push(ClassMetrics {
            class: classes[c],
            support,
            precision,
            recall,
            f1,
            auroc: area.unwrap_or(0.5),
        });
    }
    let macro_f1 = per_class.iter().map(|m| m.f1).sum::<f64>() / k as f64;
    let auroc_ovr = if aurocs.is_empty() { 0.5 } else { aurocs.iter().sum::<f64>() / aurocs.len() as f64 };
    ProbeMetrics {
        accuracy: correct as f64 / y_test.len().max(1) as f64,
        macro_f1,
        auroc_ovr,
        per_class,
        split_seed: seed,
        converged: fit.converged,
        iterations: fit.iterations,
        final_gradient_norm: fit.gradient_norm,
    }
}

fn summarize(classes: Vec<usize>, per_seed: Vec<ProbeMetrics>) -> ProbeReport {
    let pick = |f: fn(&ProbeMetrics) -> f64| MeanStd::of(&per_seed.iter().map(f).collect::<Vec<_>>());
    ProbeReport {
        accuracy: pick(|m| m.accuracy),
        macro_f1: pick(|m| m.macro_f1),
        auroc_ovr: pick(|m| m.auroc_ovr),
        converged: per_seed.iter().all(|m| m.converged),
        classes,
        per_seed,
    }
}

fn check_inputs(features: ArrayView2<'_, f64>, labels: &[usize], cfg: &EvalConfig) -> Result<(), EvalError> {
    cfg.validate()?;
    if features.nrows() != labels.len() {
        return Err(EvalError::DimensionMismatch {
            what: "feature rows vs labels",
            expected: labels.len(),
            got: features.nrows(),
        });
    }
    if features.iter().any(|v| !v.is_finite()) {
        return Err(EvalError::InvalidConfig("features contain non-finite values".into()));
    }
    Ok(())
}

/// Stratified linear probe, repeated over `cfg.seeds`.
///
/// Seeds run in parallel; each seed's math is sequential and deterministic.
pub fn linear_probe(
    features: ArrayView2<'_, f64>,
    labels: &[usize],
    cfg: &EvalConfig,
) -> Result<ProbeReport, EvalError> {
    check_inputs(features, labels, cfg)?;
    if cfg.split == SplitStrategy::Grouped {
        return Err(EvalError::InvalidConfig("grouped split needs group ids; use linear_probe_grouped".into()));
    }
    let (classes, y) = index_classes(labels)?;
    let per_seed = cfg
        .seeds
        .par_iter()
        .map(|&seed| {
            let (train, test) = stratified_split(&y, classes.len(), cfg.train_fraction, seed);
            score_split(features, &y, &classes, &train, &test, cfg, seed)
        })
        .collect();
    Ok(summarize(classes, per_seed))
}

/// Linear probe holding out whole groups (e.g. donors) per seed.
pub fn linear_probe_grouped(
    features: ArrayView2<'_, f64>,
    labels: &[usize],
    groups: &[usize],
    cfg: &EvalConfig,
) -> Result<ProbeReport, EvalError> {
    check_inputs(features, labels, cfg)?;
    if groups.len() != labels.len() {
        return Err(EvalError::DimensionMismatch { what: "groups vs labels", expected: labels.len(), got: groups.len() });
    }
    let (classes, y) = index_classes(labels)?;
    let mut distinct = groups.to_vec();
    distinct.sort_unstable();
    distinct.dedup();
    if distinct.len() < 2 {
        return Err(EvalError::InvalidConfig("grouped split needs at least two groups".into()));
    }
    let per_seed = cfg
        .seeds
        .par_iter()
        .map(|&seed| {
            let (train, test) = grouped_split(groups, cfg.train_fraction, seed);
            score_split(features, &y, &classes, &train, &test, cfg, seed)
        })
        .collect();
    Ok(summarize(classes, per_seed))
}
