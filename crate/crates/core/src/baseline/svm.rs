//! Linear soft-margin SVM, `min ½‖w‖² + C Σ max(0, 1 - yᵢ(w·xᵢ + b))`,
//! solved in the dual by two-coordinate descent on the maximal violating
//! pair. The bias is unregularised, so the dual carries `Σ αᵢyᵢ = 0`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SvmConfig {
    pub c: f64,
    /// Stop once the duality gap `P - D` falls below this.
    pub tolerance: f64,
    /// Pair updates per training point before giving up.
    pub max_sweeps: usize,
}

impl Default for SvmConfig {
    fn default() -> Self {
        SvmConfig { c: 1.0, tolerance: 1e-3, max_sweeps: 2000 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvmModel {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub c: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SvmFit {
    pub primal: f64,
    pub dual: f64,
    pub iterations: usize,
}

impl SvmFit {
    pub fn gap(&self) -> f64 {
        self.primal - self.dual
    }
}

impl SvmModel {
    pub fn margin(&self, x: &[f64]) -> f64 {
        self.weights.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + self.bias
    }

    /// `(label, margin)` with label `true` for the positive class.
    pub fn predict(&self, x: &[f64]) -> (bool, f64) {
        let m = self.margin(x);
        (m > 0.0, m)
    }

    pub fn primal(&self, xs: &[Vec<f64>], ys: &[bool]) -> f64 {
        let hinge: f64 = xs.iter().zip(ys).map(|(x, &y)| (1.0 - sign(y) * self.margin(x)).max(0.0)).sum();
        0.5 * dot(&self.weights, &self.weights) + self.c * hinge
    }
}

fn sign(y: bool) -> f64 {
    if y {
        1.0
    } else {
        -1.0
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Bias minimising the summed hinge loss for fixed scores `s`.
fn best_bias(scores: &[f64], ys: &[bool]) -> f64 {
    // Σ max(0, 1 - y(s + b)) is convex piecewise linear with kinks at b = y - s.
    let mut kinks: Vec<f64> = scores.iter().zip(ys).map(|(&s, &y)| sign(y) - s).collect();
    kinks.sort_by(f64::total_cmp);
    // Slope left of every kink: each positive point is active (-1), negatives inactive.
    let mut slope: f64 = -(ys.iter().filter(|&&y| y).count() as f64);
    for &b in &kinks {
        // Passing a kink deactivates a positive or activates a negative.
        slope += 1.0;
        if slope >= 0.0 {
            return b;
        }
    }
    kinks.last().copied().unwrap_or(0.0)
}

/// Inner products, cached in full for small problems.
struct Gram<'a> {
    xs: &'a [Vec<f64>],
    full: Option<Vec<f64>>,
}

const FULL_GRAM_LIMIT: usize = 8000;

impl<'a> Gram<'a> {
    fn new(xs: &'a [Vec<f64>]) -> Self {
        let n = xs.len();
        let full = (n <= FULL_GRAM_LIMIT).then(|| {
            let mut g = vec![0.0; n * n];
            for i in 0..n {
                for j in 0..=i {
                    let v = dot(&xs[i], &xs[j]);
                    g[i * n + j] = v;
                    g[j * n + i] = v;
                }
            }
            g
        });
        Gram { xs, full }
    }

    fn column(&self, i: usize) -> std::borrow::Cow<'_, [f64]> {
        let n = self.xs.len();
        match &self.full {
            Some(g) => std::borrow::Cow::Borrowed(&g[i * n..(i + 1) * n]),
            None => std::borrow::Cow::Owned(self.xs.iter().map(|x| dot(x, &self.xs[i])).collect()),
        }
    }
}

pub fn svm_train(xs: &[Vec<f64>], ys: &[bool], config: &SvmConfig) -> Result<(SvmModel, SvmFit)> {
    let n = xs.len();
    if n != ys.len() {
        return Err(Error::Shape(format!("{n} feature rows for {} labels", ys.len())));
    }
    if !ys.iter().any(|&y| y) || ys.iter().all(|&y| y) {
        return Err(Error::InvalidRecord("SVM training needs both classes".into()));
    }
    if !(config.c > 0.0 && config.c.is_finite()) || !(config.tolerance > 0.0) {
        return Err(Error::Config("SVM C and tolerance must be positive".into()));
    }
    let d = xs[0].len();
    if xs.iter().any(|x| x.len() != d || x.iter().any(|v| !v.is_finite())) {
        return Err(Error::Shape("SVM features must be finite rows of one length".into()));
    }
    let c = config.c;
    let y: Vec<f64> = ys.iter().map(|&v| sign(v)).collect();
    let gram = Gram::new(xs);
    let mut alpha = vec![0.0f64; n];
    let mut w = vec![0.0f64; d];
    // grad[t] = yₜ w·xₜ - 1, the dual objective's gradient.
    let mut grad = vec![-1.0f64; n];
    let max_iter = config.max_sweeps.saturating_mul(n).max(1);
    let check_every = n.max(16);
    let mut iterations = 0;
    let finish = |w: Vec<f64>, alpha: &[f64], iterations: usize| {
        let scores: Vec<f64> = xs.iter().map(|x| dot(&w, x)).collect();
        let bias = best_bias(&scores, ys);
        let model = SvmModel { weights: w, bias, c };
        let primal = model.primal(xs, ys);
        let dual = alpha.iter().sum::<f64>() - 0.5 * dot(&model.weights, &model.weights);
        (model, SvmFit { primal, dual, iterations })
    };
    loop {
        // Maximal violating pair over the feasible directions.
        let (mut i, mut gmax) = (usize::MAX, f64::NEG_INFINITY);
        let (mut j, mut gmin) = (usize::MAX, f64::INFINITY);
        for t in 0..n {
            let v = -y[t] * grad[t];
            let up = (y[t] > 0.0 && alpha[t] < c) || (y[t] < 0.0 && alpha[t] > 0.0);
            let low = (y[t] > 0.0 && alpha[t] > 0.0) || (y[t] < 0.0 && alpha[t] < c);
            if up && v > gmax {
                (i, gmax) = (t, v);
            }
            if low && v < gmin {
                (j, gmin) = (t, v);
            }
        }
        if iterations % check_every == 0 || i == usize::MAX || j == usize::MAX || gmax - gmin < 1e-12 {
            let (model, fit) = finish(w.clone(), &alpha, iterations);
            if fit.gap() < config.tolerance {
                return Ok((model, fit));
            }
            if i == usize::MAX || j == usize::MAX || gmax - gmin < 1e-12 {
                return Err(Error::Numeric(format!("SVM stalled with duality gap {:.3e}", fit.gap())));
            }
        }
        if iterations >= max_iter {
            let (_, fit) = finish(w, &alpha, iterations);
            return Err(Error::Numeric(format!("SVM did not converge: duality gap {:.3e} after {iterations} updates", fit.gap())));
        }
        iterations += 1;

        // Move along yᵢeᵢ - yⱼeⱼ, which keeps Σ αy fixed.
        let (ki, kj) = (gram.column(i), gram.column(j));
        let curvature = (ki[i] + kj[j] - 2.0 * ki[j]).max(1e-12);
        let mut step = (gmax - gmin) / curvature;
        let room = |t: usize, dir: f64| if dir > 0.0 { c - alpha[t] } else { alpha[t] };
        step = step.min(room(i, y[i])).min(room(j, -y[j]));
        let (di, dj) = (y[i] * step, -y[j] * step);
        alpha[i] = (alpha[i] + di).clamp(0.0, c);
        alpha[j] = (alpha[j] + dj).clamp(0.0, c);
        let (ci, cj) = (di * y[i], dj * y[j]);
        for (wk, (&a, &b)) in w.iter_mut().zip(xs[i].iter().zip(&xs[j])) {
            *wk += ci * a + cj * b;
        }
        for (t, g) in grad.iter_mut().enumerate() {
            *g += y[t] * (ci * ki[t] + cj * kj[t]);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_points() {
        let xs = vec![vec![1.0, 1.0], vec![-1.0, -1.0]];
        let ys = vec![true, false];
        let (m, fit) = svm_train(&xs, &ys, &SvmConfig { c: 10.0, ..SvmConfig::default() }).unwrap();
        assert!(fit.gap() < 1e-3);
        assert!(m.predict(&xs[0]).1 >= 1.0 - 1e-3);
        assert!(m.predict(&xs[1]).1 <= -1.0 + 1e-3);
        assert!(m.predict(&xs[0]).0 && !m.predict(&xs[1]).0);
    }

    #[test]
    fn single_class_rejected() {
        let xs = vec![vec![1.0], vec![2.0]];
        assert!(svm_train(&xs, &[true, true], &SvmConfig::default()).is_err());
    }

    #[test]
    fn best_bias_minimises_hinge() {
        let scores = [0.3, -0.2, 1.5, -2.0, 0.1];
        let ys = [true, false, true, false, false];
        let cost = |b: f64| scores.iter().zip(&ys).map(|(&s, &y)| (1.0 - sign(y) * (s + b)).max(0.0)).sum::<f64>();
        let b = best_bias(&scores, &ys);
        for k in -400..400 {
            assert!(cost(b) <= cost(k as f64 / 100.0) + 1e-12);
        }
    }
}
