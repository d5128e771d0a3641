//! Loss families with analytic constants on a declared compact domain.
//!
//! Every family is evaluated on samples `(x, y)` with `||x||_2 <= B`, and its
//! Lipschitz constant `L`, smoothness `beta`, strong convexity `mu`,
//! gradient-dominance constant `gamma` and loss bound `M` are derived in
//! closed form on the ball `||w|| <= W_max`:
//!
//! | family               | loss                              | L                  | beta        |
//! |----------------------|-----------------------------------|--------------------|-------------|
//! | logistic             | `log(1 + exp(-y <x,w>))`          | `B`                | `B^2 / 4`   |
//! | ridge-logistic(mu)   | logistic + `mu/2 ||w||^2`         | `B + mu W_max`     | `B^2/4 + mu`|
//! | quadratic(mu)        | `mu/2 (<x,w> - y)^2`              | `mu B (B W_max + Y)` | `mu B^2`  |
//! | saturating-nonconvex | `u^2 / (1 + u^2)`, `u = <x,w> - y`| `3 sqrt(3) B / 8`  | `2 B^2`     |

use serde::{Deserialize, Serialize};
use thiserror::Error;

const MINIMIZER_MAX_ITER: usize = 1_000_000;
const FEATURE_TOL: f64 = 1e-12;
/// `max |phi'(u)|` for `phi(u) = u^2 / (1 + u^2)`, attained at `u = 1/sqrt(3)`.
pub const SATURATING_SLOPE: f64 = 0.649_519_052_838_329; // 3 * sqrt(3) / 8

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LossError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("minimizer did not converge within {iterations} iterations (gradient norm {grad_norm:.3e})")]
    Convergence { iterations: usize, grad_norm: f64 },
    #[error("validation error: {0}")]
    Validation(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub x: Vec<f64>,
    pub y: f64,
}

impl Sample {
    pub fn new(x: Vec<f64>, y: f64) -> Self {
        Self { x, y }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case", deny_unknown_fields)]
pub enum LossFamily {
    Logistic,
    RidgeLogistic { mu: f64 },
    Quadratic { mu: f64 },
    SaturatingNonconvex,
}

impl LossFamily {
    pub fn name(&self) -> &'static str {
        match self {
            LossFamily::Logistic => "logistic",
            LossFamily::RidgeLogistic { .. } => "ridge-logistic",
            LossFamily::Quadratic { .. } => "quadratic",
            LossFamily::SaturatingNonconvex => "saturating-nonconvex",
        }
    }

    pub fn mu(&self) -> f64 {
        match *self {
            LossFamily::RidgeLogistic { mu } | LossFamily::Quadratic { mu } => mu,
            _ => 0.0,
        }
    }

    pub fn is_convex(&self) -> bool {
        !matches!(self, LossFamily::SaturatingNonconvex)
    }

    /// Families whose gradient is unbounded on all of space; their `L` only
    /// holds on the declared domain ball.
    pub fn lipschitz_is_local(&self) -> bool {
        matches!(self, LossFamily::RidgeLogistic { mu } | LossFamily::Quadratic { mu } if *mu > 0.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Constants {
    /// `L`
    pub lipschitz: f64,
    /// `beta`
    pub smoothness: f64,
    /// `mu`
    pub strong_convexity: f64,
    /// `gamma`, zero when no gradient-dominance constant is known.
    pub gradient_dominance: f64,
    /// `M`
    pub loss_bound: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossModel {
    pub family: LossFamily,
    pub dim: usize,
    /// `W_max`, radius of the parameter ball.
    pub domain_radius: Option<f64>,
    /// `B`, bound on `||x||_2`.
    pub feature_bound: f64,
    /// Bound on `|y|`; only the quadratic family's constants depend on it.
    pub label_bound: f64,
}

impl LossModel {
    pub fn new(family: LossFamily, dim: usize, domain_radius: f64, feature_bound: f64) -> Self {
        Self { family, dim, domain_radius: Some(domain_radius), feature_bound, label_bound: 1.0 }
    }

    pub fn with_label_bound(mut self, label_bound: f64) -> Self {
        self.label_bound = label_bound;
        self
    }

    fn check(&self, w: &[f64], z: &Sample) -> Result<(), LossError> {
        if w.len() != self.dim {
            return Err(LossError::Shape(format!("weights have dim {}, model has {}", w.len(), self.dim)));
        }
        if z.x.len() != self.dim {
            return Err(LossError::Shape(format!("sample has dim {}, model has {}", z.x.len(), self.dim)));
        }
        Ok(())
    }

    pub fn loss_eval(&self, w: &[f64], z: &Sample) -> Result<f64, LossError> {
        self.check(w, z)?;
        Ok(self.value_unchecked(w, z))
    }

    pub fn loss_grad(&self, w: &[f64], z: &Sample) -> Result<Vec<f64>, LossError> {
        let mut out = vec![0.0; self.dim];
        self.loss_grad_into(w, z, &mut out)?;
        Ok(out)
    }

    /// Writes the gradient into `out` (overwriting it).
    pub fn loss_grad_into(&self, w: &[f64], z: &Sample, out: &mut [f64]) -> Result<(), LossError> {
        self.check(w, z)?;
        if out.len() != self.dim {
            return Err(LossError::Shape(format!("output has dim {}, model has {}", out.len(), self.dim)));
        }
        self.grad_unchecked(w, z, out);
        Ok(())
    }

    fn value_unchecked(&self, w: &[f64], z: &Sample) -> f64 {
        let margin = dot(&z.x, w);
        match self.family {
            LossFamily::Logistic => softplus(-z.y * margin),
            LossFamily::RidgeLogistic { mu } => softplus(-z.y * margin) + 0.5 * mu * dot(w, w),
            LossFamily::Quadratic { mu } => 0.5 * mu * (margin - z.y).powi(2),
            LossFamily::SaturatingNonconvex => {
                let u = margin - z.y;
                u * u / (1.0 + u * u)
            }
        }
    }

    fn grad_unchecked(&self, w: &[f64], z: &Sample, out: &mut [f64]) {
        let margin = dot(&z.x, w);
        let scale = match self.family {
            LossFamily::Logistic | LossFamily::RidgeLogistic { .. } => -z.y * sigmoid(-z.y * margin),
            LossFamily::Quadratic { mu } => mu * (margin - z.y),
            LossFamily::SaturatingNonconvex => {
                let u = margin - z.y;
                let d = 1.0 + u * u;
                2.0 * u / (d * d)
            }
        };
        for (o, xi) in out.iter_mut().zip(&z.x) {
            *o = scale * xi;
        }
        if let LossFamily::RidgeLogistic { mu } = self.family {
            for (o, wi) in out.iter_mut().zip(w) {
                *o += mu * wi;
            }
        }
    }

    pub fn constants(&self) -> Result<Constants, LossError> {
        let radius = self
            .domain_radius
            .ok_or_else(|| LossError::Config("domain_radius (W_max) is not set".into()))?;
        let b = self.feature_bound;
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(LossError::Config(format!("domain_radius must be positive and finite, got {radius}")));
        }
        if !(b > 0.0 && b.is_finite()) {
            return Err(LossError::Config(format!("feature_bound must be positive and finite, got {b}")));
        }
        let mu = self.family.mu();
        if mu < 0.0 || !mu.is_finite() {
            return Err(LossError::Config(format!("mu must be non-negative, got {mu}")));
        }
        let logistic_bound = softplus(b * radius);
        let c = match self.family {
            LossFamily::Logistic => Constants {
                lipschitz: b,
                smoothness: b * b / 4.0,
                strong_convexity: 0.0,
                gradient_dominance: 0.0,
                loss_bound: logistic_bound,
            },
            LossFamily::RidgeLogistic { mu } => Constants {
                lipschitz: b + mu * radius,
                smoothness: b * b / 4.0 + mu,
                strong_convexity: mu,
                gradient_dominance: mu / 2.0,
                loss_bound: logistic_bound + mu * radius * radius / 2.0,
            },
            LossFamily::Quadratic { mu } => {
                let reach = b * radius + self.label_bound;
                Constants {
                    lipschitz: mu * b * reach,
                    smoothness: mu * b * b,
                    strong_convexity: mu,
                    gradient_dominance: mu / 2.0,
                    loss_bound: 0.5 * mu * reach * reach,
                }
            }
            LossFamily::SaturatingNonconvex => Constants {
                lipschitz: SATURATING_SLOPE * b,
                // |phi''(u)| = |2 - 6u^2| / (1 + u^2)^3 peaks at u = 0
                smoothness: 2.0 * b * b,
                strong_convexity: 0.0,
                gradient_dominance: 0.0,
                loss_bound: 1.0,
            },
        };
        Ok(c)
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// `log(1 + exp(a))` without overflow.
pub fn softplus(a: f64) -> f64 {
    if a > 0.0 {
        a + (-a).exp().ln_1p()
    } else {
        a.exp().ln_1p()
    }
}

pub fn sigmoid(a: f64) -> f64 {
    if a >= 0.0 {
        1.0 / (1.0 + (-a).exp())
    } else {
        let e = a.exp();
        e / (1.0 + e)
    }
}

/// Euclidean projection onto the ball of radius `radius`.
pub fn project(w: &[f64], radius: f64) -> Vec<f64> {
    let mut out = w.to_vec();
    project_in_place(&mut out, radius);
    out
}

pub fn project_in_place(w: &mut [f64], radius: f64) {
    let n = norm(w);
    if n > radius {
        let s = radius / n;
        w.iter_mut().for_each(|v| *v *= s);
    }
}

/// Training set split into `m` node-local shards of `n` samples each.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionedDataset {
    m: usize,
    n: usize,
    dim: usize,
    feature_bound: f64,
    /// Row-major: node `r`, sample `k` lives at `r * n + k`.
    samples: Vec<Sample>,
    seed: Option<u64>,
}

impl PartitionedDataset {
    /// Builds a dataset from per-node shards, enforcing `||x|| <= feature_bound`.
    pub fn new(shards: Vec<Vec<Sample>>, feature_bound: f64, seed: Option<u64>) -> Result<Self, LossError> {
        let m = shards.len();
        if m == 0 {
            return Err(LossError::Shape("dataset needs at least one node".into()));
        }
        let n = shards[0].len();
        if n == 0 {
            return Err(LossError::Shape("dataset needs at least one sample per node".into()));
        }
        if let Some(r) = shards.iter().position(|s| s.len() != n) {
            return Err(LossError::Shape(format!("node {r} has {} samples, expected {n}", shards[r].len())));
        }
        let dim = shards[0][0].x.len();
        let samples: Vec<Sample> = shards.into_iter().flatten().collect();
        for (idx, s) in samples.iter().enumerate() {
            if s.x.len() != dim {
                return Err(LossError::Shape(format!("sample ({}, {}) has dim {}, expected {dim}", idx / n, idx % n, s.x.len())));
            }
            check_feature_bound(s, feature_bound)
                .map_err(|e| LossError::Validation(format!("sample ({}, {}): {e}", idx / n, idx % n)))?;
        }
        Ok(Self { m, n, dim, feature_bound, samples, seed })
    }

    pub fn m(&self) -> usize {
        self.m
    }
    pub fn n(&self) -> usize {
        self.n
    }
    pub fn dim(&self) -> usize {
        self.dim
    }
    pub fn feature_bound(&self) -> f64 {
        self.feature_bound
    }
    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    pub fn get(&self, r: usize, k: usize) -> &Sample {
        &self.samples[r * self.n + k]
    }

    pub fn node(&self, r: usize) -> &[Sample] {
        &self.samples[r * self.n..(r + 1) * self.n]
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    /// Copy with position `(r, k)` replaced; the replacement must respect the feature bound.
    pub fn with_replacement(&self, r: usize, k: usize, replacement: Sample) -> Result<Self, LossError> {
        if r >= self.m || k >= self.n {
            return Err(LossError::Shape(format!("position ({r}, {k}) outside {}x{}", self.m, self.n)));
        }
        if replacement.x.len() != self.dim {
            return Err(LossError::Shape(format!("replacement has dim {}, dataset has {}", replacement.x.len(), self.dim)));
        }
        check_feature_bound(&replacement, self.feature_bound).map_err(LossError::Validation)?;
        let mut out = self.clone();
        out.samples[r * self.n + k] = replacement;
        Ok(out)
    }
}

fn check_feature_bound(s: &Sample, bound: f64) -> Result<(), String> {
    let nx = norm(&s.x);
    if !nx.is_finite() || !s.y.is_finite() {
        return Err("non-finite sample".into());
    }
    if nx > bound * (1.0 + FEATURE_TOL) {
        return Err(format!("||x|| = {nx} exceeds feature bound {bound}"));
    }
    Ok(())
}

fn check_dataset(model: &LossModel, data: &PartitionedDataset, w: &[f64]) -> Result<(), LossError> {
    if data.dim() != model.dim {
        return Err(LossError::Shape(format!("dataset dim {} != model dim {}", data.dim(), model.dim)));
    }
    if w.len() != model.dim {
        return Err(LossError::Shape(format!("weights have dim {}, model has {}", w.len(), model.dim)));
    }
    Ok(())
}

/// `R_S(w)`, the mean loss over all `m * n` samples.
pub fn empirical_risk(model: &LossModel, data: &PartitionedDataset, w: &[f64]) -> Result<f64, LossError> {
    check_dataset(model, data, w)?;
    let total: f64 = data.samples().iter().map(|z| model.value_unchecked(w, z)).sum();
    Ok(total / data.samples().len() as f64)
}

/// `R_{S_r}(w)`, the mean loss on node `r`.
pub fn node_risk(model: &LossModel, data: &PartitionedDataset, r: usize, w: &[f64]) -> Result<f64, LossError> {
    check_dataset(model, data, w)?;
    if r >= data.m() {
        return Err(LossError::Shape(format!("node {r} out of range")));
    }
    let total: f64 = data.node(r).iter().map(|z| model.value_unchecked(w, z)).sum();
    Ok(total / data.n() as f64)
}

pub fn empirical_grad(model: &LossModel, data: &PartitionedDataset, w: &[f64]) -> Result<Vec<f64>, LossError> {
    check_dataset(model, data, w)?;
    let mut acc = vec![0.0; model.dim];
    let mut g = vec![0.0; model.dim];
    for z in data.samples() {
        model.grad_unchecked(w, z, &mut g);
        acc.iter_mut().zip(&g).for_each(|(a, gi)| *a += gi);
    }
    let inv = 1.0 / data.samples().len() as f64;
    acc.iter_mut().for_each(|a| *a *= inv);
    Ok(acc)
}

/// Exact `E ||(1/m) sum_i grad f(w; Z_{j(i)}) - grad R_S(w)||^2` over independent
/// uniform per-node draws, i.e. `(1/m^2) sum_i Var_k[grad f(w; Z_{k(i)})]`.
pub fn exact_variance(model: &LossModel, data: &PartitionedDataset, w: &[f64]) -> Result<f64, LossError> {
    check_dataset(model, data, w)?;
    let (m, n, dim) = (data.m(), data.n(), model.dim);
    let mut grads = vec![0.0; n * dim];
    let mut total = 0.0;
    for r in 0..m {
        let mut mean = vec![0.0; dim];
        for (k, z) in data.node(r).iter().enumerate() {
            let g = &mut grads[k * dim..(k + 1) * dim];
            model.grad_unchecked(w, z, g);
            mean.iter_mut().zip(g.iter()).for_each(|(a, gi)| *a += gi);
        }
        mean.iter_mut().for_each(|a| *a /= n as f64);
        let var: f64 = grads
            .chunks_exact(dim)
            .map(|g| g.iter().zip(&mean).map(|(gi, mi)| (gi - mi).powi(2)).sum::<f64>())
            .sum::<f64>()
            / n as f64;
        total += var;
    }
    Ok(total / (m * m) as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Minimizer {
    pub weights: Vec<f64>,
    pub risk: f64,
    pub grad_norm: f64,
    pub iterations: usize,
}

/// Full-batch gradient descent with backtracking until `||grad R_S|| <= tol`.
///
/// The line search starts from twice the last accepted step and halves until
/// the Armijo condition holds; any step at or below `1 / beta` is accepted
/// outright since it guarantees descent on a `beta`-smooth objective.
pub fn minimizer_oracle(model: &LossModel, data: &PartitionedDataset, tol: f64) -> Result<Minimizer, LossError> {
    if !model.family.is_convex() {
        return Err(LossError::Unsupported(format!(
            "minimizer oracle requires a convex family, got {}",
            model.family.name()
        )));
    }
    let beta = model.constants()?.smoothness;
    let floor = 1.0 / beta;
    let mut w = vec![0.0; model.dim];
    let mut risk = empirical_risk(model, data, &w)?;
    let mut grad = empirical_grad(model, data, &w)?;
    let mut step = floor;
    for it in 0..MINIMIZER_MAX_ITER {
        let gn2 = dot(&grad, &grad);
        if gn2.sqrt() <= tol {
            return Ok(Minimizer { weights: w, risk, grad_norm: gn2.sqrt(), iterations: it });
        }
        step *= 2.0;
        loop {
            let cand: Vec<f64> = w.iter().zip(&grad).map(|(wi, gi)| wi - step * gi).collect();
            let cand_risk = empirical_risk(model, data, &cand)?;
            if step <= floor || cand_risk <= risk - 0.5 * step * gn2 {
                w = cand;
                risk = cand_risk;
                break;
            }
            step = (step * 0.5).max(floor);
        }
        grad = empirical_grad(model, data, &w)?;
    }
    Err(LossError::Convergence { iterations: MINIMIZER_MAX_ITER, grad_norm: norm(&grad) })
}

/// Additive slack for the gradient-dominance check.
pub const PL_SLACK: f64 = 1e-9;

/// `R_S(w) - R_S(w*) <= ||grad R_S(w)||^2 / (4 gamma)` within [`PL_SLACK`].
pub fn pl_check(
    model: &LossModel,
    data: &PartitionedDataset,
    w: &[f64],
    gamma: f64,
    w_star_risk: f64,
) -> Result<bool, LossError> {
    let gap = empirical_risk(model, data, w)? - w_star_risk;
    let g = empirical_grad(model, data, w)?;
    Ok(gap <= dot(&g, &g) / (4.0 * gamma) + PL_SLACK)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn scalar(y: f64) -> Sample {
        Sample::new(vec![1.0], y)
    }

    fn two_point() -> (LossModel, PartitionedDataset) {
        let model = LossModel::new(LossFamily::Quadratic { mu: 1.0 }, 1, 4.0, 1.0).with_label_bound(2.0);
        let data = PartitionedDataset::new(vec![vec![scalar(0.0), scalar(2.0)]], 1.0, None).unwrap();
        (model, data)
    }

    #[test]
    fn logistic_at_origin() {
        let model = LossModel::new(LossFamily::Logistic, 2, 2.0, 1.0);
        let z = Sample::new(vec![0.6, -0.8], -1.0);
        assert_abs_diff_eq!(model.loss_eval(&[0.0, 0.0], &z).unwrap(), std::f64::consts::LN_2, epsilon = 1e-15);
        let g = model.loss_grad(&[0.0, 0.0], &z).unwrap();
        assert_abs_diff_eq!(g[0], 0.3, epsilon = 1e-15);
        assert_abs_diff_eq!(g[1], -0.4, epsilon = 1e-15);
    }

    #[test]
    fn quadratic_zero_at_target() {
        let (model, _) = two_point();
        assert_eq!(model.loss_eval(&[2.0], &scalar(2.0)).unwrap(), 0.0);
    }

    #[test]
    fn saturating_limits() {
        let model = LossModel::new(LossFamily::SaturatingNonconvex, 1, 1.0, 1.0);
        let mut last = 0.0;
        for u in [1.0, 10.0, 100.0, 1e4] {
            let v = model.loss_eval(&[u], &scalar(0.0)).unwrap();
            assert!(v > last && v < 1.0);
            last = v;
        }
        assert!(1.0 - last < 1e-7);
        assert_eq!(model.loss_grad(&[0.5], &scalar(0.5)).unwrap(), vec![0.0]);
    }

    #[test]
    fn shape_errors() {
        let model = LossModel::new(LossFamily::Logistic, 2, 1.0, 1.0);
        assert!(matches!(model.loss_eval(&[0.0], &Sample::new(vec![0.0, 0.0], 1.0)), Err(LossError::Shape(_))));
        assert!(matches!(model.loss_grad(&[0.0, 0.0], &Sample::new(vec![0.0], 1.0)), Err(LossError::Shape(_))));
    }

    #[test]
    fn logistic_constants() {
        let c = LossModel::new(LossFamily::Logistic, 3, 2.0, 1.0).constants().unwrap();
        assert_eq!(c.lipschitz, 1.0);
        assert_eq!(c.smoothness, 0.25);
        assert_abs_diff_eq!(c.loss_bound, 2.126_928_011_042_972_5, epsilon = 1e-12);
        let ridge0 = LossModel::new(LossFamily::RidgeLogistic { mu: 0.0 }, 3, 2.0, 1.0).constants().unwrap();
        assert_eq!(ridge0.lipschitz, c.lipschitz);
        assert_eq!(ridge0.smoothness, c.smoothness);
        assert_eq!(ridge0.loss_bound, c.loss_bound);
    }

    #[test]
    fn saturating_lipschitz() {
        let c = LossModel::new(LossFamily::SaturatingNonconvex, 1, 1.0, 1.0).constants().unwrap();
        assert_abs_diff_eq!(c.lipschitz, 3.0 * 3f64.sqrt() / 8.0, epsilon = 1e-15);
        assert_eq!(c.loss_bound, 1.0);
    }

    #[test]
    fn constants_need_domain() {
        let mut model = LossModel::new(LossFamily::Logistic, 1, 1.0, 1.0);
        model.domain_radius = None;
        assert!(matches!(model.constants(), Err(LossError::Config(_))));
    }

    #[test]
    fn projection() {
        let p = project(&[3.0, 4.0], 1.0);
        assert_abs_diff_eq!(p[0], 0.6, epsilon = 1e-15);
        assert_abs_diff_eq!(p[1], 0.8, epsilon = 1e-15);
        assert_eq!(project(&[0.1, 0.2], 1.0), vec![0.1, 0.2]);
        assert_eq!(project(&[0.0, 0.0], 1.0), vec![0.0, 0.0]);
    }

    #[test]
    fn two_point_risk_and_variance() {
        let (model, data) = two_point();
        assert_abs_diff_eq!(empirical_risk(&model, &data, &[1.0]).unwrap(), 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(exact_variance(&model, &data, &[1.0]).unwrap(), 1.0, epsilon = 1e-15);
        let min = minimizer_oracle(&model, &data, 1e-10).unwrap();
        assert_abs_diff_eq!(min.weights[0], 1.0, epsilon = 1e-9);
        assert_abs_diff_eq!(min.risk, 0.5, epsilon = 1e-12);
        assert!(min.grad_norm <= 1e-10);
    }

    #[test]
    fn repeated_sample() {
        let model = LossModel::new(LossFamily::Logistic, 2, 1.0, 1.0);
        let z = Sample::new(vec![0.3, 0.4], 1.0);
        let data = PartitionedDataset::new(vec![vec![z.clone(); 3]; 2], 1.0, None).unwrap();
        let w = [0.7, -0.2];
        assert_abs_diff_eq!(
            empirical_risk(&model, &data, &w).unwrap(),
            model.loss_eval(&w, &z).unwrap(),
            epsilon = 1e-15
        );
        assert_eq!(exact_variance(&model, &data, &w).unwrap(), 0.0);
    }

    #[test]
    fn symmetric_ridge_minimizer_is_origin() {
        let model = LossModel::new(LossFamily::RidgeLogistic { mu: 0.1 }, 2, 2.0, 1.0);
        let a = Sample::new(vec![0.5, 0.2], 1.0);
        let b = Sample::new(vec![-0.5, -0.2], 1.0);
        let data = PartitionedDataset::new(vec![vec![a.clone(), Sample::new(a.x.clone(), -1.0)], vec![b.clone(), Sample::new(b.x.clone(), -1.0)]], 1.0, None).unwrap();
        let min = minimizer_oracle(&model, &data, 1e-12).unwrap();
        assert!(norm(&min.weights) < 1e-12);
    }

    #[test]
    fn minimizer_refuses_nonconvex() {
        let model = LossModel::new(LossFamily::SaturatingNonconvex, 1, 1.0, 1.0);
        let data = PartitionedDataset::new(vec![vec![scalar(0.0)]], 1.0, None).unwrap();
        assert!(matches!(minimizer_oracle(&model, &data, 1e-6), Err(LossError::Unsupported(_))));
    }

    #[test]
    fn pl_at_and_away_from_minimizer() {
        let (model, data) = two_point();
        let min = minimizer_oracle(&model, &data, 1e-12).unwrap();
        assert!(pl_check(&model, &data, &min.weights, 0.5, min.risk).unwrap());
        assert!(!pl_check(&model, &data, &[3.0], 0.5e6, min.risk).unwrap());
    }

    #[test]
    fn feature_bound_enforced() {
        let err = PartitionedDataset::new(vec![vec![Sample::new(vec![3.0, 4.0], 1.0)]], 1.0, None).unwrap_err();
        assert!(matches!(err, LossError::Validation(_)));
        let ragged = PartitionedDataset::new(vec![vec![scalar(0.0)], vec![]], 1.0, None).unwrap_err();
        assert!(matches!(ragged, LossError::Shape(_)));
    }
}
