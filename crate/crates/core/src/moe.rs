//! Linear mixture-of-experts.
//!
//! Each expert is a linear model over its own subset of feature columns,
//! fitted either by least squares (point prediction) or by pinball-loss
//! minimization at two levels (quantile pair). A linear softmax router over
//! all features is trained afterwards, with the experts frozen, to minimize
//! the squared error of the blended prediction `sum_k w_k(x) f_k(x)`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::aggregation::WeightVector;
use crate::pvalue::ScoreModel;
use crate::score::{ScoreContext, ScoreKind};
use crate::{Error, Result};

/// Ridge added to the diagonal of the least-squares Gram matrix.
pub const OLS_RIDGE: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PinballSettings {
    pub iterations: usize,
    pub step: f64,
}

impl Default for PinballSettings {
    fn default() -> Self {
        Self {
            iterations: 5000,
            step: 1e-2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RouterSettings {
    pub iterations: usize,
}

impl Default for RouterSettings {
    fn default() -> Self {
        Self { iterations: 35 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct TrainingSettings {
    #[serde(default)]
    pub pinball: PinballSettings,
    #[serde(default)]
    pub router: RouterSettings,
}

/// What an expert predicts. Coefficient vectors hold one slope per feature
/// followed by the intercept.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ExpertModel {
    Point {
        coefficients: Vec<f64>,
    },
    Quantiles {
        lo_level: f64,
        hi_level: f64,
        lo_coefficients: Vec<f64>,
        hi_coefficients: Vec<f64>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearExpert {
    pub name: String,
    pub feature_indices: Vec<usize>,
    #[serde(flatten)]
    pub model: ExpertModel,
}

fn linear(coefficients: &[f64], features: &[usize], x: &[f64]) -> f64 {
    let (slopes, intercept) = coefficients.split_at(features.len());
    slopes
        .iter()
        .zip(features)
        .map(|(b, &j)| b * x[j])
        .sum::<f64>()
        + intercept[0]
}

impl LinearExpert {
    pub fn score_kind(&self) -> ScoreKind {
        match self.model {
            ExpertModel::Point { .. } => ScoreKind::AbsResidual,
            ExpertModel::Quantiles { .. } => ScoreKind::Cqr,
        }
    }

    /// Point prediction, or the midpoint of the quantile pair.
    pub fn predict(&self, x: &[f64]) -> f64 {
        self.score_context(x).center()
    }

    /// Raw `(q_lo, q_hi)`; not reordered.
    pub fn predict_quantiles(&self, x: &[f64]) -> Option<(f64, f64)> {
        match &self.model {
            ExpertModel::Point { .. } => None,
            ExpertModel::Quantiles {
                lo_coefficients,
                hi_coefficients,
                ..
            } => Some((
                linear(lo_coefficients, &self.feature_indices, x),
                linear(hi_coefficients, &self.feature_indices, x),
            )),
        }
    }
}

impl ScoreModel for LinearExpert {
    fn score_context(&self, x: &[f64]) -> ScoreContext {
        match &self.model {
            ExpertModel::Point { coefficients } => {
                ScoreContext::point(linear(coefficients, &self.feature_indices, x))
            }
            ExpertModel::Quantiles { .. } => {
                let (lo, hi) = self.predict_quantiles(x).expect("quantile expert");
                ScoreContext::quantiles(lo, hi)
            }
        }
    }
}

/// Rows of `[x_j for j in features] ++ [1]`.
fn design(rows: &[Vec<f64>], features: &[usize]) -> Vec<Vec<f64>> {
    rows.iter()
        .map(|x| {
            features
                .iter()
                .map(|&j| x[j])
                .chain(std::iter::once(1.0))
                .collect()
        })
        .collect()
}

fn check_features(name: &str, rows: &[Vec<f64>], y: &[f64], features: &[usize]) -> Result<()> {
    let fail = |reason: String| Error::Fit {
        expert: name.to_string(),
        reason,
    };
    if rows.len() != y.len() {
        return Err(fail(format!("{} rows but {} labels", rows.len(), y.len())));
    }
    if features.is_empty() {
        return Err(fail("no features assigned".into()));
    }
    if rows.len() < features.len() + 1 {
        return Err(fail(format!(
            "{} rows cannot determine {} coefficients",
            rows.len(),
            features.len() + 1
        )));
    }
    let d = rows.iter().map(Vec::len).min().unwrap_or(0);
    if let Some(&bad) = features.iter().find(|&&j| j >= d) {
        return Err(fail(format!("feature index {bad} out of range for dimension {d}")));
    }
    Ok(())
}

/// Least squares on the given feature columns plus intercept.
pub fn fit_ols(name: &str, rows: &[Vec<f64>], y: &[f64], features: &[usize]) -> Result<Vec<f64>> {
    check_features(name, rows, y, features)?;
    let x = design(rows, features);
    let q = features.len() + 1;
    let a = DMatrix::from_fn(x.len(), q, |i, j| x[i][j]);
    let gram = a.transpose() * &a + DMatrix::identity(q, q) * OLS_RIDGE;
    let rhs = a.transpose() * DVector::from_column_slice(y);
    let beta = gram
        .cholesky()
        .map(|c| c.solve(&rhs))
        .ok_or_else(|| Error::Fit {
            expert: name.to_string(),
            reason: "design matrix is rank deficient".into(),
        })?;
    if beta.iter().any(|b| !b.is_finite()) {
        return Err(Error::Fit {
            expert: name.to_string(),
            reason: "non-finite least-squares coefficients".into(),
        });
    }
    Ok(beta.iter().copied().collect())
}

fn pinball(u: f64, tau: f64) -> f64 {
    if u < 0.0 {
        u * (tau - 1.0)
    } else {
        u * tau
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Mean pinball loss of a linear model on design rows.
pub fn pinball_loss(design_rows: &[Vec<f64>], y: &[f64], beta: &[f64], tau: f64) -> f64 {
    design_rows
        .iter()
        .zip(y)
        .map(|(x, &yi)| pinball(yi - dot(x, beta), tau))
        .sum::<f64>()
        / y.len() as f64
}

/// Linear quantile regression at level `tau`.
///
/// Starts from the least-squares fit with its intercept shifted to the
/// `tau`-quantile of the residuals, runs full-batch subgradient descent with
/// step halving on loss increase, then walks along edges of the piecewise
/// linear loss until no descent direction remains.
pub fn fit_pinball(
    name: &str,
    rows: &[Vec<f64>],
    y: &[f64],
    features: &[usize],
    tau: f64,
    settings: &PinballSettings,
) -> Result<Vec<f64>> {
    if !(tau > 0.0 && tau < 1.0) {
        return Err(Error::Config(format!("quantile level {tau} is outside (0, 1)")));
    }
    let mut beta = fit_ols(name, rows, y, features)?;
    let x = design(rows, features);
    let q = beta.len();

    let mut residuals: Vec<f64> = x.iter().zip(y).map(|(xi, yi)| yi - dot(xi, &beta)).collect();
    residuals.sort_by(f64::total_cmp);
    let k = ((tau * residuals.len() as f64).ceil() as usize).clamp(1, residuals.len()) - 1;
    beta[q - 1] += residuals[k];

    let mut loss = pinball_loss(&x, y, &beta, tau);
    let mut step = settings.step;
    let n = y.len() as f64;
    for _ in 0..settings.iterations {
        if step < 1e-12 {
            break;
        }
        let mut grad = vec![0.0; q];
        for (xi, &yi) in x.iter().zip(y) {
            let r = yi - dot(xi, &beta);
            let g = if r < 0.0 { 1.0 - tau } else { -tau };
            for (gj, xj) in grad.iter_mut().zip(xi) {
                *gj += g * xj / n;
            }
        }
        let candidate: Vec<f64> = beta.iter().zip(&grad).map(|(b, g)| b - step * g).collect();
        let cand_loss = pinball_loss(&x, y, &candidate, tau);
        if cand_loss <= loss {
            beta = candidate;
            loss = cand_loss;
        } else {
            step *= 0.5;
        }
    }

    let polished = descend_to_optimal_vertex(&x, y, tau, &beta);
    if let Some(v) = polished {
        if pinball_loss(&x, y, &v, tau) <= loss {
            beta = v;
        }
    }
    if beta.iter().any(|b| !b.is_finite()) {
        return Err(Error::Fit {
            expert: name.to_string(),
            reason: "non-finite quantile coefficients".into(),
        });
    }
    Ok(beta)
}

/// Greedily picks `q` linearly independent rows, preferring small residuals.
fn independent_rows(x: &[Vec<f64>], order: &[usize], q: usize) -> Option<Vec<usize>> {
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(q);
    let mut chosen = Vec::with_capacity(q);
    for &i in order {
        let mut v = x[i].clone();
        let norm0 = dot(&v, &v).sqrt();
        if norm0 == 0.0 {
            continue;
        }
        for b in &basis {
            let c = dot(&v, b);
            for (vj, bj) in v.iter_mut().zip(b) {
                *vj -= c * bj;
            }
        }
        let norm = dot(&v, &v).sqrt();
        if norm > 1e-9 * norm0 {
            v.iter_mut().for_each(|vj| *vj /= norm);
            basis.push(v);
            chosen.push(i);
            if chosen.len() == q {
                return Some(chosen);
            }
        }
    }
    None
}

/// Exact minimization of the pinball loss by moving between vertices of
/// the loss (points interpolating `q` observations) along descent edges.
fn descend_to_optimal_vertex(x: &[Vec<f64>], y: &[f64], tau: f64, start: &[f64]) -> Option<Vec<f64>> {
    let n = x.len();
    let q = start.len();
    let mut order: Vec<usize> = (0..n).collect();
    let r0: Vec<f64> = x.iter().zip(y).map(|(xi, yi)| yi - dot(xi, start)).collect();
    order.sort_by(|&a, &b| r0[a].abs().total_cmp(&r0[b].abs()).then(a.cmp(&b)));
    let mut basis = independent_rows(x, &order, q)?;

    let solve_basis = |basis: &[usize]| -> Option<(Vec<f64>, DMatrix<f64>)> {
        let a = DMatrix::from_fn(q, q, |i, j| x[basis[i]][j]);
        let inv = a.try_inverse()?;
        let rhs = DVector::from_iterator(q, basis.iter().map(|&i| y[i]));
        let beta = &inv * rhs;
        Some((beta.iter().copied().collect(), inv))
    };

    let scale = 1.0 + y.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let zero = 1e-12 * scale;
    let mut beta = start.to_vec();
    for _ in 0..(10 * n + 100) {
        let (b, inv) = solve_basis(&basis)?;
        beta = b;
        let r: Vec<f64> = x.iter().zip(y).map(|(xi, yi)| yi - dot(xi, &beta)).collect();
        let mut in_basis = vec![false; n];
        basis.iter().for_each(|&i| in_basis[i] = true);

        // most negative directional derivative over the 2q edges
        let mut best: Option<(f64, usize, Vec<f64>, Vec<f64>)> = None;
        for pos in 0..q {
            for sign in [1.0, -1.0] {
                let d: Vec<f64> = (0..q).map(|j| sign * inv[(j, pos)]).collect();
                let a: Vec<f64> = x.iter().map(|xi| dot(xi, &d)).collect();
                // the leaving observation's residual becomes -sign * t
                let mut slope = if sign > 0.0 { 1.0 - tau } else { tau };
                for i in (0..n).filter(|&i| !in_basis[i]) {
                    slope += if r[i] > zero {
                        -a[i] * tau
                    } else if r[i] < -zero {
                        a[i] * (1.0 - tau)
                    } else {
                        pinball(-a[i], tau)
                    };
                }
                if slope < -1e-12 && best.as_ref().is_none_or(|b| slope < b.0) {
                    best = Some((slope, pos, d, a));
                }
            }
        }
        let Some((mut slope, pos, d, a)) = best else {
            return Some(beta);
        };

        let mut crossings: Vec<(f64, usize)> = (0..n)
            .filter(|&i| !in_basis[i] && a[i] != 0.0 && r[i].abs() > zero)
            .filter_map(|i| {
                let t = r[i] / a[i];
                (t > 0.0).then_some((t, i))
            })
            .collect();
        crossings.sort_by(|u, v| u.0.total_cmp(&v.0).then(u.1.cmp(&v.1)));
        let mut entering = None;
        for &(t, i) in &crossings {
            slope += a[i].abs();
            if slope >= 0.0 {
                entering = Some((t, i));
                break;
            }
        }
        let (t, i) = entering?;
        for (bj, dj) in beta.iter_mut().zip(&d) {
            *bj += t * dj;
        }
        basis[pos] = i;
    }
    Some(beta)
}

/// Fits one expert of the requested kind. CQR experts use the level pair
/// `(cqr_alpha / 2, 1 - cqr_alpha / 2)`.
pub fn fit_expert(
    name: &str,
    rows: &[Vec<f64>],
    y: &[f64],
    features: &[usize],
    kind: ScoreKind,
    cqr_alpha: f64,
    settings: &PinballSettings,
) -> Result<LinearExpert> {
    let model = match kind {
        ScoreKind::AbsResidual => ExpertModel::Point {
            coefficients: fit_ols(name, rows, y, features)?,
        },
        ScoreKind::Cqr => {
            let lo_level = cqr_alpha / 2.0;
            let hi_level = 1.0 - cqr_alpha / 2.0;
            ExpertModel::Quantiles {
                lo_level,
                hi_level,
                lo_coefficients: fit_pinball(name, rows, y, features, lo_level, settings)?,
                hi_coefficients: fit_pinball(name, rows, y, features, hi_level, settings)?,
            }
        }
    };
    Ok(LinearExpert {
        name: name.to_string(),
        feature_indices: features.to_vec(),
        model,
    })
}

/// Linear softmax gate: one row of coefficients (slopes then intercept) per
/// expert, over the full feature vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Router {
    pub coefficients: Vec<Vec<f64>>,
}

impl Router {
    pub fn zeros(k: usize, dim: usize) -> Self {
        Self {
            coefficients: vec![vec![0.0; dim + 1]; k],
        }
    }

    pub fn logits(&self, x: &[f64]) -> Vec<f64> {
        self.coefficients
            .iter()
            .map(|c| {
                let (slopes, intercept) = c.split_at(c.len() - 1);
                dot(slopes, x) + intercept[0]
            })
            .collect()
    }

    pub fn route(&self, x: &[f64]) -> WeightVector {
        WeightVector::softmax(&self.logits(x))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MoeModel {
    pub experts: Vec<LinearExpert>,
    pub router: Router,
}

fn blended_sq_error(router: &Router, rows: &[Vec<f64>], y: &[f64], preds: &[Vec<f64>]) -> f64 {
    rows.iter()
        .zip(y)
        .zip(preds)
        .map(|((x, &yi), f)| {
            let w = router.route(x);
            let p: f64 = w.as_slice().iter().zip(f).map(|(w, f)| w * f).sum();
            (yi - p).powi(2)
        })
        .sum::<f64>()
        / y.len() as f64
}

/// Trains the gate of a mixture whose experts are already fitted and stay
/// fixed. Full-batch gradient descent from zero coefficients; the step
/// grows by 10% after an accepted step and halves after a rejected one.
pub fn fit_router(
    experts: &[LinearExpert],
    rows: &[Vec<f64>],
    y: &[f64],
    settings: &RouterSettings,
) -> Result<Router> {
    let k = experts.len();
    let dim = rows.first().map_or(0, Vec::len);
    let mut router = Router::zeros(k, dim);
    if k <= 1 || rows.is_empty() {
        return Ok(router);
    }
    let n = y.len() as f64;
    let preds: Vec<Vec<f64>> = rows
        .iter()
        .map(|x| experts.iter().map(|e| e.predict(x)).collect())
        .collect();

    let mean_sq_norm = rows.iter().map(|x| 1.0 + dot(x, x)).sum::<f64>() / n;
    let spread = preds
        .iter()
        .zip(y)
        .map(|(f, yi)| f.iter().map(|fk| (fk - yi).powi(2)).fold(0.0, f64::max))
        .sum::<f64>()
        / n;
    let mut step = 0.5 / (2.0 * mean_sq_norm * spread.max(1e-12));

    let mut loss = blended_sq_error(&router, rows, y, &preds);
    if !loss.is_finite() {
        return Err(Error::Training { iteration: 0, loss });
    }
    for iteration in 1..=settings.iterations {
        let mut grad = vec![vec![0.0; dim + 1]; k];
        for ((x, &yi), f) in rows.iter().zip(y).zip(&preds) {
            let w = router.route(x);
            let w = w.as_slice();
            let p: f64 = w.iter().zip(f).map(|(w, f)| w * f).sum();
            for (j, g) in grad.iter_mut().enumerate() {
                let dl = 2.0 * (p - yi) * w[j] * (f[j] - p) / n;
                for (gd, xd) in g.iter_mut().zip(x) {
                    *gd += dl * xd;
                }
                g[dim] += dl;
            }
        }
        let candidate = Router {
            coefficients: router
                .coefficients
                .iter()
                .zip(&grad)
                .map(|(c, g)| c.iter().zip(g).map(|(c, g)| c - step * g).collect())
                .collect(),
        };
        let cand_loss = blended_sq_error(&candidate, rows, y, &preds);
        if !cand_loss.is_finite() {
            return Err(Error::Training {
                iteration,
                loss: cand_loss,
            });
        }
        if cand_loss <= loss {
            router = candidate;
            loss = cand_loss;
            step *= 1.1;
        } else {
            step *= 0.5;
            if step < 1e-300 {
                break;
            }
        }
    }
    Ok(router)
}

impl MoeModel {
    /// Fits one expert per feature group, then the router.
    pub fn fit(
        rows: &[Vec<f64>],
        y: &[f64],
        groups: &[(String, Vec<usize>)],
        kind: ScoreKind,
        cqr_alpha: f64,
        settings: &TrainingSettings,
    ) -> Result<Self> {
        if groups.is_empty() {
            return Err(Error::Config("a mixture needs at least one expert".into()));
        }
        let experts = groups
            .iter()
            .map(|(name, features)| {
                fit_expert(name, rows, y, features, kind, cqr_alpha, &settings.pinball)
            })
            .collect::<Result<Vec<_>>>()?;
        let router = fit_router(&experts, rows, y, &settings.router)?;
        Ok(Self { experts, router })
    }

    pub fn k(&self) -> usize {
        self.experts.len()
    }

    pub fn route(&self, x: &[f64]) -> WeightVector {
        self.router.route(x)
    }

    /// `sum_k w_k(x) f_k(x)`.
    pub fn predict(&self, x: &[f64]) -> f64 {
        let w = self.route(x);
        w.as_slice()
            .iter()
            .zip(&self.experts)
            .map(|(w, e)| w * e.predict(x))
            .sum()
    }

    /// Mean squared error of the blended prediction.
    pub fn mse(&self, rows: &[Vec<f64>], y: &[f64]) -> f64 {
        rows.iter()
            .zip(y)
            .map(|(x, yi)| (yi - self.predict(x)).powi(2))
            .sum::<f64>()
            / y.len() as f64
    }
}

/// The blended mixture used as a single black-box predictor: blended point
/// prediction for point experts, blended quantiles for quantile experts.
impl ScoreModel for MoeModel {
    fn score_context(&self, x: &[f64]) -> ScoreContext {
        let w = self.route(x);
        let mut lo = 0.0;
        let mut hi = 0.0;
        let mut mu = 0.0;
        let mut quantiles = false;
        for (w, e) in w.as_slice().iter().zip(&self.experts) {
            match e.predict_quantiles(x) {
                Some((l, h)) => {
                    quantiles = true;
                    lo += w * l;
                    hi += w * h;
                }
                None => mu += w * e.predict(x),
            }
        }
        if quantiles {
            ScoreContext::quantiles(lo, hi)
        } else {
            ScoreContext::point(mu)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rows_1d(xs: &[f64]) -> Vec<Vec<f64>> {
        xs.iter().map(|&x| vec![x]).collect()
    }

    #[test]
    fn ols_exact_line() {
        let beta = fit_ols("e", &rows_1d(&[1.0, 2.0, 3.0]), &[2.0, 4.0, 6.0], &[0]).unwrap();
        assert!((beta[0] - 2.0).abs() < 1e-6);
        assert!(beta[1].abs() < 1e-6);
    }

    #[test]
    fn ols_constant_target() {
        let beta = fit_ols("e", &rows_1d(&[1.0, 2.0, 3.0, 4.0]), &[5.0; 4], &[0]).unwrap();
        assert!(beta[0].abs() < 1e-6);
        assert!((beta[1] - 5.0).abs() < 1e-6);
    }

    #[test]
    fn ols_errors() {
        let rows = rows_1d(&[1.0, 2.0]);
        assert!(matches!(
            fit_ols("tiny", &rows[..1], &[1.0], &[0]),
            Err(Error::Fit { .. })
        ));
        assert!(fit_ols("oob", &rows, &[1.0, 2.0], &[3]).is_err());
        assert!(fit_ols("none", &rows, &[1.0, 2.0], &[]).is_err());
        // a column of NaNs cannot be rescued by the ridge
        let nan_rows = vec![vec![f64::NAN]; 3];
        let err = fit_ols("nan", &nan_rows, &[1.0, 2.0, 3.0], &[0]).unwrap_err();
        assert!(err.to_string().contains("nan"));
    }

    #[test]
    fn ols_survives_duplicate_columns() {
        let rows: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64, i as f64]).collect();
        let y: Vec<f64> = (0..10).map(|i| 3.0 * i as f64 + 1.0).collect();
        let beta = fit_ols("dup", &rows, &y, &[0, 1]).unwrap();
        assert!((beta[0] + beta[1] - 3.0).abs() < 1e-4);
    }

    // Brute-force 1-D minimization over a fine grid.
    fn brute_intercept(y: &[f64], tau: f64) -> f64 {
        let mut best = (f64::INFINITY, 0.0);
        for i in 0..=200_000 {
            let c = -10.0 + i as f64 * 0.001;
            let l: f64 = y.iter().map(|&v| pinball(v - c, tau)).sum();
            if l < best.0 {
                best = (l, c);
            }
        }
        best.1
    }

    #[test]
    fn pinball_median_of_three() {
        assert!((brute_intercept(&[1.0, 2.0, 100.0], 0.5) - 2.0).abs() < 1e-9);
        // intercept-only: no feature columns, so use a zero-slope dummy
        let rows = rows_1d(&[0.0, 0.0, 0.0]);
        let x = design(&rows, &[]);
        let beta = descend_to_optimal_vertex(&x, &[1.0, 2.0, 100.0], 0.5, &[34.0]).unwrap();
        assert!((beta[0] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn pinball_levels_match_brute_force() {
        let y = [0.3, -1.2, 2.5, 0.9, 4.1, -0.7, 1.8];
        let rows: Vec<Vec<f64>> = y.iter().map(|_| vec![0.0]).collect();
        for tau in [0.1, 0.25, 0.5, 0.9] {
            let beta = fit_pinball("q", &rows, &y, &[0], tau, &PinballSettings::default()).unwrap();
            let oracle = brute_intercept(&y, tau);
            let x = design(&rows, &[0]);
            let l_fit = pinball_loss(&x, &y, &beta, tau);
            let l_oracle = pinball_loss(&x, &y, &[0.0, oracle], tau);
            assert!(l_fit <= l_oracle + 1e-9, "tau {tau}: {l_fit} vs {l_oracle}");
        }
    }

    #[test]
    fn pinball_rejects_bad_level() {
        let rows = rows_1d(&[1.0, 2.0, 3.0]);
        assert!(fit_pinball("q", &rows, &[1.0, 2.0, 3.0], &[0], 1.0, &PinballSettings::default()).is_err());
    }

    #[test]
    fn router_single_expert_is_constant() {
        let rows = rows_1d(&[1.0, 2.0, 3.0]);
        let y = [1.0, 2.5, 2.9];
        let e = fit_expert("a", &rows, &y, &[0], ScoreKind::AbsResidual, 0.1, &PinballSettings::default()).unwrap();
        let moe = MoeModel::fit(
            &rows,
            &y,
            &[("a".into(), vec![0])],
            ScoreKind::AbsResidual,
            0.1,
            &TrainingSettings::default(),
        )
        .unwrap();
        assert_eq!(moe.route(&[7.0]).as_slice(), &[1.0]);
        let expert_mse = rows.iter().zip(&y).map(|(x, yi)| (yi - e.predict(x)).powi(2)).sum::<f64>() / 3.0;
        assert!((moe.mse(&rows, &y) - expert_mse).abs() < 1e-15);
    }

    #[test]
    fn zero_router_is_uniform_and_predicts_mean() {
        let experts = vec![
            LinearExpert {
                name: "zero".into(),
                feature_indices: vec![0],
                model: ExpertModel::Point {
                    coefficients: vec![0.0, 0.0],
                },
            },
            LinearExpert {
                name: "ten".into(),
                feature_indices: vec![0],
                model: ExpertModel::Point {
                    coefficients: vec![0.0, 10.0],
                },
            },
        ];
        let moe = MoeModel {
            experts,
            router: Router::zeros(2, 1),
        };
        assert_eq!(moe.route(&[3.0]).as_slice(), &[0.5, 0.5]);
        assert_eq!(moe.predict(&[3.0]), 5.0);

        let tilted = MoeModel {
            router: Router {
                coefficients: vec![vec![0.0, 2f64.ln()], vec![0.0, 0.0]],
            },
            experts: vec![
                LinearExpert {
                    name: "three".into(),
                    feature_indices: vec![0],
                    model: ExpertModel::Point {
                        coefficients: vec![0.0, 3.0],
                    },
                },
                moe.experts[0].clone(),
            ],
        };
        assert!((tilted.predict(&[1.0]) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn quantile_expert_context_swaps_crossing() {
        let e = LinearExpert {
            name: "q".into(),
            feature_indices: vec![0],
            model: ExpertModel::Quantiles {
                lo_level: 0.05,
                hi_level: 0.95,
                lo_coefficients: vec![1.0, 0.0],
                hi_coefficients: vec![-1.0, 0.0],
            },
        };
        assert_eq!(e.score_context(&[2.0]), ScoreContext::quantiles(-2.0, 2.0));
        assert_eq!(e.predict(&[2.0]), 0.0);
        assert_eq!(e.score_kind(), ScoreKind::Cqr);
    }

    #[test]
    fn model_json_round_trip() {
        let e = LinearExpert {
            name: "a".into(),
            feature_indices: vec![0, 2],
            model: ExpertModel::Point {
                coefficients: vec![1.0, -2.0, 0.5],
            },
        };
        let moe = MoeModel {
            experts: vec![e],
            router: Router::zeros(1, 3),
        };
        let text = serde_json::to_string(&moe).unwrap();
        assert!(text.contains(r#""kind":"point""#));
        assert!(text.contains(r#""feature_indices":[0,2]"#));
        let back: MoeModel = serde_json::from_str(&text).unwrap();
        assert_eq!(back, moe);
    }
}
