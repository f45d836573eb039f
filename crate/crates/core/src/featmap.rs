//! Regression on superposed feature maps `φ_α = Σ αᵢ φᵢ`.
//!
//! Fits are done in the dual: `θ_α = Φ_α^T (Φ_αΦ_α^T + λI)^{-1} y`, which is the
//! ridge solution for `λ > 0` and the minimum-norm interpolator for `λ = 0, n ≤ p`.

use std::sync::Arc;

use crate::activations::{ActivationError, HyperPoint};
use crate::numcore::{
    self, dot, min_norm_fit, norm2, spectral_norm, sub_vec, symmetric_eigen, DenseMatrix, LinalgError, RngStream,
};
use crate::tvo::Predictor;

#[derive(Debug, Clone, thiserror::Error)]
pub enum FeatmapError {
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Activation(#[from] ActivationError),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("label {value} at row {index} is outside [-1, 1]")]
    LabelOutOfRange { index: usize, value: f64 },
    #[error("input row {index} has norm {norm}, expected 1")]
    NotNormalized { index: usize, norm: f64 },
    #[error("perturbation direction is zero")]
    DegenerateDirection,
    #[error("perturbed point leaves the hyperparameter domain at eps = {0}")]
    OutsideDomain(f64),
    #[error("invalid argument: {0}")]
    InvalidArgument(&'static str),
}

/// Labeled examples: `inputs` is `n × d`, one example per row.
#[derive(Clone, Debug, PartialEq)]
pub struct SampleSet {
    inputs: DenseMatrix,
    labels: Vec<f64>,
    normalized: bool,
}

impl SampleSet {
    pub fn new(inputs: DenseMatrix, labels: Vec<f64>) -> Result<Self, FeatmapError> {
        if inputs.rows() != labels.len() {
            return Err(FeatmapError::DimensionMismatch(format!(
                "{} inputs but {} labels",
                inputs.rows(),
                labels.len()
            )));
        }
        if let Some((index, &value)) = labels
            .iter()
            .enumerate()
            .find(|(_, y)| !y.is_finite() || y.abs() > 1.0 + 1e-12)
        {
            return Err(FeatmapError::LabelOutOfRange { index, value });
        }
        Ok(Self {
            inputs,
            labels,
            normalized: false,
        })
    }

    /// Like [`SampleSet::new`] but also requires unit-norm input rows.
    pub fn normalized(inputs: DenseMatrix, labels: Vec<f64>) -> Result<Self, FeatmapError> {
        for i in 0..inputs.rows() {
            let norm = norm2(inputs.row(i));
            if (norm - 1.0).abs() > 1e-9 {
                return Err(FeatmapError::NotNormalized { index: i, norm });
            }
        }
        let mut s = Self::new(inputs, labels)?;
        s.normalized = true;
        Ok(s)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.inputs.cols()
    }

    pub fn inputs(&self) -> &DenseMatrix {
        &self.inputs
    }

    pub fn labels(&self) -> &[f64] {
        &self.labels
    }

    pub fn input(&self, i: usize) -> &[f64] {
        self.inputs.row(i)
    }

    pub fn label(&self, i: usize) -> f64 {
        self.labels[i]
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    /// First `n` examples (or all of them if fewer).
    pub fn head(&self, n: usize) -> SampleSet {
        let n = n.min(self.len());
        let d = self.dim();
        SampleSet {
            inputs: DenseMatrix::from_row_major(n, d, self.inputs.data()[..n * d].to_vec())
                .expect("sub-slice of valid matrix"),
            labels: self.labels[..n].to_vec(),
            normalized: self.normalized,
        }
    }
}

/// Draws `n` points uniformly on the unit sphere in `R^d`.
pub fn sphere_points(stream: RngStream, n: usize, d: usize) -> DenseMatrix {
    let mut cur = stream.cursor();
    let mut data = vec![0.0; n * d];
    for row in data.chunks_mut(d) {
        loop {
            cur.fill_gaussian(row, 1.0);
            let nr = norm2(row);
            if nr > 1e-12 {
                row.iter_mut().for_each(|v| *v /= nr);
                break;
            }
        }
    }
    DenseMatrix::from_row_major(n, d, data).expect("finite")
}

type MapFn = dyn Fn(&[f64], usize, &mut [f64]) + Send + Sync;

#[derive(Clone)]
enum FeatureKind {
    RandomTanh { gs: Vec<DenseMatrix> },
    Custom(Arc<MapFn>),
}

/// `h` feature maps `φᵢ : R^d → R^p` with `sup ‖φᵢ(x)‖² ≤ bound_b`.
#[derive(Clone)]
pub struct FeatureFamily {
    h: usize,
    d: usize,
    p: usize,
    bound_b: f64,
    kind: FeatureKind,
}

impl std::fmt::Debug for FeatureFamily {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FeatureFamily")
            .field("h", &self.h)
            .field("d", &self.d)
            .field("p", &self.p)
            .field("bound_b", &self.bound_b)
            .finish_non_exhaustive()
    }
}

impl FeatureFamily {
    /// `φᵢ(x) = tanh(Gᵢ x) / √p` with fixed Gaussian `Gᵢ ∈ R^{p×d}`.
    ///
    /// Every coordinate is bounded by `1/√p`, so `B = 1`.
    pub fn random_tanh(h: usize, d: usize, p: usize, stream: RngStream) -> Self {
        let gs = (0..h)
            .map(|i| numcore::gauss_matrix(stream.derive(i as u64), p, d, 1.0).expect("std > 0"))
            .collect();
        Self {
            h,
            d,
            p,
            bound_b: 1.0,
            kind: FeatureKind::RandomTanh { gs },
        }
    }

    /// Arbitrary maps given as `f(x, i, out)` writing `φᵢ(x)` into `out`.
    pub fn custom(
        h: usize,
        d: usize,
        p: usize,
        bound_b: f64,
        f: impl Fn(&[f64], usize, &mut [f64]) + Send + Sync + 'static,
    ) -> Self {
        Self {
            h,
            d,
            p,
            bound_b,
            kind: FeatureKind::Custom(Arc::new(f)),
        }
    }

    pub fn h(&self) -> usize {
        self.h
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn bound_b(&self) -> f64 {
        self.bound_b
    }

    /// Writes `φᵢ(x)` into `out` (length `p`).
    pub fn eval_map(&self, x: &[f64], i: usize, out: &mut [f64]) {
        match &self.kind {
            FeatureKind::RandomTanh { gs } => {
                let g = &gs[i];
                let scale = 1.0 / (self.p as f64).sqrt();
                for (r, o) in out.iter_mut().enumerate() {
                    *o = dot(g.row(r), x).tanh() * scale;
                }
            }
            FeatureKind::Custom(f) => f(x, i, out),
        }
    }

    /// Writes `φ_α(x) = Σ αᵢ φᵢ(x)` into `out`.
    pub fn eval_mixed(&self, a: &HyperPoint, x: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        let mut buf = vec![0.0; self.p];
        for (i, &w) in a.alpha().iter().enumerate() {
            if w != 0.0 {
                self.eval_map(x, i, &mut buf);
                numcore::axpy(w, &buf, out);
            }
        }
    }

    fn check(&self, a: &HyperPoint, data: &SampleSet) -> Result<(), FeatmapError> {
        if a.len() != self.h {
            return Err(FeatmapError::DimensionMismatch(format!(
                "alpha has {} entries, family has {} maps",
                a.len(),
                self.h
            )));
        }
        if data.dim() != self.d {
            return Err(FeatmapError::DimensionMismatch(format!(
                "inputs have dimension {}, maps expect {}",
                data.dim(),
                self.d
            )));
        }
        Ok(())
    }
}

/// Per-map feature matrices `Φ₁ … Φ_h` of a fixed sample set, so that
/// `Φ_α = Σ αᵢ Φᵢ` can be formed for many `α` without re-evaluating the maps.
#[derive(Clone, Debug)]
pub struct MapMatrices {
    per_map: Vec<DenseMatrix>,
}

impl MapMatrices {
    pub fn new(fam: &FeatureFamily, data: &SampleSet) -> Result<Self, FeatmapError> {
        if data.dim() != fam.d {
            return Err(FeatmapError::DimensionMismatch(format!(
                "inputs have dimension {}, maps expect {}",
                data.dim(),
                fam.d
            )));
        }
        let per_map = (0..fam.h)
            .map(|i| {
                let mut m = DenseMatrix::zeros(data.len(), fam.p);
                for r in 0..data.len() {
                    fam.eval_map(data.input(r), i, m.row_mut(r));
                }
                m
            })
            .collect();
        Ok(Self { per_map })
    }

    pub fn map(&self, i: usize) -> &DenseMatrix {
        &self.per_map[i]
    }

    pub fn combine(&self, a: &HyperPoint) -> DenseMatrix {
        let (n, p) = self.per_map[0].shape();
        let mut out = DenseMatrix::zeros(n, p);
        for (m, &w) in self.per_map.iter().zip(a.alpha()) {
            if w != 0.0 {
                numcore::axpy(w, m.data(), out.data_mut());
            }
        }
        out
    }

    /// Predictions `Φ_α θ`.
    pub fn predict(&self, a: &HyperPoint, theta: &[f64]) -> Vec<f64> {
        let n = self.per_map[0].rows();
        let mut out = vec![0.0; n];
        for (m, &w) in self.per_map.iter().zip(a.alpha()) {
            if w != 0.0 {
                for (r, o) in out.iter_mut().enumerate() {
                    *o += w * dot(m.row(r), theta);
                }
            }
        }
        out
    }
}

/// `Φ_α` with rows `φ_α(xᵢ)`.
pub fn feature_matrix(fam: &FeatureFamily, a: &HyperPoint, data: &SampleSet) -> Result<DenseMatrix, FeatmapError> {
    fam.check(a, data)?;
    let mut m = DenseMatrix::zeros(data.len(), fam.p);
    for r in 0..data.len() {
        fam.eval_mixed(a, data.input(r), m.row_mut(r));
    }
    Ok(m)
}

#[derive(Clone, Debug, PartialEq)]
pub struct FitResult {
    pub theta: Vec<f64>,
    pub alpha: HyperPoint,
    pub lambda: f64,
    /// Smallest Cholesky pivot of `Φ_αΦ_α^T + λI`.
    pub gram_min_eig_proxy: f64,
    /// `yᵀ(Φ_αΦ_α^T + λI)^{-1} y` on the training labels.
    pub quad_form: f64,
    pub n_train: usize,
}

impl FitResult {
    pub fn predict(&self, fam: &FeatureFamily, x: &[f64]) -> f64 {
        let mut buf = vec![0.0; fam.p];
        fam.eval_mixed(&self.alpha, x, &mut buf);
        dot(&buf, &self.theta)
    }
}

pub fn ridge_fit(fam: &FeatureFamily, a: &HyperPoint, data: &SampleSet, lambda: f64) -> Result<FitResult, FeatmapError> {
    let phi = feature_matrix(fam, a, data)?;
    fit_from_matrix(&phi, a, data.labels(), lambda)
}

/// Same as [`ridge_fit`] with a precomputed `Φ_α`.
pub fn fit_from_matrix(phi: &DenseMatrix, a: &HyperPoint, y: &[f64], lambda: f64) -> Result<FitResult, FeatmapError> {
    if lambda == 0.0 && phi.rows() > phi.cols() {
        return Err(FeatmapError::InvalidArgument("ridgeless fit needs n <= p"));
    }
    let sol = min_norm_fit(phi, y, lambda)?;
    Ok(FitResult {
        quad_form: dot(y, &sol.dual),
        theta: sol.theta,
        alpha: a.clone(),
        lambda,
        gram_min_eig_proxy: sol.min_pivot,
        n_train: y.len(),
    })
}

/// A fitted linear model on the superposed features; usable as a [`Predictor`].
#[derive(Clone, Debug)]
pub struct LinearFeatureModel {
    pub family: Arc<FeatureFamily>,
    pub fit: FitResult,
}

impl Predictor for LinearFeatureModel {
    fn predict(&self, x: &[f64]) -> f64 {
        self.fit.predict(&self.family, x)
    }

    fn excess_form(&self) -> Option<f64> {
        Some((self.family.bound_b * self.fit.quad_form.max(0.0) / self.fit.n_train as f64).sqrt())
    }
}

/// `√(B · yᵀ(Φ_αΦ_αᵀ)^{-1} y / n)`.
pub fn excess_risk_form(fam: &FeatureFamily, a: &HyperPoint, data: &SampleSet) -> Result<f64, FeatmapError> {
    let phi = feature_matrix(fam, a, data)?;
    excess_risk_from_matrix(&phi, data.labels(), fam.bound_b)
}

pub fn excess_risk_from_matrix(phi: &DenseMatrix, y: &[f64], bound_b: f64) -> Result<f64, FeatmapError> {
    let sol = min_norm_fit(phi, y, 0.0)?;
    let quad = dot(y, &sol.dual).max(0.0);
    Ok((bound_b * quad / y.len() as f64).sqrt())
}

/// Smallest squared singular value of a wide matrix (`n ≤ p`), from `ΦΦ^T`.
pub fn sigma_min_sq(phi: &DenseMatrix) -> Result<f64, FeatmapError> {
    let (vals, _) = symmetric_eigen(&phi.gram_rows())?;
    Ok(vals.first().copied().unwrap_or(0.0).max(0.0))
}

#[derive(Clone, Debug, PartialEq)]
pub struct LipschitzProbe {
    pub eps: Vec<f64>,
    /// `‖θ_α − θ_{α+ε·u}‖ / ε` with `u` the normalized direction.
    pub ratios: Vec<f64>,
    /// `5R²√(B³n³h) λ₀^{-2} ‖y‖` with `R = 1`.
    pub bound: f64,
    /// `λ + min σ²_min(Φ)` over the base point and all perturbed points.
    pub lambda0: f64,
}

/// Refits at `α + ε·da/‖da‖` for each `ε` and measures how far the solution moves.
pub fn solution_lipschitz_probe(
    fam: &FeatureFamily,
    a: &HyperPoint,
    da: &[f64],
    eps_list: &[f64],
    data: &SampleSet,
    lambda: f64,
) -> Result<LipschitzProbe, FeatmapError> {
    if da.len() != a.len() {
        return Err(FeatmapError::DimensionMismatch("direction length".into()));
    }
    let dn = norm2(da);
    if dn == 0.0 {
        return Err(FeatmapError::DegenerateDirection);
    }
    let u: Vec<f64> = da.iter().map(|v| v / dn).collect();
    let maps = MapMatrices::new(fam, data)?;
    let y = data.labels();
    let phi0 = maps.combine(a);
    let base = fit_from_matrix(&phi0, a, y, lambda)?;
    let mut smin = sigma_min_sq(&phi0)?;
    let mut ratios = Vec::with_capacity(eps_list.len());
    for &eps in eps_list {
        let moved: Vec<f64> = a.alpha().iter().zip(&u).map(|(x, d)| x + eps * d).collect();
        let b = HyperPoint::new(moved).map_err(|_| FeatmapError::OutsideDomain(eps))?;
        let phi = maps.combine(&b);
        smin = smin.min(sigma_min_sq(&phi)?);
        let fit = fit_from_matrix(&phi, &b, y, lambda)?;
        ratios.push(norm2(&sub_vec(&base.theta, &fit.theta)) / eps);
    }
    let lambda0 = lambda + smin;
    let n = data.len() as f64;
    let h = fam.h as f64;
    let bb = fam.bound_b;
    let bound = 5.0 * (bb.powi(3) * n.powi(3) * h).sqrt() / (lambda0 * lambda0) * norm2(y);
    Ok(LipschitzProbe {
        eps: eps_list.to_vec(),
        ratios,
        bound,
        lambda0,
    })
}

/// `5B²‖y‖/λ₀² · ‖X − X̄‖ + 2B‖y‖/λ₀² · |λ − λ̄|`.
pub fn ridge_robustness_bound(b: f64, y_norm: f64, lambda0: f64, dx_norm: f64, dlambda: f64) -> f64 {
    let l2 = lambda0 * lambda0;
    5.0 * b * b * y_norm / l2 * dx_norm + 2.0 * b * y_norm / l2 * dlambda.abs()
}

#[derive(Clone, Debug, PartialEq)]
pub struct RobustnessProbe {
    pub measured: f64,
    pub bound: f64,
    pub lambda0: f64,
    /// Whether `2B‖X − X̄‖ + |λ − λ̄| < λ₀/2`, the regime where the bound applies.
    pub in_regime: bool,
}

/// Compares two ridge(less) fits against [`ridge_robustness_bound`].
pub fn ridge_robustness_probe(
    x: &DenseMatrix,
    x_bar: &DenseMatrix,
    y: &[f64],
    lambda: f64,
    lambda_bar: f64,
) -> Result<RobustnessProbe, FeatmapError> {
    let t1 = min_norm_fit(x, y, lambda)?.theta;
    let t2 = min_norm_fit(x_bar, y, lambda_bar)?.theta;
    let b = spectral_norm(x).max(spectral_norm(x_bar));
    let dx = spectral_norm(&x.sub(x_bar)?);
    let lambda0 = lambda + sigma_min_sq(x)?;
    let dl = lambda - lambda_bar;
    Ok(RobustnessProbe {
        measured: norm2(&sub_vec(&t1, &t2)),
        bound: ridge_robustness_bound(b, norm2(y), lambda0, dx, dl),
        lambda0,
        in_regime: 2.0 * b * dx + dl.abs() < lambda0 / 2.0,
    })
}

/// `(h+1)·log(20R³Bn²λ₀^{-2}(Bn+1))` with `R = 1`; reported for display only.
pub fn effective_dimension_display(h: usize, bound_b: f64, n: usize, lambda0: f64) -> f64 {
    let n = n as f64;
    (h as f64 + 1.0) * (20.0 * bound_b * n * n / (lambda0 * lambda0) * (bound_b * n + 1.0)).ln()
}

/// Synthetic regression task `y = φ_{α⋆}(x)ᵀθ⋆ + ξ` with `x` uniform on the sphere,
/// `‖θ⋆‖ = 0.75` and `ξ ~ U[−noise, noise]`, so that `|y| ≤ 0.75 + noise`.
#[derive(Clone, Debug)]
pub struct PlantedTask {
    pub family: Arc<FeatureFamily>,
    pub alpha_star: HyperPoint,
    pub theta_star: Vec<f64>,
    pub noise: f64,
}

impl PlantedTask {
    pub fn new(family: Arc<FeatureFamily>, alpha_star: HyperPoint, noise: f64, stream: RngStream) -> Result<Self, FeatmapError> {
        if !(0.0..=0.25).contains(&noise) {
            return Err(FeatmapError::InvalidArgument("noise must lie in [0, 0.25]"));
        }
        if alpha_star.len() != family.h {
            return Err(FeatmapError::DimensionMismatch("alpha_star length".into()));
        }
        let mut theta_star = numcore::unit_gaussian_vector(stream, family.p);
        theta_star.iter_mut().for_each(|v| *v *= 0.75);
        Ok(Self {
            family,
            alpha_star,
            theta_star,
            noise,
        })
    }

    pub fn target(&self, x: &[f64]) -> f64 {
        let mut buf = vec![0.0; self.family.p];
        self.family.eval_mixed(&self.alpha_star, x, &mut buf);
        dot(&buf, &self.theta_star)
    }

    pub fn sample(&self, stream: RngStream, n: usize) -> SampleSet {
        let inputs = sphere_points(stream.derive_named("inputs"), n, self.family.d);
        let mut noise = stream.derive_named("noise").cursor();
        let labels = (0..n)
            .map(|i| {
                let xi = (2.0 * noise.next_f64() - 1.0) * self.noise;
                (self.target(inputs.row(i)) + xi).clamp(-1.0, 1.0)
            })
            .collect();
        SampleSet::new(inputs, labels).expect("labels bounded by construction")
    }
}
