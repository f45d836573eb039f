//! One-hidden-layer networks `f(x) = vᵀσ_α(Wx)` with a fixed output layer.

use rayon::prelude::*;

use crate::activations::{ActivationError, ActivationFamily, HyperPoint, Mixture};
use crate::featmap::{sphere_points, SampleSet};
use crate::numcore::{dot, gauss_matrix, min_norm_fit, spectral_norm, DenseMatrix, LinalgError, RngStream};
use crate::tvo::Predictor;

#[derive(Debug, Clone, thiserror::Error)]
pub enum ShallowError {
    #[error("hidden width must be even, got {0}")]
    OddWidth(usize),
    #[error("invalid configuration: {0}")]
    InvalidConfig(&'static str),
    #[error("input has dimension {found}, network expects {expected}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("training loss diverged at step {step}: {loss} (initial {initial})")]
    DivergedLoss { step: usize, loss: f64, initial: f64 },
    #[error(transparent)]
    Activation(#[from] ActivationError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

#[derive(Clone, Debug, PartialEq)]
pub struct ShallowConfig {
    pub k: usize,
    pub d: usize,
    pub c0: f64,
    pub eta: f64,
    pub steps: usize,
    pub seed: RngStream,
}

impl ShallowConfig {
    pub fn validate(&self) -> Result<(), ShallowError> {
        if self.k % 2 == 1 {
            return Err(ShallowError::OddWidth(self.k));
        }
        if self.k == 0 || self.d == 0 {
            return Err(ShallowError::InvalidConfig("k and d must be positive"));
        }
        if !(self.c0 > 0.0) || !self.c0.is_finite() {
            return Err(ShallowError::InvalidConfig("c0 must be positive"));
        }
        if !(self.eta >= 0.0) || !self.eta.is_finite() {
            return Err(ShallowError::InvalidConfig("eta must be non-negative"));
        }
        Ok(())
    }
}

/// `1 / (16 ln n)`, floored at `n = 3` so the logarithm stays above one.
pub fn default_c0(n_train: usize) -> f64 {
    1.0 / (16.0 * (n_train.max(3) as f64).ln())
}

/// Largest step size for which monotone descent is guaranteed: `1/(2c₀B²‖X‖²)`.
pub fn default_eta(c0: f64, bound_b: f64, inputs: &DenseMatrix) -> f64 {
    let xn = spectral_norm(inputs);
    1.0 / (2.0 * c0 * bound_b * bound_b * xn * xn)
}

/// Smallest `T` with `(1 − η·λ_min/8)^T ≤ 1e-4`, capped at `1e5`.
pub fn default_steps(eta: f64, gram_min_eig: f64) -> usize {
    let rate = eta * gram_min_eig / 8.0;
    if !(rate > 0.0) || rate >= 1.0 {
        return if rate >= 1.0 { 1 } else { 100_000 };
    }
    let t = (1e-4f64).ln() / (1.0 - rate).ln();
    (t.ceil() as usize).clamp(1, 100_000)
}

#[derive(Clone, Debug)]
pub struct ShallowState {
    w0: DenseMatrix,
    pub w: DenseMatrix,
    v: Vec<f64>,
    alpha: HyperPoint,
    mix: Mixture,
    c0: f64,
    /// `‖f(W_τ) − y‖²` for `τ = 0..=T` of the last training run.
    pub loss_trace: Vec<f64>,
}

impl ShallowState {
    pub fn w0(&self) -> &DenseMatrix {
        &self.w0
    }

    pub fn v(&self) -> &[f64] {
        &self.v
    }

    pub fn alpha(&self) -> &HyperPoint {
        &self.alpha
    }

    pub fn mixture(&self) -> &Mixture {
        &self.mix
    }

    pub fn c0(&self) -> f64 {
        self.c0
    }

    pub fn k(&self) -> usize {
        self.w.rows()
    }

    pub fn d(&self) -> usize {
        self.w.cols()
    }

    /// Whether the recorded loss trace never increased.
    pub fn is_monotone(&self) -> bool {
        self.loss_trace.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-12) + 1e-300)
    }

    /// `(‖W − W₀‖_F, maxₗ ‖wₗ − w₀ₗ‖)`.
    pub fn weight_movement(&self) -> (f64, f64) {
        let mut frob = 0.0;
        let mut max_row: f64 = 0.0;
        for l in 0..self.k() {
            let s: f64 = self.w.row(l).iter().zip(self.w0.row(l)).map(|(a, b)| (a - b) * (a - b)).sum();
            frob += s;
            max_row = max_row.max(s.sqrt());
        }
        (frob.sqrt(), max_row)
    }

    /// Same network with the current weights reset to `W₀`.
    pub fn reset(&self) -> ShallowState {
        let mut s = self.clone();
        s.w = self.w0.clone();
        s.loss_trace.clear();
        s
    }

    /// Same initialization with a different activation mixture.
    pub fn with_alpha(&self, fam: &ActivationFamily, a: &HyperPoint) -> Result<ShallowState, ShallowError> {
        let mut s = self.reset();
        s.mix = fam.mix(a)?;
        s.alpha = a.clone();
        Ok(s)
    }
}

/// Draws `W₀ ~ N(0, 1)` from the seed and sets `v` to `+√(c0/k)` on the first
/// half of the units and `−√(c0/k)` on the rest.
pub fn init(cfg: &ShallowConfig, fam: &ActivationFamily, a: &HyperPoint) -> Result<ShallowState, ShallowError> {
    cfg.validate()?;
    let mix = fam.mix(a)?;
    let w0 = gauss_matrix(cfg.seed, cfg.k, cfg.d, 1.0)?;
    let s = (cfg.c0 / cfg.k as f64).sqrt();
    let v = (0..cfg.k).map(|l| if l < cfg.k / 2 { s } else { -s }).collect();
    Ok(ShallowState {
        w: w0.clone(),
        w0,
        v,
        alpha: a.clone(),
        mix,
        c0: cfg.c0,
        loss_trace: Vec::new(),
    })
}

fn check_dim(st: &ShallowState, d: usize) -> Result<(), ShallowError> {
    if d != st.d() {
        return Err(ShallowError::DimensionMismatch {
            expected: st.d(),
            found: d,
        });
    }
    Ok(())
}

pub fn forward(st: &ShallowState, x: &[f64]) -> Result<f64, ShallowError> {
    check_dim(st, x.len())?;
    Ok(forward_unchecked(&st.w, &st.v, &st.mix, x))
}

fn forward_unchecked(w: &DenseMatrix, v: &[f64], mix: &Mixture, x: &[f64]) -> f64 {
    let h: Vec<f64> = (0..w.rows()).map(|l| mix.value_and_first(dot(w.row(l), x)).0).collect();
    dot(&h, v)
}

/// Activations `σ_α(w_ℓ·xᵢ)` and derivatives `σ′_α(w_ℓ·xᵢ)`, both `n × k`.
fn hidden(w: &DenseMatrix, mix: &Mixture, x: &DenseMatrix) -> (Vec<f64>, Vec<f64>) {
    let (n, k) = (x.rows(), w.rows());
    let mut s = vec![0.0; n * k];
    let mut sp = vec![0.0; n * k];
    for i in 0..n {
        let xi = x.row(i);
        for l in 0..k {
            let (a, b) = mix.value_and_first(dot(w.row(l), xi));
            s[i * k + l] = a;
            sp[i * k + l] = b;
        }
    }
    (s, sp)
}

fn derivatives(w: &DenseMatrix, mix: &Mixture, x: &DenseMatrix) -> Vec<f64> {
    let (n, k) = (x.rows(), w.rows());
    let mut sp = vec![0.0; n * k];
    for i in 0..n {
        let xi = x.row(i);
        for l in 0..k {
            sp[i * k + l] = mix.first(dot(w.row(l), xi));
        }
    }
    sp
}

/// Predictions on every row of `x`.
pub fn predict_all(st: &ShallowState, x: &DenseMatrix) -> Result<Vec<f64>, ShallowError> {
    check_dim(st, x.cols())?;
    Ok((0..x.rows()).map(|i| forward_unchecked(&st.w, &st.v, &st.mix, x.row(i))).collect())
}

/// Gradient of `½‖f(W) − y‖²` with respect to `W`, together with the residual `f − y`.
fn gradient_and_residual(st: &ShallowState, data: &SampleSet) -> (DenseMatrix, Vec<f64>) {
    let x = data.inputs();
    let (n, k, d) = (x.rows(), st.k(), st.d());
    let (s, sp) = hidden(&st.w, &st.mix, x);
    let r: Vec<f64> = (0..n).map(|i| dot(&s[i * k..(i + 1) * k], &st.v) - data.label(i)).collect();
    let mut g = DenseMatrix::zeros(k, d);
    for i in 0..n {
        let xi = x.row(i);
        let ri = r[i];
        for l in 0..k {
            let c = ri * st.v[l] * sp[i * k + l];
            if c != 0.0 {
                crate::numcore::axpy(c, xi, g.row_mut(l));
            }
        }
    }
    (g, r)
}

/// `∇_W ½Σᵢ(f(xᵢ) − yᵢ)²`.
pub fn loss_gradient(st: &ShallowState, data: &SampleSet) -> Result<DenseMatrix, ShallowError> {
    check_dim(st, data.dim())?;
    Ok(gradient_and_residual(st, data).0)
}

/// `½Σᵢ(f(xᵢ) − yᵢ)²`.
pub fn half_loss(st: &ShallowState, data: &SampleSet) -> Result<f64, ShallowError> {
    let p = predict_all(st, data.inputs())?;
    Ok(0.5 * p.iter().zip(data.labels()).map(|(f, y)| (f - y) * (f - y)).sum::<f64>())
}

/// Full-batch gradient descent for `steps` iterations from the current weights.
///
/// `loss_trace` receives `steps + 1` entries. A step size above `1/(2c₀B²‖X‖²)`
/// is allowed but logged.
pub fn gd_train(
    mut st: ShallowState,
    data: &SampleSet,
    eta: f64,
    steps: usize,
    bound_b: f64,
) -> Result<ShallowState, ShallowError> {
    check_dim(&st, data.dim())?;
    if !(eta >= 0.0) || !eta.is_finite() {
        return Err(ShallowError::InvalidConfig("eta must be non-negative"));
    }
    let limit = default_eta(st.c0, bound_b, data.inputs());
    if eta > limit * (1.0 + 1e-12) {
        log::warn!("step size {eta} exceeds the monotone-descent limit {limit}");
    }
    st.loss_trace = Vec::with_capacity(steps + 1);
    let mut initial = f64::NAN;
    for step in 0..=steps {
        let (g, r) = gradient_and_residual(&st, data);
        let loss = dot(&r, &r);
        if step == 0 {
            initial = loss;
        }
        if !loss.is_finite() || loss > 1e6 * initial.max(f64::MIN_POSITIVE) {
            return Err(ShallowError::DivergedLoss { step, loss, initial });
        }
        st.loss_trace.push(loss);
        if step == steps || loss == 0.0 {
            // a zero residual is a fixed point; keep the trace at full length
            st.loss_trace.resize(steps + 1, loss);
            break;
        }
        crate::numcore::axpy(-eta, g.data(), st.w.data_mut());
    }
    Ok(st)
}

/// Jacobian of the predictions with respect to `vec(W)` (row-major), `n × kd`.
pub fn jacobian(st: &ShallowState, data: &SampleSet) -> Result<DenseMatrix, ShallowError> {
    check_dim(st, data.dim())?;
    Ok(jacobian_at(&st.w, &st.v, &st.mix, data.inputs()))
}

fn jacobian_at(w: &DenseMatrix, v: &[f64], mix: &Mixture, x: &DenseMatrix) -> DenseMatrix {
    let (n, k, d) = (x.rows(), w.rows(), w.cols());
    let sp = derivatives(w, mix, x);
    let mut j = DenseMatrix::zeros(n, k * d);
    for i in 0..n {
        let xi = x.row(i);
        let row = j.row_mut(i);
        for l in 0..k {
            let c = v[l] * sp[i * k + l];
            for (o, xv) in row[l * d..(l + 1) * d].iter_mut().zip(xi) {
                *o = c * xv;
            }
        }
    }
    j
}

/// `K̂[i,j] = (Σ_ℓ v_ℓ² σ′(w_ℓ·xᵢ) σ′(w_ℓ·xⱼ)) · (xᵢ·xⱼ)` at the current weights.
pub fn empirical_gram(st: &ShallowState, data: &SampleSet) -> Result<DenseMatrix, ShallowError> {
    check_dim(st, data.dim())?;
    let x = data.inputs();
    let (n, k) = (x.rows(), st.k());
    let sp = derivatives(&st.w, &st.mix, x);
    let mut a = DenseMatrix::zeros(n, k);
    for i in 0..n {
        for (l, o) in a.row_mut(i).iter_mut().enumerate() {
            *o = st.v[l].abs() * sp[i * k + l];
        }
    }
    Ok(hadamard_inputs(a.gram_rows(), x))
}

fn hadamard_inputs(mut g: DenseMatrix, x: &DenseMatrix) -> DenseMatrix {
    let n = x.rows();
    for i in 0..n {
        for j in 0..n {
            let v = g.get(i, j) * dot(x.row(i), x.row(j));
            g.set(i, j, v);
        }
    }
    g
}

/// Monte-Carlo estimate of the tangent kernel with per-entry standard errors.
#[derive(Clone, Debug, PartialEq)]
pub struct NtkEstimate {
    pub mean: DenseMatrix,
    pub std_err: DenseMatrix,
    pub samples: usize,
}

const MC_CHUNK: usize = 1024;

/// `c₀·E_w[σ′_α(w·xᵢ)σ′_α(w·xⱼ)]·(xᵢ·xⱼ)` with `w ~ N(0, I_d)`, averaged over
/// `mc_samples` draws. Draws are split into fixed chunks with independent
/// substreams, so the result does not depend on the thread count.
pub fn ntk_gram_mc(
    fam: &ActivationFamily,
    a: &HyperPoint,
    data: &SampleSet,
    c0: f64,
    mc_samples: usize,
    stream: RngStream,
) -> Result<NtkEstimate, ShallowError> {
    if mc_samples == 0 {
        return Err(ShallowError::InvalidConfig("mc_samples must be at least 1"));
    }
    let mix = fam.mix(a)?;
    let x = data.inputs();
    let (n, d) = (x.rows(), x.cols());
    let chunks = mc_samples.div_ceil(MC_CHUNK);
    let partial: Vec<(Vec<f64>, Vec<f64>)> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let count = MC_CHUNK.min(mc_samples - c * MC_CHUNK);
            let mut cur = stream.derive(c as u64).cursor();
            let mut w = vec![0.0; d];
            let mut sp = vec![0.0; n];
            let mut s1 = vec![0.0; n * n];
            let mut s2 = vec![0.0; n * n];
            for _ in 0..count {
                cur.fill_gaussian(&mut w, 1.0);
                for (i, o) in sp.iter_mut().enumerate() {
                    *o = mix.first(dot(&w, x.row(i)));
                }
                for i in 0..n {
                    for j in i..n {
                        let v = sp[i] * sp[j];
                        s1[i * n + j] += v;
                        s2[i * n + j] += v * v;
                    }
                }
            }
            (s1, s2)
        })
        .collect();
    let mut s1 = vec![0.0; n * n];
    let mut s2 = vec![0.0; n * n];
    for (p1, p2) in &partial {
        crate::numcore::axpy(1.0, p1, &mut s1);
        crate::numcore::axpy(1.0, p2, &mut s2);
    }
    let m = mc_samples as f64;
    let mut mean = DenseMatrix::zeros(n, n);
    let mut se = DenseMatrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let xx = c0 * dot(x.row(i), x.row(j));
            let mu = s1[i * n + j] / m;
            let var = if mc_samples > 1 {
                ((s2[i * n + j] / m - mu * mu) * m / (m - 1.0)).max(0.0)
            } else {
                0.0
            };
            let e = (var / m).sqrt() * xx.abs();
            mean.set(i, j, mu * xx);
            mean.set(j, i, mu * xx);
            se.set(i, j, e);
            se.set(j, i, e);
        }
    }
    Ok(NtkEstimate {
        mean,
        std_err: se,
        samples: mc_samples,
    })
}

/// Least-norm solution of the linearized model `J(W₀)θ ≈ labels` with ridge `lambda`.
///
/// With `offset` the targets are `y − f(W₀)`; without it they are `y`.
pub fn linearized_fit(st: &ShallowState, data: &SampleSet, lambda: f64, offset: bool) -> Result<Vec<f64>, ShallowError> {
    check_dim(st, data.dim())?;
    let x = data.inputs();
    let j = jacobian_at(&st.w0, &st.v, &st.mix, x);
    let labels: Vec<f64> = if offset {
        (0..x.rows())
            .map(|i| data.label(i) - forward_unchecked(&st.w0, &st.v, &st.mix, x.row(i)))
            .collect()
    } else {
        data.labels().to_vec()
    };
    Ok(min_norm_fit(&j, &labels, lambda)?.theta)
}

/// A trained network viewed as a [`Predictor`].
#[derive(Clone, Debug)]
pub struct ShallowModel {
    pub state: ShallowState,
    pub excess_form: Option<f64>,
}

impl Predictor for ShallowModel {
    fn predict(&self, x: &[f64]) -> f64 {
        forward_unchecked(&self.state.w, &self.state.v, &self.state.mix, x)
    }

    fn predict_batch(&self, data: &SampleSet) -> Vec<f64> {
        let x = data.inputs();
        (0..x.rows()).into_par_iter().map(|i| self.predict(x.row(i))).collect()
    }

    fn excess_form(&self) -> Option<f64> {
        self.excess_form
    }
}

/// Binary labels `sign(u·x + 0.3·tanh(u′·x))` on the unit sphere, ties labelled `+1`.
#[derive(Clone, Debug, PartialEq)]
pub struct BinaryTask {
    pub u: Vec<f64>,
    pub u_prime: Vec<f64>,
}

impl BinaryTask {
    pub fn new(d: usize, stream: RngStream) -> Self {
        Self {
            u: crate::numcore::unit_gaussian_vector(stream.derive_named("u"), d),
            u_prime: crate::numcore::unit_gaussian_vector(stream.derive_named("u_prime"), d).iter().map(|v| v * 3.0).collect(),
        }
    }

    pub fn dim(&self) -> usize {
        self.u.len()
    }

    pub fn label(&self, x: &[f64]) -> f64 {
        if dot(&self.u, x) + 0.3 * dot(&self.u_prime, x).tanh() >= 0.0 {
            1.0
        } else {
            -1.0
        }
    }

    pub fn sample(&self, stream: RngStream, n: usize) -> SampleSet {
        let x = sphere_points(stream, n, self.dim());
        let y = (0..n).map(|i| self.label(x.row(i))).collect();
        SampleSet::normalized(x, y).expect("unit rows and ±1 labels")
    }
}
