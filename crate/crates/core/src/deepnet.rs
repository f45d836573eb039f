//! Depth-`D` feedforward networks with one activation mixture per hidden layer.
//!
//! `h⁽⁰⁾ = x`, `h⁽ˡ⁾ = σ_{α⁽ˡ⁾}(W⁽ˡ⁾h⁽ˡ⁻¹⁾)` for `ℓ = 1..D`, and `f = W⁽ᴰ⁺¹⁾h⁽ᴰ⁾`.

use rayon::prelude::*;

use crate::activations::{ActivationError, ActivationFamily, HyperPoint, Mixture};
use crate::featmap::SampleSet;
use crate::numcore::{dot, gauss_matrix, norm2, spectral_norm, spectral_norm_sym, DenseMatrix, LinalgError, RngStream};

#[derive(Debug, Clone, thiserror::Error)]
pub enum DeepError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("input has dimension {found}, network expects {expected}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("expected {expected} layer hyperparameters, got {found}")]
    LayerCount { expected: usize, found: usize },
    #[error(transparent)]
    Activation(#[from] ActivationError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// Layer widths `k₀ = d, k₁ … k_D` (the scalar output is implicit) and the
/// variances `c₁ … c_{D+1}` of the Gaussian initialization.
#[derive(Clone, Debug, PartialEq)]
pub struct DeepConfig {
    pub widths: Vec<usize>,
    pub init_variances: Vec<f64>,
    pub c_bar: f64,
    pub seed: RngStream,
}

impl DeepConfig {
    /// `c₁ = c̄` and `c_ℓ = c̄/k_{ℓ−1}` for the remaining layers.
    pub fn new(widths: Vec<usize>, c_bar: f64, seed: RngStream) -> Result<Self, DeepError> {
        if widths.len() < 2 {
            return Err(DeepError::InvalidConfig("need an input width and at least one hidden layer".into()));
        }
        let mut init_variances = vec![c_bar];
        init_variances.extend(widths[1..].iter().map(|&k| c_bar / k.max(1) as f64));
        let cfg = Self {
            widths,
            init_variances,
            c_bar,
            seed,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn depth(&self) -> usize {
        self.widths.len() - 1
    }

    pub fn validate(&self) -> Result<(), DeepError> {
        if self.widths.len() < 2 {
            return Err(DeepError::InvalidConfig("need an input width and at least one hidden layer".into()));
        }
        if self.widths.contains(&0) {
            return Err(DeepError::InvalidConfig("widths must be at least 1".into()));
        }
        if !(self.c_bar > 0.0) || !self.c_bar.is_finite() {
            return Err(DeepError::InvalidConfig("c_bar must be positive".into()));
        }
        if self.init_variances.len() != self.widths.len() {
            return Err(DeepError::InvalidConfig(format!(
                "need {} init variances, got {}",
                self.widths.len(),
                self.init_variances.len()
            )));
        }
        for (l, &c) in self.init_variances.iter().enumerate() {
            let cap = if l == 0 { self.c_bar } else { self.c_bar / self.widths[l] as f64 };
            if !(c > 0.0) || c > cap * (1.0 + 1e-12) {
                return Err(DeepError::InvalidConfig(format!("variance of layer {} must lie in (0, {cap}]", l + 1)));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct DeepState {
    /// `W⁽¹⁾ … W⁽ᴰ⁺¹⁾`; the last one is `1 × k_D`.
    pub weights: Vec<DenseMatrix>,
    alphas: Vec<HyperPoint>,
    mixes: Vec<Mixture>,
}

impl DeepState {
    pub fn depth(&self) -> usize {
        self.weights.len() - 1
    }

    pub fn input_dim(&self) -> usize {
        self.weights[0].cols()
    }

    pub fn alphas(&self) -> &[HyperPoint] {
        &self.alphas
    }

    /// Total number of trainable weights.
    pub fn param_count(&self) -> usize {
        self.weights.iter().map(|w| w.rows() * w.cols()).sum()
    }

    pub fn set_alphas(&mut self, fam: &ActivationFamily, alphas: &[HyperPoint]) -> Result<(), DeepError> {
        if alphas.len() != self.depth() {
            return Err(DeepError::LayerCount {
                expected: self.depth(),
                found: alphas.len(),
            });
        }
        self.mixes = alphas.iter().map(|a| fam.mix(a)).collect::<Result<_, _>>()?;
        self.alphas = alphas.to_vec();
        Ok(())
    }
}

pub fn deep_init(cfg: &DeepConfig, fam: &ActivationFamily, alphas: &[HyperPoint]) -> Result<DeepState, DeepError> {
    cfg.validate()?;
    let d = cfg.depth();
    let mut weights = Vec::with_capacity(d + 1);
    for l in 0..=d {
        let rows = if l == d { 1 } else { cfg.widths[l + 1] };
        let std = cfg.init_variances[l].sqrt();
        weights.push(gauss_matrix(cfg.seed.derive(l as u64), rows, cfg.widths[l], std)?);
    }
    let mut st = DeepState {
        weights,
        alphas: Vec::new(),
        mixes: Vec::new(),
    };
    st.set_alphas(fam, alphas)?;
    Ok(st)
}

/// Output plus the intermediate quantities needed for the Jacobian.
#[derive(Clone, Debug, PartialEq)]
pub struct ForwardCache {
    pub output: f64,
    /// `h⁽⁰⁾ = x, h⁽¹⁾ … h⁽ᴰ⁾`.
    pub hidden: Vec<Vec<f64>>,
    /// `σ′_{α⁽ˡ⁾}(W⁽ˡ⁾h⁽ˡ⁻¹⁾)` for `ℓ = 1..D`.
    pub slopes: Vec<Vec<f64>>,
}

pub fn deep_forward(st: &DeepState, x: &[f64]) -> Result<ForwardCache, DeepError> {
    if x.len() != st.input_dim() {
        return Err(DeepError::DimensionMismatch {
            expected: st.input_dim(),
            found: x.len(),
        });
    }
    let d = st.depth();
    let mut hidden = Vec::with_capacity(d + 1);
    let mut slopes = Vec::with_capacity(d);
    hidden.push(x.to_vec());
    for l in 0..d {
        let w = &st.weights[l];
        let prev = &hidden[l];
        let mut h = Vec::with_capacity(w.rows());
        let mut s = Vec::with_capacity(w.rows());
        for r in 0..w.rows() {
            let (v, dv) = st.mixes[l].value_and_first(dot(w.row(r), prev));
            h.push(v);
            s.push(dv);
        }
        hidden.push(h);
        slopes.push(s);
    }
    let output = dot(st.weights[d].row(0), &hidden[d]);
    Ok(ForwardCache { output, hidden, slopes })
}

/// `δ⁽ˡ⁾ = ∂f/∂(W⁽ˡ⁾h⁽ˡ⁻¹⁾)` for `ℓ = 1..D+1` (the last one is the scalar 1).
fn backward(st: &DeepState, cache: &ForwardCache) -> Vec<Vec<f64>> {
    let d = st.depth();
    let mut deltas = vec![Vec::new(); d + 1];
    deltas[d] = vec![1.0];
    for l in (0..d).rev() {
        let next = &st.weights[l + 1];
        let up = next.tr_matvec(&deltas[l + 1]).expect("chained widths");
        deltas[l] = up.iter().zip(&cache.slopes[l]).map(|(u, s)| u * s).collect();
    }
    deltas
}

/// Gradient of the output with respect to every weight matrix.
pub fn deep_param_gradient(st: &DeepState, x: &[f64]) -> Result<Vec<DenseMatrix>, DeepError> {
    let cache = deep_forward(st, x)?;
    let deltas = backward(st, &cache);
    Ok(deltas
        .iter()
        .zip(&cache.hidden)
        .map(|(delta, h)| DenseMatrix::from_fn(delta.len(), h.len(), |r, c| delta[r] * h[c]))
        .collect())
}

/// `K̂ᵢⱼ = Σ_ℓ (δᵢ⁽ˡ⁾·δⱼ⁽ˡ⁾)(hᵢ⁽ˡ⁻¹⁾·hⱼ⁽ˡ⁻¹⁾)`, i.e. `JJᵀ` over all weights, without forming `J`.
pub fn deep_jacobian_gram(st: &DeepState, data: &SampleSet) -> Result<DenseMatrix, DeepError> {
    let n = data.len();
    let per_sample: Vec<(Vec<Vec<f64>>, Vec<Vec<f64>>)> = (0..n)
        .into_par_iter()
        .map(|i| {
            let cache = deep_forward(st, data.input(i))?;
            let deltas = backward(st, &cache);
            Ok((deltas, cache.hidden))
        })
        .collect::<Result<_, DeepError>>()?;
    let mut k = DenseMatrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let (di, hi) = &per_sample[i];
            let (dj, hj) = &per_sample[j];
            let v: f64 = (0..di.len()).map(|l| dot(&di[l], &dj[l]) * dot(&hi[l], &hj[l])).sum();
            k.set(i, j, v);
            k.set(j, i, v);
        }
    }
    Ok(k)
}

/// `4n√h (D·B^D·M̄·N)³`, with `M̄ = Πᵢ (‖W⁽ⁱ⁾‖ + max(1, √(kᵢ/kᵢ₋₁)))`,
/// `N = max(√d, maxᵢ‖xᵢ‖)` and `B = max(1, B_fam, maxⱼ|σⱼ(0)|)`.
pub fn gram_lipschitz_bound(st: &DeepState, fam: &ActivationFamily, data: &SampleSet) -> f64 {
    let d = st.depth();
    let mut m_bar = 1.0;
    for w in &st.weights {
        let ratio = (w.rows() as f64 / w.cols() as f64).sqrt();
        m_bar *= spectral_norm(w) + ratio.max(1.0);
    }
    let max_x = (0..data.len()).map(|i| norm2(data.input(i))).fold(0.0, f64::max);
    let big_n = (st.input_dim() as f64).sqrt().max(max_x);
    let b = 1f64.max(fam.bound_b()).max(fam.max_abs_at_zero());
    let inner = d as f64 * b.powi(d as i32) * m_bar * big_n;
    4.0 * data.len() as f64 * (fam.len() as f64).sqrt() * inner.powi(3)
}

#[derive(Clone, Debug, PartialEq)]
pub struct GramProbeRow {
    pub depth: usize,
    pub trial: usize,
    pub distance: f64,
    /// `‖K̂_α − K̂_ᾱ‖ / ‖α − ᾱ‖`.
    pub measured: f64,
    pub bound: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GramProbeReport {
    pub rows: Vec<GramProbeRow>,
    /// Least-squares slope of `ln(mean measured)` against depth.
    pub log_slope: f64,
    pub violations: usize,
}

/// Random point with non-negative entries and `‖α‖₁ ≤ 0.9`, leaving room for perturbations.
fn interior_point(cur: &mut crate::numcore::Cursor, h: usize) -> Vec<f64> {
    let e: Vec<f64> = (0..h).map(|_| -(1.0 - cur.next_f64()).ln()).collect();
    let s: f64 = e.iter().sum();
    let scale = 0.1 + 0.8 * cur.next_f64();
    e.iter().map(|v| v / s * scale).collect()
}

/// For every depth, measures the gram's sensitivity to `α` along random
/// directions of length `distance` and compares it to [`gram_lipschitz_bound`].
///
/// Hidden layers all have width `width`; weights are drawn once per depth.
pub fn gram_lipschitz_probe(
    width: usize,
    c_bar: f64,
    seed: RngStream,
    fam: &ActivationFamily,
    data: &SampleSet,
    depths: &[usize],
    trials: usize,
    distance: f64,
) -> Result<GramProbeReport, DeepError> {
    if !(distance >= 1e-6) {
        return Err(DeepError::InvalidConfig("perturbation distance must be at least 1e-6".into()));
    }
    let h = fam.len();
    let mut rows = Vec::new();
    for &depth in depths {
        let mut widths = vec![data.dim()];
        widths.extend(std::iter::repeat_n(width, depth));
        let cfg = DeepConfig::new(widths, c_bar, seed.derive(depth as u64))?;
        let start: Vec<HyperPoint> = (0..depth).map(|_| HyperPoint::new(vec![1.0 / h as f64; h])).collect::<Result<_, _>>()?;
        let base = deep_init(&cfg, fam, &start)?;
        let bound = gram_lipschitz_bound(&base, fam, data);
        let results: Vec<Result<GramProbeRow, DeepError>> = (0..trials)
            .into_par_iter()
            .map(|trial| {
                let mut cur = seed.derive_named("probe").derive(depth as u64).derive(trial as u64).cursor();
                let a: Vec<Vec<f64>> = (0..depth).map(|_| interior_point(&mut cur, h)).collect();
                let mut dir = vec![0.0; depth * h];
                cur.fill_gaussian(&mut dir, 1.0);
                let dn = norm2(&dir);
                let to_points = |shift: f64| -> Result<Vec<HyperPoint>, DeepError> {
                    (0..depth)
                        .map(|l| {
                            let v = (0..h).map(|j| a[l][j] + shift * dir[l * h + j] / dn).collect();
                            Ok(HyperPoint::new(v)?)
                        })
                        .collect()
                };
                let mut s1 = base.clone();
                s1.set_alphas(fam, &to_points(0.0)?)?;
                let mut s2 = base.clone();
                s2.set_alphas(fam, &to_points(distance)?)?;
                let k1 = deep_jacobian_gram(&s1, data)?;
                let k2 = deep_jacobian_gram(&s2, data)?;
                let diff = spectral_norm_sym(&k1.sub(&k2)?)?;
                Ok(GramProbeRow {
                    depth,
                    trial,
                    distance,
                    measured: diff / distance,
                    bound,
                })
            })
            .collect();
        for r in results {
            rows.push(r?);
        }
    }
    let violations = rows.iter().filter(|r| r.measured > r.bound).count();
    let points: Vec<(f64, f64)> = depths
        .iter()
        .map(|&dp| {
            let sel: Vec<f64> = rows.iter().filter(|r| r.depth == dp).map(|r| r.measured).collect();
            (dp as f64, (sel.iter().sum::<f64>() / sel.len().max(1) as f64).ln())
        })
        .collect();
    Ok(GramProbeReport {
        rows,
        log_slope: ls_slope(&points),
        violations,
    })
}

/// Least-squares slope of `y` on `x`.
pub fn ls_slope(points: &[(f64, f64)]) -> f64 {
    let n = points.len() as f64;
    if points.len() < 2 {
        return f64::NAN;
    }
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = points.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    sxy / sxx
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::activations::BaseActivation;
    use crate::featmap::sphere_points;

    fn linear() -> ActivationFamily {
        ActivationFamily::new("linear", vec![BaseActivation::Linear]).unwrap()
    }

    #[test]
    fn default_variances_follow_fan_in() {
        let cfg = DeepConfig::new(vec![3, 4, 5], 2.0, RngStream::new(0, 0)).unwrap();
        assert_eq!(cfg.init_variances, vec![2.0, 0.5, 0.4]);
        let mut bad = cfg.clone();
        bad.init_variances[1] = 1.0;
        assert!(bad.validate().is_err());
    }

    #[test]
    fn linear_net_is_matrix_product() {
        let cfg = DeepConfig::new(vec![3, 4, 2], 1.0, RngStream::new(1, 0)).unwrap();
        let one = HyperPoint::new(vec![1.0]).unwrap();
        let st = deep_init(&cfg, &linear(), &[one.clone(), one]).unwrap();
        let x = [0.3, -0.1, 0.7];
        let prod = st.weights[2].matmul(&st.weights[1]).unwrap().matmul(&st.weights[0]).unwrap();
        let expect = prod.matvec(&x).unwrap()[0];
        assert!((deep_forward(&st, &x).unwrap().output - expect).abs() < 1e-14);
    }

    #[test]
    fn zero_input_with_odd_activation() {
        let fam = ActivationFamily::new("tanh", vec![BaseActivation::Tanh]).unwrap();
        let cfg = DeepConfig::new(vec![2, 3, 3], 1.0, RngStream::new(1, 1)).unwrap();
        let a = HyperPoint::new(vec![0.7]).unwrap();
        let st = deep_init(&cfg, &fam, &[a.clone(), a]).unwrap();
        assert_eq!(deep_forward(&st, &[0.0, 0.0]).unwrap().output, 0.0);
    }

    #[test]
    fn wrong_layer_count() {
        let cfg = DeepConfig::new(vec![2, 3, 3], 1.0, RngStream::new(1, 1)).unwrap();
        let a = HyperPoint::new(vec![0.7]).unwrap();
        assert!(matches!(deep_init(&cfg, &linear(), &[a]), Err(DeepError::LayerCount { .. })));
    }

    #[test]
    fn gram_is_symmetric_psd() {
        let fam = ActivationFamily::by_name("smooth4").unwrap();
        let cfg = DeepConfig::new(vec![3, 6, 5], 1.0, RngStream::new(4, 4)).unwrap();
        let a = HyperPoint::new(vec![0.2, 0.3, 0.1, 0.4]).unwrap();
        let st = deep_init(&cfg, &fam, &[a.clone(), a]).unwrap();
        let data = SampleSet::new(sphere_points(RngStream::new(4, 5), 6, 3), vec![0.0; 6]).unwrap();
        let k = deep_jacobian_gram(&st, &data).unwrap();
        assert!(k.is_symmetric(1e-12));
        let min = crate::numcore::min_eigenvalue(&k).unwrap();
        assert!(min >= -1e-10 * k.trace() / 6.0);
    }

    #[test]
    fn slope_of_line() {
        assert!((ls_slope(&[(1.0, 2.0), (2.0, 4.0), (3.0, 6.0)]) - 2.0).abs() < 1e-15);
    }
}
