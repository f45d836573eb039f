//! Rank-1 matrix sensing `y = α⋆ᵀXθ⋆ + σz` with Gaussian `X ∈ R^{h×p}`, learned in
//! two stages: a spectral estimate of `α` from one split, then a least-norm fit of
//! `θ` on the other split with features `Xᵀα̂`.

use rayon::prelude::*;

use crate::numcore::{axpy, dot, min_norm_fit, norm2, top_singular_left, unit_gaussian_vector, DenseMatrix, LinalgError, RngStream};

#[derive(Debug, Clone, thiserror::Error)]
pub enum LowRankError {
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error("asymptotic risk needs p_bar > 1, got {0}")]
    InvalidRegime(f64),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(&'static str),
}

/// Which half of the data a sample belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Split {
    Train,
    Val,
}

impl Split {
    fn tag(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
        }
    }
}

/// Samples per block when streaming the cross moment.
pub const BLOCK: usize = 64;

/// A rank-1 sensing problem whose samples are regenerated on demand.
///
/// Sample `i` of a split is drawn from its own substream, so any sample can be
/// rebuilt without touching the others.
#[derive(Clone, Debug, PartialEq)]
pub struct Rank1Instance {
    pub h: usize,
    pub p: usize,
    /// Samples per split.
    pub n: usize,
    alpha_star: Vec<f64>,
    theta_star: Vec<f64>,
    pub noise_sigma: f64,
    seed: RngStream,
}

impl Rank1Instance {
    /// Unit-norm `α⋆`, `θ⋆` drawn from `seed`.
    pub fn new(h: usize, p: usize, n: usize, noise_sigma: f64, seed: RngStream) -> Result<Self, LowRankError> {
        let alpha_star = unit_gaussian_vector(seed.derive_named("alpha_star"), h);
        let theta_star = unit_gaussian_vector(seed.derive_named("theta_star"), p);
        Self::from_parts(alpha_star, theta_star, n, noise_sigma, seed)
    }

    /// Explicit ground truth; norms are not checked so degenerate cases can be built.
    pub fn from_parts(
        alpha_star: Vec<f64>,
        theta_star: Vec<f64>,
        n: usize,
        noise_sigma: f64,
        seed: RngStream,
    ) -> Result<Self, LowRankError> {
        if alpha_star.is_empty() || theta_star.is_empty() || n == 0 {
            return Err(LowRankError::InvalidArgument("h, p and n must be positive"));
        }
        if !(noise_sigma >= 0.0) || !noise_sigma.is_finite() {
            return Err(LowRankError::InvalidArgument("noise_sigma must be non-negative"));
        }
        Ok(Self {
            h: alpha_star.len(),
            p: theta_star.len(),
            n,
            alpha_star,
            theta_star,
            noise_sigma,
            seed,
        })
    }

    pub fn alpha_star(&self) -> &[f64] {
        &self.alpha_star
    }

    pub fn theta_star(&self) -> &[f64] {
        &self.theta_star
    }

    pub fn seed(&self) -> RngStream {
        self.seed
    }

    /// `p / n`.
    pub fn p_bar(&self) -> f64 {
        self.p as f64 / self.n as f64
    }

    /// `h / n`.
    pub fn h_bar(&self) -> f64 {
        self.h as f64 / self.n as f64
    }

    /// Writes `Xᵢ` (row-major `h × p`) into `x` and returns `yᵢ`.
    pub fn fill_sample(&self, split: Split, i: usize, x: &mut [f64]) -> f64 {
        debug_assert_eq!(x.len(), self.h * self.p);
        let mut cur = self.seed.derive_named(split.tag()).derive(i as u64).cursor();
        cur.fill_gaussian(x, 1.0);
        let mut y = 0.0;
        for (r, &a) in self.alpha_star.iter().enumerate() {
            if a != 0.0 {
                y += a * dot(&x[r * self.p..(r + 1) * self.p], &self.theta_star);
            }
        }
        if self.noise_sigma > 0.0 {
            y += self.noise_sigma * cur.next_gaussian();
        }
        y
    }

    pub fn sample(&self, split: Split, i: usize) -> (DenseMatrix, f64) {
        let mut x = vec![0.0; self.h * self.p];
        let y = self.fill_sample(split, i, &mut x);
        (DenseMatrix::from_row_major(self.h, self.p, x).expect("finite samples"), y)
    }

    pub fn labels(&self, split: Split) -> Vec<f64> {
        let mut x = vec![0.0; self.h * self.p];
        (0..self.n).map(|i| self.fill_sample(split, i, &mut x)).collect()
    }
}

/// `M̂ = (1/n) Σᵢ yᵢXᵢ` over the validation split, in one streaming pass.
///
/// Blocks of [`BLOCK`] samples are summed independently and combined by a fixed
/// binary tree, so the result is bitwise identical for any thread count.
pub fn cross_moment(inst: &Rank1Instance) -> DenseMatrix {
    cross_moment_split(inst, Split::Val)
}

pub fn cross_moment_split(inst: &Rank1Instance, split: Split) -> DenseMatrix {
    let blocks = inst.n.div_ceil(BLOCK);
    let mut sum = reduce_blocks(inst, split, 0, blocks);
    let inv = 1.0 / inst.n as f64;
    sum.iter_mut().for_each(|v| *v *= inv);
    DenseMatrix::from_row_major(inst.h, inst.p, sum).expect("finite moments")
}

fn reduce_blocks(inst: &Rank1Instance, split: Split, lo: usize, hi: usize) -> Vec<f64> {
    if hi - lo == 1 {
        let mut acc = vec![0.0; inst.h * inst.p];
        let mut x = vec![0.0; inst.h * inst.p];
        for i in lo * BLOCK..((lo + 1) * BLOCK).min(inst.n) {
            let y = inst.fill_sample(split, i, &mut x);
            axpy(y, &x, &mut acc);
        }
        return acc;
    }
    let mid = lo + (hi - lo) / 2;
    let (mut a, b) = rayon::join(|| reduce_blocks(inst, split, lo, mid), || reduce_blocks(inst, split, mid, hi));
    axpy(1.0, &b, &mut a);
    a
}

/// Top left singular vector of [`cross_moment`] and its singular value.
pub fn spectral_estimate(inst: &Rank1Instance) -> Result<(Vec<f64>, f64), LowRankError> {
    let m = cross_moment(inst);
    let pair = match top_singular_left(&m, 10_000, 1e-12) {
        Ok(p) => p,
        Err(LinalgError::NoConvergence { best, iterations }) => {
            log::warn!("power iteration stopped after {iterations} steps");
            *best
        }
        Err(e) => return Err(e.into()),
    };
    Ok((pair.u, pair.sigma))
}

/// `|α⋆·α̂|` for unit vectors.
pub fn correlation(alpha_star: &[f64], alpha_hat: &[f64]) -> f64 {
    dot(alpha_star, alpha_hat).abs().min(1.0)
}

/// Least-norm `θ̂` solving `x̂ᵢᵀθ = yᵢ` on the training split, `x̂ᵢ = Xᵢᵀα̂`.
pub fn stage2_erm(inst: &Rank1Instance, alpha_hat: &[f64]) -> Result<Vec<f64>, LowRankError> {
    let (phi, y) = stage2_features(inst, alpha_hat)?;
    Ok(min_norm_fit(&phi, &y, 0.0)?.theta)
}

/// The `n × p` design `[Xᵢᵀα̂]` and labels of the training split.
pub fn stage2_features(inst: &Rank1Instance, alpha_hat: &[f64]) -> Result<(DenseMatrix, Vec<f64>), LowRankError> {
    if alpha_hat.len() != inst.h {
        return Err(LowRankError::DimensionMismatch(format!(
            "alpha_hat has {} entries, instance has h = {}",
            alpha_hat.len(),
            inst.h
        )));
    }
    let (h, p) = (inst.h, inst.p);
    let rows: Vec<(Vec<f64>, f64)> = (0..inst.n)
        .into_par_iter()
        .map_init(
            || vec![0.0; h * p],
            |x, i| {
                let y = inst.fill_sample(Split::Train, i, x);
                let mut f = vec![0.0; p];
                for (r, &a) in alpha_hat.iter().enumerate() {
                    axpy(a, &x[r * p..(r + 1) * p], &mut f);
                }
                (f, y)
            },
        )
        .collect();
    let mut data = Vec::with_capacity(inst.n * p);
    let mut y = Vec::with_capacity(inst.n);
    for (f, yi) in rows {
        data.extend_from_slice(&f);
        y.push(yi);
    }
    Ok((DenseMatrix::from_row_major(inst.n, p, data)?, y))
}

/// `E[(y − α̂ᵀXθ̂)²] = ‖α⋆θ⋆ᵀ − α̂θ̂ᵀ‖_F² + σ²`, computed from inner products.
pub fn exact_population_risk(
    alpha_star: &[f64],
    theta_star: &[f64],
    alpha_hat: &[f64],
    theta_hat: &[f64],
    noise_sigma: f64,
) -> Result<f64, LowRankError> {
    if alpha_star.len() != alpha_hat.len() || theta_star.len() != theta_hat.len() {
        return Err(LowRankError::DimensionMismatch("truth and estimate shapes differ".into()));
    }
    let a2 = dot(alpha_hat, alpha_hat);
    let t2 = dot(theta_hat, theta_hat);
    let s2 = dot(alpha_star, alpha_star) * dot(theta_star, theta_star);
    let cross = dot(alpha_star, alpha_hat) * dot(theta_star, theta_hat);
    Ok((a2 * t2 + s2 - 2.0 * cross).max(0.0) + noise_sigma * noise_sigma)
}

/// `(p̄² − 2p̄ρ + 2ρ − ρ²) / (p̄(p̄ − 1))`.
pub fn asymptotic_risk(rho: f64, p_bar: f64) -> Result<f64, LowRankError> {
    if !(p_bar > 1.0) || !p_bar.is_finite() {
        return Err(LowRankError::InvalidRegime(p_bar));
    }
    if !(0.0..=1.0).contains(&rho) {
        return Err(LowRankError::InvalidArgument("rho must lie in [0, 1]"));
    }
    Ok((p_bar * p_bar - 2.0 * p_bar * rho + 2.0 * rho - rho * rho) / (p_bar * (p_bar - 1.0)))
}

/// `1 − 64(1 + σ²)² p̄ h̄`; the noiseless case is `σ = 0`.
pub fn correlation_bound(p_bar: f64, h_bar: f64, noise_sigma: f64) -> f64 {
    let s = 1.0 + noise_sigma * noise_sigma;
    1.0 - 64.0 * s * s * p_bar * h_bar
}

/// `1 − 1/p̄ + 200h̄/(1 − 1/p̄)`, reported alongside measured risks for reference.
pub fn risk_upper_bound(p_bar: f64, h_bar: f64) -> f64 {
    let base = 1.0 - 1.0 / p_bar;
    base + 200.0 * h_bar / base
}

/// `ρα⋆ + √(1 − ρ²)β` with `β` a random unit vector orthogonal to `α⋆`.
pub fn forced_alpha(alpha_star: &[f64], rho: f64, stream: RngStream) -> Result<Vec<f64>, LowRankError> {
    if !(0.0..=1.0).contains(&rho) {
        return Err(LowRankError::InvalidArgument("rho must lie in [0, 1]"));
    }
    let na = norm2(alpha_star);
    let a: Vec<f64> = alpha_star.iter().map(|v| v / na).collect();
    if rho == 1.0 {
        return Ok(a);
    }
    if a.len() < 2 {
        return Err(LowRankError::InvalidArgument("need h >= 2 for an orthogonal direction"));
    }
    let mut k = 0u64;
    let beta = loop {
        let mut b = unit_gaussian_vector(stream.derive(k), a.len());
        let c = dot(&b, &a);
        axpy(-c, &a, &mut b);
        let nb = norm2(&b);
        if nb > 1e-8 {
            b.iter_mut().for_each(|v| *v /= nb);
            break b;
        }
        k += 1;
    };
    let s = (1.0 - rho * rho).sqrt();
    Ok(a.iter().zip(&beta).map(|(x, b)| rho * x + s * b).collect())
}

#[derive(Clone, Debug, PartialEq)]
pub struct SpectralResult {
    pub alpha_hat: Vec<f64>,
    pub sigma1: f64,
    pub rho: f64,
    pub theta_hat: Vec<f64>,
    /// `L(α̂, θ̂)`: the population risk of the learned rank-1 predictor.
    pub risk: f64,
    /// `‖θ̂ − θ⋆‖² + σ²` with `α̂` sign-aligned to `α⋆`: the risk of `θ̂` when it is
    /// evaluated on the ideal features `Xᵀα⋆`.
    pub ideal_feature_risk: f64,
}

/// Finishes stage 2 for a given `α̂` and evaluates both risks.
pub fn stage2_result(inst: &Rank1Instance, alpha_hat: Vec<f64>, sigma1: f64) -> Result<SpectralResult, LowRankError> {
    let theta_hat = stage2_erm(inst, &alpha_hat)?;
    let sign = if dot(inst.alpha_star(), &alpha_hat) < 0.0 { -1.0 } else { 1.0 };
    let ideal: f64 = theta_hat
        .iter()
        .zip(inst.theta_star())
        .map(|(t, s)| (sign * t - s).powi(2))
        .sum::<f64>()
        + inst.noise_sigma * inst.noise_sigma;
    Ok(SpectralResult {
        rho: correlation(inst.alpha_star(), &alpha_hat),
        risk: exact_population_risk(inst.alpha_star(), inst.theta_star(), &alpha_hat, &theta_hat, inst.noise_sigma)?,
        ideal_feature_risk: ideal,
        alpha_hat,
        sigma1,
        theta_hat,
    })
}

/// Both stages end to end.
pub fn two_stage(inst: &Rank1Instance) -> Result<SpectralResult, LowRankError> {
    let (alpha_hat, sigma1) = spectral_estimate(inst)?;
    stage2_result(inst, alpha_hat, sigma1)
}
