//! Base activation functions and their linear superpositions `σ_α = Σ αᵢ σᵢ`.

use std::fmt;

#[derive(Debug, Clone, thiserror::Error)]
pub enum ActivationError {
    #[error("hyperparameter vector has length {found}, family has {expected} bases")]
    LengthMismatch { expected: usize, found: usize },
    #[error("hyperparameter vector leaves the unit l1 ball (norm {0})")]
    OutsideBall(f64),
    #[error("hyperparameter vector has non-finite entries")]
    NonFinite,
    #[error("second derivative requested but non-smooth base `{0}` is active")]
    NonSmoothSecondDerivative(&'static str),
    #[error("derivative order {0} is not supported")]
    InvalidOrder(u8),
    #[error("unknown activation family `{0}`")]
    UnknownFamily(String),
    #[error("activation family needs at least one base")]
    EmptyFamily,
}

const L1_SLACK: f64 = 1e-9;

#[inline]
fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// A single base activation with analytic first and second derivatives.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum BaseActivation {
    Relu,
    Sigmoid,
    Tanh,
    Softplus,
    Swish,
    /// Identity; used for sanity checks where the network is linear.
    Linear,
}

impl BaseActivation {
    pub fn name(self) -> &'static str {
        match self {
            Self::Relu => "relu",
            Self::Sigmoid => "sigmoid",
            Self::Tanh => "tanh",
            Self::Softplus => "softplus",
            Self::Swish => "swish",
            Self::Linear => "linear",
        }
    }

    pub fn is_smooth(self) -> bool {
        !matches!(self, Self::Relu)
    }

    #[inline]
    pub fn value(self, z: f64) -> f64 {
        match self {
            Self::Relu => z.max(0.0),
            Self::Sigmoid => sigmoid(z),
            Self::Tanh => z.tanh(),
            Self::Softplus => (-z.abs()).exp().ln_1p() + z.max(0.0),
            Self::Swish => z * sigmoid(z),
            Self::Linear => z,
        }
    }

    /// First derivative. ReLU uses 0.5 at the kink.
    #[inline]
    pub fn first(self, z: f64) -> f64 {
        match self {
            Self::Relu => {
                if z > 0.0 {
                    1.0
                } else if z < 0.0 {
                    0.0
                } else {
                    0.5
                }
            }
            Self::Sigmoid => {
                let s = sigmoid(z);
                s * (1.0 - s)
            }
            Self::Tanh => {
                let t = z.tanh();
                1.0 - t * t
            }
            Self::Softplus => sigmoid(z),
            Self::Swish => {
                let s = sigmoid(z);
                s + z * s * (1.0 - s)
            }
            Self::Linear => 1.0,
        }
    }

    /// Second derivative; zero for ReLU away from the kink.
    #[inline]
    pub fn second(self, z: f64) -> f64 {
        match self {
            Self::Relu | Self::Linear => 0.0,
            Self::Sigmoid => {
                let s = sigmoid(z);
                s * (1.0 - s) * (1.0 - 2.0 * s)
            }
            Self::Tanh => {
                let t = z.tanh();
                -2.0 * t * (1.0 - t * t)
            }
            Self::Softplus => {
                let s = sigmoid(z);
                s * (1.0 - s)
            }
            Self::Swish => {
                let s = sigmoid(z);
                let ds = s * (1.0 - s);
                2.0 * ds + z * ds * (1.0 - 2.0 * s)
            }
        }
    }

    #[inline]
    fn eval(self, z: f64, order: u8) -> f64 {
        match order {
            0 => self.value(z),
            1 => self.first(z),
            _ => self.second(z),
        }
    }
}

impl fmt::Display for BaseActivation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Hyperparameter vector `α` constrained to the unit ℓ1 ball.
#[derive(Clone, Debug, PartialEq)]
pub struct HyperPoint {
    alpha: Vec<f64>,
}

impl HyperPoint {
    pub fn new(alpha: Vec<f64>) -> Result<Self, ActivationError> {
        if alpha.iter().any(|a| !a.is_finite()) {
            return Err(ActivationError::NonFinite);
        }
        let l1: f64 = alpha.iter().map(|a| a.abs()).sum();
        if l1 > 1.0 + L1_SLACK {
            return Err(ActivationError::OutsideBall(l1));
        }
        Ok(Self { alpha })
    }

    /// Point on the relu/sigmoid segment `(1 − t, t)`.
    pub fn segment(t: f64) -> Result<Self, ActivationError> {
        Self::new(vec![1.0 - t, t])
    }

    pub fn alpha(&self) -> &[f64] {
        &self.alpha
    }

    pub fn len(&self) -> usize {
        self.alpha.len()
    }

    pub fn is_empty(&self) -> bool {
        self.alpha.is_empty()
    }

    pub fn l1_norm(&self) -> f64 {
        self.alpha.iter().map(|a| a.abs()).sum()
    }

    pub fn distance(&self, other: &HyperPoint) -> f64 {
        crate::numcore::norm2(&crate::numcore::sub_vec(&self.alpha, &other.alpha))
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.alpha
    }
}

impl fmt::Display for HyperPoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, a) in self.alpha.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{a:.4}")?;
        }
        write!(f, ")")
    }
}

/// Ordered set of base activations plus the derivative bound `B`.
#[derive(Clone, Debug, PartialEq)]
pub struct ActivationFamily {
    name: String,
    bases: Vec<BaseActivation>,
    bound_b: f64,
}

impl ActivationFamily {
    /// `bound_b` is measured numerically: the largest of `|σ′ᵢ|` over all bases and
    /// `|σ″ᵢ|` over the smooth ones, on a fine grid of `[−20, 20]`.
    pub fn new(name: impl Into<String>, bases: Vec<BaseActivation>) -> Result<Self, ActivationError> {
        if bases.is_empty() {
            return Err(ActivationError::EmptyFamily);
        }
        let bound_b = measured_bound(&bases);
        Ok(Self {
            name: name.into(),
            bases,
            bound_b,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn bases(&self) -> &[BaseActivation] {
        &self.bases
    }

    pub fn len(&self) -> usize {
        self.bases.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bases.is_empty()
    }

    pub fn bound_b(&self) -> f64 {
        self.bound_b
    }

    pub fn all_smooth(&self) -> bool {
        self.bases.iter().all(|b| b.is_smooth())
    }

    /// Largest `|σᵢ(0)|`, which enters the deep-network kernel bounds.
    pub fn max_abs_at_zero(&self) -> f64 {
        self.bases.iter().fold(0.0, |m, b| m.max(b.value(0.0).abs()))
    }

    pub fn by_name(name: &str) -> Result<Self, ActivationError> {
        default_families()
            .into_iter()
            .find(|f| f.name == name)
            .ok_or_else(|| ActivationError::UnknownFamily(name.to_string()))
    }

    /// Resolves `α` against this family into an evaluator over the active bases.
    pub fn mix(&self, a: &HyperPoint) -> Result<Mixture, ActivationError> {
        if a.len() != self.bases.len() {
            return Err(ActivationError::LengthMismatch {
                expected: self.bases.len(),
                found: a.len(),
            });
        }
        let terms = self
            .bases
            .iter()
            .zip(a.alpha())
            .filter(|(_, &w)| w != 0.0)
            .map(|(&b, &w)| (b, w))
            .collect();
        Ok(Mixture { terms })
    }
}

fn measured_bound(bases: &[BaseActivation]) -> f64 {
    const STEPS: usize = 400_000;
    let mut b: f64 = 0.0;
    for i in 0..=STEPS {
        let z = -20.0 + 40.0 * i as f64 / STEPS as f64;
        for base in bases {
            b = b.max(base.first(z).abs());
            if base.is_smooth() {
                b = b.max(base.second(z).abs());
            }
        }
    }
    b * (1.0 + 1e-6)
}

/// `σ_α` restricted to its nonzero terms.
#[derive(Clone, Debug, PartialEq)]
pub struct Mixture {
    terms: Vec<(BaseActivation, f64)>,
}

impl Mixture {
    #[inline]
    pub fn value(&self, z: f64) -> f64 {
        self.terms.iter().map(|(b, w)| w * b.value(z)).sum()
    }

    #[inline]
    pub fn first(&self, z: f64) -> f64 {
        self.terms.iter().map(|(b, w)| w * b.first(z)).sum()
    }

    /// Second derivative; for non-smooth active bases this is only the a.e. value.
    #[inline]
    pub fn second(&self, z: f64) -> f64 {
        self.terms.iter().map(|(b, w)| w * b.second(z)).sum()
    }

    /// Value and first derivative in one pass.
    #[inline]
    pub fn value_and_first(&self, z: f64) -> (f64, f64) {
        let mut v = 0.0;
        let mut d = 0.0;
        for &(b, w) in &self.terms {
            match b {
                BaseActivation::Sigmoid => {
                    let s = sigmoid(z);
                    v += w * s;
                    d += w * s * (1.0 - s);
                }
                BaseActivation::Tanh => {
                    let t = z.tanh();
                    v += w * t;
                    d += w * (1.0 - t * t);
                }
                _ => {
                    v += w * b.value(z);
                    d += w * b.first(z);
                }
            }
        }
        (v, d)
    }

    pub fn is_smooth(&self) -> bool {
        self.terms.iter().all(|(b, _)| b.is_smooth())
    }

    /// Evaluates `[σᵢ(z)]` for the given bases; handy for `∂σ_α/∂α`.
    pub fn basis_values(bases: &[BaseActivation], z: f64, out: &mut [f64]) {
        for (o, b) in out.iter_mut().zip(bases) {
            *o = b.value(z);
        }
    }
}

/// `Σᵢ αᵢ σᵢ^(order)(z)`.
pub fn eval_mix(fam: &ActivationFamily, a: &HyperPoint, z: f64, order: u8) -> Result<f64, ActivationError> {
    if order > 2 {
        return Err(ActivationError::InvalidOrder(order));
    }
    if a.len() != fam.len() {
        return Err(ActivationError::LengthMismatch {
            expected: fam.len(),
            found: a.len(),
        });
    }
    let mut total = 0.0;
    for (&b, &w) in fam.bases.iter().zip(a.alpha()) {
        if w == 0.0 {
            continue;
        }
        if order == 2 && !b.is_smooth() {
            return Err(ActivationError::NonSmoothSecondDerivative(b.name()));
        }
        total += w * b.eval(z, order);
    }
    Ok(total)
}

/// Built-in families: `relu-sigmoid`, `smooth4` (softplus, sigmoid, tanh, swish),
/// `linear-pair` (two identical identity bases, so `σ_α` does not depend on the
/// direction of α on the simplex) and `linear`.
pub fn default_families() -> Vec<ActivationFamily> {
    use BaseActivation::*;
    [
        ("relu-sigmoid", vec![Relu, Sigmoid]),
        ("smooth4", vec![Softplus, Sigmoid, Tanh, Swish]),
        ("linear-pair", vec![Linear, Linear]),
        ("linear", vec![Linear]),
    ]
    .into_iter()
    .map(|(n, b)| ActivationFamily::new(n, b).expect("non-empty"))
    .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn relu_sigmoid() -> ActivationFamily {
        ActivationFamily::by_name("relu-sigmoid").unwrap()
    }

    #[test]
    fn relu_of_negative_is_zero() {
        let a = HyperPoint::new(vec![1.0, 0.0]).unwrap();
        assert_eq!(eval_mix(&relu_sigmoid(), &a, -1.0, 0).unwrap(), 0.0);
    }

    #[test]
    fn sigmoid_at_zero() {
        let a = HyperPoint::new(vec![0.0, 1.0]).unwrap();
        assert_eq!(eval_mix(&relu_sigmoid(), &a, 0.0, 0).unwrap(), 0.5);
    }

    #[test]
    fn half_half_mix_at_two() {
        // 0.5·2 + 0.5/(1+e^-2)
        let expected = 1.0 + 0.5 / (1.0 + (-2.0f64).exp());
        let a = HyperPoint::new(vec![0.5, 0.5]).unwrap();
        let got = eval_mix(&relu_sigmoid(), &a, 2.0, 0).unwrap();
        assert!((got - expected).abs() < 1e-15);
        assert!((got - 1.440_398_5).abs() < 1e-6);
    }

    #[test]
    fn second_derivative_needs_smooth_active_bases() {
        let fam = relu_sigmoid();
        let a = HyperPoint::new(vec![0.3, 0.7]).unwrap();
        assert!(matches!(
            eval_mix(&fam, &a, 0.2, 2),
            Err(ActivationError::NonSmoothSecondDerivative("relu"))
        ));
        // inactive relu is fine
        let b = HyperPoint::new(vec![0.0, 1.0]).unwrap();
        assert!(eval_mix(&fam, &b, 0.2, 2).is_ok());
    }

    #[test]
    fn family_shapes() {
        assert_eq!(relu_sigmoid().len(), 2);
        let smooth = ActivationFamily::by_name("smooth4").unwrap();
        assert_eq!(smooth.len(), 4);
        assert!(smooth.all_smooth());
        for i in 0..=4000 {
            let z = -20.0 + 40.0 * i as f64 / 4000.0;
            for b in smooth.bases() {
                assert!(b.second(z).is_finite());
            }
        }
    }

    #[test]
    fn swish_slope_at_zero() {
        assert_eq!(BaseActivation::Swish.first(0.0), 0.5);
    }

    #[test]
    fn relu_kink_convention() {
        assert_eq!(BaseActivation::Relu.first(0.0), 0.5);
    }

    #[test]
    fn softplus_is_stable() {
        assert!((BaseActivation::Softplus.value(800.0) - 800.0).abs() < 1e-12);
        assert!(BaseActivation::Softplus.value(-800.0) >= 0.0);
        assert!((BaseActivation::Softplus.value(0.0) - 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn hyperpoint_rejects_outside_ball() {
        assert!(HyperPoint::new(vec![0.6, 0.5]).is_err());
        assert!(HyperPoint::new(vec![0.5, 0.5 + 1e-10]).is_ok());
        assert!(HyperPoint::new(vec![f64::NAN]).is_err());
    }

    #[test]
    fn length_mismatch() {
        let a = HyperPoint::new(vec![1.0]).unwrap();
        assert!(eval_mix(&relu_sigmoid(), &a, 0.0, 0).is_err());
        assert!(relu_sigmoid().mix(&a).is_err());
    }

    #[test]
    fn smooth4_bound_value() {
        // swish' peaks near 1.0998
        let b = ActivationFamily::by_name("smooth4").unwrap().bound_b();
        assert!(b > 1.09 && b < 1.11, "{b}");
    }
}
