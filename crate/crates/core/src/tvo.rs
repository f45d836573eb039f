//! Train-validation search over the hyperparameter ball.

use rayon::prelude::*;

use crate::activations::HyperPoint;
use crate::featmap::SampleSet;

#[derive(Debug, Clone, thiserror::Error)]
pub enum TvoError {
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("search grid is empty")]
    EmptyGrid,
    #[error("delta must be a finite non-negative number, got {0}")]
    InvalidDelta(f64),
    #[error("grid point {index} has dimension {found}, expected {expected}")]
    DimensionMismatch { index: usize, expected: usize, found: usize },
    #[error("grid point {index} lies outside the unit l1 ball")]
    OutsideBall { index: usize },
    #[error("trainer failed at every grid point; first failure at {alpha}: {message}")]
    AllFailed { alpha: HyperPoint, message: String },
    #[error("training diverged at perturbed point {alpha}: {message}")]
    StepTooLarge { alpha: HyperPoint, message: String },
    #[error("invalid argument: {0}")]
    InvalidArgument(&'static str),
}

/// Anything that maps an input vector to a real-valued score.
pub trait Predictor: Send + Sync {
    fn predict(&self, x: &[f64]) -> f64;

    fn predict_batch(&self, data: &SampleSet) -> Vec<f64> {
        (0..data.len()).map(|i| self.predict(data.input(i))).collect()
    }

    /// Optional training-set statistic reported alongside risks.
    fn excess_form(&self) -> Option<f64> {
        None
    }
}

impl<P: Predictor + ?Sized> Predictor for Box<P> {
    fn predict(&self, x: &[f64]) -> f64 {
        (**self).predict(x)
    }

    fn predict_batch(&self, data: &SampleSet) -> Vec<f64> {
        (**self).predict_batch(data)
    }

    fn excess_form(&self) -> Option<f64> {
        (**self).excess_form()
    }
}

impl<P: Predictor + ?Sized> Predictor for std::sync::Arc<P> {
    fn predict(&self, x: &[f64]) -> f64 {
        (**self).predict(x)
    }

    fn predict_batch(&self, data: &SampleSet) -> Vec<f64> {
        (**self).predict_batch(data)
    }

    fn excess_form(&self) -> Option<f64> {
        (**self).excess_form()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Loss {
    Squared,
    Hinge,
    /// Counts `y·f ≤ 0` as an error, so ties are errors.
    ZeroOne,
}

impl Loss {
    #[inline]
    pub fn value(self, y: f64, f: f64) -> f64 {
        match self {
            Loss::Squared => (y - f) * (y - f),
            Loss::Hinge => (1.0 - y * f).max(0.0),
            Loss::ZeroOne => {
                if y * f <= 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Loss::Squared => "squared",
            Loss::Hinge => "hinge",
            Loss::ZeroOne => "zero_one",
        }
    }
}

impl std::str::FromStr for Loss {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "squared" => Ok(Loss::Squared),
            "hinge" => Ok(Loss::Hinge),
            "zero_one" => Ok(Loss::ZeroOne),
            other => Err(format!("unknown loss '{other}'")),
        }
    }
}

/// Mean loss of precomputed predictions.
pub fn risk_from_predictions(preds: &[f64], labels: &[f64], loss: Loss) -> Result<f64, TvoError> {
    if labels.is_empty() {
        return Err(TvoError::EmptyDataset);
    }
    if preds.len() != labels.len() {
        return Err(TvoError::InvalidArgument("prediction and label counts differ"));
    }
    let s: f64 = preds.iter().zip(labels).map(|(&f, &y)| loss.value(y, f)).sum();
    Ok(s / labels.len() as f64)
}

pub fn evaluate_risk<P: Predictor + ?Sized>(model: &P, data: &SampleSet, loss: Loss) -> Result<f64, TvoError> {
    if data.is_empty() {
        return Err(TvoError::EmptyDataset);
    }
    risk_from_predictions(&model.predict_batch(data), data.labels(), loss)
}

/// Finite candidate set inside the unit ℓ1 ball plus the selection slack `delta`.
#[derive(Clone, Debug, PartialEq)]
pub struct SearchSpace {
    h: usize,
    grid: Vec<HyperPoint>,
    delta: f64,
}

impl SearchSpace {
    /// All `α` with `αᵢ ∈ {0, 1/m, …, 1}` and `‖α‖₁ ≤ 1`.
    pub fn l1_ball(h: usize, m: usize, delta: f64) -> Result<Self, TvoError> {
        Self::lattice(h, m, delta, false)
    }

    /// Lattice points on the face `‖α‖₁ = 1`, `α ≥ 0`.
    pub fn simplex(h: usize, m: usize, delta: f64) -> Result<Self, TvoError> {
        Self::lattice(h, m, delta, true)
    }

    fn lattice(h: usize, m: usize, delta: f64, on_face: bool) -> Result<Self, TvoError> {
        if h == 0 || m == 0 {
            return Err(TvoError::InvalidArgument("h and m must be at least 1"));
        }
        let mut grid = Vec::new();
        let mut k = vec![0usize; h];
        loop {
            let s: usize = k.iter().sum();
            if s <= m && (!on_face || s == m) {
                let alpha = k.iter().map(|&v| v as f64 / m as f64).collect();
                grid.push(HyperPoint::new(alpha).expect("lattice point inside the ball"));
            }
            // odometer increment with the last coordinate fastest
            let mut i = h;
            loop {
                if i == 0 {
                    return Self::from_points(grid, delta);
                }
                i -= 1;
                if k[i] < m {
                    k[i] += 1;
                    break;
                }
                k[i] = 0;
            }
        }
    }

    pub fn from_points(grid: Vec<HyperPoint>, delta: f64) -> Result<Self, TvoError> {
        if !(delta >= 0.0) || !delta.is_finite() {
            return Err(TvoError::InvalidDelta(delta));
        }
        let first = grid.first().ok_or(TvoError::EmptyGrid)?;
        let h = first.len();
        for (index, p) in grid.iter().enumerate() {
            if p.len() != h {
                return Err(TvoError::DimensionMismatch {
                    index,
                    expected: h,
                    found: p.len(),
                });
            }
            if p.l1_norm() > 1.0 + 1e-9 {
                return Err(TvoError::OutsideBall { index });
            }
        }
        Ok(Self { h, grid, delta })
    }

    pub fn h(&self) -> usize {
        self.h
    }

    pub fn grid(&self) -> &[HyperPoint] {
        &self.grid
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AlphaRecord {
    pub index: usize,
    pub alpha: HyperPoint,
    pub train_risk: f64,
    pub val_risk: f64,
    pub test_risk: Option<f64>,
    pub excess_form: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SearchOutcome {
    pub alpha_hat: HyperPoint,
    /// Grid index of `alpha_hat`.
    pub index: usize,
    pub val_risk: f64,
    /// One record per successfully trained grid point, in grid order.
    pub table: Vec<AlphaRecord>,
    /// Grid points whose training failed, with the trainer's message.
    pub failures: Vec<(usize, HyperPoint, String)>,
}

impl SearchOutcome {
    pub fn min_val_risk(&self) -> f64 {
        self.table.iter().map(|r| r.val_risk).fold(f64::INFINITY, f64::min)
    }

    pub fn record(&self, index: usize) -> Option<&AlphaRecord> {
        self.table.iter().find(|r| r.index == index)
    }
}

/// The datasets a search sees. The trainer closes over its own training set;
/// `train` here is only used to report training risk.
#[derive(Clone, Copy, Debug)]
pub struct SearchData<'a> {
    pub train: Option<&'a SampleSet>,
    pub val: &'a SampleSet,
    pub test: Option<&'a SampleSet>,
}

/// Trains at every grid point (in parallel), scores on the validation set and
/// returns the lowest-index point within `delta` of the best validation risk.
pub fn tvo_search<P, E, F>(trainer: F, space: &SearchSpace, data: SearchData<'_>, loss: Loss) -> Result<SearchOutcome, TvoError>
where
    P: Predictor,
    E: std::fmt::Display,
    F: Fn(&HyperPoint) -> Result<P, E> + Sync,
{
    if data.val.is_empty() {
        return Err(TvoError::EmptyDataset);
    }
    let results: Vec<Result<AlphaRecord, String>> = space
        .grid
        .par_iter()
        .enumerate()
        .map(|(index, a)| {
            let model = trainer(a).map_err(|e| e.to_string())?;
            let val_risk = evaluate_risk(&model, data.val, loss).map_err(|e| e.to_string())?;
            if !val_risk.is_finite() {
                return Err("non-finite validation risk".to_string());
            }
            let train_risk = match data.train {
                Some(t) => evaluate_risk(&model, t, loss).map_err(|e| e.to_string())?,
                None => f64::NAN,
            };
            let test_risk = match data.test {
                Some(t) => Some(evaluate_risk(&model, t, loss).map_err(|e| e.to_string())?),
                None => None,
            };
            Ok(AlphaRecord {
                index,
                alpha: a.clone(),
                train_risk,
                val_risk,
                test_risk,
                excess_form: model.excess_form(),
            })
        })
        .collect();

    let mut table = Vec::new();
    let mut failures = Vec::new();
    for (index, r) in results.into_iter().enumerate() {
        match r {
            Ok(rec) => table.push(rec),
            Err(msg) => {
                log::warn!("training failed at {}: {}", space.grid[index], msg);
                failures.push((index, space.grid[index].clone(), msg));
            }
        }
    }
    select(table, failures, space.delta)
}

/// Picks the δ-minimizer from an already populated table.
pub fn select(
    table: Vec<AlphaRecord>,
    failures: Vec<(usize, HyperPoint, String)>,
    delta: f64,
) -> Result<SearchOutcome, TvoError> {
    let min = table.iter().map(|r| r.val_risk).fold(f64::INFINITY, f64::min);
    let Some(best) = table.iter().find(|r| r.val_risk <= min + delta) else {
        return Err(match failures.into_iter().next() {
            Some((_, alpha, message)) => TvoError::AllFailed { alpha, message },
            None => TvoError::EmptyGrid,
        });
    };
    Ok(SearchOutcome {
        alpha_hat: best.alpha.clone(),
        index: best.index,
        val_risk: best.val_risk,
        table,
        failures,
    })
}

/// Euclidean projection onto `{α : ‖α‖₁ ≤ radius}`.
pub fn project_l1_ball(v: &[f64], radius: f64) -> Vec<f64> {
    let l1: f64 = v.iter().map(|x| x.abs()).sum();
    if l1 <= radius {
        return v.to_vec();
    }
    let mut u: Vec<f64> = v.iter().map(|x| x.abs()).collect();
    u.sort_by(|a, b| b.total_cmp(a));
    let mut cum = 0.0;
    let mut theta = 0.0;
    for (j, &uj) in u.iter().enumerate() {
        cum += uj;
        let t = (cum - radius) / (j + 1) as f64;
        if uj - t > 0.0 {
            theta = t;
        }
    }
    v.iter().map(|&x| x.signum() * (x.abs() - theta).max(0.0)).collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct Hypergradient {
    pub grad: Vec<f64>,
    /// True when some perturbed point had to be projected back into the ball.
    pub clipped: bool,
}

/// Central finite-difference gradient of the validation risk in `α`.
pub fn hypergrad_fd<P, E, F>(trainer: F, a: &HyperPoint, val: &SampleSet, loss: Loss, step: f64) -> Result<Hypergradient, TvoError>
where
    P: Predictor,
    E: std::fmt::Display,
    F: Fn(&HyperPoint) -> Result<P, E> + Sync,
{
    if !(step > 0.0) || !step.is_finite() {
        return Err(TvoError::InvalidArgument("step must be positive"));
    }
    if val.is_empty() {
        return Err(TvoError::EmptyDataset);
    }
    let h = a.len();
    let risk_at = |p: &HyperPoint| -> Result<f64, TvoError> {
        let model = trainer(p).map_err(|e| TvoError::StepTooLarge {
            alpha: p.clone(),
            message: e.to_string(),
        })?;
        let r = evaluate_risk(&model, val, loss)?;
        if r.is_finite() {
            Ok(r)
        } else {
            Err(TvoError::StepTooLarge {
                alpha: p.clone(),
                message: "non-finite validation risk".into(),
            })
        }
    };
    let parts: Vec<Result<(f64, bool), TvoError>> = (0..h)
        .into_par_iter()
        .map(|i| {
            let mut clipped = false;
            let mut shifted = |sign: f64| {
                let mut v = a.alpha().to_vec();
                v[i] += sign * step;
                let l1: f64 = v.iter().map(|x| x.abs()).sum();
                if l1 > 1.0 {
                    clipped = true;
                    v = project_l1_ball(&v, 1.0);
                }
                HyperPoint::new(v).expect("projected into the ball")
            };
            let plus = shifted(1.0);
            let minus = shifted(-1.0);
            let span = plus.alpha()[i] - minus.alpha()[i];
            if span <= 0.0 {
                return Err(TvoError::InvalidArgument("projection collapsed the difference step"));
            }
            Ok(((risk_at(&plus)? - risk_at(&minus)?) / span, clipped))
        })
        .collect();
    let mut grad = Vec::with_capacity(h);
    let mut clipped = false;
    for p in parts {
        let (g, c) = p?;
        grad.push(g);
        clipped |= c;
    }
    Ok(Hypergradient { grad, clipped })
}

/// One step of a projected-descent path.
#[derive(Clone, Debug, PartialEq)]
pub struct DescentStep {
    pub alpha: HyperPoint,
    pub val_risk: f64,
}

/// Projected gradient descent on the validation risk using [`hypergrad_fd`].
pub fn projected_descent<P, E, F>(
    trainer: F,
    start: &HyperPoint,
    val: &SampleSet,
    loss: Loss,
    fd_step: f64,
    lr: f64,
    iterations: usize,
) -> Result<Vec<DescentStep>, TvoError>
where
    P: Predictor,
    E: std::fmt::Display,
    F: Fn(&HyperPoint) -> Result<P, E> + Sync,
{
    let risk = |p: &HyperPoint| -> Result<f64, TvoError> {
        let m = trainer(p).map_err(|e| TvoError::StepTooLarge {
            alpha: p.clone(),
            message: e.to_string(),
        })?;
        evaluate_risk(&m, val, loss)
    };
    let mut a = start.clone();
    let mut path = vec![DescentStep {
        val_risk: risk(&a)?,
        alpha: a.clone(),
    }];
    for _ in 0..iterations {
        let g = hypergrad_fd(&trainer, &a, val, loss, fd_step)?;
        let next: Vec<f64> = a.alpha().iter().zip(&g.grad).map(|(x, d)| x - lr * d).collect();
        a = HyperPoint::new(project_l1_ball(&next, 1.0)).expect("projected into the ball");
        path.push(DescentStep {
            val_risk: risk(&a)?,
            alpha: a.clone(),
        });
    }
    Ok(path)
}
