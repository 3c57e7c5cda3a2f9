//! Dissimilarity measures expressed as statistic factors plus an `η` evaluator,
//! for sequence outputs with one label per position.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::inference::Eta;
use crate::model::{Accumulation, AccumulationSpec, AuxVector, Model, StatisticFactor};

/// Reference output `y*` with the label set treated as positive for TP/FP counts.
#[derive(Clone, Debug, PartialEq)]
pub struct GroundTruth {
    labels: Vec<usize>,
    cards: Vec<usize>,
    positive: Vec<bool>,
}

impl GroundTruth {
    /// Ground truth for `model`; labels `1..N` are positive, `0` is negative.
    pub fn new(model: &Model, labels: Vec<usize>) -> Result<Self> {
        let positive = (0..model.max_cardinality()).map(|s| s != 0).collect();
        Self::with_positive_mask(model, labels, positive)
    }

    pub fn with_positive(model: &Model, labels: Vec<usize>, positive: &[usize]) -> Result<Self> {
        let n = model.max_cardinality();
        let mut mask = vec![false; n];
        for &s in positive {
            if s >= n {
                return Err(Error::Value(format!(
                    "positive label {s} exceeds {n} labels"
                )));
            }
            mask[s] = true;
        }
        Self::with_positive_mask(model, labels, mask)
    }

    fn with_positive_mask(model: &Model, labels: Vec<usize>, positive: Vec<bool>) -> Result<Self> {
        if labels.len() != model.num_vars() {
            return Err(Error::Length {
                expected: model.num_vars(),
                got: labels.len(),
            });
        }
        model.check_assignment(&labels)?;
        if !positive.iter().any(|&p| p) {
            return Err(Error::Value("positive label set is empty".into()));
        }
        Ok(GroundTruth {
            labels,
            cards: model.cardinalities().to_vec(),
            positive,
        })
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn is_positive(&self, s: usize) -> bool {
        self.positive.get(s).copied().unwrap_or(false)
    }

    pub fn positive_labels(&self) -> Vec<usize> {
        (0..self.positive.len())
            .filter(|&s| self.positive[s])
            .collect()
    }

    /// `|y*|_+`, the number of positions whose true label is positive.
    pub fn num_positive(&self) -> usize {
        self.labels.iter().filter(|&&s| self.is_positive(s)).count()
    }

    fn max_cardinality(&self) -> usize {
        self.cards.iter().copied().max().unwrap_or(0)
    }

    /// One unary factor per position with entries `entry(t, s)`.
    fn unary(&self, dim: usize, entry: impl Fn(usize, usize) -> Vec<i64>) -> Vec<StatisticFactor> {
        (0..self.len())
            .map(|t| {
                let values = (0..self.cards[t]).flat_map(|s| entry(t, s)).collect();
                StatisticFactor::from_flat(vec![t], dim, values)
            })
            .collect()
    }

    fn tp(&self, t: usize, s: usize) -> i64 {
        (s == self.labels[t] && self.is_positive(s)) as i64
    }

    fn fp(&self, t: usize, s: usize) -> i64 {
        (s != self.labels[t] && self.is_positive(s)) as i64
    }
}

/// Packaged loss names.
#[derive(Clone, Debug, PartialEq)]
pub enum LossKind {
    Hamming,
    HammingNorm,
    /// `N × N` costs indexed `[true][predicted]`; `None` means 0 on the diagonal, 1 off it.
    WeightedHamming(Option<Vec<Vec<f64>>>),
    FpCount,
    Recall,
    Precision,
    FBeta(f64),
    Iou,
    LabelCount,
    LabelCountNorm,
    ZeroOne,
}

impl FromStr for LossKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "hamming" => LossKind::Hamming,
            "hamming-norm" => LossKind::HammingNorm,
            "whamming" => LossKind::WeightedHamming(None),
            "fp-count" => LossKind::FpCount,
            "recall" => LossKind::Recall,
            "precision" => LossKind::Precision,
            "f1" => LossKind::FBeta(1.0),
            "iou" => LossKind::Iou,
            "label-count" => LossKind::LabelCount,
            "label-count-norm" => LossKind::LabelCountNorm,
            "zero-one" => LossKind::ZeroOne,
            other => match other.strip_prefix("fbeta:") {
                Some(b) => {
                    let beta: f64 = b
                        .parse()
                        .map_err(|_| Error::Value(format!("bad beta in loss '{other}'")))?;
                    if !(beta.is_finite() && beta > 0.0) {
                        return Err(Error::Value(format!("beta must be positive, got {beta}")));
                    }
                    LossKind::FBeta(beta)
                }
                None => return Err(Error::Value(format!("unknown loss '{other}'"))),
            },
        })
    }
}

impl fmt::Display for LossKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LossKind::Hamming => f.write_str("hamming"),
            LossKind::HammingNorm => f.write_str("hamming-norm"),
            LossKind::WeightedHamming(_) => f.write_str("whamming"),
            LossKind::FpCount => f.write_str("fp-count"),
            LossKind::Recall => f.write_str("recall"),
            LossKind::Precision => f.write_str("precision"),
            LossKind::FBeta(b) => write!(f, "fbeta:{b}"),
            LossKind::Iou => f.write_str("iou"),
            LossKind::LabelCount => f.write_str("label-count"),
            LossKind::LabelCountNorm => f.write_str("label-count-norm"),
            LossKind::ZeroOne => f.write_str("zero-one"),
        }
    }
}

/// Statistics `G(·; y*)`, their accumulation, and `η`.
#[derive(Clone)]
pub struct LossSpec {
    pub name: String,
    pub statistics: Vec<StatisticFactor>,
    pub accumulation: AccumulationSpec,
    pub eta: Eta,
    /// `η(l) = w·l + b` when the loss is linear in its statistics.
    pub linear: Option<(Vec<f64>, f64)>,
    /// Bound on distinct auxiliary states, as a formula in `M` (and `N`).
    pub r_bound_formula: &'static str,
    r_bound: u128,
}

impl fmt::Debug for LossSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("LossSpec")
            .field("name", &self.name)
            .field("dim", &self.accumulation.dim())
            .field("linear", &self.linear)
            .field("r_bound", &self.r_bound)
            .finish()
    }
}

impl LossSpec {
    pub fn eta(&self, l: &AuxVector) -> f64 {
        (self.eta)(l)
    }

    /// The R bound instantiated at this ground truth's `M`.
    pub fn r_bound(&self) -> u128 {
        self.r_bound
    }

    pub fn dim(&self) -> usize {
        self.accumulation.dim()
    }

    /// `model` with this loss's statistics in place of its own.
    pub fn attach(&self, model: &Model) -> Result<Model> {
        model.with_statistics(self.statistics.clone(), self.accumulation.clone())
    }
}

fn binom(n: u128, k: u128) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    (0..k).fold(1u128, |acc, i| acc.saturating_mul(n - i) / (i + 1))
}

fn linear_eta(w: Vec<f64>, b: f64) -> (Eta, Option<(Vec<f64>, f64)>) {
    let ww = w.clone();
    let eta: Eta = Arc::new(move |l: &AuxVector| {
        b + ww
            .iter()
            .zip(l.as_slice())
            .map(|(wi, &li)| wi * li as f64)
            .sum::<f64>()
    });
    (eta, Some((w, b)))
}

fn spec(
    name: String,
    statistics: Vec<StatisticFactor>,
    accumulation: AccumulationSpec,
    (eta, linear): (Eta, Option<(Vec<f64>, f64)>),
    r_bound_formula: &'static str,
    r_bound: u128,
) -> LossSpec {
    LossSpec {
        name,
        statistics,
        accumulation,
        eta,
        linear,
        r_bound_formula,
        r_bound,
    }
}

/// Number of mismatched positions.
pub fn hamming(truth: &GroundTruth) -> LossSpec {
    hamming_scaled(truth, false)
}

/// Hamming distance divided by `M`.
pub fn hamming_normalized(truth: &GroundTruth) -> LossSpec {
    hamming_scaled(truth, true)
}

fn hamming_scaled(truth: &GroundTruth, normalized: bool) -> LossSpec {
    let m = truth.len();
    let stats = truth.unary(1, |t, s| vec![(s != truth.labels[t]) as i64]);
    let w = if normalized {
        1.0 / m.max(1) as f64
    } else {
        1.0
    };
    let name = if normalized {
        "hamming-norm"
    } else {
        "hamming"
    };
    spec(
        name.into(),
        stats,
        AccumulationSpec::all_add(1),
        linear_eta(vec![w], 0.0),
        "M+1",
        m as u128 + 1,
    )
}

/// Per-(true, predicted) label counts weighted by `weights[true][predicted]`.
pub fn weighted_hamming(weights: &[Vec<f64>], truth: &GroundTruth) -> Result<LossSpec> {
    let n = weights.len();
    if weights.iter().any(|row| row.len() != n) {
        return Err(Error::Shape("weight matrix must be square".into()));
    }
    if weights.iter().flatten().any(|w| !w.is_finite()) {
        return Err(Error::Value("weights must be finite".into()));
    }
    if truth.max_cardinality() > n {
        return Err(Error::Shape(format!(
            "{n}x{n} weights for variables with up to {} labels",
            truth.max_cardinality()
        )));
    }
    let p = n * n;
    let stats = truth.unary(p, |t, s| {
        let mut e = vec![0; p];
        e[truth.labels[t] * n + s] = 1;
        e
    });
    let m = truth.len() as u128;
    let w: Vec<f64> = weights.iter().flatten().copied().collect();
    Ok(spec(
        "whamming".into(),
        stats,
        AccumulationSpec::all_add(p),
        linear_eta(w, 0.0),
        "C(M+N^2-1, M)",
        binom(m + p as u128 - 1, m),
    ))
}

/// `(TP, FP)` statistic factors under the per-position positive-label convention.
pub fn tp_fp(truth: &GroundTruth) -> Vec<StatisticFactor> {
    truth.unary(2, |t, s| vec![truth.tp(t, s), truth.fp(t, s)])
}

pub fn eta_fp_count(fp: i64) -> f64 {
    fp as f64
}

pub fn eta_recall(tp: i64, positives: usize) -> f64 {
    if positives == 0 {
        return 0.0;
    }
    1.0 - tp as f64 / positives as f64
}

pub fn eta_precision(tp: i64, fp: i64) -> f64 {
    if tp + fp == 0 {
        return 0.0;
    }
    1.0 - tp as f64 / (tp + fp) as f64
}

pub fn eta_f_beta(beta: f64, tp: i64, fp: i64, positives: usize) -> f64 {
    let b2 = beta * beta;
    let denom = b2 * positives as f64 + tp as f64 + fp as f64;
    if denom == 0.0 {
        return 0.0;
    }
    1.0 - (1.0 + b2) * tp as f64 / denom
}

pub fn eta_iou(tp: i64, fp: i64, positives: usize) -> f64 {
    let denom = positives as i64 + fp;
    if denom == 0 {
        return 0.0;
    }
    1.0 - tp as f64 / denom as f64
}

/// Number of predicted positives that are wrong.
pub fn fp_count(truth: &GroundTruth) -> LossSpec {
    spec(
        "fp-count".into(),
        truth.unary(1, |t, s| vec![truth.fp(t, s)]),
        AccumulationSpec::all_add(1),
        linear_eta(vec![1.0], 0.0),
        "M+1",
        truth.len() as u128 + 1,
    )
}

pub fn recall(truth: &GroundTruth) -> LossSpec {
    let pos = truth.num_positive();
    let eta = if pos == 0 {
        linear_eta(vec![0.0], 0.0)
    } else {
        linear_eta(vec![-1.0 / pos as f64], 1.0)
    };
    // Keep the exact formula for evaluation; the linear form is for folding.
    let exact: Eta = Arc::new(move |l: &AuxVector| eta_recall(l.get(0), pos));
    spec(
        "recall".into(),
        truth.unary(1, |t, s| vec![truth.tp(t, s)]),
        AccumulationSpec::all_add(1),
        (exact, eta.1),
        "M+1",
        truth.len() as u128 + 1,
    )
}

fn tp_fp_loss(
    name: String,
    truth: &GroundTruth,
    eta: impl Fn(i64, i64) -> f64 + Send + Sync + 'static,
) -> LossSpec {
    let m = truth.len() as u128;
    spec(
        name,
        tp_fp(truth),
        AccumulationSpec::all_add(2),
        (Arc::new(move |l: &AuxVector| eta(l.get(0), l.get(1))), None),
        "(M+1)^2",
        (m + 1) * (m + 1),
    )
}

pub fn precision(truth: &GroundTruth) -> LossSpec {
    tp_fp_loss("precision".into(), truth, eta_precision)
}

pub fn f_beta(beta: f64, truth: &GroundTruth) -> LossSpec {
    let pos = truth.num_positive();
    tp_fp_loss(format!("fbeta:{beta}"), truth, move |tp, fp| {
        eta_f_beta(beta, tp, fp, pos)
    })
}

pub fn iou(truth: &GroundTruth) -> LossSpec {
    let pos = truth.num_positive();
    tp_fp_loss("iou".into(), truth, move |tp, fp| eta_iou(tp, fp, pos))
}

/// `|Σ y_t − Σ y*_t|`, optionally divided by `M`. Binary labels only.
pub fn label_count(truth: &GroundTruth, normalized: bool) -> Result<LossSpec> {
    if truth.cards.iter().any(|&c| c != 2) {
        return Err(Error::Value(
            "label-count loss needs binary variables".into(),
        ));
    }
    let m = truth.len();
    let target = truth.labels.iter().sum::<usize>() as f64;
    let scale = if normalized {
        1.0 / m.max(1) as f64
    } else {
        1.0
    };
    let eta: Eta = Arc::new(move |l: &AuxVector| (l.get(0) as f64 - target).abs() * scale);
    let name = if normalized {
        "label-count-norm"
    } else {
        "label-count"
    };
    Ok(spec(
        name.into(),
        truth.unary(1, |_, s| vec![s as i64]),
        AccumulationSpec::all_add(1),
        (eta, None),
        "M+1",
        m as u128 + 1,
    ))
}

/// 1 unless `y = y*`, from `(TP, [FP > 0])` with the second dimension max-accumulated.
pub fn zero_one(truth: &GroundTruth) -> LossSpec {
    let pos = truth.num_positive() as i64;
    let eta: Eta =
        Arc::new(move |l: &AuxVector| ((pos - l.get(0)).max(l.get(1)) > 0) as i64 as f64);
    spec(
        "zero-one".into(),
        tp_fp(truth),
        AccumulationSpec(vec![Accumulation::Add, Accumulation::Max]),
        (eta, None),
        "2(M+1)",
        2 * (truth.len() as u128 + 1),
    )
}

/// Builds a packaged loss by kind.
pub fn build_loss(kind: &LossKind, truth: &GroundTruth) -> Result<LossSpec> {
    Ok(match kind {
        LossKind::Hamming => hamming(truth),
        LossKind::HammingNorm => hamming_normalized(truth),
        LossKind::WeightedHamming(w) => {
            let n = truth.max_cardinality();
            let unit: Vec<Vec<f64>> = (0..n)
                .map(|a| (0..n).map(|b| (a != b) as i64 as f64).collect())
                .collect();
            weighted_hamming(w.as_ref().unwrap_or(&unit), truth)?
        }
        LossKind::FpCount => fp_count(truth),
        LossKind::Recall => recall(truth),
        LossKind::Precision => precision(truth),
        LossKind::FBeta(b) => f_beta(*b, truth),
        LossKind::Iou => iou(truth),
        LossKind::LabelCount => label_count(truth, false)?,
        LossKind::LabelCountNorm => label_count(truth, true)?,
        LossKind::ZeroOne => zero_one(truth),
    })
}
