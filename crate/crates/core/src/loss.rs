//! Margin priors and margin-adjusted losses.
//!
//! Rare classes get large margins: `m_c = -log(p_c)` from the instance
//! frequency prior. Subtracting the margins from the logits inside the
//! softmax re-balances optimization toward rare classes. Two losses are
//! provided, each with exact analytic gradients:
//!
//! - [`prior_margin_ce`]: cross-entropy on margin-adjusted logits against a
//!   hard label (the fixed-margin training stage). With all margins zero it
//!   reduces to vanilla cross-entropy.
//! - [`adapt_distill_loss`]: cross-entropy against the average of a teacher's
//!   soft prediction and the hard label, evaluated on the student's
//!   margin-adjusted logits; the student's margins are learnable.
//!
//! Logit and margin vectors are laid out foreground classes first, the
//! background slot last, matching [`ClassPrior`].

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Per-class instance frequencies plus the background probability.
/// All entries are positive and the total is 1.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassPrior {
    foreground: Vec<f64>,
    background: f64,
}

impl ClassPrior {
    pub fn new(foreground: Vec<f64>, background: f64) -> Result<Self> {
        if foreground.is_empty() {
            return Err(Error::InvalidArgument(
                "prior needs at least one foreground class".into(),
            ));
        }
        if foreground.iter().any(|&p| !(p > 0.0)) || !(background > 0.0) {
            return Err(Error::InvalidArgument(
                "all prior probabilities must be > 0".into(),
            ));
        }
        let total: f64 = foreground.iter().sum::<f64>() + background;
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidArgument(format!(
                "prior probabilities must sum to 1, got {total}"
            )));
        }
        Ok(Self {
            foreground,
            background,
        })
    }

    pub fn foreground(&self) -> &[f64] {
        &self.foreground
    }

    pub fn background(&self) -> f64 {
        self.background
    }

    /// Foreground classes plus the background slot.
    pub fn num_slots(&self) -> usize {
        self.foreground.len() + 1
    }

    /// Probability for a slot index (background last).
    pub fn slot(&self, index: usize) -> f64 {
        if index < self.foreground.len() {
            self.foreground[index]
        } else {
            self.background
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let raw: ClassPrior = serde_json::from_str(text)?;
        Self::new(raw.foreground, raw.background)
    }
}

/// Per-class margins, background slot last. `learnable` marks the student's
/// adaptively trained margins; prior margins are fixed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MarginVector {
    pub margins: Vec<f64>,
    pub learnable: bool,
}

impl MarginVector {
    pub fn new(margins: Vec<f64>, learnable: bool) -> Result<Self> {
        if margins.iter().any(|m| !m.is_finite()) {
            return Err(Error::InvalidArgument("margins must be finite".into()));
        }
        Ok(Self { margins, learnable })
    }

    pub fn zeros(len: usize) -> Self {
        Self {
            margins: vec![0.0; len],
            learnable: false,
        }
    }

    pub fn len(&self) -> usize {
        self.margins.len()
    }

    pub fn is_empty(&self) -> bool {
        self.margins.is_empty()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let raw: MarginVector = serde_json::from_str(text)?;
        Self::new(raw.margins, raw.learnable)
    }
}

/// A teacher's soft prediction together with the hard label it will be
/// averaged with.
#[derive(Debug, Clone)]
pub struct SoftTarget {
    probs: Vec<f64>,
    label: usize,
}

impl SoftTarget {
    pub fn new(probs: Vec<f64>, label: usize) -> Result<Self> {
        if label >= probs.len() {
            return Err(Error::InvalidArgument(format!(
                "label {label} out of range for {} slots",
                probs.len()
            )));
        }
        if probs.iter().any(|&p| !(p >= 0.0)) {
            return Err(Error::InvalidArgument(
                "target probabilities must be >= 0".into(),
            ));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidArgument(format!(
                "target probabilities must sum to 1, got {total}"
            )));
        }
        Ok(Self { probs, label })
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn label(&self) -> usize {
        self.label
    }

    /// Mixed weight `(p_c + 1{c=label}) / 2` for slot `c`; sums to 1.
    pub fn mixed_weight(&self, c: usize) -> f64 {
        let y = if c == self.label { 1.0 } else { 0.0 };
        (self.probs[c] + y) / 2.0
    }
}

/// Gradients of a loss with respect to logits and margins.
#[derive(Debug, Clone)]
pub struct LossGrad {
    pub logits: Vec<f64>,
    pub margins: Vec<f64>,
}

/// `m_c = -log(p_c)` for every foreground class and the background slot.
/// The class with the smallest frequency gets the largest margin.
pub fn margins_from_prior(prior: &ClassPrior) -> MarginVector {
    let mut margins: Vec<f64> = prior.foreground().iter().map(|&p| -p.ln()).collect();
    margins.push(-prior.background().ln());
    MarginVector {
        margins,
        learnable: false,
    }
}

/// Log-softmax with max subtraction; safe for margins up to hundreds.
pub fn log_softmax(values: &[f64]) -> Vec<f64> {
    let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let log_sum = values.iter().map(|&v| (v - max).exp()).sum::<f64>().ln() + max;
    values.iter().map(|&v| v - log_sum).collect()
}

/// Softmax with max subtraction.
pub fn softmax(values: &[f64]) -> Vec<f64> {
    log_softmax(values).iter().map(|&l| l.exp()).collect()
}

fn check_lengths(logits: &[f64], margins: &MarginVector) -> Result<()> {
    if logits.len() != margins.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} logits vs {} margins",
            logits.len(),
            margins.len()
        )));
    }
    if logits.is_empty() {
        return Err(Error::InvalidArgument("empty logit vector".into()));
    }
    Ok(())
}

fn adjusted(logits: &[f64], margins: &MarginVector) -> Vec<f64> {
    logits
        .iter()
        .zip(&margins.margins)
        .map(|(&v, &m)| v - m)
        .collect()
}

/// Cross-entropy of the margin-adjusted logits at the hard label:
/// `-log softmax(v - m)[label]`.
pub fn prior_margin_ce(logits: &[f64], label: usize, margins: &MarginVector) -> Result<f64> {
    check_lengths(logits, margins)?;
    if label >= logits.len() {
        return Err(Error::InvalidArgument(format!(
            "label {label} out of range for {} slots",
            logits.len()
        )));
    }
    Ok(-log_softmax(&adjusted(logits, margins))[label])
}

/// Exact gradients of [`prior_margin_ce`]:
/// `d/dv_c = softmax(v - m)[c] - 1{c=label}`, `d/dm_c = -d/dv_c`.
pub fn prior_margin_ce_grad(
    logits: &[f64],
    label: usize,
    margins: &MarginVector,
) -> Result<LossGrad> {
    check_lengths(logits, margins)?;
    if label >= logits.len() {
        return Err(Error::InvalidArgument(format!(
            "label {label} out of range for {} slots",
            logits.len()
        )));
    }
    let probs = softmax(&adjusted(logits, margins));
    let d_logits: Vec<f64> = probs
        .iter()
        .enumerate()
        .map(|(c, &p)| p - if c == label { 1.0 } else { 0.0 })
        .collect();
    let d_margins = d_logits.iter().map(|&g| -g).collect();
    Ok(LossGrad {
        logits: d_logits,
        margins: d_margins,
    })
}

/// Teacher prediction for distillation: `softmax(v^t - m^t)` with the hard
/// label attached.
pub fn teacher_soft_target(
    teacher_logits: &[f64],
    teacher_margins: &MarginVector,
    label: usize,
) -> Result<SoftTarget> {
    check_lengths(teacher_logits, teacher_margins)?;
    SoftTarget::new(softmax(&adjusted(teacher_logits, teacher_margins)), label)
}

/// Distillation loss on the student's margin-adjusted logits:
/// `-sum_c (p_c^t + y_c)/2 * log softmax(v^s - m^s)[c]`.
///
/// With a one-hot teacher this equals [`prior_margin_ce`] at the label.
pub fn adapt_distill_loss(
    student_logits: &[f64],
    student_margins: &MarginVector,
    target: &SoftTarget,
) -> Result<f64> {
    check_lengths(student_logits, student_margins)?;
    if target.probs().len() != student_logits.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} target probs vs {} logits",
            target.probs().len(),
            student_logits.len()
        )));
    }
    let logp = log_softmax(&adjusted(student_logits, student_margins));
    Ok(-(0..logp.len())
        .map(|c| target.mixed_weight(c) * logp[c])
        .sum::<f64>())
}

/// Exact gradients of [`adapt_distill_loss`]:
/// `d/dv^s_c = softmax(v^s - m^s)[c] - (p_c^t + y_c)/2`, `d/dm^s_c = -d/dv^s_c`.
pub fn adapt_distill_grad(
    student_logits: &[f64],
    student_margins: &MarginVector,
    target: &SoftTarget,
) -> Result<LossGrad> {
    check_lengths(student_logits, student_margins)?;
    if target.probs().len() != student_logits.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} target probs vs {} logits",
            target.probs().len(),
            student_logits.len()
        )));
    }
    let probs = softmax(&adjusted(student_logits, student_margins));
    let d_logits: Vec<f64> = probs
        .iter()
        .enumerate()
        .map(|(c, &p)| p - target.mixed_weight(c))
        .collect();
    let d_margins = d_logits.iter().map(|&g| -g).collect();
    Ok(LossGrad {
        logits: d_logits,
        margins: d_margins,
    })
}
