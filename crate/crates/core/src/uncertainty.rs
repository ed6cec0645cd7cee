//! Predictive-uncertainty decomposition and ROC/AUC evaluation.
//!
//! Total uncertainty is the entropy of the marginal prediction; aleatoric
//! uncertainty is the mean entropy of the individual predictors; epistemic
//! uncertainty is their difference. All entropies are in nats.

use crate::engine::PredictorSet;
use crate::error::{Error, Result};

/// Shannon entropy in nats; 0 log 0 = 0.
pub fn entropy(p: &[f64]) -> f64 {
    p.iter().filter(|&&x| x > 0.0).map(|&x| -x * x.ln()).sum()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UncertaintyTriple {
    pub total: f64,
    pub aleatoric: f64,
    pub epistemic: f64,
}

/// Decompose the predictive uncertainty of one ensemble prediction.
/// epistemic = total - aleatoric by construction.
pub fn decompose(ps: &PredictorSet) -> UncertaintyTriple {
    let total = entropy(&ps.marginal());
    let aleatoric =
        ps.predictors.iter().map(|p| entropy(p)).sum::<f64>() / ps.predictors.len() as f64;
    UncertaintyTriple { total, aleatoric, epistemic: total - aleatoric }
}

/// One ROC operating point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RocPoint {
    pub fpr: f64,
    pub tpr: f64,
    pub threshold: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RocCurve {
    pub points: Vec<RocPoint>,
    pub auc: f64,
}

/// ROC curve for "higher score means positive", with trapezoidal AUC.
/// Tied scores move along the curve together, so the AUC equals the
/// Mann-Whitney statistic with ties counted half.
pub fn roc_curve(scores: &[f64], positive: &[bool]) -> Result<RocCurve> {
    if scores.len() != positive.len() {
        return Err(Error::Shape(format!(
            "{} scores for {} labels",
            scores.len(),
            positive.len()
        )));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::Range("NaN score in ROC input".into()));
    }
    let p = positive.iter().filter(|&&b| b).count();
    let n = positive.len() - p;
    if p == 0 || n == 0 {
        return Err(Error::Infeasible(
            "ROC needs at least one positive and one negative".into(),
        ));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap());

    let mut points = vec![RocPoint { fpr: 0.0, tpr: 0.0, threshold: f64::INFINITY }];
    let mut tp = 0usize;
    let mut fp = 0usize;
    let mut auc = 0.0;
    let mut i = 0;
    while i < order.len() {
        // advance over the whole tie group at once
        let s = scores[order[i]];
        let (prev_tp, prev_fp) = (tp, fp);
        while i < order.len() && scores[order[i]] == s {
            if positive[order[i]] {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        let (x0, y0) = (prev_fp as f64 / n as f64, prev_tp as f64 / p as f64);
        let (x1, y1) = (fp as f64 / n as f64, tp as f64 / p as f64);
        auc += (x1 - x0) * (y0 + y1) / 2.0;
        points.push(RocPoint { fpr: x1, tpr: y1, threshold: s });
    }
    Ok(RocCurve { points, auc })
}

/// Aleatoric discrimination: does U_a separate misclassified from correctly
/// classified inputs? Misclassified inputs are the positives.
pub fn aleatoric_roc(
    triples: &[UncertaintyTriple],
    predicted: &[usize],
    labels: &[usize],
) -> Result<RocCurve> {
    if triples.len() != predicted.len() || triples.len() != labels.len() {
        return Err(Error::Shape("uncertainty/prediction/label length mismatch".into()));
    }
    let scores: Vec<f64> = triples.iter().map(|t| t.aleatoric).collect();
    let positive: Vec<bool> = predicted.iter().zip(labels).map(|(p, l)| p != l).collect();
    roc_curve(&scores, &positive)
}

/// Epistemic discrimination: does U_e separate out-of-distribution inputs
/// from in-distribution ones? OOD inputs are the positives.
pub fn epistemic_roc(
    in_dist: &[UncertaintyTriple],
    out_dist: &[UncertaintyTriple],
) -> Result<RocCurve> {
    let scores: Vec<f64> = in_dist
        .iter()
        .chain(out_dist)
        .map(|t| t.epistemic)
        .collect();
    let positive: Vec<bool> = std::iter::repeat(false)
        .take(in_dist.len())
        .chain(std::iter::repeat(true).take(out_dist.len()))
        .collect();
    roc_curve(&scores, &positive)
}
