//! Detection metrics: AUC of the ROC curve (rank statistic with midrank tie
//! handling) and of the precision-recall curve (average precision with
//! grouped thresholds), plus the tolerance sweep over window labels.

mod svg;

pub use svg::{line_plot, PlotSeries};

use crate::error::{Error, Result};

/// Whether scores are per frame or per window.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ScoreLevel {
    Frame,
    Window,
}

impl ScoreLevel {
    pub fn as_str(self) -> &'static str {
        match self {
            ScoreLevel::Frame => "frame",
            ScoreLevel::Window => "window",
        }
    }
}

/// Paired scores and binary labels for one metric evaluation.
#[derive(Clone, Debug)]
pub struct ScoredSet {
    pub scores: Vec<f64>,
    pub labels: Vec<bool>,
    /// Score variant tag ("ROI-score", "Thermal Diff-score", "plain", ...).
    pub variant: String,
    pub level: ScoreLevel,
    /// Window-label tolerance, window level only.
    pub alpha: Option<usize>,
}

impl ScoredSet {
    pub fn new(scores: Vec<f64>, labels: Vec<bool>) -> ScoredSet {
        ScoredSet {
            scores,
            labels,
            variant: String::new(),
            level: ScoreLevel::Frame,
            alpha: None,
        }
    }

    fn check(&self) -> Result<(usize, usize)> {
        if self.scores.len() != self.labels.len() || self.scores.is_empty() {
            return Err(Error::Eval("scores and labels must pair up and be non-empty".into()));
        }
        let pos = self.labels.iter().filter(|&&l| l).count();
        Ok((pos, self.labels.len() - pos))
    }
}

/// AUC of the ROC curve: the Mann-Whitney statistic
/// P(score_fall > score_normal) + 0.5 P(tie), via midrank rank sums.
pub fn roc_auc(set: &ScoredSet) -> Result<f64> {
    let (pos, neg) = set.check()?;
    if pos == 0 || neg == 0 {
        return Err(Error::Eval(format!(
            "ROC AUC undefined: {pos} positives, {neg} negatives"
        )));
    }
    let n = set.scores.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| set.scores[a].partial_cmp(&set.scores[b]).unwrap());
    // Midranks over tie groups.
    let mut rank_sum_pos = 0.0f64;
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && set.scores[order[j + 1]] == set.scores[order[i]] {
            j += 1;
        }
        let midrank = (i + j) as f64 / 2.0 + 1.0;
        for &idx in &order[i..=j] {
            if set.labels[idx] {
                rank_sum_pos += midrank;
            }
        }
        i = j + 1;
    }
    let pos_f = pos as f64;
    Ok((rank_sum_pos - pos_f * (pos_f + 1.0) / 2.0) / (pos_f * neg as f64))
}

/// AUC of the precision-recall curve as average precision: descending-score
/// step sum with tied scores grouped into one threshold.
pub fn pr_auc(set: &ScoredSet) -> Result<f64> {
    let (pos, _neg) = set.check()?;
    if pos == 0 {
        return Err(Error::Eval("PR AUC undefined without positives".into()));
    }
    let n = set.scores.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| set.scores[b].partial_cmp(&set.scores[a]).unwrap());
    let mut ap = 0.0f64;
    let mut tp = 0usize;
    let mut fp = 0usize;
    let mut prev_recall = 0.0f64;
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && set.scores[order[j + 1]] == set.scores[order[i]] {
            j += 1;
        }
        for &idx in &order[i..=j] {
            if set.labels[idx] {
                tp += 1;
            } else {
                fp += 1;
            }
        }
        let recall = tp as f64 / pos as f64;
        let precision = tp as f64 / (tp + fp) as f64;
        ap += (recall - prev_recall) * precision;
        prev_recall = recall;
        i = j + 1;
    }
    Ok(ap)
}

/// ROC curve points (fpr, tpr) for plotting, thresholds descending.
pub fn roc_curve(set: &ScoredSet) -> Result<Vec<(f64, f64)>> {
    let (pos, neg) = set.check()?;
    if pos == 0 || neg == 0 {
        return Err(Error::Eval("ROC curve undefined with one class".into()));
    }
    let n = set.scores.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| set.scores[b].partial_cmp(&set.scores[a]).unwrap());
    let mut pts = vec![(0.0, 0.0)];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && set.scores[order[j + 1]] == set.scores[order[i]] {
            j += 1;
        }
        for &idx in &order[i..=j] {
            if set.labels[idx] {
                tp += 1;
            } else {
                fp += 1;
            }
        }
        pts.push((fp as f64 / neg as f64, tp as f64 / pos as f64));
        i = j + 1;
    }
    Ok(pts)
}

/// PR curve points (recall, precision), thresholds descending.
pub fn pr_curve(set: &ScoredSet) -> Result<Vec<(f64, f64)>> {
    let (pos, _) = set.check()?;
    if pos == 0 {
        return Err(Error::Eval("PR curve undefined without positives".into()));
    }
    let n = set.scores.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| set.scores[b].partial_cmp(&set.scores[a]).unwrap());
    let mut pts = Vec::new();
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && set.scores[order[j + 1]] == set.scores[order[i]] {
            j += 1;
        }
        for &idx in &order[i..=j] {
            if set.labels[idx] {
                tp += 1;
            } else {
                fp += 1;
            }
        }
        pts.push((tp as f64 / pos as f64, tp as f64 / (tp + fp) as f64));
        i = j + 1;
    }
    Ok(pts)
}

/// Window scores of one (variant, alpha) cell of the tolerance sweep.
#[derive(Clone, Debug)]
pub struct WindowScoreSet {
    pub variant: String,
    pub alpha: usize,
    pub w_mu: Vec<f64>,
    pub w_sigma: Vec<f64>,
    pub labels: Vec<bool>,
}

/// One row of the tolerance-sweep table.
#[derive(Clone, Debug, PartialEq)]
pub struct SweepRow {
    pub alpha: usize,
    pub variant: String,
    /// "w_mu" or "w_sigma".
    pub stat: &'static str,
    pub roc_auc: Option<f64>,
    pub pr_auc: Option<f64>,
    pub positives: usize,
}

/// Evaluates both window statistics for every supplied alpha.
pub fn tolerance_sweep(cells: &[WindowScoreSet]) -> Vec<SweepRow> {
    let mut rows = Vec::new();
    for cell in cells {
        let positives = cell.labels.iter().filter(|&&l| l).count();
        for (stat, scores) in [("w_mu", &cell.w_mu), ("w_sigma", &cell.w_sigma)] {
            let set = ScoredSet {
                scores: scores.clone(),
                labels: cell.labels.clone(),
                variant: cell.variant.clone(),
                level: ScoreLevel::Window,
                alpha: Some(cell.alpha),
            };
            rows.push(SweepRow {
                alpha: cell.alpha,
                variant: cell.variant.clone(),
                stat,
                roc_auc: roc_auc(&set).ok(),
                pr_auc: pr_auc(&set).ok(),
                positives,
            });
        }
    }
    rows
}

pub const SWEEP_CSV_HEADER: &str = "alpha,variant,stat,roc_auc,pr_auc,positives";

pub fn sweep_csv_line(row: &SweepRow) -> String {
    let fmt = |v: Option<f64>| v.map_or("NA".to_string(), |x| format!("{x}"));
    format!(
        "{},{},{},{},{},{}",
        row.alpha,
        row.variant,
        row.stat,
        fmt(row.roc_auc),
        fmt(row.pr_auc),
        row.positives
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// O(n^2) pairwise oracle: P(pos > neg) + 0.5 P(tie).
    fn roc_oracle(scores: &[f64], labels: &[bool]) -> f64 {
        let mut num = 0.0;
        let mut den = 0.0;
        for (i, &li) in labels.iter().enumerate() {
            if !li {
                continue;
            }
            for (j, &lj) in labels.iter().enumerate() {
                if lj {
                    continue;
                }
                den += 1.0;
                if scores[i] > scores[j] {
                    num += 1.0;
                } else if scores[i] == scores[j] {
                    num += 0.5;
                }
            }
        }
        num / den
    }

    /// Enumeration oracle: recount the confusion at every distinct threshold.
    fn pr_oracle(scores: &[f64], labels: &[bool]) -> f64 {
        let mut thresholds: Vec<f64> = scores.to_vec();
        thresholds.sort_by(|a, b| b.partial_cmp(a).unwrap());
        thresholds.dedup();
        let pos = labels.iter().filter(|&&l| l).count() as f64;
        let mut ap = 0.0;
        let mut prev_recall = 0.0;
        for &t in &thresholds {
            let tp = scores
                .iter()
                .zip(labels)
                .filter(|&(&s, &l)| s >= t && l)
                .count() as f64;
            let fp = scores
                .iter()
                .zip(labels)
                .filter(|&(&s, &l)| s >= t && !l)
                .count() as f64;
            let recall = tp / pos;
            let precision = tp / (tp + fp);
            ap += (recall - prev_recall) * precision;
            prev_recall = recall;
        }
        ap
    }

    #[test]
    fn perfectly_separated_scores_have_auc_one() {
        let set = ScoredSet::new(
            vec![0.9, 0.8, 0.85, 0.1, 0.2, 0.15],
            vec![true, true, true, false, false, false],
        );
        assert_eq!(roc_auc(&set).unwrap(), 1.0);
        assert_eq!(pr_auc(&set).unwrap(), 1.0);
    }

    #[test]
    fn all_tied_scores_give_half_roc_and_prevalence_pr() {
        let set = ScoredSet::new(vec![0.5; 10], {
            let mut l = vec![false; 10];
            l[0] = true;
            l[1] = true;
            l[2] = true;
            l
        });
        assert_eq!(roc_auc(&set).unwrap(), 0.5);
        assert!((pr_auc(&set).unwrap() - 0.3).abs() < 1e-12);
    }

    #[test]
    fn single_class_input_is_reported_undefined() {
        let all_neg = ScoredSet::new(vec![0.4, 0.6], vec![false, false]);
        assert!(roc_auc(&all_neg).is_err());
        assert!(pr_auc(&all_neg).is_err());
        let all_pos = ScoredSet::new(vec![0.4, 0.6], vec![true, true]);
        assert!(roc_auc(&all_pos).is_err());
    }

    #[test]
    fn roc_matches_pairwise_oracle_on_random_sets() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..120 {
            let n = 50;
            // Quantized scores force plenty of ties.
            let scores: Vec<f64> = (0..n).map(|_| rng.gen_range(0..12) as f64 / 4.0).collect();
            let mut labels: Vec<bool> = (0..n).map(|_| rng.gen_bool(0.3)).collect();
            labels[0] = true;
            labels[1] = false;
            let set = ScoredSet::new(scores.clone(), labels.clone());
            let got = roc_auc(&set).unwrap();
            let want = roc_oracle(&scores, &labels);
            assert!((got - want).abs() < 1e-9, "{got} vs {want}");
        }
    }

    #[test]
    fn pr_matches_enumeration_oracle_on_random_sets() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..120 {
            let n = 40;
            let scores: Vec<f64> = (0..n).map(|_| rng.gen_range(0..10) as f64 / 3.0).collect();
            let mut labels: Vec<bool> = (0..n).map(|_| rng.gen_bool(0.25)).collect();
            labels[0] = true;
            let set = ScoredSet::new(scores.clone(), labels.clone());
            let got = pr_auc(&set).unwrap();
            let want = pr_oracle(&scores, &labels);
            assert!((got - want).abs() < 1e-9, "{got} vs {want}");
        }
    }

    #[test]
    fn roc_is_invariant_under_increasing_transforms() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let scores: Vec<f64> = (0..60).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let labels: Vec<bool> = (0..60).map(|i| i % 3 == 0).collect();
        let base = roc_auc(&ScoredSet::new(scores.clone(), labels.clone())).unwrap();
        let warped: Vec<f64> = scores.iter().map(|&s| (3.0 * s).exp() + 5.0).collect();
        let got = roc_auc(&ScoredSet::new(warped, labels)).unwrap();
        assert!((base - got).abs() < 1e-12);
    }

    #[test]
    fn roc_complement_under_score_negation() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        // Tie-free scores.
        let mut scores: Vec<f64> = (0..50).map(|i| i as f64).collect();
        for s in scores.iter_mut() {
            *s += rng.gen_range(0.0..0.5);
        }
        let labels: Vec<bool> = (0..50).map(|_| rng.gen_bool(0.4)).collect();
        if !labels.iter().any(|&l| l) || labels.iter().all(|&l| l) {
            return;
        }
        let a = roc_auc(&ScoredSet::new(scores.clone(), labels.clone())).unwrap();
        let b = roc_auc(&ScoredSet::new(
            scores.iter().map(|&s| -s).collect(),
            labels,
        ))
        .unwrap();
        assert!((a + b - 1.0).abs() < 1e-12);
    }

    #[test]
    fn sweep_produces_two_rows_per_cell_and_handles_degenerate_alpha() {
        let cells = vec![
            WindowScoreSet {
                variant: "ROI-score".into(),
                alpha: 1,
                w_mu: vec![0.9, 0.1, 0.8, 0.2],
                w_sigma: vec![0.5, 0.1, 0.6, 0.2],
                labels: vec![true, false, true, false],
            },
            WindowScoreSet {
                variant: "ROI-score".into(),
                alpha: 8,
                w_mu: vec![0.9, 0.1, 0.8, 0.2],
                w_sigma: vec![0.5, 0.1, 0.6, 0.2],
                labels: vec![false; 4], // nothing reaches alpha = 8
            },
        ];
        let rows = tolerance_sweep(&cells);
        assert_eq!(rows.len(), 4);
        assert_eq!(rows[0].roc_auc, Some(1.0));
        assert_eq!(rows[0].pr_auc, Some(1.0));
        assert_eq!(rows[2].roc_auc, None);
        assert!(sweep_csv_line(&rows[2]).contains("NA"));
    }

    #[test]
    fn separable_synthetic_data_sweeps_to_auc_one_at_every_alpha() {
        let mut cells = Vec::new();
        for alpha in 1..=8 {
            // Fall windows score an order of magnitude higher at any alpha.
            cells.push(WindowScoreSet {
                variant: "Diff-score".into(),
                alpha,
                w_mu: vec![1.0, 1.1, 0.1, 0.05, 0.08],
                w_sigma: vec![0.9, 1.0, 0.1, 0.02, 0.03],
                labels: vec![true, true, false, false, false],
            });
        }
        for row in tolerance_sweep(&cells) {
            assert_eq!(row.roc_auc, Some(1.0));
            assert_eq!(row.pr_auc, Some(1.0));
        }
    }
}
