//! Linear soft-margin SVM trained by dual coordinate descent, Platt
//! calibration and stratified k-fold grid search over `C`.
//!
//! The bias is handled as an extra constant feature, so the objective is
//! `½(‖w‖² + b²) + Σᵢ Cᵢ·max(0, 1 − yᵢ(w·xᵢ + b))`.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evaluation::roc_auc;
use crate::features::{class_counts, require_both_classes, FeatureMatrix};

pub const DEFAULT_C_GRID: [f64; 4] = [0.001, 0.01, 0.1, 1.0];

/// Bound on `|a·s + b|` inside the calibration sigmoid.
pub const LOGIT_CLIP: f64 = 30.0;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassWeighting {
    #[default]
    None,
    /// `Cᵢ = C · n / (2 · n_class(i))`.
    Balanced,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SvmOptions {
    /// Relative duality-gap tolerance.
    pub tol: f64,
    /// Cap on coordinate visits, in units of full sweeps (`n` visits each).
    /// Sweeps over a shrunk active set count only the visits they make.
    pub max_epochs: usize,
    pub seed: u64,
    pub class_weighting: ClassWeighting,
}

impl Default for SvmOptions {
    fn default() -> Self {
        SvmOptions {
            tol: 1e-6,
            max_epochs: 100_000,
            seed: 0,
            class_weighting: ClassWeighting::None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearClassifier {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub c: f64,
    pub platt_a: f64,
    pub platt_b: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainDiagnostics {
    pub epochs: usize,
    pub converged: bool,
    pub primal: f64,
    pub dual: f64,
    /// Dual minimisation objective `½‖w̃‖² − Σα` after each epoch.
    pub objective_history: Vec<f64>,
}

impl TrainDiagnostics {
    pub fn relative_gap(&self) -> f64 {
        (self.primal - self.dual) / self.primal.abs().max(1.0)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

impl LinearClassifier {
    pub fn decision_score(&self, x: &[f64]) -> f64 {
        dot(&self.weights, x) + self.bias
    }

    pub fn decision_scores(&self, features: &FeatureMatrix) -> Result<Vec<f64>> {
        if features.ncols() != self.weights.len() {
            return Err(Error::shape(format!(
                "classifier expects {} features, got {}",
                self.weights.len(),
                features.ncols()
            )));
        }
        Ok(features.rows_iter().map(|r| self.decision_score(r)).collect())
    }

    pub fn probability_of_score(&self, score: f64) -> f64 {
        sigmoid((self.platt_a * score + self.platt_b).clamp(-LOGIT_CLIP, LOGIT_CLIP))
    }

    pub fn probabilities(&self, features: &FeatureMatrix) -> Result<Vec<f64>> {
        Ok(self
            .decision_scores(features)?
            .into_iter()
            .map(|s| self.probability_of_score(s))
            .collect())
    }
}

pub fn train(features: &FeatureMatrix, labels: &[bool], c: f64) -> Result<LinearClassifier> {
    train_with_options(features, labels, c, &SvmOptions::default()).map(|(m, _)| m)
}

pub fn train_with_options(
    features: &FeatureMatrix,
    labels: &[bool],
    c: f64,
    opts: &SvmOptions,
) -> Result<(LinearClassifier, TrainDiagnostics)> {
    if features.nrows() != labels.len() {
        return Err(Error::shape(format!(
            "{} feature rows but {} labels",
            features.nrows(),
            labels.len()
        )));
    }
    if !(c > 0.0 && c.is_finite()) {
        return Err(Error::invalid(format!("regularization constant C = {c} must be > 0")));
    }
    let (np, nn) = require_both_classes(labels)?;
    features.check_finite()?;

    let n = labels.len();
    let d = features.ncols();
    let y: Vec<f64> = labels.iter().map(|&l| if l { 1.0 } else { -1.0 }).collect();
    let upper: Vec<f64> = labels
        .iter()
        .map(|&l| match opts.class_weighting {
            ClassWeighting::None => c,
            ClassWeighting::Balanced => c * n as f64 / (2.0 * if l { np } else { nn } as f64),
        })
        .collect();
    let qd: Vec<f64> = features.rows_iter().map(|r| dot(r, r) + 1.0).collect();

    let mut alpha = vec![0.0; n];
    let mut w = vec![0.0; d];
    let mut b = 0.0;
    let all: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut history = Vec::new();
    let mut epochs = 0;
    let budget = opts.max_epochs.saturating_mul(n);
    let mut visits = 0usize;
    let mut converged = false;
    let (mut primal, mut dual) = (f64::INFINITY, f64::NEG_INFINITY);

    // Shrinking: bound variables whose gradient points outward by more than
    // the previous epoch's violation spread leave the active set. The full
    // duality gap is checked only once the active spread falls below
    // `spread_tol`; a failed check restores every variable.
    let mut active = all.clone();
    let (mut pg_max_old, mut pg_min_old) = (f64::INFINITY, f64::NEG_INFINITY);
    let mut spread_tol = 0.1;
    while visits < budget {
        active.shuffle(&mut rng);
        visits += active.len();
        let (mut pg_max, mut pg_min) = (f64::NEG_INFINITY, f64::INFINITY);
        let mut k = 0;
        while k < active.len() {
            let i = active[k];
            let xi = features.row(i);
            let g = y[i] * (dot(&w, xi) + b) - 1.0;
            let pg = if alpha[i] == 0.0 {
                if g > pg_max_old {
                    active.swap_remove(k);
                    continue;
                }
                g.min(0.0)
            } else if alpha[i] == upper[i] {
                if g < pg_min_old {
                    active.swap_remove(k);
                    continue;
                }
                g.max(0.0)
            } else {
                g
            };
            pg_max = pg_max.max(pg);
            pg_min = pg_min.min(pg);
            if pg.abs() > 1e-12 {
                let old = alpha[i];
                alpha[i] = (old - g / qd[i]).clamp(0.0, upper[i]);
                let delta = (alpha[i] - old) * y[i];
                if delta != 0.0 {
                    w.iter_mut().zip(xi).for_each(|(wj, xj)| *wj += delta * xj);
                    b += delta;
                }
            }
            k += 1;
        }
        epochs += 1;

        let reg = 0.5 * (dot(&w, &w) + b * b);
        let alpha_sum: f64 = alpha.iter().sum();
        let objective = reg - alpha_sum;
        if let Some(&prev) = history.last() {
            let prev: f64 = prev;
            if objective > prev + 1e-10 * prev.abs().max(1.0) {
                return Err(Error::Numerical(format!(
                    "dual objective increased from {prev} to {objective} in epoch {epochs}"
                )));
            }
        }
        history.push(objective);

        let spread = if active.is_empty() { 0.0 } else { pg_max - pg_min };
        if spread > spread_tol {
            pg_max_old = if pg_max <= 0.0 { f64::INFINITY } else { pg_max };
            pg_min_old = if pg_min >= 0.0 { f64::NEG_INFINITY } else { pg_min };
            continue;
        }
        let hinge: f64 = (0..n)
            .map(|i| upper[i] * (1.0 - y[i] * (dot(&w, features.row(i)) + b)).max(0.0))
            .sum();
        primal = reg + hinge;
        dual = alpha_sum - reg;
        if (primal - dual) <= opts.tol * primal.abs().max(1.0) {
            converged = true;
            break;
        }
        active.clone_from(&all);
        (pg_max_old, pg_min_old) = (f64::INFINITY, f64::NEG_INFINITY);
        spread_tol = (spread_tol * 0.1).max(1e-14);
    }
    log::debug!("SVM (C = {c}, n = {n}, d = {d}): {epochs} epochs, converged = {converged}");
    if !converged {
        log::warn!(
            "SVM (C = {c}) stopped after {epochs} epochs with relative duality gap {:.3e}",
            (primal - dual) / primal.abs().max(1.0)
        );
    }
    Ok((
        LinearClassifier {
            weights: w,
            bias: b,
            c,
            platt_a: 1.0,
            platt_b: 0.0,
        },
        TrainDiagnostics {
            epochs,
            converged,
            primal,
            dual,
            objective_history: history,
        },
    ))
}

/// Maximum-likelihood logistic fit `P(y = 1 | s) = σ(a·s + b)`.
///
/// Diverging fits (separable scores) are scaled back so that `|a·s + b|` stays
/// within [`LOGIT_CLIP`] on the calibration scores.
pub fn calibrate(scores: &[f64], labels: &[bool]) -> Result<(f64, f64)> {
    if scores.len() != labels.len() {
        return Err(Error::shape("scores and labels differ in length"));
    }
    let (np, nn) = require_both_classes(labels)?;
    let n = scores.len() as f64;
    let prior = (np as f64 / nn as f64).ln();
    let mean = scores.iter().sum::<f64>() / n;
    let spread = scores.iter().map(|s| (s - mean).abs()).fold(0.0, f64::max);
    if spread <= 1e-12 * mean.abs().max(1.0) {
        return Ok((0.0, prior));
    }
    let t: Vec<f64> = labels.iter().map(|&l| if l { 1.0 } else { 0.0 }).collect();
    let nll = |a: f64, b: f64| -> f64 {
        scores
            .iter()
            .zip(&t)
            .map(|(&s, &ti)| {
                let f = a * s + b;
                // log(1 + e^f) − t·f, stable for large |f|
                let softplus = if f > 0.0 { f + (-f).exp().ln_1p() } else { f.exp().ln_1p() };
                softplus - ti * f
            })
            .sum()
    };
    let (mut a, mut b) = (0.0, prior);
    let mut value = nll(a, b);
    for _ in 0..200 {
        let (mut ga, mut gb, mut haa, mut hab, mut hbb) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for (&s, &ti) in scores.iter().zip(&t) {
            let p = sigmoid(a * s + b);
            let r = p - ti;
            let wgt = p * (1.0 - p);
            ga += r * s;
            gb += r;
            haa += wgt * s * s;
            hab += wgt * s;
            hbb += wgt;
        }
        if ga.abs().max(gb.abs()) < 1e-10 * n {
            break;
        }
        let ridge = 1e-12 * (haa + hbb).max(1e-300);
        let (haa, hbb) = (haa + ridge, hbb + ridge);
        let det = haa * hbb - hab * hab;
        let (da, db) = if det > 0.0 {
            (-(hbb * ga - hab * gb) / det, -(haa * gb - hab * ga) / det)
        } else {
            (-ga, -gb)
        };
        let mut step = 1.0;
        let mut improved = false;
        while step > 1e-10 {
            let (na, nb) = (a + step * da, b + step * db);
            let nv = nll(na, nb);
            if nv < value {
                a = na;
                b = nb;
                value = nv;
                improved = true;
                break;
            }
            step *= 0.5;
        }
        let reach = scores.iter().map(|&s| (a * s + b).abs()).fold(0.0, f64::max);
        if !improved || reach > LOGIT_CLIP {
            break;
        }
    }
    let reach = scores.iter().map(|&s| (a * s + b).abs()).fold(0.0, f64::max);
    if reach > LOGIT_CLIP {
        let shrink = LOGIT_CLIP / reach;
        a *= shrink;
        b *= shrink;
    }
    Ok((a, b))
}

/// Fold id per sample; each class is shuffled with `seed` and dealt
/// round-robin so per-fold class counts differ by at most one.
pub fn stratified_folds(labels: &[bool], folds: usize, seed: u64) -> Result<Vec<usize>> {
    if folds < 2 {
        return Err(Error::invalid(format!("need at least 2 folds, got {folds}")));
    }
    if labels.len() < folds {
        return Err(Error::invalid(format!(
            "{} samples cannot fill {folds} folds",
            labels.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pos: Vec<usize> = (0..labels.len()).filter(|&i| labels[i]).collect();
    let mut neg: Vec<usize> = (0..labels.len()).filter(|&i| !labels[i]).collect();
    pos.shuffle(&mut rng);
    neg.shuffle(&mut rng);
    let mut assignment = vec![0; labels.len()];
    for (slot, &i) in pos.iter().chain(&neg).enumerate() {
        assignment[i] = slot % folds;
    }
    for f in 0..folds {
        let (p, n) = class_counts(
            &(0..labels.len())
                .filter(|&i| assignment[i] == f)
                .map(|i| labels[i])
                .collect::<Vec<_>>(),
        );
        if p == 0 || n == 0 {
            return Err(Error::FoldMissingClass {
                fold: f,
                positives: p,
                negatives: n,
            });
        }
    }
    Ok(assignment)
}

/// Supplies per-fold feature matrices whose fitted statistics come only from
/// the training rows of that fold.
pub trait FoldFeatures {
    fn n_samples(&self) -> usize;
    fn prepare(&self, train: &[usize], eval: &[usize]) -> Result<(FeatureMatrix, FeatureMatrix)>;
}

impl FoldFeatures for FeatureMatrix {
    fn n_samples(&self) -> usize {
        self.nrows()
    }

    fn prepare(&self, train: &[usize], eval: &[usize]) -> Result<(FeatureMatrix, FeatureMatrix)> {
        Ok((self.select_rows(train), self.select_rows(eval)))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CvCell {
    pub c: f64,
    pub fold: usize,
    pub auc: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GridSearchResult {
    pub best_c: f64,
    pub best_mean_auc: f64,
    /// `(C, mean validation AUC)` in ascending `C`.
    pub mean_auc: Vec<(f64, f64)>,
    pub cv_table: Vec<CvCell>,
    /// Out-of-fold decision scores for `best_c`, indexed like the input.
    pub oof_scores: Vec<f64>,
}

pub fn grid_search_cv<F: FoldFeatures + ?Sized>(
    data: &F,
    labels: &[bool],
    grid: &[f64],
    folds: usize,
    seed: u64,
    opts: &SvmOptions,
) -> Result<GridSearchResult> {
    if data.n_samples() != labels.len() {
        return Err(Error::shape("feature rows and labels differ in length"));
    }
    let mut cs: Vec<f64> = grid.to_vec();
    if cs.is_empty() || cs.iter().any(|c| !(*c > 0.0)) {
        return Err(Error::invalid(format!("invalid C grid {grid:?}")));
    }
    cs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    cs.dedup();
    require_both_classes(labels)?;
    let assignment = stratified_folds(labels, folds, seed)?;

    let mut cv_table = Vec::with_capacity(cs.len() * folds);
    let mut oof: Vec<Vec<f64>> = vec![vec![0.0; labels.len()]; cs.len()];
    for f in 0..folds {
        let train: Vec<usize> = (0..labels.len()).filter(|&i| assignment[i] != f).collect();
        let eval: Vec<usize> = (0..labels.len()).filter(|&i| assignment[i] == f).collect();
        let (xtr, xev) = data.prepare(&train, &eval)?;
        let ytr: Vec<bool> = train.iter().map(|&i| labels[i]).collect();
        let yev: Vec<bool> = eval.iter().map(|&i| labels[i]).collect();
        for (ci, &c) in cs.iter().enumerate() {
            let fold_opts = SvmOptions {
                seed: opts.seed.wrapping_add(f as u64),
                ..*opts
            };
            let (clf, _) = train_with_options(&xtr, &ytr, c, &fold_opts)?;
            let scores = clf.decision_scores(&xev)?;
            for (&i, &s) in eval.iter().zip(&scores) {
                oof[ci][i] = s;
            }
            cv_table.push(CvCell {
                c,
                fold: f,
                auc: roc_auc(&scores, &yev)?,
            });
        }
    }
    let mean_auc: Vec<(f64, f64)> = cs
        .iter()
        .map(|&c| {
            let cells: Vec<f64> = cv_table.iter().filter(|x| x.c == c).map(|x| x.auc).collect();
            (c, cells.iter().sum::<f64>() / cells.len() as f64)
        })
        .collect();
    let mut best = 0;
    for (i, &(_, m)) in mean_auc.iter().enumerate() {
        if m > mean_auc[best].1 {
            best = i;
        }
    }
    cv_table.sort_by(|a, b| a.c.partial_cmp(&b.c).unwrap().then(a.fold.cmp(&b.fold)));
    Ok(GridSearchResult {
        best_c: mean_auc[best].0,
        best_mean_auc: mean_auc[best].1,
        mean_auc,
        cv_table,
        oof_scores: oof.swap_remove(best),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand_distr::{Distribution, Normal};

    fn clusters(n: usize, gap: f64, seed: u64) -> (FeatureMatrix, Vec<bool>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let noise = Normal::new(0.0, 0.3).unwrap();
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for i in 0..n {
            let y = i % 2 == 0;
            let centre = if y { gap } else { -gap };
            rows.push(vec![centre + noise.sample(&mut rng), noise.sample(&mut rng)]);
            labels.push(y);
        }
        (FeatureMatrix::from_rows(&rows).unwrap(), labels)
    }

    #[test]
    fn separable_clusters_fit_perfectly() {
        let (x, y) = clusters(60, 2.0, 1);
        let (clf, diag) = train_with_options(&x, &y, 1.0, &SvmOptions::default()).unwrap();
        assert!(diag.converged);
        assert!(diag.relative_gap() <= 1e-6);
        let scores = clf.decision_scores(&x).unwrap();
        let acc = scores.iter().zip(&y).filter(|(s, &l)| (**s > 0.0) == l).count();
        assert_eq!(acc, 60);
        for w in diag.objective_history.windows(2) {
            assert!(w[1] <= w[0] + 1e-12);
        }
        // Support vectors on the margin score close to ±1.
        let closest = scores.iter().map(|s| s.abs()).fold(f64::INFINITY, f64::min);
        assert!((closest - 1.0).abs() < 1e-3, "closest margin {closest}");
    }

    #[test]
    fn flipped_labels_negate_weights() {
        let (x, y) = clusters(40, 1.0, 2);
        let flipped: Vec<bool> = y.iter().map(|v| !v).collect();
        let a = train(&x, &y, 0.5).unwrap();
        let b = train(&x, &flipped, 0.5).unwrap();
        for (wa, wb) in a.weights.iter().zip(&b.weights) {
            assert!((wa + wb).abs() < 1e-6);
        }
        assert!((a.bias + b.bias).abs() < 1e-6);
    }

    #[test]
    fn one_dimensional_hinge_oracle() {
        // Minimising ½(w² + b²) + C·Σ hinge on x = ±1: b = 0 by symmetry and the
        // hinge vanishes once w ≥ 1, so the optimum is w = 1 for C ≥ 1/2.
        let x = FeatureMatrix::from_rows(&[vec![-1.0], vec![1.0]]).unwrap();
        let y = [false, true];
        let clf = train(&x, &y, 100.0).unwrap();
        assert!(clf.weights[0] >= 1.0 - 1e-6);
        assert!((clf.weights[0] - 1.0).abs() < 1e-6);
        let s = clf.decision_scores(&x).unwrap();
        assert!(s[0] < 0.0 && s[1] > 0.0);
    }

    #[test]
    fn decision_scores_are_linear() {
        let x = FeatureMatrix::from_rows(&[vec![1.0, 2.0], vec![-3.0, 0.5]]).unwrap();
        let zero = LinearClassifier { weights: vec![0.0, 0.0], bias: 0.0, c: 1.0, platt_a: 1.0, platt_b: 0.0 };
        assert_eq!(zero.decision_scores(&x).unwrap(), vec![0.0, 0.0]);
        let clf = LinearClassifier { weights: vec![0.5, -1.0], ..zero.clone() };
        let double = LinearClassifier { weights: vec![1.0, -2.0], ..zero.clone() };
        let s1 = clf.decision_scores(&x).unwrap();
        let s2 = double.decision_scores(&x).unwrap();
        for (a, b) in s1.iter().zip(&s2) {
            assert_eq!(2.0 * a, *b);
        }
        assert!(clf.decision_scores(&FeatureMatrix::zeros(1, 3)).is_err());
    }

    #[test]
    fn train_rejects_bad_input() {
        let x = FeatureMatrix::from_rows(&[vec![1.0], vec![2.0]]).unwrap();
        assert!(matches!(train(&x, &[true, true], 1.0), Err(Error::SingleClass { .. })));
        let bad = FeatureMatrix::from_rows(&[vec![f64::NAN], vec![2.0]]).unwrap();
        assert!(train(&bad, &[true, false], 1.0).is_err());
    }

    #[test]
    fn zero_column_does_not_change_ranking() {
        let (x, y) = clusters(50, 0.4, 3);
        let padded = FeatureMatrix::hstack(&[&x, &FeatureMatrix::zeros(50, 1)]).unwrap();
        let a = train(&x, &y, 0.1).unwrap().decision_scores(&x).unwrap();
        let b = train(&padded, &y, 0.1).unwrap().decision_scores(&padded).unwrap();
        assert!((roc_auc(&a, &y).unwrap() - roc_auc(&b, &y).unwrap()).abs() < 1e-4);
    }

    #[test]
    fn balanced_weighting_trains() {
        let (x, mut y) = clusters(60, 0.5, 4);
        for v in y.iter_mut().skip(10).step_by(3) {
            *v = false;
        }
        let opts = SvmOptions { class_weighting: ClassWeighting::Balanced, ..Default::default() };
        let (_, diag) = train_with_options(&x, &y, 0.5, &opts).unwrap();
        assert!(diag.converged);
    }

    #[test]
    fn calibration_rules() {
        let labels = [true, false, false, true, false];
        let (a, b) = calibrate(&[0.7; 5], &labels).unwrap();
        assert_eq!(a, 0.0);
        let clf = LinearClassifier { weights: vec![], bias: 0.0, c: 1.0, platt_a: a, platt_b: b };
        assert!((clf.probability_of_score(0.7) - 0.4).abs() < 1e-12);

        let sep_scores = [-2.0, -1.0, -0.5, 0.5, 1.0, 2.0];
        let sep_labels = [false, false, false, true, true, true];
        let (a, b) = calibrate(&sep_scores, &sep_labels).unwrap();
        for s in sep_scores {
            assert!((a * s + b).abs() <= LOGIT_CLIP + 1e-9);
        }
        let clf = LinearClassifier { weights: vec![], bias: 0.0, c: 1.0, platt_a: a, platt_b: b };
        for s in [-1e6, 1e6] {
            let p = clf.probability_of_score(s);
            assert!(p >= sigmoid(-LOGIT_CLIP) && p <= sigmoid(LOGIT_CLIP));
        }

        // Symmetric likelihood: s = ±1, 3:1 and 1:3 label splits → b = 0, a = ln 3.
        let scores = [1.0, 1.0, 1.0, 1.0, -1.0, -1.0, -1.0, -1.0];
        let labels = [true, true, true, false, true, false, false, false];
        let (a, b) = calibrate(&scores, &labels).unwrap();
        assert!(b.abs() < 1e-3);
        assert!((a - 3f64.ln()).abs() < 1e-6);
        assert!(calibrate(&[0.1, 0.2], &[true, true]).is_err());
    }

    #[test]
    fn calibrated_probabilities_monotone() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let scores: Vec<f64> = (0..100).map(|_| rng.random_range(-2.0..2.0)).collect();
        let labels: Vec<bool> = scores.iter().map(|s| *s + rng.random_range(-1.0..1.0) > 0.0).collect();
        let (a, b) = calibrate(&scores, &labels).unwrap();
        assert!(a > 0.0);
        let clf = LinearClassifier { weights: vec![], bias: 0.0, c: 1.0, platt_a: a, platt_b: b };
        let mut sorted = scores.clone();
        sorted.sort_by(|x, y| x.partial_cmp(y).unwrap());
        let probs: Vec<f64> = sorted.iter().map(|&s| clf.probability_of_score(s)).collect();
        assert!(probs.windows(2).all(|w| w[1] >= w[0]));
    }

    #[test]
    fn stratified_counts() {
        let labels: Vec<bool> = (0..103).map(|i| i % 3 == 0).collect();
        let folds = stratified_folds(&labels, 10, 9).unwrap();
        let pos = labels.iter().filter(|&&y| y).count() as f64;
        for f in 0..10 {
            let p = (0..103).filter(|&i| folds[i] == f && labels[i]).count() as f64;
            assert!((p - pos / 10.0).abs() < 1.0);
        }
        assert_eq!(folds, stratified_folds(&labels, 10, 9).unwrap());
        let rare: Vec<bool> = (0..40).map(|i| i < 3).collect();
        assert!(matches!(
            stratified_folds(&rare, 10, 0),
            Err(Error::FoldMissingClass { .. })
        ));
    }

    #[test]
    fn grid_edge_cases() {
        let (x, y) = clusters(60, 0.5, 6);
        let single = grid_search_cv(&x, &y, &[0.1], 10, 1, &SvmOptions::default()).unwrap();
        assert_eq!(single.best_c, 0.1);
        assert_eq!(single.cv_table.len(), 10);
        let dup = grid_search_cv(&x, &y, &[0.1, 0.1], 10, 1, &SvmOptions::default()).unwrap();
        assert_eq!(dup.best_c, 0.1);
        assert_eq!(dup.cv_table.len(), 10);
    }
}
