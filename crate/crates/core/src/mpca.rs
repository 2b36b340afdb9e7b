//! Multilinear principal component analysis and Fisher-score feature ranking.
//!
//! [`fit`] learns one orthonormal projection per mode so that the total
//! scatter of the projected, mean-centred tensors is maximal. Output sizes
//! come from a per-mode explained-variance ratio evaluated on the full
//! mode-`n` scatter; the projections are then refined by alternating over the
//! modes, each time taking the leading eigenvectors of the partial scatter
//! built with the other modes' current projections. Every mode update can only
//! increase the captured scatter, which [`fit`] checks.

use nalgebra::{DMatrix, SymmetricEigen};
use std::borrow::Borrow;
use std::cmp::Ordering;
use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::features::{require_both_classes, FeatureMatrix};
use crate::tensor::{accumulate_gram, mode_product, Mode, ReducedTensor, Tensor3};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MpcaConfig {
    pub variance_ratio: f64,
    pub max_iter: usize,
    pub tol: f64,
}

impl Default for MpcaConfig {
    fn default() -> Self {
        MpcaConfig {
            variance_ratio: 0.97,
            max_iter: 15,
            tol: 1e-6,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MpcaModel {
    pub mean: Tensor3,
    /// `U⁽ⁿ⁾` with shape `Iₙ × Pₙ` and orthonormal columns.
    pub projections: [DMatrix<f64>; 3],
    pub variance_ratio: f64,
    /// Total scatter of the centred inputs.
    pub input_scatter: f64,
    /// Total scatter of the projected inputs after the last sweep.
    pub captured_scatter: f64,
    /// Captured scatter after initialisation and after each sweep.
    pub scatter_history: Vec<f64>,
    pub iterations_run: usize,
    /// Set when every sample equals the mean; projections are then arbitrary.
    pub degenerate: bool,
}

impl MpcaModel {
    pub fn input_dims(&self) -> [usize; 3] {
        self.mean.dims()
    }

    pub fn output_dims(&self) -> [usize; 3] {
        [
            self.projections[0].ncols(),
            self.projections[1].ncols(),
            self.projections[2].ncols(),
        ]
    }

    pub fn feature_count(&self) -> usize {
        self.output_dims().iter().product()
    }

    pub fn transform(&self, sample: &Tensor3) -> Result<ReducedTensor> {
        transform(self, sample)
    }
}

/// Indices of eigenvalues sorted descending (ties by index) with clamped values.
fn sorted_eigen(scatter: DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let sym = (&scatter + scatter.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let n = eig.eigenvalues.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .partial_cmp(&eig.eigenvalues[a])
            .unwrap_or(Ordering::Equal)
            .then(a.cmp(&b))
    });
    let values = order.iter().map(|&i| eig.eigenvalues[i].max(0.0)).collect();
    let mut vectors = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        let mut col = eig.eigenvectors.column(src).into_owned();
        fix_sign(col.as_mut_slice());
        vectors.set_column(dst, &col);
    }
    (values, vectors)
}

/// Largest-magnitude entry made positive (first one on ties).
fn fix_sign(v: &mut [f64]) {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if x.abs() > v[best].abs() {
            best = i;
        }
    }
    if v[best] < 0.0 {
        v.iter_mut().for_each(|x| *x = -*x);
    }
}

/// Smallest count whose leading eigenvalues reach `ratio` of the total.
pub fn dimension_for_ratio(eigenvalues: &[f64], ratio: f64) -> usize {
    let total: f64 = eigenvalues.iter().sum();
    if total <= 0.0 {
        return 1;
    }
    let target = ratio * total * (1.0 - 1e-12);
    let mut acc = 0.0;
    for (i, v) in eigenvalues.iter().enumerate() {
        acc += v;
        if acc >= target {
            return i + 1;
        }
    }
    eigenvalues.len()
}

fn center_into(sample: &Tensor3, mean: &Tensor3, out: &mut [f64]) {
    for ((o, x), m) in out.iter_mut().zip(sample.as_slice()).zip(mean.as_slice()) {
        *o = x - m;
    }
}

/// Projects `t` on every mode except `skip`, cheapest reduction first.
fn project_except(t: &Tensor3, us: &[DMatrix<f64>; 3], skip: Option<Mode>) -> Result<Tensor3> {
    let mut modes: Vec<Mode> = Mode::ALL.into_iter().filter(|&m| Some(m) != skip).collect();
    let dims = t.dims();
    modes.sort_by(|a, b| {
        let ra = us[a.axis()].ncols() as f64 / dims[a.axis()] as f64;
        let rb = us[b.axis()].ncols() as f64 / dims[b.axis()] as f64;
        ra.partial_cmp(&rb).unwrap_or(Ordering::Equal)
    });
    let mut y = mode_product(t, &us[modes[0].axis()], modes[0])?;
    for &m in &modes[1..] {
        y = mode_product(&y, &us[m.axis()], m)?;
    }
    Ok(y)
}

pub fn fit<T: Borrow<Tensor3>>(samples: &[T], cfg: &MpcaConfig) -> Result<MpcaModel> {
    let m = samples.len();
    if m < 2 {
        return Err(Error::invalid(format!("MPCA needs at least 2 samples, got {m}")));
    }
    if !(cfg.variance_ratio > 0.0 && cfg.variance_ratio <= 1.0) {
        return Err(Error::invalid(format!(
            "explained variance ratio {} outside (0, 1]",
            cfg.variance_ratio
        )));
    }
    let dims = samples[0].borrow().dims();
    for (i, s) in samples.iter().enumerate() {
        let s = s.borrow();
        if s.dims() != dims {
            return Err(Error::shape(format!(
                "sample {i} has shape {:?}, expected {dims:?}",
                s.dims()
            )));
        }
        s.check_finite()?;
    }

    let mut mean = vec![0.0; dims.iter().product()];
    for s in samples {
        for (acc, v) in mean.iter_mut().zip(s.borrow().as_slice()) {
            *acc += v;
        }
    }
    let inv = 1.0 / m as f64;
    mean.iter_mut().for_each(|v| *v *= inv);
    let mean = Tensor3::from_vec(dims, mean)?;

    // Full-projection scatter matrices and the total input scatter in one pass.
    let mut scratch = Tensor3::zeros(dims);
    let mut full: Vec<DMatrix<f64>> = dims.iter().map(|&n| DMatrix::zeros(n, n)).collect();
    let mut input_scatter = 0.0;
    let mut raw_energy = 0.0;
    for s in samples {
        let s = s.borrow();
        raw_energy += s.squared_norm();
        center_into(s, &mean, scratch.as_mut_slice());
        input_scatter += scratch.squared_norm();
        for mode in Mode::ALL {
            accumulate_gram(&scratch, mode, &mut full[mode.axis()]);
        }
    }

    let degenerate = input_scatter <= 1e-24 * raw_energy.max(f64::MIN_POSITIVE);
    if degenerate {
        let projections = dims.map(|n| DMatrix::identity(n, 1));
        return Ok(MpcaModel {
            mean,
            projections,
            variance_ratio: cfg.variance_ratio,
            input_scatter,
            captured_scatter: 0.0,
            scatter_history: vec![0.0],
            iterations_run: 0,
            degenerate: true,
        });
    }

    let mut out_dims = [0usize; 3];
    let mut projections: [DMatrix<f64>; 3] = dims.map(|n| DMatrix::zeros(n, 0));
    for (axis, scatter) in full.into_iter().enumerate() {
        let (values, vectors) = sorted_eigen(scatter);
        let p = dimension_for_ratio(&values, cfg.variance_ratio);
        out_dims[axis] = p;
        projections[axis] = vectors.columns(0, p).into_owned();
    }

    let mut captured = 0.0;
    for s in samples {
        center_into(s.borrow(), &mean, scratch.as_mut_slice());
        captured += project_except(&scratch, &projections, None)?.squared_norm();
    }
    let mut history = vec![captured];
    let mut iterations = 0;
    let slack = 1e-9 * input_scatter;

    while iterations < cfg.max_iter {
        let previous = captured;
        for mode in Mode::ALL {
            let axis = mode.axis();
            let mut partial = DMatrix::zeros(dims[axis], dims[axis]);
            for s in samples {
                center_into(s.borrow(), &mean, scratch.as_mut_slice());
                let y = project_except(&scratch, &projections, Some(mode))?;
                accumulate_gram(&y, mode, &mut partial);
            }
            let (values, vectors) = sorted_eigen(partial);
            projections[axis] = vectors.columns(0, out_dims[axis]).into_owned();
            let step: f64 = values[..out_dims[axis]].iter().sum();
            if step < captured - slack {
                return Err(Error::Numerical(format!(
                    "captured scatter decreased from {captured} to {step} on mode {}",
                    axis + 1
                )));
            }
            captured = step;
        }
        iterations += 1;
        history.push(captured);
        let gain = (captured - previous) / previous.max(f64::MIN_POSITIVE);
        if gain < cfg.tol {
            break;
        }
    }

    Ok(MpcaModel {
        mean,
        projections,
        variance_ratio: cfg.variance_ratio,
        input_scatter,
        captured_scatter: captured,
        scatter_history: history,
        iterations_run: iterations,
        degenerate: false,
    })
}

/// Centres by the training mean and projects on all three modes.
pub fn transform(model: &MpcaModel, sample: &Tensor3) -> Result<ReducedTensor> {
    if sample.dims() != model.input_dims() {
        return Err(Error::shape(format!(
            "sample shape {:?} does not match model input {:?}",
            sample.dims(),
            model.input_dims()
        )));
    }
    let centred = sample.sub(&model.mean)?;
    Ok(ReducedTensor(project_except(&centred, &model.projections, None)?))
}

/// Flattens in `(i, j, k)` lexicographic order, i.e. the rows of the mode-1
/// unfolding laid end to end.
pub fn vectorize(rt: &ReducedTensor) -> Vec<f64> {
    let t = &rt.0;
    let [r, c, p] = t.dims();
    let mut out = Vec::with_capacity(r * c * p);
    for i in 0..r {
        for j in 0..c {
            for k in 0..p {
                out.push(t.get(i, j, k));
            }
        }
    }
    out
}

pub fn devectorize(v: &[f64], dims: [usize; 3]) -> Result<ReducedTensor> {
    let [_, c, p] = dims;
    if v.len() != dims.iter().product::<usize>() {
        return Err(Error::shape(format!(
            "{} values cannot form a {dims:?} tensor",
            v.len()
        )));
    }
    Ok(ReducedTensor(Tensor3::from_fn(dims, |i, j, k| {
        v[(i * c + j) * p + k]
    })))
}

/// Transforms every sample and stacks the vectorised features row-wise.
pub fn transform_to_features<T: Borrow<Tensor3>>(
    model: &MpcaModel,
    samples: &[T],
) -> Result<FeatureMatrix> {
    let d = model.feature_count();
    let mut data = Vec::with_capacity(samples.len() * d);
    for s in samples {
        data.extend(vectorize(&transform(model, s.borrow())?));
    }
    FeatureMatrix::new(samples.len(), d, data)
}

#[derive(Clone, Debug, PartialEq)]
pub struct FisherScores {
    pub scores: Vec<f64>,
    /// Between-class numerator, used to order features with infinite score.
    pub between: Vec<f64>,
}

impl FisherScores {
    pub fn from_scores(scores: Vec<f64>) -> Self {
        let between = vec![0.0; scores.len()];
        FisherScores { scores, between }
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    fn rank_cmp(&self, a: usize, b: usize) -> Ordering {
        let (sa, sb) = (self.scores[a], self.scores[b]);
        let by_score = match (sa.is_infinite(), sb.is_infinite()) {
            (true, true) => self.between[b]
                .partial_cmp(&self.between[a])
                .unwrap_or(Ordering::Equal),
            _ => sb.partial_cmp(&sa).unwrap_or(Ordering::Equal),
        };
        by_score.then(a.cmp(&b))
    }

    pub fn select_top_k(&self, k: usize) -> FeatureSelection {
        let d = self.len();
        if k > d {
            log::warn!("requested top {k} features but only {d} are available; keeping all");
        }
        let mut idx: Vec<usize> = (0..d).collect();
        idx.sort_by(|&a, &b| self.rank_cmp(a, b));
        idx.truncate(k.min(d));
        FeatureSelection {
            fisher_scores: self.scores.clone(),
            selected_indices: idx,
            k,
        }
    }
}

#[derive(Clone, Debug, PartialEq, serde::Serialize)]
pub struct FeatureSelection {
    pub fisher_scores: Vec<f64>,
    pub selected_indices: Vec<usize>,
    pub k: usize,
}

impl FeatureSelection {
    pub fn apply(&self, features: &FeatureMatrix) -> Result<FeatureMatrix> {
        if features.ncols() != self.fisher_scores.len() {
            return Err(Error::shape(format!(
                "selection fitted on {} features applied to {}",
                self.fisher_scores.len(),
                features.ncols()
            )));
        }
        Ok(features.select_columns(&self.selected_indices))
    }

    /// `apply` restricted to the rows `rows`.
    pub fn apply_rows(&self, features: &FeatureMatrix, rows: &[usize]) -> Result<FeatureMatrix> {
        if features.ncols() != self.fisher_scores.len() {
            return Err(Error::shape(format!(
                "selection fitted on {} features applied to {}",
                self.fisher_scores.len(),
                features.ncols()
            )));
        }
        Ok(features.select(rows, &self.selected_indices))
    }
}

/// Per-feature Fisher score with population class variances.
///
/// A feature with zero within-class variance scores `+∞` when the class means
/// differ and `0` when they do not.
pub fn fisher_scores(features: &FeatureMatrix, labels: &[bool]) -> Result<FisherScores> {
    let rows: Vec<usize> = (0..features.nrows()).collect();
    fisher_scores_on(features, &rows, labels)
}

/// Scores over the rows `rows` of `features`; `labels[i]` belongs to `rows[i]`.
pub fn fisher_scores_on(features: &FeatureMatrix, rows: &[usize], labels: &[bool]) -> Result<FisherScores> {
    if rows.len() != labels.len() {
        return Err(Error::shape(format!(
            "{} feature rows but {} labels",
            rows.len(),
            labels.len()
        )));
    }
    if let Some(&r) = rows.iter().find(|&&r| r >= features.nrows()) {
        return Err(Error::shape(format!("row {r} out of {}", features.nrows())));
    }
    let (np, nn) = require_both_classes(labels)?;
    let d = features.ncols();
    let mut sum_p = vec![0.0; d];
    let mut sum_n = vec![0.0; d];
    for (&r, &y) in rows.iter().zip(labels) {
        let row = features.row(r);
        let acc = if y { &mut sum_p } else { &mut sum_n };
        acc.iter_mut().zip(row).for_each(|(a, v)| *a += v);
    }
    let (fp, fnn) = (np as f64, nn as f64);
    let mean_p: Vec<f64> = sum_p.iter().map(|s| s / fp).collect();
    let mean_n: Vec<f64> = sum_n.iter().map(|s| s / fnn).collect();
    let mut ss_p = vec![0.0; d];
    let mut ss_n = vec![0.0; d];
    for (&r, &y) in rows.iter().zip(labels) {
        let row = features.row(r);
        let (acc, mu) = if y { (&mut ss_p, &mean_p) } else { (&mut ss_n, &mean_n) };
        for ((a, v), m) in acc.iter_mut().zip(row).zip(mu) {
            *a += (v - m) * (v - m);
        }
    }
    let total = fp + fnn;
    let mut scores = Vec::with_capacity(d);
    let mut between = Vec::with_capacity(d);
    for j in 0..d {
        let mu = (sum_p[j] + sum_n[j]) / total;
        let num = fp * (mean_p[j] - mu).powi(2) + fnn * (mean_n[j] - mu).powi(2);
        // n·σ² is the within-class sum of squares.
        let den = ss_p[j] + ss_n[j];
        let scale = mean_p[j].abs().max(mean_n[j].abs()).max(1.0);
        let num_is_zero = num <= 1e-24 * scale * scale * total;
        let score = if den > 0.0 {
            if num_is_zero { 0.0 } else { num / den }
        } else if num_is_zero {
            0.0
        } else {
            f64::INFINITY
        };
        scores.push(score);
        between.push(num);
    }
    Ok(FisherScores { scores, between })
}

/// Top-`k` indices of plain scores, ties by ascending index.
pub fn select_top_k(scores: &[f64], k: usize) -> FeatureSelection {
    FisherScores::from_scores(scores.to_vec()).select_top_k(k)
}

const MAGIC: &[u8; 8] = b"PAWPMPCA";
const VERSION: u32 = 1;

/// A fitted MPCA model together with the feature selection learned on its output.
#[derive(Clone, Debug, PartialEq)]
pub struct MpcaArtifact {
    pub model: MpcaModel,
    pub selection: Option<FeatureSelection>,
}

fn put_u32(w: &mut impl Write, v: usize) -> std::io::Result<()> {
    w.write_all(&(v as u32).to_le_bytes())
}

fn put_f64s(w: &mut impl Write, vs: &[f64]) -> std::io::Result<()> {
    for v in vs {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

fn get_u32(r: &mut impl Read) -> std::io::Result<usize> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b) as usize)
}

fn get_f64(r: &mut impl Read) -> std::io::Result<f64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}

fn get_f64s(r: &mut impl Read, n: usize) -> std::io::Result<Vec<f64>> {
    (0..n).map(|_| get_f64(r)).collect()
}

impl MpcaArtifact {
    /// Little-endian binary layout: magic, version, input dims, output dims,
    /// ratio, scatters, iteration count, degenerate flag, scatter history,
    /// mean tensor, column-major projections, Fisher scores, selected indices.
    pub fn write_to(&self, w: &mut impl Write) -> std::io::Result<()> {
        let m = &self.model;
        w.write_all(MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        for d in m.input_dims() {
            put_u32(w, d)?;
        }
        for d in m.output_dims() {
            put_u32(w, d)?;
        }
        put_f64s(w, &[m.variance_ratio, m.input_scatter, m.captured_scatter])?;
        put_u32(w, m.iterations_run)?;
        w.write_all(&[m.degenerate as u8])?;
        put_u32(w, m.scatter_history.len())?;
        put_f64s(w, &m.scatter_history)?;
        put_f64s(w, m.mean.as_slice())?;
        for u in &m.projections {
            put_f64s(w, u.as_slice())?;
        }
        match &self.selection {
            None => w.write_all(&[0])?,
            Some(sel) => {
                w.write_all(&[1])?;
                put_u32(w, sel.k)?;
                put_u32(w, sel.fisher_scores.len())?;
                put_f64s(w, &sel.fisher_scores)?;
                put_u32(w, sel.selected_indices.len())?;
                for &i in &sel.selected_indices {
                    put_u32(w, i)?;
                }
            }
        }
        Ok(())
    }

    pub fn read_from(r: &mut impl Read) -> Result<MpcaArtifact> {
        let bad = |e: std::io::Error| Error::Numerical(format!("corrupt MPCA artifact: {e}"));
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic).map_err(bad)?;
        if &magic != MAGIC {
            return Err(Error::invalid("not an MPCA artifact (bad magic)"));
        }
        let version = get_u32(r).map_err(bad)?;
        if version != VERSION as usize {
            return Err(Error::invalid(format!("unsupported MPCA artifact version {version}")));
        }
        let mut input = [0usize; 3];
        for d in input.iter_mut() {
            *d = get_u32(r).map_err(bad)?;
        }
        let mut output = [0usize; 3];
        for d in output.iter_mut() {
            *d = get_u32(r).map_err(bad)?;
        }
        let variance_ratio = get_f64(r).map_err(bad)?;
        let input_scatter = get_f64(r).map_err(bad)?;
        let captured_scatter = get_f64(r).map_err(bad)?;
        let iterations_run = get_u32(r).map_err(bad)?;
        let mut flag = [0u8; 1];
        r.read_exact(&mut flag).map_err(bad)?;
        let hist_len = get_u32(r).map_err(bad)?;
        let scatter_history = get_f64s(r, hist_len).map_err(bad)?;
        let mean = Tensor3::from_vec(input, get_f64s(r, input.iter().product()).map_err(bad)?)?;
        let mut projections: [DMatrix<f64>; 3] = input.map(|n| DMatrix::zeros(n, 0));
        for axis in 0..3 {
            let vals = get_f64s(r, input[axis] * output[axis]).map_err(bad)?;
            projections[axis] = DMatrix::from_vec(input[axis], output[axis], vals);
        }
        let mut has_sel = [0u8; 1];
        r.read_exact(&mut has_sel).map_err(bad)?;
        let selection = if has_sel[0] == 1 {
            let k = get_u32(r).map_err(bad)?;
            let n = get_u32(r).map_err(bad)?;
            let fisher_scores = get_f64s(r, n).map_err(bad)?;
            let n_sel = get_u32(r).map_err(bad)?;
            let selected_indices = (0..n_sel)
                .map(|_| get_u32(r))
                .collect::<std::io::Result<Vec<_>>>()
                .map_err(bad)?;
            Some(FeatureSelection {
                fisher_scores,
                selected_indices,
                k,
            })
        } else {
            None
        };
        Ok(MpcaArtifact {
            model: MpcaModel {
                mean,
                projections,
                variance_ratio,
                input_scatter,
                captured_scatter,
                scatter_history,
                iterations_run,
                degenerate: flag[0] == 1,
            },
            selection,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_samples(m: usize, dims: [usize; 3], seed: u64) -> Vec<Tensor3> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..m)
            .map(|_| Tensor3::from_fn(dims, |_, _, _| rng.random_range(-1.0..1.0)))
            .collect()
    }

    #[test]
    fn identical_samples_are_degenerate() {
        let t = Tensor3::from_fn([3, 4, 2], |i, j, k| (i + j * k) as f64);
        let samples = vec![t.clone(); 5];
        let model = fit(&samples, &MpcaConfig::default()).unwrap();
        assert!(model.degenerate);
        assert_eq!(model.captured_scatter, 0.0);
        let y = model.transform(&t).unwrap();
        assert!(y.0.as_slice().iter().all(|v| v.abs() < 1e-12));
        for u in &model.projections {
            assert!(((u.transpose() * u) - DMatrix::identity(u.ncols(), u.ncols())).amax() < 1e-12);
        }
    }

    #[test]
    fn full_ratio_preserves_scatter() {
        let samples = random_samples(10, [4, 3, 2], 11);
        let cfg = MpcaConfig {
            variance_ratio: 1.0,
            ..MpcaConfig::default()
        };
        let model = fit(&samples, &cfg).unwrap();
        assert_eq!(model.output_dims(), [4, 3, 2]);
        let rel = (model.captured_scatter - model.input_scatter).abs() / model.input_scatter;
        assert!(rel < 1e-9, "relative gap {rel}");
        // Isometry of a full orthonormal projection.
        let y = model.transform(&samples[3]).unwrap();
        let centred = samples[3].sub(&model.mean).unwrap();
        assert!((y.0.frobenius_norm() - centred.frobenius_norm()).abs() < 1e-9);
    }

    #[test]
    fn projections_are_orthonormal_and_scatter_monotone() {
        let samples = random_samples(12, [6, 5, 4], 3);
        let model = fit(&samples, &MpcaConfig { variance_ratio: 0.8, ..Default::default() }).unwrap();
        for u in &model.projections {
            let g = u.transpose() * u;
            assert!((g - DMatrix::identity(u.ncols(), u.ncols())).amax() < 1e-9);
        }
        for w in model.scatter_history.windows(2) {
            assert!(w[1] >= w[0] - 1e-9 * model.input_scatter);
        }
        assert!(model.captured_scatter <= model.input_scatter * (1.0 + 1e-12));
        assert!(model.captured_scatter >= 0.0);
    }

    #[test]
    fn transform_of_mean_is_zero_and_training_features_centred() {
        let samples = random_samples(8, [4, 4, 3], 5);
        let model = fit(&samples, &MpcaConfig { variance_ratio: 0.9, ..Default::default() }).unwrap();
        let y = model.transform(&model.mean).unwrap();
        assert!(y.0.as_slice().iter().all(|&v| v == 0.0));
        let feats = transform_to_features(&model, &samples).unwrap();
        for j in 0..feats.ncols() {
            let mean: f64 = (0..feats.nrows()).map(|i| feats.get(i, j)).sum::<f64>() / 8.0;
            assert!(mean.abs() < 1e-9);
        }
        assert!(model.transform(&Tensor3::zeros([4, 4, 2])).is_err());
    }

    #[test]
    fn fit_rejects_bad_inputs() {
        let s = random_samples(1, [2, 2, 2], 1);
        assert!(fit(&s, &MpcaConfig::default()).is_err());
        let mut s = random_samples(3, [2, 2, 2], 1);
        s.push(Tensor3::zeros([2, 2, 3]));
        assert!(matches!(fit(&s, &MpcaConfig::default()), Err(Error::Shape(_))));
        let s = random_samples(3, [2, 2, 2], 1);
        assert!(fit(&s, &MpcaConfig { variance_ratio: 0.0, ..Default::default() }).is_err());
    }

    #[test]
    fn ratio_dimension_rule() {
        assert_eq!(dimension_for_ratio(&[5.0, 3.0, 2.0], 0.5), 1);
        assert_eq!(dimension_for_ratio(&[5.0, 3.0, 2.0], 0.8), 2);
        assert_eq!(dimension_for_ratio(&[5.0, 3.0, 2.0], 0.81), 3);
        assert_eq!(dimension_for_ratio(&[5.0, 3.0, 0.0], 1.0), 2);
        assert_eq!(dimension_for_ratio(&[0.0, 0.0], 0.5), 1);
    }

    #[test]
    fn vectorize_roundtrip() {
        let rt = ReducedTensor(Tensor3::from_vec([1, 1, 1], vec![2.5]).unwrap());
        assert_eq!(vectorize(&rt), vec![2.5]);
        let t = ReducedTensor(Tensor3::from_fn([2, 3, 2], |i, j, k| (i * 6 + j * 2 + k) as f64));
        let v = vectorize(&t);
        assert_eq!(v, (0..12).map(|x| x as f64).collect::<Vec<_>>());
        assert_eq!(devectorize(&v, [2, 3, 2]).unwrap(), t);
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        assert!((norm - t.0.frobenius_norm()).abs() < 1e-12);
    }

    #[test]
    fn fisher_examples() {
        let feats = FeatureMatrix::from_rows(&[
            vec![0.0, 1.0, 0.0],
            vec![1.0, 1.0, 0.0],
            vec![2.0, 1.0, 1.0],
            vec![3.0, 1.0, 1.0],
        ])
        .unwrap();
        let labels = [false, false, true, true];
        let fs = fisher_scores(&feats, &labels).unwrap();
        assert!((fs.scores[0] - 4.0).abs() < 1e-12);
        assert_eq!(fs.scores[1], 0.0);
        assert!(fs.scores[2].is_infinite());
        let sel = fs.select_top_k(3);
        assert_eq!(sel.selected_indices, vec![2, 0, 1]);
        assert!(fisher_scores(&feats, &[true; 4]).is_err());
    }

    #[test]
    fn infinite_scores_ordered_by_numerator() {
        let feats = FeatureMatrix::from_rows(&[vec![0.0, 0.0], vec![0.0, 0.0], vec![1.0, 3.0]]).unwrap();
        let fs = fisher_scores(&feats, &[false, false, true]).unwrap();
        assert!(fs.scores.iter().all(|s| s.is_infinite()));
        assert_eq!(fs.select_top_k(2).selected_indices, vec![1, 0]);
    }

    #[test]
    fn top_k_rules() {
        assert_eq!(select_top_k(&[3.0, 1.0, 2.0], 2).selected_indices, vec![0, 2]);
        assert_eq!(select_top_k(&[1.0, 1.0, 1.0], 2).selected_indices, vec![0, 1]);
        let scores: Vec<f64> = (0..300).map(|i| ((i * 37) % 101) as f64).collect();
        assert_eq!(select_top_k(&scores, 210).selected_indices.len(), 210);
        assert_eq!(select_top_k(&[1.0, 2.0], 5).selected_indices, vec![1, 0]);
    }

    #[test]
    fn artifact_roundtrip() {
        let samples = random_samples(6, [3, 4, 2], 9);
        let model = fit(&samples, &MpcaConfig::default()).unwrap();
        let sel = select_top_k(&vec![1.0; model.feature_count()], 2);
        let art = MpcaArtifact { model, selection: Some(sel) };
        let mut buf = Vec::new();
        art.write_to(&mut buf).unwrap();
        let back = MpcaArtifact::read_from(&mut buf.as_slice()).unwrap();
        assert_eq!(back, art);
        buf[0] = b'X';
        assert!(MpcaArtifact::read_from(&mut buf.as_slice()).is_err());
    }
}
