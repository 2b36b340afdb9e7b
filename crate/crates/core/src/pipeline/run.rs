//! normalize → register → downsample → temporal split → quality binning →
//! MPCA + Fisher selection + fusion → grid search → final fit → test
//! evaluation → decision curve.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::rc::Rc;
use std::time::Instant;

use chrono::NaiveDate;
use serde::Serialize;

use super::audit::AuditLog;
use super::config::{pool_factor, RunConfig};
use super::container::write_tensor;
use super::manifest::{ingest, Dataset};
use super::report::{dca_from_predictions, report_from_predictions, write_predictions, write_report, PredictionRow, ReportRow};
use crate::binning::{iterative_bin_removal, write_history_csv, BinRemoval, QuantileBinning};
use crate::classifier::{calibrate, grid_search_cv, train_with_options, CvCell, FoldFeatures, LinearClassifier, SvmOptions};
use crate::error::{Error, Result};
use crate::evaluation::{temporal_split, TimedSubject};
use crate::features::{class_counts, FeatureMatrix};
use crate::fusion::{stack_mode1, Block, FusionSpec, ImageSource, ModelFamily, Standardizer};
use crate::mpca::{self, fisher_scores_on, FeatureSelection, MpcaArtifact, MpcaModel};
use crate::registration::{register_image, Exclusion, SubjectImage};
use crate::tensor::{maxpool_downsample, zscore_normalize, Modality, Tensor3, TensorSample};

/// Last stage to execute.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Stage {
    Preprocess,
    Bin,
    Train,
    Full,
}

/// Testing hooks that deliberately break pipeline invariants.
#[derive(Clone, Debug, Default)]
pub struct PipelineHooks {
    /// Copies this many test subjects into the training set after the split.
    pub leak_test_rows: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct MpcaSummary {
    pub block: String,
    pub resolution: usize,
    pub input_dims: [usize; 3],
    pub output_dims: [usize; 3],
    pub iterations: usize,
    pub captured_fraction: f64,
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct RunSummary {
    pub subjects: usize,
    pub excluded: usize,
    pub train: usize,
    pub test: usize,
    pub bins_removed: Option<usize>,
    pub train_after_binning: usize,
    pub best_model: Option<String>,
    pub dca_advantage_030_070: Option<f64>,
    pub mpca: Vec<MpcaSummary>,
}

#[derive(Clone, Debug, Default)]
pub struct RunOutcome {
    pub summary: RunSummary,
    pub report: Vec<ReportRow>,
    pub predictions: Vec<PredictionRow>,
    pub binning: Option<BinRemoval>,
    pub audit: AuditLog,
    pub exclusions: Vec<Exclusion>,
    pub output_dir: PathBuf,
}

pub fn run_pipeline(config: &RunConfig) -> Result<RunOutcome> {
    run_pipeline_with(config, Stage::Full, &PipelineHooks::default())
}

/// Registered, normalized images at each working resolution.
#[derive(Default)]
struct ImageSet {
    sa: Vec<Tensor3>,
    fc: Vec<Tensor3>,
}

impl ImageSet {
    fn get(&self, modality: Modality) -> &[Tensor3] {
        match modality {
            Modality::ShortAxis => &self.sa,
            Modality::FourChamber => &self.fc,
        }
    }
}

struct Cohort {
    ids: Vec<String>,
    dates: Vec<NaiveDate>,
    labels: Vec<bool>,
    tabular: FeatureMatrix,
    images: BTreeMap<usize, ImageSet>,
    /// Pooled landmark uncertainties; `None` when a needed record is missing.
    uncertainty: Vec<Option<Vec<f64>>>,
    exclusions: Vec<Exclusion>,
}

fn stage<T>(name: &'static str, r: Result<T>) -> Result<T> {
    r.map_err(|e| e.in_stage(name))
}

fn ensure_dir(p: &Path) -> Result<()> {
    fs::create_dir_all(p).map_err(|e| Error::io(p, e))
}

pub fn run_pipeline_with(config: &RunConfig, until: Stage, hooks: &PipelineHooks) -> Result<RunOutcome> {
    stage("config", config.validate())?;
    let clock = Instant::now();
    let out_dir = config.output_dir.clone();
    ensure_dir(&out_dir)?;
    config.save(&out_dir.join("config.toml"))?;

    let dataset = stage("ingest", ingest(config))?;
    if dataset.is_empty() {
        return Err(Error::data(&config.manifest, "manifest lists no subjects").in_stage("ingest"));
    }
    log::info!("ingested {} subjects in {:.1?}", dataset.len(), clock.elapsed());
    let n_subjects = dataset.len();
    let roster = config.roster()?;
    let cohort = stage("preprocess", preprocess(dataset, config, &roster))?;
    write_exclusions(&out_dir.join("exclusions.csv"), &cohort.exclusions)?;
    log::info!(
        "preprocessed {} subjects ({} excluded) in {:.1?}",
        cohort.ids.len(),
        cohort.exclusions.len(),
        clock.elapsed()
    );
    let mut outcome = RunOutcome {
        exclusions: cohort.exclusions.clone(),
        output_dir: out_dir.clone(),
        ..Default::default()
    };
    outcome.summary.subjects = n_subjects;
    outcome.summary.excluded = n_subjects - cohort.ids.len();
    if until == Stage::Preprocess {
        stage("preprocess", write_preprocessed(&out_dir.join("preprocessed"), &cohort))?;
        return Ok(outcome);
    }

    let (mut train, test) = stage("split", split(&cohort, config.train_fraction))?;
    if hooks.leak_test_rows > 0 {
        log::warn!("hook: copying {} test subjects into training", hooks.leak_test_rows);
        train.extend(test.iter().take(hooks.leak_test_rows));
    }
    outcome.summary.train = train.len();
    outcome.summary.test = test.len();
    let mut audit = AuditLog::default();
    let mut ctx = Context {
        cohort: &cohort,
        config,
        audit: &mut audit,
        cache: BTreeMap::new(),
        mpca_summaries: Vec::new(),
    };

    let binning_result = stage("binning", ctx.bin(&train, &roster, &out_dir))?;
    let kept: Vec<usize> = match &binning_result {
        Some((removal, survivors)) => {
            outcome.summary.bins_removed = Some(removal.chosen);
            survivors.clone()
        }
        None => train.clone(),
    };
    outcome.binning = binning_result.map(|(r, _)| r);
    outcome.summary.train_after_binning = kept.len();
    log::info!("binning done in {:.1?}: {} training subjects kept", clock.elapsed(), kept.len());
    if until == Stage::Bin {
        outcome.audit = audit;
        return Ok(outcome);
    }

    let models_dir = out_dir.join("models");
    ensure_dir(&models_dir)?;
    let mut predictions = Vec::new();
    let mut cv_rows: Vec<(FusionSpec, CvCell)> = Vec::new();
    for spec in &roster {
        let fitted = stage("train", ctx.fit_family(*spec, &kept, &test))?;
        log::info!(
            "{}: best C {} (CV AUC {:.4}) at {:.1?}",
            spec.label(),
            fitted.classifier.c,
            fitted.cv_mean_auc,
            clock.elapsed()
        );
        stage("train", fitted.save(&models_dir, &ctx.cache))?;
        cv_rows.extend(fitted.cv_table.iter().map(|c| (*spec, c.clone())));
        for (row, &i) in test.iter().enumerate() {
            predictions.push(PredictionRow {
                model: spec.family.as_str().to_string(),
                resolution: spec.resolution,
                subject_id: cohort.ids[i].clone(),
                diagnosis_date: cohort.dates[i].to_string(),
                label: u8::from(cohort.labels[i]),
                score: fitted.test_scores[row],
                probability: fitted.test_probabilities[row],
            });
        }
    }
    outcome.summary.mpca = std::mem::take(&mut ctx.mpca_summaries);
    drop(ctx);
    write_grid_csv(&out_dir.join("grid_search.csv"), &cv_rows)?;
    write_predictions(&out_dir.join("predictions.csv"), &predictions)?;
    outcome.predictions = predictions;
    if until == Stage::Train {
        outcome.audit = audit;
        return Ok(outcome);
    }

    let report = stage("evaluate", report_from_predictions(&outcome.predictions, config.test_partitions))?;
    write_report(&out_dir.join("report.csv"), &report)?;
    let ((best, res), curve) = stage("dca", dca_from_predictions(&outcome.predictions, None))?;
    curve.write_csv(&out_dir.join("dca_curve.csv"))?;
    let adv = curve.advantage_in_band(0.30, 0.70);
    log::info!("decision curve for {best}@{res}: beats treat-all and treat-none on {:.0}% of 0.30-0.70", adv * 100.0);
    outcome.summary.best_model = Some(format!("{best}@{res}"));
    outcome.summary.dca_advantage_030_070 = Some(adv);
    outcome.report = report;

    let audit_path = out_dir.join("audit.json");
    let json = serde_json::to_string_pretty(&audit).map_err(|e| Error::data(&audit_path, e.to_string()))?;
    fs::write(&audit_path, json + "\n").map_err(|e| Error::io(&audit_path, e))?;
    outcome.audit = audit;
    write_json(&out_dir.join("summary.json"), &outcome.summary)?;
    stage("audit", audit_against_split(&outcome.audit, config, &cohort))?;
    log::info!("run finished in {:.1?}", clock.elapsed());
    Ok(outcome)
}

fn write_json<T: Serialize>(path: &Path, v: &T) -> Result<()> {
    let json = serde_json::to_string_pretty(v).map_err(|e| Error::data(path, e.to_string()))?;
    fs::write(path, json + "\n").map_err(|e| Error::io(path, e))
}

/// Recomputes the split from diagnosis dates and checks every artifact.
fn audit_against_split(audit: &AuditLog, config: &RunConfig, cohort: &Cohort) -> Result<()> {
    let (train, test) = split(cohort, config.train_fraction)?;
    let ids = |idx: &[usize]| idx.iter().map(|&i| cohort.ids[i].clone()).collect::<BTreeSet<_>>();
    audit.verify(&ids(&train), &ids(&test))
}

fn split(cohort: &Cohort, fraction: f64) -> Result<(Vec<usize>, Vec<usize>)> {
    let timed: Vec<TimedSubject> = cohort
        .ids
        .iter()
        .zip(&cohort.dates)
        .map(|(id, d)| TimedSubject {
            subject_id: id.clone(),
            diagnosis_date: Some(*d),
        })
        .collect();
    let s = temporal_split(&timed, fraction)?;
    if s.test.is_empty() || s.train.is_empty() {
        return Err(Error::invalid(format!(
            "temporal split of {} subjects leaves an empty side",
            cohort.ids.len()
        )));
    }
    Ok((s.train, s.test))
}

fn needs(roster: &[FusionSpec], modality: Modality) -> bool {
    roster.iter().any(|s| {
        s.family.blocks().iter().any(|b| match b {
            Block::Image(ImageSource::Early) => true,
            Block::Image(ImageSource::ShortAxis) => modality == Modality::ShortAxis,
            Block::Image(ImageSource::FourChamber) => modality == Modality::FourChamber,
            Block::Tabular => false,
        })
    })
}

fn preprocess(mut dataset: Dataset, config: &RunConfig, roster: &[FusionSpec]) -> Result<Cohort> {
    let used: Vec<Modality> = Modality::ALL.into_iter().filter(|&m| needs(roster, m)).collect();
    let mut resolutions: BTreeSet<usize> = config.resolutions.iter().copied().collect();
    let binning_active = config.binning && dataset.landmarks.is_some();
    if binning_active {
        resolutions.insert(config.binning_resolution);
    }
    let native = dataset.image_dims.map(|d| d[0]);
    let factors: Vec<(usize, usize)> = match native {
        Some(n) if !used.is_empty() => resolutions
            .iter()
            .map(|&r| pool_factor(n, r).map(|f| (r, f)))
            .collect::<Result<_>>()?,
        _ => Vec::new(),
    };
    let register = match (&dataset.landmarks, &dataset.template) {
        (Some(l), Some(t)) => Some((l.clone(), t.clone())),
        (Some(_), None) => {
            return Err(Error::Config("landmarks given without a template landmark file".into()))
        }
        _ => {
            log::warn!("no landmark/template files; images are used unregistered");
            None
        }
    };

    let mut cohort = Cohort {
        ids: Vec::new(),
        dates: Vec::new(),
        labels: Vec::new(),
        tabular: FeatureMatrix::zeros(0, dataset.tabular_names.len()),
        images: factors.iter().map(|&(r, _)| (r, ImageSet::default())).collect(),
        uncertainty: Vec::new(),
        exclusions: Vec::new(),
    };
    let mut tab_rows = Vec::new();
    for subject in dataset.subjects.iter_mut() {
        let mut processed: Vec<(Modality, Tensor3)> = Vec::new();
        let mut excluded = false;
        for &m in &used {
            let raw = match m {
                Modality::ShortAxis => subject.sa.take(),
                Modality::FourChamber => subject.fc.take(),
            }
            .ok_or_else(|| Error::invalid(format!("subject `{}` lacks {m} image", subject.subject_id)))?;
            let norm = zscore_normalize(&raw)?;
            drop(raw);
            let image = SubjectImage {
                subject_id: subject.subject_id.clone(),
                sample: TensorSample { modality: m, data: norm },
            };
            let registered = match &register {
                Some((lm, tpl)) if lm.get(&subject.subject_id, m).is_some() => {
                    match register_image(&image, lm, tpl) {
                        Ok((reg, _)) => reg.sample.data,
                        Err(e) => {
                            log::warn!("excluding subject `{}`: {e}", subject.subject_id);
                            cohort.exclusions.push(Exclusion {
                                subject_id: subject.subject_id.clone(),
                                modality: m,
                                reason: e.to_string(),
                            });
                            excluded = true;
                            break;
                        }
                    }
                }
                Some(_) => {
                    log::warn!("subject `{}` has no {m} landmarks; left unregistered", subject.subject_id);
                    image.sample.data
                }
                None => image.sample.data,
            };
            processed.push((m, registered));
        }
        if excluded {
            continue;
        }
        for (m, t) in processed {
            for &(r, f) in &factors {
                let pooled = if f == 1 { t.clone() } else { maxpool_downsample(&t, f)? };
                let set = cohort.images.get_mut(&r).unwrap();
                match m {
                    Modality::ShortAxis => set.sa.push(pooled),
                    Modality::FourChamber => set.fc.push(pooled),
                }
            }
        }
        let unc = dataset.landmarks.as_ref().and_then(|lm| {
            let mut all = Vec::new();
            for &m in &used {
                all.extend_from_slice(&lm.get(&subject.subject_id, m)?.uncertainties);
            }
            Some(all)
        });
        cohort.ids.push(subject.subject_id.clone());
        cohort.dates.push(subject.diagnosis_date);
        cohort.labels.push(subject.label);
        cohort.uncertainty.push(unc);
        tab_rows.push(subject.tabular.clone());
    }
    if cohort.ids.is_empty() {
        return Err(Error::invalid("every subject was excluded during preprocessing"));
    }
    cohort.tabular = if dataset.tabular_names.is_empty() {
        FeatureMatrix::zeros(cohort.ids.len(), 0)
    } else {
        FeatureMatrix::from_rows(&tab_rows)?
    };
    Ok(cohort)
}

fn write_exclusions(path: &Path, ex: &[Exclusion]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::data(path, e.to_string()))?;
    let werr = |e: csv::Error| Error::data(path, e.to_string());
    w.write_record(["subject_id", "modality", "reason"]).map_err(werr)?;
    for e in ex {
        w.write_record([e.subject_id.as_str(), e.modality.as_str(), e.reason.as_str()])
            .map_err(werr)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn write_preprocessed(dir: &Path, cohort: &Cohort) -> Result<()> {
    for (r, set) in &cohort.images {
        let d = dir.join(r.to_string());
        ensure_dir(&d)?;
        for (m, tag) in [(Modality::ShortAxis, "sa"), (Modality::FourChamber, "fc")] {
            for (id, t) in cohort.ids.iter().zip(set.get(m)) {
                write_tensor(&d.join(format!("{id}_{tag}.tns")), t)?;
            }
        }
    }
    Ok(())
}

fn write_grid_csv(path: &Path, rows: &[(FusionSpec, CvCell)]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::data(path, e.to_string()))?;
    let werr = |e: csv::Error| Error::data(path, e.to_string());
    w.write_record(["model", "resolution", "C", "fold", "auc"]).map_err(werr)?;
    for (spec, cell) in rows {
        w.write_record([
            spec.family.as_str().to_string(),
            spec.resolution.to_string(),
            cell.c.to_string(),
            cell.fold.to_string(),
            format!("{:.6}", cell.auc),
        ])
        .map_err(werr)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Image-block features learned on one training subset.
struct ImageFeatures {
    model: MpcaModel,
    /// Rows follow the subset the model was fitted on.
    train: Rc<FeatureMatrix>,
    test: Rc<FeatureMatrix>,
}

type CacheKey = (ImageSource, usize);

struct Context<'a> {
    cohort: &'a Cohort,
    config: &'a RunConfig,
    audit: &'a mut AuditLog,
    /// Image features for the final training set, shared across families.
    cache: BTreeMap<CacheKey, ImageFeatures>,
    mpca_summaries: Vec<MpcaSummary>,
}

/// One block's training and evaluation rows before selection/scaling.
struct BlockData {
    train: Rc<FeatureMatrix>,
    test: Rc<FeatureMatrix>,
    select: bool,
}

#[derive(Clone, Debug, Serialize)]
struct BlockTransform {
    block: Block,
    selection: Option<FeatureSelection>,
    standardizer: Standardizer,
}

/// Fits per-block selection and scaling on the rows `rows`; `labels[i]`
/// belongs to `rows[i]`.
fn fit_transforms(
    blocks: &[(Block, &FeatureMatrix, bool)],
    rows: &[usize],
    labels: &[bool],
    k: usize,
) -> Result<Vec<BlockTransform>> {
    blocks
        .iter()
        .map(|&(block, x, select)| {
            let selection = if select && x.ncols() > k {
                Some(fisher_scores_on(x, rows, labels)?.select_top_k(k))
            } else {
                None
            };
            let chosen = match &selection {
                Some(s) => s.apply_rows(x, rows)?,
                None => x.select_rows(rows),
            };
            Ok(BlockTransform {
                block,
                selection,
                standardizer: Standardizer::fit(&chosen)?,
            })
        })
        .collect()
}

fn apply_transforms(transforms: &[BlockTransform], blocks: &[&FeatureMatrix], rows: &[usize]) -> Result<FeatureMatrix> {
    let scaled = transforms
        .iter()
        .zip(blocks)
        .map(|(t, x)| {
            let chosen = match &t.selection {
                Some(s) => s.apply_rows(x, rows)?,
                None => x.select_rows(rows),
            };
            t.standardizer.apply(&chosen)
        })
        .collect::<Result<Vec<_>>>()?;
    FeatureMatrix::hstack(&scaled.iter().collect::<Vec<_>>())
}

/// Fold-local selection and scaling over precomputed block features.
struct FamilyFolds<'a> {
    blocks: Vec<(Block, &'a FeatureMatrix, bool)>,
    labels: &'a [bool],
    k: usize,
}

impl FoldFeatures for FamilyFolds<'_> {
    fn n_samples(&self) -> usize {
        self.labels.len()
    }

    fn prepare(&self, train: &[usize], eval: &[usize]) -> Result<(FeatureMatrix, FeatureMatrix)> {
        let labels: Vec<bool> = train.iter().map(|&i| self.labels[i]).collect();
        let t = fit_transforms(&self.blocks, train, &labels, self.k)?;
        let xs: Vec<&FeatureMatrix> = self.blocks.iter().map(|b| b.1).collect();
        Ok((apply_transforms(&t, &xs, train)?, apply_transforms(&t, &xs, eval)?))
    }
}

struct FittedFamily {
    spec: FusionSpec,
    transforms: Vec<BlockTransform>,
    classifier: LinearClassifier,
    cv_mean_auc: f64,
    cv_table: Vec<CvCell>,
    test_scores: Vec<f64>,
    test_probabilities: Vec<f64>,
}

#[derive(Serialize)]
struct SavedBlock<'a> {
    block: Block,
    mpca_file: Option<String>,
    selection: Option<&'a FeatureSelection>,
    standardizer: &'a Standardizer,
}

#[derive(Serialize)]
struct SavedModel<'a> {
    family: ModelFamily,
    resolution: usize,
    cv_mean_auc: f64,
    blocks: Vec<SavedBlock<'a>>,
    classifier: &'a LinearClassifier,
}

fn mpca_file(src: ImageSource, res: usize) -> String {
    format!("mpca_{}_{res}.bin", src.as_str())
}

impl FittedFamily {
    fn save(&self, dir: &Path, cache: &BTreeMap<CacheKey, ImageFeatures>) -> Result<()> {
        let mut blocks = Vec::new();
        for t in &self.transforms {
            let mpca_file_name = match t.block {
                Block::Image(src) => {
                    let name = mpca_file(src, self.spec.resolution);
                    let path = dir.join(&name);
                    if !path.exists() {
                        let feats = &cache[&(src, self.spec.resolution)];
                        let artifact = MpcaArtifact {
                            model: feats.model.clone(),
                            selection: None,
                        };
                        let file = fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
                        artifact
                            .write_to(&mut BufWriter::new(file))
                            .map_err(|e| Error::io(&path, e))?;
                    }
                    Some(name)
                }
                Block::Tabular => None,
            };
            blocks.push(SavedBlock {
                block: t.block,
                mpca_file: mpca_file_name,
                selection: t.selection.as_ref(),
                standardizer: &t.standardizer,
            });
        }
        let saved = SavedModel {
            family: self.spec.family,
            resolution: self.spec.resolution,
            cv_mean_auc: self.cv_mean_auc,
            blocks,
            classifier: &self.classifier,
        };
        write_json(
            &dir.join(format!("{}_{}.json", self.spec.family.as_str(), self.spec.resolution)),
            &saved,
        )
    }
}

impl Context<'_> {
    fn ids<'b>(&'b self, idx: &'b [usize]) -> impl Iterator<Item = &'b str> + 'b {
        idx.iter().map(|&i| self.cohort.ids[i].as_str())
    }

    fn labels(&self, idx: &[usize]) -> Vec<bool> {
        idx.iter().map(|&i| self.cohort.labels[i]).collect()
    }

    fn svm_options(&self) -> SvmOptions {
        SvmOptions {
            tol: self.config.svm_tol,
            max_epochs: self.config.svm_max_epochs,
            seed: self.config.seed,
            class_weighting: self.config.class_weighting,
        }
    }

    /// Tensor of `src` for cohort subject `i` at resolution `res`.
    fn tensor(&self, src: ImageSource, res: usize, i: usize) -> Result<std::borrow::Cow<'_, Tensor3>> {
        let set = &self.cohort.images[&res];
        Ok(match src {
            ImageSource::ShortAxis => std::borrow::Cow::Borrowed(&set.sa[i]),
            ImageSource::FourChamber => std::borrow::Cow::Borrowed(&set.fc[i]),
            ImageSource::Early => std::borrow::Cow::Owned(stack_mode1(&set.sa[i], &set.fc[i])?),
        })
    }

    fn features(&self, model: &MpcaModel, src: ImageSource, res: usize, idx: &[usize]) -> Result<FeatureMatrix> {
        let d = model.feature_count();
        let mut data = Vec::with_capacity(idx.len() * d);
        for &i in idx {
            data.extend(mpca::vectorize(&mpca::transform(model, &*self.tensor(src, res, i)?)?));
        }
        FeatureMatrix::new(idx.len(), d, data)
    }

    fn fit_image_block(&mut self, src: ImageSource, res: usize, fit_on: &[usize], eval_on: &[usize], tag: &str) -> Result<ImageFeatures> {
        let samples: Vec<std::borrow::Cow<'_, Tensor3>> = fit_on
            .iter()
            .map(|&i| self.tensor(src, res, i))
            .collect::<Result<_>>()?;
        let clock = Instant::now();
        let model = mpca::fit(&samples, &self.config.mpca())?;
        drop(samples);
        let fitted = clock.elapsed();
        let train = self.features(&model, src, res, fit_on)?;
        let test = self.features(&model, src, res, eval_on)?;
        log::debug!(
            "MPCA {}@{res} on {} samples: fit {fitted:.1?}, transform {:.1?}, {} features",
            src.as_str(),
            fit_on.len(),
            clock.elapsed() - fitted,
            model.feature_count()
        );
        let artifact = format!("{tag}mpca/{}@{res}", src.as_str());
        let ids: Vec<String> = self.ids(fit_on).map(str::to_string).collect();
        self.audit.record(artifact, ids.iter().map(String::as_str));
        Ok(ImageFeatures {
            model,
            train: Rc::new(train),
            test: Rc::new(test),
        })
    }

    /// Runs quality binning on the training set; returns the removal result
    /// and the surviving cohort indices.
    fn bin(&mut self, train: &[usize], roster: &[FusionSpec], out_dir: &Path) -> Result<Option<(BinRemoval, Vec<usize>)>> {
        let cfg = self.config;
        if !cfg.binning {
            return Ok(None);
        }
        let pooled: Vec<f64> = train
            .iter()
            .filter_map(|&i| self.cohort.uncertainty[i].as_ref())
            .flatten()
            .copied()
            .collect();
        if pooled.len() < cfg.bins {
            log::warn!(
                "binning skipped: {} landmark uncertainties for {} bins",
                pooled.len(),
                cfg.bins
            );
            return Ok(None);
        }
        let binning = QuantileBinning::fit(&pooled, cfg.bins)?;
        self.audit.record("binning/quantile_edges", self.ids(train).map(str::to_string).collect::<Vec<_>>().iter().map(String::as_str));
        let sample_bins: Vec<usize> = train
            .iter()
            .map(|&i| binning.sample_bin(self.cohort.uncertainty[i].as_deref()))
            .collect();
        let family = binning_family(roster);
        let res = cfg.binning_resolution;
        log::info!("binning with {family}@{res} as the validation model");
        let result = iterative_bin_removal(&sample_bins, cfg.bins, |surv| {
            let subset: Vec<usize> = surv.iter().map(|&s| train[s]).collect();
            let (p, n) = class_counts(&self.labels(&subset));
            if p < cfg.cv_folds || n < cfg.cv_folds {
                return Ok(None);
            }
            let tag = format!("binning/{}/", sample_bins.len() - subset.len());
            let spec = FusionSpec { family, resolution: res };
            let fitted = self.fit_family_on(spec, &subset, &[], &tag, false)?;
            Ok(Some(fitted.cv_mean_auc))
        });
        match result {
            Ok(removal) => {
                write_history_csv(&out_dir.join("binning_history.csv"), &removal.history)?;
                let survivors = crate::binning::filter_samples(&sample_bins, cfg.bins, removal.chosen)?
                    .into_iter()
                    .map(|s| train[s])
                    .collect();
                log::info!(
                    "removing {} bins (validation AUC {:.4} vs {:.4} with none)",
                    removal.chosen,
                    removal.best_auc(),
                    removal.history[0].val_auc
                );
                Ok(Some((removal, survivors)))
            }
            Err(failure) => {
                write_history_csv(&out_dir.join("binning_history.csv"), &failure.history)?;
                Err(failure.source)
            }
        }
    }

    fn fit_family(&mut self, spec: FusionSpec, train: &[usize], test: &[usize]) -> Result<FittedFamily> {
        self.fit_family_on(spec, train, test, "", true)
    }

    /// Learns a family on `train`. With `cached`, image features come from
    /// (and go to) the shared cache, which is only valid for the final
    /// training set.
    fn fit_family_on(&mut self, spec: FusionSpec, train: &[usize], test: &[usize], tag: &str, cached: bool) -> Result<FittedFamily> {
        let res = spec.resolution;
        let mut local: Vec<(Block, Rc<FeatureMatrix>, Rc<FeatureMatrix>, bool)> = Vec::new();
        for block in spec.family.blocks() {
            match block {
                Block::Image(src) => {
                    if cached {
                        if !self.cache.contains_key(&(src, res)) {
                            let f = self.fit_image_block(src, res, train, test, tag)?;
                            self.mpca_summaries.push(MpcaSummary {
                                block: src.as_str().to_string(),
                                resolution: res,
                                input_dims: f.model.input_dims(),
                                output_dims: f.model.output_dims(),
                                iterations: f.model.iterations_run,
                                captured_fraction: if f.model.input_scatter > 0.0 {
                                    f.model.captured_scatter / f.model.input_scatter
                                } else {
                                    1.0
                                },
                            });
                            self.cache.insert((src, res), f);
                        }
                    } else {
                        let f = self.fit_image_block(src, res, train, test, tag)?;
                        local.push((block, f.train, f.test, true));
                    }
                }
                Block::Tabular => local.push((
                    block,
                    Rc::new(self.cohort.tabular.select_rows(train)),
                    Rc::new(self.cohort.tabular.select_rows(test)),
                    false,
                )),
            }
        }
        let blocks: Vec<BlockData> = {
            let mut li = local.into_iter();
            spec.family
                .blocks()
                .into_iter()
                .map(|b| match b {
                    Block::Image(src) if cached => {
                        let f = &self.cache[&(src, res)];
                        BlockData {
                            train: Rc::clone(&f.train),
                            test: Rc::clone(&f.test),
                            select: true,
                        }
                    }
                    _ => {
                        let (_, train, test, select) = li.next().unwrap();
                        BlockData { train, test, select }
                    }
                })
                .collect()
        };
        let kinds = spec.family.blocks();
        let labels = self.labels(train);
        let folds = FamilyFolds {
            blocks: kinds
                .iter()
                .zip(&blocks)
                .map(|(&k, b)| (k, &*b.train, b.select))
                .collect(),
            labels: &labels,
            k: self.config.top_k,
        };
        let opts = self.svm_options();
        let grid = grid_search_cv(&folds, &labels, &self.config.c_grid, self.config.cv_folds, self.config.seed, &opts)?;
        let label = format!("{tag}{}", spec.label());
        let ids: Vec<String> = self.ids(train).map(str::to_string).collect();
        self.audit.record(format!("{label}/grid_search"), ids.iter().map(String::as_str));
        if !cached {
            return Ok(FittedFamily {
                spec,
                transforms: Vec::new(),
                classifier: LinearClassifier {
                    weights: Vec::new(),
                    bias: 0.0,
                    c: grid.best_c,
                    platt_a: 1.0,
                    platt_b: 0.0,
                },
                cv_mean_auc: grid.best_mean_auc,
                cv_table: grid.cv_table,
                test_scores: Vec::new(),
                test_probabilities: Vec::new(),
            });
        }
        let all_train: Vec<usize> = (0..labels.len()).collect();
        let transforms = fit_transforms(&folds.blocks, &all_train, &labels, self.config.top_k)?;
        self.audit.record(format!("{label}/selection_and_scaling"), ids.iter().map(String::as_str));
        let x_train = apply_transforms(&transforms, &blocks.iter().map(|b| &*b.train).collect::<Vec<_>>(), &all_train)?;
        let (mut clf, diag) = train_with_options(&x_train, &labels, grid.best_c, &opts)?;
        if !diag.converged {
            log::warn!("{label}: final SVM did not reach the duality-gap tolerance");
        }
        self.audit.record(format!("{label}/svm"), ids.iter().map(String::as_str));
        let (a, b) = calibrate(&grid.oof_scores, &labels)?;
        clf.platt_a = a;
        clf.platt_b = b;
        self.audit.record(format!("{label}/platt"), ids.iter().map(String::as_str));
        let all_test: Vec<usize> = (0..test.len()).collect();
        let x_test = apply_transforms(&transforms, &blocks.iter().map(|b| &*b.test).collect::<Vec<_>>(), &all_test)?;
        let test_scores = clf.decision_scores(&x_test)?;
        let test_probabilities = test_scores.iter().map(|&s| clf.probability_of_score(s)).collect();
        Ok(FittedFamily {
            spec,
            transforms,
            classifier: clf,
            cv_mean_auc: grid.best_mean_auc,
            cv_table: grid.cv_table,
            test_scores,
            test_probabilities,
        })
    }
}

/// The richest roster family, used to score bin removal.
pub fn binning_family(roster: &[FusionSpec]) -> ModelFamily {
    const PREFERENCE: [ModelFamily; 9] = [
        ModelFamily::Hybrid,
        ModelFamily::TriLate,
        ModelFamily::SaFcEarly,
        ModelFamily::SaFcLate,
        ModelFamily::SaEhr,
        ModelFamily::FcEhr,
        ModelFamily::Sa,
        ModelFamily::Fc,
        ModelFamily::Ehr,
    ];
    PREFERENCE
        .into_iter()
        .find(|f| roster.iter().any(|s| s.family == *f))
        .unwrap_or(ModelFamily::Ehr)
}
