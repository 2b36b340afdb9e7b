use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::classifier::{ClassWeighting, DEFAULT_C_GRID};
use crate::error::{Error, Result};
use crate::fusion::{build_model_roster, FusionSpec};
use crate::mpca::MpcaConfig;
use crate::tensor::POOL_FACTORS;

/// PAWP above this value is the positive class.
pub const PAWP_THRESHOLD_MMHG: f64 = 15.0;

pub const ALLOWED_RESOLUTIONS: [usize; 4] = [16, 32, 64, 128];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub manifest: PathBuf,
    /// Landmark CSV; without it images stay unregistered and binning is skipped.
    pub landmarks: Option<PathBuf>,
    pub template: Option<PathBuf>,
    pub output_dir: PathBuf,
    pub seed: u64,

    pub resolutions: Vec<usize>,
    pub modalities: Vec<String>,
    pub tabular_columns: Vec<String>,
    pub tri_modal_late: bool,

    pub variance_ratio: f64,
    pub mpca_max_iter: usize,
    pub mpca_tol: f64,
    pub top_k: usize,

    pub binning: bool,
    pub bins: usize,
    pub binning_resolution: usize,

    pub c_grid: Vec<f64>,
    pub cv_folds: usize,
    pub class_weighting: ClassWeighting,
    pub svm_tol: f64,
    /// SVM work cap in full-sweep units; see [`crate::classifier::SvmOptions::max_epochs`].
    pub svm_max_epochs: usize,

    pub train_fraction: f64,
    pub test_partitions: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            manifest: "manifest.csv".into(),
            landmarks: None,
            template: None,
            output_dir: "run".into(),
            seed: 0,
            resolutions: ALLOWED_RESOLUTIONS.to_vec(),
            modalities: vec!["short_axis".into(), "four_chamber".into(), "tabular".into()],
            tabular_columns: vec!["lv_mass".into(), "la_volume".into()],
            tri_modal_late: false,
            variance_ratio: 0.97,
            mpca_max_iter: 15,
            mpca_tol: 1e-6,
            top_k: 210,
            binning: true,
            bins: 50,
            binning_resolution: 16,
            c_grid: DEFAULT_C_GRID.to_vec(),
            cv_folds: 10,
            class_weighting: ClassWeighting::None,
            svm_tol: 1e-6,
            svm_max_epochs: 100_000,
            // floor(0.8032 · 1346) = 1081 training subjects
            train_fraction: 0.8032,
            test_partitions: 5,
        }
    }
}

impl RunConfig {
    /// Parses a TOML file; relative paths resolve against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg: RunConfig = toml::from_str(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.resolve_paths(base);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.manifest);
        fix(&mut self.output_dir);
        if let Some(p) = self.landmarks.as_mut() {
            fix(p);
        }
        if let Some(p) = self.template.as_mut() {
            fix(p);
        }
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_toml()?).map_err(|e| Error::io(path, e))
    }

    pub fn pawp_threshold(&self) -> f64 {
        PAWP_THRESHOLD_MMHG
    }

    pub fn mpca(&self) -> MpcaConfig {
        MpcaConfig {
            variance_ratio: self.variance_ratio,
            max_iter: self.mpca_max_iter,
            tol: self.mpca_tol,
        }
    }

    pub fn roster(&self) -> Result<Vec<FusionSpec>> {
        build_model_roster(&self.modalities, &self.resolutions, self.tri_modal_late)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.resolutions.is_empty() {
            return bad("at least one resolution is required".into());
        }
        for &r in self.resolutions.iter().chain([&self.binning_resolution]) {
            if !ALLOWED_RESOLUTIONS.contains(&r) {
                return bad(format!("resolution {r} not in {ALLOWED_RESOLUTIONS:?}"));
            }
        }
        let mut sorted = self.resolutions.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != self.resolutions.len() {
            return bad(format!("duplicate resolutions in {:?}", self.resolutions));
        }
        if !(self.variance_ratio > 0.0 && self.variance_ratio <= 1.0) {
            return bad(format!("variance_ratio {} outside (0, 1]", self.variance_ratio));
        }
        if self.mpca_max_iter == 0 || !(self.mpca_tol >= 0.0) {
            return bad("mpca_max_iter must be ≥ 1 and mpca_tol ≥ 0".into());
        }
        if self.top_k == 0 {
            return bad("top_k must be ≥ 1".into());
        }
        if self.bins < 2 {
            return bad(format!("bins = {} must be ≥ 2", self.bins));
        }
        if self.c_grid.is_empty() || self.c_grid.iter().any(|c| !(*c > 0.0 && c.is_finite())) {
            return bad(format!("c_grid {:?} must be non-empty and positive", self.c_grid));
        }
        if self.cv_folds < 2 {
            return bad(format!("cv_folds = {} must be ≥ 2", self.cv_folds));
        }
        if self.test_partitions == 0 {
            return bad("test_partitions must be ≥ 1".into());
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return bad(format!("train_fraction {} outside (0, 1)", self.train_fraction));
        }
        if !(self.svm_tol > 0.0) || self.svm_max_epochs == 0 {
            return bad("svm_tol must be > 0 and svm_max_epochs ≥ 1".into());
        }
        if self.tabular_columns.is_empty() && self.modalities.iter().any(|m| m == "tabular") {
            return bad("tabular modality requested without tabular_columns".into());
        }
        let roster = self.roster()?;
        if roster.is_empty() {
            return bad(format!("no model family can be built from {:?}", self.modalities));
        }
        Ok(())
    }
}

/// Pooling factor taking `native` to `resolution`; `1` means unchanged.
pub fn pool_factor(native: usize, resolution: usize) -> Result<usize> {
    if resolution == native {
        return Ok(1);
    }
    if resolution > native || !native.is_multiple_of(resolution) || !POOL_FACTORS.contains(&(native / resolution)) {
        return Err(Error::Config(format!(
            "resolution {resolution} is not reachable from native {native} with pool factors {POOL_FACTORS:?}"
        )));
    }
    Ok(native / resolution)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_snapshot() {
        let c = RunConfig::default();
        assert_eq!(c.top_k, 210);
        assert_eq!(c.bins, 50);
        assert_eq!(c.c_grid, vec![0.001, 0.01, 0.1, 1.0]);
        assert_eq!(c.cv_folds, 10);
        assert_eq!(c.test_partitions, 5);
        assert_eq!(c.resolutions, vec![16, 32, 64, 128]);
        assert_eq!(c.pawp_threshold(), 15.0);
        assert_eq!(c.variance_ratio, 0.97);
        c.validate().unwrap();
        assert_eq!(c.roster().unwrap().len(), 32);
    }

    #[test]
    fn toml_round_trip_and_partial_files() {
        let c = RunConfig::default();
        let back: RunConfig = toml::from_str(&c.to_toml().unwrap()).unwrap();
        assert_eq!(back, c);
        let partial: RunConfig = toml::from_str("seed = 7\nresolutions = [64]").unwrap();
        assert_eq!(partial.seed, 7);
        assert_eq!(partial.top_k, 210);
        assert!(toml::from_str::<RunConfig>("sede = 7").is_err());
    }

    #[test]
    fn validation_rejects() {
        let with = |f: &dyn Fn(&mut RunConfig)| {
            let mut c = RunConfig::default();
            f(&mut c);
            c.validate()
        };
        assert!(with(&|c| c.resolutions = vec![48]).is_err());
        assert!(with(&|c| c.resolutions = vec![]).is_err());
        assert!(with(&|c| c.bins = 1).is_err());
        assert!(with(&|c| c.c_grid = vec![0.0]).is_err());
        assert!(with(&|c| c.modalities = vec!["pet".into()]).is_err());
        assert!(with(&|c| c.train_fraction = 1.0).is_err());
    }

    #[test]
    fn pooling_factors() {
        assert_eq!(pool_factor(64, 64).unwrap(), 1);
        assert_eq!(pool_factor(64, 16).unwrap(), 4);
        assert_eq!(pool_factor(512, 128).unwrap(), 4);
        assert!(pool_factor(512, 16).is_err());
        assert!(pool_factor(64, 128).is_err());
        assert!(pool_factor(48, 32).is_err());
    }
}
