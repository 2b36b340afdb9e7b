use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;

use super::config::{RunConfig, PAWP_THRESHOLD_MMHG};
use super::container::read_tensor;
use crate::error::{Error, Result};
use crate::fusion::InputModality;
use crate::registration::{LandmarkSet, TemplateLandmarks};
use crate::tensor::{Modality, Tensor3};

pub const REQUIRED_COLUMNS: [&str; 6] = [
    "subject_id",
    "diagnosis_date",
    "sa_path",
    "fc_path",
    "lv_mass",
    "la_volume",
];

#[derive(Clone, Debug, PartialEq)]
pub struct ManifestRow {
    pub subject_id: String,
    pub diagnosis_date: NaiveDate,
    pub pawp_mmhg: Option<f64>,
    pub label: bool,
    pub sa_path: PathBuf,
    pub fc_path: PathBuf,
    /// Values for [`Manifest::tabular_names`], in that order.
    pub tabular: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Manifest {
    pub path: PathBuf,
    pub tabular_names: Vec<String>,
    pub rows: Vec<ManifestRow>,
}

fn parse_label(s: &str) -> Option<bool> {
    match s {
        "1" | "true" | "True" | "TRUE" => Some(true),
        "0" | "false" | "False" | "FALSE" => Some(false),
        _ => None,
    }
}

/// Reads a manifest; tensor paths resolve against the manifest's directory.
/// Row errors are collected and reported together.
pub fn read_manifest(path: &Path) -> Result<Manifest> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::data(path, e.to_string()))?;
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| Error::data(path, e.to_string()))?
        .iter()
        .map(str::to_string)
        .collect();
    let col = |name: &str| header.iter().position(|h| h == name);
    let missing: Vec<&str> = REQUIRED_COLUMNS.iter().copied().filter(|c| col(c).is_none()).collect();
    if !missing.is_empty() {
        return Err(Error::data(path, format!("header lacks column(s) {}", missing.join(", "))));
    }
    let pawp_col = col("pawp_mmhg");
    let label_col = col("label");
    if pawp_col.is_none() && label_col.is_none() {
        return Err(Error::data(path, "header needs `pawp_mmhg` or `label`"));
    }
    let fixed: BTreeSet<&str> = REQUIRED_COLUMNS.iter().copied().chain(["pawp_mmhg", "label"]).collect();
    let tabular_names: Vec<String> = ["lv_mass", "la_volume"]
        .iter()
        .map(|s| s.to_string())
        .chain(header.iter().filter(|h| !fixed.contains(h.as_str())).cloned())
        .collect();
    let tabular_cols: Vec<usize> = tabular_names.iter().map(|n| col(n).unwrap()).collect();
    let [id_c, date_c, sa_c, fc_c] = ["subject_id", "diagnosis_date", "sa_path", "fc_path"].map(|n| col(n).unwrap());
    let base = path.parent().unwrap_or(Path::new("."));

    let mut rows = Vec::new();
    let mut errors = Vec::new();
    let mut seen = BTreeSet::new();
    let mut duplicates = BTreeSet::new();
    for (i, rec) in reader.records().enumerate() {
        let line = i + 2;
        let rec = match rec {
            Ok(r) => r,
            Err(e) => {
                errors.push(format!("line {line}: {e}"));
                continue;
            }
        };
        let field = |c: usize| rec.get(c).unwrap_or("");
        let mut row_errors = Vec::new();
        let subject_id = field(id_c).to_string();
        if subject_id.is_empty() {
            row_errors.push("empty subject_id".to_string());
        } else if !seen.insert(subject_id.clone()) {
            duplicates.insert(subject_id.clone());
        }
        let date = NaiveDate::parse_from_str(field(date_c), "%Y-%m-%d")
            .map_err(|e| row_errors.push(format!("diagnosis_date `{}`: {e}", field(date_c))))
            .ok();
        let pawp = match pawp_col.map(field).filter(|s| !s.is_empty()) {
            None => None,
            Some(s) => match s.parse::<f64>() {
                Ok(v) if v.is_finite() => Some(v),
                _ => {
                    row_errors.push(format!("pawp_mmhg `{s}` is not a finite number"));
                    None
                }
            },
        };
        let given = match label_col.map(field).filter(|s| !s.is_empty()) {
            None => None,
            Some(s) => {
                let l = parse_label(s);
                if l.is_none() {
                    row_errors.push(format!("label `{s}` is not 0/1"));
                }
                l
            }
        };
        let label = match (pawp, given) {
            (Some(p), Some(l)) if (p > PAWP_THRESHOLD_MMHG) != l => {
                row_errors.push(format!("label {} contradicts pawp_mmhg {p}", u8::from(l)));
                None
            }
            (Some(p), _) => Some(p > PAWP_THRESHOLD_MMHG),
            (None, Some(l)) => Some(l),
            (None, None) => {
                if pawp_col.is_some_and(|c| field(c).is_empty()) || label_col.is_none() {
                    row_errors.push("neither pawp_mmhg nor label given".into());
                }
                None
            }
        };
        let mut tabular = Vec::with_capacity(tabular_cols.len());
        for (name, &c) in tabular_names.iter().zip(&tabular_cols) {
            match field(c).parse::<f64>() {
                Ok(v) if v.is_finite() => tabular.push(v),
                _ => row_errors.push(format!("{name} `{}` is not a finite number", field(c))),
            }
        }
        for (name, c) in [("sa_path", sa_c), ("fc_path", fc_c)] {
            if field(c).is_empty() {
                row_errors.push(format!("empty {name}"));
            }
        }
        if !row_errors.is_empty() {
            errors.extend(row_errors.into_iter().map(|e| format!("line {line} (`{subject_id}`): {e}")));
            continue;
        }
        rows.push(ManifestRow {
            subject_id,
            diagnosis_date: date.unwrap(),
            pawp_mmhg: pawp,
            label: label.unwrap(),
            sa_path: base.join(field(sa_c)),
            fc_path: base.join(field(fc_c)),
            tabular,
        });
    }
    if !duplicates.is_empty() {
        return Err(Error::data(
            path,
            format!(
                "duplicate subject_id(s): {}",
                duplicates.into_iter().collect::<Vec<_>>().join(", ")
            ),
        ));
    }
    if !errors.is_empty() {
        return Err(Error::DataErrors {
            count: errors.len(),
            messages: errors
                .into_iter()
                .map(|e| format!("{}: {e}", path.display()))
                .collect(),
        });
    }
    Ok(Manifest {
        path: path.to_path_buf(),
        tabular_names,
        rows,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct Subject {
    pub subject_id: String,
    pub diagnosis_date: NaiveDate,
    pub label: bool,
    pub pawp_mmhg: Option<f64>,
    pub sa: Option<Tensor3>,
    pub fc: Option<Tensor3>,
    /// Values of [`Dataset::tabular_names`].
    pub tabular: Vec<f64>,
}

impl Subject {
    pub fn image(&self, modality: Modality) -> Option<&Tensor3> {
        match modality {
            Modality::ShortAxis => self.sa.as_ref(),
            Modality::FourChamber => self.fc.as_ref(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct Dataset {
    pub subjects: Vec<Subject>,
    pub tabular_names: Vec<String>,
    pub landmarks: Option<LandmarkSet>,
    pub template: Option<TemplateLandmarks>,
    /// Shared in-plane × phase shape per loaded modality.
    pub image_dims: Option<[usize; 3]>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.subjects.len()
    }

    pub fn is_empty(&self) -> bool {
        self.subjects.is_empty()
    }

    pub fn positives(&self) -> usize {
        self.subjects.iter().filter(|s| s.label).count()
    }
}

/// Loads the manifest, every tensor the roster needs and the landmark files.
pub fn ingest(config: &RunConfig) -> Result<Dataset> {
    let manifest = read_manifest(&config.manifest)?;
    let roster = config.roster()?;
    let mut needed = BTreeSet::new();
    for spec in &roster {
        needed.extend(spec.family.modalities());
    }
    let load_sa = needed.contains(&InputModality::ShortAxis);
    let load_fc = needed.contains(&InputModality::FourChamber);

    let tab_idx = if needed.contains(&InputModality::Tabular) {
        config
            .tabular_columns
            .iter()
            .map(|c| {
                manifest.tabular_names.iter().position(|n| n == c).ok_or_else(|| {
                    Error::Config(format!(
                        "tabular column `{c}` not in manifest (have {:?})",
                        manifest.tabular_names
                    ))
                })
            })
            .collect::<Result<Vec<_>>>()?
    } else {
        Vec::new()
    };

    let mut errors = Vec::new();
    let mut dims: Option<[usize; 3]> = None;
    let mut subjects = Vec::with_capacity(manifest.rows.len());
    for row in &manifest.rows {
        let mut load = |p: &Path, wanted: bool| -> Option<Tensor3> {
            if !wanted {
                return None;
            }
            match read_tensor(p).and_then(|t| t.check_finite().map(|_| t)) {
                Ok(t) => {
                    match dims {
                        None => dims = Some(t.dims()),
                        Some(d) if d != t.dims() => {
                            errors.push(format!(
                                "{}: shape {:?} differs from cohort shape {d:?}",
                                p.display(),
                                t.dims()
                            ));
                            return None;
                        }
                        _ => {}
                    }
                    Some(t)
                }
                Err(e) => {
                    errors.push(e.to_string());
                    None
                }
            }
        };
        let sa = load(&row.sa_path, load_sa);
        let fc = load(&row.fc_path, load_fc);
        subjects.push(Subject {
            subject_id: row.subject_id.clone(),
            diagnosis_date: row.diagnosis_date,
            label: row.label,
            pawp_mmhg: row.pawp_mmhg,
            sa,
            fc,
            tabular: tab_idx.iter().map(|&i| row.tabular[i]).collect(),
        });
    }
    if let Some([r, c, _]) = dims {
        if r != c {
            errors.push(format!("images are {r}×{c}; square in-plane frames are required"));
        }
    }
    if !errors.is_empty() {
        return Err(Error::DataErrors {
            count: errors.len(),
            messages: errors,
        });
    }

    let landmarks = match &config.landmarks {
        Some(p) => Some(LandmarkSet::read_csv(p)?),
        None => None,
    };
    if let (Some(lm), Some([r, c, _])) = (&landmarks, dims) {
        let ids: BTreeSet<&str> = subjects.iter().map(|s| s.subject_id.as_str()).collect();
        let mut bad = Vec::new();
        for rec in lm.iter() {
            if !ids.contains(rec.subject_id.as_str()) {
                log::warn!("landmarks for unknown subject `{}` ignored", rec.subject_id);
                continue;
            }
            if let Err(e) = rec.validate(Some((r, c))) {
                bad.push(format!("subject `{}` ({}): {e}", rec.subject_id, rec.modality));
            }
        }
        if !bad.is_empty() {
            return Err(Error::DataErrors {
                count: bad.len(),
                messages: bad,
            });
        }
    }
    let template = match &config.template {
        Some(p) => Some(TemplateLandmarks::load(p)?),
        None => None,
    };
    Ok(Dataset {
        subjects,
        tabular_names: config
            .tabular_columns
            .iter()
            .filter(|_| !tab_idx.is_empty())
            .cloned()
            .collect(),
        landmarks,
        template,
        image_dims: dims,
    })
}
