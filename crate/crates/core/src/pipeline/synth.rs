//! Synthetic cine cohorts with planted, documented class signal.
//!
//! Each subject has a latent class `y`. Every modality `m` carries a score
//! `z_m = μ_m·(2y − 1) + ε_m` with independent `ε_m ~ N(0, 1)`, so the
//! modalities are complementary views of the same class. For images the score
//! scales a rank-1 spatio-temporal pattern added in template space before the
//! subject's affine pose is applied.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use chrono::{Days, NaiveDate};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use super::config::{pool_factor, RunConfig};
use super::container::write_tensor;
use crate::error::{Error, Result};
use crate::registration::{AffineTransform2D, LandmarkRecord, LandmarkSet, Point, TemplateLandmarks, TemplatePoints, warp_tensor};
use crate::tensor::{Modality, Tensor3};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    Easy,
    Complementary,
    Null,
    NoisyBins,
}

impl Preset {
    pub const ALL: [Preset; 4] = [Preset::Easy, Preset::Complementary, Preset::Null, Preset::NoisyBins];

    pub fn as_str(self) -> &'static str {
        match self {
            Preset::Easy => "easy",
            Preset::Complementary => "complementary",
            Preset::Null => "null",
            Preset::NoisyBins => "noisy-bins",
        }
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Preset::ALL
            .into_iter()
            .find(|p| p.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown preset `{s}`")))
    }
}

/// Class separation `μ` of each modality's latent score.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SignalStrengths {
    pub short_axis: f64,
    pub four_chamber: f64,
    pub tabular: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub preset: Preset,
    pub subjects: usize,
    /// Native in-plane size (rows = cols).
    pub size: usize,
    pub phases: usize,
    pub prevalence: f64,
    pub signal: SignalStrengths,
    /// Pattern amplitude per unit latent score.
    pub image_gain: f64,
    pub nuisance: f64,
    pub pixel_noise: f64,
    pub landmark_noise_px: f64,
    pub poor_fraction: f64,
    /// Noise of the one misplaced landmark per view of a poor-quality subject.
    pub poor_landmark_noise_px: f64,
    /// Probability that a poor-quality subject's recorded label is flipped.
    pub poor_label_flip: f64,
    pub max_rotation_deg: f64,
    pub max_scale_dev: f64,
    pub max_shift_frac: f64,
    pub resolutions: Vec<usize>,
    pub binning_resolution: usize,
    pub seed: u64,
}

impl SynthSpec {
    pub fn preset(preset: Preset, subjects: usize, size: usize, phases: usize, seed: u64) -> Self {
        let mu = match preset {
            Preset::Easy => 1.3,
            Preset::Complementary => 0.6,
            Preset::Null => 0.0,
            Preset::NoisyBins => 0.9,
        };
        let noisy = preset == Preset::NoisyBins;
        SynthSpec {
            preset,
            subjects,
            size,
            phases,
            prevalence: 0.35,
            signal: SignalStrengths {
                short_axis: mu,
                four_chamber: mu,
                tabular: mu,
            },
            image_gain: 0.35,
            nuisance: 0.15,
            pixel_noise: 0.03,
            landmark_noise_px: 0.3 * size as f64 / 64.0,
            poor_fraction: if noisy { 0.10 } else { 0.0 },
            poor_landmark_noise_px: 3.0 * size as f64 / 64.0,
            poor_label_flip: if noisy { 1.0 } else { 0.0 },
            max_rotation_deg: 6.0,
            max_scale_dev: 0.06,
            max_shift_frac: 0.04,
            resolutions: vec![size],
            binning_resolution: 16,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.subjects < 2 {
            return bad(format!("need at least 2 subjects, got {}", self.subjects));
        }
        if self.size < 8 || self.phases == 0 {
            return bad(format!("image size {} × {} phases is too small", self.size, self.phases));
        }
        if !(self.prevalence > 0.0 && self.prevalence < 1.0) {
            return bad(format!("prevalence {} outside (0, 1)", self.prevalence));
        }
        for (name, v) in [
            ("poor_fraction", self.poor_fraction),
            ("poor_label_flip", self.poor_label_flip),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return bad(format!("{name} {v} outside [0, 1]"));
            }
        }
        for &r in self.resolutions.iter().chain([&self.binning_resolution]) {
            pool_factor(self.size, r)?;
        }
        Ok(())
    }
}

fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Smooth disc indicator in normalised coordinates.
fn disc(u: f64, v: f64, cu: f64, cv: f64, radius: f64) -> f64 {
    let d = ((u - cu).powi(2) + (v - cv).powi(2)).sqrt();
    logistic((radius - d) / 0.012)
}

fn template_image(modality: Modality, size: usize, phases: usize) -> Tensor3 {
    let n = size as f64;
    Tensor3::from_fn([size, size, phases], |i, j, k| {
        let (u, v) = (i as f64 / n, j as f64 / n);
        let beat = (std::f64::consts::PI * k as f64 / phases as f64).sin().powi(2);
        match modality {
            Modality::ShortAxis => {
                let lv = 0.17 * (1.0 - 0.22 * beat);
                let wall = disc(u, v, 0.5, 0.55, lv + 0.05) - disc(u, v, 0.5, 0.55, lv);
                let pool = disc(u, v, 0.5, 0.55, lv);
                let rv = disc(u, v, 0.5, 0.3, 0.1 * (1.0 - 0.15 * beat));
                0.1 + 0.45 * wall + 0.85 * pool + 0.75 * rv
            }
            Modality::FourChamber => {
                let ventricles = 0.13 * (1.0 - 0.2 * beat);
                let atria = 0.1 * (1.0 - 0.2 * (1.0 - beat));
                0.1 + 0.8 * disc(u, v, 0.38, 0.38, ventricles)
                    + 0.7 * disc(u, v, 0.38, 0.64, ventricles)
                    + 0.75 * disc(u, v, 0.66, 0.38, atria)
                    + 0.65 * disc(u, v, 0.66, 0.64, atria)
            }
        }
    })
}

/// Rank-1 pattern `a(row) ∘ b(col) ∘ c(phase)` with Gaussian spatial bumps.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Pattern {
    pub row_centre: f64,
    pub col_centre: f64,
    pub width: f64,
    pub temporal_cycles: f64,
    pub temporal_offset: f64,
}

impl Pattern {
    fn render(&self, size: usize, phases: usize) -> Tensor3 {
        let n = size as f64;
        let bump = |x: f64, c: f64| (-(x / n - c).powi(2) / (2.0 * self.width.powi(2))).exp();
        Tensor3::from_fn([size, size, phases], |i, j, k| {
            let t = 2.0 * std::f64::consts::PI * self.temporal_cycles * k as f64 / phases as f64;
            bump(i as f64, self.row_centre) * bump(j as f64, self.col_centre) * (t + self.temporal_offset).cos()
        })
    }
}

fn class_pattern(modality: Modality) -> Pattern {
    match modality {
        Modality::ShortAxis => Pattern {
            row_centre: 0.5,
            col_centre: 0.74,
            width: 0.06,
            temporal_cycles: 1.0,
            temporal_offset: 0.0,
        },
        Modality::FourChamber => Pattern {
            row_centre: 0.66,
            col_centre: 0.38,
            width: 0.06,
            temporal_cycles: 1.0,
            temporal_offset: 1.0,
        },
    }
}

fn nuisance_patterns(modality: Modality) -> [Pattern; 2] {
    let (a, b) = match modality {
        Modality::ShortAxis => ((0.3, 0.6), (0.68, 0.45)),
        Modality::FourChamber => ((0.38, 0.52), (0.25, 0.3)),
    };
    [
        Pattern {
            row_centre: a.0,
            col_centre: a.1,
            width: 0.08,
            temporal_cycles: 0.5,
            temporal_offset: 0.3,
        },
        Pattern {
            row_centre: b.0,
            col_centre: b.1,
            width: 0.07,
            temporal_cycles: 2.0,
            temporal_offset: 0.0,
        },
    ]
}

pub fn template_landmarks(size: usize) -> TemplateLandmarks {
    let n = size as f64;
    let scale = |pts: [Point; 3]| pts.map(|[r, c]| [r * n, c * n]);
    TemplateLandmarks {
        short_axis: TemplatePoints {
            points: scale([[0.5, 0.55], [0.5, 0.3], [0.3, 0.42]]),
        },
        four_chamber: TemplatePoints {
            points: scale([[0.25, 0.5], [0.66, 0.38], [0.66, 0.64]]),
        },
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubjectTruth {
    pub subject_id: String,
    pub true_class: bool,
    pub recorded_label: bool,
    pub poor_quality: bool,
    pub z_short_axis: f64,
    pub z_four_chamber: f64,
    pub z_tabular: f64,
    /// Template-to-subject pose per view.
    pub pose_short_axis: AffineTransform2D,
    pub pose_four_chamber: AffineTransform2D,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModalityTruth {
    pub modality: String,
    pub mu: f64,
    pub carries_signal: bool,
    pub class_pattern: Option<Pattern>,
    pub nuisance_patterns: Vec<Pattern>,
    /// Tabular columns driven by this modality's score.
    pub signal_columns: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub spec: SynthSpec,
    pub modalities: Vec<ModalityTruth>,
    pub subjects: Vec<SubjectTruth>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SynthOutput {
    pub dir: PathBuf,
    pub manifest: PathBuf,
    pub config: PathBuf,
    pub ground_truth: GroundTruth,
}

fn random_pose(rng: &mut ChaCha8Rng, spec: &SynthSpec) -> AffineTransform2D {
    let theta = rng.random_range(-1.0..=1.0) * spec.max_rotation_deg.to_radians();
    let scale_r = 1.0 + rng.random_range(-1.0..=1.0) * spec.max_scale_dev;
    let scale_c = 1.0 + rng.random_range(-1.0..=1.0) * spec.max_scale_dev;
    let shift = spec.max_shift_frac * spec.size as f64;
    let t = [rng.random_range(-shift..=shift), rng.random_range(-shift..=shift)];
    let (s, c) = theta.sin_cos();
    let linear = [[c * scale_r, -s * scale_c], [s * scale_r, c * scale_c]];
    let centre = (spec.size as f64 - 1.0) / 2.0;
    // p ↦ centre + L·(p − centre) + t
    let translation = [
        centre + t[0] - (linear[0][0] + linear[0][1]) * centre,
        centre + t[1] - (linear[1][0] + linear[1][1]) * centre,
    ];
    AffineTransform2D { linear, translation }
}

fn truncated_normal(rng: &mut ChaCha8Rng, mean: f64, sd: f64, lo: f64, hi: f64) -> f64 {
    let d = Normal::new(mean, sd).unwrap();
    loop {
        let v: f64 = d.sample(rng);
        if v >= lo && v <= hi {
            return v;
        }
    }
}

/// Writes `manifest.csv`, `landmarks.csv`, `template.toml`, `run.toml`,
/// `ground_truth.json` and `tensors/*.tns` into `dir`.
pub fn synthesize(spec: &SynthSpec, dir: &Path) -> Result<SynthOutput> {
    spec.validate()?;
    let tensor_dir = dir.join("tensors");
    fs::create_dir_all(&tensor_dir).map_err(|e| Error::io(&tensor_dir, e))?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let (size, phases) = (spec.size, spec.phases);
    let template = template_landmarks(size);

    struct View {
        modality: Modality,
        mu: f64,
        template: Tensor3,
        signal: Tensor3,
        nuisance: [Tensor3; 2],
    }
    let views: Vec<View> = [
        (Modality::ShortAxis, spec.signal.short_axis),
        (Modality::FourChamber, spec.signal.four_chamber),
    ]
    .into_iter()
    .map(|(m, mu)| View {
        modality: m,
        mu,
        template: template_image(m, size, phases),
        signal: class_pattern(m).render(size, phases),
        nuisance: nuisance_patterns(m).map(|p| p.render(size, phases)),
    })
    .collect();

    let start = NaiveDate::from_ymd_opt(2010, 1, 1).unwrap();
    let mut manifest = csv::Writer::from_path(dir.join("manifest.csv"))
        .map_err(|e| Error::data(dir.join("manifest.csv"), e.to_string()))?;
    let merr = |e: csv::Error| Error::data(dir.join("manifest.csv"), e.to_string());
    manifest
        .write_record(["subject_id", "diagnosis_date", "pawp_mmhg", "label", "sa_path", "fc_path", "lv_mass", "la_volume"])
        .map_err(merr)?;
    let mut landmarks = LandmarkSet::new();
    let mut truths = Vec::with_capacity(spec.subjects);

    for s in 0..spec.subjects {
        let id = format!("S{:04}", s + 1);
        let y = rng.random_bool(spec.prevalence);
        let sign = if y { 1.0 } else { -1.0 };
        let poor = rng.random_bool(spec.poor_fraction);
        let flip = poor && rng.random_bool(spec.poor_label_flip);
        let label = y != flip;
        let mut z = [0.0; 3];
        for (zi, mu) in z.iter_mut().zip([spec.signal.short_axis, spec.signal.four_chamber, spec.signal.tabular]) {
            let e: f64 = StandardNormal.sample(&mut rng);
            *zi = mu * sign + e;
        }

        let mut poses = Vec::with_capacity(2);
        for (vi, view) in views.iter().enumerate() {
            let pose = random_pose(&mut rng, spec);
            let gain: f64 = 1.0 + 0.1 * rng.sample::<f64, _>(StandardNormal);
            let n1: f64 = rng.sample(StandardNormal);
            let n2: f64 = rng.sample(StandardNormal);
            let amp = spec.image_gain * z[vi];
            let mut img = view.template.clone();
            for (((x, sig), a), b) in img
                .as_mut_slice()
                .iter_mut()
                .zip(view.signal.as_slice())
                .zip(view.nuisance[0].as_slice())
                .zip(view.nuisance[1].as_slice())
            {
                *x = gain * *x + amp * sig + spec.nuisance * (n1 * a + n2 * b);
            }
            let mut img = warp_tensor(&img, &pose)?;
            let noise = Normal::new(0.0, spec.pixel_noise.max(0.0)).unwrap();
            if spec.pixel_noise > 0.0 {
                img.as_mut_slice().iter_mut().for_each(|x| *x += noise.sample(&mut rng));
            }
            let suffix = match view.modality {
                Modality::ShortAxis => "sa",
                Modality::FourChamber => "fc",
            };
            write_tensor(&tensor_dir.join(format!("{id}_{suffix}.tns")), &img)?;

            let misplaced = if poor { Some(rng.random_range(0..3)) } else { None };
            let mut points = [[0.0; 2]; 3];
            let mut unc = [0.0; 3];
            for (li, (p, (pt, u))) in template.get(view.modality).iter().zip(points.iter_mut().zip(unc.iter_mut())).enumerate() {
                let sigma = if misplaced == Some(li) { spec.poor_landmark_noise_px } else { spec.landmark_noise_px };
                let truth = pose.apply(*p);
                let er: f64 = rng.sample::<f64, _>(StandardNormal) * sigma;
                let ec: f64 = rng.sample::<f64, _>(StandardNormal) * sigma;
                let hi = (size - 1) as f64;
                *pt = [(truth[0] + er).clamp(0.0, hi), (truth[1] + ec).clamp(0.0, hi)];
                let err = ((pt[0] - truth[0]).powi(2) + (pt[1] - truth[1]).powi(2)).sqrt();
                *u = 0.7 * err + 0.3 * sigma;
            }
            landmarks.insert(LandmarkRecord {
                subject_id: id.clone(),
                modality: view.modality,
                points,
                uncertainties: unc,
            })?;
            poses.push(pose);
        }

        let la_volume = 70.0 + 12.0 * z[2] + 3.0 * rng.sample::<f64, _>(StandardNormal);
        let lv_mass = 130.0 + 8.0 * (0.5 * z[2] + rng.sample::<f64, _>(StandardNormal));
        let pawp = if label {
            truncated_normal(&mut rng, 21.7, 4.96, 15.1, 45.0)
        } else {
            truncated_normal(&mut rng, 10.3, 3.1, 2.0, 15.0)
        };
        let date = start + Days::new(rng.random_range(0..3650));
        manifest
            .write_record([
                id.clone(),
                date.to_string(),
                format!("{pawp:.1}"),
                u8::from(label).to_string(),
                format!("tensors/{id}_sa.tns"),
                format!("tensors/{id}_fc.tns"),
                format!("{lv_mass:.2}"),
                format!("{la_volume:.2}"),
            ])
            .map_err(merr)?;
        truths.push(SubjectTruth {
            subject_id: id,
            true_class: y,
            recorded_label: label,
            poor_quality: poor,
            z_short_axis: z[0],
            z_four_chamber: z[1],
            z_tabular: z[2],
            pose_short_axis: poses[0],
            pose_four_chamber: poses[1],
        });
    }
    manifest.flush().map_err(|e| Error::io(dir.join("manifest.csv"), e))?;
    landmarks.write_csv(&dir.join("landmarks.csv"))?;
    template.save(&dir.join("template.toml"))?;

    let mut modalities: Vec<ModalityTruth> = views
        .iter()
        .map(|v| ModalityTruth {
            modality: v.modality.as_str().to_string(),
            mu: v.mu,
            carries_signal: v.mu != 0.0,
            class_pattern: (v.mu != 0.0).then(|| class_pattern(v.modality)),
            nuisance_patterns: nuisance_patterns(v.modality).to_vec(),
            signal_columns: Vec::new(),
        })
        .collect();
    modalities.push(ModalityTruth {
        modality: "tabular".into(),
        mu: spec.signal.tabular,
        carries_signal: spec.signal.tabular != 0.0,
        class_pattern: None,
        nuisance_patterns: Vec::new(),
        signal_columns: if spec.signal.tabular != 0.0 {
            vec!["la_volume".into(), "lv_mass".into()]
        } else {
            Vec::new()
        },
    });
    let ground_truth = GroundTruth {
        spec: spec.clone(),
        modalities,
        subjects: truths,
    };
    let gt_path = dir.join("ground_truth.json");
    let json = serde_json::to_string_pretty(&ground_truth).map_err(|e| Error::data(&gt_path, e.to_string()))?;
    fs::write(&gt_path, json + "\n").map_err(|e| Error::io(&gt_path, e))?;

    let config = RunConfig {
        manifest: "manifest.csv".into(),
        landmarks: Some("landmarks.csv".into()),
        template: Some("template.toml".into()),
        output_dir: "run".into(),
        seed: spec.seed,
        resolutions: spec.resolutions.clone(),
        binning_resolution: spec.binning_resolution,
        ..RunConfig::default()
    };
    let config_path = dir.join("run.toml");
    config.save(&config_path)?;
    Ok(SynthOutput {
        dir: dir.to_path_buf(),
        manifest: dir.join("manifest.csv"),
        config: config_path,
        ground_truth,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_unreachable_resolution() {
        let mut spec = SynthSpec::preset(Preset::Easy, 10, 48, 4, 0);
        assert!(spec.validate().is_err());
        spec.size = 64;
        spec.resolutions = vec![64, 32];
        spec.validate().unwrap();
        spec.resolutions = vec![128];
        assert!(spec.validate().is_err());
    }

    #[test]
    fn preset_names() {
        for p in Preset::ALL {
            assert_eq!(p.as_str().parse::<Preset>().unwrap(), p);
        }
        assert!("hard".parse::<Preset>().is_err());
    }

    #[test]
    fn template_landmarks_not_collinear() {
        let t = template_landmarks(64);
        for m in Modality::ALL {
            let [a, b, c] = *t.get(m);
            let area = ((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1])).abs() / 2.0;
            assert!(area > 50.0);
        }
    }
}
