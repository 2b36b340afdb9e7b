//! Landmark-driven in-plane affine registration.
//!
//! Points are `(row, col)` pixel coordinates with pixel centres on integers.
//! One transform per subject and view is estimated from three landmark
//! correspondences and applied identically to every temporal phase.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::{Modality, Tensor3, TensorSample};

pub type Point = [f64; 2];

/// Triangles with a smaller area (px²) are treated as collinear.
pub const COLLINEAR_AREA_TOL: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq)]
pub struct LandmarkRecord {
    pub subject_id: String,
    pub modality: Modality,
    pub points: [Point; 3],
    pub uncertainties: [f64; 3],
}

impl LandmarkRecord {
    pub fn validate(&self, image_size: Option<(usize, usize)>) -> Result<()> {
        if let Some(u) = self.uncertainties.iter().find(|u| !u.is_finite() || **u < 0.0) {
            return Err(Error::invalid(format!(
                "subject `{}` {}: uncertainty {u} must be finite and >= 0",
                self.subject_id, self.modality
            )));
        }
        for p in &self.points {
            if !p[0].is_finite() || !p[1].is_finite() {
                return Err(Error::invalid(format!(
                    "subject `{}` {}: non-finite landmark",
                    self.subject_id, self.modality
                )));
            }
            if let Some((rows, cols)) = image_size {
                let inside = p[0] >= 0.0
                    && p[1] >= 0.0
                    && p[0] <= (rows - 1) as f64
                    && p[1] <= (cols - 1) as f64;
                if !inside {
                    return Err(Error::invalid(format!(
                        "subject `{}` {}: landmark ({}, {}) outside {rows}x{cols} image",
                        self.subject_id, self.modality, p[0], p[1]
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Landmark records keyed by subject and view.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct LandmarkSet {
    records: BTreeMap<(String, Modality), LandmarkRecord>,
}

impl LandmarkSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, rec: LandmarkRecord) -> Result<()> {
        let key = (rec.subject_id.clone(), rec.modality);
        if self.records.contains_key(&key) {
            return Err(Error::invalid(format!(
                "duplicate landmark record for subject `{}` {}",
                key.0, key.1
            )));
        }
        self.records.insert(key, rec);
        Ok(())
    }

    pub fn get(&self, subject_id: &str, modality: Modality) -> Option<&LandmarkRecord> {
        self.records.get(&(subject_id.to_string(), modality))
    }

    pub fn iter(&self) -> impl Iterator<Item = &LandmarkRecord> {
        self.records.values()
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Reads `subject_id,modality,x1,y1,u1,x2,y2,u2,x3,y3,u3` where `x` is
    /// the column and `y` the row coordinate. All row errors are collected.
    pub fn read_csv(path: &Path) -> Result<LandmarkSet> {
        let mut rdr = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_path(path)
            .map_err(|e| Error::data(path, e.to_string()))?;
        let headers = rdr.headers().map_err(|e| Error::data(path, e.to_string()))?.clone();
        let expected = [
            "subject_id", "modality", "x1", "y1", "u1", "x2", "y2", "u2", "x3", "y3", "u3",
        ];
        if headers.iter().collect::<Vec<_>>() != expected {
            return Err(Error::data(
                path,
                format!("landmark header must be `{}`", expected.join(",")),
            ));
        }
        let mut set = LandmarkSet::new();
        let mut errors = Vec::new();
        for (line, row) in rdr.deserialize::<LandmarkRow>().enumerate() {
            let parsed = row
                .map_err(|e| e.to_string())
                .and_then(|r| r.into_record().map_err(|e| e.to_string()))
                .and_then(|rec| {
                    rec.validate(None).map_err(|e| e.to_string())?;
                    set.insert(rec).map_err(|e| e.to_string())
                });
            if let Err(msg) = parsed {
                errors.push(format!("{}:{}: {msg}", path.display(), line + 2));
            }
        }
        if !errors.is_empty() {
            return Err(Error::DataErrors {
                count: errors.len(),
                messages: errors,
            });
        }
        Ok(set)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(|e| Error::data(path, e.to_string()))?;
        for rec in self.records.values() {
            w.serialize(LandmarkRow::from_record(rec))
                .map_err(|e| Error::data(path, e.to_string()))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct LandmarkRow {
    subject_id: String,
    modality: String,
    x1: f64,
    y1: f64,
    u1: f64,
    x2: f64,
    y2: f64,
    u2: f64,
    x3: f64,
    y3: f64,
    u3: f64,
}

impl LandmarkRow {
    fn into_record(self) -> Result<LandmarkRecord> {
        Ok(LandmarkRecord {
            modality: self.modality.parse()?,
            subject_id: self.subject_id,
            points: [[self.y1, self.x1], [self.y2, self.x2], [self.y3, self.x3]],
            uncertainties: [self.u1, self.u2, self.u3],
        })
    }

    fn from_record(r: &LandmarkRecord) -> Self {
        let [p1, p2, p3] = r.points;
        let [u1, u2, u3] = r.uncertainties;
        LandmarkRow {
            subject_id: r.subject_id.clone(),
            modality: r.modality.as_str().to_string(),
            x1: p1[1],
            y1: p1[0],
            u1,
            x2: p2[1],
            y2: p2[0],
            u2,
            x3: p3[1],
            y3: p3[0],
            u3,
        }
    }
}

/// Template-space landmark positions per view, stored as TOML:
///
/// ```toml
/// [short_axis]
/// points = [[20.0, 24.0], [44.0, 24.0], [32.0, 44.0]]
/// ```
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TemplateLandmarks {
    pub short_axis: TemplatePoints,
    pub four_chamber: TemplatePoints,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TemplatePoints {
    pub points: [Point; 3],
}

impl TemplateLandmarks {
    pub fn get(&self, modality: Modality) -> &[Point; 3] {
        match modality {
            Modality::ShortAxis => &self.short_axis.points,
            Modality::FourChamber => &self.four_chamber.points,
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        toml::from_str(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = toml::to_string(self).map_err(|e| Error::Config(e.to_string()))?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }
}

/// `p ↦ A·p + t` on `(row, col)` coordinates.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AffineTransform2D {
    pub linear: [[f64; 2]; 2],
    pub translation: [f64; 2],
}

impl AffineTransform2D {
    pub fn identity() -> Self {
        AffineTransform2D {
            linear: [[1.0, 0.0], [0.0, 1.0]],
            translation: [0.0, 0.0],
        }
    }

    pub fn translation(dr: f64, dc: f64) -> Self {
        AffineTransform2D {
            translation: [dr, dc],
            ..Self::identity()
        }
    }

    pub fn apply(&self, p: Point) -> Point {
        let a = &self.linear;
        [
            a[0][0] * p[0] + a[0][1] * p[1] + self.translation[0],
            a[1][0] * p[0] + a[1][1] * p[1] + self.translation[1],
        ]
    }

    pub fn det(&self) -> f64 {
        let a = &self.linear;
        a[0][0] * a[1][1] - a[0][1] * a[1][0]
    }

    pub fn validate(&self) -> Result<()> {
        let finite = self.linear.iter().flatten().chain(&self.translation).all(|v| v.is_finite());
        if !finite || self.det().abs() < 1e-12 {
            return Err(Error::invalid(format!("affine transform is not invertible: {self:?}")));
        }
        Ok(())
    }

    pub fn inverse(&self) -> Result<Self> {
        self.validate()?;
        let a = &self.linear;
        let d = self.det();
        let inv = [[a[1][1] / d, -a[0][1] / d], [-a[1][0] / d, a[0][0] / d]];
        let t = self.translation;
        Ok(AffineTransform2D {
            linear: inv,
            translation: [
                -(inv[0][0] * t[0] + inv[0][1] * t[1]),
                -(inv[1][0] * t[0] + inv[1][1] * t[1]),
            ],
        })
    }

    /// `self ∘ other`, i.e. `other` applied first.
    pub fn compose(&self, other: &AffineTransform2D) -> Self {
        let (a, b) = (&self.linear, &other.linear);
        let mut linear = [[0.0; 2]; 2];
        for (r, row) in linear.iter_mut().enumerate() {
            for (c, v) in row.iter_mut().enumerate() {
                *v = a[r][0] * b[0][c] + a[r][1] * b[1][c];
            }
        }
        let t = self.apply(other.translation);
        AffineTransform2D {
            linear,
            translation: t,
        }
    }
}

fn triangle_area(p: &[Point; 3]) -> f64 {
    let (a, b) = (
        [p[1][0] - p[0][0], p[1][1] - p[0][1]],
        [p[2][0] - p[0][0], p[2][1] - p[0][1]],
    );
    0.5 * (a[0] * b[1] - a[1] * b[0]).abs()
}

/// Exact affine fit mapping each `src` point onto the matching `dst` point.
pub fn estimate_affine(src: &[Point; 3], dst: &[Point; 3]) -> Result<AffineTransform2D> {
    let area = triangle_area(src);
    if !(area >= COLLINEAR_AREA_TOL) {
        return Err(Error::CollinearLandmarks {
            subject_id: String::new(),
            area,
        });
    }
    let s = Matrix3::from_fn(|r, c| if c < 2 { src[r][c] } else { 1.0 });
    let lu = s.lu();
    let mut out = AffineTransform2D::identity();
    for d in 0..2 {
        let b = Vector3::new(dst[0][d], dst[1][d], dst[2][d]);
        let x = lu
            .solve(&b)
            .ok_or_else(|| Error::Numerical("singular landmark system".into()))?;
        out.linear[d] = [x[0], x[1]];
        out.translation[d] = x[2];
    }
    Ok(out)
}

const SNAP_TOL: f64 = 1e-9;

#[inline]
fn snap(v: f64) -> f64 {
    let r = v.round();
    if (v - r).abs() < SNAP_TOL {
        r
    } else {
        v
    }
}

/// Resamples `t` so that content at source position `p` lands at `xf(p)`.
/// Bilinear interpolation; reads outside the source are zero.
pub fn warp_tensor(t: &Tensor3, xf: &AffineTransform2D) -> Result<Tensor3> {
    let inv = xf.inverse()?;
    let [rows, cols, phases] = t.dims();
    // Per output pixel: up to four (source offset, weight) taps.
    let mut taps: Vec<(usize, [(usize, f64); 4], u8)> = Vec::with_capacity(rows * cols);
    for i in 0..rows {
        for j in 0..cols {
            let src = inv.apply([i as f64, j as f64]);
            let (r, c) = (snap(src[0]), snap(src[1]));
            let (r0, c0) = (r.floor(), c.floor());
            let (fr, fc) = (r - r0, c - c0);
            let mut entry = [(0usize, 0.0f64); 4];
            let mut n = 0u8;
            for (dr, wr) in [(0.0, 1.0 - fr), (1.0, fr)] {
                for (dc, wc) in [(0.0, 1.0 - fc), (1.0, fc)] {
                    let w = wr * wc;
                    let (rr, cc) = (r0 + dr, c0 + dc);
                    if w == 0.0 || rr < 0.0 || cc < 0.0 || rr >= rows as f64 || cc >= cols as f64 {
                        continue;
                    }
                    entry[n as usize] = (rr as usize * cols + cc as usize, w);
                    n += 1;
                }
            }
            if n > 0 {
                taps.push((i * cols + j, entry, n));
            }
        }
    }
    let mut out = Tensor3::zeros(t.dims());
    for k in 0..phases {
        let src = t.phase(k);
        let dst = out.phase_mut(k);
        for (o, entry, n) in &taps {
            dst[*o] = entry[..*n as usize].iter().map(|&(s, w)| w * src[s]).sum();
        }
    }
    Ok(out)
}

pub fn warp_sample(sample: &TensorSample, xf: &AffineTransform2D) -> Result<TensorSample> {
    Ok(TensorSample {
        modality: sample.modality,
        data: warp_tensor(&sample.data, xf)?,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct SubjectImage {
    pub subject_id: String,
    pub sample: TensorSample,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Exclusion {
    pub subject_id: String,
    pub modality: Modality,
    pub reason: String,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct RegistrationOutcome {
    pub registered: Vec<SubjectImage>,
    pub transforms: Vec<AffineTransform2D>,
    pub exclusions: Vec<Exclusion>,
}

pub fn register_image(
    image: &SubjectImage,
    landmarks: &LandmarkSet,
    template: &TemplateLandmarks,
) -> Result<(SubjectImage, AffineTransform2D)> {
    let modality = image.sample.modality;
    let rec = landmarks.get(&image.subject_id, modality).ok_or_else(|| {
        Error::invalid(format!(
            "no {modality} landmark record for subject `{}`",
            image.subject_id
        ))
    })?;
    let [rows, cols, _] = image.sample.data.dims();
    rec.validate(Some((rows, cols)))?;
    let xf = estimate_affine(&rec.points, template.get(modality)).map_err(|e| match e {
        Error::CollinearLandmarks { area, .. } => Error::CollinearLandmarks {
            subject_id: image.subject_id.clone(),
            area,
        },
        other => other,
    })?;
    let sample = warp_sample(&image.sample, &xf)?;
    Ok((
        SubjectImage {
            subject_id: image.subject_id.clone(),
            sample,
        },
        xf,
    ))
}

/// Registers every image onto the template; failures are reported, not fatal.
pub fn register_dataset(
    images: &[SubjectImage],
    landmarks: &LandmarkSet,
    template: &TemplateLandmarks,
) -> RegistrationOutcome {
    let mut out = RegistrationOutcome::default();
    for image in images {
        match register_image(image, landmarks, template) {
            Ok((reg, xf)) => {
                out.registered.push(reg);
                out.transforms.push(xf);
            }
            Err(e) => {
                log::warn!("excluding subject `{}`: {e}", image.subject_id);
                out.exclusions.push(Exclusion {
                    subject_id: image.subject_id.clone(),
                    modality: image.sample.modality,
                    reason: e.to_string(),
                });
            }
        }
    }
    out
}
