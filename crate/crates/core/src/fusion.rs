//! Early (input-level) and late (latent-space) fusion, and the model roster.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::FeatureMatrix;
use crate::tensor::{Modality, Tensor3, TensorSample};

/// Per-feature z-score parameters learned on training rows.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub means: Vec<f64>,
    /// Population standard deviations; `0` marks a constant feature.
    pub stds: Vec<f64>,
}

impl Standardizer {
    pub fn fit(features: &FeatureMatrix) -> Result<Self> {
        if features.nrows() == 0 {
            return Err(Error::invalid("cannot fit a standardizer on zero rows"));
        }
        features.check_finite()?;
        let n = features.nrows() as f64;
        let d = features.ncols();
        let mut means = vec![0.0; d];
        for row in features.rows_iter() {
            means.iter_mut().zip(row).for_each(|(m, x)| *m += x);
        }
        means.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; d];
        for row in features.rows_iter() {
            for j in 0..d {
                var[j] += (row[j] - means[j]).powi(2);
            }
        }
        let stds = var
            .into_iter()
            .zip(&means)
            .map(|(v, m)| {
                let s = (v / n).sqrt();
                if s <= 1e-12 * m.abs().max(1.0) {
                    0.0
                } else {
                    s
                }
            })
            .collect();
        Ok(Standardizer { means, stds })
    }

    pub fn len(&self) -> usize {
        self.means.len()
    }

    pub fn is_empty(&self) -> bool {
        self.means.is_empty()
    }

    pub fn apply(&self, features: &FeatureMatrix) -> Result<FeatureMatrix> {
        if features.ncols() != self.len() {
            return Err(Error::shape(format!(
                "standardizer fitted on {} features, block has {}",
                self.len(),
                features.ncols()
            )));
        }
        let mut out = features.clone();
        for i in 0..out.nrows() {
            for (j, x) in out.row_mut(i).iter_mut().enumerate() {
                *x = if self.stds[j] == 0.0 {
                    0.0
                } else {
                    (*x - self.means[j]) / self.stds[j]
                };
            }
        }
        Ok(out)
    }
}

/// Stacks the two views along mode 1, short-axis rows first.
pub fn early_fuse(sa: &TensorSample, fc: &TensorSample) -> Result<Tensor3> {
    if sa.modality != Modality::ShortAxis || fc.modality != Modality::FourChamber {
        return Err(Error::invalid(format!(
            "early fusion expects (short_axis, four_chamber), got ({}, {})",
            sa.modality, fc.modality
        )));
    }
    stack_mode1(&sa.data, &fc.data)
}

pub fn stack_mode1(top: &Tensor3, bottom: &Tensor3) -> Result<Tensor3> {
    let [r1, c1, p1] = top.dims();
    let [r2, c2, p2] = bottom.dims();
    if c1 != c2 || p1 != p2 {
        return Err(Error::shape(format!(
            "cannot stack {r1}×{c1}×{p1} on {r2}×{c2}×{p2}"
        )));
    }
    let mut data = Vec::with_capacity(top.len() + bottom.len());
    for k in 0..p1 {
        data.extend_from_slice(top.phase(k));
        data.extend_from_slice(bottom.phase(k));
    }
    Tensor3::from_vec([r1 + r2, c1, p1], data)
}

/// Standardizes each block with its own parameters and concatenates them.
pub fn late_fuse(blocks: &[&FeatureMatrix], standardizers: &[Standardizer]) -> Result<FeatureMatrix> {
    if blocks.len() != standardizers.len() {
        return Err(Error::shape(format!(
            "{} blocks but {} standardizers",
            blocks.len(),
            standardizers.len()
        )));
    }
    if blocks.is_empty() {
        return Err(Error::invalid("late fusion needs at least one block"));
    }
    let scaled = blocks
        .iter()
        .zip(standardizers)
        .map(|(b, s)| s.apply(b))
        .collect::<Result<Vec<_>>>()?;
    FeatureMatrix::hstack(&scaled.iter().collect::<Vec<_>>())
}

/// Source of the tensor an MPCA block is learned on.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ImageSource {
    ShortAxis,
    FourChamber,
    /// Short-axis and four-chamber stacked along mode 1.
    Early,
}

impl ImageSource {
    pub fn as_str(self) -> &'static str {
        match self {
            ImageSource::ShortAxis => "sa",
            ImageSource::FourChamber => "fc",
            ImageSource::Early => "sa_fc_early",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Block {
    Image(ImageSource),
    Tabular,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    Unimodal,
    Early,
    Late,
    Hybrid,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputModality {
    ShortAxis,
    FourChamber,
    Tabular,
}

impl FromStr for InputModality {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "short_axis" | "sa" => Ok(InputModality::ShortAxis),
            "four_chamber" | "fc" => Ok(InputModality::FourChamber),
            "tabular" | "ehr" => Ok(InputModality::Tabular),
            other => Err(Error::Config(format!("unknown modality `{other}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelFamily {
    Ehr,
    Sa,
    Fc,
    SaFcEarly,
    SaFcLate,
    SaEhr,
    FcEhr,
    Hybrid,
    TriLate,
}

impl ModelFamily {
    pub const STANDARD: [ModelFamily; 8] = [
        ModelFamily::Ehr,
        ModelFamily::Sa,
        ModelFamily::Fc,
        ModelFamily::SaFcEarly,
        ModelFamily::SaFcLate,
        ModelFamily::SaEhr,
        ModelFamily::FcEhr,
        ModelFamily::Hybrid,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ModelFamily::Ehr => "ehr",
            ModelFamily::Sa => "sa",
            ModelFamily::Fc => "fc",
            ModelFamily::SaFcEarly => "sa_fc_early",
            ModelFamily::SaFcLate => "sa_fc_late",
            ModelFamily::SaEhr => "sa_ehr_late",
            ModelFamily::FcEhr => "fc_ehr_late",
            ModelFamily::Hybrid => "tri_modal_hybrid",
            ModelFamily::TriLate => "tri_modal_late",
        }
    }

    pub fn strategy(self) -> Strategy {
        match self {
            ModelFamily::Ehr | ModelFamily::Sa | ModelFamily::Fc => Strategy::Unimodal,
            ModelFamily::SaFcEarly => Strategy::Early,
            ModelFamily::SaFcLate | ModelFamily::SaEhr | ModelFamily::FcEhr | ModelFamily::TriLate => {
                Strategy::Late
            }
            ModelFamily::Hybrid => Strategy::Hybrid,
        }
    }

    /// Feature blocks in fusion order.
    pub fn blocks(self) -> Vec<Block> {
        use Block::*;
        use ImageSource::*;
        match self {
            ModelFamily::Ehr => vec![Tabular],
            ModelFamily::Sa => vec![Image(ShortAxis)],
            ModelFamily::Fc => vec![Image(FourChamber)],
            ModelFamily::SaFcEarly => vec![Image(Early)],
            ModelFamily::SaFcLate => vec![Image(ShortAxis), Image(FourChamber)],
            ModelFamily::SaEhr => vec![Image(ShortAxis), Tabular],
            ModelFamily::FcEhr => vec![Image(FourChamber), Tabular],
            ModelFamily::Hybrid => vec![Image(Early), Tabular],
            ModelFamily::TriLate => vec![Image(ShortAxis), Image(FourChamber), Tabular],
        }
    }

    pub fn modalities(self) -> BTreeSet<InputModality> {
        self.blocks()
            .into_iter()
            .flat_map(|b| match b {
                Block::Tabular => vec![InputModality::Tabular],
                Block::Image(ImageSource::ShortAxis) => vec![InputModality::ShortAxis],
                Block::Image(ImageSource::FourChamber) => vec![InputModality::FourChamber],
                Block::Image(ImageSource::Early) => {
                    vec![InputModality::ShortAxis, InputModality::FourChamber]
                }
            })
            .collect()
    }

    pub fn uses_images(self) -> bool {
        self.blocks().iter().any(|b| matches!(b, Block::Image(_)))
    }
}

impl fmt::Display for ModelFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ModelFamily::STANDARD
            .iter()
            .chain(&[ModelFamily::TriLate])
            .find(|m| m.as_str() == s)
            .copied()
            .ok_or_else(|| Error::Config(format!("unknown model family `{s}`")))
    }
}

/// One roster entry: a family at one image resolution. Tabular-only
/// models carry the resolution of the run they belong to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct FusionSpec {
    pub family: ModelFamily,
    pub resolution: usize,
}

impl FusionSpec {
    pub fn strategy(&self) -> Strategy {
        self.family.strategy()
    }

    pub fn label(&self) -> String {
        format!("{}@{}", self.family, self.resolution)
    }
}

/// Every family whose modalities are all available, at each resolution.
pub fn build_model_roster(
    modalities: &[String],
    resolutions: &[usize],
    tri_modal_late: bool,
) -> Result<Vec<FusionSpec>> {
    let available = modalities
        .iter()
        .map(|m| m.parse::<InputModality>())
        .collect::<Result<BTreeSet<_>>>()?;
    let mut families: Vec<ModelFamily> = ModelFamily::STANDARD.to_vec();
    if tri_modal_late {
        families.push(ModelFamily::TriLate);
    }
    let mut out = Vec::new();
    for &resolution in resolutions {
        for &family in &families {
            if family.modalities().is_subset(&available) {
                out.push(FusionSpec { family, resolution });
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sample(modality: Modality, dims: [usize; 3], seed: f64) -> TensorSample {
        TensorSample {
            modality,
            data: Tensor3::from_fn(dims, |i, j, k| (i * 31 + j * 7 + k) as f64 * seed),
        }
    }

    fn all() -> Vec<String> {
        vec!["short_axis".into(), "four_chamber".into(), "tabular".into()]
    }

    #[test]
    fn early_fusion_blocks() {
        let sa = sample(Modality::ShortAxis, [64, 64, 20], 0.5);
        let fc = TensorSample {
            modality: Modality::FourChamber,
            data: Tensor3::zeros([64, 64, 20]),
        };
        let fused = early_fuse(&sa, &fc).unwrap();
        assert_eq!(fused.dims(), [128, 64, 20]);
        assert_eq!(fused.row_slice(0, 64).unwrap(), sa.data);
        assert!(fused.row_slice(64, 128).unwrap().as_slice().iter().all(|&x| x == 0.0));
        let other = sample(Modality::FourChamber, [64, 32, 20], 1.0);
        assert!(matches!(early_fuse(&sa, &other), Err(Error::Shape(_))));
        assert!(early_fuse(&fc, &sa).is_err());
    }

    #[test]
    fn late_fusion_lengths() {
        let img = FeatureMatrix::from_rows(&[vec![1.0; 210], vec![2.0; 210], vec![4.0; 210]]).unwrap();
        let tab = FeatureMatrix::from_rows(&[vec![1.0, 5.0], vec![2.0, 5.0], vec![3.0, 5.0]]).unwrap();
        let s = [Standardizer::fit(&img).unwrap(), Standardizer::fit(&tab).unwrap()];
        let fused = late_fuse(&[&img, &tab], &s).unwrap();
        assert_eq!(fused.ncols(), 212);
        assert!((0..3).all(|i| fused.get(i, 211) == 0.0));
        let single = late_fuse(&[&tab], &s[1..]).unwrap();
        assert_eq!(single.ncols(), 2);
        assert!(late_fuse(&[&tab], &s[..1]).is_err());
    }

    #[test]
    fn roster_contents() {
        let full = build_model_roster(&all(), &[64], false).unwrap();
        assert_eq!(full.len(), 8);
        let fc = build_model_roster(&["four_chamber".into()], &[64], false).unwrap();
        assert_eq!(fc, vec![FusionSpec { family: ModelFamily::Fc, resolution: 64 }]);
        let two = build_model_roster(&all(), &[64, 128], false).unwrap();
        assert_eq!(two.len(), 16);
        for f in ModelFamily::STANDARD {
            assert_eq!(two.iter().filter(|s| s.family == f).count(), 2);
        }
        assert_eq!(build_model_roster(&all(), &[64], true).unwrap().len(), 9);
        assert!(matches!(
            build_model_roster(&["ct".into()], &[64], false),
            Err(Error::Config(_))
        ));
        assert!(ModelFamily::SaFcEarly.modalities().iter().all(|m| *m != InputModality::Tabular));
        assert_eq!(ModelFamily::Hybrid.blocks(), vec![Block::Image(ImageSource::Early), Block::Tabular]);
        for f in ModelFamily::STANDARD {
            assert_eq!(f.as_str().parse::<ModelFamily>().unwrap(), f);
        }
    }

    proptest! {
        #[test]
        fn standardized_training_moments(rows in prop::collection::vec(prop::collection::vec(-50.0f64..50.0, 4), 3..40)) {
            let x = FeatureMatrix::from_rows(&rows).unwrap();
            let s = Standardizer::fit(&x).unwrap();
            let z = s.apply(&x).unwrap();
            let n = z.nrows() as f64;
            for j in 0..4 {
                let col: Vec<f64> = (0..z.nrows()).map(|i| z.get(i, j)).collect();
                let mean = col.iter().sum::<f64>() / n;
                let sd = (col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
                prop_assert!(mean.abs() < 1e-9);
                if s.stds[j] > 0.0 {
                    prop_assert!((sd - 1.0).abs() < 1e-9);
                }
            }
        }

        #[test]
        fn late_fusion_permutes_blocks(rows in prop::collection::vec(prop::collection::vec(-5.0f64..5.0, 5), 3..20)) {
            let x = FeatureMatrix::from_rows(&rows).unwrap();
            let a = x.select_columns(&[0, 1, 2]);
            let b = x.select_columns(&[3, 4]);
            let sa = Standardizer::fit(&a).unwrap();
            let sb = Standardizer::fit(&b).unwrap();
            let ab = late_fuse(&[&a, &b], &[sa.clone(), sb.clone()]).unwrap();
            let ba = late_fuse(&[&b, &a], &[sb.clone(), sa.clone()]).unwrap();
            prop_assert_eq!(ab.select_columns(&[3, 4, 0, 1, 2]), ba);
            prop_assert_eq!(ab.select_columns(&[0, 1, 2]), sa.apply(&a).unwrap());
        }

        #[test]
        fn early_fusion_recovers_inputs(r1 in 1usize..6, r2 in 1usize..6, c in 1usize..5, p in 1usize..4) {
            let sa = sample(Modality::ShortAxis, [r1, c, p], 1.0);
            let fc = sample(Modality::FourChamber, [r2, c, p], -2.0);
            let fused = early_fuse(&sa, &fc).unwrap();
            prop_assert_eq!(fused.row_slice(0, r1).unwrap(), sa.data);
            prop_assert_eq!(fused.row_slice(r1, r1 + r2).unwrap(), fc.data);
        }
    }
}
