//! JSON mixture files: `{"dim": d, "components": [{"w": .., "mean": [..], "var": [..]}]}`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{FiniteMixture, GaussianComponent};
use crate::error::{Result, SgmError};
use crate::scalar::Scalar;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MixtureFile {
    pub dim: usize,
    pub components: Vec<GaussianComponent<f64>>,
}

impl MixtureFile {
    pub fn from_mixture<T: Scalar>(m: &FiniteMixture<T>) -> Self {
        Self {
            dim: m.dim(),
            components: m
                .components()
                .iter()
                .map(|c| GaussianComponent {
                    weight: c.weight().as_f64(),
                    mean: c.mean().iter().map(|v| v.as_f64()).collect(),
                    var_diag: c.var_diag().iter().map(|v| v.as_f64()).collect(),
                })
                .collect(),
        }
    }

    pub fn into_mixture<T: Scalar>(self) -> Result<FiniteMixture<T>> {
        let comps = self
            .components
            .into_iter()
            .map(|c| {
                GaussianComponent::new(
                    T::of(c.weight),
                    c.mean.into_iter().map(T::of).collect(),
                    c.var_diag.into_iter().map(T::of).collect(),
                )
            })
            .collect::<Result<Vec<_>>>()?;
        let m = FiniteMixture::new(comps)?;
        if m.dim() != self.dim {
            return Err(SgmError::Format(format!("declared dim {} but components have dim {}", self.dim, m.dim())));
        }
        Ok(m)
    }
}

pub fn write_mixture<T: Scalar>(m: &FiniteMixture<T>, path: impl AsRef<Path>) -> Result<()> {
    let text = serde_json::to_string_pretty(&MixtureFile::from_mixture(m))?;
    std::fs::write(path, text + "\n")?;
    Ok(())
}

pub fn read_mixture<T: Scalar>(path: impl AsRef<Path>) -> Result<FiniteMixture<T>> {
    let text = std::fs::read_to_string(path)?;
    let file: MixtureFile = serde_json::from_str(&text)?;
    file.into_mixture()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn round_trip_is_bit_exact(
            w in 1e-3f64..1e3,
            m in proptest::collection::vec(-1e6f64..1e6, 3),
            v in proptest::collection::vec(1e-6f64..1e3, 3),
        ) {
            let mix = FiniteMixture::single(GaussianComponent::new(w, m, v).unwrap()).unwrap();
            let text = serde_json::to_string(&MixtureFile::from_mixture(&mix)).unwrap();
            let back: FiniteMixture<f64> = serde_json::from_str::<MixtureFile>(&text).unwrap().into_mixture().unwrap();
            prop_assert_eq!(back, mix);
        }
    }

    #[test]
    fn parses_seventeen_digit_literals() {
        let text = r#"{"dim":1,"components":[{"w":0.10000000000000001,"mean":[0.33333333333333331],"var":[1.0000000000000002]}]}"#;
        let m: FiniteMixture<f64> = serde_json::from_str::<MixtureFile>(text).unwrap().into_mixture().unwrap();
        assert_eq!(m.components()[0].weight(), 0.1);
        assert_eq!(m.components()[0].mean()[0], 1.0 / 3.0);
        assert_eq!(m.components()[0].var_diag()[0], 1.0 + f64::EPSILON);
    }

    #[test]
    fn rejects_dim_disagreement() {
        let text = r#"{"dim":2,"components":[{"w":1.0,"mean":[0.0],"var":[1.0]}]}"#;
        assert!(serde_json::from_str::<MixtureFile>(text).unwrap().into_mixture::<f64>().is_err());
    }
}
