//! Nearest-template image classifier.

use super::{LogitVector, Oracle, OracleDescriptor, OracleError, OracleInput, OracleKind, Query};
use crate::render::Image;

/// `z_k = -min_t mse(query, template_{k,t})`.
#[derive(Debug, Clone)]
pub struct TemplateClassifier {
    desc: OracleDescriptor,
    banks: Vec<Vec<Image>>,
    size: (usize, usize),
}

impl TemplateClassifier {
    /// One bank of templates per class; every image must share one size.
    pub fn new(id: impl Into<String>, banks: Vec<Vec<Image>>) -> Result<Self, OracleError> {
        let id = id.into();
        if banks.len() < 2 {
            return Err(OracleError::TooFewClasses(banks.len()));
        }
        if let Some(k) = banks.iter().position(Vec::is_empty) {
            return Err(OracleError::EmptyTemplates(format!("{id}: class {k} has no templates")));
        }
        let first = &banks[0][0];
        let size = (first.width, first.height);
        for img in banks.iter().flatten() {
            if (img.width, img.height) != size {
                return Err(OracleError::ImageSize {
                    expected: size,
                    got: (img.width, img.height),
                });
            }
        }
        let counts: Vec<usize> = banks.iter().map(Vec::len).collect();
        Ok(Self {
            desc: OracleDescriptor {
                kind: OracleKind::SyntheticRenderClassifier,
                id,
                class_count: banks.len(),
                metadata: serde_json::json!({ "templates_per_class": counts, "resolution": [size.0, size.1] }),
            },
            banks,
            size,
        })
    }

    pub fn resolution(&self) -> (usize, usize) {
        self.size
    }

    pub fn classify(&self, img: &Image) -> Result<LogitVector, OracleError> {
        if (img.width, img.height) != self.size {
            return Err(OracleError::ImageSize {
                expected: self.size,
                got: (img.width, img.height),
            });
        }
        let z = self
            .banks
            .iter()
            .map(|bank| -bank.iter().map(|t| img.mse(t)).fold(f64::INFINITY, f64::min))
            .collect();
        LogitVector::new(z)
    }
}

impl Oracle for TemplateClassifier {
    fn descriptor(&self) -> &OracleDescriptor {
        &self.desc
    }

    fn input(&self) -> OracleInput {
        OracleInput::Image
    }

    fn query(&mut self, batch: &[Query<'_>]) -> Result<Vec<LogitVector>, OracleError> {
        batch
            .iter()
            .map(|q| {
                let img = q.image.ok_or_else(|| OracleError::MissingImage(self.desc.id.clone()))?;
                self.classify(img)
            })
            .collect()
    }
}
