use super::{AnnotationData, EmbeddingDataset};
use crate::error::{Error, Result};
use crate::model::Sample;
use crate::numerics::{Mat, Real};
use crate::objectives::Annotation;

/// In-memory training or evaluation set.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset<T = f64> {
    pub samples: Vec<Mat<T>>,
    pub labels: Vec<usize>,
    pub annotations: Option<Vec<Annotation<T>>>,
    pub classes: usize,
}

impl<T: Real> Dataset<T> {
    /// Converts loaded files; the annotation file must describe the same
    /// samples and patch count.
    pub fn from_files(emb: &EmbeddingDataset, ann: Option<&AnnotationData>) -> Result<Self> {
        let samples = (0..emb.samples)
            .map(|i| {
                let vals = emb.sample_values(i).iter().map(|&v| T::lit(v as f64)).collect();
                Mat::from_vec(emb.patches, emb.dim, vals)
            })
            .collect::<Result<Vec<_>>>()?;
        let annotations = match ann {
            None => None,
            Some(a) => {
                if a.samples != emb.samples || a.patches != emb.patches {
                    return Err(Error::Config(format!(
                        "annotations cover M={} L={} but embeddings have M={} L={}",
                        a.samples, a.patches, emb.samples, emb.patches
                    )));
                }
                Some(
                    (0..a.samples)
                        .map(|i| {
                            let (g, s) = a.sample_bytes(i);
                            Annotation::from_bytes(g, s, a.patches, a.k_spatial)
                        })
                        .collect::<Result<Vec<_>>>()?,
                )
            }
        };
        Ok(Dataset {
            samples,
            labels: emb.labels.iter().map(|&y| y as usize).collect(),
            annotations,
            classes: emb.classes,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn sample(&self, i: usize) -> Sample<'_, T> {
        Sample {
            z: &self.samples[i],
            label: self.labels[i],
            annotation: self.annotations.as_ref().map(|a| &a[i]),
        }
    }

    /// Samples at `idx`, in that order.
    pub fn subset(&self, idx: &[usize]) -> Dataset<T> {
        Dataset {
            samples: idx.iter().map(|&i| self.samples[i].clone()).collect(),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
            annotations: self
                .annotations
                .as_ref()
                .map(|a| idx.iter().map(|&i| a[i].clone()).collect()),
            classes: self.classes,
        }
    }

    /// Indices of the samples labelled `class`.
    pub fn class_indices(&self, class: usize) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.labels[i] == class).collect()
    }

    pub fn cast<U: Real>(&self) -> Dataset<U> {
        Dataset {
            samples: self.samples.iter().map(Mat::cast).collect(),
            labels: self.labels.clone(),
            annotations: self.annotations.as_ref().map(|a| {
                a.iter()
                    .map(|x| Annotation {
                        global: x.global.iter().map(|&v| U::lit(v.as_f64())).collect(),
                        spatial: x.spatial.cast(),
                    })
                    .collect()
            }),
            classes: self.classes,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn converts_files_and_checks_pairing() {
        let emb = EmbeddingDataset::new(2, 2, 3, 2, (0..12).map(|i| i as f32).collect(), vec![1, 0]).unwrap();
        let ann = AnnotationData::new(2, 2, 1, 1, vec![1, 0, 1, 0, 1, 0]).unwrap();
        let ds = Dataset::<f64>::from_files(&emb, Some(&ann)).unwrap();
        assert_eq!(ds.samples[1].row(0), &[6.0, 7.0, 8.0]);
        let a = ds.sample(0).annotation.unwrap();
        assert_eq!(a.global, vec![1.0]);
        assert_eq!(a.spatial.data(), &[0.0, 1.0]);
        assert_eq!(ds.class_indices(0), vec![1]);
        let sub = ds.subset(&[1]);
        assert_eq!(sub.labels, vec![0]);

        let wrong = AnnotationData::new(1, 2, 1, 1, vec![1, 0, 1]).unwrap();
        assert!(Dataset::<f64>::from_files(&emb, Some(&wrong)).is_err());
    }
}
