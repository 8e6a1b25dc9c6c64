//! Linear optimal transport (LOT) embedding.
//!
//! Every measure is represented by the barycentric transport map from a fixed
//! reference measure. The LOT distance between two measures is the
//! `L^2(reference)` distance between their maps, a linearization of `W_2` that
//! reduces all pairwise comparisons to Euclidean distances in `R^{m_ref * k}`.

use std::fs;
use std::path::Path;

use rayon::prelude::*;
use thiserror::Error;

use crate::measures::{EmpiricalMeasure, LabeledDataset};
use crate::transport::{self, TransportError, TransportMap};

#[derive(Debug, Error)]
pub enum LotError {
    #[error(transparent)]
    Transport(#[from] TransportError),
    #[error("index {index} out of range for an embedding of {len} measures")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, LotError>;

#[derive(Debug, Clone, PartialEq)]
pub struct LotEmbedding {
    reference: EmpiricalMeasure,
    maps: Vec<TransportMap>,
    reference_index: Option<usize>,
}

fn identity_map(reference: &EmpiricalMeasure) -> TransportMap {
    TransportMap::new(reference.coords().to_vec(), reference.dim())
}

/// Embeds every measure of `dataset` by its barycentric transport map from `reference`.
///
/// Measures equal to the reference (same atoms in the same order) receive the
/// identity map; the first such index is recorded as the reference index.
pub fn lot_embed(reference: &EmpiricalMeasure, dataset: &LabeledDataset) -> Result<LotEmbedding> {
    let maps = dataset
        .measures()
        .par_iter()
        .map(|mu| {
            if mu == reference {
                return Ok(identity_map(reference));
            }
            let (_, plan) = transport::w2_exact(reference, mu)?;
            transport::barycentric_map(&plan, mu)
        })
        .collect::<std::result::Result<Vec<_>, TransportError>>()?;
    let reference_index = dataset.measures().iter().position(|mu| mu == reference);
    Ok(LotEmbedding {
        reference: reference.clone(),
        maps,
        reference_index,
    })
}

/// Embeds with the dataset's own measure `index` as the reference.
pub fn lot_embed_with_reference_index(dataset: &LabeledDataset, index: usize) -> Result<LotEmbedding> {
    if index >= dataset.len() {
        return Err(LotError::IndexOutOfRange {
            index,
            len: dataset.len(),
        });
    }
    lot_embed(dataset.measure(index), dataset)
}

impl LotEmbedding {
    pub fn len(&self) -> usize {
        self.maps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.maps.is_empty()
    }

    pub fn reference(&self) -> &EmpiricalMeasure {
        &self.reference
    }

    pub fn reference_index(&self) -> Option<usize> {
        self.reference_index
    }

    pub fn maps(&self) -> &[TransportMap] {
        &self.maps
    }

    pub fn map(&self, i: usize) -> Result<&TransportMap> {
        self.maps.get(i).ok_or(LotError::IndexOutOfRange {
            index: i,
            len: self.maps.len(),
        })
    }

    /// `sqrt((1/m_ref) sum_r |T_i(x_r) - T_j(x_r)|^2)`.
    pub fn distance(&self, i: usize, j: usize) -> Result<f64> {
        let a = self.map(i)?.as_flat();
        let b = self.map(j)?.as_flat();
        let m_ref = self.reference.len() as f64;
        Ok((transport::squared_distance(a, b) / m_ref).sqrt())
    }

    /// Row `i` is map `i` flattened and scaled by `1/sqrt(m_ref)`, so Euclidean
    /// distances between rows are LOT distances.
    pub fn feature_matrix(&self) -> Vec<Vec<f64>> {
        let scale = 1.0 / (self.reference.len() as f64).sqrt();
        self.maps
            .iter()
            .map(|t| t.as_flat().iter().map(|x| x * scale).collect())
            .collect()
    }

    /// Binary export: magic `OTLE`, `u32 n`, `u32 m_ref`, `u32 k`, then the
    /// unscaled map images as row-major little-endian f64.
    pub fn export(&self, path: impl AsRef<Path>) -> Result<()> {
        let (n, m, k) = (self.len(), self.reference.len(), self.reference.dim());
        let mut out = Vec::with_capacity(16 + 8 * n * m * k);
        out.extend_from_slice(b"OTLE");
        for v in [n, m, k] {
            out.extend_from_slice(&(v as u32).to_le_bytes());
        }
        for t in &self.maps {
            for x in t.as_flat() {
                out.extend_from_slice(&x.to_le_bytes());
            }
        }
        fs::write(path, out)?;
        Ok(())
    }
}

/// LOT distance between embedded measures `i` and `j`.
pub fn lot_distance(emb: &LotEmbedding, i: usize, j: usize) -> Result<f64> {
    emb.distance(i, j)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measures::sample_translation_family;

    fn base() -> EmpiricalMeasure {
        EmpiricalMeasure::from_points(&[[0.0, 0.0], [1.0, 0.5], [-0.5, 2.0], [0.25, -1.0]]).unwrap()
    }

    #[test]
    fn reference_maps_to_itself() {
        let b = base();
        let data = LabeledDataset::unlabeled(vec![b.clone()]).unwrap();
        let emb = lot_embed(&b, &data).unwrap();
        assert_eq!(emb.len(), 1);
        assert_eq!(emb.reference_index(), Some(0));
        assert_eq!(emb.maps()[0].as_flat(), b.coords());
        assert_eq!(lot_distance(&emb, 0, 0).unwrap(), 0.0);
    }

    #[test]
    fn translations_shift_maps() {
        let b = base();
        let shifts = vec![vec![0.0, 0.0], vec![0.3, -0.2], vec![-1.0, 0.7]];
        let (data, _) = sample_translation_family(&b, &shifts, None, 0).unwrap();
        let emb = lot_embed_with_reference_index(&data, 0).unwrap();
        for (t, v) in emb.maps().iter().zip(&shifts) {
            for (img, x) in (0..b.len()).map(|r| (t.image(r), b.point(r))) {
                assert!((img[0] - x[0] - v[0]).abs() < 1e-12);
                assert!((img[1] - x[1] - v[1]).abs() < 1e-12);
            }
        }
        let d12 = lot_distance(&emb, 1, 2).unwrap();
        let expected = ((1.3f64).powi(2) + (0.9f64).powi(2)).sqrt();
        assert!((d12 - expected).abs() < 1e-12);
    }

    #[test]
    fn one_displaced_point() {
        let reference = EmpiricalMeasure::from_flat(vec![0.0; 4], 1).unwrap();
        let emb = LotEmbedding {
            reference: reference.clone(),
            maps: vec![
                TransportMap::new(vec![0.0, 0.0, 0.0, 0.0], 1),
                TransportMap::new(vec![0.0, 2.0, 0.0, 0.0], 1),
            ],
            reference_index: None,
        };
        assert_eq!(emb.distance(0, 1).unwrap(), 1.0);
        assert!(matches!(
            emb.distance(0, 2),
            Err(LotError::IndexOutOfRange { index: 2, len: 2 })
        ));
        let rows = emb.feature_matrix();
        assert_eq!(rows[1], vec![0.0, 1.0, 0.0, 0.0]);
    }

    #[test]
    fn export_layout() {
        let b = base();
        let data = LabeledDataset::unlabeled(vec![b.clone(), b.translated(&[1.0, 0.0]).unwrap()]).unwrap();
        let emb = lot_embed(&b, &data).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("emb.bin");
        emb.export(&path).unwrap();
        let bytes = fs::read(&path).unwrap();
        assert_eq!(&bytes[..4], b"OTLE");
        assert_eq!(u32::from_le_bytes(bytes[4..8].try_into().unwrap()), 2);
        assert_eq!(u32::from_le_bytes(bytes[8..12].try_into().unwrap()), 4);
        assert_eq!(u32::from_le_bytes(bytes[12..16].try_into().unwrap()), 2);
        assert_eq!(bytes.len(), 16 + 8 * 2 * 4 * 2);
    }
}
