//! Loading a labelled corpus and turning splits into training datasets.

use crate::dsp::{featurize_raw, normalize, pad_or_trim, CorpusStats, Spectrogram};
use crate::error::{Error, Result};
use crate::io::checkpoint::FeatureCache;
use crate::io::config::DataPaths;
use crate::io::manifest::{LabelMap, Manifest, ManifestRow};
use crate::model::AstConfig;
use crate::par;
use crate::train::Dataset;

/// Raw features for every manifest row plus the label map.
#[derive(Clone, Debug, PartialEq)]
pub struct Corpus {
    pub rows: Vec<ManifestRow>,
    pub specs: Vec<Spectrogram>,
    pub labels: LabelMap,
}

/// Featurizes every row of `m` in parallel.
pub fn featurize_manifest(m: &Manifest) -> Result<Vec<Spectrogram>> {
    par::map(&m.rows, |r| featurize_raw(&m.resolve(r))).into_iter().collect()
}

impl Corpus {
    /// Prefers the feature cache over the manifest when both are set.
    pub fn load(paths: &DataPaths) -> Result<Self> {
        let label_path = paths.label_path()?;
        let labels = LabelMap::read(&label_path)?;
        let (rows, specs) = if let Some(f) = &paths.features {
            let cache = FeatureCache::load(f)?;
            (cache.rows, cache.specs)
        } else if let Some(mp) = &paths.manifest {
            let m = Manifest::read(mp)?;
            m.validate(&labels)?;
            let specs = featurize_manifest(&m)?;
            (m.rows, specs)
        } else {
            return Err(Error::Config("no manifest or feature cache configured".into()));
        };
        for (i, r) in rows.iter().enumerate() {
            if let Some(bad) = r.labels.iter().find(|&&l| l >= labels.len()) {
                return Err(Error::data(
                    &label_path,
                    format!("row {} uses label {bad}, map has {} classes", i + 1, labels.len()),
                ));
            }
        }
        Ok(Corpus { rows, specs, labels })
    }

    pub fn indices(&self, split: &str) -> Vec<usize> {
        (0..self.rows.len()).filter(|&i| self.rows[i].split == split).collect()
    }

    /// Statistics over the unpadded frames of one split.
    pub fn stats(&self, split: &str) -> Result<CorpusStats> {
        let idx = self.indices(split);
        if idx.is_empty() {
            return Err(Error::Input(format!("split {split:?} is empty")));
        }
        CorpusStats::compute(idx.iter().map(|&i| &self.specs[i]))
    }

    /// Padded, normalized dataset of the given rows.
    pub fn dataset(&self, idx: &[usize], model: &AstConfig, stats: CorpusStats) -> Result<Dataset> {
        let inputs = par::map(idx, |&i| {
            normalize(&pad_or_trim(&self.specs[i], model.target_frames)?, stats)
        })
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
        let targets = idx.iter().map(|&i| self.labels.multi_hot(&self.rows[i].labels)).collect();
        Dataset::new(inputs, targets)
    }
}
