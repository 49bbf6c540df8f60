//! Representative training images: texture descriptors, k-medoid clustering per class
//! and gap-statistic model selection.

mod descriptor;
mod gap;
mod kmedoids;

use std::collections::BTreeMap;
use std::path::Path;

use log::info;
use rand::Rng;
use serde::{Deserialize, Serialize};

pub use descriptor::{compute_descriptor, DescriptorVector, DESCRIPTOR_LEN, LBP_BINS, ORIENTATION_BINS};
pub use gap::{choose_k, gap_statistic, GapRecord, GapReport};
pub use kmedoids::{euclidean, k_medoids, medoid_cost, pam, DistanceMatrix, MedoidAssignment};

use crate::dataset::{save_dataset, LabeledImage, LabeledImageSet};
use crate::error::{Error, Result};
use crate::rng::seeded;

pub const GAP_K_MAX: usize = 10;
pub const GAP_REFERENCES: usize = 10;

#[derive(Debug, Clone, PartialEq)]
pub struct RepresentativeSet {
    pub images: Vec<LabeledImage>,
    pub per_class_counts: BTreeMap<usize, usize>,
    pub num_classes: usize,
    /// Gap-statistic report for every clustered class.
    pub gap_reports: BTreeMap<usize, GapReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub class: usize,
    pub ids: Vec<String>,
}

impl RepresentativeSet {
    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    pub fn labels(&self) -> Vec<usize> {
        self.images.iter().map(|i| i.grade).collect()
    }

    pub fn classes_present(&self) -> usize {
        self.per_class_counts.values().filter(|&&c| c > 0).count()
    }

    pub fn manifest(&self) -> Vec<ManifestEntry> {
        let mut by_class: BTreeMap<usize, Vec<String>> = BTreeMap::new();
        for img in &self.images {
            by_class.entry(img.grade).or_default().push(img.id.clone());
        }
        by_class.into_iter().map(|(class, ids)| ManifestEntry { class, ids }).collect()
    }

    pub fn manifest_json(&self) -> Vec<u8> {
        let mut out = serde_json::to_vec_pretty(&self.manifest()).expect("manifest serializes");
        out.push(b'\n');
        out
    }

    /// Rebuild from a manifest by picking the named images out of `train`.
    pub fn from_manifest(entries: &[ManifestEntry], train: &LabeledImageSet) -> Result<Self> {
        let mut images = Vec::new();
        let mut per_class_counts = BTreeMap::new();
        for e in entries {
            for id in &e.ids {
                let img = train
                    .items()
                    .iter()
                    .find(|i| &i.id == id)
                    .ok_or_else(|| Error::invalid(format!("representative {id} not in training set")))?;
                if img.grade != e.class {
                    return Err(Error::invalid(format!("representative {id} has grade {} not {}", img.grade, e.class)));
                }
                images.push(img.clone());
                *per_class_counts.entry(e.class).or_insert(0) += 1;
            }
        }
        Ok(RepresentativeSet { images, per_class_counts, num_classes: train.num_classes(), gap_reports: BTreeMap::new() })
    }

    /// Writes `representatives.json` and copies of the images in dataset layout.
    pub fn write(&self, out_dir: &Path) -> Result<()> {
        std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
        let path = out_dir.join("representatives.json");
        std::fs::write(&path, self.manifest_json()).map_err(|e| Error::io(&path, e))?;
        let set = LabeledImageSet::new(self.images.clone(), self.num_classes)?;
        save_dataset(&out_dir.join("representatives"), &set)
    }
}

/// Per class: descriptors, `K` by the gap statistic (`K_max = min(10, n−1)`, `B = 10`),
/// PAM, and the medoid images. Classes are processed in index order, each with its own
/// seed drawn from `rng`.
pub fn select_representatives<R: Rng + ?Sized>(train: &LabeledImageSet, rng: &mut R) -> Result<RepresentativeSet> {
    if train.is_empty() {
        return Err(Error::NoSamples);
    }
    let mut images = Vec::new();
    let mut per_class_counts = BTreeMap::new();
    let mut gap_reports = BTreeMap::new();
    for class in 0..train.num_classes() {
        let class_seed: u64 = rng.random();
        let members: Vec<&LabeledImage> = train.items().iter().filter(|i| i.grade == class).collect();
        match members.len() {
            0 => continue,
            1 => {
                images.push(members[0].clone());
                per_class_counts.insert(class, 1);
                continue;
            }
            _ => {}
        }
        let descriptors: Vec<Vec<f64>> = members.iter().map(|m| compute_descriptor(m).values).collect();
        let k_max = GAP_K_MAX.min(members.len() - 1);
        let mut class_rng = seeded(class_seed);
        let report = gap_statistic(&descriptors, k_max, GAP_REFERENCES, &mut class_rng)?;
        let clusters = k_medoids(&descriptors, report.chosen_k)?;
        let mut medoids = clusters.medoid_indices.clone();
        medoids.sort_unstable();
        info!("class {class}: {} images, K = {}", members.len(), report.chosen_k);
        images.extend(medoids.iter().map(|&i| members[i].clone()));
        per_class_counts.insert(class, medoids.len());
        gap_reports.insert(class, report);
    }
    Ok(RepresentativeSet { images, per_class_counts, num_classes: train.num_classes(), gap_reports })
}
