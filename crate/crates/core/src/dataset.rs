//! Labeled image sets: loading, preprocessing, balancing, relabeling, splitting and
//! synthetic texture data.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::path::Path;

use log::warn;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{read_image, write_image, Image};

pub const MIN_SIDE: usize = 16;

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledImage {
    pub pixels: Image,
    pub grade: usize,
    pub id: String,
}

impl LabeledImage {
    pub fn new(pixels: Image, grade: usize, id: impl Into<String>) -> Result<Self> {
        let id = id.into();
        let (h, w, c) = pixels.shape();
        if h < MIN_SIDE || w < MIN_SIDE {
            return Err(Error::invalid(format!("{id}: image {h}x{w} smaller than {MIN_SIDE}x{MIN_SIDE}")));
        }
        if c != 1 && c != 3 {
            return Err(Error::invalid(format!("{id}: {c} channels, expected 1 or 3")));
        }
        if pixels.data().iter().any(|v| !v.is_finite() || *v < 0.0 || *v > 1.0) {
            return Err(Error::invalid(format!("{id}: pixel values outside [0,1]")));
        }
        Ok(LabeledImage { pixels, grade, id })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledImageSet {
    items: Vec<LabeledImage>,
    num_classes: usize,
}

impl LabeledImageSet {
    /// Items must share one shape and carry grades below `num_classes`.
    pub fn new(items: Vec<LabeledImage>, num_classes: usize) -> Result<Self> {
        if num_classes < 2 {
            return Err(Error::invalid(format!("num_classes must be >= 2, got {num_classes}")));
        }
        if let Some(first) = items.first() {
            let shape = first.pixels.shape();
            for it in &items {
                if it.pixels.shape() != shape {
                    return Err(Error::invalid(format!(
                        "{}: shape {:?} differs from {:?}",
                        it.id,
                        it.pixels.shape(),
                        shape
                    )));
                }
                if it.grade >= num_classes {
                    return Err(Error::invalid(format!(
                        "{}: grade {} not below num_classes {num_classes}",
                        it.id, it.grade
                    )));
                }
            }
        }
        Ok(LabeledImageSet { items, num_classes })
    }

    pub fn items(&self) -> &[LabeledImage] {
        &self.items
    }

    pub fn into_items(self) -> Vec<LabeledImage> {
        self.items
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// `(height, width, channels)` of the items, `None` for an empty set.
    pub fn shape(&self) -> Option<(usize, usize, usize)> {
        self.items.first().map(|i| i.pixels.shape())
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.num_classes];
        for it in &self.items {
            counts[it.grade] += 1;
        }
        counts
    }

    pub fn labels(&self) -> Vec<usize> {
        self.items.iter().map(|i| i.grade).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreprocessConfig {
    pub target_side: usize,
    pub crop_threshold: f64,
    pub augment_cap: f64,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        PreprocessConfig { target_side: 64, crop_threshold: 0.1, augment_cap: 10.0 }
    }
}

impl PreprocessConfig {
    pub fn validate(&self) -> Result<()> {
        if self.target_side == 0 || self.target_side % 4 != 0 {
            return Err(Error::invalid(format!(
                "target_side {} must be a positive multiple of 4",
                self.target_side
            )));
        }
        if !(self.crop_threshold > 0.0 && self.crop_threshold < 1.0) {
            return Err(Error::invalid("crop_threshold must lie in (0,1)"));
        }
        if !(self.augment_cap >= 1.0) {
            return Err(Error::invalid("augment_cap must be >= 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scenario {
    /// Five grades kept as-is.
    Sc1,
    /// Normal (0) against any retinopathy (1-4).
    Sc2,
    /// Non-referral (0-1) against referral (2-4).
    Sc3,
}

impl Scenario {
    pub fn num_classes(self) -> usize {
        match self {
            Scenario::Sc1 => 5,
            Scenario::Sc2 | Scenario::Sc3 => 2,
        }
    }

    pub fn map_grade(self, grade: usize) -> usize {
        match self {
            Scenario::Sc1 => grade,
            Scenario::Sc2 => usize::from(grade >= 1),
            Scenario::Sc3 => usize::from(grade >= 2),
        }
    }
}

impl std::str::FromStr for Scenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "sc1" => Ok(Scenario::Sc1),
            "sc2" => Ok(Scenario::Sc2),
            "sc3" => Ok(Scenario::Sc3),
            other => Err(Error::invalid(format!("unknown scenario {other:?}"))),
        }
    }
}

/// Reads `<root>/labels.csv` and the images it names, sorted by filename.
pub fn load_dataset(root: &Path, num_classes: usize) -> Result<LabeledImageSet> {
    load_dataset_with(root, num_classes, None)
}

/// Like [`load_dataset`], running [`preprocess_image`] on every item as it is read so
/// that raw images of heterogeneous size end up in one uniform set.
pub fn load_dataset_with(
    root: &Path,
    num_classes: usize,
    preprocess: Option<&PreprocessConfig>,
) -> Result<LabeledImageSet> {
    let csv_path = root.join("labels.csv");
    let text = std::fs::read_to_string(&csv_path).map_err(|e| Error::io(&csv_path, e))?;
    let mut rows = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || (lineno == 0 && line.eq_ignore_ascii_case("filename,grade")) {
            continue;
        }
        let (name, grade) = line
            .rsplit_once(',')
            .ok_or_else(|| Error::Format(format!("labels.csv:{}: expected filename,grade", lineno + 1)))?;
        let grade: usize = grade.trim().parse().map_err(|_| {
            Error::Format(format!("labels.csv:{}: bad grade {grade:?}", lineno + 1))
        })?;
        if grade >= num_classes {
            return Err(Error::invalid(format!(
                "{name}: grade {grade} not below num_classes {num_classes}"
            )));
        }
        rows.push((name.trim().to_string(), grade));
    }
    if rows.is_empty() {
        return Err(Error::NoSamples);
    }
    rows.sort_by(|a, b| a.0.cmp(&b.0));
    let mut items = Vec::with_capacity(rows.len());
    for (name, grade) in rows {
        let path = root.join("images").join(&name);
        if !path.is_file() {
            return Err(Error::invalid(format!("missing image file {}", path.display())));
        }
        let pixels = read_image(&path)?;
        let id = Path::new(&name)
            .file_stem()
            .and_then(|s| s.to_str())
            .unwrap_or(&name)
            .to_string();
        let mut item = LabeledImage::new(pixels, grade, id)?;
        if let Some(cfg) = preprocess {
            item = preprocess_image(&item, cfg)?;
        }
        items.push(item);
    }
    LabeledImageSet::new(items, num_classes)
}

/// Writes the `images/` + `labels.csv` layout read by [`load_dataset`].
pub fn save_dataset(root: &Path, set: &LabeledImageSet) -> Result<()> {
    let img_dir = root.join("images");
    std::fs::create_dir_all(&img_dir).map_err(|e| Error::io(&img_dir, e))?;
    let mut csv = String::from("filename,grade\n");
    for it in set.items() {
        let ext = if it.pixels.channels() == 1 { "pgm" } else { "ppm" };
        let name = format!("{}.{ext}", it.id);
        write_image(&img_dir.join(&name), &it.pixels)?;
        csv.push_str(&format!("{name},{}\n", it.grade));
    }
    let csv_path = root.join("labels.csv");
    std::fs::write(&csv_path, csv).map_err(|e| Error::io(&csv_path, e))
}

/// Crops to the bounding box of `{luminance > crop_threshold}` and resizes to a
/// `target_side` square.
pub fn preprocess_image(img: &LabeledImage, cfg: &PreprocessConfig) -> Result<LabeledImage> {
    cfg.validate()?;
    let px = &img.pixels;
    let (mut top, mut left, mut bottom, mut right) = (usize::MAX, usize::MAX, 0, 0);
    for y in 0..px.height() {
        for x in 0..px.width() {
            if px.luminance(y, x) > cfg.crop_threshold {
                top = top.min(y);
                left = left.min(x);
                bottom = bottom.max(y);
                right = right.max(x);
            }
        }
    }
    if top == usize::MAX {
        return Err(Error::NoForeground);
    }
    let cropped = if (top, left, bottom, right) == (0, 0, px.height() - 1, px.width() - 1) {
        px.clone()
    } else {
        px.crop(top, left, bottom - top + 1, right - left + 1)
    };
    let side = cfg.target_side;
    let pixels = if cropped.height() == side && cropped.width() == side {
        cropped
    } else {
        cropped.resize_bilinear(side, side)
    };
    Ok(LabeledImage { pixels, grade: img.grade, id: img.id.clone() })
}

/// Oversamples minority classes with randomly rotated copies of their own members
/// until each reaches `min(majority, augment_cap * original)` items.
pub fn augment_balance<R: Rng + ?Sized>(
    set: &LabeledImageSet,
    rng: &mut R,
    cfg: &PreprocessConfig,
) -> Result<LabeledImageSet> {
    if set.is_empty() {
        return Err(Error::NoSamples);
    }
    let counts = set.class_counts();
    if let Some(c) = counts.iter().position(|&n| n == 0) {
        return Err(Error::invalid(format!("class {c} has no samples")));
    }
    let majority = *counts.iter().max().unwrap();
    let mut items = set.items().to_vec();
    for (class, &n) in counts.iter().enumerate() {
        let cap = (cfg.augment_cap * n as f64).floor() as usize;
        let target = majority.min(cap.max(n));
        if target <= n {
            continue;
        }
        let members: Vec<&LabeledImage> = set.items().iter().filter(|i| i.grade == class).collect();
        for k in 0..target - n {
            let src = members[rng.random_range(0..members.len())];
            let angle = rng.random_range(-180.0..180.0);
            items.push(LabeledImage {
                pixels: src.pixels.rotate(angle),
                grade: class,
                id: format!("{}_rot{k}", src.id),
            });
        }
    }
    LabeledImageSet::new(items, set.num_classes())
}

pub fn remap_scenario(set: &LabeledImageSet, scenario: Scenario) -> Result<LabeledImageSet> {
    if set.num_classes() != 5 {
        return Err(Error::invalid(format!(
            "scenario remapping needs a 5-class set, got {} classes",
            set.num_classes()
        )));
    }
    let items = set
        .items()
        .iter()
        .map(|it| LabeledImage {
            pixels: it.pixels.clone(),
            grade: scenario.map_grade(it.grade),
            id: it.id.clone(),
        })
        .collect();
    LabeledImageSet::new(items, scenario.num_classes())
}

#[derive(Debug, Clone)]
pub struct Split {
    pub train: LabeledImageSet,
    pub val: LabeledImageSet,
    pub test: LabeledImageSet,
}

/// Stratified three-way split. Per class, each part receives its exact share rounded
/// down plus at most one extra item; the extras are assigned so that the part totals
/// match the largest-remainder rounding of the whole set.
pub fn split_dataset<R: Rng + ?Sized>(
    set: &LabeledImageSet,
    ratios: (f64, f64, f64),
    rng: &mut R,
) -> Result<Split> {
    let r = [ratios.0, ratios.1, ratios.2];
    if r.iter().any(|&x| !(x > 0.0)) || (r.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(Error::invalid(format!("split ratios {r:?} must be positive and sum to 1")));
    }
    let mut by_class: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, it) in set.items().iter().enumerate() {
        by_class.entry(it.grade).or_default().push(i);
    }
    let mut parts: [Vec<usize>; 3] = Default::default();
    let mut quotas: Vec<(usize, Vec<usize>, [usize; 3], [f64; 3])> = Vec::new();
    for (class, mut idx) in by_class {
        idx.shuffle(rng);
        if idx.len() < 3 {
            warn!("class {class} has {} items, too few to stratify; all go to train", idx.len());
            parts[0].extend(idx);
            continue;
        }
        let n = idx.len() as f64;
        let exact = r.map(|x| x * n);
        let floors = exact.map(|x| x.floor() as usize);
        quotas.push((class, idx, floors, exact));
    }
    // targets for the extras: largest-remainder rounding of the stratified total
    let total: usize = quotas.iter().map(|q| q.1.len()).sum();
    let mut target = r.map(|x| (x * total as f64).floor() as usize);
    let mut order: Vec<usize> = (0..3).collect();
    order.sort_by(|&a, &b| {
        let fa = r[a] * total as f64 - target[a] as f64;
        let fb = r[b] * total as f64 - target[b] as f64;
        fb.partial_cmp(&fa).unwrap().then(a.cmp(&b))
    });
    let mut short = total - target.iter().sum::<usize>();
    for &s in order.iter().cycle() {
        if short == 0 {
            break;
        }
        target[s] += 1;
        short -= 1;
    }
    let floor_sum: [usize; 3] =
        std::array::from_fn(|s| quotas.iter().map(|q| q.2[s]).sum::<usize>());
    let mut deficit: [usize; 3] = std::array::from_fn(|s| target[s].saturating_sub(floor_sum[s]));
    for (_, idx, floors, exact) in &mut quotas {
        let mut counts = *floors;
        let mut leftover = idx.len() - counts.iter().sum::<usize>();
        let mut used = [false; 3];
        while leftover > 0 {
            let frac = |s: usize| exact[s] - floors[s] as f64;
            let pick = (0..3)
                .filter(|&s| !used[s] && deficit[s] > 0)
                .max_by(|&a, &b| frac(a).partial_cmp(&frac(b)).unwrap().then(b.cmp(&a)))
                .or_else(|| (0..3).filter(|&s| !used[s]).max_by(|&a, &b| {
                    frac(a).partial_cmp(&frac(b)).unwrap().then(b.cmp(&a))
                }))
                .unwrap_or(0);
            used[pick] = true;
            deficit[pick] = deficit[pick].saturating_sub(1);
            counts[pick] += 1;
            leftover -= 1;
        }
        let mut it = idx.iter().copied();
        for s in 0..3 {
            parts[s].extend(it.by_ref().take(counts[s]));
        }
    }
    let build = |mut idx: Vec<usize>| {
        idx.sort_unstable();
        LabeledImageSet::new(idx.into_iter().map(|i| set.items()[i].clone()).collect(), set.num_classes())
    };
    let [train, val, test] = parts;
    Ok(Split { train: build(train)?, val: build(val)?, test: build(test)? })
}

fn grating_value(y: usize, x: usize, orientation: f64, freq: f64, phase: f64) -> f64 {
    let (s, c) = orientation.sin_cos();
    let t = x as f64 * c + y as f64 * s;
    0.5 + 0.3 * (2.0 * PI * freq * t + phase).sin()
}

fn check_toy_args(n_per_class: usize, num_classes: usize, side: usize) -> Result<()> {
    if !(2..=5).contains(&num_classes) {
        return Err(Error::invalid(format!("toy data needs 2..=5 classes, got {num_classes}")));
    }
    if side < MIN_SIDE {
        return Err(Error::invalid(format!("toy side {side} below {MIN_SIDE}")));
    }
    if n_per_class == 0 {
        return Err(Error::invalid("n_per_class must be >= 1"));
    }
    Ok(())
}

/// Sinusoidal gratings, one orientation per class (`k * 180 / C` degrees), with random
/// phase, +-15% frequency jitter around a 6-pixel period, and N(0, 0.05) pixel noise.
pub fn generate_toy_dataset<R: Rng + ?Sized>(
    n_per_class: usize,
    num_classes: usize,
    side: usize,
    rng: &mut R,
) -> Result<LabeledImageSet> {
    check_toy_args(n_per_class, num_classes, side)?;
    let noise = Normal::new(0.0, 0.05).unwrap();
    let mut items = Vec::with_capacity(n_per_class * num_classes);
    for class in 0..num_classes {
        let orientation = (class as f64 * 180.0 / num_classes as f64).to_radians();
        for i in 0..n_per_class {
            let phase = rng.random_range(0.0..2.0 * PI);
            let freq = (1.0 / 6.0) * rng.random_range(0.85..1.15);
            let pixels = Image::from_fn(side, side, 1, |y, x, _| {
                (grating_value(y, x, orientation, freq, phase) + noise.sample(rng)).clamp(0.0, 1.0)
            });
            items.push(LabeledImage { pixels, grade: class, id: format!("toy_c{class}_{i:04}") });
        }
    }
    LabeledImageSet::new(items, num_classes)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Half {
    Left,
    Right,
}

/// Toy gratings confined to a random half of the image; the other half is black.
/// Returns which half carries the pattern for each item.
pub fn generate_half_toy_dataset<R: Rng + ?Sized>(
    n_per_class: usize,
    num_classes: usize,
    side: usize,
    rng: &mut R,
) -> Result<(LabeledImageSet, Vec<Half>)> {
    check_toy_args(n_per_class, num_classes, side)?;
    let noise = Normal::new(0.0, 0.05).unwrap();
    let mut items = Vec::new();
    let mut halves = Vec::new();
    for class in 0..num_classes {
        let orientation = (class as f64 * 180.0 / num_classes as f64).to_radians();
        for i in 0..n_per_class {
            let half = if rng.random_bool(0.5) { Half::Left } else { Half::Right };
            let phase = rng.random_range(0.0..2.0 * PI);
            let freq = (1.0 / 6.0) * rng.random_range(0.85..1.15);
            let pixels = Image::from_fn(side, side, 1, |y, x, _| {
                let inside = match half {
                    Half::Left => x < side / 2,
                    Half::Right => x >= side / 2,
                };
                if inside {
                    (grating_value(y, x, orientation, freq, phase) + noise.sample(rng)).clamp(0.0, 1.0)
                } else {
                    0.0
                }
            });
            items.push(LabeledImage { pixels, grade: class, id: format!("half_c{class}_{i:04}") });
            halves.push(half);
        }
    }
    Ok((LabeledImageSet::new(items, num_classes)?, halves))
}
