//! Dataset discovery, image standardization and the stratified split.
//!
//! A corpus is a directory with one subdirectory per class:
//!
//!   root/
//!     healthy/
//!       img_001.jpg
//!     rust/
//!       img_002.png
//!
//! Class indices follow lexicographic directory order, which pins the
//! label order (and confusion-matrix axes) across runs.

use std::path::{Path, PathBuf};

use image::imageops::FilterType;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::Rng;

/// Canonical model input side length.
pub const IMAGE_SIDE: usize = 128;
const CHANNELS: usize = 3;

const IMAGE_EXTENSIONS: &[&str] = &["png", "jpg", "jpeg", "bmp"];

fn has_image_extension(path: &Path) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .map(|e| IMAGE_EXTENSIONS.contains(&e.to_ascii_lowercase().as_str()))
        .unwrap_or(false)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestSample {
    pub path: PathBuf,
    pub class: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub classes: Vec<String>,
    pub samples: Vec<ManifestSample>,
    pub source_root: PathBuf,
}

#[derive(Debug, Clone)]
pub struct SkippedFile {
    pub path: PathBuf,
    pub reason: String,
}

/// Manifest plus the files that were skipped while scanning.
#[derive(Debug, Clone)]
pub struct ScanOutcome {
    pub manifest: DatasetManifest,
    pub skipped: Vec<SkippedFile>,
}

impl DatasetManifest {
    pub fn class_count(&self) -> usize {
        self.classes.len()
    }

    pub fn per_class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0usize; self.classes.len()];
        for s in &self.samples {
            counts[s.class] += 1;
        }
        counts
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serializes")
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn read_json(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text)
            .map_err(|e| Error::Format(format!("manifest {}: {}", path.display(), e)))
    }

    fn validate(&self) -> Result<()> {
        for s in &self.samples {
            if s.class >= self.classes.len() {
                return Err(Error::Input(format!(
                    "sample {} has class index {} but only {} classes exist",
                    s.path.display(),
                    s.class,
                    self.classes.len()
                )));
            }
        }
        Ok(())
    }
}

/// Enumerate `root/<class>/<image>` into a manifest. Unreadable entries
/// are skipped and reported; a class directory with no usable image is an
/// error.
pub fn scan_dataset(root: &Path) -> Result<ScanOutcome> {
    if !root.is_dir() {
        return Err(Error::Input(format!(
            "dataset root {} does not exist or is not a directory",
            root.display()
        )));
    }

    let mut class_dirs: Vec<(String, PathBuf)> = Vec::new();
    for entry in std::fs::read_dir(root)? {
        let entry = entry?;
        let path = entry.path();
        if path.is_dir() {
            if let Some(name) = path.file_name().and_then(|n| n.to_str()) {
                class_dirs.push((name.to_string(), path));
            }
        }
    }
    class_dirs.sort_by(|a, b| a.0.cmp(&b.0));
    if class_dirs.is_empty() {
        return Err(Error::Input(format!(
            "dataset root {} contains no class subdirectories",
            root.display()
        )));
    }

    let mut skipped = Vec::new();
    let mut samples = Vec::new();
    for (class_idx, (class_name, dir)) in class_dirs.iter().enumerate() {
        let mut files: Vec<PathBuf> = Vec::new();
        for entry in std::fs::read_dir(dir)? {
            let entry = match entry {
                Ok(e) => e,
                Err(e) => {
                    skipped.push(SkippedFile {
                        path: dir.clone(),
                        reason: format!("unreadable directory entry: {}", e),
                    });
                    continue;
                }
            };
            let path = entry.path();
            if path.is_dir() {
                continue;
            }
            if !has_image_extension(&path) {
                skipped.push(SkippedFile {
                    path,
                    reason: "unrecognized extension".to_string(),
                });
                continue;
            }
            if std::fs::metadata(&path).is_err() {
                skipped.push(SkippedFile {
                    path,
                    reason: "unreadable metadata".to_string(),
                });
                continue;
            }
            files.push(path);
        }
        files.sort();
        if files.is_empty() {
            return Err(Error::Input(format!(
                "class directory '{}' contains no readable images",
                class_name
            )));
        }
        samples.extend(files.into_iter().map(|path| ManifestSample {
            path,
            class: class_idx,
        }));
    }

    let manifest = DatasetManifest {
        classes: class_dirs.into_iter().map(|(n, _)| n).collect(),
        samples,
        source_root: root.to_path_buf(),
    };
    manifest.validate()?;
    Ok(ScanOutcome { manifest, skipped })
}

/// 128x128x3 image normalized to [-1, 1] (mean 0.5, std 0.5 on the [0, 1]
/// scale). Row-major HWC layout.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedImage {
    pixels: Vec<f32>,
}

impl NormalizedImage {
    pub fn from_pixels(pixels: Vec<f32>) -> Result<Self> {
        if pixels.len() != IMAGE_SIDE * IMAGE_SIDE * CHANNELS {
            return Err(Error::Input(format!(
                "expected {} pixel values, got {}",
                IMAGE_SIDE * IMAGE_SIDE * CHANNELS,
                pixels.len()
            )));
        }
        if let Some(bad) = pixels.iter().find(|v| !(-1.0..=1.0).contains(*v)) {
            return Err(Error::Input(format!(
                "pixel value {} outside [-1, 1]",
                bad
            )));
        }
        Ok(NormalizedImage { pixels })
    }

    pub fn width(&self) -> usize {
        IMAGE_SIDE
    }

    pub fn height(&self) -> usize {
        IMAGE_SIDE
    }

    #[inline]
    pub fn at(&self, y: usize, x: usize) -> [f32; 3] {
        let base = (y * IMAGE_SIDE + x) * CHANNELS;
        [
            self.pixels[base],
            self.pixels[base + 1],
            self.pixels[base + 2],
        ]
    }

    pub fn pixels(&self) -> &[f32] {
        &self.pixels
    }

    /// Per-channel sums, accumulated in f64.
    pub fn channel_sums(&self) -> [f64; 3] {
        let mut sums = [0.0f64; 3];
        for chunk in self.pixels.chunks_exact(CHANNELS) {
            sums[0] += chunk[0] as f64;
            sums[1] += chunk[1] as f64;
            sums[2] += chunk[2] as f64;
        }
        sums
    }
}

/// Decode, bilinear-resize to 128x128 and map onto [-1, 1]. Grayscale
/// inputs are promoted to RGB by channel replication.
pub fn preprocess_image(path: &Path) -> Result<NormalizedImage> {
    let img = image::open(path).map_err(|e| Error::Decode {
        path: path.to_path_buf(),
        detail: e.to_string(),
    })?;
    if img.width() == 0 || img.height() == 0 {
        return Err(Error::Input(format!(
            "image {} has a zero dimension",
            path.display()
        )));
    }
    let rgb = img
        .resize_exact(IMAGE_SIDE as u32, IMAGE_SIDE as u32, FilterType::Triangle)
        .to_rgb8();
    let mut pixels = Vec::with_capacity(IMAGE_SIDE * IMAGE_SIDE * CHANNELS);
    for v in rgb.into_raw() {
        let unit = v as f32 / 255.0;
        pixels.push((unit - 0.5) / 0.5);
    }
    NormalizedImage::from_pixels(pixels)
}

/// Per class, floor(train_fraction * n) samples (at least 1) go to train
/// and the rest to test. Membership is a pure function of the manifest,
/// the fraction and the seed.
pub fn stratified_split(
    manifest: &DatasetManifest,
    train_fraction: f64,
    seed: u64,
) -> Result<(DatasetManifest, DatasetManifest)> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::Input(format!(
            "train fraction must be in (0, 1), got {}",
            train_fraction
        )));
    }
    let counts = manifest.per_class_counts();
    for (class, &n) in counts.iter().enumerate() {
        if n < 2 {
            return Err(Error::Input(format!(
                "class '{}' has {} samples; at least 2 are required to split",
                manifest.classes[class], n
            )));
        }
    }

    let mut rng = Rng::substream(seed, "split");
    let mut train_idx: Vec<usize> = Vec::new();
    let mut test_idx: Vec<usize> = Vec::new();
    for class in 0..manifest.classes.len() {
        let mut members: Vec<usize> = manifest
            .samples
            .iter()
            .enumerate()
            .filter(|(_, s)| s.class == class)
            .map(|(i, _)| i)
            .collect();
        rng.shuffle(&mut members);
        // tiny epsilon guards against 0.8*n evaluating just below an integer
        let n_train = (((train_fraction * members.len() as f64) + 1e-9).floor() as usize).max(1);
        train_idx.extend_from_slice(&members[..n_train]);
        test_idx.extend_from_slice(&members[n_train..]);
    }
    train_idx.sort_unstable();
    test_idx.sort_unstable();

    let pick = |idx: &[usize]| DatasetManifest {
        classes: manifest.classes.clone(),
        samples: idx.iter().map(|&i| manifest.samples[i].clone()).collect(),
        source_root: manifest.source_root.clone(),
    };
    Ok((pick(&train_idx), pick(&test_idx)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use image::{Rgb, RgbImage};

    fn write_solid(path: &Path, w: u32, h: u32, color: [u8; 3]) {
        let img = RgbImage::from_pixel(w, h, Rgb(color));
        img.save(path).unwrap();
    }

    fn fake_corpus(dir: &Path, spec: &[(&str, usize)]) {
        for (class, count) in spec {
            let class_dir = dir.join(class);
            std::fs::create_dir_all(&class_dir).unwrap();
            for i in 0..*count {
                write_solid(
                    &class_dir.join(format!("img_{:03}.png", i)),
                    16,
                    16,
                    [((i * 40) % 255) as u8, 100, 50],
                );
            }
        }
    }

    #[test]
    fn scan_enumerates_each_image_once() {
        let dir = tempfile::tempdir().unwrap();
        fake_corpus(dir.path(), &[("healthy", 3), ("rust", 2)]);
        let outcome = scan_dataset(dir.path()).unwrap();
        assert_eq!(outcome.manifest.classes, vec!["healthy", "rust"]);
        assert_eq!(outcome.manifest.samples.len(), 5);
        assert_eq!(outcome.manifest.per_class_counts(), vec![3, 2]);
        assert!(outcome.skipped.is_empty());
    }

    #[test]
    fn scan_rejects_empty_root() {
        let dir = tempfile::tempdir().unwrap();
        match scan_dataset(dir.path()) {
            Err(Error::Input(msg)) => assert!(msg.contains("no class subdirectories")),
            other => panic!("expected input error, got {:?}", other),
        }
    }

    #[test]
    fn scan_rejects_missing_root() {
        assert!(matches!(
            scan_dataset(Path::new("/nonexistent/graphleaf-root")),
            Err(Error::Input(_))
        ));
    }

    #[test]
    fn scan_names_the_empty_class() {
        let dir = tempfile::tempdir().unwrap();
        fake_corpus(dir.path(), &[("healthy", 2)]);
        std::fs::create_dir_all(dir.path().join("blank")).unwrap();
        match scan_dataset(dir.path()) {
            Err(Error::Input(msg)) => assert!(msg.contains("blank"), "{}", msg),
            other => panic!("expected input error, got {:?}", other),
        }
    }

    #[test]
    fn scan_skips_unrecognized_extensions() {
        let dir = tempfile::tempdir().unwrap();
        fake_corpus(dir.path(), &[("healthy", 2)]);
        std::fs::write(dir.path().join("healthy/notes.txt"), "hi").unwrap();
        let outcome = scan_dataset(dir.path()).unwrap();
        assert_eq!(outcome.manifest.samples.len(), 2);
        assert_eq!(outcome.skipped.len(), 1);
        assert!(outcome.skipped[0].reason.contains("extension"));
    }

    #[test]
    fn scan_class_order_is_lexicographic() {
        let dir = tempfile::tempdir().unwrap();
        fake_corpus(dir.path(), &[("zeta", 2), ("alpha", 2), ("mid", 2)]);
        let outcome = scan_dataset(dir.path()).unwrap();
        assert_eq!(outcome.manifest.classes, vec!["alpha", "mid", "zeta"]);
    }

    #[test]
    fn preprocess_constant_white_is_plus_one() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("white.png");
        write_solid(&path, 64, 64, [255, 255, 255]);
        let img = preprocess_image(&path).unwrap();
        assert!(img.pixels().iter().all(|&v| (v - 1.0).abs() < 1e-6));
    }

    #[test]
    fn preprocess_constant_black_is_minus_one() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("black.png");
        write_solid(&path, 32, 48, [0, 0, 0]);
        let img = preprocess_image(&path).unwrap();
        assert!(img.pixels().iter().all(|&v| (v + 1.0).abs() < 1e-6));
    }

    #[test]
    fn preprocess_mid_gray_matches_formula() {
        // (128/255 - 0.5) / 0.5 = 0.003921...
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("gray.png");
        write_solid(&path, 64, 64, [128, 128, 128]);
        let img = preprocess_image(&path).unwrap();
        let expected = (128.0f32 / 255.0 - 0.5) / 0.5;
        assert!((expected - 0.00392157).abs() < 1e-6);
        assert!(img.pixels().iter().all(|&v| (v - expected).abs() < 1e-5));
    }

    #[test]
    fn preprocess_promotes_grayscale() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("gray.png");
        let img = image::GrayImage::from_pixel(20, 20, image::Luma([200]));
        img.save(&path).unwrap();
        let out = preprocess_image(&path).unwrap();
        let px = out.at(5, 5);
        assert_eq!(px[0], px[1]);
        assert_eq!(px[1], px[2]);
    }

    #[test]
    fn preprocess_rejects_undecodable() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bogus.png");
        std::fs::write(&path, b"not an image at all").unwrap();
        assert!(matches!(preprocess_image(&path), Err(Error::Decode { .. })));
    }

    #[test]
    fn preprocess_is_deterministic() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("img.png");
        let mut img = RgbImage::new(33, 57);
        for (x, y, p) in img.enumerate_pixels_mut() {
            *p = Rgb([(x * 7 % 256) as u8, (y * 3 % 256) as u8, ((x + y) % 256) as u8]);
        }
        img.save(&path).unwrap();
        let a = preprocess_image(&path).unwrap();
        let b = preprocess_image(&path).unwrap();
        assert_eq!(a, b);
    }

    fn synthetic_manifest(counts: &[usize]) -> DatasetManifest {
        let classes: Vec<String> = (0..counts.len()).map(|i| format!("class{}", i)).collect();
        let mut samples = Vec::new();
        for (class, &n) in counts.iter().enumerate() {
            for i in 0..n {
                samples.push(ManifestSample {
                    path: PathBuf::from(format!("/data/class{}/img{}.png", class, i)),
                    class,
                });
            }
        }
        DatasetManifest {
            classes,
            samples,
            source_root: PathBuf::from("/data"),
        }
    }

    #[test]
    fn split_522_at_080_gives_417_105() {
        let manifest = synthetic_manifest(&[522]);
        let (train, test) = stratified_split(&manifest, 0.8, 7).unwrap();
        assert_eq!(train.samples.len(), 417);
        assert_eq!(test.samples.len(), 105);
    }

    #[test]
    fn split_400_at_075_gives_300_100() {
        let manifest = synthetic_manifest(&[400, 400, 400]);
        let (train, test) = stratified_split(&manifest, 0.75, 1).unwrap();
        assert_eq!(train.samples.len(), 900);
        assert_eq!(test.samples.len(), 300);
        let t = train.per_class_counts();
        assert_eq!(t, vec![300, 300, 300]);
    }

    #[test]
    fn split_is_seed_deterministic() {
        let manifest = synthetic_manifest(&[37, 19, 51]);
        let a = stratified_split(&manifest, 0.8, 99).unwrap();
        let b = stratified_split(&manifest, 0.8, 99).unwrap();
        assert_eq!(a.0, b.0);
        assert_eq!(a.1, b.1);
        let c = stratified_split(&manifest, 0.8, 100).unwrap();
        assert_ne!(a.0, c.0);
    }

    #[test]
    fn split_partitions_exactly() {
        let manifest = synthetic_manifest(&[13, 8, 29]);
        let (train, test) = stratified_split(&manifest, 0.7, 5).unwrap();
        let mut all: Vec<_> = train.samples.iter().chain(test.samples.iter()).collect();
        all.sort_by(|a, b| a.path.cmp(&b.path));
        let mut orig: Vec<_> = manifest.samples.iter().collect();
        orig.sort_by(|a, b| a.path.cmp(&b.path));
        assert_eq!(all.len(), orig.len());
        for (a, b) in all.iter().zip(orig.iter()) {
            assert_eq!(a, b);
        }
    }

    #[test]
    fn split_rejects_tiny_class() {
        let manifest = synthetic_manifest(&[10, 1]);
        assert!(matches!(
            stratified_split(&manifest, 0.8, 0),
            Err(Error::Input(_))
        ));
    }

    #[test]
    fn split_rejects_bad_fraction() {
        let manifest = synthetic_manifest(&[10, 10]);
        assert!(stratified_split(&manifest, 0.0, 0).is_err());
        assert!(stratified_split(&manifest, 1.0, 0).is_err());
    }

    #[test]
    fn manifest_json_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let manifest = synthetic_manifest(&[3, 4]);
        let path = dir.path().join("manifest.json");
        manifest.write_json(&path).unwrap();
        let loaded = DatasetManifest::read_json(&path).unwrap();
        assert_eq!(manifest, loaded);
        // the documented key names
        let raw: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
        assert!(raw.get("classes").is_some());
        assert!(raw["samples"][0].get("path").is_some());
        assert!(raw["samples"][0].get("class").is_some());
    }
}
