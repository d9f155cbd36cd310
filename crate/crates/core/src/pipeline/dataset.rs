use std::path::{Path, PathBuf};

use log::warn;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::imaging::{load_image_as_rgb, ImageTensor};

#[derive(Clone, Debug)]
pub struct NamedImage {
    pub name: String,
    pub path: PathBuf,
    pub image: ImageTensor,
}

#[derive(Clone, Debug, Default)]
pub struct ImageCollection {
    pub images: Vec<NamedImage>,
    /// Decodable images smaller than the crop.
    pub skipped_undersized: usize,
    /// One line per file that was skipped.
    pub diagnostics: Vec<String>,
}

impl ImageCollection {
    pub fn from_images(images: Vec<(String, ImageTensor)>) -> Self {
        Self {
            images: images
                .into_iter()
                .map(|(name, image)| NamedImage {
                    path: PathBuf::from(&name),
                    name,
                    image,
                })
                .collect(),
            ..Default::default()
        }
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    pub fn tensors(&self) -> Vec<ImageTensor> {
        self.images.iter().map(|n| n.image.clone()).collect()
    }
}

fn is_image_file(path: &Path) -> bool {
    matches!(
        path.extension().and_then(|e| e.to_str()).map(|e| e.to_ascii_lowercase()).as_deref(),
        Some("png" | "bmp")
    )
}

/// Loads every PNG/BMP under `dir` (non-recursive) in lexicographic order.
/// Files smaller than `min_side` in either dimension are skipped and counted.
pub fn ingest(dir: impl AsRef<Path>, min_side: usize) -> Result<ImageCollection> {
    let dir = dir.as_ref();
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| Error::Ingest(format!("cannot read {}: {e}", dir.display())))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && is_image_file(p))
        .collect();
    paths.sort();
    let mut out = ImageCollection::default();
    for path in paths {
        let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
        match load_image_as_rgb(&path) {
            Ok(image) if image.height() < min_side || image.width() < min_side => {
                out.skipped_undersized += 1;
                out.diagnostics.push(format!(
                    "{name}: {}x{} smaller than {min_side}",
                    image.height(),
                    image.width()
                ));
            }
            Ok(image) => out.images.push(NamedImage { name, path, image }),
            Err(e) => out.diagnostics.push(format!("{name}: {e}")),
        }
    }
    for d in &out.diagnostics {
        warn!("skipped {d}");
    }
    if out.images.is_empty() {
        return Err(Error::Ingest(format!(
            "no usable images (>= {min_side}x{min_side}) in {}",
            dir.display()
        )));
    }
    Ok(out)
}

/// Deterministic 64-bit seed derived from a base seed and a path of indices.
pub fn derive_seed(seed: u64, path: &[u64]) -> u64 {
    let mut s = seed ^ 0x9E37_79B9_7F4A_7C15;
    for &p in path {
        s = splitmix(s ^ splitmix(p.wrapping_add(0xA076_1D64_78BD_642F)));
    }
    s
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Window position of each crop in a sampled batch.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CropSpec {
    pub image: usize,
    pub top: usize,
    pub left: usize,
}

/// Uniformly random image choice and top-left position per batch element.
pub fn sample_crop_specs(images: &[ImageTensor], crop: usize, batch: usize, seed: u64) -> Vec<CropSpec> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..batch)
        .map(|_| {
            let image = rng.random_range(0..images.len());
            let img = &images[image];
            let top = rng.random_range(0..=img.height() - crop);
            let left = rng.random_range(0..=img.width() - crop);
            CropSpec { image, top, left }
        })
        .collect()
}

pub fn sample_crops(images: &[ImageTensor], crop: usize, batch: usize, seed: u64) -> Vec<ImageTensor> {
    sample_crop_specs(images, crop, batch, seed)
        .into_iter()
        .map(|s| images[s.image].crop(s.top, s.left, crop, crop).expect("crop inside image"))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imaging::save_image;

    fn img(h: usize, w: usize, k: f64) -> ImageTensor {
        ImageTensor::from_fn(3, h, w, |c, y, x| ((y * w + x) as f64 * k + c as f64 * 0.1).sin() * 0.5 + 0.5)
    }

    #[test]
    fn ingest_orders_skips_and_reports() {
        let dir = tempfile::tempdir().unwrap();
        for (i, name) in ["c.png", "a.png", "b.bmp"].into_iter().enumerate() {
            save_image(&img(24, 20, 0.1 * (i + 1) as f64), dir.path().join(name)).unwrap();
        }
        save_image(&img(10, 10, 0.3), dir.path().join("small.png")).unwrap();
        std::fs::write(dir.path().join("corrupt.png"), b"not a png").unwrap();
        std::fs::write(dir.path().join("notes.txt"), b"ignored").unwrap();
        let col = ingest(dir.path(), 16).unwrap();
        let names: Vec<_> = col.images.iter().map(|n| n.name.as_str()).collect();
        assert_eq!(names, ["a.png", "b.bmp", "c.png"]);
        assert_eq!(col.skipped_undersized, 1);
        assert_eq!(col.diagnostics.len(), 2);
        assert!(col.diagnostics.iter().any(|d| d.starts_with("corrupt.png")));
    }

    #[test]
    fn ingest_fails_without_usable_images() {
        let dir = tempfile::tempdir().unwrap();
        save_image(&img(100, 100, 0.2), dir.path().join("one.png")).unwrap();
        let err = ingest(dir.path(), 176).unwrap_err();
        assert!(matches!(err, Error::Ingest(_)));
        let col = ingest(dir.path(), 64).unwrap();
        assert_eq!(col.len(), 1);
    }

    #[test]
    fn crops_are_reproducible_and_sized() {
        let images = vec![img(40, 50, 0.01), img(33, 33, 0.02)];
        let a = sample_crops(&images, 32, 6, 11);
        let b = sample_crops(&images, 32, 6, 11);
        assert_eq!(a, b);
        assert!(a.iter().all(|c| c.shape() == (3, 32, 32)));
        assert_ne!(a, sample_crops(&images, 32, 6, 12));
    }

    #[test]
    fn exact_size_image_has_one_crop() {
        let images = vec![img(32, 32, 0.05)];
        for seed in 0..5 {
            assert_eq!(sample_crops(&images, 32, 1, seed)[0], images[0]);
        }
    }

    #[test]
    fn derived_seeds_differ_by_path() {
        assert_ne!(derive_seed(1, &[0, 1]), derive_seed(1, &[1, 0]));
        assert_eq!(derive_seed(5, &[3]), derive_seed(5, &[3]));
    }
}
