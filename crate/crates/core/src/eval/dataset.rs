//! Paired-directory datasets: `images/<id>.{png,jpg,jpeg}`, `masks/<id>.png`
//! and optionally `init_masks/<id>.png`.

use std::path::{Path, PathBuf};

use crate::error::DatasetError;
use crate::raster::io::{load_mask, load_rgb};
use crate::raster::{BinaryMask, ImagePlanes};

/// Ground-truth masks with fewer true pixels are skipped.
pub const MIN_MASK_PIXELS: usize = 300;

const IMAGE_EXTENSIONS: [&str; 3] = ["png", "jpg", "jpeg"];

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SampleEntry {
    pub id: String,
    pub image: PathBuf,
    pub mask: PathBuf,
    pub init_mask: PathBuf,
}

#[derive(Clone, Debug)]
pub struct Sample {
    pub id: String,
    pub image: ImagePlanes,
    pub gt: BinaryMask,
    pub init_mask: Option<BinaryMask>,
}

/// Index of a dataset root. Files are decoded lazily by [`SampleEntry::load`].
#[derive(Clone, Debug)]
pub struct Dataset {
    pub root: PathBuf,
    pub entries: Vec<SampleEntry>,
}

fn read_dir_sorted(dir: &Path) -> Result<Vec<PathBuf>, DatasetError> {
    let rd = std::fs::read_dir(dir).map_err(|source| DatasetError::Io { path: dir.to_path_buf(), source })?;
    let mut paths: Vec<PathBuf> = rd.filter_map(|e| e.ok().map(|e| e.path())).collect();
    paths.sort();
    Ok(paths)
}

impl Dataset {
    /// Pairs every image with the mask of the same stem; images without a mask
    /// are ignored with a warning.
    pub fn open(root: impl AsRef<Path>) -> Result<Self, DatasetError> {
        let root = root.as_ref().to_path_buf();
        let images = root.join("images");
        let masks = root.join("masks");
        for dir in [&images, &masks] {
            if !dir.is_dir() {
                return Err(DatasetError::MissingDir(dir.clone()));
            }
        }
        let mut entries = Vec::new();
        for path in read_dir_sorted(&images)? {
            let ext = path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase);
            if !ext.is_some_and(|e| IMAGE_EXTENSIONS.contains(&e.as_str())) {
                continue;
            }
            let Some(id) = path.file_stem().and_then(|s| s.to_str()).map(str::to_string) else {
                continue;
            };
            let mask = masks.join(format!("{id}.png"));
            if !mask.is_file() {
                log::warn!("skipping {id}: no mask at {}", mask.display());
                continue;
            }
            let init_mask = root.join("init_masks").join(format!("{id}.png"));
            entries.push(SampleEntry { id, image: path, mask, init_mask });
        }
        Ok(Self { root, entries })
    }

    /// Loads every usable sample in id order, skipping small or unreadable ones.
    pub fn iter(&self, with_init: bool) -> impl Iterator<Item = Result<Sample, DatasetError>> + '_ {
        self.entries.iter().filter_map(move |e| e.load(with_init).transpose())
    }
}

impl SampleEntry {
    /// Decodes the sample. `Ok(None)` means it was skipped: an unreadable file
    /// or a ground truth under [`MIN_MASK_PIXELS`]. Mismatched dimensions and,
    /// when `with_init` is set, a missing initial mask are hard errors.
    pub fn load(&self, with_init: bool) -> Result<Option<Sample>, DatasetError> {
        let rgb = match load_rgb(&self.image) {
            Ok(img) => img,
            Err(e) => {
                log::warn!("skipping {}: cannot read {}: {e}", self.id, self.image.display());
                return Ok(None);
            }
        };
        let gt = match load_mask(&self.mask) {
            Ok(m) => m,
            Err(e) => {
                log::warn!("skipping {}: cannot read {}: {e}", self.id, self.mask.display());
                return Ok(None);
            }
        };
        let dims = (rgb.width() as usize, rgb.height() as usize);
        let check = |m: &BinaryMask, path: &Path| {
            if m.dims() != dims {
                return Err(DatasetError::DimensionMismatch {
                    id: self.id.clone(),
                    image: dims,
                    mask: path.to_path_buf(),
                    mask_dims: m.dims(),
                });
            }
            Ok(())
        };
        check(&gt, &self.mask)?;
        if gt.count() < MIN_MASK_PIXELS {
            log::info!("skipping {}: mask has {} pixels (< {MIN_MASK_PIXELS})", self.id, gt.count());
            return Ok(None);
        }
        let init_mask = if with_init {
            if !self.init_mask.is_file() {
                return Err(DatasetError::MissingInitMask { id: self.id.clone(), path: self.init_mask.clone() });
            }
            let m = load_mask(&self.init_mask).map_err(|e| DatasetError::Io {
                path: self.init_mask.clone(),
                source: std::io::Error::new(std::io::ErrorKind::InvalidData, e.to_string()),
            })?;
            check(&m, &self.init_mask)?;
            Some(m)
        } else {
            None
        };
        Ok(Some(Sample { id: self.id.clone(), image: ImagePlanes::from_rgb(&rgb), gt, init_mask }))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::io::save_mask;
    use crate::raster::BBox;
    use image::RgbImage;

    fn write_sample(root: &Path, id: &str, (w, h): (usize, usize), mask: &BinaryMask) {
        std::fs::create_dir_all(root.join("images")).unwrap();
        std::fs::create_dir_all(root.join("masks")).unwrap();
        RgbImage::new(w as u32, h as u32).save(root.join("images").join(format!("{id}.png"))).unwrap();
        save_mask(mask, root.join("masks").join(format!("{id}.png"))).unwrap();
    }

    #[test]
    fn small_masks_are_skipped_boundary_inclusive() {
        let dir = tempfile::tempdir().unwrap();
        let mut m299 = BinaryMask::from_box(40, 40, BBox::new(0, 0, 30, 10));
        m299.set(0, 0, false);
        write_sample(dir.path(), "a299", (40, 40), &m299);
        write_sample(dir.path(), "b300", (40, 40), &BinaryMask::from_box(40, 40, BBox::new(0, 0, 30, 10)));
        let ds = Dataset::open(dir.path()).unwrap();
        assert_eq!(ds.entries.len(), 2);
        let ids: Vec<String> = ds.iter(false).map(|s| s.unwrap().id).collect();
        assert_eq!(ids, vec!["b300"]);
    }

    #[test]
    fn dimension_mismatch_is_hard_error() {
        let dir = tempfile::tempdir().unwrap();
        write_sample(dir.path(), "x", (40, 40), &BinaryMask::filled(30, 40));
        let ds = Dataset::open(dir.path()).unwrap();
        assert!(matches!(ds.iter(false).next(), Some(Err(DatasetError::DimensionMismatch { .. }))));
    }

    #[test]
    fn missing_dirs_and_init_masks() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(Dataset::open(dir.path()), Err(DatasetError::MissingDir(_))));
        write_sample(dir.path(), "x", (40, 40), &BinaryMask::filled(40, 40));
        let ds = Dataset::open(dir.path()).unwrap();
        assert!(ds.iter(false).next().unwrap().unwrap().init_mask.is_none());
        assert!(matches!(ds.iter(true).next(), Some(Err(DatasetError::MissingInitMask { .. }))));
    }
}
