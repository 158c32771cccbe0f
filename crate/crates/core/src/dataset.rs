//! Raster I/O and dataset directories.

use std::path::{Path, PathBuf};

use image::{DynamicImage, GrayImage};

use crate::error::{Error, Result};
use crate::Image;

/// ITU-R BT.601 luma weights.
pub const LUMA_WEIGHTS: [f64; 3] = [0.299, 0.587, 0.114];

const RASTER_EXTENSIONS: [&str; 5] = ["png", "pgm", "ppm", "pnm", "pbm"];

/// Loads an 8-bit PNG or PNM raster; color input is reduced to luma.
pub fn load_image(path: impl AsRef<Path>) -> Result<Image> {
    let path = path.as_ref();
    if !path.exists() {
        return Err(Error::io(
            path,
            std::io::Error::new(std::io::ErrorKind::NotFound, "no such file"),
        ));
    }
    let decoded = image::open(path).map_err(|source| Error::Decode {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(from_dynamic(&decoded))
}

fn from_dynamic(img: &DynamicImage) -> Image {
    let (w, h) = (img.width() as usize, img.height() as usize);
    if img.color().has_color() {
        let rgb = img.to_rgb8();
        let data = rgb
            .pixels()
            .map(|p| {
                LUMA_WEIGHTS[0] * p[0] as f64
                    + LUMA_WEIGHTS[1] * p[1] as f64
                    + LUMA_WEIGHTS[2] * p[2] as f64
            })
            .collect();
        Image::new(w, h, data).expect("decoded dimensions")
    } else {
        let gray = img.to_luma8();
        Image::new(w, h, gray.pixels().map(|p| p[0] as f64).collect()).expect("decoded dimensions")
    }
}

/// Rounds and clamps to 8 bits and writes PNG or PGM according to the file
/// extension.
pub fn save_image(img: &Image, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = img
        .as_slice()
        .iter()
        .map(|v| v.round().clamp(0.0, 255.0) as u8)
        .collect();
    let gray = GrayImage::from_raw(img.width() as u32, img.height() as u32, bytes)
        .expect("buffer matches dimensions");
    gray.save(path).map_err(|source| Error::Decode {
        path: path.to_path_buf(),
        source,
    })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DatasetName {
    Set12,
    Set14,
    Bsd68,
    Custom(String),
}

impl DatasetName {
    pub fn from_label(label: &str) -> Self {
        match label.to_ascii_lowercase().as_str() {
            "set12" => DatasetName::Set12,
            "set14" => DatasetName::Set14,
            "bsd68" => DatasetName::Bsd68,
            _ => DatasetName::Custom(label.to_string()),
        }
    }

    pub fn label(&self) -> &str {
        match self {
            DatasetName::Set12 => "Set12",
            DatasetName::Set14 => "Set14",
            DatasetName::Bsd68 => "BSD68",
            DatasetName::Custom(s) => s,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetSpec {
    pub name: DatasetName,
    pub root: PathBuf,
    /// File-name glob, e.g. `*.png`.
    pub pattern: String,
    /// Reduce color rasters to luma; without it a color file is an error.
    pub grayscale: bool,
}

impl DatasetSpec {
    /// Every raster in `root`, named after the directory, with luma
    /// conversion enabled.
    pub fn from_dir(root: impl Into<PathBuf>) -> Self {
        let root = root.into();
        let label = root
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_else(|| "dataset".into());
        Self {
            name: DatasetName::from_label(&label),
            root,
            pattern: "*".into(),
            grayscale: true,
        }
    }

    /// Matching file paths sorted by file name.
    pub fn files(&self) -> Result<Vec<PathBuf>> {
        let pattern = glob::Pattern::new(&self.pattern)
            .map_err(|e| Error::Config(format!("bad file pattern {:?}: {e}", self.pattern)))?;
        let entries = std::fs::read_dir(&self.root).map_err(|e| Error::io(&self.root, e))?;
        let mut files = Vec::new();
        for entry in entries {
            let path = entry.map_err(|e| Error::io(&self.root, e))?.path();
            let name = match path.file_name() {
                Some(n) => n.to_string_lossy().into_owned(),
                None => continue,
            };
            let ext_ok = path
                .extension()
                .map(|e| {
                    RASTER_EXTENSIONS.contains(&e.to_string_lossy().to_ascii_lowercase().as_str())
                })
                .unwrap_or(false);
            if path.is_file() && ext_ok && pattern.matches(&name) {
                files.push(path);
            }
        }
        files.sort_by(|a, b| a.file_name().cmp(&b.file_name()));
        if files.is_empty() {
            return Err(Error::Config(format!(
                "no images matching {:?} in {}",
                self.pattern,
                self.root.display()
            )));
        }
        Ok(files)
    }

    /// `(file name, image)` pairs in file-name order.
    pub fn load(&self) -> Result<Vec<(String, Image)>> {
        self.files()?
            .into_iter()
            .map(|path| {
                if !self.grayscale {
                    let decoded = image::open(&path).map_err(|source| Error::Decode {
                        path: path.clone(),
                        source,
                    })?;
                    if decoded.color().has_color() {
                        return Err(Error::Config(format!(
                            "{} is a color image; enable grayscale conversion",
                            path.display()
                        )));
                    }
                }
                let name = path
                    .file_name()
                    .map(|n| n.to_string_lossy().into_owned())
                    .unwrap_or_default();
                Ok((name, load_image(&path)?))
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use image::{Rgb, RgbImage};

    #[test]
    fn red_becomes_luma() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("red.png");
        RgbImage::from_pixel(3, 2, Rgb([255, 0, 0]))
            .save(&path)
            .unwrap();
        let img = load_image(&path).unwrap();
        assert_eq!((img.width(), img.height()), (3, 2));
        for v in img.as_slice() {
            assert!((v - 76.245).abs() < 1e-9);
        }
    }

    #[test]
    fn gray_round_trip_png_and_pgm() {
        let dir = tempfile::tempdir().unwrap();
        let img = Image::from_fn(7, 5, |x, y| (x * 30 + y) as f64);
        for name in ["a.png", "a.pgm"] {
            let p = dir.path().join(name);
            save_image(&img, &p).unwrap();
            assert_eq!(load_image(&p).unwrap(), img);
        }
    }

    #[test]
    fn missing_file_is_io_error() {
        let err = load_image("/nonexistent/x.png").unwrap_err();
        assert!(matches!(err, Error::Io { .. }));
        assert!(err.to_string().contains("/nonexistent/x.png"));
    }

    #[test]
    fn undecodable_file_is_reported_with_path() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("junk.png");
        std::fs::write(&p, b"not a png").unwrap();
        assert!(matches!(load_image(&p), Err(Error::Decode { .. })));
    }

    #[test]
    fn dataset_listing_is_sorted_and_filtered() {
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path().join("Set12");
        std::fs::create_dir(&root).unwrap();
        for name in ["b.png", "a.png", "c.pgm"] {
            save_image(&Image::filled(4, 4, 9.0), root.join(name)).unwrap();
        }
        std::fs::write(root.join("notes.txt"), "x").unwrap();
        let spec = DatasetSpec::from_dir(&root);
        assert_eq!(spec.name, DatasetName::Set12);
        let names: Vec<String> = spec.load().unwrap().into_iter().map(|(n, _)| n).collect();
        assert_eq!(names, ["a.png", "b.png", "c.pgm"]);

        let only_png = DatasetSpec {
            pattern: "*.png".into(),
            ..spec
        };
        assert_eq!(only_png.files().unwrap().len(), 2);
    }

    #[test]
    fn color_requires_conversion_flag() {
        let dir = tempfile::tempdir().unwrap();
        RgbImage::from_pixel(2, 2, Rgb([1, 2, 3]))
            .save(dir.path().join("c.png"))
            .unwrap();
        let mut spec = DatasetSpec::from_dir(dir.path());
        assert!(spec.load().is_ok());
        spec.grayscale = false;
        assert!(matches!(spec.load(), Err(Error::Config(_))));
    }

    #[test]
    fn empty_directory_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        assert!(DatasetSpec::from_dir(dir.path()).files().is_err());
    }
}
