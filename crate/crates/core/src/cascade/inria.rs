//! Ingestion of INRIA-person style datasets.
//!
//! Expected layout of a split directory (e.g. `Train/`):
//!
//! ```text
//! Train/annotations/*.txt   one file per positive image
//! Train/pos/*.png           positive images
//! Train/neg/*.{png,ppm}     pedestrian-free images
//! ```
//!
//! Annotation files contain `Image filename : "Train/pos/x.png"` and lines such as
//! `Bounding box for object 1 "PASperson" (Xmin, Ymin) - (Xmax, Ymax) : (94, 84) - (184, 357)`.

use std::fs;
use std::path::{Path, PathBuf};

use super::AnnotatedImage;
use crate::acf::BoundingBox;
use crate::imageproc::io::load_image;
use crate::imageproc::Image;
use crate::{Error, Result};

fn parse_pair(s: &str) -> Option<(f64, f64)> {
    let s = s.trim().strip_prefix('(')?.strip_suffix(')')?;
    let (a, b) = s.split_once(',')?;
    Some((a.trim().parse().ok()?, b.trim().parse().ok()?))
}

/// Returns the image filename (if present) and every annotated box.
pub fn parse_inria_annotation(text: &str) -> Result<(Option<String>, Vec<BoundingBox>)> {
    let mut filename = None;
    let mut boxes = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.starts_with("Image filename") {
            if let Some((_, rest)) = line.split_once(':') {
                filename = Some(rest.trim().trim_matches('"').to_string());
            }
        } else if line.starts_with("Bounding box for object") {
            let bad = || Error::format("annotation", format!("line {}: malformed bounding box", n + 1));
            let (_, coords) = line.rsplit_once(':').ok_or_else(bad)?;
            let (a, b) = coords.split_once('-').ok_or_else(bad)?;
            let (x0, y0) = parse_pair(a).ok_or_else(bad)?;
            let (x1, y1) = parse_pair(b).ok_or_else(bad)?;
            boxes.push(BoundingBox::new(x0, y0, x1 - x0, y1 - y0)?);
        }
    }
    Ok((filename, boxes))
}

fn sorted_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file())
        .collect();
    files.sort();
    Ok(files)
}

/// Loads annotated positives and negative images from a split directory.
pub fn load_inria(split_dir: &Path) -> Result<(Vec<AnnotatedImage>, Vec<Image>)> {
    let root = split_dir.parent().unwrap_or(split_dir);
    let mut positives = Vec::new();
    for ann in sorted_files(&split_dir.join("annotations"))? {
        let (name, boxes) = parse_inria_annotation(&fs::read_to_string(&ann)?)?;
        let stem = ann.file_stem().and_then(|s| s.to_str()).unwrap_or_default().to_string();
        let mut candidates = Vec::new();
        if let Some(name) = &name {
            candidates.push(root.join(name));
            if let Some(base) = Path::new(name).file_name() {
                candidates.push(split_dir.join("pos").join(base));
            }
        }
        candidates.push(split_dir.join("pos").join(format!("{stem}.png")));
        let path = candidates
            .into_iter()
            .find(|p| p.is_file())
            .ok_or_else(|| Error::invalid(format!("no image found for annotation {}", ann.display())))?;
        positives.push(AnnotatedImage {
            image: load_image(&path)?,
            boxes,
        });
    }
    let negatives = sorted_files(&split_dir.join("neg"))?
        .iter()
        .map(load_image)
        .collect::<Result<Vec<_>>>()?;
    Ok((positives, negatives))
}
