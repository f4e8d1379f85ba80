//! On-disk records of a pipeline run and of a CNN training set.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use pednav_core::cascade::{write_detections, DatasetSpec};
use pednav_core::imageproc::io::{load_image, save_png};
use serde::{Deserialize, Serialize};

use crate::pipeline::FrameRecord;
use crate::{Error, Result};

pub const DETECTIONS_FILE: &str = "detections.txt";
pub const TRACKS_FILE: &str = "tracks.txt";
pub const PATHS_FILE: &str = "paths.csv";
pub const TIMING_FILE: &str = "timing.csv";

/// Writes the detection, track, path and timing logs of a run into `dir`.
/// Only the timing log depends on wall-clock time.
pub fn write_run(dir: &Path, records: &[FrameRecord]) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut dets = BufWriter::new(File::create(dir.join(DETECTIONS_FILE))?);
    let mut tracks = BufWriter::new(File::create(dir.join(TRACKS_FILE))?);
    let mut paths = BufWriter::new(File::create(dir.join(PATHS_FILE))?);
    let mut timing = BufWriter::new(File::create(dir.join(TIMING_FILE))?);
    writeln!(paths, "frame,robot_x,robot_y,replanned,cost,index,x,y")?;
    writeln!(timing, "frame,acf_time,cnn_time,total_time,fps,cnn_invocations")?;
    for r in records {
        write_detections(&mut dets, r.frame, &r.detections)?;
        for t in &r.tracks {
            writeln!(
                tracks,
                "{} {} {:.6} {:.6} {:.6} {:.6} {}",
                r.frame, t.id, t.position.x, t.position.y, t.velocity.0, t.velocity.1, t.status
            )?;
        }
        let head = format!("{},{:.4},{:.4},{}", r.frame, r.robot.x, r.robot.y, u8::from(r.replanned));
        match (&r.planned_path, r.path_cost) {
            (Some(wp), Some(cost)) => {
                for (i, p) in wp.iter().enumerate() {
                    writeln!(paths, "{head},{cost:.6},{i},{:.4},{:.4}", p.x, p.y)?;
                }
            }
            _ => writeln!(paths, "{head},,,,")?,
        }
        let t = &r.timing;
        writeln!(timing, "{},{:.6},{:.6},{:.6},{:.3},{}", r.frame, t.acf_time, t.cnn_time, t.total_time, t.fps, r.cnn_invocations)?;
    }
    for mut w in [dets, tracks, paths, timing] {
        w.flush()?;
    }
    Ok(())
}

#[derive(Debug, Serialize, Deserialize)]
struct DatasetIndex {
    positive_counts: [usize; 3],
    val_fraction: f64,
    positives: usize,
    negatives: usize,
}

/// Stores a training set as `positives/*.png`, `negatives/*.png` and an
/// `index.json` with the augmentation counts.
pub fn save_dataset(data: &DatasetSpec, dir: &Path) -> Result<()> {
    for (sub, imgs) in [("positives", &data.positives), ("negatives", &data.negatives)] {
        let d = dir.join(sub);
        fs::create_dir_all(&d)?;
        for (i, img) in imgs.iter().enumerate() {
            save_png(img, d.join(format!("{i:06}.png")))?;
        }
    }
    let index = DatasetIndex {
        positive_counts: data.positive_counts,
        val_fraction: data.val_fraction,
        positives: data.positives.len(),
        negatives: data.negatives.len(),
    };
    let text = serde_json::to_string_pretty(&index).map_err(|e| Error::Data(e.to_string()))?;
    fs::write(dir.join("index.json"), text)?;
    Ok(())
}

pub fn load_dataset(dir: &Path) -> Result<DatasetSpec> {
    let text = fs::read_to_string(dir.join("index.json"))?;
    let index: DatasetIndex = serde_json::from_str(&text).map_err(|e| Error::Data(format!("{}: {e}", dir.join("index.json").display())))?;
    let read = |sub: &str, n: usize| -> Result<Vec<_>> { (0..n).map(|i| Ok(load_image(dir.join(sub).join(format!("{i:06}.png")))?)).collect() };
    Ok(DatasetSpec {
        positives: read("positives", index.positives)?,
        negatives: read("negatives", index.negatives)?,
        positive_counts: index.positive_counts,
        val_fraction: index.val_fraction,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use pednav_core::imageproc::Image;

    #[test]
    fn dataset_survives_disk() {
        let dir = tempfile::tempdir().unwrap();
        let data = DatasetSpec {
            positives: vec![Image::filled(4, 4, &[1.0, 0.0, 0.0]); 3],
            negatives: vec![Image::filled(4, 4, &[0.0, 0.0, 1.0])],
            positive_counts: [1, 2, 3],
            val_fraction: 0.1,
        };
        save_dataset(&data, dir.path()).unwrap();
        let back = load_dataset(dir.path()).unwrap();
        assert_eq!(back.positives, data.positives);
        assert_eq!(back.negatives, data.negatives);
        assert_eq!(back.positive_counts, [1, 2, 3]);
        assert!(load_dataset(&dir.path().join("missing")).is_err());
    }
}
