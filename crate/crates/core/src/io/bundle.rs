use std::path::{Path, PathBuf};

use log::warn;
use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use super::{
    body::{read_body, write_body},
    motion::{read_motion, write_motion},
    ply::{read_cloud, read_mesh, write_cloud, write_mesh},
    read_text, tables, write_text,
};
use crate::body::{MotionSequence, SkinnedBody, NUM_JOINTS};
use crate::error::{Error, Result};
use crate::geometry::{PointCloud, TriangleMesh};
use crate::optim::CalibrationMatrix;
use crate::sync::{EventStream, SampledSeries};
use crate::synth::{SynthBundle, SynthSpec};

pub const BUNDLE_FORMAT_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";

/// File names relative to the bundle directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BundleFiles {
    /// Absent for captures without ground truth.
    pub gt_motion: Option<String>,
    pub body: String,
    pub clouds_dir: String,
    pub events: String,
    pub imu_poses: String,
    pub imu_height: String,
    pub lidar_height: String,
    pub scene: String,
}

impl Default for BundleFiles {
    fn default() -> Self {
        Self {
            gt_motion: Some("gt_motion.json".into()),
            body: "body.json".into(),
            clouds_dir: "clouds".into(),
            events: "events.csv".into(),
            imu_poses: "imu_poses.csv".into(),
            imu_height: "imu_height.csv".into(),
            lidar_height: "lidar_height.csv".into(),
            scene: "scene.ply".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BundleManifest {
    pub version: u32,
    pub seed: u64,
    /// Generator settings when the bundle is synthetic.
    pub spec: Option<SynthSpec>,
    pub frame_count: usize,
    /// Hz.
    pub frame_rate: f64,
    /// Meters, world frame.
    pub lidar_origin: [f64; 3],
    /// Rows of the rough IMU-to-world rotation.
    pub calibration: [[f64; 3]; 3],
    /// Event sensor width and height in pixels.
    pub event_sensor: [u32; 2],
    pub files: BundleFiles,
}

/// Everything `run` needs from a capture directory.
#[derive(Debug, Clone)]
pub struct LoadedBundle {
    pub manifest: BundleManifest,
    pub body: SkinnedBody,
    pub gt_motion: Option<MotionSequence>,
    pub clouds: Vec<PointCloud>,
    pub lidar_origin: Vector3<f64>,
    pub imu_times: Vec<f64>,
    pub imu_poses: Vec<[Vector3<f64>; NUM_JOINTS]>,
    pub imu_height: SampledSeries,
    pub lidar_height: SampledSeries,
    pub events: EventStream,
    pub scene: TriangleMesh,
    pub calibration: CalibrationMatrix,
}

pub fn cloud_file_name(i: usize) -> String {
    format!("frame_{i:04}.ply")
}

pub fn write_bundle(dir: &Path, bundle: &SynthBundle, body: &SkinnedBody) -> Result<()> {
    let files = BundleFiles::default();
    let r = bundle.calibration.rotation();
    let manifest = BundleManifest {
        version: BUNDLE_FORMAT_VERSION,
        seed: bundle.spec.seed,
        spec: Some(bundle.spec.clone()),
        frame_count: bundle.gt_motion.len(),
        frame_rate: bundle.gt_motion.frame_rate,
        lidar_origin: bundle.lidar_origin.into(),
        calibration: std::array::from_fn(|i| std::array::from_fn(|j| r[(i, j)])),
        event_sensor: [bundle.events.width, bundle.events.height],
        files: files.clone(),
    };
    std::fs::create_dir_all(dir.join(&files.clouds_dir))?;
    let manifest_text = serde_json::to_string_pretty(&manifest)
        .map_err(|e| Error::parse("manifest", e.to_string()))?;
    write_text(&dir.join(MANIFEST_FILE), &manifest_text)?;
    if let Some(gt) = &files.gt_motion {
        write_motion(&dir.join(gt), &bundle.gt_motion)?;
    }
    write_body(&dir.join(&files.body), body)?;
    for (i, c) in bundle.lidar_clouds.iter().enumerate() {
        write_cloud(&dir.join(&files.clouds_dir).join(cloud_file_name(i)), c)?;
    }
    write_text(
        &dir.join(&files.events),
        &tables::events_to_csv(&bundle.events.events),
    )?;
    write_text(
        &dir.join(&files.imu_poses),
        &tables::imu_poses_to_csv(&bundle.imu_times, &bundle.imu_poses),
    )?;
    write_text(
        &dir.join(&files.imu_height),
        &tables::series_to_csv(&bundle.imu_height_series),
    )?;
    write_text(
        &dir.join(&files.lidar_height),
        &tables::series_to_csv(&bundle.lidar_height_series),
    )?;
    write_mesh(&dir.join(&files.scene), &bundle.scene)
}

pub fn read_manifest(dir: &Path) -> Result<BundleManifest> {
    let text = read_text(&dir.join(MANIFEST_FILE))?;
    let m: BundleManifest =
        serde_json::from_str(&text).map_err(|e| Error::parse("manifest", e.to_string()))?;
    if m.version != BUNDLE_FORMAT_VERSION {
        return Err(Error::parse(
            "manifest",
            format!("unsupported version {}", m.version),
        ));
    }
    Ok(m)
}

/// Loads a bundle directory. A missing ground-truth file is reported and
/// treated as a capture without ground truth.
pub fn read_bundle(dir: &Path) -> Result<LoadedBundle> {
    let manifest = read_manifest(dir)?;
    let f = &manifest.files;
    let path = |name: &str| -> PathBuf { dir.join(name) };
    let gt_motion = match &f.gt_motion {
        Some(name) if path(name).exists() => Some(read_motion(&path(name))?),
        Some(name) => {
            warn!("ground-truth motion {name} not found; continuing without it");
            None
        }
        None => None,
    };
    let clouds = (0..manifest.frame_count)
        .map(|i| read_cloud(&path(&f.clouds_dir).join(cloud_file_name(i))))
        .collect::<Result<Vec<_>>>()?;
    let (imu_times, imu_poses) = tables::imu_poses_from_csv(&read_text(&path(&f.imu_poses))?)?;
    let rows = manifest.calibration;
    let calibration = CalibrationMatrix::new(Matrix3::from_fn(|i, j| rows[i][j]))?;
    Ok(LoadedBundle {
        body: read_body(&path(&f.body))?,
        gt_motion,
        clouds,
        lidar_origin: Vector3::from(manifest.lidar_origin),
        imu_times,
        imu_poses,
        imu_height: tables::read_series(&path(&f.imu_height))?,
        lidar_height: tables::read_series(&path(&f.lidar_height))?,
        events: tables::read_events(
            &path(&f.events),
            manifest.event_sensor[0],
            manifest.event_sensor[1],
        )?,
        scene: read_mesh(&path(&f.scene))?,
        calibration,
        manifest,
    })
}
