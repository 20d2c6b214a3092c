use std::path::{Path, PathBuf};

use hmkit::body::{BodyShape, MotionSequence, PoseFrame, SkinnedBody, TemplateOptions};
use hmkit::fusion::{init_tumm_weights, tumm_forward, FeatureSequence};
use hmkit::io;
use hmkit::metrics::{evaluate, EvalReport};
use hmkit::optim::{initialize_from_sensors, optimize, HipEstimator, LidarFrames, LossBreakdown};
use hmkit::sync::{estimate_offset_with, resample_poses};
use hmkit::synth::{generate, perturb_motion, SynthSpec};
use log::{info, warn};
use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::config::PipelineConfig;
use crate::CliError;

pub const REFINED_MOTION_FILE: &str = "refined_motion.json";
pub const INITIAL_MOTION_FILE: &str = "initial_motion.json";
pub const HISTORY_FILE: &str = "loss_history.csv";
pub const REPORT_FILE: &str = "report.json";
pub const REPORT_CSV_FILE: &str = "report.csv";
pub const NO_GROUND_TRUTH: &str = "no ground truth";

fn default_body() -> Result<SkinnedBody, CliError> {
    Ok(SkinnedBody::procedural(&TemplateOptions::default())?)
}

/// Generates a synthetic capture into `out`. Nothing is written on failure.
pub fn cmd_synth(spec: &SynthSpec, out: &Path) -> Result<usize, CliError> {
    spec.validate()?;
    let body = default_body()?;
    let bundle = generate(spec, &body)?;
    io::write_staged(out, |dir| io::write_bundle(dir, &bundle, &body))?;
    Ok(bundle.gt_motion.len())
}

/// Loss terms switched off from the command line.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Ablation {
    pub no_contact: bool,
    pub no_smooth: bool,
    pub no_geo: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub frames: usize,
    /// Seconds added to the IMU clock.
    pub sync_offset: f64,
    pub iterations: usize,
    pub stalled: bool,
    pub initial_loss: LossBreakdown,
    pub final_loss: LossBreakdown,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub summary: RunSummary,
    pub ground_truth: bool,
    pub notice: Option<String>,
    pub initial: Option<EvalReport>,
    pub refined: Option<EvalReport>,
}

/// Fills frames whose cloud gave no estimate from the nearest frame that
/// did, preferring the earlier one on ties.
fn fill_gaps(estimates: Vec<Option<Vector3<f64>>>) -> Result<Vec<Vector3<f64>>, CliError> {
    let known: Vec<usize> = (0..estimates.len())
        .filter(|&i| estimates[i].is_some())
        .collect();
    if known.is_empty() {
        return Err(
            hmkit::Error::Validation("every LiDAR frame is empty; no hip centers".into()).into(),
        );
    }
    Ok((0..estimates.len())
        .map(|i| {
            let k = known.partition_point(|&k| k < i);
            let best = match (k.checked_sub(1).map(|j| known[j]), known.get(k)) {
                (Some(a), Some(&b)) if i - a <= b - i => a,
                (_, Some(&b)) => b,
                (Some(a), None) => a,
                (None, None) => unreachable!("known is non-empty"),
            };
            estimates[best].expect("known frame")
        })
        .collect())
}

/// Synchronize, initialize, refine and evaluate; outputs are written to
/// `config.output` only once everything has succeeded.
pub fn cmd_run(config: &PipelineConfig, ablation: Ablation) -> Result<RunReport, CliError> {
    config.validate()?;
    let bundle = io::read_bundle(&config.bundle)?;
    let m = &bundle.manifest;

    let offset = estimate_offset_with(
        &bundle.lidar_height,
        "lidar height",
        &bundle.imu_height,
        "imu height",
        &config.sync.into(),
    )?;
    info!("IMU clock offset {offset:.4} s");
    let imu_times: Vec<f64> = bundle.imu_times.iter().map(|t| t + offset).collect();
    let imu_frames: Vec<PoseFrame> = bundle
        .imu_poses
        .iter()
        .map(|p| PoseFrame {
            translation: Vector3::zeros(),
            pose: *p,
        })
        .collect();
    let frame_times: Vec<f64> = (0..m.frame_count)
        .map(|i| i as f64 / m.frame_rate)
        .collect();
    let synced = resample_poses(&imu_times, &imu_frames, &frame_times)?;

    let shape = BodyShape::new(m.spec.as_ref().map(|s| s.shape).unwrap_or_default())?;
    let shaped = bundle.body.shaped(&shape)?;
    let hips = HipEstimator::new(&shaped);
    let estimates = bundle
        .clouds
        .iter()
        .enumerate()
        .map(|(i, c)| match hips.estimate(c, &bundle.lidar_origin) {
            Ok(h) => Some(h),
            Err(e) => {
                warn!("frame {i}: {e}");
                None
            }
        })
        .collect();
    let hip_centers = fill_gaps(estimates)?;
    let poses: Vec<_> = synced.iter().map(|f| f.pose).collect();
    let mut initial = initialize_from_sensors(
        &poses,
        &bundle.calibration,
        &hip_centers,
        shape,
        m.frame_rate,
    )?;
    let (ts, ps) = config.perturbation.sigmas();
    if ts > 0.0 || ps > 0.0 {
        initial = perturb_motion(&initial, ts, ps, config.seed)?;
    }

    let mut optim = config.optim.clone();
    optim.seed = config.seed;
    if ablation.no_contact {
        optim.lambda_c = 0.0;
    }
    if ablation.no_smooth {
        optim.lambda_s = 0.0;
    }
    if ablation.no_geo {
        optim.lambda_g = 0.0;
    }
    let lidar = LidarFrames {
        clouds: bundle.clouds.clone(),
        origin: bundle.lidar_origin,
    };
    let result = optimize(&initial, &bundle.body, &bundle.scene, &lidar, &optim)?;
    let first = result
        .history
        .first()
        .expect("history starts with the initial row");
    let last = result.history.last().expect("history is non-empty");
    let summary = RunSummary {
        frames: m.frame_count,
        sync_offset: offset,
        iterations: result.history.len() - 1,
        stalled: result.stalled,
        initial_loss: first.loss,
        final_loss: last.loss,
    };

    let (ground_truth, notice, initial_eval, refined_eval) =
        match (&bundle.gt_motion, config.metrics.enabled) {
            (Some(gt), true) => {
                let init_eval = if config.metrics.include_initial {
                    Some(evaluate(&initial, gt, &bundle.body)?)
                } else {
                    None
                };
                (
                    true,
                    None,
                    init_eval,
                    Some(evaluate(&result.motion, gt, &bundle.body)?),
                )
            }
            (Some(_), false) => (true, Some("metrics disabled".to_string()), None, None),
            (None, _) => {
                warn!("bundle has no ground-truth motion; metrics skipped");
                (false, Some(NO_GROUND_TRUTH.to_string()), None, None)
            }
        };
    let report = RunReport {
        summary,
        ground_truth,
        notice,
        initial: initial_eval,
        refined: refined_eval,
    };

    let report_text =
        serde_json::to_string_pretty(&report).map_err(|e| CliError::Config(e.to_string()))?;
    io::write_staged(&config.output, |dir| {
        io::write_motion(&dir.join(REFINED_MOTION_FILE), &result.motion)?;
        io::write_motion(&dir.join(INITIAL_MOTION_FILE), &initial)?;
        io::write_text(
            &dir.join(HISTORY_FILE),
            &io::history_to_csv(&result.history),
        )?;
        io::write_text(&dir.join(REPORT_FILE), &report_text)?;
        if let Some(r) = &report.refined {
            io::write_text(&dir.join(REPORT_CSV_FILE), &io::report_to_csv(r))?;
        }
        Ok(())
    })?;
    Ok(report)
}

/// Evaluates a predicted motion file against a ground-truth one, using the
/// body file when given and the procedural template otherwise.
pub fn cmd_eval(pred: &Path, gt: &Path, body: Option<&Path>) -> Result<EvalReport, CliError> {
    let body = match body {
        Some(p) => io::read_body(p)?,
        None => default_body()?,
    };
    let pred: MotionSequence = io::read_motion(pred)?;
    let gt = io::read_motion(gt)?;
    Ok(evaluate(&pred, &gt, &body)?)
}

#[derive(Debug, Clone)]
pub struct FuseDemoOptions {
    /// Directory with `lidar.csv`, `rgb.csv` and `event.csv`.
    pub features_dir: PathBuf,
    pub seed: u64,
    /// Binary weights file; seeded random weights otherwise.
    pub weights: Option<PathBuf>,
    /// Zero every residual output projection.
    pub residual_zero: bool,
    pub out: PathBuf,
}

pub const FEATURE_FILES: [&str; 3] = ["lidar.csv", "rgb.csv", "event.csv"];

pub fn cmd_fuse_demo(opts: &FuseDemoOptions) -> Result<FeatureSequence, CliError> {
    let [lidar, rgb, event] = FEATURE_FILES.map(|f| io::read_features(&opts.features_dir.join(f)));
    let (lidar, rgb, event) = (lidar?, rgb?, event?);
    for (name, f) in [("rgb", &rgb), ("event", &event)] {
        if (f.frames(), f.dim()) != (lidar.frames(), lidar.dim()) {
            return Err(hmkit::Error::Validation(format!(
                "{name} features are {}x{}, lidar features {}x{}",
                f.frames(),
                f.dim(),
                lidar.frames(),
                lidar.dim()
            ))
            .into());
        }
    }
    let mut weights = match &opts.weights {
        Some(p) => io::read_tumm_weights(p)?,
        None => init_tumm_weights(lidar.dim(), opts.seed)?,
    };
    if opts.residual_zero {
        weights.zero_residual_outputs();
    }
    let fused = tumm_forward(&lidar, &rgb, &event, &weights)?;
    let name = opts
        .out
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    let tmp = opts.out.with_file_name(format!(".{name}.partial"));
    io::write_features(&tmp, &fused)?;
    std::fs::rename(&tmp, &opts.out).map_err(hmkit::Error::from)?;
    Ok(fused)
}
