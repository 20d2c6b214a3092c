//! Evaluation metrics over predicted vs ground-truth motions.
//!
//! Local metrics (MPJPE, PVE, PCK0.3) compare skeletons after subtracting
//! each one's root position; PA-MPJPE additionally applies a per-frame
//! similarity Procrustes fit; GMPJPE and T-Error compare world positions
//! with no alignment. Distances are reported in millimeters.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::body::{MotionSequence, SkinnedBody, NUM_JOINTS};
use crate::error::{Error, Result};
use crate::geometry::procrustes_align;

/// PCK0.3 threshold on 3D joint error; the boundary counts as correct.
pub const PCK_THRESHOLD_MM: f64 = 300.0;

const MM: f64 = 1000.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub frame_count: usize,
    pub mpjpe: f64,
    pub pa_mpjpe: f64,
    pub pve: f64,
    pub pck03: f64,
    /// mm/s^2; `None` with fewer than three frames.
    pub accel: Option<f64>,
    pub gmpjpe: f64,
    pub t_error: f64,
}

impl EvalReport {
    pub const CSV_HEADER: &'static str = "frames,mpjpe,pa_mpjpe,pve,pck03,accel,gmpjpe,t_error";

    /// One CSV row matching [`EvalReport::CSV_HEADER`]; ACCEL is empty when
    /// undefined.
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{}",
            self.frame_count,
            self.mpjpe,
            self.pa_mpjpe,
            self.pve,
            self.pck03,
            self.accel.map(|a| a.to_string()).unwrap_or_default(),
            self.gmpjpe,
            self.t_error
        )
    }
}

type Joints = [Vector3<f64>; NUM_JOINTS];

pub fn evaluate(
    pred: &MotionSequence,
    gt: &MotionSequence,
    body: &SkinnedBody,
) -> Result<EvalReport> {
    pred.validate()?;
    gt.validate()?;
    if pred.len() != gt.len() {
        return Err(Error::validation(format!(
            "prediction has {} frames, ground truth {}",
            pred.len(),
            gt.len()
        )));
    }
    if (pred.frame_rate - gt.frame_rate).abs() > 1e-9 * gt.frame_rate {
        return Err(Error::validation(format!(
            "frame rates differ: {} vs {}",
            pred.frame_rate, gt.frame_rate
        )));
    }
    let root = body.root();
    let pred_body = body.shaped(&pred.shape)?;
    let gt_body = body.shaped(&gt.shape)?;

    let n = pred.len();
    let mut pj: Vec<Joints> = Vec::with_capacity(n);
    let mut gj: Vec<Joints> = Vec::with_capacity(n);
    let mut pve_sum = 0.0;
    let mut pve_count = 0usize;
    for (pf, gf) in pred.frames.iter().zip(&gt.frames) {
        let pp = pred_body.pose(pf);
        let gp = gt_body.pose(gf);
        let pv = pred_body.skin(&pp);
        let gv = gt_body.skin(&gp);
        let (pr, gr) = (pp.joints[root], gp.joints[root]);
        for (a, b) in pv.iter().zip(&gv) {
            pve_sum += ((a - pr) - (b - gr)).norm();
        }
        pve_count += pv.len();
        pj.push(pp.joints);
        gj.push(gp.joints);
    }

    let mut local_sum = 0.0;
    let mut global_sum = 0.0;
    let mut pa_sum = 0.0;
    let mut t_sum = 0.0;
    let mut correct = 0usize;
    for (p, g) in pj.iter().zip(&gj) {
        for j in 0..NUM_JOINTS {
            let local = ((p[j] - p[root]) - (g[j] - g[root])).norm() * MM;
            local_sum += local;
            if local <= PCK_THRESHOLD_MM {
                correct += 1;
            }
            global_sum += (p[j] - g[j]).norm() * MM;
        }
        t_sum += (p[root] - g[root]).norm() * MM;
        let sim = procrustes_align(p, g)?;
        pa_sum += p
            .iter()
            .zip(g)
            .map(|(a, b)| (sim.apply(a) - b).norm() * MM)
            .sum::<f64>();
    }
    let joint_count = (n * NUM_JOINTS) as f64;
    let accel = if n >= 3 {
        Some(accel_error(&pj, &gj, gt.frame_rate)?)
    } else {
        None
    };
    Ok(EvalReport {
        frame_count: n,
        mpjpe: local_sum / joint_count,
        pa_mpjpe: pa_sum / joint_count,
        pve: pve_sum / pve_count as f64 * MM,
        pck03: correct as f64 / joint_count,
        accel,
        gmpjpe: global_sum / joint_count,
        t_error: t_sum / n as f64,
    })
}

/// Mean `|a_pred - a_gt|` over interior frames and joints, where
/// `a(i) = (x(i+1) - 2x(i) + x(i-1)) * rate^2`; returned in mm/s^2.
pub fn accel_error<P, G>(pred: &[P], gt: &[G], frame_rate: f64) -> Result<f64>
where
    P: AsRef<[Vector3<f64>]>,
    G: AsRef<[Vector3<f64>]>,
{
    if pred.len() != gt.len() {
        return Err(Error::validation("accel_error needs equal frame counts"));
    }
    if pred.len() < 3 {
        return Err(Error::validation(format!(
            "accel_error needs at least 3 frames, got {}",
            pred.len()
        )));
    }
    if !(frame_rate.is_finite() && frame_rate > 0.0) {
        return Err(Error::validation("frame rate must be positive"));
    }
    let k = pred[0].as_ref().len();
    if pred
        .iter()
        .map(|f| f.as_ref().len())
        .chain(gt.iter().map(|f| f.as_ref().len()))
        .any(|l| l != k)
    {
        return Err(Error::validation("every frame needs the same joint count"));
    }
    let r2 = frame_rate * frame_rate;
    let mut sum = 0.0;
    for i in 1..pred.len() - 1 {
        let (p0, p1, p2) = (pred[i - 1].as_ref(), pred[i].as_ref(), pred[i + 1].as_ref());
        let (g0, g1, g2) = (gt[i - 1].as_ref(), gt[i].as_ref(), gt[i + 1].as_ref());
        for j in 0..k {
            let ap = (p2[j] - 2.0 * p1[j] + p0[j]) * r2;
            let ag = (g2[j] - 2.0 * g1[j] + g0[j]) * r2;
            sum += (ap - ag).norm();
        }
    }
    Ok(sum / ((pred.len() - 2) * k) as f64 * MM)
}

/// Fraction of root-aligned joint errors at or under `threshold_mm`.
pub fn pck<P, G>(pred: &[P], gt: &[G], root: usize, threshold_mm: f64) -> f64
where
    P: AsRef<[Vector3<f64>]>,
    G: AsRef<[Vector3<f64>]>,
{
    let mut total = 0usize;
    let mut correct = 0usize;
    for (p, g) in pred.iter().zip(gt) {
        let (p, g) = (p.as_ref(), g.as_ref());
        for (a, b) in p.iter().zip(g) {
            total += 1;
            if ((a - p[root]) - (b - g[root])).norm() * MM <= threshold_mm {
                correct += 1;
            }
        }
    }
    correct as f64 / total.max(1) as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::body::{BodyShape, PoseFrame, TemplateOptions};

    fn body() -> SkinnedBody {
        SkinnedBody::procedural(&TemplateOptions::default()).unwrap()
    }

    fn motion(n: usize) -> MotionSequence {
        let frames = (0..n)
            .map(|i| {
                let t = i as f64 / 20.0;
                let mut f = PoseFrame::rest_at(Vector3::new(0.3 * t, 0.0, 0.95));
                f.pose[0] = Vector3::new(0.0, 0.0, 0.2 * t);
                f.pose[16] = Vector3::new(0.0, 0.3 * (3.0 * t).sin(), 0.0);
                f.pose[4] = Vector3::new(0.4 * (2.0 * t).sin().abs(), 0.0, 0.0);
                f
            })
            .collect();
        MotionSequence::new(frames, BodyShape::zero(), 20.0).unwrap()
    }

    #[test]
    fn identical_motions() {
        let b = body();
        let m = motion(10);
        let r = evaluate(&m, &m, &b).unwrap();
        assert_eq!(
            (r.mpjpe, r.pa_mpjpe, r.pve, r.gmpjpe, r.t_error),
            (0.0, r.pa_mpjpe, 0.0, 0.0, 0.0)
        );
        assert!(r.pa_mpjpe < 1e-9);
        assert_eq!(r.accel, Some(0.0));
        assert_eq!(r.pck03, 1.0);
    }

    #[test]
    fn constant_root_offset() {
        let b = body();
        let gt = motion(10);
        let mut pred = gt.clone();
        for f in &mut pred.frames {
            f.translation.x += 0.1;
        }
        let r = evaluate(&pred, &gt, &b).unwrap();
        assert!(r.mpjpe < 1e-9 && r.pa_mpjpe < 1e-9 && r.pve < 1e-9);
        assert!(r.accel.unwrap() < 1e-6);
        assert!((r.gmpjpe - 100.0).abs() < 1e-9);
        assert!((r.t_error - 100.0).abs() < 1e-9);
        assert_eq!(r.pck03, 1.0);
    }

    #[test]
    fn one_displaced_leaf_joint() {
        let b = body();
        let gt = motion(6);
        let mut pred = gt.clone();
        // rotate the left wrist so the left hand joint (0.09 m away) moves 30 mm
        let len = (b.rest_joints()[22] - b.rest_joints()[20]).norm();
        let angle = 2.0 * (0.03 / (2.0 * len)).asin();
        for f in &mut pred.frames {
            f.pose[20] = Vector3::new(0.0, 0.0, angle);
        }
        let r = evaluate(&pred, &gt, &b).unwrap();
        assert!((r.mpjpe - 1.25).abs() < 1e-9, "{}", r.mpjpe);
        assert_eq!(r.pck03, 1.0);
    }

    #[test]
    fn mismatched_lengths_are_rejected() {
        let b = body();
        assert!(evaluate(&motion(5), &motion(6), &b).is_err());
        let mut m = motion(5);
        m.frame_rate = 30.0;
        assert!(evaluate(&m, &motion(5), &b).is_err());
    }

    #[test]
    fn accel_of_quadratic_drift() {
        let rate = 20.0;
        let c = 0.001;
        let gt: Vec<Vec<Vector3<f64>>> = (0..10)
            .map(|i| vec![Vector3::new(i as f64 * 0.1, 0.0, 1.0)])
            .collect();
        let pred: Vec<Vec<Vector3<f64>>> = gt
            .iter()
            .enumerate()
            .map(|(i, f)| {
                let t = i as f64 / rate;
                vec![f[0] + Vector3::new(0.0, 0.0, 0.5 * c * t * t)]
            })
            .collect();
        assert!((accel_error(&pred, &gt, rate).unwrap() - 1.0).abs() < 1e-9);
        assert!(accel_error(&gt, &gt, rate).unwrap() == 0.0);
        assert!(accel_error(&pred[..2], &gt[..2], rate).is_err());
        // one interior frame
        let a = accel_error(&pred[..3], &gt[..3], rate).unwrap();
        assert!((a - 1.0).abs() < 1e-9);
    }

    #[test]
    fn csv_row_has_header_arity() {
        let b = body();
        let m = motion(4);
        let r = evaluate(&m, &m, &b).unwrap();
        assert_eq!(
            r.csv_row().split(',').count(),
            EvalReport::CSV_HEADER.split(',').count()
        );
    }
}
