use log::{debug, warn};
use nalgebra::{Matrix3, Vector3};
use rayon::prelude::*;

use super::{
    Descent, IterationRecord, LidarFrames, LossBreakdown, OptimConfig, OptimResult, Preconditioner,
};
use crate::body::rotation::{axis_angle_to_matrix, geodesic_angle};
use crate::body::{
    BodyShape, MotionSequence, PoseFrame, PosedSkeleton, ShapedBody, SkinnedBody, FRAME_PARAMS,
    NUM_JOINTS,
};
use crate::error::{Error, Result};
use crate::geometry::{
    capsule_overlap, dist2, hidden_point_removal, ChamferTarget, KdTree, TriangleMesh,
};

const MAX_HALVINGS: usize = 8;

#[derive(Debug, Clone)]
pub(super) struct FrameState {
    frame: PoseFrame,
    posed: PosedSkeleton,
    local: [Matrix3<f64>; NUM_JOINTS],
}

#[derive(Debug, Clone)]
pub(super) struct State {
    frames: Vec<FrameState>,
    /// Visible vertex indices per frame; `None` marks a skipped frame.
    visible: Vec<Option<Vec<usize>>>,
}

pub(super) struct Problem<'a> {
    shaped: ShapedBody<'a>,
    scene: Option<&'a TriangleMesh>,
    lidar: Option<&'a LidarFrames>,
    targets: Vec<Option<ChamferTarget>>,
    pairs: Vec<(usize, usize)>,
    config: OptimConfig,
}

impl<'a> Problem<'a> {
    pub(super) fn new(
        body: &'a SkinnedBody,
        shape: &BodyShape,
        scene: Option<&'a TriangleMesh>,
        lidar: Option<&'a LidarFrames>,
        config: &OptimConfig,
    ) -> Result<Self> {
        let targets = match lidar {
            Some(l) => l
                .clouds
                .iter()
                .map(|c| {
                    if c.is_empty() {
                        None
                    } else {
                        ChamferTarget::new(c.points.clone()).ok()
                    }
                })
                .collect(),
            None => Vec::new(),
        };
        if let Some(l) = lidar {
            if !l.origin.iter().all(|v| v.is_finite()) {
                return Err(Error::validation("lidar origin must be finite"));
            }
        }
        Ok(Self {
            shaped: body.shaped(shape)?,
            scene,
            lidar,
            targets,
            pairs: body.non_adjacent_bone_pairs(),
            config: config.clone(),
        })
    }

    fn check_frames(&self, n: usize) -> Result<()> {
        if let Some(l) = self.lidar {
            if l.clouds.len() != n {
                return Err(Error::validation(format!(
                    "{} lidar clouds for {n} motion frames",
                    l.clouds.len()
                )));
            }
        }
        Ok(())
    }

    fn frame_state(&self, frame: &PoseFrame) -> FrameState {
        let mut local = [Matrix3::identity(); NUM_JOINTS];
        for (m, aa) in local.iter_mut().zip(&frame.pose) {
            *m = axis_angle_to_matrix(aa);
        }
        FrameState {
            frame: *frame,
            posed: self.shaped.pose(frame),
            local,
        }
    }

    pub(super) fn state(&self, frames: &[PoseFrame]) -> State {
        State {
            frames: frames.par_iter().map(|f| self.frame_state(f)).collect(),
            visible: vec![None; frames.len()],
        }
    }

    fn use_contact(&self) -> bool {
        self.scene.is_some() && self.config.lambda_c > 0.0
    }

    fn use_geo(&self) -> bool {
        self.lidar.is_some() && self.config.lambda_g > 0.0
    }

    pub(super) fn refresh_visibility(&self, state: &mut State) {
        let Some(lidar) = self.lidar else { return };
        let gamma = self.config.hpr_gamma;
        state.visible = state
            .frames
            .par_iter()
            .enumerate()
            .map(|(i, fs)| {
                self.targets.get(i)?.as_ref()?;
                let verts = self.shaped.skin(&fs.posed);
                match hidden_point_removal(&verts, &lidar.origin, gamma) {
                    Ok(v) if !v.is_empty() => Some(v),
                    Ok(_) => {
                        warn!("frame {i}: no body vertex visible from the lidar, skipped");
                        None
                    }
                    Err(e) => {
                        warn!("frame {i}: visibility failed ({e}), skipped");
                        None
                    }
                }
            })
            .collect();
    }

    fn frame_contact(&self, verts: &[Vector3<f64>], posed: &PosedSkeleton) -> f64 {
        let Some(scene) = self.scene else { return 0.0 };
        let c = &self.config;
        let mut scene_sum = 0.0;
        if c.w_scene_contact > 0.0 {
            for v in verts {
                let d = scene.penetration_depth(v);
                scene_sum += d * d;
            }
        }
        let mut self_sum = 0.0;
        if c.w_self_contact > 0.0 {
            let caps = self.shaped.capsules(posed);
            for &(a, b) in &self.pairs {
                let o = capsule_overlap(&caps[a], &caps[b]);
                self_sum += o * o;
            }
        }
        c.w_scene_contact * scene_sum + c.w_self_contact * self_sum
    }

    fn frame_geo(
        &self,
        i: usize,
        verts: &[Vector3<f64>],
        visible: &[usize],
        buf: &mut Vec<Vector3<f64>>,
    ) -> f64 {
        buf.clear();
        buf.extend(visible.iter().map(|&k| verts[k]));
        self.targets[i].as_ref().map_or(0.0, |t| t.distance_to(buf))
    }

    pub(super) fn contact(&self, state: &State) -> f64 {
        let n = state.frames.len();
        let per: Vec<f64> = state
            .frames
            .par_iter()
            .map(|fs| self.frame_contact(&self.shaped.skin(&fs.posed), &fs.posed))
            .collect();
        per.iter().sum::<f64>() / n as f64
    }

    pub(super) fn geo(&self, state: &State) -> (f64, usize) {
        let per: Vec<Option<f64>> = state
            .frames
            .par_iter()
            .enumerate()
            .map(|(i, fs)| {
                let vis = state.visible[i].as_ref()?;
                let verts = self.shaped.skin(&fs.posed);
                Some(self.frame_geo(i, &verts, vis, &mut Vec::new()))
            })
            .collect();
        let used: Vec<f64> = per.iter().flatten().copied().collect();
        let skipped = per.len() - used.len();
        if used.is_empty() {
            return (0.0, skipped);
        }
        (used.iter().sum::<f64>() / used.len() as f64, skipped)
    }

    pub(super) fn smooth(&self, state: &State) -> f64 {
        let f = &state.frames;
        let n = f.len();
        let c = &self.config;
        let mut total = 0.0;
        if n >= 3 {
            let mut trans = 0.0;
            let mut joints = 0.0;
            for i in 1..n - 1 {
                trans += trans_accel2(&f[i - 1], &f[i], &f[i + 1]);
                joints += joint_accel2(&f[i - 1], &f[i], &f[i + 1]);
            }
            total += (c.w_trans * trans + c.w_joints * joints) / (n - 2) as f64;
        }
        if n >= 2 {
            let poses: f64 = f.windows(2).map(|w| rot_vel2(&w[0], &w[1])).sum();
            total += c.w_poses * poses / (n - 1) as f64;
        }
        total
    }

    pub(super) fn breakdown(&self, state: &State) -> LossBreakdown {
        let c = &self.config;
        let contact = if self.use_contact() {
            self.contact(state)
        } else {
            0.0
        };
        let smooth = if c.lambda_s > 0.0 {
            self.smooth(state)
        } else {
            0.0
        };
        let (geo, skipped) = if self.use_geo() {
            self.geo(state)
        } else {
            (0.0, 0)
        };
        LossBreakdown {
            skipped_geo_frames: skipped,
            smooth_partial: state.frames.len() < 3,
            ..LossBreakdown::combine(contact, smooth, geo, c)
        }
    }

    /// Per-frame data frozen for one gradient evaluation: which vertices can
    /// touch the scene and the Chamfer correspondences.
    pub(super) fn linearize(&self, state: &State) -> Vec<FrameLin> {
        let use_contact = self.use_contact() && self.config.w_scene_contact > 0.0;
        let use_geo = self.use_geo();
        state
            .frames
            .par_iter()
            .enumerate()
            .map(|(i, fs)| {
                let verts = self.shaped.skin(&fs.posed);
                let mut lin = FrameLin::default();
                if use_contact {
                    let scene = self.scene.expect("contact needs a scene");
                    for (k, v) in verts.iter().enumerate() {
                        if let Some((c, t)) = scene.closest_point(v) {
                            let depth = -(v - c).dot(&scene.normals()[t]);
                            if depth > 0.0 || (v - c).norm() < CONTACT_MARGIN {
                                lin.contact.push(k);
                            }
                        }
                    }
                }
                if let (true, Some(vis), Some(target)) = (
                    use_geo,
                    &state.visible[i],
                    self.targets.get(i).and_then(|t| t.as_ref()),
                ) {
                    let vis_points: Vec<Vector3<f64>> = vis.iter().map(|&k| verts[k]).collect();
                    let tree = KdTree::new(&vis_points);
                    let cloud = target.points();
                    let cloud_tree = KdTree::new(cloud);
                    lin.cloud_pairs = cloud
                        .iter()
                        .map(|p| {
                            (
                                *p,
                                vis[tree.nearest(p).expect("visible set is non-empty").0],
                            )
                        })
                        .collect();
                    lin.vertex_pairs = vis
                        .iter()
                        .zip(&vis_points)
                        .map(|(&k, q)| {
                            (
                                k,
                                cloud[cloud_tree.nearest(q).expect("cloud is non-empty").0],
                            )
                        })
                        .collect();
                }
                let mut subset: Vec<usize> = lin
                    .contact
                    .iter()
                    .copied()
                    .chain(lin.vertex_pairs.iter().map(|(k, _)| *k))
                    .chain(lin.cloud_pairs.iter().map(|(_, k)| *k))
                    .collect();
                subset.sort_unstable();
                subset.dedup();
                lin.subset = subset;
                lin
            })
            .collect()
    }

    /// Every term of the objective that depends on frame `i`, with frame `i`
    /// replaced by `cand`. Differences of this equal differences of the
    /// full objective while visibility, nearest neighbours and the set of
    /// vertices near the scene stay as linearized.
    fn local_loss(
        &self,
        state: &State,
        lin: &FrameLin,
        geo_frames: usize,
        i: usize,
        cand: &FrameState,
        scratch: &mut Scratch,
    ) -> f64 {
        let c = &self.config;
        let f = &state.frames;
        let n = f.len();
        let mut total = 0.0;
        if scratch.verts.len() != self.shaped.rest_vertices().len() {
            scratch.verts = vec![Vector3::zeros(); self.shaped.rest_vertices().len()];
        }
        self.shaped
            .skin_subset(&cand.posed, &lin.subset, &mut scratch.verts);
        let verts = &scratch.verts;
        if self.use_contact() {
            let mut scene_sum = 0.0;
            if let Some(scene) = self.scene {
                for &k in &lin.contact {
                    let d = scene.penetration_depth(&verts[k]);
                    scene_sum += d * d;
                }
            }
            let mut self_sum = 0.0;
            if c.w_self_contact > 0.0 {
                let caps = self.shaped.capsules(&cand.posed);
                for &(a, b) in &self.pairs {
                    let o = capsule_overlap(&caps[a], &caps[b]);
                    self_sum += o * o;
                }
            }
            total += c.lambda_c * (c.w_scene_contact * scene_sum + c.w_self_contact * self_sum)
                / n as f64;
        }
        if self.use_geo() && !lin.cloud_pairs.is_empty() {
            let a: f64 = lin
                .cloud_pairs
                .iter()
                .map(|(p, k)| dist2(p, &verts[*k]))
                .sum();
            let b: f64 = lin
                .vertex_pairs
                .iter()
                .map(|(k, p)| dist2(&verts[*k], p))
                .sum();
            let chamfer = a / lin.cloud_pairs.len() as f64 + b / lin.vertex_pairs.len() as f64;
            total += c.lambda_g * chamfer / geo_frames as f64;
        }
        if c.lambda_s > 0.0 {
            let at = |k: usize| if k == i { cand } else { &f[k] };
            let mut s = 0.0;
            if n >= 3 {
                let mut trans = 0.0;
                let mut joints = 0.0;
                for k in i.saturating_sub(1).max(1)..=(i + 1).min(n - 2) {
                    trans += trans_accel2(at(k - 1), at(k), at(k + 1));
                    joints += joint_accel2(at(k - 1), at(k), at(k + 1));
                }
                s += (c.w_trans * trans + c.w_joints * joints) / (n - 2) as f64;
            }
            if n >= 2 {
                let mut poses = 0.0;
                if i > 0 {
                    poses += rot_vel2(&f[i - 1], cand);
                }
                if i + 1 < n {
                    poses += rot_vel2(cand, &f[i + 1]);
                }
                s += c.w_poses * poses / (n - 1) as f64;
            }
            total += c.lambda_s * s;
        }
        total
    }

    /// Central-difference gradient and curvature of the objective in frame
    /// `i`'s parameters.
    fn frame_gradient(
        &self,
        state: &State,
        lin: &FrameLin,
        geo_frames: usize,
        i: usize,
    ) -> ([f64; FRAME_PARAMS], [f64; FRAME_PARAMS]) {
        let mut scratch = Scratch::default();
        let base = state.frames[i].frame.to_params();
        let f0 = self.local_loss(state, lin, geo_frames, i, &state.frames[i], &mut scratch);
        let mut grad = [0.0; FRAME_PARAMS];
        let mut curv = [0.0; FRAME_PARAMS];
        let mut x = base;
        for k in 0..FRAME_PARAMS {
            let h = if k < 3 {
                self.config.fd_step_trans
            } else {
                self.config.fd_step_rot
            };
            x[k] = base[k] + h;
            let fp = self.local_loss(
                state,
                lin,
                geo_frames,
                i,
                &self.frame_state(&PoseFrame::from_params(&x)),
                &mut scratch,
            );
            x[k] = base[k] - h;
            let fm = self.local_loss(
                state,
                lin,
                geo_frames,
                i,
                &self.frame_state(&PoseFrame::from_params(&x)),
                &mut scratch,
            );
            x[k] = base[k];
            grad[k] = (fp - fm) / (2.0 * h);
            curv[k] = (fp - 2.0 * f0 + fm) / (h * h);
        }
        (grad, curv)
    }

    pub(super) fn gradient(
        &self,
        state: &State,
    ) -> Vec<([f64; FRAME_PARAMS], [f64; FRAME_PARAMS])> {
        let lin = self.linearize(state);
        let geo_frames = state.visible.iter().filter(|v| v.is_some()).count();
        (0..state.frames.len())
            .into_par_iter()
            .map(|i| self.frame_gradient(state, &lin[i], geo_frames, i))
            .collect()
    }

    /// Preconditioned gradient `P^-1 g`, one row per frame.
    fn preconditioned(
        &self,
        grads: &[([f64; FRAME_PARAMS], [f64; FRAME_PARAMS])],
    ) -> Vec<[f64; FRAME_PARAMS]> {
        let floors = match self.config.preconditioner {
            Preconditioner::None => None,
            Preconditioner::Diagonal => {
                let floor = |range: std::ops::Range<usize>| {
                    let mut pos: Vec<f64> = grads
                        .iter()
                        .flat_map(|(_, c)| c[range.clone()].iter().copied())
                        .filter(|c| *c > 0.0)
                        .collect();
                    if pos.is_empty() {
                        return 0.0;
                    }
                    pos.sort_by(f64::total_cmp);
                    self.config.curvature_floor * pos[pos.len() / 2]
                };
                Some((floor(0..3), floor(3..FRAME_PARAMS)))
            }
        };
        grads
            .iter()
            .map(|(g, c)| {
                let mut z = [0.0; FRAME_PARAMS];
                for k in 0..FRAME_PARAMS {
                    let h = match floors {
                        None => 1.0,
                        Some((ft, fr)) => c[k].max(if k < 3 { ft } else { fr }),
                    };
                    z[k] = if h > 0.0 { g[k] / h } else { g[k] };
                }
                z
            })
            .collect()
    }

    fn stepped(&self, state: &State, dir: &[[f64; FRAME_PARAMS]], alpha: f64) -> Vec<PoseFrame> {
        state
            .frames
            .iter()
            .zip(dir)
            .map(|(fs, d)| {
                let mut x = fs.frame.to_params();
                for (xk, dk) in x.iter_mut().zip(d) {
                    *xk += alpha * dk;
                }
                PoseFrame::from_params(&x)
            })
            .collect()
    }

    pub(super) fn run(&self, initial: &MotionSequence) -> Result<OptimResult> {
        self.check_frames(initial.len())?;
        let mut state = self.state(&initial.frames);
        self.refresh_visibility(&mut state);
        let mut current = self.breakdown(&state);
        if !current.total.is_finite() {
            return Err(Error::validation("initial loss is not finite"));
        }
        let mut history = vec![IterationRecord {
            iter: 0,
            loss: current,
            step: 0.0,
        }];
        let mut alpha = self.config.step_size;
        let mut stalled = false;
        let mut previous: Option<Grad3> = None;
        for iter in 1..=self.config.max_iters {
            let grads = self.gradient(&state);
            if grads.iter().any(|(g, _)| g.iter().any(|v| !v.is_finite())) {
                return Err(Error::Numerical(format!(
                    "non-finite gradient at iteration {iter}"
                )));
            }
            let g: Vec<[f64; FRAME_PARAMS]> = grads.iter().map(|(g, _)| *g).collect();
            let z = self.preconditioned(&grads);
            let mut dir: Vec<[f64; FRAME_PARAMS]> = z.iter().map(|r| r.map(|v| -v)).collect();
            let mut conjugate = false;
            if let (Descent::Conjugate, Some((g0, z0, d0))) = (self.config.descent, &previous) {
                let num = dot(&g, &z) - dot(&g, z0);
                let den = dot(g0, z0);
                let beta = if den > 0.0 { (num / den).max(0.0) } else { 0.0 };
                let cand: Vec<[f64; FRAME_PARAMS]> = dir
                    .iter()
                    .zip(d0)
                    .map(|(a, b)| std::array::from_fn(|k| a[k] + beta * b[k]))
                    .collect();
                if dot(&g, &cand) < 0.0 {
                    dir = cand;
                    conjugate = beta > 0.0;
                }
            }
            if dir.iter().all(|d| d.iter().all(|v| *v == 0.0)) {
                debug!("zero gradient at iteration {iter}");
                break;
            }
            let mut accepted = None;
            for _ in 0..=MAX_HALVINGS {
                let mut cand = self.state(&self.stepped(&state, &dir, alpha));
                self.refresh_visibility(&mut cand);
                let loss = self.breakdown(&cand);
                if loss.total.is_finite() && loss.total < current.total {
                    accepted = Some((cand, loss));
                    break;
                }
                alpha *= 0.5;
            }
            let Some((cand, loss)) = accepted else {
                if conjugate {
                    debug!("conjugate direction failed at iteration {iter}, restarting");
                    previous = None;
                    alpha = self.config.step_size;
                    continue;
                }
                debug!("line search stalled at iteration {iter}");
                stalled = true;
                break;
            };
            previous = Some((g, z, dir));
            let rel = (current.total - loss.total) / current.total.abs().max(f64::MIN_POSITIVE);
            debug!("iter {iter}: total {} step {alpha}", loss.total);
            history.push(IterationRecord {
                iter,
                loss,
                step: alpha,
            });
            state = cand;
            current = loss;
            if rel < self.config.min_rel_decrease {
                if !conjugate {
                    break;
                }
                previous = None;
            }
            alpha = (2.0 * alpha).min(self.config.step_size);
        }
        let frames = state.frames.iter().map(|f| f.frame).collect();
        Ok(OptimResult {
            motion: MotionSequence::new(frames, initial.shape, initial.frame_rate)?,
            history,
            stalled,
        })
    }
}

type Rows = Vec<[f64; FRAME_PARAMS]>;
/// Gradient, preconditioned gradient and direction of the last iteration.
type Grad3 = (Rows, Rows, Rows);

fn dot(a: &[[f64; FRAME_PARAMS]], b: &[[f64; FRAME_PARAMS]]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| x.iter().zip(y).map(|(p, q)| p * q).sum::<f64>())
        .sum()
}

#[derive(Default)]
struct Scratch {
    verts: Vec<Vector3<f64>>,
}

/// Vertices within this distance of the scene are re-tested for
/// penetration during a gradient evaluation; finite-difference steps move
/// vertices far less.
const CONTACT_MARGIN: f64 = 0.05;

#[derive(Debug, Clone, Default)]
pub(super) struct FrameLin {
    /// Vertices skinned during the evaluation.
    subset: Vec<usize>,
    contact: Vec<usize>,
    /// Each cloud point with its nearest visible vertex.
    cloud_pairs: Vec<(Vector3<f64>, usize)>,
    /// Each visible vertex with its nearest cloud point.
    vertex_pairs: Vec<(usize, Vector3<f64>)>,
}

fn trans_accel2(a: &FrameState, b: &FrameState, c: &FrameState) -> f64 {
    (c.frame.translation - 2.0 * b.frame.translation + a.frame.translation).norm_squared()
}

fn joint_accel2(a: &FrameState, b: &FrameState, c: &FrameState) -> f64 {
    (0..NUM_JOINTS)
        .map(|j| (c.posed.joints[j] - 2.0 * b.posed.joints[j] + a.posed.joints[j]).norm_squared())
        .sum()
}

/// Squared geodesic angle between consecutive local rotations, summed over
/// the non-root joints.
fn rot_vel2(a: &FrameState, b: &FrameState) -> f64 {
    (1..NUM_JOINTS)
        .map(|j| geodesic_angle(&a.local[j], &b.local[j]).powi(2))
        .sum()
}

#[cfg(test)]
pub(super) mod testing {
    use super::*;

    /// Full objective at the state's current visibility, for checking the
    /// local gradient.
    pub fn full_loss_at(p: &Problem, state: &State, frames: &[PoseFrame]) -> f64 {
        let mut s = p.state(frames);
        s.visible = state.visible.clone();
        p.breakdown(&s).total
    }

    pub fn prepared<'a>(p: &Problem<'a>, frames: &[PoseFrame]) -> State {
        let mut s = p.state(frames);
        p.refresh_visibility(&mut s);
        s
    }
}
