use nalgebra::Vector3;

use super::{MotionModel, SynthSpec, EVENT_SIM_RATE};
use crate::body::{BodyShape, SkinnedBody};
use crate::error::{Error, Result};
use crate::geometry::Capsule;
use crate::sync::{Event, EventStream};

/// Pinhole projection with +z up.
struct Camera {
    position: Vector3<f64>,
    right: Vector3<f64>,
    down: Vector3<f64>,
    forward: Vector3<f64>,
    focal: f64,
    cx: f64,
    cy: f64,
    width: u32,
    height: u32,
}

const NEAR: f64 = 0.05;

impl Camera {
    fn new(spec: &SynthSpec) -> Result<Self> {
        let c = &spec.event_camera;
        let position = Vector3::from(c.position);
        let forward = (Vector3::from(c.look_at) - position)
            .try_normalize(1e-12)
            .ok_or_else(|| Error::validation("event camera looks at its own position"))?;
        let right = forward
            .cross(&Vector3::z())
            .try_normalize(1e-9)
            .ok_or_else(|| Error::validation("event camera must not look straight up or down"))?;
        Ok(Self {
            position,
            down: forward.cross(&right),
            right,
            forward,
            focal: c.focal,
            cx: c.cx,
            cy: c.cy,
            width: c.width,
            height: c.height,
        })
    }

    /// Pixel coordinates and depth, or `None` behind the near plane.
    fn project(&self, p: &Vector3<f64>) -> Option<(f64, f64, f64)> {
        let d = p - self.position;
        let z = d.dot(&self.forward);
        if z < NEAR {
            return None;
        }
        Some((
            self.cx + self.focal * d.dot(&self.right) / z,
            self.cy + self.focal * d.dot(&self.down) / z,
            z,
        ))
    }

    /// Marks pixels whose centre falls inside the projected capsule outline
    /// (a 2D stadium with the radius scaled at the nearer end).
    fn rasterize(&self, cap: &Capsule, mask: &mut [bool]) {
        let (Some(a), Some(b)) = (self.project(&cap.p0), self.project(&cap.p1)) else {
            return;
        };
        let r = self.focal * cap.radius / a.2.min(b.2);
        let lo_x = (a.0.min(b.0) - r).floor().max(0.0);
        let hi_x = (a.0.max(b.0) + r).ceil().min(self.width as f64 - 1.0);
        let lo_y = (a.1.min(b.1) - r).floor().max(0.0);
        let hi_y = (a.1.max(b.1) + r).ceil().min(self.height as f64 - 1.0);
        if lo_x > hi_x || lo_y > hi_y {
            return;
        }
        let (ex, ey) = (b.0 - a.0, b.1 - a.1);
        let len2 = ex * ex + ey * ey;
        for y in lo_y as u32..=hi_y as u32 {
            for x in lo_x as u32..=hi_x as u32 {
                let (px, py) = (x as f64 + 0.5, y as f64 + 0.5);
                let s = if len2 > 0.0 {
                    (((px - a.0) * ex + (py - a.1) * ey) / len2).clamp(0.0, 1.0)
                } else {
                    0.0
                };
                let (dx, dy) = (px - a.0 - s * ex, py - a.1 - s * ey);
                if dx * dx + dy * dy <= r * r {
                    mask[(y * self.width + x) as usize] = true;
                }
            }
        }
    }
}

/// Events from changes of the capsule silhouette sampled at
/// [`EVENT_SIM_RATE`]: +1 where a pixel becomes covered, -1 where it is
/// uncovered. Events within one sample are ordered by row, then column.
pub fn simulate_events(
    spec: &SynthSpec,
    body: &SkinnedBody,
    model: &MotionModel,
) -> Result<EventStream> {
    let camera = Camera::new(spec)?;
    let shaped = body.shaped(&BodyShape::new(spec.shape)?)?;
    let steps = (spec.duration * EVENT_SIM_RATE + 1e-9).floor() as usize;
    let pixels = spec.event_camera.width as usize * spec.event_camera.height as usize;
    let mut prev = vec![false; pixels];
    let mut cur = vec![false; pixels];
    let mut events = Vec::new();
    for k in 0..=steps {
        let t = k as f64 / EVENT_SIM_RATE;
        cur.iter_mut().for_each(|c| *c = false);
        let posed = shaped.pose(&model.frame_at(t));
        for cap in shaped.capsules(&posed) {
            camera.rasterize(&cap, &mut cur);
        }
        // occupancy changes have magnitude 1, which every valid contrast step admits
        if k > 0 {
            for (i, (&now, &before)) in cur.iter().zip(&prev).enumerate() {
                if now != before {
                    let x = (i % camera.width as usize) as u32;
                    let y = (i / camera.width as usize) as u32;
                    events.push(Event::new(t, x, y, if now { 1 } else { -1 })?);
                }
            }
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    EventStream::new(camera.width, camera.height, events)
}
