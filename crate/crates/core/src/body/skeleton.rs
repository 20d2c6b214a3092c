//! Fixed 24-joint tree in SMPL ordering.
//!
//! World convention: +x is the subject's left, +y forward, +z up. Rest
//! positions are relative to the pelvis and describe a T-pose.

use nalgebra::Vector3;

pub const NUM_JOINTS: usize = 24;
pub const NUM_BONES: usize = NUM_JOINTS - 1;
pub const SHAPE_DIM: usize = 10;

pub const PELVIS: usize = 0;

pub const JOINT_NAMES: [&str; NUM_JOINTS] = [
    "pelvis",
    "left_hip",
    "right_hip",
    "spine1",
    "left_knee",
    "right_knee",
    "spine2",
    "left_ankle",
    "right_ankle",
    "spine3",
    "left_foot",
    "right_foot",
    "neck",
    "left_collar",
    "right_collar",
    "head",
    "left_shoulder",
    "right_shoulder",
    "left_elbow",
    "right_elbow",
    "left_wrist",
    "right_wrist",
    "left_hand",
    "right_hand",
];

pub const SMPL_PARENTS: [Option<usize>; NUM_JOINTS] = [
    None,
    Some(0),
    Some(0),
    Some(0),
    Some(1),
    Some(2),
    Some(3),
    Some(4),
    Some(5),
    Some(6),
    Some(7),
    Some(8),
    Some(9),
    Some(9),
    Some(9),
    Some(12),
    Some(13),
    Some(14),
    Some(16),
    Some(17),
    Some(18),
    Some(19),
    Some(20),
    Some(21),
];

const REST: [[f64; 3]; NUM_JOINTS] = [
    [0.0, 0.0, 0.0],
    [0.09, 0.0, -0.08],
    [-0.09, 0.0, -0.08],
    [0.0, -0.02, 0.11],
    [0.10, 0.005, -0.46],
    [-0.10, 0.005, -0.46],
    [0.0, -0.01, 0.24],
    [0.10, -0.03, -0.86],
    [-0.10, -0.03, -0.86],
    [0.0, 0.0, 0.30],
    [0.11, 0.11, -0.92],
    [-0.11, 0.11, -0.92],
    [0.0, -0.01, 0.51],
    [0.07, -0.01, 0.42],
    [-0.07, -0.01, 0.42],
    [0.0, 0.04, 0.60],
    [0.18, -0.01, 0.44],
    [-0.18, -0.01, 0.44],
    [0.44, -0.02, 0.44],
    [-0.44, -0.02, 0.44],
    [0.69, -0.01, 0.44],
    [-0.69, -0.01, 0.44],
    [0.78, -0.01, 0.44],
    [-0.78, -0.01, 0.44],
];

pub fn default_rest_joints() -> Vec<Vector3<f64>> {
    REST.iter()
        .map(|p| Vector3::new(p[0], p[1], p[2]))
        .collect()
}

pub fn default_parents() -> Vec<Option<usize>> {
    SMPL_PARENTS.to_vec()
}

/// Surface radius of the tessellated limb for the bone ending at `child`.
pub fn default_mesh_radius(child: usize) -> f64 {
    match child {
        1 | 2 => 0.08,
        3 | 6 | 9 => 0.11,
        4 | 5 => 0.07,
        7 | 8 => 0.05,
        10 | 11 => 0.04,
        12 => 0.05,
        13 | 14 => 0.06,
        15 => 0.06,
        16 | 17 => 0.05,
        18 | 19 => 0.045,
        20 | 21 => 0.035,
        22 | 23 => 0.03,
        _ => 0.04,
    }
}

/// Upper bound on the self-collision capsule radius of the bone ending at
/// `child`. The procedural template shrinks these further so that the rest
/// pose is free of self-overlap.
pub fn default_capsule_radius(child: usize) -> f64 {
    match child {
        1 | 2 => 0.05,
        3 | 6 | 9 => 0.06,
        4 | 5 => 0.06,
        7 | 8 => 0.045,
        10 | 11 => 0.035,
        12 | 15 => 0.045,
        13 | 14 => 0.04,
        16 | 17 => 0.04,
        18 | 19 => 0.04,
        20 | 21 => 0.03,
        22 | 23 => 0.025,
        _ => 0.03,
    }
}

/// Extension beyond leaf joints (head top, hand tips, toes), so that leaf
/// rotations move skin.
pub fn leaf_extension(leaf: usize) -> Option<(Vector3<f64>, f64)> {
    match leaf {
        15 => Some((Vector3::new(0.0, 0.0, 0.18), 0.09)),
        10 => Some((Vector3::new(0.0, 0.07, 0.0), 0.035)),
        11 => Some((Vector3::new(0.0, 0.07, 0.0), 0.035)),
        22 => Some((Vector3::new(0.08, 0.0, 0.0), 0.03)),
        23 => Some((Vector3::new(-0.08, 0.0, 0.0), 0.03)),
        _ => None,
    }
}

/// Per-bone shape directions: `dirs[k]` is the relative length change of the
/// bone per unit of `beta[k]`. All entries are non-negative.
pub fn default_shape_dirs(child: usize) -> [f64; SHAPE_DIM] {
    let mut d = [0.0; SHAPE_DIM];
    // stature
    d[0] = 0.06;
    match child {
        4 | 5 | 7 | 8 => d[1] = 0.05,
        18 | 19 | 20 | 21 => d[2] = 0.05,
        3 | 6 | 9 => d[3] = 0.05,
        13 | 14 | 16 | 17 => d[4] = 0.06,
        1 | 2 => d[5] = 0.06,
        _ => {}
    }
    match child {
        4 | 5 => d[6] = 0.04,
        20 | 21 => d[7] = 0.04,
        12 | 15 => d[8] = 0.06,
        10 | 11 | 22 | 23 => d[9] = 0.06,
        _ => {}
    }
    d
}
