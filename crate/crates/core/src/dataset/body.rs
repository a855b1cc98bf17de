//! Parametric capsule humanoid with a fixed, closed (genus 0) connectivity.
//!
//! The surface is a torso tube whose bottom ring splits into two leg tubes and
//! whose top ring splits into two arm tubes and a neck/head tube. Splits go
//! through a single bridge vertex, so every edge has exactly two faces.
//! Shape parameters change segment sizes; pose parameters drive a small
//! kinematic tree whose transforms are blended per vertex (linear blend
//! skinning, weights 1 or ½/½).

use std::collections::{HashMap, VecDeque};
use std::f64::consts::PI;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::mesh::{Mesh, Template};

pub const NUM_SHAPE_PARAMS: usize = 8;
pub const NUM_JOINTS: usize = 12;

/// Inclusive sampling range of shape multipliers.
pub const SHAPE_RANGE: (f64, f64) = (0.6, 1.6);

/// Per-joint angle ranges in radians; every range contains zero (the rest pose).
pub const JOINT_RANGES: [(f64, f64); NUM_JOINTS] = [
    (-0.25, 0.45), // waist flex
    (-0.35, 0.35), // neck flex
    (-1.2, 0.5),   // left shoulder elevation
    (-0.6, 0.6),   // left shoulder swing
    (-1.6, 0.0),   // left elbow
    (-1.2, 0.5),   // right shoulder elevation
    (-0.6, 0.6),   // right shoulder swing
    (-1.6, 0.0),   // right elbow
    (-1.0, 0.4),   // left hip flex
    (0.0, 1.4),    // left knee
    (-1.0, 0.4),   // right hip flex
    (0.0, 1.4),    // right knee
];

pub const SHAPE_PARAM_NAMES: [&str; NUM_SHAPE_PARAMS] = [
    "height",
    "torso_width",
    "torso_depth",
    "arm_radius",
    "leg_radius",
    "arm_length",
    "leg_length",
    "head_scale",
];

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum BodyError {
    #[error("joint {joint} angle {angle} is outside [-pi, pi]")]
    AngleOutOfRange { joint: usize, angle: f64 },
    #[error("expected {expected} {what} parameters, got {found}")]
    ParamCount {
        what: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("shape parameter {index} must be positive and finite, got {value}")]
    BadShape { index: usize, value: f64 },
}

/// Mesh density of the template.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Resolution {
    /// About 500 vertices.
    #[default]
    Standard,
    /// About 1800 vertices.
    Fine,
}

impl Resolution {
    fn level(self) -> usize {
        match self {
            Resolution::Standard => 1,
            Resolution::Fine => 2,
        }
    }
}

impl std::str::FromStr for Resolution {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "standard" => Ok(Resolution::Standard),
            "fine" => Ok(Resolution::Fine),
            other => Err(format!("unknown resolution {other:?} (standard | fine)")),
        }
    }
}

impl std::fmt::Display for Resolution {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Resolution::Standard => "standard",
            Resolution::Fine => "fine",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Bone {
    Pelvis = 0,
    Chest,
    Head,
    LeftUpperArm,
    LeftForearm,
    RightUpperArm,
    RightForearm,
    LeftThigh,
    LeftShin,
    RightThigh,
    RightShin,
}

const NUM_BONES: usize = 11;

const PARENT: [Option<usize>; NUM_BONES] = [
    None,
    Some(Bone::Pelvis as usize),
    Some(Bone::Chest as usize),
    Some(Bone::Chest as usize),
    Some(Bone::LeftUpperArm as usize),
    Some(Bone::Chest as usize),
    Some(Bone::RightUpperArm as usize),
    Some(Bone::Pelvis as usize),
    Some(Bone::LeftThigh as usize),
    Some(Bone::Pelvis as usize),
    Some(Bone::RightThigh as usize),
];

/// Skinning weights: `first` with weight `w`, `second` with `1 − w`.
#[derive(Clone, Copy, Debug)]
struct Skin {
    first: Bone,
    second: Bone,
    w: f64,
}

impl Skin {
    fn rigid(b: Bone) -> Self {
        Skin {
            first: b,
            second: b,
            w: 1.0,
        }
    }

    fn blend(a: Bone, b: Bone) -> Self {
        Skin {
            first: a,
            second: b,
            w: 0.5,
        }
    }
}

type V3 = [f64; 3];

fn add(a: V3, b: V3) -> V3 {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}
fn sub(a: V3, b: V3) -> V3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}
fn scale(a: V3, s: f64) -> V3 {
    [a[0] * s, a[1] * s, a[2] * s]
}
fn dot(a: V3, b: V3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}
fn cross(a: V3, b: V3) -> V3 {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}
fn normalize(a: V3) -> V3 {
    scale(a, 1.0 / dot(a, a).sqrt())
}

/// Segment dimensions in meters derived from the shape multipliers.
#[derive(Clone, Copy, Debug)]
struct Dims {
    leg_length: f64,
    leg_radius: f64,
    hip_y: f64,
    torso_height: f64,
    half_width: f64,
    half_depth: f64,
    shoulder_y: f64,
    shoulder_radius: f64,
    arm_length: f64,
    arm_radius: f64,
    neck_height: f64,
    neck_radius: f64,
    head_radius: f64,
}

impl Dims {
    fn new(s: &[f64]) -> Self {
        let [height, torso_w, torso_d, arm_r, leg_r, arm_l, leg_l, head] =
            [s[0], s[1], s[2], s[3], s[4], s[5], s[6], s[7]];
        let leg_length = 0.85 * leg_l * height;
        let torso_height = 0.55 * height;
        let half_width = 0.17 * torso_w;
        let arm_radius = 0.045 * arm_r;
        Dims {
            leg_length,
            leg_radius: (0.07 * leg_r).min(0.45 * half_width),
            hip_y: leg_length,
            torso_height,
            half_width,
            half_depth: 0.11 * torso_d,
            shoulder_y: leg_length + torso_height,
            shoulder_radius: 1.25 * arm_radius,
            arm_length: 0.62 * arm_l * height,
            arm_radius,
            neck_height: 0.07 * height,
            neck_radius: 0.05 * head,
            head_radius: 0.11 * head,
        }
    }

    fn joints(&self) -> [V3; NUM_BONES] {
        let hip_x = 0.5 * self.half_width;
        let knee_y = self.hip_y - 0.5 * self.leg_length;
        let elbow_x = self.half_width + 0.5 * self.arm_length;
        [
            [0.0, 0.0, 0.0],
            [0.0, self.hip_y + 0.4 * self.torso_height, 0.0],
            [0.0, self.shoulder_y + 0.5 * self.neck_height, 0.0],
            [self.half_width, self.shoulder_y, 0.0],
            [elbow_x, self.shoulder_y, 0.0],
            [-self.half_width, self.shoulder_y, 0.0],
            [-elbow_x, self.shoulder_y, 0.0],
            [hip_x, self.hip_y, 0.0],
            [hip_x, knee_y, 0.0],
            [-hip_x, self.hip_y, 0.0],
            [-hip_x, knee_y, 0.0],
        ]
    }
}

struct Counts {
    torso_ring: usize,
    bridge: usize,
    torso_rings: usize,
    leg_rings: usize,
    arm_rings: usize,
    head_rings: usize,
}

impl Counts {
    fn new(res: Resolution) -> Self {
        let l = res.level();
        Counts {
            torso_ring: 20 * l,
            bridge: 3 * l,
            torso_rings: 6 * l,
            leg_rings: 8 * l,
            arm_rings: 7 * l,
            head_rings: 5 * l,
        }
    }
}

struct Builder {
    positions: Vec<V3>,
    skins: Vec<Skin>,
    faces: Vec<[usize; 3]>,
}

impl Builder {
    fn vertex(&mut self, p: V3, skin: Skin) -> usize {
        self.positions.push(p);
        self.skins.push(skin);
        self.positions.len() - 1
    }

    fn strip(&mut self, a: &[usize], b: &[usize]) {
        let n = a.len();
        for m in 0..n {
            let m1 = (m + 1) % n;
            self.faces.push([a[m], a[m1], b[m1]]);
            self.faces.push([a[m], b[m1], b[m]]);
        }
    }

    fn fan(&mut self, ring: &[usize], pole: usize) {
        let n = ring.len();
        for m in 0..n {
            self.faces.push([ring[m], ring[(m + 1) % n], pole]);
        }
    }

    /// Extrudes rings along `axis` from a loop of existing vertices and caps with a pole.
    /// `ring(m)` gives `(center, radius, skin)` for ring `m = 1..=rings`.
    fn tube(
        &mut self,
        lp: &[usize],
        axis: V3,
        rings: usize,
        ring: impl Fn(usize) -> (V3, f64, Skin),
        pole: (V3, Skin),
    ) {
        let centroid = scale(
            lp.iter().fold([0.0; 3], |acc, &i| add(acc, self.positions[i])),
            1.0 / lp.len() as f64,
        );
        let helper = if axis[1].abs() < 0.9 {
            [0.0, 1.0, 0.0]
        } else {
            [1.0, 0.0, 0.0]
        };
        let e1 = normalize(cross(helper, axis));
        let e2 = cross(axis, e1);
        let dirs: Vec<(f64, f64)> = lp
            .iter()
            .map(|&i| {
                let d = sub(self.positions[i], centroid);
                let a = dot(d, e2).atan2(dot(d, e1));
                (a.cos(), a.sin())
            })
            .collect();
        let mut prev = lp.to_vec();
        for m in 1..=rings {
            let (center, radius, skin) = ring(m);
            let cur: Vec<usize> = dirs
                .iter()
                .map(|&(c, s)| {
                    let p = add(center, add(scale(e1, radius * c), scale(e2, radius * s)));
                    self.vertex(p, skin)
                })
                .collect();
            self.strip(&prev, &cur);
            prev = cur;
        }
        let pole = self.vertex(pole.0, pole.1);
        self.fan(&prev, pole);
    }
}

/// Rest geometry, connectivity and skinning for one set of shape parameters.
fn build(res: Resolution, shape: &[f64]) -> Builder {
    let c = Counts::new(res);
    let d = Dims::new(shape);
    let mut b = Builder {
        positions: Vec::new(),
        skins: Vec::new(),
        faces: Vec::new(),
    };
    let rt = c.torso_ring;
    let a = c.bridge;

    // torso rings 0..torso_rings-2 are ellipses, the last ring is the shoulder yoke
    let mut rings: Vec<Vec<usize>> = Vec::new();
    for j in 0..c.torso_rings - 1 {
        let f = j as f64 / (c.torso_rings - 1) as f64;
        let y = d.hip_y + f * (d.torso_height - d.shoulder_radius);
        let waist = 1.0 - 0.12 * (PI * f).sin();
        let skin = if f < 0.3 {
            Skin::rigid(Bone::Pelvis)
        } else if f < 0.5 {
            Skin::blend(Bone::Pelvis, Bone::Chest)
        } else {
            Skin::rigid(Bone::Chest)
        };
        let ring = (0..rt)
            .map(|k| {
                let phi = 2.0 * PI * k as f64 / rt as f64;
                let p = [
                    d.half_width * waist * phi.cos(),
                    y,
                    d.half_depth * waist * phi.sin(),
                ];
                b.vertex(p, skin)
            })
            .collect();
        rings.push(ring);
    }

    // shoulder yoke: arm loops are vertical circles at the shoulders, the
    // remaining front/back arcs run across the top of the chest
    let chest = Skin::rigid(Bone::Chest);
    let arm_loop_len = 2 * a + 2;
    let shoulder_point = |side: f64, j: usize| -> V3 {
        let theta0 = -2.0 * PI * a as f64 / arm_loop_len as f64;
        let theta = theta0 + 2.0 * PI * j as f64 / arm_loop_len as f64;
        [
            side * d.half_width,
            d.shoulder_y - d.shoulder_radius * theta.cos(),
            d.shoulder_radius * theta.sin() * side,
        ]
    };
    let mut top = vec![usize::MAX; rt];
    let arc = |k: usize, front: bool| -> V3 {
        // k runs a..=rt/2-a on the front, rt/2+a..=rt-a on the back
        let (start, end) = if front { (a, rt / 2 - a) } else { (rt / 2 + a, rt - a) };
        let t = (k - start) as f64 / (end - start) as f64;
        let x = if front {
            d.half_width * (1.0 - 2.0 * t)
        } else {
            -d.half_width * (1.0 - 2.0 * t)
        };
        let z = if front { d.half_depth } else { -d.half_depth };
        [x, d.shoulder_y, z]
    };
    for k in 0..rt {
        let left_j = (k + a) % rt;
        let right_j = (k + a).wrapping_sub(rt / 2);
        let p = if left_j <= 2 * a {
            // left loop order runs back (k = rt-a) → bottom (k = 0) → front (k = a)
            shoulder_point(1.0, left_j)
        } else if right_j <= 2 * a {
            // right loop runs front (k = rt/2-a) → bottom → back (k = rt/2+a)
            shoulder_point(-1.0, right_j)
        } else if k < rt / 2 {
            arc(k, true)
        } else {
            arc(k, false)
        };
        top[k] = b.vertex(p, chest);
    }
    let left_bridge = b.vertex(shoulder_point(1.0, 2 * a + 1), chest);
    let right_bridge = b.vertex(shoulder_point(-1.0, 2 * a + 1), chest);
    rings.push(top.clone());
    for w in rings.windows(2) {
        b.strip(&w[0], &w[1]);
    }

    // legs hang from the bottom ring, split front-to-back through the crotch vertex
    let bottom = rings[0].clone();
    let crotch = b.vertex([0.0, d.hip_y, 0.0], Skin::rigid(Bone::Pelvis));
    let (kf, kb) = (rt / 4, 3 * rt / 4);
    let mut left_leg: Vec<usize> = (kb..rt).chain(0..=kf).map(|k| bottom[k]).collect();
    left_leg.push(crotch);
    let mut right_leg: Vec<usize> = (kf..=kb).map(|k| bottom[k]).collect();
    right_leg.push(crotch);
    for (lp, side, thigh, shin) in [
        (left_leg, 1.0, Bone::LeftThigh, Bone::LeftShin),
        (right_leg, -1.0, Bone::RightThigh, Bone::RightShin),
    ] {
        let n = c.leg_rings;
        let knee = n / 2;
        let x = side * 0.5 * d.half_width;
        let step = (d.leg_length - 0.3 * d.leg_radius) / n as f64;
        b.tube(
            &lp,
            [0.0, -1.0, 0.0],
            n,
            |m| {
                let y = d.hip_y - step * m as f64;
                let r = d.leg_radius * (1.0 - 0.3 * m as f64 / n as f64);
                let skin = if m == 1 {
                    Skin::blend(Bone::Pelvis, thigh)
                } else if m < knee {
                    Skin::rigid(thigh)
                } else if m == knee {
                    Skin::blend(thigh, shin)
                } else {
                    Skin::rigid(shin)
                };
                ([x, y, 0.0], r, skin)
            },
            ([x, 0.0, 0.0], Skin::rigid(shin)),
        );
    }

    // arms extend sideways from the shoulder circles
    let mut left_arm: Vec<usize> = (rt - a..rt).chain(0..=a).map(|k| top[k]).collect();
    left_arm.push(left_bridge);
    let mut right_arm: Vec<usize> = (rt / 2 - a..=rt / 2 + a).map(|k| top[k]).collect();
    right_arm.push(right_bridge);
    for (lp, side, upper, fore) in [
        (left_arm, 1.0, Bone::LeftUpperArm, Bone::LeftForearm),
        (right_arm, -1.0, Bone::RightUpperArm, Bone::RightForearm),
    ] {
        let n = c.arm_rings;
        let elbow = n.div_ceil(2);
        let reach = d.arm_length - 0.4 * d.arm_radius;
        b.tube(
            &lp,
            [side, 0.0, 0.0],
            n,
            |m| {
                let x = side * (d.half_width + reach * m as f64 / n as f64);
                let r = d.arm_radius * (1.0 - 0.25 * m as f64 / n as f64);
                let skin = if m == 1 {
                    Skin::blend(Bone::Chest, upper)
                } else if m < elbow {
                    Skin::rigid(upper)
                } else if m == elbow {
                    Skin::blend(upper, fore)
                } else {
                    Skin::rigid(fore)
                };
                ([x, d.shoulder_y, 0.0], r, skin)
            },
            (
                [side * (d.half_width + d.arm_length), d.shoulder_y, 0.0],
                Skin::rigid(fore),
            ),
        );
    }

    // neck and head close the top
    let mut neck: Vec<usize> = (a..=rt / 2 - a).map(|k| top[k]).collect();
    neck.push(right_bridge);
    neck.extend((rt / 2 + a..=rt - a).map(|k| top[k]));
    neck.push(left_bridge);
    let head_center = d.shoulder_y + d.neck_height + d.head_radius;
    let n = c.head_rings;
    b.tube(
        &neck,
        [0.0, 1.0, 0.0],
        n,
        |m| {
            if m == 1 {
                (
                    [0.0, d.shoulder_y + d.neck_height, 0.0],
                    d.neck_radius,
                    Skin::blend(Bone::Chest, Bone::Head),
                )
            } else {
                let beta = PI * (m - 1) as f64 / n as f64;
                (
                    [0.0, head_center - d.head_radius * beta.cos(), 0.0],
                    d.head_radius * beta.sin(),
                    Skin::rigid(Bone::Head),
                )
            }
        },
        (
            [0.0, head_center + d.head_radius, 0.0],
            Skin::rigid(Bone::Head),
        ),
    );

    orient_outward(&b.positions, &mut b.faces);
    b
}

/// Makes face winding consistent across shared edges, then outward-facing.
fn orient_outward(positions: &[V3], faces: &mut [[usize; 3]]) {
    let mut by_edge: HashMap<(usize, usize), Vec<usize>> = HashMap::new();
    for (f, face) in faces.iter().enumerate() {
        for e in 0..3 {
            let (u, v) = (face[e], face[(e + 1) % 3]);
            by_edge.entry((u.min(v), u.max(v))).or_default().push(f);
        }
    }
    let directed = |face: &[usize; 3], u: usize, v: usize| {
        (0..3).any(|e| face[e] == u && face[(e + 1) % 3] == v)
    };
    let mut visited = vec![false; faces.len()];
    for seed in 0..faces.len() {
        if visited[seed] {
            continue;
        }
        visited[seed] = true;
        let mut queue = VecDeque::from([seed]);
        while let Some(f) = queue.pop_front() {
            let face = faces[f];
            for e in 0..3 {
                let (u, v) = (face[e], face[(e + 1) % 3]);
                for &g in &by_edge[&(u.min(v), u.max(v))] {
                    if g == f || visited[g] {
                        continue;
                    }
                    // a consistent neighbour traverses the shared edge as v → u
                    if directed(&faces[g], u, v) {
                        faces[g].swap(1, 2);
                    }
                    visited[g] = true;
                    queue.push_back(g);
                }
            }
        }
    }
    let volume: f64 = faces
        .iter()
        .map(|f| dot(positions[f[0]], cross(positions[f[1]], positions[f[2]])))
        .sum();
    if volume < 0.0 {
        for f in faces.iter_mut() {
            f.swap(1, 2);
        }
    }
}

/// Rigid transform `x ↦ r·x + t`.
#[derive(Clone, Copy)]
struct Affine {
    r: [[f64; 3]; 3],
    t: V3,
}

impl Affine {
    const IDENTITY: Affine = Affine {
        r: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
        t: [0.0, 0.0, 0.0],
    };

    fn rotate(&self, x: V3) -> V3 {
        let r = &self.r;
        [dot(r[0], x), dot(r[1], x), dot(r[2], x)]
    }

    fn apply(&self, x: V3) -> V3 {
        add(self.rotate(x), self.t)
    }

    /// `self ∘ other`
    fn then(&self, other: &Affine) -> Affine {
        let mut r = [[0.0; 3]; 3];
        for (i, row) in r.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = (0..3).map(|k| self.r[i][k] * other.r[k][j]).sum();
            }
        }
        Affine {
            r,
            t: self.apply(other.t),
        }
    }

    /// Rotation `r` about `pivot`.
    fn about(pivot: V3, r: [[f64; 3]; 3]) -> Affine {
        let rot = Affine { r, t: [0.0; 3] };
        Affine {
            r,
            t: sub(pivot, rot.rotate(pivot)),
        }
    }
}

fn rot_x(a: f64) -> [[f64; 3]; 3] {
    let (s, c) = a.sin_cos();
    [[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]]
}
fn rot_y(a: f64) -> [[f64; 3]; 3] {
    let (s, c) = a.sin_cos();
    [[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]]
}
fn rot_z(a: f64) -> [[f64; 3]; 3] {
    let (s, c) = a.sin_cos();
    [[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]]
}
fn mat_mul(a: [[f64; 3]; 3], b: [[f64; 3]; 3]) -> [[f64; 3]; 3] {
    Affine { r: a, t: [0.0; 3] }.then(&Affine { r: b, t: [0.0; 3] }).r
}

/// World transform of every bone for the given joint angles.
fn bone_transforms(dims: &Dims, angles: &[f64]) -> [Affine; NUM_BONES] {
    let joints = dims.joints();
    let local: [[[f64; 3]; 3]; NUM_BONES] = [
        rot_x(0.0),
        rot_x(angles[0]),
        rot_x(angles[1]),
        mat_mul(rot_y(angles[3]), rot_z(angles[2])),
        rot_y(angles[4]),
        mat_mul(rot_y(-angles[6]), rot_z(-angles[5])),
        rot_y(-angles[7]),
        rot_x(angles[8]),
        rot_x(angles[9]),
        rot_x(angles[10]),
        rot_x(angles[11]),
    ];
    let mut world = [Affine::IDENTITY; NUM_BONES];
    for bone in 0..NUM_BONES {
        let own = Affine::about(joints[bone], local[bone]);
        world[bone] = match PARENT[bone] {
            Some(p) => world[p].then(&own),
            None => own,
        };
    }
    world
}

/// Shape- and pose-parameterized body family over one fixed template.
#[derive(Clone, Debug)]
pub struct BodyModel {
    resolution: Resolution,
    template: Arc<Template>,
}

impl BodyModel {
    pub fn new(resolution: Resolution) -> Self {
        let b = build(resolution, &[1.0; NUM_SHAPE_PARAMS]);
        let template = Template::new(b.positions.len(), b.faces)
            .expect("body builder produces a valid template");
        Self {
            resolution,
            template: Arc::new(template),
        }
    }

    pub fn resolution(&self) -> Resolution {
        self.resolution
    }

    pub fn template(&self) -> &Arc<Template> {
        &self.template
    }

    /// Rest pose with every shape multiplier at 1.
    pub fn template_mesh(&self) -> Mesh<f64> {
        let b = build(self.resolution, &[1.0; NUM_SHAPE_PARAMS]);
        Mesh::with_template(b.positions, Arc::clone(&self.template))
            .expect("template vertex count matches")
    }

    /// Body with the given shape multipliers and joint angles, in meters.
    pub fn generate(&self, shape: &[f64], pose: &[f64]) -> Result<Mesh<f64>, BodyError> {
        if shape.len() != NUM_SHAPE_PARAMS {
            return Err(BodyError::ParamCount {
                what: "shape",
                expected: NUM_SHAPE_PARAMS,
                found: shape.len(),
            });
        }
        if pose.len() != NUM_JOINTS {
            return Err(BodyError::ParamCount {
                what: "pose",
                expected: NUM_JOINTS,
                found: pose.len(),
            });
        }
        if let Some((index, &value)) = shape
            .iter()
            .enumerate()
            .find(|(_, v)| !(v.is_finite() && **v > 0.0))
        {
            return Err(BodyError::BadShape { index, value });
        }
        if let Some((joint, &angle)) = pose
            .iter()
            .enumerate()
            .find(|(_, a)| !(a.abs() <= PI))
        {
            return Err(BodyError::AngleOutOfRange { joint, angle });
        }
        let b = build(self.resolution, shape);
        debug_assert_eq!(b.faces.as_slice(), self.template.faces());
        let world = bone_transforms(&Dims::new(shape), pose);
        let vertices = b
            .positions
            .iter()
            .zip(&b.skins)
            .map(|(&p, skin)| {
                let first = world[skin.first as usize].apply(p);
                if skin.w == 1.0 {
                    first
                } else {
                    let second = world[skin.second as usize].apply(p);
                    add(scale(first, skin.w), scale(second, 1.0 - skin.w))
                }
            })
            .collect();
        Ok(Mesh::with_template(vertices, Arc::clone(&self.template))
            .expect("template vertex count matches"))
    }
}

/// Rest-pose template mesh for a resolution.
pub fn build_template(resolution: Resolution) -> Mesh<f64> {
    BodyModel::new(resolution).template_mesh()
}
