//! Planar points and rigid transforms in pitch units.

use std::ops::{Add, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

/// A point (or vector) in the plane, serialized as `[x, y]`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const ORIGIN: Point = Point { x: 0.0, y: 0.0 };

    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn norm_squared(self) -> f64 {
        self.x * self.x + self.y * self.y
    }

    pub fn distance(self, other: Point) -> f64 {
        (self - other).norm()
    }

    pub fn distance_squared(self, other: Point) -> f64 {
        (self - other).norm_squared()
    }

    pub fn dot(self, other: Point) -> f64 {
        self.x * other.x + self.y * other.y
    }

    pub fn cross(self, other: Point) -> f64 {
        self.x * other.y - self.y * other.x
    }

    /// Counter-clockwise rotation by `angle` radians about the origin.
    pub fn rotate(self, angle: f64) -> Point {
        let (s, c) = angle.sin_cos();
        Point::new(c * self.x - s * self.y, s * self.x + c * self.y)
    }

    pub fn angle(self) -> f64 {
        self.y.atan2(self.x)
    }

    pub fn lerp(self, other: Point, t: f64) -> Point {
        self + (other - self) * t
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

impl From<[f64; 2]> for Point {
    fn from([x, y]: [f64; 2]) -> Self {
        Point { x, y }
    }
}

impl From<Point> for [f64; 2] {
    fn from(p: Point) -> Self {
        [p.x, p.y]
    }
}

impl Add for Point {
    type Output = Point;
    fn add(self, rhs: Point) -> Point {
        Point::new(self.x + rhs.x, self.y + rhs.y)
    }
}

impl Sub for Point {
    type Output = Point;
    fn sub(self, rhs: Point) -> Point {
        Point::new(self.x - rhs.x, self.y - rhs.y)
    }
}

impl Mul<f64> for Point {
    type Output = Point;
    fn mul(self, rhs: f64) -> Point {
        Point::new(self.x * rhs, self.y * rhs)
    }
}

impl Neg for Point {
    type Output = Point;
    fn neg(self) -> Point {
        Point::new(-self.x, -self.y)
    }
}

/// Rigid placement of a part: `world = R(rot) * M * local + (tx, ty)` where
/// `M` reflects the local y axis when the part is mirrored.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub tx: f64,
    pub ty: f64,
    pub rot: f64,
    #[serde(skip)]
    pub mirrored: bool,
}

impl Pose {
    pub const IDENTITY: Pose = Pose { tx: 0.0, ty: 0.0, rot: 0.0, mirrored: false };

    pub fn apply(&self, local: Point) -> Point {
        let local = if self.mirrored { Point::new(local.x, -local.y) } else { local };
        local.rotate(self.rot) + Point::new(self.tx, self.ty)
    }

    /// The pose mapping `local_a -> world_a` and `local_b -> world_b`.
    ///
    /// Only the direction of `world_b - world_a` is used; callers guarantee the
    /// two distances agree.
    pub fn from_anchors(local_a: Point, local_b: Point, world_a: Point, world_b: Point, mirrored: bool) -> Pose {
        let m = |p: Point| if mirrored { Point::new(p.x, -p.y) } else { p };
        let (la, lb) = (m(local_a), m(local_b));
        let rot = (world_b - world_a).angle() - (lb - la).angle();
        let t = world_a - la.rotate(rot);
        Pose { tx: t.x, ty: t.y, rot, mirrored }
    }
}
