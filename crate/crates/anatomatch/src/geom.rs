//! Grid and physical coordinates.
//!
//! The two point types are deliberately distinct: [`VoxelPoint`] is an integer
//! grid index, [`PhysPoint`] is a continuous millimeter coordinate. Conversion
//! always goes through the volume spacing and is never implicit.
//!
//! Axis order is (z, y, x) everywhere: in memory, on disk, and in every
//! `[T; 3]` triple in this crate.

use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// Volume axis, in (z, y, x) order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    Z,
    Y,
    X,
}

impl std::fmt::Display for Axis {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Axis::Z => write!(f, "z"),
            Axis::Y => write!(f, "y"),
            Axis::X => write!(f, "x"),
        }
    }
}

pub const AXES: [Axis; 3] = [Axis::Z, Axis::Y, Axis::X];

/// Integer voxel index into a volume grid. Serializes as `[z, y, x]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct VoxelPoint {
    pub z: i64,
    pub y: i64,
    pub x: i64,
}

impl VoxelPoint {
    pub fn new(z: i64, y: i64, x: i64) -> Self {
        VoxelPoint { z, y, x }
    }

    pub fn to_array(self) -> [i64; 3] {
        [self.z, self.y, self.x]
    }

    pub fn from_array(a: [i64; 3]) -> Self {
        VoxelPoint::new(a[0], a[1], a[2])
    }

    pub fn as_f64(self) -> [f64; 3] {
        [self.z as f64, self.y as f64, self.x as f64]
    }

    /// Exact voxel -> millimeter conversion (component-wise spacing scale).
    pub fn to_phys(self, spacing_mm: [f64; 3]) -> PhysPoint {
        PhysPoint {
            z: self.z as f64 * spacing_mm[0],
            y: self.y as f64 * spacing_mm[1],
            x: self.x as f64 * spacing_mm[2],
        }
    }

    /// Euclidean distance to another grid point, in voxel units.
    pub fn distance_to(self, other: VoxelPoint) -> f64 {
        let dz = (self.z - other.z) as f64;
        let dy = (self.y - other.y) as f64;
        let dx = (self.x - other.x) as f64;
        (dz * dz + dy * dy + dx * dx).sqrt()
    }
}

impl std::fmt::Display for VoxelPoint {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "({}, {}, {})", self.z, self.y, self.x)
    }
}

impl Serialize for VoxelPoint {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.to_array().serialize(s)
    }
}

impl<'de> Deserialize<'de> for VoxelPoint {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let a = <[i64; 3]>::deserialize(d)?;
        Ok(VoxelPoint::from_array(a))
    }
}

/// Continuous millimeter coordinate. Serializes as `[z, y, x]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhysPoint {
    pub z: f64,
    pub y: f64,
    pub x: f64,
}

impl PhysPoint {
    pub fn new(z: f64, y: f64, x: f64) -> Self {
        PhysPoint { z, y, x }
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.z, self.y, self.x]
    }

    pub fn from_array(a: [f64; 3]) -> Self {
        PhysPoint::new(a[0], a[1], a[2])
    }

    /// Millimeter -> continuous voxel coordinate.
    pub fn to_voxel_coords(self, spacing_mm: [f64; 3]) -> [f64; 3] {
        [
            self.z / spacing_mm[0],
            self.y / spacing_mm[1],
            self.x / spacing_mm[2],
        ]
    }

    /// Nearest integer voxel (round half away from zero, per `f64::round`).
    pub fn round_to_voxel(self, spacing_mm: [f64; 3]) -> VoxelPoint {
        let v = self.to_voxel_coords(spacing_mm);
        VoxelPoint::new(v[0].round() as i64, v[1].round() as i64, v[2].round() as i64)
    }

    pub fn distance_to(self, other: PhysPoint) -> f64 {
        let dz = self.z - other.z;
        let dy = self.y - other.y;
        let dx = self.x - other.x;
        (dz * dz + dy * dy + dx * dx).sqrt()
    }

    pub fn is_finite(self) -> bool {
        self.z.is_finite() && self.y.is_finite() && self.x.is_finite()
    }
}

impl Serialize for PhysPoint {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.to_array().serialize(s)
    }
}

impl<'de> Deserialize<'de> for PhysPoint {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let a = <[f64; 3]>::deserialize(d)?;
        if !a.iter().all(|v| v.is_finite()) {
            return Err(D::Error::custom("non-finite coordinate"));
        }
        Ok(PhysPoint::from_array(a))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn voxel_to_phys_is_exact_for_integers() {
        let spacing = [2.0, 2.0, 2.0];
        for z in 0..32i64 {
            let p = VoxelPoint::new(z, 3, 7);
            let mm = p.to_phys(spacing);
            assert_eq!(mm.z, z as f64 * 2.0);
            assert_eq!(mm.y, 6.0);
            assert_eq!(mm.x, 14.0);
            // round trip through continuous voxel coordinates
            let back = mm.to_voxel_coords(spacing);
            assert_eq!(back, p.as_f64());
        }
    }

    #[test]
    fn phys_round_trip_with_fractional_spacing() {
        let spacing = [1.5, 0.75, 2.5];
        let p = VoxelPoint::new(5, 8, 3);
        let back = p.to_phys(spacing).round_to_voxel(spacing);
        assert_eq!(back, p);
    }

    #[test]
    fn serde_points_are_arrays() {
        let v = VoxelPoint::new(1, 2, 3);
        assert_eq!(serde_json::to_string(&v).unwrap(), "[1,2,3]");
        let p: PhysPoint = serde_json::from_str("[1.5,0.0,-2.0]").unwrap();
        assert_eq!(p, PhysPoint::new(1.5, 0.0, -2.0));
        assert!(serde_json::from_str::<PhysPoint>("[1.0,null,2.0]").is_err());
    }
}
