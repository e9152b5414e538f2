//! Lattice directions, module faces and the 24 proper cube orientations.

use std::fmt;

use serde::{Deserialize, Serialize};

/// An integer lattice cell.
pub type Cell = [i32; 3];

pub(crate) fn add(a: Cell, b: Cell) -> Cell {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

pub(crate) fn sub(a: Cell, b: Cell) -> Cell {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

/// One of the six world axis directions.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Direction {
    #[serde(rename = "+x")]
    PosX,
    #[serde(rename = "-x")]
    NegX,
    #[serde(rename = "+y")]
    PosY,
    #[serde(rename = "-y")]
    NegY,
    #[serde(rename = "+z")]
    PosZ,
    #[serde(rename = "-z")]
    NegZ,
}

impl Direction {
    pub const ALL: [Direction; 6] = [
        Direction::PosX,
        Direction::NegX,
        Direction::PosY,
        Direction::NegY,
        Direction::PosZ,
        Direction::NegZ,
    ];

    pub fn vector(self) -> Cell {
        match self {
            Direction::PosX => [1, 0, 0],
            Direction::NegX => [-1, 0, 0],
            Direction::PosY => [0, 1, 0],
            Direction::NegY => [0, -1, 0],
            Direction::PosZ => [0, 0, 1],
            Direction::NegZ => [0, 0, -1],
        }
    }

    pub fn unit(self) -> [f64; 3] {
        let v = self.vector();
        [v[0] as f64, v[1] as f64, v[2] as f64]
    }

    pub fn from_vector(v: Cell) -> Option<Direction> {
        Direction::ALL.into_iter().find(|d| d.vector() == v)
    }

    pub fn opposite(self) -> Direction {
        match self {
            Direction::PosX => Direction::NegX,
            Direction::NegX => Direction::PosX,
            Direction::PosY => Direction::NegY,
            Direction::NegY => Direction::PosY,
            Direction::PosZ => Direction::NegZ,
            Direction::NegZ => Direction::PosZ,
        }
    }

    /// Axis index (0 = x, 1 = y, 2 = z).
    pub fn axis(self) -> usize {
        match self {
            Direction::PosX | Direction::NegX => 0,
            Direction::PosY | Direction::NegY => 1,
            Direction::PosZ | Direction::NegZ => 2,
        }
    }

    pub fn is_perpendicular(self, other: Direction) -> bool {
        self.axis() != other.axis()
    }

    pub fn label(self) -> &'static str {
        match self {
            Direction::PosX => "+x",
            Direction::NegX => "-x",
            Direction::PosY => "+y",
            Direction::NegY => "-y",
            Direction::PosZ => "+z",
            Direction::NegZ => "-z",
        }
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// A body face index in `1..=6`. Faces 1/3, 2/4 and 5/6 are opposite pairs.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub struct Face(u8);

impl Face {
    pub const ALL: [Face; 6] = [Face(1), Face(2), Face(3), Face(4), Face(5), Face(6)];

    pub fn new(index: u8) -> Option<Face> {
        (1..=6).contains(&index).then_some(Face(index))
    }

    pub fn index(self) -> u8 {
        self.0
    }

    pub fn opposite(self) -> Face {
        match self.0 {
            1 => Face(3),
            2 => Face(4),
            3 => Face(1),
            4 => Face(2),
            5 => Face(6),
            _ => Face(5),
        }
    }

    fn slot(self) -> usize {
        (self.0 - 1) as usize
    }
}

impl TryFrom<u8> for Face {
    type Error = String;

    fn try_from(value: u8) -> Result<Self, Self::Error> {
        Face::new(value).ok_or_else(|| format!("face index {value} outside 1..=6"))
    }
}

impl From<Face> for u8 {
    fn from(face: Face) -> u8 {
        face.0
    }
}

impl fmt::Display for Face {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Why a face-to-direction map is not a proper cube orientation.
#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum OrientationError {
    #[error("direction {0} assigned to more than one face")]
    NotBijective(Direction),
    #[error("faces {0} and {1} are opposite but not mapped to opposite directions")]
    OppositeMismatch(Face, Face),
    #[error("orientation is a reflection (determinant -1)")]
    Improper,
}

/// Face-to-direction map for one module: `dirs[f - 1]` is the world
/// direction that body face `f` points along.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Orientation([Direction; 6]);

impl Default for Orientation {
    fn default() -> Self {
        Orientation::IDENTITY
    }
}

impl Orientation {
    /// Body frame aligned with the world: face 1 = +x, 2 = +y, 5 = +z.
    pub const IDENTITY: Orientation = Orientation([
        Direction::PosX,
        Direction::PosY,
        Direction::NegX,
        Direction::NegY,
        Direction::PosZ,
        Direction::NegZ,
    ]);

    /// Unchecked constructor; use [`Orientation::check`] before trusting it.
    pub fn from_directions(dirs: [Direction; 6]) -> Orientation {
        Orientation(dirs)
    }

    /// Builds an orientation from the world directions of the body x (face 1)
    /// and body y (face 2) axes. Returns `None` if they are not perpendicular.
    pub fn from_axes(x: Direction, y: Direction) -> Option<Orientation> {
        if !x.is_perpendicular(y) {
            return None;
        }
        let z = Direction::from_vector(cross(x.vector(), y.vector()))?;
        Some(Orientation([x, y, x.opposite(), y.opposite(), z, z.opposite()]))
    }

    /// All 24 orientation-preserving cube symmetries, in a fixed order.
    pub fn all_proper() -> Vec<Orientation> {
        let mut out = Vec::with_capacity(24);
        for x in Direction::ALL {
            for y in Direction::ALL {
                if let Some(o) = Orientation::from_axes(x, y) {
                    out.push(o);
                }
            }
        }
        out
    }

    pub fn directions(&self) -> [Direction; 6] {
        self.0
    }

    pub fn direction(&self, face: Face) -> Direction {
        self.0[face.slot()]
    }

    /// The body face currently pointing along `dir`.
    pub fn face_toward(&self, dir: Direction) -> Option<Face> {
        self.0.iter().position(|&d| d == dir).map(|i| Face(i as u8 + 1))
    }

    /// Column-major rotation: column `k` is the world image of body axis `k`.
    pub fn matrix(&self) -> [[i32; 3]; 3] {
        let x = self.0[0].vector();
        let y = self.0[1].vector();
        let z = self.0[4].vector();
        [[x[0], y[0], z[0]], [x[1], y[1], z[1]], [x[2], y[2], z[2]]]
    }

    pub fn check(&self) -> Result<(), OrientationError> {
        for (i, d) in self.0.iter().enumerate() {
            if self.0[..i].contains(d) {
                return Err(OrientationError::NotBijective(*d));
            }
        }
        for (a, b) in [(1, 3), (2, 4), (5, 6)] {
            let (fa, fb) = (Face(a), Face(b));
            if self.direction(fa).opposite() != self.direction(fb) {
                return Err(OrientationError::OppositeMismatch(fa, fb));
            }
        }
        if determinant(self.matrix()) != 1 {
            return Err(OrientationError::Improper);
        }
        Ok(())
    }
}

pub(crate) fn cross(a: Cell, b: Cell) -> Cell {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

fn determinant(m: [[i32; 3]; 3]) -> i32 {
    m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_is_proper() {
        assert_eq!(Orientation::IDENTITY.check(), Ok(()));
        assert_eq!(Orientation::IDENTITY.direction(Face::new(5).unwrap()), Direction::PosZ);
    }

    #[test]
    fn there_are_24_proper_orientations() {
        let all = Orientation::all_proper();
        assert_eq!(all.len(), 24);
        assert!(all.iter().all(|o| o.check().is_ok()));
        let mut dedup = all.clone();
        dedup.sort();
        dedup.dedup();
        assert_eq!(dedup.len(), 24);
    }

    #[test]
    fn reflection_is_rejected() {
        use Direction::*;
        let mirrored = Orientation::from_directions([PosX, PosY, NegX, NegY, NegZ, PosZ]);
        assert_eq!(mirrored.check(), Err(OrientationError::Improper));
    }

    #[test]
    fn opposite_pairs_enforced() {
        use Direction::*;
        let bad = Orientation::from_directions([PosX, PosY, NegY, NegX, PosZ, NegZ]);
        assert!(matches!(bad.check(), Err(OrientationError::OppositeMismatch(..))));
        let dup = Orientation::from_directions([PosX, PosX, NegX, NegY, PosZ, NegZ]);
        assert_eq!(dup.check(), Err(OrientationError::NotBijective(PosX)));
    }

    #[test]
    fn face_serializes_as_integer() {
        let f = Face::new(4).unwrap();
        assert_eq!(serde_json::to_string(&f).unwrap(), "4");
        assert!(serde_json::from_str::<Face>("7").is_err());
        let o: Orientation = serde_json::from_str(r#"["+x","+y","-x","-y","+z","-z"]"#).unwrap();
        assert_eq!(o, Orientation::IDENTITY);
    }
}
