//! Synthetic clean and corrupted point-cloud datasets.

mod corrupt;
mod dataset;
mod pcld;
mod shapes;

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use thiserror::Error;

pub use corrupt::{corrupt, corrupt_with_record, CorruptionRecord};
pub use dataset::{
    build_dataset, few_shot_split, row_seed, Dataset, DatasetSpec, Episode, Manifest, ManifestRow, Split, MANIFEST_FILE,
};
pub use pcld::{encode_pcld, read_pcld, write_pcld};
pub use shapes::generate_shape;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("unknown shape kind `{0}`")]
    UnknownKind(String),
    #[error("unknown sub-mode `{0}`")]
    UnknownSubMode(String),
    #[error("clouds need at least 16 points, got {0}")]
    TooFewPoints(usize),
    #[error("invalid dataset spec: {0}")]
    Spec(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {reason}")]
    Format { path: PathBuf, reason: String },
    #[error("not enough samples: {0}")]
    Insufficient(String),
}

impl DataError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        DataError::Io {
            path: path.into(),
            source,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ShapeKind {
    Sphere,
    Cube,
    Cylinder,
    Cone,
    Torus,
    Plane,
    Capsule,
    Cross,
}

impl ShapeKind {
    pub const ALL: [ShapeKind; 8] = [
        ShapeKind::Sphere,
        ShapeKind::Cube,
        ShapeKind::Cylinder,
        ShapeKind::Cone,
        ShapeKind::Torus,
        ShapeKind::Plane,
        ShapeKind::Capsule,
        ShapeKind::Cross,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ShapeKind::Sphere => "sphere",
            ShapeKind::Cube => "cube",
            ShapeKind::Cylinder => "cylinder",
            ShapeKind::Cone => "cone",
            ShapeKind::Torus => "torus",
            ShapeKind::Plane => "plane",
            ShapeKind::Capsule => "capsule",
            ShapeKind::Cross => "cross",
        }
    }
}

impl fmt::Display for ShapeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ShapeKind {
    type Err = DataError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| DataError::UnknownKind(s.to_string()))
    }
}

/// Corruption pattern applied on top of a clean shape.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SubMode {
    Clean,
    CropMissing,
    JitterNoise,
    OutlierClutter,
}

impl SubMode {
    pub const ALL: [SubMode; 4] = [
        SubMode::Clean,
        SubMode::CropMissing,
        SubMode::JitterNoise,
        SubMode::OutlierClutter,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SubMode::Clean => "clean",
            SubMode::CropMissing => "crop_missing",
            SubMode::JitterNoise => "jitter_noise",
            SubMode::OutlierClutter => "outlier_clutter",
        }
    }

    pub fn is_corrupted(self) -> bool {
        self != SubMode::Clean
    }
}

impl fmt::Display for SubMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SubMode {
    type Err = DataError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| DataError::UnknownSubMode(s.to_string()))
    }
}
