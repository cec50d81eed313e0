use core::fmt;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// Rotation axis did not have unit length.
    NonUnitAxis { norm: f64 },
    /// Matrix failed the orthonormality or determinant check.
    InvalidRotation { max_deviation: f64 },
    SingularMatrix,
    BehindCamera { z: f64 },
    InvalidDepth { depth: f64 },
    InvalidIntrinsics(&'static str),
    EmptyCloud,
    InsufficientPairs { got: usize, need: usize },
    /// Relative robot rotations do not span enough axes.
    DegenerateMotion { second_singular_value: f64 },
    Numeric(&'static str),
    EmptyEvaluationSet,
    InvalidSplit { n_calibration: usize, total: usize },
    ClickOutOfBounds { electrode: usize, u: f64, v: f64 },
    InvalidClickDepth { electrode: usize, u: f64, v: f64 },
    ShapeMismatch { expected: usize, got: usize },
    ZeroVariance,
    TooFewSamples { got: usize, need: usize },
    Empty(&'static str),
    InvalidConfig(&'static str),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::NonUnitAxis { norm } => write!(f, "rotation axis is not unit length (norm {norm})"),
            Error::InvalidRotation { max_deviation } => {
                write!(f, "matrix is not a rotation (deviation {max_deviation:e})")
            }
            Error::SingularMatrix => f.write_str("matrix is singular"),
            Error::BehindCamera { z } => write!(f, "point is behind the camera (z = {z})"),
            Error::InvalidDepth { depth } => write!(f, "invalid depth {depth}"),
            Error::InvalidIntrinsics(what) => write!(f, "invalid intrinsics: {what}"),
            Error::EmptyCloud => f.write_str("point cloud has no valid points"),
            Error::InsufficientPairs { got, need } => {
                write!(f, "need at least {need} pose pairs, got {got}")
            }
            Error::DegenerateMotion { second_singular_value } => write!(
                f,
                "robot rotations lack axis diversity (second singular value {second_singular_value:e})"
            ),
            Error::Numeric(what) => write!(f, "numerical failure: {what}"),
            Error::EmptyEvaluationSet => f.write_str("evaluation set is empty"),
            Error::InvalidSplit { n_calibration, total } => write!(
                f,
                "cannot use {n_calibration} of {total} pairs for calibration and keep any for evaluation"
            ),
            Error::ClickOutOfBounds { electrode, u, v } => {
                write!(f, "click for electrode {electrode} at ({u}, {v}) is outside the image")
            }
            Error::InvalidClickDepth { electrode, u, v } => {
                write!(f, "click for electrode {electrode} at ({u}, {v}) has no valid depth")
            }
            Error::ShapeMismatch { expected, got } => {
                write!(f, "shape mismatch: expected {expected}, got {got}")
            }
            Error::ZeroVariance => f.write_str("targets have zero variance in every dimension"),
            Error::TooFewSamples { got, need } => write!(f, "need at least {need} samples, got {got}"),
            Error::Empty(what) => write!(f, "{what} is empty"),
            Error::InvalidConfig(what) => write!(f, "invalid configuration: {what}"),
        }
    }
}

impl core::error::Error for Error {}
