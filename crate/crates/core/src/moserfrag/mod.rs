//! Explicit constructions: primitives of 2-forms, Moser equalization of
//! area forms, density fixes along skeleton edges, the strip/half-disc
//! fragmentation of disc maps and extensions of curves in the annulus.

pub mod fragment;
pub mod grid;
pub mod curve;
pub mod moser;
pub mod primitive;
pub mod skeleton;

pub use grid::{Grid2, GridDiffeo, GridForm, OneForm, Rect, Region};
pub use moser::{moser_equalize, pullback_residual, MoserResult, MoserSettings};
pub use primitive::{primitive_on_rectangle, BoundaryMode};
pub use skeleton::{skeleton_adjust, SkeletonAdjust};
pub use fragment::{disc_fragment, DiscFragment, FragmentSettings};
pub use curve::{curve_extend, CurveExtension};
