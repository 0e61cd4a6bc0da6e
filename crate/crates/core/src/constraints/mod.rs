//! Formula language, geometric encodings and the translation of expression
//! forests into solver queries.

mod encode;
pub mod formula;
pub mod geometry;
pub mod smtlib;

pub use encode::{EncodeError, Encoder, Encoding};
pub use formula::{Formula, Term, TermNode, VarInfo, VarRole, VarTable, EQ_EPS};
pub use geometry::{
    disc_contains, left_of_line, line_seg, offset, offset_local, region_contains, right_of_line, rotate,
    sector_contains, slope, triangle_contains, visible_region_contains, GeometryError, TVec, Viewer,
};
pub use smtlib::{parse_smtlib, to_smtlib, SmtParseError};
