//! Design planar linkages from a finite inventory of standard multi-hole parts.

pub mod catalog;
pub mod curves;
pub mod geometry;
pub mod kinematics;
pub mod mechanism;
pub mod objective;
pub mod generate;
pub mod seeding;
pub mod runs;
pub mod search;

/// Guide chapters, compiled as doctests so their examples stay current.
#[cfg(doctest)]
mod guide {
    #[doc = include_str!("../../../book/src/parts.md")]
    struct Parts;
    #[doc = include_str!("../../../book/src/mechanisms.md")]
    struct Mechanisms;
    #[doc = include_str!("../../../book/src/kinematics.md")]
    struct Kinematics;
    #[doc = include_str!("../../../book/src/curves.md")]
    struct Curves;
    #[doc = include_str!("../../../book/src/objective.md")]
    struct Objective;
    #[doc = include_str!("../../../book/src/search.md")]
    struct Search;
    #[doc = include_str!("../../../book/src/archives.md")]
    struct Archives;
}
