pub mod bodies;
pub mod error;
pub mod flow;
pub mod gauss;
pub mod geometry;
pub mod io;
pub mod logmink;
pub mod polytope;
pub mod quad;
pub mod sphere;

pub use error::{Error, Result};

// The book's snippets run as doctests.
#[cfg(doctest)]
pub mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    pub mod introduction {}
    #[doc = include_str!("../../../book/src/grids.md")]
    pub mod grids {}
    #[doc = include_str!("../../../book/src/support.md")]
    pub mod support {}
    #[doc = include_str!("../../../book/src/gaussian.md")]
    pub mod gaussian {}
    #[doc = include_str!("../../../book/src/flows.md")]
    pub mod flows {}
    #[doc = include_str!("../../../book/src/logmink.md")]
    pub mod logmink {}
    #[doc = include_str!("../../../book/src/cli.md")]
    pub mod cli {}
}
