pub mod relational;
pub mod mtheory;
pub mod script;
pub mod mapper;
pub mod dataset;
pub mod learn;
pub mod ssbn;
pub mod eval;

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/overview.md")]
    mod overview {}
    #[doc = include_str!("../../../book/src/relational.md")]
    mod relational {}
    #[doc = include_str!("../../../book/src/mtheory.md")]
    mod mtheory {}
    #[doc = include_str!("../../../book/src/script.md")]
    mod script {}
    #[doc = include_str!("../../../book/src/mapping.md")]
    mod mapping {}
    #[doc = include_str!("../../../book/src/learning.md")]
    mod learning {}
    #[doc = include_str!("../../../book/src/inference.md")]
    mod inference {}
    #[doc = include_str!("../../../book/src/evaluation.md")]
    mod evaluation {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
