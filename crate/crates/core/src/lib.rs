pub mod comment;
pub mod dataset;
pub mod eval;
pub mod extractor;
pub mod generator;
pub mod http;
pub mod llm;
pub mod markdown;
pub mod model;
pub mod retriever;
pub mod segment;

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../README.md")]
    mod readme {}
    #[doc = include_str!("../../../book/src/replay.md")]
    mod replay {}
    #[doc = include_str!("../../../book/src/sentences.md")]
    mod sentences {}
    #[doc = include_str!("../../../book/src/voting.md")]
    mod voting {}
    #[doc = include_str!("../../../book/src/metrics.md")]
    mod metrics {}
}
