pub mod kernels;
pub mod model;
pub mod datapipe;
pub mod protocol;
pub mod synthgen;
pub mod trainer;
pub mod evaluator;

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/kernels.md")]
    mod kernels {}
    #[doc = include_str!("../../../book/src/model.md")]
    mod model {}
    #[doc = include_str!("../../../book/src/datapipe.md")]
    mod datapipe {}
    #[doc = include_str!("../../../book/src/protocol.md")]
    mod protocol {}
    #[doc = include_str!("../../../book/src/trainer.md")]
    mod trainer {}
    #[doc = include_str!("../../../book/src/evaluator.md")]
    mod evaluator {}
    #[doc = include_str!("../../../book/src/synthgen.md")]
    mod synthgen {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
