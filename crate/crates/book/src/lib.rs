//! The guide's chapters, included so their Rust snippets run as doc-tests.

macro_rules! chapter {
    ($name:ident, $file:literal) => {
        #[doc = include_str!(concat!("../../../book/src/", $file))]
        pub mod $name {}
    };
}

chapter!(introduction, "introduction.md");
chapter!(concepts, "concepts.md");
chapter!(training, "training.md");
chapter!(evaluation, "evaluation.md");
chapter!(formats, "formats.md");
chapter!(cli, "cli.md");
