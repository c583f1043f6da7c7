//! Compiles every chapter of the guide under `book/src` as documentation so
//! `cargo test` runs its snippets.

macro_rules! chapter {
    ($name:ident, $file:literal) => {
        #[doc = include_str!(concat!("../../../book/src/", $file))]
        pub mod $name {}
    };
}

chapter!(introduction, "introduction.md");
chapter!(hand_model, "hand-model.md");
chapter!(grasp_model, "grasp-model.md");
chapter!(stability, "stability.md");
chapter!(force_search, "force-search.md");
chapter!(kinematic_search, "kinematic-search.md");
chapter!(analysis, "analysis.md");
chapter!(cli, "cli.md");
