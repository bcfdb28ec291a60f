//! Compiles and runs the Rust snippets in `book/src` as doc-tests.

macro_rules! chapter {
    ($name:ident, $file:literal) => {
        #[cfg(doctest)]
        #[doc = include_str!(concat!("../../../book/src/", $file))]
        pub struct $name;
    };
}

chapter!(Lexicons, "lexicons.md");
chapter!(Sentiment, "sentiment.md");
chapter!(Dialogue, "dialogue.md");
chapter!(Analytics, "analytics.md");
chapter!(Simulation, "simulation.md");
chapter!(TopicModels, "topic-models.md");
chapter!(Server, "server.md");
