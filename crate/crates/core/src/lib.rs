pub mod frontend;
pub mod stubber;
pub mod iospec;
pub mod prompt;
pub mod llm;
pub mod repair;
pub mod trace;
pub mod report;
pub mod adapter;
pub mod pipeline;
