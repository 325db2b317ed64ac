pub mod analysis;
pub mod bench;
pub mod datagen;
pub mod eval;
pub mod gateway;
pub mod jsonx;
pub mod policy;
pub mod prompts;
pub mod render;
pub mod review;
pub mod scalar;
pub mod trajectory;

pub type PowerLawFit64 = analysis::PowerLawFit<f64>;
pub type CorrelationResult64 = analysis::CorrelationResult<f64>;
pub type GainAnalysis64 = analysis::GainAnalysis<f64>;
