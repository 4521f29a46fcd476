pub mod dataset;
pub mod executor;
pub mod kinematics;
mod net;
pub mod orchestrator;
pub mod plan;
pub mod planner;
pub mod sim;
pub mod thermal;

pub use net::png_base64;
