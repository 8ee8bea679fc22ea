//! Multi-user visible-light channel simulation and secrecy-energy-efficient
//! precoder design.

pub mod conic;
pub mod geometry;
pub mod power;
pub mod cccp;
pub mod dinkelbach;
pub mod entropy;
pub mod experiment;
pub mod sdr;
pub mod secrecy;
pub mod trace;
pub mod zf;

pub use geometry::{ChannelMatrix, LedLayout, LuminaryParams, NoiseParams, ReceiverParams, Scene};
pub use power::{DrivePolicy, PowerModel, Precoder};
pub use secrecy::{LinkCoefficients, SymbolDistribution};
