//! Joint design of transmit codes and receive filters for an OFDM
//! dual-function radar-communication transmitter.

pub mod linalg;
pub mod scenario;
pub mod merit;
pub mod model;
pub mod commlink;
pub mod radarlink;
pub mod cvxsolver;
pub mod userfilter;
pub mod codeupdate;
pub mod driver;
