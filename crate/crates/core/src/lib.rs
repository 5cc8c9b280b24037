pub mod casestudy;
pub mod detection;
pub mod energy;
pub mod error;
pub mod fixtures;
pub mod protocol;
pub mod replay;
pub mod sweep;
pub mod time;
pub mod topology;
pub mod config;
pub mod trace;

pub mod sim {
    pub mod attacker;
    pub mod kernel;
    pub mod metrics;
    pub mod queue;
}
