pub mod checksum;
pub mod client;
pub mod net;
pub mod recorder;
pub mod scenario;
pub mod serve;
pub mod signaling;
