pub mod adversary;
pub mod analysis;
pub mod bits;
pub mod distribution;
pub mod hash_suite;
pub mod protocol_sim;
pub mod role;
pub mod signing;
