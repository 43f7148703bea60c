pub mod constellation;
pub mod error;
pub mod numerics;
pub mod pulse;
pub mod channel;
pub mod admmse;
pub mod oracle;
pub mod harness;
pub mod selftest;
