pub mod ao;
pub mod benchmarks;
pub mod builder;
pub mod channel;
pub mod conic;
pub mod linalg;
pub mod selftest;
pub mod sweep;
pub mod validator;
