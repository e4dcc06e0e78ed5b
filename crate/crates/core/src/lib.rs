pub mod attacksim;
pub mod config;
pub mod hashcodec;
pub mod net;
pub mod protocol;
pub mod userstore;
