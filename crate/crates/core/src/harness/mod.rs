pub mod analysis;
pub mod config;
pub mod oracle;
pub mod run;
