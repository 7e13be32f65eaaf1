pub mod bench;
pub mod config;
pub mod coupling;
pub mod error;
pub mod fft;
pub mod field;
pub mod interaction;
pub mod output;
pub mod particles;
pub mod protocol;
pub mod sim;
pub mod spectrum;
pub mod stream;
pub mod synthesis;

pub use error::{Error, Result};
