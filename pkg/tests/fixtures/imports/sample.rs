extern crate serde;
use std::collections::HashMap;
use tokio::sync::{mpsc, oneshot};
pub use crate::config::Settings;
pub(crate) use super::helpers;

fn main() {}
