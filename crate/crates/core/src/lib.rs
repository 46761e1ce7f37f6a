pub mod amount;
pub mod cli;
pub mod design;
pub mod fixtures;
pub mod model;
pub mod online;
pub mod preprocess;
pub mod restricted;
pub mod single_channel;
pub mod trace;
