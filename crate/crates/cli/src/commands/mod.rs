pub mod attack;
pub mod metric;
pub mod report;
pub mod studies;
pub mod train;
