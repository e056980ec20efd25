pub mod evaluate;
pub mod gen_data;
pub mod region_report;
pub mod sample;
pub mod train;
