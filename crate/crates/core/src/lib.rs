pub mod camera_move;
pub mod config;
pub mod depth;
pub mod detection;
pub mod evaluation;
pub mod fps;
pub mod ingest;
pub mod kvfile;
pub mod pipeline;
pub mod scale;
pub mod simulator;
pub mod speed;
pub mod tracking;
