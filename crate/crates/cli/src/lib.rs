//! Experiment driver for the time-frequency localization library:
//! configuration, deterministic CSV output, the four experiment
//! pipelines, and the acceptance checks behind `tflg check`.

pub mod boundsweep;
pub mod check;
pub mod config;
pub mod exp1;
pub mod exp2;
pub mod exp3;
pub mod report;
pub mod table;
