//! Shared output types for experiment runners: result tables, region
//! masks to render, and the pass/fail assertion items that drive the
//! process exit code.

use tflg_core::tfloc::Region;

use crate::table::ResultTable;

/// One named assertion evaluated by a runner.
#[derive(Debug, Clone)]
pub struct CheckItem {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl CheckItem {
    pub fn new(name: impl Into<String>, passed: bool, detail: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            passed,
            detail: detail.into(),
        }
    }
}

/// Everything a runner hands back to the command-line layer.
pub struct ExpReport {
    pub tables: Vec<ResultTable>,
    /// Region masks written as PBM images, keyed by file stem.
    pub masks: Vec<(String, Region)>,
    pub items: Vec<CheckItem>,
}

impl ExpReport {
    pub fn failures(&self) -> Vec<&CheckItem> {
        self.items.iter().filter(|i| !i.passed).collect()
    }
}
