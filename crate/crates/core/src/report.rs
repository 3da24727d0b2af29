use serde::Serialize;

use crate::constants::DerivedConstants;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConditionEntry {
    pub id: String,
    pub description: String,
    pub lhs: f64,
    pub rhs: f64,
    pub pass: bool,
    /// Positive exactly when the entry passes with room to spare.
    pub margin: f64,
    /// Decided by a closed-form expression rather than a scan or sample.
    pub closed_form: bool,
}

impl ConditionEntry {
    fn build(id: &str, description: String, lhs: f64, rhs: f64, pass: bool, margin: f64) -> Self {
        ConditionEntry {
            id: id.to_string(),
            description,
            lhs,
            rhs,
            pass,
            margin,
            closed_form: true,
        }
    }

    /// lhs ≤ rhs
    pub fn at_most(id: &str, description: impl Into<String>, lhs: f64, rhs: f64) -> Self {
        Self::build(id, description.into(), lhs, rhs, lhs <= rhs, rhs - lhs)
    }

    /// lhs ≥ rhs
    pub fn at_least(id: &str, description: impl Into<String>, lhs: f64, rhs: f64) -> Self {
        Self::build(id, description.into(), lhs, rhs, lhs >= rhs, lhs - rhs)
    }

    /// lhs > rhs
    pub fn greater(id: &str, description: impl Into<String>, lhs: f64, rhs: f64) -> Self {
        Self::build(id, description.into(), lhs, rhs, lhs > rhs, lhs - rhs)
    }

    pub fn sampled(mut self) -> Self {
        self.closed_form = false;
        self
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ConditionReport {
    pub overall: bool,
    pub entries: Vec<ConditionEntry>,
    pub notes: Vec<String>,
    pub constants: DerivedConstants,
}

impl ConditionReport {
    pub fn new(entries: Vec<ConditionEntry>, notes: Vec<String>, constants: DerivedConstants) -> Self {
        let overall = entries.iter().all(|e| e.pass);
        ConditionReport { overall, entries, notes, constants }
    }

    pub fn entry(&self, id: &str) -> Option<&ConditionEntry> {
        self.entries.iter().find(|e| e.id == id)
    }

    pub fn failing_ids(&self) -> Vec<&str> {
        self.entries.iter().filter(|e| !e.pass).map(|e| e.id.as_str()).collect()
    }
}
