//! Clinical case suites and per-case questionnaire metrics.

use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::display::DisplayRuleSet;
use crate::engine::simulate_truthful;
use crate::rules::{PatientState, RuleBase, StateError};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ClinicalCase {
    pub id: String,
    #[serde(default)]
    pub drugs: Vec<String>,
    #[serde(default)]
    pub ground_truth: Vec<String>,
}

impl ClinicalCase {
    pub fn state(&self, rb: &RuleBase) -> Result<PatientState, CaseError> {
        PatientState::from_ids(
            rb.catalog(),
            self.drugs.iter().map(String::as_str),
            self.ground_truth.iter().map(String::as_str),
        )
        .map_err(|source| CaseError::Invalid {
            case: self.id.clone(),
            source,
        })
    }
}

#[derive(Debug, Error)]
pub enum CaseError {
    #[error("case `{case}`: {source}")]
    Invalid { case: String, source: StateError },
    #[error("case file: {0}")]
    Parse(#[from] serde_json::Error),
}

pub fn parse_cases(text: &str) -> Result<Vec<ClinicalCase>, CaseError> {
    Ok(serde_json::from_str(text)?)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct CaseMetrics {
    pub case_id: String,
    pub drug_count: usize,
    pub execution_time_seconds: f64,
    pub conditions_displayed: usize,
    pub rules_triggered: usize,
    pub displayed_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct MeanRow {
    pub drug_count: f64,
    pub execution_time_seconds: f64,
    pub conditions_displayed: f64,
    pub rules_triggered: f64,
    pub displayed_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct CaseReport {
    pub total_clinical_conditions: usize,
    pub cases: Vec<CaseMetrics>,
    pub mean: Option<MeanRow>,
}

pub fn evaluate_case(rb: &RuleBase, drs: &DisplayRuleSet, case: &ClinicalCase) -> Result<CaseMetrics, CaseError> {
    let truth = case.state(rb)?;
    let total = rb.catalog().clinical_count();

    let mut initial = PatientState::new();
    for d in truth.present() {
        initial.add_present(rb.catalog(), *d).expect("validated above");
    }
    let start = Instant::now();
    let shown = drs.displayed(&initial);
    let elapsed = start.elapsed().as_secs_f64();
    drop(shown);

    let sim = simulate_truthful(drs, rb, &truth);
    Ok(CaseMetrics {
        case_id: case.id.clone(),
        drug_count: case.drugs.len(),
        execution_time_seconds: elapsed,
        conditions_displayed: sim.displayed_total,
        rules_triggered: sim.final_triggered.len(),
        displayed_fraction: if total == 0 {
            0.0
        } else {
            sim.displayed_total as f64 / total as f64
        },
    })
}

/// Evaluates every case in parallel; rows keep input order.
pub fn run_cases(rb: &RuleBase, drs: &DisplayRuleSet, cases: &[ClinicalCase]) -> Result<CaseReport, CaseError> {
    let threads = std::thread::available_parallelism().map_or(1, |n| n.get()).min(cases.len().max(1));
    let chunk = cases.len().div_ceil(threads).max(1);
    let rows: Vec<Result<CaseMetrics, CaseError>> = std::thread::scope(|scope| {
        let handles: Vec<_> = cases
            .chunks(chunk)
            .map(|part| scope.spawn(move || part.iter().map(|c| evaluate_case(rb, drs, c)).collect::<Vec<_>>()))
            .collect();
        handles
            .into_iter()
            .flat_map(|h| h.join().expect("case worker panicked"))
            .collect()
    });
    let cases = rows.into_iter().collect::<Result<Vec<_>, _>>()?;
    let mean = (!cases.is_empty()).then(|| {
        let n = cases.len() as f64;
        MeanRow {
            drug_count: cases.iter().map(|c| c.drug_count as f64).sum::<f64>() / n,
            execution_time_seconds: cases.iter().map(|c| c.execution_time_seconds).sum::<f64>() / n,
            conditions_displayed: cases.iter().map(|c| c.conditions_displayed as f64).sum::<f64>() / n,
            rules_triggered: cases.iter().map(|c| c.rules_triggered as f64).sum::<f64>() / n,
            displayed_fraction: cases.iter().map(|c| c.displayed_fraction).sum::<f64>() / n,
        }
    });
    Ok(CaseReport {
        total_clinical_conditions: rb.catalog().clinical_count(),
        cases,
        mean,
    })
}
