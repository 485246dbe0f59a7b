//! Fixtures shared by the benchmarks.

use rulequest_core::display::{compile_display_rules, DisplayRuleSet};
use rulequest_core::ordering::condition_frequency_order;
use rulequest_core::rules::{PatientState, RuleBase};
use rulequest_core::synth::{generate_cases, generate_synthetic, CaseSpec, SynthSpec};

/// A guideline-sized synthetic rulebase (124 rules, 73 clinical
/// conditions), compiled under the frequency order, plus a polypharmacy
/// patient with only drug facts known.
pub struct Fixture {
    pub rulebase: RuleBase,
    pub display: DisplayRuleSet,
    pub patient: PatientState,
}

pub fn guideline_fixture(seed: u64) -> Fixture {
    let rulebase = generate_synthetic(&SynthSpec::guideline_scale(seed))
        .expect("guideline spec is feasible")
        .load()
        .expect("generated files load");
    let display = compile_display_rules(&rulebase, &condition_frequency_order(&rulebase)).expect("compiles");
    let case = generate_cases(rulebase.catalog(), &CaseSpec::polypharmacy(1, seed)).remove(0);
    let patient = PatientState::from_ids(rulebase.catalog(), case.drugs.iter().map(String::as_str), [])
        .expect("case drugs are in the catalog");
    Fixture { rulebase, display, patient }
}

#[cfg(test)]
mod tests {
    #[test]
    fn fixture_has_guideline_shape() {
        let f = super::guideline_fixture(1);
        assert_eq!(f.rulebase.len(), 124);
        assert_eq!(f.rulebase.catalog().clinical_count(), 73);
        assert!(!f.patient.present().is_empty());
    }
}
