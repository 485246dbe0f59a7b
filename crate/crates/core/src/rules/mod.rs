//! Clinical rules as 6-tuples `(Cp, Dp, Ca, Da, U, A)` and their evaluation
//! against a patient state.

mod dsl;
mod validate;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::catalog::{Catalog, CondIdx, ConditionKind};

pub use dsl::{parse_rulebase, print_rulebase, DslError};
pub use validate::{validate_rulebase, Diagnostic};

pub type ConditionSet = BTreeSet<CondIdx>;

/// One disjunction of a rule: satisfied when any member holds.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Union {
    pub clinical: ConditionSet,
    pub non_clinical: ConditionSet,
}

impl Union {
    pub fn len(&self) -> usize {
        self.clinical.len() + self.non_clinical.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn members(&self) -> impl Iterator<Item = CondIdx> + '_ {
        self.clinical.iter().chain(self.non_clinical.iter()).copied()
    }

    pub fn holds(&self, p: &PatientState) -> bool {
        self.clinical.iter().any(|c| p.is_asserted(*c))
            || self.non_clinical.iter().any(|d| p.is_present(*d))
    }
}

/// The condition part shared by clinical rules and display rules.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RuleBody {
    pub c_present: ConditionSet,
    pub d_present: ConditionSet,
    pub c_absent: ConditionSet,
    pub d_absent: ConditionSet,
    pub unions: Vec<Union>,
}

impl RuleBody {
    /// Closed-world evaluation: an unasserted clinical condition is false.
    pub fn holds(&self, p: &PatientState) -> bool {
        self.d_present.iter().all(|d| p.is_present(*d))
            && !self.d_absent.iter().any(|d| p.is_present(*d))
            && !self.c_absent.iter().any(|c| p.is_asserted(*c))
            && self.c_present.iter().all(|c| p.is_asserted(*c))
            && self.unions.iter().all(|u| u.holds(p))
    }

    /// Clinical conditions in every slot, duplicates included.
    pub fn clinical_mentions(&self) -> impl Iterator<Item = CondIdx> + '_ {
        self.c_present
            .iter()
            .chain(self.c_absent.iter())
            .chain(self.unions.iter().flat_map(|u| u.clinical.iter()))
            .copied()
    }

    pub fn non_clinical_mentions(&self) -> impl Iterator<Item = CondIdx> + '_ {
        self.d_present
            .iter()
            .chain(self.d_absent.iter())
            .chain(self.unions.iter().flat_map(|u| u.non_clinical.iter()))
            .copied()
    }

    pub fn mentions(&self) -> impl Iterator<Item = CondIdx> + '_ {
        self.clinical_mentions().chain(self.non_clinical_mentions())
    }

    /// Members that hold under `p` and contribute to satisfying the body.
    pub fn satisfied_members(&self, p: &PatientState) -> Vec<CondIdx> {
        let mut out: Vec<CondIdx> = self
            .c_present
            .iter()
            .chain(self.d_present.iter())
            .copied()
            .collect();
        for u in &self.unions {
            out.extend(u.clinical.iter().filter(|c| p.is_asserted(**c)));
            out.extend(u.non_clinical.iter().filter(|d| p.is_present(**d)));
        }
        out.sort();
        out.dedup();
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verb {
    Start,
    Stop,
    Custom,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Action {
    pub verb: Verb,
    /// Drug condition for `start`/`stop`; `None` for custom actions.
    pub target: Option<CondIdx>,
    pub text: String,
}

impl Action {
    pub fn start(target: CondIdx, catalog: &Catalog) -> Action {
        Action {
            verb: Verb::Start,
            target: Some(target),
            text: format!("Start {}", catalog.get(target).label),
        }
    }

    pub fn stop(target: CondIdx, catalog: &Catalog) -> Action {
        Action {
            verb: Verb::Stop,
            target: Some(target),
            text: format!("Stop {}", catalog.get(target).label),
        }
    }

    pub fn custom(text: impl Into<String>) -> Action {
        Action {
            verb: Verb::Custom,
            target: None,
            text: text.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClinicalRule {
    pub id: String,
    pub body: RuleBody,
    pub action: Action,
}

impl ClinicalRule {
    pub fn triggers(&self, p: &PatientState) -> bool {
        self.body.holds(p)
    }
}

pub fn rule_triggers(rule: &ClinicalRule, p: &PatientState) -> bool {
    rule.triggers(p)
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum RuleError {
    #[error("duplicate rule id `{0}`")]
    DuplicateRule(String),
    #[error("rule `{rule}`: condition index {index} is not in the catalog")]
    UnknownIndex { rule: String, index: u32 },
    #[error("rule `{rule}`: `{condition}` is {actual}, expected {expected}")]
    KindMismatch {
        rule: String,
        condition: String,
        expected: &'static str,
        actual: ConditionKind,
    },
    #[error("rule `{rule}`: union {index} is empty")]
    EmptyUnion { rule: String, index: usize },
    #[error("rule `{rule}`: action target `{target}` is not a drug")]
    ActionTarget { rule: String, target: String },
}

/// An ordered, id-unique collection of rules over one catalog.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RuleBase {
    catalog: Arc<Catalog>,
    rules: Vec<ClinicalRule>,
}

impl RuleBase {
    /// Checks rule id uniqueness, catalog resolution and slot kinds.
    ///
    /// A condition repeated across slots of one rule is accepted here (the
    /// DSL parser rejects it); [`validate_rulebase`] reports the
    /// contradictions this can create.
    pub fn new(catalog: Arc<Catalog>, rules: Vec<ClinicalRule>) -> Result<RuleBase, RuleError> {
        let mut ids = BTreeSet::new();
        for rule in &rules {
            if !ids.insert(rule.id.as_str()) {
                return Err(RuleError::DuplicateRule(rule.id.clone()));
            }
            check_rule(&catalog, rule)?;
        }
        Ok(RuleBase { catalog, rules })
    }

    pub fn empty(catalog: Arc<Catalog>) -> RuleBase {
        RuleBase {
            catalog,
            rules: Vec::new(),
        }
    }

    pub fn catalog(&self) -> &Arc<Catalog> {
        &self.catalog
    }

    pub fn rules(&self) -> &[ClinicalRule] {
        &self.rules
    }

    pub fn len(&self) -> usize {
        self.rules.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rules.is_empty()
    }

    pub fn rule(&self, id: &str) -> Option<&ClinicalRule> {
        self.rules.iter().find(|r| r.id == id)
    }

    /// Distinct clinical conditions mentioned by any rule.
    pub fn referenced_clinical(&self) -> ConditionSet {
        self.rules
            .iter()
            .flat_map(|r| r.body.clinical_mentions())
            .collect()
    }

    pub fn referenced(&self) -> ConditionSet {
        let mut out: ConditionSet = self.rules.iter().flat_map(|r| r.body.mentions()).collect();
        out.extend(self.rules.iter().filter_map(|r| r.action.target));
        out
    }

    pub fn triggered<'a>(&'a self, p: &'a PatientState) -> impl Iterator<Item = &'a ClinicalRule> + 'a {
        self.rules.iter().filter(move |r| r.triggers(p))
    }
}

fn check_rule(catalog: &Catalog, rule: &ClinicalRule) -> Result<(), RuleError> {
    let check = |set: &ConditionSet, clinical: bool| -> Result<(), RuleError> {
        for idx in set {
            let cond = catalog.try_get(*idx).ok_or(RuleError::UnknownIndex {
                rule: rule.id.clone(),
                index: idx.0,
            })?;
            if cond.is_clinical() != clinical {
                return Err(RuleError::KindMismatch {
                    rule: rule.id.clone(),
                    condition: cond.id.clone(),
                    expected: if clinical { "clinical" } else { "non-clinical" },
                    actual: cond.kind,
                });
            }
        }
        Ok(())
    };
    let b = &rule.body;
    check(&b.c_present, true)?;
    check(&b.c_absent, true)?;
    check(&b.d_present, false)?;
    check(&b.d_absent, false)?;
    for (i, u) in b.unions.iter().enumerate() {
        if u.is_empty() {
            return Err(RuleError::EmptyUnion {
                rule: rule.id.clone(),
                index: i,
            });
        }
        check(&u.clinical, true)?;
        check(&u.non_clinical, false)?;
    }
    if matches!(rule.action.verb, Verb::Start | Verb::Stop) {
        let target = rule.action.target.and_then(|t| catalog.try_get(t));
        match target {
            Some(c) if c.kind == ConditionKind::Drug => {}
            Some(c) => {
                return Err(RuleError::ActionTarget {
                    rule: rule.id.clone(),
                    target: c.id.clone(),
                })
            }
            None => {
                return Err(RuleError::ActionTarget {
                    rule: rule.id.clone(),
                    target: "<none>".into(),
                })
            }
        }
    }
    Ok(())
}

/// What is known about a patient: non-clinical facts (drugs, labs) and the
/// clinical conditions entered so far with their chosen code.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PatientState {
    present: BTreeSet<CondIdx>,
    asserted: BTreeMap<CondIdx, usize>,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum StateError {
    #[error("unknown condition `{0}`")]
    UnknownCondition(String),
    #[error("`{0}` is clinical; expected a drug or lab")]
    ExpectedNonClinical(String),
    #[error("`{0}` is not a clinical condition")]
    ExpectedClinical(String),
    #[error("code `{code}` does not belong to `{condition}`")]
    UnknownCode { condition: String, code: String },
}

impl PatientState {
    pub fn new() -> PatientState {
        PatientState::default()
    }

    /// Builds a state from ids, asserting clinical ones with their general code.
    pub fn from_ids<'a>(
        catalog: &Catalog,
        non_clinical: impl IntoIterator<Item = &'a str>,
        clinical: impl IntoIterator<Item = &'a str>,
    ) -> Result<PatientState, StateError> {
        let mut p = PatientState::new();
        for id in non_clinical {
            let idx = catalog
                .lookup(id)
                .ok_or_else(|| StateError::UnknownCondition(id.to_string()))?;
            p.add_present(catalog, idx)?;
        }
        for id in clinical {
            let idx = catalog
                .lookup(id)
                .ok_or_else(|| StateError::UnknownCondition(id.to_string()))?;
            p.assert_clinical(catalog, idx, None)?;
        }
        Ok(p)
    }

    pub fn is_present(&self, idx: CondIdx) -> bool {
        self.present.contains(&idx)
    }

    pub fn is_asserted(&self, idx: CondIdx) -> bool {
        self.asserted.contains_key(&idx)
    }

    pub fn present(&self) -> &BTreeSet<CondIdx> {
        &self.present
    }

    pub fn asserted(&self) -> impl Iterator<Item = CondIdx> + '_ {
        self.asserted.keys().copied()
    }

    pub fn asserted_set(&self) -> BTreeSet<CondIdx> {
        self.asserted.keys().copied().collect()
    }

    /// Index into the condition's code list.
    pub fn chosen_code(&self, idx: CondIdx) -> Option<usize> {
        self.asserted.get(&idx).copied()
    }

    pub fn add_present(&mut self, catalog: &Catalog, idx: CondIdx) -> Result<(), StateError> {
        let cond = catalog
            .try_get(idx)
            .ok_or_else(|| StateError::UnknownCondition(format!("#{}", idx.0)))?;
        if cond.is_clinical() {
            return Err(StateError::ExpectedNonClinical(cond.id.clone()));
        }
        self.present.insert(idx);
        Ok(())
    }

    pub fn set_present(
        &mut self,
        catalog: &Catalog,
        ids: impl IntoIterator<Item = CondIdx>,
    ) -> Result<(), StateError> {
        let mut next = PatientState {
            present: BTreeSet::new(),
            asserted: BTreeMap::new(),
        };
        for idx in ids {
            next.add_present(catalog, idx)?;
        }
        self.present = next.present;
        Ok(())
    }

    /// Asserts a clinical condition. `code` is an index into its code list;
    /// `None` selects the most general code.
    pub fn assert_clinical(
        &mut self,
        catalog: &Catalog,
        idx: CondIdx,
        code: Option<usize>,
    ) -> Result<(), StateError> {
        let cond = catalog
            .try_get(idx)
            .ok_or_else(|| StateError::UnknownCondition(format!("#{}", idx.0)))?;
        if !cond.is_clinical() {
            return Err(StateError::ExpectedClinical(cond.id.clone()));
        }
        let code = match code {
            Some(i) if i < cond.codes.len() => i,
            Some(i) => {
                return Err(StateError::UnknownCode {
                    condition: cond.id.clone(),
                    code: format!("#{i}"),
                })
            }
            None => cond.general_code_index().unwrap_or(0),
        };
        self.asserted.insert(idx, code);
        Ok(())
    }

    /// Unchecked variant used by hot loops that already know `idx` is clinical.
    pub(crate) fn assert_unchecked(&mut self, idx: CondIdx, code: usize) {
        self.asserted.insert(idx, code);
    }

    pub fn retract(&mut self, idx: CondIdx) -> bool {
        self.asserted.remove(&idx).is_some()
    }
}

impl fmt::Display for RuleBase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&print_rulebase(self))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::demo;

    fn d2_d6() -> RuleBase {
        demo::d2_d6_rulebase()
    }

    fn state(rb: &RuleBase, drugs: &[&str], clinical: &[&str]) -> PatientState {
        PatientState::from_ids(rb.catalog(), drugs.iter().copied(), clinical.iter().copied()).unwrap()
    }

    #[test]
    fn d2_triggers_without_fibre() {
        let rb = d2_d6();
        let d2 = rb.rule("D2").unwrap();
        assert!(rule_triggers(d2, &state(&rb, &[], &["constipation", "diverticulosis"])));
        assert!(!rule_triggers(
            d2,
            &state(&rb, &["fibre"], &["constipation", "diverticulosis"])
        ));
        assert!(!rule_triggers(d2, &PatientState::new()));
    }

    #[test]
    fn d6_union() {
        let rb = d2_d6();
        let d6 = rb.rule("D6").unwrap();
        assert!(d6.triggers(&state(&rb, &["antipsychotic"], &["lewy_body"])));
        assert!(d6.triggers(&state(&rb, &["antipsychotic"], &["parkinsonism", "lewy_body"])));
        assert!(!d6.triggers(&state(&rb, &["antipsychotic"], &[])));
        assert!(!d6.triggers(&state(&rb, &[], &["parkinsonism"])));
    }

    #[test]
    fn state_kind_checks() {
        let rb = d2_d6();
        let cat = rb.catalog();
        assert!(matches!(
            PatientState::from_ids(cat, ["constipation"], []),
            Err(StateError::ExpectedNonClinical(_))
        ));
        assert!(matches!(
            PatientState::from_ids(cat, [], ["fibre"]),
            Err(StateError::ExpectedClinical(_))
        ));
        assert!(matches!(
            PatientState::from_ids(cat, ["gout"], []),
            Err(StateError::UnknownCondition(_))
        ));
    }

    #[test]
    fn rulebase_rejects_kind_mismatch_and_duplicate_ids() {
        let rb = d2_d6();
        let cat = rb.catalog().clone();
        let fibre = cat.lookup("fibre").unwrap();
        let mut bad = rb.rules()[0].clone();
        bad.body.c_present.insert(fibre);
        assert!(matches!(
            RuleBase::new(cat.clone(), vec![bad]),
            Err(RuleError::KindMismatch { .. })
        ));
        let r = rb.rules()[0].clone();
        assert_eq!(
            RuleBase::new(cat, vec![r.clone(), r]).unwrap_err(),
            RuleError::DuplicateRule("D2".into())
        );
    }
}
