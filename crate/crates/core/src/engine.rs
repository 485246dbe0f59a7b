//! Interactive questionnaire sessions.
//!
//! A session owns a patient state and re-runs the compiled display rules
//! after each mutation. The visible set is the rule-displayed set plus every
//! asserted clinical condition, collapsed along the is-a hierarchy (asserted
//! conditions are never collapsed away).

use std::collections::BTreeSet;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::catalog::{Catalog, CondIdx, Code};
use crate::display::{compile_display_rules, CompileError, DisplayRuleSet, Order};
use crate::rules::{PatientState, RuleBase, StateError, Verb};

/// Schema tag written into every [`SessionSnapshot`].
pub const SNAPSHOT_SCHEMA: u32 = 1;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum EngineError {
    #[error("unknown condition `{0}`")]
    UnknownCondition(String),
    #[error("`{0}` is not a clinical condition")]
    NotClinical(String),
    #[error("`{0}` is clinical; expected a drug or lab")]
    NotNonClinical(String),
    #[error("`{0}` is not currently displayed")]
    NotDisplayed(String),
    #[error("code `{code}` does not belong to `{condition}`")]
    UnknownCode { condition: String, code: String },
    #[error("unsupported snapshot schema {0}")]
    Schema(u32),
    #[error(transparent)]
    Compile(#[from] CompileError),
}

impl From<StateError> for EngineError {
    fn from(e: StateError) -> Self {
        match e {
            StateError::UnknownCondition(id) => EngineError::UnknownCondition(id),
            StateError::ExpectedNonClinical(id) => EngineError::NotNonClinical(id),
            StateError::ExpectedClinical(id) => EngineError::NotClinical(id),
            StateError::UnknownCode { condition, code } => EngineError::UnknownCode { condition, code },
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct QuestionnaireDiff {
    pub appeared: BTreeSet<String>,
    pub disappeared: BTreeSet<String>,
    pub unchanged: BTreeSet<String>,
}

impl QuestionnaireDiff {
    pub fn is_empty(&self) -> bool {
        self.appeared.is_empty() && self.disappeared.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct ViewItem {
    pub condition_id: String,
    pub label: String,
    pub checked: bool,
    pub chosen_code: Option<String>,
    pub available_codes: Vec<Code>,
    pub is_new: bool,
    pub has_star: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Panel {
    pub category: String,
    pub color: String,
    pub items: Vec<ViewItem>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct QuestionnaireView {
    pub panels: Vec<Panel>,
}

impl QuestionnaireView {
    pub fn item(&self, id: &str) -> Option<&ViewItem> {
        self.items().find(|i| i.condition_id == id)
    }

    pub fn items(&self) -> impl Iterator<Item = &ViewItem> {
        self.panels.iter().flat_map(|p| p.items.iter())
    }

    pub fn ids(&self) -> BTreeSet<String> {
        self.items().map(|i| i.condition_id.clone()).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RecommendedAction {
    pub verb: Verb,
    pub target: Option<String>,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct Recommendation {
    pub rule_id: String,
    pub action: RecommendedAction,
    pub triggering_conditions: Vec<String>,
}

/// Persistable session state.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SessionSnapshot {
    pub schema: u32,
    pub order_id: String,
    pub present: Vec<String>,
    pub asserted: Vec<AssertedEntry>,
    pub stars: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AssertedEntry {
    pub id: String,
    pub code: String,
}

#[derive(Debug, Clone)]
pub struct Session {
    rulebase: Arc<RuleBase>,
    display: Arc<DisplayRuleSet>,
    patient: PatientState,
    last_displayed: BTreeSet<CondIdx>,
    last_appeared: BTreeSet<CondIdx>,
    stars: BTreeSet<CondIdx>,
}

/// Compiles `rb` under `order` and opens a session on `initial`.
pub fn create_session(
    rb: Arc<RuleBase>,
    initial: PatientState,
    order: &Order,
) -> Result<Session, EngineError> {
    let drs = Arc::new(compile_display_rules(&rb, order)?);
    Session::new(rb, drs, initial)
}

impl Session {
    pub fn new(
        rulebase: Arc<RuleBase>,
        display: Arc<DisplayRuleSet>,
        initial: PatientState,
    ) -> Result<Session, EngineError> {
        let catalog = rulebase.catalog().clone();
        for idx in initial.present().iter().chain(initial.asserted_set().iter()) {
            let cond = catalog
                .try_get(*idx)
                .ok_or_else(|| EngineError::UnknownCondition(format!("#{}", idx.0)))?;
            let asserted = initial.is_asserted(*idx);
            if asserted && !cond.is_clinical() {
                return Err(EngineError::NotClinical(cond.id.clone()));
            }
            if initial.is_present(*idx) && cond.is_clinical() {
                return Err(EngineError::NotNonClinical(cond.id.clone()));
            }
            if let Some(code) = initial.chosen_code(*idx) {
                if code >= cond.codes.len() {
                    return Err(EngineError::UnknownCode {
                        condition: cond.id.clone(),
                        code: format!("#{code}"),
                    });
                }
            }
        }
        let mut s = Session {
            rulebase,
            display,
            patient: initial,
            last_displayed: BTreeSet::new(),
            last_appeared: BTreeSet::new(),
            stars: BTreeSet::new(),
        };
        s.last_displayed = s.visible();
        Ok(s)
    }

    pub fn rulebase(&self) -> &Arc<RuleBase> {
        &self.rulebase
    }

    pub fn catalog(&self) -> &Arc<Catalog> {
        self.rulebase.catalog()
    }

    pub fn display_rules(&self) -> &Arc<DisplayRuleSet> {
        &self.display
    }

    pub fn patient(&self) -> &PatientState {
        &self.patient
    }

    pub fn displayed(&self) -> &BTreeSet<CondIdx> {
        &self.last_displayed
    }

    pub fn displayed_ids(&self) -> BTreeSet<String> {
        self.ids(&self.last_displayed)
    }

    pub fn stars(&self) -> &BTreeSet<CondIdx> {
        &self.stars
    }

    fn ids(&self, set: &BTreeSet<CondIdx>) -> BTreeSet<String> {
        let catalog = self.catalog();
        set.iter().map(|i| catalog.id_of(*i).to_string()).collect()
    }

    fn visible(&self) -> BTreeSet<CondIdx> {
        let catalog = self.rulebase.catalog();
        let mut all = self.display.displayed(&self.patient);
        all.extend(self.patient.asserted());
        all.iter()
            .copied()
            .filter(|&x| {
                self.patient.is_asserted(x) || !catalog.ancestors(x).any(|a| all.contains(&a))
            })
            .collect()
    }

    fn refresh(&mut self) -> QuestionnaireDiff {
        let next = self.visible();
        let appeared: BTreeSet<CondIdx> = next.difference(&self.last_displayed).copied().collect();
        let disappeared: BTreeSet<CondIdx> = self.last_displayed.difference(&next).copied().collect();
        let unchanged: BTreeSet<CondIdx> = next.intersection(&self.last_displayed).copied().collect();
        let diff = QuestionnaireDiff {
            appeared: self.ids(&appeared),
            disappeared: self.ids(&disappeared),
            unchanged: self.ids(&unchanged),
        };
        self.stars.extend(appeared.iter().copied());
        self.last_appeared = appeared;
        self.last_displayed = next;
        diff
    }

    fn unchanged_diff(&mut self) -> QuestionnaireDiff {
        self.last_appeared.clear();
        QuestionnaireDiff {
            unchanged: self.ids(&self.last_displayed),
            ..Default::default()
        }
    }

    /// Checks or unchecks clinical condition `x`. `code` is a code value of
    /// `x`; when omitted the most general code is chosen.
    pub fn set_condition(
        &mut self,
        x: &str,
        checked: bool,
        code: Option<&str>,
    ) -> Result<QuestionnaireDiff, EngineError> {
        let catalog = self.rulebase.catalog().clone();
        let idx = catalog
            .lookup(x)
            .ok_or_else(|| EngineError::UnknownCondition(x.to_string()))?;
        let cond = catalog.get(idx);
        if !cond.is_clinical() {
            return Err(EngineError::NotClinical(x.to_string()));
        }
        if !self.last_displayed.contains(&idx) {
            return Err(EngineError::NotDisplayed(x.to_string()));
        }
        let code_idx = match code {
            Some(v) => Some(cond.code_index(v).ok_or_else(|| EngineError::UnknownCode {
                condition: x.to_string(),
                code: v.to_string(),
            })?),
            None => None,
        };
        if !checked {
            if !self.patient.retract(idx) {
                return Ok(self.unchanged_diff());
            }
            return Ok(self.refresh());
        }
        let was_asserted = self.patient.is_asserted(idx);
        self.patient.assert_clinical(&catalog, idx, code_idx)?;
        if was_asserted {
            // Rules reference conditions, not codes.
            return Ok(self.unchanged_diff());
        }
        Ok(self.refresh())
    }

    /// Replaces the present drugs and labs.
    pub fn set_drugs<'a>(
        &mut self,
        drugs: impl IntoIterator<Item = &'a str>,
    ) -> Result<QuestionnaireDiff, EngineError> {
        self.set_drugs_with(drugs, None)
    }

    /// Like [`Session::set_drugs`], also swapping the compiled display rules
    /// (for patient-specific orders).
    pub fn set_drugs_with<'a>(
        &mut self,
        drugs: impl IntoIterator<Item = &'a str>,
        display: Option<Arc<DisplayRuleSet>>,
    ) -> Result<QuestionnaireDiff, EngineError> {
        let catalog = self.rulebase.catalog().clone();
        let mut ids = Vec::new();
        for d in drugs {
            ids.push(
                catalog
                    .lookup(d)
                    .ok_or_else(|| EngineError::UnknownCondition(d.to_string()))?,
            );
        }
        self.patient.set_present(&catalog, ids)?;
        if let Some(drs) = display {
            self.display = drs;
        }
        Ok(self.refresh())
    }

    pub fn view(&self) -> QuestionnaireView {
        questionnaire_view(self)
    }

    pub fn recommendations(&self) -> Vec<Recommendation> {
        recommendations(self)
    }

    pub fn snapshot(&self, order_id: &str) -> SessionSnapshot {
        let catalog = self.catalog();
        SessionSnapshot {
            schema: SNAPSHOT_SCHEMA,
            order_id: order_id.to_string(),
            present: self.patient.present().iter().map(|i| catalog.id_of(*i).to_string()).collect(),
            asserted: self
                .patient
                .asserted()
                .map(|i| AssertedEntry {
                    id: catalog.id_of(i).to_string(),
                    code: catalog.get(i).codes[self.patient.chosen_code(i).unwrap_or(0)].value.clone(),
                })
                .collect(),
            stars: self.stars.iter().map(|i| catalog.id_of(*i).to_string()).collect(),
        }
    }

    /// Rebuilds a session from a snapshot taken under the same order.
    pub fn restore(
        rulebase: Arc<RuleBase>,
        display: Arc<DisplayRuleSet>,
        snapshot: &SessionSnapshot,
    ) -> Result<Session, EngineError> {
        if snapshot.schema != SNAPSHOT_SCHEMA {
            return Err(EngineError::Schema(snapshot.schema));
        }
        let catalog = rulebase.catalog().clone();
        let resolve = |id: &str| {
            catalog
                .lookup(id)
                .ok_or_else(|| EngineError::UnknownCondition(id.to_string()))
        };
        let mut patient = PatientState::new();
        for id in &snapshot.present {
            patient.add_present(&catalog, resolve(id)?)?;
        }
        for entry in &snapshot.asserted {
            let idx = resolve(&entry.id)?;
            let code = catalog.get(idx).code_index(&entry.code).ok_or_else(|| EngineError::UnknownCode {
                condition: entry.id.clone(),
                code: entry.code.clone(),
            })?;
            patient.assert_clinical(&catalog, idx, Some(code))?;
        }
        let mut s = Session::new(rulebase, display, patient)?;
        for id in &snapshot.stars {
            s.stars.insert(resolve(id)?);
        }
        Ok(s)
    }
}

pub fn questionnaire_view(s: &Session) -> QuestionnaireView {
    let catalog = s.catalog();
    let panels = catalog
        .categories()
        .iter()
        .filter_map(|cat| {
            let items: Vec<ViewItem> = s
                .last_displayed
                .iter()
                .filter(|&&x| catalog.get(x).category.as_deref() == Some(cat.name.as_str()))
                .map(|&x| {
                    let cond = catalog.get(x);
                    ViewItem {
                        condition_id: cond.id.clone(),
                        label: cond.label.clone(),
                        checked: s.patient.is_asserted(x),
                        chosen_code: s.patient.chosen_code(x).map(|c| cond.codes[c].value.clone()),
                        available_codes: cond.codes.clone(),
                        is_new: s.last_appeared.contains(&x),
                        has_star: s.stars.contains(&x),
                    }
                })
                .collect();
            (!items.is_empty()).then(|| Panel {
                category: cat.name.clone(),
                color: cat.color.clone(),
                items,
            })
        })
        .collect();
    QuestionnaireView { panels }
}

pub fn recommendations(s: &Session) -> Vec<Recommendation> {
    let catalog = s.catalog();
    s.rulebase
        .triggered(&s.patient)
        .map(|r| Recommendation {
            rule_id: r.id.clone(),
            action: RecommendedAction {
                verb: r.action.verb,
                target: r.action.target.map(|t| catalog.id_of(t).to_string()),
                text: r.action.text.clone(),
            },
            triggering_conditions: r
                .body
                .satisfied_members(&s.patient)
                .into_iter()
                .map(|c| catalog.id_of(c).to_string())
                .collect(),
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct FullItem {
    pub condition_id: String,
    pub label: String,
    pub codes: Vec<Code>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FullPanel {
    pub category: String,
    pub color: String,
    pub items: Vec<FullItem>,
}

/// The non-adaptive questionnaire: every clinical condition mentioned by a
/// rule, grouped by category.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FullQuestionnaire {
    pub count: usize,
    pub panels: Vec<FullPanel>,
}

pub fn full_questionnaire(rb: &RuleBase) -> FullQuestionnaire {
    let catalog = rb.catalog();
    let referenced = rb.referenced_clinical();
    let panels: Vec<FullPanel> = catalog
        .categories()
        .iter()
        .filter_map(|cat| {
            let items: Vec<FullItem> = referenced
                .iter()
                .map(|&x| catalog.get(x))
                .filter(|c| c.category.as_deref() == Some(cat.name.as_str()))
                .map(|c| FullItem {
                    condition_id: c.id.clone(),
                    label: c.label.clone(),
                    codes: c.codes.clone(),
                })
                .collect();
            (!items.is_empty()).then(|| FullPanel {
                category: cat.name.clone(),
                color: cat.color.clone(),
                items,
            })
        })
        .collect();
    FullQuestionnaire {
        count: referenced.len(),
        panels,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct SimulationOutcome {
    /// Rounds that asserted at least one condition.
    pub steps: usize,
    pub final_triggered: BTreeSet<String>,
    /// Distinct conditions displayed at any point.
    pub displayed_total: usize,
}

/// Simulates a user who checks every displayed condition that is true in
/// `ground_truth` until the form stops changing. Non-clinical facts are
/// taken from `ground_truth`.
pub fn simulate_truthful(drs: &DisplayRuleSet, rb: &RuleBase, ground_truth: &PatientState) -> SimulationOutcome {
    let mut p = PatientState::new();
    for d in ground_truth.present() {
        // Facts of a valid state are non-clinical.
        let _ = p.add_present(rb.catalog(), *d);
    }
    let mut ever = BTreeSet::new();
    let mut steps = 0;
    loop {
        let shown = drs.displayed(&p);
        let mut grew = false;
        for x in &shown {
            if ground_truth.is_asserted(*x) && !p.is_asserted(*x) {
                p.assert_unchecked(*x, ground_truth.chosen_code(*x).unwrap_or(0));
                grew = true;
            }
        }
        ever.extend(shown);
        if !grew {
            break;
        }
        steps += 1;
    }
    SimulationOutcome {
        steps,
        final_triggered: rb.triggered(&p).map(|r| r.id.clone()).collect(),
        displayed_total: ever.len(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::demo;
    use crate::ordering::condition_frequency_order;

    fn session(rb: RuleBase, drugs: &[&str], clinical: &[&str]) -> Session {
        let rb = Arc::new(rb);
        let order = condition_frequency_order(&rb);
        let p = PatientState::from_ids(rb.catalog(), drugs.iter().copied(), clinical.iter().copied()).unwrap();
        create_session(rb, p, &order).unwrap()
    }

    fn set(ids: &[&str]) -> BTreeSet<String> {
        ids.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn initial_d2_d6() {
        let s = session(demo::d2_d6_rulebase(), &["antipsychotic"], &[]);
        assert_eq!(s.displayed_ids(), set(&["constipation", "lewy_body", "parkinsonism"]));
        assert!(s.view().items().all(|i| !i.has_star && !i.is_new));
        let cats: Vec<_> = s.view().panels.iter().map(|p| p.category.clone()).collect();
        assert_eq!(cats, ["digestive", "neurological"]);
    }

    #[test]
    fn empty_rulebase() {
        let rb = RuleBase::empty(demo::d2_d6_catalog());
        let s = session(rb, &["fibre"], &[]);
        assert!(s.view().panels.is_empty());
        assert!(s.recommendations().is_empty());
    }

    #[test]
    fn pre_asserted_retained() {
        let s = session(demo::d2_d6_only("D2"), &[], &["diverticulosis"]);
        assert_eq!(s.displayed_ids(), set(&["constipation", "diverticulosis"]));
        assert!(s.view().item("diverticulosis").unwrap().checked);
    }

    #[test]
    fn checking_reveals_and_stars() {
        let mut s = session(demo::d2_d6_rulebase(), &["antipsychotic"], &[]);
        let d = s.set_condition("constipation", true, None).unwrap();
        assert_eq!(d.appeared, set(&["diverticulosis"]));
        let item = s.view().item("diverticulosis").unwrap().clone();
        assert!(item.is_new && item.has_star);
        assert_eq!(s.view().item("constipation").unwrap().chosen_code.as_deref(), Some("K59.0"));

        let d = s.set_condition("parkinsonism", true, None).unwrap();
        assert_eq!(d.disappeared, set(&["lewy_body"]));
        let item = s.view().item("diverticulosis").unwrap().clone();
        assert!(!item.is_new && item.has_star);
    }

    #[test]
    fn inverse_restores_displayed() {
        let mut s = session(demo::d2_d6_rulebase(), &["antipsychotic"], &[]);
        let before = s.displayed().clone();
        let fwd = s.set_condition("parkinsonism", true, None).unwrap();
        let back = s.set_condition("parkinsonism", false, None).unwrap();
        assert_eq!(fwd.appeared, back.disappeared);
        assert_eq!(fwd.disappeared, back.appeared);
        assert_eq!(s.displayed(), &before);
    }

    #[test]
    fn not_displayed_rejected() {
        let mut s = session(demo::d2_d6_rulebase(), &[], &[]);
        assert_eq!(
            s.set_condition("diverticulosis", true, None),
            Err(EngineError::NotDisplayed("diverticulosis".into()))
        );
        assert!(matches!(s.set_condition("fibre", true, None), Err(EngineError::NotClinical(_))));
        assert!(matches!(s.set_condition("gout", true, None), Err(EngineError::UnknownCondition(_))));
    }

    #[test]
    fn code_change_does_not_reevaluate() {
        let mut s = session(demo::d2_d6_rulebase(), &["antipsychotic"], &[]);
        s.set_condition("parkinsonism", true, None).unwrap();
        let d = s.set_condition("parkinsonism", true, Some("G20")).unwrap();
        assert!(d.is_empty());
        assert_eq!(s.view().item("parkinsonism").unwrap().chosen_code.as_deref(), Some("G20"));
        assert!(matches!(
            s.set_condition("parkinsonism", true, Some("K59.0")),
            Err(EngineError::UnknownCode { .. })
        ));
    }

    #[test]
    fn drug_changes() {
        let mut s = session(demo::d2_d6_only("D2"), &[], &[]);
        let d = s.set_drugs(["fibre"]).unwrap();
        assert!(d.disappeared.contains("constipation"));
        assert!(s.set_drugs(["fibre"]).unwrap().is_empty());

        let mut s = session(demo::d2_d6_only("D6"), &["antipsychotic"], &[]);
        let d = s.set_drugs([]).unwrap();
        assert_eq!(d.disappeared, set(&["lewy_body", "parkinsonism"]));
        assert!(matches!(s.set_drugs(["constipation"]), Err(EngineError::NotNonClinical(_))));
    }

    #[test]
    fn proteinuria_appears() {
        let mut s = session(demo::demo_rulebase(), &[], &[]);
        let d = s.set_condition("diabetes_renal", true, None).unwrap();
        assert!(d.appeared.contains("proteinuria"), "{d:?}");
    }

    #[test]
    fn recommendations_follow_rules() {
        let s = session(demo::d2_d6_only("D2"), &[], &["constipation", "diverticulosis"]);
        let r = s.recommendations();
        assert_eq!(r.len(), 1);
        assert_eq!(r[0].action.verb, Verb::Start);
        assert_eq!(r[0].action.target.as_deref(), Some("fibre"));

        let s = session(demo::d2_d6_only("D6"), &["antipsychotic"], &["parkinsonism"]);
        let r = s.recommendations();
        assert_eq!(r[0].action.verb, Verb::Stop);
        assert_eq!(r[0].triggering_conditions, ["parkinsonism", "antipsychotic"]);
    }

    #[test]
    fn simulation_traces() {
        let rb = demo::d2_d6_only("D2");
        let drs = compile_display_rules(&rb, &condition_frequency_order(&rb)).unwrap();
        let gt = PatientState::from_ids(rb.catalog(), [], ["constipation", "diverticulosis"]).unwrap();
        let out = simulate_truthful(&drs, &rb, &gt);
        assert_eq!(out.final_triggered, set(&["D2"]));
        assert_eq!(out.displayed_total, 2);
        assert_eq!(out.steps, 2);

        let gt = PatientState::from_ids(rb.catalog(), [], ["diverticulosis"]).unwrap();
        let out = simulate_truthful(&drs, &rb, &gt);
        assert!(out.final_triggered.is_empty());
        assert_eq!(out.displayed_total, 1);

        let gt = PatientState::from_ids(rb.catalog(), ["fibre"], []).unwrap();
        assert_eq!(simulate_truthful(&drs, &rb, &gt).displayed_total, 0);
    }

    #[test]
    fn full_listing() {
        let full = full_questionnaire(&demo::d2_d6_rulebase());
        assert_eq!(full.count, 4);
        assert_eq!(full.panels.iter().map(|p| p.items.len()).sum::<usize>(), 4);
        let empty = full_questionnaire(&RuleBase::empty(demo::d2_d6_catalog()));
        assert_eq!(empty.count, 0);
        assert!(empty.panels.is_empty());
    }

    #[test]
    fn snapshot_round_trip() {
        let mut s = session(demo::d2_d6_rulebase(), &["antipsychotic"], &[]);
        s.set_condition("constipation", true, None).unwrap();
        s.set_condition("parkinsonism", true, Some("G21")).unwrap();
        let snap = s.snapshot("frequency");
        let json = serde_json::to_string(&snap).unwrap();
        let back: SessionSnapshot = serde_json::from_str(&json).unwrap();
        let r = Session::restore(s.rulebase().clone(), s.display_rules().clone(), &back).unwrap();
        assert_eq!(r.displayed(), s.displayed());
        assert_eq!(r.stars(), s.stars());
        assert_eq!(r.patient(), s.patient());
        let bad = SessionSnapshot { schema: 99, ..snap };
        assert_eq!(
            Session::restore(s.rulebase().clone(), s.display_rules().clone(), &bad).unwrap_err(),
            EngineError::Schema(99)
        );
    }

    #[test]
    fn hierarchy_collapse_in_view() {
        let s = session(demo::demo_rulebase(), &[], &[]);
        let shown = s.displayed_ids();
        if shown.contains("diabetes") {
            assert!(!shown.contains("type2_diabetes"));
        }
    }
}
