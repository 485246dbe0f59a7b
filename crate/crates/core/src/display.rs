//! Display-rule compilation.
//!
//! Every clinical rule is turned into rules of the form
//! `body -> display(x)`, one family per slot holding a clinical condition:
//!
//! | variant | for            | body `(Cp, Dp, Ca, Da, U)`                                      |
//! |---------|----------------|-----------------------------------------------------------------|
//! | `P`     | `x ∈ Cp`       | `({c ∈ Cp | c ≺ x}, Dp, Ca, Da, {u ∈ U | Cu ≺ x})`              |
//! | `A1`    | `x ∈ Ca`       | `(Cp, Dp, Ca ∖ {x}, Da, U)`                                      |
//! | `A2`    | `x ∈ Ca`       | `({x}, Dp, {c ∈ Ca | c ≺ x}, Da, ∅)`                             |
//! | `U1`    | `x ∈ Cuk`      | `({c ∈ Cp | c ≺ x}, Dp, Ca ∪ Cuk, Da ∪ Duk, {u ≠ uk | Cu ≺ x})` |
//! | `U2`    | `x ∈ Cuk`      | `({c ∈ Cp | c ≺ x} ∪ {x}, Dp, Ca, Da, {u ≠ uk | Cu ≺ x})`       |
//!
//! where `Cu ≺ x` means every clinical member of the union precedes `x`.
//! A condition is shown when at least one display rule targeting it holds.

use std::collections::BTreeSet;
use std::fmt;

use serde::Serialize;
use thiserror::Error;

use crate::catalog::{Catalog, CondIdx};
use crate::rules::{ConditionSet, PatientState, RuleBase, RuleBody, Union};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum OrderError {
    #[error("`{0}` is not a clinical condition")]
    NotClinical(String),
    #[error("`{0}` appears more than once in the order")]
    Repeated(String),
    #[error("order is missing clinical condition `{0}`")]
    Missing(String),
    #[error("unknown condition `{0}`")]
    Unknown(String),
}

/// Strict total priority order over all clinical conditions of a catalog.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Order {
    sequence: Vec<CondIdx>,
    // rank[idx] for clinical conditions, u32::MAX otherwise.
    rank: Vec<u32>,
}

impl Order {
    pub fn new(catalog: &Catalog, sequence: Vec<CondIdx>) -> Result<Order, OrderError> {
        let mut rank = vec![u32::MAX; catalog.len()];
        for (pos, idx) in sequence.iter().enumerate() {
            let cond = catalog
                .try_get(*idx)
                .ok_or_else(|| OrderError::Unknown(format!("#{}", idx.0)))?;
            if !cond.is_clinical() {
                return Err(OrderError::NotClinical(cond.id.clone()));
            }
            if rank[idx.index()] != u32::MAX {
                return Err(OrderError::Repeated(cond.id.clone()));
            }
            rank[idx.index()] = pos as u32;
        }
        if let Some(missing) = catalog.clinical().find(|c| rank[c.index()] == u32::MAX) {
            return Err(OrderError::Missing(catalog.id_of(missing).to_string()));
        }
        Ok(Order { sequence, rank })
    }

    pub fn from_ids<'a>(
        catalog: &Catalog,
        ids: impl IntoIterator<Item = &'a str>,
    ) -> Result<Order, OrderError> {
        let seq = ids
            .into_iter()
            .map(|id| catalog.lookup(id).ok_or_else(|| OrderError::Unknown(id.to_string())))
            .collect::<Result<Vec<_>, _>>()?;
        Order::new(catalog, seq)
    }

    /// Orders `prefix` first, then every remaining clinical condition in
    /// catalog order.
    pub fn with_prefix(catalog: &Catalog, prefix: &[CondIdx]) -> Result<Order, OrderError> {
        let mut seq = prefix.to_vec();
        let head: BTreeSet<CondIdx> = prefix.iter().copied().collect();
        seq.extend(catalog.clinical().filter(|c| !head.contains(c)));
        Order::new(catalog, seq)
    }

    /// Reads an order file: one condition id per line, `#` starts a
    /// comment. Unlisted clinical conditions follow in catalog order.
    pub fn parse(catalog: &Catalog, text: &str) -> Result<Order, OrderError> {
        let prefix = text
            .lines()
            .map(|l| l.split('#').next().unwrap_or("").trim())
            .filter(|l| !l.is_empty())
            .map(|id| catalog.lookup(id).ok_or_else(|| OrderError::Unknown(id.to_string())))
            .collect::<Result<Vec<_>, _>>()?;
        Order::with_prefix(catalog, &prefix)
    }

    pub fn to_text(&self, catalog: &Catalog) -> String {
        self.ids(catalog).iter().map(|id| format!("{id}\n")).collect()
    }

    pub fn sequence(&self) -> &[CondIdx] {
        &self.sequence
    }

    pub fn len(&self) -> usize {
        self.sequence.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sequence.is_empty()
    }

    pub fn rank(&self, idx: CondIdx) -> Option<u32> {
        match self.rank.get(idx.index()) {
            Some(&r) if r != u32::MAX => Some(r),
            _ => None,
        }
    }

    /// `a ≺ b`.
    pub fn precedes(&self, a: CondIdx, b: CondIdx) -> bool {
        self.rank[a.index()] < self.rank[b.index()]
    }

    pub fn ids<'a>(&self, catalog: &'a Catalog) -> Vec<&'a str> {
        self.sequence.iter().map(|i| catalog.id_of(*i)).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum Variant {
    P,
    A1,
    A2,
    U1,
    U2,
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Variant::P => "P",
            Variant::A1 => "A1",
            Variant::A2 => "A2",
            Variant::U1 => "U1",
            Variant::U2 => "U2",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DisplayRule {
    /// Index of the source rule in its rulebase.
    pub source: usize,
    pub variant: Variant,
    pub target: CondIdx,
    pub body: RuleBody,
}

impl DisplayRule {
    pub fn holds(&self, p: &PatientState) -> bool {
        self.body.holds(p)
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CompileError {
    #[error("rule `{rule}`: order does not rank clinical condition `{condition}`")]
    Unordered { rule: String, condition: String },
}

#[derive(Debug, Clone)]
pub struct DisplayRuleSet {
    rules: Vec<DisplayRule>,
    order: Order,
    // display rule indices per target condition
    by_target: Vec<Vec<u32>>,
}

/// Number of display rules a rulebase compiles to:
/// `Σ |Cp| + 2|Ca| + 2 Σz |Cuz|`.
pub fn expected_display_rule_count(rb: &RuleBase) -> usize {
    rb.rules()
        .iter()
        .map(|r| {
            let b = &r.body;
            b.c_present.len()
                + 2 * b.c_absent.len()
                + 2 * b.unions.iter().map(|u| u.clinical.len()).sum::<usize>()
        })
        .sum()
}

fn preceding(set: &ConditionSet, x: CondIdx, order: &Order) -> ConditionSet {
    set.iter().copied().filter(|c| order.precedes(*c, x)).collect()
}

fn unions_before(unions: &[Union], skip: Option<usize>, x: CondIdx, order: &Order) -> Vec<Union> {
    unions
        .iter()
        .enumerate()
        .filter(|(i, u)| Some(*i) != skip && u.clinical.iter().all(|c| order.precedes(*c, x)))
        .map(|(_, u)| u.clone())
        .collect()
}

fn sorted_by_rank(set: &ConditionSet, order: &Order) -> Vec<CondIdx> {
    let mut v: Vec<CondIdx> = set.iter().copied().collect();
    v.sort_by_key(|c| order.rank[c.index()]);
    v
}

pub fn compile_display_rules(rb: &RuleBase, order: &Order) -> Result<DisplayRuleSet, CompileError> {
    let catalog = rb.catalog();
    let mut out = Vec::with_capacity(expected_display_rule_count(rb));
    for (source, rule) in rb.rules().iter().enumerate() {
        if let Some(c) = rule.body.clinical_mentions().find(|c| order.rank(*c).is_none()) {
            return Err(CompileError::Unordered {
                rule: rule.id.clone(),
                condition: catalog.id_of(c).to_string(),
            });
        }
        let b = &rule.body;

        for x in sorted_by_rank(&b.c_present, order) {
            out.push(DisplayRule {
                source,
                variant: Variant::P,
                target: x,
                body: RuleBody {
                    c_present: preceding(&b.c_present, x, order),
                    d_present: b.d_present.clone(),
                    c_absent: b.c_absent.clone(),
                    d_absent: b.d_absent.clone(),
                    unions: unions_before(&b.unions, None, x, order),
                },
            });
        }

        for x in sorted_by_rank(&b.c_absent, order) {
            let mut others = b.c_absent.clone();
            others.remove(&x);
            out.push(DisplayRule {
                source,
                variant: Variant::A1,
                target: x,
                body: RuleBody {
                    c_present: b.c_present.clone(),
                    d_present: b.d_present.clone(),
                    c_absent: others,
                    d_absent: b.d_absent.clone(),
                    unions: b.unions.clone(),
                },
            });
            out.push(DisplayRule {
                source,
                variant: Variant::A2,
                target: x,
                body: RuleBody {
                    c_present: [x].into_iter().collect(),
                    d_present: b.d_present.clone(),
                    c_absent: preceding(&b.c_absent, x, order),
                    d_absent: b.d_absent.clone(),
                    unions: Vec::new(),
                },
            });
        }

        for (k, union) in b.unions.iter().enumerate() {
            for x in sorted_by_rank(&union.clinical, order) {
                let before = preceding(&b.c_present, x, order);
                let others = unions_before(&b.unions, Some(k), x, order);
                out.push(DisplayRule {
                    source,
                    variant: Variant::U1,
                    target: x,
                    body: RuleBody {
                        c_present: before.clone(),
                        d_present: b.d_present.clone(),
                        c_absent: b.c_absent.union(&union.clinical).copied().collect(),
                        d_absent: b.d_absent.union(&union.non_clinical).copied().collect(),
                        unions: others.clone(),
                    },
                });
                let mut with_x = before;
                with_x.insert(x);
                out.push(DisplayRule {
                    source,
                    variant: Variant::U2,
                    target: x,
                    body: RuleBody {
                        c_present: with_x,
                        d_present: b.d_present.clone(),
                        c_absent: b.c_absent.clone(),
                        d_absent: b.d_absent.clone(),
                        unions: others,
                    },
                });
            }
        }
    }
    Ok(DisplayRuleSet::from_rules(catalog.len(), out, order.clone()))
}

impl DisplayRuleSet {
    pub(crate) fn from_rules(catalog_len: usize, rules: Vec<DisplayRule>, order: Order) -> DisplayRuleSet {
        let mut by_target = vec![Vec::new(); catalog_len];
        for (i, r) in rules.iter().enumerate() {
            by_target[r.target.index()].push(i as u32);
        }
        DisplayRuleSet {
            rules,
            order,
            by_target,
        }
    }

    pub fn rules(&self) -> &[DisplayRule] {
        &self.rules
    }

    pub fn order(&self) -> &Order {
        &self.order
    }

    pub fn len(&self) -> usize {
        self.rules.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rules.is_empty()
    }

    pub fn targeting(&self, x: CondIdx) -> impl Iterator<Item = &DisplayRule> {
        self.by_target
            .get(x.index())
            .map(|v| v.as_slice())
            .unwrap_or(&[])
            .iter()
            .map(move |i| &self.rules[*i as usize])
    }

    /// Conditions with at least one satisfied display rule.
    pub fn displayed(&self, p: &PatientState) -> BTreeSet<CondIdx> {
        self.by_target
            .iter()
            .enumerate()
            .filter(|(_, rules)| rules.iter().any(|i| self.rules[*i as usize].holds(p)))
            .map(|(x, _)| CondIdx(x as u32))
            .collect()
    }

    pub fn displayed_count(&self, p: &PatientState) -> usize {
        self.by_target
            .iter()
            .filter(|rules| rules.iter().any(|i| self.rules[*i as usize].holds(p)))
            .count()
    }

    pub fn explain(&self, p: &PatientState, x: CondIdx) -> Vec<(&DisplayRule, bool)> {
        self.targeting(x).map(|r| (r, r.holds(p))).collect()
    }

    /// Structured export with condition ids spelled out.
    pub fn export(&self, rb: &RuleBase) -> DisplayExport {
        let catalog = rb.catalog();
        let names = |set: &ConditionSet| -> Vec<String> {
            set.iter().map(|i| catalog.id_of(*i).to_string()).collect()
        };
        DisplayExport {
            order: self.order.ids(catalog).into_iter().map(String::from).collect(),
            rules: self
                .rules
                .iter()
                .map(|r| ExportedDisplayRule {
                    source_rule: rb.rules()[r.source].id.clone(),
                    variant: r.variant,
                    target: catalog.id_of(r.target).to_string(),
                    c_present: names(&r.body.c_present),
                    d_present: names(&r.body.d_present),
                    c_absent: names(&r.body.c_absent),
                    d_absent: names(&r.body.d_absent),
                    unions: r
                        .body
                        .unions
                        .iter()
                        .map(|u| ExportedUnion {
                            clinical: names(&u.clinical),
                            non_clinical: names(&u.non_clinical),
                        })
                        .collect(),
                    action: format!("display({})", catalog.id_of(r.target)),
                })
                .collect(),
        }
    }
}

pub fn displayed_conditions(drs: &DisplayRuleSet, p: &PatientState) -> BTreeSet<CondIdx> {
    drs.displayed(p)
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ExplainError {
    #[error("unknown condition `{0}`")]
    Unknown(String),
    #[error("`{0}` is not a clinical condition")]
    NotClinical(String),
}

pub fn explain_display<'a>(
    drs: &'a DisplayRuleSet,
    catalog: &Catalog,
    p: &PatientState,
    x: &str,
) -> Result<Vec<(&'a DisplayRule, bool)>, ExplainError> {
    let idx = catalog
        .lookup(x)
        .ok_or_else(|| ExplainError::Unknown(x.to_string()))?;
    if !catalog.get(idx).is_clinical() {
        return Err(ExplainError::NotClinical(x.to_string()));
    }
    Ok(drs.explain(p, idx))
}

#[derive(Debug, Clone, Serialize)]
pub struct DisplayExport {
    pub order: Vec<String>,
    pub rules: Vec<ExportedDisplayRule>,
}

#[derive(Debug, Clone, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct ExportedDisplayRule {
    pub source_rule: String,
    pub variant: Variant,
    pub target: String,
    pub c_present: Vec<String>,
    pub d_present: Vec<String>,
    pub c_absent: Vec<String>,
    pub d_absent: Vec<String>,
    pub unions: Vec<ExportedUnion>,
    pub action: String,
}

#[derive(Debug, Clone, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct ExportedUnion {
    pub clinical: Vec<String>,
    pub non_clinical: Vec<String>,
}

/// Human-readable form of a display rule body, e.g. `constipation ∧ ¬fibre`.
pub fn format_body(catalog: &Catalog, body: &RuleBody) -> String {
    let mut parts: Vec<String> = Vec::new();
    let name = |i: &CondIdx| catalog.id_of(*i).to_string();
    parts.extend(body.c_present.iter().map(name));
    parts.extend(body.d_present.iter().map(name));
    parts.extend(body.c_absent.iter().map(|i| format!("¬{}", name(i))));
    parts.extend(body.d_absent.iter().map(|i| format!("¬{}", name(i))));
    for u in &body.unions {
        let members: Vec<String> = u.members().map(|m| name(&m)).collect();
        parts.push(format!("({})", members.join(" ∨ ")));
    }
    if parts.is_empty() {
        "true".into()
    } else {
        parts.join(" ∧ ")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::demo;

    fn order(rb: &RuleBase, ids: &[&str]) -> Order {
        let cat = rb.catalog();
        let prefix: Vec<CondIdx> = ids.iter().map(|i| cat.lookup(i).unwrap()).collect();
        Order::with_prefix(cat, &prefix).unwrap()
    }

    #[test]
    fn order_file_round_trip() {
        let cat = demo::d2_d6_catalog();
        let o = Order::parse(&cat, "# top\nlewy_body\n\nparkinsonism  # second\n").unwrap();
        assert_eq!(o.ids(&cat), ["lewy_body", "parkinsonism", "constipation", "diverticulosis"]);
        assert_eq!(Order::parse(&cat, &o.to_text(&cat)).unwrap(), o);
        assert_eq!(Order::parse(&cat, "gout").unwrap_err(), OrderError::Unknown("gout".into()));
        assert!(matches!(Order::parse(&cat, "fibre"), Err(OrderError::NotClinical(_))));
    }

    fn names(rb: &RuleBase, set: &BTreeSet<CondIdx>) -> Vec<String> {
        set.iter().map(|i| rb.catalog().id_of(*i).to_string()).collect()
    }

    fn state(rb: &RuleBase, drugs: &[&str], clinical: &[&str]) -> PatientState {
        PatientState::from_ids(rb.catalog(), drugs.iter().copied(), clinical.iter().copied()).unwrap()
    }

    #[test]
    fn order_validation() {
        let cat = demo::d2_d6_catalog();
        assert!(matches!(
            Order::from_ids(&cat, ["constipation"]),
            Err(OrderError::Missing(_))
        ));
        assert!(matches!(
            Order::from_ids(&cat, ["constipation", "constipation"]),
            Err(OrderError::Repeated(_))
        ));
        assert!(matches!(
            Order::from_ids(&cat, ["fibre"]),
            Err(OrderError::NotClinical(_))
        ));
        let o = Order::from_ids(&cat, ["lewy_body", "constipation", "parkinsonism", "diverticulosis"]).unwrap();
        assert!(o.precedes(cat.lookup("lewy_body").unwrap(), cat.lookup("diverticulosis").unwrap()));
    }

    #[test]
    fn d2_display_rules() {
        let rb = demo::d2_d6_only("D2");
        let drs = compile_display_rules(&rb, &order(&rb, &["constipation", "diverticulosis"])).unwrap();
        let cat = rb.catalog();
        let printed: Vec<String> = drs
            .rules()
            .iter()
            .map(|r| format!("{}({}) = {}", r.variant, cat.id_of(r.target), format_body(cat, &r.body)))
            .collect();
        assert_eq!(
            printed,
            [
                "P(constipation) = ¬fibre",
                "P(diverticulosis) = constipation ∧ ¬fibre"
            ]
        );
    }

    #[test]
    fn d2_behaviour() {
        let rb = demo::d2_d6_only("D2");
        let drs = compile_display_rules(&rb, &order(&rb, &["constipation", "diverticulosis"])).unwrap();
        assert!(drs.displayed(&state(&rb, &["fibre"], &[])).is_empty());
        assert_eq!(names(&rb, &drs.displayed(&state(&rb, &[], &[]))), ["constipation"]);
        assert_eq!(
            names(&rb, &drs.displayed(&state(&rb, &[], &["constipation"]))),
            ["constipation", "diverticulosis"]
        );
    }

    #[test]
    fn d6_display_rules() {
        let rb = demo::d2_d6_only("D6");
        let drs = compile_display_rules(&rb, &order(&rb, &["parkinsonism", "lewy_body"])).unwrap();
        let cat = rb.catalog();
        let printed: Vec<String> = drs
            .rules()
            .iter()
            .map(|r| format!("{}({}) = {}", r.variant, cat.id_of(r.target), format_body(cat, &r.body)))
            .collect();
        assert_eq!(
            printed,
            [
                "U1(parkinsonism) = antipsychotic ∧ ¬parkinsonism ∧ ¬lewy_body",
                "U2(parkinsonism) = parkinsonism ∧ antipsychotic",
                "U1(lewy_body) = antipsychotic ∧ ¬parkinsonism ∧ ¬lewy_body",
                "U2(lewy_body) = lewy_body ∧ antipsychotic",
            ]
        );
        let both = drs.displayed(&state(&rb, &["antipsychotic"], &[]));
        assert_eq!(names(&rb, &both), ["parkinsonism", "lewy_body"]);
        let after = drs.displayed(&state(&rb, &["antipsychotic"], &["parkinsonism"]));
        assert_eq!(names(&rb, &after), ["parkinsonism"]);
        assert!(drs.displayed(&PatientState::new()).is_empty());
    }

    #[test]
    fn no_clinical_conditions_no_display_rules() {
        let cat = demo::d2_d6_catalog();
        let rb = crate::rules::parse_rulebase(
            "rule X { present drug antipsychotic absent drug fibre action custom \"x\" }",
            cat.clone(),
        )
        .unwrap();
        let drs = compile_display_rules(&rb, &Order::with_prefix(&cat, &[]).unwrap()).unwrap();
        assert!(drs.is_empty());
    }

    #[test]
    fn explain_d2() {
        let rb = demo::d2_d6_only("D2");
        let cat = rb.catalog();
        let drs = compile_display_rules(&rb, &order(&rb, &["constipation", "diverticulosis"])).unwrap();
        let e = explain_display(&drs, cat, &PatientState::new(), "constipation").unwrap();
        assert_eq!(e.len(), 1);
        assert_eq!((e[0].0.variant, e[0].1), (Variant::P, true));
        let e = explain_display(&drs, cat, &state(&rb, &["fibre"], &[]), "constipation").unwrap();
        assert_eq!((e[0].0.variant, e[0].1), (Variant::P, false));
        assert!(explain_display(&drs, cat, &PatientState::new(), "parkinsonism")
            .unwrap()
            .is_empty());
        assert_eq!(
            explain_display(&drs, cat, &PatientState::new(), "fibre").unwrap_err(),
            ExplainError::NotClinical("fibre".into())
        );
        assert!(explain_display(&drs, cat, &PatientState::new(), "gout").is_err());
    }

    #[test]
    fn absent_variants() {
        let cat = demo::demo_catalog();
        let rb = crate::rules::parse_rulebase(
            "rule R { present clinical osteoporosis absent clinical hypotension, falls absent drug bisphosphonate action start bisphosphonate }",
            cat.clone(),
        )
        .unwrap();
        let o = order(&rb, &["osteoporosis", "falls", "hypotension"]);
        let drs = compile_display_rules(&rb, &o).unwrap();
        assert_eq!(drs.len(), expected_display_rule_count(&rb));
        assert_eq!(drs.len(), 5);
        let text: Vec<String> = drs
            .rules()
            .iter()
            .map(|r| format!("{}({}) = {}", r.variant, cat.id_of(r.target), format_body(&cat, &r.body)))
            .collect();
        assert_eq!(
            text,
            [
                "P(osteoporosis) = ¬hypotension ∧ ¬falls ∧ ¬bisphosphonate",
                "A1(falls) = osteoporosis ∧ ¬hypotension ∧ ¬bisphosphonate",
                "A2(falls) = falls ∧ ¬bisphosphonate",
                "A1(hypotension) = osteoporosis ∧ ¬falls ∧ ¬bisphosphonate",
                "A2(hypotension) = hypotension ∧ ¬falls ∧ ¬bisphosphonate",
            ]
        );
    }

    #[test]
    fn export_is_json() {
        let rb = demo::d2_d6_rulebase();
        let drs = compile_display_rules(&rb, &Order::with_prefix(rb.catalog(), &[]).unwrap()).unwrap();
        let json = serde_json::to_value(drs.export(&rb)).unwrap();
        assert_eq!(json["rules"].as_array().unwrap().len(), 6);
        assert_eq!(json["rules"][0]["sourceRule"], "D2");
        assert_eq!(json["rules"][0]["action"], "display(constipation)");
    }
}
