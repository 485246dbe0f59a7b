//! Condition catalog: the universe of clinical and non-clinical conditions,
//! their terminology codes, display categories and the is-a hierarchy.
//!
//! A catalog is loaded once from a JSON document and never mutated
//! afterwards. Everything else in the crate refers to conditions through
//! [`CondIdx`], a dense index into the catalog.

use std::collections::{BTreeSet, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Dense handle to a condition inside one [`Catalog`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct CondIdx(pub u32);

impl CondIdx {
    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ConditionKind {
    Clinical,
    Drug,
    Lab,
}

impl ConditionKind {
    pub fn is_clinical(self) -> bool {
        matches!(self, ConditionKind::Clinical)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ConditionKind::Clinical => "clinical",
            ConditionKind::Drug => "drug",
            ConditionKind::Lab => "lab",
        }
    }
}

impl fmt::Display for ConditionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A terminology code attached to a condition (ICD10, ATC, ...).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Code {
    pub system: String,
    pub value: String,
    pub label: String,
    /// Marks the default code selected when the condition is checked.
    #[serde(rename = "general", default, skip_serializing_if = "std::ops::Not::not")]
    pub is_general: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Condition {
    pub id: String,
    pub kind: ConditionKind,
    pub label: String,
    pub category: Option<String>,
    pub codes: Vec<Code>,
    pub parent: Option<CondIdx>,
}

impl Condition {
    pub fn is_clinical(&self) -> bool {
        self.kind.is_clinical()
    }

    /// Index of the default code, if the condition carries codes at all.
    pub fn general_code_index(&self) -> Option<usize> {
        self.codes.iter().position(|c| c.is_general)
    }

    pub fn code_index(&self, value: &str) -> Option<usize> {
        self.codes.iter().position(|c| c.value == value)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Category {
    pub name: String,
    /// Opaque color string, usually `#rrggbb`.
    pub color: String,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CatalogError {
    #[error("catalog parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("duplicate condition id `{0}`")]
    DuplicateId(String),
    #[error("duplicate category `{0}`")]
    DuplicateCategory(String),
    #[error("condition `{condition}` has dangling parent reference `{parent}`")]
    DanglingParent { condition: String, parent: String },
    #[error("condition `{condition}` and its parent `{parent}` have different kinds")]
    ParentKindMismatch { condition: String, parent: String },
    #[error("is-a cycle through condition `{0}`")]
    Cycle(String),
    #[error("condition `{condition}` references unknown category `{category}`")]
    UnknownCategory { condition: String, category: String },
    #[error("clinical condition `{0}` has no category")]
    MissingCategory(String),
    #[error("clinical condition `{0}` has no code")]
    MissingCode(String),
    #[error("condition `{0}` has no general code")]
    MissingGeneralCode(String),
    #[error("condition `{0}` marks more than one code as general")]
    MultipleGeneralCodes(String),
    #[error("condition `{condition}` lists code {system}:{value} twice")]
    DuplicateCode {
        condition: String,
        system: String,
        value: String,
    },
    #[error("unknown condition `{0}`")]
    UnknownCondition(String),
}

/// Non-fatal findings produced while loading a catalog.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CatalogWarning {
    /// No code was flagged `general`; the first one was promoted.
    PromotedGeneralCode { condition: String, code: String },
}

impl fmt::Display for CatalogWarning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CatalogWarning::PromotedGeneralCode { condition, code } => write!(
                f,
                "condition `{condition}` has no general code; promoted `{code}`"
            ),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Catalog {
    categories: Vec<Category>,
    conditions: Vec<Condition>,
    by_id: HashMap<String, CondIdx>,
}

// On-disk layout.
#[derive(Serialize, Deserialize)]
struct CatalogFile {
    #[serde(default)]
    categories: Vec<Category>,
    #[serde(default)]
    conditions: Vec<ConditionEntry>,
}

#[derive(Serialize, Deserialize)]
struct ConditionEntry {
    id: String,
    kind: ConditionKind,
    label: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    category: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    parent: Option<String>,
    #[serde(default)]
    codes: Vec<Code>,
}

impl Catalog {
    /// Parses and validates a catalog document. Warnings are forwarded to
    /// the `log` facade.
    pub fn load(text: &str) -> Result<Catalog, CatalogError> {
        let (catalog, warnings) = Self::load_with_warnings(text)?;
        for w in &warnings {
            log::warn!("{w}");
        }
        Ok(catalog)
    }

    pub fn load_with_warnings(text: &str) -> Result<(Catalog, Vec<CatalogWarning>), CatalogError> {
        let file: CatalogFile = serde_json::from_str(text).map_err(|e| CatalogError::Parse {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })?;
        Self::from_file(file)
    }

    fn from_file(file: CatalogFile) -> Result<(Catalog, Vec<CatalogWarning>), CatalogError> {
        let mut warnings = Vec::new();
        let mut seen_categories = BTreeSet::new();
        for c in &file.categories {
            if !seen_categories.insert(c.name.as_str()) {
                return Err(CatalogError::DuplicateCategory(c.name.clone()));
            }
        }

        let mut by_id = HashMap::with_capacity(file.conditions.len());
        for (i, entry) in file.conditions.iter().enumerate() {
            if by_id.insert(entry.id.clone(), CondIdx(i as u32)).is_some() {
                return Err(CatalogError::DuplicateId(entry.id.clone()));
            }
        }

        let mut conditions = Vec::with_capacity(file.conditions.len());
        for entry in file.conditions {
            let parent = match &entry.parent {
                None => None,
                Some(p) => Some(*by_id.get(p).ok_or_else(|| CatalogError::DanglingParent {
                    condition: entry.id.clone(),
                    parent: p.clone(),
                })?),
            };
            if let Some(cat) = &entry.category {
                if !seen_categories.contains(cat.as_str()) {
                    return Err(CatalogError::UnknownCategory {
                        condition: entry.id.clone(),
                        category: cat.clone(),
                    });
                }
            } else if entry.kind.is_clinical() {
                return Err(CatalogError::MissingCategory(entry.id.clone()));
            }
            if entry.kind.is_clinical() && entry.codes.is_empty() {
                return Err(CatalogError::MissingCode(entry.id.clone()));
            }

            let mut codes = entry.codes;
            let mut seen_codes = BTreeSet::new();
            for code in &codes {
                if !seen_codes.insert((code.system.as_str(), code.value.as_str())) {
                    return Err(CatalogError::DuplicateCode {
                        condition: entry.id.clone(),
                        system: code.system.clone(),
                        value: code.value.clone(),
                    });
                }
            }
            match codes.iter().filter(|c| c.is_general).count() {
                0 if !codes.is_empty() => {
                    codes[0].is_general = true;
                    warnings.push(CatalogWarning::PromotedGeneralCode {
                        condition: entry.id.clone(),
                        code: codes[0].value.clone(),
                    });
                }
                0 | 1 => {}
                _ => return Err(CatalogError::MultipleGeneralCodes(entry.id.clone())),
            }

            conditions.push(Condition {
                id: entry.id,
                kind: entry.kind,
                label: entry.label,
                category: entry.category,
                codes,
                parent,
            });
        }

        let catalog = Catalog {
            categories: file.categories,
            conditions,
            by_id,
        };
        catalog.check_hierarchy()?;
        Ok((catalog, warnings))
    }

    fn check_hierarchy(&self) -> Result<(), CatalogError> {
        for cond in &self.conditions {
            if let Some(p) = cond.parent {
                let parent = &self.conditions[p.index()];
                if parent.kind != cond.kind {
                    return Err(CatalogError::ParentKindMismatch {
                        condition: cond.id.clone(),
                        parent: parent.id.clone(),
                    });
                }
            }
        }
        // A parent chain longer than the catalog must revisit a node.
        let limit = self.conditions.len();
        for (i, cond) in self.conditions.iter().enumerate() {
            let mut cursor = cond.parent;
            let mut steps = 0;
            while let Some(p) = cursor {
                steps += 1;
                if p.index() == i || steps > limit {
                    return Err(CatalogError::Cycle(cond.id.clone()));
                }
                cursor = self.conditions[p.index()].parent;
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        let file = CatalogFile {
            categories: self.categories.clone(),
            conditions: self
                .conditions
                .iter()
                .map(|c| ConditionEntry {
                    id: c.id.clone(),
                    kind: c.kind,
                    label: c.label.clone(),
                    category: c.category.clone(),
                    parent: c.parent.map(|p| self.conditions[p.index()].id.clone()),
                    codes: c.codes.clone(),
                })
                .collect(),
        };
        serde_json::to_string_pretty(&file).expect("catalog serializes")
    }

    pub fn len(&self) -> usize {
        self.conditions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.conditions.is_empty()
    }

    pub fn categories(&self) -> &[Category] {
        &self.categories
    }

    pub fn conditions(&self) -> &[Condition] {
        &self.conditions
    }

    pub fn get(&self, idx: CondIdx) -> &Condition {
        &self.conditions[idx.index()]
    }

    pub fn try_get(&self, idx: CondIdx) -> Option<&Condition> {
        self.conditions.get(idx.index())
    }

    pub fn lookup(&self, id: &str) -> Option<CondIdx> {
        self.by_id.get(id).copied()
    }

    pub fn resolve(&self, id: &str) -> Result<CondIdx, CatalogError> {
        self.lookup(id)
            .ok_or_else(|| CatalogError::UnknownCondition(id.to_string()))
    }

    pub fn id_of(&self, idx: CondIdx) -> &str {
        &self.conditions[idx.index()].id
    }

    pub fn iter(&self) -> impl Iterator<Item = (CondIdx, &Condition)> {
        self.conditions
            .iter()
            .enumerate()
            .map(|(i, c)| (CondIdx(i as u32), c))
    }

    pub fn clinical(&self) -> impl Iterator<Item = CondIdx> + '_ {
        self.iter().filter(|(_, c)| c.is_clinical()).map(|(i, _)| i)
    }

    pub fn clinical_count(&self) -> usize {
        self.conditions.iter().filter(|c| c.is_clinical()).count()
    }

    pub fn category_color(&self, name: &str) -> Option<&str> {
        self.categories
            .iter()
            .find(|c| c.name == name)
            .map(|c| c.color.as_str())
    }

    /// Transitive parents of `idx`, nearest first.
    pub fn ancestors(&self, idx: CondIdx) -> Ancestors<'_> {
        Ancestors {
            catalog: self,
            cursor: self.conditions[idx.index()].parent,
        }
    }

    pub fn most_general_code(&self, idx: CondIdx) -> Option<&Code> {
        most_general_code(self.get(idx))
    }

    /// Drops every member that has a transitive parent also in `ids`.
    pub fn collapse_by_hierarchy(
        &self,
        ids: &BTreeSet<CondIdx>,
    ) -> Result<BTreeSet<CondIdx>, CatalogError> {
        for id in ids {
            if self.try_get(*id).is_none() {
                return Err(CatalogError::UnknownCondition(format!("#{}", id.0)));
            }
        }
        Ok(ids
            .iter()
            .copied()
            .filter(|&id| !self.ancestors(id).any(|a| ids.contains(&a)))
            .collect())
    }
}

pub struct Ancestors<'a> {
    catalog: &'a Catalog,
    cursor: Option<CondIdx>,
}

impl Iterator for Ancestors<'_> {
    type Item = CondIdx;

    fn next(&mut self) -> Option<CondIdx> {
        let current = self.cursor?;
        self.cursor = self.catalog.get(current).parent;
        Some(current)
    }
}

/// The code selected by default when a condition is checked.
///
/// Loading guarantees that a condition with codes has exactly one general
/// code; `None` is only possible for code-less non-clinical conditions.
pub fn most_general_code(condition: &Condition) -> Option<&Code> {
    condition.codes.iter().find(|c| c.is_general)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn catalog(json: &str) -> Result<Catalog, CatalogError> {
        Catalog::load(json)
    }

    const D2: &str = r##"{
        "categories": [{"name": "digestive", "color": "#c08040"}],
        "conditions": [
            {"id": "constipation", "kind": "clinical", "label": "Constipation", "category": "digestive",
             "codes": [{"system": "ICD10", "value": "K59.0", "label": "Constipation", "general": true}]},
            {"id": "diverticulosis", "kind": "clinical", "label": "Diverticulosis", "category": "digestive",
             "codes": [{"system": "ICD10", "value": "K57.3", "label": "Diverticular disease of large intestine", "general": true}]},
            {"id": "fibre", "kind": "drug", "label": "Fibre supplements",
             "codes": [{"system": "ATC", "value": "A06AC", "label": "Bulk-forming laxatives", "general": true}]}
        ]
    }"##;

    #[test]
    fn loads_d2_conditions() {
        let cat = catalog(D2).unwrap();
        assert_eq!(cat.len(), 3);
        assert_eq!(cat.clinical_count(), 2);
        assert_eq!(cat.get(cat.lookup("fibre").unwrap()).kind, ConditionKind::Drug);
    }

    #[test]
    fn empty_condition_list() {
        let cat = catalog(r#"{"categories": [], "conditions": []}"#).unwrap();
        assert!(cat.is_empty());
    }

    #[test]
    fn parent_cycle_is_rejected() {
        let err = catalog(
            r##"{"categories": [{"name": "c", "color": "#000"}], "conditions": [
                {"id": "x", "kind": "clinical", "label": "X", "category": "c", "parent": "y",
                 "codes": [{"system": "ICD10", "value": "A", "label": "A"}]},
                {"id": "y", "kind": "clinical", "label": "Y", "category": "c", "parent": "x",
                 "codes": [{"system": "ICD10", "value": "B", "label": "B"}]}
            ]}"##,
        )
        .unwrap_err();
        assert!(matches!(err, CatalogError::Cycle(_)));
    }

    #[test]
    fn self_parent_is_a_cycle() {
        let err = catalog(
            r##"{"categories": [{"name": "c", "color": "#000"}], "conditions": [
                {"id": "x", "kind": "clinical", "label": "X", "category": "c", "parent": "x",
                 "codes": [{"system": "ICD10", "value": "A", "label": "A"}]}
            ]}"##,
        )
        .unwrap_err();
        assert_eq!(err, CatalogError::Cycle("x".into()));
    }

    #[test]
    fn dangling_parent_and_duplicate_id() {
        let err = catalog(
            r##"{"categories": [{"name": "c", "color": "#000"}], "conditions": [
                {"id": "x", "kind": "clinical", "label": "X", "category": "c", "parent": "nope",
                 "codes": [{"system": "ICD10", "value": "A", "label": "A"}]}
            ]}"##,
        )
        .unwrap_err();
        assert!(matches!(err, CatalogError::DanglingParent { .. }));

        let err = catalog(
            r#"{"conditions": [
                {"id": "d", "kind": "drug", "label": "D"},
                {"id": "d", "kind": "drug", "label": "D again"}
            ]}"#,
        )
        .unwrap_err();
        assert_eq!(err, CatalogError::DuplicateId("d".into()));
    }

    #[test]
    fn parse_error_reports_position() {
        let err = catalog("{\n  \"conditions\": [\n    {\"id\": }\n  ]\n}").unwrap_err();
        match err {
            CatalogError::Parse { line, .. } => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn missing_general_code_is_promoted_with_warning() {
        let (cat, warnings) = Catalog::load_with_warnings(
            r##"{"categories": [{"name": "c", "color": "#000"}], "conditions": [
                {"id": "x", "kind": "clinical", "label": "X", "category": "c",
                 "codes": [{"system": "ICD10", "value": "A1", "label": "A1"},
                           {"system": "ICD10", "value": "A2", "label": "A2"}]}
            ]}"##,
        )
        .unwrap();
        assert_eq!(warnings.len(), 1);
        assert_eq!(cat.most_general_code(CondIdx(0)).unwrap().value, "A1");
    }

    #[test]
    fn two_general_codes_rejected() {
        let err = catalog(
            r##"{"categories": [{"name": "c", "color": "#000"}], "conditions": [
                {"id": "x", "kind": "clinical", "label": "X", "category": "c",
                 "codes": [{"system": "ICD10", "value": "A1", "label": "A1", "general": true},
                           {"system": "ICD10", "value": "A2", "label": "A2", "general": true}]}
            ]}"##,
        )
        .unwrap_err();
        assert_eq!(err, CatalogError::MultipleGeneralCodes("x".into()));
    }

    #[test]
    fn most_general_code_diabetes() {
        let cat = catalog(
            r##"{"categories": [{"name": "endocrine", "color": "#000"}], "conditions": [
                {"id": "diabetes", "kind": "clinical", "label": "Diabetes", "category": "endocrine",
                 "codes": [{"system": "ICD10", "value": "E10", "label": "Insulin-dependent"},
                           {"system": "ICD10", "value": "E11", "label": "Non-insulin-dependent"},
                           {"system": "ICD10", "value": "E14", "label": "Unspecified", "general": true}]}
            ]}"##,
        )
        .unwrap();
        assert_eq!(cat.most_general_code(CondIdx(0)).unwrap().value, "E14");
        let d2 = catalog(D2).unwrap();
        let c = d2.lookup("constipation").unwrap();
        assert_eq!(d2.most_general_code(c).unwrap().value, "K59.0");
    }

    fn chain() -> Catalog {
        catalog(
            r##"{"categories": [{"name": "c", "color": "#000"}], "conditions": [
                {"id": "grandparent", "kind": "clinical", "label": "G", "category": "c",
                 "codes": [{"system": "ICD10", "value": "G", "label": "G"}]},
                {"id": "parent", "kind": "clinical", "label": "P", "category": "c", "parent": "grandparent",
                 "codes": [{"system": "ICD10", "value": "P", "label": "P"}]},
                {"id": "child", "kind": "clinical", "label": "C", "category": "c", "parent": "parent",
                 "codes": [{"system": "ICD10", "value": "C", "label": "C"}]},
                {"id": "other", "kind": "clinical", "label": "O", "category": "c",
                 "codes": [{"system": "ICD10", "value": "O", "label": "O"}]}
            ]}"##,
        )
        .unwrap()
    }

    #[test]
    fn collapse_cases() {
        let cat = chain();
        let ids = |names: &[&str]| -> BTreeSet<CondIdx> {
            names.iter().map(|n| cat.lookup(n).unwrap()).collect()
        };
        assert_eq!(
            cat.collapse_by_hierarchy(&ids(&["grandparent", "parent", "child"])).unwrap(),
            ids(&["grandparent"])
        );
        assert_eq!(
            cat.collapse_by_hierarchy(&ids(&["parent", "child"])).unwrap(),
            ids(&["parent"])
        );
        // Skipping a generation still collapses through the transitive parent.
        assert_eq!(
            cat.collapse_by_hierarchy(&ids(&["grandparent", "child", "other"])).unwrap(),
            ids(&["grandparent", "other"])
        );
        assert_eq!(
            cat.collapse_by_hierarchy(&ids(&["child", "other"])).unwrap(),
            ids(&["child", "other"])
        );
        assert!(cat
            .collapse_by_hierarchy(&[CondIdx(99)].into_iter().collect())
            .is_err());
    }

    #[test]
    fn parent_kind_mismatch() {
        let err = catalog(
            r##"{"categories": [{"name": "c", "color": "#000"}], "conditions": [
                {"id": "d", "kind": "drug", "label": "D"},
                {"id": "x", "kind": "clinical", "label": "X", "category": "c", "parent": "d",
                 "codes": [{"system": "ICD10", "value": "A", "label": "A"}]}
            ]}"##,
        )
        .unwrap_err();
        assert!(matches!(err, CatalogError::ParentKindMismatch { .. }));
    }
}
