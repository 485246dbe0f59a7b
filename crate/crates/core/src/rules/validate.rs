use std::collections::BTreeSet;
use std::fmt;

use super::RuleBase;
use crate::catalog::CondIdx;

/// Lint findings for a rulebase. None of these stop compilation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Diagnostic {
    /// The rule requires `condition` both present and absent, or has a
    /// union whose members are all required absent.
    Unsatisfiable { rule: String, condition: String },
    /// A union with one member behaves like a present condition.
    DegenerateUnion { rule: String, union: usize, member: String },
    /// A catalog condition no rule mentions.
    UnusedCondition { condition: String },
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Diagnostic::Unsatisfiable { rule, condition } => write!(
                f,
                "warning: rule `{rule}` is unsatisfiable: `{condition}` is required both present and absent"
            ),
            Diagnostic::DegenerateUnion { rule, union, member } => write!(
                f,
                "warning: rule `{rule}` has a degenerate union #{union} with the single member `{member}`"
            ),
            Diagnostic::UnusedCondition { condition } => {
                write!(f, "warning: condition `{condition}` is not used by any rule")
            }
        }
    }
}

pub fn validate_rulebase(rb: &RuleBase) -> Vec<Diagnostic> {
    let catalog = rb.catalog();
    let mut out = Vec::new();
    for rule in rb.rules() {
        let b = &rule.body;
        let absent: BTreeSet<CondIdx> = b.c_absent.union(&b.d_absent).copied().collect();
        let contradictions = b
            .c_present
            .intersection(&b.c_absent)
            .chain(b.d_present.intersection(&b.d_absent));
        for idx in contradictions {
            out.push(Diagnostic::Unsatisfiable {
                rule: rule.id.clone(),
                condition: catalog.id_of(*idx).to_string(),
            });
        }
        for (i, u) in b.unions.iter().enumerate() {
            if !u.is_empty() && u.members().all(|m| absent.contains(&m)) {
                let first = u.members().next().expect("non-empty union");
                out.push(Diagnostic::Unsatisfiable {
                    rule: rule.id.clone(),
                    condition: catalog.id_of(first).to_string(),
                });
            }
            if u.len() == 1 {
                let member = u.members().next().expect("one member");
                out.push(Diagnostic::DegenerateUnion {
                    rule: rule.id.clone(),
                    union: i,
                    member: catalog.id_of(member).to_string(),
                });
            }
        }
    }
    let used = rb.referenced();
    for (idx, cond) in catalog.iter() {
        if !used.contains(&idx) {
            out.push(Diagnostic::UnusedCondition {
                condition: cond.id.clone(),
            });
        }
    }
    out
}
