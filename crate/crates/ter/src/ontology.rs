//! Event schema: event types, their ordered argument roles, and the groups
//! of roles a single token may fill at once.
//!
//! Role tags are plain integers: within each event type, roles are numbered
//! 1, 2, 3, … in declaration order and 0 is reserved for "no role" (the O
//! tag). All downstream grids, losses and metrics speak in these tags.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::Error;

/// Integer role tag; 0 means "no role".
pub type RoleTag = usize;

/// Roles that may co-occur on one token within a single event, plus the POS
/// tags identifying tokens eligible for that duplication (e.g. a date token
/// acting as both StartDate and EndDate).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DupGroup {
    pub roles: Vec<String>,
    pub pos_tags: Vec<String>,
}

/// One event type: a name and its ordered role list.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventTypeDef {
    pub name: String,
    pub roles: Vec<String>,
    #[serde(default)]
    pub dup_groups: Vec<DupGroup>,
}

impl EventTypeDef {
    /// Number of named roles, i.e. the largest tag this type assigns.
    pub fn role_count(&self) -> usize {
        self.roles.len()
    }
}

/// The full event schema. Immutable after loading; event-type order is the
/// channel order used throughout the model.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventOntology {
    #[serde(default)]
    pub event_types: Vec<EventTypeDef>,
}

impl EventOntology {
    /// Parse and validate an ontology from TOML text.
    pub fn from_toml_str(text: &str) -> Result<Self, Error> {
        let ont: EventOntology = toml::from_str(text)?;
        ont.validate()?;
        Ok(ont)
    }

    /// Load an ontology file.
    pub fn load(path: &Path) -> Result<Self, Error> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text)
    }

    /// Number of event types (the channel count).
    pub fn type_count(&self) -> usize {
        self.event_types.len()
    }

    pub fn type_index(&self, name: &str) -> Option<usize> {
        self.event_types.iter().position(|t| t.name == name)
    }

    pub fn event_type(&self, name: &str) -> Option<&EventTypeDef> {
        self.event_types.iter().find(|t| t.name == name)
    }

    pub fn validate(&self) -> Result<(), Error> {
        if self.event_types.is_empty() {
            return Err(Error::Invalid("ontology declares no event types".into()));
        }
        let mut type_names = BTreeSet::new();
        for t in &self.event_types {
            if !type_names.insert(&t.name) {
                return Err(Error::Invalid(format!("duplicate event type name {:?}", t.name)));
            }
            if t.roles.is_empty() {
                return Err(Error::Invalid(format!("event type {:?} has no roles", t.name)));
            }
            let mut role_names = BTreeSet::new();
            for r in &t.roles {
                if !role_names.insert(r) {
                    return Err(Error::Invalid(format!(
                        "duplicate role {:?} in event type {:?}",
                        r, t.name
                    )));
                }
            }
            for g in &t.dup_groups {
                if g.roles.len() < 2 {
                    return Err(Error::Invalid(format!(
                        "dup group in {:?} needs at least two roles",
                        t.name
                    )));
                }
                let mut group_names = BTreeSet::new();
                for r in &g.roles {
                    if !role_names.contains(r) {
                        return Err(Error::Invalid(format!(
                            "dup group in {:?} references unknown role {:?}",
                            t.name, r
                        )));
                    }
                    if !group_names.insert(r) {
                        return Err(Error::Invalid(format!(
                            "dup group in {:?} lists role {:?} twice",
                            t.name, r
                        )));
                    }
                }
                if g.pos_tags.is_empty() {
                    return Err(Error::Invalid(format!(
                        "dup group in {:?} has an empty POS-tag predicate; it could never apply",
                        t.name
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Assignment of integer tags to roles, one table per event type.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoleNumbering {
    /// type name -> role name -> tag in 1..=role_count.
    tags: BTreeMap<String, BTreeMap<String, RoleTag>>,
    /// type name -> roles in declaration (= tag) order.
    ordered: BTreeMap<String, Vec<String>>,
}

impl RoleNumbering {
    /// Tag for a role of an event type; the name "O" maps to tag 0.
    pub fn role_tag(&self, event_type: &str, role: &str) -> Result<RoleTag, Error> {
        let table = self
            .tags
            .get(event_type)
            .ok_or_else(|| Error::Invalid(format!("unknown event type {event_type:?}")))?;
        if role == "O" {
            return Ok(0);
        }
        table
            .get(role)
            .copied()
            .ok_or_else(|| Error::Invalid(format!("unknown role {role:?} for event type {event_type:?}")))
    }

    /// Inverse of [`role_tag`]: the role name carrying `tag`, or "O" for 0.
    pub fn role_name(&self, event_type: &str, tag: RoleTag) -> Result<&str, Error> {
        if tag == 0 {
            return Ok("O");
        }
        let ordered = self
            .ordered
            .get(event_type)
            .ok_or_else(|| Error::Invalid(format!("unknown event type {event_type:?}")))?;
        ordered
            .get(tag - 1)
            .map(String::as_str)
            .ok_or_else(|| Error::Invalid(format!("tag {tag} out of range for event type {event_type:?}")))
    }

    /// Number of named roles for a type (tags run 1..=width).
    pub fn width(&self, event_type: &str) -> Result<usize, Error> {
        self.ordered
            .get(event_type)
            .map(Vec::len)
            .ok_or_else(|| Error::Invalid(format!("unknown event type {event_type:?}")))
    }
}

/// Assign consecutive tags 1, 2, 3, … to each type's roles in declaration
/// order. Pure and deterministic.
pub fn number_roles(ont: &EventOntology) -> RoleNumbering {
    let mut tags = BTreeMap::new();
    let mut ordered = BTreeMap::new();
    for t in &ont.event_types {
        let table: BTreeMap<String, RoleTag> =
            t.roles.iter().enumerate().map(|(i, r)| (r.clone(), i + 1)).collect();
        tags.insert(t.name.clone(), table);
        ordered.insert(t.name.clone(), t.roles.clone());
    }
    RoleNumbering { tags, ordered }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub const EQUITY_ONTOLOGY: &str = include_str!("../data/equity_events.toml");

    fn equity() -> EventOntology {
        EventOntology::from_toml_str(EQUITY_ONTOLOGY).unwrap()
    }

    #[test]
    fn five_type_schema_loads() {
        let ont = equity();
        assert_eq!(ont.type_count(), 5);
        let names: Vec<&str> = ont.event_types.iter().map(|t| t.name.as_str()).collect();
        assert_eq!(
            names,
            [
                "EquityFreeze",
                "EquityRepurchase",
                "EquityUnderweight",
                "EquityOverweight",
                "EquityPledge"
            ]
        );
    }

    #[test]
    fn overweight_tags_follow_declaration_order() {
        let num = number_roles(&equity());
        assert_eq!(num.role_tag("EquityOverweight", "EquityHolder").unwrap(), 1);
        assert_eq!(num.role_tag("EquityOverweight", "TradedShares").unwrap(), 2);
        assert_eq!(num.role_tag("EquityOverweight", "StartDate").unwrap(), 3);
        assert_eq!(num.role_tag("EquityOverweight", "EndDate").unwrap(), 4);
        assert_eq!(num.width("EquityOverweight").unwrap(), 6);
    }

    #[test]
    fn underweight_tags_run_one_to_six() {
        let ont = equity();
        let num = number_roles(&ont);
        let eu = ont.event_type("EquityUnderweight").unwrap();
        for (i, role) in eu.roles.iter().enumerate() {
            assert_eq!(num.role_tag("EquityUnderweight", role).unwrap(), i + 1);
        }
    }

    #[test]
    fn o_maps_to_zero_and_back() {
        let num = number_roles(&equity());
        assert_eq!(num.role_tag("EquityOverweight", "O").unwrap(), 0);
        assert_eq!(num.role_name("EquityOverweight", 0).unwrap(), "O");
        assert_eq!(num.role_name("EquityOverweight", 4).unwrap(), "EndDate");
    }

    #[test]
    fn unknown_role_is_an_error() {
        let num = number_roles(&equity());
        assert!(num.role_tag("EquityOverweight", "Nonexistent").is_err());
        assert!(num.role_tag("NoSuchType", "EquityHolder").is_err());
        assert!(num.role_name("EquityOverweight", 7).is_err());
    }

    #[test]
    fn minimal_single_role_schema() {
        let ont = EventOntology::from_toml_str(
            r#"
            [[event_types]]
            name = "T"
            roles = ["X"]
            "#,
        )
        .unwrap();
        assert_eq!(ont.type_count(), 1);
        let num = number_roles(&ont);
        assert_eq!(num.role_tag("T", "X").unwrap(), 1);
        assert_eq!(num.width("T").unwrap(), 1);
    }

    #[test]
    fn dup_group_with_time_predicate_accepted() {
        let ont = equity();
        let eo = ont.event_type("EquityOverweight").unwrap();
        assert_eq!(eo.dup_groups.len(), 1);
        assert_eq!(eo.dup_groups[0].roles, ["StartDate", "EndDate"]);
        assert_eq!(eo.dup_groups[0].pos_tags, ["nt"]);
    }

    #[test]
    fn validation_rejects_bad_schemas() {
        let cases: &[(&str, &str)] = &[
            ("", "no event types"),
            (
                r#"
                [[event_types]]
                name = "A"
                roles = ["X"]
                [[event_types]]
                name = "A"
                roles = ["Y"]
                "#,
                "duplicate event type",
            ),
            (
                r#"
                [[event_types]]
                name = "A"
                roles = ["X", "X"]
                "#,
                "duplicate role",
            ),
            (
                r#"
                [[event_types]]
                name = "A"
                roles = []
                "#,
                "no roles",
            ),
            (
                r#"
                [[event_types]]
                name = "A"
                roles = ["X", "Y"]
                [[event_types.dup_groups]]
                roles = ["X", "Z"]
                pos_tags = ["nt"]
                "#,
                "unknown role",
            ),
            (
                r#"
                [[event_types]]
                name = "A"
                roles = ["X", "Y"]
                [[event_types.dup_groups]]
                roles = ["X"]
                pos_tags = ["nt"]
                "#,
                "at least two roles",
            ),
            (
                r#"
                [[event_types]]
                name = "A"
                roles = ["X", "Y"]
                [[event_types.dup_groups]]
                roles = ["X", "Y"]
                pos_tags = []
                "#,
                "empty POS-tag predicate",
            ),
        ];
        for (toml_text, expect) in cases {
            let err = EventOntology::from_toml_str(toml_text).unwrap_err().to_string();
            assert!(err.contains(expect), "expected {expect:?} in {err:?}");
        }
    }

    #[test]
    fn numbering_is_pure() {
        let ont = equity();
        assert_eq!(number_roles(&ont), number_roles(&ont));
    }

    #[test]
    fn tags_form_consecutive_range_for_every_type() {
        let ont = equity();
        let num = number_roles(&ont);
        for t in &ont.event_types {
            let mut tags: Vec<RoleTag> =
                t.roles.iter().map(|r| num.role_tag(&t.name, r).unwrap()).collect();
            tags.sort_unstable();
            let expect: Vec<RoleTag> = (1..=t.roles.len()).collect();
            assert_eq!(tags, expect, "type {}", t.name);
            // role_name inverts role_tag for every declared role.
            for r in &t.roles {
                let tag = num.role_tag(&t.name, r).unwrap();
                assert_eq!(num.role_name(&t.name, tag).unwrap(), r);
            }
        }
    }
}
