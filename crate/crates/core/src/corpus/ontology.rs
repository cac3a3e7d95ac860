use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use super::CorpusError;

/// Label inventories shared by a corpus and every model trained on it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ontology {
    pub name: String,
    pub event_types: Vec<String>,
    pub argument_roles: Vec<String>,
    pub entity_types: Vec<String>,
    pub relation_types: Vec<String>,
}

const ACE05_EVENT_TYPES: [&str; 33] = [
    "Business:Declare-Bankruptcy",
    "Business:End-Org",
    "Business:Merge-Org",
    "Business:Start-Org",
    "Conflict:Attack",
    "Conflict:Demonstrate",
    "Contact:Meet",
    "Contact:Phone-Write",
    "Justice:Acquit",
    "Justice:Appeal",
    "Justice:Arrest-Jail",
    "Justice:Charge-Indict",
    "Justice:Convict",
    "Justice:Execute",
    "Justice:Extradite",
    "Justice:Fine",
    "Justice:Pardon",
    "Justice:Release-Parole",
    "Justice:Sentence",
    "Justice:Sue",
    "Justice:Trial-Hearing",
    "Life:Be-Born",
    "Life:Die",
    "Life:Divorce",
    "Life:Injure",
    "Life:Marry",
    "Movement:Transport",
    "Personnel:Elect",
    "Personnel:End-Position",
    "Personnel:Nominate",
    "Personnel:Start-Position",
    "Transaction:Transfer-Money",
    "Transaction:Transfer-Ownership",
];

const ACE05_ROLES: [&str; 22] = [
    "Adjudicator",
    "Agent",
    "Artifact",
    "Attacker",
    "Beneficiary",
    "Buyer",
    "Defendant",
    "Destination",
    "Entity",
    "Giver",
    "Instrument",
    "Organization",
    "Origin",
    "Person",
    "Place",
    "Plaintiff",
    "Prosecutor",
    "Recipient",
    "Seller",
    "Target",
    "Vehicle",
    "Victim",
];

const ACE05_ENTITY_TYPES: [&str; 7] = ["FAC", "GPE", "LOC", "ORG", "PER", "VEH", "WEA"];

const ACE05_RELATION_TYPES: [&str; 6] =
    ["ART", "GEN-AFF", "ORG-AFF", "PART-WHOLE", "PER-SOC", "PHYS"];

// The 18 event subtypes annotated across all three Rich ERE languages.
const ERE_EVENT_TYPES: [&str; 18] = [
    "attack",
    "demonstrate",
    "broadcast",
    "contact",
    "correspondence",
    "meet",
    "arrestjail",
    "die",
    "injure",
    "artifact",
    "transportartifact",
    "transportperson",
    "elect",
    "endposition",
    "startposition",
    "transaction",
    "transfermoney",
    "transferownership",
];

const ERE_ROLES: [&str; 18] = [
    "agent",
    "attacker",
    "audience",
    "beneficiary",
    "destination",
    "entity",
    "giver",
    "instrument",
    "money",
    "origin",
    "person",
    "place",
    "position",
    "recipient",
    "target",
    "thing",
    "time",
    "victim",
];

const ERE_ENTITY_TYPES: [&str; 15] = [
    "PER", "ORG", "GPE", "LOC", "FAC", "AGE", "COM", "CRIME", "MONEY", "SENTENCE", "TIME",
    "TITLE", "URL", "VEH", "WEA",
];

const ERE_RELATION_TYPES: [&str; 6] = [
    "generalaffiliation",
    "orgaffiliation",
    "partwhole",
    "personalsocial",
    "physical",
    "sponsorship",
];

fn owned(items: &[&str]) -> Vec<String> {
    items.iter().map(|s| s.to_string()).collect()
}

impl Ontology {
    /// ACE 2005 inventory: 33 event types, 22 roles, 7 entity types, 6 relation types.
    pub fn ace05() -> Self {
        Self {
            name: "ace05".into(),
            event_types: owned(&ACE05_EVENT_TYPES),
            argument_roles: owned(&ACE05_ROLES),
            entity_types: owned(&ACE05_ENTITY_TYPES),
            relation_types: owned(&ACE05_RELATION_TYPES),
        }
    }

    /// Reduced Rich ERE inventory (18 event types, 18 roles, 15 entity types,
    /// 6 relation types). The role subset is not canonical; load a custom
    /// ontology from a corpus file when the exact inventory matters.
    pub fn rich_ere() -> Self {
        Self {
            name: "rich_ere".into(),
            event_types: owned(&ERE_EVENT_TYPES),
            argument_roles: owned(&ERE_ROLES),
            entity_types: owned(&ERE_ENTITY_TYPES),
            relation_types: owned(&ERE_RELATION_TYPES),
        }
    }

    pub fn by_name(name: &str) -> Option<Self> {
        match name {
            "ace05" => Some(Self::ace05()),
            "rich_ere" | "ere" => Some(Self::rich_ere()),
            _ => None,
        }
    }

    pub fn has_event_type(&self, label: &str) -> bool {
        self.event_types.iter().any(|t| t == label)
    }

    pub fn has_role(&self, label: &str) -> bool {
        self.argument_roles.iter().any(|t| t == label)
    }

    pub fn has_entity_type(&self, label: &str) -> bool {
        self.entity_types.iter().any(|t| t == label)
    }

    pub fn has_relation_type(&self, label: &str) -> bool {
        self.relation_types.iter().any(|t| t == label)
    }

    /// Checks that every inventory is duplicate-free and that the four
    /// inventories are pairwise disjoint.
    pub fn validate(&self) -> Result<(), CorpusError> {
        let groups: [(&str, &Vec<String>); 4] = [
            ("event_types", &self.event_types),
            ("argument_roles", &self.argument_roles),
            ("entity_types", &self.entity_types),
            ("relation_types", &self.relation_types),
        ];
        let mut seen: HashSet<&str> = HashSet::new();
        for (field, labels) in groups {
            let mut local = HashSet::new();
            for label in labels {
                if label.is_empty() {
                    return Err(CorpusError::Ontology(format!("empty label in {field}")));
                }
                if !local.insert(label.as_str()) {
                    return Err(CorpusError::Ontology(format!(
                        "duplicate label {label:?} in {field}"
                    )));
                }
                if !seen.insert(label.as_str()) {
                    return Err(CorpusError::Ontology(format!(
                        "label {label:?} in {field} also appears in another inventory"
                    )));
                }
            }
        }
        Ok(())
    }
}
