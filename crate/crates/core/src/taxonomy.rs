//! The ordered action taxonomy and the binary vectors aligned to it.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::path::Path;
use std::sync::Arc;

use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest, Sha256};
use thiserror::Error;

/// Version tag of the built-in 21-action taxonomy.
pub const DEFAULT_TAXONOMY_VERSION: &str = "tim-21-v1";

/// Built-in response actions, in canonical order.
pub const DEFAULT_ACTIONS: [&str; 21] = [
    "Activate VMS",
    "Implement Detours",
    "Initiate Lane Closures",
    "Remove Debris Hazards",
    "Deploy Cones/Flares",
    "Request Occupant Extrication",
    "Implement Traffic Breaks",
    "Issue SigAlert",
    "Notify Utility Companies",
    "Request Heavy or Specialized Tow",
    "Evacuate or Secure",
    "Request Hazmat Team",
    "Request Towing Services",
    "Dispatch Police or EMS",
    "Request Ambulance or Medical",
    "Request Fire Department or Rescue",
    "Request Occupant Transport",
    "Notify TMC",
    "Notify Local Police Department",
    "Request Animal Control",
    "Request Lab Tech (Phlebotomy)",
];

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TaxonomyError {
    #[error("unknown action {0:?}")]
    UnknownAction(String),
    #[error("missing action {0:?}")]
    MissingAction(String),
    #[error("action {action:?} has non-binary value {value}")]
    NonBinaryValue { action: String, value: i64 },
    #[error("duplicate action {0:?} in taxonomy")]
    DuplicateAction(String),
    #[error("taxonomy is empty")]
    Empty,
    #[error("vector has length {actual}, taxonomy has {expected} actions")]
    LengthMismatch { expected: usize, actual: usize },
    #[error("vector belongs to taxonomy {actual:?}, expected {expected:?}")]
    VersionMismatch { expected: String, actual: String },
    #[error("invalid bit string: {0}")]
    BadBits(String),
    #[error("cannot read taxonomy file: {0}")]
    Io(String),
}

#[derive(Debug)]
struct TaxonomyInner {
    version: String,
    actions: Vec<String>,
    index: HashMap<String, usize>,
}

/// An ordered, duplicate-free list of action names. Cheap to clone.
#[derive(Debug, Clone)]
pub struct ActionTaxonomy {
    inner: Arc<TaxonomyInner>,
}

impl PartialEq for ActionTaxonomy {
    fn eq(&self, other: &Self) -> bool {
        self.inner.version == other.inner.version && self.inner.actions == other.inner.actions
    }
}

impl Eq for ActionTaxonomy {}

impl ActionTaxonomy {
    pub fn new<I, S>(version: impl Into<String>, actions: I) -> Result<Self, TaxonomyError>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let actions: Vec<String> = actions.into_iter().map(Into::into).collect();
        if actions.is_empty() {
            return Err(TaxonomyError::Empty);
        }
        let mut index = HashMap::with_capacity(actions.len());
        for (i, name) in actions.iter().enumerate() {
            if index.insert(name.clone(), i).is_some() {
                return Err(TaxonomyError::DuplicateAction(name.clone()));
            }
        }
        Ok(Self {
            inner: Arc::new(TaxonomyInner {
                version: version.into(),
                actions,
                index,
            }),
        })
    }

    /// Parses a plain-text taxonomy: one action per line, order significant.
    /// Blank lines are skipped; the version is derived from the content hash.
    pub fn from_text(text: &str) -> Result<Self, TaxonomyError> {
        let actions: Vec<&str> = text
            .lines()
            .map(|l| l.trim_end_matches('\r'))
            .filter(|l| !l.trim().is_empty())
            .collect();
        let mut hasher = Sha256::new();
        for a in &actions {
            hasher.update(a.as_bytes());
            hasher.update(b"\n");
        }
        let digest = hex::encode(hasher.finalize());
        Self::new(format!("file-{}", &digest[..12]), actions)
    }

    pub fn load(path: &Path) -> Result<Self, TaxonomyError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| TaxonomyError::Io(format!("{}: {e}", path.display())))?;
        Self::from_text(&text)
    }

    pub fn version(&self) -> &str {
        &self.inner.version
    }

    pub fn actions(&self) -> &[String] {
        &self.inner.actions
    }

    pub fn len(&self) -> usize {
        self.inner.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inner.actions.is_empty()
    }

    pub fn index_of(&self, action: &str) -> Option<usize> {
        self.inner.index.get(action).copied()
    }

    pub fn contains(&self, action: &str) -> bool {
        self.inner.index.contains_key(action)
    }

    /// True when this taxonomy holds exactly the built-in action set.
    pub fn is_default_set(&self) -> bool {
        self.len() == DEFAULT_ACTIONS.len() && DEFAULT_ACTIONS.iter().all(|a| self.contains(a))
    }

    pub fn zeros(&self) -> ActionVector {
        ActionVector {
            bits: vec![0; self.len()],
            taxonomy_version: self.version().to_string(),
        }
    }

    /// Builds a vector from a complete mapping. Every taxonomy action must be
    /// present, no other keys are allowed, and every value must be 0 or 1.
    pub fn vector_from_mapping<K: AsRef<str>>(
        &self,
        mapping: &[(K, i64)],
    ) -> Result<ActionVector, TaxonomyError> {
        let mut bits: Vec<Option<u8>> = vec![None; self.len()];
        for (key, value) in mapping {
            let key = key.as_ref();
            let i = self
                .index_of(key)
                .ok_or_else(|| TaxonomyError::UnknownAction(key.to_string()))?;
            let bit = match value {
                0 => 0,
                1 => 1,
                v => {
                    return Err(TaxonomyError::NonBinaryValue {
                        action: key.to_string(),
                        value: *v,
                    })
                }
            };
            bits[i] = Some(bit);
        }
        let bits = bits
            .into_iter()
            .enumerate()
            .map(|(i, b)| b.ok_or_else(|| TaxonomyError::MissingAction(self.actions()[i].clone())))
            .collect::<Result<Vec<u8>, _>>()?;
        Ok(ActionVector {
            bits,
            taxonomy_version: self.version().to_string(),
        })
    }

    pub fn vector_from_map(
        &self,
        mapping: &BTreeMap<String, i64>,
    ) -> Result<ActionVector, TaxonomyError> {
        let pairs: Vec<(&str, i64)> = mapping.iter().map(|(k, v)| (k.as_str(), *v)).collect();
        self.vector_from_mapping(&pairs)
    }

    /// Builds a vector from the set of actions that are switched on.
    pub fn vector_from_active<S: AsRef<str>>(
        &self,
        active: &[S],
    ) -> Result<ActionVector, TaxonomyError> {
        let mut v = self.zeros();
        for a in active {
            let i = self
                .index_of(a.as_ref())
                .ok_or_else(|| TaxonomyError::UnknownAction(a.as_ref().to_string()))?;
            v.bits[i] = 1;
        }
        Ok(v)
    }

    pub fn vector_from_bits(&self, bits: Vec<u8>) -> Result<ActionVector, TaxonomyError> {
        let v = ActionVector::new(bits, self.version())?;
        self.check(&v)?;
        Ok(v)
    }

    /// Inverse of [`vector_from_mapping`](Self::vector_from_mapping), in taxonomy order.
    pub fn to_mapping(&self, v: &ActionVector) -> Result<Vec<(String, u8)>, TaxonomyError> {
        self.check(v)?;
        Ok(self
            .actions()
            .iter()
            .cloned()
            .zip(v.bits.iter().copied())
            .collect())
    }

    /// Renders the vector as a Python dictionary literal of the shape the
    /// extraction prompt asks for.
    pub fn mapping_literal(&self, v: &ActionVector) -> Result<String, TaxonomyError> {
        let pairs = self.to_mapping(v)?;
        let body = pairs
            .iter()
            .map(|(k, b)| format!("    \"{k}\": {b}"))
            .collect::<Vec<_>>()
            .join(",\n");
        Ok(format!("actions = {{\n{body}\n}}"))
    }

    pub fn check(&self, v: &ActionVector) -> Result<(), TaxonomyError> {
        if v.len() != self.len() {
            return Err(TaxonomyError::LengthMismatch {
                expected: self.len(),
                actual: v.len(),
            });
        }
        if v.taxonomy_version != self.version() {
            return Err(TaxonomyError::VersionMismatch {
                expected: self.version().to_string(),
                actual: v.taxonomy_version.clone(),
            });
        }
        Ok(())
    }
}

impl Default for ActionTaxonomy {
    fn default() -> Self {
        default_taxonomy()
    }
}

/// The built-in 21-action taxonomy.
pub fn default_taxonomy() -> ActionTaxonomy {
    ActionTaxonomy::new(DEFAULT_TAXONOMY_VERSION, DEFAULT_ACTIONS).expect("built-in taxonomy")
}

/// A fixed-length 0/1 vector over a taxonomy.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ActionVector {
    bits: Vec<u8>,
    taxonomy_version: String,
}

impl ActionVector {
    pub fn new(bits: Vec<u8>, taxonomy_version: impl Into<String>) -> Result<Self, TaxonomyError> {
        if let Some(b) = bits.iter().find(|b| **b > 1) {
            return Err(TaxonomyError::BadBits(format!("element {b} is not 0 or 1")));
        }
        Ok(Self {
            bits,
            taxonomy_version: taxonomy_version.into(),
        })
    }

    pub fn bits(&self) -> &[u8] {
        &self.bits
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn taxonomy_version(&self) -> &str {
        &self.taxonomy_version
    }

    pub fn get(&self, i: usize) -> Option<u8> {
        self.bits.get(i).copied()
    }

    pub fn action(&self, taxonomy: &ActionTaxonomy, name: &str) -> Option<u8> {
        taxonomy.index_of(name).and_then(|i| self.get(i))
    }

    pub fn count_ones(&self) -> usize {
        self.bits.iter().filter(|b| **b == 1).count()
    }

    pub fn complement(&self) -> Self {
        Self {
            bits: self.bits.iter().map(|b| 1 - b).collect(),
            taxonomy_version: self.taxonomy_version.clone(),
        }
    }

    /// Compact `0`/`1` string form used in run files.
    pub fn to_bit_string(&self) -> String {
        self.bits.iter().map(|b| if *b == 1 { '1' } else { '0' }).collect()
    }

    pub fn from_bit_string(s: &str, taxonomy_version: &str) -> Result<Self, TaxonomyError> {
        let bits = s
            .chars()
            .map(|c| match c {
                '0' => Ok(0),
                '1' => Ok(1),
                other => Err(TaxonomyError::BadBits(format!("unexpected character {other:?}"))),
            })
            .collect::<Result<Vec<u8>, _>>()?;
        Self::new(bits, taxonomy_version)
    }
}

impl fmt::Display for ActionVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[")?;
        for (i, b) in self.bits.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{b}")?;
        }
        write!(f, "]")
    }
}

#[derive(Serialize, Deserialize)]
struct VectorRepr {
    taxonomy: String,
    bits: String,
}

impl Serialize for ActionVector {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        VectorRepr {
            taxonomy: self.taxonomy_version.clone(),
            bits: self.to_bit_string(),
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for ActionVector {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let repr = VectorRepr::deserialize(deserializer)?;
        ActionVector::from_bit_string(&repr.bits, &repr.taxonomy).map_err(D::Error::custom)
    }
}
