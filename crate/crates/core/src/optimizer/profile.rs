//! Named weight presets for common deployment targets.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::objective::ObjectiveWeights;

pub const BALANCED: &str = "balanced";
pub const CLOUD: &str = "cloud";
pub const EDGE: &str = "edge";

/// Weight presets looked up by name. Starts with the built-in presets;
/// entries can be added or overridden at runtime.
#[derive(Debug, Clone, PartialEq)]
pub struct ProfileRegistry {
    profiles: BTreeMap<String, ObjectiveWeights>,
}

impl ProfileRegistry {
    pub fn empty() -> Self {
        Self { profiles: BTreeMap::new() }
    }

    pub fn builtin() -> Self {
        let mut r = Self::empty();
        r.register(BALANCED, ObjectiveWeights::balanced());
        r.register(CLOUD, ObjectiveWeights::new(0.40, 0.45, 0.15).expect("valid preset"));
        r.register(EDGE, ObjectiveWeights::new(0.20, 0.25, 0.55).expect("valid preset"));
        r
    }

    pub fn register(&mut self, name: impl Into<String>, weights: ObjectiveWeights) -> Option<ObjectiveWeights> {
        self.profiles.insert(name.into(), weights)
    }

    pub fn get(&self, name: &str) -> Result<ObjectiveWeights> {
        self.profiles.get(name).copied().ok_or_else(|| Error::UnknownName {
            what: "profile",
            name: name.to_string(),
            valid: self.names().join(", "),
        })
    }

    pub fn names(&self) -> Vec<&str> {
        self.profiles.keys().map(String::as_str).collect()
    }

    /// Merges a JSON object of `name -> [lambda1, lambda2, lambda3]` into
    /// the registry, replacing presets with the same name.
    pub fn apply_overrides_json(&mut self, text: &str) -> Result<()> {
        let parsed: BTreeMap<String, ObjectiveWeights> =
            serde_json::from_str(text).map_err(|e| Error::Parse(format!("profile overrides: {e}")))?;
        self.profiles.extend(parsed);
        Ok(())
    }
}

impl Default for ProfileRegistry {
    fn default() -> Self {
        Self::builtin()
    }
}

/// Built-in preset lookup.
pub fn profile_weights(name: &str) -> Result<ObjectiveWeights> {
    ProfileRegistry::builtin().get(name)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets() {
        let third = 1.0 / 3.0;
        assert_eq!(profile_weights("balanced").unwrap().as_array(), [third, third, third]);
        assert_eq!(profile_weights("cloud").unwrap().as_array(), [0.40, 0.45, 0.15]);
        let edge = profile_weights("edge").unwrap();
        assert!(edge.cost() > edge.information() && edge.cost() > edge.accuracy());
    }

    #[test]
    fn unknown_lists_valid_names() {
        let err = profile_weights("mobile").unwrap_err().to_string();
        assert!(err.contains("balanced, cloud, edge"), "{err}");
    }

    #[test]
    fn overrides() {
        let mut r = ProfileRegistry::builtin();
        r.apply_overrides_json(r#"{"edge": [0.1, 0.1, 0.8], "lab": [1, 0, 0]}"#).unwrap();
        assert_eq!(r.get("edge").unwrap().as_array(), [0.1, 0.1, 0.8]);
        assert_eq!(r.get("lab").unwrap().as_array(), [1.0, 0.0, 0.0]);
        assert!(r.apply_overrides_json(r#"{"bad": [0, 0, 0]}"#).is_err());
        assert!(r.apply_overrides_json(r#"{"bad": [1, 2]}"#).is_err());
    }
}
