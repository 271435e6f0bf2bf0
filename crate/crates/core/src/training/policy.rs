use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::params::ParamGroup;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Trainability {
    Frozen,
    Trainable,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PolicyError {
    #[error("unknown parameter group `{0}`")]
    UnknownGroup(String),
    #[error("registry does not list parameter group `{0}`")]
    MissingGroup(ParamGroup),
    #[error("registry lists parameter group `{0}` twice")]
    DuplicateGroup(ParamGroup),
}

/// Frozen/trainable flag per parameter group.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainabilityPolicy(BTreeMap<ParamGroup, Trainability>);

impl TrainabilityPolicy {
    pub fn get(&self, group: ParamGroup) -> Trainability {
        self.0[&group]
    }

    pub fn is_trainable(&self, group: ParamGroup) -> bool {
        self.get(group) == Trainability::Trainable
    }

    pub fn trainable_groups(&self) -> impl Iterator<Item = ParamGroup> + '_ {
        self.0.iter().filter(|(_, &t)| t == Trainability::Trainable).map(|(&g, _)| g)
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamGroup, Trainability)> + '_ {
        self.0.iter().map(|(&g, &t)| (g, t))
    }
}

/// Everything except the image encoder trains.
pub fn build_policy<S: AsRef<str>>(registry: impl IntoIterator<Item = S>) -> Result<TrainabilityPolicy, PolicyError> {
    let mut flags = BTreeMap::new();
    for name in registry {
        let name = name.as_ref();
        let group: ParamGroup = name.parse().map_err(|_| PolicyError::UnknownGroup(name.to_string()))?;
        let flag = if group == ParamGroup::ImageEncoder {
            Trainability::Frozen
        } else {
            Trainability::Trainable
        };
        if flags.insert(group, flag).is_some() {
            return Err(PolicyError::DuplicateGroup(group));
        }
    }
    if let Some(missing) = ParamGroup::ALL.into_iter().find(|g| !flags.contains_key(g)) {
        return Err(PolicyError::MissingGroup(missing));
    }
    Ok(TrainabilityPolicy(flags))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn only_the_image_encoder_is_frozen() {
        let policy = build_policy(ParamGroup::ALL.map(ParamGroup::as_str)).unwrap();
        for g in ParamGroup::ALL {
            assert_eq!(policy.is_trainable(g), g != ParamGroup::ImageEncoder, "{g}");
        }
        assert_eq!(policy.trainable_groups().count(), 4);
    }

    #[test]
    fn registry_errors() {
        let mut names: Vec<&str> = ParamGroup::ALL.map(ParamGroup::as_str).to_vec();
        names.push("text_decoder");
        assert_eq!(build_policy(&names).unwrap_err(), PolicyError::UnknownGroup("text_decoder".into()));
        assert_eq!(
            build_policy(["image_encoder"]).unwrap_err(),
            PolicyError::MissingGroup(ParamGroup::VisionLanguageEncoder)
        );
        assert!(matches!(
            build_policy(["image_encoder", "image_encoder"]),
            Err(PolicyError::DuplicateGroup(_))
        ));
    }
}
