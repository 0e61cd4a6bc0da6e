//! Labelled scenes: the observed objects of one instant.

use std::collections::{BTreeMap, BTreeSet};
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geomap::Point2;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LabelError {
    #[error("malformed label: {0}")]
    Schema(String),
    #[error("label {scene}: duplicate object id `{id}`")]
    DuplicateId { scene: String, id: String },
    #[error("label {scene}: object `{id}` has a non-finite {what}")]
    NonFinite { scene: String, id: String, what: String },
    #[error("label {scene}: heading of `{id}` is {heading}, outside [-pi, pi]")]
    HeadingRange { scene: String, id: String, heading: f64 },
    #[error("label {scene}: more than one object is flagged as ego")]
    SeveralEgos { scene: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LabelObject {
    pub id: String,
    pub class: String,
    pub position: Point2,
    /// `None` when the dataset does not annotate a heading.
    #[serde(default)]
    pub heading: Option<f64>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub extras: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub ego: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Label {
    pub scene_id: String,
    pub objects: Vec<LabelObject>,
}

impl Label {
    pub fn from_json(text: &str) -> Result<Label, LabelError> {
        let l: Label = serde_json::from_str(text).map_err(|e| LabelError::Schema(e.to_string()))?;
        l.validate()?;
        Ok(l)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("label serializes")
    }

    pub fn validate(&self) -> Result<(), LabelError> {
        let scene = || self.scene_id.clone();
        let mut ids = BTreeSet::new();
        let mut egos = 0;
        for o in &self.objects {
            if !ids.insert(o.id.as_str()) {
                return Err(LabelError::DuplicateId { scene: scene(), id: o.id.clone() });
            }
            let bad = |what: &str| LabelError::NonFinite { scene: scene(), id: o.id.clone(), what: what.into() };
            if !(o.position.x.is_finite() && o.position.y.is_finite()) {
                return Err(bad("position"));
            }
            if let Some(h) = o.heading {
                if !h.is_finite() {
                    return Err(bad("heading"));
                }
                if !(-PI..=PI).contains(&h) {
                    return Err(LabelError::HeadingRange { scene: scene(), id: o.id.clone(), heading: h });
                }
            }
            if let Some((k, _)) = o.extras.iter().find(|(_, v)| !v.is_finite()) {
                return Err(bad(k));
            }
            egos += usize::from(o.ego);
        }
        if egos > 1 {
            return Err(LabelError::SeveralEgos { scene: scene() });
        }
        Ok(())
    }

    pub fn ego(&self) -> Option<&LabelObject> {
        self.objects.iter().find(|o| o.ego)
    }

    pub fn object(&self, id: &str) -> Option<&LabelObject> {
        self.objects.iter().find(|o| o.id == id)
    }
}

/// Reads one label per non-blank line.
pub fn parse_jsonl(text: &str) -> Result<Vec<Label>, LabelError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            Label::from_json(l).map_err(|e| match e {
                LabelError::Schema(m) => LabelError::Schema(format!("line {}: {m}", i + 1)),
                other => other,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_and_defaults() {
        let text = r#"{"scene_id":"s","objects":[{"id":"e","class":"car","position":[1,2],"heading":0.5,"ego":true},{"id":"a","class":"car","position":[0,7]}]}"#;
        let l = Label::from_json(text).unwrap();
        assert_eq!(l.ego().unwrap().id, "e");
        assert_eq!(l.objects[1].heading, None);
        assert_eq!(Label::from_json(&l.to_json()).unwrap(), l);
    }

    #[test]
    fn schema_violations() {
        let dup = r#"{"scene_id":"s","objects":[{"id":"a","class":"car","position":[0,0]},{"id":"a","class":"car","position":[1,0]}]}"#;
        assert!(matches!(Label::from_json(dup), Err(LabelError::DuplicateId { .. })));
        let head = r#"{"scene_id":"s","objects":[{"id":"a","class":"car","position":[0,0],"heading":4.0}]}"#;
        assert!(matches!(Label::from_json(head), Err(LabelError::HeadingRange { .. })));
        assert!(matches!(Label::from_json(r#"{"scene_id":"s"}"#), Err(LabelError::Schema(_))));
        let extra = r#"{"scene_id":"s","objects":[],"weather":"rain"}"#;
        assert!(matches!(Label::from_json(extra), Err(LabelError::Schema(_))));
    }

    #[test]
    fn jsonl_skips_blank_lines() {
        let text = "{\"scene_id\":\"a\",\"objects\":[]}\n\n{\"scene_id\":\"b\",\"objects\":[]}\n";
        let ls = parse_jsonl(text).unwrap();
        assert_eq!(ls.len(), 2);
        let err = parse_jsonl("{\"scene_id\":\"a\",\"objects\":[]}\nnot json\n").unwrap_err();
        assert!(err.to_string().contains("line 2"), "{err}");
    }
}
