//! Dataset manifest files.
//!
//! Loading runs two passes. A structural pass walks the raw JSON and reports
//! wrong types, missing or unknown fields and unknown enum spellings. If that
//! pass is clean, the typed manifest goes through the semantic checks in
//! [`rave_core::dataset::validate`]. Each pass reports every problem it
//! finds, each with a JSON pointer.

use std::fs;
use std::path::Path;

use rave_core::dataset::{validate, DatasetManifest, EditType, Issue, MotionTag};
use serde_json::{Map, Value};

use crate::error::{Error, Issues, Result};

/// A loaded manifest and its non-fatal warnings.
#[derive(Debug)]
pub struct Loaded {
    pub manifest: DatasetManifest,
    pub warnings: Vec<Issue>,
}

struct Walker {
    issues: Vec<Issue>,
}

impl Walker {
    fn push(&mut self, pointer: &str, message: impl Into<String>) {
        self.issues.push(Issue::new(
            if pointer.is_empty() { "/" } else { pointer },
            message,
        ));
    }

    fn object<'v>(
        &mut self,
        value: &'v Value,
        at: &str,
        required: &[&str],
        optional: &[&str],
    ) -> Option<&'v Map<String, Value>> {
        let Some(obj) = value.as_object() else {
            self.push(at, format!("expected an object, found {}", kind(value)));
            return None;
        };
        for field in required {
            if !obj.contains_key(*field) {
                self.push(at, format!("missing field `{field}`"));
            }
        }
        for key in obj.keys() {
            if !required.contains(&key.as_str()) && !optional.contains(&key.as_str()) {
                self.push(
                    &format!("{at}/{}", escape(key)),
                    format!("unknown field `{key}`"),
                );
            }
        }
        Some(obj)
    }

    fn string(&mut self, obj: &Map<String, Value>, at: &str, field: &str) -> Option<String> {
        let value = obj.get(field)?;
        match value.as_str() {
            Some(s) => Some(s.to_owned()),
            None => {
                self.push(
                    &format!("{at}/{field}"),
                    format!("expected a string, found {}", kind(value)),
                );
                None
            }
        }
    }

    fn count(&mut self, obj: &Map<String, Value>, at: &str, field: &str) {
        if let Some(value) = obj.get(field) {
            if value.as_u64().is_none() {
                self.push(
                    &format!("{at}/{field}"),
                    format!("expected a non-negative integer, found {}", kind(value)),
                );
            }
        }
    }

    fn array<'v>(
        &mut self,
        obj: &'v Map<String, Value>,
        at: &str,
        field: &str,
    ) -> Option<&'v Vec<Value>> {
        let value = obj.get(field)?;
        let arr = value.as_array();
        if arr.is_none() {
            self.push(
                &format!("{at}/{field}"),
                format!("expected an array, found {}", kind(value)),
            );
        }
        arr
    }

    fn entry(&mut self, value: &Value, at: &str) {
        let required = ["id", "source", "frame_count", "resolution", "prompts"];
        let Some(obj) = self.object(value, at, &required, &["motion_tags"]) else {
            return;
        };
        self.string(obj, at, "id");
        self.string(obj, at, "source");
        self.count(obj, at, "frame_count");
        if let Some(res) = obj.get("resolution") {
            let res_at = format!("{at}/resolution");
            if let Some(r) = self.object(res, &res_at, &["width", "height"], &[]) {
                self.count(r, &res_at, "width");
                self.count(r, &res_at, "height");
            }
        }
        if let Some(tags) = self.array(obj, at, "motion_tags") {
            for (i, tag) in tags.iter().enumerate() {
                let tag_at = format!("{at}/motion_tags/{i}");
                match tag.as_str() {
                    Some(s) if MotionTag::parse(s).is_some() => {}
                    Some(s) => self.push(
                        &tag_at,
                        format!(
                            "unknown motion tag `{s}` (expected one of {})",
                            spellings(MotionTag::ALL.iter().map(|m| m.as_str()))
                        ),
                    ),
                    None => self.push(&tag_at, format!("expected a string, found {}", kind(tag))),
                }
            }
        }
        if let Some(prompts) = self.array(obj, at, "prompts") {
            for (i, prompt) in prompts.iter().enumerate() {
                let p_at = format!("{at}/prompts/{i}");
                let Some(p) = self.object(prompt, &p_at, &["text", "edit_type"], &[]) else {
                    continue;
                };
                self.string(p, &p_at, "text");
                if let Some(edit) = self.string(p, &p_at, "edit_type") {
                    if EditType::parse(&edit).is_none() {
                        self.push(
                            &format!("{p_at}/edit_type"),
                            format!(
                                "unknown edit_type `{edit}` (expected one of {})",
                                spellings(EditType::ALL.iter().map(|e| e.as_str()))
                            ),
                        );
                    }
                }
            }
        }
    }
}

fn spellings<'a>(names: impl Iterator<Item = &'a str>) -> String {
    names.collect::<Vec<_>>().join(", ")
}

fn escape(key: &str) -> String {
    key.replace('~', "~0").replace('/', "~1")
}

fn kind(value: &Value) -> &'static str {
    match value {
        Value::Null => "null",
        Value::Bool(_) => "a boolean",
        Value::Number(_) => "a number",
        Value::String(_) => "a string",
        Value::Array(_) => "an array",
        Value::Object(_) => "an object",
    }
}

/// Structural and semantic validation of a parsed JSON document.
pub fn parse_manifest(value: &Value) -> std::result::Result<Loaded, Vec<Issue>> {
    let mut w = Walker { issues: Vec::new() };
    if let Some(root) = w.object(value, "", &["name", "version", "entries"], &[]) {
        w.string(root, "", "name");
        w.string(root, "", "version");
        if let Some(entries) = w.array(root, "", "entries") {
            for (i, entry) in entries.iter().enumerate() {
                w.entry(entry, &format!("/entries/{i}"));
            }
        }
    }
    if !w.issues.is_empty() {
        return Err(w.issues);
    }
    let manifest: DatasetManifest =
        serde_json::from_value(value.clone()).map_err(|e| vec![Issue::new("/", e.to_string())])?;
    let checked = validate(&manifest);
    if checked.is_ok() {
        Ok(Loaded {
            manifest,
            warnings: checked.warnings,
        })
    } else {
        Err(checked.errors)
    }
}

pub fn load_manifest(path: &Path) -> Result<Loaded> {
    if !path.exists() {
        return Err(Error::Missing(path.to_path_buf()));
    }
    let text = fs::read_to_string(path).map_err(Error::io(path))?;
    let value: Value = serde_json::from_str(&text).map_err(Error::json(path))?;
    parse_manifest(&value).map_err(|issues| Error::Manifest {
        path: path.to_path_buf(),
        issues: Issues(issues),
    })
}

pub fn save_manifest(path: &Path, manifest: &DatasetManifest) -> Result<()> {
    let text = serde_json::to_string_pretty(manifest).map_err(Error::json(path))?;
    fs::write(path, text + "\n").map_err(Error::io(path))
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn minimal() -> Value {
        json!({
            "name": "demo",
            "version": "1",
            "entries": [{
                "id": "car",
                "source": "videos/car",
                "frame_count": 8,
                "resolution": {"width": 512, "height": 512},
                "motion_tags": ["exo"],
                "prompts": [{"text": "a red car", "edit_type": "local"}]
            }]
        })
    }

    fn pointers(issues: &[Issue]) -> Vec<&str> {
        issues.iter().map(|i| i.pointer.as_str()).collect()
    }

    #[test]
    fn minimal_manifest_loads() {
        let loaded = parse_manifest(&minimal()).unwrap();
        assert_eq!(loaded.manifest.entries.len(), 1);
        assert!(loaded.warnings.is_empty());
    }

    #[test]
    fn unknown_edit_type_names_the_field() {
        let mut v = minimal();
        v["entries"][0]["prompts"][0]["edit_type"] = json!("recolor");
        let issues = parse_manifest(&v).unwrap_err();
        assert_eq!(pointers(&issues), ["/entries/0/prompts/0/edit_type"]);
        assert!(issues[0].message.contains("recolor"));
    }

    #[test]
    fn structural_problems_are_all_reported() {
        let mut v = minimal();
        v["entries"][0]["frame_count"] = json!("eight");
        v["entries"][0]["motion_tags"] = json!(["exo", "drone"]);
        v["entries"][0].as_object_mut().unwrap().remove("source");
        v["entries"][0]["extra"] = json!(1);
        let issues = parse_manifest(&v).unwrap_err();
        assert_eq!(
            pointers(&issues),
            [
                "/entries/0",
                "/entries/0/extra",
                "/entries/0/frame_count",
                "/entries/0/motion_tags/1"
            ]
        );
    }

    #[test]
    fn duplicate_ids_come_from_the_semantic_pass() {
        let mut v = minimal();
        let first = v["entries"][0].clone();
        v["entries"].as_array_mut().unwrap().push(first);
        let issues = parse_manifest(&v).unwrap_err();
        assert_eq!(pointers(&issues), ["/entries/1/id"]);
        assert!(issues[0].message.contains("entries 0 and 1"));
    }

    #[test]
    fn root_must_be_an_object() {
        let issues = parse_manifest(&json!([1, 2])).unwrap_err();
        assert_eq!(pointers(&issues), ["/"]);
    }
}
