//! Flat, ordered reports rendered as `key=value` lines or JSON.

use std::collections::BTreeMap;

use serde_json::{Map, Value as Json};

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Report {
    entries: Vec<(String, Json)>,
}

impl Report {
    pub fn new() -> Self {
        Report::default()
    }

    pub fn set(&mut self, key: impl Into<String>, value: impl Into<Json>) -> &mut Self {
        let key = key.into();
        let value = value.into();
        match self.entries.iter_mut().find(|(k, _)| *k == key) {
            Some(e) => e.1 = value,
            None => self.entries.push((key, value)),
        }
        self
    }

    pub fn get(&self, key: &str) -> Option<&Json> {
        self.entries.iter().find(|(k, _)| k == key).map(|(_, v)| v)
    }

    pub fn entries(&self) -> &[(String, Json)] {
        &self.entries
    }

    pub fn to_kv(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.entries {
            let text = match v {
                Json::String(s) => s.clone(),
                Json::Null => String::new(),
                other => other.to_string(),
            };
            out.push_str(k);
            out.push('=');
            out.push_str(&text);
            out.push('\n');
        }
        out
    }

    pub fn to_json(&self) -> Json {
        Json::Object(self.entries.iter().cloned().collect::<Map<_, _>>())
    }
}

/// Parses `key=value` lines; lines without `=` are skipped.
pub fn parse_kv(text: &str) -> BTreeMap<String, String> {
    text.lines()
        .filter_map(|l| l.split_once('='))
        .map(|(k, v)| (k.trim().to_owned(), v.to_owned()))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kv_round_trip() {
        let mut r = Report::new();
        r.set("table", "patients")
            .set("rows", 3)
            .set("ok", true)
            .set("rows", 4);
        assert_eq!(r.to_kv(), "table=patients\nrows=4\nok=true\n");
        let kv = parse_kv(&r.to_kv());
        assert_eq!(kv["rows"], "4");
        assert_eq!(r.to_json()["table"], "patients");
    }
}
