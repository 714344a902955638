//! The JSON import schema.
//!
//! ```json
//! {
//!   "format": { "version": "1.0.0" },
//!   "schema": {
//!     "alpha": {
//!       "primary_keys": ["a_pk"],
//!       "fields": {
//!         "a_pk": { "field_type": "numeric", "value_type": "int32" },
//!         "field_x": { "field_type": "fixed_string", "length": 5 }
//!       }
//!     }
//!   }
//! }
//! ```
//!
//! Field descriptors are strict: keys a field type does not use are errors.

use std::collections::BTreeMap;

use serde_json::{json, Map, Value as Json};

use crate::error::{Error, Result};
use crate::kind::{FieldKind, ValueType, FREETEXT_SUFFIX};

#[derive(Clone, Debug, PartialEq)]
pub struct SchemaDoc {
    pub version: String,
    pub tables: Vec<TableSchema>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TableSchema {
    pub name: String,
    pub primary_keys: Vec<String>,
    pub foreign_keys: Vec<ForeignKey>,
    pub fields: Vec<FieldSchema>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ForeignKey {
    pub name: String,
    /// Table the key refers to.
    pub space: String,
    pub key: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FieldSchema {
    pub name: String,
    pub spec: FieldSpec,
}

#[derive(Clone, Debug, PartialEq)]
pub enum FieldSpec {
    Numeric {
        value_type: ValueType,
        optional: bool,
    },
    FixedString {
        length: usize,
    },
    IndexedString,
    Categorical {
        value_type: ValueType,
        strings_to_values: BTreeMap<String, i64>,
        leaky: bool,
    },
    DateTime {
        optional: bool,
        create_day_field: bool,
    },
    /// A datetime whose source cells carry no time of day.
    Date {
        optional: bool,
        create_day_field: bool,
    },
}

impl FieldSpec {
    pub fn field_type(&self) -> &'static str {
        match self {
            FieldSpec::Numeric { .. } => "numeric",
            FieldSpec::FixedString { .. } => "fixed_string",
            FieldSpec::IndexedString => "indexed_string",
            FieldSpec::Categorical { .. } => "categorical",
            FieldSpec::DateTime { .. } => "datetime",
            FieldSpec::Date { .. } => "date",
        }
    }

    pub fn to_kind(&self) -> FieldKind {
        match self {
            FieldSpec::Numeric {
                value_type,
                optional,
            } => FieldKind::Numeric {
                value_type: *value_type,
                has_validity: *optional,
            },
            FieldSpec::FixedString { length } => FieldKind::FixedString { length: *length },
            FieldSpec::IndexedString => FieldKind::IndexedString,
            FieldSpec::Categorical {
                value_type,
                strings_to_values,
                leaky,
            } => FieldKind::Categorical {
                value_type: *value_type,
                key: strings_to_values.clone(),
                leaky: *leaky,
            },
            FieldSpec::DateTime {
                optional,
                create_day_field,
            }
            | FieldSpec::Date {
                optional,
                create_day_field,
            } => FieldKind::DateTime {
                has_day: *create_day_field,
                has_validity: *optional,
            },
        }
    }
}

impl TableSchema {
    pub fn field(&self, name: &str) -> Option<&FieldSchema> {
        self.fields.iter().find(|f| f.name == name)
    }
}

impl SchemaDoc {
    pub fn table(&self, name: &str) -> Option<&TableSchema> {
        self.tables.iter().find(|t| t.name == name)
    }

    pub fn to_json(&self) -> Json {
        let mut tables = Map::new();
        for t in &self.tables {
            let mut fields = Map::new();
            for f in &t.fields {
                fields.insert(f.name.clone(), field_to_json(&f.spec));
            }
            let mut entry = Map::new();
            entry.insert("primary_keys".into(), json!(t.primary_keys));
            if !t.foreign_keys.is_empty() {
                let fks: Map<String, Json> = t
                    .foreign_keys
                    .iter()
                    .map(|fk| (fk.name.clone(), json!({"space": fk.space, "key": fk.key})))
                    .collect();
                entry.insert("foreign_keys".into(), Json::Object(fks));
            }
            entry.insert("fields".into(), Json::Object(fields));
            tables.insert(t.name.clone(), Json::Object(entry));
        }
        json!({ "format": { "version": self.version }, "schema": tables })
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(&self.to_json()).expect("JSON values serialize")
    }
}

fn field_to_json(spec: &FieldSpec) -> Json {
    let mut m = Map::new();
    m.insert("field_type".into(), json!(spec.field_type()));
    match spec {
        FieldSpec::Numeric {
            value_type,
            optional,
        } => {
            m.insert("value_type".into(), json!(value_type.name()));
            if *optional {
                m.insert("optional".into(), json!(true));
            }
        }
        FieldSpec::FixedString { length } => {
            m.insert("length".into(), json!(length));
        }
        FieldSpec::IndexedString => {}
        FieldSpec::Categorical {
            value_type,
            strings_to_values,
            leaky,
        } => {
            let mut c = Map::new();
            c.insert("value_type".into(), json!(value_type.name()));
            c.insert("strings_to_values".into(), json!(strings_to_values));
            if *leaky {
                c.insert("out_of_range".into(), json!("freetext"));
            }
            m.insert("categorical".into(), Json::Object(c));
        }
        FieldSpec::DateTime {
            optional,
            create_day_field,
        }
        | FieldSpec::Date {
            optional,
            create_day_field,
        } => {
            if *optional {
                m.insert("optional".into(), json!(true));
            }
            if *create_day_field {
                m.insert("create_day_field".into(), json!(true));
            }
        }
    }
    Json::Object(m)
}

/// Parses and validates a schema document.
pub fn parse_schema(text: &str) -> Result<SchemaDoc> {
    let doc: Json =
        serde_json::from_str(text).map_err(|e| Error::Schema(format!("invalid JSON: {e}")))?;
    let top = doc
        .as_object()
        .ok_or_else(|| Error::Schema("schema document must be a JSON object".into()))?;
    reject_unknown("document", top, &["format", "schema"])?;
    let version = match top.get("format") {
        None => String::new(),
        Some(Json::Object(e)) => {
            reject_unknown("format", e, &["version"])?;
            match e.get("version") {
                Some(Json::String(v)) => v.clone(),
                None => String::new(),
                Some(_) => return Err(Error::Schema("version must be a string".into())),
            }
        }
        Some(_) => return Err(Error::Schema("'format' must be an object".into())),
    };
    let tables_json = top
        .get("schema")
        .and_then(Json::as_object)
        .ok_or_else(|| Error::Schema("missing 'schema' object".into()))?;

    let mut tables = Vec::with_capacity(tables_json.len());
    for (name, entry) in tables_json {
        tables.push(parse_table(name, entry)?);
    }
    for t in &tables {
        for fk in &t.foreign_keys {
            if !tables.iter().any(|o| o.name == fk.space) {
                return Err(Error::Reference(format!(
                    "foreign key {}.{} refers to unknown table '{}'",
                    t.name, fk.name, fk.space
                )));
            }
        }
    }
    Ok(SchemaDoc { version, tables })
}

fn reject_unknown(context: &str, obj: &Map<String, Json>, allowed: &[&str]) -> Result<()> {
    match obj.keys().find(|k| !allowed.contains(&k.as_str())) {
        Some(k) => Err(Error::Schema(format!("{context}: unexpected key '{k}'"))),
        None => Ok(()),
    }
}

fn parse_table(name: &str, entry: &Json) -> Result<TableSchema> {
    let obj = entry
        .as_object()
        .ok_or_else(|| Error::Schema(format!("table '{name}' must be an object")))?;
    reject_unknown(
        &format!("table '{name}'"),
        obj,
        &["primary_keys", "foreign_keys", "fields"],
    )?;
    let fields_json = obj
        .get("fields")
        .and_then(Json::as_object)
        .ok_or_else(|| Error::Schema(format!("table '{name}' has no 'fields' object")))?;
    let mut fields = Vec::with_capacity(fields_json.len());
    for (fname, desc) in fields_json {
        let spec = parse_field(name, fname, desc)?;
        fields.push(FieldSchema {
            name: fname.clone(),
            spec,
        });
    }
    let has = |f: &str| fields.iter().any(|x| x.name == f);

    let primary_keys = match obj.get("primary_keys") {
        None => Vec::new(),
        Some(Json::Array(a)) => a
            .iter()
            .map(|v| {
                v.as_str().map(str::to_owned).ok_or_else(|| {
                    Error::Schema(format!("table '{name}': primary keys must be strings"))
                })
            })
            .collect::<Result<Vec<_>>>()?,
        Some(_) => {
            return Err(Error::Schema(format!(
                "table '{name}': primary_keys must be a list"
            )))
        }
    };
    if let Some(pk) = primary_keys.iter().find(|k| !has(k)) {
        return Err(Error::Schema(format!(
            "table '{name}': primary key '{pk}' is not a declared field"
        )));
    }

    let mut foreign_keys = Vec::new();
    if let Some(fk_json) = obj.get("foreign_keys") {
        let fk_obj = fk_json.as_object().ok_or_else(|| {
            Error::Schema(format!("table '{name}': foreign_keys must be an object"))
        })?;
        for (fk_name, fk) in fk_obj {
            let ctx = format!("foreign key {name}.{fk_name}");
            let o = fk
                .as_object()
                .ok_or_else(|| Error::Schema(format!("{ctx} must be an object")))?;
            reject_unknown(&ctx, o, &["space", "key"])?;
            let get = |k: &str| {
                o.get(k)
                    .and_then(Json::as_str)
                    .map(str::to_owned)
                    .ok_or_else(|| Error::Schema(format!("{ctx} needs a string '{k}'")))
            };
            if !has(fk_name) {
                return Err(Error::Schema(format!(
                    "{ctx} is not a declared field of '{name}'"
                )));
            }
            foreign_keys.push(ForeignKey {
                name: fk_name.clone(),
                space: get("space")?,
                key: get("key")?,
            });
        }
    }
    Ok(TableSchema {
        name: name.to_owned(),
        primary_keys,
        foreign_keys,
        fields,
    })
}

fn parse_flag(ctx: &str, key: &str, v: Option<&Json>) -> Result<bool> {
    match v {
        None => Ok(false),
        Some(Json::Bool(b)) => Ok(*b),
        Some(Json::String(s)) if s == "True" => Ok(true),
        Some(Json::String(s)) if s == "False" => Ok(false),
        Some(other) => Err(Error::Schema(format!(
            "{ctx}: '{key}' must be true/false or \"True\"/\"False\", got {other}"
        ))),
    }
}

fn parse_value_type(ctx: &str, v: Option<&Json>) -> Result<ValueType> {
    let s = v
        .and_then(Json::as_str)
        .ok_or_else(|| Error::Schema(format!("{ctx}: missing 'value_type'")))?;
    s.parse()
        .map_err(|_| Error::Schema(format!("{ctx}: unknown value_type '{s}'")))
}

fn parse_field(table: &str, name: &str, desc: &Json) -> Result<FieldSpec> {
    let ctx = format!("field {table}.{name}");
    let o = desc
        .as_object()
        .ok_or_else(|| Error::Schema(format!("{ctx} must be an object")))?;
    let field_type = match o.get("field_type") {
        Some(Json::String(s)) => s.as_str(),
        Some(_) => return Err(Error::Schema(format!("{ctx}: field_type must be a string"))),
        None => return Err(Error::Schema(format!("{ctx}: missing field_type"))),
    };
    let spec = match field_type {
        "numeric" => {
            reject_unknown(&ctx, o, &["field_type", "value_type", "optional"])?;
            FieldSpec::Numeric {
                value_type: parse_value_type(&ctx, o.get("value_type"))?,
                optional: parse_flag(&ctx, "optional", o.get("optional"))?,
            }
        }
        "fixed_string" => {
            reject_unknown(&ctx, o, &["field_type", "length"])?;
            let length = o
                .get("length")
                .and_then(Json::as_u64)
                .filter(|&l| l >= 1)
                .ok_or_else(|| {
                    Error::Schema(format!("{ctx}: 'length' must be an integer of at least 1"))
                })?;
            FieldSpec::FixedString {
                length: length as usize,
            }
        }
        "indexed_string" => {
            reject_unknown(&ctx, o, &["field_type"])?;
            FieldSpec::IndexedString
        }
        "categorical" => {
            reject_unknown(&ctx, o, &["field_type", "categorical"])?;
            let c = o
                .get("categorical")
                .and_then(Json::as_object)
                .ok_or_else(|| Error::Schema(format!("{ctx}: missing 'categorical' object")))?;
            reject_unknown(
                &ctx,
                c,
                &["value_type", "strings_to_values", "out_of_range"],
            )?;
            let value_type = parse_value_type(&ctx, c.get("value_type"))?;
            if !value_type.is_signed_integer() {
                return Err(Error::Schema(format!(
                    "{ctx}: categorical value_type must be a signed integer, got {value_type}"
                )));
            }
            let map = c
                .get("strings_to_values")
                .and_then(Json::as_object)
                .ok_or_else(|| Error::Schema(format!("{ctx}: missing 'strings_to_values'")))?;
            let mut strings_to_values = BTreeMap::new();
            for (s, v) in map {
                let code = v.as_i64().ok_or_else(|| {
                    Error::Schema(format!("{ctx}: category '{s}' needs an integer code"))
                })?;
                strings_to_values.insert(s.clone(), code);
            }
            let leaky = match c.get("out_of_range") {
                None => false,
                Some(Json::String(s)) if s == "freetext" => true,
                Some(other) => {
                    return Err(Error::Schema(format!(
                        "{ctx}: out_of_range must be \"freetext\", got {other}"
                    )))
                }
            };
            let spec = FieldSpec::Categorical {
                value_type,
                strings_to_values,
                leaky,
            };
            spec.to_kind().validate().map_err(|e| match e {
                Error::Key(m) => Error::Key(format!("{ctx}: {m}")),
                other => other,
            })?;
            spec
        }
        "datetime" | "date" => {
            reject_unknown(&ctx, o, &["field_type", "optional", "create_day_field"])?;
            let optional = parse_flag(&ctx, "optional", o.get("optional"))?;
            let create_day_field = parse_flag(&ctx, "create_day_field", o.get("create_day_field"))?;
            if field_type == "date" {
                FieldSpec::Date {
                    optional,
                    create_day_field,
                }
            } else {
                FieldSpec::DateTime {
                    optional,
                    create_day_field,
                }
            }
        }
        other => {
            return Err(Error::Schema(format!(
                "{ctx}: unknown field_type '{other}'"
            )))
        }
    };
    Ok(spec)
}

/// What one stored artifact holds for a source column.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TargetRole {
    Value,
    Validity,
    Day,
    FreeText,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Target {
    /// Stored field the artifact belongs to.
    pub field: String,
    pub role: TargetRole,
}

/// How one CSV column maps onto stored fields.
#[derive(Clone, Debug, PartialEq)]
pub struct ColumnPlan {
    pub source: String,
    pub kind: FieldKind,
    pub targets: Vec<Target>,
}

impl ColumnPlan {
    /// Name of the free-text companion field, for leaky categoricals.
    pub fn freetext_field(&self) -> Option<&str> {
        self.targets
            .iter()
            .find(|t| t.role == TargetRole::FreeText)
            .map(|t| t.field.as_str())
    }
}

pub fn freetext_name(field: &str) -> String {
    format!("{field}{FREETEXT_SUFFIX}")
}

/// Maps each source column of a table to the typed targets it produces.
pub fn schema_to_field_kinds(ts: &TableSchema) -> Vec<ColumnPlan> {
    ts.fields
        .iter()
        .map(|f| {
            let kind = f.spec.to_kind();
            let target = |role| Target {
                field: f.name.clone(),
                role,
            };
            let mut targets = vec![target(TargetRole::Value)];
            if kind.has_validity() {
                targets.push(target(TargetRole::Validity));
            }
            if kind.has_day() {
                targets.push(target(TargetRole::Day));
            }
            if let FieldKind::Categorical { leaky: true, .. } = kind {
                targets.push(Target {
                    field: freetext_name(&f.name),
                    role: TargetRole::FreeText,
                });
            }
            ColumnPlan {
                source: f.name.clone(),
                kind,
                targets,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    /// The illustrative schema with its JSON syntax errors corrected.
    pub(crate) const EXAMPLE: &str = r#"{
      "format": { "version": "1.0.0" },
      "schema": {
        "alpha": {
          "primary_keys": [ "a_pk" ],
          "fields": {
            "a_pk": { "field_type": "numeric", "value_type": "int32" },
            "field_x": { "field_type": "fixed_string", "length": 5 },
            "field_dt": { "field_type": "datetime" }
          }
        },
        "beta": {
          "primary_keys": [ "b_pk" ],
          "foreign_keys": {
            "a_fk": { "space": "alpha", "key": "id" }
          },
          "fields": {
            "b_pk": { "field_type": "numeric", "value_type": "int64" },
            "a_fk": { "field_type": "numeric", "value_type": "int32" },
            "field_m": {
              "field_type": "categorical",
              "categorical": {
                "value_type": "int8",
                "strings_to_values": { "": 0, "no": 1, "yes": 2 }
              }
            },
            "field_n": {
              "field_type": "categorical",
              "categorical": {
                "value_type": "int8",
                "strings_to_values": { "left": 0, "right": 1 },
                "out_of_range": "freetext"
              }
            },
            "field_dt": {"field_type": "datetime", "optional": "True"}
          }
        }
      }
    }"#;

    #[test]
    fn parses_example_schema() {
        let doc = parse_schema(EXAMPLE).unwrap();
        assert_eq!(doc.version, "1.0.0");
        let names: Vec<_> = doc.tables.iter().map(|t| t.name.as_str()).collect();
        assert_eq!(names, ["alpha", "beta"]);
        let beta = doc.table("beta").unwrap();
        assert_eq!(
            beta.foreign_keys,
            vec![ForeignKey {
                name: "a_fk".into(),
                space: "alpha".into(),
                key: "id".into()
            }]
        );
        let expected: BTreeMap<String, i64> =
            [("".into(), 0), ("no".into(), 1), ("yes".into(), 2)].into();
        assert_eq!(
            beta.field("field_m").unwrap().spec,
            FieldSpec::Categorical {
                value_type: ValueType::Int8,
                strings_to_values: expected,
                leaky: false
            }
        );
        assert_eq!(
            beta.field("field_dt").unwrap().spec,
            FieldSpec::DateTime {
                optional: true,
                create_day_field: false
            }
        );
        let alpha = doc.table("alpha").unwrap();
        let fields: Vec<_> = alpha.fields.iter().map(|f| f.name.as_str()).collect();
        assert_eq!(fields, ["a_pk", "field_x", "field_dt"]);
    }

    #[test]
    fn uncorrected_example_is_rejected() {
        let broken = EXAMPLE.replace(
            r#""field_type": "numeric", "value_type": "int64""#,
            r#""field_type": numeric, "value_type": "int64""#,
        );
        assert!(matches!(parse_schema(&broken), Err(Error::Schema(_))));
    }

    #[test]
    fn zero_tables() {
        let doc = parse_schema(r#"{"schema": {}}"#).unwrap();
        assert!(doc.tables.is_empty());
    }

    #[test]
    fn missing_field_type_names_table_and_field() {
        let err =
            parse_schema(r#"{"schema": {"t": {"fields": {"f": {"length": 3}}}}}"#).unwrap_err();
        match err {
            Error::Schema(m) => assert!(m.contains("t.f"), "{m}"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn unknown_field_type() {
        let err = parse_schema(r#"{"schema": {"t": {"fields": {"f": {"field_type": "blob"}}}}}"#)
            .unwrap_err();
        assert!(matches!(err, Error::Schema(_)));
    }

    #[test]
    fn dangling_foreign_key_space() {
        let err = parse_schema(
            r#"{"schema": {"t": {"foreign_keys": {"f": {"space": "nope", "key": "id"}},
                "fields": {"f": {"field_type": "numeric", "value_type": "int32"}}}}}"#,
        )
        .unwrap_err();
        assert!(matches!(err, Error::Reference(_)));
    }

    #[test]
    fn duplicate_category_codes() {
        let err = parse_schema(
            r#"{"schema": {"t": {"fields": {"c": {"field_type": "categorical",
                "categorical": {"value_type": "int8", "strings_to_values": {"a": 1, "b": 1}}}}}}}"#,
        )
        .unwrap_err();
        assert!(matches!(err, Error::Key(_)));
    }

    #[test]
    fn unknown_descriptor_keys_are_rejected() {
        let err = parse_schema(
            r#"{"schema": {"t": {"fields": {"f": {"field_type": "numeric", "value_type": "int32", "lenght": 3}}}}}"#,
        )
        .unwrap_err();
        assert!(matches!(err, Error::Schema(_)));
    }

    #[test]
    fn primary_key_must_be_declared() {
        let err = parse_schema(
            r#"{"schema": {"t": {"primary_keys": ["id"], "fields": {"f": {"field_type": "indexed_string"}}}}}"#,
        )
        .unwrap_err();
        assert!(matches!(err, Error::Schema(_)));
    }

    #[test]
    fn serialize_then_parse_is_a_fixed_point() {
        let doc = parse_schema(EXAMPLE).unwrap();
        let again = parse_schema(&doc.to_json_string()).unwrap();
        assert_eq!(again, doc);
        assert_eq!(again.to_json_string(), doc.to_json_string());
    }

    #[test]
    fn field_plans() {
        let doc = parse_schema(
            r#"{"schema": {"t": {"fields": {
                "n": {"field_type": "numeric", "value_type": "int32"},
                "d": {"field_type": "datetime", "optional": "True", "create_day_field": true},
                "c": {"field_type": "categorical", "categorical": {"value_type": "int8",
                      "strings_to_values": {"left": 0}, "out_of_range": "freetext"}}
            }}}}"#,
        )
        .unwrap();
        let plans = schema_to_field_kinds(doc.table("t").unwrap());
        let roles: Vec<Vec<TargetRole>> = plans
            .iter()
            .map(|p| p.targets.iter().map(|t| t.role).collect())
            .collect();
        use TargetRole::*;
        assert_eq!(
            roles,
            vec![
                vec![Value],
                vec![Value, Validity, Day],
                vec![Value, FreeText]
            ]
        );
        assert_eq!(plans[2].freetext_field(), Some("c_freetext"));
    }

    #[test]
    fn every_field_type_maps_to_a_kind() {
        for (ft, extra) in [
            ("numeric", r#", "value_type": "float64""#),
            ("fixed_string", r#", "length": 2"#),
            ("indexed_string", ""),
            (
                "categorical",
                r#", "categorical": {"value_type": "int16", "strings_to_values": {}}"#,
            ),
            ("datetime", ""),
            ("date", ""),
        ] {
            let text = format!(
                r#"{{"schema": {{"t": {{"fields": {{"f": {{"field_type": "{ft}"{extra}}}}}}}}}}}"#
            );
            let doc = parse_schema(&text).unwrap();
            let kind = doc.tables[0].fields[0].spec.to_kind();
            assert!(kind.validate().is_ok());
        }
    }
}
