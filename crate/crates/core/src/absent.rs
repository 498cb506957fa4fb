//! Serde adapter writing a missing id as the string `"absent"`.

use serde::de::{self, Deserializer, Visitor};
use serde::Serializer;

use crate::types::NodeId;

const MARKER: &str = "absent";

pub fn serialize<S: Serializer>(value: &Option<NodeId>, ser: S) -> Result<S::Ok, S::Error> {
    match value {
        Some(id) => ser.serialize_u64(id.0),
        None => ser.serialize_str(MARKER),
    }
}

pub fn deserialize<'de, D: Deserializer<'de>>(de: D) -> Result<Option<NodeId>, D::Error> {
    struct AbsentVisitor;

    impl Visitor<'_> for AbsentVisitor {
        type Value = Option<NodeId>;

        fn expecting(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
            write!(f, "a node id or \"{MARKER}\"")
        }

        fn visit_u64<E: de::Error>(self, v: u64) -> Result<Self::Value, E> {
            Ok(Some(NodeId(v)))
        }

        fn visit_i64<E: de::Error>(self, v: i64) -> Result<Self::Value, E> {
            u64::try_from(v)
                .map(|v| Some(NodeId(v)))
                .map_err(|_| E::custom(format!("negative node id {v}")))
        }

        fn visit_str<E: de::Error>(self, v: &str) -> Result<Self::Value, E> {
            if v == MARKER {
                Ok(None)
            } else {
                Err(E::invalid_value(de::Unexpected::Str(v), &self))
            }
        }
    }

    de.deserialize_any(AbsentVisitor)
}
