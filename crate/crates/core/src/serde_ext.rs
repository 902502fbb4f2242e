//! Serde helpers for reals that may be infinite.
//!
//! JSON has no infinity, so non-finite values travel as the strings
//! `"inf"`, `"-inf"` and `"nan"`.

use serde::{Deserialize, Deserializer, Serializer};

#[derive(Deserialize)]
#[serde(untagged)]
enum Wire {
    Num(f64),
    Text(String),
}

fn decode<E: serde::de::Error>(w: Wire) -> Result<f64, E> {
    match w {
        Wire::Num(v) => Ok(v),
        Wire::Text(s) => match s.as_str() {
            "inf" => Ok(f64::INFINITY),
            "-inf" => Ok(f64::NEG_INFINITY),
            "nan" => Ok(f64::NAN),
            other => Err(E::custom(format!("expected a number or inf/-inf/nan, got '{other}'"))),
        },
    }
}

fn encode<S: Serializer>(v: f64, s: S) -> Result<S::Ok, S::Error> {
    if v.is_finite() {
        s.serialize_f64(v)
    } else if v.is_nan() {
        s.serialize_str("nan")
    } else if v > 0.0 {
        s.serialize_str("inf")
    } else {
        s.serialize_str("-inf")
    }
}

pub mod real {
    use super::*;

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        encode(*v, s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        decode(Wire::deserialize(d)?)
    }
}

pub mod real_map {
    use super::*;
    use serde::ser::SerializeMap;
    use std::collections::BTreeMap;

    pub fn serialize<S: Serializer>(m: &BTreeMap<String, f64>, s: S) -> Result<S::Ok, S::Error> {
        struct One(f64);
        impl serde::Serialize for One {
            fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
                encode(self.0, s)
            }
        }
        let mut map = s.serialize_map(Some(m.len()))?;
        for (k, v) in m {
            map.serialize_entry(k, &One(*v))?;
        }
        map.end()
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<BTreeMap<String, f64>, D::Error> {
        let raw = BTreeMap::<String, Wire>::deserialize(d)?;
        raw.into_iter().map(|(k, w)| Ok((k, decode(w)?))).collect()
    }
}

#[cfg(test)]
mod tests {
    use serde::{Deserialize, Serialize};
    use std::collections::BTreeMap;

    #[derive(Serialize, Deserialize, PartialEq, Debug)]
    struct T {
        #[serde(with = "super::real")]
        a: f64,
        #[serde(with = "super::real_map")]
        m: BTreeMap<String, f64>,
    }

    #[test]
    fn non_finite_round_trip() {
        let mut m = BTreeMap::new();
        m.insert("x".to_string(), f64::NEG_INFINITY);
        m.insert("y".to_string(), 0.1 + 0.2);
        let t = T { a: f64::INFINITY, m };
        let s = serde_json::to_string(&t).unwrap();
        assert_eq!(serde_json::from_str::<T>(&s).unwrap(), t);
    }
}
