//! JSON cannot carry non-finite numbers; unbounded volumes and radii are
//! written as the strings "inf", "-inf" or "nan" instead of `null`.

use serde::ser::{SerializeSeq, Serializer};

fn tag(v: f64) -> &'static str {
    if v.is_nan() {
        "nan"
    } else if v > 0.0 {
        "inf"
    } else {
        "-inf"
    }
}

pub fn scalar<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
    if v.is_finite() {
        s.serialize_f64(*v)
    } else {
        s.serialize_str(tag(*v))
    }
}

pub fn option<S: Serializer>(v: &Option<f64>, s: S) -> Result<S::Ok, S::Error> {
    match v {
        Some(v) => scalar(v, s),
        None => s.serialize_none(),
    }
}

pub fn vec<S: Serializer>(v: &[f64], s: S) -> Result<S::Ok, S::Error> {
    struct Item(f64);
    impl serde::Serialize for Item {
        fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
            scalar(&self.0, s)
        }
    }
    let mut seq = s.serialize_seq(Some(v.len()))?;
    for &x in v {
        seq.serialize_element(&Item(x))?;
    }
    seq.end()
}
