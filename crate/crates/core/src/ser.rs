//! Serde helpers: rationals as `"p/q"`, addresses as `"(n,j)"`.

use num_bigint::BigUint;
use serde::ser::SerializeSeq;
use serde::Serializer;

use crate::exact::{IntervalAddress, Rational};

pub fn rational<S: Serializer>(x: &Rational, s: S) -> Result<S::Ok, S::Error> {
    s.collect_str(x)
}

pub fn opt_rational<S: Serializer>(x: &Option<Rational>, s: S) -> Result<S::Ok, S::Error> {
    match x {
        Some(v) => s.collect_str(v),
        None => s.serialize_none(),
    }
}

pub fn rationals<S: Serializer>(xs: &[Rational], s: S) -> Result<S::Ok, S::Error> {
    let mut seq = s.serialize_seq(Some(xs.len()))?;
    for x in xs {
        seq.serialize_element(&x.to_string())?;
    }
    seq.end()
}

pub fn address<S: Serializer>(a: &IntervalAddress, s: S) -> Result<S::Ok, S::Error> {
    s.collect_str(a)
}



pub fn opt_biguint<S: Serializer>(x: &Option<BigUint>, s: S) -> Result<S::Ok, S::Error> {
    match x {
        Some(v) => s.collect_str(v),
        None => s.serialize_none(),
    }
}
