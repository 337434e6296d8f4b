//! Named model parameters and their dense packing for the samplers.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ParamError {
    #[error("duplicate parameter name `{0}`")]
    Duplicate(String),
    #[error("unknown parameter `{0}`")]
    Unknown(String),
    #[error("expected a vector of length {expected}, got {got}")]
    Length { expected: usize, got: usize },
}

/// One named parameter. Fixed entries keep their value and are invisible to
/// the samplers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Param {
    pub name: String,
    pub value: f64,
    #[serde(default)]
    pub fixed: bool,
}

/// Ordered parameter set. The free (non-fixed) entries, in order, define the
/// dense vector the samplers work on.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ParameterVector {
    entries: Vec<Param>,
}

impl ParameterVector {
    pub fn new(entries: Vec<Param>) -> Result<Self, ParamError> {
        for (i, e) in entries.iter().enumerate() {
            if entries[..i].iter().any(|p| p.name == e.name) {
                return Err(ParamError::Duplicate(e.name.clone()));
            }
        }
        Ok(Self { entries })
    }

    /// Builder used by the model templates.
    pub fn with(mut self, name: &str, value: f64) -> Self {
        self.push(name, value, false);
        self
    }

    pub fn with_fixed(mut self, name: &str, value: f64) -> Self {
        self.push(name, value, true);
        self
    }

    fn push(&mut self, name: &str, value: f64, fixed: bool) {
        assert!(
            self.index_of(name).is_none(),
            "duplicate parameter `{name}` in template"
        );
        self.entries.push(Param { name: name.to_string(), value, fixed });
    }

    pub fn entries(&self) -> &[Param] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Number of free parameters.
    pub fn dim(&self) -> usize {
        self.entries.iter().filter(|p| !p.fixed).count()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.entries.iter().position(|p| p.name == name)
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.entries.iter().find(|p| p.name == name).map(|p| p.value)
    }

    /// Value lookup for names the caller knows exist (model bindings).
    pub fn value(&self, name: &str) -> Result<f64, ParamError> {
        self.get(name).ok_or_else(|| ParamError::Unknown(name.to_string()))
    }

    pub fn set(&mut self, name: &str, value: f64) -> Result<(), ParamError> {
        let p = self
            .entries
            .iter_mut()
            .find(|p| p.name == name)
            .ok_or_else(|| ParamError::Unknown(name.to_string()))?;
        p.value = value;
        Ok(())
    }

    pub fn set_fixed(&mut self, name: &str, fixed: bool) -> Result<(), ParamError> {
        let p = self
            .entries
            .iter_mut()
            .find(|p| p.name == name)
            .ok_or_else(|| ParamError::Unknown(name.to_string()))?;
        p.fixed = fixed;
        Ok(())
    }

    /// Builder form of [`set`](Self::set). Panics on an unknown name.
    pub fn with_value(mut self, name: &str, value: f64) -> Self {
        self.set(name, value).unwrap_or_else(|e| panic!("{e}"));
        self
    }

    /// Builder that marks an existing entry fixed. Panics on an unknown name.
    pub fn fix(mut self, name: &str) -> Self {
        self.set_fixed(name, true).unwrap_or_else(|e| panic!("{e}"));
        self
    }

    pub fn free_names(&self) -> Vec<String> {
        self.entries.iter().filter(|p| !p.fixed).map(|p| p.name.clone()).collect()
    }

    pub fn pack(&self) -> Vec<f64> {
        self.entries.iter().filter(|p| !p.fixed).map(|p| p.value).collect()
    }

    /// Copy of `self` with the free entries replaced by `v`.
    pub fn unpack(&self, v: &[f64]) -> Result<Self, ParamError> {
        let d = self.dim();
        if v.len() != d {
            return Err(ParamError::Length { expected: d, got: v.len() });
        }
        let mut out = self.clone();
        let mut it = v.iter();
        for p in out.entries.iter_mut().filter(|p| !p.fixed) {
            p.value = *it.next().expect("length checked");
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn abc() -> ParameterVector {
        ParameterVector::default().with_fixed("a", 1.0).with("b", 2.0).with("c", 3.0)
    }

    #[test]
    fn pack_skips_fixed() {
        let t = abc();
        assert_eq!(t.dim(), 2);
        assert_eq!(t.pack(), vec![2.0, 3.0]);
        let u = t.unpack(&[5.0, 7.0]).unwrap();
        assert_eq!(u.get("a"), Some(1.0));
        assert_eq!(u.get("b"), Some(5.0));
        assert_eq!(u.get("c"), Some(7.0));
    }

    #[test]
    fn unpack_length_mismatch() {
        assert_eq!(
            abc().unpack(&[1.0]),
            Err(ParamError::Length { expected: 2, got: 1 })
        );
    }

    #[test]
    fn duplicate_names_rejected() {
        let e = vec![
            Param { name: "x".into(), value: 0.0, fixed: false },
            Param { name: "x".into(), value: 1.0, fixed: false },
        ];
        assert_eq!(ParameterVector::new(e), Err(ParamError::Duplicate("x".into())));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]
        #[test]
        fn pack_unpack_round_trip(b in -1e6f64..1e6, c in -1e6f64..1e6) {
            let t = abc();
            let u = t.unpack(&[b, c]).unwrap();
            prop_assert_eq!(u.pack(), vec![b, c]);
            prop_assert_eq!(u.get("a"), Some(1.0));
            prop_assert_eq!(t.unpack(&u.pack()).unwrap(), u);
        }
    }
}
