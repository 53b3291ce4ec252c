use std::collections::BTreeMap;

use crate::protocol::{Bindings, Value, VarDecl, VarType};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum DataspaceError {
    #[error("variable `{0}` is not declared")]
    Undeclared(String),
    #[error("variable `{name}` is {expected}, got {found}")]
    TypeMismatch {
        name: String,
        expected: &'static str,
        found: &'static str,
    },
}

/// Per-conversation store of the protocol's declared variables. Every write
/// bumps that key's version.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dataspace {
    types: BTreeMap<String, VarType>,
    values: BTreeMap<String, Value>,
    versions: BTreeMap<String, u64>,
}

impl Dataspace {
    pub fn new(decls: &[VarDecl]) -> Self {
        let mut ds = Dataspace {
            types: BTreeMap::new(),
            values: BTreeMap::new(),
            versions: BTreeMap::new(),
        };
        for d in decls {
            ds.types.insert(d.name.clone(), d.ty);
            ds.versions.insert(d.name.clone(), 0);
            if let Some(v) = &d.default {
                ds.values.insert(d.name.clone(), v.clone());
            }
        }
        ds
    }

    /// Current value; `Ok(None)` for a declared but unset variable.
    pub fn read(&self, key: &str) -> Result<Option<&Value>, DataspaceError> {
        if !self.types.contains_key(key) {
            return Err(DataspaceError::Undeclared(key.to_string()));
        }
        Ok(self.values.get(key))
    }

    pub fn write(&mut self, key: &str, value: Value) -> Result<u64, DataspaceError> {
        let ty = *self
            .types
            .get(key)
            .ok_or_else(|| DataspaceError::Undeclared(key.to_string()))?;
        if value.ty() != ty {
            return Err(DataspaceError::TypeMismatch {
                name: key.to_string(),
                expected: ty.keyword(),
                found: value.ty().keyword(),
            });
        }
        self.values.insert(key.to_string(), value);
        let v = self.versions.get_mut(key).expect("declared");
        *v += 1;
        Ok(*v)
    }

    pub fn version(&self, key: &str) -> Option<u64> {
        self.versions.get(key).copied()
    }

    pub fn bindings(&self) -> &Bindings {
        &self.values
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ds() -> Dataspace {
        Dataspace::new(&[VarDecl {
            name: "budget".into(),
            ty: VarType::Int,
            default: None,
        }])
    }

    #[test]
    fn write_then_read() {
        let mut d = ds();
        assert_eq!(d.read("budget").unwrap(), None);
        assert_eq!(d.write("budget", Value::Int(500)).unwrap(), 1);
        assert_eq!(d.read("budget").unwrap(), Some(&Value::Int(500)));
        assert_eq!(d.write("budget", Value::Int(7)).unwrap(), 2);
    }

    #[test]
    fn rejects_undeclared_and_mistyped() {
        let mut d = ds();
        assert_eq!(
            d.write("nope", Value::Int(1)),
            Err(DataspaceError::Undeclared("nope".into()))
        );
        assert!(matches!(
            d.write("budget", Value::Bool(true)),
            Err(DataspaceError::TypeMismatch { .. })
        ));
        assert!(d.read("nope").is_err());
    }
}
