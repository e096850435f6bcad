//! Library modules that generated models may import.

pub const CW_TYPES: &str = include_str!("cw_types.qnt");

const MODULES: &[(&str, &str)] = &[("cw_types", CW_TYPES)];

/// Source text of a library module, looked up by module name.
pub fn lookup(name: &str) -> Option<&'static str> {
    MODULES.iter().find(|(n, _)| *n == name).map(|(_, t)| *t)
}

pub fn names() -> impl Iterator<Item = &'static str> {
    MODULES.iter().map(|(n, _)| *n)
}
