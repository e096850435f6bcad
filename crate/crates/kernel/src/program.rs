//! A main module together with the library modules it imports.

use std::collections::HashMap;
use std::sync::Arc;

use crate::diag::{codes, Diagnostic, SourceFile, SourceId, SourceMap, LIBRARY_SOURCE_BASE, MAIN_SOURCE};
use crate::library;
use crate::syntax::{parse_module, Decl, Module, OpDef, ParseError};

#[derive(Debug, Clone)]
pub struct Program {
    pub sources: SourceMap,
    pub main: Module,
    /// Imported library modules, dependencies first.
    pub libraries: Vec<Module>,
    /// Imports naming a module that is not available.
    pub missing_imports: Vec<Diagnostic>,
}

impl Program {
    /// Parses `text` as the main module and loads every library it imports.
    pub fn parse(file_name: &str, text: &str) -> Result<Program, Diagnostic> {
        let mut sources = SourceMap::default();
        sources.insert(MAIN_SOURCE, Arc::new(SourceFile::new(file_name, text)));
        let main = parse_module(MAIN_SOURCE, text).map_err(|e| parse_diag(e, &sources))?;
        let mut program = Program {
            sources,
            main,
            libraries: Vec::new(),
            missing_imports: Vec::new(),
        };
        let mut loaded: HashMap<String, ()> = HashMap::new();
        let imports: Vec<_> = program.main.imports().cloned().collect();
        for import in imports {
            program.load_library(&import.module, import.span, &mut loaded)?;
        }
        Ok(program)
    }

    fn load_library(
        &mut self,
        name: &str,
        span: crate::diag::Span,
        loaded: &mut HashMap<String, ()>,
    ) -> Result<(), Diagnostic> {
        if loaded.contains_key(name) {
            return Ok(());
        }
        let Some(text) = library::lookup(name) else {
            self.missing_imports.push(
                Diagnostic::error(codes::IMPORT, format!("module '{name}' not found"))
                    .at(span, &self.sources),
            );
            return Ok(());
        };
        loaded.insert(name.to_string(), ());
        let id: SourceId = LIBRARY_SOURCE_BASE + loaded.len() as SourceId;
        self.sources
            .insert(id, Arc::new(SourceFile::new(format!("{name}.qnt"), text)));
        let module = parse_module(id, text).map_err(|e| parse_diag(e, &self.sources))?;
        let nested: Vec<_> = module.imports().cloned().collect();
        for import in nested {
            self.load_library(&import.module, import.span, loaded)?;
        }
        self.libraries.push(module);
        Ok(())
    }

    /// Library declarations followed by the main module's.
    pub fn decls(&self) -> impl Iterator<Item = &Decl> {
        self.libraries
            .iter()
            .flat_map(|m| m.decls.iter())
            .chain(self.main.decls.iter())
    }

    pub fn op(&self, name: &str) -> Option<&OpDef> {
        self.main
            .op(name)
            .or_else(|| self.libraries.iter().find_map(|m| m.op(name)))
    }

    pub fn text(&self) -> &str {
        &self.sources.get(MAIN_SOURCE).expect("main source").text
    }
}

pub fn parse_diag(e: ParseError, sources: &SourceMap) -> Diagnostic {
    Diagnostic::error(codes::PARSE, e.message).at(e.span, sources)
}
