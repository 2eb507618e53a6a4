//! Column specifications and the client-side name catalog.

use std::collections::{BTreeSet, HashMap};
use std::path::Path;

use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::crypto::Scheme;

use super::SchemaError;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum DataKind {
    Int,
    Decimal { scale: u8 },
    Text,
}

impl DataKind {
    pub fn name(&self) -> &'static str {
        match self {
            DataKind::Int => "int",
            DataKind::Decimal { .. } => "decimal",
            DataKind::Text => "text",
        }
    }

    pub fn is_numeric(&self) -> bool {
        !matches!(self, DataKind::Text)
    }
}

/// How a table's sensitive columns are materialized on the server.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ProvisionMode {
    /// Software operators only: one ciphertext per supported scheme.
    Software,
    /// Enclave only: a single randomized ciphertext per sensitive column.
    Tee,
    /// Both encodings, so the dispatcher can choose per call.
    Adaptive,
}

impl ProvisionMode {
    /// Default scheme set for a sensitive column of the given kind.
    pub fn default_schemes(self, kind: &DataKind) -> BTreeSet<Scheme> {
        let software: &[Scheme] = if kind.is_numeric() {
            &[Scheme::Ahe, Scheme::Mhe, Scheme::Ore, Scheme::Det]
        } else {
            &[Scheme::Ore, Scheme::Det]
        };
        match self {
            ProvisionMode::Software => software.iter().copied().collect(),
            ProvisionMode::Tee => [Scheme::Rnd].into_iter().collect(),
            ProvisionMode::Adaptive => software
                .iter()
                .copied()
                .chain([Scheme::Rnd])
                .collect(),
        }
    }
}

/// Client-supplied column description at registration time.
#[derive(Debug, Clone)]
pub struct ColumnDef {
    pub name: String,
    pub data_kind: DataKind,
    pub sensitive: bool,
}

impl ColumnDef {
    pub fn new(name: &str, data_kind: DataKind, sensitive: bool) -> ColumnDef {
        ColumnDef {
            name: name.to_string(),
            data_kind,
            sensitive,
        }
    }
}

/// Fully resolved column: anonymous server-side name plus scheme set.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ColumnSpec {
    pub plain_name: String,
    pub anon_name: String,
    pub data_kind: DataKind,
    pub schemes: BTreeSet<Scheme>,
    pub sensitive: bool,
}

impl ColumnSpec {
    pub fn has_scheme(&self, scheme: Scheme) -> bool {
        self.schemes.contains(&scheme)
    }

    /// Key-derivation label for this column's ciphertexts.
    pub fn key_label(&self) -> Vec<u8> {
        self.anon_name.as_bytes().to_vec()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TableSpec {
    pub plain_name: String,
    pub anon_name: String,
    pub mode: ProvisionMode,
    pub columns: Vec<ColumnSpec>,
}

impl TableSpec {
    pub fn column(&self, plain_name: &str) -> Result<&ColumnSpec, SchemaError> {
        self.columns
            .iter()
            .find(|c| c.plain_name == plain_name)
            .ok_or_else(|| SchemaError::UnknownColumn(plain_name.to_string()))
    }

    pub fn column_by_anon(&self, anon_name: &str) -> Option<&ColumnSpec> {
        self.columns.iter().find(|c| c.anon_name == anon_name)
    }
}

const CATALOG_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct CatalogFile {
    version: u32,
    tables: Vec<TableSpec>,
}

/// The client-side mapping from plaintext names to anonymous identifiers
/// and scheme sets. Contains no key material; keys live in the sealed
/// keystore.
#[derive(Debug, Default)]
pub struct Catalog {
    tables: HashMap<String, TableSpec>,
}

fn anon_token(rng: &mut impl RngCore) -> String {
    let mut bytes = [0u8; 8];
    rng.fill_bytes(&mut bytes);
    hex::encode(bytes)
}

impl Catalog {
    pub fn new() -> Catalog {
        Catalog::default()
    }

    /// Registers a table, assigning collision-free anonymous names and the
    /// mode's default scheme set to each sensitive column. Non-sensitive
    /// columns are stored plaintext with an empty scheme set.
    pub fn register_table(
        &mut self,
        name: &str,
        mode: ProvisionMode,
        defs: &[ColumnDef],
        rng: &mut impl RngCore,
    ) -> Result<&TableSpec, SchemaError> {
        if self.tables.contains_key(name) {
            return Err(SchemaError::DuplicateTable(name.to_string()));
        }
        let mut seen = BTreeSet::new();
        let mut used_anon = BTreeSet::new();
        let mut columns = Vec::with_capacity(defs.len());
        for def in defs {
            if !seen.insert(def.name.clone()) {
                return Err(SchemaError::DuplicateColumn(def.name.clone()));
            }
            let mut anon = anon_token(rng);
            while !used_anon.insert(anon.clone()) {
                anon = anon_token(rng);
            }
            let schemes = if def.sensitive {
                mode.default_schemes(&def.data_kind)
            } else {
                BTreeSet::new()
            };
            columns.push(ColumnSpec {
                plain_name: def.name.clone(),
                anon_name: anon,
                data_kind: def.data_kind.clone(),
                schemes,
                sensitive: def.sensitive,
            });
        }
        let spec = TableSpec {
            plain_name: name.to_string(),
            anon_name: anon_token(rng),
            mode,
            columns,
        };
        Ok(self.tables.entry(name.to_string()).or_insert(spec))
    }

    pub fn table(&self, name: &str) -> Result<&TableSpec, SchemaError> {
        self.tables
            .get(name)
            .ok_or_else(|| SchemaError::UnknownTable(name.to_string()))
    }

    pub fn tables(&self) -> impl Iterator<Item = &TableSpec> {
        self.tables.values()
    }

    /// Persists the catalog as versioned JSON. No keys are ever written.
    pub fn save(&self, path: &Path) -> Result<(), SchemaError> {
        let mut tables: Vec<TableSpec> = self.tables.values().cloned().collect();
        tables.sort_by(|a, b| a.plain_name.cmp(&b.plain_name));
        let file = CatalogFile {
            version: CATALOG_VERSION,
            tables,
        };
        let text = serde_json::to_string_pretty(&file)
            .map_err(|e| SchemaError::Catalog(e.to_string()))?;
        std::fs::write(path, text).map_err(|e| SchemaError::Catalog(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Catalog, SchemaError> {
        let text =
            std::fs::read_to_string(path).map_err(|e| SchemaError::Catalog(e.to_string()))?;
        let file: CatalogFile =
            serde_json::from_str(&text).map_err(|e| SchemaError::Catalog(e.to_string()))?;
        if file.version != CATALOG_VERSION {
            return Err(SchemaError::Catalog(format!(
                "unsupported catalog version {}",
                file.version
            )));
        }
        let mut catalog = Catalog::new();
        for t in file.tables {
            catalog.tables.insert(t.plain_name.clone(), t);
        }
        Ok(catalog)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::rngs::StdRng;
    use rand::SeedableRng;

    fn defs() -> Vec<ColumnDef> {
        vec![
            ColumnDef::new("id", DataKind::Int, false),
            ColumnDef::new("amount", DataKind::Decimal { scale: 2 }, true),
            ColumnDef::new("note", DataKind::Text, true),
        ]
    }

    #[test]
    fn registration_assigns_distinct_anon_names() {
        let mut rng = StdRng::seed_from_u64(1);
        let mut cat = Catalog::new();
        let t = cat
            .register_table("orders", ProvisionMode::Software, &defs(), &mut rng)
            .unwrap();
        let names: BTreeSet<&str> = t.columns.iter().map(|c| c.anon_name.as_str()).collect();
        assert_eq!(names.len(), 3);
        for c in &t.columns {
            assert_eq!(c.anon_name.len(), 16);
            assert_ne!(c.anon_name, c.plain_name);
        }
    }

    #[test]
    fn scheme_defaults_follow_mode_and_kind() {
        let mut rng = StdRng::seed_from_u64(2);
        let mut cat = Catalog::new();
        cat.register_table("a", ProvisionMode::Software, &defs(), &mut rng)
            .unwrap();
        cat.register_table("b", ProvisionMode::Tee, &defs(), &mut rng)
            .unwrap();
        let soft = cat.table("a").unwrap();
        assert!(soft.column("id").unwrap().schemes.is_empty());
        assert_eq!(soft.column("amount").unwrap().schemes.len(), 4);
        assert_eq!(soft.column("note").unwrap().schemes.len(), 2);
        let tee = cat.table("b").unwrap();
        assert_eq!(
            tee.column("amount").unwrap().schemes,
            [Scheme::Rnd].into_iter().collect()
        );
    }

    #[test]
    fn duplicate_names_are_rejected() {
        let mut rng = StdRng::seed_from_u64(3);
        let mut cat = Catalog::new();
        cat.register_table("t", ProvisionMode::Software, &defs(), &mut rng)
            .unwrap();
        assert!(matches!(
            cat.register_table("t", ProvisionMode::Software, &defs(), &mut rng),
            Err(SchemaError::DuplicateTable(_))
        ));
        let dup = vec![
            ColumnDef::new("x", DataKind::Int, true),
            ColumnDef::new("x", DataKind::Int, false),
        ];
        assert!(matches!(
            cat.register_table("u", ProvisionMode::Software, &dup, &mut rng),
            Err(SchemaError::DuplicateColumn(_))
        ));
    }

    #[test]
    fn catalog_file_round_trips_without_key_material() {
        let mut rng = StdRng::seed_from_u64(4);
        let mut cat = Catalog::new();
        cat.register_table("orders", ProvisionMode::Adaptive, &defs(), &mut rng)
            .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("catalog.json");
        cat.save(&path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(!text.to_lowercase().contains("key"));
        let loaded = Catalog::load(&path).unwrap();
        assert_eq!(
            loaded.table("orders").unwrap().column("amount").unwrap().anon_name,
            cat.table("orders").unwrap().column("amount").unwrap().anon_name
        );
    }
}
