//! File-backed encrypted table storage.
//!
//! One record file per table plus a JSON manifest describing the slot
//! layout. Records are length-prefixed and append-only; updated rows are
//! appended as new versions and the loader keeps the latest. Every
//! ORE-bearing column gets a ciphertext B-tree index.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::crypto::Scheme;
use crate::index::{CipherBTree, OreKey, DEFAULT_FANOUT};
use crate::schema::{EncryptedRow, EncryptedValue, FieldSlot};
use crate::wire::{Reader, Writer};

use super::EngineError;

const RECORD_VERSION: u8 = 1;
const MANIFEST_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct ManifestSlot {
    anon_column: String,
    scheme_tag: u8, // 0 = plaintext slot
}

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    version: u32,
    anon_table: String,
    slots: Vec<ManifestSlot>,
}

/// One encrypted table: layout, rows, indexes, and the backing files.
pub struct StoredTable {
    pub anon_name: String,
    pub layout: Vec<FieldSlot>,
    /// (anon_column, scheme) → slot position.
    slot_index: HashMap<(String, Option<Scheme>), usize>,
    /// row_id → latest row version.
    rows: HashMap<u64, Vec<EncryptedValue>>,
    row_order: Vec<u64>,
    next_row_id: u64,
    /// ORE columns → ciphertext B-tree.
    pub indexes: HashMap<String, CipherBTree>,
    data_path: PathBuf,
    writer: BufWriter<File>,
}

fn record_bytes(row_id: u64, fields: &[EncryptedValue]) -> Vec<u8> {
    let mut w = Writer::new(RECORD_VERSION);
    w.u64(row_id);
    w.u32(fields.len() as u32);
    for f in fields {
        w.bytes(&f.to_bytes());
    }
    w.finish()
}

impl StoredTable {
    /// Creates a fresh table on disk, replacing any previous files.
    pub fn create(
        dir: &Path,
        anon_name: &str,
        layout: Vec<FieldSlot>,
    ) -> Result<StoredTable, EngineError> {
        let manifest = Manifest {
            version: MANIFEST_VERSION,
            anon_table: anon_name.to_string(),
            slots: layout
                .iter()
                .map(|s| ManifestSlot {
                    anon_column: s.anon_column.clone(),
                    scheme_tag: s.scheme.map_or(0, Scheme::tag),
                })
                .collect(),
        };
        let manifest_path = dir.join(format!("{anon_name}.manifest.json"));
        std::fs::write(
            &manifest_path,
            serde_json::to_string_pretty(&manifest).expect("manifest serializes"),
        )
        .map_err(|e| EngineError::Io(e.to_string()))?;
        let data_path = dir.join(format!("{anon_name}.tbl"));
        let file = OpenOptions::new()
            .create(true)
            .write(true)
            .truncate(true)
            .open(&data_path)
            .map_err(|e| EngineError::Io(e.to_string()))?;
        Ok(StoredTable::assemble(anon_name, layout, data_path, file))
    }

    /// Reopens a table from its manifest and record file.
    pub fn open(dir: &Path, anon_name: &str) -> Result<StoredTable, EngineError> {
        let manifest_path = dir.join(format!("{anon_name}.manifest.json"));
        let text = std::fs::read_to_string(&manifest_path)
            .map_err(|e| EngineError::Io(e.to_string()))?;
        let manifest: Manifest =
            serde_json::from_str(&text).map_err(|e| EngineError::Io(e.to_string()))?;
        if manifest.version != MANIFEST_VERSION {
            return Err(EngineError::Io(format!(
                "unsupported manifest version {}",
                manifest.version
            )));
        }
        let layout: Vec<FieldSlot> = manifest
            .slots
            .iter()
            .map(|s| {
                Ok(FieldSlot {
                    anon_column: s.anon_column.clone(),
                    scheme: match s.scheme_tag {
                        0 => None,
                        t => Some(Scheme::from_tag(t).ok_or_else(|| {
                            EngineError::Io(format!("unknown scheme tag {t}"))
                        })?),
                    },
                })
            })
            .collect::<Result<_, EngineError>>()?;

        let data_path = dir.join(format!("{anon_name}.tbl"));
        let mut buf = Vec::new();
        File::open(&data_path)
            .map_err(|e| EngineError::Io(e.to_string()))?
            .read_to_end(&mut buf)
            .map_err(|e| EngineError::Io(e.to_string()))?;
        let file = OpenOptions::new()
            .append(true)
            .open(&data_path)
            .map_err(|e| EngineError::Io(e.to_string()))?;
        let mut table = StoredTable::assemble(anon_name, layout, data_path, file);

        let mut pos = 0;
        while pos < buf.len() {
            // Each record is an outer length-prefixed frame.
            if buf.len() - pos < 4 {
                return Err(EngineError::Io("truncated record frame".into()));
            }
            let len = u32::from_le_bytes(buf[pos..pos + 4].try_into().unwrap()) as usize;
            pos += 4;
            let frame = buf
                .get(pos..pos + len)
                .ok_or_else(|| EngineError::Io("truncated record body".into()))?;
            pos += len;
            let mut r = Reader::new(frame, RECORD_VERSION)
                .map_err(|e| EngineError::Io(e.to_string()))?;
            let row_id = r.u64().map_err(|e| EngineError::Io(e.to_string()))?;
            let nfields = r.u32().map_err(|e| EngineError::Io(e.to_string()))? as usize;
            let mut fields = Vec::with_capacity(nfields);
            for _ in 0..nfields {
                let fb = r.bytes().map_err(|e| EngineError::Io(e.to_string()))?;
                fields.push(
                    EncryptedValue::from_bytes(fb).map_err(|e| EngineError::Io(e.to_string()))?,
                );
            }
            table.install_row(row_id, fields)?;
        }
        Ok(table)
    }

    fn assemble(
        anon_name: &str,
        layout: Vec<FieldSlot>,
        data_path: PathBuf,
        file: File,
    ) -> StoredTable {
        let mut slot_index = HashMap::new();
        let mut indexes = HashMap::new();
        for (i, slot) in layout.iter().enumerate() {
            slot_index.insert((slot.anon_column.clone(), slot.scheme), i);
            if slot.scheme == Some(Scheme::Ore) {
                indexes.insert(slot.anon_column.clone(), CipherBTree::new(DEFAULT_FANOUT));
            }
        }
        StoredTable {
            anon_name: anon_name.to_string(),
            layout,
            slot_index,
            rows: HashMap::new(),
            row_order: Vec::new(),
            next_row_id: 1,
            indexes,
            data_path,
            writer: BufWriter::new(file),
        }
    }

    pub fn slot_of(&self, anon_column: &str, scheme: Option<Scheme>) -> Option<usize> {
        self.slot_index
            .get(&(anon_column.to_string(), scheme))
            .copied()
    }

    pub fn has_index(&self, anon_column: &str) -> bool {
        self.indexes.contains_key(anon_column)
    }

    pub fn row(&self, row_id: u64) -> Option<&Vec<EncryptedValue>> {
        self.rows.get(&row_id)
    }

    pub fn row_ids(&self) -> &[u64] {
        &self.row_order
    }

    pub fn len(&self) -> usize {
        self.row_order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.row_order.is_empty()
    }

    /// Bytes on disk for the record file.
    pub fn storage_bytes(&self) -> u64 {
        std::fs::metadata(&self.data_path).map(|m| m.len()).unwrap_or(0)
    }

    fn check_layout(&self, fields: &[EncryptedValue]) -> Result<(), EngineError> {
        if fields.len() != self.layout.len() {
            return Err(EngineError::LayoutMismatch(format!(
                "expected {} fields, got {}",
                self.layout.len(),
                fields.len()
            )));
        }
        for (slot, field) in self.layout.iter().zip(fields) {
            if slot.scheme != field.scheme() {
                return Err(EngineError::LayoutMismatch(format!(
                    "slot {:?}/{:?} holds a {:?} ciphertext",
                    slot.anon_column,
                    slot.scheme,
                    field.scheme()
                )));
            }
        }
        Ok(())
    }

    fn install_row(
        &mut self,
        row_id: u64,
        fields: Vec<EncryptedValue>,
    ) -> Result<(), EngineError> {
        self.check_layout(&fields)?;
        for (pos, (slot, field)) in self.layout.iter().zip(&fields).enumerate() {
            if let (Some(Scheme::Ore), EncryptedValue::Ore(c)) = (slot.scheme, field) {
                let index = self.indexes.get_mut(&slot.anon_column).expect("ore index");
                // Reinsertion during updates: retire only the superseded key
                // version so the fresh key for this row stays live. Columns
                // whose cipher is unchanged keep their existing key.
                if let Some(old) = self.rows.get(&row_id) {
                    if let EncryptedValue::Ore(old_c) = &old[pos] {
                        if old_c.to_bytes() == c.to_bytes() {
                            continue;
                        }
                        index.delete_version(row_id, old_c);
                    }
                }
                index.insert(OreKey {
                    cipher: c.clone(),
                    row_id,
                })?;
            }
        }
        if self.rows.insert(row_id, fields).is_none() {
            self.row_order.push(row_id);
        }
        self.next_row_id = self.next_row_id.max(row_id + 1);
        Ok(())
    }

    fn persist(&mut self, row_id: u64) -> Result<(), EngineError> {
        let fields = self.rows.get(&row_id).expect("row exists");
        let body = record_bytes(row_id, fields);
        let mut frame = (body.len() as u32).to_le_bytes().to_vec();
        frame.extend_from_slice(&body);
        self.writer
            .write_all(&frame)
            .and_then(|_| self.writer.flush())
            .map_err(|e| EngineError::Io(e.to_string()))
    }

    /// Durable append of a new row; updates indexes.
    pub fn insert(&mut self, row: EncryptedRow) -> Result<u64, EngineError> {
        let row_id = self.next_row_id;
        self.install_row(row_id, row.fields)?;
        self.persist(row_id)?;
        Ok(row_id)
    }

    /// Replaces selected slots of an existing row and appends the new
    /// version.
    pub fn update_row(
        &mut self,
        row_id: u64,
        changes: &[(usize, EncryptedValue)],
    ) -> Result<(), EngineError> {
        let mut fields = self
            .rows
            .get(&row_id)
            .ok_or_else(|| EngineError::LayoutMismatch(format!("no row {row_id}")))?
            .clone();
        for (slot, value) in changes {
            fields[*slot] = value.clone();
        }
        self.install_row(row_id, fields)?;
        self.persist(row_id)
    }
}
