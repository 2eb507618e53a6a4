//! Row encryption, statement rewriting, and result decryption.

use std::collections::HashMap;

use rand::rngs::StdRng;
use rand::SeedableRng;

use crate::crypto::{
    derive_column_key, det_decrypt, det_encrypt, ore_decrypt, ore_encrypt, rnd_decrypt,
    rnd_encrypt, sahe_decrypt, sahe_encrypt, smhe_decrypt, smhe_encrypt, AheCipher, ColumnKey,
    DetCipher, MasterKey, MheCipher, OreCipher, OreWidth, RndCipher, Scheme,
};
use crate::wire::{Reader, Writer, WireError};

use super::ast::{AggFn, PredOp, SelectQuery, Statement, UpdateSet};
use super::catalog::{Catalog, ColumnDef, ColumnSpec, DataKind, ProvisionMode, TableSpec};
use super::value::{text_order_key, Value};
use super::SchemaError;

/// Execution-path flavor requested for a statement.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QueryMode {
    Software,
    StaticTee,
    Adaptive,
}

/// One stored field: a plaintext copy or a ciphertext under one scheme.
#[derive(Debug, Clone)]
pub enum EncryptedValue {
    Plain(Value),
    Ahe(AheCipher),
    Mhe(MheCipher),
    Ore(OreCipher),
    Det(DetCipher),
    Rnd(RndCipher),
}

const FIELD_WIRE_VERSION: u8 = 1;

impl EncryptedValue {
    pub fn scheme(&self) -> Option<Scheme> {
        match self {
            EncryptedValue::Plain(_) => None,
            EncryptedValue::Ahe(_) => Some(Scheme::Ahe),
            EncryptedValue::Mhe(_) => Some(Scheme::Mhe),
            EncryptedValue::Ore(_) => Some(Scheme::Ore),
            EncryptedValue::Det(_) => Some(Scheme::Det),
            EncryptedValue::Rnd(_) => Some(Scheme::Rnd),
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new(FIELD_WIRE_VERSION);
        match self {
            EncryptedValue::Plain(v) => {
                w.u8(0);
                w.bytes(&serde_json::to_vec(v).expect("plain value serializes"));
            }
            EncryptedValue::Ahe(c) => {
                w.u8(Scheme::Ahe.tag());
                w.bytes(&c.to_bytes());
            }
            EncryptedValue::Mhe(c) => {
                w.u8(Scheme::Mhe.tag());
                w.bytes(&c.to_bytes());
            }
            EncryptedValue::Ore(c) => {
                w.u8(Scheme::Ore.tag());
                w.bytes(&c.to_bytes());
            }
            EncryptedValue::Det(c) => {
                w.u8(Scheme::Det.tag());
                w.bytes(&c.to_bytes());
            }
            EncryptedValue::Rnd(c) => {
                w.u8(Scheme::Rnd.tag());
                w.bytes(&c.to_bytes());
            }
        }
        w.finish()
    }

    pub fn from_bytes(buf: &[u8]) -> Result<EncryptedValue, WireError> {
        let mut r = Reader::new(buf, FIELD_WIRE_VERSION)?;
        let tag = r.u8()?;
        let body = r.bytes()?;
        let out = match tag {
            0 => EncryptedValue::Plain(
                serde_json::from_slice(body).map_err(|_| WireError::Malformed("plain value"))?,
            ),
            t if t == Scheme::Ahe.tag() => EncryptedValue::Ahe(AheCipher::from_bytes(body)?),
            t if t == Scheme::Mhe.tag() => EncryptedValue::Mhe(MheCipher::from_bytes(body)?),
            t if t == Scheme::Ore.tag() => EncryptedValue::Ore(OreCipher::from_bytes(body)?),
            t if t == Scheme::Det.tag() => EncryptedValue::Det(DetCipher::from_bytes(body)?),
            t if t == Scheme::Rnd.tag() => EncryptedValue::Rnd(RndCipher::from_bytes(body)?),
            _ => return Err(WireError::Malformed("unknown field tag")),
        };
        r.done()?;
        Ok(out)
    }
}

/// Server-side slot layout for a table: non-sensitive columns occupy one
/// plaintext slot, sensitive columns one slot per scheme.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FieldSlot {
    pub anon_column: String,
    pub scheme: Option<Scheme>,
}

pub fn table_layout(table: &TableSpec) -> Vec<FieldSlot> {
    let mut slots = Vec::new();
    for c in &table.columns {
        if c.schemes.is_empty() {
            slots.push(FieldSlot {
                anon_column: c.anon_name.clone(),
                scheme: None,
            });
        } else {
            for &s in &c.schemes {
                slots.push(FieldSlot {
                    anon_column: c.anon_name.clone(),
                    scheme: Some(s),
                });
            }
        }
    }
    slots
}

/// One row's fields, aligned with `table_layout`.
#[derive(Debug, Clone)]
pub struct EncryptedRow {
    pub fields: Vec<EncryptedValue>,
}

/// Execution capability a rewritten predicate requires from the server.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Capability {
    PlainFilter,
    DetEqual,
    OreCompare,
    TeeBridge,
    /// Both encodings present; the dispatcher picks per call.
    AdaptiveCompare,
}

#[derive(Debug, Clone)]
pub struct RewrittenPredicate {
    pub anon_column: String,
    pub op: PredOp,
    pub capability: Capability,
    pub plain: Option<Value>,
    pub det: Option<DetCipher>,
    pub ore: Option<OreCipher>,
    pub rnd: Option<RndCipher>,
}

#[derive(Debug, Clone)]
pub struct RewrittenProjection {
    pub anon_column: String,
    pub agg: Option<AggFn>,
}

#[derive(Debug, Clone)]
pub struct RewrittenQuery {
    pub anon_table: String,
    pub mode: QueryMode,
    pub projection: Vec<RewrittenProjection>,
    pub predicates: Vec<RewrittenPredicate>,
    pub order_by: Option<(String, bool)>,
    pub limit: Option<usize>,
}

#[derive(Debug, Clone)]
pub enum RewrittenAssignment {
    /// Full re-materialization of every slot of one column.
    Replace {
        anon_column: String,
        values: Vec<EncryptedValue>,
    },
    /// Additive adjustment on a plaintext column.
    AddPlain {
        anon_column: String,
        delta: Value,
    },
    /// Homomorphic additive adjustment on the software path.
    AddHe {
        anon_column: String,
        delta: AheCipher,
    },
    /// Additive adjustment bridged through the enclave.
    AddTee {
        anon_column: String,
        delta: RndCipher,
    },
    /// Both encodings for the dispatcher to choose between.
    AddBoth {
        anon_column: String,
        delta_he: AheCipher,
        delta_rnd: RndCipher,
    },
}

#[derive(Debug, Clone)]
pub enum RewrittenStatement {
    Select(RewrittenQuery),
    Insert {
        anon_table: String,
        row: EncryptedRow,
    },
    Update {
        anon_table: String,
        mode: QueryMode,
        sets: Vec<RewrittenAssignment>,
        predicates: Vec<RewrittenPredicate>,
        /// True when an additive update leaves sibling ciphertext copies
        /// stale, so the client must re-encrypt and write them back.
        needs_client_round_trip: bool,
    },
}

/// The client: master key, catalog, and the rewriting/decryption engine.
pub struct ClientSession {
    master: MasterKey,
    pub catalog: Catalog,
    rng: StdRng,
    key_cache: HashMap<(String, Scheme), ColumnKey>,
    nonce_counter: u64,
}

impl ClientSession {
    pub fn new(master: MasterKey, seed: u64) -> ClientSession {
        ClientSession {
            master,
            catalog: Catalog::new(),
            rng: StdRng::seed_from_u64(seed ^ 0x5c43_ba5e),
            key_cache: HashMap::new(),
            nonce_counter: 1,
        }
    }

    pub fn master_key(&self) -> &MasterKey {
        &self.master
    }

    pub fn register_table(
        &mut self,
        name: &str,
        mode: ProvisionMode,
        defs: &[ColumnDef],
    ) -> Result<String, SchemaError> {
        let spec = self
            .catalog
            .register_table(name, mode, defs, &mut self.rng)?;
        Ok(spec.anon_name.clone())
    }

    /// Column listing for enclave provisioning: every sensitive column's
    /// label with its scheme set plus the schemes the bridge may need for
    /// result re-encryption.
    pub fn enclave_column_listing(&self) -> Vec<(Vec<u8>, Vec<Scheme>)> {
        let mut listing = Vec::new();
        for t in self.catalog.tables() {
            for c in &t.columns {
                if c.schemes.is_empty() {
                    continue;
                }
                let schemes: Vec<Scheme> = c.schemes.iter().copied().collect();
                listing.push((c.key_label(), schemes));
            }
        }
        listing.sort();
        listing
    }

    fn key(&mut self, col: &ColumnSpec, scheme: Scheme) -> Result<ColumnKey, SchemaError> {
        let cache_key = (col.anon_name.clone(), scheme);
        if let Some(k) = self.key_cache.get(&cache_key) {
            return Ok(k.clone());
        }
        let k = derive_column_key(&self.master, &col.key_label(), scheme)?;
        self.key_cache.insert(cache_key, k.clone());
        Ok(k)
    }

    fn fresh_nonce(&mut self) -> u64 {
        self.nonce_counter += 1;
        self.nonce_counter
    }

    /// Canonical non-negative integer form of a numeric value for `col`.
    fn numeric_plain(&self, col: &ColumnSpec, value: &Value) -> Result<u64, SchemaError> {
        let scaled = value.to_scaled_int(&col.data_kind, &col.plain_name)?;
        if scaled < 0 {
            return Err(SchemaError::NegativeSensitive {
                column: col.plain_name.clone(),
                value: scaled,
            });
        }
        Ok(scaled as u64)
    }

    /// Encrypts one value under one scheme of its column.
    fn encrypt_field(
        &mut self,
        col: &ColumnSpec,
        value: &Value,
        scheme: Scheme,
    ) -> Result<EncryptedValue, SchemaError> {
        let key = self.key(col, scheme)?;
        Ok(match (scheme, &col.data_kind) {
            (Scheme::Ahe, _) => {
                let v = self.numeric_plain(col, value)? as u128;
                let nonce = self.fresh_nonce();
                EncryptedValue::Ahe(sahe_encrypt(v, &key, nonce)?)
            }
            (Scheme::Mhe, _) => {
                let v = self.numeric_plain(col, value)? as u128;
                let nonce = self.fresh_nonce();
                EncryptedValue::Mhe(smhe_encrypt(v, &key, nonce)?)
            }
            (Scheme::Ore, DataKind::Text) => {
                let s = value.as_text().ok_or_else(|| SchemaError::TypeMismatch {
                    column: col.plain_name.clone(),
                    expected: "text",
                    found: value.kind_name(),
                })?;
                EncryptedValue::Ore(ore_encrypt(
                    text_order_key(s),
                    &key,
                    OreWidth::W64,
                    &mut self.rng,
                )?)
            }
            (Scheme::Ore, _) => {
                let v = self.numeric_plain(col, value)?;
                EncryptedValue::Ore(ore_encrypt(v, &key, OreWidth::W64, &mut self.rng)?)
            }
            (Scheme::Det, DataKind::Text) | (Scheme::Rnd, DataKind::Text) => {
                let s = value.as_text().ok_or_else(|| SchemaError::TypeMismatch {
                    column: col.plain_name.clone(),
                    expected: "text",
                    found: value.kind_name(),
                })?;
                if scheme == Scheme::Det {
                    EncryptedValue::Det(det_encrypt(s.as_bytes(), &key)?)
                } else {
                    EncryptedValue::Rnd(rnd_encrypt(s.as_bytes(), &key, &mut self.rng)?)
                }
            }
            (Scheme::Det, _) => {
                let v = self.numeric_plain(col, value)?;
                EncryptedValue::Det(det_encrypt(&v.to_le_bytes(), &key)?)
            }
            (Scheme::Rnd, _) => {
                let v = self.numeric_plain(col, value)?;
                EncryptedValue::Rnd(rnd_encrypt(&v.to_le_bytes(), &key, &mut self.rng)?)
            }
        })
    }

    /// Encrypts a full row; `values` align with the registered column order.
    pub fn encrypt_row(
        &mut self,
        table_name: &str,
        values: &[Value],
    ) -> Result<EncryptedRow, SchemaError> {
        let table = self.catalog.table(table_name)?.clone();
        if values.len() != table.columns.len() {
            return Err(SchemaError::Unsupported {
                column: table_name.to_string(),
                reason: "value count does not match column count",
            });
        }
        let mut fields = Vec::new();
        for (col, value) in table.columns.iter().zip(values) {
            if col.schemes.is_empty() {
                // Type-check plaintext columns too.
                if col.data_kind.is_numeric() {
                    value.to_scaled_int(&col.data_kind, &col.plain_name)?;
                } else if value.as_text().is_none() {
                    return Err(SchemaError::TypeMismatch {
                        column: col.plain_name.clone(),
                        expected: "text",
                        found: value.kind_name(),
                    });
                }
                fields.push(EncryptedValue::Plain(value.clone()));
            } else {
                for &scheme in &col.schemes {
                    fields.push(self.encrypt_field(col, value, scheme)?);
                }
            }
        }
        Ok(EncryptedRow { fields })
    }

    /// Re-materializes every slot of one column for a given plaintext value,
    /// used for the client round trip after additive updates.
    pub fn reencrypt_column(
        &mut self,
        table_name: &str,
        plain_column: &str,
        value: &Value,
    ) -> Result<RewrittenAssignment, SchemaError> {
        let col = self.catalog.table(table_name)?.column(plain_column)?.clone();
        let mut values = Vec::new();
        for &scheme in &col.schemes {
            values.push(self.encrypt_field(&col, value, scheme)?);
        }
        Ok(RewrittenAssignment::Replace {
            anon_column: col.anon_name.clone(),
            values,
        })
    }

    fn require(
        &self,
        col: &ColumnSpec,
        scheme: Scheme,
    ) -> Result<(), SchemaError> {
        if col.has_scheme(scheme) {
            Ok(())
        } else {
            Err(SchemaError::MissingScheme {
                column: col.plain_name.clone(),
                scheme,
            })
        }
    }

    fn rewrite_predicate(
        &mut self,
        col: &ColumnSpec,
        op: PredOp,
        literal: &Value,
        mode: QueryMode,
    ) -> Result<RewrittenPredicate, SchemaError> {
        if !col.sensitive {
            return Ok(RewrittenPredicate {
                anon_column: col.anon_name.clone(),
                op,
                capability: Capability::PlainFilter,
                plain: Some(literal.clone()),
                det: None,
                ore: None,
                rnd: None,
            });
        }
        let want_software = matches!(mode, QueryMode::Software | QueryMode::Adaptive);
        let want_tee = matches!(mode, QueryMode::StaticTee | QueryMode::Adaptive);

        let mut det = None;
        let mut ore = None;
        let mut rnd = None;
        let mut software_cap = None;
        if want_software {
            if op == PredOp::Eq && col.has_scheme(Scheme::Det) {
                det = Some(match self.encrypt_field(col, literal, Scheme::Det)? {
                    EncryptedValue::Det(c) => c,
                    _ => unreachable!(),
                });
                software_cap = Some(Capability::DetEqual);
            } else {
                self.require(col, Scheme::Ore)?;
                ore = Some(match self.encrypt_field(col, literal, Scheme::Ore)? {
                    EncryptedValue::Ore(c) => c,
                    _ => unreachable!(),
                });
                software_cap = Some(Capability::OreCompare);
            }
        }
        if want_tee {
            if !col.data_kind.is_numeric() {
                return Err(SchemaError::Unsupported {
                    column: col.plain_name.clone(),
                    reason: "enclave comparisons cover numeric columns only",
                });
            }
            self.require(col, Scheme::Rnd)?;
            rnd = Some(match self.encrypt_field(col, literal, Scheme::Rnd)? {
                EncryptedValue::Rnd(c) => c,
                _ => unreachable!(),
            });
        }
        let capability = match mode {
            QueryMode::Software => software_cap.unwrap(),
            QueryMode::StaticTee => Capability::TeeBridge,
            QueryMode::Adaptive => Capability::AdaptiveCompare,
        };
        Ok(RewrittenPredicate {
            anon_column: col.anon_name.clone(),
            op,
            capability,
            plain: None,
            det,
            ore,
            rnd,
        })
    }

    fn rewrite_select(
        &mut self,
        q: &SelectQuery,
        mode: QueryMode,
    ) -> Result<RewrittenQuery, SchemaError> {
        let table = self.catalog.table(&q.table)?.clone();
        let mut projection = Vec::new();
        for p in &q.projection {
            let (name, agg) = match p {
                super::ast::Projection::Column(n) => (n, None),
                super::ast::Projection::Aggregate(f, n) => (n, Some(*f)),
            };
            let col = table.column(name)?;
            if let Some(f) = agg {
                if col.sensitive {
                    match (f, mode) {
                        (AggFn::Sum, QueryMode::Software | QueryMode::Adaptive) => {
                            self.require(col, Scheme::Ahe)?
                        }
                        (AggFn::Sum, QueryMode::StaticTee) => self.require(col, Scheme::Rnd)?,
                        (AggFn::Min | AggFn::Max, QueryMode::Software | QueryMode::Adaptive) => {
                            self.require(col, Scheme::Ore)?
                        }
                        (AggFn::Min | AggFn::Max, QueryMode::StaticTee) => {
                            self.require(col, Scheme::Rnd)?
                        }
                    }
                }
            }
            projection.push(RewrittenProjection {
                anon_column: col.anon_name.clone(),
                agg,
            });
        }
        let mut predicates = Vec::new();
        for p in &q.predicates {
            let col = table.column(&p.column)?.clone();
            predicates.push(self.rewrite_predicate(&col, p.op, &p.literal, mode)?);
        }
        let order_by = match &q.order_by {
            None => None,
            Some((name, asc)) => {
                let col = table.column(name)?;
                if col.sensitive {
                    match mode {
                        QueryMode::Software | QueryMode::Adaptive => {
                            self.require(col, Scheme::Ore)?
                        }
                        QueryMode::StaticTee => self.require(col, Scheme::Rnd)?,
                    }
                }
                Some((col.anon_name.clone(), *asc))
            }
        };
        Ok(RewrittenQuery {
            anon_table: table.anon_name.clone(),
            mode,
            projection,
            predicates,
            order_by,
            limit: q.limit,
        })
    }

    /// Rewrites a plaintext statement for the requested execution mode. No
    /// plaintext name or sensitive literal survives into the output.
    pub fn rewrite(
        &mut self,
        stmt: &Statement,
        mode: QueryMode,
    ) -> Result<RewrittenStatement, SchemaError> {
        match stmt {
            Statement::Select(q) => Ok(RewrittenStatement::Select(self.rewrite_select(q, mode)?)),
            Statement::Insert { table, values } => Ok(RewrittenStatement::Insert {
                anon_table: self.catalog.table(table)?.anon_name.clone(),
                row: self.encrypt_row(table, values)?,
            }),
            Statement::Update {
                table,
                sets,
                predicates,
            } => {
                let spec = self.catalog.table(table)?.clone();
                let mut out_sets = Vec::new();
                let mut needs_round_trip = false;
                for set in sets {
                    match set {
                        UpdateSet::Assign { column, value } => {
                            out_sets.push(self.reencrypt_column(table, column, value)?);
                        }
                        UpdateSet::AddAssign { column, delta } => {
                            let col = spec.column(column)?.clone();
                            if col.schemes.is_empty() {
                                // Plaintext column: the server adds in the
                                // clear; no ciphertext copies to refresh.
                                if !col.data_kind.is_numeric() {
                                    return Err(SchemaError::TypeMismatch {
                                        column: col.plain_name.clone(),
                                        expected: "numeric",
                                        found: "text",
                                    });
                                }
                                delta.to_scaled_int(&col.data_kind, &col.plain_name)?;
                                out_sets.push(RewrittenAssignment::AddPlain {
                                    anon_column: col.anon_name.clone(),
                                    delta: delta.clone(),
                                });
                                continue;
                            }
                            let he = |me: &mut Self| -> Result<AheCipher, SchemaError> {
                                me.require(&col, Scheme::Ahe)?;
                                match me.encrypt_field(&col, delta, Scheme::Ahe)? {
                                    EncryptedValue::Ahe(c) => Ok(c),
                                    _ => unreachable!(),
                                }
                            };
                            let tee = |me: &mut Self| -> Result<RndCipher, SchemaError> {
                                me.require(&col, Scheme::Rnd)?;
                                match me.encrypt_field(&col, delta, Scheme::Rnd)? {
                                    EncryptedValue::Rnd(c) => Ok(c),
                                    _ => unreachable!(),
                                }
                            };
                            let assignment = match mode {
                                QueryMode::Software => RewrittenAssignment::AddHe {
                                    anon_column: col.anon_name.clone(),
                                    delta: he(self)?,
                                },
                                QueryMode::StaticTee => RewrittenAssignment::AddTee {
                                    anon_column: col.anon_name.clone(),
                                    delta: tee(self)?,
                                },
                                QueryMode::Adaptive => RewrittenAssignment::AddBoth {
                                    anon_column: col.anon_name.clone(),
                                    delta_he: he(self)?,
                                    delta_rnd: tee(self)?,
                                },
                            };
                            // A homomorphic add leaves any sibling copies of
                            // the column stale; re-encrypting them needs a
                            // second client interaction.
                            if mode != QueryMode::StaticTee && col.schemes.len() > 1 {
                                needs_round_trip = true;
                            }
                            out_sets.push(assignment);
                        }
                    }
                }
                let mut out_preds = Vec::new();
                for p in predicates {
                    let col = spec.column(&p.column)?.clone();
                    out_preds.push(self.rewrite_predicate(&col, p.op, &p.literal, mode)?);
                }
                Ok(RewrittenStatement::Update {
                    anon_table: spec.anon_name.clone(),
                    mode,
                    sets: out_sets,
                    predicates: out_preds,
                    needs_client_round_trip: needs_round_trip,
                })
            }
        }
    }

    /// Decrypts one returned field of a known column back to a value.
    pub fn decrypt_value(
        &mut self,
        table_name: &str,
        anon_column: &str,
        field: &EncryptedValue,
    ) -> Result<Value, SchemaError> {
        let col = self
            .catalog
            .table(table_name)?
            .column_by_anon(anon_column)
            .ok_or_else(|| SchemaError::UnknownColumn(anon_column.to_string()))?
            .clone();
        let from_bytes = |bytes: Vec<u8>| -> Result<Value, SchemaError> {
            if col.data_kind.is_numeric() {
                let raw: [u8; 8] = bytes.as_slice().try_into().map_err(|_| {
                    SchemaError::Unsupported {
                        column: col.plain_name.clone(),
                        reason: "numeric payload must be 8 bytes",
                    }
                })?;
                Ok(Value::from_scaled_int(
                    u64::from_le_bytes(raw) as i64,
                    &col.data_kind,
                ))
            } else {
                Ok(Value::Text(String::from_utf8(bytes).map_err(|_| {
                    SchemaError::Unsupported {
                        column: col.plain_name.clone(),
                        reason: "text payload is not UTF-8",
                    }
                })?))
            }
        };
        match field {
            EncryptedValue::Plain(v) => Ok(v.clone()),
            EncryptedValue::Det(c) => {
                let key = self.key(&col, Scheme::Det)?;
                from_bytes(det_decrypt(c, &key)?)
            }
            EncryptedValue::Rnd(c) => {
                let key = self.key(&col, Scheme::Rnd)?;
                from_bytes(rnd_decrypt(c, &key)?)
            }
            EncryptedValue::Ahe(c) => {
                let key = self.key(&col, Scheme::Ahe)?;
                Ok(Value::from_scaled_int(
                    sahe_decrypt(c, &key)? as i64,
                    &col.data_kind,
                ))
            }
            EncryptedValue::Mhe(c) => {
                let key = self.key(&col, Scheme::Mhe)?;
                Ok(Value::from_scaled_int(
                    smhe_decrypt(c, &key)? as i64,
                    &col.data_kind,
                ))
            }
            EncryptedValue::Ore(c) => {
                if !col.data_kind.is_numeric() {
                    return Err(SchemaError::Unsupported {
                        column: col.plain_name.clone(),
                        reason: "text order keys are not invertible",
                    });
                }
                let key = self.key(&col, Scheme::Ore)?;
                Ok(Value::from_scaled_int(
                    ore_decrypt(c, &key, OreWidth::W64)? as i64,
                    &col.data_kind,
                ))
            }
        }
    }

    /// Decrypts a result set: one field per rewritten projection per row.
    pub fn decrypt_results(
        &mut self,
        table_name: &str,
        query: &RewrittenQuery,
        rows: &[Vec<EncryptedValue>],
    ) -> Result<Vec<Vec<Value>>, SchemaError> {
        let mut out = Vec::with_capacity(rows.len());
        for row in rows {
            if row.len() != query.projection.len() {
                return Err(SchemaError::Unsupported {
                    column: table_name.to_string(),
                    reason: "result width does not match projection",
                });
            }
            let mut plain_row = Vec::with_capacity(row.len());
            for (field, proj) in row.iter().zip(&query.projection) {
                plain_row.push(self.decrypt_value(table_name, &proj.anon_column, field)?);
            }
            out.push(plain_row);
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schema::ast::Projection;

    fn session() -> ClientSession {
        let mut rng = StdRng::seed_from_u64(77);
        let master = MasterKey::generate(&mut rng);
        let mut s = ClientSession::new(master, 77);
        s.register_table(
            "orders",
            ProvisionMode::Adaptive,
            &[
                ColumnDef::new("id", DataKind::Int, false),
                ColumnDef::new("total", DataKind::Decimal { scale: 2 }, true),
                ColumnDef::new("note", DataKind::Text, true),
            ],
        )
        .unwrap();
        s
    }

    fn sample_values() -> Vec<Value> {
        vec![
            Value::Int(7),
            Value::Decimal(123.45),
            Value::Text("hello".into()),
        ]
    }

    #[test]
    fn encrypt_row_materializes_one_slot_per_scheme() {
        let mut s = session();
        let row = s.encrypt_row("orders", &sample_values()).unwrap();
        let layout = table_layout(s.catalog.table("orders").unwrap());
        // 1 plain + 5 numeric schemes + 3 text schemes.
        assert_eq!(layout.len(), 9);
        assert_eq!(row.fields.len(), 9);
        for (slot, field) in layout.iter().zip(&row.fields) {
            assert_eq!(slot.scheme, field.scheme());
        }
    }

    #[test]
    fn row_fields_decrypt_back_to_inputs() {
        let mut s = session();
        let values = sample_values();
        let row = s.encrypt_row("orders", &values).unwrap();
        let layout = table_layout(s.catalog.table("orders").unwrap());
        for (slot, field) in layout.iter().zip(&row.fields) {
            if matches!(field, EncryptedValue::Ore(_))
                && s.catalog
                    .table("orders")
                    .unwrap()
                    .column_by_anon(&slot.anon_column)
                    .unwrap()
                    .data_kind
                    == DataKind::Text
            {
                continue; // text order keys are one-way
            }
            let got = s
                .decrypt_value("orders", &slot.anon_column, field)
                .unwrap();
            let idx = s
                .catalog
                .table("orders")
                .unwrap()
                .columns
                .iter()
                .position(|c| c.anon_name == slot.anon_column)
                .unwrap();
            assert_eq!(got, values[idx], "slot {slot:?}");
        }
    }

    #[test]
    fn field_wire_round_trip() {
        let mut s = session();
        let row = s.encrypt_row("orders", &sample_values()).unwrap();
        for field in &row.fields {
            let bytes = field.to_bytes();
            let back = EncryptedValue::from_bytes(&bytes).unwrap();
            assert_eq!(back.to_bytes(), bytes);
        }
    }

    #[test]
    fn negative_sensitive_values_are_rejected() {
        let mut s = session();
        let err = s
            .encrypt_row(
                "orders",
                &[
                    Value::Int(1),
                    Value::Decimal(-5.0),
                    Value::Text("x".into()),
                ],
            )
            .unwrap_err();
        assert!(matches!(err, SchemaError::NegativeSensitive { .. }));
    }

    #[test]
    fn rewritten_query_leaks_no_plain_names_or_literals() {
        let mut s = session();
        let q = SelectQuery::from("orders")
            .column("total")
            .filter("total", PredOp::Gt, Value::Decimal(55.5))
            .order_by("total", true);
        let rewritten = s.rewrite(&Statement::Select(q), QueryMode::Software).unwrap();
        let debug = format!("{rewritten:?}");
        assert!(!debug.contains("orders"));
        assert!(!debug.contains("total"));
        assert!(!debug.contains("55.5"));
        assert!(!debug.contains("5550"));
    }

    #[test]
    fn adaptive_predicates_carry_both_encodings() {
        let mut s = session();
        let q = SelectQuery::from("orders").column("id").filter(
            "total",
            PredOp::Gt,
            Value::Decimal(10.0),
        );
        let rewritten = s.rewrite(&Statement::Select(q), QueryMode::Adaptive).unwrap();
        let RewrittenStatement::Select(q) = rewritten else {
            panic!("expected select");
        };
        let p = &q.predicates[0];
        assert_eq!(p.capability, Capability::AdaptiveCompare);
        assert!(p.ore.is_some());
        assert!(p.rnd.is_some());
        assert!(p.plain.is_none());
    }

    #[test]
    fn equality_prefers_det_and_range_uses_ore() {
        let mut s = session();
        let q = SelectQuery::from("orders")
            .column("id")
            .filter("note", PredOp::Eq, Value::Text("hello".into()))
            .filter("total", PredOp::Lt, Value::Decimal(9.99));
        let RewrittenStatement::Select(q) =
            s.rewrite(&Statement::Select(q), QueryMode::Software).unwrap()
        else {
            panic!("expected select");
        };
        assert_eq!(q.predicates[0].capability, Capability::DetEqual);
        assert!(q.predicates[0].det.is_some());
        assert_eq!(q.predicates[1].capability, Capability::OreCompare);
    }

    #[test]
    fn additive_update_flags_the_client_round_trip() {
        let mut s = session();
        let stmt = Statement::Update {
            table: "orders".into(),
            sets: vec![UpdateSet::AddAssign {
                column: "total".into(),
                delta: Value::Decimal(1.0),
            }],
            predicates: vec![],
        };
        let RewrittenStatement::Update {
            needs_client_round_trip,
            sets,
            ..
        } = s.rewrite(&stmt, QueryMode::Software).unwrap()
        else {
            panic!("expected update");
        };
        assert!(needs_client_round_trip);
        assert!(matches!(sets[0], RewrittenAssignment::AddHe { .. }));

        // A TEE-only column has a single copy, so no round trip.
        let mut rng = StdRng::seed_from_u64(5);
        let master = MasterKey::generate(&mut rng);
        let mut tee = ClientSession::new(master, 5);
        tee.register_table(
            "t",
            ProvisionMode::Tee,
            &[ColumnDef::new("v", DataKind::Int, true)],
        )
        .unwrap();
        let stmt = Statement::Update {
            table: "t".into(),
            sets: vec![UpdateSet::AddAssign {
                column: "v".into(),
                delta: Value::Int(3),
            }],
            predicates: vec![],
        };
        let RewrittenStatement::Update {
            needs_client_round_trip,
            ..
        } = tee.rewrite(&stmt, QueryMode::StaticTee).unwrap()
        else {
            panic!("expected update");
        };
        assert!(!needs_client_round_trip);
    }

    #[test]
    fn missing_scheme_is_a_hard_error() {
        let mut rng = StdRng::seed_from_u64(9);
        let master = MasterKey::generate(&mut rng);
        let mut s = ClientSession::new(master, 9);
        s.register_table(
            "t",
            ProvisionMode::Tee,
            &[ColumnDef::new("v", DataKind::Int, true)],
        )
        .unwrap();
        let q = SelectQuery::from("t").column("v").filter(
            "v",
            PredOp::Gt,
            Value::Int(1),
        );
        let err = s.rewrite(&Statement::Select(q), QueryMode::Software).unwrap_err();
        assert!(matches!(err, SchemaError::MissingScheme { .. }));
    }

    #[test]
    fn unknown_projection_column_fails_closed() {
        let mut s = session();
        let q = SelectQuery {
            table: "orders".into(),
            projection: vec![Projection::Column("ghost".into())],
            predicates: vec![],
            order_by: None,
            limit: None,
        };
        assert!(matches!(
            s.rewrite(&Statement::Select(q), QueryMode::Software),
            Err(SchemaError::UnknownColumn(_))
        ));
    }
}
