//! Minimal single-table statement AST with a builder-style API.
//!
//! Covers the query shapes the workloads need: SELECT with AND-conjoined
//! comparison predicates, ORDER BY one column, MIN/MAX/SUM aggregates and
//! LIMIT; INSERT of full rows; UPDATE with plain assignment or additive
//! adjustment of one or more columns.

use super::value::Value;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PredOp {
    Gt,
    Ge,
    Lt,
    Le,
    Eq,
}

impl PredOp {
    pub fn eval(self, ord: std::cmp::Ordering) -> bool {
        use std::cmp::Ordering::*;
        match self {
            PredOp::Gt => ord == Greater,
            PredOp::Ge => ord != Less,
            PredOp::Lt => ord == Less,
            PredOp::Le => ord != Greater,
            PredOp::Eq => ord == Equal,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AggFn {
    Min,
    Max,
    Sum,
}

#[derive(Debug, Clone)]
pub enum Projection {
    Column(String),
    Aggregate(AggFn, String),
}

#[derive(Debug, Clone)]
pub struct Predicate {
    pub column: String,
    pub op: PredOp,
    pub literal: Value,
}

#[derive(Debug, Clone)]
pub struct SelectQuery {
    pub table: String,
    pub projection: Vec<Projection>,
    pub predicates: Vec<Predicate>,
    pub order_by: Option<(String, bool)>,
    pub limit: Option<usize>,
}

impl SelectQuery {
    pub fn from(table: &str) -> SelectQuery {
        SelectQuery {
            table: table.to_string(),
            projection: Vec::new(),
            predicates: Vec::new(),
            order_by: None,
            limit: None,
        }
    }

    pub fn column(mut self, name: &str) -> Self {
        self.projection.push(Projection::Column(name.to_string()));
        self
    }

    pub fn aggregate(mut self, f: AggFn, name: &str) -> Self {
        self.projection.push(Projection::Aggregate(f, name.to_string()));
        self
    }

    pub fn filter(mut self, column: &str, op: PredOp, literal: Value) -> Self {
        self.predicates.push(Predicate {
            column: column.to_string(),
            op,
            literal,
        });
        self
    }

    pub fn order_by(mut self, column: &str, ascending: bool) -> Self {
        self.order_by = Some((column.to_string(), ascending));
        self
    }

    pub fn limit(mut self, n: usize) -> Self {
        self.limit = Some(n);
        self
    }
}

/// One column change inside an UPDATE.
#[derive(Debug, Clone)]
pub enum UpdateSet {
    /// `col = literal`
    Assign { column: String, value: Value },
    /// `col = col + literal` — additive adjustment.
    AddAssign { column: String, delta: Value },
}

#[derive(Debug, Clone)]
pub enum Statement {
    Select(SelectQuery),
    Insert {
        table: String,
        /// Values aligned with the registered column order.
        values: Vec<Value>,
    },
    Update {
        table: String,
        sets: Vec<UpdateSet>,
        predicates: Vec<Predicate>,
    },
}

impl Statement {
    pub fn table(&self) -> &str {
        match self {
            Statement::Select(q) => &q.table,
            Statement::Insert { table, .. } => table,
            Statement::Update { table, .. } => table,
        }
    }
}
