//! Query plans and their textual form.
//!
//! ```text
//! plan    := scan | filter | agg | join | select
//! scan    := "SCAN" colref
//! filter  := "FILTER" "col=" colref cmp int "(" plan ")"
//! agg     := "AGG" ("sum" | "count" | "min" | "max") "(" plan ")"
//! join    := "JOIN" "(" plan ")" "(" plan ")"
//! select  := "SELECT" colref ("," colref)* "(" plan ")"
//! colref  := "T" int "." "C" int
//! cmp     := "lt" | "le" | "gt" | "ge" | "eq" | "ne"
//! ```
//!
//! Example: `AGG sum (FILTER col=T0.C2 lt 25 (SCAN T0.C2))`.
//!
//! Row semantics: SCAN yields the live rows of a table carrying the scanned
//! column's value. FILTER keeps rows of the same table whose filter column
//! satisfies the comparison. SELECT projects columns of the same table; its
//! first column becomes the carried value. JOIN pairs rows with equal
//! carried values and yields one row `[value]` per pair. AGG folds the
//! carried values and may only appear at the root.

use std::fmt;

use crate::storage::{ColumnRef, Value};

use super::AnalyticsError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CmpOp {
    Lt,
    Le,
    Gt,
    Ge,
    Eq,
    Ne,
}

impl CmpOp {
    pub const ALL: [CmpOp; 6] = [CmpOp::Lt, CmpOp::Le, CmpOp::Gt, CmpOp::Ge, CmpOp::Eq, CmpOp::Ne];

    pub fn eval(self, v: Value, k: Value) -> bool {
        match self {
            CmpOp::Lt => v < k,
            CmpOp::Le => v <= k,
            CmpOp::Gt => v > k,
            CmpOp::Ge => v >= k,
            CmpOp::Eq => v == k,
            CmpOp::Ne => v != k,
        }
    }

    fn name(self) -> &'static str {
        match self {
            CmpOp::Lt => "lt",
            CmpOp::Le => "le",
            CmpOp::Gt => "gt",
            CmpOp::Ge => "ge",
            CmpOp::Eq => "eq",
            CmpOp::Ne => "ne",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AggFn {
    Sum,
    Count,
    Min,
    Max,
}

impl AggFn {
    pub const ALL: [AggFn; 4] = [AggFn::Sum, AggFn::Count, AggFn::Min, AggFn::Max];

    fn name(self) -> &'static str {
        match self {
            AggFn::Sum => "sum",
            AggFn::Count => "count",
            AggFn::Min => "min",
            AggFn::Max => "max",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Predicate {
    pub column: ColumnRef,
    pub op: CmpOp,
    pub constant: Value,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum QueryPlan {
    Scan(ColumnRef),
    Filter { pred: Predicate, input: Box<QueryPlan> },
    Aggregate { func: AggFn, input: Box<QueryPlan> },
    HashJoin { left: Box<QueryPlan>, right: Box<QueryPlan> },
    Select { columns: Vec<ColumnRef>, input: Box<QueryPlan> },
}

impl QueryPlan {
    /// Table whose rows this plan yields, if it is a single-table pipeline.
    pub fn table(&self) -> Option<u16> {
        match self {
            QueryPlan::Scan(c) => Some(c.table_id),
            QueryPlan::Filter { input, .. } | QueryPlan::Select { input, .. } => input.table(),
            QueryPlan::Aggregate { .. } | QueryPlan::HashJoin { .. } => None,
        }
    }

    /// Every column the plan reads, deduplicated, in first-use order.
    pub fn columns(&self) -> Vec<ColumnRef> {
        let mut out = Vec::new();
        self.collect_columns(&mut out);
        out
    }

    fn collect_columns(&self, out: &mut Vec<ColumnRef>) {
        let mut add = |c: ColumnRef| {
            if !out.contains(&c) {
                out.push(c);
            }
        };
        match self {
            QueryPlan::Scan(c) => add(*c),
            QueryPlan::Filter { pred, input } => {
                input.collect_columns(out);
                if !out.contains(&pred.column) {
                    out.push(pred.column);
                }
            }
            QueryPlan::Select { columns, input } => {
                input.collect_columns(out);
                for c in columns {
                    if !out.contains(c) {
                        out.push(*c);
                    }
                }
            }
            QueryPlan::Aggregate { input, .. } => input.collect_columns(out),
            QueryPlan::HashJoin { left, right } => {
                left.collect_columns(out);
                right.collect_columns(out);
            }
        }
    }

    /// Checks the structural rules listed in the module docs.
    pub fn validate(&self) -> Result<(), AnalyticsError> {
        self.validate_at(true)
    }

    fn validate_at(&self, root: bool) -> Result<(), AnalyticsError> {
        let bad = |m: &str| Err(AnalyticsError::InvalidPlan(m.to_string()));
        match self {
            QueryPlan::Scan(_) => Ok(()),
            QueryPlan::Filter { pred, input } => {
                input.validate_at(false)?;
                match input.table() {
                    Some(t) if t == pred.column.table_id => Ok(()),
                    Some(_) => bad("FILTER column must belong to the input table"),
                    None => bad("FILTER input must be a single-table pipeline"),
                }
            }
            QueryPlan::Select { columns, input } => {
                input.validate_at(false)?;
                if columns.is_empty() {
                    return bad("SELECT needs at least one column");
                }
                match input.table() {
                    Some(t) if columns.iter().all(|c| c.table_id == t) => Ok(()),
                    Some(_) => bad("SELECT columns must belong to the input table"),
                    None => bad("SELECT input must be a single-table pipeline"),
                }
            }
            QueryPlan::Aggregate { input, .. } => {
                if !root {
                    return bad("AGG may only appear at the root");
                }
                input.validate_at(false)
            }
            QueryPlan::HashJoin { left, right } => {
                left.validate_at(false)?;
                right.validate_at(false)
            }
        }
    }

    pub fn parse(text: &str) -> Result<Self, AnalyticsError> {
        let tokens = tokenize(text);
        let mut p = Parser { tokens, pos: 0 };
        let plan = p.plan()?;
        if p.pos != p.tokens.len() {
            return Err(p.error("trailing input"));
        }
        plan.validate()?;
        Ok(plan)
    }
}

impl fmt::Display for QueryPlan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            QueryPlan::Scan(c) => write!(f, "SCAN {c}"),
            QueryPlan::Filter { pred, input } => {
                write!(f, "FILTER col={} {} {} ({input})", pred.column, pred.op.name(), pred.constant)
            }
            QueryPlan::Aggregate { func, input } => write!(f, "AGG {} ({input})", func.name()),
            QueryPlan::HashJoin { left, right } => write!(f, "JOIN ({left}) ({right})"),
            QueryPlan::Select { columns, input } => {
                let cols: Vec<String> = columns.iter().map(ToString::to_string).collect();
                write!(f, "SELECT {} ({input})", cols.join(","))
            }
        }
    }
}

fn tokenize(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut cur = String::new();
    for ch in text.chars() {
        if ch.is_whitespace() || matches!(ch, '(' | ')' | ',') {
            if !cur.is_empty() {
                out.push(std::mem::take(&mut cur));
            }
            if !ch.is_whitespace() {
                out.push(ch.to_string());
            }
        } else {
            cur.push(ch);
        }
    }
    if !cur.is_empty() {
        out.push(cur);
    }
    out
}

struct Parser {
    tokens: Vec<String>,
    pos: usize,
}

impl Parser {
    fn error(&self, msg: &str) -> AnalyticsError {
        AnalyticsError::Parse { token: self.pos, message: msg.to_string() }
    }

    fn next(&mut self) -> Result<String, AnalyticsError> {
        let t = self.tokens.get(self.pos).cloned().ok_or_else(|| self.error("unexpected end of input"))?;
        self.pos += 1;
        Ok(t)
    }

    fn expect(&mut self, want: &str) -> Result<(), AnalyticsError> {
        let got = self.next()?;
        if got == want {
            Ok(())
        } else {
            self.pos -= 1;
            Err(self.error(&format!("expected `{want}`, found `{got}`")))
        }
    }

    fn nested(&mut self) -> Result<QueryPlan, AnalyticsError> {
        self.expect("(")?;
        let p = self.plan()?;
        self.expect(")")?;
        Ok(p)
    }

    fn colref(&mut self, tok: &str) -> Result<ColumnRef, AnalyticsError> {
        let parsed = tok
            .strip_prefix('T')
            .and_then(|s| s.split_once(".C"))
            .and_then(|(t, c)| Some(ColumnRef::new(t.parse().ok()?, c.parse().ok()?)));
        parsed.ok_or_else(|| self.error(&format!("bad column reference `{tok}`")))
    }

    fn plan(&mut self) -> Result<QueryPlan, AnalyticsError> {
        let kw = self.next()?;
        match kw.as_str() {
            "SCAN" => {
                let t = self.next()?;
                Ok(QueryPlan::Scan(self.colref(&t)?))
            }
            "FILTER" => {
                let t = self.next()?;
                let c = t.strip_prefix("col=").ok_or_else(|| self.error("expected col=<column>"))?;
                let column = self.colref(c)?;
                let op_tok = self.next()?;
                let op = CmpOp::ALL.into_iter().find(|o| o.name() == op_tok).ok_or_else(|| self.error("bad comparison"))?;
                let k = self.next()?;
                let constant = k.parse().map_err(|_| self.error("bad integer constant"))?;
                let input = self.nested()?;
                Ok(QueryPlan::Filter { pred: Predicate { column, op, constant }, input: Box::new(input) })
            }
            "AGG" => {
                let f = self.next()?;
                let func = AggFn::ALL.into_iter().find(|a| a.name() == f).ok_or_else(|| self.error("bad aggregate"))?;
                Ok(QueryPlan::Aggregate { func, input: Box::new(self.nested()?) })
            }
            "JOIN" => {
                let left = self.nested()?;
                let right = self.nested()?;
                Ok(QueryPlan::HashJoin { left: Box::new(left), right: Box::new(right) })
            }
            "SELECT" => {
                let mut columns = Vec::new();
                loop {
                    let t = self.next()?;
                    columns.push(self.colref(&t)?);
                    if self.tokens.get(self.pos).map(String::as_str) == Some(",") {
                        self.pos += 1;
                    } else {
                        break;
                    }
                }
                Ok(QueryPlan::Select { columns, input: Box::new(self.nested()?) })
            }
            other => {
                self.pos -= 1;
                Err(self.error(&format!("unknown operator `{other}`")))
            }
        }
    }
}
