//! Parser for the supported SQL subset.
//!
//! `SELECT attrs|aggregates FROM table [alias], ... [WHERE conjunction]`
//! where each conjunct is `attr op literal` (op in =, !=, <, >, <=, >=) or
//! an `attr = attr` equi-join. Attribute references resolve against the
//! catalog; self-joins need aliases. [`WorkloadQuery`]'s `Display` prints a
//! canonical form that parses back to the same query.

use std::collections::BTreeSet;
use std::fmt;

use crate::catalog::{Catalog, JoinCount, TableId};
use crate::error::{Error, Result};
use crate::value::{Value, ValueType};

pub use crate::value::CmpOp;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AggFunc {
    Count,
    Sum,
    Avg,
    Min,
    Max,
}

impl AggFunc {
    pub fn name(&self) -> &'static str {
        match self {
            AggFunc::Count => "COUNT",
            AggFunc::Sum => "SUM",
            AggFunc::Avg => "AVG",
            AggFunc::Min => "MIN",
            AggFunc::Max => "MAX",
        }
    }
}

/// One table occurrence in FROM; self-joins appear once per instance.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TableInstance {
    pub table_id: TableId,
    pub table: String,
    pub alias: String,
}

/// A resolved attribute reference.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AttrRef {
    /// Index into `table_instances`.
    pub instance: usize,
    /// Column index within the instance's schema.
    pub column: usize,
    pub name: String,
}

#[derive(Debug, Clone, PartialEq)]
pub enum SelectItem {
    Attr(AttrRef),
    /// Aggregate over a column, or over rows for `COUNT(*)` (`None`).
    Aggregate(AggFunc, Option<AttrRef>),
}

/// `attr op literal` conjunct.
#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub attr: AttrRef,
    pub op: CmpOp,
    pub literal: Value,
}

/// `left = right` join conjunct across two instances.
#[derive(Debug, Clone, PartialEq)]
pub struct EquiJoin {
    pub left: AttrRef,
    pub right: AttrRef,
}

/// A parsed workload query.
#[derive(Debug, Clone)]
pub struct WorkloadQuery {
    pub q_id: u64,
    pub sql_text: String,
    pub select: Vec<SelectItem>,
    pub table_instances: Vec<TableInstance>,
    pub predicates: Vec<Comparison>,
    pub equi_joins: Vec<EquiJoin>,
    pub frequency: u64,
}

impl PartialEq for WorkloadQuery {
    /// Equality over query semantics; the original text is ignored so that
    /// `parse(print(q)) == q`.
    fn eq(&self, other: &Self) -> bool {
        self.q_id == other.q_id
            && self.frequency == other.frequency
            && self.select == other.select
            && self.table_instances == other.table_instances
            && self.predicates == other.predicates
            && self.equi_joins == other.equi_joins
    }
}

impl WorkloadQuery {
    pub fn join_count(&self) -> JoinCount {
        JoinCount(self.table_instances.len() - 1)
    }

    /// Complex queries have two or more table instances.
    pub fn is_complex(&self) -> bool {
        self.table_instances.len() >= 2
    }

    /// All `(table, attribute)` pairs the query touches: SELECT, WHERE, and
    /// join attributes. `COUNT(*)` alone touches none.
    pub fn accessed_attributes(&self, _catalog: &Catalog) -> BTreeSet<(String, String)> {
        let mut out = BTreeSet::new();
        let mut add = |r: &AttrRef| {
            out.insert((self.table_instances[r.instance].table.clone(), r.name.clone()));
        };
        for item in &self.select {
            match item {
                SelectItem::Attr(r) => add(r),
                SelectItem::Aggregate(_, Some(r)) => add(r),
                SelectItem::Aggregate(_, None) => {}
            }
        }
        for p in &self.predicates {
            add(&p.attr);
        }
        for j in &self.equi_joins {
            add(&j.left);
            add(&j.right);
        }
        out
    }

    /// Column indices the query needs from one table instance.
    pub fn instance_columns(&self, instance: usize) -> BTreeSet<usize> {
        let mut cols = BTreeSet::new();
        let mut add = |r: &AttrRef| {
            if r.instance == instance {
                cols.insert(r.column);
            }
        };
        for item in &self.select {
            match item {
                SelectItem::Attr(r) => add(r),
                SelectItem::Aggregate(_, Some(r)) => add(r),
                SelectItem::Aggregate(_, None) => {}
            }
        }
        for p in &self.predicates {
            add(&p.attr);
        }
        for j in &self.equi_joins {
            add(&j.left);
            add(&j.right);
        }
        cols
    }

    /// Aggregate functions in the projection, if this is an aggregate query.
    pub fn aggregates(&self) -> Option<Vec<AggFunc>> {
        let aggs: Vec<AggFunc> = self
            .select
            .iter()
            .filter_map(|i| match i {
                SelectItem::Aggregate(f, _) => Some(*f),
                _ => None,
            })
            .collect();
        if aggs.is_empty() {
            None
        } else {
            Some(aggs)
        }
    }

    /// Display names of the output columns.
    pub fn output_names(&self) -> Vec<String> {
        self.select
            .iter()
            .map(|item| match item {
                SelectItem::Attr(r) => {
                    format!("{}.{}", self.table_instances[r.instance].alias, r.name)
                }
                SelectItem::Aggregate(f, None) => format!("{}(*)", f.name()),
                SelectItem::Aggregate(f, Some(r)) => format!(
                    "{}({}.{})",
                    f.name(),
                    self.table_instances[r.instance].alias,
                    r.name
                ),
            })
            .collect()
    }
}

impl fmt::Display for WorkloadQuery {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let attr = |r: &AttrRef| format!("{}.{}", self.table_instances[r.instance].alias, r.name);
        write!(f, "SELECT ")?;
        for (i, item) in self.select.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            match item {
                SelectItem::Attr(r) => write!(f, "{}", attr(r))?,
                SelectItem::Aggregate(func, None) => write!(f, "{}(*)", func.name())?,
                SelectItem::Aggregate(func, Some(r)) => {
                    write!(f, "{}({})", func.name(), attr(r))?
                }
            }
        }
        write!(f, " FROM ")?;
        for (i, t) in self.table_instances.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{} {}", t.table, t.alias)?;
        }
        let mut first = true;
        let mut sep = |f: &mut fmt::Formatter<'_>| -> fmt::Result {
            if first {
                first = false;
                write!(f, " WHERE ")
            } else {
                write!(f, " AND ")
            }
        };
        for p in &self.predicates {
            sep(f)?;
            write!(f, "{} {} {}", attr(&p.attr), p.op.symbol(), p.literal)?;
        }
        for j in &self.equi_joins {
            sep(f)?;
            write!(f, "{} = {}", attr(&j.left), attr(&j.right))?;
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Lexer
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Int(i64),
    Float(f64),
    Str(String),
    Comma,
    Dot,
    LParen,
    RParen,
    Star,
    Minus,
    Op(CmpOp),
}

fn lex(sql: &str) -> Result<Vec<(Tok, usize)>> {
    let b = sql.as_bytes();
    let mut toks = Vec::new();
    let mut i = 0;
    while i < b.len() {
        let c = b[i];
        let pos = i;
        match c {
            b' ' | b'\t' | b'\r' | b'\n' => {
                i += 1;
                continue;
            }
            b',' => {
                toks.push((Tok::Comma, pos));
                i += 1;
            }
            b'.' => {
                toks.push((Tok::Dot, pos));
                i += 1;
            }
            b'(' => {
                toks.push((Tok::LParen, pos));
                i += 1;
            }
            b')' => {
                toks.push((Tok::RParen, pos));
                i += 1;
            }
            b'*' => {
                toks.push((Tok::Star, pos));
                i += 1;
            }
            b'-' => {
                toks.push((Tok::Minus, pos));
                i += 1;
            }
            b'=' => {
                toks.push((Tok::Op(CmpOp::Eq), pos));
                i += 1;
            }
            b'!' => {
                if b.get(i + 1) == Some(&b'=') {
                    toks.push((Tok::Op(CmpOp::Ne), pos));
                    i += 2;
                } else {
                    return Err(Error::Parse { msg: "expected '=' after '!'".into(), pos });
                }
            }
            b'<' => {
                if b.get(i + 1) == Some(&b'=') {
                    toks.push((Tok::Op(CmpOp::Le), pos));
                    i += 2;
                } else {
                    toks.push((Tok::Op(CmpOp::Lt), pos));
                    i += 1;
                }
            }
            b'>' => {
                if b.get(i + 1) == Some(&b'=') {
                    toks.push((Tok::Op(CmpOp::Ge), pos));
                    i += 2;
                } else {
                    toks.push((Tok::Op(CmpOp::Gt), pos));
                    i += 1;
                }
            }
            b'\'' => {
                // Splitting only at ASCII quote bytes keeps the collected
                // bytes valid UTF-8.
                let mut s = Vec::new();
                let mut j = i + 1;
                loop {
                    match b.get(j) {
                        Some(b'\'') if b.get(j + 1) == Some(&b'\'') => {
                            s.push(b'\'');
                            j += 2;
                        }
                        Some(b'\'') => {
                            j += 1;
                            break;
                        }
                        Some(&ch) => {
                            s.push(ch);
                            j += 1;
                        }
                        None => {
                            return Err(Error::Parse {
                                msg: "unterminated string literal".into(),
                                pos,
                            })
                        }
                    }
                }
                toks.push((Tok::Str(String::from_utf8(s).expect("input was valid UTF-8")), pos));
                i = j;
            }
            b'0'..=b'9' => {
                let mut j = i;
                let mut is_float = false;
                while j < b.len() {
                    match b[j] {
                        b'0'..=b'9' => j += 1,
                        b'.' | b'e' | b'E' => {
                            is_float = true;
                            j += 1;
                            if (b[j - 1] == b'e' || b[j - 1] == b'E')
                                && matches!(b.get(j), Some(b'+') | Some(b'-'))
                            {
                                j += 1;
                            }
                        }
                        _ => break,
                    }
                }
                let text = &sql[i..j];
                let tok = if is_float {
                    Tok::Float(text.parse().map_err(|e| Error::Parse {
                        msg: format!("bad number '{text}': {e}"),
                        pos,
                    })?)
                } else {
                    Tok::Int(text.parse().map_err(|e| Error::Parse {
                        msg: format!("bad number '{text}': {e}"),
                        pos,
                    })?)
                };
                toks.push((tok, pos));
                i = j;
            }
            b'a'..=b'z' | b'A'..=b'Z' | b'_' => {
                let mut j = i;
                while j < b.len()
                    && (b[j].is_ascii_alphanumeric() || b[j] == b'_')
                {
                    j += 1;
                }
                toks.push((Tok::Ident(sql[i..j].to_string()), pos));
                i = j;
            }
            other => {
                return Err(Error::Parse {
                    msg: format!("unexpected character '{}'", other as char),
                    pos,
                })
            }
        }
    }
    Ok(toks)
}

// ---------------------------------------------------------------------------
// Parser
// ---------------------------------------------------------------------------

struct RawAttr {
    qualifier: Option<String>,
    name: String,
    pos: usize,
}

enum RawItem {
    Attr(RawAttr),
    Aggregate(AggFunc, Option<RawAttr>),
}

enum RawConjunct {
    Cmp { attr: RawAttr, op: CmpOp, literal: Value },
    Join { left: RawAttr, right: RawAttr },
}

struct Parser<'a> {
    toks: Vec<(Tok, usize)>,
    i: usize,
    catalog: &'a Catalog,
    end: usize,
}

pub fn parse(catalog: &Catalog, sql: &str, q_id: u64, frequency: u64) -> Result<WorkloadQuery> {
    let toks = lex(sql)?;
    let mut p = Parser { toks, i: 0, catalog, end: sql.len() };

    p.expect_keyword("SELECT")?;
    let mut items = vec![p.select_item()?];
    while p.eat(&Tok::Comma) {
        items.push(p.select_item()?);
    }

    p.expect_keyword("FROM")?;
    let mut instances = vec![p.table_instance()?];
    while p.eat(&Tok::Comma) {
        instances.push(p.table_instance()?);
    }

    let mut conjuncts = Vec::new();
    if p.peek_keyword("WHERE") {
        p.next();
        conjuncts.push(p.conjunct()?);
        while p.peek_keyword("AND") {
            p.next();
            conjuncts.push(p.conjunct()?);
        }
    }
    if let Some((_, pos)) = p.toks.get(p.i) {
        return Err(Error::Parse { msg: "trailing input after query".into(), pos: *pos });
    }

    // Resolve aliases, then attribute references.
    let mut seen_alias = std::collections::HashSet::new();
    for inst in &instances {
        if !seen_alias.insert(inst.alias.clone()) {
            return Err(Error::Parse {
                msg: format!("duplicate table alias '{}' (self-joins need aliases)", inst.alias),
                pos: 0,
            });
        }
    }

    let resolve = |raw: &RawAttr| -> Result<AttrRef> {
        let candidates: Vec<usize> = match &raw.qualifier {
            Some(q) => instances
                .iter()
                .enumerate()
                .filter(|(_, inst)| &inst.alias == q)
                .map(|(idx, _)| idx)
                .collect(),
            None => instances
                .iter()
                .enumerate()
                .filter(|(_, inst)| {
                    catalog.table(inst.table_id).schema.attr_index(&raw.name).is_some()
                })
                .map(|(idx, _)| idx)
                .collect(),
        };
        match candidates.as_slice() {
            [] => Err(Error::Parse {
                msg: match &raw.qualifier {
                    Some(q) => format!("unknown table alias '{q}'"),
                    None => format!("unknown attribute '{}'", raw.name),
                },
                pos: raw.pos,
            }),
            [one] => {
                let inst = &instances[*one];
                let column = self::attr_index(catalog, inst.table_id, &raw.name, raw.pos)?;
                Ok(AttrRef { instance: *one, column, name: raw.name.clone() })
            }
            _ => Err(Error::Parse {
                msg: format!("ambiguous attribute '{}': qualify with an alias", raw.name),
                pos: raw.pos,
            }),
        }
    };

    let mut select = Vec::new();
    let mut has_plain = false;
    let mut has_agg = false;
    for item in &items {
        select.push(match item {
            RawItem::Attr(raw) => {
                has_plain = true;
                SelectItem::Attr(resolve(raw)?)
            }
            RawItem::Aggregate(f, arg) => {
                has_agg = true;
                let resolved = match arg {
                    Some(raw) => {
                        let r = resolve(raw)?;
                        let ty = catalog
                            .table(instances[r.instance].table_id)
                            .schema
                            .attributes[r.column]
                            .value_type;
                        if matches!(f, AggFunc::Sum | AggFunc::Avg) && ty == ValueType::Text {
                            return Err(Error::Parse {
                                msg: format!("{}() needs a numeric attribute", f.name()),
                                pos: raw.pos,
                            });
                        }
                        Some(r)
                    }
                    None => None,
                };
                SelectItem::Aggregate(*f, resolved)
            }
        });
    }
    if has_plain && has_agg {
        return Err(Error::Parse {
            msg: "cannot mix plain attributes and aggregates without GROUP BY".into(),
            pos: 0,
        });
    }

    let mut predicates = Vec::new();
    let mut equi_joins = Vec::new();
    for c in &conjuncts {
        match c {
            RawConjunct::Cmp { attr, op, literal } => {
                predicates.push(Comparison { attr: resolve(attr)?, op: *op, literal: literal.clone() });
            }
            RawConjunct::Join { left, right } => {
                equi_joins.push(EquiJoin { left: resolve(left)?, right: resolve(right)? });
            }
        }
    }

    Ok(WorkloadQuery {
        q_id,
        sql_text: sql.to_string(),
        select,
        table_instances: instances,
        predicates,
        equi_joins,
        frequency,
    })
}

fn attr_index(catalog: &Catalog, table: TableId, name: &str, pos: usize) -> Result<usize> {
    catalog.table(table).schema.attr_index(name).ok_or_else(|| Error::Parse {
        msg: format!(
            "table '{}' has no attribute '{name}'",
            catalog.table(table).schema.table_name
        ),
        pos,
    })
}

impl Parser<'_> {
    fn pos(&self) -> usize {
        self.toks.get(self.i).map(|(_, p)| *p).unwrap_or(self.end)
    }

    fn next(&mut self) -> Option<&Tok> {
        let t = self.toks.get(self.i).map(|(t, _)| t);
        self.i += 1;
        t
    }

    fn eat(&mut self, tok: &Tok) -> bool {
        if self.toks.get(self.i).map(|(t, _)| t) == Some(tok) {
            self.i += 1;
            true
        } else {
            false
        }
    }

    fn peek_keyword(&self, kw: &str) -> bool {
        matches!(self.toks.get(self.i), Some((Tok::Ident(s), _)) if s.eq_ignore_ascii_case(kw))
    }

    fn expect_keyword(&mut self, kw: &str) -> Result<()> {
        if self.peek_keyword(kw) {
            self.i += 1;
            Ok(())
        } else {
            Err(Error::Parse { msg: format!("expected {kw}"), pos: self.pos() })
        }
    }

    fn ident(&mut self, what: &str) -> Result<(String, usize)> {
        let pos = self.pos();
        match self.next() {
            Some(Tok::Ident(s)) => Ok((s.clone(), pos)),
            _ => Err(Error::Parse { msg: format!("expected {what}"), pos }),
        }
    }

    fn agg_func(name: &str) -> Option<AggFunc> {
        if name.eq_ignore_ascii_case("COUNT") {
            Some(AggFunc::Count)
        } else if name.eq_ignore_ascii_case("SUM") {
            Some(AggFunc::Sum)
        } else if name.eq_ignore_ascii_case("AVG") {
            Some(AggFunc::Avg)
        } else if name.eq_ignore_ascii_case("MIN") {
            Some(AggFunc::Min)
        } else if name.eq_ignore_ascii_case("MAX") {
            Some(AggFunc::Max)
        } else {
            None
        }
    }

    fn select_item(&mut self) -> Result<RawItem> {
        if let Some((Tok::Ident(name), _)) = self.toks.get(self.i) {
            if let Some(func) = Self::agg_func(name) {
                if self.toks.get(self.i + 1).map(|(t, _)| t) == Some(&Tok::LParen) {
                    self.i += 2;
                    let arg = if self.eat(&Tok::Star) {
                        if func != AggFunc::Count {
                            return Err(Error::Parse {
                                msg: format!("{}(*) is not supported, give an attribute", func.name()),
                                pos: self.pos(),
                            });
                        }
                        None
                    } else {
                        Some(self.attr_ref()?)
                    };
                    let pos = self.pos();
                    if !self.eat(&Tok::RParen) {
                        return Err(Error::Parse { msg: "expected ')'".into(), pos });
                    }
                    return Ok(RawItem::Aggregate(func, arg));
                }
            }
        }
        Ok(RawItem::Attr(self.attr_ref()?))
    }

    fn attr_ref(&mut self) -> Result<RawAttr> {
        let (first, pos) = self.ident("attribute reference")?;
        if self.eat(&Tok::Dot) {
            let (name, _) = self.ident("attribute name")?;
            Ok(RawAttr { qualifier: Some(first), name, pos })
        } else {
            Ok(RawAttr { qualifier: None, name: first, pos })
        }
    }

    fn table_instance(&mut self) -> Result<TableInstance> {
        let (table, pos) = self.ident("table name")?;
        let entry = self
            .catalog
            .table_by_name(&table)
            .map_err(|_| Error::Parse { msg: format!("unknown table '{table}'"), pos })?;
        let table_id = entry.id;
        // optional [AS] alias
        let mut alias = table.clone();
        if self.peek_keyword("AS") {
            self.i += 1;
            alias = self.ident("alias")?.0;
        } else if let Some((Tok::Ident(s), _)) = self.toks.get(self.i) {
            let is_clause_kw = s.eq_ignore_ascii_case("WHERE") || s.eq_ignore_ascii_case("AND");
            if !is_clause_kw {
                alias = s.clone();
                self.i += 1;
            }
        }
        Ok(TableInstance { table_id, table, alias })
    }

    fn literal(&mut self) -> Result<Value> {
        let pos = self.pos();
        let negate = self.eat(&Tok::Minus);
        match self.next() {
            Some(Tok::Int(v)) => Ok(Value::Int(if negate { -*v } else { *v })),
            Some(Tok::Float(v)) => Ok(Value::Float(if negate { -*v } else { *v })),
            Some(Tok::Str(s)) if !negate => Ok(Value::Text(s.clone())),
            _ => Err(Error::Parse { msg: "expected literal".into(), pos }),
        }
    }

    fn conjunct(&mut self) -> Result<RawConjunct> {
        let attr = self.attr_ref()?;
        let pos = self.pos();
        let op = match self.next() {
            Some(Tok::Op(op)) => *op,
            _ => return Err(Error::Parse { msg: "expected comparison operator".into(), pos }),
        };
        // attr = attr is an equi-join; attr op literal otherwise
        let rhs_is_attr = matches!(self.toks.get(self.i), Some((Tok::Ident(_), _)));
        if rhs_is_attr {
            if op != CmpOp::Eq {
                return Err(Error::Parse {
                    msg: "attribute-to-attribute comparison only supports '='".into(),
                    pos,
                });
            }
            let right = self.attr_ref()?;
            Ok(RawConjunct::Join { left: attr, right })
        } else {
            Ok(RawConjunct::Cmp { attr, op, literal: self.literal()? })
        }
    }
}
