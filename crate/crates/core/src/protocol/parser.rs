//! Recursive-descent parser for protocol documents.
//!
//! ```text
//! document  = "protocol" IDENT { section } ;
//! section   = roles | vars | messages | flow | order ;
//! roles     = "roles" "{" { IDENT ":" role-kind } "}" ;
//! role-kind = "process" | "service" [ "(" IDENT { "," IDENT } ")" ] ;
//! vars      = "vars" "{" { IDENT ":" ( "int" | "bool" | "str" ) [ "=" literal ] } "}" ;
//! messages  = "messages" "{" { pm | cm } "}" ;
//! pm        = "pm" IDENT ":" IDENT "->" IDENT ACT { pm-option } ;
//! pm-option = "sync" | "async" | "guard" expr | "deadline" INT ;
//! cm        = "cm" IDENT ( "AND" | "OR" | "XOR" ) "{" { pm } "}" ;
//! flow      = "flow" "{" { "(" IDENT "," IDENT ")" [ "," ] } "}" ;
//! order     = "order" "{" { IDENT ":" IDENT { "," IDENT } } "}" ;
//! expr      = conj { "or" conj } ;
//! conj      = neg { "and" neg } ;
//! neg       = "not" neg | atom ;
//! atom      = "(" expr ")" | "true" | "false" | IDENT cmp literal ;
//! cmp       = "=" | "!=" | "<" | "<=" | ">" | ">=" ;
//! literal   = INT | STRING | "true" | "false" ;
//! ```
//!
//! Each section may appear at most once. `#` and `//` start line comments.

use std::collections::{BTreeMap, BTreeSet};

use super::lexer::{tokenize, Spanned, Tok};
use super::{
    validate_well_formedness, CmpOp, CommunicativeAct, ComplexMessage, GuardExpr,
    InteractionProtocol, MessageOption, MessageStep, Mode, Operator, PrimitiveMessage,
    ProtocolError, Role, RoleKind, Severity, Value, VarDecl, VarType,
};

const RESERVED_VAR_NAMES: [&str; 5] = ["and", "or", "not", "true", "false"];

/// A 1-based line/column position in the source document.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct SourcePos {
    pub line: usize,
    pub column: usize,
}

/// A syntactically valid document that has not been checked for
/// well-formedness, with the source position of every named item.
#[derive(Debug, Clone)]
pub struct ParsedDocument {
    pub protocol: InteractionProtocol,
    /// Position of the last declaration of each role, variable, message and
    /// order entry, keyed by name.
    pub positions: BTreeMap<String, SourcePos>,
}

impl ParsedDocument {
    pub fn position_of(&self, name: &str) -> SourcePos {
        self.positions
            .get(name)
            .copied()
            .unwrap_or(SourcePos { line: 1, column: 1 })
    }
}

/// Parses the document syntax only; well-formedness is not checked.
pub fn parse_document(source: &str) -> Result<ParsedDocument, ProtocolError> {
    let tokens = tokenize(source)?;
    let mut p = Parser {
        tokens,
        pos: 0,
        positions: BTreeMap::new(),
        first_dup: BTreeMap::new(),
    };
    let protocol = p.document()?;
    let mut positions = p.positions;
    // Duplicates are reported at their second occurrence.
    positions.extend(p.first_dup);
    Ok(ParsedDocument {
        protocol,
        positions,
    })
}

/// Parses and validates a protocol document. Any error-severity finding is
/// returned as [`ProtocolError::Invalid`] positioned at the offending item.
pub fn parse_protocol(source: &str) -> Result<InteractionProtocol, ProtocolError> {
    let doc = parse_document(source)?;
    let report = validate_well_formedness(&doc.protocol);
    if let Some(first) = report
        .findings
        .iter()
        .find(|f| f.severity == Severity::Error)
    {
        let pos = doc.position_of(&first.location);
        return Err(ProtocolError::Invalid {
            line: pos.line,
            column: pos.column,
            code: first.code.clone(),
            message: format!("{} ({})", first.detail, first.code),
            report,
        });
    }
    Ok(doc.protocol)
}

struct Parser {
    tokens: Vec<Spanned>,
    pos: usize,
    positions: BTreeMap<String, SourcePos>,
    first_dup: BTreeMap<String, SourcePos>,
}

type PResult<T> = Result<T, ProtocolError>;

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.tokens.get(self.pos).map(|s| &s.tok)
    }

    fn here(&self) -> SourcePos {
        match self.tokens.get(self.pos) {
            Some(s) => SourcePos {
                line: s.line,
                column: s.column,
            },
            None => match self.tokens.last() {
                Some(s) => SourcePos {
                    line: s.line,
                    column: s.column + 1,
                },
                None => SourcePos { line: 1, column: 1 },
            },
        }
    }

    fn error<T>(&self, message: impl Into<String>) -> PResult<T> {
        let pos = self.here();
        Err(ProtocolError::Syntax {
            line: pos.line,
            column: pos.column,
            message: message.into(),
        })
    }

    fn unexpected<T>(&self, wanted: &str) -> PResult<T> {
        match self.peek() {
            Some(t) => self.error(format!("expected {wanted}, found {}", t.describe())),
            None => self.error(format!("expected {wanted}, found end of input")),
        }
    }

    fn next(&mut self) -> Option<Tok> {
        let t = self.tokens.get(self.pos).map(|s| s.tok.clone());
        if t.is_some() {
            self.pos += 1;
        }
        t
    }

    fn expect(&mut self, tok: Tok) -> PResult<()> {
        if self.peek() == Some(&tok) {
            self.pos += 1;
            Ok(())
        } else {
            self.unexpected(&tok.describe())
        }
    }

    fn at_keyword(&self, kw: &str) -> bool {
        matches!(self.peek(), Some(Tok::Ident(s)) if s == kw)
    }

    fn keyword(&mut self, kw: &str) -> PResult<()> {
        if self.at_keyword(kw) {
            self.pos += 1;
            Ok(())
        } else {
            self.unexpected(&format!("`{kw}`"))
        }
    }

    fn ident(&mut self, what: &str) -> PResult<String> {
        match self.peek() {
            Some(Tok::Ident(s)) => {
                let s = s.clone();
                self.pos += 1;
                Ok(s)
            }
            _ => self.unexpected(what),
        }
    }

    fn record(&mut self, key: String, at: SourcePos) {
        if self.positions.contains_key(&key) {
            self.first_dup.entry(key).or_insert(at);
        } else {
            self.positions.insert(key, at);
        }
    }

    fn document(&mut self) -> PResult<InteractionProtocol> {
        self.keyword("protocol")?;
        let at = self.here();
        let id = self.ident("protocol identifier")?;
        self.record(id.clone(), at);

        let mut ip = InteractionProtocol {
            id,
            roles: Vec::new(),
            vars: Vec::new(),
            messages: Vec::new(),
            flow: BTreeSet::new(),
            orders: BTreeMap::new(),
        };
        let mut seen = BTreeSet::new();
        while let Some(tok) = self.peek() {
            let Tok::Ident(section) = tok.clone() else {
                return self
                    .unexpected("a section (`roles`, `vars`, `messages`, `flow` or `order`)");
            };
            if !seen.insert(section.clone())
                && ["roles", "vars", "messages", "flow", "order"].contains(&section.as_str())
            {
                return self.error(format!("section `{section}` appears more than once"));
            }
            match section.as_str() {
                "roles" => ip.roles = self.roles()?,
                "vars" => ip.vars = self.vars()?,
                "messages" => ip.messages = self.messages()?,
                "flow" => ip.flow = self.flow()?,
                "order" => ip.orders = self.order()?,
                _ => {
                    return self
                        .unexpected("a section (`roles`, `vars`, `messages`, `flow` or `order`)")
                }
            }
        }
        if !seen.contains("flow") {
            ip.flow = ip
                .message_pairs()
                .into_iter()
                .filter(|(a, b)| a != b)
                .collect();
        }
        Ok(ip)
    }

    fn roles(&mut self) -> PResult<Vec<Role>> {
        self.keyword("roles")?;
        self.expect(Tok::LBrace)?;
        let mut roles = Vec::new();
        while self.peek() != Some(&Tok::RBrace) {
            let at = self.here();
            let name = self.ident("role name or `}`")?;
            self.expect(Tok::Colon)?;
            let kind = self.ident("role kind (`process` or `service`)")?;
            let role = match kind.as_str() {
                "process" => Role::process(name.clone()),
                "service" => {
                    let mut caps = BTreeSet::new();
                    if self.peek() == Some(&Tok::LParen) {
                        self.pos += 1;
                        loop {
                            caps.insert(self.ident("capability keyword")?);
                            match self.next() {
                                Some(Tok::Comma) => continue,
                                Some(Tok::RParen) => break,
                                _ => {
                                    self.pos -= 1;
                                    return self.unexpected("`,` or `)`");
                                }
                            }
                        }
                    }
                    Role {
                        name: name.clone(),
                        kind: RoleKind::WebService,
                        capabilities: caps,
                    }
                }
                other => {
                    self.pos -= 1;
                    return self.error(format!(
                        "unknown role kind `{other}` (expected `process` or `service`)"
                    ));
                }
            };
            self.record(name, at);
            roles.push(role);
        }
        self.expect(Tok::RBrace)?;
        Ok(roles)
    }

    fn vars(&mut self) -> PResult<Vec<VarDecl>> {
        self.keyword("vars")?;
        self.expect(Tok::LBrace)?;
        let mut vars = Vec::new();
        while self.peek() != Some(&Tok::RBrace) {
            let at = self.here();
            let name = self.ident("variable name or `}`")?;
            if RESERVED_VAR_NAMES.contains(&name.as_str()) {
                self.pos -= 1;
                return self.error(format!("`{name}` is reserved and cannot name a variable"));
            }
            self.expect(Tok::Colon)?;
            let ty = match self.ident("variable type")?.as_str() {
                "int" => VarType::Int,
                "bool" => VarType::Bool,
                "str" => VarType::Str,
                other => {
                    self.pos -= 1;
                    return self.error(format!(
                        "unknown variable type `{other}` (expected int, bool or str)"
                    ));
                }
            };
            let default = if self.peek() == Some(&Tok::Eq) {
                self.pos += 1;
                let lit_at = self.pos;
                let v = self.literal()?;
                if v.ty() != ty {
                    self.pos = lit_at;
                    return self.error(format!(
                        "default for `{name}` must be {}, found {}",
                        ty.keyword(),
                        v.ty().keyword()
                    ));
                }
                Some(v)
            } else {
                None
            };
            self.record(name.clone(), at);
            vars.push(VarDecl { name, ty, default });
        }
        self.expect(Tok::RBrace)?;
        Ok(vars)
    }

    fn literal(&mut self) -> PResult<Value> {
        match self.peek().cloned() {
            Some(Tok::Int(i)) => {
                self.pos += 1;
                Ok(Value::Int(i))
            }
            Some(Tok::Str(s)) => {
                self.pos += 1;
                Ok(Value::Str(s))
            }
            Some(Tok::Ident(s)) if s == "true" || s == "false" => {
                self.pos += 1;
                Ok(Value::Bool(s == "true"))
            }
            _ => self.unexpected("a literal"),
        }
    }

    fn messages(&mut self) -> PResult<Vec<MessageStep>> {
        self.keyword("messages")?;
        self.expect(Tok::LBrace)?;
        let mut steps = Vec::new();
        loop {
            match self.peek() {
                Some(Tok::RBrace) => break,
                Some(Tok::Ident(k)) if k == "pm" => steps.push(MessageStep::Primitive(self.pm()?)),
                Some(Tok::Ident(k)) if k == "cm" => steps.push(MessageStep::Complex(self.cm()?)),
                _ => return self.unexpected("`pm`, `cm` or `}`"),
            }
        }
        self.expect(Tok::RBrace)?;
        Ok(steps)
    }

    fn pm(&mut self) -> PResult<PrimitiveMessage> {
        self.keyword("pm")?;
        let at = self.here();
        let name = self.ident("message name")?;
        self.expect(Tok::Colon)?;
        let sender = self.ident("sender role")?;
        self.expect(Tok::Arrow)?;
        let receiver = self.ident("receiver role")?;
        let act_name = self.ident("communicative act")?;
        let act: CommunicativeAct = match act_name.parse() {
            Ok(a) => a,
            Err(e) => {
                self.pos -= 1;
                return self.error(e.to_string());
            }
        };
        let mut option = MessageOption::default();
        let (mut saw_mode, mut saw_guard, mut saw_deadline) = (false, false, false);
        loop {
            match self.peek() {
                Some(Tok::Ident(k)) if k == "sync" || k == "async" => {
                    if saw_mode {
                        return self.error("message mode given twice");
                    }
                    saw_mode = true;
                    option.mode = if k == "sync" {
                        Mode::Synchronous
                    } else {
                        Mode::Asynchronous
                    };
                    self.pos += 1;
                }
                Some(Tok::Ident(k)) if k == "guard" => {
                    if saw_guard {
                        return self.error("guard given twice");
                    }
                    saw_guard = true;
                    self.pos += 1;
                    option.guard = Some(self.expr()?);
                }
                Some(Tok::Ident(k)) if k == "deadline" => {
                    if saw_deadline {
                        return self.error("deadline given twice");
                    }
                    saw_deadline = true;
                    self.pos += 1;
                    match self.next() {
                        Some(Tok::Int(n)) if n >= 0 => option.deadline = Some(n as u64),
                        _ => {
                            self.pos -= 1;
                            return self.unexpected("a non-negative tick count");
                        }
                    }
                }
                _ => break,
            }
        }
        self.record(name.clone(), at);
        Ok(PrimitiveMessage {
            name,
            sender,
            receiver,
            act,
            option,
        })
    }

    fn cm(&mut self) -> PResult<ComplexMessage> {
        self.keyword("cm")?;
        let at = self.here();
        let name = self.ident("complex message name")?;
        let operator = match self.ident("operator (`AND`, `OR` or `XOR`)")?.as_str() {
            "AND" => Operator::And,
            "OR" => Operator::Or,
            "XOR" => Operator::Xor,
            other => {
                self.pos -= 1;
                return self.error(format!(
                    "unknown operator `{other}` (expected AND, OR or XOR)"
                ));
            }
        };
        self.expect(Tok::LBrace)?;
        let mut branches = Vec::new();
        while self.peek() != Some(&Tok::RBrace) {
            if !self.at_keyword("pm") {
                return self.unexpected("`pm` or `}`");
            }
            branches.push(self.pm()?);
        }
        self.expect(Tok::RBrace)?;
        self.record(name.clone(), at);
        Ok(ComplexMessage {
            name,
            operator,
            branches,
        })
    }

    fn flow(&mut self) -> PResult<BTreeSet<(String, String)>> {
        self.keyword("flow")?;
        self.expect(Tok::LBrace)?;
        let mut flow = BTreeSet::new();
        while self.peek() != Some(&Tok::RBrace) {
            let at = self.here();
            self.expect(Tok::LParen)?;
            let a = self.ident("role name")?;
            self.expect(Tok::Comma)?;
            let b = self.ident("role name")?;
            self.expect(Tok::RParen)?;
            if self.peek() == Some(&Tok::Comma) {
                self.pos += 1;
            }
            self.record(format!("({a}, {b})"), at);
            flow.insert((a, b));
        }
        self.expect(Tok::RBrace)?;
        Ok(flow)
    }

    fn order(&mut self) -> PResult<BTreeMap<String, Vec<String>>> {
        self.keyword("order")?;
        self.expect(Tok::LBrace)?;
        let mut orders = BTreeMap::new();
        while self.peek() != Some(&Tok::RBrace) {
            let at = self.here();
            let role = self.ident("role name or `}`")?;
            self.expect(Tok::Colon)?;
            let mut steps = vec![self.ident("message name")?];
            while self.peek() == Some(&Tok::Comma) {
                self.pos += 1;
                steps.push(self.ident("message name")?);
            }
            if orders.insert(role.clone(), steps).is_some() {
                self.pos -= 1;
                return self.error(format!("order for role `{role}` given twice"));
            }
            self.record(format!("order {role}"), at);
        }
        self.expect(Tok::RBrace)?;
        Ok(orders)
    }

    fn expr(&mut self) -> PResult<GuardExpr> {
        let mut lhs = self.conj()?;
        while self.at_keyword("or") {
            self.pos += 1;
            lhs = lhs.or(self.conj()?);
        }
        Ok(lhs)
    }

    fn conj(&mut self) -> PResult<GuardExpr> {
        let mut lhs = self.neg()?;
        while self.at_keyword("and") {
            self.pos += 1;
            lhs = lhs.and(self.neg()?);
        }
        Ok(lhs)
    }

    fn neg(&mut self) -> PResult<GuardExpr> {
        if self.at_keyword("not") {
            self.pos += 1;
            return Ok(self.neg()?.negate());
        }
        self.atom()
    }

    fn atom(&mut self) -> PResult<GuardExpr> {
        match self.peek().cloned() {
            Some(Tok::LParen) => {
                self.pos += 1;
                let e = self.expr()?;
                self.expect(Tok::RParen)?;
                Ok(e)
            }
            Some(Tok::Ident(s)) if s == "true" || s == "false" => {
                self.pos += 1;
                Ok(GuardExpr::Const(s == "true"))
            }
            Some(Tok::Ident(var)) => {
                self.pos += 1;
                let op = match self.next() {
                    Some(Tok::Eq) => CmpOp::Eq,
                    Some(Tok::Ne) => CmpOp::Ne,
                    Some(Tok::Lt) => CmpOp::Lt,
                    Some(Tok::Le) => CmpOp::Le,
                    Some(Tok::Gt) => CmpOp::Gt,
                    Some(Tok::Ge) => CmpOp::Ge,
                    Some(_) => {
                        self.pos -= 1;
                        return self.unexpected("a comparison operator");
                    }
                    None => return self.unexpected("a comparison operator"),
                };
                let value = self.literal()?;
                Ok(GuardExpr::Cmp { var, op, value })
            }
            _ => self.unexpected("a guard expression"),
        }
    }
}
