use std::fmt;

use super::{Bindings, Value, VarDecl, VarType};

/// Boolean guard over dataspace variables.
///
/// Comparisons always put the variable on the left and a literal on the
/// right. An unbound variable makes its comparison false.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum GuardExpr {
    Const(bool),
    Cmp {
        var: String,
        op: CmpOp,
        value: Value,
    },
    Not(Box<GuardExpr>),
    And(Box<GuardExpr>, Box<GuardExpr>),
    Or(Box<GuardExpr>, Box<GuardExpr>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CmpOp {
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
}

impl CmpOp {
    pub fn symbol(self) -> &'static str {
        match self {
            CmpOp::Eq => "=",
            CmpOp::Ne => "!=",
            CmpOp::Lt => "<",
            CmpOp::Le => "<=",
            CmpOp::Gt => ">",
            CmpOp::Ge => ">=",
        }
    }

    fn is_ordering(self) -> bool {
        !matches!(self, CmpOp::Eq | CmpOp::Ne)
    }
}

impl GuardExpr {
    pub fn cmp(var: impl Into<String>, op: CmpOp, value: Value) -> Self {
        GuardExpr::Cmp {
            var: var.into(),
            op,
            value,
        }
    }

    pub fn and(self, rhs: GuardExpr) -> Self {
        GuardExpr::And(Box::new(self), Box::new(rhs))
    }

    pub fn or(self, rhs: GuardExpr) -> Self {
        GuardExpr::Or(Box::new(self), Box::new(rhs))
    }

    pub fn negate(self) -> Self {
        GuardExpr::Not(Box::new(self))
    }

    pub fn eval(&self, env: &Bindings) -> bool {
        match self {
            GuardExpr::Const(b) => *b,
            GuardExpr::Cmp { var, op, value } => match env.get(var) {
                Some(bound) => compare(bound, *op, value),
                None => false,
            },
            GuardExpr::Not(inner) => !inner.eval(env),
            GuardExpr::And(l, r) => l.eval(env) && r.eval(env),
            GuardExpr::Or(l, r) => l.eval(env) || r.eval(env),
        }
    }

    /// Variable names in order of first appearance.
    pub fn variables(&self) -> Vec<&str> {
        let mut out = Vec::new();
        self.collect_vars(&mut out);
        out
    }

    fn collect_vars<'a>(&'a self, out: &mut Vec<&'a str>) {
        match self {
            GuardExpr::Const(_) => {}
            GuardExpr::Cmp { var, .. } => {
                if !out.contains(&var.as_str()) {
                    out.push(var);
                }
            }
            GuardExpr::Not(inner) => inner.collect_vars(out),
            GuardExpr::And(l, r) | GuardExpr::Or(l, r) => {
                l.collect_vars(out);
                r.collect_vars(out);
            }
        }
    }

    /// Returns a description of every type error against `vars`.
    pub fn type_errors(&self, vars: &[VarDecl]) -> Vec<String> {
        let mut errors = Vec::new();
        self.check(vars, &mut errors);
        errors
    }

    fn check(&self, vars: &[VarDecl], errors: &mut Vec<String>) {
        match self {
            GuardExpr::Const(_) => {}
            GuardExpr::Cmp { var, op, value } => match vars.iter().find(|v| &v.name == var) {
                None => errors.push(format!("guard references undeclared variable `{var}`")),
                Some(decl) => {
                    if decl.ty != value.ty() {
                        errors.push(format!(
                            "`{var}` is {} but is compared with a {} literal",
                            decl.ty.keyword(),
                            value.ty().keyword()
                        ));
                    } else if op.is_ordering() && decl.ty != VarType::Int {
                        errors.push(format!(
                            "`{}` is not defined on {} variable `{var}`",
                            op.symbol(),
                            decl.ty.keyword()
                        ));
                    }
                }
            },
            GuardExpr::Not(inner) => inner.check(vars, errors),
            GuardExpr::And(l, r) | GuardExpr::Or(l, r) => {
                l.check(vars, errors);
                r.check(vars, errors);
            }
        }
    }

    fn precedence(&self) -> u8 {
        match self {
            GuardExpr::Or(..) => 1,
            GuardExpr::And(..) => 2,
            GuardExpr::Not(_) => 3,
            GuardExpr::Const(_) | GuardExpr::Cmp { .. } => 4,
        }
    }

    fn fmt_operand(&self, f: &mut fmt::Formatter<'_>, min: u8) -> fmt::Result {
        if self.precedence() < min {
            write!(f, "({self})")
        } else {
            write!(f, "{self}")
        }
    }
}

fn compare(bound: &Value, op: CmpOp, literal: &Value) -> bool {
    use std::cmp::Ordering;
    let ord = match (bound, literal) {
        (Value::Int(a), Value::Int(b)) => a.cmp(b),
        (Value::Bool(a), Value::Bool(b)) => a.cmp(b),
        (Value::Str(a), Value::Str(b)) => a.cmp(b),
        // Ill-typed comparisons never hold.
        _ => return false,
    };
    match op {
        CmpOp::Eq => ord == Ordering::Equal,
        CmpOp::Ne => ord != Ordering::Equal,
        CmpOp::Lt => ord == Ordering::Less,
        CmpOp::Le => ord != Ordering::Greater,
        CmpOp::Gt => ord == Ordering::Greater,
        CmpOp::Ge => ord != Ordering::Less,
    }
}

/// Canonical text: binary operators are left-associative, so only a
/// right operand of equal precedence needs parentheses.
impl fmt::Display for GuardExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GuardExpr::Const(b) => write!(f, "{b}"),
            GuardExpr::Cmp { var, op, value } => write!(f, "{var} {} {value}", op.symbol()),
            GuardExpr::Not(inner) => {
                f.write_str("not ")?;
                inner.fmt_operand(f, 3)
            }
            GuardExpr::And(l, r) => {
                l.fmt_operand(f, 2)?;
                f.write_str(" and ")?;
                r.fmt_operand(f, 3)
            }
            GuardExpr::Or(l, r) => {
                l.fmt_operand(f, 1)?;
                f.write_str(" or ")?;
                r.fmt_operand(f, 2)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn env() -> Bindings {
        [
            ("budget".to_string(), Value::Int(50)),
            ("ok".to_string(), Value::Bool(true)),
        ]
        .into_iter()
        .collect()
    }

    #[test]
    fn unbound_variable_is_false() {
        let g = GuardExpr::cmp("missing", CmpOp::Eq, Value::Int(1));
        assert!(!g.eval(&env()));
        assert!(g.clone().negate().eval(&env()));
    }

    #[test]
    fn comparisons() {
        let e = env();
        assert!(!GuardExpr::cmp("budget", CmpOp::Ge, Value::Int(100)).eval(&e));
        assert!(GuardExpr::cmp("budget", CmpOp::Lt, Value::Int(100)).eval(&e));
        assert!(GuardExpr::cmp("budget", CmpOp::Ne, Value::Int(49)).eval(&e));
        assert!(GuardExpr::cmp("ok", CmpOp::Eq, Value::Bool(true)).eval(&e));
        // type-mismatched comparison is false rather than a panic
        assert!(!GuardExpr::cmp("ok", CmpOp::Eq, Value::Int(1)).eval(&e));
    }

    #[test]
    fn display_parenthesizes_right_nested_operands() {
        let a = GuardExpr::Const(true);
        let b = GuardExpr::cmp("x", CmpOp::Lt, Value::Int(3));
        let c = GuardExpr::Const(false);
        let left = a.clone().and(b.clone()).and(c.clone());
        assert_eq!(left.to_string(), "true and x < 3 and false");
        let right = a.clone().and(b.clone().and(c.clone()));
        assert_eq!(right.to_string(), "true and (x < 3 and false)");
        let mixed = a.or(b).and(c.negate());
        assert_eq!(mixed.to_string(), "(true or x < 3) and not false");
    }

    #[test]
    fn type_checking() {
        let vars = vec![
            VarDecl {
                name: "n".into(),
                ty: VarType::Int,
                default: None,
            },
            VarDecl {
                name: "s".into(),
                ty: VarType::Str,
                default: None,
            },
        ];
        assert!(GuardExpr::cmp("n", CmpOp::Le, Value::Int(1))
            .type_errors(&vars)
            .is_empty());
        assert_eq!(
            GuardExpr::cmp("s", CmpOp::Lt, Value::Str("a".into()))
                .type_errors(&vars)
                .len(),
            1
        );
        assert_eq!(
            GuardExpr::cmp("n", CmpOp::Eq, Value::Bool(true))
                .type_errors(&vars)
                .len(),
            1
        );
        assert_eq!(
            GuardExpr::cmp("zz", CmpOp::Eq, Value::Int(1))
                .type_errors(&vars)
                .len(),
            1
        );
    }
}
