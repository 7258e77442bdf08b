use alloc::boxed::Box;
use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

/// Integer expression over loop variables and buffer loads.
///
/// `Div` and `Mod` are floor division / modulus and only admit a positive
/// integer constant as divisor. `Lt` and `And` evaluate to 0 or 1 and exist so
/// that boundary guards (padding) can be written with `Select`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Expr {
    Int(i64),
    Var(String),
    Load { buffer: String, indices: Vec<Expr> },
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Max(Box<Expr>, Box<Expr>),
    Min(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Mod(Box<Expr>, Box<Expr>),
    Lt(Box<Expr>, Box<Expr>),
    And(Box<Expr>, Box<Expr>),
    Select { cond: Box<Expr>, then: Box<Expr>, otherwise: Box<Expr> },
}

impl Expr {
    pub fn var(name: impl Into<String>) -> Expr {
        Expr::Var(name.into())
    }

    pub fn load(buffer: impl Into<String>, indices: Vec<Expr>) -> Expr {
        Expr::Load { buffer: buffer.into(), indices }
    }

    /// `a + b` with constant folding and `+ 0` elimination.
    pub fn add(a: Expr, b: Expr) -> Expr {
        match (a, b) {
            (Expr::Int(x), Expr::Int(y)) => Expr::Int(x.wrapping_add(y)),
            (Expr::Int(0), e) | (e, Expr::Int(0)) => e,
            (a, b) => Expr::Add(Box::new(a), Box::new(b)),
        }
    }

    pub fn sub(a: Expr, b: Expr) -> Expr {
        match (a, b) {
            (Expr::Int(x), Expr::Int(y)) => Expr::Int(x.wrapping_sub(y)),
            (e, Expr::Int(0)) => e,
            (a, b) => Expr::Sub(Box::new(a), Box::new(b)),
        }
    }

    /// `a * b` with constant folding and unit elimination.
    pub fn mul(a: Expr, b: Expr) -> Expr {
        match (a, b) {
            (Expr::Int(x), Expr::Int(y)) => Expr::Int(x.wrapping_mul(y)),
            (Expr::Int(1), e) | (e, Expr::Int(1)) => e,
            (a, b) => Expr::Mul(Box::new(a), Box::new(b)),
        }
    }

    pub fn max(a: Expr, b: Expr) -> Expr {
        Expr::Max(Box::new(a), Box::new(b))
    }

    pub fn min(a: Expr, b: Expr) -> Expr {
        Expr::Min(Box::new(a), Box::new(b))
    }

    pub fn floor_div(a: Expr, c: i64) -> Expr {
        match a {
            _ if c == 1 => a,
            Expr::Int(x) => Expr::Int(x.div_euclid(c)),
            a => Expr::Div(Box::new(a), Box::new(Expr::Int(c))),
        }
    }

    pub fn floor_mod(a: Expr, c: i64) -> Expr {
        match a {
            _ if c == 1 => Expr::Int(0),
            Expr::Int(x) => Expr::Int(x.rem_euclid(c)),
            a => Expr::Mod(Box::new(a), Box::new(Expr::Int(c))),
        }
    }

    pub fn lt(a: Expr, b: Expr) -> Expr {
        Expr::Lt(Box::new(a), Box::new(b))
    }

    pub fn and(a: Expr, b: Expr) -> Expr {
        Expr::And(Box::new(a), Box::new(b))
    }

    pub fn select(cond: Expr, then: Expr, otherwise: Expr) -> Expr {
        Expr::Select { cond: Box::new(cond), then: Box::new(then), otherwise: Box::new(otherwise) }
    }

    /// Immediate sub-expressions, in evaluation order.
    pub fn children(&self) -> Vec<&Expr> {
        match self {
            Expr::Int(_) | Expr::Var(_) => Vec::new(),
            Expr::Load { indices, .. } => indices.iter().collect(),
            Expr::Add(a, b)
            | Expr::Sub(a, b)
            | Expr::Mul(a, b)
            | Expr::Max(a, b)
            | Expr::Min(a, b)
            | Expr::Div(a, b)
            | Expr::Mod(a, b)
            | Expr::Lt(a, b)
            | Expr::And(a, b) => alloc::vec![a.as_ref(), b.as_ref()],
            Expr::Select { cond, then, otherwise } => {
                alloc::vec![cond.as_ref(), then.as_ref(), otherwise.as_ref()]
            }
        }
    }

    /// Pre-order visit of every sub-expression.
    pub fn visit<'a>(&'a self, f: &mut impl FnMut(&'a Expr)) {
        f(self);
        for c in self.children() {
            c.visit(f);
        }
    }

    /// Rebuilds the tree bottom-up through `f`.
    pub fn map(&self, f: &mut impl FnMut(Expr) -> Expr) -> Expr {
        let rebuilt = match self {
            Expr::Int(_) | Expr::Var(_) => self.clone(),
            Expr::Load { buffer, indices } => Expr::Load {
                buffer: buffer.clone(),
                indices: indices.iter().map(|e| e.map(f)).collect(),
            },
            Expr::Add(a, b) => Expr::add(a.map(f), b.map(f)),
            Expr::Sub(a, b) => Expr::sub(a.map(f), b.map(f)),
            Expr::Mul(a, b) => Expr::mul(a.map(f), b.map(f)),
            Expr::Max(a, b) => Expr::max(a.map(f), b.map(f)),
            Expr::Min(a, b) => Expr::min(a.map(f), b.map(f)),
            Expr::Div(a, b) => Expr::Div(Box::new(a.map(f)), Box::new(b.map(f))),
            Expr::Mod(a, b) => Expr::Mod(Box::new(a.map(f)), Box::new(b.map(f))),
            Expr::Lt(a, b) => Expr::lt(a.map(f), b.map(f)),
            Expr::And(a, b) => Expr::and(a.map(f), b.map(f)),
            Expr::Select { cond, then, otherwise } => {
                Expr::select(cond.map(f), then.map(f), otherwise.map(f))
            }
        };
        f(rebuilt)
    }

    /// Replaces variables according to `subst`; unmapped variables are kept.
    pub fn substitute(&self, subst: &BTreeMap<String, Expr>) -> Expr {
        if subst.is_empty() {
            return self.clone();
        }
        self.map(&mut |e| match e {
            Expr::Var(ref v) => subst.get(v).cloned().unwrap_or(e),
            Expr::Div(a, b) => match *b {
                Expr::Int(c) => Expr::floor_div(*a, c),
                b => Expr::Div(a, Box::new(b)),
            },
            Expr::Mod(a, b) => match *b {
                Expr::Int(c) => Expr::floor_mod(*a, c),
                b => Expr::Mod(a, Box::new(b)),
            },
            e => e,
        })
    }

    /// Replaces every load of `buffer` by `f(indices)`.
    pub fn replace_loads(&self, buffer: &str, f: &mut impl FnMut(&[Expr]) -> Expr) -> Expr {
        self.map(&mut |e| match e {
            Expr::Load { buffer: ref b, ref indices } if b == buffer => f(indices),
            e => e,
        })
    }

    pub fn collect_vars(&self, out: &mut BTreeSet<String>) {
        self.visit(&mut |e| {
            if let Expr::Var(v) = e {
                out.insert(v.clone());
            }
        });
    }

    pub fn mentions(&self, var: &str) -> bool {
        let mut found = false;
        self.visit(&mut |e| {
            if let Expr::Var(v) = e {
                found |= v == var;
            }
        });
        found
    }

    /// Every `Load` node, in pre-order.
    pub fn loads(&self) -> Vec<(&str, &[Expr])> {
        let mut out = Vec::new();
        self.visit(&mut |e| {
            if let Expr::Load { buffer, indices } = e {
                out.push((buffer.as_str(), indices.as_slice()));
            }
        });
        out
    }

    /// Number of arithmetic/logical operators, not counting index arithmetic
    /// inside loads.
    pub fn op_count(&self) -> u64 {
        match self {
            Expr::Int(_) | Expr::Var(_) | Expr::Load { .. } => 0,
            e => 1 + e.children().into_iter().map(Expr::op_count).sum::<u64>(),
        }
    }

    pub fn has_loads(&self) -> bool {
        !self.loads().is_empty()
    }

    pub fn rename_vars(&self, names: &BTreeMap<String, String>) -> Expr {
        self.map(&mut |e| match e {
            Expr::Var(v) => Expr::Var(names.get(&v).cloned().unwrap_or(v)),
            e => e,
        })
    }
}

impl From<i64> for Expr {
    fn from(v: i64) -> Self {
        Expr::Int(v)
    }
}

impl From<&str> for Expr {
    fn from(v: &str) -> Self {
        Expr::Var(v.to_string())
    }
}

impl core::fmt::Display for Expr {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        fn bin(f: &mut core::fmt::Formatter<'_>, a: &Expr, op: &str, b: &Expr) -> core::fmt::Result {
            write!(f, "({a} {op} {b})")
        }
        match self {
            Expr::Int(v) => write!(f, "{v}"),
            Expr::Var(v) => write!(f, "{v}"),
            Expr::Load { buffer, indices } => {
                write!(f, "{buffer}[")?;
                for (i, e) in indices.iter().enumerate() {
                    if i > 0 {
                        write!(f, ", ")?;
                    }
                    write!(f, "{e}")?;
                }
                write!(f, "]")
            }
            Expr::Add(a, b) => bin(f, a, "+", b),
            Expr::Sub(a, b) => bin(f, a, "-", b),
            Expr::Mul(a, b) => bin(f, a, "*", b),
            Expr::Div(a, b) => bin(f, a, "//", b),
            Expr::Mod(a, b) => bin(f, a, "%", b),
            Expr::Lt(a, b) => bin(f, a, "<", b),
            Expr::And(a, b) => bin(f, a, "&&", b),
            Expr::Max(a, b) => write!(f, "max({a}, {b})"),
            Expr::Min(a, b) => write!(f, "min({a}, {b})"),
            Expr::Select { cond, then, otherwise } => write!(f, "select({cond}, {then}, {otherwise})"),
        }
    }
}
