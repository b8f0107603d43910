//! Equation AST, the seven sampling categories, seeded random generation,
//! and a canonical fully-parenthesized debug rendering.
//!
//! Trees are immutable values; structural equality is `PartialEq`. The
//! sampler only produces shapes the controlled language can express
//! unambiguously (see `verbalize` for the boundary), and builds additive
//! chains left-associated so the parser's reconstruction matches exactly.

use rand::Rng;
use serde::{Deserialize, Serialize};
use std::fmt;

/// Variable alphabet of the generated corpora.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum VarName {
    X,
    Y,
    Z,
    T,
}

impl VarName {
    pub const ALL: [VarName; 4] = [VarName::X, VarName::Y, VarName::Z, VarName::T];

    pub fn as_str(self) -> &'static str {
        match self {
            VarName::X => "x",
            VarName::Y => "y",
            VarName::Z => "z",
            VarName::T => "t",
        }
    }

    pub fn from_str(s: &str) -> Option<VarName> {
        match s {
            "x" => Some(VarName::X),
            "y" => Some(VarName::Y),
            "z" => Some(VarName::Z),
            "t" => Some(VarName::T),
            _ => None,
        }
    }
}

impl fmt::Display for VarName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TrigKind {
    Sin,
    Cos,
    Tan,
}

impl TrigKind {
    pub fn word(self) -> &'static str {
        match self {
            TrigKind::Sin => "sin",
            TrigKind::Cos => "cos",
            TrigKind::Tan => "tan",
        }
    }
}

/// Approach side of a limit: `a`, `a-` or `a+`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LimitSide {
    Both,
    Left,
    Right,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RelOp {
    Eq,
    Gt,
    Lt,
    Ge,
    Le,
}

impl RelOp {
    pub fn symbol(self) -> &'static str {
        match self {
            RelOp::Eq => "=",
            RelOp::Gt => ">",
            RelOp::Lt => "<",
            RelOp::Ge => ">=",
            RelOp::Le => "<=",
        }
    }
}

/// Immutable expression tree.
///
/// Invariants maintained by the sampler (not by the type):
/// `Mul`'s left child is a `Const` or `Decimal`; `System` children are both
/// `Relation(Eq, ..)`; generated depth stays within the configured budget.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Expr {
    /// Non-negative integer constant.
    Const(u32),
    /// Decimal constant: integer part plus explicit fraction digits
    /// (possibly none, rendering as a trailing point).
    Decimal(u32, Vec<u8>),
    Var(VarName),
    Neg(Box<Expr>),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    /// Scalar multiple, `10x`; left child is the scalar.
    Mul(Box<Expr>, Box<Expr>),
    Frac(Box<Expr>, Box<Expr>),
    /// `Pow(base, exponent)`.
    Pow(Box<Expr>, Box<Expr>),
    /// `Root(degree, radicand)`.
    Root(u32, Box<Expr>),
    /// `Log(base, argument)`.
    Log(Box<Expr>, Box<Expr>),
    Exp(Box<Expr>),
    Trig(TrigKind, Box<Expr>),
    Integral(Box<Expr>, VarName),
    FiniteIntegral {
        body: Box<Expr>,
        var: VarName,
        lower: Box<Expr>,
        upper: Box<Expr>,
    },
    Derivative(Box<Expr>, VarName),
    Limit {
        body: Box<Expr>,
        var: VarName,
        target: Box<Expr>,
        side: LimitSide,
    },
    Relation(RelOp, Box<Expr>, Box<Expr>),
    System(Box<Expr>, Box<Expr>),
}

impl Expr {
    pub fn var(v: VarName) -> Expr {
        Expr::Var(v)
    }
    pub fn con(n: u32) -> Expr {
        Expr::Const(n)
    }
    pub fn neg(e: Expr) -> Expr {
        Expr::Neg(Box::new(e))
    }
    pub fn add(l: Expr, r: Expr) -> Expr {
        Expr::Add(Box::new(l), Box::new(r))
    }
    pub fn sub(l: Expr, r: Expr) -> Expr {
        Expr::Sub(Box::new(l), Box::new(r))
    }
    pub fn mul(l: Expr, r: Expr) -> Expr {
        Expr::Mul(Box::new(l), Box::new(r))
    }
    pub fn frac(n: Expr, d: Expr) -> Expr {
        Expr::Frac(Box::new(n), Box::new(d))
    }
    pub fn pow(b: Expr, e: Expr) -> Expr {
        Expr::Pow(Box::new(b), Box::new(e))
    }
    pub fn root(k: u32, e: Expr) -> Expr {
        Expr::Root(k, Box::new(e))
    }
    pub fn log(base: Expr, arg: Expr) -> Expr {
        Expr::Log(Box::new(base), Box::new(arg))
    }
    pub fn exp(e: Expr) -> Expr {
        Expr::Exp(Box::new(e))
    }
    pub fn trig(k: TrigKind, e: Expr) -> Expr {
        Expr::Trig(k, Box::new(e))
    }
    pub fn integral(body: Expr, var: VarName) -> Expr {
        Expr::Integral(Box::new(body), var)
    }
    pub fn finite_integral(body: Expr, var: VarName, lower: Expr, upper: Expr) -> Expr {
        Expr::FiniteIntegral {
            body: Box::new(body),
            var,
            lower: Box::new(lower),
            upper: Box::new(upper),
        }
    }
    pub fn derivative(body: Expr, var: VarName) -> Expr {
        Expr::Derivative(Box::new(body), var)
    }
    pub fn limit(body: Expr, var: VarName, target: Expr, side: LimitSide) -> Expr {
        Expr::Limit {
            body: Box::new(body),
            var,
            target: Box::new(target),
            side,
        }
    }
    pub fn relation(op: RelOp, l: Expr, r: Expr) -> Expr {
        Expr::Relation(op, Box::new(l), Box::new(r))
    }
    pub fn system(a: Expr, b: Expr) -> Expr {
        Expr::System(Box::new(a), Box::new(b))
    }

    /// Tree depth; leaves count 1.
    pub fn depth(&self) -> usize {
        match self {
            Expr::Const(_) | Expr::Decimal(..) | Expr::Var(_) => 1,
            Expr::Neg(e) | Expr::Exp(e) | Expr::Trig(_, e) | Expr::Root(_, e) => 1 + e.depth(),
            Expr::Integral(e, _) | Expr::Derivative(e, _) => 1 + e.depth(),
            Expr::Add(l, r)
            | Expr::Sub(l, r)
            | Expr::Mul(l, r)
            | Expr::Frac(l, r)
            | Expr::Pow(l, r)
            | Expr::Log(l, r)
            | Expr::Relation(_, l, r)
            | Expr::System(l, r) => 1 + l.depth().max(r.depth()),
            Expr::FiniteIntegral {
                body, lower, upper, ..
            } => 1 + body.depth().max(lower.depth()).max(upper.depth()),
            Expr::Limit { body, target, .. } => 1 + body.depth().max(target.depth()),
        }
    }

    /// Construct-nesting depth, the measure the sampler's budget bounds.
    /// Flat additive chains of simple terms count as one level; fractions,
    /// extended function arguments and operator bodies add a level each.
    pub fn nesting_depth(&self) -> usize {
        fn atomic(e: &Expr) -> bool {
            matches!(e, Expr::Const(_) | Expr::Decimal(..) | Expr::Var(_))
        }
        match self {
            Expr::Const(_) | Expr::Decimal(..) | Expr::Var(_) => 1,
            Expr::Neg(t) => t.nesting_depth(),
            Expr::Add(l, r) | Expr::Sub(l, r) => l.nesting_depth().max(r.nesting_depth()),
            Expr::Mul(_, r) => r.nesting_depth(),
            Expr::Pow(b, _) | Expr::Root(_, b) => {
                if atomic(b) {
                    1
                } else {
                    1 + b.nesting_depth()
                }
            }
            Expr::Exp(a) | Expr::Trig(_, a) | Expr::Log(_, a) => {
                if atomic(a) {
                    1
                } else {
                    1 + a.nesting_depth()
                }
            }
            Expr::Frac(n, d) => 1 + n.nesting_depth().max(d.nesting_depth()),
            Expr::Integral(body, _) | Expr::Derivative(body, _) => 1 + body.nesting_depth(),
            Expr::FiniteIntegral { body, .. } => 1 + body.nesting_depth(),
            Expr::Limit { body, .. } => 1 + body.nesting_depth(),
            Expr::Relation(_, l, r) | Expr::System(l, r) => {
                l.nesting_depth().max(r.nesting_depth())
            }
        }
    }
}

/// Canonical injective rendering used for golden files and deduplication.
pub fn to_canonical_string(e: &Expr) -> String {
    let mut s = String::new();
    write_canonical(e, &mut s);
    s
}

fn write_canonical(e: &Expr, out: &mut String) {
    use std::fmt::Write;
    match e {
        Expr::Const(n) => {
            let _ = write!(out, "{n}");
        }
        Expr::Decimal(ip, ds) => {
            let _ = write!(out, "{ip}.");
            for d in ds {
                let _ = write!(out, "{d}");
            }
        }
        Expr::Var(v) => out.push_str(v.as_str()),
        Expr::Neg(x) => {
            out.push_str("(-");
            write_canonical(x, out);
            out.push(')');
        }
        Expr::Add(l, r) => binary(out, l, "+", r),
        Expr::Sub(l, r) => binary(out, l, "-", r),
        Expr::Mul(l, r) => binary(out, l, "*", r),
        Expr::Frac(n, d) => {
            out.push('(');
            write_canonical(n, out);
            out.push_str("/(");
            write_canonical(d, out);
            out.push_str("))");
        }
        Expr::Pow(b, x) => {
            out.push('(');
            write_canonical(b, out);
            out.push_str("^(");
            write_canonical(x, out);
            out.push_str("))");
        }
        Expr::Root(k, x) => {
            let _ = write!(out, "(root[{k}](");
            write_canonical(x, out);
            out.push_str("))");
        }
        Expr::Log(b, a) => {
            out.push_str("(log[");
            write_canonical(b, out);
            out.push_str("](");
            write_canonical(a, out);
            out.push_str("))");
        }
        Expr::Exp(a) => {
            out.push_str("(exp(");
            write_canonical(a, out);
            out.push_str("))");
        }
        Expr::Trig(k, a) => {
            let _ = write!(out, "({}(", k.word());
            write_canonical(a, out);
            out.push_str("))");
        }
        Expr::Integral(body, v) => {
            out.push_str("(int(");
            write_canonical(body, out);
            let _ = write!(out, ")d{v})");
        }
        Expr::FiniteIntegral {
            body,
            var,
            lower,
            upper,
        } => {
            out.push_str("(int[");
            write_canonical(lower, out);
            out.push(',');
            write_canonical(upper, out);
            out.push_str("](");
            write_canonical(body, out);
            let _ = write!(out, ")d{var})");
        }
        Expr::Derivative(body, v) => {
            let _ = write!(out, "(d/d{v}(");
            write_canonical(body, out);
            out.push_str("))");
        }
        Expr::Limit {
            body,
            var,
            target,
            side,
        } => {
            let _ = write!(out, "(lim[{var}->");
            write_canonical(target, out);
            out.push_str(match side {
                LimitSide::Both => "",
                LimitSide::Left => "-",
                LimitSide::Right => "+",
            });
            out.push_str("](");
            write_canonical(body, out);
            out.push_str("))");
        }
        Expr::Relation(op, l, r) => {
            out.push('(');
            write_canonical(l, out);
            out.push_str(op.symbol());
            write_canonical(r, out);
            out.push(')');
        }
        Expr::System(a, b) => {
            out.push('{');
            write_canonical(a, out);
            out.push(';');
            write_canonical(b, out);
            out.push('}');
        }
    }
}

fn binary(out: &mut String, l: &Expr, op: &str, r: &Expr) {
    out.push('(');
    write_canonical(l, out);
    out.push_str(op);
    write_canonical(r, out);
    out.push(')');
}

/// The seven equation categories of the corpus.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, PartialOrd, Ord)]
pub enum Category {
    #[serde(rename = "LE")]
    LinearEquation,
    #[serde(rename = "IE")]
    Inequality,
    #[serde(rename = "PLE")]
    PairOfLinearEquations,
    #[serde(rename = "LT")]
    Limit,
    #[serde(rename = "DI")]
    Differentiation,
    #[serde(rename = "IN")]
    Integral,
    #[serde(rename = "FIN")]
    FiniteIntegral,
}

impl Category {
    pub const ALL: [Category; 7] = [
        Category::LinearEquation,
        Category::Inequality,
        Category::PairOfLinearEquations,
        Category::Limit,
        Category::Differentiation,
        Category::Integral,
        Category::FiniteIntegral,
    ];

    pub fn code(self) -> &'static str {
        match self {
            Category::LinearEquation => "LE",
            Category::Inequality => "IE",
            Category::PairOfLinearEquations => "PLE",
            Category::Limit => "LT",
            Category::Differentiation => "DI",
            Category::Integral => "IN",
            Category::FiniteIntegral => "FIN",
        }
    }

    pub fn from_code(code: &str) -> Option<Category> {
        Category::ALL.iter().copied().find(|c| c.code() == code)
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

/// Draw one equation of the given category. Pure function of the rng state
/// and arguments: reseeding with the same seed reproduces the same tree.
pub fn sample_equation<R: Rng>(category: Category, rng: &mut R, depth_budget: usize) -> Expr {
    let budget = depth_budget.max(1);
    match category {
        Category::LinearEquation => sample_relation(rng, RelOp::Eq, budget),
        Category::Inequality => {
            let op = match rng.random_range(0..4u32) {
                0 => RelOp::Gt,
                1 => RelOp::Lt,
                2 => RelOp::Ge,
                _ => RelOp::Le,
            };
            sample_relation(rng, op, budget)
        }
        Category::PairOfLinearEquations => {
            let a = sample_pair_leg(rng);
            let b = sample_pair_leg(rng);
            Expr::system(a, b)
        }
        Category::Limit => {
            let var = pick_var(rng);
            let body = if rng.random_range(0..4u32) == 0 {
                // the classic ratio shape, e.g. sin x over x
                let k = pick_trig(rng);
                Expr::frac(Expr::trig(k, Expr::var(var)), Expr::var(var))
            } else {
                sample_body_chain(rng, var, budget)
            };
            let target = sample_limit_target(rng);
            let side = match rng.random_range(0..10u32) {
                0..=5 => LimitSide::Both,
                6 | 7 => LimitSide::Left,
                _ => LimitSide::Right,
            };
            Expr::limit(body, var, target, side)
        }
        Category::Differentiation => {
            let var = pick_var(rng);
            Expr::derivative(sample_body_chain(rng, var, budget), var)
        }
        Category::Integral => {
            let var = pick_var(rng);
            Expr::integral(sample_body_chain(rng, var, budget), var)
        }
        Category::FiniteIntegral => {
            let var = pick_var(rng);
            let body = sample_body_chain(rng, var, budget);
            let lo_neg = rng.random_range(0..5u32) == 0;
            let lo_mag = rng.random_range(0..=5u32);
            let lower = if lo_neg && lo_mag > 0 {
                Expr::neg(Expr::con(lo_mag))
            } else {
                Expr::con(lo_mag)
            };
            let upper = Expr::con(rng.random_range(lo_mag + 1..=lo_mag + 9));
            Expr::finite_integral(body, var, lower, upper)
        }
    }
}

fn pick_var<R: Rng>(rng: &mut R) -> VarName {
    VarName::ALL[rng.random_range(0..VarName::ALL.len())]
}

fn pick_trig<R: Rng>(rng: &mut R) -> TrigKind {
    match rng.random_range(0..3u32) {
        0 => TrigKind::Sin,
        1 => TrigKind::Cos,
        _ => TrigKind::Tan,
    }
}

fn small_const<R: Rng>(rng: &mut R) -> u32 {
    rng.random_range(0..=20)
}

fn sample_limit_target<R: Rng>(rng: &mut R) -> Expr {
    match rng.random_range(0..10u32) {
        0..=6 => Expr::con(rng.random_range(0..=10)),
        7 => Expr::neg(Expr::con(rng.random_range(1..=10))),
        _ => Expr::var(pick_var(rng)),
    }
}

/// Left-fold terms into an additive chain; ops chosen per joint.
fn fold_chain<R: Rng>(rng: &mut R, terms: Vec<Expr>) -> Expr {
    let mut it = terms.into_iter();
    let mut acc = it.next().expect("chain needs at least one term");
    for t in it {
        acc = if rng.random_range(0..2u32) == 0 {
            Expr::add(acc, t)
        } else {
            Expr::sub(acc, t)
        };
    }
    acc
}

/// One side of a linear (in)equality: constants, variables and scalar
/// multiples only.
fn sample_linear_side<R: Rng>(rng: &mut R, require_var: bool, max_terms: usize) -> Expr {
    let n_terms = rng.random_range(1..=max_terms.max(1));
    let var_slot = rng.random_range(0..n_terms);
    let mut terms = Vec::with_capacity(n_terms);
    for i in 0..n_terms {
        let t = if require_var && i == var_slot {
            sample_var_term(rng)
        } else {
            match rng.random_range(0..5u32) {
                0 | 1 => sample_var_term(rng),
                2 | 3 => Expr::con(small_const(rng)),
                _ => sample_decimal(rng),
            }
        };
        terms.push(t);
    }
    fold_chain(rng, terms)
}

fn sample_var_term<R: Rng>(rng: &mut R) -> Expr {
    let v = Expr::var(pick_var(rng));
    if rng.random_range(0..3u32) == 0 {
        Expr::mul(Expr::con(rng.random_range(2..=12)), v)
    } else {
        v
    }
}

fn sample_decimal<R: Rng>(rng: &mut R) -> Expr {
    let ip = rng.random_range(0..=20u32);
    let n_digits = rng.random_range(1..=2usize);
    let digits = (0..n_digits)
        .map(|_| rng.random_range(0..=9u32) as u8)
        .collect();
    Expr::Decimal(ip, digits)
}

fn sample_relation<R: Rng>(rng: &mut R, op: RelOp, budget: usize) -> Expr {
    let max_terms = budget.clamp(1, 3);
    let lhs = sample_linear_side(rng, true, max_terms);
    let rhs = if rng.random_range(0..5u32) == 0 {
        sample_linear_side(rng, false, 2)
    } else {
        Expr::con(small_const(rng))
    };
    Expr::relation(op, lhs, rhs)
}

/// One equation of a pair: `a x (+|-) b y = c` shapes over x and y.
fn sample_pair_leg<R: Rng>(rng: &mut R) -> Expr {
    let tx = if rng.random_range(0..2u32) == 0 {
        Expr::var(VarName::X)
    } else {
        Expr::mul(Expr::con(rng.random_range(2..=9)), Expr::var(VarName::X))
    };
    let ty = if rng.random_range(0..2u32) == 0 {
        Expr::var(VarName::Y)
    } else {
        Expr::mul(Expr::con(rng.random_range(2..=9)), Expr::var(VarName::Y))
    };
    let lhs = if rng.random_range(0..2u32) == 0 {
        Expr::add(tx, ty)
    } else {
        Expr::sub(tx, ty)
    };
    Expr::relation(RelOp::Eq, lhs, Expr::con(small_const(rng)))
}

/// An atom biased toward the ambient variable of the enclosing operator.
fn sample_atom<R: Rng>(rng: &mut R, var: VarName) -> Expr {
    match rng.random_range(0..6u32) {
        0 | 1 | 2 => Expr::var(var),
        3 => Expr::var(pick_var(rng)),
        _ => Expr::con(small_const(rng)),
    }
}

/// A closed molecule: verbalizes to a phrase that cannot absorb following
/// tokens, so it may appear anywhere in a chain.
fn sample_closed_molecule<R: Rng>(rng: &mut R, var: VarName) -> Expr {
    match rng.random_range(0..10u32) {
        0 | 1 | 2 => sample_atom(rng, var),
        3 => Expr::mul(Expr::con(rng.random_range(2..=12)), Expr::var(var)),
        4 => Expr::pow(sample_atom(rng, var), Expr::con(2)),
        5 => Expr::mul(
            Expr::con(rng.random_range(2..=9)),
            Expr::pow(Expr::var(var), Expr::con(2)),
        ),
        6 => Expr::trig(pick_trig(rng), Expr::var(var)),
        7 => Expr::log(
            Expr::con(rng.random_range(2..=10)),
            sample_atom(rng, var),
        ),
        8 => Expr::mul(
            Expr::con(rng.random_range(2..=9)),
            Expr::trig(pick_trig(rng), Expr::var(var)),
        ),
        _ => Expr::con(small_const(rng)),
    }
}

/// Chain usable inside an extended scope (fraction denominator or an
/// `of all` argument): closed molecules, with at most a final simple
/// fraction when nesting headroom remains.
fn sample_soft_chain<R: Rng>(rng: &mut R, var: VarName, headroom: usize) -> Expr {
    let n = rng.random_range(1..=2usize);
    let mut terms: Vec<Expr> = (0..n).map(|_| sample_closed_molecule(rng, var)).collect();
    if headroom >= 2 && rng.random_range(0..6u32) == 0 {
        let num = sample_closed_molecule(rng, var);
        let den = sample_soft_chain(rng, var, headroom - 1);
        terms.push(Expr::frac(num, den));
    }
    fold_chain(rng, terms)
}

/// A molecule that opens an extended scope: simple fraction, a function of
/// an extended argument, or an ordinal power/root. Needs `headroom >= 2`.
fn sample_open_molecule<R: Rng>(rng: &mut R, var: VarName, headroom: usize) -> Expr {
    let inner = headroom - 1;
    match rng.random_range(0..8u32) {
        0 | 1 => Expr::frac(
            sample_closed_molecule(rng, var),
            sample_soft_chain(rng, var, inner),
        ),
        2 => Expr::exp(sample_atom(rng, var)),
        3 => Expr::exp(sample_soft_chain(rng, var, inner)),
        4 => Expr::pow(
            sample_soft_chain(rng, var, inner),
            Expr::con(rng.random_range(2..=9)),
        ),
        5 => Expr::pow(Expr::con(rng.random_range(2..=5)), Expr::var(var)),
        6 => Expr::root(
            rng.random_range(2..=4),
            if rng.random_range(0..2u32) == 0 {
                sample_soft_chain(rng, var, inner)
            } else {
                sample_atom(rng, var)
            },
        ),
        _ => Expr::pow(sample_atom(rng, var), Expr::con(rng.random_range(3..=9))),
    }
}

/// Body of a limit / derivative / integral: a hard-scope chain that may mix
/// fractions, powers, roots and function applications. The enclosing
/// operator consumes one nesting level of the budget.
fn sample_body_chain<R: Rng>(rng: &mut R, var: VarName, budget: usize) -> Expr {
    let headroom = budget.saturating_sub(1).max(1);
    let n = rng.random_range(1..=3usize);
    let mut terms = Vec::with_capacity(n + 1);
    // a leading fraction may carry a full additive chain as its numerator
    if headroom >= 2 && rng.random_range(0..5u32) == 0 {
        let num = sample_soft_chain(rng, var, headroom - 1);
        let den = sample_soft_chain(rng, var, headroom - 1);
        terms.push(Expr::frac(num, den));
    }
    for _ in 0..n {
        let t = if headroom >= 2 && rng.random_range(0..3u32) == 0 {
            sample_open_molecule(rng, var, headroom)
        } else {
            sample_closed_molecule(rng, var)
        };
        terms.push(t);
    }
    fold_chain(rng, terms)
}
