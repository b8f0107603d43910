//! Deterministic mapping from an expression tree to its controlled-English
//! description.
//!
//! The language has no brackets; scope is carried by word order and the
//! marker word "all":
//!
//! * plain "over" takes the immediately preceding molecule as numerator and
//!   everything up to the next closer as denominator ("x over y plus z" is
//!   x/(y+z));
//! * "all over" closes the pending additive chain and makes the whole chain
//!   the numerator ("x plus y all over z" is (x+y)/z);
//! * "all plus" / "all minus" close every open extended scope — fraction
//!   denominators and `of all` function arguments — and continue the
//!   enclosing chain ("x minus y all over z all plus t" is (x-y)/z + t);
//! * prefix functions written with "of" take one closed molecule as argument
//!   unless followed by "of all", which opens an extended scope
//!   ("exponential of all one plus x" is e^(1+x)).
//!
//! Within an extended scope a fraction must come last (its denominator runs
//! to the scope's closer) and a chain-numerator fraction cannot appear at
//! all; the sampler in `expr` stays inside this fragment, and the round-trip
//! tests against `parse` are the arbiter.

use crate::expr::{Expr, LimitSide, RelOp, VarName};
use crate::words::{number_to_word_tokens, ordinal_word, ONES};

/// A description: the text and its whitespace token split.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Description {
    pub text: String,
    pub tokens: Vec<String>,
}

impl Description {
    fn from_tokens(tokens: Vec<&'static str>) -> Description {
        Description {
            text: tokens.join(" "),
            tokens: tokens.into_iter().map(str::to_owned).collect(),
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Level {
    /// Relation side, operator body or `log of all` argument: "all" markers
    /// are emitted here.
    Hard,
    /// Fraction denominator or `of all` argument: plain operators only.
    Soft,
}

/// Render `e` as its unique description. Constants must be within the word
/// range (0..=9999); the sampler and parser only produce such trees.
pub fn verbalize(e: &Expr) -> Description {
    let mut out = Vec::new();
    emit_top(e, &mut out);
    Description::from_tokens(out)
}

fn emit_top(e: &Expr, out: &mut Vec<&'static str>) {
    match e {
        Expr::Relation(op, l, r) => {
            emit_chain(l, Level::Hard, out);
            out.extend_from_slice(relation_words(*op));
            emit_chain(r, Level::Hard, out);
        }
        Expr::System(a, b) => {
            emit_top(a, out);
            out.push("and");
            emit_top(b, out);
        }
        other => emit_chain(other, Level::Hard, out),
    }
}

fn relation_words(op: RelOp) -> &'static [&'static str] {
    match op {
        RelOp::Eq => &["equal", "to"],
        RelOp::Gt => &["greater", "than"],
        RelOp::Lt => &["less", "than"],
        RelOp::Ge => &["greater", "than", "or", "equal", "to"],
        RelOp::Le => &["less", "than", "or", "equal", "to"],
    }
}

/// Flatten the left spine of an additive chain.
fn flatten_chain<'a>(e: &'a Expr, terms: &mut Vec<(Option<&'static str>, &'a Expr)>) {
    match e {
        Expr::Add(l, r) => {
            flatten_chain(l, terms);
            terms.push((Some("plus"), r));
        }
        Expr::Sub(l, r) => {
            flatten_chain(l, terms);
            terms.push((Some("minus"), r));
        }
        other => terms.push((None, other)),
    }
}

fn emit_chain(e: &Expr, level: Level, out: &mut Vec<&'static str>) {
    let mut terms = Vec::new();
    flatten_chain(e, &mut terms);
    for i in 0..terms.len() {
        let (op, term) = terms[i];
        if let Some(op) = op {
            let marked = level == Level::Hard
                && (ends_open(terms[i - 1].1) || matches!(term, Expr::Frac(..)));
            if marked {
                out.push("all");
            }
            out.push(op);
        }
        emit_molecule(term, out);
    }
}

/// Whether the molecule's phrase ends with an extended scope still open, or
/// was written with "of": either way the following operator carries "all".
fn ends_open(e: &Expr) -> bool {
    match e {
        Expr::Frac(..) | Expr::Exp(_) | Expr::Root(..) => true,
        Expr::Pow(b, x) => !is_postfix_square(b, x),
        Expr::Trig(_, a) => !is_atom(a),
        Expr::Mul(_, r) => ends_open(r),
        Expr::Neg(t) => ends_open(t),
        _ => false,
    }
}

fn is_postfix_square(base: &Expr, exponent: &Expr) -> bool {
    matches!(base, Expr::Const(_) | Expr::Decimal(..) | Expr::Var(_))
        && *exponent == Expr::Const(2)
}

/// Atoms: what a bare trig argument, bound or limit target may be.
fn is_atom(e: &Expr) -> bool {
    match e {
        Expr::Const(_) | Expr::Decimal(..) | Expr::Var(_) => true,
        Expr::Neg(t) => is_atom(t),
        _ => false,
    }
}

/// Closed molecules: phrases that cannot absorb following tokens. These may
/// serve as plain-"over" numerators and as plain "of" arguments.
pub(crate) fn is_closed_molecule(e: &Expr) -> bool {
    match e {
        Expr::Const(_) | Expr::Decimal(..) | Expr::Var(_) => true,
        Expr::Neg(t) => is_closed_molecule(t),
        Expr::Mul(_, r) => is_closed_molecule(r),
        Expr::Pow(b, x) => {
            is_postfix_square(b, x) || (is_simple_exponent(x) && is_closed_molecule(b))
        }
        Expr::Root(_, b) => is_closed_molecule(b),
        Expr::Exp(a) => is_closed_molecule(a),
        Expr::Trig(_, a) => is_atom(a),
        Expr::Log(b, a) => is_atom(b) && is_closed_molecule(a),
        _ => false,
    }
}

fn is_simple_exponent(e: &Expr) -> bool {
    matches!(e, Expr::Const(_) | Expr::Var(_))
}

fn emit_number(n: u32, out: &mut Vec<&'static str>) {
    out.extend(number_to_word_tokens(n).expect("constant exceeds the 0..=9999 word range"));
}

fn emit_var(v: VarName, out: &mut Vec<&'static str>) {
    out.push(v.as_str());
}

fn emit_molecule(e: &Expr, out: &mut Vec<&'static str>) {
    match e {
        Expr::Const(n) => emit_number(*n, out),
        Expr::Decimal(ip, digits) => {
            emit_number(*ip, out);
            out.push("point");
            for d in digits {
                out.push(ONES[*d as usize]);
            }
        }
        Expr::Var(v) => emit_var(*v, out),
        Expr::Neg(t) => {
            out.push("negative");
            emit_molecule(t, out);
        }
        Expr::Mul(c, r) => {
            emit_molecule(c, out);
            out.push("times");
            emit_molecule(r, out);
        }
        Expr::Pow(b, x) if is_postfix_square(b, x) => {
            emit_molecule(b, out);
            out.push("square");
        }
        Expr::Pow(b, x) => {
            match &**x {
                Expr::Const(k) => match ordinal_word(*k) {
                    Some(w) => out.push(w),
                    None => emit_number(*k, out),
                },
                Expr::Var(v) => emit_var(*v, out),
                other => emit_molecule(other, out),
            }
            out.push("power");
            out.push("of");
            emit_fn_arg(b, out);
        }
        Expr::Root(k, b) => {
            match ordinal_word(*k) {
                Some(w) => out.push(w),
                None => emit_number(*k, out),
            }
            out.push("root");
            out.push("of");
            emit_fn_arg(b, out);
        }
        Expr::Exp(a) => {
            out.push("exponential");
            out.push("of");
            emit_fn_arg(a, out);
        }
        Expr::Trig(k, a) => {
            out.push(k.word());
            if is_atom(a) {
                emit_molecule(a, out);
            } else {
                out.push("of");
                out.push("all");
                emit_chain(a, Level::Soft, out);
            }
        }
        Expr::Log(b, a) => {
            out.push("log");
            if is_closed_molecule(a) {
                emit_molecule(a, out);
            } else {
                out.push("of");
                out.push("all");
                emit_chain(a, Level::Hard, out);
            }
            out.push("to");
            out.push("base");
            emit_molecule(b, out);
        }
        Expr::Frac(n, d) => {
            if is_closed_molecule(n) {
                emit_molecule(n, out);
            } else {
                emit_chain(n, Level::Hard, out);
                out.push("all");
            }
            out.push("over");
            emit_chain(d, Level::Soft, out);
        }
        Expr::Integral(body, v) => {
            out.push("integral");
            out.push("of");
            emit_chain(body, Level::Hard, out);
            out.extend_from_slice(&["with", "respect", "to"]);
            emit_var(*v, out);
        }
        Expr::FiniteIntegral {
            body,
            var,
            lower,
            upper,
        } => {
            out.push("integral");
            out.push("of");
            emit_chain(body, Level::Hard, out);
            out.extend_from_slice(&["with", "respect", "to"]);
            emit_var(*var, out);
            out.extend_from_slice(&["from", "lower", "limit"]);
            emit_molecule(lower, out);
            out.extend_from_slice(&["to", "upper", "limit"]);
            emit_molecule(upper, out);
        }
        Expr::Derivative(body, v) => {
            out.push("differentiation");
            out.push("of");
            emit_chain(body, Level::Hard, out);
            out.extend_from_slice(&["with", "respect", "to"]);
            emit_var(*v, out);
        }
        Expr::Limit {
            body,
            var,
            target,
            side,
        } => {
            out.push("limit");
            out.push("of");
            emit_chain(body, Level::Hard, out);
            out.push("as");
            emit_var(*var, out);
            out.extend_from_slice(&["approaches", "to"]);
            emit_molecule(target, out);
            match side {
                LimitSide::Both => {}
                LimitSide::Left => out.extend_from_slice(&["from", "the", "left"]),
                LimitSide::Right => out.extend_from_slice(&["from", "the", "right"]),
            }
        }
        // relations and systems only occur at the top; fall through for
        // pathological hand-built trees
        other => emit_top(other, out),
    }
}

fn emit_fn_arg(e: &Expr, out: &mut Vec<&'static str>) {
    if is_closed_molecule(e) {
        emit_molecule(e, out);
    } else {
        out.push("all");
        emit_chain(e, Level::Soft, out);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::{sample_equation, Category, TrigKind};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn x() -> Expr {
        Expr::var(VarName::X)
    }
    fn y() -> Expr {
        Expr::var(VarName::Y)
    }
    fn z() -> Expr {
        Expr::var(VarName::Z)
    }
    fn t() -> Expr {
        Expr::var(VarName::T)
    }

    fn v(e: &Expr) -> String {
        verbalize(e).text
    }

    #[test]
    fn phrase_table() {
        let cases: Vec<(Expr, &str)> = vec![
            (Expr::mul(Expr::con(10), x()), "ten times x"),
            (Expr::pow(x(), Expr::con(2)), "x square"),
            (Expr::root(2, x()), "second root of x"),
            (Expr::frac(x(), Expr::con(10)), "x over ten"),
            (
                Expr::pow(Expr::add(x(), y()), Expr::con(2)),
                "second power of all x plus y",
            ),
            (Expr::log(Expr::con(2), x()), "log x to base two"),
            (Expr::frac(x(), y()), "x over y"),
            (Expr::frac(x(), Expr::add(y(), z())), "x over y plus z"),
            (Expr::frac(Expr::add(x(), y()), z()), "x plus y all over z"),
            (
                Expr::frac(x(), Expr::pow(y(), Expr::con(2))),
                "x over y square",
            ),
            (
                Expr::add(x(), Expr::frac(y(), z())),
                "x all plus y over z",
            ),
            (
                Expr::frac(Expr::sub(x(), y()), Expr::add(y(), z())),
                "x minus y all over y plus z",
            ),
            (
                Expr::frac(Expr::pow(x(), Expr::con(2)), y()),
                "x square over y",
            ),
            (
                Expr::add(Expr::frac(Expr::sub(x(), y()), z()), t()),
                "x minus y all over z all plus t",
            ),
            (
                Expr::exp(Expr::add(Expr::con(1), x())),
                "exponential of all one plus x",
            ),
            (
                Expr::add(Expr::exp(x()), Expr::con(1)),
                "exponential of x all plus one",
            ),
            (
                Expr::sub(Expr::exp(Expr::add(Expr::con(1), x())), Expr::con(1)),
                "exponential of all one plus x all minus one",
            ),
            (
                Expr::integral(x(), VarName::X),
                "integral of x with respect to x",
            ),
            (
                Expr::finite_integral(x(), VarName::X, Expr::con(0), Expr::con(1)),
                "integral of x with respect to x from lower limit zero to upper limit one",
            ),
            (
                Expr::limit(
                    Expr::frac(Expr::trig(TrigKind::Sin, x()), x()),
                    VarName::X,
                    Expr::con(0),
                    LimitSide::Both,
                ),
                "limit of sin x over x as x approaches to zero",
            ),
            (
                Expr::derivative(Expr::pow(x(), Expr::con(2)), VarName::X),
                "differentiation of x square with respect to x",
            ),
            (
                Expr::relation(RelOp::Eq, Expr::sub(x(), Expr::con(6)), Expr::con(3)),
                "x minus six equal to three",
            ),
            (
                Expr::relation(RelOp::Gt, Expr::add(x(), Expr::con(7)), Expr::con(10)),
                "x plus seven greater than ten",
            ),
            (
                Expr::system(
                    Expr::relation(
                        RelOp::Eq,
                        Expr::add(x(), Expr::mul(Expr::con(2), y())),
                        Expr::con(7),
                    ),
                    Expr::relation(RelOp::Eq, Expr::sub(x(), y()), Expr::con(3)),
                ),
                "x plus two times y equal to seven and x minus y equal to three",
            ),
        ];
        for (expr, expected) in cases {
            assert_eq!(v(&expr), expected, "for {expr:?}");
        }
    }

    #[test]
    fn one_sided_limits_and_relations() {
        let lim = Expr::limit(x(), VarName::X, Expr::con(2), LimitSide::Left);
        assert_eq!(v(&lim), "limit of x as x approaches to two from the left");
        let lim = Expr::limit(x(), VarName::X, Expr::con(2), LimitSide::Right);
        assert_eq!(v(&lim), "limit of x as x approaches to two from the right");
        let rel = Expr::relation(RelOp::Ge, x(), Expr::con(3));
        assert_eq!(v(&rel), "x greater than or equal to three");
        let rel = Expr::relation(RelOp::Le, x(), Expr::con(3));
        assert_eq!(v(&rel), "x less than or equal to three");
    }

    #[test]
    fn negatives_and_decimals() {
        assert_eq!(v(&Expr::neg(x())), "negative x");
        assert_eq!(v(&Expr::Decimal(3, vec![1, 4])), "three point one four");
        assert_eq!(v(&Expr::Decimal(32, vec![])), "thirty two point");
        let rel = Expr::relation(
            RelOp::Eq,
            Expr::add(Expr::neg(Expr::con(2)), x()),
            Expr::con(5),
        );
        assert_eq!(v(&rel), "negative two plus x equal to five");
    }

    #[test]
    fn exponent_phrasings() {
        // x-th power of three is 3^x
        let p = Expr::pow(Expr::con(3), x());
        assert_eq!(v(&p), "x power of three");
        let p = Expr::pow(x(), Expr::con(3));
        assert_eq!(v(&p), "third power of x");
        let p = Expr::pow(Expr::trig(TrigKind::Sin, x()), Expr::con(2));
        assert_eq!(v(&p), "second power of sin x");
    }

    #[test]
    fn tokens_match_text_and_are_lowercase() {
        for seed in 0..500u64 {
            let cat = Category::ALL[(seed % 7) as usize];
            let e = sample_equation(cat, &mut ChaCha8Rng::seed_from_u64(seed), 4);
            let d = verbalize(&e);
            let split: Vec<String> = d.text.split_whitespace().map(str::to_owned).collect();
            assert_eq!(d.tokens, split);
            assert!(d.tokens.iter().all(|t| t.chars().all(|c| !c.is_uppercase())));
        }
    }

    #[test]
    fn determinism() {
        let e = sample_equation(
            Category::FiniteIntegral,
            &mut ChaCha8Rng::seed_from_u64(99),
            4,
        );
        assert_eq!(verbalize(&e), verbalize(&e));
    }
}
