//! Parser from controlled-English descriptions back to expression trees.
//!
//! Single-pass recursive descent mirroring the scope rules documented in
//! `verbalize`: extended scopes (fraction denominators, `of all` arguments)
//! parse until a scope-closing token and propagate it outward, so an
//! "all plus" closes every open extended scope at once, while hard
//! delimiters ("with respect to", "as", "to base", relation words) are
//! validated by the construct that opened them.
//!
//! The parser accepts a superset of the emitted language — e.g. the bare
//! "x plus y over z" parses as x + y/z even though the verbalizer writes
//! "x all plus y over z" — but on every emitted description it reconstructs
//! exactly the originating tree.

use crate::expr::{Expr, LimitSide, RelOp, TrigKind, VarName};
use crate::words::{ones_value, ordinal_value, teens_value, tens_value};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseError {
    #[error("unknown word '{word}' at position {position}")]
    UnknownWord { word: String, position: usize },
    #[error("unexpected token '{token}' at position {position}: expected {expected}")]
    UnexpectedToken {
        token: String,
        position: usize,
        expected: String,
    },
    #[error("unexpected end of description: expected {expected}")]
    UnexpectedEnd { expected: String },
}

/// Token kind; uniquely determined by the lexeme.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TokenKind {
    NumberWord,
    Variable,
    OperatorWord,
    ScopeMarker,
    FunctionWord,
    RelationWord,
    LimitWord,
    Conjunction,
}

/// One lexical token. Multi-word atoms ("with respect to", "equal to",
/// "approaches to") are fused by longest match; `pos` is the index of the
/// first constituent word.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DescToken {
    pub lexeme: String,
    pub kind: TokenKind,
    pub pos: usize,
}

/// Fused word sequences, longest first.
const FUSED: [(&[&str], TokenKind); 12] = [
    (
        &["greater", "than", "or", "equal", "to"],
        TokenKind::RelationWord,
    ),
    (
        &["less", "than", "or", "equal", "to"],
        TokenKind::RelationWord,
    ),
    (&["with", "respect", "to"], TokenKind::FunctionWord),
    (&["from", "lower", "limit"], TokenKind::FunctionWord),
    (&["to", "upper", "limit"], TokenKind::FunctionWord),
    (&["from", "the", "left"], TokenKind::LimitWord),
    (&["from", "the", "right"], TokenKind::LimitWord),
    (&["greater", "than"], TokenKind::RelationWord),
    (&["less", "than"], TokenKind::RelationWord),
    (&["equal", "to"], TokenKind::RelationWord),
    (&["approaches", "to"], TokenKind::LimitWord),
    (&["to", "base"], TokenKind::FunctionWord),
];

fn classify_single(word: &str) -> Option<TokenKind> {
    if ones_value(word).is_some()
        || teens_value(word).is_some()
        || tens_value(word).is_some()
        || word == "hundred"
        || word == "thousand"
        || word == "point"
    {
        return Some(TokenKind::NumberWord);
    }
    if VarName::from_str(word).is_some() {
        return Some(TokenKind::Variable);
    }
    match word {
        "plus" | "minus" | "times" | "over" | "negative" => Some(TokenKind::OperatorWord),
        "all" => Some(TokenKind::ScopeMarker),
        "and" => Some(TokenKind::Conjunction),
        "as" => Some(TokenKind::LimitWord),
        "of" | "exponential" | "log" | "sin" | "cos" | "tan" | "integral" | "limit"
        | "differentiation" | "square" | "power" | "root" => Some(TokenKind::FunctionWord),
        _ => ordinal_value(word).map(|_| TokenKind::FunctionWord),
    }
}

/// Whether `word` belongs to the closed lexicon, standalone or as part of a
/// fused atom.
pub fn is_lexicon_word(word: &str) -> bool {
    classify_single(word).is_some() || FUSED.iter().any(|(seq, _)| seq.contains(&word))
}

/// Every single word of the closed lexicon.
pub fn lexicon_words() -> Vec<&'static str> {
    let mut out: Vec<&'static str> = Vec::new();
    out.extend(crate::words::ONES);
    out.extend(crate::words::TEENS);
    out.extend(crate::words::TENS);
    out.extend(crate::words::ORDINALS);
    out.extend([
        "hundred",
        "thousand",
        "point",
        "x",
        "y",
        "z",
        "t",
        "plus",
        "minus",
        "times",
        "over",
        "negative",
        "all",
        "and",
        "as",
        "of",
        "exponential",
        "log",
        "sin",
        "cos",
        "tan",
        "integral",
        "limit",
        "differentiation",
        "square",
        "power",
        "root",
        "equal",
        "greater",
        "less",
        "or",
        "to",
        "with",
        "respect",
        "approaches",
        "from",
        "lower",
        "upper",
        "the",
        "left",
        "right",
        "base",
        "than",
    ]);
    out.sort_unstable();
    out.dedup();
    out
}

/// Lowercase, split on whitespace and fuse multi-word atoms (longest match).
pub fn tokenize(text: &str) -> Result<Vec<DescToken>, ParseError> {
    let lowered = text.to_lowercase();
    let words: Vec<&str> = lowered.split_whitespace().collect();
    let mut tokens = Vec::new();
    let mut i = 0;
    while i < words.len() {
        let mut fused = None;
        for (seq, kind) in FUSED {
            if words.len() - i >= seq.len() && words[i..i + seq.len()] == *seq {
                fused = Some((seq.len(), seq.join(" "), kind));
                break;
            }
        }
        if let Some((len, lexeme, kind)) = fused {
            tokens.push(DescToken {
                lexeme,
                kind,
                pos: i,
            });
            i += len;
            continue;
        }
        match classify_single(words[i]) {
            Some(kind) => {
                tokens.push(DescToken {
                    lexeme: words[i].to_owned(),
                    kind,
                    pos: i,
                });
                i += 1;
            }
            None => {
                return Err(ParseError::UnknownWord {
                    word: words[i].to_owned(),
                    position: i,
                })
            }
        }
    }
    Ok(tokens)
}

/// Parse a description into the unique expression it denotes.
pub fn parse_description(text: &str) -> Result<Expr, ParseError> {
    let tokens = tokenize(text)?;
    Parser { tokens, pos: 0 }.parse_top()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum StopKind {
    Eof,
    Rel(RelOp),
    And,
    AllPlus,
    AllMinus,
    AllOver,
    WithRespectTo,
    As,
    ToBase,
}

#[derive(Debug, Clone, Copy)]
struct Stop {
    kind: StopKind,
    pos: usize,
}

impl StopKind {
    fn describe(self) -> &'static str {
        match self {
            StopKind::Eof => "end of description",
            StopKind::Rel(_) => "a relation word",
            StopKind::And => "'and'",
            StopKind::AllPlus => "'all plus'",
            StopKind::AllMinus => "'all minus'",
            StopKind::AllOver => "'all over'",
            StopKind::WithRespectTo => "'with respect to'",
            StopKind::As => "'as'",
            StopKind::ToBase => "'to base'",
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Level {
    /// Consumes "all"-prefixed operators itself.
    Hard,
    /// Propagates every stop to the enclosing scope.
    Soft,
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum ChainOp {
    First,
    Plus,
    Minus,
}

enum Connector {
    Op(ChainOp),
    Over,
    Stop(Stop),
}

struct Parser {
    tokens: Vec<DescToken>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> Option<&DescToken> {
        self.tokens.get(self.pos)
    }

    fn peek_lexeme(&self) -> Option<&str> {
        self.peek().map(|t| t.lexeme.as_str())
    }

    fn peek2_lexeme(&self) -> Option<&str> {
        self.tokens.get(self.pos + 1).map(|t| t.lexeme.as_str())
    }

    fn bump(&mut self) -> Option<DescToken> {
        let t = self.tokens.get(self.pos).cloned();
        if t.is_some() {
            self.pos += 1;
        }
        t
    }

    fn end_pos(&self) -> usize {
        self.tokens.last().map(|t| t.pos + 1).unwrap_or(0)
    }

    fn expect_token(&mut self, lexeme: &str, expected: &str) -> Result<(), ParseError> {
        match self.bump() {
            Some(t) if t.lexeme == lexeme => Ok(()),
            Some(t) => Err(ParseError::UnexpectedToken {
                token: t.lexeme,
                position: t.pos,
                expected: expected.to_owned(),
            }),
            None => Err(ParseError::UnexpectedEnd {
                expected: expected.to_owned(),
            }),
        }
    }

    fn unexpected(&self, t: DescToken, expected: &str) -> ParseError {
        ParseError::UnexpectedToken {
            token: t.lexeme,
            position: t.pos,
            expected: expected.to_owned(),
        }
    }

    fn parse_top(&mut self) -> Result<Expr, ParseError> {
        let (first, stop) = self.parse_chain(Level::Hard)?;
        match stop.kind {
            StopKind::Eof => Ok(first),
            StopKind::Rel(op) => {
                let (rhs, stop2) = self.parse_chain(Level::Hard)?;
                let rel1 = Expr::relation(op, first, rhs);
                match stop2.kind {
                    StopKind::Eof => Ok(rel1),
                    StopKind::And => {
                        let (l2, s3) = self.parse_chain(Level::Hard)?;
                        let op2 = match s3.kind {
                            StopKind::Rel(op2) => op2,
                            other => {
                                return Err(ParseError::UnexpectedToken {
                                    token: other.describe().to_owned(),
                                    position: s3.pos,
                                    expected: "a relation word in the second equation".to_owned(),
                                })
                            }
                        };
                        let (r2, s4) = self.parse_chain(Level::Hard)?;
                        if s4.kind != StopKind::Eof {
                            return Err(ParseError::UnexpectedToken {
                                token: s4.kind.describe().to_owned(),
                                position: s4.pos,
                                expected: "end of description".to_owned(),
                            });
                        }
                        if op != RelOp::Eq || op2 != RelOp::Eq {
                            return Err(ParseError::UnexpectedToken {
                                token: "and".to_owned(),
                                position: stop2.pos,
                                expected: "a pair of equations joined by 'and' (both 'equal to')"
                                    .to_owned(),
                            });
                        }
                        Ok(Expr::system(rel1, Expr::relation(op2, l2, r2)))
                    }
                    other => Err(ParseError::UnexpectedToken {
                        token: other.describe().to_owned(),
                        position: stop2.pos,
                        expected: "end of description".to_owned(),
                    }),
                }
            }
            other => Err(ParseError::UnexpectedToken {
                token: other.describe().to_owned(),
                position: stop.pos,
                expected: "an operator, a relation word or end of description".to_owned(),
            }),
        }
    }

    /// Parse an additive chain at the given level, returning the folded
    /// expression and the token that terminated it.
    fn parse_chain(&mut self, level: Level) -> Result<(Expr, Stop), ParseError> {
        let mut terms: Vec<(ChainOp, Expr)> = Vec::new();
        let mut next_op = ChainOp::First;
        let mut pending: Option<Stop> = None;
        loop {
            if pending.is_none() {
                let (molecule, carried) = self.parse_molecule()?;
                terms.push((next_op, molecule));
                pending = carried;
            }
            let connector = match pending.take() {
                Some(stop) => Connector::Stop(stop),
                None => self.read_connector()?,
            };
            match connector {
                Connector::Op(op) => next_op = op,
                Connector::Over => {
                    let (op, numerator) = terms.pop().expect("a molecule precedes 'over'");
                    let (den, stop) = self.parse_chain(Level::Soft)?;
                    terms.push((op, Expr::frac(numerator, den)));
                    pending = Some(stop);
                }
                Connector::Stop(stop) => match (level, stop.kind) {
                    (Level::Hard, StopKind::AllPlus) => next_op = ChainOp::Plus,
                    (Level::Hard, StopKind::AllMinus) => next_op = ChainOp::Minus,
                    (Level::Hard, StopKind::AllOver) => {
                        let numerator = fold_terms(terms);
                        let (den, s) = self.parse_chain(Level::Soft)?;
                        terms = vec![(ChainOp::First, Expr::frac(numerator, den))];
                        pending = Some(s);
                    }
                    (_, _) => return Ok((fold_terms(terms), stop)),
                },
            }
        }
    }

    fn read_connector(&mut self) -> Result<Connector, ParseError> {
        let Some(tok) = self.peek().cloned() else {
            return Ok(Connector::Stop(Stop {
                kind: StopKind::Eof,
                pos: self.end_pos(),
            }));
        };
        match tok.lexeme.as_str() {
            "plus" => {
                self.bump();
                Ok(Connector::Op(ChainOp::Plus))
            }
            "minus" => {
                self.bump();
                Ok(Connector::Op(ChainOp::Minus))
            }
            "over" => {
                self.bump();
                Ok(Connector::Over)
            }
            "all" => {
                self.bump();
                let kind = match self.peek_lexeme() {
                    Some("plus") => StopKind::AllPlus,
                    Some("minus") => StopKind::AllMinus,
                    Some("over") => StopKind::AllOver,
                    Some(_) => {
                        let t = self.bump().unwrap();
                        return Err(self.unexpected(t, "'plus', 'minus' or 'over' after 'all'"));
                    }
                    None => {
                        return Err(ParseError::UnexpectedEnd {
                            expected: "'plus', 'minus' or 'over' after 'all'".to_owned(),
                        })
                    }
                };
                self.bump();
                Ok(Connector::Stop(Stop {
                    kind,
                    pos: tok.pos,
                }))
            }
            "and" => {
                self.bump();
                Ok(Connector::Stop(Stop {
                    kind: StopKind::And,
                    pos: tok.pos,
                }))
            }
            "with respect to" => {
                self.bump();
                Ok(Connector::Stop(Stop {
                    kind: StopKind::WithRespectTo,
                    pos: tok.pos,
                }))
            }
            "as" => {
                self.bump();
                Ok(Connector::Stop(Stop {
                    kind: StopKind::As,
                    pos: tok.pos,
                }))
            }
            "to base" => {
                self.bump();
                Ok(Connector::Stop(Stop {
                    kind: StopKind::ToBase,
                    pos: tok.pos,
                }))
            }
            _ if tok.kind == TokenKind::RelationWord => {
                self.bump();
                let op = match tok.lexeme.as_str() {
                    "equal to" => RelOp::Eq,
                    "greater than" => RelOp::Gt,
                    "less than" => RelOp::Lt,
                    "greater than or equal to" => RelOp::Ge,
                    "less than or equal to" => RelOp::Le,
                    _ => unreachable!("relation lexemes are closed"),
                };
                Ok(Connector::Stop(Stop {
                    kind: StopKind::Rel(op),
                    pos: tok.pos,
                }))
            }
            _ => {
                let t = self.bump().unwrap();
                Err(self.unexpected(t, "an operator, a relation word or a scope closer"))
            }
        }
    }

    /// Parse one molecule. The second return value carries a scope-closing
    /// token consumed while finishing an extended function argument.
    fn parse_molecule(&mut self) -> Result<(Expr, Option<Stop>), ParseError> {
        let Some(tok) = self.peek().cloned() else {
            return Err(ParseError::UnexpectedEnd {
                expected: "a term".to_owned(),
            });
        };
        match tok.kind {
            TokenKind::NumberWord => self.parse_number_molecule(),
            TokenKind::Variable => {
                self.bump();
                let var = VarName::from_str(&tok.lexeme).expect("variable token");
                match self.peek_lexeme() {
                    Some("square") => {
                        self.bump();
                        Ok((Expr::pow(Expr::var(var), Expr::con(2)), None))
                    }
                    Some("power") => {
                        self.bump();
                        self.expect_token("of", "'of' after 'power'")?;
                        let (base, stop) = self.parse_fn_arg()?;
                        Ok((Expr::pow(base, Expr::var(var)), stop))
                    }
                    _ => Ok((Expr::var(var), None)),
                }
            }
            TokenKind::OperatorWord if tok.lexeme == "negative" => {
                self.bump();
                let (inner, stop) = self.parse_molecule()?;
                Ok((Expr::neg(inner), stop))
            }
            TokenKind::FunctionWord => self.parse_function_molecule(tok),
            _ => {
                self.bump();
                Err(self.unexpected(tok, "a term"))
            }
        }
    }

    fn parse_number_molecule(&mut self) -> Result<(Expr, Option<Stop>), ParseError> {
        let number = self.parse_number_phrase()?;
        match self.peek_lexeme() {
            Some("times") => {
                self.bump();
                let (rhs, stop) = self.parse_molecule()?;
                Ok((Expr::mul(number, rhs), stop))
            }
            Some("square") => {
                self.bump();
                Ok((Expr::pow(number, Expr::con(2)), None))
            }
            Some("power") => {
                self.bump();
                self.expect_token("of", "'of' after 'power'")?;
                let (base, stop) = self.parse_fn_arg()?;
                Ok((Expr::pow(base, number), stop))
            }
            Some("root") => {
                if let Expr::Const(k) = number {
                    self.bump();
                    self.expect_token("of", "'of' after 'root'")?;
                    let (arg, stop) = self.parse_fn_arg()?;
                    Ok((Expr::root(k, arg), stop))
                } else {
                    let t = self.bump().unwrap();
                    Err(self.unexpected(t, "an integer root degree"))
                }
            }
            _ => Ok((number, None)),
        }
    }

    fn parse_function_molecule(
        &mut self,
        tok: DescToken,
    ) -> Result<(Expr, Option<Stop>), ParseError> {
        match tok.lexeme.as_str() {
            "exponential" => {
                self.bump();
                self.expect_token("of", "'of' after 'exponential'")?;
                let (arg, stop) = self.parse_fn_arg()?;
                Ok((Expr::exp(arg), stop))
            }
            "sin" | "cos" | "tan" => {
                self.bump();
                let kind = match tok.lexeme.as_str() {
                    "sin" => TrigKind::Sin,
                    "cos" => TrigKind::Cos,
                    _ => TrigKind::Tan,
                };
                if self.peek_lexeme() == Some("of") {
                    self.bump();
                    self.expect_token("all", "'all' after a function 'of'")?;
                    let (arg, stop) = self.parse_chain(Level::Soft)?;
                    Ok((Expr::trig(kind, arg), Some(stop)))
                } else {
                    let arg = self.parse_atom()?;
                    Ok((Expr::trig(kind, arg), None))
                }
            }
            "log" => {
                self.bump();
                let (arg, carried) = if self.peek_lexeme() == Some("of") {
                    self.bump();
                    self.expect_token("all", "'all' after a function 'of'")?;
                    let (arg, stop) = self.parse_chain(Level::Hard)?;
                    if stop.kind != StopKind::ToBase {
                        return Err(ParseError::UnexpectedToken {
                            token: stop.kind.describe().to_owned(),
                            position: stop.pos,
                            expected: "'to base' closing the log argument".to_owned(),
                        });
                    }
                    (arg, true)
                } else {
                    let (arg, stop) = self.parse_molecule()?;
                    match stop {
                        None => (arg, false),
                        Some(s) if s.kind == StopKind::ToBase => (arg, true),
                        Some(s) => {
                            return Err(ParseError::UnexpectedToken {
                                token: s.kind.describe().to_owned(),
                                position: s.pos,
                                expected: "'to base' closing the log argument".to_owned(),
                            })
                        }
                    }
                };
                if !carried {
                    self.expect_token("to base", "'to base' after the log argument")?;
                }
                let base = self.parse_atom()?;
                Ok((Expr::log(base, arg), None))
            }
            "integral" => {
                self.bump();
                self.expect_token("of", "'of' after 'integral'")?;
                let (body, stop) = self.parse_chain(Level::Hard)?;
                if stop.kind != StopKind::WithRespectTo {
                    return Err(ParseError::UnexpectedToken {
                        token: stop.kind.describe().to_owned(),
                        position: stop.pos,
                        expected: "'with respect to' closing the integrand".to_owned(),
                    });
                }
                let var = self.parse_var()?;
                if self.peek_lexeme() == Some("from lower limit") {
                    self.bump();
                    let lower = self.parse_atom()?;
                    self.expect_token("to upper limit", "'to upper limit'")?;
                    let upper = self.parse_atom()?;
                    Ok((Expr::finite_integral(body, var, lower, upper), None))
                } else {
                    Ok((Expr::integral(body, var), None))
                }
            }
            "differentiation" => {
                self.bump();
                self.expect_token("of", "'of' after 'differentiation'")?;
                let (body, stop) = self.parse_chain(Level::Hard)?;
                if stop.kind != StopKind::WithRespectTo {
                    return Err(ParseError::UnexpectedToken {
                        token: stop.kind.describe().to_owned(),
                        position: stop.pos,
                        expected: "'with respect to' closing the derivative body".to_owned(),
                    });
                }
                let var = self.parse_var()?;
                Ok((Expr::derivative(body, var), None))
            }
            "limit" => {
                self.bump();
                self.expect_token("of", "'of' after 'limit'")?;
                let (body, stop) = self.parse_chain(Level::Hard)?;
                if stop.kind != StopKind::As {
                    return Err(ParseError::UnexpectedToken {
                        token: stop.kind.describe().to_owned(),
                        position: stop.pos,
                        expected: "'as' closing the limit body".to_owned(),
                    });
                }
                let var = self.parse_var()?;
                self.expect_token("approaches to", "'approaches to'")?;
                let target = self.parse_atom()?;
                let side = match self.peek_lexeme() {
                    Some("from the left") => {
                        self.bump();
                        LimitSide::Left
                    }
                    Some("from the right") => {
                        self.bump();
                        LimitSide::Right
                    }
                    _ => LimitSide::Both,
                };
                Ok((
                    Expr::limit(body, var, target, side),
                    None,
                ))
            }
            _ if ordinal_value(&tok.lexeme).is_some() => {
                self.bump();
                let k = ordinal_value(&tok.lexeme).unwrap();
                match self.peek_lexeme() {
                    Some("power") => {
                        self.bump();
                        self.expect_token("of", "'of' after 'power'")?;
                        let (base, stop) = self.parse_fn_arg()?;
                        Ok((Expr::pow(base, Expr::con(k)), stop))
                    }
                    Some("root") => {
                        self.bump();
                        self.expect_token("of", "'of' after 'root'")?;
                        let (arg, stop) = self.parse_fn_arg()?;
                        Ok((Expr::root(k, arg), stop))
                    }
                    Some(_) => {
                        let t = self.bump().unwrap();
                        Err(self.unexpected(t, "'power' or 'root' after an ordinal"))
                    }
                    None => Err(ParseError::UnexpectedEnd {
                        expected: "'power' or 'root' after an ordinal".to_owned(),
                    }),
                }
            }
            _ => {
                self.bump();
                Err(self.unexpected(tok, "a term"))
            }
        }
    }

    /// Argument of a prefix function: one closed molecule, or "all" opening
    /// an extended scope whose closing token is propagated.
    fn parse_fn_arg(&mut self) -> Result<(Expr, Option<Stop>), ParseError> {
        if self.peek_lexeme() == Some("all") {
            self.bump();
            let (arg, stop) = self.parse_chain(Level::Soft)?;
            Ok((arg, Some(stop)))
        } else {
            self.parse_molecule()
        }
    }

    fn parse_var(&mut self) -> Result<VarName, ParseError> {
        match self.bump() {
            Some(t) => VarName::from_str(&t.lexeme)
                .ok_or_else(|| self.unexpected(t, "a variable name")),
            None => Err(ParseError::UnexpectedEnd {
                expected: "a variable name".to_owned(),
            }),
        }
    }

    /// Atom: a variable, a (possibly decimal) number, or "negative" atom.
    fn parse_atom(&mut self) -> Result<Expr, ParseError> {
        match self.peek().cloned() {
            Some(t) if t.kind == TokenKind::Variable => {
                self.bump();
                Ok(Expr::var(VarName::from_str(&t.lexeme).unwrap()))
            }
            Some(t) if t.kind == TokenKind::NumberWord => self.parse_number_phrase(),
            Some(t) if t.lexeme == "negative" => {
                self.bump();
                Ok(Expr::neg(self.parse_atom()?))
            }
            Some(t) => {
                self.bump();
                Err(self.unexpected(t, "a variable or number"))
            }
            None => Err(ParseError::UnexpectedEnd {
                expected: "a variable or number".to_owned(),
            }),
        }
    }

    fn peek_ones(&self) -> Option<u32> {
        self.peek_lexeme().and_then(ones_value)
    }

    /// Greedy number phrase; inside a phrase "and" continues the number only
    /// when the following word is a tens/teens/ones word, so the system
    /// conjunction stays unambiguous.
    fn parse_number_phrase(&mut self) -> Result<Expr, ParseError> {
        let Some(first) = self.bump() else {
            return Err(ParseError::UnexpectedEnd {
                expected: "a number".to_owned(),
            });
        };
        let w = first.lexeme.as_str();
        let mut value: u32;
        let mut scaled = false;
        if let Some(o) = ones_value(w) {
            if self.peek_lexeme() == Some("thousand") {
                self.bump();
                value = o * 1000;
                scaled = true;
                if let Some(h) = self.peek_ones() {
                    if self.peek2_lexeme() == Some("hundred") {
                        self.bump();
                        self.bump();
                        value += h * 100;
                    }
                }
            } else if self.peek_lexeme() == Some("hundred") {
                self.bump();
                value = o * 100;
                scaled = true;
            } else {
                value = o;
            }
            if scaled && self.peek_lexeme() == Some("and") && self.peek2_is_tail_start() {
                self.bump();
                value += self.parse_number_tail()?;
            }
        } else if let Some(t) = teens_value(w) {
            value = t;
        } else if let Some(t) = tens_value(w) {
            value = t;
            if let Some(o) = self.peek_ones() {
                self.bump();
                value += o;
            }
        } else {
            return Err(self.unexpected(first, "a number"));
        }
        if self.peek_lexeme() == Some("point") {
            self.bump();
            let mut digits = Vec::new();
            while let Some(d) = self.peek_ones() {
                self.bump();
                digits.push(d as u8);
            }
            return Ok(Expr::Decimal(value, digits));
        }
        Ok(Expr::Const(value))
    }

    fn peek2_is_tail_start(&self) -> bool {
        self.peek2_lexeme()
            .map(|w| ones_value(w).is_some() || teens_value(w).is_some() || tens_value(w).is_some())
            .unwrap_or(false)
    }

    fn parse_number_tail(&mut self) -> Result<u32, ParseError> {
        let Some(t) = self.bump() else {
            return Err(ParseError::UnexpectedEnd {
                expected: "a number after 'and'".to_owned(),
            });
        };
        let w = t.lexeme.as_str();
        if let Some(o) = ones_value(w) {
            Ok(o)
        } else if let Some(v) = teens_value(w) {
            Ok(v)
        } else if let Some(v) = tens_value(w) {
            let mut value = v;
            if let Some(o) = self.peek_ones() {
                self.bump();
                value += o;
            }
            Ok(value)
        } else {
            Err(self.unexpected(t, "a number after 'and'"))
        }
    }
}

fn fold_terms(terms: Vec<(ChainOp, Expr)>) -> Expr {
    let mut it = terms.into_iter();
    let (_, mut acc) = it.next().expect("chain has at least one term");
    for (op, term) in it {
        acc = match op {
            ChainOp::Plus => Expr::add(acc, term),
            ChainOp::Minus => Expr::sub(acc, term),
            ChainOp::First => unreachable!("First only labels the leading term"),
        };
    }
    acc
}
