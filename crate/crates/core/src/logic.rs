//! The artificial propositional language.
//!
//! Sentences are built from six variables `p1`..`p6` and the connectives
//! `not`, `and`, `or`. Every sentence carries a complete binary bracketing.
//! A binary connective always groups with its right operand first, so
//! `p3 or p2` is written `( p3 ( or p2 ) )` and negation is `( not p3 )`.
//!
//! Meaning is computed exactly: a formula denotes the set of the 64
//! assignments to `p1..p6` that satisfy it, stored as one bit per
//! assignment in a `u64`.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

/// Number of propositional variables in the language.
pub const NUM_VARIABLES: u8 = 6;

/// Number of truth assignments over [`NUM_VARIABLES`] variables.
pub const NUM_ASSIGNMENTS: usize = 1 << NUM_VARIABLES;

/// Nesting limit enforced by [`parse`]. Generated data never comes close.
pub const MAX_PARSE_DEPTH: usize = 512;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SyntaxError {
    #[error("unknown token {item:?} at position {position}")]
    UnknownToken { item: String, position: usize },
    #[error("unbalanced parentheses")]
    UnbalancedParens,
    #[error("unexpected token at position {0}")]
    UnexpectedToken(usize),
    #[error("sentence ended early")]
    UnexpectedEnd,
    #[error("trailing input starting at position {0}")]
    TrailingInput(usize),
    #[error("nesting deeper than {MAX_PARSE_DEPTH}")]
    TooDeep,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BinOp {
    And,
    Or,
}

impl BinOp {
    pub fn token(self) -> Token {
        match self {
            BinOp::And => Token::And,
            BinOp::Or => Token::Or,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Token {
    /// Variable `p<i>` with `i` in `1..=6`.
    Var(u8),
    Not,
    And,
    Or,
    LParen,
    RParen,
}

impl Token {
    /// All eleven tokens, in vocabulary order.
    pub const ALL: [Token; 11] = [
        Token::Var(1),
        Token::Var(2),
        Token::Var(3),
        Token::Var(4),
        Token::Var(5),
        Token::Var(6),
        Token::Not,
        Token::And,
        Token::Or,
        Token::LParen,
        Token::RParen,
    ];

    /// Dense index into [`Token::ALL`].
    pub fn index(self) -> usize {
        match self {
            Token::Var(i) => usize::from(i) - 1,
            Token::Not => 6,
            Token::And => 7,
            Token::Or => 8,
            Token::LParen => 9,
            Token::RParen => 10,
        }
    }

    pub fn is_paren(self) -> bool {
        matches!(self, Token::LParen | Token::RParen)
    }
}

impl fmt::Display for Token {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Token::Var(i) => write!(f, "p{i}"),
            Token::Not => f.write_str("not"),
            Token::And => f.write_str("and"),
            Token::Or => f.write_str("or"),
            Token::LParen => f.write_str("("),
            Token::RParen => f.write_str(")"),
        }
    }
}

impl FromStr for Token {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "not" => Token::Not,
            "and" => Token::And,
            "or" => Token::Or,
            "(" => Token::LParen,
            ")" => Token::RParen,
            "p1" => Token::Var(1),
            "p2" => Token::Var(2),
            "p3" => Token::Var(3),
            "p4" => Token::Var(4),
            "p5" => Token::Var(5),
            "p6" => Token::Var(6),
            _ => return Err(()),
        })
    }
}

/// Splits whitespace-separated text into tokens.
pub fn tokenize(text: &str) -> Result<Vec<Token>, SyntaxError> {
    text.split_whitespace()
        .enumerate()
        .map(|(position, item)| {
            item.parse().map_err(|()| SyntaxError::UnknownToken { item: item.to_owned(), position })
        })
        .collect()
}

/// Joins tokens with single spaces.
pub fn tokens_to_string(tokens: &[Token]) -> String {
    let mut out = String::with_capacity(tokens.len() * 3);
    for (i, t) in tokens.iter().enumerate() {
        if i > 0 {
            out.push(' ');
        }
        fmt::Write::write_fmt(&mut out, format_args!("{t}")).expect("writing to a String");
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Formula {
    Var(u8),
    Not(Box<Formula>),
    Bin(BinOp, Box<Formula>, Box<Formula>),
}

impl Formula {
    /// Panics if `index` is outside `1..=6`.
    pub fn var(index: u8) -> Self {
        assert!((1..=NUM_VARIABLES).contains(&index), "variable index {index} out of range");
        Formula::Var(index)
    }

    pub fn not(child: Formula) -> Self {
        Formula::Not(Box::new(child))
    }

    pub fn and(left: Formula, right: Formula) -> Self {
        Formula::Bin(BinOp::And, Box::new(left), Box::new(right))
    }

    pub fn or(left: Formula, right: Formula) -> Self {
        Formula::Bin(BinOp::Or, Box::new(left), Box::new(right))
    }

    /// Number of `not`/`and`/`or` nodes.
    pub fn connective_count(&self) -> usize {
        match self {
            Formula::Var(_) => 0,
            Formula::Not(c) => 1 + c.connective_count(),
            Formula::Bin(_, l, r) => 1 + l.connective_count() + r.connective_count(),
        }
    }

    pub fn satisfying_set(&self) -> TruthSet {
        match self {
            Formula::Var(i) => TruthSet::variable(*i),
            Formula::Not(c) => c.satisfying_set().complement(),
            Formula::Bin(BinOp::And, l, r) => l.satisfying_set().intersection(r.satisfying_set()),
            Formula::Bin(BinOp::Or, l, r) => l.satisfying_set().union(r.satisfying_set()),
        }
    }

    /// Canonical fully bracketed token sequence.
    pub fn render_tokens(&self) -> Vec<Token> {
        let mut out = Vec::new();
        self.push_tokens(&mut out);
        out
    }

    fn push_tokens(&self, out: &mut Vec<Token>) {
        match self {
            Formula::Var(i) => out.push(Token::Var(*i)),
            Formula::Not(c) => {
                out.extend([Token::LParen, Token::Not]);
                c.push_tokens(out);
                out.push(Token::RParen);
            }
            Formula::Bin(op, l, r) => {
                out.push(Token::LParen);
                l.push_tokens(out);
                out.extend([Token::LParen, op.token()]);
                r.push_tokens(out);
                out.extend([Token::RParen, Token::RParen]);
            }
        }
    }

    /// Length of [`Formula::render_tokens`] without building it.
    pub fn token_len(&self) -> usize {
        match self {
            Formula::Var(_) => 1,
            Formula::Not(c) => 3 + c.token_len(),
            Formula::Bin(_, l, r) => 5 + l.token_len() + r.token_len(),
        }
    }
}

impl fmt::Display for Formula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&tokens_to_string(&self.render_tokens()))
    }
}

impl FromStr for Formula {
    type Err = SyntaxError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse(&tokenize(s)?)
    }
}

/// Parses a canonical complete binary bracketing.
///
/// Grammar: `F := var | ( not F ) | ( F ( op F ) )`.
pub fn parse(tokens: &[Token]) -> Result<Formula, SyntaxError> {
    let mut depth = 0i64;
    for t in tokens {
        match t {
            Token::LParen => depth += 1,
            Token::RParen => {
                depth -= 1;
                if depth < 0 {
                    return Err(SyntaxError::UnbalancedParens);
                }
            }
            _ => {}
        }
    }
    if depth != 0 {
        return Err(SyntaxError::UnbalancedParens);
    }

    let mut parser = Parser { tokens, pos: 0 };
    let formula = parser.formula(0)?;
    if parser.pos != tokens.len() {
        return Err(SyntaxError::TrailingInput(parser.pos));
    }
    Ok(formula)
}

struct Parser<'a> {
    tokens: &'a [Token],
    pos: usize,
}

impl Parser<'_> {
    fn next(&mut self) -> Result<Token, SyntaxError> {
        let t = *self.tokens.get(self.pos).ok_or(SyntaxError::UnexpectedEnd)?;
        self.pos += 1;
        Ok(t)
    }

    fn expect(&mut self, want: Token) -> Result<(), SyntaxError> {
        let at = self.pos;
        if self.next()? == want {
            Ok(())
        } else {
            Err(SyntaxError::UnexpectedToken(at))
        }
    }

    fn formula(&mut self, depth: usize) -> Result<Formula, SyntaxError> {
        if depth > MAX_PARSE_DEPTH {
            return Err(SyntaxError::TooDeep);
        }
        let at = self.pos;
        match self.next()? {
            Token::Var(i) => Ok(Formula::Var(i)),
            Token::LParen => {
                if self.tokens.get(self.pos) == Some(&Token::Not) {
                    self.pos += 1;
                    let child = self.formula(depth + 1)?;
                    self.expect(Token::RParen)?;
                    return Ok(Formula::not(child));
                }
                let left = self.formula(depth + 1)?;
                self.expect(Token::LParen)?;
                let op_at = self.pos;
                let op = match self.next()? {
                    Token::And => BinOp::And,
                    Token::Or => BinOp::Or,
                    _ => return Err(SyntaxError::UnexpectedToken(op_at)),
                };
                let right = self.formula(depth + 1)?;
                self.expect(Token::RParen)?;
                self.expect(Token::RParen)?;
                Ok(Formula::Bin(op, Box::new(left), Box::new(right)))
            }
            _ => Err(SyntaxError::UnexpectedToken(at)),
        }
    }
}

/// A subset of the 64 assignments to `p1..p6`.
///
/// Bit `a` is set when assignment `a` belongs to the set; in assignment `a`,
/// variable `p<i>` is true iff bit `i - 1` of `a` is set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct TruthSet(pub u64);

impl TruthSet {
    pub const EMPTY: TruthSet = TruthSet(0);
    pub const UNIVERSE: TruthSet = TruthSet(u64::MAX);

    pub fn variable(index: u8) -> Self {
        assert!((1..=NUM_VARIABLES).contains(&index));
        let bit = index - 1;
        let mut mask = 0u64;
        for a in 0..NUM_ASSIGNMENTS {
            if (a >> bit) & 1 == 1 {
                mask |= 1 << a;
            }
        }
        TruthSet(mask)
    }

    pub fn contains(self, assignment: usize) -> bool {
        assignment < NUM_ASSIGNMENTS && (self.0 >> assignment) & 1 == 1
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn complement(self) -> Self {
        TruthSet(!self.0)
    }

    pub fn union(self, other: Self) -> Self {
        TruthSet(self.0 | other.0)
    }

    pub fn intersection(self, other: Self) -> Self {
        TruthSet(self.0 & other.0)
    }

    pub fn is_subset(self, other: Self) -> bool {
        self.0 & !other.0 == 0
    }
}

/// The seven mutually exclusive natural-logic relations, in canonical order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Relation {
    Equivalence,
    ForwardEntailment,
    ReverseEntailment,
    Negation,
    Alternation,
    Cover,
    Independence,
}

impl Relation {
    pub const ALL: [Relation; 7] = [
        Relation::Equivalence,
        Relation::ForwardEntailment,
        Relation::ReverseEntailment,
        Relation::Negation,
        Relation::Alternation,
        Relation::Cover,
        Relation::Independence,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(index: usize) -> Option<Relation> {
        Self::ALL.get(index).copied()
    }

    /// ASCII label used in dataset files.
    pub fn label(self) -> &'static str {
        match self {
            Relation::Equivalence => "=",
            Relation::ForwardEntailment => "<",
            Relation::ReverseEntailment => ">",
            Relation::Negation => "^",
            Relation::Alternation => "|",
            Relation::Cover => "v",
            Relation::Independence => "#",
        }
    }

    pub fn from_label(label: &str) -> Option<Relation> {
        Self::ALL.into_iter().find(|r| r.label() == label)
    }

    pub fn symbol(self) -> &'static str {
        match self {
            Relation::Equivalence => "≡",
            Relation::ForwardEntailment => "⊏",
            Relation::ReverseEntailment => "⊐",
            Relation::Negation => "^",
            Relation::Alternation => "|",
            Relation::Cover => "⌣",
            Relation::Independence => "#",
        }
    }

    pub fn converse(self) -> Relation {
        match self {
            Relation::ForwardEntailment => Relation::ReverseEntailment,
            Relation::ReverseEntailment => Relation::ForwardEntailment,
            other => other,
        }
    }
}

impl fmt::Display for Relation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// Relation between two denotations. The checks run in a fixed order so
/// empty and universal sets get a well-defined answer.
pub fn relation(a: TruthSet, b: TruthSet) -> Relation {
    let disjoint = a.intersection(b).is_empty();
    let exhaustive = a.union(b) == TruthSet::UNIVERSE;
    if a == b {
        Relation::Equivalence
    } else if a.is_subset(b) {
        Relation::ForwardEntailment
    } else if b.is_subset(a) {
        Relation::ReverseEntailment
    } else if disjoint && exhaustive {
        Relation::Negation
    } else if disjoint {
        Relation::Alternation
    } else if exhaustive {
        Relation::Cover
    } else {
        Relation::Independence
    }
}

pub fn relation_of_pair(premise: &Formula, hypothesis: &Formula) -> Relation {
    relation(premise.satisfying_set(), hypothesis.satisfying_set())
}
