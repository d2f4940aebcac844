//! Formula ASTs for the counting branching-time logic and its fragments,
//! with parser, pretty-printer, fragment classification, frequency-until
//! desugaring, and subformula machinery.
//!
//! Derived operators are expanded at parse time: `true ≡ p ∨ ¬p` (over the
//! reserved proposition `true`), `false ≡ ¬true`, `F φ ≡ true U φ`,
//! `G φ ≡ ¬F¬φ`, `A φ ≡ ¬E¬φ`, `a ∨ b ≡ ¬(¬a ∧ ¬b)`, `a → b ≡ ¬(a ∧ ¬b)`.
//! The pretty-printer re-sugars `A`, `true` and `false` only.

use std::collections::BTreeSet;
use std::fmt;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum LogicError {
    #[error("formula syntax error at offset {pos}: {msg}")]
    Syntax { pos: usize, msg: String },
    #[error("ratio {num}/{den} violates n <= m > 0")]
    BadRatio { num: u64, den: u64 },
}

/// A frequency `n/m` with `n <= m` and `m > 0`, stored exactly as written
/// (never reduced: counter updates are defined from the literal pair).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Ratio {
    num: u64,
    den: u64,
}

impl Ratio {
    pub fn new(num: u64, den: u64) -> Result<Self, LogicError> {
        if den == 0 || num > den {
            return Err(LogicError::BadRatio { num, den });
        }
        Ok(Ratio { num, den })
    }

    pub fn num(&self) -> u64 {
        self.num
    }

    pub fn den(&self) -> u64 {
        self.den
    }
}

impl fmt::Display for Ratio {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.num, self.den)
    }
}

/// One summand of a comparison side: an integer constant or a scaled
/// counting term `a * #x(φ)`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Term {
    Const(i64),
    Count { coef: i64, var: String, phi: Box<Formula> },
}

/// A sum of terms, kept exactly as written.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TermSum {
    pub terms: Vec<Term>,
}

impl TermSum {
    pub fn constant(c: i64) -> Self {
        TermSum { terms: vec![Term::Const(c)] }
    }

    pub fn count(coef: i64, var: &str, phi: Formula) -> Self {
        TermSum { terms: vec![Term::Count { coef, var: var.to_string(), phi: Box::new(phi) }] }
    }
}

/// Formulas of the counting branching-time logic. `Compare(l, r)` denotes
/// `l <= r`; other comparison operators are parsed into this plus negation.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Formula {
    Atom(String),
    And(Box<Formula>, Box<Formula>),
    Not(Box<Formula>),
    Next(Box<Formula>),
    Until(Box<Formula>, Box<Formula>),
    FreqUntil(Box<Formula>, Ratio, Box<Formula>),
    Exists(Box<Formula>),
    Bind(String, Box<Formula>),
    Compare(TermSum, TermSum),
}

/// Reserved proposition used by the `true` expansion. The parser treats
/// `true` as a keyword, so user formulas cannot introduce it as an atom.
pub const TRUE_PROP: &str = "true";

impl Formula {
    pub fn atom(p: &str) -> Formula {
        Formula::Atom(p.to_string())
    }

    pub fn and(a: Formula, b: Formula) -> Formula {
        Formula::And(Box::new(a), Box::new(b))
    }

    pub fn not(a: Formula) -> Formula {
        Formula::Not(Box::new(a))
    }

    pub fn next(a: Formula) -> Formula {
        Formula::Next(Box::new(a))
    }

    pub fn until(a: Formula, b: Formula) -> Formula {
        Formula::Until(Box::new(a), Box::new(b))
    }

    pub fn freq_until(a: Formula, r: Ratio, b: Formula) -> Formula {
        Formula::FreqUntil(Box::new(a), r, Box::new(b))
    }

    pub fn exists(a: Formula) -> Formula {
        Formula::Exists(Box::new(a))
    }

    pub fn bind(x: &str, a: Formula) -> Formula {
        Formula::Bind(x.to_string(), Box::new(a))
    }

    /// `a ∨ b ≡ ¬(¬a ∧ ¬b)`.
    pub fn or(a: Formula, b: Formula) -> Formula {
        Formula::not(Formula::and(Formula::not(a), Formula::not(b)))
    }

    /// `a → b ≡ ¬(a ∧ ¬b)`.
    pub fn implies(a: Formula, b: Formula) -> Formula {
        Formula::not(Formula::and(a, Formula::not(b)))
    }

    /// The fixed tautology `true ≡ p ∨ ¬p` over the reserved proposition.
    pub fn truth() -> Formula {
        Formula::or(Formula::atom(TRUE_PROP), Formula::not(Formula::atom(TRUE_PROP)))
    }

    pub fn falsity() -> Formula {
        Formula::not(Formula::truth())
    }

    /// `F φ ≡ true U φ`.
    pub fn finally(a: Formula) -> Formula {
        Formula::until(Formula::truth(), a)
    }

    /// `G φ ≡ ¬F¬φ`.
    pub fn globally(a: Formula) -> Formula {
        Formula::not(Formula::finally(Formula::not(a)))
    }

    /// `A φ ≡ ¬E¬φ`.
    pub fn forall(a: Formula) -> Formula {
        Formula::not(Formula::exists(Formula::not(a)))
    }

    fn is_truth(&self) -> bool {
        *self == Formula::truth()
    }

    fn is_falsity(&self) -> bool {
        *self == Formula::falsity()
    }

    /// All subformulae including `self`, topologically ordered: every strict
    /// subformula precedes its parent. Formulas inside counting terms count
    /// as subformulae.
    pub fn subformulae(&self) -> Vec<Formula> {
        let mut out: Vec<Formula> = Vec::new();
        let mut seen: std::collections::HashSet<Formula> = std::collections::HashSet::new();
        fn go(f: &Formula, out: &mut Vec<Formula>, seen: &mut std::collections::HashSet<Formula>) {
            if seen.contains(f) {
                return;
            }
            match f {
                Formula::Atom(_) => {}
                Formula::And(a, b) | Formula::Until(a, b) => {
                    go(a, out, seen);
                    go(b, out, seen);
                }
                Formula::FreqUntil(a, _, b) => {
                    go(a, out, seen);
                    go(b, out, seen);
                }
                Formula::Not(a) | Formula::Next(a) | Formula::Exists(a) | Formula::Bind(_, a) => {
                    go(a, out, seen)
                }
                Formula::Compare(l, r) => {
                    for t in l.terms.iter().chain(r.terms.iter()) {
                        if let Term::Count { phi, .. } = t {
                            go(phi, out, seen);
                        }
                    }
                }
            }
            seen.insert(f.clone());
            out.push(f.clone());
        }
        go(self, &mut out, &mut seen);
        out
    }

    /// Formula length with binary encoding of integer constants.
    pub fn size(&self) -> u64 {
        fn bits(n: u64) -> u64 {
            (64 - n.leading_zeros()).max(1) as u64
        }
        fn term_size(t: &Term) -> u64 {
            match t {
                Term::Const(c) => bits(c.unsigned_abs()),
                Term::Count { coef, phi, .. } => bits(coef.unsigned_abs()) + 2 + phi.size(),
            }
        }
        match self {
            Formula::Atom(_) => 1,
            Formula::And(a, b) | Formula::Until(a, b) => 1 + a.size() + b.size(),
            Formula::FreqUntil(a, r, b) => 1 + bits(r.num()) + bits(r.den()) + a.size() + b.size(),
            Formula::Not(a) | Formula::Next(a) | Formula::Exists(a) => 1 + a.size(),
            Formula::Bind(_, a) => 2 + a.size(),
            Formula::Compare(l, r) => {
                1 + l.terms.iter().map(term_size).sum::<u64>()
                    + r.terms.iter().map(term_size).sum::<u64>()
            }
        }
    }

    /// Variables used anywhere (binders and counting terms).
    pub fn variables(&self) -> BTreeSet<String> {
        let mut vars = BTreeSet::new();
        fn go(f: &Formula, vars: &mut BTreeSet<String>) {
            match f {
                Formula::Atom(_) => {}
                Formula::And(a, b) | Formula::Until(a, b) => {
                    go(a, vars);
                    go(b, vars);
                }
                Formula::FreqUntil(a, _, b) => {
                    go(a, vars);
                    go(b, vars);
                }
                Formula::Not(a) | Formula::Next(a) | Formula::Exists(a) => go(a, vars),
                Formula::Bind(x, a) => {
                    vars.insert(x.clone());
                    go(a, vars);
                }
                Formula::Compare(l, r) => {
                    for t in l.terms.iter().chain(r.terms.iter()) {
                        if let Term::Count { var, phi, .. } = t {
                            vars.insert(var.clone());
                            go(phi, vars);
                        }
                    }
                }
            }
        }
        go(self, &mut vars);
        vars
    }

    /// Counting variables that occur outside the scope of any binder. The
    /// semantics defaults them to position 0, so this is a lint, not an
    /// error.
    pub fn unbound_count_vars(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        fn go(f: &Formula, bound: &mut Vec<String>, out: &mut BTreeSet<String>) {
            match f {
                Formula::Atom(_) => {}
                Formula::And(a, b) | Formula::Until(a, b) => {
                    go(a, bound, out);
                    go(b, bound, out);
                }
                Formula::FreqUntil(a, _, b) => {
                    go(a, bound, out);
                    go(b, bound, out);
                }
                Formula::Not(a) | Formula::Next(a) | Formula::Exists(a) => go(a, bound, out),
                Formula::Bind(x, a) => {
                    bound.push(x.clone());
                    go(a, bound, out);
                    bound.pop();
                }
                Formula::Compare(l, r) => {
                    for t in l.terms.iter().chain(r.terms.iter()) {
                        if let Term::Count { var, phi, .. } = t {
                            if !bound.contains(var) {
                                out.insert(var.clone());
                            }
                            go(phi, bound, out);
                        }
                    }
                }
            }
        }
        go(self, &mut Vec::new(), &mut out);
        out
    }
}

// ---------------------------------------------------------------------------
// Fragments
// ---------------------------------------------------------------------------

/// The fragments, ordered by the classification priority (the least fragment
/// containing a formula wins).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Fragment {
    Ltl,
    Ctl,
    CtlStar,
    FLtl,
    FCtl,
    FCtlStar,
    CLtl,
    CCtl,
    CCtlStar,
}

impl fmt::Display for Fragment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Fragment::Ltl => "LTL",
            Fragment::Ctl => "CTL",
            Fragment::CtlStar => "CTL*",
            Fragment::FLtl => "fLTL",
            Fragment::FCtl => "fCTL",
            Fragment::FCtlStar => "fCTL*",
            Fragment::CLtl => "CLTL",
            Fragment::CCtl => "CCTL",
            Fragment::CCtlStar => "CCTL*",
        };
        f.write_str(s)
    }
}

impl Fragment {
    pub const ALL: [Fragment; 9] = [
        Fragment::Ltl,
        Fragment::Ctl,
        Fragment::CtlStar,
        Fragment::FLtl,
        Fragment::FCtl,
        Fragment::FCtlStar,
        Fragment::CLtl,
        Fragment::CCtl,
        Fragment::CCtlStar,
    ];

    pub fn parse(s: &str) -> Option<Fragment> {
        Fragment::ALL.iter().copied().find(|f| f.to_string().eq_ignore_ascii_case(s))
    }

    /// Membership check for a (desugared) formula. Plain until counts as the
    /// frequency until with ratio 1/1, so the frequency fragments subsume
    /// the classical ones with the same quantifier discipline.
    pub fn contains(&self, f: &Formula) -> bool {
        let counting = uses_counting(f);
        let freq = uses_freq(f);
        let exists = uses_exists(f);
        match self {
            Fragment::Ltl => !counting && !freq && !exists,
            Fragment::Ctl => !counting && !freq && branching_shaped(f),
            Fragment::CtlStar => !counting && !freq,
            Fragment::FLtl => !counting && !exists,
            Fragment::FCtl => !counting && branching_shaped(f),
            Fragment::FCtlStar => !counting,
            Fragment::CLtl => !exists,
            Fragment::CCtl => branching_shaped(f),
            Fragment::CCtlStar => true,
        }
    }
}

fn uses_counting(f: &Formula) -> bool {
    match f {
        Formula::Atom(_) => false,
        Formula::Bind(..) | Formula::Compare(..) => true,
        Formula::And(a, b) | Formula::Until(a, b) => uses_counting(a) || uses_counting(b),
        Formula::FreqUntil(a, _, b) => uses_counting(a) || uses_counting(b),
        Formula::Not(a) | Formula::Next(a) | Formula::Exists(a) => uses_counting(a),
    }
}

fn uses_freq(f: &Formula) -> bool {
    match f {
        Formula::Atom(_) => false,
        Formula::FreqUntil(..) => true,
        Formula::And(a, b) | Formula::Until(a, b) => uses_freq(a) || uses_freq(b),
        Formula::Not(a) | Formula::Next(a) | Formula::Exists(a) | Formula::Bind(_, a) => {
            uses_freq(a)
        }
        Formula::Compare(l, r) => l
            .terms
            .iter()
            .chain(r.terms.iter())
            .any(|t| matches!(t, Term::Count { phi, .. } if uses_freq(phi))),
    }
}

fn uses_exists(f: &Formula) -> bool {
    match f {
        Formula::Atom(_) => false,
        Formula::Exists(_) => true,
        Formula::And(a, b) | Formula::Until(a, b) => uses_exists(a) || uses_exists(b),
        Formula::FreqUntil(a, _, b) => uses_exists(a) || uses_exists(b),
        Formula::Not(a) | Formula::Next(a) | Formula::Bind(_, a) => uses_exists(a),
        Formula::Compare(l, r) => l
            .terms
            .iter()
            .chain(r.terms.iter())
            .any(|t| matches!(t, Term::Count { phi, .. } if uses_exists(phi))),
    }
}

/// Every temporal operator sits directly under a path quantifier, modulo the
/// negations introduced by the `A ≡ ¬E¬` expansion.
fn branching_shaped(f: &Formula) -> bool {
    fn state(f: &Formula) -> bool {
        match f {
            Formula::Atom(_) => true,
            Formula::And(a, b) => state(a) && state(b),
            Formula::Not(a) => state(a),
            Formula::Bind(_, a) => state(a),
            Formula::Exists(g) => path_core(g),
            Formula::Next(_) | Formula::Until(..) | Formula::FreqUntil(..) => false,
            Formula::Compare(l, r) => l
                .terms
                .iter()
                .chain(r.terms.iter())
                .all(|t| !matches!(t, Term::Count { phi, .. } if !state(phi))),
        }
    }
    fn path_core(g: &Formula) -> bool {
        match g {
            Formula::Not(h) => path_core(h),
            Formula::Next(a) => state(a),
            Formula::Until(a, b) => state(a) && state(b),
            Formula::FreqUntil(a, _, b) => state(a) && state(b),
            other => state(other),
        }
    }
    state(f)
}

/// The least fragment (by the classification priority) containing `f`.
pub fn classify_fragment(f: &Formula) -> Fragment {
    Fragment::ALL
        .iter()
        .copied()
        .find(|fr| fr.contains(f))
        .expect("CCTL* contains every formula")
}

// ---------------------------------------------------------------------------
// Frequency-until desugaring
// ---------------------------------------------------------------------------

/// Replace every `φ U^{n/m} ψ` by `ψ ∨ x.F((Xψ) ∧ m·#x(φ) ≥ n·#x(true))`
/// with `x` fresh, innermost first. Other nodes are unchanged; the result
/// contains no frequency until.
pub fn desugar_frequency_until(f: &Formula) -> Formula {
    let mut used: BTreeSet<String> = f.variables();
    let mut counter = 0usize;
    let mut fresh = move |used: &mut BTreeSet<String>| loop {
        let name = format!("x{counter}");
        counter += 1;
        if !used.contains(&name) {
            used.insert(name.clone());
            return name;
        }
    };
    fn go(
        f: &Formula,
        used: &mut BTreeSet<String>,
        fresh: &mut impl FnMut(&mut BTreeSet<String>) -> String,
    ) -> Formula {
        match f {
            Formula::Atom(p) => Formula::atom(p),
            Formula::And(a, b) => Formula::and(go(a, used, fresh), go(b, used, fresh)),
            Formula::Not(a) => Formula::not(go(a, used, fresh)),
            Formula::Next(a) => Formula::next(go(a, used, fresh)),
            Formula::Until(a, b) => Formula::until(go(a, used, fresh), go(b, used, fresh)),
            Formula::Exists(a) => Formula::exists(go(a, used, fresh)),
            Formula::Bind(x, a) => Formula::bind(x, go(a, used, fresh)),
            Formula::Compare(l, r) => {
                fn conv(
                    ts: &TermSum,
                    used: &mut BTreeSet<String>,
                    fresh: &mut impl FnMut(&mut BTreeSet<String>) -> String,
                ) -> TermSum {
                    TermSum {
                        terms: ts
                            .terms
                            .iter()
                            .map(|t| match t {
                                Term::Const(c) => Term::Const(*c),
                                Term::Count { coef, var, phi } => Term::Count {
                                    coef: *coef,
                                    var: var.clone(),
                                    phi: Box::new(go(phi, used, fresh)),
                                },
                            })
                            .collect(),
                    }
                }
                let l2 = conv(l, used, fresh);
                let r2 = conv(r, used, fresh);
                Formula::Compare(l2, r2)
            }
            Formula::FreqUntil(a, r, b) => {
                let da = go(a, used, fresh);
                let db = go(b, used, fresh);
                let x = fresh(used);
                // m·#x(φ) ≥ n·#x(true), i.e. n·#x(true) <= m·#x(φ)
                let cmp = Formula::Compare(
                    TermSum::count(r.num() as i64, &x, Formula::truth()),
                    TermSum::count(r.den() as i64, &x, da),
                );
                Formula::or(
                    db.clone(),
                    Formula::bind(&x, Formula::finally(Formula::and(Formula::next(db), cmp))),
                )
            }
        }
    }
    go(f, &mut used, &mut fresh)
}

// ---------------------------------------------------------------------------
// Parser
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Int(u64),
    Bang,
    Amp,
    Pipe,
    Arrow,
    LParen,
    RParen,
    Dot,
    Hash,
    LBrace,
    RBrace,
    Slash,
    Le,
    Lt,
    Ge,
    Gt,
    Eq,
    Plus,
    Minus,
    Star,
    KwX,
    KwU,
    KwF,
    KwG,
    KwE,
    KwA,
    KwTrue,
    KwFalse,
}

fn lex(text: &str) -> Result<Vec<(Tok, usize)>, LogicError> {
    let mut out = Vec::new();
    let b = text.as_bytes();
    let mut i = 0usize;
    while i < b.len() {
        let c = b[i] as char;
        if c.is_whitespace() {
            i += 1;
            continue;
        }
        let start = i;
        let tok = match c {
            '!' => {
                i += 1;
                Tok::Bang
            }
            '&' => {
                i += 1;
                Tok::Amp
            }
            '|' => {
                i += 1;
                Tok::Pipe
            }
            '(' => {
                i += 1;
                Tok::LParen
            }
            ')' => {
                i += 1;
                Tok::RParen
            }
            '.' => {
                i += 1;
                Tok::Dot
            }
            '#' => {
                i += 1;
                Tok::Hash
            }
            '{' => {
                i += 1;
                Tok::LBrace
            }
            '}' => {
                i += 1;
                Tok::RBrace
            }
            '/' => {
                i += 1;
                Tok::Slash
            }
            '+' => {
                i += 1;
                Tok::Plus
            }
            '*' => {
                i += 1;
                Tok::Star
            }
            '-' => {
                if b.get(i + 1) == Some(&b'>') {
                    i += 2;
                    Tok::Arrow
                } else {
                    i += 1;
                    Tok::Minus
                }
            }
            '<' => {
                if b.get(i + 1) == Some(&b'=') {
                    i += 2;
                    Tok::Le
                } else {
                    i += 1;
                    Tok::Lt
                }
            }
            '>' => {
                if b.get(i + 1) == Some(&b'=') {
                    i += 2;
                    Tok::Ge
                } else {
                    i += 1;
                    Tok::Gt
                }
            }
            '=' => {
                i += 1;
                Tok::Eq
            }
            _ if c.is_ascii_digit() => {
                let mut j = i;
                while j < b.len() && (b[j] as char).is_ascii_digit() {
                    j += 1;
                }
                let n: u64 = text[i..j].parse().map_err(|_| LogicError::Syntax {
                    pos: i,
                    msg: "integer constant too large".into(),
                })?;
                i = j;
                Tok::Int(n)
            }
            _ if c.is_ascii_alphabetic() || c == '_' => {
                let mut j = i;
                while j < b.len() && ((b[j] as char).is_ascii_alphanumeric() || b[j] == b'_') {
                    j += 1;
                }
                let w = &text[i..j];
                i = j;
                match w {
                    "X" => Tok::KwX,
                    "U" => Tok::KwU,
                    "F" => Tok::KwF,
                    "G" => Tok::KwG,
                    "E" => Tok::KwE,
                    "A" => Tok::KwA,
                    "true" => Tok::KwTrue,
                    "false" => Tok::KwFalse,
                    _ => Tok::Ident(w.to_string()),
                }
            }
            _ => {
                return Err(LogicError::Syntax {
                    pos: i,
                    msg: format!("unexpected character `{c}`"),
                })
            }
        };
        out.push((tok, start));
    }
    Ok(out)
}

struct Parser {
    toks: Vec<(Tok, usize)>,
    pos: usize,
    end: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|(t, _)| t)
    }

    fn peek2(&self) -> Option<&Tok> {
        self.toks.get(self.pos + 1).map(|(t, _)| t)
    }

    fn here(&self) -> usize {
        self.toks.get(self.pos).map(|&(_, p)| p).unwrap_or(self.end)
    }

    fn bump(&mut self) -> Option<Tok> {
        let t = self.toks.get(self.pos).map(|(t, _)| t.clone());
        self.pos += 1;
        t
    }

    fn expect(&mut self, t: Tok, what: &str) -> Result<(), LogicError> {
        if self.peek() == Some(&t) {
            self.pos += 1;
            Ok(())
        } else {
            Err(self.err(&format!("expected {what}")))
        }
    }

    fn err(&self, msg: &str) -> LogicError {
        LogicError::Syntax { pos: self.here(), msg: msg.to_string() }
    }

    fn formula(&mut self) -> Result<Formula, LogicError> {
        self.implies()
    }

    fn implies(&mut self) -> Result<Formula, LogicError> {
        let lhs = self.or()?;
        if self.peek() == Some(&Tok::Arrow) {
            self.bump();
            let rhs = self.implies()?;
            Ok(Formula::implies(lhs, rhs))
        } else {
            Ok(lhs)
        }
    }

    fn or(&mut self) -> Result<Formula, LogicError> {
        let mut lhs = self.and()?;
        while self.peek() == Some(&Tok::Pipe) {
            self.bump();
            let rhs = self.and()?;
            lhs = Formula::or(lhs, rhs);
        }
        Ok(lhs)
    }

    fn and(&mut self) -> Result<Formula, LogicError> {
        let mut lhs = self.until()?;
        while self.peek() == Some(&Tok::Amp) {
            self.bump();
            let rhs = self.until()?;
            lhs = Formula::and(lhs, rhs);
        }
        Ok(lhs)
    }

    fn until(&mut self) -> Result<Formula, LogicError> {
        let lhs = self.unary()?;
        if self.peek() == Some(&Tok::KwU) {
            self.bump();
            if self.peek() == Some(&Tok::LBrace) {
                self.bump();
                let num = match self.bump() {
                    Some(Tok::Int(n)) => n,
                    _ => return Err(self.err("expected ratio numerator")),
                };
                self.expect(Tok::Slash, "`/` in ratio")?;
                let den = match self.bump() {
                    Some(Tok::Int(n)) => n,
                    _ => return Err(self.err("expected ratio denominator")),
                };
                self.expect(Tok::RBrace, "`}` closing ratio")?;
                let r = Ratio::new(num, den)?;
                let rhs = self.until()?;
                Ok(Formula::freq_until(lhs, r, rhs))
            } else {
                let rhs = self.until()?;
                Ok(Formula::until(lhs, rhs))
            }
        } else {
            Ok(lhs)
        }
    }

    fn unary(&mut self) -> Result<Formula, LogicError> {
        match self.peek() {
            Some(Tok::Bang) => {
                self.bump();
                Ok(Formula::not(self.unary()?))
            }
            Some(Tok::KwX) => {
                self.bump();
                Ok(Formula::next(self.unary()?))
            }
            Some(Tok::KwF) => {
                self.bump();
                Ok(Formula::finally(self.unary()?))
            }
            Some(Tok::KwG) => {
                self.bump();
                Ok(Formula::globally(self.unary()?))
            }
            Some(Tok::KwE) => {
                self.bump();
                Ok(Formula::exists(self.unary()?))
            }
            Some(Tok::KwA) => {
                self.bump();
                Ok(Formula::forall(self.unary()?))
            }
            Some(Tok::Ident(_)) if self.peek2() == Some(&Tok::Dot) => {
                let x = match self.bump() {
                    Some(Tok::Ident(x)) => x,
                    _ => unreachable!(),
                };
                self.bump(); // dot
                Ok(Formula::bind(&x, self.unary()?))
            }
            _ => self.atom(),
        }
    }

    fn atom(&mut self) -> Result<Formula, LogicError> {
        match self.peek() {
            Some(Tok::KwTrue) => {
                self.bump();
                Ok(Formula::truth())
            }
            Some(Tok::KwFalse) => {
                self.bump();
                Ok(Formula::falsity())
            }
            Some(Tok::LParen) => {
                self.bump();
                let f = self.formula()?;
                self.expect(Tok::RParen, "`)`")?;
                Ok(f)
            }
            Some(Tok::Ident(_)) => {
                let p = match self.bump() {
                    Some(Tok::Ident(p)) => p,
                    _ => unreachable!(),
                };
                Ok(Formula::Atom(p))
            }
            Some(Tok::Int(_)) | Some(Tok::Hash) | Some(Tok::Minus) => self.comparison(),
            _ => Err(self.err("expected a formula")),
        }
    }

    fn comparison(&mut self) -> Result<Formula, LogicError> {
        let lhs = self.term_sum()?;
        let op = self.bump().ok_or_else(|| LogicError::Syntax {
            pos: self.end,
            msg: "expected comparison operator".into(),
        })?;
        let rhs = self.term_sum()?;
        let f = match op {
            Tok::Le => Formula::Compare(lhs, rhs),
            Tok::Ge => Formula::Compare(rhs, lhs),
            Tok::Lt => Formula::not(Formula::Compare(rhs, lhs)),
            Tok::Gt => Formula::not(Formula::Compare(lhs, rhs)),
            Tok::Eq => {
                Formula::and(Formula::Compare(lhs.clone(), rhs.clone()), Formula::Compare(rhs, lhs))
            }
            _ => return Err(self.err("expected one of `<= < >= > =`")),
        };
        Ok(f)
    }

    fn term_sum(&mut self) -> Result<TermSum, LogicError> {
        let mut terms = vec![self.term(false)?];
        loop {
            match self.peek() {
                Some(Tok::Plus) => {
                    self.bump();
                    terms.push(self.term(false)?);
                }
                Some(Tok::Minus) => {
                    self.bump();
                    terms.push(self.term(true)?);
                }
                _ => break,
            }
        }
        Ok(TermSum { terms })
    }

    fn term(&mut self, negated: bool) -> Result<Term, LogicError> {
        let mut neg = negated;
        while self.peek() == Some(&Tok::Minus) {
            self.bump();
            neg = !neg;
        }
        match self.peek() {
            Some(Tok::Int(_)) => {
                let n = match self.bump() {
                    Some(Tok::Int(n)) => n,
                    _ => unreachable!(),
                };
                let c = i64::try_from(n).map_err(|_| self.err("constant out of range"))?;
                let c = if neg { -c } else { c };
                if self.peek() == Some(&Tok::Star) {
                    self.bump();
                    let (var, phi) = self.count_term()?;
                    Ok(Term::Count { coef: c, var, phi: Box::new(phi) })
                } else {
                    Ok(Term::Const(c))
                }
            }
            Some(Tok::Hash) => {
                let (var, phi) = self.count_term()?;
                Ok(Term::Count { coef: if neg { -1 } else { 1 }, var, phi: Box::new(phi) })
            }
            _ => Err(self.err("expected a term")),
        }
    }

    fn count_term(&mut self) -> Result<(String, Formula), LogicError> {
        self.expect(Tok::Hash, "`#`")?;
        let var = match self.bump() {
            Some(Tok::Ident(x)) => x,
            _ => return Err(self.err("expected a variable after `#`")),
        };
        self.expect(Tok::LParen, "`(` after counting variable")?;
        let phi = self.formula()?;
        self.expect(Tok::RParen, "`)` closing counting term")?;
        Ok((var, phi))
    }
}

/// Parse a formula. Returns the AST and lint warnings (currently: counting
/// variables used outside any binder, which default to position 0).
pub fn parse_formula(text: &str) -> Result<(Formula, Vec<String>), LogicError> {
    let toks = lex(text)?;
    let mut p = Parser { toks, pos: 0, end: text.len() };
    let f = p.formula()?;
    if p.pos != p.toks.len() {
        return Err(p.err("trailing input after formula"));
    }
    let mut warnings = Vec::new();
    let unbound = f.unbound_count_vars();
    if !unbound.is_empty() {
        warnings.push(format!(
            "counting variable(s) used outside any binder (default to position 0): {}",
            unbound.into_iter().collect::<Vec<_>>().join(" ")
        ));
    }
    Ok((f, warnings))
}

// ---------------------------------------------------------------------------
// Pretty-printer
// ---------------------------------------------------------------------------

// Precedence levels used when printing: atoms 4, unary 3, until 2, and 1.
// `|` and `->` never occur in stored ASTs.

fn print_into(f: &Formula, min_level: u8, out: &mut String) {
    if f.is_truth() {
        out.push_str("true");
        return;
    }
    if f.is_falsity() {
        out.push_str("false");
        return;
    }
    if let Formula::Not(inner) = f {
        if let Formula::Exists(body) = inner.as_ref() {
            if let Formula::Not(core) = body.as_ref() {
                // A φ ≡ ¬E¬φ
                let need = min_level > 3;
                if need {
                    out.push('(');
                }
                out.push_str("A ");
                print_into(core, 3, out);
                if need {
                    out.push(')');
                }
                return;
            }
        }
    }
    match f {
        Formula::Atom(p) => out.push_str(p),
        Formula::Not(a) => {
            let need = min_level > 3;
            if need {
                out.push('(');
            }
            out.push('!');
            print_into(a, 3, out);
            if need {
                out.push(')');
            }
        }
        Formula::Next(a) => {
            let need = min_level > 3;
            if need {
                out.push('(');
            }
            out.push_str("X ");
            print_into(a, 3, out);
            if need {
                out.push(')');
            }
        }
        Formula::Exists(a) => {
            let need = min_level > 3;
            if need {
                out.push('(');
            }
            out.push_str("E ");
            print_into(a, 3, out);
            if need {
                out.push(')');
            }
        }
        Formula::Bind(x, a) => {
            let need = min_level > 3;
            if need {
                out.push('(');
            }
            out.push_str(x);
            out.push_str(". ");
            print_into(a, 3, out);
            if need {
                out.push(')');
            }
        }
        Formula::Until(a, b) => {
            let need = min_level > 2;
            if need {
                out.push('(');
            }
            print_into(a, 3, out);
            out.push_str(" U ");
            print_into(b, 2, out);
            if need {
                out.push(')');
            }
        }
        Formula::FreqUntil(a, r, b) => {
            let need = min_level > 2;
            if need {
                out.push('(');
            }
            print_into(a, 3, out);
            out.push_str(&format!(" U{{{}}} ", r));
            print_into(b, 2, out);
            if need {
                out.push(')');
            }
        }
        Formula::And(a, b) => {
            let need = min_level > 1;
            if need {
                out.push('(');
            }
            print_into(a, 1, out);
            out.push_str(" & ");
            print_into(b, 2, out);
            if need {
                out.push(')');
            }
        }
        Formula::Compare(l, r) => {
            print_sum(l, out);
            out.push_str(" <= ");
            print_sum(r, out);
        }
    }
}

fn print_sum(ts: &TermSum, out: &mut String) {
    for (i, t) in ts.terms.iter().enumerate() {
        let (neg, body) = match t {
            Term::Const(c) => (*c < 0, format!("{}", c.unsigned_abs())),
            Term::Count { coef, var, phi } => {
                let mut s = String::new();
                let a = coef.unsigned_abs();
                if a != 1 {
                    s.push_str(&format!("{a} * "));
                }
                s.push_str(&format!("#{var}("));
                let mut body = String::new();
                print_into(phi, 0, &mut body);
                s.push_str(&body);
                s.push(')');
                (*coef < 0, s)
            }
        };
        if i == 0 {
            if neg {
                out.push_str("- ");
            }
        } else if neg {
            out.push_str(" - ");
        } else {
            out.push_str(" + ");
        }
        out.push_str(&body);
    }
}

impl fmt::Display for Formula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut s = String::new();
        print_into(self, 0, &mut s);
        f.write_str(&s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn parse(s: &str) -> Formula {
        parse_formula(s).unwrap().0
    }

    #[test]
    fn parses_phi1_of_example_1() {
        let f = parse("z. A G (q -> (#z(p) <= #z(E X r)))");
        let expected = Formula::bind(
            "z",
            Formula::forall(Formula::globally(Formula::implies(
                Formula::atom("q"),
                Formula::Compare(
                    TermSum::count(1, "z", Formula::atom("p")),
                    TermSum::count(1, "z", Formula::exists(Formula::next(Formula::atom("r")))),
                ),
            ))),
        );
        assert_eq!(f, expected);
    }

    #[test]
    fn parses_phi1_prime() {
        let f = parse("A ((E X r) U{1/2} q)");
        let expected = Formula::forall(Formula::freq_until(
            Formula::exists(Formula::next(Formula::atom("r"))),
            Ratio::new(1, 2).unwrap(),
            Formula::atom("q"),
        ));
        assert_eq!(f, expected);
    }

    #[test]
    fn ratio_side_condition_rejected() {
        assert!(matches!(
            parse_formula("p U{2/1} q"),
            Err(LogicError::BadRatio { num: 2, den: 1 })
        ));
        assert!(matches!(parse_formula("p U{1/0} q"), Err(LogicError::BadRatio { .. })));
    }

    #[test]
    fn unbound_count_var_warns() {
        let (_, warns) = parse_formula("#z(p) <= 3").unwrap();
        assert_eq!(warns.len(), 1);
        assert!(warns[0].contains('z'));
    }

    #[test]
    fn classification_examples() {
        let phi1 = parse("z. A G (q -> (#z(p) <= #z(E X r)))");
        assert_eq!(classify_fragment(&phi1), Fragment::CCtl);
        assert_eq!(classify_fragment(&parse("p U{1/3} q")), Fragment::FLtl);
        assert_eq!(classify_fragment(&parse("p & q")), Fragment::Ltl);
        let phi1p = parse("A ((E X r) U{1/2} q)");
        assert_eq!(classify_fragment(&phi1p), Fragment::FCtl);
        assert_eq!(classify_fragment(&parse("E X p")), Fragment::Ctl);
        assert_eq!(classify_fragment(&parse("X p")), Fragment::Ltl);
        assert_eq!(classify_fragment(&parse("z. #z(p) <= 2")), Fragment::CLtl);
    }

    #[test]
    fn classification_is_monotone_under_exists() {
        let f = parse("p U{1/3} q");
        assert_eq!(classify_fragment(&f), Fragment::FLtl);
        let ef = Formula::exists(f);
        assert!(classify_fragment(&ef) <= Fragment::FCtlStar);
    }

    #[test]
    fn desugar_matches_equation_shape() {
        let f = parse("p U{1/3} q");
        let d = desugar_frequency_until(&f);
        let expected = Formula::or(
            Formula::atom("q"),
            Formula::bind(
                "x0",
                Formula::finally(Formula::and(
                    Formula::next(Formula::atom("q")),
                    Formula::Compare(
                        TermSum::count(1, "x0", Formula::truth()),
                        TermSum::count(3, "x0", Formula::atom("p")),
                    ),
                )),
            ),
        );
        assert_eq!(d, expected);
    }

    #[test]
    fn desugar_is_identity_without_freq() {
        let f = parse("p U q & X !p");
        assert_eq!(desugar_frequency_until(&f), f);
    }

    #[test]
    fn desugar_nested_uses_distinct_fresh_vars() {
        let f = parse("p U{1/2} (p U{1/2} q)");
        let d = desugar_frequency_until(&f);
        let vars = d.variables();
        assert!(vars.contains("x0") && vars.contains("x1"));
        assert!(!uses_freq(&d));
    }

    #[test]
    fn subformulae_ordered() {
        let f = parse("p & q");
        let subs = f.subformulae();
        assert_eq!(subs, vec![Formula::atom("p"), Formula::atom("q"), f.clone()]);

        let exr = parse("E X r");
        let subs = exr.subformulae();
        assert_eq!(subs, vec![Formula::atom("r"), Formula::next(Formula::atom("r")), exr.clone()]);

        let phi1p = parse("A ((E X r) U{1/2} q)");
        let subs = phi1p.subformulae();
        for needle in [
            Formula::atom("r"),
            Formula::next(Formula::atom("r")),
            Formula::exists(Formula::next(Formula::atom("r"))),
            Formula::atom("q"),
            Formula::freq_until(
                Formula::exists(Formula::next(Formula::atom("r"))),
                Ratio::new(1, 2).unwrap(),
                Formula::atom("q"),
            ),
            phi1p.clone(),
        ] {
            assert!(subs.contains(&needle), "missing {needle}");
        }
        // Strict subformulae precede their parents.
        for (i, f1) in subs.iter().enumerate() {
            for f2 in subs[..i].iter() {
                assert!(!f2.subformulae().contains(f1) || f1 == f2);
            }
        }
    }

    fn random_formula(rng: &mut StdRng, depth: usize) -> Formula {
        let props = ["p", "q", "r"];
        let vars = ["u", "v", "w"];
        if depth == 0 {
            return Formula::atom(props[rng.gen_range(0..props.len())]);
        }
        match rng.gen_range(0..10) {
            0 => Formula::atom(props[rng.gen_range(0..props.len())]),
            1 => Formula::and(random_formula(rng, depth - 1), random_formula(rng, depth - 1)),
            2 => Formula::not(random_formula(rng, depth - 1)),
            3 => Formula::next(random_formula(rng, depth - 1)),
            4 => Formula::until(random_formula(rng, depth - 1), random_formula(rng, depth - 1)),
            5 => {
                let den = rng.gen_range(1..=4u64);
                let num = rng.gen_range(0..=den);
                Formula::freq_until(
                    random_formula(rng, depth - 1),
                    Ratio::new(num, den).unwrap(),
                    random_formula(rng, depth - 1),
                )
            }
            6 => Formula::exists(random_formula(rng, depth - 1)),
            7 => Formula::bind(vars[rng.gen_range(0..vars.len())], random_formula(rng, depth - 1)),
            8 => {
                fn mk_sum(rng: &mut StdRng, depth: usize) -> TermSum {
                    let vars = ["u", "v", "w"];
                    let n = rng.gen_range(1..=3);
                    TermSum {
                        terms: (0..n)
                            .map(|_| {
                                if rng.gen_bool(0.4) {
                                    Term::Const(rng.gen_range(-5..=5))
                                } else {
                                    let coef = loop {
                                        let c = rng.gen_range(-3..=3i64);
                                        if c != 0 {
                                            break c;
                                        }
                                    };
                                    Term::Count {
                                        coef,
                                        var: vars[rng.gen_range(0..vars.len())].to_string(),
                                        phi: Box::new(random_formula(rng, depth)),
                                    }
                                }
                            })
                            .collect(),
                    }
                }
                let l = mk_sum(rng, depth.saturating_sub(2));
                let r = mk_sum(rng, depth.saturating_sub(2));
                Formula::Compare(l, r)
            }
            _ => Formula::truth(),
        }
    }

    #[test]
    fn parse_pretty_roundtrip_on_random_formulas() {
        let mut rng = StdRng::seed_from_u64(7);
        for _ in 0..1000 {
            let f = random_formula(&mut rng, 4);
            let printed = f.to_string();
            let reparsed = parse_formula(&printed)
                .unwrap_or_else(|e| panic!("failed to reparse `{printed}`: {e}"))
                .0;
            assert_eq!(reparsed, f, "round trip failed for `{printed}`");
        }
    }

    #[test]
    fn pretty_resugars_forall_and_truth() {
        assert_eq!(parse("A X p").to_string(), "A X p");
        assert_eq!(parse("true").to_string(), "true");
        assert_eq!(parse("false").to_string(), "false");
        assert_eq!(parse("F p").to_string(), "true U p");
    }

    #[test]
    fn formula_size_counts_constant_bits() {
        let small = parse("z. #z(p) <= 1");
        let large = parse("z. #z(p) <= 255");
        assert!(large.size() > small.size());
    }
}
