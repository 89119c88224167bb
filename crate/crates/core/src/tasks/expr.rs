//! Integer arithmetic expressions for the constructive arithmetic puzzles.
//!
//! Grammar (no unary operators, integer literals only):
//!
//! ```text
//! expr   := term (('+' | '-') term)*
//! term   := factor (('*' | '/') factor)*
//! factor := integer | '(' expr ')'
//! ```

use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Op {
    Add,
    Sub,
    Mul,
    Div,
}

impl Op {
    pub const ALL: [Op; 4] = [Op::Add, Op::Sub, Op::Mul, Op::Div];

    pub fn symbol(self) -> char {
        match self {
            Op::Add => '+',
            Op::Sub => '-',
            Op::Mul => '*',
            Op::Div => '/',
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Expr {
    Num(i64),
    Bin(Op, Box<Expr>, Box<Expr>),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ExprError {
    #[error("unexpected character {0:?} at offset {1}")]
    UnexpectedChar(char, usize),
    #[error("unexpected end of expression")]
    UnexpectedEnd,
    #[error("trailing input at offset {0}")]
    Trailing(usize),
    #[error("integer literal out of range")]
    Overflow,
    #[error("division by zero")]
    DivisionByZero,
}

pub fn parse(input: &str) -> Result<Expr, ExprError> {
    let mut p = Parser {
        chars: input.char_indices().filter(|(_, c)| !c.is_whitespace()).collect(),
        pos: 0,
    };
    let e = p.expr()?;
    match p.chars.get(p.pos) {
        None => Ok(e),
        Some(&(off, _)) => Err(ExprError::Trailing(off)),
    }
}

struct Parser {
    chars: Vec<(usize, char)>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> Option<char> {
        self.chars.get(self.pos).map(|&(_, c)| c)
    }

    fn expr(&mut self) -> Result<Expr, ExprError> {
        let mut lhs = self.term()?;
        while let Some(c @ ('+' | '-')) = self.peek() {
            self.pos += 1;
            let rhs = self.term()?;
            let op = if c == '+' { Op::Add } else { Op::Sub };
            lhs = Expr::Bin(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn term(&mut self) -> Result<Expr, ExprError> {
        let mut lhs = self.factor()?;
        while let Some(c @ ('*' | '/')) = self.peek() {
            self.pos += 1;
            let rhs = self.factor()?;
            let op = if c == '*' { Op::Mul } else { Op::Div };
            lhs = Expr::Bin(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn factor(&mut self) -> Result<Expr, ExprError> {
        let &(off, c) = self.chars.get(self.pos).ok_or(ExprError::UnexpectedEnd)?;
        if c == '(' {
            self.pos += 1;
            let inner = self.expr()?;
            match self.chars.get(self.pos) {
                Some(&(_, ')')) => {
                    self.pos += 1;
                    Ok(inner)
                }
                Some(&(off, c)) => Err(ExprError::UnexpectedChar(c, off)),
                None => Err(ExprError::UnexpectedEnd),
            }
        } else if c.is_ascii_digit() {
            let mut value: i64 = 0;
            let mut next_off = off;
            // Digits separated by whitespace are two literals, not one.
            while let Some(&(o, ch)) = self.chars.get(self.pos) {
                let Some(d) = ch.to_digit(10).filter(|_| o == next_off) else {
                    break;
                };
                value = value
                    .checked_mul(10)
                    .and_then(|v| v.checked_add(i64::from(d)))
                    .ok_or(ExprError::Overflow)?;
                next_off = o + ch.len_utf8();
                self.pos += 1;
            }
            Ok(Expr::Num(value))
        } else {
            Err(ExprError::UnexpectedChar(c, off))
        }
    }
}

impl Expr {
    pub fn eval(&self) -> Result<f64, ExprError> {
        match self {
            Expr::Num(n) => Ok(*n as f64),
            Expr::Bin(op, a, b) => {
                let (a, b) = (a.eval()?, b.eval()?);
                match op {
                    Op::Add => Ok(a + b),
                    Op::Sub => Ok(a - b),
                    Op::Mul => Ok(a * b),
                    Op::Div if b == 0.0 => Err(ExprError::DivisionByZero),
                    Op::Div => Ok(a / b),
                }
            }
        }
    }

    /// Integer literals in left-to-right order.
    pub fn literals(&self) -> Vec<i64> {
        let mut out = Vec::new();
        self.collect_literals(&mut out);
        out
    }

    fn collect_literals(&self, out: &mut Vec<i64>) {
        match self {
            Expr::Num(n) => out.push(*n),
            Expr::Bin(_, a, b) => {
                a.collect_literals(out);
                b.collect_literals(out);
            }
        }
    }
}

/// Outcome of checking a candidate expression against a number pool.
#[derive(Debug, Clone, PartialEq)]
pub enum ExpressionCheck {
    Correct,
    Parse(ExprError),
    NumbersMismatch { used: Vec<i64> },
    Eval(ExprError),
    WrongValue(f64),
}

/// Checks that `expression` uses exactly the multiset `numbers` and evaluates
/// to `target` within 1e-6.
pub fn check_expression(expression: &str, numbers: &[i64], target: i64) -> ExpressionCheck {
    let expr = match parse(expression) {
        Ok(e) => e,
        Err(e) => return ExpressionCheck::Parse(e),
    };
    let mut used = expr.literals();
    let mut want = numbers.to_vec();
    used.sort_unstable();
    want.sort_unstable();
    if used != want {
        return ExpressionCheck::NumbersMismatch { used };
    }
    match expr.eval() {
        Err(e) => ExpressionCheck::Eval(e),
        Ok(v) if (v - target as f64).abs() <= 1e-6 => ExpressionCheck::Correct,
        Ok(v) => ExpressionCheck::WrongValue(v),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Ratio {
    num: i64,
    den: i64,
}

impl Ratio {
    fn new(num: i64, den: i64) -> Option<Self> {
        if den == 0 {
            return None;
        }
        let g = gcd(num.unsigned_abs(), den.unsigned_abs()).max(1) as i64;
        let sign = if den < 0 { -1 } else { 1 };
        Some(Self {
            num: sign * num / g,
            den: sign * den / g,
        })
    }

    fn apply(self, op: Op, rhs: Ratio) -> Option<Ratio> {
        let (a, b, c, d) = (self.num, self.den, rhs.num, rhs.den);
        match op {
            Op::Add => Ratio::new(a.checked_mul(d)?.checked_add(c.checked_mul(b)?)?, b.checked_mul(d)?),
            Op::Sub => Ratio::new(a.checked_mul(d)?.checked_sub(c.checked_mul(b)?)?, b.checked_mul(d)?),
            Op::Mul => Ratio::new(a.checked_mul(c)?, b.checked_mul(d)?),
            Op::Div => Ratio::new(a.checked_mul(d)?, b.checked_mul(c)?),
        }
    }
}

pub(crate) fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// Exhaustive search in exact rational arithmetic for an expression that uses
/// every number once and equals `target`. Returns the first one found.
pub fn solve(numbers: &[i64], target: i64) -> Option<String> {
    let items: Vec<(Ratio, String)> = numbers
        .iter()
        .map(|&n| (Ratio { num: n, den: 1 }, n.to_string()))
        .collect();
    search(items, Ratio { num: target, den: 1 })
}

fn search(items: Vec<(Ratio, String)>, target: Ratio) -> Option<String> {
    if items.len() == 1 {
        return (items[0].0 == target).then(|| items[0].1.clone());
    }
    for i in 0..items.len() {
        for j in 0..items.len() {
            if i == j {
                continue;
            }
            let rest: Vec<(Ratio, String)> = items
                .iter()
                .enumerate()
                .filter(|&(k, _)| k != i && k != j)
                .map(|(_, it)| it.clone())
                .collect();
            for op in Op::ALL {
                // Commutative ops only need one orientation.
                if matches!(op, Op::Add | Op::Mul) && i > j {
                    continue;
                }
                let Some(value) = items[i].0.apply(op, items[j].0) else {
                    continue;
                };
                let mut next = rest.clone();
                next.push((value, format!("({}{}{})", items[i].1, op.symbol(), items[j].1)));
                if let Some(found) = search(next, target) {
                    return Some(found);
                }
            }
        }
    }
    None
}

/// Removes the redundant outer parentheses that [`solve`] produces.
pub fn strip_outer_parens(expr: &str) -> &str {
    let b = expr.as_bytes();
    if b.len() < 2 || b[0] != b'(' || b[b.len() - 1] != b')' {
        return expr;
    }
    let mut depth = 0i32;
    for (i, &c) in b.iter().enumerate() {
        match c {
            b'(' => depth += 1,
            b')' => {
                depth -= 1;
                if depth == 0 && i != b.len() - 1 {
                    return expr;
                }
            }
            _ => {}
        }
    }
    &expr[1..expr.len() - 1]
}
