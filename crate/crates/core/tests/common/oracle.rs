//! Test-side solvers that read only the question text, written independently
//! of the task implementations.

use std::collections::HashMap;
use std::sync::{LazyLock, Mutex};

use rand::seq::SliceRandom;
use rand::Rng;
use regex::Regex;

pub const CONSTRUCTIVE: [&str; 3] = ["game24", "countdown", "eight_queens"];

fn re(pattern: &'static str) -> Regex {
    static CACHE: LazyLock<Mutex<HashMap<&'static str, Regex>>> = LazyLock::new(Default::default);
    let mut cache = CACHE.lock().unwrap();
    cache
        .entry(pattern)
        .or_insert_with(|| Regex::new(pattern).unwrap())
        .clone()
}

fn capture<'a>(pattern: &'static str, text: &'a str) -> Vec<&'a str> {
    let caps = re(pattern)
        .captures(text)
        .unwrap_or_else(|| panic!("{pattern} vs {text}"));
    caps.iter().skip(1).map(|m| m.map_or("", |m| m.as_str())).collect()
}

pub fn ints(text: &str) -> Vec<i128> {
    re(r"-?\d+")
        .find_iter(text)
        .map(|m| m.as_str().parse().unwrap())
        .collect()
}

fn join(v: impl IntoIterator<Item = impl ToString>, sep: &str) -> String {
    v.into_iter().map(|x| x.to_string()).collect::<Vec<_>>().join(sep)
}

/// The answer to an exact-answer task, in the same canonical form the task
/// stores as ground truth. `None` for constructive tasks.
pub fn solve(task: &str, q: &str) -> Option<String> {
    Some(match task {
        "chain_sum" => {
            let expr = capture(r"^Compute (.+)\. Answer", q)[0];
            let mut total: i128 = 0;
            let mut sign = 1;
            for tok in expr.split(' ') {
                match tok {
                    "+" => sign = 1,
                    "-" => sign = -1,
                    n => total += sign * n.parse::<i128>().unwrap(),
                }
            }
            total.to_string()
        }
        "count_bits" => {
            let mut n: u64 = capture(r"the number (\d+)\?", q)[0].parse().unwrap();
            let mut bits = 0;
            while n > 0 {
                bits += n % 2;
                n /= 2;
            }
            bits.to_string()
        }
        "gcd" => {
            let nums = ints(capture(r"divisor of (.+)\. Answer", q)[0]);
            let mut g = 0i128;
            for n in nums {
                let (mut a, mut b) = (g, n.abs());
                while b != 0 {
                    (a, b) = (b, a % b);
                }
                g = a;
            }
            g.to_string()
        }
        "number_sorting" => {
            let c = capture(r"in (ascending|descending) order: (.+)\. Answer", q);
            let mut nums = ints(c[1]);
            nums.sort();
            if c[0] == "descending" {
                nums.reverse();
            }
            join(nums, ",")
        }
        "object_counting" => {
            let c = capture(r"^I have (.+)\. How many (.+) do I have\?", q);
            let mut total = 0;
            for item in c[0].split(", ").flat_map(|s| s.split(" and ")) {
                let (count, noun) = item.split_once(' ').unwrap();
                let count = match count {
                    "a" | "an" => 1,
                    w => NUMBER_WORDS.iter().position(|x| *x == w).expect("number word"),
                };
                if category_of(noun) == c[1] {
                    total += count;
                }
            }
            total.to_string()
        }
        "letters" => {
            let c = capture(r#"letter "(.)" appear in the string "([a-z]+)""#, q);
            let hits: Vec<usize> = c[1]
                .chars()
                .enumerate()
                .filter(|(_, ch)| ch.to_string() == c[0])
                .map(|(i, _)| i + 1)
                .collect();
            std::iter::once(hits.len())
                .chain(hits)
                .map(|x| x.to_string())
                .collect::<Vec<_>>()
                .join(",")
        }
        "spell_backward" => capture(r#"word "(.+)" backward"#, q)[0].chars().rev().collect(),
        "matrix_rotation" => {
            let c = capture(r"(?s)below (\d+) degrees clockwise\.\n\n(.+?)\n\nAnswer", q);
            let mut m: Vec<Vec<String>> = c[1].lines().map(|l| l.split(' ').map(String::from).collect()).collect();
            for _ in 0..c[0].parse::<usize>().unwrap() / 90 {
                // clockwise quarter turn: transpose, then mirror each row
                let mut t: Vec<Vec<String>> = (0..m[0].len())
                    .map(|j| m.iter().map(|row| row[j].clone()).collect())
                    .collect();
                for row in &mut t {
                    row.reverse();
                }
                m = t;
            }
            join(m.iter().map(|r| r.join(",")), ";")
        }
        "string_insertion" => {
            let input = capture(r"rules to the string ([A-E]+):", q)[0];
            let rules: Vec<(String, String)> = re(r"if ([A-E]+) appears, insert ([A-E]) right after it")
                .captures_iter(q)
                .map(|c| (c[1].to_string(), c[2].to_string()))
                .collect();
            let mut out = String::new();
            for end in 1..=input.len() {
                out.push_str(&input[end - 1..end]);
                for (pat, ins) in &rules {
                    if input[..end].ends_with(pat.as_str()) {
                        out.push_str(ins);
                    }
                }
            }
            out
        }
        _ => return None,
    })
}

const NUMBER_WORDS: [&str; 11] = [
    "zero", "one", "two", "three", "four", "five", "six", "seven", "eight", "nine", "ten",
];

fn category_of(noun: &str) -> &'static str {
    const FRUITS: &[&str] = &[
        "apple",
        "banana",
        "orange",
        "peach",
        "plum",
        "grape",
        "strawberr",
        "nectarine",
        "raspberr",
        "blackberr",
    ];
    const VEGETABLES: &[&str] = &[
        "carrot", "potato", "onion", "yam", "cabbage", "celery", "broccoli", "cucumber",
    ];
    const ANIMALS: &[&str] = &[
        "cat", "dog", "rabbit", "goat", "cow", "pig", "chicken", "duck", "snail", "mouse", "mice", "donkey", "frog",
    ];
    const INSTRUMENTS: &[&str] = &[
        "piano",
        "flute",
        "trumpet",
        "violin",
        "drum",
        "clarinet",
        "trombone",
        "accordion",
    ];
    for (cat, stems) in [
        ("fruits", FRUITS),
        ("vegetables", VEGETABLES),
        ("animals", ANIMALS),
        ("musical instruments", INSTRUMENTS),
    ] {
        if stems.iter().any(|s| noun.starts_with(s) || noun.ends_with(s)) {
            return cat;
        }
    }
    panic!("unknown object {noun}");
}

/// Whether two canonical answers of an exact-answer task denote the same value.
pub fn same(task: &str, a: &str, b: &str) -> bool {
    match task {
        "spell_backward" | "string_insertion" => a.to_lowercase() == b.to_lowercase(),
        "matrix_rotation" => a == b,
        _ => ints(a) == ints(b) && !a.is_empty() && !b.is_empty(),
    }
}

/// Independent validity check for constructive answers in canonical form.
pub fn valid(task: &str, q: &str, answer: &str) -> bool {
    match task {
        "game24" | "countdown" => {
            let c = capture(r"numbers (.+) exactly once.+equals (\d+)\. Answer", q);
            let mut pool = ints(c[0]);
            let target: i128 = c[1].parse().unwrap();
            let Some((value, mut used)) = Rational::eval(answer) else {
                return false;
            };
            pool.sort();
            used.sort();
            pool == used && value == Rational(target, 1)
        }
        "eight_queens" => {
            let board: Vec<Vec<char>> = q
                .split("\n\n")
                .nth(1)
                .unwrap()
                .lines()
                .map(|l| l.split(' ').map(|c| c.chars().next().unwrap()).collect())
                .collect();
            let n = board.len();
            let Ok(cols) = answer
                .split(',')
                .map(str::parse::<usize>)
                .collect::<Result<Vec<_>, _>>()
            else {
                return false;
            };
            if cols.len() != n || cols.iter().any(|&c| c >= n) {
                return false;
            }
            for (r, row) in board.iter().enumerate() {
                if row[cols[r]] == 'X' {
                    return false;
                }
                if let Some(qc) = row.iter().position(|&c| c == 'Q') {
                    if qc != cols[r] {
                        return false;
                    }
                }
            }
            for i in 0..n {
                for j in i + 1..n {
                    if cols[i] == cols[j] || cols[i].abs_diff(cols[j]) == j - i {
                        return false;
                    }
                }
            }
            true
        }
        other => panic!("{other} is not constructive"),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Rational(i128, i128);

impl Rational {
    fn norm(n: i128, d: i128) -> Option<Self> {
        if d == 0 {
            return None;
        }
        let (mut a, mut b) = (n.abs(), d.abs());
        while b != 0 {
            (a, b) = (b, a % b);
        }
        let g = a.max(1) * d.signum();
        Some(Rational(n / g, d / g))
    }

    /// Evaluates `+ - * / ( )` over non-negative integer literals.
    fn eval(s: &str) -> Option<(Rational, Vec<i128>)> {
        let toks: Vec<char> = s.chars().collect();
        let mut pos = 0;
        let mut lits = Vec::new();
        let v = Self::sum(&toks, &mut pos, &mut lits)?;
        (pos == toks.len()).then_some((v, lits))
    }

    fn sum(t: &[char], pos: &mut usize, lits: &mut Vec<i128>) -> Option<Rational> {
        let mut acc = Self::product(t, pos, lits)?;
        while let Some(&op @ ('+' | '-')) = t.get(*pos) {
            *pos += 1;
            let r = Self::product(t, pos, lits)?;
            let s = if op == '+' { 1 } else { -1 };
            acc = Self::norm(acc.0 * r.1 + s * r.0 * acc.1, acc.1 * r.1)?;
        }
        Some(acc)
    }

    fn product(t: &[char], pos: &mut usize, lits: &mut Vec<i128>) -> Option<Rational> {
        let mut acc = Self::atom(t, pos, lits)?;
        while let Some(&op @ ('*' | '/')) = t.get(*pos) {
            *pos += 1;
            let r = Self::atom(t, pos, lits)?;
            acc = if op == '*' {
                Self::norm(acc.0 * r.0, acc.1 * r.1)?
            } else {
                Self::norm(acc.0 * r.1, acc.1 * r.0)?
            };
        }
        Some(acc)
    }

    fn atom(t: &[char], pos: &mut usize, lits: &mut Vec<i128>) -> Option<Rational> {
        if t.get(*pos) == Some(&'(') {
            *pos += 1;
            let v = Self::sum(t, pos, lits)?;
            (t.get(*pos) == Some(&')')).then_some(())?;
            *pos += 1;
            return Some(v);
        }
        let start = *pos;
        while t.get(*pos).is_some_and(char::is_ascii_digit) {
            *pos += 1;
        }
        let n: i128 = t[start..*pos].iter().collect::<String>().parse().ok()?;
        lits.push(n);
        Some(Rational(n, 1))
    }
}

/// One off-by-one, one element swap and one digit (or letter) change of a
/// canonical answer. Mutations that happen to leave the text unchanged are
/// dropped.
pub fn mutations(answer: &str, rng: &mut impl Rng) -> Vec<String> {
    let mut out = Vec::new();

    let digits_re = re(r"\d+");
    let nums: Vec<_> = digits_re.find_iter(answer).collect();
    if let Some(m) = nums.choose(rng) {
        let n: i128 = m.as_str().parse().unwrap();
        let bumped = if n == 0 || rng.gen_bool(0.5) { n + 1 } else { n - 1 };
        out.push(format!("{}{}{}", &answer[..m.start()], bumped, &answer[m.end()..]));
    } else if let Some((i, c)) = answer.char_indices().collect::<Vec<_>>().choose(rng).copied() {
        let next = if c == 'z' || c == 'Z' || c == 'E' {
            (c as u8 - 1) as char
        } else {
            (c as u8 + 1) as char
        };
        out.push(format!("{}{next}{}", &answer[..i], &answer[i + 1..]));
    }

    // Swap two list elements, or two characters of a bare string.
    let sep = if answer.contains(';') { ';' } else { ',' };
    let mut parts: Vec<String> = if answer.contains(sep) {
        answer.split(sep).map(String::from).collect()
    } else if nums.len() >= 2 {
        nums.iter().map(|m| m.as_str().to_string()).collect()
    } else {
        answer.chars().map(String::from).collect()
    };
    if parts.len() >= 2 {
        let i = rng.gen_range(0..parts.len());
        let j = (i + rng.gen_range(1..parts.len())) % parts.len();
        if answer.contains(sep) || nums.len() < 2 {
            parts.swap(i, j);
            let joiner = if answer.contains(sep) {
                sep.to_string()
            } else {
                String::new()
            };
            out.push(parts.join(&joiner));
        } else {
            // Expression: swap two number literals in place.
            let (a, b) = (nums[i.min(j)], nums[i.max(j)]);
            out.push(format!(
                "{}{}{}{}{}",
                &answer[..a.start()],
                b.as_str(),
                &answer[a.end()..b.start()],
                a.as_str(),
                &answer[b.end()..]
            ));
        }
    }

    let digits: Vec<usize> = answer
        .char_indices()
        .filter(|(_, c)| c.is_ascii_digit())
        .map(|(i, _)| i)
        .collect();
    if let Some(&i) = digits.choose(rng) {
        let old = answer.as_bytes()[i];
        let new = loop {
            let d = b'0' + rng.gen_range(0..10u8);
            if d != old {
                break d;
            }
        };
        out.push(format!("{}{}{}", &answer[..i], new as char, &answer[i + 1..]));
    } else {
        let letters: Vec<usize> = answer
            .char_indices()
            .filter(|(_, c)| c.is_ascii_alphabetic())
            .map(|(i, _)| i)
            .collect();
        if let Some(&i) = letters.choose(rng) {
            let old = answer.as_bytes()[i];
            let base = if old.is_ascii_uppercase() { b'A' } else { b'a' };
            let span = if answer.bytes().all(|b| b"ABCDE".contains(&b)) {
                5
            } else {
                26
            };
            let new = loop {
                let c = base + rng.gen_range(0..span);
                if c != old {
                    break c;
                }
            };
            out.push(format!("{}{}{}", &answer[..i], new as char, &answer[i + 1..]));
        }
    }

    out.retain(|m| m != answer);
    out
}
